//! Physical constants, channel draws and the named parameter presets.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    los_channel_sin, rician_channel, ArrayGeometry, Case, ChannelSet, ExtendedTarget, PointTarget, Target,
};
use crate::error::{Error, Result};
use crate::linalg::{cr, C64};
use crate::metrics::System;

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Parse a power such as `"30 dBm"`, `"1 W"`, `"0.5mW"`. A bare number is
/// rejected so that the unit is always explicit.
pub fn parse_power(text: &str) -> Result<f64> {
    let t = text.trim();
    let split = t
        .find(|ch: char| ch.is_ascii_alphabetic() && ch != 'e' && ch != 'E')
        .ok_or_else(|| Error::InvalidInput(format!("power '{t}' needs a unit (dBm, W or mW)")))?;
    let (num, unit) = t.split_at(split);
    let v: f64 = num.trim().parse().map_err(|_| Error::InvalidInput(format!("bad number in power '{t}'")))?;
    match unit.trim() {
        "dBm" | "dbm" => Ok(dbm_to_watt(v)),
        "W" | "w" => Ok(v),
        "mW" | "mw" => Ok(v * 1e-3),
        other => Err(Error::InvalidInput(format!("unknown power unit '{other}'"))),
    }
}

/// Where a receiver sits relative to the array broadside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Direction {
    /// Radians.
    Angle(f64),
    /// The spatial frequency `sin θ`, which may lie outside `[−1, 1]`.
    Sine(f64),
}

impl Direction {
    pub fn sine(&self) -> f64 {
        match *self {
            Direction::Angle(t) => t.sin(),
            Direction::Sine(u) => u,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub n: usize,
    pub alpha: f64,
    pub direction: Direction,
    /// `None` for a pure LoS channel.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetConfig {
    pub case: Case,
    pub alpha: C64,
    pub theta: f64,
    /// Scatterers for the extended response matrix.
    pub scatterers: Vec<(C64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub m: usize,
    pub n_s: usize,
    pub power: f64,
    pub sigma_s_sq: f64,
    pub sigma_id_sq: f64,
    pub block_len: f64,
    pub zeta: f64,
    pub target: TargetConfig,
    pub id: LinkConfig,
    pub eh: LinkConfig,
    pub seed: u64,
}

impl ScenarioConfig {
    /// The common constants: `M = 6`, `N_S = 16`, `P = 30 dBm`,
    /// `σ² = −90 dBm`, `α = 1e-6`, `L = 256`, `ζ = 0.5`, with
    /// `α_ID = 1e-4` and `α_EH = 1e-2` LoS links.
    pub fn defaults() -> Self {
        Self {
            m: 6,
            n_s: 16,
            power: dbm_to_watt(30.0),
            sigma_s_sq: dbm_to_watt(-90.0),
            sigma_id_sq: dbm_to_watt(-90.0),
            block_len: 256.0,
            zeta: 0.5,
            target: TargetConfig {
                case: Case::Point,
                alpha: cr(1e-6),
                theta: (1.0f64 / 6.0).asin(),
                scatterers: default_scatterers(),
            },
            id: LinkConfig { n: 1, alpha: 1e-4, direction: Direction::Angle(PI / 6.0), kappa: None },
            eh: LinkConfig { n: 1, alpha: 1e-2, direction: Direction::Angle(2.0 * PI / 3.0), kappa: None },
            seed: 0,
        }
    }

    pub fn with_case(mut self, case: Case) -> Self {
        self.target.case = case;
        self
    }

    /// Draw channels (ID first, then EH, from one seeded stream) and assemble
    /// the solver input.
    pub fn build(&self) -> Result<System> {
        let geometry = ArrayGeometry::new(self.m, self.n_s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut link = |l: &LinkConfig| -> Result<_> {
            if l.n == 0 {
                return Err(Error::InvalidScenario("receiver needs at least one antenna".into()));
            }
            Ok(match l.kappa {
                None => los_channel_sin(l.alpha, l.direction.sine(), l.n, self.m),
                Some(k) if k >= 0.0 => rician_channel(l.alpha, l.direction.sine(), k, l.n, self.m, &mut rng),
                Some(_) => return Err(Error::InvalidScenario("Rician factor must be non-negative".into())),
            })
        };
        let h_id = link(&self.id)?;
        let h_eh = link(&self.eh)?;
        let target = match self.target.case {
            Case::Point => Target::Point(PointTarget { alpha: self.target.alpha, theta: self.target.theta }),
            Case::Extended => {
                if self.target.scatterers.is_empty() {
                    return Err(Error::InvalidScenario("extended target needs at least one scatterer".into()));
                }
                Target::Extended(ExtendedTarget { scatterers: self.target.scatterers.clone() })
            }
        };
        System::new(
            geometry,
            ChannelSet::new(h_id, h_eh, target)?,
            self.power,
            self.sigma_s_sq,
            self.sigma_id_sq,
            self.block_len,
            self.zeta,
        )
    }
}

fn default_scatterers() -> Vec<(C64, f64)> {
    vec![(cr(1e-6), -PI / 6.0), (cr(0.8e-6), 0.0), (cr(0.6e-6), PI / 4.0)]
}

/// A threshold given either absolutely or relative to a vertex of the region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    Absolute(f64),
    /// Fraction of `E_max`.
    OfEnergyMax(f64),
    /// Multiple of `CRB_min`.
    OfCrbMin(f64),
}

impl ThresholdSpec {
    pub fn resolve(&self, system: &System) -> f64 {
        match *self {
            ThresholdSpec::Absolute(v) => v,
            ThresholdSpec::OfEnergyMax(f) => f * system.energy_max(),
            ThresholdSpec::OfCrbMin(f) => f * system.crb_min(),
        }
    }

    /// Accepts `"1e-3"`, `"0.5*emax"` or `"50*crbmin"`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim().to_ascii_lowercase();
        let bad = || Error::InvalidInput(format!("bad threshold '{text}'"));
        if let Some(f) = t.strip_suffix("*emax") {
            return Ok(ThresholdSpec::OfEnergyMax(f.trim().parse().map_err(|_| bad())?));
        }
        if let Some(f) = t.strip_suffix("*crbmin") {
            return Ok(ThresholdSpec::OfCrbMin(f.trim().parse().map_err(|_| bad())?));
        }
        if t == "inf" {
            return Ok(ThresholdSpec::Absolute(f64::INFINITY));
        }
        Ok(ThresholdSpec::Absolute(t.parse().map_err(|_| bad())?))
    }
}

/// A named scenario plus the thresholds its figure uses.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    pub scenario: ScenarioConfig,
    pub gamma_eh: Option<ThresholdSpec>,
    pub gamma_s: Option<ThresholdSpec>,
    /// Sweep values of the free threshold, for the rate-versus-threshold presets.
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// `Γ_EH` as fractions of `E_max`.
    EnergyFractions(Vec<f64>),
    /// `Γ_S` as multiples of `CRB_min`.
    CrbMultiples(Vec<f64>),
}

pub const PRESET_NAMES: &[&str] = &[
    "paper-fig3",
    "paper-fig6",
    "paper-fig6-gamma0",
    "paper-fig6-gamma1",
    "paper-fig7a",
    "paper-fig7b",
    "paper-fig8",
    "paper-fig9",
];

/// Fig. 6 style LoS links with `sin θ_ID = 2γ/M`, `sin θ_EH = 4γ/M`, `θ = 0`.
pub fn correlated_los(gamma: f64) -> ScenarioConfig {
    let mut s = ScenarioConfig::defaults();
    let m = s.m as f64;
    s.target.theta = 0.0;
    s.id = LinkConfig { n: 1, alpha: 1e-4, direction: Direction::Sine(2.0 * gamma / m), kappa: None };
    s.eh = LinkConfig { n: 1, alpha: 1e-2, direction: Direction::Sine(4.0 * gamma / m), kappa: None };
    s
}

fn rician_links(s: &mut ScenarioConfig) {
    s.id = LinkConfig { n: 2, alpha: 1e-4, direction: Direction::Angle(PI / 6.0), kappa: Some(20.0) };
    s.eh = LinkConfig { n: 2, alpha: 1e-2, direction: Direction::Angle(2.0 * PI / 3.0), kappa: Some(20.0) };
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

pub fn preset(name: &str) -> Result<Preset> {
    let base = |scenario| Preset { name: "", scenario, gamma_eh: None, gamma_s: None, sweep: None };
    let mut p = match name {
        "paper-fig3" => {
            let mut s = ScenarioConfig::defaults();
            s.id = LinkConfig { n: 1, alpha: 1e-3, direction: Direction::Sine(5.0 / 6.0), kappa: None };
            s.eh = LinkConfig { n: 2, alpha: 1e-3, direction: Direction::Sine(1.5), kappa: None };
            base(s)
        }
        "paper-fig6" => base(correlated_los(0.6)),
        "paper-fig6-gamma0" => base(correlated_los(0.0)),
        "paper-fig6-gamma1" => base(correlated_los(1.0)),
        "paper-fig7a" | "paper-fig7b" => {
            let mut s = ScenarioConfig::defaults().with_case(Case::Extended);
            s.power = dbm_to_watt(40.0);
            if name == "paper-fig7b" {
                s.m = 2;
            }
            rician_links(&mut s);
            base(s)
        }
        "paper-fig8" => {
            let mut s = ScenarioConfig::defaults();
            rician_links(&mut s);
            let mut p = base(s);
            p.gamma_s = Some(ThresholdSpec::OfCrbMin(50.0));
            p.sweep = Some(Sweep::EnergyFractions((0..10).map(|k| 0.09 * k as f64).collect()));
            p
        }
        "paper-fig9" => {
            let mut s = ScenarioConfig::defaults();
            rician_links(&mut s);
            let mut p = base(s);
            p.gamma_eh = Some(ThresholdSpec::OfEnergyMax(0.05));
            p.sweep = Some(Sweep::CrbMultiples(geometric(2.0, 1e3, 10)));
            p
        }
        other => return Err(Error::InvalidInput(format!("unknown preset '{other}'"))),
    };
    p.name = PRESET_NAMES.iter().find(|n| **n == name).copied().expect("listed");
    Ok(p)
}
