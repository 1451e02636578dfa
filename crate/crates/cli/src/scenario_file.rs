//! TOML scenario files.
//!
//! A file may name a `preset` to start from and then override any field.
//! Angles need an explicit `angle_unit` ("deg" or "rad"); powers carry a unit
//! suffix ("30 dBm", "1 W", "0.5 mW").
//!
//! ```toml
//! preset = "paper-fig8"
//! seed = 3
//! angle_unit = "deg"
//! power = "30 dBm"
//!
//! [target]
//! case = "point"
//! theta = 9.594
//!
//! [id]
//! n = 2
//! theta = 30.0
//! kappa = 20.0
//!
//! [thresholds]
//! gamma_eh = "0.5*emax"
//! gamma_s = "50*crbmin"
//! ```

use std::ops::Range;

use anyhow::{anyhow, bail, Context, Result};
use creopt_core::linalg::C64;
use creopt_core::scenario::{self, parse_power, Direction, LinkConfig, Preset, ScenarioConfig, Sweep, ThresholdSpec};
use serde::Deserialize;
use toml::Spanned;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AngleUnit {
    Deg,
    Rad,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Complex {
    Real(f64),
    Pair([f64; 2]),
}

impl Complex {
    fn value(&self) -> C64 {
        match *self {
            Complex::Real(re) => C64::new(re, 0.0),
            Complex::Pair([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum NumOrText {
    Num(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRoot {
    preset: Option<Spanned<String>>,
    seed: Option<u64>,
    angle_unit: Option<AngleUnit>,
    m: Option<usize>,
    n_s: Option<usize>,
    power: Option<Spanned<String>>,
    sigma_s_sq: Option<Spanned<String>>,
    sigma_id_sq: Option<Spanned<String>>,
    block_len: Option<f64>,
    zeta: Option<f64>,
    target: Option<TargetSection>,
    id: Option<LinkSection>,
    eh: Option<LinkSection>,
    thresholds: Option<ThresholdSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSection {
    case: Option<Spanned<String>>,
    alpha: Option<Complex>,
    theta: Option<Spanned<f64>>,
    sin_theta: Option<f64>,
    scatterers: Option<Vec<ScattererEntry>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScattererEntry {
    alpha: Complex,
    theta: Spanned<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkSection {
    n: Option<usize>,
    alpha: Option<f64>,
    theta: Option<Spanned<f64>>,
    sin_theta: Option<f64>,
    kappa: Option<f64>,
    /// Drop a Rician factor inherited from a preset.
    los: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdSection {
    gamma_eh: Option<Spanned<NumOrText>>,
    gamma_s: Option<Spanned<NumOrText>>,
}

/// A fully resolved scenario with the thresholds and sweep that came with it.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub config: ScenarioConfig,
    pub gamma_eh: Option<ThresholdSpec>,
    pub gamma_s: Option<ThresholdSpec>,
    pub sweep: Option<Sweep>,
}

impl LoadedScenario {
    pub fn defaults() -> Self {
        Self { config: ScenarioConfig::defaults(), gamma_eh: None, gamma_s: None, sweep: None }
    }

    pub fn from_preset(p: Preset) -> Self {
        Self { config: p.scenario, gamma_eh: p.gamma_eh, gamma_s: p.gamma_s, sweep: p.sweep }
    }
}

pub fn load_preset(name: &str) -> Result<LoadedScenario> {
    scenario::preset(name)
        .map(LoadedScenario::from_preset)
        .map_err(|_| anyhow!("unknown preset '{name}' (available: {})", scenario::PRESET_NAMES.join(", ")))
}

/// 1-based line of a byte offset.
fn line_of(src: &str, span: Range<usize>) -> usize {
    src[..span.start.min(src.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    src: &'a str,
    unit: Option<AngleUnit>,
}

impl Ctx<'_> {
    fn at<T>(&self, key: &str, span: Range<usize>, res: creopt_core::Result<T>) -> Result<T> {
        res.map_err(|e| anyhow!("line {}, key '{key}': {e}", line_of(self.src, span)))
    }

    fn power(&self, key: &str, v: &Spanned<String>) -> Result<f64> {
        self.at(key, v.span(), parse_power(v.get_ref()))
    }

    fn angle(&self, key: &str, v: &Spanned<f64>) -> Result<f64> {
        match self.unit {
            Some(AngleUnit::Deg) => Ok(v.get_ref().to_radians()),
            Some(AngleUnit::Rad) => Ok(*v.get_ref()),
            None => bail!("line {}, key '{key}': angles need an explicit angle_unit (\"deg\" or \"rad\")", line_of(self.src, v.span())),
        }
    }

    fn threshold(&self, key: &str, v: &Spanned<NumOrText>, power_units: bool) -> Result<ThresholdSpec> {
        match v.get_ref() {
            NumOrText::Num(x) => Ok(ThresholdSpec::Absolute(*x)),
            NumOrText::Text(t) => self.at(key, v.span(), parse_threshold(t, power_units)),
        }
    }
}

/// A threshold expression, optionally with a power unit for `Γ_EH`.
pub fn parse_threshold(text: &str, power_units: bool) -> creopt_core::Result<ThresholdSpec> {
    match ThresholdSpec::parse(text) {
        Ok(t) => Ok(t),
        Err(e) if power_units => parse_power(text).map(ThresholdSpec::Absolute).map_err(|_| e),
        Err(e) => Err(e),
    }
}

fn apply_link(ctx: &Ctx, name: &str, link: &mut LinkConfig, sec: &LinkSection) -> Result<()> {
    if let Some(n) = sec.n {
        link.n = n;
    }
    if let Some(a) = sec.alpha {
        link.alpha = a;
    }
    match (&sec.theta, sec.sin_theta) {
        (Some(_), Some(_)) => bail!("[{name}]: give either theta or sin_theta, not both"),
        (Some(t), None) => link.direction = Direction::Angle(ctx.angle(&format!("{name}.theta"), t)?),
        (None, Some(u)) => link.direction = Direction::Sine(u),
        (None, None) => {}
    }
    if sec.los == Some(true) {
        if sec.kappa.is_some() {
            bail!("[{name}]: los = true conflicts with kappa");
        }
        link.kappa = None;
    } else if let Some(k) = sec.kappa {
        link.kappa = Some(k);
    }
    Ok(())
}

/// Parse a scenario file. `base` is used when the file names no preset.
pub fn parse_scenario(src: &str, base: LoadedScenario) -> Result<LoadedScenario> {
    let root: FileRoot = toml::from_str(src).map_err(|e| anyhow!("{}", e.to_string().trim_end()))?;
    let ctx = Ctx { src, unit: root.angle_unit };
    let mut out = match &root.preset {
        Some(name) => load_preset(name.get_ref()).with_context(|| format!("line {}, key 'preset'", line_of(src, name.span())))?,
        None => base,
    };
    let c = &mut out.config;
    if let Some(s) = root.seed {
        c.seed = s;
    }
    if let Some(m) = root.m {
        c.m = m;
    }
    if let Some(n) = root.n_s {
        c.n_s = n;
    }
    if let Some(p) = &root.power {
        c.power = ctx.power("power", p)?;
    }
    if let Some(p) = &root.sigma_s_sq {
        c.sigma_s_sq = ctx.power("sigma_s_sq", p)?;
    }
    if let Some(p) = &root.sigma_id_sq {
        c.sigma_id_sq = ctx.power("sigma_id_sq", p)?;
    }
    if let Some(l) = root.block_len {
        c.block_len = l;
    }
    if let Some(z) = root.zeta {
        c.zeta = z;
    }
    if let Some(t) = &root.target {
        if let Some(case) = &t.case {
            c.target.case = ctx.at("target.case", case.span(), case.get_ref().parse())?;
        }
        if let Some(a) = &t.alpha {
            c.target.alpha = a.value();
        }
        match (&t.theta, t.sin_theta) {
            (Some(_), Some(_)) => bail!("[target]: give either theta or sin_theta, not both"),
            (Some(th), None) => c.target.theta = ctx.angle("target.theta", th)?,
            (None, Some(u)) => {
                if !(-1.0..=1.0).contains(&u) {
                    bail!("key 'target.sin_theta': {u} lies outside [-1, 1]");
                }
                c.target.theta = u.asin();
            }
            (None, None) => {}
        }
        if let Some(list) = &t.scatterers {
            c.target.scatterers = list
                .iter()
                .map(|s| Ok((s.alpha.value(), ctx.angle("target.scatterers.theta", &s.theta)?)))
                .collect::<Result<_>>()?;
        }
    }
    if let Some(sec) = &root.id {
        apply_link(&ctx, "id", &mut c.id, sec)?;
    }
    if let Some(sec) = &root.eh {
        apply_link(&ctx, "eh", &mut c.eh, sec)?;
    }
    if let Some(th) = &root.thresholds {
        if let Some(v) = &th.gamma_eh {
            out.gamma_eh = Some(ctx.threshold("thresholds.gamma_eh", v, true)?);
        }
        if let Some(v) = &th.gamma_s {
            out.gamma_s = Some(ctx.threshold("thresholds.gamma_s", v, false)?);
        }
        match out.sweep {
            Some(Sweep::EnergyFractions(_)) if th.gamma_eh.is_some() => out.sweep = None,
            Some(Sweep::CrbMultiples(_)) if th.gamma_s.is_some() => out.sweep = None,
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use creopt_core::channel::Case;

    #[test]
    fn overrides_on_preset() {
        let src = r#"
preset = "paper-fig8"
seed = 7
angle_unit = "deg"
power = "40 dBm"

[id]
theta = 45.0
los = true

[thresholds]
gamma_eh = "1 mW"
"#;
        let s = parse_scenario(src, LoadedScenario::defaults()).unwrap();
        assert_eq!(s.config.seed, 7);
        assert!((s.config.power - 10.0).abs() < 1e-12);
        assert_eq!(s.config.id.kappa, None);
        assert_eq!(s.config.eh.kappa, Some(20.0));
        assert!((s.config.id.direction.sine() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.gamma_eh, Some(ThresholdSpec::Absolute(1e-3)));
        assert_eq!(s.gamma_s, Some(ThresholdSpec::OfCrbMin(50.0)));
    }

    #[test]
    fn scatterers_and_case() {
        let src = "angle_unit = \"rad\"\n[target]\ncase = \"extended\"\nscatterers = [{ alpha = [1e-6, 0.0], theta = 0.1 }, { alpha = 2e-6, theta = -0.2 }]\n";
        let s = parse_scenario(src, LoadedScenario::defaults()).unwrap();
        assert_eq!(s.config.target.case, Case::Extended);
        assert_eq!(s.config.target.scatterers.len(), 2);
        assert_eq!(s.config.target.scatterers[1].1, -0.2);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = parse_scenario("m = 4\npower = \"30\"\n", LoadedScenario::defaults()).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("power"), "{e}");
        let e = parse_scenario("\n[id]\ntheta = 30.0\n", LoadedScenario::defaults()).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("angle_unit"), "{e}");
        let e = parse_scenario("m = 4\nbogus = 1\n", LoadedScenario::defaults()).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("bogus"), "{e}");
        let e = parse_scenario("preset = \"nope\"\n", LoadedScenario::defaults()).unwrap_err();
        assert!(format!("{e:#}").contains("unknown preset"), "{e:#}");
    }

    #[test]
    fn threshold_forms() {
        assert_eq!(parse_threshold("0.5 mW", true).unwrap(), ThresholdSpec::Absolute(5e-4));
        assert!(parse_threshold("0.5 mW", false).is_err());
        assert_eq!(parse_threshold("inf", false).unwrap(), ThresholdSpec::Absolute(f64::INFINITY));
    }
}
