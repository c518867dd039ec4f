use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::spectral::Potential;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ConvMeanfield,
    ExchangeScaling,
    HierarchyBounds,
    VlasovGap,
    AppendixChecks,
    Residuals,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::ConvMeanfield,
        ExperimentKind::ExchangeScaling,
        ExperimentKind::HierarchyBounds,
        ExperimentKind::VlasovGap,
        ExperimentKind::AppendixChecks,
        ExperimentKind::Residuals,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ConvMeanfield => "conv_meanfield",
            ExperimentKind::ExchangeScaling => "exchange_scaling",
            ExperimentKind::HierarchyBounds => "hierarchy_bounds",
            ExperimentKind::VlasovGap => "vlasov_gap",
            ExperimentKind::AppendixChecks => "appendix_checks",
            ExperimentKind::Residuals => "residuals",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    pub extent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Gaussian { u0: f64, sigma: f64 },
    Cosine { u0: f64, k0: f64 },
    Zero,
}

impl PotentialSpec {
    pub fn build(&self) -> Result<Potential> {
        use crate::spectral::{PotentialKind, DEFAULT_M_MAX};
        match *self {
            PotentialSpec::Gaussian { u0, sigma } => Potential::new(PotentialKind::Gaussian { u0, sigma }, 1, DEFAULT_M_MAX),
            PotentialSpec::Cosine { u0, k0 } => Potential::new(PotentialKind::Cosine { u0, k0 }, 1, DEFAULT_M_MAX),
            PotentialSpec::Zero => Ok(Potential::zero()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            PotentialSpec::Gaussian { u0, .. } | PotentialSpec::Cosine { u0, .. } => u0 == 0.0,
            PotentialSpec::Zero => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub n: Vec<usize>,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t_final: f64,
    pub dt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed distance of a fitted exponent from its target.
    pub slope: f64,
    pub r_squared: f64,
    /// Absolute residual bound for interacting hierarchy checks.
    pub residual: f64,
    /// Absolute residual bound when the potential vanishes.
    pub free_residual: f64,
    /// Allowed distance of a Richardson factor from 4.
    pub richardson: f64,
    /// Conserved-quantity drift per unit time.
    pub drift: f64,
    /// Agreement of the two sides of an expansion identity.
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            slope: 0.1,
            r_squared: 0.98,
            residual: 1e-5,
            free_residual: 1e-6,
            richardson: 0.5,
            drift: 1e-6,
            identity: 1e-4,
        }
    }
}

impl Tolerances {
    /// Applies `name=value` overrides.
    pub fn apply(&mut self, overrides: &[(String, f64)]) -> Result<()> {
        for (name, value) in overrides {
            let slot = match name.as_str() {
                "slope" => &mut self.slope,
                "r_squared" => &mut self.r_squared,
                "residual" => &mut self.residual,
                "free_residual" => &mut self.free_residual,
                "richardson" => &mut self.richardson,
                "drift" => &mut self.drift,
                "identity" => &mut self.identity,
                _ => return Err(validation(format!("tolerance.{name}"), "unknown tolerance")),
            };
            *slot = *value;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    pub sweep: SweepSpec,
    pub time: TimeSpec,
    /// Quadrature nodes or trajectory samples, depending on the experiment.
    pub samples: usize,
    pub output: PathBuf,
    pub seed: u64,
    pub tolerance: Tolerances,
}

fn validation(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Validation { field: field.into(), message: message.into() }
}

impl ExperimentConfig {
    /// Defaults of each experiment; user files override individual keys.
    pub fn preset(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            experiment: kind,
            grid: GridSpec { points: 128, extent: 8.0 },
            potential: PotentialSpec::Gaussian { u0: 1.0, sigma: 1.0 },
            sweep: SweepSpec { n: vec![2], eps: vec![0.5], delta: vec![1.0] },
            time: TimeSpec { t_final: 0.5, dt: 0.005 },
            samples: 10,
            output: PathBuf::from("out").join(kind.name()),
            seed: 0,
            tolerance: Tolerances::default(),
        };
        match kind {
            ExperimentKind::ConvMeanfield => ExperimentConfig {
                sweep: SweepSpec { n: vec![2, 3], eps: vec![], delta: vec![1.0] },
                time: TimeSpec { t_final: 0.5, dt: 0.005 },
                samples: 5,
                ..base
            },
            ExperimentKind::ExchangeScaling => ExperimentConfig {
                sweep: SweepSpec { n: vec![64, 128, 256, 512, 1024, 2048, 4096], eps: vec![], delta: vec![] },
                ..base
            },
            ExperimentKind::HierarchyBounds => ExperimentConfig {
                grid: GridSpec { points: 32, extent: 6.0 },
                potential: PotentialSpec::Gaussian { u0: 1.0, sigma: 1.0 },
                sweep: SweepSpec { n: vec![2], eps: vec![0.5], delta: vec![1.0] },
                time: TimeSpec { t_final: 0.05, dt: 5e-4 },
                samples: 10,
                ..base
            },
            ExperimentKind::VlasovGap => ExperimentConfig {
                grid: GridSpec { points: 256, extent: 6.0 },
                sweep: SweepSpec { n: vec![], eps: vec![0.4, 0.2, 0.1, 0.05], delta: vec![] },
                time: TimeSpec { t_final: 0.0, dt: 2e-4 },
                samples: 1,
                ..base
            },
            ExperimentKind::AppendixChecks => ExperimentConfig {
                grid: GridSpec { points: 512, extent: std::f64::consts::PI },
                potential: PotentialSpec::Gaussian { u0: 8.0, sigma: 1.0 },
                sweep: SweepSpec { n: vec![5, 9, 17, 33, 65, 129], eps: vec![0.125], delta: vec![] },
                time: TimeSpec { t_final: 0.0, dt: 0.0 },
                samples: 12,
                ..base
            },
            ExperimentKind::Residuals => ExperimentConfig {
                grid: GridSpec { points: 128, extent: 10.0 },
                potential: PotentialSpec::Gaussian { u0: 2.0, sigma: 1.0 },
                sweep: SweepSpec { n: vec![2], eps: vec![0.5], delta: vec![] },
                time: TimeSpec { t_final: 0.0, dt: 0.005 },
                samples: 20,
                ..base
            },
        }
    }

    /// Parses TOML, overlaying the keys present on the preset of `experiment`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        let kind = match user.get("experiment") {
            Some(v) => ExperimentKind::deserialize(v.clone())
                .map_err(|e| validation("experiment", e.to_string()))?,
            None => return Err(validation("experiment", "missing experiment name")),
        };
        let mut merged = toml::Table::try_from(Self::preset(kind)).map_err(|e| Error::Serde(e.to_string()))?;
        overlay(&mut merged, user);
        let cfg: ExperimentConfig = toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Serde(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("configs serialize");
        hex(&Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid;
        if g.points < 8 || g.points % 2 != 0 {
            return Err(validation("grid.points", format!("must be even and at least 8, got {}", g.points)));
        }
        if !(g.extent > 0.0 && g.extent.is_finite()) {
            return Err(validation("grid.extent", format!("must be positive and finite, got {}", g.extent)));
        }
        match self.potential {
            PotentialSpec::Gaussian { u0, sigma } => {
                if !u0.is_finite() {
                    return Err(validation("potential.u0", "must be finite"));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(validation("potential.sigma", format!("must be positive, got {sigma}")));
                }
            }
            PotentialSpec::Cosine { u0, k0 } => {
                if !u0.is_finite() {
                    return Err(validation("potential.u0", "must be finite"));
                }
                if !(k0 >= 0.0 && k0.is_finite()) {
                    return Err(validation("potential.k0", format!("must be nonnegative, got {k0}")));
                }
            }
            PotentialSpec::Zero => {}
        }
        if let Some(e) = self.sweep.eps.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(validation("sweep.eps", format!("entries must lie in (0, 1], got {e}")));
        }
        if let Some(d) = self.sweep.delta.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(validation("sweep.delta", format!("entries must be positive, got {d}")));
        }
        if self.sweep.n.contains(&0) {
            return Err(validation("sweep.n", "entries must be positive"));
        }
        let t = self.time;
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            return Err(validation("time.t_final", format!("must be nonnegative, got {}", t.t_final)));
        }
        if !(t.dt >= 0.0 && t.dt.is_finite()) {
            return Err(validation("time.dt", format!("must be nonnegative, got {}", t.dt)));
        }
        if self.output.as_os_str().is_empty() {
            return Err(validation("output", "must name a directory"));
        }
        let tol = self.tolerance;
        for (name, v) in [
            ("slope", tol.slope),
            ("r_squared", tol.r_squared),
            ("residual", tol.residual),
            ("free_residual", tol.free_residual),
            ("richardson", tol.richardson),
            ("drift", tol.drift),
            ("identity", tol.identity),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(validation(format!("tolerance.{name}"), format!("must be positive, got {v}")));
            }
        }
        self.validate_kind()
    }

    fn validate_kind(&self) -> Result<()> {
        let s = &self.sweep;
        let t = self.time;
        match self.experiment {
            ExperimentKind::ExchangeScaling => {
                if s.n.len() < 6 {
                    return Err(validation("sweep.n", "needs at least 6 sizes so that 4 remain after dropping the smallest two"));
                }
            }
            ExperimentKind::ConvMeanfield => {
                if s.n.is_empty() || s.n.iter().any(|&n| n > 3) {
                    return Err(validation("sweep.n", "exact propagation covers 1 to 3 particles"));
                }
                if s.delta.len() != 1 {
                    return Err(validation("sweep.delta", "needs exactly one smoothing width"));
                }
                if !(t.t_final > 0.0 && t.dt > 0.0 && t.dt <= t.t_final) {
                    return Err(validation("time.dt", "needs 0 < dt <= t_final"));
                }
                if self.samples == 0 {
                    return Err(validation("samples", "must be positive"));
                }
            }
            ExperimentKind::HierarchyBounds => {
                if self.samples == 0 {
                    return Err(validation("samples", "must be positive"));
                }
                if s.delta.len() != 1 || s.eps.len() != 1 {
                    return Err(validation("sweep", "needs exactly one delta and one eps"));
                }
                if !(t.t_final > 0.0 && t.dt > 0.0) {
                    return Err(validation("time", "needs positive t_final and dt"));
                }
            }
            ExperimentKind::VlasovGap => {
                if s.eps.len() < 2 {
                    return Err(validation("sweep.eps", "needs at least two values"));
                }
                if !(t.dt > 0.0) {
                    return Err(validation("time.dt", "must be positive"));
                }
                if self.potential.is_zero() {
                    return Err(validation("potential", "the semiclassical comparison needs an interaction"));
                }
            }
            ExperimentKind::AppendixChecks => {
                if s.n.len() < 6 || s.n.iter().any(|&n| n < 2) {
                    return Err(validation("sweep.n", "needs at least 6 sizes of at least 2"));
                }
                if s.eps.len() != 1 {
                    return Err(validation("sweep.eps", "needs exactly one value"));
                }
                if !matches!(self.potential, PotentialSpec::Gaussian { .. }) || self.potential.is_zero() {
                    return Err(validation("potential", "the displacement band uses a nonzero gaussian"));
                }
                if self.samples < 2 {
                    return Err(validation("samples", "needs at least two trajectory samples"));
                }
            }
            ExperimentKind::Residuals => {
                if s.eps.len() != 1 {
                    return Err(validation("sweep.eps", "needs exactly one value"));
                }
                if !(t.dt > 0.0) {
                    return Err(validation("time.dt", "must be positive"));
                }
                if self.samples < 20 {
                    return Err(validation("samples", "needs at least 20 seeded states"));
                }
            }
        }
        Ok(())
    }
}

fn overlay(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) if !u.contains_key("kind") => overlay(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses `name=value` tolerance overrides.
pub fn parse_override(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for kind in ExperimentKind::ALL {
            let p = ExperimentConfig::preset(kind);
            p.validate().unwrap();
            let back = ExperimentConfig::from_toml(&p.to_toml().unwrap()).unwrap();
            assert_eq!(back, p);
            assert_eq!(back.hash(), p.hash());
        }
    }

    #[test]
    fn partial_files_overlay_the_preset() {
        let cfg = ExperimentConfig::from_toml("experiment = \"residuals\"\nseed = 3\n[grid]\npoints = 64\n").unwrap();
        let p = ExperimentConfig::preset(ExperimentKind::Residuals);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.grid.points, 64);
        assert_eq!(cfg.grid.extent, p.grid.extent);
        assert_ne!(cfg.hash(), p.hash());
        let z = ExperimentConfig::from_toml("experiment = \"residuals\"\n[potential]\nkind = \"zero\"\n").unwrap();
        assert_eq!(z.potential, PotentialSpec::Zero);
    }

    #[test]
    fn field_level_errors() {
        let field = |text: &str| match ExperimentConfig::from_toml(text) {
            Err(Error::Validation { field, .. }) => field,
            other => panic!("{other:?}"),
        };
        assert_eq!(field("experiment = \"residuals\"\n[grid]\npoints = 7\n"), "grid.points");
        assert_eq!(field("experiment = \"vlasov_gap\"\n[sweep]\neps = [0.1, 2.0]\n"), "sweep.eps");
        assert_eq!(field("experiment = \"exchange_scaling\"\n[sweep]\nn = [64, 128]\n"), "sweep.n");
        assert_eq!(field("experiment = \"residuals\"\n[potential]\nkind = \"gaussian\"\nu0 = 1.0\nsigma = -1.0\n"), "potential.sigma");
        assert_eq!(field("experiment = \"nothing\"\n"), "experiment");
        assert!(matches!(ExperimentConfig::from_toml("experiment = \"residuals\"\ncolour = 1\n"), Err(Error::Serde(_))));
    }

    #[test]
    fn overrides_parse_and_apply() {
        let mut t = Tolerances::default();
        t.apply(&[parse_override("slope = 0.05").unwrap()]).unwrap();
        assert_eq!(t.slope, 0.05);
        assert!(parse_override("slope").is_err());
        assert!(matches!(t.apply(&[("nope".into(), 1.0)]), Err(Error::Validation { .. })));
    }
}
