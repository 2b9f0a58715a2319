//! Scenario files: one TOML or JSON document per run.

use nullcone::cutlocus::random_points;
use nullcone::metric::{AssumptionBudget, Family, MetricField, SpacetimePoint};
use nullcone::tensor::V3;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub metric: MetricField,
    #[serde(default)]
    pub budget: AssumptionBudget,
    #[serde(default)]
    pub base_points: Vec<SpacetimePoint>,
    #[serde(default)]
    pub random_points: Option<RandomPoints>,
    /// Icosphere refinement level of the ω-grid.
    #[serde(default = "default_level")]
    pub grid_level: u32,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(default)]
    pub s_levels: Vec<f64>,
    #[serde(default)]
    pub t_levels: Vec<f64>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default = "default_true")]
    pub two_grid: bool,
    #[serde(default)]
    pub energy: Option<EnergySpec>,
    #[serde(default)]
    pub volume: Option<VolumeSpec>,
    #[serde(default)]
    pub inclusion: Option<InclusionSpec>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPoints {
    pub count: usize,
    #[serde(default)]
    pub t: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySpec {
    pub t_range: [f64; 2],
    #[serde(default = "default_slices")]
    pub slices: usize,
    /// Quadrature nodes per axis.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_c")]
    pub c: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeSpec {
    #[serde(default)]
    pub t: f64,
    pub rho: f64,
    #[serde(default = "default_volume_level")]
    pub grid_level: u32,
    /// Defaults to the spatial parts of the base points.
    #[serde(default)]
    pub points: Vec<V3>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSpec {
    pub t_level: f64,
    pub eps: f64,
}

fn default_level() -> u32 {
    4
}

fn default_s_max() -> f64 {
    3.0
}

fn default_true() -> bool {
    true
}

fn default_slices() -> usize {
    6
}

fn default_nodes() -> usize {
    12
}

fn default_c() -> f64 {
    nullcone::energy::DEFAULT_GRONWALL_C
}

fn default_volume_level() -> u32 {
    3
}

#[derive(Debug, thiserror::Error)]
#[error("cannot parse scenario {path}: {msg}")]
pub struct ParseError {
    pub path: String,
    pub msg: String,
}

impl Scenario {
    /// Parses JSON when the extension is `.json`, TOML otherwise.
    pub fn from_text(text: &str, json: bool) -> Result<Self, String> {
        let s: Scenario = if json {
            serde_json::from_str(text).map_err(|e| e.to_string())?
        } else {
            toml::from_str(text).map_err(|e| e.to_string())?
        };
        s.check().map_err(|e| e.to_string())?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ParseError> {
        let fail = |msg: String| ParseError { path: path.display().to_string(), msg };
        let bytes = std::fs::read(path).map_err(|e| fail(e.to_string()))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| fail(e.to_string()))?;
        let json = path.extension().is_some_and(|e| e == "json");
        let s = Scenario::from_text(text, json).map_err(fail)?;
        Ok((s, bytes))
    }

    fn check(&self) -> nullcone::Result<()> {
        self.budget.validate()?;
        let [lo, hi] = self.metric.interval;
        if !(hi > lo) {
            return Err(nullcone::Error::Scenario("interval must be increasing".into()));
        }
        if !(self.s_max > 0.0) {
            return Err(nullcone::Error::Scenario("s_max must be positive".into()));
        }
        if self.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(nullcone::Error::Scenario("deltas must be positive".into()));
        }
        for p in self.points() {
            self.metric.locate(&p)?;
        }
        Ok(())
    }

    /// Declared base points followed by the seeded random sample; a
    /// family-specific centre point when neither is given.
    pub fn points(&self) -> Vec<SpacetimePoint> {
        let mut out = self.base_points.clone();
        if let Some(r) = &self.random_points {
            out.extend(random_points(&self.metric, r.count, self.seed, r.t));
        }
        if out.is_empty() {
            out.push(default_point(&self.metric));
        }
        out
    }
}

pub fn default_point(metric: &MetricField) -> SpacetimePoint {
    let x = match metric.family {
        Family::SphericalCylinder { .. } => [std::f64::consts::FRAC_PI_2, 0.0, 0.0],
        _ => match metric.family.period() {
            Some(l) => [0.5 * l; 3],
            None => [0.0; 3],
        },
    };
    SpacetimePoint::new(0.0, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TORUS: &str = r#"
name = "torus"
seed = 3
grid_level = 2

[metric]
family = "flat_torus"
period = 1.0

[budget]
N0 = 1.5

[[base_points]]
t = 0.0
x = [0.5, 0.5, 0.5]
"#;

    #[test]
    fn toml_and_json_agree() {
        let a = Scenario::from_text(TORUS, false).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = Scenario::from_text(&json, true).unwrap();
        assert_eq!(serde_json::to_string(&b).unwrap(), json);
        assert_eq!(a.metric.interval, [-10.0, 10.0]);
        assert_eq!(a.budget.n0, 1.5);
        assert_eq!(a.budget.k0, AssumptionBudget::default().k0);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_budget() {
        assert!(Scenario::from_text(&format!("bogus = 1\n{TORUS}"), false).is_err());
        assert!(Scenario::from_text(&TORUS.replace("N0 = 1.5", "N0 = 0.5"), false).is_err());
        assert!(Scenario::from_text(&TORUS.replace("flat_torus", "flat_donut"), false).is_err());
    }

    #[test]
    fn random_points_follow_seed() {
        let mut s = Scenario::from_text(TORUS, false).unwrap();
        s.random_points = Some(RandomPoints { count: 3, t: 0.0 });
        let a = s.points();
        assert_eq!(a.len(), 4);
        assert_eq!(a, s.points());
        s.seed = 4;
        assert_ne!(a, s.points());
    }
}
