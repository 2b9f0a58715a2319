//! Run manifests and verdict tables.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Grid-limited; not a violation.
    Unresolved,
    /// Recorded without a claim (monitors, hypotheses not met).
    Reported,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    /// Verbatim anchor of the statement under test.
    pub anchor: String,
    pub point: Option<usize>,
    pub status: Status,
    /// Only asserted failures fail a run.
    pub asserted: bool,
    pub measured: Option<f64>,
    pub threshold: Option<f64>,
    pub detail: String,
}

impl Verdict {
    pub fn new(check: &str, anchor: &str, point: Option<usize>) -> Self {
        Verdict {
            check: check.into(),
            anchor: anchor.into(),
            point,
            status: Status::Reported,
            asserted: false,
            measured: None,
            threshold: None,
            detail: String::new(),
        }
    }

    /// Asserted `measured ≤ threshold`.
    pub fn at_most(mut self, measured: f64, threshold: f64) -> Self {
        self.asserted = true;
        self.measured = Some(measured);
        self.threshold = Some(threshold);
        self.status = if measured <= threshold { Status::Pass } else { Status::Fail };
        self
    }

    /// Asserted boolean outcome.
    pub fn holds(mut self, ok: bool) -> Self {
        self.asserted = true;
        self.status = if ok { Status::Pass } else { Status::Fail };
        self
    }

    pub fn reported(mut self, measured: f64, threshold: Option<f64>) -> Self {
        self.asserted = false;
        self.status = Status::Reported;
        self.measured = Some(measured);
        self.threshold = threshold;
        self
    }

    pub fn unresolved(mut self, detail: impl Into<String>) -> Self {
        self.asserted = false;
        self.status = Status::Unresolved;
        self.detail = detail.into();
        self
    }

    pub fn measured(mut self, m: f64) -> Self {
        self.measured = Some(m);
        self
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }

    pub fn is_failure(&self) -> bool {
        self.asserted && self.status == Status::Fail
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timing {
    pub operation: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBar {
    pub quantity: String,
    pub point: Option<usize>,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_name: String,
    pub scenario_sha256: String,
    pub tool_version: String,
    pub workers: usize,
    pub wall_times: Vec<Timing>,
    pub error_bars: Vec<ErrorBar>,
    pub verdicts: Vec<Verdict>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, scenario_name: &str, scenario_bytes: &[u8], workers: usize) -> Self {
        let digest = Sha256::digest(scenario_bytes);
        RunManifest {
            command: command.into(),
            scenario_name: scenario_name.into(),
            scenario_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            workers,
            wall_times: Vec::new(),
            error_bars: Vec::new(),
            verdicts: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Runs `f`, recording its wall time under `operation`.
    pub fn timed<T>(&mut self, operation: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.wall_times.push(Timing { operation: operation.into(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    pub fn error_bar(&mut self, quantity: &str, point: Option<usize>, value: Option<f64>) {
        if let Some(value) = value {
            self.error_bars.push(ErrorBar { quantity: quantity.into(), point, value });
        }
    }
}
