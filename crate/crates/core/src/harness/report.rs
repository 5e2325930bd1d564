use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::error::{Error, Result};

/// Loss components of one logged iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub view: usize,
    pub total: f64,
    pub photometric: f64,
    pub normal: f64,
    pub gradient: f64,
    pub mvs: f64,
    pub gated_fraction: f64,
    /// Pixels tested by the consistency term; 0 when it did not run.
    pub mvs_tested: usize,
}

impl IterationLog {
    pub fn all_finite(&self) -> bool {
        [self.total, self.photometric, self.normal, self.gradient, self.mvs, self.gated_fraction]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Result of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub code_version: String,
    pub label: String,
    pub config: RunConfig,
    pub initial_chamfer: f64,
    pub final_chamfer: f64,
    /// Mean over logged iterations.
    pub gated_fraction: f64,
    pub opaque_gaussians: usize,
    pub log: Vec<IterationLog>,
}

pub const CSV_HEADER: &str = "iteration,view,total,photometric,normal,gradient,mvs,gated_fraction,mvs_tested";

impl Report {
    pub fn validate(&self) -> Result<()> {
        if !(self.final_chamfer >= 0.0) || !(self.initial_chamfer >= 0.0) {
            return Err(Error::NonFinite("Chamfer distance".into()));
        }
        if let Some(bad) = self.log.iter().find(|l| !l.all_finite()) {
            return Err(Error::NonFinite(format!("loss log at iteration {}", bad.iteration)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedHeader(format!("report: {e}")))
    }

    pub fn csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for l in &self.log {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                l.iteration, l.view, l.total, l.photometric, l.normal, l.gradient, l.mvs, l.gated_fraction, l.mvs_tested
            );
        }
        s
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("loss.csv"), self.csv())?;
        Ok(())
    }

    /// First logged total and the last logged total on the same view.
    pub fn total_endpoints(&self) -> Option<(f64, f64)> {
        let first = self.log.first()?;
        let last = self.log.iter().rev().find(|l| l.view == first.view)?;
        Some((first.total, last.total))
    }
}

/// One row per run of an ablation.
pub fn ablation_csv(reports: &[Report]) -> String {
    let mut s = String::from("label,scene,seed,illum,normal,mvs,initial_chamfer,final_chamfer,gated_fraction\n");
    for r in reports {
        let c = &r.config;
        let kind = serde_json::to_value(c.scene.kind).expect("scene kind serializes");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.label,
            kind.as_str().unwrap_or("?"),
            c.train.seed,
            c.ablation.illum,
            c.ablation.normal,
            c.ablation.mvs,
            r.initial_chamfer,
            r.final_chamfer,
            r.gated_fraction
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        Report {
            code_version: "0".into(),
            label: "x".into(),
            config: RunConfig::default(),
            initial_chamfer: 0.2,
            final_chamfer: 0.1,
            gated_fraction: 0.25,
            opaque_gaussians: 3,
            log: vec![IterationLog {
                iteration: 0,
                view: 0,
                total: 0.5,
                photometric: 0.4,
                normal: 0.3,
                gradient: 0.2,
                mvs: 0.0,
                gated_fraction: 0.25,
                mvs_tested: 0,
            }],
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn csv_has_one_row_per_log_entry() {
        let csv = sample().csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with(CSV_HEADER));
    }

    #[test]
    fn validation_flags_non_finite_losses() {
        let mut r = sample();
        assert!(r.validate().is_ok());
        r.log[0].normal = f64::NAN;
        assert!(r.validate().is_err());
    }
}
