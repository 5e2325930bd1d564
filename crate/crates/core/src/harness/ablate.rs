use super::config::{AblationSwitches, RunConfig};
use super::report::{ablation_csv, Report};
use super::train::train;
use crate::error::Result;

/// Trains the four ablation variants of `config`, each into its own
/// subdirectory, and writes a combined `ablation.csv`.
pub fn ablate(config: &RunConfig) -> Result<Vec<Report>> {
    let base = config.output.dir.clone();
    let mut reports = Vec::with_capacity(4);
    for (label, switches) in AblationSwitches::variants() {
        let mut cfg = config.clone();
        cfg.ablation = switches;
        cfg.output.dir = base.join(label);
        reports.push(train(&cfg, label)?);
    }
    std::fs::create_dir_all(&base)?;
    std::fs::write(base.join("ablation.csv"), ablation_csv(&reports))?;
    Ok(reports)
}
