//! Runs the enabled experiments of a scenario and writes their tables.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::experiments::{
    exp_copresence_attack, exp_critical_mass, exp_distance_distortion, exp_intervention_impact, CriticalMassTable,
    DistortionRow,
};
use crate::SimError;

pub const CRITICAL_MASS_CSV: &str = "critical_mass.csv";
pub const DISTORTION_CSV: &str = "distance_distortion.csv";
pub const INTERVENTION_CSV: &str = "intervention_impact.csv";
pub const ATTACK_CSV: &str = "copresence_attack.csv";

/// What a run produced: files written and one-line findings.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunOutputs {
    pub files: Vec<PathBuf>,
    pub summaries: Vec<(String, String)>,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SimError::Output(path.to_path_buf(), e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| SimError::Output(path.to_path_buf(), e.to_string()))?;
    }
    w.flush().map_err(|e| SimError::Output(path.to_path_buf(), e.to_string()))
}

fn write_distortion(path: &Path, rows: &[DistortionRow]) -> Result<(), SimError> {
    let err = |e: csv::Error| SimError::Output(path.to_path_buf(), e.to_string());
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(err)?;
    let mut header: Vec<String> = [
        "adoption_rate",
        "adopters",
        "pairs",
        "finite_true",
        "finite_reported",
        "beyond_fraction",
        "true_beyond_fraction",
        "monotonicity_violations",
        "mean_distortion",
        "p50",
        "p90",
        "p99",
        "max",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..crate::experiments::distortion::HIST_BINS).map(|i| format!("h{i}")));
    w.write_record(&header).map_err(err)?;
    let opt = |x: Option<u32>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![
            r.adoption_rate.to_string(),
            r.adopters.to_string(),
            r.pairs.to_string(),
            r.finite_true.to_string(),
            r.finite_reported.to_string(),
            r.beyond_fraction.to_string(),
            r.true_beyond_fraction.to_string(),
            r.monotonicity_violations.to_string(),
            r.mean_distortion.to_string(),
            opt(r.p50),
            opt(r.p90),
            opt(r.p99),
            opt(r.max),
        ];
        rec.extend(r.histogram.iter().map(u64::to_string));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| SimError::Output(path.to_path_buf(), e.to_string()))
}

fn knee_summary(t: &CriticalMassTable) -> String {
    t.knees
        .iter()
        .map(|(c, k)| match k {
            Some(k) => format!("correlation {c}: half-cluster adoption {k:.4}"),
            None => format!("correlation {c}: no crossing in sweep"),
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Runs every enabled experiment and writes its CSV into `out`.
pub fn run_experiments(cfg: &ScenarioConfig, out: &Path) -> Result<RunOutputs, SimError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| SimError::Output(out.to_path_buf(), e.to_string()))?;
    let x = &cfg.experiments;
    let mut outputs = RunOutputs::default();

    if x.critical_mass.enabled {
        let t = exp_critical_mass(&x.critical_mass, cfg.seed)?;
        let path = out.join(CRITICAL_MASS_CSV);
        write_rows(&path, &t.rows)?;
        outputs.summaries.push(("critical_mass".into(), knee_summary(&t)));
        outputs.files.push(path);
    }
    if x.distance_distortion.enabled {
        let rows = exp_distance_distortion(&x.distance_distortion, &cfg.population, cfg.seed)?;
        let path = out.join(DISTORTION_CSV);
        write_distortion(&path, &rows)?;
        let violations: usize = rows.iter().map(|r| r.monotonicity_violations).sum();
        outputs.summaries.push(("distance_distortion".into(), format!("{violations} monotonicity violations")));
        outputs.files.push(path);
    }
    if x.intervention_impact.enabled {
        let rows = exp_intervention_impact(cfg, &x.intervention_impact)?;
        let path = out.join(INTERVENTION_CSV);
        write_rows(&path, &rows)?;
        outputs.files.push(path);
    }
    if x.copresence_attack.enabled {
        let rows = exp_copresence_attack(cfg.seed, cfg.start, x.copresence_attack.background)?;
        let path = out.join(ATTACK_CSV);
        write_rows(&path, &rows)?;
        let ok = rows.iter().all(|r| r.verdict == r.expected);
        outputs.summaries.push((
            "copresence_attack".into(),
            if ok { "all scripted outcomes reproduced".into() } else { "scripted outcome mismatch".into() },
        ));
        outputs.files.push(path);
    }
    Ok(outputs)
}
