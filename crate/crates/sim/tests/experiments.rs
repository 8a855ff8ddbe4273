use std::fs;

use netdist_sim::config::{PopulationConfig, ScenarioConfig};
use netdist_sim::run_experiments;
use netdist_sim::runner::{ATTACK_CSV, CRITICAL_MASS_CSV, DISTORTION_CSV, INTERVENTION_CSV};

fn quick() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.population.size = 300;
    let x = &mut cfg.experiments;
    x.critical_mass.population = PopulationConfig { size: 800, ..PopulationConfig::campus() };
    x.critical_mass.adoption_sweep = vec![0.0, 0.1, 0.5, 1.0];
    x.critical_mass.replicates = 3;
    x.distance_distortion.n_cases = 10;
    x.distance_distortion.viewers_per_case = 20;
    x.intervention_impact.p1_values = vec![0.0, 1.0];
    x.intervention_impact.replicates = 3;
    cfg
}

#[test]
fn repeat_runs_write_identical_tables() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = quick();
    let out_a = run_experiments(&cfg, a.path()).unwrap();
    run_experiments(&cfg, b.path()).unwrap();
    assert_eq!(out_a.files.len(), 4);
    for name in [CRITICAL_MASS_CSV, DISTORTION_CSV, INTERVENTION_CSV, ATTACK_CSV] {
        let x = fs::read(a.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let cm = fs::read_to_string(a.path().join(CRITICAL_MASS_CSV)).unwrap();
    assert_eq!(cm.lines().count(), 1 + 4);
    assert!(cm.starts_with("adoption_rate,correlation,"));
    let dd = fs::read_to_string(a.path().join(DISTORTION_CSV)).unwrap();
    assert!(dd.lines().next().unwrap().ends_with(",h10,h11"));
}

#[test]
fn disabled_experiments_write_nothing() {
    let mut cfg = quick();
    cfg.experiments.critical_mass.enabled = false;
    cfg.experiments.intervention_impact.enabled = false;
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiments(&cfg, dir.path()).unwrap();
    assert_eq!(out.files.len(), 2);
    assert!(!dir.path().join(CRITICAL_MASS_CSV).exists());
}

#[test]
fn infeasible_scenario_is_rejected() {
    let mut cfg = quick();
    cfg.population.occupation.k = 31;
    let dir = tempfile::tempdir().unwrap();
    assert!(run_experiments(&cfg, dir.path()).is_err());
}
