//! Scenario configuration: one JSON document selecting the world, the
//! disease, the behaviour model, adoption and the experiments to run.

use netdist_core::Config;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimConfigError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
}

fn infeasible(msg: impl Into<String>) -> SimConfigError {
    SimConfigError::Infeasible(msg.into())
}

fn check_prob(name: &str, p: f64) -> Result<(), SimConfigError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(infeasible(format!("{name} = {p} is not a probability")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OccupationConfig {
    /// Fraction of people who belong to an occupation network.
    pub coverage: f64,
    /// Target members per network.
    pub network_size: usize,
    /// Watts-Strogatz ring neighbours (even).
    pub k: usize,
    /// Watts-Strogatz rewiring probability.
    pub rewire: f64,
    /// Probability an occupation edge is active on a given day.
    pub daily_activation: f64,
}

impl Default for OccupationConfig {
    fn default() -> Self {
        Self { coverage: 0.8, network_size: 30, k: 6, rewire: 0.1, daily_activation: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub size: usize,
    /// `household_size_weights[i]` is the relative frequency of households
    /// of size `i + 1`.
    pub household_size_weights: Vec<f64>,
    pub occupation: OccupationConfig,
    /// Expected random interactions per person per day.
    pub random_contacts_per_day: f64,
    /// Share of random interactions lasting 15 minutes or more.
    pub random_long_fraction: f64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            size: 1000,
            household_size_weights: vec![0.28, 0.35, 0.15, 0.14, 0.08],
            occupation: OccupationConfig::default(),
            random_contacts_per_day: 2.0,
            random_long_fraction: 0.3,
        }
    }
}

impl PopulationConfig {
    /// Residential campus: shared dorm rooms and classes of 40 with dense
    /// small-world mixing. Mean 14-day degree is close to 30.
    pub fn campus() -> Self {
        Self {
            size: 4000,
            household_size_weights: vec![0.0, 0.4, 0.35, 0.25],
            occupation: OccupationConfig { coverage: 1.0, network_size: 40, k: 26, rewire: 0.1, daily_activation: 0.5 },
            random_contacts_per_day: 0.5,
            random_long_fraction: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), SimConfigError> {
        if self.size == 0 {
            return Err(infeasible("population size must be positive"));
        }
        if self.household_size_weights.is_empty()
            || self.household_size_weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || self.household_size_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(infeasible("household_size_weights need a positive total"));
        }
        let o = &self.occupation;
        check_prob("occupation.coverage", o.coverage)?;
        check_prob("occupation.rewire", o.rewire)?;
        check_prob("occupation.daily_activation", o.daily_activation)?;
        check_prob("random_long_fraction", self.random_long_fraction)?;
        if o.coverage > 0.0 {
            if o.k == 0 || o.k % 2 == 1 {
                return Err(infeasible(format!("occupation.k = {} must be even and positive", o.k)));
            }
            if o.k >= o.network_size {
                return Err(infeasible(format!(
                    "occupation.k = {} must be below occupation.network_size = {}",
                    o.k, o.network_size
                )));
            }
        }
        if !(self.random_contacts_per_day >= 0.0 && self.random_contacts_per_day.is_finite()) {
            return Err(infeasible("random_contacts_per_day must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpiParams {
    /// Per-contact, per-day transmission probability.
    pub transmission_prob: f64,
    pub latent_days: u32,
    pub infectious_days: u32,
    pub initial_seeds: usize,
}

impl Default for EpiParams {
    fn default() -> Self {
        Self { transmission_prob: 0.06, latent_days: 3, infectious_days: 5, initial_seeds: 5 }
    }
}

impl EpiParams {
    pub fn validate(&self, population: usize) -> Result<(), SimConfigError> {
        check_prob("transmission_prob", self.transmission_prob)?;
        if self.latent_days < 1 || self.infectious_days < 1 {
            return Err(infeasible("latent_days and infectious_days must be at least 1"));
        }
        if self.initial_seeds > population {
            return Err(infeasible("more initial seeds than people"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorModel {
    /// Probability an alerted person adopts precautions.
    pub p1: f64,
    /// Probability a precaution blocks a would-be transmission.
    pub p2: f64,
    /// Probability an alerted person informs each household/occupation
    /// neighbour.
    pub p3: f64,
    pub alert_distance: u8,
    pub precaution_days: u32,
}

impl Default for BehaviorModel {
    fn default() -> Self {
        Self { p1: 0.5, p2: 0.5, p3: 0.0, alert_distance: 3, precaution_days: 14 }
    }
}

impl BehaviorModel {
    /// Documented presets for `p2`. They come from external effect-size
    /// figures and are starting points, not calibrated values.
    pub const P2_SURGICAL_MASK: f64 = 0.9;
    pub const P2_DISTANCING_EXTRA_METRE: f64 = 1.0 - 1.0 / 2.02;

    pub fn validate(&self) -> Result<(), SimConfigError> {
        check_prob("p1", self.p1)?;
        check_prob("p2", self.p2)?;
        check_prob("p3", self.p3)?;
        if self.alert_distance > 12 {
            return Err(infeasible("alert_distance must be at most 12"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdoptionConfig {
    pub rate: f64,
    /// Household correlation of adoption in [0, 1]; the marginal rate is
    /// unchanged.
    pub correlation: f64,
}

impl Default for AdoptionConfig {
    fn default() -> Self {
        Self { rate: 0.4, correlation: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportingConfig {
    pub positive_redeem_prob: f64,
    pub contact_token_prob: f64,
    pub contact_redeem_prob: f64,
}

impl Default for ReportingConfig {
    fn default() -> Self {
        Self { positive_redeem_prob: 0.5, contact_token_prob: 0.5, contact_redeem_prob: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticalMassConfig {
    pub enabled: bool,
    /// World for this experiment; defaults to the campus preset.
    pub population: PopulationConfig,
    pub adoption_sweep: Vec<f64>,
    pub correlations: Vec<f64>,
    pub replicates: usize,
    /// Adopters per replicate whose reachable-user count is measured.
    pub chart_samples: usize,
}

impl Default for CriticalMassConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            population: PopulationConfig::campus(),
            adoption_sweep: vec![0.0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.2, 0.3, 0.5, 1.0],
            correlations: vec![0.0],
            replicates: 30,
            chart_samples: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistortionConfig {
    pub enabled: bool,
    pub adoption_levels: Vec<f64>,
    pub n_cases: usize,
    pub viewers_per_case: usize,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self { enabled: true, adoption_levels: vec![0.25, 0.5, 0.75, 1.0], n_cases: 100, viewers_per_case: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterventionConfig {
    pub enabled: bool,
    pub p1_values: Vec<f64>,
    pub p2_values: Vec<f64>,
    pub p3_values: Vec<f64>,
    pub adoption_levels: Vec<f64>,
    pub replicates: usize,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            p1_values: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            p2_values: vec![0.5],
            p3_values: vec![0.0],
            adoption_levels: vec![0.4],
            replicates: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub enabled: bool,
    /// Unrelated background devices with their own contacts.
    pub background: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { enabled: true, background: 20 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Experiments {
    pub critical_mass: CriticalMassConfig,
    pub distance_distortion: DistortionConfig,
    pub intervention_impact: InterventionConfig,
    pub copresence_attack: AttackConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub population: PopulationConfig,
    pub epi: EpiParams,
    pub behavior: BehaviorModel,
    pub adoption: AdoptionConfig,
    pub reporting: ReportingConfig,
    /// Maximum simulated days per run; runs stop early once no one is
    /// exposed or infectious.
    pub days: u32,
    /// Hour of day at which cases report.
    pub report_hour: u32,
    /// First simulated day as a Unix timestamp (midnight UTC).
    pub start: i64,
    /// Signal-server settings used in-process.
    pub server: Config,
    pub experiments: Experiments,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            population: PopulationConfig::default(),
            epi: EpiParams::default(),
            behavior: BehaviorModel::default(),
            adoption: AdoptionConfig::default(),
            reporting: ReportingConfig::default(),
            days: 150,
            report_hour: 20,
            start: 1_600_041_600,
            server: Config::default(),
            experiments: Experiments::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<(), SimConfigError> {
        self.population.validate()?;
        self.epi.validate(self.population.size)?;
        self.behavior.validate()?;
        check_prob("adoption.rate", self.adoption.rate)?;
        check_prob("adoption.correlation", self.adoption.correlation)?;
        check_prob("positive_redeem_prob", self.reporting.positive_redeem_prob)?;
        check_prob("contact_token_prob", self.reporting.contact_token_prob)?;
        check_prob("contact_redeem_prob", self.reporting.contact_redeem_prob)?;
        if self.start % 86_400 != 0 {
            return Err(infeasible("start must be midnight UTC"));
        }
        if self.report_hour >= 24 {
            return Err(infeasible("report_hour must be below 24"));
        }
        self.server.validate().map_err(|e| infeasible(e.to_string()))?;
        let x = &self.experiments;
        if x.critical_mass.enabled {
            x.critical_mass.population.validate()?;
            for &r in x.critical_mass.adoption_sweep.iter().chain(&x.critical_mass.correlations) {
                check_prob("critical_mass sweep value", r)?;
            }
        }
        for &r in &x.distance_distortion.adoption_levels {
            check_prob("distance_distortion adoption level", r)?;
        }
        let iv = &x.intervention_impact;
        for &p in iv.p1_values.iter().chain(&iv.p2_values).chain(&iv.p3_values).chain(&iv.adoption_levels) {
            check_prob("intervention_impact sweep value", p)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
        PopulationConfig::campus().validate().unwrap();
    }

    #[test]
    fn infeasible_small_world() {
        let mut p = PopulationConfig::default();
        p.occupation.k = 30;
        p.occupation.network_size = 30;
        assert!(matches!(p.validate(), Err(SimConfigError::Infeasible(_))));
        p.occupation.k = 5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn partial_json() {
        let c = ScenarioConfig::from_json(r#"{"seed": 9, "behavior": {"p1": 1.0}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.behavior.p1, 1.0);
        assert_eq!(c.behavior.alert_distance, 3);
    }

    #[test]
    fn p2_presets_are_probabilities() {
        let mut b = BehaviorModel { p2: BehaviorModel::P2_DISTANCING_EXTRA_METRE, ..Default::default() };
        b.validate().unwrap();
        b.p2 = BehaviorModel::P2_SURGICAL_MASK;
        b.validate().unwrap();
    }
}
