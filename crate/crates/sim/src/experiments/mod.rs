//! The four experiments. Each returns plain rows; [`crate::runner`] writes
//! them as CSV.

pub mod attack;
pub mod critical_mass;
pub mod distortion;
pub mod intervention;

pub use attack::{exp_copresence_attack, AttackRow, Verdict};
pub use critical_mass::{exp_critical_mass, CriticalMassRow, CriticalMassTable};
pub use distortion::{exp_distance_distortion, DistortionRow};
pub use intervention::{exp_intervention_impact, InterventionRow};

/// Sample mean and standard deviation (n − 1 denominator).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Normal-approximation 95% interval for the mean.
pub fn ci95(xs: &[f64]) -> (f64, f64) {
    let (m, sd) = mean_sd(xs);
    let h = if xs.is_empty() { 0.0 } else { 1.96 * sd / (xs.len() as f64).sqrt() };
    (m - h, m + h)
}

/// Nearest-rank quantile of sorted data.
pub fn quantile(sorted: &[u32], q: f64) -> Option<u32> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}
