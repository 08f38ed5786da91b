//! Measurement-side analysis of pulse records.
//!
//! Nothing here knows the true model parameters. The efficiency is inferred
//! by assuming the data come from an ideal twin beam, for which the noise
//! reduction factor equals `1 - eta`, and the mode count of each arm from the
//! first two moments of its detected-count distribution,
//! `mu_i = <m_i>^2 / (Var(m_i) - <m_i>)`.
//!
//! All variances use the unbiased `n - 1` convention.

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::montecarlo::{block_stream, PulseRecordSet};
use crate::photon_stats::{MomentSummary, PhotonDist};
use crate::twb_theory::{closed_form_conditional_fano, closed_form_nrf, NrfVariant};
use crate::{Error, Result};

/// Which detector arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Signal,
    Idler,
}

impl Arm {
    fn pick(self, m1: u32, m2: u32) -> u32 {
        match self {
            Arm::Signal => m1,
            Arm::Idler => m2,
        }
    }
}

/// Exact unbiased mean and variance of integer samples.
fn exact_moments(values: impl Iterator<Item = i64>) -> (usize, f64, f64) {
    let (mut n, mut s, mut s2) = (0i128, 0i128, 0i128);
    for v in values {
        let v = i128::from(v);
        n += 1;
        s += v;
        s2 += v * v;
    }
    if n == 0 {
        return (0, f64::NAN, f64::NAN);
    }
    let mean = s as f64 / n as f64;
    let var = if n > 1 {
        (n * s2 - s * s) as f64 / (n * (n - 1)) as f64
    } else {
        f64::NAN
    };
    (n as usize, mean, var)
}

/// Empirical statistics of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub shots: usize,
    pub mean1: f64,
    pub mean2: f64,
    pub var1: f64,
    pub var2: f64,
    pub cov: f64,
    /// Sample variance of `m1 - m2`.
    pub diff_var: f64,
    /// `diff_var / (mean1 + mean2)`.
    pub nrf_hat: f64,
    /// Delta-method standard error of `nrf_hat`.
    pub nrf_se: f64,
    pub fano1: Option<f64>,
    pub fano2: Option<f64>,
}

/// Means, variances, covariance and noise reduction factor of a run.
pub fn summarize(records: &PulseRecordSet) -> Result<RunSummary> {
    let n = records.len();
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 shots, got {n}")));
    }
    let recs = records.records();
    let (_, mean1, var1) = exact_moments(recs.iter().map(|r| i64::from(r.m1)));
    let (_, mean2, var2) = exact_moments(recs.iter().map(|r| i64::from(r.m2)));
    let (_, diff_mean, diff_var) =
        exact_moments(recs.iter().map(|r| i64::from(r.m1) - i64::from(r.m2)));
    let (s1, s2, s12) = recs.iter().fold((0i128, 0i128, 0i128), |(a, b, c), r| {
        let (x, y) = (i128::from(r.m1), i128::from(r.m2));
        (a + x, b + y, c + x * y)
    });
    let nn = n as i128;
    let cov = (nn * s12 - s1 * s2) as f64 / (nn * (nn - 1)) as f64;

    let shot_noise = mean1 + mean2;
    if shot_noise <= 0.0 {
        return Err(Error::Undefined(
            "noise reduction factor: shot-noise level <m1 + m2> is zero".into(),
        ));
    }
    let nrf_hat = diff_var / shot_noise;

    // Influence function of V / S with V = Var(d), S = <m1 + m2>.
    let influence = |r: &crate::montecarlo::PulseRecord| {
        let d = f64::from(r.m1) - f64::from(r.m2) - diff_mean;
        let s = f64::from(r.m1) + f64::from(r.m2) - shot_noise;
        (d * d - diff_var) / shot_noise - nrf_hat * s / shot_noise
    };
    let if_var = recs.iter().map(|r| influence(r).powi(2)).sum::<f64>() / (n - 1) as f64;
    let nrf_se = (if_var / n as f64).sqrt();

    Ok(RunSummary {
        shots: n,
        mean1,
        mean2,
        var1,
        var2,
        cov,
        diff_var,
        nrf_hat,
        nrf_se,
        fano1: MomentSummary::from_moments(mean1, var1).fano,
        fano2: MomentSummary::from_moments(mean2, var2).fano,
    })
}

/// Mode count implied by a multimode thermal marginal with the given moments.
pub fn modes_from_moments(mean: f64, variance: f64) -> Result<f64> {
    let excess = variance - mean;
    if excess.is_nan() || excess <= 0.0 || mean.is_nan() || mean <= 0.0 {
        return Err(Error::Undefined(format!(
            "mode estimator needs a super-Poissonian marginal, got mean {mean} and variance {variance}"
        )));
    }
    Ok(mean * mean / excess)
}

/// Moment estimate of the number of modes seen by one arm.
pub fn estimate_modes(records: &PulseRecordSet, arm: Arm) -> Result<f64> {
    if records.len() < 2 {
        return Err(Error::domain("mode estimation needs at least 2 shots"));
    }
    let (_, mean, var) = exact_moments(records.iter().map(|r| i64::from(arm.pick(r.m1, r.m2))));
    modes_from_moments(mean, var)
}

/// Average of the two arms' mode estimates.
pub fn estimate_modes_mean(records: &PulseRecordSet) -> Result<f64> {
    let a = estimate_modes(records, Arm::Signal)?;
    let b = estimate_modes(records, Arm::Idler)?;
    Ok(0.5 * (a + b))
}

/// Outcome of the efficiency estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaEstimate {
    Estimated(f64),
    /// The data show no sub-shot-noise correlation, so no twin-beam
    /// efficiency can be inferred.
    Classical {
        nrf_hat: f64,
    },
}

impl EtaEstimate {
    pub fn value(&self) -> Option<f64> {
        match *self {
            EtaEstimate::Estimated(eta) => Some(eta),
            EtaEstimate::Classical { .. } => None,
        }
    }
}

/// Efficiency of an ideal twin beam with the measured noise reduction factor.
pub fn estimate_eta(summary: &RunSummary) -> Result<EtaEstimate> {
    let r = summary.nrf_hat;
    if !r.is_finite() || r < 0.0 {
        return Err(Error::Undefined(format!(
            "noise reduction factor {r} is not usable"
        )));
    }
    Ok(if r < 1.0 {
        EtaEstimate::Estimated(1.0 - r)
    } else {
        EtaEstimate::Classical { nrf_hat: r }
    })
}

/// Settings for conditional-state extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditioningConfig {
    pub min_samples: usize,
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        Self {
            min_samples: 100,
            bootstrap_resamples: 200,
            seed: 0,
        }
    }
}

/// Signal counts of the shots that registered a given idler count.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedSample {
    pub m2: u32,
    pub signal_counts: Vec<u32>,
    pub stats: MomentSummary,
    /// Bootstrap standard error of the Fano factor.
    pub fano_se: Option<f64>,
}

fn sample_fano(values: impl Iterator<Item = u32>) -> Option<f64> {
    let (_, mean, var) = exact_moments(values.map(i64::from));
    (mean > 0.0).then(|| var / mean)
}

/// Bootstrap standard error of the Fano factor of `values`.
pub fn bootstrap_fano_se(values: &[u32], resamples: usize, seed: u64) -> Option<f64> {
    if values.len() < 2 || resamples < 2 {
        return None;
    }
    let k = values.len();
    let fanos: Vec<f64> = (0..resamples)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = block_stream(seed, b as u64);
            sample_fano((0..k).map(|_| values[rng.random_range(0..k)]))
        })
        .collect();
    if fanos.len() < 2 {
        return None;
    }
    let mean = fanos.iter().sum::<f64>() / fanos.len() as f64;
    let var = fanos.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (fanos.len() - 1) as f64;
    Some(var.sqrt())
}

/// Keeps the shots with idler count `m2` and summarises their signal counts.
pub fn condition_records(
    records: &PulseRecordSet,
    m2: u32,
    config: &ConditioningConfig,
) -> Result<ConditionedSample> {
    let signal_counts: Vec<u32> = records
        .iter()
        .filter(|r| r.m2 == m2)
        .map(|r| r.m1)
        .collect();
    let required = config.min_samples.max(2);
    if signal_counts.len() < required {
        return Err(Error::InsufficientSamples {
            m2,
            found: signal_counts.len(),
            required,
        });
    }
    let (_, mean, var) = exact_moments(signal_counts.iter().map(|&v| i64::from(v)));
    let stats = MomentSummary::from_moments(mean, var);
    let fano_se = stats.fano.and_then(|_| {
        bootstrap_fano_se(
            &signal_counts,
            config.bootstrap_resamples,
            config.seed ^ u64::from(m2).rotate_left(32),
        )
    });
    Ok(ConditionedSample {
        m2,
        signal_counts,
        stats,
        fano_se,
    })
}

/// Histogram of one arm's counts.
pub fn histogram(records: &PulseRecordSet, arm: Arm) -> Vec<u64> {
    let mut hist = Vec::new();
    for r in records.iter() {
        let v = arm.pick(r.m1, r.m2) as usize;
        if v >= hist.len() {
            hist.resize(v + 1, 0);
        }
        hist[v] += 1;
    }
    hist
}

/// Pearson goodness-of-fit result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareFit {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Minimum expected count per pooled bin.
const MIN_EXPECTED: f64 = 5.0;

/// Pearson chi-square test of an observed histogram against a pmf.
///
/// Adjacent counts are pooled until each bin expects at least five events;
/// the last bin collects everything above the previous ones, including the
/// pmf's omitted tail.
pub fn chi_square_fit(observed: &[u64], expected: &PhotonDist) -> Result<ChiSquareFit> {
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::domain("chi-square fit of an empty histogram"));
    }
    let shots = total as f64;
    let support = observed.len().max(expected.len());

    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut exp_acc, mut obs_acc) = (0.0, 0.0);
    let mut assigned = 0.0;
    for k in 0..support {
        exp_acc += shots * expected.get(k);
        obs_acc += observed.get(k).copied().unwrap_or(0) as f64;
        if exp_acc >= MIN_EXPECTED {
            assigned += exp_acc;
            bins.push((obs_acc, exp_acc));
            exp_acc = 0.0;
            obs_acc = 0.0;
        }
    }
    // Remainder bin: whatever expectation is left, including the tail.
    let rest_exp = (shots - assigned).max(0.0);
    let rest_obs = obs_acc;
    if rest_exp >= MIN_EXPECTED || bins.is_empty() {
        bins.push((rest_obs, rest_exp));
    } else if let Some(last) = bins.last_mut() {
        last.0 += rest_obs;
        last.1 += rest_exp;
    }
    if bins.len() < 2 {
        return Err(Error::domain(
            "chi-square fit needs at least two pooled bins",
        ));
    }
    let statistic = bins
        .iter()
        .map(|&(o, e)| {
            if e > 0.0 {
                (o - e).powi(2) / e
            } else {
                f64::INFINITY
            }
        })
        .sum::<f64>();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map_err(|e| Error::domain(format!("chi-square law: {e}")))?
        .sf(statistic);
    Ok(ChiSquareFit {
        statistic,
        dof,
        p_value,
    })
}

/// Settings for [`self_consistent_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub conditioning: Vec<u32>,
    pub conditioning_config: ConditioningConfig,
    pub nrf_variant: NrfVariant,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            conditioning: vec![1, 2],
            conditioning_config: ConditioningConfig::default(),
            nrf_variant: NrfVariant::Corrected,
        }
    }
}

/// Conditional state statistics for one idler value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalEntry {
    pub m2: u32,
    pub samples: usize,
    pub mean: f64,
    pub fano: Option<f64>,
    pub fano_se: Option<f64>,
}

/// Closed forms evaluated at the estimated parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryOverlay {
    pub detected_mean: f64,
    pub modes: f64,
    pub eta: f64,
    pub nrf_variant: NrfVariant,
    pub nrf: f64,
    pub nrf_printed: f64,
    pub nrf_corrected: f64,
    pub conditional_fano: Vec<(u32, f64)>,
}

/// A failed pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

/// Output of the calibration-free analysis chain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalysisReport {
    pub shots: usize,
    pub summary: Option<RunSummary>,
    pub mu_hat1: Option<f64>,
    pub mu_hat2: Option<f64>,
    pub mu_hat_mean: Option<f64>,
    pub eta_hat: Option<f64>,
    pub conditional: Vec<ConditionalEntry>,
    pub theory: Option<TheoryOverlay>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub errors: Vec<StageError>,
}

impl AnalysisReport {
    fn fail(&mut self, stage: impl Into<String>, err: impl std::fmt::Display) {
        self.errors.push(StageError {
            stage: stage.into(),
            message: err.to_string(),
        });
    }
}

/// Relative spread above which the two arms' mode estimates are flagged.
pub const MODE_DIVERGENCE_WARN: f64 = 0.2;
/// Relative mean imbalance above which a diagnostic note is added.
pub const ARM_IMBALANCE_NOTE: f64 = 0.1;

/// Runs summary, mode and efficiency estimation, conditioning and the
/// closed-form overlay. A failing stage is recorded and the others still run.
pub fn self_consistent_report(records: &PulseRecordSet, config: &AnalysisConfig) -> AnalysisReport {
    let mut report = AnalysisReport {
        shots: records.len(),
        ..Default::default()
    };

    match summarize(records) {
        Ok(s) => report.summary = Some(s),
        Err(e) => report.fail("summarize", e),
    }

    for (arm, stage) in [
        (Arm::Signal, "estimate_modes.signal"),
        (Arm::Idler, "estimate_modes.idler"),
    ] {
        match estimate_modes(records, arm) {
            Ok(mu) => match arm {
                Arm::Signal => report.mu_hat1 = Some(mu),
                Arm::Idler => report.mu_hat2 = Some(mu),
            },
            Err(e) => report.fail(stage, e),
        }
    }
    if let (Some(a), Some(b)) = (report.mu_hat1, report.mu_hat2) {
        let mean = 0.5 * (a + b);
        report.mu_hat_mean = Some(mean);
        if (a - b).abs() / mean > MODE_DIVERGENCE_WARN {
            report.warnings.push(format!(
                "mode estimates of the two arms differ by more than {:.0}%: {a:.6} vs {b:.6}",
                100.0 * MODE_DIVERGENCE_WARN
            ));
        }
    }

    match report.summary {
        Some(s) => {
            match estimate_eta(&s) {
                Ok(EtaEstimate::Estimated(eta)) => report.eta_hat = Some(eta),
                Ok(EtaEstimate::Classical { nrf_hat }) => report.warnings.push(format!(
                    "classical correlations: noise reduction factor {nrf_hat:.6} >= 1, no efficiency estimate"
                )),
                Err(e) => report.fail("estimate_eta", e),
            }
            let avg = 0.5 * (s.mean1 + s.mean2);
            if avg > 0.0 && (s.mean1 - s.mean2).abs() / avg > ARM_IMBALANCE_NOTE {
                report.notes.push(format!(
                    "arm means differ by more than {:.0}% ({:.6} vs {:.6}); a single efficiency is reported",
                    100.0 * ARM_IMBALANCE_NOTE,
                    s.mean1,
                    s.mean2
                ));
            }
        }
        None => report.fail("estimate_eta", "no run summary"),
    }

    for &m2 in &config.conditioning {
        match condition_records(records, m2, &config.conditioning_config) {
            Ok(c) => report.conditional.push(ConditionalEntry {
                m2,
                samples: c.signal_counts.len(),
                mean: c.stats.mean,
                fano: c.stats.fano,
                fano_se: c.fano_se,
            }),
            Err(e) => report.fail(format!("condition.m2={m2}"), e),
        }
    }

    match (&report.summary, report.mu_hat_mean, report.eta_hat) {
        (Some(s), Some(mu), Some(eta)) => match theory_overlay(s, mu, eta, config) {
            Ok(t) => report.theory = Some(t),
            Err(e) => report.fail("theory", e),
        },
        _ => report.fail(
            "theory",
            "needs a run summary, a mode estimate and an efficiency estimate",
        ),
    }
    report
}

fn theory_overlay(
    s: &RunSummary,
    modes: f64,
    eta: f64,
    config: &AnalysisConfig,
) -> Result<TheoryOverlay> {
    let nrf_printed = closed_form_nrf(s.mean1, s.mean2, eta, modes, NrfVariant::Printed)?;
    let nrf_corrected = closed_form_nrf(s.mean1, s.mean2, eta, modes, NrfVariant::Corrected)?;
    let conditional_fano = config
        .conditioning
        .iter()
        .map(|&m2| closed_form_conditional_fano(s.mean1, modes, eta, m2).map(|f| (m2, f)))
        .collect::<Result<_>>()?;
    Ok(TheoryOverlay {
        detected_mean: s.mean1,
        modes,
        eta,
        nrf_variant: config.nrf_variant,
        nrf: match config.nrf_variant {
            NrfVariant::Printed => nrf_printed,
            NrfVariant::Corrected => nrf_corrected,
        },
        nrf_printed,
        nrf_corrected,
        conditional_fano,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::Provenance;

    fn set(pairs: &[(u32, u32)]) -> PulseRecordSet {
        PulseRecordSet::from_pairs(
            pairs.iter().copied(),
            Provenance::File {
                source: "test".into(),
            },
        )
    }

    #[test]
    fn perfectly_correlated_records_have_zero_nrf() {
        let s = summarize(&set(&[(1, 1), (3, 3), (0, 0), (2, 2)])).unwrap();
        assert_eq!(s.nrf_hat, 0.0);
        assert!((s.cov - s.var1).abs() < 1e-15);
    }

    #[test]
    fn all_zero_records_are_an_error() {
        assert!(matches!(
            summarize(&set(&[(0, 0), (0, 0), (0, 0)])),
            Err(Error::Undefined(_))
        ));
        assert!(summarize(&set(&[(1, 1)])).is_err());
    }

    #[test]
    fn summary_uses_unbiased_variances() {
        let s = summarize(&set(&[(0, 1), (2, 1), (4, 4)])).unwrap();
        assert!((s.mean1 - 2.0).abs() < 1e-15);
        assert!((s.var1 - 4.0).abs() < 1e-15);
        assert!((s.var2 - 3.0).abs() < 1e-15);
        assert!((s.cov - 3.0).abs() < 1e-15);
        // d = (-1, 1, 0): mean 0, unbiased variance 1
        assert!((s.diff_var - 1.0).abs() < 1e-15);
        assert!((s.nrf_hat - 1.0 / 4.0).abs() < 1e-15);
        assert!(s.cov.abs() <= (s.var1 * s.var2).sqrt());
    }

    #[test]
    fn mode_estimator_inverts_thermal_moments() {
        for m in [0.1, 0.7, 3.2] {
            assert!((modes_from_moments(m, m * (1.0 + m)).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            modes_from_moments(1.0, 1.0),
            Err(Error::Undefined(_))
        ));
        assert!(matches!(
            modes_from_moments(1.0, 0.5),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn eta_estimator_boundaries() {
        let mut s = summarize(&set(&[(0, 1), (2, 1), (4, 4)])).unwrap();
        s.nrf_hat = 0.85;
        assert!((estimate_eta(&s).unwrap().value().unwrap() - 0.15).abs() < 1e-15);
        s.nrf_hat = 1.02;
        assert_eq!(
            estimate_eta(&s).unwrap(),
            EtaEstimate::Classical { nrf_hat: 1.02 }
        );
        s.nrf_hat = f64::NAN;
        assert!(estimate_eta(&s).is_err());
    }

    #[test]
    fn conditioning_filters_on_idler() {
        let cfg = ConditioningConfig {
            min_samples: 2,
            ..Default::default()
        };
        let c = condition_records(&set(&[(2, 1), (0, 0), (3, 1)]), 1, &cfg).unwrap();
        assert_eq!(c.signal_counts, vec![2, 3]);
        assert!((c.stats.mean - 2.5).abs() < 1e-15);
        let err = condition_records(&set(&[(2, 1), (0, 0)]), 4, &cfg).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples {
                m2: 4,
                found: 0,
                ..
            }
        ));
    }

    #[test]
    fn conditioning_respects_min_samples() {
        let pairs: Vec<_> = (0..99).map(|i| (i % 3, 1)).collect();
        let err = condition_records(&set(&pairs), 1, &ConditioningConfig::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSamples {
                found: 99,
                required: 100,
                ..
            }
        ));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let values: Vec<u32> = (0..500).map(|i| (i * 7 % 5) as u32).collect();
        let a = bootstrap_fano_se(&values, 200, 5).unwrap();
        let b = bootstrap_fano_se(&values, 200, 5).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
        assert!(bootstrap_fano_se(&[3], 200, 5).is_none());
    }

    #[test]
    fn chi_square_accepts_exact_histogram() {
        let d = crate::photon_stats::nb_dist(2.0, 3.0, 1e-12).unwrap();
        let shots = 100_000.0;
        let observed: Vec<u64> = d
            .probs()
            .iter()
            .map(|p| (p * shots).round() as u64)
            .collect();
        let fit = chi_square_fit(&observed, &d).unwrap();
        assert!(fit.p_value > 0.99, "{fit:?}");
        let mut skewed = observed.clone();
        skewed[0] += 5000;
        assert!(chi_square_fit(&skewed, &d).unwrap().p_value < 1e-6);
    }

    #[test]
    fn zero_file_report_has_only_errors() {
        let report = self_consistent_report(&set(&[(0, 0); 500]), &AnalysisConfig::default());
        assert!(report.summary.is_none());
        assert!(report.mu_hat1.is_none() && report.mu_hat2.is_none());
        assert!(report.eta_hat.is_none());
        assert!(report.conditional.is_empty());
        assert!(report.theory.is_none());
        let stages: Vec<_> = report.errors.iter().map(|e| e.stage.as_str()).collect();
        assert!(stages.contains(&"summarize"));
        assert!(stages.contains(&"condition.m2=1"));
        assert!(stages.contains(&"theory"));
    }
}
