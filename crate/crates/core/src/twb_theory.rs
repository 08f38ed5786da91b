//! Exact detection model of a multimode twin beam and the closed-form
//! predictions derived from it.
//!
//! Both arms carry the same photon number `n`, drawn from the multimode
//! thermal distribution, and each arm registers every photon independently
//! with its own efficiency. The detected-pair distribution is therefore
//!
//! ```text
//! P(m1, m2) = sum_n p(n) · B(m1 | n, eta1) · B(m2 | n, eta2)
//! ```
//!
//! Everything in this module that is called `exact_*` is evaluated from that
//! enumeration and is the reference against which the closed forms, the Monte
//! Carlo sampler and the estimators are checked.

use std::fmt;
use std::str::FromStr;

use crate::numeric::{binomial_row, kahan_sum, KahanSum};
use crate::photon_stats::{
    check_nb_domain, dist_stats, nb_dist_with_support, truncation_length, NbTerms, PhotonDist,
    MAX_SUPPORT,
};
use crate::{Error, Result};

/// A point of the twin-beam model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwbParams {
    mean_photons: f64,
    modes: f64,
    eta1: f64,
    eta2: f64,
}

fn check_eta(name: &str, eta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {eta} outside [0, 1]")))
    }
}

impl TwbParams {
    /// `mean_photons` is the mean photon number per arm before detection,
    /// `eta1` the signal-arm and `eta2` the idler-arm efficiency.
    pub fn new(mean_photons: f64, modes: f64, eta1: f64, eta2: f64) -> Result<Self> {
        check_nb_domain(mean_photons, modes)?;
        check_eta("eta1", eta1)?;
        check_eta("eta2", eta2)?;
        Ok(Self {
            mean_photons,
            modes,
            eta1,
            eta2,
        })
    }

    pub fn balanced(mean_photons: f64, modes: f64, eta: f64) -> Result<Self> {
        Self::new(mean_photons, modes, eta, eta)
    }

    /// Builds the point whose detected mean is `detected_mean` at the
    /// effective efficiency `sqrt(eta1 · eta2)`.
    pub fn from_detected_mean(
        detected_mean: f64,
        modes: f64,
        eta1: f64,
        eta2: f64,
    ) -> Result<Self> {
        check_eta("eta1", eta1)?;
        check_eta("eta2", eta2)?;
        if !(detected_mean.is_finite() && detected_mean >= 0.0) {
            return Err(Error::domain(format!(
                "detected mean must be finite and >= 0, got {detected_mean}"
            )));
        }
        let eta = (eta1 * eta2).sqrt();
        let mean_photons = if detected_mean == 0.0 {
            0.0
        } else if eta > 0.0 {
            detected_mean / eta
        } else {
            return Err(Error::domain(
                "a positive detected mean needs a positive efficiency",
            ));
        };
        Self::new(mean_photons, modes, eta1, eta2)
    }

    pub fn mean_photons(&self) -> f64 {
        self.mean_photons
    }

    pub fn modes(&self) -> f64 {
        self.modes
    }

    pub fn eta1(&self) -> f64 {
        self.eta1
    }

    pub fn eta2(&self) -> f64 {
        self.eta2
    }

    /// Detected means `(eta1 · N, eta2 · N)`.
    pub fn detected_means(&self) -> (f64, f64) {
        (self.eta1 * self.mean_photons, self.eta2 * self.mean_photons)
    }

    /// Single efficiency used by the closed forms: `sqrt(eta1 · eta2)`.
    pub fn effective_eta(&self) -> f64 {
        (self.eta1 * self.eta2).sqrt()
    }

    /// Detected mean at the effective efficiency.
    pub fn detected_mean(&self) -> f64 {
        self.effective_eta() * self.mean_photons
    }

    pub fn is_balanced(&self) -> bool {
        self.eta1 == self.eta2
    }
}

/// Truncated joint pmf of detected pairs `(m1, m2)`.
#[derive(Debug, Clone)]
pub struct JointDist {
    dim: usize,
    /// Row-major in `m1`.
    probs: Vec<f64>,
    tail_bound: f64,
}

/// First and second moments of a [`JointDist`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointMoments {
    pub mean1: f64,
    pub mean2: f64,
    pub var1: f64,
    pub var2: f64,
    pub cov: f64,
    /// Variance of `m1 - m2`.
    pub diff_var: f64,
}

impl JointDist {
    /// Both counts range over `0..dim`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn get(&self, m1: usize, m2: usize) -> f64 {
        if m1 < self.dim && m2 < self.dim {
            self.probs[m1 * self.dim + m2]
        } else {
            0.0
        }
    }

    pub fn total_mass(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }

    /// Mass of the column `m2`, i.e. the probability of that idler outcome.
    pub fn idler_mass(&self, m2: usize) -> f64 {
        if m2 >= self.dim {
            return 0.0;
        }
        kahan_sum((0..self.dim).map(|m1| self.probs[m1 * self.dim + m2]))
    }

    pub fn signal_marginal(&self) -> PhotonDist {
        let probs = self
            .probs
            .chunks_exact(self.dim)
            .map(|row| kahan_sum(row.iter().copied()).min(1.0))
            .collect();
        PhotonDist::from_parts(probs, self.tail_bound)
    }

    pub fn idler_marginal(&self) -> PhotonDist {
        let probs = (0..self.dim)
            .map(|m2| self.idler_mass(m2).min(1.0))
            .collect();
        PhotonDist::from_parts(probs, self.tail_bound)
    }

    /// Moments of the stored (renormalised) table.
    pub fn moments(&self) -> JointMoments {
        let dim = self.dim;
        let cells = || {
            self.probs
                .iter()
                .enumerate()
                .map(move |(i, &p)| ((i / dim) as f64, (i % dim) as f64, p))
        };
        let mass = self.total_mass();
        let mean1 = kahan_sum(cells().map(|(a, _, p)| a * p)) / mass;
        let mean2 = kahan_sum(cells().map(|(_, b, p)| b * p)) / mass;
        let mut var1 = KahanSum::new();
        let mut var2 = KahanSum::new();
        let mut cov = KahanSum::new();
        let mut diff = KahanSum::new();
        let diff_mean = mean1 - mean2;
        for (a, b, p) in cells() {
            if p == 0.0 {
                continue;
            }
            let (da, db) = (a - mean1, b - mean2);
            var1.add(da * da * p);
            var2.add(db * db * p);
            cov.add(da * db * p);
            let dd = a - b - diff_mean;
            diff.add(dd * dd * p);
        }
        JointMoments {
            mean1,
            mean2,
            var1: var1.value() / mass,
            var2: var2.value() / mass,
            cov: cov.value() / mass,
            diff_var: diff.value() / mass,
        }
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1e-6 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "truncation tolerance must lie in (0, 1e-6], got {eps}"
        )))
    }
}

/// Largest photon number enumerated by the joint model.
///
/// Beyond the `1 - eps` mass cutoff, the support is extended until the
/// omitted second moment `sum_{k > n} k^2 p(k)` is also below `eps`, so that
/// covariances read off the table carry truncation errors of order `eps`.
pub fn joint_support(params: &TwbParams, eps: f64) -> Result<usize> {
    check_eps(eps)?;
    let (mean, modes) = (params.mean_photons, params.modes);
    if mean == 0.0 {
        return Ok(0);
    }
    let start = truncation_length(mean, modes, eps)?;
    let terms = NbTerms::new(mean, modes);
    let q = mean / (mean + modes);
    // p(start + 1)
    let mut p_next = terms.clone().nth(start + 1).unwrap_or(0.0);
    let mut n = start;
    while n < MAX_SUPPORT {
        let k = (n + 1) as f64;
        let r = (k + 1.0) * (k + modes) / (k * k) * q;
        if r < 1.0 && k * k * p_next / (1.0 - r) <= eps {
            return Ok(n);
        }
        p_next *= terms.ratio(n as u64 + 1);
        n += 1;
    }
    Err(Error::domain(format!(
        "joint support for N = {mean}, mu = {modes} exceeds {MAX_SUPPORT}"
    )))
}

/// Exact truncated joint pmf of detected pairs.
pub fn joint_detected_pmf(params: &TwbParams, eps: f64) -> Result<JointDist> {
    let n_max = joint_support(params, eps)?;
    let photons = nb_dist_with_support(params.mean_photons, params.modes, n_max);
    let dim = n_max + 1;
    let mut probs = vec![0.0; dim * dim];
    for (n, &p) in photons.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let (f1, row1) = binomial_row(n, params.eta1);
        let (f2, row2) = binomial_row(n, params.eta2);
        for (i, &b1) in row1.iter().enumerate() {
            let w = p * b1;
            let start = (f1 + i) * dim + f2;
            for (cell, &b2) in probs[start..start + row2.len()].iter_mut().zip(&row2) {
                *cell += w * b2;
            }
        }
    }
    Ok(JointDist {
        dim,
        probs,
        tail_bound: photons.tail_bound(),
    })
}

/// Signal-arm distribution conditioned on `m2` idler counts.
pub fn conditional_signal_pmf(joint: &JointDist, m2: u32) -> Result<PhotonDist> {
    let col = m2 as usize;
    let mass = joint.idler_mass(col);
    if mass <= 0.0 {
        return Err(Error::ZeroHeralding { m2 });
    }
    let probs = (0..joint.dim)
        .map(|m1| (joint.get(m1, col) / mass).min(1.0))
        .collect();
    let tail = (joint.tail_bound / (mass + joint.tail_bound)).min(1.0);
    Ok(PhotonDist::from_parts(probs, tail))
}

/// Unnormalised weights `p(n) · B(m2 | n, eta2)` over the joint support.
fn herald_weights(params: &TwbParams, m2: u32, eps: f64) -> Result<(Vec<f64>, f64)> {
    let n_max = joint_support(params, eps)?;
    let photons = nb_dist_with_support(params.mean_photons, params.modes, n_max);
    let k = m2 as usize;
    let weights = photons
        .probs()
        .iter()
        .enumerate()
        .map(|(n, &p)| {
            if n < k || p == 0.0 {
                return 0.0;
            }
            let (first, row) = binomial_row(n, params.eta2);
            k.checked_sub(first)
                .and_then(|i| row.get(i))
                .map_or(0.0, |b| p * b)
        })
        .collect();
    Ok((weights, photons.tail_bound()))
}

/// Photon-number distribution in the signal arm, before signal-arm loss,
/// given `m2` idler counts.
pub fn photon_posterior(params: &TwbParams, m2: u32, eps: f64) -> Result<PhotonDist> {
    let (weights, tail) = herald_weights(params, m2, eps)?;
    let mass = kahan_sum(weights.iter().copied());
    if mass <= 0.0 {
        return Err(Error::ZeroHeralding { m2 });
    }
    let probs = weights.iter().map(|w| (w / mass).min(1.0)).collect();
    Ok(PhotonDist::from_parts(
        probs,
        (tail / (mass + tail)).min(1.0),
    ))
}

/// Probability of registering exactly `m2` idler counts.
pub fn heralding_probability(params: &TwbParams, m2: u32, eps: f64) -> Result<f64> {
    let (weights, _) = herald_weights(params, m2, eps)?;
    Ok(kahan_sum(weights).clamp(0.0, 1.0))
}

/// Fano factor of the signal counts conditioned on `m2` idler counts,
/// evaluated from the exact joint distribution.
pub fn exact_conditional_fano(params: &TwbParams, m2: u32, eps: f64) -> Result<f64> {
    let joint = joint_detected_pmf(params, eps)?;
    conditional_fano_from_joint(&joint, m2, eps)
}

/// As [`exact_conditional_fano`], reusing an already enumerated joint pmf.
pub fn conditional_fano_from_joint(joint: &JointDist, m2: u32, eps: f64) -> Result<f64> {
    let herald = joint.idler_mass(m2 as usize);
    if herald <= 0.0 {
        return Err(Error::ZeroHeralding { m2 });
    }
    if herald <= 10.0 * eps {
        return Err(Error::domain(format!(
            "heralding probability {herald:e} of m2 = {m2} is within 10 eps of the truncation error"
        )));
    }
    let conditional = conditional_signal_pmf(joint, m2)?;
    dist_stats(&conditional)?
        .fano
        .ok_or_else(|| Error::Undefined(format!("conditional state for m2 = {m2} has zero mean")))
}

/// Closed-form conditional Fano factor of the signal arm after detecting `m2`
/// idler counts, for detected mean `M`, `mu` modes and equal efficiency `eta`:
///
/// ```text
/// F = (1 - eta) M (m2 + mu)(M + eta mu)
///     / { (M + mu) [ (m2 + mu)(M + eta mu) - eta mu (M + mu) + 1 ] }
/// ```
///
/// Kept as a reference curve; [`exact_conditional_fano`] is authoritative.
pub fn closed_form_conditional_fano(
    detected_mean: f64,
    modes: f64,
    eta: f64,
    m2: u32,
) -> Result<f64> {
    if !(detected_mean.is_finite() && detected_mean >= 0.0) {
        return Err(Error::domain(format!(
            "detected mean {detected_mean} must be >= 0"
        )));
    }
    if !(modes.is_finite() && modes > 0.0) {
        return Err(Error::domain(format!("mode count {modes} must be > 0")));
    }
    check_eta("eta", eta)?;
    let (m, mu, k) = (detected_mean, modes, f64::from(m2));
    let den = (m + mu) * ((k + mu) * (m + eta * mu) - eta * mu * (m + mu) + 1.0);
    if !den.is_finite() || den.abs() < f64::MIN_POSITIVE {
        return Err(Error::domain(format!(
            "closed-form Fano denominator vanishes at M = {m}, mu = {mu}, eta = {eta}, m2 = {m2}"
        )));
    }
    Ok((1.0 - eta) * m * (k + mu) * (m + eta * mu) / den)
}

/// Which third term of the closed-form noise reduction factor to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NrfVariant {
    /// `(<m1> <m2>)^2 / (mu (<m1> + <m2>))`, as originally published.
    Printed,
    /// `(<m1> - <m2>)^2 / (mu (<m1> + <m2>))`, which matches the exact model.
    #[default]
    Corrected,
}

impl fmt::Display for NrfVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NrfVariant::Printed => "printed",
            NrfVariant::Corrected => "corrected",
        })
    }
}

impl FromStr for NrfVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(NrfVariant::Printed),
            "corrected" => Ok(NrfVariant::Corrected),
            other => Err(Error::domain(format!(
                "unknown noise-reduction variant {other:?} (expected printed or corrected)"
            ))),
        }
    }
}

/// Closed-form multimode noise reduction factor
///
/// ```text
/// R = 1 - 2 eta sqrt(<m1><m2>) / (<m1> + <m2>) + T / (mu (<m1> + <m2>))
/// ```
///
/// with `T` chosen by `variant`.
pub fn closed_form_nrf(
    mean1: f64,
    mean2: f64,
    eta: f64,
    modes: f64,
    variant: NrfVariant,
) -> Result<f64> {
    if !(mean1 >= 0.0 && mean2 >= 0.0 && mean1.is_finite() && mean2.is_finite()) {
        return Err(Error::domain(format!(
            "detected means ({mean1}, {mean2}) must be >= 0"
        )));
    }
    let total = mean1 + mean2;
    if total <= 0.0 {
        return Err(Error::domain(
            "noise reduction factor undefined at zero total mean",
        ));
    }
    if !(modes.is_finite() && modes > 0.0) {
        return Err(Error::domain(format!("mode count {modes} must be > 0")));
    }
    check_eta("eta", eta)?;
    let third = match variant {
        NrfVariant::Printed => (mean1 * mean2).powi(2),
        NrfVariant::Corrected => (mean1 - mean2).powi(2),
    };
    Ok(1.0 - 2.0 * eta * (mean1 * mean2).sqrt() / total + third / (modes * total))
}

/// Noise reduction factor `Var(m1 - m2) / <m1 + m2>` of the exact model.
pub fn exact_nrf(params: &TwbParams, eps: f64) -> Result<f64> {
    check_nrf_domain(params)?;
    nrf_from_joint(&joint_detected_pmf(params, eps)?)
}

fn check_nrf_domain(params: &TwbParams) -> Result<()> {
    if params.mean_photons <= 0.0 {
        return Err(Error::domain("noise reduction factor needs N > 0"));
    }
    if params.eta1 == 0.0 && params.eta2 == 0.0 {
        return Err(Error::domain(
            "noise reduction factor needs a positive efficiency",
        ));
    }
    Ok(())
}

/// Noise reduction factor read off an enumerated joint pmf.
pub fn nrf_from_joint(joint: &JointDist) -> Result<f64> {
    let m = joint.moments();
    let shot_noise = m.mean1 + m.mean2;
    if shot_noise.is_nan() || shot_noise <= 0.0 {
        return Err(Error::domain("zero shot-noise level"));
    }
    Ok(m.diff_var / shot_noise)
}

/// Fano factor of detected counts for light of photon Fano factor
/// `fano_photons` seen through Bernoulli loss: `eta F_n + (1 - eta)`.
pub fn fano_detected_relation(fano_photons: f64, eta: f64) -> Result<f64> {
    if !(fano_photons.is_finite() && fano_photons >= 0.0) {
        return Err(Error::domain(format!(
            "photon Fano factor {fano_photons} must be >= 0"
        )));
    }
    check_eta("eta", eta)?;
    Ok(eta * fano_photons + (1.0 - eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_stats::{binomial_thin, nb_dist, nb_pmf};

    const EPS: f64 = 1e-12;

    #[test]
    fn params_validation() {
        assert!(TwbParams::new(-1.0, 1.0, 0.5, 0.5).is_err());
        assert!(TwbParams::new(1.0, 0.0, 0.5, 0.5).is_err());
        assert!(TwbParams::new(1.0, 1.0, 1.5, 0.5).is_err());
        assert!(TwbParams::new(1.0, 1.0, 0.5, -0.5).is_err());
        let p = TwbParams::from_detected_mean(1.0, 10.0, 0.15, 0.15).unwrap();
        assert!((p.mean_photons() - 1.0 / 0.15).abs() < 1e-12);
        assert!(TwbParams::from_detected_mean(1.0, 10.0, 0.0, 0.0).is_err());
        assert_eq!(
            TwbParams::from_detected_mean(0.0, 10.0, 0.0, 0.0)
                .unwrap()
                .mean_photons(),
            0.0
        );
    }

    #[test]
    fn perfect_detection_is_diagonal() {
        let p = TwbParams::balanced(1.5, 3.0, 1.0).unwrap();
        let j = joint_detected_pmf(&p, EPS).unwrap();
        for a in 0..j.dim() {
            for b in 0..j.dim() {
                if a == b {
                    let expected = nb_pmf(a as u64, 1.5, 3.0).unwrap();
                    assert!((j.get(a, b) - expected).abs() < 1e-14);
                } else {
                    assert_eq!(j.get(a, b), 0.0);
                }
            }
        }
    }

    #[test]
    fn joint_is_normalised() {
        for &(n, mu, e1, e2) in &[
            (1.0, 2.0, 0.5, 0.5),
            (5.0, 1.0, 0.3, 0.07),
            (0.2, 40.0, 0.9, 0.1),
        ] {
            let j = joint_detected_pmf(&TwbParams::new(n, mu, e1, e2).unwrap(), EPS).unwrap();
            let mass = j.total_mass();
            assert!((1.0 - EPS..=1.0 + 1e-14).contains(&mass), "{mass}");
            assert!(j.tail_bound() <= EPS);
        }
    }

    #[test]
    fn marginal_matches_thinning_closure() {
        let p = TwbParams::balanced(1.0, 2.0, 0.5).unwrap();
        let j = joint_detected_pmf(&p, EPS).unwrap();
        for (m, &v) in j.signal_marginal().probs().iter().enumerate() {
            assert!((v - nb_pmf(m as u64, 0.5, 2.0).unwrap()).abs() < 1e-10);
        }
        let thinned = binomial_thin(&nb_dist(1.0, 2.0, EPS).unwrap(), 0.5).unwrap();
        for (m, &v) in j.idler_marginal().probs().iter().enumerate() {
            assert!((v - thinned.get(m)).abs() <= 2.0 * EPS);
        }
    }

    #[test]
    fn covariance_law_on_small_instances() {
        for &(n, mu, e1, e2) in &[
            (1.0, 2.0, 0.5, 0.5),
            (2.0, 5.0, 0.3, 0.075),
            (0.7, 1.3, 0.9, 0.2),
        ] {
            let p = TwbParams::new(n, mu, e1, e2).unwrap();
            let m = joint_detected_pmf(&p, EPS).unwrap().moments();
            let expected = e1 * e2 * n * (1.0 + n / mu);
            assert!((m.cov - expected).abs() < 1e-9, "{} vs {expected}", m.cov);
        }
    }

    #[test]
    fn conditioning_on_perfect_detection_gives_fock_state() {
        let p = TwbParams::balanced(2.0, 4.0, 1.0).unwrap();
        let j = joint_detected_pmf(&p, EPS).unwrap();
        let c = conditional_signal_pmf(&j, 3).unwrap();
        assert!((c.get(3) - 1.0).abs() < 1e-15);
        assert!((c.mass() - 1.0).abs() < 1e-15);
        assert_eq!(exact_conditional_fano(&p, 3, EPS).unwrap(), 0.0);
    }

    #[test]
    fn conditioning_on_blind_idler_returns_marginal() {
        let p = TwbParams::new(2.0, 3.0, 0.4, 0.0).unwrap();
        let j = joint_detected_pmf(&p, EPS).unwrap();
        let c = conditional_signal_pmf(&j, 0).unwrap();
        let marginal = binomial_thin(&nb_dist(2.0, 3.0, EPS).unwrap(), 0.4).unwrap();
        for m in 0..c.len() {
            assert!((c.get(m) - marginal.get(m)).abs() < 1e-11);
        }
        assert!(matches!(
            conditional_signal_pmf(&j, 1),
            Err(Error::ZeroHeralding { m2: 1 })
        ));
    }

    /// Independent oracle: conditioning a negative binomial on k binomial
    /// detections leaves n - k negative binomial with shape mu + k and
    /// success ratio q (1 - eta2), q = N / (N + mu).
    fn posterior_fano_closed(n: f64, mu: f64, eta1: f64, eta2: f64, k: u32) -> f64 {
        let q = n / (n + mu) * (1.0 - eta2);
        let shape = mu + f64::from(k);
        let mean_j = shape * q / (1.0 - q);
        let var_j = mean_j / (1.0 - q);
        let mean_n = f64::from(k) + mean_j;
        let mean_m = eta1 * mean_n;
        let var_m = eta1 * eta1 * var_j + eta1 * (1.0 - eta1) * mean_n;
        var_m / mean_m
    }

    #[test]
    fn conditional_fano_matches_posterior_closed_form() {
        for &(mm, mu, k) in &[
            (1.0, 10.0, 1u32),
            (0.5, 2.0, 2),
            (3.2, 100.0, 1),
            (2.0, 10.0, 0),
        ] {
            let p = TwbParams::from_detected_mean(mm, mu, 0.15, 0.15).unwrap();
            let exact = exact_conditional_fano(&p, k, EPS).unwrap();
            let oracle = posterior_fano_closed(p.mean_photons(), mu, 0.15, 0.15, k);
            assert!((exact - oracle).abs() < 1e-9, "{exact} vs {oracle}");
        }
    }

    #[test]
    fn spot_value_exact_near_unity_at_unit_detected_mean() {
        // M = 1, mu = 10, eta = 0.15, m2 = 1: enumeration gives 1.04318181...,
        // far from the closed-form 0.177083.
        let p = TwbParams::balanced(20.0 / 3.0, 10.0, 0.15).unwrap();
        let exact = exact_conditional_fano(&p, 1, EPS).unwrap();
        assert!((exact - 1.043_181_818_181_818).abs() < 1e-9, "{exact}");
    }

    #[test]
    fn vanishing_efficiency_drives_fano_to_one() {
        let p = TwbParams::balanced(5.0, 3.0, 1e-6).unwrap();
        let f = exact_conditional_fano(&p, 0, EPS).unwrap();
        assert!((f - 1.0).abs() < 1e-5, "{f}");
    }

    #[test]
    fn closed_form_fano_values() {
        let f = closed_form_conditional_fano(1.0, 10.0, 0.15, 1).unwrap();
        assert!((f - 23.375 / 132.0).abs() < 1e-15);
        assert!((f - 0.1770833).abs() < 1e-7);
        assert_eq!(closed_form_conditional_fano(2.0, 7.0, 1.0, 3).unwrap(), 0.0);
        let low = closed_form_conditional_fano(0.5, 10.0, 0.15, 1).unwrap();
        let high = closed_form_conditional_fano(2.0, 10.0, 0.15, 1).unwrap();
        assert!(low < high);
        assert!(closed_form_conditional_fano(-1.0, 10.0, 0.15, 1).is_err());
    }

    #[test]
    fn closed_form_nrf_values() {
        let r = closed_form_nrf(0.5, 0.5, 0.15, 10.0, NrfVariant::Corrected).unwrap();
        assert!((r - 0.85).abs() < 1e-15);
        let r = closed_form_nrf(0.6, 0.4, 0.15, 10.0, NrfVariant::Corrected).unwrap();
        assert!((r - 0.857_030_6).abs() < 1e-7);
        let m = 0.8;
        let printed = closed_form_nrf(m, m, 0.15, 10.0, NrfVariant::Printed).unwrap();
        let corrected = closed_form_nrf(m, m, 0.15, 10.0, NrfVariant::Corrected).unwrap();
        assert!((printed - corrected - m.powi(4) / (2.0 * m * 10.0)).abs() < 1e-15);
        assert!(closed_form_nrf(0.0, 0.0, 0.15, 10.0, NrfVariant::Corrected).is_err());
        assert_eq!(NrfVariant::default(), NrfVariant::Corrected);
        assert_eq!(
            "printed".parse::<NrfVariant>().unwrap(),
            NrfVariant::Printed
        );
        assert!("other".parse::<NrfVariant>().is_err());
    }

    #[test]
    fn exact_nrf_limits() {
        let p = TwbParams::balanced(2.0, 5.0, 0.3).unwrap();
        assert!((exact_nrf(&p, EPS).unwrap() - 0.7).abs() < 1e-9);
        let p = TwbParams::balanced(2.0, 5.0, 1.0).unwrap();
        assert!(exact_nrf(&p, EPS).unwrap().abs() < 1e-12);
        assert!(exact_nrf(&TwbParams::balanced(0.0, 5.0, 0.3).unwrap(), EPS).is_err());
        assert!(exact_nrf(&TwbParams::balanced(1.0, 5.0, 0.0).unwrap(), EPS).is_err());
    }

    #[test]
    fn exact_nrf_unbalanced_matches_corrected_closed_form() {
        let p = TwbParams::new(2.0, 5.0, 0.3, 0.075).unwrap();
        let exact = exact_nrf(&p, EPS).unwrap();
        let (m1, m2) = p.detected_means();
        let closed =
            closed_form_nrf(m1, m2, p.effective_eta(), 5.0, NrfVariant::Corrected).unwrap();
        assert!((exact - closed).abs() < 1e-9, "{exact} vs {closed}");
        assert!(exact >= 1.0 - p.effective_eta());
    }

    #[test]
    fn detected_fano_relation_values() {
        assert_eq!(fano_detected_relation(1.0, 0.37).unwrap(), 1.0);
        assert_eq!(fano_detected_relation(2.5, 0.0).unwrap(), 1.0);
        assert!((fano_detected_relation(0.0, 0.15).unwrap() - 0.85).abs() < 1e-15);
        assert!(fano_detected_relation(-1.0, 0.15).is_err());
        assert!(fano_detected_relation(1.0, 1.15).is_err());
    }

    #[test]
    fn heralding_examples() {
        let vac = TwbParams::balanced(0.0, 3.0, 0.5).unwrap();
        assert_eq!(heralding_probability(&vac, 1, EPS).unwrap(), 0.0);
        let p = TwbParams::balanced(1.0, 1.0, 0.15).unwrap();
        let h = heralding_probability(&p, 1, EPS).unwrap();
        assert!((h - 0.15 / 1.3225).abs() < 1e-12);
        let p = TwbParams::new(3.0, 2.5, 0.2, 0.4).unwrap();
        let total: f64 = (0..200)
            .map(|k| heralding_probability(&p, k, EPS).unwrap())
            .sum();
        assert!((total - 1.0).abs() <= EPS);
    }

    #[test]
    fn heralding_agrees_with_joint_column() {
        let p = TwbParams::new(3.0, 2.5, 0.2, 0.4).unwrap();
        let j = joint_detected_pmf(&p, EPS).unwrap();
        for k in 0..6 {
            let h = heralding_probability(&p, k, EPS).unwrap();
            assert!((h - j.idler_mass(k as usize)).abs() < 1e-14);
        }
    }

    #[test]
    fn joint_support_extends_for_second_moment() {
        let p = TwbParams::balanced(21.3, 1.0, 0.5).unwrap();
        let mass_only = truncation_length(21.3, 1.0, EPS).unwrap();
        assert!(joint_support(&p, EPS).unwrap() > mass_only);
    }
}
