//! Photon-counting distribution algebra.
//!
//! The multimode thermal distribution of `N` mean photons spread over `mu`
//! equally populated modes is the negative binomial
//!
//! ```text
//! p(n) = Γ(n + mu) / (n! Γ(mu)) · (1 + N/mu)^(-mu) · (1 + mu/N)^(-n)
//! ```
//!
//! `mu` may be any positive real. Distributions are truncated at the smallest
//! support that leaves at most `eps` of the mass behind, and the omitted mass
//! travels with the distribution as `tail_bound`.

use crate::numeric::{binomial_row, kahan_sum, ln_rising_coefficient, KahanSum};
use crate::{Error, Result};

/// Default truncation tolerance for exact enumerations.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Largest support any truncated distribution may need before we give up.
pub(crate) const MAX_SUPPORT: usize = 20_000_000;

/// Slack allowed when checking that a pmf does not exceed unit mass.
const MASS_SLACK: f64 = 1e-15;

/// A truncated probability mass function over counts `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDist {
    probs: Vec<f64>,
    tail_bound: f64,
}

impl PhotonDist {
    /// Builds a distribution, checking that every entry is a probability and
    /// that the entries plus `tail_bound` account for unit mass.
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("empty pmf"));
        }
        if !(0.0..=1.0).contains(&tail_bound) {
            return Err(Error::domain(format!(
                "tail bound {tail_bound} outside [0, 1]"
            )));
        }
        if let Some((n, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::domain(format!("pmf entry {n} = {p} outside [0, 1]")));
        }
        let mass = kahan_sum(probs.iter().copied());
        if mass > 1.0 + MASS_SLACK {
            return Err(Error::domain(format!("pmf mass {mass} exceeds 1")));
        }
        if mass + tail_bound < 1.0 - MASS_SLACK {
            return Err(Error::domain(format!(
                "pmf mass {mass} plus tail bound {tail_bound} falls short of 1"
            )));
        }
        Ok(Self { probs, tail_bound })
    }

    pub(crate) fn from_parts(probs: Vec<f64>, tail_bound: f64) -> Self {
        debug_assert!(!probs.is_empty());
        Self { probs, tail_bound }
    }

    pub fn point_mass(k: usize) -> Self {
        let mut probs = vec![0.0; k + 1];
        probs[k] = 1.0;
        Self {
            probs,
            tail_bound: 0.0,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Number of stored entries (the largest representable count plus one).
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of count `n`; zero beyond the stored support.
    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    /// Total stored mass.
    pub fn mass(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }
}

/// Mean, variance and Fano factor of a counting distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub mean: f64,
    pub variance: f64,
    /// `variance / mean`; absent when the mean is zero.
    pub fano: Option<f64>,
}

impl MomentSummary {
    pub fn from_moments(mean: f64, variance: f64) -> Self {
        let fano = (mean > 0.0).then(|| variance / mean);
        Self {
            mean,
            variance,
            fano,
        }
    }
}

pub(crate) fn check_nb_domain(mean: f64, modes: f64) -> Result<()> {
    if !(mean.is_finite() && mean >= 0.0) {
        return Err(Error::domain(format!(
            "mean photon number must be finite and >= 0, got {mean}"
        )));
    }
    if !(modes.is_finite() && modes > 0.0) {
        return Err(Error::domain(format!(
            "mode count must be finite and > 0, got {modes}"
        )));
    }
    Ok(())
}

fn check_eps(eps: f64, upper: f64) -> Result<()> {
    if eps > 0.0 && eps <= upper {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "truncation tolerance must lie in (0, {upper:e}], got {eps}"
        )))
    }
}

/// Multimode thermal probability of exactly `n` photons.
pub fn nb_pmf(n: u64, mean: f64, modes: f64) -> Result<f64> {
    check_nb_domain(mean, modes)?;
    if mean == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let ln_p = ln_rising_coefficient(n, modes)
        - modes * (mean / modes).ln_1p()
        - n as f64 * (modes / mean).ln_1p();
    Ok(ln_p.exp())
}

/// Successive terms p(0), p(1), ... of the negative binomial, generated by the
/// log-space ratio recurrence `p(n+1)/p(n) = (n + mu)/(n + 1) · N/(N + mu)`.
///
/// `mean` must be positive.
#[derive(Debug, Clone)]
pub(crate) struct NbTerms {
    modes: f64,
    ln_q: f64,
    ln_p: f64,
    n: u64,
}

impl NbTerms {
    pub(crate) fn new(mean: f64, modes: f64) -> Self {
        debug_assert!(mean > 0.0 && modes > 0.0);
        Self {
            modes,
            ln_q: -(modes / mean).ln_1p(),
            ln_p: -modes * (mean / modes).ln_1p(),
            n: 0,
        }
    }

    /// Ratio p(k+1)/p(k).
    pub(crate) fn ratio(&self, k: u64) -> f64 {
        (k as f64 + self.modes) / (k as f64 + 1.0) * self.ln_q.exp()
    }

    /// Upper bound on sum_{k >= from} p(k) given `p_from = p(from)`.
    pub(crate) fn tail_bound_from(&self, from: u64, p_from: f64) -> f64 {
        let q = self.ln_q.exp();
        // ratios are decreasing in k for mu >= 1 and bounded by q otherwise
        let r = if self.modes >= 1.0 {
            self.ratio(from)
        } else {
            q
        };
        if r < 1.0 {
            p_from / (1.0 - r)
        } else {
            f64::INFINITY
        }
    }
}

impl Iterator for NbTerms {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let p = self.ln_p.exp();
        self.ln_p += ((self.modes - 1.0) / (self.n as f64 + 1.0)).ln_1p() + self.ln_q;
        self.n += 1;
        Some(p)
    }
}

/// Smallest `n_max` whose cumulative multimode thermal mass reaches `1 - eps`.
pub fn truncation_length(mean: f64, modes: f64, eps: f64) -> Result<usize> {
    check_nb_domain(mean, modes)?;
    check_eps(eps, 1.0 - f64::EPSILON)?;
    if mean == 0.0 {
        return Ok(0);
    }
    let terms = NbTerms::new(mean, modes);
    let probe = terms.clone();
    let mut cumulative = KahanSum::new();
    let mut past_mode = false;
    let mut prev = 0.0;
    for (n, p) in terms.enumerate() {
        cumulative.add(p);
        if 1.0 - cumulative.value() <= eps {
            return Ok(n);
        }
        past_mode |= p < prev;
        prev = p;
        // Once the remaining tail is provably far below eps, any shortfall
        // left in the cumulative sum is rounding, not missing mass.
        if past_mode {
            let next_p = p * probe.ratio(n as u64);
            if probe.tail_bound_from(n as u64 + 1, next_p) < 1e-3 * eps {
                return Ok(n);
            }
        }
        if n >= MAX_SUPPORT {
            break;
        }
    }
    Err(Error::domain(format!(
        "truncation for N = {mean}, mu = {modes}, eps = {eps} needs more than {MAX_SUPPORT} terms"
    )))
}

/// Multimode thermal distribution with support `0..=n_max`.
pub(crate) fn nb_dist_with_support(mean: f64, modes: f64, n_max: usize) -> PhotonDist {
    if mean == 0.0 {
        return PhotonDist::point_mass(0);
    }
    let probs: Vec<f64> = NbTerms::new(mean, modes).take(n_max + 1).collect();
    let tail = (1.0 - kahan_sum(probs.iter().copied())).max(0.0);
    PhotonDist::from_parts(probs, tail)
}

/// Multimode thermal distribution truncated at [`truncation_length`].
pub fn nb_dist(mean: f64, modes: f64, eps: f64) -> Result<PhotonDist> {
    check_eps(eps, 1e-6)?;
    let n_max = truncation_length(mean, modes, eps)?;
    let mut dist = nb_dist_with_support(mean, modes, n_max);
    dist.tail_bound = dist.tail_bound.min(eps);
    Ok(dist)
}

/// Distribution of detected counts when each photon is independently
/// registered with probability `eta`.
pub fn binomial_thin(dist: &PhotonDist, eta: f64) -> Result<PhotonDist> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("efficiency {eta} outside [0, 1]")));
    }
    if eta == 1.0 {
        return Ok(dist.clone());
    }
    let mut acc = vec![KahanSum::new(); dist.len()];
    for (n, &p) in dist.probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let (first, row) = binomial_row(n, eta);
        for (slot, b) in acc[first..].iter_mut().zip(row) {
            slot.add(p * b);
        }
    }
    let probs = acc.iter().map(|s| s.value().clamp(0.0, 1.0)).collect();
    Ok(PhotonDist::from_parts(probs, dist.tail_bound))
}

/// Mean, variance and Fano factor of the stored (renormalised) pmf.
pub fn dist_stats(dist: &PhotonDist) -> Result<MomentSummary> {
    let mass = dist.mass();
    if mass <= 0.0 {
        return Err(Error::domain("moments of an all-zero pmf"));
    }
    let mean = kahan_sum(dist.probs.iter().enumerate().map(|(n, p)| n as f64 * p)) / mass;
    let variance = kahan_sum(dist.probs.iter().enumerate().map(|(n, p)| {
        let d = n as f64 - mean;
        d * d * p
    })) / mass;
    Ok(MomentSummary::from_moments(mean, variance))
}
