//! Small numerical helpers shared by the distribution code.

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub(crate) fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Entries below this fraction of a binomial row's mode are dropped.
const ROW_CUTOFF: f64 = 1e-30;

/// Binomial(n, p) probabilities for the support window where they are not
/// negligible. Returns `(first_k, probs)` with `probs[i] = P(K = first_k + i)`.
///
/// The row is built by the ratio recurrence outward from the mode and then
/// renormalised, which keeps every retained entry accurate to a few ulps times
/// its distance from the mode and never under- or overflows.
pub(crate) fn binomial_row(n: usize, p: f64) -> (usize, Vec<f64>) {
    if p <= 0.0 {
        return (0, vec![1.0]);
    }
    if p >= 1.0 {
        return (n, vec![1.0]);
    }
    let odds = p / (1.0 - p);
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as usize;

    let mut upper = Vec::new();
    let mut v = 1.0;
    for k in mode..n {
        v *= (n - k) as f64 / (k + 1) as f64 * odds;
        if v < ROW_CUTOFF {
            break;
        }
        upper.push(v);
    }
    let mut lower = Vec::new();
    v = 1.0;
    for k in (1..=mode).rev() {
        v *= k as f64 / (n - k + 1) as f64 / odds;
        if v < ROW_CUTOFF {
            break;
        }
        lower.push(v);
    }

    let first = mode - lower.len();
    let mut row = Vec::with_capacity(lower.len() + 1 + upper.len());
    row.extend(lower.iter().rev());
    row.push(1.0);
    row.extend(upper);
    let total = kahan_sum(row.iter().copied());
    for x in &mut row {
        *x /= total;
    }
    (first, row)
}

/// Natural log of the generalised binomial coefficient Γ(n+a)/(Γ(n+1)Γ(a)).
pub(crate) fn ln_rising_coefficient(n: u64, a: f64) -> f64 {
    if n <= 4096 {
        // Γ(n+a)/(n! Γ(a)) = prod_{k=1..n} (1 + (a-1)/k)
        let b = a - 1.0;
        kahan_sum((1..=n).map(|k| (b / k as f64).ln_1p()))
    } else {
        use statrs::function::gamma::ln_gamma;
        let nf = n as f64;
        ln_gamma(nf + a) - ln_gamma(nf + 1.0) - ln_gamma(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_binomial(n: u64, k: u64, p: f64) -> f64 {
        let mut c = 1.0;
        for i in 0..k {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    #[test]
    fn binomial_row_matches_direct_formula() {
        for &(n, p) in &[(0usize, 0.3), (1, 0.5), (7, 0.15), (20, 0.9), (40, 0.06)] {
            let (first, row) = binomial_row(n, p);
            for (i, &b) in row.iter().enumerate() {
                let k = (first + i) as u64;
                let d = direct_binomial(n as u64, k, p);
                assert!(
                    (b - d).abs() <= 1e-14 * d.max(1e-300) + 1e-300,
                    "n={n} k={k}"
                );
            }
        }
    }

    #[test]
    fn binomial_row_prunes_far_tails() {
        let (first, row) = binomial_row(900, 0.15);
        assert!(first > 0);
        assert!(row.len() < 400);
        assert!((kahan_sum(row.iter().copied()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rising_coefficient_small_and_large() {
        // C(n + 1, n) = n + 1 for a = 2
        assert!((ln_rising_coefficient(10, 2.0) - 11f64.ln()).abs() < 1e-14);
        assert_eq!(ln_rising_coefficient(100, 1.0), 0.0);
        let big = ln_rising_coefficient(5000, 2.0);
        assert!((big - 5001f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = KahanSum::new();
        s.add(1.0);
        for _ in 0..1000 {
            s.add(1e-17);
        }
        assert!((s.value() - (1.0 + 1e-14)).abs() < 1e-18);
    }
}
