//! Seeded shot-by-shot sampling of the twin-beam detection model.
//!
//! A shot draws the common photon number from the multimode thermal
//! distribution as a Gamma–Poisson mixture (shape `mu`, scale `N / mu`), then
//! thins it independently in each arm.
//!
//! Runs are split into fixed blocks of [`BLOCK_SHOTS`] shots. Block `b` uses
//! the ChaCha stream `b` of a generator keyed by the master seed, so the
//! output does not depend on how many workers process the blocks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use rayon::prelude::*;

use crate::twb_theory::TwbParams;
use crate::{Error, Result};

/// Shots per independent random stream.
pub const BLOCK_SHOTS: usize = 4096;

/// Detected counts of one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseRecord {
    pub shot: u64,
    pub m1: u32,
    pub m2: u32,
}

/// Where a record set came from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    Simulated { seed: u64, params: TwbParams },
    File { source: String },
}

/// Ordered pulse records. Shot indices start at 0 and strictly increase.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseRecordSet {
    records: Vec<PulseRecord>,
    provenance: Provenance,
}

impl PulseRecordSet {
    pub fn new(records: Vec<PulseRecord>, provenance: Provenance) -> Result<Self> {
        if let Some(first) = records.first() {
            if first.shot != 0 {
                return Err(Error::domain(format!(
                    "shot indices must start at 0, found {}",
                    first.shot
                )));
            }
        }
        if let Some(w) = records.windows(2).find(|w| w[1].shot <= w[0].shot) {
            return Err(Error::domain(format!(
                "shot indices must strictly increase: {} followed by {}",
                w[0].shot, w[1].shot
            )));
        }
        Ok(Self {
            records,
            provenance,
        })
    }

    /// Builds a set from `(m1, m2)` pairs numbered `0, 1, 2, ...`.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, u32)>, provenance: Provenance) -> Self {
        let records = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (m1, m2))| PulseRecord {
                shot: i as u64,
                m1,
                m2,
            })
            .collect();
        Self {
            records,
            provenance,
        }
    }

    pub fn records(&self) -> &[PulseRecord] {
        &self.records
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PulseRecord> {
        self.records.iter()
    }
}

/// Seed and parallelism of a simulated run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub worker_count: usize,
}

impl SeedSpec {
    pub fn new(master_seed: u64, worker_count: usize) -> Self {
        Self {
            master_seed,
            worker_count,
        }
    }

    pub fn serial(master_seed: u64) -> Self {
        Self::new(master_seed, 1)
    }
}

/// The random stream of block `block` under `master_seed`.
pub fn block_stream(master_seed: u64, block: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(block);
    rng
}

/// Per-shot sampler with the model distributions prepared once.
#[derive(Debug, Clone)]
pub struct ShotSampler {
    intensity: Option<Gamma<f64>>,
    eta1: f64,
    eta2: f64,
}

impl ShotSampler {
    pub fn new(params: &TwbParams) -> Self {
        let intensity = (params.mean_photons() > 0.0).then(|| {
            let modes = params.modes();
            Gamma::new(modes, params.mean_photons() / modes)
                .expect("validated parameters give a valid gamma law")
        });
        Self {
            intensity,
            eta1: params.eta1(),
            eta2: params.eta2(),
        }
    }

    fn photons<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let Some(gamma) = &self.intensity else {
            return 0;
        };
        let lambda = gamma.sample(rng);
        if lambda <= 0.0 {
            return 0;
        }
        match Poisson::new(lambda) {
            Ok(poisson) => poisson.sample(rng) as u64,
            Err(_) => 0,
        }
    }

    fn detect<R: Rng + ?Sized>(n: u64, eta: f64, rng: &mut R) -> u32 {
        let m = if n == 0 || eta <= 0.0 {
            0
        } else if eta >= 1.0 {
            n
        } else {
            Binomial::new(n, eta)
                .expect("efficiency validated to lie in [0, 1]")
                .sample(rng)
        };
        u32::try_from(m).unwrap_or(u32::MAX)
    }

    /// Draws the detected pair `(m1, m2)` of one shot.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (u32, u32) {
        let n = self.photons(rng);
        let m1 = Self::detect(n, self.eta1, rng);
        let m2 = Self::detect(n, self.eta2, rng);
        (m1, m2)
    }
}

/// Draws one shot of the model from `rng`.
pub fn sample_shot<R: Rng + ?Sized>(params: &TwbParams, rng: &mut R) -> (u32, u32) {
    ShotSampler::new(params).sample(rng)
}

fn sample_block(
    sampler: &ShotSampler,
    master_seed: u64,
    block: usize,
    shots: usize,
) -> Vec<(u32, u32)> {
    let mut rng = block_stream(master_seed, block as u64);
    let start = block * BLOCK_SHOTS;
    let len = BLOCK_SHOTS.min(shots - start);
    (0..len).map(|_| sampler.sample(&mut rng)).collect()
}

/// Simulates `shots` pulses. The output depends only on `params`, `shots` and
/// `seed.master_seed`.
pub fn sample_run(params: &TwbParams, shots: usize, seed: SeedSpec) -> Result<PulseRecordSet> {
    if shots == 0 {
        return Err(Error::domain("a run needs at least one shot"));
    }
    if seed.worker_count == 0 {
        return Err(Error::domain("worker count must be at least 1"));
    }
    let sampler = ShotSampler::new(params);
    let blocks = shots.div_ceil(BLOCK_SHOTS);
    let run_block = |b: usize| sample_block(&sampler, seed.master_seed, b, shots);

    let chunks: Vec<Vec<(u32, u32)>> = if seed.worker_count == 1 || blocks == 1 {
        (0..blocks).map(run_block).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(seed.worker_count)
            .build()
            .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..blocks).into_par_iter().map(run_block).collect())
    };

    Ok(PulseRecordSet::from_pairs(
        chunks.into_iter().flatten(),
        Provenance::Simulated {
            seed: seed.master_seed,
            params: *params,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn blind_detectors_record_nothing() {
        let p = TwbParams::balanced(3.0, 2.0, 0.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_shot(&p, &mut rng), (0, 0));
        }
    }

    #[test]
    fn perfect_detectors_see_identical_counts() {
        let p = TwbParams::balanced(3.0, 2.0, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut any_nonzero = false;
        for _ in 0..1000 {
            let (a, b) = sample_shot(&p, &mut rng);
            assert_eq!(a, b);
            any_nonzero |= a > 0;
        }
        assert!(any_nonzero);
    }

    #[test]
    fn vacuum_run_is_all_zero() {
        let p = TwbParams::balanced(0.0, 5.0, 0.5).unwrap();
        let run = sample_run(&p, 10_000, SeedSpec::serial(3)).unwrap();
        assert_eq!(run.len(), 10_000);
        assert!(run.iter().all(|r| r.m1 == 0 && r.m2 == 0));
    }

    #[test]
    fn run_is_independent_of_worker_count() {
        let p = TwbParams::balanced(6.0, 3.5, 0.3).unwrap();
        let shots = 3 * BLOCK_SHOTS + 17;
        let a = sample_run(&p, shots, SeedSpec::new(99, 1)).unwrap();
        let b = sample_run(&p, shots, SeedSpec::new(99, 8)).unwrap();
        assert_eq!(a, b);
        let c = sample_run(&p, shots, SeedSpec::new(100, 1)).unwrap();
        assert_ne!(a.records(), c.records());
    }

    #[test]
    fn shot_indices_are_consecutive() {
        let p = TwbParams::balanced(1.0, 1.0, 0.5).unwrap();
        let run = sample_run(&p, 5000, SeedSpec::serial(0)).unwrap();
        assert!(run.iter().enumerate().all(|(i, r)| r.shot == i as u64));
    }

    #[test]
    fn rejects_empty_runs_and_zero_workers() {
        let p = TwbParams::balanced(1.0, 1.0, 0.5).unwrap();
        assert!(sample_run(&p, 0, SeedSpec::serial(0)).is_err());
        assert!(sample_run(&p, 10, SeedSpec::new(0, 0)).is_err());
    }

    #[test]
    fn record_set_validates_order() {
        let rec = |shot| PulseRecord { shot, m1: 0, m2: 0 };
        let src = || Provenance::File { source: "t".into() };
        assert!(PulseRecordSet::new(vec![rec(0), rec(1), rec(5)], src()).is_ok());
        assert!(PulseRecordSet::new(vec![rec(1)], src()).is_err());
        assert!(PulseRecordSet::new(vec![rec(0), rec(0)], src()).is_err());
        assert!(PulseRecordSet::new(vec![], src()).is_ok());
    }
}
