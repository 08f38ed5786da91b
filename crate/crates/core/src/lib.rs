//! Photon-number statistics of multimode twin beams under lossy
//! photon-counting detection.
//!
//! The crate covers four layers:
//!
//! * [`photon_stats`]: multimode-thermal (negative binomial) pmfs, truncation,
//!   moments and Bernoulli thinning.
//! * [`twb_theory`]: the exact joint and conditional detected-photon
//!   distributions of a twin beam, and the closed-form Fano / noise-reduction
//!   predictions that are compared against them.
//! * [`montecarlo`]: seeded, worker-count independent shot-by-shot sampling.
//! * [`analysis`]: the measurement-side estimators (noise reduction factor,
//!   mode count, efficiency, conditional Fano factors) applied to pulse records.
//!
//! [`sweep`] and [`validate`] drive parameter scans on top of these, and
//! [`records`], [`config`], [`grid`] and [`report`] hold the file formats used
//! by the `twinbeam` command line tool.

pub mod analysis;
pub mod config;
mod error;
pub mod grid;
pub mod montecarlo;
pub mod photon_stats;
pub mod records;
pub mod report;
pub mod sweep;
pub mod twb_theory;
pub mod validate;

mod numeric;

pub use error::{Error, Result};
pub use montecarlo::{sample_run, sample_shot, PulseRecord, PulseRecordSet, SeedSpec};
pub use photon_stats::{
    binomial_thin, dist_stats, nb_dist, nb_pmf, truncation_length, MomentSummary, PhotonDist,
    DEFAULT_EPS,
};
pub use twb_theory::{
    closed_form_conditional_fano, closed_form_nrf, conditional_signal_pmf, exact_conditional_fano,
    exact_nrf, fano_detected_relation, heralding_probability, joint_detected_pmf, photon_posterior,
    JointDist, NrfVariant, TwbParams,
};
