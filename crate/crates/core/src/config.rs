//! Flat `key = value` run configuration.
//!
//! ```text
//! # balanced twin beam, detected mean 1
//! M = 1
//! mu = 10
//! eta = 0.15
//! shots = 200000
//! seed = 7
//! m2 = 1,2
//! ```
//!
//! Recognised keys: `N`, `M`, `eta`, `mu`, `eta1`, `eta2`, `shots`, `seed`,
//! `eps`, `m2`, `min_samples`, `nrf_variant`. `N` (photons per arm) and `M`
//! (detected mean at efficiency `sqrt(eta1 eta2)`) are mutually exclusive;
//! `eta` sets both arm efficiencies unless `eta1`/`eta2` override them. Blank
//! lines and `#` comments are ignored. Command-line overrides use the same
//! `key=value` syntax and replace file values.

use std::fs;
use std::path::Path;

use crate::grid::parse_counts;
use crate::photon_stats::DEFAULT_EPS;
use crate::twb_theory::{NrfVariant, TwbParams};
use crate::{Error, Result};

pub const DEFAULT_SHOTS: usize = 200_000;
pub const DEFAULT_MIN_SAMPLES: usize = 100;

/// How the beam intensity is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intensity {
    /// Mean photons per arm before detection.
    Photons(f64),
    /// Detected mean at the effective efficiency.
    Detected(f64),
}

/// Model parameters as the user states them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelPoint {
    pub intensity: Intensity,
    pub modes: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl ModelPoint {
    pub fn balanced_detected(detected_mean: f64, modes: f64, eta: f64) -> Self {
        Self {
            intensity: Intensity::Detected(detected_mean),
            modes,
            eta1: eta,
            eta2: eta,
        }
    }

    pub fn params(&self) -> Result<TwbParams> {
        match self.intensity {
            Intensity::Photons(n) => TwbParams::new(n, self.modes, self.eta1, self.eta2),
            Intensity::Detected(m) => {
                TwbParams::from_detected_mean(m, self.modes, self.eta1, self.eta2)
            }
        }
    }
}

/// Parsed configuration; absent keys fall back to the defaults of the
/// accessor methods.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub mean_photons: Option<f64>,
    pub detected_mean: Option<f64>,
    pub eta: Option<f64>,
    pub modes: Option<f64>,
    pub eta1: Option<f64>,
    pub eta2: Option<f64>,
    pub shots: Option<usize>,
    pub seed: Option<u64>,
    pub eps: Option<f64>,
    pub m2: Option<Vec<u32>>,
    pub min_samples: Option<usize>,
    pub nrf_variant: Option<NrfVariant>,
}

fn real(key: &str, value: &str) -> std::result::Result<f64, String> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{key}: expected a finite number, found {value:?}")),
    }
}

fn integer<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{key}: expected a non-negative integer, found {value:?}"))
}

impl RunConfig {
    /// Parses configuration text; `source` names it in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse(
                    source,
                    i + 1,
                    format!("expected key = value, found {line:?}"),
                ));
            };
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(Error::parse(
                    source,
                    i + 1,
                    format!("duplicate key {key:?}"),
                ));
            }
            cfg.set(key, value.trim())
                .map_err(|msg| Error::parse(source, i + 1, msg))?;
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "N" => self.mean_photons = Some(real(key, value)?),
            "M" => self.detected_mean = Some(real(key, value)?),
            "eta" => self.eta = Some(real(key, value)?),
            "mu" => self.modes = Some(real(key, value)?),
            "eta1" => self.eta1 = Some(real(key, value)?),
            "eta2" => self.eta2 = Some(real(key, value)?),
            "shots" => self.shots = Some(integer(key, value)?),
            "seed" => self.seed = Some(integer(key, value)?),
            "eps" => self.eps = Some(real(key, value)?),
            "m2" => self.m2 = Some(parse_counts(value).map_err(|e| format!("m2: {e}"))?),
            "min_samples" => self.min_samples = Some(integer(key, value)?),
            "nrf_variant" => {
                self.nrf_variant = Some(value.parse().map_err(|e: Error| e.to_string())?)
            }
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::parse(
                "override",
                1,
                format!("expected key=value, found {assignment:?}"),
            )
        })?;
        self.set(key.trim(), value.trim())
            .map_err(|msg| Error::parse("override", 1, msg))
    }

    pub fn eta1_or_shared(&self) -> Option<f64> {
        self.eta1.or(self.eta)
    }

    pub fn eta2_or_shared(&self) -> Option<f64> {
        self.eta2.or(self.eta)
    }

    pub fn model_point(&self) -> Result<ModelPoint> {
        let intensity = match (self.mean_photons, self.detected_mean) {
            (Some(_), Some(_)) => return Err(Error::domain("N and M are mutually exclusive")),
            (Some(n), None) => Intensity::Photons(n),
            (None, Some(m)) => Intensity::Detected(m),
            (None, None) => return Err(Error::domain("one of N or M is required")),
        };
        let modes = self.modes.ok_or_else(|| Error::domain("mu is required"))?;
        let eta1 = self
            .eta1_or_shared()
            .ok_or_else(|| Error::domain("eta (or eta1) is required"))?;
        let eta2 = self
            .eta2_or_shared()
            .ok_or_else(|| Error::domain("eta (or eta2) is required"))?;
        Ok(ModelPoint {
            intensity,
            modes,
            eta1,
            eta2,
        })
    }

    pub fn params(&self) -> Result<TwbParams> {
        self.model_point()?.params()
    }

    pub fn shots(&self) -> usize {
        self.shots.unwrap_or(DEFAULT_SHOTS)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(DEFAULT_EPS)
    }

    pub fn conditioning(&self) -> Vec<u32> {
        self.m2.clone().unwrap_or_else(|| vec![1, 2])
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(DEFAULT_MIN_SAMPLES)
    }

    pub fn nrf_variant(&self) -> NrfVariant {
        self.nrf_variant.unwrap_or_default()
    }
}
