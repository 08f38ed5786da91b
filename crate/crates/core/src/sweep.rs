//! One-dimensional parameter sweeps over the model and optimum search.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::{Intensity, ModelPoint};
use crate::twb_theory::{
    closed_form_conditional_fano, conditional_fano_from_joint, joint_detected_pmf, nrf_from_joint,
    JointDist, TwbParams,
};
use crate::{Error, Result};

/// The swept parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Detected mean `M` at the effective efficiency.
    DetectedMean,
    Modes,
    /// Both arm efficiencies together.
    Efficiency,
    /// The idler conditioning value.
    Conditioning,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::DetectedMean => "M",
            Axis::Modes => "mu",
            Axis::Efficiency => "eta",
            Axis::Conditioning => "m2",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" => Ok(Axis::DetectedMean),
            "mu" => Ok(Axis::Modes),
            "eta" => Ok(Axis::Efficiency),
            "m2" => Ok(Axis::Conditioning),
            other => Err(Error::domain(format!(
                "unknown axis {other:?} (expected M, mu, eta or m2)"
            ))),
        }
    }
}

/// A quantity evaluated at every grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Conditional Fano factor from the exact enumeration.
    ConditionalFanoExact,
    /// Conditional Fano factor from the closed form.
    ConditionalFanoFormula,
    NrfExact,
    Heralding,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::ConditionalFanoExact => "conditional_fano_exact",
            Objective::ConditionalFanoFormula => "conditional_fano_formula",
            Objective::NrfExact => "nrf_exact",
            Objective::Heralding => "heralding",
        }
    }

    fn per_conditioning(self) -> bool {
        !matches!(self, Objective::NrfExact)
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conditional_fano_exact" => Ok(Objective::ConditionalFanoExact),
            "conditional_fano_formula" | "conditional_fano_eq3" => {
                Ok(Objective::ConditionalFanoFormula)
            }
            "nrf_exact" => Ok(Objective::NrfExact),
            "heralding" => Ok(Objective::Heralding),
            other => Err(Error::domain(format!(
                "unknown objective {other:?} (expected conditional_fano_exact, \
                 conditional_fano_formula, nrf_exact or heralding)"
            ))),
        }
    }
}

/// Default threshold above which closed-form and exact Fano factors are
/// flagged as divergent.
pub const DEFAULT_DIVERGENCE: f64 = 0.05;

/// A sweep request.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub grid: Vec<f64>,
    /// Values of the parameters that are not swept. The field matching the
    /// axis is ignored.
    pub fixed: ModelPoint,
    /// Idler values for per-conditioning objectives (ignored on the `m2` axis).
    pub conditioning: Vec<u32>,
    pub objectives: Vec<Objective>,
    pub eps: f64,
    pub divergence_threshold: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::domain("sweep grid is empty"));
        }
        if let Some(v) = self.grid.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("sweep grid value {v} is not finite")));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("sweep grid must be strictly increasing"));
        }
        if self.objectives.is_empty() {
            return Err(Error::domain("no objectives requested"));
        }
        if !(self.eps > 0.0 && self.eps <= 1e-6) {
            return Err(Error::domain(format!("eps {} outside (0, 1e-6]", self.eps)));
        }
        match self.axis {
            Axis::Conditioning => {
                if let Some(v) = self
                    .grid
                    .iter()
                    .find(|v| v.fract() != 0.0 || **v < 0.0 || **v > f64::from(u32::MAX))
                {
                    return Err(Error::domain(format!("m2 grid value {v} is not a count")));
                }
            }
            _ => {
                let needs_m2 = self.objectives.iter().any(|o| o.per_conditioning());
                if needs_m2 && self.conditioning.is_empty() {
                    return Err(Error::domain(
                        "conditional objectives need at least one m2 value",
                    ));
                }
            }
        }
        let f = &self.fixed;
        if self.axis != Axis::Modes && !(f.modes.is_finite() && f.modes > 0.0) {
            return Err(Error::domain(format!("fixed mu = {} must be > 0", f.modes)));
        }
        if self.axis != Axis::Efficiency {
            for (name, eta) in [("eta1", f.eta1), ("eta2", f.eta2)] {
                if !(0.0..=1.0).contains(&eta) {
                    return Err(Error::domain(format!(
                        "fixed {name} = {eta} outside [0, 1]"
                    )));
                }
            }
        }
        if self.axis != Axis::DetectedMean {
            let (Intensity::Photons(v) | Intensity::Detected(v)) = f.intensity;
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("fixed intensity {v} must be >= 0")));
            }
        }
        if self.divergence_threshold.is_nan() || self.divergence_threshold < 0.0 {
            return Err(Error::domain("divergence threshold must be >= 0"));
        }
        Ok(())
    }

    fn columns(&self) -> Vec<Column> {
        let mut cols = Vec::new();
        let ks: Vec<Option<u32>> = if self.axis == Axis::Conditioning {
            vec![None]
        } else {
            self.conditioning.iter().map(|&k| Some(k)).collect()
        };
        for &obj in &self.objectives {
            if obj.per_conditioning() {
                cols.extend(ks.iter().map(|&k| Column {
                    objective: obj,
                    m2: k,
                }));
            } else {
                cols.push(Column {
                    objective: obj,
                    m2: None,
                });
            }
        }
        // heralding probability is always reported
        if !self.objectives.contains(&Objective::Heralding)
            && cols.iter().any(|c| c.objective.per_conditioning())
        {
            cols.extend(ks.iter().map(|&k| Column {
                objective: Objective::Heralding,
                m2: k,
            }));
        }
        cols
    }

    fn point(&self, value: f64) -> (ModelPoint, Option<u32>) {
        let mut p = self.fixed;
        let mut k = None;
        match self.axis {
            Axis::DetectedMean => p.intensity = Intensity::Detected(value),
            Axis::Modes => p.modes = value,
            Axis::Efficiency => {
                p.eta1 = value;
                p.eta2 = value;
            }
            Axis::Conditioning => k = Some(value as u32),
        }
        (p, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Column {
    objective: Objective,
    m2: Option<u32>,
}

impl Column {
    fn name(&self) -> String {
        match self.m2 {
            Some(k) => format!("{}_m2_{k}", self.objective.name()),
            None => self.objective.name().to_string(),
        }
    }
}

/// One evaluated grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    /// Aligned with [`SweepTable::columns`]; NaN where evaluation failed.
    pub values: Vec<f64>,
    /// `error:<column>:<message>` entries for failures, plus informational
    /// markers such as `formula_divergence_m2_1`.
    pub flags: Vec<String>,
}

impl SweepRow {
    pub fn has_error(&self) -> bool {
        self.flags.iter().any(|f| f.starts_with("error:"))
    }
}

/// Sweep output in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: Axis,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }
}

fn flag_text(msg: impl fmt::Display) -> String {
    msg.to_string()
        .chars()
        .map(|c| {
            if matches!(c, ',' | ';' | '\n' | '\r') {
                ' '
            } else {
                c
            }
        })
        .collect()
}

fn evaluate(spec: &SweepSpec, columns: &[Column], value: f64) -> SweepRow {
    let (point, axis_k) = spec.point(value);
    let mut row = SweepRow {
        axis_value: value,
        values: vec![f64::NAN; columns.len()],
        flags: Vec::new(),
    };
    let params = match point.params() {
        Ok(p) => p,
        Err(e) => {
            row.flags.push(format!("error:params:{}", flag_text(e)));
            return row;
        }
    };
    let needs_joint = columns
        .iter()
        .any(|c| c.objective != Objective::ConditionalFanoFormula);
    let joint = if needs_joint {
        match joint_detected_pmf(&params, spec.eps) {
            Ok(j) => Some(j),
            Err(e) => {
                row.flags
                    .push(format!("error:enumeration:{}", flag_text(e)));
                None
            }
        }
    } else {
        None
    };

    for (slot, col) in row.values.iter_mut().zip(columns) {
        let k = col.m2.or(axis_k).unwrap_or(0);
        let result = evaluate_column(col.objective, &params, joint.as_ref(), k, spec.eps);
        match result {
            Ok(v) => *slot = v,
            Err(e) if joint.is_some() || col.objective == Objective::ConditionalFanoFormula => {
                row.flags
                    .push(format!("error:{}:{}", col.name(), flag_text(e)));
            }
            Err(_) => {}
        }
    }

    let uses_formula = columns
        .iter()
        .any(|c| c.objective == Objective::ConditionalFanoFormula);
    for (i, c) in columns.iter().enumerate() {
        if c.objective != Objective::ConditionalFanoExact {
            continue;
        }
        let partner = columns
            .iter()
            .position(|d| d.objective == Objective::ConditionalFanoFormula && d.m2 == c.m2);
        if let Some(j) = partner {
            let (a, b) = (row.values[i], row.values[j]);
            if a.is_finite() && b.is_finite() && (a - b).abs() > spec.divergence_threshold {
                row.flags.push(match c.m2 {
                    Some(k) => format!("formula_divergence_m2_{k}"),
                    None => "formula_divergence".to_string(),
                });
            }
        }
    }
    if uses_formula && !params.is_balanced() {
        row.flags.push("eta_eff=sqrt(eta1*eta2)".to_string());
    }
    row
}

fn evaluate_column(
    objective: Objective,
    params: &TwbParams,
    joint: Option<&JointDist>,
    m2: u32,
    eps: f64,
) -> Result<f64> {
    let joint = || joint.ok_or_else(|| Error::domain("joint enumeration unavailable"));
    match objective {
        Objective::ConditionalFanoExact => conditional_fano_from_joint(joint()?, m2, eps),
        Objective::ConditionalFanoFormula => closed_form_conditional_fano(
            params.detected_mean(),
            params.modes(),
            params.effective_eta(),
            m2,
        ),
        Objective::NrfExact => {
            if params.mean_photons() <= 0.0 || (params.eta1() == 0.0 && params.eta2() == 0.0) {
                return Err(Error::domain(
                    "noise reduction factor needs N > 0 and a positive efficiency",
                ));
            }
            nrf_from_joint(joint()?)
        }
        Objective::Heralding => Ok(joint()?.idler_mass(m2 as usize).clamp(0.0, 1.0)),
    }
}

/// Evaluates every objective at every grid point using `workers` threads.
/// Point failures are recorded as row flags; rows come back in grid order.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<SweepTable> {
    spec.validate()?;
    if workers == 0 {
        return Err(Error::domain("worker count must be at least 1"));
    }
    let columns = spec.columns();
    let rows: Vec<SweepRow> = if workers == 1 {
        spec.grid
            .iter()
            .map(|&v| evaluate(spec, &columns, v))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::domain(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            spec.grid
                .par_iter()
                .map(|&v| evaluate(spec, &columns, v))
                .collect()
        })
    };
    Ok(SweepTable {
        axis: spec.axis,
        columns: columns.iter().map(Column::name).collect(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Min,
    Max,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Direction::Min),
            "max" => Ok(Direction::Max),
            other => Err(Error::domain(format!(
                "unknown direction {other:?} (expected min or max)"
            ))),
        }
    }
}

/// Extremal row of `column`. Rows with error flags or non-finite values are
/// skipped; ties go to the smallest axis value.
pub fn find_optimum<'a>(
    table: &'a SweepTable,
    column: &str,
    direction: Direction,
) -> Result<&'a SweepRow> {
    let idx = table
        .column_index(column)
        .ok_or_else(|| Error::domain(format!("no column named {column:?} in sweep table")))?;
    let mut best: Option<&SweepRow> = None;
    for row in &table.rows {
        let v = row.values[idx];
        if row.has_error() || !v.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let bv = b.values[idx];
                let strictly = match direction {
                    Direction::Min => v < bv,
                    Direction::Max => v > bv,
                };
                strictly || (v == bv && row.axis_value < b.axis_value)
            }
        };
        if better {
            best = Some(row);
        }
    }
    best.ok_or_else(|| {
        Error::domain(format!(
            "every row of column {column:?} is flagged or undefined"
        ))
    })
}
