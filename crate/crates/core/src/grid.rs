//! Parsers for value lists given on the command line.
//!
//! A grid is either an explicit comma-separated list (`0.5,1,2,3.2`), a
//! linear range `lin:START:STOP:COUNT`, or a logarithmic range
//! `log:START:STOP:COUNT`. Ranges include both end points.

use crate::{Error, Result};

const MAX_GRID_POINTS: usize = 1_000_000;

fn grid_err(msg: impl Into<String>) -> Error {
    Error::parse("grid", 1, msg)
}

fn number(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| grid_err(format!("invalid number {s:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(grid_err(format!("non-finite value {s:?}")))
    }
}

fn range(spec: &str, log: bool) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, count] = parts[..] else {
        return Err(grid_err(format!(
            "range needs START:STOP:COUNT, found {spec:?}"
        )));
    };
    let (start, stop) = (number(start)?, number(stop)?);
    let count: usize = count
        .trim()
        .parse()
        .map_err(|_| grid_err(format!("invalid point count {count:?}")))?;
    if count == 0 || count > MAX_GRID_POINTS {
        return Err(grid_err(format!(
            "point count must lie in 1..={MAX_GRID_POINTS}"
        )));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    if log && (start <= 0.0 || stop <= 0.0) {
        return Err(grid_err("logarithmic range needs positive end points"));
    }
    let step = |i: usize| i as f64 / (count - 1) as f64;
    let values = (0..count)
        .map(|i| {
            if i == count - 1 {
                stop
            } else if log {
                (start.ln() + (stop.ln() - start.ln()) * step(i)).exp()
            } else {
                start + (stop - start) * step(i)
            }
        })
        .collect();
    Ok(values)
}

/// Parses a grid specification into its values, in the order given.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let spec = spec.trim();
    if let Some(rest) = spec.strip_prefix("lin:") {
        return range(rest, false);
    }
    if let Some(rest) = spec.strip_prefix("log:") {
        return range(rest, true);
    }
    if spec.is_empty() {
        return Err(grid_err("empty grid"));
    }
    spec.split(',').map(number).collect()
}

/// Parses a comma-separated list of counts such as `1,2`.
pub fn parse_counts(spec: &str) -> Result<Vec<u32>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(grid_err("empty count list"));
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| grid_err(format!("invalid count {s:?}")))
        })
        .collect()
}
