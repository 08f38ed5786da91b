//! Text renderers for analysis reports, theory evaluations and sweep tables.
//!
//! Floating-point values are printed with 9 significant digits in the style
//! of C's `%.9g`, `.` as decimal separator. Undefined values print as `nan`.

use std::fmt::Write as _;

use crate::analysis::AnalysisReport;
use crate::photon_stats::dist_stats;
use crate::sweep::SweepTable;
use crate::twb_theory::{
    closed_form_conditional_fano, closed_form_nrf, conditional_fano_from_joint, joint_detected_pmf,
    nrf_from_joint, photon_posterior, NrfVariant, TwbParams,
};
use crate::Result;

const SIG_DIGITS: i32 = 9;

/// Formats `v` like `printf("%.9g", v)`.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    // Round to the target precision first; the exponent of the rounded value
    // decides between fixed and scientific notation.
    let sci = format!("{:.*e}", (SIG_DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..SIG_DIGITS).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG_DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), fmt_sig)
}

/// Single-line rendering for message values: no newlines.
fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

/// Flat `key = value` rendering of an analysis report.
pub fn analysis_text(r: &AnalysisReport) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("shots", r.shots.to_string());
    let s = r.summary.as_ref();
    kv("mean1", opt(s.map(|s| s.mean1)));
    kv("mean2", opt(s.map(|s| s.mean2)));
    kv("var1", opt(s.map(|s| s.var1)));
    kv("var2", opt(s.map(|s| s.var2)));
    kv("cov", opt(s.map(|s| s.cov)));
    kv("diff_var", opt(s.map(|s| s.diff_var)));
    kv("nrf_hat", opt(s.map(|s| s.nrf_hat)));
    kv("nrf_se", opt(s.map(|s| s.nrf_se)));
    kv("fano1", opt(s.and_then(|s| s.fano1)));
    kv("fano2", opt(s.and_then(|s| s.fano2)));
    kv("mu_hat1", opt(r.mu_hat1));
    kv("mu_hat2", opt(r.mu_hat2));
    kv("mu_hat_mean", opt(r.mu_hat_mean));
    kv("eta_hat", opt(r.eta_hat));
    for c in &r.conditional {
        let p = format!("conditional.m2_{}", c.m2);
        kv(&format!("{p}.samples"), c.samples.to_string());
        kv(&format!("{p}.mean"), fmt_sig(c.mean));
        kv(&format!("{p}.fano"), opt(c.fano));
        kv(&format!("{p}.fano_se"), opt(c.fano_se));
    }
    if let Some(t) = &r.theory {
        kv("theory.M", fmt_sig(t.detected_mean));
        kv("theory.mu", fmt_sig(t.modes));
        kv("theory.eta", fmt_sig(t.eta));
        kv("theory.nrf_variant", t.nrf_variant.to_string());
        kv("theory.nrf", fmt_sig(t.nrf));
        kv("theory.nrf_printed", fmt_sig(t.nrf_printed));
        kv("theory.nrf_corrected", fmt_sig(t.nrf_corrected));
        for (m2, f) in &t.conditional_fano {
            kv(&format!("theory.m2_{m2}.fano_formula"), fmt_sig(*f));
        }
    }
    for w in &r.warnings {
        kv("warning", one_line(w));
    }
    for n in &r.notes {
        kv("note", one_line(n));
    }
    for e in &r.errors {
        kv("error", format!("{}: {}", e.stage, one_line(&e.message)));
    }
    out
}

/// Conditional-state table of an analysis report, with the closed-form
/// prediction at the estimated parameters where available.
pub fn conditional_csv(r: &AnalysisReport) -> String {
    let mut out = String::from("m2,samples,mean,fano,fano_se,fano_formula\n");
    for c in &r.conditional {
        let formula = r
            .theory
            .as_ref()
            .and_then(|t| t.conditional_fano.iter().find(|(k, _)| *k == c.m2))
            .map(|&(_, f)| f);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.m2,
            c.samples,
            fmt_sig(c.mean),
            opt(c.fano),
            opt(c.fano_se),
            opt(formula)
        );
    }
    out
}

/// Exact and closed-form quantities at one idler value.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTheory {
    pub m2: u32,
    pub heralding: f64,
    pub fano_exact: std::result::Result<f64, String>,
    pub fano_formula: std::result::Result<f64, String>,
    /// Fano factor of the photon-number posterior given the idler count.
    pub fano_photons: std::result::Result<f64, String>,
}

/// Theory evaluation at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryEvaluation {
    pub params: TwbParams,
    pub nrf_exact: std::result::Result<f64, String>,
    pub nrf_formula_corrected: std::result::Result<f64, String>,
    pub nrf_formula_printed: std::result::Result<f64, String>,
    pub nrf_variant: NrfVariant,
    pub conditional: Vec<ConditionalTheory>,
}

/// Evaluates the exact and closed-form predictions at `params`. Failures of
/// individual quantities are kept as messages.
pub fn evaluate_theory(
    params: &TwbParams,
    conditioning: &[u32],
    eps: f64,
    nrf_variant: NrfVariant,
) -> Result<TheoryEvaluation> {
    let joint = joint_detected_pmf(params, eps)?;
    let msg = |r: Result<f64>| r.map_err(|e| e.to_string());
    let (m1, m2) = params.detected_means();
    let eta = params.effective_eta();
    let nrf_exact = if params.mean_photons() > 0.0 && (params.eta1() > 0.0 || params.eta2() > 0.0) {
        msg(nrf_from_joint(&joint))
    } else {
        Err("noise reduction factor needs N > 0 and a positive efficiency".into())
    };
    let conditional = conditioning
        .iter()
        .map(|&k| {
            let posterior_fano = photon_posterior(params, k, eps).and_then(|p| {
                let s = dist_stats(&p)?;
                s.fano
                    .ok_or_else(|| crate::Error::Undefined("posterior mean is zero".into()))
            });
            let fano_exact = conditional_fano_from_joint(&joint, k, eps);
            ConditionalTheory {
                m2: k,
                heralding: joint.idler_mass(k as usize).clamp(0.0, 1.0),
                fano_exact: msg(fano_exact),
                fano_formula: msg(closed_form_conditional_fano(
                    params.detected_mean(),
                    params.modes(),
                    eta,
                    k,
                )),
                fano_photons: msg(posterior_fano),
            }
        })
        .collect();
    Ok(TheoryEvaluation {
        params: *params,
        nrf_exact,
        nrf_formula_corrected: msg(closed_form_nrf(
            m1,
            m2,
            eta,
            params.modes(),
            NrfVariant::Corrected,
        )),
        nrf_formula_printed: msg(closed_form_nrf(
            m1,
            m2,
            eta,
            params.modes(),
            NrfVariant::Printed,
        )),
        nrf_variant,
        conditional,
    })
}

fn res(v: &std::result::Result<f64, String>) -> String {
    match v {
        Ok(x) => fmt_sig(*x),
        Err(_) => "nan".into(),
    }
}

/// Flat `key = value` rendering of a theory evaluation.
pub fn theory_text(t: &TheoryEvaluation) -> String {
    let mut out = String::new();
    let mut errors = Vec::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    let p = &t.params;
    let (m1, m2) = p.detected_means();
    kv("N", fmt_sig(p.mean_photons()));
    kv("M1", fmt_sig(m1));
    kv("M2", fmt_sig(m2));
    kv("mu", fmt_sig(p.modes()));
    kv("eta1", fmt_sig(p.eta1()));
    kv("eta2", fmt_sig(p.eta2()));
    kv("eta_eff", fmt_sig(p.effective_eta()));
    kv("nrf_exact", res(&t.nrf_exact));
    let chosen = match t.nrf_variant {
        NrfVariant::Corrected => &t.nrf_formula_corrected,
        NrfVariant::Printed => &t.nrf_formula_printed,
    };
    kv("nrf_variant", t.nrf_variant.to_string());
    kv("nrf_formula", res(chosen));
    kv("nrf_formula_corrected", res(&t.nrf_formula_corrected));
    kv("nrf_formula_printed", res(&t.nrf_formula_printed));
    for (name, r) in [
        ("nrf_exact", &t.nrf_exact),
        ("nrf_formula_corrected", &t.nrf_formula_corrected),
        ("nrf_formula_printed", &t.nrf_formula_printed),
    ] {
        if let Err(e) = r {
            errors.push(format!("{name}: {e}"));
        }
    }
    for c in &t.conditional {
        let pre = format!("m2_{}", c.m2);
        kv(&format!("{pre}.heralding"), fmt_sig(c.heralding));
        kv(&format!("{pre}.fano_exact"), res(&c.fano_exact));
        kv(&format!("{pre}.fano_formula"), res(&c.fano_formula));
        kv(&format!("{pre}.fano_photons"), res(&c.fano_photons));
        for (name, r) in [
            ("fano_exact", &c.fano_exact),
            ("fano_formula", &c.fano_formula),
            ("fano_photons", &c.fano_photons),
        ] {
            if let Err(e) = r {
                errors.push(format!("{pre}.{name}: {e}"));
            }
        }
    }
    if !p.is_balanced() {
        kv(
            "note",
            "unbalanced arms: closed forms use eta_eff = sqrt(eta1*eta2)".into(),
        );
    }
    for e in errors {
        kv("error", one_line(&e));
    }
    out
}

/// CSV rendering of a sweep table: axis column, one column per output, then
/// `flags` (`;`-separated).
pub fn sweep_csv(t: &SweepTable) -> String {
    let mut out = String::new();
    out.push_str(t.axis.name());
    for c in &t.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push_str(",flags\n");
    for row in &t.rows {
        out.push_str(&fmt_sig(row.axis_value));
        for v in &row.values {
            out.push(',');
            out.push_str(&fmt_sig(*v));
        }
        out.push(',');
        out.push_str(&row.flags.join(";"));
        out.push('\n');
    }
    out
}
