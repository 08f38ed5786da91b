use twinbeam::analysis::{
    condition_records, estimate_eta, estimate_modes_mean, self_consistent_report, summarize,
    AnalysisConfig, ConditioningConfig,
};
use twinbeam::records::{parse_records, records_to_string};
use twinbeam::report::{evaluate_theory, theory_text};
use twinbeam::twb_theory::{exact_conditional_fano, heralding_probability, NrfVariant, TwbParams};
use twinbeam::{sample_run, SeedSpec};

const EPS: f64 = 1e-12;

fn reference_point() -> TwbParams {
    TwbParams::from_detected_mean(1.0, 10.0, 0.15, 0.15).unwrap()
}

#[test]
fn efficiency_recovered_at_reference_scale() {
    let run = sample_run(&reference_point(), 200_000, SeedSpec::serial(41)).unwrap();
    let eta = estimate_eta(&summarize(&run).unwrap())
        .unwrap()
        .value()
        .unwrap();
    assert!((eta - 0.15).abs() < 0.01, "{eta}");
}

#[test]
fn conditional_fano_converges_for_every_likely_herald() {
    let p = reference_point();
    let run = sample_run(&p, 200_000, SeedSpec::serial(42)).unwrap();
    let cfg = ConditioningConfig::default();
    let mut checked = 0;
    for k in 0..10 {
        if heralding_probability(&p, k, EPS).unwrap() < 1e-3 {
            continue;
        }
        let exact = exact_conditional_fano(&p, k, EPS).unwrap();
        let c = condition_records(&run, k, &cfg).unwrap();
        let z = (c.stats.fano.unwrap() - exact) / c.fano_se.unwrap();
        assert!(z.abs() < 5.0, "m2={k}: z = {z}");
        checked += 1;
    }
    assert!(checked >= 5);
}

#[test]
fn loop_closes_on_estimated_parameters() {
    let run = sample_run(&reference_point(), 200_000, SeedSpec::serial(43)).unwrap();
    let report = self_consistent_report(&run, &AnalysisConfig::default());
    let s = report.summary.unwrap();
    let estimated = TwbParams::from_detected_mean(
        0.5 * (s.mean1 + s.mean2),
        report.mu_hat_mean.unwrap(),
        report.eta_hat.unwrap(),
        report.eta_hat.unwrap(),
    )
    .unwrap();
    let rerun = summarize(&sample_run(&estimated, 200_000, SeedSpec::serial(44)).unwrap()).unwrap();
    let se = s.nrf_se.hypot(rerun.nrf_se);
    assert!(
        (rerun.nrf_hat - s.nrf_hat).abs() < 5.0 * se,
        "{} vs {}",
        rerun.nrf_hat,
        s.nrf_hat
    );
}

#[test]
fn bootstrap_intervals_cover_the_oracle() {
    let p = reference_point();
    let exact = exact_conditional_fano(&p, 1, EPS).unwrap();
    let mut covered = 0;
    for r in 0..100u64 {
        let run = sample_run(&p, 20_000, SeedSpec::serial(1000 + r)).unwrap();
        let cfg = ConditioningConfig {
            seed: r,
            ..Default::default()
        };
        let c = condition_records(&run, 1, &cfg).unwrap();
        if (c.stats.fano.unwrap() - exact).abs() <= 1.96 * c.fano_se.unwrap() {
            covered += 1;
        }
    }
    assert!(covered >= 90, "covered {covered} of 100");
}

#[test]
fn estimator_error_shrinks_with_shots() {
    let p = TwbParams::balanced(2.0, 5.0, 0.15).unwrap();
    let rms = |shots: usize| {
        let mut acc = 0.0;
        for r in 0..20u64 {
            let run = sample_run(&p, shots, SeedSpec::serial(500 + r)).unwrap();
            acc += (1.0 - summarize(&run).unwrap().nrf_hat - 0.15).powi(2);
        }
        (acc / 20.0).sqrt()
    };
    let ratio = rms(200_000) / rms(1_000_000);
    let expected = 5f64.sqrt();
    assert!(ratio > expected / 3.0 && ratio < expected * 3.0, "{ratio}");
}

const REGIME_M: [f64; 4] = [0.1, 0.5, 1.0, 3.2];
const REGIME_MU: [f64; 3] = [2.0, 20.0, 200.0];
const REGIME_ETA: [f64; 2] = [0.06, 0.17];

#[test]
fn target_regime_is_accepted_cleanly() {
    for m in REGIME_M {
        for mu in REGIME_MU {
            for eta in REGIME_ETA {
                let p = TwbParams::from_detected_mean(m, mu, eta, eta).unwrap();
                let text =
                    theory_text(&evaluate_theory(&p, &[1, 2], EPS, NrfVariant::Corrected).unwrap());
                assert!(
                    !text.contains("note =") && !text.contains("error ="),
                    "M={m} mu={mu} eta={eta}\n{text}"
                );
            }
        }
    }
}

#[test]
fn target_regime_analysis_has_no_warnings_where_modes_are_resolvable() {
    // The mode estimate rests on the excess variance M^2 / mu; these points
    // keep it well above the sampling noise of 2e5 shots.
    for (m, mu) in [
        (0.5, 2.0),
        (1.0, 10.0),
        (3.2, 2.0),
        (3.2, 20.0),
        (3.2, 200.0),
    ] {
        for eta in REGIME_ETA {
            let p = TwbParams::from_detected_mean(m, mu, eta, eta).unwrap();
            let run = sample_run(&p, 200_000, SeedSpec::serial(77)).unwrap();
            let report = self_consistent_report(&run, &AnalysisConfig::default());
            assert!(
                report.warnings.is_empty(),
                "M={m} mu={mu} eta={eta}: {:?}",
                report.warnings
            );
            assert!(
                report.errors.is_empty(),
                "M={m} mu={mu} eta={eta}: {:?}",
                report.errors
            );
            assert!(report.notes.is_empty());
        }
    }
}

#[test]
fn unresolvable_mode_count_is_reported() {
    let p = TwbParams::from_detected_mean(0.1, 200.0, 0.06, 0.06).unwrap();
    let run = sample_run(&p, 200_000, SeedSpec::serial(77)).unwrap();
    let report = self_consistent_report(&run, &AnalysisConfig::default());
    let flagged = !report.warnings.is_empty()
        || report
            .errors
            .iter()
            .any(|e| e.stage.starts_with("estimate_modes"));
    assert!(flagged, "{report:?}");
}

#[test]
fn arm_imbalance_adds_a_note() {
    let p = TwbParams::new(6.0, 10.0, 0.2, 0.15).unwrap();
    let run = sample_run(&p, 100_000, SeedSpec::serial(3)).unwrap();
    let report = self_consistent_report(&run, &AnalysisConfig::default());
    assert_eq!(report.notes.len(), 1, "{:?}", report.notes);
    assert!(report.eta_hat.is_some());
}

#[test]
fn report_is_the_same_after_a_csv_round_trip() {
    let run = sample_run(&reference_point(), 30_000, SeedSpec::serial(8)).unwrap();
    let back = parse_records(&records_to_string(&run), "mem").unwrap();
    let cfg = AnalysisConfig::default();
    assert_eq!(
        self_consistent_report(&run, &cfg),
        self_consistent_report(&back, &cfg)
    );
}

#[test]
fn mode_estimate_recovered_at_reference_scale() {
    let p = TwbParams::balanced(2.0, 5.0, 0.15).unwrap();
    let run = sample_run(&p, 200_000, SeedSpec::serial(9)).unwrap();
    let mu = estimate_modes_mean(&run).unwrap();
    assert!((mu - 5.0).abs() < 0.5, "{mu}");
}
