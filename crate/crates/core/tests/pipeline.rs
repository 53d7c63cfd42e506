//! End-to-end fits on small simulated data, sample I/O and reports.

mod common;

use common::*;
use dyadgp::diagnostics::{random_effect_report, summarize, waic};
use dyadgp::io::{read_samples, write_samples};
use dyadgp::simulation::{simulate, SimulationSpec};
use dyadgp::{fit, McmcSchedule, ModelSpec, OutcomeKind, RngStream, SampleBlock, Variant};

fn small(kind: OutcomeKind) -> dyadgp::DyadDataset {
    let spec = SimulationSpec::new(kind, 3, 12).unwrap();
    simulate(&spec, &mut RngStream::new(4)).unwrap().data
}

#[test]
fn every_variant_fits_and_round_trips() {
    let schedule = McmcSchedule::new(300, 100, 2);
    for kind in [OutcomeKind::Patristic, OutcomeKind::Transmission] {
        let data = small(kind);
        for v in Variant::ALL {
            let s = fit(&data, &ModelSpec::new(kind, v), &schedule, 2, 8).unwrap();
            assert_eq!(s.n_draws(), 200);
            assert_eq!(s.chain_lengths, vec![100, 100]);
            assert_eq!(s.loglik.width(), data.n_pairs());
            assert_eq!(s.block("eta").is_some() || s.block("eta_zg").is_some(), v.is_spatial());
            let w = waic(&s.loglik).unwrap();
            assert!(w.waic.is_finite() && w.p_waic >= 0.0);
            assert!(summarize(&s, 0.95, false).iter().all(|p| p.mean.is_finite()));

            let dir = tempfile::tempdir().unwrap();
            write_samples(&s, dir.path()).unwrap();
            assert_eq!(read_samples(dir.path()).unwrap(), s);
        }
    }
}

#[test]
fn chains_are_independent_of_thread_count() {
    let data = small(OutcomeKind::Patristic);
    let spec = ModelSpec::new(OutcomeKind::Patristic, Variant::Spatial);
    let schedule = McmcSchedule::new(200, 50, 1);
    let a = fit(&data, &spec, &schedule, 3, 5).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| fit(&data, &spec, &schedule, 3, 5).unwrap());
    assert_eq!(a, b);
}

fn theta_samples(kind: OutcomeKind, block: &str, rows: &[[f64; 3]]) -> dyadgp::PosteriorSamples {
    let mut theta = SampleBlock::new(block, vec!["t0".into(), "t1".into(), "t2".into()]);
    let mut loglik = SampleBlock::new("loglik", vec!["o".into()]);
    for r in rows {
        theta.push(r);
        loglik.push(&[0.0]);
    }
    dyadgp::PosteriorSamples {
        model: kind,
        variant: Variant::Nonspatial,
        blocks: vec![theta],
        loglik,
        chain_lengths: vec![rows.len()],
        acceptance: Default::default(),
        warnings: Vec::new(),
    }
}

#[test]
fn random_effect_report_trivial_cases() {
    let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
    let data = patristic_data(&pts, 1);
    // individual 0 clearly positive, 1 clearly negative, 2 straddles zero
    let rows: Vec<[f64; 3]> = (0..50).map(|k| [1.0 + 0.01 * k as f64, -1.0 - 0.01 * k as f64, if k % 2 == 0 { 0.5 } else { -0.5 }]).collect();
    let r = random_effect_report(&theta_samples(OutcomeKind::Patristic, "theta", &rows), &data, 0.95).unwrap();
    assert_eq!(r.groups.len(), 1);
    let g = &r.groups[0];
    assert_eq!((g.positive, g.negative, g.null), (1, 1, 1));
    let pairs = data.pairs();
    let involving = |i: usize| {
        let v: Vec<f64> = pairs.iter().filter(|p| p.i == i || p.j == i).map(|p| p.outcome).collect();
        mean(&v)
    };
    assert!((g.mean_outcome_positive.unwrap() - involving(0)).abs() < 1e-12);
    assert!((g.mean_outcome_negative.unwrap() - involving(1)).abs() < 1e-12);
    assert!(r.spatial_shares.is_empty());

    // no effect blocks at all (Fixed): nothing to report
    let mut fixed = theta_samples(OutcomeKind::Patristic, "delta", &rows);
    fixed.variant = Variant::Fixed;
    let r = random_effect_report(&fixed, &data, 0.95).unwrap();
    assert!(r.groups.is_empty() && r.spatial_shares.is_empty());

    // a block of the wrong width is rejected
    let wide = patristic_data(&POINTS6, 1);
    assert!(random_effect_report(&theta_samples(OutcomeKind::Patristic, "theta", &rows), &wide, 0.95).is_err());
}

#[test]
fn spatial_share_of_a_fit_lies_in_the_unit_interval() {
    let data = small(OutcomeKind::Transmission);
    let s = fit(&data, &ModelSpec::new(OutcomeKind::Transmission, Variant::Spatial), &McmcSchedule::new(200, 100, 1), 1, 2).unwrap();
    let r = random_effect_report(&s, &data, 0.95).unwrap();
    assert_eq!(r.groups.len(), 4);
    assert_eq!(r.spatial_shares.len(), 4);
    for g in &r.groups {
        assert_eq!(g.positive + g.negative + g.null, data.n());
    }
    assert!(r.spatial_shares.iter().all(|p| p.lower >= 0.0 && p.upper <= 1.0));
}
