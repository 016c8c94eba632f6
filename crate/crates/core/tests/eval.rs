use hawkes_ddp::eval::*;
use hawkes_ddp::simulator::Truth;
use hawkes_ddp::{BetaMixture, ExcitationModel, HawkesParams};
use proptest::prelude::*;

fn constant_curves(k: usize, grid: GridSpec, v: f64) -> Curves {
    Curves::from_fn(k, grid, |_, _, _| v)
}

fn samples_from(k: usize, grid: GridSpec, draws: &[f64]) -> CurveSamples {
    let block: Vec<Vec<f64>> = draws.iter().map(|&v| vec![v; grid.n_points]).collect();
    CurveSamples::new(k, grid, vec![block; k * k]).unwrap()
}

#[test]
fn rmise_is_zero_at_truth() {
    let truth = Truth::paper_beta(0.5).unwrap();
    let grid = GridSpec::with_default_points(1.0).unwrap();
    let curves = Curves::from_fn(2, grid, |p, c, x| truth.density(p, c, x));
    let samples = CurveSamples::new(2, grid, curves.values.iter().map(|row| vec![row.clone(); 3]).collect()).unwrap();
    assert!(rmise(&curves, &samples).unwrap() < 1e-12);
}

#[test]
fn rmise_constant_offset() {
    let grid = GridSpec::with_default_points(1.0).unwrap();
    let truth = Curves::from_fn(2, grid, |p, c, x| 1.0 + x * (p + 2 * c) as f64);
    for delta in [0.3, -0.7, 1e-3] {
        let est = Curves::from_fn(2, grid, |p, c, x| 1.0 + x * (p + 2 * c) as f64 + delta);
        assert!((rmise_curves(&truth, &est) - delta.abs()).abs() < 1e-12);
    }
}

#[test]
fn rmise_rejects_mismatched_shapes() {
    let grid = GridSpec::new(8, 1.0).unwrap();
    let other = GridSpec::new(16, 1.0).unwrap();
    let samples = samples_from(1, grid, &[1.0, 2.0]);
    assert!(rmise(&constant_curves(1, other, 1.0), &samples).is_err());
    assert!(rmise(&constant_curves(2, grid, 1.0), &samples).is_err());
}

#[test]
fn rmise_is_stable_under_grid_refinement() {
    for eps in [0.0, 0.5, 1.0] {
        let truth = Truth::paper_beta(eps).unwrap();
        let est = Truth::paper_beta((eps + 0.3f64).min(1.0) - if eps == 1.0 { 0.4 } else { 0.0 }).unwrap();
        let value = |n| {
            let grid = GridSpec::new(n, 1.0).unwrap();
            let t = Curves::from_fn(2, grid, |p, c, x| truth.density(p, c, x));
            let e = Curves::from_fn(2, grid, |p, c, x| est.density(p, c, x));
            rmise_curves(&t, &e)
        };
        let (coarse, fine) = (value(512), value(8192));
        assert!((coarse - fine).abs() <= 0.01 * fine, "eps {eps}: {coarse} vs {fine}");
    }
}

#[test]
fn interval_score_examples() {
    assert_eq!(interval_score_cell(1.0, 3.0, 2.0, 0.05), 2.0);
    assert!((interval_score_cell(1.0, 3.0, 3.5, 0.05) - 22.0).abs() < 1e-12);
    assert!((interval_score_cell(1.0, 3.0, 0.5, 0.05) - 22.0).abs() < 1e-12);
}

#[test]
fn coverage_degenerate_and_disjoint() {
    let grid = GridSpec::new(16, 1.0).unwrap();
    let samples = samples_from(2, grid, &[1.5, 1.5, 1.5]);
    assert_eq!(coverage_acr(&samples, &constant_curves(2, grid, 1.5), 0.95).unwrap(), 1.0);
    assert_eq!(coverage_acr(&samples, &constant_curves(2, grid, 9.0), 0.95).unwrap(), 0.0);
    assert!(coverage_acr(&samples_from(2, grid, &[1.0]), &constant_curves(2, grid, 1.0), 0.95).is_err());
}

#[test]
fn score_and_coverage_agree_cellwise() {
    // draws 0..=40 give a type-7 interval [1, 39]
    let grid = GridSpec::new(4, 1.0).unwrap();
    let draws: Vec<f64> = (0..=40).map(f64::from).collect();
    let samples = samples_from(1, grid, &draws);
    let truth = Curves { num_dims: 1, grid, values: vec![vec![0.5, 20.0, 39.0, 41.0]] };
    assert_eq!(coverage_acr(&samples, &truth, 0.95).unwrap(), 0.5);
    let expected = (38.0 + 40.0 * 0.5 + 38.0 + 38.0 + 38.0 + 40.0 * 2.0) / 4.0;
    assert!((interval_score(&samples, &truth, 0.95).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn bands_need_two_draws_and_are_ordered() {
    let grid = GridSpec::new(8, 1.0).unwrap();
    assert!(excitation_bands(&samples_from(1, grid, &[1.0]), 0.95).is_err());
    let bands = excitation_bands(&samples_from(2, grid, &[0.5, 1.5]), 0.95).unwrap();
    assert_eq!(bands.len(), 4);
    for b in &bands {
        for i in 0..b.x.len() {
            assert!((b.mean[i] - 1.0).abs() < 1e-15);
            assert!(b.lower[i] <= b.mean[i] && b.mean[i] <= b.upper[i]);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bands.csv");
    write_bands_csv(&bands, &path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("parent,child,x,mean,lower,upper\n1,1,"));
    assert_eq!(text.lines().count(), 1 + 4 * 8);
}

#[test]
fn curve_samples_from_params() {
    let exc = ExcitationModel::shared(0.5, 1.0, BetaMixture::single(1.0, 4.0).unwrap(), BetaMixture::single(2.0, 2.0).unwrap(), 1).unwrap();
    let p = HawkesParams::new(vec![0.1], vec![vec![0.5]], exc).unwrap();
    let grid = GridSpec::new(4, 1.0).unwrap();
    let s = CurveSamples::from_params(&[p.clone(), p], grid).unwrap();
    assert_eq!(s.num_draws(), 2);
    let x = 0.125;
    let want = 0.5 * 4.0 * (1.0f64 - x).powi(3) + 0.5 * 6.0 * x * (1.0 - x);
    assert!((s.values[0][0][0] - want).abs() < 1e-12);
}

#[test]
fn spectral_histogram_examples() {
    let identity = vec![vec![1.0, 0.0, 0.0, 1.0]; 5];
    let h = spectral_histogram(&identity, 2, 50).unwrap();
    assert_eq!(h.bins.len(), 1);
    assert!((h.bins[0].lower - 1.0).abs() < 1e-12 && h.bins[0].count == 5);
    assert_eq!(h.stationary_fraction, 0.0);
    let paper = vec![vec![0.6, 0.15, 0.3, 0.6]; 3];
    let h = spectral_histogram(&paper, 2, 50).unwrap();
    assert_eq!(h.bins.len(), 1);
    assert!((h.bins[0].lower - 0.81213).abs() < 1e-5);
    assert_eq!(h.stationary_fraction, 1.0);
    assert!(spectral_histogram(&[], 2, 50).is_err());
}

#[test]
fn metric_rows_round_trip() {
    let rows = vec![
        MetricRow { method: "mcmc".into(), variant: "RANDOM".into(), eps_true: Some(0.5), seed: 3, metric: "rmise".into(), value: 0.102 },
        MetricRow { method: "svi".into(), variant: "IDIO".into(), eps_true: None, seed: 4, metric: "acr".into(), value: 0.9 },
    ];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    write_metrics(&rows, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("method,variant,eps_true,seed,metric,value\n"));
    assert_eq!(read_metrics(&path).unwrap(), rows);
}

proptest! {
    #[test]
    fn score_dominates_width(l in -5.0f64..5.0, w in 0.0f64..5.0, x in -10.0f64..10.0) {
        let u = l + w;
        let s = interval_score_cell(l, u, x, 0.05);
        prop_assert!(s >= u - l);
        prop_assert_eq!(s == u - l, l <= x && x <= u);
    }

    #[test]
    fn stationary_fraction_ignores_bins(seed in 0u64..1000, bins in 1usize..80) {
        use rand::Rng;
        let mut rng = hawkes_ddp::rng::stream(seed, &[]);
        let draws: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.random_range(0.0..0.9)).collect()).collect();
        let a = spectral_histogram(&draws, 2, bins).unwrap();
        let b = spectral_histogram(&draws, 2, 50).unwrap();
        prop_assert_eq!(a.stationary_fraction, b.stationary_fraction);
        prop_assert_eq!(a.bins.iter().map(|b| b.count).sum::<usize>(), 20);
    }
}
