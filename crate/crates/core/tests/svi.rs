use hawkes_ddp::likelihood::PairTable;
use hawkes_ddp::model::GammaParams;
use hawkes_ddp::rng::stream;
use hawkes_ddp::simulator::{simulate_branching, SimScenario, Truth};
use hawkes_ddp::special::{digamma, ln_gamma, log_sum_exp, sample_gamma};
use hawkes_ddp::svi::*;
use hawkes_ddp::{EventSequence, Hyperparams, Variant};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn simulated(horizon: f64, seed: u64) -> EventSequence {
    let truth = Truth::paper_beta(0.5).unwrap();
    simulate_branching(&SimScenario { truth, horizon, seed }).unwrap().sequence
}

fn small_cfg() -> SviConfig {
    SviConfig { h0: 3, h: 3, ..Default::default() }
}

fn mc_ln_beta_norm(eta_a: &GammaParams, eta_b: &GammaParams, draws: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut total = 0.0;
    for _ in 0..draws {
        let a = sample_gamma(eta_a.shape, eta_a.rate, rng);
        let b = sample_gamma(eta_b.shape, eta_b.rate, rng);
        total += ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    }
    total / draws as f64
}

fn all_positive(s: &VariationalState) -> bool {
    let g = |v: &GammaParams| v.shape > 0.0 && v.rate > 0.0;
    let m = |q: &MixtureQ| q.p.iter().all(|&v| v > 0.0) && q.a.iter().all(g) && q.b.iter().all(g);
    s.mu.iter().all(g) && s.alpha.iter().all(g) && m(&s.common) && s.idio.iter().all(m) && s.eps.0 > 0.0 && s.eps.1 > 0.0
}

fn assert_normalized(local: &LocalState) {
    for (slot, _) in local.events.iter().enumerate() {
        let range = local.offsets[slot]..local.offsets[slot + 1];
        let total = local.immigrant[slot] + local.branch[range.clone()].iter().sum::<f64>();
        assert!((total - 1.0).abs() <= 1e-12, "event row sums to {total}");
        for pair in range {
            let block = local.alloc_block(pair);
            assert!((block.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(block.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

#[test]
fn learning_rate_examples() {
    assert_eq!(learning_rate(1, 1.0, 0.0, 1.0), 1.0);
    assert!((learning_rate(3, 1.0, 1.0, 0.5) - 0.5).abs() < 1e-15);
    let s = Schedule::default();
    assert!(s.rate(10) < s.rate(9));
}

#[test]
fn schedule_validation() {
    let bad = |schedule| SviConfig { schedule, ..Default::default() }.validate().is_err();
    assert!(bad(Schedule::RobbinsMonro { rho0: 1.0, tau1: 1.0, tau2: 0.5 }));
    assert!(bad(Schedule::RobbinsMonro { rho0: 1.0, tau1: 1.0, tau2: 1.2 }));
    assert!(bad(Schedule::RobbinsMonro { rho0: 5.0, tau1: 0.0, tau2: 0.7 }));
    assert!(bad(Schedule::Constant(0.0)));
    assert!(SviConfig { kappa: 0.0, ..Default::default() }.validate().is_err());
    assert!(SviConfig { kappa: 1.5, ..Default::default() }.validate().is_err());
    assert!(SviConfig::default().validate().is_ok());
}

#[test]
fn full_window_when_kappa_is_one() {
    let seq = simulated(200.0, 1);
    let mut rng = stream(1, &[]);
    let w = select_window(&seq, 1.0, &mut rng);
    assert_eq!(w.start, 0.0);
    assert_eq!(w.events().collect::<Vec<_>>(), (0..seq.len()).collect::<Vec<_>>());
    assert_eq!(w.subsequence(&seq).unwrap(), seq);
}

#[test]
fn windows_are_deterministic_and_may_be_empty() {
    let seq = EventSequence::new(vec![0.1, 0.2, 0.3], vec![0, 0, 0], 100.0, 1).unwrap();
    let draw = |seed| {
        let mut rng = stream(seed, &[]);
        (0..20).map(|_| select_window(&seq, 0.05, &mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(4), draw(4));
    assert!(draw(4).iter().any(Window::is_empty));
}

#[test]
fn every_event_is_included_with_probability_kappa() {
    let seq = EventSequence::new(vec![0.5, 20.0, 50.0, 99.5], vec![0; 4], 100.0, 1).unwrap();
    let mut rng = stream(2, &[]);
    let n = 40_000;
    let mut hits = [0usize; 4];
    for _ in 0..n {
        for j in select_window(&seq, 0.2, &mut rng).events() {
            hits[j] += 1;
        }
    }
    let se = (0.2f64 * 0.8 / n as f64).sqrt();
    for h in hits {
        assert!((h as f64 / n as f64 - 0.2).abs() < 4.0 * se, "{hits:?}");
    }
}

#[test]
fn q_matches_monte_carlo_example() {
    let eta = GammaParams::new(4.0, 2.0);
    let mut rng = stream(11, &[]);
    let mc = mc_ln_beta_norm(&eta, &eta, 1_000_000, &mut rng) + (2.0 - 1.0) * 0.5f64.ln() + (2.0 - 1.0) * 0.5f64.ln();
    let q = q_expected_log_beta(&eta, &eta, 0.5, 1.0).unwrap();
    assert!((q - mc).abs() <= 0.1, "Q {q} vs MC {mc}");
}

#[test]
fn q_degenerate_limit_is_uniform_density() {
    let eta = GammaParams::new(1e9, 1e9);
    let q = q_expected_log_beta(&eta, &eta, 0.7, 2.0).unwrap();
    assert!((q - (0.5f64).ln()).abs() < 1e-6);
    assert!(taylor_elbo_bound(&eta, &eta).abs() < 1e-6);
}

#[test]
fn q_rejects_lags_outside_support() {
    let eta = GammaParams::new(4.0, 2.0);
    assert!(q_expected_log_beta(&eta, &eta, 0.0, 1.0).is_err());
    assert!(q_expected_log_beta(&eta, &eta, 1.0, 1.0).is_err());
    assert!(q_expected_log_beta(&eta, &eta, -0.1, 1.0).is_err());
}

#[test]
fn taylor_bound_is_symmetric_and_below_monte_carlo() {
    let mut rng = stream(12, &[]);
    for _ in 0..8 {
        let ga = GammaParams::new(rng.random_range(2.0..50.0), rng.random_range(0.5..10.0));
        let gb = GammaParams::new(rng.random_range(2.0..50.0), rng.random_range(0.5..10.0));
        let t = taylor_elbo_bound(&ga, &gb);
        assert!((t - taylor_elbo_bound(&gb, &ga)).abs() < 1e-12);
        let mc = mc_ln_beta_norm(&ga, &gb, 200_000, &mut rng);
        assert!(t <= mc + 0.05, "bound {t} vs MC {mc} at {ga:?} {gb:?}");
    }
}

#[test]
fn event_without_parents_is_an_immigrant() {
    let seq = EventSequence::new(vec![0.5, 3.0, 3.2], vec![0, 1, 0], 5.0, 2).unwrap();
    let cfg = small_cfg();
    let state = initial_variational_state(&cfg, &seq, 1.0);
    let table = PairTable::new(&seq, 1.0);
    let local = update_local(&state, &seq, &table, &Window::full(&seq));
    assert_eq!(local.immigrant[0], 1.0);
    assert_eq!(local.immigrant[1], 1.0);
    assert!(local.immigrant[2] < 1.0);
    assert_normalized(&local);
}

#[test]
fn identical_components_share_responsibility() {
    let seq = EventSequence::new(vec![0.1, 0.4, 0.6], vec![0, 0, 0], 2.0, 1).unwrap();
    let cfg = SviConfig { h0: 2, h: 2, variant: Variant::Idio, ..Default::default() };
    let mut state = initial_variational_state(&cfg, &seq, 1.0);
    let shape = GammaParams::new(5.0, 2.0);
    state.idio[0].a = vec![shape; 2];
    state.idio[0].b = vec![GammaParams::new(6.0, 3.0); 2];
    state.idio[0].p = vec![1.5, 1.5];
    let table = PairTable::new(&seq, 1.0);
    let local = update_local(&state, &seq, &table, &Window::full(&seq));
    for pair in 0..local.num_pairs() {
        let block = local.alloc_block(pair);
        assert_eq!(&block[..2], &[0.0, 0.0]);
        assert!((block[2] - 0.5).abs() < 1e-12 && (block[3] - 0.5).abs() < 1e-12);
    }
}

#[test]
fn concentrated_eps_routes_to_common() {
    let seq = simulated(100.0, 3);
    let cfg = small_cfg();
    let mut state = initial_variational_state(&cfg, &seq, 1.0);
    state.eps = (1e12, 1.0);
    let table = PairTable::new(&seq, 1.0);
    let local = update_local(&state, &seq, &table, &Window::full(&seq));
    assert!(local.num_pairs() > 0);
    for pair in 0..local.num_pairs() {
        let common: f64 = local.alloc_block(pair)[..local.h0].iter().sum();
        assert!(common > 1.0 - 1e-6);
    }
}

#[test]
fn local_update_is_normalized_on_random_windows() {
    let seq = simulated(500.0, 4);
    let cfg = small_cfg();
    let state = initial_variational_state(&cfg, &seq, 1.0);
    let table = PairTable::new(&seq, 1.0);
    let mut rng = stream(4, &[]);
    for _ in 0..50 {
        let w = select_window(&seq, 0.2, &mut rng);
        let local = update_local(&state, &seq, &table, &w);
        assert_eq!(local.events.len(), w.len());
        assert_normalized(&local);
    }
}

#[test]
fn wrapped_windows_drop_parents_across_the_seam() {
    let seq = EventSequence::new(vec![0.2, 9.6, 9.9], vec![0, 0, 0], 10.0, 1).unwrap();
    let state = initial_variational_state(&small_cfg(), &seq, 1.0);
    let table = PairTable::new(&seq, 1.0);
    let w = Window { start: 9.7, length: 1.0, segments: vec![2..3, 0..1] };
    let local = update_local(&state, &seq, &table, &w);
    assert_eq!(local.events, vec![2, 0]);
    assert_eq!(local.immigrant, vec![1.0, 1.0]);
}

#[test]
fn zero_step_leaves_state_unchanged() {
    let seq = simulated(300.0, 5);
    let cfg = small_cfg();
    let mut state = initial_variational_state(&cfg, &seq, 1.0);
    let before = state.clone();
    let table = PairTable::new(&seq, 1.0);
    let local = update_local(&state, &seq, &table, &Window::full(&seq));
    let stats = window_stats(&local, &seq, &table, 1.0);
    update_global(&mut state, &stats, &seq, &cfg.hyper, 0.0);
    assert_eq!(state, before);
}

#[test]
fn empty_window_reduces_to_prior_terms() {
    let seq = simulated(300.0, 6);
    let cfg = small_cfg();
    let hyper = cfg.hyper;
    let mut state = initial_variational_state(&cfg, &seq, 1.0);
    let table = PairTable::new(&seq, 1.0);
    let empty = Window { start: 0.0, length: 0.0, segments: vec![] };
    let local = update_local(&state, &seq, &table, &empty);
    let stats = window_stats(&local, &seq, &table, 5.0);
    update_global(&mut state, &stats, &seq, &hyper, 1.0);
    for &p in &state.common.p {
        assert_eq!(p, hyper.gamma_dp / 3.0);
    }
    for g in &state.mu {
        assert_eq!((g.shape, g.rate), (hyper.e, hyper.f + seq.horizon()));
    }
    for (pc, g) in state.alpha.iter().enumerate() {
        assert_eq!((g.shape, g.rate), (hyper.g, hyper.h + seq.counts()[pc / 2] as f64));
    }
    assert_eq!(state.eps, (1.0, 1.0));
    for g in &state.common.a {
        assert_eq!((g.shape, g.rate), (hyper.common.c_a, hyper.common.d_a));
    }
}

/// Independent evaluation of the coordinate updates on a three-event instance.
#[test]
fn full_step_reproduces_coordinate_updates() {
    let seq = EventSequence::new(vec![0.2, 0.5, 0.9], vec![0, 1, 0], 2.0, 2).unwrap();
    let cfg = SviConfig { h0: 1, h: 1, ..Default::default() };
    let hyper = Hyperparams::default();
    let mut state = initial_variational_state(&cfg, &seq, 1.0);
    state.mu = vec![GammaParams::new(3.0, 5.0), GammaParams::new(2.0, 7.0)];
    state.alpha = vec![
        GammaParams::new(2.0, 4.0),
        GammaParams::new(3.0, 2.0),
        GammaParams::new(5.0, 3.0),
        GammaParams::new(2.5, 6.0),
    ];
    state.eps = (2.0, 3.0);
    state.common = MixtureQ { p: vec![1.7], a: vec![GammaParams::new(6.0, 4.0)], b: vec![GammaParams::new(9.0, 3.0)] };
    for (n, m) in state.idio.iter_mut().enumerate() {
        let s = 4.0 + n as f64;
        *m = MixtureQ { p: vec![0.9], a: vec![GammaParams::new(s, 2.0)], b: vec![GammaParams::new(5.0, s / 2.0)] };
    }
    let el = |g: &GammaParams| digamma(g.shape) - g.rate.ln();
    let el_eps = (digamma(2.0) - digamma(5.0), digamma(3.0) - digamma(5.0));
    let lag_score = |a: &GammaParams, b: &GammaParams, lag: f64| q_expected_log_beta(a, b, lag, 1.0).unwrap();
    // Each mixture has a single component, so E ln p = 0.
    let pair = |i: usize, j: usize| {
        let (di, dj) = (seq.dims()[i], seq.dims()[j]);
        let lag = seq.times()[j] - seq.times()[i];
        let m = &state.idio[di * 2 + dj];
        let c = el_eps.0 + lag_score(&state.common.a[0], &state.common.b[0], lag);
        let d = el_eps.1 + lag_score(&m.a[0], &m.b[0], lag);
        (el(&state.alpha[di * 2 + dj]) + log_sum_exp(&[c, d]), c, d, lag, di * 2 + dj)
    };
    // Event 1 (dim 1): parent 0. Event 2 (dim 0): parents 0 and 1.
    let p10 = pair(0, 1);
    let (p20, p21) = (pair(0, 2), pair(1, 2));
    let z1 = log_sum_exp(&[el(&state.mu[1]), p10.0]);
    let z2 = log_sum_exp(&[el(&state.mu[0]), p20.0, p21.0]);
    let imm = [1.0, (el(&state.mu[1]) - z1).exp(), (el(&state.mu[0]) - z2).exp()];
    let pairs = [((p10.0 - z1).exp(), p10), ((p20.0 - z2).exp(), p20), ((p21.0 - z2).exp(), p21)];
    let mut offspring = [0.0; 4];
    let (mut n_common, mut n_idio) = (0.0, 0.0);
    let mut common_lnx = 0.0;
    for (b, (_, c, d, lag, pc)) in pairs {
        offspring[pc] += b;
        let wc = 1.0 / (1.0 + (d - c).exp());
        n_common += b * wc;
        n_idio += b * (1.0 - wc);
        common_lnx += b * wc * lag.ln();
    }
    let table = PairTable::new(&seq, 1.0);
    let local = update_local(&state, &seq, &table, &Window::full(&seq));
    for (got, want) in local.immigrant.iter().zip(imm) {
        assert!((got - want).abs() < 1e-12);
    }
    let stats = window_stats(&local, &seq, &table, 1.0);
    let mut next = state.clone();
    update_global(&mut next, &stats, &seq, &hyper, 1.0);
    let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    close(next.mu[0].shape, hyper.e + imm[0] + imm[2]);
    close(next.mu[1].shape, hyper.e + imm[1]);
    close(next.mu[0].rate, hyper.f + 2.0);
    for pc in 0..4 {
        close(next.alpha[pc].shape, hyper.g + offspring[pc]);
    }
    close(next.alpha[0].rate, hyper.h + 2.0);
    close(next.alpha[2].rate, hyper.h + 1.0);
    close(next.eps.0, 1.0 + n_common);
    close(next.eps.1, 1.0 + n_idio);
    close(next.common.p[0], hyper.gamma_dp + n_common);
    close(next.common.a[0].rate, hyper.common.d_a - common_lnx);
}

#[test]
fn cavi_blocks_never_decrease_the_objective() {
    let seq = simulated(1000.0, 3);
    let cfg = small_cfg();
    let table = PairTable::new(&seq, 1.0);
    let mut state = initial_variational_state(&cfg, &seq, 1.0);
    let full = Window::full(&seq);
    let hyper = cfg.hyper;
    let mut local = update_local(&state, &seq, &table, &full);
    let mut prev = elbo_with_local(&state, &seq, &table, &local, &hyper).unwrap();
    for it in 0..200 {
        let check = |name: &str, state: &VariationalState, local: &LocalState, prev: &mut f64| {
            let v = elbo_with_local(state, &seq, &table, local, &hyper).unwrap();
            assert!(v >= *prev - 1e-8, "iteration {it}, block {name}: {prev} -> {v}");
            *prev = v;
        };
        local = update_local(&state, &seq, &table, &full);
        check("local", &state, &local, &mut prev);
        let stats = window_stats(&local, &seq, &table, 1.0);
        update_rates(&mut state, &stats, &seq, &hyper, 1.0);
        check("rates", &state, &local, &mut prev);
        update_weights(&mut state, &stats, &hyper, 1.0);
        check("weights", &state, &local, &mut prev);
        update_eps(&mut state, &stats, 1.0);
        check("eps", &state, &local, &mut prev);
        update_shapes(&mut state, &stats, &hyper, 1.0);
        prev = elbo_with_local(&state, &seq, &table, &local, &hyper).unwrap();
        assert!(all_positive(&state));
    }
}

#[test]
fn better_conjugate_block_gives_larger_objective() {
    let seq = simulated(400.0, 8);
    let cfg = small_cfg();
    let table = PairTable::new(&seq, 1.0);
    let state = initial_variational_state(&cfg, &seq, 1.0);
    let local = update_local(&state, &seq, &table, &Window::full(&seq));
    let stats = window_stats(&local, &seq, &table, 1.0);
    let mut better = state.clone();
    update_rates(&mut better, &stats, &seq, &cfg.hyper, 1.0);
    let e0 = elbo_with_local(&state, &seq, &table, &local, &cfg.hyper).unwrap();
    let e1 = elbo_with_local(&better, &seq, &table, &local, &cfg.hyper).unwrap();
    assert!(e1 > e0);
}

#[test]
fn objective_requires_full_data_locals() {
    let seq = simulated(200.0, 9);
    let cfg = small_cfg();
    let table = PairTable::new(&seq, 1.0);
    let state = initial_variational_state(&cfg, &seq, 1.0);
    let w = Window { start: 0.0, length: 10.0, segments: vec![0..3] };
    let local = update_local(&state, &seq, &table, &w);
    assert!(elbo_with_local(&state, &seq, &table, &local, &cfg.hyper).is_err());
}

#[test]
fn objective_is_finite_on_random_states() {
    let seq = simulated(200.0, 10);
    let cfg = small_cfg();
    let table = PairTable::new(&seq, 1.0);
    let mut rng = stream(10, &[]);
    let g = |rng: &mut ChaCha8Rng| GammaParams::new(rng.random_range(0.05..50.0), rng.random_range(0.05..50.0));
    for trial in 0..100 {
        let mut state = initial_variational_state(&cfg, &seq, 1.0);
        state.variant = [Variant::Random, Variant::Idio, Variant::Common][trial % 3];
        for v in state.mu.iter_mut().chain(state.alpha.iter_mut()) {
            *v = g(&mut rng);
        }
        for m in std::iter::once(&mut state.common).chain(state.idio.iter_mut()) {
            for h in 0..m.len() {
                m.p[h] = rng.random_range(0.01..20.0);
                m.a[h] = g(&mut rng);
                m.b[h] = g(&mut rng);
            }
        }
        state.eps = (rng.random_range(0.01..20.0), rng.random_range(0.01..20.0));
        let v = elbo(&state, &seq, &table, &cfg.hyper).unwrap();
        assert!(v.is_finite());
    }
}

#[test]
fn positivity_survives_noisy_updates() {
    let seq = simulated(500.0, 11);
    let cfg = SviConfig { kappa: 0.05, h0: 3, h: 3, ..Default::default() };
    let table = PairTable::new(&seq, 1.0);
    let mut state = initial_variational_state(&cfg, &seq, 1.0);
    let mut rng = stream(11, &[]);
    for r in 1..=300 {
        let w = select_window(&seq, cfg.kappa, &mut rng);
        let local = update_local(&state, &seq, &table, &w);
        assert_normalized(&local);
        let stats = window_stats(&local, &seq, &table, 1.0 / cfg.kappa);
        update_global(&mut state, &stats, &seq, &cfg.hyper, cfg.schedule.rate(r));
        assert!(all_positive(&state));
    }
}

#[test]
fn scaled_window_counts_are_unbiased() {
    let seq = simulated(1000.0, 4);
    let cfg = small_cfg();
    let table = PairTable::new(&seq, 1.0);
    let state = initial_variational_state(&cfg, &seq, 1.0);
    let full = update_local(&state, &seq, &table, &Window::full(&seq)).offspring_mass();
    let mut rng = stream(9, &[1]);
    let n = 2000;
    let samples: Vec<f64> = (0..n)
        .map(|_| {
            let w = select_window(&seq, cfg.kappa, &mut rng);
            update_local(&state, &seq, &table, &w).offspring_mass() / cfg.kappa
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - full).abs() <= 2.0 * se, "window mean {mean} vs full {full} (se {se})");
}

#[test]
fn runs_are_reproducible() {
    let seq = simulated(300.0, 12);
    let cfg = SviConfig { iterations: 60, seed: 3, h0: 3, h: 3, elbo_every: 10, ..Default::default() };
    let a = run_svi(&cfg, &seq, 1.0).unwrap();
    let b = run_svi(&cfg, &seq, 1.0).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.state, b.state);
    assert_eq!(a.trace.len(), 6);
    assert_eq!(a.trace.last().unwrap().0, 60);
}

#[test]
fn batch_schedule_is_coordinate_ascent() {
    let seq = simulated(300.0, 13);
    let cfg = SviConfig { kappa: 1.0, schedule: Schedule::Constant(1.0), iterations: 40, elbo_every: 1, h0: 3, h: 3, ..Default::default() };
    let run = run_svi(&cfg, &seq, 1.0).unwrap();
    let table = PairTable::new(&seq, 1.0);
    let mut state = initial_variational_state(&cfg, &seq, 1.0);
    for _ in 0..40 {
        let local = update_local(&state, &seq, &table, &Window::full(&seq));
        let stats = window_stats(&local, &seq, &table, 1.0);
        update_global(&mut state, &stats, &seq, &cfg.hyper, 1.0);
    }
    assert_eq!(run.state, state);
}

#[test]
fn stochastic_run_approaches_batch_reference() {
    let seq = simulated(3000.0, 5);
    let batch = SviConfig { kappa: 1.0, schedule: Schedule::Constant(1.0), iterations: 1000, seed: 1, ..Default::default() };
    let reference = run_svi(&batch, &seq, 1.0).unwrap();
    let tau1 = 300.0;
    let cfg = SviConfig {
        iterations: 20_000,
        seed: 1,
        schedule: Schedule::RobbinsMonro { rho0: 1.0 + tau1, tau1, tau2: 1.0 },
        ..Default::default()
    };
    let run = run_svi(&cfg, &seq, 1.0).unwrap();
    let (r, s) = (reference.final_elbo(), run.final_elbo());
    assert!((s - r).abs() <= 0.01 * r.abs(), "svi {s} vs batch {r}");
}

#[test]
fn variational_draws() {
    let seq = simulated(300.0, 14);
    let cfg = small_cfg();
    let state = initial_variational_state(&cfg, &seq, 1.0);
    let mut rng = stream(14, &[]);
    assert!(sample_from_variational(&state, 0, &mut rng).unwrap().is_empty());
    let n = 100_000;
    let draws = sample_from_variational(&state, n, &mut rng).unwrap();
    let g = state.mu[0];
    let mean = draws.iter().map(|d| d.mu[0]).sum::<f64>() / n as f64;
    let sd = g.shape.sqrt() / g.rate / (n as f64).sqrt();
    assert!((mean - g.mean()).abs() < 3.0 * sd);
    assert!(draws.iter().all(|d| (0.0..=1.0).contains(&d.eps)));
    let p = draws[0].params(1.0).unwrap();
    assert_eq!(p.num_dims(), 2);
}

#[test]
fn fixed_variants_keep_eps() {
    let seq = simulated(300.0, 15);
    for (variant, eps) in [(Variant::Idio, 0.0), (Variant::Common, 1.0)] {
        let cfg = SviConfig { iterations: 30, variant, h0: 3, h: 3, ..Default::default() };
        let run = run_svi(&cfg, &seq, 1.0).unwrap();
        assert_eq!(run.state.eps_mean(), eps);
        let mut rng = stream(15, &[]);
        let draws = sample_from_variational(&run.state, 5, &mut rng).unwrap();
        assert!(draws.iter().all(|d| d.eps == eps));
    }
}

#[test]
fn state_and_trace_files_round_trip() {
    let seq = simulated(200.0, 16);
    let cfg = SviConfig { iterations: 50, h0: 2, h: 2, ..Default::default() };
    let run = run_svi(&cfg, &seq, 1.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    run.state.write_json(&path).unwrap();
    assert_eq!(VariationalState::read_json(&path).unwrap(), run.state);
    let trace = dir.path().join("trace.csv");
    run.write_trace(&trace).unwrap();
    let text = std::fs::read_to_string(trace).unwrap();
    assert!(text.starts_with("iter,elbo\n"));
    assert_eq!(text.lines().count(), run.trace.len() + 1);
}

#[test]
fn restart_selection_prefers_highest_objective() {
    let seq = simulated(200.0, 17);
    let runs: Vec<_> = (0..3)
        .map(|seed| run_svi(&SviConfig { iterations: 30, seed, h0: 2, h: 2, ..Default::default() }, &seq, 1.0).unwrap())
        .collect();
    let best = select_best_restart(&runs).unwrap();
    assert!(runs.iter().all(|r| r.final_elbo() <= runs[best].final_elbo()));
}
