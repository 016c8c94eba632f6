use hawkes_ddp::mcmc::{run_chain, McmcConfig};
use hawkes_ddp::simulator::{simulate_branching, SimScenario, Truth};
use hawkes_ddp::Variant;

#[test]
fn recovers_rates_at_desk_scale() {
    let truth = Truth::paper_beta(0.5).unwrap();
    let sim = simulate_branching(&SimScenario { truth, horizon: 3000.0, seed: 21 }).unwrap();
    let cfg = McmcConfig { iterations: 1500, burn_in: 750, variant: Variant::Random, seed: 5, ..Default::default() };
    let t = std::time::Instant::now();
    let run = run_chain(&cfg, &sim.sequence, 1.0).unwrap();
    eprintln!("n = {}, {:.2}s", sim.sequence.len(), t.elapsed().as_secs_f64());
    let n = run.draws.len() as f64;
    let mu: Vec<f64> = (0..2).map(|k| run.draws.iter().map(|d| d.mu[k]).sum::<f64>() / n).collect();
    let alpha: Vec<f64> = (0..4).map(|k| run.draws.iter().map(|d| d.alpha[k]).sum::<f64>() / n).collect();
    let eps = run.draws.iter().map(|d| d.eps).sum::<f64>() / n;
    eprintln!("mu {mu:?} alpha {alpha:?} eps {eps} acc {:?}", run.acceptance);
    for (m, truth) in mu.iter().zip([0.05, 0.1]) {
        assert!((m - truth).abs() <= 0.5 * truth, "mu {m} vs {truth}");
    }
    for (a, truth) in alpha.iter().zip([0.6, 0.15, 0.3, 0.6]) {
        assert!((a - truth).abs() <= 0.15, "alpha {a} vs {truth}");
    }
}
