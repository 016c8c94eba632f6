//! Configuration-driven experiment runner behind the `hawkes-ddp` binary.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! data/<dataset>/events.csv, events.json, dataset.json, truth.json, branching.csv
//! fits/<method>/<VARIANT>/<dataset>/restart_<r>/...   one directory per restart
//! fits/<method>/<VARIANT>/<dataset>/selection.json   scores and selected restart
//! eval/<method>/<VARIANT>/<dataset>/bands.csv, spectral.csv
//! eval/metrics.csv, eval/summary.csv
//! <command>_manifest.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, CurveSamples, Curves, GridSpec, MetricRow};
use crate::io;
use crate::lobster::{self, IngestConfig};
use crate::mcmc::{self, McmcConfig};
use crate::model::{EventSequence, Variant};
use crate::rng::{derive_seed, stream};
use crate::simulator::{simulate_branching, SimScenario, Truth, PAPER_EPS_GRID, PAPER_HORIZON};
use crate::svi::{self, SviConfig, VariationalState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    FitMcmc,
    FitSvi,
    Evaluate,
    Ingest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::FitMcmc => "fit-mcmc",
            Command::FitSvi => "fit-svi",
            Command::Evaluate => "evaluate",
            Command::Ingest => "ingest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TruthFamily {
    #[default]
    Beta,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub family: TruthFamily,
    pub eps_grid: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Custom truth; replaces `family` and `eps_grid`.
    pub truth: Option<Truth>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self { family: TruthFamily::Beta, eps_grid: PAPER_EPS_GRID.to_vec(), horizon: PAPER_HORIZON, truth: None }
    }
}

impl ScenarioConfig {
    fn truths(&self) -> Result<Vec<Truth>> {
        if let Some(t) = &self.truth {
            t.validate()?;
            return Ok(vec![t.clone()]);
        }
        self.eps_grid
            .iter()
            .map(|&e| match self.family {
                TruthFamily::Beta => Truth::paper_beta(e),
                TruthFamily::Exponential => Truth::paper_exponential(e),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub grid_points: usize,
    pub level: f64,
    pub bins: usize,
    /// Draws taken from each variational posterior.
    pub svi_draws: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { grid_points: GridSpec::DEFAULT_POINTS, level: 0.95, bins: 50, svi_draws: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestBlock {
    pub message: PathBuf,
    #[serde(default)]
    pub orderbook: Option<PathBuf>,
    /// Dataset name under `data/`.
    #[serde(default = "default_ingest_name")]
    pub name: String,
    #[serde(default)]
    pub config: IngestConfig,
}

fn default_ingest_name() -> String {
    "lobster".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub scenario: Option<ScenarioConfig>,
    pub mcmc: Option<McmcConfig>,
    pub svi: Option<SviConfig>,
    pub eval: Option<EvalConfig>,
    pub ingest: Option<IngestBlock>,
    /// Variants fitted by `fit-*`; empty means the variant of the method block.
    pub variants: Vec<Variant>,
    /// Dataset names under `data/` to fit; empty means all.
    pub datasets: Vec<String>,
    /// Kernel support T0.
    pub support: f64,
    pub restarts: usize,
    pub replications: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: None,
            scenario: None,
            mcmc: None,
            svi: None,
            eval: None,
            ingest: None,
            variants: Vec::new(),
            datasets: Vec::new(),
            support: 1.0,
            restarts: 1,
            replications: 1,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file, or the config embedded in a manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = io::read_json(path)?;
        match value.get("manifest_version") {
            Some(_) => Ok(serde_json::from_value(value["config"].clone())?),
            None => Ok(serde_json::from_value(value)?),
        }
    }

    pub fn validate(&self, command: Command) -> Result<()> {
        if let Some(c) = self.command {
            if c != command {
                return Err(Error::Config(format!("config is for `{}` but `{}` was run", c.name(), command.name())));
            }
        }
        if self.restarts == 0 || self.replications == 0 {
            return Err(Error::Config("restarts and replications must be at least 1".into()));
        }
        if !(self.support.is_finite() && self.support > 0.0) {
            return Err(Error::Config(format!("support must be positive, got {}", self.support)));
        }
        let missing = |block: &str| Error::Config(format!("`{}` needs a `{block}` block", command.name()));
        match command {
            Command::Simulate => {
                let s = self.scenario.as_ref().ok_or_else(|| missing("scenario"))?;
                if !(s.horizon.is_finite() && s.horizon > 0.0) {
                    return Err(Error::Config(format!("scenario T must be positive, got {}", s.horizon)));
                }
                s.truths()?;
            }
            Command::FitMcmc => self.mcmc.as_ref().ok_or_else(|| missing("mcmc"))?.validate()?,
            Command::FitSvi => self.svi.as_ref().ok_or_else(|| missing("svi"))?.validate()?,
            Command::Evaluate => {
                let e = self.eval.as_ref().ok_or_else(|| missing("eval"))?;
                if !(e.level > 0.0 && e.level < 1.0) || e.grid_points == 0 || e.bins == 0 || e.svi_draws < 2 {
                    return Err(Error::Config(
                        "eval needs level in (0,1), grid_points and bins >= 1 and svi_draws >= 2".into(),
                    ));
                }
            }
            Command::Ingest => self.ingest.as_ref().ok_or_else(|| missing("ingest"))?.config.validate()?,
        }
        Ok(())
    }
}

/// A failed replication or restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub job: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: Command,
    pub crate_version: String,
    pub config: ExperimentConfig,
    pub threads: usize,
    pub wall_seconds: f64,
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<Failure>,
}

/// Runs jobs in parallel; a panic or error in one job does not stop the others.
pub fn run_isolated<T, F>(jobs: Vec<(String, F)>) -> Vec<std::result::Result<T, Failure>>
where
    T: Send,
    F: FnOnce() -> Result<T> + Send,
{
    jobs.into_par_iter()
        .map(|(name, job)| match catch_unwind(AssertUnwindSafe(job)) {
            Ok(Ok(v)) => Ok(v),
            Ok(Err(e)) => Err(Failure { job: name, error: e.to_string() }),
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(Failure { job: name, error: format!("panicked: {msg}") })
            }
        })
        .collect()
}

/// Metadata stored next to every dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub eps_true: Option<f64>,
    pub replication: usize,
    pub seed: u64,
}

fn dataset_name(eps: f64, rep: usize) -> String {
    format!("eps{eps:.2}_rep{rep:02}")
}

struct Outcome {
    outputs: Vec<PathBuf>,
    failures: Vec<Failure>,
}

/// Runs `command` and writes its manifest. Returns the manifest; the caller
/// should fail when `failures` is nonempty.
pub fn run(command: Command, cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Manifest> {
    cfg.validate(command)?;
    let start = Instant::now();
    fs::create_dir_all(&cfg.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| match command {
        Command::Simulate => cmd_simulate(cfg),
        Command::FitMcmc => cmd_fit(cfg, Method::Mcmc),
        Command::FitSvi => cmd_fit(cfg, Method::Svi),
        Command::Evaluate => cmd_evaluate(cfg),
        Command::Ingest => cmd_ingest(cfg),
    })?;
    for f in &outcome.failures {
        log::error!("{}: {}", f.job, f.error);
    }
    let manifest = Manifest {
        manifest_version: 1,
        command,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        config: ExperimentConfig { command: Some(command), ..cfg.clone() },
        threads: pool.current_num_threads(),
        wall_seconds: start.elapsed().as_secs_f64(),
        outputs: outcome.outputs,
        failures: outcome.failures,
    };
    io::write_json(&manifest, &cfg.output_dir.join(format!("{}_manifest.json", command.name())))?;
    Ok(manifest)
}

fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let scenario = cfg.scenario.as_ref().expect("validated");
    let truths = scenario.truths()?;
    let mut jobs = Vec::new();
    for (ti, truth) in truths.into_iter().enumerate() {
        for rep in 0..cfg.replications {
            let name = dataset_name(truth.eps(), rep);
            let dir = cfg.output_dir.join("data").join(&name);
            let seed = derive_seed(cfg.seed, &[0x73696d, ti as u64, rep as u64]);
            let sc = SimScenario { truth: truth.clone(), horizon: scenario.horizon, seed };
            jobs.push((name.clone(), move || -> Result<PathBuf> {
                let sim = simulate_branching(&sc)?;
                fs::create_dir_all(&dir)?;
                io::write_sequence(&sim.sequence, &dir.join("events.csv"))?;
                io::write_json(&sc.truth, &dir.join("truth.json"))?;
                io::write_branching(&sim.latent.parent, &dir.join("branching.csv"))?;
                let info = DatasetInfo { name, eps_true: Some(sc.truth.eps()), replication: rep, seed };
                io::write_json(&info, &dir.join("dataset.json"))?;
                Ok(dir)
            }));
        }
    }
    Ok(collect(run_isolated(jobs)))
}

fn collect(results: Vec<std::result::Result<PathBuf, Failure>>) -> Outcome {
    let mut out = Outcome { outputs: Vec::new(), failures: Vec::new() };
    for r in results {
        match r {
            Ok(p) => out.outputs.push(p),
            Err(f) => out.failures.push(f),
        }
    }
    out
}

fn cmd_ingest(cfg: &ExperimentConfig) -> Result<Outcome> {
    let block = cfg.ingest.as_ref().expect("validated");
    let ingested = lobster::ingest(&block.message, block.orderbook.as_deref(), &block.config)?;
    let dir = cfg.output_dir.join("data").join(&block.name);
    fs::create_dir_all(&dir)?;
    io::write_sequence(&ingested.sequence, &dir.join("events.csv"))?;
    io::write_json(&ingested.report, &dir.join("ingest_report.json"))?;
    let info = DatasetInfo { name: block.name.clone(), eps_true: None, replication: 0, seed: cfg.seed };
    io::write_json(&info, &dir.join("dataset.json"))?;
    log::info!("ingested {} events, counts {:?}", ingested.sequence.len(), ingested.report.counts);
    Ok(Outcome { outputs: vec![dir], failures: Vec::new() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    Mcmc,
    Svi,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Mcmc => "mcmc",
            Method::Svi => "svi",
        }
    }
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Random => "RANDOM",
        Variant::Idio => "IDIO",
        Variant::Common => "COMMON",
    }
}

/// Scores of all restarts of one fit and the selected one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: String,
    pub variant: Variant,
    pub dataset: String,
    /// Mean retained log-likelihood (MCMC) or final ELBO (SVI); `None` for failures.
    pub scores: Vec<Option<f64>>,
    pub selected: Option<usize>,
    pub failures: Vec<Failure>,
}

/// Per-restart manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RestartManifest {
    pub method: String,
    pub dataset: String,
    pub restart: usize,
    pub seed: u64,
    pub num_dims: usize,
    pub support: f64,
    pub h0: usize,
    pub h: usize,
    pub score: f64,
    pub seconds: f64,
    pub acceptance: Option<mcmc::Acceptance>,
}

fn list_datasets(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    if !cfg.datasets.is_empty() {
        return Ok(cfg.datasets.clone());
    }
    let root = cfg.output_dir.join("data");
    let mut names = Vec::new();
    if root.is_dir() {
        for entry in fs::read_dir(&root)? {
            let entry = entry?;
            if entry.path().join("events.csv").is_file() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::Config(format!("no datasets under {}", root.display())));
    }
    Ok(names)
}

fn fit_restart(
    cfg: &ExperimentConfig,
    method: Method,
    variant: Variant,
    dataset: &str,
    seq: &EventSequence,
    restart: usize,
    dir: &Path,
) -> Result<f64> {
    let seed = derive_seed(cfg.seed, &[0x666974, restart as u64]);
    fs::create_dir_all(dir)?;
    let manifest = match method {
        Method::Mcmc => {
            let mc = McmcConfig { variant, seed, ..cfg.mcmc.clone().expect("validated") };
            let run = mcmc::run_chain(&mc, seq, cfg.support)?;
            run.write_csv(&dir.join("samples.csv"))?;
            RestartManifest {
                method: method.name().into(),
                dataset: dataset.into(),
                restart,
                seed,
                num_dims: seq.num_dims(),
                support: cfg.support,
                h0: mc.h0,
                h: mc.h,
                score: run.mean_log_lik(),
                seconds: run.seconds,
                acceptance: Some(run.acceptance),
            }
        }
        Method::Svi => {
            let sc = SviConfig { variant, seed, ..cfg.svi.clone().expect("validated") };
            let run = svi::run_svi(&sc, seq, cfg.support)?;
            run.state.write_json(&dir.join("state.json"))?;
            run.write_trace(&dir.join("elbo.csv"))?;
            RestartManifest {
                method: method.name().into(),
                dataset: dataset.into(),
                restart,
                seed,
                num_dims: seq.num_dims(),
                support: cfg.support,
                h0: sc.h0,
                h: sc.h,
                score: run.final_elbo(),
                seconds: run.seconds,
                acceptance: None,
            }
        }
    };
    if !manifest.score.is_finite() {
        return Err(Error::Domain(format!("restart {restart} finished with score {}", manifest.score)));
    }
    io::write_json(&manifest, &dir.join("manifest.json"))?;
    Ok(manifest.score)
}

fn cmd_fit(cfg: &ExperimentConfig, method: Method) -> Result<Outcome> {
    let datasets = list_datasets(cfg)?;
    let variants = match (cfg.variants.is_empty(), method) {
        (false, _) => cfg.variants.clone(),
        (true, Method::Mcmc) => vec![cfg.mcmc.as_ref().expect("validated").variant],
        (true, Method::Svi) => vec![cfg.svi.as_ref().expect("validated").variant],
    };
    let mut sequences = BTreeMap::new();
    for name in &datasets {
        sequences.insert(name.clone(), io::read_sequence(&cfg.output_dir.join("data").join(name).join("events.csv"))?);
    }
    let fit_dir = |v: Variant, d: &str| cfg.output_dir.join("fits").join(method.name()).join(variant_name(v)).join(d);
    let mut jobs = Vec::new();
    let mut keys = Vec::new();
    for &v in &variants {
        for d in &datasets {
            for r in 0..cfg.restarts {
                let seq = &sequences[d];
                let dir = fit_dir(v, d).join(format!("restart_{r}"));
                let job = format!("{}/{}/{d}/restart_{r}", method.name(), variant_name(v));
                keys.push((v, d.clone(), r));
                jobs.push((job, move || fit_restart(cfg, method, v, d, seq, r, &dir)));
            }
        }
    }
    let results = run_isolated(jobs);
    let mut out = Outcome { outputs: Vec::new(), failures: Vec::new() };
    let mut selections: BTreeMap<(usize, String), Selection> = BTreeMap::new();
    for ((v, d, _), res) in keys.into_iter().zip(results) {
        let vi = variants.iter().position(|&x| x == v).unwrap_or(0);
        let sel = selections.entry((vi, d.clone())).or_insert_with(|| Selection {
            method: method.name().into(),
            variant: v,
            dataset: d.clone(),
            scores: Vec::new(),
            selected: None,
            failures: Vec::new(),
        });
        match res {
            Ok(score) => sel.scores.push(Some(score)),
            Err(f) => {
                sel.scores.push(None);
                sel.failures.push(f.clone());
                out.failures.push(f);
            }
        }
    }
    for sel in selections.values_mut() {
        let ok: Vec<(usize, f64)> = sel.scores.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s))).collect();
        if !ok.is_empty() {
            sel.selected = Some(ok[mcmc::best_index(ok.iter().map(|&(_, s)| s))?].0);
        }
        let dir = fit_dir(sel.variant, &sel.dataset);
        fs::create_dir_all(&dir)?;
        io::write_json(sel, &dir.join("selection.json"))?;
        out.outputs.push(dir);
    }
    Ok(out)
}

fn posterior_curves(
    method: Method,
    run_dir: &Path,
    grid: GridSpec,
    ecfg: &EvalConfig,
    seed: u64,
) -> Result<(CurveSamples, Vec<Vec<f64>>)> {
    let m: RestartManifest = io::read_json(&run_dir.join("manifest.json"))?;
    let params = match method {
        Method::Mcmc => {
            let draws = mcmc::read_draws_csv(&run_dir.join("samples.csv"), m.num_dims, m.h0, m.h)?;
            draws.iter().map(|d| d.params(m.support)).collect::<Result<Vec<_>>>()?
        }
        Method::Svi => {
            let state = VariationalState::read_json(&run_dir.join("state.json"))?;
            let mut rng = stream(seed, &[0x65766c]);
            svi::sample_from_variational(&state, ecfg.svi_draws, &mut rng)?
                .iter()
                .map(|d| d.params(m.support))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let alpha = params.iter().map(|p| p.alpha_flat().to_vec()).collect();
    Ok((CurveSamples::from_params(&params, grid)?, alpha))
}

/// `mean` and sample `sd` per (method, variant, eps_true, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub variant: String,
    pub eps_true: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    /// Empty for a single replication.
    pub sd: Option<f64>,
}

pub fn summarize(rows: &[MetricRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let eps = r.eps_true.map(|e| format!("{e:.2}")).unwrap_or_default();
        groups.entry((r.method.clone(), r.variant.clone(), eps, r.metric.clone())).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((method, variant, eps_true, metric), v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let sd = (n > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
            SummaryRow { method, variant, eps_true, metric, n, mean, sd }
        })
        .collect()
}

fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let ecfg = cfg.eval.as_ref().expect("validated");
    let grid = GridSpec::new(ecfg.grid_points, cfg.support)?;
    let mut selections = Vec::new();
    for method in [Method::Mcmc, Method::Svi] {
        let root = cfg.output_dir.join("fits").join(method.name());
        if !root.is_dir() {
            continue;
        }
        let mut paths = Vec::new();
        for variant in fs::read_dir(&root)? {
            for ds in fs::read_dir(variant?.path())? {
                let p = ds?.path().join("selection.json");
                if p.is_file() {
                    paths.push(p);
                }
            }
        }
        paths.sort();
        for p in paths {
            selections.push((method, io::read_json::<Selection>(&p)?, p.parent().unwrap().to_path_buf()));
        }
    }
    if selections.is_empty() {
        return Err(Error::Config(format!("no fits under {}", cfg.output_dir.join("fits").display())));
    }
    let jobs: Vec<_> = selections
        .iter()
        .map(|(method, sel, dir)| {
            let name = format!("{}/{}/{}", method.name(), variant_name(sel.variant), sel.dataset);
            let job = move || -> Result<(PathBuf, Vec<MetricRow>)> {
                let r = sel.selected.ok_or_else(|| Error::Contract("no successful restart".into()))?;
                let data_dir = cfg.output_dir.join("data").join(&sel.dataset);
                let info: DatasetInfo = io::read_json(&data_dir.join("dataset.json"))?;
                let (samples, alpha) = posterior_curves(*method, &dir.join(format!("restart_{r}")), grid, ecfg, cfg.seed)?;
                let out_dir = cfg
                    .output_dir
                    .join("eval")
                    .join(method.name())
                    .join(variant_name(sel.variant))
                    .join(&sel.dataset);
                fs::create_dir_all(&out_dir)?;
                eval::write_bands_csv(&eval::excitation_bands(&samples, ecfg.level)?, &out_dir.join("bands.csv"))?;
                let hist = eval::spectral_histogram(&alpha, samples.num_dims, ecfg.bins)?;
                hist.write_csv(&out_dir.join("spectral.csv"))?;
                let row = |metric: &str, value: f64| MetricRow {
                    method: method.name().into(),
                    variant: variant_name(sel.variant).into(),
                    eps_true: info.eps_true,
                    seed: info.replication as u64,
                    metric: metric.into(),
                    value,
                };
                let mut rows = vec![row("stationary_fraction", hist.stationary_fraction)];
                let truth_path = data_dir.join("truth.json");
                if truth_path.is_file() {
                    let truth: Truth = io::read_json(&truth_path)?;
                    let tc = Curves::from_fn(truth.num_dims(), grid, |p, c, x| truth.density(p, c, x));
                    rows.push(row("rmise", eval::rmise(&tc, &samples)?));
                    rows.push(row("acr", eval::coverage_acr(&samples, &tc, ecfg.level)?));
                    rows.push(row("interval_score", eval::interval_score(&samples, &tc, ecfg.level)?));
                }
                Ok((out_dir, rows))
            };
            (name, job)
        })
        .collect();
    let mut out = Outcome { outputs: Vec::new(), failures: Vec::new() };
    let mut rows = Vec::new();
    for res in run_isolated(jobs) {
        match res {
            Ok((dir, r)) => {
                out.outputs.push(dir);
                rows.extend(r);
            }
            Err(f) => out.failures.push(f),
        }
    }
    let eval_dir = cfg.output_dir.join("eval");
    fs::create_dir_all(&eval_dir)?;
    eval::write_metrics(&rows, &eval_dir.join("metrics.csv"))?;
    let mut w = csv::Writer::from_path(eval_dir.join("summary.csv"))?;
    for s in summarize(&rows) {
        w.serialize(s)?;
    }
    w.flush()?;
    out.outputs.push(eval_dir.join("metrics.csv"));
    out.outputs.push(eval_dir.join("summary.csv"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolation_keeps_other_jobs() {
        let jobs: Vec<(String, Box<dyn FnOnce() -> Result<usize> + Send>)> = vec![
            ("a".into(), Box::new(|| Ok(1))),
            ("b".into(), Box::new(|| panic!("boom"))),
            ("c".into(), Box::new(|| Err(Error::Domain("bad".into())))),
            ("d".into(), Box::new(|| Ok(4))),
        ];
        let res = run_isolated(jobs);
        assert_eq!(res[0].as_ref().unwrap(), &1);
        assert!(res[1].as_ref().unwrap_err().error.contains("boom"));
        assert!(res[2].as_ref().unwrap_err().error.contains("bad"));
        assert_eq!(res[3].as_ref().unwrap(), &4);
    }

    #[test]
    fn summary_sd_empty_for_single_replication() {
        let row = |seed, value| MetricRow {
            method: "mcmc".into(),
            variant: "RANDOM".into(),
            eps_true: Some(0.5),
            seed,
            metric: "rmise".into(),
            value,
        };
        let s = summarize(&[row(0, 1.0)]);
        assert_eq!((s[0].n, s[0].mean, s[0].sd), (1, 1.0, None));
        let s = summarize(&[row(0, 1.0), row(1, 3.0)]);
        assert_eq!(s[0].mean, 2.0);
        assert!((s[0].sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
