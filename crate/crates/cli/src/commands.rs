use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tracklet_core::arena::Action;
use tracklet_core::marl::{self, mean_std, MetricsRow, Pipeline, TrainError, TrainOutcome};
use tracklet_core::nets::checkpoint::{Checkpoint, CheckpointError};
use tracklet_core::nets::PolicyModel;
use tracklet_core::{Precision, Trainer};

use crate::config::RunConfig;
use crate::metrics::{read_metrics, MetricsWriter};
use crate::plot::{aggregate, render_svg};
use crate::{CliError, EXIT_NONFINITE};

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const SUMMARY_CSV: &str = "summary.csv";

pub fn metrics_file(seed: u64) -> String {
    format!("metrics_seed{seed}.csv")
}

pub fn checkpoint_file(seed: u64) -> String {
    format!("checkpoint_seed{seed}.bin")
}

/// Options shared by `train` and `sweep-dropout`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub overrides: Vec<String>,
    pub overwrite: bool,
}

impl RunOptions {
    fn load(&self) -> Result<(RunConfig, PathBuf), CliError> {
        let mut cfg = RunConfig::load(&self.config, &self.overrides)?;
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
            cfg.validate().map_err(CliError::input)?;
        }
        let stem = self.config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        let out = cfg.resolve_out(self.out.as_deref(), stem);
        Ok((cfg, out))
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::runtime(format!("{}: {e}", path.display()))
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) => CliError::input(e.to_string()),
        _ => CliError::runtime(e.to_string()),
    }
}

/// Create `dir`, refusing to reuse a non-empty directory unless `overwrite`.
pub fn prepare_out_dir(dir: &Path, overwrite: bool) -> Result<(), CliError> {
    if let Ok(mut entries) = fs::read_dir(dir) {
        if entries.next().is_some() && !overwrite {
            return Err(CliError::input(format!(
                "output directory {} is not empty; pass --overwrite to reuse it",
                dir.display()
            )));
        }
    } else if dir.exists() {
        return Err(CliError::input(format!("{} exists and is not a directory", dir.display())));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub outcome: TrainOutcome,
}

/// Train every seed of `cfg` into `out`, which must already exist.
pub fn run_training(cfg: &RunConfig, out: &Path) -> Result<Vec<SeedResult>, CliError> {
    let snapshot = RunConfig { out_dir: None, ..cfg.clone() };
    let cfg_path = out.join(RESOLVED_CONFIG);
    fs::write(&cfg_path, snapshot.to_toml()).map_err(io_err(&cfg_path))?;
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        log::info!("seed {seed}: training into {}", out.display());
        let mut trainer = Trainer::new(&cfg.task, &cfg.observation, &cfg.trainer, seed).map_err(train_err)?;
        let mpath = out.join(metrics_file(seed));
        let mut writer = MetricsWriter::create(&mpath).map_err(io_err(&mpath))?;
        let mut write_err = None;
        let outcome = trainer
            .run(|row: &MetricsRow| {
                if let Err(e) = writer.push(row) {
                    write_err.get_or_insert(e);
                }
            })
            .map_err(train_err)?;
        if let Some(e) = write_err {
            return Err(io_err(&mpath)(e));
        }
        writer.finish().map_err(io_err(&mpath))?;
        let cpath = out.join(checkpoint_file(seed));
        Checkpoint::from_models(trainer.models())
            .save(&cpath)
            .map_err(|e| CliError::runtime(format!("{}: {e}", cpath.display())))?;
        if let Some(reason) = &outcome.aborted {
            return Err(CliError {
                code: EXIT_NONFINITE,
                message: format!("seed {seed}: training aborted: {reason}; last finite parameters saved to {}", cpath.display()),
            });
        }
        results.push(SeedResult { seed, outcome });
    }
    Ok(results)
}

fn format_metric(m: Option<f64>) -> String {
    m.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

pub fn train(opts: &RunOptions, stdout: &mut impl Write) -> Result<(), CliError> {
    let (cfg, out) = opts.load()?;
    prepare_out_dir(&out, opts.overwrite)?;
    let results = run_training(&cfg, &out)?;
    for r in &results {
        let _ = writeln!(stdout, "seed {}: final metric {}", r.seed, format_metric(r.outcome.final_metric));
    }
    let _ = writeln!(stdout, "outputs in {}", out.display());
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub checkpoint: PathBuf,
    pub config: PathBuf,
    pub overrides: Vec<String>,
    pub episodes: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn check_models(models: &[PolicyModel<Precision>], cfg: &RunConfig, pipeline: &Pipeline) -> Result<(), String> {
    let want = cfg.observation.representation;
    let n_models = if cfg.trainer.share_params { 1 } else { cfg.task.n_agents };
    if models.len() != n_models {
        return Err(format!("checkpoint holds {} parameter sets, config expects {n_models}", models.len()));
    }
    for m in models {
        if m.representation() != want {
            return Err(format!(
                "checkpoint representation {:?} does not match config representation {want:?}",
                m.representation()
            ));
        }
        let ok = match m {
            PolicyModel::Gcn(n) => n.arch().input_dim == pipeline.node_dim() && n.arch().n_actions == Action::COUNT,
            PolicyModel::Mlp(n) => {
                let a = n.arch();
                a.n_nodes == pipeline.n_nodes() && a.node_dim == pipeline.node_dim() && a.n_actions == Action::COUNT
            }
        };
        if !ok {
            return Err("checkpoint network dimensions do not match the configured task and observation".into());
        }
    }
    Ok(())
}

/// Greedy evaluation of a saved checkpoint. Returns per-episode rewards.
pub fn eval(opts: &EvalOptions, stdout: &mut impl Write) -> Result<Vec<f64>, CliError> {
    let cfg = RunConfig::load(&opts.config, &opts.overrides)?;
    let episodes = opts.episodes.unwrap_or(cfg.trainer.eval_episodes);
    if episodes == 0 {
        return Err(CliError::input("eval needs at least 1 episode"));
    }
    let ck = Checkpoint::load(&opts.checkpoint)
        .map_err(|e: CheckpointError| CliError::input(format!("{}: {e}", opts.checkpoint.display())))?;
    let models: Vec<PolicyModel<Precision>> =
        ck.to_models().map_err(|e| CliError::input(format!("{}: {e}", opts.checkpoint.display())))?;
    let pipeline = Pipeline::new(&cfg.task, &cfg.observation).map_err(train_err)?;
    check_models(&models, &cfg, &pipeline).map_err(|e| CliError::input(format!("{}: {e}", opts.checkpoint.display())))?;
    let seed = opts.seed.unwrap_or(cfg.seeds[0]);
    let rewards = marl::evaluate(&pipeline, &models, seed, episodes, cfg.observation.eval_rate()).map_err(train_err)?;
    let (mean, std) = mean_std(&rewards);
    let out = opts.out.clone().unwrap_or_else(|| opts.checkpoint.with_extension("eval.csv"));
    write_eval_csv(&out, &rewards).map_err(io_err(&out))?;
    let _ = writeln!(stdout, "mean reward {mean:.4} ± {std:.4} over {episodes} episodes (seed {seed})");
    Ok(rewards)
}

fn write_eval_csv(path: &Path, rewards: &[f64]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "team_reward"])?;
    for (i, r) in rewards.iter().enumerate() {
        w.write_record([i.to_string(), r.to_string()])?;
    }
    w.flush()
}

/// Comma-separated dropout rates, each in [0, 1], without duplicates.
pub fn parse_rates(text: &str) -> Result<Vec<f64>, CliError> {
    let mut rates = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let p: f64 = part.parse().map_err(|_| CliError::input(format!("invalid dropout rate {part:?}")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::input(format!("dropout rate {p} outside [0, 1]")));
        }
        if rates.contains(&p) {
            return Err(CliError::input(format!("duplicate dropout rate {p}")));
        }
        rates.push(p);
    }
    Ok(rates)
}

pub fn rate_dir(rate: f64) -> String {
    format!("p{rate}")
}

/// Final metric per rate (outer) and seed (inner).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub task: String,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub finals: Vec<Vec<Option<f64>>>,
}

impl SweepSummary {
    /// Table with one column per rate and rows for the mean, the standard
    /// deviation and each seed.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from("task,statistic");
        for r in &self.rates {
            s.push_str(&format!(",{r}"));
        }
        s.push('\n');
        let stats: Vec<(f64, f64)> = self
            .finals
            .iter()
            .map(|col| mean_std(&col.iter().flatten().copied().collect::<Vec<_>>()))
            .collect();
        for (label, pick) in [("mean", 0), ("std", 1)] {
            s.push_str(&format!("{},{label}", self.task));
            for st in &stats {
                let v = if pick == 0 { st.0 } else { st.1 };
                s.push_str(&format!(",{}", cell(v.is_finite().then_some(v))));
            }
            s.push('\n');
        }
        for (j, seed) in self.seeds.iter().enumerate() {
            s.push_str(&format!("{},seed{seed}", self.task));
            for col in &self.finals {
                s.push_str(&format!(",{}", cell(col[j])));
            }
            s.push('\n');
        }
        s
    }
}

pub fn sweep_dropout(opts: &RunOptions, rates: &[f64], stdout: &mut impl Write) -> Result<SweepSummary, CliError> {
    let (cfg, out) = opts.load()?;
    prepare_out_dir(&out, opts.overwrite)?;
    let mut finals = Vec::new();
    for &rate in rates {
        let mut run = cfg.clone();
        run.observation.dropout = rate;
        run.observation.eval_dropout = true;
        run.validate().map_err(CliError::input)?;
        let dir = out.join(rate_dir(rate));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let results = run_training(&run, &dir)?;
        finals.push(results.iter().map(|r| r.outcome.final_metric).collect());
    }
    let summary = SweepSummary { task: cfg.task.task.to_string(), rates: rates.to_vec(), seeds: cfg.seeds.clone(), finals };
    let text = summary.to_csv();
    let path = out.join(SUMMARY_CSV);
    fs::write(&path, &text).map_err(io_err(&path))?;
    let _ = write!(stdout, "{text}");
    Ok(summary)
}

#[derive(Debug, Clone, Default)]
pub struct PlotOptions {
    pub metrics: Vec<PathBuf>,
    pub out: PathBuf,
    pub title: Option<String>,
}

/// Writes the SVG at `out` and the aggregated curve next to it as CSV.
pub fn plot(opts: &PlotOptions, stdout: &mut impl Write) -> Result<(), CliError> {
    if opts.metrics.is_empty() {
        return Err(CliError::input("plot needs at least one metrics file"));
    }
    let runs = opts
        .metrics
        .iter()
        .map(|p| read_metrics(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::input)?;
    let points = aggregate(&runs);
    let title = opts.title.clone().unwrap_or_else(|| format!("{} run(s)", runs.len()));
    fs::write(&opts.out, render_svg(&points, &title)).map_err(io_err(&opts.out))?;
    let csv_path = opts.out.with_extension("csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::runtime(format!("{}: {e}", csv_path.display())))?;
    for p in &points {
        w.serialize(p).map_err(|e| CliError::runtime(e.to_string()))?;
    }
    w.flush().map_err(io_err(&csv_path))?;
    let _ = writeln!(stdout, "wrote {} and {}", opts.out.display(), csv_path.display());
    Ok(())
}
