//! Command-line driver: generate, train, sweep, match, eval and report.

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::eval::{evaluate_matching, feature_report, matches_to_geojson, MatchedTrajectory};
use crate::experiment::{run_protocol, FeatureConfig, SplitConfig, SweepConfig};
use crate::lattice::LatticeConfig;
use crate::network::{load_network, save_network, RoadNetwork};
use crate::optim::OptimOptions;
use crate::pipeline::prepare_training;
use crate::synth::{
    generate_dataset, generate_network, BehaviorSpec, NoiseSpec, TripSpec, WorldSpec,
};
use crate::training::{train_l1, train_l2, Model, Regularizer};
use crate::trajectory::{
    degrade_sampling, load_trajectories, save_trajectories, GroundTruth, Trajectory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub network: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub matches: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            network: None,
            trajectories: None,
            model: None,
            matches: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub regularizer: Regularizer,
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let o = OptimOptions::default();
        Self {
            regularizer: Regularizer::L1,
            lambda: None,
            tol: o.tol,
            max_iter: o.max_iter,
            memory: o.memory,
        }
    }
}

impl TrainingConfig {
    pub fn optim(&self) -> OptimOptions {
        OptimOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            memory: self.memory,
            ..OptimOptions::default()
        }
    }
}

/// Everything a run depends on; loaded from JSON and overridden by flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub world: WorldSpec,
    pub behavior: BehaviorSpec,
    pub noise: NoiseSpec,
    pub trips: TripSpec,
    pub lattice: LatticeConfig,
    pub features: FeatureConfig,
    pub training: TrainingConfig,
    pub sweep: SweepConfig,
    pub split: SplitConfig,
    /// Sampling intervals in seconds; empty means "use the data as given".
    pub intervals: Vec<f64>,
}

#[derive(Debug, Parser)]
#[command(
    name = "crfmatch",
    version,
    about = "CRF map matching for sparse GPS trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic grid city and noisy trips.
    Generate(GenerateArgs),
    /// Train a model at a fixed penalty.
    Train(TrainArgs),
    /// Run the λ sweep protocol (train / holdout / test) per sampling interval.
    Sweep(SweepArgs),
    /// Decode trajectories with a trained model.
    Match(MatchArgs),
    /// Score matches against ground truth.
    Eval(EvalArgs),
    /// Print the nonzero weights of a model.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Inputs {
    /// Road network GeoJSON.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Trajectory CSV.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LatticeFlags {
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    max_radius: Option<f64>,
    #[arg(long)]
    max_point_states: Option<usize>,
    #[arg(long)]
    max_paths: Option<usize>,
    #[arg(long)]
    slack: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegFlag {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CosineFlag {
    Similarity,
    Distance,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    /// World specification JSON (grid size, spacing, classes, speed limits).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    trips: Option<usize>,
    /// Degrade the trips to this sampling interval in seconds.
    #[arg(long)]
    interval: Option<f64>,
    /// Comma-separated intervals; writes one trajectory file per interval.
    #[arg(long, value_delimiter = ',')]
    intervals: Option<Vec<f64>>,
    /// Seed for both the world and the trips.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gps_sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    lattice: LatticeFlags,
    #[arg(long, value_enum)]
    reg: Option<RegFlag>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    period_width: Option<u32>,
    #[arg(long, value_enum)]
    cosine: Option<CosineFlag>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    #[command(flatten)]
    lattice: LatticeFlags,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    decay: Option<f64>,
    /// Comma-separated sampling intervals in seconds.
    #[arg(long, value_delimiter = ',')]
    intervals: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    inputs: Inputs,
    /// Matches JSON written by `match`.
    #[arg(long)]
    matches: Option<PathBuf>,
    /// Model to match with when no matches file is given.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    intervals: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn execute<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &FsPath) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::file(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: format!("{} line {} column {}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => read_json_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.paths.output_dir = out.clone();
    }
    Ok(cfg)
}

fn apply_inputs(cfg: &mut RunConfig, inputs: &Inputs) {
    if let Some(p) = &inputs.network {
        cfg.paths.network = Some(p.clone());
    }
    if let Some(p) = &inputs.trajectories {
        cfg.paths.trajectories = Some(p.clone());
    }
}

fn apply_lattice(cfg: &mut LatticeConfig, f: &LatticeFlags) {
    if let Some(v) = f.radius {
        cfg.radius = v;
    }
    if let Some(v) = f.max_radius {
        cfg.max_radius = v;
    }
    if let Some(v) = f.max_point_states {
        cfg.max_point_states = v;
    }
    if let Some(v) = f.max_paths {
        cfg.max_paths = v;
    }
    if let Some(v) = f.slack {
        cfg.slack = v;
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| Error::Argument(format!("no {what} path given (flag or config)")))
}

fn write_json(dir: &FsPath, name: &str, value: &Value) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(Error::file(dir))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).map_err(Error::file(&path))?;
    Ok(path)
}

fn with_config(cfg: &RunConfig, result: impl Serialize) -> Result<Value> {
    Ok(json!({ "config": serde_json::to_value(cfg)?, "result": serde_json::to_value(result)? }))
}

fn interval_tag(iv: f64) -> String {
    format!("{iv}s")
}

fn load_inputs(cfg: &RunConfig) -> Result<(RoadNetwork, Vec<Trajectory>)> {
    let net = load_network(required(&cfg.paths.network, "network")?)?;
    let trajs = load_trajectories(
        required(&cfg.paths.trajectories, "trajectory")?,
        net.projection(),
    )?;
    Ok((net, trajs))
}

fn degrade_all(trajs: &[Trajectory], iv: f64) -> Result<Vec<Trajectory>> {
    let mut out = Vec::with_capacity(trajs.len());
    for t in trajs {
        match degrade_sampling(t, iv) {
            Ok(d) => out.push(d),
            Err(Error::DegenerateTrajectory { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn run(command: Command) -> Result<String> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Match(a) => match_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Report(a) => report(a),
    }
}

fn generate(a: GenerateArgs) -> Result<String> {
    let mut cfg = load_config(&a.common)?;
    if let Some(p) = &a.spec {
        cfg.world = read_json_file(p)?;
    }
    if let Some(n) = a.trips {
        cfg.trips.count = n;
    }
    if let Some(s) = a.seed {
        cfg.world.seed = s;
        cfg.trips.seed = s;
    }
    if let Some(s) = a.gps_sigma {
        cfg.noise.gps_sigma = s;
    }
    let single = a.interval.is_some() && a.intervals.is_none();
    if let Some(iv) = a.interval {
        cfg.intervals = vec![iv];
    }
    if let Some(ivs) = a.intervals {
        cfg.intervals = ivs;
    }
    let net = generate_network(&cfg.world)?;
    let trajs = generate_dataset(&net, &cfg.behavior, &cfg.noise, &cfg.trips)?;
    let dir = cfg.paths.output_dir.clone();
    fs::create_dir_all(&dir).map_err(Error::file(&dir))?;
    save_network(&net, dir.join("network.geojson"))?;
    let mut written = Vec::new();
    match cfg.intervals.as_slice() {
        [] => {
            save_trajectories(&trajs, dir.join("trajectories.csv"))?;
            written.push((cfg.noise.interval, trajs.len()));
        }
        [iv] if single => {
            let d = degrade_all(&trajs, *iv)?;
            save_trajectories(&d, dir.join("trajectories.csv"))?;
            written.push((*iv, d.len()));
        }
        ivs => {
            for &iv in ivs {
                let d = degrade_all(&trajs, iv)?;
                save_trajectories(
                    &d,
                    dir.join(format!("trajectories_{}.csv", interval_tag(iv))),
                )?;
                written.push((iv, d.len()));
            }
        }
    }
    let summary: Vec<Value> = written
        .iter()
        .map(|(iv, n)| json!({ "interval": iv, "trajectories": n }))
        .collect();
    write_json(
        &dir,
        "generate.json",
        &with_config(
            &cfg,
            json!({ "nodes": net.nodes().len(), "segments": net.segments().len(), "files": summary }),
        )?,
    )?;
    Ok(format!(
        "generated {} segments and {} trips into {}",
        net.segments().len(),
        trajs.len(),
        dir.display()
    ))
}

fn train(a: TrainArgs) -> Result<String> {
    let mut cfg = load_config(&a.common)?;
    apply_inputs(&mut cfg, &a.inputs);
    apply_lattice(&mut cfg.lattice, &a.lattice);
    if let Some(r) = a.reg {
        cfg.training.regularizer = match r {
            RegFlag::L1 => Regularizer::L1,
            RegFlag::L2 => Regularizer::L2,
        };
    }
    if let Some(l) = a.lambda {
        cfg.training.lambda = Some(l);
    }
    if let Some(t) = a.tol {
        cfg.training.tol = t;
    }
    if let Some(m) = a.max_iter {
        cfg.training.max_iter = m;
    }
    if let Some(w) = a.period_width {
        cfg.features.period_width_hours = w;
    }
    if let Some(c) = a.cosine {
        cfg.features.cosine_mode = match c {
            CosineFlag::Similarity => crate::features::CosineMode::Similarity,
            CosineFlag::Distance => crate::features::CosineMode::Distance,
        };
    }
    let lambda = cfg.training.lambda.ok_or_else(|| {
        Error::Argument("train needs --lambda (or training.lambda in the config)".into())
    })?;
    let (net, trajs) = load_inputs(&cfg)?;
    let registry = cfg.features.registry(&net)?;
    let set = prepare_training::<f64>(&net, &registry, &trajs, &cfg.lattice)?;
    let opts = cfg.training.optim();
    let fit = match cfg.training.regularizer {
        Regularizer::L1 => train_l1(&set.examples, lambda, &opts, None)?,
        Regularizer::L2 => train_l2(&set.examples, lambda, &opts)?,
    };
    let model = Model::new(fit, registry, set.scaler, cfg.lattice)?;
    let dir = cfg.paths.output_dir.clone();
    fs::create_dir_all(&dir).map_err(Error::file(&dir))?;
    let model_path = cfg
        .paths
        .model
        .clone()
        .unwrap_or_else(|| dir.join("model.json"));
    model.save(&model_path)?;
    write_json(
        &dir,
        "train.json",
        &with_config(
            &cfg,
            json!({ "meta": model.meta, "preparation": set.stats, "nonzero": model.nonzero() }),
        )?,
    )?;
    Ok(format!(
        "trained {} model (lambda {lambda}) with {} of {} nonzero weights on {} examples -> {}",
        model.meta.regularizer,
        model.nonzero(),
        model.theta.len(),
        set.stats.examples,
        model_path.display()
    ))
}

fn sweep(a: SweepArgs) -> Result<String> {
    let mut cfg = load_config(&a.common)?;
    apply_inputs(&mut cfg, &a.inputs);
    apply_lattice(&mut cfg.lattice, &a.lattice);
    if let Some(p) = a.points {
        cfg.sweep.points = p;
    }
    if let Some(d) = a.decay {
        cfg.sweep.decay = d;
    }
    if let Some(ivs) = a.intervals {
        cfg.intervals = ivs;
    }
    if let Some(s) = a.seed {
        cfg.split.seed = s;
    }
    if let Some(t) = a.tol {
        cfg.training.tol = t;
    }
    if let Some(m) = a.max_iter {
        cfg.training.max_iter = m;
    }
    let (net, trajs) = load_inputs(&cfg)?;
    let runs: Vec<(Option<f64>, Vec<Trajectory>)> = if cfg.intervals.is_empty() {
        vec![(None, trajs)]
    } else {
        cfg.intervals
            .iter()
            .map(|&iv| Ok((Some(iv), degrade_all(&trajs, iv)?)))
            .collect::<Result<_>>()?
    };
    let dir = cfg.paths.output_dir.clone();
    fs::create_dir_all(&dir).map_err(Error::file(&dir))?;
    let mut results = Vec::new();
    let mut lines = Vec::new();
    for (iv, data) in runs {
        let run = run_protocol::<f64>(
            &net,
            &data,
            &cfg.lattice,
            &cfg.features,
            &cfg.split,
            &cfg.sweep,
            &cfg.training.optim(),
        )?;
        let suffix = iv
            .map(|v| format!("_{}", interval_tag(v)))
            .unwrap_or_default();
        run.l1_model
            .save(dir.join(format!("model_l1{suffix}.json")))?;
        run.l2_model
            .save(dir.join(format!("model_l2{suffix}.json")))?;
        let o = &run.outcome;
        lines.push(format!(
            "{:>9} {:>4} {:>8.4} {:>8.4} {:>4} {:>8.4} {:>8.4}",
            iv.map(interval_tag).unwrap_or_else(|| "-".into()),
            o.l1.nonzero,
            o.l1.test.point_error_rate,
            o.l1.test.path_error_rate,
            o.l2.nonzero,
            o.l2.test.point_error_rate,
            o.l2.test.path_error_rate
        ));
        results.push(json!({ "interval": iv, "outcome": o }));
    }
    write_json(&dir, "sweep.json", &with_config(&cfg, &results)?)?;
    let mut table = format!(
        "{:>9} {:>4} {:>8} {:>8} {:>4} {:>8} {:>8}\n",
        "interval", "l1nz", "l1point", "l1path", "l2nz", "l2point", "l2path"
    );
    for l in &lines {
        table.push_str(l);
        table.push('\n');
    }
    fs::write(dir.join("sweep.txt"), &table).map_err(Error::file(dir.join("sweep.txt")))?;
    print!("{table}");
    Ok(format!(
        "swept {} dataset(s) into {}",
        lines.len(),
        dir.display()
    ))
}

fn match_cmd(a: MatchArgs) -> Result<String> {
    let mut cfg = load_config(&a.common)?;
    apply_inputs(&mut cfg, &a.inputs);
    if let Some(m) = &a.model {
        cfg.paths.model = Some(m.clone());
    }
    let model = Model::<f64>::load(required(&cfg.paths.model, "model")?)?;
    let (net, trajs) = load_inputs(&cfg)?;
    model.check_network(&net)?;
    let matches = model.match_all(&net, &trajs)?;
    let dir = cfg.paths.output_dir.clone();
    write_json(&dir, "matches.json", &with_config(&cfg, &matches)?)?;
    write_json(
        &dir,
        "matches.geojson",
        &matches_to_geojson(&net, &matches)?,
    )?;
    let failed = matches.iter().filter(|m| m.failure.is_some()).count();
    Ok(format!(
        "matched {} trajectories ({failed} failed) -> {}",
        matches.len(),
        dir.join("matches.json").display()
    ))
}

fn truths(trajs: &[Trajectory]) -> Result<Vec<(&str, &GroundTruth)>> {
    trajs
        .iter()
        .map(|t| {
            t.truth().map(|g| (t.id(), g)).ok_or_else(|| {
                Error::Argument(format!("trajectory {} has no ground truth", t.id()))
            })
        })
        .collect()
}

fn eval(a: EvalArgs) -> Result<String> {
    let mut cfg = load_config(&a.common)?;
    apply_inputs(&mut cfg, &a.inputs);
    if let Some(m) = &a.matches {
        cfg.paths.matches = Some(m.clone());
    }
    if let Some(m) = &a.model {
        cfg.paths.model = Some(m.clone());
    }
    if let Some(ivs) = a.intervals {
        cfg.intervals = ivs;
    }
    let dir = cfg.paths.output_dir.clone();
    if let Some(mpath) = cfg.paths.matches.clone() {
        let doc: Value = read_json_file(&mpath)?;
        let matches: Vec<MatchedTrajectory> =
            serde_json::from_value(doc.get("result").cloned().unwrap_or(doc))?;
        let net_proj = match &cfg.paths.network {
            Some(p) => *load_network(p)?.projection(),
            None => crate::geometry::LocalProjection::new(0.0, 0.0),
        };
        let trajs = load_trajectories(required(&cfg.paths.trajectories, "trajectory")?, &net_proj)?;
        let report = evaluate_matching(&matches, &truths(&trajs)?)?;
        write_json(&dir, "eval.json", &with_config(&cfg, &report)?)?;
        print!("{}", report.to_table());
        return Ok(format!(
            "point error {:.4}, path error {:.4} over {} trajectories",
            report.point_error_rate, report.path_error_rate, report.trajectories
        ));
    }
    let model = Model::<f64>::load(required(&cfg.paths.model, "model or matches")?)?;
    let (net, trajs) = load_inputs(&cfg)?;
    model.check_network(&net)?;
    let sets: Vec<(Option<f64>, Vec<Trajectory>)> = if cfg.intervals.is_empty() {
        vec![(None, trajs)]
    } else {
        cfg.intervals
            .iter()
            .map(|&iv| Ok((Some(iv), degrade_all(&trajs, iv)?)))
            .collect::<Result<_>>()?
    };
    let mut results = Vec::new();
    let mut summary = Vec::new();
    for (iv, data) in sets {
        let matches = model.match_all(&net, &data)?;
        let report = evaluate_matching(&matches, &truths(&data)?)?;
        if let Some(v) = iv {
            println!("interval {}", interval_tag(v));
        }
        print!("{}", report.to_table());
        summary.push(format!(
            "{}point {:.4} path {:.4}",
            iv.map(|v| format!("{}: ", interval_tag(v)))
                .unwrap_or_default(),
            report.point_error_rate,
            report.path_error_rate
        ));
        results.push(json!({ "interval": iv, "report": report }));
    }
    write_json(&dir, "eval.json", &with_config(&cfg, &results)?)?;
    Ok(summary.join("; "))
}

fn report(a: ReportArgs) -> Result<String> {
    let mut cfg = load_config(&a.common)?;
    if let Some(m) = &a.model {
        cfg.paths.model = Some(m.clone());
    }
    let model = Model::<f64>::load(required(&cfg.paths.model, "model")?)?;
    let rep = feature_report(&model.registry, &model.theta)?;
    write_json(
        &cfg.paths.output_dir,
        "report.json",
        &with_config(&cfg, json!({ "features": rep, "meta": model.meta }))?,
    )?;
    print!("{}", rep.to_table());
    Ok(format!(
        "{} of {} features selected",
        rep.nonzero, rep.total
    ))
}
