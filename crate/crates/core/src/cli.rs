//! The `orderseg` command line.
//!
//! Every command writes its resolved configuration as JSON next to its
//! outputs. Exit codes: 0 success, 1 usage, 2 data, 3 numeric failure.

use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{
    load_checkpoint, save_checkpoint, train, train_or_load, Arm, Checkpoint, CheckpointMeta, Model, ModelConfig,
    RoundInput, TrainConfig, TrainState,
};
use crate::order::DepthMap;
use crate::prompts::ClickSet;
use crate::scenegen::{export_dataset, generate_dataset, import_dataset, DatasetSpec, Scene, Split, SplitRatios};
use crate::simharness::{
    aggregate, eval_instances, next_click, run_ablation, run_protocol, sat_latency, EvalInstance, InstanceSelection,
    InteractionTrace, MetricReport, OracleSegmenter, ProtocolConfig,
};
use crate::{service, viz};

#[derive(Debug, Parser)]
#[command(name = "orderseg", version, about = "Depth-order-aware interactive segmentation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene dataset.
    Gen(GenArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Run the simulated-user protocol and write metric reports.
    Eval(EvalArgs),
    /// Train (or reuse) one model per arm and seed and compare them.
    Ablate(AblateArgs),
    /// Render order maps, attention heatmaps and mask overlays.
    Viz(VizArgs),
    /// Measure seconds-per-click and grid latency.
    Bench(BenchArgs),
    /// Serve the interactive HTTP API.
    Serve(ServeArgs),
}

/// One split, or `None` for "mixed"/"all".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct SplitFilter(pub Option<Split>);

fn parse_split(s: &str) -> std::result::Result<SplitFilter, String> {
    match s {
        "mixed" | "all" => Ok(SplitFilter(None)),
        other => other.parse::<Split>().map(|s| SplitFilter(Some(s))).map_err(|e| e.to_string()),
    }
}

fn parse_arm(s: &str) -> std::result::Result<Arm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_selection(s: &str) -> std::result::Result<InstanceSelection, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Output directory; must not already hold a dataset.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
    /// Image side length in pixels (multiple of 8, at least 32).
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// plain, overlap, same-depth, or mixed (see --ratios).
    #[arg(long, default_value = "mixed", value_parser = parse_split)]
    pub split: SplitFilter,
    /// Mixed-split weights as plain,overlap,same-depth.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.4, 0.4, 0.2])]
    pub ratios: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "full", value_parser = parse_arm)]
    pub arm: Arm,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 15)]
    pub epochs: u64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Also write the checkpoint every this many steps.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Continue from a checkpoint that carries optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// JSON model configuration overriding the defaults.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Trained checkpoint; omit together with --oracle.
    #[arg(long, required_unless_present = "oracle")]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate a model that always returns the ground truth.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "mixed", value_parser = parse_split)]
    pub split: SplitFilter,
    #[arg(long, default_value = "all", value_parser = parse_selection)]
    pub select: InstanceSelection,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub max_clicks: usize,
    /// Run instances in parallel.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub train_data: PathBuf,
    #[arg(long)]
    pub eval_data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "full,no_order,no_dense,no_sparse", value_parser = parse_arm)]
    pub arms: Vec<Arm>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 15)]
    pub epochs: u64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long, default_value = "overlap", value_parser = parse_split)]
    pub split: SplitFilter,
    #[arg(long, default_value = "focus", value_parser = parse_selection)]
    pub select: InstanceSelection,
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct VizArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub scene: usize,
    /// Target instance; defaults to the scene's designated instance or 0.
    #[arg(long)]
    pub instance: Option<usize>,
    /// Trained checkpoint; a freshly initialized model is used without one.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulated clicks to play.
    #[arg(long, default_value_t = 3)]
    pub clicks: usize,
    /// Replace the scene's depth with a constant map.
    #[arg(long)]
    pub flat_depth: bool,
    /// Slot whose attention is drawn.
    #[arg(long, default_value_t = 0)]
    pub slot: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "ORDERSEG_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, env = "ORDERSEG_IDLE_TIMEOUT_SECS", default_value_t = 1800)]
    pub idle_timeout_secs: u64,
}

/// Maps library errors to process exit codes.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Validation(_) => 1,
        Error::Numeric { .. } | Error::Divergence { .. } => 3,
        _ => 2,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Viz(a) => cmd_viz(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Serve(a) => cmd_serve(&a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn load_scenes(dir: &Path) -> Result<Vec<Scene>> {
    let (manifest, scenes) = import_dataset(dir)?;
    log::info!("loaded {} scenes ({}×{}) from {}", scenes.len(), manifest.spec.size, manifest.spec.size, dir.display());
    Ok(scenes)
}

fn load_model(checkpoint: Option<&Path>, seed: u64) -> Result<Model<f32>> {
    match checkpoint {
        Some(p) => Ok(load_checkpoint(p)?.model),
        None => {
            log::warn!("no checkpoint given; using an untrained model (seed {seed})");
            Model::new(ModelConfig::default(), seed)
        }
    }
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let splits = match a.split.0 {
        Some(s) => SplitRatios::only(s),
        None => SplitRatios { plain: a.ratios[0], overlap: a.ratios[1], same_depth: a.ratios[2] },
    };
    if a.size < 32 || !a.size.is_multiple_of(8) {
        return Err(Error::Config(format!("size must be a multiple of 8 and at least 32, got {}", a.size)));
    }
    let spec = DatasetSpec { seed: a.seed, count: a.count, size: a.size, splits };
    let scenes = generate_dataset(&spec)?;
    fs::create_dir_all(&a.out)?;
    export_dataset(&a.out, &spec, &scenes)?;
    write_json(&a.out.join("gen_config.json"), a)?;
    log::info!("wrote {} scenes to {}", scenes.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    args: &'a TrainArgs,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let scenes = load_scenes(&a.data)?;
    let (mut model, state, seed) = match &a.resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            let state = ck
                .train_state
                .ok_or_else(|| Error::Config(format!("{} has no optimizer state to resume from", p.display())))?;
            log::info!("resuming from step {} (epoch {})", state.step, state.epoch);
            (ck.model, state, ck.seed)
        }
        None => {
            let mut cfg = match &a.model_config {
                Some(p) => serde_json::from_slice::<ModelConfig>(&fs::read(p)?)?,
                None => ModelConfig::default(),
            };
            cfg.arm = a.arm;
            let model = Model::new(cfg, a.seed)?;
            let state = TrainState::new(&model, Default::default());
            (model, state, a.seed)
        }
    };
    let mut tcfg = TrainConfig { epochs: a.epochs, batch_size: a.batch_size, seed, max_steps: a.max_steps, ..Default::default() };
    tcfg.adam.lr = a.lr;
    let mut state = state;
    state.adam.config = tcfg.adam;
    write_json(&sibling(&a.out, "train_config.json"), &ResolvedTrain { args: a, model: &model.config, train: &tcfg })?;

    let curve_path = sibling(&a.out, "loss_curve.jsonl");
    let mut curve = fs::OpenOptions::new().create(true).append(a.resume.is_some()).write(true).truncate(a.resume.is_none()).open(&curve_path)?;
    let save = |model: &Model<f32>, state: &TrainState, loss: Option<f64>| -> Result<()> {
        let ck = Checkpoint {
            model: model.clone(),
            seed,
            meta: CheckpointMeta {
                step: state.step,
                epoch: state.epoch,
                train_seed: Some(seed),
                dataset_seed: None,
                last_loss: loss,
            },
            train_state: Some(state.clone()),
        };
        save_checkpoint(&a.out, &ck)
    };
    let result = train(&mut model, &scenes, &tcfg, state, |info, m, st| {
        writeln!(curve, "{}", serde_json::json!({ "step": info.step, "epoch": info.epoch, "loss": info.loss }))?;
        if info.step % 20 == 0 {
            log::info!("step {} epoch {} loss {:.5}", info.step, info.epoch, info.loss);
        }
        if a.checkpoint_every.is_some_and(|n| n > 0 && info.step % n == 0) {
            save(m, st, Some(info.loss))?;
        }
        Ok(())
    });
    let (report, state) = result?;
    save(&model, &state, report.step_losses.last().copied())?;
    log::info!("trained {} steps; checkpoint at {}", report.steps, a.out.display());
    Ok(())
}

fn write_traces(path: &Path, traces: &[InteractionTrace]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for t in traces {
        serde_json::to_writer(&mut f, t)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn report_table(r: &MetricReport) -> String {
    let mut s = String::new();
    s.push_str("instances  NoC90  NoC95  1-mIoU  5-mIoU  NoF95  SPC(ms)  SAT(s)\n");
    s.push_str(&format!(
        "{:>9}  {:>5.2}  {:>5.2}  {:>6.4}  {:>6.4}  {:>5}  {:>7.2}  {}\n",
        r.instances,
        r.noc90,
        r.noc95,
        r.miou_1,
        r.miou_5,
        r.nof95,
        r.spc_ms,
        r.sat_latency_s.map_or("-".to_string(), |v| format!("{v:.3}")),
    ));
    s.push_str(MetricReport::header());
    s.push('\n');
    s
}

fn limited<'a>(mut v: Vec<EvalInstance<'a>>, limit: Option<usize>) -> Vec<EvalInstance<'a>> {
    if let Some(n) = limit {
        v.truncate(n);
    }
    v
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let scenes = load_scenes(&a.data)?;
    let instances = limited(eval_instances(&scenes, a.split.0, a.select), a.limit);
    if instances.is_empty() {
        return Err(Error::Dataset("no evaluation instances match the filters".into()));
    }
    let cfg = ProtocolConfig { max_clicks: a.max_clicks, ..Default::default() };
    let first = &instances[0];
    let (traces, sat): (Vec<InteractionTrace>, f64) = if a.oracle {
        let traces = instances.iter().map(|i| run_protocol(&OracleSegmenter(i.gt.clone()), i, &cfg)).collect();
        (traces, sat_latency(&OracleSegmenter(first.gt.clone()), first.image, first.depth)?)
    } else {
        let model = load_model(a.checkpoint.as_deref(), 0)?;
        let traces = if a.parallel {
            instances.par_iter().map(|i| run_protocol(&model, i, &cfg)).collect()
        } else {
            instances.iter().map(|i| run_protocol(&model, i, &cfg)).collect()
        };
        (traces, sat_latency(&model, first.image, first.depth)?)
    };
    if let Some(t) = traces.iter().find(|t| t.failure.is_some()) {
        log::warn!("instance {} stopped early: {}", t.instance, t.failure.as_deref().unwrap_or(""));
    }
    let mut report = crate::simharness::aggregate_with_budget(&traces, a.max_clicks)?;
    report.sat_latency_s = Some(sat);
    fs::create_dir_all(&a.out)?;
    write_traces(&a.out.join("traces.jsonl"), &traces)?;
    write_json(&a.out.join("report.json"), &report)?;
    fs::write(a.out.join("report.txt"), report_table(&report))?;
    write_json(&a.out.join("eval_config.json"), a)?;
    print!("{}", report_table(&report));
    Ok(())
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<()> {
    let train_scenes = load_scenes(&a.train_data)?;
    let eval_scenes = load_scenes(&a.eval_data)?;
    let tcfg = TrainConfig { epochs: a.epochs, batch_size: a.batch_size, max_steps: a.max_steps, ..Default::default() };
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("ablate_config.json"), &serde_json::json!({ "args": a, "train": tcfg }))?;
    let mut arms = Vec::new();
    for &arm in &a.arms {
        let mut models = Vec::new();
        for &seed in &a.seeds {
            let path = a.out.join("checkpoints").join(format!("{arm}-seed{seed}.ckpt"));
            models.push(train_or_load(&path, arm, seed, &train_scenes, &tcfg)?);
        }
        arms.push((arm, models));
    }
    let instances = limited(eval_instances(&eval_scenes, a.split.0, a.select), a.limit);
    if instances.is_empty() {
        return Err(Error::Dataset("no evaluation instances match the filters".into()));
    }
    let (report, traces) = run_ablation(&arms, &instances, &ProtocolConfig::default())?;
    let tdir = a.out.join("traces");
    fs::create_dir_all(&tdir)?;
    for (arm, i, t) in &traces {
        write_traces(&tdir.join(format!("{arm}-seed{}.jsonl", a.seeds[*i])), t)?;
    }
    write_json(&a.out.join("ablation.json"), &report)?;
    fs::write(a.out.join("ablation.txt"), report.table())?;
    print!("{}", report.table());
    Ok(())
}

#[derive(Serialize)]
struct VizSummary {
    width: usize,
    height: usize,
    rounds: usize,
    order_map_panels: usize,
    /// Σ|after − before| over the drawn slot's attention row.
    attention_change: f64,
    sigmas: Vec<f64>,
}

pub fn cmd_viz(a: &VizArgs) -> Result<()> {
    let scenes = load_scenes(&a.data)?;
    let scene = scenes
        .get(a.scene)
        .ok_or_else(|| Error::Dataset(format!("scene {} out of range ({} scenes)", a.scene, scenes.len())))?;
    let k = a.instance.or(scene.focus).unwrap_or(0);
    let gt = scene.masks.get(k).ok_or_else(|| Error::Dataset(format!("scene has no instance {k}")))?;
    let depth = if a.flat_depth { DepthMap::flat(scene.width(), scene.height()) } else { scene.depth.clone() };
    let model = load_model(a.checkpoint.as_deref(), a.seed)?;
    let features = model.encode_image(&scene.image)?;
    fs::create_dir_all(&a.out)?;

    let mut clicks = ClickSet::new();
    let mut pred: Option<BinaryMask> = None;
    let mut first_weights = None;
    for round in 0..a.clicks.max(1) {
        let empty = BinaryMask::empty(gt.width, gt.height);
        let c = match next_click(pred.as_ref().unwrap_or(&empty), gt) {
            Ok(c) => crate::prompts::Click { round, ..c },
            Err(Error::NoError) => break,
            Err(e) => return Err(e),
        };
        clicks.push(c)?;
        let previous = pred.as_ref().map(|p| p.to_previous(round.saturating_sub(1)));
        let input = RoundInput { depth: &depth, clicks: &clicks, previous: previous.as_ref() };
        if first_weights.is_none() {
            first_weights = Some(model.attention_weights(&features, &input)?);
        }
        let mask = model.predict(&features, &input)?;
        let overlay = viz::overlay(&scene.image, Some(&mask), &clicks);
        fs::write(a.out.join(format!("overlay_round{:02}.png", round + 1)), viz::png_bytes(&overlay)?)?;
        pred = Some(mask);
    }
    let panels = viz::order_map_panels(&depth, &clicks, model.config.order_normalization)?;
    fs::write(a.out.join("order_maps.png"), viz::png_bytes(&viz::hstack(&panels))?)?;
    let weights = first_weights.ok_or_else(|| Error::Validation("no click could be placed".into()))?;
    let panel = viz::attention_panel(&scene.image, &weights, a.slot, &clicks)?;
    fs::write(a.out.join("attention.png"), viz::png_bytes(&panel)?)?;
    let change = weights
        .before
        .row(a.slot)
        .iter()
        .zip(weights.after.row(a.slot))
        .map(|(b, f)| (f - b).abs() as f64)
        .sum();
    let summary = VizSummary {
        width: scene.width(),
        height: scene.height(),
        rounds: clicks.len(),
        order_map_panels: panels.len(),
        attention_change: change,
        sigmas: model.sigmas(),
    };
    write_json(&a.out.join("viz.json"), &summary)?;
    write_json(&a.out.join("viz_config.json"), a)?;
    Ok(())
}

/// Efficiency report comparable across runs.
#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub instances: usize,
    pub encode_ms: f64,
    pub spc_ms: f64,
    /// What a click would cost if the image were re-encoded every round.
    pub reencode_click_ms: f64,
    pub sat_latency_s: f64,
    pub encoder_calls_per_instance: f64,
    pub miou_5: f64,
}

impl BenchReport {
    pub fn table(&self) -> String {
        format!(
            "pipeline          SPC(ms)  SAT(s)   encode(ms)  encoder calls/instance  5-mIoU\n\
             encode-once      {:>8.2}  {:>7.3}  {:>10.2}  {:>22.2}  {:>6.4}\n\
             re-encode/click  {:>8.2}  {:>7}  {:>10}  {:>22}  {:>6}\n",
            self.spc_ms,
            self.sat_latency_s,
            self.encode_ms,
            self.encoder_calls_per_instance,
            self.miou_5,
            self.reencode_click_ms,
            "-",
            "-",
            "-",
            "-",
        )
    }
}

pub fn run_bench(model: &Model<f32>, instances: &[EvalInstance<'_>]) -> Result<BenchReport> {
    let first = instances.first().ok_or_else(|| Error::Dataset("no instances to benchmark".into()))?;
    let cfg = ProtocolConfig::default();
    let before = model.encoder_calls();
    let traces: Vec<InteractionTrace> = instances.iter().map(|i| run_protocol(model, i, &cfg)).collect();
    let calls = (model.encoder_calls() - before) as f64 / instances.len() as f64;
    let report = aggregate(&traces)?;
    let encode_ms = traces.iter().map(|t| t.encode_ms).sum::<f64>() / traces.len() as f64;
    let sat = sat_latency(model, first.image, first.depth)?;
    Ok(BenchReport {
        instances: instances.len(),
        encode_ms,
        spc_ms: report.spc_ms,
        reencode_click_ms: report.spc_ms + encode_ms,
        sat_latency_s: sat,
        encoder_calls_per_instance: calls,
        miou_5: report.miou_5,
    })
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let scenes = load_scenes(&a.data)?;
    let model = load_model(a.checkpoint.as_deref(), a.seed)?;
    let instances = limited(eval_instances(&scenes, None, InstanceSelection::Focus), Some(a.instances));
    let report = run_bench(&model, &instances)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("bench.json"), &report)?;
    fs::write(a.out.join("bench.txt"), report.table())?;
    write_json(&a.out.join("bench_config.json"), a)?;
    print!("{}", report.table());
    Ok(())
}

pub fn cmd_serve(a: &ServeArgs) -> Result<()> {
    let model = Arc::new(load_model(a.checkpoint.as_deref(), a.seed)?);
    let cfg = service::ServiceConfig { idle_timeout: Duration::from_secs(a.idle_timeout_secs) };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(a.addr, model, cfg))
}
