use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use baseplace_core::baselines::{run_baseline, Baseline, CapabilityMap, CapmapParams};
use baseplace_core::bundled;
use baseplace_core::evaluation::{
    robustness_heatmap, run_monte_carlo, score_accuracy_correlation, wilcoxon_rank_sum, CorrelationSpec, ErrorModel,
};
use baseplace_core::framework::{select_online, train_offline, SelectorModel};
use baseplace_core::kinematics::KinematicChain;
use baseplace_core::optimizer::{optimize_configurations, CmaParams, OptimizationResult};
use baseplace_core::scene::{ConfigurationSet, RobotConfiguration, SceneModel, TaskModel};
use baseplace_core::scoring::{Scorer, ScoringParams};

#[derive(Parser)]
#[command(name = "baseplace", version, about = "Task-centric robot base placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize a configuration set for one task.
    Optimize(OptimizeArgs),
    /// Optimize over a grid of uncontrollable parameters and save a selector.
    Train(TrainArgs),
    /// Print the configuration set a trained selector picks for observed parameters.
    Select(SelectArgs),
    /// Monte-Carlo robustness of a configuration set.
    Evaluate(EvaluateArgs),
    /// Accuracy over a grid of person offsets.
    Heatmap(HeatmapArgs),
    /// Build a capability map for a chain.
    Capmap(CapmapArgs),
    /// Run every method on one task and compare Monte-Carlo success.
    Compare(CompareArgs),
    /// Correlate objective score with Monte-Carlo accuracy over sampled configurations.
    Correlate(CorrelateArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Bundled scene name or scene file.
    #[arg(long)]
    scene: String,
    /// Bundled task name or task file.
    #[arg(long)]
    task: String,
    /// Bundled chain name or chain file.
    #[arg(long, default_value = "arm7")]
    chain: String,
    /// Uncontrollable parameter values, comma separated (default: scene nominal).
    #[arg(long, allow_hyphen_values = true)]
    h: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Toc,
    Ik,
    Capmap,
    CapmapCollision,
}

impl Method {
    fn baseline(self) -> Option<Baseline> {
        match self {
            Method::Toc => None,
            Method::Ik => Some(Baseline::Ik),
            Method::Capmap => Some(Baseline::Capmap),
            Method::CapmapCollision => Some(Baseline::CapmapCollision),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Method::Toc => "toc",
            Method::Ik => "ik",
            Method::Capmap => "capmap",
            Method::CapmapCollision => "capmap-collision",
        }
    }
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "toc")]
    method: Method,
    /// Largest number of configurations tried (baselines always use one).
    #[arg(long, default_value_t = 2)]
    cardinality: usize,
    /// Capability map file for the capability-map methods.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 2)]
    cardinality: usize,
    /// Output selector file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// Selector file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Observed uncontrollable parameters, comma separated (empty when the scene has none).
    #[arg(long, allow_hyphen_values = true)]
    h: String,
}

#[derive(Args, Clone)]
struct ErrorArgs {
    /// Error model preset: bed, chair, zero, or auto (chair for chair scenes, else bed).
    #[arg(long, default_value = "auto")]
    error: String,
    /// Override the person's x standard deviation (m).
    #[arg(long)]
    human_x: Option<f64>,
    /// Override the person's y standard deviation (m).
    #[arg(long)]
    human_y: Option<f64>,
    /// Override the person's rotation standard deviation (rad).
    #[arg(long)]
    human_theta: Option<f64>,
    /// Override the robot's x and y standard deviation (m).
    #[arg(long)]
    robot_xy: Option<f64>,
    /// Override the robot's rotation standard deviation (rad).
    #[arg(long)]
    robot_theta: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Configuration set file (as written by `optimize`).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[command(flatten)]
    error: ErrorArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HeatmapArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    config: PathBuf,
    /// Person x offsets covered, as min,max (m).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.1,0.1")]
    x_range: Vec<f64>,
    /// Person y offsets covered, as min,max (m).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-0.1,0.1")]
    y_range: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CapmapArgs {
    #[arg(long, default_value = "arm7")]
    chain: String,
    #[arg(long, default_value_t = 0.05)]
    resolution: f64,
    #[arg(long, default_value_t = 60)]
    orientations: usize,
    /// Output map file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 2)]
    cardinality: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Capability map file; without it the capability-map methods are skipped.
    #[arg(long)]
    map: Option<PathBuf>,
    #[command(flatten)]
    error: ErrorArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Configuration set whose first member centers the sampling region.
    #[arg(long)]
    config: PathBuf,
    /// Half-width of the sampled base region (m).
    #[arg(long, default_value_t = 0.3)]
    radius: f64,
    /// Half-width of the sampled heading range (rad).
    #[arg(long, default_value_t = 0.5)]
    heading: f64,
    #[arg(long, default_value_t = 30)]
    samples: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[command(flatten)]
    error: ErrorArgs,
    #[arg(long)]
    out: PathBuf,
}

fn parse_values(text: &str) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("`{v}` is not a number")))
        .collect()
}

fn load_chain(arg: &str) -> Result<KinematicChain> {
    match bundled::chain(arg) {
        Some(c) => Ok(c?),
        None => KinematicChain::load(Path::new(arg)).with_context(|| format!("loading chain {arg}")),
    }
}

fn load_scene(arg: &str) -> Result<SceneModel> {
    match bundled::scene(arg) {
        Some(s) => Ok(s?),
        None => SceneModel::load(Path::new(arg)).with_context(|| format!("loading scene {arg}")),
    }
}

fn load_task(arg: &str) -> Result<TaskModel> {
    match bundled::task(arg) {
        Some(t) => Ok(t?),
        None => TaskModel::load(Path::new(arg)).with_context(|| format!("loading task {arg}")),
    }
}

struct Models {
    chain: KinematicChain,
    scene: SceneModel,
    task: TaskModel,
    h: Vec<f64>,
}

impl Models {
    fn load(args: &ModelArgs) -> Result<Self> {
        let chain = load_chain(&args.chain)?;
        let scene = load_scene(&args.scene)?;
        let task = load_task(&args.task)?;
        let h = match &args.h {
            Some(text) => parse_values(text).context("invalid --h")?,
            None => scene.nominal_h(),
        };
        scene.check_h(&h).context("invalid --h")?;
        Ok(Models { chain, scene, task, h })
    }

    fn scorer(&self) -> Result<Scorer<'_>> {
        Ok(Scorer::new(&self.chain, &self.scene, &self.task, ScoringParams::default())?)
    }
}

fn error_model(args: &ErrorArgs, scene: &SceneModel) -> Result<ErrorModel> {
    let name = match args.error.as_str() {
        "auto" if scene.name.contains("chair") => "chair",
        "auto" => "bed",
        other => other,
    };
    let mut m = ErrorModel::preset(name).with_context(|| format!("unknown error model `{name}`"))?;
    if let Some(v) = args.human_x {
        m.human_x = v;
    }
    if let Some(v) = args.human_y {
        m.human_y = v;
    }
    if let Some(v) = args.human_theta {
        m.human_theta = v;
    }
    if let Some(v) = args.robot_xy {
        m.robot_x = v;
        m.robot_y = v;
    }
    if let Some(v) = args.robot_theta {
        m.robot_theta = v;
    }
    m.validate()?;
    Ok(m)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_set(path: &Path) -> Result<ConfigurationSet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn load_map(path: Option<&Path>) -> Result<Option<CapabilityMap>> {
    path.map(|p| CapabilityMap::load(p).with_context(|| format!("loading capability map {}", p.display())))
        .transpose()
}

fn run_method(
    method: Method,
    scorer: &Scorer,
    map: Option<&CapabilityMap>,
    h: &[f64],
    cardinality: usize,
    seed: u64,
) -> Result<OptimizationResult> {
    let cma = CmaParams {
        seed,
        ..Default::default()
    };
    Ok(match method.baseline() {
        None => {
            if cardinality == 0 {
                bail!("--cardinality must be at least 1");
            }
            let ns: Vec<usize> = (1..=cardinality).collect();
            optimize_configurations(scorer, h, &ns, cma)?
        }
        Some(b) => {
            if b != Baseline::Ik && map.is_none() {
                bail!("method {} needs --map (build one with `baseplace capmap`)", method.name());
            }
            run_baseline(b, scorer, map, h, cma)?
        }
    })
}

fn optimize(args: OptimizeArgs) -> Result<()> {
    let models = Models::load(&args.model)?;
    let scorer = models.scorer()?;
    let map = load_map(args.map.as_deref())?;
    let result = run_method(
        args.method,
        &scorer,
        map.as_ref(),
        &models.h,
        args.cardinality,
        args.model.seed,
    )?;
    create_dir(&args.out)?;
    write_json(&args.out.join("configuration.json"), &result.set)?;
    write_json(&args.out.join("report.json"), &result.report)?;
    let trace_path = args.out.join("trace.jsonl");
    let mut trace = String::new();
    for r in &result.trace {
        trace.push_str(&serde_json::to_string(r)?);
        trace.push('\n');
    }
    fs::write(&trace_path, trace).with_context(|| format!("writing {}", trace_path.display()))?;
    println!(
        "{}: {} configuration(s), reachability {:.3}, manipulability {:.4}, objective {:.4}",
        args.method.name(),
        result.set.len(),
        result.report.reachability,
        result.report.manipulability,
        result.report.objective
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let models = Models::load(&args.model)?;
    let scorer = models.scorer()?;
    if args.cardinality == 0 {
        bail!("--cardinality must be at least 1");
    }
    let ns: Vec<usize> = (1..=args.cardinality).collect();
    let samples = models.scene.h_grid();
    let cma = CmaParams {
        seed: args.model.seed,
        ..Default::default()
    };
    let model = train_offline(&scorer, &samples, &ns, cma)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    model.save(&args.out)?;
    println!("trained {} pairs -> {}", model.pairs.len(), args.out.display());
    Ok(())
}

fn select(args: SelectArgs) -> Result<()> {
    let model = SelectorModel::load(&args.model)?;
    let start = Instant::now();
    let h = parse_values(&args.h).context("invalid --h")?;
    let set = select_online(&model, &h)?;
    let elapsed = start.elapsed();
    println!("{}", serde_json::to_string_pretty(set)?);
    eprintln!("selected in {:.3} ms", elapsed.as_secs_f64() * 1e3);
    Ok(())
}

fn check_set(scorer: &Scorer, set: &ConfigurationSet) -> Result<()> {
    if set.is_empty() {
        bail!("configuration set is empty");
    }
    for c in &set.configs {
        scorer.layout.validate(c)?;
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let models = Models::load(&args.model)?;
    let scorer = models.scorer()?;
    let set = read_set(&args.config)?;
    check_set(&scorer, &set)?;
    let error = error_model(&args.error, &models.scene)?;
    let mc = run_monte_carlo(&scorer, &set, &models.h, &error, args.trials, args.model.seed)?;
    create_dir(&args.out)?;
    write_json(&args.out.join("summary.json"), &mc)?;
    println!(
        "success {:.3}, mean accuracy {:.4}, accuracy variance {:.5} over {} trials",
        mc.success_rate, mc.mean_accuracy, mc.accuracy_variance, mc.trials
    );
    Ok(())
}

fn range(v: &[f64], flag: &str) -> Result<[f64; 2]> {
    match v {
        [a, b] if a <= b => Ok([*a, *b]),
        _ => bail!("{flag} needs min,max"),
    }
}

fn heatmap(args: HeatmapArgs) -> Result<()> {
    let models = Models::load(&args.model)?;
    let scorer = models.scorer()?;
    let set = read_set(&args.config)?;
    check_set(&scorer, &set)?;
    let map = robustness_heatmap(
        &scorer,
        &set,
        &models.h,
        range(&args.x_range, "--x-range")?,
        range(&args.y_range, "--y-range")?,
        args.step,
    )?;
    create_dir(&args.out)?;
    let csv = args.out.join("heatmap.csv");
    let mut buf = Vec::new();
    map.write_csv(&mut buf)?;
    fs::write(&csv, buf).with_context(|| format!("writing {}", csv.display()))?;
    let mut layers = vec![("combined".to_string(), &map.combined)];
    for (i, l) in map.per_config.iter().enumerate() {
        layers.push((format!("config_{i}"), l));
    }
    for (name, layer) in layers {
        let path = args.out.join(format!("heatmap_{name}.pgm"));
        let mut buf = Vec::new();
        map.write_pgm(layer, &mut buf)?;
        fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("{} x {} cells -> {}", map.xs.len(), map.ys.len(), csv.display());
    Ok(())
}

fn capmap(args: CapmapArgs) -> Result<()> {
    let chain = load_chain(&args.chain)?;
    let params = CapmapParams {
        resolution: args.resolution,
        orientations: args.orientations,
        ..Default::default()
    };
    let map = CapabilityMap::build(&chain, &params)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    map.save(&args.out)?;
    println!(
        "{} cells ({} x {} x {}) -> {}",
        map.scores.len(),
        map.dims[0],
        map.dims[1],
        map.dims[2],
        args.out.display()
    );
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    let models = Models::load(&args.model)?;
    let scorer = models.scorer()?;
    let map = load_map(args.map.as_deref())?;
    let error = error_model(&args.error, &models.scene)?;
    let mut methods = vec![Method::Toc, Method::Ik];
    if map.is_some() {
        methods.extend([Method::Capmap, Method::CapmapCollision]);
    }
    create_dir(&args.out)?;
    let mut rows = Vec::new();
    for m in methods {
        let r = run_method(m, &scorer, map.as_ref(), &models.h, args.cardinality, args.model.seed)?;
        let mc = run_monte_carlo(&scorer, &r.set, &models.h, &error, args.trials, args.model.seed)?;
        write_json(&args.out.join(format!("{}_configuration.json", m.name())), &r.set)?;
        rows.push((m, r, mc));
    }
    let toc = rows[0].2.outcomes();
    let path = args.out.join("compare.csv");
    let mut csv = Vec::new();
    writeln!(csv, "method,configurations,reachability,success_rate,mean_accuracy,p_value_vs_toc")?;
    println!("{:18} {:>4} {:>8} {:>8} {:>8} {:>10}", "method", "n", "P_R", "success", "accuracy", "p vs toc");
    for (m, r, mc) in &rows {
        let p = wilcoxon_rank_sum(&toc, &mc.outcomes())?;
        writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            m.name(),
            r.set.len(),
            r.report.reachability,
            mc.success_rate,
            mc.mean_accuracy,
            p
        )?;
        println!(
            "{:18} {:>4} {:>8.3} {:>8.3} {:>8.3} {:>10.4}",
            m.name(),
            r.set.len(),
            r.report.reachability,
            mc.success_rate,
            mc.mean_accuracy,
            p
        );
    }
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn correlate(args: CorrelateArgs) -> Result<()> {
    let models = Models::load(&args.model)?;
    let scorer = models.scorer()?;
    let center = read_set(&args.config)?;
    check_set(&scorer, &center)?;
    let error = error_model(&args.error, &models.scene)?;
    let c0 = center.configs[0].clone();
    let bounds = scorer.layout.bounds();
    let sampler = |rng: &mut rand_chacha::ChaCha8Rng| {
        use rand::Rng;
        let mut pick = |mid: f64, half: f64, (lo, hi): (f64, f64)| {
            let a = (mid - half).max(lo);
            let b = (mid + half).min(hi);
            if a < b {
                rng.gen_range(a..=b)
            } else {
                a
            }
        };
        let x = pick(c0.x, args.radius, bounds[0]);
        let y = pick(c0.y, args.radius, bounds[1]);
        let theta = pick(c0.theta, args.heading, bounds[2]);
        let aux = bounds[3..].iter().map(|&(lo, hi)| pick(0.5 * (lo + hi), 0.5 * (hi - lo), (lo, hi))).collect();
        ConfigurationSet::single(RobotConfiguration { x, y, theta, aux })
    };
    let spec = CorrelationSpec {
        samples: args.samples,
        max_attempts: args.samples * 200,
        trials: args.trials,
        error,
        seed: args.model.seed,
    };
    let report = score_accuracy_correlation(&scorer, &models.h, sampler, &spec)?;
    create_dir(&args.out)?;
    let path = args.out.join("correlation.csv");
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} samples: spearman(score, accuracy) {}, spearman(score, variance) {}",
        report.rows.len(),
        show(report.accuracy_correlation),
        show(report.variance_correlation)
    );
    Ok(())
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Train(a) => train(a),
        Command::Select(a) => select(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Capmap(a) => capmap(a),
        Command::Compare(a) => compare(a),
        Command::Correlate(a) => correlate(a),
    };
    match result {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
