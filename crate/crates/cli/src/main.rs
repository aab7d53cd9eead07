//! Command-line front end: dataset generation, single folds, evaluation,
//! rendering of recorded trajectories and the replan-cadence ablation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use garmentfold::config;
use garmentfold::dataset::{generate_dataset, Recipe, TrajectoryRecord};
use garmentfold::executor::{ablation_grid, run_batch, run_episode_full, template_suite, Backend, EpisodeConfig, Mode};
use garmentfold::garment::{read_obj, Category, GarmentSpec};
use garmentfold::instruction::Lexicon;
use garmentfold::metrics::{evaluate, summary_csv, FoldReport, MetricSummary};
use garmentfold::sim::write_ply;

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "GARMENTFOLD_OUT";

#[derive(Parser, Debug)]
#[command(name = "garmentfold", version, about = "Simulated garment folding toolkit")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Instruction lexicon file (`pattern<TAB>meaning` lines); the built-in
    /// lexicon when absent.
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate fold trajectories for jittered garments and write records.
    GenerateDataset(GenerateArgs),
    /// Fold one garment following an instruction.
    Fold(FoldArgs),
    /// Score episode logs or mesh frames and print a CSV.
    Evaluate(EvaluateArgs),
    /// Export the frames of a trajectory record as PLY or OBJ files.
    Render(RenderArgs),
    /// Run the replan-cadence ablation grid and print a summary CSV.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
    /// Recipe file (key=value); the flags below override it.
    #[arg(long)]
    recipe: Option<PathBuf>,
    /// Garments per category.
    #[arg(long)]
    per_category: Option<usize>,
    /// Garments of one category, e.g. `pants=4` (repeatable).
    #[arg(long = "count", value_parser = parse_count)]
    counts: Vec<(Category, usize)>,
    #[arg(long)]
    seed: Option<u64>,
    /// Observed points per frame.
    #[arg(long)]
    points: Option<usize>,
    /// Frames per stage trajectory.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("garment").required(true).args(["category", "spec"])))]
struct FoldArgs {
    #[arg(long)]
    category: Option<Category>,
    /// Garment spec file (key=value).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Jitter the garment dimensions with this seed.
    #[arg(long)]
    jitter_seed: Option<u64>,
    #[arg(long)]
    instruction: String,
    #[command(flatten)]
    episode: EpisodeFlags,
    /// Output directory for the episode log and report.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Also write initial, final and goal meshes as OBJ.
    #[arg(long)]
    frames: bool,
}

#[derive(Args, Debug)]
struct EpisodeFlags {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Trajectory frames per action.
    #[arg(long)]
    cadence: Option<usize>,
    /// Ensemble size.
    #[arg(long)]
    seeds: Option<usize>,
    /// Ensemble grouping radius, meters.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Actions per stage.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Configuration file (key=value); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    ClosedLoop,
    OpenLoop,
    NextStep,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackendArg {
    Hinge,
    Rollout,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("input").required(true).multiple(true).args(["log", "final_mesh"])))]
struct EvaluateArgs {
    /// Episode log files (repeatable).
    #[arg(long)]
    log: Vec<PathBuf>,
    /// Mesh before folding (OBJ).
    #[arg(long = "initial", requires = "final_mesh")]
    initial_mesh: Option<PathBuf>,
    /// Mesh after folding (OBJ).
    #[arg(long = "final", requires_all = ["initial_mesh", "goal_mesh"])]
    final_mesh: Option<PathBuf>,
    /// Target mesh (OBJ) for the Chamfer column.
    #[arg(long = "goal")]
    goal_mesh: Option<PathBuf>,
    /// Threshold configuration (key=value).
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    record: PathBuf,
    #[arg(long, env = OUT_ENV)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "ply")]
    format: Format,
    /// Only this frame.
    #[arg(long)]
    frame: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Ply,
    Obj,
}

#[derive(Args, Debug)]
struct AblateArgs {
    /// `template-N`: N jittered garments with the default instruction.
    #[arg(long, default_value = "template-20", value_parser = parse_suite)]
    suite: usize,
    #[arg(long, default_value = "short-sleeve")]
    category: Category,
    /// Seed of the first garment.
    #[arg(long, default_value_t = 1000)]
    base_seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_count(s: &str) -> std::result::Result<(Category, usize), String> {
    let (cat, n) = s.split_once('=').ok_or("expected CATEGORY=N")?;
    Ok((cat.parse().map_err(|e| format!("{e}"))?, n.parse().map_err(|_| format!("bad count `{n}`"))?))
}

fn parse_suite(s: &str) -> std::result::Result<usize, String> {
    s.strip_prefix("template-")
        .and_then(|n| n.parse().ok())
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("unknown suite `{s}` (expected template-N)"))
}

fn load_config(path: Option<&Path>) -> Result<EpisodeConfig> {
    match path {
        Some(p) => config::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(EpisodeConfig::default()),
    }
}

fn load_lexicon(path: Option<&Path>) -> Result<Lexicon> {
    match path {
        Some(p) => Lexicon::load(p).with_context(|| format!("reading lexicon {}", p.display())),
        None => Ok(Lexicon::default()),
    }
}

fn generate(args: GenerateArgs, lexicon: &Lexicon) -> Result<()> {
    let mut recipe = match &args.recipe {
        Some(p) => Recipe::from_kv(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => Recipe::default(),
    };
    if let Some(n) = args.per_category {
        recipe.counts = Category::ALL.iter().map(|&c| (c, n)).collect();
    }
    for (cat, n) in args.counts {
        match recipe.counts.iter_mut().find(|(c, _)| *c == cat) {
            Some(slot) => slot.1 = n,
            None => recipe.counts.push((cat, n)),
        }
    }
    recipe.counts.sort_by_key(|(c, _)| *c);
    if let Some(s) = args.seed {
        recipe.seed = s;
    }
    if let Some(n) = args.points {
        recipe.n_points = n;
    }
    if let Some(m) = args.frames {
        recipe.frames_per_stage = m;
    }
    if let Some(f) = args.test_fraction {
        recipe.test_fraction = f;
    }
    let manifest = generate_dataset(&recipe, &args.out, lexicon)?;
    println!(
        "{} records, {} stage trajectories ({} train / {} test), {} skipped -> {}",
        manifest.records.len(),
        manifest.stage_trajectories,
        manifest.split_count(garmentfold::dataset::Split::Train),
        manifest.split_count(garmentfold::dataset::Split::Test),
        manifest.skipped.len(),
        args.out.display()
    );
    Ok(())
}

fn episode_config(flags: &EpisodeFlags) -> Result<EpisodeConfig> {
    let mut c = load_config(flags.config.as_deref())?;
    if let Some(m) = flags.mode {
        c.mode = match m {
            ModeArg::ClosedLoop => Mode::ClosedLoop,
            ModeArg::OpenLoop => Mode::OpenLoop,
            ModeArg::NextStep => Mode::NextStep,
        };
    }
    if let Some(b) = flags.backend {
        c.backend = match b {
            BackendArg::Hinge => Backend::Hinge,
            BackendArg::Rollout => Backend::Rollout,
        };
    }
    if let Some(k) = flags.cadence {
        c.cadence = k;
    }
    if let Some(s) = flags.seeds {
        c.ensemble.seeds = s;
    }
    if let Some(e) = flags.epsilon {
        c.ensemble.epsilon = e;
    }
    if let Some(b) = flags.budget {
        c.budget = b;
    }
    c.validate()?;
    Ok(c)
}

fn fold(args: FoldArgs, lexicon: &Lexicon) -> Result<()> {
    let mut spec = match (&args.spec, args.category) {
        (Some(path), _) => GarmentSpec::from_kv(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        (None, Some(cat)) => GarmentSpec::default_for(cat),
        (None, None) => unreachable!("clap requires one of --category/--spec"),
    };
    if let Some(seed) = args.jitter_seed {
        spec.jitter_seed = Some(seed);
    }
    let config = episode_config(&args.episode)?;
    let outcome = run_episode_full(&spec, &args.instruction, &config, lexicon)?;
    for s in &outcome.log.stages {
        println!("stage {} {} actions={} chamfer={:.4}", s.stage, s.status, s.actions, s.chamfer_to_goal);
    }
    print!("{}", outcome.report.to_kv());
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("episode.log"), outcome.log.to_lines())?;
        fs::write(dir.join("report.txt"), outcome.report.to_kv())?;
        if args.frames {
            for (name, positions) in
                [("initial", &outcome.initial), ("final", &outcome.final_positions), ("goal", &outcome.goal)]
            {
                let file = fs::File::create(dir.join(format!("{name}.obj")))?;
                outcome.mesh.write_obj(positions, std::io::BufWriter::new(file))?;
            }
        }
        info!("wrote episode output to {}", dir.display());
    }
    Ok(())
}

const REPORT_HEADER: &str = "source,rectangularity,area_ratio,success,chamfer_to_goal,initial_area,final_area";

fn report_row(source: &str, r: &FoldReport) -> String {
    format!(
        "{source},{},{},{},{},{},{}",
        r.rectangularity, r.area_ratio, r.success, r.chamfer_to_goal, r.initial_area, r.final_area
    )
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let thresholds = load_config(args.config.as_deref())?.thresholds;
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for path in &args.log {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let log = garmentfold::executor::EpisodeLog::from_lines(&text).with_context(|| format!("parsing {}", path.display()))?;
        let Some(report) = log.report else { bail!("{} has no report record", path.display()) };
        // Re-judge under the given thresholds.
        let report = FoldReport {
            success: garmentfold::metrics::judge(report.rectangularity, report.area_ratio, &thresholds),
            ..report
        };
        let _ = writeln!(out, "{}", report_row(&path.display().to_string(), &report));
    }
    if let (Some(i), Some(f), Some(g)) = (&args.initial_mesh, &args.final_mesh, &args.goal_mesh) {
        let read = |p: &PathBuf| -> Result<_> {
            read_obj(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                .with_context(|| format!("parsing {}", p.display()))
        };
        let (initial, tris) = read(i)?;
        let (final_positions, final_tris) = read(f)?;
        let (goal, _) = read(g)?;
        if final_tris != tris || final_positions.len() != initial.len() || goal.len() != initial.len() {
            bail!("initial, final and goal meshes must share one topology");
        }
        let report = evaluate(&initial, &final_positions, &goal, &tris, &thresholds)?;
        let _ = writeln!(out, "{}", report_row(&f.display().to_string(), &report));
    }
    match &args.out {
        Some(p) => fs::write(p, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn render(args: RenderArgs) -> Result<()> {
    let rec = TrajectoryRecord::read(&args.record).with_context(|| format!("reading {}", args.record.display()))?;
    let frames: Vec<usize> = match args.frame {
        Some(i) if i >= rec.n_frames => bail!("frame {i} out of range (record has {})", rec.n_frames),
        Some(i) => vec![i],
        None => (0..rec.n_frames).collect(),
    };
    fs::create_dir_all(&args.out)?;
    for &i in &frames {
        let points = rec.frame(i);
        match args.format {
            Format::Ply => {
                let file = fs::File::create(args.out.join(format!("frame_{i:04}.ply")))?;
                write_ply(&points, std::io::BufWriter::new(file))?;
            }
            Format::Obj => {
                let mut text = format!("# {} frame {i}\n", rec.garment_id);
                for p in &points {
                    let _ = writeln!(text, "v {:.6} {:.6} {:.6}", p.x, p.y, p.z);
                }
                fs::write(args.out.join(format!("frame_{i:04}.obj")), text)?;
            }
        }
    }
    println!("wrote {} frames of {} to {}", frames.len(), rec.garment_id, args.out.display());
    Ok(())
}

/// Runs every row of the ablation grid on one template suite.
fn ablate(args: AblateArgs, lexicon: &Lexicon) -> Result<()> {
    let base = load_config(args.config.as_deref())?;
    let jobs = template_suite(args.category, args.suite, args.base_seed);
    let mut rows = Vec::new();
    for (name, config) in ablation_grid(&base) {
        let mut reports = Vec::new();
        for result in run_batch(&jobs, &config, lexicon) {
            reports.push(result.with_context(|| format!("{name} episode failed"))?.0);
        }
        let summary = MetricSummary::from_reports(&reports);
        info!("{name}: success {:.2}", summary.success_rate);
        rows.push((name.to_string(), vec![summary]));
    }
    let csv = summary_csv(&[args.category.to_string()], &rows);
    let out = args.out.or_else(|| std::env::var_os(OUT_ENV).map(|d| PathBuf::from(d).join("ablation.csv")));
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(&p, &csv)?;
            println!("wrote {}", p.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = load_lexicon(cli.lexicon.as_deref()).and_then(|lexicon| match cli.command {
        Command::GenerateDataset(a) => generate(a, &lexicon),
        Command::Fold(a) => fold(a, &lexicon),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Render(a) => render(a),
        Command::Ablate(a) => ablate(a, &lexicon),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
