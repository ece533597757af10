use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use taxelsim::analysis::{self, CrossingDirection, PoincareSection};
use taxelsim::binarizer::{self, AxisConfig, BinarizerConfig};
use taxelsim::reward::{self, RewardConfig, RewardTerms};
use taxelsim::scene::{self, EpisodeTrace, SceneFile};
use taxelsim::{sensor, Vec3};

#[derive(Parser)]
#[command(name = "taxelsim", version, about = "Tactile skin simulation, scoring and gait analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scripted episodes and write their traces.
    Simulate {
        /// Scene description (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time parallel episodes and report ticks per second.
    Bench {
        #[arg(long, default_value_t = 64)]
        envs: usize,
        #[arg(long, default_value_t = 400)]
        steps: usize,
        /// Scene description; defaults to the canonical gait scene.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Point count of the default scene's cylinder.
        #[arg(long, default_value_t = 512)]
        points: usize,
    },
    /// Per-tick reward breakdown of a trace.
    Reward {
        #[arg(long)]
        trace: PathBuf,
        /// Reward configuration (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Multiply by scale magnitudes instead of signed scales.
        #[arg(long)]
        abs_scales: bool,
        /// Directory for reward_ticks.csv and reward_summary.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Task metrics of a trace, in cm.
    Metrics {
        #[arg(long)]
        trace: PathBuf,
        /// x, y, z, or a comma-separated vector.
        #[arg(long, default_value = "x")]
        axis: String,
        #[arg(long, default_value_t = reward::DEFAULT_TIMEOUT_S)]
        timeout: f64,
    },
    /// Poincaré-section crossings of one joint's phase portrait.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        joint: usize,
        /// `auto`, or `q,n_q,n_qdot` for a line through (q, 0) with that normal.
        #[arg(long, default_value = "auto")]
        section: String,
        #[arg(long, value_enum)]
        direction: Option<Direction>,
        /// Directory for the crossings CSV.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also render the portrait as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Binarize a raw magnetometer log (`t,taxel_id,bx,by,bz`).
    Binarize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = binarizer::DEFAULT_HISTORY_LEN)]
        history_len: usize,
        #[arg(long, default_value_t = binarizer::DEFAULT_CURRENT_LEN)]
        current_len: usize,
        #[arg(long, default_value_t = binarizer::DEFAULT_THRESHOLDS[0])]
        threshold_x: f64,
        #[arg(long, default_value_t = binarizer::DEFAULT_THRESHOLDS[1])]
        threshold_y: f64,
        #[arg(long, default_value_t = binarizer::DEFAULT_THRESHOLDS[2])]
        threshold_z: f64,
        #[arg(long, default_value_t = binarizer::DEFAULT_SAMPLE_RATE)]
        in_rate: f64,
        #[arg(long, default_value_t = binarizer::DEFAULT_OUTPUT_RATE)]
        out_rate: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    Positive,
    Negative,
    Both,
}

impl From<Direction> for CrossingDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Positive => CrossingDirection::Positive,
            Direction::Negative => CrossingDirection::Negative,
            Direction::Both => CrossingDirection::Both,
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, value)?;
    writeln!(lock)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn parse_axis(s: &str) -> Result<Vec3> {
    let v = match s.trim() {
        "x" | "+x" => Vec3::x(),
        "y" | "+y" => Vec3::y(),
        "z" | "+z" => Vec3::z(),
        "-x" => -Vec3::x(),
        "-y" => -Vec3::y(),
        "-z" => -Vec3::z(),
        other => {
            let parts: Vec<f64> = other
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("bad axis {other:?}"))?;
            let [x, y, z] = parts[..] else {
                bail!("axis needs three components, got {other:?}");
            };
            Vec3::new(x, y, z)
        }
    };
    if v.norm().is_nan() || v.norm() <= 0.0 {
        bail!("axis must be nonzero");
    }
    Ok(v.normalize())
}

#[derive(Serialize)]
struct EpisodeSummary {
    episode: usize,
    seed: u64,
    ticks: usize,
    dropped: bool,
    trace: String,
    signals: String,
    metrics: reward::Metrics,
}

fn simulate(config: &Path, episodes: usize, seed: u64, out: &Path) -> Result<()> {
    let (file, base) = SceneFile::load(config)?;
    let cfg = file.build(&base)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let axis = cfg.desired_axis();
    let traces = scene::run_batch(&cfg, episodes, seed);
    let mut summaries = Vec::with_capacity(episodes);
    for (i, trace) in traces.into_iter().enumerate() {
        let trace = trace?;
        let name = format!("episode_{i:04}");
        let trace_path = out.join(format!("{name}.jsonl"));
        let signal_path = out.join(format!("{name}_signals.csv"));
        trace.save(&trace_path)?;
        sensor::write_signal_csv(trace.signal_rows(), BufWriter::new(File::create(&signal_path)?))?;
        summaries.push(EpisodeSummary {
            episode: i,
            seed: scene::episode_seed(seed, i),
            ticks: trace.len(),
            dropped: trace.dropped,
            trace: trace_path.display().to_string(),
            signals: signal_path.display().to_string(),
            metrics: reward::compute_trace_metrics(&trace, &axis, reward::DEFAULT_TIMEOUT_S),
        });
    }
    write_json(&out.join("summary.json"), &summaries)?;
    print_json(&summaries)
}

fn bench(envs: usize, steps: usize, config: Option<&Path>, points: usize) -> Result<()> {
    let cfg = match config {
        Some(path) => {
            let (file, base) = SceneFile::load(path)?;
            file.build(&base)?
        }
        None => scene::canonical_gait_scene(points, 0)?,
    };
    let report = scene::bench(&cfg, envs, steps)?;
    eprintln!("{:.0} ticks/sec", report.ticks_per_sec);
    print_json(&report)
}

#[derive(Serialize)]
struct RewardSummary {
    ticks: usize,
    total: f64,
    term_totals: RewardTerms,
    ticks_missing_tau: usize,
    ticks_missing_forces: usize,
    abs_scales: bool,
}

fn reward_cmd(trace: &Path, config: Option<&Path>, abs_scales: bool, out: &Path) -> Result<()> {
    let trace = EpisodeTrace::load(trace)?;
    let mut cfg = match config {
        Some(path) => RewardConfig::load(path)?,
        None => RewardConfig::default(),
    };
    cfg.abs_scales |= abs_scales;
    let ret = reward::episode_return(&trace, &cfg)?;
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join("reward_ticks.csv"))?);
    let mut header = vec!["t".to_string()];
    header.extend(RewardTerms::NAMES.iter().map(|n| format!("{n}_raw")));
    header.extend(RewardTerms::NAMES.iter().map(|n| format!("{n}_scaled")));
    header.extend(["total".into(), "missing_tau".into(), "missing_forces".into()]);
    writeln!(w, "{}", header.join(","))?;
    for (tick, b) in trace.ticks.iter().zip(&ret.ticks) {
        let mut row = vec![tick.t.to_string()];
        row.extend(b.raw.to_array().iter().map(f64::to_string));
        row.extend(b.scaled.to_array().iter().map(f64::to_string));
        row.extend([b.total.to_string(), b.missing_tau.to_string(), b.missing_forces.to_string()]);
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    let summary = RewardSummary {
        ticks: ret.ticks.len(),
        total: ret.total,
        term_totals: ret.term_totals(),
        ticks_missing_tau: ret.ticks.iter().filter(|b| b.missing_tau).count(),
        ticks_missing_forces: ret.ticks.iter().filter(|b| b.missing_forces).count(),
        abs_scales: cfg.abs_scales,
    };
    write_json(&out.join("reward_summary.json"), &summary)?;
    print_json(&summary)
}

fn parse_section(arg: &str, portrait: &analysis::PhasePortrait, direction: Option<Direction>) -> Result<PoincareSection> {
    let mut section = if arg == "auto" {
        PoincareSection::auto(portrait)?
    } else {
        let parts: Vec<f64> = arg
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("bad section {arg:?}"))?;
        let [q, nq, nv] = parts[..] else {
            bail!("section needs `auto` or three numbers q,n_q,n_qdot");
        };
        PoincareSection::new([q, 0.0], [nq, nv], CrossingDirection::Positive)?
    };
    if let Some(d) = direction {
        section.direction = d.into();
    }
    Ok(section)
}

#[derive(Serialize)]
struct AnalyzeSummary {
    joint: usize,
    samples: usize,
    section: PoincareSection,
    crossings: usize,
    dispersion: Option<f64>,
    crossings_csv: String,
}

fn analyze(trace: &Path, joint: usize, section: &str, direction: Option<Direction>, out: &Path, svg: Option<&Path>) -> Result<()> {
    let trace = EpisodeTrace::load(trace)?;
    let portrait = analysis::phase_portrait(&trace, joint)?;
    let section = parse_section(section, &portrait, direction)?;
    let report = analysis::poincare_crossings(&portrait, &section);
    fs::create_dir_all(out)?;
    let csv_path = out.join(format!("crossings_joint{joint}.csv"));
    analysis::write_crossings_csv(&report.crossings, BufWriter::new(File::create(&csv_path)?))?;
    if let Some(svg) = svg {
        fs::write(svg, analysis::portrait_svg(&portrait, &section, &report.crossings))?;
    }
    print_json(&AnalyzeSummary {
        joint,
        samples: portrait.len(),
        section,
        crossings: report.crossings.len(),
        dispersion: report.dispersion,
        crossings_csv: csv_path.display().to_string(),
    })
}

#[allow(clippy::too_many_arguments)]
fn binarize(
    input: &Path,
    output: &Path,
    history_len: usize,
    current_len: usize,
    thresholds: [f64; 3],
    in_rate: f64,
    out_rate: f64,
) -> Result<()> {
    let axes = [
        AxisConfig::new(history_len, current_len, thresholds[0])?,
        AxisConfig::new(history_len, current_len, thresholds[1])?,
        AxisConfig::new(history_len, current_len, thresholds[2])?,
    ];
    let cfg = BinarizerConfig {
        axes,
        sample_rate: in_rate,
        output_rate: out_rate,
    };
    let src = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let dst = BufWriter::new(File::create(output).with_context(|| format!("creating {}", output.display()))?);
    let report = binarizer::binarize_csv(src, dst, &cfg)?;
    if report.rejected > 0 {
        eprintln!("warning: {} non-finite samples rejected", report.rejected);
    }
    print_json(&report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, episodes, seed, out } => simulate(&config, episodes, seed, &out),
        Command::Bench { envs, steps, config, points } => bench(envs, steps, config.as_deref(), points),
        Command::Reward { trace, config, abs_scales, out } => reward_cmd(&trace, config.as_deref(), abs_scales, &out),
        Command::Metrics { trace, axis, timeout } => {
            let trace = EpisodeTrace::load(&trace)?;
            print_json(&reward::compute_trace_metrics(&trace, &parse_axis(&axis)?, timeout))
        }
        Command::Analyze { trace, joint, section, direction, out, svg } => {
            analyze(&trace, joint, &section, direction, &out, svg.as_deref())
        }
        Command::Binarize {
            input,
            output,
            history_len,
            current_len,
            threshold_x,
            threshold_y,
            threshold_z,
            in_rate,
            out_rate,
        } => binarize(
            &input,
            &output,
            history_len,
            current_len,
            [threshold_x, threshold_y, threshold_z],
            in_rate,
            out_rate,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match err.downcast_ref::<taxelsim::Error>() {
                Some(e) => eprintln!("error[{}]: {err:#}", e.code()),
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::FAILURE
        }
    }
}
