//! Command-line surface: track, eval, synth, bench, ablate.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use polytrack::config::{LifeCycleMode, Solver, TrackerConfig};
use polytrack::eval::{self, EvalOptions, HypothesisFrame, MetricReport, SynthSpec};
use polytrack::io;
use polytrack::pipeline::{run_sequence, FrameInput, RunSummary, StageTimings};

#[derive(Parser)]
#[command(
    name = "polytrack",
    version,
    about = "3D multi-object tracking over detection files"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Hungarian,
    Greedy,
    Mnn,
    Dto,
}

impl From<SolverArg> for Solver {
    fn from(arg: SolverArg) -> Solver {
        match arg {
            SolverArg::Hungarian => Solver::Hungarian,
            SolverArg::Greedy => Solver::Greedy,
            SolverArg::Mnn => Solver::Mnn,
            SolverArg::Dto => Solver::Dto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LifecycleArg {
    CountMaxAge,
    ConfidenceLatest,
    ConfidenceAverage,
    ConfidenceCountMixed,
}

impl From<LifecycleArg> for LifeCycleMode {
    fn from(arg: LifecycleArg) -> LifeCycleMode {
        match arg {
            LifecycleArg::CountMaxAge => LifeCycleMode::CountMaxAge,
            LifecycleArg::ConfidenceLatest => LifeCycleMode::ConfidenceLatest,
            LifecycleArg::ConfidenceAverage => LifeCycleMode::ConfidenceAverage,
            LifecycleArg::ConfidenceCountMixed => LifeCycleMode::ConfidenceCountMixed,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file (`key = value`); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the association solver.
    #[arg(long)]
    solver: Option<SolverArg>,
    /// Disable residual/velocity noise adaptation.
    #[arg(long)]
    no_adaptive_noise: bool,
    /// Disable confidence-weighted filter updates.
    #[arg(long)]
    no_confidence_weighting: bool,
    /// Override the life-cycle termination mode.
    #[arg(long)]
    lifecycle: Option<LifecycleArg>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<TrackerConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrackerConfig::from_file(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => TrackerConfig::default(),
        };
        cfg.apply_env_overrides()?;
        if let Some(solver) = self.solver {
            cfg.solver = solver.into();
        }
        if self.no_adaptive_noise {
            cfg.adaptive_noise = false;
        }
        if self.no_confidence_weighting {
            cfg.confidence_weighting = false;
        }
        if let Some(mode) = self.lifecycle {
            cfg.life_cycle_mode = mode.into();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the tracker over a detection file and write track records.
    Track {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the life-cycle event log.
        #[arg(long)]
        events: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a tracks file against ground truth.
    Eval {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Machine-readable report destination.
        #[arg(long)]
        out: PathBuf,
        /// CLEAR-MOT match gate in meters.
        #[arg(long, default_value_t = eval::DEFAULT_MATCH_DISTANCE)]
        match_distance: f64,
        /// Recall sweep points for AMOTA/AMOTP.
        #[arg(long, default_value_t = eval::DEFAULT_SWEEP_POINTS)]
        sweep_points: usize,
    },
    /// Generate a synthetic detection + ground-truth pair.
    Synth {
        /// Scenario spec file (`key = value`).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dets: PathBuf,
        #[arg(long)]
        out_gt: PathBuf,
    },
    /// Timing-only runs; reports median FPS and the stage breakdown.
    Bench {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, default_value_t = 5)]
        repeat: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run a configuration axis cross-product and tabulate the metrics.
    Ablate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Which axis to sweep.
        #[arg(long, value_parser = ["solver", "lifecycle", "noise"])]
        axis: String,
        #[arg(long, default_value_t = eval::DEFAULT_MATCH_DISTANCE)]
        match_distance: f64,
        #[arg(long, default_value_t = eval::DEFAULT_SWEEP_POINTS)]
        sweep_points: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn load_detections(path: &Path) -> anyhow::Result<Vec<FrameInput>> {
    let text = io::read_to_string(path)
        .with_context(|| format!("reading detections {}", path.display()))?;
    let frames = io::parse_detections(&text)?;
    if frames.is_empty() {
        bail!("{}: no detection records", path.display());
    }
    Ok(frames)
}

fn print_summary(summary: &RunSummary) {
    let t = &summary.stage_totals;
    println!(
        "frames {}  wall {:.3}s  fps {:.1}",
        summary.frames, summary.total_seconds, summary.fps
    );
    println!(
        "stage totals (us): preprocess {}  predict {}  associate {}  update {}  lifecycle {}",
        t.preprocess_us, t.predict_us, t.associate_us, t.update_us, t.lifecycle_us
    );
}

fn evaluate_frames(
    gt_path: &Path,
    hyp: &[HypothesisFrame],
    opts: &EvalOptions,
) -> anyhow::Result<MetricReport> {
    let gt_text =
        io::read_to_string(gt_path).with_context(|| format!("reading gt {}", gt_path.display()))?;
    let gt = io::parse_gt(&gt_text)?;
    Ok(eval::evaluate(&gt, hyp, opts)?)
}

fn run_tracker_for_eval(
    frames: &[FrameInput],
    cfg: &TrackerConfig,
) -> anyhow::Result<(Vec<HypothesisFrame>, RunSummary)> {
    let (outputs, summary) = run_sequence(frames, cfg)?;
    let hyp = outputs.iter().map(HypothesisFrame::from).collect();
    Ok((hyp, summary))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Track {
            detections,
            out,
            events,
            config,
        } => {
            let cfg = config.load()?;
            let frames = load_detections(&detections)?;
            let mut tracker = polytrack::Tracker::new(cfg)?;
            let mut outputs = Vec::with_capacity(frames.len());
            let mut stage_totals = StageTimings::default();
            let started = std::time::Instant::now();
            for frame in &frames {
                let out_frame = tracker.step(frame)?;
                stage_totals = StageTimings {
                    preprocess_us: stage_totals.preprocess_us + out_frame.timings.preprocess_us,
                    predict_us: stage_totals.predict_us + out_frame.timings.predict_us,
                    associate_us: stage_totals.associate_us + out_frame.timings.associate_us,
                    update_us: stage_totals.update_us + out_frame.timings.update_us,
                    lifecycle_us: stage_totals.lifecycle_us + out_frame.timings.lifecycle_us,
                };
                outputs.push(out_frame);
            }
            let total_seconds = started.elapsed().as_secs_f64();
            io::write_string(&out, &io::tracks_to_string(&outputs))?;
            if let Some(events_path) = events {
                io::write_string(&events_path, &io::events_to_string(tracker.events()))?;
            }
            print_summary(&RunSummary {
                frames: frames.len(),
                total_seconds,
                fps: frames.len() as f64 / total_seconds.max(1e-12),
                stage_totals,
            });
        }
        Command::Eval {
            tracks,
            gt,
            out,
            match_distance,
            sweep_points,
        } => {
            let tracks_text = io::read_to_string(&tracks)
                .with_context(|| format!("reading tracks {}", tracks.display()))?;
            let hyp = io::parse_tracks(&tracks_text)?;
            let opts = EvalOptions {
                dist_threshold: match_distance,
                sweep_points,
            };
            let report = evaluate_frames(&gt, &hyp, &opts)?;
            io::write_string(&out, &io::report_to_string(&report))?;
            print!("{}", io::report_table(&report));
        }
        Command::Synth {
            spec,
            seed,
            out_dets,
            out_gt,
        } => {
            let text = io::read_to_string(&spec)
                .with_context(|| format!("reading scenario {}", spec.display()))?;
            let mut scenario = SynthSpec::from_str(&text)?;
            scenario.seed = seed;
            let (frames, gt) = eval::synth_scenario(&scenario);
            io::write_string(&out_dets, &io::detections_to_string(&frames))?;
            io::write_string(&out_gt, &io::gt_to_string(&gt))?;
            println!(
                "wrote {} frames, {} objects, seed {}",
                scenario.frames, scenario.objects, seed
            );
        }
        Command::Bench {
            detections,
            repeat,
            config,
        } => {
            if repeat == 0 {
                bail!("--repeat must be at least 1");
            }
            let cfg = config.load()?;
            let frames = load_detections(&detections)?;
            let mut runs = Vec::with_capacity(repeat);
            for _ in 0..repeat {
                let (_, summary) = run_sequence(&frames, &cfg)?;
                runs.push(summary);
            }
            runs.sort_by(|a, b| a.fps.partial_cmp(&b.fps).unwrap());
            let median = &runs[runs.len() / 2];
            println!("median of {repeat} runs:");
            print_summary(median);
        }
        Command::Ablate {
            detections,
            gt,
            axis,
            match_distance,
            sweep_points,
            config,
        } => {
            let base_cfg = config.load()?;
            let frames = load_detections(&detections)?;
            let opts = EvalOptions {
                dist_threshold: match_distance,
                sweep_points,
            };
            // (row label, configuration) pairs along the requested axis
            let variants: Vec<(String, TrackerConfig)> = match axis.as_str() {
                "solver" => [Solver::Mnn, Solver::Greedy, Solver::Hungarian, Solver::Dto]
                    .into_iter()
                    .map(|solver| {
                        let mut cfg = base_cfg.clone();
                        cfg.solver = solver;
                        (solver.name().to_string(), cfg)
                    })
                    .collect(),
                "lifecycle" => LifeCycleMode::ALL
                    .into_iter()
                    .map(|mode| {
                        let mut cfg = base_cfg.clone();
                        cfg.life_cycle_mode = mode;
                        (mode.name().to_string(), cfg)
                    })
                    .collect(),
                "noise" => vec![
                    ("baseline", false, false),
                    ("adaptive_noise", true, false),
                    ("confidence_weighting", false, true),
                    ("both", true, true),
                ]
                .into_iter()
                .map(|(label, adaptive, weighting)| {
                    let mut cfg = base_cfg.clone();
                    cfg.adaptive_noise = adaptive;
                    cfg.confidence_weighting = weighting;
                    (label.to_string(), cfg)
                })
                .collect(),
                other => bail!("unknown ablation axis '{other}'"),
            };

            println!(
                "{:<24} {:>8} {:>8} {:>8} {:>6} {:>6} {:>8}",
                "variant", "MOTA", "AMOTA", "AMOTP", "IDS", "FN", "FPS"
            );
            for (label, cfg) in variants {
                let (hyp, summary) = run_tracker_for_eval(&frames, &cfg)?;
                let report = evaluate_frames(&gt, &hyp, &opts)?;
                let m = &report.aggregate;
                println!(
                    "{:<24} {:>8.4} {:>8.4} {:>8.4} {:>6} {:>6} {:>8.1}",
                    label,
                    m.mota,
                    m.amota,
                    m.amotp,
                    m.id_switches,
                    m.false_negatives,
                    summary.fps
                );
            }
        }
    }
    Ok(())
}
