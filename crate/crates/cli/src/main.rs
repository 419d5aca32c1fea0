use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hoifit::fixture::FixtureParams;
use hoifit::pipeline::{
    cmd_estimate_many, cmd_interpolate, cmd_render_debug, cmd_score, load_config, make_fixture, parse_mesh_spec,
    KeyframeSelection, PipelineError, ScoreInputs,
};

#[derive(Parser)]
#[command(name = "hoifit", version, about = "Object pose fitting, milestone interpolation and motion scoring")]
struct Cli {
    /// Seed for RANSAC and fixture generation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Key-value config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, applied after the file. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Log level: error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the object pose for one or more scene bundles.
    Estimate {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        /// Worker threads for multiple bundles.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Pick milestones from a motion and interpolate them.
    Interpolate {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Number of evenly spaced milestones; defaults to the config value.
        #[arg(long, conflicts_with = "times")]
        keyframes: Option<usize>,
        /// Milestone times in seconds, comma separated.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Output frame rate; defaults to the config value.
        #[arg(long)]
        fps: Option<f64>,
    },
    /// Per-frame rewards and sequence metrics of a simulated motion.
    Score {
        sim: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Contact label file.
        #[arg(long)]
        labels: PathBuf,
        /// Object mesh for intersection volume and contact percentage.
        #[arg(long)]
        object: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Soft-render posed meshes to silhouette and depth maps.
    RenderDebug {
        /// `PATH` or `PATH@POSE`, POSE being a pose.json or `w,x,y,z,tx,ty,tz[,s]`.
        #[arg(long = "mesh", required = true)]
        meshes: Vec<String>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write a synthetic scene with a known pose.
    MakeFixture {
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let config = load_config(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Estimate { bundles, out, jobs } => {
            let mut first_err = None;
            let many = bundles.len() > 1;
            for (path, r) in cmd_estimate_many(&bundles, &config, cli.seed, &out, jobs) {
                match r {
                    Ok(o) => log::info!("{}: total loss {:.6}", path.display(), o.final_losses.total),
                    Err(e) => {
                        if many {
                            eprintln!("{}: {e}", path.display());
                        }
                        first_err.get_or_insert(e);
                    }
                }
            }
            first_err.map_or(Ok(()), Err)
        }
        Command::Interpolate { input, out, keyframes, times, fps } => {
            let sel = match times {
                Some(t) => KeyframeSelection::Times(t),
                None => KeyframeSelection::Count(keyframes.unwrap_or(config.milestones)),
            };
            cmd_interpolate(&input, &sel, fps.unwrap_or(config.fps), &out).map(|_| ())
        }
        Command::Score { sim, reference, labels, object, out } => {
            let inputs = ScoreInputs { sim: &sim, reference: &reference, labels: &labels, object: object.as_deref() };
            let s = cmd_score(&inputs, &config, &out)?;
            println!("{}", summary_line(&s));
            Ok(())
        }
        Command::RenderDebug { meshes, out } => {
            let specs = meshes.iter().map(|m| parse_mesh_spec(m)).collect::<Result<Vec<_>, _>>()?;
            cmd_render_debug(&specs, &config, &out).map(|_| ())
        }
        Command::MakeFixture { out } => {
            let params = FixtureParams { camera: config.camera, ..FixtureParams::default() };
            let bundle = make_fixture(cli.seed, &params, &out)?;
            println!("{}", bundle.display());
            Ok(())
        }
    }
}

fn summary_line(s: &hoifit::pipeline::ScoreSummary) -> String {
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
    format!(
        "frames={} R_imitate={:.6} R_contact={:.6} FS={:.6} IV={} CP={}",
        s.frames,
        s.r_imitate,
        s.r_contact,
        s.fs,
        opt(s.iv),
        opt(s.cp)
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
