use clap::{Parser, Subcommand};
use negcurve::config::RunConfig;
use negcurve::pipeline::{
    build_spec, regime_of, run_oracle, run_pipeline, verify_artifacts, Artifacts, RadialSetup, Stage, EXIT_ABORT, EXIT_IO,
    EXIT_OK,
};
use negcurve::curvature::classify_monotonicity;
use negcurve::inner::Regime;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "negcurve", version, about = "Isometric immersions of negatively curved surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted overrides, e.g. `grids.n_x=192`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Admissibility of the curvature.
    Check(Common),
    /// Through the polar metric.
    Metric(Common),
    /// Through the domain split, chart and geodesic metric.
    Chart(Common),
    /// Through the inner and outer solves.
    Solve(Common),
    /// Full pipeline including the surface mesh.
    Immerse(Common),
    /// Radial closed form against integration and the 2-D solver.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Force a regime instead of classifying the curvature.
        #[arg(long, value_parser = ["increasing", "decreasing"])]
        regime: Option<String>,
    },
    /// Re-check the artifacts in the output directory.
    Verify(Common),
}

fn load(c: &Common) -> Result<(RunConfig, PathBuf), negcurve::Error> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &c.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));
    Ok((cfg, out))
}

fn init_logging() {
    let level = std::env::var("LOGLEVEL").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new()
        .parse_filters(&level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> i32 {
    let (common, stage) = match &cli.command {
        Command::Check(c) => (c, Some(Stage::Check)),
        Command::Metric(c) => (c, Some(Stage::Metric)),
        Command::Chart(c) => (c, Some(Stage::Chart)),
        Command::Solve(c) => (c, Some(Stage::Solve)),
        Command::Immerse(c) => (c, Some(Stage::Immerse)),
        Command::Oracle { common, .. } => (common, None),
        Command::Verify(c) => (c, None),
    };
    let (cfg, out) = match load(common) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_IO;
        }
    };
    if let Some(stage) = stage {
        let art = match Artifacts::new(Some(&out)) {
            Ok(a) => a,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_IO;
            }
        };
        let rep = run_pipeline(&cfg, stage, &art);
        if let Some(a) = &rep.abort {
            eprintln!("{} aborted [{}]: {}", a.stage, a.code, a.message);
        }
        return rep.exit_code();
    }
    match &cli.command {
        Command::Oracle { regime, .. } => {
            let res = (|| {
                let spec = build_spec(&cfg)?;
                let regime = match regime.as_deref() {
                    Some("increasing") => Regime::Increasing,
                    Some("decreasing") => Regime::Decreasing,
                    _ => regime_of(classify_monotonicity(&spec)?),
                };
                let rep = run_oracle(&spec, regime, &RadialSetup::default())?;
                Artifacts::new(Some(&out))?.write_json("oracle.json", &rep)?;
                Ok::<_, negcurve::Error>(rep)
            })();
            match res {
                Ok(rep) => {
                    println!("closed form vs integration: {:e}", rep.closed_vs_ode);
                    println!("2-D solver vs closed form at rho = {}: {:e}", rep.outer.rho, rep.outer.rel_error);
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    if matches!(e, negcurve::Error::Io(_) | negcurve::Error::Config(_)) { EXIT_IO } else { EXIT_ABORT }
                }
            }
        }
        Command::Verify(_) => match verify_artifacts(&out) {
            Ok(v) => {
                for c in &v.checks {
                    println!("{} {}: {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.detail);
                }
                if v.all_pass() { EXIT_OK } else { EXIT_ABORT }
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_IO
            }
        },
        _ => unreachable!(),
    }
}

fn main() -> ExitCode {
    init_logging();
    ExitCode::from(run(Cli::parse()) as u8)
}
