use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{parse_override, ExperimentConfig, ExperimentKind};
use super::experiments::run_experiment;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "fermilab", version, about = "Mean-field and semiclassical experiments for weakly interacting fermions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file overriding the experiment preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory for the manifest, tables and plot data.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweep points (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", value_parser = parse_override)]
    pub tolerances: Vec<(String, f64)>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// N-body versus Hartree and Hartree-Fock Husimi gaps with conservation checks.
    ConvMeanfield(RunArgs),
    /// Exchange-term scaling of the plane-wave ball against N.
    ExchangeScaling(RunArgs),
    /// Hierarchy bounds, expansion identities, Gaussian norms and closed-form values.
    HierarchyBounds(RunArgs),
    /// Hartree versus Vlasov Husimi distance along an eps sweep.
    VlasovGap(RunArgs),
    /// Momentum gap, Lieb-Thirring, kinetic tail and displacement-band checks.
    AppendixChecks(RunArgs),
    /// Husimi positivity, mu invariants and equation residuals.
    Residuals(RunArgs),
    /// Prints the default configuration of an experiment.
    Preset {
        /// Experiment name, e.g. `vlasov_gap`.
        experiment: String,
    },
}

fn kind_from_name(name: &str) -> Result<ExperimentKind> {
    let key = name.replace('-', "_");
    ExperimentKind::ALL
        .into_iter()
        .find(|k| k.name() == key)
        .ok_or_else(|| Error::Validation { field: "experiment".into(), message: format!("unknown experiment `{name}`") })
}

/// Resolves the configuration of one subcommand invocation.
pub fn resolve(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(kind),
    };
    if cfg.experiment != kind {
        return Err(Error::Validation {
            field: "experiment".into(),
            message: format!("config names `{}` but the subcommand is `{kind}`", cfg.experiment),
        });
    }
    if let Some(out) = &args.out {
        cfg.output = out.clone();
    }
    cfg.tolerance.apply(&args.tolerances)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Exit status: 0 when every assertion passes, 1 when one fails, 2 on errors.
pub fn run(cli: Cli) -> i32 {
    let (kind, args) = match cli.command {
        Command::Preset { experiment } => {
            return match kind_from_name(&experiment).and_then(|k| ExperimentConfig::preset(k).to_toml()) {
                Ok(text) => {
                    print!("{text}");
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    2
                }
            };
        }
        Command::ConvMeanfield(a) => (ExperimentKind::ConvMeanfield, a),
        Command::ExchangeScaling(a) => (ExperimentKind::ExchangeScaling, a),
        Command::HierarchyBounds(a) => (ExperimentKind::HierarchyBounds, a),
        Command::VlasovGap(a) => (ExperimentKind::VlasovGap, a),
        Command::AppendixChecks(a) => (ExperimentKind::AppendixChecks, a),
        Command::Residuals(a) => (ExperimentKind::Residuals, a),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return 2;
        }
    }
    let result = resolve(kind, &args).and_then(|cfg| run_experiment(&cfg).map(|r| (cfg, r)));
    match result {
        Ok((cfg, report)) => {
            print!("{}", report.summary());
            println!("report written to {}", cfg.output.display());
            if report.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subcommands_and_flags_parse() {
        let cli = Cli::try_parse_from(["fermilab", "vlasov-gap", "--out", "x", "--threads", "1", "--tol", "slope=0.2"]).unwrap();
        match cli.command {
            Command::VlasovGap(a) => {
                let cfg = resolve(ExperimentKind::VlasovGap, &a).unwrap();
                assert_eq!(cfg.output, PathBuf::from("x"));
                assert_eq!(cfg.tolerance.slope, 0.2);
            }
            other => panic!("{other:?}"),
        }
        assert!(Cli::try_parse_from(["fermilab", "residuals", "--tol", "slope"]).is_err());
    }

    #[test]
    fn mismatched_config_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "experiment = \"residuals\"\n").unwrap();
        let args = RunArgs { config: Some(path), out: None, threads: None, tolerances: vec![] };
        assert!(matches!(resolve(ExperimentKind::VlasovGap, &args), Err(Error::Validation { .. })));
        assert_eq!(main_with(["fermilab", "preset", "nothing"]), 2);
        assert_eq!(main_with(["fermilab", "preset", "exchange-scaling"]), 0);
    }
}
