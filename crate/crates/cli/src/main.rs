use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use teleop_bridge::{Bridge, CockpitSession, DriveMapping};
use teleop_core::coupling::CouplingVariable;
use teleop_core::dataset::Case;
use teleop_core::harness::{
    eval_closed_loop, eval_open_loop, gen_data, load_models, normalized_rmse, read_dataset, run_case, save_models,
    train_all, write_dataset, write_run, ClosedLoopReport, DataPlan, PredictorKind, ScenarioConfig, TrainPlan,
};
use teleop_core::operator::personas;
use teleop_core::pilstm::gradcheck::gradcheck;
use teleop_core::pilstm::NetworkTopology;

#[derive(Parser)]
#[command(name = "teleop", version, about = "Delayed bilateral teleoperation of a slipping UGV")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario with the scripted operator.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        case: Option<Case>,
        /// Persona number, 1 to 5.
        #[arg(long)]
        persona: Option<usize>,
        /// Checkpoints for the predicted case.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Record delayed-case training and test logs.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the four predictors on a recorded dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Use the small desk-scale network for every variable.
        #[arg(long)]
        reduced: bool,
    },
    /// Replay ideal runs through the delay model and both predictors.
    EvalOpenLoop {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: PathBuf,
        /// Persona numbers, 1 to 5; all when omitted.
        #[arg(long, value_delimiter = ',')]
        personas: Vec<usize>,
    },
    /// Ideal, delayed and predicted runs per persona.
    EvalClosedLoop {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        models: PathBuf,
        #[arg(long, value_delimiter = ',')]
        personas: Vec<usize>,
    },
    /// Finite-difference check of the training gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.1)]
        physics_weight: f64,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Serve the cockpit websocket.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        models: Option<PathBuf>,
    },
}

fn scenario(common: &Common) -> anyhow::Result<ScenarioConfig> {
    let mut config = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn out_dir(common: &Common, fallback: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn persona_ids(numbers: &[usize]) -> anyhow::Result<Vec<usize>> {
    let n = personas().len();
    if numbers.is_empty() {
        return Ok((0..n).collect());
    }
    numbers
        .iter()
        .map(|&p| {
            if (1..=n).contains(&p) {
                Ok(p - 1)
            } else {
                bail!("persona {p} does not exist (1 to {n})")
            }
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            case,
            persona,
            models,
        } => {
            let mut config = scenario(&common)?;
            if let Some(p) = persona {
                config = config.with_persona(persona_ids(&[p])?[0]);
            }
            if let Some(case) = case {
                config = config.with_case(case);
            }
            if models.is_some() {
                config.predictor.kind = PredictorKind::Pilstm;
                config.predictor.checkpoint_dir = models;
            }
            let out = common.out.clone().or(config.out.clone()).unwrap_or_else(|| "run".into());
            let (log, report) = run_case(&config, None)?;
            write_run(&out, &log, &report)?;
            println!(
                "{} {} rows, completion {:?}, omega {:.4?}, gamma {:.4?}",
                report.case, report.rows, report.completion, report.norms.omega, report.norms.gamma
            );
        }
        Command::GenData { common } => {
            let mut plan = match &common.config {
                Some(path) => read_json(path)?,
                None => DataPlan::standard(common.seed.unwrap_or(0)),
            };
            if let (Some(seed), Some(_)) = (common.seed, &common.config) {
                plan.base.seed = seed;
            }
            let out = out_dir(&common, "data");
            let data = gen_data(&plan)?;
            write_dataset(&out, &data)?;
            write_json(&out.join("plan.json"), &plan)?;
            println!("{} training and {} test logs in {}", data.train.len(), data.test.len(), out.display());
        }
        Command::Train {
            common,
            data,
            epochs,
            reduced,
        } => {
            let mut plan: TrainPlan = match &common.config {
                Some(path) => read_json(path)?,
                None => TrainPlan::default(),
            };
            if let Some(seed) = common.seed {
                plan.seed = seed;
            }
            if let Some(e) = epochs {
                plan.epochs = e;
            }
            if reduced {
                plan.topology = Some(NetworkTopology::reduced());
            }
            let dataset = read_dataset(&data)?;
            let out = out_dir(&common, "models");
            let (models, logs) = train_all(&dataset.train, &plan, |var, r| {
                eprintln!(
                    "{var} epoch {} data {:.5} physics {:.5} val rmse {:.5}",
                    r.epoch, r.data_loss, r.physics_loss, r.val_rmse
                )
            })?;
            save_models(&out, &models, Some(&logs))?;
            let mut summary = serde_json::Map::new();
            for var in CouplingVariable::ALL {
                let scores = dataset
                    .test
                    .iter()
                    .map(|log| normalized_rmse(&models[var.index()], log))
                    .collect::<Result<Vec<_>, _>>()?;
                println!("{var} normalized test rmse {scores:.4?}");
                summary.insert(var.name().into(), serde_json::json!(scores));
            }
            write_json(&out.join("test_rmse.json"), &summary)?;
            write_json(&out.join("plan.json"), &plan)?;
        }
        Command::EvalOpenLoop {
            common,
            models,
            personas: numbers,
        } => {
            let base = scenario(&common)?;
            let models = load_models(&models)?;
            let mut report = ClosedLoopReport {
                open_loop: Vec::new(),
                closed_loop: Vec::new(),
            };
            for p in persona_ids(&numbers)? {
                let config = base.clone().with_persona(p).with_case(Case::Ideal);
                let (log, _) = run_case(&config, None)?;
                report
                    .open_loop
                    .extend(eval_open_loop(&log, &config.operator.name, &config.delay, config.seed, &models)?);
            }
            let out = out_dir(&common, "open_loop");
            report.write(&out)?;
            let (pilstm, conv) = report.mean_delta_n();
            println!("mean delta_n: PiLSTM {pilstm:.1}%, conventional {conv:.1}%");
        }
        Command::EvalClosedLoop {
            common,
            models,
            personas: numbers,
        } => {
            let base = scenario(&common)?;
            let models = load_models(&models)?;
            let report = eval_closed_loop(&base, &persona_ids(&numbers)?, &models)?;
            let out = out_dir(&common, "closed_loop");
            report.write(&out)?;
            for op in report.operators() {
                if let Some(o) = report.ordering(&op) {
                    println!(
                        "{op}: omega {:?} gamma {:?} completion {}",
                        o.omega, o.gamma, o.completion
                    );
                }
            }
        }
        Command::Gradcheck {
            common,
            physics_weight,
            step,
        } => {
            let report = gradcheck(NetworkTopology::tiny(), physics_weight, common.seed.unwrap_or(0), step)?;
            println!(
                "{} parameters, max relative error {:.3e} at {}",
                report.parameters, report.max_relative_error, report.worst_parameter
            );
            if let Some(out) = &common.out {
                std::fs::create_dir_all(out)?;
                write_json(&out.join("gradcheck.json"), &report)?;
            }
            if !(report.max_relative_error < 1e-4) {
                bail!("gradient check failed");
            }
        }
        Command::Serve {
            common,
            port,
            host,
            models,
        } => {
            tracing_subscriber::fmt().init();
            let config = scenario(&common)?;
            let models = match models.or(config.predictor.checkpoint_dir.clone()) {
                Some(dir) => Some(load_models(&dir)?),
                None => None,
            };
            let session = CockpitSession::new(config, models, DriveMapping::default())?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let bridge = Bridge::bind(SocketAddr::new(host, port), session).await?;
                println!("listening on ws://{}/teleop", bridge.local_addr()?);
                bridge
                    .run(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::error::ErrorKind;

    use super::*;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("teleop").chain(args.iter().copied()))
    }

    #[test]
    fn usage_errors_exit_two() {
        for args in [
            &["launch"][..],
            &["simulate", "--case", "sideways"],
            &["simulate", "--seed", "abc"],
            &[],
        ] {
            let err = parse(args).err().unwrap();
            assert_eq!(err.exit_code(), 2, "{args:?}");
        }
        assert_eq!(parse(&["--help"]).err().unwrap().kind(), ErrorKind::DisplayHelp);
    }

    #[test]
    fn missing_config_names_the_file() {
        let cli = parse(&["simulate", "--config", "/nonexistent/scenario.json"]).unwrap();
        let err = format!("{:#}", run(cli).unwrap_err());
        assert!(err.contains("/nonexistent/scenario.json"), "{err}");
    }

    #[test]
    fn persona_numbers_are_one_based() {
        assert_eq!(persona_ids(&[1, 5]).unwrap(), vec![0, 4]);
        assert_eq!(persona_ids(&[]).unwrap().len(), personas().len());
        assert!(persona_ids(&[0]).is_err());
        assert!(persona_ids(&[6]).is_err());
    }

    #[test]
    fn simulate_writes_log_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cli = parse(&["simulate", "--case", "delayed", "--seed", "3", "--out", out.to_str().unwrap()]).unwrap();
        run(cli).unwrap();
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["seed"], 3);
        assert_eq!(report["case"], "delayed");
        let log = std::fs::read_to_string(out.join("log.csv")).unwrap();
        assert!(log.lines().count() > 100);
    }

    #[test]
    fn gradcheck_passes_on_the_tiny_network() {
        run(parse(&["gradcheck", "--seed", "4"]).unwrap()).unwrap();
    }
}
