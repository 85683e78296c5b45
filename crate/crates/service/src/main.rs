use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use cxr_core::backends::BackendDescriptor;
use cxr_core::metrics::{Dimension, ReportFormat};
use cxr_service::{api, cli, Service, ServiceConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "cxr", version, about = "Chest X-ray triage pipeline")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Fixture,
    Tiny,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run every *.dcm in a directory and write one record per study.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "fixture")]
        backend: BackendKind,
        /// Replay file; defaults to <input>/fixture.ndjson.
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Service config whose [pipeline] section to use.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "predictions.ndjson")]
        out: PathBuf,
    },
    /// Score a run against reference reads.
    Evaluate {
        #[arg(long, alias = "predictions")]
        pred: PathBuf,
        #[arg(long = "ref", alias = "references")]
        reference: PathBuf,
        /// Print one subgroup table: age, gender, machine or manufacturer.
        #[arg(long)]
        by: Option<Dimension>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Render an external per-pathology metric table after range checks.
    Render {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Write synthetic studies with a replay fixture and reference reads.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Export reviewed studies as a labeled dataset.
    Export {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "labeled.ndjson")]
        out: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<ServiceConfig, String> {
    ServiceConfig::load(path.map(PathBuf::as_path), std::env::vars()).map_err(|e| e.to_string())
}

async fn serve(cfg: ServiceConfig) -> Result<(), String> {
    let (svc, queue) = Service::open(cfg.clone()).map_err(|e| e.to_string())?;
    let workers = svc.spawn_workers(queue);
    let listener = tokio::net::TcpListener::bind(cfg.listen)
        .await
        .map_err(|e| format!("bind {}: {e}", cfg.listen))?;
    tracing::info!(addr = %listener.local_addr().map_err(|e| e.to_string())?, "listening");
    axum::serve(listener, api::router(svc))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| e.to_string())?;
    workers.abort();
    Ok(())
}

fn dispatch(args: Args) -> Result<(), String> {
    match args.command {
        Command::Serve { config } => {
            let cfg = load_config(config.as_ref())?;
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()
                .map_err(|e| e.to_string())?
                .block_on(serve(cfg))
        }
        Command::Run {
            input,
            backend,
            fixture,
            seed,
            config,
            out,
        } => {
            let pipeline = match &config {
                Some(_) => load_config(config.as_ref())?.pipeline,
                None => Default::default(),
            };
            let descriptor = match backend {
                BackendKind::Fixture => BackendDescriptor::Fixture {
                    name: "fixture".into(),
                    fixture_path: fixture.unwrap_or_else(|| input.join("fixture.ndjson")),
                },
                BackendKind::Tiny => BackendDescriptor::TinyReference {
                    name: "tiny".into(),
                    seed,
                },
            };
            let n = cli::run_command(&input, &descriptor, &pipeline, &out).map_err(|e| e.to_string())?;
            eprintln!("wrote {n} records to {}", out.display());
            Ok(())
        }
        Command::Evaluate {
            pred,
            reference,
            by,
            format,
        } => {
            print!("{}", cli::evaluate_command(&pred, &reference, by, format).map_err(|e| e.to_string())?);
            Ok(())
        }
        Command::Render { table, format } => {
            print!("{}", cli::render_command(&table, format).map_err(|e| e.to_string())?);
            Ok(())
        }
        Command::Synth { out, count, seed } => {
            cli::synth_command(&out, count, seed, &Default::default()).map_err(|e| e.to_string())?;
            eprintln!("wrote {count} studies to {}", out.display());
            Ok(())
        }
        Command::Export { config, out } => {
            let n = cli::export_command(load_config(config.as_ref())?, &out).map_err(|e| e.to_string())?;
            eprintln!("exported {n} reviewed studies to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
