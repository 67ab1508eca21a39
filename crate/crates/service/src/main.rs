use std::path::PathBuf;
use std::process::ExitCode;

use brush_core::denoise::Backend;
use brush_service::{serve, Config};
use clap::Parser;

#[derive(Parser)]
#[command(name = "brush-server", about = "Diffusion brush editing service")]
struct Args {
    /// Directory holding sessions, masks and runs.
    #[arg(long, env = "BRUSH_DATA_DIR", default_value = "brush-data")]
    data_dir: PathBuf,
    /// `analytic:<mixture.json>` or `host:port` of a denoiser server.
    #[arg(long, env = "BRUSH_BACKEND")]
    backend: String,
    #[arg(long, env = "BRUSH_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "BRUSH_BIND", default_value = "127.0.0.1")]
    bind: String,
    #[arg(long, env = "BRUSH_MAX_SESSIONS", default_value_t = 256)]
    max_sessions: usize,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .init();
    let args = Args::parse();
    let backend = match Backend::parse(&args.backend) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let listener = match tokio::net::TcpListener::bind((args.bind.as_str(), args.port)).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {}:{}: {e}", args.bind, args.port);
            return ExitCode::from(2);
        }
    };
    tracing::info!(addr = %listener.local_addr().map(|a| a.to_string()).unwrap_or_default(), ?backend, "listening");
    let config = Config {
        data_dir: args.data_dir,
        backend,
        max_sessions: args.max_sessions,
    };
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    tokio::select! {
        r = serve(listener, config) => match r {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(3)
            }
        },
        _ = shutdown => ExitCode::SUCCESS,
    }
}
