use std::time::Duration;

use anyhow::Context;
use clap::Parser;
use fakebook_cli::config::ServerConfig;
use fakebook_cli::http::{router, AppState};
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let config = ServerConfig::parse();
    let (platform, clock) = config.build()?;

    // Real-time mode runs due bot actions and idle-session sweeps periodically;
    // in virtual-clock mode they run whenever the clock is advanced.
    if clock.is_none() {
        let ticker = platform.clone();
        let period = Duration::from_secs(config.tick_secs.max(1));
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            loop {
                interval.tick().await;
                match ticker.tick() {
                    Ok(s) if s.executed + s.sessions_closed > 0 => {
                        tracing::info!(executed = s.executed, sessions_closed = s.sessions_closed, "tick")
                    }
                    Ok(_) => {}
                    Err(e) => tracing::error!(error = %e, "tick failed"),
                }
            }
        });
    }

    let app = router(AppState { platform, clock });
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .with_context(|| format!("binding {}", config.bind))?;
    tracing::info!(addr = %config.bind, virtual_clock = config.virtual_clock, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
