use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use chrono::{DateTime, Utc};
use clap::Parser;
use fakebook_core::platform::{AdminCredentials, Platform};
use fakebook_core::{SystemClock, VirtualClock};

/// Server settings. Every flag can also come from its `FAKEBOOK_*` variable.
#[derive(Debug, Clone, Parser)]
#[command(name = "fakebook-server", about = "Runs the experiment platform HTTP API")]
pub struct ServerConfig {
    #[arg(long, env = "FAKEBOOK_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,

    /// Snapshot file; state is kept in memory only when unset.
    #[arg(long, env = "FAKEBOOK_STORAGE")]
    pub storage: Option<PathBuf>,

    #[arg(long, env = "FAKEBOOK_ADMIN_LOGIN", default_value = "admin")]
    pub admin_login: String,

    #[arg(long, env = "FAKEBOOK_ADMIN_PASSWORD")]
    pub admin_password: String,

    /// Drive time manually through `/admin/clock/advance`.
    #[arg(long, env = "FAKEBOOK_VIRTUAL_CLOCK", default_value_t = false)]
    pub virtual_clock: bool,

    /// Initial instant of the virtual clock; defaults to the current time.
    #[arg(long, env = "FAKEBOOK_VIRTUAL_START")]
    pub virtual_start: Option<DateTime<Utc>>,

    /// Seconds between background ticks that run due bot actions.
    #[arg(long, env = "FAKEBOOK_TICK_SECS", default_value_t = 30)]
    pub tick_secs: u64,

    /// Instrument definitions replacing the bundled ones.
    #[arg(long, env = "FAKEBOOK_INSTRUMENTS")]
    pub instruments: Option<PathBuf>,
}

impl ServerConfig {
    pub fn admin(&self) -> AdminCredentials {
        AdminCredentials {
            login: self.admin_login.clone(),
            password: self.admin_password.clone(),
        }
    }

    /// Builds the platform and, in virtual-clock mode, the clock handle.
    pub fn build(&self) -> anyhow::Result<(Arc<Platform>, Option<VirtualClock>)> {
        let (clock, handle): (Arc<dyn fakebook_core::Clock>, _) = if self.virtual_clock {
            let vc = VirtualClock::new(self.virtual_start.unwrap_or_else(Utc::now));
            (Arc::new(vc.clone()), Some(vc))
        } else {
            (Arc::new(SystemClock), None)
        };
        let mut platform = match &self.storage {
            Some(path) => Platform::open(path, clock, &self.admin())
                .with_context(|| format!("opening {}", path.display()))?,
            None => Platform::new(clock, &self.admin()),
        };
        if let Some(path) = &self.instruments {
            let text =
                std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let set = fakebook_core::measures::InstrumentSet::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            platform = platform.with_instruments(set);
        }
        Ok((Arc::new(platform), handle))
    }
}
