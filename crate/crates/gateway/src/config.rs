use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const PORT_ENV: &str = "MEMS_TESTBED_PORT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub port: u16,
    /// Listen on all interfaces instead of loopback.
    pub expose: bool,
    /// Simulated seconds per wall-clock second; 0 runs as fast as possible.
    pub pace: f64,
    /// Frames buffered per telemetry subscriber before ticks are dropped.
    pub telemetry_buffer: usize,
    pub default_decimation: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            expose: false,
            pace: 1.0,
            telemetry_buffer: 1024,
            default_decimation: 20,
        }
    }
}

impl GatewayConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> anyhow::Result<()> {
        anyhow::ensure!(
            self.pace.is_finite() && self.pace >= 0.0,
            "pace must be finite and >= 0"
        );
        anyhow::ensure!(self.telemetry_buffer > 0, "telemetry_buffer must be > 0");
        anyhow::ensure!(
            self.default_decimation > 0,
            "default_decimation must be > 0"
        );
        Ok(())
    }

    /// Applies the port environment variable, if set.
    pub fn with_env(mut self) -> anyhow::Result<Self> {
        if let Ok(p) = std::env::var(PORT_ENV) {
            self.port = p
                .parse()
                .map_err(|_| anyhow::anyhow!("{PORT_ENV}={p} is not a port number"))?;
        }
        Ok(self)
    }

    pub fn bind_addr(&self) -> SocketAddr {
        let ip = if self.expose {
            IpAddr::V4(Ipv4Addr::UNSPECIFIED)
        } else {
            IpAddr::V4(Ipv4Addr::LOCALHOST)
        };
        SocketAddr::new(ip, self.port)
    }
}
