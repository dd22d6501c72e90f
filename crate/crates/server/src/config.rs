//! Server configuration, read from `SCRIPTORIUM_*` environment variables.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use chrono::TimeDelta;
use scriptorium_core::Settings;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub listen: SocketAddr,
    /// JSON snapshot file. Memory-only when absent.
    pub storage: Option<PathBuf>,
    /// JSON-lines file receiving outbound notifications. Logged when absent.
    pub notify_log: Option<PathBuf>,
    /// Base URL used in invitation links.
    pub public_url: String,
    pub session_ttl: TimeDelta,
    pub release_ttl: TimeDelta,
    pub context_margin: f64,
    pub worker_interval: Duration,
    pub sweep_interval: Duration,
    pub fetch_timeout: Duration,
    pub max_manifest_bytes: usize,
    pub max_body_bytes: usize,
    /// Global cap on requests handled at once.
    pub max_concurrent_requests: usize,
}

impl Default for Config {
    fn default() -> Self {
        let listen: SocketAddr = ([127, 0, 0, 1], 8080).into();
        let settings = Settings::default();
        Self {
            listen,
            storage: None,
            notify_log: None,
            public_url: format!("http://{listen}"),
            session_ttl: settings.session_ttl,
            release_ttl: settings.default_release_ttl,
            context_margin: settings.default_context_margin,
            worker_interval: Duration::from_millis(500),
            sweep_interval: Duration::from_secs(60),
            fetch_timeout: Duration::from_secs(30),
            max_manifest_bytes: 32 << 20,
            max_body_bytes: 64 << 20,
            max_concurrent_requests: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub variable: &'static str,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.variable, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn parse<T: FromStr>(variable: &'static str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.trim().parse().map_err(|e: T::Err| ConfigError { variable, message: e.to_string() })
}

fn positive(variable: &'static str, raw: &str) -> Result<u64, ConfigError> {
    match parse::<u64>(variable, raw)? {
        0 => Err(ConfigError { variable, message: "must be positive".into() }),
        n => Ok(n),
    }
}

impl Config {
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Builds a configuration from any variable source; unset or empty
    /// variables keep their defaults.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        let mut c = Config::default();
        if let Some(v) = get("SCRIPTORIUM_LISTEN") {
            c.listen = parse("SCRIPTORIUM_LISTEN", &v)?;
            c.public_url = format!("http://{}", c.listen);
        }
        c.storage = get("SCRIPTORIUM_STORAGE").map(PathBuf::from);
        c.notify_log = get("SCRIPTORIUM_NOTIFY_LOG").map(PathBuf::from);
        if let Some(v) = get("SCRIPTORIUM_PUBLIC_URL") {
            c.public_url = v.trim().trim_end_matches('/').to_string();
        }
        if let Some(v) = get("SCRIPTORIUM_SESSION_TTL_SECS") {
            c.session_ttl = TimeDelta::seconds(positive("SCRIPTORIUM_SESSION_TTL_SECS", &v)? as i64);
        }
        if let Some(v) = get("SCRIPTORIUM_RELEASE_TTL_SECS") {
            c.release_ttl = TimeDelta::seconds(positive("SCRIPTORIUM_RELEASE_TTL_SECS", &v)? as i64);
        }
        if let Some(v) = get("SCRIPTORIUM_CONTEXT_MARGIN") {
            let m: f64 = parse("SCRIPTORIUM_CONTEXT_MARGIN", &v)?;
            if !m.is_finite() || m < 0.0 {
                return Err(ConfigError {
                    variable: "SCRIPTORIUM_CONTEXT_MARGIN",
                    message: "must be a non-negative number".into(),
                });
            }
            c.context_margin = m;
        }
        if let Some(v) = get("SCRIPTORIUM_WORKER_INTERVAL_MS") {
            c.worker_interval = Duration::from_millis(positive("SCRIPTORIUM_WORKER_INTERVAL_MS", &v)?);
        }
        if let Some(v) = get("SCRIPTORIUM_SWEEP_INTERVAL_SECS") {
            c.sweep_interval = Duration::from_secs(positive("SCRIPTORIUM_SWEEP_INTERVAL_SECS", &v)?);
        }
        if let Some(v) = get("SCRIPTORIUM_FETCH_TIMEOUT_SECS") {
            c.fetch_timeout = Duration::from_secs(positive("SCRIPTORIUM_FETCH_TIMEOUT_SECS", &v)?);
        }
        if let Some(v) = get("SCRIPTORIUM_MAX_MANIFEST_BYTES") {
            c.max_manifest_bytes = positive("SCRIPTORIUM_MAX_MANIFEST_BYTES", &v)? as usize;
        }
        if let Some(v) = get("SCRIPTORIUM_MAX_BODY_BYTES") {
            c.max_body_bytes = positive("SCRIPTORIUM_MAX_BODY_BYTES", &v)? as usize;
        }
        if let Some(v) = get("SCRIPTORIUM_MAX_CONCURRENT_REQUESTS") {
            c.max_concurrent_requests = positive("SCRIPTORIUM_MAX_CONCURRENT_REQUESTS", &v)? as usize;
        }
        Ok(c)
    }

    pub fn settings(&self) -> Settings {
        Settings {
            session_ttl: self.session_ttl,
            default_release_ttl: self.release_ttl,
            default_context_margin: self.context_margin,
            ..Settings::default()
        }
    }

    /// Prefix of invitation links; the token is appended.
    pub fn join_url_prefix(&self) -> String {
        format!("{}/api/v1/invitations/", self.public_url)
    }

    /// Cookies are marked `Secure` when the public URL is https.
    pub fn secure_cookies(&self) -> bool {
        self.public_url.starts_with("https://")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn from(pairs: &[(&str, &str)]) -> Result<Config, ConfigError> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Config::from_lookup(|k| map.get(k).cloned())
    }

    #[test]
    fn empty_environment_gives_defaults() {
        assert_eq!(from(&[]).unwrap(), Config::default());
    }

    #[test]
    fn variables_override_defaults() {
        let c = from(&[
            ("SCRIPTORIUM_LISTEN", "0.0.0.0:9000"),
            ("SCRIPTORIUM_STORAGE", "/var/lib/scriptorium/state.json"),
            ("SCRIPTORIUM_RELEASE_TTL_SECS", "3600"),
            ("SCRIPTORIUM_CONTEXT_MARGIN", "0.3"),
            ("SCRIPTORIUM_PUBLIC_URL", "https://annotate.example.org/"),
        ])
        .unwrap();
        assert_eq!(c.listen.port(), 9000);
        assert_eq!(c.storage, Some(PathBuf::from("/var/lib/scriptorium/state.json")));
        assert_eq!(c.release_ttl, TimeDelta::hours(1));
        assert_eq!(c.context_margin, 0.3);
        assert_eq!(c.join_url_prefix(), "https://annotate.example.org/api/v1/invitations/");
        assert!(c.secure_cookies());
        assert_eq!(c.settings().default_release_ttl, TimeDelta::hours(1));
    }

    #[test]
    fn listen_address_sets_default_public_url() {
        let c = from(&[("SCRIPTORIUM_LISTEN", "127.0.0.1:7000")]).unwrap();
        assert_eq!(c.public_url, "http://127.0.0.1:7000");
        assert!(!c.secure_cookies());
    }

    #[test]
    fn malformed_values_name_the_variable() {
        let e = from(&[("SCRIPTORIUM_RELEASE_TTL_SECS", "soon")]).unwrap_err();
        assert_eq!(e.variable, "SCRIPTORIUM_RELEASE_TTL_SECS");
        let e = from(&[("SCRIPTORIUM_RELEASE_TTL_SECS", "0")]).unwrap_err();
        assert_eq!(e.message, "must be positive");
        let e = from(&[("SCRIPTORIUM_CONTEXT_MARGIN", "-1")]).unwrap_err();
        assert_eq!(e.variable, "SCRIPTORIUM_CONTEXT_MARGIN");
    }
}
