//! The [`Platform`] ties every module to one consistent state.
//!
//! All mutations run under a single write lock and are committed to the
//! configured [`Storage`] before the lock is released. That makes every
//! operation atomic and every claim/submit linearizable per task.

use std::sync::Arc;

use chrono::{DateTime, TimeDelta, Utc};
use parking_lot::{Mutex, RwLock};
use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::clock::{Clock, SystemClock};
use crate::error::{Error, Result};
use crate::notify::{LogSink, NotificationSink};
use crate::store::{MemoryStorage, State, Storage};

/// Tunables with their documented defaults.
#[derive(Debug, Clone)]
pub struct Settings {
    pub session_ttl: TimeDelta,
    pub api_token_ttl: TimeDelta,
    /// Claim lifetime before `release_stale` returns a task to the pool.
    pub default_release_ttl: TimeDelta,
    pub default_context_margin: f64,
    /// Durations above this are ignored by the median timing statistic.
    pub timing_outlier_cap: TimeDelta,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            session_ttl: TimeDelta::days(7),
            api_token_ttl: TimeDelta::days(365),
            default_release_ttl: TimeDelta::hours(24),
            default_context_margin: 0.15,
            timing_outlier_cap: TimeDelta::hours(1),
        }
    }
}

pub struct PlatformBuilder {
    storage: Box<dyn Storage>,
    clock: Arc<dyn Clock>,
    notifier: Arc<dyn NotificationSink>,
    seed: Option<u64>,
    settings: Settings,
}

impl PlatformBuilder {
    pub fn storage(mut self, storage: impl Storage + 'static) -> Self {
        self.storage = Box::new(storage);
        self
    }

    pub fn clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn notifier(mut self, sink: Arc<dyn NotificationSink>) -> Self {
        self.notifier = sink;
        self
    }

    /// Seed for random claim order. Unseeded platforms draw from OS entropy.
    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn settings(mut self, settings: Settings) -> Self {
        self.settings = settings;
        self
    }

    /// Loads any committed state and returns the platform.
    ///
    /// Jobs that were running when the previous process stopped are put back
    /// in the queue; their effects are committed together with their
    /// completion, so replaying them cannot apply anything twice.
    pub fn build(self) -> Result<Platform> {
        let mut state = self
            .storage
            .load()
            .map_err(|e| Error::StorageUnavailable(e.0))?
            .unwrap_or_default();
        state.reindex();
        crate::jobs::requeue_interrupted(&mut state);
        let rng = match self.seed {
            Some(seed) => StdRng::seed_from_u64(seed),
            None => StdRng::from_os_rng(),
        };
        Ok(Platform {
            state: RwLock::new(state),
            storage: self.storage,
            clock: self.clock,
            notifier: self.notifier,
            rng: Mutex::new(rng),
            settings: self.settings,
        })
    }
}

pub struct Platform {
    state: RwLock<State>,
    storage: Box<dyn Storage>,
    clock: Arc<dyn Clock>,
    pub(crate) notifier: Arc<dyn NotificationSink>,
    pub(crate) rng: Mutex<StdRng>,
    pub(crate) settings: Settings,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform").field("settings", &self.settings).finish_non_exhaustive()
    }
}

impl Platform {
    pub fn builder() -> PlatformBuilder {
        PlatformBuilder {
            storage: Box::new(MemoryStorage),
            clock: Arc::new(SystemClock),
            notifier: Arc::new(LogSink),
            seed: None,
            settings: Settings::default(),
        }
    }

    /// A memory-only platform with the system clock.
    pub fn in_memory() -> Self {
        Self::builder().build().expect("memory storage never fails to load")
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub(crate) fn read<T>(&self, f: impl FnOnce(&State) -> Result<T>) -> Result<T> {
        let guard = self.state.read();
        f(&guard)
    }

    /// Runs `f` under the write lock and commits the result.
    ///
    /// `f` must check every precondition before touching the state; when the
    /// backend is durable a copy is kept so a refused commit (or an error
    /// raised after mutation) restores the prior state.
    pub(crate) fn write<T>(&self, f: impl FnOnce(&mut State) -> Result<T>) -> Result<T> {
        let mut guard = self.state.write();
        let backup = self.storage.is_durable().then(|| guard.clone());
        let outcome = f(&mut guard).and_then(|value| {
            self.storage
                .commit(&guard)
                .map(|()| value)
                .map_err(|e| Error::StorageUnavailable(e.0))
        });
        if outcome.is_err() {
            if let Some(prior) = backup {
                *guard = prior;
            }
        }
        outcome
    }

    /// A consistent copy of the whole state, for read-heavy work that should
    /// not hold the lock (exports, reports).
    pub fn snapshot(&self) -> State {
        self.state.read().clone()
    }
}
