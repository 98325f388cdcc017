//! Shared configuration: a flat TOML file whose keys are exactly the shared
//! command-line flags (`k_max` <-> `--k-max`). Flags win over the file.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chunknav::grammar::ActionUnits;
use chunknav::hpac::HpacConfig;
use chunknav::metrics::EtaMode;
use chunknav::seed::STREAM_ALGORITHM;
use chunknav::sim::policy::NoiseModel;
use chunknav::sim::worldgen::WorldGenConfig;
use chunknav::sim::ExecMode;
use serde::{Deserialize, Serialize};

/// Which policy answers queries in `simulate` and `serve`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Oracle,
    Noisy,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Oracle => "oracle",
            PolicyKind::Noisy => "noisy",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(PolicyKind::Oracle),
            "noisy" => Ok(PolicyKind::Noisy),
            _ => Err(format!("unknown policy {s:?}; expected oracle or noisy")),
        }
    }
}

macro_rules! tool_config {
    ($($(#[doc = $doc:literal])* $key:ident : $ty:ty = $default:expr,)*) => {
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, default)]
        pub struct ToolConfig {
            $($(#[doc = $doc])* pub $key: $ty,)*
        }

        impl Default for ToolConfig {
            fn default() -> Self {
                Self { $($key: $default,)* }
            }
        }

        /// Flag overrides; one per configuration key.
        #[derive(clap::Args, Clone, Debug, Default)]
        pub struct Overrides {
            $($(#[doc = $doc])* #[arg(long, value_name = stringify!($key))] pub $key: Option<$ty>,)*
        }

        impl ToolConfig {
            #[cfg(test)]
            pub const KEYS: &'static [&'static str] = &[$(stringify!($key)),*];

            pub fn apply(&mut self, o: &Overrides) {
                $(if let Some(v) = &o.$key { self.$key = v.clone(); })*
            }
        }
    };
}

tool_config! {
    /// Forward step in centimeters.
    forward_cm: u32 = 25,
    /// Turn step in degrees.
    turn_deg: u32 = 15,
    /// Level-1 merge probability.
    merge_prob: f64 = 0.7,
    /// Sub-chunks per chunk.
    max_chunk_size: usize = 3,
    /// Chunks predicted per query.
    k_max: usize = 3,
    /// all, fixed:K or entropy.
    exec_mode: ExecMode = ExecMode::Entropy,
    /// oracle or noisy.
    policy: PolicyKind = PolicyKind::Noisy,
    /// Corruption probability of the first chunk.
    noise_q0: f64 = 0.05,
    /// Added corruption probability per later chunk.
    noise_growth: f64 = 0.15,
    /// Chance a corrupted chunk is reported with full confidence.
    noise_miscalibration: f64 = 0.3,
    /// tau_times_reference_len or shortest_path_length.
    eta_mode: EtaMode = EtaMode::TauTimesReferenceLen,
    /// Success radius in meters.
    tau: f64 = 3.0,
    /// Atomic step budget per episode.
    t_max: usize = 500,
    /// Master seed.
    seed: u64 = 0,
    /// Random stream; only chacha8 is available.
    rng: String = STREAM_ALGORITHM.to_owned(),
    /// Episodes to generate or run.
    episodes: usize = 100,
    /// Directory of .world files; empty means generated worlds.
    world_dir: String = String::new(),
    /// Server address.
    addr: String = "127.0.0.1:7878".to_owned(),
    /// Network timeout in milliseconds.
    timeout_ms: u64 = 5000,
    /// Worker threads; 0 picks one per core.
    threads: usize = 0,
}

impl ToolConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, String> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => ToolConfig::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.units()?;
        self.hpac().validate().map_err(|e| e.to_string())?;
        self.noise().validate()?;
        if self.k_max == 0 {
            return Err("k_max must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(format!("tau must be positive, got {}", self.tau));
        }
        if self.t_max == 0 {
            return Err("t_max must be at least 1".into());
        }
        if self.rng != STREAM_ALGORITHM {
            return Err(format!("unsupported rng {:?}; only {STREAM_ALGORITHM} is available", self.rng));
        }
        if self.episodes == 0 {
            return Err("episodes must be at least 1".into());
        }
        Ok(())
    }

    pub fn units(&self) -> Result<ActionUnits, String> {
        ActionUnits::new(self.forward_cm, self.turn_deg).map_err(|e| e.to_string())
    }

    pub fn hpac(&self) -> HpacConfig {
        HpacConfig {
            merge_prob: self.merge_prob,
            max_chunk_size: self.max_chunk_size,
            seed: self.seed,
        }
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel {
            q0: self.noise_q0,
            growth: self.noise_growth,
            miscalibration: self.noise_miscalibration,
        }
    }

    pub fn worldgen(&self) -> WorldGenConfig {
        WorldGenConfig {
            tau: self.tau,
            t_max: self.t_max,
            ..WorldGenConfig::default()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }
}
