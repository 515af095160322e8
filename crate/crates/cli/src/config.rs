//! Settings resolution. Each value comes from the first of: command-line
//! flag, `NEUROADAPT_*` environment variable, config file, default.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use neuroadapt::adapt::HttpBackendConfig;
use neuroadapt::classifier::TrainConfig;
use neuroadapt::session::SessionMode;

use crate::CliError;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Echo replies tagged with the directive id; no network.
    #[default]
    Stub,
    /// OpenAI-compatible chat completions endpoint.
    Http,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stub" => Ok(Self::Stub),
            "http" => Ok(Self::Http),
            _ => Err(format!("unknown backend `{s}` (expected stub or http)")),
        }
    }
}

/// Flags shared by every command. All optional so that lower layers show through.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// Scenario script (TOML); defaults to the five-block script
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// RNG seed for simulation and training
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Session seconds per wall-clock second
    #[arg(long, global = true)]
    pub accel: Option<f64>,
    /// Model file
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Config file (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Service port
    #[arg(long, global = true)]
    pub port: Option<u16>,
    /// Chat backend
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Session mode: adaptive or baseline
    #[arg(long, global = true)]
    pub mode: Option<String>,
}

/// On-disk config. Unknown keys are rejected so typos surface.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub accel: Option<f64>,
    pub model: Option<PathBuf>,
    pub port: Option<u16>,
    pub backend: Option<BackendKind>,
    pub mode: Option<String>,
    /// Directive template file.
    pub templates: Option<PathBuf>,
    pub train: Option<TrainConfig>,
    pub llm: Option<HttpBackendConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            CliError::new("config", format!("{}: {}", path.display(), e.message()))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub accel: Option<f64>,
    pub model: Option<PathBuf>,
    pub port: u16,
    pub backend: BackendKind,
    pub mode: SessionMode,
    pub templates: Option<PathBuf>,
    pub train: TrainConfig,
    pub llm: HttpBackendConfig,
}

fn from_env<T: FromStr>(env: &impl Fn(&str) -> Option<String>, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    match env(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|e| CliError::new("config", format!("{key}=`{v}`: {e}"))),
    }
}

impl Settings {
    pub fn resolve(flags: &Flags, env: impl Fn(&str) -> Option<String>) -> Result<Self, CliError> {
        let config_path = flags
            .config
            .clone()
            .or_else(|| env("NEUROADAPT_CONFIG").map(PathBuf::from));
        let file = match &config_path {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Self::layer(flags, &env, file)
    }

    pub fn layer(flags: &Flags, env: &impl Fn(&str) -> Option<String>, file: ConfigFile) -> Result<Self, CliError> {
        let mode = match flags
            .mode
            .clone()
            .or(env("NEUROADAPT_MODE"))
            .or(file.mode)
        {
            Some(m) => m.parse().map_err(|e: String| CliError::usage(e))?,
            None => SessionMode::Adaptive,
        };
        let mut llm = file.llm.unwrap_or_default();
        llm.apply_env(env)
            .map_err(|e| CliError::new("config", e.to_string()))?;
        let mut train = file.train.unwrap_or_default();
        let seed = flags
            .seed
            .or(from_env(env, "NEUROADAPT_SEED")?)
            .or(file.seed);
        if let Some(s) = seed {
            train.seed = s;
        }
        let accel = flags
            .accel
            .or(from_env(env, "NEUROADAPT_ACCEL")?)
            .or(file.accel);
        if let Some(a) = accel {
            if !(a.is_finite() && a > 0.0) {
                return Err(CliError::usage(format!("--accel must be positive, got {a}")));
            }
        }
        Ok(Self {
            scenario: flags
                .scenario
                .clone()
                .or(env("NEUROADAPT_SCENARIO").map(PathBuf::from))
                .or(file.scenario),
            seed,
            accel,
            model: flags
                .model
                .clone()
                .or(env("NEUROADAPT_MODEL").map(PathBuf::from))
                .or(file.model),
            port: flags
                .port
                .or(from_env(env, "NEUROADAPT_PORT")?)
                .or(file.port)
                .unwrap_or(DEFAULT_PORT),
            backend: flags
                .backend
                .or(from_env(env, "NEUROADAPT_BACKEND")?)
                .or(file.backend)
                .unwrap_or_default(),
            mode,
            templates: env("NEUROADAPT_TEMPLATES").map(PathBuf::from).or(file.templates),
            train,
            llm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let m: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| m.get(k).cloned()
    }

    fn file(text: &str) -> ConfigFile {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn flags_beat_env_beat_file_beat_defaults() {
        let f = file("seed = 1\nport = 9001\naccel = 2.0\nbackend = \"http\"\n");
        let e = env(&[("NEUROADAPT_SEED", "2"), ("NEUROADAPT_PORT", "9002")]);
        let flags = Flags {
            seed: Some(3),
            ..Default::default()
        };
        let s = Settings::layer(&flags, &e, f).unwrap();
        assert_eq!(s.seed, Some(3));
        assert_eq!(s.train.seed, 3);
        assert_eq!(s.port, 9002);
        assert_eq!(s.accel, Some(2.0));
        assert_eq!(s.backend, BackendKind::Http);
        assert_eq!(s.mode, SessionMode::Adaptive);

        let s = Settings::layer(&Flags::default(), &env(&[]), ConfigFile::default()).unwrap();
        assert_eq!((s.port, s.backend, s.seed), (DEFAULT_PORT, BackendKind::Stub, None));
    }

    #[test]
    fn llm_env_overrides_file() {
        let f = file("[llm]\nendpoint = \"http://a/v1/chat/completions\"\nmodel = \"m1\"\n");
        let e = env(&[("NEUROADAPT_LLM_MODEL", "m2")]);
        let s = Settings::layer(&Flags::default(), &e, f).unwrap();
        assert_eq!(s.llm.endpoint, "http://a/v1/chat/completions");
        assert_eq!(s.llm.model, "m2");
    }

    #[test]
    fn bad_values_are_errors() {
        assert!(toml::from_str::<ConfigFile>("sed = 1").is_err());
        let e = env(&[("NEUROADAPT_PORT", "eighty")]);
        let err = Settings::layer(&Flags::default(), &e, ConfigFile::default()).unwrap_err();
        assert!(err.message.contains("NEUROADAPT_PORT"));
        let flags = Flags {
            accel: Some(0.0),
            ..Default::default()
        };
        assert!(Settings::layer(&flags, &env(&[]), ConfigFile::default()).is_err());
    }
}
