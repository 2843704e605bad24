//! Run configuration: every command-line setting, loadable from a JSON
//! file. Command-line flags take precedence over file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "BARTBORROW_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Replicate,
    Analyze,
    Diagnose,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Replicate => "replicate",
            Mode::Analyze => "analyze",
            Mode::Diagnose => "diagnose",
        }
    }
}

/// All fields are optional so that a file and the flags can be layered;
/// unset fields fall back to per-command defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub iters: Option<usize>,
    pub burn: Option<usize>,
    pub trees: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub scenario: Option<u8>,
    pub variant: Option<String>,
    pub n_trial: Option<usize>,
    pub n_external: Option<usize>,
    pub reps: Option<usize>,
    /// Comma-separated method names or `all`.
    pub methods: Option<String>,
    pub data: Option<PathBuf>,
    /// `native`, `acupuncture`, or a path to a JSON schema file.
    pub schema: Option<String>,
    /// `cate`, `pate` or `both`.
    pub estimand: Option<String>,
    /// Superiority thresholds reported as posterior probabilities.
    pub thresholds: Option<Vec<f64>>,
    pub points: Option<PathBuf>,
    pub n_perm: Option<usize>,
    pub synth_external: Option<usize>,
    pub synth_mode: Option<String>,
    pub baseline: Option<String>,
    pub standardize: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(std::fs::File::open(path)?)?)
    }

    /// Fields set in `top` replace those of `self`.
    pub fn overlay(self, top: RunConfig) -> RunConfig {
        let base = self;
        overlay_fields!(base, top; mode, seed, iters, burn, trees, threads, out, scenario, variant,
            n_trial, n_external, reps, methods, data, schema, estimand, thresholds, points, n_perm,
            synth_external, synth_mode, baseline, standardize)
    }

    /// Checks that a file written for one command is not used with another
    /// and that the command's required fields are present.
    pub fn validate_for(&self, mode: Mode) -> Result<()> {
        if let Some(m) = self.mode {
            if m != mode {
                return input(format!(
                    "configuration is for `{}`, not `{}`",
                    m.name(),
                    mode.name()
                ));
            }
        }
        match mode {
            Mode::Analyze if self.data.is_none() => input("analyze needs --data"),
            Mode::Diagnose if self.data.is_none() && self.scenario.is_none() => {
                input("diagnose needs --data or --scenario")
            }
            _ => Ok(()),
        }
    }

    /// Flag, then file, then the environment variable.
    pub fn thread_count(&self) -> Result<Option<usize>> {
        if let Some(t) = self.threads {
            return Ok(Some(t));
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) => v.trim().parse().map(Some).or_else(|_| {
                input(format!(
                    "{THREADS_ENV} must be a positive integer (got `{v}`)"
                ))
            }),
            Err(_) => Ok(None),
        }
    }
}
