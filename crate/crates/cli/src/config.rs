//! Run configuration: built-in defaults, then an optional TOML file, then
//! command-line overrides. The resolved configuration is written next to
//! every output as a manifest that can be passed back via `--config`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use maqc_core::analysis::Weighting;
use maqc_core::dataset::{DatasetConfig, GenerationMode};
use maqc_core::genmodel::{AdamConfig, Architecture, DiffusionConfig};
use maqc_core::{EvolutionConfig, ProtocolConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Set by manifests; ignored on input.
    pub command: Option<String>,
    pub tool_version: Option<String>,

    pub n: usize,
    pub dt: f64,
    pub energy_tol: f64,
    pub max_steps: usize,
    pub paramagnet_steps: usize,
    pub u: f64,
    pub c_const: f64,
    pub u_sweep: Vec<f64>,

    pub radius: usize,
    pub offsets: Vec<i32>,
    /// `exhaustive` or `sampled`.
    pub mode: String,
    /// Sampled-mode draws, or generated samples per label.
    pub count: usize,
    pub seed: u64,

    /// `uniform` or `born`.
    pub weighting: String,
    /// Scatter labels; empty means every label.
    pub labels: Vec<String>,
    pub write_csv: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub diffusion_steps: usize,
    pub eigen_clamp: f64,

    /// Directory holding `psi_c.bin` and `psi_a.bin`; prepared on the fly
    /// when absent.
    pub states: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let evo = EvolutionConfig::new(14);
        let diff = DiffusionConfig::default();
        Self {
            command: None,
            tool_version: None,
            n: evo.num_sites,
            dt: evo.dt,
            energy_tol: evo.energy_tol,
            max_steps: evo.max_steps,
            paramagnet_steps: evo.paramagnet_steps,
            u: ProtocolConfig::default().u,
            c_const: ProtocolConfig::default().c_const,
            u_sweep: vec![0.2, 0.1, 0.05],
            radius: 2,
            offsets: vec![0],
            mode: "exhaustive".into(),
            count: 1000,
            seed: 0,
            weighting: "uniform".into(),
            labels: Vec::new(),
            write_csv: false,
            epochs: diff.epochs,
            batch_size: diff.batch_size,
            hidden: Architecture::default().hidden,
            learning_rate: diff.adam.learning_rate,
            beta_min: diff.beta_min,
            beta_max: diff.beta_max,
            diffusion_steps: diff.steps,
            eigen_clamp: diff.eigen_clamp,
            states: None,
            dataset: None,
            model: None,
            out: PathBuf::from("out"),
        }
    }
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// TOML file of configuration keys (a previous manifest works).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Chain length.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Inter-chain coupling.
    #[arg(long, global = true)]
    pub u: Option<f64>,
    /// Imaginary-time step.
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Label radius.
    #[arg(long, global = true)]
    pub radius: Option<usize>,
    /// RDM sites relative to the label center, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub offsets: Option<Vec<i32>>,
    /// `exhaustive` or `sampled`.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    /// Sampled draws, or generated samples per label.
    #[arg(long, global = true)]
    pub count: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `uniform` or `born`.
    #[arg(long, global = true)]
    pub weighting: Option<String>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory with prepared state files.
    #[arg(long, global = true)]
    pub states: Option<PathBuf>,
    /// Dataset file.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Model checkpoint.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Labels, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    /// Also export datasets as CSV.
    #[arg(long, global = true)]
    pub csv: bool,
}

impl RunConfig {
    pub fn resolve(overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &overrides.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        let o = overrides.clone();
        macro_rules! apply {
            ($($field:ident),*) => { $(if let Some(v) = o.$field { cfg.$field = v; })* };
        }
        apply!(n, u, dt, radius, offsets, mode, count, seed, weighting, epochs, out, labels);
        if o.states.is_some() {
            cfg.states = o.states;
        }
        if o.dataset.is_some() {
            cfg.dataset = o.dataset;
        }
        if o.model.is_some() {
            cfg.model = o.model;
        }
        if o.csv {
            cfg.write_csv = true;
        }
        cfg.command = None;
        cfg.tool_version = None;
        Ok(cfg)
    }

    pub fn evolution(&self) -> EvolutionConfig {
        EvolutionConfig {
            num_sites: self.n,
            dt: self.dt,
            max_steps: self.max_steps,
            energy_tol: self.energy_tol,
            paramagnet_steps: self.paramagnet_steps,
        }
    }

    pub fn protocol(&self) -> ProtocolConfig {
        ProtocolConfig { u: self.u, c_const: self.c_const }
    }

    pub fn dataset_config(&self) -> Result<DatasetConfig, CliError> {
        let mode = match self.mode.as_str() {
            "exhaustive" => GenerationMode::Exhaustive,
            "sampled" => GenerationMode::Sampled { draws: self.count },
            other => return Err(CliError::config(format!("unknown mode {other:?}"))),
        };
        Ok(DatasetConfig { radius: self.radius, offsets: self.offsets.clone(), mode })
    }

    pub fn weighting(&self) -> Result<Weighting, CliError> {
        Ok(self.weighting.parse()?)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture { hidden: self.hidden.clone() }
    }

    pub fn diffusion(&self) -> DiffusionConfig {
        DiffusionConfig {
            beta_min: self.beta_min,
            beta_max: self.beta_max,
            steps: self.diffusion_steps,
            adam: AdamConfig { learning_rate: self.learning_rate, ..AdamConfig::default() },
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            eigen_clamp: self.eigen_clamp,
            ..DiffusionConfig::default()
        }
    }

    /// Writes `<command>.manifest.toml` into the output directory.
    pub fn write_manifest(&self, command: &str) -> Result<PathBuf, CliError> {
        let mut m = self.clone();
        m.command = Some(command.to_string());
        m.tool_version = Some(TOOL_VERSION.to_string());
        let text = toml::to_string(&m).map_err(|e| CliError::config(e.to_string()))?;
        let path = self.out.join(format!("{command}.manifest.toml"));
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

pub fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| CliError::config(format!("--{what} is required")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { n: 6, u: 0.05, out: dir.path().to_path_buf(), labels: vec!["00100".into()], ..RunConfig::default() };
        let path = cfg.write_manifest("dataset").unwrap();
        let back = RunConfig::resolve(&Overrides { config: Some(path), ..Overrides::default() }).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "n = 8\nu = 0.2\nmode = \"sampled\"\n").unwrap();
        let cfg = RunConfig::resolve(&Overrides { config: Some(path), u: Some(0.3), ..Overrides::default() }).unwrap();
        assert_eq!((cfg.n, cfg.u), (8, 0.3));
        assert_eq!(cfg.dataset_config().unwrap().mode, GenerationMode::Sampled { draws: 1000 });
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, "chain_length = 8\n").unwrap();
        assert!(RunConfig::resolve(&Overrides { config: Some(path), ..Overrides::default() }).is_err());
    }
}
