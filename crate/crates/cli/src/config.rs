use std::path::Path;

use arbor4d::metric::MetricWeights;
use arbor4d::spatreg::RegOptions;
use arbor4d::trajectory::{BasisOptions, PipelineOptions, TemporalOptions};
use arbor4d::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

/// Every tunable of a run. Loaded from `--config`, then patched by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub weights: MetricWeights,
    pub samples: usize,
    /// DP grid size; `null` uses `samples`.
    pub grid: Option<usize>,
    pub trajectory_samples: usize,
    pub energy: f64,
    pub max_components: Option<usize>,
    pub clamp: f64,
    pub seed: u64,
    pub max_step: usize,
    pub rounds: usize,
    pub scale_normalize: bool,
    pub literal_warp: bool,
    pub exact_permutation: bool,
    pub no_yj: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            weights: MetricWeights::default(),
            samples: 100,
            grid: None,
            trajectory_samples: 30,
            energy: 0.99,
            max_components: None,
            clamp: 3.0,
            seed: 0,
            max_step: 3,
            rounds: 3,
            scale_normalize: false,
            literal_warp: false,
            exact_permutation: false,
            no_yj: false,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long, global = true)]
    pub lambda_m: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_s: Option<f64>,
    #[arg(long, global = true)]
    pub lambda_p: Option<f64>,
    /// Radius weight inside the branch metric
    #[arg(long, global = true)]
    pub w_rad: Option<f64>,
    /// Samples per branch
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Spatial DP grid size
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Trajectory samples d
    #[arg(long, global = true)]
    pub trajectory_samples: Option<usize>,
    #[arg(long, global = true)]
    pub energy: Option<f64>,
    #[arg(long, global = true)]
    pub max_components: Option<usize>,
    #[arg(long, global = true)]
    pub clamp: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub max_step: Option<usize>,
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    #[arg(long, global = true)]
    pub scale_normalize: bool,
    #[arg(long, global = true)]
    pub literal_warp: bool,
    #[arg(long, global = true)]
    pub exact_permutation: bool,
    #[arg(long, global = true)]
    pub no_yj: bool,
}

impl RunConfig {
    pub fn resolve(o: &Overrides) -> Result<RunConfig> {
        let mut c = match &o.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(o.lambda_m => c.weights.lambda_m);
        set!(o.lambda_s => c.weights.lambda_s);
        set!(o.lambda_p => c.weights.lambda_p);
        set!(o.w_rad => c.weights.radius);
        set!(o.samples => c.samples);
        set!(o.trajectory_samples => c.trajectory_samples);
        set!(o.energy => c.energy);
        set!(o.clamp => c.clamp);
        set!(o.seed => c.seed);
        set!(o.max_step => c.max_step);
        set!(o.rounds => c.rounds);
        if o.grid.is_some() {
            c.grid = o.grid;
        }
        if o.max_components.is_some() {
            c.max_components = o.max_components;
        }
        c.scale_normalize |= o.scale_normalize;
        c.literal_warp |= o.literal_warp;
        c.exact_permutation |= o.exact_permutation;
        c.no_yj |= o.no_yj;
        c.validate()?;
        Ok(c)
    }

    fn load(p: &Path) -> Result<RunConfig> {
        let bytes = std::fs::read(p)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.samples < 2 {
            return Err(Error::invalid("samples", "at least 2 samples per branch"));
        }
        if self.trajectory_samples < 3 {
            return Err(Error::invalid("trajectory_samples", "at least 3 trajectory samples"));
        }
        if !(self.energy > 0.0 && self.energy <= 1.0) {
            return Err(Error::invalid("energy", format!("must lie in (0, 1], got {}", self.energy)));
        }
        if !(self.clamp > 0.0) {
            return Err(Error::invalid("clamp", format!("must be positive, got {}", self.clamp)));
        }
        if self.max_step == 0 || self.rounds == 0 {
            return Err(Error::invalid("max_step", "max_step and rounds must be positive"));
        }
        Ok(())
    }

    pub fn registration(&self) -> RegOptions {
        RegOptions {
            grid: self.grid,
            max_step: self.max_step,
            rounds: self.rounds,
            exact_permutation: self.exact_permutation,
            ..RegOptions::default()
        }
    }

    pub fn basis(&self) -> BasisOptions {
        BasisOptions {
            energy: self.energy,
            max_components: self.max_components,
            yeo_johnson: !self.no_yj,
        }
    }

    pub fn temporal(&self) -> TemporalOptions {
        TemporalOptions { literal: self.literal_warp, ..TemporalOptions::default() }
    }

    pub fn pipeline(&self) -> PipelineOptions {
        PipelineOptions {
            samples: self.samples,
            trajectory_samples: self.trajectory_samples,
            scale_normalize: self.scale_normalize,
            registration: self.registration(),
            basis: self.basis(),
            temporal: self.temporal(),
        }
    }
}
