use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    make_chain_problem, make_ridge_problem, orthonormal_directions, ChainProblemSpec, RidgeShape, DEFAULT_N_KAPPA,
};
use crate::pca::DEFAULT_OVERLAP_TOL;
use crate::problem::{dot, PhysicalBox, ProblemDefinition};
use crate::sampling::DEFAULT_MAX_SCAN;
use crate::slp::TrustRegionConfig;
use crate::subspace::{GradientMode, DEFAULT_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Chain,
    Ridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(rename = "type")]
    pub kind: ProblemKind,
    pub n_dof: usize,
    /// Per-parameter bounds; `None` means `[0.5, 5]` everywhere.
    pub box_lower: Option<Vec<f64>>,
    pub box_upper: Option<Vec<f64>>,
    pub mass_budget: f64,
    pub band_index: usize,
    pub n_kappa: usize,
    /// Ridge only: ambient dimension and rank.
    pub ridge_dim: usize,
    pub ridge_rank: usize,
    /// Ridge only: `a_i·u` values maximizing the objective. Defaults to the
    /// projections of the cube centre shifted by 0.1.
    pub ridge_targets: Option<Vec<f64>>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Chain,
            n_dof: 4,
            box_lower: None,
            box_upper: None,
            mass_budget: 12.0,
            band_index: 2,
            n_kappa: DEFAULT_N_KAPPA,
            ridge_dim: 8,
            ridge_rank: 1,
            ridge_targets: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub schedule: Vec<usize>,
    pub overlap_tol: f64,
    pub max_scan: u64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self { schedule: (1..=10).map(|i| 10 * i).collect(), overlap_tol: DEFAULT_OVERLAP_TOL, max_scan: DEFAULT_MAX_SCAN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaSection {
    pub r_percent: f64,
}

impl Default for PcaSection {
    fn default() -> Self {
        Self { r_percent: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientSection {
    /// How the training-set gradient field is evaluated.
    pub eval_mode: GradientMode,
    /// How gradients are estimated during optimization.
    pub fd_mode: GradientMode,
    pub h: f64,
}

impl Default for GradientSection {
    fn default() -> Self {
        Self { eval_mode: GradientMode::Analytic, fd_mode: GradientMode::CentralFd, h: DEFAULT_STEP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlpSection {
    #[serde(alias = "K")]
    pub max_iters: usize,
    #[serde(flatten)]
    pub trust_region: TrustRegionConfig,
}

impl Default for SlpSection {
    fn default() -> Self {
        Self { max_iters: 200, trust_region: TrustRegionConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Extra numbers of kept directions to compare against the selected one.
    pub p_values: Vec<usize>,
    pub include_exact: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { p_values: vec![1, 2, 4], include_exact: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub problem: ProblemSection,
    pub sampling: SamplingSection,
    pub pca: PcaSection,
    pub gradient: GradientSection,
    pub slp: SlpSection,
    pub sweep: SweepSection,
    pub output_dir: PathBuf,
    /// Only consumed by randomized tests.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSection::default(),
            sampling: SamplingSection::default(),
            pca: PcaSection::default(),
            gradient: GradientSection::default(),
            slp: SlpSection::default(),
            sweep: SweepSection::default(),
            output_dir: PathBuf::from("gradpca-out"),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let schedule = &self.sampling.schedule;
        if schedule.len() < 2 || schedule[0] < 2 || schedule.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "sampling.schedule must be strictly increasing with >= 2 entries, each >= 2; got {schedule:?}"
            )));
        }
        if !(self.pca.r_percent > 0.0) {
            return Err(Error::Config("pca.r_percent must be positive".into()));
        }
        if self.slp.max_iters < 1 {
            return Err(Error::Config("slp.max_iters must be at least 1".into()));
        }
        if !(self.gradient.h > 0.0 && self.gradient.h.is_finite()) {
            return Err(Error::Config("gradient.h must be positive".into()));
        }
        if !(self.sampling.overlap_tol >= 0.0) {
            return Err(Error::Config("sampling.overlap_tol must be nonnegative".into()));
        }
        self.slp.trust_region.validate()
    }

    pub fn build_problem(&self) -> Result<ProblemDefinition> {
        let section = &self.problem;
        match section.kind {
            ProblemKind::Chain => {
                let mut spec = ChainProblemSpec::with_defaults(section.n_dof);
                let d = 2 * section.n_dof;
                if section.box_lower.is_some() || section.box_upper.is_some() {
                    let lower = section.box_lower.clone().unwrap_or_else(|| vec![0.5; d]);
                    let upper = section.box_upper.clone().unwrap_or_else(|| vec![5.0; d]);
                    spec.bounds = PhysicalBox::new(lower, upper)?;
                }
                spec.mass_budget = section.mass_budget;
                spec.band_index = section.band_index;
                spec.n_kappa = section.n_kappa;
                make_chain_problem(&spec)
            }
            ProblemKind::Ridge => {
                let d = section.ridge_dim;
                let directions = orthonormal_directions(d, section.ridge_rank)?;
                let targets = match &section.ridge_targets {
                    Some(t) if t.len() == directions.len() => t.clone(),
                    Some(t) => {
                        return Err(Error::Config(format!(
                            "ridge_targets has {} entries for rank {}",
                            t.len(),
                            directions.len()
                        )))
                    }
                    None => directions.iter().map(|a| dot(a, &vec![0.5; d]) + 0.1).collect(),
                };
                make_ridge_problem(d, directions, RidgeShape::concave_quadratic(targets))
            }
        }
    }
}
