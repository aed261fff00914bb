use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rvefield::data::Family;
use rvefield::micro::{EnsembleConfig, FiberParams, MatrixParams};
use rvefield::nn::TrainConfig;
use rvefield::pathgen::PathSetConfig;
use rvefield::pca::{PcaOptions, Retention, DEFAULT_DIM_CAP};
use rvefield::rng::derive_seed;
use rvefield::surrogate::{Kind, SurrogateSpec, TrialConfig};
use serde::{Deserialize, Serialize};

// Stream indices for the seeds derived from the master seed.
const SEED_PATHS: u64 = 1;
const SEED_TEST_PATHS: u64 = 2;
const SEED_ENSEMBLE: u64 = 3;
const SEED_PCA: u64 = 4;
const SEED_MODEL: u64 = 5;
const SEED_BATCHES: u64 = 6;
const SEED_TRIAL: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed; every stage draws from its own stream derived from it.
    pub seed: u64,
    pub paths: PathsSection,
    pub ensemble: EnsembleSection,
    pub dataset: DatasetSection,
    pub pca: PcaSection,
    pub train: TrainSection,
    pub trial: TrialSection,
    pub eval: EvalSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub n_random: usize,
    pub n_cyclic: usize,
    pub delta_r_min: f64,
    pub delta_r: f64,
    pub r_max: f64,
    pub max_steps: usize,
    pub cyclic_step: f64,
    pub reversals: (usize, usize),
    /// Held-out paths used by `eval`.
    pub test_random: usize,
    pub test_cyclic: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub d_gamma: usize,
    pub n_fiber: usize,
    pub perturbation_amplitude: f64,
    pub dgamma_cap: f64,
    pub fiber: FiberParams,
    pub matrix: MatrixParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Sequences are cut where any γ entry exceeds this value.
    pub gamma_crit: f64,
    /// Upper lengths of the length groups after the first (all-sequence) group.
    pub group_lengths: Vec<usize>,
    pub batch_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaSection {
    pub family: Family,
    /// Fixed number of components; exclusive with `delta`.
    pub p: Option<usize>,
    pub delta: Option<f64>,
    pub subsample_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub clip_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub kind: Kind,
    pub nnw_in: Vec<usize>,
    pub n_h: usize,
    /// Hidden layers of the output network; the output width follows from kind, p and q.
    pub nnw_out_hidden: Vec<usize>,
    pub q: usize,
    /// Defaults to all groups.
    pub trained_groups: Option<usize>,
    pub n_batches: usize,
    pub n_epoch: usize,
    pub optimizer: OptimizerSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialSection {
    pub target_p: usize,
    pub start_n_h: usize,
    pub increment: usize,
    pub max_n_h: usize,
    pub nnw_in: Vec<usize>,
    pub nnw_out_hidden: Vec<usize>,
    pub validation_fraction: f64,
    pub n_batches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// `(sequence, step)` pairs of the held-out set whose full fields are dumped.
    pub snapshots: Vec<(usize, usize)>,
    /// Output directory of the stage, relative to the output root.
    pub output_dir: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            paths: PathsSection::default(),
            ensemble: EnsembleSection::default(),
            dataset: DatasetSection::default(),
            pca: PcaSection::default(),
            train: TrainSection::default(),
            trial: TrialSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            n_random: 200,
            n_cyclic: 40,
            delta_r_min: 1e-3,
            delta_r: 1e-2,
            r_max: 0.1,
            max_steps: PathSetConfig::default().max_steps,
            cyclic_step: 1e-2,
            reversals: (2, 6),
            test_random: 20,
            test_cyclic: 4,
        }
    }
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let e = EnsembleConfig::default();
        EnsembleSection {
            d_gamma: e.d_gamma,
            n_fiber: e.n_fiber,
            perturbation_amplitude: e.perturbation_amplitude,
            dgamma_cap: e.dgamma_cap,
            fiber: e.fiber,
            matrix: e.matrix,
        }
    }
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection { gamma_crit: 6.0, group_lengths: vec![300, 800], batch_size: 4 }
    }
}

impl Default for PcaSection {
    fn default() -> Self {
        PcaSection { family: Family::Gamma, p: Some(40), delta: None, subsample_fraction: 0.05 }
    }
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        OptimizerSection {
            learning_rate: 3e-3,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            weight_decay: t.weight_decay,
            clip_norm: t.clip_norm,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            kind: Kind::III,
            nnw_in: vec![3, 32],
            n_h: 64,
            nnw_out_hidden: vec![32],
            q: 8,
            trained_groups: None,
            n_batches: 2000,
            n_epoch: 1,
            optimizer: OptimizerSection::default(),
        }
    }
}

impl Default for TrialSection {
    fn default() -> Self {
        TrialSection {
            target_p: 40,
            start_n_h: 16,
            increment: 16,
            max_n_h: 64,
            nnw_in: vec![3, 32],
            nnw_out_hidden: vec![16],
            validation_fraction: 0.2,
            n_batches: 300,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { snapshots: vec![(0, 50), (0, 100), (20, 40)], output_dir: "eval".into() }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: PipelineConfig = serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn path_set(&self) -> PathSetConfig {
        let p = &self.paths;
        PathSetConfig {
            n_random: p.n_random,
            n_cyclic: p.n_cyclic,
            delta_r_min: p.delta_r_min,
            delta_r: p.delta_r,
            r_max: p.r_max,
            max_steps: p.max_steps,
            cyclic_step: p.cyclic_step,
            reversals: p.reversals,
            seed: derive_seed(self.seed, SEED_PATHS),
        }
    }

    pub fn test_path_set(&self) -> PathSetConfig {
        PathSetConfig {
            n_random: self.paths.test_random,
            n_cyclic: self.paths.test_cyclic,
            seed: derive_seed(self.seed, SEED_TEST_PATHS),
            ..self.path_set()
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        let e = &self.ensemble;
        EnsembleConfig {
            d_gamma: e.d_gamma,
            n_fiber: e.n_fiber,
            perturbation_amplitude: e.perturbation_amplitude,
            seed: derive_seed(self.seed, SEED_ENSEMBLE),
            dgamma_cap: e.dgamma_cap,
            fiber: e.fiber,
            matrix: e.matrix,
        }
    }

    /// Dimension of the field the surrogate models.
    pub fn field_dim(&self) -> usize {
        match self.pca.family {
            Family::Gamma => self.ensemble.d_gamma,
            Family::Tau => self.ensemble.d_gamma + self.ensemble.n_fiber,
        }
    }

    pub fn pca_options(&self) -> PcaOptions {
        let retention = match (self.pca.p, self.pca.delta) {
            (Some(p), _) => Retention::Fixed(p),
            (None, Some(delta)) => Retention::Delta(delta),
            (None, None) => Retention::Fixed(self.field_dim()),
        };
        PcaOptions {
            subsample_fraction: self.pca.subsample_fraction,
            retention,
            seed: derive_seed(self.seed, SEED_PCA),
            dim_cap: DEFAULT_DIM_CAP,
        }
    }

    /// Surrogate settings once the number of retained components is known.
    pub fn surrogate_spec(&self, p: usize) -> SurrogateSpec {
        let t = &self.train;
        let q = if t.kind == Kind::III { t.q } else { 1 };
        let width = match t.kind {
            Kind::I => self.field_dim(),
            _ => p / q.max(1),
        };
        let mut nnw_out = t.nnw_out_hidden.clone();
        nnw_out.push(width);
        SurrogateSpec {
            kind: t.kind,
            family: self.pca.family,
            nnw_in: t.nnw_in.clone(),
            n_h: t.n_h,
            nnw_out,
            p,
            q,
            trained_groups: t.trained_groups.unwrap_or(q),
            seed: derive_seed(self.seed, SEED_MODEL),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let o = &self.train.optimizer;
        TrainConfig {
            learning_rate: o.learning_rate,
            beta1: o.beta1,
            beta2: o.beta2,
            epsilon: o.epsilon,
            weight_decay: o.weight_decay,
            n_epoch: self.train.n_epoch,
            n_batches: self.train.n_batches,
            batch_size: self.dataset.batch_size,
            clip_norm: o.clip_norm,
            seed: derive_seed(self.seed, SEED_BATCHES),
        }
    }

    pub fn trial_config(&self) -> TrialConfig {
        let t = &self.trial;
        TrialConfig {
            target_p: t.target_p,
            start_n_h: t.start_n_h,
            increment: t.increment,
            max_n_h: t.max_n_h,
            nnw_in: t.nnw_in.clone(),
            nnw_out_hidden: t.nnw_out_hidden.clone(),
            group_lengths: self.dataset.group_lengths.clone(),
            validation_fraction: t.validation_fraction,
            train: TrainConfig { n_batches: t.n_batches, ..self.train_config() },
            seed: derive_seed(self.seed, SEED_TRIAL),
        }
    }

    /// Check every section against the invariants of the stage that consumes it.
    pub fn validate(&self) -> Result<()> {
        self.path_set().validate().context("paths section")?;
        if self.paths.test_random + self.paths.test_cyclic > 0 {
            self.test_path_set().validate().context("paths section (test set)")?;
        }
        ensure!(self.paths.n_random + self.paths.n_cyclic > 0, "paths section: no paths requested");
        self.ensemble_config().validate().context("ensemble section")?;

        let ds = &self.dataset;
        ensure!(ds.gamma_crit > 0.0, "dataset section: gamma_crit must be positive");
        ensure!(ds.batch_size > 0, "dataset section: batch_size must be positive");
        ensure!(
            ds.group_lengths.windows(2).all(|w| w[0] < w[1]) && ds.group_lengths.first().map_or(true, |&l| l > 0),
            "dataset section: group_lengths must be positive and strictly increasing"
        );

        let pca = &self.pca;
        let d = self.field_dim();
        ensure!(pca.subsample_fraction > 0.0 && pca.subsample_fraction <= 1.0, "pca section: subsample_fraction must be in (0, 1]");
        match (pca.p, pca.delta) {
            (Some(_), Some(_)) => bail!("pca section: set either p or delta, not both"),
            (Some(p), None) => ensure!(p >= 1 && p <= d, "pca section: p = {p} must be in 1..={d}"),
            (None, Some(delta)) => ensure!((0.0..1.0).contains(&delta), "pca section: delta must be in [0, 1)"),
            (None, None) => {}
        }

        // q is ignored by kinds I and II; with a δ-retained PCA the split is checked once p is known
        if let Some(p) = pca.p {
            self.surrogate_spec(p).validate(d).context("train section")?;
        }
        self.train_config().validate().context("train section")?;

        let tr = &self.trial;
        ensure!(tr.start_n_h >= 1 && tr.increment >= 1 && tr.max_n_h >= tr.start_n_h, "trial section: need 1 <= start_n_h <= max_n_h and increment >= 1");
        ensure!((0.0..1.0).contains(&tr.validation_fraction), "trial section: validation_fraction must be in [0, 1)");
        if let Some(p) = pca.p {
            ensure!(tr.target_p >= 1 && tr.target_p <= p, "trial section: target_p = {} must be in 1..={p}", tr.target_p);
        }
        self.trial_config().train.validate().context("trial section")?;

        let out = Path::new(&self.eval.output_dir);
        ensure!(
            !self.eval.output_dir.is_empty() && out.is_relative() && out.components().all(|c| matches!(c, std::path::Component::Normal(_))),
            "eval section: output_dir must be a plain relative directory"
        );
        Ok(())
    }
}
