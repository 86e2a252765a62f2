//! Multi-marginal WGAN: one shared critic, one generator per target domain and
//! an auxiliary domain classifier, trained with an inter-domain gradient penalty.

mod losses;
mod train;

use serde::{Deserialize, Serialize};

use crate::mmot::{CostSpec, DomainWeights};
use crate::nets::{AdamConfig, Architecture};
use crate::toydata::{builtin_config, EmpiricalDistribution, ToyConfig};
use crate::{Error, Result};

pub use losses::{
    classifier_loss, critic_objective, gradient_penalty, mutual_information_term, Penalty,
};
pub use train::{
    load_checkpoint, train, write_checkpoint, CheckpointManifest, MwganState, TrainSummary,
    TrainedModels,
};

/// A builtin dataset name or an explicit toy configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRef {
    Builtin(String),
    Inline(ToyConfig),
}

impl DatasetRef {
    pub fn resolve(&self) -> Result<ToyConfig> {
        match self {
            DatasetRef::Builtin(name) => builtin_config(name),
            DatasetRef::Inline(cfg) => {
                cfg.validate()?;
                Ok(cfg.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkShape {
    pub hidden_width: usize,
    pub generator_hidden_layers: usize,
    pub critic_hidden_layers: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        let a = Architecture::toy(1);
        NetworkShape {
            hidden_width: a.hidden_width,
            generator_hidden_layers: a.generator_hidden_layers,
            critic_hidden_layers: a.critic_hidden_layers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub init: u64,
    pub train: u64,
    pub eval: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            init: 1,
            train: 2,
            eval: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: DatasetRef,
    /// `λ_i⁺`, defaults to `1/N`.
    pub lambda_pos: Option<Vec<f64>>,
    pub alpha: f64,
    pub tau: f64,
    /// Gradient-norm budget, defaults to `N`.
    #[serde(rename = "L_f")]
    pub l_f: Option<f64>,
    pub n_critic: usize,
    pub batch_size: usize,
    pub total_generator_steps: usize,
    /// Checkpoint period in generator steps; 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    pub adam: AdamConfig,
    pub identity_weight: f64,
    /// Cost used by constraint diagnostics.
    pub cost: CostSpec,
    pub network: NetworkShape,
    pub seeds: Seeds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: DatasetRef::Builtin(crate::toydata::SEVEN_GAUSSIANS.into()),
            lambda_pos: None,
            alpha: 10.0,
            tau: 10.0,
            l_f: None,
            n_critic: 5,
            batch_size: 256,
            total_generator_steps: 30_000,
            checkpoint_every: 0,
            adam: AdamConfig::default(),
            identity_weight: 0.0,
            cost: CostSpec::STAR_L2,
            network: NetworkShape::default(),
            seeds: Seeds::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills `lambda_pos` and `L_f` from the dataset and checks every field.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let toy = self.dataset.resolve()?;
        let n = toy.num_targets();
        let mut out = self.clone();
        let lambda = out.lambda_pos.get_or_insert_with(|| vec![1.0 / n as f64; n]).clone();
        out.l_f.get_or_insert(n as f64);
        DomainWeights { lambda0: 1.0, lambda_pos: lambda }
            .validate(n)
            .map_err(|e| Error::Config(e.to_string()))?;
        let nonneg = [
            ("alpha", out.alpha),
            ("tau", out.tau),
            ("L_f", out.l_f.unwrap_or(0.0)),
            ("identity_weight", out.identity_weight),
            ("adam.lr", out.adam.lr),
        ];
        if let Some((name, v)) = nonneg.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
        }
        if out.n_critic == 0 {
            return Err(Error::Config("n_critic must be at least 1".into()));
        }
        if out.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if out.network.hidden_width == 0 {
            return Err(Error::Config("network.hidden_width must be at least 1".into()));
        }
        Ok(out)
    }

    pub fn toy(&self) -> Result<ToyConfig> {
        self.dataset.resolve()
    }

    pub fn lambda(&self) -> Result<DomainWeights> {
        let r = self.resolve()?;
        Ok(DomainWeights {
            lambda0: 1.0,
            lambda_pos: r.lambda_pos.expect("resolved"),
        })
    }

    pub fn architecture(&self, num_targets: usize) -> Architecture {
        Architecture {
            data_dim: 2,
            hidden_width: self.network.hidden_width,
            generator_hidden_layers: self.network.generator_hidden_layers,
            critic_hidden_layers: self.network.critic_hidden_layers,
            num_targets,
        }
    }
}

/// Per-domain interpolates `x̃⁽ⁱ⁾ = ρ x + (1 − ρ) x̂⁽ⁱ⁾`, one `ρ` per row shared
/// across domains.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationBatch {
    pub rho: Vec<f64>,
    pub points: Vec<crate::autodiff::Tensor>,
}

impl InterpolationBatch {
    pub fn new(
        source: &crate::autodiff::Tensor,
        generated: &[crate::autodiff::Tensor],
        rho: Vec<f64>,
    ) -> Result<Self> {
        if rho.len() != source.rows() {
            return Err(Error::Contract(format!(
                "{} interpolation weights for {} rows",
                rho.len(),
                source.rows()
            )));
        }
        let points = generated
            .iter()
            .map(|g| {
                if g.shape() != source.shape() {
                    return Err(Error::Dimension {
                        op: "interpolate",
                        operand: "generated",
                        expected: format!("{:?}", source.shape()),
                        found: g.shape().to_vec(),
                    });
                }
                let d = source.cols();
                let data = source
                    .data()
                    .iter()
                    .zip(g.data())
                    .enumerate()
                    .map(|(k, (x, y))| {
                        let r = rho[k / d];
                        r * x + (1.0 - r) * y
                    })
                    .collect();
                crate::autodiff::Tensor::new(source.shape().to_vec(), data)
            })
            .collect::<Result<_>>()?;
        Ok(InterpolationBatch { rho, points })
    }
}

/// Per-domain outputs `x̂⁽ⁱ⁾ = g_i(x)` for one shared source batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBatch {
    pub source: crate::autodiff::Tensor,
    pub outputs: Vec<crate::autodiff::Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub iteration: u64,
    pub critic_objective: f64,
    pub penalty: f64,
    pub classifier_loss: f64,
    pub generator_losses: Vec<f64>,
    pub mutual_information: Vec<f64>,
    pub grad_norm_sum: f64,
}

/// Datasets as source plus targets, checked against the config.
pub(crate) fn check_datasets(datasets: &[EmpiricalDistribution], n: usize) -> Result<()> {
    if datasets.len() != n + 1 {
        return Err(Error::Contract(format!(
            "expected source plus {n} targets, got {} datasets",
            datasets.len()
        )));
    }
    for d in datasets {
        d.validate()?;
        if d.dim() != 2 {
            return Err(Error::Contract(format!("toy data must be 2-D, got {}", d.dim())));
        }
    }
    Ok(())
}
