use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::assignment::{empirical_w1, empirical_w2};
use super::parallel::{parallel_map, thread_count};
use super::probe::{generalization_probe, ProbeConfig};
use crate::autodiff::{Tape, Tensor};
use crate::mmot::estimate_sigma_hat;
use crate::mwgan::{load_checkpoint, InterpolationBatch, TrainConfig, TrainedModels};
use crate::toydata::rng::Stream;
use crate::toydata::EmpiricalDistribution;
use crate::{Error, Result};

pub const SIGMA_TUPLES: usize = 10_000;
pub const SIGMA_TOL: f64 = 1e-9;
pub const PROBE_N: usize = 256;
pub const PROBE_RESAMPLES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMetric {
    pub domain: usize,
    pub w2: f64,
    pub w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaHatReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub n: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_domain: Vec<DomainMetric>,
    pub sigma_hat: SigmaHatReport,
    pub grad_norm_sum: f64,
    pub generalization: GeneralizationReport,
}

impl MetricReport {
    pub fn mean_w2(&self) -> f64 {
        self.per_domain.iter().map(|d| d.w2).sum::<f64>() / self.per_domain.len() as f64
    }

    pub fn max_w2(&self) -> f64 {
        self.per_domain.iter().map(|d| d.w2).fold(0.0, f64::max)
    }
}

/// `Σ_i mean ‖∇f(x̃⁽ⁱ⁾)‖` on interpolates between the source data and its images.
pub fn grad_norm_sum(models: &TrainedModels, source: &Tensor, stream: &Stream) -> Result<f64> {
    let generated = models.generate(source)?;
    let mut s = stream.clone();
    let rho = (0..source.rows()).map(|_| s.uniform()).collect();
    let interp = InterpolationBatch::new(source, &generated.outputs, rho)?;
    let mut total = 0.0;
    for x in &interp.points {
        let tape = Tape::new();
        let xv = tape.input(x.clone());
        let out = models.critic.forward(&tape, xv)?.sum()?;
        let g = tape.grad(out, &[xv])?.remove(0);
        let rows = g.rows();
        let norms: f64 = (0..rows)
            .map(|r| g.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum();
        total += norms / rows as f64;
    }
    Ok(total)
}

/// Metrics for trained models against the config's regenerated datasets.
pub fn evaluate(config: &TrainConfig, models: &TrainedModels) -> Result<MetricReport> {
    let config = config.resolve()?;
    let toy = config.toy()?;
    let datasets = toy.generate()?;
    let lambda = config.lambda()?;
    let threads = thread_count()?;
    let source = datasets[0].to_tensor();
    let generated = models.generate(&source)?;
    let gen_dists = generated
        .outputs
        .iter()
        .map(EmpiricalDistribution::from_tensor)
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, &EmpiricalDistribution)> = gen_dists.iter().enumerate().collect();
    let per_domain = parallel_map(&pairs, threads, |&(i, g)| {
        Ok(DomainMetric {
            domain: i + 1,
            w2: empirical_w2(g, &datasets[i + 1])?,
            w1: empirical_w1(g, &datasets[i + 1])?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let eval_root = Stream::new(config.seeds.eval);
    let mut dists = vec![datasets[0].clone()];
    dists.extend(gen_dists);
    let sigma = estimate_sigma_hat(
        |_, d| Ok(models.critic.eval(&d.to_tensor())?.into_data()),
        &dists,
        &lambda,
        &config.cost,
        SIGMA_TUPLES,
        &eval_root.split("sigma"),
        SIGMA_TOL,
    )?;
    let probe = generalization_probe(
        models,
        &toy,
        &lambda,
        &ProbeConfig {
            n: PROBE_N,
            resamples: PROBE_RESAMPLES,
            seed: config.seeds.eval,
        },
        0,
    )?;
    Ok(MetricReport {
        per_domain,
        sigma_hat: SigmaHatReport {
            m: sigma.sample_tuples,
            rate: sigma.violation_rate,
        },
        grad_norm_sum: grad_norm_sum(models, &source, &eval_root.split("interpolation"))?,
        generalization: GeneralizationReport {
            n: probe.n,
            gap: probe.gap,
        },
    })
}

/// Evaluates the latest checkpoint of a run directory.
pub fn evaluate_run(run_dir: &Path) -> Result<MetricReport> {
    let (config, models, _) = load_checkpoint(run_dir)?;
    evaluate(&config, &models)
}

pub fn write_metrics(path: &Path, report: &MetricReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mwgan::{NetworkShape, Seeds};

    fn tiny() -> TrainConfig {
        TrainConfig {
            network: NetworkShape { hidden_width: 8, ..NetworkShape::default() },
            seeds: Seeds { init: 1, train: 2, eval: 3 },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn schema_and_determinism() {
        let cfg = tiny();
        let models = TrainedModels::init(&cfg.resolve().unwrap(), 6);
        let a = evaluate(&cfg, &models).unwrap();
        assert_eq!(a, evaluate(&cfg, &models).unwrap());
        assert_eq!(a.per_domain.len(), 6);
        assert!(a.per_domain.iter().all(|d| d.w2 >= d.w1 && d.w1 > 0.0));
        let v: serde_json::Value = serde_json::to_value(&a).unwrap();
        assert_eq!(v["sigma_hat"]["M"], 10_000);
        assert_eq!(v["per_domain"][0]["domain"], 1);
        assert!(v["generalization"]["n"].is_u64());
        assert!(v["grad_norm_sum"].is_f64());
    }

    #[test]
    fn untrained_generators_sit_near_the_source() {
        // Distances from the origin-centred source to centres at radius 1.5.
        let cfg = tiny();
        let models = TrainedModels::init(&cfg.resolve().unwrap(), 6);
        let r = evaluate(&cfg, &models).unwrap();
        assert!(r.per_domain.iter().all(|d| d.w2.is_finite() && d.w2 > 1.0 && d.w2 < 2.5));
    }

    #[test]
    fn linear_critic_gradient_norms() {
        let cfg = tiny();
        let mut models = TrainedModels::init(&cfg.resolve().unwrap(), 6);
        models.critic = crate::nets::MlpParams::from_layers(
            crate::nets::Role::Critic,
            vec![crate::nets::Layer {
                weight: Tensor::matrix(2, 1, vec![0.6, 0.8]).unwrap(),
                bias: Tensor::vector(vec![0.0]),
            }],
        )
        .unwrap();
        let src = Tensor::from_rows(&[[0.0, 0.0], [0.1, 0.3]]).unwrap();
        let g = grad_norm_sum(&models, &src, &Stream::new(1)).unwrap();
        assert!((g - 6.0).abs() < 1e-12);
    }
}
