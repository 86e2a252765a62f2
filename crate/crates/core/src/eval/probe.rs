use serde::{Deserialize, Serialize};

use crate::mmot::DomainWeights;
use crate::mwgan::TrainedModels;
use crate::toydata::rng::Stream;
use crate::toydata::ToyConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Samples per domain.
    pub n: usize,
    /// Resample count `R`.
    pub resamples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationProbe {
    pub n: usize,
    pub resamples: usize,
    pub estimates: Vec<f64>,
    /// Largest pairwise difference between estimates.
    pub gap: f64,
}

/// `mean f(x) − Σ_i λ_i⁺ mean f(g_i(x'))` on fresh draws from the true toy
/// distributions: one source set for `x` and one per generator for `x'`.
pub fn objective_estimate(
    models: &TrainedModels,
    toy: &ToyConfig,
    lambda: &DomainWeights,
    n: usize,
    stream: &Stream,
) -> Result<f64> {
    if lambda.lambda_pos.len() != models.generators.len() {
        return Err(Error::Contract("lambda and generator counts differ".into()));
    }
    let mean = |t: &crate::autodiff::Tensor| t.sum() / t.len() as f64;
    let x = toy.source.sample_n(n, &stream.split("source"))?.to_tensor();
    let mut total = mean(&models.critic.eval(&x)?);
    for (i, (g, l)) in models.generators.iter().zip(&lambda.lambda_pos).enumerate() {
        let xs = toy
            .source
            .sample_n(n, &stream.split("generator").split_index(i as u64))?
            .to_tensor();
        total -= l * mean(&models.critic.eval(&g.eval(&xs)?)?);
    }
    Ok(total)
}

/// Max pairwise gap between `R` objective estimates, repetition `rep` of the probe.
pub fn generalization_probe(
    models: &TrainedModels,
    toy: &ToyConfig,
    lambda: &DomainWeights,
    probe: &ProbeConfig,
    rep: u64,
) -> Result<GeneralizationProbe> {
    if probe.resamples < 2 {
        return Err(Error::Contract("generalization probe needs at least 2 resamples".into()));
    }
    if probe.n == 0 {
        return Err(Error::Contract("generalization probe needs n >= 1".into()));
    }
    let root = Stream::new(probe.seed).split("probe").split_index(probe.n as u64).split_index(rep);
    let estimates = (0..probe.resamples)
        .map(|r| objective_estimate(models, toy, lambda, probe.n, &root.split_index(r as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(GeneralizationProbe {
        n: probe.n,
        resamples: probe.resamples,
        gap: max_pairwise_gap(&estimates),
        estimates,
    })
}

pub fn max_pairwise_gap(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mwgan::{NetworkShape, TrainConfig};
    use crate::nets::{Layer, MlpParams, Role};
    use crate::toydata::builtin_config;

    fn models() -> (TrainedModels, ToyConfig, DomainWeights) {
        let cfg = TrainConfig {
            network: NetworkShape { hidden_width: 8, ..NetworkShape::default() },
            ..TrainConfig::default()
        };
        (TrainedModels::init(&cfg, 6), builtin_config("seven-gaussians").unwrap(), DomainWeights::uniform(6))
    }

    #[test]
    fn identical_streams_give_zero_gap() {
        let (m, toy, l) = models();
        let s = Stream::new(4);
        let a = objective_estimate(&m, &toy, &l, 32, &s).unwrap();
        let b = objective_estimate(&m, &toy, &l, 32, &s).unwrap();
        assert_eq!(max_pairwise_gap(&[a, b]), 0.0);
    }

    #[test]
    fn constant_critic_gives_zero_gap() {
        let (mut m, toy, l) = models();
        m.critic = MlpParams::from_layers(
            Role::Critic,
            vec![Layer {
                weight: crate::autodiff::Tensor::zeros(&[2, 1]),
                bias: crate::autodiff::Tensor::vector(vec![0.75]),
            }],
        )
        .unwrap();
        let p = generalization_probe(&m, &toy, &l, &ProbeConfig { n: 16, resamples: 5, seed: 1 }, 0).unwrap();
        assert!(p.gap < 1e-12, "{}", p.gap);
        assert!(p.estimates.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn gap_shrinks_with_samples() {
        let (m, toy, l) = models();
        let gaps = |n| {
            let cfg = ProbeConfig { n, resamples: 4, seed: 2 };
            let g: Vec<f64> = (0..20).map(|r| generalization_probe(&m, &toy, &l, &cfg, r).unwrap().gap).collect();
            median(&g)
        };
        assert!(gaps(1024) <= gaps(64));
    }

    #[test]
    fn rejects_single_resample() {
        let (m, toy, l) = models();
        let cfg = ProbeConfig { n: 4, resamples: 1, seed: 0 };
        assert!(generalization_probe(&m, &toy, &l, &cfg, 0).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
