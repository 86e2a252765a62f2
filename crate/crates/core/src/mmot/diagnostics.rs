use serde::{Deserialize, Serialize};

use super::{CostSpec, DomainWeights, DualSolveResult, GroundMetric, MmotInstance, PotentialMode};
use crate::toydata::rng::Stream;
use crate::toydata::EmpiricalDistribution;
use crate::{Error, Result};

/// Largest `|f(x⁰_j) − min_{k_1..k_N} [c − Σ_{i≥1} λ_i f(x^{(i)}_{k_i})]|` over source points.
///
/// Zero means the source values of a shared potential are the c-transform of its
/// target values.
pub fn c_transform_check(result: &DualSolveResult, instance: &MmotInstance) -> Result<f64> {
    let PotentialMode::Shared { lambda, .. } = &result.potentials.mode else {
        return Err(Error::Contract("c-transform check needs a shared-mode potential".into()));
    };
    if (lambda.lambda0 - 1.0).abs() > 1e-12 {
        return Err(Error::Contract(format!(
            "c-transform check needs lambda0 = 1, got {}",
            lambda.lambda0
        )));
    }
    let costs = instance.cost_tensor()?;
    let values = &result.potentials.values;
    let dims = instance.dims();
    let inner: usize = dims[1..].iter().product();
    let mut idx = vec![0; dims.len()];
    let mut worst: f64 = 0.0;
    for j0 in 0..dims[0] {
        let mut best = f64::INFINITY;
        for t in j0 * inner..(j0 + 1) * inner {
            instance.tuple_indices(t, &mut idx);
            let others: f64 = (1..dims.len()).map(|i| values[i][idx[i]]).sum();
            best = best.min(costs[t] - others);
        }
        worst = worst.max((values[0][j0] - best).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationEstimate {
    pub sample_tuples: usize,
    pub violation_rate: f64,
    /// Mean excess `λ_0 f(x) − Σ λ_i⁺ f(x̂_i) − c` over violating tuples (0 if none).
    pub mean_violation_magnitude: f64,
}

/// Monte Carlo rate of tuples violating `λ_0 f(x) − Σ_i λ_i⁺ f(x̂^{(i)}) ≤ c`.
///
/// `evaluate(i, dist)` returns `f` at every point of domain `i`. Tuples are drawn
/// uniformly with one index per domain; a tuple counts as violating when its excess
/// is above `tol`.
pub fn estimate_sigma_hat(
    mut evaluate: impl FnMut(usize, &EmpiricalDistribution) -> Result<Vec<f64>>,
    distributions: &[EmpiricalDistribution],
    lambda: &DomainWeights,
    cost: &CostSpec,
    m: usize,
    stream: &Stream,
    tol: f64,
) -> Result<ViolationEstimate> {
    if m == 0 {
        return Err(Error::Contract("sigma-hat needs at least one tuple".into()));
    }
    lambda.validate(distributions.len().saturating_sub(1))?;
    let values: Vec<Vec<f64>> = distributions
        .iter()
        .enumerate()
        .map(|(i, d)| evaluate(i, d))
        .collect::<Result<_>>()?;
    for (v, d) in values.iter().zip(distributions) {
        if v.len() != d.len() {
            return Err(Error::Contract(format!(
                "evaluator returned {} values for {} points",
                v.len(),
                d.len()
            )));
        }
    }
    let signed = lambda.signed();
    let mut s = stream.clone();
    let mut idx = vec![0; distributions.len()];
    let mut pts: Vec<&[f64]> = Vec::with_capacity(distributions.len());
    let (mut count, mut excess_sum) = (0usize, 0.0);
    for _ in 0..m {
        for (k, d) in idx.iter_mut().zip(distributions) {
            *k = s.below(d.len());
        }
        pts.clear();
        pts.extend(idx.iter().zip(distributions).map(|(&k, d)| d.points[k].as_slice()));
        let c = cost.tuple(&pts)?;
        let lhs: f64 = idx
            .iter()
            .zip(&values)
            .zip(&signed)
            .map(|((&k, v), l)| l * v[k])
            .sum();
        let excess = lhs - c;
        if excess > tol {
            count += 1;
            excess_sum += excess;
        }
    }
    Ok(ViolationEstimate {
        sample_tuples: m,
        violation_rate: count as f64 / m as f64,
        mean_violation_magnitude: if count > 0 { excess_sum / count as f64 } else { 0.0 },
    })
}

/// `Σ_i |f(x) − f(x̂_i)| / ‖x − x̂_i‖₂`, or `None` when some `x̂_i` coincides with `x`.
pub fn lemma1_ratio<P: AsRef<[f64]>>(
    f: impl Fn(&[f64]) -> f64,
    x: &[f64],
    targets: &[P],
) -> Option<f64> {
    let fx = f(x);
    let mut total = 0.0;
    for t in targets {
        let t = t.as_ref();
        let dist = GroundMetric::L2.distance(x, t);
        if dist == 0.0 {
            return None;
        }
        total += (fx - f(t)).abs() / dist;
    }
    Some(total)
}

/// The constant `N · c / min_i ‖x − x̂_i‖₂` that bounds [`lemma1_ratio`] whenever
/// `(1/N) Σ_i |f(x) − f(x̂_i)| ≤ c`.
pub fn lemma1_bound<P: AsRef<[f64]>>(x: &[f64], targets: &[P], cost: &CostSpec) -> Option<f64> {
    let min = targets
        .iter()
        .map(|t| GroundMetric::L2.distance(x, t.as_ref()))
        .fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        return None;
    }
    let mut tuple: Vec<&[f64]> = vec![x];
    tuple.extend(targets.iter().map(AsRef::as_ref));
    let c = cost.tuple(&tuple).ok()?;
    Some(targets.len() as f64 * c / min)
}
