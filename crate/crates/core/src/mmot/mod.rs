//! Exact discrete multi-marginal optimal transport.
//!
//! For `N + 1` empirical marginals the engine solves
//!
//! * the primal coupling LP over the full tuple grid ([`solve_primal`]),
//! * the dual LP with one free potential per domain ([`solve_dual_free`]),
//! * the dual LP with a single potential `f` shared across domains as
//!   `f_i = λ_i f` ([`solve_dual_shared`]),
//!
//! plus diagnostics used to check the critic side: c-transform saturation, the
//! Monte Carlo constraint-violation rate and the per-tuple Lipschitz ratio.
//!
//! Tuples are enumerated row-major: the last marginal's index varies fastest.

mod cost;
mod diagnostics;
mod dual;
pub mod simplex;

pub use cost::{cost_tuple, CostFamily, CostSpec, GroundMetric};
pub use diagnostics::{
    c_transform_check, estimate_sigma_hat, lemma1_bound, lemma1_ratio, ViolationEstimate,
};
pub use dual::{
    scale_into_feasible, solve_dual_free, solve_dual_shared, solve_primal, DualSolveResult,
    PrimalSolution,
};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::toydata::EmpiricalDistribution;
use crate::{Error, Result};

pub const DEFAULT_TUPLE_CAP: usize = 20_000;
/// Dual feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-8;

fn default_cap() -> usize {
    DEFAULT_TUPLE_CAP
}

/// `λ_0` and the positive target weights `λ_i⁺`; the signed weights are
/// `(λ_0, −λ_1⁺, …, −λ_N⁺)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainWeights {
    pub lambda0: f64,
    pub lambda_pos: Vec<f64>,
}

impl DomainWeights {
    /// `λ_0 = 1`, `λ_i⁺ = 1/N`.
    pub fn uniform(num_targets: usize) -> Self {
        DomainWeights {
            lambda0: 1.0,
            lambda_pos: vec![1.0 / num_targets as f64; num_targets],
        }
    }

    pub fn validate(&self, num_targets: usize) -> Result<()> {
        if self.lambda_pos.len() != num_targets {
            return Err(Error::Contract(format!(
                "lambda_pos has {} entries for {num_targets} target domains",
                self.lambda_pos.len()
            )));
        }
        if let Some(bad) = self.lambda_pos.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Contract(format!("lambda_pos entries must be > 0, got {bad}")));
        }
        if !self.lambda0.is_finite() {
            return Err(Error::Contract("lambda0 must be finite".into()));
        }
        Ok(())
    }

    /// Signed weights `λ_i` for every domain including the source.
    pub fn signed(&self) -> Vec<f64> {
        std::iter::once(self.lambda0)
            .chain(self.lambda_pos.iter().map(|l| -l))
            .collect()
    }

    pub fn sums_to_zero(&self) -> bool {
        self.signed().iter().sum::<f64>().abs() <= 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmotInstance {
    pub marginals: Vec<EmpiricalDistribution>,
    pub cost: CostSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<DomainWeights>,
    #[serde(skip, default = "default_cap")]
    pub tuple_cap: usize,
}

impl MmotInstance {
    pub fn new(marginals: Vec<EmpiricalDistribution>, cost: CostSpec) -> Self {
        MmotInstance {
            marginals,
            cost,
            lambda: None,
            tuple_cap: DEFAULT_TUPLE_CAP,
        }
    }

    pub fn with_lambda(mut self, lambda: DomainWeights) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn dims(&self) -> Vec<usize> {
        self.marginals.iter().map(EmpiricalDistribution::len).collect()
    }

    /// Product of marginal sizes, saturating on overflow.
    pub fn num_tuples(&self) -> usize {
        self.marginals
            .iter()
            .fold(1usize, |acc, m| acc.saturating_mul(m.len()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.marginals.len() < 2 {
            return Err(Error::Contract("need at least two marginals".into()));
        }
        for m in &self.marginals {
            m.validate()?;
        }
        let d = self.marginals[0].dim();
        if let Some(bad) = self.marginals.iter().position(|m| m.dim() != d) {
            return Err(Error::Dimension {
                op: "mmot",
                operand: "marginal",
                expected: format!("dimension {d}"),
                found: vec![bad, self.marginals[bad].dim()],
            });
        }
        let size = self.num_tuples();
        if size > self.tuple_cap {
            return Err(Error::InstanceTooLarge {
                size,
                cap: self.tuple_cap,
            });
        }
        if let Some(l) = &self.lambda {
            l.validate(self.marginals.len() - 1)?;
        }
        Ok(())
    }

    pub fn require_lambda(&self) -> Result<&DomainWeights> {
        self.lambda
            .as_ref()
            .ok_or_else(|| Error::Contract("missing field `lambda` required for the shared dual".into()))
    }

    /// Index tuple of a linear tuple id.
    pub fn tuple_indices(&self, mut id: usize, out: &mut [usize]) {
        for (slot, m) in out.iter_mut().zip(&self.marginals).rev() {
            *slot = id % m.len();
            id /= m.len();
        }
    }

    /// Costs of all tuples in enumeration order.
    pub fn cost_tensor(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let k = self.marginals.len();
        let mut idx = vec![0; k];
        let mut pts: Vec<&[f64]> = Vec::with_capacity(k);
        Ok((0..self.num_tuples())
            .map(|t| {
                self.tuple_indices(t, &mut idx);
                pts.clear();
                pts.extend(idx.iter().zip(&self.marginals).map(|(&j, m)| m.points[j].as_slice()));
                self.cost.tuple_unchecked(&pts)
            })
            .collect())
    }

    /// Distinct points over all marginals (exact coordinate equality) and, per
    /// marginal, the distinct-point id of each of its points.
    pub fn distinct_points(&self) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
        let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut distinct = Vec::new();
        let owner = self
            .marginals
            .iter()
            .map(|m| {
                m.points
                    .iter()
                    .map(|p| {
                        // -0.0 and 0.0 are the same location.
                        let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
                        *ids.entry(key).or_insert_with(|| {
                            distinct.push(p.clone());
                            distinct.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        (distinct, owner)
    }
}

/// Dense joint probabilities over the tuple grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTensor {
    pub dims: Vec<usize>,
    pub mass: Vec<f64>,
}

impl CouplingTensor {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Projection onto axis `axis`.
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dims[axis]];
        let inner: usize = self.dims[axis + 1..].iter().product();
        for (t, &m) in self.mass.iter().enumerate() {
            out[(t / inner) % self.dims[axis]] += m;
        }
        out
    }

    /// Largest deviation between any axis projection and the instance weights.
    pub fn marginal_error(&self, instance: &MmotInstance) -> f64 {
        instance
            .marginals
            .iter()
            .enumerate()
            .flat_map(|(i, m)| {
                self.marginal(i)
                    .into_iter()
                    .zip(m.weights.clone())
                    .map(|(a, b)| (a - b).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PotentialMode {
    Free,
    /// `f` holds the shared potential at every point of every marginal; equal
    /// points carry equal values.
    Shared {
        lambda: DomainWeights,
        f: Vec<Vec<f64>>,
    },
}

/// Per-domain potential values at each domain's sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialTable {
    pub values: Vec<Vec<f64>>,
    pub mode: PotentialMode,
}

impl PotentialTable {
    pub fn free(values: Vec<Vec<f64>>) -> Self {
        PotentialTable {
            values,
            mode: PotentialMode::Free,
        }
    }

    /// Builds `f_i = λ_i f` from per-domain evaluations of a single function `f`.
    pub fn shared(lambda: DomainWeights, f: Vec<Vec<f64>>) -> Self {
        let values = f
            .iter()
            .zip(lambda.signed())
            .map(|(fi, l)| fi.iter().map(|v| l * v).collect())
            .collect();
        PotentialTable {
            values,
            mode: PotentialMode::Shared { lambda, f },
        }
    }

    pub fn zeros(instance: &MmotInstance) -> Self {
        PotentialTable::free(instance.marginals.iter().map(|m| vec![0.0; m.len()]).collect())
    }

    /// Dual objective `Σ_i Σ_j w_ij f_i(x_j)`.
    pub fn objective(&self, instance: &MmotInstance) -> f64 {
        self.values
            .iter()
            .zip(&instance.marginals)
            .map(|(v, m)| v.iter().zip(&m.weights).map(|(a, w)| a * w).sum::<f64>())
            .sum()
    }

    /// Per-tuple slack `c(t) − Σ_i f_i(x_{k_i})` for every tuple.
    pub fn slacks(&self, instance: &MmotInstance, costs: &[f64]) -> Vec<f64> {
        let k = instance.marginals.len();
        let mut idx = vec![0; k];
        costs
            .iter()
            .enumerate()
            .map(|(t, c)| {
                instance.tuple_indices(t, &mut idx);
                c - idx
                    .iter()
                    .zip(&self.values)
                    .map(|(&j, v)| v[j])
                    .sum::<f64>()
            })
            .collect()
    }

    /// Largest constraint violation (0 when feasible).
    pub fn max_violation(&self, instance: &MmotInstance) -> Result<f64> {
        let costs = instance.cost_tensor()?;
        Ok(self
            .slacks(instance, &costs)
            .into_iter()
            .fold(0.0, |acc, s| acc.max(-s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MmotInstance {
        let a = EmpiricalDistribution::uniform(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = EmpiricalDistribution::uniform(vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![2.0, 2.0]])
            .unwrap();
        MmotInstance::new(vec![a, b], CostSpec::PAIRWISE_L2)
    }

    #[test]
    fn tuple_enumeration_is_row_major() {
        let inst = tiny();
        let mut idx = [0; 2];
        inst.tuple_indices(4, &mut idx);
        assert_eq!(idx, [1, 1]);
        assert_eq!(inst.num_tuples(), 6);
        let costs = inst.cost_tensor().unwrap();
        assert_eq!(costs[4], 1.0);
    }

    #[test]
    fn cap_is_enforced() {
        let mut inst = tiny();
        inst.tuple_cap = 5;
        match inst.validate() {
            Err(Error::InstanceTooLarge { size, cap }) => assert_eq!((size, cap), (6, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn weights_sign_convention() {
        let w = DomainWeights::uniform(4);
        assert_eq!(w.signed(), vec![1.0, -0.25, -0.25, -0.25, -0.25]);
        assert!(w.sums_to_zero());
        let w = DomainWeights {
            lambda0: 1.0,
            lambda_pos: vec![0.3, 0.3],
        };
        assert!(!w.sums_to_zero());
        assert!(w.validate(3).is_err());
        assert!(DomainWeights { lambda0: 1.0, lambda_pos: vec![0.0] }.validate(1).is_err());
    }

    #[test]
    fn json_schema() {
        let text = r#"{"marginals":[{"points":[[0,0],[1,0]],"weights":[0.5,0.5]},
            {"points":[[0,1]],"weights":[1.0]}],
            "cost":{"family":"pairwise-sum","metric":"l2"},
            "lambda":{"lambda0":1.0,"lambda_pos":[1.0]}}"#;
        let inst = MmotInstance::from_json(text).unwrap();
        assert_eq!(inst.dims(), vec![2, 1]);
        assert_eq!(inst.cost, CostSpec::PAIRWISE_L2);
        assert_eq!(inst.tuple_cap, DEFAULT_TUPLE_CAP);
        assert!(inst.lambda.is_some());
        let back = MmotInstance::from_json(&serde_json::to_string(&inst).unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn coupling_marginals() {
        let c = CouplingTensor {
            dims: vec![2, 3],
            mass: vec![0.1, 0.2, 0.0, 0.3, 0.0, 0.4],
        };
        assert_eq!(c.marginal(0), vec![0.30000000000000004, 0.7]);
        let m1 = c.marginal(1);
        assert!((m1[0] - 0.4).abs() < 1e-15 && (m1[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn distinct_points_merge_coincident() {
        let a = EmpiricalDistribution::uniform(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = EmpiricalDistribution::uniform(vec![vec![1.0, 0.0], vec![-0.0, 0.0]]).unwrap();
        let inst = MmotInstance::new(vec![a, b], CostSpec::PAIRWISE_L2);
        let (pts, owner) = inst.distinct_points();
        assert_eq!(pts.len(), 2);
        assert_eq!(owner, vec![vec![0, 1], vec![1, 0]]);
    }
}
