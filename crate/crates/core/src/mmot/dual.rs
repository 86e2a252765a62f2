use serde::{Deserialize, Serialize};

use super::simplex::{LinearProgram, Sense};
use super::{CouplingTensor, MmotInstance, PotentialMode, PotentialTable, FEASIBILITY_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub optimal_cost: f64,
    pub coupling: CouplingTensor,
    pub basis: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolveResult {
    pub objective: f64,
    pub potentials: PotentialTable,
    /// Linear ids of tuples whose constraint is tight within the feasibility tolerance.
    pub active_constraints: Vec<usize>,
    pub basis: Vec<usize>,
}

/// Minimum-cost coupling with the prescribed marginals.
pub fn solve_primal(instance: &MmotInstance) -> Result<PrimalSolution> {
    let costs = instance.cost_tensor()?;
    let dims = instance.dims();
    let k = dims.len();
    let tuples = costs.len();
    let mut lp = LinearProgram::new(costs.clone());
    let mut idx = vec![0; k];
    let mut row = vec![0.0; tuples];
    for (axis, m) in instance.marginals.iter().enumerate() {
        for (j, &w) in m.weights.iter().enumerate() {
            for (t, r) in row.iter_mut().enumerate() {
                instance.tuple_indices(t, &mut idx);
                *r = if idx[axis] == j { 1.0 } else { 0.0 };
            }
            lp.add_row(&row, Sense::Eq, w)?;
        }
    }
    let sol = lp.solve()?;
    let optimal_cost = costs.iter().zip(&sol.x).map(|(c, g)| c * g).sum();
    Ok(PrimalSolution {
        optimal_cost,
        coupling: CouplingTensor {
            dims,
            mass: sol.x,
        },
        basis: sol.basis,
    })
}

fn active(potentials: &PotentialTable, instance: &MmotInstance, costs: &[f64]) -> Vec<usize> {
    potentials
        .slacks(instance, costs)
        .into_iter()
        .enumerate()
        .filter(|(_, s)| *s <= FEASIBILITY_TOL)
        .map(|(t, _)| t)
        .collect()
}

/// Dual LP with one free potential per domain.
///
/// Each free value is split into positive and negative parts.
pub fn solve_dual_free(instance: &MmotInstance) -> Result<DualSolveResult> {
    let costs = instance.cost_tensor()?;
    let dims = instance.dims();
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, &n| {
            let o = *acc;
            *acc += n;
            Some(o)
        })
        .collect();
    let nvals: usize = dims.iter().sum();
    let mut objective = vec![0.0; 2 * nvals];
    for (i, m) in instance.marginals.iter().enumerate() {
        for (j, &w) in m.weights.iter().enumerate() {
            objective[2 * (offsets[i] + j)] = -w;
            objective[2 * (offsets[i] + j) + 1] = w;
        }
    }
    let mut lp = LinearProgram::new(objective);
    let mut idx = vec![0; dims.len()];
    let mut row = vec![0.0; 2 * nvals];
    for (t, &c) in costs.iter().enumerate() {
        instance.tuple_indices(t, &mut idx);
        row.iter_mut().for_each(|r| *r = 0.0);
        for (i, &j) in idx.iter().enumerate() {
            row[2 * (offsets[i] + j)] += 1.0;
            row[2 * (offsets[i] + j) + 1] -= 1.0;
        }
        lp.add_row(&row, Sense::Le, c)?;
    }
    let sol = lp.solve()?;
    let values: Vec<Vec<f64>> = dims
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            (0..n)
                .map(|j| {
                    let v = 2 * (offsets[i] + j);
                    sol.x[v] - sol.x[v + 1]
                })
                .collect()
        })
        .collect();
    let potentials = PotentialTable::free(values);
    Ok(DualSolveResult {
        objective: potentials.objective(instance),
        active_constraints: active(&potentials, instance, &costs),
        potentials,
        basis: sol.basis,
    })
}

/// Dual LP over a single potential `f` with `f_i = λ_i f`.
///
/// `f` has one value per distinct point across all marginals, so coincident
/// points in different marginals are tied together.
pub fn solve_dual_shared(instance: &MmotInstance) -> Result<DualSolveResult> {
    let lambda = instance.require_lambda()?.clone();
    let costs = instance.cost_tensor()?;
    let signed = lambda.signed();
    let (distinct, owner) = instance.distinct_points();
    let nvals = distinct.len();
    let mut objective = vec![0.0; 2 * nvals];
    for (i, m) in instance.marginals.iter().enumerate() {
        for (j, &w) in m.weights.iter().enumerate() {
            let u = owner[i][j];
            objective[2 * u] -= signed[i] * w;
            objective[2 * u + 1] += signed[i] * w;
        }
    }
    let mut lp = LinearProgram::new(objective);
    let mut idx = vec![0; instance.marginals.len()];
    let mut row = vec![0.0; 2 * nvals];
    for (t, &c) in costs.iter().enumerate() {
        instance.tuple_indices(t, &mut idx);
        row.iter_mut().for_each(|r| *r = 0.0);
        for (i, &j) in idx.iter().enumerate() {
            let u = owner[i][j];
            row[2 * u] += signed[i];
            row[2 * u + 1] -= signed[i];
        }
        lp.add_row(&row, Sense::Le, c)?;
    }
    let sol = lp.solve()?;
    let f_distinct: Vec<f64> = (0..nvals).map(|u| sol.x[2 * u] - sol.x[2 * u + 1]).collect();
    let f = owner
        .iter()
        .map(|o| o.iter().map(|&u| f_distinct[u]).collect())
        .collect();
    let potentials = PotentialTable::shared(lambda, f);
    Ok(DualSolveResult {
        objective: potentials.objective(instance),
        active_constraints: active(&potentials, instance, &costs),
        potentials,
        basis: sol.basis,
    })
}

/// Scales a potential table by the largest factor in `[0, 1]` that makes every
/// tuple constraint hold. Costs are nonnegative, so the zero table is always feasible.
pub fn scale_into_feasible(table: &PotentialTable, instance: &MmotInstance) -> Result<PotentialTable> {
    let costs = instance.cost_tensor()?;
    let zero = PotentialTable {
        values: table.values.clone(),
        mode: PotentialMode::Free,
    };
    let slacks = zero.slacks(instance, &costs);
    let mut factor: f64 = 1.0;
    for (s, c) in slacks.iter().zip(&costs) {
        let sum = c - s;
        if sum > *c {
            factor = factor.min(if sum > 0.0 { c / sum } else { 0.0 });
        }
    }
    if !(0.0..=1.0).contains(&factor) {
        return Err(Error::Contract(format!("bad scale factor {factor}")));
    }
    let mut out = table.clone();
    for v in out.values.iter_mut().flatten() {
        *v *= factor;
    }
    if let PotentialMode::Shared { f, .. } = &mut out.mode {
        for v in f.iter_mut().flatten() {
            *v *= factor;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmot::{CostSpec, DomainWeights};
    use crate::toydata::EmpiricalDistribution;

    fn uniform(points: &[[f64; 2]]) -> EmpiricalDistribution {
        EmpiricalDistribution::uniform(points.iter().map(|p| p.to_vec()).collect()).unwrap()
    }

    #[test]
    fn identical_marginals_cost_zero() {
        let a = uniform(&[[0.0, 0.0], [1.0, 0.0]]);
        let inst = MmotInstance::new(vec![a.clone(), a], CostSpec::PAIRWISE_L2);
        let sol = solve_primal(&inst).unwrap();
        assert!(sol.optimal_cost.abs() < 1e-12);
        // Identity coupling: mass only on (0,0) and (1,1).
        assert!((sol.coupling.mass[0] - 0.5).abs() < 1e-12);
        assert!((sol.coupling.mass[3] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vertical_translation_costs_one() {
        let a = uniform(&[[0.0, 0.0], [1.0, 0.0]]);
        let b = uniform(&[[0.0, 1.0], [1.0, 1.0]]);
        let inst = MmotInstance::new(vec![a, b], CostSpec::PAIRWISE_L2);
        let p = solve_primal(&inst).unwrap();
        assert!((p.optimal_cost - 1.0).abs() < 1e-12);
        let d = solve_dual_free(&inst).unwrap();
        assert!((d.objective - 1.0).abs() < 1e-9);
        assert!(d.potentials.max_violation(&inst).unwrap() <= 1e-9);
    }

    #[test]
    fn shared_dual_needs_lambda() {
        let a = uniform(&[[0.0, 0.0]]);
        let inst = MmotInstance::new(vec![a.clone(), a], CostSpec::PAIRWISE_L2);
        let err = solve_dual_shared(&inst).unwrap_err().to_string();
        assert!(err.contains("lambda"));
    }

    #[test]
    fn shared_is_bounded_by_free() {
        let a = uniform(&[[0.0, 0.0], [0.5, 0.2]]);
        let b = uniform(&[[1.0, 0.0], [0.5, 0.2]]);
        let c = uniform(&[[0.0, 1.0], [0.0, 0.0]]);
        let inst = MmotInstance::new(vec![a, b, c], CostSpec::PAIRWISE_L2)
            .with_lambda(DomainWeights::uniform(2));
        let free = solve_dual_free(&inst).unwrap();
        let shared = solve_dual_shared(&inst).unwrap();
        assert!(shared.objective <= free.objective + 1e-8);
        assert!(shared.potentials.max_violation(&inst).unwrap() <= 1e-9);
    }

    #[test]
    fn scaling_projects_into_feasible_set() {
        let a = uniform(&[[0.0, 0.0], [1.0, 0.0]]);
        let b = uniform(&[[0.0, 1.0], [1.0, 1.0]]);
        let inst = MmotInstance::new(vec![a, b], CostSpec::PAIRWISE_L2);
        let table = PotentialTable::free(vec![vec![3.0, -1.0], vec![2.0, 0.5]]);
        let scaled = scale_into_feasible(&table, &inst).unwrap();
        assert!(scaled.max_violation(&inst).unwrap() <= 1e-12);
        assert!(scaled.values[0][0] > 0.0);
    }
}
