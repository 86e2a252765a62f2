use crate::toydata::EmpiricalDistribution;
use crate::{Error, Result};

/// Minimum-cost perfect matching on a square cost matrix (row-major), by
/// shortest augmenting paths with potentials. Returns `assign[row] = col`.
pub fn min_cost_assignment(n: usize, cost: &[f64]) -> Result<Vec<usize>> {
    if cost.len() != n * n {
        return Err(Error::Contract(format!(
            "assignment needs {} costs for n = {n}, got {}",
            n * n,
            cost.len()
        )));
    }
    if let Some(bad) = cost.iter().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("assignment cost {bad}")));
    }
    // 1-based arrays with column 0 as the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    Ok(assign)
}

fn check_pair(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "empirical distance needs equal sizes, got {} and {}; resample with replacement first",
            a.len(),
            b.len()
        )));
    }
    if a.dim() != b.dim() && !a.is_empty() {
        return Err(Error::Contract(format!("dimensions differ: {} vs {}", a.dim(), b.dim())));
    }
    let n = a.len() as f64;
    for d in [a, b] {
        if d.weights.iter().any(|w| (w - 1.0 / n).abs() > 1e-12) {
            return Err(Error::Contract("empirical distance needs uniform weights".into()));
        }
    }
    Ok(())
}

fn matched_mean(a: &EmpiricalDistribution, b: &EmpiricalDistribution, cost: impl Fn(&[f64], &[f64]) -> f64) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut c = Vec::with_capacity(n * n);
    for p in &a.points {
        for q in &b.points {
            c.push(cost(p, q));
        }
    }
    let assign = min_cost_assignment(n, &c)?;
    Ok(assign.iter().enumerate().map(|(i, &j)| c[i * n + j]).sum::<f64>() / n as f64)
}

fn sq_dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `sqrt((1/n) min_π Σ ‖a_i − b_π(i)‖²)` for equal-size uniform point sets.
pub fn empirical_w2(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    Ok(matched_mean(a, b, sq_dist)?.sqrt())
}

/// `(1/n) min_π Σ ‖a_i − b_π(i)‖` for equal-size uniform point sets.
pub fn empirical_w1(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    matched_mean(a, b, |p, q| sq_dist(p, q).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toydata::rng::Stream;

    fn uniform(points: Vec<Vec<f64>>) -> EmpiricalDistribution {
        EmpiricalDistribution::uniform(points).unwrap()
    }

    fn random(n: usize, s: &mut Stream) -> EmpiricalDistribution {
        uniform((0..n).map(|_| vec![s.uniform_in(-1.0, 1.0), s.uniform_in(-1.0, 1.0)]).collect())
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identical_sets() {
        let a = random(7, &mut Stream::new(1));
        assert_eq!(empirical_w2(&a, &a).unwrap(), 0.0);
        assert_eq!(empirical_w1(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn unit_translation() {
        let a = uniform(vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
        let b = uniform(vec![vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert!((empirical_w2(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!((empirical_w1(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_brute_force_on_six_points() {
        let perms = permutations(6);
        assert_eq!(perms.len(), 720);
        let mut s = Stream::new(2);
        for _ in 0..10 {
            let a = random(6, &mut s);
            let b = random(6, &mut s);
            let best = perms
                .iter()
                .map(|p| (0..6).map(|i| sq_dist(&a.points[i], &b.points[p[i]])).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            let w2 = empirical_w2(&a, &b).unwrap();
            assert!((w2 - (best / 6.0).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unequal_sizes() {
        let mut s = Stream::new(3);
        assert!(matches!(
            empirical_w2(&random(3, &mut s), &random(4, &mut s)),
            Err(Error::Contract(_))
        ));
    }
}
