//! The theory suite: duality, equivalence, constraint and gradient checks with
//! fixed seeds.

use std::time::Instant;

use crate::autodiff::{relative_error, Tape, Tensor};
use crate::mmot::{
    c_transform_check, estimate_sigma_hat, scale_into_feasible, solve_dual_free, solve_dual_shared,
    solve_primal, CostSpec, DomainWeights, MmotInstance, PotentialMode, PotentialTable,
};
use crate::mwgan::{gradient_penalty, MwganState, TrainConfig};
use crate::nets::{Architecture, MlpParams, Role};
use crate::toydata::rng::Stream;
use crate::toydata::{builtin_config, EmpiricalDistribution, SEVEN_GAUSSIANS};
use crate::Result;

pub const SUITE_SEED: u64 = 0x6d77_6761_6e00;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn stream(tag: &str) -> Stream {
    Stream::new(SUITE_SEED).split(tag)
}

fn random_point(s: &mut Stream) -> Vec<f64> {
    vec![s.uniform_in(-1.0, 1.0), s.uniform_in(-1.0, 1.0)]
}

fn random_weights(n: usize, s: &mut Stream) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| 0.1 + s.uniform()).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|v| v / t).collect()
}

/// Random discrete instance: 2 or 3 marginals of 2 or 3 points in `[−1, 1]²`
/// with random weights, random `λ⁺` summing to 1, cost family alternating with `k`.
pub fn random_instance(k: usize, s: &mut Stream) -> MmotInstance {
    let marginals = 2 + s.below(2) as usize;
    let dists = (0..marginals)
        .map(|_| {
            let n = 2 + s.below(2) as usize;
            let pts = (0..n).map(|_| random_point(s)).collect();
            EmpiricalDistribution::new(pts, random_weights(n, s)).expect("valid weights")
        })
        .collect();
    let cost = if k % 2 == 0 { CostSpec::PAIRWISE_L2 } else { CostSpec::STAR_L2 };
    MmotInstance::new(dists, cost).with_lambda(DomainWeights {
        lambda0: 1.0,
        lambda_pos: random_weights(marginals - 1, s),
    })
}

/// Instance whose marginals all contain one common point (a fully overlapped
/// tuple), plus distinct random points; pairwise-sum cost and `Σλ = 0`.
pub fn overlap_instance(s: &mut Stream) -> MmotInstance {
    let marginals = 2 + s.below(2) as usize;
    let z = random_point(s);
    let dists = (0..marginals)
        .map(|_| {
            let n = 2 + s.below(2) as usize;
            let mut pts = vec![z.clone()];
            pts.extend((1..n).map(|_| random_point(s)));
            EmpiricalDistribution::new(pts, random_weights(n, s)).expect("valid weights")
        })
        .collect();
    MmotInstance::new(dists, CostSpec::PAIRWISE_L2).with_lambda(DomainWeights {
        lambda0: 1.0,
        lambda_pos: random_weights(marginals - 1, s),
    })
}

pub fn duality_instances() -> Vec<MmotInstance> {
    let mut s = stream("duality");
    (0..50).map(|k| random_instance(k, &mut s)).collect()
}

pub fn overlap_instances() -> Vec<MmotInstance> {
    let mut s = stream("overlap");
    (0..20).map(|_| overlap_instance(&mut s)).collect()
}

pub fn strong_duality() -> Result<CheckResult> {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for inst in duality_instances() {
        let p = solve_primal(&inst)?;
        let d = solve_dual_free(&inst)?;
        worst = worst.max((p.optimal_cost - d.objective).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(CheckResult::new(
        "strong duality",
        worst <= 1e-6 && secs <= 60.0,
        format!("max |primal - dual| = {worst:.3e} over 50 instances (tol 1e-6), {secs:.2}s (limit 60s)"),
    ))
}

/// Makes domain 0 the c-transform of the other domains, which yields a feasible table.
fn c_transform_free(values: &mut [Vec<f64>], inst: &MmotInstance, costs: &[f64]) {
    let dims = inst.dims();
    let mut idx = vec![0; dims.len()];
    let mut best = vec![f64::INFINITY; dims[0]];
    for (t, c) in costs.iter().enumerate() {
        inst.tuple_indices(t, &mut idx);
        let others: f64 = (1..dims.len()).map(|i| values[i][idx[i]]).sum();
        best[idx[0]] = best[idx[0]].min(c - others);
    }
    values[0] = best;
}

pub fn weak_duality() -> Result<CheckResult> {
    let mut s = stream("weak");
    let mut violations = 0;
    let mut infeasible = 0;
    let mut closest = f64::NEG_INFINITY;
    for k in 0..200 {
        let inst = random_instance(k, &mut s);
        let costs = inst.cost_tensor()?;
        let mut values: Vec<Vec<f64>> = inst
            .dims()
            .iter()
            .map(|&n| (0..n).map(|_| s.uniform_in(-2.0, 2.0)).collect())
            .collect();
        let table = if k % 2 == 0 {
            c_transform_free(&mut values, &inst, &costs);
            PotentialTable::free(values)
        } else {
            scale_into_feasible(&PotentialTable::free(values), &inst)?
        };
        if table.max_violation(&inst)? > 1e-12 {
            infeasible += 1;
        }
        let primal = solve_primal(&inst)?.optimal_cost;
        let obj = table.objective(&inst);
        closest = closest.max(obj - primal);
        if obj > primal + 1e-9 {
            violations += 1;
        }
    }
    Ok(CheckResult::new(
        "weak duality",
        violations == 0 && infeasible == 0,
        format!(
            "{violations} of 200 feasible tables exceed the primal optimum (slack 1e-9), max dual - primal = {closest:.3e}"
        ),
    ))
}

pub fn restriction() -> Result<CheckResult> {
    let mut worst = f64::NEG_INFINITY;
    for inst in duality_instances() {
        let free = solve_dual_free(&inst)?.objective;
        let shared = solve_dual_shared(&inst)?.objective;
        worst = worst.max(shared - free);
    }
    Ok(CheckResult::new(
        "shared dual bounded by free dual",
        worst <= 1e-8,
        format!("max shared - free = {worst:.3e} over 50 instances (tol 1e-8)"),
    ))
}

pub fn equivalence() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for inst in overlap_instances() {
        debug_assert!(inst.lambda.as_ref().is_some_and(DomainWeights::sums_to_zero));
        let free = solve_dual_free(&inst)?.objective;
        let shared = solve_dual_shared(&inst)?.objective;
        worst = worst.max((free - shared).abs());
    }
    Ok(CheckResult::new(
        "free and shared duals agree under overlap",
        worst <= 1e-6,
        format!("max |free - shared| = {worst:.3e} over 20 overlap instances (tol 1e-6)"),
    ))
}

pub fn saturation() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for inst in overlap_instances() {
        let res = solve_dual_shared(&inst)?;
        worst = worst.max(c_transform_check(&res, &inst)?);
    }
    Ok(CheckResult::new(
        "c-transform saturation",
        worst <= 1e-6,
        format!("max saturation gap = {worst:.3e} over 20 overlap instances (tol 1e-6)"),
    ))
}

fn random_tensor(shape: &[usize], s: &mut Stream, lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| s.uniform_in(lo, hi)).collect()).expect("sized")
}

const PROBES: usize = 100;
const FD_STEP: f64 = 1e-5;

/// Analytic and central-difference values at `PROBES` random weight coordinates.
fn coordinate_probes(net: &MlpParams, grads: &[Tensor], value: &dyn Fn(&MlpParams) -> Result<f64>, s: &mut Stream) -> Result<(Vec<f64>, Vec<f64>)> {
    let sizes: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for _ in 0..PROBES {
        let mut flat = s.below(total) as usize;
        let mut k = 0;
        while flat >= sizes[k] {
            flat -= sizes[k];
            k += 1;
        }
        let mut plus = net.clone();
        plus.tensors_mut()[k].data_mut()[flat] += FD_STEP;
        let mut minus = net.clone();
        minus.tensors_mut()[k].data_mut()[flat] -= FD_STEP;
        numeric.push((value(&plus)? - value(&minus)?) / (2.0 * FD_STEP));
        analytic.push(grads[k].data()[flat]);
    }
    Ok((analytic, numeric))
}

pub fn autodiff_checks() -> Result<CheckResult> {
    let mut s = stream("autodiff");
    let arch = Architecture::toy(6);
    let mut worst_first: f64 = 0.0;
    for role in [Role::Generator, Role::Critic, Role::Classifier] {
        let net = MlpParams::init(role, &arch, &s.split("init").split_index(role as u64));
        let x = random_tensor(&[4, 2], &mut s, -2.0, 2.0);
        let w = random_tensor(&[4, net.output_dim()], &mut s, -1.0, 1.0);
        let value = |p: &MlpParams| -> Result<f64> {
            let y = p.eval(&x)?;
            Ok(y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum())
        };
        let tape = Tape::new();
        let params = net.register(&tape);
        let y = net.forward_with(&params, tape.input(x.clone()))?;
        let loss = y.mul(tape.input(w.clone()))?.sum()?;
        let grads = tape.grad(loss, &params)?;
        let (a, n) = coordinate_probes(&net, &grads, &value, &mut s)?;
        worst_first = worst_first.max(relative_error(&a, &n, 1e-12));
    }

    let critic = MlpParams::init(Role::Critic, &arch, &s.split("penalty-critic"));
    let xs: Vec<Tensor> = (0..6).map(|_| random_tensor(&[4, 2], &mut s, -2.0, 2.0)).collect();
    let penalty = |p: &MlpParams| -> Result<f64> {
        let tape = Tape::new();
        let params = p.register(&tape);
        let v: Vec<_> = xs.iter().map(|x| tape.input(x.clone())).collect();
        gradient_penalty(p, &params, &v, 10.0, 0.0)?.value.item()
    };
    let tape = Tape::new();
    let params = critic.register(&tape);
    let v: Vec<_> = xs.iter().map(|x| tape.input(x.clone())).collect();
    let pen = gradient_penalty(&critic, &params, &v, 10.0, 0.0)?;
    let active = pen.value.item()? > 0.0;
    let grads = tape.grad(pen.value, &params)?;
    let (a, n) = coordinate_probes(&critic, &grads, &penalty, &mut s)?;
    let second = relative_error(&a, &n, 1e-12);
    Ok(CheckResult::new(
        "autodiff gradients",
        worst_first <= 1e-5 && second <= 1e-4 && active,
        format!(
            "first-order rel err {worst_first:.3e} (tol 1e-5), penalty rel err {second:.3e} (tol 1e-4), {PROBES} probes each"
        ),
    ))
}

pub fn generator_direction() -> Result<CheckResult> {
    let cfg = TrainConfig {
        alpha: 0.0,
        ..TrainConfig::default()
    };
    let data = builtin_config(SEVEN_GAUSSIANS)?.generate()?;
    let state = MwganState::new(&cfg, data)?;
    let x = state.batch(0, &stream("direction"))?;
    let mut worst: f64 = 0.0;
    for i in 0..state.num_targets() {
        let (_, _, got) = state.generator_gradients(i, &x, None)?;
        let g = &state.models.generators[i];
        let tape = Tape::new();
        let gp = g.register(&tape);
        let out = g.forward_with(&gp, tape.input(x.clone()))?;
        let f = state.models.critic.forward(&tape, out)?.mean()?;
        let want = tape.grad(f, &gp)?;
        let l = state.lambda.lambda_pos[i];
        let got: Vec<f64> = got.iter().flat_map(|t| t.data().to_vec()).collect();
        let want: Vec<f64> = want.iter().flat_map(|t| t.data().iter().map(|v| -l * v).collect::<Vec<_>>()).collect();
        worst = worst.max(relative_error(&got, &want, 1e-300));
    }
    Ok(CheckResult::new(
        "generator update direction",
        worst <= 1e-10,
        format!("max rel err {worst:.3e} over 6 generators (tol 1e-10)"),
    ))
}

pub fn linear_critic_feasibility() -> Result<CheckResult> {
    let mut s = stream("linear-critic");
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let n = 1 + s.below(6) as usize;
        let theta = s.uniform_in(0.0, std::f64::consts::TAU);
        let (u, b) = ([theta.cos(), theta.sin()], s.uniform_in(-3.0, 3.0));
        let f = |p: &[f64]| u[0] * p[0] + u[1] * p[1] + b;
        let pts: Vec<Vec<f64>> = (0..=n)
            .map(|_| vec![s.uniform_in(-2.0, 2.0), s.uniform_in(-2.0, 2.0)])
            .collect();
        let lhs = f(&pts[0]) - pts[1..].iter().map(|p| f(p) / n as f64).sum::<f64>();
        let c = CostSpec::STAR_L2.tuple(&pts)?;
        worst = worst.max(lhs - c);
        if lhs > c + 1e-12 {
            violations += 1;
        }
    }
    Ok(CheckResult::new(
        "unit-slope linear critics are feasible",
        violations == 0,
        format!("{violations} violations in 10000 tuples, max excess {worst:.3e}"),
    ))
}

pub fn sigma_hat_consistency() -> Result<CheckResult> {
    let m = 10_000;
    let toy = builtin_config(SEVEN_GAUSSIANS)?.generate()?;
    let lambda = DomainWeights::uniform(6);
    let zero = estimate_sigma_hat(
        |_, d| Ok(vec![0.0; d.len()]),
        &toy,
        &lambda,
        &CostSpec::STAR_L2,
        m,
        &stream("sigma-zero"),
        0.0,
    )?;
    let mut worst: f64 = 0.0;
    for (k, inst) in duality_instances().into_iter().enumerate() {
        let res = solve_dual_shared(&inst)?;
        let PotentialMode::Shared { f, lambda } = &res.potentials.mode else {
            unreachable!("shared solve returns shared potentials")
        };
        let est = estimate_sigma_hat(
            |i, _| Ok(f[i].clone()),
            &inst.marginals,
            lambda,
            &inst.cost,
            m,
            &stream("sigma-lp").split_index(k as u64),
            1e-9,
        )?;
        worst = worst.max(est.violation_rate);
    }
    Ok(CheckResult::new(
        "sigma-hat consistency",
        zero.violation_rate == 0.0 && worst == 0.0,
        format!(
            "rate {} for f = 0, max rate {worst} over 50 LP solutions (M = {m})",
            zero.violation_rate
        ),
    ))
}

/// Every check, in order.
pub fn run_suite() -> Vec<CheckResult> {
    let checks: [(&'static str, fn() -> Result<CheckResult>); 9] = [
        ("strong duality", strong_duality),
        ("weak duality", weak_duality),
        ("shared dual bounded by free dual", restriction),
        ("free and shared duals agree under overlap", equivalence),
        ("c-transform saturation", saturation),
        ("autodiff gradients", autodiff_checks),
        ("generator update direction", generator_direction),
        ("unit-slope linear critics are feasible", linear_critic_feasibility),
        ("sigma-hat consistency", sigma_hat_consistency),
    ];
    checks
        .into_iter()
        .map(|(name, f)| f().unwrap_or_else(|e| CheckResult::new(name, false, format!("error: {e}"))))
        .collect()
}
