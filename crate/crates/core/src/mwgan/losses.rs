use crate::autodiff::{Tensor, Var};
use crate::nets::MlpParams;
use crate::{Error, Result};

const LOG_FLOOR: f64 = 1e-12;

/// `mean f(x) − Σ_i λ_i⁺ mean f(x̂⁽ⁱ⁾)`.
pub fn critic_objective<'t>(
    critic: &MlpParams,
    params: &[Var<'t>],
    source: Var<'t>,
    generated: &[Var<'t>],
    lambda_pos: &[f64],
) -> Result<Var<'t>> {
    if generated.len() != lambda_pos.len() {
        return Err(Error::Contract(format!(
            "{} generated batches for {} weights",
            generated.len(),
            lambda_pos.len()
        )));
    }
    let mut acc = critic.forward_with(params, source)?.mean()?;
    for (g, &l) in generated.iter().zip(lambda_pos) {
        let m = critic.forward_with(params, *g)?.mean()?;
        acc = acc.sub(m.scale(l)?)?;
    }
    Ok(acc)
}

/// Penalty value and the gradient-norm sum it is built from, both on the tape.
pub struct Penalty<'t> {
    pub value: Var<'t>,
    pub grad_norm_sum: Var<'t>,
}

/// `τ (Σ_i mean ‖∇_x f(x̃⁽ⁱ⁾)‖₂ − L_f)₊²`, differentiable in the critic weights.
pub fn gradient_penalty<'t>(
    critic: &MlpParams,
    params: &[Var<'t>],
    interpolates: &[Var<'t>],
    tau: f64,
    l_f: f64,
) -> Result<Penalty<'t>> {
    let Some(first) = interpolates.first() else {
        return Err(Error::Contract("gradient penalty needs at least one domain".into()));
    };
    let tape = first.tape();
    let mut sum = tape.scalar(0.0);
    for &x in interpolates {
        let out = critic.forward_with(params, x)?.sum()?;
        let g = tape.grad_graph(out, &[x])?[0];
        sum = sum.add(g.l2_norm_rows()?.mean()?)?;
    }
    let value = sum.add_scalar(-l_f)?.relu()?.square()?.scale(tau)?;
    Ok(Penalty {
        value,
        grad_norm_sum: sum,
    })
}

fn head<'t>(probs: Var<'t>, index: usize) -> Result<Var<'t>> {
    let n = probs.shape()[1];
    if index >= n {
        return Err(Error::Contract(format!("domain {index} has no head among {n}")));
    }
    let mut e = vec![0.0; n];
    e[index] = 1.0;
    probs.matmul(probs.tape().input(Tensor::matrix(n, 1, e)?))
}

fn safe_log(p: Var<'_>) -> Result<Var<'_>> {
    p.clamp_min(LOG_FLOOR)?.log()
}

/// `α` times the mean binary cross-entropy of head `i` over real domain-`i` rows
/// (label 1) and generated domain-`i` rows (label 0), pooled over domains.
pub fn classifier_loss<'t>(
    classifier: &MlpParams,
    params: &[Var<'t>],
    real: &[Var<'t>],
    generated: &[Var<'t>],
    alpha: f64,
) -> Result<Var<'t>> {
    if real.len() != generated.len() || real.is_empty() {
        return Err(Error::Contract(format!(
            "classifier needs matching per-domain batches, got {} real and {} generated",
            real.len(),
            generated.len()
        )));
    }
    let tape = real[0].tape();
    let mut total = tape.scalar(0.0);
    let mut rows = 0usize;
    for (i, (&r, &g)) in real.iter().zip(generated).enumerate() {
        let p = head(classifier.forward_with(params, r)?, i)?;
        let q = head(classifier.forward_with(params, g)?, i)?;
        total = total.add(safe_log(p)?.sum()?)?;
        total = total.add(safe_log(q.scale(-1.0)?.add_scalar(1.0)?)?.sum()?)?;
        rows += p.shape()[0] + q.shape()[0];
    }
    total.scale(-alpha / rows as f64)
}

/// `α · mean log φ(y⁽ⁱ⁾ = 1 | g_i(x))`.
pub fn mutual_information_term<'t>(
    classifier: &MlpParams,
    params: &[Var<'t>],
    generated: Var<'t>,
    domain: usize,
    alpha: f64,
) -> Result<Var<'t>> {
    let p = head(classifier.forward_with(params, generated)?, domain)?;
    safe_log(p)?.mean()?.scale(alpha)
}
