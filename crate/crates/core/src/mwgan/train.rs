use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::losses::{classifier_loss, critic_objective, gradient_penalty, mutual_information_term};
use super::{check_datasets, GeneratedBatch, InterpolationBatch, LossReport, TrainConfig};
use crate::autodiff::{Tape, Tensor};
use crate::mmot::DomainWeights;
use crate::nets::{AdamState, Checkpoint, MlpParams, Role};
use crate::toydata::rng::Stream;
use crate::toydata::{minibatch, EmpiricalDistribution};
use crate::{Error, Result};

/// Critic, classifier and one generator per target domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub critic: MlpParams,
    pub classifier: MlpParams,
    pub generators: Vec<MlpParams>,
}

impl TrainedModels {
    pub fn init(config: &TrainConfig, num_targets: usize) -> Self {
        let arch = config.architecture(num_targets);
        let root = Stream::new(config.seeds.init);
        TrainedModels {
            critic: MlpParams::init(Role::Critic, &arch, &root.split("critic")),
            classifier: MlpParams::init(Role::Classifier, &arch, &root.split("classifier")),
            generators: (0..num_targets)
                .map(|i| {
                    MlpParams::init(
                        Role::Generator,
                        &arch,
                        &root.split("generator").split_index(i as u64),
                    )
                })
                .collect(),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.push_net("critic", &self.critic);
        ck.push_net("classifier", &self.classifier);
        for (i, g) in self.generators.iter().enumerate() {
            ck.push_net(&format!("generator{}", i + 1), g);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint, num_targets: usize) -> Result<Self> {
        Ok(TrainedModels {
            critic: ck.net("critic", Role::Critic)?,
            classifier: ck.net("classifier", Role::Classifier)?,
            generators: (1..=num_targets)
                .map(|i| ck.net(&format!("generator{i}"), Role::Generator))
                .collect::<Result<_>>()?,
        })
    }

    /// `g_i(x)` for every generator.
    pub fn generate(&self, source: &Tensor) -> Result<GeneratedBatch> {
        Ok(GeneratedBatch {
            source: source.clone(),
            outputs: self
                .generators
                .iter()
                .map(|g| g.eval(source))
                .collect::<Result<_>>()?,
        })
    }
}

fn labelled<T>(what: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{what}: {m}")),
        other => other,
    })
}

/// Full training state for one run.
#[derive(Debug, Clone)]
pub struct MwganState {
    pub config: TrainConfig,
    pub lambda: DomainWeights,
    pub l_f: f64,
    pub datasets: Vec<EmpiricalDistribution>,
    pub models: TrainedModels,
    critic_opt: AdamState,
    classifier_opt: AdamState,
    generator_opts: Vec<AdamState>,
    pub critic_steps: u64,
    pub generator_steps: u64,
}

impl MwganState {
    /// `datasets` holds the source followed by the targets.
    pub fn new(config: &TrainConfig, datasets: Vec<EmpiricalDistribution>) -> Result<Self> {
        let config = config.resolve()?;
        let n = datasets.len().saturating_sub(1);
        let lambda_pos = config.lambda_pos.clone().expect("resolved");
        if lambda_pos.len() != n {
            return Err(Error::Config(format!(
                "lambda_pos has {} entries but the data has {n} targets",
                lambda_pos.len()
            )));
        }
        check_datasets(&datasets, n)?;
        let models = TrainedModels::init(&config, n);
        let adam = |net: &MlpParams| AdamState::new(config.adam, net);
        Ok(MwganState {
            lambda: DomainWeights { lambda0: 1.0, lambda_pos },
            l_f: config.l_f.expect("resolved"),
            critic_opt: adam(&models.critic),
            classifier_opt: adam(&models.classifier),
            generator_opts: models.generators.iter().map(adam).collect(),
            models,
            datasets,
            config,
            critic_steps: 0,
            generator_steps: 0,
        })
    }

    pub fn num_targets(&self) -> usize {
        self.datasets.len() - 1
    }

    /// A batch from domain `index`: the whole dataset when the batch size covers
    /// it, otherwise a with-replacement minibatch.
    pub fn batch(&self, index: usize, stream: &Stream) -> Result<Tensor> {
        let d = &self.datasets[index];
        if self.config.batch_size >= d.len() {
            Ok(d.to_tensor())
        } else {
            minibatch(d, self.config.batch_size, &mut stream.clone())
        }
    }

    fn stream(&self, phase: &str, step: u64) -> Stream {
        Stream::new(self.config.seeds.train).split(phase).split_index(step)
    }

    /// One critic update followed by one classifier update.
    pub fn critic_step(&mut self) -> Result<LossReport> {
        let s = self.stream("critic", self.critic_steps);
        let x = self.batch(0, &s.split("source"))?;
        let generated = self.models.generate(&x)?;
        let mut rs = s.split("rho");
        let rho = (0..x.rows()).map(|_| rs.uniform()).collect();
        let interp = InterpolationBatch::new(&x, &generated.outputs, rho)?;
        let cfg = &self.config;

        let critic = &self.models.critic;
        let tape = Tape::new();
        let fp = critic.register(&tape);
        let xs = tape.input(x.clone());
        let gs: Vec<_> = generated.outputs.iter().map(|g| tape.input(g.clone())).collect();
        let ts: Vec<_> = interp.points.iter().map(|t| tape.input(t.clone())).collect();
        let obj = labelled(
            "critic objective",
            critic_objective(critic, &fp, xs, &gs, &self.lambda.lambda_pos),
        )?;
        let pen = labelled("gradient penalty", gradient_penalty(critic, &fp, &ts, cfg.tau, self.l_f))?;
        let loss = labelled("critic loss", obj.scale(-1.0).and_then(|o| o.add(pen.value)))?;
        let grads = labelled("critic gradient", tape.grad(loss, &fp))?;
        let (obj_v, pen_v, gns) = (obj.item()?, pen.value.item()?, pen.grad_norm_sum.item()?);
        drop(tape);
        labelled("critic update", self.critic_opt.step(&mut self.models.critic, &grads))?;

        let real = (1..=self.num_targets())
            .map(|i| self.batch(i, &s.split("target").split_index(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        let phi = &self.models.classifier;
        let tape = Tape::new();
        let pp = phi.register(&tape);
        let rv: Vec<_> = real.into_iter().map(|r| tape.input(r)).collect();
        let gv: Vec<_> = generated.outputs.iter().map(|g| tape.input(g.clone())).collect();
        let closs = labelled("classifier loss", classifier_loss(phi, &pp, &rv, &gv, cfg.alpha))?;
        let cgrads = labelled("classifier gradient", tape.grad(closs, &pp))?;
        let closs_v = closs.item()?;
        drop(tape);
        labelled(
            "classifier update",
            self.classifier_opt.step(&mut self.models.classifier, &cgrads),
        )?;

        self.critic_steps += 1;
        Ok(LossReport {
            iteration: self.critic_steps,
            critic_objective: obj_v,
            penalty: pen_v,
            classifier_loss: closs_v,
            generator_losses: Vec::new(),
            mutual_information: Vec::new(),
            grad_norm_sum: gns,
        })
    }

    /// Loss, mutual-information term and parameter gradients for generator `i`
    /// (0-based) on a source batch, with the critic and classifier frozen.
    ///
    /// `targets` supplies real domain samples for the identity term.
    pub fn generator_gradients(
        &self,
        i: usize,
        source: &Tensor,
        targets: Option<&Tensor>,
    ) -> Result<(f64, f64, Vec<Tensor>)> {
        let g = &self.models.generators[i];
        let tape = Tape::new();
        let gp = g.register(&tape);
        let out = g.forward_with(&gp, tape.input(source.clone()))?;
        let f = self.models.critic.forward(&tape, out)?.mean()?;
        let mut loss = f.scale(-self.lambda.lambda_pos[i])?;
        let mi = if self.config.alpha != 0.0 {
            let pp = self.models.classifier.register(&tape);
            let mi = mutual_information_term(&self.models.classifier, &pp, out, i, self.config.alpha)?;
            loss = loss.sub(mi)?;
            mi.item()?
        } else {
            0.0
        };
        if self.config.identity_weight != 0.0 {
            let t = targets.ok_or_else(|| {
                Error::Contract("identity term needs real target samples".into())
            })?;
            let xt = tape.input(t.clone());
            let id = g.forward_with(&gp, xt)?.sub(xt)?.abs()?.sum_cols()?.mean()?;
            loss = loss.add(id.scale(self.config.identity_weight)?)?;
        }
        let grads = tape.grad(loss, &gp)?;
        Ok((loss.item()?, mi, grads))
    }

    /// One Adam step for every generator on a shared source batch.
    pub fn generator_step(&mut self) -> Result<(Vec<f64>, Vec<f64>)> {
        let s = self.stream("generator", self.generator_steps);
        let x = self.batch(0, &s.split("source"))?;
        let (mut losses, mut mis) = (Vec::new(), Vec::new());
        for i in 0..self.num_targets() {
            let targets = if self.config.identity_weight != 0.0 {
                Some(self.batch(i + 1, &s.split("target").split_index(i as u64 + 1))?)
            } else {
                None
            };
            let what = format!("generator {}", i + 1);
            let (loss, mi, grads) = labelled(&what, self.generator_gradients(i, &x, targets.as_ref()))?;
            labelled(
                &what,
                self.generator_opts[i].step(&mut self.models.generators[i], &grads),
            )?;
            losses.push(loss);
            mis.push(mi);
        }
        self.generator_steps += 1;
        Ok((losses, mis))
    }

    /// `n_critic` critic steps, then one generator step.
    pub fn iteration(&mut self) -> Result<LossReport> {
        let mut report = None;
        for _ in 0..self.config.n_critic {
            report = Some(self.critic_step()?);
        }
        let mut report = report.expect("n_critic >= 1");
        let (losses, mis) = self.generator_step()?;
        report.iteration = self.generator_steps;
        report.generator_losses = losses;
        report.mutual_information = mis;
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSeeds {
    pub data: u64,
    pub init: u64,
    pub train: u64,
    pub eval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
    pub seeds: ManifestSeeds,
    pub config: TrainConfig,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `ckpt_<step>.mwg1` and its manifest into `dir`.
pub fn write_checkpoint(dir: &Path, step: u64, config: &TrainConfig, models: &TrainedModels) -> Result<PathBuf> {
    let ck = models.to_checkpoint();
    let path = dir.join(format!("ckpt_{step}.mwg1"));
    ck.write(&path)?;
    let manifest = CheckpointManifest {
        step,
        tensors: ck
            .tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        seeds: ManifestSeeds {
            data: config.toy()?.seed,
            init: config.seeds.init,
            train: config.seeds.train,
            eval: config.seeds.eval,
        },
        config: config.clone(),
    };
    write_json(&dir.join(format!("ckpt_{step}.json")), &manifest)?;
    Ok(path)
}

/// Resolved config, models from the latest checkpoint, and its step.
pub fn load_checkpoint(run_dir: &Path) -> Result<(TrainConfig, TrainedModels, u64)> {
    let cfg_path = run_dir.join("config.json");
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config = TrainConfig::from_json(&text)?.resolve()?;
    let entries = fs::read_dir(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let mut latest: Option<u64> = None;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(run_dir, e))?;
        let name = entry.file_name();
        let step = name
            .to_str()
            .and_then(|n| n.strip_prefix("ckpt_")?.strip_suffix(".mwg1")?.parse::<u64>().ok());
        if let Some(s) = step {
            latest = Some(latest.map_or(s, |l| l.max(s)));
        }
    }
    let step = latest.ok_or_else(|| Error::Contract(format!("no checkpoint in {}", run_dir.display())))?;
    let ck = Checkpoint::read(&run_dir.join(format!("ckpt_{step}.mwg1")))?;
    let n = config.toy()?.num_targets();
    Ok((config, TrainedModels::from_checkpoint(&ck, n)?, step))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    pub last_report: Option<LossReport>,
    pub checkpoints: Vec<PathBuf>,
    pub models: TrainedModels,
}

/// Runs the full loop, writing `config.json`, `losses.csv` and checkpoints into `out_dir`.
pub fn train(config: &TrainConfig, datasets: Vec<EmpiricalDistribution>, out_dir: &Path) -> Result<TrainSummary> {
    let mut state = MwganState::new(config, datasets)?;
    let config = state.config.clone();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_json(&out_dir.join("config.json"), &config)?;
    let log_path = out_dir.join("losses.csv");
    let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let n = state.num_targets();
    let mut header = String::from("step,critic_obj,penalty,classifier");
    for i in 1..=n {
        header.push_str(&format!(",gen_{i}_loss"));
    }
    header.push_str(",grad_norm_sum\n");
    log.write_all(header.as_bytes()).map_err(|e| Error::io(&log_path, e))?;

    let total = config.total_generator_steps as u64;
    let mut checkpoints = Vec::new();
    let mut last = None;
    for step in 1..=total {
        let report = state.iteration().map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("aborting at generator step {step}: {m}")),
            other => other,
        })?;
        let mut line = format!(
            "{},{},{},{}",
            step, report.critic_objective, report.penalty, report.classifier_loss
        );
        for l in &report.generator_losses {
            line.push_str(&format!(",{l}"));
        }
        line.push_str(&format!(",{}\n", report.grad_norm_sum));
        log.write_all(line.as_bytes()).map_err(|e| Error::io(&log_path, e))?;
        let every = config.checkpoint_every as u64;
        if every > 0 && step % every == 0 && step != total {
            checkpoints.push(write_checkpoint(out_dir, step, &config, &state.models)?);
        }
        last = Some(report);
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    checkpoints.push(write_checkpoint(out_dir, total, &config, &state.models)?);
    Ok(TrainSummary {
        steps: total,
        last_report: last,
        checkpoints,
        models: state.models,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::relative_error;
    use crate::mwgan::{NetworkShape, Seeds};
    use crate::toydata::builtin_config;

    fn small_config(steps: usize) -> TrainConfig {
        TrainConfig {
            batch_size: 16,
            n_critic: 2,
            total_generator_steps: steps,
            network: NetworkShape {
                hidden_width: 8,
                ..NetworkShape::default()
            },
            seeds: Seeds { init: 5, train: 6, eval: 7 },
            ..TrainConfig::default()
        }
    }

    fn data() -> Vec<EmpiricalDistribution> {
        builtin_config("seven-gaussians").unwrap().generate().unwrap()
    }

    #[test]
    fn frozen_generator_gradient_is_scaled_critic_gradient() {
        let cfg = TrainConfig { alpha: 0.0, ..small_config(0) };
        let state = MwganState::new(&cfg, data()).unwrap();
        let x = state.batch(0, &Stream::new(9)).unwrap();
        for i in 0..state.num_targets() {
            let (_, _, got) = state.generator_gradients(i, &x, None).unwrap();
            let g = &state.models.generators[i];
            let tape = Tape::new();
            let gp = g.register(&tape);
            let out = g.forward_with(&gp, tape.input(x.clone())).unwrap();
            let f = state.models.critic.forward(&tape, out).unwrap().mean().unwrap();
            let want = tape.grad(f, &gp).unwrap();
            let l = state.lambda.lambda_pos[i];
            for (a, b) in got.iter().zip(&want) {
                let scaled: Vec<f64> = b.data().iter().map(|v| -l * v).collect();
                assert!(relative_error(a.data(), &scaled, 1e-300) <= 1e-10);
            }
        }
    }

    #[test]
    fn generator_step_isolates_generators() {
        let mut state = MwganState::new(&small_config(0), data()).unwrap();
        let before = state.models.generators.clone();
        let x = state.batch(0, &Stream::new(1)).unwrap();
        let (_, _, grads) = state.generator_gradients(2, &x, None).unwrap();
        state.generator_opts[2].step(&mut state.models.generators[2], &grads).unwrap();
        for (j, (a, b)) in before.iter().zip(&state.models.generators).enumerate() {
            assert_eq!(a == b, j != 2);
        }
    }

    #[test]
    fn identity_term_vanishes_for_identity_map() {
        let cfg = TrainConfig { identity_weight: 1.0, alpha: 0.0, ..small_config(0) };
        let mut state = MwganState::new(&cfg, data()).unwrap();
        let ident = MlpParams::from_layers(
            Role::Generator,
            vec![crate::nets::Layer {
                weight: Tensor::identity(2),
                bias: Tensor::zeros(&[2]),
            }],
        )
        .unwrap();
        state.models.generators[0] = ident;
        let x = state.batch(0, &Stream::new(1)).unwrap();
        let t = state.batch(1, &Stream::new(2)).unwrap();
        let (with_id, _, _) = state.generator_gradients(0, &x, Some(&t)).unwrap();
        state.config.identity_weight = 0.0;
        let (without, _, _) = state.generator_gradients(0, &x, None).unwrap();
        assert_eq!(with_id, without);
    }

    #[test]
    fn zero_learning_rate_freezes_critic() {
        let mut cfg = small_config(0);
        cfg.adam.lr = 0.0;
        let mut state = MwganState::new(&cfg, data()).unwrap();
        let before = state.models.clone();
        state.critic_step().unwrap();
        assert_eq!(state.models, before);
    }

    #[test]
    fn linear_critic_step_follows_analytic_gradient() {
        let mut cfg = small_config(0);
        cfg.tau = 0.0;
        cfg.adam.lr = 1e-3;
        let mut state = MwganState::new(&cfg, data()).unwrap();
        let u = [0.3, -0.2];
        state.models.critic = MlpParams::from_layers(
            Role::Critic,
            vec![crate::nets::Layer {
                weight: Tensor::matrix(2, 1, u.to_vec()).unwrap(),
                bias: Tensor::vector(vec![0.0]),
            }],
        )
        .unwrap();
        state.critic_opt = AdamState::new(cfg.adam, &state.models.critic);
        let s = state.stream("critic", 0);
        let x = state.batch(0, &s.split("source")).unwrap();
        let gen = state.models.generate(&x).unwrap();
        // d/du of −(mean x − Σ λ mean x̂) = −(x̄ − Σ λ x̂̄); Adam's first step moves by
        // lr · sign of the gradient.
        let mean = |t: &Tensor, c: usize| (0..t.rows()).map(|r| t.row(r)[c]).sum::<f64>() / t.rows() as f64;
        state.critic_step().unwrap();
        for c in 0..2 {
            let mut g = -mean(&x, c);
            for (o, l) in gen.outputs.iter().zip(&state.lambda.lambda_pos) {
                g += l * mean(o, c);
            }
            let moved = state.models.critic.layers[0].weight.data()[c] - u[c];
            assert!((moved + 1e-3 * g.signum()).abs() < 1e-8, "{moved} vs {g}");
        }
    }

    #[test]
    fn runs_are_deterministic_and_logged() {
        let cfg = TrainConfig { checkpoint_every: 2, ..small_config(3) };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = train(&cfg, data(), a.path()).unwrap();
        train(&cfg, data(), b.path()).unwrap();
        for name in ["ckpt_2.mwg1", "ckpt_3.mwg1", "ckpt_3.json", "losses.csv", "config.json"] {
            let x = fs::read(a.path().join(name)).unwrap();
            assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
        }
        let log = fs::read_to_string(a.path().join("losses.csv")).unwrap();
        let lines: Vec<_> = log.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("step,critic_obj,penalty,classifier,gen_1_loss"));
        assert!(lines[0].ends_with("gen_6_loss,grad_norm_sum"));
        let (_, models, step) = load_checkpoint(a.path()).unwrap();
        assert_eq!(step, 3);
        assert_eq!(models, sa.models);
    }

    #[test]
    fn zero_steps_checkpoint_is_initialization() {
        let cfg = small_config(0);
        let dir = tempfile::tempdir().unwrap();
        train(&cfg, data(), dir.path()).unwrap();
        let (resolved, models, step) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(step, 0);
        assert_eq!(models, TrainedModels::init(&resolved, 6));
    }

    #[test]
    fn wrong_dataset_count_rejected() {
        let mut d = data();
        d.pop();
        assert!(MwganState::new(&small_config(0), d).is_err());
    }
}
