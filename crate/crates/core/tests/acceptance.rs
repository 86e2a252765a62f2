//! End-to-end acceptance run: the theory suite, the two reference trainings,
//! determinism and the generalization trend. One PASS/FAIL line per criterion.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mwgan::eval::{evaluate, generalization_probe, median, write_metrics, MetricReport, ProbeConfig, PROBE_RESAMPLES};
use mwgan::mwgan::{train, TrainConfig, TrainedModels};
use mwgan::verify::{self, CheckResult};

const TRAINING_BUDGET: Duration = Duration::from_secs(30 * 60);
const PROBE_REPETITIONS: u64 = 20;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"))
}

fn load(name: &str) -> TrainConfig {
    let path = config_path(name);
    let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    TrainConfig::from_json(&text).unwrap().resolve().unwrap()
}

/// Writes straight to the process stdout so the lines survive test output capture.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

struct Run {
    config: TrainConfig,
    models: TrainedModels,
    metrics: MetricReport,
    elapsed: Duration,
}

fn train_and_eval(config: &TrainConfig, dir: &Path) -> Run {
    let data = config.toy().unwrap().generate().unwrap();
    let start = Instant::now();
    let summary = train(config, data, dir).unwrap();
    let elapsed = start.elapsed();
    let metrics = evaluate(config, &summary.models).unwrap();
    write_metrics(&dir.join("metrics.json"), &metrics).unwrap();
    Run { config: config.clone(), models: summary.models, metrics, elapsed }
}

fn theory(results: &mut Vec<CheckResult>) {
    type Check = fn() -> mwgan::Result<CheckResult>;
    let checks: [(&'static str, Check); 9] = [
        ("strong-duality", verify::strong_duality),
        ("weak-duality", verify::weak_duality),
        ("restriction", verify::restriction),
        ("equivalence", verify::equivalence),
        ("saturation", verify::saturation),
        ("autodiff", verify::autodiff_checks),
        ("generator-direction", verify::generator_direction),
        ("linear-critic-feasibility", verify::linear_critic_feasibility),
        ("sigma-hat-consistency", verify::sigma_hat_consistency),
    ];
    for (name, check) in checks {
        let r = check().unwrap_or_else(|e| CheckResult { name, passed: false, detail: e.to_string() });
        report(&r.line());
        results.push(r);
    }
}

fn toy_reproduction(seven: &Run, mixed: &Run) -> CheckResult {
    let l_f = |r: &Run| r.config.l_f.unwrap();
    let total = seven.elapsed + mixed.elapsed;
    let ok_seven = seven.metrics.mean_w2() <= 0.15 && seven.metrics.max_w2() <= 0.25;
    let ok_mixed = mixed.metrics.mean_w2() <= 0.20;
    let ok_time = total <= TRAINING_BUDGET;
    let ok_lip = [seven, mixed].iter().all(|r| r.metrics.grad_norm_sum <= 1.25 * l_f(r));
    CheckResult {
        name: "toy-reproduction",
        passed: ok_seven && ok_mixed && ok_time && ok_lip,
        detail: format!(
            "seven-gaussians mean W2 {:.4} max {:.4} ({} steps); gaussian-plus-six-uniforms mean W2 {:.4} ({} steps); \
             training {:.0}s + {:.0}s; grad-norm sums {:.3}, {:.3} vs bound {:.2}",
            seven.metrics.mean_w2(),
            seven.metrics.max_w2(),
            seven.config.total_generator_steps,
            mixed.metrics.mean_w2(),
            mixed.config.total_generator_steps,
            seven.elapsed.as_secs_f64(),
            mixed.elapsed.as_secs_f64(),
            seven.metrics.grad_norm_sum,
            mixed.metrics.grad_norm_sum,
            1.25 * l_f(seven),
        ),
    }
}

fn run_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_string_lossy();
            name.starts_with("ckpt_") || name == "metrics.json"
        })
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism(base: &TrainConfig, root: &Path) -> CheckResult {
    let config = TrainConfig { total_generator_steps: 20, checkpoint_every: 10, ..base.clone() };
    let (a, b) = (root.join("det-a"), root.join("det-b"));
    train_and_eval(&config, &a);
    train_and_eval(&config, &b);
    let (fa, fb) = (run_files(&a), run_files(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    let passed = fa.len() == 5 && fa == fb;
    CheckResult {
        name: "determinism",
        passed,
        detail: format!("{} files compared ({}), identical: {}", fa.len(), names.join(" "), fa == fb),
    }
}

fn generalization(run: &Run) -> CheckResult {
    let toy = run.config.toy().unwrap();
    let lambda = run.config.lambda().unwrap();
    let gaps = |n: usize| -> Vec<f64> {
        let probe = ProbeConfig { n, resamples: PROBE_RESAMPLES, seed: run.config.seeds.eval };
        (0..PROBE_REPETITIONS)
            .map(|rep| generalization_probe(&run.models, &toy, &lambda, &probe, rep).unwrap().gap)
            .collect()
    };
    let (small, large) = (median(&gaps(64)), median(&gaps(1024)));
    CheckResult {
        name: "generalization-trend",
        passed: large <= small,
        detail: format!("median gap n=1024 {large:.5} vs n=64 {small:.5}"),
    }
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    theory(&mut results);

    let dir = tempfile::tempdir().unwrap();
    let seven = train_and_eval(&load("seven-gaussians"), &dir.path().join("seven-gaussians"));
    let mixed = train_and_eval(&load("gaussian-plus-six-uniforms"), &dir.path().join("gaussian-plus-six-uniforms"));
    for r in [toy_reproduction(&seven, &mixed), determinism(&seven.config, dir.path()), generalization(&seven)] {
        report(&r.line());
        results.push(r);
    }

    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    report(&format!("{}/{} criteria passed", results.len() - failed.len(), results.len()));
    assert!(failed.is_empty(), "failed: {failed:?}");
}
