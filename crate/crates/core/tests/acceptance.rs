//! Acceptance suite. Every test writes one `criterion N ... PASS|FAIL` line to
//! stderr (bypassing output capture) before asserting.

mod common;

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use autoaug::config::{parse_config_str, RunConfig};
use autoaug::cost::{paper_preset, render_table, speedup};
use autoaug::data::{load_cifar10, parse_records, serialize_records, split_validation, RecordShape, CIFAR_TRAIN_FILES};
use autoaug::engine::{cost_iterations, Search};
use autoaug::fixture::load_fixture;
use autoaug::kernels::{apply_element, apply_kind, element_catalog, AugOperation, ElementKind, Sign, NUM_OPERATIONS};
use autoaug::learner::{Architecture, Batch, InputShape, Network};
use autoaug::policy::{log_prob_gradient, probabilities, PolicyParams, SampleCounts, Sampler};
use autoaug::policy_optim::{adam_ascent_step, reinforce_gradient, AdamState};
use common::reference::{backprop_error, log_likelihood_slope, scalar_adam};
use rand::Rng;

const DISTRIBUTION_SUM_TOL: f64 = 1e-12;
const UNIFORM_TOL: f64 = 1e-15;
const SCORE_FD_TOL: f64 = 1e-6;
const BACKPROP_FD_TOL: f64 = 1e-4;
const ADAM_TRACE_TOL: f64 = 1e-12;
const SCORE_MEAN_SE: f64 = 3.0;
const DOMINANT_MASS: f64 = 0.9;
const BANDIT_STEPS: usize = 500;
const BANDIT_SEEDS: u64 = 10;
const BANDIT_REQUIRED: usize = 9;
const LEARNING_SEEDS: u64 = 5;
const LEARNING_MARGIN: f64 = 0.02;

/// Search settings shared by the bandit and learning-signal criteria: four
/// trajectories, the optimizer settings of the outer loop, and a short inner
/// period on the synthetic task.
const BANDIT_CONFIG: &str = "trajectories = 4
outer_steps = 500
inner_steps = 2
batch_size = 128
policy_lr = 0.05
adam_beta1 = 0.5
adam_beta2 = 0.999
signed_geometry = false
";

fn report(n: u32, name: &str, pass: bool, detail: &str, started: Instant, budget_s: f64) {
    let secs = started.elapsed().as_secs_f64();
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n:>2} {name}: {verdict} ({detail}; {secs:.1}s of {budget_s}s budget)\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

#[test]
fn criterion_01_cost_arithmetic() {
    let started = Instant::now();
    let expected = [7.03e6, 1.76e7, 1.17e5, 7.5e5];
    let rows = paper_preset();
    let values: Vec<f64> = rows.iter().map(|r| r.iterations).collect();
    let direct = [
        cost_iterations(15_000, 4_000, 120, 1024).unwrap(),
        cost_iterations(15_000, 6_000, 200, 1024).unwrap(),
        cost_iterations(8, 50_000, 300, 1024).unwrap(),
        cost_iterations(4, 1_280_000, 150, 1024).unwrap(),
    ];
    let (cifar_ratio, cifar) = speedup(values[0], values[2]);
    let (imagenet_ratio, imagenet) = speedup(values[1], values[3]);
    let table = render_table(&rows);
    let pass = values == expected
        && direct == expected
        && (cifar, imagenet) == (60, 24)
        && imagenet_ratio == 23.5
        && table.contains("24x")
        && table.contains("60x")
        && table.contains("note: exact half, rounded up");
    let detail = format!("rows {values:?}, ratios {cifar_ratio}->{cifar}x and {imagenet_ratio}->{imagenet}x");
    report(1, "cost arithmetic", pass, &detail, started, 0.1);
    assert!(pass, "{detail}\n{table}");
}

#[test]
fn criterion_02_distribution_correctness() {
    let started = Instant::now();
    let mut rng = common::rng(2);
    let mut worst_sum: f64 = 0.0;
    for _ in 0..1000 {
        let theta = (0..NUM_OPERATIONS).map(|_| rng.random_range(-10.0..10.0)).collect();
        let p = probabilities(&PolicyParams::new(theta).unwrap());
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    let uniform = probabilities(&PolicyParams::uniform_operations());
    let worst_uniform = uniform
        .iter()
        .map(|q| (q - 1.0 / 1296.0).abs())
        .fold(0.0f64, f64::max);
    let pass = worst_sum <= DISTRIBUTION_SUM_TOL && worst_uniform <= UNIFORM_TOL;
    let detail = format!("max |sum - 1| {worst_sum:e}, max |p - 1/1296| {worst_uniform:e}");
    report(2, "distribution correctness", pass, &detail, started, 1.0);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_03_gradient_oracles() {
    let started = Instant::now();
    let mut rng = common::rng(3);
    let mut score_err: f64 = 0.0;
    for case in 0..100 {
        let k = [2, 5, 1296][case % 3];
        let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut counts: Vec<u64> = (0..k).map(|_| rng.random_range(0..6)).collect();
        counts[rng.random_range(0..k)] += 1;
        let g = log_prob_gradient(
            &PolicyParams::new(theta.clone()).unwrap(),
            &SampleCounts::from_counts(counts.clone()),
        )
        .unwrap();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
        let probe: Vec<usize> = if k > 50 {
            (0..40).map(|_| rng.random_range(0..k)).collect()
        } else {
            (0..k).collect()
        };
        for j in probe {
            score_err = score_err.max((log_likelihood_slope(&theta, &counts, j) - g[j]).abs() / scale);
        }
    }

    let mut backprop_err: f64 = 0.0;
    let toys = [
        (Architecture::Mlp { hidden: 5 }, InputShape { height: 3, width: 3, channels: 1 }, 3),
        (Architecture::SmallCnn, InputShape { height: 4, width: 4, channels: 2 }, 2),
    ];
    for (i, (arch, input, classes)) in toys.into_iter().enumerate() {
        let net = Network::new(arch, input, classes).unwrap();
        let w = net.init_weights(&mut common::rng(30 + i as u64));
        let inputs = (0..4 * input.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = Batch::new(inputs, (0..4).map(|n| n % classes).collect(), input.len()).unwrap();
        backprop_err = backprop_err.max(backprop_error(&net, &w, &batch));
    }

    let theta0 = [0.0, -0.7, 2.5];
    let grads = [[0.3, -2.0, 1e-4], [-0.2, 0.5, 0.0], [0.9, -0.1, -3e-3]];
    let mut p = PolicyParams::new(theta0.to_vec()).unwrap();
    let mut s = AdamState::with_defaults(3);
    for g in &grads {
        adam_ascent_step(&mut p, g, &mut s).unwrap();
    }
    let adam_err = (0..3)
        .map(|j| (p.theta()[j] - scalar_adam(theta0[j], &grads.map(|g| g[j]))).abs())
        .fold(0.0f64, f64::max);

    let pass = score_err <= SCORE_FD_TOL && backprop_err <= BACKPROP_FD_TOL && adam_err <= ADAM_TRACE_TOL;
    let detail = format!("score fd {score_err:.2e}, backprop fd {backprop_err:.2e}, adam trace {adam_err:.2e}");
    report(3, "gradient oracles", pass, &detail, started, 30.0);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_04_estimator_properties() {
    let started = Instant::now();
    let mut rng = common::rng(4);
    let p = PolicyParams::new(vec![1.0, -0.5, 0.25, -2.0, 0.0]).unwrap();
    let sampler = Sampler::new(&p);
    let n = 100_000;
    let (mut sum, mut sum_sq) = ([0.0; 5], [0.0; 5]);
    for _ in 0..n {
        let mut c = SampleCounts::new(5);
        c.record(sampler.sample(&mut rng));
        for (j, g) in log_prob_gradient(&p, &c).unwrap().into_iter().enumerate() {
            sum[j] += g;
            sum_sq[j] += g * g;
        }
    }
    let z_worst = (0..5)
        .map(|j| {
            let mean = sum[j] / n as f64;
            let se = ((sum_sq[j] / n as f64 - mean * mean) / n as f64).sqrt();
            mean.abs() / se
        })
        .fold(0.0f64, f64::max);

    let mut invariant = true;
    for trial in 0..200 {
        let trajs = 2 + trial % 7;
        let k = 1 + trial % 40;
        let q = PolicyParams::new((0..k).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let counts: Vec<SampleCounts> = (0..trajs)
            .map(|_| {
                let mut c: Vec<u64> = (0..k).map(|_| rng.random_range(0..4)).collect();
                c[0] += 1;
                SampleCounts::from_counts(c)
            })
            .collect();
        // Accuracies over a 1024-image validation set and a dyadic shift.
        let accs: Vec<f64> = (0..trajs).map(|_| rng.random_range(0..=1024) as f64 / 1024.0).collect();
        let shift = rng.random_range(-1024..1024) as f64 / 1024.0;
        let shifted: Vec<f64> = accs.iter().map(|a| a + shift).collect();
        invariant &= reinforce_gradient(&q, &counts, &accs).unwrap()
            == reinforce_gradient(&q, &counts, &shifted).unwrap();
    }

    let single = reinforce_gradient(&p, &[SampleCounts::from_counts(vec![3, 1, 0, 2, 5])], &[0.71]).unwrap();
    let single_zero = single.iter().all(|&g| g == 0.0);

    let pass = z_worst <= SCORE_MEAN_SE && invariant && single_zero;
    let detail = format!("score mean |z| max {z_worst:.2}, shift invariance exact {invariant}, N=1 zero {single_zero}");
    report(4, "estimator properties", pass, &detail, started, 30.0);
    assert!(pass, "{detail}");
}

fn smoke_config(extra: &str) -> RunConfig {
    parse_config_str(&format!(
        "seed = 6\ntrajectories = 4\nouter_steps = 20\ninner_steps = 3\nbatch_size = 64\n{extra}"
    ))
    .unwrap()
}

#[test]
fn criterion_06_algorithm_invariants() {
    let started = Instant::now();
    let mut s = Search::new(smoke_config("")).unwrap();
    let per_period = (s.inner_steps() * 64) as u64;
    let (mut bitwise, mut counts_ok, mut digests_ok) = (true, true, true);
    while !s.is_done() {
        let rec = s.step().unwrap().clone();
        let src_weights = &s.state().best_weights;
        bitwise &= s.trajectories().iter().all(|t| t.weights.values() == src_weights.values());
        let period = s.last_period();
        counts_ok &= period.counts.iter().all(|c| c.total() == per_period);
        digests_ok &= period.schedule_digests.iter().all(|d| d == &period.schedule_digests[0]);
        let max = rec.accs.iter().cloned().fold(f64::MIN, f64::max);
        bitwise &= rec.accs.iter().position(|&a| a == max) == Some(rec.broadcast_source);
    }
    let pass = bitwise && counts_ok && digests_ok && s.state().history.len() == 20;
    let detail = format!("broadcast bitwise {bitwise}, counts = I*B {counts_ok}, shared schedule {digests_ok}");
    report(6, "algorithm invariants", pass, &detail, started, 60.0);
    assert!(pass, "{detail}");
}

fn log_lines(cfg: RunConfig) -> Vec<String> {
    let mut s = Search::new(cfg).unwrap();
    while !s.is_done() {
        s.step().unwrap();
    }
    s.state().history.iter().map(|r| r.to_json_line()).collect()
}

#[test]
fn criterion_07_determinism_and_parallelism() {
    let started = Instant::now();
    let a = log_lines(smoke_config(""));
    let repeat = log_lines(smoke_config("")) == a;
    let serial = log_lines(smoke_config("workers = 1\n")) == a;
    let parallel = log_lines(smoke_config("workers = 4\n")) == a;
    let pass = repeat && serial && parallel;
    let detail = format!("same seed identical {repeat}, 1 worker identical {serial}, 4 workers identical {parallel}");
    report(7, "determinism and parallelism", pass, &detail, started, 120.0);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_08_kernel_fixtures() {
    let started = Instant::now();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kernels");
    let mut element_ok = [true; 36];
    for name in ["rgb", "gray"] {
        let img = load_fixture(&dir.join(format!("input_{name}.img"))).unwrap();
        for (i, e) in element_catalog().iter().enumerate() {
            let signs: &[(Sign, &str)] = if e.kind.is_geometric() {
                &[(Sign::Plus, "p"), (Sign::Minus, "m")]
            } else {
                &[(Sign::Plus, "p")]
            };
            for &(sign, tag) in signs {
                let golden = load_fixture(&dir.join(format!("e{i:02}_{name}_{tag}.img"))).unwrap();
                element_ok[i] &= apply_element(&img, e, sign) == golden;
            }
        }
    }
    let passing = element_ok.iter().filter(|&&ok| ok).count();
    let mut rng = common::rng(8);
    let mut properties = true;
    for _ in 0..100 {
        let img = common::random_image(&mut rng, 10, 10, 3);
        let inv = apply_kind(&img, ElementKind::Invert, 0.0, Sign::Plus);
        properties &= apply_kind(&inv, ElementKind::Invert, 0.0, Sign::Plus) == img;
        for bits in ElementKind::Posterize.magnitudes() {
            let once = apply_kind(&img, ElementKind::Posterize, *bits, Sign::Plus);
            properties &= apply_kind(&once, ElementKind::Posterize, *bits, Sign::Plus) == once;
        }
        let once = apply_kind(&img, ElementKind::AutoContrast, 0.0, Sign::Plus);
        properties &= apply_kind(&once, ElementKind::AutoContrast, 0.0, Sign::Plus) == once;
    }
    let pass = passing == 36 && properties;
    let detail = format!("{passing} of 36 elements match golden buffers, involution/idempotence {properties}");
    report(8, "kernel fixtures", pass, &detail, started, 30.0);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_09_cifar_ingestion() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    common::write_cifar_dir(tmp.path(), 900);
    let mut round_trip = true;
    for name in CIFAR_TRAIN_FILES {
        let path = tmp.path().join(name);
        let bytes = std::fs::read(&path).unwrap();
        let (images, labels) = parse_records(&bytes, RecordShape::CIFAR10, Path::new(name)).unwrap();
        round_trip &= images.len() == 10_000 && serialize_records(&images, &labels).unwrap() == bytes;
    }
    let (train, test) = load_cifar10(tmp.path()).unwrap();
    let (tr, val) = split_validation(&train, 5000, 17).unwrap();
    let (tr2, val2) = split_validation(&train, 5000, 17).unwrap();
    // Records are random, so whole-record identity stands in for the index.
    let key = |img: &autoaug::ImageBuffer| img.pixels().to_vec();
    let a: HashSet<Vec<u8>> = tr.images.iter().map(key).collect();
    let b: HashSet<Vec<u8>> = val.images.iter().map(key).collect();
    let all: HashSet<Vec<u8>> = train.images.iter().map(key).collect();
    let sizes = (tr.len(), val.len()) == (45_000, 5000) && test.len() == 10_000;
    let disjoint = a.is_disjoint(&b);
    let exhaustive = a.union(&b).count() == all.len() && all.len() == 50_000;
    let deterministic = tr.images == tr2.images && val.images == val2.images;
    let pass = round_trip && sizes && disjoint && exhaustive && deterministic;
    let detail = format!(
        "byte round trip {round_trip}, 45000/5000 {sizes}, disjoint {disjoint}, exhaustive {exhaustive}, seeded {deterministic}"
    );
    report(9, "CIFAR-10 ingestion", pass, &detail, started, 30.0);
    assert!(pass, "{detail}");
}

/// Final state of one bandit run.
struct BanditRun {
    /// First outer step at which the dominant family's mass exceeded the
    /// threshold.
    hit: Option<usize>,
    peak_mass: f64,
    final_mass: f64,
    final_acc: f64,
    entropies: Vec<f64>,
}

fn dominant_family(cfg: &RunConfig) -> Vec<bool> {
    let destructive = ElementKind::from_name(&cfg.destructive_kind).unwrap();
    (0..NUM_OPERATIONS)
        .map(|k| !AugOperation::from_index(k, cfg.signed_geometry).unwrap().contains_kind(destructive))
        .collect()
}

fn bandit_run(seed: u64, policy_lr: f64) -> BanditRun {
    let mut cfg = parse_config_str(&format!("{BANDIT_CONFIG}seed = {seed}\n")).unwrap();
    cfg.policy_lr = policy_lr;
    cfg.validate().unwrap();
    let family = dominant_family(&cfg);
    let mut s = Search::new(cfg).unwrap();
    let mut run = BanditRun { hit: None, peak_mass: 0.0, final_mass: 0.0, final_acc: 0.0, entropies: Vec::new() };
    while !s.is_done() {
        let rec = s.step().unwrap().clone();
        let p = probabilities(&s.state().theta);
        let mass: f64 = p.iter().zip(&family).filter(|(_, &f)| f).map(|(q, _)| q).sum();
        if mass > DOMINANT_MASS && run.hit.is_none() {
            run.hit = Some(rec.t);
        }
        run.peak_mass = run.peak_mass.max(mass);
        run.final_mass = mass;
        run.final_acc = rec.accs[rec.broadcast_source];
        run.entropies.push(rec.policy_entropy);
    }
    run
}

fn searched_runs() -> &'static Vec<BanditRun> {
    static RUNS: OnceLock<Vec<BanditRun>> = OnceLock::new();
    RUNS.get_or_init(|| (0..BANDIT_SEEDS).map(|seed| bandit_run(seed, 0.05)).collect())
}

fn control_runs() -> &'static Vec<BanditRun> {
    static RUNS: OnceLock<Vec<BanditRun>> = OnceLock::new();
    RUNS.get_or_init(|| (0..LEARNING_SEEDS).map(|seed| bandit_run(seed, 0.0)).collect())
}

#[test]
fn criterion_05_bandit_convergence() {
    let started = Instant::now();
    let runs = searched_runs();
    let hits = runs.iter().filter(|r| r.hit.is_some_and(|t| t <= BANDIT_STEPS)).count();
    let control = &control_runs()[0];
    let flat = control.entropies.iter().all(|&e| e == control.entropies[0]);
    let pass = hits >= BANDIT_REQUIRED && flat;
    let masses: Vec<String> = runs
        .iter()
        .map(|r| format!("{:.3}/{:.3}", r.final_mass, r.peak_mass))
        .collect();
    let detail = format!(
        "{hits}/{BANDIT_SEEDS} seeds above {DOMINANT_MASS} (need {BANDIT_REQUIRED}); final/peak dominant-family mass [{}]; zero-lr entropy constant {flat}",
        masses.join(" ")
    );
    report(5, "bandit convergence", pass, &detail, started, 600.0);
    assert!(pass, "{detail}");
}

#[test]
fn criterion_10_end_to_end_learning_signal() {
    let started = Instant::now();
    let searched: Vec<f64> = searched_runs()[..LEARNING_SEEDS as usize].iter().map(|r| r.final_acc).collect();
    let control: Vec<f64> = control_runs().iter().map(|r| r.final_acc).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let gap = mean(&searched) - mean(&control);
    let pass = gap >= LEARNING_MARGIN;
    let detail = format!(
        "searched mean {:.4}, uniform control mean {:.4}, gap {:+.4} (need {LEARNING_MARGIN:+})",
        mean(&searched),
        mean(&control),
        gap
    );
    report(10, "end-to-end learning signal", pass, &detail, started, 900.0);
    assert!(pass, "{detail}");
}
