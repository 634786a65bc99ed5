//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero when any check fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use wcnn::autodiff::{Activation, Graph, Tensor, Var};
use wcnn::expressibility::BankMode;
use wcnn::nn::{variable_count_report, Architecture, ModelSpec};
use wcnn::qsim::{
    amplitude_encode, amplitude_output_grad, angle_encode_run, data_shift_grad, expectation, extract_w,
    parameter_shift_grad, AngleSource, CircuitSpec, Gate, GateKind, PauliString,
};
use wcnn::rng;
use wcnn::trig_weights::{first_moment_reference, moment_integral, CombinationSpec, TrigWeightGenerator};
use wcnn_cli::{run, Command, ExperimentConfig, ExperimentRecord, ModelConfig};

type StreamRng = wcnn::rng::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wcnn-acceptance-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn base_config(name: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.dataset.dir = mnist_dir();
    c.out = scratch(name);
    c
}

fn field(row: &serde_json::Value, key: &str) -> f64 {
    row[key].as_f64().unwrap_or(f64::NAN)
}

// ---------------------------------------------------------------- gradients

const FD_STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely; structurally zero
/// gradients otherwise meet finite-difference roundoff near 1e-11.
const GRAD_FLOOR: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

fn random_tensor(r: &mut StreamRng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Worst relative error between backprop and central differences over
/// every input entry of a scalar graph function.
fn check_graph<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let eval = |ts: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.leaf(t.clone(), false)).collect();
        let out = f(&mut g, &vars);
        g.value(out).item().unwrap()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = f(&mut g, &vars);
    g.backward(out).unwrap();
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = g.grad(*v).unwrap().to_vec();
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= FD_STEP;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[j], fd));
        }
    }
    worst
}

fn random_circuit(r: &mut StreamRng, n_qubits: usize, n_gates: usize, data_slots: usize) -> CircuitSpec {
    let mut gates = Vec::new();
    let mut n_params = 0;
    for s in 0..data_slots {
        gates.push(Gate::rotation(GateKind::Ry, s % n_qubits, AngleSource::Data(s)));
    }
    for _ in 0..n_gates {
        let t = r.gen_range(0..n_qubits);
        match r.gen_range(0..5) {
            0 => gates.push(Gate::h(t)),
            1 if n_qubits > 1 => {
                let c = (t + r.gen_range(1..n_qubits)) % n_qubits;
                gates.push(Gate::cnot(c, t));
            }
            k => {
                let kind = [GateKind::Rx, GateKind::Ry, GateKind::Rz][k % 3];
                gates.push(Gate::rotation(kind, t, AngleSource::Param(n_params)));
                n_params += 1;
            }
        }
    }
    CircuitSpec::new(n_qubits, gates).unwrap()
}

fn gradient_correctness() -> Outcome {
    let mut r = rng::stream(101, &[]);
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (m, k, n) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5));
        let a = random_tensor(&mut r, vec![m, k]);
        let b = random_tensor(&mut r, vec![k, n]);
        let bias = random_tensor(&mut r, vec![n]);
        let labels: Vec<usize> = (0..m).map(|_| r.gen_range(0..n)).collect();
        worst = worst.max(check_graph(&[a, b, bias], |g, v| {
            let h = g.matmul(v[0], v[1]).unwrap();
            let h = g.add_bias(h, v[2]).unwrap();
            let h = g.activation(h, Activation::Sigmoid);
            g.cross_entropy(h, &labels).unwrap()
        }));
        cases += 1;
    }
    for _ in 0..20 {
        let (m, n) = (r.gen_range(1..5), r.gen_range(1..5));
        let a = random_tensor(&mut r, vec![m, n]);
        let b = random_tensor(&mut r, vec![n, m]);
        worst = worst.max(check_graph(&[a, b], |g, v| {
            let t = g.transpose(v[0]).unwrap();
            let p = g.mul(t, v[1]).unwrap();
            let p = g.activation(p, Activation::Tanh);
            g.sum(p)
        }));
        cases += 1;
    }
    for _ in 0..20 {
        let (c, o) = (r.gen_range(1..3), r.gen_range(1..3));
        let x = random_tensor(&mut r, vec![2, c, 6, 6]);
        let kern = random_tensor(&mut r, vec![o, c, 3, 3]);
        let w = random_tensor(&mut r, vec![2, o * 4]);
        worst = worst.max(check_graph(&[x, kern, w], |g, v| {
            let y = g.conv2d(v[0], v[1], 1).unwrap();
            let y = g.activation(y, Activation::Tanh);
            let y = g.maxpool2d(y, 2).unwrap();
            let y = g.reshape(y, vec![2, o * 4]).unwrap();
            let y = g.mul(y, v[2]).unwrap();
            g.sum(y)
        }));
        cases += 1;
    }
    for _ in 0..20 {
        let n_angles = r.gen_range(4..8);
        let rr = r.gen_range(1..4);
        let fan_in = r.gen_range(1..=binomial_small(n_angles, rr));
        let fan_out = r.gen_range(1..4);
        let gen = TrigWeightGenerator::new(n_angles, rr, fan_in).unwrap();
        let banks = Tensor::new(
            vec![fan_out, n_angles],
            (0..fan_out * n_angles).map(|_| r.gen_range(-PI..PI)).collect(),
        )
        .unwrap();
        let x = random_tensor(&mut r, vec![2, fan_in]);
        let labels = [r.gen_range(0..fan_out), r.gen_range(0..fan_out)];
        worst = worst.max(check_graph(&[banks, x], |g, v| {
            let w = gen.apply(g, v[0], None).unwrap();
            let wt = g.transpose(w).unwrap();
            let z = g.matmul(v[1], wt).unwrap();
            g.cross_entropy(z, &labels).unwrap()
        }));
        cases += 1;
    }
    for _ in 0..20 {
        let n = r.gen_range(1..4);
        let circuit = random_circuit(&mut r, n, 8, n);
        let obs = PauliString::z_on(n, r.gen_range(0..n));
        let data: Vec<f64> = (0..circuit.n_data()).map(|_| r.gen_range(-PI..PI)).collect();
        let params: Vec<f64> = (0..circuit.n_params()).map(|_| r.gen_range(-PI..PI)).collect();
        let f = |d: &[f64], p: &[f64]| angle_encode_run(&circuit, d, p, &obs).unwrap();
        for slot in 0..circuit.n_params() {
            let exact = parameter_shift_grad(&circuit, None, &data, &params, &obs, slot).unwrap();
            let (mut pp, mut pm) = (params.clone(), params.clone());
            pp[slot] += FD_STEP;
            pm[slot] -= FD_STEP;
            worst = worst.max(rel_err(exact, (f(&data, &pp) - f(&data, &pm)) / (2.0 * FD_STEP)));
        }
        for slot in 0..circuit.n_data() {
            let exact = data_shift_grad(&circuit, &data, &params, &obs, slot).unwrap();
            let (mut dp, mut dm) = (data.clone(), data.clone());
            dp[slot] += FD_STEP;
            dm[slot] -= FD_STEP;
            worst = worst.max(rel_err(exact, (f(&dp, &params) - f(&dm, &params)) / (2.0 * FD_STEP)));
        }
        cases += 1;
    }
    for _ in 0..20 {
        let n = r.gen_range(1..4);
        let circuit = random_circuit(&mut r, n, 8, 0);
        let obs = PauliString::z_on(n, 0);
        let params: Vec<f64> = (0..circuit.n_params()).map(|_| r.gen_range(-PI..PI)).collect();
        let z: Vec<f64> = (0..1usize << n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let (_, grad) = amplitude_output_grad(&circuit, &z, &params, &obs).unwrap();
        for i in 0..z.len() {
            let (mut zp, mut zm) = (z.clone(), z.clone());
            zp[i] += FD_STEP;
            zm[i] -= FD_STEP;
            let fp = amplitude_output_grad(&circuit, &zp, &params, &obs).unwrap().0;
            let fm = amplitude_output_grad(&circuit, &zm, &params, &obs).unwrap().0;
            worst = worst.max(rel_err(grad[i], (fp - fm) / (2.0 * FD_STEP)));
        }
        cases += 1;
    }
    outcome(
        cases >= 100 && worst <= GRAD_TOL,
        format!("{cases} random cases, worst relative error {worst:.2e} (limit {GRAD_TOL:.0e})"),
    )
}

fn binomial_small(n: usize, k: usize) -> usize {
    wcnn::trig_weights::binomial(n, k).unwrap()
}

// ------------------------------------------------------------ orthogonality

fn orthogonality() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for n in 1..=5 {
        for r in 1..=3.min(n) {
            let spec = CombinationSpec::full(n, r).unwrap();
            for k in 0..spec.count() {
                for k2 in 0..spec.count() {
                    let got = moment_integral(&spec, k, k2, 1).unwrap().value;
                    worst = worst.max((got - first_moment_reference(&spec, k, k2)).abs());
                    pairs += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-8,
        format!("{pairs} (k, k') pairs over N <= 5, r <= 3, worst abs error {worst:.2e}"),
    )
}

// --------------------------------------------------------- quadratic form

fn quadratic_form() -> Outcome {
    let mut r = rng::stream(303, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.gen_range(1..=4);
        let circuit = random_circuit(&mut r, n, 12, 0);
        let obs = PauliString::z_on(n, r.gen_range(0..n));
        let params: Vec<f64> = (0..circuit.n_params()).map(|_| r.gen_range(-PI..PI)).collect();
        let z: Vec<f64> = (0..1usize << n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let w = extract_w(&circuit, &params, &obs).unwrap();
        let dim = z.len();
        let mut quad = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                quad += z[i] * w[i * dim + j].re * z[j];
            }
        }
        let norm2: f64 = z.iter().map(|v| v * v).sum();
        let mut state = amplitude_encode(&z).unwrap();
        circuit.apply(&mut state, &[], &params).unwrap();
        let direct = expectation(&state, &obs).unwrap();
        worst = worst.max((quad / norm2 - direct).abs());
    }
    outcome(worst <= 1e-10, format!("100 random circuits, worst abs error {worst:.2e}"))
}

// ------------------------------------------------------- variable counts

fn variable_accounting() -> Outcome {
    let dense = variable_count_report(&ModelSpec::wc_fnn([1, 28, 28], 5, 15, 5)).unwrap();
    let mut conv_spec = ModelSpec::wc_cnn([3, 32, 32], 5, 20, 5);
    conv_spec.conv.filters = 12;
    let conv = variable_count_report(&conv_spec).unwrap();
    let a = dense.layer_ratio.unwrap_or(f64::NAN);
    let b = conv.layer_ratio.unwrap_or(f64::NAN);
    outcome(
        a == 784.0 / 15.0 && format!("{a:.2}") == "52.27" && b == 135.0,
        format!("784x16 layer with N=15: {a:.4}; fan_in 2700 layer with N=20: {b}"),
    )
}

// --------------------------------------------------------------- training

fn learnability() -> (Outcome, Duration) {
    let start = Instant::now();
    let config = base_config("learn");
    let record = run(Command::Train, &config).unwrap();
    let runs = record.summary["runs"].as_array().unwrap();
    let acc = |name: &str| {
        runs.iter()
            .find(|r| r["model"].as_str() == Some(name))
            .map(|r| field(r, "accuracy"))
            .unwrap()
    };
    let (fnn, wc) = (acc("fnn"), acc("wc_fnn(N=15,r=5)"));
    let gap = (fnn - wc).abs() * 100.0;
    let elapsed = start.elapsed();
    (
        outcome(
            fnn >= 0.90 && wc >= 0.90 && gap <= 3.0 && elapsed < Duration::from_secs(600),
            format!(
                "fnn {:.1}%, wc_fnn(15,5) {:.1}%, gap {gap:.1} points (limit 3.0), {:.0} s",
                fnn * 100.0,
                wc * 100.0,
                elapsed.as_secs_f64()
            ),
        ),
        elapsed,
    )
}

// ---------------------------------------------------------- expressibility

fn express(name: &str, n_values: Vec<usize>, r_values: Vec<usize>) -> ExperimentRecord {
    let mut config = base_config(name);
    config.express.n_values = n_values;
    config.express.r_values = r_values;
    config.express.mode = BankMode::Ensemble;
    run(Command::Express, &config).unwrap()
}

fn expressibility_decay(record: &ExperimentRecord) -> Outcome {
    let kl_inv: Vec<f64> = record.metrics.iter().map(|m| field(m, "kl_inv")).collect();
    let decreasing = kl_inv.windows(2).all(|w| w[1] < w[0]);
    let fit = &record.summary["fits"][0];
    let base = field(fit, "decay_base");
    outcome(
        decreasing && (1.6..=2.4).contains(&base),
        format!(
            "N=20, r=4..9: inverse KL {}; fitted base {base:.3} (95% CI {:.3}..{:.3}), target [1.6, 2.4]",
            if decreasing { "strictly decreasing" } else { "not monotone" },
            field(fit, "decay_base_lo"),
            field(fit, "decay_base_hi"),
        ),
    )
}

fn trainability_trend(over_n: &ExperimentRecord, over_r: &ExperimentRecord) -> Outcome {
    let d: Vec<f64> = over_n.metrics.iter().map(|m| field(m, "delta_inv")).collect();
    let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let spread = (hi - lo) / lo;
    let fit = &over_r.summary["fits"][0];
    let lin = field(fit, "delta_inv_linear_rss");
    let exp = field(fit, "delta_inv_exponential_rss");
    outcome(
        spread < 0.10 && lin < exp,
        format!(
            "spread of inverse delta over N=14..25 at r=4: {:.2}% (limit 10%); over r=4..9 linear RSS {lin:.3e} vs exponential RSS {exp:.3e}",
            spread * 100.0
        ),
    )
}

// ---------------------------------------------------------------- attacks

fn attack_record() -> (ExperimentRecord, Duration) {
    let start = Instant::now();
    let mut config = base_config("attack");
    config.attack.epsilons = vec![0.0, 0.1, 0.2];
    config.attack.dropout_ps = vec![0.0, 0.001];
    (run(Command::Attack, &config).unwrap(), start.elapsed())
}

fn attack_acc(record: &ExperimentRecord, p: f64, eps: f64) -> f64 {
    record
        .metrics
        .iter()
        .find(|m| field(m, "p") == p && field(m, "epsilon") == eps)
        .map(|m| field(m, "accuracy"))
        .unwrap()
}

fn attack_degradation(record: &ExperimentRecord) -> Outcome {
    let clean = attack_acc(record, 0.0, 0.0);
    let hit = attack_acc(record, 0.0, 0.1);
    let drop = (clean - hit) * 100.0;
    outcome(
        drop >= 30.0,
        format!("wc_fnn p=0: clean {:.1}%, eps=0.1 {:.1}%, drop {drop:.1} points (need >= 30)", clean * 100.0, hit * 100.0),
    )
}

fn dropout_defense(record: &ExperimentRecord, elapsed: Duration) -> Outcome {
    let base = attack_acc(record, 0.0, 0.0);
    let clean = attack_acc(record, 0.001, 0.0);
    let hit = attack_acc(record, 0.001, 0.2);
    let gap = (clean - hit) * 100.0;
    let shift = (clean - base).abs() * 100.0;
    outcome(
        gap <= 15.0 && shift <= 1.0 && elapsed < Duration::from_secs(600),
        format!(
            "p=0.001: clean {:.1}%, eps=0.2 {:.1}%, gap {gap:.1} points (limit 15); clean shift vs p=0 {shift:.1} points (limit 1)",
            clean * 100.0,
            hit * 100.0
        ),
    )
}

// ----------------------------------------------------------------- hybrids

fn encoding_gap() -> Outcome {
    let start = Instant::now();
    let config = base_config("qdemo");
    let record = run(Command::Qdemo, &config).unwrap();
    let acc = |enc: &str| {
        record
            .metrics
            .iter()
            .find(|m| m["encoding"] == enc && m["boundary"] == "cubic")
            .map(|m| field(m, "accuracy"))
            .unwrap()
    };
    let (angle, amp) = (acc("angle"), acc("amplitude"));
    let margin = (angle - amp) * 100.0;
    outcome(
        angle >= 0.85 && margin >= 10.0 && start.elapsed() < Duration::from_secs(600),
        format!("cubic boundary: angle {:.1}%, amplitude {:.1}%, margin {margin:.1} points", angle * 100.0, amp * 100.0),
    )
}

// ------------------------------------------------------------ determinism

fn small_configs() -> Vec<(Command, ExperimentConfig)> {
    let mut c = base_config("det");
    c.dataset.train_n = 200;
    c.dataset.test_n = 100;
    c.train.epochs = 2;
    c.models = vec![
        ModelConfig::new(Architecture::Fnn),
        ModelConfig::constrained(Architecture::WcFnn, 15, 5),
        ModelConfig::constrained(Architecture::WcCnn, 14, 5),
        ModelConfig::new(Architecture::Cnn),
    ];
    c.sweep_nr.n_values = vec![15];
    c.sweep_nr.runs_per_cell = 2;
    c.express.n_values = vec![20];
    c.express.r_values = vec![4, 5, 6, 7];
    c.express.samples = 5000;
    c.attack.epsilons = vec![0.0, 0.1];
    c.attack.dropout_ps = vec![0.0, 0.05];
    c.qdemo.train.epochs = 3;
    Command::ALL.into_iter().map(|cmd| (cmd, c.clone())).collect()
}

fn determinism() -> Outcome {
    let mut bad = Vec::new();
    for (cmd, config) in small_configs() {
        let mut outputs = Vec::new();
        for (i, workers) in [Some(1), Some(4)].into_iter().enumerate() {
            let mut c = config.clone();
            c.workers = workers;
            c.out = scratch(&format!("det-{}-{i}", cmd.name()));
            run(cmd, &c).unwrap();
            outputs.push(std::fs::read(c.out.join("metrics.csv")).unwrap());
        }
        if outputs[0] != outputs[1] {
            bad.push(cmd.name());
        }
    }
    outcome(
        bad.is_empty(),
        if bad.is_empty() {
            "all six commands rerun with 1 and 4 workers give byte-identical metrics.csv".into()
        } else {
            format!("metrics differ on rerun for {bad:?}")
        },
    )
}

// -------------------------------------------------------------------- main

fn timed<F: FnOnce() -> Outcome>(limit: Duration, f: F) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if elapsed >= limit {
        o.pass = false;
        o.detail.push_str(&format!("; took {:.0} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()));
    }
    o
}

fn main() {
    let minute = Duration::from_secs(60);
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };
    report("gradient-correctness", timed(minute, gradient_correctness));
    report("weight-orthogonality", timed(minute, orthogonality));
    report("quadratic-form-identity", timed(minute, quadratic_form));
    report("variable-accounting", variable_accounting());
    report("desk-scale-learnability", learnability().0);
    let start = Instant::now();
    let over_r = express("express-r", vec![20], (4..=9).collect());
    let express_time = start.elapsed();
    let mut decay = expressibility_decay(&over_r);
    if express_time >= 5 * minute {
        decay.pass = false;
    }
    report("expressibility-decay", decay);
    let over_n = express("express-n", (14..=25).collect(), vec![4]);
    report("trainability-trend", trainability_trend(&over_n, &over_r));
    let (attack, attack_time) = attack_record();
    report("fgsm-degradation", attack_degradation(&attack));
    report("dropout-defense", dropout_defense(&attack, attack_time));
    report("encoding-gap", encoding_gap());
    report("determinism", determinism());
    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("{} of {} checks passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
