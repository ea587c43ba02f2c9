//! Acceptance gate, one PASS/FAIL line per criterion. The full-protocol
//! learner experiments print NOT RUN unless `--ignored` (or
//! `--include-ignored`) is passed:
//! `cargo test --release -p seqbias-runner --test acceptance -- --ignored`.

use std::path::Path;
use std::process::ExitCode;

use seqbias::checks::{layer_gradient_errors, learner_gradient_error, small_config};
use seqbias::learners::{init_learner, LearnerKind};
use seqbias::metrics::{
    paired_t_test, prequential_code, NeuralLearner, Prequential, RuleOracle, TransmissionSchedule,
};
use seqbias::tasks::{CandidateRule, TaskInstance};
use seqbias::tensor::RandomStream;
use seqbias::training::TrainHyper;
use seqbias_runner::run::{ResultRow, RunOutput};
use seqbias_runner::{
    replay, run_curves, run_experiment, write_outputs, ExperimentSpec, LearnerGrid, RunManifest, TaskGrid,
};

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(verdicts: &[Verdict]) {
    for v in verdicts {
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {:<28} {status}  {}", v.id, v.name, v.detail);
    }
}

fn reference_instances() -> Vec<TaskInstance> {
    let mut all = Vec::new();
    for l in [10, 20, 30, 40] {
        all.push(TaskInstance::CountMem { l });
    }
    for l in [5, 10, 15, 20] {
        all.push(TaskInstance::AddMul { l });
    }
    all.push(TaskInstance::Mult3 { l: 10 });
    all.push(TaskInstance::HierLinear { d: 4 });
    for m in [6, 24, 36] {
        all.push(TaskInstance::CompMem { n: 40, m });
    }
    all
}

fn gradient_checks() -> Verdict {
    let mut worst = (String::new(), 0.0f64);
    let mut note = |name: String, err: f64| {
        if !(err <= worst.1) {
            worst = (name, err);
        }
    };
    for seed in 0..5 {
        for (layer, err) in layer_gradient_errors(seed).unwrap() {
            note(format!("{layer} seed {seed}"), err);
        }
        for kind in LearnerKind::ALL {
            note(format!("{kind} seed {seed}"), learner_gradient_error(kind, seed).unwrap());
        }
    }
    Verdict {
        id: 1,
        name: "gradient checks",
        pass: worst.1 < 1e-6,
        detail: format!("max relative error {:.2e} ({}) < 1e-6", worst.1, worst.0),
    }
}

fn oracle_dl() -> Verdict {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for inst in reference_instances() {
        let data = inst.data().unwrap();
        for rule in inst.rules() {
            let schedule =
                TransmissionSchedule::new(&data, rule, inst.kind().default_block_size(), 11).unwrap();
            let oracle = RuleOracle { data: data.clone(), rule };
            let dl = prequential_code(&oracle, &data, &schedule).unwrap();
            worst = worst.max(dl.total.abs());
            cases += 1;
        }
    }
    Verdict {
        id: 2,
        name: "oracle description length",
        pass: worst == 0.0,
        detail: format!("largest total over {cases} task/rule pairs: {worst}"),
    }
}

fn single_block() -> Verdict {
    let hyper = TrainHyper {
        epochs: 8,
        warmup: 3,
        lr_peak: 1e-2,
        ..TrainHyper::default()
    };
    let mut worst = 0.0f64;
    let mut cases = 0;
    for inst in [TaskInstance::AddMul { l: 3 }, TaskInstance::HierLinear { d: 2 }] {
        let data = inst.data().unwrap();
        let rule = inst.rules()[0];
        for kind in LearnerKind::ALL {
            for seed in [3, 17] {
                let mut config = small_config(kind);
                config.dropout = 0.25;
                let learner = NeuralLearner {
                    init: init_learner::<f64>(&config, data.input_vocab.len(), data.output_vocab.len(), seed)
                        .unwrap(),
                    hyper: hyper.clone(),
                    seed,
                };
                let schedule = TransmissionSchedule::single_block(&data, rule).unwrap();
                let dl = prequential_code(&learner, &data, &schedule).unwrap();
                let trained = learner.fit(&data.train).unwrap().model;
                let ce: f64 = data
                    .labeled_holdout(rule)
                    .unwrap()
                    .iter()
                    .map(|(_, e)| trained.sequence_nll(&e.input, &e.output).unwrap())
                    .sum();
                worst = worst.max((dl.total - ce).abs());
                cases += 1;
            }
        }
    }
    Verdict {
        id: 3,
        name: "single-block equivalence",
        pass: worst < 1e-9,
        detail: format!("max |DL - CE| over {cases} fits: {worst:.2e} nats < 1e-9"),
    }
}

fn task_oracles() -> Verdict {
    let mut problems = Vec::new();
    let mut checked = 0;
    for inst in reference_instances() {
        let data = inst.data().unwrap();
        let rules = inst.rules();
        for &rule in &rules {
            for ex in &data.train {
                checked += 1;
                if data.apply(rule, &ex.input).ok().as_ref() != Some(&ex.output) {
                    problems.push(format!("{inst}: {rule} misses a train example"));
                }
            }
        }
        for (i, &r1) in rules.iter().enumerate() {
            for &r2 in &rules[i + 1..] {
                let differs = data.holdout.iter().any(|x| {
                    matches!((data.apply(r1, x), data.apply(r2, x)), (Ok(a), Ok(b)) if a != b)
                });
                if !differs {
                    problems.push(format!("{inst}: {r1} and {r2} agree on holdout"));
                }
            }
        }
    }
    Verdict {
        id: 4,
        name: "task oracles",
        pass: problems.is_empty(),
        detail: if problems.is_empty() {
            format!("{checked} rule/train checks, every rule pair separated")
        } else {
            problems.join("; ")
        },
    }
}

/// Two-sided tail of Student's t with integer `df`, from the closed-form
/// finite series in `theta = atan(t / sqrt(df))`.
fn t_two_sided_p(t: f64, df: usize) -> f64 {
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    let (mut sum, mut term) = (0.0, 1.0);
    let inside = if df % 2 == 1 {
        let mut k = 1;
        while k + 2 <= df {
            sum += term;
            term *= c2 * (k + 1) as f64 / (k + 2) as f64;
            k += 2;
        }
        2.0 / std::f64::consts::PI * (theta + if df == 1 { 0.0 } else { s * c * sum })
    } else {
        let mut k = 0;
        while k + 2 <= df {
            sum += term;
            term *= c2 * (k + 1) as f64 / (k + 2) as f64;
            k += 2;
        }
        s * sum
    };
    1.0 - inside
}

fn t_test_oracle() -> Verdict {
    let mut rng = RandomStream::new(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = 3 + rng.below(38);
        let shift = rng.uniform_range(-1.0, 1.0);
        let a: Vec<f64> = (0..n).map(|_| rng.normal(0.0, 2.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + shift + rng.normal(0.0, 1.0)).collect();
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let t = mean / (var / n as f64).sqrt();
        let p = t_two_sided_p(t, n - 1);
        let r = paired_t_test(&a, &b).unwrap();
        worst = worst.max((r.t - t).abs()).max((r.p - p).abs());
    }
    Verdict {
        id: 5,
        name: "paired t-test oracle",
        pass: worst < 1e-10,
        detail: format!("max |difference| in t or p over 20 fixtures: {worst:.2e} < 1e-10"),
    }
}

fn small_spec(task: TaskGrid, kinds: &[LearnerKind], seeds: u64) -> ExperimentSpec {
    let learners = kinds
        .iter()
        .map(|&kind| {
            let mut g = LearnerGrid::new(kind);
            g.hidden = vec![6];
            g.embedding = vec![4];
            g.heads = vec![2];
            g.dropout = vec![0.2];
            g
        })
        .collect();
    let mut spec = ExperimentSpec::new(vec![task], learners);
    spec.seeds = seeds;
    spec.train = TrainHyper {
        epochs: 6,
        warmup: 2,
        lr_peak: 1e-2,
        ..TrainHyper::default()
    };
    spec
}

fn grid(task: &str, l: &[usize], d: &[usize], n: &[usize], m: &[usize]) -> TaskGrid {
    TaskGrid {
        task: task.parse().unwrap(),
        l: l.to_vec(),
        d: d.to_vec(),
        n: n.to_vec(),
        m: m.to_vec(),
        rules: vec![],
    }
}

fn replay_determinism() -> Verdict {
    let specs = [
        small_spec(grid("count-mem", &[3], &[], &[], &[]), &[LearnerKind::LstmAttention, LearnerKind::Cnn], 3),
        small_spec(grid("hier-linear", &[], &[2], &[], &[]), &[LearnerKind::Transformer], 2),
        small_spec(
            grid("comp-mem", &[], &[], &[5], &[3]),
            &[LearnerKind::JointSourceTargetAttention, LearnerKind::LstmNoAttention],
            2,
        ),
    ];
    let mut mismatches = Vec::new();
    let mut rows = 0;
    for spec in &specs {
        let first = run_experiment(spec, Some(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&first, dir.path()).unwrap();
        let manifest = RunManifest::load(&dir.path().join("manifest.json")).unwrap();
        let again = replay(&manifest, Some(1)).unwrap();
        rows += first.rows.len();
        if !bit_equal(&first, &again) {
            mismatches.push(spec.tasks[0].task.to_string());
        }
    }
    Verdict {
        id: 6,
        name: "replay determinism",
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("{} manifests, {rows} rows reproduced bit-exactly", specs.len())
        } else {
            format!("differences in {}", mismatches.join(", "))
        },
    }
}

fn bit_equal(a: &RunOutput, b: &RunOutput) -> bool {
    let bits = |o: &RunOutput| {
        o.rows
            .iter()
            .map(|r| (r.fpa.map(f64::to_bits), r.l_mean.map(f64::to_bits), r.success_rate.to_bits()))
            .collect::<Vec<_>>()
    };
    a.rows == b.rows && a.records == b.records && bits(a) == bits(b)
}

type Full = fn();

const FULL_PROTOCOL: [(u32, &str, Full); 8] = [
    (7, "count-mem l=40", criterion_07_count_mem_l40),
    (8, "count-mem l=10", criterion_08_count_mem_l10),
    (9, "add-mul l=20", criterion_09_add_mul_l20),
    (10, "add-mul U-shape", criterion_10_add_mul_u_shape),
    (11, "hier-linear d=4", criterion_11_hier_linear_d4),
    (12, "comp-mem M=36", criterion_12_comp_mem_m36),
    (13, "mult3 l=10", criterion_13_mult3_l10),
    (14, "normalized DL curve", criterion_14_normalized_curve),
];

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let full = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let quick_only = args.iter().any(|a| a == "--ignored") && !args.iter().any(|a| a == "--include-ignored");
    let mut failed = Vec::new();
    if !quick_only {
        let verdicts = [
            gradient_checks(),
            oracle_dl(),
            single_block(),
            task_oracles(),
            t_test_oracle(),
            replay_determinism(),
        ];
        report(&verdicts);
        failed.extend(verdicts.iter().filter(|v| !v.pass).map(|v| v.id));
    }
    for (id, name, check) in FULL_PROTOCOL {
        if full {
            if std::panic::catch_unwind(check).is_err() {
                failed.push(id);
            }
        } else {
            println!("criterion {id:>2} {name:<28} NOT RUN  full protocol, pass --ignored to run");
        }
    }
    if failed.is_empty() {
        println!("acceptance: ok");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}

fn full_spec(task: TaskGrid, kinds: &[LearnerKind]) -> ExperimentSpec {
    ExperimentSpec::new(vec![task], kinds.iter().map(|&k| LearnerGrid::new(k)).collect())
}

fn run_full(spec: &ExperimentSpec) -> RunOutput {
    let out = run_experiment(spec, None).unwrap();
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(&spec.name);
    write_outputs(&out, &dir).unwrap();
    out
}

fn row<'a>(rows: &'a [ResultRow], learner: LearnerKind, params: &str, rule: CandidateRule) -> &'a ResultRow {
    rows.iter()
        .find(|r| r.config.kind == learner && r.params == params && r.rule == rule)
        .unwrap_or_else(|| panic!("no row for {learner} {params} {rule}"))
}

fn p_against(r: &ResultRow, other: CandidateRule) -> f64 {
    r.comparisons.iter().find(|c| c.against == other).map_or(1.0, |c| c.p)
}

fn l(r: &ResultRow) -> f64 {
    r.l_mean.unwrap_or(f64::INFINITY)
}

fn fpa(r: &ResultRow) -> f64 {
    r.fpa.unwrap_or(0.0)
}

fn verdict(id: u32, name: &'static str, checks: Vec<(bool, String)>) {
    let pass = checks.iter().all(|c| c.0);
    let detail = checks.iter().map(|c| c.1.as_str()).collect::<Vec<_>>().join("; ");
    report(&[Verdict { id, name, pass, detail }]);
    if !pass {
        panic!("criterion {id} failed");
    }
}

fn criterion_07_count_mem_l40() {
    use CandidateRule::*;
    use LearnerKind::*;
    let mut spec = full_spec(grid("count-mem", &[40], &[], &[], &[]), &[LstmNoAttention, Cnn, Transformer]);
    spec.name = "criterion-07".into();
    let rows = run_full(&spec).rows;
    let count = row(&rows, LstmNoAttention, "l=40", Count);
    let mem = row(&rows, LstmNoAttention, "l=40", Mem);
    let mut checks = vec![
        (fpa(count) >= 0.9, format!("lstm FPA-count {:.2} >= 0.9", fpa(count))),
        (
            l(count) < l(mem) && p_against(count, Mem) < 1e-3,
            format!("lstm L-count {:.2} < L-mem {:.2}, p {:.1e}", l(count), l(mem), p_against(count, Mem)),
        ),
    ];
    for kind in [Cnn, Transformer] {
        let m = row(&rows, kind, "l=40", Mem);
        checks.push((
            fpa(m) >= 0.8 && m.minimal,
            format!("{kind} FPA-mem {:.2} >= 0.8, L-mem minimal {}", fpa(m), m.minimal),
        ));
    }
    verdict(7, "count-mem l=40", checks);
}

fn criterion_08_count_mem_l10() {
    use CandidateRule::*;
    use LearnerKind::*;
    let mut spec = full_spec(grid("count-mem", &[10], &[], &[], &[]), &[LstmNoAttention, LstmAttention]);
    spec.name = "criterion-08".into();
    let rows = run_full(&spec).rows;
    let checks = [LstmNoAttention, LstmAttention]
        .into_iter()
        .map(|kind| {
            let (m, c) = (row(&rows, kind, "l=10", Mem), row(&rows, kind, "l=10", Count));
            (
                l(m) < l(c) && p_against(m, Count) < 0.01,
                format!("{kind} L-mem {:.2} < L-count {:.2}, p {:.1e}", l(m), l(c), p_against(m, Count)),
            )
        })
        .collect();
    verdict(8, "count-mem l=10", checks);
}

fn criterion_09_add_mul_l20() {
    use CandidateRule::*;
    use LearnerKind::*;
    let mut spec = full_spec(grid("add-mul", &[20], &[], &[], &[]), &[LstmNoAttention, Cnn, Transformer]);
    spec.name = "criterion-09".into();
    let rows = run_full(&spec).rows;
    let mul = row(&rows, LstmNoAttention, "l=20", Mul);
    let mut checks = vec![(
        fpa(mul) >= 0.7 && mul.minimal,
        format!("lstm FPA-mul {:.2} >= 0.7, L-mul minimal {}", fpa(mul), mul.minimal),
    )];
    for kind in [Cnn, Transformer] {
        let m = row(&rows, kind, "l=20", Mem);
        checks.push((fpa(m) >= 0.9, format!("{kind} FPA-mem {:.2} >= 0.9", fpa(m))));
    }
    verdict(9, "add-mul l=20", checks);
}

fn criterion_10_add_mul_u_shape() {
    let mut spec = full_spec(grid("add-mul", &[5, 10, 20], &[], &[], &[]), &[LearnerKind::LstmAttention]);
    spec.name = "criterion-10".into();
    spec.tasks[0].rules = vec![CandidateRule::Add];
    let out = run_full(&spec);
    // Per-seed mean nats per example of the add rule, paired by seed.
    let per_seed = |l: usize| -> Vec<f64> {
        let mut v: Vec<(u64, f64)> = out
            .records
            .iter()
            .filter(|r| r.task == TaskInstance::AddMul { l } && r.failure.is_none())
            .map(|r| (r.seed, r.dl[0].mean_per_example))
            .collect();
        v.sort_by_key(|p| p.0);
        v.into_iter().map(|p| p.1).collect()
    };
    let mid = per_seed(10);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let checks = [5, 20]
        .into_iter()
        .map(|end| {
            let other = per_seed(end);
            let p = paired_t_test(&mid, &other).map_or(1.0, |t| t.p);
            (
                mean(&mid) < mean(&other) && p < 0.05,
                format!("L-add l=10 {:.2} < l={end} {:.2}, p {:.1e}", mean(&mid), mean(&other), p),
            )
        })
        .collect();
    verdict(10, "add-mul U-shape", checks);
}

fn criterion_11_hier_linear_d4() {
    use CandidateRule::*;
    use LearnerKind::*;
    let mut spec = full_spec(grid("hier-linear", &[], &[4], &[], &[]), &[Cnn, Transformer]);
    spec.name = "criterion-11".into();
    let rows = run_full(&spec).rows;
    let lin = row(&rows, Cnn, "d=4", Linear);
    let (h, t) = (row(&rows, Transformer, "d=4", Hierar), row(&rows, Transformer, "d=4", Linear));
    verdict(
        11,
        "hier-linear d=4",
        vec![
            (
                fpa(lin) >= 0.8 && lin.minimal,
                format!("cnn FPA-linear {:.2} >= 0.8, L-linear minimal {}", fpa(lin), lin.minimal),
            ),
            (
                l(h) < l(t) && p_against(h, Linear) < 1e-3,
                format!("transformer L-hierar {:.2} < L-linear {:.2}, p {:.1e}", l(h), l(t), p_against(h, Linear)),
            ),
        ],
    );
}

fn criterion_12_comp_mem_m36() {
    use CandidateRule::*;
    use LearnerKind::*;
    let mut spec = full_spec(grid("comp-mem", &[], &[], &[40], &[36]), &[Cnn, Transformer]);
    spec.name = "criterion-12".into();
    let rows = run_full(&spec).rows;
    let p = "N=40,M=36";
    let (cc, cm) = (row(&rows, Cnn, p, Comp), row(&rows, Cnn, p, Mem));
    let (tc, tm) = (row(&rows, Transformer, p, Comp), row(&rows, Transformer, p, Mem));
    verdict(
        12,
        "comp-mem M=36",
        vec![
            (
                fpa(cc) >= 0.5 && l(cc) < l(cm),
                format!("cnn FPA-comp {:.2} >= 0.5, L-comp {:.2} < L-mem {:.2}", fpa(cc), l(cc), l(cm)),
            ),
            (l(tm) < l(tc), format!("transformer L-mem {:.2} < L-comp {:.2}", l(tm), l(tc))),
        ],
    );
}

fn criterion_13_mult3_l10() {
    let mut spec = full_spec(grid("mult3", &[10], &[], &[], &[]), &[LearnerKind::LstmNoAttention]);
    spec.name = "criterion-13".into();
    let rows = run_full(&spec).rows;
    let mul2 = row(&rows, LearnerKind::LstmNoAttention, "l=10", CandidateRule::Mul2);
    let majority = rows
        .iter()
        .max_by(|a, b| fpa(a).total_cmp(&fpa(b)))
        .map(|r| r.rule)
        .unwrap();
    verdict(
        13,
        "mult3 l=10",
        vec![(
            majority == CandidateRule::Mul2 && fpa(mul2) >= 0.6 && mul2.minimal,
            format!("majority {majority}, FPA-mul2 {:.2} >= 0.6, L-mul2 minimal {}", fpa(mul2), mul2.minimal),
        )],
    );
}

fn criterion_14_normalized_curve() {
    use LearnerKind::*;
    let mut spec = full_spec(grid("comp-mem", &[], &[], &[100], &[10]), &[Cnn, Transformer]);
    spec.name = "criterion-14".into();
    spec.curve = Some(seqbias_runner::spec::CurveSpec {
        n: 100,
        m: vec![5, 10, 20, 40, 60, 80],
        rule: CandidateRule::Comp,
    });
    let curves = run_curves(&spec, None).unwrap();
    let means = |label: &str| -> Vec<f64> {
        curves.iter().find(|c| c.0 == label).unwrap().1.iter().map(|p| p.mean).collect()
    };
    let (cnn, tr) = (means("cnn"), means("transformer"));
    let monotone = cnn[1..].windows(2).all(|w| w[1] <= w[0]);
    let cnn_ratio = cnn[cnn.len() - 1] / cnn[0];
    let tr_ratio = tr[tr.len() - 1] / tr[0];
    verdict(
        14,
        "normalized DL curve",
        vec![
            (
                monotone && cnn_ratio < 0.1,
                format!("cnn {cnn:.3?} non-increasing after M=5 {monotone}, final/initial {cnn_ratio:.3} < 0.1"),
            ),
            (tr_ratio >= 0.1, format!("transformer {tr:.3?}, final/initial {tr_ratio:.3} >= 0.1")),
        ],
    );
}
