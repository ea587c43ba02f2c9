use approx::assert_relative_eq;
use proptest::prelude::*;

use super::*;
use crate::checks::small_config;
use crate::error::Error;
use crate::learners::{init_learner, LearnerKind};
use crate::tasks::{CandidateRule, TaskData, TaskInstance};
use crate::training::TrainHyper;

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

fn schedules(data: &TaskData, rule: CandidateRule, seed: u64) -> TransmissionSchedule {
    let block = data.instance.kind().default_block_size();
    TransmissionSchedule::new(data, rule, block, seed).unwrap()
}

#[test]
fn schedules_partition_the_labelled_holdout() {
    for inst in reference_instances() {
        let data = inst.data().unwrap();
        for rule in inst.rules() {
            let s = schedules(&data, rule, 5);
            s.validate(&data).unwrap();
            assert_eq!(s.blocks[0], data.train);
            assert_eq!(s.holdout_size(), data.labeled_holdout(rule).unwrap().len());
            let block = inst.kind().default_block_size();
            assert!(s.blocks[1..].iter().all(|b| !b.is_empty() && b.len() <= block));
        }
    }
}

#[test]
fn holdout_order_depends_on_the_seed_only() {
    let data = TaskInstance::CountMem { l: 20 }.data().unwrap();
    let a = schedules(&data, CandidateRule::Count, 1);
    assert_eq!(a, schedules(&data, CandidateRule::Count, 1));
    assert_ne!(a.indices, schedules(&data, CandidateRule::Count, 2).indices);
}

#[test]
fn corrupted_schedules_are_rejected() {
    let data = TaskInstance::CountMem { l: 5 }.data().unwrap();
    let good = schedules(&data, CandidateRule::Count, 0);
    assert!(TransmissionSchedule::new(&data, CandidateRule::Count, 0, 0).is_err());

    let mut s = good.clone();
    s.blocks[0].clear();
    assert!(matches!(s.validate(&data), Err(Error::Schedule(_))));

    let mut s = good.clone();
    s.blocks.pop();
    s.indices.pop();
    assert!(s.validate(&data).is_err());

    let mut s = good.clone();
    s.blocks[2] = s.blocks[1].clone();
    s.indices[2] = s.indices[1].clone();
    assert!(s.validate(&data).is_err());

    // Labels of another rule.
    let mut s = good;
    let mem = data.labeled_holdout(CandidateRule::Mem).unwrap();
    let i = s.indices[1][0];
    s.blocks[1][0] = mem.iter().find(|(j, _)| *j == i).unwrap().1.clone();
    if s.blocks[1][0] != data.labeled_holdout(CandidateRule::Count).unwrap()[i].1 {
        assert!(s.validate(&data).is_err());
    }
}

#[test]
fn oracle_learner_has_zero_description_length_everywhere() {
    for inst in reference_instances() {
        let data = inst.data().unwrap();
        for rule in inst.rules() {
            let oracle = RuleOracle { data: data.clone(), rule };
            let dl = prequential_code(&oracle, &data, &schedules(&data, rule, 3)).unwrap();
            assert_eq!(dl.total, 0.0, "{inst} {rule}");
            assert_eq!(dl.mean_per_example, 0.0);
            // A different rule's oracle cannot code these labels.
            for other in inst.rules().into_iter().filter(|&r| r != rule) {
                let wrong = RuleOracle { data: data.clone(), rule: other };
                let dl = prequential_code(&wrong, &data, &schedules(&data, rule, 3)).unwrap();
                assert_eq!(dl.total, f64::INFINITY, "{inst} {rule} coded by {other}");
            }
        }
    }
}

#[test]
fn naive_constant_counts_training_output_tokens() {
    let data = TaskInstance::CountMem { l: 3 }.data().unwrap();
    let oracle = RuleOracle { data: data.clone(), rule: CandidateRule::Count };
    let dl = prequential_code(&oracle, &data, &schedules(&data, CandidateRule::Count, 0)).unwrap();
    // b b b <eos> over a 2-symbol output vocabulary.
    assert_relative_eq!(dl.naive_constant, 4.0 * 2f64.ln());
}

fn quick_hyper() -> TrainHyper {
    TrainHyper {
        epochs: 6,
        warmup: 2,
        lr_peak: 1e-2,
        ..TrainHyper::default()
    }
}

fn learner(kind: LearnerKind, data: &TaskData, seed: u64) -> NeuralLearner<f64> {
    let mut config = small_config(kind);
    config.dropout = 0.3;
    NeuralLearner {
        init: init_learner(&config, data.input_vocab.len(), data.output_vocab.len(), seed).unwrap(),
        hyper: quick_hyper(),
        seed,
    }
}

#[test]
fn result_totals_are_consistent() {
    let data = TaskInstance::HierLinear { d: 4 }.data().unwrap();
    let l = learner(LearnerKind::Cnn, &data, 2);
    let s = schedules(&data, CandidateRule::Hierar, 2);
    let dl = prequential_code(&l, &data, &s).unwrap();
    assert_eq!(dl.steps.len(), s.blocks.len() - 1);
    assert_relative_eq!(dl.total, dl.steps.iter().map(|s| s.nats).sum::<f64>());
    assert_relative_eq!(dl.mean_per_example, dl.total / 20.0);
    let idx: Vec<usize> = dl.per_example().iter().map(|p| p.0).collect();
    assert_eq!(idx, (0..20).collect::<Vec<_>>());

    // Sharing the train-only fit changes nothing.
    let base = l.fit(&data.train).unwrap();
    assert_eq!(prequential_code_from(&l, &data, &s, &base).unwrap(), dl);
}

#[test]
fn description_length_from_config_matches_manual_learner() {
    let data = TaskInstance::CountMem { l: 3 }.data().unwrap();
    let config = small_config(LearnerKind::Transformer);
    let s = schedules(&data, CandidateRule::Mem, 7);
    let a = description_length(&data, &config, &quick_hyper(), &s, 7).unwrap();
    let l = NeuralLearner {
        init: init_learner::<f64>(&config, 2, 2, 7).unwrap(),
        hyper: quick_hyper(),
        seed: 7,
    };
    assert_eq!(prequential_code(&l, &data, &s).unwrap(), a);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn single_block_equals_train_only_cross_entropy(
        kind in prop::sample::select(LearnerKind::ALL.to_vec()),
        seed in 0u64..500,
    ) {
        let data = TaskInstance::AddMul { l: 3 }.data().unwrap();
        let rule = CandidateRule::Add;
        let l = learner(kind, &data, seed);
        let s = TransmissionSchedule::single_block(&data, rule).unwrap();
        prop_assert_eq!(s.blocks.len(), 2);
        let dl = prequential_code(&l, &data, &s).unwrap();
        let trained = l.fit(&data.train).unwrap().model;
        let ce: f64 = data
            .labeled_holdout(rule)
            .unwrap()
            .iter()
            .map(|(_, e)| trained.sequence_nll(&e.input, &e.output).unwrap())
            .sum();
        prop_assert!((dl.total - ce).abs() < 1e-9, "{} vs {}", dl.total, ce);
    }

    #[test]
    fn every_step_cost_is_finite_and_nonnegative(
        kind in prop::sample::select(LearnerKind::ALL.to_vec()),
        seed in 0u64..500,
        rule in prop::sample::select(vec![CandidateRule::Count, CandidateRule::Mem]),
        block in 1usize..4,
    ) {
        let data = TaskInstance::CountMem { l: 2 }.data().unwrap();
        let l = learner(kind, &data, seed);
        let s = TransmissionSchedule::new(&data, rule, block, seed).unwrap();
        let dl = prequential_code(&l, &data, &s).unwrap();
        // Refinement codes the same examples whatever the block size.
        prop_assert_eq!(dl.per_example().len(), data.holdout.len());
        for step in &dl.steps {
            prop_assert!(step.nats.is_finite() && step.nats >= 0.0);
            for &(_, c) in &step.examples {
                prop_assert!(c.is_finite() && c >= 0.0);
            }
        }
    }
}

#[test]
fn oracle_curve_is_flat_zero() {
    let ms = [2, 5, 8];
    let curve = normalized_dl_with(10, &ms, CandidateRule::Comp, &[0, 1], |data, _| {
        Ok(RuleOracle { data: data.clone(), rule: CandidateRule::Comp })
    })
    .unwrap();
    assert_eq!(curve.len(), ms.len());
    for (p, &m) in curve.iter().zip(&ms) {
        assert_eq!((p.m, p.remaining, p.mean), (m, 10 - m, 0.0));
        assert_eq!(p.per_seed, vec![0.0, 0.0]);
    }
}

#[test]
fn curve_grid_is_validated() {
    let oracle = |data: &TaskData, _| {
        Ok(RuleOracle { data: data.clone(), rule: CandidateRule::Comp })
    };
    assert!(normalized_dl_with(10, &[5, 5], CandidateRule::Comp, &[0], oracle).is_err());
    assert!(normalized_dl_with(10, &[4, 10], CandidateRule::Comp, &[0], oracle).is_err());
    assert!(normalized_dl_with(10, &[], CandidateRule::Comp, &[0], oracle).is_err());
}

fn holdout_decodes(data: &TaskData, rule: CandidateRule) -> Vec<Vec<usize>> {
    data.holdout.iter().map(|x| data.apply(rule, x).unwrap()).collect()
}

#[test]
fn fpa_counts_only_perfect_seeds() {
    let data = TaskInstance::CountMem { l: 10 }.data().unwrap();
    let count = holdout_decodes(&data, CandidateRule::Count);
    let r = fpa(&[count.clone(), count.clone()], CandidateRule::Count, &data).unwrap();
    assert_eq!((r.seeds, r.agreeing, r.fraction), (2, 2, 1.0));

    let mut off = count.clone();
    off[3][0] = 0;
    let r = fpa(&[count.clone(), off, count.clone()], CandidateRule::Count, &data).unwrap();
    assert_eq!(r.agreeing, 2);
    assert_relative_eq!(r.fraction, 2.0 / 3.0);

    let r = fpa(&[count.clone()], CandidateRule::Mem, &data).unwrap();
    assert_eq!(r.fraction, 0.0);

    let mut short = count;
    short.pop();
    assert!(matches!(
        fpa(&[short], CandidateRule::Count, &data),
        Err(Error::MissingDecode(_))
    ));
    assert!(fpa(&[], CandidateRule::Count, &data).is_err());
}

#[test]
fn fpa_ignores_inputs_outside_the_rule() {
    // At d = 3 the shallowest holdout depth is too short for `linear`.
    let data = TaskInstance::HierLinear { d: 3 }.data().unwrap();
    assert!(!data.flagged_holdout(CandidateRule::Linear).is_empty());
    let mut decodes = holdout_decodes(&data, CandidateRule::Hierar);
    for (i, e) in data.labeled_holdout(CandidateRule::Linear).unwrap() {
        decodes[i] = e.output;
    }
    assert_eq!(fpa(&[decodes], CandidateRule::Linear, &data).unwrap().fraction, 1.0);
}

#[test]
fn decode_holdout_covers_every_input() {
    let data = TaskInstance::HierLinear { d: 4 }.data().unwrap();
    let model = init_learner::<f64>(&small_config(LearnerKind::LstmAttention), 3, 3, 0).unwrap();
    let decodes = decode_holdout(&model, &data).unwrap();
    assert_eq!(decodes.len(), data.holdout.len());
    fpa(&[decodes], CandidateRule::Hierar, &data).unwrap();
}

/// Two-sided tail of Student's t with integer `df`, from the closed-form
/// finite series in `theta = atan(t / sqrt(df))`.
fn t_two_sided_p(t: f64, df: usize) -> f64 {
    let theta = (t.abs() / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    let inside = if df % 2 == 1 {
        let mut sum = 0.0;
        let mut term = 1.0;
        let mut k = 1;
        while k + 2 <= df {
            sum += term;
            term *= c2 * (k + 1) as f64 / (k + 2) as f64;
            k += 2;
        }
        let series = if df == 1 { 0.0 } else { s * c * sum };
        2.0 / std::f64::consts::PI * (theta + series)
    } else {
        let mut sum = 0.0;
        let mut term = 1.0;
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

fn textbook_t(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    (t, t_two_sided_p(t, a.len() - 1))
}

#[test]
fn t_oracle_reproduces_table_values() {
    // Two-sided 5% critical values.
    assert_relative_eq!(t_two_sided_p(12.706204736, 1), 0.05, max_relative = 1e-8);
    assert_relative_eq!(t_two_sided_p(4.302652730, 2), 0.05, max_relative = 1e-8);
    assert_relative_eq!(t_two_sided_p(2.228138852, 10), 0.05, max_relative = 1e-8);
}

#[test]
fn paired_t_test_matches_textbook_formula() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 2.0, 4.0, 4.0, 6.0];
    let r = paired_t_test(&a, &b).unwrap();
    let (t, p) = textbook_t(&a, &b);
    assert_eq!(r.df, 4);
    assert!(!r.zero_variance);
    assert!((r.t - t).abs() < 1e-10 && (r.p - p).abs() < 1e-10, "{r:?} vs {t} {p}");
    // mean difference -0.6, sd sqrt(0.3)
    assert_relative_eq!(r.t, -0.6 / (0.3f64.sqrt() / 5f64.sqrt()), max_relative = 1e-12);
}

#[test]
fn paired_t_test_edge_cases() {
    let a = [0.5, 1.5, 2.5];
    let r = paired_t_test(&a, &a).unwrap();
    assert_eq!((r.t, r.p, r.zero_variance), (0.0, 1.0, true));
    let shifted: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
    let r = paired_t_test(&shifted, &a).unwrap();
    assert!(r.zero_variance && r.t == f64::INFINITY && r.p == 0.0);
    assert!(paired_t_test(&[1.0], &[2.0]).is_err());
    assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
}

#[test]
fn confidence_half_width_examples() {
    assert_eq!(confidence_half_width(&[3.0, 3.0, 3.0], 0.9).unwrap(), 0.0);
    assert_eq!(confidence_half_width(&[3.0], 0.9).unwrap(), 0.0);
    // t quantile 0.95 with 2 degrees of freedom is 2.919985580.
    let w = confidence_half_width(&[1.0, 2.0, 3.0], 0.9).unwrap();
    assert_relative_eq!(w, 2.919985580 / 3f64.sqrt(), max_relative = 1e-8);
}

proptest! {
    #[test]
    fn paired_t_test_agrees_with_oracle(
        pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..40),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = paired_t_test(&a, &b).unwrap();
        let (t, p) = textbook_t(&a, &b);
        prop_assert!((r.t - t).abs() <= 1e-10 * t.abs().max(1.0));
        prop_assert!((r.p - p).abs() < 1e-10, "{} vs {}", r.p, p);
    }
}
