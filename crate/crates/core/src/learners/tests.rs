use proptest::prelude::*;

use super::*;

use crate::checks::small_config as small;

fn small_models(seed: u64) -> Vec<Seq2SeqModel<f64>> {
    LearnerKind::ALL
        .iter()
        .map(|&k| init_learner(&small(k), 4, 5, seed).unwrap())
        .collect()
}

#[test]
fn kind_names_round_trip() {
    for kind in LearnerKind::ALL {
        assert_eq!(kind.name().parse::<LearnerKind>().unwrap(), kind);
    }
    assert!(matches!("gru".parse::<LearnerKind>(), Err(Error::Config(_))));
    let json = serde_json::to_string(&LearnerKind::JointSourceTargetAttention).unwrap();
    assert_eq!(json, "\"joint-source-target-attention\"");
}

#[test]
fn config_defaults_and_validation() {
    let c = LearnerConfig::new(LearnerKind::Transformer);
    assert_eq!(
        (c.layers, c.hidden, c.embedding, c.heads, c.kernel, c.dropout),
        (1, 512, 16, 8, 3, 0.5)
    );
    let parsed: LearnerConfig = serde_json::from_str(r#"{"kind":"cnn"}"#).unwrap();
    assert_eq!(parsed, LearnerConfig::new(LearnerKind::Cnn));

    let mut bad = c.clone();
    bad.heads = 3;
    assert!(matches!(init_learner::<f64>(&bad, 3, 3, 0), Err(Error::Config(_))));
    let mut bad = c.clone();
    bad.hidden = 0;
    assert!(bad.validate().is_err());
    let mut bad = c;
    bad.dropout = 1.0;
    assert!(bad.validate().is_err());
}

#[test]
fn lstm_parameter_count_matches_shape_formula() {
    let config = LearnerConfig::new(LearnerKind::LstmNoAttention);
    let model = init_learner::<f64>(&config, 3, 3, 0).unwrap();
    let (e, h, vi, vo) = (16, 512, 3, 3);
    let embeddings = vi * e + (vo + 1) * e;
    let lstm = |input: usize| 4 * ((input + h) * h + h);
    let output = h * vo + vo;
    assert_eq!(model.parameter_count(), embeddings + lstm(e) + lstm(e) + output);
    assert_eq!(model.parameter_count(), 2_168_435);

    // Attention adds the joint projection, its bias, the score vector, the
    // value projection, and doubles the output projection's input.
    let att = init_learner::<f64>(&LearnerConfig::new(LearnerKind::LstmAttention), 3, 3, 0).unwrap();
    let extra = 2 * h * h + h + h + h * h + h * vo;
    assert_eq!(att.parameter_count(), model.parameter_count() + extra);
}

#[test]
fn same_seed_gives_identical_parameters() {
    for kind in LearnerKind::ALL {
        let a = init_learner::<f64>(&small(kind), 4, 5, 7).unwrap();
        let b = init_learner::<f64>(&small(kind), 4, 5, 7).unwrap();
        let c = init_learner::<f64>(&small(kind), 4, 5, 8).unwrap();
        let values = |m: &Seq2SeqModel<f64>| {
            m.params().iter().map(|(_, p)| p.value.clone()).collect::<Vec<_>>()
        };
        assert_eq!(values(&a), values(&b), "{kind}");
        assert_ne!(values(&a), values(&c), "{kind}");
    }
}

#[test]
fn scoring_rejects_bad_sequences() {
    let model = init_learner::<f64>(&small(LearnerKind::Transformer), 3, 3, 0).unwrap();
    assert!(matches!(
        model.teacher_forced_logprobs(&[1, 0], &[]),
        Err(Error::EmptySequence(_))
    ));
    assert!(matches!(
        model.teacher_forced_logprobs(&[1, 0], &[3, 0]),
        Err(Error::Token { side: "output", .. })
    ));
    assert!(matches!(
        model.teacher_forced_logprobs(&[5, 0], &[1, 0]),
        Err(Error::Token { side: "input", .. })
    ));
    assert!(model.greedy_decode(&[1, 0], 0).is_err());
}

#[test]
fn logprobs_sum_to_sequence_nll() {
    for model in small_models(3) {
        let (x, y) = ([1, 2, 3, 0], [4, 1, 0]);
        let lp = model.teacher_forced_logprobs(&x, &y).unwrap();
        assert_eq!(lp.len(), 3);
        let mut g = Graph::new();
        let nll = model.nll(&mut g, &x, &y).unwrap();
        let total: f64 = lp.iter().sum();
        assert!((g.value(nll).item() + total).abs() < 1e-12, "{}", model.kind());
        assert!((model.sequence_nll(&x, &y).unwrap() + total).abs() < 1e-12);
    }
}

#[test]
fn full_learner_losses_pass_gradient_check() {
    for seed in 0..5 {
        for kind in LearnerKind::ALL {
            let err = crate::checks::learner_gradient_error(kind, seed).unwrap();
            assert!(err < 1e-6, "{kind} seed {seed}: {err:e}");
        }
    }
}

#[test]
fn greedy_decode_agrees_with_teacher_forcing() {
    for seed in 0..3 {
        for model in small_models(seed) {
            let x = [1, 3, 2, 0];
            let d = model.greedy_decode(&x, 6).unwrap();
            assert!(d.tokens.len() <= 6);
            assert_eq!(d.truncated, d.tokens.last() != Some(&0));
            assert_eq!(model.greedy_decode(&x, 6).unwrap(), d);
            // Each emitted token is the argmax of the teacher-forced
            // distribution given the emitted prefix.
            let logp = model.teacher_forced_distributions(&x, &d.tokens).unwrap();
            for (t, &tok) in d.tokens.iter().enumerate() {
                let row = logp.row_slice(t);
                let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(row[tok] >= best - 1e-12, "{} position {t}", model.kind());
            }
        }
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    for model in small_models(11) {
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let back = Seq2SeqModel::<f64>::load(buf.as_slice()).unwrap();
        let x = [2, 1, 0];
        let y = [1, 4, 0];
        assert_eq!(
            model.teacher_forced_logprobs(&x, &y).unwrap(),
            back.teacher_forced_logprobs(&x, &y).unwrap()
        );
        assert_eq!(model.to_checkpoint(), back.to_checkpoint());
    }
}

#[test]
fn checkpoint_rejects_mismatched_shapes() {
    let model = init_learner::<f64>(&small(LearnerKind::Cnn), 4, 5, 0).unwrap();
    let mut ckpt = model.to_checkpoint();
    ckpt.params[0].shape = vec![1, 1];
    ckpt.params[0].values = vec![0.0];
    assert!(matches!(
        Seq2SeqModel::<f64>::from_checkpoint(&ckpt),
        Err(Error::Checkpoint(_))
    ));
    let mut ckpt = model.to_checkpoint();
    ckpt.version = 99;
    assert!(Seq2SeqModel::<f64>::from_checkpoint(&ckpt).is_err());
}

#[test]
fn single_precision_models_agree_with_double() {
    let config = small(LearnerKind::LstmAttention);
    let m64 = init_learner::<f64>(&config, 4, 5, 1).unwrap();
    let m32 = init_learner::<f32>(&config, 4, 5, 1).unwrap();
    let a = m64.teacher_forced_logprobs(&[1, 2, 0], &[3, 0]).unwrap();
    let b = m32.teacher_forced_logprobs(&[1, 2, 0], &[3, 0]).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-4);
    }
}

fn sequence(vocab: usize, max: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..vocab, 0..max).prop_map(|mut v| {
        v.push(0);
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distributions_are_normalized(
        kind in prop::sample::select(LearnerKind::ALL.to_vec()),
        seed in 0u64..1000,
        x in sequence(4, 6),
        y in sequence(5, 6),
    ) {
        let model = init_learner::<f64>(&small(kind), 4, 5, seed).unwrap();
        let logp = model.teacher_forced_distributions(&x, &y).unwrap();
        for r in 0..logp.rows() {
            let total: f64 = logp.row_slice(r).iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
        for v in model.teacher_forced_logprobs(&x, &y).unwrap() {
            prop_assert!(v.is_finite() && v <= 0.0);
        }
    }

    #[test]
    fn later_targets_never_change_earlier_positions(
        kind in prop::sample::select(LearnerKind::ALL.to_vec()),
        seed in 0u64..1000,
        x in sequence(4, 5),
        y in sequence(5, 6),
        t in 0usize..6,
        replacement in 0usize..5,
    ) {
        let model = init_learner::<f64>(&small(kind), 4, 5, seed).unwrap();
        let t = t % y.len();
        let mut y2 = y.clone();
        y2[t] = replacement;
        let a = model.teacher_forced_distributions(&x, &y).unwrap();
        let b = model.teacher_forced_distributions(&x, &y2).unwrap();
        // Position t's distribution conditions on y_<t only.
        for r in 0..=t {
            prop_assert_eq!(a.row_slice(r), b.row_slice(r));
        }
    }
}




