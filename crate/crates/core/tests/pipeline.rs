use seqbias::learners::{init_learner, LearnerConfig, LearnerKind, Seq2SeqModel};
use seqbias::metrics::{decode_holdout, fpa, prequential_code_from, NeuralLearner, Prequential, TransmissionSchedule};
use seqbias::tasks::{format_example, parse_example, write_dump, CandidateRule, TaskInstance};
use seqbias::training::{train, TrainHyper};
use seqbias::Model;

fn tiny(kind: LearnerKind) -> LearnerConfig {
    let mut c = LearnerConfig::new(kind);
    c.hidden = 8;
    c.embedding = 4;
    c.heads = 2;
    c.dropout = 0.0;
    c
}

fn hyper(epochs: usize) -> TrainHyper {
    TrainHyper {
        epochs,
        warmup: epochs / 5,
        lr_peak: 1e-2,
        ..TrainHyper::default()
    }
}

#[test]
fn train_decode_and_code_one_task() {
    let data = TaskInstance::CountMem { l: 4 }.data().unwrap();
    let learner = NeuralLearner {
        init: init_learner::<f64>(&tiny(LearnerKind::Transformer), data.input_vocab.len(), data.output_vocab.len(), 9)
            .unwrap(),
        hyper: hyper(300),
        seed: 9,
    };
    let fitted = learner.fit(&data.train).unwrap();
    assert!(fitted.success, "loss {}", fitted.final_loss);
    let decodes = decode_holdout(&fitted.model, &data).unwrap();
    assert_eq!(decodes.len(), data.holdout.len());
    let count = fpa(std::slice::from_ref(&decodes), CandidateRule::Count, &data).unwrap();
    let mem = fpa(&[decodes], CandidateRule::Mem, &data).unwrap();
    // A learner that fits the single train example agrees with at most one rule.
    assert!(count.agreeing + mem.agreeing <= 1);

    for rule in [CandidateRule::Count, CandidateRule::Mem] {
        let schedule = TransmissionSchedule::new(&data, rule, 1, 9).unwrap();
        let dl = prequential_code_from(&learner, &data, &schedule, &fitted).unwrap();
        assert_eq!(dl.steps.len(), data.holdout.len());
        assert!(dl.total.is_finite() && dl.total > 0.0);
        // Block 1 is coded by the train-only fit.
        let (i, first) = dl.steps[0].examples[0];
        let ex = data.labeled_holdout(rule).unwrap().into_iter().find(|(j, _)| *j == i).unwrap().1;
        assert_eq!(first, fitted.model.sequence_nll(&ex.input, &ex.output).unwrap());
    }
}

#[test]
fn f32_and_f64_models_agree_closely() {
    let data = TaskInstance::HierLinear { d: 3 }.data().unwrap();
    for kind in LearnerKind::ALL {
        let config = tiny(kind);
        let a: Model = init_learner(&config, data.input_vocab.len(), data.output_vocab.len(), 4).unwrap();
        let b: Seq2SeqModel<f32> = init_learner(&config, data.input_vocab.len(), data.output_vocab.len(), 4).unwrap();
        let ex = &data.train[0];
        let (na, nb) = (a.sequence_nll(&ex.input, &ex.output).unwrap(), b.sequence_nll(&ex.input, &ex.output).unwrap());
        assert!((na - nb).abs() < 1e-4 * na.max(1.0), "{kind}: {na} vs {nb}");
    }
}

#[test]
fn checkpoint_preserves_predictions() {
    let data = TaskInstance::AddMul { l: 3 }.data().unwrap();
    let init: Model = init_learner(&tiny(LearnerKind::LstmAttention), data.input_vocab.len(), data.output_vocab.len(), 2)
        .unwrap();
    let trained = train(init, &data.train, &hyper(20), 2).unwrap().model;
    let mut buf = Vec::new();
    trained.save(&mut buf).unwrap();
    let loaded = Model::load(buf.as_slice()).unwrap();
    for x in &data.holdout {
        assert_eq!(loaded.greedy_decode(x, 12).unwrap(), trained.greedy_decode(x, 12).unwrap());
    }
    assert!(Model::load(&b"{}"[..]).is_err());
}

#[test]
fn dumped_examples_parse_back() {
    let data = TaskInstance::CompMem { n: 6, m: 2 }.data().unwrap();
    for ex in &data.train {
        let line = format_example(ex, &data.input_vocab, &data.output_vocab);
        assert_eq!(&parse_example(&line, &data.input_vocab, &data.output_vocab).unwrap(), ex);
    }
    let mut out = Vec::new();
    write_dump(&data, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.lines().any(|l| l == "# train"));
    assert!(parse_example("nope\tb <eos>", &data.input_vocab, &data.output_vocab).is_err());
}
