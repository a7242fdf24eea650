use std::collections::HashMap;
use std::process::Command;

use transduce_core::decoders::DecodeConfig;
use transduce_core::network::{Model, ModelKind, TrainConfig};
use transduce_core::numerics::SeededRng;
use transduce_harness::ablation::{load_models, run_decoder_ablation};
use transduce_harness::align::{export_alignment, pgm_dimensions};
use transduce_harness::data::{generate_dataset, read_dataset, write_dataset, SyntheticSpec};
use transduce_harness::experiment::{train_model, Budget, ExperimentConfig};
use transduce_harness::metrics::{edit_counts, wer_breakdown};
use transduce_harness::sweep::{run_downsample_sweep, run_forward_only};

/// Plain recursive edit distance, memoized on suffix positions.
fn edit_distance(a: &[&str], b: &[&str], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len() + b.len();
    }
    let key = (a.len(), b.len());
    if let Some(&d) = memo.get(&key) {
        return d;
    }
    let sub = edit_distance(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
    let del = edit_distance(&a[1..], b, memo) + 1;
    let ins = edit_distance(a, &b[1..], memo) + 1;
    let d = sub.min(del).min(ins);
    memo.insert(key, d);
    d
}

fn random_words(rng: &mut SeededRng) -> Vec<&'static str> {
    const WORDS: [&str; 4] = ["ab", "ba", "c", "abc"];
    (0..rng.below(9)).map(|_| WORDS[rng.below(WORDS.len())]).collect()
}

#[test]
fn edit_counts_match_recursive_distance() {
    let mut rng = SeededRng::new(17);
    for _ in 0..500 {
        let r = random_words(&mut rng);
        let h = random_words(&mut rng);
        let c = edit_counts(&r, &h);
        assert_eq!(c.errors(), edit_distance(&r, &h, &mut HashMap::new()), "{r:?} / {h:?}");
        assert_eq!(c.ref_len, r.len());
        let m = wer_breakdown(&[r.join(" ")], &[h.join(" ")]).unwrap();
        assert!((m.wer - (m.subs + m.ins + m.dels)).abs() < 1e-9);
    }
}

#[test]
fn mismatched_lists_are_rejected() {
    assert!(wer_breakdown(&["a"], &[] as &[&str]).is_err());
}

fn tiny_spec() -> SyntheticSpec {
    SyntheticSpec { train_utterances: 30, dev_utterances: 8, test_utterances: 8, lm_sentences: 100, ..Default::default() }
}

#[test]
fn noiseless_frames_are_separable() {
    let spec = SyntheticSpec {
        noise: 0.0,
        min_frames: 1,
        max_frames: 1,
        silence_prob: 0.0,
        ..tiny_spec()
    };
    let data = generate_dataset(&spec).unwrap();
    // Prototype table learned from the training frames, one frame per symbol.
    let mut protos: Vec<(Vec<f64>, char)> = Vec::new();
    for u in &data.train {
        for (row, c) in u.frames.iter_rows().zip(u.reference.chars()) {
            if !protos.iter().any(|(_, p)| *p == c) {
                protos.push((row.to_vec(), c));
            }
        }
    }
    let refs: Vec<&str> = data.test.iter().map(|u| u.reference.as_str()).collect();
    let hyps: Vec<String> = data
        .test
        .iter()
        .map(|u| {
            u.frames
                .iter_rows()
                .map(|row| {
                    let d = |p: &[f64]| p.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                    protos.iter().min_by(|a, b| d(&a.0).total_cmp(&d(&b.0))).unwrap().1
                })
                .collect()
        })
        .collect();
    assert_eq!(wer_breakdown(&refs, &hyps).unwrap().cer, 0.0);
}

#[test]
fn all_noise_references_are_empty() {
    let data = generate_dataset(&SyntheticSpec { noise_fraction: 1.0, ..tiny_spec() }).unwrap();
    assert!(data.train.iter().chain(&data.dev).chain(&data.test).all(|u| u.reference.is_empty() && u.frames.rows() > 0));
}

#[test]
fn dataset_files_are_reproducible() {
    let spec = tiny_spec();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_dataset(a.path(), &generate_dataset(&spec).unwrap()).unwrap();
    write_dataset(b.path(), &generate_dataset(&spec).unwrap()).unwrap();
    for f in ["train.tsv", "dev.tsv", "test.tsv", "lm_corpus.txt"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let back = read_dataset(a.path()).unwrap();
    let orig = generate_dataset(&spec).unwrap();
    assert_eq!(back.test.len(), orig.test.len());
    assert_eq!(back.test[0].frames, orig.test[0].frames);
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig { data: tiny_spec(), ..Default::default() };
    cfg.model.width = 6;
    cfg.model.decoder_width = 6;
    cfg.model.embedding = 4;
    cfg.model.attention.dim = 6;
    for t in [&mut cfg.train.ctc, &mut cfg.train.rnnt, &mut cfg.train.attention] {
        *t = TrainConfig { epochs: 2, batch: 4, lr: 0.01, ..Default::default() };
    }
    cfg.decode.beam_width = 4;
    cfg.decode.max_output_len = 30;
    cfg
}

#[test]
fn ablation_rows_and_zero_weight_rescoring() {
    let cfg = tiny_config();
    let data = generate_dataset(&cfg.data).unwrap();
    let lm = cfg.train_lm(&data.lm_corpus).unwrap();
    let models: Vec<Model> = ModelKind::ALL
        .iter()
        .map(|&k| train_model(cfg.model.spec(k, &cfg.data), &data.train, cfg.train.for_kind(k), 1).unwrap().model)
        .collect();
    let pairs: Vec<(ModelKind, &Model)> = models.iter().map(|m| (m.kind(), m)).collect();
    let mut grid = cfg.decode.clone();
    grid.rescore_weights = vec![0.0];
    let report = run_decoder_ablation(&pairs, &lm, &data.dev, &data.test, &grid).unwrap();
    assert_eq!(report.rows.len(), 3 + 3 + 7);
    for kind in [ModelKind::Rnnt, ModelKind::Attention] {
        let beam = &report.row(kind, "beam").unwrap().metrics;
        let rescored = &report.row(kind, "beam+lm").unwrap().metrics;
        assert_eq!(beam.words, rescored.words, "{kind}");
    }
    let csv = report.table().to_csv();
    assert_eq!(csv.lines().count(), 1 + report.rows.len());

    let dir = tempfile::tempdir().unwrap();
    assert!(load_models(dir.path(), &ModelKind::ALL).is_err());
    for m in &models {
        m.save(&dir.path().join(format!("{}.model", m.kind()))).unwrap();
    }
    assert_eq!(load_models(dir.path(), &ModelKind::ALL).unwrap().len(), 3);

    for m in &models {
        let u = data.test.iter().find(|u| !u.reference.is_empty()).unwrap();
        let out = export_alignment(m, u, dir.path(), "a").unwrap();
        for h in &out.heatmaps {
            let (w, hgt) = pgm_dimensions(&std::fs::read(&h.pgm).unwrap()).unwrap();
            assert_eq!((hgt, w), (h.matrix.rows(), h.matrix.cols()));
        }
    }
    let empty = transduce_core::network::Utterance { reference: String::new(), ..data.test[0].clone() };
    assert!(export_alignment(&models[0], &empty, dir.path(), "e").is_err());
}

#[test]
fn sweep_and_forward_only_fill_every_cell() {
    let mut cfg = tiny_config();
    cfg.train.ctc.epochs = 1;
    cfg.train.rnnt.epochs = 1;
    cfg.train.attention.epochs = 1;
    cfg.sweep.seeds = vec![1];
    cfg.sweep.budget = Budget { train_utterances: 10, epoch_scale: 1.0 };
    let data = generate_dataset(&cfg.data).unwrap();
    let sweep = run_downsample_sweep(&cfg, &data).unwrap();
    for kind in ModelKind::ALL {
        for f in [1, 2, 4, 8] {
            let row = sweep.rows.iter().find(|r| r.kind == kind && r.factor == f).unwrap();
            assert_eq!(row.frames_per_step, f);
            assert_eq!(row.trained_on + row.dropped, 10);
        }
    }
    assert!(sweep.rows.iter().any(|r| r.kind == ModelKind::Ctc && r.factor == 8 && r.dropped > 0));

    cfg.forward_only.budget = Budget { train_utterances: 10, epoch_scale: 1.0 };
    let fo = run_forward_only(&cfg, &data).unwrap();
    assert_eq!(fo.rows.len(), 3);
    for r in &fo.rows {
        assert!(r.parity(), "{}: ratio {}", r.kind, r.param_ratio());
        assert_eq!(r.bidirectional.utterances, data.test.len());
        assert_eq!(r.forward.utterances, data.test.len());
    }
    assert_eq!(fo.table().rows.len(), 3);
}

#[test]
fn default_decode_config_searches_without_lm() {
    let c = DecodeConfig::default();
    assert_eq!((c.lm_weight, c.word_bonus, c.rescore_weight, c.length_norm, c.coverage_weight), (0.0, 0.0, 0.0, 0.0, 0.0));
}

#[test]
fn checked_in_config_is_valid() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/experiment.toml");
    ExperimentConfig::load(&path).unwrap();
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_transduce")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_string_lossy().into_owned();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[data]\nmin_frames = 0\n").unwrap();
    let out = cli(&["gen-data", "--config", &cfg.to_string_lossy(), "--out-dir", &d]);
    assert_eq!(out.status.code(), Some(2));
    let out = cli(&["ablate", "--data-dir", &d, "--model-dir", &d, "--lm", &d, "--out-dir", &d]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    let small = dir.path().join("small.toml");
    std::fs::write(&small, "[data]\ntrain_utterances = 4\ndev_utterances = 2\ntest_utterances = 2\nlm_sentences = 10\n").unwrap();
    let s = small.to_string_lossy().into_owned();
    let data = dir.path().join("data").to_string_lossy().into_owned();
    assert!(cli(&["gen-data", "--config", &s, "--out-dir", &data, "--seed", "3"]).status.success());
    let out = cli(&["train", "--config", &s, "--kind", "ctc", "--data-dir", &data, "--out-dir", &d, "--lr", "1e300", "--optimizer", "sgd", "--clip-norm", "1e300", "--epochs", "3", "--batch", "1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
