//! Decoder ablation: greedy, beam and beam+LM per model kind, plus the
//! attention length-normalization and coverage variants, stacked on the LM
//! row and in isolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use transduce_core::decoders::{DecodeConfig, Hypothesis};
use transduce_core::lm::NGramLM;
use transduce_core::network::{Model, ModelKind, Utterance};
use transduce_core::Result;

use crate::decode::{best, encode, search, DecodeMode, Encoded};
use crate::experiment::AblationGrid;
use crate::metrics::{wer_breakdown, MetricsReport};
use crate::report::{fmt_f, Table};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub kind: ModelKind,
    pub variant: String,
    pub mode: DecodeMode,
    pub config: DecodeConfig,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, kind: ModelKind, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.kind == kind && r.variant == variant)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "kind", "variant", "beam", "lm_weight", "word_bonus", "rescore_weight", "length_norm",
            "coverage_weight", "utterances", "ref_words", "wer", "subs", "ins", "dels", "cer",
        ]);
        for r in &self.rows {
            let c = &r.config;
            let m = &r.metrics;
            t.push(vec![
                r.kind.to_string(),
                r.variant.clone(),
                c.beam_width.to_string(),
                fmt_f(c.lm_weight),
                fmt_f(c.word_bonus),
                fmt_f(c.rescore_weight),
                fmt_f(c.length_norm),
                fmt_f(c.coverage_weight),
                m.utterances.to_string(),
                m.words.ref_len.to_string(),
                fmt_f(m.wer),
                fmt_f(m.subs),
                fmt_f(m.ins),
                fmt_f(m.dels),
                fmt_f(m.cer),
            ]);
        }
        t
    }
}

struct Prepared {
    reference: String,
    enc: Encoded,
}

fn prepare(model: &Model, utts: &[Utterance]) -> Result<Vec<Prepared>> {
    utts.par_iter()
        .map(|u| {
            let enc = encode(model, &u.frames).map_err(|e| e.for_utterance(&u.id))?;
            Ok(Prepared { reference: u.reference.clone(), enc })
        })
        .collect()
}

fn nbest_all(model: &Model, set: &[Prepared], mode: DecodeMode, cfg: &DecodeConfig, lm: Option<&NGramLM>) -> Result<Vec<Vec<Hypothesis>>> {
    set.par_iter().map(|p| search(model, &p.enc, mode, cfg, lm)).collect()
}

fn score(
    model: &Model,
    set: &[Prepared],
    nbest: &[Vec<Hypothesis>],
    mode: DecodeMode,
    cfg: &DecodeConfig,
    lm: Option<&NGramLM>,
) -> Result<MetricsReport> {
    let alphabet = &model.spec().alphabet;
    let hyps: Vec<String> =
        nbest.iter().map(|n| best(model, n.clone(), mode, cfg, lm).text(alphabet)).collect();
    let refs: Vec<&str> = set.iter().map(|p| p.reference.as_str()).collect();
    Ok(wer_breakdown(&refs, &hyps)?.with_echo(Some(cfg.clone()), None))
}

/// Evaluates one configuration end to end.
fn evaluate(model: &Model, set: &[Prepared], mode: DecodeMode, cfg: &DecodeConfig, lm: Option<&NGramLM>) -> Result<MetricsReport> {
    let nb = nbest_all(model, set, mode, cfg, lm)?;
    score(model, set, &nb, mode, cfg, lm)
}

/// Picks LM weights on `dev` (lowest WER; ties keep the earlier grid point)
/// and returns the tuned configuration.
fn tune(model: &Model, dev: &[Prepared], base: &DecodeConfig, grid: &AblationGrid, lm: &NGramLM) -> Result<DecodeConfig> {
    let mut best_cfg = base.clone();
    let mut best_wer = f64::INFINITY;
    let mut consider = |cfg: DecodeConfig, wer: f64| {
        if wer < best_wer {
            best_wer = wer;
            best_cfg = cfg;
        }
    };
    if model.kind() == ModelKind::Ctc {
        for &a in &grid.lm_weights {
            for &b in &grid.word_bonuses {
                let cfg = DecodeConfig { lm_weight: a, word_bonus: b, ..base.clone() };
                let m = evaluate(model, dev, DecodeMode::BeamLm, &cfg, Some(lm))?;
                consider(cfg, m.wer);
            }
        }
    } else {
        let nb = nbest_all(model, dev, DecodeMode::Beam, base, None)?;
        for &l in &grid.rescore_weights {
            let cfg = DecodeConfig { rescore_weight: l, ..base.clone() };
            let m = score(model, dev, &nb, DecodeMode::BeamLm, &cfg, Some(lm))?;
            consider(cfg, m.wer);
        }
    }
    Ok(best_cfg)
}

/// Runs the ablation for every `(kind, model)`; LM weights are tuned on
/// `dev` and all rows are scored on `test`.
pub fn run_decoder_ablation(
    models: &[(ModelKind, &Model)],
    lm: &NGramLM,
    dev: &[Utterance],
    test: &[Utterance],
    grid: &AblationGrid,
) -> Result<AblationReport> {
    let mut rows = Vec::new();
    let base = DecodeConfig {
        beam_width: grid.beam_width,
        max_output_len: grid.max_output_len,
        ..DecodeConfig::default()
    };
    let greedy_cfg = DecodeConfig { beam_width: 1, ..base.clone() };
    for &(kind, model) in models {
        let dev_p = prepare(model, dev)?;
        let test_p = prepare(model, test)?;
        let mut push = |variant: &str, mode: DecodeMode, cfg: DecodeConfig| -> Result<()> {
            let metrics = evaluate(model, &test_p, mode, &cfg, Some(lm))?;
            rows.push(AblationRow { kind, variant: variant.into(), mode, config: cfg, metrics });
            Ok(())
        };
        push("greedy", DecodeMode::Greedy, greedy_cfg.clone())?;
        push("beam", DecodeMode::Beam, base.clone())?;
        let tuned = tune(model, &dev_p, &base, grid, lm)?;
        push("beam+lm", DecodeMode::BeamLm, tuned.clone())?;
        if kind == ModelKind::Attention {
            let ln = DecodeConfig { length_norm: grid.length_norm, ..tuned.clone() };
            let cov = DecodeConfig { coverage_weight: grid.coverage_weight, ..ln.clone() };
            push("beam+lm+length_norm", DecodeMode::BeamLm, ln)?;
            push("beam+lm+length_norm+coverage", DecodeMode::BeamLm, cov)?;
            let ln_only = DecodeConfig { length_norm: grid.length_norm, ..base.clone() };
            let cov_only = DecodeConfig { coverage_weight: grid.coverage_weight, ..base.clone() };
            push("beam+length_norm", DecodeMode::Beam, ln_only)?;
            push("beam+coverage", DecodeMode::Beam, cov_only)?;
        }
    }
    Ok(AblationReport { rows })
}

/// Loads `<dir>/<kind>.model` for each kind, checking that the stored kind
/// matches the file name.
pub fn load_models(dir: &std::path::Path, kinds: &[ModelKind]) -> Result<Vec<Model>> {
    kinds
        .iter()
        .map(|&kind| {
            let path = dir.join(format!("{kind}.model"));
            if !path.is_file() {
                return Err(transduce_core::Error::Config(format!("missing {kind} model at {}", path.display())));
            }
            let model = Model::load(&path)?;
            if model.kind() != kind {
                return Err(transduce_core::Error::Config(format!(
                    "{} holds a {} model, expected {kind}",
                    path.display(),
                    model.kind()
                )));
            }
            Ok(model)
        })
        .collect()
}
