//! Multi-run experiments: encoder downsampling sweep and the forward-only
//! versus bidirectional comparison.

use transduce_core::decoders::DecodeConfig;
use transduce_core::network::{Model, ModelKind, ModelSpec};
use transduce_core::Result;

use crate::data::Dataset;
use crate::decode::{decode_set, DecodeMode};
use crate::experiment::{train_model, ExperimentConfig, ModelConfig};
use crate::metrics::{wer_breakdown, MetricsReport};
use crate::report::{fmt_f, Table};

fn greedy_report(model: &Model, set: &[transduce_core::network::Utterance], max_output_len: usize) -> Result<MetricsReport> {
    let cfg = DecodeConfig { beam_width: 1, max_output_len, ..DecodeConfig::default() };
    let out = decode_set(model, set, DecodeMode::Greedy, &cfg, None)?;
    let refs: Vec<&str> = out.iter().map(|d| d.reference.as_str()).collect();
    let hyps: Vec<&str> = out.iter().map(|d| d.hypothesis.as_str()).collect();
    wer_breakdown(&refs, &hyps)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub kind: ModelKind,
    pub factor: usize,
    pub seed: u64,
    pub frames_per_step: usize,
    pub trained_on: usize,
    /// CTC-infeasible training utterances left out at this factor.
    pub dropped: usize,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Mean dev WER over seeds.
    pub fn mean_wer(&self, kind: ModelKind, factor: usize) -> Option<f64> {
        let w: Vec<f64> =
            self.rows.iter().filter(|r| r.kind == kind && r.factor == factor).map(|r| r.metrics.wer).collect();
        (!w.is_empty()).then(|| w.iter().sum::<f64>() / w.len() as f64)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "kind", "factor", "seed", "frames_per_step", "trained_on", "dropped", "utterances", "wer", "subs", "ins",
            "dels", "cer",
        ]);
        for r in &self.rows {
            let m = &r.metrics;
            t.push(vec![
                r.kind.to_string(),
                r.factor.to_string(),
                r.seed.to_string(),
                r.frames_per_step.to_string(),
                r.trained_on.to_string(),
                r.dropped.to_string(),
                m.utterances.to_string(),
                fmt_f(m.wer),
                fmt_f(m.subs),
                fmt_f(m.ins),
                fmt_f(m.dels),
                fmt_f(m.cer),
            ]);
        }
        t
    }

    /// Seed-averaged WER per `(kind, factor)`, ready for plotting.
    pub fn summary(&self) -> Table {
        let mut t = Table::new(&["kind", "factor", "seeds", "mean_wer"]);
        let mut keys: Vec<(ModelKind, usize)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(r.kind, r.factor)) {
                keys.push((r.kind, r.factor));
            }
        }
        for (kind, factor) in keys {
            let seeds = self.rows.iter().filter(|r| r.kind == kind && r.factor == factor).count();
            let mean = self.mean_wer(kind, factor).unwrap_or(f64::NAN);
            t.push(vec![kind.to_string(), factor.to_string(), seeds.to_string(), fmt_f(mean)]);
        }
        t
    }
}

/// Trains every configured kind at every total downsampling factor and seed
/// under the sweep budget, then decodes the dev set greedily. Sweep seeds are
/// offsets from the experiment seed.
pub fn run_downsample_sweep(cfg: &ExperimentConfig, data: &Dataset) -> Result<SweepReport> {
    let sweep = &cfg.sweep;
    let train_set = sweep.budget.train_set(&data.train);
    let mut rows = Vec::new();
    for &kind in &sweep.kinds {
        let tc = sweep.budget.apply(cfg.train.for_kind(kind));
        for &factor in &sweep.factors {
            let spec = ModelConfig { downsample: factor, ..cfg.model.clone() }.spec(kind, &cfg.data);
            for &seed in &sweep.seeds {
                let trained = train_model(spec.clone(), train_set, &tc, cfg.seed.wrapping_add(seed))?;
                let metrics = greedy_report(&trained.model, &data.dev, cfg.decode.max_output_len)?;
                rows.push(SweepRow {
                    kind,
                    factor,
                    seed,
                    frames_per_step: trained.model.frames_per_step(),
                    trained_on: train_set.len() - trained.dropped,
                    dropped: trained.dropped,
                    metrics,
                });
            }
        }
    }
    Ok(SweepReport { rows })
}

pub fn parameter_count(spec: &ModelSpec) -> Result<usize> {
    Ok(Model::layout_for(spec)?.total())
}

/// Forward-only width whose total parameter count is closest to `bi`
/// (smallest width on ties).
pub fn parity_width(bi: &ModelSpec) -> Result<usize> {
    let target = parameter_count(bi)? as i64;
    let widest = bi.encoder.iter().map(|l| l.width).max().unwrap_or(1).max(1) * 4;
    let mut best = (i64::MAX, 1);
    for w in 1..=widest {
        let d = (parameter_count(&bi.forward_only(w))? as i64 - target).abs();
        if d < best.0 {
            best = (d, w);
        }
    }
    Ok(best.1)
}

/// Largest relative parameter-count difference accepted as a matched pair.
pub const PARITY_TOLERANCE: f64 = 0.15;

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOnlyRow {
    pub kind: ModelKind,
    pub bidirectional_width: usize,
    pub forward_width: usize,
    pub bidirectional_params: usize,
    pub forward_params: usize,
    pub bidirectional: MetricsReport,
    pub forward: MetricsReport,
}

impl ForwardOnlyRow {
    pub fn param_ratio(&self) -> f64 {
        self.forward_params as f64 / self.bidirectional_params as f64
    }

    pub fn parity(&self) -> bool {
        (self.param_ratio() - 1.0).abs() <= PARITY_TOLERANCE
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForwardOnlyReport {
    pub rows: Vec<ForwardOnlyRow>,
}

impl ForwardOnlyReport {
    pub fn row(&self, kind: ModelKind) -> Option<&ForwardOnlyRow> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "kind", "bi_width", "fwd_width", "bi_params", "fwd_params", "param_ratio", "parity", "bi_wer", "fwd_wer",
            "bi_cer", "fwd_cer",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.kind.to_string(),
                r.bidirectional_width.to_string(),
                r.forward_width.to_string(),
                r.bidirectional_params.to_string(),
                r.forward_params.to_string(),
                fmt_f(r.param_ratio()),
                r.parity().to_string(),
                fmt_f(r.bidirectional.wer),
                fmt_f(r.forward.wer),
                fmt_f(r.bidirectional.cer),
                fmt_f(r.forward.cer),
            ]);
        }
        t
    }
}

/// Trains bidirectional and forward-only encoders for each configured kind
/// with the same budget and the experiment seed, and scores both on the
/// test set.
pub fn run_forward_only(cfg: &ExperimentConfig, data: &Dataset) -> Result<ForwardOnlyReport> {
    let seed = cfg.seed;
    let fo = &cfg.forward_only;
    let train_set = fo.budget.train_set(&data.train);
    let mut rows = Vec::new();
    for &kind in &fo.kinds {
        let tc = fo.budget.apply(cfg.train.for_kind(kind));
        let bi = cfg.model.spec(kind, &cfg.data);
        let width = if fo.width == 0 { parity_width(&bi)? } else { fo.width };
        let fwd = bi.forward_only(width);
        let bi_model = train_model(bi.clone(), train_set, &tc, seed)?.model;
        let fwd_model = train_model(fwd.clone(), train_set, &tc, seed)?.model;
        rows.push(ForwardOnlyRow {
            kind,
            bidirectional_width: cfg.model.width,
            forward_width: width,
            bidirectional_params: parameter_count(&bi)?,
            forward_params: parameter_count(&fwd)?,
            bidirectional: greedy_report(&bi_model, &data.test, cfg.decode.max_output_len)?,
            forward: greedy_report(&fwd_model, &data.test, cfg.decode.max_output_len)?,
        });
    }
    Ok(ForwardOnlyReport { rows })
}
