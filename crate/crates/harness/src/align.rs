//! Alignment heatmaps against the ground-truth transcript: Viterbi path masks
//! and node posteriors for CTC and RNN-T, attention weights for attention.
//!
//! Matrices are written label-major (one row per label state, one column per
//! encoder step) as CSV and as 8-bit binary PGM.

use std::path::{Path, PathBuf};

use transduce_core::decoders::StepScorer;
use transduce_core::losses::{
    best_alignment, ctc_state_posteriors, joint_combine, rnnt_node_posteriors, AlignmentInput, AlignmentPath,
};
use transduce_core::network::{Model, ModelKind, Utterance};
use transduce_core::numerics::RealMatrix;
use transduce_core::{Error, Result};

/// One exported matrix and the files written for it.
#[derive(Clone, Debug)]
pub struct Heatmap {
    pub name: &'static str,
    pub matrix: RealMatrix,
    pub csv: PathBuf,
    pub pgm: PathBuf,
}

#[derive(Clone, Debug)]
pub struct AlignmentExport {
    pub kind: ModelKind,
    /// Encoder steps `T'`.
    pub frames: usize,
    pub labels: Vec<usize>,
    pub path: AlignmentPath,
    pub heatmaps: Vec<Heatmap>,
}

impl AlignmentExport {
    pub fn heatmap(&self, name: &str) -> Option<&Heatmap> {
        self.heatmaps.iter().find(|h| h.name == name)
    }
}

fn transpose(m: &RealMatrix) -> RealMatrix {
    let mut out = RealMatrix::zeros(m.cols(), m.rows());
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            out.set(c, r, m.get(r, c));
        }
    }
    out
}

/// Label-major matrices for `utt`, without touching the filesystem.
pub fn alignment_matrices(model: &Model, utt: &Utterance) -> Result<(AlignmentPath, Vec<(&'static str, RealMatrix)>)> {
    if utt.reference.is_empty() {
        return Err(Error::Config(format!("utterance {} has an empty reference", utt.id)));
    }
    let labels = model.labels(&utt.reference)?;
    let h = model.encode(&utt.frames)?;
    let frames = h.rows();
    match model.kind() {
        ModelKind::Ctc => {
            let logits = model.ctc_logits(&h)?;
            let path = best_alignment(AlignmentInput::Ctc(&logits), &labels)?;
            let AlignmentPath::Ctc { states, .. } = &path else { unreachable!("ctc input gives a ctc path") };
            let mut mask = RealMatrix::zeros(2 * labels.len() + 1, frames);
            for (t, &s) in states.iter().enumerate() {
                mask.set(s, t, 1.0);
            }
            let post = transpose(&ctc_state_posteriors(&logits, &labels)?);
            Ok((path, vec![("path", mask), ("posterior", post)]))
        }
        ModelKind::Rnnt => {
            let joint = joint_combine(&model.rnnt_frames(&h)?, &model.prediction_outputs(&labels)?)?;
            let path = best_alignment(AlignmentInput::Rnnt(&joint), &labels)?;
            let AlignmentPath::Rnnt { steps, .. } = &path else { unreachable!("rnnt input gives an rnnt path") };
            let mut mask = RealMatrix::zeros(labels.len() + 1, frames);
            for s in steps {
                mask.set(s.u, s.t, 1.0);
            }
            let post = transpose(&rnnt_node_posteriors(&joint, &labels)?);
            Ok((path, vec![("path", mask), ("posterior", post)]))
        }
        ModelKind::Attention => {
            let scorer = model.attention_scorer(&h)?;
            let mut rows = Vec::with_capacity(labels.len());
            let (mut state, _) = scorer.start();
            for (u, &y) in labels.iter().enumerate() {
                rows.push(state.alpha.clone());
                if u + 1 < labels.len() {
                    state = scorer.step(&state, y).0;
                }
            }
            let weights = RealMatrix::from_rows(&rows)?;
            let path = best_alignment(AlignmentInput::Attention(&weights), &labels)?;
            Ok((path, vec![("alpha", weights)]))
        }
    }
}

pub fn matrix_csv(m: &RealMatrix) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in m.iter_rows() {
        w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii numbers")
}

/// Binary graymap, one pixel per cell; values are clamped to `[0, 1]` and
/// scaled to 0..=255.
pub fn matrix_pgm(m: &RealMatrix) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.cols(), m.rows()).into_bytes();
    out.extend(m.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Width and height from a binary PGM header, checking the pixel count.
pub fn pgm_dimensions(bytes: &[u8]) -> Result<(usize, usize)> {
    let bad = |why: &str| Error::Format(format!("pgm: {why}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not text"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    if bytes.len() != pos + 1 + w * h {
        return Err(bad("pixel count does not match the header"));
    }
    Ok((w, h))
}

/// Writes `<stem>.<name>.csv` and `<stem>.<name>.pgm` per matrix into `dir`.
pub fn export_alignment(model: &Model, utt: &Utterance, dir: &Path, stem: &str) -> Result<AlignmentExport> {
    let (path, mats) = alignment_matrices(model, utt).map_err(|e| e.for_utterance(&utt.id))?;
    std::fs::create_dir_all(dir)?;
    let mut heatmaps = Vec::new();
    let mut frames = 0;
    for (name, matrix) in mats {
        let csv = dir.join(format!("{stem}.{name}.csv"));
        let pgm = dir.join(format!("{stem}.{name}.pgm"));
        std::fs::write(&csv, matrix_csv(&matrix))?;
        std::fs::write(&pgm, matrix_pgm(&matrix))?;
        frames = matrix.cols();
        heatmaps.push(Heatmap { name, matrix, csv, pgm });
    }
    Ok(AlignmentExport { kind: model.kind(), frames, labels: model.labels(&utt.reference)?, path, heatmaps })
}
