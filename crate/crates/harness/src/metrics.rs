//! Word and character error rates with a substitution/insertion/deletion
//! breakdown.

use serde::{Deserialize, Serialize};
use transduce_core::decoders::DecodeConfig;
use transduce_core::{Error, Result};

/// Edit operations of one minimum-cost alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub subs: usize,
    pub ins: usize,
    pub dels: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.subs + self.ins + self.dels
    }

    fn add(&mut self, o: EditCounts) {
        self.subs += o.subs;
        self.ins += o.ins;
        self.dels += o.dels;
        self.ref_len += o.ref_len;
    }
}

/// Levenshtein alignment with unit costs. The backtrace (from the end)
/// prefers substitution or match, then deletion, then insertion.
pub fn edit_counts<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut c = EditCounts { ref_len: n, ..Default::default() };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let miss = usize::from(reference[i - 1] != hyp[j - 1]);
            if here == d[(i - 1) * w + j - 1] + miss {
                c.subs += miss;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            c.dels += 1;
            i -= 1;
        } else {
            c.ins += 1;
            j -= 1;
        }
    }
    c
}

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Aggregate error rates in percent of the reference length.
///
/// Each rate is `100 * count / max(reference length, 1)`; the integer counts
/// are kept so that `errors = subs + ins + dels` holds exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub wer: f64,
    pub cer: f64,
    pub subs: f64,
    pub ins: f64,
    pub dels: f64,
    pub utterances: usize,
    pub words: EditCounts,
    pub chars: EditCounts,
    pub decode: Option<DecodeConfig>,
    pub seed: Option<u64>,
}

fn pct(count: usize, total: usize) -> f64 {
    100.0 * count as f64 / total.max(1) as f64
}

impl MetricsReport {
    pub fn from_counts(words: EditCounts, chars: EditCounts, utterances: usize) -> Self {
        let n = words.ref_len;
        Self {
            wer: pct(words.errors(), n),
            cer: pct(chars.errors(), chars.ref_len),
            subs: pct(words.subs, n),
            ins: pct(words.ins, n),
            dels: pct(words.dels, n),
            utterances,
            words,
            chars,
            decode: None,
            seed: None,
        }
    }

    pub fn with_echo(mut self, decode: Option<DecodeConfig>, seed: Option<u64>) -> Self {
        self.decode = decode;
        self.seed = seed;
        self
    }
}

pub fn wer_breakdown<R: AsRef<str>, H: AsRef<str>>(refs: &[R], hyps: &[H]) -> Result<MetricsReport> {
    if refs.len() != hyps.len() {
        return Err(Error::Shape(format!("{} references but {} hypotheses", refs.len(), hyps.len())));
    }
    let mut w = EditCounts::default();
    let mut c = EditCounts::default();
    for (r, h) in refs.iter().zip(hyps) {
        let (r, h) = (r.as_ref(), h.as_ref());
        w.add(edit_counts(&words(r), &words(h)));
        let rc: Vec<char> = r.chars().collect();
        let hc: Vec<char> = h.chars().collect();
        c.add(edit_counts(&rc, &hc));
    }
    Ok(MetricsReport::from_counts(w, c, refs.len()))
}
