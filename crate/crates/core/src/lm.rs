//! Character n-gram language model with add-k smoothing and backoff.
//!
//! A context that was never observed in training is shortened from the left
//! until a seen one is found; the empty context always exists. Symbols that
//! are not in the vocabulary get the smoothed floor `k / (N_ctx + k|V|)`.
//!
//! On-disk format (UTF-8, LF-terminated):
//!
//! ```text
//! transduce-ngram 1
//! order 4
//! k 0.1
//! vocab 61 62 20
//! entries 123
//! <context> <symbol> <count>
//! ```
//!
//! `vocab` lists symbol code points in hex, in id order. Ids `0..n` are the
//! symbols, `n` is sentence end, `n + 1` is sentence start (context only).
//! Contexts are dot-joined ids, `.` for the empty context.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "transduce-ngram";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_ORDER: usize = 4;
pub const MAX_ORDER: usize = 6;

/// Token id inside the LM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LmToken(u32);

#[derive(Clone, Debug, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<u32, u64>,
}

/// Scoring state: the last `order - 1` tokens.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LmState {
    history: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NGramLM {
    order: usize,
    k: f64,
    vocab: Vec<char>,
    index: HashMap<char, u32>,
    counts: BTreeMap<Vec<u32>, ContextCounts>,
}

/// Train on `corpus` with the vocabulary drawn from the corpus itself.
pub fn train_ngram<S: AsRef<str>>(corpus: &[S], order: usize, k: f64) -> Result<NGramLM> {
    train_ngram_with_symbols(corpus, order, k, &[])
}

/// Train on `corpus`, adding `extra_symbols` to the vocabulary even if they
/// never occur.
pub fn train_ngram_with_symbols<S: AsRef<str>>(
    corpus: &[S],
    order: usize,
    k: f64,
    extra_symbols: &[char],
) -> Result<NGramLM> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::Config(format!("n-gram order must be in 1..={MAX_ORDER}, got {order}")));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Config(format!("smoothing constant must be positive, got {k}")));
    }
    let mut vocab: Vec<char> = corpus
        .iter()
        .flat_map(|l| l.as_ref().chars())
        .chain(extra_symbols.iter().copied())
        .collect();
    vocab.sort_unstable();
    vocab.dedup();
    if let Some(c) = vocab.iter().find(|c| c.is_control()) {
        return Err(Error::Config(format!("control character {c:?} in LM corpus")));
    }
    let mut lm = NGramLM::empty(order, k, vocab);
    for line in corpus {
        lm.add_sentence(line.as_ref());
    }
    Ok(lm)
}

impl NGramLM {
    fn empty(order: usize, k: f64, vocab: Vec<char>) -> Self {
        let index = vocab.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect();
        Self { order, k, vocab, index, counts: BTreeMap::new() }
    }

    fn add_sentence(&mut self, text: &str) {
        let mut tokens = vec![self.bos(); self.order - 1];
        tokens.extend(text.chars().map(|c| self.token(c).0));
        tokens.push(self.eos());
        for i in self.order - 1..tokens.len() {
            let target = tokens[i];
            for c in 0..self.order {
                let entry = self.counts.entry(tokens[i - c..i].to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(target).or_default() += 1;
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    pub fn vocab(&self) -> &[char] {
        &self.vocab
    }

    /// Size of the predicted vocabulary: symbols plus sentence end.
    pub fn predicted_size(&self) -> usize {
        self.vocab.len() + 1
    }

    fn eos(&self) -> u32 {
        self.vocab.len() as u32
    }

    fn bos(&self) -> u32 {
        self.vocab.len() as u32 + 1
    }

    fn unk(&self) -> u32 {
        self.vocab.len() as u32 + 2
    }

    /// Token for a symbol; unknown symbols map to a shared out-of-vocabulary id.
    pub fn token(&self, c: char) -> LmToken {
        LmToken(self.index.get(&c).copied().unwrap_or_else(|| self.unk()))
    }

    pub fn end_token(&self) -> LmToken {
        LmToken(self.eos())
    }

    pub fn start(&self) -> LmState {
        LmState { history: vec![self.bos(); self.order - 1] }
    }

    /// `log P(token | state)`.
    pub fn log_prob(&self, state: &LmState, token: LmToken) -> f64 {
        let denom_extra = self.k * self.predicted_size() as f64;
        let h = &state.history;
        for c in (0..self.order).rev() {
            if let Some(counts) = self.counts.get(&h[h.len() - c..]) {
                let hits = counts.next.get(&token.0).copied().unwrap_or(0) as f64;
                return ((hits + self.k) / (counts.total as f64 + denom_extra)).ln();
            }
        }
        unreachable!("the empty context is populated by every training sentence")
    }

    pub fn advance_token(&self, state: &LmState, token: LmToken) -> (LmState, f64) {
        let lp = self.log_prob(state, token);
        let mut history = state.history.clone();
        if !history.is_empty() {
            history.remove(0);
            history.push(token.0);
        }
        (LmState { history }, lp)
    }

    pub fn advance(&self, state: &LmState, c: char) -> (LmState, f64) {
        self.advance_token(state, self.token(c))
    }

    /// `log P(</s> | state)`.
    pub fn finish(&self, state: &LmState) -> f64 {
        self.log_prob(state, self.end_token())
    }

    /// Log-probability of the text followed by sentence end, in nats.
    pub fn score(&self, text: &str) -> f64 {
        let mut state = self.start();
        let mut total = 0.0;
        for c in text.chars() {
            let (next, lp) = self.advance(&state, c);
            total += lp;
            state = next;
        }
        total + self.finish(&state)
    }

    /// All predictable tokens (symbols then sentence end).
    pub fn predicted_tokens(&self) -> impl Iterator<Item = LmToken> + '_ {
        (0..=self.eos()).map(LmToken)
    }

    /// State after consuming `text` (without sentence end).
    pub fn state_after(&self, text: &str) -> LmState {
        text.chars().fold(self.start(), |s, c| self.advance(&s, c).0)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{FORMAT_TAG} {FORMAT_VERSION}").unwrap();
        writeln!(out, "order {}", self.order).unwrap();
        writeln!(out, "k {:?}", self.k).unwrap();
        let vocab: Vec<String> = self.vocab.iter().map(|&c| format!("{:x}", c as u32)).collect();
        writeln!(out, "vocab {}", vocab.join(" ")).unwrap();
        let entries: usize = self.counts.values().map(|c| c.next.len()).sum();
        writeln!(out, "entries {entries}").unwrap();
        for (ctx, counts) in &self.counts {
            let ctx_str = if ctx.is_empty() {
                ".".to_string()
            } else {
                ctx.iter().map(u32::to_string).collect::<Vec<_>>().join(".")
            };
            for (sym, n) in &counts.next {
                writeln!(out, "{ctx_str} {sym} {n}").unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Format(format!("LM file: {what}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(FORMAT_TAG) {
            return Err(bad("missing format tag"));
        }
        let version = parts.next().ok_or_else(|| bad("missing version"))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(Error::Version(format!("LM format version {version} (expected {FORMAT_VERSION})")));
        }
        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name}")))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
                .map(str::to_string)
                .ok_or_else(|| bad(&format!("expected `{name}` line, got {line:?}")))
        };
        let order: usize = field("order")?.parse().map_err(|_| bad("order"))?;
        let k: f64 = field("k")?.parse().map_err(|_| bad("k"))?;
        let vocab = field("vocab")?
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|h| {
                u32::from_str_radix(h, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| bad(&format!("vocab entry {h:?}")))
            })
            .collect::<Result<Vec<char>>>()?;
        let entries: usize = field("entries")?.parse().map_err(|_| bad("entries"))?;
        if !(1..=MAX_ORDER).contains(&order) || !(k > 0.0) {
            return Err(bad("order or k out of range"));
        }
        let mut lm = NGramLM::empty(order, k, vocab);
        let max_id = lm.bos();
        let mut seen = 0;
        for line in lines {
            let mut it = line.split(' ');
            let (Some(ctx), Some(sym), Some(n), None) = (it.next(), it.next(), it.next(), it.next()) else {
                return Err(bad(&format!("malformed entry {line:?}")));
            };
            let ctx: Vec<u32> = if ctx == "." {
                Vec::new()
            } else {
                ctx.split('.').map(|s| s.parse().map_err(|_| bad("context id"))).collect::<Result<_>>()?
            };
            let sym: u32 = sym.parse().map_err(|_| bad("symbol id"))?;
            let n: u64 = n.parse().map_err(|_| bad("count"))?;
            if ctx.len() >= order || sym >= max_id || ctx.iter().any(|&c| c > max_id) {
                return Err(bad(&format!("entry out of range {line:?}")));
            }
            let entry = lm.counts.entry(ctx).or_default();
            entry.total += n;
            entry.next.insert(sym, n);
            seen += 1;
        }
        if seen != entries {
            return Err(bad(&format!("expected {entries} entries, found {seen}")));
        }
        if !lm.counts.contains_key(&[][..]) {
            return Err(bad("no unigram table"));
        }
        Ok(lm)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
