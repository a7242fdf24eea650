//! Synthetic transduction corpora.
//!
//! Text comes from order-2 Markov chains over the alphabet. Each symbol is
//! rendered as a run of noisy copies of a fixed random prototype vector.
//! Train text follows one chain; dev, test and the LM corpus follow a blend
//! of it with a second chain (the mismatch knob).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use transduce_core::losses::Alphabet;
use transduce_core::network::Utterance;
use transduce_core::numerics::{RealMatrix, SeededRng};
use transduce_core::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub alphabet: String,
    pub feature_dim: usize,
    /// Frames per symbol, inclusive range.
    pub min_frames: usize,
    pub max_frames: usize,
    /// Standard deviation of the per-frame Gaussian noise.
    pub noise: f64,
    /// Probability of a silence run before each symbol.
    pub silence_prob: f64,
    /// Fraction of utterances that are pure noise with an empty reference.
    pub noise_fraction: f64,
    /// Seed of the training-side text chain.
    pub train_text_seed: u64,
    /// Seed of the chain blended into the test-side text.
    pub test_text_seed: u64,
    /// Weight of the second chain in the test-side transitions, in [0, 1].
    pub divergence: f64,
    /// Scale of the log-weights of each transition row (higher is peakier).
    pub peakiness: f64,
    pub min_symbols: usize,
    pub max_symbols: usize,
    pub train_utterances: usize,
    pub dev_utterances: usize,
    pub test_utterances: usize,
    /// Sentences in the emitted LM corpus.
    pub lm_sentences: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            alphabet: "abcdefgh ".into(),
            feature_dim: 16,
            min_frames: 3,
            max_frames: 5,
            noise: 1.0,
            silence_prob: 0.1,
            noise_fraction: 0.0,
            train_text_seed: 11,
            test_text_seed: 12,
            divergence: 0.7,
            peakiness: 2.0,
            min_symbols: 6,
            max_symbols: 14,
            train_utterances: 400,
            dev_utterances: 100,
            test_utterances: 100,
            lm_sentences: 3000,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        Alphabet::new(&self.alphabet)?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1");
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return bad("need 1 <= min_frames <= max_frames");
        }
        if self.min_symbols == 0 || self.min_symbols > self.max_symbols {
            return bad("need 1 <= min_symbols <= max_symbols");
        }
        for (name, f) in [
            ("silence_prob", self.silence_prob),
            ("noise_fraction", self.noise_fraction),
            ("divergence", self.divergence),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must be in [0, 1]")));
            }
        }
        if !(self.noise >= 0.0) || !self.peakiness.is_finite() {
            return bad("noise must be non-negative and peakiness finite");
        }
        Ok(())
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet::new(&self.alphabet).expect("validated alphabet")
    }
}

/// Order-2 chain: `rows[prev2 * n + prev1]` is a distribution over symbols,
/// with context index `n` standing for the utterance start.
struct TextChain {
    n: usize,
    rows: Vec<Vec<f64>>,
}

impl TextChain {
    fn new(n: usize, space: Option<usize>, peakiness: f64, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        let ctx = n + 1;
        let rows = (0..ctx * ctx)
            .map(|c| {
                let prev1 = c % ctx;
                let mut w: Vec<f64> = (0..n).map(|_| (peakiness * rng.normal()).exp()).collect();
                if let Some(s) = space {
                    if prev1 == s || prev1 == n {
                        w[s] = 0.0;
                    }
                }
                let z: f64 = w.iter().sum();
                w.iter().map(|x| x / z).collect()
            })
            .collect();
        Self { n, rows }
    }

    fn blend(&self, other: &TextChain, rho: f64) -> TextChain {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (1.0 - rho) * x + rho * y).collect())
            .collect();
        TextChain { n: self.n, rows }
    }

    fn sample(&self, len: usize, space: Option<usize>, rng: &mut SeededRng) -> Vec<usize> {
        let ctx = self.n + 1;
        let (mut p2, mut p1) = (self.n, self.n);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let k = rng.categorical(&self.rows[p2 * ctx + p1]);
            out.push(k);
            (p2, p1) = (p1, k);
        }
        while out.len() > 1 && out.last().copied() == space {
            out.pop();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
    /// Test-side text for LM training.
    pub lm_corpus: Vec<String>,
}

/// Rounds through `f32`, the on-disk precision.
fn to_f32_precision(m: &mut RealMatrix) {
    for v in m.data_mut() {
        *v = *v as f32 as f64;
    }
}

struct Renderer<'a> {
    spec: &'a SyntheticSpec,
    prototypes: Vec<Vec<f64>>,
}

impl Renderer<'_> {
    fn noisy(&self, base: &[f64], rng: &mut SeededRng, out: &mut Vec<f64>) {
        out.extend(base.iter().map(|&b| b + self.spec.noise * rng.normal()));
    }

    fn render(&self, symbols: &[usize], rng: &mut SeededRng) -> RealMatrix {
        let f = self.spec.feature_dim;
        let silence = vec![0.0; f];
        let mut data = Vec::new();
        for &s in symbols {
            if rng.bernoulli(self.spec.silence_prob) {
                for _ in 0..rng.range_inclusive(1, self.spec.min_frames) {
                    self.noisy(&silence, rng, &mut data);
                }
            }
            for _ in 0..rng.range_inclusive(self.spec.min_frames, self.spec.max_frames) {
                self.noisy(&self.prototypes[s], rng, &mut data);
            }
        }
        let mut m = RealMatrix::from_vec(data.len() / f, f, data).expect("whole frames");
        to_f32_precision(&mut m);
        m
    }

    fn noise_only(&self, rng: &mut SeededRng) -> RealMatrix {
        let f = self.spec.feature_dim;
        let frames = rng.range_inclusive(
            self.spec.min_symbols * self.spec.min_frames,
            self.spec.max_symbols * self.spec.max_frames,
        );
        let data = (0..frames * f).map(|_| (1.0 + self.spec.noise) * rng.normal()).collect();
        let mut m = RealMatrix::from_vec(frames, f, data).expect("whole frames");
        to_f32_precision(&mut m);
        m
    }
}

/// Deterministic in `spec` alone.
pub fn generate_dataset(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let alphabet = spec.alphabet();
    let n = alphabet.len();
    let space = alphabet.word_boundary();
    let root = SeededRng::new(spec.seed);
    let mut proto_rng = root.child(1);
    let prototypes = (0..n)
        .map(|_| (0..spec.feature_dim).map(|_| proto_rng.normal()).collect())
        .collect();
    let renderer = Renderer { spec, prototypes };

    let train_chain = TextChain::new(n, space, spec.peakiness, spec.train_text_seed);
    let other = TextChain::new(n, space, spec.peakiness, spec.test_text_seed);
    let test_chain = train_chain.blend(&other, spec.divergence);

    let make = |split: &str, count: usize, chain: &TextChain, stream: u64| -> Vec<Utterance> {
        let mut rng = root.child(stream);
        (0..count)
            .map(|i| {
                let id = format!("{split}-{i:05}");
                if rng.bernoulli(spec.noise_fraction) {
                    return Utterance { id, frames: renderer.noise_only(&mut rng), reference: String::new() };
                }
                let len = rng.range_inclusive(spec.min_symbols, spec.max_symbols);
                let symbols = chain.sample(len, space, &mut rng);
                let frames = renderer.render(&symbols, &mut rng);
                Utterance { id, frames, reference: alphabet.decode(&symbols) }
            })
            .collect()
    };
    let train = make("train", spec.train_utterances, &train_chain, 2);
    let dev = make("dev", spec.dev_utterances, &test_chain, 3);
    let test = make("test", spec.test_utterances, &test_chain, 4);
    let mut lm_rng = root.child(5);
    let lm_corpus = (0..spec.lm_sentences)
        .map(|_| {
            let len = lm_rng.range_inclusive(spec.min_symbols, spec.max_symbols);
            alphabet.decode(&test_chain.sample(len, space, &mut lm_rng))
        })
        .collect();
    Ok(Dataset { train, dev, test, lm_corpus })
}

/// One record per line: `id \t T \t F \t reference \t base64(f32 LE frames)`.
pub fn write_utterances(path: &Path, utts: &[Utterance]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for u in utts {
        let mut raw = Vec::with_capacity(u.frames.data().len() * 4);
        for &v in u.frames.data() {
            raw.extend_from_slice(&(v as f32).to_le_bytes());
        }
        writeln!(w, "{}\t{}\t{}\t{}\t{}", u.id, u.frames.rows(), u.frames.cols(), u.reference, B64.encode(raw))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_utterances(path: &Path) -> Result<Vec<Utterance>> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("{}:{}: {what}", path.display(), n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad("expected 5 tab-separated fields"));
        }
        let rows: usize = f[1].parse().map_err(|_| bad("bad frame count"))?;
        let cols: usize = f[2].parse().map_err(|_| bad("bad feature count"))?;
        let raw = B64.decode(f[4]).map_err(|_| bad("bad base64 frames"))?;
        if raw.len() != rows * cols * 4 {
            return Err(bad("frame block size does not match header"));
        }
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        let frames = RealMatrix::from_vec(rows, cols, data)?;
        out.push(Utterance { id: f[0].into(), frames, reference: f[3].into() });
    }
    Ok(out)
}

/// File names inside a dataset directory.
pub struct DatasetPaths {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub lm_corpus: PathBuf,
}

impl DatasetPaths {
    pub fn new(dir: &Path) -> Self {
        Self {
            train: dir.join("train.tsv"),
            dev: dir.join("dev.tsv"),
            test: dir.join("test.tsv"),
            lm_corpus: dir.join("lm_corpus.txt"),
        }
    }
}

pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<DatasetPaths> {
    fs::create_dir_all(dir)?;
    let p = DatasetPaths::new(dir);
    write_utterances(&p.train, &data.train)?;
    write_utterances(&p.dev, &data.dev)?;
    write_utterances(&p.test, &data.test)?;
    let mut corpus = data.lm_corpus.join("\n");
    corpus.push('\n');
    fs::write(&p.lm_corpus, corpus)?;
    Ok(p)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let p = DatasetPaths::new(dir);
    let lm_corpus = fs::read_to_string(&p.lm_corpus)?.lines().map(str::to_string).collect();
    Ok(Dataset {
        train: read_utterances(&p.train)?,
        dev: read_utterances(&p.dev)?,
        test: read_utterances(&p.test)?,
        lm_corpus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec { train_utterances: 20, dev_utterances: 5, test_utterances: 5, lm_sentences: 10, ..Default::default() }
    }

    #[test]
    fn deterministic_and_disjoint() {
        let a = generate_dataset(&small()).unwrap();
        let b = generate_dataset(&small()).unwrap();
        assert_eq!(a, b);
        let mut ids: Vec<&str> = a.train.iter().chain(&a.dev).chain(&a.test).map(|u| u.id.as_str()).collect();
        let n = ids.len();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), n);
        for u in &a.train {
            assert!(!u.reference.starts_with(' ') && !u.reference.ends_with(' ') && !u.reference.contains("  "));
        }
    }

    #[test]
    fn pure_noise_has_empty_references() {
        let d = generate_dataset(&SyntheticSpec { noise_fraction: 1.0, ..small() }).unwrap();
        assert!(d.train.iter().chain(&d.test).all(|u| u.reference.is_empty() && u.frames.rows() > 0));
    }

    #[test]
    fn file_round_trip() {
        let d = generate_dataset(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &d).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), d);
    }
}
