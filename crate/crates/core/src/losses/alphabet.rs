use std::collections::HashMap;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered output symbols.
///
/// Class indices: symbols occupy `0..V`. The CTC/RNN-T blank is `V`. The
/// attention branch has no blank, so it reuses slot `V` for `sos` (an input
/// only, never a target) and adds `eos = V + 1`, giving `V + 2` classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Alphabet {
    symbols: Vec<char>,
    #[serde(skip)]
    index: HashMap<char, usize>,
}

impl Alphabet {
    pub fn new(symbols: &str) -> Result<Self> {
        let symbols: Vec<char> = symbols.chars().collect();
        if symbols.is_empty() {
            return Err(Error::Alphabet("alphabet must contain at least one symbol".into()));
        }
        let mut index = HashMap::new();
        for (i, &c) in symbols.iter().enumerate() {
            if c.is_control() {
                return Err(Error::Alphabet(format!("control character {c:?} is not a symbol")));
            }
            if index.insert(c, i).is_some() {
                return Err(Error::Alphabet(format!("duplicate symbol {c:?}")));
            }
        }
        Ok(Self { symbols, index })
    }

    /// Number of symbols `V`.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn blank_id(&self) -> usize {
        self.len()
    }

    pub fn sos_id(&self) -> usize {
        self.len()
    }

    pub fn eos_id(&self) -> usize {
        self.len() + 1
    }

    /// Output classes for CTC and RNN-T (symbols plus blank).
    pub fn transducer_classes(&self) -> usize {
        self.len() + 1
    }

    /// Output classes for the attention decoder (symbols, sos, eos).
    pub fn attention_classes(&self) -> usize {
        self.len() + 2
    }

    /// Index of the word-boundary symbol (space), if the alphabet has one.
    pub fn word_boundary(&self) -> Option<usize> {
        self.index_of(' ')
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, id: usize) -> Option<char> {
        self.symbols.get(id).copied()
    }

    pub fn encode(&self, text: &str) -> Result<LabelSeq> {
        text.chars()
            .map(|c| {
                self.index_of(c)
                    .ok_or_else(|| Error::Alphabet(format!("symbol {c:?} is not in the alphabet")))
            })
            .collect::<Result<Vec<_>>>()
            .map(LabelSeq)
    }

    /// Text for a label sequence; ids outside the alphabet are skipped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&i| self.symbol(i)).collect()
    }
}

impl TryFrom<String> for Alphabet {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Alphabet::new(&s)
    }
}

impl From<Alphabet> for String {
    fn from(a: Alphabet) -> String {
        a.symbols.iter().collect()
    }
}

/// Sequence of symbol ids in `0..V` (no blank, sos or eos).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelSeq(pub Vec<usize>);

impl Deref for LabelSeq {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for LabelSeq {
    fn from(v: Vec<usize>) -> Self {
        LabelSeq(v)
    }
}

pub(crate) fn check_labels(labels: &[usize], vocab: usize) -> Result<()> {
    match labels.iter().find(|&&id| id >= vocab) {
        Some(&id) => Err(Error::InvalidLabel { id, vocab }),
        None => Ok(()),
    }
}
