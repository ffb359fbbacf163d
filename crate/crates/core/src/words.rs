//! Words over a finite alphabet, i.e. elements of the free semigroup on
//! `m` generators, plus finite windows of one- and two-sided sequences.

use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A generator index.
pub type Symbol = u8;

/// Largest supported number of generators.
pub const MAX_GENERATORS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    m: usize,
}

impl Alphabet {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 || m > MAX_GENERATORS {
            return Err(invalid(format!(
                "alphabet size must be in 1..={MAX_GENERATORS}, got {m}"
            )));
        }
        Ok(Self { m })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    /// `m^n`, or `None` on overflow.
    pub fn word_count(&self, n: usize) -> Option<u128> {
        (self.m as u128).checked_pow(u32::try_from(n).ok()?)
    }

    pub fn contains(&self, s: Symbol) -> bool {
        (s as usize) < self.m
    }
}

/// A nonempty finite word `i_1 i_2 ... i_n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(Vec<Symbol>);

impl Word {
    pub fn new(alphabet: Alphabet, symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(invalid("words must have length at least 1"));
        }
        if let Some(&s) = symbols.iter().find(|&&s| !alphabet.contains(s)) {
            return Err(Error::SymbolOutOfRange {
                symbol: s as usize,
                m: alphabet.size(),
            });
        }
        Ok(Self(symbols))
    }

    /// Parses a digit string such as `"0120"`; symbols above 9 use `a..f`.
    pub fn parse(alphabet: Alphabet, text: &str) -> Result<Self> {
        let symbols = text
            .chars()
            .map(|c| {
                c.to_digit(16)
                    .map(|d| d as Symbol)
                    .ok_or_else(|| invalid(format!("bad symbol {c:?} in word {text:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(alphabet, symbols)
    }

    /// The `index`-th word of length `n` in lexicographic order.
    pub fn from_index(alphabet: Alphabet, n: usize, mut index: u128) -> Self {
        let m = alphabet.size() as u128;
        let mut symbols = vec![0; n];
        for slot in symbols.iter_mut().rev() {
            *slot = (index % m) as Symbol;
            index /= m;
        }
        Self(symbols)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    /// `w w2`: the symbols of `self` followed by those of `other`.
    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn reverse(&self) -> Word {
        reverse(self)
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{s:x}")?;
        }
        Ok(())
    }
}

/// All `m^n` words of length `n` in lexicographic order.
///
/// Fails with [`Error::BudgetExceeded`] when `m^n > budget`; callers are
/// then expected to fall back to [`sample_words`].
pub fn enumerate_words(alphabet: Alphabet, n: usize, budget: u64) -> Result<Vec<Word>> {
    if n == 0 {
        return Err(invalid("word length must be at least 1"));
    }
    let count = alphabet.word_count(n).unwrap_or(u128::MAX);
    if count > budget as u128 {
        return Err(Error::BudgetExceeded {
            requested: count,
            budget,
        });
    }
    Ok((0..count)
        .map(|i| Word::from_index(alphabet, n, i))
        .collect())
}

/// `k` words of length `n`, i.i.d. uniform. Word `j` is drawn from its own
/// ChaCha stream so any subset of the draws can be regenerated
/// independently of the others.
pub fn sample_words(alphabet: Alphabet, n: usize, k: usize, seed: u64) -> Vec<Word> {
    (0..k).map(|j| sample_word(alphabet, n, seed, j as u64)).collect()
}

/// The `stream`-th draw of [`sample_words`].
pub fn sample_word(alphabet: Alphabet, n: usize, seed: u64, stream: u64) -> Word {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let m = alphabet.size() as Symbol;
    Word((0..n).map(|_| rng.gen_range(0..m)).collect())
}

pub fn reverse(w: &Word) -> Word {
    Word(w.0.iter().rev().copied().collect())
}

/// `w' <= w`: `w = w'' w'` for some possibly empty `w''`, i.e. `w'` is a
/// suffix of `w`. The empty `w'` is a suffix of every word.
pub fn is_suffix_le(w_prime: &[Symbol], w: &[Symbol]) -> bool {
    w.ends_with(w_prime)
}

/// `[w|[0,0], w|[0,1], ..., w]`.
pub fn prefixes(w: &Word) -> Vec<Word> {
    (1..=w.len()).map(|k| Word(w.0[..k].to_vec())).collect()
}

/// A finite window `omega|[start, start + len - 1]` of a symbol sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OmegaWindow {
    start: i64,
    symbols: Vec<Symbol>,
}

impl OmegaWindow {
    pub fn new(start: i64, symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(invalid("sequence windows must be nonempty"));
        }
        Ok(Self { start, symbols })
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    /// Last covered index (inclusive).
    pub fn end(&self) -> i64 {
        self.start + self.symbols.len() as i64 - 1
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn covers(&self, index: i64) -> bool {
        index >= self.start && index <= self.end()
    }

    pub fn get(&self, index: i64) -> Option<Symbol> {
        self.covers(index)
            .then(|| self.symbols[(index - self.start) as usize])
    }

    /// `omega|[a, b]` as a word, if the window covers it.
    pub fn restrict(&self, a: i64, b: i64) -> Option<Word> {
        if a > b || !self.covers(a) || !self.covers(b) {
            return None;
        }
        let lo = (a - self.start) as usize;
        let hi = (b - self.start) as usize;
        Some(Word(self.symbols[lo..=hi].to_vec()))
    }

    /// Relabels indices for the shifted sequence `sigma(omega)`, whose
    /// `k`-th symbol is `omega_{k+1}`.
    pub fn shifted(&self) -> Self {
        Self {
            start: self.start - 1,
            symbols: self.symbols.clone(),
        }
    }
}
