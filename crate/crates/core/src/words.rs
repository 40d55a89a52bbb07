//! Words in a free group and finite presentations.
//!
//! A letter is a signed generator index: `+i` is the `i`-th generator and
//! `-i` its inverse, with `i` in `1..=n`. The text format spells generators
//! with lowercase letters (`a` = 1, `b` = 2, ...) and inverses with uppercase.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoarseError, Result};
use crate::zlinalg::Lattice;

/// A word over signed generator indices. The empty word is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word {
    letters: Vec<i32>,
}

impl Word {
    pub fn new(letters: Vec<i32>) -> Self {
        Word { letters }
    }

    pub fn empty() -> Self {
        Word::default()
    }

    /// Single generator (or inverse) word.
    pub fn letter(l: i32) -> Self {
        Word { letters: vec![l] }
    }

    pub fn letters(&self) -> &[i32] {
        &self.letters
    }

    pub fn into_letters(self) -> Vec<i32> {
        self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Rejects the zero letter and indices outside `1..=n_generators`.
    pub fn check_alphabet(&self, n_generators: usize) -> Result<()> {
        match self
            .letters
            .iter()
            .find(|&&l| l == 0 || l.unsigned_abs() as usize > n_generators)
        {
            Some(&letter) => Err(CoarseError::MalformedWord {
                letter,
                n_generators,
            }),
            None => Ok(()),
        }
    }

    /// Free reduction by a single left-to-right stack pass.
    pub fn reduced(&self) -> Word {
        let mut out: Vec<i32> = Vec::with_capacity(self.letters.len());
        for &l in &self.letters {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word { letters: out }
    }

    pub fn is_reduced(&self) -> bool {
        self.letters.windows(2).all(|w| w[0] != -w[1])
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        self.is_reduced()
            && (self.letters.len() < 2 || self.letters[0] != -self.letters[self.letters.len() - 1])
    }

    /// Strips matching inverse pairs from the two ends. Expects a freely
    /// reduced word.
    pub fn cyclic_reduce(&self) -> Word {
        let l = &self.letters;
        let (mut lo, mut hi) = (0usize, l.len());
        while hi - lo >= 2 && l[lo] == -l[hi - 1] {
            lo += 1;
            hi -= 1;
        }
        Word {
            letters: l[lo..hi].to_vec(),
        }
    }

    pub fn inverse(&self) -> Word {
        Word {
            letters: self.letters.iter().rev().map(|l| -l).collect(),
        }
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Word { letters }
    }

    pub fn power(&self, k: usize) -> Word {
        Word {
            letters: self.letters.repeat(k),
        }
    }

    /// Cyclic rotation starting at position `start`.
    pub fn rotate(&self, start: usize) -> Word {
        if self.letters.is_empty() {
            return self.clone();
        }
        let s = start % self.letters.len();
        let mut letters = self.letters[s..].to_vec();
        letters.extend_from_slice(&self.letters[..s]);
        Word { letters }
    }

    /// Lexicographically least word among the rotations of `self` and of its
    /// inverse.
    pub fn cyclic_class_rep(&self) -> Word {
        let inv = self.inverse();
        (0..self.letters.len().max(1))
            .flat_map(|s| [self.rotate(s), inv.rotate(s)])
            .min()
            .unwrap_or_default()
    }

    /// Exponent-sum vector of length `n_generators`.
    pub fn exponent_sums(&self, n_generators: usize) -> Vec<i64> {
        let mut v = vec![0i64; n_generators];
        for &l in &self.letters {
            let idx = l.unsigned_abs() as usize - 1;
            v[idx] += l.signum() as i64;
        }
        v
    }

    /// Parses a word spelled with `a..z` / `A..Z`; `1` or the empty string is
    /// the identity.
    pub fn parse(text: &str) -> std::result::Result<Word, char> {
        let text = text.trim();
        if text == "1" {
            return Ok(Word::empty());
        }
        text.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| letter_from_char(c).ok_or(c))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Word::new)
    }
}

fn letter_from_char(c: char) -> Option<i32> {
    match c {
        'a'..='z' => Some(c as i32 - 'a' as i32 + 1),
        'A'..='Z' => Some(-(c as i32 - 'A' as i32 + 1)),
        _ => None,
    }
}

fn char_from_letter(l: i32) -> Option<char> {
    let i = l.unsigned_abs();
    if !(1..=26).contains(&i) {
        return None;
    }
    let base = if l > 0 { b'a' } else { b'A' };
    Some((base + (i - 1) as u8) as char)
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        for &l in &self.letters {
            match char_from_letter(l) {
                Some(c) => write!(f, "{c}")?,
                None => write!(f, "[{l}]")?,
            }
        }
        Ok(())
    }
}

/// Freely reduces `w` after checking it against an alphabet of
/// `n_generators` letters.
pub fn free_reduce(w: &Word, n_generators: usize) -> Result<Word> {
    w.check_alphabet(n_generators)?;
    Ok(w.reduced())
}

/// Cyclically reduced conjugate of a freely reduced word.
pub fn cyclic_reduce(w: &Word) -> Word {
    w.cyclic_reduce()
}

/// A finite presentation `<S | R>` with relators stored freely and
/// cyclically reduced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Presentation {
    n_generators: usize,
    relators: Vec<Word>,
    k: usize,
}

impl Presentation {
    /// Normalizes each relator and recomputes `k`.
    pub fn new(n_generators: usize, relators: Vec<Word>) -> Result<Self> {
        if n_generators == 0 {
            return Err(CoarseError::InvalidArgument(
                "a presentation needs at least one generator".into(),
            ));
        }
        let mut rels = Vec::with_capacity(relators.len());
        for (i, r) in relators.iter().enumerate() {
            let r = free_reduce(r, n_generators)?.cyclic_reduce();
            if r.is_empty() {
                return Err(CoarseError::InvalidArgument(format!(
                    "relator {i} is trivial after reduction"
                )));
            }
            rels.push(r);
        }
        let k = rels.iter().map(Word::len).max().unwrap_or(0);
        Ok(Presentation {
            n_generators,
            relators: rels,
            k,
        })
    }

    /// The free group on `n` generators.
    pub fn free(n_generators: usize) -> Result<Self> {
        Presentation::new(n_generators, Vec::new())
    }

    pub fn n_generators(&self) -> usize {
        self.n_generators
    }

    pub fn relators(&self) -> &[Word] {
        &self.relators
    }

    /// Maximal relator length; zero for a free group.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_free(&self) -> bool {
        self.relators.is_empty()
    }

    /// True when every pair of generators has its commutator among the
    /// relators (up to rotation and inversion), which forces the group to be
    /// abelian.
    pub fn is_visibly_abelian(&self) -> bool {
        let reps: Vec<Word> = self.relators.iter().map(Word::cyclic_class_rep).collect();
        let n = self.n_generators as i32;
        (1..=n).all(|i| {
            (i + 1..=n).all(|j| {
                let c = Word::new(vec![i, j, -i, -j]).cyclic_class_rep();
                reps.contains(&c)
            })
        })
    }

    /// For a visibly abelian presentation, the group is `Z^n / L` with `L`
    /// spanned by relator exponent sums. Returns that lattice.
    pub fn abelian_relation_lattice(&self) -> Option<Lattice> {
        if !self.is_visibly_abelian() {
            return None;
        }
        let rows: Vec<Vec<i64>> = self
            .relators
            .iter()
            .map(|r| r.exponent_sums(self.n_generators))
            .collect();
        Some(Lattice::from_rows(self.n_generators, &rows))
    }

    /// Text form accepted by [`parse_presentation`].
    pub fn to_text(&self) -> String {
        let mut s = format!("gens {}\n", self.n_generators);
        for r in &self.relators {
            s.push_str(&format!("rel {r}\n"));
        }
        s
    }
}

/// Parses the presentation text format.
///
/// ```text
/// # Z^2
/// gens 2
/// rel abAB
/// ```
///
/// Statements may also be separated by `;` on one line.
pub fn parse_presentation(text: &str) -> Result<Presentation> {
    let mut n_generators: Option<usize> = None;
    let mut relators: Vec<(usize, Word)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for stmt in line.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let err = |message: String| CoarseError::Parse {
                line: line_no,
                message,
            };
            let mut parts = stmt.splitn(2, char::is_whitespace);
            let keyword = parts.next().unwrap_or("");
            let rest = parts.next().unwrap_or("").trim();
            match keyword {
                "gens" => {
                    if n_generators.is_some() {
                        return Err(err("duplicate `gens` statement".into()));
                    }
                    let n: usize = rest
                        .parse()
                        .map_err(|_| err(format!("invalid generator count `{rest}`")))?;
                    if n == 0 || n > 26 {
                        return Err(err(format!("generator count {n} outside 1..=26")));
                    }
                    n_generators = Some(n);
                }
                "rel" => {
                    let n = n_generators
                        .ok_or_else(|| err("`rel` before `gens`".into()))?;
                    let w = Word::parse(rest)
                        .map_err(|c| err(format!("unknown generator letter `{c}`")))?;
                    if let Err(CoarseError::MalformedWord { letter, .. }) = w.check_alphabet(n) {
                        return Err(err(format!(
                            "unknown generator letter `{}` for {n} generators",
                            char_from_letter(letter).unwrap_or('?')
                        )));
                    }
                    let r = w.reduced().cyclic_reduce();
                    if r.is_empty() {
                        return Err(err(format!("relator `{rest}` is empty after reduction")));
                    }
                    relators.push((line_no, r));
                }
                other => return Err(err(format!("unknown statement `{other}`"))),
            }
        }
    }
    let n = n_generators.ok_or(CoarseError::Parse {
        line: 0,
        message: "missing `gens` statement".into(),
    })?;
    Presentation::new(n, relators.into_iter().map(|(_, w)| w).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn w(v: &[i32]) -> Word {
        Word::new(v.to_vec())
    }

    #[test]
    fn free_reduce_examples() {
        assert_eq!(free_reduce(&w(&[1, -1, 2]), 2).unwrap(), w(&[2]));
        assert_eq!(free_reduce(&w(&[]), 2).unwrap(), w(&[]));
        assert_eq!(free_reduce(&w(&[1, 2, -2, 1]), 2).unwrap(), w(&[1, 1]));
    }

    #[test]
    fn free_reduce_rejects_out_of_range() {
        assert!(matches!(
            free_reduce(&w(&[1, 3]), 2),
            Err(CoarseError::MalformedWord { letter: 3, .. })
        ));
        assert!(free_reduce(&w(&[0]), 2).is_err());
    }

    #[test]
    fn cyclic_reduce_examples() {
        assert_eq!(cyclic_reduce(&w(&[1, 2, -1])), w(&[2]));
        assert_eq!(cyclic_reduce(&w(&[1, 2])), w(&[1, 2]));
        assert_eq!(cyclic_reduce(&w(&[-1, 2, 2, 1])), w(&[2, 2]));
    }

    #[test]
    fn parse_examples() {
        let p = parse_presentation("gens 2; rel abAB").unwrap();
        assert_eq!(p.n_generators(), 2);
        assert_eq!(p.relators(), &[w(&[1, 2, -1, -2])]);
        assert_eq!(p.k(), 4);

        let f2 = parse_presentation("gens 2").unwrap();
        assert!(f2.relators().is_empty());
        assert_eq!(f2.k(), 0);

        let p = parse_presentation("gens 3; rel aaa; rel bbb").unwrap();
        assert_eq!(p.k(), 3);
    }

    #[test]
    fn parse_normalizes_and_comments() {
        let p = parse_presentation("# conjugated relator\ngens 2\nrel aBbbA\n").unwrap();
        assert_eq!(p.relators(), &[w(&[2])]);
        let text = p.to_text();
        assert_eq!(parse_presentation(&text).unwrap(), p);
    }

    #[test]
    fn parse_errors_name_the_line() {
        match parse_presentation("gens 2\n\nrel abc") {
            Err(CoarseError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_presentation("gens 2\nrel aA") {
            Err(CoarseError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_presentation("rel ab").is_err());
        assert!(parse_presentation("gens 2\nrel a1").is_err());
    }

    #[test]
    fn visibly_abelian() {
        assert!(parse_presentation("gens 2; rel abAB").unwrap().is_visibly_abelian());
        assert!(parse_presentation("gens 2; rel baBA; rel aaa").unwrap().is_visibly_abelian());
        assert!(!parse_presentation("gens 2; rel aaa").unwrap().is_visibly_abelian());
        assert!(parse_presentation("gens 1").unwrap().is_visibly_abelian());
    }

    #[test]
    fn display_roundtrip() {
        let x = w(&[1, -2, 3]);
        assert_eq!(x.to_string(), "aBc");
        assert_eq!(Word::parse("aBc").unwrap(), x);
        assert_eq!(Word::empty().to_string(), "1");
    }

    fn arb_word() -> impl Strategy<Value = Word> {
        prop::collection::vec(
            prop_oneof![1i32..=3, -3i32..=-1],
            0..32,
        )
        .prop_map(Word::new)
    }

    proptest! {
        #[test]
        fn reduce_idempotent(x in arb_word()) {
            let r = x.reduced();
            prop_assert_eq!(r.reduced(), r.clone());
            prop_assert!(r.len() <= x.len());
            prop_assert!(r.is_reduced());
        }

        #[test]
        fn word_times_inverse_is_trivial(x in arb_word()) {
            prop_assert!(x.concat(&x.inverse()).reduced().is_empty());
        }

        #[test]
        fn cyclic_reduce_is_cyclically_reduced(x in arb_word()) {
            let c = x.reduced().cyclic_reduce();
            prop_assert!(c.is_cyclically_reduced());
            prop_assert_eq!(c.len() % 2, x.len() % 2);
        }
    }
}
