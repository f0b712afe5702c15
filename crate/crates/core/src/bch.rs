//! Rational coefficients of the Baker–Campbell–Hausdorff series in
//! right-nested bracket form (Dynkin's presentation).
//!
//! `log(exp X exp Y) = X + Y + Σ c_w [w_1, [w_2, … [w_{m-1}, w_m]…]]`
//! where each word `w` is a string over `{X, Y}`. Words whose two last
//! letters coincide vanish; words ending in `YX` are folded onto `XY` by
//! antisymmetry, so every stored word ends in `XY`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_rational::Rational64;

/// Largest nested-bracket depth with precomputed coefficients.
pub const MAX_DEPTH: usize = 6;

/// Letter of a bracket word: `false` is the left factor X, `true` is Y.
pub type Letter = bool;

#[derive(Debug, Clone, PartialEq)]
pub struct BchWord {
    pub coefficient: Rational64,
    pub letters: Vec<Letter>,
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

fn accumulate(
    max_len: usize,
    pairs: &mut Vec<(usize, usize)>,
    total: usize,
    acc: &mut BTreeMap<Vec<Letter>, Rational64>,
) {
    if !pairs.is_empty() {
        let k = pairs.len() as i64;
        let mut denom = k * total as i64;
        let mut word = Vec::with_capacity(total);
        for &(r, s) in pairs.iter() {
            denom *= factorial(r) * factorial(s);
            word.extend(std::iter::repeat_n(false, r));
            word.extend(std::iter::repeat_n(true, s));
        }
        let sign = if k % 2 == 1 { 1 } else { -1 };
        *acc.entry(word).or_insert_with(|| Rational64::from_integer(0)) +=
            Rational64::new(sign, denom);
    }
    for r in 0..=(max_len - total) {
        for s in 0..=(max_len - total - r) {
            if r + s == 0 {
                continue;
            }
            pairs.push((r, s));
            accumulate(max_len, pairs, total + r + s, acc);
            pairs.pop();
        }
    }
}

fn compute_words() -> Vec<BchWord> {
    let mut raw = BTreeMap::new();
    accumulate(MAX_DEPTH, &mut Vec::new(), 0, &mut raw);

    let zero = Rational64::from_integer(0);
    let mut folded: BTreeMap<Vec<Letter>, Rational64> = BTreeMap::new();
    for (mut word, coefficient) in raw {
        let m = word.len();
        if m < 2 || coefficient == zero || word[m - 2] == word[m - 1] {
            continue;
        }
        let mut c = coefficient;
        if word[m - 2] {
            word.swap(m - 2, m - 1);
            c = -c;
        }
        *folded.entry(word).or_insert(zero) += c;
    }
    let mut words: Vec<BchWord> = folded
        .into_iter()
        .filter(|(_, c)| *c != zero)
        .map(|(letters, coefficient)| BchWord {
            coefficient,
            letters,
        })
        .collect();
    words.sort_by(|a, b| a.letters.len().cmp(&b.letters.len()).then(a.letters.cmp(&b.letters)));
    words
}

/// All nonvanishing words of length `2..=MAX_DEPTH`, shortest first.
pub fn words() -> &'static [BchWord] {
    static WORDS: OnceLock<Vec<BchWord>> = OnceLock::new();
    WORDS.get_or_init(compute_words)
}

/// Words of length at most `depth`.
pub fn words_up_to(depth: usize) -> impl Iterator<Item = &'static BchWord> {
    words().iter().filter(move |w| w.letters.len() <= depth)
}
