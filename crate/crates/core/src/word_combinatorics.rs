//! Words, sentences and the exact finite-N moments of
//! `U_l = e_1^T J^l Y` normalised by `N^{l/2}`.
//!
//! A word is an index path `(1, j_1, ..., j_l)`; a sentence is `n` words. The
//! expectation `E[U_l^n]` is a sum over sentences of a product of entry moments
//! over the oriented edges of the sentence, times a moment of `Y` at the
//! terminal letters. Two code paths compute it: a brute-force sum over all
//! `N^{nl}` index tuples, and a sum over canonical equivalence classes
//! weighted by their member counts.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::randomness::{EntryLaw, InitialLaw, MomentTable};
use crate::special_fn::double_factorial;
use crate::summation::CompensatedSum;

/// Size limits for the enumerations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnumerationBudget {
    /// Largest `n * l` accepted by the class enumeration.
    pub max_letters: usize,
    /// Largest `N^{nl}` accepted by the direct summation.
    pub max_terms: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self { max_letters: 12, max_terms: 100_000_000 }
    }
}

/// An index path starting at 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Word {
    letters: Vec<u32>,
}

impl Word {
    pub fn new(letters: Vec<u32>) -> Result<Self> {
        if letters.len() < 2 {
            return domain(format!("a word needs at least 2 letters, got {}", letters.len()));
        }
        if letters[0] != 1 {
            return domain(format!("a word starts with letter 1, got {}", letters[0]));
        }
        if letters.contains(&0) {
            return domain("letters are positive integers");
        }
        Ok(Self { letters })
    }

    pub fn letters(&self) -> &[u32] {
        &self.letters
    }

    /// Number of edges `l`.
    pub fn len_edges(&self) -> usize {
        self.letters.len() - 1
    }

    pub fn terminal(&self) -> u32 {
        self.letters[self.letters.len() - 1]
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.letters.windows(2).map(|w| (w[0], w[1]))
    }
}

/// `n` words of equal length.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sentence {
    words: Vec<Word>,
}

impl Sentence {
    pub fn new(words: Vec<Word>) -> Result<Self> {
        let Some(first) = words.first() else {
            return domain("a sentence needs at least one word");
        };
        let len = first.letters.len();
        if words.iter().any(|w| w.letters.len() != len) {
            return domain("all words of a sentence have the same length");
        }
        Ok(Self { words })
    }

    /// Builds a sentence from raw letter lists.
    pub fn from_letters(words: &[&[u32]]) -> Result<Self> {
        Self::new(words.iter().map(|w| Word::new(w.to_vec())).collect::<Result<_>>()?)
    }

    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn n(&self) -> usize {
        self.words.len()
    }

    pub fn l(&self) -> usize {
        self.words[0].len_edges()
    }

    /// Distinct letters, sorted.
    pub fn support(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.words.iter().flat_map(|w| w.letters.iter().copied()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn weight(&self) -> usize {
        self.support().len()
    }

    /// Oriented edges with their multiplicities, walking each word left to right.
    pub fn edge_multiplicities(&self) -> BTreeMap<(u32, u32), u32> {
        let mut m = BTreeMap::new();
        for e in self.words.iter().flat_map(Word::edges) {
            *m.entry(e).or_insert(0) += 1;
        }
        m
    }

    /// How many words end at each letter.
    pub fn terminal_multiplicities(&self) -> BTreeMap<u32, u32> {
        let mut m = BTreeMap::new();
        for w in &self.words {
            *m.entry(w.terminal()).or_insert(0) += 1;
        }
        m
    }

    /// `prod_e E[J^{N_e}]`.
    pub fn edge_moment(&self, law: &EntryLaw) -> f64 {
        self.edge_multiplicities().values().map(|&k| law.moment(k)).product()
    }

    /// `E[Y_{j^1_l} ... Y_{j^n_l}]` for i.i.d. `Y`.
    pub fn terminal_moment(&self, y: &InitialLaw) -> f64 {
        self.terminal_multiplicities().values().map(|&k| y.moment(k)).product()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, w) in self.words.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "(")?;
            for (k, c) in w.letters.iter().enumerate() {
                if k > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")?;
        }
        write!(f, ")")
    }
}

/// A sentence relabelled by first occurrence: 1 stays 1, the other letters
/// become 2, 3, ... in reading order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalForm(Sentence);

impl CanonicalForm {
    pub fn sentence(&self) -> &Sentence {
        &self.0
    }

    pub fn weight(&self) -> usize {
        self.0.weight()
    }
}

impl fmt::Display for CanonicalForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn canonicalize(s: &Sentence) -> CanonicalForm {
    let mut map: BTreeMap<u32, u32> = BTreeMap::new();
    map.insert(1, 1);
    let words = s
        .words
        .iter()
        .map(|w| {
            let letters = w
                .letters
                .iter()
                .map(|c| {
                    let next = map.len() as u32 + 1;
                    *map.entry(*c).or_insert(next)
                })
                .collect();
            Word { letters }
        })
        .collect();
    CanonicalForm(Sentence { words })
}

fn check_shape(l: usize, n: usize, budget: &EnumerationBudget) -> Result<()> {
    if l == 0 || n == 0 {
        return domain(format!("word length l and word count n must be >= 1, got l = {l}, n = {n}"));
    }
    if n * l > budget.max_letters {
        return Err(Error::Capacity(format!(
            "n * l = {} exceeds the enumeration budget of {} letters",
            n * l,
            budget.max_letters
        )));
    }
    Ok(())
}

/// Depth-first search over canonical letter assignments in which every
/// oriented edge is traversed at least twice.
struct ClassSearch {
    l: usize,
    n: usize,
    max_weight: usize,
    exact_weight: Option<usize>,
    letters: Vec<u32>,
    edge_counts: Vec<u32>,
    alphabet: usize,
    singletons: usize,
    found: Vec<CanonicalForm>,
}

impl ClassSearch {
    fn new(l: usize, n: usize, max_weight: usize, exact_weight: Option<usize>) -> Self {
        let alphabet = n * l + 2;
        let mut letters = vec![0; n * (l + 1)];
        for w in 0..n {
            letters[w * (l + 1)] = 1;
        }
        Self {
            l,
            n,
            max_weight,
            exact_weight,
            letters,
            edge_counts: vec![0; alphabet * alphabet],
            alphabet,
            singletons: 0,
            found: Vec::new(),
        }
    }

    fn total_free(&self) -> usize {
        self.n * self.l
    }

    /// `pos` indexes free letters (`k = 1..=l` of each word) in reading order.
    fn run(&mut self, pos: usize, used: usize) {
        let remaining_after = self.total_free() - pos;
        if pos == self.total_free() {
            if self.singletons == 0 && self.exact_weight.is_none_or(|t| t == used) {
                self.found.push(self.current());
            }
            return;
        }
        let (w, k) = (pos / self.l, pos % self.l + 1);
        let idx = w * (self.l + 1) + k;
        let prev = self.letters[idx - 1] as usize;
        let top = (used + 1).min(self.max_weight);
        for c in 1..=top {
            let new_used = used.max(c);
            if let Some(t) = self.exact_weight {
                if t - new_used > remaining_after - 1 {
                    continue;
                }
            }
            let e = prev * self.alphabet + c;
            let before = self.edge_counts[e];
            self.edge_counts[e] += 1;
            match before {
                0 => self.singletons += 1,
                1 => self.singletons -= 1,
                _ => {}
            }
            if self.singletons < remaining_after {
                self.letters[idx] = c as u32;
                self.run(pos + 1, new_used);
            }
            self.edge_counts[e] -= 1;
            match before {
                0 => self.singletons -= 1,
                1 => self.singletons += 1,
                _ => {}
            }
        }
    }

    fn current(&self) -> CanonicalForm {
        let words =
            self.letters.chunks(self.l + 1).map(|c| Word { letters: c.to_vec() }).collect();
        CanonicalForm(Sentence { words })
    }
}

/// All classes of `n` words of length `l + 1` with weight `t` in which every
/// oriented edge has multiplicity at least 2, in lexicographic order.
pub fn enumerate_w(l: usize, n: usize, t: usize, budget: &EnumerationBudget) -> Result<Vec<CanonicalForm>> {
    check_shape(l, n, budget)?;
    if t == 0 || t > n * l + 1 {
        return domain(format!("weight must satisfy 1 <= t <= n*l + 1 = {}, got {t}", n * l + 1));
    }
    let mut search = ClassSearch::new(l, n, t, Some(t));
    search.run(0, 1);
    Ok(search.found)
}

/// The same classes for every weight at once, in lexicographic order.
pub fn enumerate_all(l: usize, n: usize, budget: &EnumerationBudget) -> Result<Vec<CanonicalForm>> {
    check_shape(l, n, budget)?;
    let mut search = ClassSearch::new(l, n, n * l + 1, None);
    search.run(0, 1);
    Ok(search.found)
}

/// `(N-1)(N-2)...(N-t+1)`: sentences equivalent to one of weight `t`.
pub fn count_equivalents(t: usize, n: usize) -> Result<u128> {
    if t == 0 || t > n {
        return domain(format!("count_equivalents needs 1 <= t <= N, got t = {t}, N = {n}"));
    }
    ((n - t + 1)..n).try_fold(1u128, |acc, k| acc.checked_mul(k as u128)).ok_or_else(|| {
        Error::Capacity(format!("member count for t = {t}, N = {n} overflows u128"))
    })
}

/// Members of a weight-`t` class whose letters all lie in `{1..N}`.
fn members_within(t: usize, n: usize) -> Result<u128> {
    if t > n {
        Ok(0)
    } else {
        count_equivalents(t, n)
    }
}

/// Law of the vector `Y` in `U_l = e_1^T J^l Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum YLaw {
    /// I.i.d. coordinates with the given law.
    Iid { law: InitialLaw },
    /// A fixed vector of length `N`.
    Fixed { values: Vec<f64> },
}

impl YLaw {
    /// `Y = (1, ..., 1)`.
    pub fn ones() -> Self {
        YLaw::Iid { law: InitialLaw::PointMass { c: 1.0 } }
    }

    /// Largest `|Y_j|`.
    pub fn bound(&self) -> f64 {
        match self {
            YLaw::Iid { law } => law.bound(),
            YLaw::Fixed { values } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            YLaw::Iid { law } => law.validate(),
            YLaw::Fixed { values } if values.len() != n => {
                domain(format!("fixed Y has {} entries, expected N = {n}", values.len()))
            }
            YLaw::Fixed { values } if values.iter().any(|v| !v.is_finite()) => domain("fixed Y must be finite"),
            YLaw::Fixed { .. } => Ok(()),
        }
    }
}

fn normalisation(l: usize, n: usize, big_n: usize) -> f64 {
    (big_n as f64).powf(-((n * l) as f64) / 2.0)
}

/// Direct summation state: one index tuple at a time.
struct DirectSum<'a> {
    l: usize,
    n: usize,
    big_n: usize,
    j_moments: Vec<f64>,
    y: &'a YLaw,
    y_moments: Vec<f64>,
    letters: Vec<usize>,
    edge_counts: Vec<u32>,
    /// Edge index opened at each free position, if it was new there.
    opened: Vec<Option<usize>>,
    singletons: usize,
    prune: bool,
    terminal_counts: Vec<u32>,
}

impl DirectSum<'_> {
    fn total_free(&self) -> usize {
        self.n * self.l
    }

    fn run(&mut self, pos: usize, acc: &mut CompensatedSum) {
        if pos == self.total_free() {
            let term = self.leaf_value();
            if term != 0.0 {
                acc.add(term);
            }
            return;
        }
        let remaining_after = self.total_free() - pos - 1;
        let (w, k) = (pos / self.l, pos % self.l + 1);
        let idx = w * (self.l + 1) + k;
        let prev = self.letters[idx - 1];
        for c in 0..self.big_n {
            let e = prev * self.big_n + c;
            let before = self.edge_counts[e];
            self.edge_counts[e] += 1;
            match before {
                0 => self.singletons += 1,
                1 => self.singletons -= 1,
                _ => {}
            }
            if !(self.prune && self.singletons > remaining_after) {
                self.letters[idx] = c;
                self.opened[pos] = (before == 0).then_some(e);
                self.run(pos + 1, acc);
            }
            self.edge_counts[e] -= 1;
            match before {
                0 => self.singletons -= 1,
                1 => self.singletons += 1,
                _ => {}
            }
        }
    }

    fn leaf_value(&mut self) -> f64 {
        let mut value = 1.0;
        for e in self.opened.iter().flatten() {
            value *= self.j_moments[self.edge_counts[*e] as usize];
            if value == 0.0 {
                return 0.0;
            }
        }
        let stride = self.l + 1;
        match self.y {
            YLaw::Fixed { values } => {
                for w in 0..self.n {
                    value *= values[self.letters[w * stride + self.l]];
                }
            }
            YLaw::Iid { .. } => {
                for w in 0..self.n {
                    self.terminal_counts[self.letters[w * stride + self.l]] += 1;
                }
                for w in 0..self.n {
                    let c = self.letters[w * stride + self.l];
                    let k = std::mem::take(&mut self.terminal_counts[c]);
                    if k > 0 {
                        value *= self.y_moments[k as usize];
                    }
                }
            }
        }
        value
    }
}

/// `E[U_l^n] / N^{nl/2}` by summing over every index tuple in `{1..N}^{nl}`.
///
/// The sum is split over the first free letter and reduced in a fixed order,
/// so the value does not depend on the thread count.
pub fn exact_moment(
    l: usize,
    n: usize,
    big_n: usize,
    j_law: &EntryLaw,
    y: &YLaw,
    budget: &EnumerationBudget,
) -> Result<f64> {
    if l == 0 || n == 0 || big_n == 0 {
        return domain(format!("l, n and N must be >= 1, got l = {l}, n = {n}, N = {big_n}"));
    }
    j_law.validate()?;
    y.validate(big_n)?;
    let terms = (big_n as f64).powi((n * l) as i32);
    if terms > budget.max_terms as f64 {
        return Err(Error::Capacity(format!(
            "direct summation needs N^(nl) = {big_n}^{} = {terms:.3e} terms, budget is {}",
            n * l,
            budget.max_terms
        )));
    }
    let top = n * l;
    let j_moments: Vec<f64> = (0..=top as u32).map(|k| j_law.moment(k)).collect();
    let y_moments: Vec<f64> = match y {
        YLaw::Iid { law } => (0..=n as u32).map(|k| law.moment(k)).collect(),
        YLaw::Fixed { .. } => Vec::new(),
    };
    // a lone edge contributes E[J] = 0, so such subtrees can be skipped
    let prune = j_moments[1] == 0.0;
    let make = || DirectSum {
        l,
        n,
        big_n,
        j_moments: j_moments.clone(),
        y,
        y_moments: y_moments.clone(),
        // letter 1 is stored as index 0
        letters: vec![0usize; n * (l + 1)],
        edge_counts: vec![0; big_n * big_n],
        opened: vec![None; n * l],
        singletons: 0,
        prune,
        terminal_counts: vec![0; big_n],
    };
    let partials: Vec<CompensatedSum> = (0..big_n)
        .into_par_iter()
        .map(|first| {
            let mut state = make();
            let mut acc = CompensatedSum::new();
            let e = first;
            state.edge_counts[e] = 1;
            state.singletons = 1;
            state.letters[1] = first;
            state.opened[0] = Some(e);
            state.run(1, &mut acc);
            acc
        })
        .collect();
    let mut total = CompensatedSum::new();
    for p in &partials {
        total.merge(p);
    }
    Ok(total.value() * normalisation(l, n, big_n))
}

/// One class in the regrouped moment sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub l: usize,
    pub n: usize,
    pub t: usize,
    pub class_id: usize,
    pub canonical_sentence: String,
    pub member_count_at_n: u128,
    /// `member_count * prod_e E[J^{N_e}] * E[prod Y] / N^{nl/2}`.
    pub term_value: f64,
}

/// The per-class contributions to `E[U_l^n] / N^{nl/2}` for i.i.d. `Y`.
pub fn class_table(
    l: usize,
    n: usize,
    big_n: usize,
    j_law: &EntryLaw,
    y: &InitialLaw,
    budget: &EnumerationBudget,
) -> Result<Vec<ClassRow>> {
    if big_n == 0 {
        return domain("N must be >= 1");
    }
    j_law.validate()?;
    y.validate()?;
    let mut classes = enumerate_all(l, n, budget)?;
    classes.sort_by_key(|c| c.weight());
    let norm = normalisation(l, n, big_n);
    classes
        .iter()
        .enumerate()
        .map(|(class_id, c)| {
            let t = c.weight();
            let members = members_within(t, big_n)?;
            let s = c.sentence();
            Ok(ClassRow {
                l,
                n,
                t,
                class_id,
                canonical_sentence: c.to_string(),
                member_count_at_n: members,
                term_value: members as f64 * s.edge_moment(j_law) * s.terminal_moment(y) * norm,
            })
        })
        .collect()
}

/// `E[U_l^n] / N^{nl/2}` as a sum over equivalence classes times their member counts.
pub fn exact_moment_via_classes(
    l: usize,
    n: usize,
    big_n: usize,
    j_law: &EntryLaw,
    y: &InitialLaw,
    budget: &EnumerationBudget,
) -> Result<f64> {
    let rows = class_table(l, n, big_n, j_law, y, budget)?;
    Ok(rows.iter().map(|r| r.term_value).collect::<CompensatedSum>().value())
}

/// `sigma^{2lp} (2p-1)!! phi^p` for `n = 2p`, and 0 for odd `n`.
pub fn limit_moment(l: usize, n: usize, sigma: f64, phi: f64) -> Result<f64> {
    if l == 0 || n == 0 {
        return domain(format!("l and n must be >= 1, got l = {l}, n = {n}"));
    }
    if n % 2 == 1 {
        return Ok(0.0);
    }
    let p = n / 2;
    let pairings = double_factorial(2 * p as u64 - 1)? as f64;
    Ok(sigma.powi((2 * l * p) as i32) * pairings * phi.powi(p as i32))
}

/// Result of scanning an odd `n` for the largest class weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddBoundReport {
    pub l: usize,
    pub n: usize,
    /// `floor(n l / 2)`.
    pub bound: usize,
    pub max_weight_found: Option<usize>,
    /// Number of classes per weight `1..=nl+1`.
    pub classes_per_weight: Vec<usize>,
    /// Classes heavier than `bound`.
    pub witnesses: Vec<String>,
}

impl OddBoundReport {
    pub fn within_bound(&self) -> bool {
        self.witnesses.is_empty()
    }
}

pub fn check_odd_bound(l: usize, n: usize, budget: &EnumerationBudget) -> Result<OddBoundReport> {
    if n.is_multiple_of(2) {
        return domain(format!("check_odd_bound needs odd n, got {n}"));
    }
    let classes = enumerate_all(l, n, budget)?;
    let bound = n * l / 2;
    let mut per_weight = vec![0; n * l + 1];
    for c in &classes {
        per_weight[c.weight() - 1] += 1;
    }
    Ok(OddBoundReport {
        l,
        n,
        bound,
        max_weight_found: classes.iter().map(CanonicalForm::weight).max(),
        classes_per_weight: per_weight,
        witnesses: classes.iter().filter(|c| c.weight() > bound).map(|c| c.to_string()).collect(),
    })
}
