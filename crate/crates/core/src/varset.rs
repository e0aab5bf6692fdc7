//! Bitset-backed index sets.
//!
//! [`VarSet`] holds predictor indices `1..=d` and is the currency of every set
//! operation in the crate. [`NodeSet`] holds raw node indices of a [`Dag`]
//! (environment `0`, predictors `1..=d`, response `d + 1`). Both share the same
//! word layout (bit `i` of the set is index `i`), so converting between them
//! is a copy. Up to 128 indices live inline; larger sets spill to the heap.
//!
//! [`Dag`]: crate::dag::Dag

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

type Words = SmallVec<[u64; 2]>;

#[derive(Clone, Default, PartialEq, Eq, Hash)]
struct Bits {
    // no trailing zero words, so derived Eq/Hash are structural
    words: Words,
}

impl Bits {
    fn with_capacity(bits: usize) -> Self {
        Bits {
            words: SmallVec::with_capacity(bits.div_ceil(64)),
        }
    }

    fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }

    fn insert(&mut self, i: usize) -> bool {
        let (w, b) = (i / 64, i % 64);
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        let fresh = self.words[w] & (1 << b) == 0;
        self.words[w] |= 1 << b;
        fresh
    }

    fn remove(&mut self, i: usize) -> bool {
        let (w, b) = (i / 64, i % 64);
        if w >= self.words.len() {
            return false;
        }
        let present = self.words[w] & (1 << b) != 0;
        self.words[w] &= !(1 << b);
        self.trim();
        present
    }

    #[inline]
    fn contains(&self, i: usize) -> bool {
        let w = i / 64;
        w < self.words.len() && self.words[w] & (1 << (i % 64)) != 0
    }

    fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    fn union_with(&mut self, other: &Bits) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    fn intersect_with(&mut self, other: &Bits) {
        self.words.truncate(other.words.len());
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
        self.trim();
    }

    fn difference_with(&mut self, other: &Bits) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
        self.trim();
    }

    fn is_subset(&self, other: &Bits) -> bool {
        self.words.len() <= other.words.len()
            && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    fn is_disjoint(&self, other: &Bits) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    fn first(&self) -> Option<usize> {
        self.iter().next()
    }

    fn last(&self) -> Option<usize> {
        let last = self.words.last()?;
        Some((self.words.len() - 1) * 64 + 63 - last.leading_zeros() as usize)
    }

    fn iter(&self) -> BitIter<'_> {
        BitIter {
            words: &self.words,
            word_idx: 0,
            current: self.words.first().copied().unwrap_or(0),
        }
    }

    /// Lexicographic comparison of the sorted index sequences.
    fn lex_cmp(&self, other: &Bits) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

/// Ascending iterator over the members of a set.
pub struct BitIter<'a> {
    words: &'a [u64],
    word_idx: usize,
    current: u64,
}

impl Iterator for BitIter<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        loop {
            if self.current != 0 {
                let tz = self.current.trailing_zeros() as usize;
                self.current &= self.current - 1;
                return Some(self.word_idx * 64 + tz);
            }
            self.word_idx += 1;
            if self.word_idx >= self.words.len() {
                return None;
            }
            self.current = self.words[self.word_idx];
        }
    }
}

macro_rules! set_ops {
    ($ty:ident) => {
        impl $ty {
            pub fn new() -> Self {
                Self::default()
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            #[inline]
            pub fn contains(&self, i: usize) -> bool {
                self.0.contains(i)
            }

            pub fn remove(&mut self, i: usize) -> bool {
                self.0.remove(i)
            }

            pub fn iter(&self) -> BitIter<'_> {
                self.0.iter()
            }

            pub fn first(&self) -> Option<usize> {
                self.0.first()
            }

            pub fn last(&self) -> Option<usize> {
                self.0.last()
            }

            pub fn union(&self, other: &Self) -> Self {
                let mut out = self.clone();
                out.0.union_with(&other.0);
                out
            }

            pub fn intersection(&self, other: &Self) -> Self {
                let mut out = self.clone();
                out.0.intersect_with(&other.0);
                out
            }

            pub fn difference(&self, other: &Self) -> Self {
                let mut out = self.clone();
                out.0.difference_with(&other.0);
                out
            }

            pub fn union_with(&mut self, other: &Self) {
                self.0.union_with(&other.0);
            }

            pub fn intersect_with(&mut self, other: &Self) {
                self.0.intersect_with(&other.0);
            }

            pub fn difference_with(&mut self, other: &Self) {
                self.0.difference_with(&other.0);
            }

            pub fn is_subset(&self, other: &Self) -> bool {
                self.0.is_subset(&other.0)
            }

            pub fn is_superset(&self, other: &Self) -> bool {
                other.0.is_subset(&self.0)
            }

            pub fn is_strict_subset(&self, other: &Self) -> bool {
                self.0.is_subset(&other.0) && self.0 != other.0
            }

            pub fn is_disjoint(&self, other: &Self) -> bool {
                self.0.is_disjoint(&other.0)
            }

            pub fn to_vec(&self) -> Vec<usize> {
                self.iter().collect()
            }
        }

        impl<'a> IntoIterator for &'a $ty {
            type Item = usize;
            type IntoIter = BitIter<'a>;

            fn into_iter(self) -> BitIter<'a> {
                self.iter()
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("{")?;
                for (n, i) in self.iter().enumerate() {
                    if n > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{i}")?;
                }
                f.write_str("}")
            }
        }

        impl fmt::Debug for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", stringify!($ty), self)
            }
        }
    };
}

/// A set of predictor indices, each in `1..=d`.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct VarSet(Bits);

set_ops!(VarSet);

impl VarSet {
    /// `{1, .., d}`.
    pub fn full(d: usize) -> Self {
        let mut bits = Bits::with_capacity(d + 1);
        for k in 1..=d {
            bits.insert(k);
        }
        VarSet(bits)
    }

    /// Inserts predictor `k`.
    ///
    /// Index 0 is the environment node and never a predictor, so it panics.
    pub fn insert(&mut self, k: usize) -> bool {
        assert!(k >= 1, "predictor indices start at 1");
        self.0.insert(k)
    }

    pub fn with(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.insert(k);
        out
    }

    pub fn without(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.remove(k);
        out
    }

    /// Reinterprets the set as graph node indices.
    pub fn to_nodes(&self) -> NodeSet {
        NodeSet(self.0.clone())
    }
}

impl FromIterator<usize> for VarSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = VarSet::new();
        for k in iter {
            s.insert(k);
        }
        s
    }
}

impl<const N: usize> From<[usize; N]> for VarSet {
    fn from(items: [usize; N]) -> Self {
        items.into_iter().collect()
    }
}

/// Families are ordered by size, then lexicographically by sorted indices.
impl Ord for VarSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.0.lex_cmp(&other.0))
    }
}

impl PartialOrd for VarSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for VarSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for VarSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let items = Vec::<usize>::deserialize(deserializer)?;
        if items.contains(&0) {
            return Err(serde::de::Error::custom("predictor indices start at 1"));
        }
        Ok(items.into_iter().collect())
    }
}

/// A set of raw node indices of a graph.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct NodeSet(Bits);

set_ops!(NodeSet);

impl NodeSet {
    pub fn with_capacity(nodes: usize) -> Self {
        NodeSet(Bits::with_capacity(nodes))
    }

    pub fn singleton(i: usize) -> Self {
        let mut s = NodeSet::new();
        s.insert(i);
        s
    }

    pub fn range(lo: usize, hi: usize) -> Self {
        let mut s = NodeSet::with_capacity(hi);
        for i in lo..hi {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) -> bool {
        self.0.insert(i)
    }

    /// Keeps only predictor indices `1..=d`.
    pub fn predictors(&self, d: usize) -> VarSet {
        let mut bits = self.0.clone();
        bits.remove(0);
        let mut out = VarSet(bits);
        while out.last().is_some_and(|m| m > d) {
            let m = out.last().unwrap();
            out.remove(m);
        }
        out
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = NodeSet::new();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

/// Iterates the `k`-subsets of `pool` in lexicographic order of sorted indices.
pub struct Combinations {
    pool: Vec<usize>,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(pool: &VarSet, k: usize) -> Self {
        let pool = pool.to_vec();
        let done = k > pool.len();
        Combinations {
            idx: (0..k).collect(),
            pool,
            done,
        }
    }
}

impl Iterator for Combinations {
    type Item = VarSet;

    fn next(&mut self) -> Option<VarSet> {
        if self.done {
            return None;
        }
        let out: VarSet = self.idx.iter().map(|&i| self.pool[i]).collect();
        let k = self.idx.len();
        let n = self.pool.len();
        // advance to the next index tuple
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// All subsets of `pool` with at most `max_size` members, by size then lexicographically.
pub fn subsets_up_to(pool: &VarSet, max_size: usize) -> impl Iterator<Item = VarSet> {
    let pool = pool.clone();
    let top = max_size.min(pool.len());
    (0..=top).flat_map(move |k| Combinations::new(&pool, k))
}

/// `sum_{i <= m} binom(n, i)` in floating point (exact below 2^53).
pub fn count_subsets_up_to(n: usize, m: usize) -> f64 {
    let mut total = 0.0;
    let mut term = 1.0;
    for i in 0..=m.min(n) {
        if i > 0 {
            term = term * (n - i + 1) as f64 / i as f64;
        }
        total += term;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn insert_contains_remove() {
        let mut s = VarSet::new();
        assert!(s.insert(3));
        assert!(!s.insert(3));
        assert!(s.insert(130));
        assert!(s.contains(3) && s.contains(130) && !s.contains(4));
        assert_eq!(s.len(), 2);
        assert!(s.remove(130));
        assert_eq!(s, VarSet::from([3]));
        assert_eq!(s.last(), Some(3));
    }

    #[test]
    #[should_panic]
    fn env_index_is_not_a_predictor() {
        VarSet::new().insert(0);
    }

    #[test]
    fn spill_past_inline_words() {
        let big = VarSet::full(10_000);
        assert_eq!(big.len(), 10_000);
        assert!(big.contains(10_000) && !big.contains(10_001));
        let evens: VarSet = (1..=10_000).filter(|k| k % 2 == 0).collect();
        assert_eq!(big.difference(&evens).len(), 5_000);
    }

    #[test]
    fn ordering_is_size_then_lex() {
        let mut sets = vec![
            VarSet::from([2, 3]),
            VarSet::from([3]),
            VarSet::from([1, 3]),
            VarSet::new(),
            VarSet::from([1, 2, 3]),
        ];
        sets.sort();
        assert_eq!(
            sets,
            vec![
                VarSet::new(),
                VarSet::from([3]),
                VarSet::from([1, 3]),
                VarSet::from([2, 3]),
                VarSet::from([1, 2, 3]),
            ]
        );
    }

    #[test]
    fn node_set_to_predictors_masks_env_and_response() {
        let nodes: NodeSet = [0, 1, 4, 5, 9].into_iter().collect();
        assert_eq!(nodes.predictors(4), VarSet::from([1, 4]));
    }

    #[test]
    fn combinations_are_lexicographic() {
        let pool = VarSet::from([1, 3, 5, 7]);
        let got: Vec<Vec<usize>> = Combinations::new(&pool, 2).map(|s| s.to_vec()).collect();
        assert_eq!(
            got,
            vec![
                vec![1, 3],
                vec![1, 5],
                vec![1, 7],
                vec![3, 5],
                vec![3, 7],
                vec![5, 7]
            ]
        );
        assert_eq!(Combinations::new(&pool, 0).count(), 1);
        assert_eq!(Combinations::new(&pool, 5).count(), 0);
        assert_eq!(subsets_up_to(&pool, 4).count(), 16);
        assert_eq!(count_subsets_up_to(4, 4), 16.0);
        assert_eq!(count_subsets_up_to(6, 1), 7.0);
    }

    #[test]
    fn json_is_sorted_index_array() {
        let s = VarSet::from([5, 1, 70]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,5,70]");
        let back: VarSet = serde_json::from_str("[70,1,5]").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<VarSet>("[0,1]").is_err());
    }

    fn model() -> impl Strategy<Value = BTreeSet<usize>> {
        proptest::collection::btree_set(1usize..200, 0..40)
    }

    proptest! {
        #[test]
        fn set_algebra_matches_btreeset(a in model(), b in model()) {
            let va: VarSet = a.iter().copied().collect();
            let vb: VarSet = b.iter().copied().collect();
            let as_vec = |s: BTreeSet<usize>| s.into_iter().collect::<Vec<_>>();
            prop_assert_eq!(va.union(&vb).to_vec(), as_vec(&a | &b));
            prop_assert_eq!(va.intersection(&vb).to_vec(), as_vec(&a & &b));
            prop_assert_eq!(va.difference(&vb).to_vec(), as_vec(&a - &b));
            prop_assert_eq!(va.is_subset(&vb), a.is_subset(&b));
            prop_assert_eq!(va.is_disjoint(&vb), a.is_disjoint(&b));
            prop_assert_eq!(va.len(), a.len());
            // equality is structural even after removals shrink the word count
            let rebuilt: VarSet = va.union(&vb).difference(&vb).union(&va.intersection(&vb));
            prop_assert_eq!(rebuilt, va);
        }
    }
}
