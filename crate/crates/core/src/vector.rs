//! Finitely supported real sequences, index sets and block partitions.
//!
//! Coordinates are indexed from 1 in the public API, matching the canonical
//! basis `e_1, e_2, ...`. Storage is a dense `Vec<f64>` of length `dim`.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

/// A finitely supported real sequence; coordinates past `dim` are zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Vector {
    coords: Vec<f64>,
}

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidVector("dimension must be at least 1".into()));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidVector(format!(
                "coordinate {} is not finite ({})",
                i + 1,
                coords[i]
            )));
        }
        Ok(Self { coords })
    }

    /// Builds a vector from trusted coordinates. Panics on empty or non-finite input.
    pub fn from_slice(coords: &[f64]) -> Self {
        Self::new(coords.to_vec()).expect("valid coordinates")
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim.max(1)],
        }
    }

    /// The canonical basis vector `e_i` (1-based) in dimension `dim`.
    pub fn basis(i: usize, dim: usize) -> Self {
        assert!(i >= 1 && i <= dim, "basis index {i} outside 1..={dim}");
        let mut v = Self::zeros(dim);
        v.coords[i - 1] = 1.0;
        v
    }

    /// Indicator of `set`, i.e. `sum_{i in set} e_i`.
    pub fn indicator(set: &IndexSet, dim: usize) -> Self {
        let mut v = Self::zeros(dim);
        for i in set.iter() {
            if i <= dim {
                v.coords[i - 1] = 1.0;
            }
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.coords
    }

    /// Coordinate `i` (1-based); zero beyond `dim`.
    pub fn get(&self, i: usize) -> f64 {
        assert!(i >= 1, "coordinates are indexed from 1");
        self.coords.get(i - 1).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> IndexSet {
        IndexSet::from_sorted_unchecked(
            self.coords
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(i, _)| i + 1)
                .collect(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| *c == 0.0)
    }

    pub fn abs(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|c| c.abs()).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            coords: self.coords.iter().map(|x| x * c).collect(),
        }
    }

    /// Coordinatewise product; the result has the larger dimension.
    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            coords: self.coords.iter().map(|c| f(*c)).collect(),
        }
    }

    /// Zero-pads (or truncates zero tail) to `dim`.
    pub fn resized(&self, dim: usize) -> Self {
        let mut coords = self.coords.clone();
        coords.resize(dim.max(1), 0.0);
        Self { coords }
    }

    pub fn max_abs(&self) -> f64 {
        self.coords.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn l2(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let dim = self.dim().max(other.dim());
        Self {
            coords: (0..dim)
                .map(|i| {
                    f(
                        self.coords.get(i).copied().unwrap_or(0.0),
                        other.coords.get(i).copied().unwrap_or(0.0),
                    )
                })
                .collect(),
        }
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Returns `1_A x`.
pub fn restrict(x: &Vector, a: &IndexSet) -> Vector {
    let coords = x
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, c)| if a.contains(i + 1) { *c } else { 0.0 })
        .collect();
    Vector { coords }
}

/// A finite set of 1-based coordinate indices, kept sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        if indices.contains(&0) {
            return Err(Error::InvalidVector("indices start at 1".into()));
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self { indices })
    }

    /// The interval `{lo, ..., hi}` (empty when `hi < lo`).
    pub fn interval(lo: usize, hi: usize) -> Self {
        assert!(lo >= 1, "indices start at 1");
        Self {
            indices: (lo..=hi).collect(),
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    fn from_sorted_unchecked(indices: Vec<usize>) -> Self {
        Self { indices }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn min(&self) -> Option<usize> {
        self.indices.first().copied()
    }

    pub fn max(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.indices.iter().all(|i| !other.contains(*i))
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.indices.iter().all(|i| other.contains(*i))
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::new(self.iter().chain(other.iter())).expect("indices already valid")
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let contiguous = self.indices.windows(2).all(|w| w[1] == w[0] + 1);
        match (self.min(), self.max()) {
            (Some(lo), Some(hi)) if contiguous && hi > lo => write!(f, "{{{lo}..{hi}}}"),
            _ => {
                write!(f, "{{")?;
                for (k, i) in self.indices.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{i}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Ordered list of pairwise disjoint blocks `A_1, A_2, ...`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Partition {
    blocks: Vec<IndexSet>,
}

impl Partition {
    /// Blocks must be nonempty, pairwise disjoint and ordered by their minimum.
    pub fn new(blocks: Vec<IndexSet>) -> Result<Self> {
        for (k, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::ShapeMismatch(format!("block {} is empty", k + 1)));
            }
        }
        for k in 1..blocks.len() {
            if blocks[k].min() <= blocks[k - 1].min() {
                return Err(Error::ShapeMismatch(format!(
                    "blocks {} and {} are not ordered",
                    k,
                    k + 1
                )));
            }
        }
        for i in 0..blocks.len() {
            for j in i + 1..blocks.len() {
                if !blocks[i].is_disjoint(&blocks[j]) {
                    return Err(Error::ShapeMismatch(format!(
                        "blocks {} and {} overlap",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { blocks })
    }

    /// The dyadic blocks `A_n = {2^(n-1), ..., 2^n - 1}` for `n = 1..=count`.
    pub fn dyadic(count: usize) -> Self {
        Self {
            blocks: (1..=count)
                .map(|n| IndexSet::interval(1 << (n - 1), (1 << n) - 1))
                .collect(),
        }
    }

    /// The single dyadic block `A_n`.
    pub fn dyadic_block(n: usize) -> IndexSet {
        assert!(n >= 1);
        IndexSet::interval(1 << (n - 1), (1 << n) - 1)
    }

    /// `count` consecutive blocks of `size` coordinates starting at coordinate 1.
    pub fn uniform(size: usize, count: usize) -> Self {
        assert!(size >= 1);
        Self {
            blocks: (0..count)
                .map(|k| IndexSet::interval(k * size + 1, (k + 1) * size))
                .collect(),
        }
    }

    pub fn blocks(&self) -> &[IndexSet] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Largest index covered by any block.
    pub fn max_index(&self) -> usize {
        self.blocks
            .iter()
            .filter_map(|b| b.max())
            .max()
            .unwrap_or(0)
    }

    /// True when the blocks cover exactly `{1, ..., max_index}`.
    pub fn is_complete(&self) -> bool {
        let total: usize = self.blocks.iter().map(|b| b.len()).sum();
        total == self.max_index()
    }

    /// Index of the block containing coordinate `i`, if any.
    pub fn block_of(&self, i: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(i))
    }

    pub fn union(&self) -> IndexSet {
        IndexSet::new(
            self.blocks
                .iter()
                .flat_map(|b| b.iter().collect::<Vec<_>>()),
        )
        .expect("indices already valid")
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, b) in self.blocks.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restrict_examples() {
        let x = Vector::from_slice(&[1.0, 2.0, 3.0]);
        let a = IndexSet::new([1, 3]).unwrap();
        assert_eq!(restrict(&x, &a), Vector::from_slice(&[1.0, 0.0, 3.0]));
        assert_eq!(restrict(&x, &x.support()), x);
        assert!(restrict(&x, &IndexSet::empty()).is_zero());
        let once = restrict(&x, &a);
        assert_eq!(restrict(&once, &a), once);
    }

    #[test]
    fn vector_rejects_bad_input() {
        assert!(Vector::new(vec![]).is_err());
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn support_uses_exact_zero() {
        let x = Vector::from_slice(&[0.0, 1e-300, 0.0, -2.0]);
        assert_eq!(x.support(), IndexSet::new([2, 4]).unwrap());
    }

    #[test]
    fn dyadic_blocks() {
        let p = Partition::dyadic(4);
        assert_eq!(p.blocks()[3], IndexSet::interval(8, 15));
        assert_eq!(p.blocks()[0], IndexSet::interval(1, 1));
        assert!(p.is_complete());
        assert_eq!(p.max_index(), 15);
    }

    #[test]
    fn partition_validation() {
        let a = IndexSet::interval(1, 3);
        let b = IndexSet::interval(3, 5);
        assert!(Partition::new(vec![a.clone(), b]).is_err());
        let c = IndexSet::interval(4, 5);
        assert!(Partition::new(vec![c.clone(), a.clone()]).is_err());
        assert!(Partition::new(vec![a, c]).is_ok());
        let gap = Partition::new(vec![IndexSet::interval(1, 2), IndexSet::interval(5, 6)]).unwrap();
        assert!(!gap.is_complete());
    }
}
