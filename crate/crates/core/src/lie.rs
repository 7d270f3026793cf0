//! Free nilpotent Lie algebra `g^(l)` in Lyndon coordinates.
//!
//! Basis elements are Lyndon words bracketed along their standard
//! factorization `w = u·v` (`v` the longest proper Lyndon suffix), which
//! agrees with right-nested bracketing whenever the latter is nonzero.
//! Coordinates are ordered by word length, then lexicographically. That
//! ordering is a convention of this crate; coordinate output is
//! Lyndon-specific.
//!
//! The Lyndon basis is not orthonormal for the Hilbert–Schmidt inner
//! product, so norms of Lie elements are always taken after [`LieBasis::embed`].

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::{DMatrix, DVector};

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::tensor::{format_word, level_offset, TruncatedTensor, Word};

/// Relative residual above which [`LieBasis::project`] rejects its input.
pub const LIE_RESIDUAL_TOL: f64 = 1e-10;

fn mobius(mut n: usize) -> i64 {
    let mut result = 1;
    let mut p = 2;
    while p * p <= n {
        if n.is_multiple_of(p) {
            n /= p;
            if n.is_multiple_of(p) {
                return 0;
            }
            result = -result;
        }
        p += 1;
    }
    if n > 1 {
        result = -result;
    }
    result
}

/// `dim L_k` by Witt's formula `(1/k) Σ_{m|k} μ(m) d^{k/m}`.
pub fn witt_dimension(dim: usize, k: usize) -> usize {
    assert!(dim >= 1 && k >= 1, "witt_dimension needs d >= 1 and k >= 1");
    let mut total: i128 = 0;
    for m in 1..=k {
        if k.is_multiple_of(m) {
            total += mobius(m) as i128 * (dim as i128).pow((k / m) as u32);
        }
    }
    (total / k as i128) as usize
}

/// `ν = Σ_{k=1..l} k · dim L_k`, the homogeneous dimension of `g^(l)`.
pub fn graded_nu(dim: usize, level: usize) -> usize {
    (1..=level).map(|k| k * witt_dimension(dim, k)).sum()
}

/// `dim g^(l) = Σ_{k=1..l} dim L_k`.
pub fn lie_dimension(dim: usize, level: usize) -> usize {
    (1..=level).map(|k| witt_dimension(dim, k)).sum()
}

pub fn is_lyndon(word: &[u8]) -> bool {
    !word.is_empty() && (1..word.len()).all(|i| word < &word[i..])
}

/// Lyndon words of length `1..=max_len` over `dim` letters, ordered by
/// length and then lexicographically.
pub fn lyndon_words(dim: usize, max_len: usize) -> Vec<Word> {
    let mut out = Vec::new();
    if max_len == 0 || dim == 0 {
        return out;
    }
    let top = (dim - 1) as u8;
    let mut w: Word = vec![0];
    loop {
        out.push(w.clone());
        let m = w.len();
        while w.len() < max_len {
            let c = w[w.len() - m];
            w.push(c);
        }
        while w.last() == Some(&top) {
            w.pop();
        }
        match w.last_mut() {
            Some(c) => *c += 1,
            None => break,
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Standard factorization of a Lyndon word of length at least 2.
pub fn standard_factorization(word: &[u8]) -> Option<(&[u8], &[u8])> {
    if word.len() < 2 || !is_lyndon(word) {
        return None;
    }
    (1..word.len())
        .find(|&i| is_lyndon(&word[i..]))
        .map(|i| word.split_at(i))
}

/// Level-`|word|` block of the bracket polynomial `e_[word]` along the
/// standard factorization.
fn bracket_block(dim: usize, word: &[u8]) -> Vec<f64> {
    if word.len() == 1 {
        let mut b = vec![0.0; dim];
        b[word[0] as usize] = 1.0;
        return b;
    }
    let (u, v) = standard_factorization(word).expect("bracket of a non-Lyndon word");
    let bu = bracket_block(dim, u);
    let bv = bracket_block(dim, v);
    commutator_blocks(&bu, &bv)
}

/// `[a, b] = a⊗b − b⊗a` for two homogeneous blocks.
pub(crate) fn commutator_blocks(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len() * b.len();
    let mut out = vec![0.0; n];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i * b.len() + j] += x * y;
        }
    }
    for (j, &y) in b.iter().enumerate() {
        for (i, &x) in a.iter().enumerate() {
            out[j * a.len() + i] -= y * x;
        }
    }
    out
}

/// Coordinates of an element of `g^(l)` in the Lyndon basis.
#[derive(Debug, Clone, PartialEq)]
pub struct LieCoordinates {
    dim: usize,
    level: usize,
    coords: Vec<f64>,
}

impl LieCoordinates {
    pub fn zero(dim: usize, level: usize) -> Self {
        Self {
            dim,
            level,
            coords: vec![0.0; lie_dimension(dim, level)],
        }
    }

    pub fn new(dim: usize, level: usize, coords: Vec<f64>) -> Result<Self> {
        let expected = lie_dimension(dim, level);
        if coords.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: coords.len(),
            });
        }
        Ok(Self { dim, level, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Coordinate range holding the degree-`k` component.
    pub fn level_range(&self, k: usize) -> Range<usize> {
        let start = lie_dimension(self.dim, k - 1);
        start..start + witt_dimension(self.dim, k)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0.0)
    }

    /// Projection `π^(level)` onto a lower level.
    pub fn truncate(&self, level: usize) -> Self {
        let level = level.min(self.level);
        Self {
            dim: self.dim,
            level,
            coords: self.coords[..lie_dimension(self.dim, level)].to_vec(),
        }
    }

    /// Dilation: degree-`k` coordinates scaled by `λ^k`.
    pub fn dilate(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for k in 1..=self.level {
            let f = lambda.powi(k as i32);
            for i in self.level_range(k) {
                out.coords[i] *= f;
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coords.iter_mut().for_each(|c| *c *= s);
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Lyndon basis of `g^(l)` with cached bracket expansions and per-level
/// normal-equation factorizations for projection.
#[derive(Debug, Clone)]
pub struct LieBasis {
    dim: usize,
    level: usize,
    words: Vec<Word>,
    blocks: Vec<Vec<f64>>,
    gram_factors: Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    metric: DMatrix<f64>,
}

impl LieBasis {
    pub fn new(dim: usize, level: usize) -> Self {
        assert!(dim >= 1 && level >= 1, "Lie basis needs d >= 1 and l >= 1");
        let words = lyndon_words(dim, level);
        let blocks: Vec<Vec<f64>> = words.iter().map(|w| bracket_block(dim, w)).collect();
        let m = words.len();
        let mut metric = DMatrix::zeros(m, m);
        let mut gram_factors = Vec::with_capacity(level);
        let mut start = 0;
        for k in 1..=level {
            let n = witt_dimension(dim, k);
            let mut g = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = blocks[start + i]
                        .iter()
                        .zip(&blocks[start + j])
                        .map(|(a, b)| a * b)
                        .sum();
                    g[(i, j)] = dot;
                    metric[(start + i, start + j)] = dot;
                }
            }
            gram_factors.push(g.cholesky().expect("Lyndon brackets are linearly independent"));
            start += n;
        }
        Self {
            dim,
            level,
            words,
            blocks,
            gram_factors,
            metric,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Lyndon words in coordinate order.
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word_label(&self, i: usize) -> alloc::string::String {
        format_word(self.dim, &self.words[i])
    }

    /// Index of a Lyndon word in the coordinate vector.
    pub fn index_of(&self, word: &[u8]) -> Option<usize> {
        self.words.iter().position(|w| w.as_slice() == word)
    }

    /// HS Gram matrix of the basis, block diagonal by degree.
    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    /// Level-`|word|` block of the basis element at `index`.
    pub fn block(&self, index: usize) -> &[f64] {
        &self.blocks[index]
    }

    fn check(&self, c: &LieCoordinates) -> Result<()> {
        if c.dim != self.dim || c.level != self.level {
            return Err(Error::ShapeMismatch {
                expected_dim: self.dim,
                expected_level: self.level,
                found_dim: c.dim,
                found_level: c.level,
            });
        }
        Ok(())
    }

    pub fn embed(&self, c: &LieCoordinates) -> Result<TruncatedTensor> {
        self.check(c)?;
        let mut t = TruncatedTensor::zero(self.dim, self.level);
        for (i, (&coef, word)) in c.coords.iter().zip(&self.words).enumerate() {
            if coef == 0.0 {
                continue;
            }
            let off = level_offset(self.dim, word.len());
            for (slot, &b) in t.coeffs_mut()[off..].iter_mut().zip(&self.blocks[i]) {
                *slot += coef * b;
            }
        }
        Ok(t)
    }

    /// Least-squares coordinates and the relative residual of re-embedding.
    pub fn project_with_residual(&self, a: &TruncatedTensor) -> Result<(LieCoordinates, f64)> {
        self.project_against(a, a.hs_norm())
    }

    /// Residual measured relative to `reference` instead of `‖a‖`.
    fn project_against(&self, a: &TruncatedTensor, reference: f64) -> Result<(LieCoordinates, f64)> {
        if a.dim() != self.dim || a.level() != self.level {
            return Err(Error::ShapeMismatch {
                expected_dim: self.dim,
                expected_level: self.level,
                found_dim: a.dim(),
                found_level: a.level(),
            });
        }
        let mut coords = Vec::with_capacity(self.words.len());
        let mut res2 = a.scalar() * a.scalar();
        let mut start = 0;
        for k in 1..=self.level {
            let n = witt_dimension(self.dim, k);
            let blk = a.block(k);
            let rhs = DVector::from_iterator(
                n,
                (0..n).map(|i| self.blocks[start + i].iter().zip(blk).map(|(x, y)| x * y).sum()),
            );
            let sol = self.gram_factors[k - 1].solve(&rhs);
            let mut recon = vec![0.0; blk.len()];
            for i in 0..n {
                for (r, &b) in recon.iter_mut().zip(&self.blocks[start + i]) {
                    *r += sol[i] * b;
                }
            }
            res2 += recon.iter().zip(blk).map(|(r, b)| (r - b) * (r - b)).sum::<f64>();
            coords.extend(sol.iter().copied());
            start += n;
        }
        let residual = if reference > 0.0 { res2.sqrt() / reference } else { 0.0 };
        Ok((
            LieCoordinates {
                dim: self.dim,
                level: self.level,
                coords,
            },
            residual,
        ))
    }

    /// Coordinates of a Lie element; inputs off the Lie subspace are rejected.
    pub fn project(&self, a: &TruncatedTensor) -> Result<LieCoordinates> {
        let (c, residual) = self.project_with_residual(a)?;
        if residual > LIE_RESIDUAL_TOL {
            return Err(Error::NotLie { residual });
        }
        Ok(c)
    }

    /// `exp` of a Lie element given in coordinates.
    pub fn exp(&self, c: &LieCoordinates) -> Result<TruncatedTensor> {
        self.embed(c)?.exp()
    }

    /// Coordinates of `log g` for a group element `g`.
    /// Rounding in `log` is judged against `‖g‖`, so group elements close
    /// to the identity are not rejected.
    pub fn log(&self, g: &TruncatedTensor) -> Result<LieCoordinates> {
        let a = g.log()?;
        let (c, residual) = self.project_against(&a, a.hs_norm().max(g.hs_norm()))?;
        if residual > LIE_RESIDUAL_TOL {
            return Err(Error::NotLie { residual });
        }
        Ok(c)
    }

    /// HS norm of the embedded element.
    pub fn hs_norm(&self, c: &LieCoordinates) -> Result<f64> {
        Ok(self.embed(c)?.hs_norm())
    }

    /// Group product in exponential coordinates, `log(exp(u) ⊗ exp(v))`.
    pub fn bch(&self, u: &LieCoordinates, v: &LieCoordinates) -> Result<LieCoordinates> {
        let g = self.exp(u)?.tensor_mul(&self.exp(v)?)?;
        self.log(&g)
    }
}
