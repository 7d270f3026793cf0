//! Dense truncated tensor algebra `T^(l)(R^d)`.
//!
//! Coefficients are stored level by level. Inside level `k` the word
//! `(i_1, ..., i_k)` (letters `0..d`) sits at offset `Σ i_j d^(k-j)`, so the
//! coefficient array is ordered by length and then lexicographically.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use core::ops::{Add, Mul, Neg, Sub};

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::error::{Error, Result};

/// A word over the alphabet `0..d`, stored with zero-based letters.
pub type Word = Vec<u8>;

/// Number of coefficients in `T^(l)(R^d)`: `Σ_{k=0..l} d^k`.
pub fn tensor_size(dim: usize, level: usize) -> usize {
    level_offset(dim, level + 1)
}

/// Offset of the first coefficient of level `k`.
pub fn level_offset(dim: usize, k: usize) -> usize {
    let mut off = 0;
    let mut pow = 1;
    for _ in 0..k {
        off += pow;
        pow *= dim;
    }
    off
}

/// Flat index of `word` inside its level block.
pub fn word_index(dim: usize, word: &[u8]) -> usize {
    word.iter().fold(0, |acc, &c| acc * dim + c as usize)
}

/// Inverse of [`word_index`] for a word of length `len`.
pub fn word_from_index(dim: usize, len: usize, mut idx: usize) -> Word {
    let mut w = vec![0u8; len];
    for slot in w.iter_mut().rev() {
        *slot = (idx % dim) as u8;
        idx /= dim;
    }
    w
}

/// All words of length `1..=max_len`, in coefficient-array order.
pub fn all_words(dim: usize, max_len: usize) -> Vec<Word> {
    let mut out = Vec::new();
    let mut pow = 1usize;
    for len in 1..=max_len {
        pow *= dim;
        for idx in 0..pow {
            out.push(word_from_index(dim, len, idx));
        }
    }
    out
}

/// Renders a zero-based word with one-based letters, e.g. `[0, 1]` as `12`.
/// Letters are dot-separated when the alphabet has more than nine letters.
pub fn format_word(dim: usize, word: &[u8]) -> String {
    let mut s = String::new();
    for (i, &c) in word.iter().enumerate() {
        if dim > 9 && i > 0 {
            s.push('.');
        }
        let _ = write!(s, "{}", c as usize + 1);
    }
    s
}

/// Parses the output of [`format_word`] back into a zero-based word.
pub fn parse_word(dim: usize, text: &str) -> Result<Word> {
    let bad = || Error::invalid(alloc::format!("malformed word `{text}` for dim {dim}"));
    let letters: Vec<usize> = if text.contains('.') || dim > 9 {
        text.split('.')
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    } else {
        text.trim()
            .chars()
            .map(|c| c.to_digit(10).map(|v| v as usize).ok_or_else(bad))
            .collect::<Result<_>>()?
    };
    if letters.is_empty() || letters.iter().any(|&c| c == 0 || c > dim) {
        return Err(bad());
    }
    Ok(letters.into_iter().map(|c| (c - 1) as u8).collect())
}

/// Element of the truncated tensor algebra `T^(l)(R^d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedTensor {
    dim: usize,
    level: usize,
    coeffs: Vec<f64>,
}

impl TruncatedTensor {
    pub fn zero(dim: usize, level: usize) -> Self {
        assert!(dim >= 1, "tensor dimension must be positive");
        Self {
            dim,
            level,
            coeffs: vec![0.0; tensor_size(dim, level)],
        }
    }

    /// The unit `1`.
    pub fn one(dim: usize, level: usize) -> Self {
        let mut t = Self::zero(dim, level);
        t.coeffs[0] = 1.0;
        t
    }

    pub fn from_coeffs(dim: usize, level: usize, coeffs: Vec<f64>) -> Result<Self> {
        let expected = tensor_size(dim, level);
        if coeffs.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: coeffs.len(),
            });
        }
        Ok(Self { dim, level, coeffs })
    }

    /// Embeds a vector of `R^d` as a level-1 element.
    pub fn from_vector(level: usize, v: &[f64]) -> Self {
        let mut t = Self::zero(v.len(), level);
        if level >= 1 {
            t.coeffs[1..=v.len()].copy_from_slice(v);
        }
        t
    }

    /// `exp(v) = Σ v^{⊗k}/k!` for a pure level-1 vector, built level by level.
    pub fn exp_of_vector(level: usize, v: &[f64]) -> Self {
        let dim = v.len();
        let mut t = Self::one(dim, level);
        let mut prev_off = 0;
        let mut prev_len = 1;
        for k in 1..=level {
            let off = prev_off + prev_len;
            let inv_k = 1.0 / k as f64;
            for i in 0..prev_len {
                let c = t.coeffs[prev_off + i] * inv_k;
                for (j, &vj) in v.iter().enumerate() {
                    t.coeffs[off + i * dim + j] = c * vj;
                }
            }
            prev_off = off;
            prev_len *= dim;
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn scalar(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn block(&self, k: usize) -> &[f64] {
        let off = level_offset(self.dim, k);
        &self.coeffs[off..off + self.dim.pow(k as u32)]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut [f64] {
        let off = level_offset(self.dim, k);
        let len = self.dim.pow(k as u32);
        &mut self.coeffs[off..off + len]
    }

    /// Coefficient of `e_(word)`; words longer than the level read as zero.
    pub fn coeff(&self, word: &[u8]) -> f64 {
        if word.len() > self.level {
            return 0.0;
        }
        let off = level_offset(self.dim, word.len());
        self.coeffs[off + word_index(self.dim, word)]
    }

    pub fn set_coeff(&mut self, word: &[u8], value: f64) {
        let off = level_offset(self.dim, word.len());
        self.coeffs[off + word_index(self.dim, word)] = value;
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.level != other.level {
            return Err(Error::ShapeMismatch {
                expected_dim: self.dim,
                expected_level: self.level,
                found_dim: other.dim,
                found_level: other.level,
            });
        }
        Ok(())
    }

    /// Truncated tensor product.
    pub fn tensor_mul(&self, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut out = Self::zero(self.dim, self.level);
        mul_accumulate(self, other, &mut out.coeffs);
        Ok(out)
    }

    /// Truncated exponential series. Needs a zero scalar part.
    pub fn exp(&self) -> Result<Self> {
        if self.scalar() != 0.0 {
            return Err(Error::NonZeroScalar(self.scalar()));
        }
        let one = Self::one(self.dim, self.level);
        let mut acc = one.clone();
        for k in (1..=self.level).rev() {
            let mut next = &(self * &acc) * (1.0 / k as f64);
            next.coeffs[0] += 1.0;
            acc = next;
        }
        Ok(acc)
    }

    /// Truncated Mercator series `log(1 + x)`. Needs a unit scalar part.
    pub fn log(&self) -> Result<Self> {
        if self.scalar() != 1.0 {
            return Err(Error::NotGroupLike(self.scalar()));
        }
        let mut x = self.clone();
        x.coeffs[0] = 0.0;
        if self.level == 0 {
            return Ok(x);
        }
        let mut s = Self::zero(self.dim, self.level);
        s.coeffs[0] = 1.0 / self.level as f64;
        for k in (1..self.level).rev() {
            let mut next = -(&x * &s);
            next.coeffs[0] += 1.0 / k as f64;
            s = next;
        }
        Ok(&x * &s)
    }

    /// Inverse of an element with unit scalar part.
    pub fn group_inverse(&self) -> Result<Self> {
        if self.scalar() != 1.0 {
            return Err(Error::NotGroupLike(self.scalar()));
        }
        let mut x = self.clone();
        x.coeffs[0] = 0.0;
        let mut s = Self::one(self.dim, self.level);
        for _ in 0..self.level {
            let mut next = -(&x * &s);
            next.coeffs[0] += 1.0;
            s = next;
        }
        Ok(s)
    }

    /// Directional derivative of `exp` at `self` along `direction`:
    /// `Σ_k 1/k! Σ_{i<k} a^i ⊗ b ⊗ a^{k-1-i}`.
    pub fn exp_directional(&self, direction: &Self) -> Result<Self> {
        self.check_shape(direction)?;
        if self.scalar() != 0.0 {
            return Err(Error::NonZeroScalar(self.scalar()));
        }
        let l = self.level;
        let mut powers = Vec::with_capacity(l);
        powers.push(Self::one(self.dim, l));
        for i in 1..l {
            let p = &powers[i - 1] * self;
            powers.push(p);
        }
        let mut out = Self::zero(self.dim, l);
        let mut fact = 1.0;
        for k in 1..=l {
            fact *= k as f64;
            for i in 0..k {
                let term = &(&powers[i] * direction) * &powers[k - 1 - i];
                out.axpy(1.0 / fact, &term);
            }
        }
        Ok(out)
    }

    /// Dilation `δ_λ`: the level-k block is scaled by `λ^k`.
    pub fn dilate(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(alloc::format!(
                "dilation factor must be positive, got {lambda}"
            )));
        }
        let mut out = self.clone();
        out.dilate_in_place(lambda);
        Ok(out)
    }

    pub(crate) fn dilate_in_place(&mut self, lambda: f64) {
        let mut f = 1.0;
        for k in 1..=self.level {
            f *= lambda;
            for c in self.block_mut(k) {
                *c *= f;
            }
        }
    }

    /// Projection onto `T^(level)` for `level <= self.level`.
    pub fn truncate(&self, level: usize) -> Self {
        let level = level.min(self.level);
        Self {
            dim: self.dim,
            level,
            coeffs: self.coeffs[..tensor_size(self.dim, level)].to_vec(),
        }
    }

    /// Hilbert–Schmidt norm of the whole coefficient array.
    pub fn hs_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `ρ_HS(a, b) = ||b - a||_HS`.
    pub fn hs_distance(&self, other: &Self) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.coeffs.len(), other.coeffs.len(), "tensor shape mismatch");
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += alpha * b;
        }
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn mul_accumulate(a: &TruncatedTensor, b: &TruncatedTensor, out: &mut [f64]) {
    let d = a.dim;
    let mut pow = vec![1usize; a.level + 1];
    for k in 1..=a.level {
        pow[k] = pow[k - 1] * d;
    }
    for k in 0..=a.level {
        let off_k = level_offset(d, k);
        for p in 0..=k {
            let q = k - p;
            let ablk = a.block(p);
            let bblk = b.block(q);
            if bblk.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (ia, &x) in ablk.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let base = off_k + ia * pow[q];
                for (o, &y) in out[base..base + pow[q]].iter_mut().zip(bblk) {
                    *o += x * y;
                }
            }
        }
    }
}

impl Mul for &TruncatedTensor {
    type Output = TruncatedTensor;

    /// Panics on shape mismatch; use [`TruncatedTensor::tensor_mul`] for a checked product.
    fn mul(self, rhs: Self) -> TruncatedTensor {
        self.tensor_mul(rhs).expect("tensor shape mismatch")
    }
}

impl Mul<f64> for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn mul(self, rhs: f64) -> TruncatedTensor {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= rhs;
        }
        out
    }
}

impl Add for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn add(self, rhs: Self) -> TruncatedTensor {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &TruncatedTensor {
    type Output = TruncatedTensor;

    fn sub(self, rhs: Self) -> TruncatedTensor {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Neg for TruncatedTensor {
    type Output = TruncatedTensor;

    fn neg(mut self) -> TruncatedTensor {
        for c in &mut self.coeffs {
            *c = -*c;
        }
        self
    }
}
