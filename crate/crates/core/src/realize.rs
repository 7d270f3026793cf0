//! Concrete piecewise-linear paths with a prescribed log-signature.
//!
//! Each Lyndon word gets a generator loop built from the commutator of the
//! loops of its standard factors. Adding level by level, the correction
//! needed at level `k` is central in `G^(k)`, so generator loops scaled by
//! `|λ|^{1/k}` fix level `k` without touching lower levels.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::lie::{standard_factorization, LieBasis, LieCoordinates};
use crate::path::PiecewiseLinearPath;
use crate::tensor::{format_word, level_offset, TruncatedTensor};

/// Coefficients below this fraction of `max(1, ‖u‖)` are not realized.
const NEGLIGIBLE: f64 = 1e-13;

fn generator_increments(dim: usize, word: &[u8]) -> Vec<Vec<f64>> {
    if word.len() == 1 {
        let mut e = vec![0.0; dim];
        e[word[0] as usize] = 1.0;
        return vec![e];
    }
    let (u, v) = standard_factorization(word).expect("checked Lyndon");
    let pu = generator_increments(dim, u);
    let pv = generator_increments(dim, v);
    let rev = |p: &[Vec<f64>]| -> Vec<Vec<f64>> { p.iter().rev().map(|s| s.iter().map(|x| -x).collect()).collect() };
    let mut out = pu.clone();
    out.extend(pv.iter().cloned());
    out.extend(rev(&pu));
    out.extend(rev(&pv));
    out
}

/// Loop from the origin whose log-signature in `g^(|word|)` is the basis
/// bracket of `word`, plus terms of higher degree only.
pub fn generator_path(dim: usize, word: &[u8]) -> Result<PiecewiseLinearPath> {
    if word.iter().any(|&c| c as usize >= dim) {
        return Err(Error::invalid(format!("word letter out of range for dimension {dim}")));
    }
    if standard_factorization(word).is_none() && word.len() != 1 {
        return Err(Error::NotLyndon(format_word(dim, word)));
    }
    Ok(PiecewiseLinearPath::from_increments(
        dim,
        &generator_increments(dim, word),
    ))
}

/// Path on `[0, 1]`, parametrized by arc length, whose level-`l`
/// log-signature equals `u`.
pub fn path_from_log_signature(basis: &LieBasis, u: &LieCoordinates) -> Result<PiecewiseLinearPath> {
    let dim = basis.dim();
    let level = basis.level();
    let target = basis.exp(u)?;
    let scale = target.hs_norm().max(1.0);

    let lvl1 = &u.coords()[u.level_range(1)];
    let mut increments: Vec<Vec<f64>> = Vec::new();
    if lvl1.iter().any(|&v| v != 0.0) {
        increments.push(lvl1.to_vec());
    }
    let mut path = PiecewiseLinearPath::from_increments(dim, &increments);

    for k in 2..=level {
        let current = path.signature(k).group;
        let w = current.group_inverse()?.tensor_mul(&target.truncate(k))?.log()?;

        // Lift the pure degree-k block into the full-level algebra for projection.
        let mut lifted = TruncatedTensor::zero(dim, level);
        let off = level_offset(dim, k);
        lifted.coeffs_mut()[off..off + w.block(k).len()].copy_from_slice(w.block(k));
        let (coords, _) = basis.project_with_residual(&lifted)?;

        for i in u.level_range(k) {
            let lambda = coords.coords()[i];
            if lambda.abs() <= NEGLIGIBLE * scale {
                continue;
            }
            let mut g = generator_path(dim, &basis.words()[i])?.scale_path(lambda.abs().powf(1.0 / k as f64));
            if lambda < 0.0 {
                g = g.reverse();
            }
            path = path.concat(&g)?;
        }
    }
    Ok(path.arc_length_parametrized().simplified())
}

/// Two-sided proxy for the Carnot–Carathéodory norm of `exp u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcBounds {
    /// Homogeneous norm `max_k ‖(exp u)_k‖^{1/k}`.
    pub lower: f64,
    /// 1-variation of the realized path.
    pub upper: f64,
}

pub fn homogeneous_norm(basis: &LieBasis, u: &LieCoordinates) -> Result<f64> {
    let g = basis.exp(u)?;
    Ok((1..=basis.level())
        .map(|k| {
            let n = g.block(k).iter().map(|x| x * x).sum::<f64>().sqrt();
            n.powf(1.0 / k as f64)
        })
        .fold(0.0, f64::max))
}

pub fn cc_norm_bounds(basis: &LieBasis, u: &LieCoordinates) -> Result<CcBounds> {
    if u.is_zero() {
        return Ok(CcBounds { lower: 0.0, upper: 0.0 });
    }
    let path = path_from_log_signature(basis, u)?;
    Ok(CcBounds {
        lower: homogeneous_norm(basis, u)?,
        upper: path.one_variation(),
    })
}
