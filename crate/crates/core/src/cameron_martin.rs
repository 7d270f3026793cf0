//! The Cameron–Martin operator `K` on a uniform grid.
//!
//! `K = C_H · I^a ∘ (t^β ·) ∘ I^β ∘ (s^{−β} ·)` with `β = |H − ½|`, `a = 1`
//! for `H ≥ ½` and `a = 2H` otherwise. Inputs `φ` are piecewise constant on
//! the `n` grid cells; outputs `h = Kφ` are node values. Every fractional
//! integral integrates its kernel exactly over each cell, so the map is a
//! product of diagonal and lower-triangular Toeplitz factors and both `K`
//! and `K⁻¹` cost `O(n²)`.
//!
//! `C_H` is calibrated so that the grid Gram matrix `K Kᵀ` reproduces
//! `R(T,T) = T^{2H}` exactly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fbm::{check_hurst, GridPath};

/// Relative residual of `K x = h` above which a path is rejected.
pub const REPRESENTABLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct CmOperator {
    hurst: f64,
    horizon: f64,
    steps: usize,
    scale: f64,
    inner: Vec<f64>,
    outer: Vec<f64>,
    /// Cell-average Toeplitz coefficients of `I^β`.
    frac: Vec<f64>,
    /// Node Toeplitz coefficients of the outer `I^a`.
    outer_int: Vec<f64>,
}

/// Cameron–Martin norm and the relative residual of the grid solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmNorm {
    pub norm: f64,
    pub residual: f64,
}

/// `out = T x` for the lower-triangular Toeplitz matrix with first column `c`.
fn toeplitz_mul(c: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        out[i] = (0..=i).map(|j| c[i - j] * x[j]).sum();
    }
    out
}

fn toeplitz_mul_transpose(c: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for j in 0..n {
        out[j] = (j..n).map(|i| c[i - j] * x[i]).sum();
    }
    out
}

fn toeplitz_solve(c: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|j| c[i - j] * x[j]).sum();
        x[i] = (b[i] - s) / c[0];
    }
    x
}

impl CmOperator {
    pub fn new(hurst: f64, horizon: f64, steps: usize) -> Result<Self> {
        check_hurst(hurst)?;
        if steps < 2 {
            return Err(Error::invalid(format!("steps must be at least 2, got {steps}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        let n = steps;
        let dt = horizon / n as f64;
        let beta = (hurst - 0.5).abs();
        let a = if hurst >= 0.5 { 1.0 } else { 2.0 * hurst };
        let fi = |j: usize| j as f64;

        let inner = (0..n)
            .map(|j| (fi(j + 1).powf(1.0 - beta) - fi(j).powf(1.0 - beta)) * dt.powf(-beta) / (1.0 - beta))
            .collect();
        let outer = (0..n)
            .map(|i| (fi(i + 1).powf(1.0 + beta) - fi(i).powf(1.0 + beta)) * dt.powf(beta) / (1.0 + beta))
            .collect();
        let g2 = libm::tgamma(beta + 2.0);
        let frac = (0..n)
            .map(|m| {
                let b1 = beta + 1.0;
                let core = if m == 0 {
                    1.0
                } else {
                    fi(m + 1).powf(b1) - 2.0 * fi(m).powf(b1) + fi(m - 1).powf(b1)
                };
                dt.powf(beta) / g2 * core
            })
            .collect();
        let ga = libm::tgamma(a + 1.0);
        let outer_int = (0..n)
            .map(|m| dt.powf(a) / ga * (fi(m + 1).powf(a) - fi(m).powf(a)))
            .collect();

        let mut op = Self {
            hurst,
            horizon,
            steps,
            scale: 1.0,
            inner,
            outer,
            frac,
            outer_int,
        };
        let mut e_last = vec![0.0; n];
        e_last[n - 1] = 1.0;
        let row = op.apply_transpose(&e_last);
        let g_nn = row.iter().map(|x| x * x).sum::<f64>() / dt;
        op.scale = (horizon.powf(2.0 * hurst) / g_nn).sqrt();
        Ok(op)
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// The calibrated constant `C_H`.
    pub fn normalization(&self) -> f64 {
        self.scale
    }

    /// Node values `h(t_1..t_n)` of `Kφ` for cell values `φ`.
    pub fn apply(&self, phi: &[f64]) -> Result<Vec<f64>> {
        self.check_len(phi.len())?;
        let x: Vec<f64> = phi.iter().zip(&self.inner).map(|(p, w)| p * w).collect();
        let mut y = toeplitz_mul(&self.frac, &x);
        y.iter_mut().zip(&self.outer).for_each(|(v, w)| *v *= w * self.scale);
        Ok(toeplitz_mul(&self.outer_int, &y))
    }

    /// `Kᵀ` applied to node weights.
    fn apply_transpose(&self, h: &[f64]) -> Vec<f64> {
        let mut y = toeplitz_mul_transpose(&self.outer_int, h);
        y.iter_mut().zip(&self.outer).for_each(|(v, w)| *v *= w * self.scale);
        let mut x = toeplitz_mul_transpose(&self.frac, &y);
        x.iter_mut().zip(&self.inner).for_each(|(v, w)| *v *= w);
        x
    }

    /// Cell values `φ` with `Kφ = h` at the nodes `t_1..t_n`.
    pub fn solve(&self, h: &[f64]) -> Result<Vec<f64>> {
        self.check_len(h.len())?;
        let mut y = toeplitz_solve(&self.outer_int, h);
        y.iter_mut().zip(&self.outer).for_each(|(v, w)| *v /= w * self.scale);
        let mut x = toeplitz_solve(&self.frac, &y);
        x.iter_mut().zip(&self.inner).for_each(|(v, w)| *v /= w);
        Ok(x)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.steps {
            return Err(Error::LengthMismatch {
                expected: self.steps,
                found: len,
            });
        }
        Ok(())
    }

    /// `h = Kφ` as a scalar grid path, `h(0) = 0`.
    pub fn apply_k(&self, phi: &[f64]) -> Result<GridPath> {
        let mut values = vec![0.0];
        values.extend(self.apply(phi)?);
        GridPath::new(self.horizon, 1, values)
    }

    /// Grid Gram matrix `G_ik = Σ_j K_ij K_kj / Δ`, an approximation of
    /// `R(t_i, t_k)` on the nodes `t_1..t_n`. Row-major.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.steps;
        let dt = self.dt();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            cols.push(self.apply(&e).expect("length matches"));
        }
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..=i {
                let s: f64 = (0..n).map(|j| cols[j][i] * cols[j][k]).sum::<f64>() / dt;
                g[i * n + k] = s;
                g[k * n + i] = s;
            }
        }
        g
    }

    /// `‖K⁻¹h‖_{L²}` summed in quadrature over coordinates.
    pub fn cm_norm(&self, h: &GridPath) -> Result<CmNorm> {
        if h.steps() != self.steps {
            return Err(Error::LengthMismatch {
                expected: self.steps,
                found: h.steps(),
            });
        }
        let scale = h.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if h.value(0).iter().any(|v| v.abs() > 1e-12 * scale.max(1e-300)) {
            return Err(Error::invalid("Cameron-Martin paths must start at the origin"));
        }
        let dt = self.dt();
        let mut total = 0.0;
        let mut res2 = 0.0;
        let mut h2 = 0.0;
        for k in 0..h.dim() {
            let nodes = &h.coordinate(k)[1..];
            let x = self.solve(nodes)?;
            total += dt * x.iter().map(|v| v * v).sum::<f64>();
            let back = self.apply(&x)?;
            res2 += back.iter().zip(nodes).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            h2 += nodes.iter().map(|v| v * v).sum::<f64>();
        }
        let residual = if h2 > 0.0 { (res2 / h2).sqrt() } else { 0.0 };
        if !total.is_finite() || residual > REPRESENTABLE_TOL {
            return Err(Error::NotRepresentable { residual });
        }
        Ok(CmNorm {
            norm: total.sqrt(),
            residual,
        })
    }
}

/// Cameron–Martin norm of a grid path; builds the operator for its grid.
pub fn cm_norm(h: &GridPath, hurst: f64) -> Result<CmNorm> {
    CmOperator::new(hurst, h.horizon(), h.steps())?.cm_norm(h)
}

/// Discrete q-variation `sup Σ |x_{t_{k+1}} − x_{t_k}|^q` over node subsets.
pub fn qvar_norm(p: &GridPath, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::invalid(format!("q must be at least 1, got {q}")));
    }
    let n = p.steps();
    let dist = |i: usize, j: usize| -> f64 {
        p.value(i)
            .iter()
            .zip(p.value(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut best = vec![0.0f64; n + 1];
    for j in 1..=n {
        best[j] = (0..j).map(|i| best[i] + dist(i, j).powf(q)).fold(0.0, f64::max);
    }
    Ok(best[n].powf(1.0 / q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::fbm_covariance;
    use proptest::prelude::*;

    #[test]
    fn brownian_case_is_cumulative_integration() {
        let op = CmOperator::new(0.5, 2.0, 8).unwrap();
        assert!((op.normalization() - 1.0).abs() < 1e-14);
        let h = op.apply(&[1.0; 8]).unwrap();
        for (i, v) in h.iter().enumerate() {
            assert!((v - 0.25 * (i + 1) as f64).abs() < 1e-14);
        }
        assert_eq!(op.apply(&[0.0; 8]).unwrap(), vec![0.0; 8]);
        let z = 1.7;
        let line = GridPath::new(2.0, 1, (0..=8).map(|i| z * 0.25 * i as f64).collect()).unwrap();
        // ‖h‖ = ‖ḣ‖_{L²[0,2]} = z·√2
        assert!((op.cm_norm(&line).unwrap().norm - z * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gram_matches_covariance() {
        for h in [0.35, 0.5, 0.7] {
            let n = 512;
            let op = CmOperator::new(h, 1.0, n).unwrap();
            let g = op.gram();
            let mut err = 0.0f64;
            let mut top = 0.0f64;
            for i in 0..n {
                for k in 0..n {
                    let r = fbm_covariance((i + 1) as f64 / n as f64, (k + 1) as f64 / n as f64, h);
                    err = err.max((g[i * n + k] - r).abs());
                    top = top.max(r.abs());
                }
            }
            assert!(err / top < 1e-2, "H={h}: {}", err / top);
        }
    }

    #[test]
    fn reproducing_kernel_norm() {
        // h_t = R(t, T) has ‖h‖² = R(T, T) = T^{2H}
        for h in [0.35, 0.5, 0.7] {
            let n = 512;
            let t_end = 1.5;
            let vals = (0..=n)
                .map(|i| fbm_covariance(t_end * i as f64 / n as f64, t_end, h))
                .collect();
            let g = GridPath::new(t_end, 1, vals).unwrap();
            let norm = cm_norm(&g, h).unwrap().norm;
            let expect = t_end.powf(h);
            assert!((norm - expect).abs() / expect < 2e-2, "H={h}: {norm} vs {expect}");
        }
    }

    #[test]
    fn scaling_law() {
        let n = 256;
        for h in [0.35, 0.5, 0.7] {
            for ratio in [2.0, 4.0] {
                let vals: Vec<f64> = (0..=n).map(|i| (i as f64 / n as f64 * 3.0).sin()).collect();
                let a = cm_norm(&GridPath::new(1.0, 1, vals.clone()).unwrap(), h).unwrap().norm;
                let b = cm_norm(&GridPath::new(ratio, 1, vals).unwrap(), h).unwrap().norm;
                let expect = ratio.powf(-h) * a;
                assert!((b - expect).abs() / expect < 1e-12);
            }
        }
    }

    #[test]
    fn origin_is_required() {
        let g = GridPath::new(1.0, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(cm_norm(&g, 0.5).is_err());
    }

    #[test]
    fn qvar_examples() {
        let mono = GridPath::new(1.0, 1, vec![0.0, 0.5, 2.0, 2.5]).unwrap();
        for q in [1.0, 2.0, 3.5] {
            let v = qvar_norm(&mono, q).unwrap();
            assert!((v - 2.5).abs() < 1e-14);
        }
        let zig = GridPath::new(1.0, 1, vec![0.0, 1.0, 0.0]).unwrap();
        for q in [1.0, 2.0, 3.0] {
            assert!((qvar_norm(&zig, q).unwrap() - 2f64.powf(1.0 / q)).abs() < 1e-14);
        }
        let wiggle = GridPath::new(1.0, 2, vec![0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 3.0]).unwrap();
        assert!((qvar_norm(&wiggle, 1.0).unwrap() - (1.0 + 1.0 + 5f64.sqrt())).abs() < 1e-14);
        assert!(qvar_norm(&zig, 0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn inverse_pair(h in 0.3..0.95f64, phi in proptest::collection::vec(-2.0..2.0f64, 64)) {
            let op = CmOperator::new(h, 1.0, 64).unwrap();
            let path = op.apply_k(&phi).unwrap();
            let norm = op.cm_norm(&path).unwrap().norm;
            let l2 = (phi.iter().map(|x| x * x).sum::<f64>() / 64.0).sqrt();
            prop_assert!((norm - l2).abs() <= 1e-9 * l2.max(1e-12));
        }

        #[test]
        fn is_a_norm(
            h in 0.3..0.95f64,
            a in proptest::collection::vec(-1.0..1.0f64, 33),
            b in proptest::collection::vec(-1.0..1.0f64, 33),
            s in -3.0..3.0f64,
        ) {
            let mk = |v: &[f64]| {
                let mut v = v.to_vec();
                v[0] = 0.0;
                GridPath::new(1.0, 1, v).unwrap()
            };
            let op = CmOperator::new(h, 1.0, 32).unwrap();
            let (pa, pb) = (mk(&a), mk(&b));
            let na = op.cm_norm(&pa).unwrap().norm;
            let nb = op.cm_norm(&pb).unwrap().norm;
            let sum: Vec<f64> = pa.values().iter().zip(pb.values()).map(|(x, y)| x + y).collect();
            let ns = op.cm_norm(&GridPath::new(1.0, 1, sum).unwrap()).unwrap().norm;
            prop_assert!(ns <= na + nb + 1e-9 * (na + nb));
            let nscaled = op.cm_norm(&pa.scale(s)).unwrap().norm;
            prop_assert!((nscaled - s.abs() * na).abs() <= 1e-9 * na.max(1.0));
        }
    }
}
