//! Truncated multivariate Taylor polynomials ("jets").
//!
//! A jet in `n` variables of order `p` stores the coefficients `c_m` of
//! `f(x0 + y) ≈ Σ_{|m| ≤ p} c_m y^m`. Monomials are ordered by total degree,
//! so the constant term is slot 0 and degree-1 terms follow in variable order.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

#[derive(Debug, Clone)]
pub struct JetSpace {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    degree_start: Vec<usize>,
    mul_table: Vec<(u32, u32, u32)>,
    /// Per variable: `(source, target, factor)` with `∂_v y^source = factor · y^target`.
    deriv_table: Vec<Vec<(u32, u32, f64)>>,
}

fn monomials_of_degree(nvars: usize, deg: usize) -> Vec<Vec<u8>> {
    // first variable most significant, decreasing exponent
    if nvars == 0 {
        return if deg == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in (0..=deg).rev() {
        for mut rest in monomials_of_degree(nvars - 1, deg - first) {
            rest.insert(0, first as u8);
            out.push(rest);
        }
    }
    out
}

impl JetSpace {
    pub fn new(nvars: usize, order: usize) -> Self {
        let mut monomials = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for deg in 0..=order {
            degree_start.push(monomials.len());
            monomials.extend(monomials_of_degree(nvars, deg));
        }
        degree_start.push(monomials.len());
        let find = |m: &[u8]| monomials.iter().position(|x| x.as_slice() == m);
        let mut mul_table = Vec::new();
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                let sum: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                if sum.iter().map(|&e| e as usize).sum::<usize>() <= order {
                    let k = find(&sum).expect("monomial within order");
                    mul_table.push((i as u32, j as u32, k as u32));
                }
            }
        }
        let mut deriv_table = vec![Vec::new(); nvars];
        for (v, table) in deriv_table.iter_mut().enumerate() {
            for (i, m) in monomials.iter().enumerate() {
                if m[v] > 0 {
                    let mut t = m.clone();
                    t[v] -= 1;
                    table.push((i as u32, find(&t).unwrap() as u32, m[v] as f64));
                }
            }
        }
        Self {
            nvars,
            order,
            monomials,
            degree_start,
            mul_table,
            deriv_table,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of coefficients per jet.
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomial(&self, i: usize) -> &[u8] {
        &self.monomials[i]
    }

    /// Slot of the monomial with the given exponents, if within order.
    pub fn index_of(&self, exponents: &[u8]) -> Option<usize> {
        self.monomials.iter().position(|m| m.as_slice() == exponents)
    }

    pub fn zero(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    pub fn constant(&self, c: f64) -> Vec<f64> {
        let mut j = self.zero();
        j[0] = c;
        j
    }

    /// The coordinate function `x_v` expanded at `x_v = at`.
    pub fn variable(&self, v: usize, at: f64) -> Vec<f64> {
        let mut j = self.constant(at);
        if self.order >= 1 {
            j[1 + v] = 1.0;
        }
        j
    }

    /// `out = a · b`. `out` must not alias `a` or `b`.
    pub fn mul_into(&self, out: &mut [f64], a: &[f64], b: &[f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.mul_acc(out, a, b, 1.0);
    }

    /// `out += s · a · b`.
    pub fn mul_acc(&self, out: &mut [f64], a: &[f64], b: &[f64], s: f64) {
        for &(i, j, k) in &self.mul_table {
            let (x, y) = (a[i as usize], b[j as usize]);
            if x != 0.0 && y != 0.0 {
                out[k as usize] += s * x * y;
            }
        }
    }

    /// `out = ∂a/∂x_v`. The top-degree coefficients of the result are zero
    /// and carry no information.
    pub fn deriv_into(&self, out: &mut [f64], a: &[f64], v: usize) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &(s, t, f) in &self.deriv_table[v] {
            out[t as usize] += f * a[s as usize];
        }
    }

    /// `out = Σ_m c_m r^m` where `r = a − a(0)`, by Horner's rule. Only
    /// `c_0..c_order` are used.
    pub fn compose_series_into(&self, out: &mut [f64], a: &[f64], coeffs: &[f64], scratch: &mut [f64]) {
        let mut r = a.to_vec();
        r[0] = 0.0;
        let p = self.order.min(coeffs.len().saturating_sub(1));
        out.iter_mut().for_each(|v| *v = 0.0);
        out[0] = coeffs[p];
        for m in (0..p).rev() {
            self.mul_into(scratch, out, &r);
            out.copy_from_slice(scratch);
            out[0] += coeffs[m];
        }
    }

    /// Taylor coefficients of `g` at `a(0)`, turned into a jet of `g ∘ a`.
    fn apply_unary(&self, out: &mut [f64], a: &[f64], coeffs: impl Fn(usize) -> f64) {
        let c: Vec<f64> = (0..=self.order).map(coeffs).collect();
        let mut scratch = self.zero();
        self.compose_series_into(out, a, &c, &mut scratch);
    }

    pub fn recip_into(&self, out: &mut [f64], a: &[f64]) {
        let inv = 1.0 / a[0];
        self.apply_unary(out, a, |m| inv * (-inv).powi(m as i32));
    }

    pub fn exp_into(&self, out: &mut [f64], a: &[f64]) {
        let e = a[0].exp();
        let mut fact = 1.0;
        let c: Vec<f64> = (0..=self.order)
            .map(|m| {
                if m > 0 {
                    fact *= m as f64;
                }
                e / fact
            })
            .collect();
        let mut scratch = self.zero();
        self.compose_series_into(out, a, &c, &mut scratch);
    }

    /// `sin` for `phase = 0`, `cos` for `phase = 1`.
    fn trig_into(&self, out: &mut [f64], a: &[f64], phase: usize) {
        let (s, c) = (a[0].sin(), a[0].cos());
        let cycle = [s, c, -s, -c];
        let mut fact = 1.0;
        let coeffs: Vec<f64> = (0..=self.order)
            .map(|m| {
                if m > 0 {
                    fact *= m as f64;
                }
                cycle[(m + phase) % 4] / fact
            })
            .collect();
        let mut scratch = self.zero();
        self.compose_series_into(out, a, &coeffs, &mut scratch);
    }

    pub fn sin_into(&self, out: &mut [f64], a: &[f64]) {
        self.trig_into(out, a, 0);
    }

    pub fn cos_into(&self, out: &mut [f64], a: &[f64]) {
        self.trig_into(out, a, 1);
    }

    /// Integer power through the generalized binomial series.
    pub fn powi_into(&self, out: &mut [f64], a: &[f64], n: i32) {
        let a0 = a[0];
        let nf = n as f64;
        let mut binom = 1.0;
        let coeffs: Vec<f64> = (0..=self.order)
            .map(|m| {
                if m > 0 {
                    binom *= (nf - (m - 1) as f64) / m as f64;
                }
                if binom == 0.0 {
                    0.0
                } else {
                    binom * a0.powi(n - m as i32)
                }
            })
            .collect();
        let mut scratch = self.zero();
        self.compose_series_into(out, a, &coeffs, &mut scratch);
    }

    /// Partial derivative `∂^m f(x0)` read off a jet: `m! · c_m`.
    pub fn derivative(&self, jet: &[f64], exponents: &[u8]) -> f64 {
        let i = self.index_of(exponents).expect("monomial within order");
        let fact: f64 = exponents
            .iter()
            .map(|&e| (1..=e as u32).map(|k| k as f64).product::<f64>())
            .product();
        fact * jet[i]
    }

    /// First slot of the degree-`k` block.
    pub fn degree_start(&self, k: usize) -> usize {
        self.degree_start[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let s = JetSpace::new(2, 2);
        assert_eq!(s.len(), 6);
        assert_eq!(s.monomial(0), &[0, 0]);
        assert_eq!(s.monomial(1), &[1, 0]);
        assert_eq!(s.monomial(2), &[0, 1]);
        assert_eq!(s.monomial(3), &[2, 0]);
        assert_eq!(s.degree_start(2), 3);
        assert_eq!(JetSpace::new(3, 3).len(), 20);
        assert_eq!(JetSpace::new(3, 0).len(), 1);
    }

    #[test]
    fn products_and_derivatives() {
        let s = JetSpace::new(2, 3);
        let x = s.variable(0, 2.0);
        let y = s.variable(1, -1.0);
        let mut xy = s.zero();
        s.mul_into(&mut xy, &x, &y);
        // x·y at (2,-1) = -2 + (-1)·dx + 2·dy + dx·dy
        assert_eq!(xy[0], -2.0);
        assert_eq!(s.derivative(&xy, &[1, 0]), -1.0);
        assert_eq!(s.derivative(&xy, &[0, 1]), 2.0);
        assert_eq!(s.derivative(&xy, &[1, 1]), 1.0);
        let mut d = s.zero();
        s.deriv_into(&mut d, &xy, 0);
        assert_eq!(d, s.variable(1, -1.0));
    }

    #[test]
    fn elementary_functions() {
        let s = JetSpace::new(1, 4);
        let x = s.variable(0, 0.3);
        let mut out = s.zero();
        s.exp_into(&mut out, &x);
        for m in 0..=4u8 {
            assert!((s.derivative(&out, &[m]) - 0.3f64.exp()).abs() < 1e-14);
        }
        s.sin_into(&mut out, &x);
        let sin_derivs = [0.3f64.sin(), 0.3f64.cos(), -0.3f64.sin(), -0.3f64.cos(), 0.3f64.sin()];
        for (m, e) in sin_derivs.iter().enumerate() {
            assert!((s.derivative(&out, &[m as u8]) - e).abs() < 1e-14);
        }
        s.powi_into(&mut out, &x, 3);
        assert!((s.derivative(&out, &[2]) - 6.0 * 0.3).abs() < 1e-14);
        assert_eq!(s.derivative(&out, &[4]), 0.0);
        s.recip_into(&mut out, &x);
        assert!((s.derivative(&out, &[2]) - 2.0 / 0.3f64.powi(3)).abs() < 1e-10);
        let zero = s.variable(0, 0.0);
        s.powi_into(&mut out, &zero, 2);
        assert_eq!(out, vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }
}
