//! The Taylor map `F_l(u, x) = Σ_{1 ≤ |α| ≤ l} V_(α)(x) (exp u)^α` and its
//! Jacobian in Lyndon coordinates.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fields::{FieldJets, VectorFieldSystem};
use crate::lie::{LieBasis, LieCoordinates};
use crate::linalg::min_singular_value;
use crate::tensor::TruncatedTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorMapResult {
    pub value: Vec<f64>,
    /// `N × dim g^(l)`, present when requested.
    pub jacobian: Option<DMatrix<f64>>,
}

/// `F_l` for one field system and level, with cached jet tables.
#[derive(Debug, Clone)]
pub struct TaylorMap<'a> {
    fields: &'a VectorFieldSystem,
    basis: LieBasis,
    jets: FieldJets<'a>,
    /// Embedded basis elements, used as directions for the Jacobian.
    directions: Vec<TruncatedTensor>,
}

impl<'a> TaylorMap<'a> {
    pub fn new(fields: &'a VectorFieldSystem, level: usize) -> Self {
        assert!(level >= 1, "Taylor level must be at least 1");
        let d = fields.driver_dim();
        let basis = LieBasis::new(d, level);
        let directions = (0..basis.len())
            .map(|j| {
                let mut e = LieCoordinates::zero(d, level);
                e.coords_mut()[j] = 1.0;
                basis.embed(&e).expect("shape matches")
            })
            .collect();
        Self {
            fields,
            jets: fields.jets(level - 1),
            basis,
            directions,
        }
    }

    pub fn fields(&self) -> &'a VectorFieldSystem {
        self.fields
    }

    pub fn basis(&self) -> &LieBasis {
        &self.basis
    }

    pub fn level(&self) -> usize {
        self.basis.level()
    }

    fn check(&self, u: &LieCoordinates, x: &[f64]) -> Result<()> {
        if u.dim() != self.basis.dim() || u.level() != self.basis.level() {
            return Err(Error::ShapeMismatch {
                expected_dim: self.basis.dim(),
                expected_level: self.basis.level(),
                found_dim: u.dim(),
                found_level: u.level(),
            });
        }
        if x.len() != self.fields.state_dim() {
            return Err(Error::LengthMismatch {
                expected: self.fields.state_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    fn contract(&self, table: &[f64], coeffs: &[f64], out: &mut [f64]) {
        let n = self.fields.state_dim();
        for (w, &c) in coeffs[1..].iter().enumerate() {
            if c != 0.0 {
                for k in 0..n {
                    out[k] += c * table[w * n + k];
                }
            }
        }
    }

    pub fn value(&self, u: &LieCoordinates, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.evaluate(u, x, false)?.value)
    }

    pub fn evaluate(&self, u: &LieCoordinates, x: &[f64], with_jacobian: bool) -> Result<TaylorMapResult> {
        self.check(u, x)?;
        let n = self.fields.state_dim();
        let table = self.jets.composed_table(x, self.level());
        let a = self.basis.embed(u)?;
        let g = a.exp()?;
        let mut value = vec![0.0; n];
        self.contract(&table, g.coeffs(), &mut value);
        let jacobian = if with_jacobian {
            let mut j = DMatrix::zeros(n, self.basis.len());
            let mut col = vec![0.0; n];
            for (c, dir) in self.directions.iter().enumerate() {
                let dg = a.exp_directional(dir)?;
                col.iter_mut().for_each(|v| *v = 0.0);
                self.contract(&table, dg.coeffs(), &mut col);
                for k in 0..n {
                    j[(k, c)] = col[k];
                }
            }
            Some(j)
        } else {
            None
        };
        Ok(TaylorMapResult { value, jacobian })
    }

    pub fn jacobian(&self, u: &LieCoordinates, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(u, x, true)?.jacobian.expect("requested"))
    }

    /// Smallest singular value of `JF_l(u, x)`; positive means `F_l(·, x)`
    /// is a submersion at `u`.
    pub fn submersion_margin(&self, u: &LieCoordinates, x: &[f64]) -> Result<f64> {
        Ok(min_singular_value(&self.jacobian(u, x)?))
    }
}

pub fn taylor_f(fields: &VectorFieldSystem, u: &LieCoordinates, x: &[f64]) -> Result<Vec<f64>> {
    TaylorMap::new(fields, u.level()).value(u, x)
}

pub fn jacobian_f(fields: &VectorFieldSystem, u: &LieCoordinates, x: &[f64]) -> Result<DMatrix<f64>> {
    TaylorMap::new(fields, u.level()).jacobian(u, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{builtin_fields, parse_fields};
    use proptest::prelude::*;

    #[test]
    fn heisenberg_closed_form() {
        let h = builtin_fields("heisenberg").unwrap();
        let tm = TaylorMap::new(&h, 2);
        let (a, b, c) = (0.3, -0.8, 0.45);
        let u = LieCoordinates::new(2, 2, vec![a, b, c]).unwrap();
        let x = [1.5, -2.0, 0.7];
        let f = tm.value(&u, &x).unwrap();
        let expect = [a, b, -a * x[1] / 2.0 + b * x[0] / 2.0 + c];
        for k in 0..3 {
            assert!((f[k] - expect[k]).abs() < 1e-14);
        }
        assert_eq!(tm.value(&LieCoordinates::zero(2, 2), &x).unwrap(), vec![0.0; 3]);
        let j0 = tm.jacobian(&LieCoordinates::zero(2, 2), &[0.0; 3]).unwrap();
        assert!((j0 - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-15);
    }

    #[test]
    fn level_one_is_linear_combination() {
        let f = parse_fields("2 2\nsin(x2), x1^2\n1, x1*x2\n").unwrap();
        let tm = TaylorMap::new(&f, 1);
        let x = [0.2, 0.9];
        let u = LieCoordinates::new(2, 1, vec![0.4, -1.1]).unwrap();
        let got = tm.value(&u, &x).unwrap();
        let want = f.combine(&x, &[0.4, -1.1]);
        assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
        let id = builtin_fields("identity3").unwrap();
        let j = TaylorMap::new(&id, 1)
            .jacobian(&LieCoordinates::zero(3, 1), &[1.0, 2.0, 3.0])
            .unwrap();
        assert_eq!(j, DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn linear_part_is_the_field_matrix() {
        let f = parse_fields("2 2\nsin(x2), x1^2\n1, x1*x2\n").unwrap();
        let tm = TaylorMap::new(&f, 3);
        let x = [0.2, -0.6];
        let j = tm.jacobian(&LieCoordinates::zero(2, 3), &x).unwrap();
        let v = f.eval(&x);
        for i in 0..2 {
            for k in 0..2 {
                assert!((j[(k, i)] - v[i * 2 + k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn heisenberg_is_a_submersion() {
        let h = builtin_fields("heisenberg").unwrap();
        let tm = TaylorMap::new(&h, 2);
        for x in [[0.0, 0.0, 0.0], [0.9, -0.7, 0.3], [-1.0, 1.0, 1.0]] {
            assert!(tm.submersion_margin(&LieCoordinates::zero(2, 2), &x).unwrap() > 0.1);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn jacobian_matches_finite_differences(
            coords in proptest::collection::vec(-0.8..0.8f64, 5),
            x1 in -1.0..1.0f64,
            x2 in -1.0..1.0f64,
        ) {
            let f = parse_fields("2 2\nsin(x2), x1^2 - x2\n1 + x2*x1, cos(x1)\n").unwrap();
            let tm = TaylorMap::new(&f, 3);
            let u = LieCoordinates::new(2, 3, coords.clone()).unwrap();
            let x = [x1, x2];
            let j = tm.jacobian(&u, &x).unwrap();
            let h = 1e-6;
            for c in 0..5 {
                let mut up = coords.clone();
                let mut dn = coords.clone();
                up[c] += h;
                dn[c] -= h;
                let fu = tm.value(&LieCoordinates::new(2, 3, up).unwrap(), &x).unwrap();
                let fd = tm.value(&LieCoordinates::new(2, 3, dn).unwrap(), &x).unwrap();
                for k in 0..2 {
                    let fdk = (fu[k] - fd[k]) / (2.0 * h);
                    prop_assert!((j[(k, c)] - fdk).abs() <= 1e-6 * (1.0 + fdk.abs()));
                }
            }
        }
    }
}
