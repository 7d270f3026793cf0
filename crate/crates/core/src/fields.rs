//! Driving vector fields `V_1..V_d` on `R^N`, their iterated derivatives and
//! brackets.
//!
//! Field file format:
//!
//! ```text
//! # comment
//! N d
//! <N comma-separated expressions for V_1>
//! ...
//! <N comma-separated expressions for V_d>
//! ```

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{parse_expr_at, Expr, Tape};
use crate::jet::JetSpace;
use crate::linalg::sym_min_eigenvalue;
use crate::tensor::{level_offset, tensor_size, Word};

pub const BUILTIN_NAMES: [&str; 3] = ["identity2", "identity3", "heisenberg"];

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldSystem {
    state_dim: usize,
    driver_dim: usize,
    /// `components[i][c]` is coordinate `c` of `V_{i+1}`.
    components: Vec<Vec<Expr>>,
    tape: Tape,
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

pub fn parse_fields(text: &str) -> Result<VectorFieldSystem> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l)))
        .filter(|(_, l)| !l.trim().is_empty());

    let (hline, header) = lines.next().ok_or_else(|| Error::Syntax {
        line: 1,
        column: 1,
        message: "empty field file, expected header `N d`".to_string(),
    })?;
    let nums: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |s: &str| s.parse::<usize>().ok().filter(|&v| v >= 1);
    let (n, d) = match nums.as_slice() {
        [a, b] => match (parse_dim(a), parse_dim(b)) {
            (Some(n), Some(d)) => (n, d),
            _ => {
                return Err(Error::Syntax {
                    line: hline,
                    column: 1,
                    message: "header must be two positive integers `N d`".to_string(),
                })
            }
        },
        _ => {
            return Err(Error::Syntax {
                line: hline,
                column: 1,
                message: "header must be two positive integers `N d`".to_string(),
            })
        }
    };

    let mut components = Vec::with_capacity(d);
    for i in 0..d {
        let (lno, line) = lines.next().ok_or_else(|| Error::Syntax {
            line: hline + i + 1,
            column: 1,
            message: format!("expected {d} field lines, found {i}"),
        })?;
        let mut exprs = Vec::with_capacity(n);
        let mut offset = 0;
        for piece in line.split(',') {
            exprs.push(parse_expr_at(piece, n, lno, offset + 1)?);
            offset += piece.len() + 1;
        }
        if exprs.len() != n {
            return Err(Error::Syntax {
                line: lno,
                column: 1,
                message: format!("field {} has {} components, expected {n}", i + 1, exprs.len()),
            });
        }
        components.push(exprs);
    }
    if let Some((lno, _)) = lines.next() {
        return Err(Error::Syntax {
            line: lno,
            column: 1,
            message: format!("unexpected line after {d} field lines"),
        });
    }
    VectorFieldSystem::new(n, components)
}

/// Canonical test systems by name.
pub fn builtin_fields(name: &str) -> Result<VectorFieldSystem> {
    let text = match name {
        "identity2" => "2 2\n1, 0\n0, 1\n",
        "identity3" => "3 3\n1, 0, 0\n0, 1, 0\n0, 0, 1\n",
        "heisenberg" => "3 2\n1, 0, -x2/2\n0, 1, x1/2\n",
        _ => {
            return Err(Error::UnknownFields {
                name: name.to_string(),
                available: BUILTIN_NAMES.join(", "),
            })
        }
    };
    parse_fields(text)
}

/// `out_c += s · Σ_k dir_k ∂_k f_c` on vectors of jets.
fn directional_acc(space: &JetSpace, n: usize, dir: &[f64], f: &[f64], out: &mut [f64], s: f64, scratch: &mut [f64]) {
    let m = space.len();
    for c in 0..n {
        for k in 0..n {
            let dk = &dir[k * m..(k + 1) * m];
            if dk.iter().all(|&v| v == 0.0) {
                continue;
            }
            space.deriv_into(scratch, &f[c * m..(c + 1) * m], k);
            space.mul_acc(&mut out[c * m..(c + 1) * m], dk, scratch, s);
        }
    }
}

impl VectorFieldSystem {
    pub fn new(state_dim: usize, components: Vec<Vec<Expr>>) -> Result<Self> {
        if state_dim == 0 || components.is_empty() {
            return Err(Error::invalid(
                "need at least one field on a positive-dimensional state space",
            ));
        }
        if components.iter().any(|c| c.len() != state_dim) {
            return Err(Error::invalid(format!("every field needs {state_dim} components")));
        }
        let flat: Vec<Expr> = components.iter().flatten().cloned().collect();
        Ok(Self {
            state_dim,
            driver_dim: components.len(),
            tape: Tape::compile(&flat),
            components,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn driver_dim(&self) -> usize {
        self.driver_dim
    }

    pub fn component(&self, field: usize, coord: usize) -> &Expr {
        &self.components[field][coord]
    }

    /// Field file text that parses back to an equivalent system.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.state_dim, self.driver_dim);
        for field in &self.components {
            let parts: Vec<String> = field.iter().map(|e| e.to_string()).collect();
            s.push_str(&parts.join(", "));
            s.push('\n');
        }
        s
    }

    fn check_point(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.state_dim,
            "point dimension does not match the state dimension"
        );
    }

    /// All fields at `x`, row `i` holding `V_{i+1}(x)`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.check_point(x);
        let mut out = vec![0.0; self.driver_dim * self.state_dim];
        self.tape.eval(x, &mut out);
        out
    }

    /// `Σ_i v^i V_i(x)`.
    pub fn combine(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let vals = self.eval(x);
        let n = self.state_dim;
        let mut out = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            for c in 0..n {
                out[c] += vi * vals[i * n + c];
            }
        }
        out
    }

    /// Jet evaluator of the given order, with its own monomial tables.
    pub fn jets(&self, order: usize) -> FieldJets<'_> {
        FieldJets {
            system: self,
            space: JetSpace::new(self.state_dim, order),
        }
    }

    /// `V_(α)(x) = V_{α_1}·∇(⋯(V_{α_{r−1}}·∇V_{α_r}))`.
    pub fn v_alpha_composed(&self, word: &[u8], x: &[f64]) -> Vec<f64> {
        assert!(!word.is_empty(), "word must be nonempty");
        let table = self.jets(word.len() - 1).composed_table(x, word.len());
        let idx = level_offset(self.driver_dim, word.len()) + crate::tensor::word_index(self.driver_dim, word) - 1;
        table[idx * self.state_dim..(idx + 1) * self.state_dim].to_vec()
    }

    /// `V_[α] = [V_{α_1}, V_[α_2..]]`, with `[V, W] = V·∇W − W·∇V`.
    pub fn v_alpha_bracket(&self, word: &[u8], x: &[f64]) -> Vec<f64> {
        assert!(!word.is_empty(), "word must be nonempty");
        let table = self.jets(word.len() - 1).bracket_table(x, word.len());
        let idx = level_offset(self.driver_dim, word.len()) + crate::tensor::word_index(self.driver_dim, word) - 1;
        table[idx * self.state_dim..(idx + 1) * self.state_dim].to_vec()
    }

    /// `inf_x λ_min(Σ_{|α| ≤ l0} V_[α](x) V_[α](x)ᵀ)` over a tensor grid of
    /// `grid` points per axis on the box `∏ [lo_k, hi_k]`.
    pub fn hypoellipticity_gap(&self, l0: usize, lo: &[f64], hi: &[f64], grid: usize) -> Result<f64> {
        let n = self.state_dim;
        if l0 == 0 || grid == 0 || lo.len() != n || hi.len() != n {
            return Err(Error::invalid(format!(
                "need l0 >= 1, grid >= 1 and box bounds of dimension {n}"
            )));
        }
        let jets = self.jets(l0 - 1);
        let total = grid.pow(n as u32);
        let mut best = f64::INFINITY;
        let mut x = vec![0.0; n];
        for flat in 0..total {
            let mut r = flat;
            for k in 0..n {
                let pos = r % grid;
                r /= grid;
                x[k] = if grid == 1 {
                    0.5 * (lo[k] + hi[k])
                } else {
                    lo[k] + (hi[k] - lo[k]) * pos as f64 / (grid - 1) as f64
                };
            }
            let table = jets.bracket_table(&x, l0);
            let mut gram = DMatrix::<f64>::zeros(n, n);
            for b in table.chunks(n) {
                for i in 0..n {
                    for j in 0..n {
                        gram[(i, j)] += b[i] * b[j];
                    }
                }
            }
            best = best.min(sym_min_eigenvalue(&gram));
        }
        Ok(best.max(0.0))
    }
}

/// Jets of a field system at a fixed order.
#[derive(Debug, Clone)]
pub struct FieldJets<'a> {
    system: &'a VectorFieldSystem,
    space: JetSpace,
}

impl FieldJets<'_> {
    pub fn space(&self) -> &JetSpace {
        &self.space
    }

    /// Jets of all field components, field-major.
    pub fn field_jets(&self, x: &[f64]) -> Vec<f64> {
        self.system.check_point(x);
        let m = self.space.len();
        let mut out = vec![0.0; self.system.driver_dim * self.system.state_dim * m];
        self.system.tape.eval_jets(&self.space, x, &mut out);
        out
    }

    fn word_table(&self, x: &[f64], level: usize, bracket: bool) -> Vec<f64> {
        assert!(
            level >= 1 && level <= self.space.order() + 1,
            "jet order too low for this word length"
        );
        let d = self.system.driver_dim;
        let n = self.system.state_dim;
        let m = self.space.len();
        let fields = self.field_jets(x);
        let block = n * m;
        let words = tensor_size(d, level) - 1;
        let mut jets = vec![0.0; words * block];
        jets[..d * block].copy_from_slice(&fields);
        let mut scratch = vec![0.0; m];
        for k in 2..=level {
            let prev = level_offset(d, k - 1) - 1;
            let cur = level_offset(d, k) - 1;
            let count = d.pow((k - 1) as u32);
            for i in 0..d {
                let v = &fields[i * block..(i + 1) * block];
                for b in 0..count {
                    let src = (prev + b) * block;
                    let dst = (cur + i * count + b) * block;
                    let (head, tail) = jets.split_at_mut(dst);
                    let beta = &head[src..src + block];
                    let out = &mut tail[..block];
                    directional_acc(&self.space, n, v, beta, out, 1.0, &mut scratch);
                    if bracket {
                        directional_acc(&self.space, n, beta, v, out, -1.0, &mut scratch);
                    }
                }
            }
        }
        let mut values = Vec::with_capacity(words * n);
        for w in 0..words {
            for c in 0..n {
                values.push(jets[w * block + c * m]);
            }
        }
        values
    }

    /// `V_(α)(x)` for every word with `1 ≤ |α| ≤ level`, in tensor layout
    /// order (the slot of `α` is `level_offset + word_index − 1`), `N`
    /// values each. Needs jet order at least `level − 1`.
    pub fn composed_table(&self, x: &[f64], level: usize) -> Vec<f64> {
        self.word_table(x, level, false)
    }

    /// `V_[α](x)` in the same layout as [`Self::composed_table`].
    pub fn bracket_table(&self, x: &[f64], level: usize) -> Vec<f64> {
        self.word_table(x, level, true)
    }

    /// `Σ_{k=1..m} (W·∇)^{k−1} W (x) / k!` with `W = Σ_i Δ^i V_i`, which
    /// equals `Σ_{|α| ≤ m} V_(α)(x) Δ^α / |α|!`. Needs jet order `m − 1`.
    pub fn straight_line_taylor(&self, x: &[f64], delta: &[f64], m: usize) -> Vec<f64> {
        assert!(
            m >= 1 && m <= self.space.order() + 1,
            "jet order too low for this Taylor level"
        );
        let n = self.system.state_dim;
        let jm = self.space.len();
        let fields = self.field_jets(x);
        let block = n * jm;
        let mut w = vec![0.0; block];
        for (i, &di) in delta.iter().enumerate() {
            if di != 0.0 {
                for (a, b) in w.iter_mut().zip(&fields[i * block..(i + 1) * block]) {
                    *a += di * b;
                }
            }
        }
        let mut out: Vec<f64> = (0..n).map(|c| w[c * jm]).collect();
        let mut term = w.clone();
        let mut next = vec![0.0; block];
        let mut scratch = vec![0.0; jm];
        let mut fact = 1.0;
        for k in 2..=m {
            next.iter_mut().for_each(|v| *v = 0.0);
            directional_acc(&self.space, n, &w, &term, &mut next, 1.0, &mut scratch);
            core::mem::swap(&mut term, &mut next);
            fact *= k as f64;
            for c in 0..n {
                out[c] += term[c * jm] / fact;
            }
        }
        out
    }
}

/// All words of length `1..=level` in tensor layout order (for labelling
/// tables).
pub fn table_words(dim: usize, level: usize) -> Vec<Word> {
    crate::tensor::all_words(dim, level)
        .into_iter()
        .filter(|w| !w.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn heis() -> VectorFieldSystem {
        builtin_fields("heisenberg").unwrap()
    }

    #[test]
    fn parse_examples() {
        let id = builtin_fields("identity2").unwrap();
        assert_eq!(id.eval(&[5.0, -3.0]), vec![1.0, 0.0, 0.0, 1.0]);
        let h = heis();
        assert_eq!((h.state_dim(), h.driver_dim()), (3, 2));
        assert_eq!(h.eval(&[2.0, 4.0, 9.0]), vec![1.0, 0.0, -2.0, 0.0, 1.0, 1.0]);
        let echo = parse_fields(&h.to_text()).unwrap();
        assert_eq!(echo.eval(&[0.3, -0.7, 1.0]), h.eval(&[0.3, -0.7, 1.0]));
        match builtin_fields("nope") {
            Err(Error::UnknownFields { available, .. }) => assert!(available.contains("heisenberg")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors() {
        match parse_fields("# c\n2 1\nx1+*x2, 0\n") {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (3, 4)),
            other => panic!("{other:?}"),
        }
        match parse_fields("2 1\n1, x1 + z\n") {
            Err(Error::UnknownVariable { line, column, .. }) => assert_eq!((line, column), (2, 9)),
            other => panic!("{other:?}"),
        }
        assert!(parse_fields("2 1\n1\n").is_err());
        assert!(parse_fields("2 2\n1, 0\n").is_err());
        assert!(parse_fields("two 1\n1, 0\n").is_err());
        assert!(parse_fields("").is_err());
        assert!(parse_fields("1 1\n1\n1\n").is_err());
    }

    #[test]
    fn heisenberg_derivatives() {
        let h = heis();
        for x in [[0.0, 0.0, 0.0], [1.3, -0.4, 2.0]] {
            assert_eq!(h.v_alpha_composed(&[0], &x), vec![1.0, 0.0, -x[1] / 2.0]);
            assert_eq!(h.v_alpha_composed(&[0, 1], &x), vec![0.0, 0.0, 0.5]);
            assert_eq!(h.v_alpha_composed(&[1, 0], &x), vec![0.0, 0.0, -0.5]);
            assert_eq!(h.v_alpha_composed(&[0, 0], &x), vec![0.0, 0.0, 0.0]);
            assert_eq!(h.v_alpha_bracket(&[0, 1], &x), vec![0.0, 0.0, 1.0]);
            assert_eq!(h.v_alpha_bracket(&[0, 0], &x), vec![0.0, 0.0, 0.0]);
            assert_eq!(h.v_alpha_bracket(&[0, 0, 1], &x), vec![0.0, 0.0, 0.0]);
        }
        let id = builtin_fields("identity3").unwrap();
        assert!(id.v_alpha_bracket(&[0, 2], &[1.0, 2.0, 3.0]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hypoellipticity_examples() {
        let id = builtin_fields("identity2").unwrap();
        assert!((id.hypoellipticity_gap(1, &[-1.0, -1.0], &[1.0, 1.0], 3).unwrap() - 1.0).abs() < 1e-12);
        let h = heis();
        let g = h.hypoellipticity_gap(2, &[0.0; 3], &[0.0; 3], 1).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
        let g1 = h.hypoellipticity_gap(1, &[-1.0; 3], &[1.0; 3], 3).unwrap();
        assert!(g1.abs() < 1e-12);
        assert!(h.hypoellipticity_gap(2, &[-1.0; 3], &[1.0; 3], 3).unwrap() > 0.1);
    }

    #[test]
    fn composed_derivatives_of_a_nonlinear_system() {
        // V1 = (sin x2, x1²), V2 = (1, x1 x2): V1·∇V2 = (0, x2 sin x2 + x1³) by hand
        let f = parse_fields("2 2\nsin(x2), x1^2\n1, x1*x2\n").unwrap();
        let x = [0.7, -1.1];
        let v = f.v_alpha_composed(&[0, 1], &x);
        assert!(v[0].abs() < 1e-15);
        assert!((v[1] - (x[1] * x[1].sin() + x[0].powi(3))).abs() < 1e-14);
        // Davie increment along a straight line equals the word sum
        let jets = f.jets(2);
        let table = jets.composed_table(&x, 3);
        let delta = [0.2, -0.5];
        let mut expect = [0.0; 2];
        for (w, word) in table_words(2, 3).iter().enumerate() {
            let coef: f64 =
                word.iter().map(|&c| delta[c as usize]).product::<f64>() / (1..=word.len()).product::<usize>() as f64;
            for c in 0..2 {
                expect[c] += coef * table[w * 2 + c];
            }
        }
        let got = jets.straight_line_taylor(&x, &delta, 3);
        assert!((got[0] - expect[0]).abs() < 1e-14 && (got[1] - expect[1]).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn jets_match_finite_differences(x1 in -1.0..1.0f64, x2 in -1.0..1.0f64) {
            let f = parse_fields("2 1\nexp(x1)*x2^2 - x1/(2 + x2), cos(x1*x2)\n").unwrap();
            let jets = f.jets(2);
            let space = jets.space();
            let j = jets.field_jets(&[x1, x2]);
            let m = space.len();
            let h = 1e-4;
            for c in 0..2 {
                let e = f.component(0, c);
                let at = |a: f64, b: f64| e.eval(&[a, b]);
                let fx = (at(x1 + h, x2) - at(x1 - h, x2)) / (2.0 * h);
                let fxx = (at(x1 + h, x2) - 2.0 * at(x1, x2) + at(x1 - h, x2)) / (h * h);
                let fxy = (at(x1 + h, x2 + h) - at(x1 + h, x2 - h) - at(x1 - h, x2 + h) + at(x1 - h, x2 - h)) / (4.0 * h * h);
                let jc = &j[c * m..(c + 1) * m];
                prop_assert!((space.derivative(jc, &[1, 0]) - fx).abs() <= 1e-6 * (1.0 + fx.abs()));
                prop_assert!((space.derivative(jc, &[2, 0]) - fxx).abs() <= 1e-5 * (1.0 + fxx.abs()));
                prop_assert!((space.derivative(jc, &[1, 1]) - fxy).abs() <= 1e-5 * (1.0 + fxy.abs()));
            }
        }
    }
}
