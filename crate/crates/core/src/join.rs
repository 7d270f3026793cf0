//! The local corrector Ψ, iterative Cameron–Martin path joining, and the
//! control-distance bounds built on it.
//!
//! A join from `x` to `y` repeats: solve `F_l(u, x_m) = y − x_m` for the
//! smallest `u`, realize `u` as a path `h_m`, and flow `x_m` along `h_m`.
//! The stage paths, each spread over an interval as long as its
//! 1-variation and moving only in the middle third, are concatenated into
//! one path `h̃` on `[0, |I|]`. Then `|I|^H ‖h̃‖_{H̄[0,|I|]}` bounds the control
//! distance `d_H(x, y)` from above. The construction itself does not depend
//! on `H`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::cameron_martin::cm_norm;
use crate::error::{Error, Result};
use crate::fbm::{check_hurst, GridPath};
use crate::fields::VectorFieldSystem;
use crate::lie::LieCoordinates;
use crate::linalg::{min_norm_solve, to_dvector};
use crate::ode::{ode_endpoint, ode_solve_with_tol, ODE_TOL};
use crate::path::PiecewiseLinearPath;
use crate::realize::{cc_norm_bounds, path_from_log_signature, CcBounds};
use crate::taylor::TaylorMap;

pub const PSI_MAX_ITERATIONS: usize = 100;
/// Newton stops once `|F_l(v,x) − F_l(u,x) − η|` is below this.
pub const PSI_TOL: f64 = 1e-12;
/// Iterates stop once the Newton residual is this small but no longer shrinks.
const PSI_ACCEPT: f64 = 1e-10;
pub const MAX_STAGES: usize = 40;
/// A stage contracts when `|x_{m+1} − y| ≤ CONTRACTION · |x_m − y|`.
pub const CONTRACTION: f64 = 0.5;
/// Joins give up after this many non-contracting stages.
pub const MAX_NON_CONTRACTING: usize = 5;
/// Default grid for Cameron–Martin norms of joined paths.
pub const DEFAULT_CM_STEPS: usize = 1024;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsiResult {
    pub v: LieCoordinates,
    /// `|F_l(v,x) − F_l(u,x) − η|`.
    pub residual: f64,
    pub iterations: usize,
    /// `‖v − u‖_HS / |η|`, zero when `η = 0`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinStage {
    pub start: Vec<f64>,
    pub u: LieCoordinates,
    /// Realized path on `[0, 1]`, starting at the origin.
    pub path: PiecewiseLinearPath,
    /// 1-variation of `path`, also the length of the stage interval.
    pub variation: f64,
    pub end: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinDiagnostics {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub stages: Vec<JoinStage>,
    /// `|x_m − y|` for `m = 1..=stages + 1`.
    pub distances: Vec<f64>,
    /// Concatenated path on `[0, horizon]`; `None` for the empty join.
    pub joined: Option<PiecewiseLinearPath>,
    pub horizon: f64,
    /// `|Φ(x; h̃) − y|` recomputed along the concatenated path.
    pub endpoint_error: f64,
}

impl JoinDiagnostics {
    pub fn stage_ratios(&self) -> Vec<f64> {
        self.distances
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect()
    }

    pub fn final_iterate(&self) -> &[f64] {
        self.stages.last().map_or(&self.from[..], |s| &s.end[..])
    }

    /// `h̃` sampled on `steps + 1` nodes of `[0, scale·|I|]`.
    pub fn grid(&self, steps: usize, scale: f64) -> Option<GridPath> {
        self.joined
            .as_ref()
            .map(|p| GridPath::from_path(p, steps, scale * self.horizon))
    }
}

/// Constructive distance bound and the pieces it is made of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceBound {
    pub d_upper: f64,
    pub cm_norm: f64,
    pub cm_residual: f64,
    pub horizon: f64,
    pub stages: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinOptions {
    pub tol: f64,
    pub max_stages: usize,
    pub ode_tol: f64,
    /// Run every stage inside the middle third of its interval.
    pub middle_third: bool,
}

impl Default for JoinOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_stages: MAX_STAGES,
            ode_tol: ODE_TOL,
            middle_third: false,
        }
    }
}

/// Join machinery for one field system at bracket depth `l0`.
#[derive(Debug, Clone)]
pub struct Joiner<'a> {
    taylor: TaylorMap<'a>,
    metric_inv: DMatrix<f64>,
    pub options: JoinOptions,
}

impl<'a> Joiner<'a> {
    pub fn new(fields: &'a VectorFieldSystem, l0: usize) -> Self {
        let taylor = TaylorMap::new(fields, l0);
        let metric_inv = taylor
            .basis()
            .metric()
            .clone()
            .try_inverse()
            .expect("Gram matrix of a basis is invertible");
        Self {
            taylor,
            metric_inv,
            options: JoinOptions::default(),
        }
    }

    pub fn with_options(mut self, options: JoinOptions) -> Self {
        self.options = options;
        self
    }

    pub fn taylor(&self) -> &TaylorMap<'a> {
        &self.taylor
    }

    pub fn fields(&self) -> &'a VectorFieldSystem {
        self.taylor.fields()
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        let n = self.fields().state_dim();
        if x.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `v` near `u` with `F_l(v,x) = F_l(u,x) + η`, by damped Gauss–Newton
    /// with steps of least HS norm.
    pub fn psi(&self, u: &LieCoordinates, x: &[f64], eta: &[f64]) -> Result<PsiResult> {
        self.check_point(x)?;
        self.check_point(eta)?;
        if eta.iter().all(|&e| e == 0.0) {
            return Ok(PsiResult {
                v: u.clone(),
                residual: 0.0,
                iterations: 0,
                gain: 0.0,
            });
        }
        let base = self.taylor.value(u, x)?;
        let target: Vec<f64> = base.iter().zip(eta).map(|(a, b)| a + b).collect();
        let mut v = u.clone();
        let mut eval = self.taylor.evaluate(&v, x, true)?;
        let mut r: Vec<f64> = target.iter().zip(&eval.value).map(|(t, f)| t - f).collect();
        let mut rn = r.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut iterations = 0;
        while rn > PSI_TOL && iterations < PSI_MAX_ITERATIONS {
            iterations += 1;
            let j = eval.jacobian.as_ref().expect("requested");
            let Some(step) = min_norm_solve(j, &self.metric_inv, &to_dvector(&r)) else {
                break;
            };
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..30 {
                let mut trial = v.clone();
                for (c, s) in trial.coords_mut().iter_mut().zip(step.iter()) {
                    *c += alpha * s;
                }
                let e = self.taylor.evaluate(&trial, x, true)?;
                let tr: Vec<f64> = target.iter().zip(&e.value).map(|(t, f)| t - f).collect();
                let tn = tr.iter().map(|a| a * a).sum::<f64>().sqrt();
                if tn < rn {
                    accepted = Some((trial, e, tr, tn));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((trial, e, tr, tn)) => {
                    v = trial;
                    eval = e;
                    r = tr;
                    rn = tn;
                }
                None => break,
            }
        }
        if !(rn < PSI_ACCEPT) {
            return Err(Error::OutsideSolvability {
                residual: rn,
                iterations,
            });
        }
        let basis = self.taylor.basis();
        let diff = LieCoordinates::new(
            v.dim(),
            v.level(),
            v.coords().iter().zip(u.coords()).map(|(a, b)| a - b).collect(),
        )?;
        let eta_norm = eta.iter().map(|a| a * a).sum::<f64>().sqrt();
        Ok(PsiResult {
            gain: basis.hs_norm(&diff)? / eta_norm,
            v,
            residual: rn,
            iterations,
        })
    }

    /// One stage: `u = Ψ(0, x_m, y − x_m)`, its realized path, and the flow
    /// of `x_m` along it.
    pub fn join_step(&self, xm: &[f64], y: &[f64]) -> Result<JoinStage> {
        self.check_point(xm)?;
        self.check_point(y)?;
        let d = self.fields().driver_dim();
        let zero = LieCoordinates::zero(d, self.taylor.level());
        if xm == y {
            return Ok(JoinStage {
                start: xm.to_vec(),
                u: zero,
                path: PiecewiseLinearPath::constant(&vec![0.0; d]),
                variation: 0.0,
                end: xm.to_vec(),
            });
        }
        let eta: Vec<f64> = y.iter().zip(xm).map(|(a, b)| a - b).collect();
        let u = self.psi(&zero, xm, &eta)?.v;
        let path = path_from_log_signature(self.taylor.basis(), &u)?;
        let end = ode_solve_with_tol(self.fields(), xm, &path, self.options.ode_tol)?
            .end_point()
            .to_vec();
        Ok(JoinStage {
            start: xm.to_vec(),
            variation: path.one_variation(),
            u,
            path,
            end,
        })
    }

    /// Iterates [`Self::join_step`] until `|x_m − y| < tol`.
    pub fn join_path(&self, x: &[f64], y: &[f64]) -> Result<JoinDiagnostics> {
        self.check_point(x)?;
        self.check_point(y)?;
        let mut stages = Vec::new();
        let mut distances = vec![dist(x, y)];
        let mut xm = x.to_vec();
        let mut non_contracting = 0;
        while *distances.last().unwrap() >= self.options.tol && xm != y {
            if stages.len() >= self.options.max_stages {
                return Err(Error::NotConverged {
                    stages: stages.len(),
                    distance: *distances.last().unwrap(),
                });
            }
            let stage = self.join_step(&xm, y)?;
            let before = *distances.last().unwrap();
            let after = dist(&stage.end, y);
            if after > CONTRACTION * before {
                non_contracting += 1;
                if non_contracting >= MAX_NON_CONTRACTING {
                    return Err(Error::OutsideLocality {
                        stage: stages.len() + 1,
                        ratio: after / before,
                    });
                }
            }
            xm = stage.end.clone();
            distances.push(after);
            stages.push(stage);
        }

        let mut joined: Option<PiecewiseLinearPath> = None;
        let mut horizon = 0.0;
        for s in &stages {
            if s.variation == 0.0 {
                continue;
            }
            let mut piece = s.path.rescale_time(horizon, horizon + s.variation)?;
            if self.options.middle_third {
                piece = piece.reparametrize_middle_third();
            }
            horizon += s.variation;
            joined = Some(match joined {
                None => piece,
                Some(p) => p.concat(&piece)?,
            });
        }
        let endpoint_error = match &joined {
            Some(p) => dist(&ode_endpoint(self.fields(), x, p)?, y),
            None => dist(x, y),
        };
        Ok(JoinDiagnostics {
            from: x.to_vec(),
            to: y.to_vec(),
            stages,
            distances,
            joined,
            horizon,
            endpoint_error,
        })
    }

    /// `|I|^H ‖h̃‖_{H̄[0,|I|]}` for an existing join. `scale` stretches the
    /// horizon to `scale·|I|`; the bound does not depend on it.
    pub fn bound_from_join(
        &self,
        join: &JoinDiagnostics,
        hurst: f64,
        steps: usize,
        scale: f64,
    ) -> Result<DistanceBound> {
        check_hurst(hurst)?;
        if !(scale > 0.0) {
            return Err(Error::invalid(format!("horizon scale must be positive, got {scale}")));
        }
        let Some(grid) = join.grid(steps, scale) else {
            return Ok(DistanceBound {
                d_upper: 0.0,
                cm_norm: 0.0,
                cm_residual: 0.0,
                horizon: 0.0,
                stages: join.stages.len(),
            });
        };
        let cm = cm_norm(&grid, hurst)?;
        let horizon = scale * join.horizon;
        Ok(DistanceBound {
            d_upper: horizon.powf(hurst) * cm.norm,
            cm_norm: cm.norm,
            cm_residual: cm.residual,
            horizon,
            stages: join.stages.len(),
        })
    }

    pub fn distance_upper(&self, x: &[f64], y: &[f64], hurst: f64) -> Result<DistanceBound> {
        check_hurst(hurst)?;
        let join = self.join_path(x, y)?;
        self.bound_from_join(&join, hurst, DEFAULT_CM_STEPS, 1.0)
    }

    /// Bounds on `g(x,y) = inf{‖u‖_CC : x + F_l(u,x) = y}` from the
    /// least-norm solution `u`.
    pub fn cc_distance_estimate(&self, x: &[f64], y: &[f64]) -> Result<CcBounds> {
        self.check_point(x)?;
        self.check_point(y)?;
        if x == y {
            return Ok(CcBounds { lower: 0.0, upper: 0.0 });
        }
        let d = self.fields().driver_dim();
        let eta: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let u = self.psi(&LieCoordinates::zero(d, self.taylor.level()), x, &eta)?.v;
        cc_norm_bounds(self.taylor.basis(), &u)
    }

    /// Largest `r ≤ r_max` (to bisection accuracy) for which the join from
    /// `x` to `x + r·direction` contracts at every stage.
    pub fn locality_radius(&self, x: &[f64], direction: &[f64], r_max: f64, iterations: usize) -> f64 {
        let ok = |r: f64| {
            let y: Vec<f64> = x.iter().zip(direction).map(|(a, b)| a + r * b).collect();
            match self.join_path(x, &y) {
                Ok(j) => j.stage_ratios().iter().all(|&q| q <= CONTRACTION),
                Err(_) => false,
            }
        };
        if ok(r_max) {
            return r_max;
        }
        let (mut lo, mut hi) = (0.0, r_max);
        for _ in 0..iterations {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

pub fn psi(fields: &VectorFieldSystem, u: &LieCoordinates, x: &[f64], eta: &[f64]) -> Result<PsiResult> {
    Joiner::new(fields, u.level()).psi(u, x, eta)
}

pub fn join_path(fields: &VectorFieldSystem, x: &[f64], y: &[f64], l0: usize, tol: f64) -> Result<JoinDiagnostics> {
    let options = JoinOptions {
        tol,
        ..JoinOptions::default()
    };
    Joiner::new(fields, l0).with_options(options).join_path(x, y)
}

pub fn distance_upper(
    fields: &VectorFieldSystem,
    x: &[f64],
    y: &[f64],
    hurst: f64,
    l0: usize,
) -> Result<DistanceBound> {
    Joiner::new(fields, l0).distance_upper(x, y, hurst)
}

pub fn cc_distance_estimate(fields: &VectorFieldSystem, x: &[f64], y: &[f64], l0: usize) -> Result<CcBounds> {
    Joiner::new(fields, l0).cc_distance_estimate(x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceRow {
    pub center: Vec<f64>,
    pub offset: Vec<f64>,
    pub d_first: f64,
    pub d_second: f64,
    pub ratio: f64,
}

/// `d̂_{H1}(c, c+o) / d̂_{H2}(c, c+o)` for every center and offset. Both
/// bounds come from the same joined path.
pub fn equivalence_scan(
    joiner: &Joiner<'_>,
    hurst: (f64, f64),
    centers: &[Vec<f64>],
    offsets: &[Vec<f64>],
    steps: usize,
) -> Result<Vec<EquivalenceRow>> {
    check_hurst(hurst.0)?;
    check_hurst(hurst.1)?;
    let mut rows = Vec::with_capacity(centers.len() * offsets.len());
    for c in centers {
        for o in offsets {
            let y: Vec<f64> = c.iter().zip(o).map(|(a, b)| a + b).collect();
            let join = joiner.join_path(c, &y)?;
            let a = joiner.bound_from_join(&join, hurst.0, steps, 1.0)?.d_upper;
            let b = joiner.bound_from_join(&join, hurst.1, steps, 1.0)?.d_upper;
            rows.push(EquivalenceRow {
                center: c.clone(),
                offset: o.clone(),
                d_first: a,
                d_second: b,
                ratio: if b > 0.0 { a / b } else { 1.0 },
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{builtin_fields, parse_fields};

    #[test]
    fn psi_basic_contract() {
        let h = builtin_fields("heisenberg").unwrap();
        let j = Joiner::new(&h, 2);
        let u = LieCoordinates::new(2, 2, vec![0.1, 0.2, 0.3]).unwrap();
        let same = j.psi(&u, &[0.4, 0.5, 0.6], &[0.0; 3]).unwrap();
        assert_eq!(same.v, u);
        let r = j
            .psi(&LieCoordinates::zero(2, 2), &[0.0; 3], &[0.01, -0.02, 0.03])
            .unwrap();
        assert!(r.v.max_abs_diff(&LieCoordinates::new(2, 2, vec![0.01, -0.02, 0.03]).unwrap()) < 1e-15);
        assert!(r.residual < 1e-10);
        let id = builtin_fields("identity2").unwrap();
        let ji = Joiner::new(&id, 1);
        let u = LieCoordinates::new(2, 1, vec![0.5, 0.5]).unwrap();
        let r = ji.psi(&u, &[1.0, 2.0], &[0.25, -1.0]).unwrap();
        assert!(r.v.max_abs_diff(&LieCoordinates::new(2, 1, vec![0.75, -0.5]).unwrap()) < 1e-15);
        assert!((r.gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_nonlinear_contract() {
        let f = parse_fields("2 2\n1 + x2^2/4, sin(x1)/3\nx1*x2/5, 1\n").unwrap();
        let j = Joiner::new(&f, 2);
        let u = LieCoordinates::new(2, 2, vec![0.05, -0.02, 0.01]).unwrap();
        let x = [0.3, -0.2];
        let eta = [0.04, 0.03];
        let r = j.psi(&u, &x, &eta).unwrap();
        let fu = j.taylor().value(&u, &x).unwrap();
        let fv = j.taylor().value(&r.v, &x).unwrap();
        for k in 0..2 {
            assert!((fv[k] - fu[k] - eta[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn psi_reports_unsolvable_targets() {
        // V1 = V2 = (1, 0): the second coordinate cannot move
        let f = parse_fields("2 2\n1, 0\n1, 0\n").unwrap();
        let j = Joiner::new(&f, 2);
        assert!(matches!(
            j.psi(&LieCoordinates::zero(2, 2), &[0.0, 0.0], &[0.0, 1.0]),
            Err(Error::OutsideSolvability { .. })
        ));
    }

    #[test]
    fn identity_join_is_a_straight_line() {
        let id = builtin_fields("identity2").unwrap();
        let x = [0.2, -0.1];
        let y = [0.5, 0.3];
        let join = join_path(&id, &x, &y, 1, 1e-8).unwrap();
        assert_eq!(join.stages.len(), 1);
        assert!((join.horizon - 0.5).abs() < 1e-14);
        assert!(join.endpoint_error < 1e-10);
        let b = distance_upper(&id, &x, &y, 0.5, 1).unwrap();
        assert!((b.d_upper - 0.5).abs() < 1e-3);
        let options = JoinOptions {
            middle_third: true,
            ..JoinOptions::default()
        };
        let j = Joiner::new(&id, 1).with_options(options);
        // the same line run in the middle third costs √3 more
        assert!((j.distance_upper(&x, &y, 0.5).unwrap().d_upper - 3f64.sqrt() * 0.5).abs() < 1e-3);
        let cc = cc_distance_estimate(&id, &x, &y, 1).unwrap();
        assert!((cc.lower - 0.5).abs() < 1e-14 && (cc.upper - 0.5).abs() < 1e-14);
    }

    #[test]
    fn empty_join() {
        let h = builtin_fields("heisenberg").unwrap();
        let join = join_path(&h, &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3], 2, 1e-8).unwrap();
        assert!(join.stages.is_empty() && join.joined.is_none());
        assert_eq!(distance_upper(&h, &[0.0; 3], &[0.0; 3], 0.7, 2).unwrap().d_upper, 0.0);
        let j = Joiner::new(&h, 2);
        let s = j.join_step(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(s.u.is_zero() && s.end == vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn heisenberg_bracket_join() {
        let h = builtin_fields("heisenberg").unwrap();
        let zeta = 0.01;
        let join = join_path(&h, &[0.0; 3], &[0.0, 0.0, zeta], 2, 1e-8).unwrap();
        assert!(
            join.stages[0]
                .u
                .max_abs_diff(&LieCoordinates::new(2, 2, vec![0.0, 0.0, zeta]).unwrap())
                < 1e-15
        );
        assert!(join.stage_ratios().iter().all(|&r| r <= 0.5));
        assert!(join.endpoint_error < 1e-8);
        let cc = cc_distance_estimate(&h, &[0.0; 3], &[0.0, 0.0, zeta], 2).unwrap();
        assert!((cc.upper - 4.0 * zeta.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unit_area_distance_exceeds_the_isoperimetric_value() {
        let h = builtin_fields("heisenberg").unwrap();
        let b = distance_upper(&h, &[0.0; 3], &[0.0, 0.0, 1.0], 0.5, 2).unwrap();
        assert!(b.d_upper >= 0.99 * 2.0 * core::f64::consts::PI.sqrt());
        // unit square at unit speed over |I| = 4
        assert!((b.d_upper - 4.0).abs() < 2e-2, "{b:?}");
        let options = JoinOptions {
            middle_third: true,
            ..JoinOptions::default()
        };
        let j = Joiner::new(&h, 2).with_options(options);
        let c = j.distance_upper(&[0.0; 3], &[0.0, 0.0, 1.0], 0.5).unwrap();
        // √(|I| · 9 · |I|/3); grid sampling cuts the corners, so slightly below
        assert!((c.d_upper - 48f64.sqrt()).abs() < 2e-2, "{c:?}");
    }

    #[test]
    fn horizon_rescaling_is_invisible() {
        let h = builtin_fields("heisenberg").unwrap();
        let j = Joiner::new(&h, 2);
        let join = j.join_path(&[0.1, 0.0, 0.0], &[0.12, -0.03, 0.02]).unwrap();
        for hurst in [0.35, 0.7] {
            let a = j.bound_from_join(&join, hurst, 512, 1.0).unwrap().d_upper;
            let b = j.bound_from_join(&join, hurst, 512, 3.0).unwrap().d_upper;
            assert!((a - b).abs() / a < 1e-10);
        }
    }

    #[test]
    fn equal_hurst_gives_unit_ratios() {
        let h = builtin_fields("heisenberg").unwrap();
        let j = Joiner::new(&h, 2);
        let rows = equivalence_scan(
            &j,
            (0.6, 0.6),
            &[vec![0.0; 3]],
            &[vec![0.01, 0.0, 0.0], vec![0.0, 0.0, 0.01]],
            256,
        )
        .unwrap();
        assert!(rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-15));
    }

    #[test]
    fn locality_radius_of_a_linear_system() {
        let h = builtin_fields("heisenberg").unwrap();
        let j = Joiner::new(&h, 2);
        assert_eq!(j.locality_radius(&[0.0; 3], &[0.0, 0.0, 1.0], 0.5, 10), 0.5);
    }
}
