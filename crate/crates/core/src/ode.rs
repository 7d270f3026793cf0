//! Controlled ODEs `dx = Σ V_i(x) dh^i` along piecewise-linear drivers and
//! the stepwise Taylor (Davie) scheme for rough drivers.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fbm::GridPath;
use crate::fields::VectorFieldSystem;
use crate::path::PiecewiseLinearPath;

/// Default local error tolerance of the Runge–Kutta integrator.
pub const ODE_TOL: f64 = 1e-10;

// Dormand–Prince 5(4) tableau; the field is autonomous so the nodes are not needed
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `x' = Σ_i δ^i V_i(x)` over unit time with adaptive
/// Dormand–Prince steps. `at` labels the piece in error reports.
fn integrate_piece(fields: &VectorFieldSystem, x: &mut [f64], delta: &[f64], tol: f64, at: f64) -> Result<()> {
    let n = x.len();
    let rhs = |y: &[f64]| fields.combine(y, delta);
    let mut s = 0.0;
    let mut h: f64 = 0.25;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    k[0] = rhs(x);
    let mut y = vec![0.0; n];
    while s < 1.0 {
        if h < 1e-14 {
            return Err(Error::StepSizeUnderflow { at: at + s });
        }
        let h_step = h.min(1.0 - s);
        for stage in 1..7 {
            for c in 0..n {
                y[c] = x[c] + h_step * (0..stage).map(|j| A[stage][j] * k[j][c]).sum::<f64>();
            }
            k[stage] = rhs(&y);
        }
        // y holds the fifth-order solution (FSAL row)
        let mut err = 0.0f64;
        for c in 0..n {
            let e4: f64 = (0..7).map(|j| (B5[j] - B4[j]) * k[j][c]).sum::<f64>() * h_step;
            let scale = tol * (1.0 + x[c].abs().max(y[c].abs()));
            err = err.max(e4.abs() / scale);
        }
        if !err.is_finite() {
            h = h_step * 0.1;
            continue;
        }
        if err <= 1.0 {
            s += h_step;
            x.copy_from_slice(&y);
            k[0] = k[6].clone();
            if s >= 1.0 - 1e-15 {
                break;
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = h_step * factor;
    }
    Ok(())
}

/// States at every knot of `h`, starting from `x0`.
pub fn ode_solve_with_tol(
    fields: &VectorFieldSystem,
    x0: &[f64],
    h: &PiecewiseLinearPath,
    tol: f64,
) -> Result<PiecewiseLinearPath> {
    check_dims(fields, x0, h.dim())?;
    let mut x = x0.to_vec();
    let mut states = Vec::with_capacity(h.knot_count() * x0.len());
    states.extend_from_slice(&x);
    for i in 0..h.knot_count() - 1 {
        let delta: Vec<f64> = h.point(i + 1).iter().zip(h.point(i)).map(|(b, a)| b - a).collect();
        if delta.iter().any(|&v| v != 0.0) {
            integrate_piece(fields, &mut x, &delta, tol, h.times()[i])?;
        }
        states.extend_from_slice(&x);
    }
    PiecewiseLinearPath::from_flat(x0.len(), h.times().to_vec(), states)
}

pub fn ode_solve(fields: &VectorFieldSystem, x0: &[f64], h: &PiecewiseLinearPath) -> Result<PiecewiseLinearPath> {
    ode_solve_with_tol(fields, x0, h, ODE_TOL)
}

/// `Φ_1(x0; h)`, the endpoint of [`ode_solve`].
pub fn ode_endpoint(fields: &VectorFieldSystem, x0: &[f64], h: &PiecewiseLinearPath) -> Result<Vec<f64>> {
    Ok(ode_solve(fields, x0, h)?.end_point().to_vec())
}

fn check_dims(fields: &VectorFieldSystem, x0: &[f64], driver_dim: usize) -> Result<()> {
    if x0.len() != fields.state_dim() {
        return Err(Error::LengthMismatch {
            expected: fields.state_dim(),
            found: x0.len(),
        });
    }
    if driver_dim != fields.driver_dim() {
        return Err(Error::LengthMismatch {
            expected: fields.driver_dim(),
            found: driver_dim,
        });
    }
    Ok(())
}

/// Taylor level used by [`rde_solve`] unless overridden: 2 for `H > 1/3`,
/// 3 below.
pub fn default_level(hurst: f64) -> usize {
    if hurst > 1.0 / 3.0 {
        2
    } else {
        3
    }
}

/// Stepwise scheme `X_{k+1} = X_k + F_m(log S_m(Δ_k), X_k)` over the linear
/// interpolation of the sampled driver. The log-signature of a segment is
/// its increment, so each step is the straight-line Taylor sum.
pub fn rde_solve(fields: &VectorFieldSystem, x0: &[f64], driver: &GridPath, level: usize) -> Result<GridPath> {
    check_dims(fields, x0, driver.dim())?;
    if level == 0 {
        return Err(Error::invalid(format!("Taylor level must be at least 1, got {level}")));
    }
    let jets = fields.jets(level - 1);
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity((driver.steps() + 1) * n);
    out.extend_from_slice(&x);
    let mut delta = vec![0.0; driver.dim()];
    for i in 0..driver.steps() {
        for (d, (b, a)) in delta.iter_mut().zip(driver.value(i + 1).iter().zip(driver.value(i))) {
            *d = b - a;
        }
        let inc = jets.straight_line_taylor(&x, &delta, level);
        x.iter_mut().zip(&inc).for_each(|(a, b)| *a += b);
        out.extend_from_slice(&x);
    }
    GridPath::new(driver.horizon(), n, out)
}

/// Endpoint of [`rde_solve`] without storing the trajectory.
pub fn rde_endpoint(fields: &VectorFieldSystem, x0: &[f64], driver: &GridPath, level: usize) -> Result<Vec<f64>> {
    check_dims(fields, x0, driver.dim())?;
    let jets = fields.jets(level.max(1) - 1);
    let mut x = x0.to_vec();
    let mut delta = vec![0.0; driver.dim()];
    for i in 0..driver.steps() {
        for (d, (b, a)) in delta.iter_mut().zip(driver.value(i + 1).iter().zip(driver.value(i))) {
            *d = b - a;
        }
        let inc = jets.straight_line_taylor(&x, &delta, level.max(1));
        x.iter_mut().zip(&inc).for_each(|(a, b)| *a += b);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm, FbmSpec};
    use crate::fields::{builtin_fields, parse_fields};
    use crate::lie::LieBasis;
    use crate::taylor::TaylorMap;

    #[test]
    fn identity_fields_follow_the_driver() {
        let id = builtin_fields("identity2").unwrap();
        let h = PiecewiseLinearPath::from_increments(2, &[vec![0.5, 1.0], vec![-2.0, 0.25]]);
        let end = ode_endpoint(&id, &[1.0, 1.0], &h).unwrap();
        assert!((end[0] + 0.5).abs() < 1e-12 && (end[1] - 2.25).abs() < 1e-12);
        let c = PiecewiseLinearPath::constant(&[0.0, 0.0]);
        assert_eq!(ode_endpoint(&id, &[3.0, 4.0], &c).unwrap(), vec![3.0, 4.0]);

        let spec = FbmSpec::new(0.4, 2, 1.0, 32).unwrap();
        let b = &sample_fbm(spec, 3, 1).unwrap()[0];
        let x = rde_solve(&id, &[0.0, 0.0], b, 3).unwrap();
        assert!(x.values().iter().zip(b.values()).all(|(p, q)| (p - q).abs() < 1e-14));
    }

    #[test]
    fn exponential_growth_is_accurate() {
        let f = parse_fields("1 1\nx1\n").unwrap();
        let h = PiecewiseLinearPath::segment(&[0.0], &[2.0]);
        let end = ode_endpoint(&f, &[1.0], &h).unwrap();
        assert!((end[0] - 2f64.exp()).abs() < 1e-8);
    }

    #[test]
    fn heisenberg_taylor_formula_is_exact() {
        let h = builtin_fields("heisenberg").unwrap();
        let tm = TaylorMap::new(&h, 2);
        let basis = LieBasis::new(2, 2);
        let spec = FbmSpec::new(0.6, 2, 1.0, 24).unwrap();
        for (seed, x0) in [(1u64, [0.0, 0.0, 0.0]), (2, [0.5, -0.3, 1.0])] {
            let b = &sample_fbm(spec, seed, 1).unwrap()[0];
            let path = b.to_path();
            let ode = ode_endpoint(&h, &x0, &path).unwrap();
            let rde = rde_solve(&h, &x0, b, 2).unwrap();
            let u = path.log_signature(&basis).unwrap();
            let mut taylor = tm.value(&u, &x0).unwrap();
            taylor.iter_mut().zip(&x0).for_each(|(t, x)| *t += x);
            for k in 0..3 {
                assert!((ode[k] - taylor[k]).abs() < 1e-8);
                assert!((rde.end_value()[k] - taylor[k]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn davie_refinement_converges() {
        // smooth driver, nonlinear fields: error falls with the mesh
        let f = parse_fields("2 2\nsin(x2), 0.5*x1\ncos(x1), x2^2/4\n").unwrap();
        let smooth = |n: usize| {
            let vals: Vec<f64> = (0..=n)
                .flat_map(|i| {
                    let t = i as f64 / n as f64;
                    [(3.0 * t).sin(), t * t - t]
                })
                .collect();
            GridPath::new(1.0, 2, vals).unwrap()
        };
        let exact = ode_endpoint(&f, &[0.1, 0.2], &smooth(4096).to_path()).unwrap();
        let err = |n: usize, m: usize| {
            let e = rde_endpoint(&f, &[0.1, 0.2], &smooth(n), m).unwrap();
            ((e[0] - exact[0]).powi(2) + (e[1] - exact[1]).powi(2)).sqrt()
        };
        for m in [1, 2, 3] {
            let (e1, e2) = (err(32, m), err(64, m));
            assert!(e2 < e1 / 1.9, "m={m}: {e1} -> {e2}");
        }
        assert_eq!(default_level(0.5), 2);
        assert_eq!(default_level(0.3), 3);
    }
}
