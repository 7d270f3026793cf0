//! Fractional Brownian motion on a uniform grid, sampled exactly through a
//! Cholesky factor of the grid covariance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::path::PiecewiseLinearPath;

/// `R(s,t) = ½(s^{2H} + t^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (s.abs().powf(h2) + t.abs().powf(h2) - (t - s).abs().powf(h2))
}

pub fn check_hurst(hurst: f64) -> Result<()> {
    if !(hurst > 0.25 && hurst < 1.0) {
        return Err(Error::invalid(format!("hurst must lie in (0.25,1), got {hurst}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbmSpec {
    pub hurst: f64,
    pub dim: usize,
    pub horizon: f64,
    pub steps: usize,
}

impl FbmSpec {
    pub fn new(hurst: f64, dim: usize, horizon: f64, steps: usize) -> Result<Self> {
        check_hurst(hurst)?;
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::invalid(format!("steps must be at least 2, got {steps}")));
        }
        Ok(Self {
            hurst,
            dim,
            horizon,
            steps,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// Values of an `R^d` path at `t_i = i·T/n`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    horizon: f64,
    dim: usize,
    values: Vec<f64>,
}

impl GridPath {
    /// `values` is row-major, one row per node.
    pub fn new(horizon: f64, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) || dim == 0 {
            return Err(Error::invalid("grid path needs a positive horizon and dimension"));
        }
        if !values.len().is_multiple_of(dim) || values.len() / dim < 2 {
            return Err(Error::invalid(format!(
                "grid path needs at least two nodes of dimension {dim}, got {} values",
                values.len()
            )));
        }
        Ok(Self { horizon, dim, values })
    }

    /// Samples `path` at `steps + 1` equally spaced times over its time
    /// range and places the result on `[0, horizon]`.
    pub fn from_path(path: &PiecewiseLinearPath, steps: usize, horizon: f64) -> Self {
        let (a, b) = (path.start_time(), path.end_time());
        let mut values = Vec::with_capacity((steps + 1) * path.dim());
        for i in 0..=steps {
            let t = a + (b - a) * i as f64 / steps as f64;
            values.extend(path.value_at(t));
        }
        Self {
            horizon,
            dim: path.dim(),
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.steps() as f64
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn end_value(&self) -> &[f64] {
        self.value(self.steps())
    }

    /// Node values of one coordinate.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.values.iter().skip(k).step_by(self.dim).copied().collect()
    }

    /// Same values on a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn to_path(&self) -> PiecewiseLinearPath {
        let times = (0..=self.steps()).map(|i| self.time(i)).collect();
        PiecewiseLinearPath::from_flat(self.dim, times, self.values.clone()).expect("grid times are increasing")
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }
}

/// Cached lower Cholesky factor of the covariance of `(B_{t_1}, …, B_{t_n})`.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    spec: FbmSpec,
    /// Row-major lower triangle, row `i` holding `i + 1` entries.
    factor: Vec<f64>,
}

impl FbmSampler {
    pub fn new(spec: FbmSpec) -> Result<Self> {
        let n = spec.steps;
        let dt = spec.dt();
        let cov = DMatrix::from_fn(n, n, |i, j| {
            fbm_covariance((i + 1) as f64 * dt, (j + 1) as f64 * dt, spec.hurst)
        });
        let scale = spec.horizon.powf(2.0 * spec.hurst);
        let mut jitter = 0.0;
        let chol = loop {
            let mut m = cov.clone();
            for i in 0..n {
                m[(i, i)] += jitter;
            }
            if let Some(c) = m.cholesky() {
                break c;
            }
            jitter = if jitter == 0.0 { 1e-14 * scale } else { jitter * 10.0 };
            if jitter > 1e-8 * scale {
                return Err(Error::NotPositiveDefinite);
            }
        };
        let l = chol.l();
        let mut factor = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                factor.push(l[(i, j)]);
            }
        }
        Ok(Self { spec, factor })
    }

    pub fn spec(&self) -> &FbmSpec {
        &self.spec
    }

    /// One `d`-dimensional path with independent coordinates.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GridPath {
        let n = self.spec.steps;
        let d = self.spec.dim;
        let mut values = vec![0.0; (n + 1) * d];
        let mut z = vec![0.0; n];
        for k in 0..d {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let mut row = 0;
            for i in 0..n {
                let s: f64 = self.factor[row..row + i + 1].iter().zip(&z).map(|(a, b)| a * b).sum();
                values[(i + 1) * d + k] = s;
                row += i + 1;
            }
        }
        GridPath {
            horizon: self.spec.horizon,
            dim: d,
            values,
        }
    }
}

/// Deterministic generator for shard `stream` of a run seeded with `seed`.
pub fn shard_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_fbm(spec: FbmSpec, seed: u64, count: usize) -> Result<Vec<GridPath>> {
    if count == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let sampler = FbmSampler::new(spec)?;
    let mut rng = shard_rng(seed, 0);
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}
