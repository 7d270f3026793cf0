//! Monte-Carlo density experiments: endpoint simulation, Gaussian KDE,
//! two-sample Kolmogorov–Smirnov, signature scaling, positivity, diagonal
//! exponents and small-time log-density asymptotics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)] // inherent when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::fbm::{check_hurst, shard_rng, FbmSampler, FbmSpec};
use crate::fields::VectorFieldSystem;
use crate::join::Joiner;
use crate::lie::LieBasis;
use crate::linalg::sym_min_eigenvalue;
use crate::ode::default_level;

/// Smallest sample count accepted by [`estimate_density`].
pub const MIN_SAMPLES: usize = 1000;
/// Paths per Monte-Carlo shard. Shard `i` always draws from the same stream.
pub const SHARD_SIZE: usize = 2048;
/// `c(α)` of the two-sample KS test at `α = 0.01`.
pub const KS_COEFFICIENT_1PCT: f64 = 1.6276;
/// Estimates below this many standard errors are not resolved from zero.
pub const POSITIVITY_SIGMAS: f64 = 3.0;

/// Points in `R^dim`, stored row after row.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not split into points of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.data.iter().skip(k).step_by(self.dim).copied().collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut m = vec![0.0; self.dim];
        for p in self.data.chunks_exact(self.dim) {
            m.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.dim, self.dim);
        for p in self.data.chunks_exact(self.dim) {
            for i in 0..self.dim {
                for j in 0..=i {
                    c[(i, j)] += (p[i] - m[i]) * (p[j] - m[j]);
                }
            }
        }
        let denom = (self.len().max(2) - 1) as f64;
        for i in 0..self.dim {
            for j in 0..=i {
                c[(i, j)] /= denom;
                c[(j, i)] = c[(i, j)];
            }
        }
        c
    }

    pub fn translate(&mut self, by: &[f64]) {
        for p in self.data.chunks_exact_mut(self.dim) {
            p.iter_mut().zip(by).for_each(|(a, b)| *a += b);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bandwidth {
    /// `h_i = σ_i (4 / ((d + 2) n))^{1/(d+4)}`.
    Silverman,
    /// Silverman widths times a factor.
    ScaledSilverman(f64),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub point: Vec<f64>,
    pub value: f64,
    pub bandwidth: Vec<f64>,
    pub samples: usize,
    /// Standard deviation of the kernel terms over `√n`.
    pub std_error: f64,
}

impl DensityEstimate {
    /// Whether the estimate is at least [`POSITIVITY_SIGMAS`] standard
    /// errors above zero.
    pub fn resolved_positive(&self) -> bool {
        self.value > POSITIVITY_SIGMAS * self.std_error
    }
}

/// Gaussian product-kernel density estimator.
#[derive(Debug, Clone)]
pub struct Kde<'a> {
    samples: &'a Samples,
    bandwidth: Vec<f64>,
    inv_bandwidth: Vec<f64>,
    norm: f64,
}

pub fn silverman_bandwidth(samples: &Samples) -> Result<Vec<f64>> {
    let cov = samples.covariance();
    let d = samples.dim() as f64;
    let trace: f64 = cov.diagonal().iter().sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::DegenerateSamples(format!("sample variance is {trace}")));
    }
    let lo = sym_min_eigenvalue(&cov);
    if lo <= 1e-12 * trace {
        return Err(Error::DegenerateSamples(format!(
            "sample covariance is singular: smallest eigenvalue {lo:e}, trace {trace:e}"
        )));
    }
    let factor = (4.0 / ((d + 2.0) * samples.len() as f64)).powf(1.0 / (d + 4.0));
    Ok(cov.diagonal().iter().map(|v| v.sqrt() * factor).collect())
}

impl<'a> Kde<'a> {
    /// Needs at least two points and a non-degenerate covariance.
    pub fn new(samples: &'a Samples, rule: &Bandwidth) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooFewPoints {
                needed: 2,
                found: samples.len(),
            });
        }
        let bandwidth = match rule {
            Bandwidth::Silverman => silverman_bandwidth(samples)?,
            Bandwidth::ScaledSilverman(f) => {
                if !(*f > 0.0) {
                    return Err(Error::invalid(format!("bandwidth factor must be positive, got {f}")));
                }
                silverman_bandwidth(samples)?.iter().map(|h| h * f).collect()
            }
            Bandwidth::Fixed(h) => {
                if h.len() != samples.dim() {
                    return Err(Error::LengthMismatch {
                        expected: samples.dim(),
                        found: h.len(),
                    });
                }
                if h.iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::invalid("bandwidths must be positive"));
                }
                h.clone()
            }
        };
        let norm = bandwidth.iter().map(|h| 1.0 / ((2.0 * PI).sqrt() * h)).product();
        Ok(Self {
            samples,
            inv_bandwidth: bandwidth.iter().map(|h| 1.0 / h).collect(),
            bandwidth,
            norm,
        })
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn estimate(&self, y: &[f64]) -> Result<DensityEstimate> {
        let d = self.samples.dim();
        if y.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                found: y.len(),
            });
        }
        let (mut s1, mut s2) = (0.0, 0.0);
        for p in self.samples.data.chunks_exact(d) {
            let mut q = 0.0;
            for k in 0..d {
                let z = (y[k] - p[k]) * self.inv_bandwidth[k];
                q += z * z;
            }
            let kv = self.norm * (-0.5 * q).exp();
            s1 += kv;
            s2 += kv * kv;
        }
        let n = self.samples.len() as f64;
        let mean = s1 / n;
        let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
        Ok(DensityEstimate {
            point: y.to_vec(),
            value: mean,
            bandwidth: self.bandwidth.clone(),
            samples: self.samples.len(),
            std_error: (var / n).sqrt(),
        })
    }
}

/// Kernel density estimate at `y` from at least [`MIN_SAMPLES`] points.
pub fn estimate_density(samples: &Samples, y: &[f64], rule: &Bandwidth) -> Result<DensityEstimate> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewPoints {
            needed: MIN_SAMPLES,
            found: samples.len(),
        });
    }
    Kde::new(samples, rule)?.estimate(y)
}

/// `sup |F_a − F_b|` of the two empirical distribution functions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// Two-sample KS rejection threshold at the 1% level.
pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KS_COEFFICIENT_1PCT * ((n + m) / (n * m)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for two points.
    pub slope_std_error: f64,
}

/// Ordinary least squares line through `(x_i, y_i)`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<SlopeFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            found: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("abscissae must not all coincide"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_std_error = if x.len() > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        slope_std_error,
    })
}

pub type ShardJob<'a> = dyn Fn(usize) -> Result<Vec<f64>> + Sync + 'a;

/// Executes independent Monte-Carlo shards. Results come back in shard
/// order whatever the execution order was.
pub trait ShardRunner {
    fn run(&self, shards: usize, job: &ShardJob<'_>) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ShardRunner for Sequential {
    fn run(&self, shards: usize, job: &ShardJob<'_>) -> Result<Vec<Vec<f64>>> {
        (0..shards).map(job).collect()
    }
}

/// Shared Monte-Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub hurst: f64,
    /// fBm grid steps per path.
    pub steps: usize,
    /// Taylor level of the stepwise solver.
    pub level: usize,
    pub samples: usize,
    pub seed: u64,
}

impl MonteCarlo {
    pub fn new(hurst: f64, samples: usize, seed: u64) -> Result<Self> {
        check_hurst(hurst)?;
        Ok(Self {
            hurst,
            steps: 64,
            level: default_level(hurst),
            samples,
            seed,
        })
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if self.samples == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        if self.level == 0 {
            return Err(Error::invalid("Taylor level must be at least 1"));
        }
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::invalid(format!("time must lie in (0,1], got {t}")));
    }
    Ok(())
}

/// Splits `n` draws into shards on streams `stream_base + i`, runs `draw`
/// once per path and concatenates the rows in shard order.
fn sharded<F>(n: usize, seed: u64, stream_base: u64, runner: &dyn ShardRunner, dim: usize, draw: F) -> Result<Samples>
where
    F: Fn(&mut ChaCha8Rng, &mut Vec<f64>) -> Result<()> + Sync,
{
    let job = |s: usize| -> Result<Vec<f64>> {
        let count = SHARD_SIZE.min(n - s * SHARD_SIZE);
        let mut rng = shard_rng(seed, stream_base + s as u64);
        let mut out = Vec::with_capacity(count * dim);
        for _ in 0..count {
            draw(&mut rng, &mut out)?;
        }
        Ok(out)
    };
    let parts = runner.run(n.div_ceil(SHARD_SIZE), &job)?;
    Samples::new(dim, parts.concat())
}

fn stream_base(offset: u64) -> u64 {
    offset << 32
}

/// `n` endpoints `X_t` started at `x`, from independent fBm drivers on
/// `[0, t]` pushed through the stepwise Taylor solver. Distinct
/// `stream_offset`s give independent clouds.
pub fn simulate_endpoints(
    fields: &VectorFieldSystem,
    mc: &MonteCarlo,
    t: f64,
    x: &[f64],
    stream_offset: u64,
    runner: &dyn ShardRunner,
) -> Result<Samples> {
    mc.validate()?;
    check_time(t)?;
    if x.len() != fields.state_dim() {
        return Err(Error::LengthMismatch {
            expected: fields.state_dim(),
            found: x.len(),
        });
    }
    let sampler = FbmSampler::new(FbmSpec::new(mc.hurst, fields.driver_dim(), t, mc.steps)?)?;
    let n = fields.state_dim();
    let d = fields.driver_dim();
    let level = mc.level;
    let jets = fields.jets(level - 1);
    sharded(
        mc.samples,
        mc.seed,
        stream_base(stream_offset),
        runner,
        n,
        |rng, out| {
            let path = sampler.sample(rng);
            let mut state = x.to_vec();
            let mut delta = vec![0.0; d];
            for i in 0..path.steps() {
                for (dl, (b, a)) in delta.iter_mut().zip(path.value(i + 1).iter().zip(path.value(i))) {
                    *dl = b - a;
                }
                let inc = jets.straight_line_taylor(&state, &delta, level);
                state.iter_mut().zip(&inc).for_each(|(s, v)| *s += v);
            }
            out.extend_from_slice(&state);
            Ok(())
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub labels: Vec<String>,
    pub ks: Vec<f64>,
    pub critical: f64,
    /// Variance of each level-1 coordinate of the two rescaled clouds,
    /// with its standard error.
    pub level_one_variance: Vec<[(f64, f64); 2]>,
    pub samples: usize,
}

impl ScalingReport {
    pub fn all_below_critical(&self) -> bool {
        self.ks.iter().all(|&k| k < self.critical)
    }
}

/// Log-signatures of fBm on `[0, t]`, dilated by `t^{−H}`.
#[allow(clippy::too_many_arguments)]
fn rescaled_log_signatures(
    basis: &LieBasis,
    hurst: f64,
    t: f64,
    n: usize,
    steps: usize,
    seed: u64,
    stream_offset: u64,
    runner: &dyn ShardRunner,
) -> Result<Samples> {
    let sampler = FbmSampler::new(FbmSpec::new(hurst, basis.dim(), t, steps)?)?;
    let lambda = t.powf(-hurst);
    sharded(n, seed, stream_base(stream_offset), runner, basis.len(), |rng, out| {
        let u = sampler.sample(rng).to_path().log_signature(basis)?;
        out.extend_from_slice(u.dilate(lambda).coords());
        Ok(())
    })
}

/// Per-coordinate KS statistics between `δ_{t1^{−H}} U_{t1}` and
/// `δ_{t2^{−H}} U_{t2}`, the two clouds drawn from disjoint streams.
#[allow(clippy::too_many_arguments)]
pub fn signature_scaling_test(
    dim: usize,
    level: usize,
    hurst: f64,
    times: (f64, f64),
    samples: usize,
    steps: usize,
    seed: u64,
    runner: &dyn ShardRunner,
) -> Result<ScalingReport> {
    check_hurst(hurst)?;
    check_time(times.0)?;
    check_time(times.1)?;
    if dim == 0 || level == 0 || samples < 2 {
        return Err(Error::invalid("need dim, level ≥ 1 and at least two samples"));
    }
    let basis = LieBasis::new(dim, level);
    let a = rescaled_log_signatures(&basis, hurst, times.0, samples, steps, seed, 0, runner)?;
    let b = rescaled_log_signatures(&basis, hurst, times.1, samples, steps, seed, 1, runner)?;
    let ks = (0..basis.len())
        .map(|k| ks_two_sample(&a.column(k), &b.column(k)))
        .collect();
    let var_se = |s: &Samples, k: usize| {
        let v = s.covariance()[(k, k)];
        (v, v * (2.0 / (s.len() as f64 - 1.0)).sqrt())
    };
    Ok(ScalingReport {
        labels: (0..basis.len()).map(|i| basis.word_label(i)).collect(),
        ks,
        critical: ks_critical_1pct(samples, samples),
        level_one_variance: (0..dim).map(|k| [var_se(&a, k), var_se(&b, k)]).collect(),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositivityVerdict {
    /// Every grid estimate is resolved above zero.
    Positive,
    /// Some estimates are within the noise of zero.
    Unresolved,
    /// Too few samples for a verdict.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub rows: Vec<DensityEstimate>,
    pub minimum: f64,
    /// Rows whose estimate is not resolved from zero.
    pub flagged: Vec<usize>,
    pub verdict: PositivityVerdict,
}

/// KDE of `X_t` on a grid of target points.
pub fn positivity_scan(
    fields: &VectorFieldSystem,
    mc: &MonteCarlo,
    t: f64,
    x: &[f64],
    grid: &[Vec<f64>],
    runner: &dyn ShardRunner,
) -> Result<PositivityReport> {
    let samples = simulate_endpoints(fields, mc, t, x, 0, runner)?;
    let kde = Kde::new(&samples, &Bandwidth::Silverman)?;
    let rows = grid.iter().map(|y| kde.estimate(y)).collect::<Result<Vec<_>>>()?;
    let flagged: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.resolved_positive())
        .map(|(i, _)| i)
        .collect();
    let verdict = if samples.len() < MIN_SAMPLES {
        PositivityVerdict::Inconclusive
    } else if flagged.is_empty() {
        PositivityVerdict::Positive
    } else {
        PositivityVerdict::Unresolved
    };
    Ok(PositivityReport {
        minimum: rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min),
        rows,
        flagged,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeRow {
    pub t: f64,
    pub estimate: DensityEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalReport {
    pub rows: Vec<TimeRow>,
    /// Fit of `log p̂(t,x,x)` against `log t`.
    pub fit: SlopeFit,
}

fn density_over_times(
    fields: &VectorFieldSystem,
    mc: &MonteCarlo,
    times: &[f64],
    x: &[f64],
    y: &[f64],
    runner: &dyn ShardRunner,
) -> Result<Vec<TimeRow>> {
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let s = simulate_endpoints(fields, mc, t, x, i as u64, runner)?;
            Ok(TimeRow {
                t,
                estimate: estimate_density(&s, y, &Bandwidth::Silverman)?,
            })
        })
        .collect()
}

/// Slope of `log p̂(t,x,x)` in `log t` over at least four times.
pub fn diagonal_scaling_experiment(
    fields: &VectorFieldSystem,
    mc: &MonteCarlo,
    times: &[f64],
    x: &[f64],
    runner: &dyn ShardRunner,
) -> Result<DiagonalReport> {
    if times.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            found: times.len(),
        });
    }
    let rows = density_over_times(fields, mc, times, x, x, runner)?;
    if let Some(r) = rows.iter().find(|r| !(r.estimate.value > 0.0)) {
        return Err(Error::invalid(format!("density estimate vanished at t = {}", r.t)));
    }
    let lt: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let lp: Vec<f64> = rows.iter().map(|r| r.estimate.value.ln()).collect();
    Ok(DiagonalReport {
        fit: fit_slope(&lt, &lp)?,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaradhanRow {
    pub t: f64,
    pub estimate: DensityEstimate,
    /// `t^{2H} log p̂(t,x,y)`.
    pub value: f64,
    pub distance_to_band: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaradhanReport {
    /// Sorted by decreasing `t`.
    pub rows: Vec<VaradhanRow>,
    pub d_upper: f64,
    pub d_lower: f64,
    /// `[−½ d_upper², −½ d_lower²]`.
    pub band: (f64, f64),
    /// Distance to the band never grows over the last three times and the
    /// last value lies in the band.
    pub trend_into_band: bool,
}

/// `t^{2H} log p̂(t,x,y)` over `times` next to the band from the joined-path
/// upper bound and the homogeneous-norm lower proxy at bracket depth `l0`.
#[allow(clippy::too_many_arguments)]
pub fn varadhan_experiment(
    fields: &VectorFieldSystem,
    mc: &MonteCarlo,
    times: &[f64],
    x: &[f64],
    y: &[f64],
    l0: usize,
    runner: &dyn ShardRunner,
) -> Result<VaradhanReport> {
    if times.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, found: 0 });
    }
    let joiner = Joiner::new(fields, l0);
    let d_upper = joiner.distance_upper(x, y, mc.hurst)?.d_upper;
    let d_lower = joiner.cc_distance_estimate(x, y)?.lower;
    let band = (-0.5 * d_upper * d_upper, -0.5 * d_lower * d_lower);
    let mut order: Vec<f64> = times.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    let rows: Vec<VaradhanRow> = density_over_times(fields, mc, &order, x, y, runner)?
        .into_iter()
        .map(|r| {
            let value = r.t.powf(2.0 * mc.hurst) * r.estimate.value.ln();
            let distance_to_band = if value < band.0 {
                band.0 - value
            } else if value > band.1 {
                value - band.1
            } else {
                0.0
            };
            VaradhanRow {
                t: r.t,
                estimate: r.estimate,
                value,
                distance_to_band,
            }
        })
        .collect();
    let tail = &rows[rows.len().saturating_sub(3)..];
    let trend_into_band = tail.iter().all(|r| r.value.is_finite())
        && tail.windows(2).all(|w| w[1].distance_to_band <= w[0].distance_to_band)
        && tail.last().is_some_and(|r| r.distance_to_band == 0.0);
    Ok(VaradhanReport {
        rows,
        d_upper,
        d_lower,
        band,
        trend_into_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::builtin_fields;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_samples(n: usize, dim: usize, seed: u64) -> Samples {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Samples::new(dim, data).unwrap()
    }

    #[test]
    fn standard_normal_density_at_zero() {
        let s = normal_samples(100_000, 1, 1);
        let e = estimate_density(&s, &[0.0], &Bandwidth::Silverman).unwrap();
        let exact = 1.0 / (2.0 * PI).sqrt();
        assert!((e.value - exact).abs() < 0.1 * exact);
        assert!(e.std_error > 0.0 && e.std_error < 0.01);
    }

    #[test]
    fn degenerate_and_small_clouds_are_rejected() {
        let same = Samples::new(2, vec![1.0; 4000]).unwrap();
        assert!(matches!(
            estimate_density(&same, &[1.0, 1.0], &Bandwidth::Silverman),
            Err(Error::DegenerateSamples(_))
        ));
        let line: Vec<f64> = (0..2000).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        let line = Samples::new(2, line).unwrap();
        assert!(matches!(
            Kde::new(&line, &Bandwidth::Silverman),
            Err(Error::DegenerateSamples(_))
        ));
        let few = normal_samples(100, 1, 2);
        assert!(matches!(
            estimate_density(&few, &[0.0], &Bandwidth::Silverman),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn kde_integrates_to_one() {
        let id = builtin_fields("identity2").unwrap();
        let mc = MonteCarlo::new(0.5, 20_000, 5).unwrap().with_steps(16);
        let s = simulate_endpoints(&id, &mc, 1.0, &[0.0, 0.0], 0, &Sequential).unwrap();
        let kde = Kde::new(&s, &Bandwidth::Silverman).unwrap();
        let (m, lo, hi) = (41usize, -5.0, 5.0);
        let h = (hi - lo) / (m - 1) as f64;
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                let w = |k: usize| if k == 0 || k == m - 1 { 0.5 } else { 1.0 };
                let y = [lo + i as f64 * h, lo + j as f64 * h];
                total += w(i) * w(j) * kde.estimate(&y).unwrap().value;
            }
        }
        total *= h * h;
        assert!((0.9..=1.05).contains(&total), "{total}");
    }

    #[test]
    fn ks_statistic_examples() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[2.5, 3.5]) - 0.5).abs() < 1e-15);
        assert!((ks_critical_1pct(100, 100) - 1.6276 * 0.02f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slope_fit() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = fit_slope(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.slope_std_error < 1e-7);
        assert!(fit_slope(&[1.0], &[1.0]).is_err());
        assert!(fit_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn identity_endpoints_are_gaussian() {
        let id = builtin_fields("identity2").unwrap();
        let mc = MonteCarlo::new(0.7, 20_000, 9).unwrap().with_steps(8);
        let s = simulate_endpoints(&id, &mc, 0.5, &[1.0, -1.0], 0, &Sequential).unwrap();
        assert_eq!(s.len(), 20_000);
        let m = s.mean();
        let c = s.covariance();
        let var = 0.5f64.powf(1.4);
        assert!((m[0] - 1.0).abs() < 0.03 && (m[1] + 1.0).abs() < 0.03);
        assert!((c[(0, 0)] - var).abs() < 0.05 * var && c[(0, 1)].abs() < 0.03);
    }

    #[test]
    fn simulation_is_deterministic_and_sharded() {
        let h = builtin_fields("heisenberg").unwrap();
        let mc = MonteCarlo::new(0.5, SHARD_SIZE + 10, 3).unwrap().with_steps(8);
        let a = simulate_endpoints(&h, &mc, 1.0, &[0.0; 3], 0, &Sequential).unwrap();
        let b = simulate_endpoints(&h, &mc, 1.0, &[0.0; 3], 0, &Sequential).unwrap();
        assert_eq!(a, b);
        let c = simulate_endpoints(&h, &mc, 1.0, &[0.0; 3], 1, &Sequential).unwrap();
        assert_ne!(a.point(0), c.point(0));
        let short = MonteCarlo { samples: 10, ..mc };
        let d = simulate_endpoints(&h, &short, 1.0, &[0.0; 3], 0, &Sequential).unwrap();
        assert_eq!(d.data(), &a.data()[..30]);
        assert!(simulate_endpoints(&h, &mc, 1.5, &[0.0; 3], 0, &Sequential).is_err());
    }

    #[test]
    fn equal_times_give_noise_level_statistics() {
        let r = signature_scaling_test(2, 2, 0.5, (1.0, 1.0), 4000, 16, 11, &Sequential).unwrap();
        assert_eq!(r.labels, vec!["1", "2", "12"]);
        assert!(r.ks.iter().all(|&k| k < 1.2 * r.critical));
        for pair in &r.level_one_variance {
            for (v, se) in pair {
                assert!((v - 1.0).abs() < 3.0 * se);
            }
        }
    }

    #[test]
    fn small_sample_scan_has_no_verdict() {
        let h = builtin_fields("heisenberg").unwrap();
        let mc = MonteCarlo::new(0.5, 100, 4).unwrap().with_steps(16);
        let grid = [vec![0.0; 3], vec![1.0, 1.0, 1.0]];
        let r = positivity_scan(&h, &mc, 1.0, &[0.0; 3], &grid, &Sequential).unwrap();
        assert_eq!(r.verdict, PositivityVerdict::Inconclusive);
        assert_eq!(r.rows.len(), 2);
    }

    #[test]
    fn identity_positivity_and_diagonal() {
        let id = builtin_fields("identity2").unwrap();
        let mc = MonteCarlo::new(0.5, 20_000, 8).unwrap().with_steps(8);
        let t: f64 = 0.5;
        let r = 2.0 * t.sqrt();
        let grid: Vec<Vec<f64>> = (0..8)
            .map(|k| {
                let a = k as f64 * PI / 4.0;
                vec![r * a.cos(), r * a.sin()]
            })
            .chain([vec![0.0, 0.0]])
            .collect();
        let scan = positivity_scan(&id, &mc, t, &[0.0, 0.0], &grid, &Sequential).unwrap();
        assert_eq!(scan.verdict, PositivityVerdict::Positive);
        assert!(scan.minimum > 0.0);

        let times = [0.25, 0.5, 0.75, 1.0];
        let d = diagonal_scaling_experiment(&id, &mc, &times, &[0.0, 0.0], &Sequential).unwrap();
        assert!((d.fit.slope + 1.0).abs() < 0.2, "{}", d.fit.slope);
        assert!(matches!(
            diagonal_scaling_experiment(&id, &mc, &[1.0], &[0.0, 0.0], &Sequential),
            Err(Error::TooFewPoints { needed: 4, found: 1 })
        ));
    }

    #[test]
    fn varadhan_on_the_diagonal_tends_to_zero() {
        let id = builtin_fields("identity2").unwrap();
        let mc = MonteCarlo::new(0.5, 20_000, 2).unwrap().with_steps(8);
        let r = varadhan_experiment(&id, &mc, &[0.1, 0.4, 0.2], &[0.0, 0.0], &[0.0, 0.0], 1, &Sequential).unwrap();
        assert_eq!(r.band, (0.0, 0.0));
        let ts: Vec<f64> = r.rows.iter().map(|x| x.t).collect();
        assert_eq!(ts, vec![0.4, 0.2, 0.1]);
        assert!(r.rows.last().unwrap().value.abs() < r.rows[0].value.abs());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn kde_is_nonnegative_and_translation_equivariant(
            seed in 0u64..1000,
            y in proptest::collection::vec(-4.0..4.0f64, 2),
            shift in proptest::collection::vec(-2.0..2.0f64, 2),
        ) {
            let s = normal_samples(1200, 2, seed);
            let e = estimate_density(&s, &y, &Bandwidth::Silverman).unwrap();
            prop_assert!(e.value >= 0.0);
            let mut moved = s.clone();
            moved.translate(&shift);
            let ys: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
            let f = estimate_density(&moved, &ys, &Bandwidth::Silverman).unwrap();
            prop_assert!((e.value - f.value).abs() <= 1e-9 * (1.0 + e.value));
        }

        #[test]
        fn ks_is_symmetric_and_bounded(
            a in proptest::collection::vec(-5.0..5.0f64, 1..40),
            b in proptest::collection::vec(-5.0..5.0f64, 1..40),
        ) {
            let k = ks_two_sample(&a, &b);
            prop_assert!((0.0..=1.0).contains(&k));
            prop_assert_eq!(k, ks_two_sample(&b, &a));
        }
    }
}
