//! The `roughkit` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgMatches, Args, Command, CommandFactory, FromArgMatches, Parser, Subcommand};
use rayon::prelude::*;
use roughkit_core::density::{
    diagonal_scaling_experiment, positivity_scan, signature_scaling_test, varadhan_experiment, MonteCarlo,
    PositivityVerdict, ShardRunner,
};
use roughkit_core::fbm::{sample_fbm, FbmSpec};
use roughkit_core::join::{equivalence_scan, JoinOptions, Joiner};
use roughkit_core::lie::{graded_nu, lyndon_words, witt_dimension, LieBasis};
use roughkit_core::ode::default_level;
use roughkit_core::realize::path_from_log_signature;
use roughkit_core::tensor::format_word;
use roughkit_core::VectorFieldSystem;

use crate::config::{expand_args, footer};
use crate::formats::{
    coords_csv, load_fields, parse_coords_csv, parse_list, parse_path_csv, parse_point, path_csv, read_rows, read_text,
};
use crate::parallel::Parallel;

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "ROUGHKIT_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "roughkit",
    version,
    about = "Signatures, fBm, Cameron-Martin path joining and density experiments for hypoelliptic rough equations",
    after_help = "Every CSV ends with a `# config:` line holding the resolved settings and a `# config-sha256:` line with their hash and the seed."
)]
struct Cli {
    /// `key = value` file whose entries act as flags of the subcommand; explicit flags win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Free Lie algebra bookkeeping
    #[command(subcommand)]
    Algebra(AlgebraCmd),
    /// Log-signatures of paths and paths realizing log-signatures
    #[command(subcommand)]
    Sig(SigCmd),
    /// Fractional Brownian motion sampling
    #[command(subcommand)]
    Fbm(FbmCmd),
    /// Bracket-generating (Hörmander) condition of a field system
    #[command(subcommand)]
    Hypo(HypoCmd),
    /// Join two points by iterated Cameron-Martin corrections
    Join(JoinArgs),
    /// Control-distance upper bounds over many targets
    #[command(subcommand)]
    Distance(DistanceCmd),
    /// Monte-Carlo density experiments
    #[command(subcommand)]
    Density(DensityCmd),
}

#[derive(Subcommand, Debug)]
enum AlgebraCmd {
    /// Dimensions of the homogeneous Lie components: CSV `k,dim,nu_partial`
    Witt(DimLevel),
    /// Lyndon words indexing the coordinates: CSV `index,word,degree`
    Lyndon(DimLevel),
}

#[derive(Args, Debug)]
#[group(skip)]
struct DimLevel {
    /// Alphabet size d
    #[arg(long)]
    dim: usize,
    /// Truncation level l
    #[arg(long)]
    level: usize,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum SigCmd {
    /// Lyndon coordinates of a path's log-signature: CSV `word,value`
    Logsig(LogsigArgs),
    /// Path whose log-signature equals the given coordinates: CSV `t,x1,...,xd`
    Realize(RealizeArgs),
}

#[derive(Args, Debug)]
#[group(skip)]
struct LogsigArgs {
    /// Path CSV with header `t,x1,...,xd`
    #[arg(long, value_name = "FILE")]
    path: PathBuf,
    /// Truncation level
    #[arg(long)]
    level: usize,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct RealizeArgs {
    /// Coordinate CSV with rows `word,value`; missing words are zero
    #[arg(long, value_name = "FILE")]
    coords: PathBuf,
    /// Truncation level
    #[arg(long)]
    level: usize,
    /// Alphabet size (inferred from the largest letter when absent)
    #[arg(long)]
    dim: Option<usize>,
    /// Output path CSV
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum FbmCmd {
    /// Exact samples on a uniform grid: CSV `sample,t,x1,...,xd`, one block per sample
    Sample(FbmArgs),
}

#[derive(Args, Debug)]
#[group(skip)]
struct FbmArgs {
    /// Hurst parameter in (0.25, 1)
    #[arg(long)]
    hurst: f64,
    /// Grid steps
    #[arg(long)]
    steps: usize,
    /// Time horizon T
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    /// Number of paths
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Number of independent coordinates
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Random seed
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum HypoCmd {
    /// Smallest eigenvalue of Σ V_[α] V_[α]ᵀ over |α| ≤ level on a box grid
    Check(HypoArgs),
}

#[derive(Args, Debug)]
#[group(skip)]
struct HypoArgs {
    /// Builtin name (identity2, identity3, heisenberg) or field file
    #[arg(long)]
    fields: String,
    /// Bracket depth l0
    #[arg(long)]
    level: usize,
    /// Bounds `lo,hi` applied to every coordinate
    #[arg(long = "box", value_name = "LO,HI", allow_hyphen_values = true)]
    bounds: String,
    /// Grid points per axis (1 uses the box center)
    #[arg(long, default_value_t = 5)]
    grid: usize,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct JoinSettings {
    /// Bracket depth l0 of the Taylor map
    #[arg(long, default_value_t = 2)]
    level: usize,
    /// Stop once the iterate is this close to the target
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Grid steps for Cameron-Martin norms
    #[arg(long = "cm-steps", default_value_t = 1024)]
    cm_steps: usize,
    /// Run every stage in the middle third of its interval
    #[arg(long = "middle-third")]
    middle_third: bool,
}

impl JoinSettings {
    fn joiner<'a>(&self, fields: &'a VectorFieldSystem) -> Result<Joiner<'a>> {
        if self.level == 0 {
            bail!("level must be at least 1");
        }
        if !(self.tol > 0.0) {
            bail!("tol must be positive, got {}", self.tol);
        }
        if self.cm_steps < 2 {
            bail!("cm-steps must be at least 2");
        }
        Ok(Joiner::new(fields, self.level).with_options(JoinOptions {
            tol: self.tol,
            middle_third: self.middle_third,
            ..JoinOptions::default()
        }))
    }
}

#[derive(Args, Debug)]
#[group(skip)]
struct JoinArgs {
    /// Builtin name or field file
    #[arg(long)]
    fields: String,
    /// Start point `x1,...,xN`
    #[arg(long, allow_hyphen_values = true)]
    from: String,
    /// Target point `y1,...,yN`
    #[arg(long, allow_hyphen_values = true)]
    to: String,
    /// Hurst parameter of the distance bound
    #[arg(long)]
    hurst: f64,
    #[command(flatten)]
    join: JoinSettings,
    /// Per-stage CSV of iterates, ratios, variations and Lie coordinates
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// CSV of the concatenated joining path
    #[arg(long = "path-out", value_name = "FILE")]
    path_out: Option<PathBuf>,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum DistanceCmd {
    /// Upper bounds along directions: CSV `direction,radius,d_upper,stages,cm_norm,horizon`
    Scan(ScanArgs),
    /// Ratios of the bounds for two Hurst parameters
    Equiv(EquivArgs),
}

#[derive(Args, Debug)]
#[group(skip)]
struct ScanArgs {
    /// Builtin name or field file
    #[arg(long)]
    fields: String,
    #[arg(long)]
    hurst: f64,
    /// Start point
    #[arg(long, allow_hyphen_values = true)]
    center: String,
    /// CSV of directions, one per row (normalized before use)
    #[arg(long, value_name = "FILE")]
    dirs: PathBuf,
    /// Distances `r1,r2,...` from the center
    #[arg(long)]
    radii: String,
    #[command(flatten)]
    join: JoinSettings,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(skip)]
struct EquivArgs {
    /// Builtin name or field file
    #[arg(long)]
    fields: String,
    /// Hurst pair `H1,H2`
    #[arg(long)]
    hurst: String,
    /// Start point; repeat for several centers
    #[arg(long, allow_hyphen_values = true, required = true)]
    center: Vec<String>,
    /// CSV of directions, one per row (normalized before use)
    #[arg(long, value_name = "FILE")]
    dirs: PathBuf,
    /// Distances `r1,r2,...` from each center
    #[arg(long)]
    radii: String,
    #[command(flatten)]
    join: JoinSettings,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum DensityCmd {
    /// Slope of log p(t,x,x) against log t: CSV `t,p_hat,std_error,log_t,log_p_hat`
    Diag(DiagArgs),
    /// Density estimates on a grid of targets with a positivity verdict
    Scan(DensityScanArgs),
    /// t^{2H} log p(t,x,y) next to the band from the distance bounds
    Varadhan(VaradhanArgs),
    /// Kolmogorov-Smirnov comparison of rescaled log-signature laws at two times
    Sigscale(SigscaleArgs),
}

#[derive(Args, Debug)]
#[group(skip)]
struct MonteCarloArgs {
    /// Builtin name or field file
    #[arg(long)]
    fields: String,
    #[arg(long)]
    hurst: f64,
    /// Paths per time point
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// fBm grid steps per path
    #[arg(long, default_value_t = 64)]
    steps: usize,
    /// Taylor level of the stepwise solver (2 for H > 1/3, else 3)
    #[arg(long = "taylor-level")]
    taylor_level: Option<usize>,
    /// Start point (origin when absent)
    #[arg(long, allow_hyphen_values = true)]
    from: Option<String>,
    /// Random seed
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

impl MonteCarloArgs {
    fn setup(&self) -> Result<(VectorFieldSystem, MonteCarlo, Vec<f64>)> {
        let fields = load_fields(&self.fields)?;
        if self.steps == 0 {
            bail!("steps must be at least 1");
        }
        let mc = MonteCarlo::new(self.hurst, self.samples, self.seed)?
            .with_steps(self.steps)
            .with_level(self.taylor_level.unwrap_or(default_level(self.hurst)));
        let x = match &self.from {
            Some(s) => parse_point(s, fields.state_dim(), "start point")?,
            None => vec![0.0; fields.state_dim()],
        };
        Ok((fields, mc, x))
    }
}

#[derive(Args, Debug)]
#[group(skip)]
struct DiagArgs {
    #[command(flatten)]
    mc: MonteCarloArgs,
    /// At least four times in (0,1]
    #[arg(long)]
    t: String,
}

#[derive(Args, Debug)]
#[group(skip)]
struct DensityScanArgs {
    #[command(flatten)]
    mc: MonteCarloArgs,
    /// Time in (0,1]
    #[arg(long)]
    t: f64,
    /// CSV of target points; overrides --radius/--points
    #[arg(long, value_name = "FILE")]
    grid: Option<PathBuf>,
    /// Targets on a cube grid within this Euclidean distance of the start
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Grid points per axis for the cube grid
    #[arg(long, default_value_t = 5)]
    points: usize,
}

#[derive(Args, Debug)]
#[group(skip)]
struct VaradhanArgs {
    #[command(flatten)]
    mc: MonteCarloArgs,
    /// Times in (0,1]
    #[arg(long)]
    t: String,
    /// Target point
    #[arg(long, allow_hyphen_values = true)]
    to: String,
    /// Bracket depth for the distance band
    #[arg(long, default_value_t = 2)]
    l0: usize,
}

#[derive(Args, Debug)]
#[group(skip)]
struct SigscaleArgs {
    #[arg(long)]
    hurst: f64,
    /// Two times `t1,t2` in (0,1]
    #[arg(long)]
    t: String,
    /// Driver dimension
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Truncation level
    #[arg(long, default_value_t = 2)]
    level: usize,
    /// Paths per time
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// fBm grid steps per path
    #[arg(long, default_value_t = 64)]
    steps: usize,
    /// Random seed
    #[arg(long, env = SEED_ENV, default_value_t = 1)]
    seed: u64,
    /// Output CSV (stdout when absent)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn override_self(cmd: Command) -> Command {
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let mut cmd = cmd.args_override_self(true);
    for n in names {
        cmd = cmd.mut_subcommand(n, override_self);
    }
    cmd
}

/// The full clap command tree.
pub fn command() -> Command {
    override_self(Cli::command())
}

/// One CSV artifact: body rows, comment notes placed before the footer.
struct Artifact {
    path: Option<PathBuf>,
    body: String,
    notes: Vec<String>,
}

impl Artifact {
    fn new(path: Option<&Path>, body: String) -> Self {
        Self {
            path: path.map(Path::to_path_buf),
            body,
            notes: Vec::new(),
        }
    }

    fn note(mut self, n: String) -> Self {
        self.notes.push(n);
        self
    }

    fn render(&self, footer: &str) -> String {
        let mut s = self.body.clone();
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        s.push_str(footer);
        s
    }
}

fn csv_row(values: impl IntoIterator<Item = String>) -> String {
    let mut s = values.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(n > 0.0) {
        bail!("direction rows must be nonzero");
    }
    Ok(v.iter().map(|a| a / n).collect())
}

fn witt(a: &DimLevel) -> Result<Vec<Artifact>> {
    if a.dim == 0 || a.level == 0 {
        bail!("dim and level must be at least 1");
    }
    let mut s = String::from("k,dim,nu_partial\n");
    for k in 1..=a.level {
        let _ = writeln!(s, "{k},{},{}", witt_dimension(a.dim, k), graded_nu(a.dim, k));
    }
    Ok(vec![Artifact::new(a.out.as_deref(), s)])
}

fn lyndon(a: &DimLevel) -> Result<Vec<Artifact>> {
    if a.dim == 0 || a.level == 0 {
        bail!("dim and level must be at least 1");
    }
    let mut s = String::from("index,word,degree\n");
    for (i, w) in lyndon_words(a.dim, a.level).iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, format_word(a.dim, w), w.len());
    }
    Ok(vec![Artifact::new(a.out.as_deref(), s)])
}

fn logsig(a: &LogsigArgs) -> Result<Vec<Artifact>> {
    if a.level == 0 {
        bail!("level must be at least 1");
    }
    let path =
        parse_path_csv(&read_text(&a.path)?).with_context(|| format!("invalid path file '{}'", a.path.display()))?;
    let basis = LieBasis::new(path.dim(), a.level);
    let u = path.log_signature(&basis)?;
    Ok(vec![Artifact::new(a.out.as_deref(), coords_csv(&basis, &u))])
}

fn realize(a: &RealizeArgs) -> Result<Vec<Artifact>> {
    if a.level == 0 {
        bail!("level must be at least 1");
    }
    let text = read_text(&a.coords)?;
    let (basis, u) = parse_coords_csv(&text, a.dim, a.level)
        .with_context(|| format!("invalid coordinate file '{}'", a.coords.display()))?;
    let path = path_from_log_signature(&basis, &u)?;
    let art = Artifact::new(Some(&a.out), path_csv(&path)).note(format!("one_variation={}", path.one_variation()));
    Ok(vec![art])
}

fn fbm_sample(a: &FbmArgs) -> Result<Vec<Artifact>> {
    let spec = FbmSpec::new(a.hurst, a.dim, a.horizon, a.steps)?;
    let paths = sample_fbm(spec, a.seed, a.count)?;
    let mut s = String::from("sample,t");
    for k in 1..=a.dim {
        let _ = write!(s, ",x{k}");
    }
    s.push('\n');
    for (j, p) in paths.iter().enumerate() {
        for i in 0..=p.steps() {
            let _ = write!(s, "{},{}", j + 1, p.time(i));
            for v in p.value(i) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    Ok(vec![Artifact::new(a.out.as_deref(), s)])
}

fn hypo_check(a: &HypoArgs) -> Result<Vec<Artifact>> {
    let fields = load_fields(&a.fields)?;
    let b = parse_list(&a.bounds).context("invalid --box")?;
    if b.len() != 2 || !(b[0] <= b[1]) {
        bail!("--box must be `lo,hi` with lo <= hi, got `{}`", a.bounds);
    }
    let n = fields.state_dim();
    let gap = fields.hypoellipticity_gap(a.level, &vec![b[0]; n], &vec![b[1]; n], a.grid)?;
    let s = format!(
        "level,lo,hi,grid,gap,hypoelliptic\n{},{},{},{},{gap},{}\n",
        a.level,
        b[0],
        b[1],
        a.grid,
        gap > 0.0
    );
    Ok(vec![Artifact::new(a.out.as_deref(), s)])
}

fn join(a: &JoinArgs) -> Result<Vec<Artifact>> {
    let fields = load_fields(&a.fields)?;
    let n = fields.state_dim();
    let x = parse_point(&a.from, n, "start point")?;
    let y = parse_point(&a.to, n, "target point")?;
    let joiner = a.join.joiner(&fields)?;
    let diag = joiner.join_path(&x, &y)?;
    let bound = joiner.bound_from_join(&diag, a.hurst, a.join.cm_steps, 1.0)?;
    let ratios = diag.stage_ratios();
    let mut s = String::from("quantity,value\n");
    let rows: [(&str, String); 9] = [
        ("stages", diag.stages.len().to_string()),
        ("converged", "true".into()),
        (
            "final_distance",
            diag.distances.last().copied().unwrap_or(0.0).to_string(),
        ),
        (
            "max_stage_ratio",
            ratios.iter().copied().fold(0.0f64, f64::max).to_string(),
        ),
        ("endpoint_error", diag.endpoint_error.to_string()),
        ("horizon", bound.horizon.to_string()),
        ("cm_norm", bound.cm_norm.to_string()),
        ("cm_residual", bound.cm_residual.to_string()),
        ("d_upper", bound.d_upper.to_string()),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    let mut out = vec![Artifact::new(a.out.as_deref(), s)];

    if let Some(p) = &a.trace {
        let basis = joiner.taylor().basis();
        let mut t = String::from("stage,distance_before,distance_after,ratio,variation,interval_start,interval_end");
        for k in 1..=n {
            let _ = write!(t, ",x{k}");
        }
        for i in 0..basis.len() {
            let _ = write!(t, ",u_{}", basis.word_label(i));
        }
        t.push('\n');
        let mut start = 0.0;
        for (m, st) in diag.stages.iter().enumerate() {
            let mut row = vec![
                (m + 1).to_string(),
                diag.distances[m].to_string(),
                diag.distances[m + 1].to_string(),
                ratios[m].to_string(),
                st.variation.to_string(),
                start.to_string(),
                (start + st.variation).to_string(),
            ];
            start += st.variation;
            row.extend(st.start.iter().map(f64::to_string));
            row.extend(st.u.coords().iter().map(f64::to_string));
            t.push_str(&csv_row(row));
        }
        out.push(Artifact::new(Some(p), t));
    }
    if let Some(p) = &a.path_out {
        let body = match &diag.joined {
            Some(path) => path_csv(path),
            None => path_csv(&roughkit_core::PiecewiseLinearPath::constant(&vec![
                0.0;
                fields.driver_dim()
            ])),
        };
        out.push(Artifact::new(Some(p), body));
    }
    Ok(out)
}

fn distance_scan(a: &ScanArgs) -> Result<Vec<Artifact>> {
    let fields = load_fields(&a.fields)?;
    let n = fields.state_dim();
    let c = parse_point(&a.center, n, "center")?;
    let dirs = read_rows(&a.dirs, n)?
        .iter()
        .map(|d| unit(d))
        .collect::<Result<Vec<_>>>()?;
    let radii = parse_list(&a.radii).context("invalid --radii")?;
    let joiner = a.join.joiner(&fields)?;
    let tasks: Vec<(usize, f64)> = (0..dirs.len())
        .flat_map(|i| radii.iter().map(move |&r| (i, r)))
        .collect();
    let rows = tasks
        .par_iter()
        .map(|&(i, r)| {
            let y: Vec<f64> = c.iter().zip(&dirs[i]).map(|(a, b)| a + r * b).collect();
            let diag = joiner.join_path(&c, &y)?;
            let b = joiner.bound_from_join(&diag, a.hurst, a.join.cm_steps, 1.0)?;
            Ok(csv_row([
                (i + 1).to_string(),
                r.to_string(),
                b.d_upper.to_string(),
                b.stages.to_string(),
                b.cm_norm.to_string(),
                b.horizon.to_string(),
            ]))
        })
        .collect::<Result<Vec<String>>>()?;
    let mut s = String::from("direction,radius,d_upper,stages,cm_norm,horizon\n");
    s.extend(rows);
    Ok(vec![Artifact::new(a.out.as_deref(), s)])
}

fn distance_equiv(a: &EquivArgs) -> Result<Vec<Artifact>> {
    let fields = load_fields(&a.fields)?;
    let n = fields.state_dim();
    let h = parse_list(&a.hurst).context("invalid --hurst pair")?;
    if h.len() != 2 {
        bail!("--hurst must be a pair `H1,H2`, got `{}`", a.hurst);
    }
    let centers = a
        .center
        .iter()
        .map(|c| parse_point(c, n, "center"))
        .collect::<Result<Vec<_>>>()?;
    let dirs = read_rows(&a.dirs, n)?
        .iter()
        .map(|d| unit(d))
        .collect::<Result<Vec<_>>>()?;
    let radii = parse_list(&a.radii).context("invalid --radii")?;
    let mut labels = Vec::new();
    let mut offsets = Vec::new();
    for (i, d) in dirs.iter().enumerate() {
        for &r in &radii {
            labels.push((i + 1, r));
            offsets.push(d.iter().map(|v| r * v).collect::<Vec<f64>>());
        }
    }
    let joiner = a.join.joiner(&fields)?;
    let rows = centers
        .par_iter()
        .map(|c| {
            equivalence_scan(
                &joiner,
                (h[0], h[1]),
                std::slice::from_ref(c),
                &offsets,
                a.join.cm_steps,
            )
        })
        .collect::<roughkit_core::Result<Vec<_>>>()?;
    let mut s = String::from("center,direction,radius,d_first,d_second,ratio\n");
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (ci, block) in rows.iter().enumerate() {
        for (row, &(d, r)) in block.iter().zip(&labels) {
            if row.d_second > 0.0 {
                lo = lo.min(row.ratio);
                hi = hi.max(row.ratio);
            }
            s.push_str(&csv_row([
                (ci + 1).to_string(),
                d.to_string(),
                r.to_string(),
                row.d_first.to_string(),
                row.d_second.to_string(),
                row.ratio.to_string(),
            ]));
        }
    }
    let art = Artifact::new(a.out.as_deref(), s).note(format!("ratio_min={lo} ratio_max={hi} band_width={}", hi / lo));
    Ok(vec![art])
}

fn density_diag(a: &DiagArgs, runner: &dyn ShardRunner) -> Result<Vec<Artifact>> {
    let (fields, mc, x) = a.mc.setup()?;
    let ts = parse_list(&a.t).context("invalid --t")?;
    let r = diagonal_scaling_experiment(&fields, &mc, &ts, &x, runner)?;
    let mut s = String::from("t,p_hat,std_error,log_t,log_p_hat\n");
    for row in &r.rows {
        let e = &row.estimate;
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            row.t,
            e.value,
            e.std_error,
            row.t.ln(),
            e.value.ln()
        );
    }
    let art = Artifact::new(a.mc.out.as_deref(), s).note(format!(
        "fit slope={} slope_std_error={} intercept={}",
        r.fit.slope, r.fit.slope_std_error, r.fit.intercept
    ));
    Ok(vec![art])
}

fn cube_grid(center: &[f64], radius: f64, points: usize) -> Result<Vec<Vec<f64>>> {
    if !(radius > 0.0) || points == 0 {
        bail!("--radius must be positive and --points at least 1");
    }
    let n = center.len();
    let step = if points > 1 {
        2.0 * radius / (points - 1) as f64
    } else {
        0.0
    };
    let total = points.checked_pow(n as u32).ok_or_else(|| anyhow!("grid too large"))?;
    let mut out = Vec::new();
    for mut idx in 0..total {
        let mut off = vec![0.0; n];
        for o in off.iter_mut().rev() {
            *o = if points > 1 {
                -radius + (idx % points) as f64 * step
            } else {
                0.0
            };
            idx /= points;
        }
        if off.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius * (1.0 + 1e-12) {
            out.push(center.iter().zip(&off).map(|(c, o)| c + o).collect());
        }
    }
    Ok(out)
}

fn density_scan(a: &DensityScanArgs, runner: &dyn ShardRunner) -> Result<Vec<Artifact>> {
    let (fields, mc, x) = a.mc.setup()?;
    let n = fields.state_dim();
    let grid = match &a.grid {
        Some(p) => read_rows(p, n)?,
        None => cube_grid(&x, a.radius, a.points)?,
    };
    let r = positivity_scan(&fields, &mc, a.t, &x, &grid, runner)?;
    let mut s = String::new();
    for k in 1..=n {
        let _ = write!(s, "y{k},");
    }
    s.push_str("p_hat,std_error,resolved\n");
    for e in &r.rows {
        let mut row: Vec<String> = e.point.iter().map(f64::to_string).collect();
        row.extend([
            e.value.to_string(),
            e.std_error.to_string(),
            e.resolved_positive().to_string(),
        ]);
        s.push_str(&csv_row(row));
    }
    let verdict = match r.verdict {
        PositivityVerdict::Positive => "positive",
        PositivityVerdict::Unresolved => "unresolved",
        PositivityVerdict::Inconclusive => "inconclusive (too few samples)",
    };
    let art = Artifact::new(a.mc.out.as_deref(), s).note(format!(
        "verdict={verdict} minimum={} flagged={}",
        r.minimum,
        r.flagged.len()
    ));
    Ok(vec![art])
}

fn density_varadhan(a: &VaradhanArgs, runner: &dyn ShardRunner) -> Result<Vec<Artifact>> {
    let (fields, mc, x) = a.mc.setup()?;
    let y = parse_point(&a.to, fields.state_dim(), "target point")?;
    let ts = parse_list(&a.t).context("invalid --t")?;
    let r = varadhan_experiment(&fields, &mc, &ts, &x, &y, a.l0, runner)?;
    let mut s = String::from("t,p_hat,std_error,value,band_low,band_high,distance_to_band\n");
    for row in &r.rows {
        s.push_str(&csv_row([
            row.t.to_string(),
            row.estimate.value.to_string(),
            row.estimate.std_error.to_string(),
            row.value.to_string(),
            r.band.0.to_string(),
            r.band.1.to_string(),
            row.distance_to_band.to_string(),
        ]));
    }
    let art = Artifact::new(a.mc.out.as_deref(), s).note(format!(
        "d_upper={} d_lower={} trend_into_band={}",
        r.d_upper, r.d_lower, r.trend_into_band
    ));
    Ok(vec![art])
}

fn density_sigscale(a: &SigscaleArgs, runner: &dyn ShardRunner) -> Result<Vec<Artifact>> {
    let ts = parse_list(&a.t).context("invalid --t")?;
    if ts.len() != 2 {
        bail!("--t must be a pair `t1,t2`, got `{}`", a.t);
    }
    let r = signature_scaling_test(
        a.dim,
        a.level,
        a.hurst,
        (ts[0], ts[1]),
        a.samples,
        a.steps,
        a.seed,
        runner,
    )?;
    let mut s = String::from("word,ks,critical,below_critical,variance_t1,variance_t2,variance_se\n");
    for (i, label) in r.labels.iter().enumerate() {
        let mut row = vec![
            label.clone(),
            r.ks[i].to_string(),
            r.critical.to_string(),
            (r.ks[i] < r.critical).to_string(),
        ];
        match r.level_one_variance.get(i) {
            Some([(v1, se1), (v2, se2)]) => row.extend([v1.to_string(), v2.to_string(), se1.max(*se2).to_string()]),
            None => row.extend([String::new(), String::new(), String::new()]),
        }
        s.push_str(&csv_row(row));
    }
    let art = Artifact::new(a.out.as_deref(), s).note(format!("all_below_critical={}", r.all_below_critical()));
    Ok(vec![art])
}

fn execute(cmd: &Cmd) -> Result<Vec<Artifact>> {
    let runner = Parallel;
    match cmd {
        Cmd::Algebra(AlgebraCmd::Witt(a)) => witt(a),
        Cmd::Algebra(AlgebraCmd::Lyndon(a)) => lyndon(a),
        Cmd::Sig(SigCmd::Logsig(a)) => logsig(a),
        Cmd::Sig(SigCmd::Realize(a)) => realize(a),
        Cmd::Fbm(FbmCmd::Sample(a)) => fbm_sample(a),
        Cmd::Hypo(HypoCmd::Check(a)) => hypo_check(a),
        Cmd::Join(a) => join(a),
        Cmd::Distance(DistanceCmd::Scan(a)) => distance_scan(a),
        Cmd::Distance(DistanceCmd::Equiv(a)) => distance_equiv(a),
        Cmd::Density(DensityCmd::Diag(a)) => density_diag(a, &runner),
        Cmd::Density(DensityCmd::Scan(a)) => density_scan(a, &runner),
        Cmd::Density(DensityCmd::Varadhan(a)) => density_varadhan(a, &runner),
        Cmd::Density(DensityCmd::Sigscale(a)) => density_sigscale(a, &runner),
    }
}

fn emit(artifacts: &[Artifact], matches: &ArgMatches, stdout: &mut dyn Write) -> Result<()> {
    let foot = footer(matches);
    for a in artifacts {
        let text = a.render(&foot);
        match &a.path {
            Some(p) => fs::write(p, text).with_context(|| format!("cannot write file '{}'", p.display()))?,
            None => stdout.write_all(text.as_bytes()).context("cannot write to stdout")?,
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit status: 0 on success, 1 on a failed run, 2 on a usage error.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let cmd = command();
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_args(&cmd, args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            return 2;
        }
    };
    let matches = match cmd.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return e.exit_code();
        }
    };
    let outcome = Cli::from_arg_matches(&matches)
        .map_err(|e| anyhow!(e.to_string()))
        .and_then(|cli| execute(&cli.command))
        .and_then(|arts| emit(&arts, &matches, stdout));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            1
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_tree_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn cube_grid_stays_in_the_ball() {
        let g = cube_grid(&[0.0, 0.0], 1.0, 3).unwrap();
        // corners are outside the unit ball
        assert_eq!(g.len(), 5);
        assert!(cube_grid(&[0.0], 0.0, 3).is_err());
    }
}
