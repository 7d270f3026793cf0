//! Text formats: path CSV (`t,x1,...,xd`), Lie coordinate CSV (`word,value`),
//! numeric row files, comma lists and field files. Lines starting with `#`
//! are comments everywhere.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use roughkit_core::fields::{builtin_fields, parse_fields, BUILTIN_NAMES};
use roughkit_core::lie::{LieBasis, LieCoordinates};
use roughkit_core::tensor::parse_word;
use roughkit_core::{PiecewiseLinearPath, VectorFieldSystem};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read file '{}'", path.display()))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    let f = field.trim();
    f.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| anyhow!("line {line}: `{f}` is not a finite number"))
}

/// `"0.1, 2,3e-4"` as numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if parts.is_empty() {
        bail!("empty number list `{text}`");
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| anyhow!("`{p}` in list `{text}` is not a finite number"))
        })
        .collect()
}

pub fn parse_point(text: &str, dim: usize, what: &str) -> Result<Vec<f64>> {
    let v = parse_list(text).with_context(|| format!("invalid {what}"))?;
    if v.len() != dim {
        bail!("{what} `{text}` has {} coordinates, expected {dim}", v.len());
    }
    Ok(v)
}

/// Rows of numbers. A first line that does not parse is taken as a header.
pub fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (k, (line, l)) in data_lines(&text).enumerate() {
        let fields: Vec<&str> = l.split(',').collect();
        if k == 0 && fields.iter().any(|f| f.trim().parse::<f64>().is_err()) {
            continue;
        }
        if fields.len() != width {
            bail!(
                "{}: line {line} has {} columns, expected {width}",
                path.display(),
                fields.len()
            );
        }
        rows.push(
            fields
                .iter()
                .map(|f| parse_number(f, line))
                .collect::<Result<Vec<_>>>()
                .with_context(|| path.display().to_string())?,
        );
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    Ok(rows)
}

pub fn parse_path_csv(text: &str) -> Result<PiecewiseLinearPath> {
    let mut lines = data_lines(text);
    let (_, header) = lines.next().ok_or_else(|| anyhow!("path file is empty"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "t" {
        bail!("path header must read `t,x1,...,xd`, found `{header}`");
    }
    let dim = cols.len() - 1;
    let mut times = Vec::new();
    let mut points = Vec::new();
    for (line, l) in lines {
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != dim + 1 {
            bail!("line {line}: expected {} columns, found {}", dim + 1, fields.len());
        }
        times.push(parse_number(fields[0], line)?);
        for f in &fields[1..] {
            points.push(parse_number(f, line)?);
        }
    }
    Ok(PiecewiseLinearPath::from_flat(dim, times, points)?)
}

pub fn path_csv(path: &PiecewiseLinearPath) -> String {
    let mut s = String::from("t");
    for k in 1..=path.dim() {
        let _ = write!(s, ",x{k}");
    }
    s.push('\n');
    for (i, t) in path.times().iter().enumerate() {
        let _ = write!(s, "{t}");
        for v in path.point(i) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn largest_letter(word: &str) -> usize {
    let letters: Vec<usize> = if word.contains('.') {
        word.split('.').filter_map(|p| p.trim().parse().ok()).collect()
    } else {
        word.chars()
            .filter_map(|c| c.to_digit(10))
            .map(|d| d as usize)
            .collect()
    };
    letters.into_iter().max().unwrap_or(0)
}

/// `word,value` rows; words missing from the file are zero. The alphabet
/// size is `dim` or, when absent, the largest letter used.
pub fn parse_coords_csv(text: &str, dim: Option<usize>, level: usize) -> Result<(LieBasis, LieCoordinates)> {
    let mut entries = Vec::new();
    for (line, l) in data_lines(text) {
        let Some((w, v)) = l.split_once(',') else {
            bail!("line {line}: expected `word,value`");
        };
        let w = w.trim();
        if w == "word" {
            continue;
        }
        entries.push((line, w.to_string(), parse_number(v, line)?));
    }
    let dim = match dim {
        Some(d) => d,
        None => entries
            .iter()
            .map(|(_, w, _)| largest_letter(w))
            .max()
            .filter(|&d| d > 0)
            .ok_or_else(|| anyhow!("cannot infer the alphabet size from the coordinate file; pass --dim"))?,
    };
    let basis = LieBasis::new(dim, level);
    let mut u = LieCoordinates::zero(dim, level);
    for (line, w, v) in entries {
        let word = parse_word(dim, &w).with_context(|| format!("line {line}"))?;
        let idx = basis
            .index_of(&word)
            .ok_or_else(|| anyhow!("line {line}: `{w}` is not a Lyndon word of length ≤ {level}"))?;
        u.coords_mut()[idx] = v;
    }
    Ok((basis, u))
}

pub fn coords_csv(basis: &LieBasis, u: &LieCoordinates) -> String {
    let mut s = String::from("word,value\n");
    for (i, v) in u.coords().iter().enumerate() {
        let _ = writeln!(s, "{},{v}", basis.word_label(i));
    }
    s
}

/// A builtin system by name, or a field file.
pub fn load_fields(spec: &str) -> Result<VectorFieldSystem> {
    if BUILTIN_NAMES.contains(&spec) {
        return Ok(builtin_fields(spec)?);
    }
    let path = Path::new(spec);
    if !path.exists() && !spec.contains(['/', '.', '\\']) {
        // looks like a builtin name rather than a file
        return Ok(builtin_fields(spec)?);
    }
    let text = read_text(path)?;
    parse_fields(&text).with_context(|| format!("invalid field file '{spec}'"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_round_trip() {
        let p = PiecewiseLinearPath::new(
            vec![0.0, 0.5, 1.25],
            &[vec![0.0, 1.0], vec![0.5, -2.0], vec![1e-3, 3.0]],
        )
        .unwrap();
        let back = parse_path_csv(&path_csv(&p)).unwrap();
        assert_eq!(back, p);
        assert!(parse_path_csv("x,y\n0,1\n").is_err());
        assert!(parse_path_csv("t,x1\n0,1\n1\n").is_err());
    }

    #[test]
    fn coordinates_round_trip() {
        let basis = LieBasis::new(2, 3);
        let u = LieCoordinates::new(2, 3, vec![0.5, -1.0, 0.25, 0.0, 2.0]).unwrap();
        let (b, v) = parse_coords_csv(&coords_csv(&basis, &u), None, 3).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(v, u);
        let (_, w) = parse_coords_csv("# area only\n12,0.01\n", Some(2), 2).unwrap();
        assert_eq!(w.coords(), &[0.0, 0.0, 0.01]);
        assert!(parse_coords_csv("21,1\n", Some(2), 2).is_err());
        assert!(parse_coords_csv("112,1\n", Some(2), 2).is_err());
    }

    #[test]
    fn lists_and_fields() {
        assert_eq!(parse_list("0.25, 1,3e-1").unwrap(), vec![0.25, 1.0, 0.3]);
        assert!(parse_list("1,x").is_err());
        assert!(parse_point("1,2", 3, "target").is_err());
        assert_eq!(load_fields("heisenberg").unwrap().state_dim(), 3);
        let e = load_fields("nope").unwrap_err().to_string();
        assert!(e.contains("identity2") && e.contains("heisenberg"), "{e}");
        assert!(load_fields("missing/file.txt")
            .unwrap_err()
            .to_string()
            .contains("cannot read"));
    }
}
