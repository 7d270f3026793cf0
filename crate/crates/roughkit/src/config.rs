//! `key = value` experiment files and the provenance footer of every CSV.
//!
//! Entries of a config file are spliced into the argument list right after
//! the subcommand, so flags given on the command line win.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Result};
use clap::{ArgMatches, Command};
use sha2::{Digest, Sha256};

use crate::formats::read_text;

/// Parsed `key = value` lines; `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected `key = value`, found `{line}`", i + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", i + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn as_string(a: &OsString) -> String {
    a.to_string_lossy().into_owned()
}

/// Finds `--config FILE` (or `--config=FILE`) anywhere in `args`.
fn config_path(args: &[OsString]) -> Option<String> {
    let mut it = args.iter().map(as_string);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// `args` (program name first) with the entries of the config file, if any,
/// inserted as flags of the selected subcommand.
pub fn expand_args(cmd: &Command, args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let entries = parse_config(&read_text(Path::new(&path))?)?;

    // leading subcommand names, skipping the config flag itself
    let mut leaf = cmd;
    let mut insert_at = 1;
    let mut names = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let a = as_string(&args[i]);
        if a == "--config" {
            i += 2;
            continue;
        }
        if a.starts_with("--config=") {
            i += 1;
            continue;
        }
        match leaf.find_subcommand(&a) {
            Some(sub) if !a.starts_with('-') => {
                leaf = sub;
                names.push(a);
                i += 1;
                insert_at = i;
            }
            _ => break,
        }
    }
    let mut injected = Vec::new();
    for (key, value) in entries {
        let arg = leaf
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| anyhow!("unknown config key '{key}' for `{}`", names.join(" ")))?;
        if arg.get_action().takes_values() {
            injected.push(OsString::from(format!("--{key}={value}")));
        } else {
            match value.as_str() {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => bail!("config key '{key}' is a switch; use true or false, found `{value}`"),
            }
        }
    }
    let mut out = args;
    out.splice(insert_at..insert_at, injected);
    Ok(out)
}

/// Keys that name output files rather than experiment parameters.
const NOT_CONFIG: [&str; 4] = ["config", "out", "trace", "path_out"];

/// Subcommand path and its resolved values, `key=value` sorted by key.
pub fn resolved(matches: &ArgMatches) -> (Vec<String>, Vec<(String, String)>) {
    let mut names = Vec::new();
    let mut m = matches;
    while let Some((name, sub)) = m.subcommand() {
        names.push(name.to_string());
        m = sub;
    }
    let mut pairs: Vec<(String, String)> = m
        .ids()
        .map(|id| id.as_str())
        .filter(|id| !NOT_CONFIG.contains(id))
        .filter_map(|id| {
            let raw = m.get_raw(id)?;
            let joined = raw
                .map(|v| v.to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join(";");
            Some((id.replace('_', "-"), joined))
        })
        .collect();
    pairs.sort();
    (names, pairs)
}

/// The two trailing comment lines: the full resolved configuration, then
/// its SHA-256 and the seed.
pub fn footer(matches: &ArgMatches) -> String {
    let (names, pairs) = resolved(matches);
    let mut line = format!("roughkit {} {}", env!("CARGO_PKG_VERSION"), names.join(" "));
    for (k, v) in &pairs {
        let _ = write!(line, " {k}={v}");
    }
    let hash = Sha256::digest(line.as_bytes());
    let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
    let seed = pairs
        .iter()
        .find(|(k, _)| k == "seed")
        .map_or("none", |(_, v)| v.as_str());
    format!("# config: {line}\n# config-sha256: {hex} seed: {seed}\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let c = parse_config("# exp\nhurst = 0.7\nsamples=2000\n\nmiddle_third = true\n").unwrap();
        assert_eq!(
            c,
            vec![
                ("hurst".into(), "0.7".into()),
                ("samples".into(), "2000".into()),
                ("middle-third".into(), "true".into())
            ]
        );
        assert!(parse_config("hurst 0.7").is_err());
        assert!(parse_config("= 3").is_err());
    }
}
