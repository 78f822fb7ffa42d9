//! `--config` files: `key = value` lines that supply flag values.
//!
//! Each key becomes `--key value` placed right after the subcommand, ahead of
//! the user's own flags, so anything given on the command line wins.
//! `key = true` becomes a bare `--key`; `key = false` is skipped.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

const SUBCOMMANDS: [&str; 7] = [
    "gen-matrix",
    "compress",
    "reconstruct",
    "merge-labels",
    "evaluate",
    "sweep",
    "demo",
];

pub fn parse_config(text: &str) -> Result<Vec<OsString>> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got {line:?}", i + 1);
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key == "config" {
            bail!("line {}: invalid key {key:?}", i + 1);
        }
        match value {
            "false" => {}
            "true" => args.push(format!("--{key}").into()),
            _ => {
                args.push(format!("--{key}").into());
                args.push(value.into());
            }
        }
    }
    Ok(args)
}

fn config_path(argv: &[OsString]) -> Result<Option<PathBuf>> {
    let mut iter = argv.iter().skip(1);
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let path = iter.next().context("--config needs a file argument")?;
            return Ok(Some(PathBuf::from(path)));
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Ok(Some(PathBuf::from(p)));
        }
    }
    Ok(None)
}

/// Splices config-file flags into `argv` after the subcommand name.
pub fn expand_args(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv)? else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let extra = parse_config(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Some(pos) = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
    else {
        return Ok(argv);
    };
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}
