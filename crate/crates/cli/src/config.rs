//! Flat `key = value` config files mirroring the command-line flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

/// Reads a flat TOML table; keys may use `-` or `_`.
pub fn load(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .with_context(|| format!("parsing config {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (k, v) in table {
        let s = match v {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => bail!("config key {k}: unsupported value {other}"),
        };
        out.insert(k.replace('_', "-"), s);
    }
    Ok(out)
}

fn longs(cmd: &Command) -> Vec<String> {
    cmd.get_arguments()
        .filter(|a| !a.is_global_set())
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|l| l != "config" && l != "help")
        .collect()
}

/// Rewrites `args` so that config values for the selected subcommand come
/// before the user's own flags (later occurrences win in clap).
pub fn merge(cmd: &Command, args: Vec<OsString>, sub: &str, cfg: &BTreeMap<String, String>) -> Result<Vec<OsString>> {
    let all: Vec<String> = cmd.get_subcommands().flat_map(longs).collect();
    let sc = cmd.find_subcommand(sub).context("unknown subcommand")?;
    let own = longs(sc);
    let pos = args
        .iter()
        .position(|a| a.to_str() == Some(sub))
        .context("subcommand not found in arguments")?;
    let mut out: Vec<OsString> = args[..=pos].to_vec();
    for (k, v) in cfg {
        if own.contains(k) {
            out.push(format!("--{k}={v}").into());
        } else if !all.contains(k) {
            bail!("unknown config key `{k}`");
        }
    }
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
