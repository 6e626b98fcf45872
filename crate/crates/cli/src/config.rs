//! Config files: TOML keys named after long flags, turned into argv.
//!
//! Top-level keys apply to every subcommand that has a flag of that name;
//! keys in a `[subcommand]` table apply only there and win over top-level
//! ones. Explicit command-line flags win over both.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::CommandFactory;

use crate::Cli;

/// Find `--config PATH` or `--config=PATH` in raw arguments.
pub fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if text == "--" {
            return None;
        }
        if text == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = text.strip_prefix("--config=") {
            return Some(path.into());
        }
    }
    None
}

fn flag_args(key: &str, value: &toml::Value) -> Result<Vec<OsString>> {
    let flag = format!("--{key}");
    let scalar = |v: &toml::Value| -> Result<String> {
        Ok(match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            other => bail!("config key {key:?}: unsupported value {other}"),
        })
    };
    Ok(match value {
        toml::Value::Boolean(true) => vec![flag.into()],
        toml::Value::Boolean(false) => Vec::new(),
        toml::Value::Array(items) => items
            .iter()
            .map(|v| Ok([flag.clone().into(), scalar(v)?.into()]))
            .collect::<Result<Vec<[OsString; 2]>>>()?
            .into_iter()
            .flatten()
            .collect(),
        v => vec![flag.into(), scalar(v)?.into()],
    })
}

/// Arguments the config file contributes to `subcommand`, to be placed
/// right after the subcommand name.
pub fn config_args(path: &Path, subcommand: &str) -> Result<Vec<OsString>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let table: toml::Table = text
        .parse()
        .with_context(|| format!("invalid config {}", path.display()))?;

    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(subcommand) else {
        return Ok(Vec::new());
    };
    let known: Vec<&str> = sub.get_arguments().filter_map(|a| a.get_long()).collect();
    let subcommands: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();

    let mut merged: BTreeMap<&str, &toml::Value> = BTreeMap::new();
    for (key, value) in &table {
        match value {
            toml::Value::Table(_) if subcommands.contains(&key.as_str()) => {}
            toml::Value::Table(_) => bail!("config {}: unknown section [{key}]", path.display()),
            _ if known.contains(&key.as_str()) => {
                merged.insert(key, value);
            }
            _ => {}
        }
    }
    if let Some(toml::Value::Table(section)) = table.get(subcommand) {
        for (key, value) in section {
            if !known.contains(&key.as_str()) {
                bail!("config {}: [{subcommand}] has no option {key:?}", path.display());
            }
            merged.insert(key, value);
        }
    }
    let mut out = Vec::new();
    for (key, value) in merged {
        out.extend(flag_args(key, value)?);
    }
    Ok(out)
}

/// Splice config arguments in after the subcommand name.
pub fn with_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
    let Some(pos) = args.iter().position(|a| names.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let extra = config_args(Path::new(&path), &args[pos].to_string_lossy())?;
    let mut out = args[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
