//! `key = value` config files.
//!
//! Keys are long flag names (`-` or `_`). Keys before any `[section]` apply to
//! every subcommand that has that flag; keys under `[train]` and the like
//! apply to that subcommand only and must name one of its flags. Boolean
//! flags take `true` or `false`. Values from the file are placed ahead of the
//! command-line arguments, so flags given on the command line win.

use std::path::Path;

use anyhow::{bail, Context, Result};
use clap::Command;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: Option<String>,
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut section = None;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(name.trim().to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got {raw:?}", i + 1);
        };
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        entries.push(Entry {
            section: section.clone(),
            key: key.trim().replace('_', "-"),
            value: value.to_string(),
            line: i + 1,
        });
    }
    Ok(entries)
}

/// Arguments for `subcommand` derived from `entries`.
pub fn to_args(entries: &[Entry], command: &Command, subcommand: &str, origin: &Path) -> Result<Vec<String>> {
    let sub = command
        .find_subcommand(subcommand)
        .with_context(|| format!("unknown subcommand {subcommand}"))?;
    let mut args = Vec::new();
    for e in entries {
        let scoped = match &e.section {
            Some(s) if s != subcommand => {
                if command.find_subcommand(s).is_none() {
                    bail!("{}:{}: unknown section [{s}]", origin.display(), e.line);
                }
                continue;
            }
            Some(_) => true,
            None => false,
        };
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(e.key.as_str())) else {
            if scoped {
                bail!("{}:{}: `{subcommand}` has no flag --{}", origin.display(), e.line, e.key);
            }
            continue;
        };
        if arg.get_action().takes_values() {
            args.push(format!("--{}={}", e.key, e.value));
        } else {
            match e.value.as_str() {
                "true" => args.push(format!("--{}", e.key)),
                "false" => {}
                v => bail!("{}:{}: --{} expects true or false, got {v:?}", origin.display(), e.line, e.key),
            }
        }
    }
    Ok(args)
}

/// Splices arguments from the `--config` file (if any) into `argv` right
/// after the subcommand name.
pub fn expand(argv: Vec<String>, command: &Command) -> Result<Vec<String>> {
    let mut config = None;
    let mut sub_index = None;
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if a == "--" {
            break;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(v.to_string());
        } else if a == "--config" {
            config = argv.get(i + 1).cloned();
            i += 1;
        } else if sub_index.is_none() && command.find_subcommand(a).is_some() {
            sub_index = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(at)) = (config, sub_index) else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    let entries = parse(&text).with_context(|| format!("in config file {}", path.display()))?;
    let injected = to_args(&entries, command, &argv[at], path)?;
    let mut out = argv[..=at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[at + 1..]);
    Ok(out)
}
