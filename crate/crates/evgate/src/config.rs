//! INI-style run configuration: `key = value` lines, `#` comments, optional
//! `[section]` headers (ignored). Keys are long flag names with `_` or `-`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, ArgMatches, Command};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_ini(text: &str, path: &Path) -> Result<Vec<ConfigEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected `key = value`, got {line:?}"),
            });
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "empty key".into(),
            });
        }
        out.push(ConfigEntry {
            key,
            value: v.trim().to_string(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Value of `--config` in `args`, if any.
fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn is_flag(cmd: &Command, long: &str) -> Option<bool> {
    cmd.get_arguments()
        .find(|a| a.get_long() == Some(long))
        .map(|a| matches!(a.get_action(), ArgAction::SetTrue | ArgAction::SetFalse))
}

/// Splices the settings of the `--config` file into `args` directly after the
/// subcommand name, so that flags given on the command line, which come
/// later, take precedence. Keys that no subcommand understands are rejected;
/// keys meant for other subcommands are skipped.
pub fn expand_args(cmd: &Command, args: Vec<String>) -> Result<Vec<String>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let entries = parse_ini(&text, &path)?;
    let Some(pos) = args
        .iter()
        .position(|a| cmd.get_subcommands().any(|s| s.get_name() == a))
    else {
        return Ok(args);
    };
    let sub = cmd.find_subcommand(&args[pos]).expect("position found by name");
    let mut injected = Vec::new();
    for entry in entries {
        if entry.key == "config" {
            continue;
        }
        let flag = is_flag(sub, &entry.key).or_else(|| is_flag(cmd, &entry.key));
        match flag {
            Some(true) => match entry.value.as_str() {
                "true" | "1" | "yes" => injected.push(format!("--{}", entry.key)),
                "false" | "0" | "no" => {}
                other => {
                    return Err(Error::Parse {
                        path: path.clone(),
                        line: entry.line,
                        message: format!("{} expects true or false, got {other:?}", entry.key),
                    })
                }
            },
            Some(false) => {
                injected.push(format!("--{}", entry.key));
                injected.push(entry.value);
            }
            None => {
                let known = cmd.get_subcommands().any(|s| is_flag(s, &entry.key).is_some());
                if !known {
                    return Err(Error::Usage(format!(
                        "{}:{}: unknown setting {:?}",
                        path.display(),
                        entry.line,
                        entry.key
                    )));
                }
            }
        }
    }
    let mut out = args;
    out.splice(pos + 1..pos + 1, injected);
    Ok(out)
}

/// Effective settings of a parsed invocation as `key = value` lines,
/// global options first.
pub fn effective_config(cmd: &Command, matches: &ArgMatches) -> String {
    let mut out = String::from("# effective configuration\n");
    let Some((name, sub_matches)) = matches.subcommand() else {
        return out;
    };
    let _ = writeln!(out, "command = {name}");
    let sub = cmd.find_subcommand(name);
    let ids = sub
        .into_iter()
        .flat_map(|s| s.get_arguments())
        .filter(|a| a.get_long().is_some());
    for arg in ids {
        let id = arg.get_id().as_str();
        if id == "config" {
            continue;
        }
        let Some(values) = sub_matches.get_raw(id) else {
            continue;
        };
        let joined: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
        let value = if joined.is_empty() {
            "true".to_string()
        } else {
            joined.join(",")
        };
        let _ = writeln!(out, "{} = {}", id.replace('-', "_"), value);
    }
    out
}
