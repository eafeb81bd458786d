//! Config files supply flag values. Top-level keys apply to any command with
//! a flag of that name; tables named after a command (`[train]`,
//! `[dataset.split]`) apply to it alone and must name real flags. Keys may use
//! `-` or `_`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, Command, CommandFactory};
use toml::{Table, Value};

use crate::cli::Cli;
use crate::CliError;

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// The chain of subcommands named on the command line.
fn command_path(root: &Command, argv: &[OsString]) -> Vec<String> {
    let mut path = Vec::new();
    let mut cur = root;
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            it.next();
            continue;
        }
        if s.starts_with('-') {
            continue;
        }
        match cur.find_subcommand(s.as_ref()) {
            Some(sub) => {
                path.push(sub.get_name().to_string());
                cur = sub;
            }
            None => break,
        }
    }
    path
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Integer(i) => Some(i.to_string()),
        Value::Float(f) => Some(f.to_string()),
        Value::Boolean(b) => Some(b.to_string()),
        _ => None,
    }
}

fn bad(message: String) -> CliError {
    CliError::new("config", message)
}

/// Returns `argv` extended with values from the config file for flags the
/// command line leaves unset.
pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let table: Table = text.parse().map_err(|e| bad(format!("{}: {e}", path.display())))?;

    let root = Cli::command();
    let names = command_path(&root, &argv);
    let mut leaf = &root;
    for n in &names {
        leaf = leaf.find_subcommand(n).expect("path built from this tree");
    }
    let flag = |key: &str| {
        let key = key.replace('_', "-");
        leaf.get_arguments().find(|a| a.get_long() == Some(key.as_str()))
    };

    // top level first, then each enclosing command table, innermost last
    let mut values: Vec<(String, Value)> = table
        .iter()
        .filter(|(_, v)| !v.is_table())
        .filter(|(k, _)| flag(k).is_some())
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let mut section = &table;
    for (depth, n) in names.iter().enumerate() {
        let Some(Value::Table(t)) = section.get(n.as_str()) else {
            break;
        };
        for (k, v) in t.iter().filter(|(_, v)| !v.is_table()) {
            if flag(k).is_none() {
                return Err(bad(format!("[{}] has no flag {k:?}", names[..=depth].join("."))));
            }
            values.push((k.clone(), v.clone()));
        }
        section = t;
    }

    let given: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut merged = argv;
    let mut seen = std::collections::BTreeMap::new();
    for (k, v) in values {
        seen.insert(k.replace('_', "-"), v);
    }
    for (long, v) in seen {
        let arg = flag(&long).expect("filtered above");
        let opt = format!("--{long}");
        if given.iter().any(|g| *g == opt || g.starts_with(&format!("{opt}="))) {
            continue;
        }
        match (arg.get_action(), &v) {
            (ArgAction::SetTrue, Value::Boolean(b)) => {
                if *b {
                    merged.push(opt.into());
                }
            }
            (ArgAction::SetTrue, _) => return Err(bad(format!("{long} expects true or false"))),
            (_, Value::Array(items)) => {
                for item in items {
                    let s = scalar(item).ok_or_else(|| bad(format!("{long}: unsupported array item")))?;
                    merged.push(opt.clone().into());
                    merged.push(s.into());
                }
            }
            _ => {
                let s = scalar(&v).ok_or_else(|| bad(format!("{long}: unsupported value")))?;
                merged.push(opt.into());
                merged.push(s.into());
            }
        }
    }
    Ok(merged)
}
