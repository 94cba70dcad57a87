//! `--config` support: values from the file are appended as flags unless the
//! same flag is already on the command line.

use std::ffi::OsString;

use crate::args::SUBCOMMANDS;

fn value_to_strings(v: &toml::Value) -> Result<Option<String>, String> {
    Ok(match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(_) => None,
        toml::Value::Array(items) => {
            let parts = items
                .iter()
                .map(|i| value_to_strings(i)?.ok_or_else(|| "arrays must hold scalars".to_string()))
                .collect::<Result<Vec<_>, _>>()?;
            Some(parts.join(","))
        }
        other => return Err(format!("unsupported config value {other}")),
    })
}

fn has_flag(args: &[String], flag: &str) -> bool {
    args.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")))
}

fn push_entries(args: &mut Vec<String>, table: &toml::Table, given: &[String]) -> Result<(), String> {
    for (key, value) in table {
        if value.is_table() {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if has_flag(given, &flag) {
            continue;
        }
        match (value, value_to_strings(value)?) {
            (toml::Value::Boolean(true), _) => args.push(flag),
            (toml::Value::Boolean(false), _) => {}
            (_, Some(s)) => {
                args.push(flag);
                args.push(s);
            }
            _ => {}
        }
    }
    Ok(())
}

fn config_path(args: &[String]) -> Result<Option<String>, String> {
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            return args.get(i + 1).cloned().map(Some).ok_or_else(|| "--config needs a file".to_string());
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Ok(Some(p.to_string()));
        }
    }
    Ok(None)
}

pub fn merged_args(raw: impl Iterator<Item = OsString>) -> Result<Vec<String>, String> {
    let args: Vec<String> = raw
        .map(|a| a.into_string().map_err(|a| format!("argument is not valid UTF-8: {a:?}")))
        .collect::<Result<_, _>>()?;
    let Some(path) = config_path(&args)? else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let table: toml::Table = text.parse().map_err(|e| format!("invalid config {path}: {e}"))?;

    let sub = args.iter().skip(1).find(|a| SUBCOMMANDS.contains(&a.as_str())).cloned();
    let mut out = args.clone();
    push_entries(&mut out, &table, &args)?;
    if let Some(sub) = sub {
        if let Some(section) = table.get(&sub) {
            let section = section.as_table().ok_or_else(|| format!("config section [{sub}] must be a table"))?;
            push_entries(&mut out, section, &args)?;
        }
    }
    Ok(out)
}
