//! Resolving the run configuration: defaults, then the config file, then
//! `--set section.key=value` overrides.

use std::path::Path;

use activitymon_service::AppConfig;

use crate::error::{CliError, CliResult};

pub fn resolve(file: Option<&Path>, overrides: &[String]) -> CliResult<AppConfig> {
    let mut cfg = match file {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if !overrides.is_empty() {
        let mut table = toml::Table::try_from(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
        for o in overrides {
            apply(&mut table, o)?;
        }
        cfg = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("after --set: {}", e.message())))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// `a.b.c=value`; the value is read as a TOML value, or as a bare string
/// when it does not parse as one.
fn apply(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {assignment:?}")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().expect("split yields at least one item");
    let mut cur = table;
    for k in parents {
        cur = cur
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("--set {path}: {k} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let cfg = resolve(
            None,
            &[
                "monitor.idle_timeout_s=600".into(),
                "monitor.detection_mode=impact-only".into(),
                "service.data_dir=/tmp/x".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.monitor.idle_timeout_s, 600.0);
        assert_eq!(cfg.monitor.detection_mode, activitymon_core::DetectionMode::ImpactOnly);
        assert_eq!(cfg.service.data_dir, Path::new("/tmp/x"));
        assert!(resolve(None, &["monitor.nope=1".into()]).is_err());
        assert!(resolve(None, &["monitor.tick_s=-1".into()]).is_err());
        assert!(resolve(None, &["no-equals".into()]).is_err());
    }
}
