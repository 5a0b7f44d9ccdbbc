//! Parameter grids over documented configuration keys.

use anyhow::{anyhow, bail, Context, Result};
use ftmrs_core::config::ScenarioConfig;
use toml::{Table, Value};

/// Top-level keys that may be absent from a serialized config.
const OPTIONAL_KEYS: [&str; 2] = ["bs_position", "queue_cap"];

/// Dotted config keys, each with the values to try, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    pub axes: Vec<(String, Vec<Value>)>,
}

impl Grid {
    /// Reads a TOML file whose entries are arrays of values. Nested tables
    /// stand for dotted keys, so `[faults] node_fault_fraction = [0.0, 0.4]`
    /// and `"faults.node_fault_fraction" = [0.0, 0.4]` mean the same.
    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text.parse().context("parsing grid")?;
        let mut axes = Vec::new();
        flatten("", &table, &mut axes)?;
        Ok(Self { axes })
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }

    pub fn keys(&self) -> Vec<&str> {
        self.axes.iter().map(|(k, _)| k.as_str()).collect()
    }

    /// Checks every key against `base` and every value by building the
    /// config it produces, so nothing runs when any cell is bad.
    pub fn cells(&self, base: &ScenarioConfig) -> Result<Vec<Cell>> {
        let doc = Value::try_from(base).context("serializing base config")?;
        for (key, values) in &self.axes {
            check_key(&doc, key)?;
            if values.is_empty() {
                bail!("grid key {key} has no values");
            }
        }
        let mut cells = vec![Cell {
            assignments: Vec::new(),
            config: base.clone(),
        }];
        for (key, values) in &self.axes {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for v in values {
                    let mut assignments = cell.assignments.clone();
                    assignments.push((key.clone(), v.clone()));
                    let config = apply(&cell.config, key, v.clone())?;
                    next.push(Cell { assignments, config });
                }
            }
            cells = next;
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub assignments: Vec<(String, Value)>,
    pub config: ScenarioConfig,
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Vec<Value>)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Array(values) => out.push((key, values.clone())),
            Value::Table(t) => flatten(&key, t, out)?,
            other => bail!("grid key {key} must list its values in an array, got {other}"),
        }
    }
    Ok(())
}

fn check_key(doc: &Value, key: &str) -> Result<()> {
    let mut parts = key.split('.');
    let first = parts.next().unwrap_or_default();
    let mut cur = match doc.get(first) {
        Some(v) => v,
        None if OPTIONAL_KEYS.contains(&first) => return Ok(()),
        None => bail!("unknown config key {key}"),
    };
    for p in parts {
        cur = cur.get(p).ok_or_else(|| anyhow!("unknown config key {key}"))?;
    }
    Ok(())
}

/// `base` with the dotted `key` set to `value`.
pub fn apply(base: &ScenarioConfig, key: &str, value: Value) -> Result<ScenarioConfig> {
    let mut doc = Value::try_from(base).context("serializing base config")?;
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().ok_or_else(|| anyhow!("empty key"))?;
    let mut cur = &mut doc;
    for p in parts {
        cur = cur
            .as_table_mut()
            .and_then(|t| t.get_mut(p))
            .ok_or_else(|| anyhow!("unknown config key {key}"))?;
    }
    let table = cur
        .as_table_mut()
        .ok_or_else(|| anyhow!("{key} does not name a field"))?;
    table.insert(leaf.to_string(), value.clone());
    let cfg: ScenarioConfig = doc.try_into().with_context(|| format!("setting {key} = {value}"))?;
    cfg.validate().with_context(|| format!("setting {key} = {value}"))?;
    Ok(cfg)
}
