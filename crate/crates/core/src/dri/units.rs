use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use super::parse::{RawRdaTable, RdaColumn};
use crate::domain::{NutrientSchema, Unit};
use crate::error::{Error, Result};

const STANDARD_UNITS: &str = include_str!("../../data/canonical_units.tsv");

/// Conversions are restricted to powers of 1000 (kilo/milli/micro steps).
const ALLOWED_FACTORS: [f64; 5] = [1e-6, 1e-3, 1.0, 1e3, 1e6];

/// Results are rounded to this many decimal places in the schema unit, so a
/// conversion such as 2.3 g -> 2300 mg lands on the exact decimal.
const ROUND_DECIMALS: i32 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct UnitEntry {
    pub field: String,
    pub schema_unit: Unit,
    pub source_column: String,
    /// (source unit, factor into the schema unit)
    pub accepted: Vec<(String, f64)>,
}

impl UnitEntry {
    pub fn factor_for(&self, unit: &str) -> Option<f64> {
        self.accepted
            .iter()
            .find(|(u, _)| u == unit)
            .map(|(_, f)| *f)
    }
}

/// Maps source table columns onto schema fields and their units.
#[derive(Debug, Clone)]
pub struct CanonicalUnitsTable {
    entries: Vec<UnitEntry>,
    by_column: HashMap<String, usize>,
}

fn column_key(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl CanonicalUnitsTable {
    pub fn standard() -> Result<Self> {
        Self::parse(STANDARD_UNITS, &NutrientSchema::standard())
    }

    pub fn from_file(path: &Path, schema: &Arc<NutrientSchema>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, schema)
    }

    /// Parses `field<TAB>schema_unit<TAB>source column<TAB>unit=factor,...`.
    pub fn parse(text: &str, schema: &Arc<NutrientSchema>) -> Result<Self> {
        let mut entries = Vec::new();
        let mut by_column = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(err(format!("expected 4 tab-separated columns, found {}", cols.len())));
            }
            let field_idx = schema
                .index_of(cols[0])
                .ok_or_else(|| err(format!("field {:?} is not in the nutrient schema", cols[0])))?;
            let schema_unit: Unit = cols[1].parse().map_err(|e: Error| err(e.to_string()))?;
            if schema.field(field_idx).unit != schema_unit {
                return Err(err(format!(
                    "field {} has schema unit {}, table says {}",
                    cols[0],
                    schema.field(field_idx).unit,
                    schema_unit
                )));
            }
            let mut accepted = Vec::new();
            for part in cols[3].split(',') {
                let (unit, factor) = part
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected unit=factor, got {part:?}")))?;
                let factor: f64 = factor
                    .trim()
                    .parse()
                    .map_err(|_| err(format!("bad factor in {part:?}")))?;
                if !ALLOWED_FACTORS.iter().any(|f| (f - factor).abs() <= f * 1e-12) {
                    return Err(err(format!(
                        "factor {factor} for {} is not a power of 1000",
                        cols[0]
                    )));
                }
                accepted.push((unit.trim().to_string(), factor));
            }
            if by_column
                .insert(column_key(cols[2]), entries.len())
                .is_some()
            {
                return Err(err(format!("source column {:?} mapped twice", cols[2])));
            }
            entries.push(UnitEntry {
                field: cols[0].to_string(),
                schema_unit,
                source_column: cols[2].to_string(),
                accepted,
            });
        }
        Ok(Self { entries, by_column })
    }

    pub fn entries(&self) -> &[UnitEntry] {
        &self.entries
    }

    pub fn entry_for_column(&self, column: &str) -> Option<&UnitEntry> {
        self.by_column
            .get(&column_key(column))
            .map(|&i| &self.entries[i])
    }
}

pub(crate) fn convert(value: f64, factor: f64) -> f64 {
    let scale = 10f64.powi(ROUND_DECIMALS);
    (value * factor * scale).round() / scale
}

/// Renames every column to its schema field and rescales values into the
/// schema unit. Columns missing from the units table are a configuration
/// error listing all of them.
pub fn normalize_units(t: &RawRdaTable, units: &CanonicalUnitsTable) -> Result<RawRdaTable> {
    let unknown: Vec<&str> = t
        .columns
        .iter()
        .filter(|c| units.entry_for_column(&c.name).is_none())
        .map(|c| c.name.as_str())
        .collect();
    if !unknown.is_empty() {
        return Err(Error::config(format!(
            "{} table: columns not in the canonical units table: {}",
            t.kind,
            unknown.join(", ")
        )));
    }

    let mut factors = Vec::with_capacity(t.columns.len());
    let mut columns = Vec::with_capacity(t.columns.len());
    for c in &t.columns {
        let entry = units.entry_for_column(&c.name).expect("checked above");
        let unit = c.unit.as_deref().ok_or_else(|| {
            Error::config(format!("{} table: column {:?} declares no unit", t.kind, c.name))
        })?;
        let factor = entry.factor_for(unit).ok_or_else(|| {
            Error::config(format!(
                "{} table: unit {unit:?} for column {:?} is not accepted for {}",
                t.kind, c.name, entry.field
            ))
        })?;
        factors.push(factor);
        columns.push(RdaColumn {
            name: entry.field.clone(),
            unit: Some(entry.schema_unit.as_str().to_string()),
        });
    }

    let rows = t
        .rows
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for (v, f) in r.values.iter_mut().zip(&factors) {
                *v = v.map(|x| convert(x, *f));
            }
            r
        })
        .collect();

    Ok(RawRdaTable {
        kind: t.kind,
        columns,
        rows,
    })
}
