use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::DriCategory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Minerals,
    Vitamins,
    Macronutrients,
}

impl fmt::Display for TableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TableKind::Minerals => "minerals",
            TableKind::Vitamins => "vitamins",
            TableKind::Macronutrients => "macronutrients",
        })
    }
}

impl FromStr for TableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "minerals" | "elements" => Ok(TableKind::Minerals),
            "vitamins" => Ok(TableKind::Vitamins),
            "macronutrients" | "macros" => Ok(TableKind::Macronutrients),
            other => Err(Error::config(format!("unknown table kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RdaColumn {
    pub name: String,
    /// Unit declared in the header, e.g. `mg` for `Calcium (mg/d)`.
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdaRow {
    pub category: DriCategory,
    pub life_stage: String,
    pub values: Vec<Option<f64>>,
}

impl RdaRow {
    pub fn key(&self) -> (DriCategory, &str) {
        (self.category, &self.life_stage)
    }
}

/// One reference table after cell cleaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRdaTable {
    pub kind: TableKind,
    pub columns: Vec<RdaColumn>,
    pub rows: Vec<RdaRow>,
}

const PLACEHOLDERS: [&str; 8] = ["ND", "NA", "N/A", "", "-", "—", "–", "n/a"];

fn is_dash(c: char) -> bool {
    matches!(
        c,
        '-' | '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}' | '\u{2212}'
    )
}

/// Canonical life-stage label: unicode dashes become `-`, whitespace runs
/// collapse, and no spaces remain around dashes or after `>`/`≥`.
pub fn canonical_life_stage(label: &str) -> String {
    let dashed: String = label.chars().map(|c| if is_dash(c) { '-' } else { c }).collect();
    let collapsed = dashed.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .replace(" -", "-")
        .replace("- ", "-")
        .replace("> ", ">")
        .replace("≥ ", "≥")
}

fn strip_enclosed(s: &str, open: char, close: char) -> String {
    let mut out = String::with_capacity(s.len());
    let mut depth = 0usize;
    for c in s.chars() {
        if c == open {
            depth += 1;
        } else if c == close && depth > 0 {
            depth -= 1;
        } else if depth == 0 {
            out.push(c);
        }
    }
    out
}

/// Cleans one numeric cell. `Ok(None)` is a missing value; `Err` carries a
/// description of an unparseable cell.
pub fn clean_numeric(cell: &str) -> std::result::Result<Option<f64>, String> {
    let trimmed = cell.trim();
    if PLACEHOLDERS.contains(&trimmed) {
        return Ok(None);
    }
    // Parenthesised or bracketed annotations such as "(range 0.5–1.0)" or "[b]".
    let mut s = strip_enclosed(trimmed, '(', ')');
    s = strip_enclosed(&s, '[', ']');
    let mut s: String = s
        .chars()
        .filter(|c| !matches!(c, '*' | '†' | '‡' | '§' | ',' | '\u{a0}') && !c.is_whitespace())
        .collect();
    if PLACEHOLDERS.contains(&s.as_str()) {
        return Ok(None);
    }
    // Trailing footnote letters, e.g. "15b" or "400a,b".
    while s.len() > 1 && s.ends_with(|c: char| c.is_ascii_alphabetic()) {
        let before = s[..s.len() - 1].chars().last().unwrap_or(' ');
        if before.is_ascii_digit() || before.is_ascii_alphabetic() {
            s.pop();
        } else {
            break;
        }
    }
    if PLACEHOLDERS.contains(&s.as_str()) {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
        Ok(v) => Err(format!("cell {cell:?} is not a non-negative amount ({v})")),
        Err(_) => Err(format!("cell {cell:?} is not numeric")),
    }
}

/// Splits `Calcium (mg/d)` into (`Calcium`, `mg`). Footnote markers after
/// the closing parenthesis are dropped.
pub fn split_header(header: &str) -> RdaColumn {
    let h = header.trim();
    if let (Some(open), Some(close)) = (h.rfind('('), h.rfind(')')) {
        if open < close {
            let name = h[..open].trim().to_string();
            let inner = &h[open + 1..close];
            let unit = inner.split('/').next().unwrap_or("").trim();
            return RdaColumn {
                name,
                unit: (!unit.is_empty()).then(|| unit.to_string()),
            };
        }
    }
    RdaColumn {
        name: h.trim_end_matches(|c: char| c == '*').to_string(),
        unit: None,
    }
}

/// Parses one comma-separated reference table. The first two columns are
/// the population category and the life-stage label.
pub fn parse_rda_table(raw: &[u8], kind: TableKind) -> Result<RawRdaTable> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Parse {
        line: 1 + raw[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count(),
        message: format!("{kind} table is not valid UTF-8"),
    })?;
    let text = text.trim_start_matches('\u{feff}');
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("unreadable header: {e}"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: format!("{kind} table is empty"),
            })
        }
    };
    let header: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 3
        || !header[0].eq_ignore_ascii_case("category")
        || !canonical_life_stage(&header[1]).eq_ignore_ascii_case("life stage")
    {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "unreadable header: expected `Category,Life Stage,<nutrients...>`, got {header:?}"
            ),
        });
    }
    let columns: Vec<RdaColumn> = header[2..].iter().map(|h| split_header(h)).collect();
    if let Some(c) = columns.iter().find(|c| c.name.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("unreadable header: empty nutrient column name {c:?}"),
        });
    }

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for record in records {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("row has {} cells, header has {}", record.len(), header.len()),
            });
        }
        let category: DriCategory = record[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("unknown category {:?}", &record[0]),
        })?;
        let life_stage = canonical_life_stage(&record[1]);
        if life_stage.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty life-stage label".into(),
            });
        }
        if !seen.insert((category, life_stage.clone())) {
            return Err(Error::integrity(format!(
                "{kind} table line {line}: duplicate key ({category}, {life_stage:?})"
            )));
        }
        let values = record
            .iter()
            .skip(2)
            .map(|cell| clean_numeric(cell).map_err(|message| Error::Parse { line, message }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(RdaRow {
            category,
            life_stage,
            values,
        });
    }

    Ok(RawRdaTable {
        kind,
        columns,
        rows,
    })
}
