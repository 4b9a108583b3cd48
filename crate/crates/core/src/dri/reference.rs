use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::{Arc, LazyLock};

use serde::{Deserialize, Serialize};

use super::parse::{canonical_life_stage, clean_numeric, parse_rda_table, TableKind};
use super::units::{normalize_units, CanonicalUnitsTable};
use super::merge::merge_tables;
use super::sources::{MACRONUTRIENTS_CSV, MINERALS_CSV, VITAMINS_CSV};
use crate::domain::{DriCategory, NutrientSchema, NutrientVector, Sex};
use crate::error::{Error, Result};


static STANDARD: LazyLock<DriReference> = LazyLock::new(|| {
    DriReference::from_sources(
        MINERALS_CSV.as_bytes(),
        VITAMINS_CSV.as_bytes(),
        MACRONUTRIENTS_CSV.as_bytes(),
        &CanonicalUnitsTable::standard().expect("bundled units table is valid"),
    )
    .expect("bundled reference tables merge cleanly")
});

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DriKey {
    pub category: DriCategory,
    pub life_stage: String,
}

impl DriKey {
    pub fn new(category: DriCategory, life_stage: &str) -> Self {
        Self {
            category,
            life_stage: canonical_life_stage(life_stage),
        }
    }
}

/// Merged reference intakes: one schema-complete row per (category, life stage).
#[derive(Debug, Clone, PartialEq)]
pub struct DriReference {
    schema: Arc<NutrientSchema>,
    rows: Vec<(DriKey, NutrientVector)>,
    index: HashMap<DriKey, usize>,
}

impl DriReference {
    /// Reference built from the bundled tables and units configuration.
    pub fn standard() -> &'static DriReference {
        &STANDARD
    }

    pub(crate) fn from_rows(schema: Arc<NutrientSchema>, rows: Vec<(DriKey, NutrientVector)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, (k, v)) in rows.iter().enumerate() {
            if v.len() != schema.len() {
                return Err(Error::SchemaMismatch(format!("row {k:?} is not schema-complete")));
            }
            if index.insert(k.clone(), i).is_some() {
                return Err(Error::integrity(format!(
                    "duplicate reference key ({}, {})",
                    k.category, k.life_stage
                )));
            }
        }
        Ok(Self { schema, rows, index })
    }

    /// parse -> normalize -> merge over the three source tables.
    pub fn from_sources(
        minerals: &[u8],
        vitamins: &[u8],
        macros: &[u8],
        units: &CanonicalUnitsTable,
    ) -> Result<Self> {
        let m = normalize_units(&parse_rda_table(minerals, TableKind::Minerals)?, units)?;
        let v = normalize_units(&parse_rda_table(vitamins, TableKind::Vitamins)?, units)?;
        let a = normalize_units(&parse_rda_table(macros, TableKind::Macronutrients)?, units)?;
        merge_tables(&m, &v, &a, &NutrientSchema::standard())
    }

    pub fn from_paths(minerals: &Path, vitamins: &Path, macros: &Path, units: &CanonicalUnitsTable) -> Result<Self> {
        let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
        Self::from_sources(&read(minerals)?, &read(vitamins)?, &read(macros)?, units)
    }

    pub fn schema(&self) -> &Arc<NutrientSchema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&DriKey, &NutrientVector)> {
        self.rows.iter().map(|(k, v)| (k, v))
    }

    pub fn get(&self, key: &DriKey) -> Option<&NutrientVector> {
        self.index.get(key).map(|&i| &self.rows[i].1)
    }

    /// Row for the adult category matching `sex`.
    pub fn lookup(&self, sex: Sex, life_stage: &str) -> Result<&NutrientVector> {
        self.lookup_category(DriCategory::for_sex(sex), life_stage)
    }

    /// Exact canonical match first; otherwise a unique row whose label
    /// extends the request (e.g. `19-30` -> `19-30 y`).
    pub fn lookup_category(&self, category: DriCategory, life_stage: &str) -> Result<&NutrientVector> {
        let key = DriKey::new(category, life_stage);
        if let Some(v) = self.get(&key) {
            return Ok(v);
        }
        if key.life_stage.is_empty() {
            return Err(Error::Lookup(format!("empty life-stage label for {category}")));
        }
        let prefix = format!("{} ", key.life_stage);
        let candidates: Vec<&(DriKey, NutrientVector)> = self
            .rows
            .iter()
            .filter(|(k, _)| k.category == category && k.life_stage.starts_with(&prefix))
            .collect();
        match candidates.as_slice() {
            [(_, v)] => Ok(v),
            [] => Err(Error::Lookup(format!(
                "no reference row for ({category}, {:?})",
                key.life_stage
            ))),
            many => Err(Error::Lookup(format!(
                "ambiguous life stage {:?} for {category}: matches {}",
                key.life_stage,
                many.iter()
                    .map(|(k, _)| k.life_stage.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }

    /// Serializes as CSV: `category,life_stage,<fields in schema order>`;
    /// missing values are empty cells. Deterministic for a given reference.
    pub fn to_table_text(&self) -> String {
        let mut out = String::from("category,life_stage");
        for f in self.schema.fields() {
            out.push(',');
            out.push_str(&f.name);
        }
        out.push('\n');
        for (k, v) in &self.rows {
            let _ = write!(out, "{},{}", k.category, k.life_stage);
            for i in 0..v.len() {
                out.push(',');
                if let Some(x) = v.get(i) {
                    let _ = write!(out, "{x}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Reads the merged format written by [`DriReference::to_table_text`].
    pub fn from_table_text(text: &str) -> Result<Self> {
        let schema = NutrientSchema::standard();
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "merged reference is empty".into(),
        })?;
        let cols: Vec<&str> = header.split(',').collect();
        let expected: Vec<&str> = ["category", "life_stage"]
            .into_iter()
            .chain(schema.fields().iter().map(|f| f.name.as_str()))
            .collect();
        if cols != expected {
            return Err(Error::Parse {
                line: 1,
                message: "merged reference header does not match the nutrient schema".into(),
            });
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let err = |message: String| Error::Parse { line: i + 1, message };
            if cells.len() != expected.len() {
                return Err(err(format!("expected {} cells, found {}", expected.len(), cells.len())));
            }
            let category: DriCategory = cells[0].parse().map_err(|e: Error| err(e.to_string()))?;
            let mut v = NutrientVector::empty(&schema);
            for (j, cell) in cells[2..].iter().enumerate() {
                if let Some(x) = clean_numeric(cell).map_err(err)? {
                    v.set(j, x)?;
                }
            }
            rows.push((DriKey::new(category, cells[1]), v));
        }
        Self::from_rows(schema, rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::store::fsutil::atomic_write(path, self.to_table_text().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_reference_has_all_published_rows() {
        let r = DriReference::standard();
        assert_eq!(r.len(), 22);
        for (_, v) in r.rows() {
            assert_eq!(v.len(), 40);
        }
    }

    #[test]
    fn female_protein_matches_fixture() {
        let r = DriReference::standard();
        let row = r.lookup(Sex::Female, "19-30 y").unwrap();
        assert_eq!(row.get_named("protein"), Some(46.0));
        assert_eq!(row.get_named("iron"), Some(18.0));
        // 2.3 g/d chloride stored in mg
        assert_eq!(row.get_named("chloride"), Some(2300.0));
        // 2.7 L/d water stored in g
        assert_eq!(row.get_named("water"), Some(2700.0));
        // no published value for adult total fat
        assert_eq!(row.get_named("fat"), None);
    }

    #[test]
    fn sexes_differ() {
        let r = DriReference::standard();
        let m = r.lookup(Sex::Male, "19-30 y").unwrap();
        let f = r.lookup(Sex::Female, "19–30 y").unwrap();
        assert_ne!(m, f);
        assert_eq!(m.get_named("protein"), Some(56.0));
    }

    #[test]
    fn lookup_errors() {
        let r = DriReference::standard();
        assert!(matches!(r.lookup(Sex::Female, "unknown"), Err(Error::Lookup(_))));
        assert!(r.lookup(Sex::Female, "19-30").is_ok());
        let mut rows: Vec<_> = r.rows().map(|(k, v)| (k.clone(), v.clone())).collect();
        let v = rows[0].1.clone();
        rows.push((DriKey::new(DriCategory::Females, "19-30 mo"), v));
        let ambiguous = DriReference::from_rows(r.schema().clone(), rows).unwrap();
        match ambiguous.lookup(Sex::Female, "19-30") {
            Err(Error::Lookup(msg)) => assert!(msg.contains("ambiguous"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_text_round_trips() {
        let r = DriReference::standard();
        let text = r.to_table_text();
        let back = DriReference::from_table_text(&text).unwrap();
        assert_eq!(&back, r);
        assert_eq!(back.to_table_text(), text);
    }
}
