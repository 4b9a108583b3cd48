use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, LazyLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of tracked nutrient fields.
pub const FIELD_COUNT: usize = 40;

/// Fields that drive meal planning and feedback.
pub const CORE_FIELDS: [&str; 6] = ["energy", "protein", "carbohydrate", "fat", "fiber", "sodium"];

const STANDARD_SCHEMA: &str = include_str!("../../data/nutrient_schema.tsv");

static STANDARD: LazyLock<Arc<NutrientSchema>> = LazyLock::new(|| {
    Arc::new(NutrientSchema::parse(STANDARD_SCHEMA).expect("bundled nutrient schema is valid"))
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Kcal,
    G,
    Mg,
    Mcg,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Kcal => "kcal",
            Unit::G => "g",
            Unit::Mg => "mg",
            Unit::Mcg => "mcg",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "kcal" => Ok(Unit::Kcal),
            "g" => Ok(Unit::G),
            "mg" => Ok(Unit::Mg),
            "mcg" | "μg" | "ug" => Ok(Unit::Mcg),
            other => Err(Error::config(format!("unknown unit {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NutrientGroup {
    Macronutrient,
    Mineral,
    Vitamin,
}

impl FromStr for NutrientGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "macronutrient" => Ok(NutrientGroup::Macronutrient),
            "mineral" => Ok(NutrientGroup::Mineral),
            "vitamin" => Ok(NutrientGroup::Vitamin),
            other => Err(Error::config(format!("unknown nutrient group {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub unit: Unit,
    pub group: NutrientGroup,
}

/// Named field subsets used for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSet {
    Full,
    Core,
    Micronutrients,
}

/// The ordered list of tracked nutrients. Loaded from a flat text table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NutrientSchema {
    fields: Vec<FieldSpec>,
    index: HashMap<String, usize>,
}

impl NutrientSchema {
    /// The bundled schema shared by every vector built without an explicit schema.
    pub fn standard() -> Arc<NutrientSchema> {
        Arc::clone(&STANDARD)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `name<TAB>unit<TAB>group` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = Vec::with_capacity(FIELD_COUNT);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let parse_err = |e: Error| Error::Parse {
                line: lineno + 1,
                message: e.to_string(),
            };
            fields.push(FieldSpec {
                name: cols[0].to_string(),
                unit: cols[1].parse().map_err(parse_err)?,
                group: cols[2].parse().map_err(parse_err)?,
            });
        }
        Self::from_fields(fields)
    }

    pub fn from_fields(fields: Vec<FieldSpec>) -> Result<Self> {
        if fields.len() != FIELD_COUNT {
            return Err(Error::config(format!(
                "nutrient schema must have exactly {FIELD_COUNT} fields, found {}",
                fields.len()
            )));
        }
        let mut index = HashMap::with_capacity(fields.len());
        for (i, f) in fields.iter().enumerate() {
            if index.insert(f.name.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate nutrient field {:?}", f.name)));
            }
        }
        for core in CORE_FIELDS {
            if !index.contains_key(core) {
                return Err(Error::config(format!("core nutrient field {core:?} missing from schema")));
            }
        }
        Ok(Self { fields, index })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> &FieldSpec {
        &self.fields[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown nutrient field {name:?}")))
    }

    pub fn is_core(&self, i: usize) -> bool {
        CORE_FIELDS.contains(&self.fields[i].name.as_str())
    }

    pub fn core_indices(&self) -> Vec<usize> {
        CORE_FIELDS.iter().map(|n| self.index[*n]).collect()
    }

    /// Indices belonging to a reporting subset. Micronutrients are the
    /// vitamins and minerals outside the core set.
    pub fn subset(&self, set: FieldSet) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| match set {
                FieldSet::Full => true,
                FieldSet::Core => self.is_core(i),
                FieldSet::Micronutrients => {
                    self.fields[i].group != NutrientGroup::Macronutrient && !self.is_core(i)
                }
            })
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("# name\tunit\tgroup\n");
        for f in &self.fields {
            let group = match f.group {
                NutrientGroup::Macronutrient => "macronutrient",
                NutrientGroup::Mineral => "mineral",
                NutrientGroup::Vitamin => "vitamin",
            };
            out.push_str(&format!("{}\t{}\t{}\n", f.name, f.unit, group));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schema_has_forty_unique_fields() {
        let s = NutrientSchema::standard();
        assert_eq!(s.len(), 40);
        for core in CORE_FIELDS {
            assert!(s.index_of(core).is_some(), "{core}");
        }
        assert_eq!(s.field(s.require("energy").unwrap()).unit, Unit::Kcal);
        assert_eq!(s.field(s.require("vitamin_d").unwrap()).unit, Unit::Mcg);
    }

    #[test]
    fn subsets_partition_sensibly() {
        let s = NutrientSchema::standard();
        let core = s.subset(FieldSet::Core);
        let micro = s.subset(FieldSet::Micronutrients);
        assert_eq!(core.len(), 6);
        // 15 minerals + 14 vitamins, minus sodium which is core.
        assert_eq!(micro.len(), 28);
        assert!(core.iter().all(|i| !micro.contains(i)));
    }

    #[test]
    fn table_round_trips() {
        let s = NutrientSchema::standard();
        let again = NutrientSchema::parse(&s.to_table()).unwrap();
        assert_eq!(*s, again);
    }

    #[test]
    fn rejects_wrong_field_count_and_duplicates() {
        assert!(matches!(
            NutrientSchema::parse("energy\tkcal\tmacronutrient\n"),
            Err(Error::Config(_))
        ));
        let mut text = STANDARD_SCHEMA.replace("choline\tmg\tvitamin", "biotin\tmcg\tvitamin");
        assert!(NutrientSchema::parse(&text).is_err());
        text = STANDARD_SCHEMA.replace("energy\tkcal", "energy\tkJ");
        assert!(matches!(NutrientSchema::parse(&text), Err(Error::Parse { line: 2, .. })));
    }
}
