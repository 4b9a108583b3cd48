use std::collections::HashMap;
use std::sync::Arc;

use super::parse::{RawRdaTable, TableKind};
use super::reference::{DriKey, DriReference};
use crate::domain::NutrientSchema;
use crate::error::{Error, Result};

/// Full outer join of the three normalized tables on (category, life stage).
///
/// Every key present in any input yields one row; fields with no source
/// value stay masked. Rows keep first-seen order across minerals, vitamins,
/// macronutrients.
pub fn merge_tables(
    minerals: &RawRdaTable,
    vitamins: &RawRdaTable,
    macros: &RawRdaTable,
    schema: &Arc<NutrientSchema>,
) -> Result<DriReference> {
    let inputs = [
        (TableKind::Minerals, minerals),
        (TableKind::Vitamins, vitamins),
        (TableKind::Macronutrients, macros),
    ];
    for (expected, t) in &inputs {
        if t.kind != *expected {
            return Err(Error::contract(format!(
                "expected a {expected} table, got {}",
                t.kind
            )));
        }
    }

    let mut order: Vec<DriKey> = Vec::new();
    let mut rows: HashMap<DriKey, crate::domain::NutrientVector> = HashMap::new();
    // field index -> table that supplied it, for conflict messages
    let mut provenance: HashMap<(DriKey, usize), TableKind> = HashMap::new();

    for (kind, table) in inputs {
        let field_idx = table
            .columns
            .iter()
            .map(|c| {
                let i = schema.index_of(&c.name).ok_or_else(|| {
                    Error::contract(format!(
                        "{kind} table column {:?} is not a schema field; normalize units first",
                        c.name
                    ))
                })?;
                let want = schema.field(i).unit.as_str();
                if c.unit.as_deref() != Some(want) {
                    return Err(Error::contract(format!(
                        "{kind} table column {} is in {:?}, schema unit is {want}",
                        c.name, c.unit
                    )));
                }
                Ok(i)
            })
            .collect::<Result<Vec<_>>>()?;

        for row in &table.rows {
            let key = DriKey {
                category: row.category,
                life_stage: row.life_stage.clone(),
            };
            let merged = rows.entry(key.clone()).or_insert_with(|| {
                order.push(key.clone());
                crate::domain::NutrientVector::empty(schema)
            });
            for (&i, value) in field_idx.iter().zip(&row.values) {
                let Some(value) = *value else { continue };
                match merged.get(i) {
                    Some(existing) if existing != value => {
                        let first = provenance[&(key.clone(), i)];
                        return Err(Error::integrity(format!(
                            "conflicting values for ({}, {}).{}: {existing} from {first}, {value} from {kind}",
                            key.category,
                            key.life_stage,
                            schema.field(i).name
                        )));
                    }
                    Some(_) => {}
                    None => {
                        merged.set(i, value)?;
                        provenance.insert((key.clone(), i), kind);
                    }
                }
            }
        }
    }

    let rows = order
        .into_iter()
        .map(|k| {
            let v = rows.remove(&k).expect("every ordered key has a row");
            (k, v)
        })
        .collect();
    DriReference::from_rows(Arc::clone(schema), rows)
}
