use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::agents::{vision_analyze, AgentMessage, VisionOutcome};
use crate::backends::{MockVisionFixture, ModelBackend};
use crate::domain::{FieldSet, NutrientSchema, NutrientVector, Unit};
use crate::error::{Error, Result};

/// One evaluated meal: model estimate against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub meal: String,
    pub predicted: NutrientVector,
    pub truth: NutrientVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    pub name: String,
    pub unit: Unit,
    /// Meals with a prediction for this field.
    pub n: usize,
    /// `None` when no meal has a prediction.
    pub mae: Option<f64>,
    pub coverage: f64,
}

/// Table row for one field set: mean MAE per unit over defined fields, and
/// mean coverage. Units with no defined field in the set are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRollup {
    pub set: FieldSet,
    pub mae_by_unit: BTreeMap<String, f64>,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meals: usize,
    pub fields: Vec<FieldMetrics>,
    pub sets: Vec<SetRollup>,
}

impl MetricsReport {
    pub fn field(&self, name: &str) -> Option<&FieldMetrics> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn set(&self, set: FieldSet) -> Option<&SetRollup> {
        self.sets.iter().find(|r| r.set == set)
    }
}

fn check(records: &[PredictionRecord]) -> Result<&Arc<NutrientSchema>> {
    let first = records.first().ok_or_else(|| Error::contract("no prediction records"))?;
    let schema = first.truth.schema();
    for r in records {
        for v in [&r.predicted, &r.truth] {
            if v.schema() != schema {
                return Err(Error::SchemaMismatch(format!("record {} uses a different schema", r.meal)));
            }
        }
    }
    Ok(schema)
}

/// Fraction of meals with a prediction, per schema field.
pub fn compute_coverage(records: &[PredictionRecord]) -> Result<Vec<f64>> {
    let schema = check(records)?;
    Ok((0..schema.len())
        .map(|j| {
            let hits = records.iter().filter(|r| r.predicted.is_present(j)).count();
            hits as f64 / records.len() as f64
        })
        .collect())
}

/// Per-field MAE over predicted values only, with coverage and roll-ups.
///
/// A field with a prediction but no truth value is a contract error.
pub fn compute_mae(records: &[PredictionRecord]) -> Result<MetricsReport> {
    let schema = check(records)?;
    let coverage = compute_coverage(records)?;
    let mut fields = Vec::with_capacity(schema.len());
    for (j, spec) in schema.fields().iter().enumerate() {
        let mut n = 0usize;
        let mut sum = 0.0;
        for r in records {
            let Some(p) = r.predicted.get(j) else { continue };
            let y = r
                .truth
                .get(j)
                .ok_or_else(|| Error::contract(format!("meal {} has a {} prediction but no truth", r.meal, spec.name)))?;
            sum += (p - y).abs();
            n += 1;
        }
        fields.push(FieldMetrics {
            name: spec.name.clone(),
            unit: spec.unit,
            n,
            mae: (n > 0).then(|| sum / n as f64),
            coverage: coverage[j],
        });
    }
    let sets = [FieldSet::Full, FieldSet::Core, FieldSet::Micronutrients]
        .into_iter()
        .map(|set| rollup(schema, &fields, set))
        .collect();
    Ok(MetricsReport {
        meals: records.len(),
        fields,
        sets,
    })
}

fn rollup(schema: &NutrientSchema, fields: &[FieldMetrics], set: FieldSet) -> SetRollup {
    let idx = schema.subset(set);
    let mut by_unit: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for &j in &idx {
        if let Some(m) = fields[j].mae {
            let e = by_unit.entry(fields[j].unit.as_str().to_string()).or_default();
            e.0 += m;
            e.1 += 1;
        }
    }
    let coverage = if idx.is_empty() {
        0.0
    } else {
        idx.iter().map(|&j| fields[j].coverage).sum::<f64>() / idx.len() as f64
    };
    SetRollup {
        set,
        mae_by_unit: by_unit.into_iter().map(|(u, (s, c))| (u, s / c as f64)).collect(),
        coverage,
    }
}

/// Runs every fixture image through the vision agent and pairs the
/// estimate with the fixture truth. A clarification counts as a meal with
/// no predictions.
pub fn fixture_predictions(backend: &dyn ModelBackend, fixture: &MockVisionFixture) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for key in fixture.image_keys() {
        let truth = fixture.image(key).expect("listed key resolves").1.nutrients.clone();
        let msg = AgentMessage {
            user_id: "eval".into(),
            date: NaiveDate::from_ymd_opt(2025, 1, 1).expect("valid date"),
            mealtime: None,
            meal_id: Some(key.to_string()),
            text: None,
            image_ref: Some(key.to_string()),
            received_at: Utc::now(),
        };
        let predicted = match vision_analyze(&msg, backend, 0.0, None)? {
            VisionOutcome::Analysis { analysis, .. } => analysis.nutrients,
            VisionOutcome::Clarification { .. } => NutrientVector::empty(truth.schema()),
        };
        out.push(PredictionRecord {
            meal: key.to_string(),
            predicted,
            truth,
        });
    }
    Ok(out)
}
