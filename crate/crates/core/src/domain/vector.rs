use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use super::schema::NutrientSchema;
use crate::error::{Error, Result};

/// Per-field nutrient amounts in schema units, with a presence mask.
///
/// Masked-out entries carry no information: arithmetic and metrics skip
/// them, and their stored value is always zero. Serialized as a map of the
/// present fields only, in schema order.
#[derive(Clone)]
pub struct NutrientVector {
    schema: Arc<NutrientSchema>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl NutrientVector {
    /// All fields masked out.
    pub fn empty(schema: &Arc<NutrientSchema>) -> Self {
        Self {
            schema: Arc::clone(schema),
            values: vec![0.0; schema.len()],
            mask: vec![false; schema.len()],
        }
    }

    /// All fields present with value zero.
    pub fn zeros(schema: &Arc<NutrientSchema>) -> Self {
        Self {
            schema: Arc::clone(schema),
            values: vec![0.0; schema.len()],
            mask: vec![true; schema.len()],
        }
    }

    /// Same mask as `like`, all present values zero.
    pub fn zeros_like(like: &NutrientVector) -> Self {
        Self {
            schema: Arc::clone(&like.schema),
            values: vec![0.0; like.len()],
            mask: like.mask.clone(),
        }
    }

    pub fn standard_empty() -> Self {
        Self::empty(&NutrientSchema::standard())
    }

    pub fn from_parts(schema: &Arc<NutrientSchema>, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != schema.len() || mask.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "expected {} fields, got {} values / {} mask bits",
                schema.len(),
                values.len(),
                mask.len()
            )));
        }
        let mut v = Self::empty(schema);
        for i in 0..schema.len() {
            if mask[i] {
                v.set(i, values[i])?;
            }
        }
        Ok(v)
    }

    /// Builds a vector from `name -> value`; unnamed fields are masked.
    pub fn from_map<'a, I>(schema: &Arc<NutrientSchema>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut v = Self::empty(schema);
        for (name, value) in entries {
            let i = schema.require(name)?;
            v.set(i, value)?;
        }
        Ok(v)
    }

    pub fn schema(&self) -> &Arc<NutrientSchema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.mask[i].then_some(self.values[i])
    }

    pub fn get_named(&self, name: &str) -> Option<f64> {
        self.schema.index_of(name).and_then(|i| self.get(i))
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Raw value storage. Masked entries read as zero.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn present_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Sets a present, non-negative, finite value.
    pub fn set(&mut self, i: usize, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::contract(format!(
                "nutrient {} must be a finite non-negative amount, got {value}",
                self.schema.field(i).name
            )));
        }
        self.set_signed(i, value);
        Ok(())
    }

    /// Sets a present value without the non-negativity check. Used for
    /// signed quantities such as the remaining budget.
    pub fn set_signed(&mut self, i: usize, value: f64) {
        self.values[i] = value;
        self.mask[i] = true;
    }

    pub fn set_named(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self.schema.require(name)?;
        self.set(i, value)
    }

    pub fn clear(&mut self, i: usize) {
        self.values[i] = 0.0;
        self.mask[i] = false;
    }

    pub fn iter_present(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len()).filter_map(move |i| self.get(i).map(|v| (i, v)))
    }

    fn check_schema(&self, other: &NutrientVector) -> Result<()> {
        if Arc::ptr_eq(&self.schema, &other.schema) || *self.schema == *other.schema {
            Ok(())
        } else {
            Err(Error::SchemaMismatch(
                "nutrient vectors were built against different schemas".into(),
            ))
        }
    }

    /// Field-wise sum; a field is present when present in either operand.
    pub fn add(&self, other: &NutrientVector) -> Result<NutrientVector> {
        self.check_schema(other)?;
        let mut out = NutrientVector::empty(&self.schema);
        for i in 0..self.len() {
            match (self.get(i), other.get(i)) {
                (None, None) => {}
                (a, b) => out.set_signed(i, a.unwrap_or(0.0) + b.unwrap_or(0.0)),
            }
        }
        Ok(out)
    }

    /// Field-wise difference following `self`'s mask; masked subtrahend
    /// entries count as zero. Results may be negative.
    pub fn sub(&self, other: &NutrientVector) -> Result<NutrientVector> {
        self.check_schema(other)?;
        let mut out = NutrientVector::empty(&self.schema);
        for (i, a) in self.iter_present() {
            out.set_signed(i, a - other.get(i).unwrap_or(0.0));
        }
        Ok(out)
    }

    /// Present values multiplied by a non-negative factor.
    pub fn scale(&self, factor: f64) -> NutrientVector {
        let mut out = NutrientVector::empty(&self.schema);
        for (i, v) in self.iter_present() {
            out.set_signed(i, v * factor);
        }
        out
    }

    /// Negative present values clamped to zero.
    pub fn clamp_non_negative(&self) -> NutrientVector {
        let mut out = self.clone();
        for i in 0..out.len() {
            if out.mask[i] && out.values[i] < 0.0 {
                out.values[i] = 0.0;
            }
        }
        out
    }

    /// Present entries as an ordered name map.
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.iter_present()
            .map(|(i, v)| (self.schema.field(i).name.clone(), v))
            .collect()
    }
}

impl PartialEq for NutrientVector {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.schema, &other.schema) || *self.schema == *other.schema)
            && self.mask == other.mask
            && self.values == other.values
    }
}

impl fmt::Debug for NutrientVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (i, v) in self.iter_present() {
            m.entry(&self.schema.field(i).name, &v);
        }
        m.finish()
    }
}

impl Serialize for NutrientVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.present_count()))?;
        for (i, v) in self.iter_present() {
            map.serialize_entry(&self.schema.field(i).name, &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for NutrientVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let entries: BTreeMap<String, f64> = BTreeMap::deserialize(deserializer)?;
        let schema = NutrientSchema::standard();
        let mut v = NutrientVector::empty(&schema);
        for (name, value) in entries {
            let i = schema.require(&name).map_err(de::Error::custom)?;
            if !value.is_finite() {
                return Err(de::Error::custom(format!("{name}: non-finite value")));
            }
            v.set_signed(i, value);
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> Arc<NutrientSchema> {
        NutrientSchema::standard()
    }

    fn nv(entries: &[(&str, f64)]) -> NutrientVector {
        NutrientVector::from_map(&schema(), entries.iter().copied()).unwrap()
    }

    #[test]
    fn add_sums_present_fields() {
        let out = nv(&[("energy", 650.0)]).add(&nv(&[("energy", 700.0)])).unwrap();
        assert_eq!(out, nv(&[("energy", 1350.0)]));
    }

    #[test]
    fn add_with_all_masked_is_identity() {
        let a = nv(&[("energy", 650.0), ("iron", 3.0)]);
        assert_eq!(a.add(&NutrientVector::empty(&schema())).unwrap(), a);
    }

    #[test]
    fn add_takes_mask_union() {
        let a = nv(&[("protein", 20.0)]);
        let b = nv(&[("protein", 5.0), ("iron", 8.0)]);
        assert_eq!(a.add(&b).unwrap(), nv(&[("protein", 25.0), ("iron", 8.0)]));
    }

    #[test]
    fn sub_is_signed_and_follows_left_mask() {
        assert_eq!(
            nv(&[("energy", 2000.0)]).sub(&nv(&[("energy", 650.0)])).unwrap(),
            nv(&[("energy", 1350.0)])
        );
        let neg = nv(&[("energy", 500.0)]).sub(&nv(&[("energy", 700.0)])).unwrap();
        assert_eq!(neg.get_named("energy"), Some(-200.0));
        let only_right = nv(&[("energy", 500.0)]).sub(&nv(&[("iron", 7.0)])).unwrap();
        assert_eq!(only_right.get_named("iron"), None);
        assert_eq!(only_right.get_named("energy"), Some(500.0));
    }

    #[test]
    fn sub_self_cancels() {
        let a = nv(&[("energy", 500.0), ("zinc", 3.5)]);
        let z = a.sub(&a).unwrap();
        assert_eq!(z, NutrientVector::zeros_like(&a));
    }

    #[test]
    fn rejects_negative_and_unknown_fields() {
        let s = schema();
        assert!(NutrientVector::from_map(&s, [("energy", -1.0)]).is_err());
        assert!(matches!(
            NutrientVector::from_map(&s, [("moonstone", 1.0)]),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn mismatched_schemas_are_rejected() {
        let other_text = schema().to_table().replace("choline\tmg", "choline\tmcg");
        let other = Arc::new(NutrientSchema::parse(&other_text).unwrap());
        let a = NutrientVector::zeros(&schema());
        let b = NutrientVector::zeros(&other);
        assert!(matches!(a.add(&b), Err(Error::SchemaMismatch(_))));
        assert!(matches!(a.sub(&b), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn serializes_present_fields_only() {
        let a = nv(&[("protein", 25.0), ("energy", 100.0)]);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"{"energy":100.0,"protein":25.0}"#);
        let back: NutrientVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    fn arb_vector() -> impl Strategy<Value = NutrientVector> {
        proptest::collection::vec(proptest::option::of(0u32..100_000), 40).prop_map(|cells| {
            let s = NutrientSchema::standard();
            let mut v = NutrientVector::empty(&s);
            for (i, c) in cells.into_iter().enumerate() {
                if let Some(c) = c {
                    // quarter-unit grid keeps float sums exact
                    v.set(i, c as f64 * 0.25).unwrap();
                }
            }
            v
        })
    }

    fn arb_full_vector() -> impl Strategy<Value = NutrientVector> {
        proptest::collection::vec(0u32..100_000, 40).prop_map(|cells| {
            let s = NutrientSchema::standard();
            let values = cells.into_iter().map(|c| c as f64 * 0.25).collect();
            NutrientVector::from_parts(&s, values, vec![true; 40]).unwrap()
        })
    }

    proptest! {
        #[test]
        fn add_is_commutative(a in arb_vector(), b in arb_vector()) {
            prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
        }

        #[test]
        fn add_is_associative(a in arb_vector(), b in arb_vector(), c in arb_vector()) {
            let left = a.add(&b).unwrap().add(&c).unwrap();
            let right = a.add(&b.add(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn sub_undoes_add_on_full_masks(a in arb_full_vector(), b in arb_full_vector()) {
            prop_assert_eq!(a.add(&b).unwrap().sub(&b).unwrap(), a);
        }
    }
}
