use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dri::DriReference;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

/// Population category of a reference-table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriCategory {
    Infants,
    Children,
    Males,
    Females,
    Pregnancy,
    Lactation,
}

impl DriCategory {
    pub const ALL: [DriCategory; 6] = [
        DriCategory::Infants,
        DriCategory::Children,
        DriCategory::Males,
        DriCategory::Females,
        DriCategory::Pregnancy,
        DriCategory::Lactation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DriCategory::Infants => "infants",
            DriCategory::Children => "children",
            DriCategory::Males => "males",
            DriCategory::Females => "females",
            DriCategory::Pregnancy => "pregnancy",
            DriCategory::Lactation => "lactation",
        }
    }

    pub fn for_sex(sex: Sex) -> Self {
        match sex {
            Sex::Male => DriCategory::Males,
            Sex::Female => DriCategory::Females,
        }
    }
}

impl fmt::Display for DriCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DriCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        DriCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == lower)
            .ok_or_else(|| Error::Lookup(format!("unknown reference category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MealTime {
    Breakfast,
    Lunch,
    Dinner,
    Snack,
}

impl MealTime {
    pub fn as_str(self) -> &'static str {
        match self {
            MealTime::Breakfast => "breakfast",
            MealTime::Lunch => "lunch",
            MealTime::Dinner => "dinner",
            MealTime::Snack => "snack",
        }
    }
}

impl fmt::Display for MealTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MealTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "breakfast" => Ok(MealTime::Breakfast),
            "lunch" => Ok(MealTime::Lunch),
            "dinner" => Ok(MealTime::Dinner),
            "snack" => Ok(MealTime::Snack),
            other => Err(Error::contract(format!("unknown mealtime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MealHabit {
    pub mealtime: MealTime,
    pub weight: f64,
}

fn default_timezone() -> String {
    "UTC".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub sex: Sex,
    pub life_stage: String,
    /// Overrides the sex-derived category, e.g. for pregnancy or lactation rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<DriCategory>,
    /// IANA zone name; defines the day boundary for this user.
    #[serde(default = "default_timezone")]
    pub timezone: String,
    #[serde(default)]
    pub cuisine_frequencies: BTreeMap<String, f64>,
    #[serde(default)]
    pub allergies: BTreeSet<String>,
    pub meal_habits: Vec<MealHabit>,
}

impl UserProfile {
    pub fn category(&self) -> DriCategory {
        self.category.unwrap_or_else(|| DriCategory::for_sex(self.sex))
    }

    pub fn tz(&self) -> Result<chrono_tz::Tz> {
        self.timezone
            .parse()
            .map_err(|_| Error::contract(format!("unknown timezone {:?}", self.timezone)))
    }

    pub fn habit_weight(&self, mealtime: MealTime) -> Option<f64> {
        self.meal_habits
            .iter()
            .find(|h| h.mealtime == mealtime)
            .map(|h| h.weight)
    }

    /// Preference weight for a cuisine. Profiles without recorded
    /// frequencies weigh every cuisine equally.
    pub fn cuisine_weight(&self, cuisine: &str) -> f64 {
        if self.cuisine_frequencies.is_empty() {
            return 1.0;
        }
        self.cuisine_frequencies
            .get(&cuisine.to_ascii_lowercase())
            .copied()
            .unwrap_or(0.0)
    }

    pub fn is_allergic_to_any<'a>(&self, tags: impl IntoIterator<Item = &'a String>) -> bool {
        tags.into_iter()
            .any(|t| self.allergies.contains(&t.to_ascii_lowercase()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "invalid profile: {}",
                self.violations.join("; ")
            )))
        }
    }
}

/// Checks every profile invariant and lists each one that fails.
pub fn validate_profile(p: &UserProfile, reference: &DriReference) -> ValidationReport {
    let mut v = Vec::new();
    if p.user_id.trim().is_empty() {
        v.push("user_id is empty".to_string());
    } else if !p
        .user_id
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        v.push(format!("user_id {:?} must be [A-Za-z0-9_-]", p.user_id));
    }

    if let Err(e) = reference.lookup_category(p.category(), &p.life_stage) {
        v.push(format!("no reference row: {e}"));
    }

    if p.meal_habits.is_empty() {
        v.push("meal_habits is empty".to_string());
    }
    let mut seen = BTreeSet::new();
    for h in &p.meal_habits {
        if !seen.insert(h.mealtime) {
            v.push(format!("mealtime {} listed twice in meal_habits", h.mealtime));
        }
        if !(0.0..=1.0).contains(&h.weight) || !h.weight.is_finite() {
            v.push(format!("weight for {} outside [0,1]: {}", h.mealtime, h.weight));
        }
    }
    if !p.meal_habits.is_empty() {
        let total: f64 = p.meal_habits.iter().map(|h| h.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            v.push(format!("meal habit weights sum to {total}, expected 1"));
        }
    }

    for (cuisine, w) in &p.cuisine_frequencies {
        if !(0.0..=1.0).contains(w) || !w.is_finite() {
            v.push(format!("cuisine frequency for {cuisine:?} outside [0,1]: {w}"));
        }
        if cuisine != &cuisine.to_ascii_lowercase() {
            v.push(format!("cuisine tag {cuisine:?} must be lowercase"));
        }
    }
    for a in &p.allergies {
        if a != &a.to_ascii_lowercase() || a.trim().is_empty() {
            v.push(format!("allergen tag {a:?} must be a non-empty lowercase tag"));
        }
    }
    if p.tz().is_err() {
        v.push(format!("unknown timezone {:?}", p.timezone));
    }
    ValidationReport { violations: v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::sample_profile;

    #[test]
    fn valid_profile_has_empty_report() {
        let r = validate_profile(&sample_profile(), DriReference::standard());
        assert!(r.is_valid(), "{:?}", r.violations);
    }

    #[test]
    fn unknown_life_stage_is_reported() {
        let mut p = sample_profile();
        p.life_stage = "999 y".into();
        let r = validate_profile(&p, DriReference::standard());
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].contains("no reference row"));
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut p = sample_profile();
        p.meal_habits[2].weight = 0.25;
        let r = validate_profile(&p, DriReference::standard());
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].contains("weights sum"));
    }

    #[test]
    fn category_override_reaches_pregnancy_rows() {
        let mut p = sample_profile();
        p.category = Some(DriCategory::Pregnancy);
        assert!(validate_profile(&p, DriReference::standard()).is_valid());
        p.life_stage = "51-70 y".into();
        assert!(!validate_profile(&p, DriReference::standard()).is_valid());
    }

    #[test]
    fn bad_timezone_and_tags_are_reported() {
        let mut p = sample_profile();
        p.timezone = "Mars/Olympus".into();
        p.allergies.insert("Seafood".into());
        let r = validate_profile(&p, DriReference::standard());
        assert_eq!(r.violations.len(), 2, "{:?}", r.violations);
    }

    #[test]
    fn cuisine_weight_defaults() {
        let mut p = sample_profile();
        assert_eq!(p.cuisine_weight("british"), 1.0);
        p.cuisine_frequencies.insert("chinese".into(), 0.8);
        assert_eq!(p.cuisine_weight("Chinese"), 0.8);
        assert_eq!(p.cuisine_weight("british"), 0.0);
    }
}
