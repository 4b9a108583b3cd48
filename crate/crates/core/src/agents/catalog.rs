use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::NutrientVector;
use crate::error::{Error, Result};

const STANDARD_CATALOG: &str = include_str!("../../data/food_catalog.json");

/// A dish with nutrients for one standard portion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub name: String,
    pub cuisine: String,
    /// Starchy base of a meal (rice, noodles, bread, potatoes, ...).
    #[serde(default)]
    pub staple: bool,
    #[serde(default)]
    pub allergens: Vec<String>,
    pub portion_g: f64,
    pub nutrients: NutrientVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodCatalog {
    pub version: u32,
    pub items: Vec<CatalogItem>,
}

impl FoodCatalog {
    pub fn standard() -> Result<Self> {
        Self::parse(STANDARD_CATALOG)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("food catalog {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: FoodCatalog = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(Error::config(format!("unsupported catalog version {}", self.version)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for item in &self.items {
            if !seen.insert(item.name.as_str()) {
                return Err(Error::config(format!("catalog item {:?} listed twice", item.name)));
            }
            if !(item.portion_g.is_finite() && item.portion_g > 0.0) {
                return Err(Error::config(format!("catalog item {:?} has no portion size", item.name)));
            }
            if item.allergens.iter().any(|a| a != &a.to_lowercase()) {
                return Err(Error::config(format!("catalog item {:?}: allergen tags must be lowercase", item.name)));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&CatalogItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_catalog_loads() {
        let c = FoodCatalog::standard().unwrap();
        assert!(c.items.len() >= 20);
        assert!(c.items.iter().any(|i| i.allergens.iter().any(|a| a == "seafood")));
        assert!(c.items.iter().any(|i| i.staple && i.cuisine == "chinese"));
        assert!(c.items.iter().any(|i| i.staple && i.cuisine == "british"));
    }
}
