//! The 75-pathology label set with alias resolution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Canonical names in reporting order.
pub const CANONICAL_NAMES: [&str; 75] = [
    "Alveolar Lung Opacity",
    "Atelectasis",
    "Azygous Lobe",
    "Bifid Rib",
    "Bronchiectasis",
    "Bullous Emphysema",
    "Cardiomegaly",
    "Cavity",
    "Cervical Rib",
    "Clavicle Fracture",
    "Clavicle Fracture with PO",
    "Consolidation",
    "Dextrocardia",
    "Dextrocardia with situs inversus",
    "Diaphragmatic Hump",
    "Elevated Diaphragm",
    "Esophageal Stent",
    "Fibrosis",
    "Fissural Thickening",
    "Flattened Diaphragm",
    "Foreign Body - Cardiac Valves",
    "Foreign Body - Chemoport",
    "Foreign Body - Chest Leads",
    "Foreign Body - CV Line",
    "Foreign Body - Endotracheal tube",
    "Foreign Body - Intercostal",
    "Foreign Body - Nasogastric Tube",
    "Foreign Body - Nasojejunal Tube",
    "Foreign Body - Pacemaker",
    "Foreign Body - Pigtail Catheter",
    "Foreign Body - Spinal Fusion",
    "Foreign Body - Sternal Sutures",
    "Foreign Body - Tracheostomy Tube",
    "Hilar Lymphadenopathy",
    "Hilar Prominence",
    "Humerus Fracture",
    "Humerus Post OP",
    "Hydro Pneumothorax",
    "Hypoplastic Rib",
    "Interstitial Lung Disease",
    "Interstitial Lung Opacity",
    "Lobe Collapse",
    "Lung Collapse",
    "Lung Mass",
    "Lymph Node Calcification",
    "Mastectomy",
    "Mediastinal Mass",
    "Mediastinal Shift",
    "Mediastinal Widening",
    "Milliary Tuberculosis",
    "Nodule",
    "Old Healed Clavicle Fracture",
    "Old Rib Fracture",
    "Old Tuberculosis",
    "Pericardial Cyst",
    "Pleural Calcification",
    "Pleural Effusion",
    "Pleural Plaque",
    "Pleural Thickening",
    "Pneumonia",
    "Pneumoperitoneum",
    "Pneumothorax",
    "Prominent Bronchovascular Markings",
    "Pulmonary Edema",
    "Reticulo-nodular Appearance",
    "Rib Fracture",
    "Scapula Fracture",
    "Scoliosis",
    "Subcutaneous Emphysema",
    "Surgical Staples",
    "Thyroid Lesion",
    "Tracheal and Mediastinal Shift",
    "Tracheal Shift",
    "Tuberculosis",
    "Unfolding of Aorta",
];

/// Abbreviated spellings used by the metric tables, mapped to canonical names.
const ALIASES: [(&str, &str); 6] = [
    ("Foreign Body - ETT", "Foreign Body - Endotracheal tube"),
    ("Foreign Body - ICD", "Foreign Body - Intercostal"),
    ("Foreign Body - NG Tube", "Foreign Body - Nasogastric Tube"),
    ("Foreign Body - NJ Tube", "Foreign Body - Nasojejunal Tube"),
    ("ILD", "Interstitial Lung Disease"),
    ("Old TB", "Old Tuberculosis"),
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown pathology label {0:?}")]
pub struct UnknownLabel(pub String);

/// One of the 75 canonical pathologies; ordering follows [`CANONICAL_NAMES`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathologyLabel(u8);

impl PathologyLabel {
    pub const COUNT: usize = CANONICAL_NAMES.len();

    pub fn from_index(index: usize) -> Option<Self> {
        (index < Self::COUNT).then_some(Self(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        CANONICAL_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = PathologyLabel> {
        (0..Self::COUNT).map(|i| Self(i as u8))
    }

    /// Resolves canonical names and known aliases, ignoring case and
    /// repeated whitespace.
    pub fn resolve(name: &str) -> Result<Self, UnknownLabel> {
        let key = normalize(name);
        if let Some(i) = CANONICAL_NAMES.iter().position(|c| normalize(c) == key) {
            return Ok(Self(i as u8));
        }
        ALIASES
            .iter()
            .find(|(alias, _)| normalize(alias) == key)
            .and_then(|(_, canonical)| CANONICAL_NAMES.iter().position(|c| c == canonical))
            .map(|i| Self(i as u8))
            .ok_or_else(|| UnknownLabel(name.to_string()))
    }

    pub fn aliases(self) -> impl Iterator<Item = &'static str> {
        let name = self.name();
        ALIASES
            .iter()
            .filter(move |(_, canonical)| *canonical == name)
            .map(|(alias, _)| *alias)
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl fmt::Debug for PathologyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PathologyLabel({:?})", self.name())
    }
}

impl fmt::Display for PathologyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PathologyLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::resolve(s)
    }
}

impl Serialize for PathologyLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for PathologyLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Self::resolve(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn exactly_75_distinct_names() {
        let set: HashSet<_> = CANONICAL_NAMES.iter().map(|n| normalize(n)).collect();
        assert_eq!(set.len(), 75);
        assert_eq!(PathologyLabel::all().count(), 75);
    }

    #[test]
    fn aliases_resolve() {
        let ett = PathologyLabel::resolve("Foreign Body - ETT").unwrap();
        assert_eq!(ett.name(), "Foreign Body - Endotracheal tube");
        assert_eq!(
            PathologyLabel::resolve("ILD").unwrap().name(),
            "Interstitial Lung Disease"
        );
        assert_eq!(
            PathologyLabel::resolve("Old TB").unwrap().name(),
            "Old Tuberculosis"
        );
        assert_eq!(
            PathologyLabel::resolve("unfolding of  aorta").unwrap().name(),
            "Unfolding of Aorta"
        );
        assert!(ett.aliases().any(|a| a == "Foreign Body - ETT"));
        assert!(PathologyLabel::resolve("Broken Heart").is_err());
    }

    #[test]
    fn serde_uses_canonical_name() {
        let l = PathologyLabel::resolve("Old TB").unwrap();
        let s = serde_json::to_string(&l).unwrap();
        assert_eq!(s, "\"Old Tuberculosis\"");
        let back: PathologyLabel = serde_json::from_str("\"old tb\"").unwrap();
        assert_eq!(back, l);
    }
}
