use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_AGE_YEARS: u32 = 130;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Manufacturer {
    #[serde(rename = "GE Healthcare")]
    GEHealthcare,
    Siemens,
    Philips,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MachineType {
    CR,
    DR,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewHint {
    PA,
    AP,
    Unknown,
}

/// Age bands `[0,18) [18,40) [40,60) [60,75) [75,inf)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBand {
    Under18,
    A18to40,
    A40to60,
    A60to75,
    A75plus,
}

impl AgeBand {
    pub const ALL: [AgeBand; 5] = [
        AgeBand::Under18,
        AgeBand::A18to40,
        AgeBand::A40to60,
        AgeBand::A60to75,
        AgeBand::A75plus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AgeBand::Under18 => "Under 18",
            AgeBand::A18to40 => "18-40",
            AgeBand::A40to60 => "40-60",
            AgeBand::A60to75 => "60-75",
            AgeBand::A75plus => "75+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("age {0} is negative")]
pub struct NegativeAge(pub i64);

pub fn age_band(age_years: i64) -> Result<AgeBand, NegativeAge> {
    Ok(match age_years {
        i64::MIN..=-1 => return Err(NegativeAge(age_years)),
        0..=17 => AgeBand::Under18,
        18..=39 => AgeBand::A18to40,
        40..=59 => AgeBand::A40to60,
        60..=74 => AgeBand::A60to75,
        _ => AgeBand::A75plus,
    })
}

impl Sex {
    pub fn label(self) -> &'static str {
        match self {
            Sex::Male => "Male",
            Sex::Female => "Female",
            Sex::Unknown => "Unknown",
        }
    }

    pub fn from_dicom(code: &str) -> Self {
        match code.trim().to_ascii_uppercase().as_str() {
            "M" => Sex::Male,
            "F" => Sex::Female,
            _ => Sex::Unknown,
        }
    }
}

impl Manufacturer {
    pub fn label(self) -> &'static str {
        match self {
            Manufacturer::GEHealthcare => "GE Healthcare",
            Manufacturer::Siemens => "Siemens",
            Manufacturer::Philips => "Philips",
            Manufacturer::Other => "Other Manufacturers",
        }
    }

    /// Case-insensitive prefix match; anything unrecognised is `Other`.
    pub fn normalize(free_text: &str) -> Self {
        let upper = free_text.trim().to_ascii_uppercase();
        if upper.starts_with("GE") {
            Manufacturer::GEHealthcare
        } else if upper.starts_with("SIEMENS") {
            Manufacturer::Siemens
        } else if upper.starts_with("PHILIPS") {
            Manufacturer::Philips
        } else {
            Manufacturer::Other
        }
    }
}

impl MachineType {
    pub fn label(self) -> &'static str {
        match self {
            MachineType::CR => "CR",
            MachineType::DR => "DR",
            MachineType::Unknown => "Unknown",
        }
    }

    /// CR/DR split from the Modality attribute (DX is digital radiography).
    pub fn from_modality(modality: &str) -> Self {
        match modality.trim().to_ascii_uppercase().as_str() {
            "CR" => MachineType::CR,
            "DX" | "DR" => MachineType::DR,
            _ => MachineType::Unknown,
        }
    }
}

impl ViewHint {
    pub fn from_dicom(code: &str) -> Self {
        match code.trim().to_ascii_uppercase().as_str() {
            "PA" => ViewHint::PA,
            "AP" => ViewHint::AP,
            _ => ViewHint::Unknown,
        }
    }
}

/// Directly identifying attributes. Removed entirely by anonymization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientIdentity {
    pub name: Option<String>,
    pub patient_id: Option<String>,
    pub address: Option<String>,
    pub birth_date: Option<String>,
}

impl PatientIdentity {
    pub fn is_empty(&self) -> bool {
        self.name.is_none()
            && self.patient_id.is_none()
            && self.address.is_none()
            && self.birth_date.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyMetadata {
    pub study_id: String,
    /// Set once identifiers have been stripped and `study_id` pseudonymized.
    #[serde(default)]
    pub deidentified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<PatientIdentity>,
    pub patient_age_years: Option<u32>,
    pub sex: Sex,
    pub manufacturer: Manufacturer,
    pub machine_type: MachineType,
    pub modality: String,
    pub view_hint: ViewHint,
    pub acquired_at: Option<NaiveDateTime>,
}

impl StudyMetadata {
    pub fn age_band(&self) -> Option<AgeBand> {
        self.patient_age_years
            .and_then(|a| age_band(i64::from(a)).ok())
    }
}

/// Parses a DICOM AS value (`nnnD|W|M|Y`) into whole years, flooring
/// sub-year units. Out-of-range or malformed values yield `None`.
pub fn parse_age_string(value: &str) -> Option<u32> {
    let v = value.trim_matches(|c: char| c == ' ' || c == '\0');
    if v.len() != 4 {
        return None;
    }
    let (digits, unit) = v.split_at(3);
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n: u32 = digits.parse().ok()?;
    let years = match unit {
        "Y" | "y" => n,
        "M" | "m" => n / 12,
        "W" | "w" => n / 52,
        "D" | "d" => n / 365,
        _ => return None,
    };
    (years <= MAX_AGE_YEARS).then_some(years)
}
