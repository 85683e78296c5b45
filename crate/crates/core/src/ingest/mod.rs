//! DICOM ingestion: parsing, anonymization, display windowing and the
//! demographic/equipment subgroup taxonomy.

mod anonymize;
pub mod dicom;
mod metadata;
mod raster;

pub use anonymize::Anonymizer;
pub use dicom::{has_preamble, parse_dicom, write_dicom, DicomError};
pub use metadata::{
    age_band, parse_age_string, AgeBand, MachineType, Manufacturer, NegativeAge, PatientIdentity,
    Sex, StudyMetadata, ViewHint, MAX_AGE_YEARS,
};
pub use raster::{to_eight_bit, Photometric, RasterError, RawImage};
