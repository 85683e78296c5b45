//! Reader and writer for the supported DICOM subset: Part 10 files with an
//! explicit VR little endian data set and native (uncompressed) single-frame
//! grayscale pixel data.

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use thiserror::Error;

use super::metadata::{
    parse_age_string, MachineType, Manufacturer, PatientIdentity, Sex, StudyMetadata, ViewHint,
};
use super::raster::{Photometric, RawImage};

pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";
const DIGITAL_XRAY_STORAGE: &str = "1.2.840.10008.5.1.4.1.1.1.1";
const IMPLEMENTATION_CLASS: &str = "1.2.826.0.1.3680043.10.1";
const PREAMBLE_LEN: usize = 128;
const MAX_SEQUENCE_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DicomError {
    #[error("missing 128-byte preamble and DICM magic")]
    MissingMagic,
    #[error("unsupported transfer syntax {0:?}")]
    UnsupportedTransferSyntax(String),
    #[error("no pixel data element")]
    MissingPixelData,
    #[error("malformed element at offset {offset}: {reason}")]
    MalformedElement { offset: usize, reason: &'static str },
    #[error("missing required attribute {0}")]
    MissingAttribute(&'static str),
    #[error("unsupported pixel format: {0}")]
    UnsupportedPixelFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag(pub u16, pub u16);

impl Tag {
    pub const TRANSFER_SYNTAX: Tag = Tag(0x0002, 0x0010);
    pub const ACQUISITION_DATE: Tag = Tag(0x0008, 0x0022);
    pub const ACQUISITION_TIME: Tag = Tag(0x0008, 0x0032);
    pub const STUDY_DATE: Tag = Tag(0x0008, 0x0020);
    pub const STUDY_TIME: Tag = Tag(0x0008, 0x0030);
    pub const MODALITY: Tag = Tag(0x0008, 0x0060);
    pub const MANUFACTURER: Tag = Tag(0x0008, 0x0070);
    pub const PATIENT_NAME: Tag = Tag(0x0010, 0x0010);
    pub const PATIENT_ID: Tag = Tag(0x0010, 0x0020);
    pub const PATIENT_BIRTH_DATE: Tag = Tag(0x0010, 0x0030);
    pub const PATIENT_SEX: Tag = Tag(0x0010, 0x0040);
    pub const PATIENT_AGE: Tag = Tag(0x0010, 0x1010);
    pub const PATIENT_ADDRESS: Tag = Tag(0x0010, 0x1040);
    pub const PATIENT_IDENTITY_REMOVED: Tag = Tag(0x0012, 0x0062);
    pub const VIEW_POSITION: Tag = Tag(0x0018, 0x5101);
    pub const STUDY_INSTANCE_UID: Tag = Tag(0x0020, 0x000D);
    pub const SAMPLES_PER_PIXEL: Tag = Tag(0x0028, 0x0002);
    pub const PHOTOMETRIC: Tag = Tag(0x0028, 0x0004);
    pub const NUMBER_OF_FRAMES: Tag = Tag(0x0028, 0x0008);
    pub const ROWS: Tag = Tag(0x0028, 0x0010);
    pub const COLUMNS: Tag = Tag(0x0028, 0x0011);
    pub const BITS_ALLOCATED: Tag = Tag(0x0028, 0x0100);
    pub const BITS_STORED: Tag = Tag(0x0028, 0x0101);
    pub const HIGH_BIT: Tag = Tag(0x0028, 0x0102);
    pub const PIXEL_REPRESENTATION: Tag = Tag(0x0028, 0x0103);
    pub const PIXEL_DATA: Tag = Tag(0x7FE0, 0x0010);

    const ITEM: Tag = Tag(0xFFFE, 0xE000);
    const ITEM_DELIMITER: Tag = Tag(0xFFFE, 0xE00D);
    const SEQUENCE_DELIMITER: Tag = Tag(0xFFFE, 0xE0DD);
}

/// VRs whose explicit encoding uses 2 reserved bytes and a 32-bit length.
fn has_long_length(vr: [u8; 2]) -> bool {
    matches!(
        &vr,
        b"OB" | b"OD" | b"OF" | b"OL" | b"OV" | b"OW" | b"SQ" | b"SV" | b"UC" | b"UN" | b"UR"
            | b"UT" | b"UV"
    )
}

#[derive(Debug, Clone, Copy)]
struct Header {
    tag: Tag,
    vr: [u8; 2],
    /// `None` for undefined length.
    length: Option<usize>,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn malformed(&self, reason: &'static str) -> DicomError {
        DicomError::MalformedElement {
            offset: self.pos,
            reason,
        }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DicomError> {
        if n > self.remaining() {
            return Err(self.malformed("length overruns stream"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, DicomError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DicomError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn peek_group(&self) -> Option<u16> {
        (self.remaining() >= 2).then(|| u16::from_le_bytes([self.data[self.pos], self.data[self.pos + 1]]))
    }

    fn header(&mut self) -> Result<Header, DicomError> {
        let tag = Tag(self.u16()?, self.u16()?);
        if tag.0 == 0xFFFE {
            let len = self.u32()?;
            return Ok(Header {
                tag,
                vr: *b"  ",
                length: (len != u32::MAX).then_some(len as usize),
            });
        }
        let vr_bytes = self.take(2)?;
        let vr = [vr_bytes[0], vr_bytes[1]];
        if !vr.iter().all(u8::is_ascii_uppercase) {
            return Err(self.malformed("invalid value representation"));
        }
        let len = if has_long_length(vr) {
            self.take(2)?;
            self.u32()?
        } else {
            u32::from(self.u16()?)
        };
        Ok(Header {
            tag,
            vr,
            length: (len != u32::MAX).then_some(len as usize),
        })
    }

    /// Skips the body of an undefined-length sequence, including the
    /// sequence delimitation item.
    fn skip_sequence(&mut self, depth: usize) -> Result<(), DicomError> {
        if depth > MAX_SEQUENCE_DEPTH {
            return Err(self.malformed("sequence nesting too deep"));
        }
        loop {
            let h = self.header()?;
            match h.tag {
                Tag::SEQUENCE_DELIMITER => return Ok(()),
                Tag::ITEM => match h.length {
                    Some(n) => {
                        self.take(n)?;
                    }
                    None => self.skip_item(depth + 1)?,
                },
                _ => return Err(self.malformed("unexpected element inside sequence")),
            }
        }
    }

    fn skip_item(&mut self, depth: usize) -> Result<(), DicomError> {
        loop {
            let h = self.header()?;
            if h.tag == Tag::ITEM_DELIMITER {
                return Ok(());
            }
            if h.tag.0 == 0xFFFE {
                return Err(self.malformed("unexpected delimiter inside item"));
            }
            match h.length {
                Some(n) => {
                    self.take(n)?;
                }
                None if &h.vr == b"SQ" || &h.vr == b"UN" => self.skip_sequence(depth + 1)?,
                None => return Err(self.malformed("undefined length on non-sequence element")),
            }
        }
    }
}

/// Raw element values of interest, keyed by tag.
#[derive(Default)]
struct Elements<'a> {
    values: Vec<(Tag, &'a [u8])>,
    pixel_data: Option<&'a [u8]>,
}

impl<'a> Elements<'a> {
    fn raw(&self, tag: Tag) -> Option<&'a [u8]> {
        self.values.iter().find(|(t, _)| *t == tag).map(|(_, v)| *v)
    }

    fn text(&self, tag: Tag) -> Option<String> {
        let raw = self.raw(tag)?;
        let s = String::from_utf8_lossy(raw);
        let first = s.split('\\').next().unwrap_or_default();
        let trimmed = first.trim_matches(|c: char| c == ' ' || c == '\0');
        (!trimmed.is_empty()).then(|| trimmed.to_string())
    }

    fn us(&self, tag: Tag) -> Result<Option<u16>, DicomError> {
        match self.raw(tag) {
            None => Ok(None),
            Some(b) if b.len() >= 2 => Ok(Some(u16::from_le_bytes([b[0], b[1]]))),
            Some(_) => Err(DicomError::MalformedElement {
                offset: 0,
                reason: "US value shorter than 2 bytes",
            }),
        }
    }
}

/// Cheap upload check: the 128-byte preamble followed by `DICM`.
pub fn has_preamble(data: &[u8]) -> bool {
    data.len() >= PREAMBLE_LEN + 4 && &data[PREAMBLE_LEN..PREAMBLE_LEN + 4] == b"DICM"
}

fn read_elements(data: &[u8]) -> Result<Elements<'_>, DicomError> {
    if !has_preamble(data) {
        return Err(DicomError::MissingMagic);
    }
    let mut cur = Cursor {
        data,
        pos: PREAMBLE_LEN + 4,
    };

    let mut transfer_syntax = None;
    while cur.peek_group() == Some(0x0002) {
        let h = cur.header()?;
        let len = h.length.ok_or_else(|| cur.malformed("undefined length in file meta"))?;
        let value = cur.take(len)?;
        if h.tag == Tag::TRANSFER_SYNTAX {
            let uid = String::from_utf8_lossy(value);
            transfer_syntax = Some(uid.trim_matches(|c: char| c == ' ' || c == '\0').to_string());
        }
    }
    match transfer_syntax {
        Some(ts) if ts == EXPLICIT_VR_LITTLE_ENDIAN => {}
        Some(ts) => return Err(DicomError::UnsupportedTransferSyntax(ts)),
        None => return Err(DicomError::UnsupportedTransferSyntax(String::new())),
    }

    let mut elements = Elements::default();
    while cur.remaining() > 0 {
        let h = cur.header()?;
        if h.tag.0 == 0xFFFE {
            return Err(cur.malformed("delimiter outside sequence"));
        }
        match h.length {
            Some(len) => {
                let value = cur.take(len)?;
                if h.tag == Tag::PIXEL_DATA {
                    elements.pixel_data = Some(value);
                } else if &h.vr != b"SQ" {
                    elements.values.push((h.tag, value));
                }
            }
            None if h.tag == Tag::PIXEL_DATA => {
                // Encapsulated pixel data only occurs with compressed syntaxes.
                return Err(DicomError::UnsupportedTransferSyntax(
                    "encapsulated pixel data".into(),
                ));
            }
            None if &h.vr == b"SQ" || &h.vr == b"UN" => cur.skip_sequence(0)?,
            None => return Err(cur.malformed("undefined length on non-sequence element")),
        }
    }
    Ok(elements)
}

fn parse_timestamp(date: Option<String>, time: Option<String>) -> Option<NaiveDateTime> {
    let date = NaiveDate::parse_from_str(date?.get(..8)?, "%Y%m%d").ok()?;
    let time = time
        .and_then(|t| {
            let hhmmss = t.get(..6)?;
            NaiveTime::parse_from_str(hhmmss, "%H%M%S").ok()
        })
        .unwrap_or(NaiveTime::MIN);
    Some(date.and_time(time))
}

/// Parses a DICOM Part 10 byte stream into study metadata and a raw raster.
pub fn parse_dicom(data: &[u8]) -> Result<(StudyMetadata, RawImage), DicomError> {
    let el = read_elements(data)?;

    let identity = PatientIdentity {
        name: el.text(Tag::PATIENT_NAME),
        patient_id: el.text(Tag::PATIENT_ID),
        address: el.text(Tag::PATIENT_ADDRESS),
        birth_date: el.text(Tag::PATIENT_BIRTH_DATE),
    };
    let modality = el.text(Tag::MODALITY).unwrap_or_default();
    let acquired_at = parse_timestamp(el.text(Tag::ACQUISITION_DATE), el.text(Tag::ACQUISITION_TIME))
        .or_else(|| parse_timestamp(el.text(Tag::STUDY_DATE), el.text(Tag::STUDY_TIME)));
    let meta = StudyMetadata {
        study_id: el.text(Tag::STUDY_INSTANCE_UID).unwrap_or_default(),
        deidentified: el
            .text(Tag::PATIENT_IDENTITY_REMOVED)
            .is_some_and(|v| v.eq_ignore_ascii_case("YES")),
        identity: (!identity.is_empty()).then_some(identity),
        patient_age_years: el.text(Tag::PATIENT_AGE).as_deref().and_then(parse_age_string),
        sex: el.text(Tag::PATIENT_SEX).map_or(Sex::Unknown, |s| Sex::from_dicom(&s)),
        manufacturer: Manufacturer::normalize(&el.text(Tag::MANUFACTURER).unwrap_or_default()),
        machine_type: MachineType::from_modality(&modality),
        view_hint: el
            .text(Tag::VIEW_POSITION)
            .map_or(ViewHint::Unknown, |s| ViewHint::from_dicom(&s)),
        modality,
        acquired_at,
    };

    let image = decode_pixels(&el)?;
    Ok((meta, image))
}

fn decode_pixels(el: &Elements<'_>) -> Result<RawImage, DicomError> {
    let pixel_data = el.pixel_data.ok_or(DicomError::MissingPixelData)?;
    let rows = el.us(Tag::ROWS)?.ok_or(DicomError::MissingAttribute("Rows"))? as usize;
    let cols = el.us(Tag::COLUMNS)?.ok_or(DicomError::MissingAttribute("Columns"))? as usize;
    let bits_allocated = el
        .us(Tag::BITS_ALLOCATED)?
        .ok_or(DicomError::MissingAttribute("BitsAllocated"))?;
    let bits_stored = el.us(Tag::BITS_STORED)?.unwrap_or(bits_allocated);
    let unsupported = |msg: String| Err(DicomError::UnsupportedPixelFormat(msg));

    if let Some(spp) = el.us(Tag::SAMPLES_PER_PIXEL)? {
        if spp != 1 {
            return unsupported(format!("{spp} samples per pixel"));
        }
    }
    if el.us(Tag::PIXEL_REPRESENTATION)?.unwrap_or(0) != 0 {
        return unsupported("signed pixel representation".into());
    }
    if let Some(frames) = el.text(Tag::NUMBER_OF_FRAMES) {
        if frames.trim() != "1" {
            return unsupported(format!("{frames} frames"));
        }
    }
    let photometric = match el.text(Tag::PHOTOMETRIC).as_deref() {
        Some("MONOCHROME1") => Photometric::Monochrome1,
        Some("MONOCHROME2") | None => Photometric::Monochrome2,
        Some(other) => return unsupported(format!("photometric interpretation {other}")),
    };
    let bytes_per_sample = match bits_allocated {
        8 => 1,
        16 => 2,
        other => return unsupported(format!("{other} bits allocated")),
    };
    if bits_stored == 0 || bits_stored > bits_allocated {
        return unsupported(format!("{bits_stored} bits stored"));
    }
    if rows == 0 || cols == 0 {
        return Err(DicomError::MissingPixelData);
    }
    let count = rows * cols;
    if pixel_data.len() < count * bytes_per_sample {
        return Err(DicomError::MalformedElement {
            offset: 0,
            reason: "pixel data shorter than rows x columns",
        });
    }
    let mask = ((1u32 << bits_stored) - 1) as u16;
    let pixels = if bytes_per_sample == 1 {
        pixel_data[..count].iter().map(|&b| u16::from(b) & mask).collect()
    } else {
        pixel_data[..count * 2]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) & mask)
            .collect()
    };
    RawImage::new(cols, rows, bits_stored as u8, photometric, pixels)
        .map_err(|e| DicomError::UnsupportedPixelFormat(e.to_string()))
}

struct Writer {
    out: Vec<u8>,
}

impl Writer {
    fn element(&mut self, tag: Tag, vr: &[u8; 2], value: &[u8]) {
        let pad = if vr == b"UI" || vr == b"OB" { 0u8 } else { b' ' };
        let mut value = value.to_vec();
        if value.len() % 2 == 1 {
            value.push(pad);
        }
        self.out.extend_from_slice(&tag.0.to_le_bytes());
        self.out.extend_from_slice(&tag.1.to_le_bytes());
        self.out.extend_from_slice(vr);
        if has_long_length(*vr) {
            self.out.extend_from_slice(&[0, 0]);
            self.out.extend_from_slice(&(value.len() as u32).to_le_bytes());
        } else {
            self.out.extend_from_slice(&(value.len() as u16).to_le_bytes());
        }
        self.out.extend_from_slice(&value);
    }

    fn text(&mut self, tag: Tag, vr: &[u8; 2], value: Option<&str>) {
        if let Some(v) = value.filter(|v| !v.is_empty()) {
            self.element(tag, vr, v.as_bytes());
        }
    }

    fn us(&mut self, tag: Tag, value: u16) {
        self.element(tag, b"US", &value.to_le_bytes());
    }
}

/// Serializes metadata and raster into an explicit VR little endian Part 10
/// stream that [`parse_dicom`] reads back losslessly for the supported
/// attribute subset.
pub fn write_dicom(meta: &StudyMetadata, image: &RawImage) -> Vec<u8> {
    let mut file_meta = Writer { out: Vec::new() };
    file_meta.element(Tag(0x0002, 0x0001), b"OB", &[0, 1]);
    file_meta.element(Tag(0x0002, 0x0002), b"UI", DIGITAL_XRAY_STORAGE.as_bytes());
    file_meta.element(Tag(0x0002, 0x0003), b"UI", b"1.2.826.0.1.3680043.10.1.1");
    file_meta.element(Tag::TRANSFER_SYNTAX, b"UI", EXPLICIT_VR_LITTLE_ENDIAN.as_bytes());
    file_meta.element(Tag(0x0002, 0x0012), b"UI", IMPLEMENTATION_CLASS.as_bytes());

    let mut w = Writer {
        out: vec![0u8; PREAMBLE_LEN],
    };
    w.out.extend_from_slice(b"DICM");
    w.element(
        Tag(0x0002, 0x0000),
        b"UL",
        &(file_meta.out.len() as u32).to_le_bytes(),
    );
    w.out.extend_from_slice(&file_meta.out);

    if let Some(ts) = meta.acquired_at {
        w.text(Tag::ACQUISITION_DATE, b"DA", Some(&ts.format("%Y%m%d").to_string()));
        w.text(Tag::ACQUISITION_TIME, b"TM", Some(&ts.format("%H%M%S").to_string()));
    }
    w.text(Tag::MODALITY, b"CS", Some(&meta.modality));
    let manufacturer = match meta.manufacturer {
        Manufacturer::GEHealthcare => "GE Healthcare",
        Manufacturer::Siemens => "SIEMENS",
        Manufacturer::Philips => "Philips",
        Manufacturer::Other => "OTHER",
    };
    w.text(Tag::MANUFACTURER, b"LO", Some(manufacturer));
    let identity = meta.identity.clone().unwrap_or_default();
    w.text(Tag::PATIENT_NAME, b"PN", identity.name.as_deref());
    w.text(Tag::PATIENT_ID, b"LO", identity.patient_id.as_deref());
    w.text(Tag::PATIENT_BIRTH_DATE, b"DA", identity.birth_date.as_deref());
    let sex = match meta.sex {
        Sex::Male => Some("M"),
        Sex::Female => Some("F"),
        Sex::Unknown => None,
    };
    w.text(Tag::PATIENT_SEX, b"CS", sex);
    if let Some(age) = meta.patient_age_years {
        w.text(Tag::PATIENT_AGE, b"AS", Some(&format!("{age:03}Y")));
    }
    w.text(Tag::PATIENT_ADDRESS, b"LO", identity.address.as_deref());
    if meta.deidentified {
        w.text(Tag::PATIENT_IDENTITY_REMOVED, b"CS", Some("YES"));
    }
    let view = match meta.view_hint {
        ViewHint::PA => Some("PA"),
        ViewHint::AP => Some("AP"),
        ViewHint::Unknown => None,
    };
    w.text(Tag::VIEW_POSITION, b"CS", view);
    w.text(Tag::STUDY_INSTANCE_UID, b"UI", Some(&meta.study_id));

    let eight_bit = image.bits_stored() <= 8;
    let bits_allocated = if eight_bit { 8 } else { 16 };
    w.us(Tag::SAMPLES_PER_PIXEL, 1);
    let photometric = match image.photometric() {
        Photometric::Monochrome1 => "MONOCHROME1",
        Photometric::Monochrome2 => "MONOCHROME2",
    };
    w.text(Tag::PHOTOMETRIC, b"CS", Some(photometric));
    w.us(Tag::ROWS, image.height() as u16);
    w.us(Tag::COLUMNS, image.width() as u16);
    w.us(Tag::BITS_ALLOCATED, bits_allocated);
    w.us(Tag::BITS_STORED, u16::from(image.bits_stored()));
    w.us(Tag::HIGH_BIT, u16::from(image.bits_stored()) - 1);
    w.us(Tag::PIXEL_REPRESENTATION, 0);
    let pixels: Vec<u8> = if eight_bit {
        image.pixels().iter().map(|&p| p as u8).collect()
    } else {
        image.pixels().iter().flat_map(|p| p.to_le_bytes()).collect()
    };
    w.element(Tag::PIXEL_DATA, if eight_bit { b"OB" } else { b"OW" }, &pixels);
    w.out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled stream, independent of [`write_dicom`].
    fn hand_built(age: &[u8; 4], include_magic: bool, ts: &str) -> Vec<u8> {
        fn el(out: &mut Vec<u8>, group: u16, elem: u16, vr: &[u8; 2], value: &[u8]) {
            out.extend_from_slice(&group.to_le_bytes());
            out.extend_from_slice(&elem.to_le_bytes());
            out.extend_from_slice(vr);
            if matches!(vr, b"OB" | b"OW" | b"SQ") {
                out.extend_from_slice(&[0, 0]);
                out.extend_from_slice(&(value.len() as u32).to_le_bytes());
            } else {
                out.extend_from_slice(&(value.len() as u16).to_le_bytes());
            }
            out.extend_from_slice(value);
        }
        let mut out = vec![0u8; 128];
        if include_magic {
            out.extend_from_slice(b"DICM");
        } else {
            out.extend_from_slice(b"XXXX");
        }
        let mut ts_bytes = ts.as_bytes().to_vec();
        if ts_bytes.len() % 2 == 1 {
            ts_bytes.push(0);
        }
        el(&mut out, 0x0002, 0x0010, b"UI", &ts_bytes);
        el(&mut out, 0x0008, 0x0060, b"CS", b"CR");
        el(&mut out, 0x0008, 0x0070, b"LO", b"SIEMENS ");
        el(&mut out, 0x0010, 0x0010, b"PN", b"Doe^John");
        el(&mut out, 0x0010, 0x0040, b"CS", b"M ");
        el(&mut out, 0x0010, 0x1010, b"AS", age);
        // An undefined-length sequence with one undefined-length item.
        out.extend_from_slice(&[0x08, 0x00, 0x15, 0x11]);
        out.extend_from_slice(b"SQ\0\0");
        out.extend_from_slice(&u32::MAX.to_le_bytes());
        out.extend_from_slice(&[0xFE, 0xFF, 0x00, 0xE0]);
        out.extend_from_slice(&u32::MAX.to_le_bytes());
        el(&mut out, 0x0008, 0x1150, b"UI", b"1.2\0");
        out.extend_from_slice(&[0xFE, 0xFF, 0x0D, 0xE0, 0, 0, 0, 0]);
        out.extend_from_slice(&[0xFE, 0xFF, 0xDD, 0xE0, 0, 0, 0, 0]);
        el(&mut out, 0x0018, 0x5101, b"CS", b"PA");
        el(&mut out, 0x0020, 0x000D, b"UI", b"1.2.3.4\0");
        el(&mut out, 0x0028, 0x0004, b"CS", b"MONOCHROME2 ");
        el(&mut out, 0x0028, 0x0010, b"US", &4u16.to_le_bytes());
        el(&mut out, 0x0028, 0x0011, b"US", &4u16.to_le_bytes());
        el(&mut out, 0x0028, 0x0100, b"US", &16u16.to_le_bytes());
        el(&mut out, 0x0028, 0x0101, b"US", &12u16.to_le_bytes());
        let pixels: Vec<u8> = (0u16..16).flat_map(|v| (v * 273).to_le_bytes()).collect();
        el(&mut out, 0x7FE0, 0x0010, b"OW", &pixels);
        out
    }

    #[test]
    fn parses_hand_assembled_stream() {
        let bytes = hand_built(b"045Y", true, EXPLICIT_VR_LITTLE_ENDIAN);
        let (meta, img) = parse_dicom(&bytes).unwrap();
        assert_eq!(meta.patient_age_years, Some(45));
        assert_eq!(meta.sex, Sex::Male);
        assert_eq!(meta.manufacturer, Manufacturer::Siemens);
        assert_eq!(meta.machine_type, MachineType::CR);
        assert_eq!(meta.modality, "CR");
        assert_eq!(meta.view_hint, ViewHint::PA);
        assert_eq!(meta.study_id, "1.2.3.4");
        assert_eq!(
            meta.identity.as_ref().and_then(|i| i.name.as_deref()),
            Some("Doe^John")
        );
        assert_eq!((img.width(), img.height()), (4, 4));
        assert_eq!(img.bits_stored(), 12);
        let expected: Vec<u16> = (0u16..16).map(|v| v * 273).collect();
        assert_eq!(img.pixels(), expected.as_slice());
    }

    #[test]
    fn age_in_months_floors_to_years() {
        let bytes = hand_built(b"018M", true, EXPLICIT_VR_LITTLE_ENDIAN);
        assert_eq!(parse_dicom(&bytes).unwrap().0.patient_age_years, Some(1));
    }

    #[test]
    fn rejects_missing_magic() {
        let bytes = hand_built(b"045Y", false, EXPLICIT_VR_LITTLE_ENDIAN);
        assert_eq!(parse_dicom(&bytes).unwrap_err(), DicomError::MissingMagic);
        assert_eq!(parse_dicom(b"short").unwrap_err(), DicomError::MissingMagic);
    }

    #[test]
    fn rejects_other_transfer_syntaxes() {
        let bytes = hand_built(b"045Y", true, "1.2.840.10008.1.2.4.50");
        assert_eq!(
            parse_dicom(&bytes).unwrap_err(),
            DicomError::UnsupportedTransferSyntax("1.2.840.10008.1.2.4.50".into())
        );
    }

    #[test]
    fn truncated_stream_is_malformed() {
        let bytes = hand_built(b"045Y", true, EXPLICIT_VR_LITTLE_ENDIAN);
        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(
            parse_dicom(cut).unwrap_err(),
            DicomError::MalformedElement { .. }
        ));
    }

    #[test]
    fn missing_pixel_data() {
        let bytes = hand_built(b"045Y", true, EXPLICIT_VR_LITTLE_ENDIAN);
        // Drop the final OW element: header is 12 bytes + 32 bytes of pixels.
        let cut = &bytes[..bytes.len() - 44];
        assert_eq!(parse_dicom(cut).unwrap_err(), DicomError::MissingPixelData);
    }

    #[test]
    fn writer_output_parses_back() {
        let bytes = hand_built(b"045Y", true, EXPLICIT_VR_LITTLE_ENDIAN);
        let (meta, img) = parse_dicom(&bytes).unwrap();
        let again = write_dicom(&meta, &img);
        assert_eq!(parse_dicom(&again).unwrap(), (meta, img));
    }
}
