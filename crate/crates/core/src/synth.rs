//! Synthetic DICOM studies with scripted model outputs, and a builder that
//! turns them into a replay fixture plus matching reference reads.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{FixtureRecord, ModelBackend, RecordingBackend, ScriptedBackend, StudyScript, View, ViewCall};
use crate::detection::{BBox, Detection};
use crate::ingest::{
    write_dicom, MachineType, Manufacturer, PatientIdentity, Photometric, RawImage, Sex, StudyMetadata, ViewHint,
};
use crate::labels::PathologyLabel;
use crate::metrics::{Annotation, Decision};
use crate::pipeline::{Pipeline, PipelineError, PipelineOutcome};
use crate::preprocess::{KeypointSet, Point, RotationTransform};
use crate::records::{to_ndjson, ReferenceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    NotXray,
    Normal,
    Abnormal,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Largest absolute tilt applied to a study, in degrees.
    pub max_tilt_degrees: f64,
    /// Probability that the reference read agrees with the prediction.
    pub reference_agreement: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            width: 256,
            height: 256,
            max_tilt_degrees: 10.0,
            reference_agreement: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStudy {
    pub file_name: String,
    pub bytes: Vec<u8>,
    pub scenario: Scenario,
    pub tilt_degrees: f64,
    pub script: StudyScript,
    pub reference: Decision,
    pub annotations: Vec<Annotation>,
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Upright chest-like phantom in 12-bit units: soft gradient body, darker
/// lung fields, a bright spine column and clavicle bars.
fn phantom(x: f64, y: f64, w: f64, h: f64) -> f64 {
    let (u, v) = (x / w, y / h);
    if !(0.0..1.0).contains(&u) || !(0.0..1.0).contains(&v) {
        return 0.0;
    }
    let mut val = 1400.0 + 600.0 * v;
    let lung = |cx: f64| ((u - cx) / 0.16).powi(2) + ((v - 0.55) / 0.3).powi(2) < 1.0;
    if lung(0.32) || lung(0.68) {
        val -= 900.0;
    }
    if (u - 0.5).abs() < 0.04 && v > 0.3 {
        val += 1500.0;
    }
    if (v - 0.3).abs() < 0.015 && (0.2..0.8).contains(&u) {
        val += 1200.0;
    }
    val
}

/// Builds study `index` of a corpus. `tilt` overrides the random tilt.
pub fn synth_study(cfg: &SynthConfig, index: usize, scenario: Scenario, tilt: Option<f64>) -> SyntheticStudy {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (index as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    let (w, h) = (cfg.width, cfg.height);
    let (wf, hf) = (w as f64, h as f64);
    let tilt = tilt.unwrap_or_else(|| {
        if cfg.max_tilt_degrees > 0.0 {
            round3(rng.random_range(-cfg.max_tilt_degrees..=cfg.max_tilt_degrees))
        } else {
            0.0
        }
    });
    // Points in the upright frame map into the tilted image by a rotation of +tilt.
    let into_tilted = RotationTransform::new(-tilt, w, h);
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let src = into_tilted.inverse(Point::new(x as f64, y as f64));
            let noise: f64 = rng.random_range(0.0..24.0);
            pixels.push((phantom(src.x, src.y, wf, hf) + noise).clamp(0.0, 4095.0) as u16);
        }
    }
    let jitter = |rng: &mut ChaCha8Rng| rng.random_range(-0.02..0.02);
    let clavicle_y = hf * (0.3 + jitter(&mut rng));
    let upright = KeypointSet {
        left_clavicle: Point::new(wf * (0.3 + jitter(&mut rng)), clavicle_y),
        right_clavicle: Point::new(wf * (0.7 + jitter(&mut rng)), clavicle_y),
        spinous_process: (0..4).map(|k| Point::new(wf * 0.5, hf * (0.35 + 0.15 * k as f64))).collect(),
    };
    let keypoints = upright.map(|p| into_tilted.forward(p));

    let sex = [Sex::Male, Sex::Female, Sex::Unknown][rng.random_range(0..3)];
    let manufacturer = [
        Manufacturer::GEHealthcare,
        Manufacturer::Siemens,
        Manufacturer::Philips,
        Manufacturer::Other,
    ][rng.random_range(0..4)];
    let (machine_type, modality) = if rng.random_bool(0.5) {
        (MachineType::CR, "CR")
    } else {
        (MachineType::DR, "DX")
    };
    let meta = StudyMetadata {
        study_id: format!("1.2.826.0.1.3680043.{}.{}", cfg.seed, index),
        deidentified: false,
        identity: Some(PatientIdentity {
            name: Some(format!("SYNTH^PATIENT{index}")),
            patient_id: Some(format!("P{index:06}")),
            address: None,
            birth_date: None,
        }),
        patient_age_years: Some(rng.random_range(1..95)),
        sex,
        manufacturer,
        machine_type,
        modality: modality.into(),
        view_hint: ViewHint::PA,
        acquired_at: None,
    };
    let raw = RawImage::new(w, h, 12, Photometric::Monochrome2, pixels).expect("phantom fits 12 bits");
    let bytes = write_dicom(&meta, &raw);

    let abnormal_p = |rng: &mut ChaCha8Rng, abnormal: bool| {
        let a = if abnormal {
            rng.random_range(0.6..0.98)
        } else {
            rng.random_range(0.02..0.4)
        };
        let a = round3(a);
        [round3(1.0 - a), a]
    };
    let abnormal = matches!(scenario, Scenario::Abnormal | Scenario::Critical);
    let probs = (0..3).map(|_| abnormal_p(&mut rng, abnormal)).collect();
    let mut proposals = Vec::new();
    if abnormal {
        let n = rng.random_range(1..=3);
        for k in 0..n {
            let label = if k == 0 && scenario == Scenario::Critical {
                PathologyLabel::resolve("Pneumothorax").expect("canonical")
            } else {
                loop {
                    let l = PathologyLabel::from_index(rng.random_range(0..PathologyLabel::COUNT)).expect("in range");
                    if !["Pneumothorax", "Hydro Pneumothorax", "Pneumoperitoneum"].contains(&l.name()) {
                        break l;
                    }
                }
            };
            let bw = round3(rng.random_range(0.1..0.3) * wf);
            let bh = round3(rng.random_range(0.1..0.3) * hf);
            let x1 = round3(rng.random_range(0.05..0.6) * wf);
            let y1 = round3(rng.random_range(0.05..0.6) * hf);
            let bbox = BBox::new(x1, y1, x1 + bw, y1 + bh).expect("positive size");
            let score = round3(rng.random_range(0.6..0.99));
            proposals.push(Detection::new(bbox, label, score).expect("score in range"));
            // A weaker near-duplicate that suppression should remove.
            let dup = BBox::new(x1 + 2.0, y1 + 1.0, x1 + bw + 2.0, y1 + bh + 1.0).expect("positive size");
            proposals.push(Detection::new(dup, label, round3(score * 0.9)).expect("score in range"));
        }
        // A low-confidence stray below the score threshold.
        let stray = BBox::new(4.0, 4.0, 20.0, 20.0).expect("positive size");
        let label = PathologyLabel::from_index(0).expect("in range");
        proposals.push(Detection::new(stray, label, 0.2).expect("score in range"));
    }
    let view = if rng.random_bool(0.7) { View::PA } else { View::AP };
    let script = StudyScript {
        xray: if scenario == Scenario::NotXray { 0.08 } else { round3(rng.random_range(0.8..1.0)) },
        chest: round3(rng.random_range(0.8..1.0)),
        view: ViewCall {
            view,
            score: round3(rng.random_range(0.55..1.0)),
        },
        keypoints: Some(keypoints),
        probs,
        proposals,
    };
    let predicted = if abnormal { Decision::Abnormal } else { Decision::Normal };
    let reference = if rng.random_bool(cfg.reference_agreement) { predicted } else { predicted.flip() };
    let annotations = if reference == Decision::Abnormal {
        script
            .proposals
            .iter()
            .step_by(2)
            .filter(|d| d.score >= 0.5)
            .map(|d| Annotation { bbox: d.bbox, label: d.label })
            .collect()
    } else {
        Vec::new()
    };
    SyntheticStudy {
        file_name: format!("study-{index:05}.dcm"),
        bytes,
        scenario,
        tilt_degrees: tilt,
        script,
        reference,
        annotations,
    }
}

/// Scenario mix for a corpus: roughly 10% not-an-X-ray, 45% normal, 35%
/// abnormal and 10% critical, fixed by the seed.
pub fn scenario_for(seed: u64, index: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64).wrapping_mul(31));
    match rng.random_range(0..20) {
        0..=1 => Scenario::NotXray,
        2..=10 => Scenario::Normal,
        11..=17 => Scenario::Abnormal,
        _ => Scenario::Critical,
    }
}

pub fn generate(cfg: &SynthConfig, count: usize) -> Vec<SyntheticStudy> {
    (0..count)
        .map(|i| synth_study(cfg, i, scenario_for(cfg.seed, i), None))
        .collect()
}

/// A replay fixture and the reference reads for a corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fixture {
    pub records: Vec<FixtureRecord>,
    pub references: Vec<ReferenceRecord>,
}

impl Fixture {
    pub fn fixture_ndjson(&self) -> String {
        to_ndjson(&self.records)
    }

    pub fn references_ndjson(&self) -> String {
        to_ndjson(&self.references)
    }
}

/// Runs each study's script through the real pipeline under a recording
/// backend, so every fixture key is the digest of the exact image the stage
/// will see on replay.
pub struct FixtureBuilder<'a> {
    pipeline: &'a Pipeline,
}

impl<'a> FixtureBuilder<'a> {
    pub fn new(pipeline: &'a Pipeline) -> Self {
        Self { pipeline }
    }

    pub fn record_study(&self, study: &SyntheticStudy) -> Result<(Vec<FixtureRecord>, PipelineOutcome), PipelineError> {
        let scripted = ScriptedBackend::new(study.script.clone(), self.pipeline.config().resolutions);
        let rec = Arc::new(RecordingBackend::new(scripted));
        let outcome = self.pipeline.run(&study.bytes, rec.as_ref() as &dyn ModelBackend)?;
        let rec = Arc::try_unwrap(rec).unwrap_or_else(|_| unreachable!("no other handle exists"));
        Ok((rec.into_records(), outcome))
    }

    pub fn build(&self, studies: &[SyntheticStudy]) -> Result<Fixture, PipelineError> {
        let mut fx = Fixture::default();
        for s in studies {
            let (records, outcome) = self.record_study(s)?;
            fx.records.extend(records);
            if outcome.prediction.is_some() {
                fx.references.push(ReferenceRecord {
                    study_id: outcome.record.study_id,
                    reference: s.reference,
                    annotations: s.annotations.clone(),
                });
            }
        }
        Ok(fx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::FixtureBackend;
    use crate::ingest::parse_dicom;
    use crate::pipeline::{PipelineConfig, StudyStatus, Triage};
    use crate::preprocess::estimate_rotation;

    #[test]
    fn studies_are_deterministic_and_distinct() {
        let cfg = SynthConfig {
            width: 64,
            height: 64,
            ..Default::default()
        };
        let a = synth_study(&cfg, 3, Scenario::Normal, None);
        assert_eq!(a, synth_study(&cfg, 3, Scenario::Normal, None));
        assert_ne!(a.bytes, synth_study(&cfg, 4, Scenario::Normal, None).bytes);
        let (meta, raw) = parse_dicom(&a.bytes).unwrap();
        assert_eq!((raw.width(), raw.height()), (64, 64));
        assert!(meta.identity.is_some());
        let kp = a.script.keypoints.as_ref().unwrap();
        assert!(kp.within_bounds(64, 64));
        assert!((estimate_rotation(kp).unwrap() - a.tilt_degrees).abs() < 1e-9);
    }

    #[test]
    fn fixture_replay_matches_recording() {
        let cfg = SynthConfig {
            width: 96,
            height: 96,
            ..Default::default()
        };
        let pipeline = Pipeline::new(PipelineConfig::default()).unwrap();
        let studies: Vec<_> = [Scenario::NotXray, Scenario::Normal, Scenario::Abnormal, Scenario::Critical]
            .iter()
            .enumerate()
            .map(|(i, &s)| synth_study(&cfg, i, s, None))
            .collect();
        let builder = FixtureBuilder::new(&pipeline);
        let fx = builder.build(&studies).unwrap();
        assert_eq!(fx.references.len(), 3);
        let backend = FixtureBackend::from_ndjson("fx", &fx.fixture_ndjson()).unwrap();
        for s in &studies {
            let (_, recorded) = builder.record_study(s).unwrap();
            let replayed = pipeline.run(&s.bytes, &backend).unwrap();
            assert_eq!(replayed, recorded);
            match s.scenario {
                Scenario::NotXray => assert!(matches!(replayed.record.status, StudyStatus::Rejected(_))),
                Scenario::Critical => assert_eq!(replayed.record.triage, Triage::Critical),
                Scenario::Abnormal => {
                    let p = replayed.prediction.unwrap();
                    assert!(!p.detections.is_empty());
                    assert!(p.detections.len() < s.script.proposals.len());
                }
                Scenario::Normal => assert_eq!(replayed.record.triage, Triage::Routine),
            }
        }
    }
}
