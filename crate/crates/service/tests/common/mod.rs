#![allow(dead_code)]

pub mod durability;

use std::path::Path;
use std::sync::Arc;

use cxr_core::backends::{FixtureBackend, ModelBackend};
use cxr_core::pipeline::{Pipeline, PipelineConfig};
use cxr_core::synth::{synth_study, FixtureBuilder, Scenario, SynthConfig, SyntheticStudy};
use cxr_service::{Service, ServiceConfig, WorkQueue};

pub struct Corpus {
    pub studies: Vec<SyntheticStudy>,
    pub fixture: String,
    pub references: String,
}

/// Small studies, one per scenario, with a replay fixture recorded through
/// the default pipeline.
pub fn corpus(scenarios: &[Scenario]) -> Corpus {
    let cfg = SynthConfig {
        width: 128,
        height: 128,
        ..SynthConfig::default()
    };
    let studies: Vec<SyntheticStudy> = scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| synth_study(&cfg, i, *s, None))
        .collect();
    let pipeline = Pipeline::new(PipelineConfig::default()).unwrap();
    let fx = FixtureBuilder::new(&pipeline).build(&studies).unwrap();
    Corpus {
        studies,
        fixture: fx.fixture_ndjson(),
        references: fx.references_ndjson(),
    }
}

pub fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        data_dir: dir.to_path_buf(),
        workers: 1,
        ..ServiceConfig::default()
    }
}

pub fn open(cfg: ServiceConfig, fixture: &str) -> (Arc<Service>, WorkQueue) {
    let backend: Arc<dyn ModelBackend> = Arc::new(FixtureBackend::from_ndjson("fixture", fixture).unwrap());
    Service::with_backend(cfg, backend).unwrap()
}
