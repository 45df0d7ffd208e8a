#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use placerec::database::KeyframeDatabase;
use placerec::synth::{generate_synthetic, SynthConfig, SyntheticDataset};
use placerec::vocabulary::{train_incremental, TrainParams};

pub struct Fixture {
    pub data: SyntheticDataset,
    pub db: KeyframeDatabase,
}

pub fn small_config(seed: u64) -> SynthConfig {
    SynthConfig {
        num_frames: 80,
        train_frames: 40,
        descriptors_per_frame: 80,
        num_clusters: 400,
        num_revisits: 4,
        num_aliases: 2,
        min_pair_gap: 30,
        num_queries: 8,
        seed,
        ..SynthConfig::default()
    }
}

pub fn build(cfg: &SynthConfig) -> Fixture {
    let data = generate_synthetic(cfg).unwrap();
    let train: Vec<_> = data.train.iter().map(|f| f.frame.clone()).collect();
    let vocab = Arc::new(train_incremental(&train, &TrainParams::default()).unwrap());
    let mut db = KeyframeDatabase::new(vocab);
    for f in &data.sequence {
        db.add_keyframe(f.frame.clone(), f.pose).unwrap();
    }
    Fixture { data, db }
}

/// Shared small dataset with its database.
pub fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| build(&small_config(5)))
}
