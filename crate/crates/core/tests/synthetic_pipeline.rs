mod common;

use std::collections::BTreeMap;
use std::path::Path;

use placerec::database::global_distance;
use placerec::eval::{run_reloc_eval, success_rate};
use placerec::reloc::RelocConfig;
use placerec::synth::{generate_synthetic_to, LabeledFrame, SynthConfig};
use placerec::vocabulary::similarity;

use common::build;

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn same_seed_writes_identical_datasets() {
    let cfg = common::small_config(21);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic_to(&cfg, a.path()).unwrap();
    generate_synthetic_to(&cfg, b.path()).unwrap();
    let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
    assert!(ta.len() > cfg.num_frames);
    assert_eq!(ta, tb);
}

#[test]
fn default_suite_structure() {
    let f = build(&SynthConfig::default());
    let kfs = f.db.keyframes();

    // every revisit pair outscores every pair that is neither a revisit nor an alias
    let planted: Vec<(u64, u64)> = f.data.loops.iter().chain(&f.data.aliases).copied().collect();
    let min_revisit = f
        .data
        .loops
        .iter()
        .map(|&(a, b)| similarity(&kfs[a as usize].visual_vector, &kfs[b as usize].visual_vector))
        .fold(f64::INFINITY, f64::min);
    let mut max_other = 0.0f64;
    for a in 0..kfs.len() {
        for b in a + 1..kfs.len() {
            if !planted.contains(&(a as u64, b as u64)) {
                max_other = max_other.max(similarity(&kfs[a].visual_vector, &kfs[b].visual_vector));
            }
        }
    }
    assert!(min_revisit > max_other, "{min_revisit} <= {max_other}");

    for &(a, b) in &f.data.aliases {
        let (ka, kb) = (&kfs[a as usize], &kfs[b as usize]);
        assert!(similarity(&ka.visual_vector, &kb.visual_vector) > max_other);
        let d = global_distance(&ka.frame.global_descriptor, &kb.frame.global_descriptor).unwrap();
        assert!((d - 1.0).abs() < 0.05, "alias global distance {d}");
    }

    let run = |family: &[LabeledFrame]| {
        let queries: Vec<_> = family.iter().map(|q| q.frame.clone()).collect();
        let truth = family.iter().map(|q| (q.frame.frame_id, q.pose)).collect();
        run_reloc_eval(&f.db, &queries, &truth, &f.data.intrinsics, &RelocConfig::default()).unwrap()
    };
    let exact = run(&f.data.queries_exact);
    assert_eq!(success_rate(&exact), Some(1.0));
    for r in &exact {
        assert!(r.rotation_error_deg.unwrap().to_radians() < 1e-6 && r.translation_error_m.unwrap() < 1e-6);
    }
    let noisy = run(&f.data.queries_noisy);
    assert!(success_rate(&noisy).unwrap() >= 0.9);
    assert!(noisy.iter().filter(|r| r.success).all(|r| r.translation_error_m.unwrap() < 0.05));
    let disjoint = run(&f.data.queries_disjoint);
    assert_eq!(success_rate(&disjoint), Some(0.0));
}
