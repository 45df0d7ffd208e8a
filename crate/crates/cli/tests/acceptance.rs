//! Acceptance checks for the toolkit. Each check prints one PASS/FAIL line
//! with its measured runtime against its budget; the test fails if any
//! check fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use placerec::database::KeyframeDatabase;
use placerec::eval::{best_precision_at_recall, run_lcd_eval, run_reloc_eval, success_rate, LcdEvalConfig, LcdMode};
use placerec::features::{CameraIntrinsics, FrameFeatures, Keypoint};
use placerec::geometry::{
    exp_so3, project, ransac_pnp, refine_pose_traced, residual_jacobian, Correspondence, Pose, RansacParams,
};
use placerec::matching::{match_adjacent, MatchParams};
use placerec::reloc::{relocalize, RelocConfig};
use placerec::synth::{generate_synthetic, planted_split_scene, SynthConfig, SyntheticDataset};
use placerec::vocabulary::{
    decode_vocabulary, encode_vocabulary, load_vocab, planted_vocabulary, save_vocab, similarity,
    synthetic_vocabulary, train_incremental, train_incremental_detailed, TrainParams, VisualVector, Vocabulary,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_sparse(rng: &mut ChaCha8Rng, words: u32, max_len: usize) -> VisualVector {
    let n = rng.random_range(1..=max_len);
    VisualVector::from_weights((0..n).map(|_| (rng.random_range(0..words), rng.random_range(1e-3..1.0)))).unwrap()
}

fn similarity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vs: Vec<VisualVector> = (0..1000).map(|_| random_sparse(&mut rng, 300, 60)).collect();
    let mut worst_self = 0.0f64;
    let mut worst_identity = 0.0f64;
    for (i, a) in vs.iter().enumerate() {
        worst_self = worst_self.max((similarity(a, a) - 2.0).abs());
        let b = &vs[(i * 7 + 3) % vs.len()];
        check(similarity(a, b) == similarity(b, a), || format!("asymmetric pair {i}"))?;
        let mut dense = vec![(0.0f64, 0.0f64); 300];
        a.entries().iter().for_each(|&(w, v)| dense[w as usize].0 = v);
        b.entries().iter().for_each(|&(w, v)| dense[w as usize].1 = v);
        let twice_min = 2.0 * dense.iter().map(|(x, y)| x.min(*y)).sum::<f64>();
        worst_identity = worst_identity.max((similarity(a, b) - twice_min).abs());
        let shifted = VisualVector::from_weights(b.entries().iter().map(|&(w, v)| (w + 300, v))).unwrap();
        check(similarity(a, &shifted) == 0.0, || format!("disjoint pair {i} scored non-zero"))?;
    }
    check(worst_self <= 1e-9, || format!("self similarity off by {worst_self:e}"))?;
    check(worst_identity <= 1e-12, || format!("2*sum(min) identity off by {worst_identity:e}"))?;
    Ok(format!("max |s(v,v)-2| {worst_self:.1e}, max identity gap {worst_identity:.1e}"))
}

fn random_frame(rng: &mut ChaCha8Rng, id: u64, dim: usize, max_kp: usize) -> FrameFeatures {
    let n = rng.random_range(0..=max_kp);
    FrameFeatures {
        frame_id: id,
        keypoints: (0..n).map(|i| Keypoint::new(i as f32, 0.0, 1.0)).collect(),
        local_dim: dim,
        local_descriptors: (0..n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
        global_descriptor: vec![1.0],
        points3d: None,
    }
}

fn retrieval_oracle() -> Outcome {
    let dim = 8;
    let mut compared = 0usize;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + case);
        let (n, words) = if case < 5 {
            (1000, 5000)
        } else {
            (rng.random_range(1..=1000), rng.random_range(2..=5000))
        };
        let vocab = Arc::new(synthetic_vocabulary(words, rng.random_range(2..=10), dim, case).unwrap());
        let mut db = KeyframeDatabase::new(Arc::clone(&vocab));
        for i in 0..n {
            db.add_keyframe(random_frame(&mut rng, i as u64, dim, 24), Pose::identity()).unwrap();
        }
        let mut scratch = vec![0.0f64; words];
        for _ in 0..2 {
            let q = db.prepare_keyframe(random_frame(&mut rng, 0, dim, 40), Pose::identity()).unwrap().visual_vector;
            let k = rng.random_range(1..=50);
            let mut qd = vec![0.0f64; words];
            q.entries().iter().for_each(|&(w, v)| qd[w as usize] = v);
            // dense evaluation over the full word range
            let mut dense: Vec<(u32, f64)> = Vec::new();
            for kf in db.keyframes().iter().filter(|kf| !kf.visual_vector.is_empty()) {
                kf.visual_vector.entries().iter().for_each(|&(w, v)| scratch[w as usize] = v);
                let s: f64 = qd.iter().zip(&scratch).map(|(a, b)| a.abs() + b.abs() - (a - b).abs()).sum();
                kf.visual_vector.entries().iter().for_each(|&(w, _)| scratch[w as usize] = 0.0);
                dense.push((kf.keyframe_id, s));
            }
            dense.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            dense.truncate(if q.is_empty() { 0 } else { k });
            let got = db.query_topk(&q, k, 0..0);
            check(got.len() == dense.len(), || format!("case {case}: {} results, oracle {}", got.len(), dense.len()))?;
            for (g, d) in got.iter().zip(&dense) {
                check(g.0 == d.0, || format!("case {case}: order differs ({} vs {})", g.0, d.0))?;
                check((g.1 - d.1).abs() <= 1e-9, || format!("case {case}: score {} vs {}", g.1, d.1))?;
            }
            compared += got.len();
        }
    }
    Ok(format!("100 databases, {compared} ranked entries identical"))
}

fn brute_force_leaf(v: &Vocabulary, d: &[f32]) -> u32 {
    let mut best = (0u32, f64::INFINITY);
    for w in 0..v.num_words() as u32 {
        let dist: f64 = v.word_centroid(w).iter().zip(d).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
        if dist < best.1 {
            best = (w, dist);
        }
    }
    best.0
}

fn quantization_oracle() -> Outcome {
    let (dim, separation) = (32, 1.0);
    // noise norm is a fifth of the closest leaf spacing
    let sigma = separation / 5.0 / (dim as f64).sqrt();
    let mut agree = 0;
    let mut steps = 0;
    for (i, seed) in (0..4u64).enumerate() {
        let vocab = planted_vocabulary(8, 3, dim, separation, 5.0, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        for _ in 0..2500 {
            let w = rng.random_range(0..vocab.num_words() as u32);
            let d: Vec<f32> = vocab
                .word_centroid(w)
                .iter()
                .map(|&c| c + (rng.sample::<f64, _>(StandardNormal) * sigma) as f32)
                .collect();
            let (greedy, trace) = vocab.quantize_traced(&d).unwrap();
            for step in &trace {
                let first = vocab.nodes()[step.node as usize].first_child;
                let chosen = step.child_distances[(step.chosen - first) as usize];
                check(step.child_distances.iter().all(|&x| chosen <= x), || format!("vocab {i}: non-argmin step"))?;
                steps += 1;
            }
            agree += (greedy == brute_force_leaf(&vocab, &d)) as usize;
        }
    }
    check(agree == 10_000, || format!("greedy agreed with brute force on {agree}/10000"))?;
    Ok(format!("10000/10000 agree, {steps} descent steps argmin"))
}

fn frame_from_rows(id: u64, rows: &[Vec<f32>]) -> FrameFeatures {
    FrameFeatures {
        frame_id: id,
        keypoints: (0..rows.len()).map(|i| Keypoint::new(i as f32, 0.0, 1.0 - i as f32 / 1000.0)).collect(),
        local_dim: rows[0].len(),
        local_descriptors: rows.concat(),
        global_descriptor: vec![1.0],
        points3d: None,
    }
}

fn training_mechanics(data: &SyntheticDataset) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dim = 16;
    let rows: Vec<Vec<f32>> = (0..50).map(|_| (0..dim).map(|_| rng.random_range(-5.0f32..5.0)).collect()).collect();
    let frame = frame_from_rows(0, &rows);
    let twin = FrameFeatures { frame_id: 1, ..frame.clone() };
    let out = train_incremental_detailed(&[frame, twin], &TrainParams::default()).unwrap();
    check(out.words.len() == 50 && out.words.iter().all(|w| w.member_count == 2), || {
        format!("identical frames gave {} words", out.words.len())
    })?;

    let rows: Vec<Vec<f32>> = (0..400).map(|_| (0..dim).map(|_| rng.random_range(-5.0f32..5.0)).collect()).collect();
    let noisy: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|v| v + rng.random_range(-1e-3f32..1e-3)).collect()).collect();
    let (a, b) = (frame_from_rows(0, &rows), frame_from_rows(1, &noisy));
    let kept = match_adjacent(&a, &b, &MatchParams::default()).unwrap().len();
    let all = match_adjacent(&a, &b, &MatchParams { max_pairs_kept: 1000, ..MatchParams::default() }).unwrap().len();
    check(kept == 300 && all == 400, || format!("cap kept {kept} of {all} matches"))?;
    let out = train_incremental_detailed(&[a, b], &TrainParams::default()).unwrap();
    let shared = out.words.iter().filter(|w| w.member_count == 2).count();
    check(shared == 300 && out.words.len() == 500, || format!("{shared} shared of {} words", out.words.len()))?;

    let train: Vec<_> = data.train.iter().map(|f| f.frame.clone()).collect();
    let params = TrainParams { seed: 7, ..TrainParams::default() };
    let vocab = train_incremental(&train, &params).unwrap();
    let again = train_incremental(&train, &params).unwrap();
    check(encode_vocabulary(&vocab).unwrap() == encode_vocabulary(&again).unwrap(), || "training not deterministic".into())?;

    let rate = |vocab: &Vocabulary, frames: &[FrameFeatures]| {
        let (mut same, mut total) = (0usize, 0usize);
        for pair in frames.windows(2) {
            for m in match_adjacent(&pair[0], &pair[1], &MatchParams::default()).unwrap() {
                let wa = vocab.quantize(pair[0].descriptor(m.query as usize)).unwrap();
                let wb = vocab.quantize(pair[1].descriptor(m.train as usize)).unwrap();
                same += (wa == wb) as usize;
                total += 1;
            }
        }
        (same as f64 / total as f64, total)
    };
    let (trained, total) = rate(&vocab, &train);
    check(trained >= 0.95, || format!("adjacent training matches share a word at rate {trained:.4}"))?;
    let held_out: Vec<_> = data.sequence.iter().map(|f| f.frame.clone()).collect();
    let merged = train_incremental(&train, &TrainParams { merge_epsilon: Some(2.0), ..params }).unwrap();
    Ok(format!(
        "cap 300/400, same-word rate {trained:.4} over {total} training matches (held-out {:.3}, {:.3} with merge)",
        rate(&vocab, &held_out).0,
        rate(&merged, &held_out).0
    ))
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let w = Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
    let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Pose::from_axis_angle(w, t)
}

fn planted_scene(rng: &mut ChaCha8Rng, pose: &Pose, n: usize, noise_px: f64, k: &CameraIntrinsics) -> Vec<Correspondence> {
    let inv = pose.inverse();
    (0..n)
        .map(|_| {
            let cam = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5), rng.random_range(3.0..8.0));
            let world = inv.transform(&cam);
            let noise = Vector2::new(rng.random_range(-noise_px..=noise_px), rng.random_range(-noise_px..=noise_px));
            Correspondence::new(world, project(&world, pose, k).unwrap() + noise)
        })
        .collect()
}

fn geometry_suite() -> Outcome {
    let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_r, mut worst_t) = (0.0f64, 0.0f64);
    for scene in 0..100u64 {
        let truth = random_pose(&mut rng);
        let corrs = planted_scene(&mut rng, &truth, 50, 0.0, &k);
        let out = ransac_pnp(&corrs, &k, &RansacParams { seed: scene, ..RansacParams::default() })
            .map_err(|e| format!("noiseless scene {scene}: {e}"))?;
        worst_r = worst_r.max(out.pose.rotation_error(&truth));
        worst_t = worst_t.max(out.pose.translation_error(&truth));
    }
    check(worst_r < 1e-6 && worst_t < 1e-6, || format!("noiseless errors {worst_r:e} rad, {worst_t:e} m"))?;

    let (mut worst_deg, mut worst_jaccard) = (0.0f64, 1.0f64);
    for scene in 0..100u64 {
        let truth = random_pose(&mut rng);
        let mut corrs = planted_scene(&mut rng, &truth, 100, 1.0, &k);
        for c in corrs.iter_mut().skip(70) {
            c.pixel = Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        }
        let out = ransac_pnp(&corrs, &k, &RansacParams { seed: scene, ..RansacParams::default() })
            .map_err(|e| format!("outlier scene {scene}: {e}"))?;
        let found: BTreeSet<usize> = out.inliers.iter().copied().collect();
        let planted: BTreeSet<usize> = (0..70).collect();
        let jaccard = found.intersection(&planted).count() as f64 / found.union(&planted).count() as f64;
        worst_jaccard = worst_jaccard.min(jaccard);
        worst_deg = worst_deg.max(out.pose.rotation_error(&truth).to_degrees());
    }
    check(worst_deg < 0.5 && worst_jaccard >= 0.95, || {
        format!("30% outliers: rotation {worst_deg:.3} deg, Jaccard {worst_jaccard:.3}")
    })?;

    let h = 1e-6;
    let mut worst_fd = 0.0f64;
    for _ in 0..200 {
        let pose = random_pose(&mut rng);
        let c = planted_scene(&mut rng, &pose, 1, 3.0, &k)[0];
        let (_, j) = residual_jacobian(&pose, &c, &k).unwrap();
        for col in 0..6 {
            let shifted = |s: f64| {
                let mut w = Vector3::zeros();
                let mut t = Vector3::zeros();
                if col < 3 { w[col] = s } else { t[col - 3] = s }
                let p = Pose::new(exp_so3(&w) * pose.rotation, pose.translation + t);
                project(&c.point3d, &p, &k).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let analytic = j.column(col).into_owned();
            worst_fd = worst_fd.max((fd - analytic).norm() / analytic.norm().max(1.0));
        }
    }
    check(worst_fd < 1e-4, || format!("Jacobian relative error {worst_fd:e}"))?;

    for _ in 0..100 {
        let truth = random_pose(&mut rng);
        let corrs = planted_scene(&mut rng, &truth, 40, 1.0, &k);
        let nudge = Pose::from_axis_angle(Vector3::new(0.03, -0.02, 0.01), Vector3::new(0.1, -0.05, 0.08));
        let start = Pose::new(nudge.rotation * truth.rotation, nudge.rotation * truth.translation + nudge.translation);
        let (_, trace) = refine_pose_traced(&start, &corrs, &k, 20).unwrap();
        check(trace.costs.windows(2).all(|w| w[1] <= w[0]), || "refinement cost increased".into())?;
    }
    Ok(format!(
        "noiseless {worst_r:.1e} rad / {worst_t:.1e} m, outliers {worst_deg:.3} deg Jaccard {worst_jaccard:.3}, Jacobian {worst_fd:.1e}"
    ))
}

struct Suite {
    data: SyntheticDataset,
    db: KeyframeDatabase,
}

fn default_suite() -> Suite {
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let train: Vec<_> = data.train.iter().map(|f| f.frame.clone()).collect();
    let vocab = Arc::new(train_incremental(&train, &TrainParams::default()).unwrap());
    let mut db = KeyframeDatabase::new(vocab);
    for f in &data.sequence {
        db.add_keyframe(f.frame.clone(), f.pose).unwrap();
    }
    Suite { data, db }
}

fn lcd_dominance() -> Outcome {
    let s = default_suite();
    check(s.data.loops.len() == 20 && s.data.aliases.len() == 5, || "suite does not plant 20 revisits and 5 aliases".into())?;
    let points = run_lcd_eval(&s.db, &s.data.loops, &LcdEvalConfig::default()).unwrap();
    let two = best_precision_at_recall(&points, LcdMode::TwoPhase, 0.8).unwrap_or(0.0);
    let one = best_precision_at_recall(&points, LcdMode::Phase1, 0.8).unwrap_or(0.0);
    let tf = best_precision_at_recall(&points, LcdMode::Phase1Tf, 0.8).unwrap_or(0.0);
    check(two >= 0.95, || format!("two-phase precision {two:.3} at recall >= 0.8"))?;
    check(one < two && tf < two, || format!("phase-1 precision {one:.3} / {tf:.3} not below {two:.3}"))?;
    Ok(format!("precision at recall>=0.8: two-phase {two:.3}, phase-1 {one:.3}, phase-1 raw tf {tf:.3}"))
}

fn group_matching() -> Outcome {
    let mut wins = 0;
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let s = planted_split_scene(seed, 15).unwrap();
        let grouped = relocalize(&s.db, &s.query, &s.intrinsics, &RelocConfig::default());
        let singles = relocalize(&s.db, &s.query, &s.intrinsics, &RelocConfig { group_gap: 0, ..RelocConfig::default() });
        let err = grouped.pose.map(|p| p.center_error(&s.query_pose));
        if let Some(e) = err {
            worst = worst.max(e);
        }
        wins += (err.is_some_and(|e| e < 0.05) && singles.pose.is_none()) as usize;
    }
    check(wins >= 95, || format!("grouping beat singletons on {wins}/100 seeds"))?;
    Ok(format!("{wins}/100 seeds, worst grouped error {worst:.4} m"))
}

fn disjoint_failure() -> Outcome {
    let s = default_suite();
    let family = &s.data.queries_disjoint;
    let queries: Vec<_> = family.iter().map(|q| q.frame.clone()).collect();
    let truth = family.iter().map(|q| (q.frame.frame_id, q.pose)).collect();
    let records = run_reloc_eval(&s.db, &queries, &truth, &s.data.intrinsics, &RelocConfig::default()).unwrap();
    let rate = success_rate(&records).unwrap();
    check(rate == 0.0, || format!("disjoint success rate {rate}"))?;
    check(records.iter().all(|r| r.rotation_error_deg.is_none()), || "a pose was emitted".into())?;
    for q in &queries {
        check(relocalize(&s.db, q, &s.data.intrinsics, &RelocConfig::default()).pose.is_none(), || "pose emitted".into())?;
    }
    Ok(format!("0/{} queries relocalized", records.len()))
}

fn vocabulary_serialization() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let small = planted_vocabulary(4, 3, 8, 1.0, 4.0, 1).unwrap();
    let bytes = encode_vocabulary(&small).unwrap();
    for cut in 0..bytes.len() {
        check(decode_vocabulary(&bytes[..cut]).is_err(), || format!("truncation at {cut} accepted"))?;
    }

    let big = synthetic_vocabulary(100_000, 10, 256, 9).unwrap();
    let path = dir.path().join("big.dxv");
    save_vocab(&big, &path).unwrap();
    let mut times = Vec::new();
    let mut loaded = None;
    for _ in 0..3 {
        let start = Instant::now();
        loaded = Some(load_vocab(&path).unwrap());
        times.push(start.elapsed());
    }
    times.sort();
    let median = times[1];
    let loaded = loaded.unwrap();
    let on_disk = std::fs::read(&path).unwrap();
    check(loaded.same_structure(&big) && encode_vocabulary(&loaded).unwrap() == on_disk, || "round trip not bit-exact".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..64 {
        let cut = rng.random_range(0..on_disk.len());
        check(decode_vocabulary(&on_disk[..cut]).is_err(), || format!("large truncation at {cut} accepted"))?;
    }
    check(median < Duration::from_millis(200), || format!("100k-leaf load took {median:?}"))?;
    Ok(format!("100k leaves x 256 dims, {} MB, median load {:.1} ms", on_disk.len() >> 20, median.as_secs_f64() * 1e3))
}

fn placerec(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_placerec"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
}

/// Runs the whole command-line pipeline in `root` and returns every CSV
/// with the timing column removed.
fn pipeline(root: &Path) -> Result<BTreeMap<String, String>, String> {
    let p = |rel: &str| root.join(rel).display().to_string();
    placerec(&["synth", "--out", &p("data")])?;
    placerec(&["train-vocab", "--input", &p("data/train"), "--out", &p("vocab.dxv"), "--k", "10", "--levels", "6", "--top-matches", "300", "--seed", "3"])?;
    placerec(&["build-db", "--input", &p("data/seq"), "--vocab", &p("vocab.dxv"), "--out", &p("db")])?;
    placerec(&["detect-loops", "--db", &p("db"), "--queries", &p("data/seq"), "--out", &p("pr.csv")])?;
    for family in ["exact", "noisy", "disjoint"] {
        let queries = p(&format!("data/queries_{family}"));
        placerec(&["relocalize", "--db", &p("db"), "--queries", &queries, "--out", &p(&format!("reloc_{family}.csv"))])?;
    }
    let mut csvs = BTreeMap::new();
    for name in ["pr.csv", "reloc_exact.csv", "reloc_noisy.csv", "reloc_disjoint.csv"] {
        let text = std::fs::read_to_string(root.join(name)).map_err(|e| e.to_string())?;
        let header = text.lines().next().unwrap_or("");
        let timed = header.split(',').position(|c| c == "time_ms");
        let kept: Vec<String> = text
            .lines()
            .map(|l| match timed {
                Some(t) => l.split(',').enumerate().filter(|(i, _)| *i != t).map(|(_, c)| c).collect::<Vec<_>>().join(","),
                None => l.to_string(),
            })
            .collect();
        csvs.insert(name.to_string(), kept.join("\n"));
    }
    Ok(csvs)
}

fn end_to_end_determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    for (name, text) in &first {
        check(second.get(name) == Some(text), || format!("{name} differs between runs"))?;
    }
    let rows: usize = first.values().map(|t| t.lines().count()).sum();
    Ok(format!("{} CSVs, {rows} rows identical", first.len()))
}

fn run(id: u32, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let took = start.elapsed();
    let in_time = budget.is_none_or(|b| took < b);
    let pass = result.is_ok() && in_time;
    let limit = budget.map_or(String::new(), |b| format!(" < {:.0} s", b.as_secs_f64()));
    let detail = match &result {
        Ok(d) if in_time => d.clone(),
        Ok(d) => format!("{d}; over time budget"),
        Err(e) => e.clone(),
    };
    println!("criterion {id:>2}: {} [{:.2} s{limit}] {detail}", if pass { "PASS" } else { "FAIL" }, took.as_secs_f64());
    pass
}

#[test]
fn acceptance() {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let mut passed = Vec::new();
    passed.push(run(1, secs(1), similarity_suite));
    passed.push(run(2, secs(30), retrieval_oracle));
    passed.push(run(3, secs(10), quantization_oracle));
    passed.push(run(4, secs(60), || {
        let data = generate_synthetic(&SynthConfig::default()).unwrap();
        training_mechanics(&data)
    }));
    passed.push(run(5, secs(60), geometry_suite));
    passed.push(run(6, secs(60), lcd_dominance));
    passed.push(run(7, secs(60), group_matching));
    passed.push(run(8, None, disjoint_failure));
    passed.push(run(9, None, vocabulary_serialization));
    passed.push(run(10, None, end_to_end_determinism));
    let failed: Vec<usize> = passed.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
