use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use placerec::synth::{generate_synthetic, SynthConfig};
use placerec::vocabulary::{
    build_tree, encode_vocabulary, load_vocab, planted_vocabulary, save_vocab, train_incremental_detailed,
    TrainParams, VisualWord, Vocabulary,
};

fn random_words(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<VisualWord> {
    (0..n)
        .map(|i| VisualWord {
            word_id: i as u32,
            centroid: (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
            idf: 1.0,
            member_count: 1,
        })
        .collect()
}

fn brute_force_leaf(v: &Vocabulary, d: &[f32]) -> u32 {
    (0..v.num_words() as u32)
        .map(|w| {
            let dist: f64 = v.word_centroid(w).iter().zip(d).map(|(a, b)| ((a - b) as f64).powi(2)).sum();
            (w, dist)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(w, _)| w)
        .unwrap()
}

fn small_synth(seed: u64) -> SynthConfig {
    SynthConfig {
        num_frames: 60,
        train_frames: 30,
        descriptors_per_frame: 60,
        num_clusters: 300,
        num_revisits: 2,
        num_aliases: 1,
        min_pair_gap: 20,
        num_queries: 4,
        seed,
        ..SynthConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn descent_picks_the_closest_child(seed in 0u64..10_000, n in 2usize..300, k in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = build_tree(&random_words(&mut rng, n, 6), k, 6, seed).unwrap();
        for _ in 0..50 {
            let d: Vec<f32> = (0..6).map(|_| rng.random_range(-1.5f32..1.5)).collect();
            let (word, trace) = vocab.quantize_traced(&d).unwrap();
            prop_assert!(!trace.is_empty());
            for step in &trace {
                let node = vocab.nodes()[step.node as usize];
                let chosen = (step.chosen - node.first_child) as usize;
                prop_assert!(step.child_distances.iter().all(|&x| step.child_distances[chosen] <= x));
            }
            prop_assert_eq!(vocab.word_node(word), trace.last().unwrap().chosen);
        }
    }

    #[test]
    fn planted_greedy_equals_brute_force(seed in 0u64..10_000) {
        let (dim, sep) = (16, 1.0);
        let vocab = planted_vocabulary(4, 3, dim, sep, 5.0, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let sigma = sep / 5.0 / (dim as f64).sqrt();
        for _ in 0..200 {
            let w = rng.random_range(0..vocab.num_words() as u32);
            let d: Vec<f32> = vocab
                .word_centroid(w)
                .iter()
                .map(|&c| c + (rng.sample::<f64, _>(StandardNormal) * sigma) as f32)
                .collect();
            prop_assert_eq!(vocab.quantize(&d).unwrap(), brute_force_leaf(&vocab, &d));
        }
    }
}

#[test]
fn training_is_deterministic_and_centroids_are_member_means() {
    let ds = generate_synthetic(&small_synth(3)).unwrap();
    let frames: Vec<_> = ds.train.iter().map(|f| f.frame.clone()).collect();
    let params = TrainParams { seed: 11, ..TrainParams::default() };
    let a = train_incremental_detailed(&frames, &params).unwrap();
    let b = train_incremental_detailed(&frames, &params).unwrap();
    assert_eq!(encode_vocabulary(&a.vocab).unwrap(), encode_vocabulary(&b.vocab).unwrap());

    assert_eq!(a.words.len(), a.vocab.num_words());
    for (i, (word, members)) in a.words.iter().zip(&a.members).enumerate() {
        assert_eq!(word.member_count as usize, members.len());
        let dim = frames[0].local_dim;
        let mut mean = vec![0.0f64; dim];
        for &(f, kp) in members {
            for (m, v) in mean.iter_mut().zip(frames[f as usize].descriptor(kp as usize)) {
                *m += *v as f64;
            }
        }
        for (d, m) in mean.iter().enumerate() {
            let m = m / members.len() as f64;
            assert!((word.centroid[d] as f64 - m).abs() < 1e-6, "word {i} dim {d}");
            assert!((a.vocab.word_centroid(i as u32)[d] as f64 - m).abs() < 1e-6, "word {i} dim {d}");
        }
    }
}

#[test]
fn saved_vocabulary_loads_identically() {
    let vocab = planted_vocabulary(3, 4, 8, 1.0, 4.0, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.dxv");
    save_vocab(&vocab, &path).unwrap();
    let back = load_vocab(&path).unwrap();
    assert!(back.same_structure(&vocab));
    assert_eq!(encode_vocabulary(&back).unwrap(), std::fs::read(&path).unwrap());
}
