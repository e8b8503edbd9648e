use buildnet_core::catalog::{BuildCatalog, BuildId, OWN_BUILDS};
use buildnet_core::encoder::{Dataset, GameRecord, Sample, StateVector};
use buildnet_core::policy::{apply_exclusions, select_greedy, select_probabilistic, ExclusionSet};
use buildnet_core::synth::{generate_synthetic_corpus, StochasticScriptPolicy, TwoBranch};
use buildnet_core::training::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample(features: &[(usize, f64)], action: u8) -> Sample {
    let mut s = StateVector::zeros();
    for &(i, v) in features {
        s.0[i] = v;
    }
    Sample { state: s, action }
}

fn game(id: &str, samples: Vec<Sample>) -> GameRecord {
    GameRecord { game_id: id.into(), samples }
}

proptest! {
    #[test]
    fn rank_matches_a_full_sort(scores in prop::collection::vec(0u8..6, 1..40), pick in any::<prop::sample::Index>()) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let label = pick.index(scores.len());
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let expected = order.iter().position(|&i| i == label).unwrap();
        prop_assert_eq!(rank_of(&scores, label), expected);
    }

    #[test]
    fn exclusions_keep_ratios(
        raw in prop::collection::vec(0.001f64..1.0, OWN_BUILDS),
        excluded in prop::collection::btree_set(0usize..OWN_BUILDS, 0..OWN_BUILDS - 1),
    ) {
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let set = ExclusionSet::from_ids(excluded.iter().map(|&i| BuildId(i as u16))).unwrap();
        let q = apply_exclusions(&p, &set).unwrap();
        let q = q.as_slice();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let kept: Vec<usize> = (0..OWN_BUILDS).filter(|i| !excluded.contains(i)).collect();
        for &i in &excluded {
            prop_assert_eq!(q[i], 0.0);
        }
        for w in kept.windows(2) {
            let (a, b) = (w[0], w[1]);
            let before = p[a] / p[b];
            let after = q[a] / q[b];
            prop_assert!(((after - before) / before).abs() < 1e-12);
        }
    }
}

#[test]
fn greedy_takes_lowest_index_on_ties() {
    let mut p = vec![0.0; OWN_BUILDS];
    p[4] = 0.3;
    p[9] = 0.3;
    p[1] = 0.2;
    p[20] = 0.2;
    assert_eq!(select_greedy(&p), BuildId(4));
}

#[test]
fn probabilistic_sampling_matches_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 10_000;
    let hits = (0..n).filter(|_| select_probabilistic(&[0.5, 0.5], &mut rng) == BuildId(0)).count() as f64;
    let sigma = (n as f64 * 0.25).sqrt();
    assert!((hits - 5000.0).abs() <= 3.0 * sigma, "{hits} of {n}");
}

#[test]
fn random_scorer_sits_near_the_analytic_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<Sample> = (0..20_000).map(|_| sample(&[], rng.gen_range(0..OWN_BUILDS as u8))).collect();
    let d = Dataset { games: vec![game("g", samples)] };
    let m = evaluate_topk(&mut RandomScorer::new(5), &d, &STANDARD_KS);
    for k in STANDARD_KS {
        let p = 1.0 - k as f64 / 58.0;
        let sigma = (p * (1.0 - p) / 20_000.0).sqrt();
        assert!((m.error(k).unwrap() - p).abs() <= 3.0 * sigma, "k={k}");
    }
}

#[test]
fn two_branch_frequencies_follow_the_prior() {
    let c = BuildCatalog::default_pvt();
    let (probe, pylon) = (c.worker(), c.build_id("pylon").unwrap());
    let g = StochasticScriptPolicy::TwoBranch(TwoBranch {
        p_first: 0.7,
        first: vec![(0, probe), (200, pylon)],
        second: vec![(0, pylon), (200, probe)],
    });
    let logs = generate_synthetic_corpus(&g, 1000, 12, &c);
    let first = logs.iter().filter(|l| l.events[0].kind == buildnet_core::EventKind::Produced(probe)).count() as f64;
    let sigma = (1000.0f64 * 0.7 * 0.3).sqrt();
    assert!((first - 700.0).abs() <= 3.0 * sigma, "{first}");
}

#[test]
fn synthetic_corpus_is_seed_deterministic() {
    let c = BuildCatalog::default_pvt();
    let g = StochasticScriptPolicy::Reactive(Default::default());
    assert_eq!(generate_synthetic_corpus(&g, 5, 1, &c), generate_synthetic_corpus(&g, 5, 1, &c));
    assert_ne!(generate_synthetic_corpus(&g, 5, 1, &c), generate_synthetic_corpus(&g, 5, 2, &c));
}

fn separable(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let games = (0..n)
        .map(|g| {
            let samples = (0..10)
                .map(|_| {
                    let on = rng.gen_bool(0.5);
                    sample(&[(0, if on { 1.0 } else { 0.0 }), (5, rng.gen())], if on { 3 } else { 7 })
                })
                .collect();
            game(&format!("g{g}"), samples)
        })
        .collect();
    Dataset { games }
}

#[test]
fn learns_a_separable_toy_problem() {
    let d = separable(40, 3);
    let (train_set, test_set) = split_dataset(&d, 0.75).unwrap();
    let config = TrainConfig { epochs: 30, batch_size: 10, learning_rate: 1e-3, ..TrainConfig::default() };
    let out = train(&train_set, &config).unwrap();
    let m = evaluate_topk(&mut NetworkScorer::new(&out.network, config.mask), &test_set, &[1, 3]);
    assert_eq!(m.error(1), Some(0.0));
    assert!(out.history.last().unwrap().mean_loss < out.history[0].mean_loss);
}

#[test]
fn training_is_seed_deterministic() {
    let d = separable(10, 4);
    let config = TrainConfig { epochs: 3, batch_size: 7, ..TrainConfig::default() };
    let a = train(&d, &config).unwrap();
    let b = train(&d, &config).unwrap();
    assert_eq!(a.network, b.network);
    let c = train(&d, &TrainConfig { seed: 1, ..config }).unwrap();
    assert_ne!(a.network, c.network);
}

#[test]
fn split_falls_on_the_nearest_game_boundary() {
    let sizes = [3, 5, 2, 10];
    let d = Dataset {
        games: sizes.iter().enumerate().map(|(i, &n)| game(&format!("g{i}"), vec![sample(&[], 0); n])).collect(),
    };
    // cumulative 3, 8, 10, 20: 0.5 * 20 = 10 lands exactly after the third game
    let (a, b) = split_dataset(&d, 0.5).unwrap();
    assert_eq!((a.games.len(), b.games.len()), (3, 1));
    assert_eq!(a.pair_count() + b.pair_count(), 20);
}

#[test]
fn most_frequent_baseline_counts_from_the_training_set() {
    let train_set = Dataset { games: vec![game("t", [2u8, 2, 2, 5].iter().map(|&a| sample(&[], a)).collect())] };
    let test_set = Dataset { games: vec![game("e", [2u8, 2, 5, 5, 9].iter().map(|&a| sample(&[], a)).collect())] };
    let m = baseline_most_frequent(&train_set, &test_set, &[1, 3], BaselineMode::SingleClass);
    assert!((m.error(1).unwrap() - 0.6).abs() < 1e-12);
    assert!((m.error(3).unwrap() - 0.6).abs() < 1e-12);
    let r = baseline_most_frequent(&train_set, &test_set, &[1, 3], BaselineMode::RankByFrequency);
    assert!((r.error(3).unwrap() - 0.2).abs() < 1e-12);
}
