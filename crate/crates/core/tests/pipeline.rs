mod common;

use seizure_core::bayes::Member;
use seizure_core::eval::{
    evaluate_combo, evaluate_recording, make_folds, sweep_single, write_fold_csv,
    write_heatmap_csv, Backend, EvalConfig, Sampling, WindowedDataset,
};
use seizure_core::features::FeatureKind;
use seizure_core::optimizer::{
    candidate_members, exhaustive_pairs, ga_search, write_search_log, Combo, GaConfig,
};
use seizure_core::signal::{
    alternating_schedule, apply_montage, synthesize_recording, MontageSpec, SynthesisConfig,
};
use seizure_core::Error;

use common::{network, network_plant, planted, NETWORK_FEATURES, NOISE_CHANNELS, PLANTED_CHANNEL};

fn energy(c: usize) -> Member {
    Member::new(FeatureKind::EnergyMean, c)
}

#[test]
fn planted_member_is_detected() {
    let rec = planted(1);
    let r =
        evaluate_recording(&rec, &[energy(PLANTED_CHANNEL)], 5, &EvalConfig::default()).unwrap();
    assert!(r.j_statistic >= 0.9, "J = {}", r.j_statistic);
    assert_eq!(r.confusion.total() as usize, r.predictions.len());
    assert_eq!(r.per_fold_j.len(), 5);
}

#[test]
fn noise_channels_are_near_chance() {
    let mut total = 0.0;
    let mut count = 0.0;
    for seed in 0..5 {
        let rec = planted(seed);
        for &c in &NOISE_CHANNELS {
            let r = evaluate_recording(&rec, &[energy(c)], 5, &EvalConfig::default()).unwrap();
            total += r.j_statistic;
            count += 1.0;
        }
    }
    let mean = total / count;
    assert!(mean.abs() <= 0.2, "mean noise J = {mean}");
}

#[test]
fn exact_and_stochastic_backends_agree() {
    let rec = planted(2);
    let combo = [
        energy(0),
        Member::new(FeatureKind::HjorthMobility, 0),
        energy(1),
    ];
    let cfg = EvalConfig::default();
    let data = WindowedDataset::build(&rec, &combo, &cfg).unwrap();
    let plan = make_folds(data.windows(), 5, 2).unwrap();
    let exact = evaluate_combo(&data, &combo, &plan, &cfg).unwrap();
    let stochastic = evaluate_combo(
        &data,
        &combo,
        &plan,
        &EvalConfig {
            backend: Backend::Stochastic,
            seed: 11,
            ..cfg
        },
    )
    .unwrap();
    let same = exact
        .predictions
        .iter()
        .zip(&stochastic.predictions)
        .filter(|(a, b)| a == b)
        .count();
    assert!(
        same as f64 >= 0.95 * data.len() as f64,
        "{same}/{}",
        data.len()
    );
    assert_eq!(stochastic.backend, Backend::Stochastic);
}

#[test]
fn sweep_reports_every_pair_and_its_maxima() {
    let rec = planted(3);
    let cfg = EvalConfig::default();
    let members = candidate_members(&FeatureKind::ALL, &[0, 1, 2, 3]);
    let data = WindowedDataset::build(&rec, &members, &cfg).unwrap();
    let plan = make_folds(data.windows(), 5, 3).unwrap();
    let sweep = sweep_single(&data, &FeatureKind::ALL, &[0, 1, 2, 3], &plan, &cfg).unwrap();
    assert_eq!(sweep.reports.len(), 24);
    for best in &sweep.best_per_feature {
        for c in 0..4 {
            assert!(best.j_statistic >= sweep.get(best.feature, c).unwrap().j_statistic);
        }
    }
    let energy_best = sweep
        .best_per_feature
        .iter()
        .find(|b| b.feature == FeatureKind::EnergyMean)
        .unwrap();
    assert_eq!(energy_best.channel, PLANTED_CHANNEL);

    let dir = tempfile::tempdir().unwrap();
    let folds = dir.path().join("folds.csv");
    write_fold_csv(&folds, &sweep.reports).unwrap();
    let text = std::fs::read_to_string(&folds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "feature,channel,fold,J,tp,fp,tn,fn");
    assert_eq!(lines.count(), 24 * 6);
    let heat = dir.path().join("heat.csv");
    write_heatmap_csv(&heat, &sweep, data.channel_names()).unwrap();
    let text = std::fs::read_to_string(&heat).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("feature,ch0,ch1,ch2,ch3"));
}

#[test]
fn full_montage_sweep_has_132_reports() {
    let cfg = SynthesisConfig {
        duration_s: 240.0,
        schedule: alternating_schedule(60.0, 4),
        ..SynthesisConfig::ten_twenty()
    };
    let rec = apply_montage(&synthesize_recording(&cfg, 4).unwrap(), &MontageSpec::tcp()).unwrap();
    assert_eq!(rec.channel_count(), 22);
    let channels: Vec<usize> = (0..22).collect();
    let eval = EvalConfig {
        sampling: Sampling::Windowed,
        ..EvalConfig::default()
    };
    let members = candidate_members(&FeatureKind::ALL, &channels);
    let data = WindowedDataset::build(&rec, &members, &eval).unwrap();
    let plan = make_folds(data.windows(), 5, 4).unwrap();
    let sweep = sweep_single(&data, &FeatureKind::ALL, &channels, &plan, &eval).unwrap();
    assert_eq!(sweep.reports.len(), 132);
}

#[test]
fn lut_compression_costs_little_accuracy() {
    let rec = planted(5);
    let combo = [energy(0)];
    let full = evaluate_recording(&rec, &combo, 5, &EvalConfig::default()).unwrap();
    let coarse = EvalConfig {
        lut_levels: Some(8),
        ..EvalConfig::default()
    };
    let small = evaluate_recording(&rec, &combo, 5, &coarse).unwrap();
    assert!(
        full.j_statistic - small.j_statistic <= 0.05,
        "{} -> {}",
        full.j_statistic,
        small.j_statistic
    );
}

#[test]
fn evaluation_is_deterministic() {
    let rec = planted(6);
    let cfg = EvalConfig {
        backend: Backend::Stochastic,
        seed: 5,
        ..EvalConfig::default()
    };
    let combo = [energy(0), energy(2)];
    let a = evaluate_recording(&rec, &combo, 5, &cfg).unwrap();
    let b = evaluate_recording(&rec, &combo, 5, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    assert_eq!(a.predictions, b.predictions);
}

#[test]
fn too_little_training_data_is_reported() {
    let rec = planted(7);
    let cfg = EvalConfig {
        min_bin_count: 1000,
        ..EvalConfig::default()
    };
    let err = evaluate_recording(&rec, &[energy(0)], 5, &cfg).unwrap_err();
    assert!(matches!(err, Error::InsufficientData(_)), "{err}");
    assert!(err.is_insufficient_data());
}

#[test]
fn exhaustive_pairs_are_ranked() {
    let rec = planted(8);
    let cfg = EvalConfig::default();
    let channels = [0, 1, 2, 3];
    let members = candidate_members(&FeatureKind::ALL, &channels);
    let data = WindowedDataset::build(&rec, &members, &cfg).unwrap();
    let plan = make_folds(data.windows(), 5, 8).unwrap();
    let pairs = exhaustive_pairs(&data, &FeatureKind::ALL, &channels, &plan, &cfg).unwrap();
    assert_eq!(pairs.len(), 276);
    for w in pairs.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        assert!(
            a.1.j_statistic > b.1.j_statistic || (a.1.j_statistic == b.1.j_statistic && a.0 < b.0)
        );
    }
    let sweep = sweep_single(&data, &FeatureKind::ALL, &channels, &plan, &cfg).unwrap();
    let best_single = sweep.best().unwrap().j_statistic;
    assert!(pairs[0].1.j_statistic >= best_single - 0.02);
}

fn network_setup(seed: u64) -> (WindowedDataset, seizure_core::eval::CvPlan) {
    let rec = network(100 + seed);
    let members = candidate_members(&NETWORK_FEATURES, &(0..8).collect::<Vec<_>>());
    let data = WindowedDataset::build(&rec, &members, &EvalConfig::default()).unwrap();
    let plan = make_folds(data.windows(), 5, seed).unwrap();
    (data, plan)
}

#[test]
fn ga_recovers_planted_members_from_an_uninformative_seed() {
    let (data, plan) = network_setup(0);
    let channels: Vec<usize> = (0..8).collect();
    let ga = GaConfig {
        combo_size: 3,
        seed: 9,
        ..GaConfig::default()
    };
    let start = Combo::new(vec![Member::new(FeatureKind::Mean, 0)]).unwrap();
    let out = ga_search(
        &data,
        &NETWORK_FEATURES,
        &channels,
        &plan,
        &EvalConfig::default(),
        &ga,
        &start,
    )
    .unwrap();
    assert_eq!(out.best, Combo::new(network_plant()).unwrap());
    assert_eq!(out.history.len(), ga.generations + 1);
    assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(out.report.fitness(), *out.history.last().unwrap());
    assert_eq!(out.stochastic_report.backend, Backend::Stochastic);

    let mut seen: Vec<&Vec<String>> = out.log.iter().map(|r| &r.members).collect();
    let total = seen.len();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), total, "a combination was evaluated twice");

    let again = ga_search(
        &data,
        &NETWORK_FEATURES,
        &channels,
        &plan,
        &EvalConfig::default(),
        &ga,
        &start,
    )
    .unwrap();
    assert_eq!(again.log, out.log);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.jsonl");
    write_search_log(&path, &out.log).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap().lines().count(),
        out.log.len()
    );
}

#[test]
fn larger_ga_combos_do_not_lose_to_the_best_pair() {
    let (data, plan) = network_setup(1);
    let channels: Vec<usize> = (0..8).collect();
    let cfg = EvalConfig::default();
    let pairs = exhaustive_pairs(&data, &NETWORK_FEATURES, &channels, &plan, &cfg).unwrap();
    let ga = GaConfig {
        combo_size: 4,
        seed: 1,
        ..GaConfig::default()
    };
    let out = ga_search(
        &data,
        &NETWORK_FEATURES,
        &channels,
        &plan,
        &cfg,
        &ga,
        &pairs[0].0,
    )
    .unwrap();
    assert!(out.report.j_statistic >= pairs[0].1.j_statistic - 0.02);
}

#[test]
fn degenerate_ga_returns_the_padded_seed() {
    let (data, plan) = network_setup(2);
    let channels: Vec<usize> = (0..8).collect();
    let ga = GaConfig {
        population: 1,
        generations: 4,
        mutation_rate: 0.0,
        elitism: 0,
        combo_size: 3,
        seed: 4,
    };
    let start = Combo::new(vec![energy(2)]).unwrap();
    let run = || {
        ga_search(
            &data,
            &NETWORK_FEATURES,
            &channels,
            &plan,
            &EvalConfig::default(),
            &ga,
            &start,
        )
        .unwrap()
    };
    let a = run();
    assert!(a.best.contains(&energy(2)));
    assert_eq!(a.best.len(), 3);
    assert_eq!(a.log.len(), 1);
    assert_eq!(a.best, run().best);
}

#[test]
fn ga_rejects_impossible_sizes() {
    let (data, plan) = network_setup(3);
    let cfg = EvalConfig::default();
    let seed_pair = Combo::new(vec![energy(1), energy(4)]).unwrap();
    let too_big = GaConfig {
        combo_size: 3,
        ..GaConfig::default()
    };
    let err = ga_search(
        &data,
        &[FeatureKind::EnergyMean],
        &[1],
        &plan,
        &cfg,
        &too_big,
        &seed_pair,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Combo(_)));
    let not_larger = GaConfig {
        combo_size: 2,
        ..GaConfig::default()
    };
    let err = ga_search(
        &data,
        &NETWORK_FEATURES,
        &[1, 4],
        &plan,
        &cfg,
        &not_larger,
        &seed_pair,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Combo(_)));
}
