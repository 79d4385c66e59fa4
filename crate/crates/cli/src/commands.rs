use anyhow::Context;
use seizure_core::bayes::Member;
use seizure_core::eval::{
    evaluate_combo, make_folds, sweep_single, write_fold_csv, write_heatmap_csv, Backend, Sampling,
    WindowedDataset,
};
use seizure_core::features::{evaluate_streaming, FeatureConfig, FeatureKind};
use seizure_core::optimizer::{candidate_members, exhaustive_pairs, ga_search, write_search_log};
use seizure_core::power::{evaluate_scenario, FeaturePower, Scenario};
use seizure_core::signal::{
    apply_montage, extract_windows, labels_path, load_recording, read_labels, synthesize_recording,
    write_csv, write_edf, write_labels, Format, MontageSpec, SignalRecording, SynthesisConfig,
};
use seizure_core::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::RunDir;
use crate::{
    Cli, Command, EvalArgs, FeaturePowerArg, FeaturesArgs, FormatArg, IngestArgs, InputArgs,
    MontageArg, OptimizeArgs, PowerArgs, Preset, SelectionArgs, SynthArgs,
};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(b) = cli.backend {
        cfg.eval.backend = b;
    }
    let timestamp = !cli.no_timestamp;
    match cli.command {
        Command::Synth(a) => synth(&a, cfg, RunDir::create(&cli.out, "synth", timestamp)?),
        Command::Ingest(a) => ingest(&a, cfg, RunDir::create(&cli.out, "ingest", timestamp)?),
        Command::Features(a) => features(&a, cfg, RunDir::create(&cli.out, "features", timestamp)?),
        Command::Eval(a) => eval(&a, cfg, RunDir::create(&cli.out, "eval", timestamp)?),
        Command::Optimize(a) => optimize(&a, cfg, RunDir::create(&cli.out, "optimize", timestamp)?),
        Command::Power(a) => power(&a, cfg, RunDir::create(&cli.out, "power", timestamp)?),
    }
}

fn load_input(a: &InputArgs) -> anyhow::Result<SignalRecording> {
    let format = match a.format {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Edf) => Format::Edf,
        None => Format::from_path(&a.input).ok_or_else(|| {
            Error::Config(format!(
                "cannot tell the format of {}; pass --format",
                a.input.display()
            ))
        })?,
    };
    let rec = load_recording(&a.input, format)
        .with_context(|| format!("loading {}", a.input.display()))?;
    match &a.labels {
        Some(path) => {
            let labels = read_labels(path)?;
            Ok(rec.with_labels(labels)?)
        }
        None => Ok(rec),
    }
}

fn require_labels(rec: &SignalRecording, a: &InputArgs) -> Result<(), Error> {
    if rec.labels().is_empty() {
        let expected = a.labels.clone().unwrap_or_else(|| labels_path(&a.input));
        return Err(Error::InvalidRecording(format!(
            "no labels for {} (expected {})",
            a.input.display(),
            expected.display()
        )));
    }
    Ok(())
}

fn resolve_channel(rec: &SignalRecording, s: &str) -> Result<usize, Error> {
    if let Ok(i) = s.trim().parse::<usize>() {
        if i < rec.channel_count() {
            return Ok(i);
        }
        return Err(Error::Config(format!(
            "channel index {i} out of range (recording has {})",
            rec.channel_count()
        )));
    }
    rec.channel_index(s.trim())
        .ok_or_else(|| Error::Config(format!("no channel named '{s}'")))
}

fn resolve_member(rec: &SignalRecording, s: &str) -> Result<Member, Error> {
    let (f, c) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("member '{s}' is not feature:channel")))?;
    Ok(Member::new(f.trim().parse()?, resolve_channel(rec, c)?))
}

/// Feature and channel lists after applying flags over the config; the
/// config is updated to the resolved values.
fn selection(
    rec: &SignalRecording,
    sel: &SelectionArgs,
    cfg: &mut RunConfig,
) -> Result<(Vec<FeatureKind>, Vec<usize>), Error> {
    if let Some(f) = &sel.features {
        cfg.features = Some(f.clone());
    }
    if let Some(c) = &sel.channels {
        cfg.channels = Some(c.clone());
    }
    let features = cfg
        .features
        .clone()
        .unwrap_or_else(|| FeatureKind::ALL.to_vec());
    let channels = match &cfg.channels {
        Some(names) => names
            .iter()
            .map(|s| resolve_channel(rec, s))
            .collect::<Result<Vec<_>, _>>()?,
        None => (0..rec.channel_count()).collect(),
    };
    if features.is_empty() || channels.is_empty() {
        return Err(Error::Config(
            "feature and channel lists must not be empty".into(),
        ));
    }
    Ok((features, channels))
}

fn synth(a: &SynthArgs, mut cfg: RunConfig, mut out: RunDir) -> anyhow::Result<()> {
    let seed = cfg.require_seed("synth")?;
    let mut sc = match (a.preset, cfg.synth.take()) {
        (Some(Preset::TenTwenty), _) => SynthesisConfig::ten_twenty(),
        (Some(Preset::Default), _) | (None, None) => SynthesisConfig::default(),
        (None, Some(sc)) => sc,
    };
    if let Some(d) = a.duration_s {
        sc.duration_s = d;
        sc.schedule.retain(|l| l.start_s < d);
        if let Some(last) = sc.schedule.last_mut() {
            last.end_s = last.end_s.min(d);
        }
    }
    cfg.synth = Some(sc.clone());
    let rec = synthesize_recording(&sc, seed)?;
    let csv_name = format!("{}.csv", a.name);
    write_csv(&rec, &out.path(&csv_name))?;
    out.register(&csv_name)?;
    let labels_name = format!("{}.labels.json", a.name);
    write_labels(&out.path(&labels_name), rec.labels())?;
    out.register(&labels_name)?;
    if a.edf {
        let edf_name = format!("{}.edf", a.name);
        write_edf(&rec, &out.path(&edf_name))?;
        out.register(&edf_name)?;
    }
    let (ictal, inter) = rec.labeled_time_s();
    println!(
        "synthesized {} channels x {} s at {} Hz ({} s ictal, {} s interictal) -> {}",
        rec.channel_count(),
        rec.duration_s(),
        rec.sample_rate_hz(),
        ictal,
        inter,
        out.path(&csv_name).display()
    );
    out.finish(&cfg, Some(seed))
}

#[derive(Serialize)]
struct IngestSummary {
    channels: Vec<String>,
    sample_rate_hz: f64,
    duration_s: f64,
    ictal_s: f64,
    interictal_s: f64,
    windows: usize,
    meets_inclusion: bool,
}

fn ingest(a: &IngestArgs, mut cfg: RunConfig, mut out: RunDir) -> anyhow::Result<()> {
    let mut rec = load_input(&a.input)?;
    match a.montage {
        Some(MontageArg::Tcp) => cfg.montage = Some(MontageSpec::tcp()),
        Some(MontageArg::None) => cfg.montage = None,
        None => {}
    }
    if let Some(spec) = &cfg.montage {
        rec = apply_montage(&rec, spec)?;
    }
    let meets = rec.meets_inclusion(a.min_labeled_s);
    if a.require_inclusion && !meets {
        return Err(Error::InsufficientData(format!(
            "recording lacks {} s of contiguous ictal and interictal data",
            a.min_labeled_s
        ))
        .into());
    }
    write_csv(&rec, &out.path("ingested.csv"))?;
    out.register("ingested.csv")?;
    write_labels(&out.path("ingested.labels.json"), rec.labels())?;
    out.register("ingested.labels.json")?;
    let (ictal_s, interictal_s) = rec.labeled_time_s();
    let summary = IngestSummary {
        channels: rec.channels().iter().map(|c| c.name.clone()).collect(),
        sample_rate_hz: rec.sample_rate_hz(),
        duration_s: rec.duration_s(),
        ictal_s,
        interictal_s,
        windows: extract_windows(&rec, cfg.eval.window_s)?.len(),
        meets_inclusion: meets,
    };
    out.write_json("summary.json", &summary)?;
    println!(
        "{} channels, {} s, {} windows, inclusion {}",
        summary.channels.len(),
        summary.duration_s,
        summary.windows,
        if meets { "met" } else { "not met" }
    );
    out.finish(&cfg, cfg.seed)
}

fn features(a: &FeaturesArgs, mut cfg: RunConfig, mut out: RunDir) -> anyhow::Result<()> {
    let rec = load_input(&a.input)?;
    if let Some(t) = a.tau_s {
        cfg.eval.tau_s = t;
    }
    if a.windowed {
        cfg.eval.sampling = Sampling::Windowed;
    }
    let (features, channels) = selection(&rec, &a.select, &mut cfg)?;
    let members = candidate_members(&features, &channels);
    if rec.labels().is_empty() && !a.traces {
        return Err(Error::InvalidRecording(
            "recording has no labels; pass --traces for unlabeled feature traces".into(),
        )
        .into());
    }
    if !rec.labels().is_empty() {
        let data = WindowedDataset::build(&rec, &members, &cfg.eval)?;
        let mut w = csv::Writer::from_path(out.path("features.csv")).map_err(Error::from)?;
        let mut header = vec!["start_s".to_string(), "end_s".into(), "state".into()];
        header.extend(members.iter().map(Member::to_string));
        w.write_record(&header).map_err(Error::from)?;
        let columns = members
            .iter()
            .map(|&m| data.values(m))
            .collect::<Result<Vec<_>, _>>()?;
        for (i, win) in data.windows().iter().enumerate() {
            let mut row = vec![
                win.start_s.to_string(),
                win.end_s().to_string(),
                if win.state.is_ictal() {
                    "ictal"
                } else {
                    "interictal"
                }
                .to_string(),
            ];
            row.extend(columns.iter().map(|c| c[i].to_string()));
            w.write_record(&row).map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
        out.register("features.csv")?;
        println!(
            "{} windows x {} members -> features.csv",
            data.len(),
            members.len()
        );
    }
    if a.traces {
        let fc = FeatureConfig::new(cfg.eval.tau_s, rec.sample_rate_hz())?;
        for m in &members {
            let trace = evaluate_streaming(&rec.channels()[m.channel], m.channel, m.feature, &fc);
            let name = format!("trace_{}_{}.csv", m.feature, m.channel);
            trace.write_csv(&out.path(&name))?;
            out.register(&name)?;
        }
        println!("{} traces written", members.len());
    }
    out.finish(&cfg, cfg.seed)
}

fn eval(a: &EvalArgs, mut cfg: RunConfig, mut out: RunDir) -> anyhow::Result<()> {
    let rec = load_input(&a.input)?;
    require_labels(&rec, &a.input)?;
    if let Some(f) = a.folds {
        cfg.folds = f;
    }
    if let Some(l) = a.lut_levels {
        cfg.eval.lut_levels = Some(l);
    }
    if let Some(b) = a.stream_bits {
        cfg.eval.stream_bits = b;
    }
    if a.windowed {
        cfg.eval.sampling = Sampling::Windowed;
    }
    let seed = match cfg.eval.backend {
        Backend::Stochastic => cfg.require_seed("eval --backend stochastic")?,
        Backend::Exact => cfg.seed.unwrap_or(0),
    };
    cfg.seed = Some(seed);
    cfg.eval.seed = seed;
    cfg.eval.validate()?;
    if let Some(c) = &a.combo {
        cfg.combo = Some(c.clone());
    }

    if let Some(combo) = &cfg.combo {
        let members = combo
            .iter()
            .map(|s| resolve_member(&rec, s))
            .collect::<Result<Vec<_>, _>>()?;
        let data = WindowedDataset::build(&rec, &members, &cfg.eval)?;
        let plan = make_folds(data.windows(), cfg.folds, seed)?;
        let report = evaluate_combo(&data, &members, &plan, &cfg.eval)?;
        out.write_json("report.json", &report)?;
        write_fold_csv(&out.path("folds.csv"), std::slice::from_ref(&report))?;
        out.register("folds.csv")?;
        println!(
            "{} [{}]: J = {:.4} (tp {} fp {} tn {} fn {})",
            members
                .iter()
                .map(Member::to_string)
                .collect::<Vec<_>>()
                .join("+"),
            report.backend,
            report.j_statistic,
            report.confusion.tp,
            report.confusion.fp,
            report.confusion.tn,
            report.confusion.fn_
        );
    } else {
        let (features, channels) = selection(&rec, &a.select, &mut cfg)?;
        let members = candidate_members(&features, &channels);
        let data = WindowedDataset::build(&rec, &members, &cfg.eval)?;
        let plan = make_folds(data.windows(), cfg.folds, seed)?;
        let sweep = sweep_single(&data, &features, &channels, &plan, &cfg.eval)?;
        out.write_json("report.json", &sweep)?;
        write_fold_csv(&out.path("folds.csv"), &sweep.reports)?;
        out.register("folds.csv")?;
        write_heatmap_csv(&out.path("heatmap.csv"), &sweep, data.channel_names())?;
        out.register("heatmap.csv")?;
        for b in &sweep.best_per_feature {
            println!(
                "{:<16} best channel {:<10} J = {:.4}",
                b.feature.name(),
                data.channel_names()[b.channel],
                b.j_statistic
            );
        }
    }
    out.finish(&cfg, Some(seed))
}

#[derive(Serialize)]
struct RankedPair {
    combo: Vec<String>,
    j_statistic: f64,
    mean_fold_j: Option<f64>,
}

#[derive(Serialize)]
struct BestCombo<'a> {
    combo: Vec<String>,
    exact: &'a seizure_core::eval::EvaluationReport,
    stochastic: &'a seizure_core::eval::EvaluationReport,
    history: &'a [f64],
    evaluations: usize,
}

fn optimize(a: &OptimizeArgs, mut cfg: RunConfig, mut out: RunDir) -> anyhow::Result<()> {
    let seed = cfg.require_seed("optimize")?;
    let rec = load_input(&a.input)?;
    require_labels(&rec, &a.input)?;
    if let Some(f) = a.folds {
        cfg.folds = f;
    }
    let ga = &mut cfg.ga;
    ga.seed = seed;
    if let Some(v) = a.combo_size {
        ga.combo_size = v;
    }
    if let Some(v) = a.population {
        ga.population = v;
    }
    if let Some(v) = a.generations {
        ga.generations = v;
    }
    if let Some(v) = a.mutation_rate {
        ga.mutation_rate = v;
    }
    if let Some(v) = a.elitism {
        ga.elitism = v;
    }
    ga.validate()?;
    cfg.eval.seed = seed;
    cfg.eval.validate()?;
    let (features, channels) = selection(&rec, &a.select, &mut cfg)?;
    let members = candidate_members(&features, &channels);
    if cfg.ga.combo_size > members.len() {
        return Err(Error::Combo(format!(
            "combo size {} exceeds the {} candidate members",
            cfg.ga.combo_size,
            members.len()
        ))
        .into());
    }
    let data = WindowedDataset::build(&rec, &members, &cfg.eval)?;
    let plan = make_folds(data.windows(), cfg.folds, seed)?;

    let mut exact = cfg.eval.clone();
    exact.backend = Backend::Exact;
    let pairs = exhaustive_pairs(&data, &features, &channels, &plan, &exact)?;
    let ranked: Vec<RankedPair> = pairs
        .iter()
        .map(|(c, r)| RankedPair {
            combo: c.members().iter().map(Member::to_string).collect(),
            j_statistic: r.j_statistic,
            mean_fold_j: r.mean_fold_j,
        })
        .collect();
    out.write_json("pairs.json", &ranked)?;
    let (best_pair, best_pair_report) = &pairs[0];
    println!(
        "best pair {best_pair}: J = {:.4}",
        best_pair_report.j_statistic
    );

    let outcome = ga_search(
        &data, &features, &channels, &plan, &cfg.eval, &cfg.ga, best_pair,
    )?;
    write_search_log(&out.path("search_log.jsonl"), &outcome.log)?;
    out.register("search_log.jsonl")?;
    out.write_json(
        "best.json",
        &BestCombo {
            combo: outcome
                .best
                .members()
                .iter()
                .map(Member::to_string)
                .collect(),
            exact: &outcome.report,
            stochastic: &outcome.stochastic_report,
            history: &outcome.history,
            evaluations: outcome.log.len(),
        },
    )?;
    println!(
        "best {}-member combo {}: fitness {:.4}, J exact {:.4}, J stochastic {:.4} ({} evaluations)",
        outcome.best.len(),
        outcome.best,
        outcome.report.fitness(),
        outcome.report.j_statistic,
        outcome.stochastic_report.j_statistic,
        outcome.log.len()
    );
    out.finish(&cfg, Some(seed))
}

fn power(a: &PowerArgs, mut cfg: RunConfig, mut out: RunDir) -> anyhow::Result<()> {
    let mut scenarios = cfg.scenarios.take().unwrap_or_else(Scenario::standard);
    for s in &mut scenarios {
        if let Some(l) = a.lut_levels {
            s.lut_levels = l;
        }
        if let Some(p) = a.pairs {
            s.pairs = p;
        }
        match a.feature_power {
            Some(FeaturePowerArg::Average) => s.feature_power = FeaturePower::Average,
            Some(FeaturePowerArg::Max) => s.feature_power = FeaturePower::Max,
            None => {}
        }
    }
    let reports = scenarios
        .iter()
        .map(evaluate_scenario)
        .collect::<Result<Vec<_>, _>>()?;
    println!(
        "{:<14} {:>9} {:>9} {:>9} {:>9} {:>9} {:>10} {:>6} {:>10} {:>8}",
        "scenario",
        "sense_uW",
        "fe_uW",
        "lut_uW",
        "trng_pW",
        "ce_pW",
        "total_uW",
        "pairs",
        "stim_uJ",
        "years"
    );
    for r in &reports {
        let b = &r.per_block_w;
        println!(
            "{:<14} {:>9.4} {:>9.4} {:>9.4} {:>9.2} {:>9.2} {:>10.5} {:>6} {:>10.2} {:>8.2}",
            r.name,
            b.sense_preamp.0 * 1e6,
            b.feature_extraction.0 * 1e6,
            b.lut.0 * 1e6,
            b.trng.0 * 1e12,
            b.c_element.0 * 1e12,
            r.total_w.0 * 1e6,
            r.pairs,
            r.stimulation_energy_j.0 * 1e6,
            r.battery_years
        );
    }
    out.write_json("power.json", &reports)?;
    cfg.scenarios = Some(scenarios);
    out.finish(&cfg, cfg.seed)
}
