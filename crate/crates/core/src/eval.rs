//! Cross-validated evaluation of (feature, channel) combinations.
//!
//! Feature values are computed once per recording into a [`WindowedDataset`];
//! each fold then fits bins and likelihood tables on its training windows
//! only and classifies the held-out windows.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{self, Evidence, Member, Prior};
use crate::error::{Error, Result};
use crate::features::{evaluate_windowed, FeatureConfig, FeatureKind, StreamingFeature};
use crate::prob_model::{
    self, fit_bins, fit_table, quantize_lut, LikelihoodTable, LutQuantization,
};
use crate::signal::{extract_windows, SignalRecording, State, Window, DEFAULT_WINDOW_S};
use crate::stochastic::{derive_seed, stochastic_posterior, PRODUCTION_STREAM_BITS};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_MIN_BIN_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Exact,
    Stochastic,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Exact => "exact",
            Backend::Stochastic => "stochastic",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(Backend::Exact),
            "stochastic" => Ok(Backend::Stochastic),
            _ => Err(Error::Config(format!("unknown backend '{s}'"))),
        }
    }
}

/// How a window's feature value is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// The analog integrator output at the last sample of the window, with
    /// the integrator running continuously over the whole recording.
    #[default]
    StreamingEnd,
    /// The ideal batch value computed over the window's samples alone.
    Windowed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub window_s: f64,
    pub tau_s: f64,
    pub sampling: Sampling,
    pub target_bins: usize,
    pub min_bin_count: usize,
    pub smoothing: f64,
    /// Optional LUT compression of every fitted table.
    pub lut_levels: Option<usize>,
    /// Fixed seizure prior; `None` uses the training class balance of each fold.
    pub prior: Option<f64>,
    pub threshold: f64,
    pub backend: Backend,
    pub stream_bits: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            tau_s: 5.0,
            sampling: Sampling::default(),
            target_bins: prob_model::DEFAULT_TARGET_BINS,
            min_bin_count: DEFAULT_MIN_BIN_COUNT,
            smoothing: prob_model::DEFAULT_SMOOTHING,
            lut_levels: None,
            prior: None,
            threshold: bayes::DEFAULT_THRESHOLD,
            backend: Backend::Exact,
            stream_bits: PRODUCTION_STREAM_BITS,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.smoothing.is_finite() && self.smoothing > 0.0) {
            return bad(format!(
                "smoothing must be positive, got {}",
                self.smoothing
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            ));
        }
        if self.min_bin_count == 0 {
            return bad("min_bin_count must be at least 1".into());
        }
        if self.stream_bits == 0 {
            return bad("stream_bits must be positive".into());
        }
        if let Some(p) = self.prior {
            Prior::new(p)?;
        }
        if let Some(levels) = self.lut_levels {
            LutQuantization::new(levels)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn record(&mut self, truth: State, predicted: State) {
        match (truth, predicted) {
            (State::Ictal, State::Ictal) => self.tp += 1,
            (State::Ictal, State::Interictal) => self.fn_ += 1,
            (State::Interictal, State::Ictal) => self.fp += 1,
            (State::Interictal, State::Interictal) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Relabels ictal as interictal and vice versa.
    pub fn swapped(&self) -> Self {
        Self::new(self.tn, self.fn_, self.tp, self.fp)
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(
            self.tp + o.tp,
            self.fp + o.fp,
            self.tn + o.tn,
            self.fn_ + o.fn_,
        )
    }
}

impl std::iter::Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Youden's J: sensitivity + specificity - 1.
pub fn j_statistic(cm: &ConfusionMatrix) -> Result<f64> {
    let pos = cm.tp + cm.fn_;
    let neg = cm.tn + cm.fp;
    if pos == 0 {
        return Err(Error::UndefinedJ("no ictal windows"));
    }
    if neg == 0 {
        return Err(Error::UndefinedJ("no interictal windows"));
    }
    Ok(cm.tp as f64 / pos as f64 + cm.tn as f64 / neg as f64 - 1.0)
}

/// Fold assignment for a list of windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub fold_count: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl CvPlan {
    pub fn window_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    /// With a single fold every window is both training and test data.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        if self.fold_count == 1 {
            return (0..self.assignment.len()).collect();
        }
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }
}

/// Stratified shuffled partition. Ictal windows are dealt round-robin, then
/// interictal windows continue from the next fold so totals stay balanced.
pub fn make_folds(windows: &[Window], fold_count: usize, seed: u64) -> Result<CvPlan> {
    if fold_count == 0 {
        return Err(Error::Config("fold count must be at least 1".into()));
    }
    if windows.len() < fold_count {
        return Err(Error::InsufficientData(format!(
            "{} windows cannot fill {fold_count} folds",
            windows.len()
        )));
    }
    if fold_count == 1 {
        log::warn!("single fold: training and test sets are identical");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; windows.len()];
    let mut next = 0;
    for state in [State::Ictal, State::Interictal] {
        let mut idx: Vec<usize> = (0..windows.len())
            .filter(|&i| windows[i].state == state)
            .collect();
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % fold_count;
            next += 1;
        }
    }
    Ok(CvPlan {
        fold_count,
        assignment,
        seed,
    })
}

/// Per-window feature values for a set of members.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    windows: Vec<Window>,
    values: BTreeMap<Member, Vec<f64>>,
    channel_names: Vec<String>,
}

impl WindowedDataset {
    pub fn build(rec: &SignalRecording, members: &[Member], cfg: &EvalConfig) -> Result<Self> {
        let windows = extract_windows(rec, cfg.window_s)?;
        if windows.is_empty() {
            return Err(Error::InsufficientData(
                "recording has no labeled windows".into(),
            ));
        }
        if !windows.iter().any(|w| w.state.is_ictal()) || windows.iter().all(|w| w.state.is_ictal())
        {
            return Err(Error::BothStatesRequired);
        }
        let feature_cfg = FeatureConfig::new(cfg.tau_s, rec.sample_rate_hz())?;
        for m in members {
            if m.channel >= rec.channel_count() {
                return Err(Error::Config(format!(
                    "member {m} refers to channel {} but the recording has {}",
                    m.channel,
                    rec.channel_count()
                )));
            }
        }
        let mut unique = members.to_vec();
        unique.sort();
        unique.dedup();
        let computed: Vec<(Member, Vec<f64>)> = unique
            .par_iter()
            .map(|&m| {
                let v = match cfg.sampling {
                    Sampling::StreamingEnd => streaming_at_ends(rec, &windows, m, &feature_cfg)?,
                    Sampling::Windowed => windows
                        .iter()
                        .map(|w| {
                            evaluate_windowed(
                                rec.window_samples(m.channel, w),
                                m.feature,
                                rec.sample_rate_hz(),
                            )
                        })
                        .collect::<Result<_>>()?,
                };
                Ok((m, v))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            windows,
            values: computed.into_iter().collect(),
            channel_names: rec.channels().iter().map(|c| c.name.clone()).collect(),
        })
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = Member> + '_ {
        self.values.keys().copied()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn values(&self, member: Member) -> Result<&[f64]> {
        self.values
            .get(&member)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Combo(format!("member {member} was not computed")))
    }
}

fn streaming_at_ends(
    rec: &SignalRecording,
    windows: &[Window],
    m: Member,
    cfg: &FeatureConfig,
) -> Result<Vec<f64>> {
    let samples = &rec.channels()[m.channel].samples;
    let mut f = StreamingFeature::new(m.feature, cfg);
    let mut out = Vec::with_capacity(windows.len());
    let mut pos = 0;
    let mut last = 0.0;
    for w in windows {
        let r = rec.window_range(w);
        if r.is_empty() {
            return Err(Error::InvalidRecording(format!(
                "window at {} s contains no samples",
                w.start_s
            )));
        }
        while pos < r.end {
            last = f.step(samples[pos]);
            pos += 1;
        }
        out.push(last);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub combo: Vec<Member>,
    pub backend: Backend,
    /// J of the confusion matrix aggregated over all folds.
    pub j_statistic: f64,
    /// Mean of the defined per-fold values.
    pub mean_fold_j: Option<f64>,
    /// `None` where a test fold lacks one of the classes.
    pub per_fold_j: Vec<Option<f64>>,
    pub per_fold: Vec<ConfusionMatrix>,
    pub confusion: ConfusionMatrix,
    /// Prediction for every window, in dataset order.
    #[serde(skip)]
    pub predictions: Vec<State>,
}

impl EvaluationReport {
    /// Search objective: the mean per-fold J, or the aggregate J when no
    /// fold is individually defined.
    pub fn fitness(&self) -> f64 {
        self.mean_fold_j.unwrap_or(self.j_statistic)
    }
}

/// Tables fitted for one fold, checked against leakage.
fn fit_fold(
    data: &WindowedDataset,
    member: Member,
    train: &[usize],
    cfg: &EvalConfig,
) -> Result<LikelihoodTable> {
    let values = data.values(member)?;
    let pairs: Vec<(f64, State)> = train
        .iter()
        .map(|&i| (values[i], data.windows[i].state))
        .collect();
    let pooled: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let bins = fit_bins(&pooled, cfg.target_bins, cfg.min_bin_count)?;
    let mut table = fit_table(&pairs, bins, cfg.smoothing)?;
    if let Some(levels) = cfg.lut_levels {
        table = quantize_lut(&table, LutQuantization::new(levels)?)?;
    }
    if table.total_count() != train.len() as u64 {
        return Err(Error::Internal(format!(
            "table for {member} holds {} samples but the training split has {}",
            table.total_count(),
            train.len()
        )));
    }
    Ok(table)
}

pub fn evaluate_combo(
    data: &WindowedDataset,
    combo: &[Member],
    plan: &CvPlan,
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    cfg.validate()?;
    if combo.is_empty() {
        return Err(Error::Combo("combination is empty".into()));
    }
    if plan.window_count() != data.len() {
        return Err(Error::LengthMismatch(format!(
            "plan covers {} windows, dataset has {}",
            plan.window_count(),
            data.len()
        )));
    }
    let mut predictions = vec![State::Interictal; data.len()];
    let mut per_fold = Vec::with_capacity(plan.fold_count);
    for fold in 0..plan.fold_count {
        let train = plan.train_indices(fold);
        let test = plan.test_indices(fold);
        let tables = combo
            .iter()
            .map(|&m| fit_fold(data, m, &train, cfg))
            .collect::<Result<Vec<_>>>()?;
        let prior = match cfg.prior {
            Some(p) => Prior::new(p)?,
            None => {
                let ictal = train
                    .iter()
                    .filter(|&&i| data.windows[i].state.is_ictal())
                    .count();
                Prior::new(ictal as f64 / train.len() as f64)?
            }
        };
        let mut cm = ConfusionMatrix::default();
        for &i in &test {
            let evidences = combo
                .iter()
                .zip(&tables)
                .map(|(&m, t)| Evidence::from_member(t.lookup(data.values(m)?[i]), m))
                .collect::<Result<Vec<_>>>()?;
            let post = match cfg.backend {
                Backend::Exact => bayes::posterior(prior, &evidences),
                Backend::Stochastic => stochastic_posterior(
                    prior,
                    &evidences,
                    cfg.stream_bits,
                    derive_seed(cfg.seed, i as u64),
                )?,
            };
            let predicted = bayes::classify(post, cfg.threshold);
            predictions[i] = predicted;
            cm.record(data.windows[i].state, predicted);
        }
        per_fold.push(cm);
    }
    let confusion: ConfusionMatrix = per_fold.iter().copied().sum();
    let per_fold_j: Vec<Option<f64>> = per_fold.iter().map(|cm| j_statistic(cm).ok()).collect();
    let defined: Vec<f64> = per_fold_j.iter().flatten().copied().collect();
    let mean_fold_j =
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(EvaluationReport {
        combo: combo.to_vec(),
        backend: cfg.backend,
        j_statistic: j_statistic(&confusion)?,
        mean_fold_j,
        per_fold_j,
        per_fold,
        confusion,
        predictions,
    })
}

/// Builds the dataset for `combo` and evaluates it in one call.
pub fn evaluate_recording(
    rec: &SignalRecording,
    combo: &[Member],
    fold_count: usize,
    cfg: &EvalConfig,
) -> Result<EvaluationReport> {
    let data = WindowedDataset::build(rec, combo, cfg)?;
    let plan = make_folds(data.windows(), fold_count, cfg.seed)?;
    evaluate_combo(&data, combo, &plan, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestChannel {
    pub feature: FeatureKind,
    pub channel: usize,
    pub j_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub features: Vec<FeatureKind>,
    pub channels: Vec<usize>,
    /// Feature-major: `reports[f * channels.len() + c]`.
    pub reports: Vec<EvaluationReport>,
    pub best_per_feature: Vec<BestChannel>,
}

impl SweepReport {
    pub fn get(&self, feature: FeatureKind, channel: usize) -> Option<&EvaluationReport> {
        let f = self.features.iter().position(|&k| k == feature)?;
        let c = self.channels.iter().position(|&k| k == channel)?;
        self.reports.get(f * self.channels.len() + c)
    }

    /// Best single member over the whole sweep; the earliest wins ties.
    pub fn best(&self) -> Option<&EvaluationReport> {
        self.reports
            .iter()
            .fold(None, |best: Option<&EvaluationReport>, r| match best {
                Some(b) if b.j_statistic >= r.j_statistic => Some(b),
                _ => Some(r),
            })
    }
}

/// Evaluates every (feature, channel) pair on its own.
pub fn sweep_single(
    data: &WindowedDataset,
    features: &[FeatureKind],
    channels: &[usize],
    plan: &CvPlan,
    cfg: &EvalConfig,
) -> Result<SweepReport> {
    if features.is_empty() || channels.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one feature and one channel".into(),
        ));
    }
    let members: Vec<Member> = features
        .iter()
        .flat_map(|&f| channels.iter().map(move |&c| Member::new(f, c)))
        .collect();
    let reports = members
        .par_iter()
        .map(|&m| evaluate_combo(data, &[m], plan, cfg))
        .collect::<Result<Vec<_>>>()?;
    let best_per_feature = features
        .iter()
        .enumerate()
        .map(|(fi, &feature)| {
            let row = &reports[fi * channels.len()..(fi + 1) * channels.len()];
            let (ci, r) = row
                .iter()
                .enumerate()
                .fold(
                    None,
                    |best: Option<(usize, &EvaluationReport)>, (ci, r)| match best {
                        Some(b) if b.1.j_statistic >= r.j_statistic => Some(b),
                        _ => Some((ci, r)),
                    },
                )
                .expect("nonempty channel list");
            BestChannel {
                feature,
                channel: channels[ci],
                j_statistic: r.j_statistic,
            }
        })
        .collect();
    Ok(SweepReport {
        features: features.to_vec(),
        channels: channels.to_vec(),
        reports,
        best_per_feature,
    })
}

pub fn write_reports_json<T: Serialize + ?Sized>(path: &Path, reports: &T) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(file, reports)?;
    Ok(())
}

/// One row per fold plus an `all` row per report. Multi-member combos join
/// their features and channels with `+`.
pub fn write_fold_csv(path: &Path, reports: &[EvaluationReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["feature", "channel", "fold", "J", "tp", "fp", "tn", "fn"])?;
    for r in reports {
        let feature = r
            .combo
            .iter()
            .map(|m| m.feature.name())
            .collect::<Vec<_>>()
            .join("+");
        let channel = r
            .combo
            .iter()
            .map(|m| m.channel.to_string())
            .collect::<Vec<_>>()
            .join("+");
        let rows = r
            .per_fold
            .iter()
            .zip(&r.per_fold_j)
            .enumerate()
            .map(|(k, (cm, j))| (k.to_string(), *j, cm))
            .chain(std::iter::once((
                "all".to_string(),
                Some(r.j_statistic),
                &r.confusion,
            )));
        for (fold, j, cm) in rows {
            w.write_record([
                feature.clone(),
                channel.clone(),
                fold,
                j.map(|v| v.to_string()).unwrap_or_default(),
                cm.tp.to_string(),
                cm.fp.to_string(),
                cm.tn.to_string(),
                cm.fn_.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Features as rows, channels as columns, aggregate J in each cell.
pub fn write_heatmap_csv(path: &Path, sweep: &SweepReport, channel_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["feature".to_string()];
    header.extend(sweep.channels.iter().map(|&c| {
        channel_names
            .get(c)
            .cloned()
            .unwrap_or_else(|| c.to_string())
    }));
    w.write_record(&header)?;
    for (fi, f) in sweep.features.iter().enumerate() {
        let mut row = vec![f.name().to_string()];
        row.extend(
            sweep.reports[fi * sweep.channels.len()..(fi + 1) * sweep.channels.len()]
                .iter()
                .map(|r| r.j_statistic.to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
