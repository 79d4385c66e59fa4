//! Binned per-class likelihood tables and the normalized likelihood lookup
//! `p*(bin) = P(bin | ictal) / (P(bin | ictal) + P(bin | interictal))`
//! that sets each stochastic generator's bias.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::State;

pub const DEFAULT_TARGET_BINS: usize = 40;
pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// Strictly increasing interior edges. Bin `b` covers `(e[b-1], e[b]]`, with
/// open outer bins `(-inf, e[0]]` and `(e[last], +inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinEdges {
    edges: Vec<f64>,
}

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Config("bin edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "bin edges must be strictly increasing".into(),
            ));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn bin_count(&self) -> usize {
        self.edges.len() + 1
    }

    /// Closed-right: a value equal to an edge belongs to the bin on its left.
    pub fn bin_index(&self, value: f64) -> usize {
        self.edges.partition_point(|&e| e < value)
    }

    fn counts(&self, values: impl IntoIterator<Item = f64>) -> Vec<usize> {
        let mut counts = vec![0; self.bin_count()];
        for v in values {
            counts[self.bin_index(v)] += 1;
        }
        counts
    }
}

/// Equal-frequency edges over `values`, then adjacent bins merged until every
/// bin holds at least `min_count` samples.
pub fn fit_bins(values: &[f64], target_bins: usize, min_count: usize) -> Result<BinEdges> {
    if target_bins < 2 {
        return Err(Error::Config(format!(
            "target bin count must be >= 2, got {target_bins}"
        )));
    }
    if values.is_empty() || values.len() < 2 * min_count {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill two bins of {min_count}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("cannot bin non-finite feature values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    let mut edges: Vec<f64> = Vec::with_capacity(target_bins - 1);
    for k in 1..target_bins {
        let rank = (k * n).div_ceil(target_bins);
        let edge = sorted[rank.max(1) - 1];
        if edges.last().is_none_or(|&last| edge > last) {
            edges.push(edge);
        }
    }
    // An edge at the maximum leaves an always-empty top bin.
    if edges.last() == sorted.last() {
        edges.pop();
    }

    let mut bins = BinEdges { edges };
    let mut counts = bins.counts(sorted.iter().copied());
    while counts.len() > 1 {
        let Some((smallest, &c)) = counts.iter().enumerate().min_by_key(|&(i, &c)| (c, i)) else {
            break;
        };
        if c >= min_count {
            break;
        }
        // Merge with the smaller neighbour; ties go left.
        let merge_left = match (smallest.checked_sub(1), counts.get(smallest + 1)) {
            (Some(l), Some(&r)) => counts[l] <= r,
            (Some(_), None) => true,
            _ => false,
        };
        let (left, right) = if merge_left {
            (smallest - 1, smallest)
        } else {
            (smallest, smallest + 1)
        };
        counts[left] += counts[right];
        counts.remove(right);
        bins.edges.remove(left);
    }
    Ok(bins)
}

/// Per-class smoothed histograms over shared bins.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodTable {
    bins: BinEdges,
    count_ictal: Vec<u64>,
    count_interictal: Vec<u64>,
    smoothing: f64,
    p_given_ictal: Vec<f64>,
    p_given_interictal: Vec<f64>,
    p_star: Vec<f64>,
}

impl LikelihoodTable {
    /// Builds a table from raw counts. With `B` bins and smoothing `s`,
    /// `P(b | class) = (count[b] + s) / (total + s*B)`.
    pub fn from_counts(
        bins: BinEdges,
        count_ictal: Vec<u64>,
        count_interictal: Vec<u64>,
        smoothing: f64,
    ) -> Result<Self> {
        let b = bins.bin_count();
        if count_ictal.len() != b || count_interictal.len() != b {
            return Err(Error::Config(format!(
                "{b} bins but {} / {} counts",
                count_ictal.len(),
                count_interictal.len()
            )));
        }
        if !(smoothing.is_finite() && smoothing > 0.0) {
            return Err(Error::Config(format!(
                "smoothing must be positive, got {smoothing}"
            )));
        }
        let normalize = |counts: &[u64]| -> Vec<f64> {
            let total = counts.iter().sum::<u64>() as f64 + smoothing * b as f64;
            counts
                .iter()
                .map(|&c| (c as f64 + smoothing) / total)
                .collect()
        };
        let p_given_ictal = normalize(&count_ictal);
        let p_given_interictal = normalize(&count_interictal);
        let p_star = p_given_ictal
            .iter()
            .zip(&p_given_interictal)
            .map(|(pi, pn)| pi / (pi + pn))
            .collect();
        Ok(Self {
            bins,
            count_ictal,
            count_interictal,
            smoothing,
            p_given_ictal,
            p_given_interictal,
            p_star,
        })
    }

    pub fn bins(&self) -> &BinEdges {
        &self.bins
    }

    pub fn bin_count(&self) -> usize {
        self.bins.bin_count()
    }

    pub fn count_ictal(&self) -> &[u64] {
        &self.count_ictal
    }

    pub fn count_interictal(&self) -> &[u64] {
        &self.count_interictal
    }

    /// Number of training samples the table was fitted on.
    pub fn total_count(&self) -> u64 {
        self.count_ictal.iter().chain(&self.count_interictal).sum()
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn p_given_ictal(&self) -> &[f64] {
        &self.p_given_ictal
    }

    pub fn p_given_interictal(&self) -> &[f64] {
        &self.p_given_interictal
    }

    pub fn p_star(&self) -> &[f64] {
        &self.p_star
    }

    pub fn lookup(&self, value: f64) -> f64 {
        self.p_star[self.bins.bin_index(value)]
    }

    pub fn to_json(&self) -> TableJson {
        TableJson {
            edges: self.bins.edges.clone(),
            p_star: self.p_star.clone(),
            counts: CountsJson {
                ictal: self.count_ictal.clone(),
                interictal: self.count_interictal.clone(),
            },
            smoothing: self.smoothing,
        }
    }

    /// Rebuilds a table from its serialized form; the stored `p_star` must
    /// agree with the one recomputed from the counts.
    pub fn from_json(json: TableJson) -> Result<Self> {
        let table = Self::from_counts(
            BinEdges::new(json.edges)?,
            json.counts.ictal,
            json.counts.interictal,
            json.smoothing,
        )?;
        let consistent = json.p_star.len() == table.p_star.len()
            && json
                .p_star
                .iter()
                .zip(&table.p_star)
                .all(|(a, b)| (a - b).abs() <= 1e-9);
        if !consistent {
            return Err(Error::Config(
                "serialized p_star disagrees with its counts".into(),
            ));
        }
        Ok(table)
    }
}

/// Serialized table: `{edges, p_star, counts: {ictal, interictal}, smoothing}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableJson {
    pub edges: Vec<f64>,
    pub p_star: Vec<f64>,
    pub counts: CountsJson,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
}

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsJson {
    pub ictal: Vec<u64>,
    pub interictal: Vec<u64>,
}

pub fn fit_table(
    train: &[(f64, State)],
    bins: BinEdges,
    smoothing: f64,
) -> Result<LikelihoodTable> {
    let has = |s: State| train.iter().any(|&(_, st)| st == s);
    if !has(State::Ictal) || !has(State::Interictal) {
        return Err(Error::BothStatesRequired);
    }
    let mut ci = vec![0u64; bins.bin_count()];
    let mut cn = vec![0u64; bins.bin_count()];
    for &(v, state) in train {
        let b = bins.bin_index(v);
        match state {
            State::Ictal => ci[b] += 1,
            State::Interictal => cn[b] += 1,
        }
    }
    LikelihoodTable::from_counts(bins, ci, cn, smoothing)
}

pub fn lookup_p_star(table: &LikelihoodTable, value: f64) -> f64 {
    table.lookup(value)
}

/// Number of discrete levels realized by the level-detector lookup circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LutQuantization(usize);

impl LutQuantization {
    pub fn new(level_count: usize) -> Result<Self> {
        if level_count == 0 {
            return Err(Error::Config("LUT level count must be positive".into()));
        }
        Ok(Self(level_count))
    }

    pub fn level_count(self) -> usize {
        self.0
    }
}

/// Greedily merges the adjacent bin pair with the smallest `|delta p*|`
/// until `q` levels remain. Tables already at or below `q` are returned as is.
pub fn quantize_lut(table: &LikelihoodTable, q: LutQuantization) -> Result<LikelihoodTable> {
    let mut edges = table.bins.edges.clone();
    let mut ci = table.count_ictal.clone();
    let mut cn = table.count_interictal.clone();
    let mut current = table.clone();
    while current.bin_count() > q.level_count() {
        let ps = current.p_star();
        let (i, _) = ps
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least two bins");
        ci[i] += ci[i + 1];
        ci.remove(i + 1);
        cn[i] += cn[i + 1];
        cn.remove(i + 1);
        edges.remove(i);
        current = LikelihoodTable::from_counts(
            BinEdges {
                edges: edges.clone(),
            },
            ci.clone(),
            cn.clone(),
            table.smoothing,
        )?;
    }
    Ok(current)
}
