//! Bit-level simulation of the stochastic inference back end: tunable
//! Bernoulli generators, multi-input Muller C-elements, low-pass decode and
//! threshold.
//!
//! Streams are packed 64 bits per word, least significant bit first, and all
//! bulk operations work a word at a time.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoroshiro128PlusPlus};
use serde::{Deserialize, Serialize};

use crate::bayes::{self, Evidence, Prior};
use crate::error::{Error, Result};
use crate::signal::State;

/// Resolution of a generator's bias: probabilities are rounded to multiples
/// of `2^-GENERATOR_PRECISION_BITS`.
pub const GENERATOR_PRECISION_BITS: u32 = 16;

/// Bits per decision at the 1 kHz bit rate over a 5 s window.
pub const PRODUCTION_STREAM_BITS: usize = 5000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StochasticStream {
    words: Vec<u64>,
    len: usize,
    encoded_p: Option<u64>,
}

impl StochasticStream {
    fn from_words(mut words: Vec<u64>, len: usize, encoded_p: Option<f64>) -> Self {
        debug_assert_eq!(words.len(), len.div_ceil(64));
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        Self {
            words,
            len,
            encoded_p: encoded_p.map(f64::to_bits),
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
            words[i / 64] |= 1 << (i % 64);
        }
        Self::from_words(words, bits.len(), None)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Generator setting, when the stream came from [`generate_stream`].
    pub fn encoded_p(&self) -> Option<f64> {
        self.encoded_p.map(f64::from_bits)
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(
            i < self.len,
            "bit {i} out of range for stream of {}",
            self.len
        );
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.bit(i))
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Number of ones in bit positions `start..end`.
    pub fn count_ones_in(&self, start: usize, end: usize) -> u64 {
        let end = end.min(self.len);
        if start >= end {
            return 0;
        }
        let (first, last) = (start / 64, (end - 1) / 64);
        let lo_mask = u64::MAX << (start % 64);
        let hi_mask = u64::MAX >> (63 - (end - 1) % 64);
        if first == last {
            return u64::from((self.words[first] & lo_mask & hi_mask).count_ones());
        }
        let middle: u64 = self.words[first + 1..last]
            .iter()
            .map(|w| u64::from(w.count_ones()))
            .sum();
        u64::from((self.words[first] & lo_mask).count_ones())
            + middle
            + u64::from((self.words[last] & hi_mask).count_ones())
    }

    pub fn mean(&self) -> f64 {
        if self.len == 0 {
            return f64::NAN;
        }
        self.count_ones() as f64 / self.len as f64
    }
}

/// Derives an independent generator seed for sub-stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut mix = SplitMix64::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    mix.next_u64()
}

/// Tunable Bernoulli source producing 64 bits per step.
///
/// A bias of `k / 2^m` is realized by folding `m` uniform words through its
/// binary expansion from the least significant set bit upward: a `1` digit
/// ORs in the next word, a `0` digit ANDs it. Each output bit is then
/// independently 1 with probability exactly `k / 2^m`.
#[derive(Debug, Clone)]
pub struct BernoulliSource {
    level: u64,
    // Two independent lanes so consecutive words do not serialize on one
    // generator's state.
    lanes: [Xoroshiro128PlusPlus; 2],
}

impl BernoulliSource {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Probability(p));
        }
        let scale = (1u64 << GENERATOR_PRECISION_BITS) as f64;
        Ok(Self {
            level: (p * scale).round() as u64,
            lanes: [
                Xoroshiro128PlusPlus::seed_from_u64(seed),
                Xoroshiro128PlusPlus::seed_from_u64(derive_seed(seed, u64::MAX)),
            ],
        })
    }

    /// The probability actually realized after quantization.
    pub fn effective_p(&self) -> f64 {
        self.level as f64 / (1u64 << GENERATOR_PRECISION_BITS) as f64
    }

    /// Next two 64-bit words of the stream.
    #[inline]
    pub fn next_pair(&mut self) -> [u64; 2] {
        let full = 1u64 << GENERATOR_PRECISION_BITS;
        if self.level == 0 {
            return [0, 0];
        }
        if self.level >= full {
            return [u64::MAX, u64::MAX];
        }
        let mut pair = [0u64; 2];
        for digit in self.level.trailing_zeros()..GENERATOR_PRECISION_BITS {
            let r = [self.lanes[0].next_u64(), self.lanes[1].next_u64()];
            if self.level >> digit & 1 == 1 {
                pair = [pair[0] | r[0], pair[1] | r[1]];
            } else {
                pair = [pair[0] & r[0], pair[1] & r[1]];
            }
        }
        pair
    }
}

pub fn generate_stream(p: f64, n_bits: usize, seed: u64) -> Result<StochasticStream> {
    if n_bits == 0 {
        return Err(Error::Config(
            "stream length must be at least one bit".into(),
        ));
    }
    let mut src = BernoulliSource::new(p, seed)?;
    let n_words = n_bits.div_ceil(64);
    let mut words = Vec::with_capacity(n_words + 1);
    while words.len() < n_words {
        words.extend(src.next_pair());
    }
    words.truncate(n_words);
    Ok(StochasticStream::from_words(words, n_bits, Some(p)))
}

/// Muller C-element with any number of inputs: the output goes high when all
/// inputs are high, low when all are low, and otherwise holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CElementState {
    input_count: usize,
    q: bool,
}

impl CElementState {
    /// Powers up low (non-seizure).
    pub fn new(input_count: usize) -> Result<Self> {
        if input_count < 2 {
            return Err(Error::Config(format!(
                "a C-element needs >= 2 inputs, got {input_count}"
            )));
        }
        Ok(Self {
            input_count,
            q: false,
        })
    }

    pub fn with_output(input_count: usize, q: bool) -> Result<Self> {
        Ok(Self {
            q,
            ..Self::new(input_count)?
        })
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn output(&self) -> bool {
        self.q
    }
}

pub fn c_element_step(state: &mut CElementState, inputs: &[bool]) -> Result<bool> {
    if inputs.len() != state.input_count {
        return Err(Error::Arity {
            expected: state.input_count,
            got: inputs.len(),
        });
    }
    if inputs.iter().all(|&b| b) {
        state.q = true;
    } else if inputs.iter().all(|&b| !b) {
        state.q = false;
    }
    Ok(state.q)
}

/// Clocks a C-element across one 64-bit word. `set` marks positions where
/// every input is 1, `reset` where every input is 0; each output bit is the
/// most recent event at or before it, or `carry` if none.
#[inline]
fn c_element_word(set: u64, reset: u64, carry: bool) -> u64 {
    let mut known = set | reset;
    let mut value = set;
    for shift in [1, 2, 4, 8, 16, 32] {
        value |= (value << shift) & !known;
        known |= known << shift;
    }
    if carry {
        value |= !known;
    }
    value
}

fn check_lengths(streams: &[StochasticStream]) -> Result<usize> {
    let len = streams[0].len;
    if let Some(s) = streams.iter().find(|s| s.len != len) {
        return Err(Error::LengthMismatch(format!(
            "input streams have {len} and {} bits",
            s.len
        )));
    }
    Ok(len)
}

fn c_element_scan(
    inputs: impl Fn(usize) -> (u64, u64),
    words: usize,
    len: usize,
) -> StochasticStream {
    let mut q = false;
    let out = (0..words)
        .map(|w| {
            let (set, reset) = inputs(w);
            let word = c_element_word(set, reset, q);
            q = word >> 63 == 1;
            word
        })
        .collect();
    StochasticStream::from_words(out, len, None)
}

/// Clocks one flat multi-input C-element (initially low) over equal-length
/// streams. In steady state the output density is
/// `prod D / (prod D + prod (1 - D))`.
pub fn run_c_network(streams: &[StochasticStream]) -> Result<StochasticStream> {
    if streams.len() < 2 {
        return Err(Error::Config(format!(
            "a C-element network needs >= 2 input streams, got {}",
            streams.len()
        )));
    }
    let len = check_lengths(streams)?;
    let words = len.div_ceil(64);
    Ok(c_element_scan(
        |w| {
            streams
                .iter()
                .fold((u64::MAX, u64::MAX), |(set, reset), s| {
                    (set & s.words[w], reset & !s.words[w])
                })
        },
        words,
        len,
    ))
}

/// Alternate network: a balanced tree of two-input C-elements. An odd stream
/// at any level passes through to the next.
pub fn run_c_tree(streams: &[StochasticStream]) -> Result<StochasticStream> {
    if streams.len() < 2 {
        return Err(Error::Config(format!(
            "a C-element network needs >= 2 input streams, got {}",
            streams.len()
        )));
    }
    check_lengths(streams)?;
    let mut level: Vec<StochasticStream> = streams.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [a, b] => run_c_network(&[a.clone(), b.clone()]),
                [a] => Ok(a.clone()),
                _ => unreachable!(),
            })
            .collect::<Result<_>>()?;
    }
    Ok(level.pop().expect("one stream remains"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DecoderMode {
    /// Mean of the last `window_bits` bits.
    MovingAverage { window_bits: usize },
    /// `y <- alpha*y + (1 - alpha)*bit`, from `y = 0`; the final value is read.
    FirstOrderLpf { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub mode: DecoderMode,
    pub threshold: f64,
}

impl DecoderConfig {
    pub fn moving_average(window_bits: usize) -> Self {
        Self {
            mode: DecoderMode::MovingAverage { window_bits },
            threshold: bayes::DEFAULT_THRESHOLD,
        }
    }
}

pub fn decode(stream: &StochasticStream, cfg: &DecoderConfig) -> Result<(f64, State)> {
    if stream.is_empty() {
        return Err(Error::InsufficientBits {
            needed: 1,
            available: 0,
        });
    }
    let estimate = match cfg.mode {
        DecoderMode::MovingAverage { window_bits } => {
            if window_bits == 0 {
                return Err(Error::Config(
                    "decoder window must be at least one bit".into(),
                ));
            }
            if window_bits > stream.len() {
                return Err(Error::InsufficientBits {
                    needed: window_bits,
                    available: stream.len(),
                });
            }
            stream.count_ones_in(stream.len() - window_bits, stream.len()) as f64
                / window_bits as f64
        }
        DecoderMode::FirstOrderLpf { alpha } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Config(format!(
                    "decoder alpha must lie in (0,1), got {alpha}"
                )));
            }
            stream.bits().fold(0.0, |y, b| {
                alpha * y + (1.0 - alpha) * f64::from(u8::from(b))
            })
        }
    };
    Ok((estimate, bayes::classify(estimate, cfg.threshold)))
}

/// Full stochastic path: one generator for the prior and one per evidence,
/// a flat C-element, then a moving average over the whole stream.
pub fn stochastic_posterior(
    prior: Prior,
    evidences: &[Evidence],
    n_bits: usize,
    seed: u64,
) -> Result<f64> {
    let mut streams = Vec::with_capacity(evidences.len() + 1);
    streams.push(generate_stream(
        prior.p_seizure(),
        n_bits,
        derive_seed(seed, 0),
    )?);
    for (i, e) in evidences.iter().enumerate() {
        streams.push(generate_stream(
            e.p_star(),
            n_bits,
            derive_seed(seed, i as u64 + 1),
        )?);
    }
    let output = if streams.len() == 1 {
        streams.pop().expect("prior stream")
    } else {
        run_c_network(&streams)?
    };
    decode(&output, &DecoderConfig::moving_average(n_bits)).map(|(p, _)| p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub n_bits: usize,
    pub encoded_p: Option<f64>,
    pub seed: Option<u64>,
}

/// Writes a JSON header line followed by the bits packed MSB-first, 8 per byte.
pub fn write_dump(stream: &StochasticStream, seed: Option<u64>, path: &Path) -> Result<()> {
    let header = DumpHeader {
        n_bits: stream.len(),
        encoded_p: stream.encoded_p(),
        seed,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    let mut byte = 0u8;
    for (i, b) in stream.bits().enumerate() {
        byte |= u8::from(b) << (7 - i % 8);
        if i % 8 == 7 {
            out.write_all(&[byte])?;
            byte = 0;
        }
    }
    if !stream.len().is_multiple_of(8) {
        out.write_all(&[byte])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<(DumpHeader, StochasticStream)> {
    let mut reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: DumpHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| Error::parse(path, format!("bad dump header: {e}")))?;
    let mut payload = Vec::new();
    std::io::Read::read_to_end(&mut reader, &mut payload)?;
    if payload.len() != header.n_bits.div_ceil(8) {
        return Err(Error::parse(
            path,
            format!("{} payload bytes for {} bits", payload.len(), header.n_bits),
        ));
    }
    let bits: Vec<bool> = (0..header.n_bits)
        .map(|i| payload[i / 8] >> (7 - i % 8) & 1 == 1)
        .collect();
    let mut stream = StochasticStream::from_bits(&bits);
    stream.encoded_p = header.encoded_p.map(f64::to_bits);
    Ok((header, stream))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_scan(streams: &[StochasticStream]) -> Vec<bool> {
        let mut state = CElementState::new(streams.len()).unwrap();
        (0..streams[0].len())
            .map(|i| {
                let inputs: Vec<bool> = streams.iter().map(|s| s.bit(i)).collect();
                c_element_step(&mut state, &inputs).unwrap()
            })
            .collect()
    }

    #[test]
    fn degenerate_generators() {
        let ones = generate_stream(1.0, 1000, 1).unwrap();
        assert_eq!(ones.count_ones(), 1000);
        let zeros = generate_stream(0.0, 1000, 1).unwrap();
        assert_eq!(zeros.count_ones(), 0);
        assert!(generate_stream(1.5, 10, 0).is_err());
        assert!(generate_stream(0.5, 0, 0).is_err());
    }

    #[test]
    fn generator_mean_within_binomial_error() {
        let s = generate_stream(0.7, 100_000, 42).unwrap();
        let bound = 3.0 * (0.21f64 / 100_000.0).sqrt();
        assert!((s.mean() - 0.7).abs() < bound, "{}", s.mean());
        assert_eq!(s.encoded_p(), Some(0.7));
    }

    #[test]
    fn generator_is_deterministic() {
        assert_eq!(
            generate_stream(0.3, 777, 9).unwrap(),
            generate_stream(0.3, 777, 9).unwrap()
        );
        assert_ne!(
            generate_stream(0.3, 777, 9).unwrap(),
            generate_stream(0.3, 777, 10).unwrap()
        );
    }

    #[test]
    fn truth_table() {
        let mut s = CElementState::new(2).unwrap();
        assert!(c_element_step(&mut s, &[true, true]).unwrap());
        let mut s = CElementState::with_output(2, true).unwrap();
        assert!(c_element_step(&mut s, &[false, true]).unwrap());
        let mut s = CElementState::with_output(2, false).unwrap();
        assert!(!c_element_step(&mut s, &[true, false]).unwrap());
        let mut s = CElementState::with_output(3, true).unwrap();
        assert!(!c_element_step(&mut s, &[false, false, false]).unwrap());
        let err = c_element_step(&mut s, &[true, true]).unwrap_err();
        assert!(matches!(
            err,
            Error::Arity {
                expected: 3,
                got: 2
            }
        ));
        assert!(CElementState::new(1).is_err());
    }

    #[test]
    fn network_rejects_bad_inputs() {
        let a = generate_stream(0.5, 100, 0).unwrap();
        let b = generate_stream(0.5, 101, 1).unwrap();
        assert!(matches!(
            run_c_network(&[a.clone(), b]),
            Err(Error::LengthMismatch(_))
        ));
        assert!(run_c_network(&[a]).is_err());
    }

    #[test]
    fn half_prior_passes_evidence_through() {
        let n = 1_000_000;
        let prior = generate_stream(0.5, n, 1).unwrap();
        let ev = generate_stream(0.73, n, 2).unwrap();
        let out = run_c_network(&[prior, ev]).unwrap();
        assert!((out.mean() - 0.73).abs() < 0.01, "{}", out.mean());
    }

    #[test]
    fn decode_modes() {
        let ones = StochasticStream::from_bits(&[true; 200]);
        let (p, s) = decode(&ones, &DecoderConfig::moving_average(50)).unwrap();
        assert_eq!((p, s), (1.0, State::Ictal));

        let alt: Vec<bool> = (0..4000).map(|i| i % 2 == 1).collect();
        let alt = StochasticStream::from_bits(&alt);
        let (p, _) = decode(&alt, &DecoderConfig::moving_average(1000)).unwrap();
        assert!((p - 0.5).abs() <= 0.001);

        let lpf = DecoderConfig {
            mode: DecoderMode::FirstOrderLpf { alpha: 0.99 },
            threshold: 0.5,
        };
        let (p, _) = decode(&alt, &lpf).unwrap();
        assert!((p - 0.5).abs() < 0.01, "{p}");

        let short = StochasticStream::from_bits(&[true; 10]);
        assert!(matches!(
            decode(&short, &DecoderConfig::moving_average(11)),
            Err(Error::InsufficientBits {
                needed: 11,
                available: 10
            })
        ));
        assert!(decode(
            &StochasticStream::from_bits(&[]),
            &DecoderConfig::moving_average(1)
        )
        .is_err());
    }

    #[test]
    fn stochastic_posterior_examples() {
        let n = 1_000_000;
        let pass =
            stochastic_posterior(Prior::uniform(), &[Evidence::new(0.7).unwrap()], n, 5).unwrap();
        assert!((pass - 0.7).abs() < 0.01, "{pass}");

        let ev = [Evidence::new(0.8).unwrap(), Evidence::new(0.7).unwrap()];
        let p = stochastic_posterior(Prior::new(0.3).unwrap(), &ev, n, 6).unwrap();
        assert!((p - 0.8).abs() < 0.02, "{p}");

        let with_noops = [
            Evidence::new(0.8).unwrap(),
            Evidence::new(0.5).unwrap(),
            Evidence::new(0.7).unwrap(),
            Evidence::new(0.5).unwrap(),
        ];
        let q = stochastic_posterior(Prior::new(0.3).unwrap(), &with_noops, n, 6).unwrap();
        assert!((q - 0.8).abs() < 0.02, "{q}");

        let alone = stochastic_posterior(Prior::new(0.25).unwrap(), &[], n, 1).unwrap();
        assert!((alone - 0.25).abs() < 0.005);
    }

    #[test]
    fn dump_round_trip_is_msb_first() {
        let s = StochasticStream::from_bits(&[
            true, false, false, false, false, false, false, true, true,
        ]);
        let f = tempfile::NamedTempFile::new().unwrap();
        write_dump(&s, Some(3), f.path()).unwrap();
        let bytes = std::fs::read(f.path()).unwrap();
        let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(&bytes[newline + 1..], &[0b1000_0001, 0b1000_0000]);
        let (header, back) = read_dump(f.path()).unwrap();
        assert_eq!(header.n_bits, 9);
        assert_eq!(header.seed, Some(3));
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn word_scan_matches_truth_table(
            ps in prop::collection::vec(0.0..=1.0f64, 2..5),
            len in 1usize..400,
            seed in any::<u64>(),
        ) {
            let streams: Vec<_> = ps
                .iter()
                .enumerate()
                .map(|(i, &p)| generate_stream(p, len, derive_seed(seed, i as u64)).unwrap())
                .collect();
            let fast = run_c_network(&streams).unwrap();
            let slow = reference_scan(&streams);
            prop_assert_eq!(fast.bits().collect::<Vec<_>>(), slow.clone());

            // Output changes only on unanimous inputs.
            let mut prev = false;
            for (i, &q) in slow.iter().enumerate() {
                if q != prev {
                    prop_assert!(streams.iter().all(|s| s.bit(i) == q));
                }
                prev = q;
            }
        }

        #[test]
        fn range_popcount(bits in prop::collection::vec(any::<bool>(), 1..300), a in 0usize..300, b in 0usize..300) {
            let s = StochasticStream::from_bits(&bits);
            let (lo, hi) = (a.min(b).min(bits.len()), a.max(b).min(bits.len()));
            let want = bits[lo..hi].iter().filter(|&&x| x).count() as u64;
            prop_assert_eq!(s.count_ones_in(lo, hi), want);
        }
    }
}
