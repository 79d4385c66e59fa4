//! Block-level power, stimulation energy and battery-life arithmetic.
//!
//! Quantities carry their SI unit in the type, so only dimensionally valid
//! products compile (`Joules * Hertz -> Watts`, `Watts * Seconds -> Joules`).

use std::collections::BTreeMap;
use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureKind;

const SECONDS_PER_DAY: f64 = 86_400.0;
const SECONDS_PER_YEAR: f64 = 365.25 * SECONDS_PER_DAY;

macro_rules! unit {
    ($(#[$doc:meta])* $name:ident, $sym:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub f64);

        impl $name {
            pub fn value(self) -> f64 {
                self.0
            }
        }

        impl Add for $name {
            type Output = Self;
            fn add(self, o: Self) -> Self {
                Self(self.0 + o.0)
            }
        }

        impl Sub for $name {
            type Output = Self;
            fn sub(self, o: Self) -> Self {
                Self(self.0 - o.0)
            }
        }

        impl Mul<f64> for $name {
            type Output = Self;
            fn mul(self, k: f64) -> Self {
                Self(self.0 * k)
            }
        }

        impl Div<f64> for $name {
            type Output = Self;
            fn div(self, k: f64) -> Self {
                Self(self.0 / k)
            }
        }

        impl Div for $name {
            type Output = f64;
            fn div(self, o: Self) -> f64 {
                self.0 / o.0
            }
        }

        impl std::iter::Sum for $name {
            fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
                Self(iter.map(|v| v.0).sum())
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{} {}", self.0, $sym)
            }
        }
    };
}

unit!(Volts, "V");
unit!(Amps, "A");
unit!(Ohms, "ohm");
unit!(Seconds, "s");
unit!(Hertz, "Hz");
unit!(Watts, "W");
unit!(Joules, "J");
unit!(WattHours, "Wh");

impl Mul<Hertz> for Joules {
    type Output = Watts;
    fn mul(self, f: Hertz) -> Watts {
        Watts(self.0 * f.0)
    }
}

impl Mul<Seconds> for Watts {
    type Output = Joules;
    fn mul(self, t: Seconds) -> Joules {
        Joules(self.0 * t.0)
    }
}

impl Div<Seconds> for Joules {
    type Output = Watts;
    fn div(self, t: Seconds) -> Watts {
        Watts(self.0 / t.0)
    }
}

impl Div<Watts> for Joules {
    type Output = Seconds;
    fn div(self, p: Watts) -> Seconds {
        Seconds(self.0 / p.0)
    }
}

impl Mul<Hertz> for Seconds {
    type Output = f64;
    fn mul(self, f: Hertz) -> f64 {
        self.0 * f.0
    }
}

impl Amps {
    /// Power dissipated in `r`: I^2 R.
    pub fn ohmic_power(self, r: Ohms) -> Watts {
        Watts(self.0 * self.0 * r.0)
    }
}

impl From<WattHours> for Joules {
    fn from(e: WattHours) -> Joules {
        Joules(e.0 * 3600.0)
    }
}

impl Seconds {
    pub fn years(self) -> f64 {
        self.0 / SECONDS_PER_YEAR
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub supply: Volts,
    pub sample_rate: Hertz,
    pub i_stim_avg: Amps,
    pub i_stim_max: Amps,
    pub r_lead: Ohms,
    pub pulse_width: Seconds,
    pub stim_period: Seconds,
    pub stim_duration_avg: Seconds,
    pub stim_duration_max: Seconds,
    pub battery: WattHours,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            supply: Volts(1.2),
            sample_rate: Hertz(1000.0),
            i_stim_avg: Amps(1e-3),
            i_stim_max: Amps(12e-3),
            r_lead: Ohms(1200.0),
            pulse_width: Seconds(160e-6),
            stim_period: Seconds(5e-3),
            stim_duration_avg: Seconds(0.1),
            stim_duration_max: Seconds(5.0),
            battery: WattHours(3.3),
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("supply", self.supply.0),
            ("sample_rate", self.sample_rate.0),
            ("i_stim_avg", self.i_stim_avg.0),
            ("i_stim_max", self.i_stim_max.0),
            ("r_lead", self.r_lead.0),
            ("pulse_width", self.pulse_width.0),
            ("stim_period", self.stim_period.0),
            ("stim_duration_avg", self.stim_duration_avg.0),
            ("stim_duration_max", self.stim_duration_max.0),
            ("battery", self.battery.0),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
        let duty = self.pulse_width / self.stim_period;
        if duty > 1.0 {
            return Err(Error::Config(format!("duty cycle {duty} exceeds 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockPower {
    /// Sensing and pre-amplification, priced jointly.
    pub sense_preamp: Watts,
    pub fe_by_feature: BTreeMap<FeatureKind, Watts>,
    /// Power of an eight-level lookup table; scales linearly with levels.
    pub lut_per_8_levels: Watts,
    pub trng_bit: Joules,
    pub ce_bit: Joules,
}

impl Default for BlockPower {
    fn default() -> Self {
        Self {
            sense_preamp: Watts(1.2e-6),
            fe_by_feature: BTreeMap::from([
                (FeatureKind::Mean, Watts(1.995e-6)),
                (FeatureKind::MeanAbs, Watts(3.539e-6)),
                (FeatureKind::MeanEnergy, Watts(1.680e-6)),
                (FeatureKind::EnergyMean, Watts(2.879e-6)),
            ]),
            lut_per_8_levels: Watts(493.80e-9),
            trng_bit: Joules(20e-15),
            ce_bit: Joules(20e-15),
        }
    }
}

impl BlockPower {
    pub fn validate(&self) -> Result<()> {
        if self.fe_by_feature.is_empty() {
            return Err(Error::Config("no feature extraction powers given".into()));
        }
        let scalars = [
            self.sense_preamp.0,
            self.lut_per_8_levels.0,
            self.trng_bit.0,
            self.ce_bit.0,
        ];
        let fe = self.fe_by_feature.values().map(|w| w.0);
        if scalars
            .into_iter()
            .chain(fe)
            .any(|v| !(v.is_finite() && v >= 0.0))
        {
            return Err(Error::Config(
                "block powers must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn fe_avg(&self) -> Watts {
        self.fe_by_feature.values().copied().sum::<Watts>() / self.fe_by_feature.len() as f64
    }

    pub fn fe_max(&self) -> Watts {
        self.fe_by_feature
            .values()
            .copied()
            .fold(Watts(0.0), |a, b| if b > a { b } else { a })
    }
}

/// Which feature-extraction figure enters the per-pair total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturePower {
    #[default]
    Average,
    Max,
    Feature(FeatureKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulationProfile {
    pub current: Amps,
    pub pulse_width: Seconds,
    pub pulse_rate: Hertz,
    pub duration: Seconds,
    pub events_per_day: f64,
}

impl StimulationProfile {
    /// Typical responsive stimulation: 6 mA, 160 us pulses at 200 Hz for 100 ms.
    pub fn average(events_per_day: f64) -> Self {
        Self {
            current: Amps(6e-3),
            pulse_width: Seconds(160e-6),
            pulse_rate: Hertz(200.0),
            duration: Seconds(0.1),
            events_per_day,
        }
    }

    /// High-activity stimulation: 12 mA, 200 us pulses at 200 Hz for 100 ms.
    pub fn high_activity(events_per_day: f64) -> Self {
        Self {
            current: Amps(12e-3),
            pulse_width: Seconds(200e-6),
            ..Self::average(events_per_day)
        }
    }

    pub fn none() -> Self {
        Self::average(0.0)
    }

    pub fn duty(&self) -> f64 {
        self.pulse_width * self.pulse_rate
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.current.0,
            self.pulse_width.0,
            self.pulse_rate.0,
            self.duration.0,
            self.events_per_day,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(
                "stimulation parameters must be finite and nonnegative".into(),
            ));
        }
        if self.duty() > 1.0 {
            return Err(Error::Config(format!(
                "stimulation duty {} exceeds 1",
                self.duty()
            )));
        }
        Ok(())
    }
}

pub fn lut_power(levels: usize, blocks: &BlockPower) -> Result<Watts> {
    if levels == 0 {
        return Err(Error::Config(
            "a lookup table needs at least one level".into(),
        ));
    }
    Ok(blocks.lut_per_8_levels * (levels as f64 / 8.0))
}

pub fn rate_power(energy_per_bit: Joules, rate: Hertz) -> Watts {
    energy_per_bit * rate
}

/// Energy of one stimulation event: I^2 R T D.
pub fn stimulation_energy(p: &StimulationProfile, r_lead: Ohms) -> Joules {
    p.current.ohmic_power(r_lead) * p.duration * p.duty()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub sense_preamp: Watts,
    pub feature_extraction: Watts,
    pub lut: Watts,
    pub trng: Watts,
    pub c_element: Watts,
}

impl PowerBreakdown {
    pub fn total(&self) -> Watts {
        self.sense_preamp + self.feature_extraction + self.lut + self.trng + self.c_element
    }
}

/// Detection power of one (feature, channel) pair.
pub fn total_detection_power(
    blocks: &BlockPower,
    fe: FeaturePower,
    lut_levels: usize,
    rate: Hertz,
) -> Result<PowerBreakdown> {
    blocks.validate()?;
    let feature_extraction = match fe {
        FeaturePower::Average => blocks.fe_avg(),
        FeaturePower::Max => blocks.fe_max(),
        FeaturePower::Feature(k) => *blocks
            .fe_by_feature
            .get(&k)
            .ok_or_else(|| Error::Config(format!("no power figure for feature {k}")))?,
    };
    Ok(PowerBreakdown {
        sense_preamp: blocks.sense_preamp,
        feature_extraction,
        lut: lut_power(lut_levels, blocks)?,
        trng: rate_power(blocks.trng_bit, rate),
        c_element: rate_power(blocks.ce_bit, rate),
    })
}

/// Battery life in years with `pairs` detection pairs and stimulation
/// energy averaged over a day.
pub fn battery_life(
    battery: WattHours,
    pairs: usize,
    per_pair: Watts,
    stim: &StimulationProfile,
    r_lead: Ohms,
) -> Result<f64> {
    if pairs == 0 {
        return Err(Error::Config(
            "at least one detection pair is required".into(),
        ));
    }
    stim.validate()?;
    let stim_power = stimulation_energy(stim, r_lead) * stim.events_per_day / SECONDS_PER_DAY;
    let load = Watts(per_pair.0 * pairs as f64) + Watts(stim_power.0);
    if !(load.0 > 0.0) {
        return Err(Error::Config("total power is zero".into()));
    }
    Ok((Joules::from(battery) / load).years())
}

/// A power/battery scenario; every field may be overridden from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub params: SystemParams,
    pub blocks: BlockPower,
    pub feature_power: FeaturePower,
    pub lut_levels: usize,
    pub pairs: usize,
    pub stimulation: StimulationProfile,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "average".into(),
            params: SystemParams::default(),
            blocks: BlockPower::default(),
            feature_power: FeaturePower::Average,
            lut_levels: 40,
            pairs: 4,
            stimulation: StimulationProfile::average(570.0),
        }
    }
}

impl Scenario {
    /// The low- and high-activity patients: 570 events/day at 6 mA and
    /// 1330 events/day at 12 mA, both with four pairs.
    pub fn standard() -> Vec<Scenario> {
        vec![
            Scenario::default(),
            Scenario {
                name: "high_activity".into(),
                stimulation: StimulationProfile::high_activity(1330.0),
                ..Scenario::default()
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub name: String,
    pub per_block_w: PowerBreakdown,
    /// Detection power of one pair.
    pub total_w: Watts,
    pub pairs: usize,
    pub stimulation_energy_j: Joules,
    pub battery_years: f64,
}

pub fn evaluate_scenario(s: &Scenario) -> Result<PowerReport> {
    s.params.validate()?;
    let per_block = total_detection_power(
        &s.blocks,
        s.feature_power,
        s.lut_levels,
        s.params.sample_rate,
    )?;
    let total = per_block.total();
    Ok(PowerReport {
        name: s.name.clone(),
        per_block_w: per_block,
        total_w: total,
        pairs: s.pairs,
        stimulation_energy_j: stimulation_energy(&s.stimulation, s.params.r_lead),
        battery_years: battery_life(
            s.params.battery,
            s.pairs,
            total,
            &s.stimulation,
            s.params.r_lead,
        )?,
    })
}
