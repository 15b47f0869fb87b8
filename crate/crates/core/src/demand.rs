//! Stochastic arrival stream: piecewise-constant Poisson arrivals with vehicle
//! class and occupancy.

use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{salted_substream, substream, Stream};
use crate::vehicle::VehicleClass;

/// An exact rational quantity; hourly rates and scale factors use it so that
/// scaling by `k` and then `1/k` is lossless.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact(pub Ratio<i64>);

impl Exact {
    pub fn from_integer(n: i64) -> Self {
        Exact(Ratio::from_integer(n))
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().expect("ratio converts to f64")
    }

    pub fn is_positive(self) -> bool {
        self.0 > Ratio::zero()
    }

    /// Parses `"3"`, `"2.5"`, `"-0.125"`, or `"1000/3"` exactly.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            return (d != 0).then(|| Exact(Ratio::new(n, d)));
        }
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int, frac) = body.split_once('.').unwrap_or((body, ""));
        if int.is_empty() && frac.is_empty() {
            return None;
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) || frac.len() > 15 {
            return None;
        }
        let digits = format!("{int}{frac}");
        let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().ok()? };
        let denom = 10i64.checked_pow(frac.len() as u32)?;
        let r = Ratio::new(numer, denom);
        Some(Exact(if neg { -r } else { r }))
    }

    /// Exact value of the shortest decimal that round-trips `x`.
    pub fn from_f64(x: f64) -> Option<Self> {
        if !x.is_finite() {
            return None;
        }
        Self::parse(&format!("{x}"))
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for Exact {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_integer() {
            s.serialize_i64(*self.0.numer())
        } else {
            s.collect_str(self)
        }
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = Exact;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or a \"p/q\" string")
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> std::result::Result<Exact, E> {
                Ok(Exact::from_integer(v))
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<Exact, E> {
                i64::try_from(v).map(Exact::from_integer).map_err(E::custom)
            }
            fn visit_f64<E: serde::de::Error>(self, v: f64) -> std::result::Result<Exact, E> {
                Exact::from_f64(v).ok_or_else(|| E::custom(format!("{v} is not an exact decimal")))
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> std::result::Result<Exact, E> {
                Exact::parse(v).ok_or_else(|| E::custom(format!("{v:?} is not a number")))
            }
        }
        d.deserialize_any(V)
    }
}

/// Constant-rate stretch of the profile.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandInterval {
    pub start: f64,
    pub end: f64,
    /// Expected vehicles per hour.
    pub veh_per_hour: Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassDist {
    pub p_hdv: f64,
    pub p_cav: f64,
    pub p_bus: f64,
}

impl ClassDist {
    /// Cars split between CAV and HDV by `cav_proportion`; the bus share is kept.
    pub fn with_cav_proportion(self, cav_proportion: f64) -> ClassDist {
        let cars = 1.0 - self.p_bus;
        ClassDist {
            p_hdv: cars * (1.0 - cav_proportion),
            p_cav: cars * cav_proportion,
            p_bus: self.p_bus,
        }
    }

    /// Class for a uniform draw `u` in [0, 1). Thresholds are nested so that
    /// raising the CAV share only relabels HDVs as CAVs.
    pub fn classify(&self, u: f64) -> VehicleClass {
        if u < self.p_bus {
            VehicleClass::Bus
        } else if u < self.p_bus + self.p_cav {
            VehicleClass::Cav
        } else {
            VehicleClass::Hdv
        }
    }
}

/// Time-varying arrival rate with class and occupancy distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandProfile {
    pub intervals: Vec<DemandInterval>,
    pub class_dist: ClassDist,
    /// Probabilities of 1, 2, … passengers in a car.
    pub car_passenger_pmf: Vec<f64>,
    pub bus_passengers_mean: f64,
}

/// Default car occupancy: P(1) = 0.63 with a decreasing tail over 2..5.
pub const DEFAULT_CAR_PASSENGER_PMF: [f64; 5] = [0.63, 0.22, 0.09, 0.04, 0.02];
pub const DEFAULT_BUS_PASSENGERS_MEAN: f64 = 7.05;
pub const DEFAULT_P_BUS: f64 = 0.01;

impl DemandProfile {
    /// Constant expected demand over one window starting at 0.
    pub fn constant(veh_per_hour: i64, duration_s: f64) -> DemandProfile {
        DemandProfile {
            intervals: vec![DemandInterval {
                start: 0.0,
                end: duration_s,
                veh_per_hour: Exact::from_integer(veh_per_hour),
            }],
            class_dist: ClassDist {
                p_hdv: 1.0 - DEFAULT_P_BUS,
                p_cav: 0.0,
                p_bus: DEFAULT_P_BUS,
            },
            car_passenger_pmf: DEFAULT_CAR_PASSENGER_PMF.to_vec(),
            bus_passengers_mean: DEFAULT_BUS_PASSENGERS_MEAN,
        }
    }

    pub fn start(&self) -> f64 {
        self.intervals.first().map_or(0.0, |i| i.start)
    }

    pub fn end(&self) -> f64 {
        self.intervals.last().map_or(0.0, |i| i.end)
    }

    /// Expected number of arrivals over the whole profile.
    pub fn expected_count(&self) -> f64 {
        self.intervals
            .iter()
            .map(|i| i.veh_per_hour.to_f64() * (i.end - i.start) / 3600.0)
            .sum()
    }

    pub fn bus_passengers(&self) -> u32 {
        (self.bus_passengers_mean.round() as u32).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(Error::validation("demand profile has no intervals"));
        }
        for (k, iv) in self.intervals.iter().enumerate() {
            if !(iv.start < iv.end) || !iv.start.is_finite() || !iv.end.is_finite() {
                return Err(Error::validation(format!("interval {k} must have start < end")));
            }
            if iv.veh_per_hour.0 < Ratio::zero() {
                return Err(Error::validation(format!("interval {k} has a negative rate")));
            }
            if k > 0 && self.intervals[k - 1].end != iv.start {
                return Err(Error::validation(format!(
                    "intervals must be contiguous: interval {k} starts at {} but previous ends at {}",
                    iv.start,
                    self.intervals[k - 1].end
                )));
            }
        }
        let c = self.class_dist;
        for (name, p) in [("p_hdv", c.p_hdv), ("p_cav", c.p_cav), ("p_bus", c.p_bus)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} = {p} must lie in [0, 1]")));
            }
        }
        let total = c.p_hdv + c.p_cav + c.p_bus;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "class probabilities must sum to 1 (p_hdv + p_cav + p_bus = {total})"
            )));
        }
        if self.car_passenger_pmf.is_empty() || self.car_passenger_pmf.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::validation("car_passenger_pmf entries must lie in [0, 1]"));
        }
        let pmf_total: f64 = self.car_passenger_pmf.iter().sum();
        if (pmf_total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("car_passenger_pmf must sum to 1 (sums to {pmf_total})")));
        }
        if !(self.bus_passengers_mean > 0.0) || !self.bus_passengers_mean.is_finite() {
            return Err(Error::validation("bus_passengers_mean must be positive"));
        }
        Ok(())
    }

    /// Passenger count for a uniform draw `u` in [0, 1).
    pub fn car_passengers(&self, u: f64) -> u32 {
        let mut acc = 0.0;
        for (k, p) in self.car_passenger_pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return k as u32 + 1;
            }
        }
        self.car_passenger_pmf.len() as u32
    }
}

/// Divides every rate by `k`.
pub fn scale_profile(profile: &DemandProfile, k: Exact) -> Result<DemandProfile> {
    if !k.is_positive() {
        return Err(Error::InvalidScale(k.to_string()));
    }
    let mut out = profile.clone();
    for iv in &mut out.intervals {
        iv.veh_per_hour = Exact(iv.veh_per_hour.0 / k.0);
    }
    Ok(out)
}

/// One scheduled vehicle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrivalEvent {
    pub depart_wanted: f64,
    pub class: VehicleClass,
    pub passengers: u32,
}

/// Random sources for [`sample_arrivals`], one per purpose.
#[derive(Clone, Debug)]
pub struct DemandRng {
    pub times: ChaCha8Rng,
    pub classes: ChaCha8Rng,
    pub passengers: ChaCha8Rng,
}

/// How vehicle classes relate across CAV proportions within a replicate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassMode {
    /// One uniform draw per vehicle, thresholded by the class distribution.
    #[default]
    Coupled,
    /// Class draws reseeded per proportion.
    Resample,
}

impl DemandRng {
    pub fn from_seed(seed: u64) -> Self {
        DemandRng {
            times: substream(seed, Stream::ArrivalTimes),
            classes: substream(seed, Stream::Class),
            passengers: substream(seed, Stream::Passengers),
        }
    }

    /// Streams for a sweep cell; under `Resample` the class stream also
    /// depends on the CAV proportion.
    pub fn for_cell(seed: u64, mode: ClassMode, cav_proportion: f64) -> Self {
        let mut rng = Self::from_seed(seed);
        if mode == ClassMode::Resample {
            rng.classes = salted_substream(seed, Stream::Class, cav_proportion.to_bits());
        }
        rng
    }
}

/// Samples a non-homogeneous Poisson arrival stream by time rescaling: one
/// unit exponential per gap, consumed at the local rate and carried across
/// interval boundaries.
pub fn sample_arrivals(profile: &DemandProfile, rng: &mut DemandRng) -> Vec<ArrivalEvent> {
    let mut times = Vec::new();
    let mut budget = unit_exp(&mut rng.times);
    for iv in &profile.intervals {
        let rate = iv.veh_per_hour.to_f64() / 3600.0;
        let mut t = iv.start;
        if rate <= 0.0 {
            continue;
        }
        loop {
            let dt = budget / rate;
            if t + dt < iv.end {
                t += dt;
                times.push(t);
                budget = unit_exp(&mut rng.times);
            } else {
                budget -= (iv.end - t) * rate;
                break;
            }
        }
    }
    let bus_pax = profile.bus_passengers();
    times
        .into_iter()
        .map(|t| {
            let class = profile.class_dist.classify(rng.classes.random::<f64>());
            let car_pax = profile.car_passengers(rng.passengers.random::<f64>());
            ArrivalEvent {
                depart_wanted: t,
                class,
                passengers: if class == VehicleClass::Bus { bus_pax } else { car_pax },
            }
        })
        .collect()
}

fn unit_exp(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln()
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ProfileFile {
    /// (start_s, end_s, veh_per_hour)
    intervals: Vec<(f64, f64, Exact)>,
    #[serde(default)]
    p_hdv: Option<f64>,
    #[serde(default)]
    p_cav: Option<f64>,
    #[serde(default)]
    p_bus: Option<f64>,
    #[serde(default)]
    car_passenger_pmf: Option<Vec<f64>>,
    #[serde(default)]
    bus_passengers_mean: Option<f64>,
}

impl ProfileFile {
    pub(crate) fn into_profile(self) -> DemandProfile {
        let p_bus = self.p_bus.unwrap_or(DEFAULT_P_BUS);
        let p_cav = self.p_cav.unwrap_or(0.0);
        let p_hdv = self.p_hdv.unwrap_or(1.0 - p_bus - p_cav);
        DemandProfile {
            intervals: self
                .intervals
                .into_iter()
                .map(|(start, end, veh_per_hour)| DemandInterval { start, end, veh_per_hour })
                .collect(),
            class_dist: ClassDist { p_hdv, p_cav, p_bus },
            car_passenger_pmf: self.car_passenger_pmf.unwrap_or_else(|| DEFAULT_CAR_PASSENGER_PMF.to_vec()),
            bus_passengers_mean: self.bus_passengers_mean.unwrap_or(DEFAULT_BUS_PASSENGERS_MEAN),
        }
    }

    pub(crate) fn from_profile(p: &DemandProfile) -> Self {
        ProfileFile {
            intervals: p.intervals.iter().map(|i| (i.start, i.end, i.veh_per_hour)).collect(),
            p_hdv: Some(p.class_dist.p_hdv),
            p_cav: Some(p.class_dist.p_cav),
            p_bus: Some(p.class_dist.p_bus),
            car_passenger_pmf: Some(p.car_passenger_pmf.clone()),
            bus_passengers_mean: Some(p.bus_passengers_mean),
        }
    }
}

impl Serialize for DemandProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProfileFile::from_profile(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for DemandProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ProfileFile::deserialize(d).map(ProfileFile::into_profile)
    }
}

/// Parses a profile from TOML text; `origin` names the source in diagnostics.
pub fn parse_profile(text: &str, origin: &Path) -> Result<DemandProfile> {
    let file: ProfileFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })?;
    let profile = file.into_profile();
    profile.validate()?;
    Ok(profile)
}

/// Reads and validates a demand profile file.
pub fn load_profile(path: impl AsRef<Path>) -> Result<DemandProfile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profile(&text, path)
}
