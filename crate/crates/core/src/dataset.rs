//! Trip records: CSV ingestion, label derivation, and the synthetic generator.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Column order of the trip CSV.
pub const CSV_HEADER: [&str; 13] = [
    "record_id",
    "user_id",
    "depart_ts",
    "arrive_ts",
    "origin_lat",
    "origin_lon",
    "dest_lat",
    "dest_lon",
    "age",
    "gender",
    "mobility",
    "route_length_m",
    "note",
];

/// Mean Earth radius used by the great-circle fallback.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Road-network detour applied to great-circle distance.
pub const DETOUR_FACTOR: f64 = 1.3;
pub const DEFAULT_SPEED_LIMIT_KMH: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobility {
    None,
    Cane,
    Wheelchair,
}

impl Mobility {
    pub const ALL: [Mobility; 3] = [Mobility::None, Mobility::Cane, Mobility::Wheelchair];

    pub fn index(self) -> usize {
        match self {
            Mobility::None => 0,
            Mobility::Cane => 1,
            Mobility::Wheelchair => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mobility::None => "none",
            Mobility::Cane => "cane",
            Mobility::Wheelchair => "wheelchair",
        }
    }
}

impl fmt::Display for Mobility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mobility {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Mobility::None),
            "cane" => Ok(Mobility::Cane),
            "wheelchair" => Ok(Mobility::Wheelchair),
            other => Err(format!("unknown mobility {other:?}")),
        }
    }
}

/// One assisted-mobility trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub record_id: u64,
    pub user_id: u64,
    pub depart_ts: i64,
    pub arrive_ts: i64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub dest_lat: f64,
    pub dest_lon: f64,
    pub age: f64,
    /// 0, 1, or 2 (unknown).
    pub gender: u8,
    pub mobility: Mobility,
    pub route_length_m: Option<f64>,
    pub note: String,
}

impl TripRecord {
    pub fn duration_secs(&self) -> i64 {
        self.arrive_ts - self.depart_ts
    }

    pub fn duration_minutes(&self) -> f64 {
        self.duration_secs() as f64 / 60.0
    }

    /// Route length from the record, or the great-circle fallback.
    pub fn route_length_or_fallback(&self) -> f64 {
        self.route_length_m.unwrap_or_else(|| {
            fallback_route_length((self.origin_lat, self.origin_lon), (self.dest_lat, self.dest_lon))
        })
    }

    /// Checks the record-level invariants, returning the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.arrive_ts <= self.depart_ts {
            return Err("arrive_ts<=depart_ts".into());
        }
        for (name, lat) in [("origin_lat", self.origin_lat), ("dest_lat", self.dest_lat)] {
            if !(-90.0..=90.0).contains(&lat) {
                return Err(format!("{name} out of range"));
            }
        }
        for (name, lon) in [("origin_lon", self.origin_lon), ("dest_lon", self.dest_lon)] {
            if !(-180.0..=180.0).contains(&lon) {
                return Err(format!("{name} out of range"));
            }
        }
        if self.gender > 2 {
            return Err("gender must be 0, 1 or 2".into());
        }
        if !self.age.is_finite() || self.age < 0.0 {
            return Err("age must be a non-negative number".into());
        }
        if let Some(len) = self.route_length_m {
            if !len.is_finite() || len < 0.0 {
                return Err("route_length_m must be non-negative".into());
            }
        }
        Ok(())
    }
}

fn parse_field<T: FromStr>(row: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim().parse::<T>().map_err(|_| Error::Row {
        row,
        message: format!("invalid {name} {raw:?}"),
    })
}

/// Reads trips from CSV. Rows are numbered from 1, excluding the header.
pub fn load_trips(path: impl AsRef<Path>) -> Result<Vec<TripRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trips(file)
}

pub fn read_trips<R: std::io::Read>(reader: R) -> Result<Vec<TripRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut columns: HashMap<&str, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let h = h.trim();
        let known = CSV_HEADER
            .iter()
            .find(|c| **c == h)
            .ok_or_else(|| Error::invalid(format!("unexpected column {h:?} in header")))?;
        if columns.insert(known, i).is_some() {
            return Err(Error::invalid(format!("duplicate column {h:?} in header")));
        }
    }
    for c in CSV_HEADER {
        if c != "route_length_m" && !columns.contains_key(c) {
            return Err(Error::invalid(format!("missing column {c:?} in header")));
        }
    }

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let get = |name: &str| -> &str { columns.get(name).and_then(|&i| rec.get(i)).unwrap_or("") };
        let route_raw = get("route_length_m").trim();
        let trip = TripRecord {
            record_id: parse_field(row, "record_id", get("record_id"))?,
            user_id: parse_field(row, "user_id", get("user_id"))?,
            depart_ts: parse_field(row, "depart_ts", get("depart_ts"))?,
            arrive_ts: parse_field(row, "arrive_ts", get("arrive_ts"))?,
            origin_lat: parse_field(row, "origin_lat", get("origin_lat"))?,
            origin_lon: parse_field(row, "origin_lon", get("origin_lon"))?,
            dest_lat: parse_field(row, "dest_lat", get("dest_lat"))?,
            dest_lon: parse_field(row, "dest_lon", get("dest_lon"))?,
            age: parse_field(row, "age", get("age"))?,
            gender: parse_field(row, "gender", get("gender"))?,
            mobility: get("mobility").trim().parse().map_err(|m| Error::Row { row, message: m })?,
            route_length_m: if route_raw.is_empty() {
                None
            } else {
                Some(parse_field(row, "route_length_m", route_raw)?)
            },
            note: get("note").to_string(),
        };
        trip.validate().map_err(|message| Error::Row { row, message })?;
        if !seen.insert(trip.record_id) {
            return Err(Error::DuplicateRecord(trip.record_id));
        }
        out.push(trip);
    }
    Ok(out)
}

pub fn save_trips(path: impl AsRef<Path>, trips: &[TripRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trips(file, trips)
}

pub fn write_trips<W: std::io::Write>(writer: W, trips: &[TripRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for t in trips {
        w.write_record([
            t.record_id.to_string(),
            t.user_id.to_string(),
            t.depart_ts.to_string(),
            t.arrive_ts.to_string(),
            t.origin_lat.to_string(),
            t.origin_lon.to_string(),
            t.dest_lat.to_string(),
            t.dest_lon.to_string(),
            t.age.to_string(),
            t.gender.to_string(),
            t.mobility.to_string(),
            t.route_length_m.map(|v| v.to_string()).unwrap_or_default(),
            t.note.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Minutes needed to drive `route_length_m` at `speed_limit_kmh`.
pub fn naive_travel_time(route_length_m: f64, speed_limit_kmh: f64) -> Result<f64> {
    if !(speed_limit_kmh > 0.0) {
        return Err(Error::invalid(format!(
            "speed limit must be positive, got {speed_limit_kmh}"
        )));
    }
    if !(route_length_m >= 0.0) {
        return Err(Error::invalid(format!(
            "route length must be non-negative, got {route_length_m}"
        )));
    }
    Ok(route_length_m / (speed_limit_kmh * 1000.0 / 60.0))
}

/// Haversine distance on the mean-radius sphere.
pub fn haversine_m(origin: (f64, f64), dest: (f64, f64)) -> f64 {
    let (lat1, lon1) = (origin.0.to_radians(), origin.1.to_radians());
    let (lat2, lon2) = (dest.0.to_radians(), dest.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Route length estimate used when the record carries none.
pub fn fallback_route_length(origin: (f64, f64), dest: (f64, f64)) -> f64 {
    haversine_m(origin, dest) * DETOUR_FACTOR
}

/// One-minute duration classes, clamped at `clamp_max_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelSpec {
    pub clamp_max_min: usize,
}

impl Default for LabelSpec {
    fn default() -> Self {
        Self { clamp_max_min: 120 }
    }
}

impl LabelSpec {
    pub fn new(clamp_max_min: usize) -> Self {
        Self { clamp_max_min }
    }

    pub fn n_classes(&self) -> usize {
        self.clamp_max_min + 1
    }

    pub fn bin_width_min(&self) -> usize {
        1
    }
}

pub fn derive_label(record: &TripRecord, spec: &LabelSpec) -> usize {
    let minutes = record.duration_secs().max(0) / 60;
    (minutes as usize).min(spec.clamp_max_min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_records: usize,
    pub n_latent_groups: usize,
    pub noise_sd_min: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_records: 5193,
            n_latent_groups: 8,
            noise_sd_min: 3.0,
            seed: 2023,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_records == 0 {
            return Err(Error::invalid("n_records must be positive"));
        }
        if self.n_latent_groups == 0 {
            return Err(Error::invalid("n_latent_groups must be at least 1"));
        }
        if !(self.noise_sd_min >= 0.0) {
            return Err(Error::invalid("noise_sd_min must be non-negative"));
        }
        Ok(())
    }
}

// Group-specific note vocabularies; groups beyond the list reuse a theme with a suffix.
const THEMES: [&[&str]; 8] = [
    &["wheelchair", "ramp", "lift", "strap", "secure"],
    &["stairs", "escort", "door", "apartment", "floor"],
    &["call", "phone", "ahead", "ring", "minutes"],
    &["front", "seat", "passenger", "blanket", "window"],
    &["dialysis", "clinic", "appointment", "reception", "nurse"],
    &["dementia", "guide", "family", "handover", "wait"],
    &["oxygen", "tank", "careful", "equipment", "carry"],
    &["walker", "slow", "assist", "umbrella", "rain"],
];
const FILLER: [&str; 6] = ["please", "driver", "today", "note", "pickup", "usual"];

// Oct 1 2023 00:00 UTC.
const EPOCH_BASE: i64 = 1_696_118_400;
const DEPOT: (f64, f64) = (34.80, 135.50);

struct Archetype {
    base_min: f64,
    /// Mean straight-line trip length in degrees.
    dist_deg: f64,
    mobility_mix: [f64; 3],
    center: (f64, f64),
    hour: f64,
    age_mean: f64,
    vocab: Vec<String>,
}

/// Grid rank of group `g` on the second latent axis: `(stride·g + offset)
/// mod n` with a stride coprime to `n`, and the offset that leaves the two
/// axes least correlated.
fn second_axis_rank(g: usize, n: usize) -> usize {
    let stride = (2..n).find(|s| gcd(*s, n) == 1 && s * s >= n).unwrap_or(1);
    let mean = (n as f64 - 1.0) / 2.0;
    let offset = (0..n)
        .min_by(|&a, &b| {
            let cov = |o: usize| {
                (0..n)
                    .map(|i| (i as f64 - mean) * (((i * stride + o) % n) as f64 - mean))
                    .sum::<f64>()
                    .abs()
            };
            cov(a).total_cmp(&cov(b))
        })
        .unwrap_or(0);
    (g * stride + offset) % n
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

// Each group sits at (u, v) in [0, 1]². `u` sets trip length and rider
// age, `v` sets departure hour and the wheelchair share.
fn archetype(g: usize, n_groups: usize, rng: &mut SeededRng) -> Archetype {
    let theme = THEMES[g % THEMES.len()];
    let suffix = if g < THEMES.len() {
        String::new()
    } else {
        (g / THEMES.len()).to_string()
    };
    let span = (n_groups.max(2) - 1) as f64;
    let u = g as f64 / span;
    let v = second_axis_rank(g, n_groups) as f64 / span;
    let wheelchair = 0.05 + 0.8 * v;
    let cane = 0.1;
    let angle = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
    let radius = rng.uniform(0.02, 0.12);
    Archetype {
        base_min: 6.0 + 42.0 * rng.unit(),
        dist_deg: 0.015 + 0.10 * u,
        mobility_mix: [1.0 - wheelchair - cane, cane, wheelchair],
        center: (DEPOT.0 + radius * angle.sin(), DEPOT.1 + radius * angle.cos()),
        hour: 6.5 + 5.5 * v,
        age_mean: 60.0 + 28.0 * u,
        vocab: theme.iter().map(|w| format!("{w}{suffix}")).collect(),
    }
}

const MOBILITY_OFFSET_MIN: [f64; 3] = [0.0, 3.0, 8.0];
const TRAVEL_COEF: f64 = 1.0;

/// Deterministic synthetic trips with planted group structure.
///
/// Groups are dealt evenly (sizes differ by at most one) and then shuffled.
/// Each group fixes a note vocabulary, a mobility mix, a neighbourhood, a
/// trip length, a time-of-day, an age band, and a base duration; the total
/// duration is
/// `base + travel_time + mobility_offset + N(0, noise_sd)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<TripRecord>> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let groups: Vec<Archetype> = (0..spec.n_latent_groups)
        .map(|g| archetype(g, spec.n_latent_groups, &mut rng))
        .collect();

    let mut membership: Vec<usize> = (0..spec.n_records).map(|i| i % spec.n_latent_groups).collect();
    rng.shuffle(&mut membership);

    let users_per_group = (spec.n_records / spec.n_latent_groups / 8).max(1);
    let mut trips = Vec::with_capacity(spec.n_records);
    for (i, &g) in membership.iter().enumerate() {
        let arch = &groups[g];
        let user_id = (g * 10_000 + rng.below(users_per_group)) as u64;

        let origin = (
            arch.center.0 + 0.01 * rng.normal(),
            arch.center.1 + 0.01 * rng.normal(),
        );
        let dist_deg = arch.dist_deg * (1.0 + 0.1 * rng.normal()).max(0.5);
        let bearing = rng.uniform(0.0, 2.0 * std::f64::consts::PI);
        let dest = (origin.0 + dist_deg * bearing.sin(), origin.1 + dist_deg * bearing.cos());
        let great_circle = haversine_m(origin, dest);
        let route_length_m = if rng.unit() < 0.1 {
            None
        } else {
            Some((great_circle * rng.uniform(1.15, 1.45)).round())
        };
        let route = route_length_m.unwrap_or(great_circle * DETOUR_FACTOR);
        let travel = naive_travel_time(route, DEFAULT_SPEED_LIMIT_KMH)?;

        let u = rng.unit();
        let mobility = if u < arch.mobility_mix[0] {
            Mobility::None
        } else if u < arch.mobility_mix[0] + arch.mobility_mix[1] {
            Mobility::Cane
        } else {
            Mobility::Wheelchair
        };

        let duration_min = arch.base_min
            + TRAVEL_COEF * travel
            + MOBILITY_OFFSET_MIN[mobility.index()]
            + spec.noise_sd_min * rng.normal();
        let duration_s = (duration_min * 60.0).round().max(60.0) as i64;

        let day = rng.below(31) as i64;
        let hour = arch.hour + 0.4 * rng.normal();
        let depart_ts = EPOCH_BASE + day * 86_400 + (hour.clamp(0.0, 23.9) * 3600.0).round() as i64;

        let age = (arch.age_mean + 2.5 * rng.normal()).clamp(40.0, 105.0).round();
        let gender = if rng.unit() < 0.03 { 2 } else { rng.below(2) as u8 };

        let note = if rng.unit() < 0.05 {
            String::new()
        } else {
            let n_words = 2 + rng.below(3);
            let mut words: Vec<&str> = Vec::with_capacity(n_words + 1);
            for _ in 0..n_words {
                words.push(&arch.vocab[rng.below(arch.vocab.len())]);
            }
            if rng.unit() < 0.5 {
                words.push(FILLER[rng.below(FILLER.len())]);
            }
            words.join(" ")
        };

        trips.push(TripRecord {
            record_id: (i + 1) as u64,
            user_id,
            depart_ts,
            arrive_ts: depart_ts + duration_s,
            origin_lat: origin.0,
            origin_lon: origin.1,
            dest_lat: dest.0,
            dest_lon: dest.1,
            age,
            gender,
            mobility,
            route_length_m,
            note,
        });
    }
    Ok(trips)
}
