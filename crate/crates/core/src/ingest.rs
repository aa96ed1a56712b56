//! Check-in and label file parsing, active-user filtering and hour bucketing.
//!
//! File formats (UTF-8, one record per line, no header, `,` by default):
//!
//! * check-ins: `user_id,timestamp,latitude,longitude,location_id`
//! * user labels: `user_id,gender,race,age` (empty field = absent)
//! * location labels: `location_id,category`
//! * fine location categories: `location_id,fine_category`
//!
//! Malformed lines are skipped and reported, never fatal. Blank lines are
//! ignored.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Task, AGE_CLASSES, CATEGORY_CLASSES, GENDER_CLASSES, RACE_CLASSES};

/// One user visiting one location at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    pub user_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub latitude: f64,
    pub longitude: f64,
    pub location_id: String,
}

impl CheckIn {
    pub fn validate(&self) -> Result<()> {
        validate_id(&self.user_id, "user_id")?;
        validate_id(&self.location_id, "location_id")?;
        if self.timestamp < 0 {
            return Err(Error::Malformed(format!("negative timestamp {}", self.timestamp)));
        }
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(Error::Malformed(format!("latitude {} out of range", self.latitude)));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::Malformed(format!("longitude {} out of range", self.longitude)));
        }
        Ok(())
    }
}

/// Identifiers end up inside space-separated walk and embedding files.
fn validate_id(id: &str, field: &str) -> Result<()> {
    if id.is_empty() {
        return Err(Error::Malformed(format!("empty {field}")));
    }
    if id.chars().any(char::is_whitespace) {
        return Err(Error::Malformed(format!("{field} `{id}` contains whitespace")));
    }
    Ok(())
}

/// A location at a given hour bucket.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TemporalLocation {
    pub location_id: String,
    pub hour_bucket: u8,
}

/// A user at a given hour bucket.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TemporalUser {
    pub user_id: String,
    pub hour_bucket: u8,
}

macro_rules! label_enum {
    ($name:ident, $names:ident, [$($variant:ident),+]) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn name(self) -> &'static str {
                $names[self as usize]
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim();
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name().eq_ignore_ascii_case(s))
                    .ok_or_else(|| {
                        Error::Malformed(format!("unknown {} `{s}`", stringify!($name).to_lowercase()))
                    })
            }
        }
    };
}

label_enum!(Gender, GENDER_CLASSES, [Female, Male]);
label_enum!(Race, RACE_CLASSES, [Asian, White, African]);
label_enum!(AgeGroup, AGE_CLASSES, [From15To20, From21To25, From26To36]);
label_enum!(
    Category,
    CATEGORY_CLASSES,
    [Entertainment, University, Food, Nightclub, Outdoor, Professional, Residence, Shop, Transportation]
);

/// Maps an integer age onto the three age groups; ages outside 15..=36 have no group.
pub fn discretize_age(age: i64) -> Option<AgeGroup> {
    match age {
        15..=20 => Some(AgeGroup::From15To20),
        21..=25 => Some(AgeGroup::From21To25),
        26..=36 => Some(AgeGroup::From26To36),
        _ => None,
    }
}

/// Demographic ground truth for a user. The raw age is kept so label files
/// can be rewritten verbatim; the group is derived from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserLabels {
    pub gender: Option<Gender>,
    pub race: Option<Race>,
    pub age: Option<i64>,
    pub age_group: Option<AgeGroup>,
}

impl UserLabels {
    pub fn new(gender: Option<Gender>, race: Option<Race>, age: Option<i64>) -> Self {
        UserLabels {
            gender,
            race,
            age,
            age_group: age.and_then(discretize_age),
        }
    }

    pub fn has_any(&self) -> bool {
        self.gender.is_some() || self.race.is_some() || self.age_group.is_some()
    }

    pub fn class_index(&self, task: Task) -> Option<usize> {
        match task {
            Task::Gender => self.gender.map(Gender::index),
            Task::Race => self.race.map(Race::index),
            Task::Age => self.age_group.map(AgeGroup::index),
            Task::Category => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationLabel {
    pub location_id: String,
    pub category: Category,
}

/// How many hour buckets the day is split into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HourBuckets {
    /// 24 buckets, one per hour of day.
    Hourly,
    /// A single bucket: temporal information is dropped.
    Collapsed,
}

impl HourBuckets {
    pub fn count(self) -> u8 {
        match self {
            HourBuckets::Hourly => 24,
            HourBuckets::Collapsed => 1,
        }
    }

    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            24 => Ok(HourBuckets::Hourly),
            1 => Ok(HourBuckets::Collapsed),
            other => Err(Error::InvalidConfig(format!(
                "temporal bucket count must be 24 or 1, got {other}"
            ))),
        }
    }
}

/// Returns the 1-based hour-of-day bucket of `timestamp` shifted by `utc_offset_hours`.
pub fn hour_bucket(timestamp: i64, utc_offset_hours: i32) -> u8 {
    debug_assert!(timestamp >= 0);
    debug_assert!((-12..=14).contains(&utc_offset_hours));
    let local = timestamp + i64::from(utc_offset_hours) * 3600;
    (local.rem_euclid(86_400) / 3600) as u8 + 1
}

/// Drops every check-in of users with fewer than `threshold` check-ins.
/// Order of the surviving records is preserved.
pub fn filter_active_users(checkins: Vec<CheckIn>, threshold: u32) -> Vec<CheckIn> {
    if threshold <= 1 {
        return checkins;
    }
    let mut counts: HashMap<&str, u32> = HashMap::new();
    for c in &checkins {
        *counts.entry(c.user_id.as_str()).or_default() += 1;
    }
    let keep: Vec<bool> = checkins
        .iter()
        .map(|c| counts[c.user_id.as_str()] >= threshold)
        .collect();
    checkins
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect()
}

/// Field delimiter of the record files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordFormat {
    pub delimiter: char,
}

impl Default for RecordFormat {
    fn default() -> Self {
        RecordFormat { delimiter: ',' }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

/// Records parsed from one file plus the lines that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejected: Vec<RejectedLine>,
}

impl<T> Parsed<T> {
    pub fn rejected_count(&self) -> usize {
        self.rejected.len()
    }
}

fn parse_lines<R, T, F>(mut reader: R, format: RecordFormat, fields: usize, mut parse: F) -> std::io::Result<Parsed<T>>
where
    R: BufRead,
    F: FnMut(&[&str]) -> Result<T>,
{
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let Ok(line) = std::str::from_utf8(&buf) else {
            rejected.push(RejectedLine {
                line: line_no,
                reason: "invalid UTF-8".into(),
            });
            continue;
        };
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(format.delimiter).collect();
        if parts.len() != fields {
            rejected.push(RejectedLine {
                line: line_no,
                reason: format!("expected {fields} fields, found {}", parts.len()),
            });
            continue;
        }
        match parse(&parts) {
            Ok(r) => records.push(r),
            Err(e) => rejected.push(RejectedLine {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }
    Ok(Parsed { records, rejected })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn parse_field<T: FromStr>(value: &str, field: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Malformed(format!("cannot parse {field} `{value}`")))
}

fn parse_checkin(f: &[&str]) -> Result<CheckIn> {
    let c = CheckIn {
        user_id: f[0].trim().to_string(),
        timestamp: parse_field(f[1], "timestamp")?,
        latitude: parse_field(f[2], "latitude")?,
        longitude: parse_field(f[3], "longitude")?,
        location_id: f[4].trim().to_string(),
    };
    c.validate()?;
    Ok(c)
}

pub fn parse_checkins_from<R: BufRead>(reader: R, format: RecordFormat) -> std::io::Result<Parsed<CheckIn>> {
    parse_lines(reader, format, 5, parse_checkin)
}

pub fn parse_checkins(path: impl AsRef<Path>, format: RecordFormat) -> Result<Parsed<CheckIn>> {
    let path = path.as_ref();
    parse_checkins_from(open(path)?, format).map_err(|e| Error::io(path, e))
}

fn optional<T: FromStr<Err = Error>>(value: &str) -> Result<Option<T>> {
    let v = value.trim();
    if v.is_empty() {
        Ok(None)
    } else {
        v.parse().map(Some)
    }
}

fn parse_user_label(f: &[&str]) -> Result<(String, UserLabels)> {
    let id = f[0].trim().to_string();
    validate_id(&id, "user_id")?;
    let age = match f[3].trim() {
        "" => None,
        v => Some(parse_field::<i64>(v, "age")?),
    };
    let labels = UserLabels::new(optional(f[1])?, optional(f[2])?, age);
    if !labels.has_any() {
        return Err(Error::Malformed(format!("user `{id}` has no usable label")));
    }
    Ok((id, labels))
}

/// Parses a user-label file. Duplicate ids keep the first record.
pub fn parse_user_labels_from<R: BufRead>(
    reader: R,
    format: RecordFormat,
) -> std::io::Result<Parsed<(String, UserLabels)>> {
    let mut parsed = parse_lines(reader, format, 4, parse_user_label)?;
    dedupe_first(&mut parsed, |r| r.0.clone());
    Ok(parsed)
}

pub fn parse_user_labels(path: impl AsRef<Path>, format: RecordFormat) -> Result<Parsed<(String, UserLabels)>> {
    let path = path.as_ref();
    parse_user_labels_from(open(path)?, format).map_err(|e| Error::io(path, e))
}

fn parse_location_label(f: &[&str]) -> Result<LocationLabel> {
    let location_id = f[0].trim().to_string();
    validate_id(&location_id, "location_id")?;
    Ok(LocationLabel {
        location_id,
        category: f[1].parse()?,
    })
}

pub fn parse_location_labels_from<R: BufRead>(
    reader: R,
    format: RecordFormat,
) -> std::io::Result<Parsed<LocationLabel>> {
    let mut parsed = parse_lines(reader, format, 2, parse_location_label)?;
    dedupe_first(&mut parsed, |r| r.location_id.clone());
    Ok(parsed)
}

pub fn parse_location_labels(path: impl AsRef<Path>, format: RecordFormat) -> Result<Parsed<LocationLabel>> {
    let path = path.as_ref();
    parse_location_labels_from(open(path)?, format).map_err(|e| Error::io(path, e))
}

fn parse_fine(f: &[&str]) -> Result<(String, String)> {
    let location_id = f[0].trim().to_string();
    let fine = f[1].trim().to_string();
    validate_id(&location_id, "location_id")?;
    validate_id(&fine, "fine_category")?;
    Ok((location_id, fine))
}

pub fn parse_location_fine_from<R: BufRead>(
    reader: R,
    format: RecordFormat,
) -> std::io::Result<Parsed<(String, String)>> {
    let mut parsed = parse_lines(reader, format, 2, parse_fine)?;
    dedupe_first(&mut parsed, |r| r.0.clone());
    Ok(parsed)
}

pub fn parse_location_fine(path: impl AsRef<Path>, format: RecordFormat) -> Result<Parsed<(String, String)>> {
    let path = path.as_ref();
    parse_location_fine_from(open(path)?, format).map_err(|e| Error::io(path, e))
}

fn dedupe_first<T>(parsed: &mut Parsed<T>, key: impl Fn(&T) -> String) {
    let mut seen = std::collections::HashSet::new();
    let mut kept = Vec::with_capacity(parsed.records.len());
    for (i, r) in std::mem::take(&mut parsed.records).into_iter().enumerate() {
        let k = key(&r);
        if seen.insert(k.clone()) {
            kept.push(r);
        } else {
            parsed.rejected.push(RejectedLine {
                line: 0,
                reason: format!("duplicate id `{k}` (record {})", i + 1),
            });
        }
    }
    parsed.records = kept;
}

pub fn write_checkins<W: Write>(mut w: W, checkins: &[CheckIn], format: RecordFormat) -> std::io::Result<()> {
    let d = format.delimiter;
    for c in checkins {
        writeln!(
            w,
            "{}{d}{}{d}{}{d}{}{d}{}",
            c.user_id, c.timestamp, c.latitude, c.longitude, c.location_id
        )?;
    }
    Ok(())
}

pub fn write_user_labels<'a, W, I>(mut w: W, labels: I, format: RecordFormat) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a UserLabels)>,
{
    let d = format.delimiter;
    for (id, l) in labels {
        let gender = l.gender.map(Gender::name).unwrap_or("");
        let race = l.race.map(Race::name).unwrap_or("");
        let age = l.age.map(|a| a.to_string()).unwrap_or_default();
        writeln!(w, "{id}{d}{gender}{d}{race}{d}{age}")?;
    }
    Ok(())
}

pub fn write_location_labels<'a, W, I>(mut w: W, labels: I, format: RecordFormat) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a LocationLabel>,
{
    let d = format.delimiter;
    for l in labels {
        writeln!(w, "{}{d}{}", l.location_id, l.category)?;
    }
    Ok(())
}

pub fn write_location_fine<'a, W, I>(mut w: W, fine: I, format: RecordFormat) -> std::io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let d = format.delimiter;
    for (loc, cat) in fine {
        writeln!(w, "{loc}{d}{cat}")?;
    }
    Ok(())
}

/// The canonical in-memory dataset: active users' check-ins plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub checkins: Vec<CheckIn>,
    pub user_labels: BTreeMap<String, UserLabels>,
    pub location_labels: BTreeMap<String, LocationLabel>,
    pub min_checkins_per_user: u32,
    pub buckets: HourBuckets,
    pub utc_offset_hours: i32,
}

impl Dataset {
    /// Builds a dataset, dropping users below `min_checkins_per_user`.
    pub fn new(
        checkins: Vec<CheckIn>,
        user_labels: BTreeMap<String, UserLabels>,
        location_labels: BTreeMap<String, LocationLabel>,
        min_checkins_per_user: u32,
        buckets: HourBuckets,
        utc_offset_hours: i32,
    ) -> Result<Self> {
        if min_checkins_per_user == 0 {
            return Err(Error::InvalidConfig("min_checkins must be positive".into()));
        }
        if !(-12..=14).contains(&utc_offset_hours) {
            return Err(Error::InvalidConfig(format!(
                "utc_offset_hours {utc_offset_hours} outside [-12, 14]"
            )));
        }
        Ok(Dataset {
            checkins: filter_active_users(checkins, min_checkins_per_user),
            user_labels,
            location_labels,
            min_checkins_per_user,
            buckets,
            utc_offset_hours,
        })
    }

    /// The hour bucket a check-in falls into under this dataset's resolution.
    pub fn bucket(&self, c: &CheckIn) -> u8 {
        match self.buckets {
            HourBuckets::Hourly => hour_bucket(c.timestamp, self.utc_offset_hours),
            HourBuckets::Collapsed => 1,
        }
    }

    pub fn with_buckets(mut self, buckets: HourBuckets) -> Self {
        self.buckets = buckets;
        self
    }

    pub fn user_class(&self, task: Task, user_id: &str) -> Option<usize> {
        self.user_labels.get(user_id).and_then(|l| l.class_index(task))
    }

    pub fn location_class(&self, location_id: &str) -> Option<usize> {
        self.location_labels.get(location_id).map(|l| l.category.index())
    }

    /// Class of the entity that a task labels for this check-in, if labeled.
    pub fn checkin_class(&self, task: Task, c: &CheckIn) -> Option<usize> {
        match task {
            Task::Category => self.location_class(&c.location_id),
            _ => self.user_class(task, &c.user_id),
        }
    }

    pub fn user_count(&self) -> usize {
        let mut ids: Vec<&str> = self.checkins.iter().map(|c| c.user_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Replaces every check-in's location id by `mapping[location_id]`.
    /// Check-ins at unmapped locations are dropped; returns how many.
    pub fn relabel_locations(&mut self, mapping: &BTreeMap<String, String>) -> usize {
        let before = self.checkins.len();
        self.checkins.retain_mut(|c| match mapping.get(&c.location_id) {
            Some(fine) => {
                c.location_id.clone_from(fine);
                true
            }
            None => false,
        });
        before - self.checkins.len()
    }

    /// Writes the three record files into `dir` using the default names.
    pub fn write_files(&self, dir: &Path) -> Result<DatasetPaths> {
        let paths = DatasetPaths::in_dir(dir);
        let fmt = RecordFormat::default();
        write_file(&paths.checkins, |w| write_checkins(w, &self.checkins, fmt))?;
        if let Some(p) = &paths.user_labels {
            write_file(p, |w| {
                write_user_labels(w, self.user_labels.iter().map(|(k, v)| (k.as_str(), v)), fmt)
            })?;
        }
        if let Some(p) = &paths.location_labels {
            write_file(p, |w| write_location_labels(w, self.location_labels.values(), fmt))?;
        }
        Ok(DatasetPaths {
            location_fine: None,
            ..paths
        })
    }
}

pub(crate) fn write_file(
    path: &Path,
    body: impl FnOnce(&mut std::io::BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Locations of the input record files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub checkins: std::path::PathBuf,
    pub user_labels: Option<std::path::PathBuf>,
    pub location_labels: Option<std::path::PathBuf>,
    pub location_fine: Option<std::path::PathBuf>,
}

impl DatasetPaths {
    pub const CHECKINS: &'static str = "checkins.csv";
    pub const USER_LABELS: &'static str = "users.csv";
    pub const LOCATION_LABELS: &'static str = "locations.csv";
    pub const LOCATION_FINE: &'static str = "location_fine.csv";

    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            checkins: dir.join(Self::CHECKINS),
            user_labels: Some(dir.join(Self::USER_LABELS)),
            location_labels: Some(dir.join(Self::LOCATION_LABELS)),
            location_fine: Some(dir.join(Self::LOCATION_FINE)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub min_checkins: u32,
    pub buckets: HourBuckets,
    pub utc_offset_hours: i32,
    pub format: RecordFormat,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            min_checkins: 20,
            buckets: HourBuckets::Hourly,
            utc_offset_hours: 0,
            format: RecordFormat::default(),
        }
    }
}

/// Counts reported by [`load_dataset`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub checkins_read: usize,
    pub checkins_rejected: usize,
    pub checkins_kept: usize,
    pub users_read: usize,
    pub users_kept: usize,
    pub user_labels_read: usize,
    pub user_labels_rejected: usize,
    pub location_labels_read: usize,
    pub location_labels_rejected: usize,
}

pub fn load_dataset(paths: &DatasetPaths, opts: IngestOptions) -> Result<(Dataset, IngestSummary)> {
    let checkins = parse_checkins(&paths.checkins, opts.format)?;
    for r in checkins.rejected.iter().take(5) {
        log::warn!("{}:{}: {}", paths.checkins.display(), r.line, r.reason);
    }
    let mut summary = IngestSummary {
        checkins_read: checkins.records.len(),
        checkins_rejected: checkins.rejected_count(),
        ..Default::default()
    };
    let mut user_labels = BTreeMap::new();
    if let Some(p) = &paths.user_labels {
        let parsed = parse_user_labels(p, opts.format)?;
        summary.user_labels_read = parsed.records.len();
        summary.user_labels_rejected = parsed.rejected_count();
        user_labels.extend(parsed.records);
    }
    let mut location_labels = BTreeMap::new();
    if let Some(p) = &paths.location_labels {
        let parsed = parse_location_labels(p, opts.format)?;
        summary.location_labels_read = parsed.records.len();
        summary.location_labels_rejected = parsed.rejected_count();
        location_labels.extend(parsed.records.into_iter().map(|l| (l.location_id.clone(), l)));
    }
    let records = checkins.records;
    let users_read = {
        let mut ids: Vec<&str> = records.iter().map(|c| c.user_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    };
    let dataset = Dataset::new(
        records,
        user_labels,
        location_labels,
        opts.min_checkins,
        opts.buckets,
        opts.utc_offset_hours,
    )?;
    summary.users_read = users_read;
    summary.users_kept = dataset.user_count();
    summary.checkins_kept = dataset.checkins.len();
    Ok((dataset, summary))
}
