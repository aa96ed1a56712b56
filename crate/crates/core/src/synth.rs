//! Synthetic check-in corpora with planted demographic structure.
//!
//! Users draw gender, race and age from fixed priors. A fraction of the
//! locations is skewed toward one class of one demographic task. In
//! [`SignalMode::Location`] a user of the owning class picks a skewed
//! location with weight `1 + beta` and everyone else with `1 - beta`. In
//! [`SignalMode::Hour`] location choice is unskewed; instead, inside a
//! three-hour window at each skewed location, the owning class's hour weights
//! are multiplied by `1 + beta` and the other classes' by `1 - beta`.
//!
//! Each user also keeps a few routine locations, drawn once with the same
//! class-aware weights, and sends `routine_share` of their check-ins there.
//!
//! Every location has one of nine categories, a fine category and an hour
//! profile with closed hours. All draws come from one seeded stream, so a
//! given config reproduces the same files byte for byte.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    self, AgeGroup, Category, CheckIn, DatasetPaths, Gender, LocationLabel, Race, RecordFormat, UserLabels,
};
use crate::rng::{stream, ChaCha8Rng, Domain};
use crate::sampling::CumulativeTable;
use crate::task::Task;

/// 2016-01-01T00:00:00Z.
const EPOCH_2016: i64 = 1_451_606_400;
const DAYS_2016: i64 = 366;
const SIGNAL_WINDOW: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    Location,
    Hour,
}

impl std::str::FromStr for SignalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "location" => Ok(SignalMode::Location),
            "hour" => Ok(SignalMode::Hour),
            _ => Err(Error::InvalidConfig(format!("unknown signal mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_locations: usize,
    /// Inclusive range of check-ins per user.
    pub checkins_per_user: (u32, u32),
    /// Fraction of locations skewed toward one class.
    pub biased_location_fraction: f64,
    pub bias_strength: f64,
    pub signal_mode: SignalMode,
    pub gender_prior: Vec<f64>,
    pub race_prior: Vec<f64>,
    pub age_prior: Vec<f64>,
    pub category_prior: Vec<f64>,
    /// Location popularity follows `rank^-exponent`; 0 makes all equal.
    pub popularity_exponent: f64,
    /// Size of each user's set of habitual locations, drawn with the same
    /// class-dependent weights as any other visit.
    pub routine_locations: usize,
    /// Share of check-ins made at a uniformly chosen habitual location.
    pub routine_share: f64,
    /// Probability that each user label is withheld.
    pub missing_label_rate: f64,
    /// Probability that a user's recorded age falls outside every age group.
    pub out_of_range_age_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 2000,
            n_locations: 300,
            checkins_per_user: (40, 80),
            biased_location_fraction: 0.5,
            bias_strength: 0.8,
            signal_mode: SignalMode::Location,
            gender_prior: vec![0.5, 0.5],
            race_prior: vec![0.4, 0.4, 0.2],
            age_prior: vec![0.3, 0.4, 0.3],
            category_prior: vec![1.0 / 9.0; 9],
            popularity_exponent: 0.0,
            routine_locations: 3,
            routine_share: 0.8,
            missing_label_rate: 0.0,
            out_of_range_age_rate: 0.0,
            seed: 1,
        }
    }
}

fn check_prior(name: &str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::InvalidConfig(format!("{name} needs {len} entries, got {}", p.len())));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("{name} must be a probability vector")));
    }
    Ok(())
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_locations == 0 {
            return Err(Error::InvalidConfig("need at least one user and one location".into()));
        }
        let (lo, hi) = self.checkins_per_user;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!("bad check-in range {lo}..={hi}")));
        }
        check_unit("biased_location_fraction", self.biased_location_fraction)?;
        check_unit("bias_strength", self.bias_strength)?;
        check_unit("missing_label_rate", self.missing_label_rate)?;
        check_unit("routine_share", self.routine_share)?;
        check_unit("out_of_range_age_rate", self.out_of_range_age_rate)?;
        check_prior("gender_prior", &self.gender_prior, Task::Gender.n_classes())?;
        check_prior("race_prior", &self.race_prior, Task::Race.n_classes())?;
        check_prior("age_prior", &self.age_prior, Task::Age.n_classes())?;
        check_prior("category_prior", &self.category_prior, Task::Category.n_classes())?;
        if !(self.popularity_exponent.is_finite() && self.popularity_exponent >= 0.0) {
            return Err(Error::InvalidConfig("popularity_exponent must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Relative visit weight per hour of day (0..24, UTC).
pub fn hour_profile(category: Category) -> [f64; 24] {
    let mut p = [0.0; 24];
    let mut set = |from: usize, to: usize, w: f64| {
        for h in from..to {
            p[h % 24] = w;
        }
    };
    match category {
        Category::Entertainment => {
            set(12, 18, 1.0);
            set(18, 24, 3.0);
        }
        Category::University => {
            set(8, 12, 3.0);
            set(12, 18, 2.0);
            set(18, 21, 1.0);
        }
        Category::Food => {
            set(7, 11, 1.0);
            set(11, 14, 3.0);
            set(14, 18, 1.0);
            set(18, 22, 3.0);
        }
        Category::Nightclub => {
            set(20, 22, 1.0);
            set(22, 27, 3.0);
        }
        Category::Outdoor => {
            set(6, 10, 1.0);
            set(10, 18, 2.0);
            set(18, 21, 1.0);
        }
        Category::Professional => {
            set(7, 9, 1.0);
            set(9, 17, 3.0);
            set(17, 19, 1.0);
        }
        Category::Residence => {
            set(0, 24, 1.0);
            set(6, 8, 2.0);
            set(19, 24, 3.0);
        }
        Category::Shop => {
            set(10, 17, 2.0);
            set(17, 21, 3.0);
        }
        Category::Transportation => {
            set(5, 7, 1.0);
            set(7, 10, 3.0);
            set(10, 16, 1.0);
            set(16, 19, 3.0);
            set(19, 24, 1.0);
        }
    }
    p
}

/// Second-level categories; each fine category has exactly one parent.
pub fn fine_categories(category: Category) -> &'static [&'static str] {
    match category {
        Category::Entertainment => &["Cinema", "Theater", "Arcade"],
        Category::University => &["Campus", "Library"],
        Category::Food => &["Restaurant", "Cafe", "Bakery"],
        Category::Nightclub => &["Club", "Bar"],
        Category::Outdoor => &["Park", "Beach"],
        Category::Professional => &["Office", "Clinic"],
        Category::Residence => &["Apartment", "House"],
        Category::Shop => &["Mall", "Boutique"],
        Category::Transportation => &["Station", "Airport"],
    }
}

/// The class a skewed location favours, for one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skew {
    pub task: Task,
    pub owner_class: usize,
    /// First hour (UTC, 0..24) of the boosted window in hour mode.
    pub window_start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLocation {
    pub id: String,
    pub category: Category,
    pub fine_category: String,
    pub latitude: f64,
    pub longitude: f64,
    pub popularity: f64,
    pub skew: Option<Skew>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthUser {
    pub id: String,
    pub gender: Gender,
    pub race: Race,
    pub age_group: AgeGroup,
    pub checkins: u32,
}

impl SynthUser {
    fn class(&self, task: Task) -> usize {
        match task {
            Task::Gender => self.gender.index(),
            Task::Race => self.race.index(),
            Task::Age => self.age_group.index(),
            Task::Category => unreachable!("locations carry the category task"),
        }
    }
}

/// Ground truth and sampling parameters behind a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SynthConfig,
    pub hour_profiles: BTreeMap<String, Vec<f64>>,
    pub signal_window_hours: usize,
    pub timestamp_origin: i64,
    pub locations: Vec<SynthLocation>,
    /// True classes, including labels withheld from the user file.
    pub users: Vec<SynthUser>,
    pub checkin_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub checkins: Vec<CheckIn>,
    pub user_labels: BTreeMap<String, UserLabels>,
    pub location_labels: BTreeMap<String, LocationLabel>,
    pub location_fine: BTreeMap<String, String>,
    pub manifest: Manifest,
}

fn draw(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    CumulativeTable::new(weights).expect("validated prior").sample(rng)
}

fn draw_age(rng: &mut ChaCha8Rng, group: AgeGroup) -> i64 {
    match group {
        AgeGroup::From15To20 => rng.random_range(15..=20),
        AgeGroup::From21To25 => rng.random_range(21..=25),
        AgeGroup::From26To36 => rng.random_range(26..=36),
    }
}

fn make_locations(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<SynthLocation> {
    let width = cfg.n_locations.to_string().len().max(4);
    let mut locations: Vec<SynthLocation> = (0..cfg.n_locations)
        .map(|i| {
            let category = Category::ALL[draw(rng, &cfg.category_prior)];
            let fine = fine_categories(category);
            SynthLocation {
                id: format!("L{i:0width$}"),
                category,
                fine_category: fine[rng.random_range(0..fine.len())].to_string(),
                latitude: 40.6 + 0.3 * rng.random::<f64>(),
                longitude: -74.1 + 0.3 * rng.random::<f64>(),
                popularity: ((i + 1) as f64).powf(-cfg.popularity_exponent),
                skew: None,
            }
        })
        .collect();
    let n_skewed = (cfg.biased_location_fraction * cfg.n_locations as f64).round() as usize;
    let mut order: Vec<usize> = (0..cfg.n_locations).collect();
    order.shuffle(rng);
    for (j, &l) in order[..n_skewed].iter().enumerate() {
        let task = Task::DEMOGRAPHIC[j % 3];
        let owner_class = (j / 3) % task.n_classes();
        let window_start = match cfg.signal_mode {
            SignalMode::Location => None,
            SignalMode::Hour => {
                let open: Vec<usize> = {
                    let p = hour_profile(locations[l].category);
                    (0..24).filter(|&h| (0..SIGNAL_WINDOW).all(|k| p[(h + k) % 24] > 0.0)).collect()
                };
                Some(open[rng.random_range(0..open.len())])
            }
        };
        locations[l].skew = Some(Skew {
            task,
            owner_class,
            window_start,
        });
    }
    locations
}

fn in_window(start: usize, hour: usize) -> bool {
    (hour + 24 - start) % 24 < SIGNAL_WINDOW
}

/// Location-choice weight of `user` at `loc`.
fn location_weight(cfg: &SynthConfig, loc: &SynthLocation, user: &SynthUser) -> f64 {
    let beta = cfg.bias_strength;
    match (cfg.signal_mode, loc.skew) {
        (SignalMode::Location, Some(s)) if user.class(s.task) == s.owner_class => loc.popularity * (1.0 + beta),
        (SignalMode::Location, Some(_)) => loc.popularity * (1.0 - beta),
        _ => loc.popularity,
    }
}

/// Hour weights of `user` at `loc`.
fn hour_weights(cfg: &SynthConfig, loc: &SynthLocation, user: &SynthUser) -> [f64; 24] {
    let mut p = hour_profile(loc.category);
    if let (SignalMode::Hour, Some(Skew { task, owner_class, window_start: Some(start) })) = (cfg.signal_mode, loc.skew) {
        let factor = if user.class(task) == owner_class {
            1.0 + cfg.bias_strength
        } else {
            1.0 - cfg.bias_strength
        };
        for (h, w) in p.iter_mut().enumerate() {
            if in_window(start, h) {
                *w *= factor;
            }
        }
        if p.iter().all(|&w| w == 0.0) {
            // Only reachable when the whole profile sits inside the window.
            p = hour_profile(loc.category);
        }
    }
    p
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, Domain::Synth, 0);
    let locations = make_locations(cfg, &mut rng);

    let width = cfg.n_users.to_string().len().max(4);
    let users: Vec<SynthUser> = (0..cfg.n_users)
        .map(|i| SynthUser {
            id: format!("U{i:0width$}"),
            gender: Gender::ALL[draw(&mut rng, &cfg.gender_prior)],
            race: Race::ALL[draw(&mut rng, &cfg.race_prior)],
            age_group: AgeGroup::ALL[draw(&mut rng, &cfg.age_prior)],
            checkins: rng.random_range(cfg.checkins_per_user.0..=cfg.checkins_per_user.1),
        })
        .collect();

    let mut user_labels = BTreeMap::new();
    let keep = |rng: &mut ChaCha8Rng| rng.random::<f64>() >= cfg.missing_label_rate;
    for u in &users {
        let gender = keep(&mut rng).then_some(u.gender);
        let race = keep(&mut rng).then_some(u.race);
        let age = keep(&mut rng).then(|| {
            if rng.random::<f64>() < cfg.out_of_range_age_rate {
                rng.random_range(37..=70)
            } else {
                draw_age(&mut rng, u.age_group)
            }
        });
        let labels = UserLabels::new(gender, race, age);
        if labels.has_any() {
            user_labels.insert(u.id.clone(), labels);
        }
    }

    let mut checkins = Vec::new();
    // Weights depend only on the user's class triple; cache one table per triple.
    let mut tables: BTreeMap<(usize, usize, usize), CumulativeTable> = BTreeMap::new();
    for u in &users {
        let key = (u.gender.index(), u.race.index(), u.age_group.index());
        let table = match tables.entry(key) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => {
                let w: Vec<f64> = locations.iter().map(|l| location_weight(cfg, l, u)).collect();
                e.insert(CumulativeTable::new(&w).ok_or_else(|| {
                    Error::InvalidConfig(format!("users of class triple {key:?} can visit no location"))
                })?)
            }
        };
        let reachable = (0..locations.len()).filter(|&l| location_weight(cfg, &locations[l], u) > 0.0).count();
        let mut routine: Vec<usize> = Vec::with_capacity(cfg.routine_locations);
        while routine.len() < cfg.routine_locations.min(reachable) {
            let l = table.sample(&mut rng);
            if !routine.contains(&l) {
                routine.push(l);
            }
        }
        let mut own = Vec::with_capacity(u.checkins as usize);
        for _ in 0..u.checkins {
            let pick = if !routine.is_empty() && rng.random::<f64>() < cfg.routine_share {
                routine[rng.random_range(0..routine.len())]
            } else {
                table.sample(&mut rng)
            };
            let loc = &locations[pick];
            let hours = hour_weights(cfg, loc, u);
            let hour = CumulativeTable::new(&hours).expect("every profile has open hours").sample(&mut rng) as i64;
            let day = rng.random_range(0..DAYS_2016);
            let second = rng.random_range(0..3600);
            own.push(CheckIn {
                user_id: u.id.clone(),
                timestamp: EPOCH_2016 + day * 86_400 + hour * 3600 + second,
                latitude: loc.latitude,
                longitude: loc.longitude,
                location_id: loc.id.clone(),
            });
        }
        own.sort_by_key(|c| c.timestamp);
        checkins.extend(own);
    }

    let location_labels = locations
        .iter()
        .map(|l| {
            (
                l.id.clone(),
                LocationLabel {
                    location_id: l.id.clone(),
                    category: l.category,
                },
            )
        })
        .collect();
    let location_fine = locations.iter().map(|l| (l.id.clone(), l.fine_category.clone())).collect();
    let hour_profiles = Category::ALL
        .iter()
        .map(|&c| (c.name().to_string(), hour_profile(c).to_vec()))
        .collect();
    let manifest = Manifest {
        config: cfg.clone(),
        hour_profiles,
        signal_window_hours: SIGNAL_WINDOW,
        timestamp_origin: EPOCH_2016,
        locations,
        users,
        checkin_count: checkins.len(),
    };
    Ok(SynthCorpus {
        checkins,
        user_labels,
        location_labels,
        location_fine,
        manifest,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl SynthCorpus {
    /// Writes the four record files and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<DatasetPaths> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = DatasetPaths::in_dir(dir);
        let fmt = RecordFormat::default();
        ingest::write_file(&paths.checkins, |w| ingest::write_checkins(w, &self.checkins, fmt))?;
        if let Some(p) = &paths.user_labels {
            ingest::write_file(p, |w| {
                ingest::write_user_labels(w, self.user_labels.iter().map(|(k, v)| (k.as_str(), v)), fmt)
            })?;
        }
        if let Some(p) = &paths.location_labels {
            ingest::write_file(p, |w| ingest::write_location_labels(w, self.location_labels.values(), fmt))?;
        }
        if let Some(p) = &paths.location_fine {
            ingest::write_file(p, |w| {
                ingest::write_location_fine(w, self.location_fine.iter().map(|(k, v)| (k.as_str(), v.as_str())), fmt)
            })?;
        }
        let manifest_path: PathBuf = dir.join(MANIFEST_FILE);
        ingest::write_file(&manifest_path, |w| {
            serde_json::to_writer_pretty(&mut *w, &self.manifest).map_err(std::io::Error::other)?;
            writeln!(w)
        })?;
        Ok(paths)
    }
}
