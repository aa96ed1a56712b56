//! Plain-text `key = value` configuration.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored. Later
//! entries override earlier ones, and command-line `--set key=value` flags are
//! applied after the file.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parses `key = value` lines, keeping their order.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = parse_assignment(line).map_err(|_| Error::InvalidConfig(format!("line {}: expected key = value, got `{raw}`", n + 1)))?;
        out.push((k, v));
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_key_values(&text)
}

/// Splits one `key=value` assignment.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got `{s}`")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(Error::InvalidConfig(format!("empty key in `{s}`")));
    }
    Ok((k.to_string(), v.to_string()))
}

pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse `{value}` for `{key}`")))
}

/// Comma-separated list.
pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

/// A structure settable from configuration keys.
pub trait Configurable {
    fn set(&mut self, key: &str, value: &str) -> Result<()>;

    fn apply<'a>(&mut self, entries: impl IntoIterator<Item = &'a (String, String)>) -> Result<()> {
        for (k, v) in entries {
            self.set(k, v)?;
        }
        Ok(())
    }
}

impl Configurable for crate::synth::SynthConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_users" => self.n_users = parse_value(key, value)?,
            "n_locations" => self.n_locations = parse_value(key, value)?,
            "checkins_min" => self.checkins_per_user.0 = parse_value(key, value)?,
            "checkins_max" => self.checkins_per_user.1 = parse_value(key, value)?,
            "biased_location_fraction" | "beta_loc" => self.biased_location_fraction = parse_value(key, value)?,
            "bias_strength" | "beta" => self.bias_strength = parse_value(key, value)?,
            "signal_mode" => self.signal_mode = value.parse()?,
            "gender_prior" => self.gender_prior = parse_list(key, value)?,
            "race_prior" => self.race_prior = parse_list(key, value)?,
            "age_prior" => self.age_prior = parse_list(key, value)?,
            "category_prior" => self.category_prior = parse_list(key, value)?,
            "popularity_exponent" => self.popularity_exponent = parse_value(key, value)?,
            "routine_locations" => self.routine_locations = parse_value(key, value)?,
            "routine_share" => self.routine_share = parse_value(key, value)?,
            "missing_label_rate" => self.missing_label_rate = parse_value(key, value)?,
            "out_of_range_age_rate" => self.out_of_range_age_rate = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown synth key `{key}`"))),
        }
        Ok(())
    }
}
