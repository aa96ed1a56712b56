use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    User,
    TemporalLocation,
    Location,
    TemporalUser,
}

/// An embeddable node. Encodes as `u:<id>`, `q:<loc>@<hour>`, `l:<id>` or
/// `y:<user>@<hour>`.
///
/// Identifiers never contain whitespace (ingest rejects them) and the hour is
/// always the suffix after the last `@`, so the encoding is injective even
/// when ids themselves contain `:` or `@`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeToken {
    User(String),
    TemporalLocation { location: String, hour: u8 },
    Location(String),
    TemporalUser { user: String, hour: u8 },
}

impl NodeToken {
    pub fn temporal_location(location: impl Into<String>, hour: u8) -> Self {
        NodeToken::TemporalLocation {
            location: location.into(),
            hour,
        }
    }

    pub fn temporal_user(user: impl Into<String>, hour: u8) -> Self {
        NodeToken::TemporalUser {
            user: user.into(),
            hour,
        }
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            NodeToken::User(_) => NodeKind::User,
            NodeToken::TemporalLocation { .. } => NodeKind::TemporalLocation,
            NodeToken::Location(_) => NodeKind::Location,
            NodeToken::TemporalUser { .. } => NodeKind::TemporalUser,
        }
    }
}

impl fmt::Display for NodeToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeToken::User(id) => write!(f, "u:{id}"),
            NodeToken::TemporalLocation { location, hour } => write!(f, "q:{location}@{hour}"),
            NodeToken::Location(id) => write!(f, "l:{id}"),
            NodeToken::TemporalUser { user, hour } => write!(f, "y:{user}@{hour}"),
        }
    }
}

impl FromStr for NodeToken {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Malformed(format!("bad node token `{s}`"));
        let (prefix, rest) = s.split_once(':').ok_or_else(bad)?;
        if rest.is_empty() || rest.chars().any(char::is_whitespace) {
            return Err(bad());
        }
        let temporal = |rest: &str| -> Result<(String, u8)> {
            let (id, hour) = rest.rsplit_once('@').ok_or_else(bad)?;
            let hour: u8 = hour.parse().map_err(|_| bad())?;
            if id.is_empty() || !(1..=24).contains(&hour) {
                return Err(bad());
            }
            Ok((id.to_string(), hour))
        };
        match prefix {
            "u" => Ok(NodeToken::User(rest.to_string())),
            "l" => Ok(NodeToken::Location(rest.to_string())),
            "q" => temporal(rest).map(|(location, hour)| NodeToken::TemporalLocation { location, hour }),
            "y" => temporal(rest).map(|(user, hour)| NodeToken::TemporalUser { user, hour }),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodings() {
        assert_eq!(NodeToken::User("a".into()).to_string(), "u:a");
        assert_eq!(NodeToken::temporal_location("loc9", 7).to_string(), "q:loc9@7");
        assert_eq!(NodeToken::Location("x".into()).to_string(), "l:x");
        assert_eq!(NodeToken::temporal_user("a", 24).to_string(), "y:a@24");
    }

    #[test]
    fn rejects_garbage() {
        for s in ["", "u", "u:", "z:a", "q:a", "q:a@0", "q:a@25", "q:@3", "y:a@x", "u:a b"] {
            assert!(s.parse::<NodeToken>().is_err(), "{s}");
        }
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(id in "[A-Za-z0-9@:._-]{1,10}", hour in 1u8..=24, kind in 0u8..4) {
            let t = match kind {
                0 => NodeToken::User(id),
                1 => NodeToken::temporal_location(id, hour),
                2 => NodeToken::Location(id),
                _ => NodeToken::temporal_user(id, hour),
            };
            prop_assert_eq!(t.to_string().parse::<NodeToken>().unwrap(), t);
        }
    }
}
