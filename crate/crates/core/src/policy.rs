use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Highest trained reasoning level.
pub const MAX_LEVEL: u8 = 3;

/// A driver model in the hierarchy: the rule-based anchor, a trained
/// level-k network, or the dynamic level selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyId {
    Level0,
    Level(u8),
    Dynamic,
}

impl PolicyId {
    pub fn level(k: u8) -> Result<Self, Error> {
        match k {
            0 => Ok(PolicyId::Level0),
            1..=MAX_LEVEL => Ok(PolicyId::Level(k)),
            _ => Err(Error::Config(format!("level {k} outside 0..={MAX_LEVEL}"))),
        }
    }

    /// Reasoning level for fixed policies, `None` for the dynamic policy.
    pub fn level_number(self) -> Option<u8> {
        match self {
            PolicyId::Level0 => Some(0),
            PolicyId::Level(k) => Some(k),
            PolicyId::Dynamic => None,
        }
    }

    pub fn is_trained(self) -> bool {
        !matches!(self, PolicyId::Level0)
    }

    /// Levels 0..=3, the pool mixed traffic is drawn from.
    pub fn all_levels() -> [PolicyId; 4] {
        [
            PolicyId::Level0,
            PolicyId::Level(1),
            PolicyId::Level(2),
            PolicyId::Level(3),
        ]
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyId::Level0 => write!(f, "level-0"),
            PolicyId::Level(k) => write!(f, "level-{k}"),
            PolicyId::Dynamic => write!(f, "dynamic"),
        }
    }
}

impl FromStr for PolicyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        if lower == "dynamic" || lower == "dyn" {
            return Ok(PolicyId::Dynamic);
        }
        let digits = lower
            .strip_prefix("level-")
            .or_else(|| lower.strip_prefix("level"))
            .or_else(|| lower.strip_prefix('l'))
            .unwrap_or(&lower);
        digits
            .parse::<u8>()
            .map_err(|_| Error::Config(format!("unknown policy `{s}`")))
            .and_then(PolicyId::level)
    }
}

impl TryFrom<String> for PolicyId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PolicyId> for String {
    fn from(p: PolicyId) -> Self {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for p in [PolicyId::Level0, PolicyId::Level(2), PolicyId::Dynamic] {
            assert_eq!(p.to_string().parse::<PolicyId>().unwrap(), p);
        }
        assert_eq!("3".parse::<PolicyId>().unwrap(), PolicyId::Level(3));
        assert_eq!("L1".parse::<PolicyId>().unwrap(), PolicyId::Level(1));
        assert!("level-4".parse::<PolicyId>().is_err());
        assert!("pilot".parse::<PolicyId>().is_err());
    }

    #[test]
    fn serde_uses_labels() {
        let json = serde_json::to_string(&PolicyId::Level(2)).unwrap();
        assert_eq!(json, "\"level-2\"");
        let back: PolicyId = serde_json::from_str("\"dynamic\"").unwrap();
        assert_eq!(back, PolicyId::Dynamic);
    }
}
