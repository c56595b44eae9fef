//! Occupation identifiers on the SOC-2018 taxonomy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// SOC-2018 major groups (two-digit prefixes) with their titles.
pub const SOC_MAJOR_GROUPS: [(&str, &str); 23] = [
    ("11", "Management"),
    ("13", "Business and Financial Operations"),
    ("15", "Computer and Mathematical"),
    ("17", "Architecture and Engineering"),
    ("19", "Life, Physical, and Social Science"),
    ("21", "Community and Social Service"),
    ("23", "Legal"),
    ("25", "Educational Instruction and Library"),
    ("27", "Arts, Design, Entertainment, Sports, and Media"),
    ("29", "Healthcare Practitioners and Technical"),
    ("31", "Healthcare Support"),
    ("33", "Protective Service"),
    ("35", "Food Preparation and Serving Related"),
    ("37", "Building and Grounds Cleaning and Maintenance"),
    ("39", "Personal Care and Service"),
    ("41", "Sales and Related"),
    ("43", "Office and Administrative Support"),
    ("45", "Farming, Fishing, and Forestry"),
    ("47", "Construction and Extraction"),
    ("49", "Installation, Maintenance, and Repair"),
    ("51", "Production"),
    ("53", "Transportation and Material Moving"),
    ("55", "Military Specific"),
];

pub fn is_major_group(prefix: &str) -> bool {
    SOC_MAJOR_GROUPS.iter().any(|(code, _)| *code == prefix)
}

pub fn major_group_title(prefix: &str) -> Option<&'static str> {
    SOC_MAJOR_GROUPS
        .iter()
        .find(|(code, _)| *code == prefix)
        .map(|(_, title)| *title)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Detailed,
    MajorGroup,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Detailed => f.write_str("detailed"),
            Level::MajorGroup => f.write_str("major_group"),
        }
    }
}

/// A six-digit detailed occupation (`151252`) or a two-digit major group (`15`).
///
/// Hyphenated input (`15-1252`) is accepted and stored without the hyphen.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OccId(String);

impl OccId {
    pub fn parse(raw: &str) -> Result<Self> {
        let code: String = raw.trim().chars().filter(|c| *c != '-').collect();
        let invalid = |reason: &str| Error::InvalidCode {
            code: raw.to_string(),
            reason: reason.to_string(),
        };
        if !code.chars().all(|c| c.is_ascii_digit()) {
            return Err(invalid("codes must be digits"));
        }
        if code.len() != 2 && code.len() != 6 {
            return Err(invalid("expected a 2-digit major group or 6-digit occupation"));
        }
        if !is_major_group(&code[..2]) {
            return Err(invalid("unknown SOC-2018 major group"));
        }
        Ok(OccId(code))
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    pub fn major_group(&self) -> &str {
        &self.0[..2]
    }

    pub fn level(&self) -> Level {
        if self.0.len() == 2 {
            Level::MajorGroup
        } else {
            Level::Detailed
        }
    }

    /// The parent major group as an identifier (identity for major groups).
    pub fn parent(&self) -> OccId {
        OccId(self.major_group().to_string())
    }
}

impl fmt::Display for OccId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for OccId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OccId::parse(s)
    }
}

impl Serialize for OccId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for OccId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        OccId::parse(&raw).map_err(serde::de::Error::custom)
    }
}
