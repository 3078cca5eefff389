use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of target species.
pub const NUM_SPECIES: usize = 6;

/// The six target mosquito species, in stable index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpeciesId {
    AeAegypti,
    AeAlbopictus,
    AnArabiensis,
    AnGambiae,
    CxQuinquefasciatus,
    CxPipiens,
}

impl SpeciesId {
    pub const ALL: [SpeciesId; NUM_SPECIES] = [
        SpeciesId::AeAegypti,
        SpeciesId::AeAlbopictus,
        SpeciesId::AnArabiensis,
        SpeciesId::AnGambiae,
        SpeciesId::CxQuinquefasciatus,
        SpeciesId::CxPipiens,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            SpeciesId::AeAegypti => "AE_AEGYPTI",
            SpeciesId::AeAlbopictus => "AE_ALBOPICTUS",
            SpeciesId::AnArabiensis => "AN_ARABIENSIS",
            SpeciesId::AnGambiae => "AN_GAMBIAE",
            SpeciesId::CxQuinquefasciatus => "CX_QUINQUEFASCIATUS",
            SpeciesId::CxPipiens => "CX_PIPIENS",
        }
    }

    /// Directory name used inside a bank (`ae_aegypti`, ...).
    pub fn dir_name(self) -> String {
        self.code().to_ascii_lowercase()
    }

    /// Column name in the predictions CSV.
    pub fn score_column(self) -> &'static str {
        match self {
            SpeciesId::AeAegypti => "p_ae_aegypti",
            SpeciesId::AeAlbopictus => "p_ae_albopictus",
            SpeciesId::AnArabiensis => "p_an_arabiensis",
            SpeciesId::AnGambiae => "p_an_gambiae",
            SpeciesId::CxQuinquefasciatus => "p_cx_quinque",
            SpeciesId::CxPipiens => "p_cx_pipiens",
        }
    }
}

impl fmt::Display for SpeciesId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for SpeciesId {
    type Err = Error;

    /// Accepts the code in any case, with `-` or `_` separators.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        SpeciesId::ALL
            .into_iter()
            .find(|sp| sp.code() == norm)
            .ok_or_else(|| Error::UnknownSpecies(s.to_owned()))
    }
}
