//! Survey instruments, response validation and sum scoring with reverse-coded items.
//!
//! Instruments load from JSON:
//!
//! ```json
//! {"instrument_id": "rosenberg_self_esteem",
//!  "items": [{"item_key": "rses_01", "prompt": "...", "min": 1, "max": 4, "reverse": false}]}
//! ```
//!
//! The bundled default file carries placeholder prompts only.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AccountId;

pub const UCLA_LONELINESS: &str = "ucla_loneliness";
pub const ROSENBERG_SELF_ESTEEM: &str = "rosenberg_self_esteem";

/// Post-survey single items, in report order, with their display labels.
pub const SINGLE_ITEMS: [(&str, &str); 8] = [
    ("stress", "Stress"),
    ("sadness", "Sadness"),
    ("anxiety", "Anxiety"),
    ("enjoyment", "Enjoyment"),
    ("belongingness", "Belongingness"),
    ("appraisal", "Appraisal"),
    ("rejection", "Rejection"),
    ("situational_self_esteem", "Sit. Self-Esteem"),
];

pub const SINGLE_ITEM_MIN: i32 = -2;
pub const SINGLE_ITEM_MAX: i32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemDefinition {
    pub item_key: String,
    #[serde(rename = "prompt")]
    pub prompt_text: String,
    #[serde(rename = "min")]
    pub response_min: i32,
    #[serde(rename = "max")]
    pub response_max: i32,
    #[serde(default)]
    pub reverse: bool,
}

impl ItemDefinition {
    pub fn contains(&self, answer: i32) -> bool {
        (self.response_min..=self.response_max).contains(&answer)
    }

    /// Maps an answer onto the opposite end of the item's range.
    pub fn reverse_code(&self, answer: i32) -> i32 {
        self.response_min + self.response_max - answer
    }

    /// Contribution of `answer` to the scale score.
    pub fn scored(&self, answer: i32) -> i32 {
        if self.reverse {
            self.reverse_code(answer)
        } else {
            answer
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InstrumentDefinition {
    pub instrument_id: String,
    pub items: Vec<ItemDefinition>,
    #[serde(skip)]
    score_min: i32,
    #[serde(skip)]
    score_max: i32,
}

#[derive(Deserialize)]
struct RawInstrument {
    instrument_id: String,
    items: Vec<ItemDefinition>,
}

impl<'de> Deserialize<'de> for InstrumentDefinition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawInstrument::deserialize(d)?;
        InstrumentDefinition::new(raw.instrument_id, raw.items).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasuresError {
    #[error("instrument {0} has no items")]
    NoItems(String),
    #[error("instrument {instrument}: duplicate item key {item_key}")]
    DuplicateItem { instrument: String, item_key: String },
    #[error("instrument {instrument}: item {item_key} has min > max")]
    EmptyRange { instrument: String, item_key: String },
    #[error("invalid response: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidResponse(Vec<Violation>),
    #[error("single-item value {0} outside -2..=2")]
    SingleItemRange(i32),
    #[error("unknown instrument {0}")]
    UnknownInstrument(String),
    #[error("instrument file: {0}")]
    Parse(String),
}

impl InstrumentDefinition {
    pub fn new(instrument_id: String, items: Vec<ItemDefinition>) -> Result<Self, MeasuresError> {
        if items.is_empty() {
            return Err(MeasuresError::NoItems(instrument_id));
        }
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(item.item_key.as_str()) {
                return Err(MeasuresError::DuplicateItem {
                    instrument: instrument_id,
                    item_key: item.item_key.clone(),
                });
            }
            if item.response_min > item.response_max {
                return Err(MeasuresError::EmptyRange {
                    instrument: instrument_id,
                    item_key: item.item_key.clone(),
                });
            }
        }
        Ok(Self {
            score_min: items.iter().map(|i| i.response_min).sum(),
            score_max: items.iter().map(|i| i.response_max).sum(),
            instrument_id,
            items,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, MeasuresError> {
        serde_json::from_str(json).map_err(|e| MeasuresError::Parse(e.to_string()))
    }

    /// A one-item instrument on the `-2..=2` agreement scale.
    pub fn single_item(item_key: &str) -> Self {
        Self::new(
            item_key.to_owned(),
            vec![ItemDefinition {
                item_key: item_key.to_owned(),
                prompt_text: String::new(),
                response_min: SINGLE_ITEM_MIN,
                response_max: SINGLE_ITEM_MAX,
                reverse: false,
            }],
        )
        .expect("single item is well formed")
    }

    pub fn score_min(&self) -> i32 {
        self.score_min
    }

    pub fn score_max(&self) -> i32 {
        self.score_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SurveyPhase {
    Pre,
    Post,
}

impl SurveyPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            SurveyPhase::Pre => "PRE",
            SurveyPhase::Post => "POST",
        }
    }
}

impl std::str::FromStr for SurveyPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PRE" => Ok(SurveyPhase::Pre),
            "POST" => Ok(SurveyPhase::Post),
            other => Err(format!("unknown survey phase `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub account_id: AccountId,
    pub phase: SurveyPhase,
    pub answers: BTreeMap<String, i32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Missing {
        item_key: String,
    },
    OutOfRange {
        item_key: String,
        value: i32,
        min: i32,
        max: i32,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing { item_key } => write!(f, "item {item_key} is unanswered"),
            Violation::OutOfRange {
                item_key,
                value,
                min,
                max,
            } => {
                write!(f, "item {item_key} answer {value} outside {min}..={max}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleItemMeasure {
    value: i32,
}

impl SingleItemMeasure {
    pub fn new(value: i32) -> Result<Self, MeasuresError> {
        if !(SINGLE_ITEM_MIN..=SINGLE_ITEM_MAX).contains(&value) {
            return Err(MeasuresError::SingleItemRange(value));
        }
        Ok(Self { value })
    }

    pub fn value(self) -> i32 {
        self.value
    }
}

/// Every violation of `definition` in `response`; answers to other instruments are ignored.
pub fn validate_response(
    response: &SurveyResponse,
    definition: &InstrumentDefinition,
) -> Result<(), Vec<Violation>> {
    let violations: Vec<Violation> = definition
        .items
        .iter()
        .filter_map(|item| match response.answers.get(&item.item_key) {
            None => Some(Violation::Missing {
                item_key: item.item_key.clone(),
            }),
            Some(&value) if !item.contains(value) => Some(Violation::OutOfRange {
                item_key: item.item_key.clone(),
                value,
                min: item.response_min,
                max: item.response_max,
            }),
            Some(_) => None,
        })
        .collect();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Sum score with reverse-coded items flipped within their range.
pub fn score_scale(
    response: &SurveyResponse,
    definition: &InstrumentDefinition,
) -> Result<i32, MeasuresError> {
    validate_response(response, definition).map_err(MeasuresError::InvalidResponse)?;
    Ok(definition
        .items
        .iter()
        .map(|item| item.scored(response.answers[&item.item_key]))
        .sum())
}

/// A named collection of instruments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstrumentSet {
    instruments: Vec<InstrumentDefinition>,
}

impl InstrumentSet {
    pub fn from_json(json: &str) -> Result<Self, MeasuresError> {
        serde_json::from_str(json).map_err(|e| MeasuresError::Parse(e.to_string()))
    }

    /// UCLA loneliness (10 items, 1..=5), Rosenberg self-esteem (10 items,
    /// 1..=4, items 2, 5, 6, 8 and 9 reversed) and the eight single items.
    pub fn study_default() -> Self {
        Self::from_json(include_str!("../instruments/default.json")).expect("bundled instruments parse")
    }

    pub fn get(&self, instrument_id: &str) -> Result<&InstrumentDefinition, MeasuresError> {
        self.instruments
            .iter()
            .find(|i| i.instrument_id == instrument_id)
            .ok_or_else(|| MeasuresError::UnknownInstrument(instrument_id.to_owned()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &InstrumentDefinition> {
        self.instruments.iter()
    }

    /// Definition owning `item_key`, if any.
    pub fn item(&self, item_key: &str) -> Option<&ItemDefinition> {
        self.instruments
            .iter()
            .flat_map(|i| i.items.iter())
            .find(|i| i.item_key == item_key)
    }
}
