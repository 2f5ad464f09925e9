//! CSV export bundle: one table per entity type, stable column order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{SurveyPhase, SurveyResponse};
use crate::model::{AccountId, Condition, ExperimentId};
use crate::stats::{Participant, StudyDataset};

/// Table names with their columns, in bundle order.
pub const EXPORT_SCHEMA: [(&str, &[&str]); 9] = [
    (
        "experiment",
        &[
            "experiment_id",
            "participant_id",
            "condition",
            "start_instant",
            "day_count",
        ],
    ),
    ("posts", &["post_id", "author_id", "origin", "created_at", "body"]),
    (
        "reactions",
        &["reaction_id", "actor_id", "post_id", "kind", "created_at"],
    ),
    (
        "profiles",
        &[
            "account_id",
            "role",
            "display_name",
            "gender",
            "age",
            "nationality",
            "interests",
            "bio",
        ],
    ),
    (
        "sessions",
        &["session_id", "account_id", "started_at", "ended_at"],
    ),
    ("views", &["session_id", "post_id", "duration_ms", "recorded_at"]),
    ("ad_clicks", &["session_id", "ad_id", "clicked_at"]),
    ("friend_edges", &["a", "b"]),
    ("survey_responses", &["account_id", "phase", "item_key", "value"]),
];

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv in table {table}: {message}")]
    Csv { table: String, message: String },
    #[error("table {0} is missing")]
    MissingTable(String),
    #[error("table {table} has columns {found:?}, expected {expected:?}")]
    Header {
        table: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("table {table} row {row}: bad {column} `{value}`")]
    Field {
        table: String,
        row: usize,
        column: String,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl ExportTable {
    pub(crate) fn new(name: &str) -> Self {
        let header = EXPORT_SCHEMA
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, cols)| cols.iter().map(|c| c.to_string()).collect())
            .expect("known table");
        Self {
            name: name.to_owned(),
            header,
            rows: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Values of one column, row by row.
    pub fn values<'a>(&'a self, column: &str) -> impl Iterator<Item = &'a str> + 'a {
        let idx = self.column(column);
        self.rows.iter().filter_map(move |r| idx.map(|i| r[i].as_str()))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(name: &str, text: &str) -> Result<Self, ExportError> {
        let err = |e: csv::Error| ExportError::Csv {
            table: name.to_owned(),
            message: e.to_string(),
        };
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let found: Vec<String> = reader.headers().map_err(err)?.iter().map(str::to_owned).collect();
        let mut table = ExportTable::new(name);
        if found != table.header {
            return Err(ExportError::Header {
                table: name.to_owned(),
                expected: table.header,
                found,
            });
        }
        for record in reader.records() {
            table
                .rows
                .push(record.map_err(err)?.iter().map(str::to_owned).collect());
        }
        Ok(table)
    }
}

/// Everything recorded for one experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub experiment_id: ExperimentId,
    pub tables: Vec<ExportTable>,
}

impl ExportBundle {
    pub fn table(&self, name: &str) -> Option<&ExportTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn require(&self, name: &str) -> Result<&ExportTable, ExportError> {
        self.table(name)
            .ok_or_else(|| ExportError::MissingTable(name.to_owned()))
    }

    /// Table name → CSV text.
    pub fn to_csv_map(&self) -> BTreeMap<String, String> {
        self.tables.iter().map(|t| (t.name.clone(), t.to_csv())).collect()
    }

    /// Writes `<table>.csv` files into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<(), ExportError> {
        fs::create_dir_all(dir)?;
        for table in &self.tables {
            fs::write(dir.join(format!("{}.csv", table.name)), table.to_csv())?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, ExportError> {
        let mut tables = Vec::new();
        for (name, _) in EXPORT_SCHEMA {
            let path = dir.join(format!("{name}.csv"));
            if !path.exists() {
                return Err(ExportError::MissingTable(name.to_owned()));
            }
            tables.push(ExportTable::from_csv(name, &fs::read_to_string(path)?)?);
        }
        let bundle = Self {
            experiment_id: ExperimentId(0),
            tables,
        };
        let id = bundle
            .require("experiment")?
            .values("experiment_id")
            .next()
            .ok_or_else(|| ExportError::MissingTable("experiment row".into()))?
            .to_owned();
        let experiment_id = id.parse().map_err(|_| ExportError::Field {
            table: "experiment".into(),
            row: 2,
            column: "experiment_id".into(),
            value: id.clone(),
        })?;
        Ok(Self {
            experiment_id,
            ..bundle
        })
    }

    /// The participant with condition label and survey answers, for the report builder.
    pub fn to_dataset(&self) -> Result<StudyDataset, ExportError> {
        fn field<T: std::str::FromStr>(
            table: &ExportTable,
            row: usize,
            column: &str,
        ) -> Result<T, ExportError> {
            let value = &table.rows[row][table.column(column).expect("schema column")];
            value.parse().map_err(|_| ExportError::Field {
                table: table.name.clone(),
                row: row + 2,
                column: column.to_owned(),
                value: value.clone(),
            })
        }

        let experiments = self.require("experiment")?;
        let surveys = self.require("survey_responses")?;
        let mut participants = Vec::new();
        for row in 0..experiments.rows.len() {
            let participant_id: AccountId = field(experiments, row, "participant_id")?;
            let mut by_phase: BTreeMap<SurveyPhase, BTreeMap<String, i32>> = BTreeMap::new();
            for srow in 0..surveys.rows.len() {
                let account: AccountId = field(surveys, srow, "account_id")?;
                if account != participant_id {
                    continue;
                }
                let phase: SurveyPhase = field(surveys, srow, "phase")?;
                let key: String = field(surveys, srow, "item_key")?;
                let value: i32 = field(surveys, srow, "value")?;
                by_phase.entry(phase).or_default().insert(key, value);
            }
            participants.push(Participant {
                experiment_id: field(experiments, row, "experiment_id")?,
                participant_id,
                condition: field::<Condition>(experiments, row, "condition")?,
                responses: by_phase
                    .into_iter()
                    .map(|(phase, answers)| SurveyResponse {
                        account_id: participant_id,
                        phase,
                        answers,
                    })
                    .collect(),
            });
        }
        Ok(StudyDataset { participants })
    }
}

/// Loads every export bundle found at `root`: the directory itself or its
/// immediate subdirectories, whichever contain an `experiment.csv`.
pub fn read_export_tree(root: &Path) -> Result<Vec<ExportBundle>, ExportError> {
    if root.join("experiment.csv").exists() {
        return Ok(vec![ExportBundle::read_dir(root)?]);
    }
    let mut dirs: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("experiment.csv").exists())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| ExportBundle::read_dir(d)).collect()
}
