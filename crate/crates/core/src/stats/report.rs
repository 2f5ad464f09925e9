use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    descriptives, format_m_sd, format_p, format_r, format_stat, format_u, mann_whitney_u_with,
    wilcoxon_signed_rank_with, Descriptives, StatsError, TestOptions, UTestResult, WTestResult,
};
use crate::measures::{
    score_scale, InstrumentSet, SurveyPhase, SurveyResponse, ROSENBERG_SELF_ESTEEM, SINGLE_ITEMS,
    UCLA_LONELINESS,
};
use crate::model::{AccountId, Condition, ExperimentId};

/// Multi-item scales compared within each condition, with display labels.
const PAIRED_SCALES: [(&str, &str); 2] = [
    (UCLA_LONELINESS, "Loneliness"),
    (ROSENBERG_SELF_ESTEEM, "Stable Self-Esteem"),
];

const CONDITIONS: [Condition; 2] = [Condition::ManyLikes, Condition::FewLikes];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub experiment_id: ExperimentId,
    pub participant_id: AccountId,
    pub condition: Condition,
    pub responses: Vec<SurveyResponse>,
}

impl Participant {
    /// Answers of the given phase, later submissions overriding earlier ones.
    fn answers(&self, phase: SurveyPhase) -> BTreeMap<&str, i32> {
        self.responses
            .iter()
            .filter(|r| r.phase == phase)
            .flat_map(|r| r.answers.iter().map(|(k, v)| (k.as_str(), *v)))
            .collect()
    }

    fn merged_response(&self, phase: SurveyPhase) -> SurveyResponse {
        SurveyResponse {
            account_id: self.participant_id,
            phase,
            answers: self
                .answers(phase)
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect(),
        }
    }
}

/// Survey data of a set of participants with their condition labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyDataset {
    pub participants: Vec<Participant>,
}

impl StudyDataset {
    pub fn extend(&mut self, other: StudyDataset) {
        self.participants.extend(other.participants);
    }

    fn in_condition(&self, condition: Condition) -> impl Iterator<Item = &Participant> {
        self.participants.iter().filter(move |p| p.condition == condition)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetweenRow {
    pub item_key: String,
    pub label: String,
    pub many: Option<Descriptives>,
    pub few: Option<Descriptives>,
    pub test: Option<UTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WithinResult {
    pub instrument_id: String,
    pub label: String,
    pub condition: Condition,
    pub pre: Option<Descriptives>,
    pub post: Option<Descriptives>,
    pub test: Option<WTestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub n_many: usize,
    pub n_few: usize,
    pub between: Vec<BetweenRow>,
    pub within: Vec<WithinResult>,
    /// Contrasts that could not be computed, and why.
    pub gaps: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(StatsError::UnknownFormat(other.to_owned())),
        }
    }
}

fn describe(values: &[f64]) -> Option<Descriptives> {
    descriptives(values).ok()
}

/// Between-group U tests on the post-survey single items, and within-group
/// Wilcoxon tests on the pre/post scale scores of each condition.
pub fn build_results_report(
    data: &StudyDataset,
    instruments: &InstrumentSet,
    options: TestOptions,
) -> ResultsReport {
    let mut gaps = Vec::new();
    let mut between = Vec::new();
    for (item_key, label) in SINGLE_ITEMS {
        let values = |condition| -> Vec<f64> {
            data.in_condition(condition)
                .filter_map(|p| p.answers(SurveyPhase::Post).get(item_key).map(|&v| f64::from(v)))
                .collect()
        };
        let (many, few) = (values(Condition::ManyLikes), values(Condition::FewLikes));
        for (condition, v) in [(Condition::ManyLikes, &many), (Condition::FewLikes, &few)] {
            if v.is_empty() {
                gaps.push(format!("{label}: no POST answers in {condition}"));
            }
        }
        let test = if many.is_empty() || few.is_empty() {
            None
        } else {
            mann_whitney_u_with(&many, &few, options)
                .map_err(|e| gaps.push(format!("{label}: {e}")))
                .ok()
        };
        between.push(BetweenRow {
            item_key: item_key.to_owned(),
            label: label.to_owned(),
            many: describe(&many),
            few: describe(&few),
            test,
        });
    }

    let mut within = Vec::new();
    for (instrument_id, label) in PAIRED_SCALES {
        let definition = match instruments.get(instrument_id) {
            Ok(d) => Some(d),
            Err(e) => {
                gaps.push(format!("{label}: {e}"));
                None
            }
        };
        for condition in CONDITIONS {
            let mut pre = Vec::new();
            let mut post = Vec::new();
            let mut incomplete = 0;
            for p in data.in_condition(condition) {
                let Some(def) = definition else { break };
                let before = score_scale(&p.merged_response(SurveyPhase::Pre), def);
                let after = score_scale(&p.merged_response(SurveyPhase::Post), def);
                match (before, after) {
                    (Ok(b), Ok(a)) => {
                        pre.push(f64::from(b));
                        post.push(f64::from(a));
                    }
                    _ => incomplete += 1,
                }
            }
            if incomplete > 0 {
                gaps.push(format!(
                    "{label} {condition}: {incomplete} participant(s) without complete PRE and POST answers"
                ));
            }
            let test = if pre.is_empty() {
                if definition.is_some() {
                    gaps.push(format!("{label} {condition}: no complete pre/post pairs"));
                }
                None
            } else {
                wilcoxon_signed_rank_with(&pre, &post, options)
                    .map_err(|e| gaps.push(format!("{label} {condition}: {e}")))
                    .ok()
            };
            within.push(WithinResult {
                instrument_id: instrument_id.to_owned(),
                label: label.to_owned(),
                condition,
                pre: describe(&pre),
                post: describe(&post),
                test,
            });
        }
    }

    ResultsReport {
        n_many: data.in_condition(Condition::ManyLikes).count(),
        n_few: data.in_condition(Condition::FewLikes).count(),
        between,
        within,
        gaps,
    }
}

fn p_clause(p: f64) -> String {
    let shown = format_p(p);
    if shown.starts_with('<') {
        format!("p{shown}")
    } else {
        format!("p={shown}")
    }
}

fn opt_m_sd(d: &Option<Descriptives>) -> String {
    d.as_ref().map_or_else(|| "-".to_owned(), format_m_sd)
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

impl ResultsReport {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Text => self.to_text(),
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => serde_json::to_string_pretty(self).expect("report serializes"),
        }
    }

    fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Between groups (MANY_LIKES n={}, FEW_LIKES n={})",
            self.n_many, self.n_few
        );
        let _ = writeln!(
            out,
            "{:<18}{:<16}{:<16}Group Difference",
            "", "Many Likes", "Few Likes"
        );
        let _ = writeln!(out, "{:<18}{:<16}{:<16}", "", "M(SD)", "M(SD)");
        for row in &self.between {
            let diff = row.test.as_ref().map_or_else(
                || "-".to_owned(),
                |t| {
                    format!(
                        "U_min={}, r={}, {}",
                        format_u(t.u_min),
                        format_r(t.r_rank_biserial),
                        p_clause(t.p_two_sided)
                    )
                },
            );
            let _ = writeln!(
                out,
                "{:<18}{:<16}{:<16}{diff}",
                row.label,
                opt_m_sd(&row.many),
                opt_m_sd(&row.few)
            );
        }
        let _ = writeln!(out, "\nWithin groups (post - pre)");
        for w in &self.within {
            let side = |d: &Option<Descriptives>| {
                d.as_ref().map_or_else(
                    || "-".to_owned(),
                    |d| {
                        format!(
                            "Mdn={:.1}, M={:.2}, SD={}",
                            d.median,
                            d.mean,
                            d.sd.map_or_else(|| "n/a".to_owned(), |s| format!("{s:.2}"))
                        )
                    },
                )
            };
            let test = w.test.as_ref().map_or_else(
                || "-".to_owned(),
                |t| format!("Z={}, {}", format_stat(t.z, 2), p_clause(t.p_two_sided)),
            );
            let _ = writeln!(
                out,
                "{:<20}{:<12} pre ({}) post ({}) {test}",
                w.label,
                w.condition.as_str(),
                side(&w.pre),
                side(&w.post)
            );
        }
        if !self.gaps.is_empty() {
            let _ = writeln!(out, "\nGaps");
            for gap in &self.gaps {
                let _ = writeln!(out, "- {gap}");
            }
        }
        out
    }

    fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let header = [
            "section",
            "measure",
            "condition",
            "n_a",
            "mean_a",
            "sd_a",
            "median_a",
            "n_b",
            "mean_b",
            "sd_b",
            "median_b",
            "statistic",
            "r",
            "z",
            "p",
            "method",
            "note",
        ];
        let sides = |d: &Option<Descriptives>| -> [String; 4] {
            match d {
                Some(d) => [
                    d.n.to_string(),
                    d.mean.to_string(),
                    opt_num(d.sd),
                    d.median.to_string(),
                ],
                None => ["0".into(), String::new(), String::new(), String::new()],
            }
        };
        let method = |m| match m {
            super::TestMethod::Exact => "EXACT".to_owned(),
            super::TestMethod::NormalApprox => "NORMAL_APPROX".to_owned(),
        };
        w.write_record(header).expect("in-memory write");
        for row in &self.between {
            let mut rec = vec!["between".to_owned(), row.item_key.clone(), String::new()];
            rec.extend(sides(&row.many));
            rec.extend(sides(&row.few));
            match &row.test {
                Some(t) => rec.extend([
                    t.u_min.to_string(),
                    t.r_rank_biserial.to_string(),
                    t.z.to_string(),
                    t.p_two_sided.to_string(),
                    method(t.method),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), 5)),
            }
            rec.push(String::new());
            w.write_record(&rec).expect("in-memory write");
        }
        for res in &self.within {
            let mut rec = vec![
                "within".to_owned(),
                res.instrument_id.clone(),
                res.condition.as_str().to_owned(),
            ];
            rec.extend(sides(&res.pre));
            rec.extend(sides(&res.post));
            match &res.test {
                Some(t) => rec.extend([
                    t.w_plus.to_string(),
                    String::new(),
                    t.z.to_string(),
                    t.p_two_sided.to_string(),
                    method(t.method),
                ]),
                None => rec.extend(std::iter::repeat_n(String::new(), 5)),
            }
            rec.push(String::new());
            w.write_record(&rec).expect("in-memory write");
        }
        for gap in &self.gaps {
            let mut rec = vec!["gap".to_owned()];
            rec.extend(std::iter::repeat_n(String::new(), header.len() - 2));
            rec.push(gap.clone());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::InstrumentDefinition;
    use crate::stats::{mann_whitney_u, wilcoxon_signed_rank};

    fn response(id: u64, phase: SurveyPhase, answers: &[(String, i32)]) -> SurveyResponse {
        SurveyResponse {
            account_id: AccountId(id),
            phase,
            answers: answers.iter().cloned().collect(),
        }
    }

    fn scale_answers(def: &InstrumentDefinition, seed: u64) -> Vec<(String, i32)> {
        def.items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                let span = (item.response_max - item.response_min + 1) as u64;
                let mix = (seed * 31 + i as u64 * 17).pow(2) / 7;
                let v = item.response_min + (mix % span) as i32;
                (item.item_key.clone(), v)
            })
            .collect()
    }

    /// Many-likes participants answer higher on every single item.
    fn synthetic(n_per_group: u64) -> StudyDataset {
        let set = InstrumentSet::study_default();
        let ucla = set.get(UCLA_LONELINESS).unwrap();
        let rses = set.get(ROSENBERG_SELF_ESTEEM).unwrap();
        let mut participants = Vec::new();
        for id in 0..2 * n_per_group {
            let condition = if id % 2 == 0 {
                Condition::ManyLikes
            } else {
                Condition::FewLikes
            };
            let shift = if condition == Condition::ManyLikes { 1 } else { -1 };
            let mut pre = scale_answers(ucla, id);
            pre.extend(scale_answers(rses, id + 1));
            let mut post = scale_answers(ucla, id + 2);
            post.extend(scale_answers(rses, id * 3));
            for (k, (key, _)) in SINGLE_ITEMS.iter().enumerate() {
                let v = ((id as i32 + k as i32) % 2 + shift).clamp(-2, 2);
                post.push((key.to_string(), v));
            }
            participants.push(Participant {
                experiment_id: ExperimentId(id),
                participant_id: AccountId(id),
                condition,
                responses: vec![
                    response(id, SurveyPhase::Pre, &pre),
                    response(id, SurveyPhase::Post, &post),
                ],
            });
        }
        StudyDataset { participants }
    }

    #[test]
    fn synthetic_report_matches_direct_calls() {
        let data = synthetic(12);
        let set = InstrumentSet::study_default();
        let report = build_results_report(&data, &set, TestOptions::default());
        assert_eq!((report.n_many, report.n_few), (12, 12));
        assert_eq!(report.between.len(), 8);
        assert_eq!(report.within.len(), 4);
        assert!(report.gaps.is_empty(), "{:?}", report.gaps);

        let stress = &report.between[0];
        assert_eq!(stress.label, "Stress");
        let pick = |c| -> Vec<f64> {
            data.participants
                .iter()
                .filter(|p| p.condition == c)
                .map(|p| f64::from(p.responses[1].answers["stress"]))
                .collect()
        };
        let direct = mann_whitney_u(&pick(Condition::ManyLikes), &pick(Condition::FewLikes)).unwrap();
        assert_eq!(stress.test.unwrap(), direct);
        assert!(direct.r_rank_biserial > 0.5);

        let ucla = set.get(UCLA_LONELINESS).unwrap();
        let scores = |phase: usize| -> Vec<f64> {
            data.participants
                .iter()
                .filter(|p| p.condition == Condition::FewLikes)
                .map(|p| f64::from(score_scale(&p.responses[phase], ucla).unwrap()))
                .collect()
        };
        let w = wilcoxon_signed_rank(&scores(0), &scores(1)).unwrap();
        let few_ucla = report
            .within
            .iter()
            .find(|r| r.instrument_id == UCLA_LONELINESS && r.condition == Condition::FewLikes)
            .unwrap();
        assert_eq!(few_ucla.test.unwrap(), w);
    }

    #[test]
    fn empty_data_reports_gaps() {
        let report = build_results_report(
            &StudyDataset::default(),
            &InstrumentSet::study_default(),
            TestOptions::default(),
        );
        assert!(report.between.iter().all(|r| r.test.is_none()));
        assert!(report.within.iter().all(|r| r.test.is_none()));
        assert_eq!(report.gaps.len(), 8 * 2 + 4);
        for format in [ReportFormat::Text, ReportFormat::Csv, ReportFormat::Json] {
            assert!(!report.render(format).is_empty());
        }
    }

    #[test]
    fn missing_post_phase_is_a_gap() {
        let mut data = synthetic(4);
        for p in &mut data.participants {
            p.responses.retain(|r| r.phase == SurveyPhase::Pre);
        }
        let report = build_results_report(&data, &InstrumentSet::study_default(), TestOptions::default());
        assert!(report.within.iter().all(|w| w.test.is_none()));
        assert!(report
            .gaps
            .iter()
            .any(|g| g.contains("without complete PRE and POST")));
    }

    #[test]
    fn table_style_rendering() {
        let report = ResultsReport {
            n_many: 85,
            n_few: 85,
            between: vec![BetweenRow {
                item_key: "stress".into(),
                label: "Stress".into(),
                many: Some(Descriptives {
                    n: 85,
                    mean: -0.92,
                    sd: Some(1.06),
                    median: -1.0,
                }),
                few: Some(Descriptives {
                    n: 85,
                    mean: -0.28,
                    sd: Some(1.16),
                    median: 0.0,
                }),
                test: Some(UTestResult {
                    n_a: 85,
                    n_b: 85,
                    u_a: 2477.0,
                    u_b: 4748.0,
                    u_min: 2477.0,
                    z: -3.9,
                    p_two_sided: 0.0001,
                    r_rank_biserial: -0.3143,
                    method: super::super::TestMethod::NormalApprox,
                }),
            }],
            within: vec![],
            gaps: vec![],
        };
        let text = report.render(ReportFormat::Text);
        let line = text.lines().find(|l| l.starts_with("Stress")).unwrap();
        assert!(line.contains("-.92 (1.06)"));
        assert!(line.contains("-.28 (1.16)"));
        assert!(line.contains("U_min=2477.0, r=-.31, p<.01*"), "{line}");
        let csv = report.render(ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("between,stress,,85,-0.92"));
    }

    #[test]
    fn format_parse() {
        assert_eq!("csv".parse::<ReportFormat>(), Ok(ReportFormat::Csv));
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
