use std::collections::HashSet;

use csv::{ReaderBuilder, StringRecord};

use super::{
    BotProfile, FixtureError, FixtureFile, LikeTarget, PlannedAd, PlannedLike, PlannedPost, ADS_HEADER,
    BOTS_HEADER, LIKES_HEADER, POSTS_HEADER, SECONDS_PER_DAY,
};
use crate::model::{ProfileCard, BOTS_PER_EXPERIMENT};

struct Row {
    line: u64,
    record: StringRecord,
    file: FixtureFile,
}

impl Row {
    fn get(&self, idx: usize) -> &str {
        self.record.get(idx).unwrap_or("")
    }

    fn error(&self, column: &str, value: &str, reason: impl Into<String>) -> FixtureError {
        FixtureError::Field {
            file: self.file,
            row: self.line,
            column: column.to_owned(),
            value: value.to_owned(),
            reason: reason.into(),
        }
    }

    fn non_empty(&self, idx: usize, column: &str) -> Result<String, FixtureError> {
        let value = self.get(idx);
        if value.trim().is_empty() {
            return Err(self.error(column, value, "must not be empty"));
        }
        Ok(value.to_owned())
    }

    fn optional(&self, idx: usize) -> Option<String> {
        let value = self.get(idx).trim();
        (!value.is_empty()).then(|| value.to_owned())
    }

    fn bot_index(&self, idx: usize, column: &str) -> Result<u8, FixtureError> {
        let raw = self.get(idx);
        let value: i64 = raw
            .trim()
            .parse()
            .map_err(|_| self.error(column, raw, "expected an integer"))?;
        if !(1..=BOTS_PER_EXPERIMENT as i64).contains(&value) {
            return Err(self.error(
                column,
                raw,
                format!("bot index out of range 1..={BOTS_PER_EXPERIMENT}"),
            ));
        }
        Ok(value as u8)
    }

    fn non_negative(&self, idx: usize, column: &str) -> Result<u32, FixtureError> {
        let raw = self.get(idx);
        let value: i64 = raw
            .trim()
            .parse()
            .map_err(|_| self.error(column, raw, "expected an integer"))?;
        u32::try_from(value).map_err(|_| self.error(column, raw, "out of range, must be >= 0"))
    }
}

fn strip_bom(bytes: &[u8]) -> &[u8] {
    bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes)
}

fn read_table(bytes: &[u8], file: FixtureFile, header: &[&str]) -> Result<Vec<Row>, FixtureError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(strip_bom(bytes));
    let csv_error = |e: csv::Error| FixtureError::Csv {
        file,
        row: e.position().map(|p| p.line()),
        message: e.to_string(),
    };
    let found: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    if found.iter().map(String::as_str).ne(header.iter().copied()) {
        // an empty upload has no header at all
        let missing = header
            .iter()
            .filter(|h| !found.iter().any(|f| f == *h))
            .map(|h| h.to_string())
            .collect();
        let unexpected = found
            .iter()
            .filter(|f| !header.contains(&f.as_str()))
            .cloned()
            .collect();
        return Err(FixtureError::Schema {
            file,
            expected: header.iter().map(|h| h.to_string()).collect(),
            found,
            missing,
            unexpected,
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        rows.push(Row { line, record, file });
    }
    Ok(rows)
}

/// Parses the bot roster. Interests are `;`-separated.
pub fn parse_bots(csv_bytes: &[u8]) -> Result<Vec<BotProfile>, FixtureError> {
    let rows = read_table(csv_bytes, FixtureFile::Bots, &BOTS_HEADER)?;
    let mut seen = HashSet::new();
    rows.iter()
        .map(|row| {
            let bot_index = row.bot_index(0, "bot_index")?;
            if !seen.insert(bot_index) {
                return Err(FixtureError::Duplicate {
                    file: row.file,
                    row: row.line,
                    key: bot_index.to_string(),
                });
            }
            let age = match row.optional(3) {
                None => None,
                Some(raw) => Some(
                    raw.parse::<u32>()
                        .map_err(|_| row.error("age", &raw, "expected a non-negative integer"))?,
                ),
            };
            Ok(BotProfile {
                bot_index,
                display_name: row.non_empty(1, "display_name")?,
                profile: ProfileCard {
                    gender: row.optional(2),
                    age,
                    nationality: row.optional(4),
                    interests: row
                        .get(5)
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(str::to_owned)
                        .collect(),
                    bio: row.optional(6),
                },
            })
        })
        .collect()
}

/// Parses `HH:MM:SS` into seconds within a day.
pub(crate) fn parse_time_of_day(raw: &str) -> Option<u32> {
    let mut parts = raw.trim().split(':');
    let (h, m, s) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() {
        return None;
    }
    let field = |p: &str, max: u32| {
        (p.len() == 2 && p.bytes().all(|b| b.is_ascii_digit()))
            .then(|| p.parse::<u32>().ok())
            .flatten()
            .filter(|v| *v < max)
    };
    let secs = field(h, 24)? * 3600 + field(m, 60)? * 60 + field(s, 60)?;
    (secs < SECONDS_PER_DAY).then_some(secs)
}

pub fn parse_planned_posts(csv_bytes: &[u8]) -> Result<Vec<PlannedPost>, FixtureError> {
    let rows = read_table(csv_bytes, FixtureFile::Posts, &POSTS_HEADER)?;
    let mut seen = HashSet::new();
    rows.iter()
        .map(|row| {
            let plan_id = row.non_empty(0, "plan_id")?.trim().to_owned();
            if !seen.insert(plan_id.clone()) {
                return Err(FixtureError::Duplicate {
                    file: row.file,
                    row: row.line,
                    key: plan_id,
                });
            }
            let raw_time = row.get(3);
            let time_offset = parse_time_of_day(raw_time).ok_or_else(|| {
                row.error(
                    "time_offset",
                    raw_time,
                    "expected HH:MM:SS within 00:00:00..23:59:59",
                )
            })?;
            Ok(PlannedPost {
                plan_id,
                bot_index: row.bot_index(1, "bot_index")?,
                day_offset: row.non_negative(2, "day_offset")?,
                time_offset,
                body: row.non_empty(4, "body")?,
            })
        })
        .collect()
}

pub fn parse_planned_likes(csv_bytes: &[u8]) -> Result<Vec<PlannedLike>, FixtureError> {
    let rows = read_table(csv_bytes, FixtureFile::Likes, &LIKES_HEADER)?;
    let mut seen = HashSet::new();
    rows.iter()
        .map(|row| {
            let plan_id = row.non_empty(0, "plan_id")?.trim().to_owned();
            if !seen.insert(plan_id.clone()) {
                return Err(FixtureError::Duplicate {
                    file: row.file,
                    row: row.line,
                    key: plan_id,
                });
            }
            let actor_bot_index = row.bot_index(1, "actor_bot_index")?;
            let kind = row.get(2);
            let target = match kind.trim() {
                "BOT_POST" => LikeTarget::BotPost {
                    plan_id: row.non_empty(3, "target_ref")?.trim().to_owned(),
                },
                "PARTICIPANT_POST" => {
                    let day = row.non_negative(3, "target_ref")?;
                    if day == 0 {
                        return Err(row.error("target_ref", row.get(3), "study days start at 1"));
                    }
                    LikeTarget::ParticipantPost { day }
                }
                _ => return Err(row.error("target_kind", kind, "expected BOT_POST or PARTICIPANT_POST")),
            };
            Ok(PlannedLike {
                plan_id,
                actor_bot_index,
                target,
                delay_seconds: row.non_negative(4, "delay_seconds")?,
            })
        })
        .collect()
}

pub fn parse_ads(csv_bytes: &[u8]) -> Result<Vec<PlannedAd>, FixtureError> {
    let rows = read_table(csv_bytes, FixtureFile::Ads, &ADS_HEADER)?;
    rows.iter()
        .map(|row| {
            Ok(PlannedAd {
                title: row.non_empty(0, "title")?,
                body: row.get(1).to_owned(),
                image_ref: row.get(2).to_owned(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::{write_bots, write_planned_likes, write_planned_posts, FixtureFiles};
    use proptest::prelude::*;

    const BOTS_HDR: &str = "bot_index,display_name,gender,age,nationality,interests,bio\n";
    const POSTS_HDR: &str = "plan_id,bot_index,day_offset,time_offset,body\n";
    const LIKES_HDR: &str = "plan_id,actor_bot_index,target_kind,target_ref,delay_seconds\n";

    #[test]
    fn header_only_bots_is_empty() {
        assert_eq!(parse_bots(BOTS_HDR.as_bytes()).unwrap(), vec![]);
    }

    #[test]
    fn six_bot_rows() {
        let bots = parse_bots(FixtureFiles::study_default().bots_csv.as_bytes()).unwrap();
        assert_eq!(bots.len(), 6);
        assert_eq!(bots[0].profile.interests, vec!["hiking", "photography", "coffee"]);
        assert_eq!(bots[1].profile.age, Some(31));
    }

    #[test]
    fn malformed_age_names_row_and_column() {
        let csv = format!("{BOTS_HDR}1,Ann,f,30,DE,a;b,hi\n2,Bob,m,abc,DE,,\n");
        match parse_bots(csv.as_bytes()).unwrap_err() {
            FixtureError::Field {
                row, column, value, ..
            } => {
                assert_eq!(row, 3);
                assert_eq!(column, "age");
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_reports_diff() {
        let csv = "bot_index,name,gender,age,nationality,interests,bio,extra\n";
        match parse_bots(csv.as_bytes()).unwrap_err() {
            FixtureError::Schema {
                missing, unexpected, ..
            } => {
                assert_eq!(missing, vec!["display_name"]);
                assert_eq!(unexpected, vec!["name", "extra"]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn thirty_planned_posts() {
        let posts = parse_planned_posts(FixtureFiles::study_default().posts_csv.as_bytes()).unwrap();
        assert_eq!(posts.len(), 30);
        assert!(posts.iter().all(|p| p.day_offset < 5));
    }

    #[test]
    fn empty_post_body_rejected() {
        let csv = format!("{POSTS_HDR}p1,1,0,09:00:00,\n");
        let err = parse_planned_posts(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, FixtureError::Field { ref column, row: 2, .. } if column == "body"));
    }

    #[test]
    fn time_offset_out_of_range_names_value() {
        let csv = format!("{POSTS_HDR}p1,1,0,25:00:00,hello\n");
        let err = parse_planned_posts(csv.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("25:00:00"), "{err}");
        assert_eq!(parse_time_of_day("09:00:00"), Some(9 * 3600));
        assert_eq!(parse_time_of_day("23:59:59"), Some(86_399));
        assert_eq!(parse_time_of_day("24:00:00"), None);
        assert_eq!(parse_time_of_day("9:00:00"), None);
        assert_eq!(parse_time_of_day("09:60:00"), None);
    }

    #[test]
    fn duplicate_plan_id_rejected() {
        let csv = format!("{POSTS_HDR}p1,1,0,09:00:00,a\np1,2,0,09:00:00,b\n");
        assert_eq!(
            parse_planned_posts(csv.as_bytes()).unwrap_err(),
            FixtureError::Duplicate {
                file: FixtureFile::Posts,
                row: 3,
                key: "p1".into()
            }
        );
    }

    #[test]
    fn day_offset_beyond_study_parses() {
        // range against day_count is a validation concern
        let csv = format!("{POSTS_HDR}p1,1,9,09:00:00,a\n");
        assert_eq!(parse_planned_posts(csv.as_bytes()).unwrap()[0].day_offset, 9);
    }

    #[test]
    fn bot_post_like_parses() {
        let csv = format!("{LIKES_HDR}l1,2,BOT_POST,p1_d1,3600\n");
        assert_eq!(
            parse_planned_likes(csv.as_bytes()).unwrap(),
            vec![PlannedLike {
                plan_id: "l1".into(),
                actor_bot_index: 2,
                target: LikeTarget::BotPost {
                    plan_id: "p1_d1".into()
                },
                delay_seconds: 3600,
            }]
        );
    }

    #[test]
    fn participant_like_targets_day() {
        let csv = format!("{LIKES_HDR}l1,2,PARTICIPANT_POST,3,60\n");
        assert_eq!(
            parse_planned_likes(csv.as_bytes()).unwrap()[0].target,
            LikeTarget::ParticipantPost { day: 3 }
        );
    }

    #[test]
    fn like_range_errors() {
        for (row, column) in [
            ("l1,7,BOT_POST,p1,5", "actor_bot_index"),
            ("l1,2,BOT_POST,p1,-5", "delay_seconds"),
            ("l1,2,COMMENT,p1,5", "target_kind"),
            ("l1,2,PARTICIPANT_POST,0,5", "target_ref"),
        ] {
            let csv = format!("{LIKES_HDR}{row}\n");
            match parse_planned_likes(csv.as_bytes()).unwrap_err() {
                FixtureError::Field {
                    column: c, row: 2, ..
                } => assert_eq!(c, column),
                other => panic!("{row}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn ragged_row_is_located() {
        let csv = format!("{LIKES_HDR}l1,2,BOT_POST\n");
        let err = parse_planned_likes(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, FixtureError::Csv { row: Some(2), .. }), "{err:?}");
    }

    #[test]
    fn bom_is_ignored() {
        let csv = format!("\u{feff}{BOTS_HDR}");
        assert!(parse_bots(csv.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn default_files_round_trip() {
        let files = FixtureFiles::study_default();
        let bundle = files.parse().unwrap();
        assert_eq!(write_bots(&bundle.bots), files.bots_csv);
        assert_eq!(write_planned_posts(&bundle.planned_posts), files.posts_csv);
        assert_eq!(write_planned_likes(&bundle.planned_likes), files.likes_csv);
    }

    proptest! {
        #[test]
        fn parsing_is_total(bytes in prop::collection::vec(any::<u8>(), 0..256), pick in 0usize..4) {
            // any outcome is fine as long as nothing panics
            let _ = match pick {
                0 => parse_bots(&bytes).map(|_| ()),
                1 => parse_planned_posts(&bytes).map(|_| ()),
                2 => parse_planned_likes(&bytes).map(|_| ()),
                _ => parse_ads(&bytes).map(|_| ()),
            };
        }

        #[test]
        fn parsing_is_total_after_valid_header(tail in "[ -~\n\",;:]{0,200}") {
            let _ = parse_planned_posts(format!("{POSTS_HDR}{tail}").as_bytes());
            let _ = parse_planned_likes(format!("{LIKES_HDR}{tail}").as_bytes());
            let _ = parse_bots(format!("{BOTS_HDR}{tail}").as_bytes());
        }

        #[test]
        fn planned_posts_round_trip(
            rows in prop::collection::vec(
                (1u8..=6, 0u32..10, 0u32..86_400, "[a-zA-Z][a-zA-Z ,\"é🙂]{0,30}"),
                0..12,
            )
        ) {
            let posts: Vec<PlannedPost> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (bot_index, day_offset, time_offset, body))| PlannedPost {
                    plan_id: format!("p{i}"),
                    bot_index,
                    day_offset,
                    time_offset,
                    body,
                })
                .collect();
            let csv = write_planned_posts(&posts);
            let parsed = parse_planned_posts(csv.as_bytes()).unwrap();
            prop_assert_eq!(&parsed, &posts);
            prop_assert_eq!(write_planned_posts(&parsed), csv.replace("\r\n", "\n"));
        }
    }
}
