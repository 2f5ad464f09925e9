use csv::{Terminator, WriterBuilder};

use super::{
    BotProfile, LikeTarget, PlannedAd, PlannedLike, PlannedPost, ADS_HEADER, BOTS_HEADER, LIKES_HEADER,
    POSTS_HEADER,
};

fn write_table<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut writer = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(header).expect("in-memory write");
    for row in rows {
        writer.write_record(&row).expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory flush");
    String::from_utf8(bytes).expect("csv output of UTF-8 input is UTF-8")
}

pub(crate) fn format_time_of_day(secs: u32) -> String {
    format!("{:02}:{:02}:{:02}", secs / 3600, secs / 60 % 60, secs % 60)
}

pub fn write_bots(bots: &[BotProfile]) -> String {
    write_table(
        &BOTS_HEADER,
        bots.iter().map(|b| {
            vec![
                b.bot_index.to_string(),
                b.display_name.clone(),
                b.profile.gender.clone().unwrap_or_default(),
                b.profile.age.map(|a| a.to_string()).unwrap_or_default(),
                b.profile.nationality.clone().unwrap_or_default(),
                b.profile.interests.join(";"),
                b.profile.bio.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_planned_posts(posts: &[PlannedPost]) -> String {
    write_table(
        &POSTS_HEADER,
        posts.iter().map(|p| {
            vec![
                p.plan_id.clone(),
                p.bot_index.to_string(),
                p.day_offset.to_string(),
                format_time_of_day(p.time_offset),
                p.body.clone(),
            ]
        }),
    )
}

pub fn write_planned_likes(likes: &[PlannedLike]) -> String {
    write_table(
        &LIKES_HEADER,
        likes.iter().map(|l| {
            let (kind, target) = match &l.target {
                LikeTarget::BotPost { plan_id } => ("BOT_POST", plan_id.clone()),
                LikeTarget::ParticipantPost { day } => ("PARTICIPANT_POST", day.to_string()),
            };
            vec![
                l.plan_id.clone(),
                l.actor_bot_index.to_string(),
                kind.to_owned(),
                target,
                l.delay_seconds.to_string(),
            ]
        }),
    )
}

pub fn write_ads(ads: &[PlannedAd]) -> String {
    write_table(
        &ADS_HEADER,
        ads.iter()
            .map(|a| vec![a.title.clone(), a.body.clone(), a.image_ref.clone()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_of_day_formatting() {
        assert_eq!(format_time_of_day(0), "00:00:00");
        assert_eq!(format_time_of_day(9 * 3600 + 5 * 60 + 7), "09:05:07");
        assert_eq!(format_time_of_day(86_399), "23:59:59");
    }

    #[test]
    fn fields_with_commas_are_quoted() {
        let out = write_ads(&[PlannedAd {
            title: "Trips, cheap".into(),
            body: "say \"hi\"".into(),
            image_ref: "x.jpg".into(),
        }]);
        assert_eq!(
            out,
            "title,body,image_ref\n\"Trips, cheap\",\"say \"\"hi\"\"\",x.jpg\n"
        );
    }
}
