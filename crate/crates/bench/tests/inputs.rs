use fakebook_bench::{distinct_sample, likert_sample, simulate_study};

#[test]
fn samples_are_repeatable_and_in_range() {
    let a = likert_sample(7, 85, 1);
    assert_eq!(a, likert_sample(7, 85, 1));
    assert!(a.iter().all(|v| (-2.0..=2.0).contains(v)));
    let d = distinct_sample(7, 40);
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    assert_eq!(sorted.len(), 40);
}

#[test]
fn simulated_study_produces_likes() {
    // one many-likes participant: bot-to-bot likes plus 24 granted likes
    assert!(simulate_study(1) > 24);
}
