//! Shared inputs for the benchmarks.

use std::sync::Arc;

use fakebook_core::platform::{AdminCredentials, NewExperiment, Platform};
use fakebook_core::{Clock, Condition, SystemClock, VirtualClock};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// `n` answers on the -2..=2 single-item scale, seeded for repeatability.
pub fn likert_sample(seed: u64, n: usize, shift: i32) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|_| (rng.gen_range(-2..=2) + shift).clamp(-2, 2) as f64)
        .collect()
}

/// `n` distinct values in random order.
pub fn distinct_sample(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n).map(|i| i as f64 + rng.gen_range(0.0..0.5)).collect()
}

/// Runs `experiments` participants through five task days on a virtual
/// clock, each posting once a day, and returns the like rows exported.
pub fn simulate_study(experiments: usize) -> usize {
    let clock = VirtualClock::new(SystemClock.now());
    let admin = AdminCredentials {
        login: "admin".into(),
        password: "bench".into(),
    };
    let platform = Platform::new(Arc::new(clock.clone()), &admin);
    let token = platform.login("admin", "bench").unwrap().token;
    let mut ids = Vec::new();
    for i in 0..experiments {
        let condition = if i % 2 == 0 {
            Condition::ManyLikes
        } else {
            Condition::FewLikes
        };
        let spec = NewExperiment::study_default(condition, &format!("p{i}"), "pw");
        ids.push(
            platform
                .admin_create_experiment(&token, spec)
                .unwrap()
                .experiment_id,
        );
    }
    let body = "b".repeat(600);
    for _day in 0..5 {
        clock.advance_secs(20 * 3600);
        for i in 0..experiments {
            let p = platform.login(&format!("p{i}"), "pw").unwrap().token;
            platform.get_feed(&p).unwrap();
            platform.create_post(&p, &body).unwrap();
        }
        clock.advance_secs(4 * 3600);
    }
    clock.advance_secs(2 * 86_400);
    platform.tick().unwrap();
    let token = platform.login("admin", "bench").unwrap().token;
    ids.iter()
        .map(|id| {
            let bundle = platform.admin_export(&token, *id, Default::default()).unwrap();
            bundle.table("reactions").map_or(0, |t| t.rows.len())
        })
        .sum()
}
