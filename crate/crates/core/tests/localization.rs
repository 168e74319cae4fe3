use deepair::dqn::TrainConfig;
use deepair::localization::{find_locations, run_iteration, LocalizationConfig};
use deepair::radio::RadioParams;
use deepair::scenario::{generate_scenario, ArenaConfig, Scenario, TaskProfile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A short, small training run: enough to move off the base, not to be good.
fn quick() -> LocalizationConfig {
    LocalizationConfig {
        train: TrainConfig {
            max_episodes: 25,
            hidden_layers: vec![32, 32],
            batch_size: 32,
            ..TrainConfig::default()
        },
        ..LocalizationConfig::default()
    }
}

fn scenario(seed: u64, users: usize, points: usize) -> Scenario {
    generate_scenario(seed, users, points, &ArenaConfig::default(), &TaskProfile::default()).unwrap()
}

#[test]
fn empty_field_yields_no_reports() {
    // Everyone is already connected, so nothing emits.
    let mut s = scenario(1, 10, 1);
    for u in s.users.iter_mut() {
        u.connect(0);
    }
    let r = find_locations(&mut s, &quick(), &RadioParams::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(r.reports.is_empty());
    assert_eq!(r.total_connected, 0);
    assert_eq!(r.rejected.unwrap().connection_count(), 0);
}

#[test]
fn unreachable_threshold_yields_no_reports() {
    let mut s = scenario(2, 20, 1);
    let cfg = LocalizationConfig {
        threshold: 21,
        ..quick()
    };
    let r = find_locations(&mut s, &cfg, &RadioParams::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert!(r.reports.is_empty());
    // The rejected iteration's connections were rolled back.
    assert_eq!(s.connected_count(), 0);
    assert_eq!(s.emitting_count(), 20);
}

#[test]
fn iterations_make_progress_and_respect_separation() {
    let radio = RadioParams::default();
    let mut accepted = 0;
    for seed in 0..4 {
        let mut s = scenario(seed, 40, 2);
        let cfg = quick();
        let r = match find_locations(&mut s, &cfg, &radio, &mut ChaCha8Rng::seed_from_u64(seed)) {
            Ok(r) => r,
            Err(e) => panic!("seed {seed}: {e}"),
        };
        accepted += r.reports.len();
        assert!(r.reports.len() < 40 / cfg.threshold + 1);
        let mut seen = std::collections::HashSet::new();
        for (k, rep) in r.reports.iter().enumerate() {
            assert!(rep.connection_count() >= cfg.threshold);
            for &id in &rep.new_connection_ids {
                assert!(seen.insert(id), "user {id} reported twice");
                assert_eq!(s.users[id].connected_to, Some(k));
                assert!(!s.users[id].emitting);
            }
        }
        assert!(r.rejected.as_ref().unwrap().connection_count() < cfg.threshold);
        assert_eq!(r.total_connected, seen.len());
        assert_eq!(s.connected_count(), seen.len());
        for (i, a) in r.reports.iter().enumerate() {
            for b in &r.reports[i + 1..] {
                assert!(a.hover_position.distance(&b.hover_position) >= s.config.min_uav_separation);
            }
        }
    }
    assert!(accepted > 0, "no seed accepted a detector");
}

#[test]
fn one_iteration_stops_emission() {
    let mut s = scenario(3, 30, 1);
    let before = s.emitting_count();
    let rep = run_iteration(&mut s, &[], 0, &quick(), &RadioParams::default(), &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(s.emitting_count(), before - rep.connection_count());
    assert_eq!(rep.episode_scores.len(), 25);
    let again = run_iteration(&mut s, &[rep.hover_position], 1, &quick(), &RadioParams::default(), &mut ChaCha8Rng::seed_from_u64(4));
    for id in &again.new_connection_ids {
        assert!(!rep.new_connection_ids.contains(id));
    }
}
