use hullguard_core::teleop::script::{bundled_logs, bundled_scripts, record};
use hullguard_core::teleop::{run_trial, TeleopError, TeleopLog, TrialSetup};

fn logs() -> Vec<(&'static str, TeleopLog)> {
    bundled_logs().into_iter().map(|(name, text)| (name, TeleopLog::from_jsonl(text).unwrap())).collect()
}

#[test]
fn bundled_logs_parse_and_match_inputs() {
    let setup = TrialSetup::bundled();
    for (name, log) in logs() {
        setup.check(&log.header).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(log.header.description.as_deref(), Some(name));
        assert!(!log.intents.is_empty());
    }
}

#[test]
fn recorded_and_reloaded_logs_replay_identically() {
    let setup = TrialSetup::bundled();
    let script = &bundled_scripts()[1];
    let fresh = record(script, &setup).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    fresh.write(&path).unwrap();
    let reloaded = TeleopLog::read(&path).unwrap();
    assert_eq!(reloaded, fresh);
    let a = run_trial(&fresh, &setup, true).unwrap().to_json();
    let b = run_trial(&reloaded, &setup, true).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn avoidance_prevents_every_contact() {
    let setup = TrialSetup::bundled();
    let d_s = setup.config.controller.d_s;
    for (name, log) in logs() {
        let r = run_trial(&log, &setup, true).unwrap();
        assert_eq!(r.collisions, 0, "{name}: {:?}", r.episodes);
        assert!(r.completion, "{name}");
        assert!(r.min_mesh_distance.unwrap() >= d_s - 1e-3, "{name}: {:?}", r.min_mesh_distance);
        assert!(r.max_kkt_residual <= 1e-6, "{name}: {}", r.max_kkt_residual);
        assert_eq!(r.min_distance_series.len() as u64, r.steps);
    }
}

#[test]
fn without_avoidance_most_trials_collide() {
    let setup = TrialSetup::bundled();
    let mut colliding = 0;
    for (_, log) in logs() {
        let r = run_trial(&log, &setup, false).unwrap();
        if r.collisions > 0 {
            colliding += 1;
            let first = r.first_collision_t.unwrap();
            assert_eq!(first, r.episodes[0].start);
            assert!(r.episodes.iter().all(|e| e.end >= e.start && e.max_depth > 0.0));
        }
    }
    assert!(colliding >= 4, "{colliding}/5");
}

#[test]
fn episodes_count_sustained_contact_once() {
    let setup = TrialSetup::bundled();
    let (_, log) = &logs()[1];
    let r = run_trial(log, &setup, false).unwrap();
    let contact_steps = r.episodes.iter().map(|e| ((e.end - e.start) / r.dt).round() as usize + 1).sum::<usize>();
    assert!(contact_steps > r.collisions, "a scrape spans several steps");
}

#[test]
fn tampered_inputs_fail_integrity() {
    let setup = TrialSetup::bundled();
    let (_, mut log) = logs().remove(0);
    log.header.scene_hash = "0".repeat(64);
    assert!(matches!(run_trial(&log, &setup, true), Err(TeleopError::Integrity(_))));
    let edited = include_str!("../assets/config.json").replace("\"k_p\": 1.0", "\"k_p\": 2.0");
    let other = TrialSetup::from_texts(include_str!("../assets/corridor.json"), include_str!("../assets/robot.json"), &edited).unwrap();
    let (_, log) = logs().remove(0);
    assert!(matches!(run_trial(&log, &other, true), Err(TeleopError::Integrity(ref m)) if m.contains("config")));
}
