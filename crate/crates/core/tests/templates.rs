use proptest::prelude::*;

use pwf_core::templates::{generate, workspace, write_generated, TEMPLATE_NAMES};
use pwf_core::twin::{load_scene, scene_content_hash};

#[test]
fn every_template_writes_a_loadable_scene() {
    let dir = tempfile::tempdir().unwrap();
    for name in TEMPLATE_NAMES {
        let scene = generate(name, 3).unwrap();
        let path = dir.path().join(format!("{name}.scene"));
        write_generated(&scene, &path).unwrap();
        let back = load_scene(&path).unwrap();
        assert_eq!(back, scene, "{name}");
        assert!(back.task.oracle_goal.is_some() && back.task.scripted_subtasks.is_some(), "{name}");
    }
}

#[test]
fn same_seed_writes_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for name in TEMPLATE_NAMES {
        for dir in [&a, &b] {
            write_generated(&generate(name, 11).unwrap(), &dir.path().join("s.scene")).unwrap();
        }
        let ha = scene_content_hash(&a.path().join("s.scene")).unwrap();
        let hb = scene_content_hash(&b.path().join("s.scene")).unwrap();
        assert_eq!(ha, hb, "{name}");
    }
}

#[test]
fn unknown_template_is_rejected() {
    assert_eq!(generate("juggle", 0).unwrap_err().code(), "UNKNOWN_TEMPLATE");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bodies_start_inside_the_workspace(t in 0usize..5, seed in any::<u64>()) {
        let scene = generate(TEMPLATE_NAMES[t], seed).unwrap();
        let ws = workspace();
        for b in &scene.bodies {
            prop_assert!(ws.contains(&b.pose.position), "{} {}", TEMPLATE_NAMES[t], b.id);
        }
    }
}
