mod common;

use std::path::Path;

use coteach::formats::{self, Format, SubgoalsFile};
use coteach_core::demo::{generate_expert_demo, ExpertScript};
use coteach_core::engine::{replay_demo, SessionLog};
use coteach_core::kinematics::{EndEffectorPose, Machine};
use coteach_core::task::TaskConfig;
use coteach_core::trajectory::{Frame, Trajectory};
use proptest::prelude::*;

fn asset(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("assets")
        .join(name)
}

#[test]
fn bundled_assets_match_builtins() {
    assert_eq!(
        formats::read_script(Some(&asset("truck_loading.json"))).unwrap(),
        ExpertScript::truck_loading()
    );
    assert_eq!(
        formats::read_task(Some(&asset("truck_loading_task.json"))).unwrap(),
        TaskConfig::truck_loading()
    );
}

fn roundtrip(traj: &Trajectory, format: Format) -> Trajectory {
    let mut buf = Vec::new();
    formats::save_trajectory(traj, format, &mut buf).unwrap();
    formats::load_trajectory(buf.as_slice(), format).unwrap()
}

#[test]
fn generated_demo_roundtrips_bitwise() {
    let (traj, _) = generate_expert_demo(
        &ExpertScript::truck_loading(),
        &TaskConfig::truck_loading(),
        &Machine::default(),
        5,
        0.02,
        3,
    )
    .unwrap();
    let mut buf = Vec::new();
    formats::save_trajectory(&traj, Format::Jsonl, &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap().lines().count(),
        traj.len() + 1
    );
    assert_eq!(roundtrip(&traj, Format::Jsonl), traj);
    let mut csv = roundtrip(&traj, Format::Csv);
    csv.meta = traj.meta.clone();
    assert_eq!(csv, traj);
}

fn arb_trajectory() -> impl Strategy<Value = Trajectory> {
    let rate = prop::sample::select(vec![10.0, 25.0, 50.0, 100.0]);
    let frame = (
        prop::array::uniform4(-3.0f64..3.0),
        prop::array::uniform4(-1.0f64..1.0),
        prop::array::uniform4(-2.0f64..2.0),
    );
    (rate, prop::collection::vec(frame, 0..20)).prop_map(|(rate, frames)| {
        let mut t = Trajectory::new(rate);
        t.frames = frames
            .into_iter()
            .enumerate()
            .map(|(i, (q, v, ee))| Frame {
                t: i as f64 / rate,
                q,
                v,
                ee: EndEffectorPose::from_array(ee),
            })
            .collect();
        t
    })
}

proptest! {
    #[test]
    fn save_then_load_is_identity(traj in arb_trajectory()) {
        prop_assert_eq!(roundtrip(&traj, Format::Jsonl), traj.clone());
        prop_assert_eq!(roundtrip(&traj, Format::Csv), traj);
    }
}

#[test]
fn model_and_segments_roundtrip() {
    let (model, demo) = common::noiseless_model(1, 2);
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("m/policy.json");
    formats::write_model(&policy, &dir.path().join("m/subgoals.json"), &model).unwrap();
    let loaded = formats::read_model(&policy, &TaskConfig::truck_loading()).unwrap();
    assert_eq!(*loaded, *model);

    let text = std::fs::read_to_string(dir.path().join("m/subgoals.json")).unwrap();
    let file: SubgoalsFile = serde_json::from_str(&text).unwrap();
    assert_eq!(file.subgoals[0].sigma.len(), 16);
    assert!(text.contains("\"lambda\""));

    let segs = coteach_core::segmentation::segment_trajectory(&demo, &model.clusters, 3).unwrap();
    let mut buf = Vec::new();
    formats::save_segments(&[segs.clone(), segs.clone()], &mut buf).unwrap();
    let first: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&buf).lines().next().unwrap()).unwrap();
    for key in ["primitive_id", "e", "start", "end", "s"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert_eq!(
        formats::load_segments(buf.as_slice()).unwrap(),
        vec![segs.clone(), segs]
    );
}

#[test]
fn subgoals_with_gaps_are_rejected() {
    let (model, _) = common::noiseless_model(1, 2);
    let mut file = SubgoalsFile::from_set(model.subgoals());
    file.subgoals.remove(0);
    assert!(file.into_set(&TaskConfig::truck_loading()).is_err());
}

#[test]
fn session_log_roundtrips() {
    let (model, demo) = common::noiseless_model(1, 2);
    let log = replay_demo(
        model,
        &TaskConfig::truck_loading(),
        &Machine::default(),
        &demo,
        9,
    )
    .unwrap();
    let mut buf = Vec::new();
    formats::save_session_log(&log, &mut buf).unwrap();
    let back: SessionLog = formats::load_session_log(buf.as_slice()).unwrap();
    assert_eq!(back, log);
}
