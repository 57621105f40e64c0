//! Exercises the binary surface: subcommands and exit codes.

use canopy_cli::manifest::{CameraConfig, Hyper, PrimKind, Primitive, SceneManifest};
use std::path::Path;
use std::process::Command;

fn canopy() -> Command {
    Command::new(env!("CARGO_BIN_EXE_canopy"))
}

fn write_skeleton(path: &Path) {
    let m = SceneManifest {
        frames: 1,
        cameras: vec![CameraConfig {
            fx: 40.0,
            fy: 40.0,
            cx: 16.0,
            cy: 12.0,
            width: 32,
            height: 24,
            position: [0.0, -0.7, 0.45],
            look_at: [0.0, 0.0, 0.05],
        }],
        z_ground: 0.0,
        primitives: vec![Primitive {
            kind: PrimKind::Sphere,
            center: Some([0.0, 0.0, 0.08]),
            radius: 0.08,
            half_extents: [0.0; 3],
            yaw: 0.0,
            colour: [0.9, 0.1, 0.1],
            velocity: [0.0; 3],
        }],
        paths: Vec::new(),
        hyper: Hyper::default(),
    };
    m.save(path).unwrap();
}

#[test]
fn full_command_flow_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let skeleton = dir.path().join("skeleton.json");
    write_skeleton(&skeleton);
    let scene = dir.path().join("scene");
    let out = dir.path().join("out");

    let status = canopy()
        .args(["gen-scene", "--manifest"])
        .arg(&skeleton)
        .arg("--out")
        .arg(&scene)
        .args(["--seed", "5"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let manifest = scene.join("manifest.json");
    let status = canopy()
        .args(["decompose", "--manifest"])
        .arg(&manifest)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("report.json").is_file());
    assert!(out.join("poses.csv").is_file());

    let status = canopy()
        .args(["pose", "--manifest"])
        .arg(&manifest)
        .arg("--out")
        .arg(dir.path().join("pose_out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("pose_out/poses.csv")).unwrap();
    assert!(csv.starts_with("frame,slot,tx,ty,tz,r00"));

    let status = canopy()
        .args(["metrics", "--out"])
        .arg(dir.path().join("agg.json"))
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let status = canopy()
        .args(["grid-cache", "--grid-level", "0", "--out"])
        .arg(dir.path().join("grid0.obpt"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let t = canopy_cli::tensor::Tensor::read(&dir.path().join("grid0.obpt")).unwrap();
    assert_eq!(t.dims, vec![72, 4]);
}

#[test]
fn validation_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    // Manifest that does not exist.
    let status = canopy()
        .args(["decompose", "--manifest"])
        .arg(dir.path().join("missing.json"))
        .arg("--out")
        .arg(dir.path().join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1), "i/o failure is a runtime error");

    // Structurally invalid manifest: zero frames.
    let bad = dir.path().join("bad.json");
    write_skeleton(&bad);
    let text = std::fs::read_to_string(&bad).unwrap().replacen(
        "\"frames\": 1",
        "\"frames\": 0",
        1,
    );
    std::fs::write(&bad, text).unwrap();
    let status = canopy()
        .args(["gen-scene", "--manifest"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("scene"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    // Asking for more frames than the scene has.
    let skeleton = dir.path().join("skeleton.json");
    write_skeleton(&skeleton);
    let scene = dir.path().join("scene2");
    assert_eq!(
        canopy()
            .args(["gen-scene", "--manifest"])
            .arg(&skeleton)
            .arg("--out")
            .arg(&scene)
            .status()
            .unwrap()
            .code(),
        Some(0)
    );
    let status = canopy()
        .args(["decompose", "--manifest"])
        .arg(scene.join("manifest.json"))
        .arg("--out")
        .arg(dir.path().join("out2"))
        .args(["--frames", "7"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
