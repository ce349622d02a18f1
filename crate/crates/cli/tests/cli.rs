use animflow::flowfield::{save_flo, FlowField};
use animflow::imaging::ImageBuffer;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_animflow"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn demo_scene() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/demo/scene.json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn out_set(dir: &Path) -> String {
    format!("output.dir={}", serde_json::to_string(s(dir)).unwrap())
}

fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> ImageBuffer {
    let px = (0..w * h).map(|i| f(i % w, i / w)).collect();
    ImageBuffer::new(w, h, 1, px).unwrap()
}

#[test]
fn run_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "--scene", s(&demo_scene()), "--set", "sim.frame_count=2", "--set", &out_set(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let flows = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "flo"))
        .count();
    assert_eq!(flows, 2);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.trim().ends_with("report.json"), "{stdout}");
}

#[test]
fn missing_scene_is_invalid_input() {
    let o = run(&["run", "--scene", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/definitely/not/here.json"), "{}", stderr(&o));
}

#[test]
fn validation_failure_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "--scene", s(&demo_scene()), "--set", "strokes[0].radius=-5", "--set", &out_set(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("strokes[0].radius"), "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn unstable_run_fails_with_frame() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "run",
        "--scene",
        s(&demo_scene()),
        "--set",
        r#"bodies.0.material={"mu":1e9,"lambda":1e9}"#,
        "--set",
        "sim.dt=0.01",
        "--set",
        "sim.fps=10",
        "--set",
        &out_set(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("frame 1") && err.contains("substep"), "{err}");
}

#[test]
fn mesh_rectangle() {
    let dir = tempfile::tempdir().unwrap();
    let mask = dir.path().join("rect_mask.png");
    gray(64, 64, |c, r| if (10..54).contains(&c) && (12..40).contains(&r) { 1.0 } else { 0.0 })
        .save_png(&mask)
        .unwrap();
    let out = dir.path().join("rect.json");
    let o = run(&["mesh", "--mask", s(&mask), "--out", s(&out), "--spacing", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: animflow::geometry::MeshDocument = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let p = &doc.vertices;
    let area: f64 = doc
        .triangles
        .iter()
        .map(|t| {
            let (a, b, c) = (p[t[0]], p[t[1]], p[t[2]]);
            0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs()
        })
        .sum();
    let pixels = (44 * 28) as f64;
    assert!((area - pixels).abs() / pixels < 0.02, "{area} vs {pixels}");
    assert!(!doc.boundary_edges.is_empty());
    assert!(dir.path().join("rect.png").is_file());
    let first = std::fs::read(&out).unwrap();
    let wire = std::fs::read(out.with_extension("png")).unwrap();
    let o = run(&["mesh", "--mask", s(&mask), "--out", s(&out), "--spacing", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), first);
    assert_eq!(std::fs::read(out.with_extension("png")).unwrap(), wire);
}

#[test]
fn mesh_empty_mask() {
    let dir = tempfile::tempdir().unwrap();
    let mask = dir.path().join("empty.png");
    gray(16, 16, |_, _| 0.0).save_png(&mask).unwrap();
    let out = dir.path().join("empty.json");
    let o = run(&["mesh", "--mask", s(&mask), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn warp_identity_shift_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("img.png");
    let pic = gray(32, 24, |c, r| ((c * 7 + r * 3) % 256) as f32 / 255.0);
    pic.save_png(&image).unwrap();
    let zero = dir.path().join("zero.flo");
    save_flo(&FlowField::zeros(32, 24), &zero).unwrap();
    let out = dir.path().join("out.png");
    let o = run(&["warp", "--image", s(&image), "--flow", s(&zero), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(ImageBuffer::load_png(&out).unwrap().to_bytes(), pic.to_bytes());

    let n = 32 * 24;
    let shift = dir.path().join("shift.flo");
    save_flo(&FlowField::from_components(32, 24, vec![3.0; n], vec![0.0; n]), &shift).unwrap();
    let o = run(&["warp", "--image", s(&image), "--flow", s(&shift), "--out", s(&out), "--background", "0"]);
    assert_eq!(o.status.code(), Some(0));
    let got = ImageBuffer::load_png(&out).unwrap();
    for r in 0..24 {
        for c in 0..32 {
            let want = if c >= 3 { pic.get(c - 3, r, 0) } else { 0.0 };
            assert!((got.get(c, r, 0) - want).abs() < 1e-6, "({c}, {r})");
        }
    }

    let small = dir.path().join("small.flo");
    save_flo(&FlowField::zeros(16, 24), &small).unwrap();
    let o = run(&["warp", "--image", s(&image), "--flow", s(&small), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("16") && err.contains("32") && err.contains("24"), "{err}");
}

#[test]
fn simulate_and_flow() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene.json");
    let mut doc: serde_json::Value = serde_json::from_slice(&std::fs::read(demo_scene()).unwrap()).unwrap();
    let demo = demo_scene().parent().unwrap().canonicalize().unwrap();
    doc["image"] = serde_json::json!(demo.join("image.png"));
    doc["bodies"][0]["mask"] = serde_json::json!(demo.join("mask.png"));
    doc["sim"]["frame_count"] = serde_json::json!(3);
    std::fs::write(&scene, doc.to_string()).unwrap();

    let snaps = dir.path().join("snaps.json");
    let o = run(&["simulate", "--scene", s(&scene), "--snapshots", s(&snaps)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&snaps).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 4);

    let flo = dir.path().join("f.flo");
    let o = run(&["flow", "--scene", s(&scene), "--frame", "2", "--out", s(&flo)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = run(&["run", "--scene", s(&scene)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&flo).unwrap(), std::fs::read(dir.path().join("out/flow_0002.flo")).unwrap());

    let o = run(&["flow", "--scene", s(&scene), "--frame", "9", "--out", s(&flo)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_states_units_and_defaults() {
    let o = run(&["mesh", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("pixels") && text.contains("[default: "), "{text}");
    let o = run(&["warp", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("[default: 10]") && text.contains("0 for color"), "{text}");
    let o = run(&["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["run", "mesh", "warp", "simulate", "flow", "serve"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}

#[test]
fn warp_background_follows_channels() {
    let dir = tempfile::tempdir().unwrap();
    let n = 8 * 4;
    let flow = dir.path().join("shift.flo");
    save_flo(&FlowField::from_components(8, 4, vec![2.0; n], vec![0.0; n]), &flow).unwrap();
    let out = dir.path().join("out.png");
    for (channels, want) in [(1, 1.0), (3, 0.0)] {
        let image = dir.path().join(format!("img{channels}.png"));
        ImageBuffer::filled(8, 4, channels, 0.5).save_png(&image).unwrap();
        let o = run(&["warp", "--image", s(&image), "--flow", s(&flow), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let got = ImageBuffer::load_png(&out).unwrap();
        assert_eq!(got.channels(), channels);
        assert_eq!(got.get(0, 0, 0), want);
        assert_eq!(got.get(5, 2, 0), (0.5f32 * 255.0).round() / 255.0);
    }
}
