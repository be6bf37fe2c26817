use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const CONFIG: &str = "\
# windows sized for the 8x20 synthetic objects
window.width = 8
window.height = 20
window.stride_x = 1
window.stride_y = 1
phog.bins = 12
phog.levels = 2
train.hidden = 16,8
train.seed = 3
tracker.merge_radius = 10
evaluation.threshold = 10
";

const SCENE: &str = r#"
width = 96
height = 64
frames = 30
seed = 11

[[objects]]
id = 1
start = [6.0, 22.0]
velocity = [2.0, 0.5]
first_frame = 8
"#;

fn pedtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pedtrack")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[track_caller]
fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstdout: {}\nstderr: {}", o.status.code(), stdout(&o), stderr(&o));
    o
}

#[track_caller]
fn fails_with(o: Output, code: i32) -> String {
    assert_eq!(o.status.code(), Some(code), "stdout: {}\nstderr: {}", stdout(&o), stderr(&o));
    let err = stderr(&o);
    assert_eq!(err.trim_end().lines().count(), 1, "diagnostic should be one line: {err:?}");
    err
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        fs::write(root.join("pipeline.cfg"), CONFIG).unwrap();
        fs::write(root.join("scene.toml"), SCENE).unwrap();
        Self { _dir: dir, root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn synth(&self) {
        let cfg = self.path("pipeline.cfg");
        let out = ok(pedtrack(&[
            "synth",
            "--config",
            s(&cfg),
            "--scene",
            s(&self.path("scene.toml")),
            "--output",
            s(&self.path("scene")),
            "--patches",
        ]));
        assert!(stdout(&out).contains("wrote 30 frames"));
    }

    fn train(&self) -> PathBuf {
        let model = self.path("model.txt");
        ok(pedtrack(&[
            "train",
            "--config",
            s(&self.path("pipeline.cfg")),
            "--input",
            s(&self.path("scene/patches")),
            "--output",
            s(&model),
        ]));
        model
    }

    fn track(&self, model: &Path, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(out);
        let (cfg, input) = (self.path("pipeline.cfg"), self.path("scene"));
        let mut args =
            vec!["track", "--config", s(&cfg), "--input", s(&input), "--output", s(&out), "--model", s(model)];
        args.extend_from_slice(extra);
        ok(pedtrack(&args));
        out
    }
}

#[test]
fn synth_train_track_evaluate() {
    let ws = Workspace::new();
    ws.synth();
    assert_eq!(fs::read_dir(ws.path("scene/patches/pos")).unwrap().count(), 200);
    let model = ws.train();
    let out = ws.track(&model, "run", &["--annotate"]);

    let tracks = fs::read_to_string(out.join("tracks.csv")).unwrap();
    assert!(tracks.starts_with("frame,track_id,x,y,width,height,score\n"));
    assert!(tracks.lines().count() > 10);
    assert_eq!(fs::read_dir(out.join("masks")).unwrap().count(), 30);
    assert_eq!(fs::read_dir(out.join("annotated")).unwrap().count(), 30);

    let report = ws.path("report.txt");
    let eval = ok(pedtrack(&[
        "evaluate",
        "--config",
        s(&ws.path("pipeline.cfg")),
        "--input",
        s(&out.join("tracks.csv")),
        "--gt",
        s(&ws.path("scene/gt.csv")),
        "--output",
        s(&report),
    ]));
    let text = stdout(&eval);
    assert!(text.contains("mota="), "{text}");
    let kv = fs::read_to_string(report).unwrap();
    let mota: f64 = kv.lines().find_map(|l| l.strip_prefix("mota=")).unwrap().parse().unwrap();
    assert!(mota >= 0.8, "{kv}");
    assert!(kv.contains("mismatches=0"), "{kv}");
}

#[test]
fn track_output_is_reproducible() {
    let ws = Workspace::new();
    ws.synth();
    let model = ws.train();
    let a = ws.track(&model, "a", &["--annotate"]);
    let b = ws.track(&model, "b", &["--annotate"]);
    for name in ["tracks.csv", "detections.csv", "masks/mask_00017.pgm", "annotated/frame_00017.pgm"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let retrained = ws.train();
    assert_eq!(fs::read(&model).unwrap(), fs::read(retrained).unwrap());
}

#[test]
fn features_csv_trains_the_same_model_as_patch_dirs() {
    let ws = Workspace::new();
    ws.synth();
    let from_dirs = ws.train();
    let csv = ws.path("features.csv");
    let cfg = ws.path("pipeline.cfg");
    ok(pedtrack(&["features", "--config", s(&cfg), "--input", s(&ws.path("scene/patches")), "--output", s(&csv)]));
    let header = fs::read_to_string(&csv).unwrap().lines().next().unwrap().to_owned();
    // 12 bins over a two-level pyramid: 12 * 21 descriptor values
    assert_eq!(header.split(',').count(), 1 + 252);
    let from_csv = ws.path("model_csv.txt");
    ok(pedtrack(&["train", "--config", s(&cfg), "--input", s(&csv), "--output", s(&from_csv)]));
    assert_eq!(fs::read(from_dirs).unwrap(), fs::read(from_csv).unwrap());
}

#[test]
fn bgsub_and_detect() {
    let ws = Workspace::new();
    ws.synth();
    let cfg = ws.path("pipeline.cfg");
    let masks = ws.path("masks");
    let out = ok(pedtrack(&[
        "bgsub",
        "--config",
        s(&cfg),
        "--input",
        s(&ws.path("scene")),
        "--output",
        s(&masks),
        "--max-frames",
        "12",
    ]));
    assert!(stdout(&out).contains("wrote 12 masks"));
    assert_eq!(fs::read_dir(&masks).unwrap().count(), 12);

    let model = ws.train();
    let det = ws.path("det");
    ok(pedtrack(&[
        "detect",
        "--config",
        s(&cfg),
        "--model",
        s(&model),
        "--input",
        s(&ws.path("scene/frame_00015.pgm")),
        "--output",
        s(&det),
    ]));
    let rows = fs::read_to_string(det.join("detections.csv")).unwrap();
    assert!(rows.starts_with("frame,x,y,width,height,score\n"));
}

#[test]
fn exit_codes_and_diagnostics() {
    let ws = Workspace::new();
    let cfg = ws.path("pipeline.cfg");

    let err = fails_with(pedtrack(&["bgsub", "--input", s(&ws.path("nowhere")), "--output", s(&ws.path("o"))]), 2);
    assert!(err.contains("nowhere"), "{err}");

    fs::create_dir(ws.path("empty")).unwrap();
    let err = fails_with(pedtrack(&["bgsub", "--input", s(&ws.path("empty")), "--output", s(&ws.path("o"))]), 1);
    assert!(err.contains("no frames"), "{err}");

    fs::write(ws.path("bad.cfg"), "background.alpha = 1.5\n").unwrap();
    let err = fails_with(pedtrack(&["bgsub", "--config", s(&ws.path("bad.cfg")), "--input", ".", "--output", "o"]), 1);
    assert!(err.contains("alpha"), "{err}");

    fs::write(ws.path("unknown.cfg"), "\nwindow.depth = 3\n").unwrap();
    let err =
        fails_with(pedtrack(&["bgsub", "--config", s(&ws.path("unknown.cfg")), "--input", ".", "--output", "o"]), 1);
    assert!(err.contains("line 2"), "{err}");

    fails_with(pedtrack(&["track", "--input", ".", "--output", "o"]), 1);
    fails_with(pedtrack(&["track", "--bogus"]), 1);
    fails_with(pedtrack(&["frobnicate"]), 1);

    fs::write(ws.path("scene_bad.toml"), "width = 10\nheight = 10\nframes = 3\ncolour = 1\n").unwrap();
    fails_with(pedtrack(&["synth", "--scene", s(&ws.path("scene_bad.toml")), "--output", s(&ws.path("x"))]), 1);

    let err = fails_with(
        pedtrack(&["evaluate", "--config", s(&cfg), "--input", s(&ws.path("none.csv")), "--gt", s(&ws.path("gt.csv"))]),
        2,
    );
    assert!(err.contains("none.csv"), "{err}");

    assert!(pedtrack(&["--help"]).status.success());
}
