use std::path::Path;
use std::process::{Command, Output};

fn uvdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uvdiff"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = uvdiff(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fails(args: &[&str]) -> String {
    let out = uvdiff(args);
    assert!(!out.status.success(), "{args:?} should fail");
    let err = String::from_utf8_lossy(&out.stderr).trim().to_string();
    assert_eq!(err.lines().count(), 1, "diagnostic is not one line: {err}");
    assert!(err.starts_with("error: "));
    err
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn pipeline_from_data_to_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.ndta");
    let ck = d.join("tiny.ckpt");
    let cfg = d.join("train.toml");
    std::fs::write(
        &cfg,
        "steps = 3\nbatch = 2\nbase_width = 8\ndepth = 1\ntime-dim = 16\ntimesteps = 10\nbeta_end = 0.2\nlog_every = 1\n",
    )
    .unwrap();
    ok(&["gen-data", "--count", "4", "--resolution", "16", "--out", p(&data)]);
    ok(&[
        "train",
        "--config",
        p(&cfg),
        "--data",
        p(&data),
        "--out",
        p(&ck),
        "--steps",
        "2",
    ]);

    let samples = d.join("samples");
    ok(&[
        "sample",
        "--checkpoint",
        p(&ck),
        "--out",
        p(&samples),
        "--count",
        "2",
        "--resolution",
        "16",
    ]);
    assert!(samples.join("sample_001_normal.png").exists());
    assert!(samples.join("samples.ndt").exists());

    let cases = d.join("cases");
    ok(&[
        "bench",
        "--export",
        p(&cases),
        "--indices",
        "1",
        "--resolution",
        "16",
        "--image-size",
        "64",
    ]);
    let case = cases.join("case_01");
    let rec = d.join("rec");
    ok(&[
        "reconstruct",
        "--checkpoint",
        p(&ck),
        "--image",
        p(&case.join("image.png")),
        "--landmarks",
        p(&case.join("landmarks.ndt")),
        "--resolution",
        "16",
        "--algorithm",
        "mcg_ddim",
        "--ddim-steps",
        "5",
        "--out",
        p(&rec),
    ]);
    let inp = d.join("inp");
    ok(&[
        "inpaint",
        "--checkpoint",
        p(&ck),
        "--texture",
        p(&rec.join("unwrapped.png")),
        "--mask",
        p(&rec.join("mask.png")),
        "--algorithm",
        "repaint",
        "--repaint-n",
        "2",
        "--out",
        p(&inp),
    ]);
    let table = ok(&[
        "eval",
        "--pred",
        p(&inp.join("stack.ndt")),
        "--truth",
        p(&case.join("truth.ndt")),
    ]);
    for map in ["texture", "diffuse", "specular", "normal"] {
        assert!(table.contains(map), "{table}");
    }
}

#[test]
fn command_line_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.toml");
    std::fs::write(&cfg, "count = 3\nresolution = 8\n").unwrap();
    let a = dir.path().join("a.ndta");
    let b = dir.path().join("b.ndta");
    ok(&["gen-data", "--config", p(&cfg), "--out", p(&a)]);
    ok(&["gen-data", "--out", p(&b), "--config", p(&cfg), "--count", "2"]);
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(b.len() < a.len());
}

#[test]
fn errors_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_flag = 1\n").unwrap();
    let out = dir.path().join("x.ndta");
    assert!(
        fails(&["gen-data", "--config", p(&cfg), "--out", p(&out)]).contains("no_such_flag".replace('_', "-").as_str())
    );
    assert!(fails(&["inpaint"]).contains("--texture"));
    fails(&[
        "sample",
        "--checkpoint",
        p(&dir.path().join("missing.ckpt")),
        "--out",
        p(dir.path()),
    ]);
    fails(&[
        "inpaint",
        "--checkpoint",
        "c",
        "--texture",
        "t",
        "--mask",
        "m",
        "--out",
        "o",
        "--algorithm",
        "bogus",
    ]);
    fails(&["bench", "--export", p(dir.path()), "--indices", "99"]);
    fails(&["eval", "--pred", p(&out)]);
}
