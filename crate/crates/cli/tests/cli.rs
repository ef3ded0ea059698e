use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gunet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gunet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const TINY: &str = "depth = 1\nnode_width = 4\nedge_width = 4\nglobal_width = 4\nbatch = 4\nwarmup_steps = 5\ncheckpoint_every = 10\n";

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("tiny.cfg"), TINY).unwrap();
    ok(&gunet(d, &["synth", "--seed", "4", "--size", "10x12", "--days", "2", "--out", "city"]));
    ok(&gunet(d, &["mirror", "--in", "city", "--out", "city_m"]));
    ok(&gunet(d, &["train", "--data", "city", "--config", "tiny.cfg", "--steps", "25", "--seed", "7", "--out", "m.ckpt"]));
    for f in ["m.ckpt", "m.ckpt.cfg", "m.ckpt.loss.csv", "m.ckpt.step10", "m.ckpt.step20"] {
        assert!(d.join(f).exists(), "missing {f}");
    }
    let log = fs::read_to_string(d.join("m.ckpt.loss.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("step,lr,train_mse"));
    assert_eq!(log.lines().count(), 26);

    ok(&gunet(d, &["eval", "--data", "city", "--ckpt", "m.ckpt", "--mirrored", "--report", "r.csv", "--dump-frames", "frames"]));
    let report = fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(report.starts_with("city,windows,mse,mse_star,rel_mse"));
    assert!(d.join("r.csv.hourly.csv").exists());
    assert!(d.join("frames/city/day0_0800/h12_c7.pgm").exists());

    ok(&gunet(d, &["predict", "--data", "city", "--ckpt", "m.ckpt", "--at", "1:07:30", "--out", "p.tmv"]));
    assert!(fs::metadata(d.join("p.tmv")).unwrap().len() > 6 * 10 * 12 * 8);

    ok(&gunet(d, &["baseline", "--data", "city,city_m", "--report", "b.csv"]));
    let b = fs::read_to_string(d.join("b.csv")).unwrap();
    let mse: Vec<&str> = b.lines().skip(1).take(2).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(mse[0], mse[1], "naive baseline differs on the mirrored city:\n{b}");
}

#[test]
fn train_is_bit_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("tiny.cfg"), TINY).unwrap();
    ok(&gunet(d, &["synth", "--seed", "5", "--size", "12x12", "--days", "1", "--out", "city"]));
    for out in ["a.ckpt", "b.ckpt"] {
        ok(&gunet(d, &["train", "--data", "city", "--config", "tiny.cfg", "--steps", "15", "--seed", "7", "--out", out]));
    }
    for suffix in ["", ".loss.csv", ".step10"] {
        let a = fs::read(d.join(format!("a.ckpt{suffix}"))).unwrap();
        let b = fs::read(d.join(format!("b.ckpt{suffix}"))).unwrap();
        assert_eq!(a, b, "artifact `{suffix}` differs");
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(gunet(d, &["synth", "--seed", "1"]).status.code(), Some(1));
    assert_eq!(gunet(d, &["synth", "--seed", "1", "--size", "9", "--days", "1", "--out", "x"]).status.code(), Some(1));
    assert_eq!(gunet(d, &["baseline", "--data", "missing", "--report", "r.csv"]).status.code(), Some(2));
    assert_eq!(gunet(d, &["synth", "--seed", "1", "--size", "2x2", "--days", "1", "--out", "x"]).status.code(), Some(2));
    fs::write(d.join("bad.cfg"), "depth = 1\nbogus = 3\n").unwrap();
    ok(&gunet(d, &["synth", "--seed", "1", "--size", "8x8", "--days", "1", "--out", "c"]));
    assert_eq!(
        gunet(d, &["train", "--data", "c", "--config", "bad.cfg", "--out", "m.ckpt"]).status.code(),
        Some(1)
    );
    assert_eq!(gunet(d, &["gradcheck", "--module", "nope"]).status.code(), Some(1));
    assert!(gunet(d, &["--help"]).status.success());
}

#[test]
fn gradcheck_reports_each_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gunet(tmp.path(), &["gradcheck", "--module", "resample"]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("resample/pool"));
    assert!(text.contains("resample/upsample.center"));
    assert!(text.contains("resample/upsample.corner"));
}
