use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pvb::Image;
use pvb_cli::io::{decode_pgm, decode_pvf, encode_pgm, encode_pvf, read_image};
use pvb_cli::noise;
use pvb_cli::synth::{synthesize, SynthKind};
use serde_json::Value;
use tempfile::TempDir;

fn pvb(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_pvb"))
        .args(args)
        .output()
        .unwrap();
    out.status.code().unwrap()
}

struct Scratch {
    dir: TempDir,
}

impl Scratch {
    fn new() -> Self {
        Scratch {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    /// 12×12 disk and a σ = 0.1 noisy copy.
    fn pair(&self) -> (String, String) {
        let (c, n) = (self.s("clean.pvf"), self.s("noisy.pvf"));
        assert_eq!(
            pvb(&["synth", "--kind", "disk", "--size", "12", "--output", &c]),
            0
        );
        assert_eq!(
            pvb(&[
                "add-noise",
                "--input",
                &c,
                "--sigma",
                "0.1",
                "--seed",
                "5",
                "--output",
                &n
            ]),
            0
        );
        (c, n)
    }
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn pvf_round_trip_is_exact() {
    let img = Image::from_fn(5, 3, |x, y| {
        (x as f64 - 2.0) * 1e-3 + y as f64 * std::f64::consts::PI
    })
    .unwrap();
    let bytes = encode_pvf(&img);
    assert_eq!(&bytes[..4], b"PVF1");
    assert_eq!(bytes.len(), 12 + 8 * 15);
    assert_eq!(decode_pvf(&bytes).unwrap(), img);
    assert!(decode_pvf(&bytes[..bytes.len() - 1]).is_err());
    assert!(decode_pvf(b"PVF2\0\0\0\0\0\0\0\0").is_err());
}

#[test]
fn pgm_round_trip_within_quantization() {
    let img = Image::from_fn(7, 4, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
    let back = decode_pgm(&encode_pgm(&img).unwrap()).unwrap();
    for (a, b) in img.values().iter().zip(back.values()) {
        assert!((a - b).abs() <= 1.0 / 65535.0);
    }
}

#[test]
fn eight_bit_pgm() {
    let mut bytes = b"P5\n# comment\n2 2\n255\n".to_vec();
    bytes.extend_from_slice(&[0, 51, 255, 102]);
    let img = decode_pgm(&bytes).unwrap();
    assert_eq!(img.values(), &[0.0, 0.2, 1.0, 0.4]);
}

#[test]
fn unknown_extension_is_rejected() {
    assert!(read_image(Path::new("picture.png")).is_err());
    let s = Scratch::new();
    assert_eq!(
        pvb(&["synth", "--kind", "disk", "--output", &s.s("x.png")]),
        1
    );
}

#[test]
fn disk_follows_its_formula() {
    let img = synthesize(SynthKind::Disk, 32).unwrap();
    let c = 15.5;
    for y in 0..32 {
        for x in 0..32 {
            let inside = (x as f64 - c).powi(2) + (y as f64 - c).powi(2) <= 9.6f64.powi(2);
            assert_eq!(img.get(x, y), if inside { 0.8 } else { 0.2 });
        }
    }
    let ramp = synthesize(SynthKind::Ramp, 5).unwrap();
    assert_eq!(ramp.values()[..5], [0.0, 0.25, 0.5, 0.75, 1.0]);
    let squares = synthesize(SynthKind::Squares, 16).unwrap();
    assert_eq!(squares.get(3, 3), 0.9);
    assert_eq!(squares.get(10, 10), 0.5);
    assert_eq!(squares.get(0, 15), 0.2);
}

#[test]
fn noise_is_seeded_and_unclamped() {
    let s = Scratch::new();
    let c = s.s("c.pvf");
    assert_eq!(
        pvb(&["synth", "--kind", "ramp", "--size", "16", "--output", &c]),
        0
    );
    for (name, seed) in [("a.pvf", "9"), ("b.pvf", "9"), ("d.pvf", "10")] {
        assert_eq!(
            pvb(&[
                "add-noise",
                "--input",
                &c,
                "--sigma",
                "0.5",
                "--seed",
                seed,
                "--output",
                &s.s(name)
            ]),
            0
        );
    }
    let a = fs::read(s.path("a.pvf")).unwrap();
    assert_eq!(a, fs::read(s.path("b.pvf")).unwrap());
    assert_ne!(a, fs::read(s.path("d.pvf")).unwrap());
    let noisy = read_image(&s.path("a.pvf")).unwrap();
    assert!(noisy.values().iter().any(|v| *v < 0.0 || *v > 1.0));
    let clean = read_image(&s.path("c.pvf")).unwrap();
    assert_eq!(noisy, noise::add_noise(&clean, 0.5, 9));

    assert_eq!(
        pvb(&[
            "add-noise",
            "--input",
            &c,
            "--sigma",
            "0",
            "--seed",
            "3",
            "--output",
            &s.s("z.pvf")
        ]),
        0
    );
    assert_eq!(fs::read(s.path("z.pvf")).unwrap(), fs::read(&c).unwrap());
    assert_eq!(
        pvb(&[
            "add-noise",
            "--input",
            &c,
            "--sigma",
            "-1",
            "--output",
            &s.s("neg.pvf")
        ]),
        1
    );
}

#[test]
fn denoise_commands() {
    let s = Scratch::new();
    let (_, n) = s.pair();
    assert_eq!(
        pvb(&[
            "denoise",
            "--input",
            &n,
            "--alpha",
            "0",
            "--output",
            &s.s("same.pvf")
        ]),
        0
    );
    assert_eq!(fs::read(s.path("same.pvf")).unwrap(), fs::read(&n).unwrap());

    let (out, rep) = (s.s("d.pvf"), s.s("d.json"));
    let code = pvb(&[
        "denoise",
        "--input",
        &n,
        "--alpha",
        "0.052",
        "--family",
        "full-shear",
        "--theta",
        "-0.2,0.5",
        "--output",
        &out,
        "--report",
        &rep,
    ]);
    assert_eq!(code, 0);
    let report = json(Path::new(&rep));
    assert_eq!(
        report["operator"]["blocks"][0],
        serde_json::json!([[1.0, -0.2], [0.5, 1.0]])
    );
    assert_eq!(report["converged"], true);
    assert_eq!(report["config"]["gap-tolerance"], 1e-6);

    fs::write(
        s.path("op.json"),
        r#"{"d":1,"blocks":[[[1.0,-0.2],[0.5,1.0]]]}"#,
    )
    .unwrap();
    let out2 = s.s("d2.pvf");
    assert_eq!(
        pvb(&[
            "denoise",
            "--input",
            &n,
            "--alpha",
            "0.052",
            "--operator",
            &s.s("op.json"),
            "--output",
            &out2
        ]),
        0
    );
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());

    let capped = s.s("capped.pvf");
    assert_eq!(
        pvb(&[
            "denoise",
            "--input",
            &n,
            "--alpha",
            "0.5",
            "--max-iterations",
            "2",
            "--output",
            &capped
        ]),
        2
    );
    assert!(s.path("capped.pvf").exists());
}

#[test]
fn failures_leave_no_output() {
    let s = Scratch::new();
    let out = s.s("never.pvf");
    assert_eq!(
        pvb(&[
            "denoise",
            "--input",
            &s.s("missing.pvf"),
            "--alpha",
            "0.1",
            "--output",
            &out
        ]),
        1
    );
    assert_eq!(pvb(&["denoise", "--alpha", "0.1", "--output", &out]), 1);
    assert_eq!(pvb(&["denoise", "--bogus-flag"]), 1);
    let (_, n) = s.pair();
    assert_eq!(
        pvb(&["denoise", "--input", &n, "--alpha", "-1", "--output", &out]),
        1
    );
    assert_eq!(
        pvb(&[
            "denoise",
            "--input",
            &n,
            "--alpha",
            "0.1",
            "--family",
            "full-shear",
            "--output",
            &out
        ]),
        1
    );
    assert_eq!(
        pvb(&[
            "denoise",
            "--input",
            &n,
            "--alpha",
            "0.1",
            "--family",
            "full-shear",
            "--theta",
            "0.9,0",
            "--output",
            &out
        ]),
        1
    );
    assert!(!s.path("never.pvf").exists());
    assert_eq!(
        pvb(&[
            "denoise",
            "--input",
            &n,
            "--alpha",
            "0.1",
            "--output",
            &s.s("no/such/dir.pvf")
        ]),
        1
    );
    assert_eq!(fs::read_dir(s.dir.path()).unwrap().count(), 2);
}

#[test]
fn train_reports() {
    let s = Scratch::new();
    let (c, n) = s.pair();
    let rep = s.path("same.json");
    assert_eq!(
        pvb(&[
            "train",
            "--clean",
            &c,
            "--noisy",
            &c,
            "--level",
            "2",
            "--report",
            rep.to_str().unwrap()
        ]),
        0
    );
    let r = json(&rep);
    assert_eq!(r["winner"]["alpha"], 0.0);
    assert_eq!(r["winner"]["assessment"], 0.0);

    let rep = s.path("b.json");
    assert_eq!(
        pvb(&[
            "train",
            "--clean",
            &c,
            "--noisy",
            &n,
            "--level",
            "4",
            "--report",
            rep.to_str().unwrap()
        ]),
        0
    );
    let r = json(&rep);
    assert_eq!(r["records"].as_array().unwrap().len(), 5);
    assert_eq!(
        r["ground"]["alpha_samples"],
        serde_json::json!([0.0, 0.25, 0.5, 0.75, 1.0])
    );
    assert_eq!(r["ground"]["family"]["label"], "identity");
    assert_eq!(r["heuristic"], false);
    assert!(r["error_bound"].as_f64().unwrap() > 0.0);
    assert!(r["config"].get("jobs").is_none());

    let small = Image::zeros(5, 5).unwrap();
    fs::write(s.path("small.pvf"), encode_pvf(&small)).unwrap();
    let bad = s.s("bad.json");
    assert_eq!(
        pvb(&[
            "train",
            "--clean",
            &s.s("small.pvf"),
            "--noisy",
            &n,
            "--report",
            &bad
        ]),
        1
    );
    assert!(!Path::new(&bad).exists());
}

#[test]
fn config_file_and_flag_precedence() {
    let s = Scratch::new();
    let (c, n) = s.pair();
    fs::write(
        s.path("cfg.json"),
        r#"{"level": 2, "p": "inf", "max-iterations": 3000}"#,
    )
    .unwrap();
    let rep = s.path("r.json");
    let code = pvb(&[
        "train",
        "--clean",
        &c,
        "--noisy",
        &n,
        "--config",
        &s.s("cfg.json"),
        "--p",
        "1",
        "--report",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let cfg = &json(&rep)["config"];
    assert_eq!(cfg["level"], 2);
    assert_eq!(cfg["p"], "1");
    assert_eq!(cfg["max-iterations"], 3000);
    assert_eq!(cfg["bound"], 1.0);

    fs::write(s.path("typo.json"), r#"{"levle": 2}"#).unwrap();
    let code = pvb(&[
        "train",
        "--clean",
        &c,
        "--noisy",
        &n,
        "--config",
        &s.s("typo.json"),
        "--report",
        &s.s("t.json"),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn family_file() {
    let s = Scratch::new();
    let (c, n) = s.pair();
    fs::write(
        s.path("fam.json"),
        r#"{"label": "custom-affine", "box": [[0.0, 0.4]],
            "base": {"d": 1, "blocks": [[[1.0, 0.0], [0.0, 1.0]]]},
            "directions": [{"d": 1, "blocks": [[[0.0, 1.0], [0.0, 0.0]]]}]}"#,
    )
    .unwrap();
    let rep = s.path("r.json");
    let code = pvb(&[
        "train",
        "--clean",
        &c,
        "--noisy",
        &n,
        "--family",
        &s.s("fam.json"),
        "--level",
        "2",
        "--report",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let r = json(&rep);
    assert_eq!(r["ground"]["family"]["label"], "custom-affine");
    // θ ∈ {0, 0.2, 0.4} × α ∈ {0, 0.5, 1}
    assert_eq!(r["records"].as_array().unwrap().len(), 9);
}

#[test]
fn workflow_exit_codes() {
    let s = Scratch::new();
    let (c, n) = s.pair();
    let rep = s.path("w.json");
    let args = |eps: &'static str, extra: &[&'static str]| {
        let mut v = vec![
            "workflow",
            "--clean",
            &c,
            "--noisy",
            &n,
            "--epsilon",
            eps,
            "--report",
            rep.to_str().unwrap(),
        ];
        v.extend_from_slice(extra);
        pvb(&v)
    };
    assert_eq!(args("1e6", &[]), 0);
    let r = json(&rep);
    assert_eq!(r["level"], 1);
    assert_eq!(r["certified"], true);
    assert!(r["bound"].as_f64().unwrap() <= 1e6);

    assert_eq!(args("0", &[]), 1);
    assert_eq!(args("1", &["--l-max", "2"]), 3);
    let r = json(&rep);
    assert_eq!(r["certified"], false);
    assert_eq!(r["level"], 2);
}

#[test]
fn landscape_csv() {
    let s = Scratch::new();
    let (c, n) = s.pair();
    let out = s.path("l.csv");
    let o = out.to_str().unwrap();
    assert_eq!(
        pvb(&[
            "landscape",
            "--clean",
            &c,
            "--noisy",
            &n,
            "--alpha",
            "0.1",
            "--grid",
            "3",
            "--output",
            o
        ]),
        0
    );
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().next().unwrap(), "assessment");

    let code = pvb(&[
        "landscape",
        "--clean",
        &c,
        "--noisy",
        &n,
        "--alpha",
        "0.1",
        "--family",
        "full-shear",
        "--grid",
        "3",
        "--output",
        o,
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 10);
    assert_eq!(lines[0], "theta_1,theta_2,assessment");
    assert!(lines[1].starts_with("-0.5,-0.5,"));
    assert!(lines[5].starts_with("0,0,"));
    assert!(lines[9].starts_with("0.5,0.5,"));

    let code = pvb(&[
        "landscape",
        "--clean",
        &c,
        "--noisy",
        &n,
        "--family",
        "upper-shear",
        "--grid",
        "3",
        "--output",
        o,
    ]);
    assert_eq!(code, 1);
}
