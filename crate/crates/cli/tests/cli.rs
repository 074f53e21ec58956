use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn cvoam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvoam"))
        .args(args)
        .output()
        .expect("spawn cvoam")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) {
    let out = cvoam(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A synthetic corpus with a model trained for one epoch, shared by the tests.
struct Fixture {
    _dir: TempDir,
    root: PathBuf,
    manifest: PathBuf,
    model: PathBuf,
}

impl Fixture {
    fn manifest(&self) -> &Path {
        &self.manifest
    }
    fn model(&self) -> &Path {
        &self.model
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let root = dir.path().to_path_buf();
        let corpus = root.join("corpus");
        ok(&[
            "synth",
            "--out-dir",
            s(&corpus),
            "--utterances",
            "12",
            "--speakers",
            "6",
        ]);
        let f = Fixture {
            _dir: dir,
            manifest: root.join("corpus/manifest.csv"),
            model: root.join("model/model.cvoam"),
            root,
        };
        ok(&[
            "train",
            "--manifest",
            s(f.manifest()),
            "--out-dir",
            s(&f.root.join("model")),
            "--epochs",
            "1",
        ]);
        f
    })
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn help_exits_zero() {
    let out = cvoam(&["--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("score"));
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(cvoam(&["score", "--bogus"]).status.code(), Some(1));
}

#[test]
fn missing_manifest_is_data_error_without_output() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = cvoam(&[
        "score",
        "--manifest",
        s(&dir.path().join("nope.csv")),
        "--model",
        s(fixture().model()),
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn window_off_grid_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = cvoam(&[
        "train",
        "--manifest",
        s(fixture().manifest()),
        "--out-dir",
        s(dir.path()),
        "--window-ms",
        "150",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_model_is_data_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.cvoam");
    fs::write(&bad, b"not a model").unwrap();
    let out = cvoam(&[
        "score",
        "--manifest",
        s(fixture().manifest()),
        "--model",
        s(&bad),
        "--out-dir",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn score_rerun_is_byte_identical() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    for name in ["a", "b"] {
        ok(&[
            "score",
            "--manifest",
            s(f.manifest()),
            "--model",
            s(f.model()),
            "--out-dir",
            s(&dir.path().join(name)),
        ]);
    }
    assert_eq!(
        read_dir_bytes(&dir.path().join("a")),
        read_dir_bytes(&dir.path().join("b"))
    );
}

#[test]
fn eval_accuracy_matches_score_predictions() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let (e, sc) = (dir.path().join("eval"), dir.path().join("score"));
    let common = ["--manifest", s(f.manifest()), "--model", s(f.model())];
    ok(&[&["eval"], &common[..], &["--out-dir", s(&e)]].concat());
    ok(&[&["score"], &common[..], &["--out-dir", s(&sc)]].concat());

    let mut scores = csv::Reader::from_path(sc.join("scores.csv")).unwrap();
    let (mut hits, mut total) = (0usize, 0usize);
    for rec in scores.records() {
        let rec = rec.unwrap();
        total += 1;
        hits += usize::from(rec[2] == rec[5]);
    }
    let mut eval = csv::Reader::from_path(e.join("eval.csv")).unwrap();
    let rec = eval.records().next().unwrap().unwrap();
    assert_eq!(rec[1].parse::<usize>().unwrap(), hits);
    assert_eq!(rec[2].parse::<usize>().unwrap(), total);

    let mut confusion = csv::Reader::from_path(e.join("confusion.csv")).unwrap();
    let cells: usize = confusion
        .records()
        .map(|r| {
            r.unwrap()
                .iter()
                .skip(1)
                .map(|v| v.parse::<usize>().unwrap())
                .sum::<usize>()
        })
        .sum();
    assert_eq!(cells, total);
}

#[test]
fn zero_jitter_reproduces_scores() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let j = dir.path().join("jit");
    ok(&[
        "jitter",
        "--manifest",
        s(f.manifest()),
        "--sigma-ms",
        "0",
        "--out-dir",
        s(&j),
    ]);
    let model = ["--model", s(f.model())];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&[
        &["score", "--manifest", s(f.manifest())],
        &model[..],
        &["--out-dir", s(&a)],
    ]
    .concat());
    ok(&[
        &["score", "--manifest", s(&j.join("manifest.csv"))],
        &model[..],
        &["--out-dir", s(&b)],
    ]
    .concat());
    let read = |p: &Path| -> Vec<(String, f64)> {
        csv::Reader::from_path(p.join("scores.csv"))
            .unwrap()
            .records()
            .map(|r| {
                let r = r.unwrap();
                (r[2].to_string(), r[4].parse().unwrap())
            })
            .collect()
    };
    let (ra, rb) = (read(&a), read(&b));
    assert_eq!(ra.len(), rb.len());
    for ((ca, va), (cb, vb)) in ra.iter().zip(&rb) {
        assert_eq!(ca, cb);
        assert!((va - vb).abs() <= 1e-9 * va.max(1e-300), "{va} vs {vb}");
    }
}

#[test]
fn saliency_map_is_normalized() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sal");
    let corpus = f.root.join("corpus");
    ok(&[
        "saliency",
        "--model",
        s(f.model()),
        "--wav",
        s(&corpus.join("utt000.wav")),
        "--alignment",
        s(&corpus.join("utt000.TextGrid")),
        "--out-dir",
        s(&out),
    ]);
    let text = fs::read_to_string(out.join("saliency.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 40);
    assert!(rows.iter().all(|r| r.len() == 32));
    let flat: Vec<f64> = rows.concat();
    assert!(flat.iter().all(|v| (0.0..=1.0).contains(v)));
    let max = flat.iter().copied().fold(0.0, f64::max);
    assert!(max == 1.0 || flat.iter().all(|&v| v == 0.0));
}

#[test]
fn saliency_onset_out_of_range() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let corpus = f.root.join("corpus");
    let out = cvoam(&[
        "saliency",
        "--model",
        s(f.model()),
        "--wav",
        s(&corpus.join("utt000.wav")),
        "--alignment",
        s(&corpus.join("utt000.TextGrid")),
        "--onset-index",
        "999",
        "--out-dir",
        s(&dir.path().join("sal")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_refuses_existing_dir() {
    let dir = TempDir::new().unwrap();
    let out = cvoam(&["synth", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn correlate_and_fit_outputs() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let sc = dir.path().join("score");
    ok(&[
        "score",
        "--manifest",
        s(f.manifest()),
        "--model",
        s(f.model()),
        "--out-dir",
        s(&sc),
    ]);
    let ratings = dir.path().join("ratings.csv");
    fs::write(
        &ratings,
        "speaker_id,rating\nspk0,1\nspk1,2\nspk2,3\nspk3,2.5\nspk4,4\nspk5,1.5\n",
    )
    .unwrap();
    let scores = sc.join("scores.csv");
    let r = dir.path().join("corr");
    ok(&[
        "correlate",
        "--scores",
        s(&scores),
        "--ratings",
        s(&ratings),
        "--out-dir",
        s(&r),
    ]);
    let text = fs::read_to_string(r.join("correlation.csv")).unwrap();
    assert!(text.starts_with("n,r,t_stat,p_value\n6,"));

    let fit = dir.path().join("fit");
    ok(&[
        "fit",
        "--scores",
        s(&scores),
        "--ratings",
        s(&ratings),
        "--out-dir",
        s(&fit),
        "--loso",
    ]);
    for name in [
        "selection.csv",
        "coefficients.csv",
        "predictions.csv",
        "loso_correlation.csv",
    ] {
        assert!(fit.join(name).exists(), "{name}");
    }
}
