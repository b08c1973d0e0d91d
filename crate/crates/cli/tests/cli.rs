use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use reverbnet::signals::{speechlike, MultiWave, WavEncoding};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_reverbnet"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

/// A small task-1 dataset from short synthetic wavs.
fn dataset(dir: &Path) -> PathBuf {
    let corpus = dir.join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    for i in 0..3 {
        MultiWave::mono(speechlike(i, 0.7, 16000), 16000)
            .unwrap()
            .write_wav(corpus.join(format!("s{i}.wav")), WavEncoding::Float32)
            .unwrap();
    }
    let out = run(
        dir,
        &["synth-dataset", "--corpus", "corpus", "--out", "data", "--tr", "4", "--dt", "0", "--et", "3", "--seed", "5", "--jobs", "2"],
    );
    assert_eq!(json_of(&out)["written"], 7);
    dir.join("data/manifest.jsonl")
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr).to_string() + &String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("Usage"), "{text}");
}

#[test]
fn unknown_flag_exits_1() {
    let out = bin().args(["doa", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn every_subcommand_documents_its_defaults() {
    let expect: &[(&str, &[&str])] = &[
        ("simulate-rir", &["0.6"]),
        ("synth-dataset", &["--generate-corpus"]),
        ("featurize", &["--manifest"]),
        ("train", &["75000", "0.0003", "0.01", "10"]),
        ("eval", &["et"]),
        ("doa", &["srp-phat", "music", "neural"]),
        ("wpe", &["[default: 10]", "[default: 3]"]),
        ("reconstruct", &["[default: 60]"]),
        ("plot-data", &["spectrogram", "loss-curve"]),
    ];
    for (cmd, needles) in expect {
        let out = bin().args([cmd, "--help"]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--config"), "{cmd}");
        for n in *needles {
            assert!(text.contains(n), "{cmd} help lacks {n}:\n{text}");
        }
    }
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["doa", "--manifest", "missing.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(dir.path(), &["wpe", "--input", "missing.wav", "--output", "o.wav"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_fills_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"t60": 0.3, "out": "rir", "angle": 90}"#).unwrap();
    let v = json_of(&run(dir.path(), &["simulate-rir", "--config", "c.json", "--angle", "45"]));
    assert_eq!(v["scene"]["t60"], 0.3);
    assert_eq!(v["scene"]["source_angle"], 45.0);
    assert!(dir.path().join("rir/rir_target.ntsr").exists());
    assert!(dir.path().join("rir/rir_target.json").exists());

    fs::write(dir.path().join("bad.json"), r#"{"not_a_flag": 1}"#).unwrap();
    let out = run(dir.path(), &["simulate-rir", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn classic_doa_report_has_table_metric_names() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    for method in ["music", "srp-phat"] {
        let v = json_of(&run(dir.path(), &["doa", "--method", method, "--manifest", manifest.to_str().unwrap()]));
        for key in ["acc@1", "top1_err", "top5_err", "mae@1", "top5_mae", "by_t60"] {
            assert!(v.get(key).is_some(), "{method} report lacks {key}: {v}");
        }
        assert_eq!(v["count"], 3);
        assert_eq!(v["utterances"][0]["candidates"].as_array().unwrap().len(), 5);
    }
}

fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn training_is_deterministic_resumable_and_evaluable() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let m = manifest.to_str().unwrap();
    assert!(json_of(&run(dir.path(), &["featurize", "--manifest", m]))["stats"].is_string());

    let train = |out: &str, extra: &[&str]| {
        let mut args = vec!["train", "--task", "1", "--steps", "4", "--seed", "7", "--model", "tiny", "--manifest", m, "--out", out];
        args.extend_from_slice(extra);
        json_of(&run(dir.path(), &args))
    };
    let a = train("a", &["--checkpoint-every", "2"]);
    assert_eq!(a["steps"], 4);
    train("b", &["--checkpoint-every", "2"]);
    assert_eq!(tree_bytes(&dir.path().join("a/final")), tree_bytes(&dir.path().join("b/final")));

    train("c", &["--checkpoint-every", "2", "--resume", "a/step_000002"]);
    let params = |run: &str| tree_bytes(&dir.path().join(run).join("final/params"));
    assert_eq!(params("a"), params("c"));
    assert_eq!(
        tree_bytes(&dir.path().join("a/final/adam_v")),
        tree_bytes(&dir.path().join("c/final/adam_v"))
    );

    let curve = run(dir.path(), &["plot-data", "--kind", "loss-curve", "--input", "a"]);
    assert!(curve.status.success());
    assert_eq!(String::from_utf8_lossy(&curve.stdout).lines().count(), 5);

    let ev = json_of(&run(dir.path(), &["eval", "--manifest", m, "--checkpoint", "a/final", "--jobs", "2"]));
    assert_eq!(ev["count"], 3);
    assert!(ev["doa"]["top5_err"].is_number());
    let neural = json_of(&run(
        dir.path(),
        &["doa", "--method", "neural", "--manifest", m, "--checkpoint", "a/final"],
    ));
    assert_eq!(neural["method"], "neural");
    assert_eq!(neural["top5_err"], ev["doa"]["top5_err"]);

    let out = run(dir.path(), &["doa", "--method", "neural", "--manifest", m]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn wpe_reconstruct_and_spectrogram_round_out_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path());
    let entry: Value = serde_json::from_str(fs::read_to_string(&manifest).unwrap().lines().next().unwrap()).unwrap();
    let mix = format!("data/{}", entry["mixture"].as_str().unwrap());

    let v = json_of(&run(dir.path(), &["wpe", "--input", &mix, "--output", "d.wav", "--taps", "8", "--channels", "2"]));
    assert_eq!(v["channels"], 2);
    let d = MultiWave::read_wav(dir.path().join("d.wav")).unwrap();
    assert_eq!((d.num_channels(), d.len()), (2, entry["samples"].as_u64().unwrap() as usize));

    let v = json_of(&run(dir.path(), &["reconstruct", "--wav", &mix, "--iters", "4", "--out", "r.wav"]));
    assert!(v["final_convergence"].as_f64().unwrap() < 1.0);
    assert!(dir.path().join("r.wav").exists());

    let out = run(dir.path(), &["plot-data", "--input", &mix, "--out", "spec.csv"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("spec.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("frame,time_s,mel_0") && header.ends_with("mel_79"));
}
