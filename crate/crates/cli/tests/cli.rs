use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rrn::checkpoint::{load_checkpoint, save_checkpoint};
use rrn::network::{init_params, LayerSpec};
use rrn_cli::RunConfig;

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .display()
        .to_string()
}

/// Flags for a run small enough to finish in seconds.
fn quick(out: &Path) -> Vec<String> {
    let pairs = [
        ("seed", "7".to_string()),
        ("out", out.display().to_string()),
        ("images", data("mnist5k-images-idx3-ubyte.gz")),
        ("labels", data("mnist5k-labels-idx1-ubyte.gz")),
        ("steps", "20".into()),
        ("snapshots", "0,20".into()),
        ("probe_size", "8".into()),
        ("corr_trials", "20".into()),
        ("decoder_trials", "60".into()),
        ("classifier_samples", "200".into()),
        ("tsne_points", "40".into()),
        ("perplexity", "5".into()),
        ("tsne_iter", "60".into()),
        ("lesion_stimuli", "6".into()),
        ("sweep_stimuli", "3".into()),
        ("novel_steps", "10".into()),
        ("recovery_steps", "10".into()),
        ("eval_every", "5".into()),
        ("eval_size", "8".into()),
    ];
    pairs.into_iter().flat_map(|(k, v)| [format!("--{k}"), v]).collect()
}

fn rrn(command: &str, args: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrn"))
        .arg(command)
        .args(args)
        .output()
        .expect("binary runs")
}

fn with(mut args: Vec<String>, extra: &[(&str, &str)]) -> Vec<String> {
    for (k, v) in extra {
        args.push(format!("--{k}"));
        args.push(v.to_string());
    }
    args
}

fn config_for(args: &[String]) -> RunConfig {
    let ov = rrn_cli::parse_overrides(args).unwrap();
    RunConfig::load(None, &ov).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_seed_is_a_config_error() {
    let o = rrn("render", &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn missing_dataset_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(quick(dir.path()), &[("images", "/nonexistent/images.gz")]);
    let o = rrn("train", &args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/images.gz"));
}

#[test]
fn unknown_flags_and_roles_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = rrn("train", &with(quick(dir.path()), &[("bogus", "1")]));
    assert_eq!(o.status.code(), Some(2));
    let o = rrn("perturb", &with(quick(dir.path()), &[("neuron", "top_q")]));
    assert_eq!(o.status.code(), Some(2));
    let o = rrn("frobnicate", &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("run.ini");
    std::fs::write(&ini, "[run]\nseed = 1\n[train]\nsteps = 999\n").unwrap();
    let mut args = vec!["--config".to_string(), ini.display().to_string()];
    args.extend(quick(dir.path()));
    args = with(args, &[("steps", "0")]);
    let o = rrn("train", &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (_, step, _) = load_checkpoint(dir.path().join("model.ckpt")).unwrap();
    assert_eq!(step, 0);
}

#[test]
fn zero_steps_leaves_the_initialization_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let args = with(quick(dir.path()), &[("steps", "0")]);
    let o = rrn("train", &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg = config_for(&args);
    let (params, _, meta) = load_checkpoint(dir.path().join("model.ckpt")).unwrap();
    assert_eq!(params, init_params(&cfg.spec, cfg.sub_seed("init")));
    assert_eq!(meta.config_digest, cfg.digest());
    let metrics = std::fs::read_to_string(dir.path().join("train_metrics.csv")).unwrap();
    assert_eq!(metrics, "step,mse\n");
}

#[test]
fn analysis_rejects_a_checkpoint_of_another_shape() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("other.ckpt");
    let other = LayerSpec::new(vec![1024, 128, 32, 128, 1024]).unwrap();
    save_checkpoint(&ckpt, &init_params(&other, 1), 0, 1, "x", Default::default()).unwrap();
    let args = with(quick(dir.path()), &[("checkpoint", &ckpt.display().to_string())]);
    for command in ["analyze", "perturb", "curriculum"] {
        let o = rrn(command, &args);
        assert_eq!(o.status.code(), Some(3), "{command}: {}", stderr(&o));
    }
    let missing = with(quick(dir.path()), &[("checkpoint", "/nonexistent/model.ckpt")]);
    assert_eq!(rrn("analyze", &missing).status.code(), Some(3));
}

fn manifest(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("manifest.json")).unwrap()
}

fn pgm_size(path: PathBuf) -> (usize, usize) {
    let bytes = std::fs::read(path).unwrap();
    let text = String::from_utf8_lossy(&bytes[..20]).into_owned();
    let mut it = text.split_whitespace().skip(1);
    (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
}

#[test]
fn full_pipeline_is_reproducible_and_complete() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        for command in ["train", "analyze"] {
            let o = rrn(command, &quick(dir));
            assert_eq!(o.status.code(), Some(0), "{command}: {}", stderr(&o));
        }
    }
    assert_eq!(manifest(a.path()), manifest(b.path()));

    for command in ["perturb", "curriculum", "render"] {
        let o = rrn(command, &quick(a.path()));
        assert_eq!(o.status.code(), Some(0), "{command}: {}", stderr(&o));
    }
    let m: serde_json::Value = serde_json::from_str(&manifest(a.path())).unwrap();
    let artifacts = m["artifacts"].as_object().unwrap();
    for name in [
        "model.ckpt",
        "train_metrics.csv",
        "snapshots.csv",
        "development.csv",
        "ctp_candidates.csv",
        "snapshot_0.pgm",
        "snapshot_20.pgm",
        "train_summary.csv",
        "correlations.csv",
        "categories.csv",
        "decoders.csv",
        "identity_accuracy.csv",
        "identity_correlation.csv",
        "class_means.csv",
        "top_responsive.csv",
        "similarity_x.csv",
        "similarity_s.pgm",
        "paradiagonal.csv",
        "favorites.pgm",
        "tsne.csv",
        "tsne_kl.csv",
        "sweep.csv",
        "sweep.pgm",
        "lesion.csv",
        "lesion_units.csv",
        "invariance.csv",
        "curriculum_log.csv",
        "control_log.csv",
        "forgetting.csv",
        "plasticity.csv",
        "delta_novel_0.pgm",
        "delta_control_0.pgm",
        "curriculum.ckpt",
        "render.pgm",
    ] {
        assert!(artifacts.contains_key(name), "missing {name}");
        assert!(a.path().join(name).is_file());
    }
    for (name, digest) in artifacts {
        let bytes = std::fs::read(a.path().join(name)).unwrap();
        assert_eq!(&rrn_cli::manifest::sha256_hex(&bytes), digest.as_str().unwrap(), "{name}");
    }
    // 11 modulation values per row, 33 px per 32 px cell with a 1 px gap
    assert_eq!(pgm_size(a.path().join("sweep.pgm")), (11 * 33 - 1, 3 * 33 - 1));
}

#[test]
fn empty_curriculum_returns_the_checkpoint_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let base = with(quick(dir.path()), &[("steps", "0")]);
    assert_eq!(rrn("train", &base).status.code(), Some(0));
    let args = with(base, &[("novel_steps", "0"), ("recovery_steps", "0")]);
    let o = rrn("curriculum", &args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (before, _, _) = load_checkpoint(dir.path().join("model.ckpt")).unwrap();
    let (after, _, _) = load_checkpoint(dir.path().join("curriculum.ckpt")).unwrap();
    assert_eq!(before, after);
    assert!(!dir.path().join("plasticity.csv").exists());
}
