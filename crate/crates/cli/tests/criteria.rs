//! Acceptance run: trains the desk-scale model, runs every analysis on it
//! and prints one PASS/FAIL line per criterion. Exits nonzero if any fail.

#[path = "../../core/tests/naive/mod.rs"]
mod naive;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rrn::curriculum::compare_deltas;
use rrn::development::synapse_stats;
use rrn::network::{gradient_check, init_params, LayerSpec};
use rrn::perturbation::centroid;
use rrn::population::{similarity_matrix, top_responsive};
use rrn::retina::Property;
use rrn::seeded_rng;
use rrn::stats::pearson;
use rrn_cli::battery::first_crossing;
use rrn_cli::commands::{self, AnalysisOutcome, CurriculumOutcome, PerturbOutcome, TrainOutcome};
use rrn_cli::{parse_overrides, RunConfig};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn desk_config(out: &Path, extra: &[(&str, &str)]) -> RunConfig {
    let data = root().join("data");
    let mut tokens = vec![
        "--out".to_string(),
        out.display().to_string(),
        "--images".into(),
        data.join("mnist5k-images-idx3-ubyte.gz").display().to_string(),
        "--labels".into(),
        data.join("mnist5k-labels-idx1-ubyte.gz").display().to_string(),
    ];
    for (k, v) in extra {
        tokens.push(format!("--{k}"));
        tokens.push(v.to_string());
    }
    let ov = parse_overrides(&tokens).expect("well-formed overrides");
    RunConfig::load(Some(&root().join("configs/desk.ini")), &ov).expect("desk config loads")
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let spec = LayerSpec::new(vec![1024, 256, 64, 32, 64, 256, 1024]).expect("valid widths");
    let params = init_params(&spec, 1);
    let mut rng = seeded_rng(2);
    let x = Array2::from_shape_simple_fn((4, 1024), || rng.random::<f64>());
    let report = gradient_check(&params, x.view(), 200, 1e-2, true, 3).expect("gradient check runs");
    let worst = report.iter().map(|l| l.max_rel_error).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 60.0 && report.iter().all(|l| l.samples >= 200),
        format!("max relative error {worst:.2e} over 200 parameters x {} layers in {secs:.1}s", report.len()),
    )
}

fn efficacy(t: &TrainOutcome, steps: usize) -> Verdict {
    verdict(
        t.final_probe_mse < 0.03 && steps == 50_000,
        format!(
            "probe MSE {:.5} after {steps} steps (start {:.5}; constant 0.5 {:.5}, all-zero {:.5}, mean image {:.5})",
            t.final_probe_mse, t.initial_probe_mse, t.baselines.constant_half, t.baselines.all_zero, t.baselines.mean_image
        ),
    )
}

fn ordering(t: &TrainOutcome) -> Verdict {
    let x = first_crossing(&t.development, |m| m.r2_x, 0.5);
    let id = first_crossing(&t.development, |m| m.identity_accuracy, 0.3);
    let series: Vec<String> = t
        .development
        .iter()
        .map(|m| format!("{}:{:.2}/{:.2}", m.step, m.r2_x, m.identity_accuracy))
        .collect();
    let pass = matches!((x, id), (Some(a), Some(b)) if a < b);
    verdict(
        pass,
        format!(
            "x R2>0.5 first at {x:?}, identity acc>0.3 first at {id:?}; step:R2x/acc {}",
            series.join(" ")
        ),
    )
}

fn decoding(a: &AnalysisOutcome) -> Verdict {
    let r2 = |p| a.property.decoder(p).r2_test;
    let nx = a.property.categories.neurons_for(Property::X);
    let ny = a.property.categories.neurons_for(Property::Y);
    let pass = r2(Property::X) > r2(Property::S) && r2(Property::Y) > r2(Property::S) && !nx.is_empty() && !ny.is_empty();
    verdict(
        pass,
        format!(
            "R2 x {:.3}, y {:.3}, s {:.3}, r {:.3}; {} x-neurons, {} y-neurons",
            r2(Property::X),
            r2(Property::Y),
            r2(Property::S),
            r2(Property::R),
            nx.len(),
            ny.len()
        ),
    )
}

fn identity(a: &AnalysisOutcome) -> Verdict {
    let acc = a.identity.fit.test_accuracy;
    let shuffled = a.identity.shuffled.test_accuracy;
    let base = a.identity.accuracy_under("none");
    let y = a.identity.accuracy_under("y=0.2");
    let pass = acc >= 0.40
        && (0.05..=0.20).contains(&shuffled)
        && matches!((y, base), (Some(y), Some(b)) if y <= b);
    verdict(
        pass,
        format!("held-out accuracy {acc:.3}, shuffled labels {shuffled:.3}, unperturbed {base:?}, y=0.2 {y:?}"),
    )
}

fn similarity(a: &AnalysisOutcome) -> Verdict {
    let s = a.grid(Property::S).score;
    let x = a.grid(Property::X).score;
    verdict(
        s.contrast() > x.contrast(),
        format!(
            "stripe-background s {:.4} ({:.4}-{:.4}) vs x {:.4} ({:.4}-{:.4})",
            s.contrast(),
            s.stripe_strength,
            s.background,
            x.contrast(),
            x.stripe_strength,
            x.background
        ),
    )
}

fn invariance(p: &PerturbOutcome) -> Verdict {
    verdict(
        p.max_modulation_shift < 0.25 * p.translation_shift.abs(),
        format!(
            "unit {} max modulation shift {:.3} px vs {:.3} px for a 0.1 W translation (ratio {:.3}, bar 0.25)",
            p.neuron,
            p.max_modulation_shift,
            p.translation_shift,
            p.shift_ratio()
        ),
    )
}

fn plasticity(c: &CurriculumOutcome) -> Verdict {
    let Some(r) = c.plasticity.first() else {
        return verdict(false, "no plasticity report".into());
    };
    let mut rng = seeded_rng(25);
    let n = 200_000;
    let a: Vec<f64> = (0..n).map(|_| 2.5 * rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let oracle = compare_deltas(0, a, b);
    let others: Vec<String> = c.plasticity.iter().skip(1).map(|r| format!("{:.2}", r.ratio)).collect();
    verdict(
        r.ratio > 1.5 && r.welch.p_value < 1e-6 && (2.4..=2.6).contains(&oracle.ratio),
        format!(
            "retina->V1 |dw| novel/control {:.3} (Welch t {:.1}, p {:.2e}); deeper layers {}; synthetic 2.5x oracle {:.3}",
            r.ratio,
            r.welch.t,
            r.welch.p_value,
            others.join(", "),
            oracle.ratio
        ),
    )
}

fn forgetting(c: &CurriculumOutcome) -> Verdict {
    let log = &c.log;
    let (Some(novel), Some(digits)) = (log.set_index("novel"), log.set_index("digits")) else {
        return verdict(false, "missing eval sets".into());
    };
    let b = &log.boundaries;
    let at = |set, step| log.mse_at(set, step).unwrap_or(f64::NAN);
    let (start, mid, end) = (b[0], b[1], b[2]);
    let novel_drop = 1.0 - at(novel, mid) / at(novel, start);
    let novel_rise = at(novel, end) / at(novel, mid) - 1.0;
    let digit_gap = (at(digits, end) / at(digits, start) - 1.0).abs();
    verdict(
        novel_drop >= 0.5 && novel_rise >= 0.2 && digit_gap <= 0.2,
        format!(
            "novel MSE {:.5} -> {:.5} ({:.1}% drop, bar 50%); recovery: novel {:.5} (+{:.1}%, bar 20%), digits {:.5} vs {:.5} before ({:.1}% off, bar 20%)",
            at(novel, start),
            at(novel, mid),
            100.0 * novel_drop,
            at(novel, end),
            100.0 * novel_rise,
            at(digits, end),
            at(digits, start),
            100.0 * digit_gap
        ),
    )
}

fn kernels() -> Verdict {
    let start = Instant::now();
    let mut rng = seeded_rng(10);
    let mut worst = 0.0f64;
    let mut topk_ok = true;
    let mut census_ok = true;
    for case in 0..300 {
        let n = rng.random_range(3..64);
        let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        worst = worst.max((pearson(&a, &b).unwrap() - naive::pearson(&a, &b).unwrap()).abs());

        let rows = rng.random_range(2..24);
        let cols = rng.random_range(3..33);
        let m: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| f64::from(rng.random_range(0u8..8)) / 7.0).collect())
            .collect();
        let arr = Array2::from_shape_fn((rows, cols), |(i, j)| m[i][j]);
        let got = similarity_matrix(&arr.view());
        let want = naive::similarity(&m);
        for i in 0..rows {
            for j in 0..rows {
                worst = worst.max((got.values[[i, j]] - want[i][j]).abs());
            }
        }
        let k = case % (cols + 1);
        for (row, g) in m.iter().zip(top_responsive(&arr.view(), k).unwrap()) {
            topk_ok &= g == naive::top_k(row, k);
        }

        let ws: Vec<f64> = (0..rng.random_range(1..300))
            .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let s = synapse_stats(&Array2::from_shape_vec((1, ws.len()), ws.clone()).unwrap().view());
        let (np, nn, mp, mn) = naive::census(&ws);
        census_ok &= (s.n_excitatory, s.n_inhibitory) == (np, nn);
        worst = worst.max((s.mean_abs_excitatory - mp).abs()).max((s.mean_abs_inhibitory - mn).abs());

        let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
        let px: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
        let (cx, cy) = naive::centroid(&px, h, w).unwrap();
        let (gx, gy) = centroid(&Array2::from_shape_vec((h, w), px).unwrap().view()).unwrap();
        worst = worst.max((gx - cx).abs()).max((gy - cy).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-12 && topk_ok && census_ok && secs < 60.0,
        format!("300 random cases per kernel, max deviation {worst:.1e}, top-k exact {topk_ok}, counts exact {census_ok}, {secs:.1}s"),
    )
}

fn reproducibility() -> Verdict {
    let data = root().join("data");
    let run = |out: &Path| -> Result<String, String> {
        for command in ["train", "analyze"] {
            let o = Command::new(env!("CARGO_BIN_EXE_rrn"))
                .arg(command)
                .arg("--config")
                .arg(root().join("configs/desk.ini"))
                .args(["--steps", "500", "--workers", "1", "--out"])
                .arg(out)
                .arg("--images")
                .arg(data.join("mnist5k-images-idx3-ubyte.gz"))
                .arg("--labels")
                .arg(data.join("mnist5k-labels-idx1-ubyte.gz"))
                .output()
                .map_err(|e| e.to_string())?;
            if !o.status.success() {
                return Err(format!("{command} exited {:?}", o.status.code()));
            }
        }
        std::fs::read_to_string(out.join("manifest.json")).map_err(|e| e.to_string())
    };
    let a = tempfile::tempdir().expect("temp dir");
    let b = tempfile::tempdir().expect("temp dir");
    match (run(a.path()), run(b.path())) {
        (Ok(ma), Ok(mb)) => {
            let n = serde_json::from_str::<serde_json::Value>(&ma)
                .ok()
                .and_then(|v| v["artifacts"].as_object().map(|o| o.len()))
                .unwrap_or(0);
            verdict(ma == mb && n > 0, format!("two train+analyze runs, {n} artifacts, manifests identical: {}", ma == mb))
        }
        (ra, rb) => verdict(false, format!("run failed: {:?} / {:?}", ra.err(), rb.err())),
    }
}

fn main() {
    let started = Instant::now();
    let mut lines: Vec<(usize, Verdict)> = Vec::new();
    let mut record = |n: usize, v: Verdict| {
        println!("criterion {n}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        lines.push((n, v));
    };

    record(1, gradients());

    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = desk_config(dir.path(), &[]);
    let trained = commands::train(&cfg).expect("training runs");
    record(2, efficacy(&trained, cfg.train.steps));
    record(3, ordering(&trained));

    let analysis = commands::analyze(&cfg).expect("analysis runs");
    record(4, decoding(&analysis));
    record(5, identity(&analysis));
    record(6, similarity(&analysis));

    let perturbed = commands::perturb(&cfg).expect("perturbation runs");
    record(7, invariance(&perturbed));

    let curriculum = commands::curriculum(&cfg).expect("curriculum runs");
    record(8, plasticity(&curriculum));
    record(9, forgetting(&curriculum));

    record(10, kernels());
    record(11, reproducibility());

    println!("\nacceptance summary ({:.0}s):", started.elapsed().as_secs_f64());
    for (n, v) in &lines {
        println!("criterion {n}: {}", if v.pass { "PASS" } else { "FAIL" });
    }
    let failed = lines.iter().filter(|(_, v)| !v.pass).count();
    println!("{} passed, {failed} failed", lines.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
