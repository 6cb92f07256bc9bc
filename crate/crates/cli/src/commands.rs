//! The five subcommands. Each returns its in-memory results as well as
//! writing artifacts, so tests can inspect both.

use std::collections::BTreeMap;

use ndarray::Array2;
use rrn::checkpoint::{encode_checkpoint, load_checkpoint_for};
use rrn::curriculum::{
    delta_heatmap, digit_eval_set, forgetting_csv, forgetting_summary, novel_eval_set, plasticity_compare_all,
    plasticity_csv, run_curriculum, CurriculumError, CurriculumLog, CurriculumPhase, ForgettingSummary,
    PlasticityReport,
};
use rrn::development::{detect_ctp_candidates, snapshot_csv, CtpCandidate, DevelopmentSnapshot};
use rrn::export::{matrix_csv, normalize, tile, Csv};
use rrn::glyphs::{generate_novel, NovelKind};
use rrn::network::{init_params, train as train_network, MetricLog, NetworkParams, TrainConfig, TrainError, ENCODING_WIDTH};
use rrn::perturbation::{
    lesion, lesion_csv, lesion_units, max_centroid_shift, modulate, sweep_csv, translation_centroid_shift,
    LesionReport, ModulationSweep,
};
use rrn::population::{class_means, favorite_images, top_responsive, top_responsive_csv, FAVORITE_POOL};
use rrn::property::{
    accuracy_csv, categories_csv, correlations_csv, decoders_csv, render_condition, top_neuron, PerturbCondition,
};
use rrn::retina::{Identity, Property, RetinaImage, StimulusProps};
use rrn::sources::AugmentedDigits;

use crate::battery::{
    augmented_stimuli, baselines, canonical, development_point, embedding_suite, identity_probe, identity_suite,
    load_data, property_correlations, property_suite, sample_indices, similarity_suite, Baselines, Data,
    DevelopmentMetrics, DevelopmentProbes, EmbeddingSuite, GridSimilarity, IdentitySuite, PropertySuite,
};
use crate::config::{NeuronRole, RunConfig};
use crate::manifest::Output;
use crate::CliError;

pub const CHECKPOINT_NAME: &str = "model.ckpt";

/// Input translation, in retina widths, against which modulation shifts
/// are compared.
pub const TRANSLATION_PROBE: f64 = 0.1;

fn open_output(cfg: &RunConfig, command: &str) -> Result<Output, CliError> {
    let mut out = Output::open(&cfg.out)?;
    out.command(command, &cfg.digest());
    Ok(out)
}

fn prepare(cfg: &RunConfig) -> Result<Data, CliError> {
    cfg.check_data_paths()?;
    Ok(load_data(cfg)?)
}

fn load_model(cfg: &RunConfig) -> Result<NetworkParams, CliError> {
    Ok(load_checkpoint_for(&cfg.checkpoint, &cfg.spec)?.0)
}

fn checkpoint_bytes(params: &NetworkParams, step: usize, cfg: &RunConfig, command: &str) -> Vec<u8> {
    let extra = BTreeMap::from([("command".to_string(), command.to_string())]);
    encode_checkpoint(params, step as u64, cfg.seed, &cfg.digest(), extra)
}

fn metrics_csv(log: &MetricLog) -> Csv {
    let mut csv = Csv::with_header(&["step", "mse"]);
    for e in &log.entries {
        csv.row([e.step.to_string(), e.mse.to_string()]);
    }
    csv
}

fn development_csv(metrics: &[DevelopmentMetrics]) -> Csv {
    let mut csv = Csv::with_header(&["step", "probe_mse", "r2_x", "identity_accuracy"]);
    for m in metrics {
        csv.row([
            m.step.to_string(),
            m.probe_mse.to_string(),
            m.r2_x.to_string(),
            m.identity_accuracy.to_string(),
        ]);
    }
    csv
}

fn key_value_csv(rows: &[(&str, f64)]) -> Csv {
    let mut csv = Csv::with_header(&["key", "value"]);
    for (k, v) in rows {
        csv.row([k.to_string(), v.to_string()]);
    }
    csv
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetworkParams,
    pub log: MetricLog,
    pub snapshots: Vec<DevelopmentSnapshot>,
    pub development: Vec<DevelopmentMetrics>,
    pub candidates: Vec<CtpCandidate>,
    pub baselines: Baselines,
    pub initial_probe_mse: f64,
    pub final_probe_mse: f64,
}

/// Train from a seeded initialization, evaluating development probes at
/// every snapshot step, and write the checkpoint plus metric reports.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let data = prepare(cfg)?;
    let mut out = open_output(cfg, "train")?;
    let probes = DevelopmentProbes::new(&data, cfg)?;
    let init = init_params(&cfg.spec, cfg.sub_seed("init"));
    let (first, _) = development_point(0, &init, &probes, cfg)?;
    let initial_probe_mse = first.probe_mse;

    let tc = TrainConfig {
        total_steps: cfg.train.steps,
        batch_size: cfg.train.batch_size,
        learning_rate: cfg.train.learning_rate,
        optimizer: cfg.train.optimizer.clone(),
        seed: cfg.sub_seed("train"),
        snapshot_schedule: cfg.train.snapshots.clone(),
    };
    let mut snapshots = Vec::new();
    let mut development = Vec::new();
    let mut hook = |step: usize, p: &NetworkParams| -> rrn::Result<()> {
        let (s, m) = development_point(step, p, &probes, cfg)?;
        eprintln!(
            "step {step}: probe mse {:.5}, x R2 {:.3}, identity acc {:.3}",
            m.probe_mse, m.r2_x, m.identity_accuracy
        );
        snapshots.push(s);
        development.push(m);
        Ok(())
    };
    let mut src = AugmentedDigits::new(&data.train, cfg.retina, cfg.sub_seed("stream"))?;
    let result = train_network(init, &tc, &mut src, &mut [&mut hook]);
    let layer_names = cfg.spec.layer_names();
    let (params, log) = match result {
        Ok(r) => r,
        Err(TrainError::Diverged { step, last_good, log }) => {
            out.csv("train_metrics.csv", &metrics_csv(&log))?;
            out.csv("development.csv", &development_csv(&development))?;
            out.bytes("diverged.ckpt", &checkpoint_bytes(&last_good, step - 1, cfg, "train"))?;
            out.save()?;
            return Err(CliError::Diverged(format!(
                "training diverged at step {step}; partial metrics and the last finite parameters were written"
            )));
        }
        Err(TrainError::Failed(e)) => return Err(e.into()),
    };

    let final_probe_mse = match snapshots.last() {
        Some(s) if s.step == cfg.train.steps => s.probe_mse,
        _ => development_point(cfg.train.steps, &params, &probes, cfg)?.0.probe_mse,
    };
    let baselines = baselines(&probes.probe);
    let candidates = detect_ctp_candidates(&snapshots, &layer_names, cfg.train.ctp_sensitivity);

    out.bytes(CHECKPOINT_NAME, &checkpoint_bytes(&params, cfg.train.steps, cfg, "train"))?;
    out.csv("train_metrics.csv", &metrics_csv(&log))?;
    out.csv("snapshots.csv", &snapshot_csv(&snapshots, &layer_names))?;
    out.csv("development.csv", &development_csv(&development))?;
    let mut ctp = Csv::with_header(&["step", "series", "trigger"]);
    for c in &candidates {
        ctp.row([c.step.to_string(), c.series.clone(), c.trigger.clone()]);
    }
    out.csv("ctp_candidates.csv", &ctp)?;
    for s in &snapshots {
        let mut images = Vec::new();
        for (input, rec) in s.image_pairs(&probes.probe) {
            images.push(input);
            images.push(rec);
        }
        out.pgm(&format!("snapshot_{}.pgm", s.step), &tile(&images, 16).view())?;
    }
    out.csv(
        "train_summary.csv",
        &key_value_csv(&[
            ("steps", cfg.train.steps as f64),
            ("initial_probe_mse", initial_probe_mse),
            ("final_probe_mse", final_probe_mse),
            ("baseline_constant_half_mse", baselines.constant_half),
            ("baseline_all_zero_mse", baselines.all_zero),
            ("baseline_mean_image_mse", baselines.mean_image),
        ]),
    )?;
    out.save()?;
    Ok(TrainOutcome {
        params,
        log,
        snapshots,
        development,
        candidates,
        baselines,
        initial_probe_mse,
        final_probe_mse,
    })
}

pub fn print_train(o: &TrainOutcome) {
    println!("probe mse: {:.5} -> {:.5}", o.initial_probe_mse, o.final_probe_mse);
    println!(
        "baselines: constant 0.5 {:.5}, all-zero {:.5}, mean image {:.5}",
        o.baselines.constant_half, o.baselines.all_zero, o.baselines.mean_image
    );
    println!("ctp candidates: {}", o.candidates.len());
}

#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub property: PropertySuite,
    pub identity: IdentitySuite,
    pub similarity: Vec<GridSimilarity>,
    pub embedding: Option<EmbeddingSuite>,
}

impl AnalysisOutcome {
    pub fn grid(&self, p: Property) -> &GridSimilarity {
        self.similarity
            .iter()
            .find(|g| g.property == p)
            .expect("every property has a grid")
    }
}

fn identity_correlation_csv(suite: &IdentitySuite) -> Csv {
    let mut csv = Csv::with_header(&["neuron", "digit", "r", "p", "significant"]);
    for ((u, d), r) in suite.correlation.r.indexed_iter() {
        csv.row([
            u.to_string(),
            d.to_string(),
            r.to_string(),
            suite.correlation.p[[u, d]].to_string(),
            suite.correlation.significant[[u, d]].to_string(),
        ]);
    }
    csv
}

/// Every encoding-layer report for the configured checkpoint.
pub fn analyze(cfg: &RunConfig) -> Result<AnalysisOutcome, CliError> {
    let params = load_model(cfg)?;
    let data = prepare(cfg)?;
    let mut out = open_output(cfg, "analyze")?;

    let property = property_suite(&params, &data, cfg)?;
    out.csv("correlations.csv", &correlations_csv(&property.correlations))?;
    out.csv("categories.csv", &categories_csv(&property.categories))?;
    out.csv("decoders.csv", &decoders_csv(&property.decoders))?;

    let probe = identity_probe(&data, cfg)?;
    let identity = identity_suite(&params, &data, &probe, cfg)?;
    let mut rows = vec![
        ("train".to_string(), identity.fit.train_accuracy),
        ("test".to_string(), identity.fit.test_accuracy),
        ("shuffled_labels_test".to_string(), identity.shuffled.test_accuracy),
    ];
    rows.extend(identity.robustness.iter().map(|(c, a)| (format!("condition:{}", c.label()), *a)));
    out.csv("identity_accuracy.csv", &accuracy_csv(&rows))?;
    out.csv("identity_correlation.csv", &identity_correlation_csv(&identity))?;
    let labels: Vec<usize> = probe.labels.iter().map(|&l| usize::from(l)).collect();
    out.csv("class_means.csv", &matrix_csv(&class_means(&identity.encodings.view(), &labels, 10).view()))?;
    let top = top_responsive(&identity.encodings.view(), 3)?;
    out.csv("top_responsive.csv", &top_responsive_csv(&top))?;

    let similarity = similarity_suite(&params, &data, cfg)?;
    let mut para = Csv::with_header(&["property", "stripe_strength", "background", "contrast"]);
    for g in &similarity {
        let tag = g.property.tag();
        out.csv(&format!("similarity_{tag}.csv"), &matrix_csv(&g.matrix.values.view()))?;
        out.pgm(&format!("similarity_{tag}.pgm"), &normalize(&g.matrix.values.view(), -1.0, 1.0).view())?;
        para.row([
            tag.to_string(),
            g.score.stripe_strength.to_string(),
            g.score.background.to_string(),
            g.score.contrast().to_string(),
        ]);
    }
    out.csv("paradiagonal.csv", &para)?;

    let pool = augmented_stimuli(&data.heldout, cfg, cfg.analysis.tsne_points.max(FAVORITE_POOL), "embedding")?;
    let pool_enc = rrn::network::encode_batch(&params, rrn::network::stack_images(&pool).view())?;
    let pool_images: Vec<Array2<f64>> = pool.iter().map(|s| s.pixels.clone()).collect();
    let mut favorites = Vec::with_capacity(ENCODING_WIDTH);
    for n in 0..pool_enc.ncols() {
        favorites.push(favorite_images(&pool_enc.view(), &pool_images, n, 1)?.mean_image);
    }
    out.pgm("favorites.pgm", &tile(&favorites, 8).view())?;

    let embedding = if cfg.analysis.tsne_points > 0 {
        let stimuli = pool[..cfg.analysis.tsne_points].to_vec();
        let e = embedding_suite(&params, stimuli, cfg)?;
        let mut csv = Csv::with_header(&["point", "digit", "x", "y", "s", "r", "tsne_1", "tsne_2"]);
        for (i, (s, c)) in e.stimuli.iter().zip(e.embedding.coords.outer_iter()).enumerate() {
            csv.row([
                i.to_string(),
                s.props.identity.to_string(),
                s.props.x.to_string(),
                s.props.y.to_string(),
                s.props.s.to_string(),
                s.props.r.to_string(),
                c[0].to_string(),
                c[1].to_string(),
            ]);
        }
        out.csv("tsne.csv", &csv)?;
        let mut kl = Csv::with_header(&["iteration", "kl"]);
        for (it, v) in &e.embedding.kl_trace {
            kl.row([it.to_string(), v.to_string()]);
        }
        out.csv("tsne_kl.csv", &kl)?;
        Some(e)
    } else {
        None
    };
    out.save()?;
    Ok(AnalysisOutcome {
        property,
        identity,
        similarity,
        embedding,
    })
}

pub fn print_analysis(o: &AnalysisOutcome) {
    for d in &o.property.decoders {
        println!("decoder {}: held-out R2 {:.3}", d.decoder.property, d.r2_test);
    }
    for p in Property::ALL {
        println!("{p}-neurons: {:?}", o.property.categories.neurons_for(p));
    }
    println!(
        "identity accuracy: {:.3} (shuffled labels {:.3})",
        o.identity.fit.test_accuracy, o.identity.shuffled.test_accuracy
    );
    for (c, a) in &o.identity.robustness {
        println!("  condition {}: {:.3}", c.label(), a);
    }
    for g in &o.similarity {
        println!("paradiagonal contrast {}: {:.4}", g.property, g.score.contrast());
    }
    if let Some(e) = &o.embedding {
        println!("tsne KL {:.4}, digit silhouette {:.3}", e.embedding.kl, e.silhouette);
    }
}

#[derive(Debug, Clone)]
pub struct PerturbOutcome {
    pub neuron: usize,
    pub role: NeuronRole,
    pub sweep: ModulationSweep,
    /// Largest horizontal centroid displacement produced by the sweep.
    pub max_modulation_shift: f64,
    /// Mean centroid displacement from translating inputs by
    /// `TRANSLATION_PROBE` retina widths.
    pub translation_shift: f64,
    pub lesion: LesionSummary,
}

/// Lesion of the targeted unit and mean damage of every single-unit lesion.
#[derive(Debug, Clone)]
pub struct LesionSummary {
    pub target: LesionReport,
    pub per_unit: Vec<f64>,
}

impl PerturbOutcome {
    pub fn shift_ratio(&self) -> f64 {
        self.max_modulation_shift / self.translation_shift.abs()
    }
}

/// Resolve a neuron role to a unit index.
pub fn resolve_neuron(role: NeuronRole, params: &NetworkParams, data: &Data, cfg: &RunConfig) -> Result<usize, CliError> {
    match role {
        NeuronRole::Unit(k) => Ok(k),
        NeuronRole::Top(p) => {
            let results = property_correlations(params, data, cfg, &[p])?;
            Ok(top_neuron(&results, p).expect("one result per unit").neuron_id)
        }
        NeuronRole::Digit(d) => {
            let probe = identity_probe(data, cfg)?;
            let suite = identity_suite(params, data, &probe, cfg)?;
            let col = suite.correlation.r.column(usize::from(d));
            Ok((0..col.len())
                .max_by(|&a, &b| col[a].total_cmp(&col[b]).then(b.cmp(&a)))
                .expect("at least one unit"))
        }
    }
}

pub fn perturb(cfg: &RunConfig) -> Result<PerturbOutcome, CliError> {
    let params = load_model(cfg)?;
    let data = prepare(cfg)?;
    let mut out = open_output(cfg, "perturb")?;
    let role = cfg.perturb.neuron;
    let neuron = resolve_neuron(role, &params, &data, cfg)?;

    let indices = sample_indices(&data.heldout, cfg.perturb.sweep_stimuli, cfg.sub_seed("sweep"));
    let stimuli = render_condition(&data.heldout, &indices, canonical(), PerturbCondition::baseline(), &cfg.retina)?.stimuli;
    let sweep = modulate(&params, &stimuli, neuron, &cfg.perturb.values)?;
    let max_modulation_shift = max_centroid_shift(&sweep)?;
    let translation_shift =
        translation_centroid_shift(&params, &data.heldout, &indices, canonical(), TRANSLATION_PROBE, &cfg.retina)?;
    out.csv("sweep.csv", &sweep_csv(&sweep, &stimuli)?)?;
    let cells: Vec<Array2<f64>> = sweep.reconstructions.iter().flatten().cloned().collect();
    out.pgm("sweep.pgm", &tile(&cells, cfg.perturb.values.len()).view())?;

    let lesion_stimuli = augmented_stimuli(&data.heldout, cfg, cfg.perturb.lesion_stimuli, "lesion")?;
    let target = lesion(&params, &lesion_stimuli, neuron)?;
    out.csv("lesion.csv", &lesion_csv(&target, &lesion_stimuli))?;
    let mut per_unit = Vec::with_capacity(ENCODING_WIDTH);
    let mut units = Csv::with_header(&["neuron", "mean_damage"]);
    for u in 0..ENCODING_WIDTH {
        let r = lesion_units(&params, &lesion_stimuli, &[u])?;
        let mean = r.damage.iter().sum::<f64>() / r.damage.len().max(1) as f64;
        units.row([u.to_string(), mean.to_string()]);
        per_unit.push(mean);
    }
    out.csv("lesion_units.csv", &units)?;

    let outcome = PerturbOutcome {
        neuron,
        role,
        sweep,
        max_modulation_shift,
        translation_shift,
        lesion: LesionSummary { target, per_unit },
    };
    out.csv(
        "invariance.csv",
        &key_value_csv(&[
            ("neuron", neuron as f64),
            ("max_modulation_shift_px", max_modulation_shift),
            ("translation_shift_px", translation_shift),
            ("ratio", outcome.shift_ratio()),
        ]),
    )?;
    out.save()?;
    Ok(outcome)
}

pub fn print_perturb(o: &PerturbOutcome) {
    println!("neuron {} ({:?})", o.neuron, o.role);
    println!(
        "modulation centroid shift {:.3} px vs translation shift {:.3} px (ratio {:.3})",
        o.max_modulation_shift,
        o.translation_shift,
        o.shift_ratio()
    );
    let mean = o.lesion.target.damage.iter().sum::<f64>() / o.lesion.target.damage.len().max(1) as f64;
    println!("lesion damage: {mean:.6}");
}

#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub log: CurriculumLog,
    pub control_log: Option<CurriculumLog>,
    /// Novel phase (A) against the control phase (B), every weight layer.
    pub plasticity: Vec<PlasticityReport>,
    pub forgetting: Vec<ForgettingSummary>,
}

fn curriculum_error(e: CurriculumError, out: &mut Output, name: &str, cfg: &RunConfig) -> CliError {
    match e {
        CurriculumError::Failed(e) => e.into(),
        CurriculumError::Diverged { phase, step, log, last_good } => {
            let written = out
                .csv(&format!("{name}_log.csv"), &log.csv())
                .and_then(|_| out.bytes("diverged.ckpt", &checkpoint_bytes(&last_good, step, cfg, "curriculum")))
                .and_then(|_| out.save());
            match written {
                Ok(()) => CliError::Diverged(format!(
                    "curriculum diverged in phase {phase} at step {step}; the partial log was written"
                )),
                Err(e) => e.into(),
            }
        }
    }
}

/// From a mature checkpoint: a novel phase followed by digit recovery, and
/// separately a control phase of the novel phase's length.
pub fn curriculum(cfg: &RunConfig) -> Result<CurriculumOutcome, CliError> {
    let params = load_model(cfg)?;
    let data = prepare(cfg)?;
    let mut out = open_output(cfg, "curriculum")?;
    let cc = &cfg.curriculum;
    let eval_sets = [
        digit_eval_set("digits", &data.heldout, &cfg.retina, cc.eval_size, cfg.sub_seed("eval-digits"))?,
        novel_eval_set(
            "novel",
            cc.novel_kind(),
            &data.heldout,
            &cfg.retina,
            cc.eval_size,
            cfg.sub_seed("eval-novel"),
        )?,
    ];
    let mut base = TrainConfig::new(0, cfg.sub_seed("curriculum"));
    base.batch_size = cfg.train.batch_size;
    base.learning_rate = cfg.train.learning_rate;
    base.optimizer = cfg.train.optimizer.clone();

    let mut phases = Vec::new();
    if cc.novel_steps > 0 {
        phases.push(CurriculumPhase::new("novel", cc.novel, cc.novel_steps)?);
    }
    if cc.recovery_steps > 0 {
        phases.push(CurriculumPhase::new("recovery", cc.recovery, cc.recovery_steps)?);
    }
    let (final_params, log) = match run_curriculum(params.clone(), &phases, &eval_sets, cc.eval_every, &base, &data.train, &cfg.retina) {
        Ok(r) => r,
        Err(e) => return Err(curriculum_error(e, &mut out, "curriculum", cfg)),
    };
    out.csv("curriculum_log.csv", &log.csv())?;
    let forgetting = forgetting_summary(&log);
    out.csv("forgetting.csv", &forgetting_csv(&forgetting))?;
    out.bytes(
        "curriculum.ckpt",
        &checkpoint_bytes(&final_params, cc.novel_steps + cc.recovery_steps, cfg, "curriculum"),
    )?;

    let mut control_log = None;
    let mut plasticity = Vec::new();
    if cc.novel_steps > 0 {
        let control = [CurriculumPhase::new("control", cc.control, cc.novel_steps)?];
        let (_, clog) = match run_curriculum(params, &control, &eval_sets, cc.eval_every, &base, &data.train, &cfg.retina) {
            Ok(r) => r,
            Err(e) => return Err(curriculum_error(e, &mut out, "control", cfg)),
        };
        out.csv("control_log.csv", &clog.csv())?;
        let (before, after_novel) = (&log.snapshots[0], &log.snapshots[1]);
        let after_control = &clog.snapshots[1];
        plasticity = plasticity_compare_all(before, after_novel, before, after_control)?;
        out.csv("plasticity.csv", &plasticity_csv(&plasticity, &cfg.spec.layer_names()))?;
        let layers: Vec<usize> = match cc.plasticity_layer {
            Some(l) if l < before.layers.len() => vec![l],
            Some(l) => return Err(CliError::Config(format!("plasticity_layer: no weight layer {l}"))),
            None => (0..before.layers.len()).collect(),
        };
        for l in layers {
            out.pgm(&format!("delta_novel_{l}.pgm"), &delta_heatmap(before, after_novel, l).view())?;
            out.pgm(&format!("delta_control_{l}.pgm"), &delta_heatmap(before, after_control, l).view())?;
        }
        control_log = Some(clog);
    }
    out.save()?;
    Ok(CurriculumOutcome {
        log,
        control_log,
        plasticity,
        forgetting,
    })
}

pub fn print_curriculum(o: &CurriculumOutcome) {
    for f in &o.forgetting {
        println!(
            "{}: boundary mse {:?}, final {:.5}",
            f.set,
            f.boundary_mse.iter().map(|(s, m)| format!("{s}:{m:.5}")).collect::<Vec<_>>(),
            f.final_mse
        );
    }
    for r in &o.plasticity {
        println!(
            "weight layer {}: |dw| novel/control {:.3} (Welch p {:.3e})",
            r.layer, r.ratio, r.welch.p_value
        );
    }
}

/// Preview sheet: the first instance of each digit under every configured
/// perturbation (one row each), then one row of novel structures.
pub fn render(cfg: &RunConfig) -> Result<(), CliError> {
    let data = prepare(cfg)?;
    let mut out = open_output(cfg, "render")?;
    let indices: Vec<usize> = (0..10u8)
        .map(|d| {
            data.train
                .indices_of(d)
                .first()
                .copied()
                .ok_or_else(|| CliError::Config(format!("training corpus has no digit {d}")))
        })
        .collect::<Result<_, _>>()?;
    let mut cells: Vec<Array2<f64>> = Vec::new();
    for &c in &cfg.analysis.perturbations {
        let set = render_condition(&data.train, &indices, canonical(), c, &cfg.retina)?;
        cells.extend(set.stimuli.into_iter().map(|s| s.pixels));
    }
    for (k, kind) in NovelKind::ALL.into_iter().enumerate() {
        let props = StimulusProps::canonical(Identity::Novel(kind));
        let img: RetinaImage = generate_novel(kind, props, &data.train, cfg.sub_seed(&format!("render:{k}")), &cfg.retina)?;
        cells.push(img.pixels);
    }
    out.pgm("render.pgm", &tile(&cells, 10).view())?;
    out.save()?;
    println!("wrote {}", out.path("render.pgm").display());
    Ok(())
}
