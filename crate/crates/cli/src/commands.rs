use std::fs;
use std::path::Path;

use vad_core::eval::{grouped_report, macro_auc, micro_auc, ReportRow};
use vad_core::meta::{adapt_to_target, meta_train};
use vad_core::predictor::{load_checkpoint, save_checkpoint};
use vad_core::scoring::{read_score_csv, score_video, write_score_csv, ScoreSeries};
use vad_core::synth::{generate_dataset, DatasetSpec};
use vad_core::{
    load_manifest, protocol_split, ColorMode, Error, FrameStore, Label, LabeledScores, Manifest,
    Result, SplitSpec,
};

use crate::config::{read_config, write_snapshot, AdaptConfig, EvalConfig, TrainConfig};
use crate::plot::score_curve;
use crate::{AdaptScoreArgs, EvalArgs, GenDataArgs, TrainArgs};

pub const GEN_SNAPSHOT: &str = "gen-data.config.json";
pub const TRAIN_SNAPSHOT: &str = "train.config.json";
pub const ADAPT_SNAPSHOT: &str = "adapt-score.config.json";
pub const EVAL_SNAPSHOT: &str = "eval.config.json";

pub fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut spec = DatasetSpec::read(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let manifest = generate_dataset(&spec, &args.out)?;
    fs::create_dir_all(&args.out)?;
    write_snapshot(&spec, &args.out.join(GEN_SNAPSHOT))?;
    println!(
        "{} videos, {} scenarios -> {}",
        manifest.len(),
        manifest.scenario_index().len(),
        args.out.join("manifest.json").display()
    );
    Ok(())
}

fn resolve_train(args: &TrainArgs) -> Result<TrainConfig> {
    let mut c: TrainConfig = read_config(args.config.as_deref())?;
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if args.split_seed.is_some() {
        c.split_seed = args.split_seed;
    }
    let m = &mut c.meta;
    macro_rules! set {
        ($($field:ident => $target:expr),* $(,)?) => {
            $(if let Some(v) = args.$field { $target = v.into(); })*
        };
    }
    set!(
        epochs => m.epochs,
        sampler => m.sampler_mode,
        n_way => m.n_way,
        k_shot => m.k_shot,
        val_size => m.val_size,
        inner_lr => m.inner_lr,
        inner_steps => m.inner_steps,
        outer_lr => m.outer_lr,
        meta_batch_tasks => m.meta_batch_tasks,
        second_order => m.second_order,
        optimizer => m.optimizer,
    );
    let p = &mut c.predictor;
    set!(
        frame_size => p.frame_size,
        base_channels => p.base_channels,
        depth => p.depth,
        input_frames => p.input_frames,
        recurrent => p.recurrent_bottleneck,
    );
    c.meta.seed = c.seed;
    c.meta.validate()?;
    c.predictor.validate()?;
    Ok(c)
}

pub fn train(args: TrainArgs) -> Result<()> {
    let config = resolve_train(&args)?;
    let manifest = load_manifest(&args.manifest)?;
    let split = match &args.split {
        Some(p) => SplitSpec::read(p)?,
        None => protocol_split(
            &manifest,
            config.protocol,
            config.split_seed.unwrap_or(config.seed),
        )?,
    };
    fs::create_dir_all(&args.out)?;
    write_snapshot(&config, &args.out.join(TRAIN_SNAPSHOT))?;
    split.write(&args.out.join("split.json"))?;
    println!("{}", serde_json::to_string_pretty(&config)?);

    let train_normals: Vec<&str> = split
        .train_ids
        .iter()
        .map(|id| manifest.record(id))
        .filter(|r| r.as_ref().map_or(true, |r| r.label == Label::Normal))
        .map(|r| r.map(|r| r.video_id.as_str()))
        .collect::<Result<_>>()?;
    let store = if config.meta.epochs == 0 {
        FrameStore::new()
    } else {
        FrameStore::load(&manifest, train_normals.iter().copied(), ColorMode::Gray)?
    };

    let every = (config.meta.epochs / 20).max(1);
    let (model, log) = meta_train(
        &manifest,
        &split,
        &store,
        &config.meta,
        &config.predictor,
        config.seed,
        |e| {
            if e.iteration % every == 0 || e.iteration + 1 == config.meta.epochs {
                eprintln!("iter {:>5}  meta_loss {:.5}", e.iteration, e.meta_loss);
            }
        },
    )?;
    save_checkpoint(&model, &args.out.join("checkpoint.vadp"))?;
    log.write_csv(&args.out.join("training_log.csv"))?;
    println!(
        "checkpoint -> {}",
        args.out.join("checkpoint.vadp").display()
    );
    Ok(())
}

fn resolve_adapt(args: &AdaptScoreArgs) -> Result<AdaptConfig> {
    let mut c = match &args.config {
        Some(p) => AdaptConfig::read(p)?,
        None => AdaptConfig::default(),
    };
    if let Some(v) = args.k_shot {
        c.k_shot = v;
    }
    if let Some(v) = args.inner_lr {
        c.inner_lr = v;
    }
    if let Some(v) = args.inner_steps {
        c.inner_steps = v;
    }
    if let Some(v) = args.threshold {
        c.threshold = v;
    }
    c.no_adapt |= args.no_adapt;
    c.full_length |= args.full_length;
    c.meta().validate()?;
    Ok(c)
}

pub fn adapt_score(args: AdaptScoreArgs) -> Result<()> {
    let config = resolve_adapt(&args)?;
    let model = load_checkpoint(&args.checkpoint)?;
    let manifest = load_manifest(&args.manifest)?;
    let ids: Vec<String> = match &args.split {
        Some(p) => SplitSpec::read(p)?.test_ids.into_iter().collect(),
        None => manifest
            .records()
            .iter()
            .map(|r| r.video_id.clone())
            .collect(),
    };
    fs::create_dir_all(&args.out)?;
    write_snapshot(&config, &args.out.join(ADAPT_SNAPSHOT))?;
    let curves_dir = args.out.join("curves");
    if args.curves {
        fs::create_dir_all(&curves_dir)?;
    }

    let meta = config.meta();
    let mut series = Vec::with_capacity(ids.len());
    let mut skipped = Vec::new();
    for id in &ids {
        let record = manifest.record(id)?;
        let video = vad_core::dataset::load_video(&manifest, record, ColorMode::Gray)?;
        let scored = adapt_to_target(&model, &video, &meta)
            .and_then(|adapted| score_video(&adapted.model, &video));
        let mut s = match scored {
            Ok(s) => s,
            Err(e @ Error::VideoTooShort { .. }) => {
                eprintln!("skipping {id}: {e}");
                skipped.push(id.clone());
                continue;
            }
            Err(e) => return Err(e),
        };
        s.threshold = config.threshold;
        if args.curves {
            write_curve(&manifest, &s, &curves_dir)?;
        }
        series.push(s);
    }
    if series.is_empty() {
        return Err(Error::NoEvaluableVideos);
    }
    let path = args.out.join("scores.csv");
    write_score_csv(&path, &series, config.full_length)?;
    println!("{} videos scored -> {}", series.len(), path.display());
    if !skipped.is_empty() {
        eprintln!(
            "{} videos too short to score: {}",
            skipped.len(),
            skipped.join(", ")
        );
    }
    Ok(())
}

fn write_curve(manifest: &Manifest, s: &ScoreSeries, dir: &Path) -> Result<()> {
    let labels = manifest
        .annotation(manifest.record(&s.video_id)?)?
        .map(|a| a.labels[s.first_scored_frame - 1..].to_vec())
        .unwrap_or_else(|| vec![0; s.scores.len()]);
    score_curve(&s.scores, &labels, s.threshold).save(dir.join(format!("{}.png", s.video_id)))?;
    let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", s.video_id)))?;
    w.write_record(["frame_index", "score", "label"])?;
    for (i, (score, label)) in s.scores.iter().zip(&labels).enumerate() {
        w.write_record([
            s.frame_index(i).to_string(),
            score.to_string(),
            label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn resolve_eval(args: &EvalArgs) -> Result<EvalConfig> {
    let mut c: EvalConfig = read_config(args.config.as_deref())?;
    if let Some(v) = args.polarity {
        c.polarity = v.into();
    }
    if let Some(v) = args.group_by {
        c.group_by = v.into();
    }
    if let Some(v) = args.threshold {
        c.threshold = v;
    }
    Ok(c)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let config = resolve_eval(&args)?;
    let manifest = load_manifest(&args.manifest)?;
    let split = args.split.as_deref().map(SplitSpec::read).transpose()?;
    let table = read_score_csv(&args.scores)?;
    let data = LabeledScores::from_table(&table, config.polarity, |id| {
        let annotation = match &split {
            Some(s) => s.test_annotation(&manifest, id)?,
            None => manifest.annotation(manifest.record(id)?)?,
        };
        annotation
            .map(|a| a.labels)
            .ok_or_else(|| Error::Schema(format!("{id}: no frame annotation")))
    })?;
    fs::create_dir_all(&args.out)?;
    write_snapshot(&config, &args.out.join(EVAL_SNAPSHOT))?;
    let report = grouped_report(&data, &manifest, config.group_by, config.threshold)?;
    report.write_csv(&args.out.join("report.csv"))?;
    report.write_json(&args.out.join("report.json"))?;

    println!(
        "{:<24} {:>7} {:>8} {:>8} {:>7} {:>7}  status",
        "group", "videos", "frames", "AUC", "AP", "FPR"
    );
    for r in &report.rows {
        print_row(r);
    }
    let micro = micro_auc(&data)?;
    match macro_auc(&data) {
        Ok(m) => println!(
            "micro AUC {:.2}  macro AUC {:.2} over {} videos ({} single-class videos excluded)",
            100.0 * micro,
            100.0 * m.value,
            m.included,
            m.excluded.len()
        ),
        Err(e) => println!("micro AUC {:.2}  macro AUC undefined: {e}", 100.0 * micro),
    }
    Ok(())
}

fn print_row(r: &ReportRow) {
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
    println!(
        "{:<24} {:>7} {:>8} {:>8} {:>7} {:>7}  {}",
        r.group,
        r.n_videos,
        r.n_frames,
        pct(r.auc),
        pct(r.ap),
        pct(r.fpr),
        r.status
    );
}
