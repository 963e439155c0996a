use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use onseg_core::check::run_oracle_checks;
use onseg_core::dataset::{Dataset, Split};
use onseg_core::decode::OnlineConfig;
use onseg_core::energy::InvalidPathSet;
use onseg_core::eval::{
    evaluate_dataset, evaluate_predictions, progress_profile, sweep_delay, Decoder, EvalReport, EvalVideo,
    InferenceModel, VideoFailure,
};
use onseg_core::io::{next_free_path, read_labels, write_synthetic, write_text, Checkpoint, Manifest};
use onseg_core::metrics::AggregateMetrics;
use onseg_core::multiview::SvDurationCounting;
use onseg_core::oracle::{EnumerationBudget, InstanceFamily};
use onseg_core::synth::{generate, Occlusion, SynthConfig};
use onseg_core::train::{train, MultiviewMode, TrainConfig};

use crate::{
    require, Cli, Command, DecoderArgs, DecoderKind, EvalArgs, GenDataArgs, InferArgs, InvalidSet, Mode, OracleArgs,
    ProgressArgs, SplitArg, SvDurations, SweepArgs, Switch, TrainArgs,
};

/// Provenance written beside every output: the full command plus the
/// configuration it resolved to.
#[derive(Debug, Serialize, Deserialize)]
struct RunRecord<T> {
    tool: String,
    version: String,
    command: Cli,
    resolved: T,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn write_record<T: Serialize>(path: &Path, cli: &Cli, resolved: T) -> Result<()> {
    let record = RunRecord {
        tool: "onseg".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cli.clone(),
        resolved,
    };
    write_text(path, &to_json(&record)?)?;
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Infer(a) => infer(cli, a),
        Command::Eval(a) => eval(cli, a),
        Command::SweepDelay(a) => cmd_sweep(cli, a),
        Command::Progress(a) => cmd_progress(cli, a),
        Command::OracleCheck(a) => oracle_check(cli, a),
        Command::Replay(a) => {
            let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
            let record: RunRecord<serde_json::Value> =
                serde_json::from_str(&text).with_context(|| format!("{} is not a run record", a.config.display()))?;
            if matches!(record.command.command, Command::Replay(_)) {
                bail!(
                    "{} records a replay; replay its source record instead",
                    a.config.display()
                );
            }
            info!("replaying {}", a.config.display());
            run(&record.command)
        }
    }
}

fn synth_config(cli: &Cli, a: &GenDataArgs) -> SynthConfig {
    let d = SynthConfig::default();
    let mut occlusion: Vec<Occlusion> = a
        .occlude
        .iter()
        .map(|o| Occlusion {
            view: o.view,
            start: o.span.start,
            end: o.span.end,
        })
        .collect();
    if let Some(s) = a.occlude_anchor {
        occlusion.insert(
            0,
            Occlusion {
                view: 0,
                start: s.start,
                end: s.end,
            },
        );
    }
    SynthConfig {
        num_actions: a.actions.unwrap_or(d.num_actions),
        background: !a.no_background,
        num_transcripts: a.transcripts.unwrap_or(d.num_transcripts),
        min_transcript_len: a.min_transcript_len.unwrap_or(d.min_transcript_len),
        max_transcript_len: a.max_transcript_len.unwrap_or(d.max_transcript_len),
        recordings_per_transcript: a.recordings.unwrap_or(d.recordings_per_transcript),
        views: a.views.unwrap_or(d.views),
        feature_dim: a.feature_dim.unwrap_or(d.feature_dim),
        separation: a.separation.unwrap_or(d.separation),
        noise: a.noise.unwrap_or(d.noise),
        occlusion,
        test_fraction: a.test_fraction.unwrap_or(d.test_fraction),
        seed: cli.seed,
        ..d
    }
}

fn gen_data(cli: &Cli, a: &GenDataArgs) -> Result<()> {
    let out = require(&cli.out_dir, "out-dir");
    let cfg = synth_config(cli, a);
    let synth = generate(&cfg)?;
    let manifest = write_synthetic(out, &synth)?;
    write_record(&out.join("gen-data.config.json"), cli, &cfg)?;
    info!(
        "wrote {} videos (nearest-prototype accuracy {:.3}) to {}",
        synth.dataset.videos.len(),
        synth.bayes_accuracy,
        out.display()
    );
    println!("{}", manifest.display());
    Ok(())
}

fn train_config(cli: &Cli, a: &TrainArgs) -> TrainConfig {
    let d = TrainConfig::default();
    TrainConfig {
        epochs: a.epochs.unwrap_or(d.epochs),
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        seed: cli.seed,
        use_oodl: a.oodl == Switch::On,
        multiview_mode: match a.mode {
            Mode::Single => MultiviewMode::None,
            Mode::Sv => MultiviewMode::Sv,
            Mode::Pi => MultiviewMode::Pi,
            Mode::Wpi => MultiviewMode::Wpi,
        },
        train_wpi: !a.freeze_confidence,
        confidence_learning_rate: a.confidence_lr.unwrap_or(d.confidence_learning_rate),
        invalid_set: match a.invalid_set {
            InvalidSet::All => InvalidPathSet::AllSegmentsDiffer,
            InvalidSet::Any => InvalidPathSet::AnySegmentDiffers,
        },
        sv_counting: match a.sv_durations {
            SvDurations::PerView => SvDurationCounting::PerView,
            SvDurations::Shared => SvDurationCounting::Shared,
        },
        ..d
    }
}

fn load_manifest(cli: &Cli) -> Result<Manifest> {
    Ok(Manifest::read(require(&cli.manifest, "manifest"))?)
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let manifest = load_manifest(cli)?;
    let out = require(&cli.out_dir, "out-dir");
    let cfg = train_config(cli, a);
    // training never sees label files: only features and transcripts are loaded
    let data = manifest.split(Split::Train).load_dataset()?;
    if data.videos.is_empty() {
        bail!("the manifest has no training videos");
    }
    let result = train(&data, &cfg)?;
    let checkpoint = Checkpoint {
        actions: data.actions.clone(),
        transcripts: data.grammar()?.transcripts().to_vec(),
        model: result.model,
        durations: result.durations,
        confidence: result.confidence,
    };
    let path = out.join("checkpoint.txt");
    checkpoint.write(&path)?;
    write_text(&out.join("train-log.json"), &to_json(&result.log)?)?;
    write_record(&out.join("train.config.json"), cli, &cfg)?;
    println!("{}", path.display());
    Ok(())
}

fn decoder_of(a: &DecoderArgs) -> Decoder {
    match a.decoder {
        DecoderKind::Online => Decoder::Online,
        DecoderKind::Offline => Decoder::Offline,
        DecoderKind::Greedy => Decoder::Greedy { window: a.window },
        DecoderKind::Semi => Decoder::Semi {
            delay: a.delay.expect("clap requires --delay with semi"),
        },
    }
}

fn select(manifest: &Manifest, split: SplitArg) -> Manifest {
    match split {
        SplitArg::Train => manifest.split(Split::Train),
        SplitArg::Test => manifest.split(Split::Test),
        SplitArg::All => manifest.clone(),
    }
}

struct Loaded {
    manifest: Manifest,
    data: Dataset,
    checkpoint: Checkpoint,
}

fn load_for_inference(cli: &Cli, checkpoint: &Path, split: SplitArg) -> Result<Loaded> {
    let manifest = select(&load_manifest(cli)?, split);
    let checkpoint = Checkpoint::read(checkpoint)?;
    if checkpoint.actions != manifest.actions {
        bail!("checkpoint and manifest disagree on the action set");
    }
    let data = manifest.load_dataset()?;
    if data.videos.is_empty() {
        bail!("the selected split has no videos");
    }
    Ok(Loaded {
        manifest,
        data,
        checkpoint,
    })
}

#[derive(Serialize)]
struct InferSummary {
    format: &'static str,
    version: u32,
    decoder: String,
    videos: Vec<InferredVideo>,
}

#[derive(Serialize)]
struct InferredVideo {
    id: String,
    frames: usize,
    labels: PathBuf,
}

fn infer(cli: &Cli, a: &InferArgs) -> Result<()> {
    let out = require(&cli.out_dir, "out-dir");
    let l = load_for_inference(cli, &a.checkpoint, a.split)?;
    let grammar = l.checkpoint.grammar()?;
    let im = InferenceModel {
        model: &l.checkpoint.model,
        durations: &l.checkpoint.durations,
        grammar: &grammar,
        online: OnlineConfig::default(),
    };
    let decoder = decoder_of(&a.decoder);
    use rayon::prelude::*;
    let labels: Vec<Vec<usize>> = l
        .data
        .videos
        .par_iter()
        .map(|v| -> Result<Vec<usize>> {
            let stream = l.checkpoint.model.forward(v.features.view())?;
            im.labels(&stream, decoder)
                .with_context(|| format!("decoding {}", v.id))
        })
        .collect::<Result<_>>()?;
    let mut summary = InferSummary {
        format: "onseg-infer",
        version: 1,
        decoder: decoder.to_string(),
        videos: Vec::new(),
    };
    for (v, lab) in l.data.videos.iter().zip(&labels) {
        let rel = PathBuf::from("labels").join(format!("{}.txt", v.id));
        write_text(&out.join(&rel), &onseg_core::io::format_labels(lab, &l.data.actions))?;
        summary.videos.push(InferredVideo {
            id: v.id.clone(),
            frames: lab.len(),
            labels: rel,
        });
    }
    write_text(&out.join("infer-summary.json"), &to_json(&summary)?)?;
    write_record(&out.join("infer.config.json"), cli, decoder)?;
    info!("wrote {} label files with the {decoder} decoder", labels.len());
    Ok(())
}

/// Ground truth per selected video; a missing or malformed file becomes a listed failure.
fn ground_truth(manifest: &Manifest) -> Vec<std::result::Result<Vec<usize>, VideoFailure>> {
    (0..manifest.entries.len())
        .map(|i| {
            let id = manifest.entries[i].id.clone();
            match manifest.load_ground_truth(i) {
                Ok(Some(gt)) => Ok(gt),
                Ok(None) => Err(VideoFailure {
                    id,
                    error: "manifest names no ground-truth labels".into(),
                }),
                Err(e) => Err(VideoFailure {
                    id,
                    error: e.to_string(),
                }),
            }
        })
        .collect()
}

fn eval(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let out = require(&cli.out_dir, "out-dir");
    let (report, resolved) = if let Some(pred_dir) = &a.pred_dir {
        let manifest = select(&load_manifest(cli)?, a.split);
        let mut ids = Vec::new();
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        let mut failures = Vec::new();
        for (e, gt) in manifest.entries.iter().zip(ground_truth(&manifest)) {
            let pred = read_labels(&pred_dir.join(format!("{}.txt", e.id)), &manifest.actions);
            match (pred, gt) {
                (Ok(p), Ok(g)) => {
                    ids.push(e.id.clone());
                    preds.push(p);
                    gts.push(g);
                }
                (Err(err), _) => failures.push(VideoFailure {
                    id: e.id.clone(),
                    error: err.to_string(),
                }),
                (_, Err(f)) => failures.push(f),
            }
        }
        let name = format!("labels({})", pred_dir.display());
        let mut report = evaluate_predictions(&ids, &preds, &gts, manifest.actions.background(), &name);
        report.failures.extend(failures);
        (report, name)
    } else {
        let ck = a.checkpoint.as_ref().expect("clap requires --pred-dir or --checkpoint");
        let l = load_for_inference(cli, ck, a.split)?;
        let grammar = l.checkpoint.grammar()?;
        let im = InferenceModel {
            model: &l.checkpoint.model,
            durations: &l.checkpoint.durations,
            grammar: &grammar,
            online: OnlineConfig::default(),
        };
        let mut videos = Vec::new();
        let mut failures = Vec::new();
        for (v, gt) in l.data.videos.iter().zip(ground_truth(&l.manifest)) {
            match gt {
                Ok(g) => videos.push(EvalVideo {
                    id: v.id.clone(),
                    stream: l.checkpoint.model.forward(v.features.view())?,
                    ground_truth: g,
                }),
                Err(f) => failures.push(f),
            }
        }
        let decoder = decoder_of(&a.decoder);
        let mut report = evaluate_dataset(&im, &videos, decoder, l.data.actions.background());
        report.failures.extend(failures);
        (report, decoder.to_string())
    };
    let path = next_free_path(out, "eval", "json");
    write_text(&path, &to_json(&report)?)?;
    write_record(&path.with_extension("config.json"), cli, resolved)?;
    print_summary(&report);
    println!("{}", path.display());
    if !report.failures.is_empty() {
        for f in &report.failures {
            warn!("{}: {}", f.id, f.error);
        }
        bail!(
            "{} of {} videos failed to evaluate",
            report.failures.len(),
            report.failures.len() + report.videos.len()
        );
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("NA".into(), |x| format!("{x:.6}"))
}

fn print_summary(r: &EvalReport) {
    let m = &r.aggregate;
    info!(
        "{}: {} videos, acc {:.4} acc-bg {} IoU {} IoD {} online-offline disagreement {}",
        r.decoder,
        m.videos,
        m.acc,
        fmt_opt(m.acc_bg),
        fmt_opt(m.iou),
        fmt_opt(m.iod),
        fmt_opt(r.online_offline_disagreement)
    );
}

fn eval_videos(l: &Loaded) -> Result<Vec<EvalVideo>> {
    let mut videos = Vec::new();
    for (v, gt) in l.data.videos.iter().zip(ground_truth(&l.manifest)) {
        let gt = gt.map_err(|f| anyhow::anyhow!("{}: {}", f.id, f.error))?;
        videos.push(EvalVideo {
            id: v.id.clone(),
            stream: l.checkpoint.model.forward(v.features.view())?,
            ground_truth: gt,
        });
    }
    Ok(videos)
}

fn metrics_columns(m: &AggregateMetrics) -> String {
    format!(
        "{:.6}\t{}\t{}\t{}",
        m.acc,
        fmt_opt(m.acc_bg),
        fmt_opt(m.iou),
        fmt_opt(m.iod)
    )
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let out = require(&cli.out_dir, "out-dir");
    for w in a.delays.windows(2) {
        use onseg_core::eval::Delay::{Fraction, Frames};
        let ordered = match (w[0], w[1]) {
            (Frames(x), Frames(y)) => x <= y,
            (Fraction(x), Fraction(y)) => x <= y,
            _ => true,
        };
        if !ordered {
            bail!("delays must be in ascending order ({} before {})", w[0], w[1]);
        }
    }
    let l = load_for_inference(cli, &a.checkpoint, a.split)?;
    let grammar = l.checkpoint.grammar()?;
    let im = InferenceModel {
        model: &l.checkpoint.model,
        durations: &l.checkpoint.durations,
        grammar: &grammar,
        online: OnlineConfig::default(),
    };
    let rows = sweep_delay(&im, &eval_videos(&l)?, &a.delays, l.data.actions.background())?;
    let mut tsv = String::from("delay\tacc\tacc_bg\tiou\tiod\n");
    for r in &rows {
        writeln!(tsv, "{}\t{}", r.delay, metrics_columns(&r.metrics))?;
    }
    let path = next_free_path(out, "sweep", "tsv");
    write_text(&path, &tsv)?;
    write_record(&path.with_extension("config.json"), cli, &a.delays)?;
    print!("{tsv}");
    Ok(())
}

fn cmd_progress(cli: &Cli, a: &ProgressArgs) -> Result<()> {
    let out = require(&cli.out_dir, "out-dir");
    let l = load_for_inference(cli, &a.checkpoint, a.split)?;
    let grammar = l.checkpoint.grammar()?;
    let im = InferenceModel {
        model: &l.checkpoint.model,
        durations: &l.checkpoint.durations,
        grammar: &grammar,
        online: OnlineConfig::default(),
    };
    let points = progress_profile(&im, &eval_videos(&l)?, &a.endpoints, l.data.actions.background())?;
    let mut tsv = String::from("fraction\tacc\tacc_bg\n");
    for p in &points {
        writeln!(tsv, "{}\t{:.6}\t{}", p.fraction, p.acc, fmt_opt(p.acc_bg))?;
    }
    let path = next_free_path(out, "progress", "tsv");
    write_text(&path, &tsv)?;
    write_record(&path.with_extension("config.json"), cli, &a.endpoints)?;
    print!("{tsv}");
    Ok(())
}

fn oracle_check(cli: &Cli, a: &OracleArgs) -> Result<()> {
    let family = InstanceFamily {
        max_t: a.max_t,
        max_actions: a.max_actions,
        max_transcripts: a.max_transcripts,
        max_transcript_len: a.max_transcript_len,
    };
    if family.max_actions < 2 || family.max_transcripts == 0 || family.max_transcript_len == 0 {
        bail!("instances need at least two actions and one non-empty transcript");
    }
    let budget = EnumerationBudget::default();
    let report = run_oracle_checks(cli.seed, a.instances, family, &budget)?;
    let json = to_json(&report)?;
    if let Some(out) = &cli.out_dir {
        let path = next_free_path(out, "oracle-check", "json");
        write_text(&path, &json)?;
        write_record(&path.with_extension("config.json"), cli, ())?;
    }
    print!("{json}");
    for c in &report.checks {
        info!(
            "{}: {} instances, {} failures, worst score gap {:.3e}",
            c.check, c.instances, c.failures, c.worst_score_gap
        );
    }
    if report.failures() > 0 {
        bail!("{} oracle mismatches", report.failures());
    }
    Ok(())
}
