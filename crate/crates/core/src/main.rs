use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fingerspell::align::{align, FrequencyTable};
use fingerspell::checkpoint::{detection_to_file, load_detection, pretrain_to_file};
use fingerspell::config::KeyValues;
use fingerspell::data::{
    load_annotations, load_manifest, pose_file::load_pose, resolve_pose_path, spans_to_labels, tokenize, AlignedSpan,
    FrameSpan,
};
use fingerspell::detection::{
    finetune, DecodeConfig, DetectionModel, DetectionSample, FinetuneConfig, ModelConfig, ScoredSpan,
};
use fingerspell::evaluation::{
    category_tally, default_stopwords, fingerspelling_percent, group_by_annotator, iou_alignment, iou_detection,
    load_labeled_videos, pairwise_agreement, select_annotator, shuffled_agreement_baseline, EvalReport, SampleResult,
    WordMode,
};
use fingerspell::pretrain::{pretrain, PretrainConfig, PretrainData, PretrainModel};
use fingerspell::suggest::{detect_and_align, detect_spans, load_lexicon, suggest};
use fingerspell::synth::{synth_generate, SynthConfig};
use fingerspell::train::save_loss_log;
use fingerspell::{Error, Result};

#[derive(Parser)]
#[command(name = "fingerspell", version, about = "Fingerspelling detection, alignment and sign suggestion")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key=value` file overriding built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Emit JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted fingerspelling.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Contrastive pretraining of both encoders on unlabeled videos.
    Pretrain {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Loss log CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Train the detector, from a checkpoint or from scratch.
    Finetune {
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        annotator: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Fingerspelling spans of one video, or of every video in a manifest.
    Detect {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, requires = "sentence", conflicts_with = "manifest")]
        video: Option<PathBuf>,
        #[arg(long)]
        sentence: Option<String>,
        #[arg(long, required_unless_present = "video")]
        manifest: Option<PathBuf>,
        /// With `--manifest`, also align spans to words using this table.
        #[arg(long, requires = "manifest")]
        freq: Option<PathBuf>,
    },
    /// Map spans to the least frequent words of a sentence.
    Align {
        #[arg(long)]
        spans: PathBuf,
        #[arg(long)]
        sentence: String,
        #[arg(long)]
        freq: PathBuf,
    },
    /// Detect, align and look up candidate signs.
    Suggest {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        sentence: String,
        #[arg(long)]
        freq: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
    },
    /// Mean IOU of predictions against gold annotations.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        annotator: Option<String>,
    },
    /// Inter-annotator agreement and its shuffled baseline.
    Agreement {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1000)]
        shuffle_trials: usize,
    },
    /// Fingerspelling rates and word categories.
    Stats {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// One stop word per line; the built-in English list otherwise.
        #[arg(long)]
        stoplist: Option<PathBuf>,
        /// CSV `word,category` of fingerspelled words.
        #[arg(long)]
        categories: Option<PathBuf>,
        #[arg(long)]
        annotator: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Detection,
    Alignment,
}

/// Every key a config file may set. `model.preset` picks `desk` (default)
/// or `reference` before the other model keys apply.
fn known_keys() -> Vec<&'static str> {
    let mut keys = vec!["model.preset"];
    keys.extend_from_slice(SynthConfig::KEYS);
    keys.extend_from_slice(ModelConfig::KEYS);
    keys.extend_from_slice(PretrainConfig::KEYS);
    keys.extend_from_slice(FinetuneConfig::KEYS);
    keys.extend_from_slice(DecodeConfig::KEYS);
    keys
}

struct Settings {
    kv: KeyValues,
    seed: Option<u64>,
    json: bool,
}

impl Settings {
    fn model(&self) -> Result<ModelConfig> {
        let mut cfg = match self.kv.get("model.preset").unwrap_or("desk") {
            "desk" => ModelConfig::desk(),
            "reference" => ModelConfig::reference(),
            other => return Err(Error::Config(format!("model.preset must be desk or reference, got `{other}`"))),
        };
        cfg.apply(&self.kv)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn decode(&self) -> Result<DecodeConfig> {
        let mut cfg = DecodeConfig::default();
        cfg.apply(&self.kv)?;
        Ok(cfg)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Serialize, Deserialize)]
struct SpanList {
    spans: Vec<ScoredSpan>,
}

/// A predicted span; alignment predictions carry the word index.
#[derive(Serialize, Deserialize)]
struct PredSpan {
    start: usize,
    end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    word_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    word: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Predictions {
    predictions: BTreeMap<String, Vec<PredSpan>>,
}

fn emit(out: &mut impl Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

fn to_json(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_model(settings: &Settings, ckpt: &Path) -> Result<DetectionModel<f32>> {
    load_detection(ckpt, settings.seed())
}

fn run(cli: Cli) -> Result<()> {
    let kv = match &cli.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    kv.check_known(&known_keys())?;
    let settings = Settings {
        kv,
        seed: cli.seed,
        json: cli.json,
    };
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Synth { out } => {
            let mut cfg = SynthConfig::default();
            cfg.apply(&settings.kv)?;
            if let Some(s) = settings.seed {
                cfg.seed = s;
            }
            let ds = synth_generate(&cfg)?;
            ds.write(&out)?;
            emit(
                &mut stdout,
                &format!("wrote {} videos to {}\n", ds.videos.len(), out.display()),
            )
        }
        Command::Pretrain {
            manifest,
            epochs,
            batch,
            lr,
            out,
            log,
        } => {
            let model_cfg = settings.model()?;
            let mut cfg = PretrainConfig::default();
            cfg.apply(&settings.kv)?;
            cfg.seed = settings.seed();
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.batch = batch.unwrap_or(cfg.batch);
            cfg.lr = lr.unwrap_or(cfg.lr);
            let records = load_manifest(&manifest)?;
            let videos = records
                .iter()
                .map(|r| load_pose(resolve_pose_path(&manifest, r)))
                .collect::<Result<Vec<_>>>()?;
            let data = PretrainData {
                videos,
                sentences: records.iter().map(|r| r.sentence.clone()).collect(),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut init = PretrainModel::new(&mut rng, &model_cfg)?;
            init.video.fit_input_norm(&data.videos);
            let (model, losses) = pretrain(init, &data, model_cfg.input.frames, &cfg)?;
            pretrain_to_file(&model, model_cfg.input).save(&out)?;
            if let Some(log) = log {
                save_loss_log(log, &losses)?;
            }
            let last = losses.last().map_or(f64::NAN, |r| r.loss);
            emit(&mut stdout, &format!("{} steps, final loss {last:.6}\n", losses.len()))
        }
        Command::Finetune {
            ckpt,
            annotations,
            manifest,
            annotator,
            epochs,
            batch,
            lr,
            out,
            log,
        } => {
            let anns = select_annotator(load_annotations(&annotations)?, annotator.as_deref())?;
            let videos = load_labeled_videos(&manifest, &anns)?;
            let init = match &ckpt {
                Some(p) => load_model(&settings, p)?,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed());
                    let mut m = DetectionModel::new(&mut rng, &settings.model()?)?;
                    let poses: Vec<_> = videos.iter().map(|v| v.pose.clone()).collect();
                    m.video.fit_input_norm(&poses);
                    m
                }
            };
            let mut cfg = FinetuneConfig::default();
            cfg.apply(&settings.kv)?;
            cfg.seed = settings.seed();
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.batch = batch.unwrap_or(cfg.batch);
            cfg.lr = lr.unwrap_or(cfg.lr);
            let samples = videos
                .iter()
                .map(|v| {
                    let labels = spans_to_labels(&v.gold_spans(), v.record.n_frames)?;
                    DetectionSample::new(&v.pose, &v.record.sentence, &labels, init.input)
                })
                .collect::<Result<Vec<_>>>()?;
            let (model, losses) = finetune(init, &samples, &cfg)?;
            detection_to_file(&model).save(&out)?;
            if let Some(log) = log {
                save_loss_log(log, &losses)?;
            }
            let last = losses.last().map_or(f64::NAN, |r| r.loss);
            emit(&mut stdout, &format!("{} steps, final loss {last:.6}\n", losses.len()))
        }
        Command::Detect {
            ckpt,
            video,
            sentence,
            manifest,
            freq,
        } => {
            let model = load_model(&settings, &ckpt)?;
            let decode = settings.decode()?;
            if let (Some(video), Some(sentence)) = (video, sentence) {
                let pose = load_pose(&video)?;
                let spans = detect_spans(&pose, &sentence, &model, &decode)?;
                let text = if settings.json {
                    to_json(&SpanList { spans })?
                } else {
                    spans
                        .iter()
                        .map(|s| format!("{}\t{}\t{:.4}\n", s.start, s.end, s.score))
                        .collect()
                };
                return emit(&mut stdout, &text);
            }
            let manifest = manifest.expect("clap enforces --video or --manifest");
            let table = freq.map(FrequencyTable::load).transpose()?;
            let mut predictions = BTreeMap::new();
            for r in load_manifest(&manifest)? {
                let pose = load_pose(resolve_pose_path(&manifest, &r))?;
                let spans = match &table {
                    Some(t) => detect_and_align(&pose, &r.sentence, &model, t, &decode)?
                        .into_iter()
                        .map(|a| pred_span(a.span, Some(a.word_index)))
                        .collect(),
                    None => detect_spans(&pose, &r.sentence, &model, &decode)?
                        .into_iter()
                        .map(|s| PredSpan {
                            score: Some(s.score),
                            ..pred_span(FrameSpan::new(s.start, s.end), None)
                        })
                        .collect(),
                };
                predictions.insert(r.video_id, spans);
            }
            emit(&mut stdout, &to_json(&Predictions { predictions })?)
        }
        Command::Align { spans, sentence, freq } => {
            let list: SpanList = read_json(&spans)?;
            let spans = list
                .spans
                .iter()
                .map(|s| FrameSpan::try_new(s.start, s.end))
                .collect::<Result<Vec<_>>>()?;
            let table = FrequencyTable::load(&freq)?;
            let tokens = tokenize(&sentence);
            let aligned: Vec<PredSpan> = align(&spans, &sentence, &table)?
                .into_iter()
                .map(|a| PredSpan {
                    word: Some(tokens[a.word_index].clone()),
                    ..pred_span(a.span, Some(a.word_index))
                })
                .collect();
            let text = if settings.json {
                to_json(&serde_json::json!({ "aligned": aligned }))?
            } else {
                aligned
                    .iter()
                    .map(|a| format!("{}\t{}\t{}\n", a.start, a.end, a.word.as_deref().unwrap_or("")))
                    .collect()
            };
            emit(&mut stdout, &text)
        }
        Command::Suggest {
            ckpt,
            video,
            sentence,
            freq,
            lexicon,
        } => {
            let model = load_model(&settings, &ckpt)?;
            let pose = load_pose(&video)?;
            let table = FrequencyTable::load(&freq)?;
            let lexicon = load_lexicon(&lexicon)?;
            let out = suggest(&pose, &sentence, &model, &table, &lexicon, &settings.decode()?)?;
            let text = if settings.json {
                to_json(&out)?
            } else {
                let mut t = String::new();
                for s in &out {
                    let glosses: Vec<&str> = s.candidates.iter().map(|c| c.gloss.as_str()).collect();
                    let shown = if glosses.is_empty() { "(no known sign)".to_string() } else { glosses.join(", ") };
                    t += &format!("{}-{}\t{}\t{}\n", s.span.start, s.span.end, s.word, shown);
                }
                t
            };
            emit(&mut stdout, &text)
        }
        Command::Eval {
            pred,
            gold,
            manifest,
            mode,
            annotator,
        } => {
            let preds: Predictions = read_json(&pred)?;
            let anns = select_annotator(load_annotations(&gold)?, annotator.as_deref())?;
            let videos = load_labeled_videos(&manifest, &anns)?;
            let empty = Vec::new();
            let mut samples = Vec::new();
            for v in &videos {
                let p = preds.predictions.get(&v.record.video_id).unwrap_or(&empty);
                let spans = p
                    .iter()
                    .map(|s| FrameSpan::try_new(s.start, s.end))
                    .collect::<Result<Vec<_>>>()?;
                let detection_iou = iou_detection(&spans, &v.gold_spans());
                let alignment_iou = match mode {
                    Mode::Detection => f64::NAN,
                    Mode::Alignment => {
                        let aligned = p
                            .iter()
                            .zip(&spans)
                            .map(|(s, &span)| {
                                let word_index = s.word_index.ok_or_else(|| {
                                    Error::Validation(format!(
                                        "video {}: alignment mode needs word_index on every span",
                                        v.record.video_id
                                    ))
                                })?;
                                Ok(AlignedSpan { span, word_index })
                            })
                            .collect::<Result<Vec<_>>>()?;
                        iou_alignment(&aligned, &v.gold)
                    }
                };
                samples.push(SampleResult {
                    video_id: v.record.video_id.clone(),
                    article_id: v.record.article_id.clone(),
                    detection_iou,
                    alignment_iou,
                });
            }
            let report = EvalReport::from_samples(samples, Vec::new());
            let (name, mean) = match mode {
                Mode::Detection => ("detection", report.mean_detection_iou),
                Mode::Alignment => ("alignment", report.mean_alignment_iou),
            };
            let text = if settings.json {
                to_json(&serde_json::json!({
                    "mode": name,
                    "n_videos": report.samples.len(),
                    "mean_iou": mean,
                    "samples": report.samples.iter().map(|s| serde_json::json!({
                        "video_id": s.video_id,
                        "iou": if name == "detection" { s.detection_iou } else { s.alignment_iou },
                    })).collect::<Vec<_>>(),
                }))?
            } else {
                format!("mode\t{name}\nvideos\t{}\nmean IOU\t{mean:.4}\n", report.samples.len())
            };
            emit(&mut stdout, &text)
        }
        Command::Agreement {
            annotations,
            manifest,
            shuffle_trials,
        } => {
            let records = load_manifest(&manifest)?;
            let spans = group_by_annotator(&load_annotations(&annotations)?, &records)?;
            let observed = pairwise_agreement(&spans, &records)?;
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed());
            let shuffled = shuffled_agreement_baseline(&spans, &records, shuffle_trials, &mut rng)?;
            let text = if settings.json {
                to_json(&serde_json::json!({
                    "annotators": spans.keys().collect::<Vec<_>>(),
                    "videos": records.len(),
                    "agreement_iou": observed,
                    "shuffled_iou": shuffled,
                    "shuffle_trials": shuffle_trials,
                }))?
            } else {
                format!(
                    "annotators\t{}\nvideos\t{}\nagreement IOU\t{observed:.4}\nshuffled IOU\t{shuffled:.4}\n",
                    spans.len(),
                    records.len()
                )
            };
            emit(&mut stdout, &text)
        }
        Command::Stats {
            annotations,
            manifest,
            stoplist,
            categories,
            annotator,
        } => {
            let anns = select_annotator(load_annotations(&annotations)?, annotator.as_deref())?;
            let records = load_manifest(&manifest)?;
            let sentences: BTreeMap<String, String> =
                records.into_iter().map(|r| (r.video_id, r.sentence)).collect();
            let stop = match stoplist {
                Some(p) => std::fs::read_to_string(&p)
                    .map_err(|e| Error::io(&p, e))?
                    .lines()
                    .map(|l| l.trim().to_lowercase())
                    .filter(|l| !l.is_empty())
                    .collect(),
                None => default_stopwords(),
            };
            let all = fingerspelling_percent(&anns, &sentences, WordMode::AllWords, &stop)?;
            let non_stop = fingerspelling_percent(&anns, &sentences, WordMode::NonStopWords, &stop)?;
            let tally = match categories {
                Some(p) => Some(category_tally(&read_categories(&p)?)?),
                None => None,
            };
            let text = if settings.json {
                to_json(&serde_json::json!({
                    "annotations": anns.len(),
                    "percent_all_words": all,
                    "percent_non_stop_words": non_stop,
                    "categories": tally,
                }))?
            } else {
                let mut t = format!(
                    "annotations\t{}\n% of all words\t{all:.2}\n% of non-stop words\t{non_stop:.2}\n",
                    anns.len()
                );
                for c in tally.iter().flatten() {
                    t += &format!("{}\t{}\t{:.1}%\n", c.category, c.count, c.percent);
                }
                t
            };
            emit(&mut stdout, &text)
        }
    }
}

fn pred_span(span: FrameSpan, word_index: Option<usize>) -> PredSpan {
    PredSpan {
        start: span.start,
        end: span.end,
        score: None,
        word_index,
        word: None,
    }
}

fn read_categories(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    rdr.records()
        .map(|row| {
            let row = row.map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            if row.len() != 2 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: row.position().map_or(0, |p| p.line()),
                    message: format!("expected `word,category`, found {} fields", row.len()),
                });
            }
            Ok((row[0].trim().to_string(), row[1].trim().to_string()))
        })
        .collect()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
