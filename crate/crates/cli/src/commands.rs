use std::fs;
use std::path::{Path, PathBuf};

use oam_core::analytics::{
    consonant_matrix, cov_compare, fit_forward_linear, gamma_table, loso_evaluate, pearson,
    CorrelationResult, SelectionConfig,
};
use oam_core::corpus::{
    load_alignment, load_manifest, load_ratings, load_wav, Manifest, ManifestRow, PhoneInventory,
};
use oam_core::features::{MelConfig, MelFrontEnd};
use oam_core::network::{
    evaluate, load_model, sweep_window, train, Architecture, Batching, Example, Model, ModelMeta,
    TrainConfig,
};
use oam_core::oam::{
    aggregate, examples_from_segments, load_scores, reports_to_csv, score_corpus, scores_to_csv,
    OamScore, SpeakerReport,
};
use oam_core::segmenter::{
    cut_segment, find_vowel_onsets, jitter_onsets, segment_corpus, WindowMs,
};
use oam_core::synth::{write_synthetic_corpus, SynthCorpusConfig};

use crate::error::CliError;
use crate::output::Outputs;
use crate::{Cli, Command, CorpusArgs, TrainArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train {
            manifest,
            out_dir,
            window_ms,
            corpus,
            train,
        } => cmd_train(manifest, out_dir, *window_ms, corpus, train, cli.seed),
        Command::Eval {
            manifest,
            model,
            out_dir,
            tier,
        } => cmd_eval(manifest, model, out_dir, tier),
        Command::Score {
            manifest,
            model,
            out_dir,
            tier,
        } => cmd_score(manifest, model, out_dir, tier),
        Command::Correlate {
            scores,
            ratings,
            out_dir,
        } => cmd_correlate(scores, ratings, out_dir),
        Command::Fit {
            scores,
            ratings,
            out_dir,
            loso,
            inventory,
            min_improvement,
            max_features,
            ridge,
        } => {
            let config = SelectionConfig {
                min_improvement: *min_improvement,
                max_features: *max_features,
                ridge: *ridge,
            };
            cmd_fit(
                scores,
                ratings,
                out_dir,
                *loso,
                inventory.as_deref(),
                &config,
            )
        }
        Command::Sweep {
            train_manifest,
            test_manifest,
            out_dir,
            from,
            to,
            step,
            corpus,
            train,
        } => cmd_sweep(
            train_manifest,
            test_manifest,
            out_dir,
            (*from, *to, *step),
            corpus,
            train,
            cli.seed,
        ),
        Command::Saliency {
            model,
            wav,
            alignment,
            out_dir,
            onset_index,
            class,
            tier,
        } => cmd_saliency(
            model,
            wav,
            alignment,
            out_dir,
            *onset_index,
            class.as_deref(),
            tier,
        ),
        Command::Cov {
            scores,
            compare,
            out_dir,
        } => cmd_cov(scores, compare.as_deref(), out_dir),
        Command::Jitter {
            manifest,
            sigma_ms,
            out_dir,
            corpus,
        } => cmd_jitter(manifest, *sigma_ms, out_dir, corpus, cli.seed),
        Command::Synth {
            out_dir,
            utterances,
            speakers,
            phones,
        } => cmd_synth(out_dir, *utterances, *speakers, *phones, cli.seed),
    }
}

fn num(v: impl Into<f64>) -> String {
    oam_core::format_f64(v.into())
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let internal = |e: csv::Error| CliError::Internal(e.to_string());
    w.write_record(header).map_err(internal)?;
    for r in rows {
        w.write_record(r).map_err(internal)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))
}

/// CV windows accepted on the command line: 60 to 200 ms in 20 ms steps.
fn cli_window(ms: u32) -> Result<WindowMs, CliError> {
    if !(60..=200).contains(&ms) || !ms.is_multiple_of(20) {
        return Err(CliError::Usage(format!(
            "window of {ms} ms not in 60..=200 step 20"
        )));
    }
    Ok(WindowMs::new(ms)?)
}

fn inventory(path: Option<&Path>) -> Result<PhoneInventory, CliError> {
    match path {
        Some(p) => Ok(PhoneInventory::load(p)?),
        None => Ok(PhoneInventory::default()),
    }
}

fn train_config(args: &TrainArgs, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        batching: match args.batch_segments {
            Some(n) => Batching::Segments(n),
            None => Batching::Sentences(args.batch_sentences),
        },
        seed,
        ..TrainConfig::default()
    }
}

fn corpus_examples(
    manifest: &Manifest,
    inventory: &PhoneInventory,
    window: WindowMs,
    tier: &str,
    front_end: &MelFrontEnd,
) -> Result<Vec<Example>, CliError> {
    let segments = segment_corpus(manifest, inventory, window, tier)?;
    Ok(examples_from_segments(&segments, front_end))
}

fn correlation_rows(c: &CorrelationResult) -> Vec<Vec<String>> {
    vec![vec![
        c.n.to_string(),
        num(c.r),
        num(c.t_stat),
        num(c.p_value),
    ]]
}

const CORRELATION_HEADER: [&str; 4] = ["n", "r", "t_stat", "p_value"];

fn cmd_train(
    manifest: &Path,
    out_dir: &Path,
    window_ms: u32,
    corpus: &CorpusArgs,
    args: &TrainArgs,
    seed: u64,
) -> Result<(), CliError> {
    let window = cli_window(window_ms)?;
    let inventory = inventory(corpus.inventory.as_deref())?;
    let config = train_config(args, seed);
    config.validate()?;
    let manifest = load_manifest(manifest)?;
    let mel = MelConfig::default();
    let front_end = MelFrontEnd::new(mel.clone())?;
    let examples = corpus_examples(&manifest, &inventory, window, &corpus.tier, &front_end)?;
    let arch = Architecture::standard(mel.n_mels, window.frames(), inventory.len());
    let (network, log) = train(arch, &examples, &config)?;
    let model = Model::new(
        network,
        ModelMeta {
            inventory,
            window_ms: window,
            mel,
        },
    )?;
    let log_rows: Vec<Vec<String>> = log
        .iter()
        .map(|e| vec![e.epoch.to_string(), num(e.loss), num(e.train_accuracy)])
        .collect();
    let mut out = Outputs::default();
    out.add(out_dir.join("model.cvoam"), model.to_bytes()?);
    out.add(
        out_dir.join("train_log.csv"),
        csv_bytes(&["epoch", "loss", "train_accuracy"], &log_rows)?,
    );
    out.commit()
}

fn cmd_eval(manifest: &Path, model: &Path, out_dir: &Path, tier: &str) -> Result<(), CliError> {
    let model = load_model(model)?;
    let manifest = load_manifest(manifest)?;
    let meta = model.meta();
    let front_end = MelFrontEnd::new(meta.mel.clone())?;
    let examples = corpus_examples(&manifest, &meta.inventory, meta.window_ms, tier, &front_end)?;
    let eval = evaluate(model.network(), &examples)?;
    let consonants = meta.inventory.consonants();
    let mut header = vec!["true"];
    header.extend(consonants.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = eval
        .confusion
        .iter()
        .zip(consonants)
        .map(|(row, c)| {
            std::iter::once(c.clone())
                .chain(row.iter().map(usize::to_string))
                .collect()
        })
        .collect();
    let correct: usize = (0..consonants.len()).map(|i| eval.confusion[i][i]).sum();
    let mut out = Outputs::default();
    out.add(out_dir.join("confusion.csv"), csv_bytes(&header, &rows)?);
    out.add(
        out_dir.join("eval.csv"),
        csv_bytes(
            &["accuracy", "correct", "total"],
            &[vec![
                num(eval.accuracy),
                correct.to_string(),
                examples.len().to_string(),
            ]],
        )?,
    );
    out.commit()
}

fn cmd_score(manifest: &Path, model: &Path, out_dir: &Path, tier: &str) -> Result<(), CliError> {
    let model = load_model(model)?;
    let manifest = load_manifest(manifest)?;
    let scores = score_corpus(&model, &manifest, tier)?;
    let reports = if scores.is_empty() {
        Vec::new()
    } else {
        aggregate(&scores)?
    };
    let mut out = Outputs::default();
    out.add(out_dir.join("scores.csv"), scores_to_csv(&scores)?);
    out.add(
        out_dir.join("speakers.csv"),
        reports_to_csv(&reports, &model.meta().inventory)?,
    );
    out.commit()
}

/// Speaker reports joined with ratings, sorted by speaker id.
fn reports_with_ratings(
    scores: &Path,
    ratings: &Path,
) -> Result<(Vec<SpeakerReport>, Vec<f64>), CliError> {
    let scores: Vec<OamScore> = load_scores(scores)?;
    let ratings = load_ratings(ratings)?;
    let reports = aggregate(&scores)?;
    let (kept, values): (Vec<SpeakerReport>, Vec<f64>) = reports
        .into_iter()
        .filter_map(|r| ratings.get(&r.speaker_id).map(|v| (r, v)))
        .unzip();
    if kept.is_empty() {
        return Err(CliError::Data(
            "no speaker has both scores and a rating".into(),
        ));
    }
    Ok((kept, values))
}

fn cmd_correlate(scores: &Path, ratings: &Path, out_dir: &Path) -> Result<(), CliError> {
    let (reports, values) = reports_with_ratings(scores, ratings)?;
    let oam: Vec<f64> = reports.iter().map(|r| r.speaker_oam).collect();
    let corr = pearson(&oam, &values)?;
    let scatter: Vec<Vec<String>> = reports
        .iter()
        .zip(&values)
        .map(|(r, v)| vec![r.speaker_id.clone(), num(r.speaker_oam), num(*v)])
        .collect();
    let mut out = Outputs::default();
    out.add(
        out_dir.join("correlation.csv"),
        csv_bytes(&CORRELATION_HEADER, &correlation_rows(&corr))?,
    );
    out.add(
        out_dir.join("scatter.csv"),
        csv_bytes(&["speaker_id", "speaker_oam", "rating"], &scatter)?,
    );
    out.commit()
}

fn cmd_fit(
    scores: &Path,
    ratings: &Path,
    out_dir: &Path,
    loso: bool,
    inventory_path: Option<&Path>,
    config: &SelectionConfig,
) -> Result<(), CliError> {
    let inventory = inventory(inventory_path)?;
    let (reports, values) = reports_with_ratings(scores, ratings)?;
    let (ids, features) = consonant_matrix(&reports, &inventory);
    let model = fit_forward_linear(&features, &values, config)?;
    let consonants = inventory.consonants();
    let trace: Vec<Vec<String>> = model
        .trace
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                (i + 1).to_string(),
                consonants[s.feature].clone(),
                num(s.criterion),
            ]
        })
        .collect();
    let mut coefficients = vec![vec!["intercept".to_string(), num(model.intercept)]];
    coefficients.extend(
        model
            .selected
            .iter()
            .zip(&model.weights)
            .map(|(&f, w)| vec![consonants[f].clone(), num(*w)]),
    );
    let mut out = Outputs::default();
    out.add(
        out_dir.join("selection.csv"),
        csv_bytes(&["step", "consonant", "loo_r"], &trace)?,
    );
    out.add(
        out_dir.join("coefficients.csv"),
        csv_bytes(&["term", "weight"], &coefficients)?,
    );
    if loso {
        let res = loso_evaluate(&features, &values, config)?;
        let rows: Vec<Vec<String>> = ids
            .iter()
            .zip(&values)
            .zip(&res.predictions)
            .map(|((id, r), p)| vec![id.clone(), num(*r), num(*p)])
            .collect();
        out.add(
            out_dir.join("predictions.csv"),
            csv_bytes(&["speaker_id", "rating", "predicted"], &rows)?,
        );
        out.add(
            out_dir.join("loso_correlation.csv"),
            csv_bytes(&CORRELATION_HEADER, &correlation_rows(&res.correlation))?,
        );
    }
    out.commit()
}

fn cmd_sweep(
    train_manifest: &Path,
    test_manifest: &Path,
    out_dir: &Path,
    (from, to, step): (u32, u32, u32),
    corpus: &CorpusArgs,
    args: &TrainArgs,
    seed: u64,
) -> Result<(), CliError> {
    if step == 0 || from > to {
        return Err(CliError::Usage(
            "sweep needs from <= to and a positive step".into(),
        ));
    }
    let windows = (from..=to)
        .step_by(step as usize)
        .map(cli_window)
        .collect::<Result<Vec<_>, _>>()?;
    let inventory = inventory(corpus.inventory.as_deref())?;
    let config = train_config(args, seed);
    config.validate()?;
    let train_m = load_manifest(train_manifest)?;
    let test_m = load_manifest(test_manifest)?;
    let mel = MelConfig::default();
    let front_end = MelFrontEnd::new(mel.clone())?;
    let template = Architecture::standard(mel.n_mels, WindowMs::DEFAULT.frames(), inventory.len());
    let rows = sweep_window(&template, &config, &windows, |w| -> Result<_, CliError> {
        Ok((
            corpus_examples(&train_m, &inventory, w, &corpus.tier, &front_end)?,
            corpus_examples(&test_m, &inventory, w, &corpus.tier, &front_end)?,
        ))
    })?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.window_ms.to_string(), num(r.accuracy)])
        .collect();
    let mut out = Outputs::default();
    out.add(
        out_dir.join("sweep.csv"),
        csv_bytes(&["window_ms", "accuracy"], &table)?,
    );
    out.commit()
}

fn cmd_saliency(
    model: &Path,
    wav: &Path,
    alignment: &Path,
    out_dir: &Path,
    onset_index: usize,
    class: Option<&str>,
    tier: &str,
) -> Result<(), CliError> {
    let model = load_model(model)?;
    let meta = model.meta();
    let clip = load_wav(wav)?;
    let track = load_alignment(alignment, tier)?;
    let onsets = find_vowel_onsets(&track, &meta.inventory);
    let onset = onsets.get(onset_index).ok_or_else(|| {
        CliError::Data(format!(
            "onset index {onset_index} out of range ({} CV onsets)",
            onsets.len()
        ))
    })?;
    let class_index = match class {
        None => onset.consonant_index,
        Some(c) => meta
            .inventory
            .consonant_index(&oam_core::corpus::normalize_label(c))
            .ok_or_else(|| CliError::Usage(format!("{c:?} is not an inventory consonant")))?,
    };
    let segment = cut_segment(&clip, onset, meta.window_ms, track.utterance_id(), "");
    let spec = MelFrontEnd::new(meta.mel.clone())?.melspec(&segment.samples);
    let input: Vec<f32> = spec.data().iter().map(|&v| v as f32).collect();
    let map = model.network().saliency(&input, class_index)?;
    let mut out = Outputs::default();
    out.add(
        out_dir.join("saliency.csv"),
        oam_core::features::matrix_to_csv(&map.data, map.height, map.width),
    );
    out.add(out_dir.join("mel.csv"), spec.to_csv());
    out.commit()
}

fn cmd_cov(scores: &Path, compare: Option<&Path>, out_dir: &Path) -> Result<(), CliError> {
    let a = load_scores(scores)?;
    let table: Vec<Vec<String>> = gamma_table(&a)?
        .into_iter()
        .map(|c| {
            vec![
                c.speaker_id,
                c.consonant,
                num(c.gamma),
                c.instances.to_string(),
            ]
        })
        .collect();
    let mut out = Outputs::default();
    out.add(
        out_dir.join("gamma.csv"),
        csv_bytes(&["speaker_id", "consonant", "gamma", "instances"], &table)?,
    );
    if let Some(b) = compare {
        let b = load_scores(b)?;
        let cmp = cov_compare(&a, &b)?;
        let pairs: Vec<Vec<String>> = cmp
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.speaker_id.clone(),
                    c.consonant.clone(),
                    num(c.gamma_a),
                    num(c.gamma_b),
                ]
            })
            .collect();
        out.add(
            out_dir.join("gamma_pairs.csv"),
            csv_bytes(&["speaker_id", "consonant", "gamma_a", "gamma_b"], &pairs)?,
        );
        out.add(
            out_dir.join("ttest.csv"),
            csv_bytes(
                &["n", "t", "df", "p"],
                &[vec![
                    cmp.cells.len().to_string(),
                    num(cmp.ttest.t),
                    cmp.ttest.df.to_string(),
                    num(cmp.ttest.p),
                ]],
            )?,
        );
    }
    out.commit()
}

fn cmd_jitter(
    manifest_path: &Path,
    sigma_ms: f64,
    out_dir: &Path,
    corpus: &CorpusArgs,
    seed: u64,
) -> Result<(), CliError> {
    if !(sigma_ms >= 0.0 && sigma_ms.is_finite()) {
        return Err(CliError::Usage(
            "--sigma-ms must be a non-negative number".into(),
        ));
    }
    let inventory = inventory(corpus.inventory.as_deref())?;
    let manifest = load_manifest(manifest_path)?;
    let mut out = Outputs::default();
    let mut rows = Vec::with_capacity(manifest.len());
    for (i, row) in manifest.rows().iter().enumerate() {
        let track = load_alignment(&row.alignment_path, &corpus.tier)
            .map_err(|e| e.in_utterance(&row.utterance_id))?;
        let jittered = jitter_onsets(&track, &inventory, sigma_ms, seed.wrapping_add(i as u64));
        let mut text = String::from("phone,start_s,end_s\n");
        for iv in jittered.intervals() {
            text.push_str(&format!("{},{},{}\n", iv.label, iv.start_s, iv.end_s));
        }
        let name = format!("{}.csv", row.utterance_id);
        out.add(out_dir.join(&name), text);
        let audio_path = fs::canonicalize(&row.audio_path)
            .map_err(|e| CliError::Data(format!("{}: {e}", row.audio_path.display())))?;
        rows.push(ManifestRow {
            audio_path,
            alignment_path: PathBuf::from(name),
            ..row.clone()
        });
    }
    out.add(out_dir.join("manifest.csv"), Manifest::csv_string(&rows));
    out.commit()
}

fn cmd_synth(
    out_dir: &Path,
    utterances: usize,
    speakers: usize,
    phones: usize,
    seed: u64,
) -> Result<(), CliError> {
    if utterances == 0 || speakers == 0 || phones == 0 {
        return Err(CliError::Usage("counts must be positive".into()));
    }
    if out_dir.exists() {
        return Err(CliError::Usage(format!(
            "{} already exists",
            out_dir.display()
        )));
    }
    let mut staging_name = out_dir.file_name().unwrap_or_default().to_os_string();
    staging_name.push(format!(".partial{}", std::process::id()));
    let staging = out_dir.with_file_name(staging_name);
    let config = SynthCorpusConfig {
        utterances,
        speakers,
        phones,
        seed,
    };
    let result = write_synthetic_corpus(&staging, &config, &PhoneInventory::default())
        .map_err(CliError::from)
        .and_then(|_| {
            fs::rename(&staging, out_dir)
                .map_err(|e| CliError::Internal(format!("{}: {e}", out_dir.display())))
        });
    if result.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}
