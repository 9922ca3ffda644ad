//! Command implementations. Each returns a JSON summary and writes its
//! artifacts with the run config embedded.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use docsynth_core::checkpoint::Checkpoint;
use docsynth_core::fixtures;
use docsynth_core::sampler::{GenerationStats, Sampler};
use docsynth_core::schema::derive_schema;
use docsynth_core::tokenizer::{Tokenizer, TokenizerConfig};
use docsynth_core::train::{split_holdout, train, EpochLog, TrainOutcome};
use docsynth_eval::{evaluate, privacy_dcr, MetricReport};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::io::{read_jsonl, write_json, write_jsonl, write_text};

/// Smallest corpus the privacy protocol will split.
pub const PRIVACY_MIN_RECORDS: usize = 200;

fn config_json(cfg: &RunConfig) -> Value {
    serde_json::to_value(cfg).unwrap_or(Value::Null)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref().ok_or_else(|| CliError::Config(format!("missing {what} path")))
}

pub fn derive(cfg: &RunConfig) -> Result<Value, CliError> {
    cfg.check_paths()?;
    let corpus = read_jsonl(required(&cfg.paths.train, "train")?)?;
    let out = cfg.output_dir()?;
    let tok = Tokenizer::fit(&corpus, TokenizerConfig { tau: cfg.tau, max_array_len: cfg.model.max_array_len })?;
    let schema = derive_schema(&corpus, cfg.tau)?;
    let config = config_json(cfg);
    write_json(&out.join("schema.json"), &json!({"config": config, "schema": schema.to_json_schema()}))?;
    write_json(&out.join("vocab.json"), &json!({"config": config, "vocab": tok.vocab}))?;
    write_json(&out.join("scalers.json"), &json!({"config": config, "scalers": tok.scalers}))?;
    Ok(json!({
        "records": corpus.len(),
        "key_tokens": tok.vocab.num_keys(),
        "value_tokens": tok.vocab.num_values(),
        "vocab_size": tok.vocab.size(),
        "scaled_keys": tok.scalers.len(),
        "schema_paths": schema.path_count(),
    }))
}

/// Training and validation corpora: the validation file if configured,
/// otherwise a seeded holdout from the training corpus.
pub fn load_train_valid(cfg: &RunConfig) -> Result<(Vec<Value>, Vec<Value>), CliError> {
    let corpus = read_jsonl(required(&cfg.paths.train, "train")?)?;
    match &cfg.paths.valid {
        Some(p) => Ok((corpus, read_jsonl(p)?)),
        None => Ok(split_holdout(&corpus, cfg.train.valid_fraction, cfg.seed()?)),
    }
}

/// Trains on in-memory corpora; writes `epochs.csv` into `out` when given.
pub fn train_corpus(cfg: &RunConfig, train_set: &[Value], valid: &[Value], out: Option<&Path>) -> Result<TrainOutcome, CliError> {
    let tc = cfg.train_config()?;
    let mut csv = match out {
        Some(dir) => {
            let p = dir.join("epochs.csv");
            let mut f = OpenOptions::new().create(true).write(true).truncate(true).open(&p).map_err(|e| CliError::io(&p, e))?;
            writeln!(f, "{}", EpochLog::CSV_HEADER).map_err(|e| CliError::io(&p, e))?;
            Some((p, f))
        }
        None => None,
    };
    let outcome = train(train_set, valid, cfg.tau, cfg.model.to_model_config(), &tc, config_json(cfg), |e| {
        if let Some((_, f)) = csv.as_mut() {
            let _ = writeln!(f, "{}", e.csv_row());
        }
    })?;
    if let Some((p, f)) = csv.as_mut() {
        f.flush().map_err(|e| CliError::io(p, e))?;
    }
    Ok(outcome)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<Value, CliError> {
    cfg.check_paths()?;
    let out = cfg.output_dir()?;
    let (tr, va) = load_train_valid(cfg)?;
    let t = Instant::now();
    let outcome = train_corpus(cfg, &tr, &va, Some(&out))?;
    let path = out.join("checkpoint.bin");
    outcome.checkpoint.save(&path)?;
    let last = outcome.log.last();
    let summary = json!({
        "checkpoint": path.display().to_string(),
        "train_records": tr.len(),
        "valid_records": va.len(),
        "valid_skipped": outcome.valid_skipped,
        "epochs": outcome.log.len(),
        "final_train_loss": last.map(|l| l.train_loss),
        "final_valid_loss": last.and_then(|l| l.valid_loss),
        "parameters": outcome.checkpoint.params.len(),
        "seconds": t.elapsed().as_secs_f64(),
    });
    write_json(&out.join("train_summary.json"), &json!({"config": config_json(cfg), "summary": summary}))?;
    Ok(summary)
}

pub fn generate_records(cfg: &RunConfig, ckpt: &Checkpoint, n: usize, seed: u64) -> Result<(Vec<Value>, GenerationStats), CliError> {
    Ok(Sampler::new(ckpt).generate(&cfg.generation(n, seed))?)
}

/// Writes records to `out` (plus a `.stats.json` sidecar) or returns them
/// as JSONL text for stdout.
pub fn generate_cmd(cfg: &RunConfig, checkpoint: &Path, out: Option<&Path>) -> Result<(Option<String>, Value), CliError> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let seed = cfg.seed()?;
    let (records, stats) = generate_records(cfg, &ckpt, cfg.generate.n, seed)?;
    let sidecar = json!({
        "config": config_json(cfg),
        "checkpoint": checkpoint.display().to_string(),
        "training_config": ckpt.metadata,
        "stats": stats,
    });
    match out {
        Some(p) => {
            write_jsonl(p, &records)?;
            let mut s = p.as_os_str().to_owned();
            s.push(".stats.json");
            write_json(Path::new(&s), &sidecar)?;
            Ok((None, sidecar))
        }
        None => Ok((Some(crate::io::jsonl_string(&records)), sidecar)),
    }
}

/// Mean and population standard deviation of every numeric score that all
/// replicates report.
pub fn aggregate(reports: &[MetricReport]) -> Value {
    let values: Vec<Value> = reports.iter().map(|r| serde_json::to_value(r).unwrap_or(Value::Null)).collect();
    let mut out = Map::new();
    for section in ["fidelity", "utility", "detection", "privacy"] {
        let Some(Value::Object(first)) = values.first().map(|v| &v[section]) else { continue };
        let mut sec = Map::new();
        for (k, v) in first {
            if !v.is_number() {
                continue;
            }
            let xs: Vec<f64> = values.iter().filter_map(|r| r[section][k].as_f64()).collect();
            if xs.len() != values.len() {
                continue;
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            sec.insert(k.clone(), json!({"mean": mean, "std": std}));
        }
        out.insert(section.to_string(), Value::Object(sec));
    }
    Value::Object(out)
}

fn columns_csv(r: &MetricReport) -> String {
    let mut s = String::from("column,presence,dtype,value,score,undersampled\n");
    for c in &r.columns {
        let name = if c.column.contains([',', '"']) { format!("\"{}\"", c.column.replace('"', "\"\"")) } else { c.column.clone() };
        s.push_str(&format!("{name},{},{},{},{},{}\n", c.presence, c.dtype, c.value, c.score, c.undersampled));
    }
    s
}

/// Evaluates each synthetic set against the configured train/test corpora.
/// With a checkpoint and no synthetic files, generates `eval.replicates`
/// sets the size of the test corpus.
pub fn evaluate_cmd(cfg: &RunConfig, synth_paths: &[PathBuf], checkpoint: Option<&Path>) -> Result<Value, CliError> {
    cfg.check_paths()?;
    let real_train = read_jsonl(required(&cfg.paths.train, "train")?)?;
    let real_test = read_jsonl(required(&cfg.paths.test, "test")?)?;
    let seed = cfg.seed()?;
    let mut synth_sets = Vec::new();
    for p in synth_paths {
        synth_sets.push(read_jsonl(p)?);
    }
    if synth_sets.is_empty() {
        let ckpt_path = checkpoint.ok_or_else(|| CliError::Config("give synthetic files or a checkpoint".into()))?;
        let ckpt = Checkpoint::load(ckpt_path)?;
        for k in 0..cfg.eval.replicates.max(1) {
            synth_sets.push(generate_records(cfg, &ckpt, real_test.len(), seed + k as u64)?.0);
        }
    }
    let opts = cfg.eval_options()?;
    let mut reports = Vec::new();
    for synth in &synth_sets {
        reports.push(evaluate(&real_train, &real_test, synth, &opts)?);
    }
    let doc = json!({
        "config": config_json(cfg),
        "summary": aggregate(&reports),
        "replicates": reports,
    });
    if let Some(out) = &cfg.paths.output {
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        write_json(&out.join("evaluation.json"), &doc)?;
        write_text(&out.join("columns.csv"), &columns_csv(&reports[0]))?;
    }
    Ok(doc)
}

/// Splits `corpus` into two equal halves with a seeded shuffle.
pub fn split_halves(corpus: &[Value], seed: u64) -> (Vec<Value>, Vec<Value>) {
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let h = corpus.len() / 2;
    let a = idx[..h].iter().map(|&i| corpus[i].clone()).collect();
    let b = idx[h..2 * h].iter().map(|&i| corpus[i].clone()).collect();
    (a, b)
}

/// Split 50/50, train on half A, generate |A| records, compare distances to
/// A and B. `copy_train` skips the model and uses A itself.
pub fn privacy_cmd(cfg: &RunConfig, copy_train: bool) -> Result<Value, CliError> {
    cfg.check_paths()?;
    let corpus = read_jsonl(required(&cfg.paths.train, "train")?)?;
    if corpus.len() < PRIVACY_MIN_RECORDS {
        return Err(CliError::TooSmall { found: corpus.len(), needed: PRIVACY_MIN_RECORDS });
    }
    let seed = cfg.seed()?;
    let (a, b) = split_halves(&corpus, seed);
    let synth = if copy_train {
        a.clone()
    } else {
        let (tr, va) = split_holdout(&a, cfg.train.valid_fraction, seed);
        let outcome = train_corpus(cfg, &tr, &va, cfg.paths.output.as_deref())?;
        generate_records(cfg, &outcome.checkpoint, a.len(), seed)?.0
    };
    let report = privacy_dcr(&synth, &a, &b)?;
    let doc = json!({"config": config_json(cfg), "half_size": a.len(), "copied": copy_train, "privacy": report});
    if let Some(out) = &cfg.paths.output {
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        write_json(&out.join("privacy.json"), &doc)?;
    }
    Ok(doc)
}

pub fn synth_fixtures(out: &Path, n: usize, seed: u64) -> Result<Value, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path_data = fixtures::pathological(n, seed);
    write_jsonl(&out.join("pathological.jsonl"), &path_data)?;
    write_jsonl(&out.join("movies.jsonl"), &fixtures::movies())?;
    Ok(json!({"pathological": path_data.len(), "movies": 2, "seed": seed}))
}
