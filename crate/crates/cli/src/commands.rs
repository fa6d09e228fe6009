use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jointrec::checkpoint::load_checkpoint;
use jointrec::corpus::{load_manifest, save_manifest, synth_generate, Dataset};
use jointrec::ensemble::{greedy_ensemble, plurality_vote, GoldLabels, GreedyResult, PredictionTable};
use jointrec::metrics::{evaluate_with, write_predictions_csv, EvalReport};
use jointrec::training::{train, TrainConfig};
use jointrec::Split;
use log::info;
use serde::Serialize;

use crate::config::{RunConfig, SchemaError};

/// Accepts either a directory holding `manifest.jsonl` or the manifest itself.
pub fn load_data(path: &Path) -> Result<Dataset> {
    let manifest = if path.is_dir() {
        path.join("manifest.jsonl")
    } else {
        path.to_path_buf()
    };
    let root = manifest.parent().unwrap_or(Path::new("."));
    Ok(load_manifest(&manifest, root)?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn synth(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    let Some(data) = &config.data else {
        return Err(SchemaError("synth needs a data section with a synth spec".into()).into());
    };
    let dataset = synth_generate(&data.synth, data.seed)?;
    let manifest = save_manifest(&dataset, out)?;
    info!("wrote {} samples to {}", dataset.len(), manifest.display());
    Ok(manifest)
}

pub fn train_to(cfg: &TrainConfig, dataset: &Dataset, out: &Path) -> Result<PathBuf> {
    let run = train(cfg, dataset)?;
    let path = run.save(out)?;
    info!("best checkpoint {} (val jrbm {:.4})", run.history.checkpoints[0].path, run.history.checkpoints[0].val_jrbm);
    Ok(path)
}

/// Evaluates a stored checkpoint, writing `report.json` and `preds.csv`.
pub fn eval(checkpoint: &Path, dataset: &Dataset, split: Split, out: &Path) -> Result<EvalReport> {
    let (model, _) = load_checkpoint(checkpoint)?;
    let (report, preds) = evaluate_with(&model, dataset, split)?;
    create_dir(out)?;
    fs::write(out.join("report.json"), report.to_json()).context("writing report.json")?;
    write_predictions_csv(&out.join("preds.csv"), dataset, &preds)?;
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct VoteMember {
    pub path: PathBuf,
    pub jrbm: f64,
}

#[derive(Debug, Serialize)]
pub struct VoteReport {
    pub split: Split,
    pub members: Vec<VoteMember>,
    pub voted_jrbm: f64,
    pub greedy: Option<GreedyResult>,
}

/// Plurality vote over prediction files, in the order given.
pub fn vote(inputs: &[PathBuf], dataset: &Dataset, split: Split, greedy: bool, out: &Path) -> Result<VoteReport> {
    if inputs.is_empty() {
        bail!("vote needs at least one prediction file");
    }
    let vocab = dataset.vocab();
    let tables = inputs
        .iter()
        .map(|p| PredictionTable::read_csv(p, vocab))
        .collect::<jointrec::Result<Vec<_>>>()?;
    let refs: Vec<&PredictionTable> = tables.iter().collect();
    let voted = plurality_vote(&refs)?;
    let gold = GoldLabels::from_split(dataset, split);
    let members = inputs
        .iter()
        .zip(&tables)
        .map(|(p, t)| Ok(VoteMember { path: p.clone(), jrbm: gold.score(t)? }))
        .collect::<Result<Vec<_>>>()?;
    let report = VoteReport {
        split,
        members,
        voted_jrbm: gold.score(&voted)?,
        greedy: if greedy { Some(greedy_ensemble(&tables, &gold)?) } else { None },
    };
    create_dir(out)?;
    voted.write_csv(&out.join("preds.csv"), vocab)?;
    write_json(&out.join("ensemble.json"), &report)?;
    Ok(report)
}

pub const ABLATION_ROWS: [&str; 4] = ["full", "w/o Data Aug", "w/o SWFC Loss", "w/o Modality Dropout"];

/// Directory name for an ablation row.
pub fn row_slug(name: &str) -> String {
    name.to_lowercase()
        .replace("w/o ", "no-")
        .replace(' ', "-")
}

/// Training settings for one ablation row: everything on, minus the named part.
pub fn row_config(base: &TrainConfig, name: &str) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.use_augmentation = name != "w/o Data Aug";
    cfg.use_swfc = name != "w/o SWFC Loss";
    cfg.use_modality_dropout = name != "w/o Modality Dropout";
    cfg
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub dir: String,
    pub jrbm: Option<f64>,
    pub f1_emotion: Option<f64>,
    pub f1_intent: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct Ablation {
    pub seed: u64,
    pub split: Split,
    pub rows: Vec<AblationRow>,
}

impl Ablation {
    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(7);
        let mut out = format!("{:<width$}  {:>8}  {:>10}  {:>9}\n", "variant", "jrbm", "f1_emotion", "f1_intent");
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>8}  {:>10}  {:>9}",
                r.name,
                cell(r.jrbm),
                cell(r.f1_emotion),
                cell(r.f1_intent)
            ));
            if let Some(e) = &r.error {
                out.push_str(&format!("  error: {e}"));
            }
            out.push('\n');
        }
        out
    }
}

fn run_row(cfg: &TrainConfig, dataset: &Dataset, split: Split, dir: &Path) -> Result<(EvalReport, usize)> {
    let history_path = train_to(cfg, dataset, dir)?;
    let history = jointrec::training::TrainHistory::from_json(&fs::read_to_string(&history_path)?)?;
    let best = &history.checkpoints[0];
    let report = eval(&dir.join(&best.path), dataset, split, dir)?;
    Ok((report, best.epoch))
}

/// Trains and evaluates every ablation row with the same seed. A failing row
/// is recorded and the remaining rows still run; the first failure is
/// returned after the table has been written.
pub fn ablate(config: &RunConfig, dataset: &Dataset, split: Split, out: &Path) -> Result<(Ablation, Option<anyhow::Error>)> {
    let base = config.train_config();
    create_dir(out)?;
    let mut rows = Vec::new();
    let mut first_error = None;
    for name in ABLATION_ROWS {
        let slug = row_slug(name);
        info!("ablation row {name}");
        let mut row = AblationRow {
            name: name.to_string(),
            dir: slug.clone(),
            jrbm: None,
            f1_emotion: None,
            f1_intent: None,
            best_epoch: None,
            error: None,
        };
        match run_row(&row_config(&base, name), dataset, split, &out.join(&slug)) {
            Ok((report, epoch)) => {
                row.jrbm = Some(report.jrbm);
                row.f1_emotion = Some(report.f1_emotion);
                row.f1_intent = Some(report.f1_intent);
                row.best_epoch = Some(epoch);
            }
            Err(e) => {
                row.error = Some(format!("{e:#}"));
                first_error.get_or_insert(e);
            }
        }
        rows.push(row);
    }
    let ablation = Ablation {
        seed: base.seed,
        split,
        rows,
    };
    write_json(&out.join("ablation.json"), &ablation)?;
    fs::write(out.join("ablation.txt"), ablation.table()).context("writing ablation.txt")?;
    Ok((ablation, first_error))
}
