//! Plurality voting over prediction tables and greedy ensemble selection.
//!
//! Voting is per sample and per task: the most frequent label wins, and any
//! tie for the top count falls back to the first table's label. Table order
//! therefore encodes precedence, best model first.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelVocabulary};
use crate::error::{Error, Result};
use crate::metrics::{confusion, jrbm, macro_f1, Prediction};
use crate::types::{Split, Task};

/// One model's `(emotion, intent)` predictions keyed by sample id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionTable {
    pub model_id: String,
    rows: Vec<(String, usize, usize)>,
    index: HashMap<String, usize>,
}

impl PredictionTable {
    pub fn new(model_id: impl Into<String>, rows: Vec<(String, usize, usize)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, (id, _, _)) in rows.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        Ok(Self {
            model_id: model_id.into(),
            rows,
            index,
        })
    }

    pub fn from_predictions(model_id: impl Into<String>, preds: &[Prediction]) -> Result<Self> {
        Self::new(model_id, preds.iter().map(|p| (p.id.clone(), p.emotion, p.intent)).collect())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows in insertion order.
    pub fn rows(&self) -> &[(String, usize, usize)] {
        &self.rows
    }

    pub fn get(&self, id: &str) -> Option<(usize, usize)> {
        self.index.get(id).map(|&i| (self.rows[i].1, self.rows[i].2))
    }

    pub fn to_predictions(&self) -> Vec<Prediction> {
        self.rows
            .iter()
            .map(|(id, e, i)| Prediction {
                id: id.clone(),
                emotion: *e,
                intent: *i,
            })
            .collect()
    }

    /// Reads `id,emotion,intent` rows with label names resolved through `vocab`.
    pub fn read_csv(path: &Path, vocab: &LabelVocabulary) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |reason: String| Error::BadPredictions {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "id,emotion,intent" => {}
            other => return Err(bad(format!("expected header id,emotion,intent, found {other:?}"))),
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [id, e, i] = fields[..] else {
                return Err(bad(format!("row {} has {} fields", n + 2, fields.len())));
            };
            let resolve = |task: Task, name: &str| {
                vocab
                    .index_of(task, name)
                    .ok_or_else(|| bad(format!("row {}: unknown {task} label {name:?}", n + 2)))
            };
            rows.push((id.to_string(), resolve(Task::Emotion, e)?, resolve(Task::Intent, i)?));
        }
        let model_id = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        Self::new(model_id, rows)
    }

    pub fn write_csv(&self, path: &Path, vocab: &LabelVocabulary) -> Result<()> {
        let mut out = String::from("id,emotion,intent\n");
        for (id, e, i) in &self.rows {
            out.push_str(&format!("{id},{},{}\n", vocab.name_of(Task::Emotion, *e), vocab.name_of(Task::Intent, *i)));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Plurality label among `votes`; ties for the top count go to `votes[0]`.
pub fn plurality(votes: &[usize]) -> usize {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for &v in votes {
        match counts.iter_mut().find(|(label, _)| *label == v) {
            Some((_, c)) => *c += 1,
            None => counts.push((v, 1)),
        }
    }
    let top = counts.iter().map(|&(_, c)| c).max().unwrap_or(0);
    let mut leaders = counts.iter().filter(|&&(_, c)| c == top);
    match (leaders.next(), leaders.next()) {
        (Some(&(label, _)), None) => label,
        _ => votes[0],
    }
}

/// Votes each task independently. Output rows follow the first table's order.
pub fn plurality_vote(tables: &[&PredictionTable]) -> Result<PredictionTable> {
    let first = tables.first().ok_or_else(|| Error::IdSetMismatch("no tables to vote".into()))?;
    for t in &tables[1..] {
        if t.len() != first.len() || first.rows.iter().any(|(id, _, _)| !t.index.contains_key(id)) {
            return Err(Error::IdSetMismatch(format!(
                "{} and {} cover different samples",
                first.model_id, t.model_id
            )));
        }
    }
    let rows = first
        .rows
        .iter()
        .map(|(id, _, _)| {
            let votes: Vec<(usize, usize)> = tables.iter().map(|t| t.get(id).expect("id sets checked")).collect();
            let e: Vec<usize> = votes.iter().map(|v| v.0).collect();
            let i: Vec<usize> = votes.iter().map(|v| v.1).collect();
            (id.clone(), plurality(&e), plurality(&i))
        })
        .collect();
    let name = tables.iter().map(|t| t.model_id.as_str()).collect::<Vec<_>>().join("+");
    PredictionTable::new(format!("vote({name})"), rows)
}

/// Gold labels for scoring tables.
#[derive(Debug, Clone)]
pub struct GoldLabels {
    labels: HashMap<String, (usize, usize)>,
    num_emotion: usize,
    num_intent: usize,
}

impl GoldLabels {
    pub fn new(labels: HashMap<String, (usize, usize)>, num_emotion: usize, num_intent: usize) -> Self {
        Self {
            labels,
            num_emotion,
            num_intent,
        }
    }

    pub fn from_split(dataset: &Dataset, split: Split) -> Self {
        let labels = dataset.split_samples(split).map(|s| (s.id.clone(), (s.emotion, s.intent))).collect();
        Self::new(labels, dataset.vocab().num_classes(Task::Emotion), dataset.vocab().num_classes(Task::Intent))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// JRBM of `table` against these labels. Every gold id must be predicted.
    pub fn score(&self, table: &PredictionTable) -> Result<f64> {
        if self.labels.is_empty() {
            return Err(Error::EmptyMatrix);
        }
        let mut ge = Vec::with_capacity(self.labels.len());
        let mut gi = Vec::with_capacity(self.labels.len());
        let mut pe = Vec::with_capacity(self.labels.len());
        let mut pi = Vec::with_capacity(self.labels.len());
        for (id, &(e, i)) in &self.labels {
            let (a, b) = table
                .get(id)
                .ok_or_else(|| Error::IdSetMismatch(format!("{} has no prediction for {id}", table.model_id)))?;
            ge.push(e);
            gi.push(i);
            pe.push(a);
            pi.push(b);
        }
        let fe = macro_f1(&confusion(&ge, &pe, self.num_emotion)?)?.macro_f1;
        let fi = macro_f1(&confusion(&gi, &pi, self.num_intent)?)?.macro_f1;
        Ok(jrbm(fe, fi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyResult {
    /// Candidate positions in voting precedence order.
    pub selected: Vec<usize>,
    pub jrbm: f64,
}

/// Greedy forward selection of a voting ensemble.
///
/// Starts from `candidates[0]` (callers order candidates by standalone
/// validation score, best first). Each round scores every extension of the
/// current selection by one or two unused candidates and keeps the best one
/// if it strictly improves the voted JRBM. Two-candidate steps are needed
/// because adding a single table to a one-table ensemble cannot change any
/// vote: every disagreement is a tie that the first table wins.
pub fn greedy_ensemble(candidates: &[PredictionTable], golds: &GoldLabels) -> Result<GreedyResult> {
    if candidates.is_empty() {
        return Err(Error::Config("greedy ensemble needs at least one candidate".into()));
    }
    let score = |sel: &[usize]| -> Result<f64> {
        let tables: Vec<&PredictionTable> = sel.iter().map(|&k| &candidates[k]).collect();
        golds.score(&plurality_vote(&tables)?)
    };
    let mut selected = vec![0];
    let mut best = score(&selected)?;
    loop {
        let unused: Vec<usize> = (0..candidates.len()).filter(|k| !selected.contains(k)).collect();
        let mut extensions: Vec<Vec<usize>> = unused.iter().map(|&a| vec![a]).collect();
        for (x, &a) in unused.iter().enumerate() {
            extensions.extend(unused[x + 1..].iter().map(|&b| vec![a, b]));
        }
        let mut round_best: Option<(f64, Vec<usize>)> = None;
        for ext in extensions {
            let trial: Vec<usize> = selected.iter().copied().chain(ext).collect();
            let s = score(&trial)?;
            if s > round_best.as_ref().map_or(best, |(b, _)| *b) {
                round_best = Some((s, trial));
            }
        }
        match round_best {
            Some((s, trial)) => {
                best = s;
                selected = trial;
            }
            None => break,
        }
    }
    Ok(GreedyResult { selected, jrbm: best })
}
