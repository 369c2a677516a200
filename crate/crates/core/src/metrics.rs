//! Recall-based evaluation and the pseudo-label audit.
//!
//! Every candidate pair of a scene is ranked by its best foreground
//! probability. A ground-truth triplet counts as recalled at `K` when it is
//! among the top `K` of its scene and its predicted class matches.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{predict_scenes, ModelParams};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::label_space::{Dataset, PredicateCatalog, BG};
use crate::textio::Table;

pub const DEFAULT_K: [usize; 3] = [2, 4, 8];
pub const GROUP_NAMES: [&str; 3] = ["head", "body", "tail"];

pub fn format_k(ks: &[usize]) -> String {
    ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn parse_k(s: &str) -> Result<Vec<usize>> {
    let ks: Vec<usize> = s
        .split([' ', ','])
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::config("k_values", format!("bad K `{t}`"))))
        .collect::<Result<_>>()?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::config("k_values", "need positive K values"));
    }
    Ok(ks)
}

/// Indices of the `k` best-scored entries; ties go to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Ranked predictions of one scene: `(predicted class, score)` per triplet.
pub type ScenePredictions = Vec<(usize, f64)>;

fn hits_per_scene(preds: &ScenePredictions, truth: &[usize], k: usize) -> Vec<usize> {
    let scores: Vec<f64> = preds.iter().map(|p| p.1).collect();
    top_k(&scores, k)
        .into_iter()
        .filter(|&i| truth[i] != BG && preds[i].0 == truth[i])
        .collect()
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::config("k", "K must be positive"))
    } else {
        Ok(())
    }
}

/// Mean over scenes with ground truth of `|top-K ∩ GT| / |GT|`, in percent.
pub fn recall_at_k(preds: &[ScenePredictions], truth: &[Vec<usize>], k: usize) -> Result<f64> {
    check_k(k)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in preds.iter().zip(truth) {
        let gt = t.iter().filter(|&&c| c != BG).count();
        if gt == 0 {
            continue;
        }
        sum += hits_per_scene(p, t, k).len() as f64 / gt as f64;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Validation("no ground-truth triplets".into()));
    }
    Ok(100.0 * sum / n as f64)
}

/// Per-class recall in percent, `None` for classes without ground truth.
/// Index 0 is foreground class 1.
pub fn per_class_recall(preds: &[ScenePredictions], truth: &[Vec<usize>], k: usize, n_fg: usize) -> Result<Vec<Option<f64>>> {
    check_k(k)?;
    let mut gt = vec![0u64; n_fg];
    let mut hit = vec![0u64; n_fg];
    for (p, t) in preds.iter().zip(truth) {
        for &c in t.iter().filter(|&&c| c != BG) {
            gt[c - 1] += 1;
        }
        for i in hits_per_scene(p, t, k) {
            hit[t[i] - 1] += 1;
        }
    }
    Ok(gt
        .iter()
        .zip(&hit)
        .map(|(&g, &h)| (g > 0).then(|| 100.0 * h as f64 / g as f64))
        .collect())
}

fn mean_defined(xs: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.into_iter().flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn mean_recall_at_k(preds: &[ScenePredictions], truth: &[Vec<usize>], k: usize, n_fg: usize) -> Result<f64> {
    mean_defined(per_class_recall(preds, truth, k, n_fg)?)
        .ok_or_else(|| Error::Validation("no ground-truth triplets".into()))
}

/// Harmonic mean of recall and mean recall.
pub fn f_at_k(r: f64, mr: f64) -> f64 {
    if r + mr == 0.0 {
        0.0
    } else {
        2.0 * r * mr / (r + mr)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k_values: Vec<usize>,
    pub recall: Vec<f64>,
    pub mean_recall: Vec<f64>,
    pub f: Vec<f64>,
    /// `per_class[k][c - 1]`.
    pub per_class: Vec<Vec<Option<f64>>>,
    /// `groups[k][g]` for head, body, tail.
    pub groups: Vec<[Option<f64>; 3]>,
}

impl EvalReport {
    fn position(&self, k: usize) -> Result<usize> {
        self.k_values
            .iter()
            .position(|&x| x == k)
            .ok_or_else(|| Error::config("k", format!("K={k} was not evaluated")))
    }

    pub fn recall_at(&self, k: usize) -> Result<f64> {
        Ok(self.recall[self.position(k)?])
    }

    pub fn mean_recall_at(&self, k: usize) -> Result<f64> {
        Ok(self.mean_recall[self.position(k)?])
    }

    pub fn f_at(&self, k: usize) -> Result<f64> {
        Ok(self.f[self.position(k)?])
    }

    /// Mean recall over one frequency group (0 head, 1 body, 2 tail).
    pub fn group_at(&self, k: usize, group: usize) -> Result<Option<f64>> {
        Ok(self.groups[self.position(k)?][group])
    }

    pub fn summary_cells(&self) -> Vec<String> {
        (0..self.k_values.len())
            .flat_map(|i| [self.recall[i], self.mean_recall[i], self.f[i]])
            .map(|x| x.to_string())
            .collect()
    }

    /// One row per class: index, name, group, count, then recall per K.
    pub fn per_class_table(&self, catalog: &PredicateCatalog, echo: &[(String, String)]) -> Table {
        let mut cols: Vec<String> = ["class", "name", "group", "count"].map(String::from).to_vec();
        cols.extend(self.k_values.iter().map(|k| format!("recall@{k}")));
        let mut t = Table::new(cols).with_echo(echo);
        for c in 1..=catalog.n_fg() {
            let mut row = vec![
                c.to_string(),
                catalog.name(c).to_string(),
                GROUP_NAMES[catalog.group(c)].to_string(),
                catalog.count(c).to_string(),
            ];
            row.extend(self.per_class.iter().map(|v| opt_cell(v[c - 1])));
            t.push(row);
        }
        t
    }

    pub fn summary_table(&self, echo: &[(String, String)]) -> Table {
        let mut cols = report_columns(&self.k_values);
        for k in &self.k_values {
            cols.extend(GROUP_NAMES.iter().map(|g| format!("{g}-mR@{k}")));
        }
        let mut t = Table::new(cols).with_echo(echo);
        let mut row = self.summary_cells();
        for g in &self.groups {
            row.extend(g.iter().map(|x| opt_cell(*x)));
        }
        t.push(row);
        t
    }
}

fn opt_cell(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn report_columns(ks: &[usize]) -> Vec<String> {
    ks.iter()
        .flat_map(|k| [format!("R@{k}"), format!("mR@{k}"), format!("F@{k}")])
        .collect()
}

/// Ranked predictions and hidden truth for every scene of a split.
pub fn score_dataset(params: &ModelParams, dataset: &Dataset, exec: Exec) -> (Vec<ScenePredictions>, Vec<Vec<usize>>) {
    let preds = predict_scenes(params, &dataset.scenes, exec)
        .into_iter()
        .map(|ps| ps.iter().map(|p| p.best_fg()).collect())
        .collect();
    let truth = dataset
        .scenes
        .iter()
        .map(|s| s.triplets.iter().map(|t| t.hidden_label).collect())
        .collect();
    (preds, truth)
}

/// Evaluates against the generator's hidden labels.
pub fn evaluate(params: &ModelParams, dataset: &Dataset, ks: &[usize], exec: Exec) -> Result<EvalReport> {
    if params.n_classes() != dataset.catalog.n_classes() {
        return Err(Error::Validation(format!(
            "model has {} classes, dataset {}",
            params.n_classes(),
            dataset.catalog.n_classes()
        )));
    }
    let (preds, truth) = score_dataset(params, dataset, exec);
    report_from(&preds, &truth, &dataset.catalog, ks)
}

pub fn report_from(
    preds: &[ScenePredictions],
    truth: &[Vec<usize>],
    catalog: &PredicateCatalog,
    ks: &[usize],
) -> Result<EvalReport> {
    let n_fg = catalog.n_fg();
    let mut report = EvalReport {
        k_values: ks.to_vec(),
        recall: Vec::new(),
        mean_recall: Vec::new(),
        f: Vec::new(),
        per_class: Vec::new(),
        groups: Vec::new(),
    };
    for &k in ks {
        let r = recall_at_k(preds, truth, k)?;
        let pc = per_class_recall(preds, truth, k, n_fg)?;
        let mr = mean_defined(pc.iter().copied()).ok_or_else(|| Error::Validation("no ground truth".into()))?;
        let groups = [0, 1, 2].map(|g| mean_defined(catalog.group_members(g).iter().map(|&c| pc[c - 1])));
        report.recall.push(r);
        report.mean_recall.push(mr);
        report.f.push(f_at_k(r, mr));
        report.per_class.push(pc);
        report.groups.push(groups);
    }
    Ok(report)
}

/// Fixed-width results block: one line per model with R, mR and F per K.
pub fn format_results(rows: &[(&str, &EvalReport)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:width$}", "model");
    for label in ["R", "mR", "F"] {
        for k in &first.k_values {
            out.push_str(&format!(" {:>7}", format!("{label}@{k}")));
        }
    }
    out.push('\n');
    for (name, r) in rows {
        out.push_str(&format!("{name:width$}"));
        for v in [&r.recall, &r.mean_recall, &r.f] {
            for x in v.iter() {
                out.push_str(&format!(" {x:>7.1}"));
            }
        }
        out.push('\n');
    }
    out
}

/// A logged pseudo-label decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub iteration: u64,
    pub scene_id: u64,
    /// Position of the triplet within its scene.
    pub triplet: usize,
    pub class: usize,
    pub confidence: f64,
}

pub fn assignments_table(log: &[Assignment], echo: &[(String, String)]) -> Table {
    let mut t = Table::new(["iteration", "scene_id", "triplet", "class", "confidence"]).with_echo(echo);
    for a in log {
        t.push([
            a.iteration.to_string(),
            a.scene_id.to_string(),
            a.triplet.to_string(),
            a.class.to_string(),
            a.confidence.to_string(),
        ]);
    }
    t
}

pub fn assignments_from_table(t: &Table) -> Result<Vec<Assignment>> {
    let cols = ["iteration", "scene_id", "triplet", "class", "confidence"].map(|c| t.column(c));
    let [it, sc, tr, cl, cf] = cols;
    let (it, sc, tr, cl, cf) = (it?, sc?, tr?, cl?, cf?);
    let bad = |r: &str| Error::parse("assignment log", r.to_string());
    t.rows
        .iter()
        .map(|row| {
            Ok(Assignment {
                iteration: row[it].parse().map_err(|_| bad("iteration"))?,
                scene_id: row[sc].parse().map_err(|_| bad("scene_id"))?,
                triplet: row[tr].parse().map_err(|_| bad("triplet"))?,
                class: row[cl].parse().map_err(|_| bad("class"))?,
                confidence: row[cf].parse().map_err(|_| bad("confidence"))?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelAudit {
    /// Per foreground class (index 0 is class 1): assignments made.
    pub assigned: Vec<u64>,
    /// Assignments equal to the hidden label.
    pub correct: Vec<u64>,
    /// Assignments on triplets whose hidden label is background.
    pub bg_violations: Vec<u64>,
    /// Distinct unannotated triplets of the class ever labelled correctly.
    pub recovered: Vec<u64>,
    /// Unannotated triplets whose hidden label is the class.
    pub hidden_totals: Vec<u64>,
}

impl PseudoLabelAudit {
    pub fn precision(&self, class: usize) -> Option<f64> {
        let a = self.assigned[class - 1];
        (a > 0).then(|| self.correct[class - 1] as f64 / a as f64)
    }

    pub fn recall(&self, class: usize) -> Option<f64> {
        let n = self.hidden_totals[class - 1];
        (n > 0).then(|| self.recovered[class - 1] as f64 / n as f64)
    }

    pub fn total_assigned(&self) -> u64 {
        self.assigned.iter().sum()
    }

    pub fn total_correct(&self) -> u64 {
        self.correct.iter().sum()
    }

    pub fn total_bg_violations(&self) -> u64 {
        self.bg_violations.iter().sum()
    }

    /// Correct over all assignments; `None` when nothing was assigned.
    pub fn overall_precision(&self) -> Option<f64> {
        let a = self.total_assigned();
        (a > 0).then(|| self.total_correct() as f64 / a as f64)
    }

    pub fn to_table(&self, catalog: &PredicateCatalog, echo: &[(String, String)]) -> Table {
        let mut t = Table::new([
            "class",
            "name",
            "assigned",
            "correct",
            "bg_violations",
            "precision",
            "recall",
        ])
        .with_echo(echo);
        for c in 1..=self.assigned.len() {
            t.push([
                c.to_string(),
                catalog.name(c).to_string(),
                self.assigned[c - 1].to_string(),
                self.correct[c - 1].to_string(),
                self.bg_violations[c - 1].to_string(),
                opt_cell(self.precision(c)),
                opt_cell(self.recall(c)),
            ]);
        }
        let recovered: u64 = self.recovered.iter().sum();
        let hidden: u64 = self.hidden_totals.iter().sum();
        t.push([
            "all".to_string(),
            String::new(),
            self.total_assigned().to_string(),
            self.total_correct().to_string(),
            self.total_bg_violations().to_string(),
            opt_cell(self.overall_precision()),
            opt_cell((hidden > 0).then(|| recovered as f64 / hidden as f64)),
        ]);
        t
    }
}

pub fn audit_pseudo_labels(log: &[Assignment], dataset: &Dataset) -> Result<PseudoLabelAudit> {
    let n_fg = dataset.catalog.n_fg();
    let index: HashMap<u64, usize> = dataset
        .scenes
        .iter()
        .enumerate()
        .map(|(i, s)| (s.scene_id, i))
        .collect();
    let mut audit = PseudoLabelAudit {
        assigned: vec![0; n_fg],
        correct: vec![0; n_fg],
        bg_violations: vec![0; n_fg],
        recovered: vec![0; n_fg],
        hidden_totals: vec![0; n_fg],
    };
    for t in dataset.triplets().filter(|t| !t.is_annotated() && t.hidden_label != BG) {
        audit.hidden_totals[t.hidden_label - 1] += 1;
    }
    let mut seen = std::collections::HashSet::new();
    for a in log {
        let triplet = index
            .get(&a.scene_id)
            .and_then(|&i| dataset.scenes[i].triplets.get(a.triplet))
            .ok_or_else(|| {
                Error::Validation(format!("assignment references missing triplet {}/{}", a.scene_id, a.triplet))
            })?;
        if a.class == BG || a.class > n_fg {
            return Err(Error::Validation(format!("assignment to non-foreground class {}", a.class)));
        }
        if triplet.is_annotated() {
            return Err(Error::Validation(format!(
                "assignment on annotated triplet {}/{}",
                a.scene_id, a.triplet
            )));
        }
        let c = a.class - 1;
        audit.assigned[c] += 1;
        if triplet.hidden_label == a.class {
            audit.correct[c] += 1;
            if seen.insert((a.scene_id, a.triplet)) {
                audit.recovered[c] += 1;
            }
        } else if triplet.hidden_label == BG {
            audit.bg_violations[c] += 1;
        }
    }
    Ok(audit)
}
