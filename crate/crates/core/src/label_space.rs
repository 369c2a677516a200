//! Predicate label space, predictions, scenes and datasets.
//!
//! Class index 0 is always the background ("no relation") class. Foreground
//! classes occupy indices `1..=n_fg` ordered by descending training count, so
//! index 1 is the most frequent predicate.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textio::{round_sig9, Table};

pub const BG: usize = 0;
pub const BG_NAME: &str = "__background__";

/// The predicate label space with foreground counts sorted descending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateCatalog {
    class_names: Vec<String>,
    counts: Vec<u64>,
}

/// Builds a catalog from `(name, count)` pairs. Ties keep insertion order.
pub fn build_catalog(label_counts: &[(String, u64)]) -> Result<PredicateCatalog> {
    if label_counts.len() < 2 {
        return Err(Error::config(
            "label_counts",
            format!("need at least 2 foreground classes, got {}", label_counts.len()),
        ));
    }
    let mut seen = HashMap::new();
    for (i, (name, _)) in label_counts.iter().enumerate() {
        if name == BG_NAME {
            return Err(Error::config("label_counts", "background name is reserved"));
        }
        if seen.insert(name.as_str(), i).is_some() {
            return Err(Error::config("label_counts", format!("duplicate class `{name}`")));
        }
    }
    let mut sorted: Vec<&(String, u64)> = label_counts.iter().collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1));
    let mut class_names = vec![BG_NAME.to_string()];
    class_names.extend(sorted.iter().map(|(n, _)| n.clone()));
    let counts = sorted.iter().map(|(_, c)| *c).collect();
    Ok(PredicateCatalog {
        class_names,
        counts,
    })
}

impl PredicateCatalog {
    /// Number of classes including background.
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_fg(&self) -> usize {
        self.counts.len()
    }

    pub fn bg_index(&self) -> usize {
        BG
    }

    /// Foreground counts `N_1 >= N_2 >= ...`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Training count of foreground class `class` (1-based index).
    pub fn count(&self, class: usize) -> u64 {
        self.counts[class - 1]
    }

    pub fn names(&self) -> &[String] {
        &self.class_names
    }

    pub fn name(&self, class: usize) -> &str {
        &self.class_names[class]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    /// Name to index mapping, background included.
    pub fn mapping(&self) -> HashMap<String, usize> {
        self.class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect()
    }

    /// Foreground `(name, count)` pairs in rank order; feeding them back to
    /// [`build_catalog`] reproduces this catalog.
    pub fn label_counts(&self) -> Vec<(String, u64)> {
        self.class_names[1..]
            .iter()
            .cloned()
            .zip(self.counts.iter().copied())
            .collect()
    }

    /// Frequency group of a foreground class: 0 head, 1 body, 2 tail, by
    /// count terciles of the rank order.
    pub fn group(&self, class: usize) -> usize {
        debug_assert!(class >= 1);
        (3 * (class - 1)) / self.n_fg()
    }

    pub fn group_members(&self, group: usize) -> Vec<usize> {
        (1..=self.n_fg()).filter(|&c| self.group(c) == group).collect()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["index", "name", "count", "role"]);
        t.push(["0".to_string(), BG_NAME.to_string(), "0".into(), "bg".into()]);
        for c in 1..=self.n_fg() {
            t.push([
                c.to_string(),
                self.class_names[c].clone(),
                self.counts[c - 1].to_string(),
                "fg".into(),
            ]);
        }
        t
    }

    pub fn from_table(t: &Table) -> Result<Self> {
        let (ni, nn, nc, nr) = (
            t.column("index")?,
            t.column("name")?,
            t.column("count")?,
            t.column("role")?,
        );
        let mut pairs = Vec::new();
        for (pos, row) in t.rows.iter().enumerate() {
            let idx: usize = row[ni]
                .parse()
                .map_err(|_| Error::parse("catalog", format!("bad index `{}`", row[ni])))?;
            if idx != pos {
                return Err(Error::parse("catalog", "rows must be listed in index order"));
            }
            if row[nr] == "bg" {
                if idx != BG {
                    return Err(Error::parse("catalog", "bg must be index 0"));
                }
                continue;
            }
            let count: u64 = row[nc]
                .parse()
                .map_err(|_| Error::parse("catalog", format!("bad count `{}`", row[nc])))?;
            pairs.push((row[nn].clone(), count));
        }
        let cat = build_catalog(&pairs)?;
        if cat.label_counts() != pairs {
            return Err(Error::parse("catalog", "counts are not sorted descending"));
        }
        Ok(cat)
    }
}

/// A predicted class distribution with its confidence and argmax.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub confidence: f64,
    pub argmax_class: usize,
}

impl Prediction {
    /// Wraps a distribution known to be valid (e.g. a softmax output).
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let (argmax_class, confidence) = argmax(&probs);
        Prediction {
            probs,
            confidence,
            argmax_class,
        }
    }

    /// Highest foreground probability and its class; used for ranking.
    pub fn best_fg(&self) -> (usize, f64) {
        let (i, p) = argmax(&self.probs[1..]);
        (i + 1, p)
    }
}

/// First index attaining the maximum.
fn argmax(xs: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    (best, xs[best])
}

/// Validates a probability vector and extracts confidence and argmax.
pub fn argmax_confidence(probs: &[f64]) -> Result<Prediction> {
    if probs.is_empty() {
        return Err(Error::Validation("empty probability vector".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::Validation(format!("invalid probability entry {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!("probabilities sum to {sum}")));
    }
    Ok(Prediction::from_probs(probs.to_vec()))
}

/// Relation representation of an ordered entity pair: the object feature
/// minus the subject feature, i.e. the fixed projection `[-I, I]` applied to
/// the concatenation `[x_s; x_o]`.
pub fn relation_features(subject: &[f64], object: &[f64]) -> Vec<f64> {
    subject.iter().zip(object).map(|(s, o)| o - s).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entity {
    pub id: u32,
    pub class: u32,
    pub features: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TripletInstance {
    pub scene_id: u64,
    /// Positions of subject and object in the scene's entity list.
    pub subj: usize,
    pub obj: usize,
    pub subject_class: u32,
    pub object_class: u32,
    pub features: Vec<f64>,
    /// `BG` when unannotated.
    pub observed_label: usize,
    /// Generator truth, `BG` when the pair has no relation.
    pub hidden_label: usize,
}

impl TripletInstance {
    pub fn is_annotated(&self) -> bool {
        self.observed_label != BG
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub scene_id: u64,
    pub entities: Vec<Entity>,
    pub triplets: Vec<TripletInstance>,
}

impl Scene {
    /// Recomputes every triplet's features from its endpoints.
    pub fn refresh_triplet_features(&mut self) {
        for t in &mut self.triplets {
            t.features =
                relation_features(&self.entities[t.subj].features, &self.entities[t.obj].features);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub catalog: PredicateCatalog,
    pub scenes: Vec<Scene>,
}

impl Dataset {
    pub fn triplets(&self) -> impl Iterator<Item = &TripletInstance> {
        self.scenes.iter().flat_map(|s| s.triplets.iter())
    }

    pub fn n_triplets(&self) -> usize {
        self.scenes.iter().map(|s| s.triplets.len()).sum()
    }

    pub fn feature_dim(&self) -> usize {
        self.triplets().next().map_or(0, |t| t.features.len())
    }

    /// Checks the structural invariants of every scene.
    pub fn validate(&self) -> Result<()> {
        let n = self.catalog.n_classes();
        for s in &self.scenes {
            for t in &s.triplets {
                if t.subj == t.obj || t.subj >= s.entities.len() || t.obj >= s.entities.len() {
                    return Err(Error::Validation(format!(
                        "scene {}: triplet references invalid entity pair ({}, {})",
                        s.scene_id, t.subj, t.obj
                    )));
                }
                if t.observed_label >= n || t.hidden_label >= n {
                    return Err(Error::Validation(format!(
                        "scene {}: label out of range",
                        s.scene_id
                    )));
                }
                if t.observed_label != BG && t.hidden_label != t.observed_label {
                    return Err(Error::Validation(format!(
                        "scene {}: observed label {} disagrees with hidden label {}",
                        s.scene_id, t.observed_label, t.hidden_label
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.scenes {
            serde_json::to_writer(&mut w, &WireScene::from(s))?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(reader: R, split: Split, catalog: PredicateCatalog) -> Result<Self> {
        let mut scenes = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let wire: WireScene = serde_json::from_str(&line).map_err(|e| {
                Error::parse("dataset", format!("line {}: {e}", lineno + 1))
            })?;
            scenes.push(wire.into_scene()?);
        }
        let ds = Dataset {
            split,
            catalog,
            scenes,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Writes `<split>.jsonl` and `catalog.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let file = fs::File::create(dir.join(self.split.file_name()))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        self.catalog.to_table().write(&dir.join(CATALOG_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path, split: Split) -> Result<Self> {
        let catalog = PredicateCatalog::from_table(&Table::read(&dir.join(CATALOG_FILE))?)?;
        let path = dir.join(split.file_name());
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        Dataset::read_jsonl(BufReader::new(fs::File::open(path)?), split, catalog)
    }
}

pub const CATALOG_FILE: &str = "catalog.csv";

#[derive(Serialize, Deserialize)]
struct WireEntity {
    id: u32,
    class: u32,
    #[serde(serialize_with = "ser_sig9")]
    features: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WireTriplet {
    subj: u32,
    obj: u32,
    observed: usize,
    hidden: usize,
}

#[derive(Serialize, Deserialize)]
struct WireScene {
    scene_id: u64,
    entities: Vec<WireEntity>,
    triplets: Vec<WireTriplet>,
}

fn ser_sig9<S: serde::Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&round_sig9(x))?;
    }
    seq.end()
}

impl From<&Scene> for WireScene {
    fn from(s: &Scene) -> Self {
        WireScene {
            scene_id: s.scene_id,
            entities: s
                .entities
                .iter()
                .map(|e| WireEntity {
                    id: e.id,
                    class: e.class,
                    features: e.features.clone(),
                })
                .collect(),
            triplets: s
                .triplets
                .iter()
                .map(|t| WireTriplet {
                    subj: s.entities[t.subj].id,
                    obj: s.entities[t.obj].id,
                    observed: t.observed_label,
                    hidden: t.hidden_label,
                })
                .collect(),
        }
    }
}

impl WireScene {
    fn into_scene(self) -> Result<Scene> {
        let scene_id = self.scene_id;
        let pos: HashMap<u32, usize> = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id, i))
            .collect();
        if pos.len() != self.entities.len() {
            return Err(Error::Validation(format!("scene {scene_id}: duplicate entity id")));
        }
        let entities: Vec<Entity> = self
            .entities
            .into_iter()
            .map(|e| Entity {
                id: e.id,
                class: e.class,
                features: e.features,
            })
            .collect();
        let lookup = |id: u32| {
            pos.get(&id).copied().ok_or_else(|| {
                Error::Validation(format!("scene {scene_id}: unknown entity id {id}"))
            })
        };
        let mut triplets = Vec::with_capacity(self.triplets.len());
        for t in self.triplets {
            let (subj, obj) = (lookup(t.subj)?, lookup(t.obj)?);
            triplets.push(TripletInstance {
                scene_id,
                subj,
                obj,
                subject_class: entities[subj].class,
                object_class: entities[obj].class,
                features: relation_features(&entities[subj].features, &entities[obj].features),
                observed_label: t.observed,
                hidden_label: t.hidden,
            });
        }
        Ok(Scene {
            scene_id,
            entities,
            triplets,
        })
    }
}
