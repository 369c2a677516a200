//! Synthetic long-tailed relation benchmark.
//!
//! Each scene is a random tree over its entities. Every tree edge is one
//! candidate triplet whose relation representation (object minus subject
//! feature) is its class prototype plus isotropic Gaussian noise. Edges with
//! no relation use a dedicated background prototype. Foreground classes are
//! drawn from a Zipf law, and selected tail classes sit close to a head
//! "anchor" prototype to model semantically overlapping predicates.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::label_space::{build_catalog, Dataset, Entity, PredicateCatalog, Scene, Split, TripletInstance, BG};
use crate::rng::{domain, stream};
use crate::textio::{round_sig9, Table};

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub n_scenes: usize,
    pub entities_min: usize,
    pub entities_max: usize,
    pub n_fg_classes: usize,
    pub n_entity_classes: u32,
    pub zipf_exponent: f64,
    pub feature_dim: usize,
    /// Norm of each anchor/background prototype.
    pub class_separation: f64,
    /// Distance of a sibling prototype from its anchor.
    pub sibling_distance: f64,
    /// Groups of 0-based generator ranks; the first entry is the anchor.
    pub sibling_groups: Vec<Vec<usize>>,
    pub noise_sigma: f64,
    /// Spread of each tree root's feature vector.
    pub root_sigma: f64,
    pub annotated_fraction: f64,
    pub true_bg_fraction: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_scenes: 2000,
            entities_min: 5,
            entities_max: 10,
            n_fg_classes: 10,
            n_entity_classes: 20,
            zipf_exponent: 1.5,
            feature_dim: 16,
            class_separation: 3.0,
            sibling_distance: 1.5,
            sibling_groups: default_sibling_groups(10),
            noise_sigma: 1.0,
            root_sigma: 1.0,
            annotated_fraction: 0.045,
            true_bg_fraction: 0.3,
            seed: 20_240_607,
        }
    }
}

/// Pairs the two most frequent classes with the tail half, alternating.
pub fn default_sibling_groups(n_fg: usize) -> Vec<Vec<usize>> {
    if n_fg < 4 {
        return Vec::new();
    }
    let mut groups = vec![vec![0], vec![1]];
    for (i, c) in (n_fg / 2..n_fg).enumerate() {
        groups[i % 2].push(c);
    }
    groups
}

pub fn format_groups(groups: &[Vec<usize>]) -> String {
    groups
        .iter()
        .map(|g| {
            let rest: Vec<String> = g[1..].iter().map(|c| c.to_string()).collect();
            format!("{}:{}", g[0], rest.join(" "))
        })
        .collect::<Vec<_>>()
        .join(";")
}

/// Parses `anchor:member member;anchor:member`.
pub fn parse_groups(s: &str) -> Result<Vec<Vec<usize>>> {
    let bad = || Error::config("sibling_groups", format!("cannot parse `{s}`"));
    let mut out = Vec::new();
    for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (anchor, members) = part.split_once(':').ok_or_else(bad)?;
        let mut g = vec![anchor.trim().parse().map_err(|_| bad())?];
        for m in members.split_whitespace() {
            g.push(m.parse().map_err(|_| bad())?);
        }
        out.push(g);
    }
    Ok(out)
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_fg_classes < 2 {
            return Err(Error::config("n_fg_classes", "must be at least 2"));
        }
        if self.feature_dim < 1 {
            return Err(Error::config("feature_dim", "must be at least 1"));
        }
        if self.n_scenes == 0 {
            return Err(Error::config("n_scenes", "must be positive"));
        }
        if self.entities_min < 2 || self.entities_max < self.entities_min {
            return Err(Error::config("entities_per_scene", "need 2 <= min <= max"));
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::config("zipf_exponent", "must be finite and non-negative"));
        }
        if !(self.annotated_fraction > 0.0 && self.annotated_fraction <= 1.0) {
            return Err(Error::config("annotated_fraction", "must lie in (0, 1]"));
        }
        if !(self.true_bg_fraction >= 0.0 && self.true_bg_fraction < 1.0) {
            return Err(Error::config("true_bg_fraction", "must lie in [0, 1)"));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("class_separation", self.class_separation),
            ("sibling_distance", self.sibling_distance),
            ("root_sigma", self.root_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be finite and non-negative"));
            }
        }
        if self.n_entity_classes == 0 {
            return Err(Error::config("n_entity_classes", "must be positive"));
        }
        let mut used = vec![false; self.n_fg_classes];
        for g in &self.sibling_groups {
            for &c in g {
                if c >= self.n_fg_classes || std::mem::replace(&mut used[c], true) {
                    return Err(Error::config(
                        "sibling_groups",
                        format!("class {c} out of range or listed twice"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("n_scenes".into(), self.n_scenes.to_string()),
            ("entities_min".into(), self.entities_min.to_string()),
            ("entities_max".into(), self.entities_max.to_string()),
            ("n_fg_classes".into(), self.n_fg_classes.to_string()),
            ("n_entity_classes".into(), self.n_entity_classes.to_string()),
            ("zipf_exponent".into(), self.zipf_exponent.to_string()),
            ("feature_dim".into(), self.feature_dim.to_string()),
            ("class_separation".into(), self.class_separation.to_string()),
            ("sibling_distance".into(), self.sibling_distance.to_string()),
            ("sibling_groups".into(), format_groups(&self.sibling_groups)),
            ("noise_sigma".into(), self.noise_sigma.to_string()),
            ("root_sigma".into(), self.root_sigma.to_string()),
            ("annotated_fraction".into(), self.annotated_fraction.to_string()),
            ("true_bg_fraction".into(), self.true_bg_fraction.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    /// Applies one `key = value` override. Returns `Ok(false)` for keys this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        use crate::textio::parse_field as num;
        match key {
            "n_scenes" => self.n_scenes = num(key, value)?,
            "entities_min" => self.entities_min = num(key, value)?,
            "entities_max" => self.entities_max = num(key, value)?,
            "n_fg_classes" => {
                self.n_fg_classes = num(key, value)?;
                self.sibling_groups = default_sibling_groups(self.n_fg_classes);
            }
            "n_entity_classes" => self.n_entity_classes = num(key, value)?,
            "zipf_exponent" => self.zipf_exponent = num(key, value)?,
            "feature_dim" => self.feature_dim = num(key, value)?,
            "class_separation" => self.class_separation = num(key, value)?,
            "sibling_distance" => self.sibling_distance = num(key, value)?,
            "sibling_groups" => self.sibling_groups = parse_groups(value)?,
            "noise_sigma" => self.noise_sigma = num(key, value)?,
            "root_sigma" => self.root_sigma = num(key, value)?,
            "annotated_fraction" => self.annotated_fraction = num(key, value)?,
            "true_bg_fraction" => self.true_bg_fraction = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn class_name(rank: usize) -> String {
        format!("p{:02}", rank + 1)
    }
}

/// Normalized Zipf weights `k^-s`, `k = 1..=n`.
pub fn zipf_shares(n: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-exponent)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn gaussian_vec<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| { let z: f64 = StandardNormal.sample(rng); scale * z })
        .collect::<Vec<f64>>()
}

fn unit_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, dim, 1.0);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Class prototypes in generator-rank order; index 0 is background.
pub fn prototypes(config: &GeneratorConfig) -> Vec<Vec<f64>> {
    let mut rng = stream(config.seed, domain::GENERATE, u64::MAX);
    let d = config.feature_dim;
    let mut protos: Vec<Vec<f64>> = (0..=config.n_fg_classes)
        .map(|_| {
            unit_vec(&mut rng, d)
                .into_iter()
                .map(|x| x * config.class_separation)
                .collect()
        })
        .collect();
    for g in &config.sibling_groups {
        let anchor = protos[g[0] + 1].clone();
        for &c in &g[1..] {
            let offset = unit_vec(&mut rng, d);
            protos[c + 1] = anchor
                .iter()
                .zip(&offset)
                .map(|(a, o)| a + config.sibling_distance * o)
                .collect();
        }
    }
    protos
}

fn sample_class<R: Rng>(rng: &mut R, cumulative: &[f64]) -> usize {
    let u: f64 = rng.random();
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

fn generate_scene(config: &GeneratorConfig, protos: &[Vec<f64>], cumulative: &[f64], idx: usize) -> Scene {
    let mut rng = stream(config.seed, domain::GENERATE, idx as u64);
    let scene_id = idx as u64;
    let d = config.feature_dim;
    let n = rng.random_range(config.entities_min..=config.entities_max);
    let mut entities: Vec<Entity> = Vec::with_capacity(n);
    let mut triplets = Vec::with_capacity(n - 1);
    let root = gaussian_vec(&mut rng, d, config.root_sigma);
    entities.push(Entity {
        id: 0,
        class: rng.random_range(0..config.n_entity_classes),
        features: root.into_iter().map(round_sig9).collect(),
    });
    for j in 1..n {
        let parent = rng.random_range(0..j);
        let label = if rng.random::<f64>() < config.true_bg_fraction {
            BG
        } else {
            sample_class(&mut rng, cumulative) + 1
        };
        let noise = gaussian_vec(&mut rng, d, config.noise_sigma);
        let forward = rng.random::<bool>();
        let sign = if forward { 1.0 } else { -1.0 };
        let features: Vec<f64> = entities[parent]
            .features
            .iter()
            .zip(&protos[label])
            .zip(&noise)
            .map(|((p, m), e)| round_sig9(p + sign * (m + e)))
            .collect();
        entities.push(Entity {
            id: j as u32,
            class: rng.random_range(0..config.n_entity_classes),
            features,
        });
        let (subj, obj) = if forward { (parent, j) } else { (j, parent) };
        triplets.push(TripletInstance {
            scene_id,
            subj,
            obj,
            subject_class: entities[subj].class,
            object_class: entities[obj].class,
            features: Vec::new(),
            observed_label: label,
            hidden_label: label,
        });
    }
    let mut scene = Scene {
        scene_id,
        entities,
        triplets,
    };
    scene.refresh_triplet_features();
    scene
}

/// Relabels scenes whose class indices follow `from` into `to`'s index space.
fn relabel(scenes: &mut [Scene], from: &[String], to: &PredicateCatalog) {
    let map: Vec<usize> = from
        .iter()
        .map(|n| to.index_of(n).expect("catalogs share class names"))
        .collect();
    for s in scenes {
        for t in &mut s.triplets {
            t.observed_label = map[t.observed_label];
            t.hidden_label = map[t.hidden_label];
        }
    }
}

fn catalog_from(names: &[String], counts: &[u64]) -> Result<PredicateCatalog> {
    let pairs: Vec<(String, u64)> = names[1..].iter().cloned().zip(counts.iter().copied()).collect();
    build_catalog(&pairs)
}

/// Generates a fully annotated dataset (observed = hidden). The catalog is
/// ranked by relation counts over all scenes.
pub fn generate(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let protos = prototypes(config);
    let mut cumulative = zipf_shares(config.n_fg_classes, config.zipf_exponent);
    for i in 1..cumulative.len() {
        cumulative[i] += cumulative[i - 1];
    }
    let mut scenes = Exec::default().map_range(config.n_scenes, |i| {
        generate_scene(config, &protos, &cumulative, i)
    });
    let mut counts = vec![0u64; config.n_fg_classes];
    for t in scenes.iter().flat_map(|s| &s.triplets) {
        if t.hidden_label != BG {
            counts[t.hidden_label - 1] += 1;
        }
    }
    let names: Vec<String> = std::iter::once(crate::label_space::BG_NAME.to_string())
        .chain((0..config.n_fg_classes).map(GeneratorConfig::class_name))
        .collect();
    let catalog = catalog_from(&names, &counts)?;
    relabel(&mut scenes, &names, &catalog);
    Ok(Dataset {
        split: Split::Train,
        catalog,
        scenes,
    })
}

fn relation_count(dataset: &Dataset) -> usize {
    dataset.triplets().filter(|t| t.hidden_label != BG).count()
}

/// Number of relation-bearing pairs kept annotated: `ceil(fraction * n)`,
/// with a small tolerance so that e.g. `0.045 * 1000` yields 45.
pub fn annotated_count(fraction: f64, relations: usize) -> usize {
    ((fraction * relations as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Keeps a uniformly random subset of relation-bearing pairs annotated and
/// hides the rest behind the background label.
pub fn mask_annotations(dataset: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config("annotated_fraction", "must lie in (0, 1]"));
    }
    let mut out = dataset.clone();
    let mut positions: Vec<(usize, usize)> = Vec::new();
    for (si, s) in out.scenes.iter().enumerate() {
        for (ti, t) in s.triplets.iter().enumerate() {
            if t.hidden_label != BG {
                positions.push((si, ti));
            }
        }
    }
    let keep = annotated_count(fraction, positions.len());
    let mut rng = stream(seed, domain::MASK, 0);
    // partial Fisher-Yates: the first `keep` slots are the kept sample
    for i in 0..keep {
        let j = rng.random_range(i..positions.len());
        positions.swap(i, j);
    }
    for s in &mut out.scenes {
        for t in &mut s.triplets {
            t.observed_label = BG;
        }
    }
    for &(si, ti) in &positions[..keep] {
        let t = &mut out.scenes[si].triplets[ti];
        t.observed_label = t.hidden_label;
    }
    debug_assert_eq!(relation_count(&out), relation_count(dataset));
    Ok(out)
}

/// Scene-level train/val/test partition. The returned catalog (shared by all
/// three) is ranked by annotated triplets of the train split only.
pub fn split(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<[Dataset; 3]> {
    let (a, b, c) = fractions;
    if !(a >= 0.0 && b >= 0.0 && c >= 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::config("split", "fractions must be non-negative and sum to 1"));
    }
    let n = dataset.scenes.len();
    let n_train = (a * n as f64).round() as usize;
    let n_val = (b * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::config(
            "split",
            format!("fractions {a}/{b}/{c} of {n} scenes leave an empty split"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, domain::SPLIT, 0);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let take = |idx: &[usize]| -> Vec<Scene> {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable();
        sorted.iter().map(|&i| dataset.scenes[i].clone()).collect()
    };
    let mut parts = [
        take(&order[..n_train]),
        take(&order[n_train..n_train + n_val]),
        take(&order[n_train + n_val..]),
    ];
    let old = dataset.catalog.names().to_vec();
    let mut counts = vec![0u64; dataset.catalog.n_fg()];
    for t in parts[0].iter().flat_map(|s| &s.triplets) {
        if t.observed_label != BG {
            counts[t.observed_label - 1] += 1;
        }
    }
    let catalog = catalog_from(&old, &counts)?;
    for p in &mut parts {
        relabel(p, &old, &catalog);
    }
    let [train, val, test] = parts;
    Ok([
        Dataset { split: Split::Train, catalog: catalog.clone(), scenes: train },
        Dataset { split: Split::Val, catalog: catalog.clone(), scenes: val },
        Dataset { split: Split::Test, catalog, scenes: test },
    ])
}

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.7, 0.1, 0.2);

/// generate, mask and split in one call.
pub fn build_benchmark(config: &GeneratorConfig) -> Result<[Dataset; 3]> {
    let full = generate(config)?;
    let masked = mask_annotations(&full, config.annotated_fraction, config.seed)?;
    split(&masked, DEFAULT_SPLIT, config.seed)
}

/// Per-class relation and annotation counts for a set of splits.
pub fn manifest(config: &GeneratorConfig, splits: &[Dataset]) -> Table {
    let catalog = &splits[0].catalog;
    let mut cols = vec!["index".to_string(), "name".to_string()];
    for s in splits {
        cols.push(format!("{}_relations", s.split.name()));
        cols.push(format!("{}_annotated", s.split.name()));
    }
    let mut t = Table::new(cols).with_echo(&config.echo());
    let mut per: Vec<HashMap<usize, (u64, u64)>> = Vec::new();
    for s in splits {
        let mut m = HashMap::new();
        for tr in s.triplets() {
            let e = m.entry(tr.hidden_label).or_insert((0, 0));
            e.0 += 1;
            if tr.observed_label != BG {
                e.1 += 1;
            }
        }
        per.push(m);
    }
    for c in 0..catalog.n_classes() {
        let mut row = vec![c.to_string(), catalog.name(c).to_string()];
        for m in &per {
            let (r, a) = m.get(&c).copied().unwrap_or((0, 0));
            row.push(r.to_string());
            row.push(a.to_string());
        }
        t.push(row);
    }
    t
}
