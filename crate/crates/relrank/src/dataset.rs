//! Data ingestion, validation, and synthesis.
//!
//! File formats (all UTF-8 CSV with a header row):
//! - ratings: `caption_id,audio_id,rating` with ratings in `[0, 100]`
//! - pairs:   `caption_id,audio_id`, one positive audio per caption
//! - features: `id,f0,f1,...` with a fixed width per file
//! - splits:  `caption_id,subset` with subset one of
//!   `development`/`validation`/`evaluation`
//!
//! Ids are opaque, case-sensitive strings.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::Path;

use indexmap::{IndexMap, IndexSet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One rated (caption, audio) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub caption_id: String,
    pub audio_id: String,
    /// Relevance rating in `[0, 100]`.
    pub rating: f64,
}

/// One caption's ratings over its candidate audio items, in file order.
///
/// Item order carries no meaning; every consumer is order-insensitive.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceList {
    pub caption_id: String,
    pub items: Vec<(String, f64)>,
}

impl RelevanceList {
    /// Validates the list invariants: at least two items, ratings in
    /// `[0, 100]`, and at least one strictly positive rating.
    pub fn new(caption_id: String, items: Vec<(String, f64)>) -> Result<Self> {
        if items.len() < 2 {
            return Err(Error::record(format!(
                "caption {caption_id:?}: relevance list needs at least 2 items, got {}",
                items.len()
            )));
        }
        for (audio_id, rating) in &items {
            if !rating.is_finite() || *rating < 0.0 || *rating > 100.0 {
                return Err(Error::record(format!(
                    "caption {caption_id:?}, audio {audio_id:?}: rating {rating} outside [0, 100]"
                )));
            }
        }
        if items.iter().all(|(_, r)| *r == 0.0) {
            return Err(Error::degenerate(format!(
                "caption {caption_id:?}: all ratings are zero"
            )));
        }
        Ok(Self { caption_id, items })
    }

    pub fn ratings(&self) -> Vec<f64> {
        self.items.iter().map(|(_, r)| *r).collect()
    }
}

/// Binary positive (caption, audio) correspondences; one audio per caption.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairSet {
    by_caption: IndexMap<String, String>,
}

impl PairSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a positive pair; a caption may appear only once.
    pub fn insert(&mut self, caption_id: String, audio_id: String) -> Result<()> {
        if self.by_caption.contains_key(&caption_id) {
            return Err(Error::record(format!(
                "caption {caption_id:?} has more than one positive audio"
            )));
        }
        self.by_caption.insert(caption_id, audio_id);
        Ok(())
    }

    pub fn contains(&self, caption_id: &str, audio_id: &str) -> bool {
        self.by_caption.get(caption_id).map(String::as_str) == Some(audio_id)
    }

    pub fn positive_of(&self, caption_id: &str) -> Option<&str> {
        self.by_caption.get(caption_id).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.by_caption.iter().map(|(c, a)| (c.as_str(), a.as_str()))
    }

    pub fn len(&self) -> usize {
        self.by_caption.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_caption.is_empty()
    }
}

/// Id-indexed dense feature vectors of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dimension: usize,
    rows: IndexMap<String, Vec<f64>>,
}

impl FeatureTable {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            rows: IndexMap::new(),
        }
    }

    /// Adds a row; the vector length must match the table dimension, all
    /// entries must be finite, and the id must be new.
    pub fn insert(&mut self, id: String, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: vector.len(),
                context: format!("feature row {id:?}"),
            });
        }
        if let Some((col, v)) = vector.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::record(format!(
                "feature row {id:?}, column f{col}: non-finite value {v}"
            )));
        }
        if self.rows.contains_key(&id) {
            return Err(Error::record(format!("duplicate feature id {id:?}")));
        }
        self.rows.insert(id, vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.get(id).map(Vec::as_slice)
    }

    /// Looks a row up, failing with the id and a caller-supplied context.
    pub fn require(&self, id: &str, context: &str) -> Result<&[f64]> {
        self.get(id).ok_or_else(|| Error::MissingId {
            id: id.to_string(),
            context: context.to_string(),
        })
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(id, v)| (id.as_str(), v.as_slice()))
    }
}

/// Which subset a caption belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Development,
    Validation,
    Evaluation,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Development => "development",
            Subset::Validation => "validation",
            Subset::Evaluation => "evaluation",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "development" => Some(Subset::Development),
            "validation" => Some(Subset::Validation),
            "evaluation" => Some(Subset::Evaluation),
            _ => None,
        }
    }
}

/// Disjoint development/validation/evaluation caption-id sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitSpec {
    pub development: IndexSet<String>,
    pub validation: IndexSet<String>,
    pub evaluation: IndexSet<String>,
}

impl SplitSpec {
    /// Validates pairwise disjointness.
    pub fn new(
        development: IndexSet<String>,
        validation: IndexSet<String>,
        evaluation: IndexSet<String>,
    ) -> Result<Self> {
        for id in &validation {
            if development.contains(id) {
                return Err(Error::record(format!(
                    "caption {id:?} is in both development and validation"
                )));
            }
        }
        for id in &evaluation {
            if development.contains(id) || validation.contains(id) {
                return Err(Error::record(format!(
                    "caption {id:?} appears in more than one subset"
                )));
            }
        }
        Ok(Self {
            development,
            validation,
            evaluation,
        })
    }

    pub fn subset_of(&self, caption_id: &str) -> Option<Subset> {
        if self.development.contains(caption_id) {
            Some(Subset::Development)
        } else if self.validation.contains(caption_id) {
            Some(Subset::Validation)
        } else if self.evaluation.contains(caption_id) {
            Some(Subset::Evaluation)
        } else {
            None
        }
    }

    /// Checks that the union of the three subsets covers `caption_ids`.
    pub fn check_covers<'a>(&self, caption_ids: impl Iterator<Item = &'a str>) -> Result<()> {
        for id in caption_ids {
            if self.subset_of(id).is_none() {
                return Err(Error::MissingId {
                    id: id.to_string(),
                    context: "caption not assigned to any split subset".to_string(),
                });
            }
        }
        Ok(())
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, None, format!("{other:?}")),
        })
}

fn record_line(record: &csv::StringRecord) -> Option<u64> {
    record.position().map(|p| p.line())
}

/// Loads a ratings CSV and groups rows by caption into [`RelevanceList`]s.
///
/// Lists whose ratings are all zero are dropped; the second return value
/// counts them. Item order within a list follows file order.
pub fn load_ratings(path: &Path) -> Result<(Vec<RelevanceList>, usize)> {
    let mut reader = open_csv(path)?;
    let mut grouped: IndexMap<String, Vec<(String, f64)>> = IndexMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = record_line(&row);
        if row.len() != 3 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 3 fields (caption_id,audio_id,rating), got {}", row.len()),
            ));
        }
        let caption_id = row[0].to_string();
        let audio_id = row[1].to_string();
        let rating: f64 = row[2].trim().parse().map_err(|_| {
            Error::parse(path, line, format!("non-numeric rating {:?}", &row[2]))
        })?;
        if !rating.is_finite() || !(0.0..=100.0).contains(&rating) {
            return Err(Error::parse(
                path,
                line,
                format!("caption {caption_id:?}, audio {audio_id:?}: rating {rating} outside [0, 100]"),
            ));
        }
        if !seen.insert((caption_id.clone(), audio_id.clone())) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate (caption, audio) key ({caption_id:?}, {audio_id:?})"),
            ));
        }
        grouped.entry(caption_id).or_default().push((audio_id, rating));
    }

    let mut lists = Vec::new();
    let mut dropped = 0usize;
    for (caption_id, items) in grouped {
        if items.iter().all(|(_, r)| *r == 0.0) {
            dropped += 1;
            continue;
        }
        lists.push(RelevanceList::new(caption_id, items)?);
    }
    Ok((lists, dropped))
}

/// Writes relevance lists back out in the ratings CSV format.
pub fn write_ratings(path: &Path, lists: &[RelevanceList]) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(out, "caption_id,audio_id,rating").map_err(|e| Error::io(path, e))?;
    for list in lists {
        for (audio_id, rating) in &list.items {
            writeln!(out, "{},{},{}", list.caption_id, audio_id, rating)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Loads a pairs CSV (`caption_id,audio_id`).
pub fn load_pairs(path: &Path) -> Result<PairSet> {
    let mut reader = open_csv(path)?;
    let mut pairs = PairSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = record_line(&row);
        if row.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 2 fields (caption_id,audio_id), got {}", row.len()),
            ));
        }
        pairs
            .insert(row[0].to_string(), row[1].to_string())
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
    }
    Ok(pairs)
}

/// Writes a pairs CSV.
pub fn write_pairs(path: &Path, pairs: &PairSet) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(out, "caption_id,audio_id").map_err(|e| Error::io(path, e))?;
    for (caption_id, audio_id) in pairs.iter() {
        writeln!(out, "{caption_id},{audio_id}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Loads a features CSV; the dimension is inferred from the header width.
pub fn load_features(path: &Path) -> Result<FeatureTable> {
    let mut reader = open_csv(path)?;
    let header_len = reader
        .headers()
        .map_err(|e| Error::parse(path, None, e.to_string()))?
        .len();
    if header_len < 1 {
        return Err(Error::parse(path, Some(1), "empty header"));
    }
    let dimension = header_len - 1;
    let mut table = FeatureTable::new(dimension);
    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = record_line(&row);
        if row.len() != header_len {
            return Err(Error::parse(
                path,
                line,
                format!("expected {header_len} fields, got {}", row.len()),
            ));
        }
        let id = row[0].to_string();
        let mut vector = Vec::with_capacity(dimension);
        for (col, field) in row.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(path, line, format!("row {id:?}, column f{col}: non-numeric value {field:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("row {id:?}, column f{col}: non-finite value {field:?}"),
                ));
            }
            vector.push(v);
        }
        table
            .insert(id, vector)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
    }
    Ok(table)
}

/// Writes a features CSV with header `id,f0,f1,...`.
pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((0..table.dimension()).map(|i| format!("f{i}")))
        .collect();
    writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for (id, vector) in table.iter() {
        let fields: Vec<String> = vector.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{id},{}", fields.join(",")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Loads a splits CSV (`caption_id,subset`).
pub fn load_splits(path: &Path) -> Result<SplitSpec> {
    let mut reader = open_csv(path)?;
    let mut development = IndexSet::new();
    let mut validation = IndexSet::new();
    let mut evaluation = IndexSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = record_line(&row);
        if row.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 2 fields (caption_id,subset), got {}", row.len()),
            ));
        }
        let subset = Subset::parse(&row[1]).ok_or_else(|| {
            Error::parse(path, line, format!("unknown subset {:?}", &row[1]))
        })?;
        let target = match subset {
            Subset::Development => &mut development,
            Subset::Validation => &mut validation,
            Subset::Evaluation => &mut evaluation,
        };
        target.insert(row[0].to_string());
    }
    SplitSpec::new(development, validation, evaluation)
}

/// Writes a splits CSV.
pub fn write_splits(path: &Path, splits: &SplitSpec) -> Result<()> {
    let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(out, "caption_id,subset").map_err(|e| Error::io(path, e))?;
    for (set, name) in [
        (&splits.development, "development"),
        (&splits.validation, "validation"),
        (&splits.evaluation, "evaluation"),
    ] {
        for id in set {
            writeln!(out, "{id},{name}").map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Replaces each rating with 100 if the (caption, audio) pair is a positive
/// correspondence and 0 otherwise. Building block for training on binary
/// relevances with the listwise objective.
pub fn binarize_ratings(lists: &[RelevanceList], pairs: &PairSet) -> Result<Vec<RelevanceList>> {
    lists
        .iter()
        .map(|list| {
            let positive = pairs.positive_of(&list.caption_id).ok_or_else(|| {
                Error::record(format!(
                    "caption {:?} has no positive pair to binarize against",
                    list.caption_id
                ))
            })?;
            let items: Vec<(String, f64)> = list
                .items
                .iter()
                .map(|(audio_id, _)| {
                    let rating = if audio_id == positive { 100.0 } else { 0.0 };
                    (audio_id.clone(), rating)
                })
                .collect();
            if items.iter().all(|(_, r)| *r == 0.0) {
                return Err(Error::record(format!(
                    "caption {:?}: positive audio {positive:?} is not among its list items",
                    list.caption_id
                )));
            }
            RelevanceList::new(list.caption_id.clone(), items)
        })
        .collect()
}

/// Everything the synthetic generator produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub audio: FeatureTable,
    pub captions: FeatureTable,
    pub pairs: PairSet,
    pub lists: Vec<RelevanceList>,
}

/// Dimension of the latent space the generator samples in. Kept small so
/// that latent cosines, and hence ground-truth ratings, spread over the
/// whole scale instead of concentrating near 50.
const LATENT_DIM: usize = 4;

/// Generates a deterministic desk-scale dataset.
///
/// Each audio item gets a latent unit vector; each caption shares the
/// latent of its positive audio. Observed features are a fixed random
/// linear map of the latent plus isotropic Gaussian noise of scale
/// `noise`. The ground-truth rating of (caption, audio) is
/// `50 * (1 + cos(latents))` clipped to `[0, 100]`, so with `noise = 0`
/// every caption rates its own positive audio at exactly 100. Each
/// relevance list holds the positive audio plus `list_size - 1` distractors
/// sampled uniformly without replacement.
pub fn generate_synthetic(
    seed: u64,
    n_captions: usize,
    n_audio: usize,
    d: usize,
    list_size: usize,
    noise: f64,
) -> Result<SyntheticData> {
    if n_captions == 0 || n_audio == 0 || d == 0 || list_size < 2 {
        return Err(Error::config(format!(
            "sizes must be positive and list_size >= 2 (captions={n_captions}, audio={n_audio}, d={d}, list_size={list_size})"
        )));
    }
    if list_size > n_audio {
        return Err(Error::config(format!(
            "list_size {list_size} exceeds number of audio items {n_audio}"
        )));
    }
    if n_captions > n_audio {
        return Err(Error::config(format!(
            "n_captions {n_captions} exceeds n_audio {n_audio} (one positive audio per caption)"
        )));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::config(format!("noise must be finite and >= 0, got {noise}")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Fixed random linear map from latent space to observed feature space.
    let mut map = vec![0.0f64; d * LATENT_DIM];
    for entry in &mut map {
        *entry = rng.sample(StandardNormal);
    }

    let mut latents: Vec<[f64; LATENT_DIM]> = Vec::with_capacity(n_audio);
    for _ in 0..n_audio {
        loop {
            let mut v = [0.0f64; LATENT_DIM];
            for x in &mut v {
                *x = rng.sample(StandardNormal);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                for x in &mut v {
                    *x /= norm;
                }
                latents.push(v);
                break;
            }
        }
    }

    let observe = |latent: &[f64; LATENT_DIM], rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|i| {
                let signal: f64 = (0..LATENT_DIM)
                    .map(|k| map[i * LATENT_DIM + k] * latent[k])
                    .sum();
                let eps: f64 = rng.sample(StandardNormal);
                signal + noise * eps
            })
            .collect()
    };

    let mut audio = FeatureTable::new(d);
    for (i, latent) in latents.iter().enumerate() {
        let features = observe(latent, &mut rng);
        audio.insert(format!("a{i:04}"), features)?;
    }

    let mut captions = FeatureTable::new(d);
    let mut pairs = PairSet::new();
    for i in 0..n_captions {
        let features = observe(&latents[i], &mut rng);
        let caption_id = format!("c{i:04}");
        captions.insert(caption_id.clone(), features)?;
        pairs.insert(caption_id, format!("a{i:04}"))?;
    }

    let ground_truth = |ci: usize, ai: usize| -> f64 {
        let cos: f64 = (0..LATENT_DIM).map(|k| latents[ci][k] * latents[ai][k]).sum();
        (50.0 * (1.0 + cos)).clamp(0.0, 100.0)
    };

    // Candidate lists mimic a rating-collection setup where annotators see a
    // mix of retrieved (similar) and random clips: half of the distractors are
    // drawn from the audio most similar to the caption in latent space, the
    // rest uniformly. This yields lists with genuinely graded relevance rather
    // than one positive among near-zero items.
    let mut lists = Vec::with_capacity(n_captions);
    let n_hard = 3 * (list_size - 1) / 4;
    let neighborhood = (3 * n_hard / 2).max(1).min(n_audio - 1);
    for ci in 0..n_captions {
        let mut by_similarity: Vec<usize> = (0..n_audio).filter(|&a| a != ci).collect();
        by_similarity
            .sort_by(|&a, &b| ground_truth(ci, b).total_cmp(&ground_truth(ci, a)).then(a.cmp(&b)));
        let mut near = by_similarity[..neighborhood].to_vec();
        let mut far = by_similarity[neighborhood..].to_vec();
        near.shuffle(&mut rng);
        far.shuffle(&mut rng);
        let mut chosen: Vec<usize> = near.iter().copied().take(n_hard).collect();
        chosen.extend(far.iter().copied().take(list_size - 1 - chosen.len()));
        if chosen.len() < list_size - 1 {
            chosen.extend(near.iter().copied().skip(n_hard).take(list_size - 1 - chosen.len()));
        }
        let mut items = vec![(format!("a{ci:04}"), ground_truth(ci, ci))];
        for &ai in &chosen {
            items.push((format!("a{ai:04}"), ground_truth(ci, ai)));
        }
        lists.push(RelevanceList::new(format!("c{ci:04}"), items)?);
    }

    Ok(SyntheticData {
        audio,
        captions,
        pairs,
        lists,
    })
}

/// Deterministically partitions caption ids into development/validation/
/// evaluation subsets with roughly the given fractions.
pub fn split_captions<'a>(
    caption_ids: impl Iterator<Item = &'a str>,
    seed: u64,
    dev_frac: f64,
    val_frac: f64,
) -> Result<SplitSpec> {
    if !(0.0..=1.0).contains(&dev_frac) || !(0.0..=1.0).contains(&val_frac) || dev_frac + val_frac > 1.0 {
        return Err(Error::config(format!(
            "split fractions must be in [0, 1] and sum to at most 1 (dev={dev_frac}, val={val_frac})"
        )));
    }
    let mut ids: Vec<String> = caption_ids.map(str::to_string).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len();
    let n_dev = (n as f64 * dev_frac).round() as usize;
    let n_val = (n as f64 * val_frac).round() as usize;
    let n_dev = n_dev.min(n);
    let n_val = n_val.min(n - n_dev);
    let development: IndexSet<String> = ids[..n_dev].iter().cloned().collect();
    let validation: IndexSet<String> = ids[n_dev..n_dev + n_val].iter().cloned().collect();
    let evaluation: IndexSet<String> = ids[n_dev + n_val..].iter().cloned().collect();
    SplitSpec::new(development, validation, evaluation)
}
