//! Rating-analysis machinery: entropy features from sound-event
//! probability matrices, text count features, and a feature-vs-target
//! Pearson correlation table with significance markers.
//!
//! File formats:
//! - probability matrices: one headerless CSV per clip named
//!   `<audio_id>.csv`, rows = frames, columns = classes
//! - analysis table: CSV with a header naming all columns; the
//!   `pair_id` column is mandatory
//! - lexicons: one lowercase word per line, UTF-8
//! - correlation table output: CSV with cells `r;marker`

use std::collections::HashSet;
use std::io::Write as _;
use std::path::Path;

use indexmap::{IndexMap, IndexSet};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::metrics::pearson;

/// Frame-by-class detector probabilities for one audio clip. Entries are
/// in [0, 1] but rows need not sum to 1 (multi-label detector outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    pub audio_id: String,
    values: Array2<f64>,
}

impl ProbabilityMatrix {
    pub fn new(audio_id: String, values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::record(format!(
                "probability matrix {audio_id:?} must have at least one frame and one class"
            )));
        }
        for ((t, c), v) in values.indexed_iter() {
            if !v.is_finite() || !(0.0..=1.0).contains(v) {
                return Err(Error::record(format!(
                    "probability matrix {audio_id:?}, frame {t}, class {c}: value {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { audio_id, values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.values.ncols()
    }
}

/// Loads one `<audio_id>.csv` probability matrix (no header).
pub fn load_probability_matrix(path: &Path) -> Result<ProbabilityMatrix> {
    let audio_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::parse(path, None, "cannot derive audio id from file name"))?
        .to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, None, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = row.position().map(|p| p.line());
        let mut values = Vec::with_capacity(row.len());
        for field in row.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(path, line, format!("non-numeric probability {field:?}"))
            })?;
            values.push(v);
        }
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::parse(
                    path,
                    line,
                    format!("row width {} differs from {}", values.len(), first.len()),
                ));
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, None, "empty probability matrix"));
    }
    let n_cols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((flat.len() / n_cols, n_cols), flat)
        .map_err(|e| Error::parse(path, None, e.to_string()))?;
    ProbabilityMatrix::new(audio_id, values)
}

/// Shannon entropy in bits of an unnormalized non-negative vector. The
/// input is normalized to sum 1 first; `0 log 0` terms contribute 0.
pub fn entropy(p: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, v) in p.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 {
            return Err(Error::record(format!(
                "entropy input[{i}] = {v} must be finite and >= 0"
            )));
        }
        total += v;
    }
    if total <= 0.0 {
        return Err(Error::degenerate("entropy of an all-zero vector".to_string()));
    }
    let mut h = 0.0;
    for v in p {
        let pi = v / total;
        if pi > 0.0 {
            h -= pi * pi.log2();
        }
    }
    Ok(h.max(0.0))
}

/// Entropy across sound classes: rows are averaged over time into one
/// class vector, which is normalized before taking the entropy.
pub fn e_class(m: &ProbabilityMatrix) -> Result<f64> {
    let means = m.values().mean_axis(ndarray::Axis(0)).expect("non-empty");
    entropy(means.as_slice().unwrap())
}

/// Entropy over time: columns are averaged over classes into one frame
/// vector, which is normalized before taking the entropy.
pub fn e_time(m: &ProbabilityMatrix) -> Result<f64> {
    let means = m.values().mean_axis(ndarray::Axis(1)).expect("non-empty");
    entropy(means.as_slice().unwrap())
}

/// An ordered most-frequent-first word list, optionally cut to a prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyList {
    words: Vec<String>,
    lookup: HashSet<String>,
}

impl FrequencyList {
    /// Validates that entries are unique and lowercase; applies the cutoff
    /// when given.
    pub fn new(words: Vec<String>, cutoff: Option<usize>) -> Result<Self> {
        let words: Vec<String> = match cutoff {
            Some(n) => words.into_iter().take(n).collect(),
            None => words,
        };
        let mut lookup = HashSet::new();
        for w in &words {
            if w.chars().any(|c| c.is_uppercase()) {
                return Err(Error::record(format!("lexicon word {w:?} is not lowercase")));
            }
            if !lookup.insert(w.clone()) {
                return Err(Error::record(format!("duplicate lexicon word {w:?}")));
            }
        }
        Ok(Self { words, lookup })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup.contains(word)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Loads a one-word-per-line lexicon.
pub fn load_lexicon(path: &Path, cutoff: Option<usize>) -> Result<FrequencyList> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let words: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    FrequencyList::new(words, cutoff).map_err(|e| Error::parse(path, None, e.to_string()))
}

/// Lowercases, strips punctuation, and splits on whitespace.
pub fn tokenize(caption: &str) -> Vec<String> {
    caption
        .to_lowercase()
        .split_whitespace()
        .map(|w| w.chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Per-caption token tallies (multiset semantics: duplicates count every
/// time).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TextCounts {
    pub words: usize,
    pub c_words: usize,
    pub fr_words: usize,
    pub fr_c_words: usize,
}

/// Counts tokens, content words, frequent words, and frequent content
/// words in one lowercase token sequence.
pub fn text_counts(tokens: &[String], freq: &FrequencyList, content_lexicon: &HashSet<String>) -> TextCounts {
    let mut counts = TextCounts::default();
    for token in tokens {
        counts.words += 1;
        let is_content = content_lexicon.contains(token.as_str());
        let is_frequent = freq.contains(token);
        if is_content {
            counts.c_words += 1;
        }
        if is_frequent {
            counts.fr_words += 1;
        }
        if is_content && is_frequent {
            counts.fr_c_words += 1;
        }
    }
    counts
}

fn z_scores(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var <= 0.0 {
        return Err(Error::degenerate(
            "z-score of a constant vector is undefined".to_string(),
        ));
    }
    let sd = var.sqrt();
    Ok(v.iter().map(|x| (x - mean) / sd).collect())
}

/// Per-pair disagreement between human and machine ratings:
/// `|z(hr)_i - z(mr)_i|`, with z-scores over each full vector. The two
/// rating scales differ, so both are standardized before comparison.
pub fn disagreement(hr: &[f64], mr: &[f64]) -> Result<Vec<f64>> {
    if hr.len() != mr.len() {
        return Err(Error::DimensionMismatch {
            expected: hr.len(),
            got: mr.len(),
            context: "disagreement inputs".to_string(),
        });
    }
    if hr.len() < 2 {
        return Err(Error::config("disagreement needs at least 2 pairs".to_string()));
    }
    let zh = z_scores(hr)?;
    let zm = z_scores(mr)?;
    Ok(zh.iter().zip(&zm).map(|(a, b)| (a - b).abs()).collect())
}

/// Column-oriented table of per-pair features and rating characteristics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisTable {
    pair_ids: Vec<String>,
    columns: IndexMap<String, Vec<f64>>,
}

impl AnalysisTable {
    pub fn new(pair_ids: Vec<String>) -> Result<Self> {
        let unique: IndexSet<&String> = pair_ids.iter().collect();
        if unique.len() != pair_ids.len() {
            return Err(Error::record("duplicate pair_id in analysis table".to_string()));
        }
        Ok(Self {
            pair_ids,
            columns: IndexMap::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.pair_ids.len()
    }

    pub fn pair_ids(&self) -> &[String] {
        &self.pair_ids
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    /// Adds a column; its length must match the table's row count.
    pub fn add_column(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.pair_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: self.pair_ids.len(),
                got: values.len(),
                context: format!("analysis column {name:?}"),
            });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::record(format!(
                "analysis column {name:?}, pair {:?}: non-finite value {v}",
                self.pair_ids[i]
            )));
        }
        if self.columns.contains_key(name) {
            return Err(Error::record(format!("duplicate analysis column {name:?}")));
        }
        self.columns.insert(name.to_string(), values);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingId {
                id: name.to_string(),
                context: "analysis table column".to_string(),
            })
    }
}

/// Loads an analysis table CSV; every non-`pair_id` column becomes a
/// numeric column.
pub fn load_analysis_table(path: &Path) -> Result<AnalysisTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, None, e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(path, None, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let pair_idx = headers.iter().position(|h| h == "pair_id").ok_or_else(|| {
        Error::parse(path, Some(1), "missing mandatory pair_id column")
    })?;

    let mut pair_ids = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = row.position().map(|p| p.line());
        if row.len() != headers.len() {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} fields, got {}", headers.len(), row.len()),
            ));
        }
        for (i, field) in row.iter().enumerate() {
            if i == pair_idx {
                pair_ids.push(field.to_string());
            } else {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::parse(
                        path,
                        line,
                        format!("column {:?}: non-numeric value {field:?}", headers[i]),
                    )
                })?;
                columns[i].push(v);
            }
        }
    }

    let mut table = AnalysisTable::new(pair_ids).map_err(|e| Error::parse(path, None, e.to_string()))?;
    for (i, header) in headers.iter().enumerate() {
        if i != pair_idx {
            table
                .add_column(header, std::mem::take(&mut columns[i]))
                .map_err(|e| Error::parse(path, None, e.to_string()))?;
        }
    }
    Ok(table)
}

/// Significance marker of one correlation cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Significance {
    /// p < 0.01
    Strong,
    /// p < 0.05
    Weak,
    /// not significant
    NotSignificant,
}

impl Significance {
    pub fn from_p(p: f64) -> Self {
        if p < 0.01 {
            Significance::Strong
        } else if p < 0.05 {
            Significance::Weak
        } else {
            Significance::NotSignificant
        }
    }

    pub fn marker(self) -> &'static str {
        match self {
            Significance::Strong => "**",
            Significance::Weak => "*",
            Significance::NotSignificant => "n.s.",
        }
    }
}

/// One cell of the correlation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationCell {
    pub r: f64,
    pub p: f64,
    pub significance: Significance,
}

/// Feature-by-target grid of Pearson correlations with markers.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    pub features: Vec<String>,
    pub targets: Vec<String>,
    /// `cells[feature_index][target_index]`.
    pub cells: Vec<Vec<CorrelationCell>>,
}

impl CorrelationTable {
    pub fn cell(&self, feature: &str, target: &str) -> Option<&CorrelationCell> {
        let fi = self.features.iter().position(|f| f == feature)?;
        let ti = self.targets.iter().position(|t| t == target)?;
        Some(&self.cells[fi][ti])
    }

    /// Writes the table as CSV with `r;marker` cells, one row per feature.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let header: Vec<&str> = std::iter::once("feature")
            .chain(self.targets.iter().map(String::as_str))
            .collect();
        writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        for (fi, feature) in self.features.iter().enumerate() {
            let mut fields = vec![feature.clone()];
            for cell in &self.cells[fi] {
                fields.push(format!("{:.3};{}", cell.r, cell.significance.marker()));
            }
            writeln!(out, "{}", fields.join(",")).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

/// Pearson r and its significance for every (feature, target) column
/// pair. Markers follow the p < 0.05 / p < 0.01 thresholds.
pub fn correlation_table(
    table: &AnalysisTable,
    targets: &[&str],
    features: &[&str],
) -> Result<CorrelationTable> {
    let mut cells = Vec::with_capacity(features.len());
    for feature in features {
        let fcol = table.column(feature)?;
        let mut row = Vec::with_capacity(targets.len());
        for target in targets {
            let tcol = table.column(target)?;
            let result = pearson(fcol, tcol)?;
            row.push(CorrelationCell {
                r: result.coefficient,
                p: result.p_value,
                significance: Significance::from_p(result.p_value),
            });
        }
        cells.push(row);
    }
    Ok(CorrelationTable {
        features: features.iter().map(|s| s.to_string()).collect(),
        targets: targets.iter().map(|s| s.to_string()).collect(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr2;

    fn matrix(values: Array2<f64>) -> ProbabilityMatrix {
        ProbabilityMatrix::new("clip".to_string(), values).unwrap()
    }

    #[test]
    fn entropy_uniform_four_classes() {
        assert_abs_diff_eq!(entropy(&[0.25; 4]).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn entropy_point_mass_is_zero() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn entropy_hand_worked() {
        assert_abs_diff_eq!(entropy(&[0.5, 0.25, 0.25]).unwrap(), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn entropy_is_scale_invariant() {
        let p = [0.2, 0.5, 0.1, 0.7];
        let scaled: Vec<f64> = p.iter().map(|v| v * 13.7).collect();
        assert_abs_diff_eq!(entropy(&p).unwrap(), entropy(&scaled).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_rejects_all_zero() {
        assert!(entropy(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn e_class_single_dominant_class() {
        let m = matrix(arr2(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]));
        assert_eq!(e_class(&m).unwrap(), 0.0);
    }

    #[test]
    fn e_class_uniform_is_log2_c() {
        let m = matrix(Array2::from_elem((5, 8), 0.3));
        assert_abs_diff_eq!(e_class(&m).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn e_time_single_frame_is_zero() {
        let m = matrix(arr2(&[[0.2, 0.9, 0.4]]));
        assert_eq!(e_time(&m).unwrap(), 0.0);
    }

    #[test]
    fn e_time_uniform_frames_is_log2_t() {
        let m = matrix(Array2::from_elem((4, 3), 0.5));
        assert_abs_diff_eq!(e_time(&m).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_features_of_1x1_matrix_are_zero() {
        let m = matrix(arr2(&[[0.7]]));
        assert_eq!(e_class(&m).unwrap(), 0.0);
        assert_eq!(e_time(&m).unwrap(), 0.0);
    }

    #[test]
    fn tokenize_strips_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("People speak, to each other; a CAT sighs!"),
            vec!["people", "speak", "to", "each", "other", "a", "cat", "sighs"]
        );
    }

    #[test]
    fn text_counts_empty_caption() {
        let freq = FrequencyList::new(vec![], None).unwrap();
        let counts = text_counts(&[], &freq, &HashSet::new());
        assert_eq!(counts, TextCounts::default());
    }

    #[test]
    fn text_counts_hand_worked() {
        let freq = FrequencyList::new(vec!["a".to_string(), "cat".to_string()], None).unwrap();
        let content: HashSet<String> = ["cat", "sighs"].iter().map(|s| s.to_string()).collect();
        let tokens = tokenize("a cat sighs");
        let counts = text_counts(&tokens, &freq, &content);
        assert_eq!(
            counts,
            TextCounts {
                words: 3,
                c_words: 2,
                fr_words: 2,
                fr_c_words: 1
            }
        );
    }

    #[test]
    fn text_counts_multiset_semantics() {
        let freq = FrequencyList::new(vec!["cat".to_string()], None).unwrap();
        let content: HashSet<String> = ["cat".to_string()].into_iter().collect();
        let tokens = tokenize("cat cat");
        let counts = text_counts(&tokens, &freq, &content);
        assert_eq!(counts.words, 2);
        assert_eq!(counts.c_words, 2);
        assert_eq!(counts.fr_words, 2);
        assert_eq!(counts.fr_c_words, 2);
    }

    #[test]
    fn text_counts_ordering_invariant() {
        let freq = FrequencyList::new(
            vec!["a".to_string(), "water".to_string(), "cat".to_string()],
            None,
        )
        .unwrap();
        let content: HashSet<String> = ["water", "cat", "flows"].iter().map(|s| s.to_string()).collect();
        let tokens = tokenize("water flows past a cat near water");
        let c = text_counts(&tokens, &freq, &content);
        assert!(c.fr_c_words <= c.fr_words.min(c.c_words));
        assert!(c.fr_words.min(c.c_words) <= c.words);
    }

    #[test]
    fn disagreement_affine_related_is_zero() {
        let hr = [10.0, 40.0, 90.0, 65.0];
        let mr: Vec<f64> = hr.iter().map(|h| 0.01 * h - 0.3).collect();
        let d = disagreement(&hr, &mr).unwrap();
        for di in d {
            assert_abs_diff_eq!(di, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn disagreement_of_negation_doubles_z() {
        let hr = [-2.0, -1.0, 1.0, 2.0]; // already mean 0, z-symmetric
        let mr: Vec<f64> = hr.iter().map(|h| -h).collect();
        let d = disagreement(&hr, &mr).unwrap();
        let zh = z_scores(&hr).unwrap();
        for (di, zi) in d.iter().zip(&zh) {
            assert_abs_diff_eq!(*di, 2.0 * zi.abs(), epsilon = 1e-12);
        }
    }

    #[test]
    fn disagreement_permutes_with_pairs() {
        let hr = [10.0, 40.0, 90.0, 65.0];
        let mr = [0.1, -0.5, 0.9, 0.3];
        let d = disagreement(&hr, &mr).unwrap();
        let perm = [2usize, 0, 3, 1];
        let hr_p: Vec<f64> = perm.iter().map(|&i| hr[i]).collect();
        let mr_p: Vec<f64> = perm.iter().map(|&i| mr[i]).collect();
        let d_p = disagreement(&hr_p, &mr_p).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_abs_diff_eq!(d_p[k], d[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn disagreement_rejects_constant_input() {
        assert!(disagreement(&[1.0, 1.0, 1.0], &[0.1, 0.2, 0.3]).is_err());
    }

    #[test]
    fn correlation_table_perfect_feature_is_strongly_significant() {
        let n = 12;
        let mut table = AnalysisTable::new((0..n).map(|i| format!("p{i}")).collect()).unwrap();
        let values: Vec<f64> = (0..n).map(|i| i as f64 * 1.5 - 3.0).collect();
        table.add_column("HR", values.clone()).unwrap();
        table.add_column("feat", values).unwrap();
        let out = correlation_table(&table, &["HR"], &["feat"]).unwrap();
        let cell = out.cell("feat", "HR").unwrap();
        assert_abs_diff_eq!(cell.r, 1.0, epsilon = 1e-12);
        assert_eq!(cell.significance, Significance::Strong);
    }

    #[test]
    fn correlation_table_is_symmetric_under_swap() {
        let mut table = AnalysisTable::new((0..8).map(|i| format!("p{i}")).collect()).unwrap();
        table
            .add_column("a", vec![1.0, 3.0, 2.0, 5.0, 4.0, 7.0, 6.0, 8.0])
            .unwrap();
        table
            .add_column("b", vec![2.0, 1.0, 4.0, 3.0, 6.0, 5.0, 8.0, 7.0])
            .unwrap();
        let ab = correlation_table(&table, &["b"], &["a"]).unwrap();
        let ba = correlation_table(&table, &["a"], &["b"]).unwrap();
        assert_eq!(
            ab.cell("a", "b").unwrap().r,
            ba.cell("b", "a").unwrap().r
        );
    }

    #[test]
    fn correlation_table_rejects_missing_column() {
        let mut table = AnalysisTable::new(vec!["p0".to_string(), "p1".to_string(), "p2".to_string()]).unwrap();
        table.add_column("HR", vec![1.0, 2.0, 3.0]).unwrap();
        assert!(correlation_table(&table, &["HR"], &["missing"]).is_err());
    }

    #[test]
    fn analysis_table_rejects_ragged_column() {
        let mut table = AnalysisTable::new(vec!["p0".to_string(), "p1".to_string()]).unwrap();
        assert!(table.add_column("x", vec![1.0]).is_err());
    }
}
