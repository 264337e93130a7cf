//! Labeled text datasets: loading, saving, tokenization, stratified splits
//! and externally computed class-probability files.
//!
//! Two on-disk formats share one record shape: `id` (optional), `text`,
//! `text_pair` (optional) and `label`. JSONL holds one object per line; CSV
//! uses RFC-4180 quoting with a mandatory header row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{normalize_restricted, ScoreSource, ScoreTable};

/// One labeled text instance. `id` is dense within its dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_pair: Option<String>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl DataFormat {
    /// Infers the format from a file extension (`.jsonl`/`.json` or `.csv`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Some(DataFormat::Jsonl),
            "csv" => Some(DataFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub class_count: usize,
    pub label_names: Vec<String>,
    pub split_tag: SplitTag,
}

impl Dataset {
    /// Builds a dataset, checking dense ids, label range and label names.
    pub fn new(
        examples: Vec<Example>,
        class_count: usize,
        label_names: Option<Vec<String>>,
        split_tag: SplitTag,
    ) -> Result<Self> {
        if class_count < 2 {
            return Err(Error::InvalidDataset(format!(
                "class_count must be at least 2, got {class_count}"
            )));
        }
        let label_names =
            label_names.unwrap_or_else(|| (0..class_count).map(|c| c.to_string()).collect());
        let mut distinct = label_names.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() != class_count || label_names.len() != class_count {
            return Err(Error::InvalidDataset(format!(
                "expected {class_count} distinct label names, got {:?}",
                label_names
            )));
        }
        for (pos, ex) in examples.iter().enumerate() {
            if ex.id != pos {
                return Err(Error::InvalidDataset(format!(
                    "example at position {pos} has id {}, ids must be dense",
                    ex.id
                )));
            }
            if ex.label >= class_count {
                return Err(Error::LabelOutOfRange {
                    line: pos + 1,
                    label: ex.label as i64,
                    class_count,
                });
            }
        }
        Ok(Dataset {
            examples,
            class_count,
            label_names,
            split_tag,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    /// Per-class example counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    /// Copies the examples at `parent_ids` (in that order) into a new dataset
    /// with dense ids.
    pub fn subset(&self, parent_ids: &[usize], split_tag: SplitTag) -> Dataset {
        let examples = parent_ids
            .iter()
            .enumerate()
            .map(|(id, &pid)| Example {
                id,
                ..self.examples[pid].clone()
            })
            .collect();
        Dataset {
            examples,
            class_count: self.class_count,
            label_names: self.label_names.clone(),
            split_tag,
        }
    }
}

/// A dataset carved out of a parent, remembering where each example came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Subset {
    pub dataset: Dataset,
    /// `parent_ids[i]` is the parent id of `dataset.examples[i]`.
    pub parent_ids: Vec<usize>,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    #[serde(default)]
    id: Option<u64>,
    text: String,
    #[serde(default)]
    text_pair: Option<String>,
    label: i64,
}

impl RawRecord {
    fn into_example(self, pos: usize, line: usize, class_count: usize) -> Result<Example> {
        if let Some(id) = self.id {
            if id != pos as u64 {
                return Err(Error::MalformedRecord {
                    line,
                    reason: format!("id {id} does not match record position {pos}"),
                });
            }
        }
        if self.label < 0 || self.label as u64 >= class_count as u64 {
            return Err(Error::LabelOutOfRange {
                line,
                label: self.label,
                class_count,
            });
        }
        Ok(Example {
            id: pos,
            text: self.text,
            text_pair: self.text_pair.filter(|p| !p.is_empty()),
            label: self.label as usize,
        })
    }
}

/// Loads a dataset as the training split. Ids are assigned densely in file
/// order; an explicit `id` field must agree with that position.
pub fn load_dataset(path: &Path, format: DataFormat, class_count: usize) -> Result<Dataset> {
    load_dataset_as(path, format, class_count, SplitTag::Train)
}

pub fn load_dataset_as(
    path: &Path,
    format: DataFormat,
    class_count: usize,
    split_tag: SplitTag,
) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let examples = match format {
        DataFormat::Jsonl => read_jsonl(path, BufReader::new(file), class_count)?,
        DataFormat::Csv => read_csv(BufReader::new(file), class_count)?,
    };
    if examples.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Dataset::new(examples, class_count, None, split_tag)
}

fn read_jsonl<R: BufRead>(path: &Path, reader: R, class_count: usize) -> Result<Vec<Example>> {
    let mut examples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        let pos = examples.len();
        examples.push(raw.into_example(pos, idx + 1, class_count)?);
    }
    Ok(examples)
}

fn read_csv<R: std::io::Read>(reader: R, class_count: usize) -> Result<Vec<Example>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut examples = Vec::new();
    for record in rdr.deserialize::<RawRecord>() {
        let line = examples.len() + 2;
        let raw = record.map_err(|e| Error::MalformedRecord {
            line: e.position().map(|p| p.line() as usize).unwrap_or(line),
            reason: e.to_string(),
        })?;
        let pos = examples.len();
        examples.push(raw.into_example(pos, line, class_count)?);
    }
    Ok(examples)
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: usize,
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    text_pair: Option<&'a str>,
    label: usize,
}

/// Writes a dataset in either format. CSV output carries a `text_pair`
/// column only when some example has a pair; an empty cell reads back as
/// "no pair".
pub fn save_dataset(dataset: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        DataFormat::Jsonl => {
            for ex in &dataset.examples {
                let rec = OutRecord {
                    id: ex.id,
                    text: &ex.text,
                    text_pair: ex.text_pair.as_deref(),
                    label: ex.label,
                };
                serde_json::to_writer(&mut out, &rec)?;
                out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
        }
        DataFormat::Csv => {
            let with_pair = dataset.examples.iter().any(|e| e.text_pair.is_some());
            let mut wtr = csv::Writer::from_writer(&mut out);
            if with_pair {
                wtr.write_record(["id", "text", "text_pair", "label"])?;
            } else {
                wtr.write_record(["id", "text", "label"])?;
            }
            for ex in &dataset.examples {
                let id = ex.id.to_string();
                let label = ex.label.to_string();
                if with_pair {
                    let pair = ex.text_pair.as_deref().unwrap_or("");
                    wtr.write_record([id.as_str(), &ex.text, pair, &label])?;
                } else {
                    wtr.write_record([id.as_str(), &ex.text, &label])?;
                }
            }
            wtr.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Lowercased, whitespace-split tokens with leading and trailing
/// non-alphanumeric characters stripped. Tokens that strip to nothing are
/// dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens of the text and of the optional pair, truncated jointly to
/// `max_tokens` (text first).
pub fn example_tokens(example: &Example, max_tokens: Option<usize>) -> (Vec<String>, Vec<String>) {
    let mut text = tokenize(&example.text);
    let mut pair = example
        .text_pair
        .as_deref()
        .map(tokenize)
        .unwrap_or_default();
    if let Some(cap) = max_tokens {
        text.truncate(cap);
        pair.truncate(cap - text.len());
    }
    (text, pair)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLengthIndex {
    pub lengths: Vec<usize>,
}

/// Token count per example, summed over text and pair.
pub fn token_lengths(dataset: &Dataset, max_tokens: Option<usize>) -> TokenLengthIndex {
    let lengths = dataset
        .examples
        .iter()
        .map(|ex| {
            let (a, b) = example_tokens(ex, max_tokens);
            a.len() + b.len()
        })
        .collect();
    TokenLengthIndex { lengths }
}

const SPLIT_TAGS: [SplitTag; 3] = [SplitTag::Train, SplitTag::Validation, SplitTag::Test];

/// Splits a dataset into up to three disjoint parts (train, validation,
/// test in that order) with per-class proportions preserved.
///
/// Each class is shuffled with the seeded generator and cut into
/// contiguous chunks sized by largest-remainder rounding of
/// `fraction * class_size`, so every split is within one example per class
/// of its exact share. Examples keep parent order inside each split.
pub fn stratified_split(dataset: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Subset>> {
    let sum: f64 = fractions.iter().sum();
    if fractions.is_empty()
        || fractions.len() > SPLIT_TAGS.len()
        || fractions.iter().any(|&f| f.is_nan() || f <= 0.0)
        || (sum - 1.0).abs() > 1e-9
    {
        return Err(Error::InvalidFractions(fractions.to_vec()));
    }
    let splits = fractions.len();

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for ex in &dataset.examples {
        by_class.entry(ex.label).or_default().push(ex.id);
    }
    for class in 0..dataset.class_count {
        let count = by_class.get(&class).map_or(0, Vec::len);
        if count < splits {
            return Err(Error::ClassTooSmall {
                class,
                count,
                splits,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); splits];
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        let quotas = largest_remainder(members.len(), fractions);
        let mut start = 0;
        for (split, q) in quotas.into_iter().enumerate() {
            assigned[split].extend_from_slice(&members[start..start + q]);
            start += q;
        }
    }

    Ok(assigned
        .into_iter()
        .zip(SPLIT_TAGS)
        .map(|(mut ids, tag)| {
            ids.sort_unstable();
            Subset {
                dataset: dataset.subset(&ids, tag),
                parent_ids: ids,
            }
        })
        .collect())
}

/// Integer allocation of `total` by `fractions`, ties toward earlier parts.
fn largest_remainder(total: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
    let mut left = total.saturating_sub(quotas.iter().sum());
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - quotas[a] as f64;
        let rb = exact[b] - quotas[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        quotas[i] += 1;
        left -= 1;
    }
    quotas
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: usize,
    pub probs: Vec<f64>,
}

/// Reads `{id, probs}` JSONL produced outside this crate (for instance by a
/// prompted masked language model) and turns it into a score table.
pub fn load_external_scores(path: &Path, dataset: &Dataset) -> Result<ScoreTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; dataset.len()];
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if rec.id >= dataset.len() {
            return Err(Error::UnknownScoreId {
                id: rec.id,
                len: dataset.len(),
            });
        }
        if rec.probs.len() != dataset.class_count {
            return Err(Error::ClassCountMismatch {
                id: rec.id,
                expected: dataset.class_count,
                got: rec.probs.len(),
            });
        }
        if slots[rec.id].is_some() {
            return Err(Error::DuplicateScore(rec.id));
        }
        slots[rec.id] = Some(rec.probs);
    }
    let mut dists = Vec::with_capacity(dataset.len());
    for (id, slot) in slots.into_iter().enumerate() {
        let probs = slot.ok_or(Error::MissingScore(id))?;
        let dist = normalize_restricted(&probs).map_err(|e| Error::Provider {
            id,
            reason: e.to_string(),
        })?;
        dists.push(dist);
    }
    ScoreTable::from_distributions(dists, ScoreSource::External)
}
