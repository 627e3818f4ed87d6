//! Corpus readers (simple TSV and ASAP-AES) and deterministic train/test splits.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::textmodel::{Dataset, Instance, LabelSpec};

/// Per-prompt score ranges of the ASAP-AES essay sets, from the dataset's own
/// documentation.
pub const ASAP_SCORE_RANGES: [(i64, i64); 8] = [
    (2, 12),
    (1, 6),
    (0, 3),
    (0, 3),
    (0, 4),
    (0, 4),
    (0, 30),
    (0, 60),
];

pub fn asap_label_spec(prompt_id: i64) -> Result<LabelSpec> {
    if !(1..=8).contains(&prompt_id) {
        return Err(Error::UnknownPrompt(prompt_id));
    }
    let (lo, hi) = ASAP_SCORE_RANGES[(prompt_id - 1) as usize];
    LabelSpec::new(lo, hi)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(bytes))
}

// ASAP ships as Windows-1252/Latin-1; fall back to a byte-wise decode when the
// file is not valid UTF-8.
fn decode(bytes: Vec<u8>) -> String {
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split('\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

fn split_row(line_no: usize, line: &str) -> Result<(&str, &str)> {
    let (label, text) = line.split_once('\t').ok_or_else(|| Error::MalformedRow {
        line: line_no,
        reason: "expected `label<TAB>text`".into(),
    })?;
    if text.contains('\t') {
        return Err(Error::MalformedRow {
            line: line_no,
            reason: "text contains a tab".into(),
        });
    }
    Ok((label, text))
}

fn infer_spec(labels: impl Iterator<Item = i64>) -> Result<LabelSpec> {
    let (lo, hi) = labels.fold((i64::MAX, i64::MIN), |(lo, hi), l| (lo.min(l), hi.max(l)));
    if lo == hi {
        log::warn!("all labels equal {lo}; widening inferred range to [{lo}, {}]", lo + 1);
        return LabelSpec::new(lo, lo + 1);
    }
    LabelSpec::new(lo, hi)
}

/// Parses simple TSV content: one `label<TAB>text` per non-blank line.
///
/// Instance ids are 1-based line numbers. Without `spec` the range is inferred
/// from the observed labels.
pub fn parse_tsv(content: &str, name: &str, spec: Option<LabelSpec>) -> Result<Dataset> {
    let mut rows = Vec::new();
    for (line_no, line) in lines(content) {
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = split_row(line_no, line)?;
        let label: i64 = label.trim().parse().map_err(|_| Error::BadLabel {
            line: line_no,
            value: label.to_string(),
        })?;
        if let Some(spec) = spec {
            if !spec.contains(label) {
                return Err(spec.out_of_range(label, Some(line_no)));
            }
        }
        rows.push(Instance::new(line_no.to_string(), text, Some(label)));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let spec = match spec {
        Some(s) => s,
        None => infer_spec(rows.iter().filter_map(|r| r.label))?,
    };
    Dataset::new(name, spec, rows)
}

pub fn read_tsv(path: impl AsRef<Path>, spec: Option<LabelSpec>) -> Result<Dataset> {
    let path = path.as_ref();
    parse_tsv(&read_text(path)?, &dataset_name(path), spec)
        .map_err(|e| e.context(path.display().to_string()))
}

/// Like [`parse_tsv`], but labels are class names. Distinct names are sorted
/// lexicographically and mapped to `0..K`; the name table is returned.
pub fn parse_tsv_named(content: &str, name: &str) -> Result<(Dataset, Vec<String>)> {
    let mut rows = Vec::new();
    for (line_no, line) in lines(content) {
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = split_row(line_no, line)?;
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::BadLabel {
                line: line_no,
                value: String::new(),
            });
        }
        rows.push((line_no, label.to_string(), text.to_string()));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let names: Vec<String> = rows
        .iter()
        .map(|(_, l, _)| l.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<&str, i64> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i as i64))
        .collect();
    let spec = LabelSpec::new(0, (names.len() as i64 - 1).max(1))?;
    let instances = rows
        .iter()
        .map(|(line_no, l, t)| Instance::new(line_no.to_string(), t.clone(), Some(index[l.as_str()])))
        .collect();
    Ok((Dataset::new(name, spec, instances)?, names))
}

pub fn read_tsv_named(path: impl AsRef<Path>) -> Result<(Dataset, Vec<String>)> {
    let path = path.as_ref();
    parse_tsv_named(&read_text(path)?, &dataset_name(path))
        .map_err(|e| e.context(path.display().to_string()))
}

/// Serializes labeled instances back to simple TSV.
pub fn write_tsv(ds: &Dataset) -> Result<String> {
    let mut out = String::new();
    for inst in ds.iter() {
        let label = inst.label.ok_or_else(|| Error::InvalidInstance {
            id: inst.id.clone(),
            reason: "missing gold label".into(),
        })?;
        writeln!(out, "{label}\t{}", inst.text).expect("writing to a String");
    }
    Ok(out)
}

const ASAP_COLUMNS: [&str; 4] = ["essay_id", "essay_set", "essay", "domain1_score"];

/// Parses ASAP-AES TSV content (header row required) and keeps the rows of one
/// prompt. `spec` overrides the built-in per-prompt score range.
pub fn parse_asap(
    content: &str,
    name: &str,
    prompt_id: i64,
    spec: Option<LabelSpec>,
) -> Result<Dataset> {
    let spec = match spec {
        Some(s) => s,
        None => asap_label_spec(prompt_id)?,
    };
    let mut it = lines(content).filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = it.next().ok_or(Error::EmptyDataset)?;
    let header: Vec<&str> = header.split('\t').map(str::trim).collect();
    let mut cols = [0usize; 4];
    for (slot, want) in cols.iter_mut().zip(ASAP_COLUMNS) {
        *slot = header
            .iter()
            .position(|h| *h == want)
            .ok_or_else(|| Error::MissingColumn(want.to_string()))?;
    }
    let [id_col, set_col, essay_col, score_col] = cols;
    let needed = cols.iter().max().copied().unwrap_or(0) + 1;

    let mut rows = Vec::new();
    for (line_no, line) in it {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < needed {
            return Err(Error::MalformedRow {
                line: line_no,
                reason: format!("expected at least {needed} columns, found {}", fields.len()),
            });
        }
        let set: i64 = fields[set_col].trim().parse().map_err(|_| Error::MalformedRow {
            line: line_no,
            reason: format!("bad essay_set {:?}", fields[set_col]),
        })?;
        if set != prompt_id {
            continue;
        }
        let raw_score = fields[score_col].trim();
        let score: i64 = raw_score.parse().map_err(|_| Error::BadLabel {
            line: line_no,
            value: raw_score.to_string(),
        })?;
        if !spec.contains(score) {
            return Err(spec.out_of_range(score, Some(line_no)));
        }
        let mut inst = Instance::new(fields[id_col].trim(), fields[essay_col], Some(score));
        inst.context = Some(format!("prompt {prompt_id}"));
        rows.push(inst);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(format!("{name}-prompt{prompt_id}"), spec, rows)
}

pub fn read_asap(
    path: impl AsRef<Path>,
    prompt_id: i64,
    spec: Option<LabelSpec>,
) -> Result<Dataset> {
    let path = path.as_ref();
    parse_asap(&read_text(path)?, &dataset_name(path), prompt_id, spec)
        .map_err(|e| e.context(path.display().to_string()))
}

/// Seeded shuffle, then the first `floor(n * train_ratio)` shuffled instances go
/// to the training side. Both sides keep the original relative order.
pub fn split(ds: &Dataset, train_ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::BadRatio(train_ratio));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let n_train = (n as f64 * train_ratio).floor() as usize;
    let mut in_train = vec![false; n];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }
    if n_train == 0 || n_train == n {
        log::warn!("split of {n} instances at ratio {train_ratio} leaves one side empty");
    }
    let (train, test): (Vec<_>, Vec<_>) = ds
        .iter()
        .cloned()
        .zip(in_train)
        .partition(|(_, t)| *t);
    let strip = |v: Vec<(Instance, bool)>| v.into_iter().map(|(i, _)| i).collect::<Vec<_>>();
    Ok((
        Dataset::new(format!("{}-train", ds.name()), ds.label_spec(), strip(train))?,
        Dataset::new(format!("{}-test", ds.name()), ds.label_spec(), strip(test))?,
    ))
}
