//! Experiment configuration: a small indentation-based YAML subset and the
//! typed [`ExperimentConfig`] bound from it.
//!
//! Supported: block mappings, block sequences (`- item`), plain and quoted
//! scalars (plain scalars may continue on deeper-indented lines), `#` comments,
//! and the empty collections `{}` / `[]`. Indentation is two spaces per level.
//! Flow collections, anchors, aliases, tags, block scalars and document markers
//! are rejected.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::learners::{ForestConfig, LogisticParams};
use crate::lingproc::{Tokenizer, TokenizerKind};
use crate::textmodel::{LabelSpec, TaskKind};

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigNode {
    Mapping(IndexMap<String, ConfigNode>),
    Sequence(Vec<ConfigNode>),
    Scalar(Scalar),
}

impl ConfigNode {
    pub fn get(&self, key: &str) -> Option<&ConfigNode> {
        match self {
            ConfigNode::Mapping(m) => m.get(key),
            _ => None,
        }
    }

    /// Follows a dotted path of mapping keys.
    pub fn path(&self, dotted: &str) -> Option<&ConfigNode> {
        dotted.split('.').try_fold(self, |n, k| n.get(k))
    }

    pub fn as_scalar(&self) -> Option<&Scalar> {
        match self {
            ConfigNode::Scalar(s) => Some(s),
            _ => None,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ConfigNode::Mapping(_) => "mapping",
            ConfigNode::Sequence(_) => "sequence",
            ConfigNode::Scalar(Scalar::Null) => "null",
            ConfigNode::Scalar(Scalar::Bool(_)) => "boolean",
            ConfigNode::Scalar(Scalar::Int(_)) => "integer",
            ConfigNode::Scalar(Scalar::Real(_)) => "real",
            ConfigNode::Scalar(Scalar::Str(_)) => "string",
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone)]
struct Line {
    no: usize,
    indent: usize,
    text: String,
}

fn unsupported(line: usize, what: impl Into<String>) -> Error {
    Error::UnsupportedSyntax {
        line,
        what: what.into(),
    }
}

/// Removes a trailing comment (a `#` at the start or after whitespace, outside
/// quotes).
fn strip_comment(s: &str) -> &str {
    let mut quote: Option<char> = None;
    let mut prev_ws = true;
    let mut chars = s.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match quote {
            Some('"') if c == '\\' => {
                chars.next();
            }
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None if (c == '"' || c == '\'') && prev_ws => quote = Some(c),
            None if c == '#' && prev_ws => return &s[..i],
            None => {}
        }
        prev_ws = c == ' ' || c == '\t';
    }
    s
}

fn lex(text: &str) -> Result<Vec<Line>> {
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let no = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let body = strip_comment(raw).trim_end();
        if body.trim().is_empty() {
            continue;
        }
        let lead = &body[..body.len() - body.trim_start().len()];
        if lead.contains('\t') {
            return Err(Error::TabIndent { line: no });
        }
        let indent = lead.len();
        if indent % 2 != 0 {
            return Err(Error::BadIndent { line: no });
        }
        let text = body.trim_start().to_string();
        if text == "---" || text == "..." || text.starts_with("--- ") || text.starts_with('%') {
            return Err(unsupported(no, "document markers and directives"));
        }
        out.push(Line { no, indent, text });
    }
    Ok(out)
}

/// Splits `key: value` (or `key:`) at the first mapping colon outside quotes.
fn split_key(text: &str, line: usize) -> Result<Option<(String, &str)>> {
    let (key, rest) = if text.starts_with('"') || text.starts_with('\'') {
        let end = quoted_end(text).ok_or_else(|| unsupported(line, "unterminated quoted key"))?;
        let after = &text[end..];
        if after == ":" || after.starts_with(": ") {
            (parse_quoted(&text[..end], line)?, &after[1..])
        } else {
            return Ok(None);
        }
    } else {
        let pos = text
            .char_indices()
            .find(|&(i, c)| c == ':' && (i + 1 == text.len() || text[i + 1..].starts_with(' ')));
        match pos {
            Some((i, _)) => (text[..i].trim_end().to_string(), &text[i + 1..]),
            None => return Ok(None),
        }
    };
    if key.is_empty() {
        return Err(unsupported(line, "empty key"));
    }
    if key.starts_with(['[', '{', '?', '&', '*', '!', '|', '>']) {
        return Err(unsupported(line, format!("key {key:?}")));
    }
    Ok(Some((key, rest.trim())))
}

/// Byte offset just past the closing quote of a leading quoted string.
fn quoted_end(s: &str) -> Option<usize> {
    let q = s.chars().next()?;
    let mut chars = s.char_indices().skip(1);
    while let Some((i, c)) = chars.next() {
        if q == '"' && c == '\\' {
            chars.next();
        } else if c == q {
            if q == '\'' && s[i + 1..].starts_with('\'') {
                chars.next();
                continue;
            }
            return Some(i + 1);
        }
    }
    None
}

fn parse_quoted(s: &str, line: usize) -> Result<String> {
    let inner = &s[1..s.len() - 1];
    if s.starts_with('\'') {
        return Ok(inner.replace("''", "'"));
    }
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('0') => out.push('\0'),
            Some('"') => out.push('"'),
            Some('\\') => out.push('\\'),
            Some('/') => out.push('/'),
            Some('u') => {
                let hex: String = chars.by_ref().take(4).collect();
                let c = u32::from_str_radix(&hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| unsupported(line, format!("bad escape \\u{hex}")))?;
                out.push(c);
            }
            other => return Err(unsupported(line, format!("bad escape \\{}", other.unwrap_or(' ')))),
        }
    }
    Ok(out)
}

fn is_int(s: &str) -> bool {
    let d = s.strip_prefix(['-', '+']).unwrap_or(s);
    !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())
}

fn is_real(s: &str) -> bool {
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let (int_part, frac) = match mantissa.split_once('.') {
        Some((a, b)) => (a, Some(b)),
        None => (mantissa, None),
    };
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = digits(int_part)
        && frac.is_none_or(digits)
        && (!int_part.is_empty() || frac.is_some_and(|f| !f.is_empty()));
    let exp_ok = exp.is_none_or(|e| {
        let e = e.strip_prefix(['-', '+']).unwrap_or(e);
        !e.is_empty() && digits(e)
    });
    mantissa_ok && exp_ok && (frac.is_some() || exp.is_some())
}

/// Types a plain scalar.
fn plain_scalar(s: &str) -> Scalar {
    match s {
        "null" | "~" => return Scalar::Null,
        "true" => return Scalar::Bool(true),
        "false" => return Scalar::Bool(false),
        ".inf" | "+.inf" => return Scalar::Real(f64::INFINITY),
        "-.inf" => return Scalar::Real(f64::NEG_INFINITY),
        ".nan" => return Scalar::Real(f64::NAN),
        _ => {}
    }
    if is_int(s) {
        if let Ok(v) = s.parse() {
            return Scalar::Int(v);
        }
    }
    if is_int(s) || is_real(s) {
        if let Ok(v) = s.parse() {
            return Scalar::Real(v);
        }
    }
    Scalar::Str(s.to_string())
}

fn inline_value(text: &str, line: usize) -> Result<ConfigNode> {
    match text {
        "{}" => return Ok(ConfigNode::Mapping(IndexMap::new())),
        "[]" => return Ok(ConfigNode::Sequence(Vec::new())),
        _ => {}
    }
    let first = text.chars().next().unwrap_or(' ');
    match first {
        '[' | '{' => Err(unsupported(line, "flow collections")),
        '&' | '*' => Err(unsupported(line, "anchors and aliases")),
        '!' => Err(unsupported(line, "tags")),
        '|' | '>' => Err(unsupported(line, "block scalars")),
        '@' | '`' => Err(unsupported(line, format!("reserved indicator {first:?}"))),
        '"' | '\'' => {
            let end = quoted_end(text).ok_or_else(|| unsupported(line, "unterminated quoted string"))?;
            if end != text.len() {
                return Err(unsupported(line, "text after quoted string"));
            }
            Ok(ConfigNode::Scalar(Scalar::Str(parse_quoted(text, line)?)))
        }
        _ => Ok(ConfigNode::Scalar(plain_scalar(text))),
    }
}

fn is_seq_item(text: &str) -> bool {
    text == "-" || text.starts_with("- ")
}

struct Parser {
    lines: Vec<Line>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Line> {
        self.lines.get(self.pos)
    }

    /// Parses the block whose first line sits at exactly `indent`.
    fn block(&mut self, indent: usize) -> Result<ConfigNode> {
        let line = self.peek().expect("caller checked a line exists").clone();
        if line.indent != indent {
            return Err(Error::BadIndent { line: line.no });
        }
        if is_seq_item(&line.text) {
            self.sequence(indent)
        } else if split_key(&line.text, line.no)?.is_some() {
            self.mapping(indent)
        } else {
            self.plain_block(indent)
        }
    }

    /// Multi-line plain scalar: lines folded with single spaces.
    fn plain_block(&mut self, indent: usize) -> Result<ConfigNode> {
        let first = self.lines[self.pos].clone();
        self.pos += 1;
        let value = inline_value(&first.text, first.no)?;
        let mut parts = vec![first.text];
        while let Some(l) = self.peek() {
            if l.indent < indent {
                break;
            }
            if l.indent > indent || is_seq_item(&l.text) || split_key(&l.text, l.no)?.is_some() {
                return Err(Error::BadIndent { line: l.no });
            }
            parts.push(l.text.clone());
            self.pos += 1;
        }
        if parts.len() == 1 {
            return Ok(value);
        }
        if !matches!(value, ConfigNode::Scalar(Scalar::Str(_)) | ConfigNode::Scalar(_))
            || parts.iter().any(|p| p.starts_with(['"', '\'']))
        {
            return Err(unsupported(first.no, "multi-line quoted scalar"));
        }
        Ok(ConfigNode::Scalar(plain_scalar(&parts.join(" "))))
    }

    /// Value of an entry whose inline part is empty: a nested block, a
    /// same-indent sequence, or null.
    fn nested(&mut self, indent: usize) -> Result<ConfigNode> {
        match self.peek() {
            Some(l) if l.indent > indent => {
                if l.indent != indent + 2 {
                    return Err(Error::BadIndent { line: l.no });
                }
                self.block(indent + 2)
            }
            Some(l) if l.indent == indent && is_seq_item(&l.text) => self.sequence(indent),
            _ => Ok(ConfigNode::Scalar(Scalar::Null)),
        }
    }

    fn mapping(&mut self, indent: usize) -> Result<ConfigNode> {
        let mut map = IndexMap::new();
        while let Some(line) = self.peek().cloned() {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(Error::BadIndent { line: line.no });
            }
            let Some((key, rest)) = split_key(&line.text, line.no)? else {
                if is_seq_item(&line.text) {
                    break;
                }
                return Err(unsupported(line.no, "expected `key: value`"));
            };
            self.pos += 1;
            let value = if rest.is_empty() {
                self.nested(indent)?
            } else {
                let v = inline_value(rest, line.no)?;
                if let Some(next) = self.peek() {
                    if next.indent > indent {
                        return Err(Error::BadIndent { line: next.no });
                    }
                }
                v
            };
            if map.contains_key(&key) {
                return Err(Error::DuplicateKey { line: line.no, key });
            }
            map.insert(key, value);
        }
        Ok(ConfigNode::Mapping(map))
    }

    fn sequence(&mut self, indent: usize) -> Result<ConfigNode> {
        let mut items = Vec::new();
        while let Some(line) = self.peek().cloned() {
            if line.indent != indent || !is_seq_item(&line.text) {
                if line.indent > indent {
                    return Err(Error::BadIndent { line: line.no });
                }
                break;
            }
            let rest = line.text[1..].trim_start();
            if rest.is_empty() {
                self.pos += 1;
                items.push(match self.peek() {
                    Some(l) if l.indent > indent => {
                        if l.indent != indent + 2 {
                            return Err(Error::BadIndent { line: l.no });
                        }
                        self.block(indent + 2)?
                    }
                    _ => ConfigNode::Scalar(Scalar::Null),
                });
            } else {
                // `- content` is read as `content` sitting two columns deeper.
                self.lines[self.pos] = Line {
                    no: line.no,
                    indent: indent + 2,
                    text: rest.to_string(),
                };
                items.push(self.block(indent + 2)?);
            }
        }
        Ok(ConfigNode::Sequence(items))
    }
}

/// Parses configuration text. An empty document is an empty mapping.
pub fn parse_config(text: &str) -> Result<ConfigNode> {
    let lines = lex(text)?;
    if lines.is_empty() {
        return Ok(ConfigNode::Mapping(IndexMap::new()));
    }
    let mut p = Parser { lines, pos: 0 };
    if p.lines[0].indent != 0 {
        return Err(Error::BadIndent { line: p.lines[0].no });
    }
    let node = p.block(0)?;
    if let Some(l) = p.peek() {
        return Err(Error::BadIndent { line: l.no });
    }
    Ok(node)
}

// ---------------------------------------------------------------------------
// Canonical serialization

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => write!(out, "\\u{:04x}", c as u32).expect("writing to a String"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn scalar_text(s: &Scalar) -> String {
    match s {
        Scalar::Null => "null".into(),
        Scalar::Bool(b) => b.to_string(),
        Scalar::Int(i) => i.to_string(),
        Scalar::Real(r) if r.is_nan() => ".nan".into(),
        Scalar::Real(r) if r.is_infinite() => if *r > 0.0 { ".inf" } else { "-.inf" }.into(),
        Scalar::Real(r) => format!("{r:?}"),
        Scalar::Str(s) => quote(s),
    }
}

fn inline_text(node: &ConfigNode) -> Option<String> {
    match node {
        ConfigNode::Scalar(s) => Some(scalar_text(s)),
        ConfigNode::Mapping(m) if m.is_empty() => Some("{}".into()),
        ConfigNode::Sequence(v) if v.is_empty() => Some("[]".into()),
        _ => None,
    }
}

fn write_node(out: &mut String, node: &ConfigNode, indent: usize) {
    let pad = " ".repeat(indent);
    match node {
        ConfigNode::Mapping(m) => {
            for (k, v) in m {
                let key = quote(k);
                match inline_text(v) {
                    Some(t) => writeln!(out, "{pad}{key}: {t}"),
                    None => {
                        writeln!(out, "{pad}{key}:").expect("writing to a String");
                        write_node(out, v, indent + 2);
                        Ok(())
                    }
                }
                .expect("writing to a String");
            }
        }
        ConfigNode::Sequence(items) => {
            for item in items {
                match inline_text(item) {
                    Some(t) => writeln!(out, "{pad}- {t}").expect("writing to a String"),
                    None => {
                        writeln!(out, "{pad}-").expect("writing to a String");
                        write_node(out, item, indent + 2);
                    }
                }
            }
        }
        ConfigNode::Scalar(s) => writeln!(out, "{pad}{}", scalar_text(s)).expect("writing to a String"),
    }
}

/// Canonical text form; `parse_config(serialize_config(n)) == n`.
pub fn serialize_config(node: &ConfigNode) -> String {
    let mut out = String::new();
    match inline_text(node) {
        Some(t) if !matches!(node, ConfigNode::Mapping(_)) => out = format!("{t}\n"),
        _ => write_node(&mut out, node, 0),
    }
    out
}

// ---------------------------------------------------------------------------
// Binding

pub const PROFILER_TYPES: [&str; 2] = ["FeatureRegressor", "FeatureClassifier"];
pub const DATASET_TYPES: [&str; 2] = ["tsv", "asap-aes"];
pub const LEARNER_TYPES: [&str; 3] = ["ridge", "logistic", "random_forest"];
pub const FEATURE_TYPES: [&str; 4] = ["token_count", "avg_token_length", "unigram_likelihood", "doc_embedding"];
pub const TOKENIZER_TYPES: [&str; 2] = ["whitespace", "char"];

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfilerKind {
    FeatureRegressor,
    FeatureClassifier,
}

impl ProfilerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ProfilerKind::FeatureRegressor => "FeatureRegressor",
            ProfilerKind::FeatureClassifier => "FeatureClassifier",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LearnerConfig {
    Ridge { lambda: f64 },
    Logistic(LogisticParams),
    RandomForest(ForestConfig),
}

impl LearnerConfig {
    pub fn type_name(&self) -> &'static str {
        match self {
            LearnerConfig::Ridge { .. } => "ridge",
            LearnerConfig::Logistic(_) => "logistic",
            LearnerConfig::RandomForest(_) => "random_forest",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnigramSource {
    /// Precomputed `token<TAB>probability` table.
    Table(PathBuf),
    /// Plain-text corpus, one sentence per line, counted at training time.
    Corpus(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    TokenCount,
    AvgTokenLength,
    UnigramLikelihood(UnigramSource),
    DocEmbedding { vectors_path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfilerConfig {
    pub kind: ProfilerKind,
    pub learner: LearnerConfig,
    pub features: Vec<FeatureSpec>,
    pub tokenizer: Tokenizer,
    /// Whether features are standardized; defaults to true except for forests.
    pub standardize: bool,
    pub seed: u64,
    /// Regression targets are rescaled to [0, 1] for training.
    pub output_normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub train_ratio: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetConfig {
    Tsv {
        path: PathBuf,
        label_spec: Option<LabelSpec>,
        split: Option<SplitConfig>,
    },
    AsapAes {
        path: PathBuf,
        prompt_id: i64,
        label_spec: Option<LabelSpec>,
        split: Option<SplitConfig>,
    },
}

impl DatasetConfig {
    pub fn split(&self) -> Option<&SplitConfig> {
        match self {
            DatasetConfig::Tsv { split, .. } | DatasetConfig::AsapAes { split, .. } => split.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    pub profiler: ProfilerConfig,
    pub dataset: DatasetConfig,
    /// Configuration text as written by the user (kept verbatim in artifacts).
    pub source: String,
}

/// Typed access to a params mapping with path-qualified errors.
struct Params<'a> {
    map: Option<&'a IndexMap<String, ConfigNode>>,
    path: String,
}

impl<'a> Params<'a> {
    fn new(node: Option<&'a ConfigNode>, path: &str) -> Result<Self> {
        let map = match node {
            None | Some(ConfigNode::Scalar(Scalar::Null)) => None,
            Some(ConfigNode::Mapping(m)) => Some(m),
            Some(other) => return Err(bad_param(path, format!("expected a mapping, found {}", other.kind()))),
        };
        Ok(Params { map, path: path.to_string() })
    }

    fn at(&self, key: &str) -> String {
        format!("{}.{key}", self.path)
    }

    fn raw(&self, key: &str) -> Option<&'a ConfigNode> {
        self.map
            .and_then(|m| m.get(key))
            .filter(|n| !matches!(n, ConfigNode::Scalar(Scalar::Null)))
    }

    fn wrong(&self, key: &str, want: &str, got: &ConfigNode) -> Error {
        bad_param(&self.at(key), format!("expected {want}, found {}", got.kind()))
    }

    fn str(&self, key: &str) -> Result<Option<&'a str>> {
        match self.raw(key) {
            None => Ok(None),
            Some(ConfigNode::Scalar(Scalar::Str(s))) => Ok(Some(s)),
            Some(n) => Err(self.wrong(key, "a string", n)),
        }
    }

    fn int(&self, key: &str) -> Result<Option<i64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(ConfigNode::Scalar(Scalar::Int(i))) => Ok(Some(*i)),
            Some(n) => Err(self.wrong(key, "an integer", n)),
        }
    }

    fn count(&self, key: &str, min: i64) -> Result<Option<usize>> {
        match self.int(key)? {
            Some(v) if v < min => Err(bad_param(&self.at(key), format!("must be >= {min}, got {v}"))),
            v => Ok(v.map(|v| v as usize)),
        }
    }

    fn seed(&self, key: &str) -> Result<Option<u64>> {
        match self.int(key)? {
            Some(v) if v < 0 => Err(bad_param(&self.at(key), "must be non-negative".into())),
            v => Ok(v.map(|v| v as u64)),
        }
    }

    fn real(&self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(ConfigNode::Scalar(Scalar::Real(r))) if r.is_finite() => Ok(Some(*r)),
            Some(ConfigNode::Scalar(Scalar::Int(i))) => Ok(Some(*i as f64)),
            Some(n) => Err(self.wrong(key, "a finite number", n)),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some(ConfigNode::Scalar(Scalar::Bool(b))) => Ok(Some(*b)),
            Some(n) => Err(self.wrong(key, "a boolean", n)),
        }
    }

    fn path(&self, key: &str, base: &Path) -> Result<Option<PathBuf>> {
        Ok(self.str(key)?.map(|s| resolve(base, s)))
    }

    fn label_range(&self, key: &str) -> Result<Option<LabelSpec>> {
        match self.raw(key) {
            None => Ok(None),
            Some(ConfigNode::Sequence(items)) => match items.as_slice() {
                [ConfigNode::Scalar(Scalar::Int(lo)), ConfigNode::Scalar(Scalar::Int(hi))] => LabelSpec::new(*lo, *hi)
                    .map(Some)
                    .map_err(|e| bad_param(&self.at(key), e.to_string())),
                _ => Err(bad_param(&self.at(key), "expected a two-item integer sequence [lo, hi]".into())),
            },
            Some(n) => Err(self.wrong(key, "a sequence", n)),
        }
    }

    fn split(&self) -> Result<Option<SplitConfig>> {
        let Some(ratio) = self.real("train_ratio")? else {
            return Ok(None);
        };
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(bad_param(&self.at("train_ratio"), format!("must lie in (0, 1), got {ratio}")));
        }
        Ok(Some(SplitConfig {
            train_ratio: ratio,
            seed: self.seed("split_seed")?.unwrap_or(DEFAULT_SEED),
        }))
    }
}

fn bad_param(path: &str, reason: String) -> Error {
    Error::BadParam {
        path: path.to_string(),
        reason,
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn type_name<'a>(node: &'a ConfigNode, path: &str) -> Result<&'a str> {
    match node.get("type") {
        Some(ConfigNode::Scalar(Scalar::Str(s))) => Ok(s),
        Some(n) => Err(bad_param(&format!("{path}.type"), format!("expected a string, found {}", n.kind()))),
        None => Err(bad_param(&format!("{path}.type"), "required".into())),
    }
}

fn unknown(kind: &'static str, name: &str, valid: &[&'static str]) -> Error {
    let note = (kind == "profiler" && name.to_ascii_lowercase().contains("transformer"))
        .then(|| "transformer-based profilers are not supported; use a feature-based profiler".to_string());
    Error::UnknownType {
        kind,
        name: name.to_string(),
        valid: valid.to_vec(),
        note,
    }
}

fn bind_learner(node: Option<&ConfigNode>, seed: u64) -> Result<LearnerConfig> {
    let node = node.ok_or_else(|| bad_param("profiler.params.learner", "required".into()))?;
    if !matches!(node, ConfigNode::Mapping(_)) {
        return Err(bad_param("profiler.params.learner", format!("expected a mapping, found {}", node.kind())));
    }
    let name = type_name(node, "profiler.params.learner")?;
    let p = Params::new(node.get("params"), "profiler.params.learner.params")?;
    Ok(match name {
        "ridge" => {
            let lambda = p.real("lambda")?.unwrap_or(DEFAULT_RIDGE_LAMBDA);
            if lambda < 0.0 {
                return Err(bad_param(&p.at("lambda"), "must be >= 0".into()));
            }
            LearnerConfig::Ridge { lambda }
        }
        "logistic" => {
            let d = LogisticParams::default();
            let lr = p.real("lr")?.unwrap_or(d.lr);
            let l2 = p.real("l2")?.unwrap_or(d.l2);
            if lr <= 0.0 || l2 < 0.0 {
                return Err(bad_param(&p.path, "lr must be > 0 and l2 >= 0".into()));
            }
            LearnerConfig::Logistic(LogisticParams {
                lr,
                l2,
                epochs: p.count("epochs", 1)?.unwrap_or(d.epochs),
            })
        }
        "random_forest" => {
            let d = ForestConfig::default();
            LearnerConfig::RandomForest(ForestConfig {
                n_estimators: p.count("n_estimators", 1)?.unwrap_or(d.n_estimators),
                max_depth: p.count("max_depth", 0)?.unwrap_or(d.max_depth),
                min_samples_split: p.count("min_samples_split", 2)?.unwrap_or(d.min_samples_split),
                features_per_split: p.count("features_per_split", 1)?,
                bootstrap: p.bool("bootstrap")?.unwrap_or(d.bootstrap),
                parallel: p.bool("parallel")?.unwrap_or(d.parallel),
                seed: p.seed("seed")?.unwrap_or(seed),
            })
        }
        other => return Err(unknown("learner", other, &LEARNER_TYPES)),
    })
}

fn bind_features(node: Option<&ConfigNode>, base: &Path) -> Result<Vec<FeatureSpec>> {
    let items = match node {
        None | Some(ConfigNode::Scalar(Scalar::Null)) => {
            return Ok(vec![FeatureSpec::TokenCount, FeatureSpec::AvgTokenLength]);
        }
        Some(ConfigNode::Sequence(items)) => items,
        Some(n) => return Err(bad_param("profiler.params.features", format!("expected a sequence, found {}", n.kind()))),
    };
    if items.is_empty() {
        return Err(bad_param("profiler.params.features", "at least one feature is required".into()));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let path = format!("profiler.params.features[{i}]");
            let name = match item {
                ConfigNode::Scalar(Scalar::Str(s)) => s.as_str(),
                ConfigNode::Mapping(_) => type_name(item, &path)?,
                n => return Err(bad_param(&path, format!("expected a mapping or name, found {}", n.kind()))),
            };
            let p = Params::new(item.get("params"), &format!("{path}.params"))?;
            Ok(match name {
                "token_count" => FeatureSpec::TokenCount,
                "avg_token_length" => FeatureSpec::AvgTokenLength,
                "unigram_likelihood" => match (p.path("table_path", base)?, p.path("corpus_path", base)?) {
                    (Some(t), None) => FeatureSpec::UnigramLikelihood(UnigramSource::Table(t)),
                    (None, Some(c)) => FeatureSpec::UnigramLikelihood(UnigramSource::Corpus(c)),
                    _ => return Err(bad_param(&p.path, "exactly one of table_path or corpus_path is required".into())),
                },
                "doc_embedding" => FeatureSpec::DocEmbedding {
                    vectors_path: p
                        .path("vectors_path", base)?
                        .ok_or_else(|| bad_param(&p.at("vectors_path"), "required".into()))?,
                },
                other => return Err(unknown("feature", other, &FEATURE_TYPES)),
            })
        })
        .collect()
}

fn bind_tokenizer(node: Option<&ConfigNode>) -> Result<Tokenizer> {
    let p = Params::new(node, "profiler.params.tokenizer")?;
    let kind = match p.str("type")? {
        None | Some("whitespace") => TokenizerKind::SpacePunct,
        Some("char") => TokenizerKind::Char,
        Some(other) => return Err(unknown("tokenizer", other, &TOKENIZER_TYPES)),
    };
    Ok(Tokenizer::new(kind, p.bool("lowercase")?.unwrap_or(false)))
}

fn section<'a>(root: &'a IndexMap<String, ConfigNode>, name: &'static str) -> Result<&'a ConfigNode> {
    match root.get(name) {
        None | Some(ConfigNode::Scalar(Scalar::Null)) => Err(Error::MissingSection(name)),
        Some(n) => Ok(n),
    }
}

/// Validates a parsed configuration and fills defaults. Relative paths are
/// resolved against `base_dir`.
pub fn bind_experiment(node: &ConfigNode, base_dir: &Path) -> Result<ExperimentConfig> {
    let ConfigNode::Mapping(root) = node else {
        return Err(bad_param("<root>", format!("expected a mapping, found {}", node.kind())));
    };
    let task = match section(root, "task")? {
        ConfigNode::Scalar(Scalar::Str(s)) if s == "regression" => TaskKind::Regression,
        ConfigNode::Scalar(Scalar::Str(s)) if s == "classification" => TaskKind::Classification,
        n => {
            return Err(bad_param(
                "task",
                format!("expected `regression` or `classification`, found {}", inline_text(n).unwrap_or_else(|| n.kind().into())),
            ))
        }
    };

    let prof = section(root, "profiler")?;
    let kind = match type_name(prof, "profiler")? {
        "FeatureRegressor" => ProfilerKind::FeatureRegressor,
        "FeatureClassifier" => ProfilerKind::FeatureClassifier,
        other => return Err(unknown("profiler", other, &PROFILER_TYPES)),
    };
    let pp = Params::new(prof.get("params"), "profiler.params")?;
    let seed = pp.seed("seed")?.unwrap_or(DEFAULT_SEED);
    let learner = bind_learner(pp.raw("learner"), seed)?;
    let standardize = pp
        .bool("standardize")?
        .unwrap_or(!matches!(learner, LearnerConfig::RandomForest(_)));
    let profiler = ProfilerConfig {
        kind,
        features: bind_features(pp.raw("features"), base_dir)?,
        tokenizer: bind_tokenizer(pp.raw("tokenizer"))?,
        standardize,
        seed,
        output_normalized: pp.bool("output_normalized")?.unwrap_or(false),
        learner,
    };

    let ds = section(root, "dataset")?;
    let dp = Params::new(ds.get("params"), "dataset.params")?;
    let path = dp
        .path("path", base_dir)?
        .ok_or_else(|| bad_param("dataset.params.path", "required".into()))?;
    let dataset = match type_name(ds, "dataset")? {
        "tsv" => DatasetConfig::Tsv {
            path,
            label_spec: dp.label_range("label_range")?,
            split: dp.split()?,
        },
        "asap-aes" => {
            let prompt_id = dp.int("prompt_id")?.unwrap_or(1);
            if !(1..=8).contains(&prompt_id) {
                return Err(bad_param("dataset.params.prompt_id", format!("must be 1..=8, got {prompt_id}")));
            }
            DatasetConfig::AsapAes {
                path,
                prompt_id,
                label_spec: dp.label_range("score_range")?,
                split: dp.split()?,
            }
        }
        other => return Err(unknown("dataset", other, &DATASET_TYPES)),
    };

    Ok(ExperimentConfig {
        task,
        profiler,
        dataset,
        source: serialize_config(node),
    })
}

impl ExperimentConfig {
    /// Parses and binds configuration text; `source` keeps the text verbatim.
    pub fn from_text(text: &str, base_dir: &Path) -> Result<Self> {
        let node = parse_config(text)?;
        let mut cfg = bind_experiment(&node, base_dir)?;
        cfg.source = text.to_string();
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base).map_err(|e| e.context(path.display().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LISTING: &str = "task: regression

profiler:
  type: TransformerRegressor
  params:
    trainer:
      gpus: 1
      max_epochs: 30
    network:
      output_normalized: true
      pretrained_model_name_or_path:
        bert-base-uncased
      lr: 4e-5
    data_loader:
      batch_size: 8

dataset:
  type: asap-aes
  params:
    path:
      /path/to/training_tsv_file
";

    fn scalar(node: &ConfigNode, path: &str) -> Scalar {
        node.path(path).and_then(ConfigNode::as_scalar).cloned().unwrap()
    }

    #[test]
    fn transformer_listing_golden() {
        let n = parse_config(LISTING).unwrap();
        assert_eq!(scalar(&n, "task"), Scalar::Str("regression".into()));
        assert_eq!(scalar(&n, "profiler.type"), Scalar::Str("TransformerRegressor".into()));
        assert_eq!(scalar(&n, "profiler.params.trainer.gpus"), Scalar::Int(1));
        assert_eq!(scalar(&n, "profiler.params.trainer.max_epochs"), Scalar::Int(30));
        assert_eq!(scalar(&n, "profiler.params.network.output_normalized"), Scalar::Bool(true));
        assert_eq!(
            scalar(&n, "profiler.params.network.pretrained_model_name_or_path"),
            Scalar::Str("bert-base-uncased".into())
        );
        assert_eq!(scalar(&n, "profiler.params.network.lr"), Scalar::Real(4e-5));
        assert_eq!(scalar(&n, "profiler.params.data_loader.batch_size"), Scalar::Int(8));
        assert_eq!(scalar(&n, "dataset.type"), Scalar::Str("asap-aes".into()));
        assert_eq!(scalar(&n, "dataset.params.path"), Scalar::Str("/path/to/training_tsv_file".into()));
        let ConfigNode::Mapping(root) = &n else { panic!() };
        assert_eq!(root.keys().collect::<Vec<_>>(), ["task", "profiler", "dataset"]);
    }

    #[test]
    fn simple_nesting_and_errors() {
        let n = parse_config("a:\n  b: 1\n").unwrap();
        assert_eq!(scalar(&n, "a.b"), Scalar::Int(1));
        assert!(matches!(parse_config("a:\n\tb: 1\n"), Err(Error::TabIndent { line: 2 })));
        assert!(matches!(parse_config("a:\n   b: 1\n"), Err(Error::BadIndent { line: 2 })));
        assert!(matches!(parse_config("a:\n    b: 1\n"), Err(Error::BadIndent { line: 2 })));
        assert!(matches!(parse_config("a: 1\na: 2\n"), Err(Error::DuplicateKey { line: 2, .. })));
        assert!(matches!(parse_config("a: 1\n  b: 2\n"), Err(Error::BadIndent { line: 2 })));
        for bad in ["a: [1, 2]", "a: {b: 1}", "a: &x 1", "a: *x", "a: !!str 1", "a: |\n  x", "---\na: 1"] {
            assert!(matches!(parse_config(bad), Err(Error::UnsupportedSyntax { .. })), "{bad}");
        }
    }

    #[test]
    fn scalar_typing() {
        let n = parse_config(
            "i: -12\nr: 3.5\ne: 1E3\nd: .5\nt: true\nf: false\nz: null\nt2: ~\ns: hello world\n\
             q: \"a # b\"\nsq: 'it''s'\nv: 1.2.3\nc: x # comment\nurl: http://x:8/y\n",
        )
        .unwrap();
        assert_eq!(scalar(&n, "i"), Scalar::Int(-12));
        assert_eq!(scalar(&n, "r"), Scalar::Real(3.5));
        assert_eq!(scalar(&n, "e"), Scalar::Real(1000.0));
        assert_eq!(scalar(&n, "d"), Scalar::Real(0.5));
        assert_eq!(scalar(&n, "t"), Scalar::Bool(true));
        assert_eq!(scalar(&n, "f"), Scalar::Bool(false));
        assert_eq!(scalar(&n, "z"), Scalar::Null);
        assert_eq!(scalar(&n, "t2"), Scalar::Null);
        assert_eq!(scalar(&n, "s"), Scalar::Str("hello world".into()));
        assert_eq!(scalar(&n, "q"), Scalar::Str("a # b".into()));
        assert_eq!(scalar(&n, "sq"), Scalar::Str("it's".into()));
        assert_eq!(scalar(&n, "v"), Scalar::Str("1.2.3".into()));
        assert_eq!(scalar(&n, "c"), Scalar::Str("x".into()));
        assert_eq!(scalar(&n, "url"), Scalar::Str("http://x:8/y".into()));
    }

    #[test]
    fn sequences() {
        let text = "features:\n  - type: token_count\n  - type: unigram_likelihood\n    params:\n      table_path: u.tsv\n  - plain\nflat:\n- 1\n- 2\nnested:\n  -\n    - a\n";
        let n = parse_config(text).unwrap();
        let ConfigNode::Sequence(items) = n.get("features").unwrap() else { panic!() };
        assert_eq!(items.len(), 3);
        assert_eq!(scalar(&items[1], "params.table_path"), Scalar::Str("u.tsv".into()));
        assert_eq!(items[2], ConfigNode::Scalar(Scalar::Str("plain".into())));
        let ConfigNode::Sequence(flat) = n.get("flat").unwrap() else { panic!() };
        assert_eq!(flat.len(), 2);
        assert_eq!(
            n.get("nested").unwrap(),
            &ConfigNode::Sequence(vec![ConfigNode::Sequence(vec![ConfigNode::Scalar(Scalar::Str("a".into()))])])
        );
    }

    #[test]
    fn empty_document() {
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), ConfigNode::Mapping(IndexMap::new()));
    }

    fn toy(profiler: &str, dataset: &str) -> String {
        format!("task: classification\nprofiler:\n{profiler}\ndataset:\n{dataset}\n")
    }

    const DS: &str = "  type: tsv\n  params:\n    path: data.tsv";

    #[test]
    fn bind_defaults() {
        let text = toy(
            "  type: FeatureClassifier\n  params:\n    learner:\n      type: random_forest",
            DS,
        );
        let cfg = ExperimentConfig::from_text(&text, Path::new("/base")).unwrap();
        assert_eq!(cfg.task, TaskKind::Classification);
        assert_eq!(cfg.profiler.seed, 42);
        assert!(!cfg.profiler.standardize);
        let LearnerConfig::RandomForest(f) = &cfg.profiler.learner else { panic!() };
        assert_eq!((f.n_estimators, f.max_depth, f.seed), (100, 5, 42));
        assert_eq!(cfg.profiler.features, vec![FeatureSpec::TokenCount, FeatureSpec::AvgTokenLength]);
        assert_eq!(
            cfg.dataset,
            DatasetConfig::Tsv {
                path: PathBuf::from("/base/data.tsv"),
                label_spec: None,
                split: None
            }
        );
        assert_eq!(cfg.source, text);

        let text = toy("  type: FeatureClassifier\n  params:\n    learner:\n      type: logistic", DS);
        let cfg = ExperimentConfig::from_text(&text, Path::new(".")).unwrap();
        assert!(cfg.profiler.standardize);
        assert_eq!(cfg.profiler.learner, LearnerConfig::Logistic(LogisticParams { lr: 0.1, epochs: 2000, l2: 1e-4 }));
    }

    #[test]
    fn bind_errors() {
        let no_ds = "task: regression\nprofiler:\n  type: FeatureRegressor\n  params:\n    learner:\n      type: ridge\n";
        assert!(matches!(
            ExperimentConfig::from_text(no_ds, Path::new(".")),
            Err(Error::MissingSection("dataset"))
        ));
        let err = ExperimentConfig::from_text(LISTING, Path::new(".")).unwrap_err();
        let msg = err.to_string();
        assert_eq!(err.code(), "UnknownType");
        assert!(msg.contains("FeatureRegressor") && msg.contains("FeatureClassifier"), "{msg}");
        assert!(msg.contains("transformer-based profilers are not supported"), "{msg}");

        let bad_param = toy(
            "  type: FeatureClassifier\n  params:\n    learner:\n      type: random_forest\n      params:\n        max_depth: deep",
            DS,
        );
        match ExperimentConfig::from_text(&bad_param, Path::new(".")) {
            Err(Error::BadParam { path, .. }) => assert_eq!(path, "profiler.params.learner.params.max_depth"),
            other => panic!("{other:?}"),
        }
        let bad_feature = toy(
            "  type: FeatureClassifier\n  params:\n    learner:\n      type: ridge\n    features:\n      - type: syntax_depth",
            DS,
        );
        assert_eq!(ExperimentConfig::from_text(&bad_feature, Path::new(".")).unwrap_err().code(), "UnknownType");
    }

    #[test]
    fn bind_asap_with_split() {
        let text = "task: regression\nprofiler:\n  type: FeatureRegressor\n  params:\n    learner:\n      type: ridge\n      params:\n        lambda: 0.5\n    features:\n      - type: unigram_likelihood\n        params:\n          corpus_path: corpus.txt\n    output_normalized: true\ndataset:\n  type: asap-aes\n  params:\n    path: train.tsv\n    prompt_id: 3\n    train_ratio: 0.8\n    score_range:\n      - 0\n      - 3\n";
        let cfg = ExperimentConfig::from_text(text, Path::new("d")).unwrap();
        assert_eq!(cfg.profiler.learner, LearnerConfig::Ridge { lambda: 0.5 });
        assert!(cfg.profiler.output_normalized);
        assert_eq!(
            cfg.profiler.features,
            vec![FeatureSpec::UnigramLikelihood(UnigramSource::Corpus(PathBuf::from("d/corpus.txt")))]
        );
        let DatasetConfig::AsapAes { prompt_id, label_spec, split, .. } = &cfg.dataset else { panic!() };
        assert_eq!(*prompt_id, 3);
        assert_eq!(*label_spec, Some(LabelSpec::new(0, 3).unwrap()));
        assert_eq!(split.as_ref().unwrap().train_ratio, 0.8);
    }

    fn arb_node() -> impl Strategy<Value = ConfigNode> {
        let key = "[a-z_][a-z0-9_ :#-]{0,8}";
        let leaf = prop_oneof![
            Just(Scalar::Null),
            any::<bool>().prop_map(Scalar::Bool),
            any::<i64>().prop_map(Scalar::Int),
            any::<f64>().prop_filter("nan", |f| !f.is_nan()).prop_map(Scalar::Real),
            "\\PC{0,12}".prop_map(Scalar::Str),
            "[ \t\n\"'\\\\#:-]{0,6}".prop_map(Scalar::Str),
        ]
        .prop_map(ConfigNode::Scalar);
        leaf.prop_recursive(4, 40, 6, move |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..5).prop_map(ConfigNode::Sequence),
                prop::collection::vec((key, inner), 0..5)
                    .prop_map(|kv| ConfigNode::Mapping(kv.into_iter().collect())),
            ]
        })
    }

    proptest! {
        #[test]
        fn serializer_round_trip(node in arb_node()) {
            let text = serialize_config(&node);
            let back = parse_config(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            prop_assert_eq!(back, node, "{}", text);
        }

        #[test]
        fn parser_is_total(text in "[ \ta-z:#\"'\\-\\[\\]{}\n.0-9]{0,80}") {
            let _ = parse_config(&text);
        }
    }
}
