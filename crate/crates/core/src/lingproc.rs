//! Tokenizers and the corpus statistics used by feature extractors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory as Gc};

use crate::dataset::read_text;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    /// Whitespace split with punctuation peeled from chunk edges.
    #[serde(rename = "whitespace")]
    SpacePunct,
    /// One token per non-whitespace character.
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenizer {
    #[serde(rename = "type")]
    pub kind: TokenizerKind,
    #[serde(default)]
    pub lowercase: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            kind: TokenizerKind::SpacePunct,
            lowercase: false,
        }
    }
}

impl Tokenizer {
    pub fn new(kind: TokenizerKind, lowercase: bool) -> Self {
        Tokenizer { kind, lowercase }
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let tokens = match self.kind {
            TokenizerKind::SpacePunct => tokenize_space_punct(text),
            TokenizerKind::Char => tokenize_char(text),
        };
        if self.lowercase {
            tokens.into_iter().map(|t| t.to_lowercase()).collect()
        } else {
            tokens
        }
    }
}

/// Unicode punctuation (P*) or symbol (S*).
pub fn is_punct_or_symbol(c: char) -> bool {
    matches!(
        get_general_category(c),
        Gc::ConnectorPunctuation
            | Gc::DashPunctuation
            | Gc::OpenPunctuation
            | Gc::ClosePunctuation
            | Gc::InitialPunctuation
            | Gc::FinalPunctuation
            | Gc::OtherPunctuation
            | Gc::MathSymbol
            | Gc::CurrencySymbol
            | Gc::ModifierSymbol
            | Gc::OtherSymbol
    )
}

pub fn tokenize_space_punct(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let start = chars
            .iter()
            .position(|&c| !is_punct_or_symbol(c))
            .unwrap_or(chars.len());
        let end = chars
            .iter()
            .rposition(|&c| !is_punct_or_symbol(c))
            .map_or(start, |p| p + 1);
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(chars[end..].iter().map(|c| c.to_string()));
    }
    out
}

pub fn tokenize_char(text: &str) -> Vec<String> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| c.to_string())
        .collect()
}

pub const UNK_TOKEN: &str = "<unk>";

/// Token probabilities with a reserved mass for unseen tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct UnigramTable {
    probs: BTreeMap<String, f64>,
    unk_prob: f64,
}

impl UnigramTable {
    pub fn new(probs: BTreeMap<String, f64>, unk_prob: f64) -> Result<Self> {
        let bad = |reason: String| Error::BadTable { line: 0, reason };
        if !(unk_prob > 0.0 && unk_prob <= 1.0) {
            return Err(bad(format!("unknown-token probability {unk_prob} not in (0, 1]")));
        }
        if let Some((t, p)) = probs.iter().find(|(_, &p)| !(p > 0.0 && p <= 1.0)) {
            return Err(bad(format!("probability {p} of {t:?} not in (0, 1]")));
        }
        let total: f64 = probs.values().sum::<f64>() + unk_prob;
        if (total - 1.0).abs() > 1e-6 {
            return Err(bad(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(UnigramTable { probs, unk_prob })
    }

    pub fn prob(&self, token: &str) -> f64 {
        self.probs.get(token).copied().unwrap_or(self.unk_prob)
    }

    pub fn unk_prob(&self) -> f64 {
        self.unk_prob
    }

    pub fn vocab_len(&self) -> usize {
        self.probs.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.probs.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// `token<TAB>probability` lines in token order, then the `<unk>` line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (t, p) in &self.probs {
            writeln!(out, "{t}\t{p}").expect("writing to a String");
        }
        writeln!(out, "{UNK_TOKEN}\t{}", self.unk_prob).expect("writing to a String");
        out
    }

    pub fn from_tsv(content: &str) -> Result<Self> {
        let mut probs = BTreeMap::new();
        let mut unk = None;
        for (i, line) in content.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::BadTable {
                line: line_no,
                reason: reason.into(),
            };
            let (tok, p) = line.split_once('\t').ok_or_else(|| bad("expected `token<TAB>probability`"))?;
            let p: f64 = p.trim().parse().map_err(|_| bad("unparseable probability"))?;
            if tok == UNK_TOKEN {
                unk = Some(p);
            } else {
                probs.entry(tok.to_string()).or_insert(p);
            }
        }
        let unk = unk.ok_or_else(|| Error::BadTable {
            line: 0,
            reason: format!("missing {UNK_TOKEN} line"),
        })?;
        UnigramTable::new(probs, unk)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_tsv(&read_text(path)?).map_err(|e| e.context(path.display().to_string()))
    }
}

/// Add-one smoothed unigram table over the corpus vocabulary plus one unknown
/// slot: `p(w) = (count(w) + 1) / (N + |V| + 1)`, `p(unk) = 1 / (N + |V| + 1)`.
pub fn build_unigram_table<S: AsRef<str>>(
    corpus_lines: impl IntoIterator<Item = S>,
    tok: &Tokenizer,
) -> Result<UnigramTable> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for line in corpus_lines {
        for t in tok.tokenize(line.as_ref()) {
            *counts.entry(t).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    let denom = (total + counts.len() as u64 + 1) as f64;
    let probs = counts
        .into_iter()
        .map(|(t, c)| (t, (c + 1) as f64 / denom))
        .collect();
    UnigramTable::new(probs, 1.0 / denom)
}

/// Word vectors of a single fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl VectorTable {
    pub fn new(dim: usize, vectors: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::BadVector {
                line: 0,
                reason: "dimension must be positive".into(),
            });
        }
        if let Some(v) = vectors.values().find(|v| v.len() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                got: v.len(),
                line: None,
            });
        }
        Ok(VectorTable { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Parses `word v1 v2 ...` lines with an optional `count dim` header.
    /// Duplicate words keep their first vector.
    pub fn parse(content: &str) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut vectors = BTreeMap::new();
        for (i, line) in content.lines().enumerate() {
            let line_no = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if vectors.is_empty() && dim.is_none() && fields.len() == 2 {
                if let (Ok(_), Ok(d)) = (fields[0].parse::<u64>(), fields[1].parse::<usize>()) {
                    dim = Some(d);
                    continue;
                }
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::BadVector {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::BadVector {
                    line: line_no,
                    reason: "non-finite component".into(),
                });
            }
            let expected = *dim.get_or_insert(values.len());
            if values.len() != expected {
                return Err(Error::DimMismatch {
                    expected,
                    got: values.len(),
                    line: Some(line_no),
                });
            }
            vectors.entry(fields[0].to_string()).or_insert(values);
        }
        if vectors.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        VectorTable::new(dim.unwrap_or(0), vectors)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&read_text(path)?).map_err(|e| e.context(path.display().to_string()))
    }

    /// Header line then one row per word, in word order.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.vectors.len(), self.dim);
        for (w, v) in &self.vectors {
            out.push_str(w);
            for x in v {
                write!(out, " {x}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_word_vectors(path: impl AsRef<Path>) -> Result<VectorTable> {
    VectorTable::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn space_punct_examples() {
        assert_eq!(tokenize_space_punct("Hello, world!"), toks(&["Hello", ",", "world", "!"]));
        assert_eq!(tokenize_space_punct("a  b"), toks(&["a", "b"]));
        assert!(tokenize_space_punct("").is_empty());
        assert_eq!(tokenize_space_punct("don't"), toks(&["don't"]));
        assert_eq!(tokenize_space_punct("(\"ok\")"), toks(&["(", "\"", "ok", "\"", ")"]));
        assert_eq!(tokenize_space_punct("..."), toks(&[".", ".", "."]));
        assert_eq!(tokenize_space_punct("$5+"), toks(&["$", "5", "+"]));
        assert_eq!(tokenize_space_punct("你好。"), toks(&["你好", "。"]));
    }

    #[test]
    fn lowercase_is_applied_last() {
        let t = Tokenizer::new(TokenizerKind::SpacePunct, true);
        assert_eq!(t.tokenize("Hello, WORLD"), toks(&["hello", ",", "world"]));
    }

    #[test]
    fn char_examples() {
        assert_eq!(tokenize_char("你好"), toks(&["你", "好"]));
        assert_eq!(tokenize_char("你 好"), toks(&["你", "好"]));
        assert_eq!(tokenize_char("ab"), toks(&["a", "b"]));
    }

    // Independent counting oracle for the add-one formula.
    fn laplace_oracle(tokens: &[&str]) -> (Vec<(String, f64)>, f64) {
        let mut vocab: Vec<&str> = tokens.to_vec();
        vocab.sort();
        vocab.dedup();
        let denom = (tokens.len() + vocab.len() + 1) as f64;
        let probs = vocab
            .iter()
            .map(|w| {
                let c = tokens.iter().filter(|t| *t == w).count();
                (w.to_string(), (c + 1) as f64 / denom)
            })
            .collect();
        (probs, 1.0 / denom)
    }

    #[test]
    fn unigram_laplace() {
        let tok = Tokenizer::default();
        let table = build_unigram_table(["a a", "b"], &tok).unwrap();
        let (oracle, unk) = laplace_oracle(&["a", "a", "b"]);
        assert_eq!(oracle, vec![("a".into(), 0.5), ("b".into(), 2.0 / 6.0)]);
        assert_eq!(unk, 1.0 / 6.0);
        assert_eq!(table.prob("a"), 0.5);
        assert_eq!(table.prob("b"), 2.0 / 6.0);
        assert_eq!(table.unk_prob(), 1.0 / 6.0);
        assert_eq!(table.prob("zzz"), 1.0 / 6.0);

        let single = build_unigram_table(["a"], &tok).unwrap();
        assert_eq!(single.prob("a"), 2.0 / 3.0);
        assert_eq!(single.unk_prob(), 1.0 / 3.0);

        assert!(matches!(
            build_unigram_table(Vec::<String>::new(), &tok),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(build_unigram_table(["  "], &tok), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn unigram_tsv_round_trip() {
        let table = build_unigram_table(["the cat sat on the mat ."], &Tokenizer::default()).unwrap();
        let text = table.to_tsv();
        assert!(text.ends_with(&format!("<unk>\t{}\n", table.unk_prob())));
        assert_eq!(UnigramTable::from_tsv(&text).unwrap(), table);
        assert!(UnigramTable::from_tsv("a\t0.5\n").is_err());
        assert!(UnigramTable::from_tsv("a\t0.9\n<unk>\t0.5\n").is_err());
        assert!(UnigramTable::from_tsv("a 0.5\n<unk>\t0.5\n").is_err());
    }

    #[test]
    fn word_vectors() {
        let vt = VectorTable::parse("a 1 0\nb 0 1").unwrap();
        assert_eq!(vt.dim(), 2);
        assert_eq!(vt.len(), 2);
        assert_eq!(vt.get("b"), Some(&[0.0, 1.0][..]));
        assert!(matches!(
            VectorTable::parse("a 1 0\nb 1"),
            Err(Error::DimMismatch { line: Some(2), .. })
        ));
        assert_eq!(VectorTable::parse("2 2\na 1 0\nb 0 1").unwrap(), vt);
        assert!(matches!(VectorTable::parse("a 1 x"), Err(Error::BadVector { line: 1, .. })));
        let dup = VectorTable::parse("a 1 0\na 5 5").unwrap();
        assert_eq!(dup.get("a"), Some(&[1.0, 0.0][..]));
        assert_eq!(VectorTable::parse(&vt.to_text()).unwrap(), vt);
    }

    proptest! {
        #[test]
        fn char_token_count(text in "\\PC{0,40}") {
            let n = text.chars().filter(|c| !c.is_whitespace()).count();
            prop_assert_eq!(tokenize_char(&text).len(), n);
        }

        #[test]
        fn laplace_mass_sums_to_one(lines in prop::collection::vec("[a-e ]{0,12}", 1..8)) {
            let tok = Tokenizer::default();
            prop_assume!(lines.iter().any(|l| !l.trim().is_empty()));
            let t = build_unigram_table(&lines, &tok).unwrap();
            let total: f64 = t.iter().map(|(_, p)| p).sum::<f64>() + t.unk_prob();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn tokenizers_are_pure(text in "\\PC{0,40}") {
            prop_assert_eq!(tokenize_space_punct(&text), tokenize_space_punct(&text));
            let joined: String = tokenize_space_punct(&text).concat();
            let stripped: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, stripped);
        }
    }
}
