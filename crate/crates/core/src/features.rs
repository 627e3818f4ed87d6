//! Feature extractors over token lists and the pipeline that composes them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lingproc::{Tokenizer, UnigramTable, VectorTable};

/// Extracted feature values with their aligned names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub names: Vec<String>,
}

pub fn token_count<S: AsRef<str>>(tokens: &[S]) -> f64 {
    tokens.len() as f64
}

/// Mean token length in Unicode scalar values; 0 for no tokens.
pub fn avg_token_length<S: AsRef<str>>(tokens: &[S]) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    let total: usize = tokens.iter().map(|t| t.as_ref().chars().count()).sum();
    total as f64 / tokens.len() as f64
}

/// Mean natural-log probability of the tokens; `ln(unk)` for no tokens.
pub fn avg_unigram_loglik<S: AsRef<str>>(tokens: &[S], table: &UnigramTable) -> f64 {
    if tokens.is_empty() {
        return table.unk_prob().ln();
    }
    let total: f64 = tokens.iter().map(|t| table.prob(t.as_ref()).ln()).sum();
    total / tokens.len() as f64
}

/// Mean of in-vocabulary token vectors; zeros if none are known.
pub fn doc_embedding<S: AsRef<str>>(tokens: &[S], vt: &VectorTable) -> Vec<f64> {
    let mut acc = vec![0.0; vt.dim()];
    let mut hits = 0usize;
    for v in tokens.iter().filter_map(|t| vt.get(t.as_ref())) {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
        hits += 1;
    }
    if hits > 0 {
        let n = hits as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    acc
}

#[derive(Debug, Clone)]
pub enum Extractor {
    TokenCount,
    AvgTokenLength,
    UnigramLikelihood(Arc<UnigramTable>),
    DocEmbedding(Arc<VectorTable>),
}

impl Extractor {
    /// Name used in configuration files.
    pub fn type_name(&self) -> &'static str {
        match self {
            Extractor::TokenCount => "token_count",
            Extractor::AvgTokenLength => "avg_token_length",
            Extractor::UnigramLikelihood(_) => "unigram_likelihood",
            Extractor::DocEmbedding(_) => "doc_embedding",
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        match self {
            Extractor::DocEmbedding(vt) => (0..vt.dim()).map(|i| format!("doc_embedding_{i}")).collect(),
            e => vec![e.type_name().to_string()],
        }
    }

    fn extract_into<S: AsRef<str>>(&self, tokens: &[S], out: &mut Vec<f64>) {
        match self {
            Extractor::TokenCount => out.push(token_count(tokens)),
            Extractor::AvgTokenLength => out.push(avg_token_length(tokens)),
            Extractor::UnigramLikelihood(t) => out.push(avg_unigram_loglik(tokens, t)),
            Extractor::DocEmbedding(vt) => out.extend(doc_embedding(tokens, vt)),
        }
    }
}

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn dims(&self) -> usize {
        self.means.len()
    }

    /// Constant columns (std 0) are only centered.
    pub fn apply(&self, values: &mut [f64]) {
        for ((v, m), s) in values.iter_mut().zip(&self.means).zip(&self.stds) {
            let s = if *s > 0.0 { *s } else { 1.0 };
            *v = (*v - m) / s;
        }
    }
}

pub fn fit_standardizer(rows: &[Vec<f64>]) -> Result<Standardizer> {
    let first = rows.first().ok_or(Error::EmptyTrainingSet)?;
    let d = first.len();
    if let Some(r) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimMismatch {
            expected: d,
            got: r.len(),
            line: None,
        });
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let stds = (0..d)
        .map(|j| {
            let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
            if rows.iter().all(|r| r[j] == rows[0][j]) {
                0.0
            } else {
                var.sqrt()
            }
        })
        .collect();
    Ok(Standardizer { means, stds })
}

/// Tokenizer plus ordered extractors, with an optional fitted standardizer.
#[derive(Debug, Clone)]
pub struct FeaturePipeline {
    tokenizer: Tokenizer,
    extractors: Vec<Extractor>,
    names: Vec<String>,
    standardizer: Option<Standardizer>,
}

impl FeaturePipeline {
    pub fn new(tokenizer: Tokenizer, extractors: Vec<Extractor>) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        for n in extractors.iter().flat_map(Extractor::feature_names) {
            if names.contains(&n) {
                return Err(Error::DuplicateFeature(n));
            }
            names.push(n);
        }
        Ok(FeaturePipeline {
            tokenizer,
            extractors,
            names,
            standardizer: None,
        })
    }

    pub fn with_standardizer(mut self, standardizer: Standardizer) -> Result<Self> {
        if standardizer.dims() != self.dims() || standardizer.stds.len() != self.dims() {
            return Err(Error::DimMismatch {
                expected: self.dims(),
                got: standardizer.dims(),
                line: None,
            });
        }
        self.standardizer = Some(standardizer);
        Ok(self)
    }

    pub fn tokenizer(&self) -> &Tokenizer {
        &self.tokenizer
    }

    pub fn extractors(&self) -> &[Extractor] {
        &self.extractors
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn dims(&self) -> usize {
        self.names.len()
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        self.tokenizer.tokenize(text)
    }

    /// Feature values before standardization.
    pub fn raw_features<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims());
        for e in &self.extractors {
            e.extract_into(tokens, &mut out);
        }
        out
    }

    /// Applies the standardizer, if fitted.
    pub fn finish(&self, mut raw: Vec<f64>) -> Vec<f64> {
        if let Some(s) = &self.standardizer {
            s.apply(&mut raw);
        }
        raw
    }

    pub fn extract_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> FeatureVector {
        FeatureVector {
            values: self.finish(self.raw_features(tokens)),
            names: self.names.clone(),
        }
    }

    pub fn extract(&self, text: &str) -> FeatureVector {
        self.extract_tokens(&self.tokenize(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lingproc::TokenizerKind;
    use std::collections::BTreeMap;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn table(entries: &[(&str, f64)], unk: f64) -> UnigramTable {
        let probs: BTreeMap<String, f64> = entries.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        UnigramTable::new(probs, unk).unwrap()
    }

    #[test]
    fn count_and_length() {
        assert_eq!(token_count(&["Hello", ",", "world", "!"]), 4.0);
        assert_eq!(token_count::<&str>(&[]), 0.0);
        assert_eq!(token_count(&["a"]), 1.0);
        assert_eq!(avg_token_length(&["ab", "abcd"]), 3.0);
        assert_eq!(avg_token_length(&["你好"]), 2.0);
        assert_eq!(avg_token_length::<&str>(&[]), 0.0);
    }

    #[test]
    fn unigram_loglik() {
        let t = table(&[("a", 0.5), ("b", 0.25)], 0.25);
        // One-line oracle: mean of ln p.
        let oracle = |ps: &[f64], n: f64| ps.iter().map(|p| p.ln()).sum::<f64>() / n;
        let ab = avg_unigram_loglik(&["a", "b"], &t);
        assert!(approx(ab, oracle(&[0.5, 0.25], 2.0)));
        assert!((ab - -1.0397).abs() < 1e-4);
        let c = avg_unigram_loglik(&["c"], &t);
        assert!(approx(c, 0.25f64.ln()));
        assert!((c - -1.3863).abs() < 1e-4);
        assert!(approx(avg_unigram_loglik::<&str>(&[], &t), 0.25f64.ln()));
    }

    #[test]
    fn embedding() {
        let vt = VectorTable::parse("a 1 0\nb 0 1").unwrap();
        assert_eq!(doc_embedding(&["a", "b"], &vt), vec![0.5, 0.5]);
        assert_eq!(doc_embedding(&["zzz"], &vt), vec![0.0, 0.0]);
        assert_eq!(doc_embedding(&["a", "a"], &vt), vec![1.0, 0.0]);
    }

    fn count_len_pipeline() -> FeaturePipeline {
        FeaturePipeline::new(
            Tokenizer::default(),
            vec![Extractor::TokenCount, Extractor::AvgTokenLength],
        )
        .unwrap()
    }

    #[test]
    fn extract_examples() {
        let p = count_len_pipeline();
        // Hello=5, ","=1, world=5, "!"=1 -> mean 3.0
        let lens = [5.0, 1.0, 5.0, 1.0];
        let oracle_len = lens.iter().sum::<f64>() / lens.len() as f64;
        let fv = p.extract("Hello, world!");
        assert_eq!(fv.values, vec![4.0, oracle_len]);
        assert_eq!(fv.values, vec![4.0, 3.0]);
        assert_eq!(fv.names, vec!["token_count", "avg_token_length"]);
        assert_eq!(p.extract("").values, vec![0.0, 0.0]);

        let s = Standardizer {
            means: vec![4.0, 3.0],
            stds: vec![1.0, 1.0],
        };
        let p = p.with_standardizer(s).unwrap();
        assert_eq!(p.extract("Hello, world!").values, vec![0.0, 0.0]);
    }

    #[test]
    fn embedding_names_and_duplicates() {
        let vt = Arc::new(VectorTable::parse("a 1 0 0").unwrap());
        let p = FeaturePipeline::new(
            Tokenizer::new(TokenizerKind::Char, false),
            vec![Extractor::TokenCount, Extractor::DocEmbedding(vt)],
        )
        .unwrap();
        assert_eq!(
            p.feature_names(),
            ["token_count", "doc_embedding_0", "doc_embedding_1", "doc_embedding_2"]
        );
        assert_eq!(p.extract("a b").values, vec![2.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            FeaturePipeline::new(Tokenizer::default(), vec![Extractor::TokenCount, Extractor::TokenCount]),
            Err(Error::DuplicateFeature(_))
        ));
        let bad = Standardizer {
            means: vec![0.0],
            stds: vec![1.0],
        };
        assert!(p.with_standardizer(bad).is_err());
    }

    #[test]
    fn standardizer_examples() {
        let s = fit_standardizer(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!((s.means[0], s.stds[0]), (2.0, 1.0));
        let s = fit_standardizer(&[vec![5.0], vec![5.0]]).unwrap();
        assert_eq!((s.means[0], s.stds[0]), (5.0, 0.0));
        let mut v = [7.0];
        s.apply(&mut v);
        assert_eq!(v, [2.0]);
        // Population variance oracle: ((0-2)^2 + (0-2)^2 + (6-2)^2) / 3 = 8
        let s = fit_standardizer(&[vec![0.0], vec![0.0], vec![6.0]]).unwrap();
        assert_eq!(s.means[0], 2.0);
        assert!(approx(s.stds[0], 8f64.sqrt()));
        assert!(matches!(fit_standardizer(&[]), Err(Error::EmptyTrainingSet)));
    }

    proptest::proptest! {
        #[test]
        fn standardized_training_columns(rows in proptest::collection::vec(
            proptest::collection::vec(-1e3f64..1e3, 3), 1..40)) {
            let s = fit_standardizer(&rows).unwrap();
            let z: Vec<Vec<f64>> = rows.iter().map(|r| { let mut r = r.clone(); s.apply(&mut r); r }).collect();
            let n = z.len() as f64;
            for j in 0..3 {
                let mean = z.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                proptest::prop_assert!(mean.abs() < 1e-9);
                if s.stds[j] > 0.0 {
                    proptest::prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
                } else {
                    proptest::prop_assert!(var == 0.0);
                }
            }
        }
    }
}
