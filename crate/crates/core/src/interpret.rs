//! Token occlusion and feature attribution for a trained [`Profiler`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiler::{Model, Output, Profiler};

/// Upper bound on tokens for occlusion (one prediction per token).
pub const MAX_OCCLUSION_TOKENS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub tokens: Vec<String>,
    pub deltas: Vec<f64>,
    /// Regression: the predicted score. Classification: the probability of the
    /// predicted class, which is what the deltas are measured in.
    pub base_score: f64,
    pub label: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttribution {
    pub names: Vec<String>,
    pub contributions: Vec<f64>,
    pub base_score: f64,
    /// Intercept on the score scale, for linear models only; contributions plus
    /// bias equal `base_score`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    pub label: i64,
}

/// Scalar that attributions track: the score, or for class probabilities the
/// probability of class index `class`.
fn tracked(out: &Output, class: Option<usize>) -> f64 {
    match (out, class) {
        (Output::Score(s), _) => *s,
        (Output::Probs(p), Some(c)) => p[c],
        (Output::Probs(_), None) => unreachable!("class is fixed for probability outputs"),
    }
}

fn class_of(p: &Profiler, out: &Output) -> Result<Option<usize>> {
    Ok(match out {
        Output::Score(_) => None,
        Output::Probs(_) => {
            let pred = p.to_prediction(out.clone())?;
            Some(p.label_spec().index_of(pred.label)?)
        }
    })
}

/// Leave-one-token-out: `delta_i = base - value(tokens without position i)`.
pub fn attribute_tokens(p: &Profiler, text: &str) -> Result<TokenAttribution> {
    let tokens = p.tokenize(text);
    if tokens.is_empty() {
        return Err(Error::NoTokens);
    }
    if tokens.len() > MAX_OCCLUSION_TOKENS {
        return Err(Error::TooManyTokens {
            count: tokens.len(),
            max: MAX_OCCLUSION_TOKENS,
        });
    }
    let feats = p.pipeline();
    let base_out = p.output_raw(feats.raw_features(&tokens))?;
    let class = class_of(p, &base_out)?;
    let base = tracked(&base_out, class);
    let label = p.to_prediction(base_out)?.label;
    let mut rest: Vec<&str> = Vec::with_capacity(tokens.len());
    let deltas = (0..tokens.len())
        .map(|i| {
            rest.clear();
            rest.extend(tokens.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, t)| t.as_str()));
            let out = p.output_raw(feats.raw_features(&rest))?;
            Ok(base - tracked(&out, class))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TokenAttribution {
        tokens,
        deltas,
        base_score: base,
        label,
    })
}

/// Linear models: `weight_j * x_j` on the score scale. Other models: the change
/// in the tracked value when feature `j` is replaced by its training mean.
pub fn attribute_features(p: &Profiler, text: &str) -> Result<FeatureAttribution> {
    let feats = p.pipeline();
    let raw = feats.raw_features(&p.tokenize(text));
    let names = p.feature_names().to_vec();
    let base_out = p.output_raw(raw.clone())?;
    let label = p.to_prediction(base_out.clone())?.label;

    if let Model::Linear(m) = p.model() {
        let x = feats.finish(raw);
        let spec = p.label_spec();
        let (scale, offset) = if p.output_normalized() {
            ((spec.hi() - spec.lo()) as f64, spec.lo() as f64)
        } else {
            (1.0, 0.0)
        };
        return Ok(FeatureAttribution {
            names,
            contributions: m.weights.iter().zip(&x).map(|(w, v)| w * v * scale).collect(),
            base_score: tracked(&base_out, None),
            bias: Some(offset + m.bias * scale),
            label,
        });
    }

    let class = class_of(p, &base_out)?;
    let base = tracked(&base_out, class);
    let contributions = (0..raw.len())
        .map(|j| {
            let mut ablated = raw.clone();
            ablated[j] = p.feature_means()[j];
            Ok(base - tracked(&p.output_raw(ablated)?, class))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FeatureAttribution {
        names,
        contributions,
        base_score: base,
        bias: None,
        label,
    })
}
