//! Domain types shared across the crate and the converter between continuous
//! scores and ordinal labels.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contiguous integer label range `[lo, hi]` with at least two labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLabelSpec")]
pub struct LabelSpec {
    lo: i64,
    hi: i64,
}

#[derive(Deserialize)]
struct RawLabelSpec {
    lo: i64,
    hi: i64,
}

impl TryFrom<RawLabelSpec> for LabelSpec {
    type Error = Error;

    fn try_from(raw: RawLabelSpec) -> Result<Self> {
        LabelSpec::new(raw.lo, raw.hi)
    }
}

impl LabelSpec {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidLabelSpec { lo, hi });
        }
        Ok(LabelSpec { lo, hi })
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    /// Number of labels K.
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, label: i64) -> bool {
        (self.lo..=self.hi).contains(&label)
    }

    pub fn check(&self, label: i64) -> Result<()> {
        if self.contains(label) {
            Ok(())
        } else {
            Err(self.out_of_range(label, None))
        }
    }

    pub(crate) fn out_of_range(&self, label: i64, line: Option<usize>) -> Error {
        Error::LabelOutOfRange {
            label,
            lo: self.lo,
            hi: self.hi,
            line,
        }
    }

    /// Zero-based class index of a label.
    pub fn index_of(&self, label: i64) -> Result<usize> {
        self.check(label)?;
        Ok((label - self.lo) as usize)
    }

    pub fn label_at(&self, index: usize) -> i64 {
        debug_assert!(index < self.len());
        self.lo + index as i64
    }

    pub fn labels(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }
}

impl fmt::Display for LabelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Regression,
    Classification,
}

impl TaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Regression => "regression",
            TaskKind::Classification => "classification",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One text with an optional gold label and optional prompt context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub text: String,
    pub label: Option<i64>,
    pub context: Option<String>,
}

impl Instance {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Option<i64>) -> Self {
        Instance {
            id: id.into(),
            text: text.into(),
            label,
            context: None,
        }
    }
}

/// Ordered collection of instances sharing one label range.
///
/// May be empty (a split can leave one side empty); readers reject empty input.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    label_spec: LabelSpec,
    instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        label_spec: LabelSpec,
        instances: Vec<Instance>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(instances.len());
        for inst in &instances {
            if inst.text.trim().is_empty() {
                return Err(Error::InvalidInstance {
                    id: inst.id.clone(),
                    reason: "text is empty".into(),
                });
            }
            if let Some(label) = inst.label {
                label_spec.check(label)?;
            }
            if !seen.insert(inst.id.as_str()) {
                return Err(Error::DuplicateId(inst.id.clone()));
            }
        }
        Ok(Dataset {
            name: name.into(),
            label_spec,
            instances,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn label_spec(&self) -> LabelSpec {
        self.label_spec
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Instance> {
        self.instances.iter()
    }

    /// Gold labels; errors if any instance is unlabeled.
    pub fn gold_labels(&self) -> Result<Vec<i64>> {
        self.instances
            .iter()
            .map(|i| {
                i.label.ok_or_else(|| Error::InvalidInstance {
                    id: i.id.clone(),
                    reason: "missing gold label".into(),
                })
            })
            .collect()
    }
}

/// Output of a profiler for one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub label: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

fn finite(score: f64) -> Result<f64> {
    if score.is_finite() {
        Ok(score)
    } else {
        Err(Error::NonFiniteScore(score))
    }
}

/// Bins a continuous score to the nearest label, rounding halves away from
/// zero and clamping into the range.
pub fn score_to_label(score: f64, spec: LabelSpec) -> Result<i64> {
    let rounded = finite(score)?.round();
    Ok(rounded.clamp(spec.lo as f64, spec.hi as f64) as i64)
}

pub fn label_to_score(label: i64, spec: LabelSpec) -> Result<f64> {
    spec.check(label)?;
    Ok(label as f64)
}

/// Maps `[lo, hi]` linearly onto `[0, 1]`, clamping outside values.
pub fn normalize_score(score: f64, spec: LabelSpec) -> Result<f64> {
    let s = finite(score)?;
    let span = (spec.hi - spec.lo) as f64;
    Ok(((s - spec.lo as f64) / span).clamp(0.0, 1.0))
}

pub fn denormalize_score(y01: f64, spec: LabelSpec) -> Result<f64> {
    let y = finite(y01)?;
    Ok(spec.lo as f64 + y * (spec.hi - spec.lo) as f64)
}
