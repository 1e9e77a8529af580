//! Domain types shared by every stage of the pipeline.

mod config;
pub(crate) mod matches;
mod records;

pub use config::{ExperimentConfig, KEYS as CONFIG_KEYS};
pub use matches::{MatchArray, MatchEntry, Prediction};
pub use records::{
    normalize, validate_disjointness, AttributeMapping, Party, Provenance, Record, RecordSet, ReferenceSet,
};

use crate::error::{Error, Result};

/// Per-record distances to every reference-set row, one group per mapping pair.
///
/// Distances are stored flat, group after group; each group holds `group_len`
/// entries (the reference-set size). Only the opaque record id travels with
/// the distances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmashedVector {
    pub record_id: String,
    group_len: usize,
    distances: Vec<u32>,
}

impl SmashedVector {
    pub fn new(record_id: impl Into<String>, group_len: usize, distances: Vec<u32>) -> Result<Self> {
        if group_len == 0 || distances.is_empty() || distances.len() % group_len != 0 {
            return Err(Error::data(format!(
                "{} distances cannot be split into groups of {group_len}",
                distances.len()
            )));
        }
        Ok(SmashedVector {
            record_id: record_id.into(),
            group_len,
            distances,
        })
    }

    /// Build from explicit groups; all groups must share one non-zero length.
    pub fn from_groups(record_id: impl Into<String>, groups: &[Vec<u32>]) -> Result<Self> {
        let group_len = groups.first().map_or(0, Vec::len);
        if let Some(index) = groups.iter().position(|g| g.len() != group_len) {
            return Err(Error::GroupMismatch {
                index,
                detail: format!("length {} != {group_len}", groups[index].len()),
            });
        }
        Self::new(record_id, group_len, groups.concat())
    }

    pub fn group_len(&self) -> usize {
        self.group_len
    }

    pub fn group_count(&self) -> usize {
        self.distances.len() / self.group_len
    }

    pub fn group(&self, index: usize) -> &[u32] {
        &self.distances[index * self.group_len..(index + 1) * self.group_len]
    }

    pub fn groups(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.distances.chunks_exact(self.group_len)
    }

    pub fn distances(&self) -> &[u32] {
        &self.distances
    }

    pub fn to_groups(&self) -> Vec<Vec<u32>> {
        self.groups().map(<[u32]>::to_vec).collect()
    }
}

/// Per-pair comparison features, one cosine distance per mapping pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    NonMatch,
    Match,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Match => 1,
            Label::NonMatch => 0,
        }
    }

    /// Signed class used by the SVM dual (+1 match, -1 non-match).
    pub fn sign(self) -> f64 {
        match self {
            Label::Match => 1.0,
            Label::NonMatch => -1.0,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Label::Match),
            0 => Ok(Label::NonMatch),
            other => Err(Error::data(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(features: impl Into<FeatureVector>, label: Label) -> Self {
        LabeledExample {
            features: features.into(),
            label,
        }
    }
}

/// Write examples as `f0,f1,...,label` rows.
pub fn write_examples_csv<W: std::io::Write>(examples: &[LabeledExample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = examples.first().map_or(0, |e| e.features.len());
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for ex in examples {
        let mut row: Vec<String> = ex.features.0.iter().map(|v| format!("{v:.16e}")).collect();
        row.push(ex.label.as_u8().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_examples_csv<R: std::io::Read>(input: R) -> Result<Vec<LabeledExample>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let n = row.len();
        if n < 2 {
            return Err(Error::data("example rows need at least one feature and a label"));
        }
        let features = row
            .iter()
            .take(n - 1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::data(format!("bad feature value: {e}")))?;
        let label = row[n - 1]
            .trim()
            .parse::<u8>()
            .map_err(|e| Error::data(format!("bad label: {e}")))?;
        out.push(LabeledExample::new(features, Label::from_u8(label)?));
    }
    Ok(out)
}
