//! Cross-party matching: the split matcher over smashed vectors, the plain
//! similarity baseline and the threshold rule used as an ideal-match oracle.

use rayon::prelude::*;

use crate::datagen::{corrupt_recordset, negative_index, CorruptionSpec};
use crate::distance::{cosine_from_parts, integer_parts, EditPattern};
use crate::error::{Error, Result, StageExt};
use crate::model::{FeatureVector, Label, LabeledExample, MatchArray, MatchEntry, Record, RecordSet, SmashedVector};
use crate::svm::{self, SvmConfig, SvmModel};

/// Cross products above this size log a warning; there is no blocking.
pub const PAIR_WARNING_THRESHOLD: u64 = 100_000_000;

/// Largest distance for which a 256-term i32 dot product cannot overflow.
const NARROW_MAX: u32 = 2896;
const NARROW_CHUNK: usize = 256;
/// A-rows scored together against each B-row.
const TILE: usize = 8;

/// Normalized edit similarity `1 - ed(a, b) / max(len(a), len(b), 1)`.
pub fn similarity(a: &str, b: &str) -> f64 {
    let pattern = EditPattern::new(a);
    let b: Vec<char> = b.chars().collect();
    let ed = pattern.distance(&b);
    1.0 - ed as f64 / pattern.len().max(b.len()).max(1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealMatchConfig {
    /// One similarity threshold per attribute, in schema order.
    pub thresholds: Vec<f64>,
}

impl IdealMatchConfig {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::config(format!("threshold {t} outside [0, 1]")));
        }
        Ok(IdealMatchConfig { thresholds })
    }

    pub fn uniform(t: f64, attributes: usize) -> Result<Self> {
        Self::new(vec![t; attributes])
    }
}

/// True iff every attribute similarity reaches its threshold. Attributes
/// are taken in `a`'s order and looked up by name in `b`; an attribute `b`
/// lacks has similarity 0.
pub fn ideal_match(a: &Record, b: &Record, cfg: &IdealMatchConfig) -> bool {
    a.attributes.iter().zip(&cfg.thresholds).all(|((name, va), &t)| {
        let sim = b.value(name).map_or(0.0, |vb| similarity(va, vb));
        sim >= t
    })
}

/// Smashed vectors repacked for the cross-product kernel.
struct Packed {
    groups: usize,
    group_len: usize,
    /// Row-major narrow copies when every distance fits.
    narrow: Option<Vec<i16>>,
    norms: Vec<u64>,
}

impl Packed {
    fn new(vs: &[SmashedVector], narrow: bool) -> Self {
        let groups = vs.first().map_or(0, SmashedVector::group_count);
        let group_len = vs.first().map_or(0, SmashedVector::group_len);
        let norms = vs
            .iter()
            .flat_map(|v| {
                v.groups()
                    .map(|g| g.iter().map(|&x| u64::from(x) * u64::from(x)).sum::<u64>())
            })
            .collect();
        let narrow = narrow.then(|| {
            vs.iter()
                .flat_map(|v| v.distances().iter().map(|&x| x as i16))
                .collect()
        });
        Packed {
            groups,
            group_len,
            narrow,
            norms,
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[i16] {
        let w = self.groups * self.group_len;
        &self.narrow.as_ref().expect("narrow")[i * w..(i + 1) * w]
    }
}

#[inline]
fn dot_narrow(a: &[i16], b: &[i16]) -> u64 {
    let mut total = 0i64;
    for (ca, cb) in a.chunks(NARROW_CHUNK).zip(b.chunks(NARROW_CHUNK)) {
        let s: i32 = ca.iter().zip(cb).map(|(&x, &y)| i32::from(x) * i32::from(y)).sum();
        total += i64::from(s);
    }
    total as u64
}

fn check_structure(da: &[SmashedVector], db: &[SmashedVector], model: &SvmModel) -> Result<()> {
    let Some(first) = da.first().or(db.first()) else {
        return Ok(());
    };
    let (gc, gl) = (first.group_count(), first.group_len());
    for (side, vs) in [("A", da), ("B", db)] {
        if let Some(v) = vs.iter().find(|v| v.group_count() != gc || v.group_len() != gl) {
            return Err(Error::GroupMismatch {
                index: v.group_count().min(gc),
                detail: format!(
                    "{side} vector '{}' has {}x{} groups, expected {gc}x{gl} (first offending pair involves '{}')",
                    v.record_id,
                    v.group_count(),
                    v.group_len(),
                    v.record_id
                ),
            });
        }
    }
    if model.dim() != gc {
        return Err(Error::LengthMismatch {
            expected: gc,
            actual: model.dim(),
        });
    }
    Ok(())
}

/// Classify every pair of `da x db` with `model` on the per-group cosine
/// distances. Scoring is exact: the same integer dot products as
/// [`crate::distance::group_distance`], so features are bit-identical.
pub fn split_match(da: &[SmashedVector], db: &[SmashedVector], model: &SvmModel) -> Result<MatchArray> {
    check_structure(da, db, model)?;
    let pairs = da.len() as u64 * db.len() as u64;
    if pairs > PAIR_WARNING_THRESHOLD {
        log::warn!("scoring {pairs} pairs without blocking");
    }
    let narrow = da
        .iter()
        .chain(db)
        .all(|v| v.distances().iter().all(|&x| x <= NARROW_MAX));
    let pa = Packed::new(da, narrow);
    let pb = Packed::new(db, narrow);
    let (groups, gl) = (pa.groups.max(pb.groups), pa.group_len.max(pb.group_len));

    let tiles: Vec<usize> = (0..da.len()).step_by(TILE).collect();
    let entries: Vec<MatchEntry> = tiles
        .par_iter()
        .flat_map_iter(|&start| {
            let end = (start + TILE).min(da.len());
            let mut out = Vec::with_capacity((end - start) * db.len());
            let mut features = vec![0.0; groups];
            for j in 0..db.len() {
                for i in start..end {
                    for (g, f) in features.iter_mut().enumerate() {
                        let dot = if narrow {
                            let (ra, rb) = (pa.row(i), pb.row(j));
                            dot_narrow(&ra[g * gl..(g + 1) * gl], &rb[g * gl..(g + 1) * gl])
                        } else {
                            integer_parts(da[i].group(g), db[j].group(g)).0
                        };
                        *f = cosine_from_parts(
                            dot as f64,
                            pa.norms[i * groups + g] as f64,
                            pb.norms[j * groups + g] as f64,
                        );
                    }
                    out.push(MatchEntry {
                        a: i as u32,
                        b: j as u32,
                        decision: model.decision_unchecked(&features),
                    });
                }
            }
            out
        })
        .collect();
    let ids_a = da.iter().map(|v| v.record_id.clone()).collect();
    let ids_b = db.iter().map(|v| v.record_id.clone()).collect();
    MatchArray::new(ids_a, ids_b, entries)
}

/// Per-attribute similarities of two plaintext records, positional.
pub fn plain_features(a: &Record, b: &Record) -> FeatureVector {
    FeatureVector(a.values().zip(b.values()).map(|(x, y)| similarity(x, y)).collect())
}

struct Prepared {
    patterns: Vec<Vec<EditPattern>>,
    chars: Vec<Vec<Vec<char>>>,
}

impl Prepared {
    fn new(recs: &RecordSet) -> Self {
        Prepared {
            patterns: recs
                .records()
                .iter()
                .map(|r| r.values().map(EditPattern::new).collect())
                .collect(),
            chars: recs
                .records()
                .iter()
                .map(|r| r.values().map(|v| v.chars().collect()).collect())
                .collect(),
        }
    }

    #[inline]
    fn features_into(&self, i: usize, other: &Prepared, j: usize, out: &mut [f64]) {
        for (k, f) in out.iter_mut().enumerate() {
            let p = &self.patterns[i][k];
            let t = &other.chars[j][k];
            let ed = p.distance(t);
            *f = 1.0 - ed as f64 / p.len().max(t.len()).max(1) as f64;
        }
    }
}

/// Non-private baseline: every pair of `a x b` scored on plaintext
/// similarities by one model.
pub fn plain_match(a: &RecordSet, b: &RecordSet, model: &SvmModel) -> Result<MatchArray> {
    if a.schema() != b.schema() {
        return Err(Error::data(format!(
            "schemas differ: [{}] vs [{}]",
            a.schema().join(","),
            b.schema().join(",")
        )));
    }
    let m = a.schema().len();
    if model.dim() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: model.dim(),
        });
    }
    let pairs = a.len() as u64 * b.len() as u64;
    if pairs > PAIR_WARNING_THRESHOLD {
        log::warn!("scoring {pairs} pairs without blocking");
    }
    let pa = Prepared::new(a);
    let pb = Prepared::new(b);
    let entries: Vec<MatchEntry> = (0..a.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut f = vec![0.0; m];
            let pa = &pa;
            let pb = &pb;
            (0..b.len()).map(move |j| {
                pa.features_into(i, pb, j, &mut f);
                MatchEntry {
                    a: i as u32,
                    b: j as u32,
                    decision: model.decision_unchecked(&f),
                }
            })
        })
        .collect();
    MatchArray::new(a.ids(), b.ids(), entries)
}

/// Labelled similarity vectors built like the split training data: a
/// positive per row against its own corruption, then a negative against the
/// corruption of another row.
pub fn plain_training_data(recs: &RecordSet, spec: &CorruptionSpec) -> Result<Vec<LabeledExample>> {
    let n = recs.len();
    if n < 2 {
        return Err(Error::data(format!(
            "baseline training needs at least 2 records, got {n}"
        )));
    }
    let corrupted = corrupt_recordset(recs, spec).stage("corrupt")?;
    let rows = recs.records();
    let bad = corrupted.records();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let k = negative_index(spec.rng_seed, i, n);
            [
                LabeledExample::new(plain_features(&rows[i], &bad[i]), Label::Match),
                LabeledExample::new(plain_features(&rows[i], &bad[k]), Label::NonMatch),
            ]
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect())
}

pub fn train_plain_baseline(recs: &RecordSet, spec: &CorruptionSpec, cfg: &SvmConfig) -> Result<SvmModel> {
    let examples = plain_training_data(recs, spec)?;
    svm::train(&examples, cfg, spec.rng_seed).stage("train")
}
