//! Dataset preparation, the seeded record corrupter and the synthetic
//! training-set builder.

pub mod fixtures;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::distance::group_distance;
use crate::error::{Error, Result, StageExt};
use crate::model::{AttributeMapping, Label, LabeledExample, Record, RecordSet, ReferenceSet, SmashedVector};
use crate::seed;
use crate::smashing::map_recordset_to_refset;

/// Re-draws allowed when a drawn edit cannot be applied.
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditOp {
    Insert,
    Delete,
    Substitute,
    Transpose,
}

impl EditOp {
    pub const ALL: [EditOp; 4] = [EditOp::Insert, EditOp::Delete, EditOp::Substitute, EditOp::Transpose];
}

impl fmt::Display for EditOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EditOp::Insert => "insert",
            EditOp::Delete => "delete",
            EditOp::Substitute => "substitute",
            EditOp::Transpose => "transpose",
        })
    }
}

impl FromStr for EditOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "insert" | "ins" => Ok(EditOp::Insert),
            "delete" | "del" => Ok(EditOp::Delete),
            "substitute" | "sub" => Ok(EditOp::Substitute),
            "transpose" | "swap" => Ok(EditOp::Transpose),
            other => Err(Error::config(format!("unknown edit operation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionSpec {
    pub errors_per_row: u32,
    pub operations: Vec<EditOp>,
    pub alphabet: Vec<char>,
    pub rng_seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            errors_per_row: 1,
            operations: EditOp::ALL.to_vec(),
            alphabet: ('A'..='Z').collect(),
            rng_seed: 0,
        }
    }
}

impl CorruptionSpec {
    pub fn with_seed(seed: u64) -> Self {
        CorruptionSpec {
            rng_seed: seed,
            ..CorruptionSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.errors_per_row == 0 {
            return Err(Error::config("errors_per_row must be at least 1"));
        }
        if self.operations.is_empty() {
            return Err(Error::config("corruption needs at least one edit operation"));
        }
        if self.alphabet.is_empty() {
            return Err(Error::config("corruption alphabet is empty"));
        }
        Ok(())
    }
}

/// Keeps the first record of every distinct matching-attribute tuple.
pub fn deduplicate(recs: &RecordSet) -> RecordSet {
    let mut seen = HashSet::with_capacity(recs.len());
    let kept: Vec<Record> = recs
        .records()
        .iter()
        .filter(|r| seen.insert(r.key()))
        .cloned()
        .collect();
    RecordSet::new(recs.party, recs.schema().to_vec(), kept).expect("subset of a valid record set")
}

/// Applies one edit; `None` when the edit is inapplicable to `value`.
fn apply_edit<R: Rng>(value: &str, op: EditOp, alphabet: &[char], rng: &mut R) -> Option<String> {
    let mut chars: Vec<char> = value.chars().collect();
    match op {
        EditOp::Insert => {
            let pos = rng.gen_range(0..=chars.len());
            chars.insert(pos, *alphabet.choose(rng)?);
        }
        EditOp::Delete => {
            if chars.is_empty() {
                return None;
            }
            chars.remove(rng.gen_range(0..chars.len()));
        }
        EditOp::Substitute => {
            if chars.is_empty() {
                return None;
            }
            let pos = rng.gen_range(0..chars.len());
            let options: Vec<char> = alphabet.iter().copied().filter(|&c| c != chars[pos]).collect();
            chars[pos] = *options.choose(rng)?;
        }
        EditOp::Transpose => {
            if chars.len() < 2 {
                return None;
            }
            let pos = rng.gen_range(0..chars.len() - 1);
            if chars[pos] == chars[pos + 1] {
                return None;
            }
            chars.swap(pos, pos + 1);
        }
    }
    Some(chars.into_iter().collect())
}

/// Applies `errors_per_row` random edits, each to a uniformly chosen attribute
/// at a uniformly chosen position. The record id is preserved.
pub fn corrupt_record<R: Rng>(record: &Record, spec: &CorruptionSpec, rng: &mut R) -> Result<Record> {
    spec.validate()?;
    let mut out = record.clone();
    let n_attr = out.attributes.len();
    if n_attr == 0 {
        return Err(Error::data(format!("record '{}' has no attributes", record.record_id)));
    }
    for _ in 0..spec.errors_per_row {
        let mut applied = false;
        for _ in 0..MAX_REDRAWS {
            let op = *spec.operations.choose(rng).expect("validated non-empty");
            let attr = rng.gen_range(0..n_attr);
            let value = out.values_mut().nth(attr).expect("index in range");
            if let Some(edited) = apply_edit(value, op, &spec.alphabet, rng) {
                *value = edited;
                applied = true;
                break;
            }
        }
        if !applied {
            return Err(Error::data(format!(
                "no applicable edit for record '{}' after {MAX_REDRAWS} draws",
                record.record_id
            )));
        }
    }
    Ok(out)
}

/// Corrupts every record with its own sub-seeded stream; ids are preserved,
/// so `record_id` links each original to its corruption.
pub fn corrupt_recordset(recs: &RecordSet, spec: &CorruptionSpec) -> Result<RecordSet> {
    spec.validate()?;
    let records = recs
        .records()
        .par_iter()
        .enumerate()
        .map(|(i, r)| corrupt_record(r, spec, &mut seed::rng(spec.rng_seed, "corrupt", i as u64)))
        .collect::<Result<Vec<_>>>()?;
    RecordSet::new(recs.party, recs.schema().to_vec(), records)
}

/// Index of the negative partner drawn for row `i` of an `n`-row set.
pub fn negative_index(spec_seed: u64, i: usize, n: usize) -> usize {
    debug_assert!(n >= 2);
    let k = seed::rng(spec_seed, "negative", i as u64).gen_range(0..n - 1);
    if k >= i {
        k + 1
    } else {
        k
    }
}

/// Synthetic training examples for one party.
///
/// The party corrupts its own records, smashes the corrupted copy, and emits
/// for every row a positive example (row vs. its own corruption) followed by a
/// negative one (row vs. the corruption of a uniformly drawn other row).
pub fn build_training_data(
    smashed: &[SmashedVector],
    recs: &RecordSet,
    rs: &ReferenceSet,
    mapping: &AttributeMapping,
    spec: &CorruptionSpec,
) -> Result<Vec<LabeledExample>> {
    let n = recs.len();
    if n < 2 {
        return Err(Error::data(format!(
            "training needs at least 2 records to draw non-matching pairs, got {n}"
        )));
    }
    if smashed.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: smashed.len(),
        });
    }
    if let Some((d, r)) = smashed
        .iter()
        .zip(recs.records())
        .find(|(d, r)| d.record_id != r.record_id)
    {
        return Err(Error::data(format!(
            "smashed vector '{}' does not belong to record '{}'",
            d.record_id, r.record_id
        )));
    }
    let corrupted = corrupt_recordset(recs, spec).stage("corrupt")?;
    let smashed_corrupt = map_recordset_to_refset(&corrupted, rs, mapping).stage("smash")?;

    let pairs = (0..n)
        .into_par_iter()
        .map(|i| {
            let k = negative_index(spec.rng_seed, i, n);
            let pos = group_distance(&smashed[i], &smashed_corrupt[i])?;
            let neg = group_distance(&smashed[i], &smashed_corrupt[k])?;
            Ok([
                LabeledExample::new(pos, Label::Match),
                LabeledExample::new(neg, Label::NonMatch),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::edit_distance;
    use crate::model::Party;
    use crate::smashing::map_record_to_refset;
    use proptest::prelude::*;

    fn example_record() -> Record {
        Record::new("A-000001", [("first", "ADA"), ("middle", "IVY"), ("last", "KING")])
    }

    fn example_rs() -> ReferenceSet {
        ReferenceSet::from_rows(&["first", "last"], &[vec!["CHARLIE", "ADLER"], vec!["JAY", "ADLER"]]).unwrap()
    }

    fn attribute_distances(a: &Record, b: &Record) -> Vec<usize> {
        a.values().zip(b.values()).map(|(x, y)| edit_distance(x, y)).collect()
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let recs = RecordSet::from_rows(
            Party::A,
            &["first", "middle", "last"],
            &[
                vec!["ADA", "IVY", "KING"],
                vec!["BO", "EL", "LI"],
                vec!["ada", "ivy", "king "],
            ],
        )
        .unwrap();
        let d = deduplicate(&recs);
        assert_eq!(d.ids(), vec!["A-000001", "A-000002"]);
        assert!(d.has_candidate_key());
        assert_eq!(deduplicate(&d), d);
    }

    #[test]
    fn insertion_on_surname() {
        let spec = CorruptionSpec {
            operations: vec![EditOp::Insert],
            ..CorruptionSpec::default()
        };
        let mut rng = seed::rng(3, "t", 0);
        let record = Record::new("A-000001", [("last", "KING")]);
        let c = corrupt_record(&record, &spec, &mut rng).unwrap();
        let last = c.value("last").unwrap();
        assert_eq!(last.len(), 5);
        assert_eq!(edit_distance("KING", last), 1);
        assert_eq!(c.record_id, "A-000001");
    }

    #[test]
    fn single_error_touches_one_attribute() {
        let rec = example_record();
        for s in 0..200 {
            let spec = CorruptionSpec::with_seed(s);
            let c = corrupt_record(&rec, &spec, &mut seed::rng(s, "t", 0)).unwrap();
            let d = attribute_distances(&rec, &c);
            let changed: Vec<_> = d.iter().filter(|&&x| x > 0).collect();
            assert_eq!(changed.len(), 1, "seed {s}: {d:?}");
            assert!(*changed[0] == 1 || *changed[0] == 2);
        }
    }

    #[test]
    fn corruption_is_deterministic() {
        let rec = example_record();
        let spec = CorruptionSpec::with_seed(9);
        let a = corrupt_record(&rec, &spec, &mut seed::rng(9, "t", 0)).unwrap();
        let b = corrupt_record(&rec, &spec, &mut seed::rng(9, "t", 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inapplicable_edits_exhaust_redraws() {
        let spec = CorruptionSpec {
            operations: vec![EditOp::Delete, EditOp::Transpose],
            ..CorruptionSpec::default()
        };
        let rec = Record::new("A-1", [("first", "")]);
        assert!(corrupt_record(&rec, &spec, &mut seed::rng(1, "t", 0)).is_err());
        let bad = CorruptionSpec {
            alphabet: vec![],
            ..CorruptionSpec::default()
        };
        assert!(corrupt_record(&example_record(), &bad, &mut seed::rng(1, "t", 0)).is_err());
    }

    #[test]
    fn transpose_never_swaps_equal_neighbours() {
        let spec = CorruptionSpec {
            operations: vec![EditOp::Transpose],
            ..CorruptionSpec::default()
        };
        let rec = Record::new("A-1", [("first", "ANNA")]);
        for s in 0..50 {
            let c = corrupt_record(&rec, &spec, &mut seed::rng(s, "t", 0)).unwrap();
            assert_ne!(c.value("first"), Some("ANNA"));
            assert_eq!(edit_distance("ANNA", c.value("first").unwrap()), 2);
        }
    }

    #[test]
    fn corrupt_empty_set() {
        let empty = RecordSet::from_rows::<&str>(Party::B, &["first"], &[]).unwrap();
        assert!(corrupt_recordset(&empty, &CorruptionSpec::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn worked_example_positive() {
        let recs = RecordSet::new(
            Party::A,
            vec!["first".into(), "middle".into(), "last".into()],
            vec![
                example_record(),
                Record::new("A-000002", [("first", "BO"), ("middle", "EL"), ("last", "LI")]),
            ],
        )
        .unwrap();
        let rs = example_rs();
        let mapping = AttributeMapping::default_for(recs.schema(), rs.schema());
        let d = map_recordset_to_refset(&recs, &rs, &mapping).unwrap();
        let spec = CorruptionSpec::with_seed(5);
        let ex = build_training_data(&d, &recs, &rs, &mapping, &spec).unwrap();
        let labels: Vec<u8> = ex.iter().map(|e| e.label.as_u8()).collect();
        assert_eq!(labels, vec![1, 0, 1, 0]);

        // Positive example of the worked record: distance to its own corruption.
        let corrupted = corrupt_record(&recs.records()[0], &spec, &mut seed::rng(5, "corrupt", 0)).unwrap();
        let d_prime = map_record_to_refset(&corrupted, &rs, &mapping).unwrap();
        assert_eq!(ex[0].features, group_distance(&d[0], &d_prime).unwrap());
        // With two rows the only negative partner is the other row.
        assert_eq!(negative_index(5, 0, 2), 1);
        assert_eq!(negative_index(5, 1, 2), 0);
    }

    #[test]
    fn training_data_needs_two_records() {
        let recs = RecordSet::new(
            Party::A,
            vec!["first".into(), "middle".into(), "last".into()],
            vec![example_record()],
        )
        .unwrap();
        let rs = example_rs();
        let mapping = AttributeMapping::default_for(recs.schema(), rs.schema());
        let d = map_recordset_to_refset(&recs, &rs, &mapping).unwrap();
        assert!(build_training_data(&d, &recs, &rs, &mapping, &CorruptionSpec::default()).is_err());
    }

    proptest! {
        #[test]
        fn each_edit_moves_at_most_two(word in "[A-Z]{0,12}", s in any::<u64>(), errors in 1u32..4) {
            let rec = Record::new("x", [("v", word.as_str())]);
            let spec = CorruptionSpec { errors_per_row: errors, ..CorruptionSpec::with_seed(s) };
            if let Ok(c) = corrupt_record(&rec, &spec, &mut seed::rng(s, "p", 0)) {
                prop_assert!(edit_distance(&word, c.value("v").unwrap()) <= 2 * errors as usize);
            }
        }

        #[test]
        fn negative_index_never_self(s in any::<u64>(), n in 2usize..50, i in 0usize..50) {
            let i = i % n;
            let k = negative_index(s, i, n);
            prop_assert!(k != i && k < n);
        }
    }
}
