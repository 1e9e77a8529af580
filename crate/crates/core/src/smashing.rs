//! Mapping of records onto the shared reference set.
//!
//! Each mapping pair `(attr, ref_attr)` contributes one group holding the edit
//! distance from the record's `attr` value to `ref_attr` of every reference
//! row, in reference-row order.

use rayon::prelude::*;

use crate::distance::EditPattern;
use crate::error::{Error, Result};
use crate::model::{AttributeMapping, Record, RecordSet, ReferenceSet, SmashedVector};

/// Reference columns resolved against a mapping, ready for repeated use.
pub struct Smasher<'a> {
    mapping: &'a AttributeMapping,
    /// Reference column (as chars) for each mapping pair.
    columns: Vec<Vec<Vec<char>>>,
    group_len: usize,
}

impl<'a> Smasher<'a> {
    pub fn new(rs: &ReferenceSet, mapping: &'a AttributeMapping) -> Result<Self> {
        if rs.is_empty() {
            return Err(Error::config("reference set is empty"));
        }
        if mapping.is_empty() {
            return Err(Error::config("attribute mapping is empty"));
        }
        let mut columns = Vec::with_capacity(mapping.len());
        let mut cache: Vec<(usize, Vec<Vec<char>>)> = Vec::new();
        for (_, ref_attr) in &mapping.pairs {
            let col = rs
                .column_index(ref_attr)
                .ok_or_else(|| Error::config(format!("unknown reference attribute '{ref_attr}' in mapping")))?;
            let chars = match cache.iter().find(|(c, _)| *c == col) {
                Some((_, v)) => v.clone(),
                None => {
                    let v: Vec<Vec<char>> = rs.column(col).map(|s| s.chars().collect()).collect();
                    cache.push((col, v.clone()));
                    v
                }
            };
            columns.push(chars);
        }
        Ok(Smasher {
            mapping,
            columns,
            group_len: rs.len(),
        })
    }

    pub fn group_len(&self) -> usize {
        self.group_len
    }

    pub fn smash(&self, record: &Record) -> Result<SmashedVector> {
        let mut distances = Vec::with_capacity(self.columns.len() * self.group_len);
        for ((attr, _), column) in self.mapping.pairs.iter().zip(&self.columns) {
            let value = record.value(attr).ok_or_else(|| {
                Error::config(format!(
                    "record '{}' has no attribute '{attr}' named in the mapping",
                    record.record_id
                ))
            })?;
            let pattern = EditPattern::new(value);
            distances.extend(column.iter().map(|text| pattern.distance(text) as u32));
        }
        SmashedVector::new(record.record_id.clone(), self.group_len, distances)
    }
}

pub fn map_record_to_refset(record: &Record, rs: &ReferenceSet, mapping: &AttributeMapping) -> Result<SmashedVector> {
    Smasher::new(rs, mapping)?.smash(record)
}

/// One smashed vector per record, in record order.
pub fn map_recordset_to_refset(
    recs: &RecordSet,
    rs: &ReferenceSet,
    mapping: &AttributeMapping,
) -> Result<Vec<SmashedVector>> {
    mapping.validate(recs.schema(), rs.schema())?;
    let smasher = Smasher::new(rs, mapping)?;
    recs.records().par_iter().map(|r| smasher.smash(r)).collect()
}
