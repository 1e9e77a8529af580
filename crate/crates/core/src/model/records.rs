use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Canonical form used for every comparison: surrounding whitespace trimmed,
/// upper-cased.
pub fn normalize(value: &str) -> String {
    value.trim().to_uppercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    A,
    B,
}

impl Party {
    pub fn prefix(self) -> &'static str {
        match self {
            Party::A => "A",
            Party::B => "B",
        }
    }

    pub fn peer(self) -> Party {
        match self {
            Party::A => Party::B,
            Party::B => Party::A,
        }
    }

    /// Opaque id minted from a one-based source row number.
    pub fn mint_id(self, row: usize) -> String {
        format!("{}-{row:06}", self.prefix())
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

impl FromStr for Party {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" | "ALICE" => Ok(Party::A),
            "B" | "BOB" => Ok(Party::B),
            other => Err(Error::config(format!("unknown party '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub record_id: String,
    pub attributes: Vec<(String, String)>,
}

impl Record {
    /// Values are normalized on construction.
    pub fn new<I, N, V>(record_id: impl Into<String>, attributes: I) -> Self
    where
        I: IntoIterator<Item = (N, V)>,
        N: Into<String>,
        V: AsRef<str>,
    {
        Record {
            record_id: record_id.into(),
            attributes: attributes
                .into_iter()
                .map(|(n, v)| (n.into(), normalize(v.as_ref())))
                .collect(),
        }
    }

    pub fn value(&self, attribute: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(n, _)| n == attribute)
            .map(|(_, v)| v.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = &str> + '_ {
        self.attributes.iter().map(|(_, v)| v.as_str())
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut String> + '_ {
        self.attributes.iter_mut().map(|(_, v)| v)
    }

    /// The matching-attribute tuple.
    pub fn key(&self) -> Vec<&str> {
        self.values().collect()
    }
}

/// Maps each minted record id to the source identifier found in the input.
/// Held by the evaluation harness only; it never enters smashed data.
pub type Provenance = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordSet {
    pub party: Party,
    schema: Vec<String>,
    records: Vec<Record>,
}

impl RecordSet {
    pub fn new(party: Party, schema: Vec<String>, records: Vec<Record>) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::config("record schema needs at least one attribute"));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.record_id.as_str()) {
                return Err(Error::data(format!("duplicate record id '{}'", r.record_id)));
            }
            let names_match =
                r.attributes.len() == schema.len() && r.attributes.iter().zip(&schema).all(|((n, _), s)| n == s);
            if !names_match {
                return Err(Error::data(format!(
                    "record '{}' does not follow schema {schema:?}",
                    r.record_id
                )));
            }
        }
        Ok(RecordSet { party, schema, records })
    }

    /// Build from bare value rows, minting ids from the row position.
    pub fn from_rows<S: AsRef<str>>(party: Party, schema: &[&str], rows: &[Vec<S>]) -> Result<Self> {
        let schema: Vec<String> = schema.iter().map(|s| s.to_string()).collect();
        let mut records = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::data(format!("row {} has {} values", i + 1, row.len())));
            }
            records.push(Record::new(
                party.mint_id(i + 1),
                schema.iter().cloned().zip(row.iter()),
            ));
        }
        RecordSet::new(party, schema, records)
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.record_id.clone()).collect()
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    /// A copy keeping the first `n` records.
    pub fn head(&self, n: usize) -> RecordSet {
        RecordSet {
            party: self.party,
            schema: self.schema.clone(),
            records: self.records.iter().take(n).cloned().collect(),
        }
    }

    /// True when the matching-attribute tuple is unique per record.
    pub fn has_candidate_key(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.records.len());
        self.records.iter().all(|r| seen.insert(r.key()))
    }

    pub fn value_set(&self) -> HashSet<&str> {
        self.records.iter().flat_map(Record::values).collect()
    }

    /// Load from CSV with a header row. `columns` selects and orders the
    /// matching attributes (all non-id columns when `None`); `id_column`, when
    /// given, is kept as provenance.
    pub fn from_csv<R: Read>(
        input: R,
        party: Party,
        columns: Option<&[String]>,
        id_column: Option<&str>,
    ) -> Result<(RecordSet, Provenance)> {
        let mut reader = csv::Reader::from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::config(format!("column '{name}' not found in {header:?}")))
        };
        let id_idx = id_column.map(find).transpose()?;
        let schema: Vec<String> = match columns {
            Some(cols) => cols.to_vec(),
            None => header
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != id_idx)
                .map(|(_, h)| h.clone())
                .collect(),
        };
        let idx = schema.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

        let mut records = Vec::new();
        let mut provenance = Provenance::new();
        for (row_no, row) in reader.records().enumerate() {
            let row = row?;
            let id = party.mint_id(row_no + 1);
            let attrs = schema
                .iter()
                .zip(&idx)
                .map(|(name, &i)| (name.clone(), row.get(i).unwrap_or_default()));
            let record = Record::new(id.clone(), attrs);
            if let Some(i) = id_idx {
                provenance.insert(id, row.get(i).unwrap_or_default().trim().to_string());
            }
            records.push(record);
        }
        Ok((RecordSet::new(party, schema, records)?, provenance))
    }

    /// Write as CSV; when `provenance` is given its values are emitted in a
    /// leading `id_column`.
    pub fn to_csv<W: Write>(&self, out: W, provenance: Option<(&str, &Provenance)>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = Vec::new();
        if let Some((col, _)) = provenance {
            header.push(col);
        }
        header.extend(self.schema.iter().map(String::as_str));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<&str> = Vec::with_capacity(header.len());
            if let Some((_, prov)) = provenance {
                row.push(prov.get(&r.record_id).map_or("", String::as_str));
            }
            row.extend(r.values());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Public corpus of `k` string attributes per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceSet {
    schema: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl ReferenceSet {
    pub fn new(schema: Vec<String>, rows: Vec<Vec<String>>) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::config("reference schema needs at least one attribute"));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != schema.len()) {
            return Err(Error::data(format!(
                "reference row {} has {} values, schema has {}",
                i + 1,
                rows[i].len(),
                schema.len()
            )));
        }
        let rows = rows
            .into_iter()
            .map(|r| r.iter().map(|v| normalize(v)).collect())
            .collect();
        Ok(ReferenceSet { schema, rows })
    }

    pub fn from_rows<S: AsRef<str>>(schema: &[&str], rows: &[Vec<S>]) -> Result<Self> {
        ReferenceSet::new(
            schema.iter().map(|s| s.to_string()).collect(),
            rows.iter()
                .map(|r| r.iter().map(|v| v.as_ref().to_string()).collect())
                .collect(),
        )
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|s| s == name)
    }

    pub fn column(&self, index: usize) -> impl Iterator<Item = &str> + '_ {
        self.rows.iter().map(move |r| r[index].as_str())
    }

    pub fn head(&self, n: usize) -> ReferenceSet {
        ReferenceSet {
            schema: self.schema.clone(),
            rows: self.rows.iter().take(n).cloned().collect(),
        }
    }

    pub fn from_csv<R: Read>(input: R, columns: Option<&[String]>) -> Result<ReferenceSet> {
        let mut reader = csv::Reader::from_reader(input);
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let schema = columns.map_or_else(|| header.clone(), <[String]>::to_vec);
        let idx = schema
            .iter()
            .map(|c| {
                header
                    .iter()
                    .position(|h| h == c)
                    .ok_or_else(|| Error::config(format!("column '{c}' not found in {header:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::new();
        for row in reader.records() {
            let row = row?;
            rows.push(
                idx.iter()
                    .map(|&i| row.get(i).unwrap_or_default().to_string())
                    .collect(),
            );
        }
        ReferenceSet::new(schema, rows)
    }

    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.schema)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Length-prefixed canonical serialization: magic `SLRS`, k, names,
    /// row count, values. Integers big-endian.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SLRS");
        out.extend_from_slice(&(self.schema.len() as u32).to_be_bytes());
        for s in &self.schema {
            put_str(&mut out, s);
        }
        out.extend_from_slice(&(self.rows.len() as u32).to_be_bytes());
        for row in &self.rows {
            for v in row {
                put_str(&mut out, v);
            }
        }
        out
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }

    pub fn value_set(&self) -> HashSet<&str> {
        self.rows.iter().flatten().map(String::as_str).collect()
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// True iff no (normalized) attribute value of `recs` occurs anywhere in `rs`.
pub fn validate_disjointness(rs: &ReferenceSet, recs: &RecordSet) -> bool {
    let reference = rs.value_set();
    recs.records()
        .iter()
        .flat_map(Record::values)
        .all(|v| !reference.contains(v))
}

/// Ordered (record attribute, reference attribute) pairs. Pair order fixes the
/// group order of every smashed vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttributeMapping {
    pub pairs: Vec<(String, String)>,
}

impl AttributeMapping {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        AttributeMapping { pairs }
    }

    /// Record attributes present in the reference schema map 1:1 (in record
    /// order); every other record attribute maps to all reference attributes.
    pub fn default_for(record_schema: &[String], reference_schema: &[String]) -> Self {
        let mut pairs = Vec::new();
        for attr in record_schema {
            if reference_schema.contains(attr) {
                pairs.push((attr.clone(), attr.clone()));
            }
        }
        for attr in record_schema {
            if !reference_schema.contains(attr) {
                for r in reference_schema {
                    pairs.push((attr.clone(), r.clone()));
                }
            }
        }
        AttributeMapping { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self, record_schema: &[String], reference_schema: &[String]) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::config("attribute mapping is empty"));
        }
        let mut seen = HashSet::new();
        for (a, r) in &self.pairs {
            if !record_schema.contains(a) {
                return Err(Error::config(format!("unknown record attribute '{a}' in mapping")));
            }
            if !reference_schema.contains(r) {
                return Err(Error::config(format!("unknown reference attribute '{r}' in mapping")));
            }
            if !seen.insert((a, r)) {
                return Err(Error::config(format!("mapping pair {a}:{r} repeated")));
            }
        }
        if let Some(missing) = record_schema
            .iter()
            .find(|attr| !self.pairs.iter().any(|(a, _)| a == *attr))
        {
            return Err(Error::config(format!("record attribute '{missing}' is not mapped")));
        }
        Ok(())
    }
}

impl fmt::Display for AttributeMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (a, r)) in self.pairs.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}:{r}")?;
        }
        Ok(())
    }
}

/// Parses `attr:ref,attr:ref,...`.
impl FromStr for AttributeMapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let pairs = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let (a, r) = p
                    .split_once(':')
                    .ok_or_else(|| Error::config(format!("mapping pair '{p}' is not attr:ref")))?;
                Ok((a.trim().to_string(), r.trim().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        if pairs.is_empty() {
            return Err(Error::config("attribute mapping is empty"));
        }
        Ok(AttributeMapping { pairs })
    }
}
