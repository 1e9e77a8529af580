use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prediction {
    NonMatch,
    Match,
}

impl Prediction {
    /// Decision values at or above zero are matches.
    pub fn from_decision(value: f64) -> Self {
        if value >= 0.0 {
            Prediction::Match
        } else {
            Prediction::NonMatch
        }
    }

    pub fn is_match(self) -> bool {
        self == Prediction::Match
    }
}

/// One classified pair, indexing into the id tables of its [`MatchArray`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchEntry {
    pub a: u32,
    pub b: u32,
    pub decision: f64,
}

/// Classified cross-party pairs in canonical order: lexicographic by
/// `(record_id_A, record_id_B)`, no duplicates. The prediction of an entry is
/// always the sign of its decision value.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchArray {
    ids_a: Vec<String>,
    ids_b: Vec<String>,
    entries: Vec<MatchEntry>,
}

fn sorted_ids(ids: Vec<String>, side: &str) -> Result<(Vec<String>, Vec<u32>)> {
    let mut order: Vec<u32> = (0..ids.len() as u32).collect();
    order.sort_by(|&x, &y| ids[x as usize].cmp(&ids[y as usize]));
    let mut rank = vec![0u32; ids.len()];
    for (pos, &orig) in order.iter().enumerate() {
        rank[orig as usize] = pos as u32;
    }
    let sorted: Vec<String> = order.iter().map(|&i| ids[i as usize].clone()).collect();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::data(format!("duplicate record id '{}' on side {side}", w[0])));
    }
    Ok((sorted, rank))
}

impl MatchArray {
    /// Entries index into `ids_a` / `ids_b` as given; they are re-indexed and
    /// sorted into canonical order.
    pub fn new(ids_a: Vec<String>, ids_b: Vec<String>, mut entries: Vec<MatchEntry>) -> Result<Self> {
        let (ids_a, rank_a) = sorted_ids(ids_a, "A")?;
        let (ids_b, rank_b) = sorted_ids(ids_b, "B")?;
        for e in &mut entries {
            let (a, b) = (e.a as usize, e.b as usize);
            if a >= rank_a.len() || b >= rank_b.len() {
                return Err(Error::data(format!("entry ({a}, {b}) outside the id tables")));
            }
            e.a = rank_a[a];
            e.b = rank_b[b];
        }
        let key = |e: &MatchEntry| (u64::from(e.a) << 32) | u64::from(e.b);
        if !entries.windows(2).all(|w| key(&w[0]) <= key(&w[1])) {
            entries.sort_unstable_by_key(key);
        }
        if let Some(w) = entries.windows(2).find(|w| key(&w[0]) == key(&w[1])) {
            return Err(Error::data(format!(
                "duplicate pair ({}, {})",
                ids_a[w[0].a as usize], ids_b[w[0].b as usize]
            )));
        }
        Ok(MatchArray { ids_a, ids_b, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[MatchEntry] {
        &self.entries
    }

    pub fn id_a(&self, entry: &MatchEntry) -> &str {
        &self.ids_a[entry.a as usize]
    }

    pub fn id_b(&self, entry: &MatchEntry) -> &str {
        &self.ids_b[entry.b as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, f64, Prediction)> + '_ {
        self.entries.iter().map(move |e| {
            (
                self.id_a(e),
                self.id_b(e),
                e.decision,
                Prediction::from_decision(e.decision),
            )
        })
    }

    /// Pairs predicted as matches, in canonical order.
    pub fn matched_pairs(&self) -> Vec<(String, String)> {
        self.iter()
            .filter(|(_, _, _, p)| p.is_match())
            .map(|(a, b, _, _)| (a.to_string(), b.to_string()))
            .collect()
    }

    pub fn decision(&self, id_a: &str, id_b: &str) -> Option<f64> {
        let a = self.ids_a.binary_search_by(|x| x.as_str().cmp(id_a)).ok()? as u32;
        let b = self.ids_b.binary_search_by(|x| x.as_str().cmp(id_b)).ok()? as u32;
        self.entries
            .binary_search_by(|e| match e.a.cmp(&a) {
                Ordering::Equal => e.b.cmp(&b),
                o => o,
            })
            .ok()
            .map(|i| self.entries[i].decision)
    }

    /// `record_id_A,record_id_B,decision_value,predicted` with the decision in
    /// 17 significant digits and predicted as 1/0.
    pub fn to_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["record_id_A", "record_id_B", "decision_value", "predicted"])?;
        for (a, b, d, p) in self.iter() {
            w.write_record([a, b, &format!("{d:.16e}"), if p.is_match() { "1" } else { "0" }])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_csv<R: Read>(input: R) -> Result<MatchArray> {
        let mut r = csv::Reader::from_reader(input);
        let mut ids_a: Vec<String> = Vec::new();
        let mut ids_b: Vec<String> = Vec::new();
        let mut index_a = std::collections::HashMap::new();
        let mut index_b = std::collections::HashMap::new();
        let mut entries = Vec::new();
        for row in r.records() {
            let row = row?;
            if row.len() != 4 {
                return Err(Error::data("match rows need 4 columns"));
            }
            let intern = |ids: &mut Vec<String>, index: &mut std::collections::HashMap<String, u32>, id: &str| {
                *index.entry(id.to_string()).or_insert_with(|| {
                    ids.push(id.to_string());
                    (ids.len() - 1) as u32
                })
            };
            let a = intern(&mut ids_a, &mut index_a, &row[0]);
            let b = intern(&mut ids_b, &mut index_b, &row[1]);
            let decision: f64 = row[2]
                .parse()
                .map_err(|e| Error::data(format!("bad decision value '{}': {e}", &row[2])))?;
            let predicted = &row[3] == "1";
            if predicted != Prediction::from_decision(decision).is_match() {
                return Err(Error::data(format!(
                    "pair ({}, {}) prediction disagrees with its decision value",
                    &row[0], &row[1]
                )));
            }
            entries.push(MatchEntry { a, b, decision });
        }
        MatchArray::new(ids_a, ids_b, entries)
    }
}

/// Matched-id list carried in the final protocol exchange.
pub(crate) fn pairs_to_csv(pairs: &[(String, String)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["record_id_A", "record_id_B"])?;
    for (a, b) in pairs {
        w.write_record([a, b])?;
    }
    w.into_inner().map_err(|e| Error::data(e.to_string()))
}

pub(crate) fn pairs_from_csv(bytes: &[u8]) -> Result<Vec<(String, String)>> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in r.records() {
        let row = row?;
        if row.len() != 2 {
            return Err(Error::data("pair rows need 2 columns"));
        }
        let pair = (row[0].to_string(), row[1].to_string());
        if seen.insert(pair.clone()) {
            out.push(pair);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn sample() -> MatchArray {
        let entries = vec![
            MatchEntry {
                a: 1,
                b: 0,
                decision: -0.5,
            },
            MatchEntry {
                a: 0,
                b: 1,
                decision: 0.0,
            },
            MatchEntry {
                a: 0,
                b: 0,
                decision: 2.0,
            },
            MatchEntry {
                a: 1,
                b: 1,
                decision: -1e-300,
            },
        ];
        MatchArray::new(ids(&["A-2", "A-1"]), ids(&["B-9", "B-3"]), entries).unwrap()
    }

    #[test]
    fn canonical_order_and_sign_convention() {
        let ma = sample();
        let rows: Vec<_> = ma.iter().collect();
        assert_eq!(rows[0].0, "A-1");
        assert_eq!(rows[0].1, "B-3");
        assert_eq!(rows[0].2, -1e-300);
        assert_eq!(rows[0].3, Prediction::NonMatch);
        assert_eq!(rows[1], ("A-1", "B-9", -0.5, Prediction::NonMatch));
        assert_eq!(rows[2], ("A-2", "B-3", 0.0, Prediction::Match));
        assert_eq!(rows[3], ("A-2", "B-9", 2.0, Prediction::Match));
        assert_eq!(ma.decision("A-1", "B-9"), Some(-0.5));
        assert_eq!(ma.decision("A-3", "B-9"), None);
    }

    #[test]
    fn prediction_boundaries() {
        assert_eq!(Prediction::from_decision(0.0), Prediction::Match);
        assert_eq!(Prediction::from_decision(-0.5), Prediction::NonMatch);
        assert_eq!(Prediction::from_decision(2.0), Prediction::Match);
        assert_eq!(Prediction::from_decision(f64::NAN), Prediction::NonMatch);
    }

    #[test]
    fn duplicates_rejected() {
        let dup = vec![
            MatchEntry {
                a: 0,
                b: 0,
                decision: 1.0,
            },
            MatchEntry {
                a: 0,
                b: 0,
                decision: 2.0,
            },
        ];
        assert!(MatchArray::new(ids(&["a"]), ids(&["b"]), dup).is_err());
        assert!(MatchArray::new(ids(&["a", "a"]), ids(&["b"]), vec![]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ma = sample();
        let mut buf = Vec::new();
        ma.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("record_id_A,record_id_B,decision_value,predicted\n"));
        let back = MatchArray::from_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ma);
        let mut again = Vec::new();
        back.to_csv(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn pair_list_round_trip() {
        let pairs = vec![("A-1".to_string(), "B-2".to_string())];
        assert_eq!(pairs_from_csv(&pairs_to_csv(&pairs).unwrap()).unwrap(), pairs);
    }
}
