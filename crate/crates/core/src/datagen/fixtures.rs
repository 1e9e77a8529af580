//! Seeded voter-style fixtures: first/middle/last name records drawn from
//! bundled public name lists, their corrupted counterparts, and reference sets
//! drawn from a disjoint part of the same lists.
//!
//! Every name is assigned once, by a hash of its spelling, either to the
//! record side or to the reference side, so generated reference sets never
//! share a value with generated records.

use std::collections::{BTreeSet, HashSet};
use std::sync::OnceLock;

use rand::seq::SliceRandom;

use super::{corrupt_record, CorruptionSpec};
use crate::error::Result;
use crate::model::{Party, Provenance, Record, RecordSet, ReferenceSet};
use crate::seed;

static FIRST_NAMES: &str = include_str!("../../data/first_names.txt");
static LAST_NAMES: &str = include_str!("../../data/last_names.txt");

pub const RECORD_SCHEMA: [&str; 3] = ["first", "middle", "last"];
pub const REFERENCE_SCHEMA: [&str; 2] = ["first", "last"];

/// Bounded so a pathological exclusion set cannot loop forever.
const MAX_DRAW_FACTOR: usize = 1000;

struct Pools {
    record_first: Vec<&'static str>,
    record_last: Vec<&'static str>,
    reference_first: Vec<&'static str>,
    reference_last: Vec<&'static str>,
}

fn reference_side(name: &str) -> bool {
    seed::derive(0x5EED, name, 0) & 1 == 1
}

fn pools() -> &'static Pools {
    static POOLS: OnceLock<Pools> = OnceLock::new();
    POOLS.get_or_init(|| {
        let split = |text: &'static str| -> (Vec<&'static str>, Vec<&'static str>) {
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .partition(|n| !reference_side(n))
        };
        let (record_first, reference_first) = split(FIRST_NAMES);
        let (record_last, reference_last) = split(LAST_NAMES);
        Pools {
            record_first,
            record_last,
            reference_first,
            reference_last,
        }
    })
}

/// `n` records with unique (first, middle, last) tuples.
pub fn generate_records(n: usize, party: Party, seed: u64) -> RecordSet {
    let p = pools();
    let mut rng = seed::rng(seed, "records", 0);
    let mut seen = HashSet::with_capacity(n);
    let mut rows: Vec<[&str; 3]> = Vec::with_capacity(n);
    while rows.len() < n {
        let row = [
            *p.record_first.choose(&mut rng).expect("pool"),
            *p.record_first.choose(&mut rng).expect("pool"),
            *p.record_last.choose(&mut rng).expect("pool"),
        ];
        if seen.insert(row) {
            rows.push(row);
        }
    }
    let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
    RecordSet::from_rows(party, &RECORD_SCHEMA, &rows).expect("generated rows follow the schema")
}

/// `n` distinct (first, last) rows avoiding every value in `exclude`.
pub fn generate_reference_set(n: usize, seed: u64, exclude: &HashSet<&str>) -> ReferenceSet {
    let p = pools();
    let first: Vec<&str> = p
        .reference_first
        .iter()
        .copied()
        .filter(|v| !exclude.contains(v))
        .collect();
    let last: Vec<&str> = p
        .reference_last
        .iter()
        .copied()
        .filter(|v| !exclude.contains(v))
        .collect();
    let mut rng = seed::rng(seed, "reference", 0);
    let mut seen = HashSet::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut draws = 0;
    while rows.len() < n && draws < n.saturating_mul(MAX_DRAW_FACTOR) {
        draws += 1;
        let row = [
            *first.choose(&mut rng).expect("pool"),
            *last.choose(&mut rng).expect("pool"),
        ];
        if seen.insert(row) {
            rows.push(row.to_vec());
        }
    }
    ReferenceSet::from_rows(&REFERENCE_SCHEMA, &rows).expect("generated rows follow the schema")
}

/// Two parties' record sets plus the evaluation-only linkage truth.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub alice: RecordSet,
    pub bob: RecordSet,
    pub alice_sources: Provenance,
    pub bob_sources: Provenance,
    pub truth: BTreeSet<(String, String)>,
}

impl Fixture {
    /// Values of both parties, for reference-set exclusion.
    pub fn all_values(&self) -> HashSet<&str> {
        let mut v = self.alice.value_set();
        v.extend(self.bob.value_set());
        v
    }
}

/// Alice holds `n` clean records; Bob holds a shuffled copy with
/// `errors_per_row` edits per record. No corrupted tuple equals any clean
/// tuple, so an exact join of the two sets is empty.
pub fn build_fixture(n: usize, errors_per_row: u32, seed: u64) -> Result<Fixture> {
    let alice = generate_records(n, Party::A, seed);
    let clean: HashSet<Vec<&str>> = alice.records().iter().map(Record::key).collect();
    let spec = CorruptionSpec {
        errors_per_row,
        ..CorruptionSpec::with_seed(seed::derive(seed, "bob-corruption", 0))
    };

    let mut corrupted: Vec<Vec<String>> = Vec::with_capacity(n);
    let mut taken: HashSet<Vec<String>> = HashSet::with_capacity(n);
    for (i, r) in alice.records().iter().enumerate() {
        let mut attempt = 0u64;
        loop {
            let mut rng = seed::rng(spec.rng_seed, "corrupt", (attempt << 32) | i as u64);
            let c = corrupt_record(r, &spec, &mut rng)?;
            let key: Vec<String> = c.values().map(str::to_string).collect();
            let key_ref: Vec<&str> = key.iter().map(String::as_str).collect();
            if !clean.contains(&key_ref) && !taken.contains(&key) {
                taken.insert(key.clone());
                corrupted.push(key);
                break;
            }
            attempt += 1;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, "bob-order", 0));
    let bob_rows: Vec<Vec<String>> = order.iter().map(|&i| corrupted[i].clone()).collect();
    let bob = RecordSet::from_rows(Party::B, &RECORD_SCHEMA, &bob_rows)?;

    let source = |i: usize| format!("S-{:06}", i + 1);
    let alice_sources: Provenance = alice
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.record_id.clone(), source(i)))
        .collect();
    let bob_sources: Provenance = bob
        .records()
        .iter()
        .zip(&order)
        .map(|(r, &i)| (r.record_id.clone(), source(i)))
        .collect();
    let truth = truth_from_sources(&alice_sources, &bob_sources);
    Ok(Fixture {
        alice,
        bob,
        alice_sources,
        bob_sources,
        truth,
    })
}

/// Pairs of record ids that share a source identifier.
pub fn truth_from_sources(a: &Provenance, b: &Provenance) -> BTreeSet<(String, String)> {
    let mut by_source: std::collections::HashMap<&str, Vec<&str>> = std::collections::HashMap::new();
    for (id, src) in b {
        by_source.entry(src.as_str()).or_default().push(id.as_str());
    }
    let mut truth = BTreeSet::new();
    for (id_a, src) in a {
        if let Some(ids_b) = by_source.get(src.as_str()) {
            for id_b in ids_b {
                truth.insert((id_a.clone(), id_b.to_string()));
            }
        }
    }
    truth
}
