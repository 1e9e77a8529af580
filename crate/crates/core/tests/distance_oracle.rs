mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{naive, random_string};

use splitlink::distance::{edit_distance, EditPattern};
use splitlink::model::{AttributeMapping, Party, RecordSet, ReferenceSet};
use splitlink::smashing::map_record_to_refset;

#[test]
fn matches_recursive_definition_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10_000 {
        let a = random_string(&mut rng);
        let b = random_string(&mut rng);
        let ac: Vec<char> = a.chars().collect();
        let bc: Vec<char> = b.chars().collect();
        let want = naive(&ac, &bc);
        assert_eq!(edit_distance(&a, &b), want, "{a} / {b}");
        assert_eq!(EditPattern::new(&a).distance(&bc), want, "{a} / {b}");
    }
}

#[test]
fn worked_example_distances() {
    for (a, b, d) in [
        ("ADA", "CHARLIE", 6),
        ("ADA", "JAY", 3),
        ("KING", "ADLER", 5),
        ("IVY", "CHARLIE", 7),
        ("IVY", "JAY", 2),
        ("IVY", "ADLER", 5),
    ] {
        let ac: Vec<char> = a.chars().collect();
        let bc: Vec<char> = b.chars().collect();
        assert_eq!(naive(&ac, &bc), d);
        assert_eq!(edit_distance(a, b), d);
    }
}

#[test]
fn worked_example_smashed_vector() {
    let recs = RecordSet::from_rows(Party::A, &["first", "middle", "last"], &[vec!["ADA", "IVY", "KING"]]).unwrap();
    let rs = ReferenceSet::from_rows(&["first", "last"], &[vec!["CHARLIE", "ADLER"], vec!["JAY", "ADLER"]]).unwrap();
    let mapping = AttributeMapping::default_for(recs.schema(), rs.schema());
    assert_eq!(mapping.to_string(), "first:first,last:last,middle:first,middle:last");
    let v = map_record_to_refset(&recs.records()[0], &rs, &mapping).unwrap();
    assert_eq!(v.to_groups(), vec![vec![6, 3], vec![5, 5], vec![7, 2], vec![5, 5]]);
}
