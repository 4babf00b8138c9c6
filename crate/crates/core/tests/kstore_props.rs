use proptest::prelude::*;
use revqa_core::kstore::{contradicts, minimal_conflict_set, Assertion, Polarity, PredicateRegistry};

const SUBJECTS: [&str; 3] = ["sacramento", "los angeles", "california"];
const PREDICATES: [&str; 3] = ["population", "capital", "near"];
const OBJECTS: [&str; 4] = ["508000", "1500000", "sacramento", "fresno"];

fn reg() -> PredicateRegistry {
    PredicateRegistry::new()
        .with_functional("population")
        .with_functional("capital")
}

fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Pairwise clash written out from the definition.
fn clash(a: &Assertion, b: &Assertion, reg: &PredicateRegistry) -> bool {
    if norm(&a.subject) != norm(&b.subject) || norm(&a.predicate) != norm(&b.predicate) {
        return false;
    }
    let same_obj = norm(&a.object) == norm(&b.object);
    if same_obj {
        return a.polarity != b.polarity;
    }
    reg.is_functional(&a.predicate)
        && a.polarity == Polarity::Positive
        && b.polarity == Polarity::Positive
}

fn oracle_consistent(set: &[&Assertion], reg: &PredicateRegistry) -> bool {
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            if clash(set[i], set[j], reg) {
                return false;
            }
        }
    }
    true
}

fn assertion() -> impl Strategy<Value = (usize, usize, usize, bool, String)> {
    (0..3usize, 0..3usize, 0..4usize, any::<bool>(), prop::sample::select(vec!["", " ", "  "]).prop_map(String::from))
}

fn build(raw: Vec<(usize, usize, usize, bool, String)>) -> Vec<Assertion> {
    raw.into_iter()
        .enumerate()
        .map(|(i, (s, p, o, neg, pad))| {
            let a = Assertion::new(
                format!("a{i:02}"),
                format!("{pad}{}", SUBJECTS[s]),
                PREDICATES[p],
                OBJECTS[o].to_uppercase(),
            );
            if neg {
                a.negated()
            } else {
                a
            }
        })
        .collect()
}

/// Sets of up to 12 assertions with at least one clash injected.
fn clashing_set() -> impl Strategy<Value = Vec<Assertion>> {
    (prop::collection::vec(assertion(), 1..=10), 0..3usize, any::<bool>()).prop_map(|(raw, s, functional)| {
        let mut v = build(raw);
        let n = v.len();
        if functional {
            v.push(Assertion::new(format!("a{n:02}"), SUBJECTS[s], "population", "1"));
            v.push(Assertion::new(format!("a{:02}", n + 1), SUBJECTS[s], "population", "2"));
        } else {
            v.push(Assertion::new(format!("a{n:02}"), SUBJECTS[s], "near", "x"));
            v.push(Assertion::new(format!("a{:02}", n + 1), SUBJECTS[s], "near", "x").negated());
        }
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mcs_is_inconsistent_and_minimal(set in clashing_set()) {
        let reg = reg();
        let report = minimal_conflict_set(&set, &reg, 0).unwrap();
        let members: Vec<&Assertion> = set.iter().filter(|a| report.members.contains(&a.id)).collect();
        prop_assert_eq!(members.len(), report.members.len());
        prop_assert!(!oracle_consistent(&members, &reg));
        let n = members.len();
        for mask in 0..(1u32 << n) - 1 {
            let sub: Vec<&Assertion> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| members[i]).collect();
            prop_assert!(oracle_consistent(&sub, &reg), "proper subset {:?} inconsistent", mask);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn consistency_matches_the_pairwise_oracle(raw in prop::collection::vec(assertion(), 0..12)) {
        let set = build(raw);
        let reg = reg();
        let refs: Vec<&Assertion> = set.iter().collect();
        let expected = oracle_consistent(&refs, &reg);
        prop_assert_eq!(revqa_core::kstore::consistent(set.iter(), &reg), expected);
        prop_assert_eq!(minimal_conflict_set(&set, &reg, 0).is_err(), expected);
    }

    #[test]
    fn contradicts_is_symmetric_and_irreflexive(a in assertion(), b in assertion()) {
        let v = build(vec![a, b]);
        let reg = reg();
        prop_assert_eq!(contradicts(&v[0], &v[1], &reg), contradicts(&v[1], &v[0], &reg));
        prop_assert!(!contradicts(&v[0], &v[0], &reg));
        prop_assert_eq!(contradicts(&v[0], &v[1], &reg), clash(&v[0], &v[1], &reg));
    }
}
