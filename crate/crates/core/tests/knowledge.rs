mod common;

use std::collections::BTreeSet;

use callsim::corpus::{parse_corpus, parse_corpus_str, Label, LabelSet, TagTaxonomy};
use callsim::knowledge::{
    build_knowledge, lookup_address, next_questions, normalize_address, AddressGazetteer, AddressRecord,
    ConnectivityMap, KnowledgeError, ProtocolSet, RetrievableBase,
};
use proptest::prelude::*;
use serde_json::json;

use common::{fixture, oracle};

fn labels(xs: &[&str]) -> LabelSet {
    xs.iter().map(|x| Label::new(x)).collect()
}

fn fixture_knowledge() -> callsim::knowledge::KnowledgeSet {
    let taxonomy = TagTaxonomy::bundled();
    let corpus = parse_corpus(&fixture("corpus.jsonl"), &taxonomy).unwrap();
    build_knowledge(&corpus, taxonomy, &fixture("gazetteer.txt"), &fixture("map.toml"), &fixture("protocols.toml"))
        .unwrap()
}

#[test]
fn gazetteer_variants_resolve() {
    let g = AddressGazetteer::load(&fixture("gazetteer.txt")).unwrap();
    assert!(g.len() >= 70);
    for raw in ["322 Broadway", "322 BROADWAY", " 322  broadway. ", "20 Culver St", "411 Murfreesboro Pike, Apt 302"] {
        assert!(lookup_address(&g, raw).matched, "{raw}");
    }
    for raw in ["742 Evergreen Terrace", "323 Broadway", "Broadway", ""] {
        assert!(!lookup_address(&g, raw).matched, "{raw}");
    }
    let m = lookup_address(&g, "20 culver st.");
    assert_eq!(m.canonical.as_deref(), Some("20 culver street"));
}

#[test]
fn gazetteer_ignores_comments_and_duplicates() {
    let g = AddressGazetteer::from_lines("# header\n\n12 Main St\n12 main street\n  \n9 Oak Ave\n");
    assert_eq!(g.len(), 2);
    assert_eq!(g.entries()[0].raw, "12 Main St");
}

#[test]
fn address_record_parts() {
    let r = AddressRecord::parse("1200 Dickerson Pike, Apartment 4B, Nashville").unwrap();
    assert_eq!(r.street_number.as_deref(), Some("1200"));
    assert_eq!(r.street_name, "dickerson pike");
    assert_eq!(r.unit.as_deref(), Some("apartment 4b"));
    assert_eq!(r.locality.as_deref(), Some("nashville"));
    assert!(AddressRecord::parse(" ,, ").is_none());
}

#[test]
fn normalization_is_idempotent_on_fixture() {
    let text = std::fs::read_to_string(fixture("gazetteer.txt")).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let once = normalize_address(line);
        assert_eq!(normalize_address(&once), once);
    }
}

#[test]
fn connectivity_is_symmetric() {
    let k = fixture_knowledge();
    assert!(k.connectivity.is_symmetric());
    assert_eq!(k.connectivity.edge_count(), 6);
    assert!(k.connectivity.has_edge("Bridgestone Arena", "322 broadway"));
    let d = k.connectivity.describe("322 Broadway").unwrap();
    assert!(d.contains("Bridgestone Arena (across from)"), "{d}");
    assert!(k.connectivity.describe("742 Evergreen Terrace").is_none());
}

#[test]
fn connectivity_rejects_bad_maps() {
    let self_loop = "[[edges]]\na = \"1 A St\"\nb = \"1 a street\"\n";
    assert!(matches!(ConnectivityMap::from_toml(self_loop), Err(KnowledgeError::Map(_))));
    let undeclared = "nodes = [\"1 A St\"]\n[[edges]]\na = \"1 A St\"\nb = \"2 B St\"\n";
    assert!(matches!(ConnectivityMap::from_toml(undeclared), Err(KnowledgeError::Map(_))));
}

#[test]
fn protocol_walk() {
    let p = ProtocolSet::load(&fixture("protocols.toml")).unwrap();
    let crash = Label::new("crash report");
    let ask = |answered: &[&str]| {
        let set: BTreeSet<String> = answered.iter().map(|s| s.to_string()).collect();
        next_questions(&p, &crash, &set).unwrap()
    };
    assert_eq!(ask(&[]), vec!["Is anyone hurt?"]);
    assert_eq!(ask(&["injured"]), vec!["How many people are hurt?", "Is the vehicle blocking the road?"]);
    assert_eq!(
        ask(&["injured", "how-many"]),
        vec!["Is anyone trapped in the vehicle?", "Is the vehicle blocking the road?"]
    );
    assert!(ask(&["injured", "blocking"]).is_empty());
    let order: Vec<&str> = p.get(&crash).unwrap().depth_first().iter().map(|n| n.id.as_str()).collect();
    assert_eq!(order, ["injured", "how-many", "trapped", "blocking"]);
    assert!(matches!(next_questions(&p, &Label::new("fraud"), &BTreeSet::new()), Err(KnowledgeError::NoProtocol(_))));
}

#[test]
fn protocol_cycles_are_rejected() {
    let text = r#"
[[protocol]]
incident_type = "fire"
root = "a"
[[protocol.nodes]]
id = "a"
question = "A?"
children = [{ answer = "x", node = "b" }]
[[protocol.nodes]]
id = "b"
question = "B?"
children = [{ answer = "y", node = "a" }]
"#;
    assert!(ProtocolSet::from_toml(text).is_err());
}

#[test]
fn retrieval_on_fixture() {
    let k = fixture_knowledge();
    let tags = labels(&["crash report", "unhoused", "non-native speaker"]);
    let hits = k.retrieve(&tags, "car crash in the rain", 5).unwrap();
    let ids: Vec<&str> = hits.iter().map(|h| h.entry.call_id.as_str()).collect();
    assert_eq!(ids.len(), 2);
    assert!(ids.contains(&"call-001") && ids.contains(&"call-002"));
    assert!(hits.iter().all(|h| tags.is_subset(&h.entry.labels)));
    assert!(matches!(k.retrieve(&tags, "x", 0), Err(KnowledgeError::InvalidK)));
    assert!(matches!(k.retrieve(&labels(&["martian"]), "x", 1), Err(KnowledgeError::UnknownTag(_))));
    assert!(k.retrieve(&labels(&["crash report", "kid"]), "x", 3).unwrap().is_empty());
}

#[test]
fn degenerate_entries_score_zero() {
    let taxonomy = TagTaxonomy::bundled();
    let line = |id: &str, text: &str| {
        json!({"id": id, "turns": [{"speaker": "caller", "text": text}],
               "is": {"incident_type": "fire"}, "ci": {"age": "adult", "emotion": "calm"}})
        .to_string()
    };
    let corpus =
        parse_corpus_str(&[line("a", "the and of"), line("b", "smoke kitchen")].join("\n"), &taxonomy).unwrap();
    let base = RetrievableBase::build(&corpus, &taxonomy).unwrap();
    assert!(base.entries()[0].degenerate);
    let hits = base.retrieve(&labels(&["fire"]), "smoke", 2).unwrap();
    assert_eq!(hits[0].entry.call_id, "b");
    assert_eq!(hits[1].score, 0.0);
    assert!(matches!(RetrievableBase::build(&[], &taxonomy), Err(KnowledgeError::EmptyCorpus)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn retrieval_matches_brute_force(case in oracle::retrieval_case()) {
        oracle::check_retrieval_case(&case)?;
    }
}
