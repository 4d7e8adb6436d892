use proptest::prelude::*;
use tplscan_core::detection::{Candidate, Channel, FunctionPair};
use tplscan_core::featuredb::UnitRef;
use tplscan_core::reporting::{
    identify_version, render_text, report_libraries, version_distance, DetectionReport, Version, VersionDistanceWeights,
};

fn v(s: &str) -> Version {
    Version::parse(s).unwrap()
}

fn cand(library: &str, version: &str, unit: &str, score: usize) -> Candidate {
    Candidate {
        unit: UnitRef {
            library: library.into(),
            version: version.into(),
            unit: unit.into(),
        },
        channel: Channel::B,
        matched_basic: vec![],
        matched_pairs: vec![FunctionPair {
            target: "t".into(),
            unit: "u".into(),
            cosine: 0.9,
        }],
        score,
    }
}

#[test]
fn distance_fixtures() {
    let w = VersionDistanceWeights::default();
    let cases = [
        ("1.6.37", "1.6.35", 0.2),
        ("1.6.35", "1.6.37", 0.2),
        ("1.6.37", "1.6.37", 0.0),
        ("1.5.0", "1.6.0", 1.0),
        ("2.0.0", "1.0.0", 10.0),
        ("2.1.3", "1.0.0", 11.3),
        ("1.2", "1.2.0", 0.0),
    ];
    for (a, b, want) in cases {
        let d = version_distance(&v(a), &v(b), &w);
        assert!((d - want).abs() < 1e-12, "{a} {b}: {d}");
    }
}

#[test]
fn summed_scores_pick_the_version() {
    // Version A collects 4 + 3, version B a single 5.
    let cands = [
        cand("l", "1.0.0", "a1", 4),
        cand("l", "1.0.0", "a2", 3),
        cand("l", "2.0.0", "b1", 5),
    ];
    let (best, scores) = identify_version(&cands).unwrap();
    assert_eq!(best.raw, "1.0.0");
    assert_eq!(scores[&v("1.0.0")], 7);
    assert_eq!(scores[&v("2.0.0")], 5);
}

#[test]
fn ties_go_to_the_latest_version() {
    let cands = [
        cand("l", "1.9.0", "a", 5),
        cand("l", "1.10.0", "b", 5),
        cand("l", "1.2.0", "c", 5),
    ];
    assert_eq!(identify_version(&cands).unwrap().0.raw, "1.10.0");
}

#[test]
fn no_candidates_is_an_error() {
    assert!(identify_version(std::iter::empty()).is_err());
}

#[test]
fn report_groups_by_library() {
    let cands = [
        cand("zlib", "1.2.11", "z1", 3),
        cand("png", "1.6.37", "p1", 2),
        cand("zlib", "1.2.13", "z2", 3),
    ];
    let r = report_libraries("bin", &cands).unwrap();
    let libs: Vec<(&str, &str)> = r
        .libraries
        .iter()
        .map(|l| (l.library.as_str(), l.version.as_str()))
        .collect();
    assert_eq!(libs, [("png", "1.6.37"), ("zlib", "1.2.13")]);
    assert_eq!(r.libraries[1].evidence.len(), 2);
    let text = render_text(&r);
    assert!(text.contains("zlib") && text.contains("1.2.13"));
}

fn candidates() -> impl Strategy<Value = Vec<Candidate>> {
    prop::collection::vec((0u64..3, 0u64..4, 0u64..5, 0usize..8), 1..12).prop_map(|cs| {
        cs.into_iter()
            .enumerate()
            .map(|(i, (a, b, c, s))| cand("l", &format!("{a}.{b}.{c}"), &format!("u{i:02}"), s))
            .collect()
    })
}

fn version() -> impl Strategy<Value = Version> {
    (0u64..20, 0u64..20, 0u64..50).prop_map(|(a, b, c)| v(&format!("{a}.{b}.{c}")))
}

proptest! {
    #[test]
    fn identification_ignores_order(mut cs in candidates(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (a, sa) = identify_version(&cs).unwrap();
        cs.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let (b, sb) = identify_version(&cs).unwrap();
        prop_assert_eq!(a.triple(), b.triple());
        prop_assert_eq!(sa, sb);
    }

    #[test]
    fn identified_version_has_the_top_score(cs in candidates()) {
        let (best, scores) = identify_version(&cs).unwrap();
        let top = *scores.values().max().unwrap();
        prop_assert_eq!(scores[&best], top);
        prop_assert!(scores.iter().all(|(v, &s)| s < top || v <= &best));
    }

    #[test]
    fn distance_is_a_metric(a in version(), b in version(), c in version()) {
        let w = VersionDistanceWeights::default();
        let d = |x: &Version, y: &Version| version_distance(x, y, &w);
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
        prop_assert_eq!(d(&a, &b) == 0.0, a.triple() == b.triple());
    }

    #[test]
    fn report_survives_json(cs in candidates()) {
        let r = report_libraries("bin", &cs).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: DetectionReport = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, r);
    }
}
