use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use tplscan_core::embedding::{EmbeddingConfig, EmbeddingModel};
use tplscan_core::evaluation::{build_database, generate_corpus, CorpusSpec};
use tplscan_core::extraction::StringWeighting;
use tplscan_core::featuredb::{BasicFeature, FeatureDb, VectorId, VectorStore};
use tplscan_core::{BinaryFeatureSet, Error, Provenance, StringLiteral};

fn normalize(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-3).then(|| v.iter().map(|x| x / n).collect())
}

fn unit_vectors(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), 1..60)
        .prop_map(|vs| vs.into_iter().filter_map(normalize).collect())
}

/// Full sort of every row under the documented order.
fn brute_force(store: &VectorStore, q: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..store.len())
        .map(|r| (r, store.row(r).iter().zip(q).map(|(a, b)| a * b).sum()))
        .collect();
    all.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| store.id(a.0).function.cmp(&store.id(b.0).function))
            .then_with(|| store.id(a.0).unit.cmp(&store.id(b.0).unit))
    });
    all.truncate(k);
    all
}

proptest! {
    #[test]
    fn topk_equals_exhaustive_scan(
        vs in unit_vectors(6),
        dup in 0usize..5,
        k in 0usize..70,
        qi in any::<prop::sample::Index>(),
    ) {
        prop_assume!(!vs.is_empty());
        let mut store = VectorStore::new(6);
        for (i, v) in vs.iter().enumerate() {
            store.push(VectorId { function: format!("f{:03}", i % 17), unit: format!("u{i:03}") }, v).unwrap();
        }
        // Exact duplicates exercise the tie order.
        for (j, v) in vs.iter().enumerate().take(dup) {
            store.push(VectorId { function: format!("f{:03}", j), unit: format!("d{j:03}") }, v).unwrap();
        }
        let q = &vs[qi.index(vs.len())];
        let hits = store.topk(q, k).unwrap();
        let want = brute_force(&store, q, k);
        prop_assert_eq!(hits.len(), want.len());
        for (h, (row, score)) in hits.iter().zip(&want) {
            prop_assert_eq!(h.row, *row);
            prop_assert_eq!(h.score, *score);
        }
    }

    #[test]
    fn index_is_sound_and_complete(
        units in prop::collection::vec(
            (prop::collection::btree_set("s[a-e]{5}", 0..6), prop::collection::btree_set("e[a-c]{1}", 0..3)),
            1..8,
        )
    ) {
        let w = StringWeighting::default();
        let mut db = FeatureDb::new();
        let mut sets = Vec::new();
        for (i, (strings, exports)) in units.iter().enumerate() {
            let mut fs = BinaryFeatureSet::basic(
                format!("u{i}"),
                strings.iter().map(|s| StringLiteral::new(s.clone(), &w)).collect(),
                exports.clone(),
            );
            fs.provenance = Some(Provenance { library: format!("lib{}", i % 3), version: format!("1.{i}") });
            db.index_unit(&fs, None).unwrap();
            sets.push(fs);
        }
        let mut features = BTreeSet::new();
        for (strings, exports) in &units {
            features.extend(strings.iter().cloned().map(BasicFeature::String));
            features.extend(exports.iter().cloned().map(BasicFeature::Export));
        }
        features.insert(BasicFeature::String("absent".into()));
        for f in &features {
            let got: Vec<String> = db.lookup_basic(f).into_iter().map(|u| u.unit).collect();
            let want: Vec<String> = sets
                .iter()
                .filter(|s| match f {
                    BasicFeature::String(v) => s.strings.iter().any(|l| &l.value == v),
                    BasicFeature::Export(v) => s.exports.contains(v),
                })
                .map(|s| s.binary_id.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            prop_assert_eq!(got, want);
        }
        // A string and an export with the same text are different keys.
        if let Some(e) = units.iter().flat_map(|u| &u.1).next() {
            prop_assert!(db.lookup_basic(&BasicFeature::String(e.clone())).is_empty());
        }
    }
}

fn small_db() -> (FeatureDb, EmbeddingModel) {
    let spec = CorpusSpec {
        libraries: 4,
        versions_per_library: 2,
        functions_per_unit: 10,
        strings_per_unit: 6,
        fan_in: 2,
        targets: 2,
        training_pairs: 0,
        ..CorpusSpec::default()
    };
    let corpus = generate_corpus(&spec).unwrap();
    let model = EmbeddingModel::new(
        EmbeddingConfig {
            embed_dim: 8,
            iterations: 2,
        },
        1,
    );
    (build_database(&corpus.units, Some(&model)).unwrap(), model)
}

#[test]
fn persistence_preserves_queries() {
    let (db, _) = small_db();
    assert!(db.store().len() > 20);
    let dir = tempfile::tempdir().unwrap();
    db.persist(dir.path()).unwrap();
    let back = FeatureDb::load(dir.path()).unwrap();
    assert_eq!(back.units(), db.units());
    assert_eq!(back.index(), db.index());
    assert_eq!(back.store(), db.store());
    assert_eq!(back.model_fingerprint(), db.model_fingerprint());
    for i in 0..db.unit_count() as u32 {
        assert_eq!(back.payload(i), db.payload(i));
    }
    for row in (0..db.store().len()).step_by(7) {
        let q = db.store().row(row).to_vec();
        assert_eq!(back.topk(&q, 10).unwrap(), db.topk(&q, 10).unwrap());
    }

    // Persisting again over the same directory replaces it.
    back.persist(dir.path()).unwrap();
    assert_eq!(FeatureDb::load(dir.path()).unwrap().units(), db.units());
}

#[test]
fn corruption_is_an_integrity_error() {
    let (db, _) = small_db();
    let dir = tempfile::tempdir().unwrap();
    db.persist(dir.path()).unwrap();
    let mut files: Vec<_> = ["meta.json", "index.bin", "vectors.bin", "units/000000.bin"]
        .iter()
        .map(|f| dir.path().join(f))
        .collect();
    files.retain(|p| p.exists());
    assert_eq!(files.len(), 4);

    for path in &files {
        let original = std::fs::read(path).unwrap();
        let mut bytes = original.clone();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x5a;
        std::fs::write(path, &bytes).unwrap();
        match FeatureDb::load(dir.path()) {
            Err(Error::Integrity(msg)) => assert!(msg.contains("checksum"), "{msg}"),
            other => panic!("{}: expected integrity error, got {other:?}", path.display()),
        }
        std::fs::write(path, &original).unwrap();
    }
    FeatureDb::load(dir.path()).unwrap();

    std::fs::remove_file(&files[2]).unwrap();
    assert!(matches!(FeatureDb::load(dir.path()), Err(Error::Integrity(_))));
}

#[test]
fn hierarchy_groups_units() {
    let (db, _) = small_db();
    let h = db.hierarchy();
    assert_eq!(h.len(), 4);
    let mut seen = BTreeMap::new();
    for (lib, versions) in &h {
        assert_eq!(versions.len(), 2);
        for units in versions.values() {
            for u in units {
                seen.insert(u.to_string(), lib.to_string());
            }
        }
    }
    assert_eq!(seen.len(), db.unit_count());
}
