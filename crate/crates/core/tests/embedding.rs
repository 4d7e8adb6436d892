use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tplscan_core::embedding::{
    contrastive_loss, loss_gradient, pair_loss, train, EmbeddingConfig, EmbeddingModel, PairLabel, TrainConfig,
    TrainingPair,
};
use tplscan_core::evaluation::{perturbation_pairs, random_acfg, roc_auc};
use tplscan_core::{Acfg, BasicBlockAttrs};

/// Plain-loop forward pass, written without ndarray.
#[allow(clippy::needless_range_loop)]
fn reference_embed(model: &EmbeddingModel, acfg: &Acfg) -> Vec<f64> {
    let p = model.embed_dim();
    let pr = &model.params;
    let n = acfg.block_count();
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in &acfg.edges {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    let x: Vec<[f64; 7]> = acfg.blocks.iter().map(|b| b.to_array()).collect();
    let mut mu = vec![vec![0.0; p]; n];
    for _ in 0..model.iterations {
        let mut next = vec![vec![0.0; p]; n];
        for v in 0..n {
            let mut sum = vec![0.0; p];
            for u in 0..n {
                if adj[v][u] {
                    for k in 0..p {
                        sum[k] += mu[u][k];
                    }
                }
            }
            let mut hidden = vec![0.0; p];
            for i in 0..p {
                let mut acc = 0.0;
                for k in 0..p {
                    acc += pr.p2[[i, k]] * sum[k];
                }
                hidden[i] = acc.max(0.0);
            }
            for i in 0..p {
                let mut acc = 0.0;
                for j in 0..7 {
                    acc += pr.w1[[i, j]] * x[v][j];
                }
                for k in 0..p {
                    acc += pr.p1[[i, k]] * hidden[k];
                }
                next[v][i] = acc.tanh();
            }
        }
        mu = next;
    }
    let mut out = vec![0.0; p];
    for i in 0..p {
        for v in 0..n {
            for k in 0..p {
                out[i] += pr.w2[[i, k]] * mu[v][k];
            }
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    out.iter().map(|v| v / norm).collect()
}

fn five_block_graph() -> Acfg {
    let rows = [
        [1.0, 2.0, 1.0, 0.0, 9.0, 3.0, 0.0],
        [0.0, 0.0, 1.0, 1.0, 4.0, 1.0, 0.0],
        [2.0, 5.0, 0.0, 0.0, 12.0, 7.0, 0.0],
        [0.0, 1.0, 1.0, 2.0, 6.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0],
    ];
    let blocks = rows.iter().map(|r| BasicBlockAttrs::from_array(*r)).collect();
    let mut a = Acfg::new("f", blocks, vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 1), (3, 4)]).unwrap();
    a.refresh_offspring();
    a
}

#[test]
fn forward_pass_matches_reference() {
    let model = EmbeddingModel::new(
        EmbeddingConfig {
            embed_dim: 16,
            iterations: 5,
        },
        11,
    );
    let g = five_block_graph();
    let got = model.embed(&g).unwrap();
    let want = reference_embed(&model, &g);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

fn toy_pairs(seed: u64, count: usize) -> Vec<TrainingPair> {
    perturbation_pairs(seed, 0, count, 0.2)
}

/// Every coordinate of a p=4, T=2 model (76 parameters). The seed gives a
/// point with no rectifier kink within `h`.
#[test]
fn gradient_matches_central_differences() {
    let model = EmbeddingModel::new(
        EmbeddingConfig {
            embed_dim: 4,
            iterations: 2,
        },
        5,
    );
    let pairs = toy_pairs(5, 2);
    let grad = loss_gradient(&pairs, &model).unwrap();
    let h = 1e-5;
    for i in 0..model.params.len() {
        let mut plus = model.clone();
        plus.params.set(i, model.params.get(i) + h);
        let mut minus = model.clone();
        minus.params.set(i, model.params.get(i) - h);
        let numeric =
            (contrastive_loss(&pairs, &plus).unwrap() - contrastive_loss(&pairs, &minus).unwrap()) / (2.0 * h);
        let analytic = grad.get(i);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        assert!(err < 1e-4, "coordinate {i}: analytic {analytic}, numeric {numeric}");
    }
}

#[test]
fn pair_loss_is_bounded() {
    for i in 0..=200 {
        let s = -1.0 + i as f64 / 100.0;
        for label in [PairLabel::Similar, PairLabel::Dissimilar] {
            let l = pair_loss(s, label);
            assert!((0.0..=4.0).contains(&l), "{s} {label:?} -> {l}");
        }
    }
}

#[test]
fn training_separates_a_toy_dataset() {
    let pairs = toy_pairs(21, 400);
    let cfg = TrainConfig {
        embedding: EmbeddingConfig {
            embed_dim: 16,
            iterations: 3,
        },
        epochs: 6,
        learning_rate: 2e-3,
        seed: 21,
        ..TrainConfig::default()
    };
    let before = contrastive_loss(&pairs, &EmbeddingModel::new(cfg.embedding, cfg.seed)).unwrap();
    let outcome = train(&pairs, &cfg).unwrap();
    let after = contrastive_loss(&pairs, &outcome.model).unwrap();
    assert!(after < before, "{after} !< {before}");
    let first = outcome.history[0].train_loss;
    let last = outcome.history.last().unwrap().train_loss;
    assert!(last < first);

    let held_out = perturbation_pairs(99, 1, 200, 0.2);
    let (mut pos, mut neg) = (vec![], vec![]);
    for p in &held_out {
        let s =
            tplscan_core::embedding::cosine(&outcome.model.embed(&p.a).unwrap(), &outcome.model.embed(&p.b).unwrap())
                .unwrap();
        match p.label {
            PairLabel::Similar => pos.push(s),
            PairLabel::Dissimilar => neg.push(s),
        }
    }
    assert!(roc_auc(&pos, &neg) > 0.8);
}

#[test]
fn training_is_reproducible() {
    let pairs = toy_pairs(3, 80);
    let cfg = TrainConfig {
        embedding: EmbeddingConfig {
            embed_dim: 8,
            iterations: 2,
        },
        epochs: 2,
        seed: 3,
        ..TrainConfig::default()
    };
    let a = train(&pairs, &cfg).unwrap();
    let b = train(&pairs, &cfg).unwrap();
    assert_eq!(a.model.to_json(), b.model.to_json());
    assert_eq!(a.best_epoch, b.best_epoch);
}

fn graph() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 1usize..=20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn embedding_is_unit_norm((seed, n) in graph()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_acfg(&mut rng, "g", n);
        let model = EmbeddingModel::new(EmbeddingConfig { embed_dim: 8, iterations: 3 }, seed);
        if let Ok(v) = model.embed(&g) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_ignores_block_order((seed, n) in graph(), shuffle in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_acfg(&mut rng, "g", n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let mut blocks = g.blocks.clone();
        for (old, &new) in perm.iter().enumerate() {
            blocks[new] = g.blocks[old];
        }
        let edges = g.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let h = Acfg::new("g", blocks, edges).unwrap();
        let model = EmbeddingModel::new(EmbeddingConfig { embed_dim: 8, iterations: 3 }, seed);
        if let (Ok(a), Ok(b)) = (model.embed(&g), model.embed(&h)) {
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
