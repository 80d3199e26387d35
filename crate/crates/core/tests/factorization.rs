//! PCA initialization against an independent SVD, plus the optimization
//! properties of the decomposition objectives.

use lowrank_adapt::decomp::{
    energy_spectrum, orthogonality_loss, pca_factorize, rank_for_energy, recon_loss, OrthoForm,
};
use lowrank_adapt::harness::{
    generate_synthetic, train, Model, ModelConfig, SyntheticConfig, TrainConfig,
};
use lowrank_adapt::numkit::{AdamW, AdamWConfig, Mat};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn low_rank(rng: &mut ChaCha8Rng, n: usize, d: usize, r: usize) -> Mat<f64> {
    uniform(rng, n, r).matmul(&uniform(rng, r, d)).unwrap()
}

/// Squared singular values from nalgebra's SVD, descending.
fn oracle_spectrum(f: &Mat<f64>) -> Vec<f64> {
    let m = DMatrix::from_row_slice(f.rows(), f.cols(), f.as_slice());
    let mut s: Vec<f64> = m.singular_values().iter().map(|v| v * v).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Smallest rank whose prefix energy reaches `target`, recomputed from scratch per rank.
fn oracle_rank(spectrum: &[f64], target: f64) -> usize {
    let total: f64 = spectrum.iter().sum();
    (1..=spectrum.len())
        .find(|&r| spectrum[..r].iter().sum::<f64>() >= target * total)
        .unwrap_or(spectrum.len())
}

#[test]
fn full_energy_recovers_low_rank_matrices_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for r in 1..=8 {
        for (n, d) in [(20, 12), (12, 20), (30, 8)] {
            if r > n.min(d) {
                continue;
            }
            let f = low_rank(&mut rng, n, d, r);
            let (fac, achieved) = pca_factorize(&f, 1.0).unwrap();
            assert_eq!(fac.rank(), r, "{n}×{d} rank {r}");
            assert_eq!(achieved, 1.0);
            let err = recon_loss(&f, &fac.weights, &fac.basis, true)
                .unwrap()
                .value;
            assert!(err < 1e-9, "{n}×{d} rank {r}: residual {err:e}");
            let oracle = oracle_spectrum(&f);
            let tail: f64 = oracle[r..].iter().sum();
            assert!(tail < 1e-20 * oracle[0], "oracle sees rank {r}");
        }
    }
}

#[test]
fn selected_rank_matches_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let targets: Vec<f64> = (1..100)
        .map(|i| i as f64 / 100.0)
        .chain([0.995, 0.999])
        .collect();
    let mut compared = 0;
    for trial in 0..30 {
        let (n, d) = (rng.gen_range(4..20), rng.gen_range(4..20));
        let f = if trial % 2 == 0 {
            uniform(&mut rng, n, d)
        } else {
            let r = rng.gen_range(1..=n.min(d).min(8));
            low_rank(&mut rng, n, d, r)
        };
        let ours = energy_spectrum(&f).unwrap();
        let oracle = oracle_spectrum(&f);
        let total: f64 = oracle.iter().sum();
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * total, "spectrum {a} vs {b}");
        }
        let prefix: Vec<f64> = (1..=oracle.len())
            .map(|r| oracle[..r].iter().sum::<f64>() / total)
            .collect();
        for &t in &targets {
            // Targets this close to a prefix fraction are decided by rounding, not by rank.
            if prefix.iter().any(|p| (p - t).abs() < 1e-9) {
                continue;
            }
            let want = oracle_rank(&oracle, t);
            assert_eq!(
                rank_for_energy(&ours, t).unwrap(),
                want,
                "trial {trial} target {t}"
            );
            assert_eq!(pca_factorize(&f, t).unwrap().0.rank(), want);
            compared += 1;
        }
    }
    assert!(compared > 2500, "only {compared} comparisons");
}

/// Gradient descent with Armijo backtracking on `‖F − W Bᵀ‖_F` over both factors.
fn descend(
    f: &Mat<f64>,
    mut w: Mat<f64>,
    mut b: Mat<f64>,
    max_steps: usize,
    goal: f64,
) -> (f64, usize) {
    let mut step = 1.0;
    let mut loss = recon_loss(f, &w, &b, false).unwrap();
    for it in 0..max_steps {
        if loss.value < goal {
            return (loss.value, it);
        }
        let gw = loss.grad_weights.clone();
        let gb = loss.grad_basis.clone().unwrap();
        let slope = gw.frobenius_norm_sq() + gb.frobenius_norm_sq();
        step *= 2.0;
        loop {
            let w2 = w.sub(&gw.scale(step)).unwrap();
            let b2 = b.sub(&gb.scale(step)).unwrap();
            let next = recon_loss(f, &w2, &b2, false).unwrap();
            if next.value <= loss.value - 1e-4 * step * slope {
                (w, b, loss) = (w2, b2, next);
                break;
            }
            step *= 0.5;
            assert!(step > 1e-20, "line search stalled at {}", loss.value);
        }
    }
    (loss.value, max_steps)
}

#[test]
fn reconstruction_descent_reaches_exact_fit() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let f = low_rank(&mut rng, 20, 8, 4);
        for m in [4, 5] {
            let w = uniform(&mut rng, 20, m).scale(0.5);
            let b = uniform(&mut rng, 8, m).scale(0.5);
            let (value, steps) = descend(&f, w, b, 5000, 1e-6);
            assert!(
                value < 1e-6,
                "seed {seed} m {m}: {value:e} after {steps} steps"
            );
        }
    }
}

#[test]
fn orthogonality_alone_orthogonalizes_a_basis() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut b = uniform(&mut rng, 16, 6);
    let mut opt = AdamW::new(AdamWConfig::default().weight_decay(0.0), &[&b]);
    for _ in 0..2000 {
        let g = orthogonality_loss(&b, OrthoForm::Squared).unwrap().grad;
        opt.step(&mut [&mut b], &[g]).unwrap();
    }
    let gram = b.transpose().matmul(&b).unwrap();
    for i in 0..6 {
        assert!(gram.get(i, i) > 0.1, "column {i} collapsed");
        for j in 0..6 {
            if i != j {
                assert!(
                    gram.get(i, j).abs() < 1e-3,
                    "gram({i},{j}) = {}",
                    gram.get(i, j)
                );
            }
        }
    }
}

fn small_setup() -> (lowrank_adapt::harness::SyntheticData, Model) {
    let data = generate_synthetic(&SyntheticConfig {
        n_actions: 5,
        n_objects: 3,
        n_hoi: 10,
        feature_dim: 16,
        pairs_per_scene: 2,
        scenes: 24,
        grid: 4,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let model = Model::init(
        &data.hoi_features,
        &data.action_features,
        &data.object_features,
        &data.vocab,
        ModelConfig {
            encoder_layers: 1,
            ..ModelConfig::default()
        },
    )
    .unwrap();
    (data, model)
}

fn digest(m: &Mat<f64>) -> Vec<u8> {
    let mut h = Sha256::new();
    for v in m.as_slice() {
        h.update(v.to_le_bytes());
    }
    h.finalize().to_vec()
}

#[test]
fn frozen_basis_survives_training_bit_for_bit() {
    let (data, mut model) = small_setup();
    assert!(model.factorization.frozen_basis);
    let before = digest(&model.factorization.basis);
    let weights_before = model.factorization.weights.clone();
    let cfg = TrainConfig {
        steps: 1000,
        batches_per_epoch: 6,
        ..TrainConfig::default()
    };
    train(&mut model, &data.train_scenes, &cfg).unwrap();
    assert_eq!(digest(&model.factorization.basis), before);
    assert_ne!(model.factorization.weights, weights_before);
}

#[test]
fn zero_steps_leave_the_initialization() {
    let (data, mut model) = small_setup();
    let init = model.clone();
    let trace = train(
        &mut model,
        &data.train_scenes,
        &TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    assert!(trace.is_empty());
    assert_eq!(model, init);
}
