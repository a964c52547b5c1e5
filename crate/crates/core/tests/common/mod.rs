//! Shared fixtures and the brute-force conditioning oracle.
//!
//! The oracle conditions each `x_k` on the *full* set of states its model
//! noise is independent of, using `try_inverse` on the covariance
//! sub-matrix (Schur complement). It shares no code with the library's
//! regression routine, which only regresses on the minimal regressor set.

#![allow(dead_code)]

use cmseq_core::generate::{self, SequenceClass};
use cmseq_core::{BlockMatrix, ModelKind, ModelSpec, SequenceShape};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Mat = DMatrix<f64>;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

pub fn scalars(vs: &[f64]) -> Vec<Mat> {
    vs.iter().map(|&v| scalar(v)).collect()
}

/// `(E[x_k | x_S] coefficient blocks keyed by index, Cov(x_k | x_S))`.
pub fn condition(c: &BlockMatrix, k: usize, given: &[usize]) -> (Vec<(usize, Mat)>, Mat) {
    let d = c.shape().dim();
    let ckk = c.block(k, k);
    if given.is_empty() {
        return (Vec::new(), ckk);
    }
    let m = given.len();
    let mut sgg = Mat::zeros(m * d, m * d);
    let mut skg = Mat::zeros(d, m * d);
    for (a, &ga) in given.iter().enumerate() {
        for (b, &gb) in given.iter().enumerate() {
            sgg.view_mut((a * d, b * d), (d, d)).copy_from(&c.block(ga, gb));
        }
        skg.view_mut((0, a * d), (d, d)).copy_from(&c.block(k, ga));
    }
    let inv = sgg.try_inverse().expect("nonsingular sub-covariance");
    let gain = &skg * inv;
    let cov = ckk - &gain * skg.transpose();
    let blocks = given
        .iter()
        .enumerate()
        .map(|(a, &g)| (g, gain.view((0, a * d), (d, d)).into_owned()))
        .collect();
    (blocks, cov)
}

/// Full conditioning set for row `k` of a white-noise model kind: every
/// state that is a function of the other noise terms only.
pub fn full_conditioning_set(kind: ModelKind, n: usize, k: usize) -> Vec<usize> {
    match kind {
        ModelKind::ForwardMarkov | ModelKind::CmfForward => (0..k).collect(),
        ModelKind::BackwardMarkov | ModelKind::CmlBackward => ((k + 1)..=n).collect(),
        ModelKind::CmlForward => {
            if k == n {
                vec![]
            } else {
                (0..k).chain(std::iter::once(n)).collect()
            }
        }
        ModelKind::CmfBackward => {
            if k == 0 {
                vec![]
            } else {
                std::iter::once(0).chain((k + 1)..=n).collect()
            }
        }
        ModelKind::Reciprocal => unreachable!(),
    }
}

/// Row `k` of a white-noise model as `(index, coefficient)` pairs, read from
/// the stacked system matrix: `T[k, j] = −coefficient`.
pub fn row_coefficients(model: &ModelSpec, k: usize) -> Vec<(usize, Mat)> {
    let t = model.system_matrix();
    let n = model.shape().horizon();
    (0..=n)
        .filter(|&j| j != k)
        .map(|j| (j, -t.block(k, j)))
        .collect()
}

pub fn rel_close(a: &Mat, b: &Mat, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1.0)
}

/// Sources covering every kind and every sequence class it can govern.
pub fn source_mix(count: usize, seed: u64, max_horizon: usize, max_dim: usize) -> Vec<(ModelSpec, SequenceClass)> {
    let mut rng = rng(seed);
    let classes = [SequenceClass::Markov, SequenceClass::Reciprocal, SequenceClass::General];
    (0..count)
        .map(|i| {
            let kind = ModelKind::ALL[i % 7];
            let class = match kind {
                ModelKind::ForwardMarkov | ModelKind::BackwardMarkov => SequenceClass::Markov,
                ModelKind::Reciprocal => classes[(i / 7) % 2],
                _ => classes[(i / 7) % 3],
            };
            let shape: SequenceShape = generate::random_shape(max_horizon, max_dim, &mut rng);
            (generate::random_model(kind, class, shape, &mut rng), class)
        })
        .collect()
}
