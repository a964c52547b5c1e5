//! Seeded sampling of sample paths and the explicit-equivalence check.
//!
//! Path `i` of a batch with seed `s` draws its noise from a ChaCha20
//! generator seeded with `seed_from_u64(s)` and switched to stream `i`, so
//! every path is a deterministic function of `(s, i)` regardless of how the
//! work is split across threads. Within a path, standard normals are drawn
//! in stacked order (block 0 first) and shaped by the lower Cholesky factor
//! of each noise covariance, or of the full `R` for the reciprocal model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::equivalence::EquivalencePair;
use crate::error::{ModelError, Result};
use crate::linalg::{self, Mat, Solver, Vector};
use crate::model::{BlockMatrix, ModelSpec, NoiseRealization, SequenceShape};

const CHUNK: usize = 2048;

/// Generator for path `index` of a batch seeded with `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug)]
enum Factor {
    Blocks(Vec<Mat>),
    Full(Mat),
}

/// Draws `ξ ~ N(0, P)` for a model.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    shape: SequenceShape,
    factor: Factor,
}

impl NoiseSampler {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        let factor = match model.noise_covs() {
            Some(covs) => Factor::Blocks(
                covs.iter()
                    .enumerate()
                    .map(|(k, m)| {
                        linalg::cholesky(m).ok_or(ModelError::NotPositiveDefinite {
                            param: "noise_covs",
                            index: Some(k),
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            None => Factor::Full(
                linalg::cholesky(model.noise_covariance().entries()).ok_or(
                    ModelError::NotPositiveDefinite {
                        param: "reciprocal matrix",
                        index: None,
                    },
                )?,
            ),
        };
        Ok(Self {
            shape: model.shape(),
            factor,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseRealization {
        let z = Vector::from_fn(self.shape.len(), |_, _| rng.sample(StandardNormal));
        let values = match &self.factor {
            Factor::Full(l) => l * z,
            Factor::Blocks(ls) => {
                let d = self.shape.dim();
                let mut v = Vector::zeros(self.shape.len());
                for (k, l) in ls.iter().enumerate() {
                    let block = l * z.rows(k * d, d);
                    v.rows_mut(k * d, d).copy_from(&block);
                }
                v
            }
        };
        NoiseRealization::new(self.shape, values).expect("sampler shape")
    }
}

/// Stacked sample paths `x` drawn from one model.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub shape: SequenceShape,
    pub paths: Vec<Vector>,
    pub seed: u64,
    pub count: usize,
}

/// Draws `count` paths: `ξ ~ N(0, P)`, then `x = T⁻¹ ξ`.
pub fn sample(model: &ModelSpec, seed: u64, count: usize) -> Result<SampleBatch> {
    if count < 1 {
        return Err(ModelError::InvalidCount { count, min: 1 });
    }
    let sampler = NoiseSampler::new(model)?;
    let solver = Solver::new(model.system_matrix().entries(), "system matrix")?;
    let paths = (0..count)
        .into_par_iter()
        .map(|i| {
            let xi = sampler.draw(&mut path_rng(seed, i as u64));
            solver.solve(xi.values())
        })
        .collect();
    Ok(SampleBatch {
        shape: model.shape(),
        paths,
        seed,
        count,
    })
}

/// `Σ v v' / count` over `count` vectors produced by `make(i)`, summed in
/// fixed-size chunks so the result does not depend on the thread count.
fn outer_mean<F>(len: usize, count: usize, make: F) -> Mat
where
    F: Fn(usize) -> Vector + Sync,
{
    let chunks: Vec<Mat> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = Mat::zeros(len, len);
            for i in (c * CHUNK)..((c + 1) * CHUNK).min(count) {
                let v = make(i);
                acc.ger(1.0, &v, &v, 1.0);
            }
            acc
        })
        .collect();
    let mut total = Mat::zeros(len, len);
    for c in chunks {
        total += c;
    }
    total / count as f64
}

/// Zero-mean sample covariance `Σ x x' / count`.
pub fn empirical_covariance(batch: &SampleBatch) -> Result<BlockMatrix> {
    if batch.paths.len() < 2 {
        return Err(ModelError::InvalidCount {
            count: batch.paths.len(),
            min: 2,
        });
    }
    let len = batch.shape.len();
    let c = outer_mean(len, batch.paths.len(), |i| batch.paths[i].clone());
    BlockMatrix::new(batch.shape, c)
}

/// Monte Carlo estimate of `Cov(ζ)` for `ζ` mapped from source draws.
pub fn mapped_noise_covariance(pair: &EquivalencePair, seed: u64, count: usize) -> Result<BlockMatrix> {
    if count < 2 {
        return Err(ModelError::InvalidCount { count, min: 2 });
    }
    let sampler = NoiseSampler::new(pair.source())?;
    let shape = pair.shape();
    let c = outer_mean(shape.len(), count, |i| {
        let xi = sampler.draw(&mut path_rng(seed, i as u64));
        pair.map_noise(&xi).expect("matching shape").into_values()
    });
    BlockMatrix::new(shape, c)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerificationTolerances {
    pub path: f64,
    pub precision: f64,
    pub noise_cov: f64,
}

impl Default for VerificationTolerances {
    fn default() -> Self {
        Self {
            path: 1e-8,
            precision: 1e-8,
            noise_cov: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    /// Largest `‖x1 − x2‖ / (1 + ‖x1‖)` over all draws.
    pub max_path_error: f64,
    /// `‖J1 − J2‖_F / ‖J1‖_F`.
    pub precision_error: f64,
    /// `‖T2 C T2' − P2‖_F / ‖P2‖_F` with `C` the source covariance.
    pub noise_cov_error: f64,
    pub passed: bool,
    pub tolerances: VerificationTolerances,
    pub seed: u64,
    pub count: usize,
}

pub fn verify_equivalence(pair: &EquivalencePair, seed: u64, count: usize) -> Result<VerificationReport> {
    verify_equivalence_with(pair, seed, count, VerificationTolerances::default())
}

/// Draws `count` source realizations and checks that the mapped target
/// realizations reproduce the same path. Each draw is mapped both through
/// the common path and through the normal-equation form; the larger
/// discrepancy is recorded.
pub fn verify_equivalence_with(
    pair: &EquivalencePair,
    seed: u64,
    count: usize,
    tolerances: VerificationTolerances,
) -> Result<VerificationReport> {
    if count < 1 {
        return Err(ModelError::InvalidCount { count, min: 1 });
    }
    let sampler = NoiseSampler::new(pair.source())?;
    let max_path_error = (0..count)
        .into_par_iter()
        .map(|i| {
            let xi = sampler.draw(&mut path_rng(seed, i as u64));
            let x1 = pair.source_path(&xi).expect("matching shape");
            let denom = 1.0 + x1.norm();
            [pair.map_noise(&xi), pair.map_noise_normal_equations(&xi)]
                .into_iter()
                .map(|zeta| {
                    let x2 = pair.target_path(&zeta.expect("matching shape")).expect("matching shape");
                    (&x1 - x2).norm() / denom
                })
                .fold(0.0_f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);

    let precision_error = pair.step1_error();
    let noise_cov_error = match crate::model::covariance_from_information(pair.source_information()) {
        Ok(c) => {
            let t2 = pair.target_system().entries();
            let exact = t2 * c.entries() * t2.transpose();
            linalg::rel_frobenius(pair.target_noise().entries(), &exact)
        }
        Err(_) => f64::INFINITY,
    };
    let passed = max_path_error <= tolerances.path
        && precision_error <= tolerances.precision
        && noise_cov_error <= tolerances.noise_cov;
    Ok(VerificationReport {
        max_path_error,
        precision_error,
        noise_cov_error,
        passed,
        tolerances,
        seed,
        count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ForwardMarkovModel;

    fn unit_markov() -> ModelSpec {
        let shape = SequenceShape::new(1, 1).unwrap();
        let one = || Mat::from_element(1, 1, 1.0);
        ForwardMarkovModel::new(shape, vec![one()], vec![one(), one()])
            .unwrap()
            .into()
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = unit_markov();
        assert!(matches!(sample(&m, 7, 0), Err(ModelError::InvalidCount { .. })));
        let a = sample(&m, 7, 1).unwrap();
        let b = sample(&m, 7, 1).unwrap();
        assert_eq!(a, b);
        let c = sample(&m, 8, 1).unwrap();
        assert_ne!(a.paths, c.paths);
    }

    #[test]
    fn paths_do_not_depend_on_batch_size() {
        let m = unit_markov();
        let small = sample(&m, 3, 5).unwrap();
        let large = sample(&m, 3, 50).unwrap();
        assert_eq!(&small.paths[..], &large.paths[..5]);
    }

    #[test]
    fn empirical_covariance_fixtures() {
        let shape = SequenceShape::new(2, 1).unwrap();
        let zeros = SampleBatch {
            shape,
            paths: vec![Vector::zeros(3); 4],
            seed: 0,
            count: 4,
        };
        assert_eq!(empirical_covariance(&zeros).unwrap().entries(), &Mat::zeros(3, 3));

        let count = 3;
        let scaled = SampleBatch {
            shape,
            paths: (0..3)
                .map(|i| {
                    let mut v = Vector::zeros(3);
                    v[i] = (count as f64).sqrt();
                    v
                })
                .collect(),
            seed: 0,
            count,
        };
        let c = empirical_covariance(&scaled).unwrap();
        assert!((c.entries() - Mat::identity(3, 3)).norm() < 1e-14);

        let one = SampleBatch {
            shape,
            paths: vec![Vector::zeros(3)],
            seed: 0,
            count: 1,
        };
        assert!(empirical_covariance(&one).is_err());
    }
}
