//! Random well-posed models for tests, benchmarks and fixtures.
//!
//! CM models of reciprocal or Markov sequences are built constructively:
//! free parameters are drawn first and the remaining couplings are solved
//! from the reciprocal (and Markov) conditions, so the target class holds
//! up to rounding.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, Mat};
use crate::model::{
    BackwardMarkovModel, CmModel, Conditioning, Direction, ForwardMarkovModel, ModelKind,
    ModelSpec, ReciprocalModel, SequenceShape,
};

/// Sequence class a generated model should govern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SequenceClass {
    Markov,
    Reciprocal,
    /// CM_L or CM_F (matching the model kind) with no further structure.
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransitionRank {
    Full,
    /// Rank one for `dim ≥ 2`, zero for scalars.
    Deficient,
    Zero,
}

fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random matrix with Frobenius norm drawn from `[0.3, 1] · bound`.
pub fn random_matrix<R: Rng + ?Sized>(dim: usize, bound: f64, rng: &mut R) -> Mat {
    let a = gaussian(dim, dim, rng);
    let norm = a.norm();
    if norm == 0.0 {
        return a;
    }
    let target = bound * rng.random_range(0.3..1.0);
    a * (target / norm)
}

/// Well-conditioned symmetric positive definite matrix.
pub fn random_spd<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Mat {
    let b = gaussian(dim, dim, rng) / (dim as f64).sqrt();
    let shift = rng.random_range(0.7..1.0);
    let scale = rng.random_range(0.7..1.4);
    (&b * b.transpose() * 0.3 + Mat::identity(dim, dim) * shift) * scale
}

fn random_transition<R: Rng + ?Sized>(dim: usize, rank: TransitionRank, rng: &mut R) -> Mat {
    match rank {
        TransitionRank::Full => random_matrix(dim, 0.9, rng),
        TransitionRank::Zero => Mat::zeros(dim, dim),
        TransitionRank::Deficient if dim == 1 => Mat::zeros(1, 1),
        TransitionRank::Deficient => {
            let u = gaussian(dim, 1, rng);
            let v = gaussian(dim, 1, rng);
            let a = u * v.transpose();
            let norm = a.norm();
            a * (0.8 / norm)
        }
    }
}

pub fn random_shape<R: Rng + ?Sized>(max_horizon: usize, max_dim: usize, rng: &mut R) -> SequenceShape {
    let n = rng.random_range(2..=max_horizon.max(2));
    let d = rng.random_range(1..=max_dim.max(1));
    SequenceShape::new(n, d).expect("valid ranges")
}

pub fn random_forward_markov<R: Rng + ?Sized>(
    shape: SequenceShape,
    rank: TransitionRank,
    rng: &mut R,
) -> ForwardMarkovModel {
    let d = shape.dim();
    let transitions = (0..shape.horizon())
        .map(|_| random_transition(d, rank, rng))
        .collect();
    let covs = (0..shape.blocks()).map(|_| random_spd(d, rng)).collect();
    ForwardMarkovModel::new(shape, transitions, covs).expect("generated model is valid")
}

pub fn random_backward_markov<R: Rng + ?Sized>(shape: SequenceShape, rng: &mut R) -> BackwardMarkovModel {
    let d = shape.dim();
    let transitions = (0..shape.horizon())
        .map(|_| random_transition(d, TransitionRank::Full, rng))
        .collect();
    let covs = (0..shape.blocks()).map(|_| random_spd(d, rng)).collect();
    BackwardMarkovModel::new(shape, transitions, covs).expect("generated model is valid")
}

/// Random block-diagonally dominant cyclic tri-diagonal `R`; the corner is
/// zero when `markov` is set.
pub fn random_reciprocal<R: Rng + ?Sized>(shape: SequenceShape, markov: bool, rng: &mut R) -> ReciprocalModel {
    let n = shape.horizon();
    let d = shape.dim();
    let sup: Vec<Mat> = (0..n).map(|_| random_matrix(d, 1.0, rng)).collect();
    let corner = if markov {
        Mat::zeros(d, d)
    } else {
        random_matrix(d, 1.0, rng)
    };
    let diag = (0..=n)
        .map(|k| {
            let mut off = 0.0;
            if k < n {
                off += sup[k].norm();
            }
            if k > 0 {
                off += sup[k - 1].norm();
            }
            if k == 0 || k == n {
                off += corner.norm();
            }
            random_spd(d, rng) + Mat::identity(d, d) * (off + 0.2)
        })
        .collect();
    ReciprocalModel::new(shape, diag, sup, corner).expect("diagonally dominant R is positive definite")
}

/// Random CM model governing a sequence of the requested class.
pub fn random_cm<R: Rng + ?Sized>(
    shape: SequenceShape,
    direction: Direction,
    conditioning: Conditioning,
    class: SequenceClass,
    rng: &mut R,
) -> CmModel {
    let n = shape.horizon();
    let d = shape.dim();
    let kind = match (direction, conditioning) {
        (Direction::Forward, Conditioning::Last) => ModelKind::CmlForward,
        (Direction::Forward, Conditioning::First) => ModelKind::CmfForward,
        (Direction::Backward, Conditioning::Last) => ModelKind::CmlBackward,
        (Direction::Backward, Conditioning::First) => ModelKind::CmfBackward,
    };
    let c = match conditioning {
        Conditioning::First => 0,
        Conditioning::Last => n,
    };
    let covs: Vec<Mat> = (0..=n).map(|_| random_spd(d, rng)).collect();
    let mut transition: Vec<Option<Mat>> = vec![None; n + 1];
    let mut coupling: Vec<Option<Mat>> = vec![None; n + 1];
    for k in 0..=n {
        for j in kind.regressors(n, k).expect("white-noise kind") {
            if j == c {
                coupling[k] = Some(random_matrix(d, 0.8, rng));
            } else {
                transition[k] = Some(random_matrix(d, 0.9, rng));
            }
        }
    }
    let prec: Vec<Mat> = covs
        .iter()
        .map(|g| linalg::spd_inverse(g).expect("generated covariance"))
        .collect();
    let t = |v: &Vec<Option<Mat>>, k: usize| v[k].clone().expect("entry present");

    // Solve couplings from the conditions, walking away from the free one.
    let constrain = class != SequenceClass::General;
    let markov = class == SequenceClass::Markov;
    match (direction, conditioning) {
        (Direction::Forward, Conditioning::Last) => {
            let lowest = if markov { 0 } else { 1 };
            if constrain {
                for k in (lowest..=n.saturating_sub(2)).rev() {
                    let rhs = t(&transition, k + 1).transpose() * &prec[k + 1] * t(&coupling, k + 1);
                    coupling[k] = Some(&covs[k] * rhs);
                }
            }
        }
        (Direction::Forward, Conditioning::First) => {
            if markov {
                coupling[n] = Some(Mat::zeros(d, d));
            }
            if constrain {
                for k in (2..n).rev() {
                    let rhs = t(&transition, k + 1).transpose() * &prec[k + 1] * t(&coupling, k + 1);
                    coupling[k] = Some(&covs[k] * rhs);
                }
            }
        }
        (Direction::Backward, Conditioning::First) => {
            let highest = if markov { n - 1 } else { n - 2 };
            if constrain {
                for k in 1..=highest {
                    let rhs = t(&transition, k).transpose() * &prec[k] * t(&coupling, k);
                    coupling[k + 1] = Some(&covs[k + 1] * rhs);
                }
            }
        }
        (Direction::Backward, Conditioning::Last) => {
            if markov {
                coupling[0] = Some(Mat::zeros(d, d));
            }
            if constrain {
                for k in 0..n.saturating_sub(2) {
                    let rhs = t(&transition, k).transpose() * &prec[k] * t(&coupling, k);
                    coupling[k + 1] = Some(&covs[k + 1] * rhs);
                }
            }
        }
    }
    CmModel::new(
        shape,
        direction,
        conditioning,
        transition.into_iter().flatten().collect(),
        coupling.into_iter().flatten().collect(),
        covs,
    )
    .expect("generated model is valid")
}

/// Random model of `kind`. Markov kinds always govern Markov sequences; the
/// reciprocal kind treats [`SequenceClass::General`] as reciprocal.
pub fn random_model<R: Rng + ?Sized>(
    kind: ModelKind,
    class: SequenceClass,
    shape: SequenceShape,
    rng: &mut R,
) -> ModelSpec {
    match kind {
        ModelKind::ForwardMarkov => random_forward_markov(shape, TransitionRank::Full, rng).into(),
        ModelKind::BackwardMarkov => random_backward_markov(shape, rng).into(),
        ModelKind::Reciprocal => random_reciprocal(shape, class == SequenceClass::Markov, rng).into(),
        _ => {
            let (direction, conditioning) = kind.cm_layout().expect("CM kind");
            random_cm(shape, direction, conditioning, class, rng).into()
        }
    }
}
