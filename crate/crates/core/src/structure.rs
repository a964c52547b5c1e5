//! Sparsity classification of precision matrices and the algebraic
//! reciprocal/Markov conditions on CM model parameters.
//!
//! For a nonsingular Gaussian sequence with precision `J`:
//! Markov ⇔ `J` block tri-diagonal; reciprocal ⇔ tri-diagonal plus the two
//! corner cells; CM_L ⇔ tri-diagonal plus the last block row/column;
//! CM_F ⇔ tri-diagonal plus the first block row/column.

use crate::error::{ModelError, Result};
use crate::linalg::{self, Mat};
use crate::model::{BlockMatrix, CmModel, Conditioning, Direction};

/// Default relative zero-block tolerance.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Blocks of a precision matrix read in the CM_L or CM_F layout.
///
/// `diagonal[k] = A_k`, `off_diagonal[k] = B_k` (cell `(k, k+1)`), and
/// `dense` holds the `D_k` cells keyed by their index `k`: cell `(k, N)` for
/// `k ∈ [0, N−2]` in the CM_L layout, cell `(0, k)` for `k ∈ [2, N]` in the
/// CM_F layout.
#[derive(Clone, Debug, PartialEq)]
pub struct StructurePattern {
    pub diagonal: Vec<Mat>,
    pub off_diagonal: Vec<Mat>,
    pub dense: Vec<(usize, Mat)>,
}

impl StructurePattern {
    pub fn cml(j: &BlockMatrix) -> Self {
        let n = j.shape().horizon();
        Self {
            diagonal: (0..=n).map(|k| j.block(k, k)).collect(),
            off_diagonal: (0..n).map(|k| j.block(k, k + 1)).collect(),
            dense: (0..n.saturating_sub(1)).map(|k| (k, j.block(k, n))).collect(),
        }
    }

    pub fn cmf(j: &BlockMatrix) -> Self {
        let n = j.shape().horizon();
        Self {
            diagonal: (0..=n).map(|k| j.block(k, k)).collect(),
            off_diagonal: (0..n).map(|k| j.block(k, k + 1)).collect(),
            dense: (2..=n).map(|k| (k, j.block(0, k))).collect(),
        }
    }
}

/// A block outside the tri-diagonal band that is not numerically zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub row: usize,
    pub col: usize,
    pub max_abs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub is_cml: bool,
    pub is_cmf: bool,
    pub is_reciprocal: bool,
    pub is_markov: bool,
    /// Upper-triangle cells `(i, j)`, `j > i + 1`, above the zero threshold.
    pub violations: Vec<Violation>,
    pub tolerance: f64,
    /// `tolerance × max |J_ij|`, the absolute zero threshold applied.
    pub threshold: f64,
}

/// Classifies a symmetric positive definite precision matrix.
///
/// A block counts as zero when its largest entry is at most
/// `tol × max |J_ij|`. Flags are derived from one violation list, so
/// `markov ⇒ reciprocal ⇒ (cml ∧ cmf)` holds by construction.
pub fn classify(j: &BlockMatrix, tol: f64) -> Result<StructureReport> {
    let asym = linalg::asymmetry(j.entries());
    if asym > tol {
        return Err(ModelError::AsymmetricMatrix(asym));
    }
    if !linalg::is_positive_definite(j.entries()) {
        return Err(ModelError::NotPositiveDefinite {
            param: "information matrix",
            index: None,
        });
    }
    let n = j.shape().horizon();
    let threshold = tol * j.max_abs();
    let mut violations = Vec::new();
    for row in 0..=n {
        for col in (row + 2)..=n {
            let m = linalg::max_abs(&j.block(row, col));
            if m > threshold {
                violations.push(Violation {
                    row,
                    col,
                    max_abs: m,
                });
            }
        }
    }
    let is_markov = violations.is_empty();
    let is_reciprocal = violations.iter().all(|v| v.row == 0 && v.col == n);
    let is_cml = violations.iter().all(|v| v.col == n);
    let is_cmf = violations.iter().all(|v| v.row == 0);
    Ok(StructureReport {
        is_cml,
        is_cmf,
        is_reciprocal,
        is_markov,
        violations,
        tolerance: tol,
        threshold,
    })
}

/// Outcome of the Markov test on a CM model. The Markov condition only
/// extends the reciprocal one, so it is not evaluated when that fails.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarkovCondition {
    Holds,
    Fails,
    NotApplicable,
}

struct ConditionTerms<'a> {
    model: &'a CmModel,
    precisions: Vec<Mat>,
    scale: f64,
    tol: f64,
}

impl<'a> ConditionTerms<'a> {
    fn new(model: &'a CmModel, tol: f64) -> Self {
        let precisions: Vec<Mat> = model
            .noise_covs()
            .iter()
            .map(|g| linalg::spd_inverse(g).expect("validated noise covariance"))
            .collect();
        let scale = precisions.iter().fold(0.0_f64, |m, p| m.max(p.norm()));
        Self {
            model,
            precisions,
            scale,
            tol,
        }
    }

    fn weighted_coupling(&self, k: usize) -> Mat {
        &self.precisions[k] * self.model.coupling(k).expect("coupling in range")
    }

    /// `G_k⁻¹ G_{k,c}` against `G_{k+1,k}' G_{k+1}⁻¹ G_{k+1,c}`.
    fn forward(&self, k: usize) -> bool {
        let lhs = self.weighted_coupling(k);
        let rhs = self.model.transition(k + 1).expect("transition in range").transpose()
            * self.weighted_coupling(k + 1);
        self.close(&lhs, &rhs)
    }

    /// `(G^B_{k+1})⁻¹ G^B_{k+1,c}` against `(G^B_{k,k+1})' (G^B_k)⁻¹ G^B_{k,c}`.
    fn backward(&self, k: usize) -> bool {
        let lhs = self.weighted_coupling(k + 1);
        let rhs = self.model.transition(k).expect("transition in range").transpose()
            * self.weighted_coupling(k);
        self.close(&lhs, &rhs)
    }

    /// `G_k⁻¹ G_{k,c} = 0`, equivalent to `G_{k,c} = 0`.
    fn vanishes(&self, k: usize) -> bool {
        let lhs = self.weighted_coupling(k);
        self.close(&lhs, &Mat::zeros(lhs.nrows(), lhs.ncols()))
    }

    /// Relative Frobenius gap, measured against the larger side or the
    /// largest noise precision, whichever is biggest.
    fn close(&self, lhs: &Mat, rhs: &Mat) -> bool {
        let scale = lhs.norm().max(rhs.norm()).max(self.scale);
        (lhs - rhs).norm() <= self.tol * scale
    }
}

/// Indices `k` at which the reciprocal condition fails; empty when the CM
/// model governs a reciprocal sequence.
pub fn reciprocal_condition_violations(model: &CmModel, tol: f64) -> Vec<usize> {
    let n = model.shape().horizon();
    let terms = ConditionTerms::new(model, tol);
    let (range, forward) = match (model.direction(), model.conditioning()) {
        (Direction::Forward, Conditioning::Last) => (1..n - 1, true),
        (Direction::Forward, Conditioning::First) => (2..n, true),
        (Direction::Backward, Conditioning::First) => (1..n - 1, false),
        (Direction::Backward, Conditioning::Last) => (0..n.saturating_sub(2), false),
    };
    range
        .filter(|&k| {
            if forward {
                !terms.forward(k)
            } else {
                !terms.backward(k)
            }
        })
        .collect()
}

pub fn check_cm_reciprocal_condition(model: &CmModel, tol: f64) -> bool {
    reciprocal_condition_violations(model, tol).is_empty()
}

/// The extra boundary condition that makes a reciprocal CM model Markov.
pub fn check_cm_markov_condition(model: &CmModel, tol: f64) -> MarkovCondition {
    if !check_cm_reciprocal_condition(model, tol) {
        return MarkovCondition::NotApplicable;
    }
    let n = model.shape().horizon();
    let terms = ConditionTerms::new(model, tol);
    let holds = match (model.direction(), model.conditioning()) {
        (Direction::Forward, Conditioning::Last) => terms.forward(0),
        (Direction::Forward, Conditioning::First) => terms.vanishes(n),
        (Direction::Backward, Conditioning::First) => terms.backward(n - 1),
        (Direction::Backward, Conditioning::Last) => terms.vanishes(0),
    };
    if holds {
        MarkovCondition::Holds
    } else {
        MarkovCondition::Fails
    }
}
