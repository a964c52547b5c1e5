//! The seven dynamic model kinds and their stacked forms.
//!
//! Every model is written as `T x = ξ` over the stacked state
//! `x = [x_0', …, x_N']'`, with `Cov(ξ) = P`. For the six white-noise kinds
//! `T` has identity diagonal blocks and each row `k` reads
//! `x_k − Σ coeff · x_j = ξ_k`, where the regressors `j` depend only on the
//! kind (see [`ModelKind::regressors`]). `P` is block diagonal. The
//! reciprocal model has locally correlated noise and `P = T = R`.

use std::fmt;
use std::str::FromStr;

use crate::error::{ModelError, Result};
use crate::linalg::{self, Mat, Solver, Vector};

/// Relative asymmetry accepted on input covariances before they are symmetrized.
const SYMMETRY_TOL: f64 = 1e-10;

/// Horizon `N` (indices `0..=N`) and per-index state dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SequenceShape {
    horizon: usize,
    dim: usize,
}

impl SequenceShape {
    /// Markov models accept `N ≥ 1`; reciprocal and CM models additionally
    /// need an interior index and check `N ≥ 2` themselves.
    pub fn new(horizon: usize, dim: usize) -> Result<Self> {
        if horizon < 1 {
            return Err(ModelError::InvalidShape(format!(
                "horizon N must be at least 1, got {horizon}"
            )));
        }
        if dim < 1 {
            return Err(ModelError::InvalidShape("dim must be at least 1".into()));
        }
        Ok(Self { horizon, dim })
    }

    /// `N`, the last time index.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of time indices, `N + 1`.
    pub fn blocks(&self) -> usize {
        self.horizon + 1
    }

    /// Length of the stacked vector, `(N + 1) · dim`.
    pub fn len(&self) -> usize {
        self.blocks() * self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn require_interior(&self, what: &str) -> Result<()> {
        if self.horizon < 2 {
            return Err(ModelError::InvalidShape(format!(
                "{what} models need N >= 2, got N = {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// The seven concrete model kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    ForwardMarkov,
    BackwardMarkov,
    Reciprocal,
    CmlForward,
    CmfForward,
    CmlBackward,
    CmfBackward,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::ForwardMarkov,
        ModelKind::BackwardMarkov,
        ModelKind::Reciprocal,
        ModelKind::CmlForward,
        ModelKind::CmfForward,
        ModelKind::CmlBackward,
        ModelKind::CmfBackward,
    ];

    /// Identifier used in model documents and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::ForwardMarkov => "forward_markov",
            ModelKind::BackwardMarkov => "backward_markov",
            ModelKind::Reciprocal => "reciprocal",
            ModelKind::CmlForward => "cml_forward",
            ModelKind::CmfForward => "cmf_forward",
            ModelKind::CmlBackward => "cml_backward",
            ModelKind::CmfBackward => "cmf_backward",
        }
    }

    pub fn cm_layout(self) -> Option<(Direction, Conditioning)> {
        match self {
            ModelKind::CmlForward => Some((Direction::Forward, Conditioning::Last)),
            ModelKind::CmfForward => Some((Direction::Forward, Conditioning::First)),
            ModelKind::CmlBackward => Some((Direction::Backward, Conditioning::Last)),
            ModelKind::CmfBackward => Some((Direction::Backward, Conditioning::First)),
            _ => None,
        }
    }

    /// Indices regressed on in row `k` of a white-noise model, ordered
    /// `[neighbour, conditioning index]`. `None` for the reciprocal kind.
    ///
    /// A single entry equal to the conditioning index is a coupling (the
    /// CM_F forward row `k = 1` and the CM_L backward row `k = N − 1`, where
    /// the neighbour and the conditioning index coincide).
    pub fn regressors(self, horizon: usize, k: usize) -> Option<Vec<usize>> {
        let n = horizon;
        let r = match self {
            ModelKind::Reciprocal => return None,
            ModelKind::ForwardMarkov => {
                if k == 0 {
                    vec![]
                } else {
                    vec![k - 1]
                }
            }
            ModelKind::BackwardMarkov => {
                if k == n {
                    vec![]
                } else {
                    vec![k + 1]
                }
            }
            ModelKind::CmlForward => match k {
                _ if k == n => vec![],
                0 => vec![n],
                _ => vec![k - 1, n],
            },
            ModelKind::CmfForward => match k {
                0 => vec![],
                1 => vec![0],
                _ => vec![k - 1, 0],
            },
            ModelKind::CmfBackward => match k {
                0 => vec![],
                _ if k == n => vec![0],
                _ => vec![k + 1, 0],
            },
            ModelKind::CmlBackward => match k {
                _ if k == n => vec![],
                _ if k + 1 == n => vec![n],
                _ => vec![k + 1, n],
            },
        };
        Some(r)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown model class `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

/// Which endpoint a CM model conditions on: `c = 0` (CM_F) or `c = N` (CM_L).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Conditioning {
    First,
    Last,
}

/// Dense square matrix laid out as an `(N+1) × (N+1)` grid of `dim × dim` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    shape: SequenceShape,
    entries: Mat,
}

impl BlockMatrix {
    pub fn new(shape: SequenceShape, entries: Mat) -> Result<Self> {
        if entries.nrows() != shape.len() || entries.ncols() != shape.len() {
            return Err(ModelError::GridMismatch {
                rows: entries.nrows(),
                cols: entries.ncols(),
                blocks: shape.blocks(),
                dim: shape.dim(),
            });
        }
        Ok(Self { shape, entries })
    }

    pub fn zeros(shape: SequenceShape) -> Self {
        Self {
            shape,
            entries: Mat::zeros(shape.len(), shape.len()),
        }
    }

    pub fn identity(shape: SequenceShape) -> Self {
        Self {
            shape,
            entries: Mat::identity(shape.len(), shape.len()),
        }
    }

    pub fn shape(&self) -> SequenceShape {
        self.shape
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn into_entries(self) -> Mat {
        self.entries
    }

    /// Copy of cell `(i, j)`.
    pub fn block(&self, i: usize, j: usize) -> Mat {
        let d = self.shape.dim();
        self.entries.view((i * d, j * d), (d, d)).into_owned()
    }

    pub(crate) fn set_block(&mut self, i: usize, j: usize, value: &Mat) {
        let d = self.shape.dim();
        self.entries.view_mut((i * d, j * d), (d, d)).copy_from(value);
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.entries)
    }

    pub fn transpose(&self) -> Self {
        Self {
            shape: self.shape,
            entries: self.entries.transpose(),
        }
    }
}

/// One sample path of a model's stacked noise and boundary values.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRealization {
    shape: SequenceShape,
    values: Vector,
}

impl NoiseRealization {
    pub fn new(shape: SequenceShape, values: Vector) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(ModelError::RealizationLength {
                expected: shape.len(),
                found: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn from_slice(shape: SequenceShape, values: &[f64]) -> Result<Self> {
        Self::new(shape, Vector::from_column_slice(values))
    }

    pub fn zeros(shape: SequenceShape) -> Self {
        Self {
            shape,
            values: Vector::zeros(shape.len()),
        }
    }

    pub fn shape(&self) -> SequenceShape {
        self.shape
    }

    pub fn values(&self) -> &Vector {
        &self.values
    }

    pub fn into_values(self) -> Vector {
        self.values
    }

    pub fn block(&self, k: usize) -> Vector {
        let d = self.shape.dim();
        self.values.rows(k * d, d).into_owned()
    }
}

fn check_blocks(param: &'static str, mats: &[Mat], expected: usize, dim: usize) -> Result<()> {
    if mats.len() != expected {
        return Err(ModelError::LengthMismatch {
            param,
            expected,
            found: mats.len(),
        });
    }
    for (index, m) in mats.iter().enumerate() {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(ModelError::BlockDimension {
                param,
                index,
                dim,
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
    }
    Ok(())
}

fn check_symmetric(param: &'static str, mats: &[Mat]) -> Result<Vec<Mat>> {
    mats.iter()
        .enumerate()
        .map(|(index, m)| {
            if linalg::asymmetry(m) > SYMMETRY_TOL {
                Err(ModelError::NotSymmetric { param, index })
            } else {
                Ok(linalg::symmetrize(m))
            }
        })
        .collect()
}

fn check_covariances(param: &'static str, mats: &[Mat], shape: SequenceShape) -> Result<Vec<Mat>> {
    check_blocks(param, mats, shape.blocks(), shape.dim())?;
    let sym = check_symmetric(param, mats)?;
    for (index, m) in sym.iter().enumerate() {
        if !linalg::is_positive_definite(m) {
            return Err(ModelError::NotPositiveDefinite {
                param,
                index: Some(index),
            });
        }
    }
    Ok(sym)
}

/// `x_k = M_{k,k-1} x_{k-1} + e_k` for `k ∈ [1, N]`, `x_0 = e_0`, `Cov(e_k) = M_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardMarkovModel {
    shape: SequenceShape,
    transitions: Vec<Mat>,
    noise_covs: Vec<Mat>,
}

impl ForwardMarkovModel {
    /// `transitions[k - 1] = M_{k,k-1}`, `noise_covs[k] = M_k`. Transitions
    /// may be singular or zero.
    pub fn new(shape: SequenceShape, transitions: Vec<Mat>, noise_covs: Vec<Mat>) -> Result<Self> {
        check_blocks("transitions", &transitions, shape.horizon(), shape.dim())?;
        let noise_covs = check_covariances("noise_covs", &noise_covs, shape)?;
        Ok(Self {
            shape,
            transitions,
            noise_covs,
        })
    }

    pub fn shape(&self) -> SequenceShape {
        self.shape
    }

    /// `M_{k,k-1}` for `k ∈ [1, N]`.
    pub fn transition(&self, k: usize) -> &Mat {
        &self.transitions[k - 1]
    }

    pub fn transitions(&self) -> &[Mat] {
        &self.transitions
    }

    pub fn noise_cov(&self, k: usize) -> &Mat {
        &self.noise_covs[k]
    }

    pub fn noise_covs(&self) -> &[Mat] {
        &self.noise_covs
    }
}

/// `x_k = M^B_{k,k+1} x_{k+1} + e_k` for `k ∈ [0, N−1]`, `x_N = e_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardMarkovModel {
    shape: SequenceShape,
    transitions: Vec<Mat>,
    noise_covs: Vec<Mat>,
}

impl BackwardMarkovModel {
    /// `transitions[k] = M^B_{k,k+1}`, `noise_covs[k] = M^B_k`.
    pub fn new(shape: SequenceShape, transitions: Vec<Mat>, noise_covs: Vec<Mat>) -> Result<Self> {
        check_blocks("transitions", &transitions, shape.horizon(), shape.dim())?;
        let noise_covs = check_covariances("noise_covs", &noise_covs, shape)?;
        Ok(Self {
            shape,
            transitions,
            noise_covs,
        })
    }

    pub fn shape(&self) -> SequenceShape {
        self.shape
    }

    /// `M^B_{k,k+1}` for `k ∈ [0, N−1]`.
    pub fn transition(&self, k: usize) -> &Mat {
        &self.transitions[k]
    }

    pub fn transitions(&self) -> &[Mat] {
        &self.transitions
    }

    pub fn noise_cov(&self, k: usize) -> &Mat {
        &self.noise_covs[k]
    }

    pub fn noise_covs(&self) -> &[Mat] {
        &self.noise_covs
    }
}

/// `R^0_k x_k − R^-_k x_{k-1} − R^+_k x_{k+1} = e^R_k` with cyclic boundary
/// rows and `R^-_{k+1} = (R^+_k)'`, `R^-_0 = (R^+_N)'`.
///
/// The noise is locally correlated with `Cov(e^R) = R`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReciprocalModel {
    shape: SequenceShape,
    diag_terms: Vec<Mat>,
    super_terms: Vec<Mat>,
    corner_term: Mat,
    matrix: BlockMatrix,
}

impl ReciprocalModel {
    /// `diag_terms[k] = R^0_k` (`k ∈ [0, N]`), `super_terms[k] = R^+_k`
    /// (`k ∈ [0, N−1]`), `corner_term = R^+_N`.
    pub fn new(
        shape: SequenceShape,
        diag_terms: Vec<Mat>,
        super_terms: Vec<Mat>,
        corner_term: Mat,
    ) -> Result<Self> {
        shape.require_interior("reciprocal")?;
        let d = shape.dim();
        check_blocks("diag_terms", &diag_terms, shape.blocks(), d)?;
        let diag_terms = check_symmetric("diag_terms", &diag_terms)?;
        check_blocks("super_terms", &super_terms, shape.horizon(), d)?;
        check_blocks("corner_term", std::slice::from_ref(&corner_term), 1, d)?;

        let n = shape.horizon();
        let mut r = BlockMatrix::zeros(shape);
        for (k, r0) in diag_terms.iter().enumerate() {
            r.set_block(k, k, r0);
        }
        for (k, rp) in super_terms.iter().enumerate() {
            r.set_block(k, k + 1, &-rp);
            r.set_block(k + 1, k, &-rp.transpose());
        }
        r.set_block(n, 0, &-&corner_term);
        r.set_block(0, n, &-corner_term.transpose());
        if !linalg::is_positive_definite(r.entries()) {
            return Err(ModelError::NotPositiveDefinite {
                param: "reciprocal matrix",
                index: None,
            });
        }
        Ok(Self {
            shape,
            diag_terms,
            super_terms,
            corner_term,
            matrix: r,
        })
    }

    pub fn shape(&self) -> SequenceShape {
        self.shape
    }

    /// `R^0_k`.
    pub fn diag_term(&self, k: usize) -> &Mat {
        &self.diag_terms[k]
    }

    /// `R^+_k` for `k ∈ [0, N]`; `k = N` is the corner term.
    pub fn super_term(&self, k: usize) -> &Mat {
        if k == self.shape.horizon() {
            &self.corner_term
        } else {
            &self.super_terms[k]
        }
    }

    /// `R^-_k = (R^+_{k-1})'`, with `R^-_0 = (R^+_N)'`.
    pub fn sub_term(&self, k: usize) -> Mat {
        if k == 0 {
            self.corner_term.transpose()
        } else {
            self.super_terms[k - 1].transpose()
        }
    }

    pub fn diag_terms(&self) -> &[Mat] {
        &self.diag_terms
    }

    pub fn super_terms(&self) -> &[Mat] {
        &self.super_terms
    }

    pub fn corner_term(&self) -> &Mat {
        &self.corner_term
    }

    /// The assembled cyclic tri-diagonal matrix `R`.
    pub fn matrix(&self) -> &BlockMatrix {
        &self.matrix
    }
}

/// Forward or backward CM model conditioned at `c = 0` or `c = N`.
///
/// Forward: `x_k = G_{k,k-1} x_{k-1} + G_{k,c} x_c + e_k`; backward:
/// `x_k = G^B_{k,k+1} x_{k+1} + G^B_{k,c} x_c + e_k`; `x_c = e_c`.
///
/// Storage (always `N − 1` transitions and `N` couplings, indexed by time
/// through [`CmModel::transition`] and [`CmModel::coupling`]):
///
/// | kind         | transitions at k | couplings at k |
/// |--------------|------------------|----------------|
/// | CM_L forward | `1..=N-1`        | `0..=N-1`      |
/// | CM_F forward | `2..=N`          | `1..=N`        |
/// | CM_L backward| `0..=N-2`        | `0..=N-1`      |
/// | CM_F backward| `1..=N-1`        | `1..=N`        |
///
/// The CM_F forward row `k = 1` and the CM_L backward row `k = N − 1` regress
/// on the conditioning state only; their single combined coefficient is
/// stored as the coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct CmModel {
    shape: SequenceShape,
    direction: Direction,
    conditioning: Conditioning,
    transitions: Vec<Mat>,
    couplings: Vec<Mat>,
    noise_covs: Vec<Mat>,
}

impl CmModel {
    pub fn new(
        shape: SequenceShape,
        direction: Direction,
        conditioning: Conditioning,
        transitions: Vec<Mat>,
        couplings: Vec<Mat>,
        noise_covs: Vec<Mat>,
    ) -> Result<Self> {
        shape.require_interior("CM")?;
        let n = shape.horizon();
        check_blocks("transitions", &transitions, n - 1, shape.dim())?;
        check_blocks("couplings", &couplings, n, shape.dim())?;
        let noise_covs = check_covariances("noise_covs", &noise_covs, shape)?;
        Ok(Self {
            shape,
            direction,
            conditioning,
            transitions,
            couplings,
            noise_covs,
        })
    }

    pub fn shape(&self) -> SequenceShape {
        self.shape
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    /// The conditioning index `c`.
    pub fn conditioning_index(&self) -> usize {
        match self.conditioning {
            Conditioning::First => 0,
            Conditioning::Last => self.shape.horizon(),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match (self.direction, self.conditioning) {
            (Direction::Forward, Conditioning::Last) => ModelKind::CmlForward,
            (Direction::Forward, Conditioning::First) => ModelKind::CmfForward,
            (Direction::Backward, Conditioning::Last) => ModelKind::CmlBackward,
            (Direction::Backward, Conditioning::First) => ModelKind::CmfBackward,
        }
    }

    fn transition_start(&self) -> usize {
        match (self.direction, self.conditioning) {
            (Direction::Forward, Conditioning::Last) => 1,
            (Direction::Forward, Conditioning::First) => 2,
            (Direction::Backward, Conditioning::Last) => 0,
            (Direction::Backward, Conditioning::First) => 1,
        }
    }

    fn coupling_start(&self) -> usize {
        match self.conditioning {
            Conditioning::Last => 0,
            Conditioning::First => 1,
        }
    }

    /// `G_{k,k-1}` (forward) or `G^B_{k,k+1}` (backward), if row `k` has one.
    pub fn transition(&self, k: usize) -> Option<&Mat> {
        k.checked_sub(self.transition_start())
            .and_then(|i| self.transitions.get(i))
    }

    /// `G_{k,c}` or `G^B_{k,c}`, if row `k` has one.
    pub fn coupling(&self, k: usize) -> Option<&Mat> {
        k.checked_sub(self.coupling_start())
            .and_then(|i| self.couplings.get(i))
    }

    pub fn noise_cov(&self, k: usize) -> &Mat {
        &self.noise_covs[k]
    }

    pub fn transitions(&self) -> &[Mat] {
        &self.transitions
    }

    pub fn couplings(&self) -> &[Mat] {
        &self.couplings
    }

    pub fn noise_covs(&self) -> &[Mat] {
        &self.noise_covs
    }
}

/// Any of the seven model kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    ForwardMarkov(ForwardMarkovModel),
    BackwardMarkov(BackwardMarkovModel),
    Reciprocal(ReciprocalModel),
    Cm(CmModel),
}

impl From<ForwardMarkovModel> for ModelSpec {
    fn from(m: ForwardMarkovModel) -> Self {
        ModelSpec::ForwardMarkov(m)
    }
}

impl From<BackwardMarkovModel> for ModelSpec {
    fn from(m: BackwardMarkovModel) -> Self {
        ModelSpec::BackwardMarkov(m)
    }
}

impl From<ReciprocalModel> for ModelSpec {
    fn from(m: ReciprocalModel) -> Self {
        ModelSpec::Reciprocal(m)
    }
}

impl From<CmModel> for ModelSpec {
    fn from(m: CmModel) -> Self {
        ModelSpec::Cm(m)
    }
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::ForwardMarkov(_) => ModelKind::ForwardMarkov,
            ModelSpec::BackwardMarkov(_) => ModelKind::BackwardMarkov,
            ModelSpec::Reciprocal(_) => ModelKind::Reciprocal,
            ModelSpec::Cm(m) => m.kind(),
        }
    }

    pub fn shape(&self) -> SequenceShape {
        match self {
            ModelSpec::ForwardMarkov(m) => m.shape(),
            ModelSpec::BackwardMarkov(m) => m.shape(),
            ModelSpec::Reciprocal(m) => m.shape(),
            ModelSpec::Cm(m) => m.shape(),
        }
    }

    /// Per-index noise covariances, `None` for the reciprocal model.
    pub fn noise_covs(&self) -> Option<&[Mat]> {
        match self {
            ModelSpec::ForwardMarkov(m) => Some(m.noise_covs()),
            ModelSpec::BackwardMarkov(m) => Some(m.noise_covs()),
            ModelSpec::Reciprocal(_) => None,
            ModelSpec::Cm(m) => Some(m.noise_covs()),
        }
    }

    /// Coefficients of row `k`, aligned with `kind().regressors(N, k)`.
    fn row_coefficients(&self, k: usize) -> Vec<&Mat> {
        match self {
            ModelSpec::ForwardMarkov(m) => (k > 0).then(|| m.transition(k)).into_iter().collect(),
            ModelSpec::BackwardMarkov(m) => (k < m.shape().horizon())
                .then(|| m.transition(k))
                .into_iter()
                .collect(),
            ModelSpec::Cm(m) => m.transition(k).into_iter().chain(m.coupling(k)).collect(),
            ModelSpec::Reciprocal(_) => Vec::new(),
        }
    }

    /// Builds a white-noise model from per-row regression coefficients laid
    /// out as in [`ModelKind::regressors`].
    pub(crate) fn from_regressions(
        kind: ModelKind,
        shape: SequenceShape,
        coefficients: Vec<Vec<Mat>>,
        noise_covs: Vec<Mat>,
    ) -> Result<Self> {
        let n = shape.horizon();
        match kind {
            ModelKind::Reciprocal => unreachable!("reciprocal parameters are not regressions"),
            ModelKind::ForwardMarkov => {
                let transitions = coefficients.into_iter().skip(1).flatten().collect();
                ForwardMarkovModel::new(shape, transitions, noise_covs).map(Into::into)
            }
            ModelKind::BackwardMarkov => {
                let transitions = coefficients.into_iter().take(n).flatten().collect();
                BackwardMarkovModel::new(shape, transitions, noise_covs).map(Into::into)
            }
            _ => {
                let (direction, conditioning) = kind.cm_layout().expect("CM kind");
                let c = match conditioning {
                    Conditioning::First => 0,
                    Conditioning::Last => n,
                };
                let mut transitions = Vec::new();
                let mut couplings = Vec::new();
                for (k, coeffs) in coefficients.into_iter().enumerate() {
                    let regs = kind.regressors(n, k).expect("white-noise kind");
                    for (j, g) in regs.into_iter().zip(coeffs) {
                        if j == c {
                            couplings.push(g);
                        } else {
                            transitions.push(g);
                        }
                    }
                }
                CmModel::new(shape, direction, conditioning, transitions, couplings, noise_covs)
                    .map(Into::into)
            }
        }
    }

    /// The stacked system matrix `T` with `T x = ξ`.
    pub fn system_matrix(&self) -> BlockMatrix {
        let shape = self.shape();
        if let ModelSpec::Reciprocal(r) = self {
            return r.matrix().clone();
        }
        let n = shape.horizon();
        let kind = self.kind();
        let mut t = BlockMatrix::identity(shape);
        for k in 0..=n {
            let regs = kind.regressors(n, k).expect("white-noise kind");
            for (j, g) in regs.into_iter().zip(self.row_coefficients(k)) {
                t.set_block(k, j, &-g);
            }
        }
        t
    }

    /// `P = Cov(ξ)`: block diagonal for white-noise kinds, `R` for the
    /// reciprocal model.
    pub fn noise_covariance(&self) -> BlockMatrix {
        match self.noise_covs() {
            None => self.system_matrix(),
            Some(covs) => {
                let mut p = BlockMatrix::zeros(self.shape());
                for (k, m) in covs.iter().enumerate() {
                    p.set_block(k, k, m);
                }
                p
            }
        }
    }

    /// `T' P⁻¹ T` before symmetrization.
    pub(crate) fn information_matrix_raw(&self) -> Result<Mat> {
        let t = self.system_matrix();
        let t = t.entries();
        match self.noise_covs() {
            None => {
                let solver = Solver::new(t, "reciprocal matrix")?;
                Ok(t.transpose() * solver.solve_mat(t))
            }
            Some(covs) => {
                let shape = self.shape();
                let mut p_inv = BlockMatrix::zeros(shape);
                for (k, m) in covs.iter().enumerate() {
                    let inv = linalg::spd_inverse(m).ok_or(ModelError::NotPositiveDefinite {
                        param: "noise_covs",
                        index: Some(k),
                    })?;
                    p_inv.set_block(k, k, &inv);
                }
                Ok(t.transpose() * p_inv.entries() * t)
            }
        }
    }

    /// Precision matrix `J = T' P⁻¹ T` of the governed sequence.
    pub fn information_matrix(&self) -> Result<BlockMatrix> {
        let raw = self.information_matrix_raw()?;
        BlockMatrix::new(self.shape(), linalg::symmetrize(&raw))
    }

    /// Covariance `C = J⁻¹` of the whole sequence.
    pub fn covariance(&self) -> Result<BlockMatrix> {
        covariance_from_information(&self.information_matrix()?)
    }
}

/// Inverts a precision matrix, failing if it is not numerically positive definite.
pub fn covariance_from_information(information: &BlockMatrix) -> Result<BlockMatrix> {
    let c = linalg::spd_inverse(information.entries()).ok_or_else(|| {
        ModelError::NotWellPosed("information matrix is not positive definite".into())
    })?;
    BlockMatrix::new(information.shape(), c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    fn scalars(vs: &[f64]) -> Vec<Mat> {
        vs.iter().map(|&v| s(v)).collect()
    }

    fn rows(n: usize, data: &[f64]) -> Mat {
        Mat::from_row_slice(n, n, data)
    }

    fn unit_cml() -> ModelSpec {
        let shape = SequenceShape::new(2, 1).unwrap();
        CmModel::new(
            shape,
            Direction::Forward,
            Conditioning::Last,
            scalars(&[1.0]),
            scalars(&[1.0, 1.0]),
            scalars(&[1.0, 1.0, 1.0]),
        )
        .unwrap()
        .into()
    }

    fn small_reciprocal() -> ModelSpec {
        let shape = SequenceShape::new(2, 1).unwrap();
        ReciprocalModel::new(shape, scalars(&[2.0, 1.0, 3.0]), scalars(&[1.0, 1.0]), s(0.0))
            .unwrap()
            .into()
    }

    #[test]
    fn forward_markov_system_matrix() {
        let shape = SequenceShape::new(1, 1).unwrap();
        let m: ModelSpec = ForwardMarkovModel::new(shape, scalars(&[1.0]), scalars(&[1.0, 1.0]))
            .unwrap()
            .into();
        assert_eq!(m.system_matrix().entries(), &rows(2, &[1.0, 0.0, -1.0, 1.0]));
        assert_eq!(m.noise_covariance().entries(), &Mat::identity(2, 2));
        let c = m.covariance().unwrap();
        assert!((c.entries() - rows(2, &[1.0, 1.0, 1.0, 2.0])).norm() < 1e-14);
    }

    #[test]
    fn cml_system_and_information() {
        let m = unit_cml();
        let t = rows(3, &[1.0, 0.0, -1.0, -1.0, 1.0, -1.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.system_matrix().entries(), &t);
        let j = rows(3, &[2.0, -1.0, 0.0, -1.0, 1.0, -1.0, 0.0, -1.0, 3.0]);
        assert!((m.information_matrix().unwrap().entries() - j).norm() < 1e-14);
    }

    #[test]
    fn reciprocal_layout_and_p_equals_t() {
        let m = small_reciprocal();
        let t = rows(3, &[2.0, -1.0, 0.0, -1.0, 1.0, -1.0, 0.0, -1.0, 3.0]);
        assert_eq!(m.system_matrix().entries(), &t);
        assert_eq!(m.noise_covariance().entries(), &t);
        let j = m.information_matrix().unwrap();
        assert!(linalg::rel_frobenius(&t, j.entries()) < 1e-9);
    }

    #[test]
    fn reciprocal_corner_blocks() {
        let shape = SequenceShape::new(3, 1).unwrap();
        let r = ReciprocalModel::new(
            shape,
            scalars(&[4.0, 4.0, 4.0, 4.0]),
            scalars(&[1.0, 1.0, 1.0]),
            s(0.5),
        )
        .unwrap();
        let t = r.matrix();
        assert_eq!(t.block(3, 0)[(0, 0)], -0.5);
        assert_eq!(t.block(0, 3)[(0, 0)], -0.5);
        assert_eq!(r.sub_term(0), s(0.5));
        assert_eq!(r.sub_term(2), s(1.0));
    }

    #[test]
    fn backward_markov_noise_covariance() {
        let shape = SequenceShape::new(1, 1).unwrap();
        let m: ModelSpec = BackwardMarkovModel::new(shape, scalars(&[0.5]), scalars(&[0.5, 2.0]))
            .unwrap()
            .into();
        assert_eq!(m.noise_covariance().entries(), &rows(2, &[0.5, 0.0, 0.0, 2.0]));
        assert_eq!(m.system_matrix().entries(), &rows(2, &[1.0, -0.5, 0.0, 1.0]));
    }

    #[test]
    fn forward_markov_information_n2() {
        let shape = SequenceShape::new(2, 1).unwrap();
        let m: ModelSpec =
            ForwardMarkovModel::new(shape, scalars(&[1.0, 1.0]), scalars(&[1.0, 1.0, 1.0]))
                .unwrap()
                .into();
        // T'T for T = [[1,0,0],[-1,1,0],[0,-1,1]]
        let j = rows(3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert!((m.information_matrix().unwrap().entries() - j).norm() < 1e-14);
    }

    #[test]
    fn zero_transitions_give_block_diagonal_covariance() {
        let shape = SequenceShape::new(3, 2).unwrap();
        let covs: Vec<Mat> = (0..4)
            .map(|k| rows(2, &[1.0 + k as f64, 0.3, 0.3, 2.0]))
            .collect();
        let m: ModelSpec = ForwardMarkovModel::new(shape, vec![Mat::zeros(2, 2); 3], covs.clone())
            .unwrap()
            .into();
        let c = m.covariance().unwrap();
        for (i, cov) in covs.iter().enumerate() {
            for j in 0..4 {
                let expected = if i == j { cov.clone() } else { Mat::zeros(2, 2) };
                assert!((c.block(i, j) - expected).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cmf_forward_combined_coefficient_row() {
        let shape = SequenceShape::new(3, 1).unwrap();
        let m = CmModel::new(
            shape,
            Direction::Forward,
            Conditioning::First,
            scalars(&[0.2, 0.3]),
            scalars(&[0.7, 0.4, 0.5]),
            scalars(&[1.0; 4]),
        )
        .unwrap();
        assert!(m.transition(1).is_none());
        let t = ModelSpec::from(m).system_matrix();
        let expected = rows(
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                -0.7, 1.0, 0.0, 0.0, //
                -0.4, -0.2, 1.0, 0.0, //
                -0.5, 0.0, -0.3, 1.0,
            ],
        );
        assert_eq!(t.entries(), &expected);
    }

    #[test]
    fn backward_cm_layouts() {
        let shape = SequenceShape::new(3, 1).unwrap();
        let cml = CmModel::new(
            shape,
            Direction::Backward,
            Conditioning::Last,
            scalars(&[0.1, 0.2]),
            scalars(&[0.3, 0.4, 0.5]),
            scalars(&[1.0; 4]),
        )
        .unwrap();
        let t = ModelSpec::from(cml).system_matrix();
        let expected = rows(
            4,
            &[
                1.0, -0.1, 0.0, -0.3, //
                0.0, 1.0, -0.2, -0.4, //
                0.0, 0.0, 1.0, -0.5, //
                0.0, 0.0, 0.0, 1.0,
            ],
        );
        assert_eq!(t.entries(), &expected);

        let cmf = CmModel::new(
            shape,
            Direction::Backward,
            Conditioning::First,
            scalars(&[0.1, 0.2]),
            scalars(&[0.3, 0.4, 0.5]),
            scalars(&[1.0; 4]),
        )
        .unwrap();
        let t = ModelSpec::from(cmf).system_matrix();
        let expected = rows(
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                -0.3, 1.0, -0.1, 0.0, //
                -0.4, 0.0, 1.0, -0.2, //
                -0.5, 0.0, 0.0, 1.0,
            ],
        );
        assert_eq!(t.entries(), &expected);
    }

    #[test]
    fn validation_errors() {
        let shape = SequenceShape::new(1, 1).unwrap();
        let err = ForwardMarkovModel::new(shape, scalars(&[1.0]), scalars(&[1.0, -1.0])).unwrap_err();
        assert_eq!(
            err,
            ModelError::NotPositiveDefinite {
                param: "noise_covs",
                index: Some(1)
            }
        );
        assert!(matches!(
            ForwardMarkovModel::new(shape, scalars(&[1.0, 1.0]), scalars(&[1.0, 1.0])),
            Err(ModelError::LengthMismatch { param: "transitions", .. })
        ));
        assert!(matches!(
            ForwardMarkovModel::new(shape, vec![Mat::zeros(2, 2)], scalars(&[1.0, 1.0])),
            Err(ModelError::BlockDimension { .. })
        ));
        assert!(matches!(
            ReciprocalModel::new(shape, scalars(&[1.0, 1.0]), scalars(&[0.0]), s(0.0)),
            Err(ModelError::InvalidShape(_))
        ));
        let shape2 = SequenceShape::new(2, 1).unwrap();
        assert!(matches!(
            ReciprocalModel::new(shape2, scalars(&[1.0, 1.0, 1.0]), scalars(&[1.0, 1.0]), s(0.0)),
            Err(ModelError::NotPositiveDefinite { index: None, .. })
        ));
        assert!(SequenceShape::new(0, 1).is_err());
        assert!(SequenceShape::new(2, 0).is_err());
    }

    #[test]
    fn regressor_layouts_match_storage() {
        let n = 5;
        for kind in ModelKind::ALL {
            let Some((_, cond)) = kind.cm_layout() else { continue };
            let c = if cond == Conditioning::First { 0 } else { n };
            let mut transitions = 0;
            let mut couplings = 0;
            for k in 0..=n {
                for j in kind.regressors(n, k).unwrap() {
                    if j == c {
                        couplings += 1;
                    } else {
                        transitions += 1;
                    }
                }
            }
            assert_eq!((transitions, couplings), (n - 1, n), "{kind}");
        }
    }

    #[test]
    fn information_is_symmetric_before_symmetrization() {
        use crate::generate::{random_model, SequenceClass};
        use rand::SeedableRng;

        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        for kind in ModelKind::ALL {
            for _ in 0..10 {
                let shape = crate::generate::random_shape(10, 3, &mut rng);
                let m = random_model(kind, SequenceClass::General, shape, &mut rng);
                let raw = m.information_matrix_raw().unwrap();
                assert!(linalg::asymmetry(&raw) < 1e-10, "{kind}");
                // T is nonsingular for every well-posed model.
                assert!(Solver::new(m.system_matrix().entries(), "T").is_ok());
            }
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.name().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("markov".parse::<ModelKind>().is_err());
    }
}
