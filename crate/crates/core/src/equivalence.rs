//! Conversion between explicitly sample-equivalent models.
//!
//! Two models `T1 x = ξ` (`Cov ξ = P1`) and `T2 x = ζ` (`Cov ζ = P2`) govern
//! the same sequence iff `T1' P1⁻¹ T1 = T2' P2⁻¹ T2`. Target parameters are
//! unique, so the generic route reads them off the sequence covariance
//! `C = J⁻¹` as Gaussian regression coefficients: row `k` of a white-noise
//! model regresses `x_k` on the indices from [`ModelKind::regressors`], and
//! the reciprocal model is `J` itself. Realizations are translated through
//! the common sample path, `ζ = T2 T1⁻¹ ξ`.
//!
//! Closed-form recursions cover forward ↔ backward Markov and
//! CM_L forward → reciprocal. They only use the source parameters and act
//! as independent cross-checks of the generic route.

use std::fmt;
use std::str::FromStr;

use crate::error::{ModelError, Result};
use crate::linalg::{self, Mat, Solver, Vector};
use crate::model::{
    covariance_from_information, BackwardMarkovModel, BlockMatrix, CmModel, ForwardMarkovModel,
    ModelKind, ModelSpec, NoiseRealization, ReciprocalModel, SequenceShape,
};
use crate::structure::{self, MarkovCondition, DEFAULT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConversionMethod {
    Generic,
    ClosedForm,
}

impl fmt::Display for ConversionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConversionMethod::Generic => "generic",
            ConversionMethod::ClosedForm => "closed-form",
        })
    }
}

impl FromStr for ConversionMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "generic" => Ok(ConversionMethod::Generic),
            "closed-form" | "closed_form" => Ok(ConversionMethod::ClosedForm),
            _ => Err(format!("unknown conversion method `{s}`")),
        }
    }
}

/// Source and target models with their stacked matrices and factorizations.
///
/// Construction does not require the two models to be equivalent;
/// [`EquivalencePair::step1_error`] measures how far apart they are.
#[derive(Clone, Debug)]
pub struct EquivalencePair {
    source: ModelSpec,
    target: ModelSpec,
    method: ConversionMethod,
    source_system: BlockMatrix,
    source_noise: BlockMatrix,
    target_system: BlockMatrix,
    target_noise: BlockMatrix,
    source_information: BlockMatrix,
    target_information: BlockMatrix,
    source_solver: Solver,
    target_solver: Solver,
    source_noise_solver: Solver,
    target_system_t_solver: Solver,
}

impl EquivalencePair {
    pub fn new(source: ModelSpec, target: ModelSpec, method: ConversionMethod) -> Result<Self> {
        if source.shape() != target.shape() {
            return Err(ModelError::InvalidShape(format!(
                "source shape {:?} differs from target shape {:?}",
                source.shape(),
                target.shape()
            )));
        }
        let source_system = source.system_matrix();
        let source_noise = source.noise_covariance();
        let target_system = target.system_matrix();
        let target_noise = target.noise_covariance();
        let source_solver = Solver::new(source_system.entries(), "source system matrix")?;
        let target_solver = Solver::new(target_system.entries(), "target system matrix")?;
        let source_noise_solver = Solver::new(source_noise.entries(), "source noise covariance")?;
        let target_system_t_solver =
            Solver::new(&target_system.entries().transpose(), "target system matrix")?;
        Ok(Self {
            source_information: source.information_matrix()?,
            target_information: target.information_matrix()?,
            source,
            target,
            method,
            source_system,
            source_noise,
            target_system,
            target_noise,
            source_solver,
            target_solver,
            source_noise_solver,
            target_system_t_solver,
        })
    }

    pub fn source(&self) -> &ModelSpec {
        &self.source
    }

    pub fn target(&self) -> &ModelSpec {
        &self.target
    }

    pub fn method(&self) -> ConversionMethod {
        self.method
    }

    pub fn shape(&self) -> SequenceShape {
        self.source.shape()
    }

    /// `T1`.
    pub fn source_system(&self) -> &BlockMatrix {
        &self.source_system
    }

    /// `P1`.
    pub fn source_noise(&self) -> &BlockMatrix {
        &self.source_noise
    }

    /// `T2`.
    pub fn target_system(&self) -> &BlockMatrix {
        &self.target_system
    }

    /// `P2`.
    pub fn target_noise(&self) -> &BlockMatrix {
        &self.target_noise
    }

    pub fn source_information(&self) -> &BlockMatrix {
        &self.source_information
    }

    pub fn target_information(&self) -> &BlockMatrix {
        &self.target_information
    }

    /// `‖J1 − J2‖_F / ‖J1‖_F`.
    pub fn step1_error(&self) -> f64 {
        linalg::rel_frobenius(
            self.source_information.entries(),
            self.target_information.entries(),
        )
    }

    fn check_len(&self, r: &NoiseRealization) -> Result<()> {
        if r.shape() != self.shape() {
            return Err(ModelError::RealizationLength {
                expected: self.shape().len(),
                found: r.values().len(),
            });
        }
        Ok(())
    }

    /// Sample path generated by the source model from `xi`.
    pub fn source_path(&self, xi: &NoiseRealization) -> Result<Vector> {
        self.check_len(xi)?;
        Ok(self.source_solver.solve(xi.values()))
    }

    /// Sample path generated by the target model from `zeta`.
    pub fn target_path(&self, zeta: &NoiseRealization) -> Result<Vector> {
        self.check_len(zeta)?;
        Ok(self.target_solver.solve(zeta.values()))
    }

    /// `ζ = T2 T1⁻¹ ξ`: the target realization producing the same path.
    pub fn map_noise(&self, xi: &NoiseRealization) -> Result<NoiseRealization> {
        let x = self.source_path(xi)?;
        NoiseRealization::new(self.shape(), self.target_system.entries() * x)
    }

    /// `ζ = P2 T2'⁻¹ T1' P1⁻¹ ξ`, the normal-equation form of the same map.
    ///
    /// Agrees with [`EquivalencePair::map_noise`] only when the two models
    /// share their precision matrix, which makes it a sensitive check on
    /// pairs that were not produced by [`convert`].
    pub fn map_noise_normal_equations(&self, xi: &NoiseRealization) -> Result<NoiseRealization> {
        self.check_len(xi)?;
        let weighted = self.source_noise_solver.solve(xi.values());
        let rhs = self.source_system.entries().transpose() * weighted;
        let z = self.target_system_t_solver.solve(&rhs);
        NoiseRealization::new(self.shape(), self.target_noise.entries() * z)
    }
}

/// Free-function form of [`EquivalencePair::map_noise`].
pub fn map_noise(pair: &EquivalencePair, xi: &NoiseRealization) -> Result<NoiseRealization> {
    pair.map_noise(xi)
}

fn required_flag(target: ModelKind) -> &'static str {
    match target {
        ModelKind::ForwardMarkov | ModelKind::BackwardMarkov => "markov",
        ModelKind::Reciprocal => "reciprocal",
        ModelKind::CmlForward | ModelKind::CmlBackward => "cml",
        ModelKind::CmfForward | ModelKind::CmfBackward => "cmf",
    }
}

/// Refuses targets whose class does not contain the source's sequence.
fn check_admissible(source: &ModelSpec, information: &BlockMatrix, target: ModelKind) -> Result<()> {
    let report = structure::classify(information, DEFAULT_TOL)?;
    let flag = required_flag(target);
    let ok = match flag {
        "markov" => report.is_markov,
        "reciprocal" => report.is_reciprocal,
        "cml" => report.is_cml,
        _ => report.is_cmf,
    };
    if ok {
        return Ok(());
    }
    let mut reason = format!("structure flag `{flag}` is false");
    if let (ModelSpec::Cm(cm), "markov" | "reciprocal") = (source, flag) {
        let ks = structure::reciprocal_condition_violations(cm, DEFAULT_TOL);
        if !ks.is_empty() {
            reason = ModelError::ReciprocalConditionViolated(ks).to_string();
        } else if structure::check_cm_markov_condition(cm, DEFAULT_TOL) == MarkovCondition::Fails {
            reason = "markov boundary condition violated".into();
        }
    }
    Err(ModelError::InadmissibleTarget { target, reason })
}

/// Regression of `x_k` on the stacked `x_given` under covariance `c`:
/// coefficient blocks (aligned with `given`) and residual covariance.
fn regress(c: &BlockMatrix, k: usize, given: &[usize]) -> Result<(Vec<Mat>, Mat)> {
    let d = c.shape().dim();
    let ckk = c.block(k, k);
    if given.is_empty() {
        return Ok((Vec::new(), ckk));
    }
    let m = given.len();
    let mut sgg = Mat::zeros(m * d, m * d);
    let mut sgk = Mat::zeros(m * d, d);
    for (a, &ga) in given.iter().enumerate() {
        for (b, &gb) in given.iter().enumerate() {
            sgg.view_mut((a * d, b * d), (d, d)).copy_from(&c.block(ga, gb));
        }
        sgk.view_mut((a * d, 0), (d, d)).copy_from(&c.block(ga, k));
    }
    let l = linalg::cholesky(&sgg).ok_or(ModelError::IllConditioned(k))?;
    let coeff_t = linalg::cholesky_solve(&l, &sgk);
    let coeff = coeff_t.transpose();
    let resid = linalg::symmetrize(&(ckk - &coeff * &sgk));
    if !linalg::is_positive_definite(&resid) {
        return Err(ModelError::IllConditioned(k));
    }
    let blocks = (0..m)
        .map(|a| coeff.view((0, a * d), (d, d)).into_owned())
        .collect();
    Ok((blocks, resid))
}

/// The unique model of kind `kind` governing the sequence with precision
/// `information`. No class check is made here; see [`convert`].
pub fn model_from_information(kind: ModelKind, information: &BlockMatrix) -> Result<ModelSpec> {
    let shape = information.shape();
    let n = shape.horizon();
    if kind == ModelKind::Reciprocal {
        let diag = (0..=n).map(|k| information.block(k, k)).collect();
        let sup = (0..n).map(|k| -information.block(k, k + 1)).collect();
        let corner = -information.block(n, 0);
        return ReciprocalModel::new(shape, diag, sup, corner).map(Into::into);
    }
    let c = covariance_from_information(information)?;
    let mut coefficients = Vec::with_capacity(n + 1);
    let mut noise = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let given = kind.regressors(n, k).expect("white-noise kind");
        let (coeffs, resid) = regress(&c, k, &given)?;
        coefficients.push(coeffs);
        noise.push(resid);
    }
    ModelSpec::from_regressions(kind, shape, coefficients, noise)
}

/// Builds the explicitly sample-equivalent model of kind `target`.
pub fn convert(
    source: &ModelSpec,
    target: ModelKind,
    method: ConversionMethod,
) -> Result<EquivalencePair> {
    let information = source.information_matrix()?;
    check_admissible(source, &information, target)?;
    let target_model = match method {
        ConversionMethod::Generic => model_from_information(target, &information)?,
        ConversionMethod::ClosedForm => match (source, target) {
            (ModelSpec::ForwardMarkov(f), ModelKind::BackwardMarkov) => {
                markov_fwd_to_bwd_params(f)?.into()
            }
            (ModelSpec::BackwardMarkov(b), ModelKind::ForwardMarkov) => {
                markov_bwd_to_fwd_params(b)?.into()
            }
            (ModelSpec::Cm(cm), ModelKind::Reciprocal) => cml_to_reciprocal_params(cm)?.into(),
            _ => {
                return Err(ModelError::ClosedFormUnavailable {
                    source_kind: source.kind(),
                    target,
                })
            }
        },
    };
    EquivalencePair::new(source.clone(), target_model, method)
}

fn precisions(covs: &[Mat]) -> Result<Vec<Mat>> {
    covs.iter()
        .enumerate()
        .map(|(k, m)| {
            linalg::spd_inverse(m).ok_or(ModelError::NotPositiveDefinite {
                param: "noise_covs",
                index: Some(k),
            })
        })
        .collect()
}

fn invert_information(info: &Mat, k: usize) -> Result<Mat> {
    linalg::spd_inverse(&linalg::symmetrize(info)).ok_or_else(|| {
        ModelError::NotWellPosed(format!(
            "backward noise information at k={k} lost positive definiteness"
        ))
    })
}

/// Backward Markov parameters from a forward Markov model by the
/// information recursion; works for singular or zero transitions.
pub fn markov_fwd_to_bwd_params(fwd: &ForwardMarkovModel) -> Result<BackwardMarkovModel> {
    let shape = fwd.shape();
    let n = shape.horizon();
    let prec = precisions(fwd.noise_covs())?;
    let mut transitions = Vec::with_capacity(n);
    let mut covs = Vec::with_capacity(n + 1);

    let a = fwd.transition(1);
    let mut info = &prec[0] + a.transpose() * &prec[1] * a;
    for k in 1..=n {
        // info = (M^B_{k-1})⁻¹
        let cov = invert_information(&info, k - 1)?;
        let gain = &cov * fwd.transition(k).transpose() * &prec[k];
        let carry = gain.transpose() * &info * &gain;
        info = if k < n {
            let a = fwd.transition(k + 1);
            &prec[k] + a.transpose() * &prec[k + 1] * a - carry
        } else {
            &prec[n] - carry
        };
        covs.push(cov);
        transitions.push(gain);
    }
    covs.push(invert_information(&info, n)?);
    BackwardMarkovModel::new(shape, transitions, covs)
}

fn reverse_backward(bwd: &BackwardMarkovModel) -> ForwardMarkovModel {
    let n = bwd.shape().horizon();
    let transitions = (1..=n).map(|k| bwd.transition(n - k).clone()).collect();
    let covs = (0..=n).map(|k| bwd.noise_cov(n - k).clone()).collect();
    ForwardMarkovModel::new(bwd.shape(), transitions, covs).expect("reversal preserves validity")
}

fn reverse_forward(fwd: &ForwardMarkovModel) -> BackwardMarkovModel {
    let n = fwd.shape().horizon();
    let transitions = (0..n).map(|k| fwd.transition(n - k).clone()).collect();
    let covs = (0..=n).map(|k| fwd.noise_cov(n - k).clone()).collect();
    BackwardMarkovModel::new(fwd.shape(), transitions, covs).expect("reversal preserves validity")
}

fn reverse_realization(r: &NoiseRealization) -> NoiseRealization {
    let shape = r.shape();
    let d = shape.dim();
    let n = shape.horizon();
    let mut v = Vector::zeros(shape.len());
    for k in 0..=n {
        v.rows_mut((n - k) * d, d).copy_from(&r.block(k));
    }
    NoiseRealization::new(shape, v).expect("same shape")
}

/// Forward Markov parameters from a backward one, by running the forward →
/// backward recursion on the time-reversed sequence.
pub fn markov_bwd_to_fwd_params(bwd: &BackwardMarkovModel) -> Result<ForwardMarkovModel> {
    let reversed = reverse_backward(bwd);
    Ok(reverse_backward(&markov_fwd_to_bwd_params(&reversed)?))
}

fn fwd_to_bwd_noise(
    fwd: &ForwardMarkovModel,
    bwd: &BackwardMarkovModel,
    xi: &NoiseRealization,
) -> Result<NoiseRealization> {
    let shape = fwd.shape();
    let n = shape.horizon();
    let d = shape.dim();
    let prec = precisions(fwd.noise_covs())?;
    let bprec = precisions(bwd.noise_covs())?;
    let mut zeta = Vector::zeros(shape.len());
    let mut prev: Option<Vector> = None;
    for k in 0..=n {
        let mut rhs = &prec[k] * xi.block(k);
        if k < n {
            let a = fwd.transition(k + 1);
            rhs -= a.transpose() * (&prec[k + 1] * xi.block(k + 1));
        }
        if let Some(z) = &prev {
            rhs += bwd.transition(k - 1).transpose() * (&bprec[k - 1] * z);
        }
        let z = bwd.noise_cov(k) * rhs;
        zeta.rows_mut(k * d, d).copy_from(&z);
        prev = Some(z);
    }
    NoiseRealization::new(shape, zeta)
}

/// Closed-form noise map between a forward and a backward Markov model
/// (either direction).
pub fn markov_noise_map(pair: &EquivalencePair, xi: &NoiseRealization) -> Result<NoiseRealization> {
    pair.check_len(xi)?;
    match (pair.source(), pair.target()) {
        (ModelSpec::ForwardMarkov(f), ModelSpec::BackwardMarkov(b)) => fwd_to_bwd_noise(f, b, xi),
        (ModelSpec::BackwardMarkov(b), ModelSpec::ForwardMarkov(f)) => {
            let y_fwd = reverse_backward(b);
            let y_bwd = reverse_forward(f);
            let mapped = fwd_to_bwd_noise(&y_fwd, &y_bwd, &reverse_realization(xi))?;
            Ok(reverse_realization(&mapped))
        }
        _ => Err(ModelError::PairMismatch {
            source_kind: pair.source().kind(),
            target: pair.target().kind(),
            expected: "forward_markov <-> backward_markov",
        }),
    }
}

fn require_cml_forward(cml: &CmModel) -> Result<()> {
    if cml.kind() != ModelKind::CmlForward {
        return Err(ModelError::ClosedFormUnavailable {
            source_kind: cml.kind(),
            target: ModelKind::Reciprocal,
        });
    }
    Ok(())
}

/// Reciprocal parameters from a forward CM_L model of a reciprocal sequence.
pub fn cml_to_reciprocal_params(cml: &CmModel) -> Result<ReciprocalModel> {
    require_cml_forward(cml)?;
    let ks = structure::reciprocal_condition_violations(cml, DEFAULT_TOL);
    if !ks.is_empty() {
        return Err(ModelError::ReciprocalConditionViolated(ks));
    }
    let shape = cml.shape();
    let n = shape.horizon();
    let p = precisions(cml.noise_covs())?;
    let g = |k: usize| cml.transition(k).expect("transition in range");
    let h = |k: usize| cml.coupling(k).expect("coupling in range");

    let mut diag = Vec::with_capacity(n + 1);
    for k in 0..=(n - 2) {
        diag.push(&p[k] + g(k + 1).transpose() * &p[k + 1] * g(k + 1));
    }
    diag.push(p[n - 1].clone());
    let mut last = p[n].clone();
    for (k, pk) in p.iter().enumerate().take(n) {
        last += h(k).transpose() * pk * h(k);
    }
    diag.push(last);

    let mut sup: Vec<Mat> = (0..=(n - 2))
        .map(|k| g(k + 1).transpose() * &p[k + 1])
        .collect();
    sup.push(&p[n - 1] * h(n - 1));

    let sub0 = &p[0] * h(0) - g(1).transpose() * &p[1] * h(1);
    ReciprocalModel::new(shape, diag, sup, sub0.transpose())
}

/// Reciprocal noise `e^R = T1' P1⁻¹ ξ` for a forward CM_L source.
pub fn cml_to_reciprocal_noise_map(
    pair: &EquivalencePair,
    xi: &NoiseRealization,
) -> Result<NoiseRealization> {
    pair.check_len(xi)?;
    let cml = match (pair.source(), pair.target()) {
        (ModelSpec::Cm(cml), ModelSpec::Reciprocal(_)) if cml.kind() == ModelKind::CmlForward => cml,
        _ => {
            return Err(ModelError::PairMismatch {
                source_kind: pair.source().kind(),
                target: pair.target().kind(),
                expected: "cml_forward -> reciprocal",
            })
        }
    };
    let shape = cml.shape();
    let n = shape.horizon();
    let d = shape.dim();
    let p = precisions(cml.noise_covs())?;
    let weighted: Vec<Vector> = (0..=n).map(|k| &p[k] * xi.block(k)).collect();
    let mut out = Vector::zeros(shape.len());
    for k in 0..=(n - 2) {
        let g = cml.transition(k + 1).expect("transition in range");
        let e = &weighted[k] - g.transpose() * &weighted[k + 1];
        out.rows_mut(k * d, d).copy_from(&e);
    }
    out.rows_mut((n - 1) * d, d).copy_from(&weighted[n - 1]);
    let mut last = weighted[n].clone();
    for (k, w) in weighted.iter().enumerate().take(n) {
        last -= cml.coupling(k).expect("coupling in range").transpose() * w;
    }
    out.rows_mut(n * d, d).copy_from(&last);
    NoiseRealization::new(shape, out)
}
