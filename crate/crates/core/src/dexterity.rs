//! Jacobian-based dexterity metrics: manipulability, kinematic isotropy, and
//! joint-limit-weighted kinematic isotropy (JLWKI).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{JointVector, KinematicChain};

/// How the joint-limit penalty exponent is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitPenaltyForm {
    /// Distance to the nearest limit, clipped to the joint range.
    #[default]
    NearestLimit,
    /// `kappa = (q_r - |q_r - q + q_min|) / (zeta q_r) + 1` evaluated as written,
    /// without clipping. Identical to `NearestLimit` inside the joint range.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DexterityParams {
    /// Maximum penalty: the weight at a joint limit is `1 - eta`.
    pub eta: f64,
    /// Penalty shape; smaller values confine the penalty closer to the limits.
    pub zeta: f64,
    pub form: LimitPenaltyForm,
}

impl Default for DexterityParams {
    fn default() -> Self {
        DexterityParams {
            eta: 0.5,
            zeta: 1.0 / 20.0,
            form: LimitPenaltyForm::NearestLimit,
        }
    }
}

impl DexterityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Invalid(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.zeta > 0.0) {
            return Err(Error::Invalid(format!("zeta must be positive, got {}", self.zeta)));
        }
        Ok(())
    }
}

/// Eigenvalues below this fraction of the largest are rounding noise.
const RANK_TOLERANCE: f64 = 1e-12;

/// Eigenvalues of `f f^T`, taken as squared singular values of `f` so small
/// ones keep their relative accuracy. Values that are numerically zero
/// relative to the largest are set to exactly zero.
fn gram_eigenvalues(f: &DMatrix<f64>) -> DVector<f64> {
    let sv = f.singular_values();
    let mut eig = DVector::zeros(f.nrows());
    for (e, s) in eig.iter_mut().zip(sv.iter()) {
        *e = s * s;
    }
    let floor = eig.max() * RANK_TOLERANCE;
    eig.map(|v| if v > floor { v } else { 0.0 })
}

/// Geometric over arithmetic mean of `a` eigenvalues, in `[0, 1]`.
fn isotropy_of(eig: &DVector<f64>, a: usize) -> f64 {
    let a = a as f64;
    let trace: f64 = eig.sum();
    if trace <= 0.0 || eig.iter().any(|&v| v <= 0.0) {
        return 0.0;
    }
    let log_det: f64 = eig.iter().map(|v| v.ln()).sum();
    let value = (log_det / a).exp() / (trace / a);
    value.clamp(0.0, 1.0)
}

/// `sqrt(det(J J^T))`.
pub fn manipulability(jac: &DMatrix<f64>) -> f64 {
    let eig = gram_eigenvalues(jac);
    eig.iter().product::<f64>().sqrt()
}

/// `det(J J^T)^(1/a) / (trace(J J^T) / a)`; zero for a zero trace.
pub fn kinematic_isotropy(jac: &DMatrix<f64>, order: usize) -> f64 {
    isotropy_of(&gram_eigenvalues(jac), order)
}

/// Diagonal of the joint-limit weighting matrix, `t_i = 1 - eta^kappa`.
/// Continuous joints get weight 1.
pub fn joint_limit_weights(q: &JointVector, chain: &KinematicChain, params: &DexterityParams) -> DVector<f64> {
    DVector::from_iterator(
        chain.dof(),
        chain.joints.iter().zip(q.as_slice()).map(|(j, &qi)| match j.limits {
            Some([lo, hi]) if j.is_bounded() => limit_weight(qi, lo, hi, params),
            _ => 1.0,
        }),
    )
}

pub fn limit_weight(q: f64, lo: f64, hi: f64, params: &DexterityParams) -> f64 {
    let half_range = 0.5 * (hi - lo);
    let kappa = match params.form {
        LimitPenaltyForm::Literal => {
            (half_range - (half_range - (q - lo)).abs()) / (params.zeta * half_range) + 1.0
        }
        LimitPenaltyForm::NearestLimit => {
            let d = (q - lo).min(hi - q).clamp(0.0, half_range);
            d / (params.zeta * half_range) + 1.0
        }
    };
    1.0 - params.eta.powf(kappa)
}

/// Kinematic isotropy of `J T J^T` for diagonal weights `t`.
pub fn jlwki(jac: &DMatrix<f64>, weights: &DVector<f64>, order: usize) -> f64 {
    // J T J^T = (J T^(1/2)) (J T^(1/2))^T.
    let factor = DMatrix::from_fn(jac.nrows(), jac.ncols(), |r, c| jac[(r, c)] * weights[c].max(0.0).sqrt());
    isotropy_of(&gram_eigenvalues(&factor), order)
}

/// JLWKI of `chain` at `q`, using the chain's task rows and order.
pub fn jlwki_at(chain: &KinematicChain, q: &JointVector, params: &DexterityParams) -> Result<f64> {
    let jac = chain.jacobian(q)?;
    let t = joint_limit_weights(q, chain, params);
    Ok(jlwki(&jac, &t, chain.order()))
}
