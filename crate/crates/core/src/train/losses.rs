use crate::model::{Predictions, Variant};
use crate::tensor::{Scalar, Tape, TensorError, Var};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the BCE.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("{variant} model produced coarse predictions")]
    UnexpectedCoarse { variant: Variant },
    #[error("{variant} model needs coarse predictions")]
    MissingCoarse { variant: Variant },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which task losses enter the optimized total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    #[default]
    Joint,
    AecOnly,
    ArpOnly,
}

/// Mean binary cross entropy over all elements.
pub fn bce<T: Scalar>(tape: &Tape<T>, p: Var, y: Var) -> Result<Var, TensorError> {
    if tape.shape(p) != tape.shape(y) {
        return Err(TensorError::ShapeMismatch {
            op: "bce",
            lhs: tape.shape(p),
            rhs: tape.shape(y),
        });
    }
    let pc = tape.clamp(p, P_CLAMP, 1.0 - P_CLAMP);
    let log_p = tape.log(pc);
    let log_q = tape.log(tape.add_scalar(tape.scale(pc, -1.0), 1.0));
    let not_y = tape.add_scalar(tape.scale(y, -1.0), 1.0);
    let ll = tape.add(tape.mul(y, log_p)?, tape.mul(not_y, log_q)?)?;
    Ok(tape.scale(tape.mean_all(ll), -1.0))
}

pub fn mse<T: Scalar>(tape: &Tape<T>, p: Var, y: Var) -> Result<Var, TensorError> {
    if tape.shape(p) != tape.shape(y) {
        return Err(TensorError::ShapeMismatch {
            op: "mse",
            lhs: tape.shape(p),
            rhs: tape.shape(y),
        });
    }
    let d = tape.sub(p, y)?;
    Ok(tape.mean_all(tape.mul(d, d)?))
}

/// Component losses and the optimized total.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub fae: f64,
    pub cae: Option<f64>,
    pub ar: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Total for the given parts, summed in the same order as on the tape.
    pub fn compose(
        variant: Variant,
        objective: Objective,
        fae: f64,
        cae: Option<f64>,
        ar: f64,
    ) -> f64 {
        match objective {
            Objective::AecOnly => fae,
            Objective::ArpOnly => ar,
            Objective::Joint => match (variant, cae) {
                (Variant::FcarSl, Some(c)) => (fae + ar) + c,
                _ => fae + ar,
            },
        }
    }
}

/// Targets on the tape: `(B, 24)`, `(B, 7)`, `(B, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct Targets {
    pub fae: Var,
    pub cae: Var,
    pub ar: Var,
}

/// Builds every component and the variant's total; returns `(total, parts)`.
pub fn total_loss<T: Scalar>(
    tape: &Tape<T>,
    variant: Variant,
    objective: Objective,
    preds: &Predictions,
    y: &Targets,
) -> Result<(Var, LossBreakdown), LossError> {
    match (variant.has_coarse(), preds.cae) {
        (false, Some(_)) => return Err(LossError::UnexpectedCoarse { variant }),
        (true, None) => return Err(LossError::MissingCoarse { variant }),
        _ => {}
    }
    let l_fae = bce(tape, preds.fae, y.fae)?;
    let l_ar = mse(tape, preds.ar, y.ar)?;
    let l_cae = preds.cae.map(|c| bce(tape, c, y.cae)).transpose()?;
    let total = match objective {
        Objective::AecOnly => l_fae,
        Objective::ArpOnly => l_ar,
        Objective::Joint => {
            let base = tape.add(l_fae, l_ar)?;
            match (variant, l_cae) {
                (Variant::FcarSl, Some(c)) => tape.add(base, c)?,
                _ => base,
            }
        }
    };
    let val = |v: Var| tape.value(v).item().as_f64();
    Ok((
        total,
        LossBreakdown {
            fae: val(l_fae),
            cae: l_cae.map(val),
            ar: val(l_ar),
            total: val(total),
        },
    ))
}
