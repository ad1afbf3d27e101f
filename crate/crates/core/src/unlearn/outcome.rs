use serde::{Deserialize, Serialize};

use crate::math::{norm, ParamVector, SolveReport, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Ok,
    Diverged,
    NotApplicable,
}

impl StepStatus {
    /// Table-cell label.
    pub fn label(self) -> &'static str {
        match self {
            StepStatus::Ok => "ok",
            StepStatus::Diverged => "div.",
            StepStatus::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub residual_norm: f64,
    pub status: SolveStatus,
}

impl From<&SolveReport> for SolverSummary {
    fn from(r: &SolveReport) -> Self {
        Self {
            iterations: r.iterations,
            residual_norm: r.residual_norm,
            status: r.status,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// ℓ₂ distance between the parameters before and after the step.
    pub update_norm: f64,
    pub clipped: bool,
    pub solver: Option<SolverSummary>,
    /// Coordinates reset to their initial values (Kookmin).
    pub resets: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub params_after: ParamVector,
    pub status: StepStatus,
    pub wall_clock: f64,
    pub diagnostics: Diagnostics,
}

impl StepOutcome {
    pub fn unchanged(params: &ParamVector, status: StepStatus) -> Self {
        Self {
            params_after: params.clone(),
            status,
            wall_clock: 0.0,
            diagnostics: Diagnostics::default(),
        }
    }

    /// Finalises a step: a non-finite result turns into a diverged outcome
    /// that keeps `before`.
    pub(crate) fn finish(before: &ParamVector, after: ParamVector, mut diagnostics: Diagnostics) -> Self {
        if !after.is_finite() {
            return Self {
                diagnostics: Diagnostics {
                    update_norm: 0.0,
                    ..diagnostics
                },
                ..Self::unchanged(before, StepStatus::Diverged)
            };
        }
        let delta: Vec<f64> = after.values().iter().zip(before.values()).map(|(a, b)| a - b).collect();
        diagnostics.update_norm = norm(&delta);
        Self {
            params_after: after,
            status: StepStatus::Ok,
            wall_clock: 0.0,
            diagnostics,
        }
    }

    pub(crate) fn diverged(before: &ParamVector, solver: Option<&SolveReport>) -> Self {
        let mut out = Self::unchanged(before, StepStatus::Diverged);
        out.diagnostics.solver = solver.map(SolverSummary::from);
        out
    }
}
