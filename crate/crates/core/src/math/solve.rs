//! Matrix-free inverse-HVP solvers.
//!
//! Both solvers consume an [`HvpOracle`], check every intermediate for
//! NaN/Inf, and report divergence through [`SolveStatus::Diverged`] instead of
//! failing, so callers can record the step as diverged and keep going.

use serde::{Deserialize, Serialize};

use super::param::{axpy, dot, norm};
use crate::error::{Error, Result};

/// Matrix-free access to `(H + λI)·v` for some loss Hessian `H`.
pub trait HvpOracle {
    fn dim(&self) -> usize;

    /// Returns `(H + λI)·v`.
    fn apply(&self, v: &[f64]) -> Vec<f64>;
}

impl<T: HvpOracle + ?Sized> HvpOracle for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (**self).apply(v)
    }
}

/// Oracle backed by a closure.
pub struct FnOracle<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnOracle<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> HvpOracle for FnOracle<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (self.f)(v)
    }
}

/// Dense row-major symmetric matrix plus damping. Handy for small systems.
#[derive(Debug, Clone)]
pub struct DenseOracle {
    n: usize,
    data: Vec<f64>,
    damping: f64,
}

impl DenseOracle {
    pub fn new(n: usize, data: Vec<f64>, damping: f64) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::contract(format!(
                "dense oracle needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        Ok(Self { n, data, damping })
    }

    pub fn diagonal(diag: &[f64], damping: f64) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        Self { n, data, damping }
    }
}

impl HvpOracle for DenseOracle {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| dot(&self.data[i * self.n..(i + 1) * self.n], v) + self.damping * v[i])
            .collect()
    }
}

/// Adds `damping·v` on top of another oracle.
pub struct Damped<O> {
    pub inner: O,
    pub damping: f64,
}

impl<O: HvpOracle> HvpOracle for Damped<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = self.inner.apply(v);
        axpy(self.damping, v, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Ran out of iterations, or CG hit non-positive curvature.
    MaxIters,
    /// A non-finite value appeared; the solution is the last finite iterate.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub status: SolveStatus,
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn check_dims(oracle: &dyn HvpOracle, rhs: &[f64]) -> Result<()> {
    if oracle.dim() != rhs.len() {
        return Err(Error::contract(format!(
            "oracle dimension {} does not match rhs length {}",
            oracle.dim(),
            rhs.len()
        )));
    }
    Ok(())
}

/// Conjugate-gradient solve of `(H + λI)·x = rhs`, starting from zero.
///
/// The oracle is called exactly once per iteration, so a fault injected at
/// call `k` aborts iteration `k` and the iterate from iteration `k - 1` is
/// returned.
pub fn cg_solve(
    oracle: &dyn HvpOracle,
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<SolveReport> {
    check_dims(oracle, rhs)?;
    if !all_finite(rhs) {
        return Err(Error::contract("cg_solve rhs contains non-finite values"));
    }
    if !(tol > 0.0) || max_iters == 0 {
        return Err(Error::contract("cg_solve needs tol > 0 and max_iters >= 1"));
    }

    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);
    let threshold = tol * norm(rhs);

    if rs.sqrt() <= threshold {
        return Ok(SolveReport {
            solution: x,
            iterations: 0,
            residual_norm: rs.sqrt(),
            status: SolveStatus::Converged,
        });
    }

    let diverged = |x: Vec<f64>, iterations: usize, rs: f64| SolveReport {
        solution: x,
        iterations,
        residual_norm: rs.sqrt(),
        status: SolveStatus::Diverged,
    };

    for it in 1..=max_iters {
        let ap = oracle.apply(&p);
        if ap.len() != n {
            return Err(Error::contract("oracle returned a vector of the wrong length"));
        }
        if !all_finite(&ap) {
            return Ok(diverged(x, it - 1, rs));
        }
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Ok(diverged(x, it - 1, rs));
        }
        if pap <= 0.0 {
            // negative curvature along p: stop with the current iterate
            return Ok(SolveReport {
                solution: x,
                iterations: it - 1,
                residual_norm: rs.sqrt(),
                status: SolveStatus::MaxIters,
            });
        }
        let alpha = rs / pap;
        let mut x_next = x.clone();
        axpy(alpha, &p, &mut x_next);
        let mut r_next = r.clone();
        axpy(-alpha, &ap, &mut r_next);
        let rs_next = dot(&r_next, &r_next);
        if !all_finite(&x_next) || !rs_next.is_finite() {
            return Ok(diverged(x, it - 1, rs));
        }
        x = x_next;
        r = r_next;
        if rs_next.sqrt() <= threshold {
            return Ok(SolveReport {
                solution: x,
                iterations: it,
                residual_norm: rs_next.sqrt(),
                status: SolveStatus::Converged,
            });
        }
        let beta = rs_next / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rs = rs_next;
    }

    Ok(SolveReport {
        solution: x,
        iterations: max_iters,
        residual_norm: rs.sqrt(),
        status: SolveStatus::MaxIters,
    })
}

/// Relative increment below which a Neumann expansion counts as converged.
pub const NEUMANN_TOL: f64 = 1e-5;

/// Truncated Neumann-series estimate of `(H + λI)⁻¹·rhs`.
///
/// Iterates `u₀ = rhs`, `uₖ₊₁ = rhs + (I − scale·(H + λI))·uₖ` and returns
/// `scale·u_iters`. Here `oracle` supplies `H·v` and `damping` is `λ`. The
/// series converges only when the spectral radius of `I − scale·(H + λI)` is
/// below one; otherwise the iterate grows until it overflows and the report
/// comes back diverged.
pub fn neumann_inverse_hvp(
    oracle: &dyn HvpOracle,
    rhs: &[f64],
    scale: f64,
    damping: f64,
    iters: usize,
) -> Result<SolveReport> {
    check_dims(oracle, rhs)?;
    if !(scale > 0.0) || iters == 0 {
        return Err(Error::contract("neumann needs scale > 0 and iters >= 1"));
    }
    let n = rhs.len();
    let mut u = rhs.to_vec();
    let mut increment = f64::INFINITY;

    let diverged = |u: &[f64], iterations: usize| SolveReport {
        solution: u.iter().map(|v| v * scale).collect(),
        iterations,
        residual_norm: f64::INFINITY,
        status: SolveStatus::Diverged,
    };

    for it in 1..=iters {
        let hu = oracle.apply(&u);
        if hu.len() != n {
            return Err(Error::contract("oracle returned a vector of the wrong length"));
        }
        if !all_finite(&hu) {
            return Ok(diverged(&u, it - 1));
        }
        let next: Vec<f64> = (0..n)
            .map(|i| rhs[i] + u[i] - scale * (hu[i] + damping * u[i]))
            .collect();
        if !all_finite(&next) {
            return Ok(diverged(&u, it - 1));
        }
        increment = next
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        u = next;
    }

    let solution: Vec<f64> = u.iter().map(|v| v * scale).collect();
    if !all_finite(&solution) {
        return Ok(diverged(&u, iters));
    }
    let status = if increment <= NEUMANN_TOL * norm(&u).max(f64::MIN_POSITIVE) {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIters
    };
    // residual of the damped system at the returned solution
    let mut residual = oracle.apply(&solution);
    axpy(damping, &solution, &mut residual);
    axpy(-1.0, rhs, &mut residual);
    let residual_norm = norm(&residual);
    if !residual_norm.is_finite() {
        return Ok(diverged(&u, iters));
    }
    Ok(SolveReport {
        solution,
        iterations: iters,
        residual_norm,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn cg_identity_one_iteration() {
        let oracle = DenseOracle::diagonal(&[1.0, 1.0, 1.0], 0.0);
        let rep = cg_solve(&oracle, &[1.0, 2.0, 3.0], 1e-5, 100).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        assert_eq!(rep.iterations, 1);
        for (x, e) in rep.solution.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_diag_two_four() {
        let oracle = DenseOracle::diagonal(&[2.0, 4.0], 0.0);
        let rep = cg_solve(&oracle, &[2.0, 4.0], 1e-10, 100).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        assert!((rep.solution[0] - 1.0).abs() < 1e-10);
        assert!((rep.solution[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cg_zero_rhs_is_trivially_converged() {
        let oracle = DenseOracle::diagonal(&[2.0, 4.0], 0.0);
        let rep = cg_solve(&oracle, &[0.0, 0.0], 1e-5, 10).unwrap();
        assert_eq!(rep.iterations, 0);
        assert_eq!(rep.solution, vec![0.0, 0.0]);
    }

    #[test]
    fn cg_nan_at_third_call_returns_second_iterate() {
        let diag = [1.0, 2.0, 3.0, 4.0, 5.0];
        let base = DenseOracle::diagonal(&diag, 0.0);
        let rhs = [1.0, 1.0, 1.0, 1.0, 1.0];
        // reference: two clean iterations
        let two = cg_solve(&base, &rhs, 1e-14, 2).unwrap();
        assert_eq!(two.status, SolveStatus::MaxIters);

        let calls = Cell::new(0usize);
        let faulty = FnOracle::new(5, |v: &[f64]| {
            calls.set(calls.get() + 1);
            let mut out = base.apply(v);
            if calls.get() == 3 {
                out[0] = f64::NAN;
            }
            out
        });
        let rep = cg_solve(&faulty, &rhs, 1e-14, 100).unwrap();
        assert_eq!(rep.status, SolveStatus::Diverged);
        assert_eq!(rep.iterations, 2);
        assert_eq!(rep.solution, two.solution);
    }

    #[test]
    fn cg_rejects_dimension_mismatch() {
        let oracle = DenseOracle::diagonal(&[1.0, 1.0], 0.0);
        assert!(matches!(
            cg_solve(&oracle, &[1.0, 2.0, 3.0], 1e-5, 10),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn cg_negative_curvature_stops() {
        let oracle = DenseOracle::diagonal(&[-1.0, -1.0], 0.0);
        let rep = cg_solve(&oracle, &[1.0, 0.0], 1e-5, 10).unwrap();
        assert_eq!(rep.status, SolveStatus::MaxIters);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn neumann_identity_returns_rhs() {
        let zero = DenseOracle::diagonal(&[0.0, 0.0, 0.0], 0.0);
        for iters in [1, 5, 40] {
            let rep = neumann_inverse_hvp(&zero, &[1.0, -2.0, 0.5], 1.0, 1.0, iters).unwrap();
            assert_eq!(rep.solution, vec![1.0, -2.0, 0.5]);
            assert_eq!(rep.status, SolveStatus::Converged);
        }
    }

    #[test]
    fn neumann_half_diag_geometric() {
        let half = DenseOracle::diagonal(&[0.5, 0.5], 0.0);
        let rep = neumann_inverse_hvp(&half, &[1.0, 3.0], 1.0, 0.0, 30).unwrap();
        assert!((rep.solution[0] - 2.0).abs() < 1e-3);
        assert!((rep.solution[1] - 6.0).abs() < 1e-3);
    }

    #[test]
    fn neumann_spectral_radius_above_one_diverges() {
        let three = DenseOracle::diagonal(&[3.0], 0.0);
        let rep = neumann_inverse_hvp(&three, &[1.0], 1.0, 0.0, 2_000).unwrap();
        assert_eq!(rep.status, SolveStatus::Diverged);
        // |1 - 3| = 2 doubles the iterate; f64 overflows near 2^1024
        assert!(rep.iterations < 1_100);
        assert!(rep.solution.iter().all(|v| v.is_finite()));
    }
}
