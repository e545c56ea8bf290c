//! Finite-difference verification of analytic gradients.
//!
//! A scalar-valued function of a flat parameter vector is differentiated two
//! ways: once through [`Graph::backward`](super::Graph::backward) inside the
//! caller-supplied closure, once by central differences here. The closure is
//! re-invoked with perturbed copies of the parameters, so it must rebuild its
//! graph from the slice it is given each call.

use alloc::vec::Vec;

/// Central-difference step. Roughly cube-root of f64 machine epsilon,
/// balancing truncation against round-off for O(1) inputs.
pub const FD_STEP: f64 = 1e-5;

/// Report for one parameter coordinate that failed the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Symmetric relative error with an absolute floor so near-zero pairs
/// compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let denom = (crate::fmath::abs(a) + crate::fmath::abs(b)).max(1e-6);
    crate::fmath::abs(a - b) / denom
}

/// Compare `analytic` (already computed by backward) against central
/// differences of `f` at `params`. Returns every coordinate whose symmetric
/// relative error exceeds `tol`.
pub fn check(
    params: &[f64],
    analytic: &[f64],
    tol: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Vec<GradMismatch> {
    assert_eq!(params.len(), analytic.len());
    let mut scratch = params.to_vec();
    let mut failures = Vec::new();
    for i in 0..params.len() {
        let saved = scratch[i];
        scratch[i] = saved + FD_STEP;
        let up = f(&scratch);
        scratch[i] = saved - FD_STEP;
        let down = f(&scratch);
        scratch[i] = saved;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let e = rel_err(analytic[i], numeric);
        if e > tol {
            failures.push(GradMismatch {
                index: i,
                analytic: analytic[i],
                numeric,
                rel_err: e,
            });
        }
    }
    failures
}
