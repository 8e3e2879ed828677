//! Central finite-difference gradient verification. The numeric side only
//! re-evaluates the forward map, so it stays independent of the analytic
//! backward path it is checking.

/// Outcome of one gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

/// Compare `analytic` against central finite differences of the scalar
/// function `f` at `x` with step `h`. Relative error per component is
/// `|a - n| / max(|a|, |n|, 1e-3)`; the floor keeps round-off noise in
/// near-zero components from dominating.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    h: f64,
    tolerance: f64,
) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut max_rel_err: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
        max_rel_err = max_rel_err.max(rel);
    }
    GradCheckReport {
        max_rel_err,
        tolerance,
    }
}
