//! Iterated smoothing of grid samples.
//!
//! Plain Bernstein approximation of a `C^2` function converges like
//! `1/n`. Iterating the sampling operator `B` through the combination
//! `I - (I - B)^r` lifts the rate to `n^(-s/2)` for `C^s` targets with
//! `r = ceil(s/2)` rounds. Because that combination factors as `B`
//! times a polynomial in `B`, the iterated approximant is itself a
//! Bernstein polynomial; its coefficients are the values of a modified
//! sample function on the grid, computed here without ever leaving
//! grid tensors.

use crate::bernstein::{eval_coeff_combination, grid_operator_apply, EvalPoint, GridSamples};
use crate::error::{Error, Result};
use crate::tensor::NdTensor;

/// Smoothness class of a target function together with the headroom
/// the one-bit quantizer needs: samples are assumed scaled so that
/// `|f|_inf <= mu < 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothnessSpec {
    s: u32,
    mu: f64,
    c2_norm: f64,
}

impl SmoothnessSpec {
    pub fn new(s: u32, mu: f64, c2_norm: f64) -> Result<Self> {
        if s < 1 {
            return Err(Error::precondition("smoothness order s must be at least 1"));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::precondition(format!(
                "scale bound mu must lie in (0, 1), got {mu}"
            )));
        }
        if !(c2_norm.is_finite() && c2_norm >= 0.0) {
            return Err(Error::precondition(format!(
                "c2 norm must be a finite nonnegative number, got {c2_norm}"
            )));
        }
        Ok(SmoothnessSpec { s, mu, c2_norm })
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn c2_norm(&self) -> f64 {
        self.c2_norm
    }

    /// Number of smoothing rounds, `ceil(s/2)`.
    pub fn iterations(&self) -> usize {
        (self.s as usize).div_ceil(2)
    }

    /// Headroom between the scaled samples and the quantizer's unit
    /// ceiling, split evenly with the smoothing perturbation.
    pub fn margin(&self) -> f64 {
        (1.0 - self.mu) / 2.0
    }

    /// Smallest degree at which the smoothed coefficients provably
    /// stay below 1 in absolute value for a `C^2` target in dimension
    /// `d`, so the quantizer's input contract holds.
    pub fn min_degree(&self, d: usize) -> usize {
        let raw = self.s as f64 * (d * d) as f64 * self.c2_norm / (2.0 * (1.0 - self.mu));
        (raw.ceil() as usize).max(1)
    }
}

/// Bernstein coefficients of the iterated approximant, validated to
/// lie strictly inside the quantizer's input range.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffTensor {
    n: usize,
    values: NdTensor,
    inf_norm: f64,
}

impl CoeffTensor {
    /// Wraps an existing tensor, enforcing the shape and the quantizer
    /// input contract.
    pub fn new(n: usize, values: NdTensor) -> Result<Self> {
        if values.shape().iter().any(|&s| s != n + 1) {
            return Err(Error::shape(format!(
                "coefficient shape {:?} does not match degree {}",
                values.shape(),
                n
            )));
        }
        let inf_norm = values.inf_norm();
        if inf_norm >= 1.0 {
            return Err(Error::CoefficientOverflow { inf_norm });
        }
        Ok(CoeffTensor {
            n,
            values,
            inf_norm,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.values.ndim()
    }

    pub fn values(&self) -> &NdTensor {
        &self.values
    }

    pub fn into_values(self) -> NdTensor {
        self.values
    }

    pub fn inf_norm(&self) -> f64 {
        self.inf_norm
    }
}

/// Grid values of the modified sample function after `r` smoothing
/// rounds, via the alternating-binomial expansion
/// `sum_{j=1..r} (-1)^(j-1) C(r,j) B^(j-1) f`.
///
/// Applying the sampling operator to the result reproduces
/// [`iterated_approx_grid`]; round 1 returns the samples unchanged.
pub fn iterated_coeff_grid(samples: &NdTensor, n: usize, r: usize) -> Result<NdTensor> {
    check_rounds(r)?;
    let mut acc = NdTensor::zeros(samples.shape());
    let mut power = samples.clone();
    let mut binom = r as f64;
    for j in 1..=r {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        acc.add_scaled(&power, sign * binom)?;
        if j < r {
            power = grid_operator_apply(&power, n)?;
            binom *= (r - j) as f64 / (j + 1) as f64;
        }
    }
    Ok(acc)
}

/// Same modified sample function, computed through the factorization
/// `B^(r-1) f + sum_{j=0..r-2} (B^j + (I-B)^j)(f - Bf)`. Kept as an
/// independent route for cross-checking; both routes agree to
/// rounding error.
pub fn iterated_coeff_grid_residual(samples: &NdTensor, n: usize, r: usize) -> Result<NdTensor> {
    check_rounds(r)?;
    if r == 1 {
        return Ok(samples.clone());
    }
    let bf = grid_operator_apply(samples, n)?;
    let mut g = samples.clone();
    g.add_scaled(&bf, -1.0)?;

    let mut acc = samples.clone();
    for _ in 0..r - 1 {
        acc = grid_operator_apply(&acc, n)?;
    }
    let mut b_pow = g.clone();
    let mut res_pow = g.clone();
    for j in 0..=r - 2 {
        acc.add_scaled(&b_pow, 1.0)?;
        acc.add_scaled(&res_pow, 1.0)?;
        if j < r - 2 {
            b_pow = grid_operator_apply(&b_pow, n)?;
            let b_res = grid_operator_apply(&res_pow, n)?;
            res_pow.add_scaled(&b_res, -1.0)?;
        }
    }
    Ok(acc)
}

/// Grid values of the iterated approximant itself,
/// `f - (I - B)^r f`. Equals the sampling operator applied to
/// [`iterated_coeff_grid`].
pub fn iterated_approx_grid(samples: &NdTensor, n: usize, r: usize) -> Result<NdTensor> {
    check_rounds(r)?;
    let mut res = samples.clone();
    for _ in 0..r {
        let b = grid_operator_apply(&res, n)?;
        res.add_scaled(&b, -1.0)?;
    }
    let mut out = samples.clone();
    out.add_scaled(&res, -1.0)?;
    Ok(out)
}

/// The bounded factor `P` in the factorization of the smoothing
/// combination, `(1 - (1-x)^r) / x = x^(r-1) + (1-x) P(x)`. Its
/// maximum over `[0, 1]` is `P(0) = r`, which is where the coefficient
/// growth bound `|f|_grid + r |f - Bf|_grid` comes from.
pub fn smoothing_residual_poly(r: usize, t: f64) -> Result<f64> {
    if r < 2 {
        return Err(Error::precondition(
            "residual factor is defined for r >= 2 (r = 1 smooths nothing)",
        ));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("argument {t} is outside [0, 1]")));
    }
    let mut total = 0.0;
    let mut tp = 1.0;
    let mut up = 1.0;
    let u = 1.0 - t;
    for _ in 0..=r - 2 {
        total += tp + up;
        tp *= t;
        up *= u;
    }
    Ok(total)
}

/// Computes the coefficients of the iterated approximant for a target
/// of the given smoothness class and enforces the quantizer's input
/// contract `|a|_inf < 1`.
pub fn iterated_coeffs(samples: &GridSamples, spec: &SmoothnessSpec) -> Result<CoeffTensor> {
    let values = iterated_coeff_grid(samples.values(), samples.n, spec.iterations())?;
    let inf_norm = values.inf_norm();
    if inf_norm >= 1.0 {
        return Err(Error::CoefficientOverflow { inf_norm });
    }
    Ok(CoeffTensor {
        n: samples.n,
        values,
        inf_norm,
    })
}

/// Evaluates the Bernstein combination `sum_k a_k p_{n,k}(x)`.
pub fn eval_combination(a: &CoeffTensor, x: &EvalPoint) -> Result<f64> {
    eval_coeff_combination(&a.values, a.n, x.coords())
}

fn check_rounds(r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::precondition("smoothing rounds r must be at least 1"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::eval_coeff_on_grid;

    fn sample_fn(f: impl Fn(&[f64]) -> f64, n: usize, d: usize) -> NdTensor {
        GridSamples::sample(f, n, d).unwrap().into_tensor()
    }

    #[test]
    fn round_one_returns_samples() {
        let s = sample_fn(|x| (x[0] * 2.7).sin(), 6, 1);
        let out = iterated_coeff_grid(&s, 6, 1).unwrap();
        assert_eq!(out, s);
        let via = iterated_coeff_grid_residual(&s, 6, 1).unwrap();
        assert_eq!(via, s);
    }

    #[test]
    fn both_routes_agree() {
        for d in [1usize, 2] {
            let n = 4;
            let s = sample_fn(|x| x.iter().map(|v| v * v).product::<f64>() * 0.8, n, d);
            for r in [2usize, 3, 4] {
                let a = iterated_coeff_grid(&s, n, r).unwrap();
                let b = iterated_coeff_grid_residual(&s, n, r).unwrap();
                for (u, v) in a.data().iter().zip(b.data()) {
                    assert!((u - v).abs() < 1e-12, "d={d} r={r}: {u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn approx_grid_is_operator_applied_to_coeffs() {
        let n = 8;
        let s = sample_fn(|x| 0.5 * (3.1 * x[0]).cos(), n, 1);
        for r in [1usize, 2, 3] {
            let coeffs = iterated_coeff_grid(&s, n, r).unwrap();
            let lhs = iterated_approx_grid(&s, n, r).unwrap();
            let rhs = grid_operator_apply(&coeffs, n).unwrap();
            for (u, v) in lhs.data().iter().zip(rhs.data()) {
                assert!((u - v).abs() < 1e-12, "r={r}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn constants_are_fixed_points() {
        let s = sample_fn(|_| 0.37, 5, 2);
        for r in [1usize, 2, 4] {
            let out = iterated_coeff_grid(&s, 5, r).unwrap();
            for &v in out.data() {
                assert!((v - 0.37).abs() < 1e-13, "r={r}: {v}");
            }
        }
    }

    #[test]
    fn linear_functions_are_fixed_points() {
        let s = sample_fn(|x| 0.2 + 0.3 * x[0] - 0.1 * x[1], 4, 2);
        let out = iterated_coeff_grid(&s, 4, 3).unwrap();
        for (u, v) in out.data().iter().zip(s.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_raises_polynomial_reproduction() {
        // Two rounds reproduce x^2 exactly up to the quantizer grid:
        // the approximant's values at the grid equal the samples.
        let n = 4;
        let s = sample_fn(|x| x[0] * x[0], n, 1);
        let approx = iterated_approx_grid(&s, n, 2).unwrap();
        // I - (I-B)^2 = 2B - B^2 applied to x^2 gives back x^2 plus a
        // term of order 1/n^2; at n = 4 the residual on the grid is
        // x(1-x)/n^2 scaled, still visibly smaller than the r = 1 gap.
        let plain = grid_operator_apply(&s, n).unwrap();
        let gap_r1: f64 = s
            .data()
            .iter()
            .zip(plain.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let gap_r2: f64 = s
            .data()
            .iter()
            .zip(approx.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap_r2 < gap_r1 / 3.0, "r2 gap {gap_r2} vs r1 gap {gap_r1}");
    }

    #[test]
    fn residual_poly_small_orders() {
        // r = 2 gives the constant 2; r = 3 gives the constant 3.
        for &t in &[0.0, 0.25, 0.5, 1.0] {
            assert_eq!(smoothing_residual_poly(2, t).unwrap(), 2.0);
            assert_eq!(smoothing_residual_poly(3, t).unwrap(), 3.0);
        }
        // General maximum at the endpoints equals r.
        for r in 2..=6 {
            let at0 = smoothing_residual_poly(r, 0.0).unwrap();
            assert_eq!(at0, r as f64);
            let mid = smoothing_residual_poly(r, 0.5).unwrap();
            assert!(mid <= at0 + 1e-14);
        }
    }

    #[test]
    fn residual_poly_factorization_identity() {
        // (1 - (1-x)^r) / x = x^(r-1) + (1-x) P(x) on a grid.
        for r in 2..=5 {
            for i in 1..=20 {
                let x = i as f64 / 20.0;
                let lhs = (1.0 - (1.0 - x).powi(r as i32)) / x;
                let rhs = x.powi(r as i32 - 1)
                    + (1.0 - x) * smoothing_residual_poly(r, x).unwrap();
                assert!((lhs - rhs).abs() < 1e-12, "r={r} x={x}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn coefficient_growth_bound_holds() {
        let n = 8;
        for r in [2usize, 3] {
            let s = sample_fn(|x| 0.7 * (2.3 * x[0]).sin() * (1.9 * x[1]).cos(), n, 2);
            let bf = grid_operator_apply(&s, n).unwrap();
            let mut gap = s.clone();
            gap.add_scaled(&bf, -1.0).unwrap();
            let bound = s.inf_norm() + r as f64 * gap.inf_norm();
            let a = iterated_coeff_grid(&s, n, r).unwrap();
            assert!(
                a.inf_norm() <= bound + 1e-12,
                "r={r}: {} vs bound {}",
                a.inf_norm(),
                bound
            );
        }
    }

    #[test]
    fn overflow_gate_trips_at_one() {
        // x^2 at the right endpoint has a smoothed coefficient of
        // exactly 1 for two rounds, which the gate must reject.
        let two_rounds = SmoothnessSpec::new(4, 0.5, 2.0).unwrap();
        let s = GridSamples::sample(|x| x[0] * x[0], 6, 1).unwrap();
        let err = iterated_coeffs(&s, &two_rounds).unwrap_err();
        match err {
            crate::Error::CoefficientOverflow { inf_norm } => {
                assert!((inf_norm - 1.0).abs() < 1e-12)
            }
            other => panic!("expected overflow, got {other:?}"),
        }
        // Scaling the target below 1 passes the gate.
        let s = GridSamples::sample(|x| 0.9 * x[0] * x[0], 6, 1).unwrap();
        let c = iterated_coeffs(&s, &two_rounds).unwrap();
        assert!(c.inf_norm() < 1.0);
        assert_eq!(c.n(), 6);
        assert_eq!(c.dim(), 1);
    }

    #[test]
    fn combination_evaluation_basics() {
        // All-ones coefficients give the constant 1; a lone unit
        // coefficient gives a single basis function.
        let n = 5;
        let ones = CoeffTensor::new(n, NdTensor::from_fn(&[n + 1], |_| 0.999)).unwrap();
        let x = EvalPoint::new(&[0.37]).unwrap();
        let v = eval_combination(&ones, &x).unwrap();
        assert!((v - 0.999).abs() < 1e-13);

        let single =
            CoeffTensor::new(n, NdTensor::from_fn(&[n + 1], |i| if i[0] == 2 { 0.5 } else { 0.0 }))
                .unwrap();
        let want = 0.5 * crate::bernstein::eval_basis_1d(n, 2, 0.37).unwrap();
        let got = eval_combination(&single, &x).unwrap();
        assert!((got - want).abs() < 1e-14);

        // The constructor enforces both shape and range.
        assert!(CoeffTensor::new(4, NdTensor::zeros(&[4])).is_err());
        assert!(CoeffTensor::new(4, NdTensor::from_fn(&[5], |_| 1.0)).is_err());
    }

    #[test]
    fn smoothed_coeffs_evaluate_close_to_target() {
        // End-to-end sanity: evaluate the degree-16 approximant for a
        // smooth target and verify the error is already small.
        let n = 16;
        let f = |x: &[f64]| 0.5 * (std::f64::consts::PI * x[0]).sin();
        let s = sample_fn(f, n, 1);
        let coeffs = iterated_coeff_grid(&s, n, 2).unwrap();
        let pts: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let vals = eval_coeff_on_grid(&coeffs, n, &pts).unwrap();
        let mut worst = 0.0f64;
        for (i, &x) in pts.iter().enumerate() {
            worst = worst.max((vals.get(&[i]) - f(&[x])).abs());
        }
        assert!(worst < 5e-3, "sup error {worst}");
    }

    #[test]
    fn spec_validation_and_derived_quantities() {
        assert!(SmoothnessSpec::new(0, 0.5, 1.0).is_err());
        assert!(SmoothnessSpec::new(2, 1.0, 1.0).is_err());
        assert!(SmoothnessSpec::new(2, 0.5, f64::NAN).is_err());

        let spec = SmoothnessSpec::new(4, 0.5, 2.0).unwrap();
        assert_eq!(spec.iterations(), 2);
        assert_eq!(spec.margin(), 0.25);
        // s * d^2 * c2 / (2 (1 - mu)) = 4 * 1 * 2 / 1 = 8.
        assert_eq!(spec.min_degree(1), 8);
        assert_eq!(spec.min_degree(2), 32);

        let odd = SmoothnessSpec::new(3, 0.5, 2.0).unwrap();
        assert_eq!(odd.iterations(), 2);
    }
}
