//! Built-in test functions on the unit cube with closed-form norms.
//!
//! Every bound checker in this crate wants three numbers next to the
//! function it certifies: the sup norm, a Lipschitz constant for the
//! Euclidean metric, and a bound on the second partial derivatives.
//! Guessing those numerically would make the bound checks circular, so
//! each built-in family carries them in closed form, derived once from
//! the defining formula. Sampled functions of unknown origin get a
//! finite-difference estimate instead, explicitly flagged as such.
//!
//! All families are tensor products of a one-dimensional profile, so a
//! single scale factor controls the sup norm in every dimension and
//! the pipeline's small-coefficient requirements are easy to meet.

use crate::bernstein::GridSamples;
use crate::error::{Error, Result};

/// Norm data accompanying a function handle.
///
/// `lip` is a Lipschitz constant with respect to the Euclidean norm on
/// the cube; `c2` bounds every second partial derivative and is absent
/// for functions that are merely Lipschitz. `estimated` marks values
/// read off a sample grid rather than derived from a formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionNorms {
    pub inf: f64,
    pub lip: f64,
    pub c2: Option<f64>,
    pub estimated: bool,
}

/// The built-in function families.
///
/// Each evaluates as a product of identical one-dimensional factors,
/// one per coordinate. The dimension is implied by the point length at
/// evaluation time; norms depend on it only where the formula does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    /// `scale * prod_l sin(freq * pi * x_l)`.
    SineProduct { scale: f64, freq: u32 },
    /// `scale * prod_l x_l^2`.
    SquareProduct { scale: f64 },
    /// `scale * prod_l exp(-sharpness * (x_l - 1/2)^2)`.
    ///
    /// Sharpness at least 2 keeps the steepest point of the profile
    /// inside the cube, which is what the closed-form Lipschitz
    /// constant assumes.
    GaussianBump { scale: f64, sharpness: f64 },
    /// `scale * prod_l (1 - 2|x_l - 1/2|)`, the Lipschitz witness with
    /// no second derivative.
    TentProduct { scale: f64 },
}

impl Builtin {
    /// Stable identifier used in configs and reports.
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::SineProduct { .. } => "sine",
            Builtin::SquareProduct { .. } => "square",
            Builtin::GaussianBump { .. } => "bump",
            Builtin::TentProduct { .. } => "tent",
        }
    }

    /// Checks the family parameters and returns the function unchanged.
    pub fn validated(self) -> Result<Self> {
        let scale = self.scale();
        if !scale.is_finite() {
            return Err(Error::domain("function scale must be finite"));
        }
        match self {
            Builtin::SineProduct { freq, .. } if freq == 0 => {
                Err(Error::domain("sine frequency must be at least 1"))
            }
            Builtin::GaussianBump { sharpness, .. } if !(sharpness >= 2.0) => Err(Error::domain(
                "bump sharpness below 2 puts the steepest point outside the cube",
            )),
            _ => Ok(self),
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            Builtin::SineProduct { scale, .. }
            | Builtin::SquareProduct { scale }
            | Builtin::GaussianBump { scale, .. }
            | Builtin::TentProduct { scale } => scale,
        }
    }

    /// One-dimensional profile before scaling.
    fn profile(&self, t: f64) -> f64 {
        match *self {
            Builtin::SineProduct { freq, .. } => (freq as f64 * std::f64::consts::PI * t).sin(),
            Builtin::SquareProduct { .. } => t * t,
            Builtin::GaussianBump { sharpness, .. } => {
                let u = t - 0.5;
                (-sharpness * u * u).exp()
            }
            Builtin::TentProduct { .. } => 1.0 - 2.0 * (t - 0.5).abs(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.scale();
        for &t in x {
            v *= self.profile(t);
        }
        v
    }

    /// Closed-form norms in dimension `d`.
    ///
    /// The tensor-product structure keeps most of them d-free: for the
    /// sine and bump families the squared gradient components sum to at
    /// most the one-dimensional maximum (the factors trade off), so the
    /// Euclidean Lipschitz constant does not grow with d. The square
    /// and tent families have gradients that genuinely align, hence
    /// the sqrt(d) factor.
    pub fn norms(&self, d: usize) -> FunctionNorms {
        let s = self.scale().abs();
        let df = d as f64;
        let (lip, c2) = match *self {
            Builtin::SineProduct { freq, .. } => {
                let w = freq as f64 * std::f64::consts::PI;
                (s * w, Some(s * w * w))
            }
            Builtin::SquareProduct { .. } => {
                (2.0 * s * df.sqrt(), Some(if d == 1 { 2.0 * s } else { 4.0 * s }))
            }
            Builtin::GaussianBump { sharpness, .. } => {
                let lip = s * (2.0 * sharpness).sqrt() * (-0.5f64).exp();
                (lip, Some(2.0 * sharpness * s))
            }
            Builtin::TentProduct { .. } => (2.0 * s * df.sqrt(), None),
        };
        FunctionNorms {
            inf: s,
            lip,
            c2,
            estimated: false,
        }
    }

    /// Samples the function on the uniform degree-n grid.
    pub fn sample(&self, n: usize, d: usize) -> Result<GridSamples> {
        GridSamples::sample(|x| self.eval(x), n, d)
    }

    /// The four canonical instances exercised by the certification
    /// sweeps, scaled to 0.4 so their smoothed coefficients stay well
    /// inside the one-bit quantizer's stable range.
    pub fn standard_suite() -> Vec<Builtin> {
        vec![
            Builtin::SineProduct { scale: 0.4, freq: 1 },
            Builtin::SquareProduct { scale: 0.4 },
            Builtin::GaussianBump { scale: 0.4, sharpness: 4.0 },
            Builtin::TentProduct { scale: 0.4 },
        ]
    }
}

/// Finite-difference norm estimates for a sampled function.
///
/// First differences scaled by n estimate gradient components per
/// axis; those combine in quadrature into a Euclidean Lipschitz
/// estimate. Second and mixed differences scaled by n^2 estimate the
/// largest second partial. Estimates from a grid can only undershoot
/// features between grid points, which is why the flag travels with
/// the numbers into every report.
pub fn estimate_norms(samples: &GridSamples) -> FunctionNorms {
    let n = samples.n;
    let t = samples.values();
    let d = t.ndim();
    let nf = n as f64;

    let mut inf: f64 = 0.0;
    for &v in t.data() {
        inf = inf.max(v.abs());
    }

    // Local gradient per grid cell: forward differences along every
    // axis at a shared base point, combined as a Euclidean norm there.
    // Combining per-axis global maxima instead would overshoot badly
    // whenever the steep directions live in different corners.
    let shape = t.shape().to_vec();
    let mut lip_sq: f64 = 0.0;
    {
        let mut idx = vec![0usize; d];
        loop {
            if (0..d).all(|a| idx[a] + 1 < shape[a]) {
                let f0 = t.get(&idx);
                let mut g_sq = 0.0;
                for a in 0..d {
                    let mut j = idx.clone();
                    j[a] += 1;
                    let g = (t.get(&j) - f0) * nf;
                    g_sq += g * g;
                }
                lip_sq = lip_sq.max(g_sq);
            }
            if !crate::tensor::increment_index(&mut idx, &shape) {
                break;
            }
        }
    }

    let mut c2: f64 = 0.0;
    for axis in 0..d {
        let (outer, inner, len) = samples_fiber_layout(t, axis);
        let mut fiber = vec![0.0; len];
        for o in 0..outer {
            for i in 0..inner {
                read_strided(t, axis, o, i, &mut fiber);
                for w in fiber.windows(3) {
                    c2 = c2.max((w[2] - 2.0 * w[1] + w[0]).abs() * nf * nf);
                }
            }
        }
    }

    // Mixed second differences across each axis pair.
    for a in 0..d {
        for b in (a + 1)..d {
            let shape = t.shape();
            let mut idx = vec![0usize; d];
            loop {
                if idx[a] + 1 < shape[a] && idx[b] + 1 < shape[b] {
                    let f00 = t.get(&idx);
                    let mut j = idx.clone();
                    j[a] += 1;
                    let f10 = t.get(&j);
                    j[b] += 1;
                    let f11 = t.get(&j);
                    j[a] -= 1;
                    let f01 = t.get(&j);
                    c2 = c2.max((f11 - f10 - f01 + f00).abs() * nf * nf);
                }
                if !crate::tensor::increment_index(&mut idx, shape) {
                    break;
                }
            }
        }
    }

    FunctionNorms {
        inf,
        lip: lip_sq.sqrt(),
        c2: if n >= 2 { Some(c2) } else { None },
        estimated: true,
    }
}

fn samples_fiber_layout(t: &crate::tensor::NdTensor, axis: usize) -> (usize, usize, usize) {
    let shape = t.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, inner, shape[axis])
}

fn read_strided(
    t: &crate::tensor::NdTensor,
    axis: usize,
    outer: usize,
    inner: usize,
    out: &mut [f64],
) {
    let shape = t.shape();
    let inner_total: usize = shape[axis + 1..].iter().product();
    let base = outer * shape[axis] * inner_total + inner;
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = t.data()[base + j * inner_total];
    }
}
