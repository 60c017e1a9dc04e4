//! Numerical certification: error decomposition, explicit-constant
//! bound checks, rate-slope fits, and the end-to-end pipeline.
//!
//! The chain from a sampled function to a one-bit network commits
//! three separable errors: smoothing (f versus the polynomial
//! combination of its processed samples), quantization (real versus
//! sign coefficients), and implementation (polynomial versus network
//! arithmetic). This module evaluates all three on one shared grid so
//! the triangle inequality holds exactly, checks the closed-form
//! bounds that come with known norms, and certifies convergence rates
//! by least-squares slopes in log-log coordinates where the theory
//! only promises an order, not a constant.
//!
//! Grid suprema under-estimate true sup norms; every consumer of
//! these reports sees the grid resolution next to the numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bernstein::eval_coeff_on_grid;
use crate::error::{Error, Result};
use crate::functions::Builtin;
use crate::qnn::{attach_sign_readout, QuantNet, SizeTriple};
use crate::quad::{build_bernstein_quad_with_cap, DEFAULT_OUTPUT_CAP};
use crate::relu::build_bernstein_relu_with_cap;
use crate::sigma_delta::{
    quantize_directional, quantization_error_envelope, Alphabet, SdState, SignTensor,
    DEFAULT_U_BOUND,
};
use crate::smoothing::{iterated_approx_grid, iterated_coeffs, CoeffTensor, SmoothnessSpec};
use crate::tensor::increment_index;

/// Evaluation set for grid suprema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// The whole cube [0,1]^d.
    Full,
    /// The centered box [1/4, 3/4]^d, where the directional
    /// quantization envelope stays bounded.
    Interior,
}

impl Region {
    /// Equally spaced axis values covering the region.
    pub fn axis_points(self, resolution: usize) -> Vec<f64> {
        let (lo, hi) = match self {
            Region::Full => (0.0, 1.0),
            Region::Interior => (0.25, 0.75),
        };
        let steps = resolution.max(2) - 1;
        (0..=steps)
            .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
            .collect()
    }

    pub fn describe(self, d: usize) -> String {
        match self {
            Region::Full => format!("[0,1]^{d}"),
            Region::Interior => format!("[0.25,0.75]^{d}"),
        }
    }
}

/// Grid suprema of the three error terms and their sum, plus the run
/// statistics a reader needs to weigh them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorReport {
    pub approx_sup: f64,
    pub quant_sup: f64,
    pub impl_sup: f64,
    pub total_sup: f64,
    pub region: String,
    pub grid_resolution: usize,
    pub max_abs_u: f64,
    pub net_size: SizeTriple,
    pub n: usize,
    pub d: usize,
    pub coeff_inf_norm: f64,
}

/// Least-squares fit of log error against log n.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFit {
    pub n_values: Vec<usize>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Indices whose error sat at machine precision and were left out
    /// of the fit rather than dragging the slope to a fiction.
    pub excluded: Vec<usize>,
}

/// One explicit-constant inequality, evaluated at one degree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub n: usize,
    pub name: String,
    /// Measured left-hand side (a grid supremum or worst margin).
    pub lhs: f64,
    /// Certified right-hand side.
    pub rhs: f64,
    pub pass: bool,
    /// Point attaining the left-hand side, kept for failures.
    pub witness: Option<Vec<f64>>,
}

/// All row-major points of the tensor grid with the given axis values.
fn grid_points(axis: &[f64], d: usize) -> Vec<Vec<f64>> {
    let res = axis.len();
    let shape = vec![res; d];
    let mut idx = vec![0usize; d];
    let mut pts = Vec::with_capacity(res.pow(d as u32));
    loop {
        pts.push(idx.iter().map(|&i| axis[i]).collect());
        if !increment_index(&mut idx, &shape) {
            break;
        }
    }
    pts
}

fn sup_abs_diff(a: &[f64], b: &[f64]) -> (f64, usize) {
    let mut sup = 0.0;
    let mut arg = 0;
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        let v = (x - y).abs();
        if v > sup {
            sup = v;
            arg = i;
        }
    }
    (sup, arg)
}

/// Fits `log error = slope * log n + intercept` by least squares.
///
/// Needs at least four strictly increasing degrees. Errors at or
/// below 1e-13 are treated as saturated at machine precision and
/// excluded (their logs would be meaningless); at least two live
/// points must remain.
pub fn fit_rate(n_values: &[usize], errors: &[f64]) -> Result<RateFit> {
    if n_values.len() < 4 || n_values.len() != errors.len() {
        return Err(Error::precondition(
            "rate fits need at least four (n, error) pairs",
        ));
    }
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::precondition("degrees must be strictly increasing"));
    }
    if errors.iter().any(|&e| !e.is_finite() || e < 0.0) {
        return Err(Error::domain("errors must be finite and non-negative"));
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for (i, (&n, &e)) in n_values.iter().zip(errors).enumerate() {
        if e <= 1e-13 {
            excluded.push(i);
        } else {
            xs.push((n as f64).ln());
            ys.push(e.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::precondition(
            "too few unsaturated errors to fit a rate",
        ));
    }

    let m = xs.len() as f64;
    let mean_x: f64 = xs.iter().sum::<f64>() / m;
    let mean_y: f64 = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };

    Ok(RateFit {
        n_values: n_values.to_vec(),
        errors: errors.to_vec(),
        slope,
        intercept,
        r2,
        excluded,
    })
}

/// Evaluates the three-term error split on one shared grid.
///
/// `f_B` is the polynomial combination of the real coefficients, `f_Q`
/// the combination of the quantized signs, and `f_NN` the network's
/// own arithmetic; the sups of `f - f_B`, `f_B - f_Q`, `f_Q - f_NN`
/// and `f - f_NN` land in the report. The internal-state statistic
/// `max_abs_u` is carried through from the quantization run because
/// nothing here can recover it from the signs alone.
pub fn decompose_error(
    f: impl Fn(&[f64]) -> f64 + Sync,
    a: &CoeffTensor,
    sigma: &SignTensor,
    net: &QuantNet,
    region: Region,
    grid_resolution: usize,
    max_abs_u: f64,
) -> Result<ErrorReport> {
    let d = a.dim();
    let n = a.n();
    if sigma.values().shape() != a.values().shape() {
        return Err(Error::shape(
            "sign tensor and coefficient tensor shapes differ",
        ));
    }
    if net.input_arity() as usize != d {
        return Err(Error::shape(format!(
            "network takes {} inputs but coefficients have rank {d}",
            net.input_arity()
        )));
    }
    if net.outputs().len() != 1 {
        return Err(Error::shape(
            "error decomposition needs a single-output network",
        ));
    }
    if grid_resolution < 2 {
        return Err(Error::precondition("grid resolution must be at least 2"));
    }

    let axis = region.axis_points(grid_resolution);
    let points = grid_points(&axis, d);

    let f_vals: Vec<f64> = points.par_iter().map(|p| f(p)).collect();
    let f_b = eval_coeff_on_grid(a.values(), n, &axis)?;
    let f_q = eval_coeff_on_grid(sigma.values(), n, &axis)?;
    let f_nn: Vec<f64> = net
        .evaluate_batch(&points)?
        .into_iter()
        .map(|out| out[0])
        .collect();

    let (approx_sup, _) = sup_abs_diff(&f_vals, f_b.data());
    let (quant_sup, _) = sup_abs_diff(f_b.data(), f_q.data());
    let (impl_sup, _) = sup_abs_diff(f_q.data(), &f_nn);
    let (total_sup, _) = sup_abs_diff(&f_vals, &f_nn);

    Ok(ErrorReport {
        approx_sup,
        quant_sup,
        impl_sup,
        total_sup,
        region: region.describe(d),
        grid_resolution,
        max_abs_u,
        net_size: net.size(),
        n,
        d,
        coeff_inf_norm: a.inf_norm(),
    })
}

/// Grid supremum of `f - B_n f` together with its witness point.
/// Exposed separately so negative controls can pit the measurement
/// against a deliberately wrong constant.
pub fn operator_deviation(
    f: &Builtin,
    n: usize,
    d: usize,
    grid_resolution: usize,
) -> Result<(f64, Vec<f64>)> {
    let samples = f.sample(n, d)?;
    let axis = Region::Full.axis_points(grid_resolution);
    let approx = eval_coeff_on_grid(samples.values(), n, &axis)?;
    let points = grid_points(&axis, d);
    let f_vals: Vec<f64> = points.par_iter().map(|p| f.eval(p)).collect();
    let (sup, arg) = sup_abs_diff(&f_vals, approx.data());
    Ok((sup, points[arg].clone()))
}

/// Runs every explicit-constant inequality the library certifies for
/// a built-in function over a sweep of degrees.
///
/// Per degree: the Lipschitz bound `(lip/2) sqrt(d/n)`, the
/// second-order bound `(d^2/(4n)) c2` when a second-derivative norm
/// exists, the first-order directional quantization envelope with
/// constant 1 (pointwise, tolerance 1e-10), and the grid identity
/// between the iterated approximant and the operator applied to the
/// processed samples (tolerance 1e-10).
pub fn certify_explicit_bounds(
    f: &Builtin,
    n_values: &[usize],
    d: usize,
    grid_resolution: usize,
) -> Result<Vec<BoundCheck>> {
    let norms = f.norms(d);
    let mut checks = Vec::new();

    for &n in n_values {
        let samples = f.sample(n, d)?;
        let axis = Region::Full.axis_points(grid_resolution);
        let approx = eval_coeff_on_grid(samples.values(), n, &axis)?;
        let points = grid_points(&axis, d);
        let f_vals: Vec<f64> = points.par_iter().map(|p| f.eval(p)).collect();
        let (sup, arg) = sup_abs_diff(&f_vals, approx.data());
        let witness = points[arg].clone();

        let rhs = norms.lip / 2.0 * (d as f64 / n as f64).sqrt();
        checks.push(BoundCheck {
            n,
            name: "lipschitz".into(),
            lhs: sup,
            rhs,
            pass: sup <= rhs,
            witness: Some(witness.clone()),
        });
        if let Some(c2) = norms.c2 {
            let rhs = (d * d) as f64 / (4.0 * n as f64) * c2;
            checks.push(BoundCheck {
                n,
                name: "second-order".into(),
                lhs: sup,
                rhs,
                pass: sup <= rhs,
                witness: Some(witness),
            });
        }

        // First-order quantization envelope, pointwise along axis 0.
        let (signs, _) =
            quantize_directional(samples.values(), 1, 0, &Alphabet::one_bit(), DEFAULT_U_BOUND)?;
        let quant = eval_coeff_on_grid(signs.values(), n, &axis)?;
        let mut worst = f64::NEG_INFINITY;
        let mut worst_at = 0;
        for (i, (qv, av)) in quant.data().iter().zip(approx.data()).enumerate() {
            let x0 = points[i][0];
            let margin = (qv - av).abs() - quantization_error_envelope(n, 1, x0)?;
            if margin > worst {
                worst = margin;
                worst_at = i;
            }
        }
        checks.push(BoundCheck {
            n,
            name: "first-order-envelope".into(),
            lhs: worst,
            rhs: 1e-10,
            pass: worst <= 1e-10,
            witness: Some(points[worst_at].clone()),
        });

        // Iterate identity on the grid: smoothing then operator equals
        // the iterated approximant, here at two smoothing rounds.
        let fnr = crate::smoothing::iterated_coeff_grid(samples.values(), n, 2)?;
        let via_op = crate::bernstein::grid_operator_apply(&fnr, n)?;
        let direct = iterated_approx_grid(samples.values(), n, 2)?;
        let (dev, _) = sup_abs_diff(via_op.data(), direct.data());
        checks.push(BoundCheck {
            n,
            name: "iterate-identity".into(),
            lhs: dev,
            rhs: 1e-10,
            pass: dev <= 1e-10,
            witness: None,
        });
    }
    Ok(checks)
}

/// Which network family the pipeline compiles into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Quad,
    Relu,
}

/// Everything the end-to-end run needs. `new` fills the conventional
/// knobs; override fields directly for anything else.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub function: Builtin,
    pub d: usize,
    /// Smoothness order: drives both the smoothing depth (ceil(s/2))
    /// and the quantizer order (s itself).
    pub s: u32,
    pub mu: f64,
    pub n: usize,
    /// Quantization axis, zero-based.
    pub axis: usize,
    pub activation: ActivationKind,
    pub region: Region,
    pub grid_resolution: usize,
    pub u_bound: f64,
    pub output_cap: usize,
}

impl PipelineConfig {
    pub fn new(function: Builtin, d: usize, s: u32, mu: f64, n: usize) -> Self {
        PipelineConfig {
            function,
            d,
            s,
            mu,
            n,
            axis: 0,
            activation: ActivationKind::Quad,
            region: Region::Interior,
            grid_resolution: if d <= 2 { 401 } else { 51 },
            u_bound: DEFAULT_U_BOUND,
            output_cap: DEFAULT_OUTPUT_CAP,
        }
    }
}

/// The pipeline's artifacts, kept together so callers can persist or
/// inspect any stage.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: ErrorReport,
    pub coeffs: CoeffTensor,
    pub signs: SignTensor,
    pub state: SdState,
    pub net: QuantNet,
}

/// Samples the function, smooths and extracts coefficients, quantizes
/// them to signs along one axis, compiles the signed combination into
/// a network, and decomposes the error on the configured region.
///
/// The degree must reach `s d^2 c2 / (2 (1 - mu))`, the point past
/// which smoothing keeps coefficients inside the quantizer's input
/// range; below it the run refuses with the minimum spelled out.
/// Overflow of the quantizer state or a network resource cap surface
/// as their own error variants.
pub fn run_binary_bernstein(config: &PipelineConfig) -> Result<PipelineOutput> {
    let f = config.function.validated()?;
    if config.d == 0 {
        return Err(Error::precondition("dimension must be at least 1"));
    }
    if config.axis >= config.d {
        return Err(Error::precondition(format!(
            "axis {} out of range for dimension {}",
            config.axis, config.d
        )));
    }
    let norms = f.norms(config.d);
    if !(norms.inf <= config.mu) {
        return Err(Error::precondition(format!(
            "function sup norm {} exceeds the quantizer margin mu = {}",
            norms.inf, config.mu
        )));
    }
    let spec = SmoothnessSpec::new(config.s, config.mu, norms.c2.unwrap_or(0.0))?;
    let min_n = spec.min_degree(config.d);
    if config.n < min_n {
        return Err(Error::precondition(format!(
            "degree {} is below the admissible minimum {min_n} for s = {}, mu = {}, d = {}",
            config.n, config.s, config.mu, config.d
        )));
    }

    let samples = f.sample(config.n, config.d)?;
    let coeffs = iterated_coeffs(&samples, &spec)?;
    let (signs, state) = quantize_directional(
        coeffs.values(),
        config.s as usize,
        config.axis,
        &Alphabet::one_bit(),
        config.u_bound,
    )?;

    let base = match config.activation {
        ActivationKind::Quad => {
            build_bernstein_quad_with_cap(config.n, config.d, config.output_cap)?
        }
        ActivationKind::Relu => {
            let eps_net = (config.n as f64 + 1.0).powi(-(config.d as i32))
                * (config.n as f64).powf(-(config.s as f64) / 2.0);
            build_bernstein_relu_with_cap(config.n, config.d, eps_net, config.output_cap)?
        }
    };
    let net = attach_sign_readout(base, &signs)?;

    let report = decompose_error(
        |x| f.eval(x),
        &coeffs,
        &signs,
        &net,
        config.region,
        config.grid_resolution,
        state.max_abs_u,
    )?;

    Ok(PipelineOutput {
        report,
        coeffs,
        signs,
        state,
        net,
    })
}
