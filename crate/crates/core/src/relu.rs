//! ReLU network builders over the three-bit alphabet {±1/2, ±1, ±2}.
//!
//! Everything here is assembled from one primitive, the tent map
//! `phi(x) = sigma(2 sigma(x) - 2 sigma(x - 1/2) - 2 sigma(x - 1/2))`,
//! following the classical sawtooth route to squaring: on [0,1] the
//! identity `x^2 = x - sum_k phi_k(x) / 4^k` holds with `phi_k` the
//! k-fold composition, and truncating after `m` terms costs at most
//! `4^{-m}`. Products come from the polarization of the squarer, d-ary
//! products from a chain of binary ones, and Bernstein basis nets from
//! the Pascal raising recursion with approximate products in place of
//! the exact quadratic blocks. All intermediate values are provably
//! non-negative, so plain ReLU nodes are safe throughout and every
//! output is non-negative by construction.
//!
//! Power-of-two rescalings are m-fold chains of single-edge nodes with
//! weight 2 or 1/2; those are the only weights outside {±1} the
//! constructions need, which is exactly why the alphabet carries them.

use crate::error::{Error, Result};
use crate::qnn::{attach_sign_readout, Activation, NetBuilder, NodeId, QuantNet, Src};
use crate::quad::DEFAULT_OUTPUT_CAP;
use crate::sigma_delta::{Alphabet, SignTensor};

const RELU: Activation = Activation::Relu;

/// Derived accuracy parameters for the approximate-arithmetic blocks.
///
/// The constructors pick the standard parameter choices for each block
/// kind; the fields stay public so callers can inspect what a build
/// will use (and tests can probe the feasibility guard directly).
#[derive(Debug, Clone, PartialEq)]
pub struct ReluBuildParams {
    /// Target sup-norm accuracy of the block being built.
    pub epsilon: f64,
    /// Inputs are promised to lie in `[0, 2^k_range]`.
    pub k_range: u32,
    /// Truncation depth of the squaring series.
    pub m_terms: usize,
    /// Range exponent for chained product blocks.
    pub ell_cap: u32,
    /// Accuracy handed down to sub-blocks.
    pub delta: f64,
}

impl ReluBuildParams {
    /// Parameters for a standalone squarer on [0,1] with error `eps`.
    pub fn for_squaring(eps: f64) -> Result<Self> {
        check_accuracy(eps)?;
        Ok(ReluBuildParams {
            epsilon: eps,
            k_range: 0,
            m_terms: terms_for(eps),
            ell_cap: 0,
            delta: eps,
        })
    }

    /// Parameters for a binary product on `[0, 2^k]^2` with error `eps`.
    ///
    /// The three internal squarers run at accuracy `eps * 2^{-2k-2} / 3`
    /// so that the polarization combination, rescaled back up by
    /// `2^{2k+1}`, lands within `eps`.
    pub fn for_mult2(eps: f64, k: u32) -> Result<Self> {
        check_accuracy(eps)?;
        let delta = eps * pow2(-2 * (k as i32) - 2) / 3.0;
        Ok(ReluBuildParams {
            epsilon: eps,
            k_range: k,
            m_terms: terms_for(delta),
            ell_cap: k,
            delta,
        })
    }

    /// Parameters for a d-ary product chain on `[0, 2^k]^d`.
    ///
    /// For k >= 1 the per-link accuracy is `(2^k - 1) 2^{-k(d-1)} eps`
    /// with range exponent `k(d-1) + 1`; the geometric telescoping of
    /// link errors then sums to at most `eps`. At k = 0 that choice
    /// degenerates, so the chain runs each link at `eps / (d-1)` with
    /// range exponent 1 (intermediate values stay below `1 + eps < 2`).
    pub fn for_multd(eps: f64, k: u32, d: usize) -> Result<Self> {
        check_accuracy(eps)?;
        if d < 2 {
            return Err(Error::precondition("product chains need at least two factors"));
        }
        let (delta, ell) = if k == 0 {
            (eps / (d as f64 - 1.0), 1)
        } else {
            (
                (pow2(k as i32) - 1.0) * pow2(-(k as i32) * (d as i32 - 1)) * eps,
                k * (d as u32 - 1) + 1,
            )
        };
        // m_terms reports the series depth the chain's links will use.
        let params = ReluBuildParams {
            epsilon: eps,
            k_range: k,
            m_terms: terms_for(delta * pow2(-2 * (ell as i32) - 2) / 3.0),
            ell_cap: ell,
            delta,
        };
        if !params.chain_feasible(d) {
            return Err(Error::precondition(
                "product chain accuracy and range exponent are infeasible",
            ));
        }
        Ok(params)
    }

    /// Whether a d-long chain of `P_{delta, ell}` links keeps all its
    /// intermediate values inside `[0, 2^ell]`. For k >= 1 this is the
    /// inequality `2^{k(d-2)} / (2^k - 1) * delta + 2^{k(d-1)} <= 2^ell`;
    /// at k = 0 the accumulated slack `(d-1) delta` must stay below 1
    /// with the range exponent covering values up to 2.
    pub fn chain_feasible(&self, d: usize) -> bool {
        if d < 2 || !(self.delta > 0.0) {
            return false;
        }
        let ell = pow2(self.ell_cap as i32);
        if self.k_range == 0 {
            (d as f64 - 1.0) * self.delta <= 1.0 && ell >= 2.0
        } else {
            let k = self.k_range as i32;
            let growth = pow2(k * (d as i32 - 2)) / (pow2(k) - 1.0);
            growth * self.delta + pow2(k * (d as i32 - 1)) <= ell
        }
    }
}

fn check_accuracy(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain("target accuracy must lie in (0, 1)"));
    }
    Ok(())
}

/// Series depth needed for truncation error `4^{-m} <= eps`.
fn terms_for(eps: f64) -> usize {
    let m = (1.0 / eps).log2() / 2.0;
    (m.ceil() as usize).max(1)
}

fn pow2(e: i32) -> f64 {
    (e as f64).exp2()
}

/// Tent map block: four nodes, six edges, peak 1 at 1/2.
///
/// The weight -4 a single subtracted node would need is outside the
/// alphabet, so the `sigma(x - 1/2)` node appears twice with weight -2
/// on each copy.
fn add_phi(b: &mut NetBuilder, src: Src) -> Result<NodeId> {
    let pass = b.add_node(RELU, 0.0, &[(src, 1.0)])?;
    let above_a = b.add_node(RELU, -0.5, &[(src, 1.0)])?;
    let above_b = b.add_node(RELU, -0.5, &[(src, 1.0)])?;
    b.add_node(
        RELU,
        0.0,
        &[
            (Src::Node(pass), 2.0),
            (Src::Node(above_a), -2.0),
            (Src::Node(above_b), -2.0),
        ],
    )
}

/// Chain of `steps` single-edge nodes, each multiplying by `weight`.
/// Values flowing through must be non-negative for ReLU to be exact.
fn add_scaling_chain(b: &mut NetBuilder, src: Src, weight: f64, steps: u32) -> Result<Src> {
    let mut cur = src;
    for _ in 0..steps {
        cur = Src::Node(b.add_node(RELU, 0.0, &[(cur, weight)])?);
    }
    Ok(cur)
}

/// Truncated-series squarer on a source known to lie in [0,1].
///
/// Builds the composition chain `phi_1 .. phi_m`, folds the weighted sum
/// `sum phi_j / 4^j` by a Horner walk from the deep end (each step is a
/// halving node plus a two-edge accumulator, so only weights 1 and 1/2
/// appear), and finishes with `sigma(x - B/4)`. The partial sums of the
/// series never exceed `x - x^2 <= x`, so the final ReLU is exact and
/// the output overshoots `x^2` by at most `4^{-m} / 3`.
fn add_squaring(b: &mut NetBuilder, src: Src, m: usize) -> Result<NodeId> {
    debug_assert!(m >= 1);
    let mut tents = Vec::with_capacity(m);
    let mut cur = src;
    for _ in 0..m {
        let t = add_phi(b, cur)?;
        tents.push(t);
        cur = Src::Node(t);
    }
    // Horner accumulator B_j = phi_j + B_{j+1} / 4, starting at B_m = phi_m.
    let mut acc = Src::Node(tents[m - 1]);
    for j in (0..m - 1).rev() {
        let half = add_scaling_chain(b, acc, 0.5, 1)?;
        acc = Src::Node(b.add_node(RELU, 0.0, &[(Src::Node(tents[j]), 1.0), (half, 0.5)])?);
    }
    let half = add_scaling_chain(b, acc, 0.5, 1)?;
    b.add_node(RELU, 0.0, &[(src, 1.0), (half, -0.5)])
}

/// Approximate binary product via polarization of three squarers.
///
/// Inputs are scaled down into [0,1] by halving chains, squared at
/// accuracy `delta`, combined as `S(x'+y') - S(x') - S(y')` under a
/// final ReLU (the true scaled product is non-negative, so clipping
/// costs at most what the squarer errors already allow), and scaled
/// back up by a doubling chain.
fn add_mult2(b: &mut NetBuilder, x: Src, y: Src, params: &ReluBuildParams) -> Result<NodeId> {
    if x == y {
        return Err(Error::graph(
            "product blocks need distinct source nodes; materialize a copy first",
        ));
    }
    let k = params.k_range;
    let m = params.m_terms;
    let sx = add_scaling_chain(b, x, 0.5, k + 1)?;
    let sy = add_scaling_chain(b, y, 0.5, k + 1)?;
    let mixed = b.add_node(RELU, 0.0, &[(x, 0.5), (y, 0.5)])?;
    let sxy = add_scaling_chain(b, Src::Node(mixed), 0.5, k)?;

    let q_sum = add_squaring(b, sxy, m)?;
    let q_x = add_squaring(b, sx, m)?;
    let q_y = add_squaring(b, sy, m)?;

    let t = b.add_node(
        RELU,
        0.0,
        &[
            (Src::Node(q_sum), 1.0),
            (Src::Node(q_x), -1.0),
            (Src::Node(q_y), -1.0),
        ],
    )?;
    match add_scaling_chain(b, Src::Node(t), 2.0, 2 * k + 1)? {
        Src::Node(id) => Ok(id),
        Src::Input(_) => unreachable!("scaling chains with steps >= 1 end on a node"),
    }
}

/// Right-to-left chain of binary product blocks over `factors`.
fn add_multd(b: &mut NetBuilder, factors: &[Src], params: &ReluBuildParams) -> Result<NodeId> {
    debug_assert!(factors.len() >= 2);
    if !params.chain_feasible(factors.len()) {
        return Err(Error::precondition(
            "product chain accuracy and range exponent are infeasible",
        ));
    }
    let link = ReluBuildParams::for_mult2(params.delta, params.ell_cap)?;
    let mut acc = factors[factors.len() - 1];
    for &f in factors[..factors.len() - 1].iter().rev() {
        acc = Src::Node(add_mult2(b, f, acc, &link)?);
    }
    match acc {
        Src::Node(id) => Ok(id),
        Src::Input(_) => unreachable!("chains over >= 2 factors end on a node"),
    }
}

/// Pascal triangle of approximate basis values for one input variable.
///
/// Returns the degree-n row in ascending index order. The first row is
/// `(sigma(1-x), sigma(x))`, exact on [0,1]. Raising a row multiplies
/// its entries by x or 1-x through product blocks of accuracy
/// `eps / (2(n-1))` with range exponent 1, so the accumulated error of
/// row m stays within `2(m-1)` times that, and the degree-n outputs are
/// within `eps` of the true basis values.
///
/// The variable handles `sigma(x)` and `sigma(1-x)` feeding the product
/// blocks are separate nodes from the row-one entries; the first raise
/// multiplies row one by those same affine values, and a shared node on
/// both sides of a product block would need the duplicate edges the
/// graph forbids.
fn add_basis_rows(b: &mut NetBuilder, var: u32, n: usize, eps: f64) -> Result<Vec<NodeId>> {
    let x = Src::Input(var);
    let ax = b.add_node(RELU, 0.0, &[(x, 1.0)])?;
    let aomx = b.add_node(RELU, 1.0, &[(x, -1.0)])?;
    if n == 1 {
        return Ok(vec![aomx, ax]);
    }

    let row_omx = b.add_node(RELU, 1.0, &[(x, -1.0)])?;
    let row_x = b.add_node(RELU, 0.0, &[(x, 1.0)])?;
    let mut row = vec![row_omx, row_x];

    let delta = eps / (2.0 * (n as f64 - 1.0));
    let link = ReluBuildParams::for_mult2(delta, 1)?;
    for m in 1..n {
        let mut next = Vec::with_capacity(m + 2);
        next.push(add_mult2(b, Src::Node(aomx), Src::Node(row[0]), &link)?);
        for k in 1..=m {
            let up = add_mult2(b, Src::Node(ax), Src::Node(row[k - 1]), &link)?;
            let stay = add_mult2(b, Src::Node(aomx), Src::Node(row[k]), &link)?;
            next.push(b.add_node(
                RELU,
                0.0,
                &[(Src::Node(up), 1.0), (Src::Node(stay), 1.0)],
            )?);
        }
        next.push(add_mult2(b, Src::Node(ax), Src::Node(row[m]), &link)?);
        row = next;
    }
    Ok(row)
}

/// The tent function on [0,1] as a standalone network of size (2,4,6).
pub fn build_phi_block() -> Result<QuantNet> {
    let mut b = NetBuilder::new(Alphabet::three_bit(), 1);
    let out = add_phi(&mut b, Src::Input(0))?;
    b.mark_output(out)?;
    b.finish()
}

/// Approximate squarer on [0,1] with sup error at most `eps`.
pub fn build_squaring(eps: f64) -> Result<QuantNet> {
    let params = ReluBuildParams::for_squaring(eps)?;
    build_squaring_with_terms(params.m_terms)
}

/// Squarer truncated after exactly `m` series terms; the overshoot
/// above `x^2` is between 0 and `4^{-m} / 3`.
pub fn build_squaring_with_terms(m: usize) -> Result<QuantNet> {
    if m < 1 {
        return Err(Error::precondition("the squaring series needs at least one term"));
    }
    let mut b = NetBuilder::new(Alphabet::three_bit(), 1);
    let out = add_squaring(&mut b, Src::Input(0), m)?;
    b.mark_output(out)?;
    b.finish()
}

/// Approximate product of two inputs from `[0, 2^k]`, within `eps`.
pub fn build_mult2_relu(eps: f64, k: u32) -> Result<QuantNet> {
    let params = ReluBuildParams::for_mult2(eps, k)?;
    let mut b = NetBuilder::new(Alphabet::three_bit(), 2);
    let out = add_mult2(&mut b, Src::Input(0), Src::Input(1), &params)?;
    b.mark_output(out)?;
    b.finish()
}

/// Approximate product of `d` inputs from `[0, 2^k]`, within `eps`.
pub fn build_multd_relu(eps: f64, k: u32, d: usize) -> Result<QuantNet> {
    let params = ReluBuildParams::for_multd(eps, k, d)?;
    let mut b = NetBuilder::new(Alphabet::three_bit(), d as u32);
    let factors: Vec<Src> = (0..d as u32).map(Src::Input).collect();
    let out = add_multd(&mut b, &factors, &params)?;
    b.mark_output(out)?;
    b.finish()
}

/// Approximate univariate basis network: n+1 outputs, each within
/// `eps` of the corresponding degree-n basis function on [0,1].
/// Degree 1 is exact and costs two nodes.
pub fn build_bernstein_relu_1d(n: usize, eps: f64) -> Result<QuantNet> {
    check_accuracy(eps)?;
    if n == 0 {
        return Err(Error::precondition("basis networks need degree at least 1"));
    }
    let mut b = NetBuilder::new(Alphabet::three_bit(), 1);
    for id in add_basis_rows(&mut b, 0, n, eps)? {
        b.mark_output(id)?;
    }
    b.finish()
}

/// Approximate tensor-product basis network: `(n+1)^d` outputs in
/// row-major multi-index order, each within `eps` of the true basis
/// value. One univariate triangle per variable runs at accuracy
/// `eps / (d 2^d)`, and per-output chains of product blocks with range
/// exponent covering values up to 2 spend the other `eps / 2`.
pub fn build_bernstein_relu(n: usize, d: usize, eps: f64) -> Result<QuantNet> {
    build_bernstein_relu_with_cap(n, d, eps, DEFAULT_OUTPUT_CAP)
}

pub fn build_bernstein_relu_with_cap(
    n: usize,
    d: usize,
    eps: f64,
    cap: usize,
) -> Result<QuantNet> {
    check_accuracy(eps)?;
    if n == 0 || d == 0 {
        return Err(Error::precondition(
            "basis networks need degree and dimension at least 1",
        ));
    }
    if d == 1 {
        return build_bernstein_relu_1d(n, eps);
    }
    let outputs = (n + 1).checked_pow(d as u32).filter(|&c| c <= cap);
    let n_outputs = outputs.ok_or(Error::ResourceCap {
        what: "basis network outputs",
        needed: (n + 1).saturating_pow(d as u32),
        cap,
    })?;

    let gamma = eps / (d as f64 * pow2(d as i32));
    let chain = ReluBuildParams::for_multd(eps / 2.0, 1, d)?;

    let mut b = NetBuilder::new(Alphabet::three_bit(), d as u32);
    let mut triangles = Vec::with_capacity(d);
    for var in 0..d {
        triangles.push(add_basis_rows(&mut b, var as u32, n, gamma)?);
    }

    let mut idx = vec![0usize; d];
    for _ in 0..n_outputs {
        let factors: Vec<Src> = (0..d).map(|l| Src::Node(triangles[l][idx[l]])).collect();
        let out = add_multd(&mut b, &factors, &chain)?;
        b.mark_output(out)?;
        crate::tensor::increment_index(&mut idx, &vec![n + 1; d]);
    }
    b.finish()
}

/// Sums a basis network's outputs under one-bit signs; same contract
/// as the quadratic builder's readout, with {±1} sitting inside the
/// three-bit alphabet. Grows the size by `(1, 1, basis count)`.
pub fn attach_sign_layer_relu(net: QuantNet, sigma: &SignTensor) -> Result<QuantNet> {
    attach_sign_readout(net, sigma)
}
