//! Compilation of the Bernstein basis into networks with quadratic
//! activations and weights in `{-1, +1}`.
//!
//! Everything reduces to one identity: with `rho(t) = t^2 / 2`,
//! `a b = rho(a + b) - rho(a) - rho(b)`. Products therefore cost a
//! fixed block of 4 nodes and 7 edges, and the degree-raising
//! recurrence `b_{m+1,k} = x b_{m,k-1} + (1-x) b_{m,k}` turns into a
//! triangle of such blocks. All constructions here are exact up to
//! floating-point rounding; no approximation is involved.

use crate::error::{Error, Result};
use crate::qnn::{attach_sign_readout, Activation, NetBuilder, NodeId, QuantNet, Src};
use crate::sigma_delta::{Alphabet, SignTensor};

/// Refuse to build basis networks with more outputs than this unless
/// the caller raises the cap explicitly.
pub const DEFAULT_OUTPUT_CAP: usize = 1 << 20;

/// Places the polarization product of two sources: three squaring
/// nodes on layer `base`, and the combination on `base + 1`. Both
/// sources must live strictly below `base`.
fn mult2_block(b: &mut NetBuilder, lhs: Src, rhs: Src, base: u32) -> Result<NodeId> {
    let h_sum = b.add_node_at(base, Activation::Quad, 0.0, &[(lhs, 1.0), (rhs, 1.0)])?;
    let h_lhs = b.add_node_at(base, Activation::Quad, 0.0, &[(lhs, 1.0)])?;
    let h_rhs = b.add_node_at(base, Activation::Quad, 0.0, &[(rhs, 1.0)])?;
    b.add_node_at(
        base + 1,
        Activation::Identity,
        0.0,
        &[
            (Src::Node(h_sum), 1.0),
            (Src::Node(h_lhs), -1.0),
            (Src::Node(h_rhs), -1.0),
        ],
    )
}

/// Product block with automatic placement directly above its sources.
fn mult2_auto(b: &mut NetBuilder, lhs: Src, rhs: Src) -> Result<NodeId> {
    let base = 1 + src_layer(b, lhs).max(src_layer(b, rhs));
    mult2_block(b, lhs, rhs, base)
}

fn src_layer(b: &NetBuilder, src: Src) -> u32 {
    match src {
        Src::Input(_) => 0,
        Src::Node(id) => b.node_layer(id),
    }
}

/// Two-input network computing `x * y`. Size `(2, 4, 7)`.
pub fn build_mult2_quad() -> Result<QuantNet> {
    let mut b = NetBuilder::new(Alphabet::one_bit(), 2);
    let out = mult2_auto(&mut b, Src::Input(0), Src::Input(1))?;
    b.mark_output(out)?;
    b.finish()
}

/// `d`-input network computing the full product `x_1 ... x_d` by a
/// chain of pairwise blocks. Size `(2d-2, 4d-4, 7d-7)`.
pub fn build_multd_quad(d: usize) -> Result<QuantNet> {
    if d < 2 {
        return Err(Error::precondition(
            "product chains need at least two factors",
        ));
    }
    let mut b = NetBuilder::new(Alphabet::one_bit(), d as u32);
    let mut acc = Src::Input(0);
    for l in 1..d {
        let id = mult2_auto(&mut b, acc, Src::Input(l as u32))?;
        acc = Src::Node(id);
    }
    match acc {
        Src::Node(id) => b.mark_output(id)?,
        Src::Input(_) => unreachable!("d >= 2 always builds at least one block"),
    }
    b.finish()
}

/// Per-variable handles to the affine pair `(1 - x, x)` on layer 1.
/// Degrees above 1 also carry duplicate materializations: the first
/// degree-raising step multiplies `1 - x` and `x` by themselves, and a
/// self-product would need a weight of 2 on a single edge, which the
/// alphabet does not have. A second copy of each node keeps every
/// product block a uniform two-source pattern.
struct VarPair {
    one_minus: NodeId,
    plain: NodeId,
    one_minus_copy: Option<NodeId>,
    plain_copy: Option<NodeId>,
}

fn materialize_pairs(b: &mut NetBuilder, d: usize, with_copies: bool) -> Result<Vec<VarPair>> {
    let mut pairs = Vec::with_capacity(d);
    for l in 0..d {
        let input = Src::Input(l as u32);
        let one_minus = b.add_node_at(1, Activation::Identity, 1.0, &[(input, -1.0)])?;
        let plain = b.add_node_at(1, Activation::Identity, 0.0, &[(input, 1.0)])?;
        let (one_minus_copy, plain_copy) = if with_copies {
            (
                Some(b.add_node_at(1, Activation::Identity, 1.0, &[(input, -1.0)])?),
                Some(b.add_node_at(1, Activation::Identity, 0.0, &[(input, 1.0)])?),
            )
        } else {
            (None, None)
        };
        pairs.push(VarPair {
            one_minus,
            plain,
            one_minus_copy,
            plain_copy,
        });
    }
    Ok(pairs)
}

/// Builds the degree-`n` univariate basis triangle over one variable.
/// Returns the node ids of `b_{n,0} .. b_{n,n}`, all living on layer
/// `3n - 2`.
///
/// Row 1 is the affine pair itself. Raising row `m` to row `m + 1`
/// places squaring nodes on layer `3m - 1`: interior entries combine
/// two product blocks and a sum (9 nodes, 16 edges), the two endpoint
/// entries are single products shifted up one layer so the whole row
/// lands on `3m + 1` together (4 nodes, 7 edges each). Every row past
/// the first therefore adds exactly `(3, 9m + 8, 16m + 14)`.
fn raise_triangle(b: &mut NetBuilder, pair: &VarPair, n: usize) -> Result<Vec<NodeId>> {
    let mut row = vec![pair.one_minus, pair.plain];
    for m in 1..n {
        row = raise_row(b, pair, &row, m)?;
    }
    Ok(row)
}

/// One degree-raising step: takes row `m` (the `m + 1` nodes for
/// `b_{m,0} .. b_{m,m}`) and places row `m + 1` above it.
fn raise_row(b: &mut NetBuilder, pair: &VarPair, row: &[NodeId], m: usize) -> Result<Vec<NodeId>> {
    let x = Src::Node(pair.plain);
    let omx = Src::Node(pair.one_minus);
    let base = 3 * m as u32 - 1;
    let mut next = Vec::with_capacity(m + 2);
    // k = 0: (1 - x) * b_{m,0}, aligned to the sum layer. The first
    // step squares the affine pair, so it draws on the duplicate
    // copies.
    let low = if m == 1 {
        Src::Node(pair.one_minus_copy.expect("copies exist for n >= 2"))
    } else {
        Src::Node(row[0])
    };
    next.push(mult2_block(b, omx, low, base + 1)?);
    for k in 1..=m {
        let left = mult2_block(b, x, Src::Node(row[k - 1]), base)?;
        let right = mult2_block(b, omx, Src::Node(row[k]), base)?;
        let sum = b.add_node_at(
            base + 2,
            Activation::Identity,
            0.0,
            &[(Src::Node(left), 1.0), (Src::Node(right), 1.0)],
        )?;
        next.push(sum);
    }
    // k = m + 1: x * b_{m,m}.
    let high = if m == 1 {
        Src::Node(pair.plain_copy.expect("copies exist for n >= 2"))
    } else {
        Src::Node(row[m])
    };
    next.push(mult2_block(b, x, high, base + 1)?);
    Ok(next)
}

/// Measures what each degree-raising step actually costs. Entry
/// `m - 1` is the size added in going from row `m` to row `m + 1` of a
/// univariate triangle, for `m` in `1..n`. The one-time layer-1
/// materializations (the affine pair plus its duplicate copies) are
/// charged to the base, not to any row.
pub fn triangle_row_sizes(n: usize) -> Result<Vec<crate::qnn::SizeTriple>> {
    if n == 0 {
        return Err(Error::precondition(
            "basis networks need degree and dimension at least 1",
        ));
    }
    let mut b = NetBuilder::new(Alphabet::one_bit(), 1);
    let pairs = materialize_pairs(&mut b, 1, n >= 2)?;
    let mut row = vec![pairs[0].one_minus, pairs[0].plain];
    let mut deltas = Vec::with_capacity(n.saturating_sub(1));
    for m in 1..n {
        let before = b.size_snapshot();
        row = raise_row(&mut b, &pairs[0], &row, m)?;
        let after = b.size_snapshot();
        deltas.push(crate::qnn::SizeTriple::new(
            after.layers - before.layers,
            after.nodes - before.nodes,
            after.params - before.params,
        ));
    }
    Ok(deltas)
}

/// Network whose outputs are all `(n+1)^d` tensor-product basis values
/// of degree `n`, in row-major multi-index order. Exact.
pub fn build_bernstein_quad(n: usize, d: usize) -> Result<QuantNet> {
    build_bernstein_quad_with_cap(n, d, DEFAULT_OUTPUT_CAP)
}

pub fn build_bernstein_quad_with_cap(n: usize, d: usize, cap: usize) -> Result<QuantNet> {
    if n == 0 || d == 0 {
        return Err(Error::precondition(
            "basis networks need degree and dimension at least 1",
        ));
    }
    let outputs = (n + 1).checked_pow(d as u32).filter(|&c| c <= cap);
    let n_outputs = outputs.ok_or(Error::ResourceCap {
        what: "basis network outputs",
        needed: (n + 1).saturating_pow(d as u32),
        cap,
    })?;

    let mut b = NetBuilder::new(Alphabet::one_bit(), d as u32);
    let pairs = materialize_pairs(&mut b, d, n >= 2)?;
    let mut triangles = Vec::with_capacity(d);
    for pair in &pairs {
        triangles.push(raise_triangle(&mut b, pair, n)?);
    }

    if d == 1 {
        for &id in &triangles[0] {
            b.mark_output(id)?;
        }
        return b.finish();
    }

    // Chain the per-variable factors for every multi-index, row-major.
    let mut idx = vec![0usize; d];
    for _ in 0..n_outputs {
        let mut acc = Src::Node(triangles[0][idx[0]]);
        for l in 1..d {
            let id = mult2_auto(&mut b, acc, Src::Node(triangles[l][idx[l]]))?;
            acc = Src::Node(id);
        }
        match acc {
            Src::Node(id) => b.mark_output(id)?,
            Src::Input(_) => unreachable!(),
        }
        crate::tensor::increment_index(&mut idx, &vec![n + 1; d]);
    }
    b.finish()
}

/// Sums a basis network's outputs under one-bit signs, turning it into
/// the network for the signed combination. Grows the size by exactly
/// `(1, 1, number of basis functions)`.
pub fn attach_sign_layer(net: QuantNet, sigma: &SignTensor) -> Result<QuantNet> {
    attach_sign_readout(net, sigma)
}
