//! Cross-module behavior: stage plumbing, determinism, and the
//! randomized invariants that hold across the whole parameter space.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bernquant_core::bernstein::basis_row;
use bernquant_core::functions::Builtin;
use bernquant_core::qnn::{decode_qnn, encode_qnn, Activation, NetBuilder, QuantNet, Src};
use bernquant_core::sigma_delta::{
    backward_difference, quantize_1d, quantize_directional, quantization_error_envelope, Alphabet,
    DEFAULT_U_BOUND,
};
use bernquant_core::smoothing::{iterated_coeffs, SmoothnessSpec};
use bernquant_core::tensor::NdTensor;
use bernquant_core::verify::{run_binary_bernstein, PipelineConfig, Region};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_partition_of_unity(n in 1usize..=64, x in 0.0f64..=1.0) {
        let mut row = Vec::new();
        basis_row(n, x, &mut row);
        let sum: f64 = row.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "n={n} x={x}: sum {sum}");
        prop_assert!(row.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn prop_sigma_delta_reconstruction(
        seed in any::<u64>(),
        len in 5usize..80,
        r in 1usize..=2,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.6..0.6)).collect();
        let (q, u) = quantize_1d(&y, r, &Alphabet::one_bit(), DEFAULT_U_BOUND).unwrap();
        let diff = backward_difference(&u, r);
        for k in 0..len {
            prop_assert!((y[k] - q[k] - diff[k]).abs() <= 1e-12);
        }
        if r == 1 {
            prop_assert!(u.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn prop_running_means_of_the_residual_shrink(seed in any::<u64>(), len in 10usize..200) {
        // First-order noise shaping telescopes: the partial sums of
        // y - q equal u_m - u_0, so running means decay like 1/m.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.9..0.9)).collect();
        let (q, _) = quantize_1d(&y, 1, &Alphabet::one_bit(), DEFAULT_U_BOUND).unwrap();
        let mut partial = 0.0;
        for m in 1..=len {
            partial += y[m - 1] - q[m - 1];
            prop_assert!(
                partial.abs() / m as f64 <= 2.0 / m as f64 + 1e-12,
                "mean over {m} terms is {}",
                partial / m as f64
            );
        }
    }

    #[test]
    fn prop_serialized_nets_round_trip(seed in any::<u64>()) {
        let net = random_net(seed);
        let bytes = encode_qnn(&net).unwrap();
        let back = decode_qnn(&bytes).unwrap();
        prop_assert_eq!(net.nodes(), back.nodes());
        prop_assert_eq!(net.outputs(), back.outputs());
        prop_assert_eq!(net.input_arity(), back.input_arity());
        prop_assert_eq!(net.alphabet().levels(), back.alphabet().levels());
        let mine: Vec<_> = net.edges().collect();
        let theirs: Vec<_> = back.edges().collect();
        prop_assert_eq!(mine, theirs);

        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
        let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let a = net.evaluate(&x).unwrap();
        let b = back.evaluate(&x).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Random but structurally valid two-input network over a random
/// alphabet, with auto-layered nodes and one or two outputs.
fn random_net(seed: u64) -> QuantNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet = if rng.gen_bool(0.5) {
        Alphabet::one_bit()
    } else {
        Alphabet::three_bit()
    };
    let levels: Vec<f64> = alphabet.levels().to_vec();
    let mut b = NetBuilder::new(alphabet, 2);
    let n_nodes = rng.gen_range(1..12usize);
    for i in 0..n_nodes {
        let pool: Vec<Src> = (0..2u32)
            .map(Src::Input)
            .chain((0..i as u32).map(Src::Node))
            .collect();
        let mut picked = pool.clone();
        let count = rng.gen_range(1..=pool.len().min(3));
        // Partial shuffle to draw distinct sources.
        for j in 0..count {
            let swap = rng.gen_range(j..picked.len());
            picked.swap(j, swap);
        }
        let edges: Vec<(Src, f64)> = picked[..count]
            .iter()
            .map(|&s| (s, levels[rng.gen_range(0..levels.len())]))
            .collect();
        let bias = if rng.gen_bool(0.5) {
            0.0
        } else {
            levels[rng.gen_range(0..levels.len())]
        };
        let act = match rng.gen_range(0..3u8) {
            0 => Activation::Relu,
            1 => Activation::Quad,
            _ => Activation::Identity,
        };
        b.add_node(act, bias, &edges).unwrap();
    }
    let last = (n_nodes - 1) as u32;
    b.mark_output(last).unwrap();
    if n_nodes > 1 && rng.gen_bool(0.4) {
        b.mark_output(rng.gen_range(0..last)).unwrap();
    }
    b.finish().unwrap()
}

#[test]
fn staged_calls_match_the_pipeline_bit_for_bit() {
    let f = Builtin::GaussianBump { scale: 0.4, sharpness: 4.0 };
    let mut config = PipelineConfig::new(f, 1, 2, 0.5, 24);
    config.grid_resolution = 101;
    let out = run_binary_bernstein(&config).unwrap();

    let norms = f.norms(1);
    let spec = SmoothnessSpec::new(2, 0.5, norms.c2.unwrap()).unwrap();
    let samples = f.sample(24, 1).unwrap();
    let coeffs = iterated_coeffs(&samples, &spec).unwrap();
    assert_eq!(coeffs.values().data(), out.coeffs.values().data());

    let (signs, state) =
        quantize_directional(coeffs.values(), 2, 0, &Alphabet::one_bit(), config.u_bound).unwrap();
    assert_eq!(signs.values().data(), out.signs.values().data());
    assert_eq!(state.max_abs_u, out.state.max_abs_u);
}

#[test]
fn pipeline_reports_are_deterministic() {
    let f = Builtin::SineProduct { scale: 0.4, freq: 1 };
    let mut config = PipelineConfig::new(f, 1, 2, 0.5, 32);
    config.grid_resolution = 201;
    let a = run_binary_bernstein(&config).unwrap();
    let b = run_binary_bernstein(&config).unwrap();
    let ja = serde_json::to_string(&a.report).unwrap();
    let jb = serde_json::to_string(&b.report).unwrap();
    assert_eq!(ja, jb);
    let ea = encode_qnn(&a.net).unwrap();
    let eb = encode_qnn(&b.net).unwrap();
    assert_eq!(ea, eb);
}

#[test]
fn implementation_error_stays_inside_the_relu_budget() {
    // The network accuracy is chosen as (n+1)^{-d} n^{-s/2} per basis
    // function, so the one-bit combination of n+1 of them can drift
    // from the polynomial by at most n^{-s/2}.
    for n in [8usize, 16] {
        let f = Builtin::SineProduct { scale: 0.4, freq: 1 };
        let mut config = PipelineConfig::new(f, 1, 2, 0.5, n);
        config.activation = bernquant_core::verify::ActivationKind::Relu;
        config.grid_resolution = 101;
        let out = run_binary_bernstein(&config).unwrap();
        let budget = (n as f64).powf(-1.0);
        assert!(
            out.report.impl_sup <= budget,
            "n={n}: impl {} > {budget}",
            out.report.impl_sup
        );
    }
}

#[test]
fn transposed_coefficients_quantize_to_transposed_signs() {
    // Directional quantization acts on fibers independently, so
    // transposing a 2-D tensor and switching the axis must commute.
    let f = Builtin::GaussianBump { scale: 0.4, sharpness: 4.0 };
    let samples = f.sample(16, 2).unwrap();
    let a = samples.values();
    let (along0, _) = quantize_directional(a, 2, 0, &Alphabet::one_bit(), DEFAULT_U_BOUND).unwrap();
    let (along1, _) = quantize_directional(a, 2, 1, &Alphabet::one_bit(), DEFAULT_U_BOUND).unwrap();

    // The bump is symmetric in its two arguments, so the transpose of
    // the tensor is itself and axis-1 signs are the axis-0 signs with
    // indices swapped.
    let t = NdTensor::from_fn(&[17, 17], |idx| along0.values().get(&[idx[1], idx[0]]));
    assert_eq!(t.data(), along1.values().data());
}

#[test]
fn loosened_envelope_constant_is_violated_somewhere() {
    // Negative control for the first-order envelope check: half the
    // certified constant must fail on some grid point, otherwise the
    // pointwise check would be vacuous.
    let f = Builtin::SineProduct { scale: 0.4, freq: 1 };
    let n = 16;
    let samples = f.sample(n, 1).unwrap();
    let (signs, _) =
        quantize_directional(samples.values(), 1, 0, &Alphabet::one_bit(), DEFAULT_U_BOUND)
            .unwrap();
    let axis = Region::Full.axis_points(401);
    let fb = bernquant_core::bernstein::eval_coeff_on_grid(samples.values(), n, &axis).unwrap();
    let fq = bernquant_core::bernstein::eval_coeff_on_grid(signs.values(), n, &axis).unwrap();
    let mut violated = false;
    for (i, &x) in axis.iter().enumerate() {
        let err = (fb.data()[i] - fq.data()[i]).abs();
        let half = 0.5 * quantization_error_envelope(n, 1, x).unwrap();
        if err > half {
            violated = true;
            break;
        }
    }
    assert!(violated, "half the envelope still bounded every point");
}

#[test]
fn builder_snapshots_add_up() {
    let mut b = NetBuilder::new(Alphabet::one_bit(), 2);
    let s0 = b.size_snapshot();
    assert_eq!((s0.layers, s0.nodes, s0.params), (0, 0, 0));
    let a = b.add_node(Activation::Quad, 0.0, &[(Src::Input(0), 1.0)]).unwrap();
    let s1 = b.size_snapshot();
    assert_eq!((s1.layers, s1.nodes, s1.params), (1, 1, 1));
    b.add_node(
        Activation::Identity,
        0.0,
        &[(Src::Node(a), 1.0), (Src::Input(1), -1.0)],
    )
    .unwrap();
    let s2 = b.size_snapshot();
    assert_eq!((s2.layers, s2.nodes, s2.params), (2, 2, 3));
}

#[test]
fn oversized_degree_requests_fail_loudly() {
    // Resource caps must name what overflowed rather than thrash.
    let err = bernquant_core::quad::build_bernstein_quad_with_cap(100, 3, 1 << 10).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("cap"), "message: {msg}");
}
