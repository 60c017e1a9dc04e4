//! The seven subcommands. Four staged steps hand tensors between
//! files (coeffs, quantize, build, eval), three whole-pipeline views
//! rerun the library end to end and emit reports (verify, rates,
//! report).
//!
//! Artifacts land in the output directory under fixed names so that
//! consecutive stages find each other without extra flags: coeffs.bqt,
//! signs.bqt, net.qnn, then verify.json with errors.csv, rates.json
//! with rates.csv, and report.json with report.txt. Every emitted file
//! is a pure function of config plus seed, so a rerun reproduces the
//! previous bytes exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use bernquant_core::bernstein::GridSamples;
use bernquant_core::functions::{estimate_norms, Builtin, FunctionNorms};
use bernquant_core::qnn::{read_qnn, write_qnn, QuantNet};
use bernquant_core::quad::{attach_sign_layer, build_bernstein_quad_with_cap};
use bernquant_core::relu::{attach_sign_layer_relu, build_bernstein_relu_with_cap};
use bernquant_core::sigma_delta::{quantize_directional, Alphabet, SignTensor};
use bernquant_core::smoothing::{iterated_coeffs, CoeffTensor, SmoothnessSpec};
use bernquant_core::verify::{
    fit_rate, run_binary_bernstein, ActivationKind, ErrorReport, PipelineConfig, RateFit,
};

use crate::config::{CliError, Config, FunctionSource, MAX_DIMENSION};
use crate::tensor_io::{cube_degree, read_tensor, write_tensor};

/// Samples ready for the coefficient stage, whatever their origin.
struct Prepared {
    samples: GridSamples,
    norms: FunctionNorms,
    n: usize,
    d: usize,
    label: String,
}

fn out_path(cfg: &Config, name: &str) -> PathBuf {
    cfg.out.join(name)
}

fn ensure_out(cfg: &Config) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| {
        CliError::validation(format!(
            "cannot create output directory {}: {e}",
            cfg.out.display()
        ))
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::validation(format!("cannot encode {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
}

fn require_file(path: &Path, hint: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "no file at {}; {hint}",
            path.display()
        )))
    }
}

fn check_dimension_cap(d: usize) -> Result<(), CliError> {
    if d > MAX_DIMENSION {
        return Err(CliError::validation(format!(
            "tensor has {d} axes but the command line handles at most {MAX_DIMENSION}"
        )));
    }
    Ok(())
}

/// Cross-checks a degree or dimension read from a tensor file against
/// an explicitly configured value. Defaults never conflict: the file
/// is authoritative when the config stays silent.
fn check_explicit(file_value: usize, configured: usize, explicit: bool, what: &str, path: &Path) -> Result<(), CliError> {
    if explicit && file_value != configured {
        return Err(CliError::validation(format!(
            "{} holds {what} = {file_value} but the config asks {what} = {configured}",
            path.display()
        )));
    }
    Ok(())
}

fn describe_builtin(f: &Builtin) -> String {
    match f {
        Builtin::SineProduct { scale, freq } => format!("sine (scale {scale}, freq {freq})"),
        Builtin::SquareProduct { scale } => format!("square (scale {scale})"),
        Builtin::GaussianBump { scale, sharpness } => {
            format!("bump (scale {scale}, sharpness {sharpness})")
        }
        Builtin::TentProduct { scale } => format!("tent (scale {scale})"),
    }
}

/// Loads samples from the configured source. A builtin is sampled at
/// the configured degree; a sample file dictates its own degree and
/// dimension, and its norms are estimated from the grid.
fn load_samples(cfg: &Config) -> Result<Prepared, CliError> {
    match &cfg.function {
        FunctionSource::Builtin(f) => {
            let samples = f.sample(cfg.n, cfg.d)?;
            Ok(Prepared {
                norms: f.norms(cfg.d),
                samples,
                n: cfg.n,
                d: cfg.d,
                label: describe_builtin(f),
            })
        }
        FunctionSource::SampleFile(path) => {
            require_file(path, "the configured sample_file must exist")?;
            let tensor = read_tensor(path)?;
            let (n, d) = cube_degree(&tensor, "sample tensor")?;
            check_dimension_cap(d)?;
            check_explicit(n, cfg.n, cfg.n_explicit, "n", path)?;
            check_explicit(d, cfg.d, cfg.d_explicit, "d", path)?;
            let samples = GridSamples::from_tensor(n, tensor)?;
            let norms = estimate_norms(&samples);
            Ok(Prepared {
                samples,
                norms,
                n,
                d,
                label: format!("sample file {}", path.display()),
            })
        }
    }
}

/// The admissibility gate the end-to-end pipeline applies, restated
/// here so staged runs refuse the same inputs with the same reasons.
fn admissible(norms: &FunctionNorms, cfg: &Config, n: usize, d: usize) -> Result<SmoothnessSpec, CliError> {
    if !(norms.inf <= cfg.mu) {
        let origin = if norms.estimated { "estimated " } else { "" };
        return Err(CliError::validation(format!(
            "{origin}function sup norm {} exceeds the quantizer margin mu = {}",
            norms.inf, cfg.mu
        )));
    }
    let spec = SmoothnessSpec::new(cfg.s, cfg.mu, norms.c2.unwrap_or(0.0))?;
    let min_n = spec.min_degree(d);
    if n < min_n {
        return Err(CliError::validation(format!(
            "degree {n} is below the admissible minimum {min_n} for s = {}, mu = {}, d = {d}",
            cfg.s, cfg.mu
        )));
    }
    Ok(spec)
}

#[derive(Serialize)]
struct NormsOut {
    inf: f64,
    lip: f64,
    c2: Option<f64>,
    estimated: bool,
}

impl From<FunctionNorms> for NormsOut {
    fn from(n: FunctionNorms) -> Self {
        NormsOut {
            inf: n.inf,
            lip: n.lip,
            c2: n.c2,
            estimated: n.estimated,
        }
    }
}

#[derive(Serialize)]
struct CoeffsMeta {
    schema: u32,
    function: String,
    n: usize,
    d: usize,
    s: u32,
    smoothing_depth: usize,
    coeff_inf_norm: f64,
    norms: NormsOut,
}

/// `coeffs`: samples to smoothed Bernstein coefficients on disk.
pub fn coeffs(cfg: &Config) -> Result<(), CliError> {
    let prep = load_samples(cfg)?;
    let spec = admissible(&prep.norms, cfg, prep.n, prep.d)?;
    let tensor = iterated_coeffs(&prep.samples, &spec)?;

    ensure_out(cfg)?;
    let path = out_path(cfg, "coeffs.bqt");
    write_tensor(&path, tensor.values())?;
    write_json(
        &out_path(cfg, "coeffs.json"),
        &CoeffsMeta {
            schema: 1,
            function: prep.label.clone(),
            n: prep.n,
            d: prep.d,
            s: cfg.s,
            smoothing_depth: spec.iterations(),
            coeff_inf_norm: tensor.inf_norm(),
            norms: prep.norms.into(),
        },
    )?;
    println!(
        "coeffs: {} at n = {}, d = {} -> {} ({} values, sup {:.6})",
        prep.label,
        prep.n,
        prep.d,
        path.display(),
        tensor.values().data().len(),
        tensor.inf_norm()
    );
    Ok(())
}

#[derive(Serialize)]
struct QuantizeMeta {
    schema: u32,
    n: usize,
    d: usize,
    order: usize,
    ell: usize,
    levels: Vec<f64>,
    max_abs_u: f64,
    u_bound: f64,
}

/// `quantize`: coefficient tensor to a one-bit sign tensor plus
/// stability statistics.
pub fn quantize(cfg: &Config, coeffs_path: Option<&Path>) -> Result<(), CliError> {
    let path = coeffs_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_path(cfg, "coeffs.bqt"));
    require_file(&path, "run `bernquant coeffs` first or pass --coeffs")?;
    let tensor = read_tensor(&path)?;
    let (n, d) = cube_degree(&tensor, "coefficient tensor")?;
    check_dimension_cap(d)?;
    check_explicit(n, cfg.n, cfg.n_explicit, "n", &path)?;
    check_explicit(d, cfg.d, cfg.d_explicit, "d", &path)?;
    if cfg.axis >= d {
        return Err(CliError::validation(format!(
            "direction ell = {} exceeds the tensor dimension {d}",
            cfg.ell()
        )));
    }
    // Re-validate the input contract so a tensor edited out of range
    // fails here, not as quantizer noise.
    let coeffs = CoeffTensor::new(n, tensor)?;

    let order = cfg.s as usize;
    let alphabet = Alphabet::one_bit();
    let (signs, state) = quantize_directional(coeffs.values(), order, cfg.axis, &alphabet, cfg.u_bound)?;

    ensure_out(cfg)?;
    let signs_path = out_path(cfg, "signs.bqt");
    write_tensor(&signs_path, signs.values())?;
    write_json(
        &out_path(cfg, "quantize.json"),
        &QuantizeMeta {
            schema: 1,
            n,
            d,
            order,
            ell: cfg.ell(),
            levels: alphabet.levels().to_vec(),
            max_abs_u: state.max_abs_u,
            u_bound: cfg.u_bound,
        },
    )?;
    println!(
        "quantize: order {order} along direction {} -> {} (max |u| = {:.6}, bound {})",
        cfg.ell(),
        signs_path.display(),
        state.max_abs_u,
        cfg.u_bound
    );
    Ok(())
}

/// The relu accuracy budget used when neither flag nor config pins
/// one: tight enough that implementation error decays no slower than
/// the smoothing error it accompanies.
fn default_eps_net(n: usize, d: usize, s: u32) -> f64 {
    (n as f64 + 1.0).powi(-(d as i32)) * (n as f64).powf(-(s as f64) / 2.0)
}

/// `build`: sign tensor to a serialized network file.
pub fn build(cfg: &Config, signs_path: Option<&Path>, eps_flag: Option<f64>) -> Result<(), CliError> {
    let path = signs_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_path(cfg, "signs.bqt"));
    require_file(&path, "run `bernquant quantize` first or pass --signs")?;
    let tensor = read_tensor(&path)?;
    let (n, d) = cube_degree(&tensor, "sign tensor")?;
    check_dimension_cap(d)?;
    check_explicit(n, cfg.n, cfg.n_explicit, "n", &path)?;
    check_explicit(d, cfg.d, cfg.d_explicit, "d", &path)?;
    let signs = SignTensor::from_values(tensor, Alphabet::one_bit())?;

    let net = match cfg.activation {
        ActivationKind::Quad => {
            let base = build_bernstein_quad_with_cap(n, d, cfg.output_cap)?;
            attach_sign_layer(base, &signs)?
        }
        ActivationKind::Relu => {
            let eps = eps_flag
                .or(cfg.eps_net)
                .unwrap_or_else(|| default_eps_net(n, d, cfg.s));
            if !(eps > 0.0 && eps < 1.0) {
                return Err(CliError::validation(format!(
                    "accuracy budget eps must lie in (0, 1), got {eps}"
                )));
            }
            let base = build_bernstein_relu_with_cap(n, d, eps, cfg.output_cap)?;
            attach_sign_layer_relu(base, &signs)?
        }
    };

    ensure_out(cfg)?;
    let net_path = out_path(cfg, "net.qnn");
    write_qnn(&net, &net_path)?;
    let size = net.size();
    println!(
        "build: {} network for degree {n}, d = {d} -> {} (L = {}, N = {}, P = {})",
        cfg.activation_name(),
        net_path.display(),
        size.layers,
        size.nodes,
        size.params
    );
    Ok(())
}

fn parse_point(raw: &str, arity: usize) -> Result<Vec<f64>, CliError> {
    let coords = raw
        .split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>().map_err(|_| {
                CliError::validation(format!("point {raw:?}: {t:?} is not a number"))
            })
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    if coords.len() != arity {
        return Err(CliError::validation(format!(
            "point {raw:?} has {} coordinates but the network takes {arity}",
            coords.len()
        )));
    }
    if coords.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(CliError::validation(format!(
            "point {raw:?} lies outside [0,1]^{arity}"
        )));
    }
    Ok(coords)
}

fn joined(values: &[f64]) -> String {
    let mut text = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            text.push(',');
        }
        let _ = write!(text, "{v}");
    }
    text
}

/// `eval`: runs a serialized network at points given as comma-joined
/// coordinates, one CSV line per point.
pub fn eval(cfg: &Config, net_path: Option<&Path>, points: &[String]) -> Result<(), CliError> {
    let path = net_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_path(cfg, "net.qnn"));
    require_file(&path, "run `bernquant build` first or pass --net")?;
    let net = read_qnn(&path)?;
    let arity = net.input_arity() as usize;
    for raw in points {
        let coords = parse_point(raw, arity)?;
        let values = net.evaluate(&coords)?;
        println!("{},{}", joined(&coords), joined(&values));
    }
    Ok(())
}

/// Report fields shared by the sweep and single-run commands.
#[derive(Serialize)]
struct RunContext {
    schema: u32,
    function: String,
    d: usize,
    s: u32,
    mu: f64,
    ell: usize,
    activation: &'static str,
    region: &'static str,
    grid_resolution: usize,
    seed: u64,
    u_bound: f64,
}

fn context(cfg: &Config, f: &Builtin) -> RunContext {
    RunContext {
        schema: 1,
        function: describe_builtin(f),
        d: cfg.d,
        s: cfg.s,
        mu: cfg.mu,
        ell: cfg.ell(),
        activation: cfg.activation_name(),
        region: cfg.region_name(),
        grid_resolution: cfg.grid_resolution,
        seed: cfg.seed,
        u_bound: cfg.u_bound,
    }
}

fn require_builtin<'a>(cfg: &'a Config, cmd: &str) -> Result<&'a Builtin, CliError> {
    match &cfg.function {
        FunctionSource::Builtin(f) => Ok(f),
        FunctionSource::SampleFile(_) => Err(CliError::validation(format!(
            "{cmd} measures errors against the function off the sample grid, so it needs a \
             builtin function; sample files work with coeffs, quantize, build, and eval"
        ))),
    }
}

fn pipeline_config(cfg: &Config, f: Builtin, n: usize) -> PipelineConfig {
    let mut pc = PipelineConfig::new(f, cfg.d, cfg.s, cfg.mu, n);
    pc.axis = cfg.axis;
    pc.activation = cfg.activation;
    pc.region = cfg.region;
    pc.grid_resolution = cfg.grid_resolution;
    pc.u_bound = cfg.u_bound;
    pc.output_cap = cfg.output_cap;
    pc
}

fn sweep(cfg: &Config, f: Builtin) -> Result<Vec<ErrorReport>, CliError> {
    if cfg.n_sweep.len() < 4 {
        return Err(CliError::validation(format!(
            "config field `n_sweep`: rate fits need at least 4 degrees, got {:?}",
            cfg.n_sweep
        )));
    }
    let mut runs = Vec::with_capacity(cfg.n_sweep.len());
    for &n in &cfg.n_sweep {
        runs.push(run_binary_bernstein(&pipeline_config(cfg, f, n))?.report);
    }
    Ok(runs)
}

fn error_csv(runs: &[ErrorReport]) -> String {
    let mut text = String::from("n,approx_sup,quant_sup,impl_sup,total_sup,max_abs_u,L,N,P\n");
    for r in runs {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            r.n,
            r.approx_sup,
            r.quant_sup,
            r.impl_sup,
            r.total_sup,
            r.max_abs_u,
            r.net_size.layers,
            r.net_size.nodes,
            r.net_size.params
        );
    }
    text
}

#[derive(Serialize)]
struct VerifyReport {
    #[serde(flatten)]
    context: RunContext,
    runs: Vec<ErrorReport>,
    total_fit: RateFit,
}

/// `verify`: runs the pipeline over the degree sweep, reports every
/// error component per degree, and fits the total error rate.
pub fn verify(cfg: &Config) -> Result<(), CliError> {
    let f = *require_builtin(cfg, "verify")?;
    let runs = sweep(cfg, f)?;
    let totals: Vec<f64> = runs.iter().map(|r| r.total_sup).collect();
    let total_fit = fit_rate(&cfg.n_sweep, &totals)?;

    ensure_out(cfg)?;
    write_text(&out_path(cfg, "errors.csv"), &error_csv(&runs))?;
    let slope = total_fit.slope;
    let r2 = total_fit.r2;
    write_json(
        &out_path(cfg, "verify.json"),
        &VerifyReport {
            context: context(cfg, &f),
            runs,
            total_fit,
        },
    )?;
    println!(
        "verify: total error slope {slope:.3} (r2 {r2:.4}) over n = {:?}",
        cfg.n_sweep
    );
    println!(
        "verify: wrote {} and {}",
        out_path(cfg, "verify.json").display(),
        out_path(cfg, "errors.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct RatesReport {
    #[serde(flatten)]
    context: RunContext,
    n_values: Vec<usize>,
    approx_fit: RateFit,
    quant_fit: RateFit,
    total_fit: RateFit,
}

/// `rates`: the same sweep as verify, fitting each error component
/// that decays with degree. The implementation error is reported in
/// the CSV but not fitted: for quadratic networks it sits at rounding
/// level for every degree, which carries no rate.
pub fn rates(cfg: &Config) -> Result<(), CliError> {
    let f = *require_builtin(cfg, "rates")?;
    let runs = sweep(cfg, f)?;
    let pick = |get: fn(&ErrorReport) -> f64| -> Vec<f64> { runs.iter().map(get).collect() };
    let approx_fit = fit_rate(&cfg.n_sweep, &pick(|r| r.approx_sup))?;
    let quant_fit = fit_rate(&cfg.n_sweep, &pick(|r| r.quant_sup))?;
    let total_fit = fit_rate(&cfg.n_sweep, &pick(|r| r.total_sup))?;

    ensure_out(cfg)?;
    write_text(&out_path(cfg, "rates.csv"), &error_csv(&runs))?;
    println!(
        "rates: approx {:.3}, quant {:.3}, total {:.3} over n = {:?}",
        approx_fit.slope, quant_fit.slope, total_fit.slope, cfg.n_sweep
    );
    write_json(
        &out_path(cfg, "rates.json"),
        &RatesReport {
            context: context(cfg, &f),
            n_values: cfg.n_sweep.clone(),
            approx_fit,
            quant_fit,
            total_fit,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SingleReport {
    #[serde(flatten)]
    context: RunContext,
    run: ErrorReport,
}

fn render_report(cfg: &Config, f: &Builtin, report: &ErrorReport, net: &QuantNet) -> String {
    let spec = SmoothnessSpec::new(cfg.s, cfg.mu, f.norms(cfg.d).c2.unwrap_or(0.0))
        .expect("config validation already checked s and mu");
    let size = net.size();
    let mut text = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(text, "  {k:<18} {v}");
    };
    line("function", describe_builtin(f));
    line("dimension d", format!("{}", cfg.d));
    line(
        "smoothness s",
        format!(
            "{} (smoothing depth {}, quantizer order {})",
            cfg.s,
            spec.iterations(),
            cfg.s
        ),
    );
    line(
        "degree n",
        format!("{} (admissible minimum {})", report.n, spec.min_degree(cfg.d)),
    );
    line("margin mu", format!("{}", cfg.mu));
    line("direction ell", format!("{}", cfg.ell()));
    line("activation", cfg.activation_name().to_string());
    line(
        "network",
        format!("L = {}, N = {}, P = {}", size.layers, size.nodes, size.params),
    );
    line(
        "region",
        format!("{}, {} points per axis", report.region, report.grid_resolution),
    );
    line("coeff sup", format!("{:.6}", report.coeff_inf_norm));
    line("max |u|", format!("{:.6}", report.max_abs_u));
    line("approx error", format!("{:.6e}", report.approx_sup));
    line("quant error", format!("{:.6e}", report.quant_sup));
    line("impl error", format!("{:.6e}", report.impl_sup));
    line("total error", format!("{:.6e}", report.total_sup));
    format!("binary bernstein report\n{text}")
}

/// `report`: one end-to-end run at the configured degree, leaving the
/// network file, a JSON record, and a plain-text summary behind.
pub fn report(cfg: &Config) -> Result<(), CliError> {
    let f = *require_builtin(cfg, "report")?;
    let out = run_binary_bernstein(&pipeline_config(cfg, f, cfg.n))?;

    ensure_out(cfg)?;
    write_qnn(&out.net, out_path(cfg, "net.qnn"))?;
    write_json(
        &out_path(cfg, "report.json"),
        &SingleReport {
            context: context(cfg, &f),
            run: out.report.clone(),
        },
    )?;
    let text = render_report(cfg, &f, &out.report, &out.net);
    write_text(&out_path(cfg, "report.txt"), &text)?;
    print!("{text}");
    println!(
        "wrote {}, {}, {}",
        out_path(cfg, "net.qnn").display(),
        out_path(cfg, "report.json").display(),
        out_path(cfg, "report.txt").display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_checked_for_arity_and_range() {
        assert_eq!(parse_point("0.25, 0.5", 2).unwrap(), vec![0.25, 0.5]);
        let err = parse_point("0.25", 2).unwrap_err();
        assert!(err.to_string().contains("2"), "{err}");
        let err = parse_point("1.5", 1).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
        assert!(parse_point("0.1,oops", 2).is_err());
    }

    #[test]
    fn the_default_relu_budget_tracks_degree_dimension_and_order() {
        let eps = default_eps_net(64, 1, 2);
        assert!((eps - 1.0 / (65.0 * 64.0)).abs() < 1e-18);
        assert!(default_eps_net(64, 2, 2) < eps);
        assert!(default_eps_net(64, 1, 4) < eps);
    }
}
