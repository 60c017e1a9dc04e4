//! Config ingestion: a schema-versioned JSON file, flag overrides on
//! top, then field-level validation into a fully resolved [`Config`].
//!
//! Every knob has a default, so the empty config `{}` (or no config at
//! all) describes a complete run: the scaled sine on [0,1], s = 2,
//! mu = 0.5, n = 64, first direction, quadratic activation, interior
//! region at 401 points per axis.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use bernquant_core::functions::Builtin;
use bernquant_core::quad::DEFAULT_OUTPUT_CAP;
use bernquant_core::sigma_delta::DEFAULT_U_BOUND;
use bernquant_core::verify::{ActivationKind, Region};
use bernquant_core::Error;

/// Largest dimension the command line accepts; (n+1)^d tensors grow
/// too fast past this.
pub const MAX_DIMENSION: usize = 4;

const SCHEMA_VERSION: u32 = 1;

/// What went wrong, split by exit code: 2 for bad input, 3 for a run
/// that overflowed.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Overflow(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Overflow(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Overflow(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_overflow() {
            CliError::Overflow(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// The config file as written: everything optional, unknown fields
/// rejected so typos fail loudly.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    schema: Option<u32>,
    function: Option<FunctionField>,
    d: Option<usize>,
    s: Option<u32>,
    mu: Option<f64>,
    n: Option<usize>,
    n_sweep: Option<Vec<usize>>,
    ell: Option<usize>,
    activation: Option<String>,
    eps_net: Option<f64>,
    grid_resolution: Option<usize>,
    region: Option<String>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    u_bound: Option<f64>,
    output_cap: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionField {
    name: Option<String>,
    scale: Option<f64>,
    freq: Option<u32>,
    sharpness: Option<f64>,
    sample_file: Option<PathBuf>,
}

/// Flag values that override config fields.
#[derive(Debug, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub s: Option<u32>,
    pub mu: Option<f64>,
    pub activation: Option<String>,
    pub ell: Option<usize>,
    pub grid: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Where the function comes from: a closed-form built-in, or a grid
/// tensor file whose norms get estimated.
#[derive(Debug, Clone)]
pub enum FunctionSource {
    Builtin(Builtin),
    SampleFile(PathBuf),
}

/// A fully resolved run description.
#[derive(Debug, Clone)]
pub struct Config {
    pub function: FunctionSource,
    pub d: usize,
    /// True when `d` was given explicitly rather than defaulted; a
    /// sample file must then agree with it.
    pub d_explicit: bool,
    pub s: u32,
    pub mu: f64,
    pub n: usize,
    pub n_explicit: bool,
    pub n_sweep: Vec<usize>,
    /// Zero-based quantization axis (the config speaks 1-based `ell`).
    pub axis: usize,
    pub activation: ActivationKind,
    pub eps_net: Option<f64>,
    pub grid_resolution: usize,
    pub region: Region,
    pub out: PathBuf,
    pub seed: u64,
    pub u_bound: f64,
    pub output_cap: usize,
}

impl Config {
    /// 1-based direction for file and report output.
    pub fn ell(&self) -> usize {
        self.axis + 1
    }

    pub fn activation_name(&self) -> &'static str {
        match self.activation {
            ActivationKind::Quad => "quad",
            ActivationKind::Relu => "relu",
        }
    }

    pub fn region_name(&self) -> &'static str {
        match self.region {
            Region::Full => "full",
            Region::Interior => "interior",
        }
    }
}

fn fail(field: &str, why: impl fmt::Display) -> CliError {
    CliError::validation(format!("config field `{field}`: {why}"))
}

fn resolve_function(field: FunctionField) -> Result<FunctionSource, CliError> {
    if let Some(path) = field.sample_file {
        if field.name.is_some() {
            return Err(fail(
                "function",
                "give either a builtin `name` or a `sample_file`, not both",
            ));
        }
        for (set, what) in [
            (field.scale.is_some(), "scale"),
            (field.freq.is_some(), "freq"),
            (field.sharpness.is_some(), "sharpness"),
        ] {
            if set {
                return Err(fail(
                    &format!("function.{what}"),
                    "only meaningful for builtin functions",
                ));
            }
        }
        return Ok(FunctionSource::SampleFile(path));
    }

    let name = field.name.as_deref().unwrap_or("sine");
    let scale = field.scale.unwrap_or(0.4);
    let builtin = match name {
        "sine" => Builtin::SineProduct {
            scale,
            freq: field.freq.unwrap_or(1),
        },
        "square" | "bump" | "tent" => {
            if field.freq.is_some() {
                return Err(fail(
                    "function.freq",
                    "only meaningful for the sine family",
                ));
            }
            match name {
                "square" => Builtin::SquareProduct { scale },
                "tent" => Builtin::TentProduct { scale },
                _ => Builtin::GaussianBump {
                    scale,
                    sharpness: field.sharpness.unwrap_or(4.0),
                },
            }
        }
        other => {
            return Err(fail(
                "function.name",
                format!("unknown builtin {other:?}; expected sine, square, bump, or tent"),
            ))
        }
    };
    if builtin.name() != "bump" && field.sharpness.is_some() {
        return Err(fail(
            "function.sharpness",
            "only meaningful for the bump family",
        ));
    }
    builtin.validated().map_err(|e| fail("function", e))?;
    Ok(FunctionSource::Builtin(builtin))
}

/// Reads the config file (when given), applies flag overrides, and
/// validates every field.
pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Config, CliError> {
    let file: ConfigFile = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                CliError::validation(format!("cannot read config {}: {e}", p.display()))
            })?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("config: {e}")))?
        }
        None => ConfigFile::default(),
    };

    let schema = file.schema.unwrap_or(SCHEMA_VERSION);
    if schema != SCHEMA_VERSION {
        return Err(fail(
            "schema",
            format!("this build reads schema {SCHEMA_VERSION}, file declares {schema}"),
        ));
    }

    let d_explicit = file.d.is_some();
    let d = file.d.unwrap_or(1);
    if d == 0 || d > MAX_DIMENSION {
        return Err(fail(
            "d",
            format!("dimension must be between 1 and {MAX_DIMENSION}, got {d}"),
        ));
    }

    let s = overrides.s.or(file.s).unwrap_or(2);
    if s == 0 {
        return Err(fail("s", "smoothness order must be at least 1"));
    }

    let mu = overrides.mu.or(file.mu).unwrap_or(0.5);
    if !(mu > 0.0 && mu < 1.0) {
        return Err(fail(
            "mu",
            format!("margin must lie strictly between 0 and 1, got {mu}"),
        ));
    }

    let n_explicit = overrides.n.is_some() || file.n.is_some();
    let n = overrides.n.or(file.n).unwrap_or(64);
    if n == 0 {
        return Err(fail("n", "degree must be at least 1"));
    }

    let n_sweep = file.n_sweep.unwrap_or_else(|| vec![16, 32, 64, 128, 256]);
    if n_sweep.is_empty() || n_sweep.windows(2).any(|w| w[0] >= w[1]) || n_sweep[0] == 0 {
        return Err(fail(
            "n_sweep",
            "degrees must be positive and strictly increasing",
        ));
    }

    let ell = overrides.ell.or(file.ell).unwrap_or(1);
    if ell == 0 || ell > d {
        return Err(fail(
            "ell",
            format!("direction is 1-based and must not exceed d = {d}, got {ell}"),
        ));
    }

    let activation = match overrides
        .activation
        .or(file.activation)
        .unwrap_or_else(|| "quad".into())
        .as_str()
    {
        "quad" => ActivationKind::Quad,
        "relu" => ActivationKind::Relu,
        other => {
            return Err(fail(
                "activation",
                format!("expected \"quad\" or \"relu\", got {other:?}"),
            ))
        }
    };

    if let Some(eps) = file.eps_net {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(fail(
                "eps_net",
                format!("accuracy budget must lie in (0, 1), got {eps}"),
            ));
        }
    }

    let grid_resolution = overrides
        .grid
        .or(file.grid_resolution)
        .unwrap_or(if d <= 2 { 401 } else { 51 });
    if grid_resolution < 2 {
        return Err(fail("grid_resolution", "need at least 2 points per axis"));
    }

    let region = match file.region.as_deref().unwrap_or("interior") {
        "interior" => Region::Interior,
        "full" => Region::Full,
        other => {
            return Err(fail(
                "region",
                format!("expected \"interior\" or \"full\", got {other:?}"),
            ))
        }
    };

    let u_bound = file.u_bound.unwrap_or(DEFAULT_U_BOUND);
    if !(u_bound.is_finite() && u_bound > 0.0) {
        return Err(fail("u_bound", "stability bound must be positive and finite"));
    }

    let output_cap = file.output_cap.unwrap_or(DEFAULT_OUTPUT_CAP);
    if output_cap == 0 {
        return Err(fail("output_cap", "cap must be at least 1"));
    }

    Ok(Config {
        function: resolve_function(file.function.unwrap_or_default())?,
        d,
        d_explicit,
        s,
        mu,
        n,
        n_explicit,
        n_sweep,
        axis: ell - 1,
        activation,
        eps_net: file.eps_net,
        grid_resolution,
        region,
        out: overrides.out.or(file.out).unwrap_or_else(|| "out".into()),
        seed: file.seed.unwrap_or(0),
        u_bound,
        output_cap,
    })
}
