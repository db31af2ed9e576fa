use super::erf::{erf_derivative, erf_eval};
use super::{sign, ConstructionGroup as G, DeclaredProps, GrowthClass, Monotonicity, PointwiseFn};
use crate::error::{Error, Result};
use std::f64::consts::{E, FRAC_PI_2, PI};
use std::sync::OnceLock;

/// Alternative names accepted by [`lookup`].
pub const ALIASES: &[(&str, &str)] = &[("arctan", "arctan_scaled"), ("identity", "linear")];

const WELL: DeclaredProps = DeclaredProps::well_behaved();

fn build() -> Vec<PointwiseFn> {
    let log_growth = DeclaredProps::unbounded(GrowthClass::Logarithmic);
    let e_minus_1 = E - 1.0;
    vec![
        // natural
        PointwiseFn::new(
            "erf",
            "2/sqrt(pi) * int_0^x exp(-t^2) dt",
            erf_eval,
            erf_derivative,
            WELL,
            G::Natural,
        ),
        PointwiseFn::new(
            "tanh",
            "(e^x - e^-x) / (e^x + e^-x)",
            f64::tanh,
            |x: f64| 1.0 - x.tanh().powi(2),
            WELL,
            G::Natural,
        ),
        PointwiseFn::new(
            "arctan_scaled",
            "(2/pi) * arctan(x)",
            |x: f64| x.atan() / FRAC_PI_2,
            |x: f64| 2.0 / (PI * (1.0 + x * x)),
            WELL,
            G::Natural,
        ),
        // transformed basic
        PointwiseFn::new(
            "satursin",
            "sin(clip(x, -pi/2, pi/2))",
            |x: f64| x.clamp(-FRAC_PI_2, FRAC_PI_2).sin(),
            |x: f64| if x.abs() > FRAC_PI_2 { 0.0 } else { x.cos() },
            WELL,
            G::TransformedBasic,
        )
        .with_kinks([-FRAC_PI_2, FRAC_PI_2]),
        PointwiseFn::new(
            "isru",
            "x / sqrt(x^2 + 1)",
            |x: f64| x / (x * x + 1.0).sqrt(),
            |x: f64| (x * x + 1.0).powf(-1.5),
            WELL,
            G::TransformedBasic,
        ),
        PointwiseFn::new(
            "exproot",
            "sign(x) * (1 - exp(-sqrt(|x|)))",
            |x: f64| sign(x) * (1.0 - (-x.abs().sqrt()).exp()),
            |x: f64| {
                let r = x.abs().sqrt();
                if r == 0.0 {
                    0.0
                } else {
                    (-r).exp() / (2.0 * r)
                }
            },
            WELL,
            G::TransformedBasic,
        )
        .with_kinks([0.0]),
        PointwiseFn::new(
            "expsign",
            "sign(x) * (1 - exp(-|x|))",
            |x: f64| sign(x) * (1.0 - (-x.abs()).exp()),
            |x: f64| (-x.abs()).exp(),
            WELL,
            G::TransformedBasic,
        ),
        PointwiseFn::new(
            "relsign",
            "x / (sqrt(x^2 + 1) + 1)",
            |x: f64| x / ((x * x + 1.0).sqrt() + 1.0),
            |x: f64| {
                let r = (x * x + 1.0).sqrt();
                1.0 / (r * (r + 1.0))
            },
            WELL,
            G::TransformedBasic,
        ),
        PointwiseFn::new(
            "cubsign",
            "x^3 / (|x|^3 + 1)",
            |x: f64| x.powi(3) / (x.abs().powi(3) + 1.0),
            |x: f64| 3.0 * x * x / (x.abs().powi(3) + 1.0).powi(2),
            WELL,
            G::TransformedBasic,
        ),
        // clipped unbounded
        PointwiseFn::new(
            "arcsinh_clip",
            "clip(asinh(x), -1, 1)",
            |x: f64| x.asinh().clamp(-1.0, 1.0),
            |x: f64| {
                if x.asinh().abs() > 1.0 {
                    0.0
                } else {
                    1.0 / (x * x + 1.0).sqrt()
                }
            },
            WELL,
            G::ClippedUnbounded,
        )
        .with_kinks([-1f64.sinh(), 1f64.sinh()]),
        PointwiseFn::new(
            "linear_clip",
            "clip(x, -1, 1)",
            |x: f64| x.clamp(-1.0, 1.0),
            |x: f64| if x.abs() > 1.0 { 0.0 } else { 1.0 },
            WELL,
            G::ClippedUnbounded,
        )
        .with_kinks([-1.0, 1.0]),
        PointwiseFn::new(
            "logsign_clip",
            "clip(sign(x) * ln(|x| + 1), -1, 1)",
            |x: f64| (sign(x) * x.abs().ln_1p()).clamp(-1.0, 1.0),
            |x: f64| {
                if x.abs().ln_1p() > 1.0 {
                    0.0
                } else {
                    1.0 / (x.abs() + 1.0)
                }
            },
            WELL,
            G::ClippedUnbounded,
        )
        .with_kinks([-e_minus_1, e_minus_1]),
        PointwiseFn::new(
            "logquad_clip",
            "clip(sign(x) * ln(x^2 + 1), -1, 1)",
            |x: f64| (sign(x) * (x * x).ln_1p()).clamp(-1.0, 1.0),
            |x: f64| {
                if (x * x).ln_1p() > 1.0 {
                    0.0
                } else {
                    2.0 * x.abs() / (x * x + 1.0)
                }
            },
            WELL,
            G::ClippedUnbounded,
        )
        .with_kinks([-e_minus_1.sqrt(), e_minus_1.sqrt()]),
        PointwiseFn::new(
            "power23_clip",
            "clip(sign(x) * |x|^(2/3), -1, 1)",
            |x: f64| (sign(x) * x.abs().powf(2.0 / 3.0)).clamp(-1.0, 1.0),
            |x: f64| {
                let a = x.abs();
                if a > 1.0 || a == 0.0 {
                    0.0
                } else {
                    2.0 / 3.0 * a.powf(-1.0 / 3.0)
                }
            },
            WELL,
            G::ClippedUnbounded,
        )
        .with_kinks([-1.0, 0.0, 1.0]),
        // canonical ratio
        PointwiseFn::new(
            "smoothsign",
            "x / (1 + |x|)",
            |x: f64| x / (1.0 + x.abs()),
            |x: f64| 1.0 / (1.0 + x.abs()).powi(2),
            WELL,
            G::CanonicalRatio,
        ),
        PointwiseFn::new(
            "saturlog",
            "sign(x) * L / (L + 1), L = ln(|x| + 1)",
            |x: f64| {
                let l = x.abs().ln_1p();
                sign(x) * l / (l + 1.0)
            },
            |x: f64| {
                let l = x.abs().ln_1p();
                1.0 / ((x.abs() + 1.0) * (l + 1.0).powi(2))
            },
            WELL,
            G::CanonicalRatio,
        ),
        // growth-rate family
        PointwiseFn::new(
            "arcsinh",
            "asinh(x)",
            f64::asinh,
            |x: f64| 1.0 / (x * x + 1.0).sqrt(),
            log_growth,
            G::UnboundedProbe,
        ),
        PointwiseFn::new(
            "logsign",
            "sign(x) * ln(|x| + 1)",
            |x: f64| sign(x) * x.abs().ln_1p(),
            |x: f64| 1.0 / (x.abs() + 1.0),
            log_growth,
            G::UnboundedProbe,
        ),
        PointwiseFn::new(
            "logquad",
            "sign(x) * ln(x^2 + 1)",
            |x: f64| sign(x) * (x * x).ln_1p(),
            |x: f64| 2.0 * x.abs() / (x * x + 1.0),
            log_growth,
            G::UnboundedProbe,
        ),
        PointwiseFn::new(
            "power23",
            "sign(x) * |x|^(2/3)",
            |x: f64| sign(x) * x.abs().powf(2.0 / 3.0),
            |x: f64| {
                let a = x.abs();
                if a == 0.0 {
                    0.0
                } else {
                    2.0 / 3.0 * a.powf(-1.0 / 3.0)
                }
            },
            DeclaredProps::unbounded(GrowthClass::SublinearPower),
            G::UnboundedProbe,
        )
        .with_kinks([0.0]),
        PointwiseFn::new(
            "linear",
            "x",
            |x: f64| x,
            |_| 1.0,
            DeclaredProps::unbounded(GrowthClass::LinearOrFaster),
            G::UnboundedProbe,
        ),
        // monotonicity probes
        PointwiseFn::new(
            "sin",
            "sin(x)",
            f64::sin,
            f64::cos,
            WELL.with_monotonic(Monotonicity::NonMonotonic),
            G::NonMonotonicProbe,
        ),
        PointwiseFn::new(
            "dampx",
            "2x / (1 + x^2)",
            |x: f64| 2.0 * x / (1.0 + x * x),
            |x: f64| 2.0 * (1.0 - x * x) / (1.0 + x * x).powi(2),
            WELL.with_monotonic(Monotonicity::NonMonotonic),
            G::NonMonotonicProbe,
        ),
        PointwiseFn::new(
            "dampexp",
            "2.72 * x * exp(-|x|)",
            |x: f64| 2.72 * x * (-x.abs()).exp(),
            |x: f64| 2.72 * (-x.abs()).exp() * (1.0 - x.abs()),
            WELL.with_monotonic(Monotonicity::NonMonotonic),
            G::NonMonotonicProbe,
        ),
        PointwiseFn::new(
            "negerf",
            "-erf(x)",
            |x: f64| -erf_eval(x),
            |x: f64| -erf_derivative(x),
            WELL.with_monotonic(Monotonicity::Decreasing),
            G::NonMonotonicProbe,
        ),
    ]
}

fn shared() -> &'static [PointwiseFn] {
    static CATALOG: OnceLock<Vec<PointwiseFn>> = OnceLock::new();
    CATALOG.get_or_init(build)
}

/// Every registered function: the 16 search candidates followed by the
/// growth-rate and monotonicity probes.
pub fn catalog() -> Vec<PointwiseFn> {
    shared().to_vec()
}

/// The function-search candidate set.
pub fn search_candidates() -> Vec<PointwiseFn> {
    shared()
        .iter()
        .filter(|f| f.is_search_candidate())
        .cloned()
        .collect()
}

pub fn names() -> Vec<&'static str> {
    shared().iter().map(|f| f.name()).collect()
}

/// Unscaled arctan, range (-pi/2, pi/2). Kept out of the catalog; the catalog
/// entry is the range-unified `arctan_scaled`.
pub fn arctan_raw() -> PointwiseFn {
    PointwiseFn::new(
        "arctan_raw",
        "arctan(x)",
        f64::atan,
        |x: f64| 1.0 / (1.0 + x * x),
        WELL,
        G::Natural,
    )
}

/// Resolves a catalog name or alias. Unknown names carry the closest known
/// name as a suggestion.
pub fn lookup(name: &str) -> Result<PointwiseFn> {
    let canonical = ALIASES
        .iter()
        .find(|(alias, _)| *alias == name)
        .map_or(name, |(_, target)| target);
    if canonical == "arctan_raw" {
        return Ok(arctan_raw());
    }
    if let Some(f) = shared().iter().find(|f| f.name() == canonical) {
        return Ok(f.clone());
    }
    let suggestion = shared()
        .iter()
        .map(|f| f.name())
        .chain(ALIASES.iter().map(|(a, _)| *a))
        .chain(std::iter::once("arctan_raw"))
        .min_by_key(|known| strsim::levenshtein(name, known))
        .map(str::to_string);
    Err(Error::UnknownFunction {
        name: name.to_string(),
        suggestion,
    })
}
