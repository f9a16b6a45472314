//! Continuous problem data: coefficient profiles, control gains, the delay
//! channel, degeneracy classification and the full chain of certificate
//! constants.

use crate::{Error, Result};

/// Flexural rigidity profile `sigma(x)` on `(0, 1]`.
///
/// The power law `x^alpha` is the canonical family; tabulated profiles are
/// interpolated linearly away from the origin and by a fitted power law on
/// the first segment when the profile vanishes at `x = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum RigidityProfile {
    PowerLaw { alpha: f64 },
    Constant { value: f64 },
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

impl RigidityProfile {
    pub fn power_law(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidProfile(format!(
                "power-law exponent must be positive, got {alpha}"
            )));
        }
        Ok(Self::PowerLaw { alpha })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidProfile(format!(
                "constant rigidity must be positive, got {value}"
            )));
        }
        Ok(Self::Constant { value })
    }

    pub fn tabulated(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 3 {
            return Err(Error::InvalidProfile(
                "tabulated rigidity needs at least 3 samples with matching lengths".into(),
            ));
        }
        if xs[0] != 0.0 || (*xs.last().unwrap() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProfile(
                "tabulated rigidity samples must span [0, 1]".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProfile(
                "tabulated rigidity abscissae must be strictly increasing".into(),
            ));
        }
        if values.iter().skip(1).any(|&v| v <= 0.0) || values[0] < 0.0 {
            return Err(Error::InvalidProfile(
                "tabulated rigidity must be positive away from the origin".into(),
            ));
        }
        Ok(Self::Tabulated { xs, values })
    }

    /// Evaluates `sigma(x)` for `x` in `(0, 1]`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::PowerLaw { alpha } => x.powf(*alpha),
            Self::Constant { value } => *value,
            Self::Tabulated { xs, values } => {
                let (seg, t) = locate(xs, x);
                if seg == 0 && values[0] == 0.0 {
                    // vanishing origin: power fit through the first two
                    // positive samples
                    let p = fitted_exponent(xs, values);
                    values[1] * (x / xs[1]).powf(p)
                } else {
                    values[seg] + t * (values[seg + 1] - values[seg])
                }
            }
        }
    }

    /// Evaluates `sigma'(x)` for `x` in `(0, 1]`.
    pub fn eval_deriv(&self, x: f64) -> f64 {
        match self {
            Self::PowerLaw { alpha } => alpha * x.powf(alpha - 1.0),
            Self::Constant { .. } => 0.0,
            Self::Tabulated { xs, values } => {
                let (seg, _) = locate(xs, x);
                if seg == 0 && values[0] == 0.0 {
                    let p = fitted_exponent(xs, values);
                    values[1] * p * (x / xs[1]).powf(p - 1.0) / xs[1]
                } else {
                    (values[seg + 1] - values[seg]) / (xs[seg + 1] - xs[seg])
                }
            }
        }
    }

    /// Value at the controlled end `x = 1`.
    pub fn at_one(&self) -> f64 {
        self.eval(1.0)
    }

    /// True when the profile vanishes at the clamped end.
    pub fn vanishes_at_origin(&self) -> bool {
        match self {
            Self::PowerLaw { .. } => true,
            Self::Constant { .. } => false,
            Self::Tabulated { values, .. } => values[0] == 0.0,
        }
    }
}

fn locate(xs: &[f64], x: f64) -> (usize, f64) {
    let n = xs.len();
    let mut seg = n - 2;
    for i in 0..n - 1 {
        if x <= xs[i + 1] {
            seg = i;
            break;
        }
    }
    let t = (x - xs[seg]) / (xs[seg + 1] - xs[seg]);
    (seg, t)
}

fn fitted_exponent(xs: &[f64], values: &[f64]) -> f64 {
    (values[2] / values[1]).ln() / (xs[2] / xs[1]).ln()
}

/// Axial force profile `q(x)` with its uniform bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum AxialForceProfile {
    Constant { value: f64 },
    Affine { a: f64, b: f64 },
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
}

/// Uniform bounds of an axial profile: `0 < q0 <= q <= q1`, `|q'| <= q2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxialBounds {
    pub q0: f64,
    pub q1: f64,
    pub q2: f64,
}

impl AxialForceProfile {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::InvalidProfile(format!(
                "constant axial force must be positive, got {value}"
            )));
        }
        Ok(Self::Constant { value })
    }

    pub fn affine(a: f64, b: f64) -> Result<Self> {
        let prof = Self::Affine { a, b };
        if prof.bounds().q0 <= 0.0 {
            return Err(Error::InvalidProfile(format!(
                "affine axial force {a} + {b} x must stay positive on [0, 1]"
            )));
        }
        Ok(prof)
    }

    pub fn tabulated(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(Error::InvalidProfile(
                "tabulated axial force needs at least 2 samples with matching lengths".into(),
            ));
        }
        if xs[0] != 0.0 || (*xs.last().unwrap() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProfile(
                "tabulated axial force samples must span [0, 1]".into(),
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidProfile(
                "tabulated axial force abscissae must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidProfile(
                "tabulated axial force must be strictly positive".into(),
            ));
        }
        Ok(Self::Tabulated { xs, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Affine { a, b } => a + b * x,
            Self::Tabulated { xs, values } => {
                let (seg, t) = locate(xs, x);
                values[seg] + t * (values[seg + 1] - values[seg])
            }
        }
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        match self {
            Self::Constant { .. } => 0.0,
            Self::Affine { b, .. } => *b,
            Self::Tabulated { xs, values } => {
                let (seg, _) = locate(xs, x);
                (values[seg + 1] - values[seg]) / (xs[seg + 1] - xs[seg])
            }
        }
    }

    pub fn at_one(&self) -> f64 {
        self.eval(1.0)
    }

    pub fn bounds(&self) -> AxialBounds {
        match self {
            Self::Constant { value } => AxialBounds {
                q0: *value,
                q1: *value,
                q2: 0.0,
            },
            Self::Affine { a, b } => AxialBounds {
                q0: a.min(a + b),
                q1: a.max(a + b),
                q2: b.abs(),
            },
            Self::Tabulated { xs, values } => {
                let q0 = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let q1 = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let q2 = xs
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
                    .fold(0.0, f64::max);
                AxialBounds { q0, q1, q2 }
            }
        }
    }
}

/// Control gains at the free end.
///
/// `kappa_d` may take either sign; the remaining gains are nonnegative.
/// `kappa_d = 0` is allowed (inert delay channel) and flagged by the
/// admissibility report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSet {
    pub kappa_r: f64,
    pub kappa_a: f64,
    pub kappa_v: f64,
    pub kappa_d: f64,
    pub kappa_b: f64,
}

impl GainSet {
    pub fn new(kappa_r: f64, kappa_a: f64, kappa_v: f64, kappa_d: f64, kappa_b: f64) -> Result<Self> {
        for (name, v) in [("kr", kappa_r), ("ka", kappa_a), ("kv", kappa_v), ("kb", kappa_b)] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Assumption(format!(
                    "gain {name} must be nonnegative and finite, got {v}"
                )));
            }
        }
        if !kappa_d.is_finite() {
            return Err(Error::Assumption("gain kd must be finite".into()));
        }
        Ok(Self {
            kappa_r,
            kappa_a,
            kappa_v,
            kappa_d,
            kappa_b,
        })
    }
}

/// Requested weight of the delay term in the state inner product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaSpec {
    /// Midpoint of the admissible window `(|kd|, 2 kv - |kd|)`, i.e. `kv`.
    Auto,
    Value(f64),
}

/// Analytic expression tags for initial/history data. Deliberately a closed
/// set so scenarios stay deterministic and parseable.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Zero,
    Const(f64),
    /// `sum_k amp_k sin(omega_k x)`
    SinModes(Vec<(f64, f64)>),
    /// `sum_k c_k x^k`
    Poly(Vec<f64>),
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Const(c) => *c,
            Self::SinModes(modes) => modes.iter().map(|(a, w)| a * (w * x).sin()).sum(),
            Self::Poly(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck),
        }
    }

    pub fn eval_deriv(&self, x: f64) -> f64 {
        match self {
            Self::Zero | Self::Const(_) => 0.0,
            Self::SinModes(modes) => modes.iter().map(|(a, w)| a * w * (w * x).cos()).sum(),
            Self::Poly(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, &ck)| acc * x + k as f64 * ck),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::Const(c) => *c == 0.0,
            Self::SinModes(m) => m.iter().all(|(a, _)| *a == 0.0),
            Self::Poly(c) => c.iter().all(|&ck| ck == 0.0),
        }
    }
}

/// Delay channel description: delay length, inner-product weight, and the
/// prescribed history of the boundary velocity indexed by lag in `(0, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpec {
    pub tau: f64,
    pub gamma: GammaSpec,
    pub history: Expr,
}

impl DelaySpec {
    pub fn new(tau: f64, gamma: GammaSpec, history: Expr) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Assumption(format!("delay tau must be positive, got {tau}")));
        }
        if let GammaSpec::Value(g) = gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Assumption(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(Self { tau, gamma, history })
    }
}

/// Complete continuous problem definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub rigidity: RigidityProfile,
    pub axial: AxialForceProfile,
    pub gains: GainSet,
    pub delay: DelaySpec,
    pub u0: Expr,
    pub u1: Expr,
}

/// Degeneracy class of the rigidity at the clamped end.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneracyClass {
    /// Vanishing rigidity with ratio constant in `(0, 1)`.
    WeaklyDegenerate,
    /// Vanishing rigidity with ratio constant in `[1, 2)`.
    StronglyDegenerate,
    /// Positive rigidity at the origin; accepted for simulation and spectra
    /// as a classical clamped oracle, rejected for certification.
    NonDegenerate,
    Invalid,
}

impl DegeneracyClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::WeaklyDegenerate => "WD",
            Self::StronglyDegenerate => "SD",
            Self::NonDegenerate => "NONDEGENERATE",
            Self::Invalid => "INVALID",
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Self::WeaklyDegenerate | Self::StronglyDegenerate)
    }
}

/// Classification outcome: the class, the ratio constant
/// `sup x |sigma'| / sigma`, and a point where the sup is approached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyReport {
    pub class: DegeneracyClass,
    pub k_sigma: f64,
    pub witness: f64,
}

/// Classifies the rigidity profile by its degeneracy ratio constant.
///
/// For a power law `x^alpha` the ratio `x |sigma'| / sigma` is identically
/// `alpha`; for tabulated data the sup is taken over a tenfold-refined
/// sample grid together with the endpoint limits of each piece.
pub fn classify_degeneracy(rigidity: &RigidityProfile) -> DegeneracyReport {
    let (k_sigma, witness) = match rigidity {
        RigidityProfile::PowerLaw { alpha } => (*alpha, 1.0),
        RigidityProfile::Constant { .. } => (0.0, 1.0),
        RigidityProfile::Tabulated { xs, .. } => {
            let mut best = (0.0_f64, 1.0_f64);
            for seg in 0..xs.len() - 1 {
                for i in 0..=10 {
                    let t = i as f64 / 10.0;
                    let x = xs[seg] + t * (xs[seg + 1] - xs[seg]);
                    if x <= 0.0 {
                        continue;
                    }
                    let s = rigidity.eval(x);
                    if s <= 0.0 {
                        return DegeneracyReport {
                            class: DegeneracyClass::Invalid,
                            k_sigma: f64::INFINITY,
                            witness: x,
                        };
                    }
                    let ratio = x * rigidity.eval_deriv(x).abs() / s;
                    if ratio > best.0 {
                        best = (ratio, x);
                    }
                }
            }
            best
        }
    };
    let class = if !rigidity.vanishes_at_origin() {
        DegeneracyClass::NonDegenerate
    } else if k_sigma > 0.0 && k_sigma < 1.0 {
        DegeneracyClass::WeaklyDegenerate
    } else if (1.0..2.0).contains(&k_sigma) {
        DegeneracyClass::StronglyDegenerate
    } else {
        DegeneracyClass::Invalid
    };
    DegeneracyReport { class, k_sigma, witness }
}

/// Resolves the inner-product weight `gamma`.
///
/// `Auto` returns the center `kv` of the open window
/// `(|kd|, 2 kv - |kd|)`; an explicit value is validated against it.
pub fn resolve_gamma(gains: &GainSet, requested: GammaSpec) -> Result<f64> {
    let lo = gains.kappa_d.abs();
    let hi = 2.0 * gains.kappa_v - gains.kappa_d.abs();
    if lo >= hi {
        return Err(Error::Assumption(format!(
            "empty gamma window: |kd| = {lo} >= kv = {}",
            gains.kappa_v
        )));
    }
    match requested {
        GammaSpec::Auto => Ok(gains.kappa_v),
        GammaSpec::Value(g) => {
            if g > lo && g < hi {
                Ok(g)
            } else {
                Err(Error::Assumption(format!(
                    "gamma = {g} outside the admissible window ({lo}, {hi})"
                )))
            }
        }
    }
}

/// Damping margin of the boundary feedback:
/// `min(ka, (gamma - |kd|)/2, kv - (gamma + |kd|)/2)`.
///
/// A nonpositive result signals that the gamma window condition fails.
pub fn damping_margin(gains: &GainSet, gamma: f64) -> f64 {
    let d = gains.kappa_d.abs();
    gains
        .kappa_a
        .min(0.5 * (gamma - d))
        .min(gains.kappa_v - 0.5 * (gamma + d))
}

/// Combined degeneracy/axial variation constant
/// `max(k_sigma, q2 / q0)`; values at or above 2 defeat the certificate.
pub fn upsilon(report: &DegeneracyReport, axial: &AxialForceProfile) -> Result<f64> {
    if report.class == DegeneracyClass::Invalid {
        return Err(Error::Assumption("invalid degeneracy class".into()));
    }
    let b = axial.bounds();
    let u = report.k_sigma.max(b.q2 / b.q0);
    if u >= 2.0 {
        return Err(Error::Assumption(format!(
            "upsilon = {u} >= 2: decay certificate unavailable for this profile pair"
        )));
    }
    Ok(u)
}

/// One admissibility check with its measured value.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub detail: String,
    /// Whether the decay certificate requires this check.
    pub required_for_certificate: bool,
}

/// Pass/fail report over all structural assumptions.
#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub class: DegeneracyClass,
    pub k_sigma: f64,
    /// Resolved gamma when the window is nonempty.
    pub gamma: Option<f64>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// True when every check needed by the decay certificate passes.
    pub fn certificate_ready(&self) -> bool {
        self.checks
            .iter()
            .filter(|c| c.required_for_certificate)
            .all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<&AssumptionCheck> {
        self.checks
            .iter()
            .find(|c| c.required_for_certificate && !c.pass)
    }
}

/// Evaluates every structural assumption and labels each pass/fail.
///
/// The report never errors; callers decide. In strict mode the caller
/// should reject configurations where [`AssumptionReport::certificate_ready`]
/// is false.
pub fn validate_assumptions(config: &ModelConfig) -> AssumptionReport {
    let mut checks = Vec::new();
    let g = &config.gains;
    let report = classify_degeneracy(&config.rigidity);
    let bounds = config.axial.bounds();

    checks.push(AssumptionCheck {
        name: "rotational_damping_positive".into(),
        pass: g.kappa_a > 0.0,
        measured: g.kappa_a,
        detail: "ka > 0".into(),
        required_for_certificate: true,
    });
    checks.push(AssumptionCheck {
        name: "delayed_gain_dominated".into(),
        pass: g.kappa_d.abs() < g.kappa_v,
        measured: g.kappa_d.abs(),
        detail: format!("|kd| < kv = {}", g.kappa_v),
        required_for_certificate: true,
    });
    checks.push(AssumptionCheck {
        name: "axial_lower_bound".into(),
        pass: bounds.q0 > 0.0,
        measured: bounds.q0,
        detail: format!("0 < q0 <= q1 = {}, |q'| <= q2 = {}", bounds.q1, bounds.q2),
        required_for_certificate: true,
    });

    let gamma = resolve_gamma(g, config.delay.gamma).ok();
    let (gamma_pass, gamma_val) = match (gamma, config.delay.gamma) {
        (Some(gv), _) => (true, gv),
        (None, GammaSpec::Value(gv)) => (false, gv),
        (None, GammaSpec::Auto) => (false, f64::NAN),
    };
    checks.push(AssumptionCheck {
        name: "gamma_window".into(),
        pass: gamma_pass,
        measured: gamma_val,
        detail: format!(
            "|kd| = {} < gamma < 2 kv - |kd| = {}",
            g.kappa_d.abs(),
            2.0 * g.kappa_v - g.kappa_d.abs()
        ),
        required_for_certificate: true,
    });

    let ups = report.k_sigma.max(bounds.q2 / bounds.q0);
    checks.push(AssumptionCheck {
        name: "upsilon_below_two".into(),
        pass: report.class.is_degenerate() && ups < 2.0,
        measured: ups,
        detail: "max(k_sigma, q2/q0) < 2".into(),
        required_for_certificate: true,
    });
    checks.push(AssumptionCheck {
        name: "degenerate_class".into(),
        pass: report.class.is_degenerate(),
        measured: report.k_sigma,
        detail: format!("class = {}", report.class.as_str()),
        required_for_certificate: true,
    });
    checks.push(AssumptionCheck {
        name: "boundary_springs_positive".into(),
        pass: g.kappa_b > 0.0 && g.kappa_r > 0.0,
        measured: g.kappa_b.min(g.kappa_r),
        detail: "kb > 0 and kr > 0".into(),
        required_for_certificate: true,
    });

    // Essential boundary compatibility of the initial displacement; the
    // slope constraint applies outside the strongly degenerate class.
    let u0_at0 = config.u0.eval(0.0);
    let needs_slope = report.class != DegeneracyClass::StronglyDegenerate;
    let u0_slope = config.u0.eval_deriv(0.0);
    let compat = u0_at0.abs() <= 1e-12 && (!needs_slope || u0_slope.abs() <= 1e-12);
    checks.push(AssumptionCheck {
        name: "initial_data_compatible".into(),
        pass: compat,
        measured: u0_at0.abs().max(if needs_slope { u0_slope.abs() } else { 0.0 }),
        detail: "u0(0) = 0 and, unless strongly degenerate, u0'(0) = 0".into(),
        required_for_certificate: true,
    });

    if g.kappa_d == 0.0 {
        checks.push(AssumptionCheck {
            name: "delay_channel_inert".into(),
            pass: true,
            measured: 0.0,
            detail: "kd = 0: delay samples evolve but never feed back".into(),
            required_for_certificate: false,
        });
    }

    AssumptionReport {
        checks,
        class: report.class,
        k_sigma: report.k_sigma,
        gamma,
    }
}

/// Every constant of the decay certificate, in evaluation order.
#[derive(Debug, Clone, Copy)]
pub struct CertificateConstants {
    pub k_sigma: f64,
    pub upsilon: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Boundary damping margin.
    pub c_gamma: f64,
    /// Lyapunov/energy equivalence constant.
    pub c_upsilon: f64,
    /// Boundary slope trace constant.
    pub c1: f64,
    /// Boundary trace forcing constant.
    pub c0: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Cross-term weight in the Lyapunov functional.
    pub epsilon: f64,
    /// Trace duality constant for the auxiliary elliptic problem.
    pub delta: f64,
    /// Weight balancing the observability estimate.
    pub delta_tilde: f64,
    pub c2_delta: f64,
    pub c3: f64,
    /// Decay time constant: energy satisfies
    /// `E(t) <= E(0) exp(1 - t / m_decay)` beyond `t = m_decay`.
    pub m_decay: f64,
}

/// Computes the full certificate constant chain.
///
/// Requires a strict-valid configuration (degenerate class, dominated
/// delayed gain, nonempty gamma window, positive boundary springs).
pub fn certificate_constants(config: &ModelConfig) -> Result<CertificateConstants> {
    let report = classify_degeneracy(&config.rigidity);
    if !report.class.is_degenerate() {
        return Err(Error::Assumption(format!(
            "decay certificate needs a weakly or strongly degenerate rigidity, got {}",
            report.class.as_str()
        )));
    }
    let g = &config.gains;
    if g.kappa_b <= 0.0 || g.kappa_r <= 0.0 {
        return Err(Error::Assumption(
            "decay certificate needs kb > 0 and kr > 0".into(),
        ));
    }
    let gamma = resolve_gamma(g, config.delay.gamma)?;
    let tau = config.delay.tau;
    let bounds = config.axial.bounds();
    let k_sigma = report.k_sigma;
    let ups = upsilon(&report, &config.axial)?;
    let sigma1 = config.rigidity.at_one();
    let q_end = config.axial.at_one();

    let c_gamma = damping_margin(g, gamma);
    if c_gamma <= 0.0 {
        return Err(Error::Assumption(format!(
            "nonpositive damping margin {c_gamma}"
        )));
    }

    let c_upsilon = 2.0 * 1.0_f64.max(1.0 + ups / 4.0).max((1.0 + ups / 8.0) / bounds.q0);
    let c1 = (2.0 * (1.0 / bounds.q0).max(1.0 / (sigma1 * (2.0 - k_sigma)))).sqrt();

    let trace_coeff = 2.0 / sigma1 + (2.0 + ups / 2.0) / q_end;
    let c0 = (3.0 * g.kappa_b * g.kappa_b / q_end + q_end * ups * ups / 4.0)
        .max(trace_coeff * g.kappa_r * g.kappa_r + (1.5 + ups / 4.0) * q_end);

    // epsilon sits safely inside both admissibility windows: half the
    // minimum of the equivalence bound and the three margin quotients.
    let quot_d = if g.kappa_d == 0.0 {
        f64::INFINITY
    } else {
        c_gamma / (3.0 * g.kappa_d * g.kappa_d / q_end)
    };
    let quot_v = c_gamma / (1.0 + gamma + 3.0 * g.kappa_v * g.kappa_v / q_end);
    let quot_a = if g.kappa_a == 0.0 {
        f64::INFINITY
    } else {
        c_gamma / (trace_coeff * g.kappa_a * g.kappa_a)
    };
    let epsilon = 0.5 * (1.0 / c_upsilon).min(quot_d).min(quot_v).min(quot_a);

    let theta1 = 1.0 - epsilon * c_upsilon;
    let theta2 = 1.0 + epsilon * c_upsilon;

    let delta = 0.5
        / ((1.0 / g.kappa_b + 1.0 / g.kappa_r) * (1.0 / bounds.q0).max(c1 * c1));
    let decay_floor = (2.0 - ups).min(4.0 * (-2.0 * tau).exp());
    let delta_tilde = decay_floor / (4.0 * c0);

    let c2_delta = (g.kappa_v * g.kappa_v / delta)
        .max(g.kappa_d * g.kappa_d / delta)
        .max(g.kappa_a * g.kappa_a / (2.0 * delta))
        / c_gamma
        + (1.0 / (bounds.q0 * bounds.q0)).max(c1 * c1 / bounds.q0) / (delta_tilde * c_gamma);
    let c3 = 1.0_f64
        .max(4.0 / (g.kappa_b * bounds.q0 * bounds.q0))
        .max(4.0 * c1 * c1 / (g.kappa_r * bounds.q0));

    let m_decay = 2.0 / (epsilon * decay_floor)
        * (theta2 + 4.0 * epsilon * c0 * c3 + 2.0 * epsilon * c0 * c2_delta);

    let out = CertificateConstants {
        k_sigma,
        upsilon: ups,
        gamma,
        tau,
        c_gamma,
        c_upsilon,
        c1,
        c0,
        theta1,
        theta2,
        epsilon,
        delta,
        delta_tilde,
        c2_delta,
        c3,
        m_decay,
    };
    for (name, v) in [
        ("c_gamma", out.c_gamma),
        ("c_upsilon", out.c_upsilon),
        ("c1", out.c1),
        ("c0", out.c0),
        ("theta1", out.theta1),
        ("epsilon", out.epsilon),
        ("delta", out.delta),
        ("delta_tilde", out.delta_tilde),
        ("c2_delta", out.c2_delta),
        ("c3", out.c3),
        ("m_decay", out.m_decay),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Assumption(format!(
                "certificate constant {name} = {v} is not positive"
            )));
        }
    }
    Ok(out)
}

impl CertificateConstants {
    /// Named dump in evaluation order, for reports and regression output.
    pub fn named(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("k_sigma", self.k_sigma),
            ("upsilon", self.upsilon),
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("c_gamma", self.c_gamma),
            ("c_upsilon", self.c_upsilon),
            ("c1", self.c1),
            ("c0", self.c0),
            ("epsilon", self.epsilon),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("delta", self.delta),
            ("delta_tilde", self.delta_tilde),
            ("c2_delta", self.c2_delta),
            ("c3", self.c3),
            ("m_decay", self.m_decay),
        ]
    }
}

/// Certified upper bound `E(0) exp(1 - t / m_decay)` for `t >= m_decay`.
///
/// The bound is only asserted from `t = m_decay` on; earlier times return
/// the clamped value `E(0)` (the exponent is clamped at zero).
pub fn decay_bound(constants: &CertificateConstants, e0: f64, t: f64) -> f64 {
    let exponent = (1.0 - t / constants.m_decay).min(1.0);
    if t < constants.m_decay {
        e0
    } else {
        e0 * exponent.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_config() -> ModelConfig {
        ModelConfig {
            rigidity: RigidityProfile::power_law(1.0).unwrap(),
            axial: AxialForceProfile::constant(1.0).unwrap(),
            gains: GainSet::new(1.0, 1.0, 2.0, 1.0, 1.0).unwrap(),
            delay: DelaySpec::new(1.0, GammaSpec::Value(2.0), Expr::Zero).unwrap(),
            u0: Expr::Poly(vec![0.0, 0.0, 1.0]),
            u1: Expr::Zero,
        }
    }

    #[test]
    fn power_law_classification_is_exact() {
        let r = classify_degeneracy(&RigidityProfile::power_law(0.5).unwrap());
        assert_eq!(r.class, DegeneracyClass::WeaklyDegenerate);
        assert!((r.k_sigma - 0.5).abs() < 1e-12);

        let r = classify_degeneracy(&RigidityProfile::power_law(1.5).unwrap());
        assert_eq!(r.class, DegeneracyClass::StronglyDegenerate);
        assert!((r.k_sigma - 1.5).abs() < 1e-12);

        // exponent 2 sits exactly on the excluded boundary
        let r = classify_degeneracy(&RigidityProfile::power_law(2.0).unwrap());
        assert_eq!(r.class, DegeneracyClass::Invalid);

        let r = classify_degeneracy(&RigidityProfile::constant(1.0).unwrap());
        assert_eq!(r.class, DegeneracyClass::NonDegenerate);
        assert_eq!(r.k_sigma, 0.0);
    }

    #[test]
    fn tabulated_profile_tracks_power_law() {
        let xs: Vec<f64> = (0..=32).map(|i| i as f64 / 32.0).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| x.powf(0.5)).collect();
        let prof = RigidityProfile::tabulated(xs, vals).unwrap();
        let r = classify_degeneracy(&prof);
        assert_eq!(r.class, DegeneracyClass::WeaklyDegenerate);
        // piecewise interpolation slightly distorts the ratio but the fitted
        // first piece reproduces the exponent near the origin
        assert!((r.k_sigma - 0.5).abs() < 0.1, "k_sigma = {}", r.k_sigma);
        assert!((prof.eval(0.004) - 0.004_f64.sqrt()).abs() < 1e-3);
    }

    #[test]
    fn gamma_window_and_midpoint() {
        let gains = GainSet::new(1.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(resolve_gamma(&gains, GammaSpec::Auto).unwrap(), 2.0);
        assert_eq!(resolve_gamma(&gains, GammaSpec::Value(2.9)).unwrap(), 2.9);
        assert!(resolve_gamma(&gains, GammaSpec::Value(3.0)).is_err());
        assert!(resolve_gamma(&gains, GammaSpec::Value(1.0)).is_err());

        let marginal = GainSet::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(resolve_gamma(&marginal, GammaSpec::Auto).is_err());
    }

    #[test]
    fn damping_margin_values() {
        let gains = GainSet::new(1.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        assert!((damping_margin(&gains, 2.0) - 0.5).abs() < 1e-15);
        // vanishing window edge
        assert!(damping_margin(&gains, 1.0 + 1e-12) < 1e-12);
        let small_a = GainSet::new(1.0, 0.1, 2.0, 1.0, 1.0).unwrap();
        assert!((damping_margin(&small_a, 2.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn damping_margin_maximized_at_gamma_kv() {
        let gains = GainSet::new(1.0, 10.0, 2.0, 0.5, 1.0).unwrap();
        let at_kv = damping_margin(&gains, gains.kappa_v);
        for i in 1..200 {
            let gamma = 0.5 + 3.0 * i as f64 / 200.0;
            if gamma <= gains.kappa_d.abs() || gamma >= 2.0 * gains.kappa_v - gains.kappa_d.abs() {
                continue;
            }
            assert!(damping_margin(&gains, gamma) <= at_kv + 1e-12);
        }
    }

    #[test]
    fn upsilon_values_and_rejection() {
        let wd = classify_degeneracy(&RigidityProfile::power_law(0.5).unwrap());
        let q_const = AxialForceProfile::constant(1.0).unwrap();
        assert!((upsilon(&wd, &q_const).unwrap() - 0.5).abs() < 1e-15);

        let q_affine = AxialForceProfile::affine(1.0, 1.0).unwrap();
        let b = q_affine.bounds();
        assert_eq!((b.q0, b.q1, b.q2), (1.0, 2.0, 1.0));
        assert!((upsilon(&wd, &q_affine).unwrap() - 1.0).abs() < 1e-15);

        // q2/q0 = 2.5 exceeds the admissible range
        let steep = AxialForceProfile::affine(1.0, 2.5).unwrap();
        assert!(upsilon(&wd, &steep).is_err());
    }

    #[test]
    fn assumption_report_reference_and_failures() {
        let cfg = reference_config();
        let rep = validate_assumptions(&cfg);
        assert!(rep.certificate_ready(), "{:?}", rep.first_failure());
        assert_eq!(rep.class, DegeneracyClass::StronglyDegenerate);

        let mut bad = reference_config();
        bad.gains.kappa_v = 1.0; // |kd| = kv boundary case fails
        let rep = validate_assumptions(&bad);
        assert!(!rep.certificate_ready());
        assert_eq!(rep.first_failure().unwrap().name, "delayed_gain_dominated");

        let mut incompatible = reference_config();
        incompatible.u0 = Expr::Const(1.0);
        let rep = validate_assumptions(&incompatible);
        assert!(!rep.certificate_ready());
    }

    /// Hand-derived constant chain for the reference configuration
    /// (sigma = x, q = 1, kr = ka = kb = 1, kv = 2, kd = 1, gamma = 2,
    /// tau = 1), recomputed independently term by term.
    #[test]
    fn certificate_constants_reference_chain() {
        let cfg = reference_config();
        let c = certificate_constants(&cfg).unwrap();

        assert!((c.k_sigma - 1.0).abs() < 1e-15);
        assert!((c.upsilon - 1.0).abs() < 1e-15);
        assert!((c.c_gamma - 0.5).abs() < 1e-15);
        // 2 max(1, 1 + 1/4, 1 + 1/8)
        assert!((c.c_upsilon - 2.5).abs() <= 1e-12 * 2.5);
        // sqrt(2 max(1, 1)) = sqrt 2
        assert!((c.c1 - 2.0_f64.sqrt()).abs() <= 1e-12 * c.c1);
        // max(3 + 1/4, (2 + 2.5) + 1.75) = 6.25
        assert!((c.c0 - 6.25).abs() <= 1e-12 * 6.25);
        // half of min(1/2.5, 0.5/3, 0.5/15, 0.5/4.5) = (1/30)/2 = 1/60
        let eps = 1.0 / 60.0;
        assert!((c.epsilon - eps).abs() <= 1e-12 * eps);
        assert!((c.theta1 - (1.0 - eps * 2.5)).abs() <= 1e-12);
        assert!((c.theta2 - (1.0 + eps * 2.5)).abs() <= 1e-12);
        // 0.5 / ((1/1 + 1/1) * max(1, 2)) = 1/8
        assert!((c.delta - 0.125).abs() <= 1e-12 * 0.125);
        // max(1, 4, 8) = 8
        assert!((c.c3 - 8.0).abs() <= 1e-12 * 8.0);

        // floor of the decay coefficient and the remaining chain
        let floor = (2.0_f64 - 1.0).min(4.0 * (-2.0_f64).exp());
        let delta_tilde = floor / (4.0 * 6.25);
        assert!((c.delta_tilde - delta_tilde).abs() <= 1e-12 * delta_tilde);
        let c2 = 32.0 / 0.5 + 2.0 / (delta_tilde * 0.5);
        assert!((c.c2_delta - c2).abs() <= 1e-12 * c2);
        let theta2 = 1.0 + 2.5 / 60.0;
        let m = 2.0 / (eps * floor) * (theta2 + 4.0 * eps * 6.25 * 8.0 + 2.0 * eps * 6.25 * c2);
        assert!((c.m_decay - m).abs() <= 1e-12 * m);
    }

    #[test]
    fn decay_bound_shape() {
        let c = certificate_constants(&reference_config()).unwrap();
        let m = c.m_decay;
        let e0 = 3.0;
        // clamped before the certified onset, equals e0 at the onset
        assert_eq!(decay_bound(&c, e0, 0.5 * m), e0);
        assert!((decay_bound(&c, e0, m) - e0).abs() < 1e-12 * e0);
        assert!((decay_bound(&c, e0, 2.0 * m) - e0 * (-1.0_f64).exp()).abs() < 1e-12 * e0);
        // nonincreasing beyond the onset
        let mut prev = decay_bound(&c, e0, m);
        for i in 1..50 {
            let v = decay_bound(&c, e0, m + i as f64 * 0.3 * m);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn expr_evaluation() {
        let p = Expr::Poly(vec![1.0, -2.0, 3.0]);
        assert!((p.eval(2.0) - (1.0 - 4.0 + 12.0)).abs() < 1e-14);
        assert!((p.eval_deriv(2.0) - (-2.0 + 12.0)).abs() < 1e-14);
        let s = Expr::SinModes(vec![(2.0, 3.0)]);
        assert!((s.eval(0.5) - 2.0 * 1.5_f64.sin()).abs() < 1e-14);
        assert!((s.eval_deriv(0.5) - 6.0 * 1.5_f64.cos()).abs() < 1e-14);
        assert!(Expr::Zero.is_zero() && Expr::Poly(vec![0.0]).is_zero());
    }

    proptest::proptest! {
        /// Every strict-valid configuration yields a fully positive
        /// constant chain with the cross-term weight inside both windows.
        #[test]
        fn certificate_constants_sign_chain(
            alpha in 0.05_f64..1.95,
            ka in 0.05_f64..4.0,
            kr in 0.05_f64..4.0,
            kb in 0.05_f64..4.0,
            kv in 0.1_f64..4.0,
            kd_frac in -0.95_f64..0.95,
            tau in 0.05_f64..4.0,
            q_base in 0.2_f64..3.0,
            q_slope_frac in -0.9_f64..1.9,
        ) {
            let q = AxialForceProfile::affine(q_base, q_slope_frac * q_base).unwrap();
            let cfg = ModelConfig {
                rigidity: RigidityProfile::power_law(alpha).unwrap(),
                axial: q,
                gains: GainSet::new(kr, ka, kv, kd_frac * kv, kb).unwrap(),
                delay: DelaySpec::new(tau, GammaSpec::Auto, Expr::Zero).unwrap(),
                u0: Expr::Poly(vec![0.0, 0.0, 1.0]),
                u1: Expr::Zero,
            };
            let rep = validate_assumptions(&cfg);
            proptest::prop_assume!(rep.certificate_ready());
            let c = certificate_constants(&cfg).unwrap();
            proptest::prop_assert!(c.upsilon < 2.0);
            proptest::prop_assert!(c.c_gamma > 0.0);
            proptest::prop_assert!(c.c_upsilon > 0.0);
            proptest::prop_assert!(c.epsilon > 0.0 && c.epsilon < 1.0 / c.c_upsilon);
            proptest::prop_assert!(c.theta1 > 0.0 && c.theta2 > 1.0);
            proptest::prop_assert!(c.delta > 0.0 && c.delta_tilde > 0.0);
            proptest::prop_assert!(c.c2_delta > 0.0 && c.c3 >= 1.0);
            proptest::prop_assert!(c.m_decay > 0.0 && c.m_decay.is_finite());
        }
    }

    #[test]
    fn epsilon_inert_delay_channel() {
        let mut cfg = reference_config();
        cfg.gains.kappa_d = 0.0;
        cfg.delay.gamma = GammaSpec::Auto;
        let c = certificate_constants(&cfg).unwrap();
        // the kd quotient drops out of the minimum
        assert!(c.epsilon > 0.0 && c.epsilon.is_finite());
        let rep = validate_assumptions(&cfg);
        assert!(rep.checks.iter().any(|c| c.name == "delay_channel_inert"));
    }
}
