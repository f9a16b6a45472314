//! Trajectory diagnostics and the decay certificate: energy decomposition,
//! Lyapunov functional, dissipation identities and bounds, the auxiliary
//! elliptic problem, generator spectra, and empirical decay-rate fits.

use crate::evolution::{ClosedLoopSystem, SystemState, TrajectoryRecord};
use crate::model::{classify_degeneracy, CertificateConstants};
use crate::spatial::NormKind;
use crate::{Error, Result};
use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Energy decomposition of a state, with optional Lyapunov channels.
#[derive(Debug, Clone, Copy)]
pub struct EnergySample {
    pub t: f64,
    pub e: f64,
    pub kinetic: f64,
    pub bending: f64,
    pub axial: f64,
    pub spring_end: f64,
    pub spring_slope: f64,
    pub delay: f64,
    pub g: Option<f64>,
    pub l: Option<f64>,
}

/// Energy of a state, decomposed into kinetic, bending, axial,
/// boundary-spring and delay contributions. The components sum to the
/// total used by the integrator.
pub fn energy(sys: &ClosedLoopSystem, state: &SystemState) -> EnergySample {
    let su = sys.space.seminorms(&state.u);
    let sv = sys.space.seminorms(&state.v);
    let g = sys.config.gains;
    let mut delay = 0.0;
    if sys.m_d > 0 {
        let ds = 1.0 / sys.m_d as f64;
        for j in 1..=sys.m_d {
            delay += state.w[j] * state.w[j];
        }
        delay *= 0.5 * sys.gamma * sys.tau * ds;
    }
    let kinetic = 0.5 * sv.l2_sq;
    let bending = 0.5 * su.sigma_weighted_sq;
    let axial = 0.5 * su.q_weighted_sq;
    let spring_end = 0.5 * g.kappa_b * su.end_value * su.end_value;
    let spring_slope = 0.5 * g.kappa_r * su.end_slope * su.end_slope;
    EnergySample {
        t: state.t,
        e: kinetic + bending + axial + spring_end + spring_slope + delay,
        kinetic,
        bending,
        axial,
        spring_end,
        spring_slope,
        delay,
        g: None,
        l: None,
    }
}

/// Energy plus the Lyapunov channels `g` and `l = e + epsilon g`.
pub fn lyapunov(
    sys: &ClosedLoopSystem,
    state: &SystemState,
    constants: &CertificateConstants,
) -> EnergySample {
    let mut sample = energy(sys, state);
    let cross = sys.lyapunov_cross_tilde(constants.upsilon);
    let weights = sys.lyapunov_delay_weights();
    let x = sys.to_tilde(state);
    let (g, _) = sys.lyapunov_tilde(&x, &cross, &weights, constants.epsilon);
    sample.g = Some(g);
    sample.l = Some(sample.e + constants.epsilon * g);
    sample
}

/// Boundary exchange rate of the energy at a set of traces: the delayed
/// and collocated feedback power plus the transport boundary terms.
pub fn boundary_exchange_rate(
    kappa_d: f64,
    kappa_v: f64,
    kappa_a: f64,
    gamma: f64,
    ut1: f64,
    uxt1: f64,
    w1: f64,
) -> f64 {
    -kappa_d * w1 * ut1 - kappa_v * ut1 * ut1 - kappa_a * uxt1 * uxt1
        - 0.5 * gamma * (w1 * w1 - ut1 * ut1)
}

/// Centered residual of the energy balance at each interior sample: the
/// sampled energy rate minus the boundary exchange rate, corrected by the
/// recorded upwind dissipation. Second order in the sample spacing.
pub fn dissipation_identity_residual(
    sys: &ClosedLoopSystem,
    traj: &TrajectoryRecord,
) -> Vec<f64> {
    let g = sys.config.gains;
    // without a delay line neither the delayed feedback nor the transport
    // boundary terms enter the balance
    let (gamma, kappa_d) = if sys.m_d > 0 {
        (sys.gamma, g.kappa_d)
    } else {
        (0.0, 0.0)
    };
    let n = traj.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let span = traj.times[i + 1] - traj.times[i - 1];
        let de = (traj.energy[i + 1] - traj.energy[i - 1]) / span;
        let rhs = boundary_exchange_rate(
            kappa_d,
            g.kappa_v,
            g.kappa_a,
            gamma,
            traj.ut1[i],
            traj.uxt1[i],
            traj.w1[i],
        );
        let d_up = (traj.upwind_diss[i] + traj.upwind_diss[i + 1]) / span;
        out.push(de - rhs + d_up);
    }
    out
}

/// Outcome of the decay-margin check along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheck {
    /// Worst margin over all recorded intervals; nonnegative when the
    /// damping-margin bound holds everywhere.
    pub worst_margin: Option<f64>,
    /// True when the gain window was inadmissible and the check is skipped.
    pub skipped: bool,
}

/// Verifies that the energy decreased at least as fast as the damping
/// margin times the boundary trace power at every recorded interval.
pub fn dissipation_bound_check(traj: &TrajectoryRecord) -> BoundCheck {
    match traj.bound_margin.as_ref() {
        None => BoundCheck {
            worst_margin: None,
            skipped: true,
        },
        Some(m) => BoundCheck {
            worst_margin: m.iter().skip(1).cloned().fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.min(v)))
            }),
            skipped: false,
        },
    }
}

/// Solution of the auxiliary boundary-load elliptic problem together with
/// its duality identity and a-priori bounds.
#[derive(Debug, Clone)]
pub struct AuxiliarySolution {
    pub y: DVector<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub triple_norm_sq: f64,
    pub l2_sq: f64,
    /// Combined load constant `|lambda| / sqrt(q0) + |mu| c1`.
    pub c_lambda_mu: f64,
    /// Relative defect of the identity
    /// `|||y|||^2 = lambda y(1) + mu y'(1)`.
    pub identity_residual: f64,
    /// `c^2 / q0 - ||y||^2` (nonnegative when the bound holds).
    pub bound_slack_l2: f64,
    /// `c^2 - |||y|||^2`.
    pub bound_slack_triple: f64,
}

/// Solves the stationary problem driven by boundary loads
/// `lambda` (end displacement) and `mu` (end slope): the unique minimizer
/// of the triple-norm energy against the boundary pairing.
pub fn auxiliary_elliptic_solve(
    sys: &ClosedLoopSystem,
    lambda: f64,
    mu: f64,
) -> Result<AuxiliarySolution> {
    let g = sys.config.gains;
    if g.kappa_b <= 0.0 || g.kappa_r <= 0.0 {
        return Err(Error::Assumption(
            "auxiliary problem needs positive boundary springs kb, kr".into(),
        ));
    }
    let mut rhs = DVector::zeros(sys.n);
    rhs[sys.forms.idx_end_value] = lambda;
    rhs[sys.forms.idx_end_slope] = mu;
    let y = sys.solve_stiffness(&rhs);

    let triple = sys.space.norm_sq(&y, NormKind::Triple, g.kappa_b, g.kappa_r);
    let l2 = sys.space.norm_sq(&y, NormKind::L2, g.kappa_b, g.kappa_r);
    let y1 = y[sys.forms.idx_end_value];
    let yx1 = y[sys.forms.idx_end_slope];
    let pairing = lambda * y1 + mu * yx1;
    let scale = triple.abs().max(pairing.abs()).max(1e-300);
    let identity_residual = (triple - pairing).abs() / scale;

    let q0 = sys.config.axial.bounds().q0;
    let k_sigma = classify_degeneracy(&sys.config.rigidity).k_sigma;
    let sigma1 = sys.config.rigidity.at_one();
    let c1 = (2.0 * (1.0 / q0).max(1.0 / (sigma1 * (2.0 - k_sigma)))).sqrt();
    let c = lambda.abs() / q0.sqrt() + mu.abs() * c1;

    Ok(AuxiliarySolution {
        y,
        lambda,
        mu,
        triple_norm_sq: triple,
        l2_sq: l2,
        c_lambda_mu: c,
        identity_residual,
        bound_slack_l2: c * c / q0 - l2,
        bound_slack_triple: c * c - triple,
    })
}

/// Eigenstructure of the assembled generator.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Eigenvalues as (re, im) pairs, sorted by descending real part.
    pub eigenvalues: Vec<(f64, f64)>,
    pub abscissa: f64,
    /// Abscissa nonpositive within eigensolver resolution. Strongly
    /// damped systems still harbor modes localized at the degenerate end
    /// whose decay rates sit below what a double-precision eigensolve can
    /// distinguish from zero.
    pub stable: bool,
    /// Largest normalized value of the generator's dissipation form over
    /// random unit states; nonpositive up to roundoff for admissible gains.
    pub quad_form_max: f64,
}

/// Resolution threshold below which a computed abscissa counts as
/// nonpositive.
pub const SPECTRUM_STABLE_TOL: f64 = 1e-8;

/// Computes the full spectrum of the generator (in energy coordinates,
/// where the conservative part is exactly skew) and samples the
/// dissipation quadratic form on random states.
pub fn spectrum(sys: &ClosedLoopSystem, dim_cap: usize) -> Result<SpectrumReport> {
    let dim = sys.dim();
    if dim > dim_cap {
        return Err(Error::Assumption(format!(
            "generator dimension {dim} exceeds the spectrum cap {dim_cap}"
        )));
    }
    let schur = nalgebra::linalg::Schur::try_new(sys.generator().clone(), 1e-14, 100_000)
        .ok_or(Error::Eigensolver)?;
    let eig = schur.complex_eigenvalues();
    let mut eigenvalues: Vec<(f64, f64)> = eig.iter().map(|z| (z.re, z.im)).collect();
    eigenvalues.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let abscissa = eigenvalues.first().map(|e| e.0).unwrap_or(0.0);

    let d = sys.dissipation_form();
    let mut rng = StdRng::seed_from_u64(0x5eed_bea0);
    let mut quad_form_max = f64::NEG_INFINITY;
    for _ in 0..100 {
        let x = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let q = x.dot(&(&d * &x)) / x.norm_squared();
        quad_form_max = quad_form_max.max(q);
    }
    Ok(SpectrumReport {
        abscissa,
        stable: abscissa <= SPECTRUM_STABLE_TOL,
        eigenvalues,
        quad_form_max,
    })
}

/// Least-squares decay-rate fit of `log E` over a time window.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Fitted rate; positive means decay.
    pub theta_hat: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub n_used: usize,
    /// True when the window was cut short by vanishing energy.
    pub truncated: bool,
}

/// Fits `E(t) ~ C exp(-theta t)` on the samples inside `[t0, t1]`.
/// The window is truncated at the first numerically zero energy.
pub fn fit_decay_rate(times: &[f64], energy: &[f64], t0: f64, t1: f64) -> Result<DecayFit> {
    let mut pts = Vec::new();
    let mut truncated = false;
    for (&t, &e) in times.iter().zip(energy.iter()) {
        if t < t0 - 1e-12 || t > t1 + 1e-12 {
            continue;
        }
        if e <= 0.0 || !e.is_finite() {
            truncated = true;
            break;
        }
        pts.push((t, e.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::Numerical {
            t: t0,
            msg: "decay fit needs at least two positive-energy samples".into(),
        });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = if denom == 0.0 { 0.0 } else { (n * sxy - sx * sy) / denom };
    let intercept = (sy - slope * sx) / n;
    let mut rss = 0.0;
    for &(t, ly) in &pts {
        let r = ly - (intercept + slope * t);
        rss += r * r;
    }
    Ok(DecayFit {
        theta_hat: -slope,
        residual: (rss / n).sqrt(),
        n_used: pts.len(),
        truncated,
    })
}

/// Signed slacks of the three trajectory estimates behind the certificate,
/// evaluated on `[r, t_end]` (nonnegative values mean the estimate holds).
#[derive(Debug, Clone, Copy)]
pub struct LemmaSlacks {
    /// Worst per-sample slack of the Lyapunov derivative estimate.
    pub cross_derivative: f64,
    /// Slack of the windowed energy-integral estimate.
    pub energy_integral: f64,
    /// Slack of the boundary-trace observability estimate.
    pub boundary_traces: f64,
}

fn trapezoid(times: &[f64], values: &[f64], i0: usize, i1: usize) -> f64 {
    let mut acc = 0.0;
    for i in i0..i1 {
        acc += 0.5 * (values[i] + values[i + 1]) * (times[i + 1] - times[i]);
    }
    acc
}

fn window_indices(times: &[f64], r: f64, t_end: f64) -> (usize, usize) {
    let i0 = times.iter().position(|&t| t >= r - 1e-12).unwrap_or(0);
    let i1 = times
        .iter()
        .rposition(|&t| t <= t_end + 1e-12)
        .unwrap_or(times.len() - 1);
    (i0, i1.max(i0))
}

/// Evaluates the three certificate estimates numerically on a window.
///
/// The Lyapunov derivative is taken by centered differences of the
/// recorded samples, all time integrals by the trapezoid rule.
pub fn lemma_checks(
    sys: &ClosedLoopSystem,
    traj: &TrajectoryRecord,
    c: &CertificateConstants,
    r: f64,
    t_end: f64,
) -> Result<LemmaSlacks> {
    let lyap_g = traj
        .lyap_g
        .as_ref()
        .ok_or_else(|| Error::Certificate("trajectory lacks Lyapunov channels".into()))?;
    let lyap_l = traj.lyap_l.as_ref().unwrap();
    let g = sys.config.gains;
    let q_end = sys.config.axial.at_one();
    let sigma1 = sys.config.rigidity.at_one();
    let ups = c.upsilon;
    let floor = (2.0 - ups).min(4.0 * (-2.0 * c.tau).exp());
    let (i0, i1) = window_indices(&traj.times, r, t_end);
    if i1 <= i0 + 1 {
        return Err(Error::Certificate("window holds too few samples".into()));
    }

    // trace coefficients of the cross-derivative estimate
    let trace_coeff = 2.0 / sigma1 + (2.0 + ups / 2.0) / q_end;
    let coef_ux = trace_coeff * g.kappa_r * g.kappa_r + (1.5 + ups / 4.0) * q_end;
    let coef_uxt = trace_coeff * g.kappa_a * g.kappa_a;
    let coef_w = 3.0 * g.kappa_d * g.kappa_d / q_end - c.gamma * (-2.0 * c.tau).exp();
    let coef_ut = 1.0 + c.gamma + 3.0 * g.kappa_v * g.kappa_v / q_end;
    let coef_u = 3.0 * g.kappa_b * g.kappa_b / q_end + q_end * ups * ups / 4.0;

    let mut cross_derivative = f64::INFINITY;
    for i in (i0 + 1)..i1 {
        let span = traj.times[i + 1] - traj.times[i - 1];
        let dg = (lyap_g[i + 1] - lyap_g[i - 1]) / span;
        let rhs = -floor * traj.energy[i]
            + coef_ux * traj.ux1[i] * traj.ux1[i]
            + coef_uxt * traj.uxt1[i] * traj.uxt1[i]
            + coef_w * traj.w1[i] * traj.w1[i]
            + coef_ut * traj.ut1[i] * traj.ut1[i]
            + coef_u * traj.u1[i] * traj.u1[i];
        cross_derivative = cross_derivative.min(rhs - dg);
    }

    // windowed energy-integral estimate
    let int_e = trapezoid(&traj.times, &traj.energy, i0, i1);
    let sq = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x * x).collect() };
    let int_u1 = trapezoid(&traj.times, &sq(&traj.u1), i0, i1);
    let int_ux1 = trapezoid(&traj.times, &sq(&traj.ux1), i0, i1);
    let energy_integral = lyap_l[i0] - lyap_l[i1] + c.epsilon * c.c0 * (int_u1 + int_ux1)
        - c.epsilon * floor * int_e;

    // boundary-trace observability estimate
    let er = traj.energy[i0];
    let et = traj.energy[i1];
    let boundary_traces = 2.0
        * (c.delta_tilde * int_e + c.c2_delta * (er - et) + c.c3 * (er + et))
        - (int_u1 + int_ux1);

    Ok(LemmaSlacks {
        cross_derivative,
        energy_integral,
        boundary_traces,
    })
}

/// One named certificate check.
#[derive(Debug, Clone)]
pub struct CertCheck {
    pub name: String,
    pub pass: bool,
    pub slack: f64,
    pub note: String,
}

/// Decay certificate: the constant chain, every trajectory check with its
/// slack, and the empirical decay rate next to the certified one.
#[derive(Debug, Clone)]
pub struct DecayCertificate {
    pub constants: CertificateConstants,
    pub checks: Vec<CertCheck>,
    pub theta_hat: Option<f64>,
    pub fit_residual: Option<f64>,
    /// Number of samples beyond the certified onset time.
    pub pointwise_samples: usize,
    pub valid: bool,
}

impl DecayCertificate {
    pub fn first_failure(&self) -> Option<&CertCheck> {
        self.checks.iter().find(|c| !c.pass)
    }
}

/// Runs every certificate check on a recorded trajectory.
///
/// Gates: monotone energy (per-step tolerance `1e-10 E(0)`), decay margin
/// (`-1e-8 E(0)`), the Lyapunov/energy equivalence at every sample, the
/// windowed energy-integral bound on six sliding windows, the trajectory
/// estimates behind the certificate, and the pointwise decay bound
/// wherever the horizon reaches the certified onset.
pub fn certify(
    sys: &ClosedLoopSystem,
    traj: &TrajectoryRecord,
    c: &CertificateConstants,
) -> Result<DecayCertificate> {
    let lyap_l = traj
        .lyap_l
        .as_ref()
        .ok_or_else(|| Error::Certificate("trajectory lacks Lyapunov channels".into()))?;
    let e0 = traj.e0();
    let t_h = *traj.times.last().unwrap();
    let mut checks = Vec::new();

    // monotone energy
    let mut worst_rise = f64::NEG_INFINITY;
    for w in traj.energy.windows(2) {
        worst_rise = worst_rise.max(w[1] - w[0]);
    }
    checks.push(CertCheck {
        name: "energy_nonincreasing".into(),
        pass: worst_rise <= 1e-10 * e0,
        slack: 1e-10 * e0 - worst_rise,
        note: format!("worst per-interval rise {worst_rise:.3e}"),
    });

    // damping-margin bound
    let bc = dissipation_bound_check(traj);
    let margin = bc.worst_margin.unwrap_or(f64::NEG_INFINITY);
    checks.push(CertCheck {
        name: "decay_margin".into(),
        pass: !bc.skipped && margin >= -1e-8 * e0,
        slack: margin + 1e-8 * e0,
        note: format!("worst margin {margin:.3e}"),
    });

    // Lyapunov/energy equivalence at every sample
    let guard = 1e-12 * e0.max(1e-300);
    let mut eq_lo = f64::INFINITY;
    let mut eq_hi = f64::INFINITY;
    for i in 0..traj.len() {
        eq_lo = eq_lo.min(lyap_l[i] - c.theta1 * traj.energy[i]);
        eq_hi = eq_hi.min(c.theta2 * traj.energy[i] - lyap_l[i]);
    }
    checks.push(CertCheck {
        name: "norm_equivalence".into(),
        pass: eq_lo >= -guard && eq_hi >= -guard,
        slack: eq_lo.min(eq_hi),
        note: format!("lower slack {eq_lo:.3e}, upper slack {eq_hi:.3e}"),
    });

    // windowed integral bound on six sliding windows
    let mut int_slack = f64::INFINITY;
    for k in 1..=6 {
        let r = k as f64 * t_h / 8.0;
        let (i0, i1) = window_indices(&traj.times, r, t_h);
        let int_e = trapezoid(&traj.times, &traj.energy, i0, i1);
        int_slack = int_slack.min(c.m_decay * traj.energy[i0] - int_e);
    }
    let int_tol = 1e-8 * (1.0 + c.m_decay * e0);
    checks.push(CertCheck {
        name: "integral_windows".into(),
        pass: int_slack >= -int_tol,
        slack: int_slack,
        note: format!("worst window slack {int_slack:.3e}"),
    });

    // trajectory estimates on the same windows
    let mut lem = [f64::INFINITY; 3];
    for k in 1..=6 {
        let r = k as f64 * t_h / 8.0;
        if let Ok(s) = lemma_checks(sys, traj, c, r, t_h) {
            lem[0] = lem[0].min(s.cross_derivative);
            lem[1] = lem[1].min(s.energy_integral);
            lem[2] = lem[2].min(s.boundary_traces);
        }
    }
    let lem_tol = 1e-6 * (1.0 + e0);
    for (name, v) in [
        ("estimate_cross_derivative", lem[0]),
        ("estimate_energy_integral", lem[1]),
        ("estimate_boundary_traces", lem[2]),
    ] {
        checks.push(CertCheck {
            name: name.into(),
            pass: v >= -lem_tol,
            slack: v,
            note: format!("worst slack {v:.3e}"),
        });
    }

    // pointwise decay bound where the horizon reaches the onset
    let mut pointwise_samples = 0;
    let mut pw_slack = f64::INFINITY;
    for i in 0..traj.len() {
        if traj.times[i] >= c.m_decay {
            pointwise_samples += 1;
            let bound = e0 * (1.0 - traj.times[i] / c.m_decay).exp();
            pw_slack = pw_slack.min(bound - traj.energy[i]);
        }
    }
    checks.push(CertCheck {
        name: "pointwise_decay".into(),
        pass: pointwise_samples == 0 || pw_slack >= -1e-10 * e0,
        slack: if pointwise_samples == 0 { 0.0 } else { pw_slack },
        note: if pointwise_samples == 0 {
            format!("onset t = {:.3e} beyond horizon; not reached", c.m_decay)
        } else {
            format!("{pointwise_samples} samples checked")
        },
    });

    // empirical rate over the tail half of the horizon
    let fit = fit_decay_rate(&traj.times, &traj.energy, 0.5 * t_h, t_h).ok();
    let (theta_hat, fit_residual) = match &fit {
        Some(f) => (Some(f.theta_hat), Some(f.residual)),
        None => (None, None),
    };
    if e0 > 0.0 {
        let th = theta_hat.unwrap_or(0.0);
        checks.push(CertCheck {
            name: "decay_rate_fit".into(),
            pass: th > 1.0 / c.m_decay,
            slack: th - 1.0 / c.m_decay,
            note: format!("theta_hat {th:.4e} vs certified floor {:.4e}", 1.0 / c.m_decay),
        });
    }

    let valid = checks.iter().all(|c| c.pass);
    Ok(DecayCertificate {
        constants: *c,
        checks,
        theta_hat,
        fit_residual,
        pointwise_samples,
        valid,
    })
}
