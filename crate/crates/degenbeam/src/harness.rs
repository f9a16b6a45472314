//! Command implementations behind the CLI: validation, runs, certificates,
//! spectra, parameter sweeps and manufactured-solution studies.
//!
//! Exit-code contract: 0 success, 2 malformed input, 3 assumption
//! violation, 4 numerical failure, 5 certificate failure.

use crate::analysis;
use crate::evolution::{assemble_closed_loop, mms_run, simulate, Manufactured};
use crate::model::{
    certificate_constants, decay_bound, validate_assumptions, AssumptionReport,
    CertificateConstants,
};
use crate::scenario::Scenario;
use crate::{Error, Result};
use rayon::prelude::*;

/// Maps an error to the CLI exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Scenario(_) | Error::Io(_) => 2,
        Error::InvalidProfile(_) | Error::Assumption(_) => 3,
        Error::Numerical { .. } | Error::Eigensolver => 4,
        Error::Certificate(_) => 5,
    }
}

/// Command output: text for stdout plus the process exit code.
pub struct CmdOutput {
    pub stdout: String,
    pub code: i32,
}

fn render_report(report: &AssumptionReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "degeneracy class: {} (k_sigma = {})\n",
        report.class.as_str(),
        report.k_sigma
    ));
    if let Some(g) = report.gamma {
        out.push_str(&format!("resolved gamma: {g}\n"));
    }
    for c in &report.checks {
        out.push_str(&format!(
            "{} {:<28} measured = {:<22} ({})\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            format!("{}", c.measured),
            c.detail
        ));
    }
    out
}

fn render_constants(c: &CertificateConstants) -> String {
    let mut out = String::from("certificate constants:\n");
    for (name, v) in c.named() {
        out.push_str(&format!("  {name:<12} = {v}\n"));
    }
    out
}

/// `validate`: prints every assumption with its measured value and, when
/// the strict set passes, the full constant chain.
pub fn cli_validate(scn: &Scenario, lenient: bool) -> Result<CmdOutput> {
    let config = scn.to_model_config()?;
    let report = validate_assumptions(&config);
    let mut text = render_report(&report);
    if report.certificate_ready() {
        let consts = certificate_constants(&config)?;
        text.push_str(&render_constants(&consts));
        Ok(CmdOutput { stdout: text, code: 0 })
    } else if lenient {
        Ok(CmdOutput { stdout: text, code: 0 })
    } else {
        let first = report.first_failure().expect("some check failed");
        text.push_str(&format!(
            "strict validation failed: {} ({})\n",
            first.name, first.detail
        ));
        Ok(CmdOutput { stdout: text, code: 3 })
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

/// Renders a trajectory as the run CSV.
pub fn trajectory_csv(
    rec: &crate::evolution::TrajectoryRecord,
    constants: Option<&CertificateConstants>,
) -> String {
    let mut out = String::from("t,E,G,L,dE_bound_margin,u1,ux1,ut1,uxt1,w1,decay_bound\n");
    let e0 = rec.e0();
    for i in 0..rec.len() {
        let t = rec.times[i];
        let g = rec.lyap_g.as_ref().map(|v| fmt_f(v[i])).unwrap_or_default();
        let l = rec.lyap_l.as_ref().map(|v| fmt_f(v[i])).unwrap_or_default();
        let margin = match rec.bound_margin.as_ref() {
            Some(m) if i > 0 => fmt_f(m[i]),
            _ => String::new(),
        };
        let bound = match constants {
            Some(c) if t >= c.m_decay => fmt_f(decay_bound(c, e0, t)),
            _ => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_f(t),
            fmt_f(rec.energy[i]),
            g,
            l,
            margin,
            fmt_f(rec.u1[i]),
            fmt_f(rec.ux1[i]),
            fmt_f(rec.ut1[i]),
            fmt_f(rec.uxt1[i]),
            fmt_f(rec.w1[i]),
            bound,
        ));
    }
    out
}

/// Long-format dump of the stored full states.
pub fn states_csv(rec: &crate::evolution::TrajectoryRecord) -> String {
    let mut out = String::from("t,kind,index,value\n");
    if let Some(states) = rec.states.as_ref() {
        for st in states {
            for (i, v) in st.u.iter().enumerate() {
                out.push_str(&format!("{},u,{},{}\n", fmt_f(st.t), i, fmt_f(*v)));
            }
            for (i, v) in st.v.iter().enumerate() {
                out.push_str(&format!("{},v,{},{}\n", fmt_f(st.t), i, fmt_f(*v)));
            }
            for (i, v) in st.w.iter().enumerate() {
                out.push_str(&format!("{},w,{},{}\n", fmt_f(st.t), i, fmt_f(*v)));
            }
        }
    }
    out
}

/// Outcome of a `run` command.
pub struct RunArtifacts {
    pub csv: String,
    pub states: Option<String>,
    pub summary: String,
}

/// `run`: simulates the scenario and renders the trajectory CSV. Strict
/// validation unless `lenient`; the Lyapunov, margin and decay-bound
/// columns stay empty for lenient runs without an admissible gain window.
pub fn cli_run(scn: &Scenario, lenient: bool, full_state: bool) -> Result<RunArtifacts> {
    let config = scn.to_model_config()?;
    let report = validate_assumptions(&config);
    if !report.certificate_ready() && !lenient {
        let first = report.first_failure().expect("some check failed");
        return Err(Error::Assumption(format!("{} ({})", first.name, first.detail)));
    }
    let constants = if report.certificate_ready() {
        Some(certificate_constants(&config)?)
    } else {
        None
    };
    let sys = assemble_closed_loop(&config, scn.n, scn.beta, Some(scn.m_d))?;
    let rec = simulate(&sys, &scn.integrator()?, constants.as_ref(), full_state)?;
    let csv = trajectory_csv(&rec, constants.as_ref());
    let states = full_state.then(|| states_csv(&rec));
    let summary = format!(
        "rows = {}, E(0) = {}, E(T) = {}\n",
        rec.len(),
        rec.e0(),
        rec.energy.last().unwrap()
    );
    Ok(RunArtifacts { csv, states, summary })
}

/// Renders a decay certificate as the report text.
pub fn certificate_report(cert: &analysis::DecayCertificate) -> String {
    let mut out = render_constants(&cert.constants);
    out.push_str("checks:\n");
    for c in &cert.checks {
        out.push_str(&format!(
            "{} {:<28} slack = {:<+14.6e} {}\n",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.slack,
            c.note
        ));
    }
    if let Some(th) = cert.theta_hat {
        out.push_str(&format!(
            "empirical decay rate = {th} (certified floor 1/m_decay = {})\n",
            1.0 / cert.constants.m_decay
        ));
    }
    out.push_str(if cert.valid {
        "certificate: PASS\n"
    } else {
        "certificate: FAIL\n"
    });
    out
}

/// `certify`: strict validation, full run, every certificate check.
pub fn cli_certify(scn: &Scenario) -> Result<CmdOutput> {
    let config = scn.to_model_config()?;
    let report = validate_assumptions(&config);
    if !report.certificate_ready() {
        let first = report.first_failure().expect("some check failed");
        return Err(Error::Assumption(format!("{} ({})", first.name, first.detail)));
    }
    let consts = certificate_constants(&config)?;
    let sys = assemble_closed_loop(&config, scn.n, scn.beta, Some(scn.m_d))?;
    let rec = simulate(&sys, &scn.integrator()?, Some(&consts), false)?;
    let cert = analysis::certify(&sys, &rec, &consts)?;
    let text = certificate_report(&cert);
    Ok(CmdOutput {
        stdout: text,
        code: if cert.valid { 0 } else { 5 },
    })
}

fn scenario_with(scn: &Scenario, kd: f64, tau: f64) -> Scenario {
    let mut s = scn.clone();
    s.kd = kd;
    s.tau = tau;
    s
}

/// `spectrum`: abscissa of the assembled generator, optionally over a
/// (kd, tau) grid. One CSV row per grid point, ordered by the tuple.
pub fn cli_spectrum(
    scn: &Scenario,
    kd_grid: Option<&[f64]>,
    tau_grid: Option<&[f64]>,
    dim_cap: usize,
) -> Result<String> {
    let kds: Vec<f64> = kd_grid.map(|g| g.to_vec()).unwrap_or_else(|| vec![scn.kd]);
    let taus: Vec<f64> = tau_grid.map(|g| g.to_vec()).unwrap_or_else(|| vec![scn.tau]);
    let mut out = String::from("kd,tau,abscissa,stable\n");
    for &kd in &kds {
        for &tau in &taus {
            let s = scenario_with(scn, kd, tau);
            let config = s.to_model_config()?;
            let sys = assemble_closed_loop(&config, s.n, s.beta, Some(s.m_d))?;
            let rep = analysis::spectrum(&sys, dim_cap)?;
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f(kd),
                fmt_f(tau),
                fmt_f(rep.abscissa),
                rep.stable
            ));
        }
    }
    Ok(out)
}

/// One sweep row worth of results.
struct SweepRow {
    label: String,
    kd: f64,
    tau: f64,
    body: String,
}

fn sweep_row(label: &str, scn: &Scenario, dim_cap: usize) -> SweepRow {
    let run = || -> Result<String> {
        let config = scn.to_model_config()?;
        let report = validate_assumptions(&config);
        if !report.certificate_ready() {
            let first = report.first_failure().expect("some check failed");
            return Err(Error::Assumption(first.name.clone()));
        }
        let consts = certificate_constants(&config)?;
        let sys = assemble_closed_loop(&config, scn.n, scn.beta, Some(scn.m_d))?;
        let rec = simulate(&sys, &scn.integrator()?, Some(&consts), false)?;
        let cert = analysis::certify(&sys, &rec, &consts)?;
        let spec = analysis::spectrum(&sys, dim_cap)?;
        let e0 = rec.e0();
        let ratio = if e0 > 0.0 {
            fmt_f(rec.energy.last().unwrap() / e0)
        } else {
            String::new()
        };
        let theta = cert.theta_hat.map(fmt_f).unwrap_or_default();
        Ok(format!(
            "{},{},{},{},ok",
            ratio,
            theta,
            fmt_f(spec.abscissa),
            if cert.valid { "pass" } else { "fail" }
        ))
    };
    let body = match run() {
        Ok(b) => b,
        Err(e) => format!(",,,,{}", format!("{e}").replace(',', ";")),
    };
    SweepRow {
        label: label.to_string(),
        kd: scn.kd,
        tau: scn.tau,
        body,
    }
}

/// `sweep`: runs, certifies and eigensolves every scenario of a template
/// grid (or an explicit list), aggregating one CSV row per case. Rows are
/// computed on a bounded worker pool and emitted in parameter order, so
/// the output does not depend on the worker count.
pub fn cli_sweep(
    scenarios: &[(String, Scenario)],
    jobs: usize,
    dim_cap: usize,
) -> Result<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Scenario(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        scenarios
            .par_iter()
            .map(|(label, s)| sweep_row(label, s, dim_cap))
            .collect()
    });
    let mut out = String::from("scenario,kd,tau,e_ratio,theta_hat,abscissa,certificate,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.label,
            fmt_f(r.kd),
            fmt_f(r.tau),
            r.body
        ));
    }
    Ok(out)
}

/// Expands a template scenario over explicit kd and tau value lists,
/// ordered by the parameter tuple.
pub fn expand_grid(scn: &Scenario, kds: &[f64], taus: &[f64]) -> Vec<(String, Scenario)> {
    let kds = if kds.is_empty() { vec![scn.kd] } else { kds.to_vec() };
    let taus = if taus.is_empty() { vec![scn.tau] } else { taus.to_vec() };
    let mut out = Vec::new();
    for &kd in &kds {
        for &tau in &taus {
            out.push((
                format!("kd={kd}_tau={tau}"),
                scenario_with(scn, kd, tau),
            ));
        }
    }
    out
}

/// Default worker count: `DEGENBEAM_JOBS` or the available parallelism.
pub fn default_jobs() -> usize {
    std::env::var("DEGENBEAM_JOBS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// `mms`: manufactured-solution refinement study on the scenario's
/// coefficients, using `u(x, t) = x^2 exp(-t)`.
pub fn cli_mms(scn: &Scenario, levels: usize) -> Result<String> {
    let config = scn.to_model_config()?;
    let mms = Manufactured {
        coeffs: vec![0.0, 0.0, 1.0],
        lambda: 1.0,
    };
    let report = mms_run(
        &config,
        &mms,
        scn.n,
        scn.beta,
        scn.dt,
        scn.t_final,
        scn.scheme,
        levels,
    )?;
    let mut out = String::from("manufactured solution: u(x,t) = x^2 exp(-t)\n");
    out.push_str("study,n,dt,l2_error,energy_error\n");
    for l in &report.spatial {
        out.push_str(&format!(
            "spatial,{},{},{},{}\n",
            l.n_elements,
            fmt_f(l.dt),
            fmt_f(l.l2_error),
            fmt_f(l.energy_error)
        ));
    }
    for l in &report.temporal {
        out.push_str(&format!(
            "temporal,{},{},{},{}\n",
            l.n_elements,
            fmt_f(l.dt),
            fmt_f(l.l2_error),
            fmt_f(l.energy_error)
        ));
    }
    let fmt_orders = |o: &[f64]| {
        o.iter()
            .map(|v| format!("{v:.3}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    out.push_str(&format!(
        "observed spatial orders: {}\n",
        fmt_orders(&report.spatial_orders)
    ));
    out.push_str(&format!(
        "observed temporal orders: {}\n",
        fmt_orders(&report.temporal_orders)
    ));
    Ok(out)
}
