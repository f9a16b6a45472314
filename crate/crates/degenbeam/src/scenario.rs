//! Scenario files: a strict sectioned key-value format describing one
//! closed-loop problem, its discretization and its output settings.
//!
//! Parsing is strict: every section and required key must be present and
//! unknown keys are rejected. A parsed scenario serializes back to a
//! canonical form that parses to the identical configuration.

use crate::evolution::{IntegratorConfig, Scheme};
use crate::model::{
    AxialForceProfile, DelaySpec, Expr, GainSet, GammaSpec, ModelConfig, RigidityProfile,
};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Parsed scenario: problem data plus discretization and output settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sigma: RigidityProfile,
    pub q: AxialForceProfile,
    pub kr: f64,
    pub ka: f64,
    pub kv: f64,
    pub kd: f64,
    pub kb: f64,
    pub tau: f64,
    pub gamma: GammaSpec,
    pub g0: Expr,
    pub u0: Expr,
    pub u1: Expr,
    pub n: usize,
    pub beta: f64,
    pub m_d: usize,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub stride: usize,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

struct Section {
    name: String,
    entries: BTreeMap<String, String>,
}

impl Section {
    fn take(&mut self, key: &str) -> Result<String> {
        self.entries
            .remove(key)
            .ok_or_else(|| malformed(format!("section [{}] is missing key '{}'", self.name, key)))
    }

    fn take_f64(&mut self, key: &str) -> Result<f64> {
        let raw = self.take(key)?;
        raw.parse::<f64>()
            .map_err(|_| malformed(format!("key '{}' in [{}]: bad number '{}'", key, self.name, raw)))
    }

    fn take_usize(&mut self, key: &str) -> Result<usize> {
        let raw = self.take(key)?;
        raw.parse::<usize>()
            .map_err(|_| malformed(format!("key '{}' in [{}]: bad integer '{}'", key, self.name, raw)))
    }

    fn take_floats(&mut self, key: &str) -> Result<Vec<f64>> {
        let raw = self.take(key)?;
        raw.split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| malformed(format!("key '{}' in [{}]: bad number '{}'", key, self.name, tok)))
            })
            .collect()
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.entries.keys().next() {
            return Err(malformed(format!("unknown key '{}' in section [{}]", k, self.name)));
        }
        Ok(())
    }
}

fn parse_expr(name: &str, raw: &str) -> Result<Expr> {
    let mut toks = raw.split_whitespace();
    let head = toks
        .next()
        .ok_or_else(|| malformed(format!("{name}: empty expression")))?;
    let args: Vec<f64> = toks
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| malformed(format!("{name}: bad number '{t}'")))
        })
        .collect::<Result<_>>()?;
    match head {
        "zero" => {
            if !args.is_empty() {
                return Err(malformed(format!("{name}: 'zero' takes no arguments")));
            }
            Ok(Expr::Zero)
        }
        "const" => {
            if args.len() != 1 {
                return Err(malformed(format!("{name}: 'const' takes one argument")));
            }
            Ok(Expr::Const(args[0]))
        }
        "poly" => {
            if args.is_empty() {
                return Err(malformed(format!("{name}: 'poly' needs coefficients")));
            }
            Ok(Expr::Poly(args))
        }
        "sin" => match args.len() {
            1 => Ok(Expr::SinModes(vec![(1.0, args[0])])),
            n if n >= 2 && n % 2 == 0 => Ok(Expr::SinModes(
                args.chunks(2).map(|c| (c[0], c[1])).collect(),
            )),
            _ => Err(malformed(format!(
                "{name}: 'sin' takes one frequency or amplitude/frequency pairs"
            ))),
        },
        other => Err(malformed(format!("{name}: unknown expression tag '{other}'"))),
    }
}

fn format_expr(e: &Expr) -> String {
    match e {
        Expr::Zero => "zero".into(),
        Expr::Const(c) => format!("const {c}"),
        Expr::Poly(c) => {
            let body: Vec<String> = c.iter().map(|v| format!("{v}")).collect();
            format!("poly {}", body.join(" "))
        }
        Expr::SinModes(m) => {
            let body: Vec<String> = m.iter().flat_map(|(a, w)| [format!("{a}"), format!("{w}")]).collect();
            format!("sin {}", body.join(" "))
        }
    }
}

fn format_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl Scenario {
    /// Parses a scenario document. Unknown sections or keys, missing keys
    /// and unparseable values are all rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, Section> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| malformed(format!("line {}: unterminated section header", lineno + 1)))?
                    .trim()
                    .to_string();
                if sections.contains_key(&name) {
                    return Err(malformed(format!("duplicate section [{name}]")));
                }
                sections.insert(
                    name.clone(),
                    Section {
                        name: name.clone(),
                        entries: BTreeMap::new(),
                    },
                );
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| malformed(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let section = current
                .as_ref()
                .ok_or_else(|| malformed(format!("line {}: key outside any section", lineno + 1)))?;
            let entries = &mut sections.get_mut(section).unwrap().entries;
            let key = key.trim().to_string();
            if entries.contains_key(&key) {
                return Err(malformed(format!("duplicate key '{}' in [{}]", key, section)));
            }
            entries.insert(key, value.trim().to_string());
        }

        let mut grab = |name: &str| -> Result<Section> {
            sections
                .remove(name)
                .ok_or_else(|| malformed(format!("missing section [{name}]")))
        };

        let mut sigma = grab("sigma")?;
        let sigma_prof = match sigma.take("kind")?.as_str() {
            "powerlaw" => RigidityProfile::PowerLaw {
                alpha: sigma.take_f64("alpha")?,
            },
            "constant" => RigidityProfile::Constant {
                value: sigma.take_f64("value")?,
            },
            "tabulated" => RigidityProfile::Tabulated {
                xs: sigma.take_floats("x")?,
                values: sigma.take_floats("values")?,
            },
            other => return Err(malformed(format!("[sigma]: unknown kind '{other}'"))),
        };
        sigma.finish()?;

        let mut q = grab("q")?;
        let q_prof = match q.take("kind")?.as_str() {
            "constant" => AxialForceProfile::Constant {
                value: q.take_f64("value")?,
            },
            "affine" => AxialForceProfile::Affine {
                a: q.take_f64("a")?,
                b: q.take_f64("b")?,
            },
            "tabulated" => AxialForceProfile::Tabulated {
                xs: q.take_floats("x")?,
                values: q.take_floats("values")?,
            },
            other => return Err(malformed(format!("[q]: unknown kind '{other}'"))),
        };
        q.finish()?;

        let mut gains = grab("gains")?;
        let (kr, ka, kv, kd, kb) = (
            gains.take_f64("kr")?,
            gains.take_f64("ka")?,
            gains.take_f64("kv")?,
            gains.take_f64("kd")?,
            gains.take_f64("kb")?,
        );
        gains.finish()?;

        let mut delay = grab("delay")?;
        let tau = delay.take_f64("tau")?;
        let gamma_raw = delay.take("gamma")?;
        let gamma = if gamma_raw == "auto" {
            GammaSpec::Auto
        } else {
            GammaSpec::Value(
                gamma_raw
                    .parse::<f64>()
                    .map_err(|_| malformed(format!("[delay]: bad gamma '{gamma_raw}'")))?,
            )
        };
        let g0 = parse_expr("g0", &delay.take("g0")?)?;
        delay.finish()?;

        let mut initial = grab("initial")?;
        let u0 = parse_expr("u0", &initial.take("u0")?)?;
        let u1 = parse_expr("u1", &initial.take("u1")?)?;
        initial.finish()?;

        let mut disc = grab("discretization")?;
        let n = disc.take_usize("n")?;
        let beta = disc.take_f64("beta")?;
        let m_d = disc.take_usize("m_d")?;
        let dt = disc.take_f64("dt")?;
        let t_final = disc.take_f64("t_final")?;
        let scheme = match disc.take("scheme")?.as_str() {
            "midpoint" => Scheme::ImplicitMidpoint,
            "backward_euler" => Scheme::BackwardEuler,
            other => return Err(malformed(format!("[discretization]: unknown scheme '{other}'"))),
        };
        disc.finish()?;

        let mut output = grab("output")?;
        let stride = output.take_usize("stride")?;
        output.finish()?;

        if let Some(name) = sections.keys().next() {
            return Err(malformed(format!("unknown section [{name}]")));
        }

        Ok(Scenario {
            sigma: sigma_prof,
            q: q_prof,
            kr,
            ka,
            kv,
            kd,
            kb,
            tau,
            gamma,
            g0,
            u0,
            u1,
            n,
            beta,
            m_d,
            dt,
            t_final,
            scheme,
            stride,
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| malformed(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical serialization; parsing it back yields an equal scenario.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        match &self.sigma {
            RigidityProfile::PowerLaw { alpha } => {
                out.push_str(&format!("[sigma]\nkind = powerlaw\nalpha = {alpha}\n"));
            }
            RigidityProfile::Constant { value } => {
                out.push_str(&format!("[sigma]\nkind = constant\nvalue = {value}\n"));
            }
            RigidityProfile::Tabulated { xs, values } => {
                out.push_str(&format!(
                    "[sigma]\nkind = tabulated\nx = {}\nvalues = {}\n",
                    format_floats(xs),
                    format_floats(values)
                ));
            }
        }
        match &self.q {
            AxialForceProfile::Constant { value } => {
                out.push_str(&format!("\n[q]\nkind = constant\nvalue = {value}\n"));
            }
            AxialForceProfile::Affine { a, b } => {
                out.push_str(&format!("\n[q]\nkind = affine\na = {a}\nb = {b}\n"));
            }
            AxialForceProfile::Tabulated { xs, values } => {
                out.push_str(&format!(
                    "\n[q]\nkind = tabulated\nx = {}\nvalues = {}\n",
                    format_floats(xs),
                    format_floats(values)
                ));
            }
        }
        out.push_str(&format!(
            "\n[gains]\nkr = {}\nka = {}\nkv = {}\nkd = {}\nkb = {}\n",
            self.kr, self.ka, self.kv, self.kd, self.kb
        ));
        let gamma = match self.gamma {
            GammaSpec::Auto => "auto".to_string(),
            GammaSpec::Value(v) => format!("{v}"),
        };
        out.push_str(&format!(
            "\n[delay]\ntau = {}\ngamma = {}\ng0 = {}\n",
            self.tau,
            gamma,
            format_expr(&self.g0)
        ));
        out.push_str(&format!(
            "\n[initial]\nu0 = {}\nu1 = {}\n",
            format_expr(&self.u0),
            format_expr(&self.u1)
        ));
        let scheme = match self.scheme {
            Scheme::ImplicitMidpoint => "midpoint",
            Scheme::BackwardEuler => "backward_euler",
        };
        out.push_str(&format!(
            "\n[discretization]\nn = {}\nbeta = {}\nm_d = {}\ndt = {}\nt_final = {}\nscheme = {}\n",
            self.n, self.beta, self.m_d, self.dt, self.t_final, scheme
        ));
        out.push_str(&format!("\n[output]\nstride = {}\n", self.stride));
        out
    }

    /// Validated continuous problem data. Semantic violations (negative
    /// gains, non-positive profiles) surface here, not at parse time.
    pub fn to_model_config(&self) -> Result<ModelConfig> {
        let rigidity = match &self.sigma {
            RigidityProfile::PowerLaw { alpha } => RigidityProfile::power_law(*alpha)?,
            RigidityProfile::Constant { value } => RigidityProfile::constant(*value)?,
            RigidityProfile::Tabulated { xs, values } => {
                RigidityProfile::tabulated(xs.clone(), values.clone())?
            }
        };
        let axial = match &self.q {
            AxialForceProfile::Constant { value } => AxialForceProfile::constant(*value)?,
            AxialForceProfile::Affine { a, b } => AxialForceProfile::affine(*a, *b)?,
            AxialForceProfile::Tabulated { xs, values } => {
                AxialForceProfile::tabulated(xs.clone(), values.clone())?
            }
        };
        let gains = GainSet::new(self.kr, self.ka, self.kv, self.kd, self.kb)?;
        let delay = DelaySpec::new(self.tau, self.gamma, self.g0.clone())?;
        Ok(ModelConfig {
            rigidity,
            axial,
            gains,
            delay,
            u0: self.u0.clone(),
            u1: self.u1.clone(),
        })
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        IntegratorConfig::new(self.dt, self.t_final, self.scheme, self.stride)
    }
}

/// The reference scenario shipped with the repository.
pub fn reference_scenario_text() -> &'static str {
    include_str!("../../../scenarios/reference.scn")
}
