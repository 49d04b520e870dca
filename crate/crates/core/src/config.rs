//! Run configuration: a TOML file with `[model]`, `[grid]`, `[initial]` and
//! `[run]` sections. Every model key defaults to the reference Duffing set; only
//! `run.t_end` is required.
//!
//! ```toml
//! [model]
//! hbar = 0.1
//! diffusion = 1e-3
//!
//! [grid]
//! nq = 512
//! np = 512
//!
//! [initial]
//! centers = [[1.0, 0.0], [-1.0, 0.0]]
//!
//! [run]
//! mode = "both"
//! dt = 1e-3
//! t_end = 20.0
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use toml::{Spanned, Value};

use crate::evolve::Mode;
use crate::grid::{Field, PhaseSpaceGrid, MIN_AXIS_LEN};
use crate::model::ModelParams;
use crate::states::{cat_state_wigner, gaussian_wigner, GaussianSpec, StateError, EDGE_CLEARANCE};

/// One problem found in a config file. `line` is 1-based; `None` when the
/// problem has no location (a missing section).
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

/// Every problem found, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunModes {
    Quantum,
    Classical,
    Both,
}

impl RunModes {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            RunModes::Quantum => vec![Mode::Quantum],
            RunModes::Classical => vec![Mode::Classical],
            RunModes::Both => vec![Mode::Quantum, Mode::Classical],
        }
    }

    fn name(self) -> &'static str {
        match self {
            RunModes::Quantum => "quantum",
            RunModes::Classical => "classical",
            RunModes::Both => "both",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub nq: usize,
    pub np: usize,
    pub q: (f64, f64),
    pub p: (f64, f64),
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nq: 512,
            np: 512,
            q: (-8.0, 8.0),
            p: (-17.0, 17.0),
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Arc<PhaseSpaceGrid> {
        Arc::new(PhaseSpaceGrid::new(self.nq, self.np, self.q, self.p).expect("validated grid"))
    }
}

/// One center gives a Gaussian, two a superposition.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialSpec {
    pub centers: Vec<(f64, f64)>,
    pub sigma_q: f64,
    pub sigma_p: f64,
}

impl InitialSpec {
    pub fn reference(hbar: f64) -> Self {
        let s = (hbar / 2.0).sqrt();
        Self {
            centers: vec![(1.0, 0.0), (-1.0, 0.0)],
            sigma_q: s,
            sigma_p: s,
        }
    }

    pub fn packets(&self) -> Vec<GaussianSpec> {
        self.centers
            .iter()
            .map(|&(q0, p0)| GaussianSpec {
                q0,
                p0,
                sigma_q: self.sigma_q,
                sigma_p: self.sigma_p,
                weight: 1.0,
            })
            .collect()
    }

    pub fn build(&self, grid: Arc<PhaseSpaceGrid>, params: &ModelParams) -> Result<Field, StateError> {
        let packets = self.packets();
        match packets.as_slice() {
            [a] => gaussian_wigner(a, grid),
            [a, b] => cat_state_wigner(a, b, grid, params),
            _ => unreachable!("validated center count"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub modes: RunModes,
    pub dt: f64,
    pub t_end: f64,
    /// Model-time spacing of checkpoints; 0 writes only the final fields.
    pub checkpoint_every: f64,
    /// Diagnostics cadence in steps.
    pub diagnostics_every: usize,
    pub output: PathBuf,
    pub seed: u64,
    /// Boundary band width as a fraction of each axis.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub initial: InitialSpec,
    pub run: RunSpec,
}

impl RunConfig {
    /// Reference defaults with the given end time.
    pub fn with_t_end(t_end: f64) -> Self {
        let model = ModelParams::default();
        Self {
            initial: InitialSpec::reference(model.hbar),
            model,
            grid: GridSpec::default(),
            run: RunSpec {
                modes: RunModes::Both,
                dt: 1e-3,
                t_end,
                checkpoint_every: 0.0,
                diagnostics_every: 10,
                output: PathBuf::from("out"),
                seed: 1,
                margin: crate::diagnostics::DEFAULT_MARGIN,
            },
        }
    }

    /// Every key written explicitly; `parse_config(c.to_toml())` gives back `c`.
    pub fn to_toml(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        s.push_str("[model]\n");
        s.push_str(&format!("m = {:?}\n", m.m));
        s.push_str(&format!("hbar = {:?}\n", m.hbar));
        s.push_str(&format!("diffusion = {:?}\n", m.diffusion));
        if let Some(k) = m.k_meas {
            s.push_str(&format!("k_meas = {k:?}\n"));
        }
        s.push_str(&format!("a = {:?}\n", m.a_coef));
        s.push_str(&format!("b = {:?}\n", m.b_coef));
        s.push_str(&format!("drive_amplitude = {:?}\n", m.drive_amplitude));
        s.push_str(&format!("omega = {:?}\n", m.omega));
        s.push_str(&format!("lambda_bar = {:?}\n", m.lambda_bar));
        s.push_str(&format!("area = {:?}\n", m.area));
        s.push_str(&format!("u0_sq = {:?}\n", m.u0_sq));
        let g = &self.grid;
        s.push_str("\n[grid]\n");
        s.push_str(&format!("nq = {}\nnp = {}\n", g.nq, g.np));
        s.push_str(&format!("q_min = {:?}\nq_max = {:?}\n", g.q.0, g.q.1));
        s.push_str(&format!("p_min = {:?}\np_max = {:?}\n", g.p.0, g.p.1));
        let i = &self.initial;
        let centers: Vec<String> = i.centers.iter().map(|(q, p)| format!("[{q:?}, {p:?}]")).collect();
        s.push_str("\n[initial]\n");
        s.push_str(&format!("centers = [{}]\n", centers.join(", ")));
        s.push_str(&format!("sigma_q = {:?}\nsigma_p = {:?}\n", i.sigma_q, i.sigma_p));
        let r = &self.run;
        s.push_str("\n[run]\n");
        s.push_str(&format!("mode = \"{}\"\n", r.modes.name()));
        s.push_str(&format!("dt = {:?}\nt_end = {:?}\n", r.dt, r.t_end));
        s.push_str(&format!("checkpoint_every = {:?}\n", r.checkpoint_every));
        s.push_str(&format!("diagnostics_every = {}\n", r.diagnostics_every));
        s.push_str(&format!("output = {}\n", Value::String(r.output.display().to_string())));
        s.push_str(&format!("seed = {}\n", r.seed));
        s.push_str(&format!("margin = {:?}\n", r.margin));
        s
    }
}

type Section = BTreeMap<String, Spanned<Value>>;

const SECTIONS: [&str; 4] = ["model", "grid", "initial", "run"];

struct Reader<'a> {
    text: &'a str,
    sections: BTreeMap<String, Section>,
    used: BTreeSet<(String, String)>,
    errors: Vec<ConfigError>,
}

impl<'a> Reader<'a> {
    fn line_of(&self, offset: usize) -> usize {
        self.text[..offset.min(self.text.len())].matches('\n').count() + 1
    }

    fn header_line(&self, section: &str) -> Option<usize> {
        let header = format!("[{section}]");
        self.text.lines().position(|l| l.trim() == header).map(|i| i + 1)
    }

    fn error(&mut self, line: Option<usize>, section: &str, key: &str, message: impl Into<String>) {
        self.errors.push(ConfigError {
            line,
            key: format!("{section}.{key}"),
            message: message.into(),
        });
    }

    fn get(&mut self, section: &str, key: &str) -> Option<(Value, usize)> {
        let v = self.sections.get(section)?.get(key)?.clone();
        self.used.insert((section.to_string(), key.to_string()));
        let line = self.line_of(v.span().start);
        Some((v.into_inner(), line))
    }

    fn float(&mut self, section: &str, key: &str) -> Option<(f64, usize)> {
        let (v, line) = self.get(section, key)?;
        match v {
            Value::Float(x) => Some((x, line)),
            Value::Integer(i) => Some((i as f64, line)),
            other => {
                self.error(
                    Some(line),
                    section,
                    key,
                    format!("expected a number, found {}", other.type_str()),
                );
                None
            }
        }
    }

    fn integer(&mut self, section: &str, key: &str) -> Option<(i64, usize)> {
        let (v, line) = self.get(section, key)?;
        match v {
            Value::Integer(i) => Some((i, line)),
            other => {
                self.error(
                    Some(line),
                    section,
                    key,
                    format!("expected an integer, found {}", other.type_str()),
                );
                None
            }
        }
    }

    fn string(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let (v, line) = self.get(section, key)?;
        match v {
            Value::String(s) => Some((s, line)),
            other => {
                self.error(
                    Some(line),
                    section,
                    key,
                    format!("expected a string, found {}", other.type_str()),
                );
                None
            }
        }
    }

    /// Float with a default and a constraint.
    fn float_or(&mut self, section: &str, key: &str, default: f64, rule: (&str, fn(f64) -> bool)) -> f64 {
        match self.float(section, key) {
            Some((x, line)) => {
                if !x.is_finite() || !(rule.1)(x) {
                    self.error(Some(line), section, key, format!("{x} violates: {}", rule.0));
                }
                x
            }
            None => default,
        }
    }
}

const ANY: (&str, fn(f64) -> bool) = ("must be finite", |_| true);
const POSITIVE: (&str, fn(f64) -> bool) = ("must be > 0", |x| x > 0.0);
const NON_NEGATIVE: (&str, fn(f64) -> bool) = ("must be >= 0", |x| x >= 0.0);

fn read_model(r: &mut Reader) -> ModelParams {
    let d = ModelParams::default();
    let s = "model";
    let m = r.float_or(s, "m", d.m, POSITIVE);
    let hbar = r.float_or(s, "hbar", d.hbar, POSITIVE);
    let k_meas = r.float(s, "k_meas").map(|(k, line)| {
        if !(k.is_finite() && k >= 0.0) {
            r.error(Some(line), s, "k_meas", format!("{k} violates: must be >= 0"));
        }
        (k, line)
    });
    let diffusion = match (r.float(s, "diffusion"), k_meas) {
        (Some((x, line)), k) => {
            if !(x.is_finite() && x >= 0.0) {
                r.error(Some(line), s, "diffusion", format!("{x} violates: must be >= 0"));
            }
            if let Some((k, _)) = k {
                let expect = hbar * hbar * k;
                if (x - expect).abs() > 1e-12 * expect.abs().max(1e-300) {
                    r.error(
                        Some(line),
                        s,
                        "diffusion",
                        format!("{x} disagrees with hbar^2 * k_meas = {expect}"),
                    );
                }
            }
            x
        }
        (None, Some((k, _))) => hbar * hbar * k,
        (None, None) => d.diffusion,
    };
    ModelParams {
        m,
        hbar,
        diffusion,
        k_meas: k_meas.map(|(k, _)| k),
        a_coef: r.float_or(s, "a", d.a_coef, ANY),
        b_coef: r.float_or(s, "b", d.b_coef, NON_NEGATIVE),
        drive_amplitude: r.float_or(s, "drive_amplitude", d.drive_amplitude, ANY),
        omega: r.float_or(s, "omega", d.omega, POSITIVE),
        lambda_bar: r.float_or(s, "lambda_bar", d.lambda_bar, POSITIVE),
        area: r.float_or(s, "area", d.area, POSITIVE),
        // u0^2 = hbar unless given
        u0_sq: r.float_or(s, "u0_sq", hbar, POSITIVE),
    }
}

fn read_grid(r: &mut Reader) -> GridSpec {
    let d = GridSpec::default();
    let s = "grid";
    let axis = |r: &mut Reader, key: &str, default: usize| match r.integer(s, key) {
        Some((n, line)) => {
            if n < MIN_AXIS_LEN as i64 || !(n as u64).is_power_of_two() {
                r.error(
                    Some(line),
                    s,
                    key,
                    format!("{n} is not a power of two >= {MIN_AXIS_LEN}"),
                );
                default
            } else {
                n as usize
            }
        }
        None => default,
    };
    let nq = axis(r, "nq", d.nq);
    let np = axis(r, "np", d.np);
    let bounds = |r: &mut Reader, lo_key: &str, hi_key: &str, default: (f64, f64)| {
        let lo = r.float_or(s, lo_key, default.0, ANY);
        let hi = r.float(s, hi_key);
        let hi = match hi {
            Some((h, line)) => {
                if !(h.is_finite() && h > lo) {
                    r.error(
                        Some(line),
                        s,
                        hi_key,
                        format!("{h} violates: must exceed {lo_key} = {lo}"),
                    );
                }
                h
            }
            None => {
                if !(default.1 > lo) {
                    let line = r.header_line(s);
                    r.error(
                        line,
                        s,
                        hi_key,
                        format!("default {} does not exceed {lo_key} = {lo}", default.1),
                    );
                }
                default.1
            }
        };
        (lo, hi)
    };
    let q = bounds(r, "q_min", "q_max", d.q);
    let p = bounds(r, "p_min", "p_max", d.p);
    GridSpec { nq, np, q, p }
}

fn read_initial(r: &mut Reader, model: &ModelParams, grid: &GridSpec) -> InitialSpec {
    let d = InitialSpec::reference(model.hbar);
    let s = "initial";
    let mut centers = d.centers.clone();
    let mut centers_line = r.header_line(s);
    if let Some((v, line)) = r.get(s, "centers") {
        centers_line = Some(line);
        let parsed: Option<Vec<(f64, f64)>> = match &v {
            Value::Array(items) => items
                .iter()
                .map(|it| match it {
                    Value::Array(pair) if pair.len() == 2 => {
                        let num = |x: &Value| match x {
                            Value::Float(f) => Some(*f),
                            Value::Integer(i) => Some(*i as f64),
                            _ => None,
                        };
                        Some((num(&pair[0])?, num(&pair[1])?))
                    }
                    _ => None,
                })
                .collect(),
            _ => None,
        };
        match parsed {
            Some(c) if (1..=2).contains(&c.len()) => centers = c,
            _ => r.error(Some(line), s, "centers", "expected one or two [q, p] pairs"),
        }
    }
    let sigma_q = r.float_or(s, "sigma_q", d.sigma_q, POSITIVE);
    let sigma_p = r.float_or(s, "sigma_p", d.sigma_p, POSITIVE);
    for &(q0, p0) in &centers {
        let inside = q0 - EDGE_CLEARANCE * sigma_q >= grid.q.0
            && q0 + EDGE_CLEARANCE * sigma_q <= grid.q.1
            && p0 - EDGE_CLEARANCE * sigma_p >= grid.p.0
            && p0 + EDGE_CLEARANCE * sigma_p <= grid.p.1;
        if !inside {
            r.error(
                centers_line,
                s,
                "centers",
                format!("packet at ({q0}, {p0}) is within {EDGE_CLEARANCE} stds of the grid edge"),
            );
        }
    }
    if centers.len() == 2 && (sigma_q * sigma_p - model.hbar / 2.0).abs() > 1e-9 * model.hbar {
        r.error(
            centers_line,
            s,
            "sigma_q",
            format!("a superposition needs sigma_q sigma_p = hbar/2 = {}", model.hbar / 2.0),
        );
    }
    InitialSpec {
        centers,
        sigma_q,
        sigma_p,
    }
}

fn read_run(r: &mut Reader) -> RunSpec {
    let d = RunConfig::with_t_end(1.0).run;
    let s = "run";
    let modes = match r.string(s, "mode") {
        Some((m, line)) => match m.as_str() {
            "quantum" => RunModes::Quantum,
            "classical" => RunModes::Classical,
            "both" => RunModes::Both,
            _ => {
                r.error(
                    Some(line),
                    s,
                    "mode",
                    format!("`{m}` is not one of quantum, classical, both"),
                );
                d.modes
            }
        },
        None => d.modes,
    };
    let dt = r.float_or(s, "dt", d.dt, POSITIVE);
    let t_end = match r.float(s, "t_end") {
        Some((t, line)) => {
            if !(t.is_finite() && t >= dt) {
                r.error(Some(line), s, "t_end", format!("{t} violates: must be >= dt = {dt}"));
            }
            t
        }
        None => {
            let line = r.header_line(s);
            r.error(line, s, "t_end", "missing required key");
            d.t_end
        }
    };
    let checkpoint_every = r.float_or(s, "checkpoint_every", d.checkpoint_every, NON_NEGATIVE);
    let diagnostics_every = match r.integer(s, "diagnostics_every") {
        Some((n, line)) if n < 0 => {
            r.error(
                Some(line),
                s,
                "diagnostics_every",
                format!("{n} violates: must be >= 0"),
            );
            d.diagnostics_every
        }
        Some((n, _)) => n as usize,
        None => d.diagnostics_every,
    };
    let output = r.string(s, "output").map(|(o, _)| PathBuf::from(o)).unwrap_or(d.output);
    let seed = match r.integer(s, "seed") {
        Some((n, line)) if n < 0 => {
            r.error(Some(line), s, "seed", format!("{n} violates: must be >= 0"));
            d.seed
        }
        Some((n, _)) => n as u64,
        None => d.seed,
    };
    let margin = match r.float(s, "margin") {
        Some((x, line)) => {
            if !(x > 0.0 && x < 0.5) {
                r.error(Some(line), s, "margin", format!("{x} violates: must lie in (0, 0.5)"));
            }
            x
        }
        None => d.margin,
    };
    RunSpec {
        modes,
        dt,
        t_end,
        checkpoint_every,
        diagnostics_every,
        output,
        seed,
        margin,
    }
}

/// Parses and validates a config, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let raw: BTreeMap<String, Spanned<Section>> = toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigErrors(vec![ConfigError {
            line,
            key: String::from("<syntax>"),
            message: e.message().to_string(),
        }])
    })?;
    let mut r = Reader {
        text,
        sections: BTreeMap::new(),
        used: BTreeSet::new(),
        errors: Vec::new(),
    };
    for (name, section) in raw {
        if SECTIONS.contains(&name.as_str()) {
            r.sections.insert(name, section.into_inner());
        } else {
            let line = r.header_line(&name).or_else(|| Some(r.line_of(section.span().start)));
            r.error(line, &name, "*", "unknown section");
        }
    }
    let model = read_model(&mut r);
    let grid = read_grid(&mut r);
    let initial = read_initial(&mut r, &model, &grid);
    let run = read_run(&mut r);
    let unknown: Vec<(String, String, usize)> = r
        .sections
        .iter()
        .flat_map(|(s, keys)| {
            keys.iter()
                .filter(|(k, _)| !r.used.contains(&(s.clone(), (*k).clone())))
                .map(|(k, v)| (s.clone(), k.clone(), v.span().start))
                .collect::<Vec<_>>()
        })
        .collect();
    for (s, k, off) in unknown {
        let line = r.line_of(off);
        r.error(Some(line), &s, &k, "unknown key");
    }
    if r.errors.is_empty() {
        Ok(RunConfig {
            model,
            grid,
            initial,
            run,
        })
    } else {
        r.errors.sort_by_key(|e| e.line.unwrap_or(usize::MAX));
        Err(ConfigErrors(r.errors))
    }
}
