//! Problem instances: geometry, fundamental diagram, demands, initial state
//! and control settings, loaded from TOML.
//!
//! Internal units are hours, km, veh/h and veh/km. The config gives the model
//! and control steps in seconds. Sections are numbered from 1 in config files
//! and exports and from 0 in code.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;

type SResult<T> = std::result::Result<T, ScenarioError>;

/// Either one value for every section or one value per section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerSection {
    Uniform(f64),
    List(Vec<f64>),
}

impl PerSection {
    fn expand(&self, n: usize, field: &str) -> SResult<Vec<f64>> {
        match self {
            PerSection::Uniform(v) => Ok(vec![*v; n]),
            PerSection::List(v) if v.len() == n => Ok(v.clone()),
            PerSection::List(v) => Err(ScenarioError::invalid(
                field,
                format!("expected {n} values (one per section), got {}", v.len()),
            )),
        }
    }
}

impl From<f64> for PerSection {
    fn from(v: f64) -> Self {
        PerSection::Uniform(v)
    }
}

impl From<Vec<f64>> for PerSection {
    fn from(v: Vec<f64>) -> Self {
        PerSection::List(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdConfig {
    /// Free speed (km/h).
    pub v_f: f64,
    /// Back-wave speed (km/h).
    pub w_s: f64,
    /// Total capacity of both directions (veh/h).
    pub q_cap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighwayConfig {
    pub n: usize,
    /// Section lengths (km).
    pub lengths: PerSection,
    /// Off-ramp exit rates of direction a.
    #[serde(default = "zero")]
    pub exit_rate_a: PerSection,
    #[serde(default = "zero")]
    pub exit_rate_b: PerSection,
    /// Sections (1-based) with an on-ramp in direction a.
    #[serde(default)]
    pub onramps_a: Vec<usize>,
    #[serde(default)]
    pub onramps_b: Vec<usize>,
    /// Physical carriageway width (m); metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_m: Option<f64>,
}

fn zero() -> PerSection {
    PerSection::Uniform(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// Model step (s).
    #[serde(rename = "T")]
    pub t_s: f64,
    /// Control step (s).
    #[serde(rename = "T_c")]
    pub t_c_s: f64,
    /// Horizon in model steps.
    #[serde(rename = "K")]
    pub k: usize,
    pub eps_min: PerSection,
    pub eps_max: PerSection,
    /// Sharing factor in force before the horizon starts.
    #[serde(default = "half")]
    pub eps_init: PerSection,
    /// Whether the capacity-drop parameters below are applied. When false the
    /// model uses `lambda_d = 0`, `lambda_r = 1`.
    #[serde(default = "yes")]
    pub capacity_drop: bool,
    #[serde(default = "default_lambda_d")]
    pub lambda_d: f64,
    #[serde(default = "default_lambda_r")]
    pub lambda_r: f64,
    #[serde(default = "default_w1")]
    pub w1: f64,
    #[serde(default = "default_w2")]
    pub w2: f64,
    #[serde(default = "default_w3")]
    pub w3: f64,
    #[serde(default = "default_w4")]
    pub w4: f64,
    /// Floor applied to projected demands in the reserve-balancing term (veh/h).
    #[serde(default = "default_d_floor")]
    pub d_floor: f64,
    /// Reward per vehicle-km moved, breaking ties between equal-TTS flow
    /// patterns in favour of flows that follow the flow equations.
    #[serde(default = "default_w_flow")]
    pub w_flow: f64,
    /// Start the demand projection from the initial densities instead of an
    /// empty road.
    #[serde(default)]
    pub projection_includes_initial: bool,
}

fn half() -> PerSection {
    PerSection::Uniform(0.5)
}
fn yes() -> bool {
    true
}
fn default_lambda_d() -> f64 {
    0.4
}
fn default_lambda_r() -> f64 {
    0.7
}
fn default_w1() -> f64 {
    1e-1
}
fn default_w2() -> f64 {
    1e-4
}
fn default_w3() -> f64 {
    1e-5
}
fn default_w4() -> f64 {
    1e-3
}
fn default_d_floor() -> f64 {
    10.0
}
pub const DEFAULT_W_FLOW: f64 = 1e-6;
fn default_w_flow() -> f64 {
    DEFAULT_W_FLOW
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::A => "a",
            Direction::B => "b",
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Demand breakpoint: time (s) and flow (veh/h).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Breakpoint {
    pub t_s: f64,
    pub q: f64,
}

impl Breakpoint {
    pub fn new(t_s: f64, q: f64) -> Self {
        Self { t_s, q }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampDemand {
    pub direction: Direction,
    /// 1-based section index.
    pub section: usize,
    pub profile: Vec<Breakpoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandsConfig {
    /// Mainstream inflow of direction a, entering section 1.
    pub entry_a: Vec<Breakpoint>,
    /// Mainstream inflow of direction b, entering section n.
    pub entry_b: Vec<Breakpoint>,
    #[serde(default)]
    pub ramps: Vec<RampDemand>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Initial densities of direction a (veh/km).
    pub rho_a: PerSection,
    pub rho_b: PerSection,
}

/// The on-disk scenario document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub label: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    pub fd: FdConfig,
    pub highway: HighwayConfig,
    pub control: ControlConfig,
    pub demands: DemandsConfig,
    pub initial: InitialConfig,
}

/// Triangular fundamental diagram of the whole carriageway.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdParams {
    pub v_f: f64,
    pub w_s: f64,
    pub q_cap: f64,
    pub rho_cr: f64,
    pub rho_max: f64,
}

impl FdParams {
    pub fn new(v_f: f64, w_s: f64, q_cap: f64) -> SResult<Self> {
        for (name, v) in [("fd.v_f", v_f), ("fd.w_s", w_s), ("fd.q_cap", q_cap)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ScenarioError::invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        let rho_cr = q_cap / v_f;
        let rho_max = rho_cr + q_cap / w_s;
        Ok(Self {
            v_f,
            w_s,
            q_cap,
            rho_cr,
            rho_max,
        })
    }

    /// Critical density, capacity and jam density of a direction holding the
    /// share `eps` of the carriageway.
    pub fn scaled(&self, eps: f64) -> (f64, f64, f64) {
        (eps * self.rho_cr, eps * self.q_cap, eps * self.rho_max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Highway {
    pub n: usize,
    pub lengths: Vec<f64>,
    pub exit_rate_a: Vec<f64>,
    pub exit_rate_b: Vec<f64>,
    pub has_onramp_a: Vec<bool>,
    pub has_onramp_b: Vec<bool>,
    pub width_m: Option<f64>,
}

/// Per-step external flows (veh/h). Ramp matrices are indexed `[section][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandSet {
    pub entry_a: Vec<f64>,
    pub entry_b: Vec<f64>,
    pub ramp_a: Vec<Vec<f64>>,
    pub ramp_b: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Control {
    /// Model step (h).
    pub t: f64,
    /// Control step (h).
    pub t_c: f64,
    pub k: usize,
    pub k_c: usize,
    /// Model steps per control step.
    pub steps_per_control: usize,
    pub eps_min: Vec<f64>,
    pub eps_max: Vec<f64>,
    pub eps_init: Vec<f64>,
    /// Capacity-drop parameters in effect.
    pub lambda_d: f64,
    pub lambda_r: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub d_floor: f64,
    pub w_flow: f64,
    pub projection_includes_initial: bool,
}

impl Control {
    /// Control step in force at model step `k`.
    pub fn control_step(&self, k: usize) -> usize {
        k / self.steps_per_control
    }
}

/// A validated problem instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub notes: String,
    pub fd: FdParams,
    pub highway: Highway,
    pub demands: DemandSet,
    pub control: Control,
    pub rho0_a: Vec<f64>,
    pub rho0_b: Vec<f64>,
    config: ScenarioConfig,
}

fn check_finite_nonneg(field: &str, values: &[f64]) -> SResult<()> {
    for (i, v) in values.iter().enumerate() {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(ScenarioError::invalid(
                field,
                format!("entry {} must be finite and ≥ 0, got {v}", i + 1),
            ));
        }
    }
    Ok(())
}

/// Samples a breakpoint profile at `t = k·step` for `k = 0..count` by linear
/// interpolation, holding the end values outside the breakpoint range.
pub fn expand_profile(points: &[Breakpoint], step_s: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| {
            let t = k as f64 * step_s;
            let idx = points.partition_point(|p| p.t_s <= t);
            if idx == 0 {
                return points[0].q;
            }
            let p0 = points[idx - 1];
            if p0.t_s == t || idx == points.len() {
                return p0.q;
            }
            let p1 = points[idx];
            p0.q + (p1.q - p0.q) * (t - p0.t_s) / (p1.t_s - p0.t_s)
        })
        .collect()
}

fn check_profile(field: &str, points: &[Breakpoint]) -> SResult<()> {
    if points.is_empty() {
        return Err(ScenarioError::invalid(field, "needs at least one breakpoint"));
    }
    for (i, p) in points.iter().enumerate() {
        if !p.t_s.is_finite() || !(p.q.is_finite() && p.q >= 0.0) {
            return Err(ScenarioError::invalid(
                format!("{field}[{i}]"),
                "t_s must be finite and q finite and ≥ 0",
            ));
        }
        if i > 0 && p.t_s <= points[i - 1].t_s {
            return Err(ScenarioError::invalid(
                format!("{field}[{i}].t_s"),
                "breakpoint times must be strictly increasing",
            ));
        }
    }
    Ok(())
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> SResult<Self> {
        let fd = FdParams::new(config.fd.v_f, config.fd.w_s, config.fd.q_cap)?;

        let h = &config.highway;
        let n = h.n;
        if n == 0 {
            return Err(ScenarioError::invalid("highway.n", "must be ≥ 1"));
        }
        let lengths = h.lengths.expand(n, "highway.lengths")?;
        if let Some(v) = lengths.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(ScenarioError::invalid("highway.lengths", format!("lengths must be > 0, got {v}")));
        }
        let exit_rate_a = h.exit_rate_a.expand(n, "highway.exit_rate_a")?;
        let exit_rate_b = h.exit_rate_b.expand(n, "highway.exit_rate_b")?;
        for (field, rates) in [("highway.exit_rate_a", &exit_rate_a), ("highway.exit_rate_b", &exit_rate_b)] {
            if let Some(v) = rates.iter().find(|v| !(**v >= 0.0 && **v < 1.0)) {
                return Err(ScenarioError::invalid(field, format!("exit rates must lie in [0, 1), got {v}")));
            }
        }
        let mut has_onramp_a = vec![false; n];
        let mut has_onramp_b = vec![false; n];
        for (field, list, flags) in [
            ("highway.onramps_a", &h.onramps_a, &mut has_onramp_a),
            ("highway.onramps_b", &h.onramps_b, &mut has_onramp_b),
        ] {
            for &s in list {
                if s == 0 || s > n {
                    return Err(ScenarioError::invalid(field, format!("section {s} outside 1..={n}")));
                }
                flags[s - 1] = true;
            }
        }
        if let Some(w) = h.width_m {
            if !(w.is_finite() && w > 0.0) {
                return Err(ScenarioError::invalid("highway.width_m", "must be positive"));
            }
        }

        let c = &config.control;
        if !(c.t_s.is_finite() && c.t_s > 0.0) {
            return Err(ScenarioError::invalid("control.T", "must be positive"));
        }
        if !(c.t_c_s.is_finite() && c.t_c_s > 0.0) {
            return Err(ScenarioError::invalid("control.T_c", "must be positive"));
        }
        let ratio = (c.t_c_s / c.t_s).round();
        if ratio < 1.0 || (ratio * c.t_s - c.t_c_s).abs() > 1e-9 * c.t_c_s {
            return Err(ScenarioError::invalid(
                "control.T_c",
                format!("must be an integer multiple of control.T ({} s), got {} s", c.t_s, c.t_c_s),
            ));
        }
        let steps_per_control = ratio as usize;
        if c.k == 0 {
            return Err(ScenarioError::invalid("control.K", "must be ≥ 1"));
        }
        if !c.k.is_multiple_of(steps_per_control) {
            return Err(ScenarioError::invalid(
                "control.K",
                format!("K·T must be a multiple of T_c (K must be divisible by {steps_per_control})"),
            ));
        }
        let eps_min = c.eps_min.expand(n, "control.eps_min")?;
        let eps_max = c.eps_max.expand(n, "control.eps_max")?;
        let eps_init = c.eps_init.expand(n, "control.eps_init")?;
        for i in 0..n {
            if !(eps_min[i] > 0.0 && eps_min[i] <= eps_max[i] && eps_max[i] < 1.0) {
                return Err(ScenarioError::invalid(
                    "control.eps_min",
                    format!(
                        "section {}: need 0 < eps_min ≤ eps_max < 1, got eps_min = {}, eps_max = {}",
                        i + 1,
                        eps_min[i],
                        eps_max[i]
                    ),
                ));
            }
            if !(eps_init[i] > 0.0 && eps_init[i] < 1.0) {
                return Err(ScenarioError::invalid("control.eps_init", "must lie in (0, 1)"));
            }
        }
        for (field, v) in [("control.lambda_d", c.lambda_d), ("control.lambda_r", c.lambda_r)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ScenarioError::invalid(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        for (field, v) in [
            ("control.w1", c.w1),
            ("control.w2", c.w2),
            ("control.w3", c.w3),
            ("control.w4", c.w4),
            ("control.w_flow", c.w_flow),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ScenarioError::invalid(field, format!("weights must be ≥ 0, got {v}")));
            }
        }
        if !(c.d_floor.is_finite() && c.d_floor > 0.0) {
            return Err(ScenarioError::invalid("control.d_floor", "must be > 0"));
        }
        let (lambda_d, lambda_r) = if c.capacity_drop { (c.lambda_d, c.lambda_r) } else { (0.0, 1.0) };
        let control = Control {
            t: c.t_s / 3600.0,
            t_c: c.t_c_s / 3600.0,
            k: c.k,
            k_c: c.k / steps_per_control,
            steps_per_control,
            eps_min,
            eps_max,
            eps_init,
            lambda_d,
            lambda_r,
            w1: c.w1,
            w2: c.w2,
            w3: c.w3,
            w4: c.w4,
            d_floor: c.d_floor,
            w_flow: c.w_flow,
            projection_includes_initial: c.projection_includes_initial,
        };

        let d = &config.demands;
        check_profile("demands.entry_a", &d.entry_a)?;
        check_profile("demands.entry_b", &d.entry_b)?;
        let entry_a = expand_profile(&d.entry_a, c.t_s, c.k);
        let entry_b = expand_profile(&d.entry_b, c.t_s, c.k);
        let mut ramp_a = vec![vec![0.0; c.k]; n];
        let mut ramp_b = vec![vec![0.0; c.k]; n];
        for (r, ramp) in d.ramps.iter().enumerate() {
            let field = format!("demands.ramps[{r}]");
            if ramp.section == 0 || ramp.section > n {
                return Err(ScenarioError::invalid(
                    format!("{field}.section"),
                    format!("section {} outside 1..={n}", ramp.section),
                ));
            }
            let i = ramp.section - 1;
            let (flags, target) = match ramp.direction {
                Direction::A => (&has_onramp_a, &mut ramp_a),
                Direction::B => (&has_onramp_b, &mut ramp_b),
            };
            if !flags[i] {
                return Err(ScenarioError::invalid(
                    format!("{field}.section"),
                    format!(
                        "section {} has no on-ramp in direction {} (add it to highway.onramps_{})",
                        ramp.section, ramp.direction, ramp.direction
                    ),
                ));
            }
            check_profile(&format!("{field}.profile"), &ramp.profile)?;
            let values = expand_profile(&ramp.profile, c.t_s, c.k);
            for (t, v) in target[i].iter_mut().zip(values) {
                *t += v;
            }
        }

        let rho0_a = config.initial.rho_a.expand(n, "initial.rho_a")?;
        let rho0_b = config.initial.rho_b.expand(n, "initial.rho_b")?;
        check_finite_nonneg("initial.rho_a", &rho0_a)?;
        check_finite_nonneg("initial.rho_b", &rho0_b)?;
        for i in 0..n {
            if rho0_a[i] > control.eps_init[i] * fd.rho_max {
                return Err(ScenarioError::invalid(
                    "initial.rho_a",
                    format!("section {} exceeds the jam density eps_init·rho_max", i + 1),
                ));
            }
            if rho0_b[i] > (1.0 - control.eps_init[i]) * fd.rho_max {
                return Err(ScenarioError::invalid(
                    "initial.rho_b",
                    format!("section {} exceeds the jam density (1 − eps_init)·rho_max", i + 1),
                ));
            }
        }

        Ok(Self {
            label: config.label.clone(),
            notes: config.notes.clone(),
            fd,
            highway: Highway {
                n,
                lengths,
                exit_rate_a,
                exit_rate_b,
                has_onramp_a,
                has_onramp_b,
                width_m: h.width_m,
            },
            demands: DemandSet {
                entry_a,
                entry_b,
                ramp_a,
                ramp_b,
            },
            control,
            rho0_a,
            rho0_b,
            config,
        })
    }

    pub fn from_toml_str(text: &str) -> SResult<Self> {
        let config: ScenarioConfig = toml::from_str(text)?;
        Self::from_config(config)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.highway.n
    }

    /// Same scenario with the capacity-drop parameters switched on or off.
    pub fn with_capacity_drop(&self, on: bool) -> Self {
        let mut config = self.config.clone();
        config.control.capacity_drop = on;
        Self::from_config(config).expect("toggling capacity drop keeps a valid scenario valid")
    }

    /// Same scenario with a modified config; re-validated.
    pub fn modified(&self, edit: impl FnOnce(&mut ScenarioConfig)) -> SResult<Self> {
        let mut config = self.config.clone();
        edit(&mut config);
        Self::from_config(config)
    }

    pub fn capacity_drop(&self) -> bool {
        self.config.control.capacity_drop
    }
}

/// Parses and validates a scenario from config text.
pub fn load_scenario_str(text: &str) -> SResult<Scenario> {
    Scenario::from_toml_str(text)
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario_file(path: impl AsRef<Path>) -> SResult<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scenario::from_toml_str(&text)
}

/// Serializes a scenario back to its config document.
pub fn emit(scenario: &Scenario) -> String {
    toml::to_string(&scenario.config).expect("scenario configs always serialize")
}

pub const BUILTIN_NAMES: [&str; 2] = ["uncongested", "congested"];

fn builtin_config(label: &str, entry_a: &[(f64, f64)], entry_b: &[(f64, f64)]) -> ScenarioConfig {
    let bp = |v: &[(f64, f64)]| v.iter().map(|&(t, q)| Breakpoint::new(t, q)).collect::<Vec<_>>();
    ScenarioConfig {
        label: label.to_string(),
        notes: "Demand trajectories are trapezoidal reconstructions calibrated to the target \
                congestion onset and dissolution times; they are not measured data."
            .to_string(),
        fd: FdConfig {
            v_f: 100.0,
            w_s: 12.0,
            q_cap: 12000.0,
        },
        highway: HighwayConfig {
            n: 6,
            lengths: PerSection::Uniform(0.5),
            exit_rate_a: PerSection::List(vec![0.0, 0.1, 0.0, 0.0, 0.0, 0.0]),
            exit_rate_b: PerSection::List(vec![0.0, 0.0, 0.0, 0.1, 0.0, 0.0]),
            onramps_a: vec![5],
            onramps_b: vec![3],
            width_m: None,
        },
        control: ControlConfig {
            t_s: 10.0,
            t_c_s: 60.0,
            k: 360,
            eps_min: PerSection::Uniform(0.16),
            eps_max: PerSection::Uniform(0.84),
            eps_init: half(),
            capacity_drop: true,
            lambda_d: default_lambda_d(),
            lambda_r: default_lambda_r(),
            w1: default_w1(),
            w2: default_w2(),
            w3: default_w3(),
            w4: default_w4(),
            d_floor: default_d_floor(),
            w_flow: default_w_flow(),
            projection_includes_initial: false,
        },
        demands: DemandsConfig {
            entry_a: bp(entry_a),
            entry_b: bp(entry_b),
            ramps: vec![
                RampDemand {
                    direction: Direction::A,
                    section: 5,
                    profile: bp(&[(0.0, 1400.0)]),
                },
                RampDemand {
                    direction: Direction::B,
                    section: 3,
                    profile: bp(&[(0.0, 950.0)]),
                },
            ],
        },
        initial: InitialConfig {
            rho_a: PerSection::List(vec![5.0, 5.0, 5.0, 5.0, 18.5, 29.4]),
            rho_b: PerSection::List(vec![14.4, 14.4, 14.0, 5.0, 5.0, 5.0]),
        },
    }
}

/// Bundled six-section scenarios (capacity drop on): the two peaks overlap
/// slightly in `uncongested` and move closer together in `congested`.
pub fn builtin_scenarios() -> Vec<Scenario> {
    BUILTIN_NAMES
        .iter()
        .map(|name| builtin(name).expect("builtin names resolve"))
        .collect()
}

pub fn builtin(name: &str) -> SResult<Scenario> {
    let config = match name {
        "uncongested" => builtin_config(
            name,
            &[(0.0, 500.0), (300.0, 800.0), (560.0, 5700.0), (1650.0, 5700.0), (1850.0, 1000.0), (3600.0, 800.0)],
            &[(0.0, 500.0), (1800.0, 800.0), (2220.0, 5850.0), (3100.0, 5850.0), (3250.0, 1000.0), (3600.0, 800.0)],
        ),
        "congested" => builtin_config(
            name,
            &[(0.0, 500.0), (600.0, 800.0), (1160.0, 5750.0), (2200.0, 5750.0), (2400.0, 1000.0), (3600.0, 800.0)],
            &[(0.0, 500.0), (1400.0, 800.0), (2050.0, 5750.0), (2900.0, 5750.0), (3050.0, 1000.0), (3600.0, 800.0)],
        ),
        other => return Err(ScenarioError::UnknownBuiltin(other.to_string())),
    };
    Ok(Scenario::from_config(config).expect("builtin scenarios are valid"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_closure() {
        let fd = FdParams::new(100.0, 12.0, 12000.0).unwrap();
        assert_eq!(fd.rho_cr, 120.0);
        assert_eq!(fd.rho_max, 1120.0);
    }

    #[test]
    fn profile_interpolation() {
        let pts = [Breakpoint::new(0.0, 0.0), Breakpoint::new(20.0, 100.0)];
        assert_eq!(expand_profile(&pts, 10.0, 4), vec![0.0, 50.0, 100.0, 100.0]);
        let late = [Breakpoint::new(15.0, 30.0)];
        assert_eq!(expand_profile(&late, 10.0, 3), vec![30.0, 30.0, 30.0]);
    }

    #[test]
    fn builtin_dimensions() {
        let s = builtin("uncongested").unwrap();
        assert_eq!(s.control.k_c, 60);
        assert_eq!(s.control.steps_per_control, 6);
        assert_eq!(s.demands.ramp_a[4][100], 1400.0);
        assert_eq!(s.demands.ramp_b[2][0], 950.0);
        assert!(s.demands.ramp_a[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn capacity_drop_toggle() {
        let s = builtin("congested").unwrap();
        assert_eq!((s.control.lambda_d, s.control.lambda_r), (0.4, 0.7));
        let off = s.with_capacity_drop(false);
        assert_eq!((off.control.lambda_d, off.control.lambda_r), (0.0, 1.0));
        assert_eq!(off.with_capacity_drop(true), s);
    }
}
