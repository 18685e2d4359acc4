//! Fixed-step simulation of the delayed system with concrete signals.
//!
//! `x` is advanced by classical RK4. The delayed input `B y(t - h1(t))` is
//! read from the stored `y` samples by linear interpolation, with `h1`
//! evaluated at every stage and the delayed argument capped at the last
//! known sample. Jumps and kinks of `y` are kept as knots so interpolation
//! never crosses them, and steps are split where the delayed argument meets
//! a jump. `y` is produced at every grid point from the
//! difference relation; when `h2` is shorter than one step the relation is
//! solved implicitly against the unknown new sample, which reduces to
//! `(I - D) y = C x + d` as `h2 → 0`. Before `t = 0` the history `phi` is
//! evaluated directly.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::certificate::{BoundCertificate, CertificateError};
use crate::linalg::{DenseMatrix, DenseVector, LinalgError, LuDecomposition};
use crate::model::SystemSpec;
use crate::stability::{is_schur_nonneg, StabilityError};

/// Samples beyond this magnitude abort the run.
pub const BLOWUP_LIMIT: f64 = 1e12;
/// Slack for the grid-point admissibility checks.
pub const SCENARIO_TOLERANCE: f64 = 1e-12;
/// Slack for [`verify_domination`].
pub const DOMINATION_SLACK: f64 = 1e-6;
/// Slack for [`comparison_check`].
pub const COMPARISON_SLACK: f64 = 1e-9;
pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_T_END: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("integration blew up at t = {time} (|sample| > {BLOWUP_LIMIT:e})")]
    UnstableStep { time: f64 },
    #[error("mismatched scenarios: {0}")]
    MismatchedScenarios(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Zero,
    Constant,
    AbsSin,
    AbsCos,
    ConstPlusAbsSin,
    ConstPlusAbsCos,
}

/// A nonnegative vector-valued signal.
///
/// Component `i` evaluates to `offset + amplitude[i] · |sin(frequency[i] t)|`
/// for the `const_plus_abs_sin` kind, and analogously for the others
/// (`constant` is `amplitude[i]`, `zero` is 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub kind: SignalKind,
    #[serde(default)]
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub frequency: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

impl SignalSpec {
    pub fn zero() -> Self {
        Self {
            kind: SignalKind::Zero,
            amplitude: Vec::new(),
            frequency: Vec::new(),
            offset: 0.0,
        }
    }

    pub fn constant(values: &[f64]) -> Self {
        Self {
            kind: SignalKind::Constant,
            amplitude: values.to_vec(),
            frequency: Vec::new(),
            offset: 0.0,
        }
    }

    pub fn periodic(kind: SignalKind, amplitude: &[f64], frequency: &[f64], offset: f64) -> Self {
        Self {
            kind,
            amplitude: amplitude.to_vec(),
            frequency: frequency.to_vec(),
            offset,
        }
    }

    /// Scalar `offset + amplitude · |sin(frequency t)|`.
    pub fn scalar_abs_sin(offset: f64, amplitude: f64, frequency: f64) -> Self {
        Self::periodic(
            SignalKind::ConstPlusAbsSin,
            &[amplitude],
            &[frequency],
            offset,
        )
    }

    /// Scalar `offset + amplitude · |cos(frequency t)|`.
    pub fn scalar_abs_cos(offset: f64, amplitude: f64, frequency: f64) -> Self {
        Self::periodic(
            SignalKind::ConstPlusAbsCos,
            &[amplitude],
            &[frequency],
            offset,
        )
    }

    fn check(&self, name: &str, dim: usize) -> Result<(), SimulationError> {
        let invalid = |msg: String| Err(SimulationError::InvalidScenario(format!("{name}: {msg}")));
        if self.kind == SignalKind::Zero {
            if !self.amplitude.is_empty() && self.amplitude.len() != dim {
                return invalid(format!("expected {dim} components"));
            }
            return Ok(());
        }
        if self.amplitude.len() != dim {
            return invalid(format!(
                "amplitude has {} entries, expected {dim}",
                self.amplitude.len()
            ));
        }
        let periodic = !matches!(self.kind, SignalKind::Constant);
        if periodic && self.frequency.len() != dim {
            return invalid(format!(
                "frequency has {} entries, expected {dim}",
                self.frequency.len()
            ));
        }
        if self
            .amplitude
            .iter()
            .chain(&self.frequency)
            .chain(std::iter::once(&self.offset))
            .any(|v| !v.is_finite())
        {
            return invalid("non-finite parameter".into());
        }
        if self.amplitude.iter().any(|&a| a < 0.0) || self.offset < 0.0 {
            return invalid("amplitude and offset must be nonnegative".into());
        }
        Ok(())
    }

    /// Writes the value at `t` into `out`, whose length fixes the dimension.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let wave = |i: usize, f: fn(f64) -> f64| self.amplitude[i] * f(self.frequency[i] * t).abs();
        for (i, o) in out.iter_mut().enumerate() {
            *o = match self.kind {
                SignalKind::Zero => 0.0,
                SignalKind::Constant => self.amplitude[i],
                SignalKind::AbsSin => wave(i, f64::sin),
                SignalKind::AbsCos => wave(i, f64::cos),
                SignalKind::ConstPlusAbsSin => self.offset + wave(i, f64::sin),
                SignalKind::ConstPlusAbsCos => self.offset + wave(i, f64::cos),
            };
        }
    }

    pub fn eval(&self, t: f64, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.eval_into(t, &mut out);
        out
    }

    fn eval_scalar(&self, t: f64) -> f64 {
        let mut out = [0.0];
        self.eval_into(t, &mut out);
        out[0]
    }

    /// Appends the times in `(lo, hi)` where some component has a kink
    /// (a zero of the rectified sine or cosine).
    fn kinks_in(&self, lo: f64, hi: f64, out: &mut Vec<f64>) {
        let phase = match self.kind {
            SignalKind::AbsSin | SignalKind::ConstPlusAbsSin => 0.0,
            SignalKind::AbsCos | SignalKind::ConstPlusAbsCos => 0.5,
            _ => return,
        };
        for (&amp, &f) in self.amplitude.iter().zip(&self.frequency) {
            if amp == 0.0 || f == 0.0 {
                continue;
            }
            let period = std::f64::consts::PI / f.abs();
            let mut j = (lo / period - phase).floor() + 1.0;
            loop {
                let c = (j + phase) * period;
                if c >= hi {
                    break;
                }
                if c > lo {
                    out.push(c);
                }
                j += 1.0;
            }
        }
    }
}

/// History of `y` on `[-h_M, 0)`: a constant vector or a signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum History {
    Constant(DenseVector),
    Signal(SignalSpec),
}

impl History {
    pub fn eval_into(&self, s: f64, out: &mut [f64]) {
        match self {
            History::Constant(v) => out.copy_from_slice(v.as_slice()),
            History::Signal(sig) => sig.eval_into(s, out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationScenario {
    pub spec: SystemSpec,
    pub omega: SignalSpec,
    pub d: SignalSpec,
    pub h1: SignalSpec,
    pub h2: SignalSpec,
    pub psi: DenseVector,
    pub phi: History,
    pub t_end: f64,
    pub step: f64,
}

impl SimulationScenario {
    /// Benchmark-style scenario: `omega_i = a · omega_bar_i · |sin(f_i t)|`
    /// with `f = 0.2, 0.1, 0.3, …`, `d_j = b · d_bar_j · |cos(g_j t)|` with
    /// `g = 0.1, 0.2, …`, delays `h_M/2 · (1 + |sin t|)` and
    /// `h_M/2 · (1 + |cos t|)`, and initial data at their bounds.
    pub fn preset(spec: &SystemSpec, a: f64, b: f64, step: f64, t_end: f64) -> Self {
        const OMEGA_FREQ: [f64; 3] = [0.2, 0.1, 0.3];
        const D_FREQ: [f64; 2] = [0.1, 0.2];
        let n = spec.n();
        let m = spec.m();
        let omega_amp: Vec<f64> = spec.omega_bar.iter().map(|w| a * w).collect();
        let omega_freq: Vec<f64> = (0..n).map(|i| OMEGA_FREQ[i % 3]).collect();
        let d_amp: Vec<f64> = spec.d_bar.iter().map(|w| b * w).collect();
        let d_freq: Vec<f64> = (0..m).map(|j| D_FREQ[j % 2]).collect();
        let half = 0.5 * spec.h_max;
        Self {
            spec: spec.clone(),
            omega: SignalSpec::periodic(SignalKind::AbsSin, &omega_amp, &omega_freq, 0.0),
            d: SignalSpec::periodic(SignalKind::AbsCos, &d_amp, &d_freq, 0.0),
            h1: SignalSpec::scalar_abs_sin(half, half, 1.0),
            h2: SignalSpec::scalar_abs_cos(half, half, 1.0),
            psi: spec.psi_bar.clone(),
            phi: History::Constant(spec.phi_bar.clone()),
            t_end,
            step,
        }
    }

    /// Constant maximal disturbances, constant delays `h_M`, and the given
    /// initial data.
    pub fn constant_inputs(
        spec: &SystemSpec,
        psi: DenseVector,
        phi: DenseVector,
        step: f64,
        t_end: f64,
    ) -> Self {
        Self {
            spec: spec.clone(),
            omega: SignalSpec::constant(spec.omega_bar.as_slice()),
            d: SignalSpec::constant(spec.d_bar.as_slice()),
            h1: SignalSpec::constant(&[spec.h_max]),
            h2: SignalSpec::constant(&[spec.h_max]),
            psi,
            phi: History::Constant(phi),
            t_end,
            step,
        }
    }

    /// Number of grid points `t_k = k·step` in `[0, t_end]`.
    pub fn grid_len(&self) -> usize {
        (self.t_end / self.step + 1e-9).floor() as usize + 1
    }

    /// Checks every admissibility condition at the grid points.
    pub fn validate(&self) -> Result<(), SimulationError> {
        let spec = &self.spec;
        let (n, m) = (spec.n(), spec.m());
        let invalid = |msg: String| Err(SimulationError::InvalidScenario(msg));
        let report = crate::model::validate_structure(spec);
        if !report.is_valid() {
            return invalid(report.to_string().trim_end().to_string());
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return invalid(format!("step must be positive, got {}", self.step));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return invalid(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        if spec.h_max > 0.0 && self.step > spec.h_max {
            return invalid(format!(
                "step {} exceeds the delay bound {}",
                self.step, spec.h_max
            ));
        }
        self.omega.check("omega", n)?;
        self.d.check("d", m)?;
        self.h1.check("h1", 1)?;
        self.h2.check("h2", 1)?;
        if let History::Signal(sig) = &self.phi {
            sig.check("phi", m)?;
        }
        if self.psi.dim() != n {
            return invalid(format!("psi has {} entries, expected {n}", self.psi.dim()));
        }
        check_between("psi", self.psi.as_slice(), spec.psi_bar.as_slice(), None)?;

        let mut buf_n = vec![0.0; n];
        let mut buf_m = vec![0.0; m];
        for k in 0..self.grid_len() {
            let t = k as f64 * self.step;
            self.omega.eval_into(t, &mut buf_n);
            check_between("omega", &buf_n, spec.omega_bar.as_slice(), Some(t))?;
            self.d.eval_into(t, &mut buf_m);
            check_between("d", &buf_m, spec.d_bar.as_slice(), Some(t))?;
            for (name, h) in [("h1", &self.h1), ("h2", &self.h2)] {
                let v = h.eval_scalar(t);
                if v < -SCENARIO_TOLERANCE || v > spec.h_max + SCENARIO_TOLERANCE {
                    return invalid(format!("{name}({t}) = {v} outside [0, {}]", spec.h_max));
                }
            }
        }
        if let History::Constant(v) = &self.phi {
            if v.dim() != m {
                return invalid(format!("phi has {} entries, expected {m}", v.dim()));
            }
        }
        let history_points = (spec.h_max / self.step + 1e-9).floor() as usize;
        for j in 1..=history_points {
            let s = -(j as f64) * self.step;
            self.phi.eval_into(s, &mut buf_m);
            check_between("phi", &buf_m, spec.phi_bar.as_slice(), Some(s))?;
        }
        Ok(())
    }
}

fn check_between(
    name: &str,
    values: &[f64],
    upper: &[f64],
    t: Option<f64>,
) -> Result<(), SimulationError> {
    for (i, (&v, &u)) in values.iter().zip(upper).enumerate() {
        if v < -SCENARIO_TOLERANCE || v > u + SCENARIO_TOLERANCE {
            let at = t.map(|t| format!(" at t = {t}")).unwrap_or_default();
            return Err(SimulationError::InvalidScenario(format!(
                "{name}[{i}] = {v}{at} outside [0, {u}]"
            )));
        }
    }
    Ok(())
}

/// Samples of `x` and `y` on the uniform grid `t_k = k·step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub step: f64,
    pub n: usize,
    pub m: usize,
    x_samples: Vec<f64>,
    y_samples: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x_samples
            .len()
            .checked_div(self.n)
            .unwrap_or_else(|| self.y_samples.len() / self.m.max(1))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|k| self.time(k))
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.x_samples[k * self.n..(k + 1) * self.n]
    }

    pub fn y(&self, k: usize) -> &[f64] {
        &self.y_samples[k * self.m..(k + 1) * self.m]
    }

    /// Index of the grid point closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.step).round() as usize).min(self.len().saturating_sub(1))
    }

    /// Every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            x_samples: self.x_samples.iter().map(|v| v * factor).collect(),
            y_samples: self.y_samples.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Smallest sample over all times and components.
    pub fn min_sample(&self) -> f64 {
        self.x_samples
            .iter()
            .chain(&self.y_samples)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// A point where `y` jumps or has a kink, with the one-sided limits. Between
/// knots `y` is smooth, so interpolation never reaches across one.
struct Knot {
    at: f64,
    left: Vec<f64>,
    right: Vec<f64>,
    generation: u32,
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Left,
    Right,
}

/// Stored `y` samples plus the knots between them. `y` is right-continuous
/// and linear on each piece between grid points and knots.
struct YHistory<'a> {
    phi: &'a History,
    step: f64,
    m: usize,
    samples: Vec<f64>,
    knots: Vec<Knot>,
}

impl YHistory<'_> {
    fn known(&self) -> usize {
        self.samples.len() / self.m.max(1)
    }

    fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k * self.m..(k + 1) * self.m]
    }

    /// Knots with `lo < at <= hi`, in time order.
    fn knots_in(&self, lo: f64, hi: f64) -> &[Knot] {
        let start = self.knots.partition_point(|j| j.at <= lo);
        let end = self.knots.partition_point(|j| j.at <= hi);
        &self.knots[start..end.max(start)]
    }

    /// `s`, moved onto a jump that lies within round-off of it.
    fn snap(&self, s: f64) -> f64 {
        let tol = SNAP_TOLERANCE * self.step;
        self.knots_in(s - tol, s + tol)
            .iter()
            .find(|j| j.left != j.right)
            .map_or(s, |j| j.at)
    }

    fn record(&mut self, knot: Knot) {
        let pos = self.knots.partition_point(|j| j.at <= knot.at);
        let tol = SNAP_TOLERANCE * self.step;
        let duplicate = self.knots[pos.saturating_sub(1)..(pos + 1).min(self.knots.len())]
            .iter()
            .any(|j| (j.at - knot.at).abs() <= tol && j.left == j.right && knot.left == knot.right);
        if !duplicate {
            self.knots.insert(pos, knot);
        }
    }

    /// `y(s)` for `s` not beyond the last stored sample; `side` picks the
    /// one-sided limit when `s` sits on a jump.
    fn eval_into(&self, s: f64, side: Side, out: &mut [f64]) {
        if s < 0.0 || (s == 0.0 && side == Side::Left) {
            self.phi.eval_into(s, out);
            return;
        }
        let idx = self.knots.partition_point(|j| j.at < s);
        if let Some(j) = self.knots.get(idx).filter(|j| j.at == s) {
            out.copy_from_slice(if side == Side::Left {
                &j.left
            } else {
                &j.right
            });
            return;
        }
        let last = self.known() - 1;
        if s >= last as f64 * self.step {
            out.copy_from_slice(self.sample(last));
            return;
        }
        let k = ((s / self.step).floor() as usize).min(last - 1);
        let t0 = k as f64 * self.step;
        let t1 = (k + 1) as f64 * self.step;
        let mut from = (t0, self.sample(k));
        // A knot within round-off of `t1` belongs to this cell: the sample
        // stored at `t1` is its right limit.
        for j in self.knots_in(t0, t1 + SNAP_TOLERANCE * self.step) {
            if s < j.at {
                lerp(from, (j.at, &j.left), s, out);
                return;
            }
            from = (j.at, &j.right);
        }
        lerp(from, (t1, self.sample(k + 1)), s, out);
    }
}

fn lerp(a: (f64, &[f64]), b: (f64, &[f64]), s: f64, out: &mut [f64]) {
    let span = b.0 - a.0;
    if !(span > 0.0) {
        out.copy_from_slice(a.1);
        return;
    }
    let w = ((s - a.0) / span).clamp(0.0, 1.0);
    for (o, (u, v)) in out.iter_mut().zip(a.1.iter().zip(b.1)) {
        *o = (1.0 - w) * u + w * v;
    }
}

/// One RK4 piece of a step: state and slope at both ends.
struct Piece {
    a: f64,
    b: f64,
    xa: Vec<f64>,
    fa: Vec<f64>,
    xb: Vec<f64>,
    fb: Vec<f64>,
}

impl Piece {
    /// Cubic Hermite interpolant of `x` at `t` in `[a, b]`.
    fn x_at(&self, t: f64) -> Vec<f64> {
        let dt = self.b - self.a;
        let u = ((t - self.a) / dt).clamp(0.0, 1.0);
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        (0..self.xa.len())
            .map(|i| {
                h00 * self.xa[i] + h10 * dt * self.fa[i] + h01 * self.xb[i] + h11 * dt * self.fb[i]
            })
            .collect()
    }
}

/// Time in `(lo, hi]` where the continuous `f` reaches `level`, if `f(lo)`
/// and `f(hi)` straddle it.
fn crossing(f: &impl Fn(f64) -> f64, level: f64, lo: f64, hi: f64) -> Option<f64> {
    let (f0, f1) = (f(lo), f(hi));
    let rising = f0 < level && level <= f1;
    let falling = f1 < level && level <= f0;
    if !(rising || falling) {
        return None;
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if (f(mid) < level) == rising {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(b)
}

/// Jumps smaller than this (relative to the sample scale) are not tracked.
const JUMP_CUTOFF: f64 = 1e-13;
/// Delayed arguments this close to a jump (relative to the step) are read on
/// the jump itself.
const SNAP_TOLERANCE: f64 = 1e-9;
/// Knots are propagated until `‖D^g‖∞` falls below this.
const KNOT_DECAY: f64 = 1e-12;
const MAX_GENERATIONS: u32 = 200;

/// Number of times a knot is pushed through the difference relation before
/// its effect is negligible.
fn knot_generations(d: &DenseMatrix) -> Result<u32, SimulationError> {
    let norm = |m: &DenseMatrix| {
        (0..m.rows())
            .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut power = d.clone();
    for g in 1..=MAX_GENERATIONS {
        if norm(&power) < KNOT_DECAY {
            return Ok(g);
        }
        power = power.mul_mat(d)?;
    }
    Ok(MAX_GENERATIONS)
}

/// Integrates the scenario on `[0, t_end]`.
pub fn simulate(scenario: &SimulationScenario) -> Result<Trajectory, SimulationError> {
    scenario.validate()?;
    let spec = &scenario.spec;
    if !is_schur_nonneg(&spec.d)? {
        return Err(SimulationError::InvalidScenario("D is not Schur".into()));
    }
    let (n, m) = (spec.n(), spec.m());
    let h = scenario.step;
    let steps = scenario.grid_len();
    let i_minus_d = DenseMatrix::identity(m).sub(&spec.d)?;
    let algebraic = LuDecomposition::new(&i_minus_d)?;
    let generations = knot_generations(&spec.d)?;

    let mut xs = Vec::with_capacity(steps * n);
    let mut hist = YHistory {
        phi: &scenario.phi,
        step: h,
        m,
        samples: Vec::with_capacity(steps * m),
        knots: Vec::new(),
    };

    // `C x + d(t) + D y_delayed`.
    let relation = |x: &[f64], t: f64, y_delayed: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; m];
        let mut tmp = vec![0.0; m];
        spec.c.mul_slice_into(x, &mut out);
        scenario.d.eval_into(t, &mut tmp);
        for j in 0..m {
            out[j] += tmp[j];
        }
        spec.d.mul_slice_into(y_delayed, &mut tmp);
        for j in 0..m {
            out[j] += tmp[j];
        }
        out
    };
    let g = |s: f64| s - scenario.h2.eval_scalar(s);

    // y at t_k from the difference relation, given x_k.
    let new_y = |hist: &YHistory, x: &[f64], t: f64| -> Result<Vec<f64>, SimulationError> {
        let s = hist.snap(g(t));
        let known = hist.known();
        let last_known = known as f64 - 1.0;
        let mut y_del = vec![0.0; m];
        if s < 0.0 || (known > 0 && s <= last_known * h) {
            hist.eval_into(s, Side::Right, &mut y_del);
            return Ok(relation(x, t, &y_del));
        }
        // Delayed argument inside the current step: y(s) ≈ (1-w) y_prev + w y_new.
        let mut rhs = relation(x, t, &y_del);
        let w = if known == 0 {
            1.0
        } else {
            ((s - last_known * h) / h).clamp(0.0, 1.0)
        };
        if w >= 1.0 {
            return Ok(algebraic.solve(&DenseVector::new(rhs)?)?.into_vec());
        }
        let mut dy = vec![0.0; m];
        spec.d.mul_slice_into(hist.sample(known - 1), &mut dy);
        for j in 0..m {
            rhs[j] += (1.0 - w) * dy[j];
        }
        let lhs = DenseMatrix::identity(m).sub(&spec.d.scale(w))?;
        Ok(lhs.solve(&DenseVector::new(rhs)?)?.into_vec())
    };

    let mut x = scenario.psi.as_slice().to_vec();
    let y0 = new_y(&hist, &x, 0.0)?;
    let mut phi0 = vec![0.0; m];
    scenario.phi.eval_into(0.0, &mut phi0);
    let scale0 = y0.iter().chain(&phi0).fold(1.0f64, |a, v| a.max(v.abs()));
    if y0
        .iter()
        .zip(&phi0)
        .any(|(a, b)| (a - b).abs() > JUMP_CUTOFF * scale0)
    {
        hist.knots.push(Knot {
            at: 0.0,
            left: phi0,
            right: y0.clone(),
            generation: 0,
        });
    }
    xs.extend_from_slice(&x);
    hist.samples.extend_from_slice(&y0);

    let mut y_del = vec![0.0; m];
    let mut by = vec![0.0; n];
    let mut w_t = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut cuts: Vec<(f64, f64)> = Vec::new();
    let mut pieces: Vec<Piece> = Vec::new();
    let mut source_times: Vec<f64> = Vec::new();

    for k in 0..steps.saturating_sub(1) {
        let t = k as f64 * h;
        let t_next = (k + 1) as f64 * h;
        // Delayed argument of the x equation.
        let e = |tau: f64| tau - scenario.h1.eval_scalar(tau);

        // `s` is the delayed argument, passed explicitly so that piece ends
        // land exactly on the jump they were cut at.
        let mut rhs = |tau: f64, s: f64, side: Side, state: &[f64], out: &mut [f64]| {
            hist.eval_into(s.min(t), side, &mut y_del);
            spec.b.mul_slice_into(&y_del, &mut by);
            scenario.omega.eval_into(tau, &mut w_t);
            spec.a.mul_slice_into(state, out);
            for i in 0..n {
                out[i] += by[i] + w_t[i];
            }
        };

        // Split the step where the delayed argument crosses a known jump.
        let snap_tol = SNAP_TOLERANCE * h;
        let (e0, e1) = (hist.snap(e(t)), hist.snap(e(t_next)));
        cuts.clear();
        cuts.push((t, e0));
        for j in hist.knots_in(e0.min(e1), e0.max(e1).min(t)) {
            if j.left == j.right || j.at == e0 || j.at == e1 {
                continue;
            }
            if let Some(c) = crossing(&e, j.at, t, t_next) {
                if c - t > snap_tol && t_next - c > snap_tol {
                    cuts.push((c, j.at));
                }
            }
        }
        cuts[1..].sort_by(|a, b| a.0.total_cmp(&b.0));
        cuts.push((t_next, e1));

        pieces.clear();
        for piece in cuts.windows(2) {
            let ((a, sa), (b, sb)) = (piece[0], piece[1]);
            let dt = b - a;
            let mid = a + 0.5 * dt;
            let xa = x.clone();
            rhs(a, sa, Side::Right, &x, &mut k1);
            for i in 0..n {
                stage[i] = x[i] + 0.5 * dt * k1[i];
            }
            rhs(mid, e(mid), Side::Right, &stage, &mut k2);
            for i in 0..n {
                stage[i] = x[i] + 0.5 * dt * k2[i];
            }
            rhs(mid, e(mid), Side::Right, &stage, &mut k3);
            for i in 0..n {
                stage[i] = x[i] + dt * k3[i];
            }
            rhs(b, sb, Side::Left, &stage, &mut k4);
            for i in 0..n {
                x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            let mut fb = vec![0.0; n];
            rhs(b, sb, Side::Left, &x, &mut fb);
            pieces.push(Piece {
                a,
                b,
                xa,
                fa: k1.clone(),
                xb: x.clone(),
                fb,
            });
        }
        let x_at = |s: f64| {
            pieces
                .iter()
                .find(|p| s <= p.b)
                .unwrap_or_else(|| pieces.last().expect("at least one piece"))
                .x_at(s)
        };

        let mut spawned = Vec::new();

        // Kinks of y where x' jumps, and where d or h2 have kinks.
        source_times.clear();
        source_times.extend(cuts[1..cuts.len() - 1].iter().map(|c| c.0));
        scenario.d.kinks_in(t, t_next, &mut source_times);
        scenario.h2.kinks_in(t, t_next, &mut source_times);
        for &c in &source_times {
            let s = hist.snap(g(c));
            if s > t {
                continue;
            }
            hist.eval_into(s, Side::Right, &mut y_del);
            let value = relation(&x_at(c), c, &y_del);
            spawned.push(Knot {
                at: c,
                left: value.clone(),
                right: value,
                generation: 0,
            });
        }

        // Knots propagated through the difference relation.
        let (g0, g1) = (g(t), g(t_next));
        let (lo, hi) = (g0.min(g1), g0.max(g1).min(t));
        for j in hist.knots_in(lo, hi) {
            if j.generation >= generations {
                continue;
            }
            let rising = g0 < j.at && j.at <= g1;
            let Some(mut b) = crossing(&g, j.at, t, t_next) else {
                continue;
            };
            // Crossings on a grid point up to round-off belong to it, so the
            // knot agrees with the right-continuous sample stored there.
            if t_next - b <= snap_tol {
                b = t_next;
            } else if b - t <= snap_tol {
                b = t;
            }
            let xb = x_at(b);
            let (before, after) = if rising {
                (&j.left, &j.right)
            } else {
                (&j.right, &j.left)
            };
            let mut left = relation(&xb, b, before);
            let mut right = relation(&xb, b, after);
            let scale = left
                .iter()
                .chain(&right)
                .fold(1.0f64, |a, v| a.max(v.abs()));
            if left
                .iter()
                .zip(&right)
                .all(|(u, v)| (u - v).abs() <= JUMP_CUTOFF * scale)
            {
                left.clone_from(&right);
            }
            if left == right {
                right.clone_from(&left);
            }
            spawned.push(Knot {
                at: b,
                left,
                right,
                generation: j.generation + 1,
            });
        }

        let y = new_y(&hist, &x, t_next)?;
        if x.iter().chain(&y).any(|v| !(v.abs() <= BLOWUP_LIMIT)) {
            return Err(SimulationError::UnstableStep { time: t_next });
        }
        xs.extend_from_slice(&x);
        hist.samples.extend_from_slice(&y);
        for knot in spawned {
            hist.record(knot);
        }
    }

    Ok(Trajectory {
        step: h,
        n,
        m,
        x_samples: xs,
        y_samples: hist.samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub time: f64,
    /// `"x_1"`, `"y_2"`, … (1-based).
    pub component: ComponentId,
    pub excess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentId {
    X(usize),
    Y(usize),
}

impl std::fmt::Display for ComponentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ComponentId::X(i) => write!(f, "x_{}", i + 1),
            ComponentId::Y(j) => write!(f, "y_{}", j + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    /// Per component, `max_t (x_i(t) - bound_i(t))`.
    pub x_margin: Vec<f64>,
    pub y_margin: Vec<f64>,
    pub first_violation: Option<Violation>,
    pub slack: f64,
}

impl DominationReport {
    pub fn passes(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn max_margin(&self) -> f64 {
        self.x_margin
            .iter()
            .chain(&self.y_margin)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Compares every sample against the staircase bound.
pub fn verify_domination(traj: &Trajectory, cert: &BoundCertificate) -> DominationReport {
    let mut x_margin = vec![f64::NEG_INFINITY; traj.n];
    let mut y_margin = vec![f64::NEG_INFINITY; traj.m];
    let mut first_violation = None;
    for k in 0..traj.len() {
        let t = traj.time(k);
        let (xb, yb) = cert
            .staircase(t)
            .expect("grid times are nonnegative and finite");
        let pairs = traj
            .x(k)
            .iter()
            .zip(xb.iter())
            .enumerate()
            .map(|(i, (v, b))| (ComponentId::X(i), v - b))
            .chain(
                traj.y(k)
                    .iter()
                    .zip(yb.iter())
                    .enumerate()
                    .map(|(j, (v, b))| (ComponentId::Y(j), v - b)),
            );
        for (id, excess) in pairs {
            let slot = match id {
                ComponentId::X(i) => &mut x_margin[i],
                ComponentId::Y(j) => &mut y_margin[j],
            };
            *slot = slot.max(excess);
            if excess > DOMINATION_SLACK && first_violation.is_none() {
                first_violation = Some(Violation {
                    time: t,
                    component: id,
                    excess,
                });
            }
        }
    }
    DominationReport {
        x_margin,
        y_margin,
        first_violation,
        slack: DOMINATION_SLACK,
    }
}

/// Simulates two scenarios that differ only in their initial data and
/// checks that the ordering of the data carries over to the trajectories.
pub fn comparison_check(
    lo: &SimulationScenario,
    hi: &SimulationScenario,
) -> Result<bool, SimulationError> {
    let mismatch = |msg: &str| Err(SimulationError::MismatchedScenarios(msg.to_string()));
    if lo.spec != hi.spec {
        return mismatch("systems differ");
    }
    if lo.omega != hi.omega || lo.d != hi.d {
        return mismatch("disturbances differ");
    }
    if lo.h1 != hi.h1 || lo.h2 != hi.h2 {
        return mismatch("delays differ");
    }
    if lo.step != hi.step || lo.t_end != hi.t_end {
        return mismatch("time grids differ");
    }
    if lo.psi.dim() != hi.psi.dim() || lo.psi.iter().zip(hi.psi.iter()).any(|(a, b)| a > b) {
        return mismatch("psi_lo is not below psi_hi");
    }
    let m = lo.spec.m();
    let (mut a, mut b) = (vec![0.0; m], vec![0.0; m]);
    let history_points = (lo.spec.h_max / lo.step + 1e-9).floor() as usize;
    for j in 1..=history_points {
        let s = -(j as f64) * lo.step;
        lo.phi.eval_into(s, &mut a);
        hi.phi.eval_into(s, &mut b);
        if a.iter().zip(&b).any(|(u, v)| u > v) {
            return mismatch("phi_lo is not below phi_hi");
        }
    }

    let (tl, th) = (simulate(lo)?, simulate(hi)?);
    let ordered = (0..tl.len()).all(|k| {
        let below = |u: &[f64], v: &[f64]| u.iter().zip(v).all(|(a, b)| *a <= b + COMPARISON_SLACK);
        below(tl.x(k), th.x(k)) && below(tl.y(k), th.y(k))
    });
    Ok(ordered)
}

/// Formats `v` with nine significant digits, shortest form.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // Rounding can bump the magnitude (e.g. 9.99999999995 -> 10.00000000).
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    } else {
        let s = format!("{v:.8e}");
        let (mantissa, exponent) = s.split_once('e').expect("exponent");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exponent}")
    }
}

fn write_rows<W: Write>(
    out: W,
    header: Vec<String>,
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), std::io::Error> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(&header)?;
    for row in rows {
        writer.write_record(row.into_iter().map(format_sig9))?;
    }
    writer.flush()
}

fn labels(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}_{i}"))
}

/// Writes `t,x_1..x_n,y_1..y_m` and, with a certificate, the bound columns
/// `xb_1..xb_n,yb_1..yb_m`.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    traj: &Trajectory,
    cert: Option<&BoundCertificate>,
) -> Result<(), std::io::Error> {
    let mut header = vec!["t".to_string()];
    header.extend(labels("x", traj.n));
    header.extend(labels("y", traj.m));
    if cert.is_some() {
        header.extend(labels("xb", traj.n));
        header.extend(labels("yb", traj.m));
    }
    let rows = (0..traj.len()).map(|k| {
        let t = traj.time(k);
        let mut row = Vec::with_capacity(1 + 2 * (traj.n + traj.m));
        row.push(t);
        row.extend_from_slice(traj.x(k));
        row.extend_from_slice(traj.y(k));
        if let Some(cert) = cert {
            let (xb, yb) = cert.staircase(t).expect("nonnegative grid time");
            row.extend(xb.iter());
            row.extend(yb.iter());
        }
        row
    });
    write_rows(out, header, rows)
}

/// Writes the staircase bound sampled at `t_k = k·step` on `[0, t_end]`.
pub fn write_staircase_csv<W: Write>(
    out: W,
    cert: &BoundCertificate,
    step: f64,
    t_end: f64,
) -> Result<(), std::io::Error> {
    let (n, m) = (cert.eta.dim(), cert.varsigma.dim());
    let mut header = vec!["t".to_string()];
    header.extend(labels("xb", n));
    header.extend(labels("yb", m));
    let count = (t_end / step + 1e-9).floor() as usize + 1;
    let rows = (0..count).map(|k| {
        let t = k as f64 * step;
        let (xb, yb) = cert.staircase(t).expect("nonnegative grid time");
        let mut row = vec![t];
        row.extend(xb.iter());
        row.extend(yb.iter());
        row
    });
    write_rows(out, header, rows)
}
