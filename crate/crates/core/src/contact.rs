//! Hamilton–Jacobi hypersurfaces `E = {G = 0}` in the contact elements of `U = M × fiber`
//! and their characteristic strips.
//!
//! A strip carries base coordinates `x`, the fiber coordinate `s` (the action),
//! momenta `p` over the base axes and the fiber momentum `p_s`. Conventions:
//! the momentum is the gradient of the action, `p = p_s ∂S`, so a solution
//! hypersurface `s = S(x)` has contact elements annihilated by `p·dx − p_s ds`.
//! The characteristic equations on `{G = 0}` read
//!
//! ```text
//! ẋ = ∂G/∂p,   ṗ = −∂G/∂x,   ṡ = −∂G/∂p_s = ⟨p, ẋ⟩ / p_s,   ṗ_s = 0.
//! ```
//!
//! `G` never depends on `s`, which is the invariance under the structure group.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::integrate::{self, Flow, IntegratorConfig};
use crate::manifold::{central_gradient, dot, norm, Chart};

/// Partial derivatives of a symbol at one contact element.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGradient {
    pub dx: Vec<f64>,
    pub dp: Vec<f64>,
    pub dps: f64,
}

/// A momentum-homogeneous function `G(x; p, p_s)` on the slit cotangent space of `U`.
pub trait Symbol: Send + Sync {
    /// Number of base (M) axes.
    fn base_dim(&self) -> usize;

    fn value(&self, x: &[f64], p: &[f64], p_s: f64) -> f64;

    /// Defaults to central differences.
    fn gradient(&self, x: &[f64], p: &[f64], p_s: f64) -> SymbolGradient {
        let dx = central_gradient(|y| self.value(y, p, p_s), x, None);
        let dp = central_gradient(|q| self.value(x, q, p_s), p, None);
        let h = crate::manifold::default_step(p_s);
        let dps = (self.value(x, p, p_s + h) - self.value(x, p, p_s - h)) / (2.0 * h);
        SymbolGradient { dx, dp, dps }
    }
}

/// Symbol given by an expression over `[x axes.., p axes.., p_s]`.
#[derive(Debug, Clone)]
pub struct ExprSymbol {
    dim: usize,
    expr: Expr,
    grad: Vec<Expr>,
}

impl ExprSymbol {
    /// Variable layout: base axes, then `p_<axis>` for each, then `p_s`.
    pub fn variable_names(axes: &[String]) -> Vec<String> {
        let mut v: Vec<String> = axes.to_vec();
        v.extend(axes.iter().map(|a| format!("p_{a}")));
        v.push("p_s".to_string());
        v
    }

    pub fn new(dim: usize, expr: Expr) -> Result<ExprSymbol> {
        if let Some(v) = expr.max_var() {
            if v > 2 * dim {
                return Err(Error::DimensionMismatch {
                    expected: 2 * dim + 1,
                    got: v + 1,
                });
            }
        }
        let grad = (0..=2 * dim).map(|i| expr.diff(i)).collect();
        Ok(ExprSymbol { dim, expr, grad })
    }

    pub fn parse(axes: &[String], src: &str, consts: &std::collections::BTreeMap<String, f64>) -> Result<ExprSymbol> {
        let vars = Self::variable_names(axes);
        let expr = Expr::parse(src, &vars, consts)?;
        Self::new(axes.len(), expr)
    }

    fn pack(&self, x: &[f64], p: &[f64], p_s: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dim + 1);
        v.extend_from_slice(x);
        v.extend_from_slice(p);
        v.push(p_s);
        v
    }
}

impl Symbol for ExprSymbol {
    fn base_dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64], p: &[f64], p_s: f64) -> f64 {
        self.expr.eval(&self.pack(x, p, p_s))
    }

    fn gradient(&self, x: &[f64], p: &[f64], p_s: f64) -> SymbolGradient {
        let v = self.pack(x, p, p_s);
        let g: Vec<f64> = self.grad.iter().map(|e| e.eval(&v)).collect();
        SymbolGradient {
            dx: g[..self.dim].to_vec(),
            dp: g[self.dim..2 * self.dim].to_vec(),
            dps: g[2 * self.dim],
        }
    }
}

/// Symbol backed by a closure; gradients by central differences.
pub struct FnSymbol<F> {
    dim: usize,
    f: F,
}

impl<F> FnSymbol<F>
where
    F: Fn(&[f64], &[f64], f64) -> f64 + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnSymbol { dim, f }
    }
}

impl<F> Symbol for FnSymbol<F>
where
    F: Fn(&[f64], &[f64], f64) -> f64 + Send + Sync,
{
    fn base_dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64], p: &[f64], p_s: f64) -> f64 {
        (self.f)(x, p, p_s)
    }
}

/// The structure group acting on the fiber axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "group", rename_all = "lowercase")]
pub enum FiberGroup {
    Line,
    Circle { period: f64 },
}

impl FiberGroup {
    /// Reduces a fiber coordinate to the group's fundamental domain.
    pub fn reduce(&self, s: f64) -> f64 {
        match self {
            FiberGroup::Line => s,
            FiberGroup::Circle { period } => s.rem_euclid(*period),
        }
    }
}

/// Default on-shell tolerance.
pub const TOL_ONSHELL: f64 = 1e-8;

/// The hypersurface `E ⊂ CU` as the zero set of a homogeneous symbol.
#[derive(Clone)]
pub struct SymbolSurface {
    chart: Chart,
    fiber: FiberGroup,
    symbol: Arc<dyn Symbol>,
    degree: u32,
    tol_onshell: f64,
}

impl fmt::Debug for SymbolSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolSurface")
            .field("chart", &self.chart)
            .field("fiber", &self.fiber)
            .field("degree", &self.degree)
            .finish()
    }
}

impl SymbolSurface {
    pub fn new(chart: Chart, fiber: FiberGroup, symbol: Arc<dyn Symbol>, degree: u32) -> Result<SymbolSurface> {
        if symbol.base_dim() != chart.dim() {
            return Err(Error::DimensionMismatch {
                expected: chart.dim(),
                got: symbol.base_dim(),
            });
        }
        if degree == 0 {
            return Err(Error::Invalid("homogeneity degree must be positive".into()));
        }
        if let FiberGroup::Circle { period } = fiber {
            if !(period.is_finite() && period > 0.0) {
                return Err(Error::Invalid(format!("circle period must be positive, got {period}")));
            }
        }
        Ok(SymbolSurface {
            chart,
            fiber,
            symbol,
            degree,
            tol_onshell: TOL_ONSHELL,
        })
    }

    pub fn with_tol_onshell(mut self, tol: f64) -> Self {
        self.tol_onshell = tol;
        self
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn fiber(&self) -> FiberGroup {
        self.fiber
    }

    pub fn symbol(&self) -> &Arc<dyn Symbol> {
        &self.symbol
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn tol_onshell(&self) -> f64 {
        self.tol_onshell
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn value(&self, x: &[f64], p: &[f64], p_s: f64) -> f64 {
        self.symbol.value(x, p, p_s)
    }

    pub fn gradient(&self, x: &[f64], p: &[f64], p_s: f64) -> SymbolGradient {
        self.symbol.gradient(x, p, p_s)
    }

    pub fn residual(&self, state: &CharacteristicState) -> f64 {
        self.value(&state.x, &state.p, state.p_s)
    }

    /// On-shell tolerance scaled by the size of the contact element.
    pub fn onshell_bound(&self, p: &[f64], p_s: f64) -> f64 {
        let q = (dot(p, p) + p_s * p_s).sqrt();
        self.tol_onshell * q.powi(self.degree as i32).max(1.0)
    }

    /// Relative Euler-identity defect `|⟨q, ∂G/∂q⟩ − d·G| / scale` at one element.
    pub fn euler_defect(&self, x: &[f64], p: &[f64], p_s: f64) -> f64 {
        let g = self.gradient(x, p, p_s);
        let lhs = dot(p, &g.dp) + p_s * g.dps;
        let rhs = self.degree as f64 * self.value(x, p, p_s);
        let scale = dot(p, p).sqrt().max(p_s.abs()) * (norm(&g.dp).hypot(g.dps)).max(1e-300);
        (lhs - rhs).abs() / scale.max(rhs.abs()).max(1e-300)
    }

    /// Fails when the momentum gradient is radial (the contact hyperplane touches `E`).
    pub fn check_nondegenerate(&self, x: &[f64], p: &[f64], p_s: f64) -> Result<()> {
        let g = self.gradient(x, p, p_s);
        let qq = dot(p, p) + p_s * p_s;
        if qq == 0.0 {
            return Err(Error::Degenerate {
                x: x.to_vec(),
                p: p.to_vec(),
                p_s,
                reason: "zero covector".into(),
            });
        }
        let radial = (dot(p, &g.dp) + p_s * g.dps) / qq;
        let tangential: f64 = p
            .iter()
            .zip(&g.dp)
            .map(|(pi, gi)| (gi - radial * pi).powi(2))
            .sum::<f64>()
            + (g.dps - radial * p_s).powi(2);
        let bound = 1e-10 * qq.sqrt().powi(self.degree as i32 - 1);
        if !tangential.is_finite() || tangential.sqrt() < bound {
            return Err(Error::Degenerate {
                x: x.to_vec(),
                p: p.to_vec(),
                p_s,
                reason: "momentum gradient is radial".into(),
            });
        }
        Ok(())
    }
}

/// A point of a characteristic strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicState {
    pub x: Vec<f64>,
    pub s: f64,
    pub p: Vec<f64>,
    pub p_s: f64,
    pub tau: f64,
}

impl CharacteristicState {
    pub fn new(x: Vec<f64>, s: f64, p: Vec<f64>, p_s: f64) -> Self {
        CharacteristicState { x, s, p, p_s, tau: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Projective normalization: `|p_s| = 1` when `p_s ≠ 0`, else `‖p‖ = 1`.
    pub fn gauge_fixed(&self) -> CharacteristicState {
        let k = if self.p_s != 0.0 {
            1.0 / self.p_s.abs()
        } else {
            let n = norm(&self.p);
            if n == 0.0 {
                1.0
            } else {
                1.0 / n
            }
        };
        self.rescaled(k)
    }

    /// Scales the covector `(p, p_s)` by `k`.
    pub fn rescaled(&self, k: f64) -> CharacteristicState {
        CharacteristicState {
            p: self.p.iter().map(|v| v * k).collect(),
            p_s: self.p_s * k,
            ..self.clone()
        }
    }

    pub(crate) fn pack(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dim() + 2);
        v.extend_from_slice(&self.x);
        v.push(self.s);
        v.extend_from_slice(&self.p);
        v.push(self.p_s);
        v
    }

    pub(crate) fn unpack(y: &[f64], tau: f64) -> CharacteristicState {
        let m = (y.len() - 2) / 2;
        CharacteristicState {
            x: y[..m].to_vec(),
            s: y[m],
            p: y[m + 1..2 * m + 1].to_vec(),
            p_s: y[2 * m + 1],
            tau,
        }
    }
}

/// Strip velocity `(ẋ, ṡ, ṗ, ṗ_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StripVelocity {
    pub dx: Vec<f64>,
    pub ds: f64,
    pub dp: Vec<f64>,
    pub dps: f64,
}

impl StripVelocity {
    /// `⟨dG, velocity⟩`, which vanishes for a characteristic direction.
    pub fn pairing_with(&self, g: &SymbolGradient) -> f64 {
        dot(&g.dx, &self.dx) + dot(&g.dp, &self.dp) + g.dps * self.dps
    }

    pub fn norm(&self) -> f64 {
        (dot(&self.dx, &self.dx) + self.ds * self.ds + dot(&self.dp, &self.dp) + self.dps * self.dps).sqrt()
    }
}

fn raw_field(e: &SymbolSurface, x: &[f64], p: &[f64], p_s: f64) -> Result<StripVelocity> {
    e.check_nondegenerate(x, p, p_s)?;
    let g = e.gradient(x, p, p_s);
    Ok(StripVelocity {
        dx: g.dp.clone(),
        ds: -g.dps,
        dp: g.dx.iter().map(|v| -v).collect(),
        dps: 0.0,
    })
}

/// The characteristic direction field of `E` at an on-shell state.
pub fn characteristic_field(e: &SymbolSurface, state: &CharacteristicState) -> Result<StripVelocity> {
    e.chart().check_dim(state.dim())?;
    let r = e.residual(state);
    let bound = e.onshell_bound(&state.p, state.p_s);
    if !(r.abs() <= bound) {
        return Err(Error::OffShell { residual: r.abs(), tol: bound });
    }
    raw_field(e, &state.x, &state.p, state.p_s)
}

/// Restores `G = 0` by Newton steps along `∂G/∂p`, leaving `p_s` untouched.
pub(crate) fn project_onshell(e: &SymbolSurface, x: &[f64], p: &mut [f64], p_s: f64) {
    for _ in 0..4 {
        let g = e.value(x, p, p_s);
        if g.abs() <= 0.5 * e.onshell_bound(p, p_s) * 1e-3 {
            break;
        }
        let grad = e.gradient(x, p, p_s);
        let nn = dot(&grad.dp, &grad.dp);
        if nn == 0.0 {
            break;
        }
        for (pi, gi) in p.iter_mut().zip(&grad.dp) {
            *pi -= g * gi / nn;
        }
    }
}

/// Why a strip ended before its last requested sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StripExit {
    /// The projection left the chart.
    LeftChart,
}

/// Sampled characteristic strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub states: Vec<CharacteristicState>,
    pub exit: Option<StripExit>,
    pub steps: usize,
}

impl Strip {
    pub fn first(&self) -> &CharacteristicState {
        &self.states[0]
    }

    pub fn last(&self) -> &CharacteristicState {
        self.states.last().expect("strip is never empty")
    }

    pub fn max_residual(&self, e: &SymbolSurface) -> f64 {
        self.states.iter().map(|s| e.residual(s).abs()).fold(0.0, f64::max)
    }

    pub fn max_fiber_momentum_drift(&self) -> f64 {
        let p0 = self.first().p_s;
        self.states.iter().map(|s| (s.p_s - p0).abs()).fold(0.0, f64::max)
    }
}

/// Evenly spaced sample times including both ends.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn dynamics(e: &SymbolSurface) -> impl Fn(&[f64], &mut [f64]) -> Result<()> + '_ {
    move |y: &[f64], dy: &mut [f64]| {
        let m = e.dim();
        let v = raw_field(e, &y[..m], &y[m + 1..2 * m + 1], y[2 * m + 1])?;
        dy[..m].copy_from_slice(&v.dx);
        dy[m] = v.ds;
        dy[m + 1..2 * m + 1].copy_from_slice(&v.dp);
        dy[2 * m + 1] = 0.0;
        Ok(())
    }
}

fn projection_hook(e: &SymbolSurface, y: &mut [f64]) {
    let m = e.dim();
    let (head, tail) = y.split_at_mut(m + 1);
    let p_s = tail[m];
    let g = e.value(&head[..m], &tail[..m], p_s);
    if g.abs() > 0.5 * e.onshell_bound(&tail[..m], p_s) * 1e-2 {
        project_onshell(e, &head[..m], &mut tail[..m], p_s);
    }
}

/// Integrates the strip through `init`, sampling at the absolute strip times `taus`.
///
/// The strip starts at `init.tau`; `taus` must be monotone away from it. The
/// run ends early, flagged with [`StripExit::LeftChart`], when the base point
/// leaves the chart.
pub fn propagate(e: &SymbolSurface, init: &CharacteristicState, taus: &[f64], integ: &IntegratorConfig) -> Result<Strip> {
    e.chart().check_dim(init.dim())?;
    e.chart().check_dim(init.p.len())?;
    characteristic_field(e, init)?;
    let rhs = dynamics(e);
    let y0 = init.pack();
    let m = e.dim();
    let chart = e.chart().clone();
    let samples = integrate::integrate(&rhs, &y0, init.tau, taus, integ, |_, y| {
        projection_hook(e, y);
        Ok(if chart.contains(&y[..m]) { Flow::Continue } else { Flow::Stop })
    })?;
    let mut states: Vec<CharacteristicState> = samples
        .times
        .iter()
        .zip(&samples.states)
        .map(|(t, y)| CharacteristicState::unpack(y, *t))
        .collect();
    if states.is_empty() {
        states.push(init.clone());
    }
    for st in &states {
        let r = e.residual(st).abs();
        let bound = e.onshell_bound(&st.p, st.p_s);
        if !(r <= bound) {
            return Err(Error::OffShell { residual: r, tol: bound });
        }
    }
    Ok(Strip {
        states,
        exit: samples.stopped.then_some(StripExit::LeftChart),
        steps: samples.steps,
    })
}

/// Convenience wrapper: `n` samples over `[init.tau, init.tau + span]`.
pub fn propagate_span(e: &SymbolSurface, init: &CharacteristicState, span: f64, n: usize, integ: &IntegratorConfig) -> Result<Strip> {
    propagate(e, init, &linspace(init.tau, init.tau + span, n.max(1)), integ)
}

/// Fiber displacement `s_end − s_start` along the strip (never reduced mod period).
pub fn action_increment(strip: &Strip) -> f64 {
    strip.last().s - strip.first().s
}

/// Propagates every initial state independently; output order matches input order.
pub fn batch_propagate(e: &SymbolSurface, inits: &[CharacteristicState], taus: &[f64], integ: &IntegratorConfig) -> Vec<Result<Strip>> {
    inits.par_iter().map(|init| propagate(e, init, taus, integ)).collect()
}

/// Flows the strip through `init` until base coordinate `axis` equals `value`.
///
/// The direction is chosen from the sign of `ẋ^axis`. Returns the state on the
/// section with `tau` set to the crossing parameter.
pub fn propagate_to_section(
    e: &SymbolSurface,
    init: &CharacteristicState,
    axis: usize,
    value: f64,
    budget: f64,
    integ: &IntegratorConfig,
) -> Result<CharacteristicState> {
    let v = characteristic_field(e, init)?;
    let gap = value - init.x[axis];
    if gap == 0.0 {
        return Ok(init.clone());
    }
    let rate = v.dx[axis];
    if rate == 0.0 {
        return Err(Error::NoCrossing { axis, value, budget });
    }
    let dir = if gap * rate > 0.0 { 1.0 } else { -1.0 };
    let rhs = dynamics(e);
    let m = e.dim();
    let mut prev: (f64, Vec<f64>) = (init.tau, init.pack());
    let mut bracket: Option<(f64, Vec<f64>)> = None;
    let target = init.tau + dir * budget;
    let samples = integrate::integrate(&rhs, &init.pack(), init.tau, &[target], integ, |t, y| {
        projection_hook(e, y);
        let before = prev.1[axis] - value;
        let after = y[axis] - value;
        if before == 0.0 || before * after <= 0.0 {
            bracket = Some(prev.clone());
            return Ok(Flow::Stop);
        }
        if !e.chart().contains(&y[..m]) {
            return Ok(Flow::Stop);
        }
        prev = (t, y.clone());
        Ok(Flow::Continue)
    })?;
    let _ = samples;
    let Some((t0, y0)) = bracket else {
        return Err(Error::NoCrossing { axis, value, budget });
    };
    // secant refinement by single steps from the bracketing state
    let mut dtau = 0.0;
    let mut y = y0.clone();
    for _ in 0..8 {
        let mut dy = vec![0.0; y.len()];
        rhs(&y, &mut dy)?;
        if dy[axis] == 0.0 {
            break;
        }
        let corr = (value - y[axis]) / dy[axis];
        dtau += corr;
        y = if dtau == 0.0 { y0.clone() } else { integrate::dp5_step(&rhs, &y0, dtau)?.0 };
        if corr.abs() <= 1e-15 * (1.0 + dtau.abs()) {
            break;
        }
    }
    projection_hook(e, &mut y);
    let mut st = CharacteristicState::unpack(&y, t0 + dtau);
    st.x[axis] = value;
    Ok(st)
}
