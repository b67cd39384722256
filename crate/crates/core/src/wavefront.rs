//! Legendre lifts of initial hypersurfaces and front propagation by characteristics.
//!
//! An initial hypersurface `Σ ⊂ M` with initial action `s₀` is sampled on a 1D or
//! 2D parameter grid. Each sample is lifted to the covector that annihilates
//! `TΣ` (up to the `s₀` slope) and lies on `E`; the lifted states are then carried
//! along their strips, and the Jacobian of the projection `(u, τ) ↦ x` tracks caustics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contact::{batch_propagate, characteristic_field, CharacteristicState, SymbolSurface};
use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;
use crate::manifold::{dot, norm};
use crate::numeric;

/// Below this magnitude a front Jacobian counts as zero.
pub const DET_ZERO: f64 = 1e-9;

/// One uniformly sampled front parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamAxis {
    pub start: f64,
    pub end: f64,
    pub n: usize,
    /// Closed parameter: `end` is identified with `start` and not sampled.
    #[serde(default)]
    pub periodic: bool,
}

impl ParamAxis {
    pub fn open(start: f64, end: f64, n: usize) -> ParamAxis {
        ParamAxis { start, end, n, periodic: false }
    }

    pub fn closed(start: f64, end: f64, n: usize) -> ParamAxis {
        ParamAxis { start, end, n, periodic: true }
    }

    pub fn step(&self) -> f64 {
        let intervals = if self.periodic { self.n } else { self.n.saturating_sub(1) };
        (self.end - self.start) / intervals.max(1) as f64
    }

    pub fn value(&self, k: usize) -> f64 {
        self.start + self.step() * k as f64
    }
}

/// Row-major index grid over up to two front parameters (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub axes: Vec<ParamAxis>,
}

impl ParamGrid {
    pub fn new(axes: Vec<ParamAxis>) -> Result<ParamGrid> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Invalid(format!("front grids have 1 or 2 parameters, got {}", axes.len())));
        }
        if let Some(a) = axes.iter().find(|a| a.n < 3 || !(a.end > a.start)) {
            return Err(Error::Invalid(format!("parameter axis needs n ≥ 3 and end > start: {a:?}")));
        }
        Ok(ParamGrid { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn params(&self) -> usize {
        self.axes.len()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        let mut rest = flat;
        for (j, a) in self.axes.iter().enumerate().rev() {
            idx[j] = rest % a.n;
            rest /= a.n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (i, a)| acc * a.n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().zip(&self.axes).map(|(k, a)| a.value(*k)).collect()
    }

    /// d/du_axis of sampled values at `flat`: five-point stencil where it fits,
    /// second-order one-sided at open ends.
    pub fn derivative(&self, values: &[Vec<f64>], flat: usize, axis: usize) -> Vec<f64> {
        let a = self.axes[axis];
        let idx = self.multi_index(flat);
        let at = |offset: isize| -> Option<&Vec<f64>> {
            let k = idx[axis] as isize + offset;
            let k = if a.periodic {
                k.rem_euclid(a.n as isize)
            } else if k < 0 || k >= a.n as isize {
                return None;
            } else {
                k
            };
            let mut j = idx.clone();
            j[axis] = k as usize;
            Some(&values[self.flat_index(&j)])
        };
        let h = a.step();
        let comb = |terms: &[(isize, f64)], denom: f64| -> Vec<f64> {
            let dim = values[flat].len();
            let mut out = vec![0.0; dim];
            for (off, w) in terms {
                let v = at(*off).expect("stencil inside grid");
                for c in 0..dim {
                    out[c] += w * v[c];
                }
            }
            out.iter().map(|v| v / (denom * h)).collect()
        };
        let has = |off: isize| at(off).is_some();
        if has(-2) && has(2) {
            comb(&[(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)], 12.0)
        } else if has(-1) && has(1) {
            comb(&[(-1, -1.0), (1, 1.0)], 2.0)
        } else if has(1) {
            comb(&[(0, -3.0), (1, 4.0), (2, -1.0)], 2.0)
        } else {
            comb(&[(0, 3.0), (-1, -4.0), (-2, 1.0)], 2.0)
        }
    }
}

/// Parametrized initial hypersurface with initial action, `u ↦ (x(u), s₀(u))`.
pub struct InitialFront<'a> {
    pub grid: ParamGrid,
    pub embed: Box<dyn Fn(&[f64]) -> (Vec<f64>, f64) + Send + Sync + 'a>,
}

impl<'a> InitialFront<'a> {
    pub fn new(grid: ParamGrid, embed: impl Fn(&[f64]) -> (Vec<f64>, f64) + Send + Sync + 'a) -> InitialFront<'a> {
        InitialFront {
            grid,
            embed: Box::new(embed),
        }
    }

    /// `(x, s₀, ∂x/∂u_j, ∂s₀/∂u_j)` at parameter `u` by central differences of the embedding.
    fn jet(&self, u: &[f64]) -> (Vec<f64>, f64, Vec<Vec<f64>>, Vec<f64>) {
        let (x, s) = (self.embed)(u);
        let mut tangents = Vec::new();
        let mut slopes = Vec::new();
        for j in 0..u.len() {
            let h = 1e-5 * self.grid.axes[j].step().abs().max(1e-3);
            let mut up = u.to_vec();
            up[j] += h;
            let (xp, sp) = (self.embed)(&up);
            up[j] -= 2.0 * h;
            let (xm, sm) = (self.embed)(&up);
            tangents.push(xp.iter().zip(&xm).map(|(a, b)| (a - b) / (2.0 * h)).collect());
            slopes.push((sp - sm) / (2.0 * h));
        }
        (x, s, tangents, slopes)
    }
}

/// Which on-shell covector to take over each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftBranch {
    /// `+1` or `−1`: the gauge-fixed `p_s`.
    pub p_s_sign: i8,
    /// Index into the on-shell normal scalings `μ`, sorted ascending.
    pub root: usize,
}

impl LiftBranch {
    pub fn new(p_s_sign: i8, root: usize) -> LiftBranch {
        LiftBranch { p_s_sign, root }
    }
}

/// Lifted front: one initial strip state per grid sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontLift {
    pub grid: ParamGrid,
    pub states: Vec<CharacteristicState>,
}

fn normal_scales() -> Vec<f64> {
    let half: Vec<f64> = (0..=480).map(|i| 10f64.powf(-8.0 + 16.0 * i as f64 / 480.0)).collect();
    let mut g: Vec<f64> = half.iter().rev().map(|v| -v).collect();
    g.push(0.0);
    g.extend(half);
    g
}

/// Unit normal to the span of `tangents`, oriented so `det[n, T₁, …] > 0`.
fn oriented_normal(tangents: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    let t = DMatrix::from_fn(tangents.len(), dim, |r, c| tangents[r][c]);
    let svd = t.clone().svd(false, true);
    let vt = svd.v_t?;
    if svd.singular_values.iter().any(|s| *s < 1e-12) {
        return None;
    }
    // the null direction is the row of Vᵀ beyond the rank
    let full = DMatrix::<f64>::identity(dim, dim) - vt.transpose() * &vt;
    let col = (0..dim).max_by(|a, b| full.column(*a).norm().total_cmp(&full.column(*b).norm()))?;
    let mut n: DVector<f64> = full.column(col).into_owned();
    n /= n.norm();
    let mut frame = DMatrix::<f64>::zeros(dim, dim);
    frame.set_column(0, &n);
    for (j, tj) in tangents.iter().enumerate() {
        frame.set_column(j + 1, &DVector::from_column_slice(tj));
    }
    if frame.determinant() < 0.0 {
        n = -n;
    }
    Some(n.iter().copied().collect())
}

/// Lifts each sample of `sigma` to an on-shell contact element on the chosen branch.
///
/// The momentum is `p = p_∥ + μ n`: `p_∥` is the least-squares solution of
/// `⟨p, ∂x/∂u_j⟩ = p_s ∂s₀/∂u_j` and `μ` the selected root of `G(x, p_∥ + μ n, p_s) = 0`.
pub fn legendre_lift(e: &SymbolSurface, sigma: &InitialFront, branch: LiftBranch) -> Result<FrontLift> {
    let dim = e.dim();
    if sigma.grid.params() + 1 != dim {
        return Err(Error::DimensionMismatch {
            expected: dim - 1,
            got: sigma.grid.params(),
        });
    }
    if branch.p_s_sign.abs() != 1 {
        return Err(Error::Invalid("p_s sign must be +1 or -1".into()));
    }
    let p_s = branch.p_s_sign as f64;
    let scales = normal_scales();
    let mut states = Vec::with_capacity(sigma.grid.len());
    for i in 0..sigma.grid.len() {
        let u = sigma.grid.point(i);
        let (x, s0, tangents, slopes) = sigma.jet(&u);
        e.chart().check_dim(x.len())?;
        let n = oriented_normal(&tangents, dim).ok_or_else(|| Error::NoLift {
            index: i,
            reason: "initial hypersurface is not immersed here".into(),
        })?;
        let k = tangents.len();
        let gram = DMatrix::from_fn(k, k, |a, b| dot(&tangents[a], &tangents[b]));
        let rhs = DVector::from_iterator(k, slopes.iter().map(|d| p_s * d));
        let coef = gram.lu().solve(&rhs).ok_or_else(|| Error::NoLift {
            index: i,
            reason: "singular tangent Gram matrix".into(),
        })?;
        let mut base = vec![0.0; dim];
        for (a, t) in tangents.iter().enumerate() {
            for c in 0..dim {
                base[c] += coef[a] * t[c];
            }
        }
        let momentum = |mu: f64| -> Vec<f64> { base.iter().zip(&n).map(|(b, v)| b + mu * v).collect() };
        let roots = numeric::roots_on_grid(|mu| e.value(&x, &momentum(mu), p_s), &scales);
        let mu = *roots.get(branch.root).ok_or_else(|| Error::NoLift {
            index: i,
            reason: format!("branch root {} requested, {} on-shell scalings found", branch.root, roots.len()),
        })?;
        let p = momentum(mu);
        e.check_nondegenerate(&x, &p, p_s).map_err(|err| Error::NoLift {
            index: i,
            reason: err.to_string(),
        })?;
        let g = e.gradient(&x, &p, p_s);
        if dot(&g.dp, &n).abs() <= 1e-10 * norm(&g.dp) {
            return Err(Error::NoLift {
                index: i,
                reason: "characteristic is tangent to the initial hypersurface".into(),
            });
        }
        states.push(CharacteristicState::new(x, s0, p, p_s));
    }
    Ok(FrontLift {
        grid: sigma.grid.clone(),
        states,
    })
}

/// A lifted sample at one strip time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSample {
    pub u: Vec<f64>,
    pub state: CharacteristicState,
    /// `det ∂x/∂(u, τ)`; `NaN` when a neighbour is missing.
    pub jacobian_det: f64,
    pub caustic: bool,
}

/// The front at one strip time; `None` for samples whose strip failed or ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontSlice {
    pub tau: f64,
    pub samples: Vec<Option<FrontSample>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausticEvent {
    pub index: usize,
    pub tau: f64,
}

#[derive(Debug)]
pub struct FrontHistory {
    pub grid: ParamGrid,
    pub slices: Vec<FrontSlice>,
    pub caustics: Vec<CausticEvent>,
    /// Samples whose strips could not be integrated.
    pub failures: Vec<(usize, Error)>,
}

fn det_sign(d: f64) -> i8 {
    if !d.is_finite() || d.abs() < DET_ZERO {
        0
    } else if d > 0.0 {
        1
    } else {
        -1
    }
}

/// Propagates every lifted sample to the strip times `taus` and tracks the front Jacobian.
pub fn propagate_front(e: &SymbolSurface, lift: &FrontLift, taus: &[f64], integ: &IntegratorConfig) -> Result<FrontHistory> {
    if lift.states.is_empty() {
        return Err(Error::Invalid("empty front lift".into()));
    }
    let strips = batch_propagate(e, &lift.states, taus, integ);
    let grid = &lift.grid;
    let mut failures = Vec::new();
    let mut per_sample: Vec<Option<Vec<CharacteristicState>>> = Vec::with_capacity(strips.len());
    for (i, r) in strips.into_iter().enumerate() {
        match r {
            Ok(strip) => per_sample.push(Some(strip.states)),
            Err(err) => {
                failures.push((i, err));
                per_sample.push(None);
            }
        }
    }
    let mut slices = Vec::with_capacity(taus.len());
    for (k, &tau) in taus.iter().enumerate() {
        let states: Vec<Option<&CharacteristicState>> =
            per_sample.iter().map(|s| s.as_ref().and_then(|v| v.get(k))).collect();
        let complete = states.iter().all(Option::is_some);
        let xs: Vec<Vec<f64>> = states.iter().map(|s| s.map(|s| s.x.clone()).unwrap_or_default()).collect();
        let mut samples = Vec::with_capacity(states.len());
        for (i, st) in states.iter().enumerate() {
            let Some(st) = st else {
                samples.push(None);
                continue;
            };
            let det = if complete {
                front_jacobian(e, grid, &xs, i, st)
            } else {
                f64::NAN
            };
            samples.push(Some(FrontSample {
                u: grid.point(i),
                state: (*st).clone(),
                jacobian_det: det,
                caustic: false,
            }));
        }
        slices.push(FrontSlice { tau, samples });
    }
    let caustics = flag_caustics(&mut slices, grid.len());
    Ok(FrontHistory {
        grid: grid.clone(),
        slices,
        caustics,
        failures,
    })
}

fn front_jacobian(e: &SymbolSurface, grid: &ParamGrid, xs: &[Vec<f64>], i: usize, st: &CharacteristicState) -> f64 {
    let dim = st.x.len();
    let Ok(v) = characteristic_field(e, st) else {
        return f64::NAN;
    };
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for j in 0..grid.params() {
        m.set_column(j, &DVector::from_vec(grid.derivative(xs, i, j)));
    }
    m.set_column(dim - 1, &DVector::from_column_slice(&v.dx));
    m.determinant()
}

fn flag_caustics(slices: &mut [FrontSlice], n: usize) -> Vec<CausticEvent> {
    let mut events = Vec::new();
    for i in 0..n {
        let mut last: i8 = 0;
        let mut zero_at: Option<usize> = None;
        for k in 0..slices.len() {
            let Some(sample) = slices[k].samples[i].as_ref() else {
                continue;
            };
            let sign = det_sign(sample.jacobian_det);
            if sign == 0 {
                if last != 0 && zero_at.is_none() {
                    zero_at = Some(k);
                }
                continue;
            }
            if last != 0 && sign != last {
                let at = zero_at.unwrap_or(k);
                if let Some(s) = slices[at].samples[i].as_mut() {
                    s.caustic = true;
                }
                events.push(CausticEvent {
                    index: i,
                    tau: slices[at].tau,
                });
            }
            last = sign;
            zero_at = None;
        }
    }
    events.sort_by(|a, b| a.tau.total_cmp(&b.tau).then(a.index.cmp(&b.index)));
    events
}

/// A sample of the action function `S`: the base point and its fiber coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSample {
    pub x: Vec<f64>,
    pub s: f64,
    /// Number of caustics this sample's strip has crossed; `0` is the pre-caustic sheet.
    pub branch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSlice {
    pub tau: f64,
    pub samples: Vec<ActionSample>,
}

/// Slices of the front as samples of `S`; past a caustic the samples carry the sheet index.
pub fn front_action_function(history: &FrontHistory) -> Vec<ActionSlice> {
    let n = history.grid.len();
    let mut crossed = vec![0usize; n];
    history
        .slices
        .iter()
        .map(|slice| {
            let samples = slice
                .samples
                .iter()
                .enumerate()
                .filter_map(|(i, s)| {
                    let s = s.as_ref()?;
                    if s.caustic {
                        crossed[i] += 1;
                    }
                    Some(ActionSample {
                        x: s.state.x.clone(),
                        s: s.state.s,
                        branch: crossed[i],
                    })
                })
                .collect();
            ActionSlice { tau: slice.tau, samples }
        })
        .collect()
}

/// Largest `|⟨p, ∂x/∂u_j⟩ − p_s ∂s/∂u_j|` over complete slices; zero on an exactly Legendre front.
pub fn legendre_defect(history: &FrontHistory) -> f64 {
    let grid = &history.grid;
    let mut worst: f64 = 0.0;
    for slice in &history.slices {
        if slice.samples.iter().any(Option::is_none) {
            continue;
        }
        let states: Vec<&CharacteristicState> = slice.samples.iter().flatten().map(|s| &s.state).collect();
        let xs: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
        let ss: Vec<Vec<f64>> = states.iter().map(|s| vec![s.s]).collect();
        for (i, st) in states.iter().enumerate() {
            for j in 0..grid.params() {
                let dx = grid.derivative(&xs, i, j);
                let ds = grid.derivative(&ss, i, j)[0];
                worst = worst.max((dot(&st.p, &dx) - st.p_s * ds).abs());
            }
        }
    }
    worst
}
