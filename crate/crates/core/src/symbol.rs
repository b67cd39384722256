//! Linear differential operators on `U`, their principal symbols and the
//! eikonal asymptotics `D e^{iλg} = (iλ)^n s_D(dg) e^{iλg} + O(λ^{n−1})`.
//!
//! U-axes are the base axes followed by the fiber axis `s`. Coefficients live on
//! `M` (they do not depend on `s`), so every operator here is `G`-invariant.

use std::sync::{Arc, Mutex};

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contact::{FiberGroup, Symbol, SymbolGradient, SymbolSurface};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::integrate::{self, Flow, IntegratorConfig};
use crate::manifold::{Chart, ScalarField};
use crate::numeric;

/// `coeff(x) ∂^alpha`, with `alpha` indexed over U-axes.
#[derive(Debug, Clone)]
pub struct OperatorTerm {
    pub alpha: Vec<u32>,
    pub coeff: ScalarField,
}

impl OperatorTerm {
    pub fn order(&self) -> u32 {
        self.alpha.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct LinearDiffOperator {
    base_dim: usize,
    terms: Vec<OperatorTerm>,
}

impl LinearDiffOperator {
    pub fn new(base_dim: usize, terms: Vec<OperatorTerm>) -> Result<LinearDiffOperator> {
        if terms.is_empty() {
            return Err(Error::Invalid("operator has no terms".into()));
        }
        for t in &terms {
            if t.alpha.len() != base_dim + 1 {
                return Err(Error::DimensionMismatch {
                    expected: base_dim + 1,
                    got: t.alpha.len(),
                });
            }
            if t.coeff.dim() != base_dim {
                return Err(Error::DimensionMismatch {
                    expected: base_dim,
                    got: t.coeff.dim(),
                });
            }
        }
        Ok(LinearDiffOperator { base_dim, terms })
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn terms(&self) -> &[OperatorTerm] {
        &self.terms
    }

    pub fn order(&self) -> u32 {
        self.terms.iter().map(OperatorTerm::order).max().unwrap_or(0)
    }

    /// The same operator with an extra term appended.
    pub fn with_term(&self, term: OperatorTerm) -> Result<LinearDiffOperator> {
        let mut terms = self.terms.clone();
        terms.push(term);
        LinearDiffOperator::new(self.base_dim, terms)
    }
}

/// The multi-index of `∂_{axes[0]} ∂_{axes[1]} …` over `dim` U-axes.
pub fn multi_index(dim: usize, axes: &[usize]) -> Vec<u32> {
    let mut alpha = vec![0; dim];
    for &a in axes {
        alpha[a] += 1;
    }
    alpha
}

/// `(1/2m) Δ_x + V ∂²_ss + ∂²_st` on U-axes `(t, x…, s)`; `potential` is a field on `(t, x…)`.
pub fn schrodinger_operator(base_dim: usize, mass: f64, potential: ScalarField) -> Result<LinearDiffOperator> {
    let u = base_dim + 1;
    let s = base_dim;
    let mut terms: Vec<OperatorTerm> = (1..base_dim)
        .map(|k| OperatorTerm {
            alpha: multi_index(u, &[k, k]),
            coeff: ScalarField::constant(base_dim, 1.0 / (2.0 * mass)),
        })
        .collect();
    terms.push(OperatorTerm {
        alpha: multi_index(u, &[s, s]),
        coeff: potential,
    });
    terms.push(OperatorTerm {
        alpha: multi_index(u, &[s, 0]),
        coeff: ScalarField::constant(base_dim, 1.0),
    });
    LinearDiffOperator::new(base_dim, terms)
}

/// `s_D(x, ξ) = Σ_{|α| = n} coeff_α(x) ξ^α` with `ξ = (p, p_s)`.
#[derive(Debug, Clone)]
pub struct PrincipalSymbol {
    base_dim: usize,
    order: u32,
    terms: Vec<OperatorTerm>,
}

fn monomial(alpha: &[u32], xi: &[f64]) -> f64 {
    alpha.iter().zip(xi).map(|(a, v)| v.powi(*a as i32)).product()
}

fn monomial_partial(alpha: &[u32], xi: &[f64], k: usize) -> f64 {
    if alpha[k] == 0 {
        return 0.0;
    }
    let mut d = alpha[k] as f64;
    for (j, (a, v)) in alpha.iter().zip(xi).enumerate() {
        let e = if j == k { a - 1 } else { *a };
        d *= v.powi(e as i32);
    }
    d
}

impl PrincipalSymbol {
    pub fn order(&self) -> u32 {
        self.order
    }

    /// `s_D` at a full U-covector `ξ = (ξ_M, ξ_s)`.
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.coeff.value(x) * monomial(&t.alpha, xi)).sum()
    }
}

impl Symbol for PrincipalSymbol {
    fn base_dim(&self) -> usize {
        self.base_dim
    }

    fn value(&self, x: &[f64], p: &[f64], p_s: f64) -> f64 {
        let mut xi = p.to_vec();
        xi.push(p_s);
        self.eval(x, &xi)
    }

    fn gradient(&self, x: &[f64], p: &[f64], p_s: f64) -> SymbolGradient {
        let m = self.base_dim;
        let mut xi = p.to_vec();
        xi.push(p_s);
        let mut dx = vec![0.0; m];
        let mut dxi = vec![0.0; m + 1];
        for t in &self.terms {
            let c = t.coeff.value(x);
            let mono = monomial(&t.alpha, &xi);
            for (d, g) in dx.iter_mut().zip(t.coeff.gradient(x)) {
                *d += g * mono;
            }
            for (k, d) in dxi.iter_mut().enumerate() {
                *d += c * monomial_partial(&t.alpha, &xi, k);
            }
        }
        let dps = dxi.pop().unwrap_or(0.0);
        SymbolGradient { dx, dp: dxi, dps }
    }
}

/// Keeps only the top-order terms of `D`.
pub fn principal_symbol(d: &LinearDiffOperator) -> PrincipalSymbol {
    let n = d.order();
    PrincipalSymbol {
        base_dim: d.base_dim,
        order: n,
        terms: d.terms.iter().filter(|t| t.order() == n).cloned().collect(),
    }
}

/// `E = {s_D = 0}` over `chart` as a characteristic surface of degree `n`.
pub fn principal_surface(d: &LinearDiffOperator, chart: Chart, fiber: FiberGroup) -> Result<SymbolSurface> {
    let sym = principal_symbol(d);
    let n = sym.order();
    SymbolSurface::new(chart, fiber, Arc::new(sym), n)
}

/// `H(x, ξ) = s_D(x, ξ, w)`: the symbol restricted to fiber momentum `w`.
#[derive(Clone)]
pub struct ReducedHamiltonian {
    symbol: Arc<dyn Symbol>,
    weight: f64,
}

impl std::fmt::Debug for ReducedHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedHamiltonian").field("weight", &self.weight).finish()
    }
}

pub fn equivariant_reduce(symbol: Arc<dyn Symbol>, weight: f64) -> ReducedHamiltonian {
    ReducedHamiltonian { symbol, weight }
}

/// A sample `(x, ξ)` along a reduced Hamiltonian trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub tau: f64,
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
}

impl ReducedHamiltonian {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn dim(&self) -> usize {
        self.symbol.base_dim()
    }

    pub fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        self.symbol.value(x, xi, self.weight)
    }

    /// Hamilton's equations `ẋ = ∂H/∂ξ`, `ξ̇ = −∂H/∂x` from `(x0, ξ0)` at `τ = 0`.
    pub fn flow(&self, x0: &[f64], xi0: &[f64], taus: &[f64], integ: &IntegratorConfig) -> Result<Vec<PhaseSample>> {
        let m = self.dim();
        if x0.len() != m || xi0.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: x0.len().min(xi0.len()),
            });
        }
        let rhs = |y: &[f64], dy: &mut [f64]| -> Result<()> {
            let g = self.symbol.gradient(&y[..m], &y[m..], self.weight);
            dy[..m].copy_from_slice(&g.dp);
            for k in 0..m {
                dy[m + k] = -g.dx[k];
            }
            Ok(())
        };
        let mut y0 = x0.to_vec();
        y0.extend_from_slice(xi0);
        let out = integrate::integrate(&rhs, &y0, 0.0, taus, integ, |_, _| Ok(Flow::Continue))?;
        Ok(out
            .times
            .iter()
            .zip(&out.states)
            .map(|(t, y)| PhaseSample {
                tau: *t,
                x: y[..m].to_vec(),
                xi: y[m..].to_vec(),
            })
            .collect())
    }
}

/// A phase function on `U` with partial derivatives of any order.
pub trait Phase {
    /// Number of U-axes.
    fn dim(&self) -> usize;
    /// `∂^alpha g` at the U-point `y`.
    fn derivative(&self, y: &[f64], alpha: &[u32]) -> Result<f64>;
}

/// Phase given by an expression in the U-axes; derivatives are symbolic and cached.
pub struct ExprPhase {
    dim: usize,
    expr: Expr,
    cache: Mutex<Vec<(Vec<u32>, Expr)>>,
}

impl ExprPhase {
    pub fn new(dim: usize, expr: Expr) -> Result<ExprPhase> {
        if expr.max_var().is_some_and(|v| v >= dim) {
            return Err(Error::Invalid("phase uses a variable outside the U-axes".into()));
        }
        Ok(ExprPhase {
            dim,
            expr,
            cache: Mutex::new(Vec::new()),
        })
    }

    /// Parses `src` over U-axes named `axes` (base axes then the fiber name).
    pub fn parse(axes: &[String], src: &str) -> Result<ExprPhase> {
        let expr = Expr::parse(src, axes, &Default::default())?;
        ExprPhase::new(axes.len(), expr)
    }
}

impl Phase for ExprPhase {
    fn dim(&self) -> usize {
        self.dim
    }

    fn derivative(&self, y: &[f64], alpha: &[u32]) -> Result<f64> {
        let mut cache = self.cache.lock().map_err(|_| Error::Invalid("phase cache poisoned".into()))?;
        if let Some((_, e)) = cache.iter().find(|(a, _)| a == alpha) {
            return Ok(e.eval(y));
        }
        let mut e = self.expr.clone();
        for (axis, count) in alpha.iter().enumerate() {
            for _ in 0..*count {
                e = e.diff(axis);
            }
        }
        let v = e.eval(y);
        cache.push((alpha.to_vec(), e));
        Ok(v)
    }
}

/// `g(x, s) = S(x) + w s` with `S` interpolated from scattered samples by local
/// polynomial least squares around each evaluation point.
pub struct SampledPhase {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    weight: f64,
    degree: u32,
    neighbours: usize,
    fit_tol: f64,
}

impl SampledPhase {
    /// `degree` ≥ the operator order; `fit_tol` bounds the RMS fit residual relative to the value spread.
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>, weight: f64, degree: u32, fit_tol: f64) -> Result<SampledPhase> {
        let Some(dim) = points.first().map(Vec::len) else {
            return Err(Error::DataQuality("no phase samples".into()));
        };
        if points.len() != values.len() || points.iter().any(|p| p.len() != dim) {
            return Err(Error::DataQuality("inconsistent phase samples".into()));
        }
        let mono = monomials(dim, degree).len();
        let neighbours = (5 * mono).max(2 * dim + 1);
        if points.len() < neighbours {
            return Err(Error::DataQuality(format!(
                "{} samples, need at least {neighbours} for a degree-{degree} fit",
                points.len()
            )));
        }
        Ok(SampledPhase {
            points,
            values,
            weight,
            degree,
            neighbours,
            fit_tol,
        })
    }

    /// Polynomial coefficients of `S` about the base point `x`, in the scaled local variable.
    fn fit(&self, x: &[f64]) -> Result<(Vec<Vec<u32>>, Vec<f64>, f64)> {
        let dim = x.len();
        let mut idx: Vec<(f64, usize)> = self.points.iter().enumerate().map(|(i, p)| (numeric::distance(p, x), i)).collect();
        idx.sort_by(|a, b| a.0.total_cmp(&b.0));
        idx.truncate(self.neighbours);
        let radius = idx.last().map(|v| v.0).unwrap_or(1.0).max(1e-300);
        let mono = monomials(dim, self.degree);
        let mut a = DMatrix::<f64>::zeros(idx.len(), mono.len());
        let mut b = DVector::<f64>::zeros(idx.len());
        for (r, (_, i)) in idx.iter().enumerate() {
            let z: Vec<f64> = self.points[*i].iter().zip(x).map(|(p, c)| (p - c) / radius).collect();
            for (c, m) in mono.iter().enumerate() {
                a[(r, c)] = monomial(m, &z);
            }
            b[r] = self.values[*i];
        }
        let sol = a.clone().svd(true, true).solve(&b, 1e-13).map_err(|e| Error::DataQuality(e.to_string()))?;
        let resid = (&a * &sol - &b).norm() / (idx.len() as f64).sqrt();
        let spread = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        if resid > self.fit_tol * spread {
            return Err(Error::DataQuality(format!(
                "phase fit residual {resid:.3e} exceeds {:.1e} of the sampled range",
                self.fit_tol
            )));
        }
        Ok((mono, sol.iter().copied().collect(), radius))
    }
}

impl Phase for SampledPhase {
    fn dim(&self) -> usize {
        self.points[0].len() + 1
    }

    fn derivative(&self, y: &[f64], alpha: &[u32]) -> Result<f64> {
        let m = self.points[0].len();
        let order_s = alpha[m];
        if order_s > 0 {
            let rest = alpha[..m].iter().sum::<u32>();
            return Ok(if order_s == 1 && rest == 0 { self.weight } else { 0.0 });
        }
        let x = &y[..m];
        let (mono, coef, radius) = self.fit(x)?;
        let a = &alpha[..m];
        let order: u32 = a.iter().sum();
        // the monomial z^a has derivative a! at the origin
        let Some(c) = mono.iter().position(|mm| mm.as_slice() == a) else {
            return Ok(0.0);
        };
        let fact: f64 = a.iter().map(|k| (1..=*k).map(f64::from).product::<f64>()).product();
        Ok(coef[c] * fact / radius.powi(order as i32))
    }
}

/// All exponent vectors in `dim` variables with total degree ≤ `degree`.
fn monomials(dim: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|m| {
                let used: u32 = m.iter().sum();
                (0..=degree - used).map(move |e| {
                    let mut m2 = m.clone();
                    m2.push(e);
                    m2
                })
            })
            .collect();
    }
    out.sort_by_key(|m| m.iter().sum::<u32>());
    out
}

/// Set partitions of `0..n` as block lists.
fn set_partitions(n: usize) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    fn rec(i: usize, max: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<Vec<usize>>>) {
        if i == labels.len() {
            let blocks = if labels.is_empty() { 0 } else { max + 1 };
            let mut parts = vec![Vec::new(); blocks];
            for (k, l) in labels.iter().enumerate() {
                parts[*l].push(k);
            }
            out.push(parts);
            return;
        }
        let top = if i == 0 { 0 } else { max + 1 };
        for l in 0..=top {
            labels[i] = l;
            rec(i + 1, max.max(l), labels, out);
        }
    }
    rec(0, 0, &mut labels, &mut out);
    out
}

/// Real coefficients `c_k` with `D[e^{iλg}] e^{−iλg} = Σ_k c_k (iλ)^k` at the U-point `y`.
pub fn phase_expansion(d: &LinearDiffOperator, g: &dyn Phase, y: &[f64]) -> Result<Vec<f64>> {
    let u = d.base_dim + 1;
    if g.dim() != u || y.len() != u {
        return Err(Error::DimensionMismatch {
            expected: u,
            got: g.dim().min(y.len()),
        });
    }
    let n = d.order() as usize;
    let mut c = vec![0.0; n + 1];
    let x = &y[..d.base_dim];
    for t in &d.terms {
        let coeff = t.coeff.value(x);
        // list of axes with repetition, one entry per derivative
        let axes: Vec<usize> = t.alpha.iter().enumerate().flat_map(|(a, k)| std::iter::repeat_n(a, *k as usize)).collect();
        for part in set_partitions(axes.len()) {
            let mut prod = 1.0;
            for block in &part {
                let alpha = multi_index(u, &block.iter().map(|&i| axes[i]).collect::<Vec<_>>());
                prod *= g.derivative(y, &alpha)?;
            }
            c[part.len()] += coeff * prod;
        }
    }
    Ok(c)
}

fn eval_expansion(c: &[f64], lambda: f64) -> Complex<f64> {
    let il = Complex::new(0.0, lambda);
    c.iter().rev().fold(Complex::new(0.0, 0.0), |acc, ck| acc * il + ck)
}

/// Outcome of a λ sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub order: u32,
    pub lambdas: Vec<f64>,
    /// `|D[e^{iλg}] e^{−iλg} − (iλ)^n s_D(dg)|` (max over probe points).
    pub residuals: Vec<f64>,
    /// Log-log slope of the residuals; `None` when they vanish to rounding.
    pub fitted_power: Option<f64>,
    /// `s_D(dg)` at the first probe point.
    pub symbol_value: f64,
    /// `D[e^{iλg}] e^{−iλg} / (iλ)^n` at the largest λ.
    pub leading_coefficient: f64,
    pub leading_rel_error: f64,
}

fn check_lambdas(lambdas: &[f64]) -> Result<()> {
    let lo = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().copied().fold(0.0, f64::max);
    if lambdas.len() < 3 || !(lo > 0.0) || hi / lo < 100.0 {
        return Err(Error::FitQuality(format!(
            "need at least 3 positive λ spanning two decades, got {lambdas:?}"
        )));
    }
    Ok(())
}

fn sweep(d: &LinearDiffOperator, g: &dyn Phase, probes: &[Vec<f64>], lambdas: &[f64], subtract_top: bool) -> Result<ScalingReport> {
    check_lambdas(lambdas)?;
    if probes.is_empty() {
        return Err(Error::Invalid("no probe points".into()));
    }
    let n = d.order();
    let sym = principal_symbol(d);
    let mut residuals = vec![0.0f64; lambdas.len()];
    let mut scale = vec![0.0f64; lambdas.len()];
    let mut first = None;
    for y in probes {
        let c = phase_expansion(d, g, y)?;
        let m = d.base_dim;
        let u = m + 1;
        let dg: Vec<f64> = (0..u).map(|a| g.derivative(y, &multi_index(u, &[a]))).collect::<Result<_>>()?;
        let s = sym.eval(&y[..m], &dg);
        let lead = Complex::new(0.0, 1.0).powu(n) * s;
        for (k, &l) in lambdas.iter().enumerate() {
            let full = eval_expansion(&c, l);
            let top = if subtract_top { lead * l.powi(n as i32) } else { Complex::new(0.0, 0.0) };
            residuals[k] = residuals[k].max((full - top).norm());
            scale[k] = scale[k].max(full.norm().max(top.norm()));
        }
        if first.is_none() {
            let lmax = lambdas.iter().copied().fold(0.0, f64::max);
            let ratio = eval_expansion(&c, lmax) / (Complex::new(0.0, lmax).powu(n));
            first = Some((s, ratio.re));
        }
    }
    let exact = residuals.iter().zip(&scale).all(|(r, s)| *r <= 64.0 * f64::EPSILON * s.max(f64::MIN_POSITIVE));
    let fitted_power = (!exact).then(|| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = lambdas
            .iter()
            .zip(&residuals)
            .filter(|(_, r)| **r > 0.0)
            .map(|(l, r)| (*l, *r))
            .unzip();
        numeric::loglog_slope(&xs, &ys)
    });
    let (symbol_value, leading_coefficient) = first.unwrap_or((0.0, 0.0));
    let leading_rel_error = (leading_coefficient - symbol_value).abs() / symbol_value.abs().max(f64::MIN_POSITIVE);
    Ok(ScalingReport {
        order: n,
        lambdas: lambdas.to_vec(),
        residuals,
        fitted_power,
        symbol_value,
        leading_coefficient,
        leading_rel_error,
    })
}

/// Sweeps λ for the phase `g` at the U-point `y`.
pub fn symbol_scaling_check(d: &LinearDiffOperator, g: &dyn Phase, y: &[f64], lambdas: &[f64]) -> Result<ScalingReport> {
    sweep(d, g, &[y.to_vec()], lambdas, true)
}

/// Sweeps λ for an action `S` (as the U-phase `S + w s`) over several probe points.
///
/// The residual is the whole of `D[e^{iλS}] e^{−iλS}`. When `S` solves the
/// characteristic equation of `D` the order-`n` term cancels and the fitted power
/// drops to `n − 1`; for a generic `S` it stays at `n`.
pub fn eikonal_residual(d: &LinearDiffOperator, s: &dyn Phase, probes: &[Vec<f64>], lambdas: &[f64]) -> Result<ScalingReport> {
    sweep(d, s, probes, lambdas, false)
}
