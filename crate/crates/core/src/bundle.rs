//! Connections on `U = M × fiber`, wave diagrams, Legendre duality, gauge changes and the
//! charged relativistic particle.
//!
//! A connection is `α = ds + A_μ dx^μ` with curvature `F = dA`. The wave diagram at
//! `x` is the section of the Monge cone by `α = 1`; changing `A` by `dχ` is the same
//! hypersurface `E` seen in the shifted fiber coordinate `s' = s − χ`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contact::{characteristic_field, CharacteristicState, FiberGroup, Strip, Symbol, SymbolGradient, SymbolSurface};
use crate::error::{Error, Result};
use crate::manifold::{dot, norm, Chart, ScalarField};
use crate::numeric;

/// Local connection potential `A_μ(x)`; `α = ds + A_μ dx^μ`.
#[derive(Debug, Clone)]
pub struct ConnectionData {
    potential: Vec<ScalarField>,
}

impl ConnectionData {
    pub fn new(potential: Vec<ScalarField>) -> Result<ConnectionData> {
        let dim = potential.len();
        if dim == 0 {
            return Err(Error::Invalid("connection needs at least one component".into()));
        }
        if let Some(bad) = potential.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(ConnectionData { potential })
    }

    /// The flat connection `α = ds`.
    pub fn zero(dim: usize) -> ConnectionData {
        ConnectionData {
            potential: (0..dim).map(|_| ScalarField::constant(dim, 0.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.potential
    }

    pub fn potential(&self, x: &[f64]) -> Vec<f64> {
        self.potential.iter().map(|a| a.value(x)).collect()
    }

    /// `α(v, v_s) = v_s + A(x)·v`.
    pub fn alpha(&self, x: &[f64], v: &[f64], v_s: f64) -> f64 {
        v_s + dot(&self.potential(x), v)
    }

    /// Row-major `F_{μν} = ∂_μ A_ν − ∂_ν A_μ` from the components' gradients.
    pub fn curvature(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let grads: Vec<Vec<f64>> = self.potential.iter().map(|a| a.gradient(x)).collect();
        let mut f = vec![0.0; n * n];
        for mu in 0..n {
            for nu in 0..n {
                // grads[nu][mu] = ∂_μ A_ν
                f[mu * n + nu] = grads[nu][mu] - grads[mu][nu];
            }
        }
        f
    }

    /// Curvature from central differences of the potential values alone.
    pub fn fd_curvature(&self, x: &[f64], h: f64) -> Vec<f64> {
        let n = self.dim();
        let mut d = vec![vec![0.0; n]; n]; // d[nu][mu] = ∂_μ A_ν
        let mut y = x.to_vec();
        for mu in 0..n {
            y[mu] = x[mu] + h;
            let ap = self.potential(&y);
            y[mu] = x[mu] - h;
            let am = self.potential(&y);
            y[mu] = x[mu];
            for nu in 0..n {
                d[nu][mu] = (ap[nu] - am[nu]) / (2.0 * h);
            }
        }
        let mut f = vec![0.0; n * n];
        for mu in 0..n {
            for nu in 0..n {
                f[mu * n + nu] = d[nu][mu] - d[mu][nu];
            }
        }
        f
    }

    /// Largest cyclic sum `∂_λ F_{μν} + ∂_μ F_{νλ} + ∂_ν F_{λμ}` over all axis triples.
    pub fn bianchi_defect(&self, x: &[f64], h: f64) -> f64 {
        let n = self.dim();
        if n < 3 {
            return 0.0;
        }
        let mut df = vec![vec![0.0; n * n]; n];
        let mut y = x.to_vec();
        for l in 0..n {
            y[l] = x[l] + h;
            let fp = self.curvature(&y);
            y[l] = x[l] - h;
            let fm = self.curvature(&y);
            y[l] = x[l];
            for k in 0..n * n {
                df[l][k] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
        let mut worst: f64 = 0.0;
        for l in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    let c = df[l][mu * n + nu] + df[mu][nu * n + l] + df[nu][l * n + mu];
                    worst = worst.max(c.abs());
                }
            }
        }
        worst
    }

    /// `A + dχ`.
    pub fn shifted(&self, chi: &ScalarField) -> ConnectionData {
        let n = self.dim();
        let potential = (0..n)
            .map(|mu| {
                let a = self.potential[mu].clone();
                let c = chi.clone();
                let c2 = chi.clone();
                let a2 = a.clone();
                ScalarField::from_fn(n, move |x| a.value(x) + c.gradient(x)[mu]).with_grad(move |x| {
                    let h = c2.hessian(x);
                    a2.gradient(x).iter().enumerate().map(|(j, g)| g + h[mu * n + j]).collect()
                })
            })
            .collect();
        ConnectionData { potential }
    }
}

/// One point of a wave diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    /// Endpoint in `T_xM` with `α = 1`.
    pub v: Vec<f64>,
    /// Sign of `p_s` of the generating covector (after time orientation, if any).
    pub branch: i8,
    /// Generating on-shell covector `(p, p_s)`.
    pub p: Vec<f64>,
    pub p_s: f64,
}

/// Sampled level set `{Λ_x = 1}` plus the lightlike rays the section `α = 1` misses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveDiagram {
    pub base_point: Vec<f64>,
    pub points: Vec<DiagramPoint>,
    /// Monge-cone rays with `α = 0`, reported in `M` components.
    pub lightlike: Vec<Vec<f64>>,
}

impl WaveDiagram {
    pub fn branch_points(&self, branch: i8) -> Vec<Vec<f64>> {
        self.points.iter().filter(|p| p.branch == branch).map(|p| p.v.clone()).collect()
    }

    pub fn all_points(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.v.clone()).collect()
    }

    /// Distance from `v` to the polyline through consecutive samples of `branch`.
    pub fn distance_to_branch(&self, v: &[f64], branch: i8) -> f64 {
        let pts = self.branch_points(branch);
        let mut best = f64::INFINITY;
        for w in pts.windows(2) {
            best = best.min(segment_distance(v, &w[0], &w[1]));
        }
        if pts.len() == 1 {
            best = numeric::distance(v, &pts[0]);
        }
        best
    }
}

fn segment_distance(v: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let av: Vec<f64> = v.iter().zip(a).map(|(x, y)| x - y).collect();
    let l2 = dot(&ab, &ab);
    let t = if l2 == 0.0 { 0.0 } else { (dot(&av, &ab) / l2).clamp(0.0, 1.0) };
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(x, d)| x + t * d).collect();
    numeric::distance(v, &proj)
}

/// Unit directions used to sample covectors in `T*_xM`.
pub fn sample_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let th = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci points on the sphere, first three axes; remaining axes zero
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    let mut v = vec![0.0; dim];
                    v[0] = r * phi.cos();
                    v[1] = r * phi.sin();
                    v[2] = z;
                    v
                })
                .collect()
        }
    }
}

/// Log-spaced positive scale grid for on-shell root scans.
fn scale_grid() -> Vec<f64> {
    let n = 600;
    (0..=n).map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / n as f64)).collect()
}

/// Monge-cone rays at `x` as `(covector, velocity in M, α)`.
fn cone_rays(e: &SymbolSurface, conn: &ConnectionData, x: &[f64], n_samples: usize) -> Vec<(Vec<f64>, f64, Vec<f64>, f64)> {
    let dim = e.dim();
    let grid = scale_grid();
    let fiber_signs: &[f64] = if e.degree().is_multiple_of(2) { &[1.0] } else { &[1.0, -1.0] };
    let mut rays = Vec::new();
    for omega in sample_directions(dim, n_samples) {
        for &ps in fiber_signs {
            let f = |mu: f64| {
                let p: Vec<f64> = omega.iter().map(|w| w * mu).collect();
                e.value(x, &p, ps)
            };
            for mu in numeric::roots_on_grid(f, &grid) {
                let p: Vec<f64> = omega.iter().map(|w| w * mu).collect();
                if e.check_nondegenerate(x, &p, ps).is_err() {
                    continue;
                }
                let g = e.gradient(x, &p, ps);
                let a = conn.alpha(x, &g.dp, -g.dps);
                rays.push((p, ps, g.dp, a));
            }
        }
    }
    rays
}

/// Samples the wave diagram of `E` at `x` under connection `conn`.
///
/// With `time_axis` set, covectors are oriented so that the ray points forward
/// along that axis before the branch sign is read off `p_s`.
pub fn wave_diagram(
    e: &SymbolSurface,
    conn: &ConnectionData,
    x: &[f64],
    n_samples: usize,
    time_axis: Option<usize>,
) -> Result<WaveDiagram> {
    e.chart().check_dim(x.len())?;
    if conn.dim() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            got: conn.dim(),
        });
    }
    let mut points = Vec::new();
    let mut lightlike = Vec::new();
    for (p, ps, v, a) in cone_rays(e, conn, x, n_samples) {
        if a.abs() <= 1e-12 * norm(&v).max(1e-300) {
            lightlike.push(v);
            continue;
        }
        let mut sign = if ps > 0.0 { 1.0 } else { -1.0 };
        if let Some(t) = time_axis {
            if v[t] < 0.0 {
                sign = -sign;
            }
        }
        points.push(DiagramPoint {
            v: v.iter().map(|c| c / a).collect(),
            branch: sign as i8,
            p,
            p_s: ps,
        });
    }
    if points.is_empty() {
        return Err(Error::EmptyDiagram { x: x.to_vec() });
    }
    Ok(WaveDiagram {
        base_point: x.to_vec(),
        points,
        lightlike,
    })
}

/// Supporting covectors of a sampled hypersurface.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSurface {
    /// `(index of the source sample, covector)`.
    pub points: Vec<(usize, Vec<f64>)>,
    /// Samples whose tangent plane could not be estimated.
    pub skipped: Vec<usize>,
}

impl DualSurface {
    pub fn covectors(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|(_, p)| p.clone()).collect()
    }
}

/// For each diagram point `v`, the covector `p` with `p(v) = 1` vanishing on the
/// tangent plane at `v`.
pub fn legendre_dual(diagram: &WaveDiagram) -> DualSurface {
    polar_dual(&diagram.all_points())
}

/// Polar dual of a sampled hypersurface around the origin.
///
/// Tangent planes come from local least squares over the `2·dim` nearest samples.
pub fn polar_dual(points: &[Vec<f64>]) -> DualSurface {
    let mut out = DualSurface {
        points: Vec::new(),
        skipped: Vec::new(),
    };
    let Some(dim) = points.first().map(|p| p.len()) else {
        return out;
    };
    let k = 2 * dim;
    if points.len() < k + 1 {
        out.skipped = (0..points.len()).collect();
        return out;
    }
    for (i, v) in points.iter().enumerate() {
        match tangent_normal(points, i, k) {
            Some(n) => {
                let pv = dot(&n, v);
                if pv.abs() < 1e-12 * norm(v) {
                    out.skipped.push(i);
                } else {
                    out.points.push((i, n.iter().map(|c| c / pv).collect()));
                }
            }
            None => out.skipped.push(i),
        }
    }
    out
}

fn tangent_normal(points: &[Vec<f64>], i: usize, k: usize) -> Option<Vec<f64>> {
    let v = &points[i];
    let dim = v.len();
    let mut idx: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, q)| (numeric::distance(v, q), j))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nbrs: Vec<&Vec<f64>> = idx.iter().take(k).map(|(_, j)| &points[*j]).collect();
    if nbrs.len() < k || idx[0].0 == 0.0 {
        return None;
    }
    // first pass: principal directions of the neighbourhood
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for q in nbrs.iter() {
        let d = DVector::from_iterator(dim, q.iter().zip(v).map(|(a, b)| a - b));
        cov += &d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let frame: Vec<DVector<f64>> = order.iter().map(|&c| eig.eigenvectors.column(c).into_owned()).collect();
    let normal0 = &frame[dim - 1];
    // second pass: fit normal offset as a polynomial in tangent coordinates
    let tdim = dim - 1;
    let monomials = local_monomials(tdim, nbrs.len() + 1);
    let rows = nbrs.len() + 1;
    let mut a = DMatrix::<f64>::zeros(rows, monomials.len());
    let mut b = DVector::<f64>::zeros(rows);
    let mut pts: Vec<Vec<f64>> = vec![v.clone()];
    pts.extend(nbrs.iter().map(|q| (*q).clone()));
    let scale = idx[k - 1].0;
    for (r, q) in pts.iter().enumerate() {
        let d = DVector::from_iterator(dim, q.iter().zip(v).map(|(a, b)| (a - b) / scale));
        let u: Vec<f64> = (0..tdim).map(|c| frame[c].dot(&d)).collect();
        for (c, m) in monomials.iter().enumerate() {
            a[(r, c)] = m.iter().zip(&u).map(|(e, x)| x.powi(*e as i32)).product();
        }
        b[r] = normal0.dot(&d);
    }
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    // gradient of the fitted offset at u=0 from the linear monomials
    let mut n = normal0.clone();
    for (c, m) in monomials.iter().enumerate() {
        if m.iter().sum::<u32>() == 1 {
            let axis = m.iter().position(|e| *e == 1).unwrap_or(0);
            n -= &frame[axis] * sol[c];
        }
    }
    let n = n.normalize();
    Some(n.iter().copied().collect())
}

/// Monomial exponents in `tdim` variables, highest total degree the sample count supports (≤ 3).
fn local_monomials(tdim: usize, samples: usize) -> Vec<Vec<u32>> {
    let all = |deg: u32| -> Vec<Vec<u32>> {
        let mut out = vec![vec![0u32; tdim]];
        for d in 1..=deg {
            let mut cur: Vec<Vec<u32>> = vec![vec![]];
            for _ in 0..tdim {
                let mut next = Vec::new();
                for c in &cur {
                    let used: u32 = c.iter().sum();
                    for e in 0..=(d - used) {
                        let mut c2 = c.clone();
                        c2.push(e);
                        next.push(c2);
                    }
                }
                cur = next;
            }
            out.extend(cur.into_iter().filter(|c| c.iter().sum::<u32>() == d));
        }
        out
    };
    let mut best = all(1);
    for deg in 2..=3 {
        let m = all(deg);
        if m.len() <= samples {
            best = m;
        }
    }
    best
}

/// `E` seen in the shifted fiber coordinate `s' = s − χ`: `G'(x, p, p_s) = G(x, p + p_s dχ, p_s)`.
pub struct GaugeShifted {
    inner: Arc<dyn Symbol>,
    chi: ScalarField,
}

impl Symbol for GaugeShifted {
    fn base_dim(&self) -> usize {
        self.inner.base_dim()
    }

    fn value(&self, x: &[f64], p: &[f64], p_s: f64) -> f64 {
        let dchi = self.chi.gradient(x);
        let q: Vec<f64> = p.iter().zip(&dchi).map(|(a, b)| a + p_s * b).collect();
        self.inner.value(x, &q, p_s)
    }

    fn gradient(&self, x: &[f64], p: &[f64], p_s: f64) -> SymbolGradient {
        let n = x.len();
        let dchi = self.chi.gradient(x);
        let hess = self.chi.hessian(x);
        let q: Vec<f64> = p.iter().zip(&dchi).map(|(a, b)| a + p_s * b).collect();
        let g = self.inner.gradient(x, &q, p_s);
        let dx = (0..n)
            .map(|k| g.dx[k] + p_s * (0..n).map(|j| hess[j * n + k] * g.dp[j]).sum::<f64>())
            .collect();
        let dps = g.dps + dot(&dchi, &g.dp);
        SymbolGradient { dx, dp: g.dp, dps }
    }
}

/// Changes the connection by `dχ`: returns `E` in the coordinate `s' = s − χ` and `A + dχ`.
pub fn gauge_transform(e: &SymbolSurface, conn: &ConnectionData, chi: &ScalarField) -> Result<(SymbolSurface, ConnectionData)> {
    if chi.dim() != e.dim() || conn.dim() != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: e.dim(),
            got: chi.dim().min(conn.dim()),
        });
    }
    let sym = GaugeShifted {
        inner: e.symbol().clone(),
        chi: chi.clone(),
    };
    let shifted = SymbolSurface::new(e.chart().clone(), e.fiber(), Arc::new(sym), e.degree())?.with_tol_onshell(e.tol_onshell());
    Ok((shifted, conn.shifted(chi)))
}

/// The same contact element in the shifted coordinates: `s' = s − χ`, `p' = p − p_s dχ`.
pub fn gauge_transform_state(state: &CharacteristicState, chi: &ScalarField) -> CharacteristicState {
    let dchi = chi.gradient(&state.x);
    CharacteristicState {
        x: state.x.clone(),
        s: state.s - chi.value(&state.x),
        p: state.p.iter().zip(&dchi).map(|(a, b)| a - state.p_s * b).collect(),
        p_s: state.p_s,
        tau: state.tau,
    }
}

/// The three classes of characteristics on a Lorentzian-cone bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharacteristicClass {
    Particle,
    Antiparticle,
    Lightlike,
}

fn class_of(e: &SymbolSurface, st: &CharacteristicState, time_axis: usize) -> Result<CharacteristicClass> {
    let v = characteristic_field(e, st)?;
    let scale = norm(&st.p).max(st.p_s.abs());
    if st.p_s.abs() <= 1e-12 * scale {
        return Ok(CharacteristicClass::Lightlike);
    }
    let forward = v.dx[time_axis] >= 0.0;
    Ok(if (st.p_s > 0.0) == forward {
        CharacteristicClass::Particle
    } else {
        CharacteristicClass::Antiparticle
    })
}

/// Classifies a strip by the sign of `p_s` once the strip is oriented forward in time.
pub fn classify_characteristic(e: &SymbolSurface, strip: &Strip, time_axis: usize) -> Result<CharacteristicClass> {
    let first = class_of(e, strip.first(), time_axis)?;
    for st in &strip.states[1..] {
        let c = class_of(e, st, time_axis)?;
        if c != first {
            return Err(Error::Consistency(format!(
                "class changes from {first:?} to {c:?} at tau={}",
                st.tau
            )));
        }
    }
    Ok(first)
}

/// Null-cone symbol of a Kaluza–Klein metric on `U` with spacelike fiber:
/// `G = g^{μν} π_μ π_ν + m² c² p_s²`, `π = p + e A p_s`.
pub struct MinimalCoupling {
    inverse_metric: Vec<f64>,
    charge: f64,
    potential: Vec<ScalarField>,
    mass_term: f64,
}

impl MinimalCoupling {
    fn kinetic(&self, x: &[f64], p: &[f64], p_s: f64) -> (Vec<f64>, Vec<f64>) {
        let n = p.len();
        let pi: Vec<f64> = (0..n).map(|k| p[k] + self.charge * self.potential[k].value(x) * p_s).collect();
        let gpi: Vec<f64> = (0..n)
            .map(|r| (0..n).map(|c| self.inverse_metric[r * n + c] * pi[c]).sum())
            .collect();
        (pi, gpi)
    }
}

impl Symbol for MinimalCoupling {
    fn base_dim(&self) -> usize {
        self.potential.len()
    }

    fn value(&self, x: &[f64], p: &[f64], p_s: f64) -> f64 {
        let (pi, gpi) = self.kinetic(x, p, p_s);
        dot(&pi, &gpi) + self.mass_term * p_s * p_s
    }

    fn gradient(&self, x: &[f64], p: &[f64], p_s: f64) -> SymbolGradient {
        let n = p.len();
        let (_, gpi) = self.kinetic(x, p, p_s);
        let a: Vec<f64> = self.potential.iter().map(|f| f.value(x)).collect();
        let grads: Vec<Vec<f64>> = self.potential.iter().map(|f| f.gradient(x)).collect();
        let dx = (0..n)
            .map(|k| 2.0 * self.charge * p_s * (0..n).map(|nu| gpi[nu] * grads[nu][k]).sum::<f64>())
            .collect();
        SymbolGradient {
            dx,
            dp: gpi.iter().map(|v| 2.0 * v).collect(),
            dps: 2.0 * self.charge * dot(&gpi, &a) + 2.0 * self.mass_term * p_s,
        }
    }
}

/// Parameters of the charged relativistic particle.
#[derive(Debug, Clone)]
pub struct RelativisticParams {
    pub mass: f64,
    pub charge: f64,
    /// Speed of light in chart units; enters the rest-mass term `m² c²`.
    pub c: f64,
    /// Constant metric `g_{μν}` on `M`, row-major.
    pub metric: Vec<f64>,
    /// Electromagnetic potential; the connection is `charge · A`.
    pub potential: Vec<ScalarField>,
}

/// Builds `E` from the light cones of a metric on `U` whose fiber direction is
/// spacelike, together with the orthogonal-complement connection `α = ds + eA`.
pub fn relativistic_scenario(chart: Chart, params: &RelativisticParams) -> Result<(SymbolSurface, ConnectionData)> {
    let n = chart.dim();
    if params.metric.len() != n * n || params.potential.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: params.potential.len(),
        });
    }
    if !(params.mass >= 0.0 && params.c > 0.0) {
        return Err(Error::Invalid("mass must be non-negative and c positive".into()));
    }
    let g = DMatrix::from_row_slice(n, n, &params.metric);
    if (&g - g.transpose()).amax() > 1e-12 {
        return Err(Error::Invalid("metric must be symmetric".into()));
    }
    let eig = g.clone().symmetric_eigen();
    let negative = eig.eigenvalues.iter().filter(|v| **v < 0.0).count();
    let zero = eig.eigenvalues.iter().any(|v| v.abs() < 1e-14);
    if negative != 1 || zero {
        return Err(Error::Invalid(format!(
            "metric is not Lorentzian: eigenvalues {:?}",
            eig.eigenvalues.as_slice()
        )));
    }
    let inv = g.try_inverse().ok_or_else(|| Error::Invalid("singular metric".into()))?;
    let inverse_metric: Vec<f64> = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| inv[(r, c)]).collect();
    let sym = MinimalCoupling {
        inverse_metric,
        charge: params.charge,
        potential: params.potential.clone(),
        mass_term: (params.mass * params.c).powi(2),
    };
    let e = SymbolSurface::new(chart, FiberGroup::Line, Arc::new(sym), 2)?;
    let conn = ConnectionData::new(params.potential.iter().map(|a| a.scale(params.charge)).collect())?;
    Ok((e, conn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn euclidean_diagram_is_unit_circle() {
        let e = scenarios::eikonal_plane();
        let d = wave_diagram(&e, &ConnectionData::zero(2), &[0.3, 0.1], 64, None).unwrap();
        assert_eq!(d.points.len(), 64);
        for p in &d.points {
            assert!((norm(&p.v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_lightlike_is_empty_diagram() {
        // G = p_x p_y has only p_s-independent rays; α(v)= -∂G/∂p_s = 0 always
        let chart = Chart::symmetric(&["x", "y"], 10.0);
        let sym = crate::contact::ExprSymbol::parse(chart.axis_names(), "p_x*p_y + p_s^2 - p_s^2", &Default::default()).unwrap();
        let e = SymbolSurface::new(chart, FiberGroup::Line, Arc::new(sym), 2).unwrap();
        assert!(matches!(
            wave_diagram(&e, &ConnectionData::zero(2), &[0.0, 0.0], 16, None),
            Err(Error::EmptyDiagram { .. })
        ));
    }

    #[test]
    fn constant_gauge_is_identity_and_linear_gauge_is_flat() {
        let chart = Chart::symmetric(&["t", "x"], 10.0);
        let conn = ConnectionData::zero(2);
        let e = scenarios::free_particle_on(chart, 1.0);
        let (_, c1) = gauge_transform(&e, &conn, &ScalarField::constant(2, 3.0)).unwrap();
        assert_eq!(c1.potential(&[0.2, 0.4]), vec![0.0, 0.0]);
        let chi = ScalarField::from_fn(2, |x| x[1]).with_grad(|_| vec![0.0, 1.0]).with_hessian(|_| vec![0.0; 4]);
        let (_, c2) = gauge_transform(&e, &conn, &chi).unwrap();
        assert_eq!(c2.potential(&[0.2, 0.4]), vec![0.0, 1.0]);
        let f = c2.curvature(&[0.2, 0.4]);
        assert!(f.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn curvature_is_antisymmetric_and_matches_fd() {
        let vars: Vec<String> = ["t", "x", "y"].iter().map(|s| s.to_string()).collect();
        let comps = ["x*y", "sin(t) + y^2", "t*x^2"]
            .iter()
            .map(|s| ScalarField::from_expr(crate::expr::Expr::parse(s, &vars, &Default::default()).unwrap(), 3).unwrap())
            .collect();
        let conn = ConnectionData::new(comps).unwrap();
        let x = [0.4, -0.3, 0.8];
        let f = conn.curvature(&x);
        let fd = conn.fd_curvature(&x, 1e-4);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(f[i * 3 + j], -f[j * 3 + i]);
                assert!((f[i * 3 + j] - fd[i * 3 + j]).abs() < 1e-7);
            }
        }
        assert!(conn.bianchi_defect(&x, 1e-4) < 1e-6);
    }

    #[test]
    fn rejects_non_lorentzian_metric() {
        let chart = Chart::symmetric(&["t", "x"], 10.0);
        let params = RelativisticParams {
            mass: 1.0,
            charge: 0.0,
            c: 1.0,
            metric: vec![1.0, 0.0, 0.0, 1.0],
            potential: vec![ScalarField::constant(2, 0.0), ScalarField::constant(2, 0.0)],
        };
        assert!(matches!(relativistic_scenario(chart, &params), Err(Error::Invalid(_))));
    }

    #[test]
    fn minimal_coupling_gradient_matches_differences() {
        let chart = Chart::symmetric(&["t", "x"], 10.0);
        let vars: Vec<String> = ["t", "x"].iter().map(|s| s.to_string()).collect();
        let pot = ["-0.7*x + t^2", "sin(t)*x"]
            .iter()
            .map(|s| ScalarField::from_expr(crate::expr::Expr::parse(s, &vars, &Default::default()).unwrap(), 2).unwrap())
            .collect();
        let params = RelativisticParams {
            mass: 1.3,
            charge: 0.8,
            c: 1.0,
            metric: vec![-1.0, 0.0, 0.0, 1.0],
            potential: pot,
        };
        let (e, _) = relativistic_scenario(chart, &params).unwrap();
        let (x, p, ps) = ([0.3, 0.2], [0.5, -1.1], 0.9);
        let g = e.gradient(&x, &p, ps);
        let fd_p = crate::manifold::central_gradient(|q| e.value(&x, q, ps), &p, None);
        let fd_x = crate::manifold::central_gradient(|y| e.value(y, &p, ps), &x, None);
        for k in 0..2 {
            assert!((g.dp[k] - fd_p[k]).abs() < 1e-8);
            assert!((g.dx[k] - fd_x[k]).abs() < 1e-8);
        }
        let h = 1e-6;
        let fd_s = (e.value(&x, &p, ps + h) - e.value(&x, &p, ps - h)) / (2.0 * h);
        assert!((g.dps - fd_s).abs() < 1e-8);
    }

    #[test]
    fn ellipse_diagram_and_its_dual() {
        let (a, b) = (2.0, 0.5);
        let e = scenarios::anisotropic_eikonal(a, b);
        let d = wave_diagram(&e, &ConnectionData::zero(2), &[0.0, 0.0], 2000, None).unwrap();
        for p in &d.points {
            let r = (p.v[0] / a).powi(2) + (p.v[1] / b).powi(2);
            assert!((r - 1.0).abs() < 1e-10);
        }
        let dual = legendre_dual(&d);
        assert!(dual.skipped.is_empty());
        for q in dual.covectors() {
            let r = (a * q[0]).powi(2) + (b * q[1]).powi(2);
            assert!((r - 1.0).abs() < 1e-5, "{r}");
        }
        let back = polar_dual(&dual.covectors());
        let hd = numeric::hausdorff(&back.covectors(), &d.all_points());
        assert!(hd < 1e-6, "{hd}");
    }

    fn lorentz(m: f64, potential: Vec<ScalarField>) -> (SymbolSurface, ConnectionData) {
        let params = RelativisticParams {
            mass: m,
            charge: 1.0,
            c: 1.0,
            metric: vec![-1.0, 0.0, 0.0, 1.0],
            potential,
        };
        relativistic_scenario(Chart::symmetric(&["t", "x"], 100.0), &params).unwrap()
    }

    #[test]
    fn lorentzian_diagram_is_mass_hyperboloid_even_with_potential() {
        let m = 1.5;
        let pot = vec![ScalarField::from_fn(2, |x| 0.3 * x[1]), ScalarField::from_fn(2, |x| x[0] * x[0])];
        let (e, conn) = lorentz(m, pot);
        let d = wave_diagram(&e, &conn, &[0.4, -0.2], 200, Some(0)).unwrap();
        assert!(!d.points.is_empty());
        for p in &d.points {
            let gvv = -p.v[0] * p.v[0] + p.v[1] * p.v[1];
            assert!((gvv + 1.0 / (m * m)).abs() < 1e-9 * (1.0 + p.v[0] * p.v[0]));
        }
    }

    #[test]
    fn orientation_and_fiber_sign_give_classes() {
        let (e, _) = lorentz(1.0, vec![ScalarField::constant(2, 0.0), ScalarField::constant(2, 0.0)]);
        let taus = crate::contact::linspace(0.0, 1.0, 5);
        let px: f64 = 0.6;
        let pt = (1.0 + px * px).sqrt();
        let run = |p_t: f64, ps: f64| {
            let st = CharacteristicState::new(vec![0.0, 0.0], 0.0, vec![p_t, px], ps);
            let strip = crate::contact::propagate(&e, &st, &taus, &Default::default()).unwrap();
            classify_characteristic(&e, &strip, 0).unwrap()
        };
        assert_eq!(run(-pt, 1.0), CharacteristicClass::Particle);
        assert_eq!(run(pt, 1.0), CharacteristicClass::Antiparticle);
        let (e0, _) = lorentz(0.0, vec![ScalarField::constant(2, 0.0), ScalarField::constant(2, 0.0)]);
        let st = CharacteristicState::new(vec![0.0, 0.0], 0.0, vec![-1.0, 1.0], 0.0);
        let strip = crate::contact::propagate(&e0, &st, &taus, &Default::default()).unwrap();
        assert_eq!(classify_characteristic(&e0, &strip, 0).unwrap(), CharacteristicClass::Lightlike);
    }
}
