//! The characteristic quotient on a section and the phase space `Ch / G'`.
//!
//! A characteristic is represented by its crossing with a section `x^axis = value`.
//! Forgetting `s` at the crossing gives a point of phase space; the contact
//! hyperplanes become the connection `ds = ⟨p/p_s, dx⟩` on the section, whose
//! holonomy around a loop is its symplectic area.

use serde::{Deserialize, Serialize};

use crate::bundle::CharacteristicClass;
use crate::contact::{characteristic_field, propagate_to_section, CharacteristicState, SymbolSurface};
use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;
use crate::manifold::norm;
use crate::numeric;

/// Time slice `x^axis = value` used to pick representatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub axis: usize,
    pub value: f64,
    /// Largest strip parameter span searched for the crossing.
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    /// Remaining base coordinates, then `p/p_s` on those axes (or `p/‖p‖` when lightlike).
    pub coords: Vec<f64>,
    pub branch: CharacteristicClass,
    /// Unit `(p_rest, p_s)` after orienting the characteristic forward in the section axis.
    pub direction: Vec<f64>,
}

impl PhasePoint {
    /// Angle `atan2(p_s, p_1)` on the 1+1 cylinder.
    pub fn cylinder_angle(&self) -> Option<f64> {
        (self.direction.len() == 2).then(|| self.direction[1].atan2(self.direction[0]))
    }
}

fn rest<'a>(v: &'a [f64], axis: usize) -> impl Iterator<Item = f64> + 'a {
    v.iter().enumerate().filter(move |(k, _)| *k != axis).map(|(_, c)| *c)
}

/// Flows `state` to `section` and forgets `s`.
///
/// The contact element is oriented so that it moves forward along the section
/// axis; the branch is then the sign of `p_s`.
pub fn to_phase(e: &SymbolSurface, state: &CharacteristicState, section: &Section, integ: &IntegratorConfig) -> Result<PhasePoint> {
    let v = characteristic_field(e, state)?;
    let mut st = state.clone();
    if v.dx[section.axis] < 0.0 {
        st.p.iter_mut().for_each(|c| *c = -*c);
        st.p_s = -st.p_s;
    }
    let on = propagate_to_section(e, &st, section.axis, section.value, section.budget, integ)?;
    let xs: Vec<f64> = rest(&on.x, section.axis).collect();
    let ps: Vec<f64> = rest(&on.p, section.axis).collect();
    let lightlike = on.p_s.abs() <= 1e-12 * norm(&on.p);
    let mut coords = xs;
    let (branch, mom): (CharacteristicClass, Vec<f64>) = if lightlike {
        let n = norm(&ps).max(f64::MIN_POSITIVE);
        (CharacteristicClass::Lightlike, ps.iter().map(|c| c / n).collect())
    } else if on.p_s > 0.0 {
        (CharacteristicClass::Particle, ps.iter().map(|c| c / on.p_s).collect())
    } else {
        (CharacteristicClass::Antiparticle, ps.iter().map(|c| c / on.p_s).collect())
    };
    coords.extend(mom);
    let mut direction = ps.clone();
    direction.push(if lightlike { 0.0 } else { on.p_s });
    let n = norm(&direction);
    direction.iter_mut().for_each(|c| *c /= n);
    Ok(PhasePoint { coords, branch, direction })
}

/// Coordinates in which a holonomy loop is drawn (all on a section with one free axis for the
/// non-canonical charts).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chart", rename_all = "lowercase")]
pub enum PhaseChart {
    /// `(x, ξ)` with `ξ = p/p_s`.
    Canonical,
    /// `(x, u)` with `ξ = m u / √(1 − u²/c²)`; `|u| = c` is deleted.
    Velocity { mass: f64, c: f64 },
    /// `(x, θ)` with `(p_x, p_s) ∝ (cos θ, sin θ)`; `sin θ = 0` is deleted.
    Cylinder,
}

impl PhaseChart {
    /// `ξ` and `dξ/dw` for the momentum-like chart coordinate `w`.
    fn momentum(&self, w: f64) -> Result<(f64, f64)> {
        match *self {
            PhaseChart::Canonical => Ok((w, 1.0)),
            PhaseChart::Velocity { mass, c } => {
                let b = w / c;
                if b.abs() >= 1.0 - 1e-12 {
                    return Err(Error::DeletedSet(format!("velocity {w} reaches the light cone |u| = {c}")));
                }
                let g = 1.0 / (1.0 - b * b).sqrt();
                Ok((mass * w * g, mass * g * g * g))
            }
            PhaseChart::Cylinder => {
                let s = w.sin();
                if s.abs() <= 1e-12 {
                    return Err(Error::DeletedSet(format!("angle {w} lies on the p_s = 0 boundary")));
                }
                Ok((w.cos() / s, -1.0 / (s * s)))
            }
        }
    }

    /// Sign of `p_s` for the momentum-like coordinate; constant for the canonical charts.
    fn fiber_sign(&self, w: f64) -> f64 {
        match self {
            PhaseChart::Cylinder => w.sin().signum(),
            _ => 1.0,
        }
    }

    /// Symplectic density `dξ/dw` relative to the chart area element.
    pub fn density(&self, w: f64) -> Result<f64> {
        self.momentum(w).map(|(_, d)| d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolonomyReport {
    /// `Δs = ∮ ⟨ξ, dx⟩`; loops counter-clockwise in `(ξ, x)` have positive holonomy.
    pub delta_s: f64,
    /// `Δs` reduced mod the fiber period (equal to `delta_s` for a line fiber).
    pub reduced: f64,
    /// Quadrature nodes per edge.
    pub nodes: usize,
}

/// Horizontal lift of a closed polygon drawn in `chart` on a section with `2k` coordinates
/// `(x_1..x_k, w_1..w_k)`.
pub fn holonomy(e: &SymbolSurface, chart: PhaseChart, vertices: &[Vec<f64>], nodes: usize) -> Result<HolonomyReport> {
    if vertices.len() < 2 {
        return Err(Error::Invalid("a loop needs at least two vertices".into()));
    }
    let dim = vertices[0].len();
    if !dim.is_multiple_of(2) || vertices.iter().any(|v| v.len() != dim) {
        return Err(Error::Invalid("loop vertices must be (x…, w…) pairs of equal length".into()));
    }
    let k = dim / 2;
    if k != 1 && chart != PhaseChart::Canonical {
        return Err(Error::Invalid("velocity and cylinder charts need a single section axis".into()));
    }
    if k + 1 != e.dim() {
        return Err(Error::DimensionMismatch {
            expected: 2 * (e.dim() - 1),
            got: dim,
        });
    }
    let sign0 = chart.fiber_sign(vertices[0][k]);
    let (gx, gw) = numeric::gauss_legendre(nodes.max(1));
    let mut total = 0.0;
    for i in 0..vertices.len() {
        let a = &vertices[i];
        let b = &vertices[(i + 1) % vertices.len()];
        if chart.fiber_sign(b[k]) != sign0 {
            return Err(Error::DeletedSet("loop crosses between branches".into()));
        }
        for (t, w) in gx.iter().zip(&gw) {
            let tt = 0.5 * (t + 1.0);
            let z: Vec<f64> = a.iter().zip(b).map(|(p, q)| p + tt * (q - p)).collect();
            let mut pdx = 0.0;
            for j in 0..k {
                let (xi, _) = chart.momentum(z[k + j])?;
                pdx += xi * (b[j] - a[j]);
            }
            total += 0.5 * w * pdx;
        }
        // vertices themselves must avoid the deleted set too
        chart.momentum(b[k..].first().copied().unwrap_or(0.0))?;
    }
    Ok(HolonomyReport {
        delta_s: total,
        reduced: e.fiber().reduce(total),
        nodes,
    })
}

/// Axis-aligned square of side `eps` centred at `(x, w)`, counter-clockwise in `(w, x)`.
pub fn square_loop(x: f64, w: f64, eps: f64) -> Vec<Vec<f64>> {
    let h = 0.5 * eps;
    vec![
        vec![x - h, w - h],
        vec![x - h, w + h],
        vec![x + h, w + h],
        vec![x + h, w - h],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{propagate, FiberGroup};
    use crate::scenarios;

    fn t0() -> Section {
        Section {
            axis: 0,
            value: 0.0,
            budget: 100.0,
        }
    }

    #[test]
    fn free_particle_maps_back_along_flow() {
        let e = scenarios::free_particle(1.0);
        let px = 0.8;
        let st = CharacteristicState::new(vec![2.0, 1.0], 0.3, vec![-0.32, px], 1.0);
        let pt = to_phase(&e, &st, &t0(), &Default::default()).unwrap();
        assert_eq!(pt.branch, CharacteristicClass::Particle);
        assert!((pt.coords[0] - (1.0 - px * 2.0)).abs() < 1e-10);
        assert!((pt.coords[1] - px).abs() < 1e-12);
    }

    #[test]
    fn representative_forgets_strip_time_and_fiber() {
        let e = scenarios::oscillator(1.0, 1.0);
        let st = CharacteristicState::new(vec![0.5, 0.2], 0.0, vec![-(0.125 + 0.02), 0.5], 1.0);
        let later = propagate(&e, &st, &[0.0, 1.7], &Default::default()).unwrap();
        let mut shifted = later.last().clone();
        shifted.s += 4.0;
        let a = to_phase(&e, &st, &t0(), &Default::default()).unwrap();
        let b = to_phase(&e, &shifted, &t0(), &Default::default()).unwrap();
        for (u, v) in a.coords.iter().zip(&b.coords) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn unit_square_has_unit_holonomy() {
        let e = scenarios::free_particle(1.0);
        let sq = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]];
        let r = holonomy(&e, PhaseChart::Canonical, &sq, 4).unwrap();
        assert!((r.delta_s - 1.0).abs() < 1e-12);
        let flat = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]];
        assert!(holonomy(&e, PhaseChart::Canonical, &flat, 4).unwrap().delta_s.abs() <= 1e-10);
    }

    #[test]
    fn circle_fiber_reports_reduced_holonomy() {
        let chart = crate::manifold::Chart::symmetric(&["t", "x"], 10.0);
        let sym = crate::contact::ExprSymbol::parse(chart.axis_names(), "p_s*p_t + p_x^2/2", &Default::default()).unwrap();
        let e = SymbolSurface::new(chart, FiberGroup::Circle { period: 1.5 }, std::sync::Arc::new(sym), 2).unwrap();
        let sq = vec![vec![0.0, 0.0], vec![0.0, 2.0], vec![1.0, 2.0], vec![1.0, 0.0]];
        let r = holonomy(&e, PhaseChart::Canonical, &sq, 4).unwrap();
        assert!((r.delta_s - 2.0).abs() < 1e-12);
        assert!((r.reduced - 0.5).abs() < 1e-12);
    }

    #[test]
    fn deleted_set_is_refused() {
        let e = scenarios::free_particle(1.0);
        let bad = square_loop(0.0, 0.0, 0.5);
        assert!(matches!(holonomy(&e, PhaseChart::Cylinder, &bad, 4), Err(Error::DeletedSet(_))));
        let fast = square_loop(0.0, 0.9, 0.5);
        assert!(matches!(
            holonomy(&e, PhaseChart::Velocity { mass: 1.0, c: 1.0 }, &fast, 4),
            Err(Error::DeletedSet(_))
        ));
    }

    #[test]
    fn velocity_chart_density_is_m_gamma_cubed() {
        let ch = PhaseChart::Velocity { mass: 2.0, c: 1.0 };
        let u: f64 = 0.6;
        let g = 1.0 / (1.0 - u * u).sqrt();
        assert!((ch.density(u).unwrap() - 2.0 * g.powi(3)).abs() < 1e-12);
        let e = scenarios::free_particle(1.0);
        let eps = 0.01;
        let r = holonomy(&e, ch, &square_loop(0.0, u, eps), 8).unwrap();
        assert!((r.delta_s / (eps * eps * ch.density(u).unwrap()) - 1.0).abs() < 1e-3);
    }
}
