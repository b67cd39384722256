//! Noether symmetries `w = v + f ∂_s` and their conserved quantities `Q = ⟨p, v⟩ + p_s f`.
//!
//! The residual checked on `E` is the derivative of `Q` along the characteristic
//! field, `R = −⟨∂G/∂x, v⟩ + ⟨p, Dv·∂G/∂p⟩ + p_s ⟨df, ∂G/∂p⟩`. It vanishes on `E`
//! exactly when the lift of `w` preserves `E`, which in the Lagrangian picture is
//! `v(Λ) + F(v, ·) + df = 0`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::sample_directions;
use crate::contact::{CharacteristicState, Strip, SymbolSurface};
use crate::error::{Error, Result};
use crate::manifold::{dot, norm, ScalarField};
use crate::numeric;

/// A `G`-invariant vector field `v + f ∂_s` on `U`.
#[derive(Debug, Clone)]
pub struct SymmetryField {
    pub name: String,
    pub v: Vec<ScalarField>,
    pub f: ScalarField,
}

impl SymmetryField {
    pub fn new(name: impl Into<String>, v: Vec<ScalarField>, f: ScalarField) -> Result<SymmetryField> {
        let dim = v.len();
        if let Some(bad) = v.iter().map(ScalarField::dim).chain([f.dim()]).find(|d| *d != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad });
        }
        Ok(SymmetryField { name: name.into(), v, f })
    }

    /// Translation `∂_axis` with `f = 0`.
    pub fn translation(dim: usize, axis: usize) -> SymmetryField {
        let v = (0..dim).map(|k| ScalarField::constant(dim, if k == axis { 1.0 } else { 0.0 })).collect();
        SymmetryField {
            name: format!("translation_{axis}"),
            v,
            f: ScalarField::constant(dim, 0.0),
        }
    }

    /// Pure fiber rotation `∂_s`; its charge is `p_s`.
    pub fn fiber(dim: usize) -> SymmetryField {
        SymmetryField {
            name: "fiber".into(),
            v: (0..dim).map(|_| ScalarField::constant(dim, 0.0)).collect(),
            f: ScalarField::constant(dim, 1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn vector(&self, x: &[f64]) -> Vec<f64> {
        self.v.iter().map(|c| c.value(x)).collect()
    }

    /// Sum of two symmetry fields.
    pub fn add(&self, other: &SymmetryField) -> Result<SymmetryField> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(SymmetryField {
            name: format!("{}+{}", self.name, other.name),
            v: self.v.iter().zip(&other.v).map(|(a, b)| a.add(b)).collect(),
            f: self.f.add(&other.f),
        })
    }

    /// The same symmetry seen after the gauge change `s' = s − χ`: `f' = f + dχ(v)`.
    pub fn gauge_shifted(&self, chi: &ScalarField) -> SymmetryField {
        let v = self.v.clone();
        let f = self.f.clone();
        let chi = chi.clone();
        let dim = self.dim();
        SymmetryField {
            name: self.name.clone(),
            v: self.v.clone(),
            f: ScalarField::from_fn(dim, move |x| {
                let vx: Vec<f64> = v.iter().map(|c| c.value(x)).collect();
                f.value(x) + dot(&chi.gradient(x), &vx)
            }),
        }
    }
}

/// `Q = ⟨p, v(x)⟩ + p_s f(x)`.
pub fn conserved_quantity(sym: &SymmetryField, state: &CharacteristicState) -> f64 {
    dot(&state.p, &sym.vector(&state.x)) + state.p_s * sym.f.value(&state.x)
}

/// `Q` at every sample of the strip.
pub fn conserved_series(sym: &SymmetryField, strip: &Strip) -> Vec<f64> {
    strip.states.iter().map(|s| conserved_quantity(sym, s)).collect()
}

/// `max_τ |Q(τ) − Q(0)|` along the strip.
pub fn conservation_drift(sym: &SymmetryField, strip: &Strip) -> f64 {
    let q0 = conserved_quantity(sym, strip.first());
    strip
        .states
        .iter()
        .map(|s| (conserved_quantity(sym, s) - q0).abs())
        .fold(0.0, f64::max)
}

/// Derivative of `Q` along the characteristic field at an on-shell point.
pub fn symmetry_residual(e: &SymbolSurface, sym: &SymmetryField, x: &[f64], p: &[f64], p_s: f64) -> f64 {
    let g = e.gradient(x, p, p_s);
    let v = sym.vector(x);
    let mut r = -dot(&g.dx, &v);
    for (i, vi) in sym.v.iter().enumerate() {
        // (Dv)_{ij} = ∂_j v_i
        r += p[i] * dot(&vi.gradient(x), &g.dp);
    }
    r + p_s * dot(&sym.f.gradient(x), &g.dp)
}

/// Where and how densely to sample `E`.
#[derive(Debug, Clone)]
pub struct SampleRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Number of on-shell samples.
    pub budget: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub max_residual: f64,
    /// Largest `|R| / max(1, ‖(p, p_s)‖^d)`; `R` is homogeneous of degree `d` in the covector.
    pub max_relative: f64,
    pub samples: usize,
    pub is_symmetry: bool,
}

/// Samples on-shell points in `region` and reports the largest symmetry residual.
pub fn check_symmetry(e: &SymbolSurface, sym: &SymmetryField, region: &SampleRegion) -> Result<SymmetryReport> {
    let dim = e.dim();
    if sym.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: sym.dim() });
    }
    if region.lower.len() != dim || region.upper.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: region.lower.len().min(region.upper.len()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(region.seed);
    let grid: Vec<f64> = (0..=300).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 300.0)).collect();
    let odd = e.degree() % 2 == 1;
    let mut worst: f64 = 0.0;
    let mut relative: f64 = 0.0;
    let mut samples = 0;
    let mut attempts = 0;
    while samples < region.budget && attempts < 50 * region.budget.max(1) {
        attempts += 1;
        let x: Vec<f64> = (0..dim).map(|k| rng.random_range(region.lower[k]..=region.upper[k])).collect();
        let omega = random_direction(&mut rng, dim);
        let p_s = if odd && rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let roots = numeric::roots_on_grid(
            |mu| {
                let p: Vec<f64> = omega.iter().map(|w| mu * w).collect();
                e.value(&x, &p, p_s)
            },
            &grid,
        );
        for mu in roots {
            let p: Vec<f64> = omega.iter().map(|w| mu * w).collect();
            if e.check_nondegenerate(&x, &p, p_s).is_err() {
                continue;
            }
            let r = symmetry_residual(e, sym, &x, &p, p_s);
            worst = worst.max(r.abs());
            let q = norm(&p).hypot(p_s);
            relative = relative.max(r.abs() / q.powi(e.degree() as i32).max(1.0));
            samples += 1;
        }
    }
    if samples == 0 {
        return Err(Error::DataQuality("no on-shell samples found in the region".into()));
    }
    Ok(SymmetryReport {
        max_residual: worst,
        max_relative: relative,
        samples,
        is_symmetry: relative <= 1e-6,
    })
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    if dim == 2 {
        let th = rng.random_range(0.0..2.0 * PI);
        return vec![th.cos(), th.sin()];
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let n = norm(&v);
        if n > 1e-3 && n <= 1.0 {
            return v.iter().map(|c| c / n).collect();
        }
        if dim == 1 {
            return sample_directions(1, 2)[rng.random_range(0..2)].clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::propagate_span;
    use crate::scenarios;

    fn region(b: f64) -> SampleRegion {
        SampleRegion {
            lower: vec![-b, -b],
            upper: vec![b, b],
            budget: 200,
            seed: 7,
        }
    }

    #[test]
    fn free_translation_is_symmetry_and_oscillator_is_not() {
        let sym = SymmetryField::translation(2, 1);
        let free = check_symmetry(&scenarios::free_particle(1.0), &sym, &region(2.0)).unwrap();
        assert!(free.max_residual <= 1e-10 && free.is_symmetry);
        let osc = check_symmetry(&scenarios::oscillator(1.0, 1.0), &sym, &region(2.0)).unwrap();
        assert!(osc.max_residual > 0.1 && !osc.is_symmetry, "{osc:?}");
    }

    #[test]
    fn free_momentum_and_fiber_charge_are_conserved() {
        let e = scenarios::free_particle(1.0);
        let st = CharacteristicState::new(vec![0.0, 0.0], 0.0, vec![-0.5, 1.0], 1.0);
        let strip = propagate_span(&e, &st, 10.0, 21, &Default::default()).unwrap();
        let px = SymmetryField::translation(2, 1);
        assert_eq!(conserved_quantity(&px, strip.first()), 1.0);
        assert!(conservation_drift(&px, &strip) <= 1e-10);
        let osc = scenarios::oscillator(1.0, 2.0);
        let strip = propagate_span(&osc, &CharacteristicState::new(vec![0.0, 0.3], 0.0, vec![-0.5 - 0.09, 1.0], 1.0), 5.0, 11, &Default::default()).unwrap();
        assert_eq!(conservation_drift(&SymmetryField::fiber(2), &strip), 0.0);
    }

    #[test]
    fn charge_is_additive() {
        let a = SymmetryField::translation(2, 0);
        let b = SymmetryField::new(
            "boost",
            vec![ScalarField::from_fn(2, |x| x[1]), ScalarField::from_fn(2, |x| x[0])],
            ScalarField::from_fn(2, |x| x[0] * x[1]),
        )
        .unwrap();
        let st = CharacteristicState::new(vec![0.3, -1.2], 0.4, vec![0.7, 2.0], -1.0);
        let sum = a.add(&b).unwrap();
        let parts = conserved_quantity(&a, &st) + conserved_quantity(&b, &st);
        assert!((conserved_quantity(&sum, &st) - parts).abs() <= 4.0 * f64::EPSILON * parts.abs());
    }

    #[test]
    fn residual_is_rate_of_charge() {
        let e = scenarios::oscillator(1.0, 3.0);
        let sym = SymmetryField::translation(2, 1);
        let st = CharacteristicState::new(vec![0.0, 0.5], 0.0, vec![-(0.125 + 3.0 * 0.125), 0.5], 1.0);
        let r = symmetry_residual(&e, &sym, &st.x, &st.p, st.p_s);
        let h = 1e-4;
        let strip = crate::contact::propagate(&e, &st, &[0.0, h], &Default::default()).unwrap();
        let rate = (conserved_quantity(&sym, strip.last()) - conserved_quantity(&sym, strip.first())) / h;
        assert!((r - rate).abs() < 1e-3, "{r} vs {rate}");
    }
}
