//! Bundled dynamics used by the command line runner and the tests.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::bundle::{relativistic_scenario, ConnectionData, RelativisticParams};
use crate::contact::{ExprSymbol, FiberGroup, SymbolSurface};
use crate::manifold::{Chart, ScalarField};

const WIDE: f64 = 1e6;

fn consts(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn surface(chart: Chart, src: &str, c: &BTreeMap<String, f64>, degree: u32) -> SymbolSurface {
    let sym = ExprSymbol::parse(chart.axis_names(), src, c).expect("bundled symbol parses");
    SymbolSurface::new(chart, FiberGroup::Line, Arc::new(sym), degree).expect("bundled symbol is valid")
}

/// `G = p_s p_t + p_x²/(2m)` on `(t, x)`.
pub fn free_particle(mass: f64) -> SymbolSurface {
    free_particle_on(Chart::symmetric(&["t", "x"], WIDE), mass)
}

pub fn free_particle_on(chart: Chart, mass: f64) -> SymbolSurface {
    surface(chart, "p_s*p_t + p_x^2/(2*m)", &consts(&[("m", mass)]), 2)
}

/// `G = p_s p_t + p_x²/(2m) + k p_s² x²/2` on `(t, x)`.
pub fn oscillator(mass: f64, stiffness: f64) -> SymbolSurface {
    oscillator_on(Chart::symmetric(&["t", "x"], WIDE), mass, stiffness)
}

pub fn oscillator_on(chart: Chart, mass: f64, stiffness: f64) -> SymbolSurface {
    surface(
        chart,
        "p_s*p_t + p_x^2/(2*m) + k*p_s^2*x^2/2",
        &consts(&[("m", mass), ("k", stiffness)]),
        2,
    )
}

/// Unit-speed planar eikonal `G = ‖p‖ − p_s` on `(x, y)`; the strip parameter is arclength.
pub fn eikonal_plane() -> SymbolSurface {
    eikonal_on(Chart::symmetric(&["x", "y"], WIDE))
}

pub fn eikonal_on(chart: Chart) -> SymbolSurface {
    surface(chart, "sqrt(p_x^2 + p_y^2) - p_s", &BTreeMap::new(), 1)
}

/// Anisotropic planar eikonal `G = sqrt((a p_x)² + (b p_y)²) − p_s`, whose wave
/// diagram is the ellipse with semiaxes `(a, b)`.
pub fn anisotropic_eikonal(a: f64, b: f64) -> SymbolSurface {
    anisotropic_eikonal_on(Chart::symmetric(&["x", "y"], WIDE), a, b)
}

pub fn anisotropic_eikonal_on(chart: Chart, a: f64, b: f64) -> SymbolSurface {
    surface(
        chart,
        "sqrt((a*p_x)^2 + (b*p_y)^2) - p_s",
        &consts(&[("a", a), ("b", b)]),
        1,
    )
}

/// Charged particle on `(t, x)` with metric `diag(−c², 1)` in the uniform field
/// `F_tx = field`, gauge `A = (0, field·t)`.
pub fn constant_field(chart: Chart, mass: f64, charge: f64, c: f64, field: f64) -> (SymbolSurface, ConnectionData) {
    let params = RelativisticParams {
        mass,
        charge,
        c,
        metric: vec![-c * c, 0.0, 0.0, 1.0],
        potential: vec![
            ScalarField::constant(2, 0.0),
            ScalarField::from_fn(2, move |x| field * x[0])
                .with_grad(move |_| vec![field, 0.0])
                .with_hessian(|_| vec![0.0; 4]),
        ],
    };
    relativistic_scenario(chart, &params).expect("diag(-c^2, 1) is Lorentzian")
}
