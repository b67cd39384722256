//! Single-chart coordinate numerics: charts, scalar fields, vectors and covectors.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;

/// A coordinate chart: a box in R^dim with labelled axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    lower: Vec<f64>,
    upper: Vec<f64>,
    axis_names: Vec<String>,
}

impl Chart {
    pub fn new(axis_names: &[&str], lower: &[f64], upper: &[f64]) -> Result<Chart> {
        Self::from_parts(axis_names.iter().map(|s| s.to_string()).collect(), lower.to_vec(), upper.to_vec())
    }

    pub fn from_parts(axis_names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Chart> {
        if axis_names.is_empty() {
            return Err(Error::Invalid("chart needs at least one axis".into()));
        }
        if lower.len() != axis_names.len() || upper.len() != axis_names.len() {
            return Err(Error::DimensionMismatch {
                expected: axis_names.len(),
                got: lower.len().min(upper.len()),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::Invalid(format!("axis {i} has invalid bounds [{lo}, {hi}]")));
            }
        }
        Ok(Chart {
            lower,
            upper,
            axis_names,
        })
    }

    /// Symmetric box [-half_width, half_width]^n.
    pub fn symmetric(axis_names: &[&str], half_width: f64) -> Chart {
        let n = axis_names.len();
        Chart::new(axis_names, &vec![-half_width; n], &vec![half_width; n]).expect("valid symmetric chart")
    }

    pub fn dim(&self) -> usize {
        self.axis_names.len()
    }

    pub fn axis_names(&self) -> &[String] {
        &self.axis_names
    }

    pub fn axis_index(&self, name: &str) -> Option<usize> {
        self.axis_names.iter().position(|a| a == name)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Checks that `x` sits at least `margin` inside the bounds on every axis.
    pub fn check_interior(&self, x: &[f64], margin: f64) -> Result<()> {
        self.check_dim(x.len())?;
        for (axis, v) in x.iter().enumerate() {
            if *v - margin < self.lower[axis] || *v + margin > self.upper[axis] {
                return Err(Error::Boundary {
                    point: x.to_vec(),
                    axis,
                    step: margin,
                });
            }
        }
        Ok(())
    }

    pub fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// A covector (momentum) in a single chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covector(pub Vec<f64>);

/// A tangent vector (velocity) in a single chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector(pub Vec<f64>);

impl Covector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, k: f64) -> Covector {
        Covector(self.0.iter().map(|v| v * k).collect())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl TangentVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn scaled(&self, k: f64) -> TangentVector {
        TangentVector(self.0.iter().map(|v| v * k).collect())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

/// The natural pairing p(v) = Σ p_i v^i.
pub fn pair(p: &Covector, v: &TangentVector) -> Result<f64> {
    if p.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: v.dim(),
        });
    }
    Ok(dot(&p.0, &v.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VecFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// How a [`ScalarField`] produces its gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradMode {
    Analytic,
    /// Central differences; `None` means the default per-axis step.
    FiniteDifference(Option<f64>),
}

/// A smooth function on a chart with optional analytic first and second derivatives.
#[derive(Clone)]
pub struct ScalarField {
    dim: usize,
    eval: Arc<EvalFn>,
    grad: Option<Arc<VecFn>>,
    // row-major dim x dim
    hessian: Option<Arc<VecFn>>,
    mode: GradMode,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("dim", &self.dim)
            .field("mode", &self.mode)
            .finish()
    }
}

/// Default central-difference step for coordinate `x`.
pub fn default_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

impl ScalarField {
    pub fn from_fn(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> ScalarField {
        ScalarField {
            dim,
            eval: Arc::new(f),
            grad: None,
            hessian: None,
            mode: GradMode::FiniteDifference(None),
        }
    }

    pub fn with_grad(mut self, g: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> ScalarField {
        self.grad = Some(Arc::new(g));
        self.mode = GradMode::Analytic;
        self
    }

    pub fn with_hessian(mut self, h: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> ScalarField {
        self.hessian = Some(Arc::new(h));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> ScalarField {
        self.grad = None;
        self.mode = GradMode::FiniteDifference(Some(h));
        self
    }

    pub fn constant(dim: usize, c: f64) -> ScalarField {
        ScalarField::from_fn(dim, move |_| c)
            .with_grad(move |_| vec![0.0; dim])
            .with_hessian(move |_| vec![0.0; dim * dim])
    }

    /// Builds a field from an expression over `dim` variables, with symbolic derivatives.
    pub fn from_expr(expr: Expr, dim: usize) -> Result<ScalarField> {
        if let Some(v) = expr.max_var() {
            if v >= dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v + 1 });
            }
        }
        let grads: Vec<Expr> = (0..dim).map(|i| expr.diff(i)).collect();
        let hess: Vec<Expr> = grads
            .iter()
            .flat_map(|g| (0..dim).map(move |j| g.diff(j)))
            .collect();
        let e = expr;
        Ok(ScalarField::from_fn(dim, move |x| e.eval(x))
            .with_grad(move |x| grads.iter().map(|g| g.eval(x)).collect())
            .with_hessian(move |x| hess.iter().map(|h| h.eval(x)).collect()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grad_mode(&self) -> GradMode {
        self.mode
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    /// Gradient: analytic when available, otherwise central differences.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.grad {
            Some(g) => g(x),
            None => {
                let step = match self.mode {
                    GradMode::FiniteDifference(Some(h)) => Some(h),
                    _ => None,
                };
                central_gradient(|y| self.value(y), x, step)
            }
        }
    }

    /// Row-major Hessian: analytic when available, otherwise differences of the gradient.
    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        if let Some(h) = &self.hessian {
            return h(x);
        }
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        let mut y = x.to_vec();
        for j in 0..n {
            let h = default_step(x[j]).sqrt() * 1e-1;
            y[j] = x[j] + h;
            let gp = self.gradient(&y);
            y[j] = x[j] - h;
            let gm = self.gradient(&y);
            y[j] = x[j];
            for i in 0..n {
                out[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        // symmetrize
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (out[i * n + j] + out[j * n + i]);
                out[i * n + j] = m;
                out[j * n + i] = m;
            }
        }
        out
    }

    /// Pointwise sum of two fields; analytic derivatives are kept when both have them.
    pub fn add(&self, other: &ScalarField) -> ScalarField {
        let (a, b) = (self.clone(), other.clone());
        let mut out = {
            let (a, b) = (a.clone(), b.clone());
            ScalarField::from_fn(self.dim, move |x| a.value(x) + b.value(x))
        };
        if self.grad.is_some() && other.grad.is_some() {
            let (a2, b2) = (a.clone(), b.clone());
            out = out.with_grad(move |x| {
                a2.gradient(x).iter().zip(b2.gradient(x)).map(|(u, v)| u + v).collect()
            });
        }
        if self.hessian.is_some() && other.hessian.is_some() {
            out = out.with_hessian(move |x| {
                a.hessian(x).iter().zip(b.hessian(x)).map(|(u, v)| u + v).collect()
            });
        }
        out
    }

    pub fn scale(&self, k: f64) -> ScalarField {
        let a = self.clone();
        let mut out = {
            let a = a.clone();
            ScalarField::from_fn(self.dim, move |x| k * a.value(x))
        };
        if self.grad.is_some() {
            let a2 = a.clone();
            out = out.with_grad(move |x| a2.gradient(x).iter().map(|v| k * v).collect());
        }
        if self.hessian.is_some() {
            out = out.with_hessian(move |x| a.hessian(x).iter().map(|v| k * v).collect());
        }
        out
    }
}

pub(crate) fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: Option<f64>) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step.unwrap_or_else(|| default_step(x[i]));
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central-difference gradient of `f` at `x` with step `h` on every axis.
///
/// Fails with a boundary error when `x` is closer than `h` to the chart boundary.
pub fn fd_gradient(f: &ScalarField, chart: &Chart, x: &[f64], h: f64) -> Result<Covector> {
    chart.check_interior(x, h)?;
    if f.dim() != chart.dim() {
        return Err(Error::DimensionMismatch {
            expected: chart.dim(),
            got: f.dim(),
        });
    }
    Ok(Covector(central_gradient(|y| f.value(y), x, Some(h))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pair_examples() {
        let p = Covector(vec![1.0, 0.0]);
        let v = TangentVector(vec![0.0, 1.0]);
        assert_eq!(pair(&p, &v).unwrap(), 0.0);
        let p = Covector(vec![2.0, 3.0]);
        let v = TangentVector(vec![1.0, 1.0]);
        assert_eq!(pair(&p, &v).unwrap(), 5.0);
        assert_eq!(pair(&p, &v.scaled(4.0)).unwrap(), 20.0);
    }

    #[test]
    fn pair_dimension_mismatch() {
        let err = pair(&Covector(vec![1.0]), &TangentVector(vec![1.0, 2.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn fd_gradient_examples() {
        let chart = Chart::symmetric(&["x"], 10.0);
        let sq = ScalarField::from_fn(1, |x| x[0] * x[0]);
        let g = fd_gradient(&sq, &chart, &[3.0], 1e-4).unwrap();
        assert!((g.0[0] - 6.0).abs() < 1e-6);

        let c = ScalarField::from_fn(1, |_| 4.2);
        assert_eq!(fd_gradient(&c, &chart, &[1.0], 1e-4).unwrap().0, vec![0.0]);

        let s = ScalarField::from_fn(1, |x| x[0].sin());
        let g = fd_gradient(&s, &chart, &[0.0], 1e-4).unwrap();
        assert!((g.0[0] - 0.0f64.cos()).abs() < 1e-7);
    }

    #[test]
    fn fd_gradient_rejects_boundary_points() {
        let chart = Chart::symmetric(&["x", "y"], 1.0);
        let f = ScalarField::from_fn(2, |x| x[0] + x[1]);
        let err = fd_gradient(&f, &chart, &[0.99999, 0.0], 1e-4).unwrap_err();
        assert!(matches!(err, Error::Boundary { axis: 0, .. }));
    }

    #[test]
    fn chart_validation() {
        assert!(Chart::new(&[], &[], &[]).is_err());
        assert!(Chart::new(&["x"], &[1.0], &[0.0]).is_err());
        assert!(Chart::new(&["x"], &[f64::NEG_INFINITY], &[0.0]).is_err());
        assert!(Chart::new(&["x", "y"], &[0.0], &[1.0]).is_err());
        let c = Chart::new(&["t", "x"], &[0.0, -1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(c.axis_index("x"), Some(1));
        assert!(c.contains(&[0.5, 0.0]));
        assert!(!c.contains(&[1.5, 0.0]));
    }

    #[test]
    fn analytic_gradient_agrees_with_central_differences() {
        use rand::{Rng, SeedableRng};
        let vars: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let e = Expr::parse("sin(x)*y^2 + exp(z/3)*x - cos(y*z)", &vars, &Default::default()).unwrap();
        let field = ScalarField::from_expr(e, 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        // coarse and fine steps: error must shrink like h^2
        let (h1, h2) = (1e-2, 5e-3);
        let mut worst_ratio: f64 = 0.0;
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let g = field.gradient(&x);
            let e1 = norm(
                &central_gradient(|y| field.value(y), &x, Some(h1))
                    .iter()
                    .zip(&g)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            let bound = 10.0 * h1 * h1;
            assert!(e1 <= bound, "error {e1} exceeds C h^2 = {bound}");
            let e2 = norm(
                &central_gradient(|y| field.value(y), &x, Some(h2))
                    .iter()
                    .zip(&g)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            if e1 > 1e-9 {
                worst_ratio = worst_ratio.max(e2 / e1);
            }
        }
        // halving h should cut the error by ~4
        assert!(worst_ratio < 0.3, "ratio {worst_ratio}");
    }

    #[test]
    fn fd_hessian_matches_analytic() {
        let vars: Vec<String> = ["x", "y"].iter().map(|s| s.to_string()).collect();
        let e = Expr::parse("x^2*y + sin(y)", &vars, &Default::default()).unwrap();
        let analytic = ScalarField::from_expr(e.clone(), 2).unwrap();
        let numeric = ScalarField::from_fn(2, move |x| e.eval(x));
        let x = [0.3, -0.8];
        for (a, b) in analytic.hessian(&x).iter().zip(numeric.hessian(&x)) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    proptest! {
        #[test]
        fn pair_is_bilinear(
            p in prop::collection::vec(-10.0f64..10.0, 3),
            q in prop::collection::vec(-10.0f64..10.0, 3),
            v in prop::collection::vec(-10.0f64..10.0, 3),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let combo = Covector(p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect());
            let v = TangentVector(v);
            let lhs = pair(&combo, &v).unwrap();
            let rhs = a * pair(&Covector(p), &v).unwrap() + b * pair(&Covector(q), &v).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            prop_assert_eq!(pair(&Covector(vec![0.0; 3]), &v).unwrap(), 0.0);
        }
    }
}
