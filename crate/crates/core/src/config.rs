//! Scenario files: a TOML schema and its resolution into runtime objects.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [chart]                       # optional for builtins
//! axes = ["t", "x"]
//! lower = [-50.0, -50.0]
//! upper = [50.0, 50.0]
//!
//! [dynamics]
//! kind = "builtin"              # builtin | symbol | operator
//! name = "oscillator"           # free | oscillator | eikonal | relativistic | schrodinger
//! mass = 1.0
//! stiffness = 1.0
//!
//! [[strip]]
//! x = [0.0, 0.0]
//! p = [0.0, 1.0]
//! solve = "t"                   # replace p_t by the nearest on-shell value
//! tau_end = 10.0
//! ```
//!
//! Expressions follow the grammar documented in [`crate::expr`]. Field expressions
//! see the chart axes and `[constants]`; symbol expressions additionally see
//! `p_<axis>` and `p_s`; front embeddings see `u` (or `u0`, `u1`).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::bundle::{relativistic_scenario, ConnectionData, RelativisticParams};
use crate::contact::{CharacteristicState, ExprSymbol, FiberGroup, SymbolSurface};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::integrate::IntegratorConfig;
use crate::manifold::{Chart, ScalarField};
use crate::noether::SymmetryField;
use crate::numeric;
use crate::scenarios;
use crate::symbol::{principal_surface, schrodinger_operator, LinearDiffOperator, OperatorTerm};
use crate::wavefront::ParamAxis;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    pub output: Option<String>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub chart: Option<ChartSpec>,
    #[serde(default = "line_fiber")]
    pub fiber: FiberGroup,
    pub dynamics: DynamicsSpec,
    pub connection: Option<ConnectionSpec>,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default, rename = "strip")]
    pub strips: Vec<StripSpec>,
    #[serde(default, rename = "front")]
    pub fronts: Vec<FrontSpec>,
    #[serde(default, rename = "symmetry")]
    pub symmetries: Vec<SymmetrySpec>,
    pub noether: Option<NoetherSpec>,
    #[serde(default, rename = "loop")]
    pub loops: Vec<LoopSpec>,
    pub symbol_check: Option<SymbolCheckSpec>,
    pub wave_diagram: Option<WaveDiagramSpec>,
    pub section: Option<SectionSpec>,
}

fn line_fiber() -> FiberGroup {
    FiberGroup::Line
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub axes: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub kind: String,
    pub name: Option<String>,
    pub expr: Option<String>,
    pub degree: Option<u32>,
    pub terms: Option<Vec<TermSpec>>,
    pub mass: Option<f64>,
    pub stiffness: Option<f64>,
    pub charge: Option<f64>,
    pub c: Option<f64>,
    pub field: Option<f64>,
    pub potential: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    /// Axis names, one per derivative; the fiber axis is `s`.
    pub derivative: Vec<String>,
    pub coeff: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub potential: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub fixed_step: Option<f64>,
    pub max_steps: Option<usize>,
    pub max_step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripSpec {
    pub name: Option<String>,
    pub x: Vec<f64>,
    #[serde(default)]
    pub s: f64,
    pub p: Vec<f64>,
    #[serde(default = "one")]
    pub p_s: f64,
    pub solve: Option<String>,
    pub tau_end: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn one() -> f64 {
    1.0
}

fn default_samples() -> usize {
    101
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontSpec {
    pub name: Option<String>,
    pub params: Vec<ParamAxis>,
    pub x: Vec<String>,
    #[serde(default = "zero_expr")]
    pub s0: String,
    #[serde(default = "plus")]
    pub p_s_sign: i8,
    #[serde(default)]
    pub root: usize,
    pub tau_end: f64,
    #[serde(default = "default_front_samples")]
    pub samples: usize,
}

fn zero_expr() -> String {
    "0".into()
}

fn plus() -> i8 {
    1
}

fn default_front_samples() -> usize {
    31
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetrySpec {
    pub name: String,
    pub v: Vec<String>,
    #[serde(default = "zero_expr")]
    pub f: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoetherSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopSpec {
    pub name: Option<String>,
    #[serde(default = "canonical")]
    pub chart: String,
    pub mass: Option<f64>,
    pub c: Option<f64>,
    pub vertices: Vec<Vec<f64>>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
}

fn canonical() -> String {
    "canonical".into()
}

fn default_nodes() -> usize {
    8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolCheckSpec {
    /// Phases on U (axes and `s`) swept at `point`.
    #[serde(default)]
    pub phases: Vec<String>,
    pub point: Option<Vec<f64>>,
    /// Actions on M tested as `S + weight·s` at every probe point.
    #[serde(default)]
    pub actions: Vec<String>,
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub weight: f64,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveDiagramSpec {
    pub point: Vec<f64>,
    #[serde(default = "default_directions")]
    pub samples: usize,
    pub time_axis: Option<String>,
    #[serde(default)]
    pub dual: bool,
}

fn default_directions() -> usize {
    360
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    pub axis: String,
    #[serde(default)]
    pub value: f64,
    #[serde(default = "default_budget_tau")]
    pub budget: f64,
}

fn default_budget_tau() -> f64 {
    100.0
}

/// Reads and parses a scenario file.
pub fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "schema_version: expected {SCHEMA_VERSION}, got {}",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

/// A resolved scenario: the surface, its connection and the parsing context.
pub struct Scenario {
    pub surface: SymbolSurface,
    pub connection: ConnectionData,
    pub operator: Option<LinearDiffOperator>,
    pub constants: BTreeMap<String, f64>,
}

impl Scenario {
    pub fn axes(&self) -> &[String] {
        self.surface.chart().axis_names()
    }

    pub fn dim(&self) -> usize {
        self.surface.dim()
    }

    pub fn axis(&self, key: &str, name: &str) -> Result<usize> {
        self.surface
            .chart()
            .axis_index(name)
            .ok_or_else(|| Error::Config(format!("{key}: unknown axis '{name}'")))
    }

    /// Parses a field expression over the chart axes.
    pub fn field(&self, key: &str, src: &str) -> Result<ScalarField> {
        field_over(self.axes(), &self.constants, key, src)
    }
}

fn expr_err(key: &str, e: Error) -> Error {
    Error::Config(format!("{key}: {e}"))
}

fn field_over(axes: &[String], consts: &BTreeMap<String, f64>, key: &str, src: &str) -> Result<ScalarField> {
    let e = Expr::parse(src, axes, consts).map_err(|e| expr_err(key, e))?;
    ScalarField::from_expr(e, axes.len()).map_err(|e| expr_err(key, e))
}

fn chart_for(cfg: &ScenarioConfig, default_axes: Option<&[&str]>) -> Result<Chart> {
    match (&cfg.chart, default_axes) {
        (Some(c), Some(axes)) if c.axes.iter().map(String::as_str).ne(axes.iter().copied()) => Err(Error::Config(format!(
            "chart.axes: builtin uses axes {axes:?}, got {:?}",
            c.axes
        ))),
        (Some(c), _) => Chart::from_parts(c.axes.clone(), c.lower.clone(), c.upper.clone()).map_err(|e| expr_err("chart", e)),
        (None, Some(axes)) => Ok(Chart::symmetric(axes, 1e6)),
        (None, None) => Err(Error::Config("chart: required unless dynamics.kind = \"builtin\"".into())),
    }
}

/// Resolves dynamics, chart and connection.
pub fn build(cfg: &ScenarioConfig) -> Result<Scenario> {
    let d = &cfg.dynamics;
    let consts = cfg.constants.clone();
    let exclusive = |fields: &[(&str, bool)]| -> Result<()> {
        match fields.iter().find(|(_, set)| *set) {
            Some((name, _)) => Err(Error::Config(format!(
                "dynamics.{name}: not allowed with kind = \"{}\"",
                d.kind
            ))),
            None => Ok(()),
        }
    };
    let mut operator = None;
    let mut builtin_conn = None;
    let surface = match d.kind.as_str() {
        "builtin" => {
            exclusive(&[("expr", d.expr.is_some()), ("terms", d.terms.is_some())])?;
            let name = d.name.as_deref().ok_or_else(|| Error::Config("dynamics.name: required".into()))?;
            let mass = d.mass.unwrap_or(1.0);
            match name {
                "free" => scenarios::free_particle_on(chart_for(cfg, Some(&["t", "x"]))?, mass),
                "oscillator" => scenarios::oscillator_on(chart_for(cfg, Some(&["t", "x"]))?, mass, d.stiffness.unwrap_or(1.0)),
                "eikonal" => {
                    let chart = chart_for(cfg, Some(&["x", "y"]))?;
                    match (d.a, d.b) {
                        (None, None) => scenarios::eikonal_on(chart),
                        (a, b) => scenarios::anisotropic_eikonal_on(chart, a.unwrap_or(1.0), b.unwrap_or(1.0)),
                    }
                }
                "relativistic" => {
                    let chart = chart_for(cfg, Some(&["t", "x"]))?;
                    let c = d.c.unwrap_or(1.0);
                    let potential = match &cfg.connection {
                        Some(conn) => potential_fields(chart.axis_names(), &consts, conn)?,
                        None => {
                            let field = d.field.unwrap_or(0.0);
                            vec![
                                ScalarField::constant(2, 0.0),
                                ScalarField::from_fn(2, move |x| field * x[0])
                                    .with_grad(move |_| vec![field, 0.0])
                                    .with_hessian(|_| vec![0.0; 4]),
                            ]
                        }
                    };
                    let params = RelativisticParams {
                        mass,
                        charge: d.charge.unwrap_or(1.0),
                        c,
                        metric: vec![-c * c, 0.0, 0.0, 1.0],
                        potential,
                    };
                    let (e, conn) = relativistic_scenario(chart, &params).map_err(|e| expr_err("dynamics", e))?;
                    builtin_conn = Some(conn);
                    e
                }
                "schrodinger" => {
                    let chart = chart_for(cfg, Some(&["t", "x"]))?;
                    let v = field_over(chart.axis_names(), &consts, "dynamics.potential", d.potential.as_deref().unwrap_or("0"))?;
                    let op = schrodinger_operator(2, mass, v).map_err(|e| expr_err("dynamics", e))?;
                    let e = principal_surface(&op, chart, cfg.fiber).map_err(|e| expr_err("dynamics", e))?;
                    operator = Some(op);
                    e
                }
                other => return Err(Error::Config(format!("dynamics.name: unknown builtin '{other}'"))),
            }
        }
        "symbol" => {
            exclusive(&[("name", d.name.is_some()), ("terms", d.terms.is_some())])?;
            let chart = chart_for(cfg, None)?;
            let src = d.expr.as_deref().ok_or_else(|| Error::Config("dynamics.expr: required".into()))?;
            let degree = d.degree.ok_or_else(|| Error::Config("dynamics.degree: required".into()))?;
            let sym = ExprSymbol::parse(chart.axis_names(), src, &consts).map_err(|e| expr_err("dynamics.expr", e))?;
            SymbolSurface::new(chart, cfg.fiber, Arc::new(sym), degree).map_err(|e| expr_err("dynamics", e))?
        }
        "operator" => {
            exclusive(&[("name", d.name.is_some()), ("expr", d.expr.is_some())])?;
            let chart = chart_for(cfg, None)?;
            let terms = d.terms.as_ref().ok_or_else(|| Error::Config("dynamics.terms: required".into()))?;
            let op = operator_from(chart.axis_names(), &consts, terms)?;
            let e = principal_surface(&op, chart, cfg.fiber).map_err(|e| expr_err("dynamics", e))?;
            operator = Some(op);
            e
        }
        other => return Err(Error::Config(format!("dynamics.kind: expected builtin, symbol or operator, got '{other}'"))),
    };
    let surface = if matches!(cfg.fiber, FiberGroup::Line) {
        surface
    } else {
        SymbolSurface::new(surface.chart().clone(), cfg.fiber, surface.symbol().clone(), surface.degree())?
    };
    let connection = match (builtin_conn, &cfg.connection) {
        (Some(c), _) => c,
        (None, Some(spec)) => ConnectionData::new(potential_fields(surface.chart().axis_names(), &consts, spec)?)
            .map_err(|e| expr_err("connection.potential", e))?,
        (None, None) => ConnectionData::zero(surface.dim()),
    };
    Ok(Scenario {
        surface,
        connection,
        operator,
        constants: consts,
    })
}

fn potential_fields(axes: &[String], consts: &BTreeMap<String, f64>, spec: &ConnectionSpec) -> Result<Vec<ScalarField>> {
    if spec.potential.len() != axes.len() {
        return Err(Error::Config(format!(
            "connection.potential: expected {} components, got {}",
            axes.len(),
            spec.potential.len()
        )));
    }
    spec.potential
        .iter()
        .enumerate()
        .map(|(k, src)| field_over(axes, consts, &format!("connection.potential[{k}]"), src))
        .collect()
}

fn operator_from(axes: &[String], consts: &BTreeMap<String, f64>, terms: &[TermSpec]) -> Result<LinearDiffOperator> {
    let m = axes.len();
    let mut out = Vec::new();
    for (k, t) in terms.iter().enumerate() {
        let mut alpha = vec![0u32; m + 1];
        for name in &t.derivative {
            let idx = if name == "s" {
                m
            } else {
                axes.iter()
                    .position(|a| a == name)
                    .ok_or_else(|| Error::Config(format!("dynamics.terms[{k}].derivative: unknown axis '{name}'")))?
            };
            alpha[idx] += 1;
        }
        out.push(OperatorTerm {
            alpha,
            coeff: field_over(axes, consts, &format!("dynamics.terms[{k}].coeff"), &t.coeff)?,
        });
    }
    LinearDiffOperator::new(m, out).map_err(|e| expr_err("dynamics.terms", e))
}

/// Integrator settings with the `--fixed-step` override applied.
pub fn integrator(cfg: &ScenarioConfig, fixed_step: Option<f64>) -> Result<IntegratorConfig> {
    let s = &cfg.integrator;
    let d = IntegratorConfig::default();
    let out = IntegratorConfig {
        rel_tol: s.rel_tol.unwrap_or(d.rel_tol),
        abs_tol: s.abs_tol.unwrap_or(d.abs_tol),
        fixed_step: fixed_step.or(s.fixed_step),
        max_steps: s.max_steps.unwrap_or(d.max_steps),
        max_step: s.max_step.unwrap_or(d.max_step),
    };
    if out.fixed_step.is_some_and(|h| !(h > 0.0)) {
        return Err(Error::Config("integrator.fixed_step: must be positive".into()));
    }
    Ok(out)
}

/// Initial state of a strip block, with the optional on-shell solve.
pub fn strip_state(sc: &Scenario, spec: &StripSpec, key: &str) -> Result<CharacteristicState> {
    let m = sc.dim();
    if spec.x.len() != m || spec.p.len() != m {
        return Err(Error::Config(format!("{key}: x and p need {m} components")));
    }
    let mut p = spec.p.clone();
    if let Some(axis) = &spec.solve {
        let k = sc.axis(&format!("{key}.solve"), axis)?;
        let guess = p[k];
        let f = |v: f64| {
            let mut q = p.clone();
            q[k] = v;
            sc.surface.value(&spec.x, &q, spec.p_s)
        };
        let span = 10.0 * (1.0 + guess.abs() + p.iter().map(|v| v.abs()).sum::<f64>());
        let roots = numeric::bracket_roots(f, -span, span, 4000);
        let best = roots
            .into_iter()
            .min_by(|a, b| (a - guess).abs().total_cmp(&(b - guess).abs()))
            .ok_or_else(|| Error::Config(format!("{key}.solve: no on-shell value of p_{axis} near {guess}")))?;
        p[k] = best;
    }
    Ok(CharacteristicState::new(spec.x.clone(), spec.s, p, spec.p_s))
}

/// The symmetry blocks as fields.
pub fn symmetries(sc: &Scenario, cfg: &ScenarioConfig) -> Result<Vec<SymmetryField>> {
    cfg.symmetries
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let key = format!("symmetry[{i}]");
            if s.v.len() != sc.dim() {
                return Err(Error::Config(format!("{key}.v: expected {} components", sc.dim())));
            }
            let v = s.v
                .iter()
                .enumerate()
                .map(|(k, src)| sc.field(&format!("{key}.v[{k}]"), src))
                .collect::<Result<Vec<_>>>()?;
            let f = sc.field(&format!("{key}.f"), &s.f)?;
            SymmetryField::new(s.name.clone(), v, f).map_err(|e| expr_err(&key, e))
        })
        .collect()
}

/// Variable names visible to a front embedding with `n` parameters.
pub fn front_vars(n: usize) -> Vec<String> {
    let mut v: Vec<String> = (0..n).map(|j| format!("u{j}")).collect();
    if n == 1 {
        v.push("u".into());
    }
    v
}

/// Front embedding `u ↦ (x(u), s₀(u))` from expressions.
pub fn front_embedding(sc: &Scenario, spec: &FrontSpec, key: &str) -> Result<(Vec<Expr>, Expr)> {
    let vars = front_vars(spec.params.len());
    if spec.x.len() != sc.dim() {
        return Err(Error::Config(format!("{key}.x: expected {} components", sc.dim())));
    }
    let alias = |e: Expr| -> Expr {
        // `u` is the last variable for one-parameter fronts; map it onto u0
        if spec.params.len() == 1 {
            e.substitute(1, &Expr::Var(0))
        } else {
            e
        }
    };
    let xs = spec
        .x
        .iter()
        .enumerate()
        .map(|(k, src)| Expr::parse(src, &vars, &sc.constants).map(alias).map_err(|e| expr_err(&format!("{key}.x[{k}]"), e)))
        .collect::<Result<Vec<_>>>()?;
    let s0 = Expr::parse(&spec.s0, &vars, &sc.constants).map(alias).map_err(|e| expr_err(&format!("{key}.s0"), e))?;
    Ok((xs, s0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE: &str = r#"
schema_version = 1
[dynamics]
kind = "builtin"
name = "free"
[[strip]]
x = [0.0, 0.0]
p = [0.0, 1.0]
solve = "t"
tau_end = 2.0
"#;

    #[test]
    fn builtin_with_solved_momentum() {
        let cfg = parse(FREE).unwrap();
        let sc = build(&cfg).unwrap();
        let st = strip_state(&sc, &cfg.strips[0], "strip[0]").unwrap();
        assert!((st.p[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors_cite_keys() {
        let bad = FREE.replace("name = \"free\"", "name = \"free\"\nexpr = \"p_t\"");
        let err = build(&parse(&bad).unwrap()).err().unwrap();
        assert!(err.to_string().contains("dynamics.expr"), "{err}");
        let bad = r#"
schema_version = 1
[chart]
axes = ["t", "x"]
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
[dynamics]
kind = "symbol"
expr = "p_s*p_t + p_x^^2"
degree = 2
"#;
        let err = build(&parse(bad).unwrap()).err().unwrap();
        assert!(err.to_string().contains("dynamics.expr") && err.exit_code() == 1, "{err}");
        let err = parse("schema_version = 2\n[dynamics]\nkind = \"builtin\"").err().unwrap();
        assert!(err.to_string().contains("schema_version"));
        assert!(parse("schema_version = 1\nbogus = 3\n[dynamics]\nkind = \"builtin\"").is_err());
    }

    #[test]
    fn operator_terms_resolve_axes() {
        let text = r#"
schema_version = 1
[chart]
axes = ["t", "x"]
lower = [-5.0, -5.0]
upper = [5.0, 5.0]
[dynamics]
kind = "operator"
terms = [
  { derivative = ["x", "x"], coeff = "0.5" },
  { derivative = ["s", "t"], coeff = "1" },
]
"#;
        let sc = build(&parse(text).unwrap()).unwrap();
        assert_eq!(sc.surface.degree(), 2);
        assert!((sc.surface.value(&[0.0, 0.0], &[1.0, 2.0], 3.0) - (2.0 + 3.0)).abs() < 1e-15);
    }
}
