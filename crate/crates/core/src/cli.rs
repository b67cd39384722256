//! Command-line runner: one subcommand per analysis, CSV outputs and a JSON report.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bundle::{legendre_dual, wave_diagram};
use crate::config::{self, Scenario, ScenarioConfig};
use crate::contact::{linspace, propagate, action_increment};
use crate::error::{Error, Result};
use crate::export;
use crate::expr::Expr;
use crate::integrate::IntegratorConfig;
use crate::noether::{check_symmetry, conservation_drift, conserved_series, SampleRegion};
use crate::phase::{holonomy, to_phase, PhaseChart, Section};
use crate::symbol::{eikonal_residual, symbol_scaling_check, ExprPhase};
use crate::wavefront::{legendre_defect, legendre_lift, propagate_front, InitialFront, LiftBranch, ParamGrid};

#[derive(Debug, Parser)]
#[command(name = "contactmech", version, about = "Characteristics, wavefronts and holonomy of Hamilton-Jacobi hypersurfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output` key, then `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for sampled checks; overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Disable step control and integrate with this step.
    #[arg(long = "fixed-step", global = true)]
    pub fixed_step: Option<f64>,
    /// Report path; defaults to `<out>/report.json`.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate the `[[strip]]` blocks.
    Propagate,
    /// Lift and propagate the `[[front]]` blocks.
    Wavefront,
    /// Check the `[[symmetry]]` blocks on E and along strips.
    NoetherCheck,
    /// Sweep λ for `[symbol_check]` phases.
    Symbol,
    /// Holonomy of the `[[loop]]` blocks.
    Holonomy,
    /// Sample the `[wave_diagram]`.
    WaveDiagram,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Propagate => "propagate",
            Command::Wavefront => "wavefront",
            Command::NoetherCheck => "noether-check",
            Command::Symbol => "symbol",
            Command::Holonomy => "holonomy",
            Command::WaveDiagram => "wave-diagram",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub fixed_step: Option<f64>,
    pub files: Vec<FileEntry>,
    pub results: Value,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    fn write(&mut self, name: &str, body: Vec<u8>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, &body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(&body)),
            bytes: body.len(),
        });
        Ok(())
    }
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Runs one subcommand and writes its outputs and report.
pub fn run(cli: &Cli) -> Result<Report> {
    let path = cli.config.as_deref().ok_or_else(|| Error::Config("--config: required".into()))?;
    let cfg = config::load(path)?;
    let sc = config::build(&cfg)?;
    let integ = config::integrator(&cfg, cli.fixed_step)?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut out = Outputs { dir: dir.clone(), files: Vec::new() };
    let results = match cli.command {
        Command::Propagate => run_propagate(&cfg, &sc, &integ, &mut out)?,
        Command::Wavefront => run_wavefront(&cfg, &sc, &integ, &mut out)?,
        Command::NoetherCheck => run_noether(&cfg, &sc, &integ, seed, &mut out)?,
        Command::Symbol => run_symbol(&cfg, &sc)?,
        Command::Holonomy => run_holonomy(&cfg, &sc)?,
        Command::WaveDiagram => run_diagram(&cfg, &sc, &mut out)?,
    };
    let report = Report {
        schema_version: config::SCHEMA_VERSION,
        command: cli.command.name().to_string(),
        seed,
        fixed_step: integ.fixed_step,
        files: out.files,
        results,
    };
    let report_path = cli.report.clone().unwrap_or_else(|| dir.join("report.json"));
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(&report_path, text + "\n").map_err(|e| Error::Io(format!("{}: {e}", report_path.display())))?;
    Ok(report)
}

fn strip_names(cfg: &ScenarioConfig) -> Vec<String> {
    cfg.strips
        .iter()
        .enumerate()
        .map(|(i, s)| s.name.clone().unwrap_or_else(|| format!("strip{i}")))
        .collect()
}

fn run_propagate(cfg: &ScenarioConfig, sc: &Scenario, integ: &IntegratorConfig, out: &mut Outputs) -> Result<Value> {
    if cfg.strips.is_empty() {
        return Err(Error::Config("strip: propagate needs at least one [[strip]] block".into()));
    }
    let e = &sc.surface;
    let section = match &cfg.section {
        Some(s) => Some(Section {
            axis: sc.axis("section.axis", &s.axis)?,
            value: s.value,
            budget: s.budget,
        }),
        None => None,
    };
    let mut jsonl = Vec::new();
    let mut results = Vec::new();
    let mut portrait = Vec::new();
    for ((i, spec), name) in cfg.strips.iter().enumerate().zip(strip_names(cfg)) {
        let init = config::strip_state(sc, spec, &format!("strip[{i}]"))?;
        let strip = propagate(e, &init, &linspace(0.0, spec.tau_end, spec.samples), integ)?;
        let mut body = Vec::new();
        export::write_strip_csv(&mut body, e, &strip)?;
        out.write(&format!("strip_{}.csv", file_stem(&name)), body)?;
        export::write_strip_jsonl(&mut jsonl, e, &name, &strip)?;
        if let Some(sec) = &section {
            portrait.push(to_phase(e, &init, sec, integ)?);
        }
        results.push(json!({
            "name": name,
            "samples": strip.states.len(),
            "steps": strip.steps,
            "left_chart": strip.exit.is_some(),
            "max_residual": strip.max_residual(e),
            "p_s_drift": strip.max_fiber_momentum_drift(),
            "action_increment": action_increment(&strip),
        }));
    }
    out.write("strips.jsonl", jsonl)?;
    if let Some(sec) = &section {
        let axes: Vec<&String> = sc.axes().iter().enumerate().filter(|(k, _)| *k != sec.axis).map(|(_, a)| a).collect();
        let mut names: Vec<String> = axes.iter().map(|a| format!("x_{a}")).collect();
        names.extend(axes.iter().map(|a| format!("xi_{a}")));
        let mut body = Vec::new();
        export::write_portrait_csv(&mut body, &names, &portrait)?;
        out.write("portrait.csv", body)?;
    }
    Ok(json!({ "strips": results }))
}

fn run_wavefront(cfg: &ScenarioConfig, sc: &Scenario, integ: &IntegratorConfig, out: &mut Outputs) -> Result<Value> {
    if cfg.fronts.is_empty() {
        return Err(Error::Config("front: wavefront needs at least one [[front]] block".into()));
    }
    let e = &sc.surface;
    let mut results = Vec::new();
    for (i, spec) in cfg.fronts.iter().enumerate() {
        let key = format!("front[{i}]");
        let name = spec.name.clone().unwrap_or_else(|| format!("front{i}"));
        let grid = ParamGrid::new(spec.params.clone()).map_err(|err| Error::Config(format!("{key}.params: {err}")))?;
        let (xs, s0) = config::front_embedding(sc, spec, &key)?;
        let sigma = InitialFront::new(grid, move |u: &[f64]| (xs.iter().map(|x| x.eval(u)).collect(), s0.eval(u)));
        let lift = legendre_lift(e, &sigma, LiftBranch::new(spec.p_s_sign, spec.root))?;
        let history = propagate_front(e, &lift, &linspace(0.0, spec.tau_end, spec.samples), integ)?;
        let mut body = Vec::new();
        export::write_front_csv(&mut body, sc.axes(), &history)?;
        out.write(&format!("front_{}.csv", file_stem(&name)), body)?;
        results.push(json!({
            "name": name,
            "samples": history.grid.len(),
            "caustics": history.caustics,
            "first_caustic_tau": history.caustics.first().map(|c| c.tau),
            "failures": history.failures.iter().map(|(i, err)| json!({"index": i, "error": err.to_string()})).collect::<Vec<_>>(),
            "legendre_defect": legendre_defect(&history),
        }));
    }
    Ok(json!({ "fronts": results }))
}

fn run_noether(cfg: &ScenarioConfig, sc: &Scenario, integ: &IntegratorConfig, seed: u64, out: &mut Outputs) -> Result<Value> {
    let syms = config::symmetries(sc, cfg)?;
    if syms.is_empty() {
        return Err(Error::Config("symmetry: noether-check needs at least one [[symmetry]] block".into()));
    }
    let e = &sc.surface;
    let mut checks = BTreeMap::new();
    if let Some(n) = &cfg.noether {
        let region = SampleRegion {
            lower: n.lower.clone(),
            upper: n.upper.clone(),
            budget: n.budget,
            seed,
        };
        for s in &syms {
            checks.insert(s.name.clone(), serde_json::to_value(check_symmetry(e, s, &region)?).map_err(|e| Error::Io(e.to_string()))?);
        }
    }
    let names: Vec<String> = syms.iter().map(|s| s.name.clone()).collect();
    let mut strips = Vec::new();
    for ((i, spec), name) in cfg.strips.iter().enumerate().zip(strip_names(cfg)) {
        let init = config::strip_state(sc, spec, &format!("strip[{i}]"))?;
        let strip = propagate(e, &init, &linspace(0.0, spec.tau_end, spec.samples), integ)?;
        let series: Vec<Vec<f64>> = syms.iter().map(|s| conserved_series(s, &strip)).collect();
        let rows: Vec<Vec<f64>> = (0..strip.states.len()).map(|k| series.iter().map(|q| q[k]).collect()).collect();
        let taus: Vec<f64> = strip.states.iter().map(|s| s.tau).collect();
        let mut body = Vec::new();
        export::write_conservation_csv(&mut body, &names, &taus, &rows)?;
        out.write(&format!("conservation_{}.csv", file_stem(&name)), body)?;
        let drift: BTreeMap<&str, f64> = syms.iter().map(|s| (s.name.as_str(), conservation_drift(s, &strip))).collect();
        strips.push(json!({ "name": name, "drift": drift }));
    }
    Ok(json!({ "symmetries": checks, "strips": strips }))
}

fn run_symbol(cfg: &ScenarioConfig, sc: &Scenario) -> Result<Value> {
    let spec = cfg
        .symbol_check
        .as_ref()
        .ok_or_else(|| Error::Config("symbol_check: required for the symbol subcommand".into()))?;
    let op = sc
        .operator
        .as_ref()
        .ok_or_else(|| Error::Config("dynamics: the symbol subcommand needs an operator (kind = \"operator\" or builtin schrodinger)".into()))?;
    let mut uaxes: Vec<String> = sc.axes().to_vec();
    uaxes.push("s".into());
    let mut phases = Vec::new();
    if !spec.phases.is_empty() {
        let point = spec
            .point
            .as_ref()
            .ok_or_else(|| Error::Config("symbol_check.point: required with phases".into()))?;
        if point.len() != uaxes.len() {
            return Err(Error::Config(format!("symbol_check.point: expected {} components (axes and s)", uaxes.len())));
        }
        for (k, src) in spec.phases.iter().enumerate() {
            let g = ExprPhase::parse(&uaxes, src).map_err(|e| Error::Config(format!("symbol_check.phases[{k}]: {e}")))?;
            let r = symbol_scaling_check(op, &g, point, &spec.lambdas)?;
            phases.push(json!({ "phase": src, "report": r }));
        }
    }
    let mut actions = Vec::new();
    if !spec.actions.is_empty() {
        let probes: Vec<Vec<f64>> = spec
            .probes
            .iter()
            .map(|p| {
                let mut y = p.clone();
                y.push(0.0);
                y
            })
            .collect();
        if probes.is_empty() || probes.iter().any(|p| p.len() != uaxes.len()) {
            return Err(Error::Config(format!("symbol_check.probes: need points with {} components", sc.dim())));
        }
        for (k, src) in spec.actions.iter().enumerate() {
            let key = format!("symbol_check.actions[{k}]");
            let action = Expr::parse(src, &uaxes, &sc.constants).map_err(|e| Error::Config(format!("{key}: {e}")))?;
            let phase = action + Expr::Num(spec.weight) * Expr::Var(sc.dim());
            let g = ExprPhase::new(uaxes.len(), phase).map_err(|e| Error::Config(format!("{key}: {e}")))?;
            let r = eikonal_residual(op, &g, &probes, &spec.lambdas)?;
            actions.push(json!({ "action": src, "report": r }));
        }
    }
    Ok(json!({ "order": op.order(), "phases": phases, "actions": actions }))
}

fn run_holonomy(cfg: &ScenarioConfig, sc: &Scenario) -> Result<Value> {
    if cfg.loops.is_empty() {
        return Err(Error::Config("loop: holonomy needs at least one [[loop]] block".into()));
    }
    let mut results = Vec::new();
    for (i, l) in cfg.loops.iter().enumerate() {
        let key = format!("loop[{i}]");
        let chart = match l.chart.as_str() {
            "canonical" => PhaseChart::Canonical,
            "cylinder" => PhaseChart::Cylinder,
            "velocity" => PhaseChart::Velocity {
                mass: l.mass.unwrap_or(1.0),
                c: l.c.unwrap_or(1.0),
            },
            other => return Err(Error::Config(format!("{key}.chart: unknown chart '{other}'"))),
        };
        let r = holonomy(&sc.surface, chart, &l.vertices, l.nodes)?;
        results.push(json!({
            "name": l.name.clone().unwrap_or_else(|| format!("loop{i}")),
            "delta_s": r.delta_s,
            "reduced": r.reduced,
        }));
    }
    Ok(json!({ "loops": results }))
}

fn run_diagram(cfg: &ScenarioConfig, sc: &Scenario, out: &mut Outputs) -> Result<Value> {
    let spec = cfg
        .wave_diagram
        .as_ref()
        .ok_or_else(|| Error::Config("wave_diagram: required for the wave-diagram subcommand".into()))?;
    let time_axis = match &spec.time_axis {
        Some(a) => Some(sc.axis("wave_diagram.time_axis", a)?),
        None => None,
    };
    let d = wave_diagram(&sc.surface, &sc.connection, &spec.point, spec.samples, time_axis)?;
    let mut body = Vec::new();
    export::write_diagram_csv(&mut body, sc.axes(), &d)?;
    out.write("diagram.csv", body)?;
    let mut dual_count = None;
    if spec.dual {
        let dual = legendre_dual(&d);
        let mut text = String::from("branch");
        for a in sc.axes() {
            text.push_str(&format!(",p_{a}"));
        }
        text.push('\n');
        for (i, p) in &dual.points {
            text.push_str(&d.points[*i].branch.to_string());
            for c in p {
                text.push(',');
                text.push_str(&export::fmt_f64(*c));
            }
            text.push('\n');
        }
        out.write("diagram_dual.csv", text.into_bytes())?;
        dual_count = Some(dual.points.len());
    }
    let count = |b: i8| d.points.iter().filter(|p| p.branch == b).count();
    Ok(json!({
        "points": d.points.len(),
        "positive_branch": count(1),
        "negative_branch": count(-1),
        "lightlike_rays": d.lightlike.len(),
        "dual_points": dual_count,
    }))
}

/// Parses `args` and runs; used by the binary and by tests.
pub fn main_with(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
