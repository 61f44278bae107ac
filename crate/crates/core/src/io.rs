//! Experiment configuration, runner and result files.
//!
//! Floats in every output file carry 17 significant digits, enough to
//! round-trip an `f64` exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::costs::{terminal_from_nodal, CostParams, TerminalCondition};
use crate::error::{Error, Result};
use crate::network::{build_network, discretize, Grid, NetworkSpec, NodeKind};
use crate::solver::{solve_mfe, Mode, Problem, ResidualReport, Solution, SolverConfig};
use crate::validate::{self, GridError, Metrics};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub network: NetworkSpec,
    #[serde(default)]
    pub costs: CostParams,
    pub grid: GridConfig,
    #[serde(default)]
    pub terminal: TerminalConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dx: f64,
    /// Defaults to `dx`.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl GridConfig {
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.dx)
    }
}

/// Final-time costs. Nodal values are keyed by node name; the destination is
/// always zero. With `interpolate`, each link takes the straight line between
/// its end nodes; otherwise it is zero. Entries in `links` then override whole
/// links with an affine profile in the distance from the link start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalConfig {
    #[serde(default)]
    pub nodal: BTreeMap<String, f64>,
    #[serde(default = "default_true")]
    pub interpolate: bool,
    #[serde(default)]
    pub links: Vec<LinkProfile>,
}

impl Default for TerminalConfig {
    fn default() -> Self {
        Self {
            nodal: BTreeMap::new(),
            interpolate: true,
            links: Vec::new(),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkProfile {
    pub from: String,
    pub to: String,
    pub intercept: f64,
    #[serde(default)]
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Used when no directory is given on the command line.
    pub dir: Option<PathBuf>,
    pub fields: bool,
    pub queues: bool,
    pub beta: bool,
    pub summary: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            fields: true,
            queues: true,
            beta: true,
            summary: true,
        }
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(parse_error)?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    if let Some(rest) = msg.strip_prefix("missing field `") {
        if let Some(end) = rest.find('`') {
            return Error::Config {
                field: rest[..end].to_string(),
                reason: "required field is missing".into(),
            };
        }
    }
    let message = match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg,
    };
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message,
    }
}

fn field_err(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        e @ Error::Config { .. } => e,
        other => Error::Config {
            field: field.to_string(),
            reason: other.to_string(),
        },
    }
}

impl ExperimentConfig {
    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config {
                field: "schema_version".into(),
                reason: format!("expected {SCHEMA_VERSION}, found {}", self.schema_version),
            });
        }
        self.solver.validate()?;
        self.problem().map(|_| ())
    }

    /// The discretized problem on the configured grid.
    pub fn problem(&self) -> Result<Problem> {
        self.problem_with_dx(self.grid.dx)
    }

    /// The discretized problem with `dx` replaced and `dt` scaled along, so
    /// the mesh ratio stays fixed.
    pub fn problem_with_dx(&self, dx: f64) -> Result<Problem> {
        let ratio = self.grid.dt() / self.grid.dx;
        let net = build_network(&self.network).map_err(field_err("network"))?;
        self.costs.validate().map_err(field_err("costs"))?;
        let grid = Grid::new(dx, dx * ratio, self.grid.horizon).map_err(field_err("grid"))?;
        grid.check_cfl(self.costs.u_max).map_err(field_err("grid"))?;
        let dnet = discretize(&net, &grid).map_err(field_err("grid.dx"))?;
        let terminal = self.terminal_condition(&dnet).map_err(field_err("terminal"))?;
        Problem::new(dnet, self.costs, terminal, grid)
    }

    fn terminal_condition(&self, dnet: &crate::network::DiscretizedNetwork) -> Result<TerminalCondition> {
        let net = dnet.network();
        for name in self.terminal.nodal.keys() {
            if net.node_index(name).is_none() {
                return Err(Error::UnknownNode(name.clone()));
            }
        }
        let mut tc = if self.terminal.nodal.is_empty() {
            TerminalCondition::zero(dnet)
        } else if self.terminal.interpolate {
            terminal_from_nodal(&self.terminal.nodal, dnet)?
        } else {
            let mut tc = TerminalCondition::zero(dnet);
            for (name, &v) in &self.terminal.nodal {
                let i = net.node_index(name).expect("checked above");
                if i != net.destination() {
                    tc.pi[i] = v;
                }
            }
            tc
        };
        for p in &self.terminal.links {
            let link = net
                .find_link(&p.from, &p.to)
                .ok_or_else(|| Error::UnknownNode(format!("link ({},{})", p.from, p.to)))?;
            tc.set_link_profile(dnet, link, p.intercept, p.slope);
        }
        debug_assert!(dnet
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, n)| matches!(n.kind, NodeKind::Auxiliary { .. }))
            .all(|(i, n)| tc.pi[i] == tc.v[n.outgoing[0]]));
        Ok(tc)
    }
}

/// Writes `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn csv_writer(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path)?))
}

/// Link fields in long format, sorted by variable, link id, sublink, step.
pub fn write_fields(path: &Path, sol: &Solution) -> Result<()> {
    let dnet = &sol.problem.dnet;
    let net = dnet.network();
    let mut links: Vec<usize> = (0..net.links().len()).collect();
    links.sort_by(|&a, &b| net.links()[a].id.cmp(&net.links()[b].id));
    let mut vars: Vec<(&str, &ndarray::Array2<f64>)> = vec![
        ("V", &sol.values.v),
        ("p", &sol.traffic.p),
        ("q", &sol.traffic.q),
        ("rho", &sol.traffic.rho),
        ("u", &sol.traffic.u),
    ];
    vars.sort_by(|a, b| a.0.cmp(b.0));
    let mut w = csv_writer(path)?;
    writeln!(w, "variable,parent_link,sublink_index,k,value")?;
    for (name, field) in vars {
        for &l in &links {
            let id = &net.links()[l].id;
            for (m, &s) in dnet.chain(l).iter().enumerate() {
                for (k, &v) in field.row(s).iter().enumerate() {
                    writeln!(w, "{name},{id},{m},{k},{}", fmt_f64(v))?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn sorted_nodes(sol: &Solution) -> Vec<usize> {
    let dnet = &sol.problem.dnet;
    let mut nodes: Vec<usize> = (0..dnet.num_original_nodes()).collect();
    nodes.sort_by(|&a, &b| dnet.node(a).name.cmp(&dnet.node(b).name));
    nodes
}

/// Queue sizes at the original nodes.
pub fn write_queues(path: &Path, sol: &Solution) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "node,k,Q")?;
    for i in sorted_nodes(sol) {
        let name = &sol.problem.dnet.node(i).name;
        for (k, &q) in sol.queues.size.row(i).iter().enumerate() {
            writeln!(w, "{name},{k},{}", fmt_f64(q))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Turning ratios from each original node onto its outgoing links.
pub fn write_beta(path: &Path, sol: &Solution) -> Result<()> {
    let dnet = &sol.problem.dnet;
    let net = dnet.network();
    let mut w = csv_writer(path)?;
    writeln!(w, "node,out_link,k,beta")?;
    for i in sorted_nodes(sol) {
        let mut outs: Vec<(String, usize)> = net
            .outgoing(i)
            .iter()
            .map(|&l| (net.links()[l].id.clone(), dnet.chain(l)[0]))
            .collect();
        outs.sort();
        for (id, s) in outs {
            for (k, &b) in sol.beta.row(s).iter().enumerate() {
                writeln!(w, "{},{id},{k},{}", dnet.node(i).name, fmt_f64(b))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub name: Option<String>,
    pub mode: Mode,
    pub converged: bool,
    pub dx: f64,
    pub dt: f64,
    pub outer_iterations: usize,
    pub inner_iterations: Vec<usize>,
    pub wall_time: f64,
    pub residuals: ResidualReport,
    pub total_demand: f64,
    pub network_empty_time: Option<f64>,
    pub metrics: Metrics,
}

impl Summary {
    pub fn new(name: Option<String>, sol: &Solution) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name,
            mode: sol.mode,
            converged: sol.converged,
            dx: sol.problem.grid.dx,
            dt: sol.problem.grid.dt,
            outer_iterations: sol.outer_iterations,
            inner_iterations: sol.inner_iterations.clone(),
            wall_time: sol.wall_time,
            residuals: sol.residuals.clone(),
            total_demand: validate::total_demand(sol),
            network_empty_time: validate::network_empty_time(sol),
            metrics: validate::metrics(sol),
        }
    }
}

/// JSON formatter that prints every float with 17 significant digits.
struct Precise(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for Precise {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with full-precision floats.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    let mut ser = serde_json::Serializer::with_formatter(&mut w, Precise(serde_json::ser::PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Writes the artifacts enabled in `outputs` for one solution into `dir`.
pub fn write_solution(dir: &Path, name: Option<String>, sol: &Solution, outputs: &OutputConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    if outputs.fields {
        write_fields(&dir.join("fields.csv"), sol)?;
    }
    if outputs.queues {
        write_queues(&dir.join("queues.csv"), sol)?;
    }
    if outputs.beta {
        write_beta(&dir.join("beta.csv"), sol)?;
    }
    if outputs.summary {
        write_json(&dir.join("summary.json"), &Summary::new(name, sol))?;
    }
    Ok(())
}

/// Which equilibria to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Mfg,
    Lwr,
    Both,
}

impl RunMode {
    pub fn modes(self) -> Vec<Mode> {
        match self {
            RunMode::Mfg => vec![Mode::Mfg],
            RunMode::Lwr => vec![Mode::Lwr],
            RunMode::Both => vec![Mode::Mfg, Mode::Lwr],
        }
    }
}

/// Side-by-side numbers for the two equilibria of one network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub max_queue: BTreeMap<String, (f64, f64)>,
    pub network_empty_time: (Option<f64>, Option<f64>),
    pub mean_average_velocity: (f64, f64),
    pub peak_occupied_links: (usize, usize),
    pub time: Vec<f64>,
    pub average_velocity: (Vec<f64>, Vec<f64>),
    pub occupied_links: (Vec<usize>, Vec<usize>),
    /// Nodal cost at each origin.
    pub origin_cost: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

/// Compares an MFG solution with an LWR solution of the same problem.
pub fn compare(mfg: &Solution, lwr: &Solution) -> Comparison {
    let (ma, la) = (validate::metrics(mfg), validate::metrics(lwr));
    let mean = |v: &[f64]| {
        let occ: Vec<f64> = v.iter().copied().filter(|x| *x > 0.0).collect();
        if occ.is_empty() {
            0.0
        } else {
            occ.iter().sum::<f64>() / occ.len() as f64
        }
    };
    let peak = |v: &[usize]| v.iter().copied().max().unwrap_or(0);
    let mut max_queue = BTreeMap::new();
    for ((name, qm), (_, ql)) in ma.queues.iter().zip(&la.queues) {
        let mx = |q: &[f64]| q.iter().copied().fold(0.0, f64::max);
        max_queue.insert(name.clone(), (mx(qm), mx(ql)));
    }
    let net = mfg.problem.dnet.network();
    let mut origin_cost = BTreeMap::new();
    for &o in net.origins() {
        origin_cost.insert(
            net.node_name(o).to_string(),
            (mfg.values.pi.row(o).to_vec(), lwr.values.pi.row(o).to_vec()),
        );
    }
    Comparison {
        max_queue,
        network_empty_time: (validate::network_empty_time(mfg), validate::network_empty_time(lwr)),
        mean_average_velocity: (mean(&ma.average_velocity), mean(&la.average_velocity)),
        peak_occupied_links: (peak(&ma.occupied_links), peak(&la.occupied_links)),
        time: ma.time.clone(),
        average_velocity: (ma.average_velocity, la.average_velocity),
        occupied_links: (ma.occupied_links, la.occupied_links),
        origin_cost,
    }
}

pub struct RunOutcome {
    pub solutions: Vec<Solution>,
}

impl RunOutcome {
    pub fn converged(&self) -> bool {
        self.solutions.iter().all(|s| s.converged)
    }
}

/// Solves the configured problem in each requested mode and writes the
/// artifacts. With both modes, each goes to its own subdirectory and a
/// `comparison.json` is written next to them.
pub fn run_experiment(cfg: &ExperimentConfig, mode: RunMode, out: &Path) -> Result<RunOutcome> {
    let problem = cfg.problem()?;
    let mut solutions = Vec::new();
    for m in mode.modes() {
        let scfg = SolverConfig { mode: m, ..cfg.solver.clone() };
        let sol = solve_mfe(&problem, &scfg)?;
        let dir = if mode == RunMode::Both {
            out.join(m.to_string())
        } else {
            out.to_path_buf()
        };
        write_solution(&dir, cfg.name.clone(), &sol, &cfg.outputs)?;
        solutions.push(sol);
    }
    if let [mfg, lwr] = solutions.as_slice() {
        fs::create_dir_all(out)?;
        write_json(&out.join("comparison.json"), &compare(mfg, lwr))?;
    }
    Ok(RunOutcome { solutions })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLevel {
    /// Mesh size of the finer grid in the pair.
    pub dx: f64,
    pub errors: GridError,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub dx: Vec<f64>,
    pub converged: Vec<bool>,
    pub wall_time: Vec<f64>,
    /// One entry per consecutive pair, indexed by the coarse mesh size.
    pub levels: Vec<ConvergenceLevel>,
    pub slopes: BTreeMap<String, Option<f64>>,
}

impl ConvergenceReport {
    pub fn converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }
}

/// Solves on each mesh size (coarse to fine, each half the previous),
/// compares every solution with its projected coarse neighbour and fits the
/// log-log slope of the errors against the coarse mesh size.
pub fn convergence_study(cfg: &ExperimentConfig, dxs: &[f64], mode: Mode) -> Result<ConvergenceReport> {
    let mut dxs = dxs.to_vec();
    dxs.sort_by(|a, b| b.total_cmp(a));
    let problems = dxs
        .iter()
        .map(|&dx| cfg.problem_with_dx(dx))
        .collect::<Result<Vec<_>>>()?;
    let scfg = SolverConfig { mode, ..cfg.solver.clone() };
    let solutions: Vec<Solution> = std::thread::scope(|scope| {
        let handles: Vec<_> = problems
            .iter()
            .map(|p| scope.spawn(|| solve_mfe(p, &scfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut levels = Vec::new();
    for pair in solutions.windows(2) {
        let proj = validate::project_solution(&pair[0], &pair[1])?;
        levels.push(ConvergenceLevel {
            dx: pair[0].problem.grid.dx,
            errors: validate::grid_error(&pair[1], &proj)?,
        });
    }
    let hs: Vec<f64> = levels.iter().map(|l| l.dx).collect();
    let pick = |f: fn(&GridError) -> f64| {
        let e: Vec<f64> = levels.iter().map(|l| f(&l.errors)).collect();
        validate::loglog_slope(&hs, &e)
    };
    let mut slopes = BTreeMap::new();
    slopes.insert("rho".to_string(), pick(|e| e.rho));
    slopes.insert("u".to_string(), pick(|e| e.u));
    slopes.insert("V".to_string(), pick(|e| e.v));
    slopes.insert("beta".to_string(), pick(|e| e.beta));
    Ok(ConvergenceReport {
        dx: dxs,
        converged: solutions.iter().map(|s| s.converged).collect(),
        wall_time: solutions.iter().map(|s| s.wall_time).collect(),
        levels,
        slopes,
    })
}

/// Writes the error table of a convergence study as CSV.
pub fn write_convergence(path: &Path, report: &ConvergenceReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "dx,rho,u,V,beta")?;
    for l in &report.levels {
        let e = &l.errors;
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_f64(l.dx),
            fmt_f64(e.rho),
            fmt_f64(e.u),
            fmt_f64(e.v),
            fmt_f64(e.beta)
        )?;
    }
    w.flush()?;
    Ok(())
}
