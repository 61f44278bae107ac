//! Equilibrium solver: forward-backward sweeps for the system with frozen
//! queues, wrapped in a fixed-point loop on the queue sizes.

use std::time::Instant;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::backward::{backward_pass, nodal_cost, ValueField};
use crate::costs::{lwr_speed, optimal_speed, running_cost, CostParams, TerminalCondition};
use crate::error::{Error, Result};
use crate::forward::{forward_pass_with, mass_balance_error, QueueState, Speeds, TrafficField};
use crate::network::{DiscretizedNetwork, Grid, NodeKind};

/// Which speed law drives the vehicles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Speeds chosen optimally by every vehicle.
    Mfg,
    /// Speeds dictated by the Greenshields law.
    Lwr,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Mfg => "mfg",
            Mode::Lwr => "lwr",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Threshold on the squared queue change between outer iterations.
    pub eps_outer: f64,
    /// Threshold on the inner equilibrium gap.
    pub tol_inner: f64,
    /// Weight of the damped sweep used when a Newton step fails.
    pub omega: f64,
    /// Step of the projected route update.
    pub route_step: f64,
    /// Largest Krylov space built per Newton step.
    pub krylov_dim: usize,
    /// History length of the mixing applied to the queue iterates; 0 gives
    /// plain substitution.
    pub outer_depth: usize,
    /// Fraction of the queue update taken per outer iteration.
    pub outer_relax: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub mode: Mode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_outer: 1e-6,
            tol_inner: 1e-6,
            omega: 0.5,
            route_step: 1.0,
            krylov_dim: 60,
            outer_depth: 5,
            outer_relax: 0.15,
            max_outer: 50,
            max_inner: 5_000,
            mode: Mode::Mfg,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Error::Config {
            field: format!("solver.{field}"),
            reason: reason.into(),
        };
        if !(self.eps_outer > 0.0) {
            return Err(bad("eps_outer", "must be positive"));
        }
        if !(self.tol_inner > 0.0) {
            return Err(bad("tol_inner", "must be positive"));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(bad("omega", "must lie in (0, 1]"));
        }
        if !(self.route_step > 0.0 && self.route_step.is_finite()) {
            return Err(bad("route_step", "must be positive"));
        }
        if !(self.outer_relax > 0.0 && self.outer_relax <= 1.0) {
            return Err(bad("outer_relax", "must lie in (0, 1]"));
        }
        if self.max_outer == 0 {
            return Err(bad("max_outer", "must be at least 1"));
        }
        if self.krylov_dim == 0 {
            return Err(bad("krylov_dim", "must be at least 1"));
        }
        if self.max_inner == 0 {
            return Err(bad("max_inner", "must be at least 1"));
        }
        Ok(())
    }
}

/// Everything needed to pose one equilibrium problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub dnet: DiscretizedNetwork,
    pub params: CostParams,
    pub terminal: TerminalCondition,
    pub grid: Grid,
}

impl Problem {
    pub fn new(
        dnet: DiscretizedNetwork,
        params: CostParams,
        terminal: TerminalCondition,
        grid: Grid,
    ) -> Result<Self> {
        params.validate()?;
        grid.check_cfl(params.u_max)?;
        if (dnet.dx() - grid.dx).abs() > 1e-12 * grid.dx {
            return Err(Error::ShapeMismatch("network refined with a different dx".into()));
        }
        if terminal.v.len() != dnet.num_sublinks() || terminal.pi.len() != dnet.num_nodes() {
            return Err(Error::ShapeMismatch("terminal condition".into()));
        }
        Ok(Self {
            dnet,
            params,
            terminal,
            grid,
        })
    }
}

/// Equation defects of a solution. All entries are nonnegative.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub queue_lcp_residual: f64,
    pub route_comp_residual: f64,
    pub hjb_residual: f64,
    pub continuity_residual: f64,
    pub mass_balance_error: f64,
    pub outer_error_history: Vec<f64>,
}

/// Result of one solve with queues frozen in the nodal costs.
#[derive(Clone, Debug)]
pub struct RelaxedSolution {
    pub traffic: TrafficField,
    pub queues: QueueState,
    pub values: ValueField,
    /// Turning ratios actually used for loading.
    pub beta: Array2<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub problem: Problem,
    pub mode: Mode,
    pub traffic: TrafficField,
    pub queues: QueueState,
    pub values: ValueField,
    pub beta: Array2<f64>,
    pub residuals: ResidualReport,
    pub outer_iterations: usize,
    pub inner_iterations: Vec<usize>,
    pub converged: bool,
    pub wall_time: f64,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(x: &mut [f64]) {
    match x.len() {
        0 => {}
        1 => x[0] = 1.0,
        _ => {
            let mut sorted = x.to_vec();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let mut cum = 0.0;
            let mut theta = 0.0;
            for (j, &y) in sorted.iter().enumerate() {
                cum += y;
                let t = (cum - 1.0) / (j + 1) as f64;
                if y - t > 0.0 {
                    theta = t;
                }
            }
            for v in x.iter_mut() {
                *v = (*v - theta).max(0.0);
            }
        }
    }
}

/// Turning ratios splitting every node's outflow evenly.
pub fn uniform_beta(dnet: &DiscretizedNetwork, nt: usize) -> Array2<f64> {
    let mut b = Array2::zeros((dnet.num_sublinks(), nt));
    for node in dnet.nodes() {
        let n = node.outgoing.len() as f64;
        for &s in &node.outgoing {
            b.row_mut(s).fill(1.0 / n);
        }
    }
    b
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0, |m: f64, &x, &y| m.max((x - y).abs()))
}

fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m: f64, &x| m.max(x.abs()))
}

/// Largest defect of the route complementarity conditions: `beta (V - pi)`,
/// `V < pi`, negative shares and shares not summing to one.
pub fn route_residual(dnet: &DiscretizedNetwork, beta: &Array2<f64>, values: &ValueField) -> f64 {
    let dest = dnet.destination();
    let nt = beta.ncols();
    let mut res: f64 = 0.0;
    for (i, node) in dnet.nodes().iter().enumerate() {
        if i == dest {
            continue;
        }
        for k in 0..nt {
            let pi = values.pi[[i, k]];
            let mut sum = 0.0;
            for &s in &node.outgoing {
                let b = beta[[s, k]];
                let gap = values.v[[s, k]] - pi;
                sum += b;
                res = res.max((b * gap).abs()).max(-gap).max(-b);
            }
            res = res.max((sum - 1.0).abs());
        }
    }
    res
}

/// Starting point for [`solve_relaxed`]: densities and turning ratios.
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub rho: Array2<f64>,
    pub beta: Array2<f64>,
}

/// Floor on the flow weight of a share defect, so shares at idle nodes still
/// settle.
const SHARE_WEIGHT_FLOOR: f64 = 1e-2;

/// One backward-forward sweep from the state `(rho, beta)`.
struct Sweep {
    values: ValueField,
    beta: Array2<f64>,
    traffic: TrafficField,
    queues: QueueState,
    /// Outflow of the node each sublink leaves, per step.
    flow: Array2<f64>,
}

struct Sweeper<'a> {
    problem: &'a Problem,
    frozen: &'a Array2<f64>,
    cfg: &'a SolverConfig,
    rho_dim: (usize, usize),
    beta_dim: (usize, usize),
    count: usize,
}

impl Sweeper<'_> {
    fn unpack(&self, x: &[f64]) -> (Array2<f64>, Array2<f64>) {
        let n = self.rho_dim.0 * self.rho_dim.1;
        let rho = Array2::from_shape_vec(self.rho_dim, x[..n].to_vec()).expect("shape");
        let beta = Array2::from_shape_vec(self.beta_dim, x[n..].to_vec()).expect("shape");
        (rho, beta)
    }

    fn run(&mut self, x: &[f64]) -> Result<Sweep> {
        let Problem {
            dnet,
            params,
            terminal,
            grid,
        } = self.problem;
        self.count += 1;
        let (rho, beta) = self.unpack(x);
        let values = backward_pass(dnet, &rho, self.frozen, terminal, params, grid, self.cfg.mode)?;
        let speeds = match self.cfg.mode {
            Mode::Mfg => Speeds::Given(&values.u),
            Mode::Lwr => Speeds::Lwr(params),
        };
        // Where flow leaves a node, shares take a projected step against the
        // cost excess; where none does, they jump to the best response, since
        // nothing downstream reacts to them.
        let step = self.cfg.route_step;
        let mut used = values.beta.clone();
        let mut flow = Array2::zeros(beta.dim());
        let (traffic, queues) = forward_pass_with(dnet, speeds, grid, |i, k, outflow, shares| {
            let out = &dnet.node(i).outgoing;
            for &s in out {
                flow[[s, k]] = outflow;
            }
            if out.len() == 1 {
                shares[0] = 1.0;
            } else if outflow > 0.0 {
                let pi = values.pi[[i, k]];
                for (b, &s) in shares.iter_mut().zip(out) {
                    *b = beta[[s, k]] - step * (values.v[[s, k]] - pi);
                }
                project_simplex(shares);
            } else {
                for (b, &s) in shares.iter_mut().zip(out) {
                    *b = values.beta[[s, k]];
                }
            }
            for (&b, &s) in shares.iter().zip(out) {
                used[[s, k]] = b;
            }
        })?;
        Ok(Sweep {
            values,
            beta: used,
            traffic,
            queues,
            flow,
        })
    }

    /// Fixed-point defect `x - G(x)`.
    fn defect(x: &[f64], sw: &Sweep) -> Vec<f64> {
        let image = sw.traffic.rho.iter().chain(sw.beta.iter());
        x.iter().zip(image).map(|(a, b)| a - b).collect()
    }

    /// Defect with each share scaled by the flow it splits. The share image
    /// jumps when a node starts or stops discharging, but then the flow it
    /// governs is small, so the scaled defect stays continuous.
    fn weighted(x: &[f64], sw: &Sweep) -> Vec<f64> {
        let mut f = Self::defect(x, sw);
        let n = sw.traffic.rho.len();
        for (d, w) in f[n..].iter_mut().zip(sw.flow.iter()) {
            *d *= w + SHARE_WEIGHT_FLOOR;
        }
        f
    }
}

fn pack(rho: &Array2<f64>, beta: &Array2<f64>) -> Vec<f64> {
    rho.iter().chain(beta.iter()).copied().collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// GMRES without restarts for `A d = b`, with `A` given as a fallible
/// operator. Stops at relative residual `rtol` or after `dim` steps.
fn gmres<F>(mut apply: F, b: &[f64], rtol: f64, dim: usize) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = b.len();
    let beta = norm(b);
    if beta == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|x| x / beta).collect()];
    let mut h: Vec<Vec<f64>> = Vec::new();
    let (mut cs, mut sn): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut g = vec![beta];
    let mut steps = 0;
    for j in 0..dim {
        let mut w = apply(&basis[j])?;
        let mut col = Vec::with_capacity(j + 2);
        for v in &basis {
            let hij = dot(&w, v);
            w.iter_mut().zip(v).for_each(|(a, b)| *a -= hij * b);
            col.push(hij);
        }
        let hn = norm(&w);
        col.push(hn);
        for i in 0..j {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let r = col[j].hypot(col[j + 1]);
        let (c, s) = if r == 0.0 { (1.0, 0.0) } else { (col[j] / r, col[j + 1] / r) };
        cs.push(c);
        sn.push(s);
        col[j] = r;
        col[j + 1] = 0.0;
        g.push(-s * g[j]);
        g[j] *= c;
        h.push(col);
        steps = j + 1;
        if g[j + 1].abs() <= rtol * beta || hn == 0.0 {
            break;
        }
        basis.push(w.iter().map(|x| x / hn).collect());
    }
    let mut y = vec![0.0; steps];
    for i in (0..steps).rev() {
        let s: f64 = (i + 1..steps).map(|k| h[k][i] * y[k]).sum();
        y[i] = if h[i][i] == 0.0 { 0.0 } else { (g[i] - s) / h[i][i] };
    }
    let mut d = vec![0.0; n];
    for (yi, v) in y.iter().zip(&basis) {
        d.iter_mut().zip(v).for_each(|(a, b)| *a += yi * b);
    }
    Ok(d)
}

/// Solves the system with the nodal costs evaluated on `frozen` queues.
///
/// The unknowns are the densities seen by the value recursion and the turning
/// ratios. Their fixed-point defect is driven to zero by an inexact Newton
/// method with finite-difference Krylov solves and a backtracking line
/// search; damped sweeps take over when the line search stalls.
pub fn solve_relaxed(
    problem: &Problem,
    frozen: &Array2<f64>,
    cfg: &SolverConfig,
    warm: Option<WarmStart>,
) -> Result<RelaxedSolution> {
    let dnet = &problem.dnet;
    let ns = dnet.num_sublinks();
    let nt = problem.grid.nt;
    let (rho, beta) = match warm {
        Some(w) => (w.rho, w.beta),
        None => (Array2::zeros((ns, nt + 1)), uniform_beta(dnet, nt)),
    };
    let mut sw = Sweeper {
        problem,
        frozen,
        cfg,
        rho_dim: rho.dim(),
        beta_dim: beta.dim(),
        count: 0,
    };
    let n_rho = ns * (nt + 1);
    let mut x = pack(&rho, &beta);
    let mut cur = sw.run(&x)?;
    let mut f = Sweeper::weighted(&x, &cur);
    let mut prev_v: Option<Array2<f64>> = None;

    loop {
        let d_rho = f[..n_rho].iter().fold(0.0, |m: f64, a| m.max(a.abs()))
            / max_abs(&cur.traffic.rho).max(1.0);
        let d_beta = f[n_rho..].iter().fold(0.0, |m: f64, a| m.max(a.abs()));
        let d_v = prev_v.as_ref().map_or(f64::INFINITY, |p| {
            max_abs_diff(&cur.values.v, p) / max_abs(&cur.values.v).max(1.0)
        });
        let route = route_residual(dnet, &cur.beta, &cur.values);
        // A state that reproduces itself exactly has nothing left to change.
        let gap = if d_rho == 0.0 && d_beta == 0.0 && prev_v.is_none() {
            route
        } else {
            route.max(d_rho).max(d_beta).max(d_v)
        };
        if gap <= cfg.tol_inner || sw.count >= cfg.max_inner {
            return Ok(RelaxedSolution {
                traffic: cur.traffic,
                queues: cur.queues,
                values: cur.values,
                beta: cur.beta,
                iterations: sw.count,
                gap,
                converged: gap <= cfg.tol_inner,
            });
        }

        let fnorm = norm(&f);
        let h = 1e-7 * norm(&x).max(1.0);
        let rhs: Vec<f64> = f.iter().map(|a| -a).collect();
        let budget = cfg.krylov_dim.min(cfg.max_inner.saturating_sub(sw.count + 1)).max(1);
        let step = {
            let sw = &mut sw;
            let x = &x;
            let f = &f;
            gmres(
                |v| {
                    let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
                    let s = sw.run(&xp)?;
                    let fp = Sweeper::weighted(&xp, &s);
                    Ok(fp.iter().zip(f).map(|(a, b)| (a - b) / h).collect())
                },
                &rhs,
                0.1f64.min(fnorm.sqrt()),
                budget,
            )?
        };

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..6 {
            if sw.count >= cfg.max_inner {
                break;
            }
            let xt: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
            let st = sw.run(&xt)?;
            let ft = Sweeper::weighted(&xt, &st);
            if norm(&ft) <= (1.0 - 1e-4 * alpha) * fnorm {
                accepted = Some((xt, st, ft));
                break;
            }
            alpha *= 0.5;
        }
        let (xt, st, ft) = match accepted {
            Some(a) => a,
            None => {
                let raw = Sweeper::defect(&x, &cur);
                let xt: Vec<f64> = x.iter().zip(&raw).map(|(a, r)| a - cfg.omega * r).collect();
                let st = sw.run(&xt)?;
                let ft = Sweeper::weighted(&xt, &st);
                (xt, st, ft)
            }
        };
        prev_v = Some(std::mem::replace(&mut cur, st).values.v);
        x = xt;
        f = ft;
    }
}

/// Squared Euclidean distance between two queue histories.
pub fn outer_error(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |s, &x, &y| s + (x - y) * (x - y))
}

/// Anderson mixing for a fixed point x = g(x) of small dimension.
struct Mixer {
    depth: usize,
    theta: f64,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl Mixer {
    fn new(depth: usize, theta: f64) -> Self {
        Self {
            depth,
            theta,
            xs: Vec::new(),
            fs: Vec::new(),
        }
    }

    fn step(&mut self, x: &[f64], g: &[f64]) -> Vec<f64> {
        let f: Vec<f64> = g.iter().zip(x).map(|(a, b)| a - b).collect();
        self.xs.push(x.to_vec());
        self.fs.push(f.clone());
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        let m = self.xs.len() - 1;
        let th = self.theta;
        if m == 0 {
            return x.iter().zip(&f).map(|(a, b)| a + th * b).collect();
        }
        // Differences against the newest iterate.
        let df: Vec<Vec<f64>> = (0..m)
            .map(|j| f.iter().zip(&self.fs[j]).map(|(a, b)| a - b).collect())
            .collect();
        let dx: Vec<Vec<f64>> = (0..m)
            .map(|j| x.iter().zip(&self.xs[j]).map(|(a, b)| a - b).collect())
            .collect();
        let mut a = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        let mut scale = 0.0_f64;
        for i in 0..m {
            for j in 0..m {
                a[i][j] = dot(&df[i], &df[j]);
            }
            rhs[i] = dot(&df[i], &f);
            scale = scale.max(a[i][i]);
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1e-10 * scale.max(f64::MIN_POSITIVE);
        }
        let Some(gamma) = solve_dense(a, rhs) else {
            self.xs.clear();
            self.fs.clear();
            return g.to_vec();
        };
        let mut out: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + th * b).collect();
        for j in 0..m {
            for (o, (dxv, dfv)) in out.iter_mut().zip(dx[j].iter().zip(&df[j])) {
                *o -= gamma[j] * (dxv + th * dfv);
            }
        }
        out
    }
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let t = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= t * a[c][k];
            }
            b[r] -= t * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Computes the equilibrium by iterating on the queue sizes seen by the
/// nodal costs, starting from empty queues.
pub fn solve_mfe(problem: &Problem, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let start = Instant::now();
    let nn = problem.dnet.num_nodes();
    let nt = problem.grid.nt;
    let mut frozen = Array2::zeros((nn, nt + 1));
    let mut history = Vec::new();
    let mut inner = Vec::new();
    let mut warm = None;
    let mut last = None;
    let mut converged = false;

    let mut mixer = Mixer::new(cfg.outer_depth, cfg.outer_relax);

    for _ in 0..cfg.max_outer {
        let rel = solve_relaxed(problem, &frozen, cfg, warm.take())?;
        inner.push(rel.iterations);
        let err = outer_error(&rel.queues.size, &frozen);
        history.push(err);
        warm = Some(WarmStart {
            rho: rel.traffic.rho.clone(),
            beta: rel.beta.clone(),
        });
        let inner_ok = rel.converged;
        let image = rel.queues.size.clone();
        last = Some(rel);
        if err <= cfg.eps_outer {
            converged = inner_ok;
            break;
        }
        let x: Vec<f64> = frozen.iter().copied().collect();
        let g: Vec<f64> = image.iter().copied().collect();
        let next = mixer.step(&x, &g);
        frozen = Array2::from_shape_vec(image.raw_dim(), next)
            .expect("queue shape is fixed")
            .mapv(|v| v.max(0.0));
        frozen.column_mut(0).fill(0.0);
    }
    let rel = last.expect("max_outer >= 1");
    let mut sol = Solution {
        problem: problem.clone(),
        mode: cfg.mode,
        traffic: rel.traffic,
        queues: rel.queues,
        values: rel.values,
        beta: rel.beta,
        residuals: ResidualReport::default(),
        outer_iterations: history.len(),
        inner_iterations: inner,
        converged,
        wall_time: 0.0,
    };
    sol.residuals = verify_residuals(&sol);
    sol.residuals.outer_error_history = history;
    sol.wall_time = start.elapsed().as_secs_f64();
    Ok(sol)
}

/// Recomputes every equation defect from the stored fields, using the
/// solution's own queues in the nodal costs.
pub fn verify_residuals(sol: &Solution) -> ResidualReport {
    let Problem {
        dnet,
        params,
        grid,
        terminal,
    } = &sol.problem;
    let (tf, qs, vf, beta) = (&sol.traffic, &sol.queues, &sol.values, &sol.beta);
    let nt = grid.nt;
    let dt = grid.dt;
    let dest = dnet.destination();
    let net = dnet.network();

    let mut queue_res: f64 = 0.0;
    let mut cont_res: f64 = 0.0;
    for k in 0..nt {
        let t = grid.time(k);
        for (i, node) in dnet.nodes().iter().enumerate() {
            if i == dest {
                continue;
            }
            let inflow: f64 = node.incoming.iter().map(|&s| tf.q[[s, k]]).sum();
            let demand = match node.kind {
                NodeKind::Original => net.demand(i).map_or(0.0, |d| d.rate_at(t)),
                NodeKind::Auxiliary { .. } => 0.0,
            };
            let (q0, q1) = (qs.size[[i, k]], qs.size[[i, k + 1]]);
            let entry: f64 = node.outgoing.iter().map(|&s| tf.p[[s, k]]).sum();
            let total_out = inflow + demand - (q1 - q0) / dt;
            if node.capacity.is_finite() {
                let slack = (q1 - q0) / dt + node.capacity - inflow - demand;
                queue_res = queue_res.max(-slack).max(-q1).max((slack * q1).abs());
            } else {
                queue_res = queue_res.max(q1.abs());
            }
            queue_res = queue_res.max((entry - total_out).abs());
            // Entry flows follow the turning ratios.
            for &s in &node.outgoing {
                cont_res = cont_res.max((tf.p[[s, k]] - beta[[s, k]] * total_out).abs());
            }
        }
        for s in 0..dnet.num_sublinks() {
            let expect = tf.rho[[s, k]] + grid.ratio() * (tf.p[[s, k]] - tf.q[[s, k]]);
            cont_res = cont_res
                .max((tf.rho[[s, k + 1]] - expect).abs())
                .max((tf.q[[s, k]] - tf.rho[[s, k]] * tf.u[[s, k]]).abs())
                .max(-tf.rho[[s, k + 1]]);
        }
    }
    for s in 0..dnet.num_sublinks() {
        cont_res = cont_res.max(tf.rho[[s, 0]].abs());
    }

    // Value recursion with nodal costs rebuilt from the solution's own queues.
    let mut hjb_res: f64 = 0.0;
    let mut lambda = Array2::zeros(vf.pi.dim());
    for (i, node) in dnet.nodes().iter().enumerate() {
        if i == dest {
            continue;
        }
        for k in 0..=nt {
            lambda[[i, k]] = nodal_cost(vf.pi.row(i), qs.size[[i, k]], node.capacity, k, grid, params);
        }
    }
    for (s, sub) in dnet.sublinks().iter().enumerate() {
        hjb_res = hjb_res.max((vf.v[[s, nt]] - terminal.v[s]).abs());
        for k in 0..nt {
            let grad = (lambda[[sub.to, k + 1]] - vf.v[[s, k + 1]]) / grid.dx;
            let r = tf.rho[[s, k]];
            let u = vf.u[[s, k]];
            let expect = vf.v[[s, k + 1]] + dt * (u * grad + running_cost(u, r, &sub.coeffs, params));
            hjb_res = hjb_res.max((vf.v[[s, k]] - expect).abs());
            let target = match sol.mode {
                Mode::Mfg => optimal_speed(grad, r, &sub.coeffs, params),
                Mode::Lwr => lwr_speed(r, params),
            };
            hjb_res = hjb_res.max((u - target).abs());
            cont_res = cont_res.max((tf.u[[s, k]] - u).abs());
        }
    }

    ResidualReport {
        queue_lcp_residual: queue_res,
        route_comp_residual: route_residual(dnet, beta, vf),
        hjb_residual: hjb_res,
        continuity_residual: cont_res,
        mass_balance_error: mass_balance_error(dnet, tf, qs),
        outer_error_history: sol.residuals.outer_error_history.clone(),
    }
}
