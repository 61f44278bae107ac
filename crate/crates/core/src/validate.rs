//! Checks that sit outside the solver: a single-car oracle for the value
//! function, multigrid projection and errors, and experiment metrics.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::{queuing_cost, running_cost};
use crate::error::{Error, Result};
use crate::forward::network_mass;
use crate::solver::Solution;

/// Density above which a sublink counts as occupied.
pub const OCCUPANCY_THRESHOLD: f64 = 1e-3;
/// Total mass below which the network counts as empty.
pub const EMPTY_THRESHOLD: f64 = 1e-3;

const TIME_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Routing {
    /// Follow the cheapest outgoing sublink; ties go to the lowest index.
    Argmin,
    /// Draw the next sublink from the turning ratios.
    Sample { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Drive,
    Enqueue,
    Dequeue,
    Arrive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Place {
    Sublink(usize),
    Node(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarEvent {
    pub time: f64,
    /// Distance from the start of the sublink; zero at nodes.
    pub position: f64,
    pub place: Place,
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarTrajectory {
    pub origin: usize,
    pub t0: f64,
    pub events: Vec<CarEvent>,
    pub cost: f64,
    /// `None` when the car is still travelling at the horizon.
    pub arrival: Option<f64>,
}

impl CarTrajectory {
    pub fn censored(&self) -> bool {
        self.arrival.is_none()
    }
}

/// Drives one car through the solved fields and adds up the cost it incurs.
///
/// The car is too light to change the fields. On a sublink it moves at the
/// cell speed of the current time step and crosses the cell in one or more
/// pieces, never skipping one. At a node it waits `Q / M` and then picks an
/// outgoing sublink.
pub fn simulate_car(sol: &Solution, origin: &str, t0: f64, routing: Routing) -> Result<CarTrajectory> {
    let p = &sol.problem;
    let dnet = &p.dnet;
    let grid = &p.grid;
    let horizon = grid.horizon;
    let net = dnet.network();
    let origin_idx = net
        .node_index(origin)
        .ok_or_else(|| Error::UnknownNode(origin.to_string()))?;
    if !net.origins().contains(&origin_idx) {
        return Err(Error::Config {
            field: "origin".into(),
            reason: format!("node {origin} has no demand"),
        });
    }
    if !(0.0..=horizon + TIME_EPS).contains(&t0) {
        return Err(Error::Config {
            field: "t0".into(),
            reason: format!("{t0} lies outside [0, {horizon}]"),
        });
    }

    let step_of = |t: f64| ((t / grid.dt + 1e-9).floor() as usize).min(grid.nt);
    let mut rng = match routing {
        Routing::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Routing::Argmin => None,
    };
    let dest = dnet.destination();
    let mut events = Vec::new();
    let mut cost = 0.0;
    let mut t = t0;
    let mut node = origin_idx;

    loop {
        if node == dest {
            events.push(CarEvent { time: t, position: 0.0, place: Place::Node(node), kind: EventKind::Arrive });
            return Ok(CarTrajectory { origin: origin_idx, t0, events, cost, arrival: Some(t) });
        }
        if t >= horizon - TIME_EPS {
            cost += p.terminal.pi[node];
            return Ok(CarTrajectory { origin: origin_idx, t0, events, cost, arrival: None });
        }

        let info = dnet.node(node);
        let queue = sol.queues.size[[node, step_of(t)]];
        let mut dequeued = false;
        if info.capacity.is_finite() && queue > 0.0 {
            let leave = (t + queue / info.capacity).min(horizon);
            cost += queuing_cost(leave - t, &p.params);
            events.push(CarEvent { time: t, position: 0.0, place: Place::Node(node), kind: EventKind::Enqueue });
            t = leave;
            dequeued = true;
            if t >= horizon - TIME_EPS {
                cost += p.terminal.pi[node];
                return Ok(CarTrajectory { origin: origin_idx, t0, events, cost, arrival: None });
            }
        }

        let k = step_of(t).min(grid.nt - 1);
        let s = choose(&info.outgoing, |s| sol.values.v[[s, k]], |s| sol.beta[[s, k]], rng.as_mut());
        let kind = if dequeued { EventKind::Dequeue } else { EventKind::Drive };
        events.push(CarEvent { time: t, position: 0.0, place: Place::Sublink(s), kind });

        let sub = dnet.sublink(s);
        let mut pos = 0.0;
        loop {
            let k = step_of(t).min(grid.nt - 1);
            let step_end = grid.time(k + 1).min(horizon);
            let u = sol.traffic.u[[s, k]];
            let f = running_cost(u, sol.traffic.rho[[s, k]], &sub.coeffs, &p.params);
            let remaining = grid.dx - pos;
            let reach = t + if u > 0.0 { remaining / u } else { f64::INFINITY };
            if reach <= step_end + TIME_EPS * horizon.max(1.0) {
                cost += f * (reach - t);
                t = reach;
                break;
            }
            cost += f * (step_end - t);
            pos += u * (step_end - t);
            t = step_end;
            if t >= horizon - TIME_EPS {
                cost += p.terminal.v[s];
                events.push(CarEvent { time: t, position: pos, place: Place::Sublink(s), kind: EventKind::Drive });
                return Ok(CarTrajectory { origin: origin_idx, t0, events, cost, arrival: None });
            }
        }
        node = sub.to;
    }
}

fn choose(
    outgoing: &[usize],
    value: impl Fn(usize) -> f64,
    share: impl Fn(usize) -> f64,
    rng: Option<&mut ChaCha8Rng>,
) -> usize {
    let argmin = || {
        outgoing
            .iter()
            .copied()
            .min_by(|&a, &b| value(a).total_cmp(&value(b)))
            .expect("every non-destination node has an outgoing sublink")
    };
    let Some(rng) = rng else {
        return argmin();
    };
    let total: f64 = outgoing.iter().map(|&s| share(s).max(0.0)).sum();
    if !(total > 0.0) {
        return argmin();
    }
    let mut draw = rng.gen::<f64>() * total;
    for &s in outgoing {
        draw -= share(s).max(0.0);
        if draw < 0.0 {
            return s;
        }
    }
    *outgoing.last().expect("nonempty")
}

/// Coarse fields copied onto the grid refined once in space and time.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedFields {
    pub rho: Array2<f64>,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub beta: Array2<f64>,
}

/// Piecewise-constant projection of `coarse` onto the sublinks and steps of
/// `fine`, which must be the same network on the grid halved in dx and dt.
pub fn project_solution(coarse: &Solution, fine: &Solution) -> Result<ProjectedFields> {
    let cg = &coarse.problem.grid;
    let fg = &fine.problem.grid;
    let nested = fg.nt == 2 * cg.nt
        && (fg.dx * 2.0 - cg.dx).abs() <= 1e-9 * cg.dx
        && (fg.dt * 2.0 - cg.dt).abs() <= 1e-9 * cg.dt;
    if !nested {
        return Err(Error::GridNotNested(format!("dx {} against {}", cg.dx, fg.dx)));
    }
    let cn = &coarse.problem.dnet;
    let fnet = &fine.problem.dnet;
    if cn.network().links().len() != fnet.network().links().len() {
        return Err(Error::ShapeMismatch("networks differ".into()));
    }
    let mut map = vec![0; fnet.num_sublinks()];
    for l in 0..cn.network().links().len() {
        let (cc, fc) = (cn.chain(l), fnet.chain(l));
        if fc.len() != 2 * cc.len() {
            return Err(Error::GridNotNested(format!("dx {} against {}", cg.dx, fg.dx)));
        }
        for (m, &s) in fc.iter().enumerate() {
            map[s] = cc[m / 2];
        }
    }
    let lift = |src: &Array2<f64>, cols: usize| {
        Array2::from_shape_fn((map.len(), cols), |(s, k)| src[[map[s], (k / 2).min(src.ncols() - 1)]])
    };
    let nt = fg.nt;
    Ok(ProjectedFields {
        rho: lift(&coarse.traffic.rho, nt + 1),
        u: lift(&coarse.traffic.u, nt),
        v: lift(&coarse.values.v, nt + 1),
        beta: lift(&coarse.beta, nt),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridError {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
    pub beta: f64,
}

/// Mean absolute errors between `fine` and a projected coarse solution.
///
/// The turning-ratio error only covers sublinks leaving a node with more than
/// one exit, where the ratio is a choice rather than a constant 1.
pub fn grid_error(fine: &Solution, proj: &ProjectedFields) -> Result<GridError> {
    let check = |a: &Array2<f64>, b: &Array2<f64>, what: &str| {
        if a.dim() != b.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} against {:?}",
                a.dim(),
                b.dim()
            )));
        }
        Ok(())
    };
    check(&fine.traffic.rho, &proj.rho, "rho")?;
    check(&fine.traffic.u, &proj.u, "u")?;
    check(&fine.values.v, &proj.v, "V")?;
    check(&fine.beta, &proj.beta, "beta")?;
    let mae = |a: &Array2<f64>, b: &Array2<f64>| {
        if a.is_empty() {
            return 0.0;
        }
        (a - b).mapv(f64::abs).sum() / a.len() as f64
    };
    let dnet = &fine.problem.dnet;
    let choice: Vec<usize> = dnet
        .nodes()
        .iter()
        .filter(|n| n.outgoing.len() > 1)
        .flat_map(|n| n.outgoing.iter().copied())
        .collect();
    let beta = if choice.is_empty() {
        0.0
    } else {
        let mut sum = 0.0;
        for &s in &choice {
            sum += (&fine.beta.row(s) - &proj.beta.row(s)).mapv(f64::abs).sum();
        }
        sum / (choice.len() * fine.beta.ncols()) as f64
    };
    Ok(GridError {
        rho: mae(&fine.traffic.rho, &proj.rho),
        u: mae(&fine.traffic.u, &proj.u),
        v: mae(&fine.values.v, &proj.v),
        beta,
    })
}

/// Least-squares slope of `log(err)` against `log(dx)`; `None` with fewer
/// than two positive errors.
pub fn loglog_slope(dx: &[f64], err: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = dx
        .iter()
        .zip(err)
        .filter(|(h, e)| **h > 0.0 && **e > 0.0)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub time: Vec<f64>,
    pub average_velocity: Vec<f64>,
    pub occupied_links: Vec<usize>,
    pub network_mass: Vec<f64>,
    /// Per original node, by name.
    pub pi: Vec<(String, Vec<f64>)>,
    pub queues: Vec<(String, Vec<f64>)>,
}

/// Time series summarizing a solution, one entry per speed step.
pub fn metrics(sol: &Solution) -> Metrics {
    let dnet = &sol.problem.dnet;
    let grid = &sol.problem.grid;
    let rho = &sol.traffic.rho;
    let u = &sol.traffic.u;
    let nlinks = dnet.network().links().len();
    let mass = network_mass(dnet, &sol.traffic, &sol.queues);
    let mut m = Metrics::default();
    for k in 0..grid.nt {
        m.time.push(grid.time(k));
        let (mut num, mut den) = (0.0, 0.0);
        for s in 0..dnet.num_sublinks() {
            num += rho[[s, k]] * u[[s, k]];
            den += rho[[s, k]];
        }
        m.average_velocity.push(if den > 0.0 { num / den } else { 0.0 });
        let occupied = (0..nlinks)
            .filter(|&l| dnet.chain(l).iter().any(|&s| rho[[s, k]] > OCCUPANCY_THRESHOLD))
            .count();
        m.occupied_links.push(occupied);
        m.network_mass.push(mass[k]);
    }
    for i in 0..dnet.num_original_nodes() {
        let name = dnet.node(i).name.clone();
        m.pi.push((name.clone(), sol.values.pi.row(i).to_vec()));
        m.queues.push((name, sol.queues.size.row(i).to_vec()));
    }
    m
}

/// First time from which the total mass on links and in queues stays below
/// `EMPTY_THRESHOLD` until the horizon, once every vehicle has departed.
pub fn network_empty_time(sol: &Solution) -> Option<f64> {
    let grid = &sol.problem.grid;
    let mass = network_mass(&sol.problem.dnet, &sol.traffic, &sol.queues);
    let departed = &sol.queues.departed;
    let total = departed.last().copied().unwrap_or(0.0);
    if total <= 0.0 {
        return Some(0.0);
    }
    let mut first = None;
    for k in (0..mass.len()).rev() {
        if mass[k] >= EMPTY_THRESHOLD || departed[k] < total - EMPTY_THRESHOLD {
            break;
        }
        first = Some(k);
    }
    first.map(|k| grid.time(k))
}

/// Step index of time `t`, rounded to the nearest layer.
fn nearest_step(sol: &Solution, t: f64) -> usize {
    let g = &sol.problem.grid;
    ((t / g.dt).round().max(0.0) as usize).min(g.nt)
}

fn link_mass(sol: &Solution, link: usize, k: usize) -> f64 {
    let dnet = &sol.problem.dnet;
    dnet.chain(link).iter().map(|&s| sol.traffic.rho[[s, k]]).sum::<f64>() * dnet.dx()
}

fn resolve_link(sol: &Solution, from: &str, to: &str) -> Result<usize> {
    sol.problem
        .dnet
        .network()
        .find_link(from, to)
        .ok_or_else(|| Error::UnknownNode(format!("link ({from},{to})")))
}

/// Share of the on-network mass (links and queues) at time `t` that sits on
/// the given original links.
pub fn link_mass_fraction(sol: &Solution, links: &[(&str, &str)], t: f64) -> Result<f64> {
    let k = nearest_step(sol, t);
    let total = network_mass(&sol.problem.dnet, &sol.traffic, &sol.queues)[k];
    let mut part = 0.0;
    for (a, b) in links {
        part += link_mass(sol, resolve_link(sol, a, b)?, k);
    }
    Ok(if total > 0.0 { part / total } else { 0.0 })
}

/// Share of the on-network mass at time `t` that lies on the path through
/// `nodes`, counting its links and the queues at its nodes.
pub fn path_mass_fraction(sol: &Solution, nodes: &[&str], t: f64) -> Result<f64> {
    let k = nearest_step(sol, t);
    let net = sol.problem.dnet.network();
    let total = network_mass(&sol.problem.dnet, &sol.traffic, &sol.queues)[k];
    let mut part = 0.0;
    for w in nodes.windows(2) {
        part += link_mass(sol, resolve_link(sol, w[0], w[1])?, k);
    }
    for name in nodes {
        let i = net.node_index(name).ok_or_else(|| Error::UnknownNode(name.to_string()))?;
        part += sol.queues.size[[i, k]];
    }
    Ok(if total > 0.0 { part / total } else { 0.0 })
}

/// Vehicles that entered link `(from, to)` over the whole horizon.
pub fn link_entry_volume(sol: &Solution, from: &str, to: &str) -> Result<f64> {
    let link = resolve_link(sol, from, to)?;
    let first = sol.problem.dnet.chain(link)[0];
    Ok(sol.traffic.p.row(first).sum() * sol.problem.grid.dt)
}

/// Total demand released over the horizon.
pub fn total_demand(sol: &Solution) -> f64 {
    sol.queues.departed.last().copied().unwrap_or(0.0)
}

/// Series of the nodal cost of original node `name`.
pub fn pi_series(sol: &Solution, name: &str) -> Result<Vec<f64>> {
    let i = sol
        .problem
        .dnet
        .network()
        .node_index(name)
        .ok_or_else(|| Error::UnknownNode(name.to_string()))?;
    Ok(sol.values.pi.row(i).to_vec())
}
