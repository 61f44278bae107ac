//! Dynamic network loading: upwind continuity on sublinks and Vickrey point
//! queues at nodes, advanced forward in time.

use ndarray::Array2;

use crate::costs::{lwr_speed, CostParams};
use crate::error::{Error, Result};
use crate::network::{DiscretizedNetwork, Grid, NodeKind};

/// Densities allowed to dip this far below zero before the scheme is declared broken.
pub const NEGATIVE_TOL: f64 = 1e-12;

/// Forward unknowns on every sublink. `rho` has `nt + 1` time layers, the
/// flow quantities `nt`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficField {
    pub rho: Array2<f64>,
    pub u: Array2<f64>,
    /// Exit flow `rho * u`.
    pub q: Array2<f64>,
    /// Entry flow.
    pub p: Array2<f64>,
}

/// Queue sizes at every node of the discretized network (zero at auxiliary
/// nodes and the destination), with node outflows and cumulative counters.
#[derive(Clone, Debug, PartialEq)]
pub struct QueueState {
    pub size: Array2<f64>,
    pub outflow: Array2<f64>,
    /// Vehicles that reached the destination before time `t_k`.
    pub arrived: Vec<f64>,
    /// Vehicles that departed before time `t_k`.
    pub departed: Vec<f64>,
}

/// Where the forward pass takes its speeds from.
#[derive(Clone, Copy, Debug)]
pub enum Speeds<'a> {
    /// A precomputed field, e.g. the optimal speeds of the value recursion.
    Given(&'a Array2<f64>),
    /// `u = U(rho)` evaluated on the fly.
    Lwr(&'a CostParams),
}

/// One backward-Euler step of a Vickrey queue.
///
/// `arrivals` is the total arrival rate (link inflow plus demand). Returns the
/// next queue size and the discharge rate.
pub fn queue_step(queue: f64, arrivals: f64, capacity: f64, dt: f64) -> (f64, f64) {
    if !capacity.is_finite() {
        return (0.0, arrivals + queue / dt);
    }
    let next = (queue + dt * (arrivals - capacity)).max(0.0);
    let outflow = if next > 0.0 {
        capacity
    } else {
        arrivals + queue / dt
    };
    (next, outflow)
}

/// Distributes `outflow` over outgoing sublinks in proportion to `beta`.
pub fn split_outflow(outflow: f64, beta: &[f64], entry: &mut [f64]) {
    for (p, &b) in entry.iter_mut().zip(beta) {
        *p = if outflow > 0.0 { b * outflow } else { 0.0 };
    }
}

/// Upwind update of one sublink density.
pub fn continuity_step(rho: f64, entry: f64, exit: f64, grid: &Grid) -> f64 {
    rho + grid.ratio() * (entry - exit)
}

/// Loads the network for the given speeds and turning ratios.
///
/// `beta` is indexed by sublink (the ratio of the sublink's start node that
/// goes into it) and time step.
pub fn forward_pass(
    dnet: &DiscretizedNetwork,
    speeds: Speeds<'_>,
    beta: &Array2<f64>,
    grid: &Grid,
) -> Result<(TrafficField, QueueState)> {
    let ns = dnet.num_sublinks();
    if beta.dim() != (ns, grid.nt) {
        return Err(Error::ShapeMismatch(format!(
            "turning ratios {:?}, expected {:?}",
            beta.dim(),
            (ns, grid.nt)
        )));
    }
    forward_pass_with(dnet, speeds, grid, |i, k, _, shares| {
        for (b, &s) in shares.iter_mut().zip(&dnet.node(i).outgoing) {
            *b = beta[[s, k]];
        }
    })
}

/// Like [`forward_pass`], but the turning ratios of node `i` at step `k` are
/// chosen by `ratios(i, k, outflow, shares)` once the node's outflow is known.
/// Ratios of a node at step `k` never influence its own outflow at `k`.
pub fn forward_pass_with<R>(
    dnet: &DiscretizedNetwork,
    speeds: Speeds<'_>,
    grid: &Grid,
    mut ratios: R,
) -> Result<(TrafficField, QueueState)>
where
    R: FnMut(usize, usize, f64, &mut [f64]),
{
    let ns = dnet.num_sublinks();
    let nn = dnet.num_nodes();
    let nt = grid.nt;
    let dest = dnet.destination();
    let net = dnet.network();
    if let Speeds::Given(u) = speeds {
        if u.dim() != (ns, nt) {
            return Err(Error::ShapeMismatch(format!(
                "speeds {:?}, expected {:?}",
                u.dim(),
                (ns, nt)
            )));
        }
    }

    let mut tf = TrafficField {
        rho: Array2::zeros((ns, nt + 1)),
        u: Array2::zeros((ns, nt)),
        q: Array2::zeros((ns, nt)),
        p: Array2::zeros((ns, nt)),
    };
    let mut qs = QueueState {
        size: Array2::zeros((nn, nt + 1)),
        outflow: Array2::zeros((nn, nt)),
        arrived: vec![0.0; nt + 1],
        departed: vec![0.0; nt + 1],
    };
    let mut betas = Vec::new();
    let mut entries = Vec::new();

    for k in 0..nt {
        let t = grid.time(k);
        for s in 0..ns {
            let rho = tf.rho[[s, k]];
            let u = match speeds {
                Speeds::Given(field) => field[[s, k]],
                Speeds::Lwr(params) => lwr_speed(rho, params),
            };
            tf.u[[s, k]] = u;
            tf.q[[s, k]] = rho * u;
        }

        let mut demand_total = 0.0;
        for (i, node) in dnet.nodes().iter().enumerate() {
            let link_inflow: f64 = node.incoming.iter().map(|&s| tf.q[[s, k]]).sum();
            if i == dest {
                qs.arrived[k + 1] = qs.arrived[k] + grid.dt * link_inflow;
                continue;
            }
            let demand = match node.kind {
                NodeKind::Original => net.demand(i).map_or(0.0, |d| d.rate_at(t)),
                NodeKind::Auxiliary { .. } => 0.0,
            };
            demand_total += demand;
            let (next, outflow) =
                queue_step(qs.size[[i, k]], link_inflow + demand, node.capacity, grid.dt);
            qs.size[[i, k + 1]] = next;
            qs.outflow[[i, k]] = outflow;
            betas.clear();
            betas.resize(node.outgoing.len(), 0.0);
            ratios(i, k, outflow, &mut betas);
            entries.clear();
            entries.resize(node.outgoing.len(), 0.0);
            split_outflow(outflow, &betas, &mut entries);
            for (&s, &p) in node.outgoing.iter().zip(&entries) {
                tf.p[[s, k]] = p;
            }
        }
        qs.departed[k + 1] = qs.departed[k] + grid.dt * demand_total;

        for s in 0..ns {
            let next = continuity_step(tf.rho[[s, k]], tf.p[[s, k]], tf.q[[s, k]], grid);
            if next < -NEGATIVE_TOL {
                return Err(Error::SchemeViolation(format!(
                    "negative density {next:e} on sublink {s} at step {}",
                    k + 1
                )));
            }
            tf.rho[[s, k + 1]] = next;
        }
    }
    Ok((tf, qs))
}

/// Vehicles on links and in queues at every time layer.
pub fn network_mass(dnet: &DiscretizedNetwork, tf: &TrafficField, qs: &QueueState) -> Vec<f64> {
    let dx = dnet.dx();
    (0..tf.rho.ncols())
        .map(|k| tf.rho.column(k).sum() * dx + qs.size.column(k).sum())
        .collect()
}

/// Largest relative mass-balance defect over all time layers.
pub fn mass_balance_error(dnet: &DiscretizedNetwork, tf: &TrafficField, qs: &QueueState) -> f64 {
    let total = qs.departed.last().copied().unwrap_or(0.0);
    let scale = total.max(f64::MIN_POSITIVE);
    network_mass(dnet, tf, qs)
        .iter()
        .enumerate()
        .map(|(k, m)| (m + qs.arrived[k] - qs.departed[k]).abs() / scale)
        .fold(0.0, f64::max)
}
