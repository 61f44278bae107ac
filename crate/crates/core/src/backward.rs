//! Backward value recursion: link costs and optimal speeds, nodal costs with
//! queue delay, and route best responses.

use ndarray::{Array2, ArrayView1};

use crate::costs::{lwr_speed, optimal_speed, queuing_cost, running_cost, CostParams, TerminalCondition};
use crate::error::{Error, Result};
use crate::network::{DiscretizedNetwork, Grid, LinkCoeffs};
use crate::solver::Mode;

/// Backward unknowns. `v`, `pi` and `lambda` have `nt + 1` time layers; `u`
/// and `beta` have `nt`. `beta` is indexed by sublink: the share of its start
/// node's outflow that enters it.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueField {
    pub v: Array2<f64>,
    pub u: Array2<f64>,
    pub pi: Array2<f64>,
    pub lambda: Array2<f64>,
    pub beta: Array2<f64>,
}

/// Ties in the route choice are detected with this relative tolerance.
pub fn tie_tol(pi: f64) -> f64 {
    1e-9 * (1.0 + pi.abs())
}

/// One step of the link value recursion on a sublink.
///
/// `speed` overrides the optimal speed (used by the LWR model).
pub fn hjb_link_step(
    v_next: f64,
    lambda_next: f64,
    rho: f64,
    coeffs: &LinkCoeffs,
    params: &CostParams,
    grid: &Grid,
    speed: Option<f64>,
) -> (f64, f64) {
    let grad = (lambda_next - v_next) / grid.dx;
    let u = speed.unwrap_or_else(|| optimal_speed(grad, rho, coeffs, params));
    let v = v_next + grid.dt * (u * grad + running_cost(u, rho, coeffs, params));
    (v, u)
}

/// Cost of joining the queue at a node at step `k`: the value at the (possibly
/// fractional) exit step plus the queuing cost of the wait.
pub fn nodal_cost(
    pi: ArrayView1<'_, f64>,
    queue: f64,
    capacity: f64,
    k: usize,
    grid: &Grid,
    params: &CostParams,
) -> f64 {
    if !capacity.is_finite() || queue <= 0.0 {
        return pi[k];
    }
    let nt = grid.nt;
    let delay = queue / capacity;
    let wait = queuing_cost(delay.min(grid.horizon - grid.time(k)), params);
    let pos = k as f64 + queue / (capacity * grid.dt);
    if pos >= nt as f64 {
        return pi[nt] + wait;
    }
    let lo = pos.floor() as usize;
    let w = pos - lo as f64;
    let base = if w == 0.0 {
        pi[lo]
    } else {
        (1.0 - w) * pi[lo] + w * pi[lo + 1]
    };
    base + wait
}

/// Minimum over outgoing values and the uniform split over the minimizers.
pub fn route_best_response(v_row: &[f64], beta: &mut [f64]) -> f64 {
    let pi = v_row.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = tie_tol(pi);
    let ties = v_row.iter().filter(|&&v| v <= pi + tol).count() as f64;
    for (b, &v) in beta.iter_mut().zip(v_row) {
        *b = if v <= pi + tol { 1.0 / ties } else { 0.0 };
    }
    pi
}

/// Runs the value recursion from the terminal layer down to step 0 against
/// the given densities and frozen queue sizes.
pub fn backward_pass(
    dnet: &DiscretizedNetwork,
    rho: &Array2<f64>,
    queues: &Array2<f64>,
    terminal: &TerminalCondition,
    params: &CostParams,
    grid: &Grid,
    mode: Mode,
) -> Result<ValueField> {
    let ns = dnet.num_sublinks();
    let nn = dnet.num_nodes();
    let nt = grid.nt;
    let dest = dnet.destination();
    if rho.dim() != (ns, nt + 1) || queues.dim() != (nn, nt + 1) {
        return Err(Error::ShapeMismatch(format!(
            "densities {:?} and queues {:?} for {ns} sublinks, {nn} nodes, {nt} steps",
            rho.dim(),
            queues.dim()
        )));
    }
    if terminal.v.len() != ns || terminal.pi.len() != nn {
        return Err(Error::ShapeMismatch("terminal condition".into()));
    }

    let mut vf = ValueField {
        v: Array2::zeros((ns, nt + 1)),
        u: Array2::zeros((ns, nt)),
        pi: Array2::zeros((nn, nt + 1)),
        lambda: Array2::zeros((nn, nt + 1)),
        beta: Array2::zeros((ns, nt)),
    };
    for s in 0..ns {
        vf.v[[s, nt]] = terminal.v[s];
    }
    for i in 0..nn {
        if i != dest {
            vf.pi[[i, nt]] = terminal.pi[i];
        }
    }
    let fill_lambda = |vf: &mut ValueField, k: usize| {
        for (i, node) in dnet.nodes().iter().enumerate() {
            vf.lambda[[i, k]] = if i == dest {
                0.0
            } else {
                nodal_cost(vf.pi.row(i), queues[[i, k]], node.capacity, k, grid, params)
            };
        }
    };
    fill_lambda(&mut vf, nt);

    let mut row = Vec::new();
    let mut shares = Vec::new();
    for k in (0..nt).rev() {
        for (s, sub) in dnet.sublinks().iter().enumerate() {
            let r = rho[[s, k]];
            let speed = match mode {
                Mode::Mfg => None,
                Mode::Lwr => Some(lwr_speed(r, params)),
            };
            let (v, u) = hjb_link_step(
                vf.v[[s, k + 1]],
                vf.lambda[[sub.to, k + 1]],
                r,
                &sub.coeffs,
                params,
                grid,
                speed,
            );
            vf.v[[s, k]] = v;
            vf.u[[s, k]] = u;
        }
        for (i, node) in dnet.nodes().iter().enumerate() {
            if i == dest {
                continue;
            }
            row.clear();
            row.extend(node.outgoing.iter().map(|&s| vf.v[[s, k]]));
            shares.clear();
            shares.resize(row.len(), 0.0);
            vf.pi[[i, k]] = route_best_response(&row, &mut shares);
            for (&s, &b) in node.outgoing.iter().zip(&shares) {
                vf.beta[[s, k]] = b;
            }
        }
        fill_lambda(&mut vf, k);
    }
    Ok(vf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::*;
    use crate::network::{build_network, discretize};
    use proptest::prelude::*;

    fn p() -> CostParams {
        CostParams::default()
    }

    #[test]
    fn hjb_step_examples() {
        let c = LinkCoeffs::new(1.0, 1.0, 0.5);
        let g = Grid::new(0.5, 0.5, 1.0).unwrap();
        let (v, u) = hjb_link_step(0.7, 0.7, 0.0, &c, &p(), &g, None);
        assert_eq!(u, 0.0);
        assert!((v - (0.7 + 0.5 * 0.5)).abs() < 1e-15);
        let (v, u) = hjb_link_step(1.0, 0.5, 0.0, &c, &p(), &g, None);
        assert_eq!(u, 1.0);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn destination_adjacent_steady_state() {
        // Iterate the recursion until it stops changing, then check the
        // stationary equation directly.
        let c = LinkCoeffs::new(1.0, 1.0, 0.5);
        let g = Grid::new(0.1, 0.1, 1.0).unwrap();
        let mut v = 0.0;
        for _ in 0..10_000 {
            v = hjb_link_step(v, 0.0, 0.0, &c, &p(), &g, None).0;
        }
        let grad = -v / g.dx;
        let u = optimal_speed(grad, 0.0, &c, &p());
        assert!((u * grad + running_cost(u, 0.0, &c, &p())).abs() < 1e-12);
        // With u = 1 the balance is v = dx (c1/2 + c3).
        assert!((v - g.dx * (0.5 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn nodal_cost_examples() {
        let g = Grid::new(0.1, 0.1, 1.0).unwrap();
        let pi = ndarray::Array1::from_shape_fn(11, |k| 10.0 - k as f64);
        assert_eq!(nodal_cost(pi.view(), 0.0, 1.0, 3, &g, &p()), 7.0);
        // Q/(M dt) = 1.5 at k = 0.
        let lam = nodal_cost(pi.view(), 0.15, 1.0, 0, &g, &p());
        assert!((lam - (0.5 * 9.0 + 0.5 * 8.0 + 0.15)).abs() < 1e-12);
        // Past the horizon.
        let lam = nodal_cost(pi.view(), 5.0, 1.0, 4, &g, &p());
        assert!((lam - (0.0 + (1.0 - 0.4))).abs() < 1e-12);
        assert_eq!(nodal_cost(pi.view(), 5.0, f64::INFINITY, 4, &g, &p()), 6.0);
    }

    #[test]
    fn best_response_examples() {
        let mut b = [0.0; 2];
        assert_eq!(route_best_response(&[2.0, 3.0], &mut b), 2.0);
        assert_eq!(b, [1.0, 0.0]);
        assert_eq!(route_best_response(&[2.0, 2.0], &mut b), 2.0);
        assert_eq!(b, [0.5, 0.5]);
        let mut b = [0.0];
        assert_eq!(route_best_response(&[1.7], &mut b), 1.7);
        assert_eq!(b, [1.0]);
    }

    proptest! {
        #[test]
        fn best_response_shift_invariance(
            row in proptest::collection::vec(0.0f64..10.0, 1..5), shift in -5.0f64..5.0,
        ) {
            let mut b1 = vec![0.0; row.len()];
            let mut b2 = vec![0.0; row.len()];
            let pi1 = route_best_response(&row, &mut b1);
            let shifted: Vec<f64> = row.iter().map(|v| v + shift).collect();
            let pi2 = route_best_response(&shifted, &mut b2);
            prop_assert!((pi2 - pi1 - shift).abs() < 1e-12);
            let support = |b: &[f64]| b.iter().map(|&x| x > 0.0).collect::<Vec<_>>();
            // Shifting may move a near-tie across the tolerance; only demand
            // equal supports when the gaps are not near it.
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            if row.iter().all(|&v| v == min || v - min > 1e-6) {
                prop_assert_eq!(support(&b1), support(&b2));
            }
            prop_assert!((b1.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(row.iter().copied().fold(f64::INFINITY, f64::min) - pi1, 0.0);
        }
    }

    fn zero_fields(d: &DiscretizedNetwork, g: &Grid) -> (Array2<f64>, Array2<f64>) {
        (
            Array2::zeros((d.num_sublinks(), g.nt + 1)),
            Array2::zeros((d.num_nodes(), g.nt + 1)),
        )
    }

    #[test]
    fn single_link_values_decrease_toward_destination() {
        let net = build_network(&single_link(1.0)).unwrap();
        let g = Grid::new(0.1, 0.1, 3.0).unwrap();
        let d = discretize(&net, &g).unwrap();
        let (rho, q) = zero_fields(&d, &g);
        let tc = TerminalCondition::zero(&d);
        let vf = backward_pass(&d, &rho, &q, &tc, &p(), &g, Mode::Mfg).unwrap();
        let chain = d.chain(0);
        assert!(vf.v[[chain[0], 0]] > 0.0);
        for w in chain.windows(2) {
            assert!(vf.v[[w[0], 0]] > vf.v[[w[1], 0]]);
        }
        assert!(vf.v.iter().all(|&v| v >= 0.0));
        assert!(vf.lambda.row(d.destination()).iter().all(|&l| l == 0.0));
    }

    #[test]
    fn degenerate_costs_propagate_terminal_values() {
        let mut spec = single_link(1.0);
        spec.links[0].c1 = 1e-9;
        spec.links[0].c2 = 0.0;
        spec.links[0].c3 = 0.0;
        let net = build_network(&spec).unwrap();
        let g = Grid::new(0.25, 0.25, 1.0).unwrap();
        let d = discretize(&net, &g).unwrap();
        let (rho, q) = zero_fields(&d, &g);
        let mut pi = std::collections::BTreeMap::new();
        pi.insert("a".to_string(), 0.0);
        let tc = crate::costs::terminal_from_nodal(&pi, &d).unwrap();
        let params = CostParams { c4: 0.0, ..p() };
        let vf = backward_pass(&d, &rho, &q, &tc, &params, &g, Mode::Mfg).unwrap();
        assert!(vf.v.iter().all(|&v| v == 0.0));
        assert!(vf.u.iter().all(|&u| u == params.u_min));
    }

    #[test]
    fn two_path_symmetric_split() {
        let net = build_network(&two_path()).unwrap();
        let g = Grid::new(0.1, 0.1, 3.0).unwrap();
        let d = discretize(&net, &g).unwrap();
        let (rho, q) = zero_fields(&d, &g);
        let vf = backward_pass(&d, &rho, &q, &TerminalCondition::zero(&d), &p(), &g, Mode::Mfg)
            .unwrap();
        let out = &d.node(0).outgoing;
        assert_eq!(vf.v[[out[0], 0]], vf.v[[out[1], 0]]);
        assert_eq!(vf.beta[[out[0], 0]], 0.5);
        assert_eq!(vf.beta[[out[1], 0]], 0.5);
    }

    #[test]
    fn density_free_costs_ignore_density() {
        let mut spec = two_path();
        for l in &mut spec.links {
            l.c2 = 0.0;
        }
        let net = build_network(&spec).unwrap();
        let g = Grid::new(0.25, 0.25, 2.0).unwrap();
        let d = discretize(&net, &g).unwrap();
        let (rho0, q) = zero_fields(&d, &g);
        let rho1 = Array2::from_shape_fn(rho0.dim(), |(s, k)| ((s * 7 + k * 3) % 5) as f64 * 0.1);
        let tc = TerminalCondition::zero(&d);
        let a = backward_pass(&d, &rho0, &q, &tc, &p(), &g, Mode::Mfg).unwrap();
        let b = backward_pass(&d, &rho1, &q, &tc, &p(), &g, Mode::Mfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lwr_mode_uses_greenshields_speeds() {
        let net = build_network(&two_path()).unwrap();
        let g = Grid::new(0.25, 0.25, 2.0).unwrap();
        let d = discretize(&net, &g).unwrap();
        let (_, q) = zero_fields(&d, &g);
        let rho = Array2::from_shape_fn((d.num_sublinks(), g.nt + 1), |(s, k)| ((s + k) % 4) as f64 * 0.2);
        let vf = backward_pass(&d, &rho, &q, &TerminalCondition::zero(&d), &p(), &g, Mode::Lwr)
            .unwrap();
        for s in 0..d.num_sublinks() {
            for k in 0..g.nt {
                assert_eq!(vf.u[[s, k]], lwr_speed(rho[[s, k]], &p()));
            }
        }
    }
}
