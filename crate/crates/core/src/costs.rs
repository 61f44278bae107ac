//! Running, queuing and terminal costs, plus the two speed laws.
//!
//! The running cost is the quadratic family
//! `c1/2 (u/u_max)^2 + c2 rho/rho_jam + c3`, so the pointwise minimization in
//! the value recursion has a closed-form solution ([`optimal_speed`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{DiscretizedNetwork, LinkCoeffs, NodeKind};

/// Cost and speed parameters shared by every link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Queuing cost per unit of delay.
    pub c4: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub rho_jam: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            c4: 1.0,
            u_min: 0.0,
            u_max: 1.0,
            rho_jam: 1.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidCoefficient {
            owner: "global costs".into(),
            reason: reason.into(),
        };
        if !(self.c4 >= 0.0) {
            return Err(bad("c4 must be nonnegative"));
        }
        if !(self.u_min >= 0.0 && self.u_min < self.u_max) || !self.u_max.is_finite() {
            return Err(bad("need 0 <= u_min < u_max"));
        }
        if !(self.rho_jam > 0.0) {
            return Err(bad("rho_jam must be positive"));
        }
        Ok(())
    }
}

pub fn running_cost(u: f64, rho: f64, c: &LinkCoeffs, params: &CostParams) -> f64 {
    let s = u / params.u_max;
    0.5 * c.c1 * s * s + c.c2 * rho / params.rho_jam + c.c3
}

pub fn queuing_cost(delay: f64, params: &CostParams) -> f64 {
    params.c4 * delay
}

/// Greenshields speed `u_max (1 - rho/rho_jam)`, clamped to the admissible range.
pub fn lwr_speed(rho: f64, params: &CostParams) -> f64 {
    let u = params.u_max * (1.0 - rho / params.rho_jam);
    u.max(0.0).clamp(params.u_min, params.u_max)
}

/// Minimizer of `u * grad + running_cost(u, rho)` over `[u_min, u_max]`.
///
/// The density term does not depend on `u`, so `rho` only enters through the
/// objective value, never through the minimizer.
pub fn optimal_speed(grad: f64, _rho: f64, c: &LinkCoeffs, params: &CostParams) -> f64 {
    let unconstrained = -grad * params.u_max * params.u_max / c.c1;
    unconstrained.clamp(params.u_min, params.u_max)
}

/// Final-time values: `v` per sublink (value at the sublink start) and `pi`
/// per node of the discretized network (zero at the destination).
#[derive(Clone, Debug, PartialEq)]
pub struct TerminalCondition {
    pub v: Vec<f64>,
    pub pi: Vec<f64>,
}

impl TerminalCondition {
    pub fn zero(dnet: &DiscretizedNetwork) -> Self {
        Self {
            v: vec![0.0; dnet.num_sublinks()],
            pi: vec![0.0; dnet.num_nodes()],
        }
    }

    /// Overrides link `link` with the affine profile `intercept + slope * x`,
    /// sampled at sublink starts.
    pub fn set_link_profile(
        &mut self,
        dnet: &DiscretizedNetwork,
        link: usize,
        intercept: f64,
        slope: f64,
    ) {
        let dx = dnet.dx();
        for &s in dnet.chain(link) {
            let x = dnet.sublink(s).position as f64 * dx;
            self.v[s] = intercept + slope * x;
        }
        self.sync_auxiliary(dnet);
    }

    /// Auxiliary nodes have a single way out, so their value is that sublink's.
    fn sync_auxiliary(&mut self, dnet: &DiscretizedNetwork) {
        for (i, node) in dnet.nodes().iter().enumerate() {
            if let NodeKind::Auxiliary { .. } = node.kind {
                self.pi[i] = self.v[node.outgoing[0]];
            }
        }
    }
}

/// Terminal values from nodal values, linearly interpolated along each link.
///
/// `pi_term` is keyed by node name; the destination defaults to zero.
pub fn terminal_from_nodal(
    pi_term: &BTreeMap<String, f64>,
    dnet: &DiscretizedNetwork,
) -> Result<TerminalCondition> {
    let net = dnet.network();
    let mut pi = vec![0.0; dnet.num_nodes()];
    for i in 0..net.num_nodes() {
        if i == net.destination() {
            continue;
        }
        let name = net.node_name(i);
        pi[i] = *pi_term
            .get(name)
            .ok_or_else(|| Error::MissingTerminal(name.to_string()))?;
    }
    let mut v = vec![0.0; dnet.num_sublinks()];
    for (li, link) in net.links().iter().enumerate() {
        let chain = dnet.chain(li);
        let n = chain.len() as f64;
        let (a, b) = (pi[link.from], pi[link.to]);
        for &s in chain {
            let theta = dnet.sublink(s).position as f64 / n;
            v[s] = a + (b - a) * theta;
        }
    }
    let mut tc = TerminalCondition { v, pi };
    tc.sync_auxiliary(dnet);
    Ok(tc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::*;
    use crate::network::{build_network, discretize, Grid};
    use proptest::prelude::*;

    fn p() -> CostParams {
        CostParams::default()
    }

    /// Dense grid search over [u_min, u_max]; independent of the closed form.
    fn grid_argmin(grad: f64, rho: f64, c: &LinkCoeffs, params: &CostParams, n: usize) -> f64 {
        let mut best = (f64::INFINITY, params.u_min);
        for i in 0..=n {
            let u = params.u_min + (params.u_max - params.u_min) * i as f64 / n as f64;
            let val = u * grad + running_cost(u, rho, c, params);
            if val < best.0 {
                best = (val, u);
            }
        }
        best.1
    }

    #[test]
    fn running_cost_examples() {
        let c = LinkCoeffs::new(1.0, 1.0, 0.5);
        assert_eq!(running_cost(0.0, 0.0, &c, &p()), 0.5);
        assert!((running_cost(1.0, 0.5, &c, &p()) - 1.5).abs() < 1e-15);
        let c = LinkCoeffs::new(5.0, 5.0, 5.0);
        assert!((running_cost(0.5, 1.0, &c, &p()) - 10.625).abs() < 1e-15);
    }

    #[test]
    fn queuing_cost_is_linear() {
        assert_eq!(queuing_cost(0.0, &p()), 0.0);
        assert_eq!(queuing_cost(0.3, &p()), 0.3);
        assert_eq!(queuing_cost(2.0, &p()), 2.0);
    }

    #[test]
    fn lwr_speed_examples() {
        assert_eq!(lwr_speed(0.0, &p()), 1.0);
        assert_eq!(lwr_speed(1.0, &p()), 0.0);
        assert_eq!(lwr_speed(0.5, &p()), 0.5);
        assert_eq!(lwr_speed(3.0, &p()), 0.0);
    }

    #[test]
    fn optimal_speed_examples() {
        let c = LinkCoeffs::new(1.0, 1.0, 0.5);
        assert_eq!(optimal_speed(0.0, 0.3, &c, &p()), 0.0);
        assert_eq!(optimal_speed(-0.5, 0.3, &c, &p()), 0.5);
        assert_eq!(optimal_speed(-5.0, 0.3, &c, &p()), 1.0);
        assert!((grid_argmin(-0.5, 0.3, &c, &p(), 100_000) - 0.5).abs() < 1e-5);
        assert_eq!(grid_argmin(-5.0, 0.3, &c, &p(), 1000), 1.0);
    }

    proptest! {
        #[test]
        fn optimal_speed_matches_grid_search(
            grad in -10.0f64..10.0,
            rho in 0.0f64..2.0,
            c1 in 0.1f64..10.0,
            c2 in 0.0f64..5.0,
            u_max in 0.5f64..2.0,
        ) {
            let params = CostParams { u_max, ..p() };
            let c = LinkCoeffs::new(c1, c2, 0.5);
            let u = optimal_speed(grad, rho, &c, &params);
            let obj = |u: f64| u * grad + running_cost(u, rho, &c, &params);
            let g = grid_argmin(grad, rho, &c, &params, 20_000);
            // Objective at the closed form never loses to the grid.
            prop_assert!(obj(u) <= obj(g) + 1e-12);
            prop_assert!((u - g).abs() <= 2.0 * u_max / 20_000.0 + 1e-9 || (obj(u) - obj(g)).abs() < 1e-9);
        }

        #[test]
        fn running_cost_strictly_convex_in_speed(
            u in 0.0f64..0.8, h in 0.01f64..0.1, rho in 0.0f64..1.0, c1 in 0.1f64..5.0,
        ) {
            let c = LinkCoeffs::new(c1, 1.0, 0.5);
            let f = |u| running_cost(u, rho, &c, &p());
            prop_assert!(f(u) - 2.0 * f(u + h) + f(u + 2.0 * h) > 0.0);
        }

        #[test]
        fn lwr_speed_nonincreasing(a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(lwr_speed(lo, &p()) >= lwr_speed(hi, &p()));
        }
    }

    #[test]
    fn nodal_interpolation() {
        let net = build_network(&single_link(1.0)).unwrap();
        let d = discretize(&net, &Grid::new(0.5, 0.5, 2.0).unwrap()).unwrap();
        // Destination value defaults to zero.
        let tc = terminal_from_nodal(&[("a".to_string(), 2.0)].into(), &d).unwrap();
        assert_eq!(tc.v, vec![2.0, 1.0]);
        assert_eq!(tc.pi[2], 1.0);
    }

    #[test]
    fn nodal_interpolation_between_two_nodes() {
        let net = build_network(&two_path()).unwrap();
        let d = discretize(&net, &Grid::new(0.5, 0.5, 3.0).unwrap()).unwrap();
        let pi = [("1", 2.0), ("2", 1.0), ("3", 1.0)].map(|(k, v)| (k.to_string(), v));
        let tc = terminal_from_nodal(&pi.into(), &d).unwrap();
        let l12 = net.find_link("1", "2").unwrap();
        let vals: Vec<f64> = d.chain(l12).iter().map(|&s| tc.v[s]).collect();
        assert_eq!(vals, vec![2.0, 1.5]);
    }

    #[test]
    fn zero_nodal_values_give_zero_terminal() {
        let net = build_network(&two_path()).unwrap();
        let d = discretize(&net, &Grid::new(0.5, 0.5, 3.0).unwrap()).unwrap();
        let pi = [("1", 0.0), ("2", 0.0), ("3", 0.0)].map(|(k, v)| (k.to_string(), v));
        let tc = terminal_from_nodal(&pi.into(), &d).unwrap();
        assert!(tc.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_nodal_value_names_node() {
        let net = build_network(&two_path()).unwrap();
        let d = discretize(&net, &Grid::new(0.5, 0.5, 3.0).unwrap()).unwrap();
        let pi = [("1", 0.0), ("2", 0.0)].map(|(k, v)| (k.to_string(), v));
        let err = terminal_from_nodal(&pi.into(), &d).unwrap_err();
        assert!(matches!(err, Error::MissingTerminal(n) if n == "3"));
    }

    #[test]
    fn affine_link_profile() {
        let net = build_network(&two_path()).unwrap();
        let d = discretize(&net, &Grid::new(0.25, 0.25, 3.0).unwrap()).unwrap();
        let mut tc = TerminalCondition::zero(&d);
        let l12 = net.find_link("1", "2").unwrap();
        tc.set_link_profile(&d, l12, 2.0, -1.0);
        let vals: Vec<f64> = d.chain(l12).iter().map(|&s| tc.v[s]).collect();
        assert_eq!(vals, vec![2.0, 1.75, 1.5, 1.25]);
        let aux = d.sublink(d.chain(l12)[1]).from;
        assert_eq!(tc.pi[aux], 1.75);
    }
}
