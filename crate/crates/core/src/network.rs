//! Road networks, space-time grids and the sublink refinement of a network.
//!
//! A [`Network`] is the validated directed graph the equilibrium is posed on.
//! [`discretize`] replaces each link of length `len` by a chain of
//! `len / dx` sublinks joined by auxiliary nodes; auxiliary nodes carry an
//! infinite bottleneck capacity so flow passes through them without queuing.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that a ratio is an integer.
const INTEGER_TOL: f64 = 1e-9;

/// Running-cost coefficients of one link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkCoeffs {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl LinkCoeffs {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Self {
        Self { c1, c2, c3 }
    }
}

/// One constant-rate piece of a demand profile, active on `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandPiece {
    pub start: f64,
    pub end: f64,
    pub rate: f64,
}

/// Piecewise-constant departure rate at an origin.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pieces: Vec<DemandPiece>,
}

impl Demand {
    pub fn new(pieces: Vec<DemandPiece>) -> Self {
        Self { pieces }
    }

    /// Demand that is `rate` on `[0, until)` and zero afterwards.
    pub fn pulse(rate: f64, until: f64) -> Self {
        Self::new(vec![DemandPiece {
            start: 0.0,
            end: until,
            rate,
        }])
    }

    pub fn pieces(&self) -> &[DemandPiece] {
        &self.pieces
    }

    /// Rate at time `t`. Overlapping pieces add up.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.pieces
            .iter()
            .filter(|p| {
                let eps = INTEGER_TOL * (1.0 + p.end.abs());
                t >= p.start - eps && t < p.end - eps
            })
            .map(|p| p.rate)
            .sum()
    }
}

/// A link of the original network.
#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub length: f64,
    pub coeffs: LinkCoeffs,
}

/// Unvalidated description of a link, as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default)]
    pub id: Option<String>,
    pub from: String,
    pub to: String,
    pub length: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Unvalidated network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub nodes: Vec<String>,
    pub links: Vec<LinkSpec>,
    pub origins: Vec<String>,
    pub destination: String,
    /// Bottleneck capacity `M_i` of every non-destination node.
    pub capacities: BTreeMap<String, f64>,
    /// Demand profile of each origin.
    #[serde(default)]
    pub demand: BTreeMap<String, Vec<DemandPiece>>,
}

/// A validated single-destination road network.
#[derive(Clone, Debug)]
pub struct Network {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    links: Vec<Link>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
    origins: Vec<usize>,
    destination: usize,
    capacities: Vec<f64>,
    demand: Vec<Option<Demand>>,
}

impl Network {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_name(&self, node: usize) -> &str {
        &self.nodes[node]
    }

    pub fn node_names(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    /// Index of the link `from -> to`, looked up by node names.
    pub fn find_link(&self, from: &str, to: &str) -> Option<usize> {
        let (f, t) = (self.node_index(from)?, self.node_index(to)?);
        self.links.iter().position(|l| l.from == f && l.to == t)
    }

    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    pub fn outgoing(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }

    pub fn origins(&self) -> &[usize] {
        &self.origins
    }

    pub fn destination(&self) -> usize {
        self.destination
    }

    /// Bottleneck capacity; infinite for the destination.
    pub fn capacity(&self, node: usize) -> f64 {
        self.capacities[node]
    }

    pub fn demand(&self, node: usize) -> Option<&Demand> {
        self.demand[node].as_ref()
    }

    /// Shortest distance (by link length) from every node to the destination.
    pub fn distance_to_destination(&self) -> Vec<f64> {
        let n = self.num_nodes();
        let mut dist = vec![f64::INFINITY; n];
        dist[self.destination] = 0.0;
        // Bellman-Ford is plenty for desk-sized networks.
        for _ in 0..n {
            let mut changed = false;
            for link in &self.links {
                let cand = dist[link.to] + link.length;
                if cand < dist[link.from] {
                    dist[link.from] = cand;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        dist
    }
}

fn check_coeffs(owner: &str, c: &LinkCoeffs) -> Result<()> {
    let bad = |reason: &str| Error::InvalidCoefficient {
        owner: owner.to_string(),
        reason: reason.to_string(),
    };
    if !(c.c1 > 0.0) || !c.c1.is_finite() {
        return Err(bad("c1 must be positive"));
    }
    if !(c.c2 >= 0.0) || !c.c2.is_finite() {
        return Err(bad("c2 must be nonnegative"));
    }
    if !(c.c3 >= 0.0) || !c.c3.is_finite() {
        return Err(bad("c3 must be nonnegative"));
    }
    Ok(())
}

fn reachable(start: &[usize], adjacency: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adjacency.len()];
    let mut queue: VecDeque<usize> = start.iter().copied().collect();
    for &s in start {
        seen[s] = true;
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Validates a network description and builds the [`Network`].
pub fn build_network(spec: &NetworkSpec) -> Result<Network> {
    let mut index = HashMap::new();
    for (i, name) in spec.nodes.iter().enumerate() {
        if index.insert(name.clone(), i).is_some() {
            return Err(Error::DuplicateNode(name.clone()));
        }
    }
    let lookup = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    };
    let n = spec.nodes.len();
    let destination = lookup(&spec.destination)?;

    let mut links = Vec::with_capacity(spec.links.len());
    let mut incoming = vec![Vec::new(); n];
    let mut outgoing = vec![Vec::new(); n];
    for ls in &spec.links {
        let from = lookup(&ls.from)?;
        let to = lookup(&ls.to)?;
        let id = ls
            .id
            .clone()
            .unwrap_or_else(|| format!("{}-{}", ls.from, ls.to));
        if links.iter().any(|l: &Link| l.id == id) {
            return Err(Error::DuplicateLink(id));
        }
        if !(ls.length > 0.0) || !ls.length.is_finite() {
            return Err(Error::NonpositiveLength {
                link: id,
                length: ls.length,
            });
        }
        let coeffs = LinkCoeffs::new(ls.c1, ls.c2, ls.c3);
        check_coeffs(&id, &coeffs)?;
        outgoing[from].push(links.len());
        incoming[to].push(links.len());
        links.push(Link {
            id,
            from,
            to,
            length: ls.length,
            coeffs,
        });
    }

    let mut capacities = vec![f64::INFINITY; n];
    for (i, name) in spec.nodes.iter().enumerate() {
        if i == destination {
            continue;
        }
        let cap = *spec
            .capacities
            .get(name)
            .ok_or_else(|| Error::MissingCapacity(name.clone()))?;
        if !(cap > 0.0) {
            return Err(Error::NonpositiveCapacity {
                node: name.clone(),
                capacity: cap,
            });
        }
        capacities[i] = cap;
    }
    for name in spec.capacities.keys() {
        lookup(name)?;
    }

    let mut origins = Vec::with_capacity(spec.origins.len());
    for name in &spec.origins {
        let o = lookup(name)?;
        if o == destination {
            return Err(Error::DemandAtDestination(name.clone()));
        }
        if !origins.contains(&o) {
            origins.push(o);
        }
    }
    let mut demand: Vec<Option<Demand>> = vec![None; n];
    for (name, pieces) in &spec.demand {
        let node = lookup(name)?;
        if node == destination {
            return Err(Error::DemandAtDestination(name.clone()));
        }
        if !origins.contains(&node) {
            return Err(Error::DemandAtNonOrigin(name.clone()));
        }
        if let Some(p) = pieces.iter().find(|p| !(p.rate >= 0.0)) {
            return Err(Error::NegativeDemand {
                node: name.clone(),
                rate: p.rate,
            });
        }
        demand[node] = Some(Demand::new(pieces.clone()));
    }

    if incoming[destination].is_empty() {
        return Err(Error::DestinationWithoutInflow(spec.destination.clone()));
    }
    let forward_adj: Vec<Vec<usize>> = outgoing
        .iter()
        .map(|ls| ls.iter().map(|&l| links[l].to).collect())
        .collect();
    let backward_adj: Vec<Vec<usize>> = incoming
        .iter()
        .map(|ls| ls.iter().map(|&l| links[l].from).collect())
        .collect();
    let from_origin = reachable(&origins, &forward_adj);
    if let Some(i) = (0..n).find(|&i| !from_origin[i]) {
        return Err(Error::UnreachableNode(spec.nodes[i].clone()));
    }
    let to_dest = reachable(&[destination], &backward_adj);
    if let Some(i) = (0..n).find(|&i| !to_dest[i]) {
        return Err(Error::DeadEndNode(spec.nodes[i].clone()));
    }

    Ok(Network {
        nodes: spec.nodes.clone(),
        index,
        links,
        incoming,
        outgoing,
        origins,
        destination,
        capacities,
        demand,
    })
}

/// Uniform space-time mesh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dx: f64,
    pub dt: f64,
    pub horizon: f64,
    pub nt: usize,
}

impl Grid {
    pub fn new(dx: f64, dt: f64, horizon: f64) -> Result<Self> {
        if !(dx > 0.0) || !(dt > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "dx, dt and T must be positive (dx={dx}, dt={dt}, T={horizon})"
            )));
        }
        let nt = integer_ratio(horizon, dt).ok_or_else(|| {
            Error::InvalidGrid(format!("T / dt = {} is not an integer", horizon / dt))
        })?;
        Ok(Self {
            dx,
            dt,
            horizon,
            nt,
        })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// `dt / dx`.
    pub fn ratio(&self) -> f64 {
        self.dt / self.dx
    }

    pub fn check_cfl(&self, u_max: f64) -> Result<()> {
        let lhs = u_max * self.dt;
        if lhs > self.dx * (1.0 + INTEGER_TOL) {
            return Err(Error::Cfl { lhs, dx: self.dx });
        }
        Ok(())
    }

    /// The grid with both mesh sizes halved.
    pub fn refined(&self) -> Self {
        Self {
            dx: self.dx / 2.0,
            dt: self.dt / 2.0,
            horizon: self.horizon,
            nt: self.nt * 2,
        }
    }
}

/// `a / b` as a positive integer, if it is one up to rounding.
fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let n = r.round();
    if n >= 1.0 && (r - n).abs() <= INTEGER_TOL * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

/// What a node of the discretized network stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Original,
    /// Junction between sublinks `index - 1` and `index` of `link`.
    Auxiliary { link: usize, index: usize },
}

#[derive(Clone, Debug)]
pub struct DNode {
    pub name: String,
    pub kind: NodeKind,
    pub capacity: f64,
    pub incoming: Vec<usize>,
    pub outgoing: Vec<usize>,
}

/// A sublink of length `dx`; `position` counts from the start of the parent link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sublink {
    pub parent: usize,
    pub position: usize,
    pub from: usize,
    pub to: usize,
    pub coeffs: LinkCoeffs,
}

/// The network with every link refined into a chain of sublinks.
///
/// Original nodes keep their indices; auxiliary nodes are appended after them.
#[derive(Clone, Debug)]
pub struct DiscretizedNetwork {
    network: Network,
    dx: f64,
    nodes: Vec<DNode>,
    sublinks: Vec<Sublink>,
    chains: Vec<Vec<usize>>,
}

impl DiscretizedNetwork {
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[DNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &DNode {
        &self.nodes[i]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_original_nodes(&self) -> usize {
        self.network.num_nodes()
    }

    pub fn num_auxiliary_nodes(&self) -> usize {
        self.nodes.len() - self.network.num_nodes()
    }

    pub fn sublinks(&self) -> &[Sublink] {
        &self.sublinks
    }

    pub fn sublink(&self, s: usize) -> &Sublink {
        &self.sublinks[s]
    }

    pub fn num_sublinks(&self) -> usize {
        self.sublinks.len()
    }

    /// Sublinks of original link `link`, in driving order.
    pub fn chain(&self, link: usize) -> &[usize] {
        &self.chains[link]
    }

    pub fn destination(&self) -> usize {
        self.network.destination()
    }

    pub fn is_original(&self, node: usize) -> bool {
        node < self.network.num_nodes()
    }

    /// Original links recovered by walking each sublink chain, as `(from, to)` pairs.
    pub fn collapse(&self) -> Vec<(usize, usize)> {
        self.chains
            .iter()
            .map(|chain| {
                let first = self.sublinks[chain[0]].from;
                let mut node = first;
                for &s in chain {
                    debug_assert_eq!(self.sublinks[s].from, node);
                    node = self.sublinks[s].to;
                }
                (first, node)
            })
            .collect()
    }
}

/// Refines every link of `net` into `len / dx` sublinks.
pub fn discretize(net: &Network, grid: &Grid) -> Result<DiscretizedNetwork> {
    let dx = grid.dx;
    let mut nodes: Vec<DNode> = (0..net.num_nodes())
        .map(|i| DNode {
            name: net.node_name(i).to_string(),
            kind: NodeKind::Original,
            capacity: net.capacity(i),
            incoming: Vec::new(),
            outgoing: Vec::new(),
        })
        .collect();
    let mut sublinks = Vec::new();
    let mut chains = Vec::with_capacity(net.links().len());
    for (li, link) in net.links().iter().enumerate() {
        let count = integer_ratio(link.length, dx).ok_or_else(|| Error::NonIntegerRefinement {
            link: link.id.clone(),
            length: link.length,
            dx,
        })?;
        let mut chain = Vec::with_capacity(count);
        let mut start = link.from;
        for position in 0..count {
            let end = if position + 1 == count {
                link.to
            } else {
                nodes.push(DNode {
                    name: format!("{}#{}", link.id, position + 1),
                    kind: NodeKind::Auxiliary {
                        link: li,
                        index: position + 1,
                    },
                    capacity: f64::INFINITY,
                    incoming: Vec::new(),
                    outgoing: Vec::new(),
                });
                nodes.len() - 1
            };
            let s = sublinks.len();
            sublinks.push(Sublink {
                parent: li,
                position,
                from: start,
                to: end,
                coeffs: link.coeffs,
            });
            nodes[start].outgoing.push(s);
            nodes[end].incoming.push(s);
            chain.push(s);
            start = end;
        }
        chains.push(chain);
    }
    Ok(DiscretizedNetwork {
        network: net.clone(),
        dx,
        nodes,
        sublinks,
        chains,
    })
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn link(from: &str, to: &str, length: f64, c: (f64, f64, f64)) -> LinkSpec {
        LinkSpec {
            id: None,
            from: from.into(),
            to: to.into(),
            length,
            c1: c.0,
            c2: c.1,
            c3: c.2,
        }
    }

    pub fn two_path() -> NetworkSpec {
        let c = (1.0, 1.0, 0.5);
        NetworkSpec {
            nodes: ["1", "2", "3", "4"].map(String::from).to_vec(),
            links: vec![
                link("1", "2", 1.0, c),
                link("1", "3", 1.0, c),
                link("2", "4", 1.0, c),
                link("3", "4", 1.0, c),
            ],
            origins: vec!["1".into()],
            destination: "4".into(),
            capacities: [("1", 1.0), ("2", 1.0), ("3", 1.0)]
                .map(|(k, v)| (k.to_string(), v))
                .into(),
            demand: [(
                "1".to_string(),
                vec![DemandPiece {
                    start: 0.0,
                    end: 0.5,
                    rate: 0.5,
                }],
            )]
            .into(),
        }
    }

    pub fn single_link(length: f64) -> NetworkSpec {
        NetworkSpec {
            nodes: vec!["a".into(), "b".into()],
            links: vec![link("a", "b", length, (1.0, 1.0, 0.5))],
            origins: vec!["a".into()],
            destination: "b".into(),
            capacities: [("a".to_string(), 1.0)].into(),
            demand: [(
                "a".to_string(),
                vec![DemandPiece {
                    start: 0.0,
                    end: 0.5,
                    rate: 0.5,
                }],
            )]
            .into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn two_path_builds() {
        let net = build_network(&two_path()).unwrap();
        assert_eq!(net.links().len(), 4);
        assert_eq!(net.num_nodes(), 4);
        assert_eq!(net.outgoing(0).len(), 2);
        assert_eq!(net.capacity(3), f64::INFINITY);
    }

    #[test]
    fn rejects_zero_length() {
        let mut spec = two_path();
        spec.links[1].length = 0.0;
        let err = build_network(&spec).unwrap_err();
        assert!(matches!(err, Error::NonpositiveLength { .. }));
        assert!(err.to_string().contains("nonpositive length"));
    }

    #[test]
    fn distinct_diagnostics() {
        let mut spec = two_path();
        spec.capacities.insert("2".into(), 0.0);
        assert!(matches!(
            build_network(&spec),
            Err(Error::NonpositiveCapacity { .. })
        ));

        let mut spec = two_path();
        spec.capacities.remove("3");
        assert!(matches!(build_network(&spec), Err(Error::MissingCapacity(n)) if n == "3"));

        let mut spec = two_path();
        spec.demand.insert("4".into(), vec![]);
        assert!(matches!(
            build_network(&spec),
            Err(Error::DemandAtDestination(_))
        ));

        let mut spec = two_path();
        spec.nodes.push("5".into());
        spec.capacities.insert("5".into(), 1.0);
        spec.links.push(link("5", "4", 1.0, (1.0, 0.0, 0.0)));
        assert!(matches!(build_network(&spec), Err(Error::UnreachableNode(n)) if n == "5"));

        let mut spec = two_path();
        spec.nodes.push("5".into());
        spec.capacities.insert("5".into(), 1.0);
        spec.links.push(link("1", "5", 1.0, (1.0, 0.0, 0.0)));
        assert!(matches!(build_network(&spec), Err(Error::DeadEndNode(n)) if n == "5"));

        let mut spec = two_path();
        spec.links[0].c1 = 0.0;
        assert!(matches!(
            build_network(&spec),
            Err(Error::InvalidCoefficient { .. })
        ));
    }

    #[test]
    fn demand_pieces_are_half_open() {
        let d = Demand::pulse(0.5, 0.5);
        assert_eq!(d.rate_at(0.0), 0.5);
        assert_eq!(d.rate_at(0.49), 0.5);
        assert_eq!(d.rate_at(0.5), 0.0);
        assert_eq!(d.rate_at(20.0 * 0.025), 0.0);
        assert_eq!(d.rate_at(19.0 * 0.025), 0.5);
        let two = Demand::new(vec![
            DemandPiece { start: 0.0, end: 1.0, rate: 0.5 },
            DemandPiece { start: 1.0, end: 2.0, rate: 0.2 },
        ]);
        assert_eq!(two.rate_at(1.0), 0.2);
        assert_eq!(two.rate_at(0.999), 0.5);
    }

    #[test]
    fn grid_requires_integer_steps() {
        assert_eq!(Grid::new(0.1, 0.1, 3.0).unwrap().nt, 30);
        assert!(Grid::new(0.1, 0.7, 3.0).is_err());
        assert!(Grid::new(0.1, 0.2, 3.0).unwrap().check_cfl(1.0).is_err());
        assert!(Grid::new(0.1, 0.1, 3.0).unwrap().check_cfl(1.0).is_ok());
    }

    #[test]
    fn discretize_two_path() {
        let net = build_network(&two_path()).unwrap();
        let grid = Grid::new(0.5, 0.5, 3.0).unwrap();
        let d = discretize(&net, &grid).unwrap();
        assert_eq!(d.num_sublinks(), 8);
        assert_eq!(d.num_auxiliary_nodes(), 4);
        for node in &d.nodes()[net.num_nodes()..] {
            assert_eq!(node.incoming.len(), 1);
            assert_eq!(node.outgoing.len(), 1);
            assert_eq!(node.capacity, f64::INFINITY);
        }
        assert_eq!(d.node(4).name, "1-2#1");
    }

    #[test]
    fn single_link_no_refinement() {
        let net = build_network(&single_link(1.0)).unwrap();
        let d = discretize(&net, &Grid::new(1.0, 1.0, 2.0).unwrap()).unwrap();
        assert_eq!(d.num_sublinks(), 1);
        assert_eq!(d.num_auxiliary_nodes(), 0);
    }

    #[test]
    fn three_path_with_short_middle_link() {
        let mut spec = two_path();
        spec.links.push(link("2", "3", 0.25, (1.0, 5.0, 0.0)));
        let net = build_network(&spec).unwrap();
        let d = discretize(&net, &Grid::new(0.25, 0.25, 6.0).unwrap()).unwrap();
        assert_eq!(d.num_sublinks(), 17);
    }

    #[test]
    fn non_integer_refinement_names_link() {
        let net = build_network(&two_path()).unwrap();
        let err = discretize(&net, &Grid::new(0.3, 0.3, 3.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::NonIntegerRefinement { ref link, .. } if link == "1-2"));
    }

    #[test]
    fn collapse_restores_adjacency() {
        let net = build_network(&two_path()).unwrap();
        let d = discretize(&net, &Grid::new(0.125, 0.125, 3.0).unwrap()).unwrap();
        let original: Vec<_> = net.links().iter().map(|l| (l.from, l.to)).collect();
        assert_eq!(d.collapse(), original);
        for l in 0..net.links().len() {
            let chain = d.chain(l);
            for w in chain.windows(2) {
                assert_eq!(d.sublink(w[0]).to, d.sublink(w[1]).from);
            }
        }
    }

    #[test]
    fn distances_to_destination() {
        let net = build_network(&two_path()).unwrap();
        assert_eq!(net.distance_to_destination(), vec![2.0, 1.0, 1.0, 0.0]);
    }
}
