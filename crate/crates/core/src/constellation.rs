//! Walker Delta constellations as degree-4 link graphs on the unit sphere.
//!
//! Node `plane * sats_per_plane + slot` sits in orbital plane `plane` at
//! slot `slot`. Every node has four inter-satellite link ports:
//!
//! | ISL | neighbor                        |
//! |-----|---------------------------------|
//! | 1   | same plane, next slot           |
//! | 2   | same plane, previous slot       |
//! | 3   | next plane, same slot           |
//! | 4   | previous plane, same slot       |
//!
//! Slots and planes both wrap, so the link grid is a torus. Setting
//! [`WalkerParams::wrap_planes`] to `false` drops the links between the last
//! and first plane.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sphere::{NodeAddress, UnitVector};

/// Dense node index, `0..N`.
pub type NodeId = usize;

/// Link port number, `1..=4`.
pub type Isl = u8;

pub const ISL_NEXT_SLOT: Isl = 1;
pub const ISL_PREV_SLOT: Isl = 2;
pub const ISL_NEXT_PLANE: Isl = 3;
pub const ISL_PREV_PLANE: Isl = 4;

/// Circular-orbit period of a typical 550 km LEO shell is about 95.6 minutes.
pub const DEFAULT_ANGULAR_RATE: f64 = 2.0 * std::f64::consts::PI / 5736.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct WalkerParams<T = f64> {
    pub planes: usize,
    pub sats_per_plane: usize,
    /// Radians, in `(0, π/2]`.
    #[serde(with = "as_f64")]
    pub inclination: T,
    pub phasing_factor: usize,
    /// Radians per second along the orbit.
    #[serde(with = "as_f64")]
    pub angular_rate: T,
    #[serde(default = "yes")]
    pub wrap_planes: bool,
}

fn yes() -> bool {
    true
}

impl<T: Scalar> WalkerParams<T> {
    pub fn new(
        planes: usize,
        sats_per_plane: usize,
        inclination: T,
        phasing_factor: usize,
    ) -> Self {
        Self {
            planes,
            sats_per_plane,
            inclination,
            phasing_factor,
            angular_rate: T::of(DEFAULT_ANGULAR_RATE),
            wrap_planes: true,
        }
    }

    /// Same as [`WalkerParams::new`] with the inclination in degrees.
    pub fn with_degrees(
        planes: usize,
        sats_per_plane: usize,
        inclination_deg: f64,
        phasing_factor: usize,
    ) -> Self {
        Self::new(
            planes,
            sats_per_plane,
            T::of(inclination_deg.to_radians()),
            phasing_factor,
        )
    }

    pub fn node_count(&self) -> usize {
        self.planes * self.sats_per_plane
    }

    pub fn period(&self) -> T {
        T::of(2.0) * T::PI() / self.angular_rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.planes < 3 {
            return Err(Error::InvalidParams(format!(
                "planes must be at least 3, got {}",
                self.planes
            )));
        }
        if self.sats_per_plane < 3 {
            return Err(Error::InvalidParams(format!(
                "sats_per_plane must be at least 3, got {}",
                self.sats_per_plane
            )));
        }
        if !(self.inclination > T::zero() && self.inclination <= T::FRAC_PI_2()) {
            return Err(Error::InvalidParams(format!(
                "inclination must lie in (0, pi/2], got {}",
                self.inclination
            )));
        }
        if self.phasing_factor >= self.planes {
            return Err(Error::InvalidParams(format!(
                "phasing_factor must lie in [0, {}], got {}",
                self.planes - 1,
                self.phasing_factor
            )));
        }
        if !(self.angular_rate.is_finite() && self.angular_rate > T::zero()) {
            return Err(Error::InvalidParams("angular_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Where a satellite sits in the Walker pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitalState<T = f64> {
    pub plane_index: usize,
    pub slot_index: usize,
    /// Longitude of the ascending node.
    pub raan: T,
    /// Argument of latitude at time zero.
    pub phase: T,
}

impl<T: Scalar> OrbitalState<T> {
    pub fn walker(params: &WalkerParams<T>, plane_index: usize, slot_index: usize) -> Self {
        let two_pi = T::of(2.0) * T::PI();
        let planes = T::of(params.planes as f64);
        let per_plane = T::of(params.sats_per_plane as f64);
        let raan = two_pi * T::of(plane_index as f64) / planes;
        let phase = two_pi * T::of(slot_index as f64) / per_plane
            + two_pi * T::of((params.phasing_factor * plane_index) as f64) / (planes * per_plane);
        Self {
            plane_index,
            slot_index,
            raan,
            phase,
        }
    }

    /// Position at absolute time `t` for a circular orbit.
    pub fn position_at(&self, inclination: T, angular_rate: T, t: T) -> UnitVector<T> {
        let u = self.phase + angular_rate * t;
        let (su, cu) = u.sin_cos();
        let (so, co) = self.raan.sin_cos();
        let (si, ci) = inclination.sin_cos();
        UnitVector::new(co * cu - so * su * ci, so * cu + co * su * ci, su * si)
            .expect("orbit point is on the sphere")
    }

    pub fn motion(&self, inclination: T, angular_rate: T) -> Motion<T> {
        let (so, co) = self.raan.sin_cos();
        let (si, ci) = inclination.sin_cos();
        Motion {
            axis: UnitVector::new(so * si, -co * si, ci).expect("orbit normal is a unit vector"),
            angular_rate,
        }
    }
}

/// Velocity of a satellite on a circular orbit: rotation about the orbit
/// normal at a constant rate. Advertised in link state updates so that
/// receivers can extrapolate positions between floods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Motion<T = f64> {
    pub axis: UnitVector<T>,
    #[serde(with = "as_f64")]
    pub angular_rate: T,
}

impl<T: Scalar> Motion<T> {
    pub fn advance(&self, position: &UnitVector<T>, elapsed: T) -> UnitVector<T> {
        position.rotate_about(&self.axis, self.angular_rate * elapsed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkState {
    Up,
    Down,
}

impl LinkState {
    pub fn is_up(self) -> bool {
        self == LinkState::Up
    }
}

/// Undirected inter-satellite link. Stored once; both directions share
/// the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub isl_a: Isl,
    pub isl_b: Isl,
    pub state: LinkState,
}

impl Edge {
    /// The far end as seen from `from`, with the port used at `from`.
    pub fn far_end(&self, from: NodeId) -> Option<(NodeId, Isl)> {
        if from == self.a {
            Some((self.b, self.isl_a))
        } else if from == self.b {
            Some((self.a, self.isl_b))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Satellite<T = f64> {
    pub address: NodeAddress<T>,
    pub orbit: OrbitalState<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationGraph<T = f64> {
    params: WalkerParams<T>,
    time: T,
    nodes: Vec<Satellite<T>>,
    edges: Vec<Edge>,
    /// Edge index per node and port (`ports[n][isl - 1]`).
    ports: Vec<[Option<u32>; 4]>,
}

impl<T: Scalar> ConstellationGraph<T> {
    /// Generates the constellation with every link up, positions taken at
    /// `epoch_time` seconds.
    pub fn walker_delta(params: WalkerParams<T>, epoch_time: T) -> Result<Self> {
        params.validate()?;
        let (planes, per_plane) = (params.planes, params.sats_per_plane);
        let id = |plane: usize, slot: usize| plane * per_plane + slot;

        let mut nodes = Vec::with_capacity(params.node_count());
        for plane in 0..planes {
            for slot in 0..per_plane {
                let orbit = OrbitalState::walker(&params, plane, slot);
                let position =
                    orbit.position_at(params.inclination, params.angular_rate, epoch_time);
                nodes.push(Satellite {
                    address: NodeAddress::new(id(plane, slot) as u64, position),
                    orbit,
                });
            }
        }

        let mut edges = Vec::with_capacity(2 * params.node_count());
        for plane in 0..planes {
            for slot in 0..per_plane {
                let here = id(plane, slot);
                edges.push(Edge {
                    a: here,
                    b: id(plane, (slot + 1) % per_plane),
                    isl_a: ISL_NEXT_SLOT,
                    isl_b: ISL_PREV_SLOT,
                    state: LinkState::Up,
                });
                if params.wrap_planes || plane + 1 < planes {
                    edges.push(Edge {
                        a: here,
                        b: id((plane + 1) % planes, slot),
                        isl_a: ISL_NEXT_PLANE,
                        isl_b: ISL_PREV_PLANE,
                        state: LinkState::Up,
                    });
                }
            }
        }

        Self::assemble(params, epoch_time, nodes, edges)
    }

    fn assemble(
        params: WalkerParams<T>,
        time: T,
        nodes: Vec<Satellite<T>>,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        let mut ports = vec![[None; 4]; nodes.len()];
        for (index, edge) in edges.iter().enumerate() {
            if edge.a == edge.b {
                return Err(Error::InvalidTopology(format!("self loop at {}", edge.a)));
            }
            for (node, isl) in [(edge.a, edge.isl_a), (edge.b, edge.isl_b)] {
                if node >= nodes.len() {
                    return Err(Error::InvalidTopology(format!(
                        "edge endpoint {node} out of range"
                    )));
                }
                if !(1..=4).contains(&isl) {
                    return Err(Error::InvalidTopology(format!(
                        "isl index {isl} at node {node}"
                    )));
                }
                let slot = &mut ports[node][usize::from(isl - 1)];
                if slot.is_some() {
                    return Err(Error::InvalidTopology(format!(
                        "port {isl} of node {node} used twice"
                    )));
                }
                *slot = Some(index as u32);
            }
        }
        Ok(Self {
            params,
            time,
            nodes,
            edges,
            ports,
        })
    }

    pub fn params(&self) -> &WalkerParams<T> {
        &self.params
    }

    /// Simulated time the positions refer to.
    pub fn time(&self) -> T {
        self.time
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Satellite<T>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node < self.nodes.len()
    }

    pub fn address(&self, node: NodeId) -> NodeAddress<T> {
        self.nodes[node].address
    }

    pub fn position(&self, node: NodeId) -> UnitVector<T> {
        self.nodes[node].address.position
    }

    pub fn orbit(&self, node: NodeId) -> OrbitalState<T> {
        self.nodes[node].orbit
    }

    pub fn motion(&self, node: NodeId) -> Motion<T> {
        self.nodes[node]
            .orbit
            .motion(self.params.inclination, self.params.angular_rate)
    }

    /// The link on port `isl` of `node`: far end and state.
    pub fn port(&self, node: NodeId, isl: Isl) -> Option<(NodeId, LinkState)> {
        let index = self.ports[node][usize::from(isl - 1)]?;
        let edge = &self.edges[index as usize];
        edge.far_end(node).map(|(far, _)| (far, edge.state))
    }

    /// Links at `node` ordered by port: `(isl, far end, state)`.
    pub fn links(&self, node: NodeId) -> impl Iterator<Item = (Isl, NodeId, LinkState)> + '_ {
        (1..=4u8).filter_map(move |isl| self.port(node, isl).map(|(far, state)| (isl, far, state)))
    }

    /// Incident links, counting those that are down.
    pub fn degree(&self, node: NodeId) -> usize {
        self.ports[node].iter().flatten().count()
    }

    pub fn edge_between(&self, a: NodeId, b: NodeId) -> Option<&Edge> {
        self.ports
            .get(a)?
            .iter()
            .flatten()
            .map(|&i| &self.edges[i as usize])
            .find(|e| e.far_end(a).map(|f| f.0) == Some(b))
    }

    pub fn down_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.state.is_up()).count()
    }

    /// Copy of this graph with the positions advanced by `elapsed` seconds.
    pub fn propagate(&self, elapsed: T) -> Self {
        let time = self.time + elapsed;
        let mut next = self.clone();
        next.time = time;
        let (inc, rate) = (self.params.inclination, self.params.angular_rate);
        for sat in &mut next.nodes {
            sat.address.position = sat.orbit.position_at(inc, rate, time);
        }
        next
    }

    /// Copy of this graph where every link independently goes down with
    /// probability `p`. Deterministic in `seed`.
    pub fn apply_link_failures(&self, p: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.apply_link_failures_with(p, &mut rng)
    }

    /// As [`ConstellationGraph::apply_link_failures`], drawing from `rng`.
    /// One uniform draw per edge, in edge order.
    pub fn apply_link_failures_with(&self, p: f64, rng: &mut impl Rng) -> Self {
        assert!(
            (0.0..=1.0).contains(&p),
            "failure probability {p} outside [0, 1]"
        );
        let mut next = self.clone();
        for edge in &mut next.edges {
            let draw: f64 = rng.random();
            edge.state = if draw < p {
                LinkState::Down
            } else {
                LinkState::Up
            };
        }
        next
    }

    /// Copy of this graph with the link between `a` and `b` set to `state`.
    pub fn with_link_state(&self, a: NodeId, b: NodeId, state: LinkState) -> Result<Self> {
        if !self.contains(a) {
            return Err(Error::UnknownNode(a));
        }
        if !self.contains(b) {
            return Err(Error::UnknownNode(b));
        }
        let index = self.ports[a]
            .iter()
            .flatten()
            .copied()
            .find(|&i| self.edges[i as usize].far_end(a).map(|f| f.0) == Some(b))
            .ok_or(Error::UnknownLink(a, b))?;
        let mut next = self.clone();
        next.edges[index as usize].state = state;
        Ok(next)
    }

    /// Breadth-first reachability over up links.
    pub fn reachable(&self, s: NodeId, d: NodeId) -> bool {
        if s == d {
            return true;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([s]);
        seen[s] = true;
        while let Some(node) = queue.pop_front() {
            for (_, far, state) in self.links(node) {
                if state.is_up() && !seen[far] {
                    if far == d {
                        return true;
                    }
                    seen[far] = true;
                    queue.push_back(far);
                }
            }
        }
        false
    }

    /// Hop distances over up links from `source`; `None` when unreachable.
    pub fn hop_distances(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        let mut queue = VecDeque::from([source]);
        dist[source] = Some(0);
        while let Some(node) = queue.pop_front() {
            let next = dist[node].unwrap() + 1;
            for (_, far, state) in self.links(node) {
                if state.is_up() && dist[far].is_none() {
                    dist[far] = Some(next);
                    queue.push_back(far);
                }
            }
        }
        dist
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TopologyFile::from_graph(
            self,
        ))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<TopologyFile>(text)?.into_graph()
    }
}

/// On-disk topology dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyFile {
    pub params: TopologyParams,
    pub nodes: Vec<TopologyNode>,
    pub edges: Vec<TopologyEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyParams {
    #[serde(flatten)]
    pub walker: WalkerParams<f64>,
    #[serde(default)]
    pub epoch_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyNode {
    pub id: u64,
    pub plane: usize,
    pub slot: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyEdge {
    pub a: u64,
    pub b: u64,
    pub isl_a: Isl,
    pub isl_b: Isl,
    pub up: bool,
}

impl TopologyFile {
    pub fn from_graph<T: Scalar>(graph: &ConstellationGraph<T>) -> Self {
        let p = graph.params;
        Self {
            params: TopologyParams {
                walker: WalkerParams {
                    planes: p.planes,
                    sats_per_plane: p.sats_per_plane,
                    inclination: p.inclination.as_f64(),
                    phasing_factor: p.phasing_factor,
                    angular_rate: p.angular_rate.as_f64(),
                    wrap_planes: p.wrap_planes,
                },
                epoch_time: graph.time.as_f64(),
            },
            nodes: graph
                .nodes
                .iter()
                .map(|sat| {
                    let [x, y, z] = sat.address.position.components();
                    TopologyNode {
                        id: sat.address.id,
                        plane: sat.orbit.plane_index,
                        slot: sat.orbit.slot_index,
                        x: x.as_f64(),
                        y: y.as_f64(),
                        z: z.as_f64(),
                    }
                })
                .collect(),
            edges: graph
                .edges
                .iter()
                .map(|e| TopologyEdge {
                    a: e.a as u64,
                    b: e.b as u64,
                    isl_a: e.isl_a,
                    isl_b: e.isl_b,
                    up: e.state.is_up(),
                })
                .collect(),
        }
    }

    pub fn into_graph<T: Scalar>(self) -> Result<ConstellationGraph<T>> {
        let w = self.params.walker;
        let params = WalkerParams {
            planes: w.planes,
            sats_per_plane: w.sats_per_plane,
            inclination: T::of(w.inclination),
            phasing_factor: w.phasing_factor,
            angular_rate: T::of(w.angular_rate),
            wrap_planes: w.wrap_planes,
        };
        params.validate()?;
        if self.nodes.len() != params.node_count() {
            return Err(Error::InvalidTopology(format!(
                "expected {} nodes, found {}",
                params.node_count(),
                self.nodes.len()
            )));
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (index, n) in self.nodes.into_iter().enumerate() {
            if n.id != index as u64 {
                return Err(Error::InvalidTopology(format!(
                    "node ids must be dense, found {} at {index}",
                    n.id
                )));
            }
            if n.plane >= params.planes || n.slot >= params.sats_per_plane {
                return Err(Error::InvalidTopology(format!(
                    "node {} has plane/slot out of range",
                    n.id
                )));
            }
            let position = UnitVector::from_unit_components(T::of(n.x), T::of(n.y), T::of(n.z))?;
            let orbit = OrbitalState::walker(&params, n.plane, n.slot);
            nodes.push(Satellite {
                address: NodeAddress::new(n.id, position),
                orbit,
            });
        }
        let edges = self
            .edges
            .into_iter()
            .map(|e| Edge {
                a: e.a as usize,
                b: e.b as usize,
                isl_a: e.isl_a,
                isl_b: e.isl_b,
                state: if e.up { LinkState::Up } else { LinkState::Down },
            })
            .collect();
        ConstellationGraph::assemble(params, T::of(self.params.epoch_time), nodes, edges)
    }
}

mod as_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::scalar::Scalar;

    pub fn serialize<T: Scalar, S: Serializer>(
        value: &T,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(value.as_f64())
    }

    pub fn deserialize<'de, T: Scalar, D: Deserializer<'de>>(
        deserializer: D,
    ) -> Result<T, D::Error> {
        f64::deserialize(deserializer).map(T::of)
    }
}
