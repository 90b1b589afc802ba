//! Depth-bounded shortest path trees and the forwarding tables built from
//! them.
//!
//! Every link costs one, so the SPF computation is a level-by-level
//! breadth-first search. Within a level, parents are expanded in ascending
//! node id and each parent's links in ascending ISL index; the first
//! discovery of a node fixes its parent. That makes the tree unique for a
//! given view.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constellation::{ConstellationGraph, Isl, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sphere::{dist_key, DistKey, NodeAddress, UnitVector};
use crate::Motion;

/// Topology as seen by one node: addresses of known nodes and their up
/// links.
pub trait LinkView<T: Scalar> {
    /// Address of `node`, if known to the view.
    fn address(&self, node: NodeId) -> Option<NodeAddress<T>>;

    /// Calls `visit(isl, far)` for every up link at `node`, ascending ISL.
    fn for_each_up_link(&self, node: NodeId, visit: impl FnMut(Isl, NodeId));

    /// Exclusive upper bound on node ids in the view.
    fn id_bound(&self) -> usize;
}

impl<T: Scalar> LinkView<T> for ConstellationGraph<T> {
    fn address(&self, node: NodeId) -> Option<NodeAddress<T>> {
        self.contains(node)
            .then(|| ConstellationGraph::address(self, node))
    }

    #[inline]
    fn for_each_up_link(&self, node: NodeId, mut visit: impl FnMut(Isl, NodeId)) {
        for (isl, far, state) in self.links(node) {
            if state.is_up() {
                visit(isl, far);
            }
        }
    }

    fn id_bound(&self) -> usize {
        self.node_count()
    }
}

/// A node's local subgraph, usually assembled from its link state database.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalView<T = f64> {
    pub(crate) nodes: BTreeMap<NodeId, NodeAddress<T>>,
    /// Up links per node, sorted by ISL index.
    pub(crate) links: BTreeMap<NodeId, Vec<(Isl, NodeId)>>,
}

impl<T: Scalar> LocalView<T> {
    pub fn new() -> Self {
        Self {
            nodes: BTreeMap::new(),
            links: BTreeMap::new(),
        }
    }

    pub fn insert_node(&mut self, address: NodeAddress<T>) {
        self.nodes.insert(address.id as NodeId, address);
    }

    /// Adds an up link seen from `node` on port `isl`.
    pub fn insert_link(&mut self, node: NodeId, isl: Isl, far: NodeId) {
        let list = self.links.entry(node).or_default();
        if let Err(at) = list.binary_search(&(isl, far)) {
            list.insert(at, (isl, far));
        }
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains_key(&node)
    }

    pub fn up_links(&self, node: NodeId) -> &[(Isl, NodeId)] {
        self.links.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of undirected up links.
    pub fn link_count(&self) -> usize {
        self.links.values().map(Vec::len).sum::<usize>() / 2
    }
}

impl<T: Scalar> LinkView<T> for LocalView<T> {
    fn address(&self, node: NodeId) -> Option<NodeAddress<T>> {
        self.nodes.get(&node).copied()
    }

    fn for_each_up_link(&self, node: NodeId, mut visit: impl FnMut(Isl, NodeId)) {
        for &(isl, far) in self.up_links(node) {
            visit(isl, far);
        }
    }

    fn id_bound(&self) -> usize {
        self.nodes.keys().next_back().map_or(0, |&k| k + 1)
    }
}

/// One node of an SPF tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpfEntry {
    pub node: NodeId,
    /// Parent and the parent's port toward this node. `None` at the root.
    pub parent: Option<(NodeId, Isl)>,
    pub depth: usize,
    /// Depth-one ancestor and the root's port toward it.
    pub first_hop: Option<(NodeId, Isl)>,
}

/// Reusable scratch space for repeated SPF runs over views whose ids are
/// dense. Avoids per-run allocation in the routing loop.
#[derive(Debug, Default)]
pub struct SpfWorkspace {
    mark: Vec<u32>,
    epoch: u32,
    entries: Vec<SpfEntry>,
}

impl SpfWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs the bounded SPF from `root` and returns entries ordered by
    /// `(depth, node)`. Only nodes whose address the view knows are entered.
    pub fn run<T: Scalar, V: LinkView<T>>(
        &mut self,
        view: &V,
        root: NodeId,
        radius: usize,
    ) -> &[SpfEntry] {
        let bound = view.id_bound().max(root + 1);
        if self.mark.len() < bound {
            self.mark.resize(bound, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        let mark = &mut self.mark;
        let entries = &mut self.entries;
        entries.clear();
        entries.push(SpfEntry {
            node: root,
            parent: None,
            depth: 0,
            first_hop: None,
        });
        mark[root] = epoch;

        let mut level = 0..1;
        for depth in 1..=radius {
            for i in level.clone() {
                let parent = entries[i];
                view.for_each_up_link(parent.node, |isl, far| {
                    if far < mark.len() && mark[far] != epoch && view.address(far).is_some() {
                        mark[far] = epoch;
                        let first_hop = parent.first_hop.or(Some((far, isl)));
                        entries.push(SpfEntry {
                            node: far,
                            parent: Some((parent.node, isl)),
                            depth,
                            first_hop,
                        });
                    }
                });
            }
            let next = level.end..entries.len();
            if next.is_empty() {
                break;
            }
            entries[next.clone()].sort_unstable_by_key(|e| e.node);
            level = next;
        }
        entries
    }
}

/// Shortest-hop tree rooted at one node, truncated at a radius.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpfTree {
    root: NodeId,
    radius: usize,
    entries: Vec<SpfEntry>,
    index: BTreeMap<NodeId, usize>,
}

impl SpfTree {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Entries ordered by depth, then node id. The root comes first.
    pub fn entries(&self) -> &[SpfEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.index.contains_key(&node)
    }

    pub fn entry(&self, node: NodeId) -> Option<&SpfEntry> {
        self.index.get(&node).map(|&i| &self.entries[i])
    }

    pub fn depth(&self, node: NodeId) -> Option<usize> {
        self.entry(node).map(|e| e.depth)
    }

    pub fn parent(&self, node: NodeId) -> Option<(NodeId, Isl)> {
        self.entry(node).and_then(|e| e.parent)
    }

    pub fn depths(&self) -> BTreeMap<NodeId, usize> {
        self.entries.iter().map(|e| (e.node, e.depth)).collect()
    }

    /// Tree path from the root to `node`, both ends included.
    pub fn path_to(&self, node: NodeId) -> Option<Vec<NodeId>> {
        let mut path = vec![node];
        let mut at = self.entry(node)?;
        while let Some((parent, _)) = at.parent {
            path.push(parent);
            at = self.entry(parent).expect("parent is in the tree");
        }
        path.reverse();
        Some(path)
    }
}

/// Shortest-hop tree from `root` over the up links of `view`, truncated at
/// depth `radius`.
pub fn spf_bounded<T: Scalar, V: LinkView<T>>(view: &V, root: NodeId, radius: usize) -> SpfTree {
    let mut workspace = SpfWorkspace::new();
    let entries = workspace.run(view, root, radius).to_vec();
    let index = entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.node, i))
        .collect();
    SpfTree {
        root,
        radius,
        entries,
        index,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ForwardingRow<T = f64> {
    pub address: NodeAddress<T>,
    /// Port of the first hop toward `address`.
    pub isl: Isl,
}

/// The `K` satellites visible within the radius and the first-hop port for
/// each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardingTable<T = f64> {
    rows: Vec<ForwardingRow<T>>,
}

#[derive(Serialize, Deserialize)]
struct RowDump {
    id: u64,
    x: f64,
    y: f64,
    z: f64,
    isl: Isl,
}

impl<T: Scalar> ForwardingTable<T> {
    pub fn from_rows(rows: Vec<ForwardingRow<T>>) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[ForwardingRow<T>] {
        &self.rows
    }

    /// Row count `K`.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        let dump: Vec<RowDump> = self
            .rows
            .iter()
            .map(|r| {
                let [x, y, z] = r.address.position.components();
                RowDump {
                    id: r.address.id,
                    x: x.as_f64(),
                    y: y.as_f64(),
                    z: z.as_f64(),
                    isl: r.isl,
                }
            })
            .collect();
        Ok(serde_json::to_string(&dump)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let dump: Vec<RowDump> = serde_json::from_str(text)?;
        let rows = dump
            .into_iter()
            .map(|r| {
                let position =
                    UnitVector::from_unit_components(T::of(r.x), T::of(r.y), T::of(r.z))?;
                Ok(ForwardingRow {
                    address: NodeAddress::new(r.id, position),
                    isl: r.isl,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }
}

/// One row per non-root tree node, in tree order, carrying the node's
/// address from `view` and the root's port on the tree path.
pub fn build_forwarding_table<T: Scalar, V: LinkView<T>>(
    tree: &SpfTree,
    view: &V,
) -> Result<ForwardingTable<T>> {
    let rows = tree
        .entries()
        .iter()
        .filter(|e| e.node != tree.root())
        .map(|e| {
            let address = view.address(e.node).ok_or(Error::ViewInconsistent {
                node: tree.root(),
                detail: format!("tree node {} has no address", e.node),
            })?;
            let (_, isl) = e.first_hop.expect("non-root entry has a first hop");
            Ok(ForwardingRow { address, isl })
        })
        .collect::<Result<_>>()?;
    Ok(ForwardingTable { rows })
}

/// Row whose address minimizes [`DistKey`] toward `dest`, by scanning.
pub fn lookup_linear<'t, T: Scalar>(
    table: &'t ForwardingTable<T>,
    dest: &NodeAddress<T>,
) -> Option<&'t ForwardingRow<T>> {
    table
        .rows
        .iter()
        .min_by_key(|row| dist_key(&row.address, dest))
}

/// The same argmin computed as a binary reduction tree of comparators.
///
/// All `K` metrics are evaluated in parallel at the leaves; each stage then
/// compares neighbors pairwise and keeps the smaller. Leaves are padded to a
/// power of two with sentinel keys that never win. Returns the winner and the
/// number of comparator stages, `ceil(log2 K)` (zero for `K <= 1`).
pub fn lookup_comparator_tree<'t, T: Scalar>(
    table: &'t ForwardingTable<T>,
    dest: &NodeAddress<T>,
) -> (Option<&'t ForwardingRow<T>>, usize) {
    let k = table.rows.len();
    if k == 0 {
        return (None, 0);
    }
    let width = k.next_power_of_two();
    let mut level: Vec<(DistKey<T>, usize)> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| (dist_key(&row.address, dest), i))
        .collect();
    level.resize(width, (DistKey::sentinel(), usize::MAX));

    let mut stages = 0;
    while level.len() > 1 {
        level = level
            .chunks_exact(2)
            .map(|pair| {
                if pair[1].0 < pair[0].0 {
                    pair[1]
                } else {
                    pair[0]
                }
            })
            .collect();
        stages += 1;
    }
    let (key, index) = level[0];
    debug_assert!(!key.is_sentinel());
    (Some(&table.rows[index]), stages)
}

/// Advances every row's position by `elapsed` seconds along its orbit,
/// leaving ports unchanged. `motion_of` supplies each satellite's motion.
pub fn refresh_positions<T: Scalar>(
    table: &ForwardingTable<T>,
    motion_of: impl Fn(u64) -> Option<Motion<T>>,
    elapsed: T,
) -> Result<ForwardingTable<T>> {
    let rows = table
        .rows
        .iter()
        .map(|row| {
            let motion = motion_of(row.address.id).ok_or(Error::MissingOrbit(row.address.id))?;
            let position = if elapsed == T::zero() {
                row.address.position
            } else {
                motion.advance(&row.address.position, elapsed)
            };
            Ok(ForwardingRow {
                address: NodeAddress::new(row.address.id, position),
                isl: row.isl,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ForwardingTable { rows })
}
