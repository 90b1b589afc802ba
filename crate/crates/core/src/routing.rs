//! Hop-by-hop OR(r) packet routing.
//!
//! At each current node `C` the router builds the depth-`r` SPF tree of
//! `C`'s view, picks the tree node `I` (possibly `C` itself) with the
//! smallest [`DistKey`] toward the destination, and moves one hop along the
//! tree path to `I`. Routing stops when `C` is the destination or when `C` is
//! its own best candidate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constellation::{ConstellationGraph, NodeId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spf::{LinkView, SpfWorkspace};
use crate::sphere::{dist_key, DistKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Delivered,
    /// No node within the radius is closer to the destination than `C`.
    DroppedNoProgress,
    /// Safety net; never expected when views match the topology.
    AbortedHopLimit,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Delivered => "Delivered",
            Outcome::DroppedNoProgress => "DroppedNoProgress",
            Outcome::AbortedHopLimit => "AbortedHopLimit",
        })
    }
}

/// One forwarding decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop<T = f64> {
    /// Node holding the packet.
    pub current: NodeId,
    /// Chosen gateway.
    pub target: NodeId,
    /// Neighbor the packet is sent to.
    pub next: NodeId,
    pub key: DistKey<T>,
    /// Depth of `target` in the SPF tree rooted at `current`.
    pub target_depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteTrace<T = f64> {
    pub source: NodeId,
    pub dest: NodeId,
    pub hops: Vec<Hop<T>>,
    pub outcome: Outcome,
}

impl<T: Scalar> RouteTrace<T> {
    pub fn hop_count(&self) -> usize {
        self.hops.len()
    }

    pub fn is_delivered(&self) -> bool {
        self.outcome == Outcome::Delivered
    }

    /// Visited nodes, source first.
    pub fn path(&self) -> Vec<NodeId> {
        std::iter::once(self.source)
            .chain(self.hops.iter().map(|h| h.next))
            .collect()
    }

    /// Text form: `hop C I N mu_hat` per hop, then the outcome line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for hop in &self.hops {
            out.push_str(&format!(
                "hop {} {} {} {:.9}\n",
                hop.current,
                hop.target,
                hop.next,
                hop.key.primary.as_f64()
            ));
        }
        out.push_str(&format!(
            "outcome={} hops={}\n",
            self.outcome,
            self.hop_count()
        ));
        out
    }
}

/// Default safety limit: `|V| · r` hops.
pub fn default_hop_limit(node_count: usize, radius: usize) -> usize {
    node_count.saturating_mul(radius)
}

/// Routes a packet from `s` to `d` over `graph`, where node `n` decides
/// using `views[n]`.
pub fn route_packet<T: Scalar, V: LinkView<T>>(
    graph: &ConstellationGraph<T>,
    views: &[V],
    s: NodeId,
    d: NodeId,
    radius: usize,
    hop_limit: usize,
) -> Result<RouteTrace<T>> {
    if views.len() != graph.node_count() {
        return Err(Error::InvalidTopology(format!(
            "{} views for {} nodes",
            views.len(),
            graph.node_count()
        )));
    }
    route_with(
        &mut SpfWorkspace::new(),
        graph,
        |n| &views[n],
        s,
        d,
        radius,
        hop_limit,
    )
}

/// Routes with every node seeing its exact radius-`r` neighborhood, read
/// straight from `graph`. Produces the same trace as [`route_packet`] over
/// converged flooding views.
pub fn route_with_oracle_views<T: Scalar>(
    graph: &ConstellationGraph<T>,
    s: NodeId,
    d: NodeId,
    radius: usize,
    hop_limit: usize,
) -> Result<RouteTrace<T>> {
    route_with_oracle_views_in(&mut SpfWorkspace::new(), graph, s, d, radius, hop_limit)
}

/// [`route_with_oracle_views`] reusing a caller-owned workspace.
pub fn route_with_oracle_views_in<T: Scalar>(
    workspace: &mut SpfWorkspace,
    graph: &ConstellationGraph<T>,
    s: NodeId,
    d: NodeId,
    radius: usize,
    hop_limit: usize,
) -> Result<RouteTrace<T>> {
    route_with(workspace, graph, |_| graph, s, d, radius, hop_limit)
}

fn route_with<'v, T: Scalar, V: LinkView<T> + 'v>(
    workspace: &mut SpfWorkspace,
    graph: &ConstellationGraph<T>,
    view_of: impl Fn(NodeId) -> &'v V,
    s: NodeId,
    d: NodeId,
    radius: usize,
    hop_limit: usize,
) -> Result<RouteTrace<T>> {
    for node in [s, d] {
        if !graph.contains(node) {
            return Err(Error::UnknownNode(node));
        }
    }
    if radius == 0 {
        return Err(Error::InvalidConfig("radius must be at least 1".into()));
    }
    let dest = graph.address(d);
    let mut hops = Vec::new();
    let mut current = s;
    let outcome = loop {
        if current == d {
            break Outcome::Delivered;
        }
        if hops.len() >= hop_limit {
            break Outcome::AbortedHopLimit;
        }
        let view = view_of(current);
        if view.address(current).is_none() {
            return Err(Error::ViewInconsistent {
                node: current,
                detail: "view lacks its own node".into(),
            });
        }
        let tree = workspace.run(view, current, radius);
        let (best, key) = tree
            .iter()
            .map(|e| {
                (
                    e,
                    dist_key(
                        &view.address(e.node).expect("tree nodes have addresses"),
                        &dest,
                    ),
                )
            })
            .min_by_key(|(_, key)| *key)
            .expect("tree holds its root");
        if best.node == current {
            break Outcome::DroppedNoProgress;
        }
        let (next, isl) = best.first_hop.expect("non-root entry has a first hop");
        match graph.port(current, isl) {
            Some((far, state)) if far == next && state.is_up() => {}
            other => {
                return Err(Error::ViewInconsistent {
                    node: current,
                    detail: format!("view routes via port {isl} to {next}, topology has {other:?}"),
                })
            }
        }
        hops.push(Hop {
            current,
            target: best.node,
            next,
            key,
            target_depth: best.depth,
        });
        current = next;
    };
    Ok(RouteTrace {
        source: s,
        dest: d,
        hops,
        outcome,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation<T = f64> {
    /// The chosen gateway got farther from the destination.
    KeyIncreased {
        hop: usize,
        previous: DistKey<T>,
        next: DistKey<T>,
    },
    /// A gateway was chosen more times in a row than its depth when first
    /// chosen.
    RepeatedTooOften {
        hop: usize,
        target: NodeId,
        run: usize,
        budget: usize,
    },
    /// Consecutive hops do not chain.
    Broken { hop: usize },
}

/// Checks the descent properties of a trace: gateway keys never increase,
/// and a gateway is re-chosen at most `depth` times in a row, where `depth`
/// is its tree depth at first choice.
pub fn check_monotone<T: Scalar>(trace: &RouteTrace<T>) -> Vec<Violation<T>> {
    let mut violations = Vec::new();
    let mut run = 0usize;
    let mut budget = 0usize;
    for (k, hop) in trace.hops.iter().enumerate() {
        let expected_current = if k == 0 {
            trace.source
        } else {
            trace.hops[k - 1].next
        };
        if hop.current != expected_current {
            violations.push(Violation::Broken { hop: k });
        }
        let repeat = k > 0 && trace.hops[k - 1].target == hop.target;
        if k > 0 {
            let previous = trace.hops[k - 1].key;
            if hop.key > previous {
                violations.push(Violation::KeyIncreased {
                    hop: k,
                    previous,
                    next: hop.key,
                });
            }
        }
        if repeat {
            run += 1;
        } else {
            run = 1;
            budget = hop.target_depth;
        }
        if run > budget {
            violations.push(Violation::RepeatedTooOften {
                hop: k,
                target: hop.target,
                run,
                budget,
            });
        }
    }
    violations
}
