//! Concrete heap states: nodes with integer keys and labeled successor edges.
//!
//! A state is the ground, extensional part of the world at one instant: the
//! allocated nodes, their immutable keys, and the current successor edges.
//! Everything intensional (reachability, well-formedness, presence) is derived
//! from a state by the rule engine; nothing here knows about theories.
//!
//! Two sentinels always exist: `h` (head/anchor, minimum key) and `t`
//! (tail/nil, maximum key). Interior nodes get small ids in creation order and
//! sentinels get the largest ids, so lexicographic id comparison orders
//! interior nodes before sentinels — binding tie-breaks rely on this.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Key carried by the head sentinel.
pub const MIN_KEY: i64 = 0;
/// Key carried by the tail sentinel.
pub const MAX_KEY: i64 = 1000;

/// Stable node identity. Interior nodes count up from zero; sentinels sit at
/// the top of the id space so they sort after every interior node.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const HEAD: NodeId = NodeId(u32::MAX - 1);
    pub const TAIL: NodeId = NodeId(u32::MAX);

    pub fn is_sentinel(self) -> bool {
        self == Self::HEAD || self == Self::TAIL
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::HEAD => write!(f, "h"),
            Self::TAIL => write!(f, "t"),
            NodeId(n) => write!(f, "#{n}"),
        }
    }
}

/// Edge label. Chain structures use `Next`; trees use `Left`/`Right`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Dir {
    Next,
    Left,
    Right,
}

impl Dir {
    pub fn as_str(self) -> &'static str {
        match self {
            Dir::Next => "next",
            Dir::Left => "left",
            Dir::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Dir> {
        match s {
            "next" => Some(Dir::Next),
            "left" => Some(Dir::Left),
            "right" => Some(Dir::Right),
            _ => None,
        }
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A concrete heap: nodes, keys, names, successor edges, and a logical clock
/// that ticks once per applied action. Keys never change after allocation.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct HeapState {
    keys: BTreeMap<NodeId, i64>,
    names: BTreeMap<NodeId, String>,
    succ: BTreeMap<(NodeId, Dir), NodeId>,
    next_id: u32,
    pub clock: u32,
}

impl HeapState {
    /// Fresh state holding only the two sentinels and no edges.
    pub fn new() -> Self {
        let mut keys = BTreeMap::new();
        keys.insert(NodeId::HEAD, MIN_KEY);
        keys.insert(NodeId::TAIL, MAX_KEY);
        let mut names = BTreeMap::new();
        names.insert(NodeId::HEAD, "h".to_string());
        names.insert(NodeId::TAIL, "t".to_string());
        HeapState { keys, names, succ: BTreeMap::new(), next_id: 0, clock: 0 }
    }

    /// Allocate an interior node with the given display name and key.
    pub fn add_node(&mut self, name: impl Into<String>, key: i64) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.keys.insert(id, key);
        self.names.insert(id, name.into());
        id
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.keys.contains_key(&n)
    }

    pub fn key(&self, n: NodeId) -> Option<i64> {
        self.keys.get(&n).copied()
    }

    pub fn name(&self, n: NodeId) -> &str {
        self.names.get(&n).map(|s| s.as_str()).unwrap_or("?")
    }

    /// Node lookup by display name (h, t, n1, …).
    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.names.iter().find(|(_, v)| v.as_str() == name).map(|(k, _)| *k)
    }

    /// Node lookup by key. Keys are unique within well-formed states.
    pub fn node_by_key(&self, key: i64) -> Option<NodeId> {
        self.keys.iter().find(|(_, v)| **v == key).map(|(k, _)| *k)
    }

    pub fn succ(&self, n: NodeId, d: Dir) -> Option<NodeId> {
        self.succ.get(&(n, d)).copied()
    }

    /// Overwrite the `d`-successor of `a`. The raw mutation; the engine's
    /// `apply_step` is the checked entry point that also ticks the clock.
    pub fn set_succ(&mut self, a: NodeId, d: Dir, b: NodeId) {
        self.succ.insert((a, d), b);
    }

    /// All node ids in ascending id order (interiors first, then sentinels).
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.keys.keys().copied()
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(|n| !n.is_sentinel())
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, Dir, NodeId)> + '_ {
        self.succ.iter().map(|(&(a, d), &b)| (a, d, b))
    }

    /// Keys currently allocated, ascending. Used to pick midpoint keys for
    /// fresh nodes and to keep fresh keys unique.
    pub fn all_keys(&self) -> Vec<i64> {
        let mut ks: Vec<i64> = self.keys.values().copied().collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    /// Identity-free form of the subgraph reachable from the head sentinel:
    /// nodes as keys, edges as key triples. Two states that differ only in
    /// node ids/names — or in unlinked allocations — compare equal, which is
    /// what linearizability comparison needs: a thread's fresh node and the
    /// sequential witness's fresh node have different ids, and an aborted
    /// thread leaves behind an orphan node the witness never allocates.
    pub fn canonical_form(&self) -> (Vec<i64>, Vec<(i64, Dir, i64)>) {
        let mut live: BTreeSet<NodeId> = BTreeSet::new();
        let mut frontier = vec![NodeId::HEAD];
        while let Some(n) = frontier.pop() {
            if !live.insert(n) {
                continue;
            }
            for (&(a, _), &b) in &self.succ {
                if a == n && !live.contains(&b) {
                    frontier.push(b);
                }
            }
        }
        let mut nodes: Vec<i64> = live.iter().map(|n| self.keys[n]).collect();
        nodes.sort_unstable();
        let mut edges: Vec<(i64, Dir, i64)> = self
            .succ
            .iter()
            .filter(|((a, _), _)| live.contains(a))
            .map(|(&(a, d), &b)| (self.keys[&a], d, self.keys[&b]))
            .collect();
        edges.sort_unstable();
        (nodes, edges)
    }

    /// Identity-free form of the whole graph, orphans included: the key
    /// multiset plus every edge as a key triple. Distinguishes states that
    /// [`canonical_form`] deliberately conflates, which makes it the right
    /// deduplication key when exploring interference state spaces — orphaned
    /// nodes still carry edges that later derivations can see.
    ///
    /// [`canonical_form`]: HeapState::canonical_form
    pub fn full_form(&self) -> (Vec<i64>, Vec<(i64, Dir, i64)>) {
        let mut nodes: Vec<i64> = self.keys.values().copied().collect();
        nodes.sort_unstable();
        let mut edges: Vec<(i64, Dir, i64)> = self
            .succ
            .iter()
            .map(|(&(a, d), &b)| (self.keys[&a], d, self.keys[&b]))
            .collect();
        edges.sort_unstable();
        (nodes, edges)
    }

    /// Ground facts in DSL syntax, deterministically ordered. `edge/2` is
    /// printed for `Next` edges and `edge/3` for labeled ones.
    pub fn facts(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (&(a, d), &b) in &self.succ {
            match d {
                Dir::Next => out.push(format!("edge({},{}).", self.name(a), self.name(b))),
                _ => out.push(format!("edge({},{},{}).", self.name(a), self.name(b), d)),
            }
        }
        for (&n, &k) in &self.keys {
            out.push(format!("key({},{}).", self.name(n), k));
        }
        out.sort();
        out
    }
}

impl Default for HeapState {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentinels_exist_with_extremal_keys() {
        let s = HeapState::new();
        assert_eq!(s.key(NodeId::HEAD), Some(MIN_KEY));
        assert_eq!(s.key(NodeId::TAIL), Some(MAX_KEY));
        assert_eq!(s.name(NodeId::HEAD), "h");
        assert_eq!(s.name(NodeId::TAIL), "t");
    }

    #[test]
    fn interior_ids_sort_before_sentinels() {
        let mut s = HeapState::new();
        let n1 = s.add_node("n1", 10);
        assert!(n1 < NodeId::HEAD);
        assert!(NodeId::HEAD < NodeId::TAIL);
    }

    #[test]
    fn canonical_form_ignores_identity_and_orphans() {
        let mut a = HeapState::new();
        let x = a.add_node("n1", 10);
        a.set_succ(NodeId::HEAD, Dir::Next, x);
        a.set_succ(x, Dir::Next, NodeId::TAIL);

        // Same reachable content under a different name and id layout, with
        // an extra unlinked allocation and a skewed clock.
        let mut b = HeapState::new();
        b.add_node("scratch", 77);
        let y = b.add_node("other", 10);
        b.set_succ(NodeId::HEAD, Dir::Next, y);
        b.set_succ(y, Dir::Next, NodeId::TAIL);
        b.clock = 9;
        assert_eq!(a.canonical_form(), b.canonical_form());

        // Linking the extra node in makes the difference visible.
        let w = b.node_by_name("scratch").unwrap();
        b.set_succ(y, Dir::Next, w);
        b.set_succ(w, Dir::Next, NodeId::TAIL);
        assert_ne!(a.canonical_form(), b.canonical_form());
    }

    #[test]
    fn facts_are_sorted_and_stable() {
        let mut s = HeapState::new();
        let n = s.add_node("n1", 10);
        s.set_succ(NodeId::HEAD, Dir::Next, n);
        s.set_succ(n, Dir::Next, NodeId::TAIL);
        let facts = s.facts();
        assert!(facts.contains(&"edge(h,n1).".to_string()));
        assert!(facts.contains(&"key(n1,10).".to_string()));
        let mut sorted = facts.clone();
        sorted.sort();
        assert_eq!(facts, sorted);
    }
}
