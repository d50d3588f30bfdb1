//! Class-label hierarchy: a rooted DAG with parent→child edges.
//!
//! All reachability is precomputed at construction as one strict-descendant
//! and one strict-ancestor bitset per node, so ancestor checks and leaf-cover
//! queries are bitset operations.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nodeset::NodeSet;

/// Dense index of a node inside one [`Taxonomy`]; valid range is `0..|V|`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    pub fn from_index(index: usize) -> Self {
        NodeId(u32::try_from(index).expect("node index exceeds u32"))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("taxonomy has no nodes")]
    Empty,
    #[error("node at position {position} has an empty name")]
    EmptyName { position: usize },
    #[error("duplicate node name `{name}`")]
    DuplicateNode { name: String },
    #[error("edge `{parent}` -> `{child}` references unknown node `{unknown}`")]
    UnknownNode {
        parent: String,
        child: String,
        unknown: String,
    },
    #[error("cycle detected: {}", path.join(" -> "))]
    Cycle { path: Vec<String> },
    #[error("taxonomy has multiple roots: {}", roots.join(", "))]
    MultipleRoots { roots: Vec<String> },
    #[error("node index {index} is out of range for a taxonomy with {len} nodes")]
    OutOfRange { index: usize, len: usize },
    #[error("lowest common ancestors of an empty set are undefined")]
    EmptyLcaInput,
}

/// Immutable, validated class hierarchy.
#[derive(Clone)]
pub struct Taxonomy {
    names: Vec<String>,
    index: BTreeMap<String, NodeId>,
    children: Vec<Vec<NodeId>>,
    parents: Vec<Vec<NodeId>>,
    root: NodeId,
    leaves: Vec<NodeId>,
    leaf_column: Vec<Option<usize>>,
    leaf_mask: NodeSet,
    depths: Vec<usize>,
    max_depth: usize,
    topo: Vec<NodeId>,
    descendants: Vec<NodeSet>,
    ancestors: Vec<NodeSet>,
    leaf_covers: Vec<NodeSet>,
    fingerprint: String,
}

impl fmt::Debug for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Taxonomy")
            .field("nodes", &self.names.len())
            .field("leaves", &self.leaves.len())
            .field("root", &self.names[self.root.index()])
            .field("depth", &self.max_depth)
            .finish()
    }
}

impl Taxonomy {
    /// Validates a node list and parent→child edge list.
    ///
    /// Node order is significant: it fixes node indices and therefore the
    /// leaf column order used by score vectors. Repeated edges are merged.
    pub fn new<S, P, C>(nodes: &[S], edges: &[(P, C)]) -> Result<Self, TaxonomyError>
    where
        S: AsRef<str>,
        P: AsRef<str>,
        C: AsRef<str>,
    {
        if nodes.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let n = nodes.len();
        let mut names = Vec::with_capacity(n);
        let mut index = BTreeMap::new();
        for (position, name) in nodes.iter().enumerate() {
            let name = name.as_ref();
            if name.is_empty() {
                return Err(TaxonomyError::EmptyName { position });
            }
            if index
                .insert(name.to_string(), NodeId::from_index(position))
                .is_some()
            {
                return Err(TaxonomyError::DuplicateNode {
                    name: name.to_string(),
                });
            }
            names.push(name.to_string());
        }

        let mut children = vec![Vec::new(); n];
        let mut parents = vec![Vec::new(); n];
        for (parent, child) in edges {
            let (parent, child) = (parent.as_ref(), child.as_ref());
            let lookup = |name: &str| {
                index
                    .get(name)
                    .copied()
                    .ok_or_else(|| TaxonomyError::UnknownNode {
                        parent: parent.to_string(),
                        child: child.to_string(),
                        unknown: name.to_string(),
                    })
            };
            let p = lookup(parent)?;
            let c = lookup(child)?;
            children[p.index()].push(c);
            parents[c.index()].push(p);
        }
        for list in children.iter_mut().chain(parents.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }

        let topo =
            topological_order(&children, &parents).map_err(|cycle| TaxonomyError::Cycle {
                path: cycle.iter().map(|id| names[id.index()].clone()).collect(),
            })?;

        let roots: Vec<NodeId> = (0..n)
            .map(NodeId::from_index)
            .filter(|v| parents[v.index()].is_empty())
            .collect();
        // An acyclic nonempty graph always has at least one source.
        if roots.len() > 1 {
            return Err(TaxonomyError::MultipleRoots {
                roots: roots.iter().map(|r| names[r.index()].clone()).collect(),
            });
        }
        let root = roots[0];

        let leaves: Vec<NodeId> = (0..n)
            .map(NodeId::from_index)
            .filter(|v| children[v.index()].is_empty())
            .collect();
        let mut leaf_column = vec![None; n];
        for (col, leaf) in leaves.iter().enumerate() {
            leaf_column[leaf.index()] = Some(col);
        }
        let leaf_mask = NodeSet::from_ids(n, leaves.iter().copied());

        let mut depths = vec![0usize; n];
        for &v in &topo {
            for &c in &children[v.index()] {
                depths[c.index()] = depths[c.index()].max(depths[v.index()] + 1);
            }
        }
        let max_depth = depths.iter().copied().max().unwrap_or(0);

        let mut descendants = vec![NodeSet::empty(n); n];
        for &v in topo.iter().rev() {
            let mut acc = NodeSet::empty(n);
            for &c in &children[v.index()] {
                acc.insert(c);
                acc.union_with(&descendants[c.index()]);
            }
            descendants[v.index()] = acc;
        }
        let mut ancestors = vec![NodeSet::empty(n); n];
        for &v in &topo {
            let mut acc = NodeSet::empty(n);
            for &p in &parents[v.index()] {
                acc.insert(p);
                acc.union_with(&ancestors[p.index()]);
            }
            ancestors[v.index()] = acc;
        }
        let leaf_covers = (0..n)
            .map(|i| {
                let mut cover = descendants[i].clone();
                cover.insert(NodeId::from_index(i));
                cover.intersect_with(&leaf_mask);
                cover
            })
            .collect();

        let fingerprint = fingerprint(&names, &children);

        Ok(Self {
            names,
            index,
            children,
            parents,
            root,
            leaves,
            leaf_column,
            leaf_mask,
            depths,
            max_depth,
            topo,
            descendants,
            ancestors,
            leaf_covers,
            fingerprint,
        })
    }

    /// Number of nodes `|V|`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    /// Always false for a constructed taxonomy.
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len()).map(NodeId::from_index)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Leaves in node-list order; position `i` is score column `i`.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    pub fn leaf_set(&self) -> &NodeSet {
        &self.leaf_mask
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.leaf_mask.contains(id)
    }

    /// Score column of a leaf, `None` for internal nodes.
    pub fn leaf_column(&self, id: NodeId) -> Option<usize> {
        self.leaf_column.get(id.index()).copied().flatten()
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.index()]
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id.index()]
    }

    /// Parent→child edges, ordered by parent then child index.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes()
            .flat_map(move |p| self.children(p).iter().map(move |&c| (p, c)))
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        self.max_depth
    }

    /// Length in edges of the longest path from the root to `id`.
    pub fn node_depth(&self, id: NodeId) -> Result<usize, TaxonomyError> {
        self.check_node(id)?;
        Ok(self.depths[id.index()])
    }

    pub fn topological_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// `true` iff `ancestor` strictly precedes `node` (transitive closure of the
    /// parent relation).
    pub fn is_ancestor(&self, ancestor: NodeId, node: NodeId) -> bool {
        self.descendants[ancestor.index()].contains(node)
    }

    /// Strict descendants of `id`.
    pub fn descendants(&self, id: NodeId) -> &NodeSet {
        &self.descendants[id.index()]
    }

    /// Strict ancestors of `id`.
    pub fn ancestors(&self, id: NodeId) -> &NodeSet {
        &self.ancestors[id.index()]
    }

    /// Leaf cover of a single node.
    pub fn leaf_cover_of(&self, id: NodeId) -> &NodeSet {
        &self.leaf_covers[id.index()]
    }

    pub fn empty_set(&self) -> NodeSet {
        NodeSet::empty(self.len())
    }

    pub fn node_set<I: IntoIterator<Item = NodeId>>(&self, ids: I) -> NodeSet {
        NodeSet::from_ids(self.len(), ids)
    }

    /// Set from names; `None` if any name is unknown.
    pub fn node_set_by_name<'a, I: IntoIterator<Item = &'a str>>(
        &self,
        names: I,
    ) -> Option<NodeSet> {
        let mut set = self.empty_set();
        for name in names {
            set.insert(self.id(name)?);
        }
        Some(set)
    }

    pub fn set_names(&self, set: &NodeSet) -> Vec<&str> {
        set.iter().map(|id| self.name(id)).collect()
    }

    pub fn check_node(&self, id: NodeId) -> Result<(), TaxonomyError> {
        if id.index() < self.len() {
            Ok(())
        } else {
            Err(TaxonomyError::OutOfRange {
                index: id.index(),
                len: self.len(),
            })
        }
    }

    pub fn check_set(&self, set: &NodeSet) -> Result<(), TaxonomyError> {
        match set.last() {
            Some(id) => self.check_node(id),
            None => Ok(()),
        }
    }

    /// All leaves that are `s` members or descendants of a member.
    pub fn leaf_cover(&self, set: &NodeSet) -> Result<NodeSet, TaxonomyError> {
        self.check_set(set)?;
        let mut cover = self.empty_set();
        for v in set.iter() {
            cover.union_with(&self.leaf_covers[v.index()]);
        }
        Ok(cover)
    }

    /// Minimal common (strict) ancestors of `set`.
    ///
    /// A singleton `{v}` maps to `{v}`. For larger sets without the root the
    /// root is a common ancestor, so the result is nonempty; a member that is
    /// an ancestor of all other members is not itself a strict common ancestor.
    pub fn lca_set(&self, set: &NodeSet) -> Result<NodeSet, TaxonomyError> {
        self.check_set(set)?;
        let mut members = set.iter();
        let first = members.next().ok_or(TaxonomyError::EmptyLcaInput)?;
        if set.len() == 1 {
            return Ok(self.node_set([first]));
        }
        let mut common = self.ancestors[first.index()].clone();
        for v in members {
            common.intersect_with(&self.ancestors[v.index()]);
        }
        let lowest = common
            .iter()
            .filter(|a| self.descendants[a.index()].is_disjoint(&common));
        Ok(self.node_set(lowest))
    }

    /// Stable identifier of the node list and edge set.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

/// Kahn's algorithm; on failure returns one cycle in parent→child order.
fn topological_order(
    children: &[Vec<NodeId>],
    parents: &[Vec<NodeId>],
) -> Result<Vec<NodeId>, Vec<NodeId>> {
    let n = children.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: Vec<NodeId> = (0..n)
        .rev()
        .map(NodeId::from_index)
        .filter(|v| indegree[v.index()] == 0)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop() {
        order.push(v);
        for &c in children[v.index()].iter().rev() {
            indegree[c.index()] -= 1;
            if indegree[c.index()] == 0 {
                ready.push(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every unprocessed node still has an unprocessed parent; walking parents
    // from any of them must revisit a node.
    let start = (0..n).find(|&i| indegree[i] > 0).expect("unprocessed node");
    let mut seen = vec![usize::MAX; n];
    let mut walk = Vec::new();
    let mut v = NodeId::from_index(start);
    while seen[v.index()] == usize::MAX {
        seen[v.index()] = walk.len();
        walk.push(v);
        v = *parents[v.index()]
            .iter()
            .find(|p| indegree[p.index()] > 0)
            .expect("unprocessed parent");
    }
    let mut cycle: Vec<NodeId> = walk[seen[v.index()]..].to_vec();
    cycle.reverse();
    let start = (0..cycle.len())
        .min_by_key(|&i| cycle[i])
        .expect("nonempty cycle");
    cycle.rotate_left(start);
    cycle.push(cycle[0]);
    Err(cycle)
}

fn fingerprint(names: &[String], children: &[Vec<NodeId>]) -> String {
    let mut hasher = Sha256::new();
    for name in names {
        hasher.update((name.len() as u64).to_le_bytes());
        hasher.update(name.as_bytes());
    }
    for (p, list) in children.iter().enumerate() {
        for c in list {
            hasher.update((p as u64).to_le_bytes());
            hasher.update((c.index() as u64).to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(32);
    for byte in &digest[..16] {
        out.push_str(&alloc::format!("{byte:02x}"));
    }
    out
}
