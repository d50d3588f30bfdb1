//! Non-overlapping leaf covers (NOL-covers): antichains of nodes whose leaf
//! cover is every leaf. They form the hypothesis space searched at inference.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::nodeset::NodeSet;
use crate::taxonomy::{NodeId, Taxonomy};

/// Default cap on exhaustive enumeration before switching to depth levels.
pub const DEFAULT_MAX_COVERS: usize = 200_000;

/// Largest taxonomy accepted by [`brute_force_nol_covers`].
pub const BRUTE_FORCE_MAX_NODES: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverError {
    #[error("more than {limit} NOL-covers; enable the depth-limited fallback or raise the limit")]
    TooManyCovers { limit: usize },
    #[error("brute-force enumeration supports at most {max} nodes, taxonomy has {nodes}")]
    TaxonomyTooLarge { nodes: usize, max: usize },
    #[error("node set #{position} is not a non-overlapping leaf cover")]
    NotANolCover { position: usize },
    #[error("cover space is empty")]
    EmptySpace,
    #[error("cover space lacks the all-leaves cover")]
    MissingLeafCover,
    #[error("cover space belongs to taxonomy {found}, expected {expected}")]
    TaxonomyMismatch { expected: String, found: String },
}

/// One NOL-cover with its stable enumeration index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NolCover {
    id: usize,
    members: Vec<NodeId>,
    member_set: NodeSet,
    covered_leaves: NodeSet,
}

impl NolCover {
    pub fn id(&self) -> usize {
        self.id
    }

    /// Members in ascending node index order.
    pub fn members(&self) -> &[NodeId] {
        &self.members
    }

    pub fn member_set(&self) -> &NodeSet {
        &self.member_set
    }

    pub fn covered_leaves(&self) -> &NodeSet {
        &self.covered_leaves
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.member_set.contains(node)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoverMode {
    /// Every NOL-cover of the taxonomy.
    Exhaustive,
    /// One cover per depth level.
    DepthLimited,
    /// A caller-supplied subset of NOL-covers.
    Custom,
}

impl CoverMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CoverMode::Exhaustive => "exhaustive",
            CoverMode::DepthLimited => "depth-limited",
            CoverMode::Custom => "custom",
        }
    }
}

/// Ordered, deduplicated collection of NOL-covers bound to one taxonomy.
///
/// Covers are sorted by size, then lexicographically by member indices; a
/// cover's id is its position in that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverSpace {
    covers: Vec<NolCover>,
    mode: CoverMode,
    taxonomy_hash: String,
    leaf_cover_id: usize,
    skipped_levels: Vec<usize>,
}

impl CoverSpace {
    /// Builds a space from arbitrary node sets, validating each one and
    /// dropping duplicates. The all-leaves cover must be among them.
    pub fn from_sets(
        t: &Taxonomy,
        sets: Vec<NodeSet>,
        mode: CoverMode,
    ) -> Result<Self, CoverError> {
        if sets.is_empty() {
            return Err(CoverError::EmptySpace);
        }
        for (position, s) in sets.iter().enumerate() {
            if !is_nol_cover(t, s) {
                return Err(CoverError::NotANolCover { position });
            }
        }
        Self::assemble(t, sets, mode, Vec::new())
    }

    fn assemble(
        t: &Taxonomy,
        sets: Vec<NodeSet>,
        mode: CoverMode,
        skipped_levels: Vec<usize>,
    ) -> Result<Self, CoverError> {
        let mut keyed: Vec<(Vec<NodeId>, NodeSet)> =
            sets.into_iter().map(|s| (s.to_vec(), s)).collect();
        keyed.sort_by(|(a, _), (b, _)| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        keyed.dedup_by(|(a, _), (b, _)| a == b);
        let covers: Vec<NolCover> = keyed
            .into_iter()
            .enumerate()
            .map(|(id, (members, member_set))| {
                let covered_leaves = t
                    .leaf_cover(&member_set)
                    .expect("cover members belong to the taxonomy");
                NolCover {
                    id,
                    members,
                    member_set,
                    covered_leaves,
                }
            })
            .collect();
        let leaf_cover_id = covers
            .iter()
            .position(|c| c.member_set == *t.leaf_set())
            .ok_or(CoverError::MissingLeafCover)?;
        Ok(Self {
            covers,
            mode,
            taxonomy_hash: t.fingerprint().to_string(),
            leaf_cover_id,
            skipped_levels,
        })
    }

    pub fn covers(&self) -> &[NolCover] {
        &self.covers
    }

    pub fn get(&self, id: usize) -> Option<&NolCover> {
        self.covers.get(id)
    }

    pub fn len(&self) -> usize {
        self.covers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covers.is_empty()
    }

    pub fn mode(&self) -> CoverMode {
        self.mode
    }

    pub fn taxonomy_hash(&self) -> &str {
        &self.taxonomy_hash
    }

    /// Id of the cover made of all leaves.
    pub fn leaf_cover_id(&self) -> usize {
        self.leaf_cover_id
    }

    /// Depth levels whose canonical cover was rejected (depth-limited mode).
    pub fn skipped_levels(&self) -> &[usize] {
        &self.skipped_levels
    }

    /// Number of covers per cover size.
    pub fn size_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for c in &self.covers {
            *hist.entry(c.len()).or_insert(0) += 1;
        }
        hist
    }

    /// Member sets, in id order.
    pub fn member_sets(&self) -> impl Iterator<Item = &NodeSet> {
        self.covers.iter().map(NolCover::member_set)
    }

    pub fn check_taxonomy(&self, t: &Taxonomy) -> Result<(), CoverError> {
        if self.taxonomy_hash == t.fingerprint() {
            Ok(())
        } else {
            Err(CoverError::TaxonomyMismatch {
                expected: t.fingerprint().to_string(),
                found: self.taxonomy_hash.clone(),
            })
        }
    }
}

/// Leaf coverage plus ancestral independence.
pub fn is_nol_cover(t: &Taxonomy, s: &NodeSet) -> bool {
    if t.check_set(s).is_err() || s.is_empty() {
        return false;
    }
    let independent = s.iter().all(|v| t.descendants(v).is_disjoint(s));
    independent && t.leaf_cover(s).is_ok_and(|c| c == *t.leaf_set())
}

/// Limits for [`enumerate_nol_covers`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationOptions {
    /// Stop after this many covers; `None` means unbounded.
    pub max_covers: Option<usize>,
    /// On overflow return [`depth_limited_covers`] instead of an error.
    pub fallback: bool,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            max_covers: Some(DEFAULT_MAX_COVERS),
            fallback: true,
        }
    }
}

/// Top-down enumeration of every NOL-cover starting from `{root}`.
///
/// Each step replaces one internal member by its children and then drops any
/// new child that already lies below another member. On trees the drop never
/// fires and this is the plain replace-by-children search; on DAGs it keeps
/// the search inside the space of antichains, where every cover is reachable.
pub fn enumerate_nol_covers(
    t: &Taxonomy,
    options: EnumerationOptions,
) -> Result<CoverSpace, CoverError> {
    let root = t.node_set([t.root()]);
    let mut visited: BTreeSet<NodeSet> = BTreeSet::new();
    let mut stack = alloc::vec![root.clone()];
    visited.insert(root);
    let mut found = Vec::new();

    while let Some(cover) = stack.pop() {
        debug_assert!(is_nol_cover(t, &cover));
        found.push(cover.clone());
        if let Some(limit) = options.max_covers {
            if found.len() > limit {
                return if options.fallback {
                    Ok(depth_limited_covers(t))
                } else {
                    Err(CoverError::TooManyCovers { limit })
                };
            }
        }
        for member in cover.iter() {
            if t.is_leaf(member) {
                continue;
            }
            let mut next = cover.clone();
            next.remove(member);
            next.union_with(&t.node_set(t.children(member).iter().copied()));
            // Members of an antichain are never below `member`, so only the
            // new children can be dominated.
            for &child in t.children(member) {
                if !t.ancestors(child).is_disjoint(&next) {
                    next.remove(child);
                }
            }
            if !visited.contains(&next) {
                visited.insert(next.clone());
                stack.push(next);
            }
        }
    }
    CoverSpace::assemble(t, found, CoverMode::Exhaustive, Vec::new())
}

/// One cover per depth level `d`: every node at (longest-path) depth `d`
/// plus every leaf shallower than `d`.
pub fn depth_limited_covers(t: &Taxonomy) -> CoverSpace {
    let mut sets = Vec::new();
    let mut skipped = Vec::new();
    for level in 0..=t.depth() {
        let set = t.node_set(t.nodes().filter(|&v| {
            let d = t.node_depth(v).expect("own node");
            d == level || (d < level && t.is_leaf(v))
        }));
        if is_nol_cover(t, &set) {
            sets.push(set);
        } else {
            skipped.push(level);
        }
    }
    CoverSpace::assemble(t, sets, CoverMode::DepthLimited, skipped)
        .expect("deepest level is the all-leaves cover")
}

/// Filters all `2^|V|` node subsets through the NOL-cover conditions.
pub fn brute_force_nol_covers(t: &Taxonomy) -> Result<CoverSpace, CoverError> {
    let n = t.len();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(CoverError::TaxonomyTooLarge {
            nodes: n,
            max: BRUTE_FORCE_MAX_NODES,
        });
    }
    let mask_of = |s: &NodeSet| s.iter().fold(0u32, |m, v| m | (1 << v.index()));
    let below: Vec<u32> = t.nodes().map(|v| mask_of(t.descendants(v))).collect();
    let leaves_of: Vec<u32> = t.nodes().map(|v| mask_of(t.leaf_cover_of(v))).collect();
    let all_leaves = mask_of(t.leaf_set());

    let mut sets = Vec::new();
    for subset in 1u32..(1u32 << n) {
        let mut covered = 0u32;
        let mut independent = true;
        let mut bits = subset;
        while bits != 0 {
            let v = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            if below[v] & subset != 0 {
                independent = false;
                break;
            }
            covered |= leaves_of[v];
        }
        if independent && covered == all_leaves {
            sets.push(
                t.node_set(
                    (0..n)
                        .filter(|i| subset & (1 << i) != 0)
                        .map(NodeId::from_index),
                ),
            );
        }
    }
    CoverSpace::assemble(t, sets, CoverMode::Exhaustive, Vec::new())
}
