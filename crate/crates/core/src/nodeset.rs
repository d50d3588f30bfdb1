//! Fixed-capacity bitset over the dense node indices of one taxonomy.

use alloc::vec::Vec;
use core::fmt;

use fixedbitset::FixedBitSet;

use crate::taxonomy::NodeId;

/// A set of nodes, stored as one bit per node of the owning taxonomy.
///
/// All sets built for a taxonomy share the same capacity (`|V|`), so set
/// operations never need to grow.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeSet {
    bits: FixedBitSet,
}

impl NodeSet {
    /// Empty set able to hold indices `0..capacity`.
    pub fn empty(capacity: usize) -> Self {
        Self {
            bits: FixedBitSet::with_capacity(capacity),
        }
    }

    /// Set containing every index in `0..capacity`.
    pub fn full(capacity: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(capacity);
        bits.insert_range(..);
        Self { bits }
    }

    /// Builds a set from node ids. Panics if an id is outside `0..capacity`.
    pub fn from_ids<I: IntoIterator<Item = NodeId>>(capacity: usize, ids: I) -> Self {
        let mut set = Self::empty(capacity);
        for id in ids {
            set.insert(id);
        }
        set
    }

    pub fn capacity(&self) -> usize {
        self.bits.len()
    }

    pub fn insert(&mut self, id: NodeId) {
        self.bits.insert(id.index());
    }

    pub fn remove(&mut self, id: NodeId) {
        self.bits.set(id.index(), false);
    }

    /// Exact membership; ids beyond the capacity are never members.
    pub fn contains(&self, id: NodeId) -> bool {
        self.bits.contains(id.index())
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        self.bits.union_with(&other.bits);
    }

    pub fn intersect_with(&mut self, other: &NodeSet) {
        self.bits.intersect_with(&other.bits);
    }

    pub fn difference_with(&mut self, other: &NodeSet) {
        self.bits.difference_with(&other.bits);
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.bits.is_disjoint(&other.bits)
    }

    pub fn intersection_count(&self, other: &NodeSet) -> usize {
        self.bits.intersection_count(&other.bits)
    }

    /// Members in ascending index order.
    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.bits.ones().map(NodeId::from_index)
    }

    pub fn to_vec(&self) -> Vec<NodeId> {
        self.iter().collect()
    }

    /// Largest member, if any.
    pub fn last(&self) -> Option<NodeId> {
        self.bits.maximum().map(NodeId::from_index)
    }
}

impl fmt::Debug for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.bits.ones()).finish()
    }
}
