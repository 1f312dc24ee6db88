//! The occupancy tree of a sample and its sibling completion.
//!
//! [`OccupancyForest`] stores every cube of the completed tree `T(z)` in an
//! arena; the `2^d` children of a refined cube occupy consecutive slots. Each
//! node caches the indices of the samples it holds and their label sum, so
//! empirical measures of tree cells never rescan the data.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::ops::Range;

use crate::empirical::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{check_dim, locate, DyadicCube, Point, MAX_LEVEL};

pub type NodeId = usize;

pub const DEFAULT_J_MAX: u32 = 16;

/// Default cap on the number of trees [`enumerate_subtrees`] will produce.
pub const DEFAULT_ENUMERATION_LIMIT: u128 = 1_000_000;

/// When a cube of the occupancy tree is refined further.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum StoppingRule {
    /// Refine only cubes holding at least two samples. Splitting a cube with a
    /// single sample never changes the plain leaf energy.
    #[default]
    SingleSample,
    /// Refine every occupied cube down to `j_max`.
    OccupiedOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForestConfig {
    pub j_max: u32,
    pub rule: StoppingRule,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { j_max: DEFAULT_J_MAX, rule: StoppingRule::SingleSample }
    }
}

impl ForestConfig {
    pub fn with_j_max(j_max: u32) -> Self {
        ForestConfig { j_max, ..Default::default() }
    }
}

#[derive(Clone, Debug)]
struct Node {
    cube: DyadicCube,
    parent: Option<NodeId>,
    first_child: Option<NodeId>,
    samples: Vec<u32>,
    label_sum: i64,
}

#[derive(Clone, Debug)]
pub struct OccupancyForest {
    data: Dataset,
    config: ForestConfig,
    nodes: Vec<Node>,
    by_cube: HashMap<DyadicCube, NodeId>,
}

/// Build the completed occupancy tree with the default stopping rule.
pub fn build_forest(data: &Dataset, j_max: u32) -> Result<OccupancyForest> {
    OccupancyForest::build(data.clone(), ForestConfig::with_j_max(j_max))
}

impl OccupancyForest {
    pub fn build(data: Dataset, config: ForestConfig) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if config.j_max > MAX_LEVEL {
            return Err(Error::LevelTooDeep { level: config.j_max, max: MAX_LEVEL });
        }
        let d = data.dim();
        let fanout = 1usize << d;
        let min_to_refine = match config.rule {
            StoppingRule::SingleSample => 2,
            StoppingRule::OccupiedOnly => 1,
        };

        let root_label_sum = data.samples().iter().map(|s| s.y()).sum();
        let mut nodes = vec![Node {
            cube: DyadicCube::root(d),
            parent: None,
            first_child: None,
            samples: (0..data.len() as u32).collect(),
            label_sum: root_label_sum,
        }];

        let mut queue = VecDeque::from([0usize]);
        while let Some(id) = queue.pop_front() {
            let node = &nodes[id];
            if node.samples.len() < min_to_refine || node.cube.level() >= config.j_max {
                continue;
            }
            let cube = node.cube.clone();
            let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); fanout];
            for &i in &node.samples {
                buckets[cube.child_slot(&data.samples()[i as usize].x)].push(i);
            }
            let first = nodes.len();
            nodes[id].first_child = Some(first);
            for (slot, samples) in buckets.into_iter().enumerate() {
                let label_sum = samples.iter().map(|&i| data.samples()[i as usize].y()).sum();
                if !samples.is_empty() {
                    queue.push_back(nodes.len());
                }
                nodes.push(Node {
                    cube: cube.child(slot),
                    parent: Some(id),
                    first_child: None,
                    samples,
                    label_sum,
                });
            }
        }

        let by_cube = nodes.iter().enumerate().map(|(i, n)| (n.cube.clone(), i)).collect();
        Ok(OccupancyForest { data, config, nodes, by_cube })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn config(&self) -> ForestConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cube(&self, id: NodeId) -> &DyadicCube {
        &self.nodes[id].cube
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn node_of(&self, cube: &DyadicCube) -> Option<NodeId> {
        self.by_cube.get(cube).copied()
    }

    /// Children of a refined node, in lexicographic cube order.
    pub fn children(&self, id: NodeId) -> Option<Range<NodeId>> {
        let fanout = 1usize << self.dim();
        self.nodes[id].first_child.map(|c| c..c + fanout)
    }

    pub fn is_refined(&self, id: NodeId) -> bool {
        self.nodes[id].first_child.is_some()
    }

    pub fn occupied_children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.children(id).into_iter().flatten().filter(|&c| self.is_occupied(c))
    }

    pub fn is_occupied(&self, id: NodeId) -> bool {
        !self.nodes[id].samples.is_empty()
    }

    /// Indices into [`Self::data`] of the samples lying in the node's cube.
    pub fn samples(&self, id: NodeId) -> &[u32] {
        &self.nodes[id].samples
    }

    pub fn count(&self, id: NodeId) -> usize {
        self.nodes[id].samples.len()
    }

    /// `n * eta_bar` of the node's cube.
    pub fn label_sum(&self, id: NodeId) -> i64 {
        self.nodes[id].label_sum
    }

    /// Number of refined cubes in the subtree rooted at `id`.
    pub fn internal_count_below(&self, id: NodeId) -> usize {
        let mut total = 0;
        let mut stack = vec![id];
        while let Some(q) = stack.pop() {
            if let Some(ch) = self.children(q) {
                total += 1;
                stack.extend(ch);
            }
        }
        total
    }

    /// Number of refined cubes in `T(z)`; no tree inside the forest uses more.
    pub fn internal_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.first_child.is_some()).count()
    }

    /// Node ids in an order where every child precedes its parent.
    pub fn bottom_up(&self) -> impl Iterator<Item = NodeId> {
        // children are always appended after their parent
        (0..self.nodes.len()).rev()
    }

    /// The completed tree `T(z)` as a plain set of cubes.
    pub fn tree(&self) -> CompleteTree {
        CompleteTree { dim: self.dim(), nodes: self.nodes.iter().map(|n| n.cube.clone()).collect() }
    }

    /// Cubes of the occupancy tree `T'(z)`.
    pub fn occupied_cubes(&self) -> Vec<DyadicCube> {
        self.nodes.iter().filter(|n| !n.samples.is_empty()).map(|n| n.cube.clone()).collect()
    }

    /// Label sum over a union of forest cells, read from the cache. The cells
    /// are assumed disjoint; cubes absent from the forest are an error.
    pub fn label_sum_of_cells<'a, I>(&self, cells: I) -> Result<i64>
    where
        I: IntoIterator<Item = &'a DyadicCube>,
    {
        cells.into_iter().try_fold(0i64, |acc, q| {
            let id = self
                .node_of(q)
                .ok_or_else(|| Error::InvalidParameter(format!("{q} is not a cube of the forest")))?;
            Ok(acc + self.label_sum(id))
        })
    }

    /// Deepest forest node containing `p`.
    pub fn leaf_node_containing(&self, p: &Point) -> NodeId {
        let mut id = self.root();
        while let Some(ch) = self.children(id) {
            id = ch.start + self.nodes[id].cube.child_slot(p);
        }
        id
    }

    /// Per-node label sums of another dataset routed through this forest:
    /// entry `q` is the sum of labels of `other`'s samples inside cube `q`.
    pub fn foreign_label_sums(&self, other: &Dataset) -> Result<Vec<i64>> {
        check_dim(self.dim(), other.dim())?;
        let mut sums = vec![0i64; self.nodes.len()];
        for s in other.samples() {
            let mut id = self.leaf_node_containing(&s.x);
            loop {
                sums[id] += s.y();
                match self.nodes[id].parent {
                    Some(p) => id = p,
                    None => break,
                }
            }
        }
        Ok(sums)
    }
}

/// A finite complete tree of dyadic cubes: contains the root, and every
/// non-root cube comes with its parent and all of its siblings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompleteTree {
    dim: usize,
    nodes: BTreeSet<DyadicCube>,
}

impl CompleteTree {
    pub fn root_only(dim: usize) -> Self {
        CompleteTree { dim, nodes: std::iter::once(DyadicCube::root(dim)).collect() }
    }

    /// Every cube down to `level`, a uniform refinement.
    pub fn uniform(dim: usize, level: u32) -> Self {
        let mut nodes = BTreeSet::new();
        let mut frontier = vec![DyadicCube::root(dim)];
        for _ in 0..level {
            let next: Vec<DyadicCube> = frontier.iter().flat_map(|q| q.children()).collect();
            nodes.extend(frontier);
            frontier = next;
        }
        nodes.extend(frontier);
        CompleteTree { dim, nodes }
    }

    /// Validate and wrap a set of cubes.
    pub fn from_cubes<I: IntoIterator<Item = DyadicCube>>(dim: usize, cubes: I) -> Result<Self> {
        let nodes: BTreeSet<DyadicCube> = cubes.into_iter().collect();
        if !nodes.contains(&DyadicCube::root(dim)) {
            return Err(Error::InvalidParameter("complete tree must contain the root".into()));
        }
        for q in &nodes {
            check_dim(dim, q.dim())?;
            if let Some(parent) = q.parent() {
                if !nodes.contains(&parent) {
                    return Err(Error::InvalidParameter(format!("parent of {q} missing")));
                }
                if parent.children().iter().any(|s| !nodes.contains(s)) {
                    return Err(Error::InvalidParameter(format!("sibling of {q} missing")));
                }
            }
        }
        Ok(CompleteTree { dim, nodes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains_cube(&self, q: &DyadicCube) -> bool {
        self.nodes.contains(q)
    }

    /// All cubes in address order (level, then index).
    pub fn cubes(&self) -> impl Iterator<Item = &DyadicCube> {
        self.nodes.iter()
    }

    pub fn is_leaf(&self, q: &DyadicCube) -> bool {
        self.nodes.contains(q) && !self.nodes.contains(&q.child(0))
    }

    pub fn leaves(&self) -> Vec<DyadicCube> {
        self.nodes.iter().filter(|q| !self.nodes.contains(&q.child(0))).cloned().collect()
    }

    /// The number `m` of refined cubes; the tree has `(2^d - 1) m + 1` leaves.
    pub fn refinement_count(&self) -> usize {
        (self.nodes.len() - 1) >> self.dim
    }

    /// Replace the leaf `q` by its children.
    pub fn refine(&mut self, q: &DyadicCube) -> Result<()> {
        if !self.is_leaf(q) {
            return Err(Error::InvalidParameter(format!("{q} is not a leaf")));
        }
        self.nodes.extend(q.children());
        Ok(())
    }

    /// The leaf whose cube contains `p`. Dimensions are assumed to match.
    pub fn leaf_containing(&self, p: &Point) -> DyadicCube {
        let mut q = DyadicCube::root(self.dim);
        loop {
            let next = q.child(q.child_slot(p));
            if !self.nodes.contains(&next) {
                return q;
            }
            q = next;
        }
    }

    /// Check point/tree dimensions, then [`Self::leaf_containing`].
    pub fn locate_leaf(&self, p: &Point) -> Result<DyadicCube> {
        check_dim(self.dim, p.dim())?;
        let leaf = self.leaf_containing(p);
        debug_assert_eq!(locate(p, leaf.level()).ok().as_ref(), Some(&leaf));
        Ok(leaf)
    }
}

/// Number of complete subtrees rooted at each node with at most `b`
/// refinements, for `b = 0..=budget`, saturating at `u128::MAX`.
fn subtree_counts(forest: &OccupancyForest, budget: usize) -> Vec<Vec<u128>> {
    let mut counts: Vec<Vec<u128>> = vec![Vec::new(); forest.len()];
    for id in forest.bottom_up() {
        let mut row = vec![1u128; budget + 1];
        if let Some(children) = forest.children(id) {
            // conv[t] = number of child-tree tuples using at most t refinements
            let mut conv = vec![1u128; budget + 1];
            for c in children {
                let child = &counts[c];
                // child[b] counts "at most b"; exact counts are successive differences
                let exact: Vec<u128> = (0..=budget)
                    .map(|b| if b == 0 { child[0] } else { child[b] - child[b - 1] })
                    .collect();
                conv = (0..=budget)
                    .map(|t| {
                        (0..=t).fold(0u128, |acc, b| {
                            acc.saturating_add(exact[b].saturating_mul(conv[t - b]))
                        })
                    })
                    .collect();
            }
            for (b, slot) in row.iter_mut().enumerate().skip(1) {
                *slot = slot.saturating_add(conv[b - 1]);
            }
        }
        counts[id] = row;
    }
    counts
}

/// Every complete subtree of `T(z)` rooted at the domain with at most `m`
/// refinements. Intended as a brute-force reference for small inputs.
pub fn enumerate_subtrees(forest: &OccupancyForest, m: usize, limit: u128) -> Result<Vec<CompleteTree>> {
    let predicted = subtree_counts(forest, m)[forest.root()][m];
    if predicted > limit {
        return Err(Error::EnumerationLimit { predicted, limit });
    }

    // Each option is the list of refined nodes, which determines the tree.
    fn options(forest: &OccupancyForest, id: NodeId, budget: usize) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new()];
        let Some(children) = forest.children(id) else { return out };
        if budget == 0 {
            return out;
        }
        let mut partial: Vec<Vec<NodeId>> = vec![vec![id]];
        for c in children {
            let mut next = Vec::new();
            for prefix in &partial {
                let used = prefix.len() - 1;
                for opt in options(forest, c, budget - 1 - used) {
                    let mut v = prefix.clone();
                    v.extend(opt);
                    next.push(v);
                }
            }
            partial = next;
        }
        out.extend(partial);
        out
    }

    let dim = forest.dim();
    Ok(options(forest, forest.root(), m)
        .into_iter()
        .map(|refined| {
            let mut nodes: BTreeSet<DyadicCube> = std::iter::once(DyadicCube::root(dim)).collect();
            for id in refined {
                nodes.extend(forest.children(id).into_iter().flatten().map(|c| forest.cube(c).clone()));
            }
            CompleteTree { dim, nodes }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::tests::z1;
    use proptest::prelude::*;

    fn cube(level: u32, index: &[u64]) -> DyadicCube {
        DyadicCube::new(level, index.to_vec()).unwrap()
    }

    #[test]
    fn build_examples() {
        let f = build_forest(&z1(), 1).unwrap();
        assert_eq!(f.occupied_cubes(), vec![cube(0, &[0]), cube(1, &[0]), cube(1, &[1])]);
        assert_eq!(f.tree().leaves(), vec![cube(1, &[0]), cube(1, &[1])]);

        let single = Dataset::from_pairs([(vec![0.4], 1)]).unwrap();
        let f = build_forest(&single, 5).unwrap();
        assert_eq!(f.len(), 1);

        let two = Dataset::from_pairs([(vec![0.1], 1), (vec![0.9], -1)]).unwrap();
        let f = build_forest(&two, 2).unwrap();
        assert_eq!(f.tree().leaves(), vec![cube(1, &[0]), cube(1, &[1])]);
    }

    #[test]
    fn build_errors() {
        let z = z1();
        let cfg = ForestConfig { j_max: MAX_LEVEL + 1, rule: StoppingRule::SingleSample };
        assert!(matches!(OccupancyForest::build(z, cfg), Err(Error::LevelTooDeep { .. })));
    }

    #[test]
    fn occupied_only_refines_to_depth() {
        let one = Dataset::from_pairs([(vec![0.3], 1)]).unwrap();
        let cfg = ForestConfig { j_max: 3, rule: StoppingRule::OccupiedOnly };
        let f = OccupancyForest::build(one, cfg).unwrap();
        assert_eq!(f.internal_count(), 3);
        assert_eq!(f.len(), 7);
    }

    #[test]
    fn leaf_and_refinement_examples() {
        let t = CompleteTree::root_only(1);
        assert_eq!(t.leaves(), vec![DyadicCube::root(1)]);
        assert_eq!(t.refinement_count(), 0);

        let mut t = CompleteTree::root_only(1);
        t.refine(&DyadicCube::root(1)).unwrap();
        assert_eq!(t.leaves(), vec![cube(1, &[0]), cube(1, &[1])]);

        let mut t = CompleteTree::root_only(2);
        t.refine(&DyadicCube::root(2)).unwrap();
        assert_eq!(t.refinement_count(), 1);
        assert_eq!(t.leaves().len(), 4);

        let mut t = CompleteTree::root_only(1);
        t.refine(&DyadicCube::root(1)).unwrap();
        t.refine(&cube(1, &[0])).unwrap();
        t.refine(&cube(2, &[1])).unwrap();
        assert_eq!(t.refinement_count(), 3);
        assert_eq!(t.leaves().len(), 4);
        assert!(t.refine(&cube(1, &[0])).is_err());
    }

    #[test]
    fn from_cubes_validates_completion() {
        assert!(CompleteTree::from_cubes(1, [DyadicCube::root(1), cube(1, &[0])]).is_err());
        assert!(CompleteTree::from_cubes(1, [cube(1, &[0]), cube(1, &[1])]).is_err());
        let t = CompleteTree::from_cubes(1, [DyadicCube::root(1), cube(1, &[0]), cube(1, &[1])]).unwrap();
        assert_eq!(t.refinement_count(), 1);
    }

    /// Forest refined fully to `depth` on `[0,1]`.
    fn full_binary_forest(depth: u32) -> OccupancyForest {
        let cells = 1usize << depth;
        let data = Dataset::from_pairs((0..cells).map(|i| (vec![(i as f64 + 0.5) / cells as f64], 1))).unwrap();
        OccupancyForest::build(data, ForestConfig { j_max: depth, rule: StoppingRule::OccupiedOnly }).unwrap()
    }

    #[test]
    fn enumeration_examples() {
        let f = full_binary_forest(5);
        assert_eq!(enumerate_subtrees(&f, 0, DEFAULT_ENUMERATION_LIMIT).unwrap().len(), 1);
        let exact: Vec<usize> = (0..=4)
            .map(|m| {
                enumerate_subtrees(&f, m, DEFAULT_ENUMERATION_LIMIT)
                    .unwrap()
                    .iter()
                    .filter(|t| t.refinement_count() == m)
                    .count()
            })
            .collect();
        assert_eq!(exact, vec![1, 1, 2, 5, 14]);
        assert!(matches!(enumerate_subtrees(&f, 12, 100), Err(Error::EnumerationLimit { .. })));
    }

    #[test]
    fn enumeration_has_no_duplicates_and_respects_budget() {
        let f = full_binary_forest(4);
        let trees = enumerate_subtrees(&f, 4, DEFAULT_ENUMERATION_LIMIT).unwrap();
        let distinct: BTreeSet<Vec<DyadicCube>> = trees.iter().map(|t| t.cubes().cloned().collect()).collect();
        assert_eq!(distinct.len(), trees.len());
        assert!(trees.iter().all(|t| t.refinement_count() <= 4));
        assert_eq!(trees.len() as u128, subtree_counts(&f, 4)[0][4]);
    }

    fn dataset(d: usize) -> impl Strategy<Value = Dataset> {
        prop::collection::vec((prop::collection::vec(0.0..=1.0f64, d), prop::bool::ANY), 1..40)
            .prop_map(|rows| {
                Dataset::from_pairs(rows.into_iter().map(|(x, b)| (x, if b { 1 } else { -1 }))).unwrap()
            })
    }

    proptest! {
        #[test]
        fn forest_invariants(z in dataset(2), j_max in 0u32..6, occ in prop::bool::ANY) {
            let rule = if occ { StoppingRule::OccupiedOnly } else { StoppingRule::SingleSample };
            let f = OccupancyForest::build(z.clone(), ForestConfig { j_max, rule }).unwrap();
            let tree = f.tree();
            // completion is checked by the validating constructor
            prop_assert!(CompleteTree::from_cubes(2, tree.cubes().cloned()).is_ok());
            for id in 0..f.len() {
                let q = f.cube(id);
                let direct: Vec<u32> = (0..z.len() as u32)
                    .filter(|&i| q.contains(&z.samples()[i as usize].x).unwrap())
                    .collect();
                prop_assert_eq!(f.samples(id), &direct[..]);
                let sum: i64 = direct.iter().map(|&i| z.samples()[i as usize].y()).sum();
                prop_assert_eq!(f.label_sum(id), sum);
                prop_assert_eq!(f.is_occupied(id), f.count(id) > 0);
            }
            let leaves = tree.leaves();
            prop_assert_eq!(leaves.len(), 3 * tree.refinement_count() + 1);
            for s in z.samples() {
                let hits = leaves.iter().filter(|q| q.contains(&s.x).unwrap()).count();
                prop_assert_eq!(hits, 1);
                prop_assert_eq!(&tree.leaf_containing(&s.x), f.cube(f.leaf_node_containing(&s.x)));
            }
        }
    }
}
