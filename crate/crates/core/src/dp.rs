//! Budgeted energy maximization over complete subtrees of `T(z)`.
//!
//! For every occupied cube `Q` and budget `j` the table holds `gamma(Q, j)`,
//! the largest leaf energy `sum max(0, eta_bar)` reachable by a complete tree
//! rooted at `Q` with at most `j` refinements. One refinement pays for
//! splitting `Q`; the remaining `j - 1` are shared among its occupied children
//! by a max-plus convolution. Unoccupied children are energy-free leaves and
//! never receive budget.
//!
//! Energies are integer numerators over `n`. Ties prefer not splitting, and
//! among child allocations the lexicographically smallest budget vector (in
//! child address order) wins.

use std::collections::{BTreeMap, BTreeSet};

use crate::decorate::DecorationResult;
use crate::empirical::{label_sum, ClassifierForm, Dataset, SetClassifier};
use crate::error::{Error, Result};
use crate::forest::{enumerate_subtrees, CompleteTree, NodeId, OccupancyForest};
use crate::geometry::{DyadicCube, HCell};
use crate::select::Algorithm;

/// DP state of one occupied cube.
#[derive(Clone, Debug)]
pub struct NodeEnergy {
    /// `gamma[j]` for `j = 0..=cap`; larger budgets saturate at `gamma[cap]`.
    gamma: Vec<i64>,
    /// Whether the optimum at budget `j` splits the cube.
    split: Vec<bool>,
    occupied_children: Vec<NodeId>,
    /// `choice[k][t]`: budget handed to occupied child `k` when children
    /// `k..` share at most `t` refinements.
    choice: Vec<Vec<u32>>,
}

impl NodeEnergy {
    /// `gamma(Q, j)` for any `j`.
    pub fn gamma(&self, j: usize) -> i64 {
        self.gamma[j.min(self.gamma.len() - 1)]
    }

    /// Budget beyond which nothing changes.
    pub fn cap(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn splits_at(&self, j: usize) -> bool {
        self.split[j.min(self.split.len() - 1)]
    }
}

#[derive(Clone, Debug)]
pub struct EnergyTable {
    m_max: usize,
    n: usize,
    entries: Vec<Option<NodeEnergy>>,
    decorations: Option<Vec<Option<DecorationResult>>>,
}

impl EnergyTable {
    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Sample count of the forest the table was computed on.
    pub fn n(&self) -> usize {
        self.n
    }

    /// `None` for unoccupied cubes, whose energy is identically zero.
    pub fn entry(&self, id: NodeId) -> Option<&NodeEnergy> {
        self.entries[id].as_ref()
    }

    /// `n * gamma(Q, j)`; zero for unoccupied cubes.
    pub fn gamma(&self, id: NodeId, j: usize) -> i64 {
        self.entry(id).map_or(0, |e| e.gamma(j))
    }

    pub fn gamma_f64(&self, id: NodeId, j: usize) -> f64 {
        self.gamma(id, j) as f64 / self.n as f64
    }

    pub fn is_decorated(&self) -> bool {
        self.decorations.is_some()
    }

    pub fn decoration(&self, id: NodeId) -> Option<&DecorationResult> {
        self.decorations.as_ref().and_then(|d| d[id].as_ref())
    }

    fn check_budget(&self, m: usize) -> Result<()> {
        if m > self.m_max {
            return Err(Error::BudgetOutOfRange { requested: m, max: self.m_max });
        }
        Ok(())
    }
}

/// Fill the table for all budgets `0..=m_max` with leaf energy `max(0, eta_bar_Q)`.
pub fn compute_energy(forest: &OccupancyForest, m_max: usize) -> EnergyTable {
    let leaf: Vec<i64> = (0..forest.len()).map(|id| forest.label_sum(id).max(0)).collect();
    run(forest, m_max, &leaf, None)
}

/// Shared DP over arbitrary nonnegative leaf energies.
pub(crate) fn run(
    forest: &OccupancyForest,
    m_max: usize,
    leaf: &[i64],
    decorations: Option<Vec<Option<DecorationResult>>>,
) -> EnergyTable {
    let mut entries: Vec<Option<NodeEnergy>> = vec![None; forest.len()];
    // refinements available below each node (internal count of its subtree)
    let mut saturation = vec![0usize; forest.len()];

    for id in forest.bottom_up() {
        if !forest.is_occupied(id) {
            continue;
        }
        let occupied: Vec<NodeId> = forest.occupied_children(id).collect();
        if forest.is_refined(id) {
            saturation[id] = 1 + occupied.iter().map(|&c| saturation[c]).sum::<usize>();
        }
        let cap = saturation[id].min(m_max);
        let g0 = leaf[id];
        let mut gamma = vec![g0; cap + 1];
        let mut split = vec![false; cap + 1];
        let mut choice = Vec::new();

        if cap > 0 {
            let share = cap - 1;
            // suffix fold from the last child so backtracking from the first
            // child yields the lexicographically smallest allocation
            let mut suffix = vec![0i64; share + 1];
            choice = vec![Vec::new(); occupied.len()];
            for (k, &c) in occupied.iter().enumerate().rev() {
                let child = entries[c].as_ref().expect("occupied child is filled");
                let child_cap = child.cap();
                let mut best = vec![i64::MIN; share + 1];
                let mut arg = vec![0u32; share + 1];
                for t in 0..=share {
                    for b in 0..=t.min(child_cap) {
                        let v = child.gamma[b] + suffix[t - b];
                        if v > best[t] {
                            best[t] = v;
                            arg[t] = b as u32;
                        }
                    }
                }
                suffix = best;
                choice[k] = arg;
            }
            for j in 1..=cap {
                if suffix[j - 1] > g0 {
                    gamma[j] = suffix[j - 1];
                    split[j] = true;
                }
            }
        }
        entries[id] = Some(NodeEnergy { gamma, split, occupied_children: occupied, choice });
    }

    EnergyTable { m_max, n: forest.n(), entries, decorations }
}

/// The optimal tree at one budget, as forest node ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Extraction {
    /// Refined nodes.
    pub refined: Vec<NodeId>,
    /// Occupied leaves; the remaining leaves are unoccupied siblings.
    pub occupied_leaves: Vec<NodeId>,
}

impl Extraction {
    pub fn refinement_count(&self) -> usize {
        self.refined.len()
    }

    pub fn to_tree(&self, forest: &OccupancyForest) -> CompleteTree {
        let dim = forest.dim();
        let mut cubes: BTreeSet<DyadicCube> = std::iter::once(DyadicCube::root(dim)).collect();
        for &id in &self.refined {
            cubes.extend(forest.children(id).into_iter().flatten().map(|c| forest.cube(c).clone()));
        }
        CompleteTree::from_cubes(dim, cubes).expect("extracted trees are complete")
    }
}

/// Backtrack the optimal tree `T(X, m)` through the stored allocations.
pub fn extract(forest: &OccupancyForest, table: &EnergyTable, m: usize) -> Result<Extraction> {
    table.check_budget(m)?;
    let mut out = Extraction::default();
    let root = forest.root();
    if table.entry(root).is_none() {
        return Ok(out);
    }
    let mut stack = vec![(root, m)];
    while let Some((id, budget)) = stack.pop() {
        let e = table.entry(id).expect("only occupied cubes are visited");
        let j = budget.min(e.cap());
        if j == 0 || !e.split[j] {
            out.occupied_leaves.push(id);
            continue;
        }
        out.refined.push(id);
        let mut t = j - 1;
        for (k, &c) in e.occupied_children.iter().enumerate() {
            let b = e.choice[k][t] as usize;
            t -= b;
            stack.push((c, b));
        }
    }
    Ok(out)
}

pub fn extract_tree(forest: &OccupancyForest, table: &EnergyTable, m: usize) -> Result<CompleteTree> {
    Ok(extract(forest, table, m)?.to_tree(forest))
}

/// The estimator at budget `m`: union of leaves of `T(X, m)` with
/// strictly positive `eta_bar` (plain tables), or of their best H-cells
/// (decorated tables).
pub fn extract_classifier(forest: &OccupancyForest, table: &EnergyTable, m: usize) -> Result<SetClassifier> {
    let ex = extract(forest, table, m)?;
    classifier_from(forest, table, &ex, m)
}

pub(crate) fn classifier_from(
    forest: &OccupancyForest,
    table: &EnergyTable,
    ex: &Extraction,
    m: usize,
) -> Result<SetClassifier> {
    let tree = ex.to_tree(forest);
    if table.is_decorated() {
        let cells: BTreeMap<DyadicCube, HCell> = ex
            .occupied_leaves
            .iter()
            .filter_map(|&id| table.decoration(id).and_then(|d| d.cell()))
            .map(|cell| (cell.cube.clone(), cell))
            .collect();
        let mut c = SetClassifier::decorated(tree, cells, m)?;
        c.algorithm = Algorithm::Decorated;
        Ok(c)
    } else {
        let positive = ex
            .occupied_leaves
            .iter()
            .filter(|&&id| forest.label_sum(id) > 0)
            .map(|&id| forest.cube(id).clone())
            .collect();
        SetClassifier::plain(tree, positive, m)
    }
}

/// Leaf energy of an explicit tree, `n * sum max(0, eta_bar_Q)`, from a
/// direct scan of the data.
pub fn tree_energy(tree: &CompleteTree, data: &Dataset) -> i64 {
    tree.leaves().iter().map(|q| label_sum(q, data).max(0)).sum()
}

/// Exhaustive maximum of the plain energy over all complete subtrees of the
/// forest with at most `m` refinements. Test oracle; exponential.
pub fn brute_force_energy(forest: &OccupancyForest, m: usize, limit: u128) -> Result<i64> {
    let trees = enumerate_subtrees(forest, m, limit)?;
    Ok(trees.iter().map(|t| tree_energy(t, forest.data())).max().unwrap_or(0))
}

/// Energy of a materialized classifier's positive part on the data it was fit
/// on: for plain forms this is the tree energy.
pub fn classifier_energy(c: &SetClassifier, data: &Dataset) -> i64 {
    match &c.form {
        ClassifierForm::Plain { positive, .. } => positive.iter().map(|q| label_sum(q, data)).sum(),
        ClassifierForm::Decorated { cells, .. } => cells.values().map(|h| label_sum(h, data)).sum(),
        ClassifierForm::Grid { .. } => label_sum(c, data),
    }
}
