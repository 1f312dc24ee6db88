//! Datasets, set classifiers, and the empirical quantities computed from them.
//!
//! All empirical measures are carried as integer numerators over the sample
//! count `n`: `label_sum` is `n * eta_bar`, `count_in` is `n * rho_bar`, and
//! `misclassified` is `n * empirical_risk`. Comparisons between candidate sets
//! are done on the numerators so ties are exact.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::forest::CompleteTree;
use crate::geometry::{check_dim, DyadicCube, HCell, Point};
use crate::select::Algorithm;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub x: Point,
    y: i8,
}

impl LabeledSample {
    pub fn new(x: Point, y: i64) -> Result<Self> {
        match y {
            -1 | 1 => Ok(LabeledSample { x, y: y as i8 }),
            other => Err(Error::InvalidLabel(other)),
        }
    }

    /// The label, `-1` or `+1`.
    pub fn y(&self) -> i64 {
        self.y as i64
    }
}

/// A nonempty list of labeled samples sharing one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn new(samples: Vec<LabeledSample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyData)?;
        let dim = first.x.dim();
        for s in &samples {
            check_dim(dim, s.x.dim())?;
        }
        Ok(Dataset { dim, samples })
    }

    /// Convenience constructor from raw `(coords, label)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<f64>, i64)>,
    {
        let samples = pairs
            .into_iter()
            .map(|(x, y)| LabeledSample::new(Point::new(x)?, y))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<LabeledSample> {
        self.samples
    }

    /// Number of `+1` labels.
    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.y > 0).count()
    }
}

/// Anything with a membership test over points of `[0,1]^d`.
pub trait Region {
    fn contains_point(&self, p: &Point) -> bool;
}

impl Region for DyadicCube {
    fn contains_point(&self, p: &Point) -> bool {
        self.contains_unchecked(p)
    }
}

impl Region for HCell {
    fn contains_point(&self, p: &Point) -> bool {
        self.contains_unchecked(p)
    }
}

/// The empty set.
#[derive(Clone, Copy, Debug, Default)]
pub struct EmptyRegion;

impl Region for EmptyRegion {
    fn contains_point(&self, _: &Point) -> bool {
        false
    }
}

/// Axis-aligned box `prod [lo_i, hi_i)`, with faces at coordinate 1 closed.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(&hi).any(|(a, b)| !(0.0 <= *a && a <= b && *b <= 1.0)) {
            return Err(Error::InvalidParameter("box bounds must satisfy 0 <= lo <= hi <= 1".into()));
        }
        Ok(AxisBox { lo, hi })
    }

    pub fn full(dim: usize) -> Self {
        AxisBox { lo: vec![0.0; dim], hi: vec![1.0; dim] }
    }
}

impl Region for AxisBox {
    fn contains_point(&self, p: &Point) -> bool {
        p.coords()
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&x, (&lo, &hi))| lo <= x && (x < hi || (hi == 1.0 && x == 1.0)))
    }
}

impl<R: Region + ?Sized> Region for &R {
    fn contains_point(&self, p: &Point) -> bool {
        (**self).contains_point(p)
    }
}

/// The concrete shape of a set classifier.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassifierForm {
    /// Union of a subset of the leaves of a complete tree.
    Plain {
        tree: CompleteTree,
        positive: BTreeSet<DyadicCube>,
    },
    /// Union of one H-cell per decorated leaf; undecorated leaves contribute nothing.
    Decorated {
        tree: CompleteTree,
        cells: BTreeMap<DyadicCube, HCell>,
    },
    /// Union of cells of the uniform grid with `cells_per_axis` cells per axis.
    Grid {
        dim: usize,
        cells_per_axis: u64,
        positive: BTreeSet<Vec<u64>>,
    },
}

/// A classifier `x -> +1 if x in S else -1`, stored as the set `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct SetClassifier {
    pub form: ClassifierForm,
    pub algorithm: Algorithm,
    /// Split budget for tree forms, cells per axis for the grid form.
    pub budget: usize,
}

impl SetClassifier {
    /// The empty set, as a one-leaf plain tree.
    pub fn empty(dim: usize) -> Self {
        SetClassifier {
            form: ClassifierForm::Plain { tree: CompleteTree::root_only(dim), positive: BTreeSet::new() },
            algorithm: Algorithm::Plain,
            budget: 0,
        }
    }

    /// The whole domain, as a one-leaf plain tree.
    pub fn full(dim: usize) -> Self {
        let root = DyadicCube::root(dim);
        SetClassifier {
            form: ClassifierForm::Plain {
                tree: CompleteTree::root_only(dim),
                positive: std::iter::once(root).collect(),
            },
            algorithm: Algorithm::Plain,
            budget: 0,
        }
    }

    pub fn plain(tree: CompleteTree, positive: BTreeSet<DyadicCube>, budget: usize) -> Result<Self> {
        let leaves: BTreeSet<_> = tree.leaves().into_iter().collect();
        if let Some(bad) = positive.iter().find(|q| !leaves.contains(*q)) {
            return Err(Error::InvalidParameter(format!("{bad} is not a leaf of the tree")));
        }
        Ok(SetClassifier { form: ClassifierForm::Plain { tree, positive }, algorithm: Algorithm::Plain, budget })
    }

    pub fn decorated(tree: CompleteTree, cells: BTreeMap<DyadicCube, HCell>, budget: usize) -> Result<Self> {
        let leaves: BTreeSet<_> = tree.leaves().into_iter().collect();
        for (leaf, cell) in &cells {
            if !leaves.contains(leaf) || &cell.cube != leaf {
                return Err(Error::InvalidParameter(format!("decoration on {leaf} does not match a leaf")));
            }
            if let Some(cut) = &cell.cut {
                check_dim(tree.dim(), cut.hyperplane.dim())?;
            }
        }
        Ok(SetClassifier {
            form: ClassifierForm::Decorated { tree, cells },
            algorithm: Algorithm::Decorated,
            budget,
        })
    }

    /// Union of uniform-grid cells, each given by its per-axis index.
    pub fn grid(dim: usize, cells_per_axis: u64, positive: BTreeSet<Vec<u64>>) -> Result<Self> {
        if dim == 0 || cells_per_axis == 0 {
            return Err(Error::InvalidParameter("grid needs a positive dimension and cell count".into()));
        }
        for cell in &positive {
            check_dim(dim, cell.len())?;
            if cell.iter().any(|&k| k >= cells_per_axis) {
                return Err(Error::InvalidParameter(format!("grid cell {cell:?} out of range")));
            }
        }
        Ok(SetClassifier {
            form: ClassifierForm::Grid { dim, cells_per_axis, positive },
            algorithm: Algorithm::Uniform,
            budget: cells_per_axis as usize,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.form {
            ClassifierForm::Plain { tree, .. } | ClassifierForm::Decorated { tree, .. } => tree.dim(),
            ClassifierForm::Grid { dim, .. } => *dim,
        }
    }

    pub fn contains(&self, p: &Point) -> Result<bool> {
        check_dim(self.dim(), p.dim())?;
        Ok(self.contains_point(p))
    }

    /// `+1` inside the set, `-1` outside.
    pub fn predict(&self, p: &Point) -> Result<i64> {
        Ok(if self.contains(p)? { 1 } else { -1 })
    }
}

impl Region for SetClassifier {
    fn contains_point(&self, p: &Point) -> bool {
        match &self.form {
            ClassifierForm::Plain { tree, positive } => positive.contains(&tree.leaf_containing(p)),
            ClassifierForm::Decorated { tree, cells } => {
                let leaf = tree.leaf_containing(p);
                cells.get(&leaf).is_some_and(|c| c.cut_admits(p.coords()))
            }
            ClassifierForm::Grid { cells_per_axis, positive, .. } => {
                positive.contains(&grid_cell(p, *cells_per_axis))
            }
        }
    }
}

/// Index of the uniform-grid cell holding `p`; cells are half-open with the
/// top face closed, like dyadic cubes.
pub(crate) fn grid_cell(p: &Point, cells_per_axis: u64) -> Vec<u64> {
    let l = cells_per_axis as f64;
    p.coords()
        .iter()
        .map(|&x| ((x * l).floor() as u64).min(cells_per_axis - 1))
        .collect()
}

/// `n * eta_bar(S)`: the sum of labels of samples inside `S`.
pub fn label_sum<R: Region + ?Sized>(region: &R, data: &Dataset) -> i64 {
    data.samples
        .iter()
        .filter(|s| region.contains_point(&s.x))
        .map(|s| s.y())
        .sum()
}

/// `n * rho_bar(S)`.
pub fn count_in<R: Region + ?Sized>(region: &R, data: &Dataset) -> usize {
    data.samples.iter().filter(|s| region.contains_point(&s.x)).count()
}

pub fn eta_bar<R: Region + ?Sized>(region: &R, data: &Dataset) -> f64 {
    label_sum(region, data) as f64 / data.len() as f64
}

pub fn rho_bar<R: Region + ?Sized>(region: &R, data: &Dataset) -> f64 {
    count_in(region, data) as f64 / data.len() as f64
}

/// Number of samples the classifier `T_S` gets wrong.
pub fn misclassified<R: Region + ?Sized>(region: &R, data: &Dataset) -> usize {
    data.samples
        .iter()
        .filter(|s| region.contains_point(&s.x) != (s.y > 0))
        .count()
}

pub fn empirical_risk<R: Region + ?Sized>(region: &R, data: &Dataset) -> f64 {
    misclassified(region, data) as f64 / data.len() as f64
}

/// VC-type sample-complexity diagnostic `A max{r+1, V} log(n) / n`.
///
/// `A` is left to the caller; no value is claimed to be large enough for the
/// associated uniform deviation bound.
pub fn epsilon_vc(vc_dim: u64, n: u64, r: f64, a: f64) -> Result<f64> {
    if n < 2 || vc_dim < 1 || r.is_nan() || r <= 0.0 || a.is_nan() || a <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon_vc needs n >= 2, V >= 1, r > 0, A > 0 (got n={n}, V={vc_dim}, r={r}, A={a})"
        )));
    }
    let n = n as f64;
    Ok(a * (r + 1.0).max(vc_dim as f64) * n.ln() / n)
}

/// Finite-class diagnostic `10 (log #S + r log n) / (3n)`.
pub fn epsilon_finite(class_size: u64, n: u64, r: f64) -> Result<f64> {
    if class_size < 1 || n < 2 || r.is_nan() || r <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon_finite needs #S >= 1, n >= 2, r > 0 (got #S={class_size}, n={n}, r={r})"
        )));
    }
    let n_f = n as f64;
    Ok(10.0 * ((class_size as f64).ln() + r * n_f.ln()) / (3.0 * n_f))
}
