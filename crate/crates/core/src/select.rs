//! Hold-out model selection over the nested budgets of one DP pass, and the
//! nonadaptive uniform-grid baseline.
//!
//! The data are shuffled with a seeded generator and halved. Every candidate
//! `Omega_m` is fit on the first half; the one with the largest label sum on
//! the second half wins, with ties going to the smallest `m`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decorate::decorated_energy;
use crate::dp::{classifier_from, compute_energy, extract, EnergyTable, Extraction};
use crate::empirical::{grid_cell, label_sum, ClassifierForm, Dataset, LabeledSample, SetClassifier};
use crate::error::{Error, Result};
use crate::forest::{ForestConfig, NodeId, OccupancyForest};

/// Default cap on the number of uniform-grid cells.
pub const DEFAULT_GRID_CAP: u128 = 1 << 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Dyadic trees with whole-cube leaves.
    #[default]
    Plain,
    /// Dyadic trees with hyperplane-cut leaves.
    Decorated,
    /// Uniform grid with `l` cells per axis.
    Uniform,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Plain => "plain",
            Algorithm::Decorated => "decorated",
            Algorithm::Uniform => "uniform",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Algorithm::Plain),
            "decorated" => Ok(Algorithm::Decorated),
            "uniform" => Ok(Algorithm::Uniform),
            other => Err(Error::InvalidParameter(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Halves {
    pub first: Dataset,
    pub second: Dataset,
    /// The sample dropped to make `n` even, if any.
    pub set_aside: Option<LabeledSample>,
}

/// Seeded shuffle followed by an even split. With odd `n` the last sample
/// after shuffling is set aside.
pub fn split_halves(data: &Dataset, seed: u64) -> Result<Halves> {
    if data.len() < 4 {
        return Err(Error::TooFewSamples { needed: 4, found: data.len() });
    }
    let mut samples = data.samples().to_vec();
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let set_aside = (samples.len() % 2 == 1).then(|| samples.pop().expect("n >= 4"));
    let second = samples.split_off(samples.len() / 2);
    Ok(Halves { first: Dataset::new(samples)?, second: Dataset::new(second)?, set_aside })
}

#[derive(Clone, Debug)]
pub struct SelectionConfig {
    pub algorithm: Algorithm,
    pub forest: ForestConfig,
    /// Budgets to choose from (cells per axis for the uniform baseline).
    /// `None` means every budget up to the saturation of the first-half tree.
    pub grid: Option<Vec<usize>>,
    pub grid_cap: u128,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            algorithm: Algorithm::Plain,
            forest: ForestConfig::default(),
            grid: None,
            grid_cap: DEFAULT_GRID_CAP,
        }
    }
}

impl SelectionConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        SelectionConfig { algorithm, ..Default::default() }
    }
}

#[derive(Clone, Debug)]
pub struct SelectionReport {
    pub m_star: usize,
    pub classifier: SetClassifier,
    /// `(m, n'' * eta_bar'')` for each candidate, in increasing `m`.
    pub scores: Vec<(usize, i64)>,
    pub first_len: usize,
    pub second_len: usize,
    pub set_aside: Option<LabeledSample>,
}

impl SelectionReport {
    /// Second-half `eta_bar` of each candidate.
    pub fn eta_bar_second(&self) -> Vec<(usize, f64)> {
        let n = self.second_len as f64;
        self.scores.iter().map(|&(m, s)| (m, s as f64 / n)).collect()
    }
}

/// Split, fit all candidates on the first half, select on the second.
pub fn select_model(data: &Dataset, config: &SelectionConfig, seed: u64) -> Result<SelectionReport> {
    let halves = split_halves(data, seed)?;
    let mut report = select_from_halves(&halves.first, &halves.second, config)?;
    report.set_aside = halves.set_aside;
    Ok(report)
}

/// Model selection with the halves given explicitly.
pub fn select_from_halves(first: &Dataset, second: &Dataset, config: &SelectionConfig) -> Result<SelectionReport> {
    if first.dim() != second.dim() {
        return Err(Error::DimensionMismatch { expected: first.dim(), found: second.dim() });
    }
    let n_bar = first.len();
    let grid = config.grid.as_ref().map(|g| {
        let mut g = g.clone();
        g.sort_unstable();
        g.dedup();
        g
    });
    if let Some(g) = &grid {
        match g.last() {
            None => return Err(Error::InvalidParameter("model grid is empty".into())),
            Some(&max) if max > n_bar => {
                return Err(Error::InvalidParameter(format!(
                    "largest budget {max} exceeds the half-sample size {n_bar}"
                )))
            }
            _ => {}
        }
    }

    let (scores, classifier_for) = match config.algorithm {
        Algorithm::Plain | Algorithm::Decorated => {
            let forest = OccupancyForest::build(first.clone(), config.forest)?;
            let grid = grid.unwrap_or_else(|| (0..=n_bar.min(forest.internal_count())).collect());
            let m_max = *grid.last().expect("grid is nonempty");
            let table = match config.algorithm {
                Algorithm::Decorated => decorated_energy(&forest, m_max)?,
                _ => compute_energy(&forest, m_max),
            };
            let scorer = HoldoutScorer::new(&forest, &table, second)?;
            let mut scores = Vec::with_capacity(grid.len());
            let mut best: Option<(usize, i64, Extraction)> = None;
            for &m in &grid {
                let ex = extract(&forest, &table, m)?;
                let s = scorer.score(&ex);
                scores.push((m, s));
                if best.as_ref().is_none_or(|b| s > b.1) {
                    best = Some((m, s, ex));
                }
            }
            let (m_star, _, ex) = best.expect("grid is nonempty");
            let classifier = classifier_from(&forest, &table, &ex, m_star)?;
            (scores, (m_star, classifier))
        }
        Algorithm::Uniform => {
            let grid = match grid {
                Some(g) => g,
                None => {
                    // largest l with l^d <= n_bar
                    let d = first.dim() as u32;
                    let mut l = 1usize;
                    while ((l + 1) as u128).pow(d) <= n_bar as u128 {
                        l += 1;
                    }
                    (1..=l).collect()
                }
            };
            if grid.first() == Some(&0) {
                return Err(Error::InvalidParameter("uniform grid needs at least one cell per axis".into()));
            }
            let mut scores = Vec::with_capacity(grid.len());
            let mut best: Option<(usize, i64, SetClassifier)> = None;
            for &l in &grid {
                let c = uniform_baseline_capped(first, l, config.grid_cap)?;
                let s = label_sum(&c, second);
                scores.push((l, s));
                if best.as_ref().is_none_or(|b| s > b.1) {
                    best = Some((l, s, c));
                }
            }
            let (l, _, c) = best.expect("grid is nonempty");
            (scores, (l, c))
        }
    };

    Ok(SelectionReport {
        m_star: classifier_for.0,
        classifier: classifier_for.1,
        scores,
        first_len: first.len(),
        second_len: second.len(),
        set_aside: None,
    })
}

/// Second-half label sums of extracted trees without materializing them.
struct HoldoutScorer<'a> {
    forest: &'a OccupancyForest,
    table: &'a EnergyTable,
    second: &'a Dataset,
    /// Per forest node, the second-half samples inside its cube.
    members: Vec<Vec<u32>>,
    sums: Vec<i64>,
}

impl<'a> HoldoutScorer<'a> {
    fn new(forest: &'a OccupancyForest, table: &'a EnergyTable, second: &'a Dataset) -> Result<Self> {
        let sums = forest.foreign_label_sums(second)?;
        let mut members = vec![Vec::new(); forest.len()];
        if table.is_decorated() {
            for (i, s) in second.samples().iter().enumerate() {
                let mut id: Option<NodeId> = Some(forest.leaf_node_containing(&s.x));
                while let Some(q) = id {
                    members[q].push(i as u32);
                    id = forest.parent(q);
                }
            }
        }
        Ok(HoldoutScorer { forest, table, second, members, sums })
    }

    fn score(&self, ex: &Extraction) -> i64 {
        ex.occupied_leaves
            .iter()
            .map(|&id| {
                if !self.table.is_decorated() {
                    return if self.forest.label_sum(id) > 0 { self.sums[id] } else { 0 };
                }
                let Some(cell) = self.table.decoration(id).and_then(|d| d.cell()) else { return 0 };
                self.members[id]
                    .iter()
                    .map(|&i| &self.second.samples()[i as usize])
                    .filter(|s| cell.cut_admits(s.x.coords()))
                    .map(|s| s.y())
                    .sum()
            })
            .sum()
    }
}

/// Empirical maximizer over unions of cells of the uniform grid with `l`
/// cells per axis: the cells with strictly positive label sum.
pub fn uniform_baseline(data: &Dataset, l: usize) -> Result<SetClassifier> {
    uniform_baseline_capped(data, l, DEFAULT_GRID_CAP)
}

pub fn uniform_baseline_capped(data: &Dataset, l: usize, cap: u128) -> Result<SetClassifier> {
    if l == 0 {
        return Err(Error::InvalidParameter("uniform grid needs at least one cell per axis".into()));
    }
    let cells = (l as u128).checked_pow(data.dim() as u32).unwrap_or(u128::MAX);
    if cells > cap {
        return Err(Error::GridTooLarge { cells, cap });
    }
    let mut sums: BTreeMap<Vec<u64>, i64> = BTreeMap::new();
    for s in data.samples() {
        *sums.entry(grid_cell(&s.x, l as u64)).or_default() += s.y();
    }
    let positive: BTreeSet<Vec<u64>> = sums.into_iter().filter(|(_, v)| *v > 0).map(|(k, _)| k).collect();
    Ok(SetClassifier {
        form: ClassifierForm::Grid { dim: data.dim(), cells_per_axis: l as u64, positive },
        algorithm: Algorithm::Uniform,
        budget: l,
    })
}
