//! Hyperplane-decorated leaves.
//!
//! A decorated leaf keeps the part of its cube on one side of a hyperplane.
//! The best cut of a cube is searched over hyperplanes through `d` of the
//! samples it holds. For each such hyperplane every assignment of the `d`
//! defining samples to the two sides is tried: all-lower is the hyperplane
//! itself, all-upper is its negation, and mixed assignments use a slightly
//! tilted copy that keeps every other sample on its original side. Together
//! with the whole cube and the empty set this reaches every half-space
//! partition of samples in general position.
//!
//! Search cost per cube is `O(2^d n_Q^(d+1))`, so decoration is limited to
//! `d <= 3`.

use rayon::prelude::*;

use crate::dp::{self, EnergyTable};
use crate::empirical::SetClassifier;
use crate::error::{Error, Result};
use crate::forest::{NodeId, OccupancyForest};
use crate::geometry::{Cut, DyadicCube, HCell, Hyperplane, Side};

pub const MAX_DECORATION_DIM: usize = 3;

/// What a decorated leaf keeps.
#[derive(Clone, Debug, PartialEq)]
pub enum BestCell {
    Whole,
    Cut(Cut),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecorationResult {
    pub cube: DyadicCube,
    /// `n * gamma0`: the best clamped label sum over candidate cells.
    pub gamma0: i64,
    /// `None` when nothing beats the empty cell.
    pub best: Option<BestCell>,
    pub candidate_count: usize,
}

impl DecorationResult {
    pub fn cell(&self) -> Option<HCell> {
        self.best.as_ref().map(|b| HCell {
            cube: self.cube.clone(),
            cut: match b {
                BestCell::Whole => None,
                BestCell::Cut(c) => Some(c.clone()),
            },
        })
    }
}

/// A candidate hyperplane together with the samples it was built through.
#[derive(Clone, Debug)]
struct Candidate {
    hyperplane: Hyperplane,
    /// Defining samples (indices into the dataset); empty for axis fallbacks.
    through: Vec<u32>,
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DECORATION_DIM {
        return Err(Error::DecorationDimension(d));
    }
    Ok(())
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normal of the affine hull of `d` points in `R^d`, or `None` if they are
/// affinely dependent.
fn hull_normal(points: &[&[f64]]) -> Option<Vec<f64>> {
    match points.len() {
        1 => Some(vec![1.0]),
        2 => {
            let v = sub(points[1], points[0]);
            let n = vec![-v[1], v[0]];
            (n.iter().any(|&c| c != 0.0)).then_some(n)
        }
        3 => {
            let u = sub(points[1], points[0]);
            let v = sub(points[2], points[0]);
            let n = vec![u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            let scale = dot(&u, &u).sqrt() * dot(&v, &v).sqrt();
            let norm = dot(&n, &n).sqrt();
            (norm > 1e-12 * scale && norm > 0.0).then_some(n)
        }
        _ => None,
    }
}

/// All `k`-subsets of `0..len` in lexicographic order.
fn subsets(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > len {
        return out;
    }
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + len - k) else { break };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
    out
}

fn candidates(forest: &OccupancyForest, id: NodeId) -> Result<Vec<Candidate>> {
    let d = forest.dim();
    check_dim(d)?;
    let samples = forest.samples(id);
    let coords = |i: u32| forest.data().samples()[i as usize].x.coords();

    let mut out: Vec<Candidate> = Vec::new();
    for subset in subsets(samples.len(), d) {
        let through: Vec<u32> = subset.iter().map(|&s| samples[s]).collect();
        let pts: Vec<&[f64]> = through.iter().map(|&i| coords(i)).collect();
        let Some(normal) = hull_normal(&pts) else { continue };
        let offset = dot(&normal, pts[0]);
        let Ok(hyperplane) = Hyperplane::new(normal, offset) else { continue };
        if out.iter().any(|c| c.hyperplane == hyperplane) {
            continue;
        }
        out.push(Candidate { hyperplane, through });
    }
    if out.is_empty() {
        for &i in samples {
            for axis in 0..d {
                let mut normal = vec![0.0; d];
                normal[axis] = 1.0;
                let hyperplane = Hyperplane::new(normal, coords(i)[axis])?;
                if !out.iter().any(|c| c.hyperplane == hyperplane) {
                    out.push(Candidate { hyperplane, through: Vec::new() });
                }
            }
        }
    }
    Ok(out)
}

/// Hyperplanes searched for the cube of node `id`: one through each affinely
/// independent `d`-subset of its samples, in sample-index order; when no such
/// subset exists, axis-aligned hyperplanes through every sample coordinate.
pub fn candidate_hyperplanes(forest: &OccupancyForest, id: NodeId) -> Result<Vec<Hyperplane>> {
    Ok(candidates(forest, id)?.into_iter().map(|c| c.hyperplane).collect())
}

/// Solve `g(p_k) = s_k` for an affine `g(x) = <w, x> - b`, with `w` in the
/// span of the differences `p_k - p_0`.
fn affine_with_signs(points: &[&[f64]], signs: &[f64]) -> Option<(Vec<f64>, f64)> {
    let p0 = points[0];
    let q: Vec<Vec<f64>> = points[1..].iter().map(|p| sub(p, p0)).collect();
    let r: Vec<f64> = signs[1..].iter().map(|s| s - signs[0]).collect();
    let a = match q.len() {
        1 => {
            let g = dot(&q[0], &q[0]);
            if g == 0.0 {
                return None;
            }
            vec![r[0] / g]
        }
        2 => {
            let (g00, g01, g11) = (dot(&q[0], &q[0]), dot(&q[0], &q[1]), dot(&q[1], &q[1]));
            let det = g00 * g11 - g01 * g01;
            if det.abs() <= 1e-300 {
                return None;
            }
            vec![(r[0] * g11 - r[1] * g01) / det, (r[1] * g00 - r[0] * g01) / det]
        }
        _ => return None,
    };
    let dim = p0.len();
    let mut w = vec![0.0; dim];
    for (al, ql) in a.iter().zip(&q) {
        for (wi, qi) in w.iter_mut().zip(ql) {
            *wi += al * qi;
        }
    }
    let b = dot(&w, p0) - signs[0];
    Some((w, b))
}

/// Tilt `h` so that its defining points fall on the sides given by `signs`
/// (`-1` lower, `+1` upper) while every other sample of the cube keeps its side.
fn tilted(h: &Hyperplane, through: &[&[f64]], signs: &[f64], cube_points: &[&[f64]]) -> Option<Hyperplane> {
    let (w, b) = affine_with_signs(through, signs)?;
    let g = |x: &[f64]| dot(&w, x) - b;
    let tol = 1e-12 * (1.0 + h.offset().abs() + h.normal().iter().map(|c| c.abs()).sum::<f64>());
    let min_gap = cube_points
        .iter()
        .map(|x| h.eval(x).abs())
        .filter(|&v| v > tol)
        .fold(f64::INFINITY, f64::min);
    let max_g = cube_points.iter().map(|x| g(x).abs()).fold(0.0, f64::max).max(1.0);
    let eps = if min_gap.is_finite() { 0.5 * min_gap / max_g } else { 1.0 / max_g };
    let normal = h.normal().iter().zip(&w).map(|(n, wi)| n + eps * wi).collect();
    Hyperplane::new(normal, h.offset() + eps * b).ok()
}

/// Best H-cell of the cube of node `id`: maximizes the label sum over the
/// whole cube and every candidate cut, clamped at zero. Ties keep the first
/// candidate found, with the whole cube tried first.
pub fn best_hcell(forest: &OccupancyForest, id: NodeId) -> Result<DecorationResult> {
    let cands = candidates(forest, id)?;
    let data = forest.data().samples();
    let samples = forest.samples(id);
    let points: Vec<&[f64]> = samples.iter().map(|&i| data[i as usize].x.coords()).collect();
    let labels: Vec<i64> = samples.iter().map(|&i| data[i as usize].y()).collect();

    let mut best_sum = forest.label_sum(id);
    let mut best = Some(BestCell::Whole);

    let consider = |h: Hyperplane, best_sum: &mut i64, best: &mut Option<BestCell>| {
        let mut lower = 0i64;
        let mut upper = 0i64;
        for (x, &y) in points.iter().zip(&labels) {
            match h.side_of_coords(x) {
                Side::Lower => lower += y,
                Side::Upper => upper += y,
            }
        }
        for (side, sum) in [(Side::Lower, lower), (Side::Upper, upper)] {
            if sum > *best_sum {
                *best_sum = sum;
                *best = Some(BestCell::Cut(Cut { hyperplane: h.clone(), side }));
            }
        }
    };

    for cand in &cands {
        let negated = cand.hyperplane.negated();
        consider(cand.hyperplane.clone(), &mut best_sum, &mut best);
        consider(negated, &mut best_sum, &mut best);

        let k = cand.through.len();
        if k >= 2 {
            let through: Vec<&[f64]> = cand.through.iter().map(|&i| data[i as usize].x.coords()).collect();
            // mixed assignments only; all-lower and all-upper are covered above
            for mask in 1..(1u32 << k) - 1 {
                let signs: Vec<f64> = (0..k).map(|b| if mask >> b & 1 == 1 { 1.0 } else { -1.0 }).collect();
                if let Some(h) = tilted(&cand.hyperplane, &through, &signs, &points) {
                    consider(h, &mut best_sum, &mut best);
                }
            }
        }
    }

    if best_sum <= 0 {
        best_sum = 0;
        best = None;
    }
    Ok(DecorationResult {
        cube: forest.cube(id).clone(),
        gamma0: best_sum,
        best,
        candidate_count: cands.len(),
    })
}

/// Decorations for every occupied node, computed in parallel; `None` for
/// unoccupied nodes.
pub fn decorate_all(forest: &OccupancyForest) -> Result<Vec<Option<DecorationResult>>> {
    check_dim(forest.dim())?;
    (0..forest.len())
        .into_par_iter()
        .map(|id| forest.is_occupied(id).then(|| best_hcell(forest, id)).transpose())
        .collect()
}

/// The decorated DP: identical to [`dp::compute_energy`] except that the leaf
/// energy of a cube is the value of its best H-cell.
pub fn decorated_energy(forest: &OccupancyForest, m_max: usize) -> Result<EnergyTable> {
    let decorations = decorate_all(forest)?;
    let leaf: Vec<i64> = decorations.iter().map(|d| d.as_ref().map_or(0, |d| d.gamma0)).collect();
    Ok(dp::run(forest, m_max, &leaf, Some(decorations)))
}

/// Union over the leaves of `T(X, m)` of their best H-cells.
pub fn extract_decorated_classifier(
    forest: &OccupancyForest,
    table: &EnergyTable,
    m: usize,
) -> Result<SetClassifier> {
    if !table.is_decorated() {
        return Err(Error::InvalidParameter("energy table was not computed with decorations".into()));
    }
    dp::extract_classifier(forest, table, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{classifier_energy, compute_energy};
    use crate::empirical::tests::z1;
    use crate::empirical::{label_sum, ClassifierForm, Dataset, Region};
    use crate::forest::{build_forest, ForestConfig, StoppingRule};
    use crate::geometry::Point;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn occupied_only(z: Dataset, j_max: u32) -> OccupancyForest {
        OccupancyForest::build(z, ForestConfig { j_max, rule: StoppingRule::OccupiedOnly }).unwrap()
    }

    #[test]
    fn candidate_examples() {
        let f = build_forest(&z1(), 16).unwrap();
        let offsets: Vec<f64> = candidate_hyperplanes(&f, f.root()).unwrap().iter().map(|h| h.offset()).collect();
        assert_eq!(offsets, vec![0.1, 0.3, 0.6, 0.9]);

        let tri = Dataset::from_pairs([(vec![0.1, 0.1], 1), (vec![0.4, 0.2], -1), (vec![0.2, 0.45], 1)]).unwrap();
        let f = build_forest(&tri, 0).unwrap();
        assert_eq!(candidate_hyperplanes(&f, f.root()).unwrap().len(), 3);

        let one = Dataset::from_pairs([(vec![0.3, 0.6], 1)]).unwrap();
        let f = build_forest(&one, 0).unwrap();
        let hs = candidate_hyperplanes(&f, f.root()).unwrap();
        assert_eq!(hs.len(), 2);
        assert_eq!((hs[0].normal(), hs[0].offset()), (&[1.0, 0.0][..], 0.3));
        assert_eq!((hs[1].normal(), hs[1].offset()), (&[0.0, 1.0][..], 0.6));

        let four = Dataset::from_pairs([(vec![0.1; 4], 1)]).unwrap();
        let f = build_forest(&four, 0).unwrap();
        assert!(matches!(candidate_hyperplanes(&f, f.root()), Err(Error::DecorationDimension(4))));
    }

    #[test]
    fn best_hcell_examples() {
        let f = build_forest(&z1(), 16).unwrap();
        let r = best_hcell(&f, f.root()).unwrap();
        assert_eq!(r.gamma0, 2);
        let Some(BestCell::Cut(cut)) = &r.best else { panic!("expected a cut, got {:?}", r.best) };
        assert_eq!(cut.hyperplane.offset(), 0.3);
        assert_eq!(cut.hyperplane.normal(), &[1.0]);
        assert_eq!(cut.side, Side::Upper);

        let one = Dataset::from_pairs([(vec![0.3], 1), (vec![0.8], -1)]).unwrap();
        let f = build_forest(&one, 16).unwrap();
        let left = f.children(f.root()).unwrap().start;
        let r = best_hcell(&f, left).unwrap();
        assert_eq!((r.gamma0, r.best.clone()), (1, Some(BestCell::Whole)));
        let right = left + 1;
        let r = best_hcell(&f, right).unwrap();
        assert_eq!((r.gamma0, r.best), (0, None));
    }

    #[test]
    fn boundary_sample_counts_on_lower_side() {
        let f = build_forest(&z1(), 16).unwrap();
        let r = best_hcell(&f, f.root()).unwrap();
        let cell = r.cell().unwrap();
        // 0.3 lies on the chosen hyperplane and therefore outside the upper cell
        assert!(!cell.contains(&Point::new(vec![0.3]).unwrap()).unwrap());
        assert!(cell.contains(&Point::new(vec![0.3000001]).unwrap()).unwrap());
    }

    #[test]
    fn decorated_energy_examples() {
        let f = build_forest(&z1(), 16).unwrap();
        let t0 = decorated_energy(&f, 0).unwrap();
        assert_eq!(t0.gamma(f.root(), 0), 2);
        let t1 = decorated_energy(&f, 1).unwrap();
        assert_eq!(t1.gamma(f.root(), 1), 2);

        let pos = Dataset::from_pairs([(vec![0.2], 1), (vec![0.5], 1), (vec![0.7], 1)]).unwrap();
        let f = build_forest(&pos, 16).unwrap();
        let t = decorated_energy(&f, 0).unwrap();
        assert_eq!(t.gamma_f64(f.root(), 0), 1.0);
    }

    #[test]
    fn decorated_classifier_examples() {
        let z = z1();
        let f = build_forest(&z, 16).unwrap();
        let t = decorated_energy(&f, 1).unwrap();
        let c0 = extract_decorated_classifier(&f, &t, 0).unwrap();
        for (x, inside) in [(0.2, false), (0.3, false), (0.31, true), (1.0, true)] {
            assert_eq!(c0.contains(&Point::new(vec![x]).unwrap()).unwrap(), inside, "x = {x}");
        }
        let c1 = extract_decorated_classifier(&f, &t, 1).unwrap();
        assert_eq!(label_sum(&c1, &z), 2);

        let neg = Dataset::from_pairs([(vec![0.2], -1), (vec![0.7], -1)]).unwrap();
        let f = build_forest(&neg, 16).unwrap();
        let t = decorated_energy(&f, 2).unwrap();
        let c = extract_decorated_classifier(&f, &t, 2).unwrap();
        assert!(matches!(&c.form, ClassifierForm::Decorated { cells, .. } if cells.is_empty()));

        let plain = compute_energy(&f, 2);
        assert!(extract_decorated_classifier(&f, &plain, 2).is_err());
    }

    /// Best label sum over every half-line cut of the samples, found by
    /// sweeping thresholds between sorted coordinates.
    fn threshold_scan(points: &[(f64, i64)]) -> i64 {
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: i64 = sorted.iter().map(|p| p.1).sum();
        let mut best = 0i64.max(total);
        let mut prefix = 0i64;
        for (i, p) in sorted.iter().enumerate() {
            prefix += p.1;
            // only cut between distinct coordinates
            if i + 1 == sorted.len() || sorted[i + 1].0 > p.0 {
                best = best.max(prefix).max(total - prefix);
            }
        }
        best
    }

    /// Best label sum over half-planes whose normal is one of `angles` evenly
    /// spaced directions, trying every threshold along each direction.
    fn angle_scan(points: &[(Vec<f64>, i64)], angles: usize) -> i64 {
        let mut best = 0i64;
        for a in 0..angles {
            let theta = std::f64::consts::PI * 2.0 * a as f64 / angles as f64;
            let (c, s) = (theta.cos(), theta.sin());
            let proj: Vec<(f64, i64)> = points.iter().map(|(x, y)| (c * x[0] + s * x[1], *y)).collect();
            best = best.max(threshold_scan(&proj));
        }
        best
    }

    #[test]
    fn planar_candidates_reach_the_angular_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..60 {
            let n = rng.gen_range(2..=7);
            let pts: Vec<(Vec<f64>, i64)> = (0..n)
                .map(|_| (vec![rng.gen::<f64>(), rng.gen::<f64>()], if rng.gen::<bool>() { 1 } else { -1 }))
                .collect();
            let z = Dataset::from_pairs(pts.clone()).unwrap();
            let f = build_forest(&z, 0).unwrap();
            let r = best_hcell(&f, f.root()).unwrap();
            let scan = angle_scan(&pts, 7200);
            assert_eq!(r.gamma0, scan, "case {case}: {pts:?}");
            if let Some(cell) = r.cell() {
                assert_eq!(label_sum(&cell, &z), r.gamma0);
            }
        }
    }

    #[test]
    fn spatial_candidates_realize_their_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.gen_range(1..=6);
            let z = Dataset::from_pairs((0..n).map(|_| {
                (vec![rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()], if rng.gen::<bool>() { 1 } else { -1 })
            }))
            .unwrap();
            let f = build_forest(&z, 0).unwrap();
            let r = best_hcell(&f, f.root()).unwrap();
            assert!(r.gamma0 >= f.label_sum(f.root()).max(0));
            // any single positive sample can be isolated in 3-d general position
            assert!(r.gamma0 >= z.samples().iter().map(|s| s.y()).max().unwrap().max(0));
            if let Some(cell) = r.cell() {
                assert_eq!(label_sum(&cell, &z), r.gamma0);
            }
        }
    }

    fn line_data() -> impl Strategy<Value = Vec<(f64, i64)>> {
        prop::collection::vec(
            (prop_oneof![0.0..=1.0f64, (0u32..=8).prop_map(|k| k as f64 / 8.0)], prop::bool::ANY),
            1..25,
        )
        .prop_map(|v| v.into_iter().map(|(x, b)| (x, if b { 1 } else { -1 })).collect())
    }

    proptest! {
        #[test]
        fn one_dimensional_search_is_exhaustive(pts in line_data(), j_max in 0u32..4) {
            let z = Dataset::from_pairs(pts.iter().map(|&(x, y)| (vec![x], y))).unwrap();
            let f = occupied_only(z.clone(), j_max);
            for id in (0..f.len()).filter(|&id| f.is_occupied(id)) {
                let inside: Vec<(f64, i64)> = f
                    .samples(id)
                    .iter()
                    .map(|&i| (z.samples()[i as usize].x.coords()[0], z.samples()[i as usize].y()))
                    .collect();
                let r = best_hcell(&f, id).unwrap();
                prop_assert_eq!(r.gamma0, threshold_scan(&inside));
            }
        }

        #[test]
        fn decoration_dominates_plain(pts in line_data(), j_max in 0u32..5, m in 0usize..5) {
            let z = Dataset::from_pairs(pts.iter().map(|&(x, y)| (vec![x], y))).unwrap();
            let f = occupied_only(z.clone(), j_max);
            let plain = compute_energy(&f, m);
            let deco = decorated_energy(&f, m).unwrap();
            prop_assert!(deco.gamma(f.root(), m) >= plain.gamma(f.root(), m));
            let c = extract_decorated_classifier(&f, &deco, m).unwrap();
            prop_assert_eq!(classifier_energy(&c, &z), deco.gamma(f.root(), m));
            prop_assert_eq!(label_sum(&c, &z), deco.gamma(f.root(), m));
            for s in z.samples() {
                let _ = c.contains_point(&s.x);
            }
        }
    }
}
