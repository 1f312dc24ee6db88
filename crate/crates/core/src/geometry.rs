//! Dyadic cube arithmetic and hyperplane side tests on `[0,1]^d`.
//!
//! Cubes are half-open, `prod_i [k_i 2^-j, (k_i + 1) 2^-j)`, except that a face
//! lying on coordinate 1 is closed. With that convention the leaves of any
//! complete tree partition the closed unit cube exactly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest level a cube address may carry. Scaling a double by `2^52` is exact
/// and the index still fits in a `u64`.
pub const MAX_LEVEL: u32 = 52;

/// A point of the closed unit cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("point needs at least one coordinate".into()));
        }
        for (axis, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfDomain { axis, value });
            }
        }
        Ok(Point(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Index of the level-`level` dyadic interval of `[0,1]` holding `x`.
#[inline]
pub(crate) fn interval_index(x: f64, level: u32) -> u64 {
    let cells = 1u64 << level;
    let scaled = x * (cells as f64);
    // scaled is exact; only x == 1 lands on `cells`
    (scaled.floor() as u64).min(cells - 1)
}

/// Address of a dyadic cube: a level `j` and one index per axis, each `< 2^j`.
///
/// The derived ordering (level first, then index lexicographically) is the
/// "address order" used for tie-breaking and for breadth-first output.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    level: u32,
    index: Vec<u64>,
}

impl DyadicCube {
    pub fn new(level: u32, index: Vec<u64>) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::LevelTooDeep { level, max: MAX_LEVEL });
        }
        if index.is_empty() {
            return Err(Error::InvalidParameter("cube needs at least one axis".into()));
        }
        let cells = 1u64 << level;
        if let Some(&k) = index.iter().find(|&&k| k >= cells) {
            return Err(Error::InvalidParameter(format!(
                "index component {k} out of range for level {level}"
            )));
        }
        Ok(DyadicCube { level, index })
    }

    /// The whole domain `[0,1]^dim`.
    pub fn root(dim: usize) -> Self {
        DyadicCube { level: 0, index: vec![0; dim] }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> &[u64] {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn is_root(&self) -> bool {
        self.level == 0
    }

    pub fn side_length(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Lower and upper corner along `axis`.
    pub fn bounds(&self, axis: usize) -> (f64, f64) {
        let h = self.side_length();
        let k = self.index[axis] as f64;
        (k * h, (k + 1.0) * h)
    }

    pub fn parent(&self) -> Option<DyadicCube> {
        if self.level == 0 {
            return None;
        }
        Some(DyadicCube {
            level: self.level - 1,
            index: self.index.iter().map(|k| k / 2).collect(),
        })
    }

    /// All `2^d` subcubes one level down, in lexicographic index order.
    pub fn children(&self) -> Vec<DyadicCube> {
        let d = self.dim();
        (0..1usize << d).map(|c| self.child(c)).collect()
    }

    /// The `c`-th child in lexicographic order; bit `d-1-i` of `c` selects the
    /// upper half along axis `i`.
    pub fn child(&self, c: usize) -> DyadicCube {
        let d = self.dim();
        let index = self
            .index
            .iter()
            .enumerate()
            .map(|(i, k)| 2 * k + ((c >> (d - 1 - i)) & 1) as u64)
            .collect();
        DyadicCube { level: self.level + 1, index }
    }

    /// Position of the child of `self` containing `p`, matching [`Self::child`].
    pub fn child_slot(&self, p: &Point) -> usize {
        let d = self.dim();
        let level = self.level + 1;
        p.coords().iter().enumerate().fold(0usize, |slot, (i, &x)| {
            let bit = (interval_index(x, level) & 1) as usize;
            slot | (bit << (d - 1 - i))
        })
    }

    pub fn contains(&self, p: &Point) -> Result<bool> {
        check_dim(self.dim(), p.dim())?;
        Ok(self.contains_unchecked(p))
    }

    pub(crate) fn contains_unchecked(&self, p: &Point) -> bool {
        p.coords()
            .iter()
            .zip(&self.index)
            .all(|(&x, &k)| interval_index(x, self.level) == k)
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q[{};", self.level)?;
        for (i, k) in self.index.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "]")
    }
}

/// The unique level-`level` cube containing `p`.
pub fn locate(p: &Point, level: u32) -> Result<DyadicCube> {
    if level > MAX_LEVEL {
        return Err(Error::LevelTooDeep { level, max: MAX_LEVEL });
    }
    Ok(DyadicCube {
        level,
        index: p.coords().iter().map(|&x| interval_index(x, level)).collect(),
    })
}

/// Which side of a hyperplane a point falls on. Points on the hyperplane
/// itself belong to [`Side::Lower`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// `<normal, x> - offset <= 0`
    Lower,
    /// `<normal, x> - offset > 0`
    Upper,
}

impl Side {
    pub fn as_index(self) -> u8 {
        match self {
            Side::Lower => 0,
            Side::Upper => 1,
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            0 => Ok(Side::Lower),
            1 => Ok(Side::Upper),
            other => Err(Error::InvalidParameter(format!("side must be 0 or 1, got {other}"))),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Side::Lower => Side::Upper,
            Side::Upper => Side::Lower,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    normal: Vec<f64>,
    offset: f64,
}

impl Hyperplane {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.is_empty() || normal.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroNormal);
        }
        if normal.iter().any(|c| !c.is_finite()) || !offset.is_finite() {
            return Err(Error::InvalidParameter("hyperplane coefficients must be finite".into()));
        }
        Ok(Hyperplane { normal, offset })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed value `<normal, x> - offset`, summed in axis order.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let dot: f64 = self.normal.iter().zip(x).map(|(a, b)| a * b).sum();
        dot - self.offset
    }

    pub fn side_of(&self, p: &Point) -> Result<Side> {
        check_dim(self.dim(), p.dim())?;
        Ok(self.side_of_coords(p.coords()))
    }

    #[inline]
    pub(crate) fn side_of_coords(&self, x: &[f64]) -> Side {
        if self.eval(x) <= 0.0 {
            Side::Lower
        } else {
            Side::Upper
        }
    }

    /// Same hyperplane with the orientation reversed. Negation commutes with
    /// rounding, so `eval` of the result is exactly `-eval` of `self`.
    pub fn negated(&self) -> Hyperplane {
        Hyperplane {
            normal: self.normal.iter().map(|c| -c).collect(),
            offset: -self.offset,
        }
    }
}

/// A half-space cut of a cube together with the side kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub hyperplane: Hyperplane,
    pub side: Side,
}

/// A cube, or the part of a cube on one side of a hyperplane.
#[derive(Clone, Debug, PartialEq)]
pub struct HCell {
    pub cube: DyadicCube,
    pub cut: Option<Cut>,
}

impl HCell {
    pub fn whole(cube: DyadicCube) -> Self {
        HCell { cube, cut: None }
    }

    pub fn contains(&self, p: &Point) -> Result<bool> {
        check_dim(self.cube.dim(), p.dim())?;
        Ok(self.contains_unchecked(p))
    }

    pub(crate) fn contains_unchecked(&self, p: &Point) -> bool {
        self.cube.contains_unchecked(p) && self.cut_admits(p.coords())
    }

    /// Half-space test alone, ignoring the cube.
    #[inline]
    pub(crate) fn cut_admits(&self, x: &[f64]) -> bool {
        match &self.cut {
            None => true,
            Some(cut) => cut.hyperplane.side_of_coords(x) == cut.side,
        }
    }
}

impl Serialize for Side {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_index())
    }
}

impl<'de> Deserialize<'de> for Side {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = u8::deserialize(d)?;
        Side::from_index(raw).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn cube(level: u32, index: &[u64]) -> DyadicCube {
        DyadicCube::new(level, index.to_vec()).unwrap()
    }

    #[test]
    fn containment_examples() {
        assert!(cube(0, &[0]).contains(&pt(&[0.7])).unwrap());
        assert!(!cube(1, &[0]).contains(&pt(&[0.5])).unwrap());
        assert!(cube(1, &[1]).contains(&pt(&[0.5])).unwrap());
        assert!(cube(1, &[1]).contains(&pt(&[1.0])).unwrap());
        assert!(cube(0, &[0]).contains(&pt(&[0.7, 0.1])).is_err());
    }

    #[test]
    fn children_examples() {
        assert_eq!(cube(0, &[0]).children(), vec![cube(1, &[0]), cube(1, &[1])]);
        assert_eq!(
            cube(0, &[0, 0]).children(),
            vec![cube(1, &[0, 0]), cube(1, &[0, 1]), cube(1, &[1, 0]), cube(1, &[1, 1])]
        );
        assert_eq!(cube(1, &[1]).children(), vec![cube(2, &[2]), cube(2, &[3])]);
    }

    #[test]
    fn locate_examples() {
        assert_eq!(locate(&pt(&[0.3]), 1).unwrap(), cube(1, &[0]));
        assert_eq!(locate(&pt(&[0.5]), 1).unwrap(), cube(1, &[1]));
        assert_eq!(locate(&pt(&[0.9]), 0).unwrap(), DyadicCube::root(1));
        assert_eq!(locate(&pt(&[1.0, 0.0]), 3).unwrap(), cube(3, &[7, 0]));
    }

    #[test]
    fn side_examples() {
        let h = Hyperplane::new(vec![1.0], 0.3).unwrap();
        assert_eq!(h.side_of(&pt(&[0.3])).unwrap(), Side::Lower);
        assert_eq!(h.side_of(&pt(&[0.6])).unwrap(), Side::Upper);
        let h = Hyperplane::new(vec![1.0, 1.0], 1.0).unwrap();
        assert_eq!(h.side_of(&pt(&[0.2, 0.3])).unwrap(), Side::Lower);
        assert!(matches!(Hyperplane::new(vec![0.0, 0.0], 1.0), Err(Error::ZeroNormal)));
    }

    #[test]
    fn rejects_bad_points_and_cubes() {
        assert!(matches!(Point::new(vec![1.5]), Err(Error::OutOfDomain { axis: 0, .. })));
        assert!(Point::new(vec![f64::NAN]).is_err());
        assert!(DyadicCube::new(1, vec![2]).is_err());
        assert!(DyadicCube::new(MAX_LEVEL + 1, vec![0]).is_err());
    }

    #[test]
    fn child_slot_matches_children() {
        let q = cube(2, &[1, 3]);
        let p = pt(&[0.3, 0.9]);
        let slot = q.child_slot(&p);
        assert!(q.child(slot).contains(&p).unwrap());
    }

    fn coords(d: usize) -> impl Strategy<Value = Vec<f64>> {
        // mix in exact dyadic values so boundaries get exercised
        prop::collection::vec(
            prop_oneof![0.0..=1.0f64, (0u32..=8).prop_map(|k| k as f64 / 8.0)],
            d,
        )
    }

    proptest! {
        #[test]
        fn locate_agrees_with_exhaustive_search(x in coords(2), level in 0u32..4) {
            let p = Point::new(x).unwrap();
            let mut layer = vec![DyadicCube::root(2)];
            for _ in 0..level {
                layer = layer.iter().flat_map(|c| c.children()).collect();
            }
            let hits: Vec<_> = layer.iter().filter(|c| c.contains(&p).unwrap()).collect();
            prop_assert_eq!(hits.len(), 1);
            prop_assert_eq!(hits[0], &locate(&p, level).unwrap());
        }

        #[test]
        fn children_round_trip_to_parent(level in 0u32..10, a in any::<u64>(), b in any::<u64>()) {
            let cells = 1u64 << level;
            let q = DyadicCube::new(level, vec![a % cells, b % cells]).unwrap();
            for c in q.children() {
                prop_assert_eq!(c.parent().unwrap(), q.clone());
            }
        }

        #[test]
        fn negation_swaps_sides_off_the_boundary(
            n in prop::collection::vec(-2.0..2.0f64, 2),
            off in -1.0..1.0f64,
            x in coords(2),
        ) {
            prop_assume!(n.iter().any(|&c| c != 0.0));
            let h = Hyperplane::new(n, off).unwrap();
            let p = Point::new(x).unwrap();
            let s = h.side_of(&p).unwrap();
            let t = h.negated().side_of(&p).unwrap();
            if h.eval(p.coords()) == 0.0 {
                prop_assert_eq!((s, t), (Side::Lower, Side::Lower));
            } else {
                prop_assert_eq!(s, t.flip());
            }
        }
    }
}
