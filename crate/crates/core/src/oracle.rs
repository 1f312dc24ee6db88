//! Synthetic distributions on `[0,1]^d` with uniform marginal and a regression
//! function that depends on a single axis, so the Bayes set and the excess
//! risk of tree and grid classifiers are available in closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::empirical::{ClassifierForm, Dataset, LabeledSample, Region, SetClassifier};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, interval_index, Point, Side};

/// Shape of `eta` along the active axis.
#[derive(Clone, Debug, PartialEq)]
pub enum EtaKind {
    /// `eta(x) = sign(t - 1/2) |t - 1/2|^delta`, `0 < delta <= 1`.
    SignedPower { delta: f64 },
    /// `eta(x) = amp * sign(t - 1/2)`, with `sign(0) = +1`.
    Massart { amp: f64 },
    /// `eta = +amp` on the level-`level` slabs flagged in `pattern`, `-amp` elsewhere.
    DyadicStripe { amp: f64, level: u32, pattern: Vec<bool> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionOracle {
    dim: usize,
    axis: usize,
    kind: EtaKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskMethod {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub value: f64,
    pub method: RiskMethod,
    pub std_error: Option<f64>,
}

const STRIPE_MAX_LEVEL: u32 = 20;

impl DistributionOracle {
    pub fn new(dim: usize, axis: usize, kind: EtaKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if axis >= dim {
            return Err(Error::InvalidParameter(format!("axis {axis} out of range for dimension {dim}")));
        }
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        match &kind {
            EtaKind::SignedPower { delta } => unit("delta", *delta)?,
            EtaKind::Massart { amp } => unit("amplitude", *amp)?,
            EtaKind::DyadicStripe { amp, level, pattern } => {
                unit("amplitude", *amp)?;
                if *level > STRIPE_MAX_LEVEL {
                    return Err(Error::LevelTooDeep { level: *level, max: STRIPE_MAX_LEVEL });
                }
                if pattern.len() != 1usize << level {
                    return Err(Error::InvalidParameter(format!(
                        "stripe pattern needs {} entries, got {}",
                        1usize << level,
                        pattern.len()
                    )));
                }
            }
        }
        Ok(DistributionOracle { dim, axis, kind })
    }

    pub fn signed_power(dim: usize, delta: f64) -> Result<Self> {
        Self::new(dim, 0, EtaKind::SignedPower { delta })
    }

    pub fn massart(dim: usize, amp: f64) -> Result<Self> {
        Self::new(dim, 0, EtaKind::Massart { amp })
    }

    /// Stripe with one sign change at `t = 1/2`: negative below, positive above.
    pub fn half_stripe(dim: usize, amp: f64) -> Result<Self> {
        Self::new(dim, 0, EtaKind::DyadicStripe { amp, level: 1, pattern: vec![false, true] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn kind(&self) -> &EtaKind {
        &self.kind
    }

    /// `eta` as a function of the active coordinate.
    pub fn eta_axis(&self, t: f64) -> f64 {
        match &self.kind {
            EtaKind::SignedPower { delta } => {
                let u = t - 0.5;
                u.signum() * u.abs().powf(*delta)
            }
            EtaKind::Massart { amp } => {
                if t >= 0.5 {
                    *amp
                } else {
                    -amp
                }
            }
            EtaKind::DyadicStripe { amp, level, pattern } => {
                if pattern[interval_index(t, *level) as usize] {
                    *amp
                } else {
                    -amp
                }
            }
        }
    }

    pub fn eta(&self, p: &Point) -> Result<f64> {
        check_dim(self.dim, p.dim())?;
        Ok(self.eta_axis(p.coords()[self.axis]))
    }

    /// Probability of the label `+1` at `p`.
    pub fn p_positive(&self, p: &Point) -> Result<f64> {
        Ok((1.0 + self.eta(p)?) / 2.0)
    }

    pub fn bayes_member(&self, p: &Point) -> Result<bool> {
        Ok(self.eta(p)? >= 0.0)
    }

    /// `n` draws: all inputs first, in index order, then all labels.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..self.dim).map(|_| rng.gen::<f64>()).collect()).collect();
        let samples = xs
            .into_iter()
            .map(|x| {
                let p = (1.0 + self.eta_axis(x[self.axis])) / 2.0;
                let y = if rng.gen::<f64>() < p { 1 } else { -1 };
                LabeledSample::new(Point::new(x)?, y)
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples)
    }

    /// `rho_X{ |eta| <= t }`.
    pub fn margin_mass(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidParameter(format!("margin level must lie in (0, 1], got {t}")));
        }
        Ok(match &self.kind {
            EtaKind::SignedPower { delta } => (2.0 * t.powf(1.0 / delta)).min(1.0),
            EtaKind::Massart { amp } | EtaKind::DyadicStripe { amp, .. } => {
                if t < *amp {
                    0.0
                } else {
                    1.0
                }
            }
        })
    }

    /// Margin exponent: `1/delta` for the power family, infinite otherwise.
    pub fn margin_exponent(&self) -> f64 {
        match &self.kind {
            EtaKind::SignedPower { delta } => 1.0 / delta,
            _ => f64::INFINITY,
        }
    }

    /// `(int_a^b |eta| 1{eta < 0}, int_a^b |eta| 1{eta >= 0})` along the active axis.
    fn axis_mass(&self, a: f64, b: f64) -> (f64, f64) {
        if b <= a {
            return (0.0, 0.0);
        }
        match &self.kind {
            EtaKind::SignedPower { delta } => {
                let e = delta + 1.0;
                let (na, nb) = (a.min(0.5), b.min(0.5));
                let neg = ((0.5 - na).powf(e) - (0.5 - nb).powf(e)) / e;
                let (pa, pb) = (a.max(0.5), b.max(0.5));
                let pos = ((pb - 0.5).powf(e) - (pa - 0.5).powf(e)) / e;
                (neg, pos)
            }
            EtaKind::Massart { amp } => {
                let neg = (b.min(0.5) - a.min(0.5)) * amp;
                let pos = (b.max(0.5) - a.max(0.5)) * amp;
                (neg, pos)
            }
            EtaKind::DyadicStripe { amp, level, pattern } => {
                let w = 1.0 / (1u64 << level) as f64;
                pattern.iter().enumerate().fold((0.0, 0.0), |(neg, pos), (k, &up)| {
                    let len = (b.min((k + 1) as f64 * w) - a.max(k as f64 * w)).max(0.0) * amp;
                    if up {
                        (neg, pos + len)
                    } else {
                        (neg + len, pos)
                    }
                })
            }
        }
    }

    /// Excess risk of a box with active-axis extent `[a, b]` and transverse
    /// volume `vol`, given whether it belongs to the classifier's set.
    fn box_excess(&self, a: f64, b: f64, vol: f64, inside: bool) -> f64 {
        let (neg, pos) = self.axis_mass(a, b);
        vol * if inside { neg } else { pos }
    }

    /// Closed-form `int_{S delta Omega*} |eta| d rho_X` for plain trees, grids,
    /// and one-dimensional decorated trees.
    pub fn excess_risk_exact(&self, s: &SetClassifier) -> Result<RiskReport> {
        check_dim(self.dim, s.dim())?;
        let axis = self.axis;
        let cube_box = |q: &crate::geometry::DyadicCube| {
            let (a, b) = q.bounds(axis);
            let vol = (0..self.dim).filter(|&i| i != axis).map(|_| q.side_length()).product::<f64>();
            (a, b, vol)
        };
        let value = match &s.form {
            ClassifierForm::Plain { tree, positive } => tree
                .leaves()
                .iter()
                .map(|q| {
                    let (a, b, vol) = cube_box(q);
                    self.box_excess(a, b, vol, positive.contains(q))
                })
                .sum(),
            ClassifierForm::Grid { cells_per_axis, positive, .. } => {
                let l = *cells_per_axis;
                let w = 1.0 / l as f64;
                let vol = w.powi(self.dim as i32 - 1);
                // per slab of the active axis, count the positive cells among l^(d-1)
                let mut per_slab = vec![0u64; l as usize];
                for cell in positive {
                    per_slab[cell[axis] as usize] += 1;
                }
                let total = l.pow(self.dim as u32 - 1);
                per_slab
                    .iter()
                    .enumerate()
                    .map(|(k, &inside)| {
                        let (a, b) = (k as f64 * w, if k as u64 + 1 == l { 1.0 } else { (k + 1) as f64 * w });
                        self.box_excess(a, b, vol * inside as f64, true)
                            + self.box_excess(a, b, vol * (total - inside) as f64, false)
                    })
                    .sum()
            }
            ClassifierForm::Decorated { tree, cells } => {
                let has_cut = cells.values().any(|c| c.cut.is_some());
                if self.dim > 1 && has_cut {
                    return Err(Error::UnsupportedExact(
                        "decorated classifiers with cuts in dimension above one".into(),
                    ));
                }
                tree.leaves()
                    .iter()
                    .map(|q| {
                        let (a, b, vol) = cube_box(q);
                        match cells.get(q) {
                            None => self.box_excess(a, b, vol, false),
                            Some(cell) => match &cell.cut {
                                None => self.box_excess(a, b, vol, true),
                                Some(cut) => {
                                    // 1-d: the cut is a threshold, Lower means eval <= 0
                                    let nrm = cut.hyperplane.normal()[0];
                                    let t = (cut.hyperplane.offset() / nrm).clamp(a, b);
                                    let below_in = (cut.side == Side::Lower) == (nrm > 0.0);
                                    self.box_excess(a, t, vol, below_in) + self.box_excess(t, b, vol, !below_in)
                                }
                            },
                        }
                    })
                    .sum()
            }
        };
        Ok(RiskReport { value: f64::max(value, 0.0), method: RiskMethod::Exact, std_error: None })
    }

    /// Monte Carlo estimate of the excess risk from `samples` uniform draws.
    pub fn excess_risk_mc<R: Region + ?Sized>(&self, s: &R, samples: usize, seed: u64) -> Result<RiskReport> {
        if samples == 0 {
            return Err(Error::InvalidParameter("Monte Carlo needs at least one draw".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
        let mut u = vec![0.0; self.dim];
        for _ in 0..samples {
            u.iter_mut().for_each(|c| *c = rng.gen::<f64>());
            let e = self.eta_axis(u[self.axis]);
            let p = Point::new(u.clone())?;
            if s.contains_point(&p) != (e >= 0.0) {
                sum += e.abs();
                sum_sq += e * e;
            }
        }
        let n = samples as f64;
        let mean = sum / n;
        let var = if samples > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        Ok(RiskReport { value: mean, method: RiskMethod::MonteCarlo, std_error: Some((var / n).sqrt()) })
    }

    /// The Bayes set as a plain classifier, when it is a union of dyadic slabs.
    pub fn bayes_classifier(&self) -> Option<SetClassifier> {
        use std::collections::BTreeSet;
        let (level, up): (u32, Vec<bool>) = match &self.kind {
            EtaKind::DyadicStripe { level, pattern, .. } => (*level, pattern.clone()),
            _ => (1, vec![false, true]),
        };
        if self.dim > 1 {
            // slabs along one axis are not dyadic-tree leaves unless d = 1
            let cells: BTreeSet<Vec<u64>> = Self::slab_cells(self.dim, self.axis, level, &up);
            return Some(SetClassifier {
                form: ClassifierForm::Grid { dim: self.dim, cells_per_axis: 1 << level, positive: cells },
                algorithm: crate::select::Algorithm::Uniform,
                budget: 1 << level,
            });
        }
        let tree = crate::forest::CompleteTree::uniform(1, level);
        let positive: BTreeSet<_> = tree
            .leaves()
            .into_iter()
            .filter(|q| up[q.index()[0] as usize])
            .collect();
        SetClassifier::plain(tree, positive, 0).ok()
    }

    fn slab_cells(dim: usize, axis: usize, level: u32, up: &[bool]) -> std::collections::BTreeSet<Vec<u64>> {
        let l = 1u64 << level;
        let total = l.pow(dim as u32);
        (0..total)
            .map(|mut c| {
                (0..dim)
                    .map(|_| {
                        let v = c % l;
                        c /= l;
                        v
                    })
                    .collect::<Vec<u64>>()
            })
            .filter(|cell| up[cell[axis] as usize])
            .collect()
    }
}
