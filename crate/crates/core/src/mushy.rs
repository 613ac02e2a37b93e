//! Mushy sets, target coverage, Hausdorff distance and the Hölder spot check.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::enthalpy::EnthalpyParams;
use crate::error::{Error, Result};
use crate::grid::{v_norm, BoundaryControl, SpaceTimeField, SpatialGrid};

/// Subset `Omega*` of the cells, with positive measure.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSet {
    mask: Vec<bool>,
    measure: f64,
}

impl TargetSet {
    pub fn from_mask(grid: &SpatialGrid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.cell_count() {
            return Err(Error::config("target", "mask length differs from the cell count"));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::config("target", "target set must have positive measure"));
        }
        Ok(Self {
            mask,
            measure: count as f64 * grid.cell_volume(),
        })
    }

    /// Cells whose centers lie in the union of closed boxes
    /// `[x0, x1] x [y0, y1]` (the second pair is ignored in 1D).
    pub fn from_boxes(grid: &SpatialGrid, boxes: &[[f64; 4]]) -> Result<Self> {
        let mask = (0..grid.cell_count())
            .map(|c| {
                let x = grid.cell_center(c);
                boxes.iter().any(|b| {
                    x[0] >= b[0] && x[0] <= b[1] && (grid.dimension() == 1 || (x[1] >= b[2] && x[1] <= b[3]))
                })
            })
            .collect();
        Self::from_mask(grid, mask)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(c, _)| c)
    }
}

/// Cells of `sigma_t` at one time level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MushyMask {
    pub level: usize,
    pub mask: Vec<bool>,
}

impl MushyMask {
    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn cells(&self) -> Vec<usize> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(c, _)| c).collect()
    }
}

/// Closed band `[lo, hi]` defining the mushy set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    /// `[-mu, rho + mu]`.
    pub fn mu(params: &EnthalpyParams) -> Self {
        Self { lo: -params.mu, hi: params.rho + params.mu }
    }

    /// `[-2 mu, rho + 2 mu]`.
    pub fn two_mu(params: &EnthalpyParams) -> Self {
        Self { lo: -2.0 * params.mu, hi: params.rho + 2.0 * params.mu }
    }

    /// `[-2 lambda^(1/4), rho + 2 lambda^(1/4)]`.
    pub fn quarter_power(params: &EnthalpyParams) -> Self {
        let w = 2.0 * params.lambda.powf(0.25);
        Self { lo: -w, hi: params.rho + w }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

pub fn mushy_set(y: &SpaceTimeField, level: usize, band: Band) -> Result<MushyMask> {
    if level > y.times().steps() {
        return Err(Error::Domain(format!("time level {level} beyond the grid")));
    }
    Ok(mushy_mask(y.level(level), level, band))
}

pub fn mushy_mask(slice: &[f64], level: usize, band: Band) -> MushyMask {
    MushyMask {
        level,
        mask: slice.iter().map(|&v| band.contains(v)).collect(),
    }
}

/// `measure(target ∩ mask) / measure(target)`.
pub fn coverage(target: &TargetSet, mask: &MushyMask) -> f64 {
    let hit = target.cells().filter(|&c| mask.mask[c]).count();
    hit as f64 / target.cells().count() as f64
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HausdorffDistance {
    Finite(f64),
    /// Exactly one of the sets is empty.
    Infinite,
}

impl HausdorffDistance {
    pub fn value(&self) -> f64 {
        match self {
            Self::Finite(d) => *d,
            Self::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for HausdorffDistance {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            infinite: bool,
            value: Option<f64>,
        }
        let repr = match self {
            Self::Finite(d) => Repr { infinite: false, value: Some(*d) },
            Self::Infinite => Repr { infinite: true, value: None },
        };
        repr.serialize(s)
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn directed(from: &[[f64; 2]], to: &[[f64; 2]]) -> f64 {
    let mut worst: f64 = 0.0;
    for &a in from {
        let mut nearest = f64::INFINITY;
        for &b in to {
            let d = distance(a, b);
            if d < nearest {
                nearest = d;
                if nearest <= worst {
                    break;
                }
            }
        }
        worst = worst.max(nearest);
    }
    worst
}

/// Hausdorff–Pompeiu distance between the cell-center sets of two masks.
pub fn hausdorff_distance(grid: &SpatialGrid, a: &MushyMask, b: &MushyMask) -> Result<HausdorffDistance> {
    if a.mask.len() != grid.cell_count() || b.mask.len() != grid.cell_count() {
        return Err(Error::config("mask", "mask length differs from the cell count"));
    }
    let pa: Vec<[f64; 2]> = a.cells().into_iter().map(|c| grid.cell_center(c)).collect();
    let pb: Vec<[f64; 2]> = b.cells().into_iter().map(|c| grid.cell_center(c)).collect();
    match (pa.is_empty(), pb.is_empty()) {
        (true, true) => Err(Error::UndefinedDistance),
        (true, false) | (false, true) => Ok(HausdorffDistance::Infinite),
        _ => Ok(HausdorffDistance::Finite(directed(&pa, &pb).max(directed(&pb, &pa)))),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HolderReport {
    /// Largest sampled `|y(t,x) - y(s,xi)| / (|t-s|^(1/2) + |x-xi|^(1/2))`.
    pub quotient: f64,
    pub samples: usize,
}

/// Samples random pairs of interior space–time points (cell centers at
/// distance at least `interior_margin` from the boundary).
pub fn holder_quotient(y: &SpaceTimeField, interior_margin: f64, sample_count: usize, seed: u64) -> Result<HolderReport> {
    let grid = y.grid();
    let times = y.times();
    let cells: Vec<usize> = (0..grid.cell_count())
        .filter(|&c| grid.distance_to_boundary(c) >= interior_margin)
        .collect();
    if cells.is_empty() {
        return Err(Error::Domain(format!("no cells at distance {interior_margin} from the boundary")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut quotient: f64 = 0.0;
    let mut samples = 0;
    while samples < sample_count {
        let (c1, c2) = (cells[rng.gen_range(0..cells.len())], cells[rng.gen_range(0..cells.len())]);
        let (n1, n2) = (rng.gen_range(0..=times.steps()), rng.gen_range(0..=times.steps()));
        let dist = (times.time(n1) - times.time(n2)).abs().sqrt()
            + distance(grid.cell_center(c1), grid.cell_center(c2)).sqrt();
        if dist == 0.0 {
            continue;
        }
        quotient = quotient.max((y.level(n1)[c1] - y.level(n2)[c2]).abs() / dist);
        samples += 1;
    }
    Ok(HolderReport { quotient, samples })
}

/// `(||y0||_V + ||u||_Sigma) lambda^(-13 alpha / 2)`.
pub fn holder_normalizer(grid: &SpatialGrid, y0: &[f64], u: &BoundaryControl, params: &EnthalpyParams) -> f64 {
    (v_norm(grid, y0) + u.norm()) * params.lambda.powf(-6.5 * params.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use proptest::prelude::*;

    fn params() -> EnthalpyParams {
        EnthalpyParams::new(2.0, 1.0, 1.0, 1e-4, 0.25, 0.05).unwrap()
    }

    fn brute_force(grid: &SpatialGrid, a: &MushyMask, b: &MushyMask) -> f64 {
        let sup_inf = |p: &MushyMask, q: &MushyMask| {
            p.cells()
                .iter()
                .map(|&i| {
                    q.cells()
                        .iter()
                        .map(|&j| distance(grid.cell_center(i), grid.cell_center(j)))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        sup_inf(a, b).max(sup_inf(b, a))
    }

    #[test]
    fn mushy_set_examples() {
        let p = params();
        let g = SpatialGrid::line(1.0, 20).unwrap();
        let times = TimeGrid::new(0.1, 2).unwrap();
        let half = SpaceTimeField::constant_in_time(&g, times, &vec![0.5; 20]).unwrap();
        assert!(mushy_set(&half, 2, Band::mu(&p)).unwrap().mask.iter().all(|&m| m));
        let cold = SpaceTimeField::constant_in_time(&g, times, &vec![-0.5; 20]).unwrap();
        assert!(mushy_set(&cold, 0, Band::mu(&p)).unwrap().is_empty());
        assert!(mushy_set(&cold, 3, Band::mu(&p)).is_err());
        // ramp from -2 mu to rho + 2 mu over [0, L]
        let slope = p.rho + 4.0 * p.mu;
        let ramp = g.sample(|c| c[0] * slope - 2.0 * p.mu);
        let mask = mushy_mask(&ramp, 0, Band::mu(&p));
        for c in 0..20 {
            let x = g.cell_center(c)[0];
            let inside = x >= p.mu / slope && x <= (p.rho + 3.0 * p.mu) / slope;
            assert_eq!(mask.mask[c], inside, "cell {c}");
        }
    }

    #[test]
    fn coverage_examples() {
        let g = SpatialGrid::line(1.0, 20).unwrap();
        let target = TargetSet::from_boxes(&g, &[[0.2, 0.6, 0.0, 0.0]]).unwrap();
        assert_eq!(target.cells().count(), 8);
        assert!((target.measure() - 0.4).abs() < 1e-12);
        let all = MushyMask { level: 0, mask: vec![true; 20] };
        let none = MushyMask { level: 0, mask: vec![false; 20] };
        assert_eq!(coverage(&target, &all), 1.0);
        assert_eq!(coverage(&target, &none), 0.0);
        let half = MushyMask { level: 0, mask: (0..20).map(|c| g.cell_center(c)[0] > 0.4).collect() };
        assert!((coverage(&target, &half) - 0.5).abs() <= 1.0 / 8.0);
        assert!(TargetSet::from_boxes(&g, &[[0.51, 0.52, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let g = SpatialGrid::rectangle(1.0, 1.0, 4, 4).unwrap();
        let single = |c: usize| MushyMask { level: 0, mask: (0..16).map(|i| i == c).collect() };
        let empty = MushyMask { level: 0, mask: vec![false; 16] };
        assert_eq!(hausdorff_distance(&g, &single(3), &single(3)).unwrap(), HausdorffDistance::Finite(0.0));
        let d = hausdorff_distance(&g, &single(0), &single(15)).unwrap().value();
        assert!((d - 0.75 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(hausdorff_distance(&g, &empty, &single(2)).unwrap(), HausdorffDistance::Infinite);
        assert!(matches!(hausdorff_distance(&g, &empty, &empty), Err(Error::UndefinedDistance)));
        let json = serde_json::to_string(&HausdorffDistance::Infinite).unwrap();
        assert_eq!(json, r#"{"infinite":true,"value":null}"#);
    }

    #[test]
    fn holder_examples() {
        let g = SpatialGrid::line(1.0, 16).unwrap();
        let times = TimeGrid::new(0.5, 10).unwrap();
        let c = SpaceTimeField::constant_in_time(&g, times, &vec![2.0; 16]).unwrap();
        assert_eq!(holder_quotient(&c, 0.1, 200, 1).unwrap().quotient, 0.0);
        let mut lin = SpaceTimeField::zeros(&g, times);
        for n in 0..=10 {
            let t = times.time(n);
            lin.level_mut(n).iter_mut().for_each(|v| *v = t);
        }
        let q = holder_quotient(&lin, 0.1, 500, 7).unwrap();
        assert!(q.quotient > 0.0 && q.quotient <= 0.5f64.sqrt() + 1e-12);
        assert!(holder_quotient(&lin, 0.6, 10, 7).is_err());
    }

    fn mask_strategy(n: usize) -> impl Strategy<Value = Vec<bool>> {
        proptest::collection::vec(any::<bool>(), n)
    }

    proptest! {
        #[test]
        fn hausdorff_matches_brute_force(a in mask_strategy(30), b in mask_strategy(30), two_d in any::<bool>()) {
            let g = if two_d { SpatialGrid::rectangle(1.0, 2.0, 5, 6).unwrap() } else { SpatialGrid::line(3.0, 30).unwrap() };
            let (a, b) = (MushyMask { level: 0, mask: a }, MushyMask { level: 0, mask: b });
            match hausdorff_distance(&g, &a, &b) {
                Ok(HausdorffDistance::Finite(d)) => {
                    prop_assert!((d - brute_force(&g, &a, &b)).abs() < 1e-14);
                    let back = hausdorff_distance(&g, &b, &a).unwrap().value();
                    prop_assert_eq!(d, back);
                    prop_assert_eq!(d == 0.0, a == b);
                }
                Ok(HausdorffDistance::Infinite) => prop_assert!(a.is_empty() != b.is_empty()),
                Err(_) => prop_assert!(a.is_empty() && b.is_empty()),
            }
        }

        #[test]
        fn widening_the_band_keeps_cells(values in proptest::collection::vec(-2.0f64..3.0, 32), lo in -1.0f64..0.5, w in 0.0f64..1.0, grow in 0.0f64..0.5) {
            let narrow = mushy_mask(&values, 0, Band { lo, hi: lo + w });
            let wide = mushy_mask(&values, 0, Band { lo: lo - grow, hi: lo + w + grow });
            for (n, w) in narrow.mask.iter().zip(&wide.mask) {
                prop_assert!(!n || *w);
            }
        }

        #[test]
        fn coverage_is_monotone(t in mask_strategy(32), m in mask_strategy(32), extra in mask_strategy(32)) {
            let g = SpatialGrid::line(1.0, 32).unwrap();
            prop_assume!(t.iter().any(|&x| x));
            let target = TargetSet::from_mask(&g, t.clone()).unwrap();
            let small = MushyMask { level: 0, mask: m.clone() };
            let large = MushyMask { level: 0, mask: m.iter().zip(&extra).map(|(a, b)| *a || *b).collect() };
            prop_assert!(coverage(&target, &small) <= coverage(&target, &large));
            let full = t.iter().zip(&m).all(|(ti, mi)| !ti || *mi);
            prop_assert_eq!(coverage(&target, &small) == 1.0, full);
        }
    }
}
