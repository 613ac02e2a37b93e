//! Enthalpy function, smoothed conductivity and its space–time mollification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{extend_field, SpaceTimeField};
use crate::quadrature::{gauss_legendre, integrate_adaptive};

/// Upper bound on `alpha` for the pure-phase reduction diagnostic.
pub const CLASSICAL_ALPHA_BOUND: f64 = 1.0 / 26.0;

/// Physical and regularization constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnthalpyParams {
    /// Conductivity of the solid phase.
    pub k1: f64,
    /// Conductivity of the liquid phase.
    pub k2: f64,
    /// Latent heat, the width of the flat part of `beta`.
    pub rho: f64,
    /// Regularization scale of the mollified coefficient.
    pub lambda: f64,
    /// Exponent of the transition width `lambda^alpha`.
    pub alpha: f64,
    /// Tolerance defining the mushy band.
    pub mu: f64,
}

impl EnthalpyParams {
    pub fn new(k1: f64, k2: f64, rho: f64, lambda: f64, alpha: f64, mu: f64) -> Result<Self> {
        let p = Self { k1, k2, rho, lambda, alpha, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("k1", self.k1), ("k2", self.k2), ("rho", self.rho), ("lambda", self.lambda), ("mu", self.mu)];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        let flat = self.flat_value();
        if self.k_star() - flat <= 0.0 {
            return Err(Error::config(
                "lambda",
                format!("k* - lambda^alpha must be positive (lambda^alpha = {flat})"),
            ));
        }
        // g(-l^a) = k1 and g(rho + l^a) = k2 together with g >= l^a.
        if self.k1.min(self.k2) < flat {
            return Err(Error::config(
                "lambda",
                format!("lambda^alpha = {flat} exceeds min(k1, k2)"),
            ));
        }
        Ok(())
    }

    /// `k* = max(k1, k2)`.
    pub fn k_star(&self) -> f64 {
        self.k1.max(self.k2)
    }

    /// `lambda^alpha`: the conductivity on `[0, rho]` and the half-width of
    /// the transition arcs.
    pub fn flat_value(&self) -> f64 {
        self.lambda.powf(self.alpha)
    }

    pub fn classical_reduction_admissible(&self) -> bool {
        self.alpha < CLASSICAL_ALPHA_BOUND
    }

    /// Bound used for `|g'|`; Hermite arcs reach `1.5 (k* - l^a) / l^a`.
    pub fn slope_bound(&self) -> f64 {
        1.5 * self.k_star() / self.flat_value()
    }
}

/// Enthalpy `beta(r)`.
pub fn beta(r: f64, p: &EnthalpyParams) -> f64 {
    if r < 0.0 {
        p.k1 * r
    } else if r < p.rho {
        0.0
    } else {
        p.k2 * (r - p.rho)
    }
}

fn smoothstep(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

/// The `C^1` transition function on `[-l^a, rho + l^a]`: cubic Hermite arcs
/// with zero end slopes on both sides of the flat value `l^a` on `[0, rho]`.
pub fn g_lambda(r: f64, p: &EnthalpyParams) -> Result<f64> {
    let w = p.flat_value();
    if !(r >= -w && r <= p.rho + w) {
        return Err(Error::Domain(format!(
            "g_lambda({r}) outside [{}, {}]",
            -w,
            p.rho + w
        )));
    }
    Ok(g_unchecked(r, p, w))
}

fn g_unchecked(r: f64, p: &EnthalpyParams, w: f64) -> f64 {
    if r < 0.0 {
        p.k1 + (w - p.k1) * smoothstep((r + w) / w)
    } else if r <= p.rho {
        w
    } else {
        w + (p.k2 - w) * smoothstep((r - p.rho) / w)
    }
}

/// Smoothed conductivity `h_lambda(r)`.
pub fn h_lambda(r: f64, p: &EnthalpyParams) -> f64 {
    let w = p.flat_value();
    if r < -w {
        p.k1
    } else if r > p.rho + w {
        p.k2
    } else {
        g_unchecked(r, p, w)
    }
}

/// Standard bump mollifier and the tensor Gauss–Legendre stencil used to
/// apply it.
#[derive(Clone, Debug, PartialEq)]
pub struct MollifierSpec {
    dimension: usize,
    normalization: f64,
    quadrature_order: usize,
    offsets: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl MollifierSpec {
    pub const DEFAULT_ORDER: usize = 8;

    pub fn new(dimension: usize, quadrature_order: usize) -> Result<Self> {
        if !(1..=2).contains(&dimension) {
            return Err(Error::config("dimension", "must be 1 or 2"));
        }
        if !(1..=64).contains(&quadrature_order) {
            return Err(Error::config("quadrature_order", "must lie in 1..=64"));
        }
        let bump = |r2: f64| if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 };
        let mass = if dimension == 1 {
            integrate_adaptive(|x| bump(x * x), -1.0, 1.0, 1e-14)
        } else {
            2.0 * std::f64::consts::PI * integrate_adaptive(|r| r * bump(r * r), 0.0, 1.0, 1e-14)
        };
        let normalization = 1.0 / mass;

        let (nodes, gl) = gauss_legendre(quadrature_order);
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        if dimension == 1 {
            for (x, w) in nodes.iter().zip(&gl) {
                offsets.push([*x, 0.0]);
                weights.push(w * bump(x * x));
            }
        } else {
            for (x, wx) in nodes.iter().zip(&gl) {
                for (y, wy) in nodes.iter().zip(&gl) {
                    let wt = wx * wy * bump(x * x + y * y);
                    if wt > 0.0 {
                        offsets.push([*x, *y]);
                        weights.push(wt);
                    }
                }
            }
        }
        // The discrete stencil is renormalized so constants are reproduced exactly.
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            dimension,
            normalization,
            quadrature_order,
            offsets,
            weights,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Constant `C` making `C exp(-1/(1-|x|^2))` a unit-mass density.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    /// Quadrature offsets in the unit ball and their normalized weights.
    pub fn stencil(&self) -> impl Iterator<Item = (&[f64; 2], f64)> {
        self.offsets.iter().zip(self.weights.iter().copied())
    }
}

/// `phi(xi) = C exp(-1/(1-|xi|^2))` inside the unit ball, 0 outside.
pub fn mollifier_weight(xi: &[f64], spec: &MollifierSpec) -> f64 {
    let r2: f64 = xi.iter().map(|v| v * v).sum();
    if r2 < 1.0 {
        spec.normalization * (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

/// Number of midpoint samples of `[t, t + lambda]` on a grid with step `dt`.
pub fn time_samples(lambda: f64, dt: f64) -> usize {
    let per_interval = (lambda / dt).ceil() as usize;
    (2 * per_interval).max(4)
}

/// `H_lambda(z)(t, x)`: the average over `[t, t + lambda]` of the spatial
/// mollification of `h_lambda(z)` at radius `lambda`.
///
/// `z` is extended constantly in time past `T` and by the nearest point
/// outside the domain.
pub fn mollified_coefficient(
    z: &SpaceTimeField,
    t: f64,
    x: &[f64],
    params: &EnthalpyParams,
    spec: &MollifierSpec,
) -> Result<f64> {
    let horizon = z.times().horizon();
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::Domain(format!("time {t} outside [0, {horizon}]")));
    }
    if x.len() != z.grid().dimension() || spec.dimension() != x.len() {
        return Err(Error::config("x", "point dimension does not match the grid"));
    }
    Ok(mollified_unchecked(z, t, x, params, spec))
}

pub(crate) fn mollified_unchecked(
    z: &SpaceTimeField,
    t: f64,
    x: &[f64],
    params: &EnthalpyParams,
    spec: &MollifierSpec,
) -> f64 {
    let lambda = params.lambda;
    let ns = time_samples(lambda, z.times().dt());
    let ds = lambda / ns as f64;
    let dim = x.len();
    let mut acc = 0.0;
    let mut point = [0.0; 2];
    for k in 0..ns {
        let s = t + (k as f64 + 0.5) * ds;
        let mut spatial = 0.0;
        for (xi, w) in spec.stencil() {
            for a in 0..dim {
                point[a] = x[a] - lambda * xi[a];
            }
            spatial += w * h_lambda(extend_field(z, s, &point[..dim]), params);
        }
        acc += spatial;
    }
    acc / ns as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{SpatialGrid, TimeGrid};
    use proptest::prelude::*;

    fn params(k1: f64, k2: f64, rho: f64) -> EnthalpyParams {
        EnthalpyParams::new(k1, k2, rho, 1e-4, 0.25, 0.05).unwrap()
    }

    #[test]
    fn beta_branches() {
        let p = params(2.0, 3.0, 1.0);
        assert_eq!(beta(-2.0, &p), -4.0);
        assert_eq!(beta(0.0, &p), 0.0);
        assert_eq!(beta(0.7, &p), 0.0);
        assert_eq!(beta(2.0, &p), 3.0);
    }

    #[test]
    fn g_lambda_examples() {
        let p = params(2.0, 3.0, 1.0);
        let w = p.flat_value();
        assert!((w - 0.1).abs() < 1e-15);
        assert!((g_lambda(-w, &p).unwrap() - 2.0).abs() < 1e-15);
        assert!((g_lambda(1.0 + w, &p).unwrap() - 3.0).abs() < 1e-15);
        assert!((g_lambda(0.5, &p).unwrap() - 0.1).abs() < 1e-15);
        // Hermite midpoint: (k1 + l^a) / 2
        assert!((g_lambda(-w / 2.0, &p).unwrap() - 1.05).abs() < 1e-14);
        assert!(matches!(g_lambda(-0.2, &p), Err(Error::Domain(_))));
        assert!(matches!(g_lambda(1.2, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn h_lambda_examples() {
        let p = params(2.0, 3.0, 1.0);
        assert_eq!(h_lambda(-1.0, &p), 2.0);
        assert_eq!(h_lambda(2.0, &p), 3.0);
        assert!((h_lambda(0.5, &p) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn g_lambda_slope_is_bounded() {
        let p = params(2.0, 3.0, 1.0);
        let w = p.flat_value();
        let (a, b) = (-w, p.rho + w);
        let n = 10_000;
        let dx = (b - a) / n as f64;
        let mut max_slope: f64 = 0.0;
        for k in 0..n {
            let r0 = a + k as f64 * dx;
            let slope = (g_lambda(r0 + dx, &p).unwrap() - g_lambda(r0, &p).unwrap()) / dx;
            max_slope = max_slope.max(slope.abs());
        }
        assert!(max_slope <= p.slope_bound(), "{max_slope} > {}", p.slope_bound());
        // close to the Hermite maximum 1.5 (k* - l^a)/l^a
        assert!(max_slope > 0.99 * 1.5 * (3.0 - w) / w);
    }

    #[test]
    fn h_lambda_is_continuous_at_joints() {
        let p = params(2.0, 0.5, 1.0);
        let w = p.flat_value();
        for r in [-w, 0.0, p.rho, p.rho + w] {
            let d = (h_lambda(r + 1e-12, &p) - h_lambda(r - 1e-12, &p)).abs();
            assert!(d < 1e-9, "jump {d} at {r}");
        }
    }

    #[test]
    fn params_validation() {
        assert!(matches!(
            EnthalpyParams::new(-1.0, 1.0, 1.0, 1e-4, 0.25, 0.05),
            Err(Error::Config { key, .. }) if key == "k1"
        ));
        assert!(EnthalpyParams::new(1.0, 1.0, 1.0, 1e-4, 1.0, 0.05).is_err());
        // l^a = 0.5^0.1 ~ 0.93 > min(k1, k2)
        assert!(EnthalpyParams::new(0.5, 2.0, 1.0, 0.5, 0.1, 0.05).is_err());
        let p = EnthalpyParams::new(2.0, 1.0, 1.0, 1e-4, 0.03, 0.05).unwrap();
        assert!(p.classical_reduction_admissible());
    }

    #[test]
    fn mollifier_normalization() {
        // oracle: 1 / integral of exp(-1/(1-x^2)) over (-1, 1) = 2.252283621043581...
        let s1 = MollifierSpec::new(1, 8).unwrap();
        assert!((s1.normalization() - 2.252_283_621_043_581).abs() < 1e-12);
        assert!((mollifier_weight(&[0.0], &s1) - 0.828_568_839_869_105_2).abs() < 1e-12);
        assert_eq!(mollifier_weight(&[1.5], &s1), 0.0);
        assert_eq!(mollifier_weight(&[-1.0], &s1), 0.0);
        // 2D oracle: 1 / (2 pi int_0^1 r exp(-1/(1-r^2)) dr) = 2.143565775792236...
        let s2 = MollifierSpec::new(2, 8).unwrap();
        assert!((s2.normalization() - 2.143_565_775_792_236_6).abs() < 1e-12);
        assert_eq!(mollifier_weight(&[1.2, 0.9], &s2), 0.0);
        for s in [&s1, &s2] {
            let total: f64 = s.stencil().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-14);
            assert!(s.stencil().all(|(_, w)| w >= 0.0));
        }
        let mass = integrate_adaptive(|x| mollifier_weight(&[x], &s1), -1.0, 1.0, 1e-14);
        assert!((mass - 1.0).abs() < 1e-10);
        let mass2 = 2.0
            * std::f64::consts::PI
            * integrate_adaptive(|r| r * mollifier_weight(&[r, 0.0], &s2), 0.0, 1.0, 1e-14);
        assert!((mass2 - 1.0).abs() < 1e-10);
    }

    fn ramp_field(slope: f64, offset: f64, lambda_grid: bool) -> (SpaceTimeField, EnthalpyParams) {
        let g = SpatialGrid::line(1.0, 16).unwrap();
        let times = TimeGrid::new(0.1, 8).unwrap();
        let slice = g.sample(|c| slope * c[0] + offset);
        let z = SpaceTimeField::constant_in_time(&g, times, &slice).unwrap();
        let lambda = if lambda_grid { 0.05 } else { 1e-4 };
        let p = EnthalpyParams::new(2.0, 1.0, 1.0, lambda, 0.25, 0.05).unwrap();
        (z, p)
    }

    #[test]
    fn mollified_coefficient_of_constants() {
        let (z, p) = ramp_field(0.0, -1.0, false);
        let spec = MollifierSpec::new(1, 8).unwrap();
        for t in [0.0, 0.05, 0.1] {
            let v = mollified_coefficient(&z, t, &[0.3], &p, &spec).unwrap();
            assert!((v - 2.0).abs() < 1e-12);
        }
        let (z, p) = ramp_field(0.0, -0.03, false);
        let v = mollified_coefficient(&z, 0.02, &[0.99], &p, &spec).unwrap();
        assert!((v - h_lambda(-0.03, &p)).abs() < 1e-10);
        assert!(matches!(
            mollified_coefficient(&z, -0.01, &[0.5], &p, &spec),
            Err(Error::Domain(_))
        ));
        assert!(mollified_coefficient(&z, 0.11, &[0.5], &p, &spec).is_err());
    }

    #[test]
    fn mollified_coefficient_matches_dense_quadrature() {
        // a ramp crossing the lower transition arc, radius lambda = 0.05
        let (z, p) = ramp_field(1.6, -0.9, true);
        let x = 0.5;
        let t = 0.02;
        let fine = MollifierSpec::new(1, 32).unwrap();
        let v = mollified_coefficient(&z, t, &[x], &p, &fine).unwrap();
        let default = MollifierSpec::new(1, MollifierSpec::DEFAULT_ORDER).unwrap();
        let coarse = mollified_coefficient(&z, t, &[x], &p, &default).unwrap();
        // oracle: composite midpoint in xi on 4000 panels, the field is
        // constant in time so the time average is exact
        let n = 4000;
        let h = 2.0 / n as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..n {
            let xi = -1.0 + (k as f64 + 0.5) * h;
            let phi = if xi.abs() < 1.0 { (-1.0 / (1.0 - xi * xi)).exp() } else { 0.0 };
            let y = z.grid().interpolate(z.level(0), &[x - p.lambda * xi]);
            num += h * phi * h_lambda(y, &p);
            den += h * phi;
        }
        let oracle = num / den;
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
        assert!((coarse - oracle).abs() < 1e-4, "{coarse} vs {oracle}");
        assert!(v > h_lambda(-0.9 + 1.6 * 0.45, &p).min(h_lambda(-0.9 + 1.6 * 0.55, &p)));
    }

    proptest! {
        #[test]
        fn h_and_g_stay_in_band(r in -5.0f64..5.0, k1 in 0.2f64..5.0, k2 in 0.2f64..5.0, rho in 0.1f64..3.0) {
            let p = EnthalpyParams::new(k1, k2, rho, 1e-4, 0.25, 0.05).unwrap();
            let h = h_lambda(r, &p);
            prop_assert!(h >= p.flat_value() - 1e-15 && h <= p.k_star() + 1e-15);
            if let Ok(g) = g_lambda(r, &p) {
                prop_assert!(g >= p.flat_value() - 1e-15 && g <= p.k_star() + 1e-15);
            }
        }

        #[test]
        fn mollified_coefficient_stays_in_band(
            amp in 0.0f64..4.0, freq in 0.5f64..20.0, shift in -2.0f64..3.0, x in 0.0f64..1.0, t in 0.0f64..0.1
        ) {
            let g = SpatialGrid::line(1.0, 12).unwrap();
            let times = TimeGrid::new(0.1, 6).unwrap();
            let mut values = Vec::new();
            for n in 0..times.levels() {
                values.extend(g.sample(|c| shift + amp * (freq * c[0] + n as f64).sin()));
            }
            let z = SpaceTimeField::from_values(&g, times, values).unwrap();
            let p = EnthalpyParams::new(2.0, 1.0, 1.0, 0.02, 0.25, 0.05).unwrap();
            let spec = MollifierSpec::new(1, 6).unwrap();
            let v = mollified_coefficient(&z, t, &[x], &p, &spec).unwrap();
            prop_assert!(v >= p.flat_value() - 1e-12 && v <= p.k_star() + 1e-12);
        }
    }
}
