//! Radially decreasing weights and their layer-cake measures.
//!
//! A weight on the unit ball is `φ(x) = Φ(|x|)` with a nonincreasing,
//! right-continuous step profile `Φ`. On the annulus `1/2 < |x| < 1` it is a
//! superposition of ball indicators,
//!
//! ```text
//! φ(x) = Σ_j w_j · 1{|x| < t_j},    t_j ∈ (1/2, 1]
//! ```
//!
//! and [`LayerCakeMeasure`] stores the atoms `(t_j, w_j)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::KahanSum;

/// Nonincreasing step profile on `[0, 1)`.
///
/// `Φ(t) = values[i]` for `t ∈ [breakpoints[i-1], breakpoints[i])`, with the
/// conventions `breakpoints[-1] = 0` and `breakpoints[m] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl RadialProfile {
    /// Builds a step profile, validating every invariant.
    pub fn step(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidProfile(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        for (i, &b) in breakpoints.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidProfile(format!(
                    "breakpoint {b} outside (0, 1)"
                )));
            }
            if i > 0 && b <= breakpoints[i - 1] {
                return Err(Error::InvalidProfile(
                    "breakpoints must be strictly increasing".into(),
                ));
            }
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidProfile(format!(
                    "level {v} is not finite (unbounded weights are unsupported)"
                )));
            }
            if v < 0.0 {
                return Err(Error::InvalidProfile(format!("negative level {v}")));
            }
            if i > 0 && v > values[i - 1] {
                return Err(Error::InvalidProfile(format!(
                    "levels must be nonincreasing ({} then {v})",
                    values[i - 1]
                )));
            }
        }
        let profile = Self { breakpoints, values };
        if profile.at_half() <= 0.0 {
            return Err(Error::InvalidProfile(
                "profile vanishes at 1/2, so the weight is zero on the outer annulus".into(),
            ));
        }
        Ok(profile)
    }

    /// The constant profile `Φ ≡ level`.
    pub fn constant(level: f64) -> Result<Self> {
        Self::step(Vec::new(), vec![level])
    }

    /// Step approximation of a continuous nonincreasing profile, sampled at
    /// the left endpoints of `m` uniform subintervals so the result dominates
    /// `f` pointwise.
    pub fn sample<F: Fn(f64) -> f64>(f: F, m: usize) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidProfile("step count must be >= 1".into()));
        }
        let breakpoints: Vec<f64> = (1..m).map(|i| i as f64 / m as f64).collect();
        let values: Vec<f64> = (0..m).map(|i| f(i as f64 / m as f64)).collect();
        Self::step(breakpoints, values)?.canonical()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Φ(radius)` for `radius ∈ [0, 1)`.
    pub fn eval(&self, radius: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&radius) {
            return Err(Error::RadiusOutOfRange {
                radius,
                domain: "[0, 1)",
            });
        }
        Ok(self.level(radius))
    }

    /// Unchecked evaluation; radii `>= 1` read the outermost level.
    #[inline]
    pub(crate) fn level(&self, radius: f64) -> f64 {
        let i = self.breakpoints.partition_point(|&b| b <= radius);
        self.values[i]
    }

    /// `Φ(0)`.
    pub fn at_center(&self) -> f64 {
        self.values[0]
    }

    /// `Φ(1/2)`, which equals `Φ(1/2⁺)` by right-continuity.
    pub fn at_half(&self) -> f64 {
        self.level(0.5)
    }

    /// `Φ(0) / Φ(1/2)`, the factor by which truncation can change the weight.
    pub fn center_ratio(&self) -> f64 {
        self.at_center() / self.at_half()
    }

    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    /// Drops breakpoints across which the level does not change.
    pub fn canonical(&self) -> Result<Self> {
        let mut breakpoints = Vec::new();
        let mut values = vec![self.values[0]];
        for (b, &v) in self.breakpoints.iter().zip(&self.values[1..]) {
            if v != *values.last().unwrap() {
                breakpoints.push(*b);
                values.push(v);
            }
        }
        Self::step(breakpoints, values)
    }

    /// `Φ̃ = Φ ∧ Φ(1/2)`; constant on `[0, 1/2]`.
    pub fn truncate(&self) -> Self {
        let cap = self.at_half();
        let values = self.values.iter().map(|&v| v.min(cap)).collect();
        Self::step(self.breakpoints.clone(), values)
            .and_then(|p| p.canonical())
            .expect("capping a valid profile keeps it valid")
    }

    /// The atoms `(t_j, w_j)` on `(1/2, 1]` with `Σ_{t_j > r} w_j = Φ(r)` for
    /// every `r ∈ (1/2, 1)`.
    ///
    /// Jumps at radii `<= 1/2` carry no atom. Zero-mass atoms are omitted.
    pub fn layer_cake(&self) -> LayerCakeMeasure {
        let mut atoms = Vec::new();
        for (i, &r) in self.breakpoints.iter().enumerate() {
            if r > 0.5 {
                let (hi, lo) = two_diff(self.values[i], self.values[i + 1]);
                if hi > 0.0 || lo > 0.0 {
                    atoms.push(Atom { t: r, mass: hi, low: lo });
                }
            }
        }
        let outer = *self.values.last().unwrap();
        if outer > 0.0 {
            atoms.push(Atom {
                t: 1.0,
                mass: outer,
                low: 0.0,
            });
        }
        LayerCakeMeasure { atoms }
    }

    /// Short human-readable description for reports.
    pub fn describe(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.breakpoints.is_empty() {
            return write!(f, "const({})", self.values[0]);
        }
        write!(f, "step(")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, "|{}|", self.breakpoints[i - 1])?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Error-free difference: `a - b = hi + lo` exactly.
fn two_diff(a: f64, b: f64) -> (f64, f64) {
    let hi = a - b;
    let bb = a - hi;
    let lo = (a - (hi + bb)) + (bb - b);
    (hi, lo)
}

/// One atom of the layer-cake measure. Masses produced by
/// [`RadialProfile::layer_cake`] keep the rounding residual of the level
/// difference in `low`, so tail sums reproduce the levels exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Atom {
    t: f64,
    mass: f64,
    low: f64,
}

/// Finite atomic measure on `(1/2, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCakeMeasure {
    atoms: Vec<Atom>,
}

impl LayerCakeMeasure {
    /// Builds a measure from explicit `(t, w)` atoms.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for (i, &(t, w)) in atoms.iter().enumerate() {
            if !(t > 0.5 && t <= 1.0) {
                return Err(Error::InvalidMeasure(format!("atom at {t} outside (1/2, 1]")));
            }
            if i > 0 && t <= atoms[i - 1].0 {
                return Err(Error::InvalidMeasure(
                    "atom locations must be strictly increasing".into(),
                ));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidMeasure(format!("invalid mass {w}")));
            }
        }
        if atoms.iter().all(|&(_, w)| w == 0.0) {
            return Err(Error::InvalidMeasure("measure is zero".into()));
        }
        Ok(Self {
            atoms: atoms
                .into_iter()
                .map(|(t, mass)| Atom { t, mass, low: 0.0 })
                .collect(),
        })
    }

    /// `(t_j, w_j)` pairs in increasing `t`.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.atoms.iter().map(|a| (a.t, a.mass + a.low)).collect()
    }

    pub fn locations(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.t)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.tail(f64::NEG_INFINITY)
    }

    /// `ν((radius, 1])` for `radius ∈ (1/2, 1)`.
    pub fn reconstruct(&self, radius: f64) -> Result<f64> {
        if !(radius > 0.5 && radius < 1.0) {
            return Err(Error::RadiusOutOfRange {
                radius,
                domain: "(1/2, 1)",
            });
        }
        Ok(self.tail(radius))
    }

    /// `ν((radius, 1])` without range checks, summed from the outermost atom.
    pub(crate) fn tail(&self, radius: f64) -> f64 {
        let mut acc = KahanSum::new();
        for a in self.atoms.iter().rev().take_while(|a| a.t > radius) {
            acc.add(a.mass);
            acc.add(a.low);
        }
        acc.value()
    }

    /// `Σ_j w_j F(t_j)`; errors when `F` is not finite at an atom.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<f64> {
        let mut acc = KahanSum::new();
        for a in &self.atoms {
            let v = f(a.t);
            if !v.is_finite() {
                return Err(Error::NonFiniteFunctional(a.t));
            }
            acc.add(a.mass * v);
            acc.add(a.low * v);
        }
        Ok(acc.value())
    }
}

/// Serialized form of a weight profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// Explicit step profile.
    Step {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
    /// `Φ(t) = (1 - t)^beta`, discretized with [`RadialProfile::sample`].
    Power { beta: f64 },
}

impl ProfileSpec {
    pub fn constant() -> Self {
        ProfileSpec::Step {
            breakpoints: Vec::new(),
            values: vec![1.0],
        }
    }

    /// Materializes the profile; `steps` is used by sampled kinds only.
    pub fn build(&self, steps: usize) -> Result<RadialProfile> {
        match self {
            ProfileSpec::Step {
                breakpoints,
                values,
            } => RadialProfile::step(breakpoints.clone(), values.clone()),
            ProfileSpec::Power { beta } => {
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(Error::InvalidProfile(format!(
                        "power exponent {beta} must be finite and >= 0"
                    )));
                }
                let beta = *beta;
                RadialProfile::sample(move |t| (1.0 - t).powf(beta), steps)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_level() -> RadialProfile {
        RadialProfile::step(vec![0.75], vec![2.0, 1.0]).unwrap()
    }

    #[test]
    fn constant_profile() {
        let p = RadialProfile::step(vec![], vec![1.0]).unwrap();
        assert!(p.is_constant());
        assert_eq!(p.eval(0.99).unwrap(), 1.0);
    }

    #[test]
    fn two_level_readout_and_right_continuity() {
        let p = two_level();
        assert_eq!(p.eval(0.5).unwrap(), 2.0);
        assert_eq!(p.eval(0.75).unwrap(), 1.0);
        assert_eq!(p.eval(0.7499999).unwrap(), 2.0);
    }

    #[test]
    fn rejects_increasing_levels() {
        assert!(matches!(
            RadialProfile::step(vec![0.6], vec![1.0, 2.0]),
            Err(Error::InvalidProfile(_))
        ));
    }

    #[test]
    fn rejects_bad_breakpoints_and_zero_at_half() {
        assert!(RadialProfile::step(vec![1.0], vec![2.0, 1.0]).is_err());
        assert!(RadialProfile::step(vec![0.0], vec![2.0, 1.0]).is_err());
        assert!(RadialProfile::step(vec![0.6, 0.3], vec![3.0, 2.0, 1.0]).is_err());
        assert!(RadialProfile::step(vec![0.4], vec![1.0, 0.0]).is_err());
        assert!(RadialProfile::step(vec![], vec![f64::INFINITY]).is_err());
        // zero only beyond 1/2 is fine
        assert!(RadialProfile::step(vec![0.8], vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn eval_rejects_out_of_range() {
        let p = two_level();
        assert!(p.eval(1.0).is_err());
        assert!(p.eval(-0.1).is_err());
    }

    #[test]
    fn sample_quadratic() {
        let p = RadialProfile::sample(|t| 1.0 - t * t, 2).unwrap();
        assert_eq!(p.breakpoints(), &[0.5]);
        assert_eq!(p.values(), &[1.0, 0.75]);
    }

    #[test]
    fn sample_constant_and_increasing() {
        let p = RadialProfile::sample(|_| 1.0, 7).unwrap();
        assert!(p.is_constant());
        assert!(p.breakpoints().is_empty());
        assert!(RadialProfile::sample(|t| t, 2).is_err());
        assert!(RadialProfile::sample(|_| 1.0, 0).is_err());
    }

    #[test]
    fn sample_dominates_continuous_profile() {
        let f = |t: f64| (1.0 - t).powf(1.5);
        let p = RadialProfile::sample(f, 9).unwrap();
        for k in 0..100 {
            let t = k as f64 / 100.0;
            assert!(p.eval(t).unwrap() >= f(t));
        }
    }

    #[test]
    fn layer_cake_examples() {
        let c = RadialProfile::constant(1.0).unwrap().layer_cake();
        assert_eq!(c.atoms(), vec![(1.0, 1.0)]);

        let m = two_level().layer_cake();
        assert_eq!(m.atoms(), vec![(0.75, 1.0), (1.0, 1.0)]);
        assert_eq!(m.reconstruct(0.8).unwrap(), 1.0);

        let inner = RadialProfile::step(vec![0.4], vec![3.0, 1.0]).unwrap();
        let m = inner.layer_cake();
        assert_eq!(m.atoms(), vec![(1.0, 1.0)]);
        for k in 1..100 {
            let r = 0.5 + k as f64 / 200.0;
            assert_eq!(m.reconstruct(r).unwrap(), inner.eval(r).unwrap());
        }
    }

    #[test]
    fn jump_at_half_is_not_an_atom() {
        let p = RadialProfile::step(vec![0.5, 0.9], vec![4.0, 2.0, 1.0]).unwrap();
        let m = p.layer_cake();
        assert_eq!(m.atoms(), vec![(0.9, 1.0), (1.0, 1.0)]);
        assert_eq!(m.total_mass(), p.at_half());
    }

    #[test]
    fn reconstruct_examples() {
        let single = LayerCakeMeasure::new(vec![(1.0, 1.0)]).unwrap();
        assert_eq!(single.reconstruct(0.9).unwrap(), 1.0);
        let two = LayerCakeMeasure::new(vec![(0.75, 1.0), (1.0, 1.0)]).unwrap();
        assert_eq!(two.reconstruct(0.8).unwrap(), 1.0);
        assert_eq!(two.reconstruct(0.6).unwrap(), 2.0);
        assert!(two.reconstruct(0.5).is_err());
        assert!(two.reconstruct(1.0).is_err());
    }

    #[test]
    fn measure_validation() {
        assert!(LayerCakeMeasure::new(vec![]).is_err());
        assert!(LayerCakeMeasure::new(vec![(0.5, 1.0)]).is_err());
        assert!(LayerCakeMeasure::new(vec![(0.9, 1.0), (0.8, 1.0)]).is_err());
        assert!(LayerCakeMeasure::new(vec![(0.9, 0.0)]).is_err());
        assert!(LayerCakeMeasure::new(vec![(0.9, -1.0)]).is_err());
    }

    #[test]
    fn integrate_examples() {
        let unit = LayerCakeMeasure::new(vec![(1.0, 1.0)]).unwrap();
        assert_eq!(unit.integrate(|_| 1.0).unwrap(), 1.0);
        let two = LayerCakeMeasure::new(vec![(0.75, 1.0), (1.0, 1.0)]).unwrap();
        assert_eq!(two.integrate(|t| t).unwrap(), 1.75);
        assert_eq!(two.integrate(|_| 0.0).unwrap(), 0.0);
        assert!(matches!(
            two.integrate(|t| if t < 1.0 { f64::NAN } else { 1.0 }),
            Err(Error::NonFiniteFunctional(t)) if t == 0.75
        ));
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(two_level().truncate(), two_level());
        let p = RadialProfile::step(vec![0.3, 0.75], vec![4.0, 2.0, 1.0]).unwrap();
        assert_eq!(p.truncate(), two_level());
        let c = RadialProfile::constant(1.0).unwrap();
        assert_eq!(c.truncate(), c);
    }

    #[test]
    fn profile_spec_json() {
        let spec: ProfileSpec =
            serde_json::from_str(r#"{"type":"step","breakpoints":[0.75],"values":[2,1]}"#).unwrap();
        assert_eq!(spec.build(1).unwrap(), two_level());
        let spec: ProfileSpec = serde_json::from_str(r#"{"type":"power","beta":2.0}"#).unwrap();
        let p = spec.build(4).unwrap();
        assert_eq!(p.values(), &[1.0, 0.5625, 0.25, 0.0625]);
        assert!(serde_json::from_str::<ProfileSpec>(r#"{"type":"power","beta":2,"x":1}"#).is_err());
    }
}
