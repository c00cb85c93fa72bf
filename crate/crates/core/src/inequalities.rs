//! Left- and right-hand sides of each inequality, evaluated on a grid
//! function and compared against the explicit constant.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::{
    corollary_local_constant, kernel_energy, kernel_energy_with_multiplier, local_energy,
    theorem_constant, KernelSpec,
};
use crate::grid::{check_p, deviation_p, pow_abs, CellSet, GridFunction};
use crate::sum::kahan_sum;
use crate::weights::RadialProfile;

/// Slack for checks whose discrete form is exact.
pub const TOL_EXACT: f64 = 0.0;
/// Slack for checks comparing two independently discretized integrals.
pub const TOL_QUADRATURE: f64 = 0.05;
/// Relative slack when testing a supplied hypothesis at an atom.
const HYPOTHESIS_SLACK: f64 = 1e-12;

/// Parameters recorded alongside a check.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ReportMeta {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub s: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub profile: String,
    pub function: String,
}

impl ReportMeta {
    pub fn for_field(u: &GridFunction, p: f64) -> Self {
        Self {
            d: u.grid().dim(),
            n: u.grid().n(),
            p,
            ..Self::default()
        }
    }

    fn with_profile(mut self, profile: &RadialProfile) -> Self {
        self.profile = profile.describe();
        self
    }

    fn with_order(mut self, s: f64, r: Option<f64>) -> Self {
        self.s = Some(s);
        self.r = r;
        self
    }
}

/// Outcome of one inequality check, `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub check_id: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, and 0 when both vanish.
    pub ratio: f64,
    pub constant_used: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(flatten)]
    pub meta: ReportMeta,
}

impl InequalityReport {
    pub fn new(
        check_id: impl Into<String>,
        lhs: f64,
        rhs: f64,
        constant_used: f64,
        tol: f64,
        meta: ReportMeta,
    ) -> Self {
        let ratio = if lhs == 0.0 {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        };
        Self {
            check_id: check_id.into(),
            lhs,
            rhs,
            ratio,
            constant_used,
            tol,
            pass: ratio <= 1.0 + tol,
            meta,
        }
    }

    /// Tags the report with the name of the test function.
    pub fn labelled(mut self, function: impl Into<String>) -> Self {
        self.meta.function = function.into();
        self
    }
}

fn weighted_deviation(u: &GridFunction, p: f64, profile: &RadialProfile) -> Result<f64> {
    deviation_p(u, &u.grid().all_cells(), p, Some(profile), None)
}

fn within_hypothesis(deviation: f64, bound: f64) -> bool {
    deviation <= bound + HYPOTHESIS_SLACK * bound.abs().max(deviation.abs())
}

/// The layer-cake theorem: `Σ|u - u^φ|^p φ h^d <= M Σ_j w_j F(u, t_j)`.
///
/// `F` must dominate the unweighted deviation on each atom ball and be
/// invariant under adding constants; both are verified at every atom.
pub fn check_theorem<F>(
    u: &GridFunction,
    profile: &RadialProfile,
    f: F,
    p: f64,
    tol: f64,
) -> Result<InequalityReport>
where
    F: Fn(&GridFunction, f64) -> f64,
{
    check_p(p)?;
    let grid = u.grid();
    let measure = profile.layer_cake();
    let shifted = u.shifted(1.0);
    let mut values = Vec::with_capacity(measure.len());
    for t in measure.locations() {
        let ball = grid.ball_cells(t)?;
        let bound = f(u, t);
        if !bound.is_finite() {
            return Err(Error::NonFiniteFunctional(t));
        }
        let moved = f(&shifted, t);
        if (moved - bound).abs() > 1e-9 * bound.abs().max(moved.abs()) {
            return Err(Error::ShiftVariant { atom: t });
        }
        if !ball.is_empty() {
            let deviation = deviation_p(u, &ball, p, None, None)?;
            if !within_hypothesis(deviation, bound) {
                return Err(Error::HypothesisViolated {
                    atom: t,
                    deviation,
                    bound,
                });
            }
        }
        values.push(bound);
    }
    let mut it = values.into_iter();
    let integral = measure.integrate(|_| it.next().unwrap_or(f64::NAN))?;
    let m = theorem_constant(p, grid.dim(), profile);
    let lhs = weighted_deviation(u, p, profile)?;
    Ok(InequalityReport::new(
        "theorem",
        lhs,
        m * integral,
        m,
        tol,
        ReportMeta::for_field(u, p).with_profile(profile),
    ))
}

/// The tightest admissible functional: the discrete deviation on `B_t`.
pub fn ball_deviation_functional(p: f64) -> impl Fn(&GridFunction, f64) -> f64 {
    move |u, t| {
        u.grid()
            .ball_cells(t)
            .ok()
            .filter(|b| !b.is_empty())
            .map_or(0.0, |b| deviation_p(u, &b, p, None, None).unwrap_or(f64::NAN))
    }
}

/// Weighted gradient inequality with constant `2^{3p+d} Φ(0)/Φ(1/2) ĉ`.
pub fn check_local_weighted(
    u: &GridFunction,
    profile: &RadialProfile,
    p: f64,
    c_hat: f64,
    tol: f64,
) -> Result<InequalityReport> {
    let constant = corollary_local_constant(p, u.grid().dim(), profile, c_hat)?;
    let energy = local_energy(u, &u.grid().all_cells(), p, Some(profile))?;
    let lhs = weighted_deviation(u, p, profile)?;
    Ok(InequalityReport::new(
        "local",
        lhs,
        constant * energy,
        constant,
        tol,
        ReportMeta::for_field(u, p).with_profile(profile),
    ))
}

fn kernel_meta(u: &GridFunction, kernel: &KernelSpec, profile: &RadialProfile) -> ReportMeta {
    let meta = ReportMeta::for_field(u, kernel.p()).with_profile(profile);
    match kernel.order() {
        Some(s) => meta.with_order(s, kernel.truncation()),
        None => meta,
    }
}

/// Weighted nonlocal inequality `lhs <= C M Σ |Δu|^p k (φ ∧ φ)`, given an
/// unweighted constant `C` that holds on every atom ball (verified for `u`).
pub fn check_nonlocal_weighted(
    u: &GridFunction,
    profile: &RadialProfile,
    kernel: &KernelSpec,
    c_unweighted: f64,
    tol: f64,
) -> Result<InequalityReport> {
    if matches!(kernel, KernelSpec::LocalGradient { .. }) {
        return Err(Error::InvalidKernel("nonlocal check needs a pair kernel".into()));
    }
    if !(c_unweighted > 0.0 && c_unweighted.is_finite()) {
        return Err(Error::NonPositiveConstant(c_unweighted));
    }
    let p = kernel.p();
    let grid = u.grid();
    for t in profile.layer_cake().locations() {
        let ball = grid.ball_cells(t)?;
        if ball.is_empty() {
            continue;
        }
        let deviation = deviation_p(u, &ball, p, None, None)?;
        let bound = c_unweighted * kernel_energy(u, &ball, kernel, None)?;
        if !within_hypothesis(deviation, bound) {
            return Err(Error::HypothesisViolated {
                atom: t,
                deviation,
                bound,
            });
        }
    }
    let constant = c_unweighted * theorem_constant(p, grid.dim(), profile);
    let energy = kernel_energy(u, &grid.all_cells(), kernel, Some(profile))?;
    let lhs = weighted_deviation(u, p, profile)?;
    Ok(InequalityReport::new(
        "nonlocal",
        lhs,
        constant * energy,
        constant,
        tol,
        kernel_meta(u, kernel, profile),
    ))
}

/// Kernel bounded below by `c`: constant `M / (c |B_{1/2}|)` in front of the
/// weighted energy.
///
/// The energy uses `K ≡ 1`, or `multiplier` when given, in which case the
/// multiplier must be at least `c` on every pair of cells.
pub fn check_kernel_bounded_below(
    u: &GridFunction,
    profile: &RadialProfile,
    kernel: &KernelSpec,
    multiplier: Option<&(dyn Fn(&[f64], &[f64]) -> f64 + Sync)>,
    tol: f64,
) -> Result<InequalityReport> {
    let KernelSpec::ConstantFloor { c, p } = *kernel else {
        return Err(Error::InvalidKernel("expected a constant_floor kernel".into()));
    };
    if !(c > 0.0) {
        return Err(Error::NonPositiveConstant(c));
    }
    kernel.validate()?;
    let grid = u.grid();
    let all = grid.all_cells();
    let energy = match multiplier {
        None => kernel_energy(u, &all, kernel, Some(profile))?,
        Some(m) => {
            for i in 0..grid.len() {
                for j in 0..grid.len() {
                    if i != j && m(grid.center(i), grid.center(j)) < c {
                        return Err(Error::InvalidKernel(format!(
                            "multiplier drops below c = {c} between cells {i} and {j}"
                        )));
                    }
                }
            }
            kernel_energy_with_multiplier(u, &all, kernel, Some(profile), m)?
        }
    };
    let half = grid.volume(&grid.ball_cells(0.5)?);
    if half == 0.0 {
        return Err(Error::EmptyCellSet);
    }
    let constant = theorem_constant(p, grid.dim(), profile) / (c * half);
    let lhs = weighted_deviation(u, p, profile)?;
    Ok(InequalityReport::new(
        "kernel_floor",
        lhs,
        constant * energy,
        constant,
        tol,
        ReportMeta::for_field(u, p).with_profile(profile),
    ))
}

/// Robust truncated fractional inequality with constant
/// `C_robust (1-s) R^{p(1-s)}`.
pub fn check_ckk(
    u: &GridFunction,
    profile: &RadialProfile,
    p: f64,
    s: f64,
    r: f64,
    c_robust: f64,
    tol: f64,
) -> Result<InequalityReport> {
    if !(c_robust > 0.0 && c_robust.is_finite()) {
        return Err(Error::NonPositiveConstant(c_robust));
    }
    let kernel = KernelSpec::fractional(s, p, Some(r));
    kernel.validate()?;
    let constant = c_robust * (1.0 - s) * r.powf(p * (1.0 - s));
    let energy = kernel_energy(u, &u.grid().all_cells(), &kernel, Some(profile))?;
    let lhs = weighted_deviation(u, p, profile)?;
    Ok(InequalityReport::new(
        "ckk",
        lhs,
        constant * energy,
        constant,
        tol,
        kernel_meta(u, &kernel, profile),
    ))
}

/// Norms from the shift lemma on a counting-measure space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftLemmaReport {
    /// `‖f + a‖_p`.
    pub shifted_norm: f64,
    /// `‖f‖_p`.
    pub norm: f64,
    /// `½‖f‖_p / ‖f + a‖_p` (0 when `f = 0`).
    pub ratio: f64,
    pub pass: bool,
}

impl ShiftLemmaReport {
    pub fn to_report(self, p: f64, a: f64) -> InequalityReport {
        let meta = ReportMeta {
            p,
            profile: format!("a={a}"),
            ..ReportMeta::default()
        };
        let mut r = InequalityReport::new("shift_lemma", 0.5 * self.norm, self.shifted_norm, 0.5, TOL_EXACT, meta);
        r.ratio = self.ratio;
        r.pass = self.pass;
        r
    }
}

fn lp_norm(values: impl Iterator<Item = f64>, p: f64) -> f64 {
    let s = kahan_sum(values.map(|v| pow_abs(v, p)));
    if p == 1.0 {
        s
    } else if p == 2.0 {
        s.sqrt()
    } else {
        s.powf(1.0 / p)
    }
}

/// `‖f + a‖_p >= ½‖f‖_p` for mean-zero `f` (counting measure).
pub fn check_shift_lemma(f: &[f64], a: f64, p: f64) -> Result<ShiftLemmaReport> {
    check_p(p)?;
    let total = kahan_sum(f.iter().copied());
    let scale = kahan_sum(f.iter().map(|v| v.abs()));
    if total.abs() > 1e-12 * (1.0 + scale) {
        return Err(Error::NotMeanZero(total));
    }
    let norm = lp_norm(f.iter().copied(), p);
    let shifted_norm = lp_norm(f.iter().map(|v| v + a), p);
    let ratio = if norm == 0.0 {
        0.0
    } else {
        0.5 * norm / shifted_norm
    };
    Ok(ShiftLemmaReport {
        shifted_norm,
        norm,
        ratio,
        pass: shifted_norm >= 0.5 * norm,
    })
}

/// Truncation loss bound: full fractional energy `<= (3R)^{p(1-s)}` times the
/// energy restricted to `|x - y| <= 1/R`, on the whole ball.
pub fn check_chain_lemma(
    u: &GridFunction,
    p: f64,
    s: f64,
    r: f64,
    tol: f64,
) -> Result<InequalityReport> {
    check_chain_lemma_on(u, &u.grid().all_cells(), p, s, r, tol)
}

/// [`check_chain_lemma`] on an arbitrary cell set.
pub fn check_chain_lemma_on(
    u: &GridFunction,
    cells: &CellSet,
    p: f64,
    s: f64,
    r: f64,
    tol: f64,
) -> Result<InequalityReport> {
    let full = KernelSpec::fractional(s, p, None);
    let cut = KernelSpec::fractional(s, p, Some(r));
    cut.validate()?;
    let constant = (3.0 * r).powf(p * (1.0 - s));
    let lhs = kernel_energy(u, cells, &full, None)?;
    let rhs = constant * kernel_energy(u, cells, &cut, None)?;
    Ok(InequalityReport::new(
        "chain_lemma",
        lhs,
        rhs,
        constant,
        tol,
        ReportMeta::for_field(u, p).with_order(s, Some(r)),
    ))
}
