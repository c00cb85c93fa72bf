//! Empirical estimates of the unweighted constants the weighted inequalities
//! take as input.
//!
//! Each estimate is a maximum of observed ratios over atom balls, so it is a
//! lower bound for the true discrete constant; for `p = 2` the generalized
//! eigenproblem gives the exact discrete value where it is affordable.

use crate::error::{Error, Result};
use crate::forms::{kernel_energy, local_energy, theorem_constant, KernelSpec};
use crate::grid::{deviation_p, CellSet, Grid, GridFunction};
use crate::sharp::{
    assemble_ball_deviation, assemble_p2, ratio_ascent, smallest_nonzero_eigen, weight_support,
    AscentOptions, EigenOptions, EigenSolution, QuadraticFormPair, TracePoint,
};
use crate::suite::TestFunction;
use crate::weights::RadialProfile;

/// Balls above this many cells skip the dense pair-kernel eigensolve.
pub const PAIR_EIGEN_CAP: usize = 1200;
/// Ratio ascent is skipped above this many cells (local energies).
pub const ASCENT_CAP: usize = 1024;
/// Ratio ascent is skipped above this many cells (pair energies).
pub const PAIR_ASCENT_CAP: usize = 400;

fn ascent_options(run: bool) -> AscentOptions {
    AscentOptions {
        steps: if run { AscentOptions::default().steps } else { 0 },
        ..AscentOptions::default()
    }
}

/// Radii at which an unweighted constant is needed: the atoms of the layer
/// cake measure together with the whole ball.
pub fn atom_radii(profile: &RadialProfile) -> Vec<f64> {
    let mut r: Vec<f64> = profile.layer_cake().locations().collect();
    if r.last() != Some(&1.0) {
        r.push(1.0);
    }
    r
}

fn ratio_on(u: &GridFunction, ball: &CellSet, p: f64, energy: f64) -> Result<Option<f64>> {
    if energy <= 0.0 {
        return Ok(None);
    }
    Ok(Some(deviation_p(u, ball, p, None, None)? / energy))
}

/// `ĉ` in `Σ_{B_r}|u - u_{B_r}|^p <= ĉ r^p E_loc(u; B_r)`, maximized over the
/// atom radii of `profile`.
///
/// `p = 2` uses the smallest nonzero eigenvalue on each ball; other exponents
/// take the best of the suite and a ratio ascent started from the `p = 2`
/// eigenfunction.
pub fn estimate_c_hat(
    grid: &Grid,
    profile: &RadialProfile,
    p: f64,
    suite: &[TestFunction],
) -> Result<f64> {
    let mut best = 0.0f64;
    let local = KernelSpec::local(2.0);
    for r in atom_radii(profile) {
        let ball = grid.ball_cells(r)?;
        if ball.len() < 2 {
            continue;
        }
        let scale = r.powf(p);
        let pair = assemble_p2(grid, &ball, &local, None)?;
        let eig = smallest_nonzero_eigen(&pair, EigenOptions::default())?;
        if p == 2.0 {
            best = best.max(eig.constant() / scale);
            continue;
        }
        for t in suite {
            let e = local_energy(&t.u, &ball, p, None)?;
            if let Some(q) = ratio_on(&t.u, &ball, p, e)? {
                best = best.max(q / scale);
            }
        }
        let start = pair.extend(grid, &eig.vector);
        let asc = ratio_ascent(
            &start,
            &ball,
            None,
            |u| deviation_p(u, &ball, p, None, None),
            |u| local_energy(u, &ball, p, None),
            ascent_options(ball.len() <= ASCENT_CAP),
        )?;
        best = best.max(asc.ratio / scale);
    }
    Ok(best)
}

/// Unweighted nonlocal constant `C` with `Σ_{B_t}|u - u_{B_t}|^p <= C E_K(u; B_t)`
/// at every atom, as the largest ratio over the suite (and the `p = 2`
/// eigenvalue on balls of at most [`PAIR_EIGEN_CAP`] cells).
pub fn estimate_unweighted_constant(
    grid: &Grid,
    profile: &RadialProfile,
    kernel: &KernelSpec,
    suite: &[TestFunction],
) -> Result<f64> {
    let p = kernel.p();
    let mut best = 0.0f64;
    for t in profile.layer_cake().locations() {
        let ball = grid.ball_cells(t)?;
        if ball.len() < 2 {
            continue;
        }
        for f in suite {
            let e = kernel_energy(&f.u, &ball, kernel, None)?;
            if let Some(q) = ratio_on(&f.u, &ball, p, e)? {
                best = best.max(q);
            }
        }
        if p == 2.0 && ball.len() <= PAIR_EIGEN_CAP {
            let pair = assemble_p2(grid, &ball, kernel, None)?;
            best = best.max(smallest_nonzero_eigen(&pair, EigenOptions::default())?.constant());
        }
    }
    Ok(best)
}

/// `C_robust = M 3^{p(1-s0)} C0`, where `C0` is the largest observed
/// `Σ_{B_t}|u - u_{B_t}|^p / ((1-s0) t^{p s0} E_{s0}(u; B_t))` over the suite
/// and the atom radii, with the untruncated kernel of order `s0`.
pub fn estimate_robust_constant(
    grid: &Grid,
    profile: &RadialProfile,
    p: f64,
    s0: f64,
    suite: &[TestFunction],
) -> Result<f64> {
    let kernel = KernelSpec::fractional(s0, p, None);
    kernel.validate()?;
    let mut c0 = 0.0f64;
    for t in atom_radii(profile) {
        let ball = grid.ball_cells(t)?;
        if ball.len() < 2 {
            continue;
        }
        let scale = (1.0 - s0) * t.powf(p * s0);
        for f in suite {
            let e = kernel_energy(&f.u, &ball, &kernel, None)?;
            if let Some(q) = ratio_on(&f.u, &ball, p, e)? {
                c0 = c0.max(q / scale);
            }
        }
    }
    Ok(theorem_constant(p, grid.dim(), profile) * 3f64.powf(p * (1.0 - s0)) * c0)
}

/// Sharp constant observed for one weighted inequality.
#[derive(Debug, Clone)]
pub struct Empirical {
    /// Best constant found; NaN when the eigensolver failed.
    pub constant: f64,
    /// `"eigen"` or `"ascent"`.
    pub method: &'static str,
    pub residual: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

impl Empirical {
    fn from_eigen(outcome: Result<EigenSolution>) -> Result<Self> {
        match outcome {
            Ok(sol) => Ok(Self {
                constant: sol.constant(),
                method: "eigen",
                residual: Some(sol.residual),
                iterations: sol.iterations,
                converged: true,
                trace: sol.trace,
            }),
            Err(Error::NonConvergence {
                iterations,
                residual,
            }) => Ok(Self {
                constant: f64::NAN,
                method: "eigen",
                residual: Some(residual),
                iterations,
                converged: false,
                trace: Vec::new(),
            }),
            Err(e) => Err(e),
        }
    }

    fn ascent(constant: f64, iterations: usize) -> Self {
        Self {
            constant,
            method: "ascent",
            residual: None,
            iterations,
            converged: true,
            trace: Vec::new(),
        }
    }
}

/// Largest `lhs / rhs` over the suite and a ratio ascent from `start`
/// (just the ratio at `start` when `run_ascent` is false).
fn ascend<'g, L, R>(
    start: &GridFunction<'g>,
    cells: &CellSet,
    profile: &RadialProfile,
    suite: &[TestFunction<'g>],
    lhs: L,
    rhs: R,
    run_ascent: bool,
) -> Result<Empirical>
where
    L: Fn(&GridFunction<'g>) -> Result<f64>,
    R: Fn(&GridFunction<'g>) -> Result<f64>,
{
    let mut best = 0.0f64;
    for t in suite {
        let den = rhs(&t.u)?;
        if den > 0.0 {
            best = best.max(lhs(&t.u)? / den);
        }
    }
    let asc = ratio_ascent(start, cells, Some(profile), lhs, rhs, ascent_options(run_ascent))?;
    Ok(Empirical::ascent(best.max(asc.ratio), asc.accepted_steps))
}

fn eigen_start<'g>(grid: &'g Grid, pair: &QuadraticFormPair) -> Result<GridFunction<'g>> {
    let sol = smallest_nonzero_eigen(pair, EigenOptions::default())?;
    Ok(pair.extend(grid, &sol.vector))
}

/// Best constant in `Σ|u - u^φ|^p φ h^d <= C Σ_j w_j Σ_{B_{t_j}}|u - u_{B_{t_j}}|^p h^d`,
/// the layer-cake inequality with the tightest admissible functional.
pub fn empirical_theorem_constant<'g>(
    grid: &'g Grid,
    profile: &RadialProfile,
    p: f64,
    suite: &[TestFunction<'g>],
    opts: EigenOptions,
) -> Result<Empirical> {
    let pair = assemble_ball_deviation(grid, profile)?;
    if p == 2.0 {
        return Empirical::from_eigen(smallest_nonzero_eigen(&pair, opts));
    }
    let measure = profile.layer_cake();
    let balls: Vec<CellSet> = measure
        .locations()
        .map(|t| grid.ball_cells(t))
        .collect::<Result<_>>()?;
    let all = grid.all_cells();
    let rhs = |u: &GridFunction| -> Result<f64> {
        let mut it = balls.iter();
        let mut failure = None;
        let v = measure.integrate(|_| {
            let b = it.next().expect("one ball per atom");
            if b.is_empty() {
                return 0.0;
            }
            deviation_p(u, b, p, None, None).unwrap_or_else(|e| {
                failure = Some(e);
                0.0
            })
        })?;
        failure.map_or(Ok(v), Err)
    };
    let start = eigen_start(grid, &pair)?;
    ascend(
        &start,
        &pair.cells,
        profile,
        suite,
        |u| deviation_p(u, &all, p, Some(profile), None),
        rhs,
        pair.cells.len() <= ASCENT_CAP,
    )
}

/// Best constant in `Σ|u - u^φ|^p φ h^d <= C E_K(u; φ)` for a local or pair
/// kernel, on the support of the weight.
pub fn empirical_kernel_constant<'g>(
    grid: &'g Grid,
    profile: &RadialProfile,
    kernel: &KernelSpec,
    suite: &[TestFunction<'g>],
    opts: EigenOptions,
) -> Result<Empirical> {
    let p = kernel.p();
    let cells = weight_support(grid, profile);
    let local = matches!(kernel, KernelSpec::LocalGradient { .. });
    if p == 2.0 {
        let pair = assemble_p2(grid, &cells, kernel, Some(profile))?;
        return Empirical::from_eigen(smallest_nonzero_eigen(&pair, opts));
    }
    let start = eigen_start(grid, &assemble_p2(grid, &cells, &KernelSpec::local(2.0), Some(profile))?)?;
    ascend(
        &start,
        &cells,
        profile,
        suite,
        |u| deviation_p(u, &cells, p, Some(profile), None),
        |u| kernel_energy(u, &cells, kernel, Some(profile)),
        cells.len() <= if local { ASCENT_CAP } else { PAIR_ASCENT_CAP },
    )
}
