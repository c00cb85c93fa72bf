//! Energy functionals on the right-hand sides of the inequalities, and the
//! explicit constants attached to them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_p, pow_abs, CellSet, Grid, GridFunction};
use crate::sum::{kahan_sum, KahanSum};
use crate::weights::{LayerCakeMeasure, RadialProfile};

fn default_p() -> f64 {
    2.0
}

/// Which energy a check uses.
///
/// JSON form: `{"kind":"fractional","s":0.8,"p":2,"R":4}`. The exponent `p`
/// defaults to 2 and is usually overridden by the run's exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `∫ |∇u|^p`, forward differences.
    LocalGradient {
        #[serde(default = "default_p")]
        p: f64,
    },
    /// `|x - y|^{-d-ps}`, optionally restricted to `|x - y| <= 1/R`.
    Fractional {
        s: f64,
        #[serde(default = "default_p")]
        p: f64,
        #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
        r: Option<f64>,
    },
    /// A kernel bounded below by `c`. Energies are assembled with `K ≡ 1`
    /// (or a custom multiplier) and `c` enters only through the constants.
    ConstantFloor {
        c: f64,
        #[serde(default = "default_p")]
        p: f64,
    },
}

impl KernelSpec {
    pub fn local(p: f64) -> Self {
        KernelSpec::LocalGradient { p }
    }

    pub fn fractional(s: f64, p: f64, r: Option<f64>) -> Self {
        KernelSpec::Fractional { s, p, r }
    }

    pub fn floor(c: f64, p: f64) -> Self {
        KernelSpec::ConstantFloor { c, p }
    }

    pub fn p(&self) -> f64 {
        match *self {
            KernelSpec::LocalGradient { p }
            | KernelSpec::Fractional { p, .. }
            | KernelSpec::ConstantFloor { p, .. } => p,
        }
    }

    /// The same kernel with exponent `p`.
    pub fn with_p(&self, p: f64) -> Self {
        let mut k = self.clone();
        match &mut k {
            KernelSpec::LocalGradient { p: q }
            | KernelSpec::Fractional { p: q, .. }
            | KernelSpec::ConstantFloor { p: q, .. } => *q = p,
        }
        k
    }

    pub fn order(&self) -> Option<f64> {
        match *self {
            KernelSpec::Fractional { s, .. } => Some(s),
            _ => None,
        }
    }

    pub fn truncation(&self) -> Option<f64> {
        match *self {
            KernelSpec::Fractional { r, .. } => r,
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::LocalGradient { .. } => "local_gradient",
            KernelSpec::Fractional { .. } => "fractional",
            KernelSpec::ConstantFloor { .. } => "constant_floor",
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_p(self.p())?;
        match *self {
            KernelSpec::LocalGradient { .. } => Ok(()),
            KernelSpec::Fractional { s, r, .. } => {
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::InvalidKernel("s must lie in (0,1)".into()));
                }
                match r {
                    Some(r) if !(r >= 1.0 && r.is_finite()) => {
                        Err(Error::InvalidKernel("R must be >= 1".into()))
                    }
                    _ => Ok(()),
                }
            }
            KernelSpec::ConstantFloor { c, .. } => {
                if c > 0.0 && c.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidKernel("c must be > 0".into()))
                }
            }
        }
    }
}

/// Pair kernel values indexed by lattice offset `(|dx|, |dy|)`.
///
/// Translation invariant kernels only depend on the offset between the two
/// cells, so one table of `N × N` entries serves every pair.
pub(crate) struct OffsetKernel {
    n: usize,
    table: Vec<f64>,
}

impl OffsetKernel {
    pub(crate) fn new(grid: &Grid, kernel: &KernelSpec) -> Result<Self> {
        kernel.validate()?;
        let n = grid.n();
        let rows = if grid.dim() == 1 { 1 } else { n };
        let h = grid.h();
        let d = grid.dim() as f64;
        let mut table = vec![0.0; n * rows];
        for dy in 0..rows {
            for dx in 0..n {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let dist = h * (dx as f64).hypot(dy as f64);
                table[dy * n + dx] = match *kernel {
                    KernelSpec::Fractional { s, p, r } => {
                        if r.map_or(true, |r| dist <= 1.0 / r) {
                            dist.powf(-d - p * s)
                        } else {
                            0.0
                        }
                    }
                    KernelSpec::ConstantFloor { .. } => 1.0,
                    KernelSpec::LocalGradient { .. } => {
                        return Err(Error::InvalidKernel(
                            "local gradient energy has no pair kernel".into(),
                        ))
                    }
                };
            }
        }
        Ok(Self { n, table })
    }

    #[inline]
    pub(crate) fn get(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        let [ix, iy] = grid.lattice(i);
        let [jx, jy] = grid.lattice(j);
        self.table[iy.abs_diff(jy) * self.n + ix.abs_diff(jx)]
    }
}

/// `Σ_{cells} |∇_h u|^p w_i h^d` with forward differences.
///
/// A difference along an axis is used only when the forward neighbor is also
/// in `cells`; in two dimensions the gradient norm is Euclidean over the
/// available axes. `w_i = φ(x_i)` when a weight is given.
pub fn local_energy(
    u: &GridFunction,
    cells: &CellSet,
    p: f64,
    weight: Option<&RadialProfile>,
) -> Result<f64> {
    check_p(p)?;
    let grid = u.grid();
    let mask = cells.mask(grid);
    let vals = u.values();
    let h = grid.h();
    let mut acc = KahanSum::new();
    for &i in cells.indices() {
        let mut sq = 0.0;
        for axis in 0..grid.dim() {
            if let Some(j) = grid.forward_neighbor(i, axis) {
                if mask[j] {
                    let g = (vals[j] - vals[i]) / h;
                    sq += g * g;
                }
            }
        }
        if sq == 0.0 {
            continue;
        }
        let w = weight.map_or(1.0, |prof| prof.level(grid.radius(i)));
        let term = if p == 2.0 { sq } else { sq.sqrt().powf(p) };
        acc.add(term * w);
    }
    Ok(acc.value() * grid.cell_measure())
}

/// `Σ_{i ≠ j} |u_i - u_j|^p K(i, j) W_ij h^{2d}` over ordered pairs of `cells`.
///
/// `W_ij = min(φ_i, φ_j)` when a weight is given, else 1. Rows are summed in
/// parallel, each with its own compensated accumulator, and combined in
/// ascending row order.
pub fn pair_energy<K>(
    u: &GridFunction,
    cells: &CellSet,
    p: f64,
    kernel: K,
    weight: Option<&RadialProfile>,
) -> Result<f64>
where
    K: Fn(usize, usize) -> f64 + Sync,
{
    check_p(p)?;
    let grid = u.grid();
    let vals = u.values();
    let phi: Option<Vec<f64>> = weight.map(|prof| grid.weights(prof));
    let idx = cells.indices();
    let rows: Vec<f64> = idx
        .par_iter()
        .map(|&i| {
            let mut acc = KahanSum::new();
            for &j in idx {
                if j == i {
                    continue;
                }
                let diff = vals[i] - vals[j];
                if diff == 0.0 {
                    continue;
                }
                let w = phi.as_ref().map_or(1.0, |phi| phi[i].min(phi[j]));
                acc.add(pow_abs(diff, p) * kernel(i, j) * w);
            }
            acc.value()
        })
        .collect();
    let cell = grid.cell_measure();
    Ok(kahan_sum(rows) * cell * cell)
}

/// Energy of `u` on `cells` for any kernel kind.
///
/// Pair kernels use [`pair_energy`] with `K = 1` for `constant_floor`;
/// `local_gradient` dispatches to [`local_energy`].
pub fn kernel_energy(
    u: &GridFunction,
    cells: &CellSet,
    kernel: &KernelSpec,
    weight: Option<&RadialProfile>,
) -> Result<f64> {
    kernel.validate()?;
    if let KernelSpec::LocalGradient { p } = *kernel {
        return local_energy(u, cells, p, weight);
    }
    let grid = u.grid();
    let table = OffsetKernel::new(grid, kernel)?;
    pair_energy(u, cells, kernel.p(), |i, j| table.get(grid, i, j), weight)
}

/// [`kernel_energy`] with the pair kernel multiplied by a custom factor.
pub fn kernel_energy_with_multiplier<M>(
    u: &GridFunction,
    cells: &CellSet,
    kernel: &KernelSpec,
    weight: Option<&RadialProfile>,
    multiplier: M,
) -> Result<f64>
where
    M: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let grid = u.grid();
    let table = OffsetKernel::new(grid, kernel)?;
    pair_energy(
        u,
        cells,
        kernel.p(),
        |i, j| table.get(grid, i, j) * multiplier(grid.center(i), grid.center(j)),
        weight,
    )
}

/// `M = 8^p |B_1|/|B_{1/2}| Φ(0)/Φ(1/2)` with `|B_1|/|B_{1/2}| = 2^d`.
pub fn theorem_constant(p: f64, dim: usize, profile: &RadialProfile) -> f64 {
    8f64.powf(p) * 2f64.powi(dim as i32) * profile.center_ratio()
}

/// `2^{3p+d} Φ(0)/Φ(1/2) ĉ` for the weighted gradient inequality, where `ĉ`
/// is the unweighted constant in `∫_{B_r}|u - u_{B_r}|^p <= ĉ r^p ∫_{B_r}|∇u|^p`.
pub fn corollary_local_constant(
    p: f64,
    dim: usize,
    profile: &RadialProfile,
    c_hat: f64,
) -> Result<f64> {
    if !(c_hat > 0.0 && c_hat.is_finite()) {
        return Err(Error::NonPositiveConstant(c_hat));
    }
    Ok(2f64.powf(3.0 * p + dim as f64) * profile.center_ratio() * c_hat)
}

/// `∫ F(t) ν(dt) = Σ_j w_j F(t_j)`.
pub fn nu_integrated_rhs<F: FnMut(f64) -> f64>(f: F, measure: &LayerCakeMeasure) -> Result<f64> {
    measure.integrate(f)
}
