//! Empirical sharp constants.
//!
//! For `p = 2` the best constant in `Σ |u - u^φ|² φ h^d <= C · E(u)` is
//! `1/λ₁`, where `λ₁` is the smallest nonzero eigenvalue of `A v = λ D v`
//! with `A` the energy matrix and `D = diag(φ_i h^d)`. [`smallest_nonzero_eigen`]
//! computes it by block inverse iteration on `D^{-1/2} A D^{-1/2}` with the
//! constant direction deflated; [`dense_oracle_eigen`] is the independent
//! Jacobi cross-check. For other exponents [`ratio_ascent`] returns a lower
//! bound on the constant.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forms::{KernelSpec, OffsetKernel};
use crate::grid::{weighted_mean_on, CellSet, Grid, GridFunction};
use crate::linalg::{jacobi_eigen, orthonormalize, project_out, projected_cg, DenseMatrix};
use crate::sum::{dot, kahan_sum, norm, KahanSum};
use crate::weights::RadialProfile;

/// Largest system handed to the dense oracle.
pub const ORACLE_CAP: usize = 600;

/// The energy side of a quadratic form pair, indexed by position within the
/// pair's cell set.
#[derive(Debug, Clone)]
pub enum EnergyMatrix {
    /// Dense symmetric matrix (pair kernels).
    Dense(DenseMatrix),
    /// Weighted graph Laplacian `Σ_e c_e (x_a - x_b)²` (local gradient).
    Laplacian {
        n: usize,
        edges: Vec<(usize, usize, f64)>,
    },
    /// `Σ_j m_j Σ_{i ∈ B_j} (x_i - mean_{B_j} x)²`, the layer-cake sum of ball
    /// deviations. `m_j` already includes `h^d`.
    BallDeviation {
        n: usize,
        balls: Vec<(f64, Vec<usize>)>,
    },
}

impl EnergyMatrix {
    pub fn dim(&self) -> usize {
        match self {
            EnergyMatrix::Dense(m) => m.dim(),
            EnergyMatrix::Laplacian { n, .. } | EnergyMatrix::BallDeviation { n, .. } => *n,
        }
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            EnergyMatrix::Dense(m) => m.apply(x, y),
            EnergyMatrix::Laplacian { edges, .. } => {
                y.iter_mut().for_each(|v| *v = 0.0);
                for &(a, b, c) in edges {
                    let f = c * (x[a] - x[b]);
                    y[a] += f;
                    y[b] -= f;
                }
            }
            EnergyMatrix::BallDeviation { balls, .. } => {
                y.iter_mut().for_each(|v| *v = 0.0);
                for (m, idx) in balls {
                    let mean = kahan_sum(idx.iter().map(|&i| x[i])) / idx.len() as f64;
                    for &i in idx {
                        y[i] += m * (x[i] - mean);
                    }
                }
            }
        }
    }

    /// `xᵀ A x`.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        match self {
            EnergyMatrix::Dense(_) => {
                let mut y = vec![0.0; x.len()];
                self.apply(x, &mut y);
                dot(x, &y)
            }
            EnergyMatrix::Laplacian { edges, .. } => {
                kahan_sum(edges.iter().map(|&(a, b, c)| c * (x[a] - x[b]).powi(2)))
            }
            EnergyMatrix::BallDeviation { balls, .. } => {
                let mut acc = KahanSum::new();
                for (m, idx) in balls {
                    let mean = kahan_sum(idx.iter().map(|&i| x[i])) / idx.len() as f64;
                    acc.add(m * kahan_sum(idx.iter().map(|&i| (x[i] - mean).powi(2))));
                }
                acc.value()
            }
        }
    }

    /// Materializes the matrix column by column.
    pub fn to_dense(&self) -> DenseMatrix {
        if let EnergyMatrix::Dense(m) = self {
            return m.clone();
        }
        let n = self.dim();
        let mut out = DenseMatrix::zeros(n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        out
    }
}

/// Energy matrix `A` and diagonal mass `D` over a set of cells, for `p = 2`.
#[derive(Debug, Clone)]
pub struct QuadraticFormPair {
    pub cells: CellSet,
    pub energy: EnergyMatrix,
    /// Diagonal of `D`: `φ(x_i) h^d`.
    pub mass: Vec<f64>,
}

impl QuadraticFormPair {
    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    /// Restricts a grid function to the pair's cells.
    pub fn restrict(&self, u: &GridFunction) -> Vec<f64> {
        self.cells.indices().iter().map(|&i| u.values()[i]).collect()
    }

    /// Extends a vector over the pair's cells to the whole grid, zero elsewhere.
    pub fn extend<'g>(&self, grid: &'g Grid, x: &[f64]) -> GridFunction<'g> {
        let mut values = vec![0.0; grid.len()];
        for (&i, &v) in self.cells.indices().iter().zip(x) {
            values[i] = v;
        }
        GridFunction::new(grid, values).expect("finite values")
    }
}

fn mass_diagonal(grid: &Grid, cells: &CellSet, weight: Option<&RadialProfile>) -> Vec<f64> {
    let hd = grid.cell_measure();
    cells
        .indices()
        .iter()
        .map(|&i| weight.map_or(1.0, |w| w.level(grid.radius(i))) * hd)
        .collect()
}

/// Assembles `A` with `uᵀ A u` equal to the `p = 2` energy of the kernel on
/// `cells` (weighted by `min(φ_i, φ_j)` or `φ_i` when a weight is given),
/// and `D = diag(φ_i h^d)` (`φ ≡ 1` without a weight).
pub fn assemble_p2(
    grid: &Grid,
    cells: &CellSet,
    kernel: &KernelSpec,
    weight: Option<&RadialProfile>,
) -> Result<QuadraticFormPair> {
    kernel.validate()?;
    if kernel.p() != 2.0 {
        return Err(Error::InvalidKernel(format!(
            "quadratic assembly needs p = 2, got {}",
            kernel.p()
        )));
    }
    if cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let idx = cells.indices();
    let n = idx.len();
    let phi: Vec<f64> = idx
        .iter()
        .map(|&i| weight.map_or(1.0, |w| w.level(grid.radius(i))))
        .collect();
    let energy = match kernel {
        KernelSpec::LocalGradient { .. } => {
            let mut local = vec![usize::MAX; grid.len()];
            for (a, &i) in idx.iter().enumerate() {
                local[i] = a;
            }
            let scale = grid.cell_measure() / (grid.h() * grid.h());
            let mut edges = Vec::new();
            for (a, &i) in idx.iter().enumerate() {
                for axis in 0..grid.dim() {
                    if let Some(j) = grid.forward_neighbor(i, axis) {
                        if local[j] != usize::MAX && phi[a] > 0.0 {
                            edges.push((a, local[j], phi[a] * scale));
                        }
                    }
                }
            }
            EnergyMatrix::Laplacian { n, edges }
        }
        _ => {
            let table = OffsetKernel::new(grid, kernel)?;
            let hd = grid.cell_measure();
            let mut m = DenseMatrix::zeros(n);
            for a in 0..n {
                let mut diag = KahanSum::new();
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    let v = 2.0 * table.get(grid, idx[a], idx[b]) * phi[a].min(phi[b]) * hd * hd;
                    m[(a, b)] = -v;
                    diag.add(v);
                }
                m[(a, a)] = diag.value();
            }
            EnergyMatrix::Dense(m)
        }
    };
    Ok(QuadraticFormPair {
        cells: cells.clone(),
        energy,
        mass: mass_diagonal(grid, cells, weight),
    })
}

/// Cells where the weight is positive.
pub fn weight_support(grid: &Grid, profile: &RadialProfile) -> CellSet {
    let idx = (0..grid.len())
        .filter(|&i| profile.level(grid.radius(i)) > 0.0)
        .collect();
    CellSet::new(grid, idx).expect("indices are in range")
}

/// The pair for the layer-cake inequality at `p = 2`: `A` is
/// `Σ_j w_j Σ_{B_{t_j}} (u - u_{B_{t_j}})² h^d` and `D = diag(φ_i h^d)`, both
/// restricted to the support of the weight.
pub fn assemble_ball_deviation(grid: &Grid, profile: &RadialProfile) -> Result<QuadraticFormPair> {
    let cells = weight_support(grid, profile);
    let mut local = vec![usize::MAX; grid.len()];
    for (a, &i) in cells.indices().iter().enumerate() {
        local[i] = a;
    }
    let hd = grid.cell_measure();
    let mut balls = Vec::new();
    for (t, w) in profile.layer_cake().atoms() {
        let ball = grid.ball_cells(t)?;
        if ball.is_empty() || w == 0.0 {
            continue;
        }
        let members = ball
            .indices()
            .iter()
            .map(|&i| local[i])
            .filter(|&a| a != usize::MAX)
            .collect();
        balls.push((w * hd, members));
    }
    Ok(QuadraticFormPair {
        energy: EnergyMatrix::BallDeviation {
            n: cells.len(),
            balls,
        },
        mass: mass_diagonal(grid, &cells, Some(profile)),
        cells,
    })
}

/// Tuning for [`smallest_nonzero_eigen`].
#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// Stop when `‖Av - λDv‖ <= tol ‖Av‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Block size of the subspace iteration.
    pub block: usize,
    /// Record `(iteration, λ, residual)` per outer iteration.
    pub trace: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 300,
            block: 4,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub lambda: f64,
    pub residual: f64,
}

/// Smallest nonzero generalized eigenpair.
#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub lambda: f64,
    /// `D`-normalized, `D`-orthogonal to constants, over the pair's cells.
    pub vector: Vec<f64>,
    /// `‖Av - λDv‖ / ‖Av‖`.
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

impl EigenSolution {
    /// The sharp constant `1/λ`.
    pub fn constant(&self) -> f64 {
        1.0 / self.lambda
    }
}

/// Writes a convergence trace as CSV.
pub fn write_trace<W: Write>(out: W, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "lambda", "residual"])?;
    for t in trace {
        w.write_record([
            t.iteration.to_string(),
            t.lambda.to_string(),
            t.residual.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Smallest `λ > 0` with `A v = λ D v`.
///
/// Works on `B = D^{-1/2} A D^{-1/2}` with the direction `D^{1/2} 1` deflated.
/// Each outer step solves `B Y = X` column by column with projected conjugate
/// gradients, re-orthonormalizes, and performs a Rayleigh–Ritz step on the
/// block, so clustered or repeated eigenvalues do not stall convergence.
/// The cell graph is assumed connected.
pub fn smallest_nonzero_eigen(pair: &QuadraticFormPair, opts: EigenOptions) -> Result<EigenSolution> {
    let n = pair.dim();
    if n < 2 {
        return Err(Error::InvalidGrid("need at least two cells".into()));
    }
    if let Some(i) = pair.mass.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::InvalidGrid(format!("mass vanishes at cell {i}")));
    }
    let sqrt_mass: Vec<f64> = pair.mass.iter().map(|m| m.sqrt()).collect();
    let q0 = {
        let nrm = norm(&sqrt_mass);
        vec![sqrt_mass.iter().map(|v| v / nrm).collect::<Vec<f64>>()]
    };
    let apply_b = |x: &[f64], y: &mut [f64]| {
        let z: Vec<f64> = x.iter().zip(&sqrt_mass).map(|(a, s)| a / s).collect();
        pair.energy.apply(&z, y);
        for (yi, s) in y.iter_mut().zip(&sqrt_mass) {
            *yi /= s;
        }
    };

    let k = opts.block.clamp(1, n - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut block: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&mut block, &q0);

    let cg_cap = 10 * n + 100;
    let mut trace = Vec::new();
    let mut last_residual = f64::INFINITY;
    // Shift for the inverse iteration, kept below λ₁ by a Kato–Temple bound.
    // A shifted solve that fails to converge means the shift overshot; the
    // step is then redone unshifted.
    let mut shift = 0.0f64;
    let solve = |block: &[Vec<f64>], sigma: f64| -> Option<Vec<Vec<f64>>> {
        let shifted = |x: &[f64], y: &mut [f64]| {
            apply_b(x, y);
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi -= sigma * xi;
            }
        };
        block
            .iter()
            .map(|x| {
                let (y, out) = projected_cg(shifted, x, &q0, 1e-13, cg_cap);
                (sigma == 0.0 || out.relative_residual <= 1e-8).then_some(y)
            })
            .collect()
    };
    for iteration in 1..=opts.max_iter {
        let mut next = match solve(&block, shift) {
            Some(next) => next,
            None => {
                shift = 0.0;
                solve(&block, 0.0).expect("unshifted solves always return")
            }
        };
        let ok = orthonormalize(&mut next, &q0);
        // refill collapsed directions so the block keeps its size
        for (col, good) in next.iter_mut().zip(ok) {
            if !good {
                *col = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            }
        }
        orthonormalize(&mut next, &q0);

        let bnext: Vec<Vec<f64>> = next
            .iter()
            .map(|x| {
                let mut y = vec![0.0; n];
                apply_b(x, &mut y);
                project_out(&mut y, &q0);
                y
            })
            .collect();
        let mut h = DenseMatrix::zeros(k);
        for a in 0..k {
            for b in a..k {
                let v = 0.5 * (dot(&next[a], &bnext[b]) + dot(&next[b], &bnext[a]));
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        let ritz = jacobi_eigen(&h, 1e-15, 100).ok_or(Error::NonConvergence {
            iterations: iteration,
            residual: last_residual,
        })?;
        let combine = |src: &[Vec<f64>], col: usize| -> Vec<f64> {
            (0..n)
                .map(|i| kahan_sum((0..k).map(|a| src[a][i] * ritz.vectors[(a, col)])))
                .collect()
        };
        block = (0..k).map(|c| combine(&next, c)).collect();
        let bx = combine(&bnext, 0);
        let lambda = ritz.values[0];

        // residual in the original coordinates: A v - λ D v = D^{1/2} (B x - λ x)
        let r: Vec<f64> = (0..n)
            .map(|i| sqrt_mass[i] * (bx[i] - lambda * block[0][i]))
            .collect();
        let av: Vec<f64> = (0..n).map(|i| sqrt_mass[i] * bx[i]).collect();
        let residual = norm(&r) / norm(&av);
        last_residual = residual;
        if k > 1 && residual < 1e-2 {
            let rho2: f64 = (0..n)
                .map(|i| (bx[i] - lambda * block[0][i]).powi(2))
                .sum();
            let gap = ritz.values[1] - lambda;
            shift = if gap > 0.0 {
                (lambda - rho2 / gap - 0.1 * gap).max(0.0)
            } else {
                0.0
            };
        }
        if opts.trace {
            trace.push(TracePoint {
                iteration,
                lambda,
                residual,
            });
        }
        if residual <= opts.tol {
            let vector: Vec<f64> = block[0]
                .iter()
                .zip(&sqrt_mass)
                .map(|(x, s)| x / s)
                .collect();
            return Ok(EigenSolution {
                lambda,
                vector: canonical_sign(vector),
                residual,
                iterations: iteration,
                trace,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: last_residual,
    })
}

/// Fixes the sign so the entry of largest magnitude is positive.
fn canonical_sign(mut v: Vec<f64>) -> Vec<f64> {
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Full spectrum of `D^{-1/2} A D^{-1/2}` by cyclic Jacobi, ascending.
pub fn dense_oracle_eigen(pair: &QuadraticFormPair) -> Result<Vec<f64>> {
    let n = pair.dim();
    if n > ORACLE_CAP {
        return Err(Error::SizeCap {
            size: n,
            cap: ORACLE_CAP,
        });
    }
    let a = pair.energy.to_dense();
    let mut b = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = a[(i, j)] / (pair.mass[i] * pair.mass[j]).sqrt();
        }
    }
    let eig = jacobi_eigen(&b, 1e-12, 200).ok_or(Error::NonConvergence {
        iterations: 200,
        residual: f64::NAN,
    })?;
    Ok(eig.values)
}

/// Sharp constant of `Σ |u - u^φ|² φ h^d <= C E(u)` on `cells`.
#[derive(Debug, Clone)]
pub struct SharpEstimate {
    pub constant: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
}

impl From<&EigenSolution> for SharpEstimate {
    fn from(s: &EigenSolution) -> Self {
        Self {
            constant: s.constant(),
            lambda: s.lambda,
            residual: s.residual,
            iterations: s.iterations,
            trace: s.trace.clone(),
        }
    }
}

/// `1/λ₁` for the `p = 2` form of `kernel` on `cells`.
pub fn sharp_constant_p2(
    grid: &Grid,
    cells: &CellSet,
    kernel: &KernelSpec,
    weight: Option<&RadialProfile>,
    opts: EigenOptions,
) -> Result<SharpEstimate> {
    let pair = assemble_p2(grid, cells, &kernel.with_p(2.0), weight)?;
    Ok(SharpEstimate::from(&smallest_nonzero_eigen(&pair, opts)?))
}

/// Tuning for [`ratio_ascent`].
#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub steps: usize,
    /// Step length relative to `‖u‖`.
    pub step_size: f64,
    /// Forward-difference increment relative to `‖u‖`.
    pub fd_step: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            steps: 50,
            step_size: 0.05,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AscentResult<'g> {
    pub ratio: f64,
    pub initial_ratio: f64,
    pub maximizer: GridFunction<'g>,
    pub accepted_steps: usize,
}

/// Locally maximizes `lhs(u) / rhs(u)` over fields supported on `cells` by
/// normalized forward-difference gradient ascent.
///
/// After every step `u` is re-centered to (weighted) mean zero on `cells` and
/// rescaled to unit norm; both functionals must be invariant under shifts and
/// homogeneous of the same degree. A step that lowers the ratio is rejected
/// and halves the step length. The best ratio seen is returned, so the result
/// never falls below the ratio at `u0`.
pub fn ratio_ascent<'g, L, R>(
    u0: &GridFunction<'g>,
    cells: &CellSet,
    weight: Option<&RadialProfile>,
    lhs: L,
    rhs: R,
    opts: AscentOptions,
) -> Result<AscentResult<'g>>
where
    L: Fn(&GridFunction<'g>) -> Result<f64>,
    R: Fn(&GridFunction<'g>) -> Result<f64>,
{
    let grid = u0.grid();
    if cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let ratio_of = |u: &GridFunction<'g>| -> Result<Option<f64>> {
        let den = rhs(u)?;
        if den > 0.0 {
            Ok(Some(lhs(u)? / den))
        } else {
            Ok(None)
        }
    };
    let initial_ratio = ratio_of(u0)?
        .ok_or_else(|| Error::Ascent("right-hand side vanishes at the starting point".into()))?;

    let idx = cells.indices();
    let normalize = |values: &mut Vec<f64>| -> Result<()> {
        let u = GridFunction::new(grid, values.clone())?;
        let c = match weight {
            Some(w) => weighted_mean_on(&u, cells, w)?,
            None => crate::grid::mean(&u, cells)?,
        };
        for &i in idx {
            values[i] -= c;
        }
        let nrm = kahan_sum(idx.iter().map(|&i| values[i] * values[i])).sqrt();
        if nrm > 0.0 {
            for &i in idx {
                values[i] /= nrm;
            }
        }
        Ok(())
    };

    let mut current = u0.values().to_vec();
    normalize(&mut current)?;
    let mut u = GridFunction::new(grid, current.clone())?;
    let mut ratio = match ratio_of(&u)? {
        Some(r) => r,
        None => return Err(Error::Ascent("starting point is constant on the cells".into())),
    };
    let mut best = if ratio >= initial_ratio {
        (ratio, u.clone())
    } else {
        (initial_ratio, u0.clone())
    };
    let mut eta = opts.step_size;
    let mut accepted = 0;

    for _ in 0..opts.steps {
        let eps = opts.fd_step;
        let mut grad = vec![0.0; grid.len()];
        let mut probe = current.clone();
        for &i in idx {
            probe[i] += eps;
            let pu = GridFunction::new(grid, probe.clone())?;
            if let Some(r) = ratio_of(&pu)? {
                grad[i] = (r - ratio) / eps;
            }
            probe[i] = current[i];
        }
        let gnorm = kahan_sum(grad.iter().map(|g| g * g)).sqrt();
        if !(gnorm > 0.0) {
            break;
        }
        let mut trial = current.clone();
        for &i in idx {
            trial[i] += eta * grad[i] / gnorm;
        }
        normalize(&mut trial)?;
        let tu = GridFunction::new(grid, trial.clone())?;
        match ratio_of(&tu)? {
            Some(r) if r > ratio => {
                current = trial;
                ratio = r;
                u = tu;
                accepted += 1;
                if ratio > best.0 {
                    best = (ratio, u.clone());
                }
            }
            Some(_) => eta *= 0.5,
            None => {
                // constant on the cells: nudge along the first coordinate
                for &i in idx {
                    current[i] += 1e-3 * grid.center(i)[0];
                }
                normalize(&mut current)?;
                u = GridFunction::new(grid, current.clone())?;
                ratio = ratio_of(&u)?.unwrap_or(0.0);
            }
        }
    }
    Ok(AscentResult {
        ratio: best.0,
        initial_ratio,
        maximizer: best.1,
        accepted_steps: accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{kernel_energy, local_energy};
    use crate::grid::deviation_p;

    #[test]
    fn local_assembly_is_scaled_path_laplacian() {
        let g = Grid::new(1, 4).unwrap();
        let pair = assemble_p2(&g, &g.all_cells(), &KernelSpec::local(2.0), None).unwrap();
        let a = pair.energy.to_dense();
        let inv_h = 1.0 / g.h();
        let expected = DenseMatrix::from_rows(&[
            vec![inv_h, -inv_h, 0.0, 0.0],
            vec![-inv_h, 2.0 * inv_h, -inv_h, 0.0],
            vec![0.0, -inv_h, 2.0 * inv_h, -inv_h],
            vec![0.0, 0.0, -inv_h, inv_h],
        ]);
        assert_eq!(a, expected);
        let mut y = vec![0.0; 4];
        pair.energy.apply(&[1.0; 4], &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(pair.mass, vec![0.5; 4]);
    }

    #[test]
    fn fractional_assembly_signs() {
        let g = Grid::new(1, 8).unwrap();
        let pair = assemble_p2(&g, &g.all_cells(), &KernelSpec::fractional(0.5, 2.0, None), None)
            .unwrap();
        let a = pair.energy.to_dense();
        assert!(a.asymmetry() < 1e-12);
        for i in 0..8 {
            assert!(a[(i, i)] > 0.0);
            for j in 0..8 {
                if i != j {
                    assert!(a[(i, j)] < 0.0);
                }
            }
            let row: f64 = a.row(i).iter().sum();
            assert!(row.abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_form_matches_energies() {
        let g = Grid::new(2, 8).unwrap();
        let all = g.all_cells();
        let w = RadialProfile::step(vec![0.75], vec![2.0, 1.0]).unwrap();
        let u = GridFunction::from_fn(&g, |x| (2.0 * x[0]).sin() + x[1] * x[1]).unwrap();
        for kernel in [
            KernelSpec::local(2.0),
            KernelSpec::fractional(0.4, 2.0, Some(2.0)),
            KernelSpec::floor(1.0, 2.0),
        ] {
            for weight in [None, Some(&w)] {
                let pair = assemble_p2(&g, &all, &kernel, weight).unwrap();
                let x = pair.restrict(&u);
                let q = pair.energy.quadratic(&x);
                let e = kernel_energy(&u, &all, &kernel, weight).unwrap();
                assert!((q - e).abs() <= 1e-12 * e, "{kernel:?}: {q} vs {e}");
            }
        }
    }

    #[test]
    fn ball_deviation_matches_layer_cake_sum() {
        let g = Grid::new(1, 32).unwrap();
        let w = RadialProfile::step(vec![0.6, 0.8], vec![3.0, 2.0, 1.0]).unwrap();
        let pair = assemble_ball_deviation(&g, &w).unwrap();
        let u = GridFunction::from_fn(&g, |x| x[0].exp()).unwrap();
        let direct = w
            .layer_cake()
            .integrate(|t| deviation_p(&u, &g.ball_cells(t).unwrap(), 2.0, None, None).unwrap())
            .unwrap();
        let q = pair.energy.quadratic(&pair.restrict(&u));
        assert!((q - direct).abs() < 1e-13 * direct);
    }

    #[test]
    fn clustered_spectrum_converges_to_oracle() {
        // λ₁ sits just below an eigenvalue of high multiplicity
        let g = Grid::new(1, 32).unwrap();
        let w = RadialProfile::step(
            vec![0.3, 0.55, 0.65, 0.75, 0.9],
            vec![3.0, 2.5, 2.0, 1.5, 1.0, 0.5],
        )
        .unwrap();
        let pair = assemble_ball_deviation(&g, &w).unwrap();
        let oracle = dense_oracle_eigen(&pair).unwrap();
        assert!(oracle[2] - oracle[1] < 0.03 * oracle[1]);
        let sol = smallest_nonzero_eigen(&pair, EigenOptions::default()).unwrap();
        assert!((sol.lambda - oracle[1]).abs() < 1e-10 * oracle[1]);
    }

    #[test]
    fn path_graph_spectrum() {
        // A = path Laplacian of P4, D = I
        let pair = QuadraticFormPair {
            cells: CellSet::new(&Grid::new(1, 4).unwrap(), vec![0, 1, 2, 3]).unwrap(),
            energy: EnergyMatrix::Laplacian {
                n: 4,
                edges: vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
            },
            mass: vec![1.0; 4],
        };
        let spectrum = dense_oracle_eigen(&pair).unwrap();
        for (k, v) in spectrum.iter().enumerate() {
            let closed = 2.0 * (1.0 - (k as f64 * std::f64::consts::PI / 4.0).cos());
            assert!((v - closed).abs() < 1e-12);
        }
        let sol = smallest_nonzero_eigen(&pair, EigenOptions::default()).unwrap();
        assert!((sol.lambda - spectrum[1]).abs() < 1e-10);
    }

    #[test]
    fn grid_laplacian_closed_form() {
        // N = 4, h = 0.5: λ₁ = (2/h²)(1 - cos(π/4))
        let g = Grid::new(1, 4).unwrap();
        let pair = assemble_p2(&g, &g.all_cells(), &KernelSpec::local(2.0), None).unwrap();
        let closed = 2.0 / (g.h() * g.h()) * (1.0 - (std::f64::consts::PI / 4.0).cos());
        let oracle = dense_oracle_eigen(&pair).unwrap();
        assert!(oracle[0].abs() < 1e-12);
        assert!((oracle[1] - closed).abs() < 1e-10);
        let sol = smallest_nonzero_eigen(&pair, EigenOptions::default()).unwrap();
        assert!((sol.lambda - closed).abs() < 1e-10);
    }

    #[test]
    fn eigen_residual_and_normalization() {
        let g = Grid::new(2, 12).unwrap();
        let w = RadialProfile::step(vec![0.75], vec![2.0, 1.0]).unwrap();
        let pair = assemble_p2(&g, &g.all_cells(), &KernelSpec::local(2.0), Some(&w)).unwrap();
        let sol = smallest_nonzero_eigen(&pair, EigenOptions::default()).unwrap();
        let n = pair.dim();
        let mut av = vec![0.0; n];
        pair.energy.apply(&sol.vector, &mut av);
        let r: Vec<f64> = (0..n)
            .map(|i| av[i] - sol.lambda * pair.mass[i] * sol.vector[i])
            .collect();
        assert!(norm(&r) <= 1e-8 * norm(&av));
        let dnorm: f64 = (0..n).map(|i| pair.mass[i] * sol.vector[i].powi(2)).sum();
        assert!((dnorm - 1.0).abs() < 1e-10);
        let dmean: f64 = (0..n).map(|i| pair.mass[i] * sol.vector[i]).sum();
        assert!(dmean.abs() < 1e-10);
        // degenerate (x/y symmetric) pair: oracle agrees
        let oracle = dense_oracle_eigen(&pair).unwrap();
        assert!((sol.lambda - oracle[1]).abs() < 1e-8 * oracle[1]);
    }

    #[test]
    fn oracle_size_cap() {
        let g = Grid::new(2, 32).unwrap();
        let pair = assemble_p2(&g, &g.all_cells(), &KernelSpec::local(2.0), None).unwrap();
        assert!(pair.dim() > ORACLE_CAP);
        assert!(matches!(dense_oracle_eigen(&pair), Err(Error::SizeCap { .. })));
    }

    #[test]
    fn assembly_rejects_other_exponents() {
        let g = Grid::new(1, 8).unwrap();
        assert!(assemble_p2(&g, &g.all_cells(), &KernelSpec::local(3.0), None).is_err());
    }

    #[test]
    fn weighted_and_unweighted_sharp_constants_are_positive() {
        let g = Grid::new(1, 64).unwrap();
        let all = g.all_cells();
        let w = RadialProfile::step(vec![0.75], vec![2.0, 1.0]).unwrap();
        let k = KernelSpec::local(2.0);
        let a = sharp_constant_p2(&g, &all, &k, None, EigenOptions::default()).unwrap();
        let b = sharp_constant_p2(&g, &all, &k, Some(&w), EigenOptions::default()).unwrap();
        assert!(a.constant.is_finite() && a.constant > 0.0);
        assert!(b.constant.is_finite() && b.constant > 0.0);
    }

    #[test]
    fn trace_is_recorded() {
        let g = Grid::new(1, 32).unwrap();
        let pair = assemble_p2(&g, &g.all_cells(), &KernelSpec::local(2.0), None).unwrap();
        let opts = EigenOptions {
            trace: true,
            ..EigenOptions::default()
        };
        let sol = smallest_nonzero_eigen(&pair, opts).unwrap();
        assert_eq!(sol.trace.len(), sol.iterations);
        let mut buf = Vec::new();
        write_trace(&mut buf, &sol.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,lambda,residual\n"));
        assert_eq!(text.lines().count(), sol.iterations + 1);
    }

    fn local_ratio_parts(
        p: f64,
    ) -> (
        impl Fn(&GridFunction) -> Result<f64>,
        impl Fn(&GridFunction) -> Result<f64>,
    ) {
        (
            move |u: &GridFunction| deviation_p(u, &u.grid().all_cells(), p, None, None),
            move |u: &GridFunction| local_energy(u, &u.grid().all_cells(), p, None),
        )
    }

    #[test]
    fn ascent_zero_steps_is_identity() {
        let g = Grid::new(1, 16).unwrap();
        let u0 = GridFunction::from_fn(&g, |x| x[0] + 0.3 * x[0] * x[0]).unwrap();
        let (l, r) = local_ratio_parts(2.0);
        let direct = l(&u0).unwrap() / r(&u0).unwrap();
        let opts = AscentOptions {
            steps: 0,
            ..AscentOptions::default()
        };
        let res = ratio_ascent(&u0, &g.all_cells(), None, l, r, opts).unwrap();
        assert!((res.ratio - direct).abs() < 1e-12 * direct);
        assert_eq!(res.accepted_steps, 0);
    }

    #[test]
    fn ascent_matches_eigen_at_p2() {
        let g = Grid::new(1, 32).unwrap();
        let all = g.all_cells();
        let pair = assemble_p2(&g, &all, &KernelSpec::local(2.0), None).unwrap();
        let sol = smallest_nonzero_eigen(&pair, EigenOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy: Vec<f64> = sol
            .vector
            .iter()
            .map(|v| v + 0.2 * rng.gen_range(-1.0..1.0))
            .collect();
        let u0 = GridFunction::new(&g, noisy).unwrap();
        let (l, r) = local_ratio_parts(2.0);
        let opts = AscentOptions {
            steps: 200,
            ..AscentOptions::default()
        };
        let res = ratio_ascent(&u0, &all, None, l, r, opts).unwrap();
        assert!(res.ratio <= sol.constant() * (1.0 + 1e-9));
        assert!(res.ratio >= 0.98 * sol.constant(), "{} vs {}", res.ratio, sol.constant());
        assert!(res.ratio > res.initial_ratio);
    }

    #[test]
    fn ascent_rejects_constant_start() {
        let g = Grid::new(1, 8).unwrap();
        let u0 = GridFunction::constant(&g, 1.0);
        let (l, r) = local_ratio_parts(2.0);
        assert!(ratio_ascent(&u0, &g.all_cells(), None, l, r, AscentOptions::default()).is_err());
    }
}
