//! Uniform Cartesian discretization of the unit ball in one or two dimensions.
//!
//! Cells are the squares (or intervals) of width `h = 2/N` covering
//! `[-1, 1]^d`; a cell belongs to the grid when its center lies in the open
//! unit ball. All integrals use midpoint quadrature and all reductions run in
//! ascending cell order through [`KahanSum`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum::KahanSum;
use crate::weights::RadialProfile;

#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    n: usize,
    h: f64,
    centers: Vec<[f64; 2]>,
    norms: Vec<f64>,
    lattice: Vec<[usize; 2]>,
    lookup: Vec<Option<usize>>,
}

impl Grid {
    /// `dim ∈ {1, 2}`, `n >= 4` cells per axis, `n` even.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension {dim} unsupported (expected 1 or 2)"
            )));
        }
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "N = {n} must be even and at least 4"
            )));
        }
        let h = 2.0 / n as f64;
        let coord = |i: usize| -1.0 + (i as f64 + 0.5) * h;
        let rows = if dim == 1 { 1 } else { n };
        let mut centers = Vec::new();
        let mut norms = Vec::new();
        let mut lattice = Vec::new();
        let mut lookup = vec![None; n * rows];
        for iy in 0..rows {
            for ix in 0..n {
                let c = if dim == 1 {
                    [coord(ix), 0.0]
                } else {
                    [coord(ix), coord(iy)]
                };
                let r = c[0].hypot(c[1]);
                if r < 1.0 {
                    lookup[iy * n + ix] = Some(centers.len());
                    centers.push(c);
                    norms.push(r);
                    lattice.push([ix, iy]);
                }
            }
        }
        Ok(Self {
            dim,
            n,
            h,
            centers,
            norms,
            lattice,
            lookup,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis on `[-1, 1]`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `h^d`.
    pub fn cell_measure(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Center coordinates of cell `i` (length `d`).
    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i][..self.dim]
    }

    /// Euclidean norm of the center of cell `i`.
    pub fn radius(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.centers[i], self.centers[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Lattice position `[ix, iy]` of cell `i` (`iy = 0` in one dimension).
    pub fn lattice(&self, i: usize) -> [usize; 2] {
        self.lattice[i]
    }

    /// The cell one step further along `axis`, if it is in the grid.
    pub fn forward_neighbor(&self, i: usize, axis: usize) -> Option<usize> {
        debug_assert!(axis < self.dim);
        let [ix, iy] = self.lattice[i];
        let (jx, jy) = if axis == 0 { (ix + 1, iy) } else { (ix, iy + 1) };
        if jx >= self.n || (self.dim == 2 && jy >= self.n) {
            return None;
        }
        self.lookup[jy * self.n + jx]
    }

    /// The cell one step back along `axis`, if it is in the grid.
    pub fn backward_neighbor(&self, i: usize, axis: usize) -> Option<usize> {
        debug_assert!(axis < self.dim);
        let [ix, iy] = self.lattice[i];
        let (jx, jy) = if axis == 0 {
            (ix.checked_sub(1)?, iy)
        } else {
            (ix, iy.checked_sub(1)?)
        };
        self.lookup[jy * self.n + jx]
    }

    /// Cells whose center has norm strictly below `t`, for `t ∈ (0, 1]`.
    pub fn ball_cells(&self, t: f64) -> Result<CellSet> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::RadiusOutOfRange {
                radius: t,
                domain: "(0, 1]",
            });
        }
        Ok(CellSet {
            indices: (0..self.len()).filter(|&i| self.norms[i] < t).collect(),
        })
    }

    pub fn all_cells(&self) -> CellSet {
        CellSet {
            indices: (0..self.len()).collect(),
        }
    }

    /// Discrete measure `|cells| · h^d`.
    pub fn volume(&self, cells: &CellSet) -> f64 {
        cells.len() as f64 * self.cell_measure()
    }

    /// `φ(x_i)` for every cell.
    pub fn weights(&self, profile: &RadialProfile) -> Vec<f64> {
        self.norms.iter().map(|&r| profile.level(r)).collect()
    }
}

/// Sorted, duplicate-free list of cell indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    indices: Vec<usize>,
}

impl CellSet {
    pub fn new(grid: &Grid, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&bad) = indices.iter().find(|&&i| i >= grid.len()) {
            return Err(Error::InvalidGrid(format!(
                "cell index {bad} out of range for {} cells",
                grid.len()
            )));
        }
        Ok(Self { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Membership mask over all cells of `grid`.
    pub fn mask(&self, grid: &Grid) -> Vec<bool> {
        let mut mask = vec![false; grid.len()];
        for &i in &self.indices {
            mask[i] = true;
        }
        mask
    }
}

/// A scalar field, one value per grid cell.
#[derive(Debug, Clone)]
pub struct GridFunction<'g> {
    grid: &'g Grid,
    values: Vec<f64>,
}

impl<'g> GridFunction<'g> {
    pub fn new(grid: &'g Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: &'g Grid, mut f: F) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: &'g Grid, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &'g Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `u + a`.
    pub fn shifted(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v + a).collect(),
        }
    }

    /// `λ u`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * lambda).collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(GridFunctionFile {
            grid: GridHeader {
                d: self.grid.dim,
                n: self.grid.n,
            },
            values: self.values.clone(),
        })
        .expect("plain data serializes")
    }

    /// Parses a field written by [`GridFunction::to_json`] onto a matching grid.
    pub fn from_json(grid: &'g Grid, value: &serde_json::Value) -> Result<Self> {
        let file: GridFunctionFile = serde_json::from_value(value.clone())?;
        if file.grid.d != grid.dim || file.grid.n != grid.n {
            return Err(Error::InvalidGrid(format!(
                "field was written for d = {}, N = {}",
                file.grid.d, file.grid.n
            )));
        }
        Self::new(grid, file.values)
    }
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    d: usize,
    #[serde(rename = "N")]
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct GridFunctionFile {
    grid: GridHeader,
    values: Vec<f64>,
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

/// Plain mean of `u` over `cells` (the `h^d` factors cancel).
///
/// Accumulates deviations from the first value so constants come out exact.
pub fn mean(u: &GridFunction, cells: &CellSet) -> Result<f64> {
    let first = *cells.indices().first().ok_or(Error::EmptyCellSet)?;
    let base = u.values[first];
    let mut acc = KahanSum::new();
    for &i in cells.indices() {
        acc.add(u.values[i] - base);
    }
    Ok(base + acc.value() / cells.len() as f64)
}

/// Weighted mean over the whole grid.
pub fn weighted_mean(u: &GridFunction, profile: &RadialProfile) -> Result<f64> {
    weighted_mean_on(u, &u.grid.all_cells(), profile)
}

/// `Σ u_i φ_i / Σ φ_i` over `cells`.
pub fn weighted_mean_on(u: &GridFunction, cells: &CellSet, profile: &RadialProfile) -> Result<f64> {
    let first = *cells.indices().first().ok_or(Error::EmptyCellSet)?;
    let base = u.values[first];
    let mut num = KahanSum::new();
    let mut den = KahanSum::new();
    for &i in cells.indices() {
        let w = profile.level(u.grid.norms[i]);
        num.add((u.values[i] - base) * w);
        den.add(w);
    }
    let den = den.value();
    if den <= 0.0 {
        return Err(Error::ZeroWeight);
    }
    Ok(base + num.value() / den)
}

/// `Σ_{i ∈ cells} |u_i - c|^p w_i h^d`.
///
/// `w_i = φ(x_i)` when a profile is given, otherwise 1. The center `c`
/// defaults to the matching (weighted) mean over `cells`.
pub fn deviation_p(
    u: &GridFunction,
    cells: &CellSet,
    p: f64,
    profile: Option<&RadialProfile>,
    center: Option<f64>,
) -> Result<f64> {
    check_p(p)?;
    if cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let c = match (center, profile) {
        (Some(c), _) => c,
        (None, Some(prof)) => weighted_mean_on(u, cells, prof)?,
        (None, None) => mean(u, cells)?,
    };
    let mut acc = KahanSum::new();
    for &i in cells.indices() {
        let w = profile.map_or(1.0, |prof| prof.level(u.grid.norms[i]));
        acc.add(pow_abs(u.values[i] - c, p) * w);
    }
    Ok(acc.value() * u.grid.cell_measure())
}

/// `|x|^p` with fast paths for the common integer exponents.
#[inline]
pub(crate) fn pow_abs(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if p == 2.0 {
        a * a
    } else if p == 1.0 {
        a
    } else if p == 3.0 {
        a * a * a
    } else {
        a.powf(p)
    }
}
