//! Deterministic families of test functions on a grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::KernelSpec;
use crate::grid::{Grid, GridFunction};
use crate::sharp::{assemble_p2, smallest_nonzero_eigen, EigenOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `a · x + b`.
    Affine,
    /// `exp(-|x - x_c|² / σ²)`.
    Bump,
    /// Uniform noise smoothed by three neighbor-averaging passes.
    Random,
    /// Lowest nonconstant eigenfunction of the unweighted gradient form.
    Eigen,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Affine => "affine",
            Family::Bump => "bump",
            Family::Random => "random",
            Family::Eigen => "eigen",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub seed: u64,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_families")]
    pub families: Vec<Family>,
}

fn default_count() -> usize {
    8
}

fn default_families() -> Vec<Family> {
    vec![Family::Affine, Family::Bump, Family::Random, Family::Eigen]
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            count: default_count(),
            families: default_families(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestFunction<'g> {
    pub label: String,
    pub u: GridFunction<'g>,
}

fn smoothed_noise<'g>(grid: &'g Grid, rng: &mut ChaCha8Rng) -> Result<GridFunction<'g>> {
    let mut v: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..3 {
        v = (0..grid.len())
            .map(|i| {
                let mut sum = v[i];
                let mut count = 1.0;
                for axis in 0..grid.dim() {
                    for j in [grid.forward_neighbor(i, axis), grid.backward_neighbor(i, axis)]
                        .into_iter()
                        .flatten()
                    {
                        sum += v[j];
                        count += 1.0;
                    }
                }
                sum / count
            })
            .collect();
    }
    GridFunction::new(grid, v)
}

/// The `count` functions of `spec`, cycling through its families.
///
/// All randomness comes from one ChaCha8 stream seeded with `spec.seed`, so
/// the suite is reproducible. Repeated eigen members add a smoothed
/// perturbation of relative size 0.1 to the eigenfunction.
pub fn build_suite<'g>(grid: &'g Grid, spec: &SuiteSpec) -> Result<Vec<TestFunction<'g>>> {
    if spec.families.is_empty() {
        return Err(Error::config("suite.families", "at least one family is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut eigen: Option<Vec<f64>> = None;
    let mut out = Vec::with_capacity(spec.count);
    for k in 0..spec.count {
        let family = spec.families[k % spec.families.len()];
        let round = k / spec.families.len();
        let u = match family {
            Family::Affine => {
                let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let b: f64 = rng.gen_range(-1.0..1.0);
                let a0: f64 = if a[0] == 0.0 { 1.0 } else { a[0] };
                GridFunction::from_fn(grid, |x| {
                    b + a0 * x[0] + if x.len() > 1 { a[1] * x[1] } else { 0.0 }
                })?
            }
            Family::Bump => {
                let r: f64 = rng.gen_range(0.0..0.7);
                let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let sigma: f64 = rng.gen_range(0.15..0.5);
                let c = if grid.dim() == 1 {
                    [r * angle.cos().signum(), 0.0]
                } else {
                    [r * angle.cos(), r * angle.sin()]
                };
                GridFunction::from_fn(grid, |x| {
                    let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 / (sigma * sigma)).exp()
                })?
            }
            Family::Random => smoothed_noise(grid, &mut rng)?,
            Family::Eigen => {
                if eigen.is_none() {
                    let cells = grid.all_cells();
                    let pair = assemble_p2(grid, &cells, &KernelSpec::local(2.0), None)?;
                    let sol = smallest_nonzero_eigen(&pair, EigenOptions::default())?;
                    eigen = Some(pair.extend(grid, &sol.vector).into_values());
                }
                let base = eigen.as_ref().expect("computed above");
                if round == 0 {
                    GridFunction::new(grid, base.clone())?
                } else {
                    let noise = smoothed_noise(grid, &mut rng)?;
                    let scale = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let f = 0.1 * scale(base) / scale(noise.values()).max(f64::MIN_POSITIVE);
                    let v = base
                        .iter()
                        .zip(noise.values())
                        .map(|(a, b)| a + f * b)
                        .collect();
                    GridFunction::new(grid, v)?
                }
            }
        };
        out.push(TestFunction {
            label: format!("{}#{k}", family.name()),
            u,
        });
    }
    Ok(out)
}
