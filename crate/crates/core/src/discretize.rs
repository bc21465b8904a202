//! Nyström discretization of kernel operators over lattice regions and
//! estimators for their operator norms.
//!
//! Matrices use the symmetric weighting `S_ij = √m_i · l(x_i) K(x_i, x_j) r(x_j) · √m_j`,
//! so the Euclidean norm of `S` approximates the `L² → L²` norm of the operator.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{GridParams, Lattice, PointSet, Region};
use crate::kernels::{KernelEvaluator, KernelSpec};
use crate::potentials::{Potential, SampledField};

/// Row chunk of the adjoint product; fixed so that reductions happen in the same order
/// whatever the thread count.
const ADJOINT_CHUNK: usize = 64;

/// Kernel of an integral operator together with its self-cell average.
pub trait OperatorKernel: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], y: &[f64]) -> Result<Complex64>;
    /// Average of `K(x, ·)` over the volume-`volume` cell centred at `x`.
    fn cell_average(&self, x: &[f64], volume: f64) -> Result<Complex64>;
    fn spec(&self) -> Option<KernelSpec> {
        None
    }
}

impl OperatorKernel for KernelEvaluator {
    fn dim(&self) -> usize {
        self.spec.d
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> Result<Complex64> {
        self.weighted(x, y)
    }

    fn cell_average(&self, x: &[f64], volume: f64) -> Result<Complex64> {
        KernelEvaluator::cell_average(self, x, volume)
    }

    fn spec(&self) -> Option<KernelSpec> {
        Some(self.spec)
    }
}

/// `K ≡ value`; a smooth sanity kernel.
#[derive(Debug, Clone, Copy)]
pub struct ConstantKernel {
    pub d: usize,
    pub value: f64,
}

impl OperatorKernel for ConstantKernel {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, _x: &[f64], _y: &[f64]) -> Result<Complex64> {
        Ok(Complex64::new(self.value, 0.0))
    }

    fn cell_average(&self, _x: &[f64], _volume: f64) -> Result<Complex64> {
        Ok(Complex64::new(self.value, 0.0))
    }
}

/// Multiplication operator `x ↦ (|V(x)| + shift)^power · 1{|x| > cutoff}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Multiplier {
    pub potential: Potential,
    pub power: f64,
    pub shift: f64,
    /// Indicator radius; `0` keeps every point.
    pub cutoff: f64,
}

impl Multiplier {
    pub fn new(potential: Potential, power: f64) -> Self {
        Self {
            potential,
            power,
            shift: 0.0,
            cutoff: 0.0,
        }
    }

    /// The constant multiplier 1.
    pub fn one(d: usize) -> Self {
        Self {
            potential: Potential::zero(d),
            power: 1.0,
            shift: 1.0,
            cutoff: 0.0,
        }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_cutoff(mut self, radius: f64) -> Self {
        self.cutoff = radius;
        self
    }

    pub fn eval(&self, x: &[f64], floor: f64) -> Result<f64> {
        if self.cutoff > 0.0 && crate::grid::norm(x) <= self.cutoff {
            return Ok(0.0);
        }
        let v = self.potential.eval_floored(x, floor)?.abs() + self.shift;
        Ok(if v == 0.0 { 0.0 } else { v.powf(self.power) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OperatorMeta {
    pub kernel: Option<KernelSpec>,
    pub left: Region,
    pub right: Region,
    pub left_mult: Multiplier,
    pub right_mult: Multiplier,
    pub grid_n: usize,
    pub h: f64,
}

/// Dense Nyström matrix (row-major) with its nodes.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub rows: usize,
    pub cols: usize,
    pub matrix: Vec<Complex64>,
    pub row_points: PointSet,
    pub col_points: PointSet,
    pub meta: OperatorMeta,
}

impl DiscreteOperator {
    /// Builds an operator from an explicit matrix; nodes get unit volumes.
    pub fn from_matrix(rows: usize, cols: usize, matrix: Vec<Complex64>) -> Result<Self> {
        if matrix.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(domain("matrix shape does not match its data"));
        }
        let mut rp = PointSet::free(1);
        for i in 0..rows {
            rp.push_free(&[i as f64], 1.0);
        }
        let mut cp = PointSet::free(1);
        for j in 0..cols {
            cp.push_free(&[j as f64], 1.0);
        }
        let region = Region::ball(vec![0.0], 1.0)?;
        Ok(Self {
            rows,
            cols,
            matrix,
            row_points: rp,
            col_points: cp,
            meta: OperatorMeta {
                kernel: None,
                left: region.clone(),
                right: region,
                left_mult: Multiplier::one(1),
                right_mult: Multiplier::one(1),
                grid_n: 0,
                h: 0.0,
            },
        })
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.matrix[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.matrix[i * self.cols..(i + 1) * self.cols]
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.matrix
            .par_chunks(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `A^H u`, reduced over fixed row chunks in index order.
    pub fn apply_adjoint(&self, u: &[Complex64]) -> Vec<Complex64> {
        let cols = self.cols;
        let partials: Vec<Vec<Complex64>> = (0..self.rows.div_ceil(ADJOINT_CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = vec![Complex64::new(0.0, 0.0); cols];
                let end = ((c + 1) * ADJOINT_CHUNK).min(self.rows);
                for i in c * ADJOINT_CHUNK..end {
                    let ui = u[i];
                    for (a, m) in acc.iter_mut().zip(self.row(i)) {
                        *a += m.conj() * ui;
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); cols];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.matrix.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Writes `row,col,re,im` lines.
    pub fn dump_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["row", "col", "re", "im"]).map_err(csv_err)?;
        for i in 0..self.rows {
            for (j, v) in self.row(i).iter().enumerate() {
                w.write_record([i.to_string(), j.to_string(), v.re.to_string(), v.im.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Assembles `1_left · l · K · r · 1_right` on the lattice covering both regions.
pub fn assemble(
    kernel: &dyn OperatorKernel,
    left: &Region,
    right: &Region,
    left_mult: &Multiplier,
    right_mult: &Multiplier,
    grid: &GridParams,
) -> Result<DiscreteOperator> {
    grid.validate()?;
    let d = kernel.dim();
    if left.dim() != d || right.dim() != d {
        return Err(domain("region and kernel dimensions differ"));
    }
    let lattice = Lattice::covering(&[left, right], grid.n)?;
    let row_points = lattice.cells_in(left, grid.point_cap)?;
    let col_points = lattice.cells_in(right, grid.point_cap)?;
    let distinct = distinct_points(&row_points, &col_points);
    if distinct > grid.point_cap {
        return Err(Error::Capacity {
            points: distinct,
            cap: grid.point_cap,
        });
    }
    let floor = 0.5 * lattice.h;
    let lm: Vec<f64> = row_points
        .iter()
        .zip(&row_points.volumes)
        .map(|(x, m)| Ok(left_mult.eval(x, floor)? * m.sqrt()))
        .collect::<Result<_>>()?;
    let rm: Vec<f64> = col_points
        .iter()
        .zip(&col_points.volumes)
        .map(|(y, m)| Ok(right_mult.eval(y, floor)? * m.sqrt()))
        .collect::<Result<_>>()?;
    let col_index: HashMap<&[i64], usize> = (0..col_points.len()).map(|j| (col_points.key(j), j)).collect();
    let cols = col_points.len();
    let rows = row_points.len();
    let mut matrix = vec![Complex64::new(0.0, 0.0); rows * cols];
    matrix
        .par_chunks_mut(cols)
        .enumerate()
        .try_for_each(|(i, row)| -> Result<()> {
            let x = row_points.point(i);
            let diag = col_index.get(row_points.key(i)).copied();
            if lm[i] == 0.0 {
                return Ok(());
            }
            for (j, slot) in row.iter_mut().enumerate() {
                if rm[j] == 0.0 {
                    continue;
                }
                let k = if Some(j) == diag {
                    kernel.cell_average(x, col_points.volumes[j])?
                } else {
                    kernel.eval(x, col_points.point(j))?
                };
                *slot = k * (lm[i] * rm[j]);
            }
            Ok(())
        })?;
    Ok(DiscreteOperator {
        rows,
        cols,
        matrix,
        row_points,
        col_points,
        meta: OperatorMeta {
            kernel: kernel.spec(),
            left: left.clone(),
            right: right.clone(),
            left_mult: left_mult.clone(),
            right_mult: right_mult.clone(),
            grid_n: grid.n,
            h: lattice.h,
        },
    })
}

fn distinct_points(a: &PointSet, b: &PointSet) -> usize {
    let keys: std::collections::HashSet<&[i64]> = (0..a.len()).map(|i| a.key(i)).collect();
    a.len() + (0..b.len()).filter(|&j| !keys.contains(b.key(j))).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum NormKind {
    TwoTwo,
    OneOne,
    SupImage,
    PToTwoLower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormEstimate {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub grid_n: usize,
    pub h: f64,
    pub points: usize,
    pub kind: NormKind,
    /// True when `value` is only a lower bound.
    pub lower_bound: bool,
}

impl NormEstimate {
    fn exact(value: f64, kind: NormKind, grid_n: usize, h: f64, points: usize) -> Self {
        Self {
            value,
            residual: 0.0,
            iterations: 0,
            grid_n,
            h,
            points,
            kind,
            lower_bound: false,
        }
    }
}

fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn random_unit(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let s = l2(&v);
    v.into_iter().map(|c| c / s).collect()
}

/// Largest singular value by power iteration on `A^H A`.
pub fn spectral_norm(a: &DiscreteOperator, tol: f64, max_iter: usize, seed: u64) -> Result<NormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tolerance must be positive".into()));
    }
    if !a.is_finite() {
        return Err(domain("matrix has non-finite entries"));
    }
    let points = a.rows.max(a.cols);
    let mut v = random_unit(a.cols, seed);
    let mut prev = 0.0;
    let mut residual = f64::INFINITY;
    let mut best: f64 = 0.0;
    for it in 1..=max_iter {
        let u = a.apply(&v);
        let sigma = l2(&u);
        best = best.max(sigma);
        if sigma == 0.0 {
            return Ok(NormEstimate {
                iterations: it,
                ..NormEstimate::exact(0.0, NormKind::TwoTwo, a.meta.grid_n, a.meta.h, points)
            });
        }
        if it > 1 {
            residual = (sigma - prev).abs() / sigma;
            if residual < tol {
                return Ok(NormEstimate {
                    value: sigma,
                    residual,
                    iterations: it,
                    grid_n: a.meta.grid_n,
                    h: a.meta.h,
                    points,
                    kind: NormKind::TwoTwo,
                    lower_bound: false,
                });
            }
        }
        prev = sigma;
        let w = a.apply_adjoint(&u);
        let s = l2(&w);
        if s == 0.0 {
            break;
        }
        v = w.into_iter().map(|c| c / s).collect();
    }
    Err(Error::NonConvergence {
        best,
        residual,
        iterations: max_iter,
    })
}

/// Exact `L¹ → L¹` norm: `max_j Σ_i m_i |l(x_i) K(x_i,x_j) r(x_j)|`.
pub fn one_one_norm(a: &DiscreteOperator) -> NormEstimate {
    let rv = &a.row_points.volumes;
    let cv = &a.col_points.volumes;
    let sqrt_rows: Vec<f64> = rv.iter().map(|m| m.sqrt()).collect();
    let mut col_sums = vec![0.0; a.cols];
    for i in 0..a.rows {
        for (s, v) in col_sums.iter_mut().zip(a.row(i)) {
            *s += v.norm() * sqrt_rows[i];
        }
    }
    let value = col_sums
        .iter()
        .zip(cv)
        .map(|(s, m)| s / m.sqrt())
        .fold(0.0, f64::max);
    NormEstimate::exact(value, NormKind::OneOne, a.meta.grid_n, a.meta.h, a.rows.max(a.cols))
}

/// `max_x |Σ_j K(x, y_j) ρ_j m_j|` over the lattice nodes of `eval_region` plus its
/// centre, with the self-cell average wherever `x` coincides with a density node.
pub fn sup_image_norm(
    kernel: &dyn OperatorKernel,
    density: &SampledField,
    eval_region: &Region,
    grid: &GridParams,
) -> Result<NormEstimate> {
    grid.validate()?;
    if density.values.iter().any(|&v| v < 0.0) {
        return Err(domain("density must be nonnegative"));
    }
    let lattice = Lattice::covering(&[eval_region], grid.n)?;
    let mut evals = lattice.cells_in(eval_region, grid.point_cap)?;
    evals.push_free(&eval_region.center, 0.0);
    let tol = 1e-9 * lattice.h;
    let active: Vec<usize> = (0..density.len()).filter(|&j| density.values[j] != 0.0).collect();
    let values: Vec<f64> = (0..evals.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let x = evals.point(i);
            let mut acc = crate::sum::ComplexSum::new();
            for &j in &active {
                let y = density.point(j);
                let w = density.values[j] * density.cell_volumes[j];
                let k = if crate::grid::dist(x, y) <= tol {
                    kernel.cell_average(y, density.cell_volumes[j])?
                } else {
                    kernel.eval(x, y)?
                };
                acc.add(k * w);
            }
            Ok(acc.value().norm())
        })
        .collect::<Result<_>>()?;
    let value = values.iter().copied().fold(0.0, f64::max);
    Ok(NormEstimate::exact(value, NormKind::SupImage, grid.n, lattice.h, evals.len()))
}

/// Certified lower bound on `‖A‖_{L^p → L²}` by a Boyd-type dual power iteration.
pub fn p_to_two_lower(a: &DiscreteOperator, p: f64, iters: usize, seed: u64) -> Result<NormEstimate> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (1, 2], got {p}")));
    }
    let q = p / (p - 1.0);
    // B = S diag(m_j^{1/2 - 1/p}) acts on ℓ^p coordinates g_j = m_j^{1/p} f_j
    let scale: Vec<f64> = a.col_points.volumes.iter().map(|m| m.powf(0.5 - 1.0 / p)).collect();
    let apply_b = |x: &[Complex64]| {
        let xs: Vec<Complex64> = x.iter().zip(&scale).map(|(v, s)| v * s).collect();
        a.apply(&xs)
    };
    let apply_bh = |y: &[Complex64]| -> Vec<Complex64> {
        a.apply_adjoint(y).into_iter().zip(&scale).map(|(v, s)| v * s).collect()
    };
    let p_norm = |x: &[Complex64]| x.iter().map(|c| c.norm().powf(p)).sum::<f64>().powf(1.0 / p);
    let starts = [
        vec![Complex64::new(1.0, 0.0); a.cols],
        random_unit(a.cols, seed),
    ];
    let mut best: f64 = 0.0;
    let mut total_iters = 0;
    let mut residual = 0.0;
    for start in starts {
        let n0 = p_norm(&start);
        let mut x: Vec<Complex64> = start.into_iter().map(|c| c / n0).collect();
        let mut prev = 0.0;
        for _ in 0..iters.max(1) {
            total_iters += 1;
            let y = apply_b(&x);
            let ratio = l2(&y) / p_norm(&x);
            best = best.max(ratio);
            residual = if ratio > 0.0 { (ratio - prev).abs() / ratio } else { 0.0 };
            if ratio == 0.0 || residual < 1e-10 {
                break;
            }
            prev = ratio;
            let z = apply_bh(&y);
            let next: Vec<Complex64> = z
                .iter()
                .map(|c| {
                    let m = c.norm();
                    if m == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        c * m.powf(q - 2.0)
                    }
                })
                .collect();
            let nn = p_norm(&next);
            if !(nn > 0.0 && nn.is_finite()) {
                break;
            }
            x = next.into_iter().map(|c| c / nn).collect();
        }
    }
    Ok(NormEstimate {
        value: best,
        residual,
        iterations: total_iters,
        grid_n: a.meta.grid_n,
        h: a.meta.h,
        points: a.rows.max(a.cols),
        kind: NormKind::PToTwoLower,
        lower_bound: true,
    })
}

/// Side of the enclosing cube, in units of the ball diameter, used by [`half_operator_norm`].
pub const HALF_OPERATOR_BOX: f64 = 4.0;

/// Spectral norm of `1_ball · mult · K_{z/2}` mapping from the cube of side
/// `box_factor · 2 r_outer` around the ball; its square approximates the norm of the
/// full `K_z` sandwich.
pub fn half_operator_norm(
    half_spec: &KernelSpec,
    ball: &Region,
    mult: &Multiplier,
    box_factor: f64,
    grid: &GridParams,
) -> Result<NormEstimate> {
    let ev = KernelEvaluator::new(half_spec)?;
    let cube = Region::cube(ball.center.clone(), box_factor * ball.r_outer)?;
    let op = assemble(&ev, ball, &cube, mult, &Multiplier::one(ball.dim()), grid)?;
    spectral_norm(&op, grid.tol, grid.max_iter, grid.seed)
}

/// Writes the matrix of `op` to `path` when requested.
pub fn maybe_dump(op: &DiscreteOperator, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        op.dump_csv(p)?;
        let _ = std::io::stderr().flush();
    }
    Ok(())
}
