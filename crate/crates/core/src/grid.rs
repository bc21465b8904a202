//! Regions, Cartesian lattices and the point sets they induce.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const DEFAULT_POINT_CAP: usize = 20_000;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RegionKind {
    Ball,
    Annulus,
    /// Axis-parallel cube; `r_outer` is half the side.
    Cube,
}

/// A ball `B(c, r)` or an annulus `B(c, r_outer) \ B(c, r_inner)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Region {
    pub kind: RegionKind,
    pub center: Vec<f64>,
    pub r_inner: f64,
    pub r_outer: f64,
}

impl Region {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(domain(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self {
            kind: RegionKind::Ball,
            center,
            r_inner: 0.0,
            r_outer: radius,
        })
    }

    pub fn annulus(center: Vec<f64>, r_inner: f64, r_outer: f64) -> Result<Self> {
        if !(r_inner > 0.0 && r_outer.is_finite()) || r_inner >= r_outer {
            return Err(domain(format!(
                "annulus needs 0 < r_inner < r_outer, got ({r_inner}, {r_outer})"
            )));
        }
        Ok(Self {
            kind: RegionKind::Annulus,
            center,
            r_inner,
            r_outer,
        })
    }

    pub fn cube(center: Vec<f64>, half_side: f64) -> Result<Self> {
        if !(half_side > 0.0 && half_side.is_finite()) {
            return Err(domain(format!("cube half side must be positive, got {half_side}")));
        }
        Ok(Self {
            kind: RegionKind::Cube,
            center,
            r_inner: 0.0,
            r_outer: half_side,
        })
    }

    /// Ball centred at the origin of ℝ^d.
    pub fn origin_ball(d: usize, radius: f64) -> Result<Self> {
        Self::ball(vec![0.0; d], radius)
    }

    pub fn origin_annulus(d: usize, r_inner: f64, r_outer: f64) -> Result<Self> {
        Self::annulus(vec![0.0; d], r_inner, r_outer)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if self.kind == RegionKind::Cube {
            return x
                .iter()
                .zip(&self.center)
                .all(|(a, c)| (a - c).abs() < self.r_outer);
        }
        let r = dist(x, &self.center);
        r < self.r_outer && r >= self.r_inner
    }
}

/// Discretization parameters shared by every gridded computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridParams {
    /// Cells per axis across the bounding box of the region(s).
    pub n: usize,
    pub point_cap: usize,
    pub seed: u64,
    /// Relative-change tolerance of the power iterations.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            n: 16,
            point_cap: DEFAULT_POINT_CAP,
            seed: DEFAULT_SEED,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl GridParams {
    pub fn with_n(n: usize) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be >= 2, got {}",
                self.n
            )));
        }
        if self.point_cap < 1 {
            return Err(Error::InvalidParameter("point cap must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Cubic lattice of cells of side `h`; cell `k` has centre `origin + (k + 1/2) h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub origin: Vec<f64>,
    pub h: f64,
}

impl Lattice {
    /// Lattice with `n` cells per axis across the bounding box of all `regions`.
    pub fn covering(regions: &[&Region], n: usize) -> Result<Self> {
        let first = regions
            .first()
            .ok_or_else(|| domain("no region to cover"))?;
        let d = first.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for r in regions {
            if r.dim() != d {
                return Err(domain("regions of different dimension"));
            }
            for a in 0..d {
                lo[a] = lo[a].min(r.center[a] - r.r_outer);
                hi[a] = hi[a].max(r.center[a] + r.r_outer);
            }
        }
        let side = (0..d).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        Ok(Self {
            origin: lo,
            h: side / n as f64,
        })
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.origin.len() as i32)
    }

    /// All cells whose centre lies in `region`, in lexicographic index order.
    pub fn cells_in(&self, region: &Region, cap: usize) -> Result<PointSet> {
        let d = region.dim();
        if d != self.origin.len() {
            return Err(domain("lattice and region dimensions differ"));
        }
        let lo: Vec<i64> = (0..d)
            .map(|a| ((region.center[a] - region.r_outer - self.origin[a]) / self.h).floor() as i64 - 1)
            .collect();
        let hi: Vec<i64> = (0..d)
            .map(|a| ((region.center[a] + region.r_outer - self.origin[a]) / self.h).ceil() as i64 + 1)
            .collect();
        let mut set = PointSet::empty(d, self.h);
        let mut k = lo.clone();
        let mut x = vec![0.0; d];
        loop {
            for a in 0..d {
                x[a] = self.origin[a] + (k[a] as f64 + 0.5) * self.h;
            }
            if region.contains(&x) {
                if set.len() >= cap {
                    return Err(Error::Capacity {
                        points: set.len() + 1,
                        cap,
                    });
                }
                set.push(&x, &k, self.cell_volume());
            }
            // odometer over the index box
            let mut a = d;
            loop {
                if a == 0 {
                    return if set.is_empty() {
                        Err(domain("region contains no lattice cell centre"))
                    } else {
                        Ok(set)
                    };
                }
                a -= 1;
                k[a] += 1;
                if k[a] <= hi[a] {
                    break;
                }
                k[a] = lo[a];
            }
        }
    }
}

/// Quadrature nodes: cell centres with integer lattice keys and cell volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub dim: usize,
    pub h: f64,
    coords: Vec<f64>,
    keys: Vec<i64>,
    pub volumes: Vec<f64>,
}

impl PointSet {
    fn empty(dim: usize, h: f64) -> Self {
        Self {
            dim,
            h,
            coords: Vec::new(),
            keys: Vec::new(),
            volumes: Vec::new(),
        }
    }

    /// Empty set of free nodes.
    pub fn free(dim: usize) -> Self {
        Self::empty(dim, 0.0)
    }

    fn push(&mut self, x: &[f64], k: &[i64], volume: f64) {
        self.coords.extend_from_slice(x);
        self.keys.extend_from_slice(k);
        self.volumes.push(volume);
    }

    /// Appends a free node (no lattice key); used for extra evaluation points.
    pub fn push_free(&mut self, x: &[f64], volume: f64) {
        self.coords.extend_from_slice(x);
        self.keys.extend(std::iter::repeat_n(i64::MIN, self.dim));
        self.volumes.push(volume);
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn key(&self, i: usize) -> &[i64] {
        &self.keys[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
