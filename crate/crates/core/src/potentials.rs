//! Potentials `V` on ℝ^d and their sampling on lattice regions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{norm, GridParams, Lattice, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "camelCase")]
pub enum PotentialKind {
    /// `beta ((d-2)/2)^2 |x|^{-2}`.
    Hardy { beta: f64 },
    /// `c` on the open ball `B(0, radius)`, zero outside.
    ConstantBall { c: f64, radius: f64 },
    /// Annular potential singular on the unit sphere, supported in `1-delta < |x| < 1+delta`.
    Stein {
        #[serde(rename = "C")]
        c: f64,
        b: f64,
        #[serde(rename = "steinDelta")]
        delta: f64,
    },
    /// Piecewise-constant data on lattice cells (nearest-cell lookup).
    GridSampled {
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
        #[serde(rename = "cellVolume")]
        cell_volume: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub d: usize,
    #[serde(flatten)]
    pub kind: PotentialKind,
}

/// Point samples of a scalar field with their cell volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SampledField {
    pub dim: usize,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub cell_volumes: Vec<f64>,
}

impl SampledField {
    pub fn new(dim: usize, points: Vec<f64>, values: Vec<f64>, cell_volumes: Vec<f64>) -> Result<Self> {
        if points.len() != dim * values.len() || values.len() != cell_volumes.len() {
            return Err(domain("sampled field arrays have inconsistent lengths"));
        }
        if cell_volumes.iter().any(|&m| !(m > 0.0)) {
            return Err(domain("cell volumes must be positive"));
        }
        Ok(Self {
            dim,
            points,
            values,
            cell_volumes,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

impl Potential {
    pub fn hardy(d: usize, beta: f64) -> Result<Self> {
        check_dim(d)?;
        if !(beta >= 0.0) {
            return Err(domain(format!("Hardy beta must be >= 0, got {beta}")));
        }
        Ok(Self {
            d,
            kind: PotentialKind::Hardy { beta },
        })
    }

    pub fn constant_ball(d: usize, c: f64, radius: f64) -> Result<Self> {
        check_dim(d)?;
        if !(radius > 0.0) {
            return Err(domain(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self {
            d,
            kind: PotentialKind::ConstantBall { c, radius },
        })
    }

    pub fn stein(d: usize, c: f64, b: f64, delta: f64) -> Result<Self> {
        check_dim(d)?;
        if !(c > 0.0) {
            return Err(domain(format!("Stein C must be positive, got {c}")));
        }
        let b_min = 2.0 / (d as f64 - 1.0);
        if !(b > b_min) {
            return Err(domain(format!("Stein b must exceed 2/(d-1) = {b_min}, got {b}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain(format!("Stein delta must lie in (0,1), got {delta}")));
        }
        Ok(Self {
            d,
            kind: PotentialKind::Stein { c, b, delta },
        })
    }

    pub fn grid_sampled(d: usize, points: Vec<Vec<f64>>, values: Vec<f64>, cell_volume: f64) -> Result<Self> {
        check_dim(d)?;
        if points.len() != values.len() {
            return Err(domain("grid potential: points and values differ in length"));
        }
        if !(cell_volume > 0.0) {
            return Err(domain("grid potential: cell volume must be positive"));
        }
        if points.iter().any(|p| p.len() != d) {
            return Err(domain("grid potential: point of wrong dimension"));
        }
        Ok(Self {
            d,
            kind: PotentialKind::GridSampled {
                points,
                values,
                cell_volume,
            },
        })
    }

    /// The zero potential, represented as a ball of height 0.
    pub fn zero(d: usize) -> Self {
        Self {
            d,
            kind: PotentialKind::ConstantBall { c: 0.0, radius: 1.0 },
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.eval_floored(x, 0.0)
    }

    /// Evaluates with the singular distance floored at `floor` (radius for Hardy,
    /// distance to the unit sphere for Stein). `floor = 0` is plain evaluation.
    pub fn eval_floored(&self, x: &[f64], floor: f64) -> Result<f64> {
        if x.len() != self.d {
            return Err(domain(format!("point has dimension {}, potential {}", x.len(), self.d)));
        }
        let d = self.d as f64;
        match &self.kind {
            PotentialKind::Hardy { beta } => {
                let r = norm(x).max(floor);
                if r == 0.0 {
                    return Err(domain("Hardy potential is singular at the origin"));
                }
                let k = (d - 2.0) / 2.0;
                Ok(beta * k * k / (r * r))
            }
            PotentialKind::ConstantBall { c, radius } => Ok(if norm(x) < *radius { *c } else { 0.0 }),
            PotentialKind::Stein { c, b, delta } => {
                let r = norm(x);
                if r <= 1.0 - delta || r >= 1.0 + delta {
                    return Ok(0.0);
                }
                let s = (r - 1.0).abs().max(floor);
                if s == 0.0 {
                    return Err(domain("Stein potential is singular on the unit sphere"));
                }
                Ok(c / (s.powf(2.0 / (d - 1.0)) * (-s.ln()).powf(*b)))
            }
            PotentialKind::GridSampled {
                points,
                values,
                cell_volume,
            } => {
                let h = cell_volume.powf(1.0 / d);
                let reach = 0.5 * h * d.sqrt() * (1.0 + 1e-12);
                let nearest = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, crate::grid::dist(p, x)))
                    .min_by(|a, b| a.1.total_cmp(&b.1));
                Ok(match nearest {
                    Some((i, r)) if r <= reach => values[i],
                    _ => 0.0,
                })
            }
        }
    }

    /// Short human-readable label, e.g. `hardy:beta=0.5`.
    pub fn label(&self) -> String {
        match &self.kind {
            PotentialKind::Hardy { beta } => format!("hardy:beta={beta}"),
            PotentialKind::ConstantBall { c, radius } => format!("const:c={c},radius={radius}"),
            PotentialKind::Stein { c, b, delta } => format!("stein:C={c},b={b},delta={delta}"),
            PotentialKind::GridSampled { points, .. } => format!("grid:points={}", points.len()),
        }
    }

    /// Parses `name:key=value,key=value` (keys may also be separated by `:`).
    pub fn parse(spec: &str, d: usize) -> Result<Self> {
        let (name, rest) = match spec.split_once(':') {
            Some((n, r)) => (n.trim(), r),
            None => (spec.trim(), ""),
        };
        let mut kv = std::collections::BTreeMap::new();
        for item in rest.split([',', ':']).map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got '{item}'")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str, default: Option<f64>| -> Result<f64> {
            match kv.get(key) {
                Some(v) => v
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("{key}: not a number: '{v}'"))),
                None => default.ok_or_else(|| Error::InvalidParameter(format!("{name}: missing key '{key}'"))),
            }
        };
        let allowed: &[&str] = match name {
            "hardy" => &["beta"],
            "const" => &["c", "radius"],
            "stein" => &["C", "b", "delta"],
            "grid" => &["path", "volume"],
            "zero" => &[],
            other => return Err(Error::InvalidParameter(format!("unknown potential '{other}'"))),
        };
        if let Some(k) = kv.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!("{name}: unknown key '{k}'")));
        }
        let wrap = |e: Error| match e {
            Error::Domain(m) => Error::InvalidParameter(m),
            e => e,
        };
        match name {
            "hardy" => Self::hardy(d, num("beta", None)?).map_err(wrap),
            "const" => Self::constant_ball(d, num("c", None)?, num("radius", None)?).map_err(wrap),
            "stein" => Self::stein(d, num("C", None)?, num("b", None)?, num("delta", None)?).map_err(wrap),
            "zero" => Ok(Self::zero(d)),
            _ => {
                let path = kv
                    .get("path")
                    .ok_or_else(|| Error::InvalidParameter("grid: missing key 'path'".into()))?;
                let volume = kv.get("volume").map(|_| num("volume", None)).transpose()?;
                Self::from_csv(Path::new(path), d, volume).map_err(wrap)
            }
        }
    }

    /// Reads a grid potential from CSV with header and columns `x1..xd,value`.
    ///
    /// Without an explicit `cell_volume` the lattice spacing is taken as the
    /// smallest positive gap between distinct first coordinates.
    pub fn from_csv(path: &Path, d: usize, cell_volume: Option<f64>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        let mut points = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
            if rec.len() != d + 1 {
                return Err(Error::InvalidParameter(format!(
                    "{}: row {} has {} columns, expected {}",
                    path.display(),
                    line + 2,
                    rec.len(),
                    d + 1
                )));
            }
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidParameter(format!("{}: row {}: {e}", path.display(), line + 2)))?;
            points.push(row[..d].to_vec());
            values.push(row[d]);
        }
        let cell_volume = match cell_volume {
            Some(v) => v,
            None => {
                let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                let h = xs
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .filter(|g| *g > 0.0)
                    .fold(f64::INFINITY, f64::min);
                if !h.is_finite() {
                    return Err(Error::InvalidParameter(
                        "grid: cannot infer cell size, pass volume=<v>".into(),
                    ));
                }
                h.powi(d as i32)
            }
        };
        Self::grid_sampled(d, points, values, cell_volume)
    }

    /// Exact scaling `c·V` (for `c ≥ 0` on Hardy); used by the scaling-law tests.
    pub fn scaled(&self, factor: f64) -> Self {
        let kind = match &self.kind {
            PotentialKind::Hardy { beta } => PotentialKind::Hardy { beta: beta * factor },
            PotentialKind::ConstantBall { c, radius } => PotentialKind::ConstantBall {
                c: c * factor,
                radius: *radius,
            },
            PotentialKind::Stein { c, b, delta } => PotentialKind::Stein {
                c: c * factor,
                b: *b,
                delta: *delta,
            },
            PotentialKind::GridSampled {
                points,
                values,
                cell_volume,
            } => PotentialKind::GridSampled {
                points: points.clone(),
                values: values.iter().map(|v| v * factor).collect(),
                cell_volume: *cell_volume,
            },
        };
        Self { d: self.d, kind }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d < 3 {
        return Err(domain(format!("dimension must be >= 3, got {d}")));
    }
    Ok(())
}

/// Samples `p` at the centres of the lattice cells lying in `region`
/// (`n` cells per axis across the region's bounding box).
///
/// Singular distances are floored at `h/2`.
pub fn sample_on_region(p: &Potential, region: &Region, grid: &GridParams) -> Result<SampledField> {
    grid.validate()?;
    if region.dim() != p.d {
        return Err(domain("region and potential dimensions differ"));
    }
    let lattice = Lattice::covering(&[region], grid.n)?;
    let pts = lattice.cells_in(region, grid.point_cap)?;
    let floor = 0.5 * lattice.h;
    let values = pts
        .iter()
        .map(|x| p.eval_floored(x, floor))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<f64> = pts.iter().flatten().copied().collect();
    SampledField::new(p.d, points, values, pts.volumes.clone())
}

/// Samples `p` on spherical shells about the origin, graded geometrically toward the
/// sphere `|x| = sphere`: the central shell has half-width `floor`, and `per_decade`
/// shells per factor 10 of distance follow on each side, clipped to `[r_lo, r_hi]`.
///
/// Suited to radial potentials singular on a sphere; each shell is one node placed on
/// the first axis, valued at the geometric middle of its distance range.
pub fn sample_graded_shells(
    p: &Potential,
    sphere: f64,
    r_lo: f64,
    r_hi: f64,
    floor: f64,
    per_decade: usize,
) -> Result<SampledField> {
    if !(0.0 <= r_lo && r_lo < sphere && sphere < r_hi) {
        return Err(domain("graded shells need r_lo < sphere < r_hi"));
    }
    if !(floor > 0.0 && floor < (sphere - r_lo).min(r_hi - sphere)) || per_decade == 0 {
        return Err(domain("graded shells need 0 < floor < distance to the clip radii"));
    }
    let d = p.d;
    let omega = crate::special::ball_volume(d);
    // b^d - a^d = (b - a) Σ a^k b^{d-1-k}, exact for thin shells
    let shell = |a: f64, b: f64| omega * (b - a) * (0..d).map(|k| a.powi(k as i32) * b.powi((d - 1 - k) as i32)).sum::<f64>();
    let mut points = Vec::new();
    let mut values = Vec::new();
    let mut volumes = Vec::new();
    let mut push = |r: f64, v: f64, m: f64| {
        points.push(r);
        points.extend(std::iter::repeat_n(0.0, d - 1));
        values.push(v);
        volumes.push(m);
    };
    let mut x = vec![0.0; d];
    x[0] = sphere;
    push(sphere, p.eval_floored(&x, floor)?, shell(sphere - floor, sphere + floor));
    let q = 10f64.powf(1.0 / per_decade as f64);
    for (side, limit) in [(-1.0, sphere - r_lo), (1.0, r_hi - sphere)] {
        let mut a = floor;
        while a < limit {
            let b = (a * q).min(limit);
            let mid = (a * b).sqrt();
            x[0] = sphere + side * mid;
            let v = p.eval(&x)?;
            let (lo, hi) = if side < 0.0 {
                (sphere - b, sphere - a)
            } else {
                (sphere + a, sphere + b)
            };
            push(x[0], v, shell(lo, hi));
            a = b;
        }
    }
    SampledField::new(d, points, values, volumes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::ball_volume;
    use proptest::prelude::*;

    #[test]
    fn hardy_value() {
        let v = Potential::hardy(3, 0.5).unwrap();
        assert!((v.eval(&[1.0, 0.0, 0.0]).unwrap() - 0.125).abs() < 1e-15);
        assert!(matches!(v.eval(&[0.0; 3]), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_ball_outside_is_zero() {
        let v = Potential::constant_ball(3, 1.0, 1.0).unwrap();
        assert_eq!(v.eval(&[2.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(v.eval(&[0.5, 0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn stein_support_and_singularity() {
        let v = Potential::stein(3, 1.0, 2.0, 0.5).unwrap();
        assert_eq!(v.eval(&[1.5, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(v.eval(&[0.5, 0.0, 0.0]).unwrap(), 0.0);
        assert!(v.eval(&[1.0, 0.0, 0.0]).is_err());
        // s = 0.25: 1 / (0.25 * ln(4)^2)
        let got = v.eval(&[1.25, 0.0, 0.0]).unwrap();
        let want = 1.0 / (0.25 * 4f64.ln().powi(2));
        assert!((got - want).abs() < 1e-14 * want);
        // both sides of the sphere use the distance |r - 1|
        assert_eq!(got, v.eval(&[0.75, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn stein_parameter_constraints() {
        assert!(Potential::stein(3, 1.0, 1.0, 0.5).is_err());
        assert!(Potential::stein(3, 1.0, 1.01, 0.5).is_ok());
        assert!(Potential::stein(3, 1.0, 2.0, 1.0).is_err());
        assert!(Potential::stein(5, 1.0, 0.6, 0.5).is_ok());
    }

    #[test]
    fn unit_ball_sampling() {
        let v = Potential::constant_ball(3, 1.0, 1.0).unwrap();
        let region = Region::origin_ball(3, 1.0).unwrap();
        let f = sample_on_region(&v, &region, &GridParams::with_n(16)).unwrap();
        // brute-force count of cell centres (k+1/2)/8 - 1 inside the unit ball
        let mut count = 0;
        for i in 0..16 {
            for j in 0..16 {
                for k in 0..16 {
                    let c = |a: i32| (a as f64 + 0.5) / 8.0 - 1.0;
                    if c(i).powi(2) + c(j).powi(2) + c(k).powi(2) < 1.0 {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(f.len(), count);
        assert!((2000..2200).contains(&count), "{count}");
        assert!(f.values.iter().all(|&x| x == 1.0));
        assert!(f.cell_volumes.iter().all(|&m| (m - 0.125f64.powi(3)).abs() < 1e-18));
    }

    #[test]
    fn sampled_volume_within_five_percent() {
        let v = Potential::constant_ball(3, 1.0, 10.0).unwrap();
        for r in [0.3, 1.0, 2.5] {
            let region = Region::origin_ball(3, r).unwrap();
            let f = sample_on_region(&v, &region, &GridParams::with_n(32)).unwrap();
            let vol: f64 = f.cell_volumes.iter().sum();
            let exact = ball_volume(3) * r * r * r;
            assert!((vol / exact - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn hardy_floor_at_origin_cell() {
        // odd n puts a cell centre on the origin
        let v = Potential::hardy(3, 1.0).unwrap();
        let region = Region::origin_ball(3, 1.0).unwrap();
        let f = sample_on_region(&v, &region, &GridParams::with_n(15)).unwrap();
        let h = 2.0 / 15.0;
        let i = (0..f.len()).find(|&i| norm(f.point(i)) < 1e-12).unwrap();
        assert!((f.values[i] - 0.25 / (0.25 * h * h)).abs() < 1e-9);
    }

    #[test]
    fn empty_region_is_domain_error() {
        assert!(matches!(Region::origin_annulus(3, 1.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn parse_specs() {
        let h = Potential::parse("hardy:beta=0.5", 3).unwrap();
        assert_eq!(h.kind, PotentialKind::Hardy { beta: 0.5 });
        let s = Potential::parse("stein:C=1,b=2,delta=0.5", 3).unwrap();
        assert_eq!(s.kind, PotentialKind::Stein { c: 1.0, b: 2.0, delta: 0.5 });
        let c = Potential::parse("const:c=1:radius=2", 4).unwrap();
        assert_eq!(c.kind, PotentialKind::ConstantBall { c: 1.0, radius: 2.0 });
        assert!(Potential::parse("hardy:gamma=1", 3).is_err());
        assert!(Potential::parse("coulomb:q=1", 3).is_err());
        assert!(Potential::parse("stein:C=1,b=0.5,delta=0.5", 3).is_err());
    }

    #[test]
    fn grid_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "x1,x2,x3,value\n0.25,0.25,0.25,2.0\n0.75,0.25,0.25,3.0\n").unwrap();
        let v = Potential::from_csv(&path, 3, None).unwrap();
        match &v.kind {
            PotentialKind::GridSampled { cell_volume, .. } => assert!((cell_volume - 0.125).abs() < 1e-15),
            _ => unreachable!(),
        }
        assert_eq!(v.eval(&[0.3, 0.2, 0.2]).unwrap(), 2.0);
        assert_eq!(v.eval(&[0.8, 0.3, 0.2]).unwrap(), 3.0);
        assert_eq!(v.eval(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn hardy_scales_linearly(c in 0.0f64..10.0, x in prop::array::uniform3(-3.0f64..3.0)) {
            prop_assume!(norm(&x) > 1e-6);
            let v = Potential::hardy(3, 0.7).unwrap();
            let lhs = v.scaled(c).eval(&x).unwrap();
            let rhs = c * v.eval(&x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }

        #[test]
        fn stein_vanishes_off_annulus(r in 0.0f64..3.0, dir in prop::array::uniform3(-1.0f64..1.0)) {
            let n = norm(&dir);
            prop_assume!(n > 1e-3);
            let v = Potential::stein(3, 1.0, 2.0, 0.4).unwrap();
            let x: Vec<f64> = dir.iter().map(|a| a / n * r).collect();
            let rr = norm(&x);
            if rr <= 0.6 || rr >= 1.4 {
                prop_assert_eq!(v.eval(&x).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn graded_shells_cover_the_annulus() {
        let v = Potential::stein(3, 1.0, 2.0, 0.5).unwrap();
        let f = sample_graded_shells(&v, 1.0, 0.5, 1.5, 1e-6, 20).unwrap();
        let total: f64 = f.cell_volumes.iter().sum();
        let want = ball_volume(3) * (1.5f64.powi(3) - 0.5f64.powi(3));
        assert!((total - want).abs() < 1e-12 * want);
        assert!(f.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
