//! Explicit `L¹` fields: spindles carrying unit mass from `x` to `y`,
//! chains of spindles along polygonal paths, divergence-free smeared loops
//! and face measures of rectangles.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, PLPath};
use crate::error::{Error, Result};
use crate::fields::{mollifier_density, GridVectorField};
use crate::geometry::{add, dot, euclid, lerp, scale, sub, Point};
use crate::transport::{Atom, Molecule};

/// Cross-section profile `ψ` on `[0,1]`, vanishing at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Profile {
    #[default]
    #[serde(rename = "t(1-t)")]
    Parabolic,
    #[serde(rename = "sin(pi t)")]
    Sine,
}

impl Profile {
    #[inline]
    pub fn value(self, t: f64) -> f64 {
        match self {
            Profile::Parabolic => t * (1.0 - t),
            Profile::Sine => (PI * t).sin(),
        }
    }

    #[inline]
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Profile::Parabolic => 1.0 - 2.0 * t,
            Profile::Sine => PI * (PI * t).cos(),
        }
    }

    /// `M = sup |ψ'|`.
    pub fn lipschitz_bound(self) -> f64 {
        match self {
            Profile::Parabolic => 1.0,
            Profile::Sine => PI,
        }
    }
}

fn default_subsamples() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpindleSpec {
    pub x: Point,
    pub y: Point,
    pub epsilon: f64,
    #[serde(default)]
    pub psi: Profile,
    #[serde(default = "default_subsamples")]
    pub subsamples: usize,
}

impl SpindleSpec {
    pub fn new(x: Point, y: Point, epsilon: f64) -> Self {
        SpindleSpec { x, y, epsilon, psi: Profile::default(), subsamples: default_subsamples() }
    }

    /// `‖y − x‖ + M·ε` in the given norm.
    pub fn l1_bound(&self, norm: crate::geometry::Norm) -> f64 {
        norm.norm(sub(self.y, self.x)) + self.psi.lipschitz_bound() * self.epsilon
    }
}

/// `(d−1)`-volume of the Euclidean ball of radius `r` in `R^(d−1)`, i.e.
/// `V_m(r)` with `m = d − 1`.
pub fn ball_volume(m: usize, r: f64) -> f64 {
    let mut v = [1.0, 2.0];
    for j in 2..=m {
        v[j % 2] *= 2.0 * PI / j as f64;
    }
    v[m % 2] * r.powi(m as i32)
}

/// Spindle value at `z` in `R^n`; zero outside the spindle.
pub fn spindle_value_nd(x: &[f64], y: &[f64], epsilon: f64, psi: Profile, z: &[f64]) -> Vec<f64> {
    let n = x.len();
    let d: Vec<f64> = (0..n).map(|i| y[i] - x[i]).collect();
    let b2: f64 = d.iter().map(|v| v * v).sum();
    let b = b2.sqrt();
    let zx: Vec<f64> = (0..n).map(|i| z[i] - x[i]).collect();
    let t = zx.iter().zip(&d).map(|(a, c)| a * c).sum::<f64>() / b2;
    let mut out = vec![0.0; n];
    if !(t > 0.0 && t < 1.0) {
        return out;
    }
    let p = psi.value(t);
    let w: Vec<f64> = (0..n).map(|i| (zx[i] - t * d[i]) / p).collect();
    if w.iter().map(|v| v * v).sum::<f64>().sqrt() > epsilon {
        return out;
    }
    let denom = b * ball_volume(n - 1, epsilon) * p.powi(n as i32 - 1);
    let dp = psi.derivative(t);
    for i in 0..n {
        out[i] = (d[i] + dp * w[i]) / denom;
    }
    out
}

/// Planar spindle value at `z`; zero outside the spindle.
#[inline]
pub fn spindle_value(spec: &SpindleSpec, z: Point) -> Point {
    let d = sub(spec.y, spec.x);
    let b = euclid(d);
    let zx = sub(z, spec.x);
    let t = dot(zx, d) / (b * b);
    if !(t > 0.0 && t < 1.0) {
        return [0.0, 0.0];
    }
    let normal = [-d[1] / b, d[0] / b];
    let p = spec.psi.value(t);
    let s = dot(zx, normal) / p;
    if s.abs() > spec.epsilon {
        return [0.0, 0.0];
    }
    let v = add(d, scale(normal, spec.psi.derivative(t) * s));
    scale(v, 1.0 / (b * 2.0 * spec.epsilon * p))
}

#[derive(Debug, Clone)]
pub struct SpindleField<'d> {
    pub spec: SpindleSpec,
    pub grid_values: GridVectorField<'d>,
    /// `Σ ‖value‖·h²` in the domain norm.
    pub l1_norm: f64,
}

/// Minimal continuous clearance along the segment `[a, b]`, sampled at
/// spacing `h/4`.
fn segment_clearance(domain: &Domain, a: Point, b: Point) -> f64 {
    let len = euclid(sub(b, a));
    let n = ((4.0 * len / domain.h()).ceil() as usize).max(1);
    (0..=n)
        .map(|i| domain.clearance(lerp(a, b, i as f64 / n as f64)))
        .fold(f64::INFINITY, f64::min)
}

/// Subsampling multiplier for cells within `2h` of an endpoint, where the
/// lens is thinner than the regular sub-grid.
const TIP_REFINEMENT: usize = 8;

/// Rasterize a spindle by averaging `subsamples²` points per cell.
pub fn spindle_field<'d>(domain: &'d Domain, spec: &SpindleSpec) -> Result<SpindleField<'d>> {
    if spec.x == spec.y {
        return Err(Error::DegenerateSegment);
    }
    if !(spec.epsilon > 0.0) || spec.subsamples == 0 {
        return Err(Error::InvalidInput("spindle needs epsilon > 0 and subsamples >= 1".into()));
    }
    if segment_clearance(domain, spec.x, spec.y) <= spec.epsilon {
        return Err(Error::SpindleLeavesDomain);
    }
    let h = domain.h();
    let o = domain.origin();
    let lo = [spec.x[0].min(spec.y[0]) - spec.epsilon, spec.x[1].min(spec.y[1]) - spec.epsilon];
    let hi = [spec.x[0].max(spec.y[0]) + spec.epsilon, spec.x[1].max(spec.y[1]) + spec.epsilon];
    let i0 = ((lo[0] - o[0]) / h).floor() as i64 - 1;
    let i1 = ((hi[0] - o[0]) / h).ceil() as i64 + 1;
    let j0 = ((lo[1] - o[1]) / h).floor() as i64 - 1;
    let j1 = ((hi[1] - o[1]) / h).ceil() as i64 + 1;
    let cells: Vec<usize> = (j0..=j1)
        .flat_map(|j| (i0..=i1).filter_map(move |i| domain.cell_at(i, j)))
        .collect();
    let averaged: Vec<(usize, Point)> = cells
        .par_iter()
        .map(|&c| {
            let p = domain.center(c);
            let near_tip = euclid(sub(p, spec.x)).min(euclid(sub(p, spec.y))) <= 2.0 * h;
            let m = if near_tip { TIP_REFINEMENT * spec.subsamples } else { spec.subsamples };
            let weight = 1.0 / (m * m) as f64;
            let mut acc = [0.0, 0.0];
            for a in 0..m {
                for b in 0..m {
                    let z = [
                        p[0] + h * ((a as f64 + 0.5) / m as f64 - 0.5),
                        p[1] + h * ((b as f64 + 0.5) / m as f64 - 0.5),
                    ];
                    acc = add(acc, spindle_value(spec, z));
                }
            }
            (c, scale(acc, weight))
        })
        .collect();
    let mut values = vec![[0.0, 0.0]; domain.n_cells()];
    for (c, v) in averaged {
        if v != [0.0, 0.0] {
            if !domain.is_interior(c) {
                return Err(Error::SpindleLeavesDomain);
            }
            values[c] = v;
        }
    }
    let grid_values = GridVectorField::new(domain, values, domain.interior_mask().to_vec())?;
    let l1_norm = grid_values.l1_norm();
    Ok(SpindleField { spec: *spec, grid_values, l1_norm })
}

#[derive(Debug, Clone)]
pub struct ChainedSpindles<'d> {
    pub field: GridVectorField<'d>,
    /// Cross-section half-width used on each non-degenerate segment.
    pub epsilons: Vec<f64>,
    /// `Σ (‖Δ‖ + M·ε_i)` over the segments.
    pub l1_bound: f64,
}

/// Sum of spindles along the segments of `path`, each with half-width
/// `min(ε, clearance − 1.25h)` so that every touched cell is interior.
pub fn chain_spindles<'d>(domain: &'d Domain, path: &PLPath, epsilon: f64) -> Result<ChainedSpindles<'d>> {
    let h = domain.h();
    let mut field = GridVectorField::zeros(domain);
    let mut epsilons = Vec::new();
    let mut l1_bound = 0.0;
    for [a, b] in path.segments() {
        if a == b {
            continue;
        }
        let eps = epsilon.min(segment_clearance(domain, a, b) - 1.25 * h);
        if !(eps > 0.0) {
            return Err(Error::SpindleLeavesDomain);
        }
        let spec = SpindleSpec::new(a, b, eps);
        let sf = spindle_field(domain, &spec)?;
        field = field.add(&sf.grid_values);
        l1_bound += spec.l1_bound(domain.norm());
        epsilons.push(eps);
    }
    Ok(ChainedSpindles { field, epsilons, l1_bound })
}

/// `h(z) = ∫ u_k(γ(t) − z) γ'(t) dt` at cell centers, by the midpoint rule
/// with pieces of length at most `h/4`.
pub fn loop_smear<'d>(domain: &'d Domain, lp: &PLPath, k: u32) -> Result<GridVectorField<'d>> {
    if k == 0 {
        return Err(Error::InvalidInput("loop smear needs k >= 1".into()));
    }
    let (Some(first), Some(last)) = (lp.start(), lp.end()) else {
        return Ok(GridVectorField::zeros(domain));
    };
    if !lp.closed && first != last {
        return Err(Error::InvalidInput("loop smear needs a closed path".into()));
    }
    let radius = 1.0 / k as f64;
    let h = domain.h();
    let o = domain.origin();
    let reach = (radius / h).ceil() as i64 + 1;
    let mut values = vec![[0.0, 0.0]; domain.n_cells()];
    for [a, b] in lp.segments() {
        let seg = sub(b, a);
        let len = euclid(seg);
        if len == 0.0 {
            continue;
        }
        let pieces = (4.0 * len / h).ceil() as usize;
        let dg = scale(seg, 1.0 / pieces as f64);
        for s in 0..pieces {
            let q = lerp(a, b, (s as f64 + 0.5) / pieces as f64);
            if domain.clearance(q) <= radius {
                return Err(Error::TubeLeavesDomain { radius });
            }
            let ci = ((q[0] - o[0]) / h).floor() as i64;
            let cj = ((q[1] - o[1]) / h).floor() as i64;
            for j in cj - reach..=cj + reach {
                for i in ci - reach..=ci + reach {
                    let Some(c) = domain.cell_at(i, j) else { continue };
                    let w = mollifier_density(k as f64, sub(q, domain.center(c)));
                    if w > 0.0 {
                        if !domain.is_interior(c) {
                            return Err(Error::TubeLeavesDomain { radius });
                        }
                        values[c] = add(values[c], scale(dg, w));
                    }
                }
            }
        }
    }
    GridVectorField::new(domain, values, domain.interior_mask().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "1")]
    E1,
    #[serde(rename = "2")]
    E2,
}

impl Axis {
    pub fn from_index(i: u32) -> Result<Self> {
        match i {
            1 => Ok(Axis::E1),
            2 => Ok(Axis::E2),
            _ => Err(Error::InvalidInput(format!("axis must be 1 or 2, got {i}"))),
        }
    }

    fn along(self) -> usize {
        match self {
            Axis::E1 => 0,
            Axis::E2 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    fn check(&self, domain: &Domain) -> Result<()> {
        if !(self.max[0] > self.min[0] && self.max[1] > self.min[1]) {
            return Err(Error::InvalidInput("rectangle must have positive extent".into()));
        }
        let corners = [self.min, [self.max[0], self.min[1]], self.max, [self.min[0], self.max[1]]];
        for i in 0..4 {
            let (a, b) = (corners[i], corners[(i + 1) % 4]);
            let n = ((4.0 * euclid(sub(b, a)) / domain.h()).ceil() as usize).max(1);
            for s in 0..=n {
                if !domain.contains_point(lerp(a, b, s as f64 / n as f64)) {
                    return Err(Error::RectOutsideDomain);
                }
            }
        }
        Ok(())
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Discretized `∫_{C⊥} δ(u, b) − δ(u, a) du` for the faces of `rect`
/// normal to `axis`. Each transverse row carries its overlap length, split
/// linearly between the two cell columns bracketing the face.
pub fn rect_face_measure(domain: &Domain, rect: &Rect, axis: Axis) -> Result<Molecule> {
    rect.check(domain)?;
    let h = domain.h();
    let o = domain.origin();
    let al = axis.along();
    let tr = 1 - al;
    let n_tr = if tr == 0 { domain.nx() } else { domain.ny() };
    let cell = |along: i64, trans: i64| -> Option<usize> {
        if al == 0 {
            domain.cell_at(along, trans)
        } else {
            domain.cell_at(trans, along)
        }
    };
    let mut atoms = Vec::new();
    for j in 0..n_tr as i64 {
        let lo = o[tr] + j as f64 * h;
        let w = overlap(lo, lo + h, rect.min[tr], rect.max[tr]);
        if w <= 0.0 {
            continue;
        }
        for (face, sign) in [(rect.max[al], 1.0), (rect.min[al], -1.0)] {
            let u = (face - o[al]) / h - 0.5;
            let i = u.floor();
            let lambda = u - i;
            for (ii, wt) in [(i as i64, 1.0 - lambda), (i as i64 + 1, lambda)] {
                if wt <= 0.0 {
                    continue;
                }
                match cell(ii, j) {
                    Some(c) if domain.is_interior(c) => atoms.push(Atom { cell: c, mass: sign * w * wt }),
                    _ => return Err(Error::RectOutsideDomain),
                }
            }
        }
    }
    let mut mol = Molecule::new(atoms);
    let drift = mol.total_mass();
    if drift != 0.0 {
        mol = mol.add(&Molecule::new([Atom { cell: mol.atoms()[0].cell, mass: -drift }]));
    }
    Ok(mol)
}

/// `1_C e_axis`, with each cell weighted by its overlap fraction with `C`.
pub fn indicator_field<'d>(domain: &'d Domain, rect: &Rect, axis: Axis) -> Result<GridVectorField<'d>> {
    rect.check(domain)?;
    let h = domain.h();
    let mut values = vec![[0.0, 0.0]; domain.n_cells()];
    for c in 0..domain.n_cells() {
        let p = domain.center(c);
        let frac = overlap(p[0] - 0.5 * h, p[0] + 0.5 * h, rect.min[0], rect.max[0])
            * overlap(p[1] - 0.5 * h, p[1] + 0.5 * h, rect.min[1], rect.max[1])
            / (h * h);
        if frac > 0.0 {
            if !domain.is_interior(c) {
                return Err(Error::RectOutsideDomain);
            }
            values[c][axis.along()] = frac;
        }
    }
    GridVectorField::new(domain, values, domain.interior_mask().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainSpec};
    use crate::fields::{gaussian_battery, weak_divergence_pairing, TestFunction};
    use crate::geometry::Norm;

    #[test]
    fn ball_volumes() {
        assert_eq!(ball_volume(0, 3.0), 1.0);
        assert_eq!(ball_volume(1, 0.5), 1.0);
        assert!((ball_volume(2, 1.0) - PI).abs() < 1e-15);
        assert!((ball_volume(3, 1.0) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn planar_and_general_forms_agree() {
        let spec = SpindleSpec::new([0.2, 0.3], [0.7, 0.6], 0.1);
        for z in [[0.4, 0.42], [0.45, 0.47], [0.3, 0.36], [0.5, 0.3], [0.69, 0.595]] {
            let a = spindle_value(&spec, z);
            let b = spindle_value_nd(&spec.x, &spec.y, spec.epsilon, spec.psi, &z);
            let tol = 1e-12 * (1.0 + euclid(a));
            assert!((a[0] - b[0]).abs() < tol && (a[1] - b[1]).abs() < tol, "{z:?}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn spindle_pairs_to_endpoint_difference() {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 64.0)).unwrap();
        let spec = SpindleSpec::new([0.25, 0.5], [0.75, 0.5], 0.1);
        let sf = spindle_field(&d, &spec).unwrap();
        assert!(sf.l1_norm <= 0.6 + 0.02);
        for phi in gaussian_battery(0.0, 0.0, 1.0, 1.0) {
            let pair = weak_divergence_pairing(&sf.grid_values, &phi);
            let want = phi.value(spec.y) - phi.value(spec.x);
            assert!((pair - want).abs() < 2e-2, "{pair} vs {want}");
        }
    }

    #[test]
    fn spindle_errors() {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 16.0)).unwrap();
        assert_eq!(spindle_field(&d, &SpindleSpec::new([0.5, 0.5], [0.5, 0.5], 0.1)).unwrap_err(), Error::DegenerateSegment);
        assert_eq!(
            spindle_field(&d, &SpindleSpec::new([0.1, 0.05], [0.9, 0.05], 0.1)).unwrap_err(),
            Error::SpindleLeavesDomain
        );
    }

    #[test]
    fn degenerate_loop_is_zero() {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 16.0)).unwrap();
        let f = loop_smear(&d, &PLPath::closed(vec![[0.5, 0.5]]), 10).unwrap();
        assert!(f.values().iter().all(|v| *v == [0.0, 0.0]));
    }

    #[test]
    fn face_measure_pairs_with_linear_function() {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 32.0)).unwrap();
        let rect = Rect { min: [0.25, 0.25], max: [0.75, 0.75] };
        for axis in [Axis::E1, Axis::E2] {
            let mu = rect_face_measure(&d, &rect, axis).unwrap();
            let pair: f64 = mu.atoms().iter().map(|a| a.mass * d.center(a.cell)[axis.along()]).sum();
            assert!((pair - 0.25).abs() < 1e-12);
            assert!(mu.total_mass().abs() < 1e-15);
        }
    }
}
