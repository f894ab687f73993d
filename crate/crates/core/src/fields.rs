//! Cell-centered grid fields and the operations on them: mollification,
//! finite differences, line and loop integrals, conservativity checks and
//! the weak divergence pairing.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::domain::{erode_depth, path_length, AxisDir, Domain, PLPath, Region};
use crate::error::{Error, Result};
use crate::geometry::{dot, euclid, lerp, sub, Point};

/// Scalar field on the interior cells of a domain. Cells outside `support`
/// are undefined.
#[derive(Debug, Clone)]
pub struct GridScalarField<'d> {
    domain: &'d Domain,
    values: Vec<f64>,
    support: Vec<bool>,
}

impl<'d> GridScalarField<'d> {
    pub fn new(domain: &'d Domain, values: Vec<f64>, support: Vec<bool>) -> Result<Self> {
        if values.len() != domain.n_cells() || support.len() != domain.n_cells() {
            return Err(Error::InvalidInput("field size does not match the grid".into()));
        }
        for c in 0..values.len() {
            if support[c] && (!domain.is_interior(c) || !values[c].is_finite()) {
                return Err(Error::InvalidInput(format!("cell {c} is not a finite interior value")));
            }
        }
        Ok(GridScalarField { domain, values, support })
    }

    /// Sample `f` at every interior cell center.
    pub fn from_fn(domain: &'d Domain, f: impl Fn(Point) -> f64) -> Self {
        let mut values = vec![0.0; domain.n_cells()];
        for &c in domain.interior_cells() {
            values[c] = f(domain.center(c));
        }
        GridScalarField { domain, values, support: domain.interior_mask().to_vec() }
    }

    pub fn domain(&self) -> &'d Domain {
        self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    #[inline]
    pub fn is_supported(&self, cell: usize) -> bool {
        self.support[cell]
    }

    #[inline]
    pub fn get(&self, cell: usize) -> Option<f64> {
        self.support[cell].then(|| self.values[cell])
    }

    pub fn supported_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.support.iter().enumerate().filter(|(_, &s)| s).map(|(c, _)| c)
    }

    /// CSV rows `(i, j, cx, cy, v)` for supported cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "cx", "cy", "v"])?;
        for c in self.supported_cells() {
            let (i, j) = self.domain.ij(c);
            let p = self.domain.center(c);
            out.serialize((i, j, p[0], p[1], self.values[c]))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(domain: &'d Domain, r: R) -> Result<Self> {
        let mut values = vec![0.0; domain.n_cells()];
        let mut support = vec![false; domain.n_cells()];
        let mut rdr = csv::Reader::from_reader(r);
        for row in rdr.deserialize() {
            let (i, j, cx, cy, v): (usize, usize, f64, f64, f64) = row?;
            let c = checked_cell(domain, i, j, cx, cy)?;
            values[c] = v;
            support[c] = true;
        }
        GridScalarField::new(domain, values, support)
    }
}

/// Vector field on the interior cells of a domain, used both for `L∞`
/// (E*-valued) and `L¹` (E-valued) fields.
#[derive(Debug, Clone)]
pub struct GridVectorField<'d> {
    domain: &'d Domain,
    values: Vec<[f64; 2]>,
    support: Vec<bool>,
}

impl<'d> GridVectorField<'d> {
    pub fn new(domain: &'d Domain, values: Vec<[f64; 2]>, support: Vec<bool>) -> Result<Self> {
        if values.len() != domain.n_cells() || support.len() != domain.n_cells() {
            return Err(Error::InvalidInput("field size does not match the grid".into()));
        }
        for c in 0..values.len() {
            let finite = values[c][0].is_finite() && values[c][1].is_finite();
            if support[c] && (!domain.is_interior(c) || !finite) {
                return Err(Error::InvalidInput(format!("cell {c} is not a finite interior value")));
            }
        }
        Ok(GridVectorField { domain, values, support })
    }

    /// Zero field defined on every interior cell.
    pub fn zeros(domain: &'d Domain) -> Self {
        GridVectorField {
            domain,
            values: vec![[0.0; 2]; domain.n_cells()],
            support: domain.interior_mask().to_vec(),
        }
    }

    pub fn from_fn(domain: &'d Domain, f: impl Fn(Point) -> [f64; 2]) -> Self {
        let mut out = GridVectorField::zeros(domain);
        for &c in domain.interior_cells() {
            out.values[c] = f(domain.center(c));
        }
        out
    }

    pub(crate) fn from_parts_unchecked(domain: &'d Domain, values: Vec<[f64; 2]>, support: Vec<bool>) -> Self {
        GridVectorField { domain, values, support }
    }

    pub fn domain(&self) -> &'d Domain {
        self.domain
    }

    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    #[inline]
    pub fn is_supported(&self, cell: usize) -> bool {
        self.support[cell]
    }

    #[inline]
    pub fn get(&self, cell: usize) -> Option<[f64; 2]> {
        self.support[cell].then(|| self.values[cell])
    }

    pub fn supported_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.support.iter().enumerate().filter(|(_, &s)| s).map(|(c, _)| c)
    }

    pub fn support_region(&self) -> Region<'d> {
        Region::from_mask(self.domain, self.support.clone(), 0.0)
    }

    /// `max` over supported cells of the dual norm of the value.
    pub fn sup_norm_dual(&self) -> f64 {
        let norm = self.domain.norm();
        self.supported_cells().map(|c| norm.dual(self.values[c])).fold(0.0, f64::max)
    }

    /// `Σ ‖value‖ h²` in the domain norm.
    pub fn l1_norm(&self) -> f64 {
        let norm = self.domain.norm();
        let h2 = self.domain.h() * self.domain.h();
        self.supported_cells().map(|c| norm.norm(self.values[c])).sum::<f64>() * h2
    }

    /// Pointwise sum on the common support.
    pub fn add(&self, other: &GridVectorField<'d>) -> GridVectorField<'d> {
        assert!(std::ptr::eq(self.domain, other.domain), "fields live on different domains");
        let mut out = self.clone();
        for c in 0..out.values.len() {
            out.support[c] = self.support[c] && other.support[c];
            out.values[c] = if out.support[c] {
                [self.values[c][0] + other.values[c][0], self.values[c][1] + other.values[c][1]]
            } else {
                [0.0; 2]
            };
        }
        out
    }

    pub fn scaled(&self, s: f64) -> GridVectorField<'d> {
        let mut out = self.clone();
        for v in &mut out.values {
            *v = [v[0] * s, v[1] * s];
        }
        out
    }

    /// CSV rows `(i, j, cx, cy, vx, vy)` for supported cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "cx", "cy", "vx", "vy"])?;
        for c in self.supported_cells() {
            let (i, j) = self.domain.ij(c);
            let p = self.domain.center(c);
            out.serialize((i, j, p[0], p[1], self.values[c][0], self.values[c][1]))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(domain: &'d Domain, r: R) -> Result<Self> {
        let mut values = vec![[0.0; 2]; domain.n_cells()];
        let mut support = vec![false; domain.n_cells()];
        let mut rdr = csv::Reader::from_reader(r);
        for row in rdr.deserialize() {
            let (i, j, cx, cy, vx, vy): (usize, usize, f64, f64, f64, f64) = row?;
            let c = checked_cell(domain, i, j, cx, cy)?;
            values[c] = [vx, vy];
            support[c] = true;
        }
        GridVectorField::new(domain, values, support)
    }
}

fn checked_cell(domain: &Domain, i: usize, j: usize, cx: f64, cy: f64) -> Result<usize> {
    let c = domain
        .cell_at(i as i64, j as i64)
        .ok_or_else(|| Error::InvalidInput(format!("cell ({i}, {j}) is off the grid")))?;
    let p = domain.center(c);
    let tol = 1e-9 * domain.h();
    if (p[0] - cx).abs() > tol || (p[1] - cy).abs() > tol {
        return Err(Error::InvalidInput(format!("cell ({i}, {j}) center mismatch")));
    }
    if !domain.is_interior(c) {
        return Err(Error::InvalidInput(format!("cell ({i}, {j}) is not interior")));
    }
    Ok(c)
}

/// Anything that can be evaluated along a path.
pub trait VectorFieldEval {
    /// Value at `p`, or `None` outside the field's support.
    fn eval(&self, p: Point) -> Option<[f64; 2]>;
}

/// Lower-left index of the 2x2 block of cells whose centers bracket the
/// grid coordinate `u`, with the fractional offset. On a block boundary the
/// neighbouring block is offered as a second candidate.
fn candidates(u: f64) -> ([(i64, f64); 2], usize) {
    let iu = u.floor();
    let f = u - iu;
    let first = (iu as i64, f);
    if f < 1e-9 {
        ([first, (iu as i64 - 1, 1.0)], 2)
    } else if f > 1.0 - 1e-9 {
        ([first, (iu as i64 + 1, 0.0)], 2)
    } else {
        ([first, first], 1)
    }
}

/// First 2x2 block around `p` accepted by `accept(cells, weights)`.
fn bracket(
    domain: &Domain,
    p: Point,
    mut accept: impl FnMut(&[usize; 4], &[f64; 4]) -> bool,
) -> Option<([usize; 4], [f64; 4], f64, f64)> {
    let h = domain.h();
    let o = domain.origin();
    let (ic, ni) = candidates((p[0] - o[0]) / h - 0.5);
    let (jc, nj) = candidates((p[1] - o[1]) / h - 0.5);
    for &(i0, fx) in &ic[..ni] {
        for &(j0, fy) in &jc[..nj] {
            let cells = [
                domain.cell_at(i0, j0),
                domain.cell_at(i0 + 1, j0),
                domain.cell_at(i0, j0 + 1),
                domain.cell_at(i0 + 1, j0 + 1),
            ];
            let [Some(a), Some(b), Some(c), Some(d)] = cells else { continue };
            let cells = [a, b, c, d];
            let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
            if accept(&cells, &w) {
                return Some((cells, w, fx, fy));
            }
        }
    }
    None
}

impl VectorFieldEval for GridVectorField<'_> {
    /// Bilinear interpolation; corners with non-zero weight must be supported.
    fn eval(&self, p: Point) -> Option<[f64; 2]> {
        let (cells, w, _, _) = bracket(self.domain, p, |cells, w| {
            cells.iter().zip(w).all(|(&c, &wc)| wc < 1e-12 || self.support[c])
        })?;
        let mut out = [0.0; 2];
        for (&c, &wc) in cells.iter().zip(&w) {
            if wc >= 1e-12 {
                out[0] += wc * self.values[c][0];
                out[1] += wc * self.values[c][1];
            }
        }
        Some(out)
    }
}

/// Closed-form field with a validity predicate.
#[derive(Clone)]
pub struct AnalyticField {
    evaluator: Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>,
    validity: Arc<dyn Fn(Point) -> bool + Send + Sync>,
}

impl std::fmt::Debug for AnalyticField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("AnalyticField")
    }
}

impl AnalyticField {
    pub fn new(
        evaluator: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
        validity: impl Fn(Point) -> bool + Send + Sync + 'static,
    ) -> Self {
        AnalyticField { evaluator: Arc::new(evaluator), validity: Arc::new(validity) }
    }

    pub fn is_valid(&self, p: Point) -> bool {
        (self.validity)(p)
    }

    /// Point samples at interior cell centers inside the validity set.
    pub fn sample<'d>(&self, domain: &'d Domain) -> GridVectorField<'d> {
        let mut values = vec![[0.0; 2]; domain.n_cells()];
        let mut support = vec![false; domain.n_cells()];
        for &c in domain.interior_cells() {
            let p = domain.center(c);
            if self.is_valid(p) {
                values[c] = (self.evaluator)(p);
                support[c] = true;
            }
        }
        GridVectorField::from_parts_unchecked(domain, values, support)
    }
}

impl VectorFieldEval for AnalyticField {
    fn eval(&self, p: Point) -> Option<[f64; 2]> {
        self.is_valid(p).then(|| (self.evaluator)(p))
    }
}

/// The vortex `(−y, x)/(x² + y²)` shifted to `center`, valid outside the
/// open ball of radius `min_radius`.
pub fn vortex_field(center: Point, min_radius: f64) -> AnalyticField {
    assert!(min_radius > 0.0, "vortex needs a positive exclusion radius");
    AnalyticField::new(
        move |p| {
            let [x, y] = sub(p, center);
            let r2 = x * x + y * y;
            [-y / r2, x / r2]
        },
        move |p| euclid(sub(p, center)) >= min_radius,
    )
}

/// Exact gradient of the bilinear interpolant of a scalar grid field.
pub struct InterpolantGradient<'a, 'd> {
    pub field: &'a GridScalarField<'d>,
}

impl VectorFieldEval for InterpolantGradient<'_, '_> {
    fn eval(&self, p: Point) -> Option<[f64; 2]> {
        let f = self.field;
        let h = f.domain.h();
        let (cells, _, fx, fy) = bracket(f.domain, p, |cells, _| cells.iter().all(|&c| f.support[c]))?;
        let [f00, f10, f01, f11] = cells.map(|c| f.values[c]);
        Some([
            ((1.0 - fy) * (f10 - f00) + fy * (f11 - f01)) / h,
            ((1.0 - fx) * (f01 - f00) + fx * (f11 - f10)) / h,
        ])
    }
}

/// Base bump `exp(−1/(1−r²))` on the open unit ball, unnormalized.
#[inline]
pub fn bump(r: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// `∫_{B(0,1)} bump(|x|) dx` in the plane.
pub fn bump_mass_2d() -> f64 {
    static MASS: std::sync::OnceLock<f64> = std::sync::OnceLock::new();
    *MASS.get_or_init(|| {
        // composite Simpson on 2π ∫₀¹ r bump(r) dr; the integrand is C^∞ and flat at 1
        let n = 20_000;
        let step = 1.0 / n as f64;
        let g = |r: f64| r * bump(r);
        let mut s = g(0.0) + g(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * g(i as f64 * step);
        }
        2.0 * PI * s * step / 3.0
    })
}

/// Continuous mollifier `u_k(x) = k² u(kx)` with `∫ u = 1`.
#[inline]
pub fn mollifier_density(k: f64, x: Point) -> f64 {
    k * k * bump(k * euclid(x)) / bump_mass_2d()
}

/// Discrete mollifier: bump weights on cell offsets inside radius `1/k`,
/// normalized to unit sum.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub k: u32,
    pub radius: f64,
    pub weights: Vec<(i64, i64, f64)>,
}

impl Mollifier {
    /// Largest index offset carried by the kernel.
    pub fn reach(&self) -> i64 {
        self.weights.iter().map(|&(di, dj, _)| di.abs().max(dj.abs())).max().unwrap_or(0)
    }
}

pub fn make_mollifier(domain: &Domain, k: u32) -> Result<Mollifier> {
    if k == 0 {
        return Err(Error::InvalidInput("mollifier parameter k must be positive".into()));
    }
    let h = domain.h();
    let radius = 1.0 / k as f64;
    if radius < h * (1.0 - 1e-12) {
        return Err(Error::KernelTooSmall { radius, h });
    }
    let reach = (radius / h).floor() as i64;
    let mut weights = Vec::new();
    for dj in -reach..=reach {
        for di in -reach..=reach {
            let r = h * ((di * di + dj * dj) as f64).sqrt() / radius;
            let w = bump(r);
            if w > 0.0 {
                weights.push((di, dj, w));
            }
        }
    }
    let total: f64 = weights.iter().map(|w| w.2).sum();
    for w in &mut weights {
        w.2 /= total;
    }
    Ok(Mollifier { k, radius, weights })
}

/// Convolution with the discrete kernel on the erosion at depth
/// `radius + h/2`, restricted to cells whose whole stencil is supported.
pub fn mollify<'d>(g: &GridVectorField<'d>, m: &Mollifier) -> Result<GridVectorField<'d>> {
    let domain = g.domain;
    let depth = m.radius + 0.5 * domain.h();
    let region = erode_depth(domain, depth)?;
    let cells: Vec<usize> = region.cells().collect();
    let results: Vec<Option<[f64; 2]>> = cells
        .par_iter()
        .map(|&c| {
            let (i, j) = domain.ij(c);
            let mut acc = [0.0; 2];
            for &(di, dj, w) in &m.weights {
                let cell = domain.cell_at(i as i64 + di, j as i64 + dj)?;
                if !g.support[cell] {
                    return None;
                }
                acc[0] += w * g.values[cell][0];
                acc[1] += w * g.values[cell][1];
            }
            Some(acc)
        })
        .collect();
    let mut out = GridVectorField::from_parts_unchecked(
        domain,
        vec![[0.0; 2]; domain.n_cells()],
        vec![false; domain.n_cells()],
    );
    for (&c, r) in cells.iter().zip(results) {
        if let Some(v) = r {
            out.values[c] = v;
            out.support[c] = true;
        }
    }
    if !out.support.iter().any(|&s| s) {
        return Err(Error::EmptyErosion { depth });
    }
    Ok(out)
}

fn axis_derivative(
    domain: &Domain,
    c: usize,
    value: impl Fn(usize) -> Option<f64>,
    plus: AxisDir,
    minus: AxisDir,
) -> Option<f64> {
    let h = domain.h();
    let fp = domain.axis_neighbor(c, plus).and_then(&value);
    let fm = domain.axis_neighbor(c, minus).and_then(&value);
    let f0 = value(c)?;
    match (fp, fm) {
        (Some(a), Some(b)) => Some((a - b) / (2.0 * h)),
        (Some(a), None) => Some((a - f0) / h),
        (None, Some(b)) => Some((f0 - b) / h),
        (None, None) => None,
    }
}

/// Finite-difference gradient: central where both axis neighbours are
/// supported, one-sided where only one is.
pub fn gradient<'d>(f: &GridScalarField<'d>) -> Result<GridVectorField<'d>> {
    let domain = f.domain;
    let n = domain.n_cells();
    let mut values = vec![[0.0; 2]; n];
    let mut support = vec![false; n];
    for c in f.supported_cells() {
        let gx = axis_derivative(domain, c, |x| f.get(x), AxisDir::East, AxisDir::West);
        let gy = axis_derivative(domain, c, |x| f.get(x), AxisDir::North, AxisDir::South);
        match (gx, gy) {
            (Some(gx), Some(gy)) => {
                values[c] = [gx, gy];
                support[c] = true;
            }
            (None, None) => return Err(Error::IsolatedCell(c)),
            _ => {}
        }
    }
    Ok(GridVectorField::from_parts_unchecked(domain, values, support))
}

/// Composite midpoint rule for `∫ g(γ)·γ' dt`, each segment split into
/// pieces no longer than `step`.
pub fn line_integral(g: &dyn VectorFieldEval, path: &PLPath, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput("quadrature step must be positive".into()));
    }
    let mut total = 0.0;
    for [a, b] in path.segments() {
        let d = sub(b, a);
        let len = euclid(d);
        if len == 0.0 {
            continue;
        }
        let pieces = ((len / step).ceil() as usize).max(1);
        let mut seg = 0.0;
        for s in 0..pieces {
            let p = lerp(a, b, (s as f64 + 0.5) / pieces as f64);
            let v = g.eval(p).ok_or(Error::PathLeavesSupport(p))?;
            seg += dot(v, d);
        }
        total += seg / pieces as f64;
    }
    Ok(total)
}

/// `max |∂₁(g₂∗u_k) − ∂₂(g₁∗u_k)|` by central differences.
pub fn jacobian_symmetry_defect(g: &GridVectorField<'_>, m: &Mollifier) -> Result<f64> {
    let mg = mollify(g, m)?;
    symmetry_defect_of(&mg).ok_or(Error::EmptyErosion { depth: m.radius + 0.5 * g.domain.h() })
}

/// Symmetry defect of a field that is already smooth; `None` when no cell
/// has all four axis neighbours supported.
pub fn symmetry_defect_of(g: &GridVectorField<'_>) -> Option<f64> {
    let d = g.domain;
    let h = d.h();
    let mut worst: Option<f64> = None;
    for c in g.supported_cells() {
        let nb = |dir| d.axis_neighbor(c, dir).and_then(|x| g.get(x));
        let (Some(e), Some(w), Some(n), Some(s)) =
            (nb(AxisDir::East), nb(AxisDir::West), nb(AxisDir::North), nb(AxisDir::South))
        else {
            continue;
        };
        let d1g2 = (e[1] - w[1]) / (2.0 * h);
        let d2g1 = (n[0] - s[0]) / (2.0 * h);
        let defect = (d1g2 - d2g1).abs();
        worst = Some(worst.map_or(defect, |x: f64| x.max(defect)));
    }
    worst
}

/// Loops used by [`conservativity_check`].
#[derive(Debug, Clone)]
pub enum LoopSelection {
    /// Every grid-face 4-cycle of the mollified support plus one cycle
    /// around each of its holes.
    Auto,
    Explicit(Vec<PLPath>),
}

#[derive(Debug, Clone)]
pub struct LoopIntegral {
    pub path: PLPath,
    pub integral: f64,
}

#[derive(Debug, Clone)]
pub struct ConservativityReport {
    pub k: u32,
    pub max_loop_integral: f64,
    pub worst_loop: PLPath,
    pub loop_count: usize,
    /// Hole-encircling loops (auto mode) with their integrals.
    pub hole_loops: Vec<LoopIntegral>,
    pub tolerance: f64,
    pub conservative: bool,
    /// `‖g‖∞` of the raw field, in the dual norm.
    pub sup_norm: f64,
    pub longest_loop: f64,
}

/// Decide conservativity of `g` through the loop integrals of `g ∗ u_k`.
///
/// The default tolerance is `10·h·ℓ_max·‖g‖∞`.
pub fn conservativity_check(
    g: &GridVectorField<'_>,
    k: u32,
    loops: &LoopSelection,
    tol: Option<f64>,
) -> Result<ConservativityReport> {
    let m = make_mollifier(g.domain, k)?;
    let mg = mollify(g, &m)?;
    conservativity_of_mollified(&mg, k, g.sup_norm_dual(), loops, tol)
}

/// As [`conservativity_check`] for an already mollified field.
pub fn conservativity_of_mollified(
    mg: &GridVectorField<'_>,
    k: u32,
    sup_norm: f64,
    loops: &LoopSelection,
    tol: Option<f64>,
) -> Result<ConservativityReport> {
    let domain = mg.domain;
    let step = domain.h();
    let (faces, holes) = match loops {
        LoopSelection::Auto => {
            let region = mg.support_region();
            (region.face_cycles(), region.hole_cycles())
        }
        LoopSelection::Explicit(list) => (list.clone(), Vec::new()),
    };
    let mut max_loop_integral = 0.0;
    let mut worst = None;
    let mut longest: f64 = 0.0;
    for (i, lp) in faces.iter().enumerate() {
        let v = line_integral(mg, lp, step).map_err(|_| Error::LoopOutsideRegion(i))?;
        longest = longest.max(path_length(lp, domain.norm()));
        if worst.is_none() || v.abs() > max_loop_integral {
            max_loop_integral = v.abs();
            worst = Some(lp.clone());
        }
    }
    let mut hole_loops = Vec::new();
    for (i, lp) in holes.iter().enumerate() {
        let v = line_integral(mg, lp, step).map_err(|_| Error::LoopOutsideRegion(faces.len() + i))?;
        longest = longest.max(path_length(lp, domain.norm()));
        if worst.is_none() || v.abs() > max_loop_integral {
            max_loop_integral = v.abs();
            worst = Some(lp.clone());
        }
        hole_loops.push(LoopIntegral { path: lp.clone(), integral: v });
    }
    let tolerance = tol.unwrap_or(10.0 * domain.h() * longest * sup_norm);
    Ok(ConservativityReport {
        k,
        max_loop_integral,
        worst_loop: worst.unwrap_or_else(|| PLPath::closed(Vec::new())),
        loop_count: faces.len() + holes.len(),
        hole_loops,
        tolerance,
        conservative: max_loop_integral <= tolerance,
        sup_norm,
        longest_loop: longest,
    })
}

/// Smooth test function on all of E.
pub trait TestFunction {
    fn value(&self, p: Point) -> f64;
    fn grad(&self, p: Point) -> [f64; 2];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBump {
    pub center: Point,
    pub sigma: f64,
    pub amplitude: f64,
}

impl TestFunction for GaussianBump {
    fn value(&self, p: Point) -> f64 {
        let d = sub(p, self.center);
        self.amplitude * (-dot(d, d) / (2.0 * self.sigma * self.sigma)).exp()
    }

    fn grad(&self, p: Point) -> [f64; 2] {
        let d = sub(p, self.center);
        let s = -self.value(p) / (self.sigma * self.sigma);
        [s * d[0], s * d[1]]
    }
}

/// Ten Gaussian bumps spread over the box `[x0,x1] x [y0,y1]`.
pub fn gaussian_battery(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<GaussianBump> {
    let (w, hgt) = (x1 - x0, y1 - y0);
    let size = w.min(hgt);
    let rel: [(f64, f64, f64); 10] = [
        (0.50, 0.50, 0.30),
        (0.25, 0.50, 0.20),
        (0.75, 0.50, 0.20),
        (0.30, 0.30, 0.25),
        (0.70, 0.65, 0.25),
        (0.40, 0.70, 0.18),
        (0.60, 0.35, 0.18),
        (0.20, 0.80, 0.35),
        (0.85, 0.20, 0.30),
        (0.55, 0.55, 0.40),
    ];
    rel.iter()
        .enumerate()
        .map(|(i, &(a, b, s))| GaussianBump {
            center: [x0 + a * w, y0 + b * hgt],
            sigma: s * size,
            amplitude: if i % 2 == 0 { 1.0 } else { -0.8 },
        })
        .collect()
}

/// Discrete `⟨h, ∇φ⟩ = Σ h(c)·∇φ(c) h²` over supported cells; with the
/// zero extension this is `⟨−div h, φ⟩` on all of E.
pub fn weak_divergence_pairing(hfield: &GridVectorField<'_>, testfn: &dyn TestFunction) -> f64 {
    let d = hfield.domain;
    let h2 = d.h() * d.h();
    hfield
        .supported_cells()
        .map(|c| dot(hfield.values[c], testfn.grad(d.center(c))))
        .sum::<f64>()
        * h2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainSpec};
    use crate::geometry::Norm;

    fn square(h: f64) -> Domain {
        build_domain(DomainSpec::unit_square(Norm::L2, h)).unwrap()
    }

    #[test]
    fn mollifier_normalized_and_scaled() {
        let d = square(1.0 / 64.0);
        let m = make_mollifier(&d, 16).unwrap();
        let total: f64 = m.weights.iter().map(|w| w.2).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(m.weights.iter().all(|w| w.2 >= 0.0));
        assert_eq!(m.reach(), 3);
        let half = make_mollifier(&d, 32).unwrap();
        assert!((half.radius - m.radius / 2.0).abs() < 1e-15);
        assert!(matches!(make_mollifier(&d, 128), Err(Error::KernelTooSmall { .. })));
    }

    #[test]
    fn mollify_keeps_constants() {
        let d = square(1.0 / 32.0);
        let g = GridVectorField::from_fn(&d, |_| [0.3, -1.2]);
        let m = make_mollifier(&d, 8).unwrap();
        let mg = mollify(&g, &m).unwrap();
        assert!(mg.supported_cells().count() > 0);
        for c in mg.supported_cells() {
            let v = mg.get(c).unwrap();
            assert!((v[0] - 0.3).abs() < 1e-12 && (v[1] + 1.2).abs() < 1e-12);
            assert!(d.dist_to_boundary(c) > m.radius + d.h() / 2.0);
        }
    }

    #[test]
    fn gradient_of_linear_is_exact() {
        let d = square(1.0 / 32.0);
        let f = GridScalarField::from_fn(&d, |p| p[0]);
        let g = gradient(&f).unwrap();
        assert_eq!(g.supported_cells().count(), d.interior_cells().len());
        for c in g.supported_cells() {
            let v = g.get(c).unwrap();
            assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
        }
        let flat = gradient(&GridScalarField::from_fn(&d, |_| 2.5)).unwrap();
        assert_eq!(flat.sup_norm_dual(), 0.0);
    }

    #[test]
    fn constant_line_integral_and_shear_defect() {
        let g = AnalyticField::new(|_| [1.0, 0.0], |_| true);
        let p = PLPath::open(vec![[0.0, 0.0], [3.0, 0.0]]);
        assert!((line_integral(&g, &p, 0.01).unwrap() - 3.0).abs() < 1e-9);

        let d = square(1.0 / 32.0);
        let shear = GridVectorField::from_fn(&d, |p| [p[1], 0.0]);
        let m = make_mollifier(&d, 8).unwrap();
        let defect = jacobian_symmetry_defect(&shear, &m).unwrap();
        assert!((defect - 1.0).abs() < 1e-9, "{defect}");
    }

    #[test]
    fn vortex_identities() {
        let v = vortex_field([0.5, -0.25], 0.1);
        let at = v.eval([1.5, -0.25]).unwrap();
        assert!((at[0]).abs() < 1e-15 && (at[1] - 1.0).abs() < 1e-15);
        for p in [[0.9, 0.3], [-1.0, 2.0], [0.5, 0.5]] {
            let g = v.eval(p).unwrap();
            let r = sub(p, [0.5, -0.25]);
            assert!((euclid(g) - 1.0 / euclid(r)).abs() < 1e-12);
            assert!(dot(g, r).abs() < 1e-12);
        }
        assert!(v.eval([0.52, -0.25]).is_none());
    }

    #[test]
    fn leaving_support_is_an_error() {
        let d = square(1.0 / 16.0);
        let g = GridVectorField::from_fn(&d, |_| [1.0, 0.0]);
        let p = PLPath::open(vec![[0.5, 0.5], [0.99, 0.5]]);
        assert!(matches!(line_integral(&g, &p, d.h()), Err(Error::PathLeavesSupport(_))));
    }

    #[test]
    fn zero_field_pairs_to_zero() {
        let d = square(1.0 / 16.0);
        let z = GridVectorField::zeros(&d);
        for phi in gaussian_battery(0.0, 0.0, 1.0, 1.0) {
            assert_eq!(weak_divergence_pairing(&z, &phi), 0.0);
        }
    }

    #[test]
    fn bump_mass_matches_known_constant() {
        // ∫_{B1} exp(-1/(1-|x|²)) dx ≈ 0.466512 in the plane
        assert!((bump_mass_2d() - 0.466512).abs() < 1e-5, "{}", bump_mass_2d());
    }
}
