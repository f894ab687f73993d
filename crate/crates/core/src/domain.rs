//! Rasterized planar domains carrying their intrinsic (path-length) metric.
//!
//! A [`Domain`] is a uniform grid of square cells over the bounding box of
//! the outer polygon. A cell is interior when its center lies inside the
//! outer polygon, outside every hole, and strictly farther than `h/2` from
//! every boundary segment (polygon edges and slits). Interior cells are
//! joined by straight edges at coprime offsets of Chebyshev radius at most
//! `K`, weighted by the norm of the offset. Edges are kept only when the
//! segment between the two centers stays inside the union of closed interior
//! cells and crosses no boundary segment, which is how zero-width slits
//! sever the graph.
//!
//! The graph metric is the metric used for every discrete-exact statement
//! in this crate.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    dist_to_segment, euclid, lerp, point_in_polygon, polygon_edges, polygon_is_simple,
    segments_intersect, signed_area, sub, Norm, Point,
};

pub const NO_PRED: u32 = u32::MAX;

/// Clearance slack so cells exactly `h/2` from a boundary are excluded on
/// every side of the grid despite rounding in the center coordinates.
const CLEARANCE_SLACK: f64 = 1e-9;

/// Input description of a polygonal domain with holes and slits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub outer: Vec<Point>,
    #[serde(default)]
    pub holes: Vec<Vec<Point>>,
    /// Zero-width obstacles, each a segment removed from the open region.
    #[serde(default)]
    pub slits: Vec<[Point; 2]>,
    pub norm: Norm,
    pub h: f64,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub neighborhood_order: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basepoint: Option<Point>,
}

impl DomainSpec {
    pub fn new(outer: Vec<Point>, norm: Norm, h: f64) -> Self {
        DomainSpec {
            outer,
            holes: Vec::new(),
            slits: Vec::new(),
            norm,
            h,
            neighborhood_order: None,
            basepoint: None,
        }
    }

    pub fn with_hole(mut self, hole: Vec<Point>) -> Self {
        self.holes.push(hole);
        self
    }

    pub fn with_slit(mut self, a: Point, b: Point) -> Self {
        self.slits.push([a, b]);
        self
    }

    pub fn with_neighborhood(mut self, k: u32) -> Self {
        self.neighborhood_order = Some(k);
        self
    }

    pub fn with_basepoint(mut self, p: Point) -> Self {
        self.basepoint = Some(p);
        self
    }

    pub fn neighborhood(&self) -> u32 {
        self.neighborhood_order
            .unwrap_or_else(|| self.norm.default_neighborhood())
    }

    /// Axis-aligned rectangle `[x0,x1] x [y0,y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64, norm: Norm, h: f64) -> Self {
        DomainSpec::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]], norm, h)
    }

    /// Unit square `[0,1]²`.
    pub fn unit_square(norm: Norm, h: f64) -> Self {
        DomainSpec::rectangle(0.0, 0.0, 1.0, 1.0, norm, h)
    }

    /// `[-1,1]²` with the centered square hole `[-r,r]²`.
    pub fn square_annulus(r: f64, norm: Norm, h: f64) -> Self {
        DomainSpec::rectangle(-1.0, -1.0, 1.0, 1.0, norm, h)
            .with_hole(vec![[-r, -r], [r, -r], [r, r], [-r, r]])
    }

    /// Open unit l1-ball with the slit `{(t, 0) : t >= 0}` removed.
    pub fn slit_l1_disk(h: f64) -> Self {
        DomainSpec::new(
            vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
            Norm::L1,
            h,
        )
        .with_slit([0.0, 0.0], [1.0, 0.0])
        .with_neighborhood(1)
    }

    fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::DegenerateSpec(format!("grid spacing {} must be positive", self.h)));
        }
        let k = self.neighborhood();
        if !(1..=3).contains(&k) {
            return Err(Error::DegenerateSpec(format!("neighborhood order {k} not in 1..=3")));
        }
        let check_poly = |poly: &[Point], what: &str| -> Result<()> {
            if poly.len() < 3 || poly.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
                return Err(Error::DegenerateSpec(format!("{what} needs at least 3 finite vertices")));
            }
            if signed_area(poly).abs() <= f64::EPSILON {
                return Err(Error::DegenerateSpec(format!("{what} has zero area")));
            }
            if !polygon_is_simple(poly) {
                return Err(Error::DegenerateSpec(format!("{what} is self-intersecting")));
            }
            Ok(())
        };
        check_poly(&self.outer, "outer polygon")?;
        for (i, hole) in self.holes.iter().enumerate() {
            check_poly(hole, &format!("hole {i}"))?;
            if hole.iter().any(|&p| !point_in_polygon(p, &self.outer)) {
                return Err(Error::DegenerateSpec(format!("hole {i} is not inside the outer polygon")));
            }
            for e in polygon_edges(hole) {
                if polygon_edges(&self.outer).any(|o| segments_intersect(e[0], e[1], o[0], o[1])) {
                    return Err(Error::DegenerateSpec(format!("hole {i} touches the outer polygon")));
                }
            }
            for (j, other) in self.holes.iter().enumerate().take(i) {
                let overlap = hole.iter().any(|&p| point_in_polygon(p, other))
                    || other.iter().any(|&p| point_in_polygon(p, hole))
                    || polygon_edges(hole).any(|e| {
                        polygon_edges(other).any(|o| segments_intersect(e[0], e[1], o[0], o[1]))
                    });
                if overlap {
                    return Err(Error::DegenerateSpec(format!("holes {j} and {i} overlap")));
                }
            }
        }
        for s in &self.slits {
            if euclid(sub(s[1], s[0])) == 0.0 {
                return Err(Error::DegenerateSpec("zero-length slit".into()));
            }
        }
        Ok(())
    }
}

/// Grid direction along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisDir {
    East,
    West,
    North,
    South,
}

impl AxisDir {
    pub fn offset(self) -> (i64, i64) {
        match self {
            AxisDir::East => (1, 0),
            AxisDir::West => (-1, 0),
            AxisDir::North => (0, 1),
            AxisDir::South => (0, -1),
        }
    }
}

/// Rasterized domain with its grid graph.
#[derive(Debug, Clone)]
pub struct Domain {
    spec: DomainSpec,
    origin: Point,
    nx: usize,
    ny: usize,
    interior: Vec<bool>,
    dist_to_boundary: Vec<f64>,
    boundary: Vec<[Point; 2]>,
    interior_cells: Vec<usize>,
    adj_start: Vec<usize>,
    adj_target: Vec<u32>,
    adj_weight: Vec<f64>,
    adj_offset: Vec<(i8, i8)>,
    basepoint: usize,
}

/// Coprime lattice offsets of Chebyshev radius at most `k`; `k = 1` is the
/// 4-neighbourhood.
pub fn neighborhood_offsets(k: u32) -> Vec<(i64, i64)> {
    fn gcd(a: i64, b: i64) -> i64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    if k == 1 {
        return vec![(1, 0), (0, 1), (-1, 0), (0, -1)];
    }
    let k = k as i64;
    let mut out = Vec::new();
    for dj in -k..=k {
        for di in -k..=k {
            if (di, dj) != (0, 0) && gcd(di.abs(), dj.abs()) == 1 {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Build the rasterized domain.
pub fn build_domain(spec: DomainSpec) -> Result<Domain> {
    spec.validate()?;
    let h = spec.h;
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &spec.outer {
        xmin = xmin.min(p[0]);
        ymin = ymin.min(p[1]);
        xmax = xmax.max(p[0]);
        ymax = ymax.max(p[1]);
    }
    let nx = ((xmax - xmin) / h - 1e-9).ceil().max(1.0) as usize;
    let ny = ((ymax - ymin) / h - 1e-9).ceil().max(1.0) as usize;
    if nx.saturating_mul(ny) > 50_000_000 {
        return Err(Error::DegenerateSpec(format!("grid of {nx}x{ny} cells is too large")));
    }
    let origin = [xmin, ymin];

    let mut boundary: Vec<[Point; 2]> = polygon_edges(&spec.outer).collect();
    for hole in &spec.holes {
        boundary.extend(polygon_edges(hole));
    }
    boundary.extend(spec.slits.iter().copied());

    let n = nx * ny;
    let mut interior = vec![false; n];
    let mut dist_to_boundary = vec![0.0; n];
    for j in 0..ny {
        for i in 0..nx {
            let c = [origin[0] + (i as f64 + 0.5) * h, origin[1] + (j as f64 + 0.5) * h];
            let d = boundary
                .iter()
                .map(|s| dist_to_segment(c, s[0], s[1]))
                .fold(f64::INFINITY, f64::min);
            let inside = point_in_polygon(c, &spec.outer)
                && !spec.holes.iter().any(|hole| point_in_polygon(c, hole));
            let id = j * nx + i;
            dist_to_boundary[id] = if inside { d } else { 0.0 };
            interior[id] = inside && d > 0.5 * h * (1.0 + CLEARANCE_SLACK);
        }
    }
    let interior_cells: Vec<usize> = (0..n).filter(|&c| interior[c]).collect();
    if interior_cells.is_empty() {
        return Err(Error::DegenerateSpec("grid spacing exceeds the feature size: no interior cell".into()));
    }

    let mut dom = Domain {
        spec,
        origin,
        nx,
        ny,
        interior,
        dist_to_boundary,
        boundary,
        interior_cells,
        adj_start: Vec::new(),
        adj_target: Vec::new(),
        adj_weight: Vec::new(),
        adj_offset: Vec::new(),
        basepoint: 0,
    };
    dom.build_graph();

    let components = dom.count_components();
    if components != 1 {
        return Err(Error::DisconnectedInterior { components });
    }
    dom.basepoint = match dom.spec.basepoint {
        Some(p) => dom.snap(p)?,
        None => *dom
            .interior_cells
            .iter()
            .max_by(|&&a, &&b| {
                dom.dist_to_boundary[a]
                    .total_cmp(&dom.dist_to_boundary[b])
                    .then(b.cmp(&a))
            })
            .expect("nonempty interior"),
    };
    Ok(dom)
}

impl Domain {
    fn build_graph(&mut self) {
        let h = self.spec.h;
        let norm = self.spec.norm;
        let offsets = neighborhood_offsets(self.spec.neighborhood());
        let n = self.nx * self.ny;
        let mut lists: Vec<Vec<(u32, f64, (i8, i8))>> = vec![Vec::new(); n];
        for &u in &self.interior_cells {
            let (i, j) = self.ij(u);
            for &(di, dj) in &offsets {
                // each undirected edge is examined once, from its lexicographically smaller end
                if dj < 0 || (dj == 0 && di < 0) {
                    continue;
                }
                let Some(v) = self.cell_at(i as i64 + di, j as i64 + dj) else {
                    continue;
                };
                if !self.interior[v] {
                    continue;
                }
                let len = h * ((di * di + dj * dj) as f64).sqrt();
                if !self.edge_is_clear(u, v, len) {
                    continue;
                }
                let w = norm.norm([di as f64 * h, dj as f64 * h]);
                lists[u].push((v as u32, w, (di as i8, dj as i8)));
                lists[v].push((u as u32, w, (-di as i8, -dj as i8)));
            }
        }
        self.adj_start = Vec::with_capacity(n + 1);
        self.adj_start.push(0);
        for list in &lists {
            for &(v, w, o) in list {
                self.adj_target.push(v);
                self.adj_weight.push(w);
                self.adj_offset.push(o);
            }
            self.adj_start.push(self.adj_target.len());
        }
    }

    fn edge_is_clear(&self, u: usize, v: usize, len: f64) -> bool {
        let h = self.spec.h;
        let margin = self.dist_to_boundary[u].min(self.dist_to_boundary[v]);
        if margin > len + 1.3 * h {
            return true;
        }
        let (a, b) = (self.center(u), self.center(v));
        if self
            .boundary
            .iter()
            .any(|s| segments_intersect(a, b, s[0], s[1]))
        {
            return false;
        }
        let steps = ((len / (0.25 * h)).ceil() as usize).max(1);
        (0..=steps).all(|s| self.in_cell_union(lerp(a, b, s as f64 / steps as f64)))
    }

    fn count_components(&self) -> usize {
        let mut seen = vec![false; self.nx * self.ny];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for &s in &self.interior_cells {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for (v, _) in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        count
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn h(&self) -> f64 {
        self.spec.h
    }

    pub fn norm(&self) -> Norm {
        self.spec.norm
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    /// Number of grid cells, interior or not.
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior
    }

    pub fn is_interior(&self, cell: usize) -> bool {
        self.interior[cell]
    }

    pub fn interior_cells(&self) -> &[usize] {
        &self.interior_cells
    }

    pub fn dist_to_boundary(&self, cell: usize) -> f64 {
        self.dist_to_boundary[cell]
    }

    pub fn max_dist_to_boundary(&self) -> f64 {
        self.interior_cells
            .iter()
            .map(|&c| self.dist_to_boundary[c])
            .fold(0.0, f64::max)
    }

    pub fn boundary_segments(&self) -> &[[Point; 2]] {
        &self.boundary
    }

    pub fn basepoint(&self) -> usize {
        self.basepoint
    }

    #[inline]
    pub fn ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    #[inline]
    pub fn cell_at(&self, i: i64, j: i64) -> Option<usize> {
        if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
            None
        } else {
            Some(j as usize * self.nx + i as usize)
        }
    }

    #[inline]
    pub fn center(&self, cell: usize) -> Point {
        let (i, j) = self.ij(cell);
        [
            self.origin[0] + (i as f64 + 0.5) * self.spec.h,
            self.origin[1] + (j as f64 + 0.5) * self.spec.h,
        ]
    }

    /// Continuous clearance of a point: distance to the nearest boundary
    /// segment if the point lies in the open region, else 0.
    pub fn clearance(&self, p: Point) -> f64 {
        if !self.contains_point(p) {
            return 0.0;
        }
        self.boundary
            .iter()
            .map(|s| dist_to_segment(p, s[0], s[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Geometric membership in the open region (slits excluded).
    pub fn contains_point(&self, p: Point) -> bool {
        point_in_polygon(p, &self.spec.outer)
            && !self.spec.holes.iter().any(|hole| point_in_polygon(p, hole))
            && !self
                .boundary
                .iter()
                .any(|s| dist_to_segment(p, s[0], s[1]) == 0.0)
    }

    /// Whether `p` lies in the union of closed interior cells.
    pub fn in_cell_union(&self, p: Point) -> bool {
        let h = self.spec.h;
        let u = (p[0] - self.origin[0]) / h;
        let v = (p[1] - self.origin[1]) / h;
        let tol = 1e-9;
        let (i0, i1) = ((u - tol).floor() as i64, (u + tol).floor() as i64);
        let (j0, j1) = ((v - tol).floor() as i64, (v + tol).floor() as i64);
        for j in j0..=j1 {
            for i in i0..=i1 {
                if let Some(c) = self.cell_at(i, j) {
                    if self.interior[c] {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Outgoing graph edges `(neighbour, weight)`.
    #[inline]
    pub fn neighbors(&self, cell: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.adj_start[cell], self.adj_start[cell + 1]);
        self.adj_target[a..b]
            .iter()
            .zip(&self.adj_weight[a..b])
            .map(|(&v, &w)| (v as usize, w))
    }

    /// Graph edges together with their lattice offsets.
    pub fn neighbors_with_offset(
        &self,
        cell: usize,
    ) -> impl Iterator<Item = (usize, f64, (i64, i64))> + '_ {
        let (a, b) = (self.adj_start[cell], self.adj_start[cell + 1]);
        (a..b).map(move |e| {
            let (di, dj) = self.adj_offset[e];
            (self.adj_target[e] as usize, self.adj_weight[e], (di as i64, dj as i64))
        })
    }

    pub fn edge_count(&self) -> usize {
        self.adj_target.len() / 2
    }

    /// Graph neighbour one step along an axis, if that edge exists.
    pub fn axis_neighbor(&self, cell: usize, dir: AxisDir) -> Option<usize> {
        let want = dir.offset();
        self.neighbors_with_offset(cell)
            .find(|&(_, _, o)| o == want)
            .map(|(v, _, _)| v)
    }

    /// Graph weight of the edge `u -> v`, if present.
    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        self.neighbors(u).find(|&(t, _)| t == v).map(|(_, w)| w)
    }

    /// Nearest interior cell center, rejecting points outside the region or
    /// farther than `h` from every interior center.
    pub fn snap(&self, p: Point) -> Result<usize> {
        if !(p[0].is_finite() && p[1].is_finite()) || !self.contains_point(p) {
            return Err(Error::PointOutsideDomain(p));
        }
        let h = self.spec.h;
        let ci = ((p[0] - self.origin[0]) / h).floor() as i64;
        let cj = ((p[1] - self.origin[1]) / h).floor() as i64;
        let mut best: Option<(f64, usize)> = None;
        for j in cj - 2..=cj + 2 {
            for i in ci - 2..=ci + 2 {
                let Some(c) = self.cell_at(i, j) else { continue };
                if !self.interior[c] {
                    continue;
                }
                let d = euclid(sub(self.center(c), p));
                if best.is_none_or(|(bd, bc)| d < bd || (d == bd && c < bc)) {
                    best = Some((d, c));
                }
            }
        }
        match best {
            Some((d, c)) if d <= h => Ok(c),
            _ => Err(Error::PointOutsideDomain(p)),
        }
    }

    /// Dijkstra over the grid graph from weighted sources.
    pub fn shortest_paths(&self, sources: &[(usize, f64)]) -> ShortestPaths {
        self.shortest_paths_where(sources, None, |_, _| true)
    }

    /// Dijkstra restricted to an optional cell mask and an edge filter,
    /// stopping early once `stop_at` is settled.
    pub fn shortest_paths_where<F>(
        &self,
        sources: &[(usize, f64)],
        stop_at: Option<usize>,
        mut allow: F,
    ) -> ShortestPaths
    where
        F: FnMut(usize, usize) -> bool,
    {
        let n = self.n_cells();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![NO_PRED; n];
        let mut heap = BinaryHeap::new();
        for &(s, d0) in sources {
            if d0 < dist[s] {
                dist[s] = d0;
                heap.push(HeapEntry { dist: d0, node: s as u32 });
            }
        }
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            let u = node as usize;
            if d > dist[u] {
                continue;
            }
            if stop_at == Some(u) {
                break;
            }
            for (v, w) in self.neighbors(u) {
                let nd = d + w;
                if nd < dist[v] && allow(u, v) {
                    dist[v] = nd;
                    pred[v] = u as u32;
                    heap.push(HeapEntry { dist: nd, node: v as u32 });
                }
            }
        }
        ShortestPaths { dist, pred }
    }

    /// Graph distance between two cells.
    pub fn graph_distance(&self, a: usize, b: usize) -> f64 {
        self.shortest_paths_where(&[(a, 0.0)], Some(b), |_, _| true).dist[b]
    }

    /// Intrinsic distance between two points and the realizing path of cell
    /// centers.
    pub fn intrinsic_distance(&self, x: Point, y: Point) -> Result<(f64, PLPath)> {
        let a = self.snap(x)?;
        let b = self.snap(y)?;
        if a == b {
            return Ok((0.0, PLPath::open(vec![self.center(a)])));
        }
        let sp = self.shortest_paths_where(&[(a, 0.0)], Some(b), |_, _| true);
        let cells = sp.path_to(b);
        let path = PLPath::open(cells.iter().map(|&c| self.center(c)).collect());
        Ok((sp.dist[b], path))
    }

    /// Write the mask dump `(i, j, cx, cy, interior, dist_to_boundary)`.
    pub fn write_mask_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["i", "j", "cx", "cy", "interior", "dist_to_boundary"])?;
        for c in 0..self.n_cells() {
            let (i, j) = self.ij(c);
            let p = self.center(c);
            out.serialize((i, j, p[0], p[1], u8::from(self.interior[c]), self.dist_to_boundary[c]))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry {
    dist: f64,
    node: u32,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Output of a Dijkstra run, indexed by grid cell.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub dist: Vec<f64>,
    pub pred: Vec<u32>,
}

impl ShortestPaths {
    /// Cells from the source tree root to `target`, inclusive.
    pub fn path_to(&self, target: usize) -> Vec<usize> {
        let mut cells = vec![target];
        let mut c = target;
        while self.pred[c] != NO_PRED {
            c = self.pred[c] as usize;
            cells.push(c);
        }
        cells.reverse();
        cells
    }
}

/// Subset of interior cells (an erosion `Ω_k` or a field support).
#[derive(Debug, Clone)]
pub struct Region<'d> {
    parent: &'d Domain,
    mask: Vec<bool>,
    depth: f64,
}

/// Interior cells with boundary distance greater than `1/k`.
pub fn erode(domain: &Domain, k: u32) -> Result<Region<'_>> {
    if k == 0 {
        return Err(Error::InvalidInput("erosion parameter k must be positive".into()));
    }
    erode_depth(domain, 1.0 / k as f64)
}

/// Interior cells with boundary distance greater than `depth`.
pub fn erode_depth(domain: &Domain, depth: f64) -> Result<Region<'_>> {
    let mut mask = vec![false; domain.n_cells()];
    let mut any = false;
    for &c in domain.interior_cells() {
        if domain.dist_to_boundary(c) > depth {
            mask[c] = true;
            any = true;
        }
    }
    if !any {
        return Err(Error::EmptyErosion { depth });
    }
    Ok(Region { parent: domain, mask, depth })
}

impl<'d> Region<'d> {
    /// Region from an explicit mask; cells outside the interior are dropped.
    pub fn from_mask(parent: &'d Domain, mut mask: Vec<bool>, depth: f64) -> Self {
        assert_eq!(mask.len(), parent.n_cells());
        for (c, m) in mask.iter_mut().enumerate() {
            *m &= parent.is_interior(c);
        }
        Region { parent, mask, depth }
    }

    pub fn domain(&self) -> &'d Domain {
        self.parent
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.mask[cell]
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    /// Erosion parameter `k = 1/depth`.
    pub fn k(&self) -> f64 {
        1.0 / self.depth
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(c, _)| c)
    }

    /// Graph-connected component containing `cell`.
    pub fn component_of(&self, cell: usize) -> Region<'d> {
        let mut mask = vec![false; self.mask.len()];
        if self.mask[cell] {
            mask[cell] = true;
            let mut queue = VecDeque::from([cell]);
            while let Some(u) = queue.pop_front() {
                for (v, _) in self.parent.neighbors(u) {
                    if self.mask[v] && !mask[v] {
                        mask[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        Region { parent: self.parent, mask, depth: self.depth }
    }

    /// Closed 4-cycles through the centers of every 2x2 block of region
    /// cells whose four axis edges are present.
    pub fn face_cycles(&self) -> Vec<PLPath> {
        let d = self.parent;
        let mut loops = Vec::new();
        for c in self.cells() {
            let Some(e) = d.axis_neighbor(c, AxisDir::East) else { continue };
            let Some(n) = d.axis_neighbor(c, AxisDir::North) else { continue };
            let Some(ne) = d.axis_neighbor(e, AxisDir::North) else { continue };
            if !(self.mask[e] && self.mask[n] && self.mask[ne]) {
                continue;
            }
            if d.axis_neighbor(n, AxisDir::East) != Some(ne) {
                continue;
            }
            loops.push(PLPath::closed(vec![d.center(c), d.center(e), d.center(ne), d.center(n)]));
        }
        loops
    }

    /// One counter-clockwise cycle of region cell centers around each hole
    /// of the region, found from the mask topology.
    ///
    /// Holes are 8-connected components of the complement that do not touch
    /// the grid border. For each hole a horizontal ray is cast to the east
    /// from one of its cells; the cycle is the first region edge crossing the
    /// ray closed by a shortest 4-neighbour path that avoids every crossing
    /// edge, so it winds exactly once around the ray origin.
    pub fn hole_cycles(&self) -> Vec<PLPath> {
        let d = self.parent;
        let (nx, ny) = (d.nx as i64, d.ny as i64);
        let n = d.n_cells();
        let mut label = vec![usize::MAX; n];
        let mut cycles = Vec::new();
        let mut comp_id = 0;
        for start in 0..n {
            if self.mask[start] || label[start] != usize::MAX {
                continue;
            }
            let mut touches_border = false;
            let mut members = vec![start];
            label[start] = comp_id;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let (i, j) = d.ij(u);
                let (i, j) = (i as i64, j as i64);
                if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                    touches_border = true;
                }
                for dj in -1..=1 {
                    for di in -1..=1 {
                        if let Some(v) = d.cell_at(i + di, j + dj) {
                            if !self.mask[v] && label[v] == usize::MAX {
                                label[v] = comp_id;
                                members.push(v);
                                queue.push_back(v);
                            }
                        }
                    }
                }
            }
            comp_id += 1;
            if touches_border {
                continue;
            }
            // `start` is the first member in scan order: lowest row, then column.
            let (i0, j0) = d.ij(start);
            if let Some(cycle) = self.cycle_around(i0 as i64, j0 as i64) {
                cycles.push(cycle);
            }
        }
        cycles
    }

    fn cycle_around(&self, i0: i64, j0: i64) -> Option<PLPath> {
        let d = self.parent;
        let crossing = |u: usize, v: usize| -> bool {
            let (ui, uj) = d.ij(u);
            let (vi, vj) = d.ij(v);
            ui == vi
                && (ui as i64) > i0
                && ((uj as i64 == j0 && vj as i64 == j0 + 1) || (vj as i64 == j0 && uj as i64 == j0 + 1))
        };
        let mut first = None;
        for i in (i0 + 1)..(d.nx as i64) {
            let (Some(a), Some(b)) = (d.cell_at(i, j0), d.cell_at(i, j0 + 1)) else {
                continue;
            };
            if self.mask[a] && self.mask[b] && d.axis_neighbor(a, AxisDir::North) == Some(b) {
                first = Some((a, b));
                break;
            }
        }
        let (a, b) = first?;
        // BFS over axis edges inside the region from b back to a.
        let mut pred = vec![usize::MAX; d.n_cells()];
        pred[b] = b;
        let mut queue = VecDeque::from([b]);
        let dirs = [AxisDir::East, AxisDir::North, AxisDir::West, AxisDir::South];
        while let Some(u) = queue.pop_front() {
            if u == a {
                break;
            }
            for dir in dirs {
                let Some(v) = d.axis_neighbor(u, dir) else { continue };
                if !self.mask[v] || pred[v] != usize::MAX || crossing(u, v) {
                    continue;
                }
                pred[v] = u;
                queue.push_back(v);
            }
        }
        if pred[a] == usize::MAX {
            return None;
        }
        let mut cells = vec![a];
        let mut c = a;
        while c != b {
            c = pred[c];
            cells.push(c);
        }
        // cells runs a, ..., b; the closing edge b -> a crosses the ray.
        let mut pts: Vec<Point> = cells.iter().map(|&c| d.center(c)).collect();
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        Some(PLPath::closed(pts))
    }
}

/// Piecewise-linear path; a closed path has an implicit segment from the
/// last vertex back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PLPath {
    pub vertices: Vec<Point>,
    #[serde(default)]
    pub closed: bool,
}

impl PLPath {
    pub fn open(vertices: Vec<Point>) -> Self {
        PLPath { vertices, closed: false }
    }

    pub fn closed(vertices: Vec<Point>) -> Self {
        PLPath { vertices, closed: true }
    }

    /// Segments in traversal order, including the closing one.
    pub fn segments(&self) -> Vec<[Point; 2]> {
        let v = &self.vertices;
        let mut segs: Vec<[Point; 2]> = v.windows(2).map(|w| [w[0], w[1]]).collect();
        if self.closed && v.len() > 1 && v[0] != v[v.len() - 1] {
            segs.push([v[v.len() - 1], v[0]]);
        }
        segs
    }

    pub fn start(&self) -> Option<Point> {
        self.vertices.first().copied()
    }

    pub fn end(&self) -> Option<Point> {
        if self.closed {
            self.start()
        } else {
            self.vertices.last().copied()
        }
    }

    pub fn reversed(&self) -> PLPath {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        PLPath { vertices, closed: self.closed }
    }

    /// Open concatenation; the shared endpoint is kept once.
    pub fn concat(&self, other: &PLPath) -> PLPath {
        let mut vertices = self.vertices.clone();
        let mut rest = other.vertices.as_slice();
        if let (Some(a), Some(b)) = (vertices.last(), rest.first()) {
            if a == b {
                rest = &rest[1..];
            }
        }
        vertices.extend_from_slice(rest);
        PLPath::open(vertices)
    }

    /// Check every segment against the union of interior cells at a
    /// supersampling step of at most `h/4`.
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        let step = 0.25 * domain.h();
        if let [p] = self.vertices.as_slice() {
            return if domain.in_cell_union(*p) { Ok(()) } else { Err(Error::PointOutsideDomain(*p)) };
        }
        for [a, b] in self.segments() {
            let len = euclid(sub(b, a));
            let steps = ((len / step).ceil() as usize).max(1);
            for s in 0..=steps {
                let p = lerp(a, b, s as f64 / steps as f64);
                if !domain.in_cell_union(p) {
                    return Err(Error::PointOutsideDomain(p));
                }
            }
        }
        Ok(())
    }
}

/// Sum of segment lengths in `norm`; zero for a single vertex.
pub fn path_length(path: &PLPath, norm: Norm) -> f64 {
    path.segments().iter().map(|[a, b]| norm.norm(sub(*b, *a))).sum()
}

/// `m` samples of the constant-speed reparametrization on `[0,1]`, each
/// paired with its velocity (segment direction scaled to speed `ℓ`).
pub fn constant_speed_samples(path: &PLPath, m: usize, norm: Norm) -> Result<Vec<(Point, Point)>> {
    if m < 2 {
        return Err(Error::InvalidInput("constant-speed sampling needs m >= 2".into()));
    }
    let segs: Vec<[Point; 2]> = path
        .segments()
        .into_iter()
        .filter(|[a, b]| norm.norm(sub(*b, *a)) > 0.0)
        .collect();
    let lens: Vec<f64> = segs.iter().map(|[a, b]| norm.norm(sub(*b, *a))).collect();
    let total: f64 = lens.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroLengthPath);
    }
    let mut out = Vec::with_capacity(m);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for s in 0..m {
        let arc = total * s as f64 / (m - 1) as f64;
        while seg + 1 < segs.len() && arc >= seg_start + lens[seg] {
            seg_start += lens[seg];
            seg += 1;
        }
        let [a, b] = segs[seg];
        let local = ((arc - seg_start) / lens[seg]).clamp(0.0, 1.0);
        let p = if s == m - 1 { segs[segs.len() - 1][1] } else { lerp(a, b, local) };
        let dir = sub(b, a);
        let vel = [dir[0] / lens[seg] * total, dir[1] / lens[seg] * total];
        out.push((p, vel));
    }
    Ok(out)
}
