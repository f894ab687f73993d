//! Free-space norms of molecules: Kantorovich transport with graph-geodesic
//! costs, Beckmann minimal flows on the grid graph, and the quotient norm of
//! a vector field through its discrete divergence.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{AxisDir, Domain};
use crate::error::{Error, Result};
use crate::fields::{GridScalarField, GridVectorField};
use crate::geometry::Point;
use crate::mcf::{min_cost_flow, Arc, FlowNetwork, FlowSolution};
use crate::potential::lipschitz_norm_local;

pub const DEFAULT_MASS_SCALE: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub cell: usize,
    pub mass: f64,
}

/// Finitely supported zero-sum measure on interior cells. Atoms are kept
/// sorted by cell with no duplicates and no zero masses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Molecule {
    atoms: Vec<Atom>,
}

#[derive(Serialize, Deserialize)]
struct AtomJson {
    p: Point,
    m: f64,
}

#[derive(Serialize, Deserialize)]
struct MoleculeJson {
    atoms: Vec<AtomJson>,
}

impl Molecule {
    /// Canonicalize: merge duplicate cells and drop zero masses.
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Self {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for a in atoms {
            *merged.entry(a.cell).or_insert(0.0) += a.mass;
        }
        Molecule {
            atoms: merged
                .into_iter()
                .filter(|&(_, m)| m != 0.0)
                .map(|(cell, mass)| Atom { cell, mass })
                .collect(),
        }
    }

    pub fn zero() -> Self {
        Molecule::default()
    }

    /// `δ(plus) − δ(minus)`.
    pub fn dipole(plus: usize, minus: usize) -> Self {
        Molecule::new([Atom { cell: plus, mass: 1.0 }, Atom { cell: minus, mass: -1.0 }])
    }

    /// `δ(y) − δ(x)` for points snapped to their cells.
    pub fn dipole_at(domain: &Domain, y: Point, x: Point) -> Result<Self> {
        Ok(Molecule::dipole(domain.snap(y)?, domain.snap(x)?))
    }

    /// Random molecule on `n_atoms` distinct interior cells with masses on
    /// the lattice `1/1000`, balanced exactly.
    pub fn random(domain: &Domain, n_atoms: usize, rng: &mut impl Rng) -> Self {
        let n_atoms = n_atoms.clamp(2, domain.interior_cells().len());
        let cells: Vec<usize> = domain.interior_cells().choose_multiple(rng, n_atoms).copied().collect();
        let mut units: Vec<i64> = (0..n_atoms).map(|_| rng.gen_range(-1000..=1000)).collect();
        let sum: i64 = units[..n_atoms - 1].iter().sum();
        units[n_atoms - 1] = -sum;
        if units.iter().all(|&u| u == 0) {
            units[0] = 1000;
            units[n_atoms - 1] = -1000;
        }
        Molecule::new(cells.into_iter().zip(units).map(|(cell, u)| Atom { cell, mass: u as f64 / 1000.0 }))
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn gross_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass.abs()).sum()
    }

    pub fn mass_at(&self, cell: usize) -> f64 {
        self.atoms
            .binary_search_by_key(&cell, |a| a.cell)
            .map_or(0.0, |i| self.atoms[i].mass)
    }

    pub fn scaled(&self, t: f64) -> Self {
        Molecule::new(self.atoms.iter().map(|a| Atom { cell: a.cell, mass: t * a.mass }))
    }

    pub fn add(&self, other: &Molecule) -> Self {
        Molecule::new(self.atoms.iter().chain(other.atoms.iter()).copied())
    }

    /// Check that atoms sit on interior cells and the masses balance.
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        for a in &self.atoms {
            if a.cell >= domain.n_cells() || !domain.is_interior(a.cell) {
                return Err(Error::InvalidInput(format!("atom on non-interior cell {}", a.cell)));
            }
            if !a.mass.is_finite() {
                return Err(Error::InvalidInput("non-finite atom mass".into()));
            }
        }
        let total = self.total_mass();
        if total.abs() > 1e-12 * self.gross_mass().max(1.0) {
            return Err(Error::Unbalanced(total));
        }
        Ok(())
    }

    /// `Σ m·f(cell)`; atoms outside the support of `f` are an error.
    pub fn pairing(&self, f: &GridScalarField<'_>) -> Result<f64> {
        self.atoms.iter().try_fold(0.0, |acc, a| {
            f.get(a.cell)
                .map(|v| acc + a.mass * v)
                .ok_or_else(|| Error::PointOutsideDomain(f.domain().center(a.cell)))
        })
    }

    pub fn to_json(&self, domain: &Domain) -> String {
        let doc = MoleculeJson {
            atoms: self.atoms.iter().map(|a| AtomJson { p: domain.center(a.cell), m: a.mass }).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("molecule serializes")
    }

    /// Parse `{"atoms":[{"p":[x,y],"m":..}]}`, snapping points to cells.
    pub fn from_json(domain: &Domain, text: &str) -> Result<Self> {
        let doc: MoleculeJson = serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let atoms = doc
            .atoms
            .iter()
            .map(|a| Ok(Atom { cell: domain.snap(a.p)?, mass: a.m }))
            .collect::<Result<Vec<_>>>()?;
        let mol = Molecule::new(atoms);
        mol.validate(domain)?;
        Ok(mol)
    }
}

/// A solved transport instance together with its network.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub norm: f64,
    pub solution: FlowSolution,
    pub network: FlowNetwork,
    /// Grid cell of each network node.
    pub node_cells: Vec<usize>,
}

impl TransportSolution {
    fn empty() -> Self {
        TransportSolution {
            norm: 0.0,
            solution: FlowSolution {
                arc_flows: Vec::new(),
                total_cost: 0.0,
                node_potentials: Vec::new(),
                mass_scale: 1,
                supplies_used: Vec::new(),
                rounding: 0.0,
            },
            network: FlowNetwork { n_nodes: 0, arcs: Vec::new(), supplies: Vec::new() },
            node_cells: Vec::new(),
        }
    }

    /// CSV rows `(u, v, flow, cost, ux, uy, vx, vy)` for arcs carrying flow,
    /// with `u`, `v` grid cell indices.
    pub fn write_arcs_csv<W: Write>(&self, domain: &Domain, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["u", "v", "flow", "cost", "ux", "uy", "vx", "vy"])?;
        for (a, &f) in self.network.arcs.iter().zip(&self.solution.arc_flows) {
            if f > 0.0 {
                let (u, v) = (self.node_cells[a.from], self.node_cells[a.to]);
                let (pu, pv) = (domain.center(u), domain.center(v));
                out.serialize((u, v, f, a.cost, pu[0], pu[1], pv[0], pv[1]))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn solve(network: FlowNetwork, node_cells: Vec<usize>, mass_scale: u64) -> Result<TransportSolution> {
    let solution = min_cost_flow(&network, mass_scale)?;
    Ok(TransportSolution { norm: solution.total_cost, solution, network, node_cells })
}

/// Kantorovich norm: transport between the negative and positive atoms with
/// costs equal to graph-geodesic distances.
pub fn kantorovich_norm(domain: &Domain, mu: &Molecule, mass_scale: u64) -> Result<TransportSolution> {
    mu.validate(domain)?;
    if mu.is_empty() {
        return Ok(TransportSolution::empty());
    }
    let node_cells: Vec<usize> = mu.atoms().iter().map(|a| a.cell).collect();
    let supplies: Vec<f64> = mu.atoms().iter().map(|a| -a.mass).collect();
    let sources: Vec<usize> = (0..node_cells.len()).filter(|&i| supplies[i] > 0.0).collect();
    let sinks: Vec<usize> = (0..node_cells.len()).filter(|&i| supplies[i] < 0.0).collect();
    let rows: Vec<Vec<Arc>> = sources
        .par_iter()
        .map(|&s| {
            let sp = domain.shortest_paths(&[(node_cells[s], 0.0)]);
            sinks
                .iter()
                .filter(|&&t| sp.dist[node_cells[t]].is_finite())
                .map(|&t| Arc { from: s, to: t, cost: sp.dist[node_cells[t]] })
                .collect()
        })
        .collect();
    let network = FlowNetwork { n_nodes: node_cells.len(), arcs: rows.concat(), supplies };
    solve(network, node_cells, mass_scale)
}

/// Network over all interior cells with an arc for each direction of every
/// graph edge.
fn grid_network(domain: &Domain) -> (Vec<usize>, Vec<usize>, Vec<Arc>) {
    let cells = domain.interior_cells().to_vec();
    let mut node_of = vec![usize::MAX; domain.n_cells()];
    for (i, &c) in cells.iter().enumerate() {
        node_of[c] = i;
    }
    let arcs = cells
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| {
            let node_of = &node_of;
            domain.neighbors(c).map(move |(v, w)| Arc { from: i, to: node_of[v], cost: w })
        })
        .collect();
    (cells, node_of, arcs)
}

/// Beckmann norm: minimal-cost flow on the grid graph with divergence `mu`.
pub fn beckmann_norm(domain: &Domain, mu: &Molecule, mass_scale: u64) -> Result<TransportSolution> {
    mu.validate(domain)?;
    let (cells, node_of, arcs) = grid_network(domain);
    let mut supplies = vec![0.0; cells.len()];
    for a in mu.atoms() {
        supplies[node_of[a.cell]] = -a.mass;
    }
    solve(FlowNetwork { n_nodes: cells.len(), arcs, supplies }, cells, mass_scale)
}

#[derive(Debug, Clone)]
pub struct DualityReport<'d> {
    /// `Σ m·f` against the rounded masses the solver used.
    pub pairing: f64,
    pub lip_of_potential: f64,
    pub gap: f64,
    pub potential: GridScalarField<'d>,
}

/// Extend the solver's potentials to every interior cell and check strong
/// duality.
///
/// The extension is `f(z) = min_s π(s) + d(s, z)` over source nodes, which
/// is 1-Lipschitz for the graph metric and agrees with `π` on every sink.
pub fn duality_certificate<'d>(
    domain: &'d Domain,
    mu: &Molecule,
    sol: &TransportSolution,
) -> Result<DualityReport<'d>> {
    let fs = &sol.solution;
    let net = &sol.network;
    let support = domain.interior_mask().to_vec();
    if mu.is_empty() && net.n_nodes == 0 {
        let potential = GridScalarField::new(domain, vec![0.0; domain.n_cells()], support)?;
        return Ok(DualityReport { pairing: 0.0, lip_of_potential: 0.0, gap: 0.0, potential });
    }
    let conservation = fs.conservation_error(net);
    if conservation > 1e-9 {
        return Err(Error::SolutionMismatch(format!("flow conservation violated by {conservation}")));
    }
    let mut used = vec![0.0; domain.n_cells()];
    for (i, &c) in sol.node_cells.iter().enumerate() {
        used[c] += -fs.supplies_used[i];
    }
    let mut drift = 0.0;
    for (c, &m) in used.iter().enumerate() {
        drift += (m - mu.mass_at(c)).abs();
    }
    for a in mu.atoms() {
        if !sol.node_cells.contains(&a.cell) {
            drift += a.mass.abs();
        }
    }
    if drift > fs.rounding + 1e-9 {
        return Err(Error::SolutionMismatch(format!("solution supplies differ from the molecule by {drift}")));
    }

    let seeds: Vec<(usize, f64)> = (0..net.n_nodes)
        .filter(|&i| fs.supplies_used[i] > 0.0)
        .map(|i| (sol.node_cells[i], fs.node_potentials[i]))
        .collect();
    let values = if seeds.is_empty() {
        vec![0.0; domain.n_cells()]
    } else {
        let sp = domain.shortest_paths(&seeds);
        sp.dist.iter().map(|&d| if d.is_finite() { d } else { 0.0 }).collect()
    };
    let potential = GridScalarField::new(domain, values, support)?;
    let pairing: f64 = (0..domain.n_cells()).filter(|&c| used[c] != 0.0).map(|c| used[c] * potential.values()[c]).sum();
    Ok(DualityReport {
        pairing,
        lip_of_potential: lipschitz_norm_local(&potential),
        gap: (pairing - fs.total_cost).abs(),
        potential,
    })
}

/// Flux of a field through the internal axis edges of the grid graph.
/// `east[c]` is the flow from `c` to its east neighbour, `north[c]` to its
/// north neighbour; edges absent from the graph carry nothing.
#[derive(Debug, Clone)]
pub struct EdgeFlux<'d> {
    domain: &'d Domain,
    pub east: Vec<f64>,
    pub north: Vec<f64>,
}

impl<'d> EdgeFlux<'d> {
    pub fn domain(&self) -> &'d Domain {
        self.domain
    }

    /// Project a cell field onto axis edges: `h` times the mean of the two
    /// adjacent cell components along the edge axis.
    pub fn project(h_field: &GridVectorField<'d>) -> Self {
        let d = h_field.domain();
        let h = d.h();
        let n = d.n_cells();
        let (mut east, mut north) = (vec![0.0; n], vec![0.0; n]);
        let val = |c: usize| h_field.get(c).unwrap_or([0.0, 0.0]);
        for &c in d.interior_cells() {
            if let Some(e) = d.axis_neighbor(c, AxisDir::East) {
                east[c] = 0.5 * h * (val(c)[0] + val(e)[0]);
            }
            if let Some(nb) = d.axis_neighbor(c, AxisDir::North) {
                north[c] = 0.5 * h * (val(c)[1] + val(nb)[1]);
            }
        }
        EdgeFlux { domain: d, east, north }
    }

    /// Add `amount` of counter-clockwise circulation around the grid face
    /// whose lower-left cell is `cell`.
    pub fn add_face_circulation(&mut self, cell: usize, amount: f64) -> Result<()> {
        let d = self.domain;
        let e = d.axis_neighbor(cell, AxisDir::East);
        let n = d.axis_neighbor(cell, AxisDir::North);
        let ne = e.and_then(|e| d.axis_neighbor(e, AxisDir::North));
        let ne2 = n.and_then(|n| d.axis_neighbor(n, AxisDir::East));
        match (e, n, ne, ne2) {
            (Some(e), Some(n), Some(ne), Some(ne2)) if ne == ne2 => {
                self.east[cell] += amount;
                self.north[e] += amount;
                self.east[n] -= amount;
                self.north[cell] -= amount;
                Ok(())
            }
            _ => Err(Error::InvalidInput(format!("cell {cell} is not the corner of a grid face"))),
        }
    }

    /// Net inflow per cell, i.e. minus the discrete divergence.
    pub fn divergence_molecule(&self) -> Molecule {
        let d = self.domain;
        let mut m = vec![0.0; d.n_cells()];
        for &c in d.interior_cells() {
            if let Some(e) = d.axis_neighbor(c, AxisDir::East) {
                m[c] -= self.east[c];
                m[e] += self.east[c];
            }
            if let Some(nb) = d.axis_neighbor(c, AxisDir::North) {
                m[c] -= self.north[c];
                m[nb] += self.north[c];
            }
        }
        let mut mol = Molecule::new(m.into_iter().enumerate().map(|(cell, mass)| Atom { cell, mass }));
        let drift = mol.total_mass();
        if drift != 0.0 {
            if let Some(big) = mol.atoms.iter_mut().max_by(|a, b| a.mass.abs().total_cmp(&b.mass.abs())) {
                big.mass -= drift;
            }
        }
        mol
    }

    /// `Σ |flux|·h`, the cost of the projected flux as a grid flow.
    pub fn cost(&self) -> f64 {
        let h = self.domain.h();
        self.east.iter().chain(&self.north).map(|f| f.abs() * h).sum()
    }
}

#[derive(Debug, Clone)]
pub struct QuotientResult {
    pub norm: f64,
    pub molecule: Molecule,
    pub transport: TransportSolution,
    /// `Σ ‖h(c)‖·h²` of the supplied representative.
    pub grid_l1_norm: f64,
    pub flux_cost: f64,
    /// Mass moved by rounding the divergence to `1/mass_scale`.
    pub rounding_mass: f64,
}

/// Quotient norm of a field: the Beckmann norm of its discrete divergence.
pub fn quotient_norm(h_field: &GridVectorField<'_>, mass_scale: u64) -> Result<QuotientResult> {
    let l1 = h_field.l1_norm();
    if !l1.is_finite() {
        return Err(Error::NonSummable);
    }
    let mut res = quotient_norm_of_flux(&EdgeFlux::project(h_field), mass_scale)?;
    res.grid_l1_norm = l1;
    Ok(res)
}

/// As [`quotient_norm`] for an edge flux given directly.
pub fn quotient_norm_of_flux(flux: &EdgeFlux<'_>, mass_scale: u64) -> Result<QuotientResult> {
    let molecule = flux.divergence_molecule();
    let transport = beckmann_norm(flux.domain(), &molecule, mass_scale)?;
    Ok(QuotientResult {
        norm: transport.norm,
        rounding_mass: transport.solution.rounding,
        molecule,
        transport,
        grid_l1_norm: f64::NAN,
        flux_cost: flux.cost(),
    })
}

/// Deterministic random molecules for experiments.
pub fn random_molecules(domain: &Domain, count: usize, n_atoms: usize, seed: u64) -> Vec<Molecule> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Molecule::random(domain, n_atoms, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainSpec};
    use crate::geometry::Norm;

    #[test]
    fn canonical_atoms() {
        let m = Molecule::new([
            Atom { cell: 5, mass: 1.0 },
            Atom { cell: 2, mass: -0.5 },
            Atom { cell: 5, mass: -0.5 },
            Atom { cell: 7, mass: 0.0 },
        ]);
        assert_eq!(m.atoms(), &[Atom { cell: 2, mass: -0.5 }, Atom { cell: 5, mass: 0.5 }]);
        assert_eq!(m.mass_at(5), 0.5);
        assert_eq!(m.mass_at(7), 0.0);
    }

    #[test]
    fn dipole_norms_match_graph_distance() {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 16.0)).unwrap();
        let mu = Molecule::dipole_at(&d, [0.75, 0.25], [0.25, 0.25]).unwrap();
        let (a, b) = (mu.atoms()[0].cell, mu.atoms()[1].cell);
        let dist = d.graph_distance(a, b);
        let k = kantorovich_norm(&d, &mu, DEFAULT_MASS_SCALE).unwrap();
        let bk = beckmann_norm(&d, &mu, DEFAULT_MASS_SCALE).unwrap();
        assert!((k.norm - dist).abs() < 1e-12);
        assert!((bk.norm - dist).abs() < 1e-9);
        for sol in [&k, &bk] {
            let cert = duality_certificate(&d, &mu, sol).unwrap();
            assert!(cert.gap < 1e-9, "gap {}", cert.gap);
            assert!(cert.lip_of_potential <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn zero_molecule() {
        let d = build_domain(DomainSpec::unit_square(Norm::L1, 0.125)).unwrap();
        let z = Molecule::zero();
        let b = beckmann_norm(&d, &z, 100).unwrap();
        assert_eq!(b.norm, 0.0);
        assert!(b.solution.arc_flows.iter().all(|&f| f == 0.0));
        let k = kantorovich_norm(&d, &z, 100).unwrap();
        let cert = duality_certificate(&d, &z, &k).unwrap();
        assert_eq!((cert.pairing, cert.gap), (0.0, 0.0));
    }

    #[test]
    fn molecule_json_round_trip() {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, 0.125)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Molecule::random(&d, 5, &mut rng);
        let back = Molecule::from_json(&d, &m.to_json(&d)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn face_circulation_keeps_divergence() {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, 0.125)).unwrap();
        let g = GridVectorField::from_fn(&d, |p| [p[0] * p[1], 1.0 - p[0]]);
        let mut flux = EdgeFlux::project(&g);
        let before = flux.divergence_molecule();
        let c = d.interior_cells()[10];
        flux.add_face_circulation(c, 0.37).unwrap();
        let after = flux.divergence_molecule();
        for (a, b) in before.atoms().iter().zip(after.atoms()) {
            assert_eq!(a.cell, b.cell);
            assert!((a.mass - b.mass).abs() < 1e-15);
        }
    }
}
