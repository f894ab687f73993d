//! Lipschitz potentials of conservative fields and Lipschitz norms on the
//! grid graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{Domain, PLPath};
use crate::error::{Error, Result};
use crate::fields::{
    conservativity_of_mollified, gradient, line_integral, make_mollifier, mollify,
    ConservativityReport, GridScalarField, GridVectorField, LoopSelection,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructOptions {
    pub k: u32,
    /// Number of random cells re-integrated along a detour path.
    pub probe_paths: usize,
    pub seed: u64,
    /// Overrides the default conservativity tolerance.
    pub tol_cons: Option<f64>,
}

impl ReconstructOptions {
    pub fn new(k: u32) -> Self {
        ReconstructOptions { k, probe_paths: 16, seed: 0, tol_cons: None }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult<'d> {
    /// Potential on the reachable part of the eroded region, zero at the
    /// basepoint; masked elsewhere.
    pub potential: GridScalarField<'d>,
    pub k_used: u32,
    /// Graph length of the integration path for each reconstructed cell
    /// (`+∞` where masked).
    pub per_cell_path_length: Vec<f64>,
    /// Largest discrepancy between the shortest-path value and a detour value.
    pub residual: f64,
    /// Longest detour path used for the residual.
    pub longest_probe: f64,
    pub conservativity: ConservativityReport,
    /// Set when erosion split the region and only the basepoint's component
    /// was reconstructed.
    pub region_disconnected: bool,
    pub mollified: GridVectorField<'d>,
}

/// Integrate `g ∗ u_k` along shortest graph paths from the basepoint.
///
/// The field is first checked for conservativity on its mollified support;
/// the integral is then accumulated along the shortest-path tree restricted
/// to the basepoint's component of that support, using only edges whose
/// quadrature nodes are all covered by the mollified field.
pub fn reconstruct_potential<'d>(
    g: &GridVectorField<'d>,
    opts: &ReconstructOptions,
) -> Result<ReconstructionResult<'d>> {
    let domain = g.domain();
    let m = make_mollifier(domain, opts.k)?;
    let mg = mollify(g, &m)?;
    let region = mg.support_region();
    let base = domain.basepoint();
    if !region.contains(base) {
        return Err(Error::BasepointEroded);
    }
    let component = region.component_of(base);
    let region_disconnected = component.len() != region.len();

    let report = conservativity_of_mollified(&mg, opts.k, g.sup_norm_dual(), &LoopSelection::Auto, opts.tol_cons)?;
    if !report.conservative {
        return Err(Error::NotConservative {
            max_loop_integral: report.max_loop_integral,
            tolerance: report.tolerance,
        });
    }

    let step = domain.h();
    let edge_integral = |u: usize, v: usize| -> Option<f64> {
        if !component.contains(v) {
            return None;
        }
        let seg = PLPath::open(vec![domain.center(u), domain.center(v)]);
        line_integral(&mg, &seg, step).ok()
    };
    let tree = integration_tree(domain, base, &edge_integral);

    let n = domain.n_cells();
    let mut values = vec![0.0; n];
    let mut support = vec![false; n];
    let mut order: Vec<usize> = (0..n).filter(|&c| tree.dist[c].is_finite()).collect();
    order.sort_by(|&a, &b| tree.dist[a].total_cmp(&tree.dist[b]));
    for &c in &order {
        support[c] = true;
        if c != base {
            values[c] = values[tree.pred[c]] + tree.step_value[c];
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut residual: f64 = 0.0;
    let mut longest_probe: f64 = 0.0;
    if order.len() > 1 {
        for _ in 0..opts.probe_paths {
            let target = order[rng.gen_range(0..order.len())];
            let via = order[rng.gen_range(0..order.len())];
            let detour = integration_tree(domain, via, &edge_integral);
            if !detour.dist[target].is_finite() {
                continue;
            }
            let mut tail = 0.0;
            let mut c = target;
            while c != via {
                tail += detour.step_value[c];
                c = detour.pred[c];
            }
            let alt = values[via] + tail;
            residual = residual.max((alt - values[target]).abs());
            longest_probe = longest_probe.max(tree.dist[via] + detour.dist[target]);
        }
    }

    let per_cell_path_length = tree.dist;
    Ok(ReconstructionResult {
        potential: GridScalarField::new(domain, values, support)?,
        k_used: opts.k,
        per_cell_path_length,
        residual,
        longest_probe,
        conservativity: report,
        region_disconnected,
        mollified: mg,
    })
}

struct IntegrationTree {
    dist: Vec<f64>,
    pred: Vec<usize>,
    /// Integral along the tree edge entering each cell.
    step_value: Vec<f64>,
}

fn integration_tree(
    domain: &Domain,
    root: usize,
    edge_integral: &dyn Fn(usize, usize) -> Option<f64>,
) -> IntegrationTree {
    let n = domain.n_cells();
    let mut step_value = vec![0.0; n];
    let sp = domain.shortest_paths_where(&[(root, 0.0)], None, |u, v| match edge_integral(u, v) {
        Some(val) => {
            step_value[v] = val;
            true
        }
        None => false,
    });
    IntegrationTree {
        dist: sp.dist,
        pred: sp.pred.iter().map(|&p| p as usize).collect(),
        step_value,
    }
}

/// `max |f(u) − f(v)| / w(u,v)` over graph edges with both ends supported.
pub fn lipschitz_norm_local(f: &GridScalarField<'_>) -> f64 {
    let d = f.domain();
    let mut best: f64 = 0.0;
    for u in f.supported_cells() {
        let fu = f.values()[u];
        for (v, w) in d.neighbors(u) {
            if v > u {
                if let Some(fv) = f.get(v) {
                    best = best.max((fu - fv).abs() / w);
                }
            }
        }
    }
    best
}

/// Which pairs [`lipschitz_norm_global`] inspects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSelection {
    All,
    /// `count` random source cells, each against every other cell.
    RandomSources { count: usize, seed: u64 },
}

/// `max |f(u) − f(v)| / d(u,v)` over supported pairs, with `d` the graph
/// metric of the whole domain.
pub fn lipschitz_norm_global(f: &GridScalarField<'_>, pairs: PairSelection) -> f64 {
    let d = f.domain();
    let cells: Vec<usize> = f.supported_cells().collect();
    let sources: Vec<usize> = match pairs {
        PairSelection::All => cells.clone(),
        PairSelection::RandomSources { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count.min(cells.len()))
                .map(|_| cells[rng.gen_range(0..cells.len())])
                .collect()
        }
    };
    sources
        .par_iter()
        .map(|&s| {
            let sp = d.shortest_paths(&[(s, 0.0)]);
            let fs = f.values()[s];
            cells
                .iter()
                .filter(|&&t| t != s && sp.dist[t].is_finite())
                .map(|&t| (fs - f.values()[t]).abs() / sp.dist[t])
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsometryReport {
    pub lip_local: f64,
    /// `max` over cells of the dual norm of the finite-difference gradient.
    pub grad_sup: f64,
    pub defect: f64,
    pub h: f64,
}

/// `|‖f‖_locLip − ‖∇f‖∞|` with the norm of the gradient taken in the dual norm.
pub fn isometry_defect(f: &GridScalarField<'_>) -> Result<IsometryReport> {
    let lip_local = lipschitz_norm_local(f);
    let grad_sup = gradient(f)?.sup_norm_dual();
    Ok(IsometryReport {
        lip_local,
        grad_sup,
        defect: (lip_local - grad_sup).abs(),
        h: f.domain().h(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainSpec};
    use crate::geometry::Norm;

    #[test]
    fn linear_function_norms() {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 32.0)).unwrap();
        let f = GridScalarField::from_fn(&d, |p| p[0]);
        assert!((lipschitz_norm_local(&f) - 1.0).abs() < 1e-12);
        assert!((lipschitz_norm_global(&f, PairSelection::RandomSources { count: 5, seed: 1 }) - 1.0).abs() < 1e-12);
        let rep = isometry_defect(&f).unwrap();
        assert!(rep.defect <= 1e-9);
    }

    #[test]
    fn distance_function_is_one_lipschitz() {
        let d = build_domain(DomainSpec::square_annulus(0.5, Norm::L2, 1.0 / 16.0)).unwrap();
        let sp = d.shortest_paths(&[(d.basepoint(), 0.0)]);
        let f = GridScalarField::from_fn(&d, |_| 0.0);
        let values: Vec<f64> = (0..d.n_cells())
            .map(|c| if d.is_interior(c) { sp.dist[c] } else { 0.0 })
            .collect();
        let f = GridScalarField::new(&d, values, f.support().to_vec()).unwrap();
        assert!((lipschitz_norm_local(&f) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstructs_linear_potential() {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 32.0).with_basepoint([0.5, 0.5])).unwrap();
        let g = GridVectorField::from_fn(&d, |_| [1.0, -0.5]);
        let res = reconstruct_potential(&g, &ReconstructOptions::new(8)).unwrap();
        let x0 = d.center(d.basepoint());
        assert_eq!(res.potential.get(d.basepoint()), Some(0.0));
        for c in res.potential.supported_cells() {
            let p = d.center(c);
            let exact = (p[0] - x0[0]) - 0.5 * (p[1] - x0[1]);
            assert!((res.potential.values()[c] - exact).abs() < 1e-12);
        }
        assert!(res.residual < 1e-12);
    }
}
