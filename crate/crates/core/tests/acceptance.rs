//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use freeflow::domain::{build_domain, Domain, DomainSpec, PLPath};
use freeflow::fields::{
    conservativity_check, gaussian_battery, jacobian_symmetry_defect, make_mollifier,
    vortex_field, weak_divergence_pairing, GridScalarField, GridVectorField, LoopSelection,
    TestFunction,
};
use freeflow::flows::{loop_smear, spindle_field, SpindleSpec};
use freeflow::geometry::{euclid, sub, Norm, Point};
use freeflow::potential::{
    lipschitz_norm_global, lipschitz_norm_local, reconstruct_potential, PairSelection,
    ReconstructOptions,
};
use freeflow::transport::{
    beckmann_norm, duality_certificate, kantorovich_norm, quotient_norm, quotient_norm_of_flux,
    random_molecules, EdgeFlux, Molecule, TransportSolution, DEFAULT_MASS_SCALE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Worst duality gap and dual Lipschitz constant over every solved instance.
#[derive(Default)]
struct DualLedger {
    instances: usize,
    worst_gap: f64,
    worst_lip: f64,
}

impl DualLedger {
    fn record(&mut self, domain: &Domain, mu: &Molecule, sol: &TransportSolution) {
        let cert = duality_certificate(domain, mu, sol).expect("certificate");
        self.instances += 1;
        self.worst_gap = self.worst_gap.max(cert.gap);
        self.worst_lip = self.worst_lip.max(cert.lip_of_potential);
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration, bool) {
    let t0 = Instant::now();
    let out = f();
    let dt = t0.elapsed();
    let in_time = limit.is_none_or(|l| dt <= l);
    (out, dt, in_time)
}

fn isometry(duals: &mut DualLedger) -> Outcome {
    let h = 1.0 / 64.0;
    let domains = [
        ("square", DomainSpec::unit_square(Norm::L2, h).with_neighborhood(2)),
        ("annulus", DomainSpec::square_annulus(0.5, Norm::L2, h).with_neighborhood(2)),
        ("slit", DomainSpec::slit_l1_disk(h)),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, (name, spec)) in domains.into_iter().enumerate() {
        let d = build_domain(spec).unwrap();
        let mut dom_worst: f64 = 0.0;
        for mu in random_molecules(&d, 50, 8, 100 + i as u64) {
            let b = beckmann_norm(&d, &mu, DEFAULT_MASS_SCALE).unwrap();
            let k = kantorovich_norm(&d, &mu, DEFAULT_MASS_SCALE).unwrap();
            dom_worst = dom_worst.max((b.norm - k.norm).abs());
            duals.record(&d, &mu, &b);
            duals.record(&d, &mu, &k);
        }
        parts.push(format!("{name} {dom_worst:.2e}"));
        worst = worst.max(dom_worst);
    }
    Outcome { pass: worst <= 1e-9, detail: format!("max |B-K| = {worst:.2e} ({})", parts.join(", ")) }
}

fn vortex() -> Outcome {
    let h = 1.0 / 64.0;
    let k = 8;
    let annulus = build_domain(DomainSpec::square_annulus(0.5, Norm::L2, h)).unwrap();
    let g = vortex_field([0.0, 0.0], 0.25).sample(&annulus);
    let rep = conservativity_check(&g, k, &LoopSelection::Auto, None).unwrap();
    let hole = rep.hole_loops.first().map_or(f64::NAN, |l| l.integral.abs());
    let defect = jacobian_symmetry_defect(&g, &make_mollifier(&annulus, k).unwrap()).unwrap();

    let sub_square = build_domain(DomainSpec::rectangle(0.5, -0.25, 1.0, 0.25, Norm::L2, h)).unwrap();
    let gs = vortex_field([0.0, 0.0], 0.25).sample(&sub_square);
    let rep_sub = conservativity_check(&gs, k, &LoopSelection::Auto, None).unwrap();

    let pass = (hole - 2.0 * PI).abs() <= 0.05
        && rep.hole_loops.len() == 1
        && defect <= 0.05
        && !rep.conservative
        && rep_sub.conservative;
    Outcome {
        pass,
        detail: format!(
            "hole loop {hole:.5} (2pi = {:.5}), defect {defect:.2e}, annulus conservative = {}, sub-square conservative = {}",
            2.0 * PI,
            rep.conservative,
            rep_sub.conservative
        ),
    }
}

fn slit_metric() -> Outcome {
    let h = 1.0 / 128.0;
    let d = build_domain(DomainSpec::slit_l1_disk(h)).unwrap();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for t in [0.1, 0.2, 0.3] {
        let (dist, _) = d.intrinsic_distance([0.5, t], [0.5, -t]).unwrap();
        let err = (dist - (1.0 + 2.0 * t)).abs();
        parts.push(format!("t={t}: {dist:.5}"));
        worst = worst.max(err);
    }
    Outcome { pass: worst <= 2.0 * h, detail: format!("max err {worst:.2e} <= 2h = {:.2e} ({})", 2.0 * h, parts.join(", ")) }
}

/// `Σ a sin(ω·x + φ)` with its exact gradient.
struct Trig {
    terms: Vec<(f64, [f64; 2], f64)>,
}

impl Trig {
    fn random(rng: &mut impl Rng) -> Self {
        let terms = (0..3)
            .map(|_| (rng.gen_range(-1.0..1.0), [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)], rng.gen_range(0.0..2.0 * PI)))
            .collect();
        Trig { terms }
    }

    fn value(&self, p: Point) -> f64 {
        self.terms.iter().map(|&(a, w, ph)| a * (w[0] * p[0] + w[1] * p[1] + ph).sin()).sum()
    }

    fn grad(&self, p: Point) -> [f64; 2] {
        self.terms.iter().fold([0.0, 0.0], |acc, &(a, w, ph)| {
            let c = a * (w[0] * p[0] + w[1] * p[1] + ph).cos();
            [acc[0] + c * w[0], acc[1] + c * w[1]]
        })
    }
}

fn reconstruction() -> Outcome {
    let levels = [(1.0 / 32.0, 8u32), (1.0 / 64.0, 16), (1.0 / 128.0, 32)];
    let domains: Vec<Domain> = levels
        .iter()
        .map(|&(h, _)| build_domain(DomainSpec::unit_square(Norm::L2, h)).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut min_ratio = f64::INFINITY;
    let mut worst_residual_ratio: f64 = 0.0;
    let mut worst_fine_err: f64 = 0.0;
    for _ in 0..20 {
        let f = Trig::random(&mut rng);
        let mut errs = Vec::new();
        for (d, &(_, k)) in domains.iter().zip(&levels) {
            let g = GridVectorField::from_fn(d, |p| f.grad(p));
            let opts = ReconstructOptions { k, probe_paths: 8, seed: 7, tol_cons: None };
            let res = reconstruct_potential(&g, &opts).unwrap();
            let base = f.value(d.center(d.basepoint()));
            let err = res
                .potential
                .supported_cells()
                .map(|c| (res.potential.values()[c] - (f.value(d.center(c)) - base)).abs())
                .fold(0.0, f64::max);
            worst_residual_ratio = worst_residual_ratio.max(res.residual / res.conservativity.tolerance);
            errs.push(err);
        }
        worst_fine_err = worst_fine_err.max(errs[2]);
        min_ratio = min_ratio.min(errs[0] / errs[1]).min(errs[1] / errs[2]);
    }
    Outcome {
        pass: min_ratio >= 1.7 && worst_residual_ratio <= 1.0,
        detail: format!(
            "min error ratio {min_ratio:.3}, worst finest error {worst_fine_err:.2e}, max residual/tol {worst_residual_ratio:.3}"
        ),
    }
}

fn spindle(duals: &mut DualLedger) -> Outcome {
    let h = 1.0 / 128.0;
    let d = build_domain(DomainSpec::unit_square(Norm::L2, h)).unwrap();
    let spec = SpindleSpec::new([0.25, 0.5], [0.75, 0.5], 0.1);
    let sf = spindle_field(&d, &spec).unwrap();
    let worst_pair = gaussian_battery(0.0, 0.0, 1.0, 1.0)
        .iter()
        .map(|phi| (weak_divergence_pairing(&sf.grid_values, phi) - (phi.value(spec.y) - phi.value(spec.x))).abs())
        .fold(0.0, f64::max);
    let q = quotient_norm(&sf.grid_values, DEFAULT_MASS_SCALE).unwrap();
    duals.record(&d, &q.molecule, &q.transport);
    let dist = euclid(sub(spec.y, spec.x));
    let rel = (q.norm - dist).abs() / dist;
    let bound = 0.5 + 0.1 + 0.02;
    Outcome {
        pass: worst_pair <= 1e-2 && sf.l1_norm <= bound && rel <= 0.05,
        detail: format!(
            "max pairing err {worst_pair:.2e}, l1 {:.5} <= {bound}, quotient {:.5} (rel err {rel:.3})",
            sf.l1_norm, q.norm
        ),
    }
}

fn annihilator(duals: &mut DualLedger) -> Outcome {
    let h = 1.0 / 128.0;
    let d = build_domain(DomainSpec::unit_square(Norm::L2, h)).unwrap();
    let sf = spindle_field(&d, &SpindleSpec::new([0.25, 0.5], [0.75, 0.5], 0.1)).unwrap();
    let lp = PLPath::closed(vec![[0.35, 0.3], [0.65, 0.3], [0.65, 0.7], [0.35, 0.7]]);
    let smear = loop_smear(&d, &lp, 20).unwrap();
    let base = quotient_norm(&sf.grid_values, DEFAULT_MASS_SCALE).unwrap();
    let perturbed = quotient_norm(&sf.grid_values.add(&smear), DEFAULT_MASS_SCALE).unwrap();
    duals.record(&d, &base.molecule, &base.transport);
    duals.record(&d, &perturbed.molecule, &perturbed.transport);
    let smooth_diff = (perturbed.norm - base.norm).abs();

    let mut flux = EdgeFlux::project(&sf.grid_values);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut added = 0;
    while added < 25 {
        let c = d.interior_cells()[rng.gen_range(0..d.interior_cells().len())];
        if flux.add_face_circulation(c, rng.gen_range(-2.0..2.0)).is_ok() {
            added += 1;
        }
    }
    let circ = quotient_norm_of_flux(&flux, DEFAULT_MASS_SCALE).unwrap();
    let circ_diff = (circ.norm - base.norm).abs();
    Outcome {
        pass: smooth_diff <= 1e-2 && circ_diff <= 1e-9,
        detail: format!(
            "|Q(h+loop) - Q(h)| = {smooth_diff:.2e}, |Q(flux+circulation) - Q(h)| = {circ_diff:.2e}"
        ),
    }
}

/// All-pairs shortest paths by Floyd-Warshall over the interior cells.
fn floyd_warshall(d: &Domain) -> (Vec<usize>, Vec<f64>) {
    let cells = d.interior_cells().to_vec();
    let n = cells.len();
    let mut idx = vec![usize::MAX; d.n_cells()];
    for (i, &c) in cells.iter().enumerate() {
        idx[c] = i;
    }
    let mut dist = vec![f64::INFINITY; n * n];
    for (i, &c) in cells.iter().enumerate() {
        dist[i * n + i] = 0.0;
        for (v, w) in d.neighbors(c) {
            let j = idx[v];
            dist[i * n + j] = dist[i * n + j].min(w);
        }
    }
    for m in 0..n {
        for i in 0..n {
            let dim = dist[i * n + m];
            if !dim.is_finite() {
                continue;
            }
            for j in 0..n {
                let via = dim + dist[m * n + j];
                if via < dist[i * n + j] {
                    dist[i * n + j] = via;
                }
            }
        }
    }
    (cells, dist)
}

fn lipschitz_equalities() -> Outcome {
    let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 18.0)).unwrap();
    let (cells, apsp) = floyd_warshall(&d);
    let n = cells.len();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let raw: Vec<f64> = (0..d.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = GridScalarField::from_fn(&d, |_| 0.0);
        let f = GridScalarField::new(&d, raw, f.support().to_vec()).unwrap();
        let local = lipschitz_norm_local(&f);
        let global = lipschitz_norm_global(&f, PairSelection::All);
        let mut brute: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = (f.values()[cells[i]] - f.values()[cells[j]]).abs() / apsp[i * n + j];
                    brute = brute.max(v);
                }
            }
        }
        worst = worst.max((global - local).abs()).max((brute - global).abs());
    }
    Outcome {
        pass: n == 256 && worst <= 1e-12,
        detail: format!("{n} cells, max |global - local|, |brute - global| = {worst:.2e}"),
    }
}

fn convex_norm(duals: &mut DualLedger) -> Outcome {
    let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 64.0).with_neighborhood(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cells = d.interior_cells();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 100 {
        let (a, b) = (cells[rng.gen_range(0..cells.len())], cells[rng.gen_range(0..cells.len())]);
        if a == b {
            continue;
        }
        let mu = Molecule::dipole(b, a);
        let sol = kantorovich_norm(&d, &mu, DEFAULT_MASS_SCALE).unwrap();
        duals.record(&d, &mu, &sol);
        let exact = euclid(sub(d.center(b), d.center(a)));
        worst = worst.max((sol.norm - exact).abs() / exact);
        count += 1;
    }
    Outcome { pass: worst <= 0.03, detail: format!("max relative error {worst:.4} over 100 pairs") }
}

fn main() {
    let mut duals = DualLedger::default();
    let secs = Duration::from_secs;
    let mut results: Vec<(u32, &str, Outcome, Duration, Option<Duration>, bool)> = Vec::new();
    let mut run = |n: u32, name: &'static str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let (out, dt, in_time) = timed(limit, || f());
        results.push((n, name, out, dt, limit, in_time));
    };
    run(1, "discrete isometry", Some(secs(60)), &mut || isometry(&mut duals));
    run(2, "vortex counterexample", Some(secs(10)), &mut vortex);
    run(3, "slit-disk intrinsic metric", Some(secs(10)), &mut slit_metric);
    run(4, "reconstruction isometry", Some(secs(120)), &mut reconstruction);
    run(5, "spindle contract", Some(secs(30)), &mut || spindle(&mut duals));
    run(6, "annihilator property", Some(secs(30)), &mut || annihilator(&mut duals));
    run(7, "lipschitz norm equalities", Some(secs(10)), &mut lipschitz_equalities);
    run(9, "convex-domain norm", None, &mut || convex_norm(&mut duals));
    let dual = Outcome {
        pass: duals.worst_gap <= 1e-9 && duals.worst_lip <= 1.0 + 1e-9,
        detail: format!(
            "{} instances, max gap {:.2e}, max dual lip {:.12}",
            duals.instances, duals.worst_gap, duals.worst_lip
        ),
    };
    results.push((8, "duality", dual, Duration::ZERO, None, true));
    results.sort_by_key(|r| r.0);

    let mut all = true;
    for (n, name, out, dt, limit, in_time) in &results {
        let ok = out.pass && *in_time;
        all &= ok;
        let budget = limit.map_or(String::new(), |l| format!(" / {}s", l.as_secs()));
        println!(
            "criterion {n} [{}] {name}: {} ({:.2}s{budget})",
            if ok { "PASS" } else { "FAIL" },
            out.detail,
            dt.as_secs_f64()
        );
    }
    if !all {
        std::process::exit(1);
    }
}
