use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use clap::Subcommand;
use freeflow::domain::{build_domain, Domain, DomainSpec};
use freeflow::fields::{
    conservativity_check, gaussian_battery, jacobian_symmetry_defect, make_mollifier, mollify, vortex_field,
    weak_divergence_pairing, GridScalarField, GridVectorField, LoopSelection, TestFunction,
};
use freeflow::flows::{loop_smear, spindle_field};
use freeflow::geometry::{dot, Norm};
use freeflow::potential::{
    isometry_defect, lipschitz_norm_global, reconstruct_potential, PairSelection,
    ReconstructOptions,
};
use freeflow::transport::{
    beckmann_norm, duality_certificate, kantorovich_norm, quotient_norm, Molecule, TransportSolution,
};
use freeflow::Error;
use serde_json::{json, Value};

use crate::config::{FieldSource, LoadedConfig, Pairs};
use crate::error::{invalid, CliResult};
use crate::report::{inputs_digest, Check, ConvergenceRow, Params, Quantity, Report, Series};

/// Mollifier index used when the configuration does not set `k`.
pub const DEFAULT_K: u32 = 8;
/// Tolerance for strong duality and the Lipschitz bound of the dual potential.
pub const DUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Rasterize the domain and dump the cell mask.
    Rasterize,
    /// Intrinsic distance between two points.
    Dist,
    /// Local and global Lipschitz constants of a scalar field.
    Lipnorm,
    /// Mollified path integration of a vector field.
    Reconstruct,
    /// Loop-integral test of a vector field.
    Conservativity,
    /// Spindle flow between two points.
    Spindle,
    /// Divergence-free smear of a closed loop.
    Loopsmear,
    /// Minimal-flow norm of a molecule.
    Beckmann,
    /// Transport norm of a molecule.
    Kantorovich,
    /// Quotient norm of a vector field.
    Quotient,
    /// Beckmann against Kantorovich with duality certificates.
    Compare,
    /// The vortex on the annulus, end to end.
    VortexDemo,
}

impl Command {
    pub const ALL: [Command; 12] = [
        Command::Rasterize,
        Command::Dist,
        Command::Lipnorm,
        Command::Reconstruct,
        Command::Conservativity,
        Command::Spindle,
        Command::Loopsmear,
        Command::Beckmann,
        Command::Kantorovich,
        Command::Quotient,
        Command::Compare,
        Command::VortexDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Rasterize => "rasterize",
            Command::Dist => "dist",
            Command::Lipnorm => "lipnorm",
            Command::Reconstruct => "reconstruct",
            Command::Conservativity => "conservativity",
            Command::Spindle => "spindle",
            Command::Loopsmear => "loopsmear",
            Command::Beckmann => "beckmann",
            Command::Kantorovich => "kantorovich",
            Command::Quotient => "quotient",
            Command::Compare => "compare",
            Command::VortexDemo => "vortex-demo",
        }
    }

    /// Tolerance names the command understands, with their defaults.
    fn tolerances(self, h: f64, has_expected_dist: bool) -> Vec<(&'static str, Option<f64>)> {
        match self {
            Command::Rasterize => vec![],
            Command::Dist => vec![("dist_error", has_expected_dist.then_some(2.0 * h))],
            Command::Lipnorm => vec![("isometry_defect", None)],
            Command::Reconstruct => {
                vec![("residual", None), ("potential_error", None), ("isometry_defect", None)]
            }
            Command::Conservativity => vec![("max_loop_integral", None)],
            Command::Spindle => vec![("l1_excess", None), ("divergence_error", None)],
            Command::Loopsmear => vec![("divergence", None), ("field_pairing_error", None)],
            Command::Beckmann | Command::Kantorovich | Command::Quotient => {
                vec![("gap", Some(DUALITY_TOL)), ("lip_excess", Some(DUALITY_TOL))]
            }
            Command::Compare => vec![
                ("norm_difference", Some(DUALITY_TOL)),
                ("gap", Some(DUALITY_TOL)),
                ("lip_excess", Some(DUALITY_TOL)),
            ],
            Command::VortexDemo => vec![("hole_loop_error", Some(0.05)), ("symmetry_defect", Some(0.05))],
        }
    }
}

fn is_known_tolerance(name: &str) -> bool {
    Command::ALL.iter().any(|c| c.tolerances(1.0, true).iter().any(|(n, _)| *n == name))
}

/// Wall-clock seconds per phase.
pub type Timings = BTreeMap<String, f64>;

struct Ctx<'a> {
    cfg: &'a LoadedConfig,
    domain: &'a Domain,
    out: &'a Path,
    tolerances: BTreeMap<&'static str, f64>,
    results: BTreeMap<String, Quantity>,
    checks: Vec<Check>,
    artifacts: Vec<String>,
    timings: Timings,
    series: Series,
    k: Option<u32>,
    mass_scale: Option<u64>,
}

impl<'a> Ctx<'a> {
    fn record(&mut self, name: &str, value: impl Into<Value>, unit: &'static str) {
        self.results.insert(name.to_string(), Quantity { value: value.into(), unit });
    }

    fn at_most(&mut self, name: &'static str, value: f64) {
        if let Some(&tol) = self.tolerances.get(name) {
            self.checks.push(Check {
                name: name.to_string(),
                value: json!(value),
                tolerance: Some(tol),
                expected: None,
                passed: value <= tol,
            });
        }
    }

    fn holds(&mut self, name: &str, value: bool, expected: bool) {
        self.checks.push(Check {
            name: name.to_string(),
            value: json!(value),
            tolerance: None,
            expected: Some(expected),
            passed: value == expected,
        });
    }

    fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let v = f();
        *self.timings.entry(phase.to_string()).or_default() += t0.elapsed().as_secs_f64();
        v
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        std::fs::write(self.out.join(name), bytes)?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn k(&mut self) -> u32 {
        let k = self.cfg.config.k.unwrap_or(DEFAULT_K);
        self.k = Some(k);
        k
    }

    fn mass_scale(&mut self) -> u64 {
        self.mass_scale = Some(self.cfg.mass_scale);
        self.cfg.mass_scale
    }

    fn field(&self) -> CliResult<(&'a FieldSource, GridVectorField<'a>)> {
        let src = self.cfg.config.field.as_ref().ok_or_else(|| invalid("a `field` block is required"))?;
        Ok((src, src.load(self.domain, &self.cfg.base_dir)?))
    }

    fn molecule(&self) -> CliResult<Molecule> {
        let src = self.cfg.config.molecule.as_ref().ok_or_else(|| invalid("a `molecule` block is required"))?;
        src.load(self.domain, &self.cfg.base_dir, self.cfg.seed)
    }
}

fn vector_csv(g: &GridVectorField<'_>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    g.write_csv(&mut buf)?;
    Ok(buf)
}

fn scalar_csv(f: &GridScalarField<'_>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f.write_csv(&mut buf)?;
    Ok(buf)
}

fn arcs_csv(domain: &Domain, sol: &TransportSolution) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    sol.write_arcs_csv(domain, &mut buf)?;
    Ok(buf)
}

fn norm_name(n: Norm) -> &'static str {
    match n {
        Norm::L1 => "l1",
        Norm::L2 => "l2",
    }
}

fn bounding_box(domain: &Domain) -> [f64; 4] {
    domain.spec().outer.iter().fold(
        [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
        |b, p| [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])],
    )
}

fn pair_selection(cfg: &LoadedConfig) -> PairSelection {
    match cfg.config.pairs {
        Pairs::All => PairSelection::All,
        Pairs::Random { sources } => PairSelection::RandomSources { count: sources, seed: cfg.seed },
    }
}

/// Execute `command`, writing artifacts into `out`.
pub fn run(command: Command, cfg: &LoadedConfig, out: &Path) -> CliResult<(Report, Timings)> {
    let allowed = command.tolerances(cfg.config.domain.h, cfg.config.dist.is_some_and(|d| d.expected.is_some()));
    let mut tolerances: BTreeMap<&'static str, f64> =
        allowed.iter().filter_map(|&(n, d)| d.map(|v| (n, v))).collect();
    // a fixture may declare tolerances for several commands; names no
    // command knows are rejected
    for (name, &v) in &cfg.config.tolerances {
        match allowed.iter().find(|(n, _)| *n == name.as_str()) {
            Some(&(key, _)) => {
                tolerances.insert(key, v);
            }
            None if is_known_tolerance(name) => {}
            None => return Err(invalid(format!("unknown tolerance `{name}`"))),
        }
    }
    std::fs::create_dir_all(out)?;

    let t0 = Instant::now();
    let domain = build_domain(cfg.config.domain.clone())?;
    let build_secs = t0.elapsed().as_secs_f64();

    let mut ctx = Ctx {
        cfg,
        domain: &domain,
        out,
        tolerances,
        results: BTreeMap::new(),
        checks: Vec::new(),
        artifacts: Vec::new(),
        timings: BTreeMap::from([("build_domain".to_string(), build_secs)]),
        series: Series::default(),
        k: None,
        mass_scale: None,
    };
    match command {
        Command::Rasterize => rasterize(&mut ctx)?,
        Command::Dist => dist(&mut ctx)?,
        Command::Lipnorm => lipnorm(&mut ctx)?,
        Command::Reconstruct => reconstruct(&mut ctx)?,
        Command::Conservativity => conservativity(&mut ctx)?,
        Command::Spindle => spindle(&mut ctx)?,
        Command::Loopsmear => loopsmear(&mut ctx)?,
        Command::Beckmann | Command::Kantorovich => single_norm(&mut ctx, command)?,
        Command::Quotient => quotient(&mut ctx)?,
        Command::Compare => compare(&mut ctx)?,
        Command::VortexDemo => vortex_demo(&mut ctx)?,
    }

    let passed = ctx.checks.iter().all(|c| c.passed);
    let report = Report {
        command: command.name().to_string(),
        config: serde_json::to_value(&cfg.config).expect("config serializes"),
        inputs_digest: inputs_digest(command.name(), cfg),
        params: Params {
            h: domain.h(),
            norm: norm_name(domain.norm()),
            neighborhood: cfg.config.domain.neighborhood(),
            k: ctx.k,
            mass_scale: ctx.mass_scale,
            seed: cfg.seed,
        },
        results: ctx.results,
        checks: ctx.checks,
        passed,
        artifacts: ctx.artifacts,
        series: ctx.series,
    };
    Ok((report, ctx.timings))
}

fn rasterize(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let d = ctx.domain;
    ctx.record("n_cells", d.n_cells(), "count");
    ctx.record("n_interior", d.interior_cells().len(), "count");
    ctx.record("n_edges", d.edge_count(), "count");
    ctx.record("nx", d.nx(), "count");
    ctx.record("ny", d.ny(), "count");
    ctx.record("max_dist_to_boundary", d.max_dist_to_boundary(), "length");
    let mut buf = Vec::new();
    d.write_mask_csv(&mut buf)?;
    ctx.write("mask.csv", &buf)
}

fn dist(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let block = ctx.cfg.config.dist.ok_or_else(|| invalid("a `dist` block is required"))?;
    let d = ctx.domain;
    let (dist, path) = ctx.timed("dijkstra", || d.intrinsic_distance(block.x, block.y))?;
    ctx.record("distance", dist, "length");
    ctx.record("straight_distance", d.norm().norm(freeflow::geometry::sub(block.y, block.x)), "length");
    ctx.record("path_vertices", path.vertices.len(), "count");
    if let Some(expected) = block.expected {
        ctx.record("expected", expected, "length");
        ctx.at_most("dist_error", (dist - expected).abs());
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y"])?;
    for p in &path.vertices {
        w.serialize((p[0], p[1]))?;
    }
    let buf = w.into_inner().map_err(|e| freeflow::Error::Io(e.to_string()))?;
    ctx.write("path.csv", &buf)
}

fn lipnorm(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let src = ctx.cfg.config.potential.as_ref().ok_or_else(|| invalid("a `potential` block is required"))?;
    let f = src.load(ctx.domain, &ctx.cfg.base_dir)?;
    let pairs = pair_selection(ctx.cfg);
    let lip_global = ctx.timed("lip_global", || lipschitz_norm_global(&f, pairs));
    let iso = isometry_defect(&f)?;
    ctx.record("lip_local", iso.lip_local, "value/length");
    ctx.record("lip_global", lip_global, "value/length");
    ctx.record("grad_sup", iso.grad_sup, "value/length");
    ctx.record("isometry_defect", iso.defect, "value/length");
    ctx.at_most("isometry_defect", iso.defect);
    ctx.write("potential.csv", &scalar_csv(&f)?)
}

fn reconstruct(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let (src, g) = ctx.field()?;
    let k = ctx.k();
    let block = ctx.cfg.config.reconstruct.clone().unwrap_or_default();
    let mut opts = ReconstructOptions::new(k);
    opts.seed = ctx.cfg.seed;
    if let Some(p) = block.probe_paths {
        opts.probe_paths = p;
    }
    let rec = ctx.timed("reconstruct", || reconstruct_potential(&g, &opts))?;
    let pairs = pair_selection(ctx.cfg);
    let lip_global = ctx.timed("lip_global", || lipschitz_norm_global(&rec.potential, pairs));
    let iso = isometry_defect(&rec.potential)?;
    ctx.record("lip_local", iso.lip_local, "value/length");
    ctx.record("lip_global", lip_global, "value/length");
    ctx.record("grad_sup", g.sup_norm_dual(), "value/length");
    ctx.record("isometry_defect", iso.defect, "value/length");
    ctx.record("residual", rec.residual, "value");
    ctx.record("longest_probe", rec.longest_probe, "length");
    ctx.record("max_loop_integral", rec.conservativity.max_loop_integral, "value");
    ctx.record("conservativity_tolerance", rec.conservativity.tolerance, "value");
    ctx.record("region_disconnected", rec.region_disconnected, "bool");
    ctx.record("supported_cells", rec.potential.supported_cells().count(), "count");
    ctx.at_most("residual", rec.residual);
    ctx.at_most("isometry_defect", iso.defect);

    let exact = src.exact_potential();
    if let Some(f) = &exact {
        let err = potential_error(&rec.potential, f.as_ref());
        ctx.record("potential_error", err, "value");
        ctx.at_most("potential_error", err);
    }
    if !block.convergence.is_empty() {
        let f = exact.ok_or_else(|| invalid("a convergence study needs a field with a closed-form potential"))?;
        let mut rows = Vec::new();
        for level in &block.convergence {
            let spec = DomainSpec { h: level.h, ..ctx.cfg.config.domain.clone() };
            let d = build_domain(spec)?;
            let gl = src.load(&d, &ctx.cfg.base_dir)?;
            let mut o = opts;
            o.k = level.k;
            let r = ctx.timed("convergence", || reconstruct_potential(&gl, &o))?;
            rows.push(ConvergenceRow { h: level.h, k: level.k, error: potential_error(&r.potential, f.as_ref()) });
        }
        let min_ratio = rows.windows(2).map(|w| w[0].error / w[1].error).fold(f64::INFINITY, f64::min);
        if rows.len() > 1 {
            ctx.record("convergence_min_ratio", min_ratio, "1");
        }
        ctx.record("convergence_errors", rows.iter().map(|r| r.error).collect::<Vec<_>>(), "value");
        ctx.series.convergence = Some(rows);
    }
    ctx.write("potential.csv", &scalar_csv(&rec.potential)?)?;
    let mollified = vector_csv(&rec.mollified)?;
    ctx.write("mollified.csv", &mollified)?;
    ctx.series.field = Some(mollified);
    Ok(())
}

/// `max |f_rec − (f − f(basepoint))|` over the reconstructed support.
fn potential_error(rec: &GridScalarField<'_>, f: &dyn Fn(freeflow::geometry::Point) -> f64) -> f64 {
    let d = rec.domain();
    let f0 = f(d.center(d.basepoint()));
    rec.supported_cells()
        .map(|c| (rec.values()[c] - (f(d.center(c)) - f0)).abs())
        .fold(0.0, f64::max)
}

fn conservativity(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let (_, g) = ctx.field()?;
    let k = ctx.k();
    let loops = match &ctx.cfg.config.loops {
        Some(list) => LoopSelection::Explicit(list.clone()),
        None => LoopSelection::Auto,
    };
    let tol = ctx.tolerances.get("max_loop_integral").copied();
    let rep = ctx.timed("loops", || conservativity_check(&g, k, &loops, tol))?;
    let defect = jacobian_symmetry_defect(&g, &make_mollifier(ctx.domain, k)?)?;
    ctx.record("max_loop_integral", rep.max_loop_integral, "value");
    ctx.record("tolerance", rep.tolerance, "value");
    ctx.record("loop_count", rep.loop_count, "count");
    ctx.record("longest_loop", rep.longest_loop, "length");
    ctx.record("sup_norm", rep.sup_norm, "value/length");
    ctx.record("hole_loop_integrals", rep.hole_loops.iter().map(|l| l.integral).collect::<Vec<_>>(), "value");
    ctx.record("symmetry_defect", defect, "value/length^2");
    ctx.record("conservative", rep.conservative, "bool");
    ctx.tolerances.insert("max_loop_integral", rep.tolerance);
    ctx.at_most("max_loop_integral", rep.max_loop_integral);
    Ok(())
}

/// `max` over the Gaussian battery of `|⟨h, ∇φ⟩ − target(φ)|`.
fn battery_error(domain: &Domain, h: &GridVectorField<'_>, target: impl Fn(&dyn TestFunction) -> f64) -> f64 {
    let [x0, y0, x1, y1] = bounding_box(domain);
    gaussian_battery(x0, y0, x1, y1)
        .iter()
        .map(|phi| (weak_divergence_pairing(h, phi) - target(phi)).abs())
        .fold(0.0, f64::max)
}

fn spindle(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let spec = ctx.cfg.config.spindle.ok_or_else(|| invalid("a `spindle` block is required"))?;
    let sf = ctx.timed("spindle", || spindle_field(ctx.domain, &spec))?;
    let bound = spec.l1_bound(ctx.domain.norm());
    let div = battery_error(ctx.domain, &sf.grid_values, |phi| phi.value(spec.y) - phi.value(spec.x));
    ctx.record("l1_norm", sf.l1_norm, "length");
    ctx.record("l1_bound", bound, "length");
    ctx.record("divergence_error", div, "value");
    ctx.at_most("l1_excess", (sf.l1_norm - bound).max(0.0));
    ctx.at_most("divergence_error", div);
    let buf = vector_csv(&sf.grid_values)?;
    ctx.write("spindle.csv", &buf)?;
    ctx.series.field = Some(buf);
    Ok(())
}

fn loopsmear(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let lp = ctx.cfg.config.loop_path.clone().ok_or_else(|| invalid("a `loop` block is required"))?;
    let k = ctx.k();
    let smear = ctx.timed("smear", || loop_smear(ctx.domain, &lp, k))?;
    let div = battery_error(ctx.domain, &smear, |_| 0.0);
    ctx.record("l1_norm", smear.l1_norm(), "length");
    ctx.record("divergence", div, "value");
    ctx.at_most("divergence", div);
    if ctx.cfg.config.field.is_some() {
        let (src, g) = ctx.field()?;
        let h2 = ctx.domain.h() * ctx.domain.h();
        let pairing: f64 = smear.supported_cells().filter_map(|c| g.get(c).map(|v| dot(v, smear.values()[c]))).sum::<f64>() * h2;
        ctx.record("field_pairing", pairing, "value");
        if let FieldSource::Vortex { center, min_radius } = src {
            let loop_value = freeflow::fields::line_integral(&vortex_field(*center, *min_radius), &lp, ctx.domain.h())?;
            ctx.record("field_loop_integral", loop_value, "value");
            ctx.at_most("field_pairing_error", (pairing - loop_value).abs());
        }
    }
    let buf = vector_csv(&smear)?;
    ctx.write("loop_field.csv", &buf)?;
    ctx.series.field = Some(buf);
    Ok(())
}

struct Certified {
    norm: f64,
    gap: f64,
    lip: f64,
}

fn certify(ctx: &mut Ctx<'_>, mu: &Molecule, sol: &TransportSolution, prefix: &str) -> CliResult<Certified> {
    let cert = ctx.timed("certificate", || duality_certificate(ctx.domain, mu, sol))?;
    let name = |s: &str| if prefix.is_empty() { s.to_string() } else { format!("{prefix}_{s}") };
    ctx.record(&name("norm"), sol.norm, "length");
    ctx.record(&name("gap"), cert.gap, "length");
    ctx.record(&name("lip"), cert.lip_of_potential, "1");
    ctx.record(&name("pairing"), cert.pairing, "length");
    ctx.record(&name("rounding"), sol.solution.rounding, "mass");
    Ok(Certified { norm: sol.norm, gap: cert.gap, lip: cert.lip_of_potential })
}

fn summary_json(c: &Certified, mass_scale: u64) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(&json!({
        "norm": c.norm, "gap": c.gap, "lip": c.lip, "mass_scale": mass_scale,
    }))
    .expect("summary serializes");
    s.push('\n');
    s.into_bytes()
}

fn record_molecule(ctx: &mut Ctx<'_>, mu: &Molecule) {
    ctx.record("n_atoms", mu.atoms().len(), "count");
    ctx.record("gross_mass", mu.gross_mass(), "mass");
}

fn single_norm(ctx: &mut Ctx<'_>, command: Command) -> CliResult<()> {
    let mu = ctx.molecule()?;
    let scale = ctx.mass_scale();
    record_molecule(ctx, &mu);
    let sol = ctx.timed("solve", || match command {
        Command::Beckmann => beckmann_norm(ctx.domain, &mu, scale),
        _ => kantorovich_norm(ctx.domain, &mu, scale),
    })?;
    let c = certify(ctx, &mu, &sol, "")?;
    ctx.at_most("gap", c.gap);
    ctx.at_most("lip_excess", (c.lip - 1.0).max(0.0));
    let arcs = arcs_csv(ctx.domain, &sol)?;
    ctx.write("arcs.csv", &arcs)?;
    ctx.write("summary.json", &summary_json(&c, scale))?;
    ctx.series.flow = Some(arcs);
    Ok(())
}

fn quotient(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let (_, g) = ctx.field()?;
    let scale = ctx.mass_scale();
    let q = ctx.timed("solve", || quotient_norm(&g, scale))?;
    record_molecule(ctx, &q.molecule);
    ctx.record("grid_l1_norm", q.grid_l1_norm, "length");
    ctx.record("flux_cost", q.flux_cost, "length");
    let c = certify(ctx, &q.molecule, &q.transport, "")?;
    ctx.at_most("gap", c.gap);
    ctx.at_most("lip_excess", (c.lip - 1.0).max(0.0));
    ctx.write("molecule.json", q.molecule.to_json(ctx.domain).as_bytes())?;
    let arcs = arcs_csv(ctx.domain, &q.transport)?;
    ctx.write("arcs.csv", &arcs)?;
    ctx.write("summary.json", &summary_json(&c, scale))?;
    ctx.series.flow = Some(arcs);
    Ok(())
}

fn compare(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let mu = ctx.molecule()?;
    let scale = ctx.mass_scale();
    record_molecule(ctx, &mu);
    let b = ctx.timed("beckmann", || beckmann_norm(ctx.domain, &mu, scale))?;
    let k = ctx.timed("kantorovich", || kantorovich_norm(ctx.domain, &mu, scale))?;
    let cb = certify(ctx, &mu, &b, "beckmann")?;
    let ck = certify(ctx, &mu, &k, "kantorovich")?;
    let diff = (cb.norm - ck.norm).abs();
    ctx.record("norm_difference", diff, "length");
    ctx.at_most("norm_difference", diff);
    ctx.at_most("gap", cb.gap.max(ck.gap));
    ctx.at_most("lip_excess", (cb.lip.max(ck.lip) - 1.0).max(0.0));
    let arcs_b = arcs_csv(ctx.domain, &b)?;
    ctx.write("beckmann_arcs.csv", &arcs_b)?;
    ctx.write("kantorovich_arcs.csv", &arcs_csv(ctx.domain, &k)?)?;
    let summary = json!({
        "beckmann": cb.norm,
        "kantorovich": ck.norm,
        "norm_difference": diff,
        "gap": cb.gap.max(ck.gap),
        "lip": cb.lip.max(ck.lip),
        "mass_scale": scale,
    });
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    ctx.write("summary.json", s.as_bytes())?;
    ctx.series.flow = Some(arcs_b);
    Ok(())
}

fn vortex_demo(ctx: &mut Ctx<'_>) -> CliResult<()> {
    let default_src = FieldSource::Vortex { center: [0.0, 0.0], min_radius: 0.25 };
    let src = ctx.cfg.config.field.clone().unwrap_or(default_src);
    let g = src.load(ctx.domain, &ctx.cfg.base_dir)?;
    let k = ctx.k();
    let m = make_mollifier(ctx.domain, k)?;
    let mg = mollify(&g, &m)?;
    let defect = freeflow::fields::symmetry_defect_of(&mg).ok_or(Error::EmptyErosion { depth: m.radius })?;
    let rep = ctx.timed("loops", || conservativity_check(&g, k, &LoopSelection::Auto, None))?;
    let hole = rep.hole_loops.first().map(|l| l.integral);
    ctx.record("symmetry_defect", defect, "value/length^2");
    ctx.record("hole_loop_count", rep.hole_loops.len(), "count");
    ctx.record("hole_loop_integral", hole.map_or(Value::Null, Value::from), "value");
    ctx.record("max_loop_integral", rep.max_loop_integral, "value");
    ctx.record("tolerance", rep.tolerance, "value");
    ctx.at_most("symmetry_defect", defect);
    ctx.at_most("hole_loop_error", hole.map_or(f64::INFINITY, |v| (v.abs() - 2.0 * std::f64::consts::PI).abs()));
    ctx.holds("conservative", rep.conservative, false);

    let refused = match ctx.timed("reconstruct", || reconstruct_potential(&g, &ReconstructOptions::new(k))) {
        Err(Error::NotConservative { .. }) => true,
        Ok(_) => false,
        Err(e) => return Err(e.into()),
    };
    ctx.record("reconstruction_refused", refused, "bool");
    ctx.holds("reconstruction_refused", refused, true);

    if let Some(spec) = ctx.cfg.config.subdomain.clone() {
        let sub = build_domain(spec)?;
        let gs = src.load(&sub, &ctx.cfg.base_dir)?;
        let rs = ctx.timed("loops", || conservativity_check(&gs, k, &LoopSelection::Auto, None))?;
        ctx.record("subdomain_max_loop_integral", rs.max_loop_integral, "value");
        ctx.record("subdomain_tolerance", rs.tolerance, "value");
        ctx.holds("subdomain_conservative", rs.conservative, true);
    }
    let buf = vector_csv(&mg)?;
    ctx.write("mollified.csv", &buf)?;
    ctx.series.field = Some(buf);
    Ok(())
}
