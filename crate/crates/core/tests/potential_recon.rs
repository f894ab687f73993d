use freeflow::domain::{build_domain, Domain, DomainSpec};
use freeflow::fields::{vortex_field, GridScalarField, GridVectorField};
use freeflow::geometry::{Norm, Point};
use freeflow::potential::{
    isometry_defect, lipschitz_norm_global, lipschitz_norm_local, reconstruct_potential, PairSelection,
    ReconstructOptions,
};
use freeflow::Error;
use proptest::prelude::*;

/// All-pairs graph distances by Floyd–Warshall over the interior cells.
fn floyd_warshall(d: &Domain) -> (Vec<usize>, Vec<Vec<f64>>) {
    let cells = d.interior_cells().to_vec();
    let mut index = vec![usize::MAX; d.n_cells()];
    for (i, &c) in cells.iter().enumerate() {
        index[c] = i;
    }
    let n = cells.len();
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for (i, &c) in cells.iter().enumerate() {
        dist[i][i] = 0.0;
        for (v, w) in d.neighbors(c) {
            dist[i][index[v]] = dist[i][index[v]].min(w);
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i][k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let alt = dik + dist[k][j];
                if alt < dist[i][j] {
                    dist[i][j] = alt;
                }
            }
        }
    }
    (cells, dist)
}

fn obstacle_domain() -> Domain {
    let spec = DomainSpec::unit_square(Norm::L2, 1.0 / 12.0)
        .with_hole(vec![[0.3, 0.3], [0.55, 0.3], [0.55, 0.6], [0.3, 0.6]])
        .with_slit([0.7, 0.0], [0.7, 0.7]);
    build_domain(spec).unwrap()
}

#[test]
fn global_lipschitz_matches_brute_force() {
    let d = obstacle_domain();
    let (cells, dist) = floyd_warshall(&d);
    for seed in 0..4u64 {
        let s = seed as f64;
        let f = GridScalarField::from_fn(&d, |p| (3.0 * p[0] + s).sin() * (2.0 * p[1] - s).cos() + p[0] * p[1] * s);
        let mut want: f64 = 0.0;
        for i in 0..cells.len() {
            for j in 0..cells.len() {
                if i != j {
                    want = want.max((f.values()[cells[i]] - f.values()[cells[j]]).abs() / dist[i][j]);
                }
            }
        }
        let got = lipschitz_norm_global(&f, PairSelection::All);
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
        assert!(lipschitz_norm_local(&f) <= got + 1e-12);
    }
}

#[test]
fn distance_to_a_cell_is_exactly_one_lipschitz() {
    let d = obstacle_domain();
    let (cells, dist) = floyd_warshall(&d);
    let values = {
        let mut v = vec![0.0; d.n_cells()];
        for (j, &c) in cells.iter().enumerate() {
            v[c] = dist[3][j];
        }
        v
    };
    let f = GridScalarField::new(&d, values, d.interior_mask().to_vec()).unwrap();
    assert!((lipschitz_norm_global(&f, PairSelection::All) - 1.0).abs() <= 1e-12);
    assert!((lipschitz_norm_local(&f) - 1.0).abs() <= 1e-12);
}

fn smooth(p: Point) -> f64 {
    p[0] * p[0] + (2.0 * p[1]).sin()
}

fn smooth_grad(d: &Domain) -> GridVectorField<'_> {
    GridVectorField::from_fn(d, |p| [2.0 * p[0], 2.0 * (2.0 * p[1]).cos()])
}

#[test]
fn gradient_on_annulus_is_reconstructed() {
    let d = build_domain(DomainSpec::square_annulus(0.5, Norm::L2, 1.0 / 32.0).with_basepoint([0.75, 0.0])).unwrap();
    let g = smooth_grad(&d);
    let rec = reconstruct_potential(&g, &ReconstructOptions::new(8)).unwrap();
    assert!(!rec.region_disconnected);
    assert!(rec.conservativity.conservative);
    assert_eq!(rec.conservativity.hole_loops.len(), 1);
    let base = d.basepoint();
    let f0 = smooth(d.center(base));
    let mut worst: f64 = 0.0;
    for c in rec.potential.supported_cells() {
        worst = worst.max((rec.potential.values()[c] - (smooth(d.center(c)) - f0)).abs());
    }
    assert!(worst <= 0.05, "max error {worst}");
    assert!(rec.residual <= 1e-9 + rec.conservativity.tolerance);
}

#[test]
fn vortex_is_rejected_as_not_conservative() {
    let d = build_domain(DomainSpec::square_annulus(0.5, Norm::L2, 1.0 / 32.0).with_basepoint([0.75, 0.0])).unwrap();
    let g = vortex_field([0.0, 0.0], 0.25).sample(&d);
    match reconstruct_potential(&g, &ReconstructOptions::new(8)) {
        Err(Error::NotConservative { max_loop_integral, tolerance }) => {
            assert!(max_loop_integral > tolerance);
            assert!((max_loop_integral - 2.0 * std::f64::consts::PI).abs() <= 0.05);
        }
        other => panic!("expected NotConservative, got {:?}", other.map(|r| r.residual)),
    }
}

#[test]
fn eroded_basepoint_is_reported() {
    let d = build_domain(DomainSpec::unit_square(Norm::L2, 1.0 / 32.0).with_basepoint([0.03, 0.5])).unwrap();
    let err = reconstruct_potential(&smooth_grad(&d), &ReconstructOptions::new(8)).err();
    assert_eq!(err, Some(Error::BasepointEroded));
}

#[test]
fn erosion_can_split_a_dumbbell() {
    let outer = vec![
        [0.0, 0.0], [1.0, 0.0], [1.0, 0.45], [1.5, 0.45], [1.5, 0.0], [2.5, 0.0],
        [2.5, 1.0], [1.5, 1.0], [1.5, 0.55], [1.0, 0.55], [1.0, 1.0], [0.0, 1.0],
    ];
    let d = build_domain(DomainSpec::new(outer, Norm::L2, 1.0 / 32.0).with_basepoint([0.5, 0.5])).unwrap();
    let rec = reconstruct_potential(&smooth_grad(&d), &ReconstructOptions::new(8)).unwrap();
    assert!(rec.region_disconnected);
    assert!(rec.potential.supported_cells().all(|c| d.center(c)[0] < 1.0));
}

#[test]
fn isometry_defect_shrinks_with_h() {
    let mut defects = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 64.0] {
        let d = build_domain(DomainSpec::unit_square(Norm::L2, h)).unwrap();
        let f = GridScalarField::from_fn(&d, |p| 0.5 * p[0] * p[0] + 0.3 * p[1]);
        defects.push(isometry_defect(&f).unwrap().defect);
    }
    assert!(defects[1] < defects[0], "{defects:?}");
    assert!(defects[1] <= 0.05, "{defects:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn local_lipschitz_of_linear_function_is_dual_norm(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let d = build_domain(DomainSpec::unit_square(Norm::L1, 1.0 / 16.0)).unwrap();
        let f = GridScalarField::from_fn(&d, |p| a * p[0] + b * p[1]);
        let want = a.abs().max(b.abs());
        prop_assert!((lipschitz_norm_local(&f) - want).abs() <= 1e-12);
        let pairs = PairSelection::RandomSources { count: 4, seed: 7 };
        prop_assert!((lipschitz_norm_global(&f, pairs) - want).abs() <= 1e-12);
    }
}
