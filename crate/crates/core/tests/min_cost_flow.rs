use freeflow::mcf::{min_cost_flow, Arc, FlowNetwork};
use minilp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random strongly connected network with integer supplies.
fn random_network(seed: u64, n: usize) -> FlowNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut arcs = Vec::new();
    for i in 0..n {
        arcs.push(Arc { from: i, to: (i + 1) % n, cost: rng.gen_range(0.5..3.0) });
    }
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen_bool(0.25) {
                arcs.push(Arc { from: u, to: v, cost: rng.gen_range(0.0..2.0) });
            }
        }
    }
    let mut supplies: Vec<f64> = (0..n).map(|_| rng.gen_range(-4i32..=4) as f64).collect();
    let total: f64 = supplies.iter().sum();
    supplies[0] -= total;
    FlowNetwork { n_nodes: n, arcs, supplies }
}

/// Arc-flow LP: minimize Σ c·x subject to outflow − inflow = supply, x ≥ 0.
fn lp_optimum(net: &FlowNetwork) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = net.arcs.iter().map(|a| lp.add_var(a.cost, (0.0, f64::INFINITY))).collect();
    for v in 0..net.n_nodes {
        let mut expr = LinearExpr::empty();
        for (a, &x) in net.arcs.iter().zip(&vars) {
            if a.from == v {
                expr.add(x, 1.0);
            }
            if a.to == v {
                expr.add(x, -1.0);
            }
        }
        lp.add_constraint(expr, ComparisonOp::Eq, net.supplies[v]);
    }
    lp.solve().expect("feasible LP").objective()
}

/// Bellman-Ford distance from `s` to `t` over the network arcs.
fn bellman_ford(net: &FlowNetwork, s: usize, t: usize) -> f64 {
    let mut dist = vec![f64::INFINITY; net.n_nodes];
    dist[s] = 0.0;
    for _ in 0..net.n_nodes {
        for a in &net.arcs {
            if dist[a.from] + a.cost < dist[a.to] {
                dist[a.to] = dist[a.from] + a.cost;
            }
        }
    }
    dist[t]
}

#[test]
fn matches_lp_oracle_on_random_instances() {
    for seed in 0..10 {
        let net = random_network(seed, 20);
        let sol = min_cost_flow(&net, 1).unwrap();
        let lp = lp_optimum(&net);
        assert!((sol.total_cost - lp).abs() <= 1e-9 * (1.0 + lp.abs()), "seed {seed}: {} vs {lp}", sol.total_cost);
        assert!(sol.conservation_error(&net) <= 1e-9);
        assert!(sol.dual_infeasibility(&net) <= 1e-9);
        assert!(sol.slackness_error(&net) <= 1e-9);
        assert!(sol.arc_flows.iter().all(|&f| f >= 0.0));
    }
}

#[test]
fn unit_supply_costs_the_shortest_path() {
    for seed in 20..30 {
        let mut net = random_network(seed, 15);
        net.supplies = vec![0.0; 15];
        net.supplies[3] = 1.0;
        net.supplies[11] = -1.0;
        let sol = min_cost_flow(&net, 10_000).unwrap();
        assert!((sol.total_cost - bellman_ford(&net, 3, 11)).abs() <= 1e-12);
    }
}

#[test]
fn fractional_supplies_are_rounded_consistently() {
    let net = FlowNetwork {
        n_nodes: 3,
        arcs: vec![Arc { from: 0, to: 1, cost: 1.0 }, Arc { from: 1, to: 2, cost: 1.0 }],
        supplies: vec![1.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0],
    };
    let sol = min_cost_flow(&net, 1000).unwrap();
    assert!(sol.supplies_used.iter().sum::<f64>().abs() < 1e-15);
    assert!(sol.rounding <= 2e-3);
    assert!((sol.total_cost - 1.0).abs() <= 2e-3 * 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn potentials_certify_optimality(seed in 100u64..10_000, n in 4usize..20) {
        let net = random_network(seed, n);
        let sol = min_cost_flow(&net, 100).unwrap();
        let dual: f64 = (0..n).map(|v| -sol.supplies_used[v] * sol.node_potentials[v]).sum();
        prop_assert!((dual - sol.total_cost).abs() <= 1e-9 * (1.0 + sol.total_cost));
        prop_assert!(sol.dual_infeasibility(&net) <= 1e-9);
    }

    #[test]
    fn cost_is_homogeneous(seed in 0u64..1000, t in 1u32..6) {
        let net = random_network(seed, 10);
        let base = min_cost_flow(&net, 1).unwrap().total_cost;
        let scaled = FlowNetwork { supplies: net.supplies.iter().map(|s| s * t as f64).collect(), ..net.clone() };
        let big = min_cost_flow(&scaled, 1).unwrap().total_cost;
        prop_assert!((big - t as f64 * base).abs() <= 1e-9 * (1.0 + big));
    }
}
