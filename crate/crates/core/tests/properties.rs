use cellfree_haps::baselines::aerial_cellular_sinr;
use cellfree_haps::channel::{
    access_gain_with_los, backhaul_gain, steering_access, steering_backhaul_rx, steering_backhaul_tx,
    LinkGains,
};
use cellfree_haps::linkchain::{estimate_empirical_sinr, McOptions};
use cellfree_haps::optimizer::power::{feasibility_profile, is_nested};
use cellfree_haps::optimizer::{bisection_power, BisectionOptions, PowerProblem};
use cellfree_haps::rate::{PowerAllocation, SinrModel};
use cellfree_haps::scenario::{
    access_geometry_at, build_scenario, EnvironmentKind, NetworkScenario, ScenarioParams,
};
use cellfree_haps::socp::{check_point, solve, AffineExpr, ConeProgram, SocConstraint, SolveOptions};
use proptest::prelude::*;

fn env_kind() -> impl Strategy<Value = EnvironmentKind> {
    prop_oneof![
        Just(EnvironmentKind::Suburban),
        Just(EnvironmentKind::Urban),
        Just(EnvironmentKind::DenseUrban),
    ]
}

fn small_scenario(k: usize, m: usize, env: EnvironmentKind, seed: u64) -> NetworkScenario {
    let params = ScenarioParams {
        num_users: k,
        num_uxnbs: m,
        environment: env,
        ..Default::default()
    };
    build_scenario(&params, seed).unwrap()
}

fn random_allocation(s: &NetworkScenario, weights: &[f64]) -> PowerAllocation {
    let (k, m) = (s.users.len(), s.uxnbs.len());
    let mut a = PowerAllocation::zeros(k, m);
    for j in 0..m {
        let w = &weights[j * k..(j + 1) * k];
        let total: f64 = w.iter().sum();
        for i in 0..k {
            a.set(i, j, s.p_uxnb_w[j] * w[i] / total);
        }
    }
    a
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elevation_cosine_in_unit_interval(x in -600.0..600.0f64, y in -600.0..600.0f64, z in 10.0..400.0f64) {
        let g = access_geometry_at([x, y], [0.0, 0.0, z]);
        let c = z / g.distance_m;
        prop_assert!(c > 0.0 && c <= 1.0);
    }

    #[test]
    fn elevation_falls_with_offset(r in 0.0..2000.0f64, dr in 0.1..500.0f64, z in 10.0..400.0f64) {
        let near = access_geometry_at([r, 0.0], [0.0, 0.0, z]);
        let far = access_geometry_at([r + dr, 0.0], [0.0, 0.0, z]);
        prop_assert!(far.elevation_deg < near.elevation_deg);
    }

    #[test]
    fn scenario_json_round_trip(k in 1usize..6, m in 1usize..6, env in env_kind(), seed in any::<u64>()) {
        let s = small_scenario(k, m, env, seed);
        let back = NetworkScenario::from_json(&s.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn absorption_only_attenuates(k in 1usize..4, m in 1usize..6, seed in any::<u64>()) {
        let s = small_scenario(k, m, EnvironmentKind::Urban, seed);
        for j in 0..m {
            let geom = s.backhaul_geometry(j).unwrap();
            let g = backhaul_gain(&geom, &s.radio, s.absorption_db_per_km, s.effective_height_m).unwrap();
            prop_assert!(g.gamma2 < g.rho2);
            let clear = backhaul_gain(&geom, &s.radio, 0.0, s.effective_height_m).unwrap();
            prop_assert_eq!(clear.gamma2, clear.rho2);
        }
    }

    #[test]
    fn path_gain_falls_with_distance(d in 1.0..5000.0f64, dd in 0.01..1000.0f64, p_los in 0.0..=1.0f64) {
        let s = small_scenario(1, 1, EnvironmentKind::Urban, 0);
        let mut geom = s.access_geometry(0, 0);
        geom.distance_m = d;
        let near = access_gain_with_los(&geom, &s.radio, &s.env, p_los).unwrap();
        geom.distance_m = d + dd;
        let far = access_gain_with_los(&geom, &s.radio, &s.env, p_los).unwrap();
        prop_assert!(far.beta2 < near.beta2);
    }

    #[test]
    fn steering_vectors_unit_modulus(k in 1usize..4, m in 1usize..4, seed in any::<u64>()) {
        let s = small_scenario(k, m, EnvironmentKind::Urban, seed);
        for j in 0..m {
            let bg = s.backhaul_geometry(j).unwrap();
            let b = steering_backhaul_tx(&bg, &s.radio);
            prop_assert_eq!(b.len(), s.radio.g());
            prop_assert!(rel(b.inner(&b).re, s.radio.g() as f64) <= 1e-12);
            let c = steering_backhaul_rx(&bg, &s.radio);
            let a = steering_access(&s.access_geometry(0, j), &s.radio);
            for e in b.0.iter().chain(&c.0).chain(&a.0) {
                prop_assert!((e.norm() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sinr_is_scale_covariant(
        k in 1usize..5,
        m in 1usize..5,
        seed in any::<u64>(),
        weights in prop::collection::vec(0.01..1.0f64, 16),
        c in 1e-3..1e3f64,
    ) {
        let s = small_scenario(k, m, EnvironmentKind::Urban, seed);
        let model = SinrModel::new(&s, &LinkGains::compute(&s).unwrap());
        let a = random_allocation(&s, &weights);
        let mut scaled = model.clone();
        scaled.p_user.iter_mut().for_each(|p| *p *= c);
        scaled.p_uxnb.iter_mut().for_each(|p| *p *= c);
        scaled.sigma2 *= c;
        scaled.sigma2_haps *= c;
        let base = model.sinr(&a).unwrap();
        let moved = scaled.sinr(&a.scaled(c)).unwrap();
        for (x, y) in base.iter().zip(&moved) {
            prop_assert!(rel(*x, *y) <= 1e-10, "{} vs {}", x, y);
        }
    }

    #[test]
    fn terms_recombine(
        k in 1usize..5,
        m in 1usize..5,
        seed in any::<u64>(),
        weights in prop::collection::vec(0.01..1.0f64, 16),
    ) {
        let s = small_scenario(k, m, EnvironmentKind::DenseUrban, seed);
        let model = SinrModel::new(&s, &LinkGains::compute(&s).unwrap());
        let a = random_allocation(&s, &weights);
        let sinr = model.sinr(&a).unwrap();
        for (i, v) in sinr.iter().enumerate() {
            prop_assert!(rel(model.terms(i, &a).sinr(), *v) <= 1e-12);
        }
    }

    #[test]
    fn taylor_cut_underestimates_reciprocal(t in 1e-6..1e6f64, t0 in 1e-6..1e6f64) {
        let cut = -(t - t0) / (t0 * t0) + 1.0 / t0;
        prop_assert!(1.0 / t >= cut - 1e-12 * (1.0 / t).abs());
    }

    #[test]
    fn bisection_optimum_beats_cellular_and_is_budget_limited(k in 1usize..4, m in 1usize..4, env in env_kind(), seed in any::<u64>()) {
        let s = small_scenario(k, m, env, seed);
        let gains = LinkGains::compute(&s).unwrap();
        let cellular = aerial_cellular_sinr(&s, &gains).unwrap().min_sinr().0;
        let problem = PowerProblem::from_scenario(&s, &gains);
        let opts = BisectionOptions::default();
        let out = bisection_power(&problem, &opts).unwrap();
        let cell_free = out.sinr.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(cell_free >= cellular - opts.epsilon, "{} < {}", cell_free, cellular);
        let fill = (0..m).map(|j| out.alloc.column_sum(j) / s.p_uxnb_w[j]).fold(0.0, f64::max);
        prop_assert!(fill > 0.0 && fill <= 1.0 + 1e-8, "budget fill {}", fill);
        let filled = problem.model.sinr(&out.alloc.scaled(1.0 / fill)).unwrap();
        let top = filled.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(top <= out.eta_max * (1.0 + 1e-9), "filling the budget reaches {} > {}", top, out.eta_max);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn feasible_targets_nest(k in 1usize..4, m in 1usize..4, seed in any::<u64>(), etas in prop::collection::vec(0.0..1.0f64, 8)) {
        let s = small_scenario(k, m, EnvironmentKind::Urban, seed);
        let gains = LinkGains::compute(&s).unwrap();
        let problem = PowerProblem::from_scenario(&s, &gains);
        let anchor = SinrModel::new(&s, &gains).sinr(&PowerAllocation::uniform_for(&s)).unwrap();
        let a = anchor.iter().copied().fold(f64::INFINITY, f64::min);
        let grid: Vec<f64> = etas.iter().map(|u| a * (0.25 + 3.0 * u)).collect();
        let probes = feasibility_profile(&problem, &grid, &SolveOptions::default()).unwrap();
        prop_assert!(is_nested(&probes));
    }

    #[test]
    fn returned_points_satisfy_constraints(
        n in 2usize..8,
        rows in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 9), 4),
        obj in prop::collection::vec(-1.0..1.0f64, 8),
        margin in 0.1..2.0f64,
    ) {
        let mut p = ConeProgram::new(n);
        p.objective = obj[..n].to_vec();
        for r in &rows {
            let lhs: Vec<AffineExpr> = (0..2)
                .map(|i| {
                    let mut e = AffineExpr::constant(r[8 - i]);
                    for v in 0..n.min(3) {
                        e = e.term(v, r[i * 3 + v]);
                    }
                    e
                })
                .collect();
            let at_zero = lhs.iter().map(|e| e.eval(&vec![0.0; n]).powi(2)).sum::<f64>().sqrt();
            p.add_soc(SocConstraint::new(lhs, AffineExpr::constant(at_zero + margin)));
        }
        for v in 0..n {
            p.set_bounds(v, -3.0, 3.0);
        }
        let opts = SolveOptions::default();
        let first = solve(&p, &opts).unwrap();
        prop_assert!(first.is_feasible());
        let r = check_point(&p, &first.x);
        prop_assert!(r.max_soc <= opts.tol_feas && r.max_linear <= opts.tol_feas && r.max_bound <= opts.tol_feas);
        let again = solve(&p, &opts).unwrap();
        prop_assert_eq!(first.x, again.x);
    }

    #[test]
    fn monte_carlo_is_deterministic(k in 1usize..3, m in 1usize..3, seed in any::<u64>(), mc_seed in any::<u64>()) {
        let s = small_scenario(k, m, EnvironmentKind::Urban, seed);
        let g = LinkGains::compute(&s).unwrap();
        let a = PowerAllocation::uniform_for(&s);
        let opts = McOptions { trials: 1000, seed: mc_seed, ..Default::default() };
        let x = estimate_empirical_sinr(&s, &g, &a, &opts).unwrap();
        let y = estimate_empirical_sinr(&s, &g, &a, &opts).unwrap();
        prop_assert_eq!(format!("{:?}", x.users), format!("{:?}", y.users));
        let clear = estimate_empirical_sinr(&s, &g.without_absorption(), &a, &opts).unwrap();
        prop_assert!(clear.users.iter().all(|u| u.terms.reemission == 0.0));
    }
}
