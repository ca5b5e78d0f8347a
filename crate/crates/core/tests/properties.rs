use ctdelay::approx::{rct_exponential, rct_fixed, rct_latency};
use ctdelay::endemic::gamma_eff;
use ctdelay::kappa::{solve, SolverSettings};
use ctdelay::mc::{simulate_outbreak, write_event_log, Caps};
use ctdelay::quad::{convolve, cumulative};
use ctdelay::*;
use proptest::prelude::*;

fn rates() -> impl Strategy<Value = Rates> {
    (0.2f64..4.0, 0.0f64..1.0, 0.1f64..1.5, 0.0f64..=1.0)
        .prop_map(|(b, a, s, p)| Rates::new(b, a, s, p).unwrap())
}

fn kernel() -> impl Strategy<Value = DelayKernel> {
    prop_oneof![
        (0usize..=30).prop_map(|k| DelayKernel::dirac(k as f64 * 0.05).unwrap()),
        (0.05f64..2.0).prop_map(|m| DelayKernel::exponential(m).unwrap()),
    ]
}

fn solver_rates() -> impl Strategy<Value = Rates> {
    (0.2f64..4.0, 0.0f64..1.0, 0.5f64..1.5, 0.0f64..=1.0)
        .prop_map(|(b, a, s, p)| Rates::new(b, a, s, p).unwrap())
}

fn solver_kernel() -> impl Strategy<Value = DelayKernel> {
    prop_oneof![
        (0usize..=30).prop_map(|k| DelayKernel::dirac(k as f64 * 0.05).unwrap()),
        (0.2f64..2.0).prop_map(|m| DelayKernel::exponential(m).unwrap()),
    ]
}

fn config() -> impl Strategy<Value = TraceConfig> {
    (
        prop_oneof![Just(Direction::Backward), Just(Direction::Forward), Just(Direction::Full)],
        prop_oneof![Just(Mode::OneStep), Just(Mode::Recursive)],
        1usize..6,
    )
        .prop_map(|(d, m, g)| TraceConfig::new(d, m, g).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solver_outputs_are_dominated_survival_curves(
        r in solver_rates(),
        k in solver_kernel(),
        cfg in config(),
        latency in prop_oneof![Just(0.0), (1usize..20).prop_map(|j| j as f64 * 0.05)],
    ) {
        let profile = if latency > 0.0 {
            AgeProfile::fixed_latency(r, latency).unwrap()
        } else {
            AgeProfile::Constant(r)
        };
        let auto = Grid::for_profile(&profile, &k).unwrap();
        let grid = Grid::new(auto.h(), 8.0).unwrap();
        let settings = SolverSettings::new(grid);
        let curves = solve(&profile, &k, &cfg, &settings).unwrap();
        let base = KappaCurve::baseline(&profile, grid);
        for c in &curves {
            let v = c.values();
            prop_assert_eq!(v[0], 1.0);
            for j in 1..v.len() {
                prop_assert!(v[j] <= v[j - 1] && v[j] >= 0.0);
                prop_assert!(v[j] <= base.values()[j] + 1e-12);
            }
        }
    }
}

proptest! {
    #[test]
    fn dirac_convolution_is_an_exact_shift(
        f in prop::collection::vec(-5.0f64..5.0, 11..80),
        m in 0usize..10,
    ) {
        let h = 0.1;
        let grid = Grid::new(h, (f.len() - 1) as f64 * h).unwrap();
        prop_assume!(grid.len() == f.len());
        let out = convolve(&f, &DelayKernel::dirac(m as f64 * h).unwrap(), &grid).unwrap();
        for k in m..f.len() {
            prop_assert_eq!(out[k], f[k - m]);
        }
    }

    #[test]
    fn cumulative_differentiates_back(c in 0.2f64..3.0, w in 0.1f64..2.0) {
        let grid = Grid::new(0.01, 5.0).unwrap();
        let f: Vec<f64> = grid.ages().map(|a| c * (w * a).sin() + a).collect();
        let big_f = cumulative(&f, &grid).unwrap();
        let h = grid.h();
        let err = (1..f.len())
            .map(|k| ((big_f[k] - big_f[k - 1]) / h - 0.5 * (f[k] + f[k - 1]) ).abs())
            .fold(0.0, f64::max);
        prop_assert!(err < 1e-9);
        let err = (1..f.len())
            .map(|k| ((big_f[k] - big_f[k - 1]) / h - f[k]).abs())
            .fold(0.0, f64::max);
        prop_assert!(err <= (c * w + 1.0) * h);
    }

    #[test]
    fn rate_identities(r in rates()) {
        prop_assert!((r.p_obs() * r.gamma() - r.sigma()).abs() <= 1e-15 * r.gamma());
        prop_assert!(((1.0 - r.p_obs()) * r.gamma() - r.alpha()).abs() <= 1e-15 * r.gamma());
    }

    #[test]
    fn delay_text_round_trip(k in kernel()) {
        prop_assert_eq!(k.to_string().parse::<DelayKernel>().unwrap(), k);
    }

    #[test]
    fn rct_closed_form_invariants(
        r0 in 0.5f64..5.0,
        p in 0.0f64..1.0,
        p_obs in 0.05f64..=1.0,
        gamma in 0.2f64..3.0,
        t in 0.0f64..4.0,
        dt in 0.01f64..1.0,
        dp in 0.01f64..0.5,
    ) {
        for b in [rct_fixed(r0, p, p_obs, gamma, t).unwrap(), rct_exponential(r0, p, p_obs, gamma, t).unwrap()] {
            prop_assert!(b.backward_term >= 0.0 && b.forward_term >= 0.0);
            prop_assert!(b.rct <= b.r0);
        }
        let zero = rct_fixed(r0, 0.0, p_obs, gamma, t).unwrap();
        prop_assert_eq!(zero.rct, r0);
        let fixed = rct_fixed(r0, p, p_obs, gamma, t).unwrap();
        prop_assert!(rct_fixed(r0, p, p_obs, gamma, t + dt).unwrap().rct >= fixed.rct);
        if p > 0.0 {
            prop_assert!(rct_fixed(r0, p, p_obs, gamma, t + dt).unwrap().rct > fixed.rct);
        }
        let more = (p + dp).min(1.0);
        prop_assert!(rct_fixed(r0, more, p_obs, gamma, t).unwrap().rct < fixed.rct || more == p);
        if t > 0.0 {
            let exp = rct_exponential(r0, p, p_obs, gamma, t).unwrap();
            prop_assert!(exp.backward_term > fixed.backward_term);
            prop_assert!(exp.forward_term > fixed.forward_term);
        }
    }

    #[test]
    fn latency_effect_shrinks_with_delay(
        t in 0.0f64..3.0,
        dt in 0.0f64..1.0,
        ti in 0.0f64..3.0,
    ) {
        let a = rct_latency(2.0, 0.5, 0.9, 1.0, t, ti).unwrap();
        let b = rct_latency(2.0, 0.5, 0.9, 1.0, t + dt, ti).unwrap();
        prop_assert!(b.rct >= a.rct - 1e-15);
    }

    #[test]
    fn gamma_eff_monotone(
        u in 0.01f64..=1.0,
        t in 0.0f64..3.0,
        dt in 0.0f64..1.0,
        p in 0.0f64..0.3,
        dp in 0.0f64..0.1,
    ) {
        let r = Rates::new(2.0, 0.2, 0.9, 0.0).unwrap();
        let g = gamma_eff(u, &r, p, t).unwrap();
        prop_assert!(gamma_eff(u, &r, p, t + dt).unwrap() <= g + 1e-15);
        prop_assert!(gamma_eff(u, &r, p + dp, t).unwrap() >= g - 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn event_logs_are_reproducible(seed in any::<u64>(), p in 0.0f64..1.0, cfg in config()) {
        let profile = AgeProfile::Constant(Rates::new(2.0, 0.1, 0.9, p).unwrap());
        let kernel = DelayKernel::dirac(0.5).unwrap();
        let caps = Caps::new(4, 20_000, 50.0).unwrap();
        let log = |s| {
            let mut buf = Vec::new();
            write_event_log(&simulate_outbreak(&profile, &kernel, &cfg, s, &caps), &mut buf).unwrap();
            buf
        };
        prop_assert_eq!(log(seed), log(seed));
    }
}
