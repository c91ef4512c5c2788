use proptest::prelude::*;

use vanish_damp::config::{fmt_f64, RunConfig};
use vanish_damp::integrate::{integrate, SystemSpec};
use vanish_damp::oracle;
use vanish_damp::potential::Potential;
use vanish_damp::rng::halton;
use vanish_damp::schedule::DampingSchedule;
use vanish_damp::sgd::{run_recursion, NoiseModel, StepSchedule, DRIFT_IDENTITY_TOL};

fn schedule() -> impl Strategy<Value = DampingSchedule> {
    prop_oneof![
        (0.0..3.0f64).prop_map(|l| DampingSchedule::constant(l).unwrap()),
        (0.1..3.0f64, 0.2..1.5f64, 0.5..3.0f64).prop_map(|(c, g, s)| DampingSchedule::power_law(c, g, s).unwrap()),
        Just(DampingSchedule::log_log_example()),
    ]
}

fn potential_1d() -> impl Strategy<Value = Potential> {
    prop_oneof![
        Just(Potential::quadratic(1).unwrap()),
        (1.2..6.0f64).prop_map(|p| Potential::p_power(1, p).unwrap()),
        (0.3..3.0f64).prop_map(|b| Potential::signed_power(b).unwrap()),
        Just(Potential::double_well()),
        Just(Potential::flat_bottom(1).unwrap()),
        Just(Potential::polynomial(vec![0.0, 1.0, -0.5, 0.0, 0.25]).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn integral_is_additive(s in schedule(), t0 in 0.0..50.0f64, d1 in 0.0..50.0f64, d2 in 0.0..50.0f64) {
        let (t1, t2) = (t0 + d1, t0 + d1 + d2);
        let whole = s.integral_a(t0, t2).unwrap();
        let parts = s.integral_a(t0, t1).unwrap() + s.integral_a(t1, t2).unwrap();
        prop_assert!((whole - parts).abs() <= 1e-9 * whole.abs().max(1.0), "{} vs {}", whole, parts);
    }

    #[test]
    fn kernel_is_exp_of_integral(s in schedule(), t in 0.0..200.0f64) {
        let i = s.integral_a(0.0, t).unwrap();
        prop_assume!(i <= 700.0);
        let k = s.decay_kernel(t).unwrap();
        prop_assert!((k - (-i).exp()).abs() <= 1e-12 * k.max(1e-300) + 1e-300);
        prop_assert!(k > 0.0 && k <= 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences(p in potential_1d(), x in -2.5..2.5f64) {
        let h = 1e-6;
        let fd = (p.eval(&[x + h]).unwrap() - p.eval(&[x - h]).unwrap()) / (2.0 * h);
        let g = p.grad(&[x]).unwrap()[0];
        // the flat-bottom kink at |x| = 1 has a continuous derivative but a jump in G''
        prop_assert!((fd - g).abs() <= 1e-5 * g.abs().max(1.0), "x {} fd {} g {}", x, fd, g);
    }

    #[test]
    fn gradient_2d_matches_finite_differences(x in -2.0..2.0f64, y in -2.0..2.0f64, p in 1.5..5.0f64) {
        for pot in [Potential::quadratic(2).unwrap(), Potential::p_power(2, p).unwrap(), Potential::flat_bottom(2).unwrap()] {
            let g = pot.grad(&[x, y]).unwrap();
            let h = 1e-6;
            let fx = (pot.eval(&[x + h, y]).unwrap() - pot.eval(&[x - h, y]).unwrap()) / (2.0 * h);
            let fy = (pot.eval(&[x, y + h]).unwrap() - pot.eval(&[x, y - h]).unwrap()) / (2.0 * h);
            prop_assert!((fx - g[0]).abs() <= 1e-5 * g[0].abs().max(1.0));
            prop_assert!((fy - g[1]).abs() <= 1e-5 * g[1].abs().max(1.0));
        }
    }

    #[test]
    fn energy_never_increases(p in potential_1d(), x0 in -2.0..2.0f64, v0 in -2.0..2.0f64, s in schedule()) {
        let traj = integrate(&SystemSpec::new(s, p, vec![x0], vec![v0], 30.0)).unwrap();
        let e = traj.energies();
        let scale = e[0].abs().max(1.0);
        for w in e.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8 * scale, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn zero_potential_matches_closed_form(s in schedule(), x0 in -2.0..2.0f64, v0 in -2.0..2.0f64) {
        let traj = integrate(&SystemSpec::new(s.clone(), Potential::zero(1).unwrap(), vec![x0], vec![v0], 20.0)).unwrap();
        let end = traj.len() - 1;
        let exact = oracle::zero_potential_solution(&s, &[x0], &[v0], 20.0).unwrap();
        prop_assert!((traj.x_at(end)[0] - exact.x[0]).abs() <= 1e-8);
        prop_assert!((traj.v_at(end)[0] - exact.v[0]).abs() <= 1e-8);
    }

    #[test]
    fn bessel_branches_agree_on_overlap(t in 25.0..35.0f64, nu in prop::sample::select(vec![0.0, 0.5, 1.0])) {
        let series = oracle::bessel_j_series(nu, t).unwrap();
        let asym = oracle::bessel_j_first_correction(nu, t).unwrap();
        prop_assert!((series - asym).abs() <= 1e-4);
    }

    #[test]
    fn halton_stays_in_unit_interval(i in 0u64..1_000_000, d in 0usize..16) {
        let h = halton(i, d);
        prop_assert!((0.0..1.0).contains(&h));
    }

    #[test]
    fn floats_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn config_echo_round_trips(c in 0.05..5.0f64, g in 0.0..1.0f64, x0 in -3.0..3.0f64, t_end in 1.0..1e4f64, tol in 1e-12..1e-6f64) {
        let text = format!(
            "[schedule]\nkind = power_law\nc = {c}\ngamma = {g}\noffset = 1\n[potential]\nkind = double_well\n[run]\nx0 = {x0}\nt_end = {t_end}\nrel_tol = {tol}\n"
        );
        let cfg = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(RunConfig::parse(&cfg.echo()).unwrap(), cfg);
    }

    #[test]
    fn recursion_clock_and_drift(eps0 in 1e-3..0.5f64, rho in 0.51..1.0f64, x0 in -2.0..2.0f64) {
        let pot = Potential::double_well();
        let steps = StepSchedule::power_decay(eps0, rho).unwrap();
        let n = 5000;
        let p = run_recursion(&pot, steps, NoiseModel::none(), &[x0], n).unwrap();
        prop_assert!(p.drift_identity_error <= DRIFT_IDENTITY_TOL);
        let direct: f64 = (0..=n).map(|k| steps.eps(k)).sum();
        prop_assert!((p.tau[n] - direct).abs() <= 1e-12 * direct);
    }
}
