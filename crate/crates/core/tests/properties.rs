//! Property tests of structural invariants on random inputs.

use proptest::prelude::*;

use ksrepel::checkpoint::Checkpoint;
use ksrepel::dynamics::{Drift, Params, SchemeConfig, State, Stepper};
use ksrepel::grid::{continuum_neumann_eigs, dirichlet_energy, neumann_eigs, Field, Grid};
use ksrepel::ineq::check_poincare;
use ksrepel::linearized::{decay_check, BlockOperator, LinState};
use ksrepel::norms::{lp_norm, mean};
use ksrepel::random::{mean_zero_field, positive_field, sample_rng, FieldGenerator};
use ksrepel::table::Table;

fn grid_strategy() -> impl Strategy<Value = Grid> {
    prop_oneof![
        (8usize..40, 0.5f64..2.0).prop_map(|(n, l)| Grid::new(1, &[l], &[n]).unwrap()),
        (8usize..20, 8usize..20, 0.5f64..2.0, 0.5f64..2.0)
            .prop_map(|(a, b, lx, ly)| Grid::new(2, &[lx, ly], &[a, b]).unwrap()),
        (8usize..10, 0.5f64..1.5).prop_map(|(n, l)| Grid::new(3, &[l, 1.0, 0.7], &[n, n, n]).unwrap()),
    ]
}

fn positive(g: &Grid, seed: u64, base: f64) -> Field {
    positive_field(g, &FieldGenerator::trig(1, 0.8), base, &mut sample_rng(seed, 0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lp_norms_increase_with_p_on_unit_volume(n in 8usize..64, seed in any::<u64>(), p in 1.0f64..6.0, dp in 0.0f64..4.0) {
        let g = Grid::unit(1, n).unwrap();
        let f = mean_zero_field(&g, &FieldGenerator::trig(1, 1.0), &mut sample_rng(seed, 1)).unwrap();
        let a = lp_norm(&f, p).unwrap();
        let b = lp_norm(&f, p + dp).unwrap();
        let inf = lp_norm(&f, f64::INFINITY).unwrap();
        prop_assert!(a <= b * (1.0 + 1e-12));
        prop_assert!(b <= inf * (1.0 + 1e-12));
    }

    #[test]
    fn step_conserves_mass_and_follows_mean_law(g in grid_strategy(), seed in any::<u64>(), dt in 1e-4f64..5e-3, upwind in any::<bool>(), gamma in 0.5f64..2.0) {
        let rho = positive(&g, seed, 1.0);
        let c = positive(&g, seed ^ 0x55, 1.3);
        let p = Params::new(1.0, gamma, 0.0, &rho).unwrap();
        let scheme = SchemeConfig { dt, dt_adapt: false, ..SchemeConfig::default() };
        let st = Stepper::new(g, p, scheme).unwrap();
        let drift = if upwind { Drift::Upwind } else { Drift::Central };
        let s0 = State::new(rho.clone(), c.clone(), 0.0).unwrap();
        let s1 = st.try_step(&s0, dt, drift);
        prop_assume!(s1.is_ok());
        let s1 = s1.unwrap();
        prop_assert!(((s1.mass() - s0.mass()) / s0.mass()).abs() < 1e-13);
        let k = dt / gamma;
        let expect = (mean(&c) + k * mean(&rho)) / (1.0 + k);
        prop_assert!(((mean(&s1.c) - expect) / expect).abs() < 1e-13);
    }

    #[test]
    fn upwind_step_keeps_density_nonnegative(n in 8usize..48, seed in any::<u64>(), amp in 0.1f64..0.95) {
        let g = Grid::unit(1, n).unwrap();
        let rho = positive_field(&g, &FieldGenerator::trig(1, amp), 1.0, &mut sample_rng(seed, 0)).unwrap();
        let c = positive(&g, seed.wrapping_add(1), 1.0);
        let p = Params::new(1.0, 1.0, 0.0, &rho).unwrap();
        let h = g.spacing(0);
        let dt = 0.1 * h * h;
        let st = Stepper::new(g, p, SchemeConfig { dt, dt_adapt: false, ..SchemeConfig::default() }).unwrap();
        let s1 = st.try_step(&State::new(rho, c, 0.0).unwrap(), dt, Drift::Upwind).unwrap();
        prop_assert!(s1.rho.min() >= 0.0);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(g in grid_strategy(), seed in any::<u64>(), t in 0.0f64..10.0) {
        let rho = positive(&g, seed, 1.0);
        let c = positive(&g, seed.wrapping_mul(3), 2.0);
        let p = Params::new(1.5, 0.7, 0.0, &rho).unwrap();
        let st = Stepper::new(g, p, SchemeConfig::default()).unwrap();
        let ck = Checkpoint::new(&State::new(rho, c, t).unwrap(), &st);
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        prop_assert_eq!(back.state.rho.values(), ck.state.rho.values());
        prop_assert_eq!(back.state.c.values(), ck.state.c.values());
        prop_assert_eq!(back.state.t.to_bits(), t.to_bits());
    }

    #[test]
    fn truncated_checkpoint_rejected(g in grid_strategy(), cut in 1usize..64) {
        let rho = Field::constant(g, 1.0);
        let st = Stepper::new(g, Params::new(1.0, 1.0, 0.0, &rho).unwrap(), SchemeConfig::default()).unwrap();
        let bytes = Checkpoint::new(&State::new(rho.clone(), rho, 0.0).unwrap(), &st).to_bytes().unwrap();
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 3), 0..20)) {
        let mut t = Table::new(["a", "b", "c"]);
        for r in rows {
            t.push(r).unwrap();
        }
        let back = Table::from_csv_bytes(&t.to_csv_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn discrete_spectrum_below_continuum(g in grid_strategy(), k in 1usize..20) {
        let k = k.min(g.len());
        let d = neumann_eigs(&g, k).unwrap();
        let c = continuum_neumann_eigs(&g, k).unwrap();
        prop_assert_eq!(d[0], 0.0);
        for i in 0..k {
            prop_assert!(d[i] <= c[i] * (1.0 + 1e-12));
            if i > 0 {
                prop_assert!(d[i] >= d[i - 1]);
            }
        }
        prop_assert!((d.get(1).copied().unwrap_or(g.lambda1()) - g.lambda1()).abs() <= 1e-9 * g.lambda1() || k == 1);
    }

    #[test]
    fn poincare_margin_nonnegative(g in grid_strategy(), seed in any::<u64>()) {
        let w = mean_zero_field(&g, &FieldGenerator::trig(1, 1.0), &mut sample_rng(seed, 4)).unwrap();
        let n = lp_norm(&w, 2.0).unwrap().powi(2);
        prop_assert!(check_poincare(&w).unwrap() >= -1e-10 * n);
        prop_assert!(dirichlet_energy(&w) >= 0.0);
    }

    #[test]
    fn linearized_energy_below_bound(n in 8usize..40, a in 0.5f64..=1.0, seed in any::<u64>(), t in 0.0f64..3.0) {
        let g = Grid::unit(1, n).unwrap();
        let op = BlockOperator::new(g, a).unwrap();
        let gen = FieldGenerator::trig(1, 1.0);
        let u = mean_zero_field(&g, &gen, &mut sample_rng(seed, 0)).unwrap();
        let v = mean_zero_field(&g, &gen, &mut sample_rng(seed, 1)).unwrap();
        let m = decay_check(&op, &LinState::new(u, v, 0.0).unwrap(), &[t]).unwrap();
        prop_assert!(m[0].margin >= -1e-10 * m[0].rhs);
    }
}
