//! Property tests for the distribution and lattice invariants.

use bigjump::dist::StepDistribution;
use bigjump::lattice::{self, GridSpec};
use proptest::prelude::*;

fn arb_pareto() -> impl Strategy<Value = StepDistribution> {
    (0.5f64..4.0, 0.5f64..3.0)
        .prop_map(|(alpha, x_min)| StepDistribution::pareto(alpha, x_min).unwrap())
}

fn arb_two_sided() -> impl Strategy<Value = StepDistribution> {
    (0.5f64..2.0, 0.0f64..1.5, 0.05f64..0.45, 0.05f64..0.45)
        .prop_map(|(al, extra, wl, wr)| {
            StepDistribution::two_sided(al, al + extra, wl, wr, 1.0).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tail_monotone_and_bounded(d in prop_oneof![arb_pareto(), arb_two_sided()],
                                 x1 in -20.0f64..500.0, gap in 0.0f64..200.0) {
        let (t1, t2) = (d.tail(x1), d.tail(x1 + gap));
        prop_assert!((0.0..=1.0).contains(&t1));
        prop_assert!(t2 <= t1 + 1e-15);
    }

    #[test]
    fn window_masses_telescope(d in arb_pareto(), x in 0.0f64..200.0, t in 0.01f64..50.0) {
        let lhs = d.window_mass(x, t) + d.window_mass(x + t, t);
        let rhs = d.window_mass(x, 2.0 * t);
        prop_assert!((lhs - rhs).abs() < 1e-12);
        prop_assert!(d.window_mass(x, t) >= -1e-15);
    }

    #[test]
    fn truncated_second_moment_bounded(d in arb_two_sided(), x in 1.0f64..500.0) {
        let (_, mu2) = d.truncated_moments(x);
        prop_assert!(mu2 >= -1e-12);
        prop_assert!(mu2 <= x * x * (1.0 - d.two_sided_tail(x)) + 1e-9 * x * x);
        // mu2 is nondecreasing in x
        let (_, mu2b) = d.truncated_moments(x * 1.5);
        prop_assert!(mu2b + 1e-12 >= mu2);
    }

    #[test]
    fn convolve_conserves_mass(seed in 0u64..5000) {
        let rng = bigjump::CounterRng::new(seed);
        let make = |stream: u64| {
            let mut v: Vec<f64> = (0..48).map(|i| rng.uniform(stream, i)).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s * 1.25); // sub-probability
            lattice::LatticePmf::from_parts(0.0, 0.25, v)
        };
        let (p, q) = (make(1), make(2));
        let c = lattice::convolve(&p, &q).unwrap();
        prop_assert!((c.total() - p.total() * q.total()).abs() < 1e-12);
        // truncation keeps the books balanced
        let t = c.truncate_to(2.0, 15.0);
        prop_assert!((t.total() - c.total()).abs() < 1e-12);
    }

    #[test]
    fn nfold_tail_monotone_in_restriction(x in 2.0f64..30.0, h1 in 2.0f64..20.0, extra in 0.5f64..20.0) {
        let d = StepDistribution::pareto(2.5, 1.0).unwrap();
        let pmf = lattice::discretize(&d, GridSpec { delta: 0.25, lo: 1.0, hi: 200.0 }).unwrap();
        let lo_level = lattice::restricted_walk(&pmf, h1, 4, false).unwrap();
        let hi_level = lattice::restricted_walk(&pmf, h1 + extra, 4, false).unwrap();
        let a = lo_level.tail_table().in_grid_above(x) + lo_level.spill_high();
        let b = hi_level.tail_table().in_grid_above(x) + hi_level.spill_high();
        prop_assert!(a <= b + 1e-12);
    }
}
