use std::collections::BTreeSet;

use cmps_core::cmps::{bits_of, joint_block_svd, Bits};
use cmps_core::indexing::{backward_sweep, boundary, charge_complexity, constraints_to_indices};
use cmps_core::optimizer::{anneal_temperature, boltzmann_weights, solve, OptimizerConfig, SampleDictionary};
use cmps_core::problems::{brute_force_count, brute_force_solve, gen_qkp};
use cmps_core::{constraints_to_mps, nalgebra::DMatrix, Center, ConstrainedMPS, ConstraintSystem, IntBox, QRegion, Qn, Truncation};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn qbox(dim: usize) -> impl Strategy<Value = IntBox> {
    (prop::collection::vec(-4i64..=4, dim), prop::collection::vec(0i64..=3, dim)).prop_map(|(lo, ext)| {
        let hi: Vec<i64> = lo.iter().zip(&ext).map(|(l, e)| l + e).collect();
        IntBox::from_corners(&lo, &hi).unwrap()
    })
}

fn region(dim: usize) -> impl Strategy<Value = QRegion> {
    prop::collection::vec(qbox(dim), 0..4).prop_map(move |boxes| QRegion::from_boxes(dim, boxes).unwrap())
}

fn pair(dim: usize) -> impl Strategy<Value = (QRegion, QRegion)> {
    (region(dim), region(dim))
}

fn points(r: &QRegion) -> BTreeSet<Qn> {
    r.enumerate_points().unwrap().into_iter().collect()
}

/// A random system with at least one feasible point, built around a random bitstring.
fn system(max_n: usize) -> impl Strategy<Value = ConstraintSystem> {
    (2..=max_n, 1usize..=2).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(prop::collection::vec(-3i64..=3, n), m),
            prop::collection::vec(0u8..=1, n),
            prop::collection::vec((0i64..=3, 0i64..=3), m),
        )
            .prop_map(|(rows, x0, slack)| {
                let v: Vec<i64> = rows.iter().map(|r| r.iter().zip(&x0).map(|(a, &x)| a * x as i64).sum()).collect();
                let lower = v.iter().zip(&slack).map(|(c, s)| c - s.0).collect();
                let upper = v.iter().zip(&slack).map(|(c, s)| c + s.1).collect();
                ConstraintSystem::new(rows, lower, upper).unwrap()
            })
    })
}

fn all_bits(n: usize) -> impl Iterator<Item = Bits> {
    (0..1u64 << n).map(move |k| bits_of(k, n))
}

fn prefix_sum(sys: &ConstraintSystem, x: &[u8], i: usize) -> Qn {
    let mut acc = Qn::zeros(sys.n_constraints());
    for (j, &b) in x[..i].iter().enumerate() {
        if b == 1 {
            acc = acc.checked_add(sys.column(j)).unwrap();
        }
    }
    acc
}

fn random_mps(sys: &ConstraintSystem, flux: usize, seed: u64) -> ConstrainedMPS {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ConstrainedMPS::random(sys, flux, 2, &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn intersect_and_symdiff_partition_the_union((a, b) in pair(2)) {
        let common = points(&a.intersect(&b).unwrap());
        let (only_a, only_b) = a.symdiff(&b).unwrap();
        let (pa, pb) = (points(&only_a), points(&only_b));
        prop_assert!(common.is_disjoint(&pa) && common.is_disjoint(&pb) && pa.is_disjoint(&pb));
        let mut all = common.clone();
        all.extend(pa);
        all.extend(pb);
        let union: BTreeSet<Qn> = points(&a).union(&points(&b)).cloned().collect();
        prop_assert_eq!(all, union);
    }

    #[test]
    fn subset_matches_point_sets((a, b) in pair(2)) {
        prop_assert_eq!(a.is_subset(&b).unwrap(), points(&a).is_subset(&points(&b)));
    }

    #[test]
    fn minkowski_sum_matches_points((a, b) in pair(2)) {
        let mut expected = BTreeSet::new();
        for p in points(&a) {
            for q in points(&b) {
                expected.insert(p.checked_add(&q).unwrap());
            }
        }
        prop_assert_eq!(points(&a.add(&b).unwrap()), expected);
    }

    #[test]
    fn operations_are_normalized((a, b) in pair(2)) {
        for r in [a.intersect(&b).unwrap(), a.union(&b).unwrap(), a.difference(&b).unwrap(), a.add(&b).unwrap()] {
            let again = QRegion::normalize(r.dim(), r.boxes().to_vec());
            prop_assert_eq!(&again, &r);
        }
    }

    #[test]
    fn intersect_and_add_commute_and_associate((a, b) in pair(1), c in region(1)) {
        prop_assert_eq!(points(&a.intersect(&b).unwrap()), points(&b.intersect(&a).unwrap()));
        prop_assert_eq!(points(&a.add(&b).unwrap()), points(&b.add(&a).unwrap()));
        let left = a.intersect(&b).unwrap().intersect(&c).unwrap();
        let right = a.intersect(&b.intersect(&c).unwrap()).unwrap();
        prop_assert_eq!(points(&left), points(&right));
        let left = a.add(&b).unwrap().add(&c).unwrap();
        let right = a.add(&b.add(&c).unwrap()).unwrap();
        prop_assert_eq!(points(&left), points(&right));
    }

    #[test]
    fn display_parses_back(a in region(2)) {
        prop_assert_eq!(QRegion::parse(&a.to_string(), 2).unwrap(), a);
    }

    #[test]
    fn shift_moves_every_point(a in region(2), dx in -5i64..=5, dy in -5i64..=5) {
        let v = Qn::new(vec![dx, dy]).unwrap();
        let expected: BTreeSet<Qn> = points(&a).iter().map(|p| p.checked_add(&v).unwrap()).collect();
        prop_assert_eq!(points(&a.shift(&v).unwrap()), expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn index_walk_decides_feasibility(sys in system(8)) {
        let left = constraints_to_indices(&sys).unwrap();
        let n = sys.n_vars();
        let flux = QRegion::from_box(sys.flux_box());
        for x in all_bits(n) {
            let walk = (1..=n).all(|i| left[i - 1].find_point(&prefix_sum(&sys, &x, i)).is_some());
            let inside = flux.contains_point(&prefix_sum(&sys, &x, n)).unwrap();
            prop_assert_eq!(walk && inside, sys.is_feasible(&x));
        }
    }

    #[test]
    fn link_regions_are_bounded_and_disjoint(sys in system(8)) {
        let left = constraints_to_indices(&sys).unwrap();
        let bounds = boundary(&sys);
        for (i, link) in left.iter().enumerate() {
            let cap = QRegion::from_box(bounds.get(i + 1).clone());
            for (k, r) in link.regions().iter().enumerate() {
                prop_assert!(r.is_subset(&cap).unwrap());
                for s in &link.regions()[k + 1..] {
                    prop_assert!(r.intersect(s).unwrap().is_empty());
                }
            }
        }
    }

    #[test]
    fn validation_only_removes_regions(sys in system(8)) {
        let candidates = backward_sweep(&sys).unwrap();
        let validated = constraints_to_indices(&sys).unwrap();
        for (v, c) in validated.iter().zip(&candidates) {
            for r in v.regions() {
                prop_assert!(c.regions().contains(r));
            }
        }
    }

    #[test]
    fn complexity_is_reversal_invariant(sys in system(10)) {
        prop_assert_eq!(charge_complexity(&sys).unwrap(), charge_complexity(&sys.reversed()).unwrap());
    }

    #[test]
    fn count_matches_enumeration(sys in system(10), pick in 0usize..10) {
        let flux = pick % sys.n_vars();
        let mps = constraints_to_mps(&sys, flux).unwrap();
        prop_assert_eq!(mps.count_solutions(), brute_force_count(&sys).unwrap() as f64);
    }

    #[test]
    fn support_is_the_feasible_set(sys in system(8), seed in any::<u64>(), pick in 0usize..8) {
        let mps = random_mps(&sys, pick % sys.n_vars(), seed);
        for x in all_bits(sys.n_vars()) {
            if mps.evaluate(&x).unwrap() != 0.0 {
                prop_assert!(sys.is_feasible(&x));
            }
        }
    }

    #[test]
    fn exact_moves_preserve_amplitudes(sys in system(8), seed in any::<u64>(), to in 0usize..9) {
        let mut mps = random_mps(&sys, 0, seed);
        let before = mps.dense_amplitudes().unwrap();
        mps.canonicalize(to % (sys.n_vars() + 1), Truncation::exact()).unwrap();
        let scale = before.iter().map(|(_, a)| a.abs()).fold(1.0, f64::max);
        for (x, a) in &before {
            prop_assert!((mps.evaluate(x).unwrap() - a).abs() <= 1e-10 * scale);
        }
        prop_assert!(mps.isometry_residual() <= 1e-12);
        mps.move_to_site(sys.n_vars() - 1, Truncation::exact()).unwrap();
        prop_assert!(matches!(mps.center(), Center::Site(_)));
        for (x, a) in &before {
            prop_assert!((mps.evaluate(x).unwrap() - a).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn samples_are_feasible(sys in system(10), seed in any::<u64>()) {
        let mut mps = random_mps(&sys, sys.n_vars() - 1, seed);
        mps.canonicalize(0, Truncation::exact()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for x in mps.sample(50, &mut rng).unwrap() {
            prop_assert!(sys.is_feasible(&x));
        }
    }
}

/// Row groups sharing one column count.
fn groups() -> impl Strategy<Value = Vec<DMatrix<f64>>> {
    (1usize..=4).prop_flat_map(|c| {
        prop::collection::vec(
            (1usize..=4).prop_flat_map(move |r| {
                prop::collection::vec(-1.0f64..1.0, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
            }),
            1..=3,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discarded_weight_is_reconstruction_error(gs in groups(), max_dim in 1usize..=6) {
        let svd = joint_block_svd(&gs, Truncation::new(0.0, max_dim).unwrap()).unwrap();
        let err: f64 = gs
            .iter()
            .zip(svd.u.iter().zip(&svd.f))
            .map(|(g, (u, f))| (g - u * f).norm_squared())
            .sum();
        prop_assert!((err - svd.discarded_weight).abs() <= 1e-10);
        prop_assert!(svd.kept().iter().sum::<usize>() <= max_dim);
    }

    #[test]
    fn boltzmann_weights_are_normalized(costs in prop::collection::vec(-50.0f64..50.0, 1..20), temp in 0.1f64..100.0) {
        let mut dict = SampleDictionary::new();
        for (k, c) in costs.iter().enumerate() {
            dict.cost_of(&bits_of(k as u64, 5), &mut |_: &[u8]| Ok::<f64, String>(*c)).unwrap();
        }
        let w = boltzmann_weights(&dict, temp);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|&p| p >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn optimizer_invariants(seed in any::<u64>(), instance in 0u64..100) {
        let inst = gen_qkp(8, instance).unwrap();
        let sys = inst.system();
        let cfg = OptimizerConfig { t_max: 6, n_samples: 30, replace_count: 5, seed, ..OptimizerConfig::paper_defaults(8) };
        let mut calls = BTreeSet::new();
        let mut repeated = false;
        let out = solve(|x| { repeated |= !calls.insert(x.to_vec()); inst.cost(x) as f64 }, &sys, &cfg).unwrap();
        prop_assert!(!repeated);
        prop_assert_eq!(calls.len(), out.dictionary.len());
        for (x, _) in out.dictionary.iter() {
            prop_assert!(sys.is_feasible(x));
        }
        let records = &out.history.records;
        prop_assert_eq!(records.len(), cfg.t_max);
        for w in records.windows(2) {
            prop_assert!(w[1].c_cum_min <= w[0].c_cum_min);
        }
        prop_assert!(!records[0].reset);
        for w in records.windows(3) {
            prop_assert_eq!(w[2].reset, w[1].c_min >= w[0].c_min);
        }
        for r in records {
            prop_assert_eq!(r.temperature, anneal_temperature(out.t_init, r.t));
            prop_assert_eq!(r.temperature, out.t_init / r.t as f64);
        }
        prop_assert_eq!(out.best_cost, out.dictionary.best().unwrap().1);
        let again = solve(|x| inst.cost(x) as f64, &sys, &cfg).unwrap();
        prop_assert_eq!(again.best_x, out.best_x);
        prop_assert_eq!(again.history.to_csv(), out.history.to_csv());
    }

    #[test]
    fn symmetrized_costs_share_the_argmin(instance in 0u64..1000) {
        let inst = gen_qkp(10, instance).unwrap();
        let sys = inst.system();
        let q = &inst.q;
        let n = inst.n();
        let doubled = |x: &[u8]| -> f64 {
            let mut c = 0i64;
            for i in 0..n {
                for j in 0..n {
                    c += (q[i][j] + q[j][i]) * (x[i] * x[j]) as i64;
                }
            }
            c as f64
        };
        let (_, best) = brute_force_solve(&sys, |x| inst.cost(x) as f64).unwrap();
        let (x2, best2) = brute_force_solve(&sys, doubled).unwrap();
        prop_assert_eq!(best2, 2.0 * best);
        prop_assert_eq!(inst.cost(&x2) as f64, best);
    }
}
