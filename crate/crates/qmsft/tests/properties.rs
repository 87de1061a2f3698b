use proptest::prelude::*;

use qmsft::inequalities::{
    abs2, dirichlet_comparison, entropy_domination_slack, lp_relative_entropy, phi,
    quantum_relative_entropy, spectral_gap, variance,
};
use qmsft::linalg::{self, c, eigh, hermitize, identity, CMat};
use qmsft::models::{depolarizing_generator, n_decoherent_generator, wcd_generator};
use qmsft::norms::{amalgamated_norm, gamma, weighted_norm, NormQuery, Variant};
use qmsft::qms::{
    build_generator, check_detailed_balance, evolve, BalanceKind, GeneratorPair, Lindbladian,
    Picture,
};
use qmsft::random::{self, Rng};
use qmsft::structure::{analyze, BlockStructure, ConditionalExpectation};

const LAYOUTS: &[&[(usize, usize)]] = &[
    &[(1, 1), (1, 1), (1, 1)],
    &[(2, 2)],
    &[(1, 2), (2, 1)],
    &[(1, 1), (2, 1)],
    &[(2, 1), (1, 2)],
    &[(1, 1), (1, 2)],
];

fn random_ce(seed: u64) -> ConditionalExpectation {
    let mut rng = random::rng(seed);
    let layout = LAYOUTS[(seed % LAYOUTS.len() as u64) as usize];
    let d: usize = layout.iter().map(|(h, k)| h * k).sum();
    let u = random::unitary(d, &mut rng);
    let dims: Vec<(usize, usize, CMat)> = layout
        .iter()
        .map(|&(h, k)| {
            let tau = random::positive_definite(k, 0.1, &mut rng);
            let t = linalg::trace_re(&tau);
            (h, k, tau / c(t))
        })
        .collect();
    ConditionalExpectation::from_structure(BlockStructure::new(u, &dims).unwrap())
}

fn random_lindbladian(d: usize, rng: &mut Rng) -> GeneratorPair {
    let h = random::hermitian(d, rng);
    let ops = vec![random::ginibre(d, rng), random::ginibre(d, rng) * c(0.5)];
    build_generator(&Lindbladian::new(h, ops).unwrap()).unwrap()
}

fn rel(a: &CMat, b: &CMat) -> f64 {
    linalg::fro_norm(&(a - b)) / linalg::fro_norm(b).max(1e-300)
}

fn norm(x: &CMat, q: f64, p: f64, ce: &ConditionalExpectation) -> f64 {
    amalgamated_norm(&NormQuery::new(x, q, p, ce)).unwrap().value
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn eigen_reconstruction(seed in any::<u64>(), d in 1usize..7) {
        let h = random::hermitian(d, &mut random::rng(seed));
        let back = eigh(&h).reconstruct_with(|v| v);
        prop_assert!(rel(&back, &h) < 1e-10);
        let f = linalg::matrix_function(&h, |v| v).unwrap();
        prop_assert!(rel(&f, &h) < 1e-12);
    }

    #[test]
    fn schatten_triangle_and_holder(seed in any::<u64>(), d in 2usize..5, p in 1.1f64..6.0) {
        let mut rng = random::rng(seed);
        let a = random::ginibre(d, &mut rng);
        let b = random::ginibre(d, &mut rng);
        let q = p / (p - 1.0);
        let na = linalg::schatten_norm(&a, p).unwrap();
        let nb = linalg::schatten_norm(&b, p).unwrap();
        prop_assert!(linalg::schatten_norm(&(&a + &b), p).unwrap() <= (na + nb) * (1.0 + 1e-10));
        let pair = linalg::hs_inner(&a, &b).norm();
        prop_assert!(pair <= na * linalg::schatten_norm(&b, q).unwrap() * (1.0 + 1e-10));
    }

    #[test]
    fn semigroup_duality_and_cp(seed in any::<u64>(), t in 0.01f64..1.5, s in 0.01f64..1.5) {
        let mut rng = random::rng(seed);
        let gen = random_lindbladian(3, &mut rng);
        let x = random::ginibre(3, &mut rng);
        let rho = random::density(3, &mut rng);
        let ts = evolve(&gen, t + s, &x, Picture::Heisenberg).unwrap();
        let two = evolve(&gen, t, &evolve(&gen, s, &x, Picture::Heisenberg).unwrap(), Picture::Heisenberg).unwrap();
        prop_assert!(rel(&two, &ts) < 1e-9);
        let lhs = linalg::hs_inner(&evolve(&gen, t, &x, Picture::Heisenberg).unwrap(), &rho);
        let rhs = linalg::hs_inner(&x, &evolve(&gen, t, &rho, Picture::Schrodinger).unwrap());
        prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
        let prop = gen.propagator(t);
        prop_assert!(eigh(&hermitize(&prop.choi())).min() > -1e-9);
        prop_assert!(rel(&prop.apply(&identity(3)), &identity(3)) < 1e-10);
    }

    #[test]
    fn gns_balance_commutes_with_modular_operator(seed in any::<u64>()) {
        let ce = random_ce(seed);
        let sigma = ce.sigma_tr.clone();
        let gen = n_decoherent_generator(&ce);
        prop_assert!(check_detailed_balance(&gen, &sigma, BalanceKind::Gns, seed).unwrap().holds);
        let si = ce.sigma_power(-1.0);
        let x = random::ginibre(ce.dim(), &mut random::rng(seed ^ 1));
        let lhs = gen.apply(&(&sigma * &x * &si));
        let rhs = &sigma * gen.apply(&x) * &si;
        prop_assert!(rel(&lhs, &rhs) < 1e-9);
        // E_N also commutes with the modular operator.
        let lhs = ce.apply(&(&sigma * &x * &si));
        let rhs = &sigma * ce.apply(&x) * &si;
        prop_assert!(rel(&lhs, &rhs) < 1e-9);
    }

    #[test]
    fn conditional_expectation_identities(seed in any::<u64>()) {
        let ce = random_ce(seed);
        let d = ce.dim();
        let mut rng = random::rng(seed ^ 2);
        let x = random::hermitian(d, &mut rng);
        let y = random::ginibre(d, &mut rng);
        let a = ce.apply(&random::ginibre(d, &mut rng));
        let s = &ce.sigma_tr;
        let tr = |m: &CMat| m.trace();
        prop_assert!((tr(&(s * &a * &y)) - tr(&(s * &y * &a))).norm() < 1e-10 * (1.0 + linalg::fro_norm(&a) * linalg::fro_norm(&y)));
        let ex = ce.apply(&x);
        let n2 = |m: &CMat| weighted_norm(&hermitize(m), 2.0, s).unwrap().powi(2);
        let total = linalg::hs_inner(&x, &gamma(&ce, &x, 1.0)).re;
        prop_assert!((total - (n2(&(&x - &ex)) + n2(&ex))).abs() < 1e-10 * (1.0 + total));
        prop_assert!((variance(&x, &ce) - n2(&(&x - &ex))).abs() < 1e-10 * (1.0 + total));
    }

    #[test]
    fn entropy_ladder_and_homogeneity(seed in any::<u64>(), t in 0.1f64..5.0) {
        let ce = random_ce(seed);
        let rho = random::density(ce.dim(), &mut random::rng(seed ^ 3));
        let div = quantum_relative_entropy(&rho, &ce.apply_predual(&rho)).unwrap();
        for q in [1.0, 2.0, 3.0] {
            let root = eigh(&rho).reconstruct_with(|v| v.max(0.0).powf(1.0 / q));
            let x = hermitize(&gamma(&ce, &root, -1.0 / q));
            let ent = lp_relative_entropy(&x, q, &ce).unwrap();
            prop_assert!((ent - div / q).abs() < 1e-8, "q={}: {} vs {}", q, ent, div / q);
        }
        let x = random::positive_definite(ce.dim(), 0.05, &mut random::rng(seed ^ 4));
        for q in [2.0, 1.5, 3.0] {
            let e1 = lp_relative_entropy(&x, q, &ce).unwrap();
            let et = lp_relative_entropy(&(&x * c(t)), q, &ce).unwrap();
            prop_assert!((et - t.powf(q) * e1).abs() < 1e-9 * (1.0 + et.abs()));
        }
    }

    #[test]
    fn entropy_domination(seed in any::<u64>()) {
        let ce = random_ce(seed);
        let x = random::positive_definite(ce.dim(), 0.01, &mut random::rng(seed ^ 5));
        prop_assert!(entropy_domination_slack(&x, &ce).unwrap() >= -1e-8);
        let r = hermitize(&(&x - ce.apply(&x)));
        prop_assert!(eigh(&abs2(&r, &ce)).min() > -1e-10);
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn norm_ordering_and_hierarchy(seed in any::<u64>(), q in 1.1f64..3.0, gap in 0.2f64..3.0) {
        let ce = random_ce(seed);
        let x = random::positive_definite(ce.dim(), 0.02, &mut random::rng(seed ^ 6));
        let p = q + gap;
        let s = &ce.sigma_tr;
        let mid = norm(&x, q, p, &ce);
        let lo = weighted_norm(&x, q, s).unwrap();
        let hi = weighted_norm(&x, p, s).unwrap();
        prop_assert!(lo <= mid * (1.0 + 1e-9) && mid <= hi * (1.0 + 1e-9), "{} {} {}", lo, mid, hi);
        prop_assert!(norm(&x, q, p + 0.5, &ce) >= mid * (1.0 - 1e-9));
        prop_assert!(norm(&x, q + 0.1, p, &ce) >= mid * (1.0 - 1e-9));
        let sup = norm(&x, p, q, &ce);
        prop_assert!(weighted_norm(&x, q, s).unwrap() <= sup * (1.0 + 1e-9));
        prop_assert!(sup <= weighted_norm(&x, p, s).unwrap() * (1.0 + 1e-9));
    }

    #[test]
    fn holder_for_conjugate_pairs(seed in any::<u64>(), q in 1.3f64..3.0, p in 1.3f64..3.0) {
        let ce = random_ce(seed);
        let mut rng = random::rng(seed ^ 7);
        let x = random::positive_definite(ce.dim(), 0.02, &mut rng);
        let y = random::positive_definite(ce.dim(), 0.02, &mut rng);
        let (qc, pc) = (q / (q - 1.0), p / (p - 1.0));
        let half = ce.sigma_power(0.5);
        let pair = linalg::hs_inner(&(&half * &x * &half), &y).re;
        let bound = norm(&x, q, p, &ce) * norm(&y, qc, pc, &ce);
        prop_assert!(pair <= bound * (1.0 + 1e-8), "{} > {}", pair, bound);
    }

    #[test]
    fn contractive_under_the_semigroup(seed in any::<u64>(), t in 0.05f64..2.0) {
        let ce = random_ce(seed);
        let gen = n_decoherent_generator(&ce);
        let x = random::positive_definite(ce.dim(), 0.02, &mut random::rng(seed ^ 8));
        let y = hermitize(&gen.flow(t, &x, Picture::Heisenberg));
        for (q, p) in [(2.0, 4.0), (1.5, 2.5), (3.0, 2.0)] {
            prop_assert!(norm(&y, q, p, &ce) <= norm(&x, q, p, &ce) * (1.0 + 1e-8));
        }
    }

    #[test]
    fn triple_bar_dominates(seed in any::<u64>(), q in 1.2f64..2.5, gap in 0.3f64..2.0) {
        let ce = random_ce(seed);
        let x = random::positive_definite(ce.dim(), 0.02, &mut random::rng(seed ^ 9));
        let p = q + gap;
        let exact = norm(&x, q, p, &ce);
        let tb = amalgamated_norm(&NormQuery::new(&x, q, p, &ce).with_variant(Variant::TripleBar))
            .unwrap()
            .value;
        prop_assert!(tb >= exact * (1.0 - 1e-8));
        if ce.n_blocks() == 1 {
            prop_assert!((tb - exact).abs() < 1e-8 * exact);
        }
    }

    #[test]
    fn gibbs_gap_identity(seed in any::<u64>(), q in 1.2f64..3.0) {
        let ce = random_ce(seed);
        let mut rng = random::rng(seed ^ 10);
        let y = random::positive_definite(ce.dim(), 0.02, &mut rng);
        let w = eigh(&hermitize(&gamma(&ce, &y, 1.0 / q))).reconstruct_with(|v| v.max(0.0).powf(q));
        let yq = linalg::trace_re(&w);
        let y_n = hermitize(&(ce.apply(&hermitize(&gamma(&ce, &w, -1.0))) / c(yq)));
        let a = ce.random_density_in_n(&mut rng);
        let lhs = linalg::hs_inner(&w, &(linalg::log_pd(&y_n).unwrap() - linalg::log_pd(&a).unwrap())).re;
        let rhs = yq * quantum_relative_entropy(&hermitize(&gamma(&ce, &y_n, 1.0)), &hermitize(&gamma(&ce, &a, 1.0))).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn dressing_objective_is_convex(seed in any::<u64>(), p in 2.0f64..4.0) {
        let ce = random_ce(seed);
        let mut rng = random::rng(seed ^ 11);
        let x = random::positive_definite(ce.dim(), 0.02, &mut rng);
        let z = hermitize(&gamma(&ce, &x, 1.0 / p));
        let a0 = ce.random_density_in_n(&mut rng);
        let a1 = ce.random_density_in_n(&mut rng);
        let f = |a: &CMat| phi(&z, a, p).powf(p);
        let mid = hermitize(&((&a0 + &a1) * c(0.5)));
        prop_assert!(f(&mid) <= 0.5 * (f(&a0) + f(&a1)) * (1.0 + 1e-10));
    }

    #[test]
    fn dirichlet_comparison_with_decoherent_generator(seed in any::<u64>()) {
        let mut rng = random::rng(seed);
        let gen = build_generator(&wcd_generator(2).unwrap()).unwrap();
        let ce = analyze(&gen).unwrap();
        let gap = spectral_gap(&gen, &ce).unwrap();
        let x = random::hermitian(4, &mut rng);
        let (lo, e, hi) = dirichlet_comparison(&x, &gen, &ce, &gap).unwrap();
        prop_assert!(lo <= e * (1.0 + 1e-10) + 1e-12 && e <= hi * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn decoherence_at_long_times(seed in any::<u64>()) {
        let ce = random_ce(seed);
        let gen = n_decoherent_generator(&ce);
        let lambda = spectral_gap(&gen, &ce).unwrap().gap;
        let x = random::ginibre(ce.dim(), &mut random::rng(seed ^ 12));
        let off = &x - ce.apply(&x);
        let y = gen.flow(40.0 / lambda, &off, Picture::Heisenberg);
        prop_assert!(linalg::singular_values(&y)[0] < 1e-10 * linalg::singular_values(&x)[0]);
    }
}

#[test]
fn builtins_are_unital_and_completely_positive() {
    let mut gens = vec![depolarizing_generator(&linalg::diag(&[0.75, 0.25])).unwrap()];
    for n in 1..=3 {
        gens.push(build_generator(&wcd_generator(n).unwrap()).unwrap());
    }
    gens.push(n_decoherent_generator(&random_ce(3)));
    for g in &gens {
        let d = g.dim();
        for t in [0.1, 1.0] {
            let p = g.propagator(t);
            assert!(eigh(&hermitize(&p.choi())).min() > -1e-9);
            assert!(rel(&p.apply(&identity(d)), &identity(d)) < 1e-10);
        }
    }
}

#[test]
fn wcd_blocks_are_binomial() {
    for n in 2..=4usize {
        let gen = build_generator(&wcd_generator(n).unwrap()).unwrap();
        let ce = analyze(&gen).unwrap();
        let mut dims: Vec<usize> = ce.structure.dims().iter().map(|&(h, k)| h * k).collect();
        dims.sort_unstable();
        let mut want: Vec<usize> = (0..=n)
            .map(|k| (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1)))
            .collect();
        want.sort_unstable();
        assert_eq!(dims, want, "n={n}");
        assert!(ce.structure.dims().iter().all(|&(_, k)| k == 1));
    }
}
