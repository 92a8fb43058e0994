use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coiso_lab::catalog;
use coiso_lab::lemmas::{annihilator_instance, random_symplectic};
use coiso_lab::path::{gauge_step, solve_cell_flow, GaugeParameter};
use coiso_lab::poly::PolyScalarField;
use coiso_lab::runner::gauge_field;
use coiso_lab::scenario::{Scenario, ScenarioSpec};
use coiso_lab::symplin::{
    annihilator_lemma_check, orthogonal, quotient_form, FormSpace, LinSubspace,
};
use coiso_lab::tensor::{
    covariant_jacobi_residual, is_coisotropic_at, jacobiator, sharp_matrix, BivectorField, ConnectionField,
    LevelSetSubmanifold,
};

fn random_poly(m: usize, degree: u32, rng: &mut ChaCha8Rng) -> PolyScalarField {
    let mut p = PolyScalarField::zero(m);
    for _ in 0..4 {
        let mut exps = vec![0u32; m];
        let mut left = rng.random_range(0..=degree);
        while left > 0 {
            exps[rng.random_range(0..m)] += 1;
            left -= 1;
        }
        p = &p + &PolyScalarField::monomial(m, rng.random_range(-1.0..1.0), exps);
    }
    p
}

fn random_bivector(m: usize, rng: &mut ChaCha8Rng) -> BivectorField {
    let mut entries = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            entries.push((i, j, random_poly(m, 2, rng)));
        }
    }
    BivectorField::from_upper(m, entries).unwrap()
}

fn random_connection(m: usize, rng: &mut ChaCha8Rng) -> ConnectionField {
    let mut g = vec![PolyScalarField::zero(m); m * m * m];
    for i in 0..m {
        for j in 0..m {
            for k in j..m {
                let p = random_poly(m, 1, rng);
                g[(i * m + j) * m + k] = p.clone();
                g[(i * m + k) * m + j] = p;
            }
        }
    }
    ConnectionField::new(m, g).unwrap()
}

fn point(m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sharp_is_antisymmetric(m in 2usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = random_bivector(m, &mut rng);
        let s = sharp_matrix(&pi, &point(m, &mut rng)).unwrap();
        prop_assert_eq!((&s + s.transpose()).amax(), 0.0);
    }

    #[test]
    fn jacobiator_is_totally_antisymmetric(m in 2usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = random_bivector(m, &mut rng);
        let j = jacobiator(&pi, &point(m, &mut rng)).unwrap();
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    let v = j.get(a, b, c);
                    prop_assert!((v + j.get(b, a, c)).abs() <= 1e-12);
                    prop_assert!((v + j.get(a, c, b)).abs() <= 1e-12);
                    prop_assert!((v - j.get(b, c, a)).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn covariant_jacobiator_ignores_the_connection(m in 2usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = random_bivector(m, &mut rng);
        let conn = random_connection(m, &mut rng);
        let x = point(m, &mut rng);
        let plain = jacobiator(&pi, &x).unwrap().max_abs();
        let cov = covariant_jacobi_residual(&pi, &conn, &x).unwrap();
        prop_assert!((plain - cov).abs() <= 1e-10, "{} vs {}", plain, cov);
    }

    #[test]
    fn coisotropy_residual_ignores_constraint_scale(seed in any::<u64>(), c in prop_oneof![-50.0..-0.02f64, 0.02..50.0f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = random_bivector(3, &mut rng);
        // the plane through a random point with a random normal
        let x = point(3, &mut rng);
        let nrm = point(3, &mut rng);
        let offset: f64 = nrm.iter().zip(&x).map(|(a, b)| a * b).sum();
        let mut f = PolyScalarField::constant(3, -offset);
        for (i, a) in nrm.iter().enumerate() {
            f = &f + &PolyScalarField::coordinate(3, i).scale(*a);
        }
        let c1 = LevelSetSubmanifold::new(3, vec![f.clone()]).unwrap();
        let c2 = LevelSetSubmanifold::new(3, vec![f.scale(c)]).unwrap();
        let r1 = is_coisotropic_at(&pi, &c1, &x, 1e-8, 1e-9, 1e-10).unwrap().residual;
        let r2 = is_coisotropic_at(&pi, &c2, &x, 1e-8, 1e-9, 1e-10).unwrap().residual;
        prop_assert!((r1 - r2).abs() <= 1e-12 * r1.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn double_orthogonal_is_identity(k in 1usize..=4, d in 0usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_symplectic(k, &mut rng);
        let space = FormSpace::new(s.transpose() * FormSpace::standard(k).form() * &s, 1e-10).unwrap();
        let w = LinSubspace::span(&random_matrix(2 * k, d.min(2 * k), &mut rng), 1e-10);
        let ww = orthogonal(&space, &orthogonal(&space, &w));
        prop_assert!(ww.equals(&w, 1e-8));
    }

    #[test]
    fn orthogonal_dimension_counts_the_kernel(n in 2usize..=8, r in 0usize..=4, d in 0usize..=8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // rank-2r skew form
        let r = r.min(n / 2);
        let b = random_matrix(n, 2 * r, &mut rng);
        let j = FormSpace::standard(r);
        let form = &b * j.form() * b.transpose();
        let form = (&form - form.transpose()) * 0.5;
        let space = FormSpace::new(form, 1e-10).unwrap();
        let w = LinSubspace::span(&random_matrix(n, d.min(n), &mut rng), 1e-10);
        let meet = w.intersection(space.kernel(), 1e-10);
        prop_assert_eq!(w.dim() + orthogonal(&space, &w).dim(), n + meet.dim());
    }

    #[test]
    fn annihilator_identity_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = annihilator_instance(&mut rng);
        let r = annihilator_lemma_check(&inst.f_matrix(), &inst.t_subspace(1e-10), 1e-10).unwrap();
        prop_assert!(r.holds, "{:?}", r);
    }

    #[test]
    fn quotient_of_coisotropic_is_nondegenerate(k in 1usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = FormSpace::standard(k);
        // span of all e_i and the f_j with j >= a is coisotropic
        let a = rng.random_range(0..=k);
        let mut idx: Vec<usize> = (0..k).map(|i| 2 * i).collect();
        idx.extend((a..k).map(|j| 2 * j + 1));
        let s = random_symplectic(k, &mut rng);
        let c = LinSubspace::coordinate(2 * k, &idx).image(&s.clone().try_inverse().unwrap(), 1e-10);
        let moved = FormSpace::new(s.transpose() * space.form() * &s, 1e-10).unwrap();
        let q = quotient_form(&moved, &c, 1e-8).unwrap();
        prop_assert_eq!(q.dim(), 2 * (k - a));
        let f = q.form.form();
        prop_assert!((f + f.transpose()).amax() <= 1e-12);
        prop_assert!(q.form.is_nondegenerate());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn periodic_gauge_step_keeps_the_loop_closed(n in 4usize..=24, seed in any::<u64>(), eps in 1e-4..1e-1f64) {
        let s = catalog::builtin("circle-so3").unwrap();
        let pair = solve_cell_flow(&s.pi, s.x0(), &s.eta_cells(n), true, s.tol.closure).unwrap();
        let beta = GaugeParameter::periodic(gauge_field(3, n, seed));
        let moved = gauge_step(&pair, &s.pi, &s.conn, &beta, eps).unwrap();
        let gap: DVector<f64> = &moved.x[n] - &moved.x[0];
        prop_assert!(gap.amax() <= 1e-12);
    }

    #[test]
    fn scenario_round_trip(idx in 0usize..9, seed in any::<u64>()) {
        let name = catalog::names().nth(idx).unwrap();
        let mut s = catalog::builtin(name).unwrap();
        s.reseed(seed);
        let text = s.spec.to_json();
        let back = ScenarioSpec::from_json(&text).unwrap();
        prop_assert_eq!(&back, &s.spec);
        prop_assert_eq!(back.to_json(), text.clone());
        prop_assert!(Scenario::from_json(&text).is_ok());
    }
}
