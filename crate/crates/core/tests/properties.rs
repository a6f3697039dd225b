mod common;

use proptest::prelude::*;
use rigidframes::dataset_io::{decode_model, encode_model};
use rigidframes::lattice::{centered_add, centered_sub, rotate_index, CenteredIndex, GridParams, Lattice};
use rigidframes::linalg::{columns_to_matrix, principal_angles, CVector};
use rigidframes::projector::Projector;
use rigidframes::solver::{assign_generator_components, fit, solve_reduced, FitOptions, ReducedProblem};
use rigidframes::transform::{act, GroupTransform, Image, SpectralStack, C64};

fn grids() -> impl Strategy<Value = GridParams> {
    (prop::sample::select(vec![3usize, 5, 7]), prop::sample::select(vec![1usize, 3, 5]))
        .prop_map(|(p, q)| GridParams::new(p, q).unwrap())
}

fn image_on(grid: GridParams) -> impl Strategy<Value = Image> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), grid.len())
        .prop_map(move |v| Image::from_values(grid, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap())
}

fn grid_and_image() -> impl Strategy<Value = (GridParams, Image)> {
    grids().prop_flat_map(|g| (Just(g), image_on(g)))
}

fn index_on(grid: GridParams) -> impl Strategy<Value = CenteredIndex> {
    let h = grid.half();
    (-h..=h, -h..=h).prop_map(|(a, b)| CenteredIndex::new(a, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn periodic_sum_is_a_group(
        (g, a, b, c) in grids().prop_flat_map(|g| (Just(g), index_on(g), index_on(g), index_on(g)))
    ) {
        let ab = centered_add(a, b, &g).unwrap();
        prop_assert_eq!(ab, centered_add(b, a, &g).unwrap());
        prop_assert_eq!(
            centered_add(ab, c, &g).unwrap(),
            centered_add(a, centered_add(b, c, &g).unwrap(), &g).unwrap()
        );
        prop_assert_eq!(centered_sub(ab, b, &g).unwrap(), a);
        prop_assert!(g.contains(rotate_index(a, 1)));
    }

    #[test]
    fn decomposition_recomposes((g, k) in grids().prop_flat_map(|g| (Just(g), index_on(g)))) {
        let lat = Lattice::new(g);
        let dec = lat.decompose_frequency(k).unwrap();
        let back = centered_add(rotate_index(dec.omega0, dec.g as i64), dec.ell, &g).unwrap();
        prop_assert_eq!(back, k);
        if dec.omega0.is_zero() {
            prop_assert_eq!(dec.g, 0);
        }
    }

    #[test]
    fn transform_is_an_isometry_with_left_inverse((g, f) in grid_and_image()) {
        let t = GroupTransform::new(g).unwrap();
        let st = t.analyze(&f).unwrap();
        let n2 = f.norm_sqr();
        prop_assert!((st.norm_sqr() - n2).abs() <= 1e-10 * n2.max(1e-300));
        prop_assert!(t.synthesize(&st).unwrap().relative_error(&f) <= 1e-10);
    }

    #[test]
    fn analyze_synthesize_is_an_orthogonal_projection(
        (g, vals) in grids().prop_flat_map(|g| {
            let n = (Lattice::new(g).omega_slots()) * 4 * g.q() * g.q();
            (Just(g), prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n))
        })
    ) {
        let t = GroupTransform::new(g).unwrap();
        let mut st = SpectralStack::zeros(t.lattice());
        for (dst, (a, b)) in st.values_mut().iter_mut().zip(vals) {
            *dst = C64::new(a, b);
        }
        let once = t.analyze(&t.synthesize(&st).unwrap()).unwrap();
        let twice = t.analyze(&t.synthesize(&once).unwrap()).unwrap();
        prop_assert!(twice.sub(&once).norm_sqr().sqrt() <= 1e-10 * once.norm_sqr().sqrt());
        prop_assert!(once.norm_sqr() <= st.norm_sqr() * (1.0 + 1e-12));
        // residual orthogonal to the range
        let resid = st.sub(&once);
        let inner: C64 = resid.values().iter().zip(once.values()).map(|(a, b)| a * b.conj()).sum();
        prop_assert!(inner.norm() <= 1e-10 * st.norm_sqr());
    }

    #[test]
    fn projection_properties(
        (g, gens, f, li, rot) in (prop::sample::select(vec![3usize, 5]), prop::sample::select(vec![3usize, 5]), 1usize..3)
            .prop_flat_map(|(p, q, kappa)| {
                let g = GridParams::new(p, q).unwrap();
                (Just(g), prop::collection::vec(image_on(g), kappa), image_on(g), 0..p * p, 0i64..4)
            })
    ) {
        let pr = Projector::from_generators(g, &gens).unwrap();
        prop_assert!(pr.dimension() <= 4 * gens.len() * g.p() * g.p());
        let pf = pr.project(&f).unwrap();
        prop_assert!(pr.project(&pf).unwrap().relative_error(&pf) <= 1e-8);
        let lhs = f.norm_sqr();
        let rhs = pf.norm_sqr() + f.sub(&pf).norm_sqr();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs);
        let lambda = Lattice::new(g).lattice()[li];
        let moved = pr.project(&act(&f, lambda, rot).unwrap()).unwrap();
        prop_assert!(moved.relative_error(&act(&pf, lambda, rot).unwrap()) <= 1e-8);
        for phi in &gens {
            prop_assert!(pr.project(phi).unwrap().relative_error(phi) <= 1e-8);
        }
    }

    #[test]
    fn fitted_frames_are_parseval(seed in 0u64..1000, kappa in 1usize..4) {
        let g = GridParams::new(3, 5).unwrap();
        let mut rng = common::rng(seed);
        let data: Vec<Image> = (0..6).map(|_| common::smooth_real(g, &mut rng)).collect();
        let model = fit(&data, kappa, &FitOptions::default()).unwrap();
        let pr = Projector::new(&model).unwrap();
        let f = common::random_complex(g, &mut rng);
        let c = pr.frame_coefficients(&f).unwrap();
        let pf = pr.project(&f).unwrap();
        prop_assert!((c.norm_sqr() - pf.norm_sqr()).abs() <= 1e-8 * pf.norm_sqr());
        prop_assert!(pr.reconstruct(&c).unwrap().relative_error(&pf) <= 1e-8);
        let st = &model.fit_stats;
        prop_assert!((st.discarded_energy() - st.image_residual).abs() <= 1e-6 * st.image_residual.max(1e-12));
    }

    #[test]
    fn model_files_round_trip(seed in 0u64..1000) {
        let g = GridParams::new(3, 3).unwrap();
        let mut rng = common::rng(seed);
        let data: Vec<Image> = (0..3).map(|_| common::random_real(g, &mut rng)).collect();
        let model = fit(&data, 2, &FitOptions::default()).unwrap();
        let bytes = encode_model(&model);
        prop_assert_eq!(decode_model(&bytes).unwrap(), model);
    }
}

// Swapping columns inside a degenerate block changes the generators but not
// the fiber subspace they realize.
#[test]
fn degenerate_block_order_does_not_change_the_subspace() {
    let g = GridParams::new(3, 5).unwrap();
    let t = GroupTransform::new(g).unwrap();
    let lat = t.lattice();
    let mut rng = common::rng(77);
    // four orthonormal directions with equal weight, then a weaker tail
    let raw: Vec<CVector> = (0..10)
        .map(|_| {
            let img = common::random_complex(GridParams::new(5, 1).unwrap(), &mut rng);
            CVector::from_column_slice(img.values())
        })
        .collect();
    let q = rigidframes::linalg::orthonormalize(&raw, 1e-10);
    let weights = [3.0, 3.0, 3.0, 3.0, 2.0, 1.5, 1.0, 0.5];
    let cols: Vec<CVector> = q.iter().zip(weights).map(|(v, w)| v * C64::new(w, 0.0)).collect();
    let x = columns_to_matrix(&cols, 25);
    let stacks: Vec<SpectralStack> = (0..2)
        .map(|i| {
            let mut st = SpectralStack::zeros(lat);
            for gg in 0..4 {
                st.fiber_mut(1, gg).copy_from_slice(x.column(4 * i + gg).into_owned().as_slice());
            }
            st
        })
        .collect();
    let problem = ReducedProblem::from_stacks(lat, &stacks, lat.omega_at(1)).unwrap();
    let basis = solve_reduced(&problem, lat, 1).unwrap();
    let comps = assign_generator_components(&basis, 1).unwrap();
    let build = |order: [usize; 4]| {
        let mut st = SpectralStack::zeros(lat);
        for (g_slot, &src) in order.iter().enumerate() {
            st.fiber_mut(1, g_slot).copy_from_slice(comps[0][src].as_slice());
        }
        t.synthesize(&st).unwrap()
    };
    let a = build([0, 1, 2, 3]);
    let b = build([1, 0, 3, 2]);
    assert!(a.relative_error(&b) > 1e-3);
    let (pa, pb) = (
        Projector::from_generators(g, &[a]).unwrap(),
        Projector::from_generators(g, &[b]).unwrap(),
    );
    let ang = principal_angles(pa.basis(1), pb.basis(1));
    assert_eq!(pa.basis(1).ncols(), 4);
    assert!(ang[0] < 1e-10);
}
