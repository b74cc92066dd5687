use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use nngpiu::kernel::{composite_cov, KernelFamily, KernelSpec};

const FAMILIES: [KernelFamily; 5] = [
    KernelFamily::Base,
    KernelFamily::ArcCosine,
    KernelFamily::ArcSine,
    KernelFamily::Rbf,
    KernelFamily::MaternHalf,
];

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

fn any_spec(families: &'static [KernelFamily]) -> impl Strategy<Value = KernelSpec> {
    (
        prop::sample::select(families),
        0usize..=5,
        log_uniform(1e-3, 1e2),
        log_uniform(1e-3, 1e2),
        log_uniform(1e-2, 1e2),
        log_uniform(1e-3, 1e2),
        1usize..=4,
    )
        .prop_map(|(family, depth, sb, sw, ell, s2, d)| KernelSpec {
            family,
            depth,
            sigma_b_sq: sb,
            sigma_w_sq: sw,
            length_scale: ell,
            signal_var: s2,
            input_dim: d,
        })
}

fn point(d: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, d)
}

fn spec_and_pair() -> impl Strategy<Value = (KernelSpec, Vec<f64>, Vec<f64>)> {
    any_spec(&FAMILIES).prop_flat_map(|s| {
        let d = s.input_dim;
        (Just(s), point(d, 10.0), point(d, 10.0))
    })
}

fn composite_spec() -> impl Strategy<Value = KernelSpec> {
    any_spec(&[KernelFamily::ArcCosine, KernelFamily::ArcSine, KernelFamily::Base])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn symmetry((spec, x, y) in spec_and_pair()) {
        let a = spec.eval(&x, &y).unwrap();
        let b = spec.eval(&y, &x).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn gram_is_psd(spec in any_spec(&FAMILIES), n in 2usize..=30, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, spec.input_dim, |_, _| rng.random_range(-3.0..3.0));
        let g = spec.gram(&x).unwrap().values;
        let eig = SymmetricEigen::new(g).eigenvalues;
        let max = eig.max();
        let min = eig.min();
        prop_assert!(min >= -1e-8 * max.abs(), "min {min:e}, max {max:e}");
    }

    #[test]
    fn bias_floor(spec in composite_spec(), x in point(4, 10.0)) {
        let spec = KernelSpec { input_dim: 4, ..spec };
        for l in 0..=spec.depth {
            let layer = KernelSpec { depth: l, ..spec.clone() };
            let c = layer.eval_diag(&x).unwrap();
            prop_assert!(c >= spec.sigma_b_sq, "layer {l}: {c} < {}", spec.sigma_b_sq);
            let general = composite_cov(&x, &x, &layer).unwrap();
            prop_assert!(general >= spec.sigma_b_sq * (1.0 - 1e-12));
        }
    }

    #[test]
    fn diagonal_shortcut_matches_general_path(spec in composite_spec(), x in point(4, 10.0)) {
        let spec = KernelSpec { input_dim: 4, ..spec };
        let fast = spec.eval_diag(&x).unwrap();
        let slow = composite_cov(&x, &x, &spec).unwrap();
        prop_assert!((fast - slow).abs() <= 1e-12 * fast.abs().max(1.0), "{fast} vs {slow}");
    }

    #[test]
    fn clamp_safety(
        spec in composite_spec(),
        x in point(3, 1.0),
        log_scale in -12.0f64..6.0,
        factor in prop::sample::select(vec![1.0, -1.0, 1.0 + 1e-15, 1e-9, -1e9]),
    ) {
        // Collinear and (anti)parallel pairs at extreme norms push the
        // normalized covariance to the edge of [-1, 1].
        let spec = KernelSpec { input_dim: 3, ..spec };
        let s = 10f64.powf(log_scale);
        let a: Vec<f64> = x.iter().map(|v| v * s).collect();
        let b: Vec<f64> = a.iter().map(|v| v * factor).collect();
        for (p, q) in [(&a, &b), (&a, &a), (&b, &a)] {
            let v = spec.eval(p, q).unwrap();
            prop_assert!(v.is_finite(), "{v}");
        }
    }
}

#[test]
fn gram_matches_scalar_path() {
    let x = DMatrix::from_row_slice(4, 2, &[0.1, -0.3, 1.2, 0.7, -2.0, 0.4, 0.1, -0.3]);
    for family in FAMILIES {
        let spec = KernelSpec { family, depth: 3, input_dim: 2, ..KernelSpec::rbf(0.7, 1.3, 2) };
        let g = spec.gram(&x).unwrap().values;
        for i in 0..4 {
            for j in 0..4 {
                let xi: Vec<f64> = x.row(i).iter().copied().collect();
                let xj: Vec<f64> = x.row(j).iter().copied().collect();
                let s = spec.eval(&xi, &xj).unwrap();
                assert!((g[(i, j)] - s).abs() <= 1e-12 * s.abs().max(1.0), "{family:?} ({i},{j})");
            }
        }
        // rows 0 and 3 are the same point
        for j in 0..4 {
            assert!((g[(0, j)] - g[(3, j)]).abs() <= 1e-12 * g[(0, j)].abs().max(1.0));
        }
    }
}
