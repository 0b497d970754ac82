use nalgebra::{DMatrix, DVector};
use promforge::fe::{build_assembly, AxialRestraint, FeAssembly, GeometryParams, SectionMaterial};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arch(rise: f64, skew: f64) -> FeAssembly {
    build_assembly(GeometryParams::new(rise, skew), 24, SectionMaterial::default(), AxialRestraint::EndsOnly).unwrap()
}

fn random_state(a: &FeAssembly, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(a.n_free(), |_, _| rng.gen_range(-1.0..1.0) * a.thickness())
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn force_is_a_cubic_polynomial_along_rays() {
    let a = arch(1.2, 0.1);
    let q = random_state(&a, 1);
    let amps: [f64; 4] = [-1.0, -0.5, 0.5, 1.0];
    let vander = DMatrix::from_fn(4, 4, |i, j| amps[i].powi(j as i32)).lu();
    let samples: Vec<DVector<f64>> = amps.iter().map(|&s| a.internal_force(&(&q * s)).unwrap()).collect();
    let probe: f64 = 0.75;
    let mut predicted = DVector::zeros(a.n_free());
    for k in 0..a.n_free() {
        let rhs = DVector::from_fn(4, |i, _| samples[i][k]);
        let c = vander.solve(&rhs).unwrap();
        predicted[k] = (0..4).map(|j| c[j] * probe.powi(j as i32)).sum::<f64>();
    }
    let exact = a.internal_force(&(&q * probe)).unwrap();
    assert!(rel(&predicted, &exact) < 1e-12, "{}", rel(&predicted, &exact));
}

#[test]
fn odd_part_minus_linear_term_is_cubic() {
    let a = arch(1.0, -0.15);
    let k1 = a.linear_stiffness();
    let q = random_state(&a, 2);
    let cubic = |s: f64| {
        let x = &q * s;
        (a.internal_force(&x).unwrap() - a.internal_force(&(-&x)).unwrap()) * 0.5 - &k1 * &x
    };
    let c1 = cubic(1.0);
    let c2 = cubic(2.0);
    assert!(rel(&(c2 / 8.0), &c1) < 1e-10);
    // even part is purely quadratic
    let even = |s: f64| (a.internal_force(&(&q * s)).unwrap() + a.internal_force(&(&q * -s)).unwrap()) * 0.5;
    assert!(rel(&(even(2.0) / 4.0), &even(1.0)) < 1e-10);
}

#[test]
fn tangent_is_second_order_consistent_with_force() {
    let a = arch(1.4, 0.2);
    let q = random_state(&a, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let v = DVector::from_fn(a.n_free(), |_, _| rng.gen_range(-1.0..1.0)).normalize();
    let kt = a.tangent_stiffness(&q).unwrap();
    let exact = &kt * &v;
    let err = |s: f64| {
        let h = s * a.thickness();
        let fd = (a.internal_force(&(&q + &v * h)).unwrap() - a.internal_force(&(&q - &v * h)).unwrap()) / (2.0 * h);
        rel(&fd, &exact)
    };
    let e: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&s| err(s)).collect();
    assert!(e[2] < 1e-6, "{e:?}");
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((50.0..200.0).contains(&ratio), "{e:?}");
    }
}

#[test]
fn topology_is_parameter_invariant() {
    let a = arch(1.0, 0.0);
    let b = arch(1.5, 0.2);
    assert_eq!(a.connectivity(), b.connectivity());
    assert_eq!(a.clamped_dofs(), b.clamped_dofs());
    assert_eq!(a.node_x(), b.node_x());
    assert_ne!(a.node_z0(), b.node_z0());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tangent_is_symmetric(rise in 0.0f64..2.0, skew in -0.3f64..0.3, seed in 0u64..1000, scale in 0.1f64..3.0) {
        let a = arch(rise, skew);
        let q = random_state(&a, seed) * scale;
        let kt = a.tangent_stiffness(&q).unwrap();
        prop_assert!((&kt - kt.transpose()).norm() < 1e-12 * kt.norm());
    }

    #[test]
    fn tangent_at_rest_is_linear_stiffness(rise in 0.0f64..2.0, skew in -0.3f64..0.3) {
        let a = arch(rise, skew);
        let k0 = a.tangent_stiffness(&DVector::zeros(a.n_free())).unwrap();
        prop_assert_eq!(k0, a.linear_stiffness());
    }
}
