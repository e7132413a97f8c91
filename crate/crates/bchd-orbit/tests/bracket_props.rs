//! Property tests for the bracket calculus: antisymmetry, the Jacobi
//! identity, agreement with matrix-commutator oracles on linear fields, and
//! jet derivatives against finite differences.

use std::sync::Arc;

use proptest::prelude::*;

use bchd_orbit::lie::{
    eval_bracket_word, jacobian, lie_bracket, BracketWord, FieldHandle, FnField, Jet, LinearField,
};
use bchd_orbit::linalg::{vec_norm2, vec_sub, DMat};
use bchd_orbit::models::{build_cstr2, Cstr2Params};

/// Quadratic polynomial field on R^2 defined by its coefficient table.
#[allow(clippy::type_complexity)]
fn poly_field(coeffs: [[f64; 6]; 2]) -> FnField<f64, impl Fn(&[Jet<f64>]) -> Vec<Jet<f64>>> {
    FnField::new(2, move |x: &[Jet<f64>]| {
        (0..2)
            .map(|i| {
                let c = &coeffs[i];
                let lin = x[0].scale(c[1]) + x[1].scale(c[2]);
                let quad = (&x[0] * &x[0]).scale(c[3])
                    + (&x[0] * &x[1]).scale(c[4])
                    + (&x[1] * &x[1]).scale(c[5]);
                lin + quad + c[0]
            })
            .collect()
    })
}

fn coeff_strategy() -> impl Strategy<Value = [[f64; 6]; 2]> {
    prop::array::uniform2(prop::array::uniform6(-1.0f64..1.0))
}

fn point_strategy() -> impl Strategy<Value = [f64; 2]> {
    prop::array::uniform2(-0.9f64..0.9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bracket_antisymmetry(a in coeff_strategy(), b in coeff_strategy(), x in point_strategy()) {
        let fa = poly_field(a);
        let fb = poly_field(b);
        let ab = lie_bracket(&fa, &fb, &x).unwrap();
        let ba = lie_bracket(&fb, &fa, &x).unwrap();
        let scale = vec_norm2(&ab).max(1e-6);
        for (p, q) in ab.iter().zip(&ba) {
            prop_assert!((p + q).abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn jacobi_identity(
        a in coeff_strategy(),
        b in coeff_strategy(),
        c in coeff_strategy(),
        x in point_strategy(),
    ) {
        let fields: Vec<FieldHandle<f64>> =
            vec![Arc::new(poly_field(a)), Arc::new(poly_field(b)), Arc::new(poly_field(c))];
        // [X,[Y,Z]] + [Y,[Z,X]] + [Z,[X,Y]] = 0, via mixed bracket words
        let w1 = BracketWord::right_nested(&[0, 1, 2]);
        let w2 = BracketWord::right_nested(&[1, 2, 0]);
        let w3 = BracketWord::right_nested(&[2, 0, 1]);
        let v1 = eval_bracket_word(&w1, &fields, &x).unwrap();
        let v2 = eval_bracket_word(&w2, &fields, &x).unwrap();
        let v3 = eval_bracket_word(&w3, &fields, &x).unwrap();
        let scale = vec_norm2(&v1).max(vec_norm2(&v2)).max(vec_norm2(&v3)).max(1.0);
        for i in 0..2 {
            prop_assert!((v1[i] + v2[i] + v3[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn jet_product_rule_against_finite_differences(
        x0 in -0.8f64..0.8,
        y0 in -0.8f64..0.8,
    ) {
        // h(x, y) = exp(x y) / (1 + x^2): jet gradient vs central differences
        let h = |x: f64, y: f64| (x * y).exp() / (1.0 + x * x);
        let jx = Jet::variable(x0, 0, 2, 1);
        let jy = Jet::variable(y0, 1, 2, 1);
        let v = (&jx * &jy).exp() / ((&jx * &jx) + 1.0f64);
        let eps = 1e-6;
        let dx = (h(x0 + eps, y0) - h(x0 - eps, y0)) / (2.0 * eps);
        let dy = (h(x0, y0 + eps) - h(x0, y0 - eps)) / (2.0 * eps);
        prop_assert!((v.value() - h(x0, y0)).abs() <= 1e-13);
        prop_assert!((v.linear(0) - dx).abs() <= 1e-6);
        prop_assert!((v.linear(1) - dy).abs() <= 1e-6);
    }

    #[test]
    fn order_zero_jets_are_plain_arithmetic(a in -2.0f64..2.0, b in 0.1f64..2.0) {
        let ja = Jet::constant(a);
        let jb = Jet::constant(b);
        prop_assert_eq!((&ja + &jb).value(), a + b);
        prop_assert_eq!((&ja - &jb).value(), a - b);
        prop_assert_eq!((&ja * &jb).value(), a * b);
        prop_assert_eq!((&ja / &jb).value(), a / b);
        prop_assert_eq!(jb.sqrt().value(), b.sqrt());
    }
}

/// Random bracket tree over `n_gen` generators with at most `depth` levels.
fn word_strategy(n_gen: usize, depth: u32) -> impl Strategy<Value = BracketWord> {
    let leaf = (0..n_gen).prop_map(BracketWord::leaf);
    leaf.prop_recursive(depth, 16, 2, |inner| {
        (inner.clone(), inner).prop_map(|(l, r)| BracketWord::bracket(l, r))
    })
}

fn mat_of_word(word: &BracketWord, mats: &[DMat<f64>]) -> DMat<f64> {
    match word {
        BracketWord::Leaf(i) => mats[*i].clone(),
        BracketWord::Node(u, v) => {
            let mu = mat_of_word(u, mats);
            let mv = mat_of_word(v, mats);
            mv.matmul(&mu).add(&mu.matmul(&mv).scale(-1.0))
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linear_field_words_match_matrix_commutators(
        word in word_strategy(2, 3),
        a in prop::array::uniform4(-1.0f64..1.0),
        b in prop::array::uniform4(-1.0f64..1.0),
        x in point_strategy(),
    ) {
        let ma = DMat::from_rows(&[vec![a[0], a[1]], vec![a[2], a[3]]]);
        let mb = DMat::from_rows(&[vec![b[0], b[1]], vec![b[2], b[3]]]);
        let fields: Vec<FieldHandle<f64>> = vec![
            Arc::new(LinearField::new(ma.clone())),
            Arc::new(LinearField::new(mb.clone())),
        ];
        let got = eval_bracket_word(&word, &fields, &x).unwrap();
        let want = mat_of_word(&word, &[ma, mb]).matvec(&x);
        let scale = vec_norm2(&want).max(1.0);
        prop_assert!(vec_norm2(&vec_sub(&got, &want)) <= 1e-12 * scale,
            "word {word}: got {got:?}, want {want:?}");
    }
}

#[test]
fn cstr_fields_antisymmetry_and_jacobi_on_random_points() {
    use rand::{Rng, SeedableRng};
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let f1 = sys.frozen(&sys.control_max());
    let f2 = sys.frozen(&sys.control_min());
    let fields: Vec<FieldHandle<f64>> = vec![f1.clone(), f2.clone(), Arc::clone(&sys.f0)];
    let w1 = BracketWord::right_nested(&[0, 1, 2]);
    let w2 = BracketWord::right_nested(&[1, 2, 0]);
    let w3 = BracketWord::right_nested(&[2, 0, 1]);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let x = [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)];
        let ab = lie_bracket(f1.as_ref(), f2.as_ref(), &x).unwrap();
        let ba = lie_bracket(f2.as_ref(), f1.as_ref(), &x).unwrap();
        let scale = vec_norm2(&ab).max(1.0);
        assert!(
            vec_norm2(&[ab[0] + ba[0], ab[1] + ba[1]]) <= 1e-12 * scale,
            "antisymmetry violated at {x:?}"
        );
        let v1 = eval_bracket_word(&w1, &fields, &x).unwrap();
        let v2 = eval_bracket_word(&w2, &fields, &x).unwrap();
        let v3 = eval_bracket_word(&w3, &fields, &x).unwrap();
        let scale = vec_norm2(&v1)
            .max(vec_norm2(&v2))
            .max(vec_norm2(&v3))
            .max(1.0);
        for i in 0..2 {
            assert!(
                (v1[i] + v2[i] + v3[i]).abs() <= 1e-10 * scale,
                "jacobi violated at {x:?}"
            );
        }
    }
}

#[test]
fn cstr_jacobian_matches_central_differences() {
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let h = 1e-6;
    for x in [[0.0, 0.0], [-0.4, -0.016], [0.3, 0.25]] {
        let j = jacobian(sys.f0.as_ref(), &x).unwrap();
        for col in 0..2 {
            let mut xp = x;
            xp[col] += h;
            let mut xm = x;
            xm[col] -= h;
            let fp = sys.f0.eval(&xp).unwrap();
            let fm = sys.f0.eval(&xm).unwrap();
            for row in 0..2 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!(
                    (j[(row, col)] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "entry ({row},{col}) at {x:?}: jet {} vs fd {fd}",
                    j[(row, col)]
                );
            }
        }
    }
}

#[test]
fn nested_word_matches_finite_differences_of_brackets() {
    // [f2, [f1, f2]] at the origin against a nested finite-difference
    // evaluation of the bracket definition
    let sys = build_cstr2::<f64>(&Cstr2Params::default());
    let f1 = sys.frozen(&sys.control_max());
    let f2 = sys.frozen(&sys.control_min());
    let fields: Vec<FieldHandle<f64>> = vec![f1.clone(), f2.clone()];
    let word = BracketWord::right_nested(&[1, 0, 1]);
    let x = [0.0, 0.0];
    let got = eval_bracket_word(&word, &fields, &x).unwrap();

    let inner = |x: &[f64]| lie_bracket(f1.as_ref(), f2.as_ref(), x).unwrap();
    let h = 1e-5;
    let mut jac_inner = [[0.0; 2]; 2];
    for col in 0..2 {
        let mut xp = x;
        xp[col] += h;
        let mut xm = x;
        xm[col] -= h;
        let gp = inner(&xp);
        let gm = inner(&xm);
        for row in 0..2 {
            jac_inner[row][col] = (gp[row] - gm[row]) / (2.0 * h);
        }
    }
    let f2x = f2.eval(&x).unwrap();
    let jf2 = jacobian(f2.as_ref(), &x).unwrap();
    let gx = inner(&x);
    let want: Vec<f64> = (0..2)
        .map(|i| {
            (0..2)
                .map(|j| jac_inner[i][j] * f2x[j] - jf2[(i, j)] * gx[j])
                .sum()
        })
        .collect();
    let scale = vec_norm2(&want).max(1.0);
    assert!(
        vec_norm2(&vec_sub(&got, &want)) <= 1e-4 * scale,
        "got {got:?}, fd oracle {want:?}"
    );
}
