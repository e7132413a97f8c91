//! Vector fields as evaluable objects, their Jacobians, and iterated Lie
//! brackets, all computed through jet arithmetic.

mod jet;
mod word;

pub use jet::{jet_shape, Jet, JetShape};
pub use word::BracketWord;

use std::sync::Arc;

use thiserror::Error;

use crate::linalg::DMat;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum LieError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value while evaluating {context}")]
    NonFinite { context: &'static str },
    #[error("bracket word leaf index {index} out of range for {fields} fields")]
    LeafOutOfRange { index: usize, fields: usize },
}

/// Axis-aligned box, possibly unbounded, describing where a field is defined.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBox<R> {
    pub lower: Vec<R>,
    pub upper: Vec<R>,
}

impl<R: Real> DomainBox<R> {
    pub fn unbounded(dim: usize) -> Self {
        DomainBox {
            lower: vec![-R::infinity(); dim],
            upper: vec![R::infinity(); dim],
        }
    }

    pub fn new(lower: Vec<R>, upper: Vec<R>) -> Self {
        assert_eq!(lower.len(), upper.len());
        DomainBox { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[R]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }
}

/// An evaluable vector field on R^n. Evaluation is over jets so that callers
/// can extract derivatives of any order; plain constants (unshaped jets) flow
/// through for point evaluation. Implementations must be deterministic and
/// reentrant.
pub trait VectorField<R: Real>: Send + Sync {
    fn dim(&self) -> usize;

    fn eval_jets(&self, x: &[Jet<R>]) -> Result<Vec<Jet<R>>, LieError>;

    /// Point evaluation. The default routes through `eval_jets` with constant
    /// jets; fields that need seed structure internally (bound Lie series)
    /// override this.
    fn eval(&self, x: &[R]) -> Result<Vec<R>, LieError> {
        let xj: Vec<Jet<R>> = x.iter().map(|&v| Jet::constant(v)).collect();
        Ok(self
            .eval_jets(&xj)?
            .into_iter()
            .map(|j| j.value())
            .collect())
    }

    fn domain(&self) -> Option<&DomainBox<R>> {
        None
    }
}

/// Shared handle to a field.
pub type FieldHandle<R> = Arc<dyn VectorField<R>>;

/// Field defined by a closure over jet coordinates.
pub struct FnField<R, F> {
    dim: usize,
    f: F,
    domain: Option<DomainBox<R>>,
}

impl<R: Real, F> FnField<R, F>
where
    F: Fn(&[Jet<R>]) -> Vec<Jet<R>> + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField {
            dim,
            f,
            domain: None,
        }
    }

    pub fn with_domain(dim: usize, domain: DomainBox<R>, f: F) -> Self {
        FnField {
            dim,
            f,
            domain: Some(domain),
        }
    }
}

impl<R: Real, F> VectorField<R> for FnField<R, F>
where
    F: Fn(&[Jet<R>]) -> Vec<Jet<R>> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_jets(&self, x: &[Jet<R>]) -> Result<Vec<Jet<R>>, LieError> {
        if x.len() != self.dim {
            return Err(LieError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let out = (self.f)(x);
        debug_assert_eq!(out.len(), self.dim);
        Ok(out)
    }

    fn domain(&self) -> Option<&DomainBox<R>> {
        self.domain.as_ref()
    }
}

/// Linear field x -> A x.
pub struct LinearField<R> {
    a: DMat<R>,
}

impl<R: Real> LinearField<R> {
    pub fn new(a: DMat<R>) -> Self {
        assert!(a.is_square());
        LinearField { a }
    }
}

impl<R: Real> VectorField<R> for LinearField<R> {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn eval_jets(&self, x: &[Jet<R>]) -> Result<Vec<Jet<R>>, LieError> {
        let n = self.a.rows();
        if x.len() != n {
            return Err(LieError::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        Ok((0..n)
            .map(|i| {
                let mut acc = Jet::constant(R::zero());
                for (j, xj) in x.iter().enumerate() {
                    acc = acc + xj.scale(self.a[(i, j)]);
                }
                acc
            })
            .collect())
    }
}

/// Constant field.
pub struct ConstField<R> {
    v: Vec<R>,
}

impl<R: Real> ConstField<R> {
    pub fn new(v: Vec<R>) -> Self {
        ConstField { v }
    }
}

impl<R: Real> VectorField<R> for ConstField<R> {
    fn dim(&self) -> usize {
        self.v.len()
    }

    fn eval_jets(&self, x: &[Jet<R>]) -> Result<Vec<Jet<R>>, LieError> {
        if x.len() != self.v.len() {
            return Err(LieError::DimensionMismatch {
                expected: self.v.len(),
                got: x.len(),
            });
        }
        Ok(self.v.iter().map(|&c| Jet::constant(c)).collect())
    }
}

fn check_finite<R: Real>(jets: &[Jet<R>], context: &'static str) -> Result<(), LieError> {
    if jets.iter().all(Jet::is_finite) {
        Ok(())
    } else {
        Err(LieError::NonFinite { context })
    }
}

/// Jacobian matrix of `field` at `x`, entry (i, j) = dF_i/dx_j, via
/// first-order jets.
pub fn jacobian<R: Real>(field: &dyn VectorField<R>, x: &[R]) -> Result<DMat<R>, LieError> {
    let n = field.dim();
    if x.len() != n {
        return Err(LieError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let seeds = Jet::seed_point(x, 1);
    let out = field.eval_jets(&seeds)?;
    check_finite(&out, "jacobian")?;
    Ok(DMat::from_fn(n, n, |i, j| out[i].linear(j)))
}

/// Lie bracket `[X, Y](x) = JY(x) X(x) - JX(x) Y(x)`.
pub fn lie_bracket<R: Real>(
    xf: &dyn VectorField<R>,
    yf: &dyn VectorField<R>,
    x: &[R],
) -> Result<Vec<R>, LieError> {
    let n = xf.dim();
    if yf.dim() != n {
        return Err(LieError::DimensionMismatch {
            expected: n,
            got: yf.dim(),
        });
    }
    if x.len() != n {
        return Err(LieError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let seeds = Jet::seed_point(x, 1);
    let xv = xf.eval_jets(&seeds)?;
    let yv = yf.eval_jets(&seeds)?;
    check_finite(&xv, "lie_bracket")?;
    check_finite(&yv, "lie_bracket")?;
    Ok((0..n)
        .map(|i| {
            (0..n)
                .map(|j| yv[i].linear(j) * xv[j].value() - xv[i].linear(j) * yv[j].value())
                .sum()
        })
        .collect())
}

/// Evaluate a bracket word over a list of fields at a point. Leaves evaluate
/// the corresponding field; nodes apply the bracket recursively, with the
/// required derivative order supplied by jets of order equal to the tree
/// height.
pub fn eval_bracket_word<R: Real>(
    word: &BracketWord,
    fields: &[FieldHandle<R>],
    x: &[R],
) -> Result<Vec<R>, LieError> {
    if fields.is_empty() {
        return Err(LieError::LeafOutOfRange {
            index: word.max_leaf_index(),
            fields: 0,
        });
    }
    let n = fields[0].dim();
    if x.len() != n {
        return Err(LieError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let seeds = Jet::seed_point(x, word.height());
    let out = eval_word_jets(word, fields, &seeds, 0)?;
    Ok(out.into_iter().map(|j| j.value()).collect())
}

/// Recursive bracket-word evaluation producing jets of order `out_order`.
/// The input jets must be (possibly promoted) canonical seeds of order at
/// least `out_order + word.height()`.
pub(crate) fn eval_word_jets<R: Real>(
    word: &BracketWord,
    fields: &[FieldHandle<R>],
    x: &[Jet<R>],
    out_order: usize,
) -> Result<Vec<Jet<R>>, LieError> {
    let n = x.len();
    match word {
        BracketWord::Leaf(k) => {
            if *k >= fields.len() {
                return Err(LieError::LeafOutOfRange {
                    index: *k,
                    fields: fields.len(),
                });
            }
            if fields[*k].dim() != n {
                return Err(LieError::DimensionMismatch {
                    expected: n,
                    got: fields[*k].dim(),
                });
            }
            let xt: Vec<Jet<R>> = x.iter().map(|j| j.truncated(out_order)).collect();
            let out = fields[*k].eval_jets(&xt)?;
            check_finite(&out, "bracket word leaf")?;
            Ok(out)
        }
        BracketWord::Node(u, v) => {
            // structurally identical children: exactly zero, no evaluation
            if u == v {
                return Ok(vec![Jet::constant(R::zero()); n]);
            }
            let uu = eval_word_jets(u, fields, x, out_order + 1)?;
            let vv = eval_word_jets(v, fields, x, out_order + 1)?;
            let ut: Vec<Jet<R>> = uu.iter().map(|j| j.truncated(out_order)).collect();
            let vt: Vec<Jet<R>> = vv.iter().map(|j| j.truncated(out_order)).collect();
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let mut acc = Jet::constant(R::zero());
                for j in 0..n {
                    acc = acc + vv[i].d_seed(j, out_order) * &ut[j]
                        - uu[i].d_seed(j, out_order) * &vt[j];
                }
                out.push(acc);
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use approx::assert_relative_eq;

    #[test]
    fn jacobian_of_constant_field_is_zero() {
        let f = ConstField::new(vec![3.0f64, -1.0]);
        let j = jacobian(&f, &[0.5, 0.5]).unwrap();
        assert_eq!(j.max_abs_entry(), 0.0);
    }

    #[test]
    fn jacobian_of_linear_field_is_the_matrix() {
        let a = DMat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let f = LinearField::new(a.clone());
        let j = jacobian(&f, &[0.0, 0.0]).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                assert_relative_eq!(j[(i, k)], a[(i, k)]);
            }
        }
    }

    #[test]
    fn constant_fields_commute() {
        let xf = ConstField::new(vec![1.0f64, 0.0]);
        let yf = ConstField::new(vec![0.0, 1.0]);
        let b = lie_bracket(&xf, &yf, &[0.3, -0.7]).unwrap();
        assert_eq!(b, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_bracket_matches_matrix_commutator() {
        // X = Ax, Y = Bx: [X,Y](x) = (BA - AB) x
        let a = DMat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let b = DMat::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let xf = LinearField::new(a);
        let yf = LinearField::new(b);
        let v = lie_bracket(&xf, &yf, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(v[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn bracket_of_field_with_itself_is_zero() {
        let f = FnField::new(2, |x: &[Jet<f64>]| {
            vec![(&x[0] * &x[1]).exp(), &x[0] - 1.0f64]
        });
        let v = lie_bracket(&f, &f, &[0.2, 0.4]).unwrap();
        assert!(v.iter().all(|&c| c.abs() < 1e-12));
    }

    #[test]
    fn word_leaf_evaluates_field() {
        let f: FieldHandle<f64> = Arc::new(ConstField::new(vec![2.0, 5.0]));
        let w = BracketWord::leaf(0);
        let v = eval_bracket_word(&w, &[f], &[0.0, 0.0]).unwrap();
        assert_eq!(v, vec![2.0, 5.0]);
    }

    #[test]
    fn nested_word_matches_matrix_commutators() {
        // [f1, [f1, f2]] for linear fields = nested reversed matrix commutator
        let a = DMat::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        let b = DMat::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]);
        let fa: FieldHandle<f64> = Arc::new(LinearField::new(a.clone()));
        let fb: FieldHandle<f64> = Arc::new(LinearField::new(b.clone()));
        let w = BracketWord::right_nested(&[0, 0, 1]);
        let got = eval_bracket_word(&w, &[fa, fb], &[1.0, 0.0]).unwrap();
        // mat([u,v]) = m(v) m(u) - m(u) m(v)
        let inner = b.matmul(&a).add(&a.matmul(&b).scale(-1.0));
        let outer = inner.matmul(&a).add(&a.matmul(&inner).scale(-1.0));
        let want = outer.matvec(&[1.0, 0.0]);
        assert_relative_eq!(got[0], want[0], epsilon = 1e-13);
        assert_relative_eq!(got[1], want[1], epsilon = 1e-13);
    }

    #[test]
    fn leaf_out_of_range_is_reported() {
        let f: FieldHandle<f64> = Arc::new(ConstField::new(vec![0.0, 0.0]));
        let w = BracketWord::right_nested(&[0, 3]);
        let err = eval_bracket_word(&w, &[f], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, LieError::LeafOutOfRange { index: 3, .. }));
    }

    #[test]
    fn non_finite_evaluation_is_a_domain_error() {
        let f = FnField::new(1, |x: &[Jet<f64>]| vec![x[0].ln()]);
        let err = jacobian(&f, &[-1.0]).unwrap_err();
        assert!(matches!(err, LieError::NonFinite { .. }));
    }
}
