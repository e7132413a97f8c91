//! Truncated Lie series for the logarithm of a composition of flows:
//! closed-form low-order terms, a high-order two-generator table, and the
//! general recursive construction by iterated series products. Coefficients
//! are exact rationals; floating point enters only when a series is bound to
//! concrete fields.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::lie::{eval_word_jets, BracketWord, DomainBox, FieldHandle, Jet, LieError, VectorField};
use crate::scalar::{r, Real};

/// Default truncation cap. Raising it is possible but term counts grow
/// combinatorially with the order; expect long build times past 8.
pub const DEFAULT_ORDER_CAP: usize = 6;

#[derive(Debug, Error)]
pub enum BchdError {
    #[error("order {order} not supported by this construction (max {max})")]
    UnsupportedOrder { order: usize, max: usize },
    #[error("order {order} exceeds the configured cap {cap}")]
    OrderAboveCap { order: usize, cap: usize },
    #[error("series are over different generator sets ({left} vs {right})")]
    GeneratorMismatch { left: usize, right: usize },
    #[error("recursive construction needs at least 2 generators, got {got}")]
    NeedTwoGenerators { got: usize },
    #[error("series has {expected} generators but {got} fields were supplied")]
    FieldCountMismatch { expected: usize, got: usize },
    #[error("order must be at least 1")]
    ZeroOrder,
}

/// One summand of a Lie series: exact coefficient, monomial in the interval
/// fractions, and a bracket word whose leaf count is the `tau` degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LieSeriesTerm {
    pub coeff: BigRational,
    pub alpha_exponents: Vec<u32>,
    pub tau_degree: usize,
    pub word: BracketWord,
}

/// A truncated Lie series over `n_generators` formal fields.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LieSeries {
    n_generators: usize,
    order: usize,
    terms: Vec<LieSeriesTerm>,
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl LieSeries {
    /// Canonicalize words (antisymmetry), merge identical (word, monomial)
    /// keys, drop zero terms, sort by (degree, word, monomial).
    pub fn from_raw_terms(
        n_generators: usize,
        order: usize,
        raw: impl IntoIterator<Item = (BigRational, Vec<u32>, BracketWord)>,
    ) -> Self {
        let mut merged: BTreeMap<(usize, BracketWord, Vec<u32>), BigRational> = BTreeMap::new();
        for (coeff, mono, word) in raw {
            let degree = word.length();
            if degree > order || coeff.is_zero() {
                continue;
            }
            let (cw, sign) = word.canonicalized();
            if sign == 0 {
                continue;
            }
            debug_assert_eq!(mono.len(), n_generators);
            let signed = if sign < 0 { -coeff } else { coeff };
            let entry = merged
                .entry((degree, cw, mono))
                .or_insert_with(BigRational::zero);
            *entry += signed;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| !c.is_zero())
            .map(|((degree, word, mono), coeff)| {
                debug_assert_eq!(degree, word.length());
                LieSeriesTerm {
                    coeff,
                    alpha_exponents: mono,
                    tau_degree: degree,
                    word,
                }
            })
            .collect();
        LieSeries {
            n_generators,
            order,
            terms,
        }
    }

    /// The single-term series `alpha_k tau f_k` (0-based generator index).
    pub fn primitive(n_generators: usize, k: usize) -> Self {
        assert!(k < n_generators);
        let mut mono = vec![0u32; n_generators];
        mono[k] = 1;
        LieSeries {
            n_generators,
            order: 1,
            terms: vec![LieSeriesTerm {
                coeff: BigRational::from(BigInt::from(1)),
                alpha_exponents: mono,
                tau_degree: 1,
                word: BracketWord::leaf(k),
            }],
        }
    }

    pub fn n_generators(&self) -> usize {
        self.n_generators
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn terms(&self) -> &[LieSeriesTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Restriction to terms of degree <= `order`.
    pub fn truncated(&self, order: usize) -> LieSeries {
        LieSeries {
            n_generators: self.n_generators,
            order,
            terms: self
                .terms
                .iter()
                .filter(|t| t.tau_degree <= order)
                .cloned()
                .collect(),
        }
    }

    pub fn max_word_height(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.word.height())
            .max()
            .unwrap_or(0)
    }

    /// Expansion in the free associative algebra, keyed by (generator string,
    /// alpha monomial). Two series are equal as Lie elements iff these maps
    /// are equal; this is the basis-independent comparison used by the
    /// cross-construction oracles.
    pub fn associative_expansion(&self) -> BTreeMap<(Vec<usize>, Vec<u32>), BigRational> {
        let mut out: BTreeMap<(Vec<usize>, Vec<u32>), BigRational> = BTreeMap::new();
        for t in &self.terms {
            for (string, c) in t.word.associative_expansion() {
                let key = (string, t.alpha_exponents.clone());
                let entry = out.entry(key).or_insert_with(BigRational::zero);
                *entry += &t.coeff * BigRational::from(BigInt::from(c));
            }
        }
        out.retain(|_, c| !c.is_zero());
        out
    }

    /// Equality as elements of the free Lie algebra (ignores the basis the
    /// terms happen to be written in).
    pub fn equivalent_to(&self, other: &LieSeries) -> bool {
        self.n_generators == other.n_generators
            && self.associative_expansion() == other.associative_expansion()
    }

    /// Basis-independent checksum over the associative expansion (FNV-1a of
    /// its canonical rendering).
    pub fn expansion_checksum(&self) -> u64 {
        let mut text = String::new();
        for ((string, mono), coeff) in self.associative_expansion() {
            let _ = write!(text, "{:?}|{:?}|{};", string, mono, coeff);
        }
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        hash
    }

    /// Plain-text dump, one `coeff * alpha^e * tau^d * word` line per term.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for t in &self.terms {
            out.push_str(&t.render());
            out.push('\n');
        }
        out
    }
}

impl LieSeriesTerm {
    fn render(&self) -> String {
        let mut line = String::new();
        if self.coeff.denom() == &BigInt::from(1) {
            let _ = write!(line, "{}", self.coeff.numer());
        } else {
            let _ = write!(line, "{}/{}", self.coeff.numer(), self.coeff.denom());
        }
        line.push_str(" * ");
        let mut wrote_alpha = false;
        for (i, &e) in self.alpha_exponents.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if wrote_alpha {
                line.push('*');
            }
            if e == 1 {
                let _ = write!(line, "a{}", i + 1);
            } else {
                let _ = write!(line, "a{}^{}", i + 1, e);
            }
            wrote_alpha = true;
        }
        if !wrote_alpha {
            line.push('1');
        }
        let _ = write!(line, " * tau^{} * {}", self.tau_degree, self.word);
        line
    }
}

/// Series product: the truncation of `log(e^A e^B)` to `tau`-degree <= order,
/// by enumerating the composition expansion and substituting the two series
/// multilinearly. Compositions whose innermost bracket vanishes are dropped
/// before any coefficient work.
pub fn dynkin_product(a: &LieSeries, b: &LieSeries, order: usize) -> Result<LieSeries, BchdError> {
    dynkin_product_with_cap(a, b, order, DEFAULT_ORDER_CAP)
}

pub fn dynkin_product_with_cap(
    a: &LieSeries,
    b: &LieSeries,
    order: usize,
    cap: usize,
) -> Result<LieSeries, BchdError> {
    if a.n_generators != b.n_generators {
        return Err(BchdError::GeneratorMismatch {
            left: a.n_generators,
            right: b.n_generators,
        });
    }
    if order == 0 {
        return Err(BchdError::ZeroOrder);
    }
    if order > cap {
        return Err(BchdError::OrderAboveCap { order, cap });
    }
    let n_gen = a.n_generators;
    let mut raw: Vec<(BigRational, Vec<u32>, BracketWord)> = Vec::new();

    let a_terms = a.terms();
    let b_terms = b.terms();

    // letters[i] selects which series fills slot i
    let mut substitute = |letters: &[bool], base: BigRational| {
        let slots = letters.len();
        let mut chosen: Vec<usize> = vec![0; slots];
        // depth-first multilinear expansion with degree budget
        #[allow(clippy::too_many_arguments)]
        fn rec(
            idx: usize,
            budget_left: usize,
            letters: &[bool],
            chosen: &mut Vec<usize>,
            a_terms: &[LieSeriesTerm],
            b_terms: &[LieSeriesTerm],
            base: &BigRational,
            n_gen: usize,
            raw: &mut Vec<(BigRational, Vec<u32>, BracketWord)>,
        ) {
            if idx == letters.len() {
                let mut coeff = base.clone();
                let mut mono = vec![0u32; n_gen];
                let mut trees: Vec<&BracketWord> = Vec::with_capacity(letters.len());
                for (slot, &from_a) in letters.iter().enumerate() {
                    let t = if from_a {
                        &a_terms[chosen[slot]]
                    } else {
                        &b_terms[chosen[slot]]
                    };
                    coeff *= &t.coeff;
                    for (m, &e) in mono.iter_mut().zip(&t.alpha_exponents) {
                        *m += e;
                    }
                    trees.push(&t.word);
                }
                let mut word = trees[trees.len() - 1].clone();
                for t in trees[..trees.len() - 1].iter().rev() {
                    word = BracketWord::bracket((*t).clone(), word);
                }
                raw.push((coeff, mono, word));
                return;
            }
            let pool = if letters[idx] { a_terms } else { b_terms };
            let slots_after = letters.len() - idx - 1;
            for (ti, t) in pool.iter().enumerate() {
                if t.tau_degree + slots_after > budget_left {
                    continue;
                }
                chosen[idx] = ti;
                rec(
                    idx + 1,
                    budget_left - t.tau_degree,
                    letters,
                    chosen,
                    a_terms,
                    b_terms,
                    base,
                    n_gen,
                    raw,
                );
            }
        }
        rec(
            0,
            order,
            letters,
            &mut chosen,
            a_terms,
            b_terms,
            &base,
            n_gen,
            &mut raw,
        );
    };

    // enumerate (r_1, s_1, ..., r_k, s_k) with r_i + s_i >= 1 and total <= order
    for k in 1..=order {
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(k);
        enumerate_compositions(k, order, &mut pairs, &mut |comp| {
            let slot_count: usize = comp.iter().map(|&(r, s)| r + s).sum();
            let mut letters = Vec::with_capacity(slot_count);
            for &(rr, ss) in comp {
                letters.extend(std::iter::repeat_n(true, rr));
                letters.extend(std::iter::repeat_n(false, ss));
            }
            if slot_count >= 2 && letters[slot_count - 1] == letters[slot_count - 2] {
                return; // innermost bracket is zero
            }
            let mut denom = BigInt::from(slot_count as i64);
            for &(rr, ss) in comp {
                denom *= factorial(rr) * factorial(ss);
            }
            let sign = if (k - 1) % 2 == 0 { 1 } else { -1 };
            let base = BigRational::new(BigInt::from(sign), BigInt::from(k as i64) * denom);
            substitute(&letters, base);
        });
    }

    Ok(LieSeries::from_raw_terms(n_gen, order, raw))
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::from(1), |acc, k| acc * BigInt::from(k as i64))
}

fn enumerate_compositions(
    k: usize,
    budget: usize,
    pairs: &mut Vec<(usize, usize)>,
    visit: &mut impl FnMut(&[(usize, usize)]),
) {
    if pairs.len() == k {
        visit(pairs);
        return;
    }
    let slots_left = k - pairs.len() - 1;
    let max_here = budget.saturating_sub(slots_left);
    for total in 1..=max_here {
        for rr in 0..=total {
            pairs.push((rr, total - rr));
            enumerate_compositions(k, budget - total, pairs, visit);
            pairs.pop();
        }
    }
}

/// Recursive construction: start from the product of the first two primitive
/// series, then fold in one generator at a time.
pub fn series_recursive(n_generators: usize, order: usize) -> Result<LieSeries, BchdError> {
    series_recursive_with_cap(n_generators, order, DEFAULT_ORDER_CAP)
}

pub fn series_recursive_with_cap(
    n_generators: usize,
    order: usize,
    cap: usize,
) -> Result<LieSeries, BchdError> {
    if n_generators < 2 {
        return Err(BchdError::NeedTwoGenerators { got: n_generators });
    }
    let mut acc = dynkin_product_with_cap(
        &LieSeries::primitive(n_generators, 0),
        &LieSeries::primitive(n_generators, 1),
        order,
        cap,
    )?;
    for k in 2..n_generators {
        acc = dynkin_product_with_cap(&acc, &LieSeries::primitive(n_generators, k), order, cap)?;
    }
    Ok(acc)
}

/// Closed-form general-N terms up to order 3.
///
/// Order 1: sum of the generators. Order 2: `(1/2)[f_i, f_j]` over i < j.
/// Order 3: the two-index families `(1/12)[f_i,[f_i,f_j]]` and
/// `-(1/12)[f_j,[f_i,f_j]]` over i < j, and for each triple i < j < k the
/// mixed part `-(1/4)[f_k,[f_i,f_j]] + (1/12)[f_i,[f_j,f_k]] +
/// (1/12)[f_j,[f_i,f_k]]` (this matches the recursive construction exactly).
pub fn series_closed_form(n_generators: usize, order: usize) -> Result<LieSeries, BchdError> {
    if order == 0 {
        return Err(BchdError::ZeroOrder);
    }
    if order > 3 {
        return Err(BchdError::UnsupportedOrder { order, max: 3 });
    }
    assert!(n_generators >= 1);
    let n = n_generators;
    let e = |idxs: &[usize]| {
        let mut m = vec![0u32; n];
        for &i in idxs {
            m[i] += 1;
        }
        m
    };
    let mut raw: Vec<(BigRational, Vec<u32>, BracketWord)> = Vec::new();
    for i in 0..n {
        raw.push((ratio(1, 1), e(&[i]), BracketWord::leaf(i)));
    }
    if order >= 2 {
        for i in 0..n {
            for j in (i + 1)..n {
                raw.push((ratio(1, 2), e(&[i, j]), BracketWord::right_nested(&[i, j])));
            }
        }
    }
    if order >= 3 {
        for i in 0..n {
            for j in (i + 1)..n {
                raw.push((
                    ratio(1, 12),
                    e(&[i, i, j]),
                    BracketWord::right_nested(&[i, i, j]),
                ));
                raw.push((
                    ratio(-1, 12),
                    e(&[i, j, j]),
                    BracketWord::right_nested(&[j, i, j]),
                ));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let m = e(&[i, j, k]);
                    raw.push((
                        ratio(-1, 4),
                        m.clone(),
                        BracketWord::right_nested(&[k, i, j]),
                    ));
                    raw.push((
                        ratio(1, 12),
                        m.clone(),
                        BracketWord::right_nested(&[i, j, k]),
                    ));
                    raw.push((ratio(1, 12), m, BracketWord::right_nested(&[j, i, k])));
                }
            }
        }
    }
    Ok(LieSeries::from_raw_terms(n, order, raw))
}

/// High-order expansion for two generators, exact through degree 6.
pub fn series_two_generator(order: usize) -> Result<LieSeries, BchdError> {
    if order == 0 {
        return Err(BchdError::ZeroOrder);
    }
    if order > 6 {
        return Err(BchdError::UnsupportedOrder { order, max: 6 });
    }
    // (num, den, alpha exponents, right-nested word over generators 1/2)
    #[rustfmt::skip]
    const TABLE: &[(i64, i64, [u32; 2], &[usize])] = &[
        (1, 1,     [1, 0], &[1]),
        (1, 1,     [0, 1], &[2]),
        (1, 2,     [1, 1], &[1, 2]),
        (1, 12,    [2, 1], &[1, 1, 2]),
        (-1, 12,   [1, 2], &[2, 1, 2]),
        (-1, 24,   [2, 2], &[2, 1, 1, 2]),
        (-1, 720,  [1, 4], &[2, 2, 2, 2, 1]),
        (-1, 720,  [4, 1], &[1, 1, 1, 1, 2]),
        (1, 360,   [2, 3], &[1, 2, 2, 2, 1]),
        (1, 360,   [3, 2], &[2, 1, 1, 1, 2]),
        (1, 120,   [2, 3], &[2, 1, 2, 1, 2]),
        (1, 120,   [3, 2], &[1, 2, 1, 2, 1]),
        (1, 240,   [3, 3], &[1, 2, 1, 2, 1, 2]),
        (1, 720,   [4, 2], &[1, 2, 1, 1, 1, 2]),
        (-1, 720,  [3, 3], &[1, 1, 2, 2, 1, 2]),
        (1, 1440,  [2, 4], &[1, 2, 2, 2, 1, 2]),
        (-1, 1440, [4, 2], &[1, 1, 2, 1, 1, 2]),
    ];
    let raw = TABLE.iter().map(|(num, den, mono, leaves)| {
        let zero_based: Vec<usize> = leaves.iter().map(|&i| i - 1).collect();
        (
            ratio(*num, *den),
            mono.to_vec(),
            BracketWord::right_nested(&zero_based),
        )
    });
    Ok(LieSeries::from_raw_terms(2, order, raw))
}

/// Which construction produces the series: the order-limited closed form,
/// the bundled high-order two-generator table ("appendix"), or the general
/// recursive product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeriesMethod {
    General,
    Appendix,
    Recursive,
}

impl SeriesMethod {
    pub fn build(&self, n_generators: usize, order: usize) -> Result<LieSeries, BchdError> {
        match self {
            SeriesMethod::General => series_closed_form(n_generators, order),
            SeriesMethod::Appendix => {
                if n_generators != 2 {
                    return Err(BchdError::GeneratorMismatch {
                        left: n_generators,
                        right: 2,
                    });
                }
                series_two_generator(order)
            }
            SeriesMethod::Recursive => {
                if n_generators == 1 {
                    // a single exponential needs no product expansion
                    return series_closed_form(1, order.min(3));
                }
                series_recursive(n_generators, order)
            }
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesMethod::General => "general",
            SeriesMethod::Appendix => "appendix",
            SeriesMethod::Recursive => "recursive",
        }
    }

    pub fn parse(s: &str) -> Option<SeriesMethod> {
        match s {
            "general" => Some(SeriesMethod::General),
            "appendix" => Some(SeriesMethod::Appendix),
            "recursive" => Some(SeriesMethod::Recursive),
            _ => None,
        }
    }
}

/// A Lie series bound to concrete fields, interval fractions and a period:
/// an evaluable vector field `x -> sum coeff * prod(alpha^e) * tau^deg *
/// word(fields)(x)`.
pub struct BoundSeries<R: Real> {
    fields: Vec<FieldHandle<R>>,
    weights: Vec<R>,
    words: Vec<BracketWord>,
    dim: usize,
    max_height: usize,
    domain: Option<DomainBox<R>>,
}

/// Bind a series to fields. `alphas` are the interval fractions of the
/// switching schedule (they sum to 1 for a full period, but this is the
/// caller's business), `tau` the period.
pub fn bind<R: Real>(
    series: &LieSeries,
    fields: &[FieldHandle<R>],
    alphas: &[R],
    tau: R,
) -> Result<BoundSeries<R>, BchdError> {
    if fields.len() != series.n_generators() {
        return Err(BchdError::FieldCountMismatch {
            expected: series.n_generators(),
            got: fields.len(),
        });
    }
    if alphas.len() != series.n_generators() {
        return Err(BchdError::FieldCountMismatch {
            expected: series.n_generators(),
            got: alphas.len(),
        });
    }
    let dim = fields[0].dim();
    assert!(
        fields.iter().all(|f| f.dim() == dim),
        "fields of mixed dimension"
    );
    let mut weights = Vec::with_capacity(series.len());
    let mut words = Vec::with_capacity(series.len());
    for t in series.terms() {
        let mut w = r::<R>(t.coeff.to_f64().expect("rational to float"));
        for (a, &e) in alphas.iter().zip(&t.alpha_exponents) {
            w *= a.powi(e as i32);
        }
        w *= tau.powi(t.tau_degree as i32);
        weights.push(w);
        words.push(t.word.clone());
    }
    let domain = fields.iter().find_map(|f| f.domain().cloned());
    let max_height = series.max_word_height();
    Ok(BoundSeries {
        fields: fields.to_vec(),
        weights,
        words,
        dim,
        max_height,
        domain,
    })
}

impl<R: Real> BoundSeries<R> {
    fn eval_seeded(&self, seeds: &[Jet<R>], out_order: usize) -> Result<Vec<Jet<R>>, LieError> {
        let mut acc = vec![Jet::constant(R::zero()); self.dim];
        for (word, &w) in self.words.iter().zip(&self.weights) {
            if w == R::zero() {
                continue;
            }
            let vals = eval_word_jets(word, &self.fields, seeds, out_order)?;
            for (a, v) in acc.iter_mut().zip(vals) {
                *a = &*a + &v.scale(w);
            }
        }
        Ok(acc)
    }
}

impl<R: Real> VectorField<R> for BoundSeries<R> {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Input jets must be canonical seeds (possibly promoted); the bracket
    /// recursion needs the seed structure to take nested derivatives.
    fn eval_jets(&self, x: &[Jet<R>]) -> Result<Vec<Jet<R>>, LieError> {
        if x.len() != self.dim {
            return Err(LieError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let out_order = x.iter().map(|j| j.order()).max().unwrap_or(0);
        if x.iter().all(|j| j.order() == 0) {
            // no seed structure supplied: rebuild canonical seeds at the point
            let point: Vec<R> = x.iter().map(Jet::value).collect();
            let seeds = Jet::seed_point(&point, self.max_height);
            let out = self.eval_seeded(&seeds, 0)?;
            return Ok(out.into_iter().map(|j| Jet::constant(j.value())).collect());
        }
        let seeds: Vec<Jet<R>> = x
            .iter()
            .map(|j| j.promoted(self.dim, out_order + self.max_height))
            .collect();
        self.eval_seeded(&seeds, out_order)
    }

    fn eval(&self, x: &[R]) -> Result<Vec<R>, LieError> {
        if x.len() != self.dim {
            return Err(LieError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let seeds = Jet::seed_point(x, self.max_height);
        let out = self.eval_seeded(&seeds, 0)?;
        Ok(out.into_iter().map(|j| j.value()).collect())
    }

    fn domain(&self) -> Option<&DomainBox<R>> {
        self.domain.as_ref()
    }
}

/// Convenience: bind behind a shared handle.
pub fn bind_handle<R: Real>(
    series: &LieSeries,
    fields: &[FieldHandle<R>],
    alphas: &[R],
    tau: R,
) -> Result<FieldHandle<R>, BchdError> {
    Ok(Arc::new(bind(series, fields, alphas, tau)?))
}
