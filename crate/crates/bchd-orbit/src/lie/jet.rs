//! Truncated multivariate Taylor arithmetic ("jets") used for all derivative
//! computation in the crate. A jet stores the Taylor coefficients of a scalar
//! expression in `vars` seed directions up to total degree `order`; arithmetic
//! propagates them exactly, so Jacobians and nested bracket derivatives come
//! out correct to rounding for the analytic model fields.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;

use crate::scalar::{r, Real};

/// Shared combinatorial tables for one (vars, order) pair.
#[derive(Debug)]
pub struct JetShape {
    vars: usize,
    order: usize,
    /// multi-indices, graded (degree-major), deterministic within a degree
    exps: Vec<Vec<u8>>,
    /// position of exps[i] + exps[j], or u32::MAX when the sum exceeds `order`
    prod: Vec<u32>,
    /// position of the degree-1 index e_j for each var j
    var_pos: Vec<usize>,
    /// per var j, for targets of the (vars, order-1) prefix: (source position, factor)
    dshift: Vec<Vec<(usize, u32)>>,
}

impl JetShape {
    fn build(vars: usize, order: usize) -> Self {
        let mut exps: Vec<Vec<u8>> = Vec::new();
        for degree in 0..=order {
            let mut level: Vec<Vec<u8>> = Vec::new();
            enumerate_level(vars, &mut vec![0u8; vars], 0, degree, &mut level);
            level.sort();
            exps.extend(level);
        }
        let m = exps.len();
        let mut pos: HashMap<Vec<u8>, usize> = HashMap::with_capacity(m);
        for (i, e) in exps.iter().enumerate() {
            pos.insert(e.clone(), i);
        }
        let mut prod = vec![u32::MAX; m * m];
        for i in 0..m {
            for j in 0..m {
                let total: usize = exps[i]
                    .iter()
                    .zip(&exps[j])
                    .map(|(a, b)| (a + b) as usize)
                    .sum();
                if total <= order {
                    let sum: Vec<u8> = exps[i].iter().zip(&exps[j]).map(|(a, b)| a + b).collect();
                    prod[i * m + j] = pos[&sum] as u32;
                }
            }
        }
        // degree-1 positions exist only for order >= 1; never read otherwise
        let var_pos = (0..vars)
            .map(|j| {
                if order == 0 {
                    return 0;
                }
                let mut e = vec![0u8; vars];
                e[j] = 1;
                pos[&e]
            })
            .collect();
        // prefix length of the (vars, order-1) layout inside this one
        let lower = if order == 0 {
            0
        } else {
            exps.iter()
                .filter(|e| e.iter().map(|&v| v as usize).sum::<usize>() < order)
                .count()
        };
        let mut dshift = Vec::with_capacity(vars);
        for j in 0..vars {
            let mut map = Vec::with_capacity(lower);
            for target in exps.iter().take(lower) {
                let mut src = target.clone();
                src[j] += 1;
                map.push((pos[&src], (target[j] + 1) as u32));
            }
            dshift.push(map);
        }
        JetShape {
            vars,
            order,
            exps,
            prod,
            var_pos,
            dshift,
        }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

fn enumerate_level(
    vars: usize,
    cur: &mut Vec<u8>,
    idx: usize,
    left: usize,
    out: &mut Vec<Vec<u8>>,
) {
    if idx == vars {
        if left == 0 {
            out.push(cur.clone());
        }
        return;
    }
    if idx + 1 == vars {
        cur[idx] = left as u8;
        out.push(cur.clone());
        cur[idx] = 0;
        return;
    }
    for v in 0..=left {
        cur[idx] = v as u8;
        enumerate_level(vars, cur, idx + 1, left - v, out);
    }
    cur[idx] = 0;
}

type ShapeCache = HashMap<(usize, usize), Arc<JetShape>>;

static SHAPE_CACHE: Lazy<Mutex<ShapeCache>> = Lazy::new(|| Mutex::new(HashMap::new()));

pub fn jet_shape(vars: usize, order: usize) -> Arc<JetShape> {
    let mut cache = SHAPE_CACHE.lock().expect("shape cache poisoned");
    cache
        .entry((vars, order))
        .or_insert_with(|| Arc::new(JetShape::build(vars, order)))
        .clone()
}

/// Scalar value together with its truncated Taylor expansion. A jet with no
/// shape is a plain constant and broadcasts against any shaped operand.
#[derive(Clone, Debug)]
pub struct Jet<R> {
    shape: Option<Arc<JetShape>>,
    c: Vec<R>,
}

impl<R: Real> Jet<R> {
    pub fn constant(value: R) -> Self {
        Jet {
            shape: None,
            c: vec![value],
        }
    }

    /// Canonical seed: `value + eps_index`, coefficients above degree 1 zero.
    pub fn variable(value: R, index: usize, vars: usize, order: usize) -> Self {
        let shape = jet_shape(vars, order);
        let mut c = vec![R::zero(); shape.len()];
        c[0] = value;
        if order >= 1 {
            c[shape.var_pos[index]] = R::one();
        }
        Jet {
            shape: Some(shape),
            c,
        }
    }

    /// Canonical seed vector for a point.
    pub fn seed_point(x: &[R], order: usize) -> Vec<Jet<R>> {
        let n = x.len();
        x.iter()
            .enumerate()
            .map(|(i, &v)| Jet::variable(v, i, n, order))
            .collect()
    }

    pub fn value(&self) -> R {
        self.c[0]
    }

    pub fn order(&self) -> usize {
        self.shape.as_ref().map_or(0, |s| s.order)
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    /// Coefficient of the degree-1 seed `eps_j` (the partial derivative).
    pub fn linear(&self, j: usize) -> R {
        match &self.shape {
            None => R::zero(),
            Some(s) => {
                if s.order == 0 {
                    R::zero()
                } else {
                    self.c[s.var_pos[j]]
                }
            }
        }
    }

    /// Restriction to total degree <= `order` (prefix of the graded layout).
    pub fn truncated(&self, order: usize) -> Jet<R> {
        match &self.shape {
            None => self.clone(),
            Some(s) => {
                if order >= s.order {
                    return self.clone();
                }
                let shape = jet_shape(s.vars, order);
                let c = self.c[..shape.len()].to_vec();
                Jet {
                    shape: Some(shape),
                    c,
                }
            }
        }
    }

    /// Zero-padded extension to a higher order. Exact only for jets that are
    /// polynomial of degree <= current order in the seeds (canonical seed
    /// points in particular).
    pub fn promoted(&self, vars: usize, order: usize) -> Jet<R> {
        match &self.shape {
            None => {
                let shape = jet_shape(vars, order);
                let mut c = vec![R::zero(); shape.len()];
                c[0] = self.c[0];
                Jet {
                    shape: Some(shape),
                    c,
                }
            }
            Some(s) => {
                assert_eq!(s.vars, vars, "jet promotion across variable counts");
                if order <= s.order {
                    return self.truncated(order);
                }
                let shape = jet_shape(vars, order);
                let mut c = vec![R::zero(); shape.len()];
                c[..self.c.len()].copy_from_slice(&self.c);
                Jet {
                    shape: Some(shape),
                    c,
                }
            }
        }
    }

    /// Derivative with respect to seed `j`, truncated to `out_order`.
    pub fn d_seed(&self, j: usize, out_order: usize) -> Jet<R> {
        match &self.shape {
            None => Jet::constant(R::zero()),
            Some(s) => {
                if s.order == 0 {
                    return Jet::constant(R::zero());
                }
                let shape = jet_shape(s.vars, (s.order - 1).min(out_order));
                let map = &s.dshift[j];
                let mut c = vec![R::zero(); shape.len()];
                for (k, slot) in c.iter_mut().enumerate() {
                    let (src, factor) = map[k];
                    *slot = self.c[src] * r(factor as f64);
                }
                Jet {
                    shape: Some(shape),
                    c,
                }
            }
        }
    }

    fn binary(&self, other: &Jet<R>, sub: bool) -> Jet<R> {
        match (&self.shape, &other.shape) {
            (None, None) => {
                let v = if sub {
                    self.c[0] - other.c[0]
                } else {
                    self.c[0] + other.c[0]
                };
                Jet::constant(v)
            }
            (Some(_), None) => {
                let mut out = self.clone();
                if sub {
                    out.c[0] -= other.c[0];
                } else {
                    out.c[0] += other.c[0];
                }
                out
            }
            (None, Some(_)) => {
                let mut out = other.clone();
                if sub {
                    for v in out.c.iter_mut() {
                        *v = -*v;
                    }
                }
                out.c[0] += self.c[0];
                out
            }
            (Some(sa), Some(sb)) => {
                assert_eq!(sa.vars, sb.vars, "jet variable counts differ");
                let order = sa.order.min(sb.order);
                let a = self.truncated(order);
                let b = other.truncated(order);
                let mut out = a;
                for (x, y) in out.c.iter_mut().zip(&b.c) {
                    if sub {
                        *x -= *y;
                    } else {
                        *x += *y;
                    }
                }
                out
            }
        }
    }

    fn mul_jet(&self, other: &Jet<R>) -> Jet<R> {
        match (&self.shape, &other.shape) {
            (None, None) => Jet::constant(self.c[0] * other.c[0]),
            (Some(_), None) => self.scale(other.c[0]),
            (None, Some(_)) => other.scale(self.c[0]),
            (Some(sa), Some(sb)) => {
                assert_eq!(sa.vars, sb.vars, "jet variable counts differ");
                let order = sa.order.min(sb.order);
                let a = self.truncated(order);
                let b = other.truncated(order);
                let shape = a.shape.clone().expect("truncated shaped jet");
                let m = shape.len();
                let mut c = vec![R::zero(); m];
                for (i, &ai) in a.c.iter().enumerate() {
                    if ai == R::zero() {
                        continue;
                    }
                    let row = &shape.prod[i * m..(i + 1) * m];
                    for (j, &bj) in b.c.iter().enumerate() {
                        let k = row[j];
                        if k != u32::MAX {
                            c[k as usize] += ai * bj;
                        }
                    }
                }
                Jet {
                    shape: Some(shape),
                    c,
                }
            }
        }
    }

    fn div_jet(&self, other: &Jet<R>) -> Jet<R> {
        if self.shape.is_none() && other.shape.is_none() {
            return Jet::constant(self.c[0] / other.c[0]);
        }
        // the order-0 part must equal the plain quotient exactly; the
        // recip-and-multiply route is off by an ulp there
        let mut q = self.mul_jet(&other.recip());
        q.c[0] = self.c[0] / other.c[0];
        q
    }

    pub fn scale(&self, k: R) -> Jet<R> {
        let mut out = self.clone();
        for v in out.c.iter_mut() {
            *v *= k;
        }
        out
    }

    pub fn neg(&self) -> Jet<R> {
        self.scale(-R::one())
    }

    /// Composition with a univariate analytic function given its scaled
    /// derivatives at the jet's value: `scaled[k] = g^(k)(c)/k!`. Horner in
    /// the nilpotent part.
    fn compose(&self, scaled: &[R]) -> Jet<R> {
        match &self.shape {
            None => Jet::constant(scaled[0]),
            Some(s) => {
                let d = s.order;
                let mut u = self.clone();
                u.c[0] = R::zero();
                let mut acc = Jet::constant(scaled[d]);
                for k in (0..d).rev() {
                    acc = acc.mul_jet(&u);
                    acc = acc.binary(&Jet::constant(scaled[k]), false);
                }
                acc
            }
        }
    }

    pub fn exp(&self) -> Jet<R> {
        let e = self.c[0].exp();
        let d = self.order();
        let scaled: Vec<R> = {
            let mut v = Vec::with_capacity(d + 1);
            let mut fk = e; // e / 0!
            v.push(fk);
            for k in 1..=d {
                fk /= r(k as f64);
                v.push(fk);
            }
            v
        };
        self.compose(&scaled)
    }

    pub fn ln(&self) -> Jet<R> {
        let cv = self.c[0];
        let d = self.order();
        let mut scaled = Vec::with_capacity(d + 1);
        scaled.push(cv.ln());
        // g^(k)/k! = (-1)^{k+1} / (k c^k)
        let mut cpow = R::one();
        for k in 1..=d {
            cpow *= cv;
            let sign = if k % 2 == 1 { R::one() } else { -R::one() };
            scaled.push(sign / (r::<R>(k as f64) * cpow));
        }
        self.compose(&scaled)
    }

    pub fn recip(&self) -> Jet<R> {
        let cv = self.c[0];
        let d = self.order();
        let mut scaled = Vec::with_capacity(d + 1);
        // g^(k)/k! = (-1)^k / c^{k+1}
        let mut v = R::one() / cv;
        scaled.push(v);
        for _ in 1..=d {
            v = -v / cv;
            scaled.push(v);
        }
        self.compose(&scaled)
    }

    pub fn powi(&self, n: i32) -> Jet<R> {
        if n == 0 {
            return Jet::constant(R::one());
        }
        let base = if n > 0 { self.clone() } else { self.recip() };
        let mut k = n.unsigned_abs();
        let mut acc = base.clone();
        k -= 1;
        let mut sq = base;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul_jet(&sq);
                k -= 1;
            } else {
                sq = sq.mul_jet(&sq);
                k >>= 1;
            }
        }
        acc
    }

    pub fn powf(&self, p: R) -> Jet<R> {
        // integer exponents stay exact and tolerate non-positive bases
        let rounded = p.round();
        if (p - rounded).abs() <= R::epsilon() && rounded.abs() <= r(16.0) {
            return self.powi(rounded.to_i32().unwrap_or(0));
        }
        let cv = self.c[0];
        let d = self.order();
        let mut scaled = Vec::with_capacity(d + 1);
        scaled.push(cv.powf(p));
        // g^(k)/k! = binom(p, k) c^{p-k}
        let mut binom = R::one();
        for k in 1..=d {
            binom *= (p - r(k as f64 - 1.0)) / r(k as f64);
            scaled.push(binom * cv.powf(p - r(k as f64)));
        }
        self.compose(&scaled)
    }

    pub fn sqrt(&self) -> Jet<R> {
        let cv = self.c[0];
        let s = cv.sqrt();
        let d = self.order();
        let mut scaled = Vec::with_capacity(d + 1);
        scaled.push(s);
        // g^(k)/k! = binom(1/2, k) sqrt(c) / c^k
        let mut binom = R::one();
        let mut cpow = R::one();
        for k in 1..=d {
            binom *= (r::<R>(0.5) - r(k as f64 - 1.0)) / r(k as f64);
            cpow *= cv;
            scaled.push(binom * s / cpow);
        }
        self.compose(&scaled)
    }
}

macro_rules! jet_binop {
    ($trait:ident, $method:ident, $sub:expr) => {
        impl<R: Real> std::ops::$trait for &Jet<R> {
            type Output = Jet<R>;
            fn $method(self, rhs: &Jet<R>) -> Jet<R> {
                self.binary(rhs, $sub)
            }
        }
        impl<R: Real> std::ops::$trait for Jet<R> {
            type Output = Jet<R>;
            fn $method(self, rhs: Jet<R>) -> Jet<R> {
                self.binary(&rhs, $sub)
            }
        }
        impl<R: Real> std::ops::$trait<&Jet<R>> for Jet<R> {
            type Output = Jet<R>;
            fn $method(self, rhs: &Jet<R>) -> Jet<R> {
                self.binary(rhs, $sub)
            }
        }
    };
}

jet_binop!(Add, add, false);
jet_binop!(Sub, sub, true);

impl<R: Real> std::ops::Mul for &Jet<R> {
    type Output = Jet<R>;
    fn mul(self, rhs: &Jet<R>) -> Jet<R> {
        self.mul_jet(rhs)
    }
}

impl<R: Real> std::ops::Mul for Jet<R> {
    type Output = Jet<R>;
    fn mul(self, rhs: Jet<R>) -> Jet<R> {
        self.mul_jet(&rhs)
    }
}

impl<R: Real> std::ops::Mul<&Jet<R>> for Jet<R> {
    type Output = Jet<R>;
    fn mul(self, rhs: &Jet<R>) -> Jet<R> {
        self.mul_jet(rhs)
    }
}

impl<R: Real> std::ops::Div for &Jet<R> {
    type Output = Jet<R>;
    fn div(self, rhs: &Jet<R>) -> Jet<R> {
        self.div_jet(rhs)
    }
}

impl<R: Real> std::ops::Div for Jet<R> {
    type Output = Jet<R>;
    fn div(self, rhs: Jet<R>) -> Jet<R> {
        self.div_jet(&rhs)
    }
}

impl<R: Real> std::ops::Neg for Jet<R> {
    type Output = Jet<R>;
    fn neg(self) -> Jet<R> {
        Jet::neg(&self)
    }
}

macro_rules! jet_scalar_ops {
    ($type:ty) => {
        impl<R: Real> std::ops::Mul<R> for $type {
            type Output = Jet<R>;
            fn mul(self, rhs: R) -> Jet<R> {
                self.scale(rhs)
            }
        }
        impl<R: Real> std::ops::Div<R> for $type {
            type Output = Jet<R>;
            fn div(self, rhs: R) -> Jet<R> {
                self.scale(R::one() / rhs)
            }
        }
        impl<R: Real> std::ops::Add<R> for $type {
            type Output = Jet<R>;
            fn add(self, rhs: R) -> Jet<R> {
                self.binary(&Jet::constant(rhs), false)
            }
        }
        impl<R: Real> std::ops::Sub<R> for $type {
            type Output = Jet<R>;
            fn sub(self, rhs: R) -> Jet<R> {
                self.binary(&Jet::constant(rhs), true)
            }
        }
    };
}

jet_scalar_ops!(&Jet<R>);
jet_scalar_ops!(Jet<R>);

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn order_zero_matches_plain_arithmetic() {
        let a = Jet::constant(2.5f64);
        let b = Jet::constant(-1.25);
        assert_eq!((&a + &b).value(), 1.25);
        assert_eq!((&a * &b).value(), -3.125);
        assert_eq!((&a / &b).value(), -2.0);
        assert_eq!(a.exp().value(), 2.5f64.exp());
    }

    #[test]
    fn first_order_matches_finite_differences() {
        let g = |x: f64| (x * x + 1.0).recip() * (0.3 * x).exp();
        let x0 = 0.7;
        let j = Jet::variable(x0, 0, 1, 1);
        let v = (&j * &j + 1.0).recip() * (&j * 0.3).exp();
        assert_relative_eq!(v.value(), g(x0), epsilon = 1e-14);
        assert_relative_eq!(v.linear(0), fd(g, x0), epsilon = 1e-8);
    }

    #[test]
    fn second_order_mixed_partial() {
        // f(x, y) = x^2 * y: d2f/dxdy = 2x
        let x = Jet::variable(1.5f64, 0, 2, 2);
        let y = Jet::variable(-0.5, 1, 2, 2);
        let f = &(&x * &x) * &y;
        let fx = f.d_seed(0, 1);
        assert_relative_eq!(fx.linear(1), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn powf_integer_shortcut_handles_negative_base() {
        let x = Jet::variable(-2.0f64, 0, 1, 1);
        let p = x.powf(3.0);
        assert_relative_eq!(p.value(), -8.0);
        assert_relative_eq!(p.linear(0), 12.0);
    }

    #[test]
    fn promotion_keeps_canonical_seed() {
        let x = Jet::variable(0.3f64, 0, 2, 1);
        let p = x.promoted(2, 3);
        assert_eq!(p.order(), 3);
        assert_eq!(p.value(), 0.3);
        assert_eq!(p.linear(0), 1.0);
    }

    #[test]
    fn truncation_is_prefix() {
        let x = Jet::variable(0.4f64, 0, 2, 3);
        let y = Jet::variable(1.4, 1, 2, 3);
        let f = (&x * &y).exp();
        let t = f.truncated(1);
        assert_relative_eq!(t.value(), f.value());
        assert_relative_eq!(t.linear(0), f.linear(0));
        assert_relative_eq!(t.linear(1), f.linear(1));
    }
}
