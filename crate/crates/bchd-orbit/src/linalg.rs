//! Small dense linear algebra: LU solves, Kronecker products, symmetric Jacobi
//! eigenvalues, and general eigenvalues through the characteristic polynomial.
//! Sized for the state dimensions this crate works with (n <= 8).

use num_complex::Complex;

use crate::scalar::{r, Real};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DMat<R> {
    rows: usize,
    cols: usize,
    data: Vec<R>,
}

impl<R: Real> DMat<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![R::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = R::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<R>]) -> Self {
        let nr = rows.len();
        let nc = if nr == 0 { 0 } else { rows[0].len() };
        assert!(rows.iter().all(|r| r.len() == nc), "ragged rows");
        Self {
            rows: nr,
            cols: nc,
            data: rows.concat(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> R) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn matvec(&self, x: &[R]) -> Vec<R> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        out
    }

    pub fn scale(&self, k: R) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= k;
        }
        out
    }

    pub fn frobenius_norm(&self) -> R {
        self.data.iter().map(|&v| v * v).sum::<R>().sqrt()
    }

    pub fn norm_1(&self) -> R {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum())
            .fold(R::zero(), R::max)
    }

    pub fn max_abs_entry(&self) -> R {
        self.data.iter().fold(R::zero(), |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> R {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn is_symmetric(&self, tol: R) -> bool {
        if !self.is_square() {
            return false;
        }
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)]) / r(2.0)
        })
    }

    /// Kronecker product `self (x) other`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.rows * other.rows, self.cols * other.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out[(i * other.rows + k, j * other.cols + l)] =
                            self[(i, j)] * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn lu(&self) -> Option<Lu<R>> {
        Lu::factor(self)
    }

    /// 1-norm condition number via explicit inverse (fine for n <= 8).
    pub fn cond_1(&self) -> Option<R> {
        let lu = self.lu()?;
        let inv = lu.inverse();
        Some(self.norm_1() * inv.norm_1())
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Ascending.
    pub fn symmetric_eigenvalues(&self) -> Vec<R> {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let tol = R::epsilon() * self.frobenius_norm().max(R::one());
        for _sweep in 0..60 {
            let mut off = R::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off.sqrt() <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= tol * r(1e-3) {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (r::<R>(2.0) * apq);
                    let t = {
                        let s = if theta >= R::zero() {
                            R::one()
                        } else {
                            -R::one()
                        };
                        s / (theta.abs() + (theta * theta + R::one()).sqrt())
                    };
                    let c = R::one() / (t * t + R::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<R> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    pub fn max_symmetric_eigenvalue(&self) -> R {
        *self
            .symmetric_eigenvalues()
            .last()
            .expect("empty matrix has no eigenvalues")
    }

    /// General (possibly complex) eigenvalues through the characteristic
    /// polynomial: Faddeev-LeVerrier coefficients, then closed-form or Aberth
    /// roots. Intended for n <= 8.
    pub fn eigenvalues(&self) -> Vec<Complex<R>> {
        assert!(self.is_square());
        let n = self.rows;
        if n == 0 {
            return Vec::new();
        }
        // scale to tame coefficient growth; eigenvalues scale back linearly
        let s = self.max_abs_entry().max(R::epsilon());
        let b = self.scale(R::one() / s);
        // p(x) = x^n + c[0] x^{n-1} + ... + c[n-1]
        let mut coeffs = vec![R::zero(); n];
        let mut m = b.clone();
        for k in 1..=n {
            let ck = -m.trace() / r(k as f64);
            coeffs[k - 1] = ck;
            if k < n {
                let mut shifted = m.clone();
                for i in 0..n {
                    shifted[(i, i)] += ck;
                }
                m = b.matmul(&shifted);
            }
        }
        polynomial_roots(&coeffs)
            .into_iter()
            .map(|z| z * Complex::new(s, R::zero()))
            .collect()
    }
}

impl<R> std::ops::Index<(usize, usize)> for DMat<R> {
    type Output = R;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &R {
        &self.data[i * self.cols + j]
    }
}

impl<R> std::ops::IndexMut<(usize, usize)> for DMat<R> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut R {
        &mut self.data[i * self.cols + j]
    }
}

/// LU factorization with partial pivoting.
pub struct Lu<R> {
    lu: DMat<R>,
    piv: Vec<usize>,
}

impl<R: Real> Lu<R> {
    pub fn factor(a: &DMat<R>) -> Option<Self> {
        assert!(a.is_square());
        let n = a.rows;
        let mut lu = a.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in (k + 1)..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == R::zero() || !best.is_finite() {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                piv.swap(k, p);
            }
            for i in (k + 1)..n {
                let f = lu[(i, k)] / lu[(k, k)];
                lu[(i, k)] = f;
                for j in (k + 1)..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] -= f * v;
                }
            }
        }
        Some(Self { lu, piv })
    }

    pub fn solve(&self, b: &[R]) -> Vec<R> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<R> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for j in 0..i {
                let f = self.lu[(i, j)] * x[j];
                x[i] -= f;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let f = self.lu[(i, j)] * x[j];
                x[i] -= f;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> DMat<R> {
        let n = self.lu.rows;
        let mut inv = DMat::zeros(n, n);
        for j in 0..n {
            let mut e = vec![R::zero(); n];
            e[j] = R::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// Roots of the monic real polynomial `x^m + c[0] x^{m-1} + ... + c[m-1]`.
pub fn polynomial_roots<R: Real>(coeffs: &[R]) -> Vec<Complex<R>> {
    let m = coeffs.len();
    match m {
        0 => Vec::new(),
        1 => vec![Complex::new(-coeffs[0], R::zero())],
        2 => {
            let (b, c) = (coeffs[0], coeffs[1]);
            let disc = b * b - r::<R>(4.0) * c;
            if disc >= R::zero() {
                let sq = disc.sqrt();
                // stable quadratic formula
                let q = -(b + b.signum() * sq) / r(2.0);
                if q == R::zero() {
                    vec![
                        Complex::new(R::zero(), R::zero()),
                        Complex::new(-b, R::zero()),
                    ]
                } else {
                    vec![Complex::new(q, R::zero()), Complex::new(c / q, R::zero())]
                }
            } else {
                let re = -b / r(2.0);
                let im = (-disc).sqrt() / r(2.0);
                vec![Complex::new(re, im), Complex::new(re, -im)]
            }
        }
        _ => aberth(coeffs),
    }
}

fn poly_eval<R: Real>(coeffs: &[R], z: Complex<R>) -> (Complex<R>, Complex<R>) {
    // returns (p(z), p'(z)) for monic p
    let mut p = Complex::new(R::one(), R::zero());
    let mut dp = Complex::new(R::zero(), R::zero());
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + Complex::new(c, R::zero());
    }
    (p, dp)
}

fn aberth<R: Real>(coeffs: &[R]) -> Vec<Complex<R>> {
    let m = coeffs.len();
    let radius = R::one() + coeffs.iter().fold(R::zero(), |a, &c| a.max(c.abs()));
    let mut z: Vec<Complex<R>> = (0..m)
        .map(|k| {
            let ang = r::<R>(2.0 * std::f64::consts::PI) * r(k as f64) / r(m as f64) + r(0.37);
            Complex::from_polar(radius, ang)
        })
        .collect();
    let tol = R::epsilon() * r(64.0) * radius;
    for _ in 0..200 {
        let mut moved = R::zero();
        for i in 0..m {
            let (p, dp) = poly_eval(coeffs, z[i]);
            if p.norm() == R::zero() {
                continue;
            }
            let newton = p / dp;
            let mut sum = Complex::new(R::zero(), R::zero());
            for j in 0..m {
                if j != i {
                    sum += Complex::new(R::one(), R::zero()) / (z[i] - z[j]);
                }
            }
            let denom = Complex::new(R::one(), R::zero()) - newton * sum;
            let step = if denom.norm() > R::epsilon() {
                newton / denom
            } else {
                newton
            };
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < tol {
            break;
        }
    }
    // polish and collapse tiny imaginary parts
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = poly_eval(coeffs, *zi);
            if dp.norm() > R::epsilon() {
                *zi -= p / dp;
            }
        }
        if zi.im.abs() < r::<R>(1e-9) * (R::one() + zi.re.abs()) {
            zi.im = R::zero();
        }
    }
    z.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    z
}

pub fn vec_norm2<R: Real>(x: &[R]) -> R {
    x.iter().map(|&v| v * v).sum::<R>().sqrt()
}

pub fn vec_norm_inf<R: Real>(x: &[R]) -> R {
    x.iter().fold(R::zero(), |m, v| m.max(v.abs()))
}

pub fn vec_sub<R: Real>(a: &[R], b: &[R]) -> Vec<R> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}
