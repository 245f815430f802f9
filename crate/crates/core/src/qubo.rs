//! Quadratic unconstrained binary optimization and its reduction to
//! training a single linear layer with binary weights under squared error.
//!
//! A QUBO instance minimizes `z'Az + z'b + c` over `z` in `{0,1}^d`, with
//! `A` symmetric positive definite. Factor `A = LL'` and set `N = d`,
//! `X = sqrt(N) L'`, `Y = -(sqrt(N)/2) L^-1 b`. Then for every binary `W`
//!
//! ```text
//! (1/N) ||XW - Y||^2 = W'AW + W'b + Y'Y/N
//! ```
//!
//! so both problems share their minimizers. The offset `c' = Nc - Y'Y`
//! makes the values equal too: `(1/N)||XW - Y||^2 + c'/N = z'Az + z'b + c`.
//!
//! ```
//! use conntra::qubo::{brute_force_qubo, brute_force_training, reduce_qubo, Matrix, QuboInstance};
//!
//! let q = QuboInstance::new(Matrix::identity(2), vec![-3.0, 1.0], 0.0).unwrap();
//! let (z, value) = brute_force_qubo(&q).unwrap();
//! assert_eq!((z, value), (vec![true, false], -2.0));
//!
//! let t = reduce_qubo(&q).unwrap();
//! let (w, _) = brute_force_training(&t).unwrap();
//! assert_eq!(w, vec![true, false]);
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Location, Result};

/// Largest dimension the brute-force solvers accept.
pub const MAX_BRUTE_FORCE_DIM: usize = 24;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!("{} values do not fill a {rows} x {cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("rows have different lengths"));
        }
        Self::new(rows.len(), cols, rows.concat())
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

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::invalid(format!(
                "cannot multiply {} x {} by {} x {}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "vector length must match column count");
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `v' M v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.matvec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Replaces each off-diagonal pair with its mean. The quadratic form
/// `z'Az` is unchanged.
pub fn symmetrize(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::invalid(format!("cannot symmetrize a {} x {} matrix", a.rows, a.cols)));
    }
    let mut s = a.clone();
    for i in 0..a.rows {
        for j in i + 1..a.cols {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            s[(i, j)] = m;
            s[(j, i)] = m;
        }
    }
    Ok(s)
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::invalid(format!("matrix is {} x {}, not square", a.rows, a.cols)));
    }
    let tol = 1e-12 * a.max_abs().max(1.0);
    for i in 0..a.rows {
        for j in i + 1..a.cols {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(Error::invalid(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Lower-triangular `L` with positive diagonal and `LL' = A`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot is not above
/// `1e-12 * max|A|`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    check_symmetric(a)?;
    let d = a.rows;
    let threshold = 1e-12 * a.max_abs();
    let mut l = Matrix::zeros(d, d);
    for j in 0..d {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot.is_nan() || pivot <= threshold {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..d {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `Lx = b` for lower-triangular `L`.
pub fn forward_substitution(l: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    if !l.is_square() || b.len() != l.rows {
        return Err(Error::invalid("forward substitution needs a square matrix and a matching vector"));
    }
    let mut x = vec![0.0; b.len()];
    for i in 0..b.len() {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// `min z'Az + z'b + c` over binary `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboInstance {
    a: Matrix,
    b: Vec<f64>,
    c: f64,
}

impl QuboInstance {
    /// `a` must be symmetric (within `1e-12 * max|A|`) and positive definite.
    pub fn new(a: Matrix, b: Vec<f64>, c: f64) -> Result<Self> {
        if a.rows == 0 {
            return Err(Error::invalid("QUBO dimension must be at least 1"));
        }
        if b.len() != a.rows {
            return Err(Error::invalid(format!("b has {} entries, A is {} x {}", b.len(), a.rows, a.cols)));
        }
        if a.data.iter().chain(&b).chain(std::iter::once(&c)).any(|v| !v.is_finite()) {
            return Err(Error::invalid("QUBO instance has non-finite entries"));
        }
        cholesky(&a)?;
        Ok(Self { a, b, c })
    }

    /// Like [`QuboInstance::new`] after symmetrizing `a`.
    pub fn from_general(a: &Matrix, b: Vec<f64>, c: f64) -> Result<Self> {
        Self::new(symmetrize(a)?, b, c)
    }

    pub fn dim(&self) -> usize {
        self.a.rows
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn value(&self, z: &[bool]) -> f64 {
        qubo_value(self, z)
    }
}

/// `z'Az + z'b + c`.
pub fn qubo_value(q: &QuboInstance, z: &[bool]) -> f64 {
    let d = q.dim();
    assert_eq!(z.len(), d, "assignment length must match the dimension");
    let mut v = q.c;
    for i in (0..d).filter(|&i| z[i]) {
        v += q.b[i];
        for j in (0..d).filter(|&j| z[j]) {
            v += q.a[(i, j)];
        }
    }
    v
}

/// Single linear layer `P = XW` with binary weights, squared error against
/// targets `Y`, and a constant offset.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTrainingInstance {
    /// N x d inputs, one sample per row.
    x: Matrix,
    y: Vec<f64>,
    offset: f64,
}

impl BinaryTrainingInstance {
    pub fn new(x: Matrix, y: Vec<f64>, offset: f64) -> Result<Self> {
        if x.rows == 0 || x.cols == 0 {
            return Err(Error::invalid("training instance needs at least one sample and one weight"));
        }
        if y.len() != x.rows {
            return Err(Error::invalid(format!("{} targets for {} samples", y.len(), x.rows)));
        }
        if x.data.iter().chain(&y).chain(std::iter::once(&offset)).any(|v| !v.is_finite()) {
            return Err(Error::invalid("training instance has non-finite entries"));
        }
        Ok(Self { x, y, offset })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// The scalar `c'`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn samples(&self) -> usize {
        self.x.rows
    }

    pub fn dim(&self) -> usize {
        self.x.cols
    }
}

/// `(1/N) ||XW - Y||^2`.
pub fn training_value(t: &BinaryTrainingInstance, w: &[bool]) -> f64 {
    assert_eq!(w.len(), t.dim(), "assignment length must match the dimension");
    let n = t.samples();
    let mut sq = 0.0;
    for s in 0..n {
        let row = t.x.row(s);
        let p: f64 = row.iter().zip(w).filter(|(_, &on)| on).map(|(x, _)| x).sum();
        let r = p - t.y[s];
        sq += r * r;
    }
    sq / n as f64
}

/// [`training_value`] plus `c'/N`; equals the QUBO objective for reduced
/// instances.
pub fn shifted_training_value(t: &BinaryTrainingInstance, w: &[bool]) -> f64 {
    training_value(t, w) + t.offset / t.samples() as f64
}

/// Builds the training instance whose minimizers are the QUBO minimizers.
pub fn reduce_qubo(q: &QuboInstance) -> Result<BinaryTrainingInstance> {
    let d = q.dim();
    let n = d as f64;
    let l = cholesky(&q.a)?;
    let x = Matrix::new(d, d, l.transpose().data.iter().map(|v| n.sqrt() * v).collect())?;
    let y: Vec<f64> = forward_substitution(&l, &q.b)?
        .into_iter()
        .map(|v| -0.5 * n.sqrt() * v)
        .collect();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    BinaryTrainingInstance::new(x, y, n * q.c - yy)
}

fn check_capacity(d: usize) -> Result<()> {
    if d > MAX_BRUTE_FORCE_DIM {
        return Err(Error::Capacity {
            dimension: d,
            limit: MAX_BRUTE_FORCE_DIM,
        });
    }
    Ok(())
}

/// Assignment number `m` in lexicographic order, `z[0]` most significant.
fn assignment(m: u32, d: usize, z: &mut [bool]) {
    for (i, zi) in z.iter_mut().enumerate() {
        *zi = (m >> (d - 1 - i)) & 1 == 1;
    }
}

fn brute_force(d: usize, mut f: impl FnMut(&[bool]) -> f64) -> Result<(Vec<bool>, f64)> {
    check_capacity(d)?;
    let mut z = vec![false; d];
    let mut best = (z.clone(), f(&z));
    for m in 1..1u32 << d {
        assignment(m, d, &mut z);
        let v = f(&z);
        if v < best.1 {
            best = (z.clone(), v);
        }
    }
    Ok(best)
}

fn argmin_set(d: usize, tolerance: f64, mut f: impl FnMut(&[bool]) -> f64) -> Result<Vec<Vec<bool>>> {
    check_capacity(d)?;
    let mut z = vec![false; d];
    let values: Vec<f64> = (0..1u32 << d)
        .map(|m| {
            assignment(m, d, &mut z);
            f(&z)
        })
        .collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= min + tolerance)
        .map(|(m, _)| {
            let mut z = vec![false; d];
            assignment(m as u32, d, &mut z);
            z
        })
        .collect())
}

/// Exact minimizer by enumeration; ties go to the lexicographically
/// smallest assignment.
pub fn brute_force_qubo(q: &QuboInstance) -> Result<(Vec<bool>, f64)> {
    brute_force(q.dim(), |z| qubo_value(q, z))
}

/// Exact minimizer of `(1/N)||XW - Y||^2`; same tie-break as
/// [`brute_force_qubo`].
pub fn brute_force_training(t: &BinaryTrainingInstance) -> Result<(Vec<bool>, f64)> {
    brute_force(t.dim(), |w| training_value(t, w))
}

/// Every assignment within `tolerance` of the QUBO minimum, in
/// lexicographic order.
pub fn qubo_argmin_set(q: &QuboInstance, tolerance: f64) -> Result<Vec<Vec<bool>>> {
    argmin_set(q.dim(), tolerance, |z| qubo_value(q, z))
}

/// Every assignment within `tolerance` of the training minimum.
pub fn training_argmin_set(t: &BinaryTrainingInstance, tolerance: f64) -> Result<Vec<Vec<bool>>> {
    argmin_set(t.dim(), tolerance, |w| training_value(t, w))
}

/// Random SPD instance `A = M'M + dI` with entries of `M`, `b` and `c`
/// uniform in `[-1, 1]`.
pub fn random_instance(d: usize, rng: &mut crate::rng::SeededRng) -> Result<QuboInstance> {
    use rand::Rng;
    let m = Matrix::new(d, d, (0..d * d).map(|_| rng.random_range(-1.0..=1.0)).collect())?;
    let mut a = m.transpose().matmul(&m)?;
    for i in 0..d {
        a[(i, i)] += d as f64;
    }
    let a = symmetrize(&a)?;
    let b = (0..d).map(|_| rng.random_range(-1.0..=1.0) * d as f64).collect();
    QuboInstance::new(a, b, rng.random_range(-1.0..=1.0))
}

/// Text lines with their 1-based line numbers, skipping blank lines.
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            if !line.trim().is_empty() {
                self.last = i + 1;
                return Ok((i + 1, line));
            }
        }
        Err(Error::format(Location::Line(self.last + 1), format!("unexpected end of input, expected {what}")))
    }

    fn reals(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let (no, line) = self.next_line(what)?;
        let values = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(Location::Line(no), format!("`{t}` is not a finite real")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != count {
            return Err(Error::format(
                Location::Line(no),
                format!("{what}: expected {count} values, found {}", values.len()),
            ));
        }
        Ok(values)
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let (no, line) = self.next_line(what)?;
        line.trim()
            .parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::format(Location::Line(no), format!("{what} must be a positive integer")))
    }

    fn finish(&mut self) -> Result<()> {
        match self.inner.by_ref().find(|(_, l)| !l.trim().is_empty()) {
            Some((i, _)) => Err(Error::format(Location::Line(i + 1), "unexpected trailing content")),
            None => Ok(()),
        }
    }
}

fn write_row(out: &mut String, row: &[f64]) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v:?}").expect("writing to a string");
    }
    out.push('\n');
}

/// Parses `d`, then `d` rows of `A`, one row `b`, one line `c`.
pub fn parse_qubo(text: &str) -> Result<QuboInstance> {
    let mut lines = Lines::new(text);
    let d = lines.count("dimension d")?;
    let mut a = Vec::with_capacity(d * d);
    for i in 0..d {
        a.extend(lines.reals(d, &format!("row {} of A", i + 1))?);
    }
    let b = lines.reals(d, "b")?;
    let c = lines.reals(1, "c")?[0];
    let at = lines.last;
    lines.finish()?;
    QuboInstance::new(Matrix::new(d, d, a)?, b, c).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => e,
        e => Error::format(Location::Line(at), e.to_string()),
    })
}

pub fn format_qubo(q: &QuboInstance) -> String {
    let mut out = format!("{}\n", q.dim());
    for i in 0..q.dim() {
        write_row(&mut out, q.a.row(i));
    }
    write_row(&mut out, &q.b);
    write_row(&mut out, &[q.c]);
    out
}

/// Parses `N d`, then `N` rows of `X`, one row `Y`, one line `c'`.
pub fn parse_training_instance(text: &str) -> Result<BinaryTrainingInstance> {
    let mut lines = Lines::new(text);
    let (no, header) = lines.next_line("`N d` header")?;
    let dims: Vec<usize> = header.split_whitespace().filter_map(|t| t.parse().ok()).collect();
    let [n, d] = dims[..] else {
        return Err(Error::format(Location::Line(no), "header must be two positive integers `N d`"));
    };
    if n == 0 || d == 0 || header.split_whitespace().count() != 2 {
        return Err(Error::format(Location::Line(no), "header must be two positive integers `N d`"));
    }
    let mut x = Vec::with_capacity(n * d);
    for i in 0..n {
        x.extend(lines.reals(d, &format!("row {} of X", i + 1))?);
    }
    let y = lines.reals(n, "Y")?;
    let offset = lines.reals(1, "offset")?[0];
    lines.finish()?;
    BinaryTrainingInstance::new(Matrix::new(n, d, x)?, y, offset)
}

pub fn format_training_instance(t: &BinaryTrainingInstance) -> String {
    let mut out = format!("{} {}\n", t.samples(), t.dim());
    for i in 0..t.samples() {
        write_row(&mut out, t.x.row(i));
    }
    write_row(&mut out, &t.y);
    write_row(&mut out, &[t.offset]);
    out
}
