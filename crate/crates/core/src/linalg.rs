//! Small dense complex linear algebra.
//!
//! Everything in this crate lives in Hilbert spaces of at most a few qubits,
//! so matrices are plain row-major `Vec`s and the eigensolver is a cyclic
//! Jacobi sweep rather than anything asymptotically clever.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance for accepting a matrix as Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Off-diagonal Frobenius norm at which Jacobi iteration stops.
pub const EIG_CONV_TOL: f64 = 1e-12;
/// Allowed drift of the squared norm under unitary evolution.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance used when checking that a gate is unitary.
pub const UNITARY_TOL: f64 = 1e-10;

const MAX_JACOBI_SWEEPS: usize = 100;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for literals.
    pub fn from_rows<R: AsRef<[Complex64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), n_cols, "ragged matrix literal");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: n_rows,
            cols: n_cols,
            data,
        }
    }

    /// Real diagonal matrix.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    pub fn pauli_x() -> Self {
        Self::from_rows(&[[ZERO, ONE], [ONE, ZERO]])
    }

    pub fn pauli_y() -> Self {
        Self::from_rows(&[[ZERO, -I], [I, ZERO]])
    }

    pub fn pauli_z() -> Self {
        Self::from_rows(&[[ONE, ZERO], [ZERO, -ONE]])
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

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entry-wise modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Largest entry-wise deviation from `other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (i..self.cols).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol))
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.is_square()
            && matmul(&dagger(self), self)
                .map(|p| p.max_abs_diff(&CMatrix::identity(self.rows)) <= tol)
                .unwrap_or(false)
    }

    /// Matrix-vector product written into `out`.
    pub fn mul_vec_into(&self, v: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).iter().zip(v).fold(ZERO, |acc, (a, b)| acc + a * b);
        }
    }

    /// Applies the single-qubit `gate` to rows of this matrix, i.e. left
    /// multiplication by the embedded gate. Used to build circuit unitaries
    /// column-parallel.
    pub(crate) fn left_apply_1q(&mut self, gate: &[Complex64; 4], n_qubits: usize, qubit: usize) {
        let stride = 1usize << (n_qubits - qubit);
        let cols = self.cols;
        for base in 0..self.rows {
            if base & stride != 0 {
                continue;
            }
            let (r0, r1) = (base * cols, (base | stride) * cols);
            for c in 0..cols {
                let a0 = self.data[r0 + c];
                let a1 = self.data[r1 + c];
                self.data[r0 + c] = gate[0] * a0 + gate[1] * a1;
                self.data[r1 + c] = gate[2] * a0 + gate[3] * a1;
            }
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(r) {
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    /// Panics on a dimension mismatch; use [`matmul`] for a checked product.
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        matmul(self, rhs).expect("matrix dimension mismatch")
    }
}

pub fn matmul(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = CMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == ZERO {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = CMatrix::zeros(rows, cols);
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let s = a[(ar, ac)];
            for br in 0..b.rows {
                for bc in 0..b.cols {
                    out[(ar * b.rows + br, ac * b.cols + bc)] = s * b[(br, bc)];
                }
            }
        }
    }
    out
}

/// Conjugate transpose.
pub fn dagger(a: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(a.cols, a.rows);
    for r in 0..a.rows {
        for c in 0..a.cols {
            out[(c, r)] = a[(r, c)].conj();
        }
    }
    out
}

/// `a b - b a`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    Ok(&matmul(a, b)? - &matmul(b, a)?)
}

/// Eigenvalues of a Hermitian matrix in ascending order, by cyclic Jacobi
/// rotations.
pub fn hermitian_eigvals(h: &CMatrix) -> Result<Vec<f64>> {
    if !h.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            h.rows, h.cols
        )));
    }
    if !h.is_hermitian(HERMITICITY_TOL) {
        return Err(Error::NotHermitian);
    }
    let n = h.rows;
    let mut a = h.clone();
    let scale = a.frobenius_norm().max(1.0);

    for _ in 0..MAX_JACOBI_SWEEPS {
        if off_diagonal_norm(&a) < EIG_CONV_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                jacobi_rotate(&mut a, p, q);
            }
        }
    }
    if off_diagonal_norm(&a) >= EIG_CONV_TOL * scale {
        return Err(Error::NoConvergence(MAX_JACOBI_SWEEPS));
    }

    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows {
        for j in 0..a.cols {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Zeroes `a[p][q]` with a unitary similarity acting on rows/cols p and q.
fn jacobi_rotate(a: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // Phase e^{-i arg(apq)} on basis vector q makes the pivot real, then a real
    // rotation diagonalises the 2x2 block.
    let phase = apq / r;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // W = diag(1, conj(phase)) * [[c, s], [-s, c]]
    let w = [
        Complex64::new(c, 0.0),
        Complex64::new(s, 0.0),
        -phase.conj() * s,
        phase.conj() * c,
    ];
    let n = a.rows;
    // A <- A W (columns p, q)
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * w[0] + akq * w[2];
        a[(k, q)] = akp * w[1] + akq * w[3];
    }
    // A <- W^dagger A (rows p, q)
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = w[0].conj() * apk + w[2].conj() * aqk;
        a[(q, k)] = w[1].conj() * apk + w[3].conj() * aqk;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
}

/// Sum of singular values, from the spectrum of `m^dagger m`.
///
/// Works for any square matrix; commutators of Hermitian matrices are
/// anti-Hermitian and go through the same path.
pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "trace norm needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    if m.max_abs() == 0.0 {
        return Ok(0.0);
    }
    let mut gram = matmul(&dagger(m), m)?;
    // Symmetrise away rounding so the Hermiticity gate never trips.
    let n = gram.rows;
    for i in 0..n {
        gram[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (gram[(i, j)] + gram[(j, i)].conj()) * 0.5;
            gram[(i, j)] = avg;
            gram[(j, i)] = avg.conj();
        }
    }
    Ok(hermitian_eigvals(&gram)?.into_iter().map(|l| l.max(0.0).sqrt()).sum())
}

/// Pure state on `n_qubits` qubits. Qubit 1 is the most significant bit of
/// the amplitude index.
///
/// Branches produced by projective measurement are sub-normalised and carry
/// their probability as squared norm.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero_state(n_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Self { n_qubits, amps }
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != 1 << n_qubits {
            return Err(Error::Dimension(format!(
                "{n_qubits} qubits need {} amplitudes, got {}",
                1usize << n_qubits,
                amps.len()
            )));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("amplitude".into()));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Applies a 2x2 unitary to `qubit` (1-based).
    pub fn apply_1q_gate(&mut self, gate: &CMatrix, qubit: usize) -> Result<()> {
        check_gate(gate, 2)?;
        self.check_qubit(qubit)?;
        let g = [gate[(0, 0)], gate[(0, 1)], gate[(1, 0)], gate[(1, 1)]];
        self.apply_1q_raw(&g, qubit);
        Ok(())
    }

    pub(crate) fn apply_1q_raw(&mut self, g: &[Complex64; 4], qubit: usize) {
        let stride = 1usize << (self.n_qubits - qubit);
        for base in 0..self.amps.len() {
            if base & stride != 0 {
                continue;
            }
            let a0 = self.amps[base];
            let a1 = self.amps[base | stride];
            self.amps[base] = g[0] * a0 + g[1] * a1;
            self.amps[base | stride] = g[2] * a0 + g[3] * a1;
        }
    }

    /// Applies a 4x4 unitary to the qubit pair `(q1, q2)`; `q1` is the more
    /// significant bit of the gate's own basis index.
    pub fn apply_2q_gate(&mut self, gate: &CMatrix, q1: usize, q2: usize) -> Result<()> {
        check_gate(gate, 4)?;
        self.check_qubit(q1)?;
        self.check_qubit(q2)?;
        if q1 == q2 {
            return Err(Error::InvalidArgument(format!(
                "two-qubit gate needs distinct qubits, got {q1} twice"
            )));
        }
        let s1 = 1usize << (self.n_qubits - q1);
        let s2 = 1usize << (self.n_qubits - q2);
        let offsets = [0, s2, s1, s1 | s2];
        let mut local = [ZERO; 4];
        for base in 0..self.amps.len() {
            if base & (s1 | s2) != 0 {
                continue;
            }
            for (l, off) in local.iter_mut().zip(offsets) {
                *l = self.amps[base | off];
            }
            for (r, off) in offsets.iter().enumerate() {
                self.amps[base | off] = (0..4).fold(ZERO, |acc, c| acc + gate[(r, c)] * local[c]);
            }
        }
        Ok(())
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit == 0 || qubit > self.n_qubits {
            return Err(Error::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }
}

fn check_gate(gate: &CMatrix, dim: usize) -> Result<()> {
    if gate.rows() != dim || gate.cols() != dim {
        return Err(Error::Dimension(format!(
            "expected a {dim}x{dim} gate, got {}x{}",
            gate.rows(),
            gate.cols()
        )));
    }
    if !gate.is_unitary(UNITARY_TOL) {
        return Err(Error::NotUnitary);
    }
    Ok(())
}

/// `I ⊗ ... ⊗ gate ⊗ ... ⊗ I` with `gate` on the 1-based `qubit`.
pub fn embed_1q(gate: &CMatrix, n_qubits: usize, qubit: usize) -> CMatrix {
    let mut out = CMatrix::identity(1);
    for q in 1..=n_qubits {
        let factor = if q == qubit { gate.clone() } else { CMatrix::identity(2) };
        out = kron(&out, &factor);
    }
    out
}
