//! The per-observable ansatz and the non-commutativity score.
//!
//! Every observable is `Q = V(θ) D V(θ)^dagger` with `D = Z` on qubit 1. `V` is
//! one layer of `RX · RZ · RX` on each qubit followed by a line of
//! nearest-neighbour XX couplers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ZERO};

/// Shape of the model: how many observables and how many qubits each acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzConfig {
    pub n_observables: usize,
    pub n_qubits: usize,
}

impl AnsatzConfig {
    /// One qubit per observable.
    pub fn new(n_observables: usize) -> Result<Self> {
        Self::with_qubits(n_observables, n_observables)
    }

    pub fn with_qubits(n_observables: usize, n_qubits: usize) -> Result<Self> {
        if n_observables == 0 {
            return Err(Error::InvalidArgument("need at least one observable".into()));
        }
        if n_qubits == 0 || n_qubits > 12 {
            return Err(Error::InvalidArgument(format!(
                "n_qubits must be in 1..=12, got {n_qubits}"
            )));
        }
        Ok(Self {
            n_observables,
            n_qubits,
        })
    }

    /// `4 n_qubits - 1`.
    pub fn params_per_observable(&self) -> usize {
        4 * self.n_qubits - 1
    }

    pub fn total_params(&self) -> usize {
        self.n_observables * self.params_per_observable()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }
}

/// Angles of one observable's `V(θ)`.
///
/// Layout: `[x1, z, x2]` for qubit 1, then qubit 2, ..., followed by one
/// coupler angle per pair `(1,2), (2,3), ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservableParams(Vec<f64>);

impl ObservableParams {
    pub fn new(cfg: &AnsatzConfig, values: Vec<f64>) -> Result<Self> {
        if values.len() != cfg.params_per_observable() {
            return Err(Error::Dimension(format!(
                "{} qubits need {} angles per observable, got {}",
                cfg.n_qubits,
                cfg.params_per_observable(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observable angles".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(cfg: &AnsatzConfig) -> Self {
        Self(vec![0.0; cfg.params_per_observable()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// `(θ_x1, θ_z, θ_x2)` of the 1-based `qubit`.
    pub fn single_qubit(&self, qubit: usize) -> [f64; 3] {
        let b = 3 * (qubit - 1);
        [self.0[b], self.0[b + 1], self.0[b + 2]]
    }
}

/// All trainable angles, one block per question id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelParams(Vec<ObservableParams>);

impl ModelParams {
    pub fn new(cfg: &AnsatzConfig, blocks: Vec<ObservableParams>) -> Result<Self> {
        if blocks.len() != cfg.n_observables {
            return Err(Error::Dimension(format!(
                "expected {} observables, got {}",
                cfg.n_observables,
                blocks.len()
            )));
        }
        for b in &blocks {
            if b.0.len() != cfg.params_per_observable() {
                return Err(Error::Dimension("observable block has the wrong length".into()));
            }
        }
        Ok(Self(blocks))
    }

    pub fn zeros(cfg: &AnsatzConfig) -> Self {
        Self(vec![ObservableParams::zeros(cfg); cfg.n_observables])
    }

    pub fn from_flat(cfg: &AnsatzConfig, flat: &[f64]) -> Result<Self> {
        if flat.len() != cfg.total_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                cfg.total_params(),
                flat.len()
            )));
        }
        let blocks = flat
            .chunks(cfg.params_per_observable())
            .map(|c| ObservableParams::new(cfg, c.to_vec()))
            .collect::<Result<_>>()?;
        Ok(Self(blocks))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|b| b.0.iter().copied()).collect()
    }

    /// Block of the 1-based question id.
    pub fn observable(&self, question: usize) -> &ObservableParams {
        &self.0[question - 1]
    }

    pub fn blocks(&self) -> &[ObservableParams] {
        &self.0
    }

    pub fn blocks_mut(&mut self) -> &mut [ObservableParams] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// One parameterised gate of the ansatz. Every gate is `exp(-iθG/2)` with
/// `G² = I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnsatzGate {
    Rx {
        qubit: usize,
        param: usize,
    },
    Rz {
        qubit: usize,
        param: usize,
    },
    /// XX coupler on `(qubit, qubit + 1)`.
    Xx {
        qubit: usize,
        param: usize,
    },
}

impl AnsatzGate {
    pub fn param(&self) -> usize {
        match *self {
            AnsatzGate::Rx { param, .. } | AnsatzGate::Rz { param, .. } | AnsatzGate::Xx { param, .. } => param,
        }
    }
}

/// Gates of `V(θ)` in time order.
pub fn ansatz_gates(n_qubits: usize) -> Vec<AnsatzGate> {
    let mut gates = Vec::with_capacity(4 * n_qubits - 1);
    for q in 1..=n_qubits {
        let b = 3 * (q - 1);
        gates.push(AnsatzGate::Rx { qubit: q, param: b });
        gates.push(AnsatzGate::Rz { qubit: q, param: b + 1 });
        gates.push(AnsatzGate::Rx { qubit: q, param: b + 2 });
    }
    for q in 1..n_qubits {
        gates.push(AnsatzGate::Xx {
            qubit: q,
            param: 3 * n_qubits + q - 1,
        });
    }
    gates
}

/// `RX(θ)` as `[g00, g01, g10, g11]`.
pub(crate) fn rx_entries(theta: f64) -> [Complex64; 4] {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        Complex64::new(c, 0.0),
        Complex64::new(0.0, -s),
        Complex64::new(0.0, -s),
        Complex64::new(c, 0.0),
    ]
}

pub(crate) fn rz_entries(theta: f64) -> [Complex64; 4] {
    [
        Complex64::from_polar(1.0, -theta / 2.0),
        ZERO,
        ZERO,
        Complex64::from_polar(1.0, theta / 2.0),
    ]
}

pub fn rx(theta: f64) -> CMatrix {
    let e = rx_entries(theta);
    CMatrix::from_rows(&[[e[0], e[1]], [e[2], e[3]]])
}

pub fn rz(theta: f64) -> CMatrix {
    let e = rz_entries(theta);
    CMatrix::from_rows(&[[e[0], e[1]], [e[2], e[3]]])
}

/// `exp(-iθ X⊗X / 2)`.
pub fn xx(theta: f64) -> CMatrix {
    let (s, c) = (theta / 2.0).sin_cos();
    let c = Complex64::new(c, 0.0);
    let m = Complex64::new(0.0, -s);
    CMatrix::from_rows(&[
        [c, ZERO, ZERO, m],
        [ZERO, c, m, ZERO],
        [ZERO, m, c, ZERO],
        [m, ZERO, ZERO, c],
    ])
}

/// Left-multiplies the rows of `u` by an XX coupler on `(qubit, qubit+1)`.
fn left_apply_xx(u: &mut CMatrix, theta: f64, n_qubits: usize, qubit: usize) {
    let (s, c) = (theta / 2.0).sin_cos();
    let flip = (1usize << (n_qubits - qubit)) | (1usize << (n_qubits - qubit - 1));
    let cols = u.cols();
    let rows = u.rows();
    let data = u.as_mut_slice();
    let mi = Complex64::new(0.0, -s);
    for r0 in 0..rows {
        let r1 = r0 ^ flip;
        if r1 < r0 {
            continue;
        }
        for col in 0..cols {
            let a0 = data[r0 * cols + col];
            let a1 = data[r1 * cols + col];
            data[r0 * cols + col] = a0 * c + mi * a1;
            data[r1 * cols + col] = a1 * c + mi * a0;
        }
    }
}

/// Dense `V(θ)` for one observable.
pub fn build_unitary(cfg: &AnsatzConfig, p: &ObservableParams) -> Result<CMatrix> {
    if p.0.len() != cfg.params_per_observable() {
        return Err(Error::Dimension(format!(
            "expected {} angles, got {}",
            cfg.params_per_observable(),
            p.0.len()
        )));
    }
    Ok(build_unitary_unchecked(cfg.n_qubits, &p.0))
}

pub(crate) fn build_unitary_unchecked(n_qubits: usize, angles: &[f64]) -> CMatrix {
    let mut u = CMatrix::identity(1 << n_qubits);
    for g in ansatz_gates(n_qubits) {
        match g {
            AnsatzGate::Rx { qubit, param } => u.left_apply_1q(&rx_entries(angles[param]), n_qubits, qubit),
            AnsatzGate::Rz { qubit, param } => u.left_apply_1q(&rz_entries(angles[param]), n_qubits, qubit),
            AnsatzGate::Xx { qubit, param } => left_apply_xx(&mut u, angles[param], n_qubits, qubit),
        }
    }
    u
}

/// `D = Z ⊗ I ⊗ ... ⊗ I`.
pub fn diagonal_observable(n_qubits: usize) -> CMatrix {
    let half = 1usize << (n_qubits - 1);
    let signs: Vec<f64> = (0..2 * half).map(|i| if i < half { 1.0 } else { -1.0 }).collect();
    CMatrix::diag(&signs)
}

/// `Q = V D V^dagger`.
pub fn observable_matrix(cfg: &AnsatzConfig, p: &ObservableParams) -> Result<CMatrix> {
    let v = build_unitary(cfg, p)?;
    Ok(conjugate_diagonal(&v))
}

/// `V D V^dagger` exploiting that `D` only flips signs of columns.
fn conjugate_diagonal(v: &CMatrix) -> CMatrix {
    let dim = v.rows();
    let half = dim / 2;
    let mut q = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        let vi = v.row(i);
        for j in i..dim {
            let vj = v.row(j);
            let plus: Complex64 = (0..half).map(|k| vi[k] * vj[k].conj()).sum();
            let minus: Complex64 = (half..dim).map(|k| vi[k] * vj[k].conj()).sum();
            let e = plus - minus;
            q[(i, j)] = e;
            q[(j, i)] = e.conj();
        }
        q[(i, i)].im = 0.0;
    }
    q
}

/// All observables `Q_1..Q_N` of a model.
pub fn observables(cfg: &AnsatzConfig, m: &ModelParams) -> Result<Vec<CMatrix>> {
    m.blocks().iter().map(|p| observable_matrix(cfg, p)).collect()
}

/// Non-commutativity score: sum over unordered pairs of the trace norm of
/// the commutator.
pub fn zeta(cfg: &AnsatzConfig, m: &ModelParams) -> Result<f64> {
    if m.len() != cfg.n_observables {
        return Err(Error::Dimension(format!(
            "expected {} observables, got {}",
            cfg.n_observables,
            m.len()
        )));
    }
    zeta_of(&observables(cfg, m)?)
}

pub fn zeta_of(qs: &[CMatrix]) -> Result<f64> {
    let mut total = 0.0;
    for a in 0..qs.len() {
        for b in (a + 1)..qs.len() {
            total += linalg::trace_norm(&linalg::commutator(&qs[a], &qs[b])?)?;
        }
    }
    Ok(total)
}
