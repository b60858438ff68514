//! Reference computations shared by the integration tests. Nothing here
//! calls into the crate's simulator: gates, products and bases are rebuilt
//! from scratch on plain nested vectors.

#![allow(dead_code)]

use num_complex::Complex64 as C;

pub type Mat = Vec<Vec<C>>;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

pub fn identity(d: usize) -> Mat {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
        .collect()
}

pub fn mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect())
        .collect()
}

pub fn adjoint(a: &Mat) -> Mat {
    (0..a[0].len())
        .map(|i| (0..a.len()).map(|j| a[j][i].conj()).collect())
        .collect()
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, br) = (a.len(), b.len());
    let (ac, bc) = (a[0].len(), b[0].len());
    (0..ar * br)
        .map(|i| (0..ac * bc).map(|j| a[i / br][j / bc] * b[i % br][j % bc]).collect())
        .collect()
}

pub fn apply(a: &Mat, v: &[C]) -> Vec<C> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn inner(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(v: &[C]) -> f64 {
    inner(v, v).re.sqrt()
}

pub fn rx(t: f64) -> Mat {
    let (s, co) = (t / 2.0).sin_cos();
    vec![vec![c(co, 0.0), c(0.0, -s)], vec![c(0.0, -s), c(co, 0.0)]]
}

pub fn rz(t: f64) -> Mat {
    vec![
        vec![C::from_polar(1.0, -t / 2.0), c(0.0, 0.0)],
        vec![c(0.0, 0.0), C::from_polar(1.0, t / 2.0)],
    ]
}

/// `cos(t/2) I - i sin(t/2) X⊗X`.
pub fn xx(t: f64) -> Mat {
    let (s, co) = (t / 2.0).sin_cos();
    let mut m = identity(4);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = c(co, 0.0);
        row[3 - i] = c(0.0, -s);
    }
    m
}

/// The ansatz for `n` qubits from its angles: RX, RZ, RX on every qubit
/// (qubit 1 is the most significant bit), then XX on neighbouring pairs.
pub fn ansatz(n: usize, angles: &[f64]) -> Mat {
    let on = |g: &Mat, q: usize| -> Mat {
        let left = identity(1 << (q - 1));
        let right = identity(1 << (n - q));
        kron(&kron(&left, g), &right)
    };
    let mut u = identity(1 << n);
    for q in 1..=n {
        let b = 3 * (q - 1);
        for g in [rx(angles[b]), rz(angles[b + 1]), rx(angles[b + 2])] {
            u = mul(&on(&g, q), &u);
        }
    }
    for q in 1..n {
        let left = identity(1 << (q - 1));
        let right = identity(1 << (n - q - 1));
        u = mul(&kron(&kron(&left, &xx(angles[3 * n + q - 1])), &right), &u);
    }
    u
}

/// `Z` on qubit 1.
pub fn z1(n: usize) -> Mat {
    let d = 1 << n;
    let mut m = vec![vec![c(0.0, 0.0); d]; d];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = c(if i < d / 2 { 1.0 } else { -1.0 }, 0.0);
    }
    m
}

/// Orthonormal eigenbasis of a ±1 observable `a`, split by eigenvalue.
/// When `seed` is given its projection onto each eigenspace comes first, so
/// `seed` has a nonzero overlap with at most one vector per eigenspace.
fn reflection_basis(a: &Mat, seed: Option<&[C]>) -> [Vec<Vec<C>>; 2] {
    let d = a.len();
    let mut out: [Vec<Vec<C>>; 2] = [Vec::new(), Vec::new()];
    for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
        // projector (I ± A) / 2
        let p: Mat = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| (if i == j { c(0.5, 0.0) } else { c(0.0, 0.0) }) + a[i][j] * (0.5 * sign))
                    .collect()
            })
            .collect();
        let mut candidates: Vec<Vec<C>> = Vec::new();
        if let Some(s) = seed {
            candidates.push(apply(&p, s));
        }
        candidates.extend((0..d).map(|j| (0..d).map(|i| p[i][j]).collect()));
        for mut v in candidates {
            for b in &out[k] {
                let o = inner(b, &v);
                for (x, y) in v.iter_mut().zip(b) {
                    *x -= o * y;
                }
            }
            let nv = norm(&v);
            if nv > 1e-8 {
                out[k].push(v.iter().map(|x| x / nv).collect());
            }
        }
    }
    out
}

/// Two-question joint distribution from eigenvector expansions.
///
/// With `W1 = V_first` and `W2 = V_second V_first`, the questions act as
/// `A = W1^dagger Z W1` then `B = W2^dagger Z W2` on `|0>`. Writing
/// `|0> = Σ_i α_i |a_i>` over eigenvectors of `A` and
/// `|a_i> = Σ_j γ_ij |b_j>` over eigenvectors of `B`,
/// `P(x, y) = Σ_{j in B_y} Σ_{i in A_x} |α_i γ_ij|^2`.
/// Index 0 is (yes, yes), 1 (yes, no), 2 (no, yes), 3 (no, no).
pub fn two_question_distribution(n_qubits: usize, v_first: &Mat, v_second: &Mat) -> [f64; 4] {
    let z = z1(n_qubits);
    let w1 = v_first.clone();
    let w2 = mul(v_second, v_first);
    let a = mul(&adjoint(&w1), &mul(&z, &w1));
    let b = mul(&adjoint(&w2), &mul(&z, &w2));
    let mut psi0 = vec![c(0.0, 0.0); 1 << n_qubits];
    psi0[0] = c(1.0, 0.0);
    let a_basis = reflection_basis(&a, Some(&psi0));
    let b_basis = reflection_basis(&b, None);
    let mut out = [0.0; 4];
    for x in 0..2 {
        for y in 0..2 {
            let mut p = 0.0;
            for av in &a_basis[x] {
                let alpha = inner(av, &psi0);
                for bv in &b_basis[y] {
                    let gamma = inner(bv, av);
                    p += (alpha * gamma).norm_sqr();
                }
            }
            out[2 * x + y] = p;
        }
    }
    out
}
