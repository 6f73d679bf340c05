//! Dense 16×16 matrix model of the encoding circuit, built from Kronecker
//! products and permutation matrices.

use pqiga::Complex64;

pub type Mat = Vec<Vec<Complex64>>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn identity(n: usize) -> Mat {
    (0..n)
        .map(|i| (0..n).map(|j| c(if i == j { 1.0 } else { 0.0 })).collect())
        .collect()
}

fn kron(a: &Mat, b: &Mat) -> Mat {
    let (n, m) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0); n * m]; n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..m {
                for l in 0..m {
                    out[i * m + k][j * m + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn hadamard() -> Mat {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    vec![vec![c(h), c(h)], vec![c(h), c(-h)]]
}

pub fn ry(theta: f64) -> Mat {
    let (s, co) = (theta / 2.0).sin_cos();
    vec![vec![c(co), c(-s)], vec![c(s), c(co)]]
}

/// `gate` on `qubit` of four, qubit 0 being the most significant bit.
pub fn on_qubit(gate: &Mat, qubit: usize) -> Mat {
    let id = identity(2);
    let mut m = identity(1);
    for q in 0..4 {
        m = kron(&m, if q == qubit { gate } else { &id });
    }
    m
}

#[allow(clippy::needless_range_loop)]
pub fn cnot(control: usize, target: usize) -> Mat {
    let mut m = vec![vec![c(0.0); 16]; 16];
    for k in 0..16 {
        let bit = |q: usize| (k >> (3 - q)) & 1;
        let dest = if bit(control) == 1 { k ^ (1 << (3 - target)) } else { k };
        m[dest][k] = c(1.0);
    }
    m
}

/// Circuit unitary for an even number of angles.
pub fn circuit(angles: &[f64]) -> Mat {
    let mut u = matmul(&on_qubit(&hadamard(), 3), &on_qubit(&hadamard(), 0));
    for pair in angles.chunks(2) {
        for g in [
            cnot(0, 1),
            on_qubit(&ry(pair[0]), 1),
            cnot(1, 2),
            on_qubit(&ry(pair[1]), 2),
            cnot(2, 3),
        ] {
            u = matmul(&g, &u);
        }
    }
    u
}

/// First column of the circuit unitary: its action on `|0000⟩`.
pub fn encode(angles: &[f64]) -> Vec<Complex64> {
    circuit(angles).iter().map(|row| row[0]).collect()
}
