//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls the library's exponentials, Kronecker products or
//! partial traces; states are built from explicit amplitudes.

#![allow(dead_code)]

use num_complex::Complex64 as C64;
use teleportsim_core::linalg::{ComplexMatrix, PureState};
use teleportsim_core::model::SystemParams;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Index of `|e>` and `|g>` in the single-atom basis.
pub const E: usize = 0;
pub const G: usize = 1;

/// `|x|² ` overlap of two amplitude vectors, both assumed normalized.
pub fn overlap_sqr(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm_sqr()
}

/// Deterministic pseudo-random generator for oracle fixtures.
pub struct Lcg(u64);

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self(seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407))
    }

    pub fn uniform(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn symmetric(&mut self) -> f64 {
        2.0 * self.uniform() - 1.0
    }

    pub fn hermitian(&mut self, n: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c(self.symmetric(), 0.0);
            for j in i + 1..n {
                let z = c(self.symmetric(), self.symmetric());
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| c(self.symmetric(), self.symmetric()))
    }

    pub fn state(&mut self, dims: Vec<usize>) -> PureState {
        let n: usize = dims.iter().product();
        let raw: Vec<C64> = (0..n).map(|_| c(self.symmetric(), self.symmetric())).collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        PureState::new(dims, raw.iter().map(|z| z / norm).collect()).unwrap()
    }
}

/// `e^{−iHt}` by a scaled-and-squared Taylor series.
pub fn taylor_expm(h: &ComplexMatrix, t: f64, terms: usize) -> ComplexMatrix {
    let n = h.rows();
    let norm: f64 = h.as_slice().iter().map(|z| z.norm()).sum::<f64>() * t.abs();
    let squarings = norm.log2().ceil().max(0.0) as u32 + 1;
    let scale = t / f64::from(1u32 << squarings);
    let a = ComplexMatrix::from_fn(n, n, |i, j| h[(i, j)] * c(0.0, -scale));
    let mut sum = ComplexMatrix::identity(n);
    let mut term = ComplexMatrix::identity(n);
    for k in 1..=terms {
        term = naive_matmul(&term, &a);
        let inv = 1.0 / k as f64;
        for z in term.as_mut_slice() {
            *z *= inv;
        }
        for (s, x) in sum.as_mut_slice().iter_mut().zip(term.as_slice()) {
            *s += x;
        }
    }
    for _ in 0..squarings {
        sum = naive_matmul(&sum, &sum);
    }
    sum
}

pub fn naive_matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum())
}

/// `(A ⊗ B)[(i₁ p + i₂), (j₁ q + j₂)] = A[i₁, j₁] B[i₂, j₂]` by direct loops.
pub fn kron_oracle(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (p, q) = (b.rows(), b.cols());
    let mut out = ComplexMatrix::zeros(a.rows() * p, a.cols() * q);
    for i1 in 0..a.rows() {
        for j1 in 0..a.cols() {
            for i2 in 0..p {
                for j2 in 0..q {
                    out[(i1 * p + i2, j1 * q + j2)] = a[(i1, j1)] * b[(i2, j2)];
                }
            }
        }
    }
    out
}

/// Partial trace of a three-qubit operator by explicit index sums.
pub fn partial_trace_3q(rho: &ComplexMatrix, keep: &[usize]) -> ComplexMatrix {
    let idx = |b: [usize; 3]| b[0] * 4 + b[1] * 2 + b[2];
    let dim = 1 << keep.len();
    let mut out = ComplexMatrix::zeros(dim, dim);
    for r in 0..8 {
        for s in 0..8 {
            let rb = [r >> 2 & 1, r >> 1 & 1, r & 1];
            let sb = [s >> 2 & 1, s >> 1 & 1, s & 1];
            let traced_equal = (0..3).filter(|q| !keep.contains(q)).all(|q| rb[q] == sb[q]);
            if !traced_equal {
                continue;
            }
            let pack = |b: [usize; 3]| keep.iter().fold(0, |acc, &q| acc * 2 + b[q]);
            out[(pack(rb), pack(sb))] += rho[(idx(rb), idx(sb))];
        }
    }
    out
}

/// Single-atom amplitudes of `cos Ωt|x> − i sin Ωt|x̄>`.
fn driven(level: usize, omega_t: f64) -> [C64; 2] {
    let mut v = [C64::default(); 2];
    v[level] = c(omega_t.cos(), 0.0);
    v[1 - level] = c(0.0, -omega_t.sin());
    v
}

fn product2(a: [C64; 2], b: [C64; 2]) -> [C64; 4] {
    [a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]
}

/// Closed form of the channel-generation evolution of `|g>₂|g>₃`:
///
/// `e^{−iλt}[cos λt (cos Ωt|g> − i sin Ωt|e>)⊗(same)
///          − i sin λt (cos Ωt|e> − i sin Ωt|g>)⊗(same)]`.
pub fn channel_closed_form(lambda_t: f64, omega_t: f64) -> [C64; 4] {
    let pre = C64::from_polar(1.0, -lambda_t);
    let gg = product2(driven(G, omega_t), driven(G, omega_t));
    let ee = product2(driven(E, omega_t), driven(E, omega_t));
    let mut out = [C64::default(); 4];
    for k in 0..4 {
        out[k] = pre * (gg[k] * lambda_t.cos() + c(0.0, -lambda_t.sin()) * ee[k]);
    }
    out
}

/// Closed form of the teleport-leg evolution of
/// `(α|e>₁ + β|g>₁) ⊗ (|ee> + i|gg>)₂₃/√2`, transcribed term by term.
pub fn teleport_closed_form(alpha: C64, beta: C64, lambda_t: f64, omega_t: f64) -> [C64; 8] {
    let pre = C64::from_polar(1.0, -lambda_t) * std::f64::consts::FRAC_1_SQRT_2;
    let (cl, sl) = (lambda_t.cos(), c(0.0, -lambda_t.sin()));
    // [cos λt R|x>R|y> − i sin λt R|x̄>R|ȳ>] for atom 1 in x, atom 2 in y
    let bracket = |x: usize, y: usize| {
        let a = product2(driven(x, omega_t), driven(y, omega_t));
        let b = product2(driven(1 - x, omega_t), driven(1 - y, omega_t));
        [0, 1, 2, 3].map(|k| a[k] * cl + sl * b[k])
    };
    let terms = [
        (alpha, E, E, E, c(1.0, 0.0)),
        (alpha, E, G, G, c(0.0, 1.0)),
        (beta, G, E, E, c(1.0, 0.0)),
        (beta, G, G, G, c(0.0, 1.0)),
    ];
    let mut out = [C64::default(); 8];
    for (amp, a1, a2, a3, phase) in terms {
        let br = bracket(a1, a2);
        for k in 0..4 {
            out[2 * k + a3] += pre * phase * amp * br[k];
        }
    }
    out
}

/// Unnormalized atom-3 branch after detecting `|e>₁|e>₂` at generic timing.
pub fn ee_branch_closed_form(alpha: C64, beta: C64, lambda_t: f64, omega_t: f64) -> [C64; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let p1 = C64::from_polar(1.0, -lambda_t);
    let p2 = C64::from_polar(1.0, -2.0 * lambda_t);
    let i = c(0.0, 1.0);
    let (co, so) = (omega_t.cos(), omega_t.sin());
    let sin2 = (2.0 * omega_t).sin();
    let e3 = s * alpha * p1 * (p1 * co * co + i * lambda_t.sin()) - 0.5 * s * i * beta * p2 * sin2;
    let g3 = -s * i * beta * p1 * (p1 * so * so + i * lambda_t.sin()) + 0.5 * s * alpha * p2 * sin2;
    [e3, g3]
}

/// Exact propagator of `H_I(t) = e^{−iδt}C + e^{iδt}C† + D` over `[0, t]`:
/// `U(t) = e^{−iδNt} · e^{−i(H_I(0) − δN)t}` with `N` the photon number.
pub fn exact_driven_cavity_propagator(p: &SystemParams, t: f64) -> ComplexMatrix {
    let levels = p.n_max + 1;
    let dim = 4 * levels;
    let h0 = teleportsim_core::model::build_full_interaction_hamiltonian(p, 0.0);
    let mut shifted = h0.clone();
    for k in 0..dim {
        shifted[(k, k)] -= c(p.delta * (k % levels) as f64, 0.0);
    }
    let rotating = taylor_expm(&shifted, t, 40);
    ComplexMatrix::from_fn(dim, dim, |i, j| C64::from_polar(1.0, -p.delta * (i % levels) as f64 * t) * rotating[(i, j)])
}

/// CPU time consumed by the calling thread.
pub fn thread_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: valid pointer to a stack timespec; the clock id is supported on Linux.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0, "clock_gettime failed");
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}
