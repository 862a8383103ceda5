//! Slow, independent reference implementations used to cross-check the
//! production code: adaptive quadrature, a cyclic Jacobi eigensolver and
//! brute-force spin Hamiltonians built from explicit Kronecker products.
//!
//! Nothing in the simulation path calls into this module.

use nalgebra::Complex;

use crate::constants::{H, MU_B, MU_N};
use crate::vec3::Vec3;

type C64 = Complex<f64>;

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integral of `f` over `[a, b]` to relative tolerance `rel`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let (whole, _) = gk15(f, a, b);
    integrate_abs(f, a, b, rel * whole.abs().max(f64::MIN_POSITIVE))
}

/// Adaptive Gauss-Kronrod to an absolute error `tol`.
pub fn integrate_abs(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(f, a, b, tol, 40)
}

/// Biot-Savart field of a straight segment by direct quadrature of the line integral.
pub fn segment_field_quadrature(a: Vec3, b: Vec3, current: f64, p: Vec3) -> Vec3 {
    let dl = b - a;
    let k = crate::constants::MU0_OVER_4PI * current;
    let integrand = |t: f64| {
        let r = p - (a + dl * t);
        let r3 = r.norm().powi(3);
        dl.cross(r) / r3
    };
    // Integrate components independently with a shared magnitude scale so a
    // near-zero component does not force excessive refinement.
    let mag = integrate(&|t| integrand(t).norm(), 0.0, 1.0, 1e-13);
    let comp = |sel: fn(Vec3) -> f64| {
        let v = integrate_abs(&|t| sel(integrand(t)), 0.0, 1.0, 1e-13 * mag);
        if v.abs() < 1e-14 * mag {
            0.0
        } else {
            v
        }
    };
    Vec3::new(comp(|v| v.x), comp(|v| v.y), comp(|v| v.z)) * k
}

/// Eigen-decomposition of a real symmetric `n x n` matrix (row-major) by cyclic
/// Jacobi rotations. Returns eigenvalues and column eigenvectors (row-major).
pub fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= 1e-32 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i * n + i]).collect(), v)
}

// Spin-1 Sz in the (+1, 0, -1) basis.
const SZ1: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0];

fn matmul3(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
    let mut c = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
            }
        }
    }
    c
}

/// NV resonances (f_plus, f_minus) in Hz from the spin-1 Hamiltonian
/// H/hbar = (D + Mz) Sz^2 + gamma Bz Sz, all angular, diagonalised numerically.
pub fn nv_resonances_3x3(d: f64, mz: f64, gamma: f64, bz: f64) -> (f64, f64) {
    let sz = SZ1;
    let sz2 = matmul3(&sz, &sz);
    let h: Vec<f64> = (0..9)
        .map(|i| (d + mz) * sz2[i] + gamma * bz * sz[i])
        .collect();
    let (vals, vecs) = jacobi_eigen(h, 3);
    // Label each eigenvector by its dominant basis state (m = +1, 0, -1).
    let mut e = [0.0; 3];
    for (col, val) in vals.iter().enumerate() {
        let dom = (0..3)
            .max_by(|&i, &j| vecs[i * 3 + col].abs().total_cmp(&vecs[j * 3 + col].abs()))
            .unwrap();
        e[dom] = *val;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    ((e[0] - e[1]) / two_pi, (e[2] - e[1]) / two_pi)
}

type CMat = Vec<C64>;

fn kron(a: &CMat, na: usize, b: &CMat, nb: usize) -> CMat {
    let n = na * nb;
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..na {
        for j in 0..na {
            for k in 0..nb {
                for l in 0..nb {
                    out[(i * nb + k) * n + (j * nb + l)] = a[i * na + j] * b[k * nb + l];
                }
            }
        }
    }
    out
}

fn pauli_half() -> [CMat; 3] {
    let z = C64::new(0.0, 0.0);
    let r = |x: f64| C64::new(x, 0.0);
    let i = |x: f64| C64::new(0.0, x);
    [
        vec![z, r(0.5), r(0.5), z],
        vec![z, i(-0.5), i(0.5), z],
        vec![r(0.5), z, z, r(-0.5)],
    ]
}

/// Complex 4x4 Hamiltonian (Hz) of an S = 1/2, I = 1/2 centre, built from
/// Kronecker products with the full field vector, no frame rotation.
pub fn p1_hamiltonian_kron(
    g_perp: f64,
    g_par: f64,
    a_perp: f64,
    a_par: f64,
    b: Vec3,
) -> CMat {
    let s = pauli_half();
    let id2: CMat = vec![
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
    ];
    let sx = kron(&s[0], 2, &id2, 2);
    let sy = kron(&s[1], 2, &id2, 2);
    let sz = kron(&s[2], 2, &id2, 2);
    let ix = kron(&id2, 2, &s[0], 2);
    let iy = kron(&id2, 2, &s[1], 2);
    let iz = kron(&id2, 2, &s[2], 2);
    let mul = |a: &CMat, b: &CMat| {
        let mut c = vec![C64::new(0.0, 0.0); 16];
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    c[i * 4 + j] += a[i * 4 + k] * b[k * 4 + j];
                }
            }
        }
        c
    };
    let eb = MU_B / H;
    let nb = MU_N / H;
    let mut h = vec![C64::new(0.0, 0.0); 16];
    let sxix = mul(&sx, &ix);
    let syiy = mul(&sy, &iy);
    let sziz = mul(&sz, &iz);
    for k in 0..16 {
        h[k] = sx[k] * (eb * g_perp * b.x)
            + sy[k] * (eb * g_perp * b.y)
            + sz[k] * (eb * g_par * b.z)
            + ix[k] * (nb * b.x)
            + iy[k] * (nb * b.y)
            + iz[k] * (nb * b.z)
            + sxix[k] * a_perp
            + syiy[k] * a_perp
            + sziz[k] * a_par;
    }
    h
}

/// Eigenpairs of a complex Hermitian matrix via its real 2n x 2n embedding.
/// Assumes a non-degenerate spectrum. Eigenvalues ascending.
pub fn hermitian_eigen(h: &CMat, n: usize) -> Vec<(f64, Vec<C64>)> {
    let m = 2 * n;
    let mut a = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let z = h[i * n + j];
            a[i * m + j] = z.re;
            a[(i + n) * m + (j + n)] = z.re;
            a[i * m + (j + n)] = -z.im;
            a[(i + n) * m + j] = z.im;
        }
    }
    let (vals, vecs) = jacobi_eigen(a, m);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    // Every eigenvalue appears twice; one vector from each pair suffices.
    order
        .iter()
        .step_by(2)
        .map(|&col| {
            let psi: Vec<C64> = (0..n)
                .map(|i| C64::new(vecs[i * m + col], vecs[(i + n) * m + col]))
                .collect();
            let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            (vals[col], psi.into_iter().map(|z| z / norm).collect())
        })
        .collect()
}

/// The four Delta m_S = +-1 transition frequencies (Hz, ascending) of the
/// P1-type Hamiltonian, computed by brute force.
pub fn p1_transitions_kron(g_perp: f64, g_par: f64, a_perp: f64, a_par: f64, b: Vec3) -> Vec<f64> {
    let h = p1_hamiltonian_kron(g_perp, g_par, a_perp, a_par, b);
    let pairs = hermitian_eigen(&h, 4);
    let s = pauli_half();
    let id2 = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
    let sz = kron(&s[2], 2, &id2, 2);
    let expect = |psi: &Vec<C64>| {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                acc += psi[i].conj() * sz[i * 4 + j] * psi[j];
            }
        }
        acc.re
    };
    let mut idx: Vec<usize> = (0..4).collect();
    idx.sort_by(|&i, &j| expect(&pairs[j].1).total_cmp(&expect(&pairs[i].1)));
    let (up, down) = (&idx[..2], &idx[2..]);
    let mut f: Vec<f64> = up
        .iter()
        .flat_map(|&u| down.iter().map(|&d| (pairs[u].0 - pairs[d].0).abs()).collect::<Vec<_>>())
        .collect();
    f.sort_by(|a, b| a.total_cmp(b));
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_polynomial_and_peak() {
        let v = integrate(&|x| x * x * x, 0.0, 2.0, 1e-14);
        assert!((v - 4.0).abs() < 1e-13);
        // Lorentzian with sharp peak: integral of 1/(x^2 + e^2) over [-1,1]
        let e: f64 = 1e-3;
        let v = integrate(&|x| 1.0 / (x * x + e * e), -1.0, 1.0, 1e-13);
        let exact = 2.0 * (1.0 / e).atan() / e;
        assert!((v / exact - 1.0).abs() < 1e-11);
    }

    #[test]
    fn jacobi_known_matrix() {
        let (mut vals, _) = jacobi_eigen(vec![2.0, 1.0, 1.0, 2.0], 2);
        vals.sort_by(|a, b| a.total_cmp(b));
        assert!((vals[0] - 1.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn kron_hamiltonian_is_hermitian() {
        let h = p1_hamiltonian_kron(2.0, 2.0, -559.7e6, -113.83e6, Vec3::new(1e-3, 2e-3, 3e-3));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(h[i * 4 + j], h[j * 4 + i].conj());
            }
        }
    }
}
