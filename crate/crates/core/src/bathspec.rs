//! Paramagnetic bath spectra: the S = 1/2, I = 1/2 substitutional-nitrogen
//! Hamiltonian, the free-electron line, Lorentzian DEER spectra and the
//! phenomenological effect of bath driving on NV dephasing.

use std::path::Path;

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::constants::{G_FREE_ELECTRON, H, MU_B, MU_N};
use crate::error::{QdmError, Result};
use crate::vec3::Vec3;

/// Tensors are diagonal in the NV-axis frame (z along the NV axis).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct P1Params {
    pub g_perp: f64,
    pub g_par: f64,
    /// Hyperfine tensor components, Hz.
    pub a_perp: f64,
    pub a_par: f64,
    /// Applied field in the NV-axis frame, T.
    pub b: Vec3,
}

impl Default for P1Params {
    fn default() -> Self {
        P1Params {
            g_perp: 2.0,
            g_par: 2.0,
            a_perp: -559.7e6,
            a_par: -113.83e6,
            b: Vec3::new(0.0, 0.0, 4.278e-3),
        }
    }
}

// Basis order |mS, mI>: (up,up), (up,down), (down,up), (down,down).
fn sz() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(0.5, 0.5, -0.5, -0.5))
}

fn iz() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(0.5, -0.5, 0.5, -0.5))
}

fn sx() -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 2)] = 0.5;
    m[(2, 0)] = 0.5;
    m[(1, 3)] = 0.5;
    m[(3, 1)] = 0.5;
    m
}

fn ix() -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 1)] = 0.5;
    m[(1, 0)] = 0.5;
    m[(2, 3)] = 0.5;
    m[(3, 2)] = 0.5;
    m
}

/// Sy = i * SY_IM, a real antisymmetric matrix.
fn sy_im() -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m[(0, 2)] = -0.5;
    m[(2, 0)] = 0.5;
    m[(1, 3)] = -0.5;
    m[(3, 1)] = 0.5;
    m
}

/// Hamiltonian in Hz, written in a frame rotated about the NV axis so the
/// field lies in the xz plane. The tensors are axially symmetric, so this is
/// unitarily equivalent to the lab-frame operator and purely real.
pub fn p1_hamiltonian(p: &P1Params) -> Matrix4<f64> {
    let b_perp = (p.b.x * p.b.x + p.b.y * p.b.y).sqrt();
    let bz = p.b.z;
    let eb = MU_B / H;
    let nb = MU_N / H;
    let mut flip = Matrix4::zeros();
    // Sx Ix + Sy Iy = (S+ I- + S- I+)/2
    flip[(1, 2)] = 0.5;
    flip[(2, 1)] = 0.5;
    sx() * (eb * p.g_perp * b_perp)
        + sz() * (eb * p.g_par * bz)
        + ix() * (nb * b_perp)
        + iz() * (nb * bz)
        + flip * p.a_perp
        + (sz() * iz()) * p.a_par
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    /// Hz.
    pub frequency: f64,
    /// Squared transverse spin matrix element.
    pub weight: f64,
    pub allowed: bool,
}

/// The four Delta m_S = +-1 transitions, ascending in frequency.
///
/// Eigenstates are split into the two with larger <Sz> and the two with
/// smaller <Sz>; every cross pair is a transition. A transition counts as
/// allowed when its squared matrix element of the spin component transverse
/// to the field exceeds half the largest one.
pub fn p1_transitions(p: &P1Params) -> Vec<Transition> {
    let h = p1_hamiltonian(p);
    let eig = SymmetricEigen::new(h);
    let vecs = eig.eigenvectors;
    let vals = eig.eigenvalues;
    let szm = sz();
    let mut idx: Vec<usize> = (0..4).collect();
    let expect = |k: usize| {
        let v = vecs.column(k);
        v.dot(&(szm * v))
    };
    idx.sort_by(|&a, &b| expect(b).total_cmp(&expect(a)));

    // Field direction in the rotated frame.
    let b_perp = (p.b.x * p.b.x + p.b.y * p.b.y).sqrt();
    let bn = p.b.norm();
    let (ux, uz) = if bn > 0.0 { (b_perp / bn, p.b.z / bn) } else { (0.0, 1.0) };
    let sxm = sx();
    let sym = sy_im();
    let weight = |i: usize, f: usize| {
        let vi = vecs.column(i);
        let vf = vecs.column(f);
        let mx = vf.dot(&(sxm * vi));
        let my = vf.dot(&(sym * vi));
        let mz = vf.dot(&(szm * vi));
        // |<f|S|i>|^2 minus the component along the field
        let along = ux * mx + uz * mz;
        mx * mx + my * my + mz * mz - along * along
    };
    let mut out: Vec<Transition> = idx[..2]
        .iter()
        .flat_map(|&u| {
            idx[2..]
                .iter()
                .map(|&d| Transition {
                    frequency: (vals[u] - vals[d]).abs(),
                    weight: weight(u, d),
                    allowed: false,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let wmax = out.iter().map(|t| t.weight).fold(0.0, f64::max);
    for t in &mut out {
        t.allowed = t.weight > 0.5 * wmax;
    }
    out.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    out
}

/// Free-electron resonance (g = 2.0023), Hz.
pub fn electron_line(b: Vec3) -> f64 {
    G_FREE_ELECTRON * MU_B / H * b.norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub center: f64,
    /// Half width at half maximum, Hz.
    pub width: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequency: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub lines: Vec<Line>,
}

impl Spectrum {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_columns_csv(
            path,
            &["frequency_Hz", "amplitude"],
            &[&self.frequency, &self.amplitude],
        )
    }
}

pub fn lorentzian(f: f64, line: &Line) -> f64 {
    let w2 = line.width * line.width;
    line.weight * w2 / ((f - line.center).powi(2) + w2)
}

pub fn deer_spectrum(lines: &[Line], grid: &[f64]) -> Result<Spectrum> {
    if let Some(l) = lines.iter().find(|l| !(l.width > 0.0)) {
        return Err(QdmError::invalid(format!("line width must be > 0, got {}", l.width)));
    }
    if let Some(l) = lines.iter().find(|l| l.weight < 0.0) {
        return Err(QdmError::invalid(format!("line weight must be >= 0, got {}", l.weight)));
    }
    let amplitude = grid
        .iter()
        .map(|&f| lines.iter().map(|l| lorentzian(f, l)).sum())
        .collect();
    Ok(Spectrum {
        frequency: grid.to_vec(),
        amplitude,
        lines: lines.to_vec(),
    })
}

/// 10 kHz grid from 20 MHz below the lowest line to 20 MHz above the highest.
pub fn default_grid(lines: &[Line]) -> Vec<f64> {
    let lo = lines.iter().map(|l| l.center).fold(f64::INFINITY, f64::min) - 20e6;
    let hi = lines.iter().map(|l| l.center).fold(f64::NEG_INFINITY, f64::max) + 20e6;
    let n = ((hi - lo) / 10e3).round() as usize;
    (0..=n).map(|i| lo + i as f64 * 10e3).collect()
}

/// Bath lines for a DEER spectrum: the four nitrogen transitions (allowed
/// and forbidden weights set separately) plus the free-electron line.
pub fn bath_lines(
    p: &P1Params,
    width: f64,
    allowed_weight: f64,
    forbidden_weight: f64,
    electron_weight: f64,
) -> Vec<Line> {
    let mut lines: Vec<Line> = p1_transitions(p)
        .iter()
        .map(|t| Line {
            center: t.frequency,
            width,
            weight: if t.allowed {
                allowed_weight
            } else {
                forbidden_weight
            },
        })
        .collect();
    lines.push(Line {
        center: electron_line(p.b),
        width,
        weight: electron_weight,
    });
    lines
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveParams {
    /// Bath Rabi frequency, Hz.
    pub rabi: f64,
    /// Crossover Rabi frequency of the suppression law, Hz.
    pub omega_c: f64,
    /// Bath-limited dephasing time, s.
    pub t2_bath_limited: f64,
    /// Dephasing time left once the bath is fully decoupled, s.
    pub t2_nv_limited: f64,
}

impl Default for DriveParams {
    fn default() -> Self {
        let t2_nv = 2.5e-6;
        let t2_bath = bath_limited_t2(1.2e-6, t2_nv);
        DriveParams {
            rabi: 2e6,
            omega_c: calibrate_omega_c(2e6, 2.2e-6, t2_nv, t2_bath),
            t2_bath_limited: t2_bath,
            t2_nv_limited: t2_nv,
        }
    }
}

/// 1/T2*(Rabi) = 1/T2_nv + (1/T2_bath) / (1 + (Rabi/omega_c)^2).
pub fn driven_t2star(d: &DriveParams) -> f64 {
    let x = d.rabi / d.omega_c;
    1.0 / (1.0 / d.t2_nv_limited + (1.0 / d.t2_bath_limited) / (1.0 + x * x))
}

/// Bath-limited T2* implied by the undriven value and the NV-limited value.
pub fn bath_limited_t2(t2_undriven: f64, t2_nv: f64) -> f64 {
    1.0 / (1.0 / t2_undriven - 1.0 / t2_nv)
}

/// Crossover frequency that makes `driven_t2star` equal `t2_target` at `rabi`.
pub fn calibrate_omega_c(rabi: f64, t2_target: f64, t2_nv: f64, t2_bath: f64) -> f64 {
    let residual = 1.0 / t2_target - 1.0 / t2_nv;
    let ratio = (1.0 / t2_bath) / residual;
    rabi / (ratio - 1.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hamiltonian_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = P1Params {
                b: Vec3::new(
                    rng.random_range(-5e-3..5e-3),
                    rng.random_range(-5e-3..5e-3),
                    rng.random_range(-5e-3..5e-3),
                ),
                ..P1Params::default()
            };
            let h = p1_hamiltonian(&p);
            assert_eq!((h - h.transpose()).amax(), 0.0);
        }
    }

    #[test]
    fn decoupled_limit() {
        let p = P1Params {
            a_perp: 0.0,
            a_par: 0.0,
            ..P1Params::default()
        };
        let t = p1_transitions(&p);
        let f0 = 2.0 * MU_B / H * 4.278e-3;
        let allowed: Vec<_> = t.iter().filter(|t| t.allowed).collect();
        assert_eq!(allowed.len(), 2);
        for a in &allowed {
            assert!((a.frequency - f0).abs() < 1e-3);
        }
        for f in t.iter().filter(|t| !t.allowed) {
            assert!(f.weight < 1e-20);
        }
    }

    #[test]
    fn zero_field_isotropic() {
        let a = 100e6;
        let p = P1Params {
            a_perp: a,
            a_par: a,
            b: Vec3::ZERO,
            ..P1Params::default()
        };
        let mut e: Vec<f64> = SymmetricEigen::new(p1_hamiltonian(&p)).eigenvalues.iter().copied().collect();
        e.sort_by(|x, y| x.total_cmp(y));
        assert!((e[0] + 0.75 * a).abs() < 1e-6);
        for v in &e[1..] {
            assert!((v - 0.25 * a).abs() < 1e-6);
        }
        let t = p1_transitions(&p);
        for tr in &t {
            assert!(tr.frequency.abs() < 1e-3 || (tr.frequency - a).abs() < 1e-3);
        }
        assert!(t.iter().any(|tr| tr.allowed && (tr.frequency - a).abs() < 1e-3));
    }

    #[test]
    fn matches_kronecker_oracle() {
        let p = P1Params::default();
        let ours: Vec<f64> = p1_transitions(&p).iter().map(|t| t.frequency).collect();
        let theirs = oracle::p1_transitions_kron(p.g_perp, p.g_par, p.a_perp, p.a_par, p.b);
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e3, "{a} vs {b}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let u = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalized();
            let q = P1Params {
                b: u * 4.278e-3,
                ..p
            };
            let ours: Vec<f64> = p1_transitions(&q).iter().map(|t| t.frequency).collect();
            let theirs = oracle::p1_transitions_kron(q.g_perp, q.g_par, q.a_perp, q.a_par, q.b);
            for (a, b) in ours.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e3, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn electron_line_values() {
        assert_eq!(electron_line(Vec3::ZERO), 0.0);
        let f = electron_line(Vec3::new(0.0, 0.0, 4.278e-3));
        assert!((f - 119.9e6).abs() < 0.1e6, "{f}");
        let f2 = electron_line(Vec3::new(0.0, 0.0, 2.0 * 4.278e-3));
        assert!((f2 / f - 2.0).abs() < 1e-15);
    }

    #[test]
    fn lorentzian_examples() {
        let l = Line {
            center: 100e6,
            width: 1e6,
            weight: 0.3,
        };
        let s = deer_spectrum(&[l], &[99e6, 100e6, 101e6, 200e6]).unwrap();
        assert!((s.amplitude[1] - 0.3).abs() < 1e-15);
        assert!((s.amplitude[0] - 0.15).abs() < 1e-12);
        assert!((s.amplitude[2] - 0.15).abs() < 1e-12);
        assert!(s.amplitude[3] < 1e-4 * 0.3);
        let narrow = Line { width: 1.0, ..l };
        let s = deer_spectrum(&[narrow], &[100e6, 100.5e6]).unwrap();
        assert_eq!(s.amplitude[0], 0.3);
        assert!(s.amplitude[1] < 1e-11);
        assert!(deer_spectrum(&[Line { width: 0.0, ..l }], &[0.0]).is_err());
    }

    #[test]
    fn two_resolved_peaks() {
        let a = Line {
            center: 50e6,
            width: 0.5e6,
            weight: 1.0,
        };
        let b = Line { center: 80e6, ..a };
        let grid = default_grid(&[a, b]);
        let s = deer_spectrum(&[a, b], &grid).unwrap();
        let peak = |lo: f64, hi: f64| {
            s.frequency
                .iter()
                .zip(&s.amplitude)
                .filter(|(f, _)| **f > lo && **f < hi)
                .map(|(_, v)| *v)
                .fold(0.0, f64::max)
        };
        let (p1, p2) = (peak(40e6, 65e6), peak(65e6, 90e6));
        assert!((p1 / p2 - 1.0).abs() < 0.01);
        assert!((grid[1] - grid[0] - 10e3).abs() < 1e-6);
        assert!((grid[0] - 30e6).abs() < 1e-6);
    }

    #[test]
    fn spectrum_linear_in_weights() {
        let lines = bath_lines(&P1Params::default(), 2e6, 1.0, 0.2, 0.5);
        let grid = default_grid(&lines);
        let s1 = deer_spectrum(&lines, &grid).unwrap();
        let scaled: Vec<Line> = lines.iter().map(|l| Line { weight: 3.0 * l.weight, ..*l }).collect();
        let s3 = deer_spectrum(&scaled, &grid).unwrap();
        for (a, b) in s1.amplitude.iter().zip(&s3.amplitude) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn drive_limits_and_calibration() {
        let d = DriveParams::default();
        let undriven = driven_t2star(&DriveParams { rabi: 0.0, ..d });
        assert!((undriven - 1.2e-6).abs() < 1e-15);
        let inf = driven_t2star(&DriveParams { rabi: 1e15, ..d });
        assert!((inf - 2.5e-6).abs() < 1e-15);
        assert!((driven_t2star(&d) - 2.2e-6).abs() < 1e-15);

        // Independent bisection for omega_c.
        let f = |wc: f64| driven_t2star(&DriveParams { omega_c: wc, ..d }) - 2.2e-6;
        let (mut lo, mut hi) = (1e3_f64, 1e9_f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo / d.omega_c - 1.0).abs() < 1e-9);

        let mut prev = 0.0;
        for k in 0..100 {
            let t = driven_t2star(&DriveParams {
                rabi: k as f64 * 1e5,
                ..d
            });
            assert!(t >= prev);
            prev = t;
        }
    }
}
