//! Bijection between full-rank density matrices and real vectors: the
//! traceless part of `ln ρ`, expanded in generalized Gell-Mann matrices
//! normalized to `Tr(λ_a λ_b) = 2 δ_ab`.
//!
//! Coordinate order: for each pair `j < k` the symmetric then the
//! antisymmetric matrix, followed by the `d - 1` diagonal matrices. For
//! `d = 2` this is `(X, Y, Z)`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::qstate::{DensityMatrix, C64};

/// Default eigenvalue floor applied before taking the logarithm.
pub const DEFAULT_EIGEN_CLAMP: f64 = 1e-10;

/// Largest coordinate magnitude accepted by [`from_mirror`].
pub const MAX_COORD: f64 = 700.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MirrorPoint {
    pub coords: Vec<f64>,
}

impl MirrorPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::OutOfDomain { magnitude: *bad });
        }
        Ok(Self { coords })
    }

    /// Matrix dimension `d` with `d² - 1 = coords.len()`.
    pub fn dim(&self) -> Result<usize> {
        mirror_dim_for(self.coords.len())
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub fn coord_count(dim: usize) -> usize {
    dim * dim - 1
}

fn mirror_dim_for(len: usize) -> Result<usize> {
    let d = ((len + 1) as f64).sqrt().round() as usize;
    if d < 2 || d * d != len + 1 {
        return Err(Error::LengthMismatch { expected: d.max(2) * d.max(2) - 1, found: len });
    }
    Ok(d)
}

fn diag_norm(l: usize) -> f64 {
    (2.0 / (l * (l + 1)) as f64).sqrt()
}

/// The basis matrices in coordinate order.
pub fn gell_mann_basis(dim: usize) -> Vec<DMatrix<C64>> {
    let zero = DMatrix::<C64>::zeros(dim, dim);
    let mut out = Vec::with_capacity(coord_count(dim));
    for j in 0..dim {
        for k in j + 1..dim {
            let mut s = zero.clone();
            s[(j, k)] = C64::new(1.0, 0.0);
            s[(k, j)] = C64::new(1.0, 0.0);
            out.push(s);
            let mut a = zero.clone();
            a[(j, k)] = C64::new(0.0, -1.0);
            a[(k, j)] = C64::new(0.0, 1.0);
            out.push(a);
        }
    }
    for l in 1..dim {
        let mut m = zero.clone();
        for i in 0..l {
            m[(i, i)] = C64::new(diag_norm(l), 0.0);
        }
        m[(l, l)] = C64::new(-(l as f64) * diag_norm(l), 0.0);
        out.push(m);
    }
    out
}

/// `Tr(A λ_a) / 2` for every basis element, read off the entries directly.
fn coords_of(a: &DMatrix<C64>) -> Vec<f64> {
    let d = a.nrows();
    let mut out = Vec::with_capacity(coord_count(d));
    for j in 0..d {
        for k in j + 1..d {
            out.push(a[(j, k)].re);
            out.push(-a[(j, k)].im);
        }
    }
    for l in 1..d {
        let head: f64 = (0..l).map(|i| a[(i, i)].re).sum();
        out.push(diag_norm(l) * (head - l as f64 * a[(l, l)].re) / 2.0);
    }
    out
}

/// `Σ_a c_a λ_a`.
fn matrix_of(coords: &[f64], d: usize) -> DMatrix<C64> {
    let mut a = DMatrix::<C64>::zeros(d, d);
    let mut it = coords.iter();
    for j in 0..d {
        for k in j + 1..d {
            let (s, t) = (*it.next().unwrap(), *it.next().unwrap());
            a[(j, k)] = C64::new(s, -t);
            a[(k, j)] = C64::new(s, t);
        }
    }
    for l in 1..d {
        let c = *it.next().unwrap() * diag_norm(l);
        for i in 0..l {
            a[(i, i)].re += c;
        }
        a[(l, l)].re -= l as f64 * c;
    }
    a
}

/// `V diag(f(λ)) V†` for a Hermitian matrix.
fn spectral_map(m: DMatrix<C64>, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(m);
    let vals = f(eig.eigenvalues.as_slice());
    let v = &eig.eigenvectors;
    let d = v.nrows();
    let mut out = DMatrix::<C64>::zeros(d, d);
    for r in 0..d {
        for c in r..d {
            let x: C64 = (0..d).map(|i| v[(r, i)] * v[(c, i)].conj() * vals[i]).sum();
            out[(r, c)] = x;
            out[(c, r)] = x.conj();
        }
        out[(r, r)].im = 0.0;
    }
    out
}

/// Clamps eigenvalues below `eps`, renormalizes, takes the logarithm and
/// keeps its traceless part.
pub fn to_mirror(rdm: &DensityMatrix, eps: f64) -> Result<MirrorPoint> {
    if !(eps > 0.0 && eps < 1.0 / rdm.dim() as f64) {
        return Err(Error::InvalidConfig(format!("eigenvalue clamp must lie in (0, 1/d), got {eps}")));
    }
    let log = spectral_map(rdm.matrix().clone(), |vals| {
        let clamped: Vec<f64> = vals.iter().map(|&p| p.max(eps)).collect();
        let total: f64 = clamped.iter().sum();
        let logs: Vec<f64> = clamped.iter().map(|p| (p / total).ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        logs.iter().map(|l| l - mean).collect()
    });
    MirrorPoint::new(coords_of(&log))
}

/// `exp(A) / Tr exp(A)` for `A = Σ_a c_a λ_a`.
pub fn from_mirror(point: &MirrorPoint) -> Result<DensityMatrix> {
    let d = point.dim()?;
    let worst = point.coords.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if !(worst <= MAX_COORD) {
        return Err(Error::OutOfDomain { magnitude: worst });
    }
    let mut rho = spectral_map(matrix_of(&point.coords, d), |vals| {
        let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = vals.iter().map(|v| (v - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    });
    let tr: f64 = (0..d).map(|i| rho[(i, i)].re).sum();
    rho.iter_mut().for_each(|x| *x /= tr);
    DensityMatrix::new(rho)
}
