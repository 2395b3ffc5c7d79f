//! Dense statevectors and small density matrices.
//!
//! Bit convention: site `i` is bit `i` of the basis index (site 0 least
//! significant). Bit value 0 is `|0⟩`, the `Z = +1` eigenstate; bit value 1 is
//! `|1⟩`, the `Z = -1` eigenstate.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A 2×2 single-site operator, `gate[row][col]`.
pub type Gate = [[C64; 2]; 2];

/// Largest chain handled by the dense representation.
pub const MAX_SITES: usize = 28;

/// Largest subsystem [`StateVector::partial_trace`] will produce.
pub const MAX_TRACE_SITES: usize = 8;

/// Eigenvalues below this are dropped from entropy sums.
const ENTROPY_CUTOFF: f64 = 1e-14;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// `+1` for bit value 0, `-1` for bit value 1.
#[inline]
pub fn z_value(index: usize, site: usize) -> f64 {
    if (index >> site) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_sites: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(num_sites: usize, amps: Vec<C64>) -> Result<Self> {
        if num_sites == 0 || num_sites > MAX_SITES {
            return Err(Error::UnsupportedSize { num_sites, max: MAX_SITES });
        }
        let expected = 1usize << num_sites;
        if amps.len() != expected {
            return Err(Error::LengthMismatch { expected, found: amps.len() });
        }
        Ok(Self { num_sites, amps })
    }

    pub fn from_real(num_sites: usize, amps: &[f64]) -> Result<Self> {
        Self::new(num_sites, amps.iter().map(|&a| C64::new(a, 0.0)).collect())
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(num_sites: usize, index: usize) -> Result<Self> {
        let mut amps = vec![ZERO; 1usize << num_sites.min(MAX_SITES)];
        if index >= amps.len() {
            return Err(Error::LengthMismatch { expected: amps.len(), found: index });
        }
        amps[index] = ONE;
        Self::new(num_sites, amps)
    }

    /// `|+⟩^⊗N`.
    pub fn plus_state(num_sites: usize) -> Result<Self> {
        let dim = 1usize << num_sites.min(MAX_SITES);
        let a = 1.0 / (dim as f64).sqrt();
        Self::new(num_sites, vec![C64::new(a, 0.0); dim])
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescales to unit norm and returns the squared norm it had before.
    pub fn normalize(&mut self) -> Result<f64> {
        let n2 = self.norm_sqr();
        if !(n2 > 1e-300) || !n2.is_finite() {
            return Err(Error::DegenerateState);
        }
        let s = 1.0 / n2.sqrt();
        self.amps.iter_mut().for_each(|a| *a *= s);
        Ok(n2)
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// `a ⊗ b` with `a` on the low sites `0..a.num_sites` and `b` on the
    /// sites above it, i.e. joint index `x + 2^{N_a}·y`.
    pub fn tensor_product(a: &StateVector, b: &StateVector) -> Result<StateVector> {
        let num_sites = a.num_sites + b.num_sites;
        if num_sites > MAX_SITES {
            return Err(Error::UnsupportedSize { num_sites, max: MAX_SITES });
        }
        let mut amps = Vec::with_capacity(a.dim() * b.dim());
        for &y in &b.amps {
            amps.extend(a.amps.iter().map(|&x| x * y));
        }
        StateVector::new(num_sites, amps)
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.num_sites {
            return Err(Error::SiteOutOfRange { site, num_sites: self.num_sites });
        }
        Ok(())
    }

    pub fn apply_single_site(&self, site: usize, gate: &Gate) -> Result<StateVector> {
        let mut out = self.clone();
        out.apply_single_site_mut(site, gate)?;
        Ok(out)
    }

    pub fn apply_single_site_mut(&mut self, site: usize, gate: &Gate) -> Result<()> {
        self.check_site(site)?;
        let stride = 1usize << site;
        for block in self.amps.chunks_exact_mut(stride << 1) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a0, *a1);
                *a0 = gate[0][0] * x + gate[0][1] * y;
                *a1 = gate[1][0] * x + gate[1][1] * y;
            }
        }
        Ok(())
    }

    /// Applies a real symmetric gate `[[p, q], [q, p]]` (e.g. `e^{θX}`) to
    /// every site in turn.
    pub(crate) fn apply_real_symmetric_all_sites(&mut self, p: f64, q: f64) {
        for site in 0..self.num_sites {
            let stride = 1usize << site;
            for block in self.amps.chunks_exact_mut(stride << 1) {
                let (lo, hi) = block.split_at_mut(stride);
                for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (x, y) = (*a0, *a1);
                    *a0 = x * p + y * q;
                    *a1 = x * q + y * p;
                }
            }
        }
    }

    pub fn apply_diagonal(&self, diag: &[C64]) -> Result<StateVector> {
        let mut out = self.clone();
        out.apply_diagonal_mut(diag)?;
        Ok(out)
    }

    pub fn apply_diagonal_mut(&mut self, diag: &[C64]) -> Result<()> {
        if diag.len() != self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), found: diag.len() });
        }
        self.amps.iter_mut().zip(diag).for_each(|(a, d)| *a *= d);
        Ok(())
    }

    pub(crate) fn apply_real_diagonal_mut(&mut self, diag: &[f64]) -> Result<()> {
        if diag.len() != self.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), found: diag.len() });
        }
        self.amps.iter_mut().zip(diag).for_each(|(a, d)| *a *= d);
        Ok(())
    }

    /// Reduced density matrix on `keep`. `keep[0]` becomes bit 0 of the
    /// subsystem index, `keep[1]` bit 1 and so on.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        if keep.is_empty() || keep.len() > MAX_TRACE_SITES {
            return Err(Error::TooManySites { requested: keep.len(), cap: MAX_TRACE_SITES });
        }
        let mut mask = 0usize;
        for &s in keep {
            self.check_site(s)?;
            if mask & (1 << s) != 0 {
                return Err(Error::DuplicateSite(s));
            }
            mask |= 1 << s;
        }
        let d = 1usize << keep.len();
        // Scatter each subsystem index to its full-register bit pattern.
        let spread: Vec<usize> = (0..d)
            .map(|k| keep.iter().enumerate().filter(|(bit, _)| (k >> bit) & 1 == 1).fold(0, |acc, (_, &s)| acc | (1 << s)))
            .collect();
        let mut rho = DMatrix::<C64>::zeros(d, d);
        for rest in 0..self.dim() {
            if rest & mask != 0 {
                continue;
            }
            for (r, &sr) in spread.iter().enumerate() {
                let ar = self.amps[rest | sr];
                if ar == ZERO {
                    continue;
                }
                for (c, &sc) in spread.iter().enumerate().skip(r) {
                    rho[(r, c)] += ar * self.amps[rest | sc].conj();
                }
            }
        }
        for r in 0..d {
            rho[(r, r)].im = 0.0;
            for c in r + 1..d {
                rho[(c, r)] = rho[(r, c)].conj();
            }
        }
        let tr: f64 = (0..d).map(|i| rho[(i, i)].re).sum();
        if !(tr > 1e-300) {
            return Err(Error::DegenerateState);
        }
        rho.iter_mut().for_each(|x| *x /= tr);
        Ok(DensityMatrix { entries: rho })
    }

    /// `⟨ψ|P|ψ⟩` for a Pauli string on a normalized state.
    pub fn expectation(&self, op: &PauliString) -> Result<f64> {
        let value = self.expectation_complex(op)?;
        let tol = 1e-8;
        if value.im.abs() > tol {
            return Err(Error::ImaginaryResidue { value: value.im, tol });
        }
        Ok(value.re)
    }

    fn expectation_complex(&self, op: &PauliString) -> Result<C64> {
        let mut flip = 0usize;
        let mut z_mask = 0usize;
        let mut num_y = 0u32;
        for (&site, &p) in &op.factors {
            self.check_site(site)?;
            match p {
                Pauli::X => flip |= 1 << site,
                Pauli::Y => {
                    flip |= 1 << site;
                    z_mask |= 1 << site;
                    num_y += 1;
                }
                Pauli::Z => z_mask |= 1 << site,
            }
        }
        // Y = i·X·Z, so P|b⟩ = i^{#Y}·(-1)^{popcount(b & z_mask)}·|b ^ flip⟩.
        let phase = match num_y % 4 {
            0 => ONE,
            1 => C64::new(0.0, 1.0),
            2 => -ONE,
            _ => C64::new(0.0, -1.0),
        };
        let mut acc = ZERO;
        for (b, &a) in self.amps.iter().enumerate() {
            let term = self.amps[b ^ flip].conj() * a;
            if (b & z_mask).count_ones() % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        Ok(acc * phase)
    }

    /// Von Neumann entropy (natural log) of the `len` consecutive sites
    /// starting at `segment.start`, wrapping around the periodic chain.
    pub fn entanglement_entropy(&self, segment: Range<usize>) -> Result<f64> {
        if segment.end <= segment.start {
            return Ok(0.0);
        }
        let len = segment.end - segment.start;
        if len > self.num_sites {
            return Err(Error::TooManySites { requested: len, cap: self.num_sites });
        }
        self.check_site(segment.start)?;
        // S(A) = S(complement) for pure states; trace the smaller side.
        let (start, len) = if 2 * len > self.num_sites {
            ((segment.start + len) % self.num_sites, self.num_sites - len)
        } else {
            (segment.start, len)
        };
        if len == 0 {
            return Ok(0.0);
        }
        let keep: Vec<usize> = (0..len).map(|k| (start + k) % self.num_sites).collect();
        Ok(self.partial_trace(&keep)?.von_neumann_entropy())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Gate {
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::X => [[ZERO, ONE], [ONE, ZERO]],
            Pauli::Y => [[ZERO, -i], [i, ZERO]],
            Pauli::Z => [[ONE, ZERO], [ZERO, -ONE]],
        }
    }
}

/// Tensor product of single-site Paulis; identity on unlisted sites.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PauliString {
    factors: BTreeMap<usize, Pauli>,
}

impl PauliString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(site: usize, p: Pauli) -> Self {
        Self::new().with(site, p)
    }

    pub fn pair(a: usize, pa: Pauli, b: usize, pb: Pauli) -> Self {
        Self::new().with(a, pa).with(b, pb)
    }

    /// Adds (or replaces) the factor on `site`.
    pub fn with(mut self, site: usize, p: Pauli) -> Self {
        self.factors.insert(site, p);
        self
    }

    pub fn factors(&self) -> impl Iterator<Item = (usize, Pauli)> + '_ {
        self.factors.iter().map(|(&s, &p)| (s, p))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "I");
        }
        for (s, p) in &self.factors {
            write!(f, "{p:?}{s}")?;
        }
        Ok(())
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    pub const TRACE_TOL: f64 = 1e-12;
    pub const PSD_TOL: f64 = 1e-10;

    /// Validates all three invariants; Hermiticity must hold exactly.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        let rho = Self { entries };
        rho.check()?;
        Ok(rho)
    }

    /// Symmetrizes `(M + M†)/2` before validating trace and positivity.
    pub fn from_hermitian_part(m: DMatrix<C64>) -> Result<Self> {
        let herm = (&m + m.adjoint()).map(|x| x * 0.5);
        let mut rho = Self { entries: herm };
        for i in 0..rho.dim() {
            rho.entries[(i, i)].im = 0.0;
        }
        rho.check()?;
        Ok(rho)
    }

    pub fn from_pure(state: &StateVector) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        Self::new(&v * v.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let mut m = DMatrix::<C64>::identity(dim, dim);
        m.iter_mut().for_each(|x| *x /= dim as f64);
        Self { entries: m }
    }

    /// Row-major entries.
    pub fn from_row_major(dim: usize, data: &[C64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::LengthMismatch { expected: dim * dim, found: data.len() });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }

    pub fn row_major(&self) -> Vec<C64> {
        let d = self.dim();
        (0..d * d).map(|k| self.entries[(k / d, k % d)]).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.entries.clone()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Reports the first violated invariant, if any.
    pub fn check(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.entries.ncols() != d {
            return Err(Error::InvalidDensityMatrix("matrix must be square and nonempty".into()));
        }
        if self.entries.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::InvalidDensityMatrix("non-finite entry".into()));
        }
        for r in 0..d {
            for c in r..d {
                if self.entries[(r, c)] != self.entries[(c, r)].conj() {
                    return Err(Error::InvalidDensityMatrix(format!("not Hermitian at ({r}, {c})")));
                }
            }
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > Self::TRACE_TOL {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < -Self::PSD_TOL {
            return Err(Error::InvalidDensityMatrix(format!("minimum eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_ok()
    }

    /// `-Tr ρ ln ρ`.
    pub fn von_neumann_entropy(&self) -> f64 {
        self.eigenvalues().into_iter().filter(|&p| p > ENTROPY_CUTOFF).map(|p| -p * p.ln()).sum()
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::LengthMismatch { expected: self.dim(), found: other.dim() });
        }
        let diff = &self.entries - &other.entries;
        let herm = (&diff + diff.adjoint()).map(|x| x * 0.5);
        Ok(0.5 * SymmetricEigen::new(herm).eigenvalues.iter().map(|x| x.abs()).sum::<f64>())
    }

    /// `Tr(ρ·op)`, real part.
    pub fn expect(&self, op: &DMatrix<C64>) -> f64 {
        (&self.entries * op).trace().re
    }

    /// Partial trace onto the given qubits of a multi-qubit density matrix,
    /// using the same bit ordering as [`StateVector::partial_trace`].
    pub fn reduce(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let d = self.dim();
        if !d.is_power_of_two() {
            return Err(Error::InvalidDensityMatrix("dimension is not a power of two".into()));
        }
        let n = d.trailing_zeros() as usize;
        let mut mask = 0usize;
        for &s in keep {
            if s >= n {
                return Err(Error::SiteOutOfRange { site: s, num_sites: n });
            }
            if mask & (1 << s) != 0 {
                return Err(Error::DuplicateSite(s));
            }
            mask |= 1 << s;
        }
        let dk = 1usize << keep.len();
        let spread: Vec<usize> = (0..dk)
            .map(|k| keep.iter().enumerate().filter(|(bit, _)| (k >> bit) & 1 == 1).fold(0, |acc, (_, &s)| acc | (1 << s)))
            .collect();
        let mut out = DMatrix::<C64>::zeros(dk, dk);
        for rest in (0..d).filter(|r| r & mask == 0) {
            for (r, &sr) in spread.iter().enumerate() {
                for (c, &sc) in spread.iter().enumerate() {
                    out[(r, c)] += self.entries[(rest | sr, rest | sc)];
                }
            }
        }
        DensityMatrix::from_hermitian_part(out)
    }
}

/// `cosh(θ)·I + sinh(θ)·X`, the closed form of `e^{θX}`.
pub fn exp_x_gate(theta: f64) -> Gate {
    let (c, s) = (C64::new(theta.cosh(), 0.0), C64::new(theta.sinh(), 0.0));
    [[c, s], [s, c]]
}

/// Embeds a single-qubit operator as a `d×d` matrix.
pub fn gate_matrix(g: &Gate) -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[g[0][0], g[0][1], g[1][0], g[1][1]])
}

/// Kronecker product with `high` on the more significant qubit.
pub fn kron(high: &DMatrix<C64>, low: &DMatrix<C64>) -> DMatrix<C64> {
    high.kronecker(low)
}
