//! Critical transverse-field Ising chain `H = -Σ Z_i Z_{i+1} - Σ X_i` with
//! periodic boundaries, and Trotterized imaginary-time state preparation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::qstate::{Pauli, PauliString, StateVector};

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionConfig {
    pub num_sites: usize,
    /// Imaginary-time step.
    pub dt: f64,
    pub max_steps: usize,
    /// Convergence threshold on `|ΔE|` between consecutive steps.
    pub energy_tol: f64,
    /// Steps applied to `|+⟩^⊗N` to make the ancilla paramagnet.
    pub paramagnet_steps: usize,
}

impl EvolutionConfig {
    pub const DEFAULT_DT: f64 = 0.05;
    pub const DEFAULT_ENERGY_TOL: f64 = 1e-10;
    pub const DEFAULT_MAX_STEPS: usize = 100_000;
    pub const DEFAULT_PARAMAGNET_STEPS: usize = 5;

    pub fn new(num_sites: usize) -> Self {
        Self {
            num_sites,
            dt: Self::DEFAULT_DT,
            max_steps: Self::DEFAULT_MAX_STEPS,
            energy_tol: Self::DEFAULT_ENERGY_TOL,
            paramagnet_steps: Self::DEFAULT_PARAMAGNET_STEPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_sites < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 sites, got {}", self.num_sites)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.energy_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("energy_tol must be positive, got {}", self.energy_tol)));
        }
        Ok(())
    }
}

/// `Σ_{i=1..N} z_i z_{i+1}` for every basis state, periodic. For `N = 2` the
/// two terms are the same bond counted twice.
pub fn zz_diagonal(num_sites: usize) -> Result<Vec<f64>> {
    if num_sites < 2 {
        return Err(Error::InvalidConfig(format!("ZZ diagonal needs N >= 2, got {num_sites}")));
    }
    let all = (1usize << num_sites) - 1;
    Ok((0..1usize << num_sites)
        .map(|b| {
            // Bond i is anti-aligned iff bit i differs from bit i+1 (mod N).
            let rotated = ((b >> 1) | (b << (num_sites - 1))) & all;
            let anti = (b ^ rotated).count_ones() as f64;
            num_sites as f64 - 2.0 * anti
        })
        .collect())
}

/// `Σ_i ⟨X_i⟩`.
fn total_x(state: &StateVector) -> f64 {
    let amps = state.amplitudes();
    let mut acc = 0.0;
    for site in 0..state.num_sites() {
        let stride = 1usize << site;
        for block in amps.chunks_exact(stride << 1) {
            let (lo, hi) = block.split_at(stride);
            acc += lo.iter().zip(hi).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
        }
    }
    2.0 * acc
}

fn energy_with(state: &StateVector, zz: &[f64]) -> f64 {
    let zz_part: f64 = state.amplitudes().iter().zip(zz).map(|(a, d)| a.norm_sqr() * d).sum();
    -zz_part - total_x(state)
}

/// `⟨H⟩` on a normalized state.
pub fn energy(state: &StateVector) -> Result<f64> {
    Ok(energy_with(state, &zz_diagonal(state.num_sites())?))
}

/// One Trotter step `(Π e^{Δt X_i})(Π e^{Δt Z_i Z_{i+1}})` followed by
/// renormalization, with the diagonal factor precomputed.
#[derive(Clone, Debug)]
pub struct TrotterStepper {
    dt: f64,
    zz: Vec<f64>,
    exp_zz: Vec<f64>,
}

impl TrotterStepper {
    pub fn new(num_sites: usize, dt: f64) -> Result<Self> {
        let zz = zz_diagonal(num_sites)?;
        let exp_zz = zz.iter().map(|&d| (dt * d).exp()).collect();
        Ok(Self { dt, zz, exp_zz })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &mut StateVector) -> Result<()> {
        state.apply_real_diagonal_mut(&self.exp_zz)?;
        state.apply_real_symmetric_all_sites(self.dt.cosh(), self.dt.sinh());
        state.normalize()?;
        Ok(())
    }

    /// `e^{θ Σ X_i}` on every site, renormalized.
    pub fn x_rotation(&self, state: &mut StateVector, theta: f64) -> Result<()> {
        state.apply_real_symmetric_all_sites(theta.cosh(), theta.sinh());
        state.normalize()?;
        Ok(())
    }

    pub fn energy(&self, state: &StateVector) -> f64 {
        energy_with(state, &self.zz)
    }
}

pub fn trotter_step(state: &StateVector, dt: f64) -> Result<StateVector> {
    let mut out = state.clone();
    TrotterStepper::new(state.num_sites(), dt)?.step(&mut out)?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub state: StateVector,
    /// Trotter steps taken until `|ΔE| < energy_tol`.
    pub steps: usize,
    pub final_delta: f64,
    pub energy: f64,
}

/// Imaginary-time evolution of `|+⟩^⊗N` until the energy change per step
/// drops below `energy_tol`.
///
/// The fixed point of the first-order product `e^{ΔtX} e^{ΔtZZ}` is
/// `e^{ΔtX/2}` applied to the fixed point of the symmetric product
/// `e^{ΔtX/2} e^{ΔtZZ} e^{ΔtX/2}`. Since `|+⟩^⊗N` is an `X` eigenstate, a
/// closing `e^{-ΔtX/2}` turns the K-step product into exactly K symmetric
/// steps, whose splitting error is second order in `Δt`.
pub fn prepare_ground_state(config: &EvolutionConfig) -> Result<GroundState> {
    config.validate()?;
    let stepper = TrotterStepper::new(config.num_sites, config.dt)?;
    let mut state = StateVector::plus_state(config.num_sites)?;
    let mut e_prev = stepper.energy(&state);
    let mut delta = f64::INFINITY;
    for step in 1..=config.max_steps {
        stepper.step(&mut state)?;
        let e = stepper.energy(&state);
        delta = (e - e_prev).abs();
        e_prev = e;
        if delta < config.energy_tol {
            stepper.x_rotation(&mut state, -0.5 * config.dt)?;
            let energy = stepper.energy(&state);
            return Ok(GroundState { state, steps: step, final_delta: delta, energy });
        }
    }
    Err(Error::NotConverged { steps: config.max_steps, last_delta: delta })
}

/// Exactly `paramagnet_steps` Trotter steps applied to `|+⟩^⊗N`.
pub fn prepare_paramagnet(config: &EvolutionConfig) -> Result<StateVector> {
    config.validate()?;
    let stepper = TrotterStepper::new(config.num_sites, config.dt)?;
    let mut state = StateVector::plus_state(config.num_sites)?;
    for _ in 0..config.paramagnet_steps {
        stepper.step(&mut state)?;
    }
    Ok(state)
}

/// `(N/π)·sin(πn/N)`.
pub fn chord_distance(num_sites: usize, separation: usize) -> f64 {
    let n = num_sites as f64;
    n / PI * (PI * separation as f64 / n).sin()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { expected: xs.len(), found: ys.len() });
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::DegenerateFit { points: n });
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit { points: n });
    }
    let slope = sxy / sxx;
    Ok(LinearFit { slope, intercept: my - slope * mx })
}

/// `value ≈ amplitude · chord^{-exponent}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub amplitude: f64,
}

fn power_law_fit(chords: &[f64], values: &[f64]) -> Result<PowerLawFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        chords.iter().zip(values).filter(|(_, &v)| v > 0.0).map(|(c, v)| (c.ln(), v.ln())).unzip();
    let fit = linear_fit(&xs, &ys)?;
    Ok(PowerLawFit { exponent: -fit.slope, amplitude: fit.intercept.exp() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub separation: usize,
    pub chord: f64,
    /// `⟨Z_0 Z_n⟩`.
    pub zz: f64,
    /// `⟨X_0 X_n⟩ - ⟨X_0⟩⟨X_n⟩`.
    pub xx_connected: f64,
    /// Entropy of sites `0..n`.
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    pub num_sites: usize,
    pub energy: f64,
    pub x_mean: f64,
    pub z_mean: f64,
    pub rows: Vec<ScalingRow>,
    pub zz_fit: PowerLawFit,
    /// `None` when fewer than three connected XX values are positive.
    pub xx_fit: Option<PowerLawFit>,
    /// `S_n` against `(1/3)·ln chord(n)`.
    pub entropy_fit: LinearFit,
}

/// Correlators and entropies against separation from site 0, with
/// chord-distance fits. Assumes a translation-invariant state.
pub fn scaling_diagnostics(state: &StateVector) -> Result<ScalingReport> {
    let n_sites = state.num_sites();
    let half = n_sites / 2;
    if half < 3 {
        return Err(Error::DegenerateFit { points: half });
    }
    let x0 = state.expectation(&PauliString::single(0, Pauli::X))?;
    let z0 = state.expectation(&PauliString::single(0, Pauli::Z))?;
    let mut rows = Vec::with_capacity(half);
    for n in 1..=half {
        let xn = state.expectation(&PauliString::single(n, Pauli::X))?;
        let zz = state.expectation(&PauliString::pair(0, Pauli::Z, n, Pauli::Z))?;
        let xx = state.expectation(&PauliString::pair(0, Pauli::X, n, Pauli::X))?;
        rows.push(ScalingRow {
            separation: n,
            chord: chord_distance(n_sites, n),
            zz,
            xx_connected: xx - x0 * xn,
            entropy: state.entanglement_entropy(0..n)?,
        });
    }
    let chords: Vec<f64> = rows.iter().map(|r| r.chord).collect();
    let zz: Vec<f64> = rows.iter().map(|r| r.zz).collect();
    let xx: Vec<f64> = rows.iter().map(|r| r.xx_connected).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.entropy).collect();
    let log_chords: Vec<f64> = chords.iter().map(|c| c.ln() / 3.0).collect();
    Ok(ScalingReport {
        num_sites: n_sites,
        energy: energy(state)?,
        x_mean: x0,
        z_mean: z0,
        zz_fit: power_law_fit(&chords, &zz)?,
        xx_fit: power_law_fit(&chords, &xx).ok(),
        entropy_fit: linear_fit(&log_chords, &s)?,
        rows,
    })
}
