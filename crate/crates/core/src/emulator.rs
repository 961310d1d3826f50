//! Gate-level circuits for the two-point-measurement experiment and a
//! shot-noise emulator that rebuilds the fluctuation-theorem statistics
//! from sampled counts.
//!
//! Qubit 0 is the most significant bit of every state index and bitstring.
//! The full register is `[M, S, R, V]`; transition circuits act on `[S, R]`.

use std::collections::BTreeMap;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densemath::{self, c, re, CMatrix, MathError, C64};
use crate::random::{substream, SimRng};
use crate::states::{thermal_ground_population, StateError};
use crate::trajectories::{
    self, detailed_ft, linear_fit, Conditioning, DftPoint, FunctionalKind, LocalTables, TrajError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmulatorError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error("gate on qubit {qubit} outside a {width}-qubit register")]
    QubitRange { qubit: usize, width: usize },
    #[error("invalid gate: {0}")]
    Gate(String),
    #[error("invalid shot configuration: {0}")]
    Shots(String),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("preparation angles did not converge (residuals {residual_marginal:e}, {residual_offdiag:e})")]
    NoConvergence {
        residual_marginal: f64,
        residual_offdiag: f64,
    },
    #[error("invalid experiment parameter: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, EmulatorError>;

pub const CIRCUIT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gate {
    Ry { qubit: usize, theta: f64 },
    PhaseS { qubit: usize },
    PhaseSdg { qubit: usize },
    Hadamard { qubit: usize },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::Ry { qubit, .. }
            | Gate::PhaseS { qubit }
            | Gate::PhaseSdg { qubit }
            | Gate::Hadamard { qubit } => {
                vec![qubit]
            }
            Gate::Cnot { control, target } => vec![control, target],
        }
    }

    /// Matrix on the gate's own qubits, in the order of `qubits()`.
    pub fn local_matrix(&self) -> CMatrix {
        let m2 = |v: [C64; 4]| CMatrix::from_fn(2, 2, |i, j| v[2 * i + j]);
        match *self {
            Gate::Ry { theta, .. } => {
                let (s, co) = (theta / 2.0).sin_cos();
                m2([re(co), re(-s), re(s), re(co)])
            }
            Gate::PhaseS { .. } => m2([re(1.0), re(0.0), re(0.0), c(0.0, 1.0)]),
            Gate::PhaseSdg { .. } => m2([re(1.0), re(0.0), re(0.0), c(0.0, -1.0)]),
            Gate::Hadamard { .. } => {
                let h = std::f64::consts::FRAC_1_SQRT_2;
                m2([re(h), re(h), re(h), re(-h)])
            }
            Gate::Cnot { .. } => CMatrix::from_fn(4, 4, |i, j| {
                let perm = [0, 1, 3, 2];
                if perm[i] == j {
                    re(1.0)
                } else {
                    re(0.0)
                }
            }),
        }
    }

    fn remapped(&self, map: &[usize]) -> Gate {
        match *self {
            Gate::Ry { qubit, theta } => Gate::Ry {
                qubit: map[qubit],
                theta,
            },
            Gate::PhaseS { qubit } => Gate::PhaseS { qubit: map[qubit] },
            Gate::PhaseSdg { qubit } => Gate::PhaseSdg { qubit: map[qubit] },
            Gate::Hadamard { qubit } => Gate::Hadamard { qubit: map[qubit] },
            Gate::Cnot { control, target } => Gate::Cnot {
                control: map[control],
                target: map[target],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub width: usize,
    pub gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(width: usize) -> Result<Self> {
        if width == 0 || 1usize << width > densemath::MAX_DIM {
            return Err(EmulatorError::Gate(format!(
                "unsupported register width {width}"
            )));
        }
        Ok(Self {
            width,
            gates: Vec::new(),
        })
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        let qs = gate.qubits();
        for &q in &qs {
            if q >= self.width {
                return Err(EmulatorError::QubitRange {
                    qubit: q,
                    width: self.width,
                });
            }
        }
        if let Gate::Cnot { control, target } = gate {
            if control == target {
                return Err(EmulatorError::Gate("CNOT control equals target".into()));
            }
        }
        if let Gate::Ry { theta, .. } = gate {
            if !theta.is_finite() {
                return Err(EmulatorError::Gate("non-finite rotation angle".into()));
            }
        }
        self.gates.push(gate);
        Ok(self)
    }

    /// Append `other` with its qubit `k` placed on `qubits[k]`.
    pub fn append_on(&mut self, other: &Circuit, qubits: &[usize]) -> Result<&mut Self> {
        if qubits.len() != other.width {
            return Err(EmulatorError::Gate(format!(
                "mapping lists {} qubits for a {}-qubit circuit",
                qubits.len(),
                other.width
            )));
        }
        for g in &other.gates {
            self.push(g.remapped(qubits))?;
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        1 << self.width
    }

    pub fn matrix(&self) -> Result<CMatrix> {
        let dims = vec![2; self.width];
        let mut u = CMatrix::identity(self.dim());
        for g in &self.gates {
            u = &densemath::embed(&g.local_matrix(), &g.qubits(), &dims)? * &u;
        }
        Ok(u)
    }

    /// Output state for the all-zero input.
    pub fn statevector(&self) -> Result<Vec<C64>> {
        Ok(self.matrix()?.column(0))
    }

    /// Outcome distribution of measuring `measured` (in that bit order) on
    /// the all-zero input.
    pub fn probabilities(&self, measured: &[usize]) -> Result<Vec<f64>> {
        for &q in measured {
            if q >= self.width {
                return Err(EmulatorError::QubitRange {
                    qubit: q,
                    width: self.width,
                });
            }
        }
        let psi = self.statevector()?;
        let mut out = vec![0.0; 1 << measured.len()];
        for (idx, amp) in psi.iter().enumerate() {
            let mut k = 0;
            for &q in measured {
                k = (k << 1) | ((idx >> (self.width - 1 - q)) & 1);
            }
            out[k] += amp.norm_sqr();
        }
        Ok(out)
    }
}

/// `cos²θ₁ - (2p-1)²)(1 - sin θ₁) - 4εp(1-p)cos²θ₁`, whose root in
/// `[0, arccos|2p-1|]` fixes θ₁ once θ₂ is eliminated.
fn prep_root_function(theta1: f64, p: f64, eps: f64) -> f64 {
    let c2 = theta1.cos().powi(2);
    (c2 - (2.0 * p - 1.0).powi(2)) * (1.0 - theta1.sin()) - 4.0 * eps * p * (1.0 - p) * c2
}

/// Residuals of the marginal and off-diagonal determining equations.
pub fn prep_residuals(p: f64, eps: f64, theta1: f64, theta2: f64) -> (f64, f64) {
    let marginal = 0.5
        * (((theta1 + theta2) / 2.0).cos().powi(2) + ((theta1 - theta2) / 2.0).cos().powi(2))
        - p;
    let offdiag =
        0.5 * theta2.sin().powi(2) * (theta1 / 2.0 - std::f64::consts::FRAC_PI_4).sin().powi(2)
            - eps * p * (1.0 - p);
    (marginal, offdiag)
}

/// Angles of `Ry(θ₁)_M; CNOT(M→S); Ry(θ₂)⊗Ry(θ₂)` whose output has the
/// computational diagonal of the classically correlated state.
pub fn solve_prep_angles(p: f64, eps_c: f64) -> Result<(f64, f64)> {
    crate::states::classical_corr_state(p, eps_c)?;
    if !(0.0..=1.0).contains(&eps_c) || !(0.0..=1.0).contains(&p) {
        return Err(EmulatorError::Parameter(format!(
            "need p, eps in [0,1], got {p}, {eps_c}"
        )));
    }
    let upper = (2.0 * p - 1.0).abs().acos();
    let (mut lo, mut hi) = (0.0, upper);
    let f_lo = prep_root_function(lo, p, eps_c);
    if f_lo <= 0.0 {
        hi = 0.0;
    } else if prep_root_function(hi, p, eps_c) < 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if prep_root_function(mid, p, eps_c) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let theta1 = hi;
    let cos2 = if theta1.cos().abs() > 0.0 {
        (2.0 * p - 1.0) / theta1.cos()
    } else {
        1.0
    };
    let theta2 = cos2.clamp(-1.0, 1.0).acos();
    let (rm, ro) = prep_residuals(p, eps_c, theta1, theta2);
    if rm.abs() > 1e-10 || ro.abs() > 1e-10 {
        return Err(EmulatorError::NoConvergence {
            residual_marginal: rm,
            residual_offdiag: ro,
        });
    }
    Ok((theta1, theta2))
}

pub fn prep_circuit(theta1: f64, theta2: f64) -> Result<Circuit> {
    let mut circ = Circuit::new(2)?;
    circ.push(Gate::Ry {
        qubit: 0,
        theta: theta1,
    })?
    .push(Gate::Cnot {
        control: 0,
        target: 1,
    })?
    .push(Gate::Ry {
        qubit: 0,
        theta: theta2,
    })?
    .push(Gate::Ry {
        qubit: 1,
        theta: theta2,
    })?;
    Ok(circ)
}

/// Which formula fixes the thermal-preparation rotation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermalAngle {
    /// `2 arctan(e^{-βE/2})`, which makes `R` thermal.
    #[default]
    Thermal,
    /// `2 arctan(e^{βE})`, kept for comparison; does not yield a thermal `R`.
    Inverted,
}

pub fn thermal_prep_angle(beta: f64, e_r: f64) -> f64 {
    thermal_prep_angle_with(beta, e_r, ThermalAngle::Thermal)
}

pub fn thermal_prep_angle_with(beta: f64, e_r: f64, rule: ThermalAngle) -> f64 {
    match rule {
        ThermalAngle::Thermal => 2.0 * (-0.5 * beta * e_r).exp().atan(),
        ThermalAngle::Inverted => 2.0 * (beta * e_r).exp().atan(),
    }
}

/// `Ry(θ₃)` on R then `CNOT(R→V)`: V purifies R.
pub fn thermal_circuit(theta3: f64) -> Result<Circuit> {
    let mut circ = Circuit::new(2)?;
    circ.push(Gate::Ry {
        qubit: 0,
        theta: theta3,
    })?
    .push(Gate::Cnot {
        control: 0,
        target: 1,
    })?;
    Ok(circ)
}

/// Two-CNOT realization of the XY exchange gate on `[S, R]`.
pub fn decompose_xy(g: f64) -> Result<Circuit> {
    let mut circ = Circuit::new(2)?;
    circ.push(Gate::PhaseS { qubit: 0 })?
        .push(Gate::PhaseS { qubit: 1 })?
        .push(Gate::Hadamard { qubit: 0 })?
        .push(Gate::Cnot {
            control: 0,
            target: 1,
        })?
        .push(Gate::Ry {
            qubit: 0,
            theta: 2.0 * g,
        })?
        .push(Gate::Ry {
            qubit: 1,
            theta: 2.0 * g,
        })?
        .push(Gate::Cnot {
            control: 0,
            target: 1,
        })?
        .push(Gate::Hadamard { qubit: 0 })?
        .push(Gate::PhaseSdg { qubit: 0 })?
        .push(Gate::PhaseSdg { qubit: 1 })?;
    Ok(circ)
}

/// Max-abs deviation of `a` from `b` after removing the best global phase.
pub fn phase_aligned_deviation(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap: C64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| y.conj() * x)
        .sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        re(1.0)
    };
    a.max_abs_diff(&b.scale(phase))
}

/// `P(j → k) = |<k|U|j>|²`, indexed `[j][k]`.
pub fn transition_matrix(u: &CMatrix) -> Result<Vec<Vec<f64>>> {
    u.ensure_unitary(CIRCUIT_TOL)?;
    let n = u.rows();
    Ok((0..n)
        .map(|j| (0..n).map(|k| u[(k, j)].norm_sqr()).collect())
        .collect())
}

/// Prepare computational basis state `input` (bit order as the register)
/// with `Ry(π)` flips, then run `body`.
fn basis_input_circuit(width: usize, input: usize, body: &Circuit) -> Result<Circuit> {
    let mut circ = Circuit::new(width)?;
    for q in 0..width {
        if (input >> (width - 1 - q)) & 1 == 1 {
            circ.push(Gate::Ry {
                qubit: q,
                theta: std::f64::consts::PI,
            })?;
        }
    }
    let all: Vec<usize> = (0..width).collect();
    circ.append_on(body, &all)?;
    Ok(circ)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotConfig {
    pub shots_per_rep: u64,
    pub reps: usize,
    pub seed: u64,
    /// Independent per-qubit probability of reading a bit flipped.
    pub readout_flip_prob: Option<f64>,
}

impl ShotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shots_per_rep == 0 || self.reps == 0 {
            return Err(EmulatorError::Shots(
                "shots_per_rep and reps must be at least 1".into(),
            ));
        }
        if let Some(q) = self.readout_flip_prob {
            if !(0.0..=1.0).contains(&q) {
                return Err(EmulatorError::Shots(format!(
                    "readout flip probability {q} outside [0,1]"
                )));
            }
        }
        Ok(())
    }
}

impl Default for ShotConfig {
    fn default() -> Self {
        Self {
            shots_per_rep: 8192,
            reps: 5,
            seed: 0,
            readout_flip_prob: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountsHistogram {
    pub num_bits: usize,
    pub shots_per_rep: u64,
    /// `counts[rep][outcome]`.
    pub counts: Vec<Vec<u64>>,
}

impl CountsHistogram {
    pub fn reps(&self) -> usize {
        self.counts.len()
    }

    pub fn bitstring(&self, outcome: usize) -> String {
        (0..self.num_bits)
            .map(|q| {
                if (outcome >> (self.num_bits - 1 - q)) & 1 == 1 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect()
    }

    pub fn frequencies(&self, rep: usize) -> Vec<f64> {
        let n = self.shots_per_rep as f64;
        self.counts[rep].iter().map(|&k| k as f64 / n).collect()
    }

    pub fn pooled_frequencies(&self) -> Vec<f64> {
        let total = (self.shots_per_rep * self.reps() as u64) as f64;
        let mut out = vec![0.0; 1 << self.num_bits];
        for rep in &self.counts {
            for (o, &k) in rep.iter().enumerate() {
                out[o] += k as f64;
            }
        }
        out.iter().map(|k| k / total).collect()
    }

    /// Across-rep mean and standard error of each outcome frequency.
    pub fn mean_and_std_error(&self) -> Vec<(f64, f64)> {
        (0..1 << self.num_bits)
            .map(|o| {
                mean_std_error(
                    &(0..self.reps())
                        .map(|r| self.frequencies(r)[o])
                        .collect::<Vec<_>>(),
                )
            })
            .collect()
    }

    /// Rows `(bitstring, count)` of one rep.
    pub fn rows(&self, rep: usize) -> Vec<(String, u64)> {
        self.counts[rep]
            .iter()
            .enumerate()
            .map(|(o, &k)| (self.bitstring(o), k))
            .collect()
    }

    /// Combine reps of two histograms of the same shape.
    pub fn merge(&self, other: &CountsHistogram) -> Result<CountsHistogram> {
        if self.num_bits != other.num_bits || self.shots_per_rep != other.shots_per_rep {
            return Err(EmulatorError::Distribution(
                "histograms have different shapes".into(),
            ));
        }
        let mut counts = self.counts.clone();
        counts.extend(other.counts.iter().cloned());
        Ok(CountsHistogram {
            num_bits: self.num_bits,
            shots_per_rep: self.shots_per_rep,
            counts,
        })
    }
}

/// Mean and `std / √n` (sample standard deviation); zero error for `n < 2`.
pub fn mean_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Distribution seen through independent per-bit flips with probability `q`.
pub fn apply_readout_flips(probs: &[f64], num_bits: usize, q: f64) -> Vec<f64> {
    let mut out = probs.to_vec();
    for bit in 0..num_bits {
        let mask = 1 << bit;
        let prev = out.clone();
        for (k, v) in out.iter_mut().enumerate() {
            *v = (1.0 - q) * prev[k] + q * prev[k ^ mask];
        }
    }
    out
}

fn multinomial(probs: &[f64], shots: u64, rng: &mut SimRng) -> Vec<u64> {
    let mut remaining = shots;
    let mut mass = 1.0;
    let mut out = vec![0; probs.len()];
    for (k, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = remaining;
            break;
        }
        let frac = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining, frac)
            .expect("probability clamped to [0,1]")
            .sample(rng);
        out[k] = draw;
        remaining -= draw;
        mass -= p;
    }
    out
}

fn check_distribution(probs: &[f64]) -> Result<usize> {
    let n = probs.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(EmulatorError::Distribution(format!(
            "length {n} is not a power of two"
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return Err(EmulatorError::Distribution(
            "negative or non-finite probability".into(),
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(EmulatorError::Distribution(format!(
            "probabilities sum to {total}"
        )));
    }
    Ok(n.trailing_zeros() as usize)
}

/// Seeded multinomial counts per rep; `stream` separates independent
/// circuits run under the same seed.
pub fn sample_counts(probs: &[f64], config: &ShotConfig, stream: u64) -> Result<CountsHistogram> {
    config.validate()?;
    let num_bits = check_distribution(probs)?;
    let clean: Vec<f64> = probs.iter().map(|p| p.max(0.0)).collect();
    let observed = match config.readout_flip_prob {
        Some(q) if q > 0.0 => apply_readout_flips(&clean, num_bits, q),
        _ => clean,
    };
    let counts = (0..config.reps)
        .map(|rep| {
            let mut rng = substream(config.seed, (stream << 32) | rep as u64);
            multinomial(&observed, config.shots_per_rep, &mut rng)
        })
        .collect();
    Ok(CountsHistogram {
        num_bits,
        shots_per_rep: config.shots_per_rep,
        counts,
    })
}

/// Parameters of the single-collision experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub beta: f64,
    pub e_s: f64,
    pub e_r: f64,
    pub noise: f64,
    pub g: f64,
    pub thermal_angle: ThermalAngle,
}

impl ExperimentConfig {
    /// `ε = 0.5`, `βE_S = 1`, `βE_R = 0.1`, `g = 1`.
    pub fn reference() -> Self {
        Self {
            beta: 1.0,
            e_s: 1.0,
            e_r: 0.1,
            noise: 0.5,
            g: 1.0,
            thermal_angle: ThermalAngle::Thermal,
        }
    }

    pub fn p(&self) -> f64 {
        thermal_ground_population(self.beta * self.e_s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta", self.beta),
            ("e_s", self.e_s),
            ("e_r", self.e_r),
            ("g", self.g),
        ] {
            if !v.is_finite() {
                return Err(EmulatorError::Parameter(format!("{name} must be finite")));
            }
        }
        if self.beta < 0.0 {
            return Err(EmulatorError::Parameter("beta must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(EmulatorError::Parameter(format!(
                "noise {} outside [0,1]",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Circuit index used to derive independent sampling streams.
const STREAM_INITIAL: u64 = 0;
const STREAM_FINAL: u64 = 1;
const STREAM_FORWARD: u64 = 2;
const STREAM_BACKWARD: u64 = 6;

/// Every circuit the experiment runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCircuits {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    /// Preparation on `[M, S, R, V]`; measure M, S, R.
    pub initial: Circuit,
    /// Preparation then the exchange gate on S, R; measure M, S.
    pub final_state: Circuit,
    /// `|a r>` then `U`, on `[S, R]`; index `2a + r`.
    pub forward: Vec<Circuit>,
    /// `|a' r'>` then `U†`, on `[S, R]`; index `2a' + r'`.
    pub backward: Vec<Circuit>,
}

/// Exact outcome distributions of the experiment circuits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDistributions {
    /// Over bits `M S R`.
    pub initial: Vec<f64>,
    /// Over bits `M S`.
    pub final_state: Vec<f64>,
    /// Over bits `S R`, one row per input.
    pub forward: Vec<Vec<f64>>,
    pub backward: Vec<Vec<f64>>,
}

pub const INITIAL_MEASURED: [usize; 3] = [0, 1, 2];
pub const FINAL_MEASURED: [usize; 2] = [0, 1];

impl ExperimentCircuits {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (theta1, theta2) = solve_prep_angles(config.p(), config.noise)?;
        let theta3 = thermal_prep_angle_with(config.beta, config.e_r, config.thermal_angle);
        let mut initial = Circuit::new(4)?;
        initial.append_on(&prep_circuit(theta1, theta2)?, &[0, 1])?;
        initial.append_on(&thermal_circuit(theta3)?, &[2, 3])?;
        let mut final_state = initial.clone();
        final_state.append_on(&decompose_xy(config.g)?, &[1, 2])?;
        let fwd_body = decompose_xy(config.g)?;
        let bwd_body = decompose_xy(-config.g)?;
        let forward = (0..4)
            .map(|j| basis_input_circuit(2, j, &fwd_body))
            .collect::<Result<_>>()?;
        let backward = (0..4)
            .map(|j| basis_input_circuit(2, j, &bwd_body))
            .collect::<Result<_>>()?;
        Ok(Self {
            theta1,
            theta2,
            theta3,
            initial,
            final_state,
            forward,
            backward,
        })
    }

    pub fn distributions(&self) -> Result<ExperimentDistributions> {
        Ok(ExperimentDistributions {
            initial: self.initial.probabilities(&INITIAL_MEASURED)?,
            final_state: self.final_state.probabilities(&FINAL_MEASURED)?,
            forward: self
                .forward
                .iter()
                .map(|c| c.probabilities(&[0, 1]))
                .collect::<Result<_>>()?,
            backward: self
                .backward
                .iter()
                .map(|c| c.probabilities(&[0, 1]))
                .collect::<Result<_>>()?,
        })
    }

    pub fn sample(&self, shots: &ShotConfig) -> Result<ExperimentCounts> {
        let d = self.distributions()?;
        let forward = d
            .forward
            .iter()
            .enumerate()
            .map(|(j, p)| sample_counts(p, shots, STREAM_FORWARD + j as u64))
            .collect::<Result<_>>()?;
        let backward = d
            .backward
            .iter()
            .enumerate()
            .map(|(j, p)| sample_counts(p, shots, STREAM_BACKWARD + j as u64))
            .collect::<Result<_>>()?;
        Ok(ExperimentCounts {
            initial: sample_counts(&d.initial, shots, STREAM_INITIAL)?,
            final_state: sample_counts(&d.final_state, shots, STREAM_FINAL)?,
            forward,
            backward,
        })
    }
}

impl ExperimentDistributions {
    /// Local trajectory tables in the computational basis (the eigenbasis
    /// of every local state in this experiment).
    pub fn tables(&self) -> LocalTables {
        let mut p_ab = [[0.0; 2]; 2];
        let mut p_r = [0.0; 2];
        for (k, &p) in self.initial.iter().enumerate() {
            let (m, s, r) = ((k >> 2) & 1, (k >> 1) & 1, k & 1);
            p_ab[s][m] += p;
            p_r[r] += p;
        }
        let mut p_ab_final = [[0.0; 2]; 2];
        for (k, &p) in self.final_state.iter().enumerate() {
            p_ab_final[k & 1][(k >> 1) & 1] += p;
        }
        let mut t_forward = [[0.0; 4]; 4];
        let mut t_backward = [[0.0; 4]; 4];
        for j in 0..4 {
            for k in 0..4 {
                t_forward[j][k] = self.forward[j][k];
                t_backward[j][k] = self.backward[j][k];
            }
        }
        LocalTables {
            p_ab,
            p_ab_final,
            p_r,
            p_r_final: p_r,
            t_forward,
            t_backward,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCounts {
    pub initial: CountsHistogram,
    pub final_state: CountsHistogram,
    pub forward: Vec<CountsHistogram>,
    pub backward: Vec<CountsHistogram>,
}

impl ExperimentCounts {
    pub fn reps(&self) -> usize {
        self.initial.reps()
    }

    fn distributions_with(
        &self,
        freq: impl Fn(&CountsHistogram) -> Vec<f64>,
    ) -> ExperimentDistributions {
        ExperimentDistributions {
            initial: freq(&self.initial),
            final_state: freq(&self.final_state),
            forward: self.forward.iter().map(&freq).collect(),
            backward: self.backward.iter().map(&freq).collect(),
        }
    }

    pub fn rep_tables(&self, rep: usize) -> LocalTables {
        self.distributions_with(|h| h.frequencies(rep)).tables()
    }

    pub fn pooled_tables(&self) -> LocalTables {
        self.distributions_with(|h| h.pooled_frequencies()).tables()
    }

    /// Every histogram with a name, for export.
    pub fn named(&self) -> Vec<(String, &CountsHistogram)> {
        let mut v = vec![
            ("initial".to_string(), &self.initial),
            ("final".to_string(), &self.final_state),
        ];
        for (j, h) in self.forward.iter().enumerate() {
            v.push((format!("forward_{j:02b}"), h));
        }
        for (j, h) in self.backward.iter().enumerate() {
            v.push((format!("backward_{j:02b}"), h));
        }
        v
    }
}

/// The three functionals the experiment reports, with the conditioning
/// under which each detailed relation is formed.
pub const REPORTED: [(FunctionalKind, Conditioning); 3] = [
    (FunctionalKind::SigmaSGivenMLocal, Conditioning::Memory),
    (FunctionalKind::SigmaS, Conditioning::None),
    (FunctionalKind::SigmaILocal, Conditioning::SystemReservoir),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtBin {
    pub condition: String,
    pub sigma: f64,
    pub logratio: f64,
    pub stderr: f64,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEstimate {
    pub condition: String,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub functional: String,
    /// `<e^{-σ}>` averaged over reps.
    pub estimate: f64,
    pub std_error: f64,
    pub average: f64,
    pub average_std_error: f64,
    pub conditioned: Vec<ConditionalEstimate>,
    pub bins: Vec<FtBin>,
    pub dft_slope: Option<f64>,
    pub dft_intercept: Option<f64>,
    /// `max |logratio - σ|` over bins.
    pub dft_max_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtReport {
    pub reps: usize,
    pub shots_per_rep: u64,
    pub functionals: Vec<FunctionalReport>,
    /// `<σ̃_{S|M}> - <σ_S> - <σ̃_I>` from the rep means.
    pub relation_defect: f64,
    pub relation_std_error: f64,
    /// Bins dropped because one side had no counts.
    pub warnings: Vec<String>,
}

impl FtReport {
    pub fn functional(&self, kind: FunctionalKind) -> Option<&FunctionalReport> {
        self.functionals
            .iter()
            .find(|f| f.functional == kind.name())
    }
}

fn bin_key(p: &DftPoint) -> String {
    format!("{}|{}", p.condition, p.members.join(","))
}

/// Rebuild the trajectory statistics from per-rep tables and estimate the
/// integral and detailed relations with across-rep standard errors.
pub fn reconstruct_ft_from_tables(
    rep_tables: &[LocalTables],
    pooled: &LocalTables,
    shots_per_rep: u64,
) -> Result<FtReport> {
    if rep_tables.is_empty() {
        return Err(EmulatorError::Shots("no reps".into()));
    }
    let mut functionals = Vec::new();
    let mut warnings = Vec::new();
    let mut avg_per_rep: Vec<Vec<f64>> = Vec::new();
    for (kind, conditioning) in REPORTED {
        let mut ifts = Vec::new();
        let mut avgs = Vec::new();
        let mut cond: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut rep_bins: Vec<BTreeMap<String, f64>> = Vec::new();
        for t in rep_tables {
            let fwd = t.forward();
            let f = t.functional(kind)?;
            ifts.push(trajectories::ift(&fwd, &f)?);
            avgs.push(trajectories::average(&fwd, &f)?);
            match conditioning {
                Conditioning::Memory => {
                    for (b, v) in trajectories::ift_by_memory(&fwd, &f)? {
                        cond.entry(format!("b={b}")).or_default().push(v);
                    }
                }
                Conditioning::SystemReservoir => {
                    for (k, v) in trajectories::ift_by_system_reservoir(&fwd, &f)? {
                        cond.entry(format!("sr={}", k.label())).or_default().push(v);
                    }
                }
                Conditioning::None => {}
            }
            let dft = detailed_ft(&fwd, &t.backward(), &f, conditioning)?;
            rep_bins.push(
                dft.points
                    .iter()
                    .filter_map(|p| p.log_ratio.map(|r| (bin_key(p), r)))
                    .collect(),
            );
        }
        let pooled_f = pooled.functional(kind)?;
        let pooled_dft = detailed_ft(
            &pooled.forward(),
            &pooled.backward(),
            &pooled_f,
            conditioning,
        )?;
        for e in &pooled_dft.empty {
            warnings.push(format!(
                "{}: bin {} at sigma {:.6} has no counts on one side",
                kind.name(),
                bin_key(e),
                e.sigma
            ));
        }
        let bins: Vec<FtBin> = pooled_dft
            .points
            .iter()
            .map(|p| {
                let key = bin_key(p);
                let per_rep: Vec<f64> = rep_bins
                    .iter()
                    .filter_map(|m| m.get(&key).copied())
                    .collect();
                FtBin {
                    condition: p.condition.clone(),
                    sigma: p.sigma,
                    logratio: p.log_ratio.expect("points carry a ratio"),
                    stderr: mean_std_error(&per_rep).1,
                    members: p.members.clone(),
                }
            })
            .collect();
        let xs: Vec<f64> = bins.iter().map(|b| b.sigma).collect();
        let ys: Vec<f64> = bins.iter().map(|b| b.logratio).collect();
        let fit = linear_fit(&xs, &ys);
        let (estimate, std_error) = mean_std_error(&ifts);
        let (average, average_std_error) = mean_std_error(&avgs);
        avg_per_rep.push(avgs);
        functionals.push(FunctionalReport {
            functional: kind.name().to_string(),
            estimate,
            std_error,
            average,
            average_std_error,
            conditioned: cond
                .into_iter()
                .map(|(condition, v)| {
                    let (estimate, std_error) = mean_std_error(&v);
                    ConditionalEstimate {
                        condition,
                        estimate,
                        std_error,
                    }
                })
                .collect(),
            dft_max_deviation: bins
                .iter()
                .map(|b| (b.logratio - b.sigma).abs())
                .fold(0.0, f64::max),
            bins,
            dft_slope: fit.map(|f| f.0),
            dft_intercept: fit.map(|f| f.1),
        });
    }
    let diffs: Vec<f64> = (0..rep_tables.len())
        .map(|r| avg_per_rep[0][r] - avg_per_rep[1][r] - avg_per_rep[2][r])
        .collect();
    let (relation_defect, _) = mean_std_error(&diffs);
    let relation_std_error = functionals
        .iter()
        .map(|f| f.average_std_error.powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(FtReport {
        reps: rep_tables.len(),
        shots_per_rep,
        functionals,
        relation_defect,
        relation_std_error,
        warnings,
    })
}

pub fn reconstruct_ft(counts: &ExperimentCounts) -> Result<FtReport> {
    let reps: Vec<LocalTables> = (0..counts.reps()).map(|r| counts.rep_tables(r)).collect();
    reconstruct_ft_from_tables(&reps, &counts.pooled_tables(), counts.initial.shots_per_rep)
}

/// The infinite-shot report: exact circuit distributions used as counts.
pub fn exact_report(circuits: &ExperimentCircuits) -> Result<FtReport> {
    let tables = circuits.distributions()?.tables();
    reconstruct_ft_from_tables(std::slice::from_ref(&tables), &tables, 0)
}

/// Sample and reconstruct in one call.
pub fn run_experiment(
    config: &ExperimentConfig,
    shots: &ShotConfig,
) -> Result<(ExperimentCounts, FtReport)> {
    let circuits = ExperimentCircuits::build(config)?;
    let counts = circuits.sample(shots)?;
    let report = reconstruct_ft(&counts)?;
    Ok((counts, report))
}

/// Root-mean-square error of the pooled IFT estimate of `kind` over
/// `trials` independent seeds, for each shots-per-rep value.
pub fn ift_error_scaling(
    config: &ExperimentConfig,
    kind: FunctionalKind,
    shots_list: &[u64],
    trials: usize,
    seed: u64,
) -> Result<Vec<(u64, f64)>> {
    let circuits = ExperimentCircuits::build(config)?;
    shots_list
        .iter()
        .enumerate()
        .map(|(i, &shots)| {
            let mut sq = 0.0;
            for t in 0..trials {
                let cfg = ShotConfig {
                    shots_per_rep: shots,
                    reps: 1,
                    seed: seed
                        .wrapping_add((i * trials + t) as u64)
                        .wrapping_mul(0x9E37_79B9_7F4A_7C15),
                    readout_flip_prob: None,
                };
                let tables = circuits.sample(&cfg)?.pooled_tables();
                let est = trajectories::ift(&tables.forward(), &tables.functional(kind)?)?;
                sq += (est - 1.0).powi(2);
            }
            Ok((shots, (sq / trials as f64).sqrt()))
        })
        .collect()
}

/// Log-log slope of error against shots.
pub fn scaling_slope(points: &[(u64, f64)]) -> Option<f64> {
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    linear_fit(&xs, &ys).map(|f| f.0)
}
