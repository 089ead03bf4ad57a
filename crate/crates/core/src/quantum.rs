//! One-dimensional periodized state space and the Heisenberg-Weyl operators.
//!
//! A state is the vector of samples `ψ(x_k)`, `x_k = x_min + k·dx`, on a grid
//! of period `L = N·dx`. Momenta live on the dual lattice `p = j·dp`,
//! `dp = 2πħ/L`, with `j` in signed FFT order.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::c64;
use crate::error::{Error, Result};
use crate::fft;
use crate::symplectic::PhasePoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub x_min: f64,
    pub dx: f64,
    pub hbar: f64,
}

impl GridSpec {
    pub fn new(n: usize, x_min: f64, dx: f64, hbar: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid size must be a power of two >= 16, got {n}"
            )));
        }
        if !(dx > 0.0) || !dx.is_finite() || !x_min.is_finite() {
            return Err(Error::InvalidArgument(
                "grid spacing must be positive and finite".into(),
            ));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::InvalidArgument(
                "ħ must be positive and finite".into(),
            ));
        }
        Ok(GridSpec { n, x_min, dx, hbar })
    }

    /// Grid of period `length` centred on the origin (`x_min = -L/2`).
    pub fn centered(n: usize, length: f64, hbar: f64) -> Result<Self> {
        Self::new(n, -0.5 * length, length / n as f64, hbar)
    }

    /// `N = 1024`, `L = 16`, `ħ = 1/2π`.
    pub fn default_grid() -> Self {
        Self::centered(1024, 16.0, 1.0 / (2.0 * std::f64::consts::PI)).expect("valid default grid")
    }

    pub fn length(&self) -> f64 {
        self.n as f64 * self.dx
    }

    pub fn dp(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.hbar / self.length()
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.x(k)).collect()
    }

    /// Signed frequency index of FFT bin `k`; bin `N/2` maps to `-N/2`.
    pub fn signed_index(&self, k: usize) -> i64 {
        if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Discrete momenta `ħ·κ_k = j_k·dp`, FFT order.
    pub fn momenta(&self) -> Vec<f64> {
        let dp = self.dp();
        (0..self.n)
            .map(|k| self.signed_index(k) as f64 * dp)
            .collect()
    }

    /// Largest representable momentum magnitude, `N·dp/2`.
    pub fn p_max(&self) -> f64 {
        0.5 * self.n as f64 * self.dp()
    }

    /// Whether `z` sits in the region where the discrete model is trusted:
    /// `|q| ≤ L/4` and `|p| ≤ N·dp/4`.
    pub fn in_reliable_box(&self, z: &PhasePoint) -> bool {
        z.dof() == 1
            && z.coords()[0].abs() <= 0.25 * self.length()
            && z.coords()[1].abs() <= 0.5 * self.p_max()
    }
}

/// Samples of a wave function on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    values: Vec<c64>,
}

impl State {
    pub fn new(values: Vec<c64>) -> Result<Self> {
        if values
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::NonFinite("state"));
        }
        Ok(State { values })
    }

    pub(crate) fn from_trusted(values: Vec<c64>) -> Self {
        State { values }
    }

    pub fn values(&self) -> &[c64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<c64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self, g: &GridSpec) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * g.dx).sqrt()
    }

    pub fn scaled(&self, s: c64) -> State {
        State {
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn normalized(&self, g: &GridSpec) -> Result<State> {
        let n = self.norm(g);
        if !(n > 0.0) {
            return Err(Error::InvalidArgument(
                "cannot normalize the zero state".into(),
            ));
        }
        Ok(self.scaled(c64::new(1.0 / n, 0.0)))
    }

    /// `‖a − b‖` in the grid's L² norm.
    pub fn distance(&self, other: &State, g: &GridSpec) -> f64 {
        (self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * g.dx)
            .sqrt()
    }

    /// Writes a JSON header line with the grid, then little-endian `(re, im)` pairs.
    pub fn write_binary<W: Write>(&self, g: &GridSpec, mut w: W) -> Result<()> {
        check_grid(self, g)?;
        serde_json::to_writer(&mut w, g)?;
        w.write_all(b"\n")?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: BufRead>(mut r: R) -> Result<(State, GridSpec)> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let g: GridSpec = serde_json::from_str(header.trim_end())?;
        let g = GridSpec::new(g.n, g.x_min, g.dx, g.hbar)?;
        let mut bytes = vec![0u8; 16 * g.n];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                c64::new(re, im)
            })
            .collect();
        Ok((State::new(values)?, g))
    }
}

fn check_grid(s: &State, g: &GridSpec) -> Result<()> {
    if s.len() != g.n {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `(a|b) = Σ conj(a_k) b_k dx`.
pub fn inner(a: &State, b: &State, g: &GridSpec) -> Result<c64> {
    check_grid(a, g)?;
    check_grid(b, g)?;
    let s: c64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(s * g.dx)
}

/// `ψ(x − q)` on the periodic grid.
///
/// Integer multiples of `dx` are index rotations; anything else is the
/// band-limited shift `ψ̂_k ↦ e^{−iκ_k q} ψ̂_k`, which is exactly unitary.
pub fn translate(psi: &State, q: f64, g: &GridSpec) -> Result<State> {
    check_grid(psi, g)?;
    if !q.is_finite() {
        return Err(Error::NonFinite("translation"));
    }
    if q == 0.0 {
        return Ok(psi.clone());
    }
    let steps = q / g.dx;
    let rounded = steps.round();
    let n = g.n as i64;
    if (steps - rounded).abs() <= 1e-12 * steps.abs().max(1.0) {
        let shift = (rounded as i64).rem_euclid(n) as usize;
        let mut values = psi.values.clone();
        values.rotate_right(shift);
        return Ok(State::from_trusted(values));
    }
    let mut buf = psi.values.clone();
    fft::forward(&mut buf);
    let kappa = 2.0 * std::f64::consts::PI / g.length();
    for (k, v) in buf.iter_mut().enumerate() {
        let phase = -(g.signed_index(k) as f64) * kappa * q;
        *v *= c64::cis(phase);
    }
    fft::inverse(&mut buf);
    Ok(State::from_trusted(buf))
}

/// Pointwise `e^{iθ} e^{ipx/ħ}`.
fn modulate(psi: State, p: f64, phase: f64, g: &GridSpec) -> State {
    if p == 0.0 && phase == 0.0 {
        return psi;
    }
    let values = psi
        .values
        .into_iter()
        .enumerate()
        .map(|(k, v)| v * c64::cis(p * g.x(k) / g.hbar + phase))
        .collect();
    State::from_trusted(values)
}

/// `(T(z)ψ)(x) = exp{(i/ħ)(p·x − p·q/2)} ψ(x − q)` for `z = (q, p)`.
pub fn heisenberg(z: &PhasePoint, psi: &State, g: &GridSpec) -> Result<State> {
    if z.dof() != 1 {
        return Err(Error::Dimension(
            "Heisenberg operators are implemented for n = 1".into(),
        ));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("Heisenberg displacement"));
    }
    let (q, p) = (z.coords()[0], z.coords()[1]);
    if q.abs() >= 0.5 * g.length() {
        log::warn!(
            "displacement q = {q} wraps around the period {}",
            g.length()
        );
    }
    let shifted = translate(psi, q, g)?;
    Ok(modulate(shifted, p, -p * q / (2.0 * g.hbar), g))
}

/// Unit-norm samples of `exp{iΓx²/(2ħ)}`.
pub fn gaussian_window(gamma: c64, g: &GridSpec) -> Result<State> {
    if !(gamma.im > 0.0) || !gamma.re.is_finite() || !gamma.im.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Gaussian needs Im Γ > 0, got {gamma}"
        )));
    }
    let values = (0..g.n)
        .map(|k| {
            let x = g.x(k);
            (c64::new(0.0, 1.0) * gamma * (x * x / (2.0 * g.hbar))).exp()
        })
        .collect();
    State::new(values)?.normalized(g)
}

/// `T(z)` applied to [`gaussian_window`].
pub fn gaussian_packet(gamma: c64, center: &PhasePoint, g: &GridSpec) -> Result<State> {
    heisenberg(center, &gaussian_window(gamma, g)?, g)
}

/// `min_θ ‖a − e^{iθ}b‖ / ‖a‖`.
pub fn phase_aligned_distance(a: &State, b: &State, g: &GridSpec) -> Result<f64> {
    let overlap = inner(b, a, g)?;
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        c64::new(1.0, 0.0)
    };
    let na = a.norm(g);
    Ok(a.distance(&b.scaled(phase), g) / na)
}
