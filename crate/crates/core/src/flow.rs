//! The truncated Hamiltonian `H^ε = H·χ_ε` and its flow.
//!
//! `χ_ε` is a function of the distance `s(z)` from `z` to `Ω`: it equals 1
//! for `s ≤ ε/2`, 0 for `s ≥ ε`, and in between follows the C^∞ transition
//! `h(u) = g(1−u)/(g(u)+g(1−u))`, `g(u) = e^{−1/u}`. The flow of `H^ε` is
//! `S_t` on `Ω ∪ Σ_{ε/2}` and the identity off `Ω ∪ Σ_ε`.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::format::csv_row;
use crate::lattice::{classify_points, points_within, Ellipsoid, PointSet, DEFAULT_EPS_MAX};
use crate::symplectic::{standard_j, PhasePoint};

pub const DEFAULT_DT_MAX: f64 = 1e-3;
const MIN_STEP: f64 = 1e-12;
/// Points this close to `Σ` get the inside branch of `∇χ`.
const SIGMA_GUARD: f64 = 1e-12;

fn g(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// `h(u)`: 1 for `u ≤ 0`, 0 for `u ≥ 1`.
pub fn transition(u: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    if u >= 1.0 {
        return 0.0;
    }
    let (a, b) = (g(1.0 - u), g(u));
    a / (a + b)
}

/// `h'(u) = −g(u)g(1−u)(1/u² + 1/(1−u)²)/(g(u)+g(1−u))²`.
pub fn transition_derivative(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        return 0.0;
    }
    let (a, b) = (g(1.0 - u), g(u));
    let s = a + b;
    -a * b * (1.0 / (u * u) + 1.0 / ((1.0 - u) * (1.0 - u))) / (s * s)
}

/// An ellipsoid and a thickening radius `ε`.
#[derive(Clone, Debug)]
pub struct BumpSpec {
    ell: Ellipsoid,
    eps: f64,
}

impl BumpSpec {
    pub fn new(ell: Ellipsoid, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ε must be positive, got {eps}"
            )));
        }
        Ok(BumpSpec { ell, eps })
    }

    pub fn ellipsoid(&self) -> &Ellipsoid {
        &self.ell
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `s(z)`: 0 on `Ω`, the distance to `Σ` outside.
    pub fn shell_distance(&self, z: &PhasePoint) -> Result<f64> {
        if self.ell.value(z) <= self.ell.energy() {
            return Ok(0.0);
        }
        Ok(self.ell.distance(z)?.distance)
    }
}

pub fn chi(z: &PhasePoint, bump: &BumpSpec) -> Result<f64> {
    let s = bump.shell_distance(z)?;
    let half = 0.5 * bump.eps;
    Ok(transition((s - half) / half))
}

/// `∇χ` and whether `z` was treated as lying on `Σ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiGradient {
    pub gradient: DVector<f64>,
    pub on_sigma: bool,
}

/// `∇χ = h'(u)·(2/ε)·(z − proj)/|z − proj|` outside `Ω`, zero inside.
pub fn grad_chi(z: &PhasePoint, bump: &BumpSpec) -> Result<ChiGradient> {
    let dim = 2 * z.dof();
    let zero = DVector::zeros(dim);
    if bump.ell.value(z) <= bump.ell.energy() {
        return Ok(ChiGradient {
            gradient: zero,
            on_sigma: false,
        });
    }
    let proj = bump.ell.distance(z)?;
    if proj.distance <= SIGMA_GUARD {
        return Ok(ChiGradient {
            gradient: zero,
            on_sigma: true,
        });
    }
    let half = 0.5 * bump.eps;
    let u = (proj.distance - half) / half;
    let dh = transition_derivative(u);
    if dh == 0.0 {
        return Ok(ChiGradient {
            gradient: zero,
            on_sigma: false,
        });
    }
    let normal = (z.to_vector() - proj.point.to_vector()) / proj.distance;
    Ok(ChiGradient {
        gradient: normal * (dh / half),
        on_sigma: false,
    })
}

/// `H^ε = H·χ_ε`.
#[derive(Clone, Debug)]
pub struct TruncatedHamiltonian {
    bump: BumpSpec,
}

impl TruncatedHamiltonian {
    pub fn new(bump: BumpSpec) -> Self {
        TruncatedHamiltonian { bump }
    }

    pub fn bump(&self) -> &BumpSpec {
        &self.bump
    }

    pub fn value(&self, z: &PhasePoint) -> Result<f64> {
        truncated_hamiltonian_value(z, self)
    }

    /// `J∇H^ε(z)` with `∇H^ε = χ·Mz + H·∇χ`; exactly zero off the support.
    pub fn vector_field(&self, z: &PhasePoint) -> Result<DVector<f64>> {
        let h = self.bump.ell.hamiltonian();
        let c = chi(z, &self.bump)?;
        let dim = 2 * z.dof();
        if c == 0.0 {
            return Ok(DVector::zeros(dim));
        }
        let mut grad = h.gradient(z) * c;
        if c < 1.0 {
            grad += grad_chi(z, &self.bump)?.gradient * h.energy(z);
        }
        Ok(standard_j(z.dof())? * grad)
    }
}

pub fn truncated_hamiltonian_value(z: &PhasePoint, th: &TruncatedHamiltonian) -> Result<f64> {
    let c = chi(z, &th.bump)?;
    Ok(th.bump.ell.value(z) * c)
}

/// One accepted RK4 step of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub z: PhasePoint,
    pub h_eps: f64,
}

fn step_count(t: f64, dt_max: f64) -> Result<usize> {
    if !(dt_max > 0.0) || !dt_max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "dt_max must be positive, got {dt_max}"
        )));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("integration time"));
    }
    let steps = (t.abs() / dt_max).ceil().max(1.0) as usize;
    let dt = t.abs() / steps as f64;
    if t != 0.0 && dt < MIN_STEP {
        return Err(Error::StepUnderflow { dt });
    }
    Ok(steps)
}

fn rk4_step(th: &TruncatedHamiltonian, z: &PhasePoint, dt: f64) -> Result<PhasePoint> {
    let z0 = z.to_vector();
    let k1 = th.vector_field(z)?;
    if k1.iter().all(|&v| v == 0.0) {
        return Ok(z.clone());
    }
    let k2 = th.vector_field(&PhasePoint::from_vector(&(&z0 + &k1 * (0.5 * dt))))?;
    let k3 = th.vector_field(&PhasePoint::from_vector(&(&z0 + &k2 * (0.5 * dt))))?;
    let k4 = th.vector_field(&PhasePoint::from_vector(&(&z0 + &k3 * dt)))?;
    let z1 = z0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    Ok(PhasePoint::from_vector(&z1))
}

/// Fixed-step RK4 for `ż = J∇H^ε(z)` from `z0` over time `t` (either sign).
pub fn integrate_flow(
    z0: &PhasePoint,
    th: &TruncatedHamiltonian,
    t: f64,
    dt_max: f64,
) -> Result<PhasePoint> {
    let steps = step_count(t, dt_max)?;
    if t == 0.0 || th.bump.shell_distance(z0)? >= th.bump.eps {
        return Ok(z0.clone());
    }
    let dt = t / steps as f64;
    let mut z = z0.clone();
    for _ in 0..steps {
        z = rk4_step(th, &z, dt)?;
    }
    Ok(z)
}

/// Like [`integrate_flow`] but records every step, starting with `t = 0`.
pub fn integrate_trajectory(
    z0: &PhasePoint,
    th: &TruncatedHamiltonian,
    t: f64,
    dt_max: f64,
) -> Result<Vec<TrajectorySample>> {
    let steps = step_count(t, dt_max)?;
    let dt = t / steps as f64;
    let fixed = t == 0.0 || th.bump.shell_distance(z0)? >= th.bump.eps;
    let mut z = z0.clone();
    let mut out = vec![TrajectorySample {
        t: 0.0,
        z: z.clone(),
        h_eps: th.value(&z)?,
    }];
    if t == 0.0 {
        return Ok(out);
    }
    for k in 1..=steps {
        if !fixed {
            z = rk4_step(th, &z, dt)?;
        }
        let h_eps = th.value(&z)?;
        out.push(TrajectorySample {
            t: k as f64 * dt,
            z: z.clone(),
            h_eps,
        });
    }
    Ok(out)
}

/// CSV with header `t,x1,..,xn,p1,..,pn,H_eps`.
pub fn write_trajectory_csv<W: Write>(samples: &[TrajectorySample], mut w: W) -> Result<()> {
    let n = samples.first().map_or(1, |s| s.z.dof());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("p{i}")));
    header.push("H_eps".into());
    writeln!(w, "{}", header.join(","))?;
    for s in samples {
        let mut row = vec![s.t];
        row.extend_from_slice(s.z.coords());
        row.push(s.h_eps);
        writeln!(w, "{}", csv_row(&row))?;
    }
    Ok(())
}

/// Largest deviation from the predicted truncated flow, per point class.
#[derive(Clone, Debug, PartialEq)]
pub struct FepsReport {
    pub t: f64,
    pub eps: f64,
    pub eps_star: f64,
    pub interior_count: usize,
    pub boundary_count: usize,
    pub exterior_count: usize,
    /// `max |f_t(z) − S_t z|` over `Ω \ Σ`.
    pub interior_max_dev: f64,
    /// Same over `Σ`.
    pub boundary_max_dev: f64,
    /// `max |f_t(z) − z|` outside `Ω`.
    pub exterior_max_dev: f64,
    /// Every exterior point returned with identical bits.
    pub exterior_bitwise: bool,
    /// `max |H(f_t(z)) − E| / E` over `Σ`.
    pub boundary_energy_dev: f64,
}

/// Runs every point of `points` through the truncated flow and compares
/// with `S_t z` on `F = Ω ∩ Λ` and with `z` elsewhere.
///
/// Requires `eps ≤ max_safe_epsilon`, i.e. no point off `Σ` closer than `ε`
/// to it.
pub fn verify_feps(
    points: &PointSet,
    th: &TruncatedHamiltonian,
    t: f64,
    dt_max: f64,
    boundary_tol: f64,
) -> Result<FepsReport> {
    let ell = th.bump.ellipsoid();
    let eps = th.bump.eps();
    let offending = points_within(points, ell, boundary_tol, eps)?;
    let eps_star =
        crate::lattice::max_safe_epsilon(points, ell, boundary_tol, DEFAULT_EPS_MAX.max(eps))?;
    if !offending.is_empty() {
        return Err(Error::UnsafeEpsilon {
            eps,
            eps_star,
            offending,
        });
    }
    let class = classify_points(points, ell, boundary_tol)?;
    let s = ell.hamiltonian().flow(t)?;
    let pts = points.points();
    let mut report = FepsReport {
        t,
        eps,
        eps_star,
        interior_count: class.interior.len(),
        boundary_count: class.boundary.len(),
        exterior_count: class.exterior.len(),
        interior_max_dev: 0.0,
        boundary_max_dev: 0.0,
        exterior_max_dev: 0.0,
        exterior_bitwise: true,
        boundary_energy_dev: 0.0,
    };
    for &i in &class.interior {
        let z = integrate_flow(&pts[i], th, t, dt_max)?;
        report.interior_max_dev = report.interior_max_dev.max(z.distance(&s.apply(&pts[i])));
    }
    for &i in &class.boundary {
        let z = integrate_flow(&pts[i], th, t, dt_max)?;
        report.boundary_max_dev = report.boundary_max_dev.max(z.distance(&s.apply(&pts[i])));
        let e = ell.energy();
        report.boundary_energy_dev = report
            .boundary_energy_dev
            .max((ell.value(&z) - e).abs() / e);
    }
    for &i in &class.exterior {
        let z = integrate_flow(&pts[i], th, t, dt_max)?;
        report.exterior_max_dev = report.exterior_max_dev.max(z.distance(&pts[i]));
        let same_bits = z
            .coords()
            .iter()
            .zip(pts[i].coords())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        report.exterior_bitwise &= same_bits;
    }
    Ok(report)
}
