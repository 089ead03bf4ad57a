//! The metaplectic lift of `S_t = exp(tJM)` on the discrete model.
//!
//! `M` is Weyl-quantized to a Hermitian matrix `Ĥ` and the lift is the
//! propagator `U_t = exp(−itĤ/ħ)`. It passes through the identity at `t = 0`
//! and is continuous in `t`, which singles out one of the two metaplectic
//! operators over each `S_t`. Global phases are never normalized.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use faer::{ColRef, Mat, Side};
use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::c64;
use crate::error::{Error, Result};
use crate::fft;
use crate::quantum::{gaussian_packet, heisenberg, GridSpec, State};
use crate::symplectic::{symmetric_flow, PhasePoint, SymplecticMatrix};

const HERMITIAN_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-9;

pub(crate) fn max_abs_c(m: faer::MatRef<'_, c64>) -> f64 {
    let mut best = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].norm());
        }
    }
    best
}

fn check_symmetric(m: &Matrix2<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quadratic form"));
    }
    let defect = (m[(0, 1)] - m[(1, 0)]).abs();
    if defect > 1e-12 {
        return Err(Error::NotSymmetric { defect });
    }
    Ok(())
}

/// `½(m₁₁X² + m₁₂(XP + PX) + m₂₂P²)` as a dense Hermitian matrix.
#[derive(Clone, Debug)]
pub struct QuantizedHamiltonian {
    matrix: Mat<c64>,
    source: Matrix2<f64>,
    grid: GridSpec,
}

impl QuantizedHamiltonian {
    pub fn matrix(&self) -> &Mat<c64> {
        &self.matrix
    }

    pub fn source(&self) -> &Matrix2<f64> {
        &self.source
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `‖Ĥ − Ĥ*‖_∞`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_c((&self.matrix - self.matrix.adjoint()).as_ref())
    }
}

/// Entries of the circulant matrix `F⁻¹ diag(v) F`, indexed by `(j − l) mod N`.
fn circulant(symbol: impl Iterator<Item = f64>) -> Vec<c64> {
    let mut c: Vec<c64> = symbol.map(|v| c64::new(v, 0.0)).collect();
    fft::inverse(&mut c);
    c
}

/// Weyl quantization of `H(z) = ½Mz·z` on the grid.
///
/// `X` multiplies by the centred coordinate, `P` is the Fourier multiplier
/// by the discrete momenta; the cross term is symmetrized entrywise as
/// `(x_j + x_l)P_{jl}`.
pub fn quantize_quadratic(m: &Matrix2<f64>, g: &GridSpec) -> Result<QuantizedHamiltonian> {
    check_symmetric(m)?;
    let m = (m + m.transpose()) * 0.5;
    let xs = g.xs();
    let ps = g.momenta();
    let p1 = circulant(ps.iter().copied());
    let p2 = circulant(ps.iter().map(|p| p * p));
    let n = g.n;
    let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let raw = Mat::<c64>::from_fn(n, n, |j, l| {
        let k = (j + n - l) % n;
        let mut v = p1[k] * (b * (xs[j] + xs[l])) + p2[k] * c;
        if j == l {
            v += c64::new(a * xs[j] * xs[j], 0.0);
        }
        v * 0.5
    });
    let defect = max_abs_c((&raw - raw.adjoint()).as_ref());
    if defect > HERMITIAN_TOL {
        return Err(Error::Eigen(format!(
            "quantized Hamiltonian not Hermitian (defect {defect:e})"
        )));
    }
    let matrix = Mat::<c64>::from_fn(n, n, |i, j| (raw[(i, j)] + raw[(j, i)].conj()) * 0.5);
    Ok(QuantizedHamiltonian {
        matrix,
        source: m,
        grid: *g,
    })
}

/// Eigendecomposition `Ĥ = V diag(λ) V*`, computed once per `(M, grid)`.
#[derive(Debug)]
pub struct HamiltonianSpectrum {
    eigenvalues: Vec<f64>,
    vectors: Mat<c64>,
    source: Matrix2<f64>,
    grid: GridSpec,
    unitarity_defect: f64,
}

impl HamiltonianSpectrum {
    pub fn new(h: &QuantizedHamiltonian) -> Result<Self> {
        let evd = h
            .matrix
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let n = h.grid.n;
        let s = evd.S().column_vector();
        let eigenvalues: Vec<f64> = (0..n).map(|i| s[i].re).collect();
        let vectors = evd.U().to_owned();
        let gram = vectors.adjoint() * &vectors;
        let unitarity_defect = max_abs_c((gram - Mat::<c64>::identity(n, n)).as_ref());
        if unitarity_defect > UNITARY_TOL || eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigen(format!(
                "eigenvectors not orthonormal (defect {unitarity_defect:e})"
            )));
        }
        Ok(HamiltonianSpectrum {
            eigenvalues,
            vectors,
            source: h.source,
            grid: h.grid,
            unitarity_defect,
        })
    }

    /// Ascending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal columns in the Euclidean inner product of `C^N`.
    pub fn vectors(&self) -> &Mat<c64> {
        &self.vectors
    }

    pub fn source(&self) -> &Matrix2<f64> {
        &self.source
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `‖V*V − I‖_∞`; bounds `‖U_t*U_t − I‖` for every `t`.
    pub fn unitarity_defect(&self) -> f64 {
        self.unitarity_defect
    }
}

type CacheKey = ([u64; 4], [u64; 4]);

fn key(m: &Matrix2<f64>, g: &GridSpec) -> CacheKey {
    let m = (m + m.transpose()) * 0.5;
    (
        [
            m[(0, 0)].to_bits(),
            m[(0, 1)].to_bits(),
            m[(1, 0)].to_bits(),
            m[(1, 1)].to_bits(),
        ],
        [
            g.n as u64,
            g.x_min.to_bits(),
            g.dx.to_bits(),
            g.hbar.to_bits(),
        ],
    )
}

/// Cache of spectra keyed by `(M, grid)`.
///
/// Decompositions run outside the lock; the first finished insert wins and
/// later readers share it.
#[derive(Default)]
pub struct SpectrumCache {
    entries: RwLock<HashMap<CacheKey, Arc<HamiltonianSpectrum>>>,
}

impl SpectrumCache {
    pub fn get(&self, m: &Matrix2<f64>, g: &GridSpec) -> Result<Arc<HamiltonianSpectrum>> {
        let k = key(m, g);
        if let Some(s) = self
            .entries
            .read()
            .expect("spectrum cache poisoned")
            .get(&k)
        {
            return Ok(s.clone());
        }
        let spectrum = Arc::new(HamiltonianSpectrum::new(&quantize_quadratic(m, g)?)?);
        let mut guard = self.entries.write().expect("spectrum cache poisoned");
        Ok(guard.entry(k).or_insert(spectrum).clone())
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("spectrum cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Process-wide spectrum cache used by [`metaplectic_lift`].
pub fn spectrum(m: &Matrix2<f64>, g: &GridSpec) -> Result<Arc<HamiltonianSpectrum>> {
    static CACHE: OnceLock<SpectrumCache> = OnceLock::new();
    CACHE.get_or_init(SpectrumCache::default).get(m, g)
}

/// `U_t = V diag(e^{−itλ/ħ}) V*`.
///
/// Stored in factored form; [`Propagator::apply`] costs `O(N²)`, and the
/// dense matrix is only built on request.
#[derive(Clone, Debug)]
pub struct Propagator {
    spectrum: Arc<HamiltonianSpectrum>,
    t: f64,
    phases: Vec<c64>,
}

impl Propagator {
    pub fn new(spectrum: Arc<HamiltonianSpectrum>, t: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::NonFinite("propagation time"));
        }
        let hbar = spectrum.grid.hbar;
        let phases = spectrum
            .eigenvalues
            .iter()
            .map(|l| c64::cis(-t * l / hbar))
            .collect();
        Ok(Propagator {
            spectrum,
            t,
            phases,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn spectrum(&self) -> &Arc<HamiltonianSpectrum> {
        &self.spectrum
    }

    pub fn grid(&self) -> &GridSpec {
        &self.spectrum.grid
    }

    /// `U_{−t}`.
    pub fn inverse(&self) -> Propagator {
        Propagator {
            spectrum: self.spectrum.clone(),
            t: -self.t,
            phases: self.phases.iter().map(|p| p.conj()).collect(),
        }
    }

    /// `U_t ψ`; exactly `ψ` at `t = 0`.
    pub fn apply(&self, psi: &State) -> Result<State> {
        if psi.len() != self.spectrum.grid.n {
            return Err(Error::GridMismatch);
        }
        if self.t == 0.0 {
            return Ok(psi.clone());
        }
        let v = &self.spectrum.vectors;
        let mut coeff = v.adjoint() * ColRef::from_slice(psi.values());
        for (i, p) in self.phases.iter().enumerate() {
            coeff[i] *= p;
        }
        let out = v * coeff;
        Ok(State::from_trusted(
            (0..out.nrows()).map(|i| out[i]).collect(),
        ))
    }

    /// Dense `N × N` matrix of `U_t`.
    pub fn matrix(&self) -> Mat<c64> {
        let n = self.spectrum.grid.n;
        if self.t == 0.0 {
            return Mat::identity(n, n);
        }
        let v = &self.spectrum.vectors;
        let scaled = Mat::<c64>::from_fn(n, n, |i, j| v[(i, j)] * self.phases[j]);
        scaled * v.adjoint()
    }

    /// Operator 2-norm `‖U_t − U_s‖` for two propagators over one spectrum.
    pub fn distance(&self, other: &Propagator) -> Result<f64> {
        if !Arc::ptr_eq(&self.spectrum, &other.spectrum) {
            return Err(Error::InvalidArgument(
                "propagators over different generators".into(),
            ));
        }
        Ok(self
            .phases
            .iter()
            .zip(&other.phases)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

/// `U_t = exp(−itĤ/ħ)` for the quantization of `M`.
pub fn metaplectic_lift(m: &Matrix2<f64>, t: f64, g: &GridSpec) -> Result<Propagator> {
    Propagator::new(spectrum(m, g)?, t)
}

/// `max_k ‖U_{t_{k+1}} − U_{t_k}‖ / Δt` over a time grid.
pub fn lift_continuity(m: &Matrix2<f64>, g: &GridSpec, t_grid: &[f64]) -> Result<f64> {
    let spec = spectrum(m, g)?;
    let lifts = t_grid
        .iter()
        .map(|&t| Propagator::new(spec.clone(), t))
        .collect::<Result<Vec<_>>>()?;
    let mut c = 0.0_f64;
    for (w, t) in lifts.windows(2).zip(t_grid.windows(2)) {
        let dt = t[1] - t[0];
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(
                "time grid must be strictly increasing".into(),
            ));
        }
        c = c.max(w[1].distance(&w[0])? / dt);
    }
    Ok(c)
}

pub(crate) fn matrix2(m: &DMatrix<f64>) -> Result<Matrix2<f64>> {
    if m.nrows() != 2 || m.ncols() != 2 {
        return Err(Error::Dimension(
            "quantum-side generators are 2 x 2 (n = 1)".into(),
        ));
    }
    Ok(Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
}

pub(crate) fn dmatrix(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]])
}

/// Classical flow `exp(tJM)` of the generator of a lift.
pub fn classical_flow(m: &Matrix2<f64>, t: f64) -> Result<SymplecticMatrix> {
    check_symmetric(m)?;
    symmetric_flow(&dmatrix(m), t)
}

/// Concentrated test states for covariance checks.
#[derive(Clone, Debug)]
pub struct ProbeSet {
    states: Vec<State>,
}

impl ProbeSet {
    /// `count` Gaussian packets `T(w)·exp{iΓx²/2ħ}` with centres uniform in
    /// the disc of radius `radius`, `Re Γ ∈ [−½, ½]` and `Im Γ ∈ [½, 2]`.
    pub fn concentrated(g: &GridSpec, count: usize, radius: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states = (0..count)
            .map(|_| {
                let r = radius * rng.random::<f64>().sqrt();
                let th = rng.random_range(0.0..std::f64::consts::TAU);
                let gamma = c64::new(rng.random_range(-0.5..0.5), rng.random_range(0.5..2.0));
                gaussian_packet(gamma, &PhasePoint::planar(r * th.cos(), r * th.sin()), g)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProbeSet { states })
    }

    /// Eight packets within radius 1 of the origin.
    pub fn default_for(g: &GridSpec) -> Result<Self> {
        Self::concentrated(g, 8, 1.0, 0x5eed)
    }

    pub fn from_states(states: Vec<State>) -> Self {
        ProbeSet { states }
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }
}

/// `max_ψ ‖U_t T(z) U_t⁻¹ψ − T(S_t z)ψ‖ / ‖ψ‖` over the default probes.
pub fn covariance_defect(m: &Matrix2<f64>, t: f64, z: &PhasePoint, g: &GridSpec) -> Result<f64> {
    covariance_defect_with(m, t, z, g, &ProbeSet::default_for(g)?)
}

pub fn covariance_defect_with(
    m: &Matrix2<f64>,
    t: f64,
    z: &PhasePoint,
    g: &GridSpec,
    probes: &ProbeSet,
) -> Result<f64> {
    if !g.in_reliable_box(z) {
        return Err(Error::InvalidArgument(format!(
            "displacement {:?} is outside the reliable box |q| <= L/4, |p| <= N dp/4",
            z.coords()
        )));
    }
    let u = metaplectic_lift(m, t, g)?;
    let u_inv = u.inverse();
    let zt = classical_flow(m, t)?.apply(z);
    let mut worst = 0.0_f64;
    for psi in probes.states() {
        let lhs = u.apply(&heisenberg(z, &u_inv.apply(psi)?, g)?)?;
        let rhs = heisenberg(&zt, psi, g)?;
        worst = worst.max(lhs.distance(&rhs, g) / psi.norm(g));
    }
    Ok(worst)
}

/// Action on Gaussian parameters: `Γ' = (c + dΓ)/(a + bΓ)` for `S = [[a, b], [c, d]]`.
pub fn gaussian_mobius(gamma: c64, s: &SymplecticMatrix) -> Result<c64> {
    if !(gamma.im > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Gaussian needs Im Γ > 0, got {gamma}"
        )));
    }
    let [a, b, c, d] = s
        .entries_2x2()
        .ok_or_else(|| Error::Dimension("Möbius action needs a 2 x 2 matrix".into()))?;
    let den = c64::new(a, 0.0) + gamma * b;
    if den.norm() <= 1e-14 * (a.abs() + b.abs() * gamma.norm()) {
        return Err(Error::Caustic);
    }
    let out = (c64::new(c, 0.0) + gamma * d) / den;
    if !(out.im > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Möbius image {out} left the upper half plane"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{gaussian_window, phase_aligned_distance};
    use std::f64::consts::PI;

    fn small_grid() -> GridSpec {
        GridSpec::centered(128, 11.0, 1.0 / (2.0 * PI)).unwrap()
    }

    #[test]
    fn free_particle_is_real_symmetric() {
        let g = small_grid();
        let h = quantize_quadratic(&Matrix2::new(0.0, 0.0, 0.0, 1.0), &g).unwrap();
        let m = h.matrix();
        for i in 0..g.n {
            for j in 0..g.n {
                assert!(m[(i, j)].im.abs() < 1e-12);
                assert!((m[(i, j)] - m[(j, i)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_term_is_hermitian() {
        let g = small_grid();
        let h = quantize_quadratic(&Matrix2::new(1.0, 0.7, 0.7, 2.0), &g).unwrap();
        assert!(h.hermiticity_defect() <= 1e-12);
        assert!(quantize_quadratic(&Matrix2::new(1.0, 0.7, 0.2, 2.0), &g).is_err());
    }

    #[test]
    fn oscillator_ground_energy() {
        let g = GridSpec::default_grid();
        let spec = spectrum(&Matrix2::identity(), &g).unwrap();
        let e0 = spec.eigenvalues()[0];
        assert!((e0 - g.hbar / 2.0).abs() <= 1e-3 * g.hbar, "{e0}");
        assert!(spec.unitarity_defect() <= 1e-9);
    }

    #[test]
    fn identity_at_zero_and_group_law() {
        let g = small_grid();
        let m = Matrix2::new(4.0, 0.0, 0.0, 1.0);
        let u0 = metaplectic_lift(&m, 0.0, &g).unwrap();
        assert!(max_abs_c((u0.matrix() - Mat::<c64>::identity(g.n, g.n)).as_ref()) <= 1e-12);
        let (t, s) = (0.37, -0.81);
        let ut = metaplectic_lift(&m, t, &g).unwrap().matrix();
        let us = metaplectic_lift(&m, s, &g).unwrap().matrix();
        let uts = metaplectic_lift(&m, t + s, &g).unwrap().matrix();
        assert!(max_abs_c((&ut * &us - &uts).as_ref()) <= 1e-9);
        let unit = ut.adjoint() * &ut;
        assert!(max_abs_c((unit - Mat::<c64>::identity(g.n, g.n)).as_ref()) <= 1e-9);
        let psi = gaussian_window(c64::new(0.0, 1.0), &g).unwrap();
        assert_eq!(u0.apply(&psi).unwrap(), psi);
    }

    #[test]
    fn fourier_transform_fixes_the_standard_gaussian() {
        let g = GridSpec::default_grid();
        let phi = gaussian_window(c64::new(0.0, 1.0), &g).unwrap();
        let out = metaplectic_lift(&Matrix2::identity(), PI / 2.0, &g)
            .unwrap()
            .apply(&phi)
            .unwrap();
        assert!(phase_aligned_distance(&out, &phi, &g).unwrap() <= 1e-6);
    }

    #[test]
    fn continuity_constant_is_spectral_radius() {
        let g = small_grid();
        let m = Matrix2::identity();
        let grid: Vec<f64> = (0..50).map(|k| k as f64 * 1e-4).collect();
        let c = lift_continuity(&m, &g, &grid).unwrap();
        let lam = spectrum(&m, &g)
            .unwrap()
            .eigenvalues()
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(c > 0.0 && c <= lam / g.hbar * (1.0 + 1e-6));
    }

    #[test]
    fn mobius_examples() {
        let i = c64::new(0.0, 1.0);
        assert_eq!(
            gaussian_mobius(c64::new(0.3, 0.8), &SymplecticMatrix::identity(1)).unwrap(),
            c64::new(0.3, 0.8)
        );
        let j =
            SymplecticMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
        assert!((gaussian_mobius(i, &j).unwrap() - i).norm() < 1e-15);
        for t in [0.1, 0.9, 2.5] {
            let s = classical_flow(&Matrix2::identity(), t).unwrap();
            assert!((gaussian_mobius(i, &s).unwrap() - i).norm() < 1e-14);
        }
        // squeeze x -> 2x: Γ -> Γ/4
        let sq =
            SymplecticMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        assert!((gaussian_mobius(i, &sq).unwrap() - i / 4.0).norm() < 1e-15);
        // a + bΓ = 0 needs Γ real, which is excluded; b = 1, a = 0 with Γ = i is fine
        assert!(gaussian_mobius(c64::new(1.0, 0.0), &j).is_err());
    }

    #[test]
    fn covariance_defect_vanishes_at_zero_time() {
        let g = GridSpec::default_grid();
        let d = covariance_defect(&Matrix2::identity(), 0.0, &PhasePoint::planar(1.0, 0.5), &g)
            .unwrap();
        assert!(d <= 1e-12);
        assert!(
            covariance_defect(&Matrix2::identity(), 0.5, &PhasePoint::planar(7.0, 0.0), &g)
                .is_err()
        );
    }
}
