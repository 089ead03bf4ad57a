//! Finite Gabor systems `{T(z)φ : z ∈ Λ}` on a [`GridSpec`], their frame
//! operators and frame bounds, and the two window deformations.
//!
//! Vectors are handled in `L²`-normalized coordinates `u = √dx·ψ`, so the
//! Euclidean inner product of `C^N` is the grid inner product and the frame
//! operator `S = D*D` is a plain Hermitian matrix.
//!
//! A truncated point set only covers part of the grid's phase-space torus,
//! so on the whole of `C^N` the lower bound collapses to zero. Bounds can be
//! taken instead on a [`ProbeSpace`]: the span of the low-energy
//! eigenvectors of a quantized quadratic Hamiltonian, sized so that its
//! classical ellipsoid sits inside the covered region.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::{Mat, Side};
use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::c64;
use crate::error::{Error, Result};
use crate::format::csv_row;
use crate::lattice::{
    deform_point_set, max_safe_epsilon, Ellipsoid, PointSet, DEFAULT_BOUNDARY_TOL, DEFAULT_EPS_MAX,
};
use crate::metaplectic::{matrix2, metaplectic_lift, spectrum, HamiltonianSpectrum};
use crate::quantum::{heisenberg, GridSpec, State};
use crate::symplectic::{PhasePoint, QuadraticHamiltonian};

const WINDOW_NORM_TOL: f64 = 1e-10;
/// `is_frame ⇔ A > FRAME_THRESHOLD·B`.
pub const FRAME_THRESHOLD: f64 = 1e-10;

/// Window, point set and grid.
#[derive(Clone, Debug)]
pub struct GaborSystem {
    window: State,
    points: PointSet,
    grid: GridSpec,
    wrapped: Vec<usize>,
}

impl GaborSystem {
    /// The window must have unit norm within `1e-10`; points with
    /// `|q| > L/2` are accepted but listed by [`Self::wrapped`].
    pub fn new(window: State, points: PointSet, grid: GridSpec) -> Result<Self> {
        if window.len() != grid.n {
            return Err(Error::GridMismatch);
        }
        if points.dof() != 1 {
            return Err(Error::Dimension(
                "Gabor systems are implemented for n = 1".into(),
            ));
        }
        let norm = window.norm(&grid);
        if (norm - 1.0).abs() > WINDOW_NORM_TOL {
            return Err(Error::InvalidArgument(format!(
                "window norm is {norm}, expected 1"
            )));
        }
        let half = 0.5 * grid.length();
        let wrapped: Vec<usize> = points
            .points()
            .iter()
            .enumerate()
            .filter(|(_, z)| z.coords()[0].abs() > half)
            .map(|(i, _)| i)
            .collect();
        if !wrapped.is_empty() {
            log::warn!(
                "{} point(s) lie beyond |q| = L/2 and wrap around the grid",
                wrapped.len()
            );
        }
        Ok(GaborSystem {
            window,
            points,
            grid,
            wrapped,
        })
    }

    pub fn window(&self) -> &State {
        &self.window
    }

    pub fn points(&self) -> &PointSet {
        &self.points
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn wrapped(&self) -> &[usize] {
        &self.wrapped
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `T(z_j)φ` for every point.
    pub fn atoms(&self) -> Result<Vec<State>> {
        self.points
            .points()
            .par_iter()
            .map(|z| heisenberg(z, &self.window, &self.grid))
            .collect()
    }
}

/// `m × N` matrix with rows `√dx·conj(T(z_j)φ)`: `(Du)_j = (ψ|T(z_j)φ)`.
pub fn analysis_matrix(sys: &GaborSystem) -> Result<Mat<c64>> {
    if sys.is_empty() {
        return Err(Error::InvalidArgument(
            "analysis matrix of an empty point set".into(),
        ));
    }
    let atoms = sys.atoms()?;
    let s = sys.grid.dx.sqrt();
    Ok(Mat::from_fn(atoms.len(), sys.grid.n, |j, k| {
        atoms[j].values()[k].conj() * s
    }))
}

/// `S = D*D`.
pub fn frame_operator(sys: &GaborSystem) -> Result<Mat<c64>> {
    let d = analysis_matrix(sys)?;
    Ok(d.adjoint() * &d)
}

/// Frame bounds `A ≤ B` of a finite system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameBounds {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub is_frame: bool,
}

impl FrameBounds {
    pub fn new(a: f64, b: f64) -> Self {
        let a = a.max(0.0);
        FrameBounds {
            a,
            b,
            is_frame: a > FRAME_THRESHOLD * b,
        }
    }

    /// `B / A`; infinite when `A = 0`.
    pub fn condition(&self) -> f64 {
        if self.a > 0.0 {
            self.b / self.a
        } else {
            f64::INFINITY
        }
    }
}

/// An orthonormal basis (in `C^N`) of the eigenvectors of `Ĥ_M` with
/// eigenvalue at most `cut`. Invariant under every `U_t` of the same `M`.
#[derive(Clone, Debug)]
pub struct ProbeSpace {
    basis: Mat<c64>,
    cut: f64,
    source: Matrix2<f64>,
}

impl ProbeSpace {
    pub fn low_energy(m: &Matrix2<f64>, cut: f64, g: &GridSpec) -> Result<Self> {
        let spec = spectrum(m, g)?;
        Self::from_spectrum(&spec, cut)
    }

    fn from_spectrum(spec: &Arc<HamiltonianSpectrum>, cut: f64) -> Result<Self> {
        let k = spec.eigenvalues().iter().take_while(|&&l| l <= cut).count();
        if k == 0 {
            return Err(Error::InvalidArgument(format!(
                "no eigenvalue below the energy cut {cut}"
            )));
        }
        let v = spec.vectors();
        let basis = Mat::from_fn(v.nrows(), k, |i, j| v[(i, j)]);
        Ok(ProbeSpace {
            basis,
            cut,
            source: *spec.source(),
        })
    }

    /// Energy cut whose classical ellipsoid `{½zᵀMz ≤ cut}` stays `margin`
    /// inside the region covered by `points` (and by the grid).
    pub fn covering_cut(
        points: &PointSet,
        m: &Matrix2<f64>,
        g: &GridSpec,
        margin: f64,
    ) -> Result<f64> {
        let (lo, hi) = points
            .bounding_box()
            .ok_or_else(|| Error::InvalidArgument("probe space of an empty point set".into()))?;
        let inv = m.try_inverse().ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: 0.0,
        })?;
        let limits = [0.5 * g.length(), g.p_max()];
        let mut cut = f64::INFINITY;
        for i in 0..2 {
            let reach = lo[i].abs().min(hi[i].abs()).min(limits[i]);
            let r = reach - margin;
            if !(r > 0.0) || lo[i] > 0.0 || hi[i] < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "points cover no neighbourhood of the origin of radius {margin} along axis {i}"
                )));
            }
            cut = cut.min(r * r / (2.0 * inv[(i, i)]));
        }
        Ok(cut)
    }

    pub fn covering(
        points: &PointSet,
        m: &Matrix2<f64>,
        g: &GridSpec,
        margin: f64,
    ) -> Result<Self> {
        Self::low_energy(m, Self::covering_cut(points, m, g, margin)?, g)
    }

    /// Default margin `4√ħ`.
    pub fn default_margin(g: &GridSpec) -> f64 {
        4.0 * g.hbar.sqrt()
    }

    pub fn basis(&self) -> &Mat<c64> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn cut(&self) -> f64 {
        self.cut
    }

    pub fn source(&self) -> &Matrix2<f64> {
        &self.source
    }
}

/// Where the frame inequality is tested.
#[derive(Clone, Debug)]
pub enum BoundsDomain {
    /// All of `C^N`.
    Full,
    /// A subspace; bounds of the compression `V*SV`.
    Probe(ProbeSpace),
}

fn extremal_eigenvalues(h: &Mat<c64>) -> Result<(f64, f64)> {
    let ev = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let lo = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok((lo, hi))
}

/// Extremal eigenvalues of `W*W` for the `m × k` matrix `W`; `A = 0` when
/// `m < k` (rank deficient), with `B` taken from the smaller `WW*`.
fn gram_bounds(w: &Mat<c64>) -> Result<FrameBounds> {
    if w.nrows() >= w.ncols() {
        let (a, b) = extremal_eigenvalues(&(w.adjoint() * w))?;
        Ok(FrameBounds::new(a, b))
    } else {
        let (_, b) = extremal_eigenvalues(&(w * w.adjoint()))?;
        Ok(FrameBounds::new(0.0, b))
    }
}

pub fn frame_bounds(sys: &GaborSystem, domain: &BoundsDomain) -> Result<FrameBounds> {
    let d = analysis_matrix(sys)?;
    match domain {
        BoundsDomain::Full => gram_bounds(&d),
        BoundsDomain::Probe(space) => {
            if space.basis.nrows() != sys.grid.n {
                return Err(Error::GridMismatch);
            }
            gram_bounds(&(&d * &space.basis))
        }
    }
}

/// `G(T(z_t)U_tT(z₀)⁻¹φ, S_tΛ)` with `z_t = S_t z₀`.
pub fn covariant_deform(
    sys: &GaborSystem,
    h: &QuadraticHamiltonian,
    t: f64,
    z0: &PhasePoint,
) -> Result<GaborSystem> {
    let m = matrix2(h.matrix())?;
    let s = h.flow(t)?;
    let zt = s.apply(z0);
    let u = metaplectic_lift(&m, t, &sys.grid)?;
    let back = heisenberg(&z0.neg(), &sys.window, &sys.grid)?;
    let window = heisenberg(&zt, &u.apply(&back)?, &sys.grid)?;
    let moved = sys.points.points().iter().map(|z| s.apply(z)).collect();
    let points = PointSet::measured(1, moved)?;
    GaborSystem::new(window, points, sys.grid)
}

/// Knobs for [`ellipsoid_deform`].
#[derive(Clone, Debug)]
pub struct DeformOptions {
    pub boundary_tol: f64,
    pub eps_max: f64,
    pub domain: BoundsDomain,
}

impl Default for DeformOptions {
    fn default() -> Self {
        DeformOptions {
            boundary_tol: DEFAULT_BOUNDARY_TOL,
            eps_max: DEFAULT_EPS_MAX,
            domain: BoundsDomain::Full,
        }
    }
}

pub fn relative_drift(before: f64, after: f64) -> f64 {
    (after - before).abs() / before.max(f64::MIN_POSITIVE)
}

/// Frame bounds before and after one ellipsoid deformation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationReport {
    pub t: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    pub epsilon_used: f64,
    pub moved_count: usize,
    pub bounds_before: FrameBounds,
    pub bounds_after: FrameBounds,
    #[serde(rename = "rel_dA")]
    pub rel_da: f64,
    #[serde(rename = "rel_dB")]
    pub rel_db: f64,
    pub collisions: usize,
}

impl DeformationReport {
    pub const CSV_HEADER: &'static str = "t,E,eps,moved,A,B,A_prime,B_prime,rel_dA,rel_dB";

    pub fn csv_row(&self) -> String {
        let head = csv_row(&[self.t, self.energy, self.epsilon_used]);
        let tail = csv_row(&[
            self.bounds_before.a,
            self.bounds_before.b,
            self.bounds_after.a,
            self.bounds_after.b,
            self.rel_da,
            self.rel_db,
        ]);
        format!("{head},{},{tail}", self.moved_count)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `G(U_tφ, Λ′ ∪ S_t F)` with `F = Ω ∩ Λ` and `Λ′ = Λ \ F`.
///
/// Needs a positive safe thickening radius for `Λ` and `Σ`; the radius is
/// recorded in the report.
pub fn ellipsoid_deform(
    sys: &GaborSystem,
    ell: &Ellipsoid,
    t: f64,
    opts: &DeformOptions,
) -> Result<(GaborSystem, DeformationReport)> {
    let before = frame_bounds(sys, &opts.domain)?;
    ellipsoid_deform_from(sys, ell, t, opts, before)
}

/// [`ellipsoid_deform`] with the bounds of `sys` already known.
pub fn ellipsoid_deform_from(
    sys: &GaborSystem,
    ell: &Ellipsoid,
    t: f64,
    opts: &DeformOptions,
    before: FrameBounds,
) -> Result<(GaborSystem, DeformationReport)> {
    let eps = max_safe_epsilon(&sys.points, ell, opts.boundary_tol, opts.eps_max)?;
    if !(eps > 0.0) {
        return Err(Error::UnsafeEpsilon {
            eps,
            eps_star: eps,
            offending: Vec::new(),
        });
    }
    let m = matrix2(ell.hamiltonian().matrix())?;
    let u = metaplectic_lift(&m, t, &sys.grid)?;
    let window = u.apply(&sys.window)?;
    let def = deform_point_set(&sys.points, ell, t, opts.boundary_tol)?;
    let out = GaborSystem::new(window, def.points, sys.grid)?;
    let after = frame_bounds(&out, &opts.domain)?;
    let report = DeformationReport {
        t,
        energy: ell.energy(),
        epsilon_used: eps,
        moved_count: def.moved.len(),
        bounds_before: before,
        bounds_after: after,
        rel_da: relative_drift(before.a, after.a),
        rel_db: relative_drift(before.b, after.b),
        collisions: def.collisions.len(),
    };
    Ok((out, report))
}

/// Drifts aggregated per energy level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyRow {
    #[serde(rename = "E")]
    pub energy: f64,
    pub moved: usize,
    pub reports: usize,
    pub max_rel_da: f64,
    pub max_rel_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportSummary {
    pub reports: usize,
    pub max_rel_da: f64,
    pub max_rel_db: f64,
    pub mean_rel_da: f64,
    pub mean_rel_db: f64,
    pub by_energy: Vec<EnergyRow>,
}

impl ReportSummary {
    pub const CSV_HEADER: &'static str = "E,moved,reports,max_rel_dA,max_rel_dB";

    pub fn csv_rows(&self) -> Vec<String> {
        self.by_energy
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{}",
                    csv_row(&[r.energy]),
                    r.moved,
                    r.reports,
                    csv_row(&[r.max_rel_da, r.max_rel_db])
                )
            })
            .collect()
    }
}

pub fn compare_reports(reports: &[DeformationReport]) -> Result<ReportSummary> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no reports to compare".into()));
    }
    let n = reports.len() as f64;
    let mut by: BTreeMap<u64, EnergyRow> = BTreeMap::new();
    for r in reports {
        // total order on non-negative energies
        let row = by.entry(r.energy.to_bits()).or_insert(EnergyRow {
            energy: r.energy,
            moved: r.moved_count,
            reports: 0,
            max_rel_da: 0.0,
            max_rel_db: 0.0,
        });
        row.reports += 1;
        row.moved = row.moved.max(r.moved_count);
        row.max_rel_da = row.max_rel_da.max(r.rel_da);
        row.max_rel_db = row.max_rel_db.max(r.rel_db);
    }
    Ok(ReportSummary {
        reports: reports.len(),
        max_rel_da: reports.iter().map(|r| r.rel_da).fold(0.0, f64::max),
        max_rel_db: reports.iter().map(|r| r.rel_db).fold(0.0, f64::max),
        mean_rel_da: reports.iter().map(|r| r.rel_da).sum::<f64>() / n,
        mean_rel_db: reports.iter().map(|r| r.rel_db).sum::<f64>() / n,
        by_energy: by.into_values().collect(),
    })
}

/// Every grid translation `q = j·dx` combined with every modulation
/// `p = k·dp`: `N²` points, frame operator `N·I`.
pub fn full_discrete_system(window: State, g: &GridSpec) -> Result<GaborSystem> {
    let n = g.n as i64;
    let mut pts = Vec::with_capacity(g.n * g.n);
    for j in -n / 2..n / 2 {
        for k in -n / 2..n / 2 {
            pts.push(PhasePoint::planar(j as f64 * g.dx, k as f64 * g.dp()));
        }
    }
    GaborSystem::new(window, PointSet::from_points(1, pts)?, *g)
}
