//! Linear symplectic geometry on `R^{2n}`.
//!
//! Coordinates are `z = (x_1..x_n, p_1..p_n)`, the standard form is
//! `J = [[0, I], [-I, 0]]` and `σ(z, z') = (Jz)·z' = p·x' - x·p'`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const SYMPLECTIC_TOL: f64 = 1e-10;
const DET_TOL: f64 = 1e-9;

/// A point of phase space `R^{2n}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhasePoint(Vec<f64>);

impl PhasePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(Error::Dimension(format!(
                "phase point needs an even, positive number of coordinates, got {}",
                coords.len()
            )));
        }
        Ok(PhasePoint(coords))
    }

    /// A point of the phase plane (`n = 1`).
    pub fn planar(x: f64, p: f64) -> Self {
        PhasePoint(vec![x, p])
    }

    pub fn origin(n: usize) -> Self {
        PhasePoint(vec![0.0; 2 * n])
    }

    /// Number of degrees of freedom `n`.
    pub fn dof(&self) -> usize {
        self.0.len() / 2
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn x(&self) -> &[f64] {
        &self.0[..self.dof()]
    }

    pub fn p(&self) -> &[f64] {
        &self.0[self.dof()..]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        PhasePoint(v.iter().copied().collect())
    }

    pub fn add(&self, other: &PhasePoint) -> PhasePoint {
        PhasePoint(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn neg(&self) -> PhasePoint {
        PhasePoint(self.0.iter().map(|a| -a).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `J = [[0, I_n], [-I_n, 0]]`.
pub fn standard_j(n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Dimension("standard form needs n >= 1".into()));
    }
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    Ok(j)
}

/// Symplectic product `σ(z, z') = (Jz)·z'`.
pub fn sigma(z: &PhasePoint, w: &PhasePoint) -> Result<f64> {
    if z.dof() != w.dof() {
        return Err(Error::Dimension(
            "σ of points with different dimensions".into(),
        ));
    }
    let x = z.x().iter().zip(w.p()).map(|(a, b)| a * b).sum::<f64>();
    let p = z.p().iter().zip(w.x()).map(|(a, b)| a * b).sum::<f64>();
    Ok(p - x)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `‖SᵀJS − J‖_∞` (largest absolute entry).
pub fn symplectic_defect(s: &DMatrix<f64>) -> Result<f64> {
    if !s.is_square() || s.nrows() % 2 != 0 || s.nrows() == 0 {
        return Err(Error::Dimension(format!(
            "symplectic test needs a square matrix of even size, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let j = standard_j(s.nrows() / 2)?;
    Ok(max_abs(&(s.transpose() * &j * s - j)))
}

pub fn is_symplectic(s: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(symplectic_defect(s)? <= tol)
}

/// `H(z) = ½ Mz·z` with `M` symmetric positive definite.
///
/// The eigendecomposition of `M` is kept: ellipsoid projections and the
/// positivity check both need it.
#[derive(Clone, Debug)]
pub struct QuadraticHamiltonian {
    m: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl QuadraticHamiltonian {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() % 2 != 0 || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "Hamiltonian matrix must be 2n x 2n, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Hamiltonian matrix"));
        }
        let defect = max_abs(&(&m - m.transpose()));
        if defect > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { defect });
        }
        let m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(m.clone());
        let min = eig.eigenvalues.min();
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min,
            });
        }
        // ascending order keeps ellipsoid code simple
        let mut order: Vec<usize> = (0..m.nrows()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues =
            DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
        let eigenvectors = DMatrix::from_columns(
            &order
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        Ok(QuadraticHamiltonian {
            m,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `M = I_{2n}`, the isotropic oscillator.
    pub fn isotropic(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(2 * n, 2 * n))
    }

    pub fn dof(&self) -> usize {
        self.m.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Eigenvalues of `M`, ascending.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors of `M`, columns matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn energy(&self, z: &PhasePoint) -> f64 {
        let v = z.to_vector();
        0.5 * v.dot(&(&self.m * &v))
    }

    pub fn gradient(&self, z: &PhasePoint) -> DVector<f64> {
        &self.m * z.to_vector()
    }

    /// The flow `S_t = exp(tJM)`.
    pub fn flow(&self, t: f64) -> Result<SymplecticMatrix> {
        flow_matrix(self, t)
    }
}

/// A real `2n x 2n` matrix with `SᵀJS = J`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticMatrix(DMatrix<f64>);

impl SymplecticMatrix {
    /// Validates symplecticity and `det S = 1`, with tolerances scaled by `‖S‖²`.
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        let defect = symplectic_defect(&s)?;
        let scale = max_abs(&s).max(1.0);
        if defect > SYMPLECTIC_TOL * scale * scale {
            return Err(Error::NotSymplectic { defect });
        }
        let det = s.determinant();
        if (det - 1.0).abs() > DET_TOL * scale.powi(s.nrows() as i32) {
            return Err(Error::NotSymplectic {
                defect: (det - 1.0).abs(),
            });
        }
        Ok(SymplecticMatrix(s))
    }

    /// Skips validation. Only for matrices symplectic by construction.
    pub fn new_unchecked(s: DMatrix<f64>) -> Self {
        SymplecticMatrix(s)
    }

    pub fn identity(n: usize) -> Self {
        SymplecticMatrix(DMatrix::identity(2 * n, 2 * n))
    }

    pub fn dof(&self) -> usize {
        self.0.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply(&self, z: &PhasePoint) -> PhasePoint {
        PhasePoint::from_vector(&(&self.0 * z.to_vector()))
    }

    pub fn compose(&self, other: &SymplecticMatrix) -> SymplecticMatrix {
        SymplecticMatrix(&self.0 * &other.0)
    }

    /// `S⁻¹ = -J Sᵀ J`, exact for symplectic `S`.
    pub fn inverse(&self) -> SymplecticMatrix {
        let j = standard_j(self.dof()).expect("dimension checked at construction");
        SymplecticMatrix(-(&j * self.0.transpose() * &j))
    }

    /// Entries `(a, b, c, d)` of a `2 x 2` matrix `[[a, b], [c, d]]`.
    pub fn entries_2x2(&self) -> Option<[f64; 4]> {
        (self.0.nrows() == 2).then(|| {
            [
                self.0[(0, 0)],
                self.0[(0, 1)],
                self.0[(1, 0)],
                self.0[(1, 1)],
            ]
        })
    }
}

/// `exp(tJM)` for any symmetric `M`, validated as symplectic.
///
/// Used directly by the quantum side, where `M` only needs to be symmetric.
pub fn symmetric_flow(m: &DMatrix<f64>, t: f64) -> Result<SymplecticMatrix> {
    if !t.is_finite() {
        return Err(Error::NonFinite("flow time"));
    }
    let n2 = m.nrows();
    if !m.is_square() || n2 % 2 != 0 || n2 == 0 {
        return Err(Error::Dimension("flow generator must be 2n x 2n".into()));
    }
    if t == 0.0 {
        return Ok(SymplecticMatrix::identity(n2 / 2));
    }
    let j = standard_j(n2 / 2)?;
    let generator = (j * m) * t;
    SymplecticMatrix::new(generator.exp())
}

pub fn flow_matrix(h: &QuadraticHamiltonian, t: f64) -> Result<SymplecticMatrix> {
    symmetric_flow(h.matrix(), t)
}

/// Samples of `t ↦ S_t` together with a measured Lipschitz constant.
#[derive(Clone, Debug)]
pub struct SymplecticPath {
    pub times: Vec<f64>,
    pub matrices: Vec<SymplecticMatrix>,
    /// `max_k ‖S_{k+1} − S_k‖_∞ / (t_{k+1} − t_k)`; zero for a single sample.
    pub continuity_constant: f64,
}

pub fn symplectic_path(h: &QuadraticHamiltonian, t_grid: &[f64]) -> Result<SymplecticPath> {
    match t_grid.first() {
        Some(&t0) if t0 == 0.0 => {}
        _ => return Err(Error::InvalidArgument("time grid must start at 0".into())),
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "time grid must be strictly increasing".into(),
        ));
    }
    let matrices = t_grid
        .iter()
        .map(|&t| flow_matrix(h, t))
        .collect::<Result<Vec<_>>>()?;
    let continuity_constant = matrices
        .windows(2)
        .zip(t_grid.windows(2))
        .map(|(s, t)| max_abs(&(s[1].matrix() - s[0].matrix())) / (t[1] - t[0]))
        .fold(0.0, f64::max);
    Ok(SymplecticPath {
        times: t_grid.to_vec(),
        matrices,
        continuity_constant,
    })
}
