//! Finite phase-space point sets and their relation to an ellipsoid
//! `Σ = {½Mz·z = E}`.
//!
//! The interior `Ω` together with `Σ` forms the compact set whose points get
//! moved by the flow; every other point stays where it is.

use std::io::{Read, Write};

use nalgebra::DVector;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::format::sig17;
use crate::symplectic::{PhasePoint, QuadraticHamiltonian};

/// Points closer than this after a deformation are reported as collisions.
pub const COLLISION_DISTANCE: f64 = 1e-9;
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-9;
const ON_SIGMA_TOL: f64 = 1e-10;
pub const DEFAULT_EPS_MAX: f64 = 1.0;

/// Axis-aligned box in `R^{2n}`, bounds inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PhaseBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() || lower.len() % 2 != 0 {
            return Err(Error::Dimension(
                "box bounds must have equal, even length".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument(
                "box needs lower < upper in every coordinate".into(),
            ));
        }
        Ok(PhaseBox { lower, upper })
    }

    /// `[-half_width, half_width]^{2n}`.
    pub fn symmetric(n: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; 2 * n], vec![half_width; 2 * n])
    }

    pub fn dof(&self) -> usize {
        self.lower.len() / 2
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, z: &PhasePoint) -> bool {
        z.coords()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(c, (l, u))| l <= c && c <= u)
    }
}

/// A finite set of phase points with certified pairwise separation `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    dof: usize,
    points: Vec<PhasePoint>,
    delta: f64,
}

impl PointSet {
    /// Checks every pair: `|z − z'| ≥ delta > 0`.
    pub fn new(dof: usize, points: Vec<PhasePoint>, delta: f64) -> Result<Self> {
        if dof == 0 {
            return Err(Error::Dimension("point set needs n >= 1".into()));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "separation must be positive, got {delta}"
            )));
        }
        check_points(dof, &points)?;
        let found = min_separation(&points);
        if found < delta * (1.0 - 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "points are {found} apart, less than the claimed separation {delta}"
            )));
        }
        Ok(PointSet { dof, points, delta })
    }

    /// Uses the measured minimum pairwise distance as the separation.
    pub fn from_points(dof: usize, points: Vec<PhasePoint>) -> Result<Self> {
        let set = Self::measured(dof, points)?;
        if set.points.len() > 1 && !(set.delta > 0.0) {
            return Err(Error::InvalidArgument(
                "point set contains duplicates".into(),
            ));
        }
        Ok(set)
    }

    /// Like [`Self::from_points`] but tolerates coincident points (delta = 0).
    pub(crate) fn measured(dof: usize, points: Vec<PhasePoint>) -> Result<Self> {
        if dof == 0 {
            return Err(Error::Dimension("point set needs n >= 1".into()));
        }
        check_points(dof, &points)?;
        let delta = min_separation(&points);
        Ok(PointSet { dof, points, delta })
    }

    pub fn empty(dof: usize) -> Self {
        PointSet {
            dof,
            points: Vec::new(),
            delta: f64::INFINITY,
        }
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn points(&self) -> &[PhasePoint] {
        &self.points
    }

    /// Certified separation; `+inf` for fewer than two points.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Per-coordinate `(min, max)` over the points, `None` when empty.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let first = self.points.first()?;
        let mut lo = first.coords().to_vec();
        let mut hi = lo.clone();
        for z in &self.points[1..] {
            for (i, &c) in z.coords().iter().enumerate() {
                lo[i] = lo[i].min(c);
                hi[i] = hi[i].max(c);
            }
        }
        Some((lo, hi))
    }

    /// Same points as a set: equal cardinality and every point matched within `tol`.
    pub fn set_eq(&self, other: &PointSet, tol: f64) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let mut used = vec![false; other.len()];
        self.points.iter().all(|z| {
            match other
                .points
                .iter()
                .enumerate()
                .position(|(j, w)| !used[j] && z.distance(w) <= tol)
            {
                Some(j) => {
                    used[j] = true;
                    true
                }
                None => false,
            }
        })
    }

    /// JSON `{ "dim": n, "delta": δ, "points": [[x.., p..], ..] }`, 17 significant digits.
    pub fn to_json(&self) -> String {
        let points = self
            .points
            .iter()
            .map(|z| {
                format!(
                    "[{}]",
                    z.coords()
                        .iter()
                        .map(|&c| sig17(c))
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            })
            .collect::<Vec<_>>()
            .join(",\n    ");
        let delta = if self.delta.is_finite() {
            sig17(self.delta)
        } else {
            "null".to_string()
        };
        if self.points.is_empty() {
            format!(
                "{{\n  \"dim\": {},\n  \"delta\": {},\n  \"points\": []\n}}\n",
                self.dof, delta
            )
        } else {
            format!(
                "{{\n  \"dim\": {},\n  \"delta\": {},\n  \"points\": [\n    {}\n  ]\n}}\n",
                self.dof, delta, points
            )
        }
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json().as_bytes())?;
        Ok(())
    }

    /// Parses the JSON form; the stored separation is re-verified.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Wire {
            dim: usize,
            delta: Option<f64>,
            points: Vec<Vec<f64>>,
        }
        let wire: Wire = serde_json::from_str(text)?;
        let points = wire
            .points
            .into_iter()
            .map(PhasePoint::new)
            .collect::<Result<Vec<_>>>()?;
        match wire.delta {
            Some(d) if points.len() > 1 => PointSet::new(wire.dim, points, d),
            _ => PointSet::from_points(wire.dim, points),
        }
    }

    pub fn read_json<R: Read>(mut r: R) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::from_json(&s)
    }
}

fn check_points(dof: usize, points: &[PhasePoint]) -> Result<()> {
    if let Some(z) = points.iter().find(|z| z.dof() != dof) {
        return Err(Error::Dimension(format!(
            "point of dimension {} in a set of dimension {dof}",
            z.dof()
        )));
    }
    if points.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("point set"));
    }
    Ok(())
}

fn min_separation(points: &[PhasePoint]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.min(a.distance(b));
        }
    }
    best
}

/// All points of `(αZ)^n × (βZ)^n` inside `bounds`, in lexicographic index order.
pub fn separable_lattice(alpha: f64, beta: f64, bounds: &PhaseBox, n: usize) -> Result<PointSet> {
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidArgument(
            "lattice spacings must be positive".into(),
        ));
    }
    if bounds.dof() != n {
        return Err(Error::Dimension(format!(
            "box has n = {}, lattice n = {n}",
            bounds.dof()
        )));
    }
    let ranges: Vec<(i64, i64, f64)> = (0..2 * n)
        .map(|i| {
            let step = if i < n { alpha } else { beta };
            let lo = (bounds.lower[i] / step).ceil() as i64;
            let hi = (bounds.upper[i] / step).floor() as i64;
            (lo, hi, step)
        })
        .collect();
    let mut points = Vec::new();
    if ranges.iter().all(|(lo, hi, _)| lo <= hi) {
        let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            let z = PhasePoint::new(
                idx.iter()
                    .zip(&ranges)
                    .map(|(&k, r)| k as f64 * r.2)
                    .collect(),
            )?;
            if bounds.contains(&z) {
                points.push(z);
            }
            for d in (0..idx.len()).rev() {
                if idx[d] < ranges[d].1 {
                    idx[d] += 1;
                    continue 'outer;
                }
                idx[d] = ranges[d].0;
            }
            break;
        }
    }
    if points.is_empty() {
        return Ok(PointSet::empty(n));
    }
    Ok(PointSet {
        dof: n,
        points,
        delta: alpha.min(beta),
    })
}

/// The ellipsoid `Σ = {½Mz·z = E}` bounding the compact region `Ω`.
#[derive(Clone, Debug)]
pub struct Ellipsoid {
    h: QuadraticHamiltonian,
    energy: f64,
}

/// Nearest point of `Σ` and its distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub distance: f64,
    pub point: PhasePoint,
}

impl Ellipsoid {
    pub fn new(h: QuadraticHamiltonian, energy: f64) -> Result<Self> {
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ellipsoid energy must be positive, got {energy}"
            )));
        }
        Ok(Ellipsoid { h, energy })
    }

    pub fn hamiltonian(&self) -> &QuadraticHamiltonian {
        &self.h
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn dof(&self) -> usize {
        self.h.dof()
    }

    /// Semi-axes `sqrt(2E/μ_i)`, ascending eigenvalue order of `M`.
    pub fn semi_axes(&self) -> Vec<f64> {
        self.h
            .eigenvalues()
            .iter()
            .map(|mu| (2.0 * self.energy / mu).sqrt())
            .collect()
    }

    pub fn value(&self, z: &PhasePoint) -> f64 {
        self.h.energy(z)
    }

    /// Euclidean distance from `z` to `Σ` and the nearest point; exactly
    /// zero (with `z` itself) when `|H(z) − E| ≤ 1e-10·E`.
    ///
    /// Critical points are `w = (I + λM)⁻¹z` with `½Mw·w = E`. Every real
    /// root of the secular equation is collected and the nearest candidate
    /// returned; the global minimiser is the one with `I + λM ⪰ 0`, reached
    /// through the substitution `s = 1 + λμ_max` which avoids cancellation
    /// near the pole. When `z` has no component along the top eigenspace the
    /// minimiser sits on the pole itself (e.g. the centre); the free
    /// direction is then the projection of the first coordinate axis into
    /// that eigenspace.
    pub fn distance(&self, z: &PhasePoint) -> Result<Projection> {
        if z.dof() != self.dof() {
            return Err(Error::Dimension(
                "point and ellipsoid dimensions differ".into(),
            ));
        }
        if !z.is_finite() {
            return Err(Error::NonFinite("projected point"));
        }
        if (self.value(z) - self.energy).abs() <= ON_SIGMA_TOL * self.energy {
            return Ok(Projection {
                distance: 0.0,
                point: z.clone(),
            });
        }
        let q = self.h.eigenvectors();
        let mu = self.h.eigenvalues();
        let y = q.transpose() * z.to_vector();
        let dim = mu.len();
        let mu_max = mu[dim - 1];
        let e = self.energy;
        let scale = z.norm() + self.semi_axes()[dim - 1];

        let top: Vec<usize> = (0..dim)
            .filter(|&i| (mu[i] - mu_max).abs() <= 1e-12 * mu_max)
            .collect();
        let top_weight: f64 = top.iter().map(|&i| y[i] * y[i]).sum();

        // candidate coordinates in the eigenbasis
        let mut candidates: Vec<DVector<f64>> = Vec::new();

        // 1 + λμ_i written through s = 1 + λμ_max
        let denom = |s: f64, i: usize| (1.0 - mu[i] / mu_max) + s * mu[i] / mu_max;
        let secular_s = |s: f64| {
            0.5 * (0..dim)
                .map(|i| mu[i] * (y[i] / denom(s, i)).powi(2))
                .sum::<f64>()
                - e
        };
        let hard_case = top_weight <= (1e-30 * scale * scale).max(f64::MIN_POSITIVE);

        let principal = if hard_case {
            None
        } else {
            Some(principal_root(&secular_s)?)
        };
        if let Some(s) = principal {
            candidates.push(DVector::from_iterator(
                dim,
                (0..dim).map(|i| y[i] / denom(s, i)),
            ));
        } else {
            // pole: components outside the top eigenspace are fixed, the rest is free
            let mut w = DVector::zeros(dim);
            for i in 0..dim {
                if !top.contains(&i) {
                    w[i] = y[i] / (1.0 - mu[i] / mu_max);
                }
            }
            let rest = e - 0.5 * (0..dim).map(|i| mu[i] * w[i] * w[i]).sum::<f64>();
            if rest >= 0.0 {
                let tau = (2.0 * rest / mu_max).sqrt();
                let dir = top_direction(q, &top);
                for (k, &i) in top.iter().enumerate() {
                    w[i] = tau * dir[k];
                }
                candidates.push(w);
            } else {
                // the pole limit is exterior: a root exists to its right after all
                let s = principal_root(&secular_s)?;
                candidates.push(DVector::from_iterator(
                    dim,
                    (0..dim).map(|i| y[i] / denom(s, i)),
                ));
            }
        }

        for lam in secondary_roots(mu.as_slice(), y.as_slice(), e) {
            candidates.push(DVector::from_iterator(
                dim,
                (0..dim).map(|i| y[i] / (1.0 + lam * mu[i])),
            ));
        }

        let mut best: Option<Projection> = None;
        for w_eig in candidates {
            let w = q * w_eig;
            let mut p = PhasePoint::from_vector(&w);
            // remove residual constraint error
            let hv = self.h.energy(&p);
            if hv > 0.0 {
                let r = (e / hv).sqrt();
                p = PhasePoint::from_vector(&(w * r));
            }
            let d = z.distance(&p);
            if best.as_ref().is_none_or(|b| d < b.distance) {
                best = Some(Projection {
                    distance: d,
                    point: p,
                });
            }
        }
        best.ok_or(Error::RootBracket {
            lo: 0.0,
            hi: f64::INFINITY,
        })
    }
}

/// Root of the decreasing secular function on `s ∈ (0, ∞)`.
fn principal_root(f: &dyn Fn(f64) -> f64) -> Result<f64> {
    let mut lo = 1.0;
    let mut hi = 1.0;
    let f1 = f(1.0);
    if f1 == 0.0 {
        return Ok(1.0);
    }
    if f1 > 0.0 {
        // exterior point: root at s > 1
        let mut k = 0;
        while f(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            k += 1;
            if k > 2000 || !hi.is_finite() {
                return Err(Error::RootBracket { lo: 1.0, hi });
            }
        }
    } else {
        let mut k = 0;
        while f(lo) < 0.0 {
            hi = lo;
            lo *= 0.5;
            k += 1;
            if k > 1100 || lo == 0.0 {
                return Err(Error::RootBracket { lo, hi: 1.0 });
            }
        }
    }
    for _ in 0..400 {
        let mid = if hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Secular roots with `λ < -1/μ_max` (non-minimising critical points).
fn secondary_roots(mu: &[f64], y: &[f64], e: f64) -> Vec<f64> {
    let f = |lam: f64| {
        0.5 * mu
            .iter()
            .zip(y)
            .map(|(m, v)| m * (v / (1.0 + lam * m)).powi(2))
            .sum::<f64>()
            - e
    };
    let mut poles: Vec<f64> = mu.iter().map(|m| -1.0 / m).collect();
    poles.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    let mut intervals = Vec::new();
    let far = poles[0] - 1e6 * poles[0].abs().max(1.0);
    intervals.push((far, poles[0]));
    for w in poles.windows(2) {
        intervals.push((w[0], w[1]));
    }
    let mut roots = Vec::new();
    const SAMPLES: usize = 256;
    for (a, b) in intervals {
        let width = b - a;
        let samples: Vec<f64> = (1..SAMPLES)
            .map(|k| {
                // cluster samples near both poles
                let u = k as f64 / SAMPLES as f64;
                a + width * (0.5 - 0.5 * (std::f64::consts::PI * u).cos())
            })
            .collect();
        for w in samples.windows(2) {
            let (fa, fb) = (f(w[0]), f(w[1]));
            if fa.is_finite() && fb.is_finite() && fa.signum() != fb.signum() {
                let (mut lo, mut hi) = (w[0], w[1]);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if f(mid).signum() == fa.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
    }
    roots
}

/// Unit vector (in eigen-coordinates of `top`) closest to the first coordinate axis.
fn top_direction(q: &nalgebra::DMatrix<f64>, top: &[usize]) -> Vec<f64> {
    for axis in 0..q.nrows() {
        let comp: Vec<f64> = top.iter().map(|&i| q[(axis, i)]).collect();
        let norm = comp.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return comp.iter().map(|c| c / norm).collect();
        }
    }
    let mut v = vec![0.0; top.len()];
    v[0] = 1.0;
    v
}

/// Indices of the points in `Ω \ Σ`, on `Σ`, and outside `Ω`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Classification {
    pub interior: Vec<usize>,
    pub boundary: Vec<usize>,
    pub exterior: Vec<usize>,
}

impl Classification {
    /// `F = Ω ∩ Λ`, interior and boundary together, ascending.
    pub fn enclosed(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .interior
            .iter()
            .chain(&self.boundary)
            .copied()
            .collect();
        f.sort_unstable();
        f
    }
}

/// Boundary means `|H(z) − E| ≤ tol·E`.
pub fn classify_points(
    points: &PointSet,
    ell: &Ellipsoid,
    boundary_tol: f64,
) -> Result<Classification> {
    check_dims(points, ell)?;
    if !(boundary_tol >= 0.0) {
        return Err(Error::InvalidArgument(
            "boundary tolerance must be non-negative".into(),
        ));
    }
    let e = ell.energy();
    let mut c = Classification::default();
    for (i, z) in points.points().iter().enumerate() {
        let h = ell.value(z);
        if (h - e).abs() <= boundary_tol * e {
            c.boundary.push(i);
        } else if h < e {
            c.interior.push(i);
        } else {
            c.exterior.push(i);
        }
    }
    Ok(c)
}

fn check_dims(points: &PointSet, ell: &Ellipsoid) -> Result<()> {
    if points.dof() != ell.dof() {
        return Err(Error::Dimension(format!(
            "point set has n = {}, ellipsoid n = {}",
            points.dof(),
            ell.dof()
        )));
    }
    Ok(())
}

pub fn distance_to_ellipsoid(z: &PhasePoint, ell: &Ellipsoid) -> Result<Projection> {
    ell.distance(z)
}

/// Largest `ε` whose thickening `Σ_ε` picks up no point off `Σ`.
///
/// The minimum distance to `Σ` over the points not on `Σ`, capped at
/// `eps_max`; `eps_max` itself when no such point exists.
pub fn max_safe_epsilon(
    points: &PointSet,
    ell: &Ellipsoid,
    boundary_tol: f64,
    eps_max: f64,
) -> Result<f64> {
    let class = classify_points(points, ell, boundary_tol)?;
    let mut best = eps_max;
    for &i in class.interior.iter().chain(&class.exterior) {
        best = best.min(ell.distance(&points.points()[i])?.distance);
    }
    Ok(best)
}

/// Points off `Σ` whose distance to `Σ` is below `eps`.
pub fn points_within(
    points: &PointSet,
    ell: &Ellipsoid,
    boundary_tol: f64,
    eps: f64,
) -> Result<Vec<PhasePoint>> {
    let class = classify_points(points, ell, boundary_tol)?;
    let mut idx: Vec<usize> = class
        .interior
        .iter()
        .chain(&class.exterior)
        .copied()
        .collect();
    idx.sort_unstable();
    let mut out = Vec::new();
    for i in idx {
        let z = &points.points()[i];
        if ell.distance(z)?.distance < eps {
            out.push(z.clone());
        }
    }
    Ok(out)
}

/// Result of moving `F = Ω ∩ Λ` along the flow.
#[derive(Clone, Debug)]
pub struct Deformation {
    /// `(Λ \ F) ∪ S_t(F)`, in the original index order.
    pub points: PointSet,
    /// Indices (into both sets) of the moved points.
    pub moved: Vec<usize>,
    /// Pairs `(moved, fixed)` closer than [`COLLISION_DISTANCE`].
    pub collisions: Vec<(usize, usize)>,
}

impl Deformation {
    pub fn has_collisions(&self) -> bool {
        !self.collisions.is_empty()
    }
}

/// `Λ′ ∪ F_t` with `Λ′ = Λ \ F`, `F_t = S_t(F)`.
///
/// Fixed points are copied bitwise. The separation of the result is
/// re-measured; collisions are flagged, not rejected.
pub fn deform_point_set(
    points: &PointSet,
    ell: &Ellipsoid,
    t: f64,
    boundary_tol: f64,
) -> Result<Deformation> {
    let class = classify_points(points, ell, boundary_tol)?;
    let moved = class.enclosed();
    let s = ell.hamiltonian().flow(t)?;
    let mut out = points.points().to_vec();
    for &i in &moved {
        out[i] = s.apply(&out[i]);
    }
    let mut collisions = Vec::new();
    for &i in &moved {
        for &j in &class.exterior {
            if out[i].distance(&out[j]) < COLLISION_DISTANCE {
                collisions.push((i, j));
            }
        }
    }
    if !collisions.is_empty() {
        log::warn!(
            "{} moved point(s) collide with fixed lattice points",
            collisions.len()
        );
    }
    let points = PointSet::measured(points.dof(), out)?;
    Ok(Deformation {
        points,
        moved,
        collisions,
    })
}

/// `|{z : H(z) ≤ E}|`, with `H(z) ≤ (1 + DEFAULT_BOUNDARY_TOL)·E` so that
/// shell points a rounding error above `E` still count, as they do in `F`.
pub fn count_in_ellipsoid(points: &PointSet, ell: &Ellipsoid) -> Result<usize> {
    check_dims(points, ell)?;
    let cap = ell.energy() * (1.0 + DEFAULT_BOUNDARY_TOL);
    Ok(points
        .points()
        .iter()
        .filter(|z| ell.value(z) <= cap)
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    fn unit_disc(energy: f64) -> Ellipsoid {
        Ellipsoid::new(QuadraticHamiltonian::isotropic(1).unwrap(), energy).unwrap()
    }

    fn z2(half: f64) -> PointSet {
        separable_lattice(1.0, 1.0, &PhaseBox::symmetric(1, half).unwrap(), 1).unwrap()
    }

    /// Oracle: dense sampling of Σ in the plane.
    fn sampled_distance(ell: &Ellipsoid, z: &PhasePoint, samples: usize) -> f64 {
        let axes = ell.semi_axes();
        let q = ell.hamiltonian().eigenvectors();
        (0..samples)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / samples as f64;
                let w = q * DVector::from_vec(vec![axes[0] * th.cos(), axes[1] * th.sin()]);
                z.distance(&PhasePoint::from_vector(&w))
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn lattice_counts() {
        let b = PhaseBox::symmetric(1, 2.5).unwrap();
        let l = separable_lattice(1.0, 1.0, &b, 1).unwrap();
        assert_eq!(l.len(), 25);
        let l = separable_lattice(1.0, 2.0, &b, 1).unwrap();
        assert_eq!(l.len(), 15);
        assert_eq!(l.delta(), 1.0);
        let l = separable_lattice(
            FRAC_1_SQRT_2,
            FRAC_1_SQRT_2,
            &PhaseBox::symmetric(1, 2.0).unwrap(),
            1,
        )
        .unwrap();
        // enumerate k with |k/√2| ≤ 2 independently
        let per_axis = (-10..=10)
            .filter(|&k: &i32| (k as f64 / SQRT_2).abs() <= 2.0)
            .count();
        assert_eq!(per_axis, 5);
        assert_eq!(l.len(), per_axis * per_axis);
        let b4 = PhaseBox::symmetric(2, 1.0).unwrap();
        assert_eq!(separable_lattice(1.0, 1.0, &b4, 2).unwrap().len(), 81);
        let tiny = PhaseBox::new(vec![0.1, 0.1], vec![0.2, 0.2]).unwrap();
        assert!(separable_lattice(1.0, 1.0, &tiny, 1).unwrap().is_empty());
    }

    #[test]
    fn point_set_validation() {
        let pts = vec![PhasePoint::planar(0.0, 0.0), PhasePoint::planar(0.5, 0.0)];
        assert!(PointSet::new(1, pts.clone(), 1.0).is_err());
        assert!(PointSet::new(1, pts.clone(), 0.5).is_ok());
        let dup = vec![PhasePoint::planar(1.0, 1.0), PhasePoint::planar(1.0, 1.0)];
        assert!(PointSet::from_points(1, dup).is_err());
        assert!(PointSet::new(1, vec![PhasePoint::origin(2)], 1.0).is_err());
    }

    #[test]
    fn classification_examples() {
        let p = z2(3.0);
        assert_eq!(p.len(), 49);
        let c = classify_points(&p, &unit_disc(1.125), 1e-9).unwrap();
        let f: Vec<_> = c
            .enclosed()
            .iter()
            .map(|&i| p.points()[i].clone())
            .collect();
        // brute force: x² + p² ≤ 2.25
        let expect: Vec<_> = p
            .points()
            .iter()
            .filter(|z| z.norm().powi(2) <= 2.25)
            .cloned()
            .collect();
        assert_eq!(f, expect);
        assert_eq!(f.len(), 9);

        let c = classify_points(&p, &unit_disc(2.0), 1e-9).unwrap();
        assert_eq!(c.enclosed().len(), 13);

        let c = classify_points(&p, &unit_disc(0.5), 1e-9).unwrap();
        assert_eq!(c.interior.len(), 1);
        assert_eq!(p.points()[c.interior[0]], PhasePoint::planar(0.0, 0.0));
        let mut b: Vec<_> = c.boundary.iter().map(|&i| p.points()[i].clone()).collect();
        b.sort_by(|a, b| a.coords().partial_cmp(b.coords()).unwrap());
        assert_eq!(
            b,
            vec![
                PhasePoint::planar(-1.0, 0.0),
                PhasePoint::planar(0.0, -1.0),
                PhasePoint::planar(0.0, 1.0),
                PhasePoint::planar(1.0, 0.0)
            ]
        );
        assert_eq!(c.interior.len() + c.boundary.len() + c.exterior.len(), 49);
    }

    #[test]
    fn distance_examples() {
        let circle = unit_disc(0.5);
        let pr = circle.distance(&PhasePoint::planar(2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(pr.distance, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pr.point.coords()[0], 1.0, epsilon = 1e-14);

        let pr = circle.distance(&PhasePoint::planar(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(pr.distance, 1.0, epsilon = 1e-14);
        assert_eq!(pr.point, PhasePoint::planar(1.0, 0.0));

        let z = PhasePoint::planar(1.0, 1.0);
        let pr = circle.distance(&z).unwrap();
        assert_abs_diff_eq!(pr.distance, SQRT_2 - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            pr.distance,
            sampled_distance(&circle, &z, 1_000_000),
            epsilon = 1e-10
        );

        let ell = Ellipsoid::new(
            QuadraticHamiltonian::from_diagonal(&[4.0, 1.0]).unwrap(),
            0.5,
        )
        .unwrap();
        let z = PhasePoint::planar(1.0, 0.0);
        let pr = ell.distance(&z).unwrap();
        assert_abs_diff_eq!(pr.distance, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pr.point.coords()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            pr.distance,
            sampled_distance(&ell, &z, 1_000_000),
            epsilon = 1e-10
        );
        assert!((ell.value(&pr.point) - 0.5).abs() <= 1e-10 * 0.5);
    }

    #[test]
    fn centre_projects_onto_shortest_semi_axis() {
        // M = diag(1, 4): the short axis is the p axis
        let ell = Ellipsoid::new(
            QuadraticHamiltonian::from_diagonal(&[1.0, 4.0]).unwrap(),
            0.5,
        )
        .unwrap();
        let pr = ell.distance(&PhasePoint::planar(0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(pr.distance, (2.0 * 0.5 / 4.0_f64).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(pr.point.coords()[1].abs(), 0.5, epsilon = 1e-14);
        // interior point on the long axis: still the pole case
        let z = PhasePoint::planar(0.3, 0.0);
        let pr = ell.distance(&z).unwrap();
        assert_abs_diff_eq!(
            pr.distance,
            sampled_distance(&ell, &z, 1_000_000),
            epsilon = 1e-10
        );
    }

    #[test]
    fn distance_matches_sampling_for_rotated_ellipse() {
        let m = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let ell = Ellipsoid::new(QuadraticHamiltonian::new(m).unwrap(), 0.8).unwrap();
        for z in [(0.1, 0.2), (2.0, -1.0), (-0.4, 0.9), (0.0, 0.0), (3.0, 3.0)] {
            let z = PhasePoint::planar(z.0, z.1);
            let pr = ell.distance(&z).unwrap();
            assert_abs_diff_eq!(
                pr.distance,
                sampled_distance(&ell, &z, 400_000),
                epsilon = 1e-8
            );
            assert!((ell.value(&pr.point) - 0.8).abs() <= 1e-10 * 0.8);
        }
    }

    #[test]
    fn safe_epsilon_examples() {
        let p = z2(3.0);
        let circle = unit_disc(0.5);
        let eps = max_safe_epsilon(&p, &circle, 1e-9, 1.0).unwrap();
        let oracle = p
            .points()
            .iter()
            .filter(|z| (z.norm() - 1.0).abs() > 1e-12)
            .map(|z| (z.norm() - 1.0).abs())
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(eps, oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(eps, SQRT_2 - 1.0, epsilon = 1e-12);

        assert_eq!(
            max_safe_epsilon(&PointSet::empty(1), &circle, 1e-9, 1.0).unwrap(),
            1.0
        );
        let on = PointSet::from_points(1, vec![PhasePoint::planar(1.0, 0.0)]).unwrap();
        assert_eq!(max_safe_epsilon(&on, &circle, 1e-9, 1.0).unwrap(), 1.0);

        let near = points_within(&p, &circle, 1e-9, 0.5).unwrap();
        assert_eq!(near.len(), 4);
        assert!(near
            .iter()
            .all(|z| z.coords()[0].abs() == 1.0 && z.coords()[1].abs() == 1.0));
    }

    #[test]
    fn deformation_examples() {
        let p = z2(3.0);
        let disc = unit_disc(0.72);
        let d0 = deform_point_set(&p, &disc, 0.0, 1e-9).unwrap();
        assert_eq!(d0.points, p);

        let tiny = unit_disc(0.1);
        let dz = deform_point_set(&z2(3.0).clone(), &unit_disc(0.1), 1.3, 1e-9).unwrap();
        // only the origin is inside H < 0.1, and it is a fixed point
        assert_eq!(dz.moved.len(), 1);
        assert!(dz.points.set_eq(&p, 0.0));
        let off = PointSet::from_points(
            1,
            vec![PhasePoint::planar(1.0, 1.0), PhasePoint::planar(2.0, 0.0)],
        )
        .unwrap();
        let d = deform_point_set(&off, &tiny, 0.7, 1e-9).unwrap();
        assert!(d.moved.is_empty());
        assert_eq!(d.points.points(), off.points());

        let d = deform_point_set(&p, &disc, PI / 2.0, 1e-9).unwrap();
        assert_eq!(d.moved.len(), 5);
        assert!(d.points.set_eq(&p, 1e-12));
        for i in 0..p.len() {
            if !d.moved.contains(&i) {
                assert_eq!(d.points.points()[i], p.points()[i]);
            }
        }

        let d = deform_point_set(&p, &disc, PI / 4.0, 1e-9).unwrap();
        let i = p
            .points()
            .iter()
            .position(|z| *z == PhasePoint::planar(1.0, 0.0))
            .unwrap();
        let w = &d.points.points()[i];
        assert_abs_diff_eq!(w.coords()[0], FRAC_1_SQRT_2, epsilon = 1e-14);
        assert_abs_diff_eq!(w.coords()[1], -FRAC_1_SQRT_2, epsilon = 1e-14);
        let off_grid = d
            .moved
            .iter()
            .filter(|&&i| d.points.points()[i].coords()[0].fract().abs() > 1e-6)
            .count();
        assert_eq!(off_grid, 4);
        assert!(!d.has_collisions());
    }

    #[test]
    fn boundary_points_stay_on_sigma() {
        let p = z2(3.0);
        let disc = unit_disc(0.5);
        let c = classify_points(&p, &disc, 1e-9).unwrap();
        for t in [0.3, 1.7, -2.2] {
            let d = deform_point_set(&p, &disc, t, 1e-9).unwrap();
            for &i in &c.boundary {
                assert!((disc.value(&d.points.points()[i]) - 0.5).abs() <= 1e-9 * 0.5);
            }
        }
    }

    #[test]
    fn collisions_are_flagged() {
        // (0.5, 0) sits on Σ and rotates onto a fixed point just outside it
        let ell = unit_disc(0.125);
        let p = PointSet::from_points(
            1,
            vec![
                PhasePoint::planar(0.5, 0.0),
                PhasePoint::planar(0.0, -0.5 - 1e-10),
            ],
        )
        .unwrap();
        let d = deform_point_set(&p, &ell, PI / 2.0, 0.0).unwrap();
        assert_eq!(d.moved, vec![0]);
        assert_eq!(d.collisions, vec![(0, 1)]);
        assert!(d.has_collisions());
    }

    #[test]
    fn counting() {
        let p = z2(3.0);
        assert_eq!(count_in_ellipsoid(&p, &unit_disc(0.5)).unwrap(), 5);
        assert_eq!(count_in_ellipsoid(&p, &unit_disc(1.125)).unwrap(), 9);
        let gauss = p
            .points()
            .iter()
            .filter(|z| z.norm().powi(2) <= 4.0)
            .count();
        assert_eq!(count_in_ellipsoid(&p, &unit_disc(2.0)).unwrap(), gauss);
        assert_eq!(gauss, 13);
    }

    #[test]
    fn counting_matches_enclosed_on_rounded_shells() {
        let h = QuadraticHamiltonian::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]))
            .unwrap();
        let r = FRAC_1_SQRT_2;
        let p = separable_lattice(r, r, &PhaseBox::symmetric(1, 6.0).unwrap(), 1).unwrap();
        for e in [0.6, 1.0, 2.0, 5.0] {
            let ell = Ellipsoid::new(h.clone(), e).unwrap();
            let f = classify_points(&p, &ell, DEFAULT_BOUNDARY_TOL)
                .unwrap()
                .enclosed();
            assert_eq!(count_in_ellipsoid(&p, &ell).unwrap(), f.len(), "E = {e}");
        }
    }

    #[test]
    fn json_round_trip() {
        let p = separable_lattice(FRAC_1_SQRT_2, 0.3, &PhaseBox::symmetric(1, 1.0).unwrap(), 1)
            .unwrap();
        let text = p.to_json();
        assert!(text.contains("\"dim\": 1"));
        let back = PointSet::from_json(&text).unwrap();
        assert_eq!(back, p);
        let empty = PointSet::from_json(&PointSet::empty(1).to_json()).unwrap();
        assert!(empty.is_empty());
        assert!(PointSet::from_json("{\"dim\":1,\"points\":[],\"extra\":0}").is_err());
    }
}
