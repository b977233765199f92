//! Orthonormal frames, Haar-random subspaces and the canonical relation of
//! the d-plane transform.
//!
//! A d-dimensional subspace σ ⊂ R^n is carried as a [`Frame`]: an n×d matrix
//! with orthonormal columns ω_1, …, ω_d. The representation is not unique
//! (any d×d rotation of the columns spans the same σ); everything downstream
//! depends on σ only through its span.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dims, check_len, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Orthogonality tolerance applied when a frame or plane is constructed.
pub const FRAME_TOL: f64 = 1e-10;
/// Tolerance for algebraic identities (idempotence, Pythagoras, Haar QᵀQ = I).
pub const IDENTITY_TOL: f64 = 1e-12;
/// Tolerance for membership in the canonical relation.
pub const LAMBDA_TOL: f64 = 1e-9;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Largest entry of |MᵀM − I|.
pub fn gram_deviation(m: &Matrix) -> f64 {
    let gram = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// An orthonormal basis ω_1, …, ω_d of a subspace σ ∈ G_{d,n}.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    basis: Matrix,
}

impl Frame {
    /// Wraps an n×d matrix, checking 1 ≤ d < n, finiteness and orthonormality.
    pub fn new(basis: Matrix) -> Result<Self> {
        check_dims(basis.ncols(), basis.nrows())?;
        if !all_finite(&basis) {
            return Err(Error::NonFinite);
        }
        let dev = gram_deviation(&basis);
        if dev > FRAME_TOL {
            return Err(Error::NotOrthonormal(dev));
        }
        Ok(Self { basis })
    }

    /// Frame spanned by the given columns (each of length n).
    pub fn from_columns(columns: &[Vector]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidDimensions { d: 0, n: 0 });
        }
        Self::new(Matrix::from_columns(columns))
    }

    /// The subspace spanned by the first `d` standard basis vectors.
    pub fn coordinate(d: usize, n: usize) -> Result<Self> {
        check_dims(d, n)?;
        Ok(Self {
            basis: Matrix::identity(n, d),
        })
    }

    /// Caller guarantees orthonormal columns and 1 ≤ d < n.
    pub(crate) fn from_orthonormal(basis: Matrix) -> Self {
        debug_assert!(gram_deviation(&basis) <= FRAME_TOL);
        Self { basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn sub_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    /// ω_j as a contiguous slice.
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.ambient_dim();
        &self.basis.as_slice()[j * n..(j + 1) * n]
    }

    pub fn gram_deviation(&self) -> f64 {
        gram_deviation(&self.basis)
    }

    /// Coordinates (x·ω_1, …, x·ω_d).
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        (0..self.sub_dim()).map(|j| dot(x, self.column(j))).collect()
    }

    /// Writes π_σ x into `out` without dimension checks.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.sub_dim() {
            let w = self.column(j);
            let c = dot(x, w);
            for (o, wi) in out.iter_mut().zip(w) {
                *o += c * wi;
            }
        }
    }

    /// Writes x − π_σ x into `out` without dimension checks.
    pub fn complement_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        for j in 0..self.sub_dim() {
            let w = self.column(j);
            let c = dot(x, w);
            for (o, wi) in out.iter_mut().zip(w) {
                *o -= c * wi;
            }
        }
    }

    /// The orthogonal projection π_σ x.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        check_len(self.ambient_dim(), x.len())?;
        let mut out = Vector::zeros(x.len());
        self.project_into(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// The component x − π_σ x in σ^⊥.
    pub fn complement_part(&self, x: &Vector) -> Result<Vector> {
        check_len(self.ambient_dim(), x.len())?;
        let mut out = Vector::zeros(x.len());
        self.complement_into(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// The projection matrix Σ ω_j ω_jᵀ.
    pub fn projector(&self) -> Matrix {
        &self.basis * self.basis.transpose()
    }

    /// Same subspace, columns mixed by a d×d orthogonal matrix.
    pub fn with_rotated_columns(&self, rotation: &Matrix) -> Result<Self> {
        check_len(self.sub_dim(), rotation.nrows())?;
        check_len(self.sub_dim(), rotation.ncols())?;
        Self::new(&self.basis * rotation)
    }

    /// The rotated subspace k·σ for an n×n orthogonal k.
    pub fn rotated_by(&self, k: &Matrix) -> Result<Self> {
        check_len(self.ambient_dim(), k.nrows())?;
        check_len(self.ambient_dim(), k.ncols())?;
        Self::new(k * &self.basis)
    }

    /// Largest |ω_j·v|.
    pub fn max_overlap(&self, v: &[f64]) -> f64 {
        (0..self.sub_dim())
            .map(|j| dot(v, self.column(j)).abs())
            .fold(0.0, f64::max)
    }
}

/// Projection of x onto span(frame).
pub fn project(frame: &Frame, x: &Vector) -> Result<Vector> {
    frame.project(x)
}

/// An affine plane σ + x″ with x″ ∈ σ^⊥; a point of G(d,n).
#[derive(Clone, Debug, PartialEq)]
pub struct AffinePlane {
    frame: Frame,
    offset: Vector,
}

impl AffinePlane {
    pub fn new(frame: Frame, offset: Vector) -> Result<Self> {
        check_len(frame.ambient_dim(), offset.len())?;
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let residual = frame.max_overlap(offset.as_slice());
        if residual > FRAME_TOL * offset.norm().max(1.0) {
            return Err(Error::OffsetNotOrthogonal(residual));
        }
        Ok(Self { frame, offset })
    }

    /// The plane parallel to σ passing through `x`: (σ, x − π_σ x).
    pub fn through(frame: Frame, x: &Vector) -> Result<Self> {
        let offset = frame.complement_part(x)?;
        Ok(Self { frame, offset })
    }

    /// Skips the orthogonality check on the offset. Only membership checkers
    /// such as [`lambda_descriptions`] are meaningful on such planes.
    pub fn new_unchecked(frame: Frame, offset: Vector) -> Self {
        Self { frame, offset }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn offset(&self) -> &Vector {
        &self.offset
    }

    pub fn sub_dim(&self) -> usize {
        self.frame.sub_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.frame.ambient_dim()
    }

    /// The point x″ + Σ t_j ω_j of the plane.
    pub fn point(&self, t: &[f64]) -> Result<Vector> {
        check_len(self.sub_dim(), t.len())?;
        let mut p = self.offset.clone();
        for (j, tj) in t.iter().enumerate() {
            for (pi, wi) in p.iter_mut().zip(self.frame.column(j)) {
                *pi += tj * wi;
            }
        }
        Ok(p)
    }
}

/// Haar-distributed n×n orthogonal matrix.
///
/// Orthonormalizes an i.i.d. standard normal matrix by QR and flips columns
/// so that the triangular factor has a positive diagonal, which makes the
/// factorization unique and the law of Q exactly Haar.
pub fn haar_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("orthogonal group dimension must be >= 1".into()));
    }
    Ok(orthonormalize_gaussian(n, n, rng))
}

/// First `cols` columns of a Haar orthogonal n×n matrix. The n×cols Gaussian
/// block is drawn column-major, i.e. exactly the first draws of the square case.
fn orthonormalize_gaussian<R: Rng + ?Sized>(n: usize, cols: usize, rng: &mut R) -> Matrix {
    let g = Matrix::from_fn(n, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Haar-random σ ∈ G_{d,n}: the first d columns of a Haar orthogonal matrix.
pub fn sample_subspace<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Result<Frame> {
    check_dims(d, n)?;
    Ok(Frame::from_orthonormal(orthonormalize_gaussian(n, d, rng)))
}

/// Orthonormal basis (n×(n−1)) of ξ^⊥ from the Householder reflector that
/// exchanges e_n and ±ξ/|ξ|. Deterministic in ξ.
pub fn complement_basis(xi: &Vector) -> Result<Matrix> {
    let n = xi.len();
    if n < 2 {
        return Err(Error::InvalidParameter("complement basis needs n >= 2".into()));
    }
    let norm = xi.norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite);
    }
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let u = xi / norm;
    // v = e_n + sign(u_n) u avoids cancellation; H maps e_n to ∓u either way.
    let sign = if u[n - 1] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = u * sign;
    v[n - 1] += 1.0;
    let vv = v.dot(&v);
    let mut h = Matrix::identity(n, n);
    h -= (&v * v.transpose()) * (2.0 / vv);
    Ok(h.columns(0, n - 1).into_owned())
}

/// Haar-random d-frame inside the hyperplane ξ^⊥ (1 ≤ d ≤ n−1).
pub fn sample_subspace_in_complement<R: Rng + ?Sized>(
    d: usize,
    n: usize,
    xi: &Vector,
    rng: &mut R,
) -> Result<Frame> {
    check_dims(d, n)?;
    check_len(n, xi.len())?;
    let basis = complement_basis(xi)?;
    let inner = orthonormalize_gaussian(n - 1, d, rng);
    Ok(Frame::from_orthonormal(basis * inner))
}

/// A point of the canonical relation Λ_d ⊂ T*G(d,n) × T*R^n.
///
/// `covector` holds the fibre coordinates (η_1, …, η_d, ξ) over the plane,
/// each a vector of R^n lying in σ^⊥.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalRelationPoint {
    pub plane: AffinePlane,
    pub covector: Vec<Vector>,
    pub base_point: Vector,
    pub base_covector: Vector,
}

/// ((σ, y − π_σ y), η(y·ω_1, …, y·ω_d, 1); y, η) for η ∈ σ^⊥ \ {0}.
pub fn canonical_relation_point(
    frame: &Frame,
    y: &Vector,
    eta: &Vector,
) -> Result<CanonicalRelationPoint> {
    let n = frame.ambient_dim();
    check_len(n, y.len())?;
    check_len(n, eta.len())?;
    let eta_norm = eta.norm();
    if eta_norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    let residual = frame.max_overlap(eta.as_slice());
    if residual > FRAME_TOL * eta_norm {
        return Err(Error::CovectorNotOrthogonal(residual));
    }
    let plane = AffinePlane::through(frame.clone(), y)?;
    let mut covector: Vec<Vector> = frame
        .coordinates(y.as_slice())
        .into_iter()
        .map(|c| eta * c)
        .collect();
    covector.push(eta.clone());
    Ok(CanonicalRelationPoint {
        plane,
        covector,
        base_point: y.clone(),
        base_covector: eta.clone(),
    })
}

/// Which of the three set descriptions of Λ_d a point satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LambdaMembership {
    /// Parametrized by (σ, y, η) with η ∈ σ^⊥ \ {0}.
    pub by_plane: bool,
    /// Parametrized by (y, η) ∈ T*R^n \ 0 and σ ∈ G_{d,n} ∩ η^⊥.
    pub by_covector: bool,
    /// Parametrized by (σ, x″) ∈ G(d,n), t ∈ R^d, ξ ∈ σ^⊥ \ {0}.
    pub by_coordinates: bool,
}

impl LambdaMembership {
    pub fn all(&self) -> bool {
        self.by_plane && self.by_covector && self.by_coordinates
    }

    pub fn agree(&self) -> bool {
        self.by_plane == self.by_covector && self.by_covector == self.by_coordinates
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn scaled_copy(v: &Vector, c: f64) -> Vec<f64> {
    v.iter().map(|x| x * c).collect()
}

/// Evaluates each description of Λ_d independently on `point`.
pub fn lambda_descriptions(point: &CanonicalRelationPoint) -> LambdaMembership {
    let frame = point.plane.frame();
    let n = frame.ambient_dim();
    let d = frame.sub_dim();
    let y = &point.base_point;
    let eta = &point.base_covector;
    let offset = point.plane.offset();

    let shapes_ok = y.len() == n
        && eta.len() == n
        && offset.len() == n
        && point.covector.len() == d + 1
        && point.covector.iter().all(|c| c.len() == n);
    if !shapes_ok || frame.gram_deviation() > LAMBDA_TOL {
        return LambdaMembership {
            by_plane: false,
            by_covector: false,
            by_coordinates: false,
        };
    }

    let tol = LAMBDA_TOL * (1.0 + y.norm()) * (1.0 + eta.norm());
    let in_perp = |v: &Vector| frame.max_overlap(v.as_slice()) <= tol;
    // Membership in T*G(d,n): x″, η_1, …, η_d, ξ all in σ^⊥.
    let cotangent_ok = in_perp(offset) && point.covector.iter().all(in_perp);

    let coords = frame.coordinates(y.as_slice());
    let mut expected_offset = vec![0.0; n];
    frame.complement_into(y.as_slice(), &mut expected_offset);
    let fibre_matches = |scale: &Vector, t: &[f64]| {
        t.iter()
            .enumerate()
            .all(|(j, tj)| close(point.covector[j].as_slice(), &scaled_copy(scale, *tj), tol))
            && close(point.covector[d].as_slice(), scale.as_slice(), tol)
    };

    // η ∈ σ^⊥ \ {0}; plane = (σ, y − π_σ y); fibre = η(y·ω, 1).
    let by_plane = cotangent_ok
        && eta.norm() > 0.0
        && in_perp(eta)
        && close(offset.as_slice(), &expected_offset, tol)
        && fibre_matches(eta, &coords);

    // (y, η) ≠ 0 first, then σ ⊂ η^⊥ checked column by column.
    let sigma_in_eta_perp = (0..d).all(|j| dot(frame.column(j), eta.as_slice()).abs() <= tol);
    let by_covector = cotangent_ok
        && eta.norm() > 0.0
        && sigma_in_eta_perp
        && close(offset.as_slice(), &expected_offset, tol)
        && fibre_matches(eta, &coords);

    // y = x″ + Σ t_j ω_j with x″ ∈ σ^⊥, fibre ξ(t, 1), base covector ξ.
    let xi = &point.covector[d];
    let t: Vec<f64> = (0..d)
        .map(|j| {
            let w = frame.column(j);
            dot(y.as_slice(), w) - dot(offset.as_slice(), w)
        })
        .collect();
    let reconstructed = match point.plane.point(&t) {
        Ok(p) => p,
        Err(_) => return LambdaMembership { by_plane, by_covector, by_coordinates: false },
    };
    let by_coordinates = cotangent_ok
        && xi.norm() > 0.0
        && close(reconstructed.as_slice(), y.as_slice(), tol)
        && close(eta.as_slice(), xi.as_slice(), tol)
        && fibre_matches(xi, &t);

    LambdaMembership {
        by_plane,
        by_covector,
        by_coordinates,
    }
}

/// True iff the point satisfies all three descriptions of Λ_d within 1e−9.
pub fn check_lambda_descriptions(point: &CanonicalRelationPoint) -> bool {
    lambda_descriptions(point).all()
}
