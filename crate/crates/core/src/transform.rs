//! The forward d-plane transform, its adjoint as a Haar average over the
//! Grassmannian, and the normal operator `R*R`.
//!
//! A plane is addressed as (σ, x″) with σ given by a [`Frame`] and x″ ∈ σ^⊥.
//! The adjoint is
//!
//! ```text
//! R*φ(x) = vol(G_{d,n}) · E_σ[ φ(σ, x − π_σ x) ],   σ Haar-distributed,
//! ```
//!
//! estimated by Monte Carlo.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;

use crate::constants::grassmannian_volume;
use crate::error::{check_dims, check_len, Error, Result};
use crate::geometry::{complement_basis, dot, haar_orthogonal, sample_subspace, AffinePlane, Frame, Matrix, Vector};
use crate::grid::{GridField, GridSpec};
use crate::mc::{check_samples, chunked_draws, chunked_stats, McEstimate, RunningStats, Substreams};
use crate::phantoms::GaussianMixture;

/// Where a sinogram's values come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Grid,
}

/// A function φ(σ, x″) on the affine Grassmannian G(d,n).
///
/// Implementations must be bounded and continuous along sampled planes;
/// that is the only regularity the Monte Carlo adjoint relies on.
pub trait SinogramFunction: Sync {
    fn sub_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn provenance(&self) -> Provenance;

    /// φ(σ, x″). `offset` must lie in σ^⊥; this is not checked.
    fn value(&self, frame: &Frame, offset: &[f64]) -> f64;

    /// φ on the plane through `x` parallel to σ, i.e. φ(σ, x − π_σ x).
    fn value_through(&self, frame: &Frame, x: &[f64]) -> f64 {
        let mut offset = vec![0.0; x.len()];
        frame.complement_into(x, &mut offset);
        self.value(frame, &offset)
    }

    /// Σ_i φ(σ_i, x − π_{σ_i} x) over a pool. Dimensions are not checked.
    fn pool_sum(&self, pool: PoolView<'_>, x: &[f64]) -> f64 {
        pool.frames.iter().map(|frame| self.value_through(frame, x)).sum()
    }

    /// φ at a validated plane.
    fn eval(&self, plane: &AffinePlane) -> Result<f64> {
        check_len(self.ambient_dim(), plane.ambient_dim())?;
        check_len(self.sub_dim(), plane.sub_dim())?;
        Ok(self.value(plane.frame(), plane.offset().as_slice()))
    }
}

fn check_sinogram(phi: &dyn SinogramFunction, x_len: usize) -> Result<()> {
    check_dims(phi.sub_dim(), phi.ambient_dim())?;
    check_len(phi.ambient_dim(), x_len)
}

/// R_d f for a Gaussian mixture, exact.
#[derive(Clone, Debug)]
pub struct AnalyticSinogram {
    source: GaussianMixture,
    d: usize,
    // Per term: (a(2πs²)^{d/2}, 1/(2s²)).
    coefs: Vec<(f64, f64)>,
}

impl AnalyticSinogram {
    pub fn source(&self) -> &GaussianMixture {
        &self.source
    }

    /// Σ c·exp(−|y_⊥ − μ_⊥|²/(2s²)) for any point y on the plane.
    fn at_point(&self, frame: &Frame, y: &[f64]) -> f64 {
        let n = y.len();
        let mut diff = [0.0f64; 16];
        let mut heap;
        let diff: &mut [f64] = if n <= 16 {
            &mut diff[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut total = 0.0;
        for (term, &(coef, inv)) in self.source.terms().iter().zip(&self.coefs) {
            for ((o, yi), mi) in diff.iter_mut().zip(y).zip(term.center.iter()) {
                *o = yi - mi;
            }
            let mut r2 = dot(diff, diff);
            for j in 0..self.d {
                let c = dot(diff, frame.column(j));
                r2 -= c * c;
            }
            total += coef * (-r2.max(0.0) * inv).exp();
        }
        total
    }
}

impl SinogramFunction for AnalyticSinogram {
    fn sub_dim(&self) -> usize {
        self.d
    }

    fn ambient_dim(&self) -> usize {
        self.source.ambient_dim()
    }

    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }

    fn value(&self, frame: &Frame, offset: &[f64]) -> f64 {
        self.at_point(frame, offset)
    }

    // x itself lies on the plane through x, so no projection is needed.
    fn value_through(&self, frame: &Frame, x: &[f64]) -> f64 {
        self.at_point(frame, x)
    }

    // |y_⊥|² from whichever of σ, σ^⊥ has the smaller basis.
    fn pool_sum(&self, pool: PoolView<'_>, x: &[f64]) -> f64 {
        let n = x.len();
        let d = self.d;
        let use_normals = n - d < d;
        let (columns, width) = if use_normals { (pool.normals, n - d) } else { (pool.span, d) };
        let mut total = 0.0;
        for (term, &(coef, inv)) in self.source.terms().iter().zip(&self.coefs) {
            let y: Vec<f64> = x.iter().zip(term.center.iter()).map(|(a, b)| a - b).collect();
            let y2 = dot(&y, &y);
            let sum: f64 = match (n, width) {
                (2, 1) => pool_sum_fixed::<2, 1>(&y, y2, columns, inv, use_normals),
                (3, 1) => pool_sum_fixed::<3, 1>(&y, y2, columns, inv, use_normals),
                (4, 1) => pool_sum_fixed::<4, 1>(&y, y2, columns, inv, use_normals),
                (4, 2) => pool_sum_fixed::<4, 2>(&y, y2, columns, inv, use_normals),
                _ => columns
                    .chunks_exact(n * width)
                    .map(|block| {
                        let s: f64 = block.chunks_exact(n).map(|w| dot(&y, w).powi(2)).sum();
                        let r2 = if use_normals { s } else { (y2 - s).max(0.0) };
                        (-r2 * inv).exp()
                    })
                    .sum(),
            };
            total += coef * sum;
        }
        total
    }
}

fn pool_sum_fixed<const N: usize, const W: usize>(y: &[f64], y2: f64, columns: &[f64], inv: f64, normals: bool) -> f64 {
    let y: [f64; N] = y.try_into().expect("length matches");
    let mut total = 0.0;
    for block in columns.chunks_exact(N * W) {
        let mut s = 0.0;
        for w in 0..W {
            let mut c = 0.0;
            for a in 0..N {
                c += y[a] * block[w * N + a];
            }
            s += c * c;
        }
        let r2 = if normals { s } else { (y2 - s).max(0.0) };
        total += (-r2 * inv).exp();
    }
    total
}

/// The exact transform of a Gaussian mixture, as a sinogram.
pub fn forward_analytic(f: &GaussianMixture, d: usize) -> Result<AnalyticSinogram> {
    check_dims(d, f.ambient_dim())?;
    let coefs = f
        .terms()
        .iter()
        .map(|t| (t.mass(d), 1.0 / (2.0 * t.width * t.width)))
        .collect();
    Ok(AnalyticSinogram {
        source: f.clone(),
        d,
        coefs,
    })
}

/// φ ≡ c.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantSinogram {
    d: usize,
    n: usize,
    value: f64,
}

impl ConstantSinogram {
    pub fn new(d: usize, n: usize, value: f64) -> Result<Self> {
        check_dims(d, n)?;
        if !value.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self { d, n, value })
    }
}

impl SinogramFunction for ConstantSinogram {
    fn sub_dim(&self) -> usize {
        self.d
    }

    fn ambient_dim(&self) -> usize {
        self.n
    }

    fn provenance(&self) -> Provenance {
        Provenance::Analytic
    }

    fn value(&self, _: &Frame, _: &[f64]) -> f64 {
        self.value
    }

    fn value_through(&self, _: &Frame, _: &[f64]) -> f64 {
        self.value
    }
}

/// ∫ over the patch {Σ t_j ω_j + x″ : |t_j| ≤ radius} of the multilinear
/// interpolant of `field`, by the d-dimensional trapezoid rule with spacing
/// `step`. Samples outside the grid count as zero.
pub fn forward_grid(field: &GridField, plane: &AffinePlane, step: f64, radius: f64) -> Result<f64> {
    check_len(field.ambient_dim(), plane.ambient_dim())?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    Ok(plane_patch_integral(field, plane.frame(), plane.offset().as_slice(), step, radius))
}

fn plane_patch_integral(field: &GridField, frame: &Frame, offset: &[f64], step: f64, radius: f64) -> f64 {
    let d = frame.sub_dim();
    let n = offset.len();
    let half = (radius / step + 1e-9).floor() as i64;
    let side = (2 * half + 1) as usize;
    let endpoint = if ((half as f64) * step - radius).abs() <= 1e-9 * radius { 0.5 } else { 1.0 };
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0; n];
    let mut total = 0.0;
    for _ in 0..side.pow(d as u32) {
        let mut weight = 1.0;
        point.copy_from_slice(offset);
        for (j, &k) in idx.iter().enumerate() {
            let t = (k as i64 - half) as f64 * step;
            if k == 0 || k == side - 1 {
                weight *= endpoint;
            }
            for (p, w) in point.iter_mut().zip(frame.column(j)) {
                *p += t * w;
            }
        }
        total += weight * field.interpolate(&point);
        for k in idx.iter_mut() {
            *k += 1;
            if *k < side {
                break;
            }
            *k = 0;
        }
    }
    total * step.powi(d as i32)
}

/// A sampled field seen through [`forward_grid`].
#[derive(Clone, Debug)]
pub struct GridSinogram {
    field: GridField,
    d: usize,
    step: f64,
    radius: f64,
}

impl GridSinogram {
    pub fn new(field: GridField, d: usize, step: f64, radius: f64) -> Result<Self> {
        check_dims(d, field.ambient_dim())?;
        if !(step > 0.0 && radius > 0.0) {
            return Err(Error::InvalidParameter("step and radius must be positive".into()));
        }
        Ok(Self {
            field,
            d,
            step,
            radius,
        })
    }
}

impl SinogramFunction for GridSinogram {
    fn sub_dim(&self) -> usize {
        self.d
    }

    fn ambient_dim(&self) -> usize {
        self.field.ambient_dim()
    }

    fn provenance(&self) -> Provenance {
        Provenance::Grid
    }

    fn value(&self, frame: &Frame, offset: &[f64]) -> f64 {
        plane_patch_integral(&self.field, frame, offset, self.step, self.radius)
    }
}

/// R*φ(x) = vol(G_{d,n}) · (1/M) Σ φ(σ_i, x − π_{σ_i} x) over `samples`
/// Haar-random subspaces.
pub fn backproject_mc(
    phi: &dyn SinogramFunction,
    x: &Vector,
    samples: usize,
    streams: &Substreams,
) -> Result<McEstimate> {
    check_sinogram(phi, x.len())?;
    check_samples(samples)?;
    let (d, n) = (phi.sub_dim(), phi.ambient_dim());
    let vol = grassmannian_volume(d, n)?;
    let xs = x.as_slice();
    let stats = chunked_stats(samples, streams, |rng| {
        let frame = sample_subspace(d, n, rng).expect("dimensions checked");
        phi.value_through(&frame, xs)
    });
    Ok(McEstimate::from_stats(&stats, vol, streams.seed()))
}

/// R*R f(x) with no appeal to any claimed symbol.
pub fn normal_operator(
    f: &GaussianMixture,
    d: usize,
    x: &Vector,
    samples: usize,
    streams: &Substreams,
) -> Result<McEstimate> {
    let phi = forward_analytic(f, d)?;
    backproject_mc(&phi, x, samples, streams)
}

/// A fixed set of Haar-random subspaces shared by many backprojections.
#[derive(Clone, Debug)]
pub struct HaarPool {
    d: usize,
    n: usize,
    frames: Vec<Frame>,
    // Per sample, column-major: ω_1..ω_d, then a basis of σ^⊥.
    span: Vec<f64>,
    normals: Vec<f64>,
    seed: u64,
}

/// A contiguous slice of a [`HaarPool`].
#[derive(Clone, Copy, Debug)]
pub struct PoolView<'a> {
    pub frames: &'a [Frame],
    /// ω_1..ω_d of each sample, column-major.
    pub span: &'a [f64],
    /// Basis of σ^⊥ of each sample, column-major.
    pub normals: &'a [f64],
}

impl<'a> PoolView<'a> {
    /// Consecutive views of at most `size` samples.
    pub fn chunks(self, size: usize) -> impl Iterator<Item = PoolView<'a>> {
        let count = self.frames.len();
        let (a, b) = (self.span.len() / count.max(1), self.normals.len() / count.max(1));
        (0..count.div_ceil(size)).map(move |c| {
            let (lo, hi) = (c * size, ((c + 1) * size).min(count));
            PoolView {
                frames: &self.frames[lo..hi],
                span: &self.span[lo * a..hi * a],
                normals: &self.normals[lo * b..hi * b],
            }
        })
    }
}

impl HaarPool {
    /// `samples` Haar rotations; σ_i is spanned by the first d columns of the
    /// i-th, σ_i^⊥ by the rest.
    pub fn sample(d: usize, n: usize, samples: usize, streams: &Substreams) -> Result<Self> {
        check_dims(d, n)?;
        check_samples(samples)?;
        let rotations = chunked_draws(samples, streams, |rng| haar_orthogonal(n, rng).expect("n >= 2"));
        let split = n * d;
        let mut span = Vec::with_capacity(samples * split);
        let mut normals = Vec::with_capacity(samples * (n * n - split));
        let frames = rotations
            .iter()
            .map(|q| {
                span.extend_from_slice(&q.as_slice()[..split]);
                normals.extend_from_slice(&q.as_slice()[split..]);
                Frame::from_orthonormal(q.columns(0, d).into_owned())
            })
            .collect();
        Ok(Self {
            d,
            n,
            frames,
            span,
            normals,
            seed: streams.seed(),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn view(&self) -> PoolView<'_> {
        PoolView {
            frames: &self.frames,
            span: &self.span,
            normals: &self.normals,
        }
    }

    pub fn sub_dim(&self) -> usize {
        self.d
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn check(&self, phi: &dyn SinogramFunction, x_len: usize) -> Result<()> {
        check_len(self.n, phi.ambient_dim())?;
        check_len(self.d, phi.sub_dim())?;
        check_len(self.n, x_len)
    }

    /// R*φ(x) over the pool, with its standard error.
    pub fn backproject(&self, phi: &dyn SinogramFunction, x: &[f64]) -> Result<McEstimate> {
        self.check(phi, x.len())?;
        let mut stats = RunningStats::default();
        for frame in &self.frames {
            stats.push(phi.value_through(frame, x));
        }
        Ok(McEstimate::from_stats(&stats, grassmannian_volume(self.d, self.n)?, self.seed))
    }

    /// R*φ(x) over the pool, without uncertainty; the fast path for grids.
    pub fn backproject_value(&self, phi: &dyn SinogramFunction, x: &[f64]) -> Result<f64> {
        self.check(phi, x.len())?;
        Ok(grassmannian_volume(self.d, self.n)? * phi.pool_sum(self.view(), x) / self.len() as f64)
    }
}

const POINT_TILE: usize = 64;
const POOL_BLOCK: usize = 512;

/// How Monte Carlo noise is distributed across grid points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PoolMode {
    /// One pool of subspaces for every point: errors are smooth in x.
    #[default]
    Shared,
    /// A fresh substream per point: errors are independent across points.
    Independent,
}

/// R*φ sampled on a grid.
pub fn backproject_grid(
    phi: &dyn SinogramFunction,
    spec: &GridSpec,
    samples: usize,
    streams: &Substreams,
    mode: PoolMode,
) -> Result<GridField> {
    check_sinogram(phi, spec.ambient_dim())?;
    check_samples(samples)?;
    let (d, n) = (phi.sub_dim(), phi.ambient_dim());
    let vol = grassmannian_volume(d, n)?;
    match mode {
        PoolMode::Shared => {
            let pool = HaarPool::sample(d, n, samples, &streams.derive("pool"))?;
            let scale = vol / pool.len() as f64;
            // Tiles of points against cache-sized blocks of the pool.
            let n = spec.ambient_dim();
            let values = (0..spec.len().div_ceil(POINT_TILE))
                .into_par_iter()
                .flat_map_iter(|t| {
                    let (lo, hi) = (t * POINT_TILE, ((t + 1) * POINT_TILE).min(spec.len()));
                    let mut points = vec![0.0; (hi - lo) * n];
                    for (i, p) in points.chunks_exact_mut(n).enumerate() {
                        spec.point_into(lo + i, p);
                    }
                    let mut acc = vec![0.0; hi - lo];
                    for block in pool.view().chunks(POOL_BLOCK) {
                        for (a, p) in acc.iter_mut().zip(points.chunks_exact(n)) {
                            *a += phi.pool_sum(block, p);
                        }
                    }
                    acc.into_iter().map(move |a| a * scale)
                })
                .collect();
            GridField::new(spec.clone(), values)
        }
        PoolMode::Independent => {
            let points = streams.derive("points");
            let values = (0..spec.len())
                .into_par_iter()
                .map(|i| {
                    let x = spec.point(i);
                    backproject_mc(phi, &x, samples, &points.derive_index(i as u64)).map(|e| e.value)
                })
                .collect::<Result<Vec<_>>>()?;
            GridField::new(spec.clone(), values)
        }
    }
}

/// Deterministic R*φ(x) for (d,n) ∈ {(1,2), (1,3), (2,3)}.
///
/// (1,2): `points` equispaced angles in [0, π). n = 3: a midpoint product
/// grid in (cos θ, ϕ) over the sphere with about `points` nodes, lines along
/// the node direction (d = 1) or planes normal to it (d = 2).
pub fn angular_backprojection(phi: &dyn SinogramFunction, x: &Vector, points: usize) -> Result<f64> {
    check_sinogram(phi, x.len())?;
    let (d, n) = (phi.sub_dim(), phi.ambient_dim());
    if points < 4 {
        return Err(Error::TooFewSamples(points));
    }
    let xs = x.as_slice();
    let mean = match (d, n) {
        (1, 2) => {
            let sum: f64 = (0..points)
                .into_par_iter()
                .map(|k| {
                    let theta = PI * k as f64 / points as f64;
                    let frame = Frame::from_orthonormal(Matrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]));
                    phi.value_through(&frame, xs)
                })
                .collect::<Vec<_>>()
                .iter()
                .sum();
            sum / points as f64
        }
        (_, 3) => {
            let rings = ((points as f64 / 2.0).sqrt().ceil() as usize).max(2);
            let sectors = 2 * rings;
            let sum: f64 = (0..rings)
                .into_par_iter()
                .map(|i| {
                    let z = -1.0 + (2.0 * i as f64 + 1.0) / rings as f64;
                    let rho = (1.0 - z * z).sqrt();
                    let mut ring = 0.0;
                    for k in 0..sectors {
                        let az = 2.0 * PI * (k as f64 + 0.5) / sectors as f64;
                        let u = Vector::from_column_slice(&[rho * az.cos(), rho * az.sin(), z]);
                        let basis = if d == 1 {
                            Matrix::from_column_slice(3, 1, u.as_slice())
                        } else {
                            complement_basis(&u).expect("unit vector")
                        };
                        ring += phi.value_through(&Frame::from_orthonormal(basis), xs);
                    }
                    ring
                })
                .collect::<Vec<_>>()
                .iter()
                .sum();
            sum / (rings * sectors) as f64
        }
        _ => {
            return Err(Error::InvalidParameter(format!(
                "angular quadrature is available for (1,2), (1,3), (2,3), not ({d},{n})"
            )))
        }
    };
    Ok(grassmannian_volume(d, n)? * mean)
}

/// Quadrature and sampling budget for [`adjointness_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjointnessConfig {
    /// Haar samples for the outer integral over G_{d,n}.
    pub haar_samples: usize,
    /// Backprojection samples at each x-quadrature node.
    pub samples_per_point: usize,
    /// Trapezoid nodes per axis, both for σ^⊥ and for the x-box.
    pub points_per_axis: usize,
    /// Box half-width; `None` means 8·(largest width) + (largest |center|).
    pub half_width: Option<f64>,
}

impl AdjointnessConfig {
    /// 10^5 Haar samples, 64 nodes per axis and about 10^6 backprojection
    /// draws spread over the x-box.
    pub fn standard(n: usize) -> Self {
        let nodes = 64usize.pow(n as u32);
        Self {
            haar_samples: 100_000,
            samples_per_point: (1_000_000 / nodes).max(2),
            points_per_axis: 64,
            half_width: None,
        }
    }
}

/// The two sides of ⟨R_d f, φ⟩_{G(d,n)} = ⟨f, R_d*φ⟩_{R^n}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjointnessReport {
    /// Outer Haar Monte Carlo, inner trapezoid over σ^⊥.
    pub plane_side: McEstimate,
    /// Trapezoid over the x-box, Monte Carlo backprojection at each node.
    pub point_side: McEstimate,
    pub half_width: f64,
    /// Largest share of either quadrature carried by its outermost layer.
    pub boundary_fraction: f64,
}

impl AdjointnessReport {
    pub fn discrepancy(&self) -> f64 {
        self.plane_side.discrepancy(&self.point_side)
    }

    pub fn agrees(&self, sigmas: f64) -> bool {
        self.discrepancy() <= sigmas
    }
}

/// Maximum boundary share allowed before the box is declared too small.
pub const BOUNDARY_TOL: f64 = 1e-6;

fn trapezoid_nodes(points: usize, half_width: f64) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 * half_width / (points - 1) as f64;
    let nodes = (0..points).map(|k| -half_width + k as f64 * h).collect();
    let weights = (0..points)
        .map(|k| if k == 0 || k == points - 1 { 0.5 * h } else { h })
        .collect();
    (nodes, weights)
}

fn store_max(cell: &AtomicU64, value: f64) {
    // Non-negative floats order like their bit patterns.
    cell.fetch_max(value.max(0.0).to_bits(), Ordering::Relaxed);
}

fn boundary_share(boundary: f64, total: f64) -> f64 {
    if total > 0.0 {
        boundary / total
    } else {
        0.0
    }
}

/// Both sides of the adjoint pairing for a Gaussian mixture f and a sinogram φ.
pub fn adjointness_check(
    f: &GaussianMixture,
    phi: &dyn SinogramFunction,
    config: &AdjointnessConfig,
    streams: &Substreams,
) -> Result<AdjointnessReport> {
    check_sinogram(phi, f.ambient_dim())?;
    check_samples(config.haar_samples)?;
    check_samples(config.samples_per_point)?;
    if config.points_per_axis < 8 {
        return Err(Error::InvalidParameter("need at least 8 quadrature nodes per axis".into()));
    }
    let (d, n) = (phi.sub_dim(), phi.ambient_dim());
    let vol = grassmannian_volume(d, n)?;
    let half_width = config
        .half_width
        .unwrap_or(8.0 * f.max_width() + f.max_center_norm());
    if !(half_width > 0.0) {
        return Err(Error::InvalidParameter("box half-width must be positive".into()));
    }
    let rf = forward_analytic(f, d)?;
    let (nodes, weights) = trapezoid_nodes(config.points_per_axis, half_width);
    let last = nodes.len() - 1;
    let worst = AtomicU64::new(0);

    // ⟨R f, φ⟩ = vol · E_σ ∫_{σ^⊥} R f(σ, x″) φ(σ, x″) dx″.
    let k = n - d;
    let inner_count = nodes.len().pow(k as u32);
    let plane_stats = chunked_stats(config.haar_samples, &streams.derive("planes"), |rng| {
        let q = haar_orthogonal(n, rng).expect("n >= 2");
        let frame = Frame::from_orthonormal(q.columns(0, d).into_owned());
        let normals = q.columns(d, k).into_owned();
        let mut idx = vec![0usize; k];
        let mut offset = vec![0.0; n];
        let (mut total, mut abs_total, mut edge) = (0.0, 0.0, 0.0);
        for _ in 0..inner_count {
            offset.iter_mut().for_each(|o| *o = 0.0);
            let mut w = 1.0;
            let mut on_edge = false;
            for (j, &i) in idx.iter().enumerate() {
                w *= weights[i];
                on_edge |= i == 0 || i == last;
                let t = nodes[i];
                for (o, v) in offset.iter_mut().zip(normals.column(j).iter()) {
                    *o += t * v;
                }
            }
            let term = w * rf.value(&frame, &offset) * phi.value(&frame, &offset);
            total += term;
            abs_total += term.abs();
            if on_edge {
                edge += term.abs();
            }
            for i in idx.iter_mut() {
                *i += 1;
                if *i < nodes.len() {
                    break;
                }
                *i = 0;
            }
        }
        store_max(&worst, boundary_share(edge, abs_total));
        total
    });
    let plane_side = McEstimate::from_stats(&plane_stats, vol, streams.seed());

    // ⟨f, R*φ⟩ = ∫_box f(x) R*φ(x) dx.
    let box_count = nodes.len().pow(n as u32);
    let point_streams = streams.derive("points");
    let terms = (0..box_count)
        .into_par_iter()
        .map(|flat| {
            let mut rest = flat;
            let mut x = Vector::zeros(n);
            let mut w = 1.0;
            let mut on_edge = false;
            for axis in (0..n).rev() {
                let i = rest % nodes.len();
                rest /= nodes.len();
                x[axis] = nodes[i];
                w *= weights[i];
                on_edge |= i == 0 || i == last;
            }
            let fx = f.value(x.as_slice());
            let est = backproject_mc(phi, &x, config.samples_per_point, &point_streams.derive_index(flat as u64))?;
            Ok((w * fx * est.value, (w * fx * est.std_error).powi(2), on_edge))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut value, mut var, mut abs_total, mut edge) = (0.0, 0.0, 0.0, 0.0);
    for &(v, s2, on_edge) in &terms {
        value += v;
        var += s2;
        abs_total += v.abs();
        if on_edge {
            edge += v.abs();
        }
    }
    store_max(&worst, boundary_share(edge, abs_total));
    let point_side = McEstimate {
        value,
        std_error: var.sqrt(),
        samples: (box_count * config.samples_per_point) as u64,
        seed: streams.seed(),
    };

    let boundary_fraction = f64::from_bits(worst.load(Ordering::Relaxed));
    if boundary_fraction > BOUNDARY_TOL {
        return Err(Error::BoxTooSmall {
            fraction: boundary_fraction,
        });
    }
    Ok(AdjointnessReport {
        plane_side,
        point_side,
        half_width,
        boundary_fraction,
    })
}

/// A random rotation applied to a mixture: f ∘ K⁻¹.
pub fn rotate_mixture(f: &GaussianMixture, k: &Matrix) -> Result<GaussianMixture> {
    check_len(f.ambient_dim(), k.nrows())?;
    let terms = f
        .terms()
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.center = k * &t.center;
            t
        })
        .collect();
    GaussianMixture::new(terms)
}

/// Draws a Haar rotation (determinant +1) of R^n.
pub fn random_rotation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Matrix> {
    let mut q = haar_orthogonal(n, rng)?;
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    Ok(q)
}
