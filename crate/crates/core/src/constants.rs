//! Closed-form constants: Γ, sphere and rotation-group volumes, the volume
//! of the Grassmannian, and the integer bookkeeping of the normal operator
//! as a composition of Fourier integral operators.

use std::f64::consts::PI;

use num_rational::Rational64;

use crate::error::{check_dims, Error, Result};

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Γ(x) for x > 0.
///
/// Integers and half-integers use the exact recursion from Γ(1) and Γ(1/2);
/// other arguments go through the Lanczos evaluation in `statrs`.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma needs x > 0, got {x}")));
    }
    let twice = 2.0 * x;
    if twice.fract() == 0.0 && twice <= 340.0 {
        return Ok(gamma_half_integer(twice as u32));
    }
    Ok(statrs::function::gamma::gamma(x))
}

/// Γ(m/2) for m ≥ 1.
fn gamma_half_integer(m: u32) -> f64 {
    let (mut acc, mut k) = if m % 2 == 0 { (1.0, 2) } else { (SQRT_PI, 1) };
    while k < m {
        acc *= f64::from(k) / 2.0;
        k += 2;
    }
    acc
}

/// Surface measure of the unit sphere S^k ⊂ R^{k+1}: 2π^{(k+1)/2} / Γ((k+1)/2).
pub fn sphere_volume(k: usize) -> f64 {
    let half = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(half) / gamma_half_integer(k as u32 + 1)
}

/// Volume of SO(n) for the bi-invariant metric induced by the Frobenius
/// embedding: ∏_{k=1}^{n−1} 2^{k/2} vol(S^k).
pub fn so_volume(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("SO(0) is undefined".into()));
    }
    Ok((1..n)
        .map(|k| 2f64.powf(k as f64 / 2.0) * sphere_volume(k))
        .product())
}

/// vol(G_{d,n}) = vol(S^{n−1}) ⋯ vol(S^{n−d}) / (vol(S^{d−1}) ⋯ vol(S^1)).
///
/// The denominator is empty (= 1) for d = 1.
pub fn grassmannian_volume(d: usize, n: usize) -> Result<f64> {
    check_dims(d, n)?;
    let numerator: f64 = (n - d..n).map(sphere_volume).product();
    let denominator: f64 = (1..d).map(sphere_volume).product();
    Ok(numerator / denominator)
}

/// vol(G_{d,n}) as vol(SO(n)) / (2^{d(n−d)/2} vol(SO(d)) vol(SO(n−d))).
pub fn grassmannian_volume_so(d: usize, n: usize) -> Result<f64> {
    check_dims(d, n)?;
    let scale = 2f64.powf((d * (n - d)) as f64 / 2.0);
    Ok(so_volume(n)? / (scale * so_volume(d)? * so_volume(n - d)?))
}

/// Relative discrepancy between the sphere-product and SO-quotient volumes.
pub fn volume_discrepancy(d: usize, n: usize) -> Result<f64> {
    let a = grassmannian_volume(d, n)?;
    let b = grassmannian_volume_so(d, n)?;
    Ok(((a - b) / a).abs())
}

/// (4π)^{d/2} Γ(n/2) / Γ((n−d)/2).
///
/// Ratio between the constant of the Riesz-potential representation of the
/// normal operator and vol(G_{d,n}).
pub fn gamma_ratio_constant(d: usize, n: usize) -> Result<f64> {
    check_dims(d, n)?;
    Ok((4.0 * PI).powf(d as f64 / 2.0) * gamma_half_integer(n as u32)
        / gamma_half_integer((n - d) as u32))
}

/// Dimension counts and orders for the d-plane transform on R^n.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DimensionReport {
    pub d: i64,
    pub n: i64,
    /// dim G_{d,n} = d(n−d).
    pub dim_grassmannian: i64,
    /// dim G(d,n) = (d+1)(n−d).
    pub dim_affine_grassmannian: i64,
    /// dim Λ_d = dim G(d,n) + n.
    pub dim_lambda: i64,
    /// dim of the fibre-product set E = 2n + d(n−d−1).
    pub dim_e: i64,
    /// e_d = d(n−d−1).
    pub excess: i64,
    /// Order of R_d as a Fourier integral operator, −d(n−d+1)/4.
    pub fio_order: Rational64,
    /// Order of R_d* R_d as a pseudodifferential operator, −d.
    pub psdo_order: i64,
}

impl DimensionReport {
    /// Codimension of T*R^n × Δ(T*G(d,n)) × T*R^n, equal to dim T*G(d,n).
    pub fn codim_diagonal(&self) -> i64 {
        2 * self.dim_affine_grassmannian
    }

    /// −dim(Λ^T × Λ) + codim(diagonal) + dim(E).
    pub fn excess_from_codimensions(&self) -> i64 {
        -(2 * self.dim_lambda) + self.codim_diagonal() + self.dim_e
    }

    /// Order of R* R from the composition rule: 2·ord(R) + e/2.
    pub fn composed_order(&self) -> Rational64 {
        self.fio_order * 2 + Rational64::new(self.excess, 2)
    }

    /// All internal identities hold exactly.
    pub fn is_consistent(&self) -> bool {
        self.excess >= 0
            && self.dim_e == 2 * self.n + self.excess
            && self.excess_from_codimensions() == self.excess
            && self.composed_order() == Rational64::from_integer(self.psdo_order)
            && self.psdo_order == -self.d
            && self.dim_lambda == self.dim_affine_grassmannian + self.n
    }
}

pub fn dimension_report(d: usize, n: usize) -> Result<DimensionReport> {
    check_dims(d, n)?;
    let (d, n) = (d as i64, n as i64);
    Ok(DimensionReport {
        d,
        n,
        dim_grassmannian: d * (n - d),
        dim_affine_grassmannian: (d + 1) * (n - d),
        dim_lambda: (d + 1) * (n - d) + n,
        dim_e: 2 * n + d * (n - d - 1),
        excess: d * (n - d - 1),
        fio_order: Rational64::new(-d * (n - d + 1), 4),
        psdo_order: -d,
    })
}
