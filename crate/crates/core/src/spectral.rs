//! Grid Fourier analysis under the convention f̂(ξ) = ∫ e^{−iy·ξ} f(y) dy.
//!
//! The discrete forward transform is scaled by h^n and carries the phase of
//! the grid origin, so bin k approximates f̂ at ξ_k = 2πk/(N h) (k taken in
//! [−N/2, N/2)). The inverse carries (2π)^{−n} and the dual step, which
//! together make the round trip exact.
//!
//! On top of that: power multipliers |ξ|^p, the filtered-backprojection
//! inversion, and a measurement of the symbol κ/|ξ|^d of the normal operator.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::constants::{gamma_fn, gamma_ratio_constant, grassmannian_volume, sphere_volume};
use crate::error::{check_dims, Error, Result};
use crate::geometry::Vector;
use crate::grid::{GridField, GridSpec};
use crate::mc::Substreams;
use crate::phantoms::GaussianMixture;
use crate::transform::{backproject_grid, forward_analytic, PoolMode, SinogramFunction};

/// Complex samples of f̂ on the dual grid of a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    spec: GridSpec,
    values: Vec<Complex64>,
}

impl SpectralField {
    /// The spatial grid this spectrum belongs to.
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// 2π/(N h) along `axis`.
    pub fn dual_step(&self, axis: usize) -> f64 {
        2.0 * PI / (self.spec.dims()[axis] as f64 * self.spec.spacing())
    }

    /// ξ of bin `flat`.
    pub fn frequency_into(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for (axis, &m) in self.spec.dims().iter().enumerate().rev() {
            out[axis] = signed_index(rest % m, m) as f64 * self.dual_step(axis);
            rest /= m;
        }
    }

    pub fn frequency(&self, flat: usize) -> Vector {
        let mut xi = Vector::zeros(self.spec.ambient_dim());
        self.frequency_into(flat, xi.as_mut_slice());
        xi
    }

    /// Flat index of the bin at −ξ_k.
    pub fn mirror_index(&self, flat: usize) -> usize {
        let dims = self.spec.dims();
        let mut idx = vec![0usize; dims.len()];
        self.spec.multi_index(flat, &mut idx);
        idx.iter()
            .zip(dims)
            .fold(0, |acc, (&i, &m)| acc * m + (m - i) % m)
    }

    /// max |F(−ξ) − conj F(ξ)|.
    pub fn conjugate_asymmetry(&self) -> f64 {
        (0..self.values.len())
            .map(|k| (self.values[self.mirror_index(k)] - self.values[k].conj()).norm())
            .fold(0.0, f64::max)
    }
}

fn signed_index(k: usize, m: usize) -> i64 {
    if k < m / 2 {
        k as i64
    } else {
        k as i64 - m as i64
    }
}

/// Unnormalized in-place n-D FFT, one axis at a time.
fn fft_nd(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total = data.len();
    for (axis, &m) in dims.iter().enumerate() {
        let fft = if inverse {
            planner.plan_fft_inverse(m)
        } else {
            planner.plan_fft_forward(m)
        };
        let stride: usize = dims[axis + 1..].iter().product();
        let mut line = vec![Complex64::default(); m];
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        for outer in 0..total / (m * stride) {
            for inner in 0..stride {
                let base = outer * m * stride + inner;
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
}

fn origin_phase(spectrum: &SpectralField, flat: usize, xi: &mut [f64], sign: f64) -> Complex64 {
    spectrum.frequency_into(flat, xi);
    let phase: f64 = xi.iter().zip(spectrum.spec.origin().iter()).map(|(a, b)| a * b).sum();
    Complex64::from_polar(1.0, sign * phase)
}

/// F_k = h^n e^{−i o·ξ_k} Σ_j f_j e^{−2πi j·k/N}.
pub fn dft_forward(field: &GridField) -> SpectralField {
    let spec = field.spec().clone();
    let mut values: Vec<Complex64> = field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut values, spec.dims(), false);
    let mut out = SpectralField { spec, values };
    let scale = out.spec.spacing().powi(out.spec.ambient_dim() as i32);
    let mut xi = vec![0.0; out.spec.ambient_dim()];
    for k in 0..out.values.len() {
        let phase = origin_phase(&out, k, &mut xi, -1.0);
        out.values[k] *= phase * scale;
    }
    out
}

/// The real part of the exact inverse of [`dft_forward`].
pub fn dft_inverse(spectrum: &SpectralField) -> GridField {
    let spec = spectrum.spec.clone();
    let n = spec.ambient_dim();
    let mut xi = vec![0.0; n];
    let mut values: Vec<Complex64> = (0..spectrum.values.len())
        .map(|k| spectrum.values[k] * origin_phase(spectrum, k, &mut xi, 1.0))
        .collect();
    fft_nd(&mut values, spec.dims(), true);
    let scale = 1.0 / (values.len() as f64 * spec.spacing().powi(n as i32));
    let real = values.iter().map(|v| v.re * scale).collect();
    GridField::new(spec, real).expect("finite spectrum gives a finite field")
}

/// Multiplies bin ξ by |ξ|^p. The DC bin becomes 0 for p ≠ 0.
pub fn apply_power_multiplier(spectrum: &SpectralField, p: f64) -> SpectralField {
    let mut out = spectrum.clone();
    if p == 0.0 {
        return out;
    }
    let mut xi = vec![0.0; spectrum.spec.ambient_dim()];
    for k in 0..out.values.len() {
        spectrum.frequency_into(k, &mut xi);
        let r2: f64 = xi.iter().map(|v| v * v).sum();
        out.values[k] *= if r2 == 0.0 { 0.0 } else { r2.powf(p / 2.0) };
    }
    out
}

/// I_d f(0) = (2π)^{−n} ∫ |ξ|^{−d} f̂(ξ) dξ for the centered unit-amplitude
/// Gaussian of width s, in closed form.
pub fn riesz_at_origin(d: usize, n: usize, s: f64) -> Result<f64> {
    check_dims(d, n)?;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("width must be positive, got {s}")));
    }
    let k = (n - d) as f64;
    Ok((2.0 * PI).powi(-(n as i32))
        * sphere_volume(n - 1)
        * (2.0 * PI * s * s).powf(n as f64 / 2.0)
        * 0.5
        * (2.0 / (s * s)).powf(k / 2.0)
        * gamma_fn(k / 2.0)?)
}

/// κ = R*R f(0) / I_d f(0) for the centered Gaussian of width s.
pub fn symbol_constant_closed_at(d: usize, n: usize, s: f64) -> Result<f64> {
    let normal_at_origin = grassmannian_volume(d, n)? * (2.0 * PI * s * s).powf(d as f64 / 2.0);
    Ok(normal_at_origin / riesz_at_origin(d, n, s)?)
}

/// The symbol constant implied by the exact value of R*R f at the origin.
pub fn symbol_constant_closed(d: usize, n: usize) -> Result<f64> {
    symbol_constant_closed_at(d, n, 1.0)
}

/// vol(G_{d,n}), the constant asserted for the symbol vol(G_{d,n})/|ξ|^d.
pub fn kappa_paper(d: usize, n: usize) -> Result<f64> {
    grassmannian_volume(d, n)
}

/// vol(G_{d,n}) (4π)^{d/2} Γ(n/2) / Γ((n−d)/2).
pub fn kappa_gamma(d: usize, n: usize) -> Result<f64> {
    Ok(grassmannian_volume(d, n)? * gamma_ratio_constant(d, n)?)
}

/// Which constant divides the filtered backprojection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstantMode {
    /// vol(G_{d,n}).
    Paper,
    /// [`symbol_constant_closed`].
    Calibrated,
    Explicit(f64),
}

impl ConstantMode {
    pub fn kappa(&self, d: usize, n: usize) -> Result<f64> {
        match *self {
            Self::Paper => kappa_paper(d, n),
            Self::Calibrated => symbol_constant_closed(d, n),
            Self::Explicit(k) if k > 0.0 && k.is_finite() => Ok(k),
            Self::Explicit(k) => Err(Error::InvalidParameter(format!("explicit constant must be positive, got {k}"))),
        }
    }
}

/// Grid and sampling parameters for [`symbol_estimate_grid`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolConfig {
    pub d: usize,
    pub n: usize,
    /// Points per axis.
    pub size: usize,
    pub h: f64,
    /// Width of the centered Gaussian probe.
    pub width: f64,
    /// Haar samples per grid point.
    pub samples: usize,
    pub pool: PoolMode,
    /// Fit band as fractions of the Nyquist frequency π/h.
    pub band: (f64, f64),
    /// Relative tolerance on exponent and constant.
    pub tolerance: f64,
}

impl SymbolConfig {
    /// 128² at h = 1/8 for n = 2, 48³ at h = 1/4 otherwise; probe width 1.5h.
    pub fn standard(d: usize, n: usize) -> Result<Self> {
        check_dims(d, n)?;
        let (size, h, tolerance) = if n == 2 { (128, 0.125, 0.02) } else { (48, 0.25, 0.05) };
        Ok(Self {
            d,
            n,
            size,
            h,
            width: 1.5 * h,
            samples: 20_000,
            pool: PoolMode::Shared,
            band: (0.1, 0.75),
            tolerance,
        })
    }
}

/// Aggregate of the ratio N̂f/f̂ over one radial shell of the dual grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellRow {
    /// Shell index: bins with round(|ξ|/Δ) equal to it.
    pub index: usize,
    pub bins: usize,
    /// Effective radius ρ with ρ^{−d} = ⟨|ξ|^{−d}⟩ weighted by |f̂|².
    pub radius: f64,
    /// Σ Re(N̂f conj f̂) / Σ |f̂|².
    pub symbol: f64,
    /// ρ^d · symbol.
    pub scaled: f64,
}

/// Outcome of a symbol measurement, with both theoretical candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolReport {
    pub d: usize,
    pub n: usize,
    pub kappa_measured: f64,
    pub kappa_std_error: f64,
    pub kappa_closed: f64,
    pub kappa_paper: f64,
    pub kappa_gamma: f64,
    pub exponent: f64,
    pub exponent_std_error: f64,
    /// Fitted |ξ| range.
    pub band: (f64, f64),
    pub nyquist: f64,
    pub shells: Vec<ShellRow>,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl SymbolReport {
    pub fn exponent_ok(&self) -> bool {
        (self.exponent + self.d as f64).abs() <= self.tolerance * self.d as f64
    }

    /// The grid fit and the closed-form ratio agree within tolerance.
    pub fn concordant(&self) -> bool {
        (self.kappa_measured / self.kappa_closed - 1.0).abs() <= self.tolerance
    }

    /// The sampling noise alone is within tolerance.
    pub fn sufficient_samples(&self) -> bool {
        self.kappa_std_error <= self.tolerance * self.kappa_measured
    }

    pub fn passes(&self) -> bool {
        self.exponent_ok() && self.concordant() && self.sufficient_samples()
    }

    /// κ ± (3σ + tolerance·κ).
    pub fn interval(&self) -> (f64, f64) {
        let half = 3.0 * self.kappa_std_error + self.tolerance * self.kappa_measured;
        (self.kappa_measured - half, self.kappa_measured + half)
    }

    pub fn candidates_in_interval(&self) -> Vec<&'static str> {
        let (lo, hi) = self.interval();
        [("kappa_paper", self.kappa_paper), ("kappa_gamma", self.kappa_gamma)]
            .into_iter()
            .filter(|(_, k)| (lo..=hi).contains(k))
            .map(|(name, _)| name)
            .collect()
    }

    /// Per-shell table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("shell,bins,radius,symbol,radius_pow_d_times_symbol\n");
        for r in &self.shells {
            let _ = writeln!(out, "{},{},{:.16e},{:.16e},{:.16e}", r.index, r.bins, r.radius, r.symbol, r.scaled);
        }
        out
    }

    pub fn summary(&self) -> String {
        let (lo, hi) = self.interval();
        let inside = self.candidates_in_interval();
        let verdict = |ok: bool| if ok { "ok" } else { "FAILED" };
        let mut s = String::new();
        let _ = writeln!(s, "symbol of R*R for d={} n={} ({} samples, seed {})", self.d, self.n, self.samples, self.seed);
        let _ = writeln!(s, "band: {:.6} <= |xi| <= {:.6} (nyquist {:.6}), {} shells", self.band.0, self.band.1, self.nyquist, self.shells.len());
        let _ = writeln!(
            s,
            "exponent: {:.6} +/- {:.6} (expected {}, tolerance {:.0}%): {}",
            self.exponent,
            self.exponent_std_error,
            -(self.d as i64),
            self.tolerance * 100.0,
            verdict(self.exponent_ok())
        );
        let _ = writeln!(s, "kappa_measured: {:.9} +/- {:.9}", self.kappa_measured, self.kappa_std_error);
        let _ = writeln!(
            s,
            "kappa_closed:   {:.9} (ratio {:.6}): {}",
            self.kappa_closed,
            self.kappa_measured / self.kappa_closed,
            verdict(self.concordant())
        );
        let _ = writeln!(s, "kappa_paper:    {:.9}", self.kappa_paper);
        let _ = writeln!(s, "kappa_gamma:    {:.9}", self.kappa_gamma);
        let _ = writeln!(s, "measurement interval: [{lo:.9}, {hi:.9}]");
        let _ = writeln!(
            s,
            "inside interval: {}",
            if inside.is_empty() { "none".to_string() } else { inside.join(", ") }
        );
        if !self.sufficient_samples() {
            let _ = writeln!(
                s,
                "insufficient samples: relative standard error {:.4} exceeds tolerance {:.4}",
                self.kappa_std_error / self.kappa_measured,
                self.tolerance
            );
        }
        s
    }
}

/// Measures the symbol of R*R: N f = R*R f on a grid by Monte Carlo, then
/// â = N̂f/f̂ shell by shell in the mid band, fitted to κ|ξ|^p.
pub fn symbol_estimate_grid(config: &SymbolConfig, streams: &Substreams) -> Result<SymbolReport> {
    let SymbolConfig { d, n, size, h, width, .. } = *config;
    check_dims(d, n)?;
    let (lo, hi) = config.band;
    if !(0.0 < lo && lo < hi && hi <= 1.0) {
        return Err(Error::InvalidParameter(format!("band ({lo}, {hi}) must satisfy 0 < lo < hi <= 1")));
    }
    let spec = GridSpec::centered(n, size, h)?;
    let f = GaussianMixture::centered(n, width)?;
    let phi = forward_analytic(&f, d)?;
    let nf = backproject_grid(&phi, &spec, config.samples, streams, config.pool)?;
    let spectrum = dft_forward(&nf);

    let delta = spectrum.dual_step(0);
    let nyquist = PI / h;
    let first = (lo * nyquist / delta).ceil() as usize;
    let last = ((hi * nyquist / delta).floor() as usize).saturating_sub(1);
    if last < first + 2 {
        return Err(Error::InvalidGrid("fit band holds fewer than three shells".into()));
    }
    let shell_count = last - first + 1;
    // Per shell: Σ Re(N̂f conj f̂), Σ|f̂|², Σ|f̂|²|ξ|^{−d}, bins.
    let mut acc = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); shell_count];
    let mut xi = vec![0.0; n];
    for (k, value) in spectrum.values().iter().enumerate() {
        spectrum.frequency_into(k, &mut xi);
        let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let shell = (r / delta).round() as usize;
        if shell < first || shell > last {
            continue;
        }
        let fhat = f.fourier_value(&xi);
        let w = fhat.norm_sqr();
        let a = &mut acc[shell - first];
        a.0 += (value * fhat.conj()).re;
        a.1 += w;
        a.2 += w * r.powi(-(d as i32));
        a.3 += 1;
    }
    let shells: Vec<ShellRow> = acc
        .iter()
        .enumerate()
        .map(|(i, &(cross, w, wr, bins))| {
            let radius = (wr / w).powf(-1.0 / d as f64);
            let symbol = cross / w;
            ShellRow {
                index: first + i,
                bins,
                radius,
                symbol,
                scaled: radius.powi(d as i32) * symbol,
            }
        })
        .collect();
    if let Some(bad) = shells.iter().find(|r| !(r.symbol > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "measured symbol is not positive in shell {} ({}); increase samples",
            bad.index, bad.symbol
        )));
    }

    let xs: Vec<f64> = shells.iter().map(|r| r.radius.ln()).collect();
    let ys: Vec<f64> = shells.iter().map(|r| r.symbol.ln()).collect();
    let (exponent, exponent_std_error) = ols_slope(&xs, &ys);
    let logs: Vec<f64> = shells.iter().map(|r| r.scaled.ln()).collect();
    let k = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / k;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let kappa_measured = mean.exp();

    Ok(SymbolReport {
        d,
        n,
        kappa_measured,
        kappa_std_error: kappa_measured * (var / k).sqrt(),
        kappa_closed: symbol_constant_closed(d, n)?,
        kappa_paper: kappa_paper(d, n)?,
        kappa_gamma: kappa_gamma(d, n)?,
        exponent,
        exponent_std_error,
        band: (first as f64 * delta, last as f64 * delta),
        nyquist,
        shells,
        samples: config.samples,
        seed: streams.seed(),
        tolerance: config.tolerance,
    })
}

/// Least-squares slope of y on x and its standard error.
fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let se = if k > 2.0 { (rss / (k - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, se)
}

/// Sampling and padding for [`fbp_reconstruct`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FbpConfig {
    pub samples: usize,
    /// Extra grid points on each side during backprojection and filtering;
    /// `None` means one eighth of the largest axis.
    pub margin: Option<usize>,
    pub pool: PoolMode,
}

impl FbpConfig {
    pub fn new(samples: usize) -> Self {
        Self {
            samples,
            margin: None,
            pool: PoolMode::Shared,
        }
    }
}

/// f ≈ (1/κ) (−Δ)^{d/2} R*φ on the grid `spec`.
///
/// The backprojection is computed on a grid padded by the configured margin
/// so that the periodic filter sees less wrap-around, then cropped back.
pub fn fbp_reconstruct(
    phi: &dyn SinogramFunction,
    spec: &GridSpec,
    mode: ConstantMode,
    config: &FbpConfig,
    streams: &Substreams,
) -> Result<GridField> {
    let (d, n) = (phi.sub_dim(), phi.ambient_dim());
    check_dims(d, n)?;
    if spec.ambient_dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: spec.ambient_dim(),
        });
    }
    let kappa = mode.kappa(d, n)?;
    let margin = config
        .margin
        .unwrap_or_else(|| spec.dims().iter().copied().max().unwrap_or(0) / 8);
    let padded = spec.padded(margin);
    let backprojected = backproject_grid(phi, &padded, config.samples, streams, config.pool)?;
    let filtered = dft_inverse(&apply_power_multiplier(&dft_forward(&backprojected), d as f64));
    let mut out = filtered.crop(&vec![margin; n], spec.dims())?;
    out.scale(1.0 / kappa);
    Ok(out)
}

/// Samples the phantom on the grid.
pub fn sample_phantom(f: &GaussianMixture, spec: &GridSpec) -> Result<GridField> {
    if f.ambient_dim() != spec.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: f.ambient_dim(),
            found: spec.ambient_dim(),
        });
    }
    Ok(GridField::sample(spec.clone(), |x| f.value(x)))
}

/// ‖p‖² h^n and (2π)^{−n} ‖F‖² Δ^n; equal by Parseval.
pub fn parseval_sides(field: &GridField, spectrum: &SpectralField) -> (f64, f64) {
    let n = field.ambient_dim();
    let h = field.spec().spacing();
    let space = field.values().par_iter().map(|v| v * v).sum::<f64>() * h.powi(n as i32);
    let dual: f64 = (0..n).map(|a| spectrum.dual_step(a)).product();
    let freq = spectrum.values().par_iter().map(|v| v.norm_sqr()).sum::<f64>() * dual / (2.0 * PI).powi(n as i32);
    (space, freq)
}
