//! Isotropic Gaussian mixtures: test functions whose values, d-plane
//! transforms and Fourier transforms are all available in closed form.
//!
//! Text format, one term per line:
//!
//! ```text
//! # amplitude, center coordinates, width
//! gaussian 1.0 0.0 0.0 1.0
//! gaussian -0.5 1.0 2.0 0.5
//! ```

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::geometry::{dot, AffinePlane, Vector};

/// a·exp(−|x − μ|² / (2s²)).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTerm {
    pub amplitude: f64,
    pub center: Vector,
    pub width: f64,
}

impl GaussianTerm {
    pub fn new(amplitude: f64, center: Vector, width: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::InvalidParameter(format!("width must be positive, got {width}")));
        }
        if !amplitude.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            amplitude,
            center,
            width,
        })
    }

    /// Unit-amplitude term centered at the origin.
    pub fn centered(n: usize, width: f64) -> Result<Self> {
        Self::new(1.0, Vector::zeros(n), width)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(self.center.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.amplitude * (-r2 / (2.0 * self.width * self.width)).exp()
    }

    /// ∫ over R^k of the term restricted to any k-plane through its center.
    pub fn mass(&self, k: usize) -> f64 {
        self.amplitude * (2.0 * PI * self.width * self.width).powf(k as f64 / 2.0)
    }
}

/// A nonempty sum of isotropic Gaussians on R^n.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    terms: Vec<GaussianTerm>,
    n: usize,
}

impl GaussianMixture {
    pub fn new(terms: Vec<GaussianTerm>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidParameter("a mixture needs at least one term".into()))?;
        let n = first.center.len();
        if n == 0 {
            return Err(Error::InvalidParameter("ambient dimension must be >= 1".into()));
        }
        for t in &terms {
            check_len(n, t.center.len())?;
        }
        Ok(Self { terms, n })
    }

    /// Unit-amplitude Gaussian of width `width` centered at the origin of R^n.
    pub fn centered(n: usize, width: f64) -> Result<Self> {
        Self::new(vec![GaussianTerm::centered(n, width)?])
    }

    pub fn single(term: GaussianTerm) -> Result<Self> {
        Self::new(vec![term])
    }

    pub fn terms(&self) -> &[GaussianTerm] {
        &self.terms
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    /// Term-wise union.
    pub fn plus(&self, other: &GaussianMixture) -> Result<Self> {
        check_len(self.n, other.n)?;
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::new(terms)
    }

    /// All amplitudes multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| GaussianTerm {
                amplitude: t.amplitude * c,
                ..t.clone()
            })
            .collect();
        Self { terms, n: self.n }
    }

    pub fn max_width(&self) -> f64 {
        self.terms.iter().map(|t| t.width).fold(0.0, f64::max)
    }

    pub fn max_center_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.center.norm()).fold(0.0, f64::max)
    }

    /// f(x).
    pub fn eval(&self, x: &Vector) -> Result<f64> {
        check_len(self.n, x.len())?;
        Ok(self.value(x.as_slice()))
    }

    /// f(x) without the dimension check.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }

    /// R_d f(σ, x″) = Σ a(2πs²)^{d/2} exp(−|x″ − π_{σ^⊥}μ|² / (2s²)).
    pub fn dplane_closed_form(&self, plane: &AffinePlane) -> Result<f64> {
        check_len(self.n, plane.ambient_dim())?;
        let frame = plane.frame();
        let d = frame.sub_dim();
        let offset = plane.offset();
        let mut total = 0.0;
        for t in &self.terms {
            let mu_perp = frame.complement_part(&t.center)?;
            let r2 = (offset - mu_perp).norm_squared();
            total += t.mass(d) * (-r2 / (2.0 * t.width * t.width)).exp();
        }
        Ok(total)
    }

    /// f̂(ξ) = ∫ e^{−iy·ξ} f(y) dy = Σ a(2πs²)^{n/2} e^{−iμ·ξ} e^{−s²|ξ|²/2}.
    pub fn fourier_closed_form(&self, xi: &Vector) -> Result<Complex64> {
        check_len(self.n, xi.len())?;
        Ok(self.fourier_value(xi.as_slice()))
    }

    pub(crate) fn fourier_value(&self, xi: &[f64]) -> Complex64 {
        let xi2 = dot(xi, xi);
        self.terms
            .iter()
            .map(|t| {
                let envelope = t.mass(self.n) * (-t.width * t.width * xi2 / 2.0).exp();
                Complex64::from_polar(envelope, -dot(t.center.as_slice(), xi))
            })
            .sum()
    }

    /// Parses the phantom text format. The ambient dimension is taken from the
    /// first term; every later term must agree.
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let mut n: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: line_no,
                message,
            };
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("gaussian") => {}
                Some(other) => return Err(err(format!("unknown term kind `{other}`"))),
                None => continue,
            }
            let numbers = tokens
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| err(format!("`{t}` is not a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if numbers.len() < 3 {
                return Err(err("expected `gaussian <a> <mu_1> ... <mu_n> <s>`".into()));
            }
            let dim = numbers.len() - 2;
            if let Some(expected) = n {
                if dim != expected {
                    return Err(err(format!("term has dimension {dim}, expected {expected}")));
                }
            }
            n = Some(dim);
            let center = Vector::from_column_slice(&numbers[1..=dim]);
            let term = GaussianTerm::new(numbers[0], center, numbers[dim + 1])
                .map_err(|e| err(e.to_string()))?;
            terms.push(term);
        }
        if terms.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: "no gaussian terms found".into(),
            });
        }
        Self::new(terms)
    }

    /// Renders the phantom text format with round-trip precision.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.terms {
            let _ = write!(out, "gaussian {:e}", t.amplitude);
            for c in t.center.iter() {
                let _ = write!(out, " {c:e}");
            }
            let _ = writeln!(out, " {:e}", t.width);
        }
        out
    }
}
