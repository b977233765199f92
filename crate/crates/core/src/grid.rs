//! Uniformly sampled scalar fields on n-dimensional boxes.
//!
//! Values are stored in lexicographic order with the last axis varying
//! fastest. Binary file layout (all little-endian):
//!
//! ```text
//! b"DPLF"  version: u32  n: u32  dims: [u32; n]  h: f64  origin: [f64; n]  values: [f64]
//! ```

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::geometry::Vector;

pub const MAGIC: &[u8; 4] = b"DPLF";
pub const FORMAT_VERSION: u32 = 1;

/// Grid geometry: per-axis sizes, one uniform spacing, and the coordinates of
/// the first sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    dims: Vec<usize>,
    h: f64,
    origin: Vector,
}

impl GridSpec {
    pub fn new(dims: Vec<usize>, h: f64, origin: Vector) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidGrid("need at least one axis".into()));
        }
        if let Some(&bad) = dims.iter().find(|&&m| m < 8 || m % 2 != 0) {
            return Err(Error::InvalidGrid(format!("axis size {bad} must be even and >= 8")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        check_len(dims.len(), origin.len())?;
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dims, h, origin })
    }

    /// `size`^n points with spacing `h`, index size/2 on every axis at 0.
    pub fn centered(n: usize, size: usize, h: f64) -> Result<Self> {
        let origin = Vector::from_element(n, -(size as f64 / 2.0) * h);
        Self::new(vec![size; n], h, origin)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &Vector {
        &self.origin
    }

    pub fn ambient_dim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same spacing, `margin` extra points on both ends of every axis.
    pub fn padded(&self, margin: usize) -> Self {
        Self {
            dims: self.dims.iter().map(|m| m + 2 * margin).collect(),
            h: self.h,
            origin: self.origin.map(|o| o - margin as f64 * self.h),
        }
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for (axis, &m) in self.dims.iter().enumerate().rev() {
            out[axis] = flat % m;
            flat /= m;
        }
    }

    /// Coordinates of the sample with flat index `flat`.
    pub fn point_into(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for (axis, &m) in self.dims.iter().enumerate().rev() {
            out[axis] = self.origin[axis] + (rest % m) as f64 * self.h;
            rest /= m;
        }
    }

    pub fn point(&self, flat: usize) -> Vector {
        let mut p = Vector::zeros(self.ambient_dim());
        self.point_into(flat, p.as_mut_slice());
        p
    }
}

/// A real field sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        check_len(spec.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        let values = vec![0.0; spec.len()];
        Self { spec, values }
    }

    /// Samples `f` at every grid point, in parallel.
    pub fn sample<F>(spec: GridSpec, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let n = spec.ambient_dim();
        let values = (0..spec.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |buf, i| {
                    spec.point_into(i, buf);
                    f(buf)
                },
            )
            .collect();
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn ambient_dim(&self) -> usize {
        self.spec.ambient_dim()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    /// Multilinear interpolation; zero outside the sampled box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let n = self.ambient_dim();
        debug_assert_eq!(x.len(), n);
        let dims = &self.spec.dims;
        let mut base = [0usize; 16];
        let mut frac = [0.0f64; 16];
        let mut base_vec;
        let mut frac_vec;
        let (base, frac): (&mut [usize], &mut [f64]) = if n <= 16 {
            (&mut base[..n], &mut frac[..n])
        } else {
            base_vec = vec![0usize; n];
            frac_vec = vec![0.0; n];
            (&mut base_vec[..], &mut frac_vec[..])
        };
        for axis in 0..n {
            let u = (x[axis] - self.spec.origin[axis]) / self.spec.h;
            let last = (dims[axis] - 1) as f64;
            if !(0.0..=last).contains(&u) {
                return 0.0;
            }
            let i = (u.floor() as usize).min(dims[axis] - 2);
            base[axis] = i;
            frac[axis] = u - i as f64;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << n) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for axis in 0..n {
                let bit = (corner >> (n - 1 - axis)) & 1;
                weight *= if bit == 1 { frac[axis] } else { 1.0 - frac[axis] };
                flat = flat * dims[axis] + base[axis] + bit;
            }
            if weight != 0.0 {
                total += weight * self.values[flat];
            }
        }
        total
    }

    /// The sub-box starting at `start` with the given sizes.
    pub fn crop(&self, start: &[usize], dims: &[usize]) -> Result<Self> {
        let n = self.ambient_dim();
        check_len(n, start.len())?;
        check_len(n, dims.len())?;
        for axis in 0..n {
            if start[axis] + dims[axis] > self.spec.dims[axis] {
                return Err(Error::InvalidGrid("crop exceeds the source grid".into()));
            }
        }
        let origin = Vector::from_fn(n, |i, _| self.spec.origin[i] + start[i] as f64 * self.spec.h);
        let spec = GridSpec::new(dims.to_vec(), self.spec.h, origin)?;
        let mut idx = vec![0usize; n];
        let values = (0..spec.len())
            .map(|flat| {
                spec.multi_index(flat, &mut idx);
                let mut src = 0usize;
                for axis in 0..n {
                    src = src * self.spec.dims[axis] + idx[axis] + start[axis];
                }
                self.values[src]
            })
            .collect();
        Ok(Self { spec, values })
    }

    /// The 2-D slice through the middle index of every axis beyond the first two.
    pub fn central_slice(&self) -> (usize, usize, Vec<f64>) {
        let dims = &self.spec.dims;
        if dims.len() == 1 {
            return (1, dims[0], self.values.clone());
        }
        let (rows, cols) = (dims[0], dims[1]);
        let tail: usize = dims[2..].iter().product();
        let mid_tail = {
            let mut flat = 0usize;
            for &m in &dims[2..] {
                flat = flat * m + m / 2;
            }
            flat
        };
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                out.push(self.values[(r * cols + c) * tail + mid_tail]);
            }
        }
        (rows, cols, out)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.ambient_dim();
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(n as u32).to_le_bytes())?;
        for &m in &self.spec.dims {
            w.write_all(&(m as u32).to_le_bytes())?;
        }
        w.write_all(&self.spec.h.to_le_bytes())?;
        for o in self.spec.origin.iter() {
            w.write_all(&o.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        if n == 0 || n > 64 {
            return Err(Error::Format(format!("implausible dimension {n}")));
        }
        let dims = (0..n)
            .map(|_| read_u32(&mut r).map(|m| m as usize))
            .collect::<Result<Vec<_>>>()?;
        let h = read_f64(&mut r)?;
        let origin = (0..n).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        let spec = GridSpec::new(dims, h, Vector::from_vec(origin))?;
        let mut bytes = vec![0u8; spec.len() * 8];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after values".into()));
        }
        Self::new(spec, values)
    }

    /// 8-bit binary PGM of [`GridField::central_slice`], min→0, max→255.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        let (rows, cols, slice) = self.central_slice();
        let lo = slice.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = slice.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        write!(w, "P5\n{cols} {rows}\n255\n")?;
        let pixels: Vec<u8> = slice
            .iter()
            .map(|&v| {
                if range > 0.0 {
                    ((v - lo) / range * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            })
            .collect();
        w.write_all(&pixels)?;
        Ok(())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// ‖(a − ā) − (b − b̄)‖ / ‖b − b̄‖ over all grid samples.
pub fn relative_l2_error_mean_subtracted(approx: &GridField, truth: &GridField) -> Result<f64> {
    check_len(truth.values.len(), approx.values.len())?;
    let (ma, mb) = (approx.mean(), truth.mean());
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in approx.values.iter().zip(&truth.values) {
        let e = (a - ma) - (b - mb);
        num += e * e;
        den += (b - mb) * (b - mb);
    }
    if den == 0.0 {
        return Err(Error::InvalidParameter("reference field is constant".into()));
    }
    Ok((num / den).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spec_validation() {
        assert!(GridSpec::centered(2, 6, 0.1).is_err());
        assert!(GridSpec::centered(2, 9, 0.1).is_err());
        assert!(GridSpec::centered(2, 8, 0.0).is_err());
        assert!(GridSpec::new(vec![8, 8], 1.0, Vector::zeros(3)).is_err());
        let s = GridSpec::centered(3, 8, 0.5).unwrap();
        assert_eq!(s.len(), 512);
        assert_eq!(s.point(0).as_slice(), &[-2.0, -2.0, -2.0]);
        // Index (4, 4, 4) is the origin.
        assert_eq!(s.point(4 * 64 + 4 * 8 + 4).as_slice(), &[0.0, 0.0, 0.0]);
        // Last axis varies fastest.
        assert_eq!(s.point(1).as_slice(), &[-2.0, -2.0, -1.5]);
    }

    #[test]
    fn interpolation_is_exact_for_multilinear_functions() {
        let spec = GridSpec::centered(3, 8, 0.5).unwrap();
        let f = |x: &[f64]| 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2] + 0.25 * x[0] * x[1] * x[2];
        let field = GridField::sample(spec, f);
        for p in [[0.1, -0.3, 0.77], [-1.9, 1.4, 0.0], [1.49, 1.49, -1.99]] {
            assert!((field.interpolate(&p) - f(&p)).abs() < 1e-12);
        }
        assert_eq!(field.interpolate(&[2.0, 0.0, 0.0]), 0.0);
        assert_eq!(field.interpolate(&[0.0, -2.01, 0.0]), 0.0);
    }

    #[test]
    fn crop_and_pad_round_trip() {
        let spec = GridSpec::centered(2, 8, 1.0).unwrap();
        let padded = spec.padded(4);
        assert_eq!(padded.dims(), &[16, 16]);
        let field = GridField::sample(padded, |x| x[0] * 10.0 + x[1]);
        let inner = field.crop(&[4, 4], &[8, 8]).unwrap();
        assert_eq!(inner.spec(), &spec);
        let direct = GridField::sample(spec, |x| x[0] * 10.0 + x[1]);
        assert_eq!(inner.values(), direct.values());
    }

    #[test]
    fn central_slice_of_a_cube() {
        let spec = GridSpec::centered(3, 8, 1.0).unwrap();
        let field = GridField::sample(spec, |x| x[0] + 100.0 * x[2]);
        let (rows, cols, s) = field.central_slice();
        assert_eq!((rows, cols), (8, 8));
        assert!(s.iter().all(|v| v.abs() < 10.0));
    }

    #[test]
    fn pgm_header_and_size() {
        let field = GridField::sample(GridSpec::centered(2, 8, 1.0).unwrap(), |x| x[0]);
        let mut out = Vec::new();
        field.write_pgm(&mut out).unwrap();
        assert!(out.starts_with(b"P5\n8 8\n255\n"));
        assert_eq!(out.len(), b"P5\n8 8\n255\n".len() + 64);
    }

    #[test]
    fn rejects_corrupt_files() {
        assert!(matches!(GridField::read_from(&b"XXXX"[..]), Err(Error::Format(_))));
        let field = GridField::zeros(GridSpec::centered(2, 8, 1.0).unwrap());
        let mut bytes = Vec::new();
        field.write_to(&mut bytes).unwrap();
        assert!(GridField::read_from(&bytes[..bytes.len() - 1]).is_err());
        bytes.push(0);
        assert!(matches!(GridField::read_from(&bytes[..]), Err(Error::Format(_))));
    }

    #[test]
    fn mean_subtracted_error_ignores_offsets() {
        let spec = GridSpec::centered(2, 8, 1.0).unwrap();
        let truth = GridField::sample(spec.clone(), |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let shifted = GridField::sample(spec, |x| 3.0 + (-(x[0] * x[0] + x[1] * x[1])).exp());
        assert!(relative_l2_error_mean_subtracted(&shifted, &truth).unwrap() < 1e-14);
    }

    proptest! {
        #[test]
        fn binary_format_round_trips(
            n in 1usize..4,
            size in prop::sample::select(vec![8usize, 10]),
            h in 0.01f64..10.0,
            shift in -5.0f64..5.0,
            seed in any::<u64>(),
        ) {
            let spec = GridSpec::new(vec![size; n], h, Vector::from_element(n, shift)).unwrap();
            let field = GridField::sample(spec, |x| {
                x.iter().enumerate().map(|(i, v)| (v * (i as f64 + 1.3) + seed as f64 * 1e-9).sin()).sum()
            });
            let mut bytes = Vec::new();
            field.write_to(&mut bytes).unwrap();
            prop_assert_eq!(&bytes[..4], b"DPLF");
            let back = GridField::read_from(&bytes[..]).unwrap();
            prop_assert_eq!(back, field);
        }
    }
}
