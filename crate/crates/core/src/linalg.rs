//! Dense complex matrix helpers on top of nalgebra.
//!
//! Everything downstream works with `CMatrix` / `CVector` aliases; this
//! module adds the small pieces nalgebra does not ship directly: finiteness
//! validation, Frobenius norms, 2-norm condition numbers, and the JSON
//! serialization used by the CLI reports (complex numbers as `[re, im]`
//! pairs, matrices row-major).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Validate that `m` is square with all entries finite.
pub fn check_square_finite(m: &CMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} is not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::DimensionMismatch(format!("{what}: non-finite entries")));
    }
    Ok(())
}

pub fn check_same_dim(a: &CMatrix, b: &CMatrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

pub fn frob(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// 2-norm condition number via complex SVD.
pub fn cond2(m: &CMatrix) -> Result<f64> {
    let svd = m
        .clone()
        .try_svd(false, false, 1e-14, 100_000)
        .ok_or_else(|| Error::IllConditioned("SVD did not converge".into()))?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 0.0 {
        return Err(Error::IllConditioned("singular matrix".into()));
    }
    Ok(smax / smin)
}

/// Largest singular value (spectral norm).
pub fn norm2(m: &CMatrix) -> Result<f64> {
    let svd = m
        .clone()
        .try_svd(false, false, 1e-14, 100_000)
        .ok_or_else(|| Error::IllConditioned("SVD did not converge".into()))?;
    Ok(svd.singular_values.max())
}

pub fn inverse(m: &CMatrix, what: &str) -> Result<CMatrix> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned(format!("{what}: matrix not invertible")))
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Matrix exponential by scaling-and-squaring with a Taylor kernel.
/// Accurate to ~1e-15 relative for the well-scaled inputs used here.
pub fn expm(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    // 1-norm (max column sum) drives the scaling.
    let mut norm1 = 0.0f64;
    for j in 0..n {
        let col: f64 = (0..n).map(|i| m[(i, j)].norm()).sum();
        norm1 = norm1.max(col);
    }
    let s = if norm1 > 0.25 { (norm1 / 0.25).log2().ceil() as u32 } else { 0 };
    let small = m * cr(0.5f64.powi(s as i32));
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=24 {
        term = &term * &small * cr(1.0 / k as f64);
        result += &term;
        if frob(&term) < 1e-18 * frob(&result) {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// Serializable complex scalar, `[re, im]` on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JsonComplex(pub C64);

impl Serialize for JsonComplex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for JsonComplex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pair = <[f64; 2]>::deserialize(d)?;
        Ok(JsonComplex(C64::new(pair[0], pair[1])))
    }
}

/// Row-major JSON form of a complex matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonMatrix {
    pub dim: [usize; 2],
    pub entries: Vec<JsonComplex>,
}

impl JsonMatrix {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let mut entries = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                entries.push(JsonComplex(m[(i, j)]));
            }
        }
        JsonMatrix { dim: [m.nrows(), m.ncols()], entries }
    }

    pub fn to_matrix(&self) -> std::result::Result<CMatrix, serde_json::Error> {
        let (r, cdim) = (self.dim[0], self.dim[1]);
        if self.entries.len() != r * cdim {
            return Err(serde_json::Error::custom(format!(
                "matrix payload has {} entries for dim {}x{}",
                self.entries.len(),
                r,
                cdim
            )));
        }
        Ok(CMatrix::from_fn(r, cdim, |i, j| self.entries[i * cdim + j].0))
    }
}

/// Full-precision scientific formatting used by every CSV writer: 17
/// significant digits, enough to round-trip any f64.
pub fn fmt_g17(x: f64) -> String {
    format!("{:.16e}", x)
}
