//! Scalar fields on a 2D pixel grid and the discrete calculus used by the
//! level-set engine.
//!
//! Grid spacing is one pixel along both axes. Values are stored row-major,
//! so `(x, y)` lives at `y * width + x`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Regularization of `|∇Φ|` in the curvature term.
pub const GRAD_EPSILON: f64 = 1e-8;

/// Real-valued function sampled on an image grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField2D {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarField2D {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {width}x{height} grid",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.values[y * self.width + x] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixel-wise combination of two fields of equal size.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension(format!(
                "{}x{} field combined with {}x{} field",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Width of the regularized Heaviside and Dirac functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    pub alpha: f64,
}

impl RegularizationParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::config("alpha", format!("must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }
}

impl Default for RegularizationParams {
    fn default() -> Self {
        Self { alpha: 1.5 }
    }
}

/// Arctan-regularized Heaviside, `½(1 + (2/π)·atan(x/α))`.
#[inline]
pub fn heaviside(x: f64, params: RegularizationParams) -> f64 {
    0.5 * (1.0 + (2.0 / PI) * (x / params.alpha).atan())
}

/// Derivative of [`heaviside`], `(1/π)·α/(α² + x²)`.
#[inline]
pub fn dirac(x: f64, params: RegularizationParams) -> f64 {
    let a = params.alpha;
    a / (PI * (a * a + x * x))
}

fn ensure_min_size(f: &ScalarField2D) -> Result<()> {
    if f.width < 3 || f.height < 3 {
        return Err(Error::Dimension(format!(
            "need at least 3x3 pixels, got {}x{}",
            f.width, f.height
        )));
    }
    Ok(())
}

/// Central differences inside, one-sided differences on the border.
pub fn gradient(f: &ScalarField2D) -> Result<(ScalarField2D, ScalarField2D)> {
    ensure_min_size(f)?;
    let (w, h) = f.dims();
    let dx = ScalarField2D::from_fn(w, h, |x, y| {
        if x == 0 {
            f.get(1, y) - f.get(0, y)
        } else if x == w - 1 {
            f.get(w - 1, y) - f.get(w - 2, y)
        } else {
            0.5 * (f.get(x + 1, y) - f.get(x - 1, y))
        }
    });
    let dy = ScalarField2D::from_fn(w, h, |x, y| {
        if y == 0 {
            f.get(x, 1) - f.get(x, 0)
        } else if y == h - 1 {
            f.get(x, h - 1) - f.get(x, h - 2)
        } else {
            0.5 * (f.get(x, y + 1) - f.get(x, y - 1))
        }
    });
    Ok((dx, dy))
}

/// Pixel-wise `|∇f|` from [`gradient`].
pub fn gradient_magnitude(f: &ScalarField2D) -> Result<ScalarField2D> {
    let (dx, dy) = gradient(f)?;
    dx.zip_map(&dy, |a, b| (a * a + b * b).sqrt())
}

/// Weighted mean curvature `div(b·∇Φ/|∇Φ|)`.
///
/// Fluxes are evaluated on cell faces: the normal component uses a one-sided
/// difference across the face, the tangential component the average of the
/// central differences on both sides, and `b` the average of the two
/// neighbouring pixels. Faces on the image border carry zero flux.
pub fn curvature(phi: &ScalarField2D, weight: &ScalarField2D) -> Result<ScalarField2D> {
    phi.ensure_same_dims(weight)?;
    ensure_min_size(phi)?;
    let (w, h) = phi.dims();
    let (cx, cy) = gradient(phi)?;
    let eps2 = GRAD_EPSILON * GRAD_EPSILON;

    // flux_x[y*(w-1) + x] lives on the face between (x,y) and (x+1,y)
    let mut flux_x = vec![0.0; (w - 1) * h];
    for y in 0..h {
        for x in 0..w - 1 {
            let n = phi.get(x + 1, y) - phi.get(x, y);
            let t = 0.5 * (cy.get(x, y) + cy.get(x + 1, y));
            let b = 0.5 * (weight.get(x, y) + weight.get(x + 1, y));
            flux_x[y * (w - 1) + x] = b * n / (n * n + t * t + eps2).sqrt();
        }
    }
    let mut flux_y = vec![0.0; w * (h - 1)];
    for y in 0..h - 1 {
        for x in 0..w {
            let n = phi.get(x, y + 1) - phi.get(x, y);
            let t = 0.5 * (cx.get(x, y) + cx.get(x, y + 1));
            let b = 0.5 * (weight.get(x, y) + weight.get(x, y + 1));
            flux_y[y * w + x] = b * n / (n * n + t * t + eps2).sqrt();
        }
    }
    Ok(ScalarField2D::from_fn(w, h, |x, y| {
        let east = if x + 1 < w { flux_x[y * (w - 1) + x] } else { 0.0 };
        let west = if x > 0 { flux_x[y * (w - 1) + x - 1] } else { 0.0 };
        let south = if y + 1 < h { flux_y[y * w + x] } else { 0.0 };
        let north = if y > 0 { flux_y[(y - 1) * w + x] } else { 0.0 };
        east - west + south - north
    }))
}

/// Bilinear interpolation with clamped-edge extension outside the grid.
pub fn bilinear_sample(f: &ScalarField2D, x: f64, y: f64) -> f64 {
    let (w, h) = f.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = f.get(x0, y0) * (1.0 - fx) + f.get(x1, y0) * fx;
    let bottom = f.get(x0, y1) * (1.0 - fx) + f.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Choice of the edge-stopping weight `b(·)` in the smoothness term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeightMode {
    /// `1 / (1 + |∇I|²)`, for images with well-defined edges.
    #[default]
    InverseGradient,
    /// `b ≡ 1`, plain curve length.
    Uniform,
}

pub fn edge_weight(image: &ScalarField2D, mode: EdgeWeightMode) -> Result<ScalarField2D> {
    ensure_min_size(image)?;
    match mode {
        EdgeWeightMode::Uniform => Ok(ScalarField2D::filled(image.width, image.height, 1.0)),
        EdgeWeightMode::InverseGradient => {
            let (dx, dy) = gradient(image)?;
            dx.zip_map(&dy, |a, b| 1.0 / (1.0 + a * a + b * b))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle_sdf(n: usize, r: f64) -> ScalarField2D {
        let c = (n as f64 - 1.0) / 2.0;
        ScalarField2D::from_fn(n, n, |x, y| {
            r - ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt()
        })
    }

    fn band_mean(field: &ScalarField2D, phi: &ScalarField2D, band: f64) -> f64 {
        let picked: Vec<f64> = field
            .values()
            .iter()
            .zip(phi.values())
            .filter(|(_, p)| p.abs() < band)
            .map(|(v, _)| *v)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    }

    #[test]
    fn gradient_of_ramp_and_constant() {
        let ramp = ScalarField2D::from_fn(5, 5, |x, _| x as f64);
        let (dx, dy) = gradient(&ramp).unwrap();
        assert!(dx.values().iter().all(|&v| v == 1.0));
        assert!(dy.values().iter().all(|&v| v == 0.0));

        let flat = ScalarField2D::filled(6, 4, 3.25);
        let (dx, dy) = gradient(&flat).unwrap();
        assert!(dx.values().iter().chain(dy.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_quadratic_is_exact_inside() {
        let f = ScalarField2D::from_fn(7, 7, |x, _| (x * x) as f64);
        let (dx, _) = gradient(&f).unwrap();
        for y in 0..7 {
            for x in 1..6 {
                assert_eq!(dx.get(x, y), 2.0 * x as f64);
            }
        }
    }

    #[test]
    fn gradient_rejects_tiny_fields() {
        let f = ScalarField2D::new(2, 5);
        assert!(matches!(gradient(&f), Err(Error::Dimension(_))));
    }

    #[test]
    fn curvature_of_circle() {
        let phi = circle_sdf(64, 10.0);
        let ones = ScalarField2D::filled(64, 64, 1.0);
        let k = curvature(&phi, &ones).unwrap();
        let mean = band_mean(&k, &phi, 1.0);
        assert!((mean + 0.1).abs() < 0.005, "mean curvature {mean}");
        for r in [8.0, 12.0, 16.0] {
            let phi = circle_sdf(64, r);
            let k = curvature(&phi, &ones).unwrap();
            let mean = band_mean(&k, &phi, 2.0);
            assert!((mean.abs() - 1.0 / r).abs() < 0.1 / r, "r={r}: {mean}");
        }
    }

    #[test]
    fn curvature_of_line_is_flat_and_linear_in_weight() {
        let phi = ScalarField2D::from_fn(32, 32, |x, y| 0.6 * x as f64 + 0.8 * y as f64 - 20.0);
        let ones = ScalarField2D::filled(32, 32, 1.0);
        let k = curvature(&phi, &ones).unwrap();
        for y in 1..31 {
            for x in 1..31 {
                assert!(k.get(x, y).abs() < 1e-12);
            }
        }

        let circle = circle_sdf(32, 9.0);
        let k1 = curvature(&circle, &ones).unwrap();
        let k2 = curvature(&circle, &ScalarField2D::filled(32, 32, 2.0)).unwrap();
        for (a, b) in k1.values().iter().zip(k2.values()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn curvature_rejects_mismatch() {
        let a = ScalarField2D::new(8, 8);
        let b = ScalarField2D::new(8, 9);
        assert!(matches!(curvature(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn heaviside_and_dirac_values() {
        let p = RegularizationParams::new(1.0).unwrap();
        assert_eq!(heaviside(0.0, p), 0.5);
        assert!((heaviside(1.0, p) - 0.75).abs() < 1e-15);
        assert!((heaviside(1000.0, p) - 1.0).abs() < 1e-3);
        assert!((dirac(0.0, p) - 1.0 / PI).abs() < 1e-15);
        assert!((dirac(0.0, p) - 0.3183).abs() < 1e-4);
    }

    #[test]
    fn dirac_is_heaviside_derivative() {
        let p = RegularizationParams::default();
        let h = 1e-4;
        for x in [-7.0, -1.5, -0.3, 0.0, 0.2, 1.1, 4.0, 30.0] {
            let fd = (heaviside(x + h, p) - heaviside(x - h, p)) / (2.0 * h);
            assert!((fd - dirac(x, p)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn dirac_integrates_to_one() {
        for alpha in [0.5, 1.5, 3.0] {
            let p = RegularizationParams::new(alpha).unwrap();
            let n = 2_000_000;
            let lo = -1000.0 * alpha;
            let step = 2000.0 * alpha / n as f64;
            let mut total = 0.5 * (dirac(lo, p) + dirac(-lo, p));
            for i in 1..n {
                total += dirac(lo + i as f64 * step, p);
            }
            total *= step;
            assert!((total - 1.0).abs() < 1e-3, "alpha={alpha}: {total}");
        }
    }

    #[test]
    fn rejects_non_positive_alpha() {
        assert!(RegularizationParams::new(0.0).is_err());
        assert!(RegularizationParams::new(-1.0).is_err());
        assert!(RegularizationParams::new(f64::NAN).is_err());
    }

    #[test]
    fn bilinear_sampling() {
        let f = ScalarField2D::from_fn(4, 3, |x, y| (x * 10 + y) as f64);
        assert_eq!(bilinear_sample(&f, 2.0, 1.0), 21.0);
        assert_eq!(bilinear_sample(&f, 3.0, 2.0), 32.0);
        let pair = ScalarField2D::from_fn(2, 2, |x, _| x as f64);
        assert_eq!(bilinear_sample(&pair, 0.5, 0.0), 0.5);
        assert_eq!(bilinear_sample(&f, -5.0, -5.0), f.get(0, 0));
        assert_eq!(bilinear_sample(&f, 50.0, 0.0), f.get(3, 0));
    }

    #[test]
    fn edge_weights() {
        let flat = ScalarField2D::filled(8, 8, 4.0);
        let w = edge_weight(&flat, EdgeWeightMode::InverseGradient).unwrap();
        assert!(w.values().iter().all(|&v| v == 1.0));

        let step = ScalarField2D::from_fn(10, 6, |x, _| if x < 5 { 0.0 } else { 10.0 });
        let u = edge_weight(&step, EdgeWeightMode::Uniform).unwrap();
        assert!(u.values().iter().all(|&v| v == 1.0));
        let w = edge_weight(&step, EdgeWeightMode::InverseGradient).unwrap();
        assert!((w.get(4, 3) - 1.0 / 26.0).abs() < 1e-15);
        assert!((w.get(5, 3) - 1.0 / 26.0).abs() < 1e-15);
        assert_eq!(w.get(1, 3), 1.0);
    }

    proptest! {
        #[test]
        fn heaviside_monotone_and_open_range(a in -1e3f64..1e3, b in -1e3f64..1e3, alpha in 0.1f64..5.0) {
            let p = RegularizationParams::new(alpha).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(heaviside(lo, p) <= heaviside(hi, p));
            prop_assert!(heaviside(a, p) > 0.0 && heaviside(a, p) < 1.0);
            prop_assert_eq!(dirac(a, p), dirac(-a, p));
        }

        #[test]
        fn bilinear_reproduces_bilinear_polynomials(
            c in prop::array::uniform4(-5.0f64..5.0),
            x in 0.0f64..8.999,
            y in 0.0f64..5.999,
        ) {
            let poly = |x: f64, y: f64| c[0] + c[1] * x + c[2] * y + c[3] * x * y;
            let f = ScalarField2D::from_fn(10, 7, |i, j| poly(i as f64, j as f64));
            prop_assert!((bilinear_sample(&f, x, y) - poly(x, y)).abs() < 1e-9);
        }
    }
}
