//! Shape prior term and affine alignment of the prior to the evolving contour.
//!
//! The prior is a signed distance function `Φ_M` of a reference mask. Its
//! mismatch with the current level set is measured on the Dirac-weighted band
//! around the contour:
//!
//! ```text
//! E_shape(Φ) = Σ δ_α(Φ(x)) · (S·Φ(x) − Φ_M(A(x)))²,   A(x) = S·R·(x − c) + c + T
//! ```
//!
//! `A` maps image coordinates into the prior's frame; `c` is the pivot for
//! rotation and scaling.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{bilinear_sample, dirac, RegularizationParams, ScalarField2D};
use crate::levelset;

const MIN_SCALE: f64 = 1e-3;
/// Floor on the Gauss-Newton curvature when a parameter is unobservable.
const MIN_CURVATURE: f64 = 1e-6;

/// Signed distance function of the prior mask (inside positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeModel {
    pub phi_m: ScalarField2D,
}

impl ShapeModel {
    pub fn from_mask(mask: &ScalarField2D) -> Result<Self> {
        Ok(Self {
            phi_m: levelset::init_from_mask(mask)?.phi,
        })
    }
}

/// `A(x) = S·R(angle)·(x − pivot) + pivot + (tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams {
    pub scale: f64,
    pub angle: f64,
    pub tx: f64,
    pub ty: f64,
    pub pivot: (f64, f64),
}

impl AffineParams {
    pub fn identity(pivot: (f64, f64)) -> Self {
        Self {
            scale: 1.0,
            angle: 0.0,
            tx: 0.0,
            ty: 0.0,
            pivot,
        }
    }

    /// Identity pivoted on the centre of a `width × height` image.
    pub fn centered(width: usize, height: usize) -> Self {
        Self::identity(((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0))
    }

    /// Moment-matching initial guess: maps the centroid of `current` onto the
    /// centroid of `prior` and matches their areas. Falls back to the
    /// identity when either mask is empty.
    pub fn from_moments(current: &ScalarField2D, prior: &ScalarField2D, pivot: (f64, f64)) -> Self {
        let moments = |m: &ScalarField2D| {
            let (mut n, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for y in 0..m.height() {
                for x in 0..m.width() {
                    if m.get(x, y) > 0.5 {
                        n += 1.0;
                        sx += x as f64;
                        sy += y as f64;
                    }
                }
            }
            (n, sx / n, sy / n)
        };
        let (na, ax, ay) = moments(current);
        let (nb, bx, by) = moments(prior);
        if na == 0.0 || nb == 0.0 {
            return Self::identity(pivot);
        }
        let scale = (nb / na).sqrt();
        Self {
            scale,
            angle: 0.0,
            tx: bx - pivot.0 - scale * (ax - pivot.0),
            ty: by - pivot.1 - scale * (ay - pivot.1),
            pivot,
        }
    }

    pub fn inverse(&self) -> Self {
        let s = 1.0 / self.scale;
        let (sin, cos) = (-self.angle).sin_cos();
        Self {
            scale: s,
            angle: -self.angle,
            tx: -s * (cos * self.tx - sin * self.ty),
            ty: -s * (sin * self.tx + cos * self.ty),
            pivot: self.pivot,
        }
    }
}

pub fn apply_affine(a: &AffineParams, x: f64, y: f64) -> (f64, f64) {
    let (sin, cos) = a.angle.sin_cos();
    let (dx, dy) = (x - a.pivot.0, y - a.pivot.1);
    (
        a.scale * (cos * dx - sin * dy) + a.pivot.0 + a.tx,
        a.scale * (sin * dx + cos * dy) + a.pivot.1 + a.ty,
    )
}

/// `Φ_M(A(x))` sampled on the grid of `phi`, plus the residual `S·Φ − Φ_M∘A`.
fn residual(phi: &ScalarField2D, model: &ShapeModel, a: &AffineParams) -> ScalarField2D {
    let (w, h) = phi.dims();
    ScalarField2D::from_fn(w, h, |x, y| {
        let (u, v) = apply_affine(a, x as f64, y as f64);
        a.scale * phi.get(x, y) - bilinear_sample(&model.phi_m, u, v)
    })
}

/// `Σ δ_α(Φ)·(S·Φ − Φ_M(A(x)))²`.
pub fn shape_energy(phi: &ScalarField2D, model: &ShapeModel, a: &AffineParams, reg: RegularizationParams) -> f64 {
    residual(phi, model, a)
        .values()
        .iter()
        .zip(phi.values())
        .map(|(r, &p)| dirac(p, reg) * r * r)
        .sum()
}

/// `2S·(S·Φ − Φ_M(A(x)))`; the flow multiplies by `δ_α(Φ)` itself.
pub fn shape_force(phi: &ScalarField2D, model: &ShapeModel, a: &AffineParams, _reg: RegularizationParams) -> ScalarField2D {
    let s2 = 2.0 * a.scale;
    residual(phi, model, a).map(|r| s2 * r)
}

/// Per-parameter step sizes of [`transform_step`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformRates {
    pub translation: f64,
    pub scale: f64,
    pub angle: f64,
}

impl Default for TransformRates {
    fn default() -> Self {
        Self {
            translation: 0.5,
            scale: 0.01,
            angle: 0.01,
        }
    }
}

/// Outcome of one alignment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformUpdate {
    pub affine: AffineParams,
    /// Gradient of the band-normalized energy: (scale, angle, tx, ty).
    pub gradient: [f64; 4],
    /// Set when the step would have made the scale non-positive.
    pub scale_clamped: bool,
}

/// Shape energy divided by the band mass `Σ δ_α(Φ)`. The normalizer does not
/// depend on `A`, so the minimizer is unchanged, but step sizes no longer
/// scale with the contour length.
pub fn normalized_shape_energy(phi: &ScalarField2D, model: &ShapeModel, a: &AffineParams, reg: RegularizationParams) -> f64 {
    let mass: f64 = phi.values().iter().map(|&p| dirac(p, reg)).sum();
    shape_energy(phi, model, a, reg) / mass
}

/// Band-weighted gradient and Gauss-Newton curvature of the normalized energy
/// along one parameter, from residuals at `θ ± h`.
fn gauss_newton_1d(phi: &ScalarField2D, model: &ShapeModel, plus: &AffineParams, minus: &AffineParams, h: f64, reg: RegularizationParams) -> (f64, f64) {
    let rp = residual(phi, model, plus);
    let rm = residual(phi, model, minus);
    let (mut mass, mut grad, mut curv) = (0.0, 0.0, 0.0);
    for ((&p, &a), &b) in phi.values().iter().zip(rp.values()).zip(rm.values()) {
        let d = dirac(p, reg);
        let j = (a - b) / (2.0 * h);
        mass += d;
        grad += d * (a * a - b * b) / (2.0 * h);
        curv += 2.0 * d * j * j;
    }
    (grad / mass, curv / mass)
}

/// One gradient-descent step on the alignment parameters.
///
/// Gradients are central finite differences of [`normalized_shape_energy`]
/// with steps of 1e-3 for scale and angle and 1e-2 px for translation.
/// Scale and angle gradients are divided by their Gauss-Newton curvature
/// `2·mean δ·(∂r/∂θ)²`, so their rates are fractions of a Newton step.
pub fn transform_step(
    phi: &ScalarField2D,
    model: &ShapeModel,
    a: &AffineParams,
    reg: RegularizationParams,
    rates: &TransformRates,
) -> TransformUpdate {
    let hs = 1e-3;
    let ht = 1e-2;
    let (g_scale, c_scale) = gauss_newton_1d(
        phi,
        model,
        &AffineParams { scale: a.scale + hs, ..*a },
        &AffineParams { scale: a.scale - hs, ..*a },
        hs,
        reg,
    );
    let (g_angle, c_angle) = gauss_newton_1d(
        phi,
        model,
        &AffineParams { angle: a.angle + hs, ..*a },
        &AffineParams { angle: a.angle - hs, ..*a },
        hs,
        reg,
    );
    let (g_tx, _) = gauss_newton_1d(phi, model, &AffineParams { tx: a.tx + ht, ..*a }, &AffineParams { tx: a.tx - ht, ..*a }, ht, reg);
    let (g_ty, _) = gauss_newton_1d(phi, model, &AffineParams { ty: a.ty + ht, ..*a }, &AffineParams { ty: a.ty - ht, ..*a }, ht, reg);

    let mut next = AffineParams {
        scale: a.scale - rates.scale * g_scale / c_scale.max(MIN_CURVATURE),
        angle: a.angle - rates.angle * g_angle / c_angle.max(MIN_CURVATURE),
        tx: a.tx - rates.translation * g_tx,
        ty: a.ty - rates.translation * g_ty,
        pivot: a.pivot,
    };
    let scale_clamped = next.scale <= 0.0;
    if scale_clamped {
        next.scale = MIN_SCALE;
    }
    TransformUpdate {
        affine: next,
        gradient: [g_scale, g_angle, g_tx, g_ty],
        scale_clamped,
    }
}

/// Prior plus its current alignment, threaded through the level-set flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeContext {
    pub model: ShapeModel,
    pub affine: AffineParams,
    pub rates: TransformRates,
    /// Re-estimate `affine` after every flow step.
    pub estimate_transform: bool,
}

impl ShapeContext {
    pub fn new(model: ShapeModel, affine: AffineParams) -> Self {
        Self {
            model,
            affine,
            rates: TransformRates::default(),
            estimate_transform: true,
        }
    }
}
