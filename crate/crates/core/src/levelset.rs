//! Variational level-set segmentation.
//!
//! The contour is the zero level of a signed distance function `Φ`
//! (positive inside the object). It evolves by explicit gradient flow on
//!
//! ```text
//! E(Φ, A) = β·E_shape(Φ, A) + μ·E_smooth(Φ) − λ·E_data(Φ)
//! ```
//!
//! where `E_smooth` is the edge-weighted contour length, `E_data` the
//! log-likelihood of the object/background probability maps, and `E_shape`
//! the mismatch with an affinely aligned prior (see [`crate::shape`]). The
//! data term enters with a minus sign: it is a log-likelihood and the flow
//! climbs it.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, dirac, heaviside, RegularizationParams, ScalarField2D};
use crate::sdf;
use crate::shape::{self, ShapeContext};

/// Weights and schedule of the level-set evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    /// Smoothness (weighted length) weight `μ`.
    pub mu: f64,
    /// Data (region log-likelihood) weight `λ`.
    pub lambda: f64,
    /// Shape prior weight `β`; zero disables the prior.
    pub beta: f64,
    pub reg: RegularizationParams,
    pub dt: f64,
    pub max_iters: usize,
    pub reinit_every: usize,
    /// Largest fraction of changed mask pixels that still counts as "unchanged"
    /// in the convergence check.
    pub converge_tol: f64,
    pub converge_every: usize,
    pub converge_patience: usize,
    /// Probabilities are clamped to `[p_floor, 1 − p_floor]` before logs.
    pub p_floor: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self {
            mu: 0.2,
            lambda: 1.0,
            beta: 1.0,
            reg: RegularizationParams::default(),
            dt: 0.2,
            max_iters: 200,
            reinit_every: 25,
            converge_tol: 0.0,
            converge_every: 10,
            converge_patience: 2,
            p_floor: 1e-4,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 10] = [
            ("mu", self.mu >= 0.0 && self.mu.is_finite()),
            ("lambda", self.lambda >= 0.0 && self.lambda.is_finite()),
            ("beta", self.beta >= 0.0 && self.beta.is_finite()),
            ("reg.alpha", self.reg.alpha > 0.0 && self.reg.alpha.is_finite()),
            ("dt", self.dt > 0.0 && self.dt.is_finite()),
            ("reinit_every", self.reinit_every > 0),
            ("converge_tol", self.converge_tol >= 0.0),
            ("converge_every", self.converge_every > 0),
            ("converge_patience", self.converge_patience > 0),
            ("p_floor", self.p_floor > 0.0 && self.p_floor < 0.5),
        ];
        for (field, ok) in checks {
            if !ok {
                return Err(Error::config(field, "out of range"));
            }
        }
        Ok(())
    }
}

/// The evolving signed distance function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetState {
    pub phi: ScalarField2D,
    pub iteration: usize,
    pub last_energy: Option<f64>,
}

impl LevelSetState {
    pub fn new(phi: ScalarField2D) -> Self {
        Self {
            phi,
            iteration: 0,
            last_energy: None,
        }
    }
}

/// Object and background probability maps feeding the data term.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionProbabilities {
    pub p_object: ScalarField2D,
    pub p_background: ScalarField2D,
}

impl RegionProbabilities {
    /// From a single object-probability map: `P_O = clamp(p)`, `P_B = 1 − P_O`.
    pub fn from_object_map(map: &ScalarField2D, p_floor: f64) -> Self {
        let p_object = map.map(|p| p.clamp(p_floor, 1.0 - p_floor));
        let p_background = p_object.map(|p| 1.0 - p);
        Self {
            p_object,
            p_background,
        }
    }

    /// Independent maps, each clamped.
    pub fn new(p_object: &ScalarField2D, p_background: &ScalarField2D, p_floor: f64) -> Result<Self> {
        p_object.ensure_same_dims(p_background)?;
        Ok(Self {
            p_object: p_object.map(|p| p.clamp(p_floor, 1.0 - p_floor)),
            p_background: p_background.map(|p| p.clamp(p_floor, 1.0 - p_floor)),
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            p_object: self.p_background.clone(),
            p_background: self.p_object.clone(),
        }
    }

    /// Pixel-wise `ln P_O − ln P_B`.
    pub fn log_ratio(&self) -> ScalarField2D {
        self.p_object
            .zip_map(&self.p_background, |o, b| o.ln() - b.ln())
            .expect("constructed with equal dims")
    }
}

/// Pixel-wise data force `λ·(ln P_O − ln P_B)`.
pub fn data_force(probs: &RegionProbabilities, lambda: f64) -> ScalarField2D {
    probs.log_ratio().map(|r| lambda * r)
}

fn is_binary(mask: &ScalarField2D) -> bool {
    mask.values().iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Exact signed distance of a binary mask, positive where `mask == 1`.
pub fn init_from_mask(mask: &ScalarField2D) -> Result<LevelSetState> {
    if !is_binary(mask) {
        return Err(Error::DegenerateMask("mask values must be 0 or 1".into()));
    }
    let inside: Vec<bool> = mask.values().iter().map(|&v| v == 1.0).collect();
    let count = inside.iter().filter(|&&b| b).count();
    if count == 0 || count == inside.len() {
        return Err(Error::DegenerateMask(format!(
            "mask has {count} of {} pixels set; both classes are required",
            inside.len()
        )));
    }
    let phi = sdf::mask_signed_distance(&inside, mask.width(), mask.height());
    Ok(LevelSetState::new(phi))
}

/// Signed distance to a centred circle of radius `min(w, h)/4`.
pub fn centered_circle(width: usize, height: usize) -> ScalarField2D {
    let r = width.min(height) as f64 / 4.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    ScalarField2D::from_fn(width, height, |x, y| {
        r - ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt()
    })
}

/// Threshold `p` at 0.5 and take the signed distance of the result, falling
/// back to [`centered_circle`] when the threshold yields a single class.
pub fn init_from_probability(p: &ScalarField2D) -> LevelSetState {
    let mask = threshold(p, 0.5);
    match init_from_mask(&mask) {
        Ok(state) => state,
        Err(_) => LevelSetState::new(centered_circle(p.width(), p.height())),
    }
}

/// `1` where `p ≥ level`, else `0`.
pub fn threshold(p: &ScalarField2D, level: f64) -> ScalarField2D {
    p.map(|v| if v >= level { 1.0 } else { 0.0 })
}

/// Discrete `Σ δ_α(Φ)·b·|∇Φ|` over all pixels.
pub fn smoothness_energy(state: &LevelSetState, weight: &ScalarField2D, params: &EnergyParams) -> Result<f64> {
    state.phi.ensure_same_dims(weight)?;
    let grad = grid::gradient_magnitude(&state.phi)?;
    Ok(state
        .phi
        .values()
        .iter()
        .zip(weight.values())
        .zip(grad.values())
        .map(|((&phi, &b), &g)| dirac(phi, params.reg) * b * g)
        .sum())
}

/// Discrete `Σ H_α(Φ)·ln P_O + (1 − H_α(Φ))·ln P_B`; a log-likelihood, never positive.
pub fn data_energy(state: &LevelSetState, probs: &RegionProbabilities, params: &EnergyParams) -> Result<f64> {
    state.phi.ensure_same_dims(&probs.p_object)?;
    Ok(state
        .phi
        .values()
        .iter()
        .zip(probs.p_object.values())
        .zip(probs.p_background.values())
        .map(|((&phi, &po), &pb)| {
            let h = heaviside(phi, params.reg);
            h * po.ln() + (1.0 - h) * pb.ln()
        })
        .sum())
}

/// Per-term energies; `total = β·shape + μ·smooth − λ·data`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub shape: f64,
    pub smooth: f64,
    pub data: f64,
    pub total: f64,
}

fn shape_active<'a>(shape_ctx: Option<&'a ShapeContext>, params: &EnergyParams) -> Option<&'a ShapeContext> {
    shape_ctx.filter(|_| params.beta > 0.0)
}

pub fn total_energy(
    state: &LevelSetState,
    weight: &ScalarField2D,
    probs: &RegionProbabilities,
    shape_ctx: Option<&ShapeContext>,
    params: &EnergyParams,
) -> Result<EnergyBreakdown> {
    let smooth = smoothness_energy(state, weight, params)?;
    let data = data_energy(state, probs, params)?;
    let shape = match shape_active(shape_ctx, params) {
        Some(ctx) => shape::shape_energy(&state.phi, &ctx.model, &ctx.affine, params.reg),
        None => 0.0,
    };
    let mut total = 0.0;
    if params.beta != 0.0 {
        total += params.beta * shape;
    }
    if params.mu != 0.0 {
        total += params.mu * smooth;
    }
    if params.lambda != 0.0 {
        total -= params.lambda * data;
    }
    Ok(EnergyBreakdown {
        shape,
        smooth,
        data,
        total,
    })
}

/// Largest explicit time step recommended for the given terms:
/// `0.25 / max(μ·max b, λ·max|ln P_O − ln P_B|, β·max|shape force|)`.
pub fn cfl_time_step(
    state: &LevelSetState,
    weight: &ScalarField2D,
    probs: &RegionProbabilities,
    shape_ctx: Option<&ShapeContext>,
    params: &EnergyParams,
) -> f64 {
    let smooth = params.mu * weight.max().max(0.0);
    let data = params.lambda * probs.log_ratio().values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let shape = match shape_active(shape_ctx, params) {
        Some(ctx) => {
            let f = shape::shape_force(&state.phi, &ctx.model, &ctx.affine, params.reg);
            params.beta * f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()))
        }
        None => 0.0,
    };
    let bound = smooth.max(data).max(shape);
    if bound > 0.0 {
        0.25 / bound
    } else {
        f64::INFINITY
    }
}

/// One explicit Euler step of
/// `Φ_t = δ_α(Φ)·[μ·div(b∇Φ/|∇Φ|) + λ·(ln P_O − ln P_B) − β·2S·(SΦ − Φ_M(A(x)))]`.
pub fn evolve_step(
    state: &LevelSetState,
    weight: &ScalarField2D,
    probs: &RegionProbabilities,
    shape_ctx: Option<&ShapeContext>,
    params: &EnergyParams,
) -> Result<LevelSetState> {
    let phi = &state.phi;
    phi.ensure_same_dims(weight)?;
    phi.ensure_same_dims(&probs.p_object)?;
    let unstable = |term| Error::NumericalInstability {
        term,
        iteration: state.iteration,
    };

    let n = phi.len();
    let mut force = vec![0.0; n];
    if params.mu != 0.0 {
        let k = grid::curvature(phi, weight)?;
        if !k.is_finite() {
            return Err(unstable("smoothness"));
        }
        for (f, v) in force.iter_mut().zip(k.values()) {
            *f += params.mu * v;
        }
    }
    if params.lambda != 0.0 {
        let d = data_force(probs, params.lambda);
        if !d.is_finite() {
            return Err(unstable("data"));
        }
        for (f, v) in force.iter_mut().zip(d.values()) {
            *f += v;
        }
    }
    if let Some(ctx) = shape_active(shape_ctx, params) {
        let s = shape::shape_force(phi, &ctx.model, &ctx.affine, params.reg);
        if !s.is_finite() {
            return Err(unstable("shape"));
        }
        for (f, v) in force.iter_mut().zip(s.values()) {
            *f -= params.beta * v;
        }
    }

    let mut next = phi.clone();
    for (p, f) in next.values_mut().iter_mut().zip(&force) {
        *p += params.dt * dirac(*p, params.reg) * f;
    }
    if !next.is_finite() {
        return Err(unstable("update"));
    }
    Ok(LevelSetState {
        phi: next,
        iteration: state.iteration + 1,
        last_energy: state.last_energy,
    })
}

/// Replace `Φ` by the signed distance to its own zero level, keeping signs.
pub fn reinitialize(state: &LevelSetState) -> Result<LevelSetState> {
    let phi = sdf::redistance(&state.phi)
        .ok_or_else(|| Error::DegenerateMask("level set has no zero crossing".into()))?;
    Ok(LevelSetState {
        phi,
        iteration: state.iteration,
        last_energy: state.last_energy,
    })
}

/// Binary mask of `Φ ≥ 0`.
pub fn extract_mask(state: &LevelSetState) -> ScalarField2D {
    threshold(&state.phi, 0.0)
}

/// Per-iteration energies of an [`evolve`] run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub entries: Vec<(usize, EnergyBreakdown)>,
}

impl EnergyTrace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn totals(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, e)| e.total).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,shape,smooth,data,total")?;
        for (it, e) in &self.entries {
            writeln!(out, "{it},{},{},{},{}", e.shape, e.smooth, e.data, e.total)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

fn has_zero_crossing(phi: &ScalarField2D) -> bool {
    let mut pos = false;
    let mut neg = false;
    for &v in phi.values() {
        if v >= 0.0 {
            pos = true;
        } else {
            neg = true;
        }
        if pos && neg {
            return true;
        }
    }
    false
}

/// Run [`evolve_step`] up to `max_iters` times.
///
/// Reinitializes every `reinit_every` steps (skipped once the contour has
/// vanished), re-estimates the prior alignment after every step when the
/// shape term is active, and stops early once the extracted mask has stayed
/// unchanged for `converge_patience` consecutive checks.
pub fn evolve(
    state: &LevelSetState,
    weight: &ScalarField2D,
    probs: &RegionProbabilities,
    mut shape_ctx: Option<&mut ShapeContext>,
    params: &EnergyParams,
) -> Result<(LevelSetState, EnergyTrace)> {
    params.validate()?;
    let mut trace = EnergyTrace::default();
    let mut current = state.clone();
    if params.max_iters == 0 {
        return Ok((current, trace));
    }
    let mut last_mask = extract_mask(&current);
    let mut stable_checks = 0;

    for step in 1..=params.max_iters {
        current = evolve_step(&current, weight, probs, shape_ctx.as_deref(), params)?;
        if step % params.reinit_every == 0 && has_zero_crossing(&current.phi) {
            current = reinitialize(&current)?;
        }
        if params.beta > 0.0 {
            if let Some(ctx) = shape_ctx.as_deref_mut() {
                if ctx.estimate_transform {
                    ctx.affine = shape::transform_step(&current.phi, &ctx.model, &ctx.affine, params.reg, &ctx.rates).affine;
                }
            }
        }
        let energy = total_energy(&current, weight, probs, shape_ctx.as_deref(), params)?;
        current.last_energy = Some(energy.total);
        trace.entries.push((current.iteration, energy));

        if step % params.converge_every == 0 {
            let mask = extract_mask(&current);
            let changed = mask
                .values()
                .iter()
                .zip(last_mask.values())
                .filter(|(a, b)| a != b)
                .count();
            if changed as f64 <= params.converge_tol * mask.len() as f64 {
                stable_checks += 1;
            } else {
                stable_checks = 0;
            }
            last_mask = mask;
            if stable_checks >= params.converge_patience {
                log::debug!("level set converged after {step} iterations");
                break;
            }
        }
    }
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use proptest::prelude::*;

    fn disc_mask(n: usize, cx: f64, cy: f64, r: f64) -> ScalarField2D {
        ScalarField2D::from_fn(n, n, |x, y| {
            if (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r {
                1.0
            } else {
                0.0
            }
        })
    }

    fn circle_sdf(n: usize, cx: f64, cy: f64, r: f64) -> ScalarField2D {
        ScalarField2D::from_fn(n, n, |x, y| {
            r - ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt()
        })
    }

    fn band_gradient_error(phi: &ScalarField2D, band: f64) -> f64 {
        let g = grid::gradient_magnitude(phi).unwrap();
        let (w, h) = phi.dims();
        let mut errs = Vec::new();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                if phi.get(x, y).abs() < band {
                    errs.push((g.get(x, y) - 1.0).abs());
                }
            }
        }
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        errs[errs.len() / 2]
    }

    #[test]
    fn mask_init_sign_convention() {
        let mut m = ScalarField2D::new(9, 9);
        m.set(4, 4, 1.0);
        let s = init_from_mask(&m).unwrap();
        assert!(s.phi.get(4, 4) > 0.0);
        for (x, y) in [(3, 4), (5, 4), (4, 3), (4, 5)] {
            let v = s.phi.get(x, y);
            assert!(v < 0.0 && v.abs() <= 1.5);
        }
    }

    #[test]
    fn mask_init_disc_centre_matches_brute_force() {
        let m = disc_mask(64, 32.0, 32.0, 10.0);
        let s = init_from_mask(&m).unwrap();
        // brute force: distance from the centre to the nearest background pixel
        let mut nearest = f64::INFINITY;
        for y in 0..64 {
            for x in 0..64 {
                if m.get(x, y) == 0.0 {
                    nearest = nearest.min(((x as f64 - 32.0).powi(2) + (y as f64 - 32.0).powi(2)).sqrt());
                }
            }
        }
        assert_eq!(s.phi.get(32, 32), nearest - 0.5);
        assert!((s.phi.get(32, 32) - 10.0).abs() < 0.5);
    }

    #[test]
    fn complement_negates() {
        let m = disc_mask(40, 18.0, 21.0, 7.5);
        let a = init_from_mask(&m).unwrap();
        let b = init_from_mask(&m.map(|v| 1.0 - v)).unwrap();
        for (p, q) in a.phi.values().iter().zip(b.phi.values()) {
            assert!((p + q).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_masks_rejected() {
        assert!(matches!(init_from_mask(&ScalarField2D::new(8, 8)), Err(Error::DegenerateMask(_))));
        assert!(matches!(
            init_from_mask(&ScalarField2D::filled(8, 8, 1.0)),
            Err(Error::DegenerateMask(_))
        ));
    }

    #[test]
    fn probability_init() {
        let m = disc_mask(48, 20.0, 25.0, 9.0);
        assert_eq!(init_from_probability(&m), init_from_mask(&m).unwrap());

        let flat = ScalarField2D::filled(48, 32, 0.2);
        let s = init_from_probability(&flat);
        assert_eq!(s.phi, centered_circle(48, 32));

        let p = m.map(|v| if v == 1.0 { 0.9 } else { 0.1 });
        let s = init_from_probability(&p);
        let mask = extract_mask(&s);
        assert_eq!(mask, m);
        // every sign change sits within one pixel of the analytic boundary
        for y in 0..47 {
            for x in 0..47 {
                let here = s.phi.get(x, y) >= 0.0;
                for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                    if (s.phi.get(nx, ny) >= 0.0) != here {
                        let mx = (x + nx) as f64 / 2.0;
                        let my = (y + ny) as f64 / 2.0;
                        let d = ((mx - 20.0).powi(2) + (my - 25.0).powi(2)).sqrt();
                        assert!((d - 9.0).abs() < 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn smoothness_energy_is_circumference() {
        let p = EnergyParams::default();
        let ones = ScalarField2D::filled(128, 128, 1.0);
        for r in [8.0, 16.0] {
            let s = LevelSetState::new(circle_sdf(128, 63.5, 63.5, r));
            let e = smoothness_energy(&s, &ones, &p).unwrap();
            let expected = 2.0 * std::f64::consts::PI * r;
            assert!((e - expected).abs() < 0.1 * expected, "r={r}: {e} vs {expected}");
            let twice = smoothness_energy(&s, &ones.map(|v| 3.0 * v), &p).unwrap();
            assert!((twice - 3.0 * e).abs() < 1e-9 * e);
        }
        // far from any interface only the Dirac tail contributes: each pixel
        // adds at most δ(50α)·|∇Φ|
        let far = LevelSetState::new(ScalarField2D::from_fn(128, 128, |x, _| -80.0 - x as f64));
        let e = smoothness_energy(&far, &ones, &p).unwrap();
        let tail = 128.0 * 128.0 * dirac(50.0 * p.reg.alpha, p.reg);
        assert!(e > 0.0 && e < tail);
        assert!(e < 1e-3 * 128.0 * 128.0);
    }

    #[test]
    fn data_energy_cases() {
        let p = EnergyParams::default();
        let m = disc_mask(32, 15.0, 16.0, 8.0);
        let s = init_from_mask(&m).unwrap();
        let probs = RegionProbabilities::from_object_map(&m, p.p_floor);
        let n = m.len() as f64;
        let best = n * (1.0 - p.p_floor).ln();
        let e = data_energy(&s, &probs, &p).unwrap();
        assert!(e <= best);
        // the arctan Heaviside only commits fully as |Φ| grows
        let steep = LevelSetState::new(s.phi.map(|v| 1e6 * v));
        let e = data_energy(&steep, &probs, &p).unwrap();
        assert!(e <= best && e > best - 1e-3 * n, "{e} vs {best}");

        let half = RegionProbabilities::from_object_map(&ScalarField2D::filled(32, 32, 0.5), p.p_floor);
        let e = data_energy(&s, &half, &p).unwrap();
        assert!((e - n * 0.5f64.ln()).abs() < 1e-9);

        let noisy = ScalarField2D::from_fn(32, 32, |x, y| ((x * 7 + y * 13) % 10) as f64 / 10.0);
        let probs = RegionProbabilities::from_object_map(&noisy, p.p_floor);
        let neg = LevelSetState::new(s.phi.map(|v| -v));
        let a = data_energy(&neg, &probs, &p).unwrap();
        let b = data_energy(&s, &probs.swapped(), &p).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn total_energy_combines_terms() {
        let m = disc_mask(32, 15.0, 16.0, 8.0);
        let s = init_from_mask(&m).unwrap();
        let w = ScalarField2D::filled(32, 32, 1.0);
        let probs = RegionProbabilities::from_object_map(&m.map(|v| 0.2 + 0.6 * v), 1e-4);
        let only_data = EnergyParams {
            mu: 0.0,
            beta: 0.0,
            lambda: 1.0,
            ..Default::default()
        };
        let e = total_energy(&s, &w, &probs, None, &only_data).unwrap();
        assert_eq!(e.total, -e.data);
        let none = EnergyParams {
            mu: 0.0,
            beta: 0.0,
            lambda: 0.0,
            ..Default::default()
        };
        assert_eq!(total_energy(&s, &w, &probs, None, &none).unwrap().total, 0.0);

        let prior = crate::shape::ShapeModel::from_mask(&disc_mask(32, 17.0, 16.0, 7.0)).unwrap();
        let ctx = ShapeContext::new(prior, crate::shape::AffineParams::identity((15.5, 15.5)));
        let all = EnergyParams {
            mu: 0.3,
            lambda: 0.7,
            beta: 1.3,
            ..Default::default()
        };
        let e = total_energy(&s, &w, &probs, Some(&ctx), &all).unwrap();
        let by_hand = 1.3 * shape::shape_energy(&s.phi, &ctx.model, &ctx.affine, all.reg)
            + 0.3 * smoothness_energy(&s, &w, &all).unwrap()
            - 0.7 * data_energy(&s, &probs, &all).unwrap();
        assert!((e.total - by_hand).abs() < 1e-9);
    }

    #[test]
    fn zero_force_leaves_phi_unchanged() {
        let s = init_from_mask(&disc_mask(32, 15.0, 16.0, 8.0)).unwrap();
        let w = ScalarField2D::filled(32, 32, 1.0);
        let probs = RegionProbabilities::from_object_map(&ScalarField2D::filled(32, 32, 0.5), 1e-4);
        let params = EnergyParams {
            mu: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        let next = evolve_step(&s, &w, &probs, None, &params).unwrap();
        assert_eq!(next.phi, s.phi);
        assert_eq!(next.iteration, 1);

        let all_zero = EnergyParams {
            mu: 0.0,
            lambda: 0.0,
            beta: 0.0,
            max_iters: 30,
            ..Default::default()
        };
        let noisy = RegionProbabilities::from_object_map(&ScalarField2D::from_fn(32, 32, |x, _| x as f64 / 31.0), 1e-4);
        let (out, trace) = evolve(&s, &w, &noisy, None, &all_zero).unwrap();
        assert_eq!(out.phi, s.phi);
        assert!(!trace.is_empty());
    }

    #[test]
    fn data_flow_recovers_offset_disc() {
        let n = 64;
        let target = disc_mask(n, 32.0, 32.0, 12.0);
        let probs = RegionProbabilities::from_object_map(&target, 1e-4);
        let start = init_from_mask(&disc_mask(n, 40.0, 32.0, 12.0)).unwrap();
        let w = ScalarField2D::filled(n, n, 1.0);
        let params = EnergyParams {
            mu: 0.0,
            beta: 0.0,
            lambda: 1.0,
            max_iters: 200,
            ..Default::default()
        };
        let mut state = start;
        for i in 1..=params.max_iters {
            state = evolve_step(&state, &w, &probs, None, &params).unwrap();
            if i % params.reinit_every == 0 {
                state = reinitialize(&state).unwrap();
            }
        }
        let d = metrics::dice(&extract_mask(&state), &target).unwrap();
        assert!(d >= 0.95, "dice {d}");
    }

    #[test]
    fn reinitialization() {
        let exact = circle_sdf(64, 30.2, 33.7, 14.0);
        let s = LevelSetState::new(exact.clone());
        let r = reinitialize(&s).unwrap();
        for (a, b) in exact.values().iter().zip(r.phi.values()) {
            if a.abs() < 10.0 {
                assert!((a - b).abs() < 0.1);
            }
        }
        let scaled = LevelSetState::new(exact.map(|v| 3.0 * v));
        let r = reinitialize(&scaled).unwrap();
        assert!(band_gradient_error(&r.phi, 5.0) < 0.05);
        assert!(band_gradient_error(&scaled.phi, 5.0) > 1.0);

        let m = disc_mask(64, 30.0, 31.0, 11.0);
        let s = init_from_mask(&m).unwrap();
        let r = reinitialize(&s).unwrap();
        assert_eq!(metrics::dice(&extract_mask(&r), &m).unwrap(), 1.0);

        let flat = LevelSetState::new(ScalarField2D::filled(10, 10, -1.0));
        assert!(matches!(reinitialize(&flat), Err(Error::DegenerateMask(_))));
    }

    #[test]
    fn extract_mask_cases() {
        assert!(extract_mask(&LevelSetState::new(ScalarField2D::filled(5, 5, -1.0)))
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let s = LevelSetState::new(circle_sdf(64, 31.5, 31.5, 10.0));
        let area = extract_mask(&s).sum();
        let expected = std::f64::consts::PI * 100.0;
        assert!((area - expected).abs() < 0.05 * expected);
    }

    #[test]
    fn evolve_with_zero_iterations_is_identity() {
        let s = init_from_mask(&disc_mask(32, 15.0, 16.0, 8.0)).unwrap();
        let w = ScalarField2D::filled(32, 32, 1.0);
        let probs = RegionProbabilities::from_object_map(&ScalarField2D::filled(32, 32, 0.7), 1e-4);
        let params = EnergyParams {
            max_iters: 0,
            ..Default::default()
        };
        let (out, trace) = evolve(&s, &w, &probs, None, &params).unwrap();
        assert_eq!(out, s);
        assert!(trace.is_empty());
    }

    #[test]
    fn non_finite_input_is_reported() {
        let mut phi = circle_sdf(16, 8.0, 8.0, 4.0);
        phi.set(3, 3, f64::NAN);
        let s = LevelSetState::new(phi);
        let w = ScalarField2D::filled(16, 16, 1.0);
        let probs = RegionProbabilities::from_object_map(&ScalarField2D::filled(16, 16, 0.6), 1e-4);
        let err = evolve_step(&s, &w, &probs, None, &EnergyParams::default()).unwrap_err();
        assert!(matches!(err, Error::NumericalInstability { term: "smoothness", .. }));
    }

    #[test]
    fn trace_csv_header() {
        let mut t = EnergyTrace::default();
        t.entries.push((
            1,
            EnergyBreakdown {
                shape: 0.0,
                smooth: 1.5,
                data: -2.0,
                total: 2.3,
            },
        ));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,shape,smooth,data,total\n1,0,1.5,-2,2.3\n");
    }

    fn blob_strategy() -> impl Strategy<Value = ScalarField2D> {
        prop::collection::vec((2usize..22, 2usize..22, 1.0f64..6.0), 1..4).prop_map(|discs| {
            ScalarField2D::from_fn(24, 24, |x, y| {
                let inside = discs.iter().any(|&(cx, cy, r)| {
                    (x as f64 - cx as f64).powi(2) + (y as f64 - cy as f64).powi(2) <= r * r
                });
                if inside {
                    1.0
                } else {
                    0.0
                }
            })
        })
    }

    proptest! {
        #[test]
        fn mask_round_trip(mask in blob_strategy()) {
            let s = init_from_mask(&mask).unwrap();
            prop_assert_eq!(extract_mask(&s), mask);
        }

        #[test]
        fn sign_swap_negates_data_force(values in prop::collection::vec(0.0f64..1.0, 36)) {
            let po = ScalarField2D::from_vec(6, 6, values.clone()).unwrap();
            let pb = ScalarField2D::from_vec(6, 6, values.iter().rev().copied().collect()).unwrap();
            let probs = RegionProbabilities::new(&po, &pb, 1e-4).unwrap();
            let a = data_force(&probs, 1.7);
            let b = data_force(&probs.swapped(), 1.7);
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x + y).abs() < 1e-12);
            }
        }
    }
}
