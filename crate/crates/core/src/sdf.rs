//! Signed distance computations.
//!
//! Two entry points: an exact Euclidean transform for binary masks, where the
//! interface sits halfway between pixels of different class, and a sweeping
//! redistancer for real-valued level-set functions, where the interface is
//! the linearly interpolated zero crossing.

use crate::grid::ScalarField2D;

const INF: f64 = 1e20;

/// Felzenszwalb–Huttenlocher 1D squared distance transform, in place.
fn edt_1d(f: &mut [f64], v: &mut [usize], z: &mut [f64], out: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
    f.copy_from_slice(out);
}

/// Squared Euclidean distance from every pixel to the nearest pixel where
/// `source` is true.
pub fn squared_distance_to(width: usize, height: usize, source: &[bool]) -> Vec<f64> {
    let mut grid: Vec<f64> = source.iter().map(|&s| if s { 0.0 } else { INF }).collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    let mut out = vec![0.0; n];

    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        edt_1d(&mut f[..height], &mut v, &mut z, &mut out[..height]);
        for y in 0..height {
            grid[y * width + x] = f[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&mut f[..width], &mut v, &mut z, &mut out[..width]);
        row.copy_from_slice(&f[..width]);
    }
    grid
}

/// Signed distance of a binary mask, positive inside.
///
/// Inside pixels get `d_out − ½` where `d_out` is the distance to the
/// nearest background pixel centre; background pixels get the mirror value.
/// The caller guarantees both classes are present.
pub fn mask_signed_distance(inside: &[bool], width: usize, height: usize) -> ScalarField2D {
    let outside: Vec<bool> = inside.iter().map(|&b| !b).collect();
    let to_out = squared_distance_to(width, height, &outside);
    let to_in = squared_distance_to(width, height, inside);
    let values = inside
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            if b {
                to_out[i].sqrt() - 0.5
            } else {
                0.5 - to_in[i].sqrt()
            }
        })
        .collect();
    ScalarField2D::from_vec(width, height, values).expect("length matches")
}

/// Redistance `phi` to the zero crossing of its own linear interpolation.
///
/// Pixels adjacent to a sign change are seeded with their distance to the
/// local interface line and the foot point on it. The remaining pixels are
/// filled by alternating diagonal sweeps that propagate the closest foot
/// point from already-visited neighbours. Returns `None` when there is no
/// sign change. `Φ ≥ 0` counts as inside.
pub fn redistance(phi: &ScalarField2D) -> Option<ScalarField2D> {
    let (w, h) = phi.dims();
    let inside = |x: usize, y: usize| phi.get(x, y) >= 0.0;
    let mut dist = vec![INF; w * h];
    let mut foot = vec![(f64::NAN, f64::NAN); w * h];
    // index of the seed pixel whose foot point each pixel currently uses
    let mut owner = vec![usize::MAX; w * h];
    let mut seeded = false;
    let (gx, gy) = match crate::grid::gradient(phi) {
        Ok(g) => g,
        Err(_) => (ScalarField2D::new(w, h), ScalarField2D::new(w, h)),
    };

    for y in 0..h {
        for x in 0..w {
            let here = phi.get(x, y);
            let s = inside(x, y);
            // (distance along the axis, direction) to the nearest crossing
            let mut ax: Option<(f64, f64)> = None;
            let mut ay: Option<(f64, f64)> = None;
            let consider = |nx: usize, ny: usize, dir: f64, slot: &mut Option<(f64, f64)>| {
                if inside(nx, ny) != s {
                    let there = phi.get(nx, ny);
                    let t = here / (here - there);
                    let t = t.clamp(0.0, 1.0);
                    if slot.map_or(true, |(d, _)| t < d) {
                        *slot = Some((t, dir));
                    }
                }
            };
            if x > 0 {
                consider(x - 1, y, -1.0, &mut ax);
            }
            if x + 1 < w {
                consider(x + 1, y, 1.0, &mut ax);
            }
            if y > 0 {
                consider(x, y - 1, -1.0, &mut ay);
            }
            if y + 1 < h {
                consider(x, y + 1, 1.0, &mut ay);
            }
            let (px, py) = (x as f64, y as f64);
            let (mut d, mut f) = match (ax, ay) {
                (None, None) => continue,
                (Some((dx, sx)), None) => (dx, (px + sx * dx, py)),
                (None, Some((dy, sy))) => (dy, (px, py + sy * dy)),
                (Some((dx, sx)), Some((dy, sy))) => {
                    if dx == 0.0 || dy == 0.0 {
                        (0.0, (px, py))
                    } else {
                        let inv = (1.0 / (dx * dx) + 1.0 / (dy * dy)).sqrt();
                        let d = 1.0 / inv;
                        let nx = sx / dx / inv;
                        let ny = sy / dy / inv;
                        (d, (px + d * nx, py + d * ny))
                    }
                }
            };
            // Φ/|∇Φ| is sharper where the interface runs diagonally; the axis
            // estimates above are upper bounds, so keep whichever is smaller.
            let (gx, gy) = (gx.get(x, y), gy.get(x, y));
            let g = (gx * gx + gy * gy).sqrt();
            if g > 1e-12 {
                let dg = here.abs() / g;
                if dg < d {
                    let toward = if s { -1.0 } else { 1.0 };
                    d = dg;
                    f = (px + toward * dg * gx / g, py + toward * dg * gy / g);
                }
            }
            dist[y * w + x] = d;
            foot[y * w + x] = f;
            owner[y * w + x] = y * w + x;
            seeded = true;
        }
    }
    if !seeded {
        return None;
    }

    let fixed: Vec<bool> = dist.iter().map(|&d| d < INF).collect();
    let xs: Vec<usize> = (0..w).collect();
    let ys: Vec<usize> = (0..h).collect();
    for _pass in 0..2 {
        for (sx, sy) in [(1i64, 1i64), (-1, 1), (1, -1), (-1, -1)] {
            let order_x: Vec<usize> = if sx > 0 { xs.clone() } else { xs.iter().rev().copied().collect() };
            let order_y: Vec<usize> = if sy > 0 { ys.clone() } else { ys.iter().rev().copied().collect() };
            for &y in &order_y {
                for &x in &order_x {
                    let i = y * w + x;
                    if fixed[i] {
                        continue;
                    }
                    let (px, py) = (x as f64, y as f64);
                    let mut best = dist[i];
                    let mut best_foot = foot[i];
                    let mut best_owner = owner[i];
                    for (ox, oy) in [(-sx, 0), (0, -sy), (-sx, -sy)] {
                        let nx = x as i64 + ox;
                        let ny = y as i64 + oy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let j = ny as usize * w + nx as usize;
                        if dist[j] >= INF {
                            continue;
                        }
                        let (fx, fy) = foot[j];
                        let d = ((px - fx).powi(2) + (py - fy).powi(2)).sqrt();
                        if d < best {
                            best = d;
                            best_foot = (fx, fy);
                            best_owner = owner[j];
                        }
                    }
                    dist[i] = best;
                    foot[i] = best_foot;
                    owner[i] = best_owner;
                }
            }
        }
    }

    // The foot points sample the interface about once per pixel, which
    // overestimates distances by up to an eighth of a pixel. Refine against
    // the segments joining each pixel's foot point to nearby foot points.
    let refined: Vec<f64> = (0..w * h)
        .map(|i| {
            let k = owner[i];
            if k == usize::MAX {
                return dist[i];
            }
            let p = ((i % w) as f64, (i / w) as f64);
            let (kx, ky) = ((k % w) as i64, (k / w) as i64);
            let a = foot[k];
            let mut best = dist[i];
            for oy in -2..=2i64 {
                for ox in -2..=2i64 {
                    let (nx, ny) = (kx + ox, ky + oy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if j == k || !fixed[j] {
                        continue;
                    }
                    best = best.min(point_segment_distance(p, a, foot[j]));
                }
            }
            best
        })
        .collect();
    let dist = refined;

    let values = dist
        .iter()
        .enumerate()
        .map(|(i, &d)| if phi.values()[i] >= 0.0 { d } else { -d })
        .collect();
    Some(ScalarField2D::from_vec(w, h, values).expect("length matches"))
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (abx, aby) = (b.0 - a.0, b.1 - a.1);
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * abx + (p.1 - a.1) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * abx, a.1 + t * aby);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_sq(width: usize, height: usize, source: &[bool]) -> Vec<f64> {
        let mut out = vec![INF; width * height];
        for y in 0..height {
            for x in 0..width {
                for sy in 0..height {
                    for sx in 0..width {
                        if source[sy * width + sx] {
                            let d = ((x as f64 - sx as f64).powi(2) + (y as f64 - sy as f64).powi(2)) as f64;
                            out[y * width + x] = out[y * width + x].min(d);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn edt_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (w, h) = (rng.random_range(1..14), rng.random_range(1..14));
            let mut src: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.1)).collect();
            src[rng.random_range(0..w * h)] = true;
            assert_eq!(squared_distance_to(w, h, &src), brute_force_sq(w, h, &src));
        }
    }

    #[test]
    fn redistance_of_circle_is_accurate() {
        let n = 96;
        let c = 47.3;
        let exact = ScalarField2D::from_fn(n, n, |x, y| {
            17.0 - ((x as f64 - c).powi(2) + (y as f64 - c + 2.0).powi(2)).sqrt()
        });
        let scaled = exact.map(|v| 3.0 * v);
        let out = redistance(&scaled).unwrap();
        let mut worst: f64 = 0.0;
        for (a, b) in exact.values().iter().zip(out.values()) {
            if a.abs() < 10.0 {
                worst = worst.max((a - b).abs());
            }
        }
        assert!(worst < 0.1, "max deviation {worst}");
    }

    #[test]
    fn redistance_needs_a_crossing() {
        assert!(redistance(&ScalarField2D::filled(5, 5, -1.0)).is_none());
        assert!(redistance(&ScalarField2D::filled(5, 5, 2.0)).is_none());
    }
}
