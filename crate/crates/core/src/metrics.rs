//! Overlap metrics between binary masks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField2D;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl OverlapCounts {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.false_negative + self.true_negative
    }

    /// `2|A∩B| / (|A| + |B|)`, or 1 when both masks are empty.
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.true_positive + self.false_positive + self.false_negative;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.true_positive as f64 / denom as f64
        }
    }

    /// `|A∩B| / |A∪B|`, or 1 when both masks are empty.
    pub fn iou(&self) -> f64 {
        let union = self.true_positive + self.false_positive + self.false_negative;
        if union == 0 {
            1.0
        } else {
            self.true_positive as f64 / union as f64
        }
    }
}

/// Confusion counts; any value ≥ 0.5 counts as foreground.
pub fn overlap(pred: &ScalarField2D, truth: &ScalarField2D) -> Result<OverlapCounts> {
    if pred.dims() != truth.dims() {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.width(),
            pred.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut c = OverlapCounts::default();
    for (&p, &t) in pred.values().iter().zip(truth.values()) {
        match (p >= 0.5, t >= 0.5) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_positive += 1,
            (false, true) => c.false_negative += 1,
            (false, false) => c.true_negative += 1,
        }
    }
    Ok(c)
}

pub fn dice(pred: &ScalarField2D, truth: &ScalarField2D) -> Result<f64> {
    Ok(overlap(pred, truth)?.dice())
}

pub fn iou(pred: &ScalarField2D, truth: &ScalarField2D) -> Result<f64> {
    Ok(overlap(pred, truth)?.iou())
}

/// Number of 8-connected foreground components.
pub fn count_components(mask: &ScalarField2D) -> usize {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || mask.values()[start] < 0.5 {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && mask.values()[j] >= 0.5 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, on: &[(usize, usize)]) -> ScalarField2D {
        let mut m = ScalarField2D::new(w, h);
        for &(x, y) in on {
            m.set(x, y, 1.0);
        }
        m
    }

    #[test]
    fn examples() {
        let a = mask(4, 4, &[(0, 0), (1, 0), (2, 0), (3, 0)]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = mask(4, 4, &[(0, 3), (1, 3)]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        let c = mask(4, 4, &[(0, 0), (1, 0), (0, 1), (1, 1)]);
        let d = mask(4, 4, &[(0, 0), (1, 0), (2, 1), (3, 1)]);
        assert_eq!(dice(&c, &d).unwrap(), 0.5);
        assert!((iou(&c, &d).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let empty = ScalarField2D::new(4, 4);
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        let tall = ScalarField2D::new(4, 5);
        assert!(matches!(dice(&empty, &tall), Err(Error::Dimension(_))));
    }

    #[test]
    fn components() {
        let m = mask(8, 8, &[(0, 0), (1, 1), (5, 5), (5, 6), (7, 0)]);
        assert_eq!(count_components(&m), 3);
        assert_eq!(count_components(&ScalarField2D::new(3, 3)), 0);
    }

    fn mask_pair() -> impl Strategy<Value = (ScalarField2D, ScalarField2D)> {
        (prop::collection::vec(any::<bool>(), 64), prop::collection::vec(any::<bool>(), 64)).prop_map(|(a, b)| {
            let f = |v: Vec<bool>| ScalarField2D::from_vec(8, 8, v.into_iter().map(|x| x as u8 as f64).collect()).unwrap();
            (f(a), f(b))
        })
    }

    proptest! {
        #[test]
        fn symmetry_and_relation((a, b) in mask_pair()) {
            let d = dice(&a, &b).unwrap();
            let i = iou(&a, &b).unwrap();
            prop_assert_eq!(d, dice(&b, &a).unwrap());
            prop_assert_eq!(i, iou(&b, &a).unwrap());
            prop_assert!(i <= d);
            prop_assert!((d - 2.0 * i / (1.0 + i)).abs() < 1e-12);
            prop_assert_eq!(overlap(&a, &b).unwrap().total(), 64);
        }
    }
}
