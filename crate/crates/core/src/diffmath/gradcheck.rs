//! Five-point central differences for checking analytic gradients in `f64`.

/// Default finite-difference step, relative to `max(1, |x_i|)`.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely rather than
/// relatively.
pub const ABS_FLOOR: f64 = 1e-7;
/// Step reductions tried when a probe crosses a kink.
const RETRIES: [f64; 2] = [0.1, 0.01];

/// `|a - b| / max(|a|, |b|, ABS_FLOOR)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(ABS_FLOOR)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheck {
    /// Largest relative error over the checked coordinates.
    pub max_rel: f64,
    /// Coordinate of `max_rel`.
    pub worst: usize,
    pub checked: usize,
    /// Coordinates where every step crossed a kink.
    pub skipped: usize,
}

impl GradCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel < tol
    }

    pub fn merge(self, other: GradCheck) -> GradCheck {
        let (max_rel, worst) = if other.max_rel > self.max_rel {
            (other.max_rel, other.worst)
        } else {
            (self.max_rel, self.worst)
        };
        GradCheck {
            max_rel,
            worst,
            checked: self.checked + other.checked,
            skipped: self.skipped + other.skipped,
        }
    }
}

/// Compares `analytic` with the five-point stencil
/// `(-f(x+2s) + 8f(x+s) - 8f(x-s) + f(x-2s)) / 12s` around `x`.
///
/// The step for coordinate `i` is `h · max(1, |x_i|)`, so inputs on a
/// `[0, 255]` scale are not swamped by roundoff.
///
/// `f` returns `None` when the perturbed point lies on a different smooth
/// piece than `x` (for example a ReLU changed state); the coordinate is
/// then retried with smaller steps and skipped if every step crosses.
pub fn check_gradient(mut f: impl FnMut(&[f64]) -> Option<f64>, x: &[f64], analytic: &[f64], h: f64) -> GradCheck {
    assert_eq!(x.len(), analytic.len(), "gradient length must match the point");
    let mut out = GradCheck::default();
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let mut numeric = None;
        let base = h * x[i].abs().max(1.0);
        for scale in std::iter::once(1.0).chain(RETRIES) {
            let step = base * scale;
            let mut at = |d: f64| {
                probe[i] = x[i] + d;
                let v = f(&probe);
                probe[i] = x[i];
                v
            };
            let (p2, p1, m1, m2) = (at(2.0 * step), at(step), at(-step), at(-2.0 * step));
            if let (Some(p2), Some(p1), Some(m1), Some(m2)) = (p2, p1, m1, m2) {
                numeric = Some((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * step));
                break;
            }
        }
        match numeric {
            Some(n) => {
                let e = rel_error(analytic[i], n);
                if e > out.max_rel || out.checked == 0 {
                    out.max_rel = e;
                    out.worst = i;
                }
                out.checked += 1;
            }
            None => out.skipped += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_function_matches() {
        let f = |x: &[f64]| Some(x[0].sin() * x[1] + x[1].powi(3));
        let x = [0.7, -1.3];
        let g = [0.7f64.cos() * -1.3, 0.7f64.sin() + 3.0 * 1.69];
        let r = check_gradient(f, &x, &g, DEFAULT_STEP);
        assert_eq!(r.checked, 2);
        assert!(r.max_rel < 1e-8, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let f = |x: &[f64]| Some(x[0] * x[0]);
        let r = check_gradient(f, &[2.0], &[3.0], DEFAULT_STEP);
        assert!((r.max_rel - 0.25).abs() < 1e-6);
        assert!(!r.passes(1e-4));
    }

    #[test]
    fn kinks_retry_then_skip() {
        // |x| seen from x = 1.5e-3: the first step crosses zero, the second does not.
        let f = |x: &[f64]| (x[0] > 0.0).then_some(x[0].abs());
        let r = check_gradient(f, &[1.5e-3], &[1.0], DEFAULT_STEP);
        assert_eq!((r.checked, r.skipped), (1, 0));
        let r = check_gradient(f, &[0.0], &[1.0], DEFAULT_STEP);
        assert_eq!((r.checked, r.skipped), (0, 1));
        assert!(!r.passes(1.0));
    }

    #[test]
    fn step_scales_with_magnitude() {
        // The stencil is off by -s⁴/30 · f⁽⁵⁾, so x⁵ at x = 200 with h = 1e-2
        // (step 2 after scaling) shows a relative error of 4·16 / (5·200⁴).
        let f = |x: &[f64]| Some(x[0].powi(5));
        let exact = 5.0 * 200f64.powi(4);
        let expected = 64.0 / exact;
        let r = check_gradient(f, &[200.0], &[exact], 1e-2);
        assert!((r.max_rel - expected).abs() < 1e-2 * expected, "{r:?} vs {expected}");
    }

    #[test]
    fn small_gradients_use_absolute_floor() {
        assert_eq!(rel_error(0.0, 1e-9), 1e-9 / ABS_FLOOR);
        assert_eq!(rel_error(2.0, 1.0), 0.5);
    }
}
