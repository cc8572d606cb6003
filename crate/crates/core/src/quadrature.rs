//! Composite Simpson rules on uniform grids.

use alloc::vec;
use alloc::vec::Vec;

/// For samples `y_0..y_N` on a uniform grid with spacing `h`, returns
/// `S_i = \int_{t_i}^{t_N} y` for every node.
///
/// An even number of remaining intervals uses plain composite Simpson; an odd
/// number starts with one Simpson 3/8 panel; the single last interval uses
/// the cubic through the last four nodes. Every `S_i` is fourth order and
/// the summation order is fixed.
pub fn cumulative_from_end(y: &[f64], h: f64) -> Vec<f64> {
    let len = y.len();
    let mut s = vec![0.0; len];
    if len < 2 {
        return s;
    }
    let last = len - 1;
    if last == 1 {
        s[0] = 0.5 * h * (y[0] + y[1]);
        return s;
    }
    s[last - 1] = if last >= 3 {
        h / 24.0 * (y[last - 3] - 5.0 * y[last - 2] + 19.0 * y[last - 1] + 9.0 * y[last])
    } else {
        h / 12.0 * (-y[last - 2] + 8.0 * y[last - 1] + 5.0 * y[last])
    };
    for i in (0..last - 1).rev() {
        let remaining = last - i;
        s[i] = if remaining.is_multiple_of(2) {
            s[i + 2] + h / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2])
        } else {
            s[i + 3] + 3.0 * h / 8.0 * (y[i] + 3.0 * y[i + 1] + 3.0 * y[i + 2] + y[i + 3])
        };
    }
    s
}

/// `S_i = \int_{t_0}^{t_i} y`, the mirror image of [`cumulative_from_end`].
pub fn cumulative_from_start(y: &[f64], h: f64) -> Vec<f64> {
    let reversed: Vec<f64> = y.iter().rev().copied().collect();
    let mut s = cumulative_from_end(&reversed, h);
    s.reverse();
    s
}

/// Composite Simpson of `f` over `[a, b]` with `panels` (rounded up to even)
/// sub-intervals.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize) -> f64 {
    let m = (panels.max(2) + 1) & !1;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for k in 1..m {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, t: f64) -> (Vec<f64>, f64) {
        let h = t / n as f64;
        ((0..=n).map(|i| i as f64 * h).collect(), h)
    }

    #[test]
    fn cubic_is_integrated_exactly() {
        for n in [3, 4, 5, 16, 17] {
            let (ts, h) = grid(n, 2.0);
            let y: Vec<f64> = ts.iter().map(|t| t * t * t - t + 1.0).collect();
            let s = cumulative_from_end(&y, h);
            for (i, &t) in ts.iter().enumerate() {
                let exact = (16.0 / 4.0 - 2.0 + 2.0) - (t.powi(4) / 4.0 - t * t / 2.0 + t);
                assert!((s[i] - exact).abs() < 1e-12, "n={n} i={i}: {} vs {exact}", s[i]);
            }
            assert_eq!(s[n], 0.0);
        }
    }

    #[test]
    fn from_start_mirrors() {
        let (ts, h) = grid(9, 1.0);
        let y: Vec<f64> = ts.iter().map(|t| libm::exp(*t)).collect();
        let s = cumulative_from_start(&y, h);
        assert_eq!(s[0], 0.0);
        assert!((s[9] - (core::f64::consts::E - 1.0)).abs() < 1e-5);
    }

    #[test]
    fn simpson_polynomial() {
        let v = simpson(|t| t * t * t, 0.0, 2.0, 3);
        assert!((v - 4.0).abs() < 1e-14);
    }
}
