//! Scalar minimization over an interval: a uniform scan localizes the basin,
//! golden-section search polishes the minimizer inside it.

/// `(1/φ)` and `(1/φ²)`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;
const INV_PHI2: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSearch {
    pub scan_points: usize,
    /// Final bracket width of the golden-section stage.
    pub tolerance: f64,
}

impl Default for ScalarSearch {
    fn default() -> Self {
        Self { scan_points: 201, tolerance: 1e-10 }
    }
}

/// A minimizer and its objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub argmin: f64,
    pub value: f64,
}

impl ScalarSearch {
    /// Minimizes `f` on `[lo, hi]`. Deterministic; among equal values the
    /// smallest argument wins.
    pub fn minimize(&self, lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> Minimum {
        let n = self.scan_points.max(2);
        let step = (hi - lo) / (n - 1) as f64;
        let at = |i: usize| if i == n - 1 { hi } else { lo + i as f64 * step };
        let mut best_i = 0;
        let mut best = f(lo);
        for i in 1..n {
            let v = f(at(i));
            if v < best {
                best = v;
                best_i = i;
            }
        }
        let scanned = Minimum { argmin: at(best_i), value: best };

        let mut a = at(best_i.saturating_sub(1));
        let mut b = at((best_i + 1).min(n - 1));
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = f(c);
        let mut fd = f(d);
        while b - a > self.tolerance {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = a + INV_PHI2 * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = f(d);
            }
        }
        let (polished, fp) = if fc <= fd { (c, fc) } else { (d, fd) };
        if fp < scanned.value || (fp == scanned.value && polished < scanned.argmin) {
            Minimum { argmin: polished, value: fp }
        } else {
            scanned
        }
    }
}
