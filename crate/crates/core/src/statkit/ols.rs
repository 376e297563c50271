//! Simple linear regression `y = t * x + b` over integer regressors, with
//! O(1) insertion and removal so a depth-first search can backtrack.
//!
//! Index sums are kept exactly in integers. Sums involving `y` use Neumaier
//! compensation so that a push followed by the matching pop restores the
//! previous state to within rounding of the compensated sum.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    /// Adds the exact product `a * b`.
    #[inline]
    fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        self.add(p);
        self.comp += a.mul_add(b, -p);
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `a * hi + a * lo` with the rounding error of the leading product kept.
#[inline]
fn scaled(a: f64, s: &CompensatedSum) -> (f64, f64) {
    let p = a * s.sum;
    (p, a.mul_add(s.sum, -p) + a * s.comp)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    k: usize,
    sum_x: i128,
    sum_xx: i128,
    sum_y: CompensatedSum,
    sum_xy: CompensatedSum,
    sum_yy: CompensatedSum,
}

impl OlsFit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_points<I: IntoIterator<Item = (u64, f64)>>(points: I) -> Self {
        let mut fit = Self::new();
        for (x, y) in points {
            fit.push(x, y);
        }
        fit
    }

    pub fn push(&mut self, x: u64, y: f64) {
        let xi = x as i128;
        let xf = x as f64;
        self.k += 1;
        self.sum_x += xi;
        self.sum_xx += xi * xi;
        self.sum_y.add(y);
        self.sum_xy.add_product(xf, y);
        self.sum_yy.add_product(y, y);
    }

    /// Removes a point that was previously pushed.
    ///
    /// # Panics
    ///
    /// Panics when the fit is empty.
    pub fn pop(&mut self, x: u64, y: f64) {
        assert!(self.k > 0, "pop from an empty fit");
        let xi = x as i128;
        let xf = x as f64;
        self.k -= 1;
        self.sum_x -= xi;
        self.sum_xx -= xi * xi;
        self.sum_y.add(-y);
        self.sum_xy.add_product(-xf, y);
        self.sum_yy.add_product(-y, y);
        if self.k == 0 {
            *self = Self::default();
        }
    }

    /// Number of points in the fit.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sum_x(&self) -> f64 {
        self.sum_x as f64
    }

    pub fn sum_xx(&self) -> f64 {
        self.sum_xx as f64
    }

    pub fn sum_y(&self) -> f64 {
        self.sum_y.value()
    }

    pub fn sum_xy(&self) -> f64 {
        self.sum_xy.value()
    }

    pub fn sum_yy(&self) -> f64 {
        self.sum_yy.value()
    }

    pub fn x_bar(&self) -> f64 {
        if self.k == 0 {
            return f64::NAN;
        }
        self.sum_x as f64 / self.k as f64
    }

    pub fn y_bar(&self) -> f64 {
        if self.k == 0 {
            return f64::NAN;
        }
        self.sum_y.value() / self.k as f64
    }

    /// Centered sum of squares of the regressors, computed exactly from the
    /// integer sums before the final division.
    pub fn ss_x(&self) -> f64 {
        if self.k == 0 {
            return 0.0;
        }
        let k = self.k as i128;
        (k * self.sum_xx - self.sum_x * self.sum_x) as f64 / self.k as f64
    }

    /// True when slope and intercept are defined.
    pub fn is_determined(&self) -> bool {
        self.k >= 2 && (self.k as i128 * self.sum_xx - self.sum_x * self.sum_x) > 0
    }

    /// `k·Σxy − Σx·Σy`, evaluated in double-double since the two terms
    /// nearly cancel when the regressors sit far from zero.
    fn k_s_xy(&self) -> f64 {
        let (a_hi, a_lo) = scaled(self.k as f64, &self.sum_xy);
        let (b_hi, b_lo) = scaled(self.sum_x as f64, &self.sum_y);
        let d = a_hi - b_hi;
        let bb = d - a_hi;
        let err = (a_hi - (d - bb)) + (-b_hi - bb);
        d + (err + a_lo - b_lo)
    }

    fn s_xy(&self) -> f64 {
        self.k_s_xy() / self.k as f64
    }

    /// Slope estimate, NaN while undetermined.
    pub fn t_hat(&self) -> f64 {
        if !self.is_determined() {
            return f64::NAN;
        }
        let den = self.k as i128 * self.sum_xx - self.sum_x * self.sum_x;
        self.k_s_xy() / den as f64
    }

    /// Intercept estimate, NaN while undetermined.
    pub fn b_hat(&self) -> f64 {
        self.y_bar() - self.t_hat() * self.x_bar()
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.y_bar() + self.t_hat() * (x - self.x_bar())
    }

    /// Residual sum of squares from the running sums.
    ///
    /// This loses relative precision when the spread of `y` is large against
    /// the residuals; callers that need an accurate value should sum the
    /// residuals directly.
    pub fn rss(&self) -> f64 {
        if !self.is_determined() {
            return 0.0;
        }
        let k = self.k as f64;
        let s_yy = self.sum_yy.value() - self.sum_y.value() * self.sum_y.value() / k;
        let s_xy = self.s_xy();
        (s_yy - s_xy * s_xy / self.ss_x()).max(0.0)
    }
}
