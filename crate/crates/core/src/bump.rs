//! Compactly supported C-infinity cutoff profile and its derivatives.
//!
//! Theta0 is 1 on |x| <= 1, 0 on |x| >= 2, and transitions through the
//! two-sided exponential smoothstep 1/(1 + e^{w(u)}), w(u) = 1/(1-u) - 1/u,
//! u = |x| - 1. All derivatives vanish at both transition endpoints, and
//! derivatives up to order four are available in closed form.

use serde::{Deserialize, Serialize};

/// Derivatives 0..=4 of the decreasing smoothstep p(u) on (0, 1).
fn smoothstep_derivs(u: f64) -> [f64; 5] {
    let om = 1.0 - u;
    let w = 1.0 / om - 1.0 / u;
    let w1 = 1.0 / (om * om) + 1.0 / (u * u);
    let w2 = 2.0 / (om * om * om) - 2.0 / (u * u * u);
    let w3 = 6.0 / (om * om * om * om) + 6.0 / (u * u * u * u);
    let w4 = 24.0 / om.powi(5) - 24.0 / u.powi(5);
    let p = if w > 700.0 {
        0.0
    } else if w < -700.0 {
        1.0
    } else {
        1.0 / (1.0 + w.exp())
    };
    let p1 = -p * (1.0 - p) * w1;
    let p2 = -p1 * (1.0 - 2.0 * p) * w1 - p * (1.0 - p) * w2;
    let p3 = -p2 * (1.0 - 2.0 * p) * w1 + 2.0 * p1 * p1 * w1
        - 2.0 * p1 * (1.0 - 2.0 * p) * w2
        - p * (1.0 - p) * w3;
    let p4 = -p3 * (1.0 - 2.0 * p) * w1 + 6.0 * p1 * p2 * w1 - 3.0 * p2 * (1.0 - 2.0 * p) * w2
        + 6.0 * p1 * p1 * w2
        - 3.0 * p1 * (1.0 - 2.0 * p) * w3
        - p * (1.0 - p) * w4;
    [p, p1, p2, p3, p4]
}

/// k-th derivative of Theta0 at x, k <= 4.
pub fn theta0_deriv(x: f64, k: usize) -> f64 {
    debug_assert!(k <= 4);
    let a = x.abs();
    if a <= 1.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if a >= 2.0 {
        return 0.0;
    }
    let d = smoothstep_derivs(a - 1.0);
    let v = d[k];
    // odd-order derivatives of an even function are odd
    if k % 2 == 1 && x < 0.0 {
        -v
    } else {
        v
    }
}

pub fn theta0(x: f64) -> f64 {
    theta0_deriv(x, 0)
}

/// ||Theta0||_{L^2}^2, by fine Simpson quadrature of the fixed profile.
pub fn theta0_l2_sq() -> f64 {
    let n = 40_000usize;
    let h = 2.0 / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let x = i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * theta0(x) * theta0(x);
    }
    2.0 * s * h / 3.0
}

/// Spatial cutoff at scale delta: Theta(x) = Theta0(x/delta).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Cutoff {
    pub delta: f64,
    /// K = delta^{-1/2}
    pub k_const: f64,
    /// C0 = ||Theta0||_{L^2}^2, so that ||Theta||_{L^2}^2 = C0 * delta.
    pub c0: f64,
}

impl Cutoff {
    pub fn new(delta: f64) -> Self {
        assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
        Self { delta, k_const: delta.powf(-0.5), c0: theta0_l2_sq() }
    }

    /// k-th derivative of Theta(x) = Theta0(x/delta).
    pub fn theta_deriv(&self, x: f64, k: usize) -> f64 {
        theta0_deriv(x / self.delta, k) / self.delta.powi(k as i32)
    }

    pub fn theta(&self, x: f64) -> f64 {
        theta0_deriv(x / self.delta, 0)
    }

    /// Support radius of Theta (zero beyond).
    pub fn support(&self) -> f64 {
        2.0 * self.delta
    }
}
