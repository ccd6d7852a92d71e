//! Uniform half-line grids, parity-aware fields, quadrature and
//! finite-difference stencils shared by every solver in the crate.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform grid on [0, ymax] with samples at {0, h, 2h, ..., ymax}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub h: f64,
    pub ymax: f64,
    pub count: usize,
}

impl RadialGrid {
    pub fn new(h: f64, ymax: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("grid step h = {h} must be positive")));
        }
        if ymax < 15.0 {
            return Err(Error::InvalidParameter(format!(
                "ymax = {ymax} too small; tails of exponentially decaying profiles need ymax >= 15"
            )));
        }
        let n = (ymax / h).round() as usize;
        if ((n as f64) * h - ymax).abs() > 1e-9 * ymax {
            return Err(Error::InvalidParameter(format!(
                "ymax = {ymax} is not an integer multiple of h = {h}"
            )));
        }
        // composite Simpson needs an even number of intervals
        if n % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "ymax/h = {n} must be even for composite Simpson quadrature"
            )));
        }
        Ok(Self { h, ymax, count: n + 1 })
    }

    pub fn y(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(|i| self.y(i))
    }

    pub fn same_as(&self, other: &RadialGrid) -> bool {
        (self.h - other.h).abs() < 1e-14 && self.count == other.count
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Parity of a pointwise product.
    pub fn product(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Real samples of a function on [0, ymax], extended to negative y by parity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialField {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
    pub parity: Parity,
}

/// Even field: the workhorse type for ground-state and profile data.
pub type EvenField = RadialField;

impl RadialField {
    pub fn new(grid: RadialGrid, values: Vec<f64>, parity: Parity) -> Result<Self> {
        if values.len() != grid.count {
            return Err(Error::GridMismatch(format!(
                "field has {} samples, grid has {}",
                values.len(),
                grid.count
            )));
        }
        Ok(Self { grid, values, parity })
    }

    pub fn even(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values, Parity::Even)
    }

    pub fn from_fn(grid: RadialGrid, parity: Parity, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().map(f).collect();
        Self { grid, values, parity }
    }

    pub fn zeros(grid: RadialGrid, parity: Parity) -> Self {
        Self { grid, values: vec![0.0; grid.count], parity }
    }

    /// Value by reflection for any y (|y| clamped to the last node).
    pub fn at_node(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Cubic 4-point Lagrange interpolation with parity reflection.
    /// Returns None for |y| beyond ymax (callers supply asymptotes there).
    pub fn interp(&self, y: f64) -> Option<f64> {
        let a = y.abs();
        if a > self.grid.ymax {
            return None;
        }
        let v = interp4(&self.values, self.grid.h, a, self.parity);
        if self.parity == Parity::Odd && y < 0.0 {
            Some(-v)
        } else {
            Some(v)
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
            parity: self.parity,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch("add".into()));
        }
        if self.parity != other.parity {
            return Err(Error::ParityMismatch("add".into()));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            parity: self.parity,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_on(&self, lo: f64, hi: f64) -> f64 {
        let mut m = 0.0f64;
        for (i, v) in self.values.iter().enumerate() {
            let y = self.grid.y(i);
            if y >= lo && y <= hi {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// 4-point Lagrange interpolation on a uniform table starting at 0,
/// reflecting across 0 with the given parity for the left stencil edge.
pub fn interp4(values: &[f64], h: f64, a: f64, parity: Parity) -> f64 {
    let n = values.len();
    debug_assert!(a >= 0.0);
    let x = a / h;
    let mut i0 = x.floor() as isize - 1;
    if i0 > n as isize - 4 {
        i0 = n as isize - 4;
    }
    let sample = |j: isize| -> f64 {
        if j >= 0 {
            values[j as usize]
        } else {
            match parity {
                Parity::Even => values[(-j) as usize],
                Parity::Odd => -values[(-j) as usize],
            }
        }
    };
    let t = x - i0 as f64;
    // Lagrange weights for nodes {0,1,2,3} at offset t
    let w0 = -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0;
    let w1 = t * (t - 2.0) * (t - 3.0) / 2.0;
    let w2 = -t * (t - 1.0) * (t - 3.0) / 2.0;
    let w3 = t * (t - 1.0) * (t - 2.0) / 6.0;
    w0 * sample(i0) + w1 * sample(i0 + 1) + w2 * sample(i0 + 2) + w3 * sample(i0 + 3)
}

/// Composite Simpson on [0, ymax] plus an analytic tail bound assuming
/// e^{-y} decay past ymax: integral_0^inf f  ≈ Simpson + f(ymax).
pub fn simpson_half_line(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    debug_assert!(n % 2 == 0);
    let mut s = f[0] + f[n];
    for (i, v) in f.iter().enumerate().take(n).skip(1) {
        s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    s * h / 3.0 + f[n]
}

/// <f, g> = Re ∫_R f g  using parity to fold onto the half line.
/// Mixed parity is rejected: such pairings vanish identically and a request
/// for one almost always indicates a caller bug.
pub fn inner(f: &RadialField, g: &RadialField) -> Result<f64> {
    if !f.grid.same_as(&g.grid) {
        return Err(Error::GridMismatch("inner".into()));
    }
    if f.parity != g.parity {
        return Err(Error::ParityMismatch(
            "inner product of opposite parities is identically zero".into(),
        ));
    }
    let prod: Vec<f64> = f.values.iter().zip(&g.values).map(|(a, b)| a * b).collect();
    Ok(2.0 * simpson_half_line(&prod, f.grid.h))
}

/// Weighted inner product <w·f, g> without allocating the product field.
pub fn inner_weighted(
    f: &RadialField,
    g: &RadialField,
    w: impl Fn(f64) -> f64,
) -> Result<f64> {
    if !f.grid.same_as(&g.grid) {
        return Err(Error::GridMismatch("inner_weighted".into()));
    }
    let prod: Vec<f64> = f
        .values
        .iter()
        .zip(&g.values)
        .enumerate()
        .map(|(i, (a, b))| w(f.grid.y(i)) * a * b)
        .collect();
    Ok(2.0 * simpson_half_line(&prod, f.grid.h))
}

/// 4th-order second derivative with even-reflection ghost nodes at 0 and
/// e^{-y} decay extrapolation past ymax.
pub fn second_derivative(f: &RadialField) -> RadialField {
    let h = f.grid.h;
    let n = f.grid.count;
    let v = &f.values;
    let sample = |j: isize| -> f64 {
        if j < 0 {
            match f.parity {
                Parity::Even => v[(-j) as usize],
                Parity::Odd => -v[(-j) as usize],
            }
        } else if (j as usize) < n {
            v[j as usize]
        } else {
            // decay extrapolation: f(ymax + k h) = f(ymax) e^{-k h}
            v[n - 1] * (-(j as f64 - (n - 1) as f64) * h).exp()
        }
    };
    let mut out = vec![0.0; n];
    let c = 1.0 / (12.0 * h * h);
    for (i, o) in out.iter_mut().enumerate() {
        let j = i as isize;
        *o = c
            * (-sample(j - 2) + 16.0 * sample(j - 1) - 30.0 * sample(j) + 16.0 * sample(j + 1)
                - sample(j + 2));
    }
    RadialField { grid: f.grid, values: out, parity: f.parity }
}

/// 4th-order first derivative with the same boundary handling.
pub fn first_derivative(f: &RadialField) -> RadialField {
    let h = f.grid.h;
    let n = f.grid.count;
    let v = &f.values;
    let sample = |j: isize| -> f64 {
        if j < 0 {
            match f.parity {
                Parity::Even => v[(-j) as usize],
                Parity::Odd => -v[(-j) as usize],
            }
        } else if (j as usize) < n {
            v[j as usize]
        } else {
            v[n - 1] * (-(j as f64 - (n - 1) as f64) * h).exp()
        }
    };
    let mut out = vec![0.0; n];
    let c = 1.0 / (12.0 * h);
    for (i, o) in out.iter_mut().enumerate() {
        let j = i as isize;
        *o = c * (sample(j - 2) - 8.0 * sample(j - 1) + 8.0 * sample(j + 1) - sample(j + 2));
    }
    let parity = match f.parity {
        Parity::Even => Parity::Odd,
        Parity::Odd => Parity::Even,
    };
    RadialField { grid: f.grid, values: out, parity }
}

/// Least-squares line a + b·y over grid nodes in [lo, hi]; returns (slope, intercept).
pub fn linear_fit(f: &RadialField, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let mut sy = 0.0;
    let mut sv = 0.0;
    let mut syy = 0.0;
    let mut syv = 0.0;
    let mut n = 0.0;
    for (i, v) in f.values.iter().enumerate() {
        let y = f.grid.y(i);
        if y >= lo && y <= hi {
            sy += y;
            sv += v;
            syy += y * y;
            syv += y * v;
            n += 1.0;
        }
    }
    if n < 2.0 {
        return Err(Error::FitFailure(format!("linear fit window [{lo}, {hi}] has < 2 nodes")));
    }
    let det = n * syy - sy * sy;
    if det.abs() < 1e-300 {
        return Err(Error::FitFailure("degenerate linear fit window".into()));
    }
    let slope = (n * syv - sy * sv) / det;
    let intercept = (syy * sv - sy * syv) / det;
    Ok((slope, intercept))
}

/// Fit f(y) ≈ a e^{r y} on [lo, hi] by least squares on log |f|, with the
/// rate r fixed. Sign-changing windows fall back to two-point collocation
/// against a e^{r y} + b e^{-r y}.
pub fn growth_fit(f: &RadialField, rate: f64, lo: f64, hi: f64) -> Result<f64> {
    let mut idx = Vec::new();
    for i in 0..f.grid.count {
        let y = f.grid.y(i);
        if y >= lo && y <= hi {
            idx.push(i);
        }
    }
    if idx.len() < 2 {
        return Err(Error::FitFailure(format!("growth fit window [{lo}, {hi}] has < 2 nodes")));
    }
    let all_pos = idx.iter().all(|&i| f.values[i] > 0.0);
    let all_neg = idx.iter().all(|&i| f.values[i] < 0.0);
    if all_pos || all_neg {
        let sign = if all_pos { 1.0 } else { -1.0 };
        let mean: f64 = idx
            .iter()
            .map(|&i| f.values[i].abs().ln() - rate * f.grid.y(i))
            .sum::<f64>()
            / idx.len() as f64;
        Ok(sign * mean.exp())
    } else {
        // two-point collocation with the growing and decaying modes
        let (i1, i2) = (idx[0], idx[idx.len() - 1]);
        let (y1, y2) = (f.grid.y(i1), f.grid.y(i2));
        let (f1, f2) = (f.values[i1], f.values[i2]);
        let det = (rate * y1).exp() * (-rate * y2).exp() - (rate * y2).exp() * (-rate * y1).exp();
        if det.abs() < 1e-300 {
            return Err(Error::FitFailure("degenerate growth collocation".into()));
        }
        Ok((f1 * (-rate * y2).exp() - f2 * (-rate * y1).exp()) / det)
    }
}

/// Exponential decay-rate fit of |f| on [lo, hi]: f ≈ C e^{-r y}.
/// Returns None when the window maximum is below `floor` (already decayed
/// beyond measurability).
pub fn decay_rate_fit(f: &RadialField, lo: f64, hi: f64, floor: f64) -> Option<f64> {
    let mut ys = Vec::new();
    let mut ls = Vec::new();
    for (i, v) in f.values.iter().enumerate() {
        let y = f.grid.y(i);
        if y >= lo && y <= hi && v.abs() > 0.0 {
            ys.push(y);
            ls.push(v.abs().ln());
        }
    }
    if ys.is_empty() || ys.iter().zip(&ls).all(|(_, l)| l.exp() < floor) {
        return None;
    }
    if ls.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l)) < floor.ln() {
        return None;
    }
    let n = ys.len() as f64;
    let sy: f64 = ys.iter().sum();
    let sl: f64 = ls.iter().sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let syl: f64 = ys.iter().zip(&ls).map(|(y, l)| y * l).sum();
    let det = n * syy - sy * sy;
    if det.abs() < 1e-300 {
        return None;
    }
    Some(-(n * syl - sy * sl) / det)
}

/// Dense Gaussian elimination with partial pivoting for small systems.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().map(|row| row.clone()).collect();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[piv][col].abs() < 1e-300 {
            return Err(Error::SingularSystem(format!("pivot {col} vanished")));
        }
        m.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        for k in col + 1..n {
            let t = m[col][k] * x[k];
            x[col] -= t;
        }
        x[col] /= m[col][col];
    }
    Ok(x)
}

/// Determinant via LU (small matrices only).
pub fn det_dense(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap())
            .unwrap();
        if m[piv][col].abs() < 1e-300 {
            return 0.0;
        }
        if piv != col {
            m.swap(col, piv);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    det
}

/// Crude condition estimate: ||A||_inf * ||A^-1||_inf via solves on unit vectors.
pub fn cond_dense(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let norm_a = a
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let mut norm_inv = 0.0f64;
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if let Ok(col) = solve_dense(a, &e) {
            norm_inv = norm_inv.max(col.iter().map(|v| v.abs()).sum());
        } else {
            return f64::INFINITY;
        }
    }
    norm_a * norm_inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_matches_adaptive_oracle() {
        // oracle: adaptive Simpson of e^{-y} cos y on [0, 20] + tail
        fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
            let m = 0.5 * (a + b);
            let coarse = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let fine = (b - a) / 12.0
                * (f(a) + 4.0 * f(lm) + 2.0 * f(m) + 4.0 * f(rm) + f(b));
            if (fine - coarse).abs() < 15.0 * tol {
                fine
            } else {
                adaptive(f, a, m, tol / 2.0) + adaptive(f, m, b, tol / 2.0)
            }
        }
        let g = RadialGrid::new(1e-3, 20.0).unwrap();
        let f: Vec<f64> = g.points().map(|y| (-y).exp() * y.cos()).collect();
        let got = simpson_half_line(&f, g.h);
        let want = adaptive(&|y: f64| (-y).exp() * y.cos(), 0.0, 20.0, 1e-13)
            + (-20.0f64).exp() * 20.0f64.cos();
        assert_abs_diff_eq!(got, want, epsilon = 1e-10);
    }

    #[test]
    fn second_derivative_fourth_order() {
        // convergence-order check on a smooth even function, coarse grids so
        // truncation dominates roundoff
        let f = |y: f64| (-y).cosh().recip(); // sech y, even
        let exact = |y: f64| {
            let s = 1.0 / y.cosh();
            let t = y.tanh();
            s * t * t - s * s * s
        };
        let mut errs = Vec::new();
        for h in [2e-2, 1e-2] {
            let g = RadialGrid::new(h, 20.0).unwrap();
            let fld = RadialField::from_fn(g, Parity::Even, f);
            let d2 = second_derivative(&fld);
            let mut e = 0.0f64;
            for i in 0..g.count {
                let y = g.y(i);
                if y < 15.0 {
                    e = e.max((d2.values[i] - exact(y)).abs());
                }
            }
            errs.push(e);
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 10.0 && ratio < 24.0, "order-4 ratio was {ratio}");
    }

    #[test]
    fn inner_rejects_mixed_parity() {
        let g = RadialGrid::new(1e-2, 20.0).unwrap();
        let e = RadialField::from_fn(g, Parity::Even, |y| (-y * y).exp());
        let o = RadialField::from_fn(g, Parity::Odd, |y| y * (-y * y).exp());
        assert!(inner(&e, &o).is_err());
    }

    #[test]
    fn inner_zero_field() {
        let g = RadialGrid::new(1e-2, 20.0).unwrap();
        let z = RadialField::zeros(g, Parity::Even);
        let e = RadialField::from_fn(g, Parity::Even, |y| (-y).exp());
        assert_eq!(inner(&z, &e).unwrap(), 0.0);
    }

    #[test]
    fn interp4_reproduces_cubics_exactly() {
        let g = RadialGrid::new(0.1, 20.0).unwrap();
        let f = RadialField::from_fn(g, Parity::Even, |y| 1.0 + 3.0 * y * y);
        for &y in &[0.03, 0.5001, 7.777, -2.3] {
            let v = f.interp(y).unwrap();
            assert_abs_diff_eq!(v, 1.0 + 3.0 * y * y, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_and_growth_fits() {
        let g = RadialGrid::new(1e-2, 20.0).unwrap();
        let f = RadialField::from_fn(g, Parity::Even, |y| 2.5 * y - 7.0);
        let (s, b) = linear_fit(&f, 10.0, 18.0).unwrap();
        assert_abs_diff_eq!(s, 2.5, epsilon = 1e-10);
        assert_abs_diff_eq!(b, -7.0, epsilon = 1e-9);

        let r = std::f64::consts::SQRT_2;
        let fg = RadialField::from_fn(g, Parity::Even, |y| -0.25 * (r * y).exp());
        let a = growth_fit(&fg, r, 15.0, 19.0).unwrap();
        assert_abs_diff_eq!(a, -0.25, epsilon = 1e-9);
    }

    #[test]
    fn decay_fit_rate_and_floor() {
        let g = RadialGrid::new(1e-2, 20.0).unwrap();
        let f = RadialField::from_fn(g, Parity::Even, |y| 3.0 * (-1.3 * y).exp());
        let r = decay_rate_fit(&f, 8.0, 13.0, 1e-30).unwrap();
        assert_abs_diff_eq!(r, 1.3, epsilon = 1e-9);
        let tiny = RadialField::from_fn(g, Parity::Even, |_| 1e-18);
        assert!(decay_rate_fit(&tiny, 8.0, 13.0, 1e-9).is_none());
    }

    #[test]
    fn dense_solve_and_det() {
        let a = vec![
            vec![2.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 4.0],
        ];
        let x = solve_dense(&a, &[3.0, 5.0, 5.0]).unwrap();
        for (got, want) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(det_dense(&a), 2.0 * (3.0 * 4.0 - 1.0) - 1.0 * 4.0, epsilon = 1e-12);
    }
}
