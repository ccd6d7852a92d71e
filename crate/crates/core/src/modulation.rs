//! Decomposition of a numerical field into (Gamma, eps) with the four
//! orthogonality conditions
//!
//!     <eps, M_{-b} Q> = <eps, M_{-b} y^2 Q> = <eps, i M_{-b} Lambda Q>
//!     = <eps, i M_{-b} rho> = 0,
//!
//! enforced per snapshot by a Newton iteration over (gamma, lambda, b, a),
//! plus the tracking diagnostics: the m-vector magnitudes, the auxiliary
//! functional J, and the bootstrap exit function g.

use crate::ansatz::{Ansatz, ModParams};
use crate::bump::theta0;
use crate::error::{Error, Result};
use crate::evolution::ComplexField;
use crate::grid::{cond_dense, det_dense, solve_dense};
use crate::groundstate::{eval_q, eval_q_prime, GroundStateBundle};
use num_complex::Complex64;
use serde::Serialize;

pub const TOL_ORTHO: f64 = 1e-10;
const MAX_ITERS: usize = 25;

/// eps on the mapped grid y_i = x_i / lambda (uniform, spacing dx/lambda).
pub struct MappedEps {
    pub y0: f64,
    pub hy: f64,
    pub values: Vec<Complex64>,
}

impl MappedEps {
    pub fn y(&self, i: usize) -> f64 {
        self.y0 + i as f64 * self.hy
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.hy).sqrt()
    }
}

/// eps(y) = e^{-i gamma} lambda^{1/2} u(lambda y) - V[Gamma](y), represented
/// on the image of the simulation grid (no interpolation of u is needed
/// there: y_i = x_i / lambda).
pub fn epsilon_of(ansatz: &Ansatz<'_>, u: &ComplexField, p: &ModParams) -> MappedEps {
    let phase = Complex64::from_polar(p.lambda.sqrt(), -p.gamma);
    let hy = u.dx() / p.lambda;
    let y0 = -u.l / p.lambda;
    let values = (0..u.n)
        .map(|i| {
            let y = y0 + i as f64 * hy;
            phase * u.values[i] - ansatz.eval_v(p, y)
        })
        .collect();
    MappedEps { y0, hy, values }
}

/// eps on an explicit target grid, interpolating u (order-6 Lagrange).
pub fn epsilon_on_grid(
    ansatz: &Ansatz<'_>,
    u: &ComplexField,
    p: &ModParams,
    y_points: &[f64],
) -> Result<Vec<Complex64>> {
    let phase = Complex64::from_polar(p.lambda.sqrt(), -p.gamma);
    let mut out = Vec::with_capacity(y_points.len());
    for &y in y_points {
        let x = p.lambda * y;
        if x.abs() > u.l {
            return Err(Error::CoverageFailure(format!(
                "x = {x} outside the simulation domain [-{}, {})",
                u.l, u.l
            )));
        }
        out.push(phase * u.interp(x) - ansatz.eval_v(p, y));
    }
    Ok(out)
}

/// The four orthogonality inner products, in the order
/// (Q, y^2 Q, i Lambda Q, i rho), each against M_{-b}-twisted windows.
pub fn ortho_residuals(ansatz: &Ansatz<'_>, eps: &MappedEps, p: &ModParams) -> [f64; 4] {
    let mut r = [0.0f64; 4];
    for (i, v) in eps.values.iter().enumerate() {
        let y = eps.y(i);
        let q = eval_q(y);
        if q < 1e-280 {
            continue;
        }
        let lam_q = 0.5 * q + y * eval_q_prime(y);
        let rho = ansatz.lib.rho_at(y);
        // <f, M_{-b} w> = Re [ f * e^{+i b y^2/4} ] w for real w,
        // <f, i M_{-b} w> = Im [ f * e^{+i b y^2/4} ] w
        let tw = v * Complex64::from_polar(1.0, p.b * y * y / 4.0);
        r[0] += tw.re * q;
        r[1] += tw.re * y * y * q;
        r[2] += tw.im * lam_q;
        r[3] += tw.im * rho;
    }
    for v in r.iter_mut() {
        *v *= eps.hy;
    }
    r
}

/// The leading-order coefficient matrix of the orthogonality system
/// (7x7; the upper-left 4x4 block couples the four parameter rates, the
/// lower block is the identity acting on the tail integrals).
#[derive(Clone, Debug, Serialize)]
pub struct D0Matrix {
    pub m: Vec<Vec<f64>>,
    pub cond: f64,
    /// quadratures behind the block, for reuse and cross-checks
    pub rho_q: f64,
    pub y2q_rho: f64,
    pub y2q2: f64,
    pub q_lam_q: f64,
}

impl D0Matrix {
    pub fn build(bundle: &GroundStateBundle) -> Result<Self> {
        use crate::grid::{inner, inner_weighted, Parity, RadialField};
        let grid = bundle.grid;
        let lam_q = RadialField::from_fn(grid, Parity::Even, |y| {
            0.5 * eval_q(y) + y * eval_q_prime(y)
        });
        let rho_q = bundle.quad_rho_q;
        let y2q_rho = inner_weighted(&bundle.rho, &bundle.q, |y| y * y)?;
        let y2q2 = bundle.quad_x2q2;
        let q_lam_q = inner(&bundle.q, &lam_q)?;
        let lamq_y2q = inner_weighted(&lam_q, &bundle.q, |y| y * y)?;
        let mut m = vec![vec![0.0; 7]; 7];
        // rows follow the conserved-pairing order (i rho, y^2 Q, i Lambda Q, Q)
        m[0][0] = rho_q;
        m[0][2] = -0.25 * y2q_rho;
        m[1][1] = -lamq_y2q;
        m[1][3] = y2q_rho;
        m[2][0] = 4.0 * q_lam_q;
        m[2][2] = -lamq_y2q;
        m[3][1] = -q_lam_q;
        m[3][3] = rho_q;
        for i in 4..7 {
            m[i][i] = 1.0;
        }
        let block: Vec<Vec<f64>> = (0..4).map(|i| m[i][0..4].to_vec()).collect();
        let cond = cond_dense(&block);
        Ok(Self { m, cond, rho_q, y2q_rho, y2q2, q_lam_q })
    }

    pub fn det4(&self) -> f64 {
        let block: Vec<Vec<f64>> = (0..4).map(|i| self.m[i][0..4].to_vec()).collect();
        det_dense(&block)
    }

    /// Leading-order Jacobian of the Newton residuals (rows: the pairing
    /// order Q, y^2 Q, i Lambda Q, i rho; columns: gamma, lambda, b, a),
    /// assembled from the same quadratures as the 4x4 block.
    pub fn newton_seed(&self, p: &ModParams) -> Vec<Vec<f64>> {
        let l = p.lambda;
        let bl = p.b / (2.0 * l);
        vec![
            vec![0.0, 0.0, 0.0, -self.rho_q],
            vec![0.0, -self.y2q2 / l, 0.0, -self.y2q_rho],
            vec![0.0, bl * self.y2q2, -self.y2q2 / 4.0, 0.0],
            vec![-self.rho_q, -bl * self.y2q_rho, self.y2q_rho / 4.0, 0.0],
        ]
    }
}

/// Result of a modulation decomposition.
#[derive(Clone, Debug)]
pub struct DecompositionState {
    pub params: ModParams,
    /// eps on the mapped grid of the decomposed field
    pub epsilon: Vec<Complex64>,
    pub eps_l2: f64,
    pub ortho: [f64; 4],
    pub newton_iters: usize,
    pub converged: bool,
}

/// Newton iteration on the four orthogonality residuals over
/// (gamma, lambda, b, a); j1, j2, j3 are held at the guess values (the
/// caller pins j1 = T - t and tracks j2, j3). The first step uses the
/// leading-order Jacobian from the D0 block; subsequent steps use forward
/// finite differences with per-parameter scaled increments.
pub fn decompose(
    ansatz: &Ansatz<'_>,
    u: &ComplexField,
    guess: &ModParams,
) -> Result<DecompositionState> {
    let d0 = D0Matrix::build(&ansatz.lib.bundle)?;
    let mut p = *guess;
    let residual = |p: &ModParams| -> [f64; 4] {
        let eps = epsilon_of(ansatz, u, p);
        ortho_residuals(ansatz, &eps, p)
    };
    let norm = |r: &[f64; 4]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut r = residual(&p);
    let mut best = norm(&r);
    let mut increases = 0usize;
    for iter in 0..MAX_ITERS {
        if norm(&r) <= TOL_ORTHO {
            let eps = epsilon_of(ansatz, u, &p);
            let eps_l2 = eps.l2_norm();
            return Ok(DecompositionState {
                params: p,
                epsilon: eps.values,
                eps_l2,
                ortho: r,
                newton_iters: iter,
                converged: true,
            });
        }
        let jac: Vec<Vec<f64>> = if iter == 0 {
            d0.newton_seed(&p)
        } else {
            // forward differences, steps scaled per parameter
            let dg = 1e-7;
            let dl = 1e-7 * p.lambda;
            let db = 1e-7 * p.lambda;
            let da = 1e-7 * p.lambda;
            let perturb = |dp: [f64; 4]| ModParams {
                gamma: p.gamma + dp[0],
                lambda: p.lambda + dp[1],
                b: p.b + dp[2],
                a: p.a + dp[3],
                ..p
            };
            let mut cols = Vec::with_capacity(4);
            for (col, step) in [dg, dl, db, da].into_iter().enumerate() {
                let mut dp = [0.0; 4];
                dp[col] = step;
                let rp = residual(&perturb(dp));
                cols.push([
                    (rp[0] - r[0]) / step,
                    (rp[1] - r[1]) / step,
                    (rp[2] - r[2]) / step,
                    (rp[3] - r[3]) / step,
                ]);
            }
            (0..4).map(|row| (0..4).map(|col| cols[col][row]).collect()).collect()
        };
        let cond = cond_dense(&jac);
        if !cond.is_finite() || cond > 1e14 {
            return Err(Error::NewtonSingularJacobian { cond });
        }
        let delta = solve_dense(&jac, &r)
            .map_err(|_| Error::NewtonSingularJacobian { cond })?;
        let next = ModParams {
            gamma: p.gamma - delta[0],
            lambda: p.lambda - delta[1],
            b: p.b - delta[2],
            a: p.a - delta[3],
            ..p
        };
        if !(next.lambda > 0.0) {
            return Err(Error::NewtonBasinFailure { residual: norm(&r) });
        }
        let rn = residual(&next);
        if norm(&rn) > norm(&r) {
            increases += 1;
            if increases >= 2 && iter > 0 {
                return Err(Error::NewtonBasinFailure { residual: norm(&rn) });
            }
        } else if norm(&rn) < best {
            best = norm(&rn);
            increases = 0;
        }
        p = next;
        r = rn;
    }
    Err(Error::NewtonMaxIters { iters: MAX_ITERS, residual: norm(&r) })
}

/// J = cos(gamma) ∫ eps_1 psi_0 Theta0(y sqrt(lambda))
///   + sin(gamma) ∫ eps_2 phi_0 Theta0(y sqrt(lambda)).
pub fn j_functional(ansatz: &Ansatz<'_>, eps: &MappedEps, p: &ModParams) -> f64 {
    let root = p.lambda.sqrt();
    let mut c = 0.0;
    let mut s = 0.0;
    for (i, v) in eps.values.iter().enumerate() {
        let y = eps.y(i);
        let t = theta0(y * root);
        if t == 0.0 {
            continue;
        }
        c += v.re * ansatz.lib.psi0_at(y) * t;
        s += v.im * ansatz.lib.phi0_at(y) * t;
    }
    (c * p.gamma.cos() + s * p.gamma.sin()) * eps.hy
}

/// Bootstrap exit function
/// g(s) = s^{7/4} ( b - s^{-1} + alpha1 s^{-5/2} cos gamma ).
pub fn g_beta(s: f64, b: f64, gamma: f64, alpha1: f64) -> Result<f64> {
    if s <= 0.0 {
        return Err(Error::InvalidParameter(format!("g(s) needs s > 0, got {s}")));
    }
    Ok(s.powf(1.75) * (b - 1.0 / s + alpha1 * s.powf(-2.5) * gamma.cos()))
}

/// One row of a tracked time series.
#[derive(Clone, Debug, Serialize)]
pub struct TrackRow {
    pub t: f64,
    pub s: f64,
    pub params: ModParams,
    pub m_scaled: Option<f64>,
    pub j_fun: f64,
    pub g_exit: f64,
    pub eps_l2: f64,
}

/// Decompose a time series of snapshots with warm starts. The rescaled
/// clock advances by ds = dt / lambda^2 between snapshots; j1 = T - t with
/// T the first snapshot's time plus its own j1 guess; j2, j3 integrate
/// d j_k / ds = -lambda^{k+1} backward from terminal zeros.
pub fn track(
    ansatz: &Ansatz<'_>,
    snapshots: &[ComplexField],
    guess0: &ModParams,
    s0: f64,
) -> Result<Vec<TrackRow>> {
    if snapshots.len() < 2 {
        return Err(Error::SnapshotGap("track needs at least two snapshots".into()));
    }
    // forward pass: decompose each snapshot with warm starts
    let mut rows: Vec<TrackRow> = Vec::with_capacity(snapshots.len());
    let mut guess = *guess0;
    let mut s = s0;
    let t_ref = snapshots[0].t + guess0.j1;
    for (idx, u) in snapshots.iter().enumerate() {
        if idx > 0 {
            let dt = u.t - snapshots[idx - 1].t;
            let lam = guess.lambda;
            if dt.abs() / (lam * lam) > 2.0 {
                return Err(Error::SnapshotGap(format!(
                    "rescaled gap {} too large between snapshots",
                    dt / (lam * lam)
                )));
            }
            s += dt / (lam * lam);
            guess.gamma += dt / (lam * lam);
            guess.j1 = t_ref - u.t;
        }
        let dec = decompose(ansatz, u, &guess)?;
        guess = dec.params;
        let eps = MappedEps {
            y0: -u.l / dec.params.lambda,
            hy: u.dx() / dec.params.lambda,
            values: dec.epsilon.clone(),
        };
        let j_fun = j_functional(ansatz, &eps, &dec.params);
        let g_exit = g_beta(s, dec.params.b, dec.params.gamma, ansatz.lib.constants.alpha1)?;
        rows.push(TrackRow {
            t: u.t,
            s,
            params: dec.params,
            m_scaled: None,
            j_fun,
            g_exit,
            eps_l2: dec.eps_l2,
        });
    }
    // backward pass: j2, j3 from terminal zeros by the trapezoid rule
    let m = rows.len();
    let mut j2 = 0.0;
    let mut j3 = 0.0;
    rows[m - 1].params.j2 = 0.0;
    rows[m - 1].params.j3 = 0.0;
    for i in (0..m - 1).rev() {
        let ds = rows[i + 1].s - rows[i].s;
        let l0 = rows[i].params.lambda;
        let l1 = rows[i + 1].params.lambda;
        j2 += 0.5 * ds * (l0.powi(3) + l1.powi(3));
        j3 += 0.5 * ds * (l0.powi(4) + l1.powi(4));
        rows[i].params.j2 = j2;
        rows[i].params.j3 = j3;
    }
    // centered differences for the m-vector at interior rows
    for i in 1..m - 1 {
        let ds = rows[i + 1].s - rows[i - 1].s;
        let p = rows[i].params;
        let m_gamma = (rows[i + 1].params.gamma - rows[i - 1].params.gamma) / ds - 1.0;
        let m_lambda =
            (rows[i + 1].params.lambda.ln() - rows[i - 1].params.lambda.ln()) / ds + p.b;
        let m_b = (rows[i + 1].params.b - rows[i - 1].params.b) / ds + p.b * p.b - p.a;
        let m_a = (rows[i + 1].params.a - rows[i - 1].params.a) / ds - ansatz.omega(&p);
        let mv = crate::ansatz::MVector { m_gamma, m_lambda, m_b, m_a };
        rows[i].m_scaled = Some(mv.norm() * rows[i].s.powi(3));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bump::Cutoff;
    use crate::profiles::default_library;
    use approx::assert_abs_diff_eq;

    fn ansatz() -> Ansatz<'static> {
        Ansatz::new(default_library(), Cutoff::new(0.3))
    }

    /// exact image u(x) = lam^{-1/2} e^{i gamma} V[p](x / lam)
    fn image_of(a: &Ansatz<'_>, p: &ModParams, l: f64, n: usize, t: f64) -> ComplexField {
        let amp = 1.0 / p.lambda.sqrt();
        let ph = Complex64::from_polar(1.0, p.gamma);
        ComplexField::from_fn(l, n, t, |x| amp * ph * a.eval_v(p, x / p.lambda)).unwrap()
    }

    fn params(s: f64) -> ModParams {
        ModParams::new(s, 1.0 / s, 1.05 / s, 1e-4, 1.0 / s, 0.5 / (s * s), 0.0).unwrap()
    }

    #[test]
    fn epsilon_of_exact_image_vanishes() {
        let a = ansatz();
        let p = params(25.0);
        let u = image_of(&a, &p, 2.0, 4096, -0.04);
        let eps = epsilon_of(&a, &u, &p);
        let m = eps.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(m < 1e-13, "eps should vanish on the mapped grid, got {m}");
        // interpolating path: small but nonzero (order-6 interpolation)
        let ys: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.37).collect();
        let eps2 = epsilon_on_grid(&a, &u, &p, &ys).unwrap();
        let m2 = eps2.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(m2 < 1e-9, "interpolated eps {m2}");
    }

    #[test]
    fn epsilon_is_linear_in_the_field() {
        let a = ansatz();
        let p = params(25.0);
        let mut u = image_of(&a, &p, 2.0, 4096, -0.04);
        let g = |x: f64| Complex64::new(1e-3 * (-x * x * 50.0).exp(), 0.0);
        let amp = 1.0 / p.lambda.sqrt();
        let ph = Complex64::from_polar(1.0, p.gamma);
        for i in 0..u.n {
            let x = u.x(i);
            u.values[i] += amp * ph * g(x / p.lambda);
        }
        let eps = epsilon_of(&a, &u, &p);
        let mut worst = 0.0f64;
        for (i, v) in eps.values.iter().enumerate() {
            let y = eps.y(i);
            worst = worst.max((v - g(y)).norm());
        }
        assert!(worst < 1e-12, "linearity violated by {worst}");
    }

    #[test]
    fn epsilon_norm_is_scale_invariant() {
        let a = ansatz();
        let p = params(25.0);
        let mut u = image_of(&a, &p, 2.0, 4096, -0.04);
        for i in 0..u.n {
            let x = u.x(i);
            u.values[i] += Complex64::new(2e-3 * (-x * x * 80.0).exp(), 0.0);
        }
        let e1 = epsilon_of(&a, &u, &p).l2_norm();
        // rescale u and Gamma simultaneously: mu^{1/2} u(mu x), lambda/mu
        let mu = 1.5f64;
        let p2 = ModParams { lambda: p.lambda / mu, b: p.b, ..p };
        let u2 = ComplexField::from_fn(u.l / mu, u.n, u.t, |x| {
            // values of the original u at mu x, interpolated
            mu.sqrt() * u.interp(mu * x)
        })
        .unwrap();
        let e2 = epsilon_of(&a, &u2, &p2).l2_norm();
        assert_abs_diff_eq!(e1, e2, epsilon = 1e-6 * e1.max(1e-12));
    }

    #[test]
    fn ortho_residual_reference_values() {
        let a = ansatz();
        let p = params(30.0);
        let u = image_of(&a, &p, 2.0, 4096, -1.0 / 30.0);
        let mut eps = epsilon_of(&a, &u, &p);
        // eps = M_{-b} i Q: the Q-pairing vanishes (real pairing kills iQ)
        for (i, v) in eps.values.iter_mut().enumerate() {
            let y = eps.y0 + i as f64 * eps.hy;
            *v = Complex64::from_polar(1.0, -p.b * y * y / 4.0) * Complex64::new(0.0, eval_q(y));
        }
        let r = ortho_residuals(&a, &eps, &p);
        assert!(r[0].abs() < 1e-12, "first residual {}", r[0]);
        // eps = M_{-b} Q: the first residual is ∫ Q^2
        for (i, v) in eps.values.iter_mut().enumerate() {
            let y = eps.y0 + i as f64 * eps.hy;
            *v = Complex64::from_polar(1.0, -p.b * y * y / 4.0) * Complex64::new(eval_q(y), 0.0);
        }
        let r = ortho_residuals(&a, &eps, &p);
        assert_abs_diff_eq!(r[0], 2.720699046351327, epsilon = 1e-8);
        // zero eps
        for v in eps.values.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        let r = ortho_residuals(&a, &eps, &p);
        assert_eq!(r, [0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn d0_matrix_entries_and_invertibility() {
        let a = ansatz();
        let d0 = D0Matrix::build(&a.lib.bundle).unwrap();
        let b = &a.lib.bundle;
        // <Lambda Q, y^2 Q> = -∫ y^2 Q^2 and <rho, Q> = (1/8) ∫ y^2 Q^2
        assert_abs_diff_eq!(d0.m[1][1], b.quad_x2q2, epsilon = 1e-8);
        assert_abs_diff_eq!(d0.m[2][2], b.quad_x2q2, epsilon = 1e-8);
        assert_abs_diff_eq!(d0.m[0][0], b.quad_x2q2 / 8.0, epsilon = 1e-8);
        assert_abs_diff_eq!(d0.m[3][3], b.quad_x2q2 / 8.0, epsilon = 1e-8);
        // <Q, Lambda Q> = 0
        assert!(d0.m[2][0].abs() < 1e-8);
        assert!(d0.m[3][1].abs() < 1e-8);
        let det = d0.det4();
        assert!(det.abs() > 1e-4, "4x4 block determinant {det}");
        assert!(d0.cond.is_finite() && d0.cond < 1e4, "condition estimate {}", d0.cond);
    }

    #[test]
    fn decompose_round_trip_recovers_parameters() {
        let a = ansatz();
        let p = params(30.0);
        let u = image_of(&a, &p, 2.0, 4096, -1.0 / 30.0);
        let guess = ModParams {
            gamma: p.gamma + 1e-3,
            lambda: p.lambda * (1.0 + 1e-3),
            b: p.b - 1e-3 * p.b,
            a: p.a + 1e-3 * p.lambda,
            ..p
        };
        let dec = decompose(&a, &u, &guess).unwrap();
        assert!(dec.converged);
        assert!(dec.newton_iters <= 8, "iterations {}", dec.newton_iters);
        assert!((dec.params.gamma - p.gamma).abs() < 1e-9);
        assert!((dec.params.lambda - p.lambda).abs() < 1e-9);
        assert!((dec.params.b - p.b).abs() < 1e-9);
        assert!((dec.params.a - p.a).abs() < 1e-9);
        assert!(dec.eps_l2 < 1e-9, "residual field norm {}", dec.eps_l2);
        for r in dec.ortho {
            assert!(r.abs() <= TOL_ORTHO);
        }
    }

    #[test]
    fn decompose_far_guess_fails_loudly() {
        let a = ansatz();
        let p = params(30.0);
        let u = image_of(&a, &p, 2.0, 4096, -1.0 / 30.0);
        let guess = ModParams { lambda: 2.0 * p.lambda, ..p };
        match decompose(&a, &u, &guess) {
            Err(Error::NewtonBasinFailure { .. })
            | Err(Error::NewtonMaxIters { .. })
            | Err(Error::NewtonSingularJacobian { .. }) => {}
            Ok(dec) => {
                // if it does converge from far away it must be to the truth
                assert!((dec.params.lambda - p.lambda).abs() < 1e-8);
            }
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn decompose_minimal_mass_field() {
        let a = ansatz();
        // u = S(t): parameters near (gamma, lambda, b, a) = (-1/t, |t|, |t|, 0)
        let t = -1.0 / 30.0;
        let u = crate::evolution::s_field(2.0, 4096, t).unwrap();
        let s = -1.0 / t;
        let guess = ModParams::new(s, -t, -t, 0.0, 0.0, 0.0, 0.0).unwrap();
        let dec = decompose(&a, &u, &guess).unwrap();
        assert!(dec.converged);
        assert!((dec.params.gamma - s).abs() < 2e-4, "gamma {}", dec.params.gamma - s);
        assert!((dec.params.lambda + t).abs() < 1e-4);
        assert!((dec.params.b + t).abs() < 1e-4);
        assert!(dec.eps_l2 < 2e-2, "eps norm {}", dec.eps_l2);
    }

    #[test]
    fn j_functional_properties() {
        let a = ansatz();
        let p = params(30.0);
        let u = image_of(&a, &p, 2.0, 4096, -1.0 / 30.0);
        let mut eps = epsilon_of(&a, &u, &p);
        // zero eps -> zero J
        for v in eps.values.iter_mut() {
            *v = Complex64::new(0.0, 0.0);
        }
        assert_eq!(j_functional(&a, &eps, &p), 0.0);
        // |J| <= lambda^{-1/4} sqrt(C0) max(|phi0|,|psi0|) ||eps|| (Cauchy-Schwarz)
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = eps.values.len();
        for v in eps.values.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 1e-3;
        }
        let _ = n;
        let jv = j_functional(&a, &eps, &p);
        let sup = a.lib.phi0_at(0.0).abs().max(a.lib.psi0_at(0.0).abs()).max(2.0);
        let cap = p.lambda.powf(-0.25) * a.cutoff.c0.sqrt() * sup * eps.l2_norm();
        assert!(jv.abs() <= cap, "|J| = {jv} exceeds {cap}");
        // gamma = pi/2: only the sin term contributes
        let p2 = ModParams { gamma: std::f64::consts::FRAC_PI_2, ..p };
        let j2 = j_functional(&a, &eps, &p2);
        let mut s_only = 0.0;
        for (i, v) in eps.values.iter().enumerate() {
            let y = eps.y(i);
            s_only += v.im * a.lib.phi0_at(y) * theta0(y * p2.lambda.sqrt());
        }
        assert_abs_diff_eq!(j2, s_only * eps.hy, epsilon = 1e-14);
    }

    #[test]
    fn g_beta_values() {
        // b = s^{-1} - alpha1 s^{-5/2} cos gamma gives g = 0
        let s = 20.0;
        let a1 = 7.1117455;
        let gamma = 3.3;
        let b = 1.0 / s - a1 * s.powf(-2.5) * gamma.cos();
        assert_abs_diff_eq!(g_beta(s, b, gamma, a1).unwrap(), 0.0, epsilon = 1e-12);
        assert!(g_beta(-1.0, 0.0, 0.0, a1).is_err());
    }

    #[test]
    fn track_manufactured_trajectory() {
        let a = ansatz();
        // prescribe a smooth Gamma(s) and synthesize exact images
        let n0 = 30.0;
        let s_of = |k: usize| n0 + 0.25 * k as f64;
        let lam_of = |s: f64| 1.0 / s;
        let mut snaps = Vec::new();
        let mut t = -1.0 / n0;
        let mut ts = Vec::new();
        for k in 0..9 {
            let s = s_of(k);
            ts.push(t);
            let p = ModParams::new(s, lam_of(s), lam_of(s), 0.0, -t, 0.0, 0.0).unwrap();
            snaps.push(image_of(&a, &p, 2.0, 4096, t));
            // dt = lambda^2 ds exactly for this synthetic clock
            let lam_mid = lam_of(s + 0.125);
            t += 0.25 * lam_mid * lam_mid;
        }
        let guess =
            ModParams::new(n0, lam_of(n0), lam_of(n0), 0.0, -ts[0], 0.0, 0.0).unwrap();
        let rows = track(&a, &snaps, &guess, n0).unwrap();
        assert_eq!(rows.len(), 9);
        for row in &rows {
            assert!(row.eps_l2 < 1e-8, "eps {}", row.eps_l2);
        }
        // recovered m-vector: gamma_s = 1 and lambda_s/lambda = -1/s = -b
        // hold exactly on this trajectory, so m is O(ds^2) from differencing
        for row in rows.iter().skip(1).take(7) {
            let m = row.m_scaled.unwrap();
            assert!(m < 0.6, "m s^3 = {m}");
        }
        // single snapshot errors out
        assert!(track(&a, &snaps[0..1], &guess, n0).is_err());
    }
}
