//! Split-step Fourier integration of i u_t + u_xx + |u|^4 u = 0 on a
//! periodic domain, conserved quantities, the pseudo-conformal transform,
//! blow-up initial data, the energy functionals of the decomposed flow,
//! and the blow-up / exit-function experiments.

use crate::ansatz::{Ansatz, ModParams};
use crate::error::{Error, Result};
use crate::groundstate::{eval_q, eval_s};
use crate::modulation::{self, DecompositionState};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

/// Complex field on the periodic domain [-L, L) with N uniform samples.
#[derive(Clone, Debug)]
pub struct ComplexField {
    pub l: f64,
    pub n: usize,
    pub t: f64,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(l: f64, n: usize, t: f64) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("N = {n} must be a power of two")));
        }
        Ok(Self { l, n, t, values: vec![Complex64::new(0.0, 0.0); n] })
    }

    pub fn from_fn(l: f64, n: usize, t: f64, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let mut field = Self::new(l, n, t)?;
        for i in 0..n {
            field.values[i] = f(field.x(i));
        }
        Ok(field)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.l / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.l + 2.0 * self.l * i as f64 / self.n as f64
    }

    /// Riemann sum over the period (spectrally accurate for smooth fields).
    pub fn integrate(&self, f: impl Fn(usize, Complex64) -> f64) -> f64 {
        let dx = self.dx();
        self.values.iter().enumerate().map(|(i, &v)| f(i, v)).sum::<f64>() * dx
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.integrate(|_, v| v.norm_sqr())
    }

    /// L2 distance from a reference function, restricted to |x| < radius.
    pub fn l2_distance_within(&self, other: impl Fn(f64) -> Complex64, radius: f64) -> f64 {
        let dx = self.dx();
        let mut s = 0.0;
        for i in 0..self.n {
            let x = self.x(i);
            if x.abs() < radius {
                s += (self.values[i] - other(x)).norm_sqr();
            }
        }
        (s * dx).sqrt()
    }

    /// 6-point Lagrange interpolation on the periodic grid.
    pub fn interp(&self, x: f64) -> Complex64 {
        let dx = self.dx();
        let t = (x + self.l) / dx;
        let i0 = t.floor() as isize - 2;
        let frac = t - i0 as f64; // in [2, 3)
        let mut out = Complex64::new(0.0, 0.0);
        for m in 0..6 {
            let mut w = 1.0;
            for jj in 0..6 {
                if jj != m {
                    w *= (frac - jj as f64) / (m as f64 - jj as f64);
                }
            }
            let idx = (i0 + m as isize).rem_euclid(self.n as isize) as usize;
            out += w * self.values[idx];
        }
        out
    }
}

/// Cached FFT plans and wavenumbers for one (L, N) geometry.
pub struct Spectral {
    pub l: f64,
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    pub k: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    pub fn new(l: f64, n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let k: Vec<f64> = (0..n)
            .map(|i| {
                let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                std::f64::consts::PI * m / l
            })
            .collect();
        let scratch = vec![
            Complex64::new(0.0, 0.0);
            fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())
        ];
        Self { l, n, fwd, inv, k, scratch }
    }

    fn to_modes(&mut self, vals: &mut [Complex64]) {
        self.fwd.process_with_scratch(vals, &mut self.scratch);
    }

    fn to_space(&mut self, vals: &mut [Complex64]) {
        self.inv.process_with_scratch(vals, &mut self.scratch);
        let inv_n = 1.0 / self.n as f64;
        for v in vals.iter_mut() {
            *v *= inv_n;
        }
    }

    /// Half kinetic step: multiply modes by exp(-i k^2 dt / 2).
    fn kinetic_half(&mut self, vals: &mut [Complex64], dt: f64) {
        self.to_modes(vals);
        for (v, &k) in vals.iter_mut().zip(&self.k) {
            *v *= Complex64::from_polar(1.0, -k * k * dt / 2.0);
        }
        self.to_space(vals);
    }

    /// Spectral first derivative.
    pub fn derivative(&mut self, field: &ComplexField) -> Vec<Complex64> {
        let mut vals = field.values.clone();
        self.to_modes(&mut vals);
        for (v, &k) in vals.iter_mut().zip(&self.k) {
            *v *= Complex64::new(0.0, k);
        }
        self.to_space(&mut vals);
        vals
    }

    /// Fraction of spectral energy carried by the top 10% of |k| modes.
    pub fn tail_fraction(&mut self, field: &ComplexField) -> f64 {
        let mut vals = field.values.clone();
        self.to_modes(&mut vals);
        let kmax = std::f64::consts::PI * (self.n as f64 / 2.0) / self.l;
        let cut = 0.9 * kmax;
        let mut tail = 0.0;
        let mut total = 0.0;
        for (v, &k) in vals.iter().zip(&self.k) {
            let e = v.norm_sqr();
            total += e;
            if k.abs() >= cut {
                tail += e;
            }
        }
        if total == 0.0 { 0.0 } else { tail / total }
    }
}

/// One Strang split step: half kinetic, full nonlinear phase rotation
/// (exact pointwise, since |u| is invariant there), half kinetic. Second
/// order in dt; dt < 0 integrates backward.
pub fn step(field: &mut ComplexField, dt: f64, spectral: &mut Spectral) {
    debug_assert_eq!(field.n, spectral.n);
    spectral.kinetic_half(&mut field.values, dt);
    for v in field.values.iter_mut() {
        let amp4 = v.norm_sqr().powi(2);
        *v *= Complex64::from_polar(1.0, dt * amp4);
    }
    spectral.kinetic_half(&mut field.values, dt);
    field.t += dt;
}

/// Conserved quantities of the flow.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Conserved {
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
}

pub fn conserved(field: &ComplexField, spectral: &mut Spectral) -> Conserved {
    let du = spectral.derivative(field);
    let dx = field.dx();
    let mut mass = 0.0;
    let mut momentum = 0.0;
    let mut energy = 0.0;
    for (v, d) in field.values.iter().zip(&du) {
        mass += v.norm_sqr();
        momentum += (d * v.conj()).im;
        energy += 0.5 * d.norm_sqr() - v.norm_sqr().powi(3) / 6.0;
    }
    Conserved { mass: mass * dx, momentum: momentum * dx, energy: energy * dx }
}

/// Pseudo-conformal transform: a field at time t maps to a solution slice at
/// tau = -1/t,
///
///     v(x) = |tau|^{-1/2} u(x / |tau|) e^{i x^2 / (4 tau)}.
///
/// An exact involution on even fields; it sends e^{it} Q at t = 1 to the
/// minimal-mass solution S at tau = -1.
pub fn pseudo_conformal(field: &ComplexField) -> Result<ComplexField> {
    if field.t == 0.0 {
        return Err(Error::InvalidParameter("pseudo-conformal transform needs t != 0".into()));
    }
    let tau = -1.0 / field.t;
    let scale = tau.abs();
    let mut out = ComplexField::new(field.l, field.n, tau)?;
    for i in 0..field.n {
        let x = out.x(i);
        let xi = x / scale;
        let u = if xi.abs() <= field.l { field.interp(xi) } else { Complex64::new(0.0, 0.0) };
        out.values[i] = u / scale.sqrt() * Complex64::from_polar(1.0, x * x / (4.0 * tau));
    }
    Ok(out)
}

/// Energy functionals of the decomposed flow at one time.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyDiag {
    pub n_fun: f64,
    pub h_fun: f64,
    pub k_fun: f64,
    pub g_fun: f64,
}

/// N = ∫ x^2 |eta|^2, H = twisted linearized energy, K = Im ∫ x eta_x eta-bar,
/// G = lam^2 H + b K + (b^2 / 4 lam^2) N, with eta = lam^{-1/2} eps(y)
/// evaluated in rescaled variables on the mapped grid.
pub fn energy_functionals(ansatz: &Ansatz<'_>, u: &ComplexField, p: &ModParams) -> Result<EnergyDiag> {
    let eps = modulation::epsilon_of(ansatz, u, p);
    let hy = eps.hy;
    let n = eps.values.len();
    let at = |j: isize| -> Complex64 {
        if j < 0 || j >= n as isize {
            Complex64::new(0.0, 0.0)
        } else {
            eps.values[j as usize]
        }
    };
    let mut n_fun = 0.0;
    let mut k_fun = 0.0;
    let mut grad = 0.0;
    let mut nl = 0.0;
    let mut l2 = 0.0;
    for i in 0..n {
        let y = eps.y(i);
        let e = eps.values[i];
        let j = i as isize;
        let de = (at(j - 2) - at(j - 1) * 8.0 + at(j + 1) * 8.0 - at(j + 2)) / (12.0 * hy);
        let v = ansatz.eval_v(p, y);
        let f_vpe = (v + e).norm_sqr().powi(3) / 6.0;
        let f_v = v.norm_sqr().powi(3) / 6.0;
        let fv = v.norm_sqr().powi(2) * v;
        n_fun += y * y * e.norm_sqr();
        k_fun += (y * de * e.conj()).im;
        grad += de.norm_sqr();
        l2 += e.norm_sqr();
        nl += f_vpe - f_v - (fv * e.conj()).re;
    }
    let lam = p.lambda;
    let n_val = lam * lam * n_fun * hy;
    let h_val = (grad + l2 - 2.0 * nl) * hy / (lam * lam);
    let k_val = k_fun * hy;
    let g_val = lam * lam * h_val + p.b * k_val + 0.25 * p.b * p.b / (lam * lam) * n_val;
    Ok(EnergyDiag { n_fun: n_val, h_fun: h_val, k_fun: k_val, g_fun: g_val })
}

/// Simulation configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// sets T_n = -1/n and S_n = n
    pub n: u32,
    pub beta: f64,
    pub delta: f64,
    /// half-width of the periodic domain
    pub l: f64,
    /// sample count (power of two)
    pub n_points: usize,
    /// dt = c_dt * lambda^2
    pub c_dt: f64,
    /// forward target time (negative, > T_n)
    pub t_end: f64,
    /// decompose every this many steps
    pub decompose_every: usize,
    /// backward sweeps stop at this rescaled time
    pub sweep_s_min: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 10,
            beta: 0.0,
            delta: 0.3,
            l: 2.0,
            n_points: 8192,
            c_dt: 1e-2,
            t_end: -0.02,
            decompose_every: 20,
            sweep_s_min: 8.0,
        }
    }
}

impl SimConfig {
    pub fn t_start(&self) -> f64 {
        -1.0 / self.n as f64
    }

    /// Terminal modulation parameters: gamma = n, a = alpha1 n^{-5/2} sin n,
    /// lambda = b = n^{-1} - alpha1 n^{-5/2} cos n + beta n^{-7/4}, j = 0.
    pub fn initial_params(&self, alpha1: f64) -> Result<ModParams> {
        let n = self.n as f64;
        let lam = 1.0 / n - alpha1 * n.powf(-2.5) * n.cos() + self.beta * n.powf(-1.75);
        if lam <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "terminal lambda = {lam} <= 0: n too small for this beta"
            )));
        }
        let a = alpha1 * n.powf(-2.5) * n.sin();
        ModParams::new(n, lam, lam, a, 0.0, 0.0, 0.0)
    }
}

/// u(x) = lambda^{-1/2} e^{i gamma} V[Gamma](x / lambda) at t = T_n.
pub fn initial_data(ansatz: &Ansatz<'_>, cfg: &SimConfig) -> Result<ComplexField> {
    let p = cfg.initial_params(ansatz.lib.constants.alpha1)?;
    let dx = 2.0 * cfg.l / cfg.n_points as f64;
    if p.lambda / dx < 8.0 {
        return Err(Error::CoverageFailure(format!(
            "initial core width {} under-resolved at dx = {dx}",
            p.lambda
        )));
    }
    if 2.0 * cfg.delta >= cfg.l {
        return Err(Error::CoverageFailure(format!(
            "cutoff support {} does not fit inside the domain half-width {}",
            2.0 * cfg.delta,
            cfg.l
        )));
    }
    let amp = 1.0 / p.lambda.sqrt();
    let phase = Complex64::from_polar(1.0, p.gamma);
    ComplexField::from_fn(cfg.l, cfg.n_points, cfg.t_start(), |x| {
        amp * phase * ansatz.eval_v(&p, x / p.lambda)
    })
}

/// One recorded sample of a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunSample {
    pub t: f64,
    pub s: f64,
    pub dx_norm: f64,
    /// |t| ||u_x|| / ||Q'||
    pub rate_ratio: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub b: f64,
    pub a: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    /// |m| s^3 estimated from consecutive decompositions
    pub m_scaled: f64,
    /// bootstrap exit function g(s)
    pub g_exit: f64,
    /// || u - S - r_* ||_{L^2(|x| < delta)}
    pub profile_residual: f64,
    pub ortho_max: f64,
    pub newton_iters: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub enum RunHalt {
    Completed,
    SpectralTail { t_last: f64, fraction: f64 },
    Exit { s_exit: f64, sign: i8 },
    SMinReached,
}

#[derive(Debug)]
pub struct RunReport {
    pub samples: Vec<RunSample>,
    pub halt: RunHalt,
    pub steps: usize,
}

const TAIL_LIMIT: f64 = 1e-6;

struct RunState<'a, 'b> {
    ansatz: &'a Ansatz<'b>,
    spectral: Spectral,
    qp_norm: f64,
    s: f64,
    prev: Option<(f64, ModParams)>,
}

impl<'a, 'b> RunState<'a, 'b> {
    fn sample(&mut self, u: &ComplexField, dec: &DecompositionState) -> RunSample {
        let p = dec.params;
        let du = self.spectral.derivative(u);
        let dx = u.dx();
        let dx_norm = (du.iter().map(|v| v.norm_sqr()).sum::<f64>() * dx).sqrt();
        let m_scaled = match &self.prev {
            Some((s_prev, p_prev)) if (self.s - s_prev).abs() > 1e-12 => {
                let ds = self.s - s_prev;
                let bm = 0.5 * (p.b + p_prev.b);
                let am = 0.5 * (p.a + p_prev.a);
                let mid = ModParams {
                    gamma: 0.5 * (p.gamma + p_prev.gamma),
                    lambda: 0.5 * (p.lambda + p_prev.lambda),
                    b: bm,
                    a: am,
                    j1: 0.5 * (p.j1 + p_prev.j1),
                    j2: 0.5 * (p.j2 + p_prev.j2),
                    j3: 0.5 * (p.j3 + p_prev.j3),
                };
                let m_gamma = (p.gamma - p_prev.gamma) / ds - 1.0;
                let m_lambda = (p.lambda.ln() - p_prev.lambda.ln()) / ds + bm;
                let m_b = (p.b - p_prev.b) / ds + bm * bm - am;
                let m_a = (p.a - p_prev.a) / ds - self.ansatz.omega(&mid);
                (m_gamma * m_gamma + m_lambda * m_lambda + m_b * m_b + m_a * m_a).sqrt()
                    * self.s.powi(3)
            }
            _ => 0.0,
        };
        self.prev = Some((self.s, p));
        let g_exit = modulation::g_beta(self.s, p.b, p.gamma, self.ansatz.lib.constants.alpha1)
            .unwrap_or(f64::NAN);
        let delta = self.ansatz.cutoff.delta;
        let profile_residual = u.l2_distance_within(
            |x| eval_s(u.t, x).unwrap_or(Complex64::new(0.0, 0.0)) + self.ansatz.r_star(x),
            delta,
        );
        RunSample {
            t: u.t,
            s: self.s,
            dx_norm,
            rate_ratio: u.t.abs() * dx_norm / self.qp_norm,
            gamma: p.gamma,
            lambda: p.lambda,
            b: p.b,
            a: p.a,
            j1: p.j1,
            j2: p.j2,
            j3: p.j3,
            m_scaled,
            g_exit,
            profile_residual,
            ortho_max: dec.ortho.iter().fold(0.0f64, |m, r| m.max(r.abs())),
            newton_iters: dec.newton_iters,
        }
    }
}

/// Integrate the blow-up experiment from T_n toward cfg.t_end with
/// dt = c_dt lambda^2 (lambda from the running decomposition).
pub fn blowup_run(ansatz: &Ansatz<'_>, cfg: &SimConfig) -> Result<RunReport> {
    run_inner(ansatz, cfg, true)
}

/// Backward run (t decreasing from T_n) monitoring the exit function g;
/// halts when |g| reaches 1 or s falls below cfg.sweep_s_min.
pub fn backward_run(ansatz: &Ansatz<'_>, cfg: &SimConfig) -> Result<RunReport> {
    run_inner(ansatz, cfg, false)
}

fn run_inner(ansatz: &Ansatz<'_>, cfg: &SimConfig, forward: bool) -> Result<RunReport> {
    let mut u = initial_data(ansatz, cfg)?;
    let mut spectral = Spectral::new(cfg.l, cfg.n_points);
    let mut guess = cfg.initial_params(ansatz.lib.constants.alpha1)?;
    let t_terminal = cfg.t_start();
    let qp_norm = ansatz.lib.bundle.quad_qp2.sqrt();
    let mut state = RunState {
        ansatz,
        spectral: Spectral::new(cfg.l, cfg.n_points),
        qp_norm,
        s: cfg.n as f64,
        prev: None,
    };
    let dec0 = modulation::decompose(ansatz, &u, &guess)?;
    guess = dec0.params;
    let mut samples = vec![state.sample(&u, &dec0)];
    let mut halt = RunHalt::Completed;
    let mut steps = 0usize;
    'outer: loop {
        let s_before = state.s;
        for _ in 0..cfg.decompose_every {
            let lam = guess.lambda;
            let mut dt = cfg.c_dt * lam * lam;
            if forward {
                dt = dt.min(cfg.t_end - u.t);
                if dt <= 0.0 {
                    break 'outer;
                }
            } else {
                dt = -dt;
            }
            step(&mut u, dt, &mut spectral);
            state.s += dt / (lam * lam);
            steps += 1;
        }
        let frac = spectral.tail_fraction(&u);
        if frac > TAIL_LIMIT {
            halt = RunHalt::SpectralTail { t_last: u.t, fraction: frac };
            break;
        }
        // warm start: j1 = T_n - t exactly, phase advanced by elapsed s;
        // j2/j3 updated by the trapezoid of lambda^{k+1}
        let ds = state.s - s_before;
        let lam_prev = guess.lambda;
        guess.j1 = t_terminal - u.t;
        guess.gamma += ds;
        let dec = modulation::decompose(ansatz, &u, &guess)?;
        let lam_new = dec.params.lambda;
        let j2 = guess.j2 - 0.5 * ds * (lam_prev.powi(3) + lam_new.powi(3));
        let j3 = guess.j3 - 0.5 * ds * (lam_prev.powi(4) + lam_new.powi(4));
        guess = ModParams { j2, j3, ..dec.params };
        let dec = DecompositionState { params: guess, ..dec };
        samples.push(state.sample(&u, &dec));
        let last = samples.last().unwrap();
        if !forward {
            if last.g_exit.abs() >= 1.0 {
                halt = RunHalt::Exit {
                    s_exit: state.s,
                    sign: if last.g_exit >= 0.0 { 1 } else { -1 },
                };
                break;
            }
            if state.s <= cfg.sweep_s_min {
                halt = RunHalt::SMinReached;
                break;
            }
        } else if u.t >= cfg.t_end - 1e-15 {
            break;
        }
    }
    Ok(RunReport { samples, halt, steps })
}

/// Outcome of one sweep member.
#[derive(Clone, Debug, Serialize)]
pub struct SweepOutcome {
    pub beta: f64,
    pub exit_sign: Option<i8>,
    pub s_exit: Option<f64>,
    pub last_g: f64,
}

/// Backward exit-function sweep over beta values (parallel over members).
pub fn beta_sweep(ansatz: &Ansatz<'_>, cfg: &SimConfig, betas: &[f64]) -> Result<Vec<SweepOutcome>> {
    use rayon::prelude::*;
    let results: Vec<Result<SweepOutcome>> = betas
        .par_iter()
        .map(|&beta| {
            let mut c = cfg.clone();
            c.beta = beta;
            let report = backward_run(ansatz, &c)?;
            let last_g = report.samples.last().map(|r| r.g_exit).unwrap_or(f64::NAN);
            let (exit_sign, s_exit) = match report.halt {
                RunHalt::Exit { s_exit, sign } => (Some(sign), Some(s_exit)),
                _ => (None, None),
            };
            Ok(SweepOutcome { beta, exit_sign, s_exit, last_g })
        })
        .collect();
    results.into_iter().collect()
}

/// Snapshot file layout: t (f64 LE), L (f64 LE), N (u32 LE), then N
/// interleaved re/im f64 LE pairs.
pub fn write_snapshot(field: &ComplexField, w: &mut impl Write) -> Result<()> {
    w.write_all(&field.t.to_le_bytes())?;
    w.write_all(&field.l.to_le_bytes())?;
    w.write_all(&(field.n as u32).to_le_bytes())?;
    for v in &field.values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot(r: &mut impl Read) -> Result<ComplexField> {
    let mut f8 = [0u8; 8];
    let mut f4 = [0u8; 4];
    r.read_exact(&mut f8)?;
    let t = f64::from_le_bytes(f8);
    r.read_exact(&mut f8)?;
    let l = f64::from_le_bytes(f8);
    r.read_exact(&mut f4)?;
    let n = u32::from_le_bytes(f4) as usize;
    let mut field = ComplexField::new(l, n, t)?;
    for i in 0..n {
        r.read_exact(&mut f8)?;
        let re = f64::from_le_bytes(f8);
        r.read_exact(&mut f8)?;
        let im = f64::from_le_bytes(f8);
        field.values[i] = Complex64::new(re, im);
    }
    Ok(field)
}

/// Closed-form minimal-mass slice on a grid.
pub fn s_field(l: f64, n: usize, t: f64) -> Result<ComplexField> {
    ComplexField::from_fn(l, n, t, |x| eval_s(t, x).expect("t < 0"))
}

/// Propagate with dt = c_dt lambda^2, lambda = |t|, until t_end.
pub fn propagate(field: &mut ComplexField, t_end: f64, c_dt: f64, spectral: &mut Spectral) -> usize {
    let forward = t_end > field.t;
    let mut steps = 0;
    while (forward && field.t < t_end - 1e-15) || (!forward && field.t > t_end + 1e-15) {
        let lam = field.t.abs();
        let mut dt = c_dt * lam * lam;
        if forward {
            dt = dt.min(t_end - field.t);
        } else {
            dt = -dt.min(field.t - t_end);
        }
        step(field, dt, spectral);
        steps += 1;
    }
    steps
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

    #[test]
    fn soliton_step_local_accuracy() {
        // u = e^{it} Q solves the equation; one Strang step matches to O(dt^3)
        let l = 15.0;
        let n = 2048;
        let mut spectral = Spectral::new(l, n);
        for dt in [1e-3, 5e-4] {
            let mut u =
                ComplexField::from_fn(l, n, 0.0, |x| Complex64::new(eval_q(x), 0.0)).unwrap();
            step(&mut u, dt, &mut spectral);
            let mut err = 0.0f64;
            for i in 0..n {
                let want = Complex64::from_polar(eval_q(u.x(i)), dt);
                err = err.max((u.values[i] - want).norm());
            }
            assert!(err < 20.0 * dt * dt * dt, "one-step error {err} at dt {dt}");
        }
    }

    #[test]
    fn free_propagation_matches_gaussian_closed_form() {
        // |u|^4-small amplitude: the flow is effectively linear
        let l = 15.0;
        let n = 2048;
        let mut spectral = Spectral::new(l, n);
        let amp = 1e-4;
        let mut u = ComplexField::from_fn(l, n, 0.0, |x| {
            Complex64::new(amp * (-x * x).exp(), 0.0)
        })
        .unwrap();
        let t = 0.3;
        let steps = 300;
        for _ in 0..steps {
            step(&mut u, t / steps as f64, &mut spectral);
        }
        // i u_t + u_xx = 0 Gaussian: u = amp/sqrt(1+4it) exp(-x^2/(1+4it))
        let denom = Complex64::new(1.0, 4.0 * t);
        let mut err = 0.0f64;
        for i in 0..n {
            let x = u.x(i);
            let want = amp / denom.sqrt() * (-Complex64::new(x * x, 0.0) / denom).exp();
            err = err.max((u.values[i] - want).norm());
        }
        assert!(err < 1e-10, "free propagation error {err}");
    }

    #[test]
    fn s_propagation_and_mass_conservation() {
        let l = 15.0;
        let n = 4096;
        let mut spectral = Spectral::new(l, n);
        let mut errs = Vec::new();
        for c_dt in [1e-3, 5e-4] {
            let mut u = s_field(l, n, -1.0).unwrap();
            let m0 = u.l2_norm_sq();
            propagate(&mut u, -0.5, c_dt, &mut spectral);
            let m1 = u.l2_norm_sq();
            assert!((m1 - m0).abs() / m0 < 1e-10, "mass drift {}", (m1 - m0).abs() / m0);
            let sref = s_field(l, n, u.t).unwrap();
            let err = (u
                .values
                .iter()
                .zip(&sref.values)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                * u.dx())
            .sqrt();
            errs.push(err);
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "order-2 ratio {ratio}");
        // splitting-limited error at c_dt = 1e-3 (second order)
        assert!(errs[0] < 5e-5, "S propagation error {}", errs[0]);
    }

    #[test]
    fn conserved_quantities_of_reference_fields() {
        let l = 15.0;
        let n = 4096;
        let mut spectral = Spectral::new(l, n);
        let q = ComplexField::from_fn(l, n, 0.0, |x| Complex64::new(eval_q(x), 0.0)).unwrap();
        let c = conserved(&q, &mut spectral);
        assert_abs_diff_eq!(c.mass, 2.720699046351327, epsilon = 1e-9);
        assert!(c.energy.abs() < 1e-9, "E(Q) = {}", c.energy);
        assert!(c.momentum.abs() < 1e-12, "J(Q) = {}", c.momentum);
        let s = s_field(l, n, -0.5).unwrap();
        let cs = conserved(&s, &mut spectral);
        assert_abs_diff_eq!(cs.mass, 2.720699046351327, epsilon = 1e-8);
    }

    #[test]
    fn pseudo_conformal_maps_soliton_to_s() {
        let l = 15.0;
        let n = 4096;
        let u =
            ComplexField::from_fn(l, n, 1.0, |x| Complex64::from_polar(eval_q(x), 1.0)).unwrap();
        let v = pseudo_conformal(&u).unwrap();
        assert_eq!(v.t, -1.0);
        let sref = s_field(l, n, -1.0).unwrap();
        let mut err = 0.0f64;
        for i in 0..n {
            if v.x(i).abs() < 10.0 {
                err = err.max((v.values[i] - sref.values[i]).norm());
            }
        }
        assert!(err < 1e-10, "soliton -> S error {err}");
    }

    #[test]
    fn pseudo_conformal_involution_and_mass() {
        let l = 15.0;
        let n = 4096;
        let u = ComplexField::from_fn(l, n, -1.25, |x| {
            Complex64::new(0.8 * (-x * x).exp(), 0.1 * (-x * x / 2.0).exp())
        })
        .unwrap();
        let v = pseudo_conformal(&u).unwrap();
        let w = pseudo_conformal(&v).unwrap();
        assert_abs_diff_eq!(w.t, u.t, epsilon = 1e-14);
        let mut err = 0.0f64;
        for i in 0..n {
            err = err.max((w.values[i] - u.values[i]).norm());
        }
        assert!(err < 1e-9, "involution error {err}");
        let rel = (v.l2_norm_sq() - u.l2_norm_sq()).abs() / u.l2_norm_sq();
        assert!(rel < 1e-10, "transform mass drift {rel}");
    }

    #[test]
    fn pseudo_conformal_commutes_with_flow() {
        let l = 15.0;
        let n = 4096;
        let mut spectral = Spectral::new(l, n);
        let u0 = ComplexField::from_fn(l, n, -1.25, |x| {
            Complex64::new(0.8 * (-x * x).exp() * (1.0 + 0.3 * x.cos()), 0.0)
        })
        .unwrap();
        // path A: integrate -1.25 -> -1.0, then map to tau = 1.0
        let mut ua = u0.clone();
        let c_dt = 2e-4;
        while ua.t < -1.0 - 1e-15 {
            let dt = c_dt.min(-1.0 - ua.t);
            step(&mut ua, dt, &mut spectral);
        }
        let va = pseudo_conformal(&ua).unwrap();
        // path B: map to tau = 0.8, integrate 0.8 -> 1.0
        let mut vb = pseudo_conformal(&u0).unwrap();
        while vb.t < va.t - 1e-15 {
            let dt = c_dt.min(va.t - vb.t);
            step(&mut vb, dt, &mut spectral);
        }
        let err = (va
            .values
            .iter()
            .zip(&vb.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            * va.dx())
        .sqrt();
        assert!(err < 1e-5, "conformal consistency error {err}");
    }

    #[test]
    fn snapshot_roundtrip() {
        let u = ComplexField::from_fn(1.0, 64, -0.25, |x| Complex64::new(x, -x * x)).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&u, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 8 + 4 + 64 * 16);
        let v = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(v.t, u.t);
        assert_eq!(v.l, u.l);
        assert_eq!(v.values, u.values);
    }

    #[test]
    fn initial_data_mass_and_exit_value() {
        let a = ansatz();
        let cfg = SimConfig::default();
        let u = initial_data(&a, &cfg).unwrap();
        // mass = ∫Q^2 + O(delta^3)
        let m = u.l2_norm_sq();
        let dev = (m - 2.720699046351327).abs();
        assert!(dev < 5.0 * cfg.delta.powi(3), "mass deviation {dev}");
        // exit function at the terminal time equals beta
        let p = cfg.initial_params(a.lib.constants.alpha1).unwrap();
        let g = modulation::g_beta(cfg.n as f64, p.b, p.gamma, a.lib.constants.alpha1).unwrap();
        assert_abs_diff_eq!(g, cfg.beta, epsilon = 1e-12);
        let mut cfg_b = cfg.clone();
        cfg_b.beta = 0.5;
        let pb = cfg_b.initial_params(a.lib.constants.alpha1).unwrap();
        let gb = modulation::g_beta(cfg_b.n as f64, pb.b, pb.gamma, a.lib.constants.alpha1).unwrap();
        assert_abs_diff_eq!(gb, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn terminal_lambda_must_stay_positive() {
        let mut cfg = SimConfig::default();
        cfg.n = 2;
        cfg.beta = -0.99;
        assert!(cfg.initial_params(7.1).is_err());
    }
}
