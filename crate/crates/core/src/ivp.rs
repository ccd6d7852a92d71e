//! Fixed-step classical RK4 for small linear systems sampled exactly at
//! grid nodes. Step size equals the grid step, so the midpoint evaluations
//! land on half-grid points; right-hand sides that depend on tabulated
//! fields are therefore tabulated at half-grid resolution and never
//! interpolated inside the integrator.

/// Integrate dv/dy = rhs(y, v) from node i0 to node i1 of the uniform grid
/// {0, h, ...}, in either direction, recording the state at every node
/// visited. `out[i]` is written for each node index i between i0 and i1
/// inclusive; `out` must have at least max(i0, i1)+1 rows.
pub fn rk4_on_grid<const N: usize>(
    h: f64,
    i0: usize,
    i1: usize,
    v0: [f64; N],
    mut rhs: impl FnMut(f64, &[f64; N]) -> [f64; N],
    out: &mut [[f64; N]],
) {
    let mut v = v0;
    out[i0] = v;
    if i0 == i1 {
        return;
    }
    let forward = i1 > i0;
    let step = if forward { h } else { -h };
    let n_steps = i0.abs_diff(i1);
    let mut idx = i0;
    for _ in 0..n_steps {
        let y = idx as f64 * h;
        let k1 = rhs(y, &v);
        let v2 = add_scaled(&v, &k1, step / 2.0);
        let k2 = rhs(y + step / 2.0, &v2);
        let v3 = add_scaled(&v, &k2, step / 2.0);
        let k3 = rhs(y + step / 2.0, &v3);
        let v4 = add_scaled(&v, &k3, step);
        let k4 = rhs(y + step, &v4);
        for i in 0..N {
            v[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        idx = if forward { idx + 1 } else { idx - 1 };
        out[idx] = v;
    }
}

fn add_scaled<const N: usize>(v: &[f64; N], k: &[f64; N], c: f64) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = v[i] + c * k[i];
    }
    out
}
