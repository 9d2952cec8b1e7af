//! Adaptive Gauss–Kronrod quadrature (7/15 point pair) and a composite
//! tensor-product rule for two-dimensional boxes.

#![allow(clippy::excessive_precision)]

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("adaptive quadrature did not converge: estimated error {error:e} exceeds {tol:e}")]
    NotConverged { error: f64, tol: f64 },
    #[error("tensor quadrature did not converge: successive refinements differ by {delta:e}")]
    TensorNotConverged { delta: f64 },
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One G7/K15 panel: returns (Kronrod estimate, |Kronrod − Gauss|).
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        kron += w * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive bisection driven by the G7/K15 error estimate until the summed
/// error estimate is below `abs_tol`.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Result<f64, QuadError> {
    const MAX_PANELS: usize = 20_000;
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = gk15(&mut f, a, b);
    panels.push((a, b, v, e));
    loop {
        let total_err: f64 = panels.iter().map(|p| p.3).sum();
        if total_err <= abs_tol {
            return Ok(panels.iter().map(|p| p.2).sum());
        }
        if panels.len() >= MAX_PANELS {
            return Err(QuadError::NotConverged {
                error: total_err,
                tol: abs_tol,
            });
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        panels.push((lo, mid, v1, e1));
        panels.push((mid, hi, v2, e2));
    }
}

/// Integrates over `[a, b]` after splitting at the given interior breakpoints.
pub fn integrate_with_breaks(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
) -> Result<f64, QuadError> {
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    cuts.extend(inner);
    cuts.push(b);
    let share = abs_tol / (cuts.len() - 1) as f64;
    let mut sum = 0.0;
    for w in cuts.windows(2) {
        sum += integrate(&mut f, w[0], w[1], share)?;
    }
    Ok(sum)
}

/// Nodes and weights of the composite 15-point Kronrod rule with `panels`
/// equal panels on `[a, b]`.
pub fn composite_nodes(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(15 * panels);
    for p in 0..panels {
        let lo = a + width * p as f64;
        let c = lo + 0.5 * width;
        let h = 0.5 * width;
        for (&x, &w) in XGK.iter().zip(WGK.iter()).take(7) {
            out.push((c - h * x, w * h));
            out.push((c + h * x, w * h));
        }
        out.push((c, WGK[7] * h));
    }
    out
}

/// Tensor-product composite rule on `[a0,b0]×[a1,b1]`, doubling the panel
/// count until successive estimates agree to `rel_tol` (relative to
/// `max(|I|, abs_floor)`).
pub fn integrate_box(
    f: impl Fn(f64, f64) -> f64,
    (a0, b0): (f64, f64),
    (a1, b1): (f64, f64),
    rel_tol: f64,
    abs_floor: f64,
) -> Result<(f64, usize), QuadError> {
    let eval = |panels: usize| {
        let nx = composite_nodes(a0, b0, panels);
        let ny = composite_nodes(a1, b1, panels);
        let mut s = 0.0;
        for &(x, wx) in &nx {
            for &(y, wy) in &ny {
                s += wx * wy * f(x, y);
            }
        }
        (s, nx.len())
    };
    let mut panels = 5;
    let (mut prev, _) = eval(panels);
    let mut delta = f64::INFINITY;
    while panels <= 320 {
        panels *= 2;
        let (cur, nodes) = eval(panels);
        delta = (cur - prev).abs();
        if delta <= rel_tol * cur.abs().max(abs_floor) {
            return Ok((cur, nodes));
        }
        prev = cur;
    }
    Err(QuadError::TensorNotConverged { delta })
}
