//! Adaptive Gauss-Kronrod (7/15) quadrature on `f64` integrands.

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

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One G7/K15 panel: `(kronrod, |kronrod - gauss|)`.
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_err: f64,
    pub panels: usize,
    pub converged: bool,
}

/// Adaptive bisection until the summed error estimate is below
/// `max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> QuadResult {
    const MAX_PANELS: usize = 4000;
    let (v0, e0) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v0, e0)];
    let mut total = v0;
    let mut err = e0;
    let mut count = 1;
    loop {
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return QuadResult { value: total, abs_err: err, panels: count, converged: true };
        }
        if count >= MAX_PANELS {
            return QuadResult { value: total, abs_err: err, panels: count, converged: false };
        }
        // Split the panel with the largest error.
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("nonempty");
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let m = 0.5 * (pa + pb);
        if !(m > pa && m < pb) {
            // Panel collapsed to machine resolution; accept its estimate.
            panels.push((pa, pb, pv, 0.0));
            err -= pe;
            continue;
        }
        let (lv, le) = gk15(&f, pa, m);
        let (rv, re) = gk15(&f, m, pb);
        total += lv + rv - pv;
        err += le + re - pe;
        panels.push((pa, m, lv, le));
        panels.push((m, pb, rv, re));
        count += 2;
        if count % 64 == 1 {
            // Guard against drift in the running sums.
            total = panels.iter().map(|p| p.2).sum();
            err = panels.iter().map(|p| p.3).sum();
        }
    }
}
