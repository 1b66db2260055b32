//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use polycouple::BivariatePolyVec;
use statrs::function::erf::erfc;

/// `P(τ ≤ u)` for the first hitting time of level one by a standard Brownian motion.
pub fn hitting_cdf(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        erfc(1.0 / (2.0 * u).sqrt())
    }
}

/// One-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Central finite difference of order (p, q) with one Richardson step.
///
/// For total degree ≤ 4 the central stencil error is a pure `h²` term, so the
/// extrapolated value is exact up to rounding.
pub fn finite_difference(f: &BivariatePolyVec, p: u32, q: u32, x1: f64, x2: f64) -> Vec<f64> {
    let coarse = central_difference(f, p, q, x1, x2, 0.5);
    let fine = central_difference(f, p, q, x1, x2, 0.25);
    fine.iter().zip(coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect()
}

fn central_difference(f: &BivariatePolyVec, p: u32, q: u32, x1: f64, x2: f64, h: f64) -> Vec<f64> {
    // Weights and offsets of the k-th central difference, divided by h^k.
    let stencil = |k: u32| -> Vec<(f64, f64)> {
        (0..=k)
            .map(|i| {
                let binom = (0..i).fold(1.0, |acc, j| acc * f64::from(k - j) / f64::from(j + 1));
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                (sign * binom / h.powi(k as i32), (f64::from(k) / 2.0 - f64::from(i)) * h)
            })
            .collect()
    };
    let mut out = vec![0.0; f.dim_out()];
    for (wa, da) in stencil(p) {
        for (wb, db) in stencil(q) {
            for (o, v) in out.iter_mut().zip(f.eval(x1 + da, x2 + db)) {
                *o += wa * wb * v;
            }
        }
    }
    out
}

/// `|a − b|` relative to the larger magnitude.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
