//! Gauss–Hermite rules for expectations over a standard normal.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Nodes `xᵢ` and weights `wᵢ` with `∫ e^{−x²} f(x) dx ≈ Σ wᵢ f(xᵢ)`.
///
/// Roots are found by Newton iteration on the orthonormal Hermite
/// recurrence, seeded from the usual asymptotic guesses. Nodes are
/// returned in ascending order.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::validation("shock_samples", "quadrature needs at least one node"));
    }
    const MAX_ITER: usize = 100;
    let pim4 = PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..MAX_ITER {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    x.reverse();
    w.reverse();
    Ok((x, w))
}

/// Nodes and probability weights for `E[f(Z)]`, `Z ~ N(0, 1)`.
pub fn standard_normal_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w) = gauss_hermite(n)?;
    let nodes = x.iter().map(|xi| xi * std::f64::consts::SQRT_2).collect();
    let weights = w.iter().map(|wi| wi / PI.sqrt()).collect();
    Ok((nodes, weights))
}
