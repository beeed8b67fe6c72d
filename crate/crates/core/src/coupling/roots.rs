use num_complex::Complex64;

use crate::eigensolve::jacobi_eigen;
use crate::error::{Error, Result};

/// Iteration cap of the simultaneous root iteration.
pub const DURAND_KERNER_MAX_ITER: usize = 200;
/// Singular-value threshold (relative to `||A||`) defining a null direction.
pub const NULL_TOL: f64 = 1e-8;

fn max_abs(a: &[Vec<f64>]) -> f64 {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

/// Coefficients `c_0..=c_p` of `det(tau E - A)` by Faddeev-LeVerrier.
pub fn characteristic_polynomial(a: &[Vec<f64>]) -> Vec<f64> {
    let p = a.len();
    let mut c = vec![0.0; p + 1];
    c[p] = 1.0;
    let mut m = vec![vec![0.0; p]; p];
    for k in 1..=p {
        // M_k = A M_{k-1} + c_{p-k+1} I
        let mut next = vec![vec![0.0; p]; p];
        for i in 0..p {
            for j in 0..p {
                next[i][j] = (0..p).map(|r| a[i][r] * m[r][j]).sum::<f64>();
            }
            next[i][i] += c[p - k + 1];
        }
        m = next;
        let tr: f64 = (0..p).map(|i| (0..p).map(|r| a[i][r] * m[r][i]).sum::<f64>()).sum();
        c[p - k] = -tr / k as f64;
    }
    c
}

fn horner(c: &[f64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * z + ck)
}

fn durand_kerner(c: &[f64]) -> Result<Vec<Complex64>> {
    let p = c.len() - 1;
    let seed = Complex64::new(0.4, 0.9);
    let mut z: Vec<Complex64> = (0..p).map(|i| seed.powu(i as u32 + 1)).collect();
    for _ in 0..DURAND_KERNER_MAX_ITER {
        let mut delta: f64 = 0.0;
        for i in 0..p {
            let mut den = Complex64::new(1.0, 0.0);
            for j in 0..p {
                if j != i {
                    den *= z[i] - z[j];
                }
            }
            let step = horner(c, z[i]) / den;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta <= 1e-14 * (1.0 + z.iter().fold(0.0f64, |m, w| m.max(w.norm()))) {
            return Ok(z);
        }
    }
    let residuals: Vec<f64> = z.iter().map(|&w| horner(c, w).norm()).collect();
    Err(Error::Numerical(format!(
        "root iteration did not converge in {DURAND_KERNER_MAX_ITER} steps; residuals {residuals:?}"
    )))
}

/// Roots of `det(tau E - A)` with multiplicity, ordered by modulus; ties
/// (equal modulus) are broken by ascending value.
pub fn tau_roots(a: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    let p = a.len();
    if a.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("coupling matrix must be square"));
    }
    if p > 6 {
        return Err(Error::invalid(format!("matrix size {p} exceeds 6")));
    }
    let mut roots = match p {
        0 => Vec::new(),
        1 => vec![Complex64::new(a[0][0], 0.0)],
        2 => {
            let tr = a[0][0] + a[1][1];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let disc = Complex64::new(0.25 * tr * tr - det, 0.0).sqrt();
            vec![0.5 * tr - disc, 0.5 * tr + disc]
        }
        _ => {
            let scale = max_abs(a);
            if scale == 0.0 {
                vec![Complex64::new(0.0, 0.0); p]
            } else {
                let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|x| x / scale).collect()).collect();
                durand_kerner(&characteristic_polynomial(&scaled))?
                    .into_iter()
                    .map(|z| z * scale)
                    .collect()
            }
        }
    };
    let top = roots.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let tie = 1e-12 * top;
    roots.sort_by(|x, y| {
        let (mx, my) = (x.norm(), y.norm());
        if (mx - my).abs() <= tie {
            x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
        } else {
            mx.total_cmp(&my)
        }
    });
    Ok(roots)
}

/// Unit null vectors of `tau E - A`. Every direction with singular value below
/// `NULL_TOL ||A||` is returned; at least the smallest one always is.
pub fn eigvec_coeffs(a: &[Vec<f64>], tau: f64) -> Result<Vec<Vec<f64>>> {
    let p = a.len();
    if p == 0 {
        return Ok(Vec::new());
    }
    let mut b = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            b[i * p + j] = if i == j { tau } else { 0.0 } - a[i][j];
        }
    }
    let mut n = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            n[i * p + j] = (0..p).map(|r| b[r * p + i] * b[r * p + j]).sum();
        }
    }
    let (vals, vecs) = jacobi_eigen(&n, p)?;
    let tol = (NULL_TOL * max_abs(a)).powi(2);
    let mut out = Vec::new();
    for (idx, &v) in vals.iter().enumerate() {
        if idx > 0 && v > tol {
            break;
        }
        let mut k: Vec<f64> = (0..p).map(|r| vecs[r * p + idx]).collect();
        let norm = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lead = k.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        k.iter_mut().for_each(|x| *x *= sign / norm);
        out.push(k);
    }
    Ok(out)
}
