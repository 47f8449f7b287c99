//! Mutual information of linear Gaussian channels with colored noise.

use crate::channel::SnrPoint;
use crate::error::{Error, Result};
use crate::{CMatrix, Complex64};

/// Frame mutual information in bits.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MiResult {
    pub bits: f64,
}

/// `log2 det(I + rho * Sigma^-1 * H * H^H)` for the model
/// `y = sqrt(rho) * H * x + n`, `x ~ CN(0, I)`, `n ~ CN(0, Sigma)`.
///
/// The noise is whitened with the Cholesky factor `Sigma = L L^H`, which
/// turns the determinant into that of the Hermitian positive definite matrix
/// `I + rho * G G^H` with `G = L^-1 H`; its log-determinant is read off a
/// second Cholesky factorization.
pub fn gaussian_mi(signal: &CMatrix, noise_cov: &CMatrix, rho: SnrPoint) -> Result<MiResult> {
    let n = noise_cov.nrows();
    if noise_cov.ncols() != n {
        return Err(Error::InvalidConfig(format!(
            "noise covariance must be square, got {}x{}",
            n,
            noise_cov.ncols()
        )));
    }
    if signal.nrows() != n {
        return Err(Error::InvalidConfig(format!(
            "signal matrix has {} rows but noise covariance is {n}x{n}",
            signal.nrows()
        )));
    }
    if n == 0 {
        return Ok(MiResult { bits: 0.0 });
    }
    check_hermitian(noise_cov)?;

    let cols = signal.ncols();
    // Whitened signal, row-major: row i of L^-1 H.
    let mut w = vec![Complex64::new(0.0, 0.0); n * cols];
    for i in 0..n {
        for j in 0..cols {
            w[i * cols + j] = signal[(i, j)];
        }
    }
    if is_diagonal(noise_cov) {
        for i in 0..n {
            let d = noise_cov[(i, i)].re;
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NumericDomain(
                    "noise covariance is not positive definite".into(),
                ));
            }
            let scale = 1.0 / d.sqrt();
            w[i * cols..(i + 1) * cols]
                .iter_mut()
                .for_each(|z| *z *= scale);
        }
    } else {
        let mut factor: Vec<Complex64> = (0..n * n).map(|k| noise_cov[(k / n, k % n)]).collect();
        if !cholesky_in_place(&mut factor, n) {
            return Err(Error::NumericDomain(
                "noise covariance is not positive definite".into(),
            ));
        }
        for i in 0..n {
            let (done, rest) = w.split_at_mut(i * cols);
            let row = &mut rest[..cols];
            for k in 0..i {
                let lik = factor[i * n + k];
                for (x, y) in row.iter_mut().zip(&done[k * cols..(k + 1) * cols]) {
                    *x -= lik * y;
                }
            }
            let inv = 1.0 / factor[i * n + i].re;
            row.iter_mut().for_each(|z| *z *= inv);
        }
    }

    // Lower triangle of I + rho W W^H, row-major.
    let r = rho.linear();
    let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        let wi = &w[i * cols..(i + 1) * cols];
        for k in 0..=i {
            let wk = &w[k * cols..(k + 1) * cols];
            let dot: Complex64 = wi.iter().zip(wk).map(|(a, b)| a * b.conj()).sum();
            gram[i * n + k] = dot * r;
        }
        gram[i * n + i] += Complex64::new(1.0, 0.0);
    }
    if !cholesky_in_place(&mut gram, n) {
        return Err(Error::NumericDomain(
            "I + rho G G^H lost positive definiteness (non-finite input?)".into(),
        ));
    }
    let ln_det: f64 = (0..n).map(|i| 2.0 * gram[i * n + i].re.ln()).sum();
    let bits = ln_det / std::f64::consts::LN_2;
    if !bits.is_finite() {
        return Err(Error::NumericDomain(format!(
            "mutual information is {bits}"
        )));
    }
    Ok(MiResult {
        bits: bits.max(0.0),
    })
}

fn is_diagonal(m: &CMatrix) -> bool {
    let n = m.nrows();
    (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == Complex64::new(0.0, 0.0)))
}

/// Overwrites the lower triangle of a row-major Hermitian `n x n` matrix with
/// its Cholesky factor. Returns false unless every pivot is real, positive
/// and finite.
fn cholesky_in_place(m: &mut [Complex64], n: usize) -> bool {
    for j in 0..n {
        let row_j = &mut m[j * n..j * n + n];
        let d = row_j[j].re - row_j[..j].iter().map(|z| z.norm_sqr()).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        row_j[j] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let (upper, lower) = m.split_at_mut(i * n);
            let row_j = &upper[j * n..j * n + j];
            let row_i = &mut lower[..n];
            let s: Complex64 = row_i[..j]
                .iter()
                .zip(row_j)
                .map(|(a, b)| a * b.conj())
                .sum();
            row_i[j] = (row_i[j] - s) / d;
        }
    }
    true
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    let n = m.nrows();
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    for i in 0..n {
        if m[(i, i)].im.abs() > 1e-12 * scale {
            return Err(Error::NumericDomain(
                "noise covariance diagonal is not real".into(),
            ));
        }
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > 1e-12 * scale {
                return Err(Error::NumericDomain(
                    "noise covariance is not Hermitian".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Exact outage probability of a single unit-variance Rayleigh link,
/// `P[log2(1 + rho |h|^2) < rate] = 1 - exp(-(2^rate - 1) / rho)`.
///
/// Nonpositive rates give zero.
pub fn direct_outage_closed_form(rho: SnrPoint, rate_bpcu: f64) -> f64 {
    if rate_bpcu <= 0.0 {
        return 0.0;
    }
    -(-(rate_bpcu.exp2() - 1.0) / rho.linear()).exp_m1()
}
