//! Dense eigen-analysis for real nonsymmetric matrices.
//!
//! Eigenvalues come from a Householder reduction to upper Hessenberg form
//! followed by Francis double-shift QR sweeps (the EISPACK `orthes`/`hqr`
//! pair). Eigenvectors for a single simple eigenvalue are taken as the
//! null vector of the shifted matrix, computed by a complex SVD.

use std::cmp::Ordering;

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;

/// Two eigenvalues closer than this are treated as the same value when pairing.
pub const PAIRING_TOL: f64 = 1e-9;
/// An eigenvalue is simple when its nearest neighbour is farther than this.
pub const SIMPLICITY_GAP: f64 = 1e-8;
/// Largest Kronecker product (in entries) that [`kron`] will build.
pub const KRON_CAP_ENTRIES: usize = 4_000_000;

#[derive(Debug, thiserror::Error)]
pub enum SpectraError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("QR iteration failed to converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("eigenvalue {value} is not simple (nearest other eigenvalue at distance {gap:.3e})")]
    NotSimple { value: C64, gap: f64 },
    #[error("{value} is not an eigenvalue (closest eigenvalue at distance {distance:.3e})")]
    NotAnEigenvalue { value: C64, distance: f64 },
    #[error("normalization is degenerate: the eigenvector is orthogonal to the normalizing vector")]
    DegenerateNormalization,
    #[error("Kronecker product would have {entries} entries, cap is {cap}")]
    SizeOverflow { entries: usize, cap: usize },
}

/// Eigenvalues with multiplicity, sorted by real part then imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum(Vec<C64>);

impl ComplexSpectrum {
    pub fn new(mut values: Vec<C64>) -> Self {
        values.sort_by(cmp_re_im);
        Self(values)
    }

    pub fn values(&self) -> &[C64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_modulus(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.0.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.max_abs_imag() <= tol
    }

    pub fn sum(&self) -> C64 {
        self.0.iter().sum()
    }

    /// Every non-real value has its conjugate in the spectrum (within `tol`).
    pub fn is_conjugate_closed(&self, tol: f64) -> bool {
        let conj: Vec<C64> = self.0.iter().map(|z| z.conj()).collect();
        matched_distance(&self.0, &conj) <= tol
    }
}

fn cmp_re_im(a: &C64, b: &C64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// Distance between two multisets of complex numbers.
///
/// Pairs are formed greedily, closest pair first, and the largest paired
/// distance is returned. Unequal lengths give infinity.
pub fn matched_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(a.len() * b.len());
    for (i, za) in a.iter().enumerate() {
        for (j, zb) in b.iter().enumerate() {
            pairs.push(((za - zb).norm(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for (d, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        worst = worst.max(d);
        matched += 1;
        if matched == a.len() {
            break;
        }
    }
    worst
}

fn check_square(m: &DMatrix<f64>) -> Result<(), SpectraError> {
    if m.nrows() != m.ncols() {
        return Err(SpectraError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SpectraError::NonFinite);
    }
    Ok(())
}

/// Full spectrum of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<ComplexSpectrum, SpectraError> {
    check_square(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(ComplexSpectrum(Vec::new()));
    }
    // Row-major working copy; the sweeps below walk rows far more than columns.
    let mut h: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m[(i, j)]).collect()).collect();
    reduce_to_hessenberg(&mut h);
    hessenberg_qr(&mut h)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64, SpectraError> {
    Ok(eigenvalues(m)?.max_modulus())
}

fn reduce_to_hessenberg(h: &mut [Vec<f64>]) {
    let n = h.len();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![0.0; n];
    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[i][j];
            }
            f /= hh;
            for i in m..=high {
                h[i][j] -= f * ort[i];
            }
        }
        for row in h.iter_mut() {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * row[j];
            }
            f /= hh;
            for j in m..=high {
                row[j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m][m - 1] = scale * g;
    }
}

fn hessenberg_qr(h: &mut [Vec<f64>]) -> Result<ComplexSpectrum, SpectraError> {
    let nn = h.len();
    let eps = f64::EPSILON;
    let max_total = 30 * nn.max(10) * 4;
    let mut re = vec![0.0; nn];
    let mut im = vec![0.0; nn];

    let mut norm = 0.0;
    for (i, row) in h.iter().enumerate() {
        for v in &row[i.saturating_sub(1)..] {
            norm += v.abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut exshift = 0.0;
    let mut iter = 0usize;
    let mut total = 0usize;
    let (mut p, mut q, mut r, mut s, mut z): (f64, f64, f64, f64, f64);
    let (mut w, mut x, mut y): (f64, f64, f64);

    while n >= 0 {
        let nu = n as usize;
        // Find a negligible subdiagonal entry.
        let mut l = nu;
        while l > 0 {
            s = h[l - 1][l - 1].abs() + h[l][l].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[l][l - 1].abs() <= eps * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            re[nu] = h[nu][nu] + exshift;
            im[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            w = h[nu][nu - 1] * h[nu - 1][nu];
            p = (h[nu - 1][nu - 1] - h[nu][nu]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[nu][nu] += exshift;
            h[nu - 1][nu - 1] += exshift;
            x = h[nu][nu];
            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                re[nu - 1] = x + z;
                re[nu] = re[nu - 1];
                if z != 0.0 {
                    re[nu] = x - w / z;
                }
                im[nu - 1] = 0.0;
                im[nu] = 0.0;
            } else {
                re[nu - 1] = x + p;
                re[nu] = x + p;
                im[nu - 1] = z;
                im[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = h[nu][nu];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[nu - 1][nu - 1];
                w = h[nu][nu - 1] * h[nu - 1][nu];
            }
            // Exceptional shifts break cycles on pathological inputs.
            if iter == 10 {
                exshift += x;
                for (i, row) in h.iter_mut().enumerate().take(nu + 1) {
                    row[i] -= x;
                }
                s = h[nu][nu - 1].abs() + h[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for (i, row) in h.iter_mut().enumerate().take(nu + 1) {
                        row[i] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total += 1;
            if total > max_total {
                return Err(SpectraError::NoConvergence { iterations: total });
            }

            // Look for two consecutive small subdiagonal entries.
            let mut m = nu - 2;
            loop {
                z = h[m][m];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[m + 1][m] + h[m][m + 1];
                q = h[m + 1][m + 1] - z - r - s;
                r = h[m + 2][m + 1];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[m][m - 1].abs() * (q.abs() + r.abs())
                    < eps * (p.abs() * (h[m - 1][m - 1].abs() + z.abs() + h[m + 1][m + 1].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                h[i][i - 2] = 0.0;
                if i > m + 2 {
                    h[i][i - 3] = 0.0;
                }
            }

            // Double-shift QR step on rows/columns l..=n.
            for k in m..nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[k][k - 1];
                    q = h[k + 1][k - 1];
                    r = if notlast { h[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[k][k - 1] = -s * x;
                    } else if l != m {
                        h[k][k - 1] = -h[k][k - 1];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        let mut pp = h[k][j] + q * h[k + 1][j];
                        if notlast {
                            pp += r * h[k + 2][j];
                            h[k + 2][j] -= pp * z;
                        }
                        h[k][j] -= pp * x;
                        h[k + 1][j] -= pp * y;
                    }
                    for row in h.iter_mut().take(nu.min(k + 3) + 1) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if notlast {
                            pp += z * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k] -= pp;
                        row[k + 1] -= pp * q;
                    }
                }
            }
        }
    }

    Ok(ComplexSpectrum::new(
        re.into_iter().zip(im).map(|(a, b)| C64::new(a, b)).collect(),
    ))
}

/// How a computed eigenvector is scaled.
#[derive(Debug, Clone)]
pub enum Normalization {
    /// `u^T 1 = 1`.
    SumToOne,
    /// `u^T mask = 1` for a real weighting vector (e.g. `[1; 0]`).
    Against(DVector<f64>),
    /// `u^T v = 1` where `v` is the matching right eigenvector.
    UnitDotWithRight,
}

fn locate_simple(m: &DMatrix<f64>, lambda: C64) -> Result<(), SpectraError> {
    let spectrum = eigenvalues(m)?;
    let vals = spectrum.values();
    let (idx, distance) = vals
        .iter()
        .enumerate()
        .map(|(i, z)| (i, (z - lambda).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty spectrum");
    let scale = m.amax().max(1.0);
    if distance > 1e-6 * scale {
        return Err(SpectraError::NotAnEigenvalue { value: lambda, distance });
    }
    let gap = vals
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != idx)
        .map(|(_, z)| (z - lambda).norm())
        .fold(f64::INFINITY, f64::min);
    if gap <= SIMPLICITY_GAP {
        return Err(SpectraError::NotSimple { value: lambda, gap });
    }
    Ok(())
}

fn null_vector(shifted: DMatrix<C64>) -> DVector<C64> {
    let n = shifted.nrows();
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^H");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    DVector::from_iterator(n, v_t.row(idx).iter().map(|z| z.conj()))
}

fn shifted_complex(m: &DMatrix<f64>, lambda: C64, transpose: bool) -> DMatrix<C64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let v = if transpose { m[(j, i)] } else { m[(i, j)] };
        let mut z = C64::new(v, 0.0);
        if i == j {
            z -= lambda;
        }
        z
    })
}

/// Right eigenvector `v` with `M v = lambda v`, scaled to unit 2-norm.
pub fn right_eigenvector(m: &DMatrix<f64>, lambda: C64) -> Result<DVector<C64>, SpectraError> {
    check_square(m)?;
    locate_simple(m, lambda)?;
    Ok(null_vector(shifted_complex(m, lambda, false)))
}

/// Left eigenvector `u` with `u^T M = lambda u^T` for a simple eigenvalue.
pub fn left_eigenvector(
    m: &DMatrix<f64>,
    lambda: C64,
    normalization: &Normalization,
) -> Result<DVector<C64>, SpectraError> {
    check_square(m)?;
    locate_simple(m, lambda)?;
    let u = null_vector(shifted_complex(m, lambda, true));
    let denom: C64 = match normalization {
        Normalization::SumToOne => u.iter().sum(),
        Normalization::Against(mask) => u.iter().zip(mask.iter()).map(|(a, &b)| a * b).sum(),
        Normalization::UnitDotWithRight => {
            let v = null_vector(shifted_complex(m, lambda, false));
            u.iter().zip(v.iter()).map(|(a, b)| a * b).sum()
        }
    };
    if denom.norm() < 1e-12 {
        return Err(SpectraError::DegenerateNormalization);
    }
    Ok(u / denom)
}

/// Real part of a left eigenvector, for eigenvalues known to be real.
pub fn left_eigenvector_real(
    m: &DMatrix<f64>,
    lambda: f64,
    normalization: &Normalization,
) -> Result<DVector<f64>, SpectraError> {
    let u = left_eigenvector(m, C64::new(lambda, 0.0), normalization)?;
    Ok(u.map(|z| z.re))
}

/// Kronecker product with the default size cap.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, SpectraError> {
    kron_with_cap(a, b, KRON_CAP_ENTRIES)
}

pub fn kron_with_cap(a: &DMatrix<f64>, b: &DMatrix<f64>, cap: usize) -> Result<DMatrix<f64>, SpectraError> {
    let rows = a.nrows() * b.nrows();
    let cols = a.ncols() * b.ncols();
    let entries = rows.saturating_mul(cols);
    if entries > cap {
        return Err(SpectraError::SizeOverflow { entries, cap });
    }
    Ok(a.kronecker(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn mat(n: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, data)
    }

    #[test]
    fn identity_and_rotation() {
        let s = eigenvalues(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.values(), &[c(1.0, 0.0); 3]);

        let s = eigenvalues(&mat(2, &[0.0, 1.0, -1.0, 0.0])).unwrap();
        assert!(matched_distance(s.values(), &[c(0.0, 1.0), c(0.0, -1.0)]) < 1e-14);
        assert_eq!(s.values()[0].im, -1.0);
    }

    #[test]
    fn directed_three_cycle_laplacian() {
        // Characteristic polynomial lambda (lambda^2 - 3 lambda + 3).
        let l = mat(3, &[1.0, 0.0, -1.0, -1.0, 1.0, 0.0, 0.0, -1.0, 1.0]);
        let s = eigenvalues(&l).unwrap();
        let h = 3f64.sqrt() / 2.0;
        let expected = [c(0.0, 0.0), c(1.5, h), c(1.5, -h)];
        assert!(matched_distance(s.values(), &expected) < 1e-12, "{:?}", s);
    }

    #[test]
    fn spectral_radius_examples() {
        assert_eq!(spectral_radius(&DMatrix::identity(4, 4)).unwrap(), 1.0);
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
        assert_eq!(spectral_radius(&mat(2, &[0.0, 2.0, 0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            eigenvalues(&DMatrix::zeros(2, 3)),
            Err(SpectraError::NotSquare { rows: 2, cols: 3 })
        ));
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(eigenvalues(&m), Err(SpectraError::NonFinite)));
    }

    #[test]
    fn companion_matrix_roots() {
        // Roots 1..=6 of prod (x - k).
        let coeffs = [720.0, -1764.0, 1624.0, -735.0, 175.0, -21.0];
        let n = coeffs.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 1..n {
            m[(i, i - 1)] = 1.0;
        }
        for i in 0..n {
            m[(i, n - 1)] = -coeffs[i];
        }
        let s = eigenvalues(&m).unwrap();
        let expected: Vec<C64> = (1..=6).map(|k| c(k as f64, 0.0)).collect();
        assert!(matched_distance(s.values(), &expected) < 1e-8, "{:?}", s);
    }

    #[test]
    fn left_eigenvector_doubly_stochastic() {
        let p = mat(3, &[0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5]);
        let u = left_eigenvector_real(&p, 1.0, &Normalization::SumToOne).unwrap();
        for v in u.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn left_eigenvector_rejects_repeated_eigenvalue() {
        let err = left_eigenvector(&DMatrix::identity(3, 3), c(1.0, 0.0), &Normalization::SumToOne);
        assert!(matches!(err, Err(SpectraError::NotSimple { .. })));
        let err = left_eigenvector(&DMatrix::identity(3, 3), c(2.0, 0.0), &Normalization::SumToOne);
        assert!(matches!(err, Err(SpectraError::NotAnEigenvalue { .. })));
    }

    #[test]
    fn complex_left_eigenvector_residual() {
        let m = mat(3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let lambda = c(-0.5, 3f64.sqrt() / 2.0);
        let u = left_eigenvector(&m, lambda, &Normalization::UnitDotWithRight).unwrap();
        let mc = m.map(|v| C64::new(v, 0.0));
        let res = (u.transpose() * &mc - u.transpose() * lambda).norm();
        assert!(res < 1e-12, "residual {res}");
        let v = right_eigenvector(&m, lambda).unwrap();
        let dot: C64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        assert!((dot - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn kron_block_diagonal_and_cap() {
        let m = mat(2, &[1.0, 2.0, 3.0, 4.0]);
        let k = kron(&DMatrix::identity(2, 2), &m).unwrap();
        assert_eq!(k.view((0, 0), (2, 2)), m);
        assert_eq!(k.view((2, 2), (2, 2)), m);
        assert_eq!(k.view((0, 2), (2, 2)), DMatrix::<f64>::zeros(2, 2));
        assert!(matches!(
            kron_with_cap(&m, &m, 15),
            Err(SpectraError::SizeOverflow { entries: 16, cap: 15 })
        ));
    }

    #[test]
    fn matched_distance_basics() {
        let a = [c(1.0, 0.0), c(2.0, 0.0)];
        assert_eq!(matched_distance(&a, &[c(2.0, 0.0), c(1.0, 0.0)]), 0.0);
        assert_eq!(matched_distance(&a, &[c(1.0, 0.0)]), f64::INFINITY);
        assert!((matched_distance(&a, &[c(1.0, 0.5), c(2.0, 0.0)]) - 0.5).abs() < 1e-15);
    }

    fn arb_matrix(max_n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (1..=max_n).prop_flat_map(|n| {
            proptest::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transpose_has_same_spectrum(m in arb_matrix(9)) {
            let a = eigenvalues(&m).unwrap();
            let b = eigenvalues(&m.transpose()).unwrap();
            prop_assert!(matched_distance(a.values(), b.values()) < 1e-8 * m.amax().max(1.0).powi(1) * 10.0);
        }

        #[test]
        fn trace_and_conjugate_closure(m in arb_matrix(12)) {
            let s = eigenvalues(&m).unwrap();
            prop_assert_eq!(s.len(), m.nrows());
            let n = m.nrows() as f64;
            let inf_norm = m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
            let sum = s.sum();
            prop_assert!((sum.re - m.trace()).abs() <= 1e-8 * n * inf_norm.max(1.0));
            prop_assert!(sum.im.abs() <= 1e-8 * n * inf_norm.max(1.0));
            prop_assert!(s.is_conjugate_closed(PAIRING_TOL));
        }

        #[test]
        fn nonnegative_radius_below_norms(v in proptest::collection::vec(0.0f64..1.0, 36)) {
            let m = DMatrix::from_row_slice(6, 6, &v);
            let rho = spectral_radius(&m).unwrap();
            let inf = m.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
            let one = m.column_iter().map(|c| c.sum()).fold(0.0, f64::max);
            prop_assert!(rho <= inf.min(one) + 1e-12);
        }

        #[test]
        fn kron_mixed_product(a in arb_matrix(2), b in arb_matrix(2)) {
            prop_assume!(a.nrows() == 2 && b.nrows() == 2);
            let c_ = b.transpose();
            let d = a.transpose() * 0.5;
            let lhs = kron(&a, &b).unwrap() * kron(&c_, &d).unwrap();
            let rhs = kron(&(&a * &c_), &(&b * &d)).unwrap();
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }

        #[test]
        fn kron_spectrum_is_product(a in arb_matrix(2), b in arb_matrix(2)) {
            prop_assume!(a.nrows() == 2 && b.nrows() == 2);
            let sa = eigenvalues(&a).unwrap();
            let sb = eigenvalues(&b).unwrap();
            let products: Vec<C64> = sa.values().iter()
                .flat_map(|x| sb.values().iter().map(move |y| x * y))
                .collect();
            let sk = eigenvalues(&kron(&a, &b).unwrap()).unwrap();
            // Products of nearly-defective pairs carry sqrt(eps) error.
            prop_assert!(matched_distance(sk.values(), &products) < 1e-6);
        }
    }
}
