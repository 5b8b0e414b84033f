//! Spectral analysis of the expected update matrix and its second moment.
//!
//! The expected matrix splits as `W_bar = W0 + eps E` with
//!
//! ```text
//! W0 = [ I - L_bar   0     ]     E = [ 0    D_bar ]
//!      [ L_bar       S_bar ]         [ 0   -D_bar ]
//! ```
//!
//! where `L_bar = L / n`, `D_bar = diag(sum_k d^(k)) / n` and
//! `S_bar = (1 - 1/n) I + B / n`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::graph::{laplacian, DiGraph};
use crate::protocol::{assemble_wk, ParamScheme, SchemeKind};
use crate::spectra::{
    self, eigenvalues, left_eigenvector_real, ComplexSpectrum, Normalization, SpectraError, C64,
};

/// Distance to 1 within which an eigenvalue counts as the unit eigenvalue.
pub const UNIT_TOL: f64 = 1e-8;
/// Margin below 1 that every other eigenvalue modulus must clear.
pub const STABILITY_MARGIN: f64 = 1e-10;
/// Largest imaginary part for which a Laplacian spectrum counts as real.
pub const REAL_SPECTRUM_TOL: f64 = 1e-8;
/// Largest `n` for which the second-moment matrix is formed.
pub const KRON_MAX_N: usize = 22;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Spectra(#[from] SpectraError),
    #[error("1 is not a simple, dominant eigenvalue of the expected matrix")]
    NotSimple,
    #[error("second-moment matrix for n = {n} exceeds the cap n <= {cap}")]
    SizeOverflow { n: usize, cap: usize },
    #[error("v is not a normalized left fixed vector of B (residual {residual:e})")]
    BadStationaryVector { residual: f64 },
    #[error("xi_n = {0} lies outside [0, 2]")]
    XiOutOfRange(f64),
    #[error("xi_2 must be positive, got {0}")]
    BadXi(f64),
    #[error("n must be at least 2, got {0}")]
    TooFewNodes(usize),
}

/// `W_bar` together with the blocks of its `W0 + eps E` split.
#[derive(Debug, Clone)]
pub struct ExpectedMatrix {
    pub w_bar: DMatrix<f64>,
    pub w0: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub l_bar: DMatrix<f64>,
    pub d_bar: DMatrix<f64>,
    pub s_bar: DMatrix<f64>,
}

/// Averages `W_k` over all broadcasters and builds the block split
/// independently from `A`, `B` and `d`.
pub fn expected_matrix(scheme: &ParamScheme) -> ExpectedMatrix {
    let n = scheme.n();
    let nf = n as f64;
    let mut w_bar = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        w_bar += assemble_wk(scheme, k);
    }
    w_bar /= nf;

    let l_bar = scheme.laplacian() / nf;
    let d_bar = DMatrix::from_diagonal(&scheme.d.column_sum()) / nf;
    let s_bar = DMatrix::identity(n, n) * (1.0 - 1.0 / nf) + &scheme.b / nf;

    let mut w0 = DMatrix::zeros(2 * n, 2 * n);
    w0.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) - &l_bar));
    w0.view_mut((n, 0), (n, n)).copy_from(&l_bar);
    w0.view_mut((n, n), (n, n)).copy_from(&s_bar);
    let mut e = DMatrix::zeros(2 * n, 2 * n);
    e.view_mut((0, n), (n, n)).copy_from(&d_bar);
    e.view_mut((n, n), (n, n)).copy_from(&(-&d_bar));

    ExpectedMatrix {
        w_bar,
        w0,
        e,
        l_bar,
        d_bar,
        s_bar,
    }
}

/// Spectrum of `W_bar` and, when 1 is simple and dominant, its left
/// eigenvector normalized so that `w1^T 1 = 1`.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub spectrum: ComplexSpectrum,
    pub is_simple_one: bool,
    pub second_largest_modulus: f64,
    pub second_largest_value: C64,
    pub w1: Option<DVector<f64>>,
    pub w2: Option<DVector<f64>>,
}

/// Spectrum summary without eigenvectors: `(is_simple_one, second value)`.
fn summarize(spectrum: &ComplexSpectrum) -> (bool, C64) {
    let one = C64::new(1.0, 0.0);
    let vals = spectrum.values();
    let near_one = vals.iter().filter(|z| (*z - one).norm() <= UNIT_TOL).count();
    let unit_idx = vals
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - one).norm().total_cmp(&(b.1 - one).norm()))
        .map(|(i, _)| i);
    // Among equal moduli prefer the real, then the upper-half-plane member.
    let second = vals
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != unit_idx)
        .map(|(_, z)| *z)
        .max_by(|a, b| {
            a.norm()
                .total_cmp(&b.norm())
                .then_with(|| b.im.abs().total_cmp(&a.im.abs()))
                .then_with(|| a.im.total_cmp(&b.im))
        })
        .unwrap_or(C64::new(0.0, 0.0));
    let simple = near_one == 1 && second.norm() < 1.0 - STABILITY_MARGIN;
    (simple, second)
}

/// Classifies `W_bar` for convergence in expectation.
pub fn classify_expectation(scheme: &ParamScheme) -> Result<SpectralReport, AnalysisError> {
    let n = scheme.n();
    let w_bar = expected_matrix(scheme).w_bar;
    let spectrum = eigenvalues(&w_bar)?;
    let (is_simple_one, second) = summarize(&spectrum);
    let (w1, w2) = if is_simple_one {
        let mut mask = DVector::zeros(2 * n);
        mask.rows_mut(0, n).fill(1.0);
        let w = left_eigenvector_real(&w_bar, 1.0, &Normalization::Against(mask))?;
        (Some(w.rows(0, n).into_owned()), Some(w.rows(n, n).into_owned()))
    } else {
        (None, None)
    };
    Ok(SpectralReport {
        spectrum,
        is_simple_one,
        second_largest_modulus: second.norm(),
        second_largest_value: second,
        w1,
        w2,
    })
}

/// Limit value `w1^T x0` of the expected trajectory.
pub fn predicted_consensus(report: &SpectralReport, x0: &[f64]) -> Result<f64, AnalysisError> {
    let w1 = report.w1.as_ref().ok_or(AnalysisError::NotSimple)?;
    Ok(w1.iter().zip(x0).map(|(a, b)| a * b).sum())
}

/// Normalized left fixed vector `v^T B = v^T`, `v^T 1 = 1`.
pub fn stationary_vector(b: &DMatrix<f64>) -> Result<DVector<f64>, AnalysisError> {
    Ok(left_eigenvector_real(b, 1.0, &Normalization::SumToOne)?)
}

fn stationary_residual(b: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let fixed = (b.transpose() * v - v).norm();
    fixed.max((v.sum() - 1.0).abs())
}

/// `(1/n) sum_k W_k (x) W_k` and the rank-one term removed from it.
#[derive(Debug, Clone)]
pub struct SecondMoment {
    /// `E[W (x) W]`.
    pub expected_kron: DMatrix<f64>,
    /// `E[W (x) W] - ([1;0] (x) [1;0]) ([v;v] (x) [v;v])^T`.
    pub matrix: DMatrix<f64>,
    /// `[1; 0] (x) [1; 0]`.
    pub right: DVector<f64>,
    /// `[v; v] (x) [v; v]`.
    pub left: DVector<f64>,
}

impl SecondMoment {
    /// Residuals `|left^T K - left^T|` and `|K right - right|` for
    /// `K = E[W (x) W]`.
    pub fn eigenvector_residuals(&self) -> (f64, f64) {
        let k = &self.expected_kron;
        let left = (k.tr_mul(&self.left) - &self.left).norm();
        let right = (k * &self.right - &self.right).norm();
        (left, right)
    }

    pub fn spectral_radius(&self) -> Result<f64, AnalysisError> {
        Ok(spectra::spectral_radius(&self.matrix)?)
    }
}

/// Builds the mean-square stability matrix for `scheme` with fixed vector `v`.
pub fn second_moment_matrix(scheme: &ParamScheme, v: &DVector<f64>) -> Result<SecondMoment, AnalysisError> {
    let n = scheme.n();
    if n > KRON_MAX_N {
        return Err(AnalysisError::SizeOverflow { n, cap: KRON_MAX_N });
    }
    let residual = if v.len() == n {
        stationary_residual(&scheme.b, v)
    } else {
        f64::INFINITY
    };
    if !(residual <= 1e-8) {
        return Err(AnalysisError::BadStationaryVector { residual });
    }
    let dim = 4 * n * n;
    let mut expected_kron = DMatrix::zeros(dim, dim);
    for k in 0..n {
        let w = assemble_wk(scheme, k);
        expected_kron += spectra::kron(&w, &w)?;
    }
    expected_kron /= n as f64;

    let mut e = DVector::zeros(2 * n);
    e.rows_mut(0, n).fill(1.0);
    let mut vv = DVector::zeros(2 * n);
    vv.rows_mut(0, n).copy_from(v);
    vv.rows_mut(n, n).copy_from(v);
    let right = e.kronecker(&e);
    let left = vv.kronecker(&vv);
    let matrix = &expected_kron - &right * left.transpose();
    Ok(SecondMoment {
        expected_kron,
        matrix,
        right,
        left,
    })
}

/// Error vector `m = z - [1;0] [v;v]^T z` of a stacked state `z`.
pub fn error_vector(z: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let mass = v.dot(&z.rows(0, n)) + v.dot(&z.rows(n, n));
    let mut m = z.clone();
    m.rows_mut(0, n).add_scalar_mut(-mass);
    m
}

/// Both eigenvalue branches of `W_bar` for BBGA with in-degree weights,
/// `1 - xi/n - eps/(2n) -/+ sqrt(eps xi + eps^2/4) / n`, principal root.
pub fn bbga_closed_eigs(xi: &[C64], epsilon: f64, n: usize) -> ComplexSpectrum {
    let mut out = Vec::with_capacity(2 * xi.len());
    for &x in xi {
        let (l1, l2) = closed_pair(x, epsilon, n);
        out.push(l1);
        out.push(l2);
    }
    ComplexSpectrum::new(out)
}

fn closed_pair(xi: C64, epsilon: f64, n: usize) -> (C64, C64) {
    let nf = n as f64;
    let center = C64::new(1.0 - epsilon / (2.0 * nf), 0.0) - xi / nf;
    let root = (xi * epsilon + epsilon * epsilon / 4.0).sqrt() / nf;
    (center - root, center + root)
}

/// Largest perturbation for which BBGA converges in expectation on a graph
/// with real Laplacian spectrum and largest eigenvalue `xi_n`.
pub fn eta_bound(xi_n: f64, n: usize) -> Result<f64, AnalysisError> {
    if !(-1e-9..=2.0 + 1e-9).contains(&xi_n) {
        return Err(AnalysisError::XiOutOfRange(xi_n));
    }
    let nf = n as f64;
    Ok(2.0 * nf + xi_n * xi_n / (2.0 * nf) - 2.0 * xi_n)
}

/// Graph-independent bound `2 (n - 1)^2 / n`, the value of [`eta_bound`] at
/// `xi_n = 2`.
pub fn practical_eta(n: usize) -> f64 {
    let nf = n as f64;
    2.0 * (nf - 1.0).powi(2) / nf
}

/// Perturbation minimizing the second-largest eigenvalue modulus of BBGA's
/// `W_bar`, with that modulus.
///
/// For `n >= 3` this is `(xi_2 / 2, 1 - xi_2 / (2n))`. For `n = 2` the
/// optimum is `2 - sqrt(2)` and the modulus is evaluated from the closed form.
pub fn optimal_epsilon(xi2: f64, n: usize) -> Result<(f64, f64), AnalysisError> {
    if n < 2 {
        return Err(AnalysisError::TooFewNodes(n));
    }
    if !(xi2 > 0.0) || !xi2.is_finite() {
        return Err(AnalysisError::BadXi(xi2));
    }
    let nf = n as f64;
    if n >= 3 {
        return Ok((xi2 / 2.0, 1.0 - xi2 / (2.0 * nf)));
    }
    let eps = 2.0 - 2f64.sqrt();
    let (a, b) = closed_pair(C64::new(xi2, 0.0), eps, n);
    let lambda = (1.0 - eps / nf).abs().max(a.norm()).max(b.norm());
    Ok((eps, lambda))
}

/// Monotonicity violations found on a grid; empty means all properties hold.
#[derive(Debug, Clone, Default)]
pub struct MonotonicityReport {
    pub violations: Vec<String>,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the branch orderings of [`bbga_closed_eigs`] on a grid of real,
/// nonnegative Laplacian eigenvalues.
///
/// Along increasing `eps`: the lower branch strictly decreases, the upper
/// branch never decreases and strictly increases for `xi > 0`. Along
/// increasing `xi` at fixed `eps`: neither branch increases. Pointwise the
/// lower branch never exceeds the upper one.
pub fn monotonicity_check(xi: &[f64], grid: &[f64], n: usize) -> MonotonicityReport {
    let mut report = MonotonicityReport::default();
    let mut xs: Vec<f64> = xi.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut eps: Vec<f64> = grid.to_vec();
    eps.sort_by(f64::total_cmp);
    let eval = |x: f64, e: f64| {
        let (a, b) = closed_pair(C64::new(x, 0.0), e, n);
        (a.re, b.re)
    };

    for &x in &xs {
        for w in eps.windows(2) {
            let (a0, b0) = eval(x, w[0]);
            let (a1, b1) = eval(x, w[1]);
            if !(a1 < a0) {
                report.violations.push(format!("lower branch not decreasing at xi={x}, eps={}", w[1]));
            }
            let upper_ok = if x > 0.0 { b1 > b0 } else { b1 >= b0 };
            if !upper_ok {
                report.violations.push(format!("upper branch not increasing at xi={x}, eps={}", w[1]));
            }
        }
    }
    for &e in &eps {
        for w in xs.windows(2) {
            let (a0, b0) = eval(w[0], e);
            let (a1, b1) = eval(w[1], e);
            if a1 > a0 || b1 > b0 {
                report.violations.push(format!("branch increasing in xi at xi={}, eps={e}", w[1]));
            }
        }
        for &x in &xs {
            let (a, b) = eval(x, e);
            if a > b {
                report.violations.push(format!("branches crossed at xi={x}, eps={e}"));
            }
        }
    }
    report
}

/// Laplacian of the in-degree weights `a_jk = 1 / in_degree(j)`.
pub fn bbga_laplacian(g: &DiGraph) -> DMatrix<f64> {
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    for (j, k) in g.edges() {
        a[(j, k)] = 1.0 / g.in_degree(j) as f64;
    }
    laplacian(&a)
}

/// Spectrum of [`bbga_laplacian`], sorted by increasing real part.
pub fn laplacian_spectrum(g: &DiGraph) -> Result<ComplexSpectrum, AnalysisError> {
    Ok(eigenvalues(&bbga_laplacian(g))?)
}

/// Perturbation guidance for BBGA on one graph.
#[derive(Debug, Clone)]
pub struct EpsilonReport {
    /// `None` when the Laplacian spectrum is not real.
    pub eta_formula: Option<f64>,
    pub eta_practical: f64,
    pub epsilon_star: f64,
    pub lambda2_at_star: f64,
    pub xi: ComplexSpectrum,
    pub spectrum_real: bool,
    /// Set when `epsilon_star` uses `Re(xi_2) / 2` on a complex spectrum.
    pub approximate: bool,
}

impl EpsilonReport {
    pub fn xi2(&self) -> C64 {
        self.xi.values()[1]
    }

    pub fn xi_n(&self) -> C64 {
        *self.xi.values().last().expect("n >= 2")
    }
}

pub fn epsilon_report(g: &DiGraph) -> Result<EpsilonReport, AnalysisError> {
    let n = g.n();
    if n < 2 {
        return Err(AnalysisError::TooFewNodes(n));
    }
    let xi = laplacian_spectrum(g)?;
    let spectrum_real = xi.max_abs_imag() <= REAL_SPECTRUM_TOL;
    let xi2 = xi.values()[1].re;
    let xi_n = xi.values()[n - 1].re;
    let eta_formula = if spectrum_real {
        Some(eta_bound(xi_n, n)?)
    } else {
        None
    };
    let (epsilon_star, lambda2_at_star) = optimal_epsilon(xi2, n)?;
    Ok(EpsilonReport {
        eta_formula,
        eta_practical: practical_eta(n),
        epsilon_star,
        lambda2_at_star,
        xi,
        spectrum_real,
        approximate: !spectrum_real,
    })
}

/// One point of an analytic sweep over the perturbation parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPoint {
    pub epsilon: f64,
    pub second_largest_modulus: f64,
    pub is_simple_one: bool,
}

/// Evaluates `|lambda_2(W_bar)|` at every grid point, in grid order.
pub fn analytic_sweep(scheme: &ParamScheme, grid: &[f64]) -> Result<Vec<AnalyticPoint>, AnalysisError> {
    grid.par_iter()
        .map(|&eps| {
            let s = scheme.with_epsilon(eps).map_err(|_| AnalysisError::BadXi(eps))?;
            let spectrum = eigenvalues(&expected_matrix(&s).w_bar)?;
            let (is_simple_one, second) = summarize(&spectrum);
            Ok(AnalyticPoint {
                epsilon: eps,
                second_largest_modulus: second.norm(),
                is_simple_one,
            })
        })
        .collect()
}

/// The default grid `0.02, 0.04, ..., 1.0`.
pub fn default_epsilon_grid() -> Vec<f64> {
    (1..=50).map(|i| i as f64 * 0.02).collect()
}

/// Whether `B` has all column sums (or all row sums) at most 1 with at least
/// one strictly below 1.
pub fn is_substochastic(b: &DMatrix<f64>) -> bool {
    let col = b.row_sum();
    let row = b.column_sum();
    let check = |sums: &[f64]| {
        let max = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = sums.iter().copied().fold(f64::INFINITY, f64::min);
        max <= 1.0 + 1e-12 && min < 1.0 - 1e-12
    };
    check(col.as_slice()) || check(row.as_slice())
}

/// Whether the closed forms, `eta` and `eps*` apply to `kind`.
pub fn has_closed_forms(kind: SchemeKind) -> bool {
    kind == SchemeKind::Bbga
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{auto_radius, directify, random_geometric_graph};
    use crate::protocol::{build_scheme, DEFAULT_GAMMA};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rgg(seed: u64, n: usize, p_asym: f64) -> DiGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_geometric_graph(n, auto_radius(n), &mut rng).unwrap();
        directify(&g, p_asym, &mut rng).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn expected_matrix_fixed_point_and_split() {
        for kind in SchemeKind::ALL {
            let g = rgg(3, 9, 0.3);
            let eps = if kind == SchemeKind::Classic { 0.0 } else { 0.35 };
            let s = build_scheme(kind, &g, eps, DEFAULT_GAMMA).unwrap();
            let em = expected_matrix(&s);
            let mut e1 = DVector::zeros(18);
            e1.rows_mut(0, 9).fill(1.0);
            assert!((&em.w_bar * &e1 - &e1).amax() <= 1e-14);
            let rebuilt = &em.w0 + &em.e * s.epsilon;
            assert!((rebuilt - &em.w_bar).amax() <= 1e-12);
        }
    }

    #[test]
    fn bbga_antisymmetric_direction() {
        let g = rgg(5, 8, 0.4);
        let s = build_scheme(SchemeKind::Bbga, &g, 0.3, 0.0).unwrap();
        let w = expected_matrix(&s).w_bar;
        let mut u = DVector::from_element(16, 1.0);
        u.rows_mut(8, 8).fill(-1.0);
        let expected = &u * (1.0 - 0.3 / 8.0);
        assert!((&w * &u - expected).amax() <= 1e-14);
    }

    #[test]
    fn small_epsilon_second_eigenvalue() {
        let g = rgg(11, 12, 0.0);
        let s = build_scheme(SchemeKind::Bbga, &g, 0.01, 0.0).unwrap();
        let r = classify_expectation(&s).unwrap();
        assert!(r.is_simple_one);
        assert!((r.second_largest_value - c(1.0 - 0.01 / 12.0, 0.0)).norm() <= 1e-8);
        assert!((r.w1.as_ref().unwrap().sum() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn ubga_predicts_average() {
        let g = rgg(2, 10, 0.3);
        for kind in [SchemeKind::Ubga1, SchemeKind::Ubga2, SchemeKind::Ubga3] {
            let s = build_scheme(kind, &g, 0.2, 0.0).unwrap();
            let r = classify_expectation(&s).unwrap();
            assert!(r.is_simple_one, "{kind}");
            for v in r.w1.as_ref().unwrap().iter() {
                assert!((v - 0.1).abs() <= 1e-8);
            }
            assert!((predicted_consensus(&r, &[0.4; 10]).unwrap() - 0.4).abs() <= 1e-12);
        }
    }

    #[test]
    fn bbga_three_node_digraph_bias() {
        // Edges (receiver, transmitter): 1<-2, 2<-3, 3<-1, 1<-3 (1-based).
        let g = DiGraph::new(3, [(0, 1), (1, 2), (2, 0), (0, 2)]).unwrap();
        let s = build_scheme(SchemeKind::Bbga, &g, 0.2, 0.0).unwrap();
        // Linear solve of (B^T - I) v = 0 with the last row replaced by 1^T v = 1.
        let mut m = s.b.transpose() - DMatrix::identity(3, 3);
        m.row_mut(2).fill(1.0);
        let rhs = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let v_solve = m.lu().solve(&rhs).unwrap();
        let v = stationary_vector(&s.b).unwrap();
        assert!((&v - &v_solve).amax() <= 1e-12);
        // Hand solution: v = (2/5, 1/5, 2/5).
        assert!((v_solve - DVector::from_vec(vec![0.4, 0.2, 0.4])).amax() <= 1e-14);

        let r = classify_expectation(&s).unwrap();
        assert!(r.is_simple_one);
        let w1 = r.w1.as_ref().unwrap();
        assert!((w1 - &v).amax() <= 1e-8);
        assert!((r.w2.as_ref().unwrap() - &v).amax() <= 1e-8);
        let x0 = [1.0, 2.0, 4.0];
        let p = predicted_consensus(&r, &x0).unwrap();
        assert!((p - (0.4 + 0.4 + 1.6)).abs() <= 1e-8);
    }

    #[test]
    fn classic_expectation_and_unstable_prediction() {
        let g = rgg(1, 6, 0.0);
        let s = build_scheme(SchemeKind::Classic, &g, 0.0, DEFAULT_GAMMA).unwrap();
        let r = classify_expectation(&s).unwrap();
        // Symmetric constant weights: the expected limit is the average.
        assert!(r.is_simple_one);
        for v in r.w1.as_ref().unwrap().iter() {
            assert!((v - 1.0 / 6.0).abs() <= 1e-8);
        }

        let s = build_scheme(SchemeKind::Bbga, &g, 3.0 * practical_eta(6), 0.0).unwrap();
        let r = classify_expectation(&s).unwrap();
        assert!(!r.is_simple_one);
        assert!(matches!(predicted_consensus(&r, &[0.0; 6]), Err(AnalysisError::NotSimple)));
    }

    #[test]
    fn closed_forms_at_zero() {
        let s = bbga_closed_eigs(&[c(0.0, 0.0)], 0.3, 5);
        let vals = s.values();
        assert!((vals[0] - c(1.0 - 0.3 / 5.0, 0.0)).norm() < 1e-15);
        assert!((vals[1] - c(1.0, 0.0)).norm() < 1e-15);
        // Vanishing perturbation collapses both branches to 1 - xi/n.
        let s = bbga_closed_eigs(&[c(0.8, 0.0)], 1e-14, 4);
        for z in s.values() {
            assert!((z - c(1.0 - 0.8 / 4.0, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn closed_forms_match_numeric() {
        for (seed, n) in [(1u64, 4usize), (2, 8), (3, 16)] {
            let g = rgg(seed, n, 0.0);
            let xi = laplacian_spectrum(&g).unwrap();
            for eps in [0.1, 0.5, 1.0] {
                let s = build_scheme(SchemeKind::Bbga, &g, eps, 0.0).unwrap();
                let numeric = eigenvalues(&expected_matrix(&s).w_bar).unwrap();
                let closed = bbga_closed_eigs(xi.values(), eps, n);
                let d = spectra::matched_distance(numeric.values(), closed.values());
                assert!(d <= 1e-7, "n={n} eps={eps} d={d}");
            }
        }
    }

    #[test]
    fn eta_examples() {
        assert!((eta_bound(1.3796, 16).unwrap() - 29.30).abs() <= 0.01);
        assert_eq!(eta_bound(0.0, 7).unwrap(), 14.0);
        assert!((eta_bound(2.0, 9).unwrap() - practical_eta(9)).abs() < 1e-12);
        assert!(matches!(eta_bound(2.5, 9), Err(AnalysisError::XiOutOfRange(_))));
        assert!(matches!(eta_bound(-0.1, 9), Err(AnalysisError::XiOutOfRange(_))));
    }

    #[test]
    fn optimal_epsilon_examples() {
        let (e, l) = optimal_epsilon(0.5335, 16).unwrap();
        assert!((e - 0.2668).abs() < 1e-4);
        assert!((l - (1.0 - 0.5335 / 32.0)).abs() < 1e-15);
        let (e, _) = optimal_epsilon(0.3930, 16).unwrap();
        assert!((e - 0.1965).abs() < 1e-12);
        let (e, l) = optimal_epsilon(2.0, 2).unwrap();
        assert!((e - (2.0 - 2f64.sqrt())).abs() < 1e-15);
        assert!((l - 0.5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(optimal_epsilon(0.0, 5), Err(AnalysisError::BadXi(_))));
        assert!(matches!(optimal_epsilon(-1.0, 5), Err(AnalysisError::BadXi(_))));
    }

    #[test]
    fn two_node_optimum_matches_numeric() {
        let g = DiGraph::complete(2);
        let (eps, lambda) = optimal_epsilon(2.0, 2).unwrap();
        let s = build_scheme(SchemeKind::Bbga, &g, eps, 0.0).unwrap();
        let r = classify_expectation(&s).unwrap();
        assert!((r.second_largest_modulus - lambda).abs() < 1e-10);
        // Any nearby perturbation does worse.
        for d in [-0.01, 0.01] {
            let r = classify_expectation(&s.with_epsilon(eps + d).unwrap()).unwrap();
            assert!(r.second_largest_modulus > lambda);
        }
    }

    #[test]
    fn monotonicity_examples() {
        let grid: Vec<f64> = (1..=50).map(|i| i as f64 * 0.02).collect();
        let rep = monotonicity_check(&[0.0, 0.5, 1.3], &grid, 10);
        assert!(rep.holds(), "{:?}", rep.violations);
        for &e in &grid {
            let s = bbga_closed_eigs(&[c(0.0, 0.0)], e, 10);
            assert_eq!(s.values()[1], c(1.0, 0.0));
        }
    }

    #[test]
    fn second_moment_small_graph() {
        let g = rgg(4, 5, 0.0);
        for kind in [SchemeKind::Ubga1, SchemeKind::Bbga] {
            let s = build_scheme(kind, &g, 0.2, 0.0).unwrap();
            let v = stationary_vector(&s.b).unwrap();
            let sm = second_moment_matrix(&s, &v).unwrap();
            let (l, r) = sm.eigenvector_residuals();
            assert!(l <= 1e-8 && r <= 1e-8);
            assert!(sm.spectral_radius().unwrap() < 1.0);
        }
    }

    #[test]
    fn second_moment_errors() {
        let g = rgg(4, 5, 0.0);
        let s = build_scheme(SchemeKind::Bbga, &g, 0.2, 0.0).unwrap();
        let bad = DVector::from_element(5, 0.3);
        assert!(matches!(
            second_moment_matrix(&s, &bad),
            Err(AnalysisError::BadStationaryVector { .. })
        ));
        let big = DiGraph::complete(KRON_MAX_N + 1);
        let s = build_scheme(SchemeKind::Ubga1, &big, 0.2, 0.0).unwrap();
        let v = DVector::from_element(big.n(), 1.0 / big.n() as f64);
        assert!(matches!(second_moment_matrix(&s, &v), Err(AnalysisError::SizeOverflow { .. })));
    }

    #[test]
    fn error_vector_is_orthogonal_to_left_vector() {
        let v = DVector::from_element(4, 0.25);
        let z = DVector::from_vec(vec![0.3, 1.0, -2.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
        let m = error_vector(&z, &v);
        let mut vv = DVector::zeros(8);
        vv.rows_mut(0, 4).copy_from(&v);
        vv.rows_mut(4, 4).copy_from(&v);
        assert!(vv.kronecker(&vv).dot(&m.kronecker(&m)).abs() < 1e-15);
    }

    #[test]
    fn stochasticity_dichotomy() {
        let g = rgg(9, 8, 0.3);
        for kind in [SchemeKind::Ubga2, SchemeKind::Bbga] {
            let s = build_scheme(kind, &g, 0.2, 0.0).unwrap();
            assert!(!is_substochastic(&s.b));
            let s_bar = expected_matrix(&s).s_bar;
            let spec = eigenvalues(&s_bar).unwrap();
            let near = spec.values().iter().filter(|z| (*z - c(1.0, 0.0)).norm() <= 1e-8).count();
            assert_eq!(near, 1);

            let mut sub = s.clone();
            let row = sub.b.row(0) * 0.5;
            sub.b.set_row(0, &row);
            let col = sub.b.column(0) * 0.5;
            sub.b.set_column(0, &col);
            assert!(is_substochastic(&sub.b));
            let rho = spectra::spectral_radius(&expected_matrix(&sub).s_bar).unwrap();
            assert!(rho < 1.0 - 1e-10, "{kind} rho={rho}");
        }
    }

    #[test]
    fn epsilon_report_undirected_and_directed() {
        let g = rgg(21, 16, 0.0);
        let r = epsilon_report(&g).unwrap();
        assert!(r.spectrum_real && !r.approximate);
        let eta = r.eta_formula.unwrap();
        assert!(r.eta_practical <= eta && eta <= 32.0);
        assert!((r.epsilon_star - r.xi2().re / 2.0).abs() < 1e-15);
        assert!(r.xi_n().re <= 2.0 + 1e-12);

        let d = DiGraph::directed_cycle(5);
        let r = epsilon_report(&d).unwrap();
        assert!(!r.spectrum_real && r.approximate);
        assert!(r.eta_formula.is_none());
    }

    #[test]
    fn analytic_sweep_preserves_grid_order() {
        let g = rgg(13, 10, 0.0);
        let s = build_scheme(SchemeKind::Bbga, &g, 0.5, 0.0).unwrap();
        let grid = default_epsilon_grid();
        assert_eq!(grid.len(), 50);
        let pts = analytic_sweep(&s, &grid).unwrap();
        for (p, e) in pts.iter().zip(&grid) {
            assert_eq!(p.epsilon, *e);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn bbga_laplacian_spectrum_in_disk(seed in 0u64..500, n in 2usize..14, p in 0.0f64..0.6) {
            let g = rgg(seed, n, p);
            let xi = laplacian_spectrum(&g).unwrap();
            for z in xi.values() {
                prop_assert!(z.re >= -1e-10);
                prop_assert!(z.norm() <= 2.0 + 1e-10);
            }
        }

        #[test]
        fn monotone_on_random_grids(
            xi in proptest::collection::vec(0.0f64..2.0, 1..6),
            n in 2usize..40,
        ) {
            let grid: Vec<f64> = (1..=25).map(|i| i as f64 * 0.04).collect();
            let rep = monotonicity_check(&xi, &grid, n);
            prop_assert!(rep.holds(), "{:?}", rep.violations);
        }

        #[test]
        fn eta_sandwich(xi_n in 0.0f64..2.0, n in 2usize..60) {
            let eta = eta_bound(xi_n, n).unwrap();
            prop_assert!(practical_eta(n) <= eta + 1e-12);
            prop_assert!(eta <= 2.0 * n as f64 + 1e-12);
        }
    }
}
