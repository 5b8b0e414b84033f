//! The broadcast gossip state machine.
//!
//! When node `k` broadcasts `(x_k, y_k)`, every receiver `j` (an out-neighbour
//! of `k`) sets
//!
//! ```text
//! x_j <- (1 - a_jk) x_j + a_jk x_k + eps d_j^(k) y_j
//! y_j <- a_jk (x_j - x_k) + (1 - eps d_j^(k)) y_j + b_jk y_k
//! ```
//!
//! reading only pre-broadcast values, the broadcaster keeps `x_k` and zeroes
//! `y_k`, and every other node is untouched. The same step in matrix form is
//! `[x; y] <- W_k [x; y]`, see [`assemble_wk`].

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::graph::{laplacian, DiGraph};

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("epsilon must be positive for {kind}, got {epsilon}")]
    InvalidEpsilon { kind: SchemeKind, epsilon: f64 },
    #[error("gamma must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("weight matrix is not graph-conformant: {0}")]
    NotConformant(String),
    #[error("unknown scheme `{0}` (expected ubga1, ubga2, ubga3, bbga or classic)")]
    UnknownScheme(String),
}

/// The built-in parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    /// Unbiased, `a_jk = 1/2`.
    Ubga1,
    /// Unbiased, `a_jk = 1 / in_degree(j)`.
    Ubga2,
    /// Unbiased, `a_jk = 1 / out_degree(j)`.
    Ubga3,
    /// Biased, in-degree weights throughout.
    Bbga,
    /// Classic broadcast gossip: constant mixing weight, inert companions.
    Classic,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [Self::Ubga1, Self::Ubga2, Self::Ubga3, Self::Bbga, Self::Classic];

    pub fn is_unbiased(self) -> bool {
        matches!(self, Self::Ubga1 | Self::Ubga2 | Self::Ubga3)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ubga1 => "ubga1",
            Self::Ubga2 => "ubga2",
            Self::Ubga3 => "ubga3",
            Self::Bbga => "bbga",
            Self::Classic => "classic",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "ubga1" => Ok(Self::Ubga1),
            "ubga2" => Ok(Self::Ubga2),
            "ubga3" => Ok(Self::Ubga3),
            "bbga" => Ok(Self::Bbga),
            "classic" | "bga1" => Ok(Self::Classic),
            _ => Err(ProtocolError::UnknownScheme(s.to_string())),
        }
    }
}

/// Mixing weight used by the classic scheme when none is given.
pub const DEFAULT_GAMMA: f64 = 0.5;

/// Weights of one broadcast gossip algorithm on one graph.
///
/// `a` and `b` are indexed `(receiver, transmitter)`. Column `k` of `d` holds
/// the companion injection weights `d^(k)` used when `k` broadcasts.
#[derive(Debug, Clone)]
pub struct ParamScheme {
    pub kind: SchemeKind,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub epsilon: f64,
    pub gamma: f64,
    receivers: Vec<Vec<usize>>,
}

impl ParamScheme {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Receivers of a broadcast by `k`.
    pub fn receivers(&self, k: usize) -> &[usize] {
        &self.receivers[k]
    }

    /// Same weights with a different perturbation parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, ProtocolError> {
        check_epsilon(self.kind, epsilon)?;
        let mut out = self.clone();
        out.epsilon = epsilon;
        Ok(out)
    }

    /// Replaces the mixing weights with a caller-supplied matrix.
    ///
    /// Only graph conformance and the `(0, 1]` range are checked.
    pub fn with_custom_a(&self, a: DMatrix<f64>) -> Result<Self, ProtocolError> {
        let n = self.n();
        if a.nrows() != n || a.ncols() != n {
            return Err(ProtocolError::NotConformant(format!(
                "expected {n}x{n}, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let on_edge = self.receivers[j].binary_search(&i).is_ok();
                let v = a[(i, j)];
                let ok = if on_edge { v > 0.0 && v <= 1.0 } else { v == 0.0 };
                if !ok {
                    return Err(ProtocolError::NotConformant(format!("a[{i},{j}] = {v}")));
                }
            }
        }
        let mut out = self.clone();
        out.a = a;
        Ok(out)
    }

    /// Weighted Laplacian `diag(A 1) - A` of the mixing weights.
    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian(&self.a)
    }
}

fn check_epsilon(kind: SchemeKind, epsilon: f64) -> Result<(), ProtocolError> {
    let ok = match kind {
        SchemeKind::Classic => epsilon == 0.0,
        _ => epsilon > 0.0 && epsilon.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(ProtocolError::InvalidEpsilon { kind, epsilon })
    }
}

/// Builds the weights for `kind` on `g`.
///
/// For [`SchemeKind::Classic`] `epsilon` must be zero and `gamma` is the
/// mixing weight; the other kinds ignore `gamma`.
pub fn build_scheme(kind: SchemeKind, g: &DiGraph, epsilon: f64, gamma: f64) -> Result<ParamScheme, ProtocolError> {
    check_epsilon(kind, epsilon)?;
    if kind == SchemeKind::Classic && !(gamma > 0.0 && gamma <= 1.0) {
        return Err(ProtocolError::InvalidGamma(gamma));
    }
    if !g.is_strongly_connected() {
        return Err(ProtocolError::NotStronglyConnected);
    }
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    let mut d = DMatrix::zeros(n, n);
    for (j, k) in g.edges() {
        let inv_in_j = 1.0 / g.in_degree(j) as f64;
        a[(j, k)] = match kind {
            SchemeKind::Ubga1 => 0.5,
            SchemeKind::Ubga2 | SchemeKind::Bbga => inv_in_j,
            SchemeKind::Ubga3 => 1.0 / g.out_degree(j) as f64,
            SchemeKind::Classic => gamma,
        };
        match kind {
            SchemeKind::Classic => {}
            SchemeKind::Bbga => {
                b[(j, k)] = inv_in_j;
                d[(j, k)] = inv_in_j;
            }
            _ => {
                b[(j, k)] = 1.0 / g.out_degree(k) as f64;
                d[(j, k)] = inv_in_j;
            }
        }
    }
    let receivers = (0..n).map(|k| g.out_neighbors(k).to_vec()).collect();
    Ok(ParamScheme {
        kind,
        a,
        b,
        d,
        epsilon,
        gamma: if kind == SchemeKind::Classic { gamma } else { 0.0 },
        receivers,
    })
}

/// Per-node state and companion values.
#[derive(Debug, Clone, PartialEq)]
pub struct GossipState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: u64,
}

impl GossipState {
    /// Initial state with zero companions.
    pub fn new(x0: Vec<f64>) -> Self {
        let n = x0.len();
        Self {
            x: x0,
            y: vec![0.0; n],
            t: 0,
        }
    }

    /// Stacked `[x; y]`.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.x.len(), self.x.iter().chain(self.y.iter()).copied())
    }

    /// `1^T x + 1^T y`.
    pub fn mass(&self) -> f64 {
        self.x.iter().sum::<f64>() + self.y.iter().sum::<f64>()
    }

    /// Applies one broadcast by `k` in place.
    ///
    /// Returns the squared 2-norm of the change in `[x; y]`.
    pub fn local_update(&mut self, k: usize, scheme: &ParamScheme) -> f64 {
        let xk = self.x[k];
        let yk = self.y[k];
        let eps = scheme.epsilon;
        let mut change = 0.0;
        // Receivers never include k, so each write only touches its own slot.
        for &j in scheme.receivers(k) {
            let a = scheme.a[(j, k)];
            let b = scheme.b[(j, k)];
            let ed = eps * scheme.d[(j, k)];
            let xj = self.x[j];
            let yj = self.y[j];
            let new_x = (1.0 - a) * xj + a * xk + ed * yj;
            let new_y = a * (xj - xk) + (1.0 - ed) * yj + b * yk;
            change += (new_x - xj).powi(2) + (new_y - yj).powi(2);
            self.x[j] = new_x;
            self.y[j] = new_y;
        }
        change += yk * yk;
        self.y[k] = 0.0;
        self.t += 1;
        change
    }

    /// Samples a broadcaster uniformly and applies its update.
    ///
    /// Returns the broadcaster and the squared norm of the state change.
    pub fn step<R: Rng + ?Sized>(&mut self, scheme: &ParamScheme, rng: &mut R) -> (usize, f64) {
        let k = rng.random_range(0..scheme.n());
        let change = self.local_update(k, scheme);
        (k, change)
    }
}

/// The `2n x 2n` update matrix applied when `k` broadcasts.
///
/// ```text
/// W_k = [ I - L_k      eps D_k       ]
///       [ L_k          S_k - eps D_k ]
/// ```
///
/// with `L_k = diag(A_k 1) - A_k`, `A_k` the `k`-th column of `A` alone,
/// `S_k = I - e_k e_k^T + B_k` and `D_k = diag(d^(k))`.
pub fn assemble_wk(scheme: &ParamScheme, k: usize) -> DMatrix<f64> {
    let n = scheme.n();
    let mut a_k = DMatrix::zeros(n, n);
    a_k.set_column(k, &scheme.a.column(k));
    let l_k = laplacian(&a_k);

    let mut s_k = DMatrix::identity(n, n);
    s_k[(k, k)] = 0.0;
    for i in 0..n {
        s_k[(i, k)] += scheme.b[(i, k)];
    }
    let eps_d = DMatrix::from_diagonal(&scheme.d.column(k).map(|v| v * scheme.epsilon));

    let mut w = DMatrix::zeros(2 * n, 2 * n);
    w.view_mut((0, 0), (n, n)).copy_from(&(DMatrix::identity(n, n) - &l_k));
    w.view_mut((0, n), (n, n)).copy_from(&eps_d);
    w.view_mut((n, 0), (n, n)).copy_from(&l_k);
    w.view_mut((n, n), (n, n)).copy_from(&(s_k - eps_d));
    w
}
