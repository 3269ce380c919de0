//! Uncertainty machinery: the covariance accumulator `Λ = λI + Σ g gᵀ`,
//! Gaussian perturbations with covariance `σ²Λ⁻¹`, the ReLU neural tangent
//! kernel, effective dimension, and the ensemble-size rule.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ViperError};
use crate::kvtext::fmt_reals;
use crate::linalg::SparseVec;
use crate::models::NetParams;
use crate::rng;

/// Above this dimension a full-mode accumulator keeps `Λ` implicitly as
/// `λI + GᵀG` and works through the `K x K` Gram matrix instead.
pub const DENSE_LIMIT: usize = 1024;

/// Re-factor the dense Cholesky factor from `Λ` after this many rank-one
/// updates, to keep rounding drift bounded.
pub const DEFAULT_REFRESH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovMode {
    Full,
    Diagonal,
}

impl CovMode {
    pub fn name(self) -> &'static str {
        match self {
            CovMode::Full => "full",
            CovMode::Diagonal => "diag",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(CovMode::Full),
            "diag" | "diagonal" => Ok(CovMode::Diagonal),
            _ => Err(ViperError::config(format!("unknown covariance mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Dense {
        mat: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
        since_refresh: usize,
    },
    /// `Λ = λI + GᵀG`; `packed` holds the lower Cholesky factor of
    /// `λI_K + GGᵀ`, row by row.
    LowRank { rows: Vec<SparseVec>, packed: Vec<f64> },
    Diagonal(Vec<f64>),
}

/// `Λ = λI + Σ_k g_k g_kᵀ` (full) or its diagonal.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    dim: usize,
    lambda: f64,
    mode: CovMode,
    count: usize,
    refresh: usize,
    repr: Repr,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize, lambda: f64, mode: CovMode) -> Result<Self> {
        let repr = match mode {
            CovMode::Full if dim <= DENSE_LIMIT => Self::dense_repr(dim, lambda)?,
            CovMode::Full => Repr::LowRank { rows: Vec::new(), packed: Vec::new() },
            CovMode::Diagonal => Repr::Diagonal(vec![lambda; dim]),
        };
        Self::checked(dim, lambda, mode, repr)
    }

    /// Full mode that always uses the implicit low-rank representation.
    pub fn low_rank(dim: usize, lambda: f64) -> Result<Self> {
        let repr = Repr::LowRank { rows: Vec::new(), packed: Vec::new() };
        Self::checked(dim, lambda, CovMode::Full, repr)
    }

    /// Full mode that always stores `Λ` densely.
    pub fn dense(dim: usize, lambda: f64) -> Result<Self> {
        let repr = Self::dense_repr(dim, lambda)?;
        Self::checked(dim, lambda, CovMode::Full, repr)
    }

    fn checked(dim: usize, lambda: f64, mode: CovMode, repr: Repr) -> Result<Self> {
        if dim == 0 {
            return Err(ViperError::config("covariance dimension must be positive"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ViperError::config(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(CovarianceAccumulator { dim, lambda, mode, count: 0, refresh: DEFAULT_REFRESH, repr })
    }

    fn dense_repr(dim: usize, lambda: f64) -> Result<Repr> {
        let mat = DMatrix::identity(dim, dim) * lambda;
        let chol = Cholesky::new(mat.clone()).ok_or_else(|| ViperError::numeric("lambda*I is not positive definite"))?;
        Ok(Repr::Dense { mat, chol, since_refresh: 0 })
    }

    pub fn with_refresh(mut self, every: usize) -> Self {
        self.refresh = every.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mode(&self) -> CovMode {
        self.mode
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_low_rank(&self) -> bool {
        matches!(self.repr, Repr::LowRank { .. })
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim {
            return Err(ViperError::domain(format!("vector has dimension {n}, accumulator has {}", self.dim)));
        }
        Ok(())
    }

    pub fn update(&mut self, g: &[f64]) -> Result<()> {
        self.update_sparse(&SparseVec::from_dense(g))
    }

    /// `Λ += g gᵀ` (full) or `diag(Λ) += g∘g` (diagonal).
    pub fn update_sparse(&mut self, g: &SparseVec) -> Result<()> {
        self.check_dim(g.dim)?;
        if g.val.iter().any(|v| !v.is_finite()) {
            return Err(ViperError::numeric("non-finite covariance update"));
        }
        let (refresh, lambda) = (self.refresh, self.lambda);
        match &mut self.repr {
            Repr::Dense { mat, chol, since_refresh } => {
                for (i, a) in g.iter() {
                    for (j, b) in g.iter() {
                        mat[(i, j)] += a * b;
                    }
                }
                *since_refresh += 1;
                if *since_refresh >= refresh {
                    *chol = Cholesky::new(mat.clone())
                        .ok_or_else(|| ViperError::numeric("covariance lost positive definiteness"))?;
                    *since_refresh = 0;
                } else {
                    chol.rank_one_update(&DVector::from_vec(g.to_dense()), 1.0);
                }
            }
            Repr::LowRank { rows, packed } => {
                let cross: Vec<f64> = rows.iter().map(|r| r.dot(g)).collect();
                let l = forward_solve(packed, &cross);
                let pivot = lambda + g.norm_sq() - l.iter().map(|v| v * v).sum::<f64>();
                if !(pivot > 0.0) {
                    return Err(ViperError::numeric("low-rank covariance lost positive definiteness"));
                }
                packed.extend_from_slice(&l);
                packed.push(pivot.sqrt());
                rows.push(g.clone());
            }
            Repr::Diagonal(diag) => {
                for (j, v) in g.iter() {
                    diag[j] += v * v;
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    /// `‖v‖_{Λ⁻¹} = sqrt(vᵀΛ⁻¹v)`.
    pub fn quad_form(&self, v: &[f64]) -> Result<f64> {
        self.check_dim(v.len())?;
        match &self.repr {
            Repr::Dense { chol, .. } => {
                let y = chol.l_dirty().solve_lower_triangular(&DVector::from_column_slice(v)).ok_or_else(|| {
                    ViperError::numeric("singular covariance factor")
                })?;
                Ok(y.norm())
            }
            _ => self.quad_form_sparse(&SparseVec::from_dense(v)),
        }
    }

    pub fn quad_form_sparse(&self, v: &SparseVec) -> Result<f64> {
        self.check_dim(v.dim)?;
        let q = match &self.repr {
            Repr::Dense { .. } => return self.quad_form(&v.to_dense()),
            Repr::LowRank { rows, packed } => {
                let gv: Vec<f64> = rows.iter().map(|r| r.dot(v)).collect();
                let y = forward_solve(packed, &gv);
                (v.norm_sq() - y.iter().map(|t| t * t).sum::<f64>()) / self.lambda
            }
            Repr::Diagonal(diag) => v.iter().map(|(j, x)| x * x / diag[j]).sum(),
        };
        if !q.is_finite() {
            return Err(ViperError::numeric("non-finite quadratic form"));
        }
        Ok(q.max(0.0).sqrt())
    }

    /// `Λ⁻¹ v`.
    pub fn solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v.len())?;
        match &self.repr {
            Repr::Dense { chol, .. } => Ok(chol.solve(&DVector::from_column_slice(v)).as_slice().to_vec()),
            Repr::LowRank { rows, packed } => Ok(self.low_rank_solve(rows, packed, v)),
            Repr::Diagonal(diag) => Ok(v.iter().zip(diag).map(|(x, d)| x / d).collect()),
        }
    }

    // Λ⁻¹ = (I - Gᵀ(λI + GGᵀ)⁻¹G) / λ
    fn low_rank_solve(&self, rows: &[SparseVec], packed: &[f64], v: &[f64]) -> Vec<f64> {
        let gv: Vec<f64> = rows.iter().map(|r| r.dot_dense(v)).collect();
        let c = backward_solve(packed, &forward_solve(packed, &gv));
        let mut out = v.to_vec();
        for (r, ck) in rows.iter().zip(&c) {
            r.axpy_into(-ck, &mut out);
        }
        out.iter_mut().for_each(|x| *x /= self.lambda);
        out
    }

    /// `ln det Λ`.
    pub fn logdet(&self) -> f64 {
        match &self.repr {
            Repr::Dense { chol, .. } => 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            Repr::LowRank { rows, packed } => {
                let k = rows.len();
                let diag: f64 = (0..k).map(|i| packed[i * (i + 1) / 2 + i].ln()).sum();
                2.0 * diag + (self.dim as f64 - k as f64) * self.lambda.ln()
            }
            Repr::Diagonal(diag) => diag.iter().map(|d| d.ln()).sum(),
        }
    }

    /// One draw from `N(0, σ²Λ⁻¹)`.
    pub fn sample_perturbation<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !(sigma >= 0.0) {
            return Err(ViperError::config(format!("sigma must be >= 0, got {sigma}")));
        }
        if sigma == 0.0 {
            return Ok(vec![0.0; self.dim]);
        }
        let mut x = match &self.repr {
            // Λ = LLᵀ, so L⁻ᵀz has covariance Λ⁻¹.
            Repr::Dense { chol, .. } => {
                let z = DVector::from_vec(rng::normal_vec(rng, self.dim, 1.0));
                chol.l_dirty()
                    .tr_solve_lower_triangular(&z)
                    .ok_or_else(|| ViperError::numeric("singular covariance factor"))?
                    .as_slice()
                    .to_vec()
            }
            // u = √λ z₁ + Gᵀz₂ ~ N(0, Λ), so Λ⁻¹u ~ N(0, Λ⁻¹).
            Repr::LowRank { rows, packed } => {
                let mut u = rng::normal_vec(rng, self.dim, self.lambda.sqrt());
                for r in rows {
                    r.axpy_into(rng::standard_normal(rng), &mut u);
                }
                self.low_rank_solve(rows, packed, &u)
            }
            Repr::Diagonal(diag) => diag.iter().map(|d| rng::standard_normal(rng) / d.sqrt()).collect(),
        };
        x.iter_mut().for_each(|v| *v *= sigma);
        Ok(x)
    }

    /// Materialize `Λ` (diagonal mode gives a diagonal matrix).
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        if self.dim > 4 * DENSE_LIMIT {
            return Err(ViperError::domain(format!("refusing to materialize a {0}x{0} matrix", self.dim)));
        }
        Ok(match &self.repr {
            Repr::Dense { mat, .. } => mat.clone(),
            Repr::LowRank { rows, .. } => {
                let mut m = DMatrix::identity(self.dim, self.dim) * self.lambda;
                for r in rows {
                    for (i, a) in r.iter() {
                        for (j, b) in r.iter() {
                            m[(i, j)] += a * b;
                        }
                    }
                }
                m
            }
            Repr::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        })
    }

    /// `Λ` in the columnar text format: a header line, then one row per line.
    pub fn to_text(&self) -> Result<String> {
        matrix_text(&self.matrix()?, &format!("covariance dim={} lambda={} mode={}", self.dim, self.lambda, self.mode.name()))
    }

    pub fn snapshot(&self) -> CovSnapshot {
        let data = match &self.repr {
            Repr::Dense { mat, chol, .. } => SnapshotData::Dense {
                matrix: mat.as_slice().to_vec(),
                factor: chol.l().as_slice().to_vec(),
            },
            Repr::LowRank { rows, .. } => SnapshotData::LowRank(rows.clone()),
            Repr::Diagonal(d) => SnapshotData::Diagonal(d.clone()),
        };
        CovSnapshot { dim: self.dim, lambda: self.lambda, mode: self.mode, count: self.count, data }
    }

    pub fn from_snapshot(s: &CovSnapshot) -> Result<Self> {
        let mut acc = match &s.data {
            SnapshotData::Dense { matrix, factor } => {
                if matrix.len() != s.dim * s.dim || factor.len() != s.dim * s.dim {
                    return Err(ViperError::parse("dense covariance snapshot has the wrong size"));
                }
                let mat = DMatrix::from_column_slice(s.dim, s.dim, matrix);
                let l = DMatrix::from_column_slice(s.dim, s.dim, factor);
                if l.diagonal().iter().any(|d| !(*d > 0.0)) {
                    return Err(ViperError::numeric("snapshot covariance factor is not positive definite"));
                }
                // Reuse the stored factor so restored queries are bit-identical.
                let chol = Cholesky::pack_dirty(l);
                Self::checked(s.dim, s.lambda, CovMode::Full, Repr::Dense { mat, chol, since_refresh: 0 })?
            }
            SnapshotData::LowRank(rows) => {
                let mut acc = Self::low_rank(s.dim, s.lambda)?;
                for r in rows {
                    acc.update_sparse(r)?;
                }
                acc
            }
            SnapshotData::Diagonal(d) => {
                if d.len() != s.dim {
                    return Err(ViperError::parse("diagonal covariance snapshot has the wrong size"));
                }
                Self::checked(s.dim, s.lambda, CovMode::Diagonal, Repr::Diagonal(d.clone()))?
            }
        };
        acc.count = s.count;
        Ok(acc)
    }
}

/// Serializable state of a [`CovarianceAccumulator`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovSnapshot {
    pub dim: usize,
    pub lambda: f64,
    pub mode: CovMode,
    pub count: usize,
    pub data: SnapshotData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SnapshotData {
    /// Column-major `Λ` and its lower Cholesky factor.
    Dense { matrix: Vec<f64>, factor: Vec<f64> },
    LowRank(Vec<SparseVec>),
    Diagonal(Vec<f64>),
}

/// Solve `L y = c` for packed lower-triangular `L`.
fn forward_solve(packed: &[f64], c: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(c.len());
    for (k, ck) in c.iter().enumerate() {
        let row = &packed[k * (k + 1) / 2..k * (k + 1) / 2 + k + 1];
        let s: f64 = row[..k].iter().zip(&y).map(|(a, b)| a * b).sum();
        y.push((ck - s) / row[k]);
    }
    y
}

/// Solve `Lᵀ x = y` for packed lower-triangular `L`.
fn backward_solve(packed: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut x = y.to_vec();
    for k in (0..n).rev() {
        let base = k * (k + 1) / 2;
        x[k] /= packed[base + k];
        let xk = x[k];
        for j in 0..k {
            x[j] -= packed[base + j] * xk;
        }
    }
    x
}

fn matrix_text(m: &DMatrix<f64>, header: &str) -> Result<String> {
    let mut out = format!("# {header}\n# rows={} cols={}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        out.push_str(&fmt_reals(&row, " "));
        out.push('\n');
    }
    Ok(out)
}

/// ReLU NTK of the symmetric two-layer network on unit inputs:
/// `u (π - θ) / (2π)` with `u = xᵀx'` clamped to `[-1, 1]` and `θ` the
/// angle between the inputs.
pub fn ntk_closed_form(x: &[f64], y: &[f64]) -> f64 {
    let u = crate::linalg::dot(x, y).clamp(-1.0, 1.0);
    u * (std::f64::consts::PI - angle(x, y)) / (2.0 * std::f64::consts::PI)
}

// arccos loses half the digits near u = ±1; the half-angle form does not.
fn angle(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (crate::linalg::norm(x), crate::linalg::norm(y));
    if nx == 0.0 || ny == 0.0 {
        return std::f64::consts::FRAC_PI_2;
    }
    let (mut d, mut s) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (a, b) = (a / nx, b / ny);
        d += (a - b) * (a - b);
        s += (a + b) * (a + b);
    }
    2.0 * d.sqrt().atan2(s.sqrt())
}

/// `⟨g(x; W0), g(x'; W0)⟩ = xᵀx' · (1/m) Σ_i 1{w_iᵀx > 0} 1{w_iᵀx' > 0}`.
pub fn empirical_ntk(params: &NetParams, x: &[f64], y: &[f64]) -> Result<f64> {
    let gx = params.init_grad(x)?;
    let gy = params.init_grad(y)?;
    Ok(crate::linalg::dot(&gx, &gy))
}

/// Symmetric kernel Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NtkGram {
    pub entries: DMatrix<f64>,
}

impl NtkGram {
    pub fn closed_form(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let entries = DMatrix::from_fn(n, n, |i, j| ntk_closed_form(&points[i], &points[j]));
        NtkGram { entries }
    }

    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(ViperError::domain("Gram matrix must be square"));
        }
        Ok(NtkGram { entries })
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn to_text(&self) -> Result<String> {
        matrix_text(&self.entries, "ntk gram")
    }
}

/// `logdet(I + K/λ) / ln(1 + K'/λ)`.
pub fn effective_dimension(gram: &NtkGram, lambda: f64, k_prime: usize) -> Result<f64> {
    if !(lambda > 0.0) || k_prime == 0 {
        return Err(ViperError::config("effective dimension needs lambda > 0 and K' >= 1"));
    }
    let n = gram.size();
    let k = &gram.entries;
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || k[(i, j)] == 0.0));
    let logdet = if diagonal {
        // Runs of equal eigenvalues contribute count * ln(1 + v/λ) exactly.
        let mut vals: Vec<f64> = k.diagonal().iter().copied().collect();
        if vals.iter().any(|v| !(*v >= 0.0)) {
            return Err(ViperError::numeric("Gram matrix is not positive semidefinite"));
        }
        vals.sort_by(f64::total_cmp);
        let mut total = 0.0;
        let mut i = 0;
        while i < vals.len() {
            let run = vals[i..].iter().take_while(|v| **v == vals[i]).count();
            total += run as f64 * (1.0 + vals[i] / lambda).ln();
            i += run;
        }
        total
    } else {
        let shifted = DMatrix::identity(n, n) + k / lambda;
        let chol =
            Cholesky::new(shifted).ok_or_else(|| ViperError::numeric("Gram matrix is not positive semidefinite"))?;
        2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    };
    Ok(logdet / (1.0 + k_prime as f64 / lambda).ln())
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// `M = max(1, ⌈ln(HSA/δ) / ln(1/(1 - Φ(-1)))⌉)`.
pub fn ensemble_size(delta: f64, horizon: usize, n_states: usize, n_actions: usize) -> Result<usize> {
    let hsa = (horizon * n_states * n_actions) as f64;
    if !(delta > 0.0 && delta <= hsa) {
        return Err(ViperError::config(format!("delta must lie in (0, HSA = {hsa}], got {delta}")));
    }
    let m = (hsa / delta).ln() / (1.0 / (1.0 - normal_cdf(-1.0))).ln();
    Ok((m.ceil() as usize).max(1))
}
