//! Weighted ℓ1-regularized fits by cyclic coordinate descent: ordinary Lasso
//! regression, the Riesz-representer fit with a linear target, the synthetic
//! response reformulation that turns the representer fit into a Lasso when the
//! Gram matrix is invertible, and penalty selection by cross-validation.
//!
//! Loss convention, used consistently across both fits so that the two routes
//! agree at the same penalty:
//!
//! * regression: `½ Σᵢ ωᵢ (yᵢ − b(Zᵢ,Xᵢ)ᵀβ)² + α ‖β̃‖₁`
//! * representer: `Σᵢ ωᵢ {½ (b(Zᵢ,Xᵢ)ᵀγ)² − M(Xᵢ)ᵀγ} + α ‖γ̃‖₁`
//!
//! Columns are standardized internally to unit weighted second moment; the
//! penalty applies to the standardized coefficients (`β̃`, `γ̃`) and reported
//! coefficients are on the original scale. Weights enter raw, so scaling the
//! weights and the penalty by the same constant leaves the solution unchanged.

use crate::linalg::{cholesky, cholesky_solve, dot, sym_condition, Mat};
use thiserror::Error;

pub const TOL_CD: f64 = 1e-8;
pub const TOL_KKT: f64 = 1e-6;
pub const MAX_SWEEPS: usize = 10_000;
/// Penalty grid: log-spaced from the gradient-at-zero maximum down by 1e-4.
pub const GRID_SIZE: usize = 50;
pub const GRID_RATIO: f64 = 1e-4;
/// Gram condition number above which the synthetic-response route is refused.
pub const COND_LIMIT: f64 = 1e8;
/// Exact leave-one-out cross validation is quadratic cost; gate by n.
pub const LOO_MAX_N: usize = 2_000;

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("weights must be nonnegative, finite, and not all zero")]
    BadWeights,
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error("alpha = 0 requires fewer columns than observations (p = {p}, n = {n})")]
    UnpenalizedHighDim { p: usize, n: usize },
    #[error("negative penalty {0}")]
    NegativePenalty(f64),
    #[error("weighted Gram matrix is ill-conditioned (condition {0:.3e})")]
    IllConditioned(f64),
    #[error("cross-validation fold {0} has zero total weight")]
    ZeroWeightFold(usize),
    #[error("cross-validation requires at least 2 folds, got {0}")]
    BadFolds(usize),
    #[error("penalty grid is empty")]
    EmptyGrid,
    #[error("leave-one-out is gated to n <= {max}, got n = {n}")]
    LooTooLarge { n: usize, max: usize },
}

/// Converged ℓ1 fit. Coefficients are reported on the original column scale.
#[derive(Clone, Debug)]
pub struct LassoFit {
    pub coefficients: Vec<f64>,
    pub penalty: f64,
    /// Number of full coordinate sweeps performed.
    pub iterations: usize,
    pub converged: bool,
    /// Final loss value (including the penalty term).
    pub objective: f64,
    /// Objective after each sweep; nonincreasing.
    pub objective_trace: Vec<f64>,
}

/// `sign(v) · max(|v| − a, 0)`.
#[inline]
pub fn soft_threshold(v: f64, a: f64) -> f64 {
    if v > a {
        v - a
    } else if v < -a {
        v + a
    } else {
        0.0
    }
}

fn check_weights(weights: &[f64], n: usize) -> Result<f64, LassoError> {
    if weights.len() != n {
        return Err(LassoError::Dimension(format!(
            "{} weights for {n} observations",
            weights.len()
        )));
    }
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(LassoError::BadWeights);
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(LassoError::BadWeights);
    }
    Ok(total)
}

/// Column scales: square root of the weighted mean second moment. Dead
/// columns (zero scale) are excluded from the fit and keep coefficient zero.
fn column_scales(design: &Mat, weights: &[f64], total_w: f64) -> Vec<f64> {
    let p = design.cols();
    let mut sq = vec![0.0; p];
    for i in 0..design.rows() {
        let row = design.row(i);
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        for (s, &b) in sq.iter_mut().zip(row) {
            *s += w * b * b;
        }
    }
    sq.iter().map(|&s| (s / total_w).sqrt()).collect()
}

/// Standardized regression problem in column-major form.
struct RegWork {
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    w: Vec<f64>,
    scale: Vec<f64>,
    total_w: f64,
}

impl RegWork {
    fn build(design: &Mat, response: &[f64], weights: &[f64]) -> Result<Self, LassoError> {
        let n = design.rows();
        if response.len() != n {
            return Err(LassoError::Dimension(format!(
                "{} responses for {n} rows",
                response.len()
            )));
        }
        if design.data().iter().any(|v| !v.is_finite()) {
            return Err(LassoError::NonFinite("design"));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(LassoError::NonFinite("response"));
        }
        let total_w = check_weights(weights, n)?;
        let scale = column_scales(design, weights, total_w);
        let p = design.cols();
        let mut cols = vec![vec![0.0; n]; p];
        for i in 0..n {
            let row = design.row(i);
            for j in 0..p {
                if scale[j] > 0.0 {
                    cols[j][i] = row[j] / scale[j];
                }
            }
        }
        Ok(RegWork { cols, y: response.to_vec(), w: weights.to_vec(), scale, total_w })
    }

    /// Gradient-at-zero bound: smallest penalty that zeroes every coefficient.
    fn alpha_max(&self) -> f64 {
        self.cols
            .iter()
            .map(|col| {
                dot_w(col, &self.y, &self.w).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Cyclic coordinate descent from a warm start (standardized scale).
    fn solve(&self, alpha: f64, start: &[f64], settings: &FitSettings) -> CdResult {
        let p = self.cols.len();
        let mut coef = start.to_vec();
        let mut resid: Vec<f64> = self.y.clone();
        for j in 0..p {
            if coef[j] != 0.0 {
                for (r, &b) in resid.iter_mut().zip(&self.cols[j]) {
                    *r -= b * coef[j];
                }
            }
        }
        let mut trace = Vec::new();
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < settings.max_sweeps {
            sweeps += 1;
            let mut max_delta = 0.0f64;
            for j in 0..p {
                if self.scale[j] <= 0.0 {
                    continue;
                }
                let col = &self.cols[j];
                let rho = dot_w(col, &resid, &self.w) + self.total_w * coef[j];
                let new = soft_threshold(rho, alpha) / self.total_w;
                let delta = new - coef[j];
                if delta != 0.0 {
                    for (r, &b) in resid.iter_mut().zip(col) {
                        *r -= b * delta;
                    }
                    coef[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            trace.push(self.objective(&resid, &coef, alpha));
            if max_delta < settings.tol_cd && self.kkt(&resid, &coef, alpha) <= settings.tol_kkt {
                converged = true;
                break;
            }
        }
        CdResult { coef, trace, sweeps, converged }
    }

    fn objective(&self, resid: &[f64], coef: &[f64], alpha: f64) -> f64 {
        let fit: f64 = resid.iter().zip(&self.w).map(|(r, w)| w * r * r).sum::<f64>() * 0.5;
        fit + alpha * coef.iter().map(|c| c.abs()).sum::<f64>()
    }

    fn kkt(&self, resid: &[f64], coef: &[f64], alpha: f64) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.cols.len() {
            if self.scale[j] <= 0.0 {
                continue;
            }
            let grad = -dot_w(&self.cols[j], resid, &self.w);
            let v = if coef[j] == 0.0 {
                (grad.abs() - alpha).max(0.0)
            } else {
                (grad + alpha * coef[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Standardized representer problem: Gram matrix plus mean target.
struct RieszWork {
    gram: Mat,
    m: Vec<f64>,
    scale: Vec<f64>,
}

impl RieszWork {
    fn build(design: &Mat, targets: &Mat, weights: &[f64]) -> Result<Self, LassoError> {
        let n = design.rows();
        let p = design.cols();
        if targets.rows() != n || targets.cols() != p {
            return Err(LassoError::Dimension(format!(
                "targets are {}x{}, expected {n}x{p}",
                targets.rows(),
                targets.cols()
            )));
        }
        if design.data().iter().any(|v| !v.is_finite()) {
            return Err(LassoError::NonFinite("design"));
        }
        if targets.data().iter().any(|v| !v.is_finite()) {
            return Err(LassoError::NonFinite("targets"));
        }
        let total_w = check_weights(weights, n)?;
        let scale = column_scales(design, weights, total_w);
        let mut gram = Mat::zeros(p, p);
        let mut m = vec![0.0; p];
        for i in 0..n {
            let w = weights[i];
            if w == 0.0 {
                continue;
            }
            let row = design.row(i);
            let trow = targets.row(i);
            for j in 0..p {
                if scale[j] <= 0.0 {
                    continue;
                }
                let bj = row[j] / scale[j];
                m[j] += w * trow[j] / scale[j];
                for k in j..p {
                    if scale[k] <= 0.0 {
                        continue;
                    }
                    let v = gram.get(j, k) + w * bj * row[k] / scale[k];
                    gram.set(j, k, v);
                }
            }
        }
        for j in 0..p {
            for k in (j + 1)..p {
                let v = gram.get(j, k);
                gram.set(k, j, v);
            }
        }
        Ok(RieszWork { gram, m, scale })
    }

    fn alpha_max(&self) -> f64 {
        self.m.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn solve(&self, alpha: f64, start: &[f64], settings: &FitSettings) -> CdResult {
        let p = self.m.len();
        let mut coef = start.to_vec();
        // grad = G γ − m, maintained incrementally.
        let mut grad: Vec<f64> = (0..p)
            .map(|j| dot(self.gram.row(j), &coef) - self.m[j])
            .collect();
        let mut trace = Vec::new();
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < settings.max_sweeps {
            sweeps += 1;
            let mut max_delta = 0.0f64;
            for j in 0..p {
                let gjj = self.gram.get(j, j);
                if gjj <= 0.0 {
                    continue;
                }
                let rho = gjj * coef[j] - grad[j];
                let new = soft_threshold(rho, alpha) / gjj;
                let delta = new - coef[j];
                if delta != 0.0 {
                    let col = self.gram.row(j);
                    for (g, &gv) in grad.iter_mut().zip(col) {
                        *g += gv * delta;
                    }
                    coef[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }
            trace.push(self.objective(&coef, &grad, alpha));
            if max_delta < settings.tol_cd && self.kkt(&coef, &grad, alpha) <= settings.tol_kkt {
                converged = true;
                break;
            }
        }
        CdResult { coef, trace, sweeps, converged }
    }

    fn objective(&self, coef: &[f64], grad: &[f64], alpha: f64) -> f64 {
        // ½γᵀGγ − mᵀγ = ½γᵀ(grad − m)  … using grad = Gγ − m.
        let quad: f64 = coef
            .iter()
            .zip(grad.iter().zip(&self.m))
            .map(|(c, (g, m))| c * (g - m))
            .sum::<f64>()
            * 0.5;
        quad + alpha * coef.iter().map(|c| c.abs()).sum::<f64>()
    }

    fn kkt(&self, coef: &[f64], grad: &[f64], alpha: f64) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..coef.len() {
            if self.gram.get(j, j) <= 0.0 {
                continue;
            }
            let v = if coef[j] == 0.0 {
                (grad[j].abs() - alpha).max(0.0)
            } else {
                (grad[j] + alpha * coef[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

struct CdResult {
    coef: Vec<f64>,
    trace: Vec<f64>,
    sweeps: usize,
    converged: bool,
}

#[inline]
fn dot_w(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += w[i] * a[i] * b[i];
    }
    acc
}

#[derive(Clone, Debug)]
pub struct FitSettings {
    pub tol_cd: f64,
    pub tol_kkt: f64,
    pub max_sweeps: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings { tol_cd: TOL_CD, tol_kkt: TOL_KKT, max_sweeps: MAX_SWEEPS }
    }
}

fn check_alpha(alpha: f64, n: usize, p: usize) -> Result<(), LassoError> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(LassoError::NegativePenalty(alpha));
    }
    if alpha == 0.0 && p >= n {
        return Err(LassoError::UnpenalizedHighDim { p, n });
    }
    Ok(())
}

fn unscale(coef: &[f64], scale: &[f64]) -> Vec<f64> {
    coef.iter().zip(scale).map(|(c, s)| if *s > 0.0 { c / s } else { 0.0 }).collect()
}

/// Weighted Lasso regression.
pub fn fit_lasso(
    design: &Mat,
    response: &[f64],
    weights: &[f64],
    alpha: f64,
    settings: &FitSettings,
) -> Result<LassoFit, LassoError> {
    check_alpha(alpha, design.rows(), design.cols())?;
    let work = RegWork::build(design, response, weights)?;
    let out = work.solve(alpha, &vec![0.0; design.cols()], settings);
    Ok(LassoFit {
        coefficients: unscale(&out.coef, &work.scale),
        penalty: alpha,
        iterations: out.sweeps,
        converged: out.converged,
        objective: out.trace.last().copied().unwrap_or(f64::NAN),
        objective_trace: out.trace,
    })
}

/// Riesz-representer fit: quadratic-minus-linear loss with target rows
/// `M(Xᵢ)`.
pub fn fit_riesz(
    design: &Mat,
    targets: &Mat,
    weights: &[f64],
    alpha: f64,
    settings: &FitSettings,
) -> Result<LassoFit, LassoError> {
    check_alpha(alpha, design.rows(), design.cols())?;
    let work = RieszWork::build(design, targets, weights)?;
    let out = work.solve(alpha, &vec![0.0; design.cols()], settings);
    Ok(LassoFit {
        coefficients: unscale(&out.coef, &work.scale),
        penalty: alpha,
        iterations: out.sweeps,
        converged: out.converged,
        objective: out.trace.last().copied().unwrap_or(f64::NAN),
        objective_trace: out.trace,
    })
}

/// Synthetic response for the representer fit: `Ỹᵢ = b(Zᵢ,Xᵢ)ᵀ G⁻¹ m` with
/// `G` the weighted Gram matrix and `m` the weighted mean target. Fitting an
/// ordinary Lasso on `Ỹ` reproduces the representer fit at any penalty.
pub fn riesz_as_lasso(
    design: &Mat,
    targets: &Mat,
    weights: &[f64],
) -> Result<Vec<f64>, LassoError> {
    let n = design.rows();
    let p = design.cols();
    if p >= n {
        return Err(LassoError::UnpenalizedHighDim { p, n });
    }
    if targets.rows() != n || targets.cols() != p {
        return Err(LassoError::Dimension(format!(
            "targets are {}x{}, expected {n}x{p}",
            targets.rows(),
            targets.cols()
        )));
    }
    check_weights(weights, n)?;
    let mut gram = Mat::zeros(p, p);
    let mut m = vec![0.0; p];
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let row = design.row(i);
        let trow = targets.row(i);
        for j in 0..p {
            m[j] += w * trow[j];
            for k in j..p {
                let v = gram.get(j, k) + w * row[j] * row[k];
                gram.set(j, k, v);
            }
        }
    }
    for j in 0..p {
        for k in (j + 1)..p {
            let v = gram.get(j, k);
            gram.set(k, j, v);
        }
    }
    let cond = sym_condition(&gram);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(LassoError::IllConditioned(cond));
    }
    let l = cholesky(&gram).ok_or(LassoError::IllConditioned(cond))?;
    let ginv_m = cholesky_solve(&l, &m);
    Ok((0..n).map(|i| dot(design.row(i), &ginv_m)).collect())
}

/// Maximum KKT violation of a regression fit, recomputed from the data.
pub fn kkt_violation_lasso(
    design: &Mat,
    response: &[f64],
    weights: &[f64],
    alpha: f64,
    coefficients: &[f64],
) -> Result<f64, LassoError> {
    let work = RegWork::build(design, response, weights)?;
    let std_coef: Vec<f64> =
        coefficients.iter().zip(&work.scale).map(|(c, s)| c * s).collect();
    let mut resid = work.y.clone();
    for (j, col) in work.cols.iter().enumerate() {
        if std_coef[j] != 0.0 {
            for (r, &b) in resid.iter_mut().zip(col) {
                *r -= b * std_coef[j];
            }
        }
    }
    Ok(work.kkt(&resid, &std_coef, alpha))
}

/// Maximum KKT violation of a representer fit, recomputed from the data.
pub fn kkt_violation_riesz(
    design: &Mat,
    targets: &Mat,
    weights: &[f64],
    alpha: f64,
    coefficients: &[f64],
) -> Result<f64, LassoError> {
    let work = RieszWork::build(design, targets, weights)?;
    let std_coef: Vec<f64> =
        coefficients.iter().zip(&work.scale).map(|(c, s)| c * s).collect();
    let grad: Vec<f64> = (0..std_coef.len())
        .map(|j| dot(work.gram.row(j), &std_coef) - work.m[j])
        .collect();
    Ok(work.kkt(&std_coef, &grad, alpha))
}

/// The fit target for penalty selection.
pub enum PenaltyProblem<'a> {
    Regression { response: &'a [f64] },
    Riesz { targets: &'a Mat },
}

/// Log-spaced penalty grid from the gradient-at-zero maximum down to
/// `alpha_max · 1e-4`, in decreasing order. A zero gradient collapses the
/// grid to the single point 0.
pub fn penalty_grid(
    design: &Mat,
    problem: &PenaltyProblem,
    weights: &[f64],
    size: usize,
) -> Result<Vec<f64>, LassoError> {
    let alpha_max = match problem {
        PenaltyProblem::Regression { response } => {
            RegWork::build(design, response, weights)?.alpha_max()
        }
        PenaltyProblem::Riesz { targets } => {
            RieszWork::build(design, targets, weights)?.alpha_max()
        }
    };
    if alpha_max <= 0.0 {
        return Ok(vec![0.0]);
    }
    let size = size.max(1);
    if size == 1 {
        return Ok(vec![alpha_max]);
    }
    let log_max = alpha_max.ln();
    let log_min = (alpha_max * GRID_RATIO).ln();
    Ok((0..size)
        .map(|k| (log_max + (log_min - log_max) * k as f64 / (size - 1) as f64).exp())
        .collect())
}

/// Deterministic round-robin fold assignment used for penalty selection.
fn cv_fold_of(i: usize, folds: usize) -> usize {
    i % folds
}

/// Selects the penalty minimizing out-of-fold weighted loss (squared-error
/// loss for regression, the representer loss for Riesz fits). Ties break
/// toward the larger penalty. `folds = n` is exact leave-one-out, gated to
/// n ≤ 2000.
pub fn cross_validate_penalty(
    design: &Mat,
    problem: &PenaltyProblem,
    weights: &[f64],
    grid: &[f64],
    folds: usize,
) -> Result<f64, LassoError> {
    let n = design.rows();
    if grid.is_empty() {
        return Err(LassoError::EmptyGrid);
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    if folds < 2 || folds > n {
        return Err(LassoError::BadFolds(folds));
    }
    if folds == n && n > LOO_MAX_N {
        return Err(LassoError::LooTooLarge { n, max: LOO_MAX_N });
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let settings = FitSettings::default();
    let mut losses = vec![0.0f64; sorted.len()];
    for fold in 0..folds {
        let train_idx: Vec<usize> = (0..n).filter(|&i| cv_fold_of(i, folds) != fold).collect();
        let valid_idx: Vec<usize> = (0..n).filter(|&i| cv_fold_of(i, folds) == fold).collect();
        let valid_w: f64 = valid_idx.iter().map(|&i| weights[i]).sum();
        if valid_w <= 0.0 {
            return Err(LassoError::ZeroWeightFold(fold));
        }
        let train_w: f64 = train_idx.iter().map(|&i| weights[i]).sum();
        if train_w <= 0.0 {
            return Err(LassoError::ZeroWeightFold(fold));
        }
        let sub_design = take_rows(design, &train_idx);
        let sub_weights: Vec<f64> = train_idx.iter().map(|&i| weights[i]).collect();
        match problem {
            PenaltyProblem::Regression { response } => {
                let sub_y: Vec<f64> = train_idx.iter().map(|&i| response[i]).collect();
                let work = RegWork::build(&sub_design, &sub_y, &sub_weights)?;
                let mut warm = vec![0.0; design.cols()];
                for (gi, &alpha) in sorted.iter().enumerate() {
                    let out = work.solve(alpha, &warm, &settings);
                    warm = out.coef.clone();
                    let coef = unscale(&out.coef, &work.scale);
                    for &i in &valid_idx {
                        let pred = dot(design.row(i), &coef);
                        let r = response[i] - pred;
                        losses[gi] += 0.5 * weights[i] * r * r;
                    }
                }
            }
            PenaltyProblem::Riesz { targets } => {
                let sub_t = take_rows(targets, &train_idx);
                let work = RieszWork::build(&sub_design, &sub_t, &sub_weights)?;
                let mut warm = vec![0.0; design.cols()];
                for (gi, &alpha) in sorted.iter().enumerate() {
                    let out = work.solve(alpha, &warm, &settings);
                    warm = out.coef.clone();
                    let coef = unscale(&out.coef, &work.scale);
                    for &i in &valid_idx {
                        let pred = dot(design.row(i), &coef);
                        losses[gi] +=
                            weights[i] * (0.5 * pred * pred - dot(targets.row(i), &coef));
                    }
                }
            }
        }
    }
    let mut best = 0usize;
    for gi in 1..sorted.len() {
        if losses[gi] < losses[best] {
            best = gi;
        }
    }
    Ok(sorted[best])
}

pub(crate) fn take_rows(m: &Mat, idx: &[usize]) -> Mat {
    let mut out = Mat::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).copy_from_slice(m.row(i));
    }
    out
}

/// Pathwise solver reused by the estimators: fits the full decreasing grid
/// with warm starts and returns the fit at the requested penalty.
pub(crate) fn fit_lasso_warm_grid(
    design: &Mat,
    response: &[f64],
    weights: &[f64],
    grid_desc: &[f64],
    stop_at: f64,
    settings: &FitSettings,
) -> Result<LassoFit, LassoError> {
    check_alpha(stop_at, design.rows(), design.cols())?;
    let work = RegWork::build(design, response, weights)?;
    let mut warm = vec![0.0; design.cols()];
    let mut last: Option<CdResult> = None;
    for &alpha in grid_desc.iter().filter(|&&a| a >= stop_at) {
        let out = work.solve(alpha, &warm, settings);
        warm = out.coef.clone();
        last = Some(out);
        if alpha == stop_at {
            break;
        }
    }
    let out = match last {
        Some(out) if grid_desc.contains(&stop_at) => out,
        _ => work.solve(stop_at, &warm, settings),
    };
    Ok(LassoFit {
        coefficients: unscale(&out.coef, &work.scale),
        penalty: stop_at,
        iterations: out.sweeps,
        converged: out.converged,
        objective: out.trace.last().copied().unwrap_or(f64::NAN),
        objective_trace: out.trace,
    })
}
