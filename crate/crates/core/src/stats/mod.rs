//! Correlations, residualization, significance tests, the validity–specificity
//! frontier, composites, and nested-model comparison.

mod linalg;
pub mod special;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use special::{f_upper_p, t_two_sided_p};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("statistical degeneracy: {0}")]
    Degenerate(String),
    #[error("need at least {need} observations, got {got}")]
    Insufficient { need: usize, got: usize },
    #[error("singular design matrix")]
    Singular,
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("series lengths differ")]
    LengthMismatch,
    #[error("empty input")]
    Empty,
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

/// Two aligned series over a common set of labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSeries {
    pub labels: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PairedSeries {
    pub fn new(labels: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if labels.len() != x.len() || x.len() != y.len() {
            return Err(StatsError::LengthMismatch);
        }
        Ok(Self { labels, x, y })
    }

    /// Aligns two keyed series on the labels present in both.
    pub fn intersect(x: &BTreeMap<String, f64>, y: &BTreeMap<String, f64>) -> Self {
        let mut labels = Vec::new();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, &xv) in x {
            if let Some(&yv) = y.get(k) {
                labels.push(k.clone());
                xs.push(xv);
                ys.push(yv);
            }
        }
        Self { labels, x: xs, y: ys }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
}

/// Capability proxies aligned to a pool (one column per proxy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityStack {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl CapabilityStack {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(StatsError::LengthMismatch);
        }
        if let Some(first) = columns.first() {
            if columns.iter().any(|c| c.len() != first.len()) {
                return Err(StatsError::LengthMismatch);
            }
        }
        Ok(Self { names, columns })
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }
}

/// One (test, benchmark) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCell {
    pub test: String,
    pub benchmark: String,
    pub embedding: String,
    pub validity_r: f64,
    pub validity_p: f64,
    pub specificity_r: f64,
    pub specificity_p: f64,
    pub n: usize,
    pub k: usize,
    /// Benchmark–capability coupling on this cell's pool.
    pub coupling: f64,
    pub pool: Vec<String>,
}

impl CorrelationCell {
    /// Checks |r|g| ≤ ceiling(|r|, R) + eps.
    pub fn within_frontier(&self, eps: f64) -> bool {
        match frontier_ceiling(self.validity_r.abs().min(1.0), self.coupling) {
            Ok(c) => self.specificity_r.abs() <= c + eps,
            Err(_) => false,
        }
    }
}

/// Significance stars at the .05 / .01 / .001 thresholds.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with denominator n − 1.
pub fn sample_variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Sample Pearson correlation of two aligned slices.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch);
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::Insufficient { need: 3, got: n });
    }
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Degenerate("constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn pearson(series: &PairedSeries) -> Result<f64> {
    pearson_r(&series.x, &series.y)
}

/// Two-sided p for a correlation r on n points with k partialled controls.
pub fn pearson_p(r: f64, n: usize, k: usize) -> Result<f64> {
    if !(-1.0..=1.0).contains(&r) {
        return Err(StatsError::Domain(format!("r = {r}")));
    }
    if n < k + 3 {
        return Err(StatsError::Insufficient { need: k + 3, got: n });
    }
    if r.abs() == 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2 - k) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    Ok(t_two_sided_p(t, df))
}

/// An ordinary least squares fit with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// Intercept first, then one slope per predictor.
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
}

pub fn ols_fit(y: &[f64], predictors: &[Vec<f64>]) -> Result<OlsFit> {
    let n = y.len();
    let p = predictors.len();
    if predictors.iter().any(|c| c.len() != n) {
        return Err(StatsError::LengthMismatch);
    }
    if n < p + 2 {
        return Err(StatsError::Insufficient { need: p + 2, got: n });
    }
    let mut columns = Vec::with_capacity(p + 1);
    columns.push(vec![1.0; n]);
    columns.extend(predictors.iter().cloned());
    let coefficients = linalg::least_squares(&columns, y)?;
    let fitted: Vec<f64> = (0..n)
        .map(|i| columns.iter().zip(&coefficients).map(|(c, b)| c[i] * b).sum())
        .collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let my = mean(y);
    let sst: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sst == 0.0 {
        return Err(StatsError::Degenerate("constant response".into()));
    }
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    Ok(OlsFit {
        coefficients,
        fitted,
        residuals,
        r_squared: (1.0 - sse / sst).clamp(0.0, 1.0),
    })
}

/// Result of [`semi_partial`].
#[derive(Debug, Clone, PartialEq)]
pub struct SemiPartial {
    pub r: f64,
    pub p: f64,
    /// corr(Y, Ŷ_g), the benchmark–capability coupling on the pool.
    pub coupling: f64,
    pub residuals: Vec<f64>,
}

/// Correlation of x with y residualized on the capability stack.
pub fn semi_partial(x: &[f64], y: &[f64], g: &CapabilityStack) -> Result<SemiPartial> {
    let n = x.len();
    if y.len() != n || g.columns.iter().any(|c| c.len() != n) {
        return Err(StatsError::LengthMismatch);
    }
    let k = g.k();
    if n < k + 4 {
        return Err(StatsError::Insufficient { need: k + 4, got: n });
    }
    let fit = ols_fit(y, &g.columns)?;
    let r = pearson_r(x, &fit.residuals)?;
    let p = pearson_p(r, n, k)?;
    Ok(SemiPartial {
        r,
        p,
        coupling: fit.r_squared.sqrt(),
        residuals: fit.residuals,
    })
}

/// Upper bound on |r(X, Y|g)| given validity v and coupling R.
pub fn frontier_ceiling(v: f64, coupling: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&v) {
        return Err(StatsError::Domain(format!("validity {v} outside [0, 1]")));
    }
    if !(-1.0..=1.0).contains(&coupling) {
        return Err(StatsError::Domain(format!("coupling {coupling} outside [-1, 1]")));
    }
    let r = coupling.abs();
    Ok(v * (1.0 - r * r).sqrt() + r * (1.0 - v * v).sqrt())
}

/// Maximizes v + ceiling(v) over v ∈ [0, 1]: dense grid, then golden-section
/// refinement around the best grid point.
pub fn frontier_optimum(coupling: f64) -> Result<(f64, f64)> {
    if coupling.is_nan() || coupling.abs() >= 1.0 {
        return Err(StatsError::Domain(format!("|R| must be < 1, got {coupling}")));
    }
    let objective = |v: f64| v + frontier_ceiling(v, coupling).expect("in domain");
    const GRID: usize = 10_000;
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..=GRID {
        let val = objective(i as f64 / GRID as f64);
        if val > best_val {
            best_val = val;
            best = i;
        }
    }
    let mut lo = best.saturating_sub(1) as f64 / GRID as f64;
    let mut hi = (best + 1).min(GRID) as f64 / GRID as f64;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if objective(a) < objective(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let mut v = 0.5 * (lo + hi);
    let grid_v = best as f64 / GRID as f64;
    if objective(grid_v) > objective(v) {
        v = grid_v;
    }
    Ok((v, frontier_ceiling(v, coupling)?))
}

/// Sampled frontier for one coupling value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    pub coupling: f64,
    pub points: Vec<(f64, f64)>,
    pub optimum: (f64, f64),
}

impl FrontierCurve {
    pub fn new(coupling: f64, samples: usize) -> Result<Self> {
        if samples < 2 {
            return Err(StatsError::Insufficient {
                need: 2,
                got: samples,
            });
        }
        let optimum = frontier_optimum(coupling)?;
        let points = (0..samples)
            .map(|i| {
                let v = i as f64 / (samples - 1) as f64;
                Ok((v, frontier_ceiling(v, coupling)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            coupling,
            points,
            optimum,
        })
    }
}

/// z-scores each embedding's per-model scores over the common pool and
/// averages them per model.
pub fn composite_z(per_embedding: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<BTreeMap<String, f64>> {
    let mut iter = per_embedding.values();
    let first = iter.next().ok_or(StatsError::Empty)?;
    let pool: Vec<&String> = first
        .keys()
        .filter(|m| per_embedding.values().all(|e| e.contains_key(*m)))
        .collect();
    if pool.len() < 2 {
        return Err(StatsError::Insufficient {
            need: 2,
            got: pool.len(),
        });
    }
    let mut out: BTreeMap<String, f64> = pool.iter().map(|m| ((*m).clone(), 0.0)).collect();
    for scores in per_embedding.values() {
        let values: Vec<f64> = pool.iter().map(|m| scores[*m]).collect();
        let mu = mean(&values);
        let sd = sample_variance(&values).sqrt();
        if sd == 0.0 {
            return Err(StatsError::Degenerate("constant embedding pool".into()));
        }
        for (m, v) in pool.iter().zip(&values) {
            *out.get_mut(*m).expect("pool member") += (v - mu) / sd;
        }
    }
    let e = per_embedding.len() as f64;
    for v in out.values_mut() {
        *v /= e;
    }
    Ok(out)
}

/// Result of [`nested_f_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedFTest {
    pub r2_base: f64,
    pub r2_full: f64,
    pub delta_r2: f64,
    pub f: f64,
    pub p: f64,
    /// Added predictors that were linearly independent of the base model.
    pub df_num: usize,
    pub df_den: usize,
}

/// Compares a base regression with one extended by `added` predictors.
///
/// Added predictors already spanned by the base model (or by earlier added
/// predictors) contribute nothing and are dropped from the numerator df.
pub fn nested_f_test(y: &[f64], base: &[Vec<f64>], added: &[Vec<f64>]) -> Result<NestedFTest> {
    let n = y.len();
    let r2 = |cols: &[Vec<f64>]| -> Result<f64> {
        if cols.is_empty() {
            Ok(0.0)
        } else {
            Ok(ols_fit(y, cols)?.r_squared)
        }
    };
    let r2_base = r2(base)?;
    let mut full: Vec<Vec<f64>> = base.to_vec();
    let mut q = 0usize;
    for col in added {
        if col.len() != n {
            return Err(StatsError::LengthMismatch);
        }
        let mut candidate = vec![vec![1.0; n]];
        candidate.extend(full.iter().cloned());
        candidate.push(col.clone());
        if linalg::is_full_rank(&candidate) {
            full.push(col.clone());
            q += 1;
        }
    }
    let p_full = full.len();
    if n < p_full + 2 {
        return Err(StatsError::Insufficient {
            need: p_full + 2,
            got: n,
        });
    }
    let df_den = n - p_full - 1;
    if q == 0 {
        return Ok(NestedFTest {
            r2_base,
            r2_full: r2_base,
            delta_r2: 0.0,
            f: 0.0,
            p: 1.0,
            df_num: 0,
            df_den,
        });
    }
    let r2_full = r2(&full)?;
    let delta_r2 = (r2_full - r2_base).max(0.0);
    let (f, p) = if r2_full >= 1.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (delta_r2 / q as f64) / ((1.0 - r2_full) / df_den as f64);
        (f, f_upper_p(f, q as f64, df_den as f64))
    };
    Ok(NestedFTest {
        r2_base,
        r2_full,
        delta_r2,
        f,
        p,
        df_num: q,
        df_den,
    })
}

/// Linear-interpolation quantile at zero-indexed rank (n − 1)·q.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::Domain(format!("q = {q}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(StatsError::Domain("NaN in quantile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        return Ok(sorted[lo]);
    }
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Diversity (1 − intra-similarity) from 10 ascending similarity-bin
/// percentages, weighting each bin by its midpoint.
pub fn hivemind_bin_mean(bin_percentages: &[f64]) -> Result<f64> {
    if bin_percentages.len() != 10 {
        return Err(StatsError::Domain(format!(
            "expected 10 bins, got {}",
            bin_percentages.len()
        )));
    }
    if bin_percentages.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(StatsError::Domain("negative or non-finite bin mass".into()));
    }
    let total: f64 = bin_percentages.iter().sum();
    if (total - 100.0).abs() > 0.5 {
        return Err(StatsError::Domain(format!("bins sum to {total}, not 100")));
    }
    let intra: f64 = bin_percentages
        .iter()
        .enumerate()
        .map(|(b, p)| p / total * (0.05 + 0.1 * b as f64))
        .sum();
    Ok(1.0 - intra)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!(close(pearson_r(&x, &x).unwrap(), 1.0, 1e-15));
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!(close(pearson_r(&x, &y).unwrap(), -1.0, 1e-15));
        // cov = 4 / 3 ... both variances 5/3 -> r = 4/5
        assert!(close(pearson_r(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap(), 0.8, 1e-15));
        assert!(matches!(pearson_r(&x, &[2.0; 4]), Err(StatsError::Degenerate(_))));
    }

    #[test]
    fn pearson_p_examples() {
        assert!(close(pearson_p(0.0, 10, 0).unwrap(), 1.0, 1e-15));
        let p = pearson_p(0.57, 21, 0).unwrap();
        assert!(close(p, 0.007, 0.001), "{p}");
        assert!(pearson_p(0.57, 21, 2).unwrap() > p);
        assert_eq!(pearson_p(1.0, 10, 0).unwrap(), 0.0);
        assert!(pearson_p(0.5, 3, 1).is_err());
    }

    #[test]
    fn ols_exact_and_null_fits() {
        let x1 = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let x2 = vec![2.0, -1.0, 0.5, 3.0, 1.0];
        let y: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| 1.0 + 2.0 * a - 3.0 * b).collect();
        let fit = ols_fit(&y, &[x1.clone(), x2]).unwrap();
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
        assert!(close(fit.r_squared, 1.0, 1e-12));
        assert!(close(fit.coefficients[0], 1.0, 1e-12));
        assert!(close(fit.coefficients[2], -3.0, 1e-12));

        // symmetric y around the mean of x has zero slope
        let fit = ols_fit(&[1.0, 2.0, 3.0, 2.0, 1.0], &[x1]).unwrap();
        assert!(close(fit.coefficients[1], 0.0, 1e-12));
        assert!(close(fit.r_squared, 0.0, 1e-12));
    }

    #[test]
    fn ols_matches_normal_equations() {
        // 4 points, slope = Sxy / Sxx, intercept = ȳ − b x̄
        let x = [0.0, 1.0, 2.0, 4.0];
        let y = [1.0, 2.0, 2.0, 5.0];
        let (mx, my) = (7.0 / 4.0, 10.0 / 4.0);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
        let b = sxy / sxx;
        let fit = ols_fit(&y, &[x.to_vec()]).unwrap();
        assert!(close(fit.coefficients[1], b, 1e-12));
        assert!(close(fit.coefficients[0], my - b * mx, 1e-12));
    }

    #[test]
    fn ols_rejects_rank_deficiency() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(
            ols_fit(&[1.0, 3.0, 2.0, 5.0, 4.0], &[x.clone(), x]),
            Err(StatsError::Singular)
        );
    }

    #[test]
    fn semi_partial_examples() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = vec![2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        // g is orthogonal to y after centering
        let g = CapabilityStack::new(vec!["g".into()], vec![vec![1.0, 1.0, -1.0, -1.0, 1.0, 1.0]]).unwrap();
        let fit = ols_fit(&y, &g.columns).unwrap();
        let sp = semi_partial(&x, &y, &g).unwrap();
        // brute-force two-stage
        assert!(close(sp.r, pearson_r(&x, &fit.residuals).unwrap(), 1e-14));
        if fit.r_squared < 1e-12 {
            assert!(close(sp.r, pearson_r(&x, &y).unwrap(), 1e-12));
        }

        let g = CapabilityStack::new(vec!["g".into()], vec![vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0]]).unwrap();
        let fitted = ols_fit(&y, &g.columns).unwrap().fitted;
        let sp = semi_partial(&fitted, &y, &g).unwrap();
        assert!(sp.r.abs() < 1e-10);
    }

    #[test]
    fn frontier_examples() {
        assert!(close(frontier_ceiling(1.0, 0.98).unwrap(), 0.198_997_487_4, 1e-9));
        assert!(close(frontier_ceiling(0.0, -0.36).unwrap(), 0.36, 1e-15));
        let want = 0.57 * (1.0f64 - 0.36 * 0.36).sqrt() + 0.36 * (1.0f64 - 0.57 * 0.57).sqrt();
        assert!(close(frontier_ceiling(0.57, -0.36).unwrap(), want, 1e-15));
        assert!(close(want, 0.828, 1e-3));
        assert!(frontier_ceiling(1.2, 0.5).is_err());
    }

    #[test]
    fn frontier_optimum_matches_closed_form() {
        // d/dv [v(1+c) + R√(1−v²)] = 0  ->  v* = (1+c)/√((1+c)² + R²)
        for &r in &[0.0, 0.1, 0.36, 0.7, 0.98, -0.5] {
            let c = (1.0f64 - r * r).sqrt();
            let v_star = (1.0 + c) / ((1.0 + c) * (1.0 + c) + r * r).sqrt();
            let (v, s) = frontier_optimum(r).unwrap();
            assert!(close(v, v_star, 1e-6), "R={r} v={v} want {v_star}");
            assert!(close(s, frontier_ceiling(v_star, r).unwrap(), 1e-6));
        }
        let (v, s) = frontier_optimum(0.0).unwrap();
        assert!(close(v, 1.0, 1e-12) && close(s, 1.0, 1e-12));
        assert_eq!(frontier_optimum(0.3).unwrap(), frontier_optimum(-0.3).unwrap());
    }

    #[test]
    fn frontier_optimum_matches_fine_grid() {
        let r: f64 = 0.98;
        let best = (0..=10_000)
            .map(|i| {
                let v = i as f64 / 10_000.0;
                v + frontier_ceiling(v, r).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let (v, s) = frontier_optimum(r).unwrap();
        assert!(v + s >= best - 1e-12);
        assert!(v + s - best < 1e-6);
    }

    #[test]
    fn composite_examples() {
        let one: BTreeMap<String, BTreeMap<String, f64>> = [(
            "e".to_string(),
            [("a", 1.0), ("b", 2.0), ("c", 6.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )]
        .into_iter()
        .collect();
        let z = composite_z(&one).unwrap();
        let vals: Vec<f64> = z.values().copied().collect();
        assert!(close(mean(&vals), 0.0, 1e-15));
        assert!(close(sample_variance(&vals), 1.0, 1e-12));

        // hand z: e1 = (1,2,3) -> (-1,0,1); e2 = (0,0,3) -> mean 1, sd √3
        let mut two = one.clone();
        two.insert(
            "e".into(),
            [("a", 1.0), ("b", 2.0), ("c", 3.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        );
        two.insert(
            "f".into(),
            [("a", 0.0), ("b", 0.0), ("c", 3.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        );
        let z = composite_z(&two).unwrap();
        let s3 = 3f64.sqrt();
        assert!(close(z["a"], (-1.0 - 1.0 / s3) / 2.0, 1e-12));
        assert!(close(z["b"], (0.0 - 1.0 / s3) / 2.0, 1e-12));
        assert!(close(z["c"], (1.0 + 2.0 / s3) / 2.0, 1e-12));
    }

    #[test]
    fn nested_f_examples() {
        let x1 = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let y = vec![2.0, 1.0, 4.0, 3.0, 7.0, 5.0, 6.0];
        let t = nested_f_test(&y, std::slice::from_ref(&x1), std::slice::from_ref(&x1)).unwrap();
        assert_eq!((t.delta_r2, t.f, t.p, t.df_num), (0.0, 0.0, 1.0, 0));

        let t = nested_f_test(&y, std::slice::from_ref(&x1), &[]).unwrap();
        assert_eq!(t.delta_r2, 0.0);

        // y exactly linear in the added predictor, base orthogonal to it
        let base = vec![1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0];
        let t = nested_f_test(&x1, &[base], std::slice::from_ref(&x1)).unwrap();
        assert!(close(t.r2_full, 1.0, 1e-12));
    }

    #[test]
    fn nested_f_matches_manual_formula() {
        let y = vec![3.1, 2.2, 5.4, 4.0, 6.3, 5.1, 8.2, 6.6];
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let b = vec![0.3, -0.2, 0.9, -0.4, 0.1, -0.7, 0.8, 0.0];
        let t = nested_f_test(&y, std::slice::from_ref(&a), std::slice::from_ref(&b)).unwrap();
        let r2b = ols_fit(&y, std::slice::from_ref(&a)).unwrap().r_squared;
        let r2f = ols_fit(&y, &[a, b]).unwrap().r_squared;
        let f = (r2f - r2b) / ((1.0 - r2f) / 5.0);
        assert!(close(t.f, f, 1e-10));
        assert_eq!((t.df_num, t.df_den), (1, 5));
    }

    #[test]
    fn quantile_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 10.0);
        assert!(close(quantile(&v, 0.9).unwrap(), 9.1, 1e-12));
        assert_eq!(quantile(&[4.2; 5], 0.37).unwrap(), 4.2);
        assert!(quantile(&[], 0.5).is_err());
    }

    #[test]
    fn hivemind_examples() {
        let mut bins = [0.0; 10];
        bins[9] = 100.0;
        assert!(close(hivemind_bin_mean(&bins).unwrap(), 0.05, 1e-12));
        assert!(close(hivemind_bin_mean(&[10.0; 10]).unwrap(), 0.5, 1e-12));
        let mut bins = [0.0; 10];
        bins[0] = 50.0;
        bins[9] = 50.0;
        assert!(close(hivemind_bin_mean(&bins).unwrap(), 0.5, 1e-12));
        assert!(hivemind_bin_mean(&[10.0; 9]).is_err());
        let mut bins = [10.0; 10];
        bins[0] = -1.0;
        bins[1] = 21.0;
        assert!(hivemind_bin_mean(&bins).is_err());
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.005), "**");
        assert_eq!(stars(0.03), "*");
        assert_eq!(stars(0.2), "");
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (4usize..12).prop_flat_map(|n| {
            (
                prop::collection::vec(-100.0f64..100.0, n),
                prop::collection::vec(-100.0f64..100.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn pearson_affine_invariance((x, y) in series(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            if let Ok(r) = pearson_r(&x, &y) {
                let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let xn: Vec<f64> = x.iter().map(|v| -v).collect();
                prop_assert!((pearson_r(&xt, &y).unwrap() - r).abs() < 1e-9);
                prop_assert!((pearson_r(&xn, &y).unwrap() + r).abs() < 1e-12);
            }
        }

        #[test]
        fn residuals_orthogonal_to_predictors((x, y) in series()) {
            let x2: Vec<f64> = x.iter().map(|v| (v * 0.37).sin()).collect();
            if let Ok(fit) = ols_fit(&y, &[x.clone(), x2.clone()]) {
                let scale = fit.residuals.iter().map(|e| e.abs()).fold(1.0, f64::max);
                for col in [&x, &x2] {
                    let dot: f64 = col.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
                    let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                    prop_assert!((dot / (norm * scale)).abs() < 1e-10);
                }
                prop_assert!((fit.residuals.iter().sum::<f64>() / scale).abs() < 1e-10);
            }
        }

        #[test]
        fn ceiling_endpoints_exact(r in -1.0f64..=1.0) {
            prop_assert_eq!(frontier_ceiling(0.0, r).unwrap(), r.abs());
            prop_assert_eq!(frontier_ceiling(1.0, r).unwrap(), (1.0 - r * r).sqrt());
        }

        #[test]
        fn quantile_monotone_in_q(v in prop::collection::vec(-1e3f64..1e3, 1..40), q1 in 0.0f64..=1.0, q2 in 0.0f64..=1.0) {
            let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(quantile(&v, lo).unwrap() <= quantile(&v, hi).unwrap());
        }

        #[test]
        fn semi_partial_respects_frontier((x, y) in series(), seed in prop::collection::vec(-5.0f64..5.0, 12)) {
            let g: Vec<f64> = y.iter().zip(&seed).map(|(a, b)| a * 0.5 + b * 10.0).collect();
            let stack = CapabilityStack::new(vec!["g".into()], vec![g]).unwrap();
            if let (Ok(v), Ok(sp)) = (pearson_r(&x, &y), semi_partial(&x, &y, &stack)) {
                let c = frontier_ceiling(v.abs(), sp.coupling).unwrap();
                prop_assert!(sp.r.abs() <= c + 1e-9);
            }
        }
    }
}
