//! Small numerical helpers shared by the samplers and summaries.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Zero for fewer than two values.
pub fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" rule). `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

pub fn chi_squared_quantile(p: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").inverse_cdf(p)
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw from an inverse-gamma distribution with the given shape and rate,
/// i.e. `1 / Gamma(shape, rate)`.
pub fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    rate / g
}

/// Draw from N(P^{-1} b, P^{-1}) given a precision matrix `P` and the
/// linear term `b`. Returns `None` if `P` is not positive definite.
pub fn mvn_from_precision<R: Rng + ?Sized>(
    rng: &mut R,
    precision: &DMatrix<f64>,
    linear: &DVector<f64>,
) -> Option<DVector<f64>> {
    let chol = precision.clone().cholesky()?;
    let mean = chol.solve(linear);
    let z = DVector::from_fn(linear.len(), |_, _| std_normal(rng));
    let dev = chol.l().transpose().solve_upper_triangular(&z)?;
    Some(mean + dev)
}

/// Residual standard deviation of an ordinary least-squares fit of `y` on
/// `design` (rows of regressors; an intercept is added). `None` when the
/// design has at least as many columns as rows or is rank deficient.
pub fn ols_residual_sd(design: &[Vec<f64>], y: &[f64]) -> Option<f64> {
    let n = y.len();
    let p = design.first().map_or(0, Vec::len) + 1;
    if p >= n {
        return None;
    }
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { design[i][j - 1] });
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let tol = 1e-10 * svd.singular_values.max().max(1.0);
    if svd.rank(tol) < p {
        return None;
    }
    let beta = svd.solve(&yv, tol).ok()?;
    let resid = yv - x * beta;
    Some((resid.norm_squared() / (n - p) as f64).sqrt())
}
