//! Kolmogorov–Smirnov tests with asymptotic p-values.

/// Smallest sample size for which asymptotic p-values are reported.
pub const MIN_KS_SAMPLES: usize = 1000;

/// Significance level used by the suites.
pub const KS_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Effective sample size `n` or `nm / (n + m)`.
    pub effective_n: f64,
}

impl KsResult {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value > alpha
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KsError {
    #[error("KS needs at least {MIN_KS_SAMPLES} samples per side, got {0}")]
    TooFewSamples(usize),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

fn sorted(xs: &[f64]) -> Result<Vec<f64>, KsError> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(KsError::NonFinite);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value with Stephens' small-sample correction.
fn p_value(d: f64, ne: f64) -> f64 {
    let s = ne.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample test of equal distributions.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult, KsError> {
    let small = a.len().min(b.len());
    if small < MIN_KS_SAMPLES {
        return Err(KsError::TooFewSamples(small));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    Ok(KsResult { statistic: d, p_value: p_value(d, ne), effective_n: ne })
}

/// One-sample test against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, KsError> {
    if a.len() < MIN_KS_SAMPLES {
        return Err(KsError::TooFewSamples(a.len()));
    }
    let a = sorted(a)?;
    let n = a.len() as f64;
    let d = a.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    });
    Ok(KsResult { statistic: d, p_value: p_value(d, n), effective_n: n })
}
