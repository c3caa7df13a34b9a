//! Small descriptive statistics and the paired sign test.

use statrs::distribution::{Binomial, DiscreteCDF};

/// Mean and population (divide-by-n) variance. Empty input gives `(0, 0)`.
pub fn mean_and_population_variance(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Standard error of the mean using the sample (n - 1) standard deviation.
pub fn sem(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let (mean, _) = mean_and_population_variance(xs);
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SignTest {
    /// Pairs with `b > a`.
    pub n_greater: u64,
    /// Pairs with `b < a`.
    pub n_less: u64,
    pub n_ties: u64,
    /// Two-sided exact binomial p-value over the untied pairs.
    pub p_value: f64,
}

/// Paired two-sided sign test of `b` against `a`. Exact ties are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let mut n_greater = 0;
    let mut n_less = 0;
    let mut n_ties = 0;
    for (x, y) in a.iter().zip(b) {
        match y.partial_cmp(x) {
            Some(std::cmp::Ordering::Greater) => n_greater += 1,
            Some(std::cmp::Ordering::Less) => n_less += 1,
            _ => n_ties += 1,
        }
    }
    let n = n_greater + n_less;
    let p_value = if n == 0 {
        1.0
    } else {
        let k = n_greater.min(n_less);
        let binom = Binomial::new(0.5, n).expect("valid binomial");
        (2.0 * binom.cdf(k)).min(1.0)
    };
    SignTest {
        n_greater,
        n_less,
        n_ties,
        p_value,
    }
}
