//! Numerically stable weighted counting in log space.
//!
//! Every pressure sum in this crate has the form `log Σ exp(a_i)`. The helpers
//! here shift by the maximum before exponentiating and always accumulate in
//! the order the terms are supplied, so results are reproducible bit for bit.

/// `log Σ exp(a_i)` with a max shift. Returns `-inf` for an empty input.
pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut acc = 0.0;
    for &a in terms {
        acc += (a - max).exp();
    }
    max + acc.ln()
}

/// Same as [`log_sum_exp`] but over an iterator; collects once.
pub fn log_sum_exp_iter<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let v: Vec<f64> = terms.into_iter().collect();
    log_sum_exp(&v)
}

/// `ln(1/eps)`, the exponent base used by every weighted sum.
#[inline]
pub fn log_inv(eps: f64) -> f64 {
    -eps.ln()
}
