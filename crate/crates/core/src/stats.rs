//! Descriptive statistics and the two reference distributions used for
//! p-values (Student-t and Fisher F), both evaluated through the regularized
//! incomplete beta function.

use statrs::function::beta::beta_reg;

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard deviation with denominator N.
pub fn population_sd(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / values.len() as f64).sqrt()
}

/// Standard deviation with denominator N - 1.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Median; even counts average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolation quantile (the "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        // midpoint form keeps the even-count median exact: (a + b) / 2
        if frac == 0.5 {
            (sorted[lo] + sorted[hi]) / 2.0
        } else {
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        }
    }
}

/// Two-sided p-value of a Student-t statistic with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Upper-tail probability P(F > f) for an F(d1, d2) variate.
pub fn f_upper_p(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() || d1 <= 0.0 || d2 <= 0.0 {
        return f64::NAN;
    }
    if f.is_infinite() {
        return 0.0;
    }
    if f <= 0.0 {
        return 1.0;
    }
    let x = d2 / (d2 + d1 * f);
    beta_reg(d2 / 2.0, d1 / 2.0, x).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_sd_of_one_two_three() {
        let sd = population_sd(&[1.0, 2.0, 3.0]);
        assert!((sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((sd - 0.8165).abs() < 1e-4);
    }

    #[test]
    fn constant_has_zero_sd() {
        assert_eq!(population_sd(&[4.2; 7]), 0.0);
    }

    #[test]
    fn even_median_is_mean_of_middle_pair() {
        assert_eq!(median(&[0.4, 0.1, 0.3, 0.2]), 0.25);
        assert_eq!(median(&[2.0, 10.0, 6.0]), 6.0);
    }

    #[test]
    fn t_p_value_at_zero_is_one() {
        assert!((student_t_two_sided_p(0.0, 5.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn t_p_value_one_df_is_cauchy() {
        // df = 1: P(|T| > t) = 1 - 2 atan(t) / pi
        for t in [0.3, 1.0, 2.5, 10.0] {
            let expected = 1.0 - 2.0 * f64::atan(t) / std::f64::consts::PI;
            assert!((student_t_two_sided_p(t, 1.0) - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn f_with_one_numerator_df_matches_squared_t() {
        for (t, df) in [(1.3, 4.0), (2.2, 9.0), (0.4, 17.0)] {
            let p_t = student_t_two_sided_p(t, df);
            let p_f = f_upper_p(t * t, 1.0, df);
            assert!((p_t - p_f).abs() < 1e-13);
        }
    }
}
