//! Small ensemble statistics helpers.

/// A mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Mean with a delete-one jackknife standard error.
///
/// For the plain mean the jackknife SE coincides with `s / √n`; it is
/// computed here from the leave-one-out means so the same routine extends to
/// other statistics. Fewer than two samples give an infinite SE.
pub fn jackknife_mean(values: &[f64]) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            se: f64::INFINITY,
        };
    }
    let total: f64 = values.iter().sum();
    let mean = total / n as f64;
    if n < 2 {
        return Estimate {
            mean,
            se: f64::INFINITY,
        };
    }
    let nm1 = (n - 1) as f64;
    let loo_mean = values.iter().map(|x| (total - x) / nm1).sum::<f64>() / n as f64;
    let var = values
        .iter()
        .map(|x| {
            let d = (total - x) / nm1 - loo_mean;
            d * d
        })
        .sum::<f64>()
        * nm1
        / n as f64;
    Estimate {
        mean,
        se: libm::sqrt(var),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackknife_matches_textbook_se() {
        let xs = [1.0, 2.0, 4.0, 7.0, 11.0];
        let e = jackknife_mean(&xs);
        let mean = 5.0;
        let s2 = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!((e.mean - mean).abs() < 1e-15);
        assert!((e.se - libm::sqrt(s2 / 5.0)).abs() < 1e-14);
    }

    #[test]
    fn degenerate_sizes() {
        assert!(jackknife_mean(&[]).mean.is_nan());
        assert_eq!(jackknife_mean(&[3.0]).se, f64::INFINITY);
        assert_eq!(jackknife_mean(&[2.0, 2.0]).se, 0.0);
    }
}
