//! Yeo-Johnson power transform.

const EPS: f64 = 1e-10;

pub fn yj_forward(x: f64, lam: f64) -> f64 {
    if x >= 0.0 {
        if lam.abs() < EPS {
            x.ln_1p()
        } else {
            (lam * x.ln_1p()).exp_m1() / lam
        }
    } else {
        let mu = 2.0 - lam;
        if mu.abs() < EPS {
            -(-x).ln_1p()
        } else {
            -(mu * (-x).ln_1p()).exp_m1() / mu
        }
    }
}

/// Inverse of [`yj_forward`]. Values outside the transform's range (possible
/// after linear combination in transformed space) are clamped to its edge.
pub fn yj_inverse(y: f64, lam: f64) -> f64 {
    if y >= 0.0 {
        if lam.abs() < EPS {
            y.exp_m1()
        } else {
            let t = (lam * y).max(-1.0 + 1e-15);
            (t.ln_1p() / lam).exp_m1()
        }
    } else {
        let mu = 2.0 - lam;
        if mu.abs() < EPS {
            -(-y).exp_m1()
        } else {
            let t = (-mu * y).max(-1.0 + 1e-15);
            -(t.ln_1p() / mu).exp_m1()
        }
    }
}

/// Profile log-likelihood of `lam` under a Gaussian model of the
/// transformed values.
pub fn yj_log_likelihood(xs: &[f64], lam: f64) -> f64 {
    let n = xs.len() as f64;
    let ys: Vec<f64> = xs.iter().map(|x| yj_forward(*x, lam)).collect();
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let jac: f64 = xs.iter().map(|x| x.signum() * x.abs().ln_1p()).sum();
    -0.5 * n * var.max(1e-300).ln() + (lam - 1.0) * jac
}

/// Maximum-likelihood exponent by golden-section search on `[lo, hi]`.
/// Near-constant data keeps `λ = 1`.
pub fn yj_fit(xs: &[f64], lo: f64, hi: f64, tol: f64) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var < 1e-12 {
        return 1.0;
    }
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = yj_log_likelihood(xs, c);
    let mut fd = yj_log_likelihood(xs, d);
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = yj_log_likelihood(xs, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = yj_log_likelihood(xs, d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert_eq!(yj_forward(3.7, 1.0), 3.7);
        assert_eq!(yj_forward(0.0, -2.3), 0.0);
        assert!((yj_forward(1.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((yj_forward(-1.0, 2.0) + 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn fit_recovers_log_shape() {
        // ln(1 + x) of these values is an evenly spread sample.
        let xs: Vec<f64> = (0..200)
            .map(|i| {
                let z = -2.0 + 4.0 * (i as f64 + 0.5) / 200.0;
                (z * 0.8 + 1.0).exp_m1().max(0.0)
            })
            .collect();
        let lam = yj_fit(&xs, -5.0, 5.0, 1e-4);
        assert!(lam < 0.6, "{lam}");
        let flat = vec![2.0; 10];
        assert_eq!(yj_fit(&flat, -5.0, 5.0, 1e-4), 1.0);
    }

    proptest! {
        #[test]
        fn round_trip(x in -10.0f64..10.0, lam in -5.0f64..5.0) {
            let back = yj_inverse(yj_forward(x, lam), lam);
            prop_assert!((back - x).abs() < 1e-9 * (1.0 + x.abs()));
        }

        #[test]
        fn monotone(x in -10.0f64..10.0, dx in 1e-3f64..1.0, lam in -5.0f64..5.0) {
            prop_assert!(yj_forward(x + dx, lam) > yj_forward(x, lam));
        }
    }
}
