//! Probability densities and the special functions their likelihoods need.

/// Lanczos approximation of ln Γ(x), x > 0.
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection formula
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Digamma ψ(x) via upward recurrence into the asymptotic series.
pub fn digamma(mut x: f64) -> f64 {
    let mut result = 0.0;
    while x < 12.0 {
        result -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    result + x.ln() - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Trigamma ψ'(x), same scheme.
pub fn trigamma(mut x: f64) -> f64 {
    let mut result = 0.0;
    while x < 12.0 {
        result += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    result
        + inv
            * (1.0
                + 0.5 * inv
                + inv2
                    * (1.0 / 6.0
                        - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0))))
}

pub fn lognormal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    if x <= 0.0 || sigma <= 0.0 {
        return 0.0;
    }
    let z = (x.ln() - mu) / sigma;
    (-0.5 * z * z).exp() / (x * sigma * (2.0 * std::f64::consts::PI).sqrt())
}

pub fn gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 || shape <= 0.0 || scale <= 0.0 {
        return 0.0;
    }
    ((shape - 1.0) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()).exp()
}

pub fn weibull_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 || shape <= 0.0 || scale <= 0.0 {
        return 0.0;
    }
    let t = x / scale;
    (shape / scale) * t.powf(shape - 1.0) * (-t.powf(shape)).exp()
}

/// Log-logistic with scale alpha and shape beta.
pub fn loglogistic_pdf(x: f64, alpha: f64, beta: f64) -> f64 {
    if x <= 0.0 || alpha <= 0.0 || beta <= 0.0 {
        return 0.0;
    }
    let t = (x / alpha).powf(beta);
    (beta / alpha) * (x / alpha).powf(beta - 1.0) / ((1.0 + t) * (1.0 + t))
}

/// Composite midpoint quadrature with n panels.
pub fn midpoint_integral(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|j| f(a + (j as f64 + 0.5) * h)).sum::<f64>() * h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_factorials() {
        // Γ(5) = 24, Γ(1) = 1, Γ(0.5) = √π
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-10);
        assert!(ln_gamma(1.0).abs() < 1e-10);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-10);
    }

    #[test]
    fn digamma_recurrence_holds() {
        // ψ(x+1) = ψ(x) + 1/x
        for &x in &[0.3, 1.7, 4.2] {
            assert!((digamma(x + 1.0) - digamma(x) - 1.0 / x).abs() < 1e-10);
        }
        // ψ(1) = −γ (Euler–Mascheroni)
        assert!((digamma(1.0) + 0.5772156649015329).abs() < 1e-10);
    }

    #[test]
    fn trigamma_known_value() {
        // ψ'(1) = π²/6
        assert!((trigamma(1.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-10);
    }

    #[test]
    fn pdfs_integrate_to_one() {
        let total = midpoint_integral(|x| lognormal_pdf(x, 1.0, 0.5), 1e-6, 60.0, 20_000);
        assert!((total - 1.0).abs() < 1e-4, "lognormal {total}");
        let total = midpoint_integral(|x| gamma_pdf(x, 2.5, 1.5), 1e-6, 80.0, 20_000);
        assert!((total - 1.0).abs() < 1e-4, "gamma {total}");
        let total = midpoint_integral(|x| weibull_pdf(x, 1.8, 3.0), 1e-6, 60.0, 20_000);
        assert!((total - 1.0).abs() < 1e-4, "weibull {total}");
        let total = midpoint_integral(|x| loglogistic_pdf(x, 3.0, 4.0), 1e-6, 400.0, 200_000);
        assert!((total - 1.0).abs() < 1e-3, "loglogistic {total}");
    }
}
