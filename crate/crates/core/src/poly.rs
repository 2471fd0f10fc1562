//! Real roots of univariate polynomials via companion-matrix eigenvalues.

use nalgebra::DMatrix;

use crate::scalar::Real;

/// Evaluates `c[0] + c[1] x + ... + c[n] x^n` and its derivative.
pub fn eval_with_derivative<T: Real>(coeffs: &[T], x: T) -> (T, T) {
    let mut p = T::zero();
    let mut dp = T::zero();
    for c in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + *c;
    }
    (p, dp)
}

/// Real roots of the polynomial with ascending coefficients `coeffs`.
///
/// Eigenvalues whose imaginary part is below `imag_tol` (relative to `1 + |root|`) are
/// accepted and then polished with a few Newton steps on the original polynomial.
pub fn real_roots<T: Real>(coeffs: &[T], imag_tol: T) -> Vec<T> {
    let mut n = coeffs.len();
    let scale = coeffs.iter().fold(T::zero(), |m, c| m.max(c.abs()));
    if scale == T::zero() {
        return Vec::new();
    }
    while n > 1 && coeffs[n - 1].abs() <= T::lit(1e-14) * scale {
        n -= 1;
    }
    let deg = n - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let mut comp = DMatrix::<T>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = T::one();
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -coeffs[i] / lead;
    }
    let eig = comp.complex_eigenvalues();
    let mut roots: Vec<T> = eig
        .iter()
        .filter(|z| z.im.abs() <= imag_tol * (T::one() + z.re.abs()))
        .map(|z| polish(&coeffs[..=deg], z.re))
        .collect();
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    roots
}

fn polish<T: Real>(coeffs: &[T], mut x: T) -> T {
    let (mut fx, _) = eval_with_derivative(coeffs, x);
    for _ in 0..8 {
        let (f, df) = eval_with_derivative(coeffs, x);
        if df == T::zero() {
            break;
        }
        let next = x - f / df;
        let (fn_, _) = eval_with_derivative(coeffs, next);
        if !(fn_.abs() < fx.abs()) {
            break;
        }
        x = next;
        fx = fn_;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_roots() {
        // (x - 1)(x + 2) = x^2 + x - 2
        let r = real_roots(&[-2.0f64, 1.0, 1.0], 1e-8);
        assert_eq!(r.len(), 2);
        assert!((r[0] + 2.0).abs() < 1e-14);
        assert!((r[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn complex_roots_dropped() {
        assert!(real_roots(&[1.0, 0.0, 1.0], 1e-8).is_empty());
    }

    #[test]
    fn degree_ten_roots() {
        let expected: Vec<f64> = (1..=10).map(|i| i as f64 * 0.3 - 1.6).collect();
        let mut c = vec![1.0];
        for r in &expected {
            let mut next = vec![0.0; c.len() + 1];
            for (i, ci) in c.iter().enumerate() {
                next[i] -= r * ci;
                next[i + 1] += ci;
            }
            c = next;
        }
        let roots = real_roots(&c, 1e-8);
        assert_eq!(roots.len(), 10);
        for (a, b) in roots.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn leading_zero_coefficients_trimmed() {
        let r = real_roots(&[-3.0, 1.0, 0.0, 0.0], 1e-8);
        assert_eq!(r, vec![3.0]);
    }
}
