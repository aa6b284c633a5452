//! Adaptive Gauss–Legendre quadrature.

use std::sync::OnceLock;

const ORDER: usize = 20;
const MAX_DEPTH: u32 = 40;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1],
/// found by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = rule();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes.iter().zip(weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = panel(f, a, m);
    let right = panel(f, m, b);
    let both = left + right;
    if depth >= MAX_DEPTH || (both - whole).abs() <= tol {
        return both;
    }
    adapt(f, a, m, left, 0.5 * tol, depth + 1) + adapt(f, m, b, right, 0.5 * tol, depth + 1)
}

/// Integrates `f` over `[a, b]` to roughly absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let whole = panel(&f, a, b);
    adapt(&f, a, b, whole, tol, 0)
}

/// Integrates over `[a, b]` split at the interior `breaks`, so that kinks in
/// the integrand sit on panel boundaries.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut points: Vec<f64> = breaks.iter().copied().filter(|x| *x > a && *x < b).collect();
    points.sort_by(f64::total_cmp);
    let mut lo = a;
    let mut total = 0.0;
    let pieces = points.len() + 1;
    for hi in points.into_iter().chain(std::iter::once(b)) {
        total += integrate(&f, lo, hi, tol / pieces as f64);
        lo = hi;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn weights_sum_to_two() {
        let (x, w) = gauss_legendre(20);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn exact_for_polynomials() {
        // degree 2n-1 = 39 exactness, check a degree-10 polynomial
        let v = panel(&|x: f64| x.powi(10), -1.0, 1.0);
        assert_abs_diff_eq!(v, 2.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn smooth_and_kinked() {
        let v = integrate(|x: f64| x.exp(), 0.0, 3.0, 1e-12);
        assert_abs_diff_eq!(v, 3.0f64.exp() - 1.0, epsilon = 1e-11);
        let v = integrate_with_breaks(|x: f64| x.abs(), -1.0, 2.0, &[0.0], 1e-12);
        assert_abs_diff_eq!(v, 2.5, epsilon = 1e-13);
    }
}
