//! Gauss–Legendre rules and Legendre polynomials.

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|xi| mid + half * xi).collect(),
        w.iter().map(|wi| half * wi).collect(),
    )
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-300 {
        // Endpoint limit P_n'(±1) = (±1)^{n+1} n(n+1)/2.
        let s = if x > 0.0 || (n as usize) % 2 == 1 {
            1.0
        } else {
            -1.0
        };
        s * n * (n + 1.0) / 2.0
    } else {
        n * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, dp)
}

/// All `P_0(x) … P_{n-1}(x)`.
pub fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    out.push(1.0);
    if n == 1 {
        return out;
    }
    out.push(x);
    for k in 2..n {
        let kf = k as f64;
        let v = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| wi * xi.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn endpoint_derivative() {
        for n in 1..8 {
            let (_, d1) = legendre_with_derivative(n, 1.0);
            let (_, dm1) = legendre_with_derivative(n, -1.0);
            let e = (n * (n + 1)) as f64 / 2.0;
            assert!((d1 - e).abs() < 1e-12);
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            assert!((dm1 - sign * e).abs() < 1e-12);
        }
    }
}
