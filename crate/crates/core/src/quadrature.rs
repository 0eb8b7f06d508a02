//! Gauss-Legendre nodes by Newton iteration on the Legendre recurrence.

/// Nodes and weights on `[-1, 1]`, exact for polynomials of degree `2m - 1`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..(m + 1) / 2 {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, t);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -t;
        x[m - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

fn legendre(m: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if m == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// `int_a^b f` with an `m`-point rule on each of `pieces` equal subintervals.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize, pieces: usize) -> f64 {
    let (x, w) = gauss_legendre(m);
    let step = (b - a) / pieces as f64;
    let mut total = 0.0;
    for k in 0..pieces {
        let lo = a + k as f64 * step;
        for (xi, wi) in x.iter().zip(&w) {
            total += 0.5 * step * wi * f(lo + 0.5 * step * (xi + 1.0));
        }
    }
    total
}
