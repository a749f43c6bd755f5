//! Quadrature, finite-difference stencils and periodic interpolation shared by
//! the model, floquet and asymptotics modules.

/// Composite Simpson rule on `[a, b]` with `n` subintervals (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n.max(2) + n % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Simpson weights for `n + 1` uniformly spaced samples, `n` even.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2 && n % 2 == 0, "Simpson needs an even interval count");
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre on `panels` equal panels of `[a, b]`.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>), panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let part: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum();
        sum += 0.5 * h * part;
    }
    sum
}

/// Trapezoidal rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values[1..n - 1].iter().sum::<f64>() + 0.5 * (values[0] + values[n - 1])),
    }
}

/// First derivative by 4th-order central differences.
pub fn diff1<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Second derivative by 4th-order central differences.
pub fn diff2<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (-f(x - 2.0 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2.0 * h))
        / (12.0 * h * h)
}

/// Third derivative by 4th-order central differences.
pub fn diff3<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (f(x - 3.0 * h) - 8.0 * f(x - 2.0 * h) + 13.0 * f(x - h) - 13.0 * f(x + h)
        + 8.0 * f(x + 2.0 * h)
        - f(x + 3.0 * h))
        / (8.0 * h * h * h)
}

/// Cubic (Catmull-Rom) interpolation of uniformly spaced samples of a
/// `period`-periodic function. `samples[k]` is the value at `k * period / len`.
#[derive(Debug, Clone)]
pub struct PeriodicSamples {
    period: f64,
    samples: Vec<f64>,
}

impl PeriodicSamples {
    pub fn new(period: f64, samples: Vec<f64>) -> Self {
        assert!(period > 0.0 && !samples.is_empty());
        Self { period, samples }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.samples.len();
        if n == 1 {
            return self.samples[0];
        }
        let h = self.period / n as f64;
        let s = t.rem_euclid(self.period) / h;
        let i = (s.floor() as usize).min(n - 1);
        let u = s - i as f64;
        let at = |k: isize| self.samples[k.rem_euclid(n as isize) as usize];
        let (p0, p1, p2, p3) = (at(i as isize - 1), at(i as isize), at(i as isize + 1), at(i as isize + 2));
        let m1 = 0.5 * (p2 - p0);
        let m2 = 0.5 * (p3 - p1);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * p1
            + (u3 - 2.0 * u2 + u) * m1
            + (-2.0 * u3 + 3.0 * u2) * p2
            + (u3 - u2) * m2
    }
}

/// Classical RK4 for a scalar ODE.
pub fn rk4_scalar<F: Fn(f64, f64) -> f64>(f: &F, t0: f64, y0: f64, t1: f64, steps: usize) -> f64 {
    let h = (t1 - t0) / steps as f64;
    let mut y = y0;
    let mut t = t0;
    for _ in 0..steps {
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 2.0, 4);
        assert!((v - (3.75 - 3.0 + 3.0)).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_rules() {
        let rule = gauss_legendre_rule(20);
        assert!((rule.1.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // Exact for degree 39.
        let v = gauss_legendre(&|x: f64| x.powi(38), -1.0, 1.0, &rule, 1);
        assert!((v - 2.0 / 39.0).abs() < 1e-14);
        let v = gauss_legendre(&|x: f64| x.exp(), 0.0, 3.0, &rule, 3);
        assert!((v - (3f64.exp() - 1.0)).abs() < 1e-13);
        let (n, w) = gauss_legendre_rule(3);
        assert!((n[2] - 0.6f64.sqrt()).abs() < 1e-15 && (w[1] - 8.0 / 9.0).abs() < 1e-15);
        let (n, w) = gauss_legendre_rule(1);
        assert!(n[0].abs() < 1e-15 && (w[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn stencils_on_polynomials() {
        let f = |x: f64| x.powi(4) - x.powi(3);
        assert!((diff1(&f, 0.7, 1e-2) - (4.0 * 0.343 - 3.0 * 0.49)).abs() < 1e-9);
        assert!((diff2(&f, 0.7, 1e-2) - (12.0 * 0.49 - 6.0 * 0.7)).abs() < 1e-8);
        assert!((diff3(&f, 0.7, 1e-2) - (24.0 * 0.7 - 6.0)).abs() < 1e-5);
    }

    #[test]
    fn periodic_samples_interpolate_smoothly() {
        let n = 256;
        let s = PeriodicSamples::new(1.0, (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).sin()).collect());
        for &t in &[0.013, 0.5, 0.999, 1.37, -0.2] {
            assert!((s.eval(t) - (2.0 * PI * t).sin()).abs() < 1e-5);
        }
    }

    #[test]
    fn rk4_exponential() {
        let y = rk4_scalar(&|_, y| y, 0.0, 1.0, 1.0, 100);
        assert!((y - 1f64.exp()).abs() < 1e-9);
    }
}
