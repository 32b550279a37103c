//! Small special-function helpers shared by the grid, quermassintegral and
//! comparison-function modules.

use std::f64::consts::PI;

/// Binomial coefficient `C(n, k)` as a float; zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Factorial as a float.
pub fn factorial(m: usize) -> f64 {
    (1..=m).fold(1.0, |acc, i| acc * i as f64)
}

/// Volume of the unit ball in `R^m`.
///
/// Uses `omega_m = 2 pi / m * omega_{m-2}`, which is the closed form
/// `pi^{m/2} / Gamma(m/2 + 1)` unrolled.
pub fn unit_ball_volume(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / m as f64 * unit_ball_volume(m - 2),
    }
}

/// Area of the unit sphere `S^n`, equal to `(n + 1) omega_{n+1}`.
pub fn unit_sphere_area(n: usize) -> f64 {
    (n + 1) as f64 * unit_ball_volume(n + 1)
}

/// `int_0^x sin^m(r) dr`.
///
/// Closed antiderivatives from the reduction formula for moderate `x`; a
/// Gauss-Legendre rule on `[0, x]` for small `x`, where the reduction formula
/// loses relative accuracy to cancellation.
pub fn sin_power_integral(m: usize, x: f64) -> f64 {
    if x.abs() < 0.3 {
        return gauss_legendre_integral(|r| r.sin().powi(m as i32), 0.0, x, 16);
    }
    sin_power_reduction(m, x)
}

fn sin_power_reduction(m: usize, x: f64) -> f64 {
    match m {
        0 => x,
        1 => 1.0 - x.cos(),
        _ => {
            let mf = m as f64;
            -x.sin().powi(m as i32 - 1) * x.cos() / mf
                + (mf - 1.0) / mf * sin_power_reduction(m - 2, x)
        }
    }
}

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn gauss_legendre_integral(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let (x, w) = gauss_legendre(m);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    x.iter()
        .zip(&w)
        .map(|(xi, wi)| wi * f(mid + half * xi))
        .sum::<f64>()
        * half
}

/// Legendre polynomial `P_l(x)` by the three-term recurrence.
pub fn legendre(l: usize, x: f64) -> f64 {
    legendre_with_derivative(l, x).0
}

fn legendre_with_derivative(l: usize, x: f64) -> (f64, f64) {
    if l == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=l {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let lf = l as f64;
    let d = if (1.0 - x * x).abs() < 1e-300 {
        0.5 * lf * (lf + 1.0) * x.powi(l as i32 + 1)
    } else {
        lf * (x * p1 - p0) / (x * x - 1.0)
    };
    (p1, d)
}

/// Associated Legendre function `P_l^m(x)` without the Condon-Shortley phase.
pub fn associated_legendre(l: usize, m: usize, x: f64) -> f64 {
    if m > l {
        return 0.0;
    }
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= (2 * i - 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pl = 0.0;
    for ll in (m + 2)..=l {
        pl = ((2 * ll - 1) as f64 * x * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = pl;
    }
    pl
}
