//! Modified Bessel functions of the first kind, orders 0 and 1.

/// Switch point between the power series and the large-argument expansion.
const ASYMPTOTIC_FROM: f64 = 30.0;

fn series(x: f64, order: u32) -> f64 {
    // sum_k (x/2)^(2k+n) / (k! (k+n)!)
    let h = x / 2.0;
    let mut term = if order == 0 { 1.0 } else { h };
    let mut sum = term;
    let q = h * h;
    for k in 1..500 {
        term *= q / (k as f64 * (k + order) as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `e^-x I_n(x) sqrt(2 pi x)` from the Hankel expansion.
fn asymptotic_scaled(x: f64, order: u32) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..30 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 {
            break;
        }
    }
    sum
}

fn scaled(x: f64, order: u32) -> f64 {
    let ax = x.abs();
    let v = if ax < ASYMPTOTIC_FROM {
        series(ax, order) * (-ax).exp()
    } else {
        asymptotic_scaled(ax, order) / (2.0 * std::f64::consts::PI * ax).sqrt()
    };
    if order == 1 && x < 0.0 {
        -v
    } else {
        v
    }
}

/// `I0(x)`.
pub fn i0(x: f64) -> f64 {
    series(x.abs(), 0)
}

/// `e^-|x| I0(x)`.
pub fn i0e(x: f64) -> f64 {
    scaled(x, 0)
}

/// `e^-|x| I1(x)`.
pub fn i1e(x: f64) -> f64 {
    scaled(x, 1)
}
