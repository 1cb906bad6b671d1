//! Scalar proximal maps and the Huber function.

/// Soft threshold: `sign(x) (|x| - a)` when `|x| > a`, else 0.
pub fn shrink(x: f64, a: f64) -> f64 {
    if x > a {
        x - a
    } else if x < -a {
        x + a
    } else {
        0.0
    }
}

/// Hard threshold: `x` when `|x| > a`, else 0.
pub fn hard(x: f64, a: f64) -> f64 {
    if x.abs() > a {
        x
    } else {
        0.0
    }
}

/// Huber function: `x²/2` for `|x| <= δ`, `δ(|x| - δ/2)` beyond.
pub fn huber(x: f64, delta: f64) -> f64 {
    let ax = x.abs();
    if ax <= delta {
        0.5 * x * x
    } else {
        delta * (ax - 0.5 * delta)
    }
}

/// Derivative of [`huber`].
pub fn huber_grad(x: f64, delta: f64) -> f64 {
    x.clamp(-delta, delta)
}

/// `argmin_z ½(z - y)² + τ L_δ(z)`.
pub fn huber_prox(y: f64, tau: f64, delta: f64) -> f64 {
    if y.abs() <= delta * (1.0 + tau) {
        y / (1.0 + tau)
    } else {
        y - tau * delta * y.signum()
    }
}

pub fn shrink_all(x: &mut [f64], a: f64) {
    x.iter_mut().for_each(|v| *v = shrink(*v, a));
}

pub fn hard_all(x: &mut [f64], a: f64) {
    x.iter_mut().for_each(|v| *v = hard(*v, a));
}

pub fn huber_prox_all(x: &mut [f64], tau: f64, delta: f64) {
    x.iter_mut().for_each(|v| *v = huber_prox(*v, tau, delta));
}
