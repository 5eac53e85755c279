//! Macroscopic outputs: the smooth weighted flux and the windowed box count.

use std::collections::VecDeque;

use crate::geometry::Vec2;
use crate::params::{FluxParams, PedParams};
use crate::PedError;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(z)` for `z > 0`.
pub fn exp_integral_e1(z: f64) -> Result<f64, PedError> {
    if !(z > 0.0) {
        return Err(PedError::InvalidInput(format!("E1 needs z > 0, got {z}")));
    }
    if z.is_infinite() {
        return Ok(0.0);
    }
    Ok(if z <= 1.0 { e1_series(z) } else { e1_continued_fraction(z) })
}

fn e1_series(z: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= -z / k as f64;
        let add = -term / k as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    -EULER_GAMMA - z.ln() + sum
}

// Modified Lentz evaluation.
fn e1_continued_fraction(z: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

fn wall_weight(x: f64, r_sq: f64, d: f64, eta: f64) -> f64 {
    let d_sq = d * d;
    if r_sq >= d_sq {
        return 0.0;
    }
    let z = d_sq / (d_sq - r_sq);
    eta * x.abs() * exp_integral_e1(z).unwrap_or(0.0)
}

/// Position weight of the flux measure; odd in `x`.
pub fn position_weight(pos: Vec2, flux: &FluxParams) -> f64 {
    let dy_sq = (pos.y - flux.y_c_phi).powi(2);
    let r_plus_sq = (pos.x + flux.x_c_phi).powi(2) + dy_sq;
    let r_minus_sq = (pos.x - flux.x_c_phi).powi(2) + dy_sq;
    wall_weight(pos.x, r_minus_sq, flux.d, flux.eta) - wall_weight(pos.x, r_plus_sq, flux.d, flux.eta)
}

/// Weighted flux along the corridor.
pub fn flux_phi(pos: &[Vec2], vel: &[Vec2], flux: &FluxParams) -> f64 {
    pos.iter()
        .zip(vel)
        .map(|(p, v)| position_weight(*p, flux) * v.y)
        .sum()
}

/// Pedestrians in the counting boxes on either side of the obstacle.
pub fn box_counts(pos: &[Vec2], mu: f64, flux: &FluxParams, params: &PedParams) -> (usize, usize) {
    let yc = flux.count_center(params);
    let mut plus = 0;
    let mut minus = 0;
    for p in pos {
        if (p.y - yc).abs() > flux.y_len_count {
            continue;
        }
        if p.x > mu {
            plus += 1;
        } else if p.x < mu {
            minus += 1;
        }
    }
    (plus, minus)
}

/// Trailing average of the count difference.
#[derive(Debug, Clone)]
pub struct CountAverage {
    samples: VecDeque<i64>,
    capacity: usize,
    sum: i64,
}

impl CountAverage {
    pub fn new(window: f64, dt: f64) -> Self {
        let capacity = ((window / dt).round() as usize).max(1);
        Self {
            samples: VecDeque::with_capacity(capacity),
            capacity,
            sum: 0,
        }
    }

    pub fn push(&mut self, plus: usize, minus: usize) {
        let diff = plus as i64 - minus as i64;
        if self.samples.len() == self.capacity {
            self.sum -= self.samples.pop_front().unwrap_or(0);
        }
        self.samples.push_back(diff);
        self.sum += diff;
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.sum = 0;
    }

    /// Average over the samples seen so far, at most one window.
    pub fn value(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.sum as f64 / self.samples.len() as f64
        }
    }
}
