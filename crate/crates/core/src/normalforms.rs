//! Analytic test systems with known equilibrium branches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynsys::{ControlledSystem, Linearization};
use crate::error::{Error, Result};
use crate::linalg::{mat_rank, Matrix};

/// Gaussian output noise with its own generator.
#[derive(Debug, Clone)]
pub struct OutputNoise {
    pub amplitude: f64,
    rng: ChaCha8Rng,
}

impl OutputNoise {
    pub fn new(amplitude: f64, seed: u64) -> Self {
        Self {
            amplitude,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn silent() -> Self {
        Self::new(0.0, 0)
    }

    fn sample(&mut self) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.amplitude * z
    }
}

/// `x' = mu - x^2 + u`, `y = x + noise`.
#[derive(Debug, Clone)]
pub struct FoldSystem {
    pub noise: OutputNoise,
}

impl FoldSystem {
    pub fn new() -> Self {
        Self {
            noise: OutputNoise::silent(),
        }
    }

    pub fn with_noise(amplitude: f64, seed: u64) -> Self {
        Self {
            noise: OutputNoise::new(amplitude, seed),
        }
    }
}

impl Default for FoldSystem {
    fn default() -> Self {
        Self::new()
    }
}

impl ControlledSystem for FoldSystem {
    fn state_dim(&self) -> usize {
        1
    }

    fn rhs(&self, x: &[f64], mu: f64, u: f64, dx: &mut [f64]) {
        dx[0] = mu - x[0] * x[0] + u;
    }

    fn output(&mut self, x: &[f64]) -> f64 {
        x[0] + self.noise.sample()
    }

    fn linearization(&self, x: &[f64], _mu: f64) -> Option<Linearization> {
        Some(Linearization {
            f_x: Matrix::scalar(-2.0 * x[0]),
            f_mu: Matrix::scalar(1.0),
            f_u: Matrix::scalar(1.0),
        })
    }
}

/// Equilibria of the fold at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldBranchPoint {
    pub x_stable: f64,
    pub x_unstable: f64,
    pub lambda_stable: f64,
    pub lambda_unstable: f64,
}

pub fn fold_branch_oracle(mu: f64) -> Result<FoldBranchPoint> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidInput(format!("no equilibria for mu = {mu}")));
    }
    let r = mu.sqrt();
    Ok(FoldBranchPoint {
        x_stable: r,
        x_unstable: -r,
        lambda_stable: -2.0 * r,
        lambda_unstable: 2.0 * r,
    })
}

/// Two-timescale system with one slow direction:
/// `x1' = mu - x1^2 + u`, `x2' = -(x2 - x1) / eps`, `y = x1`.
#[derive(Debug, Clone)]
pub struct SlowFastSystem {
    pub eps: f64,
    pub noise: OutputNoise,
}

impl SlowFastSystem {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            noise: OutputNoise::silent(),
        }
    }
}

impl Default for SlowFastSystem {
    fn default() -> Self {
        Self::new(0.01)
    }
}

impl ControlledSystem for SlowFastSystem {
    fn state_dim(&self) -> usize {
        2
    }

    fn rhs(&self, x: &[f64], mu: f64, u: f64, dx: &mut [f64]) {
        dx[0] = mu - x[0] * x[0] + u;
        dx[1] = -(x[1] - x[0]) / self.eps;
    }

    fn output(&mut self, x: &[f64]) -> f64 {
        x[0] + self.noise.sample()
    }

    fn recommended_dt(&self) -> f64 {
        0.001
    }

    fn linearization(&self, x: &[f64], _mu: f64) -> Option<Linearization> {
        let e = 1.0 / self.eps;
        Some(Linearization {
            f_x: Matrix::from_row_slice(2, 2, &[-2.0 * x[0], 0.0, e, -e]).ok()?,
            f_mu: Matrix::column(&[1.0, 0.0]).ok()?,
            f_u: Matrix::column(&[1.0, 0.0]).ok()?,
        })
    }
}

/// Pitchfork with an integral state that penalizes symmetry breaking:
/// `x' = mu x + x^3 + u + a_wo x_wo`, `x_wo' = -2 x`, `y = x`.
///
/// With `a_wo = 0` the integral state is inert and the plain pitchfork
/// remains.
#[derive(Debug, Clone)]
pub struct PitchforkSymSystem {
    pub a_wo: f64,
    pub noise: OutputNoise,
}

impl PitchforkSymSystem {
    pub fn new(a_wo: f64) -> Self {
        Self {
            a_wo,
            noise: OutputNoise::silent(),
        }
    }
}

impl ControlledSystem for PitchforkSymSystem {
    fn state_dim(&self) -> usize {
        2
    }

    fn rhs(&self, s: &[f64], mu: f64, u: f64, dx: &mut [f64]) {
        let x = s[0];
        dx[0] = mu * x + x * x * x + u + self.a_wo * s[1];
        // reflection x -> -x, so (R - I) x = -2x
        dx[1] = -2.0 * x;
    }

    fn output(&mut self, s: &[f64]) -> f64 {
        s[0] + self.noise.sample()
    }

    fn linearization(&self, s: &[f64], mu: f64) -> Option<Linearization> {
        let x = s[0];
        Some(Linearization {
            f_x: Matrix::from_row_slice(2, 2, &[mu + 3.0 * x * x, self.a_wo, -2.0, 0.0]).ok()?,
            f_mu: Matrix::column(&[x, 0.0]).ok()?,
            f_u: Matrix::column(&[1.0, 0.0]).ok()?,
        })
    }
}

/// Extended linearization of the symmetry-controlled pitchfork at the
/// bifurcation point, state order `(x, mu, x_wo)`.
pub fn pitchfork_ext_matrices(a_u: f64, a_wo: f64) -> (Matrix, Matrix) {
    let a = Matrix::from_row_slice(3, 3, &[0.0, 0.0, a_wo, 0.0, 0.0, 0.0, -2.0, 0.0, 0.0])
        .expect("finite entries");
    let b = Matrix::column(&[a_u, 1.0, 0.0]).expect("finite entries");
    (a, b)
}

pub fn pitchfork_ext_controllable(a_u: f64, a_wo: f64, tol: f64) -> bool {
    let (a, b) = pitchfork_ext_matrices(a_u, a_wo);
    let c = crate::linalg::controllability_matrix(&a, &b).expect("square shapes");
    mat_rank(&c, tol) == 3
}
