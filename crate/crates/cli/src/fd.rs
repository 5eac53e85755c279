//! Central finite-difference linearization of a black-box vector field.

use cbc_core::dynsys::{ControlledSystem, Linearization};
use cbc_core::linalg::Matrix;

fn step_for(v: f64, rel: f64) -> f64 {
    rel * v.abs().max(1.0)
}

/// Jacobians of `rhs` in state, parameter and input at `(x, mu, u = 0)`.
/// Each coordinate is perturbed by `rel * max(1, |v|)`.
pub fn fd_linearization<S: ControlledSystem + ?Sized>(
    sys: &S,
    x: &[f64],
    mu: f64,
    rel: f64,
) -> cbc_core::Result<Linearization> {
    let n = x.len();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    let mut f_x = vec![0.0; n * n];
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = step_for(x[j], rel);
        xp[j] = x[j] + h;
        sys.rhs(&xp, mu, 0.0, &mut plus);
        xp[j] = x[j] - h;
        sys.rhs(&xp, mu, 0.0, &mut minus);
        xp[j] = x[j];
        for i in 0..n {
            f_x[i * n + j] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    let column = |plus: &[f64], minus: &[f64], h: f64| -> Vec<f64> {
        plus.iter().zip(minus).map(|(p, m)| (p - m) / (2.0 * h)).collect()
    };
    let h = step_for(mu, rel);
    sys.rhs(x, mu + h, 0.0, &mut plus);
    sys.rhs(x, mu - h, 0.0, &mut minus);
    let f_mu = column(&plus, &minus, h);
    let h = rel;
    sys.rhs(x, mu, h, &mut plus);
    sys.rhs(x, mu, -h, &mut minus);
    let f_u = column(&plus, &minus, h);
    Ok(Linearization {
        f_x: Matrix::from_row_slice(n, n, &f_x)?,
        f_mu: Matrix::column(&f_mu)?,
        f_u: Matrix::column(&f_u)?,
    })
}
