//! Force terms of the social-force model with alignment.

use std::f64::consts::FRAC_PI_2;

use crate::geometry::{closest_wall_point, Obstacle, Vec2};
use crate::params::{InputBox, PedParams};
use crate::PedError;

/// Smallest separation used in repulsion terms.
pub const MIN_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repeller {
    Pedestrian,
    Object,
}

pub fn target_direction(pos: Vec2, params: &PedParams) -> Result<Vec2, PedError> {
    let target = Vec2::new(params.target[0], params.target[1]);
    (target - pos)
        .normalized(0.0)
        .ok_or(PedError::AtTarget)
}

/// Relaxation toward walking at the desired speed along `direction`.
pub fn relaxation_force(vel: Vec2, direction: Vec2, params: &PedParams) -> Vec2 {
    (direction * params.target_speed - vel) * (1.0 / params.reaction_time)
}

pub fn target_force(pos: Vec2, vel: Vec2, params: &PedParams) -> Result<Vec2, PedError> {
    Ok(relaxation_force(vel, target_direction(pos, params)?, params))
}

/// Magnitude of the repulsion at distance `r` for strength `v` and range `sigma`.
pub fn repulsion_magnitude(r: f64, v: f64, sigma: f64) -> f64 {
    if r >= sigma {
        return 0.0;
    }
    let g = FRAC_PI_2 * (r.max(MIN_SEPARATION) / sigma - 1.0);
    -v * (g.tan() - g)
}

/// Force on a pedestrian at offset `away` from the repelling point.
/// `away` points from the source toward the pedestrian.
pub fn repulsion_force(away: Vec2, kind: Repeller, params: &PedParams) -> Vec2 {
    let (v, sigma) = match kind {
        Repeller::Pedestrian => (params.ped_repulsion, params.ped_range),
        Repeller::Object => (params.obj_repulsion, params.obj_range),
    };
    let r = away.norm();
    if r >= sigma {
        return Vec2::ZERO;
    }
    let dir = match away.normalized(0.0) {
        Some(d) => d,
        None => {
            log::debug!("repulsion with zero separation, pushing along +y");
            Vec2::new(0.0, 1.0)
        }
    };
    dir * repulsion_magnitude(r, v, sigma)
}

/// Alignment weight of a neighbor at distance `r` whose velocity is
/// rotated by `theta` relative to one's own.
pub fn kappa(r: f64, theta: f64, params: &PedParams) -> f64 {
    let range_sq = params.kappa_range * params.kappa_range;
    if r * r >= range_sq {
        return 0.0;
    }
    let angular = params.kappa_scale
        / (1.0 + (-params.kappa_alpha * (params.kappa_beta * theta).cos()).exp());
    angular * (range_sq / (r * r - range_sq)).exp()
}

/// Upper bound of [`kappa`].
pub fn kappa_max(params: &PedParams) -> f64 {
    params.kappa_scale / (1.0 + (-params.kappa_alpha).exp())
}

/// Weighted mean of neighbor velocities; `None` without usable weight.
pub fn weighted_mean(sum_v: Vec2, sum_w: f64) -> Option<Vec2> {
    (sum_w >= f64::MIN_POSITIVE).then(|| Vec2::new(sum_v.x / sum_w, sum_v.y / sum_w))
}

/// Blend of the target direction and the weighted neighbor velocity.
/// `weighted_velocity` is `None` when no neighbor carries weight.
pub fn blend_direction(e_trg: Vec2, weighted_velocity: Option<Vec2>, params: &PedParams) -> Vec2 {
    let Some(mean_v) = weighted_velocity else {
        return e_trg;
    };
    let p = params.lemming;
    (e_trg * (1.0 - p) + mean_v * p)
        .normalized(1e-9)
        .unwrap_or(e_trg)
}

/// Alignment direction of pedestrian `i` within the crowd.
pub fn alignment_direction(
    i: usize,
    pos: &[Vec2],
    vel: &[Vec2],
    params: &PedParams,
) -> Result<Vec2, PedError> {
    let e_trg = target_direction(pos[i], params)?;
    let mut sum_w = 0.0;
    let mut sum_v = Vec2::ZERO;
    for j in 0..pos.len() {
        if j == i {
            continue;
        }
        let w = kappa((pos[j] - pos[i]).norm(), vel[i].angle_to(vel[j]), params);
        sum_w += w;
        sum_v += vel[j] * w;
    }
    Ok(blend_direction(e_trg, weighted_mean(sum_v, sum_w), params))
}

pub fn bias_indicator(pos: Vec2, mu: f64, input: &InputBox, params: &PedParams) -> bool {
    (pos.x - mu).abs() <= input.half_width(params) && (pos.y - input.y_c).abs() <= input.y_len
}

/// Repulsion from both walls and the obstacle.
pub fn object_force(pos: Vec2, obstacle: &Obstacle, params: &PedParams) -> Vec2 {
    let half = params.corridor_width / 2.0;
    let mut f = Vec2::ZERO;
    // Walls act along x only; a pedestrian past a wall is pushed back in.
    let wall = closest_wall_point(pos, params);
    let gap = half - pos.x.abs();
    if gap < params.obj_range {
        let inward = if wall.x > 0.0 { -1.0 } else { 1.0 };
        f.x += inward * repulsion_magnitude(gap, params.obj_repulsion, params.obj_range);
    }
    let (closest, inside) = obstacle.closest_point(pos);
    let offset = pos - closest;
    if offset.norm() < params.obj_range {
        let away = if inside { -offset } else { offset };
        let away = if away.norm() == 0.0 {
            pos - (obstacle.tip + obstacle.left + obstacle.right) * (1.0 / 3.0)
        } else {
            away
        };
        let dir = away.normalized(0.0).unwrap_or(Vec2::new(0.0, -1.0));
        f += dir * repulsion_magnitude(offset.norm(), params.obj_repulsion, params.obj_range);
    }
    f
}

/// Acceleration of every pedestrian. `plant_input` is the bias force
/// already multiplied by its gain.
pub fn accelerations(
    pos: &[Vec2],
    vel: &[Vec2],
    mu: f64,
    plant_input: f64,
    params: &PedParams,
    input: &InputBox,
    out: &mut [Vec2],
) -> Result<(), PedError> {
    let n = pos.len();
    let mut sum_w = vec![0.0; n];
    let mut sum_v = vec![Vec2::ZERO; n];
    let mut rep = vec![Vec2::ZERO; n];
    let range_sq = params.kappa_range * params.kappa_range;
    let ped_range_sq = params.ped_range * params.ped_range;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pos[j] - pos[i];
            let r_sq = d.norm_sq();
            if r_sq >= range_sq && r_sq >= ped_range_sq {
                continue;
            }
            let r = r_sq.sqrt();
            let w = kappa(r, vel[i].angle_to(vel[j]), params);
            if w > 0.0 {
                sum_w[i] += w;
                sum_w[j] += w;
                sum_v[i] += vel[j] * w;
                sum_v[j] += vel[i] * w;
            }
            if r_sq < ped_range_sq {
                let f = repulsion_force(-d, Repeller::Pedestrian, params);
                rep[i] += f;
                rep[j] += -f;
            }
        }
    }
    let obstacle = Obstacle::new(mu, params);
    for i in 0..n {
        let e_trg = target_direction(pos[i], params)?;
        let dir = blend_direction(e_trg, weighted_mean(sum_v[i], sum_w[i]), params);
        let mut a = relaxation_force(vel[i], dir, params) + rep[i] + object_force(pos[i], &obstacle, params);
        if bias_indicator(pos[i], mu, input, params) {
            a.x += plant_input;
        }
        out[i] = a;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn target_force_examples() {
        let p = PedParams::default();
        let f = target_force(Vec2::ZERO, Vec2::ZERO, &p).unwrap();
        assert_eq!(f.x, 0.0);
        assert_relative_eq!(f.y, 1.34 / 0.22, epsilon = 1e-12);
        assert_relative_eq!(f.y, 6.090_909_090_9, epsilon = 1e-9);
        let g = target_force(Vec2::new(0.0, 10.0), Vec2::ZERO, &p).unwrap();
        assert_relative_eq!(g.y, f.y, epsilon = 1e-12);
        let e = target_direction(Vec2::new(3.0, -4.0), &p).unwrap();
        let at_speed = target_force(Vec2::new(3.0, -4.0), e * 1.34, &p).unwrap();
        assert!(at_speed.norm() < 1e-12);
        assert!(target_force(Vec2::new(0.0, 20.0), Vec2::ZERO, &p).is_err());
    }

    #[test]
    fn repulsion_examples() {
        let p = PedParams::default();
        let f = repulsion_force(Vec2::new(0.5, 0.0), Repeller::Pedestrian, &p);
        assert_relative_eq!(f.x, -15.0 * (-1.0 + std::f64::consts::FRAC_PI_4), epsilon = 1e-12);
        assert_relative_eq!(f.x, 3.2190, epsilon = 1e-4);
        assert_eq!(f.y, 0.0);
        assert_eq!(repulsion_force(Vec2::new(0.0, 1.0), Repeller::Pedestrian, &p), Vec2::ZERO);
        let near = repulsion_force(Vec2::new(0.0, 1e-9), Repeller::Pedestrian, &p);
        assert!(near.y.is_finite() && near.y > 1e5);
        let zero = repulsion_force(Vec2::ZERO, Repeller::Object, &p);
        assert!(zero.norm().is_finite());
    }

    #[test]
    fn kappa_examples() {
        let p = PedParams::default();
        assert_eq!(kappa(6.0, 0.0, &p), 0.0);
        assert_eq!(kappa(5.0, 0.0, &p), 0.0);
        let e = std::f64::consts::E;
        assert_relative_eq!(kappa(0.0, 0.0, &p), e * (-1f64).exp() / (1.0 + (-15f64).exp()), epsilon = 1e-15);
        assert!((kappa(0.0, 0.0, &p) - 0.999_999_69).abs() < 1e-8);
        let k = kappa(0.0, std::f64::consts::PI, &p);
        assert!((k - 6.4e-7).abs() < 0.1e-7, "{k}");
    }

    #[test]
    fn bias_box_examples() {
        let p = PedParams::default();
        let b = InputBox::default();
        let mu = -0.4;
        assert!(bias_indicator(Vec2::new(mu, -1.75), mu, &b, &p));
        assert!(!bias_indicator(Vec2::new(mu, 0.0), mu, &b, &p));
        assert!(bias_indicator(Vec2::new(mu + 10.0 / 3.0, -1.75), mu, &b, &p));
        assert!(!bias_indicator(Vec2::new(mu + 3.4, -1.75), mu, &b, &p));
    }

    #[test]
    fn alignment_examples() {
        let p = PedParams::default();
        let pos = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.5), Vec2::new(-2.0, 1.0)];
        let e0 = target_direction(pos[0], &p).unwrap();
        let vel: Vec<Vec2> = pos.iter().map(|q| target_direction(*q, &p).unwrap() * 1.34).collect();
        let lone = alignment_direction(0, &pos[..1], &vel[..1], &p).unwrap();
        assert_eq!(lone, e0);
        let no_lemming = PedParams { lemming: 0.0, ..p.clone() };
        assert_eq!(alignment_direction(0, &pos, &vel, &no_lemming).unwrap(), e0);
        let same = vec![e0 * 1.34; 3];
        let e = alignment_direction(0, &pos, &same, &p).unwrap();
        assert!((e - e0).norm() < 1e-12);
        let far = [Vec2::ZERO, Vec2::new(0.0, 7.0)];
        let far_v = [Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0)];
        assert_eq!(alignment_direction(0, &far, &far_v, &p).unwrap(), e0);
    }

    #[test]
    fn vanishing_weights_fall_back_to_target() {
        assert_eq!(weighted_mean(Vec2::new(1e-310, 1e-310), 1e-310), None);
        let m = weighted_mean(Vec2::new(2e-300, 0.0), 1e-300).unwrap();
        assert_eq!(m, Vec2::new(2.0, 0.0));
        let p = PedParams::default();
        let edge = kappa(5.0 - 1e-9, 0.0, &p);
        assert!(edge.is_finite() && edge < 1e-300);
    }

    #[test]
    fn acceleration_examples() {
        let p = PedParams::default();
        let b = InputBox::default();
        let pos = [Vec2::new(-2.0, -8.0)];
        let vel = [target_direction(pos[0], &p).unwrap() * 1.34];
        let mut out = [Vec2::ZERO];
        accelerations(&pos, &vel, 0.0, 0.0, &p, &b, &mut out).unwrap();
        assert!(out[0].norm() < 1e-12);
        let pos = [Vec2::new(0.0, -1.75)];
        let vel = [Vec2::new(0.0, 1.34)];
        let mut base = [Vec2::ZERO];
        accelerations(&pos, &vel, 0.0, 0.0, &p, &b, &mut base).unwrap();
        accelerations(&pos, &vel, 0.0, 50.0 * 0.04, &p, &b, &mut out).unwrap();
        assert_relative_eq!(out[0].x - base[0].x, 2.0, epsilon = 1e-12);
        assert_eq!(out[0].y, base[0].y);
    }

    #[test]
    fn pairwise_matches_direct_alignment() {
        let p = PedParams::default();
        let pos = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.5), Vec2::new(-2.0, 1.0), Vec2::new(3.0, 4.9)];
        let vel = [Vec2::new(0.1, 1.2), Vec2::new(-0.3, 1.0), Vec2::new(0.5, 0.8), Vec2::new(0.0, -1.0)];
        let mut out = [Vec2::ZERO; 4];
        accelerations(&pos, &vel, 3.0, 0.0, &p, &InputBox::default(), &mut out).unwrap();
        for i in 0..4 {
            let e = alignment_direction(i, &pos, &vel, &p).unwrap();
            let mut expect = relaxation_force(vel[i], e, &p);
            for j in 0..4 {
                if j != i {
                    expect += repulsion_force(pos[i] - pos[j], Repeller::Pedestrian, &p);
                }
            }
            expect += object_force(pos[i], &Obstacle::new(3.0, &p), &p);
            assert!((out[i] - expect).norm() < 1e-12, "{i}");
        }
    }

    proptest! {
        #[test]
        fn repulsion_support_and_continuity(r in 0.0f64..3.0) {
            let p = PedParams::default();
            let f = repulsion_magnitude(r, p.ped_repulsion, p.ped_range);
            prop_assert!(f >= 0.0);
            if r >= 1.0 {
                prop_assert_eq!(f, 0.0);
            }
            let below = repulsion_magnitude(1.0 - 1e-7, p.ped_repulsion, p.ped_range);
            prop_assert!(below < 1e-12);
        }

        #[test]
        fn kappa_bounds_and_symmetry(r in 0.0f64..8.0, theta in -std::f64::consts::PI..std::f64::consts::PI) {
            let p = PedParams::default();
            let k = kappa(r, theta, &p);
            prop_assert!(k >= 0.0 && k <= kappa_max(&p));
            prop_assert_eq!(k, kappa(r, -theta, &p));
            if r >= 5.0 {
                prop_assert_eq!(k, 0.0);
            }
        }
    }
}
