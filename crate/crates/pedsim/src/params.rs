//! Scenario parameters. Defaults reproduce the reference corridor scenario.

use serde::{Deserialize, Serialize};

/// Corridor, crowd and interaction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PedParams {
    pub corridor_length: f64,
    pub corridor_width: f64,
    pub n_pedestrians: usize,
    pub base_length: f64,
    pub leg_length: f64,
    pub target_speed: f64,
    pub target: [f64; 2],
    pub reaction_time: f64,
    pub ped_repulsion: f64,
    pub ped_range: f64,
    pub obj_repulsion: f64,
    pub obj_range: f64,
    pub lemming: f64,
    pub kappa_scale: f64,
    pub kappa_beta: f64,
    pub kappa_alpha: f64,
    pub kappa_range: f64,
    /// Half-width of the strip around the center line where pedestrians enter.
    pub entry_half_width: f64,
}

impl Default for PedParams {
    fn default() -> Self {
        Self {
            corridor_length: 20.0,
            corridor_width: 10.0,
            n_pedestrians: 100,
            base_length: 4.0,
            leg_length: 3.0,
            target_speed: 1.34,
            target: [0.0, 20.0],
            reaction_time: 0.22,
            ped_repulsion: 15.0,
            ped_range: 1.0,
            obj_repulsion: 10.0,
            obj_range: 2.0,
            lemming: 0.75,
            kappa_scale: std::f64::consts::E,
            kappa_beta: 0.9,
            kappa_alpha: 15.0,
            kappa_range: 5.0,
            entry_half_width: 0.5,
        }
    }
}

impl PedParams {
    /// Distance from the obstacle tip to its base.
    pub fn obstacle_height(&self) -> f64 {
        (self.leg_length * self.leg_length - self.base_length * self.base_length / 4.0).sqrt()
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("corridor_length", self.corridor_length),
            ("corridor_width", self.corridor_width),
            ("base_length", self.base_length),
            ("leg_length", self.leg_length),
            ("target_speed", self.target_speed),
            ("reaction_time", self.reaction_time),
            ("ped_range", self.ped_range),
            ("obj_range", self.obj_range),
            ("kappa_range", self.kappa_range),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.lemming) {
            return Err(format!("lemming must lie in [0, 1], got {}", self.lemming));
        }
        if self.leg_length <= self.base_length / 2.0 {
            return Err("leg_length must exceed half the base".into());
        }
        if self.n_pedestrians == 0 {
            return Err("n_pedestrians must be positive".into());
        }
        Ok(())
    }
}

/// Parameters of the two flux measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FluxParams {
    /// Length scale of the position weight.
    pub d: f64,
    pub eta: f64,
    pub x_c_phi: f64,
    pub y_c_phi: f64,
    /// Half-length of the counting boxes behind the obstacle.
    pub y_len_count: f64,
    /// Center of the counting boxes; `None` places them half a meter
    /// behind the obstacle base.
    pub y_c_count: Option<f64>,
    /// Averaging window of the count difference, seconds.
    pub tau_max: f64,
}

impl Default for FluxParams {
    fn default() -> Self {
        Self {
            d: 4.0,
            eta: 1.0 / 12.0,
            x_c_phi: 5.0,
            y_c_phi: 0.0,
            y_len_count: 0.5,
            y_c_count: None,
            tau_max: 10.0,
        }
    }
}

impl FluxParams {
    pub fn count_center(&self, ped: &PedParams) -> f64 {
        self.y_c_count.unwrap_or_else(|| ped.obstacle_height() + 0.5)
    }
}

/// Support of the control input, centered on the obstacle tip in `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputBox {
    pub y_len: f64,
    /// Half-width; `None` means a third of the corridor width.
    pub x_wth: Option<f64>,
    pub y_c: f64,
}

impl Default for InputBox {
    fn default() -> Self {
        Self {
            y_len: 0.25,
            x_wth: None,
            y_c: -1.75,
        }
    }
}

impl InputBox {
    pub fn half_width(&self, ped: &PedParams) -> f64 {
        self.x_wth.unwrap_or(ped.corridor_width / 3.0)
    }
}
