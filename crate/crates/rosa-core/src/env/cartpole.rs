//! Pole-on-cart dynamics with explicit Euler integration (classic constants).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartpoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub theta_threshold_deg: f64,
    pub x_threshold: f64,
    pub max_steps: usize,
    /// Initial state components are drawn from `U(-init_noise, init_noise)`.
    pub init_noise: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        CartpoleParams {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            theta_threshold_deg: 12.0,
            x_threshold: 2.4,
            max_steps: 200,
            init_noise: 0.05,
        }
    }
}

/// `[x, x_dot, theta, theta_dot]`.
pub type CartState = [f64; 4];

impl CartpoleParams {
    /// One Euler step under horizontal force `force`.
    pub fn integrate(&self, s: CartState, force: f64) -> CartState {
        let [x, x_dot, theta, theta_dot] = s;
        let total_mass = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.half_length;
        let (sin, cos) = theta.sin_cos();
        let temp = (force + pml * theta_dot * theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pml * theta_acc * cos / total_mass;
        [
            x + self.dt * x_dot,
            x_dot + self.dt * x_acc,
            theta + self.dt * theta_dot,
            theta_dot + self.dt * theta_acc,
        ]
    }

    pub fn collapsed(&self, s: &CartState) -> bool {
        s[0].abs() > self.x_threshold || s[2].abs() > self.theta_threshold_deg.to_radians()
    }
}
