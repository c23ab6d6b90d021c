//! Longitudinal and lateral PID control.
//!
//! The integral term is the arithmetic mean of a sliding window of recent
//! errors rather than a time-weighted sum.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{DT, STEER_LIMIT};
use crate::world::Point;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("steering target coincides with the ego position")]
    TargetAtOrigin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Error-buffer length in frames.
    pub window: usize,
}

impl PidGains {
    pub const LONGITUDINAL: PidGains = PidGains { kp: 0.3, ki: 0.05, kd: 0.0, window: 20 };
    pub const LATERAL: PidGains = PidGains { kp: 0.8, ki: 0.3, kd: 0.0, window: 10 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct PidController {
    gains: PidGains,
    dt: f64,
    buffer: VecDeque<f64>,
}

impl PidController {
    pub fn new(gains: PidGains, dt: f64) -> Self {
        Self { gains, dt, buffer: VecDeque::with_capacity(gains.window + 1) }
    }

    pub fn longitudinal() -> Self {
        Self::new(PidGains::LONGITUDINAL, DT)
    }

    pub fn lateral() -> Self {
        Self::new(PidGains::LATERAL, DT)
    }

    pub fn gains(&self) -> PidGains {
        self.gains
    }

    pub fn buffer(&self) -> impl Iterator<Item = f64> + '_ {
        self.buffer.iter().copied()
    }

    /// Mean of the buffered errors; 0 when empty.
    pub fn integral(&self) -> f64 {
        if self.buffer.is_empty() {
            0.0
        } else {
            self.buffer.iter().sum::<f64>() / self.buffer.len() as f64
        }
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
    }

    /// Pushes `error` and returns `kp·e + ki·mean(buffer) + kd·Δe/dt`.
    pub fn step(&mut self, error: f64) -> f64 {
        let previous = self.buffer.back().copied();
        self.buffer.push_back(error);
        while self.buffer.len() > self.gains.window.max(1) {
            self.buffer.pop_front();
        }
        let derivative = previous.map_or(0.0, |p| (error - p) / self.dt);
        self.gains.kp * error + self.gains.ki * self.integral() + self.gains.kd * derivative
    }
}

/// Actuator command. Throttle and brake are never both non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub throttle: f64,
    pub brake: f64,
    pub steer: f64,
}

/// Speed tracking in km/h. The raw PID output is split into throttle or brake
/// first and each side is then clamped to `[0, 1]`. A zero target always
/// commands full brake.
pub fn longitudinal_control(ego_speed_kmh: f64, target_kmh: f64, ctrl: &mut PidController) -> (f64, f64) {
    let raw = ctrl.step(target_kmh - ego_speed_kmh);
    if target_kmh <= 0.0 {
        return (0.0, 1.0);
    }
    if raw >= 0.0 {
        (raw.min(1.0), 0.0)
    } else {
        (0.0, (-raw).min(1.0))
    }
}

/// Heading error to `waypoint` (ego frame) fed through the lateral PID,
/// clamped to `[-1, 1]`.
pub fn lateral_control(waypoint: Point, ctrl: &mut PidController) -> Result<f64, ControlError> {
    if waypoint[0] == 0.0 && waypoint[1] == 0.0 {
        return Err(ControlError::TargetAtOrigin);
    }
    let angle = waypoint[1].atan2(waypoint[0]);
    Ok(ctrl.step(angle).clamp(-1.0, 1.0))
}

/// Maps actuator commands to longitudinal acceleration and wheel angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleDynamics {
    /// m/s² at full throttle.
    pub max_accel: f64,
    /// m/s² of deceleration at full brake.
    pub max_brake: f64,
    /// Constant rolling resistance, m/s².
    pub rolling: f64,
    /// Quadratic drag coefficient, 1/m.
    pub drag: f64,
    /// Wheel angle at steer = ±1, radians.
    pub max_steer: f64,
}

impl Default for VehicleDynamics {
    fn default() -> Self {
        Self { max_accel: 3.5, max_brake: 8.0, rolling: 0.05, drag: 4e-4, max_steer: 0.7 }
    }
}

impl VehicleDynamics {
    /// Returns `(accel m/s², wheel angle rad)`.
    pub fn apply(&self, cmd: &ControlCommand, speed_mps: f64) -> (f64, f64) {
        let mut accel = cmd.throttle * self.max_accel;
        if speed_mps > 0.0 {
            accel -= cmd.brake * self.max_brake + self.rolling + self.drag * speed_mps * speed_mps;
        }
        let wheel = (cmd.steer * self.max_steer).clamp(-STEER_LIMIT, STEER_LIMIT);
        (accel, wheel)
    }
}
