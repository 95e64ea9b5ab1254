//! Discrete-time 2D kinematic simulation of a differential-drive swarm.
//!
//! The arena is the square `[0, side] x [0, side]`; headings are measured
//! counter-clockwise from the +x axis and kept in `(-pi, pi]`.

mod faults;
mod log;
mod sensors;
mod trial;

use std::f64::consts::PI;

use thiserror::Error;

use crate::env::EnvironmentSpec;

pub use faults::{
    apply_actuator_fault, apply_faults, apply_sensor_fault, FaultAssignment, FaultType,
};
pub use log::{CycleView, TrialLog, TrialObserver};
pub use sensors::{
    neighbour_offsets, rab_from_offsets, sense_proximity, sense_rab, PROXIMITY_ANGLES_DEG,
    PROXIMITY_SENSORS, RAB_CONES,
};
pub use trial::{
    differential_drive_step, place, run_trial, run_trial_cycles, simulate, World,
    MAX_PLACEMENT_ATTEMPTS,
};

/// Control period in seconds.
pub const DT: f64 = 0.20;
/// Default trial length in seconds.
pub const TRIAL_SECONDS: f64 = 400.0;
pub const ROBOT_RADIUS: f64 = 0.06;
pub const AXLE_LENGTH: f64 = 0.09;
/// 127.32 deg/s, reached with opposing wheels at the normal 10 cm/s.
pub const MAX_ANGULAR_SPEED: f64 = 2.0 * 0.10 / AXLE_LENGTH;
pub const OBSTACLE_SIDE: f64 = 0.25;

/// Number of control cycles in a trial of `seconds`.
pub fn cycles_for(seconds: f64) -> usize {
    (seconds / DT).round() as usize
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("could not place {what} without overlap after {attempts} attempts")]
    Placement { what: &'static str, attempts: usize },
    #[error("fault assignment has {got} entries but the swarm has {expected} robots")]
    FaultCount { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Axis-aligned square obstacle of side [`OBSTACLE_SIDE`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
}

impl Obstacle {
    pub fn half(&self) -> f64 {
        OBSTACLE_SIDE / 2.0
    }

    /// Closest point of the square to `(px, py)`.
    pub fn closest_point(&self, px: f64, py: f64) -> (f64, f64) {
        let h = self.half();
        (
            px.clamp(self.x - h, self.x + h),
            py.clamp(self.y - h, self.y + h),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArenaSpec {
    pub side_length: f64,
    pub obstacles: Vec<Obstacle>,
}

impl ArenaSpec {
    pub fn empty(side_length: f64) -> Self {
        ArenaSpec {
            side_length,
            obstacles: Vec::new(),
        }
    }

    /// Length of the arena diagonal.
    pub fn diagonal(&self) -> f64 {
        self.side_length * std::f64::consts::SQRT_2
    }

    pub fn center(&self) -> (f64, f64) {
        (self.side_length / 2.0, self.side_length / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotBody {
    pub radius: f64,
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    pub axle_length: f64,
    pub proximity_range: f64,
    pub rab_range: f64,
    pub dt: f64,
}

impl RobotBody {
    pub fn for_environment(env: &EnvironmentSpec) -> Self {
        RobotBody {
            radius: ROBOT_RADIUS,
            max_linear_speed: env.max_speed_cm_s / 100.0,
            max_angular_speed: MAX_ANGULAR_SPEED,
            axle_length: AXLE_LENGTH,
            proximity_range: env.proximity_range_cm / 100.0,
            rab_range: env.rab_range_cm / 100.0,
            dt: DT,
        }
    }

    pub fn normal() -> Self {
        Self::for_environment(&EnvironmentSpec::NORMAL)
    }
}

/// Proximity and range-and-bearing activations of one robot, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensorFrame {
    pub proximity: [f64; PROXIMITY_SENSORS],
    pub rab: [f64; RAB_CONES],
}

impl SensorFrame {
    /// Network inputs: 7 proximity, 8 range-and-bearing, bias.
    pub fn network_inputs(&self) -> [f64; crate::genome::INPUTS] {
        let mut x = [0.0; crate::genome::INPUTS];
        for (dst, &a) in x
            .iter_mut()
            .zip(self.proximity.iter().chain(self.rab.iter()))
        {
            *dst = crate::genome::scale_input(a);
        }
        x[crate::genome::BIAS_INPUT] = 1.0;
        x
    }
}

/// Left and right wheel speeds in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WheelCommand {
    pub left: f64,
    pub right: f64,
}

/// Commanded linear (m/s) and angular (rad/s) velocity for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Velocity {
    pub linear: f64,
    pub angular: f64,
}

impl Velocity {
    pub fn from_command(cmd: WheelCommand, body: &RobotBody) -> Self {
        Velocity {
            linear: 0.5 * (cmd.left + cmd.right),
            angular: ((cmd.right - cmd.left) / body.axle_length)
                .clamp(-body.max_angular_speed, body.max_angular_speed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_body_constants() {
        let b = RobotBody::normal();
        assert_eq!(b.dt, 0.20);
        assert!((b.max_angular_speed - 2.0 * 0.10 / b.axle_length).abs() < 1e-3);
        assert!((b.max_angular_speed.to_degrees() - 127.32).abs() < 0.01);
        assert_eq!(cycles_for(TRIAL_SECONDS), 2000);
    }

    #[test]
    fn angle_wrapping() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn diagonal_of_four_meter_arena() {
        assert!((ArenaSpec::empty(4.0).diagonal() - 4.0 * 2f64.sqrt()).abs() < 1e-15);
    }
}
