//! Environment attributes and their perturbation sets.

use std::fmt;

use thiserror::Error;

/// Robots' maximal linear speed, cm/s.
pub const SPEED_SET: [f64; 4] = [5.0, 10.0, 15.0, 20.0];
/// Number of robots in the swarm.
pub const ROBOTS_SET: [usize; 4] = [5, 10, 15, 20];
/// Arena area, m².
pub const AREA_SET: [f64; 4] = [4.0, 9.0, 16.0, 25.0];
/// Number of obstacles.
pub const OBSTACLES_SET: [usize; 4] = [0, 2, 4, 6];
/// Range-and-bearing sensor range, cm.
pub const RAB_RANGE_SET: [f64; 4] = [25.0, 50.0, 100.0, 200.0];
/// Proximity sensor range, cm.
pub const PROXIMITY_RANGE_SET: [f64; 4] = [5.5, 11.0, 22.0, 44.0];

/// Number of perturbations available for each attribute.
pub const LEVELS: usize = 4;
/// Number of environment attributes.
pub const ATTRIBUTES: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{attribute} value {value} is not one of the permitted perturbations")]
pub struct InvalidAttribute {
    pub attribute: &'static str,
    pub value: f64,
}

/// The six attributes parameterising a simulated world, in table units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentSpec {
    pub max_speed_cm_s: f64,
    pub robots: usize,
    pub arena_area_m2: f64,
    pub obstacles: usize,
    pub rab_range_cm: f64,
    pub proximity_range_cm: f64,
}

impl EnvironmentSpec {
    /// The unperturbed reference environment.
    pub const NORMAL: EnvironmentSpec = EnvironmentSpec {
        max_speed_cm_s: 10.0,
        robots: 10,
        arena_area_m2: 16.0,
        obstacles: 0,
        rab_range_cm: 100.0,
        proximity_range_cm: 11.0,
    };

    pub fn normal() -> Self {
        Self::NORMAL
    }

    /// Side length of the square arena in meters.
    pub fn arena_side(&self) -> f64 {
        self.arena_area_m2.sqrt()
    }

    /// Position of every attribute inside its perturbation set.
    pub fn indices(&self) -> Result<[usize; ATTRIBUTES], InvalidAttribute> {
        fn find_f(
            set: &[f64; 4],
            v: f64,
            attribute: &'static str,
        ) -> Result<usize, InvalidAttribute> {
            set.iter().position(|&s| s == v).ok_or(InvalidAttribute {
                attribute,
                value: v,
            })
        }
        fn find_u(
            set: &[usize; 4],
            v: usize,
            attribute: &'static str,
        ) -> Result<usize, InvalidAttribute> {
            set.iter().position(|&s| s == v).ok_or(InvalidAttribute {
                attribute,
                value: v as f64,
            })
        }
        Ok([
            find_f(&SPEED_SET, self.max_speed_cm_s, "max_speed_cm_s")?,
            find_u(&ROBOTS_SET, self.robots, "robots")?,
            find_f(&AREA_SET, self.arena_area_m2, "arena_area_m2")?,
            find_u(&OBSTACLES_SET, self.obstacles, "obstacles")?,
            find_f(&RAB_RANGE_SET, self.rab_range_cm, "rab_range_cm")?,
            find_f(
                &PROXIMITY_RANGE_SET,
                self.proximity_range_cm,
                "proximity_range_cm",
            )?,
        ])
    }

    /// Builds the environment selected by one perturbation index per attribute.
    ///
    /// Panics if any index is `>= LEVELS`.
    pub fn from_indices(idx: [usize; ATTRIBUTES]) -> Self {
        EnvironmentSpec {
            max_speed_cm_s: SPEED_SET[idx[0]],
            robots: ROBOTS_SET[idx[1]],
            arena_area_m2: AREA_SET[idx[2]],
            obstacles: OBSTACLES_SET[idx[3]],
            rab_range_cm: RAB_RANGE_SET[idx[4]],
            proximity_range_cm: PROXIMITY_RANGE_SET[idx[5]],
        }
    }

    pub fn is_normal(&self) -> bool {
        *self == Self::NORMAL
    }
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        Self::NORMAL
    }
}

impl fmt::Display for EnvironmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}cm/s,{}robots,{}m2,{}obstacles,rab{}cm,prox{}cm",
            self.max_speed_cm_s,
            self.robots,
            self.arena_area_m2,
            self.obstacles,
            self.rab_range_cm,
            self.proximity_range_cm
        )
    }
}
