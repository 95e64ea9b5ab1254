use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::sensors::{rab_from_offsets, FRONT_PROXIMITY};
use super::{SensorFrame, WheelCommand};

/// Per-robot sensor or actuator fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultType {
    /// Frontal proximity readings forced to 0.
    Pmin,
    /// Frontal proximity readings forced to 1.
    Pmax,
    /// Frontal proximity readings drawn from U(0, 1).
    Prand,
    /// Left wheel speed halved.
    LwH,
    /// Right wheel speed halved.
    RwH,
    /// Both wheel speeds halved.
    BwH,
    /// Random polar offset added to every perceived neighbour.
    Rofs,
    None,
}

impl FaultType {
    pub const ALL: [FaultType; 8] = [
        FaultType::Pmin,
        FaultType::Pmax,
        FaultType::Prand,
        FaultType::LwH,
        FaultType::RwH,
        FaultType::BwH,
        FaultType::Rofs,
        FaultType::None,
    ];

    pub fn code(self) -> &'static str {
        match self {
            FaultType::Pmin => "PMIN",
            FaultType::Pmax => "PMAX",
            FaultType::Prand => "PRAND",
            FaultType::LwH => "LW_H",
            FaultType::RwH => "RW_H",
            FaultType::BwH => "BW_H",
            FaultType::Rofs => "ROFS",
            FaultType::None => "NONE",
        }
    }

    pub fn is_proximity(self) -> bool {
        matches!(self, FaultType::Pmin | FaultType::Pmax | FaultType::Prand)
    }

    pub fn is_actuator(self) -> bool {
        matches!(self, FaultType::LwH | FaultType::RwH | FaultType::BwH)
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FaultType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultType::ALL
            .into_iter()
            .find(|f| f.code() == s)
            .ok_or_else(|| format!("unknown fault code `{s}`"))
    }
}

/// One fault per robot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FaultAssignment(pub Vec<FaultType>);

impl FaultAssignment {
    pub fn none(robots: usize) -> Self {
        FaultAssignment(vec![FaultType::None; robots])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_all_none(&self) -> bool {
        self.0.iter().all(|&f| f == FaultType::None)
    }

    pub fn get(&self, robot: usize) -> FaultType {
        self.0[robot]
    }

    /// `PMIN|NONE|...` encoding used in CSV files.
    pub fn codes(&self) -> String {
        self.0
            .iter()
            .map(|f| f.code())
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn parse_codes(s: &str) -> Result<Self, String> {
        s.split('|')
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(FaultAssignment)
    }
}

/// Sensor-side part of a fault. `offsets` are the body-frame neighbour
/// positions the frame's range-and-bearing readings were computed from; ROFS
/// perturbs them and re-bins.
pub fn apply_sensor_fault<R: Rng + ?Sized>(
    frame: &mut SensorFrame,
    offsets: &mut [(f64, f64)],
    rab_range: f64,
    fault: FaultType,
    rng: &mut R,
) {
    match fault {
        FaultType::Pmin => frame.proximity[..FRONT_PROXIMITY].fill(0.0),
        FaultType::Pmax => frame.proximity[..FRONT_PROXIMITY].fill(1.0),
        FaultType::Prand => {
            for p in &mut frame.proximity[..FRONT_PROXIMITY] {
                *p = rng.random::<f64>();
            }
        }
        FaultType::Rofs => {
            for o in offsets.iter_mut() {
                let r = rng.random_range(0.75..1.0) * rab_range;
                let theta = rng.random_range(-PI..PI);
                o.0 += r * theta.cos();
                o.1 += r * theta.sin();
            }
            frame.rab = rab_from_offsets(offsets, rab_range);
        }
        _ => {}
    }
}

/// Actuator-side part of a fault.
pub fn apply_actuator_fault(cmd: WheelCommand, fault: FaultType) -> WheelCommand {
    match fault {
        FaultType::LwH => WheelCommand {
            left: 0.5 * cmd.left,
            ..cmd
        },
        FaultType::RwH => WheelCommand {
            right: 0.5 * cmd.right,
            ..cmd
        },
        FaultType::BwH => WheelCommand {
            left: 0.5 * cmd.left,
            right: 0.5 * cmd.right,
        },
        _ => cmd,
    }
}

/// Applies both halves of `fault` to one robot's perception and command.
pub fn apply_faults<R: Rng + ?Sized>(
    mut frame: SensorFrame,
    offsets: &mut [(f64, f64)],
    rab_range: f64,
    cmd: WheelCommand,
    fault: FaultType,
    rng: &mut R,
) -> (SensorFrame, WheelCommand) {
    apply_sensor_fault(&mut frame, offsets, rab_range, fault, rng);
    (frame, apply_actuator_fault(cmd, fault))
}
