use super::{Obstacle, Pose, World};

pub const PROXIMITY_SENSORS: usize = 7;
pub const FRONT_PROXIMITY: usize = 5;
pub const RAB_CONES: usize = 8;

/// Body-frame ray angles, frontal sensors left to right then rear-left and
/// rear-right. Counter-clockwise positive.
pub const PROXIMITY_ANGLES_DEG: [f64; PROXIMITY_SENSORS] =
    [40.0, 20.0, 0.0, -20.0, -40.0, 160.0, -160.0];

fn ray_wall(side: f64, ox: f64, oy: f64, dx: f64, dy: f64) -> f64 {
    let tx = if dx > 0.0 {
        (side - ox) / dx
    } else if dx < 0.0 {
        -ox / dx
    } else {
        f64::INFINITY
    };
    let ty = if dy > 0.0 {
        (side - oy) / dy
    } else if dy < 0.0 {
        -oy / dy
    } else {
        f64::INFINITY
    };
    tx.min(ty).max(0.0)
}

fn ray_box(o: &Obstacle, ox: f64, oy: f64, dx: f64, dy: f64) -> Option<f64> {
    let h = o.half();
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    for (orig, dir, lo, hi) in [(ox, dx, o.x - h, o.x + h), (oy, dy, o.y - h, o.y + h)] {
        if dir == 0.0 {
            if orig < lo || orig > hi {
                return None;
            }
        } else {
            let t1 = (lo - orig) / dir;
            let t2 = (hi - orig) / dir;
            tmin = tmin.max(t1.min(t2));
            tmax = tmax.min(t1.max(t2));
        }
    }
    if tmax < tmin || tmax < 0.0 {
        None
    } else {
        Some(tmin.max(0.0))
    }
}

fn ray_disc(cx: f64, cy: f64, r: f64, ox: f64, oy: f64, dx: f64, dy: f64) -> Option<f64> {
    let (lx, ly) = (cx - ox, cy - oy);
    let b = lx * dx + ly * dy;
    let c = lx * lx + ly * ly - r * r;
    if c <= 0.0 {
        return Some(0.0);
    }
    if b <= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        None
    } else {
        Some(b - disc.sqrt())
    }
}

/// Proximity activations for robot `index`: `max(0, 1 - d / range)` where `d`
/// is the distance from the body surface to the nearest hit along each ray.
pub fn sense_proximity(world: &World, index: usize) -> [f64; PROXIMITY_SENSORS] {
    let mut near = Vec::new();
    proximity_into(
        world,
        index,
        world.poses[index].heading.sin_cos(),
        &mut near,
    )
}

/// `trig` is `(sin, cos)` of the robot's heading.
pub(super) fn proximity_into(
    world: &World,
    index: usize,
    trig: (f64, f64),
    near: &mut Vec<usize>,
) -> [f64; PROXIMITY_SENSORS] {
    let body = &world.body;
    let me = world.poses[index];
    let range = body.proximity_range;
    let reach = range + body.radius;

    near.clear();
    let robot_cut = (reach + body.radius).powi(2);
    for (j, p) in world.poses.iter().enumerate() {
        if j != index && (p.x - me.x).powi(2) + (p.y - me.y).powi(2) < robot_cut {
            near.push(j);
        }
    }
    let obstacle_cut = (reach + OBSTACLE_HALF_DIAGONAL).powi(2);
    let near_obstacles = world
        .arena
        .obstacles
        .iter()
        .filter(|o| (o.x - me.x).powi(2) + (o.y - me.y).powi(2) < obstacle_cut);

    let side = world.arena.side_length;
    let wall_close = me.x < reach || me.y < reach || side - me.x < reach || side - me.y < reach;
    let (sh, ch) = trig;

    let mut hits = [f64::INFINITY; PROXIMITY_SENSORS];
    for (k, (s, c)) in ANGLE_SIN_COS.iter().enumerate() {
        let dx = ch * c - sh * s;
        let dy = sh * c + ch * s;
        if wall_close {
            hits[k] = ray_wall(side, me.x, me.y, dx, dy);
        }
        for &j in near.iter() {
            let p = world.poses[j];
            if let Some(t) = ray_disc(p.x, p.y, body.radius, me.x, me.y, dx, dy) {
                hits[k] = hits[k].min(t);
            }
        }
        for o in near_obstacles.clone() {
            if let Some(t) = ray_box(o, me.x, me.y, dx, dy) {
                hits[k] = hits[k].min(t);
            }
        }
    }
    hits.map(|t| {
        let d = (t - body.radius).max(0.0);
        if d < range {
            1.0 - d / range
        } else {
            0.0
        }
    })
}

const OBSTACLE_HALF_DIAGONAL: f64 = super::OBSTACLE_SIDE * std::f64::consts::FRAC_1_SQRT_2;

static ANGLE_SIN_COS: std::sync::LazyLock<[(f64, f64); PROXIMITY_SENSORS]> =
    std::sync::LazyLock::new(|| PROXIMITY_ANGLES_DEG.map(|a| a.to_radians().sin_cos()));

/// tan(22.5 deg), the half-width of a range-and-bearing cone.
const CONE_HALF_TAN: f64 = std::f64::consts::SQRT_2 - 1.0;

/// Body-frame positions of every other robot relative to robot `index`.
pub fn neighbour_offsets(world: &World, index: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(world.poses.len());
    offsets_into(
        &world.poses,
        index,
        world.poses[index].heading.sin_cos(),
        &mut out,
    );
    out
}

pub(super) fn offsets_into(
    poses: &[Pose],
    index: usize,
    trig: (f64, f64),
    out: &mut Vec<(f64, f64)>,
) {
    out.clear();
    let me = poses[index];
    let (s, c) = trig;
    for (j, p) in poses.iter().enumerate() {
        if j == index {
            continue;
        }
        let (dx, dy) = (p.x - me.x, p.y - me.y);
        out.push((dx * c + dy * s, -dx * s + dy * c));
    }
}

/// Bins body-frame offsets into eight 45 degree cones (cone 0 centred on the
/// heading, counter-clockwise). Each cone reports range/`rab_range` of its
/// closest neighbour strictly within range, or 1 when it has none.
pub fn rab_from_offsets(offsets: &[(f64, f64)], rab_range: f64) -> [f64; RAB_CONES] {
    let mut out = [1.0f64; RAB_CONES];
    let r2 = rab_range * rab_range;
    for &(x, y) in offsets {
        let d2 = x * x + y * y;
        if d2 >= r2 {
            continue;
        }
        let cone = cone_of(x, y);
        out[cone] = out[cone].min(d2.sqrt() / rab_range);
    }
    out
}

/// Cone index of the bearing `atan2(y, x)` rounded to the nearest multiple
/// of 45 degrees. The origin maps to cone 0.
fn cone_of(x: f64, y: f64) -> usize {
    let (ax, ay) = (x.abs(), y.abs());
    if ay < CONE_HALF_TAN * ax || (ax == 0.0 && ay == 0.0) {
        if x >= 0.0 {
            0
        } else {
            4
        }
    } else if ax < CONE_HALF_TAN * ay {
        if y > 0.0 {
            2
        } else {
            6
        }
    } else {
        match (x > 0.0, y > 0.0) {
            (true, true) => 1,
            (false, true) => 3,
            (false, false) => 5,
            (true, false) => 7,
        }
    }
}

pub fn sense_rab(world: &World, index: usize) -> [f64; RAB_CONES] {
    rab_from_offsets(&neighbour_offsets(world, index), world.body.rab_range)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ArenaSpec, RobotBody};
    use std::f64::consts::FRAC_PI_4;

    fn world(poses: Vec<Pose>) -> World {
        World {
            arena: ArenaSpec::empty(4.0),
            body: RobotBody::normal(),
            poses,
        }
    }

    #[test]
    fn lone_robot_at_center_senses_nothing() {
        let w = world(vec![Pose::new(2.0, 2.0, 0.3)]);
        assert_eq!(sense_proximity(&w, 0), [0.0; 7]);
        assert_eq!(sense_rab(&w, 0), [1.0; 8]);
    }

    #[test]
    fn wall_ahead_at_half_range() {
        // surface 0.055 m from the east wall
        let x = 4.0 - 0.06 - 0.055;
        let w = world(vec![Pose::new(x, 2.0, 0.0)]);
        let p = sense_proximity(&w, 0);
        assert!((p[2] - 0.5).abs() < 1e-9, "{p:?}");
        assert_eq!(p[5], 0.0);
        assert_eq!(p[6], 0.0);
    }

    #[test]
    fn wall_contact_saturates() {
        let w = world(vec![Pose::new(4.0 - 0.06, 2.0, 0.0)]);
        assert!((sense_proximity(&w, 0)[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn robot_behind_triggers_rear_sensors_only() {
        let w = world(vec![
            Pose::new(2.0, 2.0, 0.0),
            Pose::new(2.0 - 0.15, 2.0, 0.0),
        ]);
        let p = sense_proximity(&w, 0);
        assert!(p[..5].iter().all(|&a| a == 0.0));
        assert!(p[5] > 0.0 && p[6] > 0.0);
    }

    #[test]
    fn obstacle_ahead_is_detected() {
        let mut w = world(vec![Pose::new(2.0, 2.0, 0.0)]);
        // obstacle face 0.06 + 0.055 ahead of the center
        w.arena.obstacles.push(Obstacle {
            x: 2.0 + 0.06 + 0.055 + 0.125,
            y: 2.0,
        });
        assert!((sense_proximity(&w, 0)[2] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn neighbour_dead_ahead() {
        let w = world(vec![Pose::new(1.0, 1.0, 0.0), Pose::new(1.5, 1.0, 0.0)]);
        let rab = sense_rab(&w, 0);
        assert!((rab[0] - 0.5).abs() < 1e-12);
        assert!(rab[1..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rotated_robot_bins_by_body_frame() {
        // neighbour due north, robot facing north: cone 0
        let w = world(vec![
            Pose::new(1.0, 1.0, std::f64::consts::FRAC_PI_2),
            Pose::new(1.0, 1.3, 0.0),
        ]);
        let rab = sense_rab(&w, 0);
        assert!((rab[0] - 0.3).abs() < 1e-12);
        // and from the neighbour's view (facing east) the first robot is at -90 deg: cone 6
        let rab1 = sense_rab(&w, 1);
        assert!((rab1[6] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn cone_binning_matches_rounded_bearing() {
        for k in 0..3600 {
            let a = (k as f64 + 0.37) * 0.1f64.to_radians() - std::f64::consts::PI;
            let (y, x) = (0.7 * a.sin(), 0.7 * a.cos());
            let expected = ((y.atan2(x) / FRAC_PI_4).round() as i64).rem_euclid(8) as usize;
            assert_eq!(cone_of(x, y), expected, "angle {a}");
        }
    }

    #[test]
    fn coincident_neighbour_reads_zero() {
        assert_eq!(rab_from_offsets(&[(0.0, 0.0)], 1.0)[0], 0.0);
    }

    #[test]
    fn neighbour_out_of_range_is_ignored() {
        assert_eq!(rab_from_offsets(&[(1.0, 0.0), (0.0, 2.0)], 1.0), [1.0; 8]);
    }
}
