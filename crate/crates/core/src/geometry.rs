//! Localisation vectors, the 3D line-of-sight line, the intersection/height
//! blockage test, the two-case blocking rule, and the time-to-block label.
//!
//! Conventions: the serving SBS sits at the Cartesian origin with its
//! antenna/radar at height `H`; all actors have `y >= 0`; objects move along
//! the street (x axis) in fixed lanes. The polar angle θ = atan2(y, x) is
//! restricted to (0, π) and is strictly decreasing in x for fixed y > 0,
//! which is what makes the two-case blocking rule work.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Street-parallel movement direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PlusX,
    #[serde(rename = "-x")]
    MinusX,
}

impl Direction {
    /// +1.0 for +x, -1.0 for -x.
    pub fn sign(self) -> f64 {
        match self {
            Direction::PlusX => 1.0,
            Direction::MinusX => -1.0,
        }
    }
}

/// Six-dimensional object descriptor [r_o, x_o, y_o, θ_o, v_o, n_o].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectLocalisation {
    /// Ground-projected range from the SBS (m).
    pub r_o: f64,
    pub x_o: f64,
    pub y_o: f64,
    /// Angle between the +x axis and the SBS→object ray (rad), in (0, π).
    pub theta_o: f64,
    /// Object speed (m/s); street-parallel or radial per the velocity mode.
    pub v_o: f64,
    pub n_o: Direction,
}

/// Four-dimensional user descriptor [r_u, x_u, y_u, θ_u].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLocalisation {
    pub r_u: f64,
    pub x_u: f64,
    pub y_u: f64,
    pub theta_u: f64,
}

/// Parametric 3D line through the antenna and the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LosLine {
    pub anchor: [f64; 3],
    pub direction: [f64; 3],
}

impl LosLine {
    /// Point at parameter η (η=0 is the anchor, η=1 the user).
    pub fn point_at(&self, eta: f64) -> [f64; 3] {
        [
            self.anchor[0] + eta * self.direction[0],
            self.anchor[1] + eta * self.direction[1],
            self.anchor[2] + eta * self.direction[2],
        ]
    }
}

/// Blockage bit plus remaining time. `time_to_block` is -1.0 exactly when
/// the sample is non-blocking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockageLabel {
    pub blocked: bool,
    pub time_to_block: f64,
}

/// Outcome of the two-case blockage test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockageStatus {
    pub blocked: bool,
    /// Object lane outside (0, y_u); forced non-blocking.
    pub out_of_corridor: bool,
}

/// Object localisation from a slant-range measurement.
///
/// `rho` is the slant range to the object's upper edge, `phi` the azimuth
/// AoA (0 at broadside, positive toward +x), `h_o` the object height and
/// `radar_height` the radar mount height.
pub fn object_localisation(
    rho: f64,
    phi: f64,
    speed: f64,
    direction: Direction,
    radar_height: f64,
    h_o: f64,
) -> Result<ObjectLocalisation> {
    let dz = (radar_height - h_o).abs();
    if rho < dz {
        return Err(Error::InvalidSlantRange { rho, min: dz });
    }
    let r_o = (rho * rho - dz * dz).sqrt();
    let x_o = r_o * phi.sin();
    let y_o = r_o * phi.cos();
    Ok(ObjectLocalisation {
        r_o,
        x_o,
        y_o,
        theta_o: y_o.atan2(x_o),
        v_o: speed,
        n_o: direction,
    })
}

/// User localisation from ground coordinates.
pub fn user_localisation(x_u: f64, y_u: f64) -> UserLocalisation {
    UserLocalisation {
        r_u: x_u.hypot(y_u),
        x_u,
        y_u,
        theta_u: y_u.atan2(x_u),
    }
}

/// Line through the antenna and the user: direction = user − antenna.
pub fn los_line(antenna: [f64; 3], user: [f64; 3]) -> Result<LosLine> {
    let direction = [user[0] - antenna[0], user[1] - antenna[1], user[2] - antenna[2]];
    if direction.iter().all(|d| *d == 0.0) {
        return Err(Error::DegenerateLine("antenna and user coincide".into()));
    }
    Ok(LosLine { anchor: antenna, direction })
}

/// Intersection of the line with the plane y = `y_plane`.
pub fn intersect_plane(line: &LosLine, y_plane: f64) -> Result<[f64; 3]> {
    let varsigma = line.direction[1];
    if varsigma == 0.0 {
        if y_plane == line.anchor[1] {
            return Err(Error::DegenerateLine(
                "line lies within the requested plane".into(),
            ));
        }
        return Err(Error::NoIntersection(format!(
            "line parallel to plane y={y_plane}"
        )));
    }
    let eta = (y_plane - line.anchor[1]) / varsigma;
    Ok(line.point_at(eta))
}

/// Two-case blocking rule: an object tall enough to reach the LoS height
/// over its own lane blocks only while it approaches the crossing point.
///
/// The boundary h_o = z_i counts as a blockage.
pub fn blockage_status(
    obj: &ObjectLocalisation,
    user: &UserLocalisation,
    h_o: f64,
    z_i: f64,
) -> BlockageStatus {
    if obj.y_o <= 0.0 || obj.y_o >= user.y_u {
        return BlockageStatus { blocked: false, out_of_corridor: true };
    }
    let approaching = (obj.theta_o < user.theta_u && obj.n_o == Direction::MinusX)
        || (obj.theta_o > user.theta_u && obj.n_o == Direction::PlusX);
    BlockageStatus {
        blocked: h_o >= z_i && approaching,
        out_of_corridor: false,
    }
}

/// Remaining time until the object's x reaches the crossing point x_i.
pub fn time_to_block(obj: &ObjectLocalisation, x_i: f64, blocked: bool) -> Result<f64> {
    if !blocked {
        return Ok(-1.0);
    }
    if obj.v_o == 0.0 {
        return Err(Error::UndefinedTime);
    }
    Ok((obj.x_o - x_i).abs() / obj.v_o)
}

/// Full oracle label for an object at (x, y) with height `h`, speed `v` and
/// direction `dir`, against the LoS between `antenna` and `user`.
pub fn label_object(
    antenna: [f64; 3],
    user: [f64; 3],
    x: f64,
    y: f64,
    h: f64,
    v: f64,
    dir: Direction,
) -> Result<BlockageLabel> {
    let line = los_line(antenna, user)?;
    let crossing = intersect_plane(&line, y)?;
    let (x_i, z_i) = (crossing[0], crossing[2]);
    let obj = ObjectLocalisation {
        r_o: (x - antenna[0]).hypot(y - antenna[1]),
        x_o: x - antenna[0],
        y_o: y - antenna[1],
        theta_o: (y - antenna[1]).atan2(x - antenna[0]),
        v_o: v,
        n_o: dir,
    };
    let u = user_localisation(user[0] - antenna[0], user[1] - antenna[1]);
    let status = blockage_status(&obj, &u, h, z_i);
    let t_b = time_to_block(&obj, x_i - antenna[0], status.blocked)?;
    Ok(BlockageLabel { blocked: status.blocked, time_to_block: t_b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI};

    #[test]
    fn localisation_345_triangle() {
        // rho=5, H=4, h=1 -> ground range 4; broadside puts it on the y axis
        let o = object_localisation(5.0, 0.0, 2.0, Direction::PlusX, 4.0, 1.0).unwrap();
        assert!((o.r_o - 4.0).abs() < 1e-12);
        assert!(o.x_o.abs() < 1e-12);
        assert!((o.y_o - 4.0).abs() < 1e-12);
        assert!((o.theta_o - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn localisation_off_broadside() {
        // direct trigonometry: r_o=4 at phi=30 deg -> x=2, y=2*sqrt(3), theta=60 deg
        let o = object_localisation(5.0, FRAC_PI_6, 2.0, Direction::PlusX, 4.0, 1.0).unwrap();
        assert!((o.x_o - 2.0).abs() < 1e-12);
        assert!((o.y_o - 2.0 * 3.0_f64.sqrt()).abs() < 1e-12);
        assert!((o.theta_o - FRAC_PI_3).abs() < 1e-12);
    }

    #[test]
    fn localisation_invalid_slant() {
        let err = object_localisation(2.0, 0.0, 1.0, Direction::PlusX, 7.0, 1.0);
        assert!(matches!(err, Err(Error::InvalidSlantRange { .. })));
    }

    #[test]
    fn localisation_invariant_r_squared() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let rho = rng.gen_range(3.0..50.0);
            let phi = rng.gen_range(-1.0..1.0);
            let o = object_localisation(rho, phi, 1.0, Direction::PlusX, 3.0, 1.5).unwrap();
            assert!((o.r_o * o.r_o - (o.x_o * o.x_o + o.y_o * o.y_o)).abs() < 1e-9);
            assert!((0.0..=PI).contains(&o.theta_o));
        }
    }

    #[test]
    fn los_line_direct_subtraction() {
        let l = los_line([0.0, 0.0, 3.0], [0.0, 12.0, 1.5]).unwrap();
        assert_eq!(l.direction, [0.0, 12.0, -1.5]);
        assert_eq!(l.point_at(1.0), [0.0, 12.0, 1.5]);
        assert_eq!(l.point_at(0.0), [0.0, 0.0, 3.0]);
    }

    #[test]
    fn los_line_degenerate() {
        assert!(los_line([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn los_midpoint_is_mean_of_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let a = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(0.0..9.0)];
            let u = [rng.gen_range(-5.0..5.0), rng.gen_range(6.0..20.0), rng.gen_range(0.5..2.0)];
            let l = los_line(a, u).unwrap();
            let mid = l.point_at(0.5);
            for i in 0..3 {
                assert!((mid[i] - 0.5 * (a[i] + u[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn intersect_midplane() {
        let l = los_line([0.0, 0.0, 3.0], [0.0, 12.0, 1.5]).unwrap();
        let p = intersect_plane(&l, 6.0).unwrap();
        assert_eq!(p, [0.0, 6.0, 2.25]);
        // y=0 gives back the antenna point
        assert_eq!(intersect_plane(&l, 0.0).unwrap(), [0.0, 0.0, 3.0]);
    }

    #[test]
    fn intersect_parallel_and_degenerate() {
        let l = LosLine { anchor: [0.0, 2.0, 3.0], direction: [1.0, 0.0, -0.5] };
        assert!(matches!(intersect_plane(&l, 6.0), Err(Error::NoIntersection(_))));
        assert!(matches!(intersect_plane(&l, 2.0), Err(Error::DegenerateLine(_))));
    }

    #[test]
    fn intersect_matches_dense_parametric_sampling() {
        // brute-force oracle: walk the line in 1e5 eta steps and keep the
        // point whose y is closest to the requested plane
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = [rng.gen_range(-3.0..3.0), 0.0, rng.gen_range(2.0..8.0)];
            let u = [rng.gen_range(-3.0..3.0), rng.gen_range(10.0..18.0), 1.5];
            let y_plane = rng.gen_range(a[1] + 0.5..u[1] - 0.5);
            let line = los_line(a, u).unwrap();
            let exact = intersect_plane(&line, y_plane).unwrap();

            let mut best = line.point_at(0.0);
            let mut best_err = f64::INFINITY;
            for step in 0..=100_000u32 {
                let eta = step as f64 / 100_000.0;
                let p = line.point_at(eta);
                let err = (p[1] - y_plane).abs();
                if err < best_err {
                    best_err = err;
                    best = p;
                }
            }
            for i in 0..3 {
                assert!(
                    (exact[i] - best[i]).abs() < 1e-4,
                    "axis {i}: exact {} vs sampled {}",
                    exact[i],
                    best[i]
                );
            }
        }
    }

    fn obj_at(x: f64, y: f64, v: f64, dir: Direction) -> ObjectLocalisation {
        ObjectLocalisation {
            r_o: x.hypot(y),
            x_o: x,
            y_o: y,
            theta_o: y.atan2(x),
            v_o: v,
            n_o: dir,
        }
    }

    #[test]
    fn blockage_tall_approaching_blocks() {
        // h=3 above z_i=2.25, theta_o < theta_u, moving -x
        let user = user_localisation(0.0, 12.0);
        let obj = obj_at(4.0, 6.0, 3.0, Direction::MinusX);
        assert!(obj.theta_o < user.theta_u);
        let s = blockage_status(&obj, &user, 3.0, 2.25);
        assert!(s.blocked && !s.out_of_corridor);
    }

    #[test]
    fn blockage_short_never_blocks() {
        let user = user_localisation(0.0, 12.0);
        for dir in [Direction::PlusX, Direction::MinusX] {
            let obj = obj_at(4.0, 6.0, 3.0, dir);
            assert!(!blockage_status(&obj, &user, 2.0, 2.25).blocked);
        }
    }

    #[test]
    fn blockage_boundary_height_counts() {
        let user = user_localisation(0.0, 12.0);
        let approaching = obj_at(4.0, 6.0, 3.0, Direction::MinusX);
        let receding = obj_at(4.0, 6.0, 3.0, Direction::PlusX);
        assert!(blockage_status(&approaching, &user, 2.25, 2.25).blocked);
        assert!(!blockage_status(&receding, &user, 2.25, 2.25).blocked);
    }

    #[test]
    fn blockage_out_of_corridor_flagged() {
        let user = user_localisation(0.0, 12.0);
        let obj = obj_at(4.0, 13.0, 3.0, Direction::MinusX);
        let s = blockage_status(&obj, &user, 4.0, 2.0);
        assert!(!s.blocked && s.out_of_corridor);
    }

    #[test]
    fn time_to_block_examples() {
        let obj = obj_at(-9.0, 6.0, 3.0, Direction::PlusX);
        assert_eq!(time_to_block(&obj, 0.0, true).unwrap(), 3.0);
        assert_eq!(time_to_block(&obj, 0.0, false).unwrap(), -1.0);
        let stopped = obj_at(-9.0, 6.0, 0.0, Direction::PlusX);
        assert!(matches!(time_to_block(&stopped, 0.0, true), Err(Error::UndefinedTime)));
    }

    #[test]
    fn time_to_block_matches_kinematic_stepping() {
        // stepping oracle: advance x in 1 ms ticks until it crosses x_i
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..1000 {
            let x = rng.gen_range(1.0..30.0);
            let v = rng.gen_range(3.0..17.0);
            let obj = obj_at(x, 6.0, v, Direction::MinusX);
            let closed = time_to_block(&obj, 0.0, true).unwrap();

            let mut pos = x;
            let mut t = 0.0;
            while pos > 0.0 {
                pos -= v * 1e-3;
                t += 1e-3;
                assert!(t < 40.0);
            }
            assert!((closed - t).abs() <= 1.5e-3, "closed {closed} vs stepped {t}");
        }
    }

    #[test]
    fn theta_strictly_decreasing_in_x() {
        let y: f64 = 5.0;
        let mut prev = PI;
        for i in 0..200 {
            let x = -20.0 + i as f64 * 0.2;
            let theta = y.atan2(x);
            assert!(theta < prev);
            prev = theta;
        }
    }

    #[test]
    fn scale_invariance_of_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let x = rng.gen_range(-20.0..20.0);
            let y = rng.gen_range(1.0..11.0);
            let h = rng.gen_range(1.0..4.5);
            let v = rng.gen_range(3.0..9.0);
            let dir = if rng.gen::<bool>() { Direction::PlusX } else { Direction::MinusX };
            let a = [0.0, 0.0, 3.0];
            let u = [0.0, 12.0, 1.5];
            let base = label_object(a, u, x, y, h, v, dir).unwrap();
            for c in [0.5, 2.0, 7.0] {
                let scaled = label_object(
                    [0.0, 0.0, 3.0 * c],
                    [0.0, 12.0 * c, 1.5 * c],
                    x * c,
                    y * c,
                    h * c,
                    v * c,
                    dir,
                )
                .unwrap();
                assert_eq!(base.blocked, scaled.blocked);
                if base.blocked {
                    assert!((base.time_to_block - scaled.time_to_block).abs() < 1e-9);
                } else {
                    assert_eq!(scaled.time_to_block, -1.0);
                }
            }
        }
    }
}
