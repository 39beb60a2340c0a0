//! Reproducible synthetic street scenes.
//!
//! Each SBS environment is described by a [`ScenarioConfig`] (the six
//! augmented configurations plus anything custom) and generates object
//! tracks with true positions, heights, speeds and directions. The
//! block:non-block ratio is enforced by rejection sampling against the
//! geometric oracle.
//!
//! Heights and speeds are drawn from the row's named distribution through a
//! comonotone copula with mixing weight `height_speed_coupling`: short
//! objects (pedestrians, cyclists) move slowly, tall ones (vans, trucks)
//! ride the traffic flow. Both marginals stay exactly the configured named
//! law. Positions along the street are uniform, as for any steady flow
//! observed at a random instant.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{self, DistKind};
use crate::error::{Error, Result};
use crate::geometry::{self, BlockageLabel, Direction};
use crate::rng::SeedStream;

const REJECTION_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum SbsId {
    SBS1,
    SBS2,
    SBS3,
    SBS4,
    SBS5,
    SBS6,
}

impl SbsId {
    pub const ALL: [SbsId; 6] = [
        SbsId::SBS1,
        SbsId::SBS2,
        SbsId::SBS3,
        SbsId::SBS4,
        SbsId::SBS5,
        SbsId::SBS6,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SbsId::SBS1 => "SBS1",
            SbsId::SBS2 => "SBS2",
            SbsId::SBS3 => "SBS3",
            SbsId::SBS4 => "SBS4",
            SbsId::SBS5 => "SBS5",
            SbsId::SBS6 => "SBS6",
        }
    }
}

/// One augmented street environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub sbs_id: SbsId,
    pub distribution: DistKind,
    /// Street extent along x (m).
    pub street_x_range: [f64; 2],
    pub object_height_range: [f64; 2],
    /// Radar mount height H (m).
    pub radar_height: f64,
    #[serde(default)]
    pub user_x: f64,
    pub user_y: f64,
    /// User device height; the handheld default.
    #[serde(default = "default_user_z")]
    pub user_z: f64,
    pub object_y_range: [f64; 2],
    pub speed_range: [f64; 2],
    pub n_samples: usize,
    /// Fraction of blocking tracks in [0, 1].
    pub block_ratio: f64,
    /// SBS antenna position; co-located with the radar at (0, 0, H).
    pub antenna_pos: [f64; 3],
    /// Radar frame period for sensing and traces (s).
    #[serde(default = "default_frame_interval")]
    pub frame_interval: f64,
    /// Comonotone height/speed mixing weight in [0, 1]; 0 = independent.
    #[serde(default = "default_coupling")]
    pub height_speed_coupling: f64,
    pub rng_seed: u64,
}

fn default_user_z() -> f64 {
    1.5
}

fn default_frame_interval() -> f64 {
    0.25
}

fn default_coupling() -> f64 {
    0.9
}

impl ScenarioConfig {
    /// The six augmented configurations, full sample counts.
    pub fn table_row(sbs: SbsId, rng_seed: u64) -> Self {
        let (distribution, street, radar_height, user_y, obj_y_hi, speed_hi, n_samples, ratio) =
            match sbs {
                SbsId::SBS1 => (DistKind::Uniform, 20.0, 3.0, 12.0, 11.0, 9.0, 10_000, 0.10),
                SbsId::SBS2 => (DistKind::Gaussian, 30.0, 4.0, 13.0, 12.0, 11.0, 15_000, 0.25),
                SbsId::SBS3 => (DistKind::Gamma, 40.0, 5.0, 14.0, 13.0, 13.0, 30_000, 0.50),
                SbsId::SBS4 => (DistKind::Binomial, 50.0, 6.0, 15.0, 14.0, 15.0, 25_000, 0.75),
                SbsId::SBS5 => (DistKind::Poisson, 60.0, 7.0, 16.0, 15.0, 17.0, 20_000, 0.90),
                SbsId::SBS6 => (DistKind::Beta, 50.0, 5.0, 13.0, 12.0, 9.0, 2_000, 0.50),
            };
        ScenarioConfig {
            sbs_id: sbs,
            distribution,
            street_x_range: [-street, street],
            object_height_range: [1.0, 4.5],
            radar_height,
            user_x: 0.0,
            user_y,
            user_z: default_user_z(),
            object_y_range: [1.0, obj_y_hi],
            speed_range: [3.0, speed_hi],
            n_samples,
            block_ratio: ratio,
            antenna_pos: [0.0, 0.0, radar_height],
            frame_interval: default_frame_interval(),
            height_speed_coupling: default_coupling(),
            rng_seed,
        }
    }

    pub fn with_n_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let check_range = |name: &str, r: [f64; 2]| {
            if r[0] <= r[1] && r.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name}: invalid interval [{}, {}]", r[0], r[1])))
            }
        };
        check_range("street_x_range", self.street_x_range)?;
        check_range("object_height_range", self.object_height_range)?;
        check_range("object_y_range", self.object_y_range)?;
        check_range("speed_range", self.speed_range)?;
        if self.user_y <= self.object_y_range[1] {
            return Err(Error::Config(format!(
                "user_y {} must exceed the object lane range (max {})",
                self.user_y, self.object_y_range[1]
            )));
        }
        if self.object_y_range[0] <= 0.0 {
            return Err(Error::Config("object lanes must satisfy y > 0".into()));
        }
        if self.user_z <= 0.0 {
            return Err(Error::Config("user_z must be positive".into()));
        }
        if self.speed_range[0] <= 0.0 {
            return Err(Error::Config("speeds must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.block_ratio) {
            return Err(Error::Config(format!("block_ratio {} outside [0, 1]", self.block_ratio)));
        }
        if !(0.0..=1.0).contains(&self.height_speed_coupling) {
            return Err(Error::Config("height_speed_coupling outside [0, 1]".into()));
        }
        if self.antenna_pos[2] != self.radar_height {
            return Err(Error::Config(
                "antenna and radar are co-located: antenna_pos z must equal radar_height".into(),
            ));
        }
        if self.frame_interval <= 0.0 {
            return Err(Error::Config("frame_interval must be positive".into()));
        }
        Ok(())
    }

    pub fn user(&self) -> UserPlacement {
        UserPlacement { x: self.user_x, y: self.user_y, z: self.user_z }
    }
}

/// A moving object: vertical segment of height `h_o` travelling along x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub x0: f64,
    pub y0: f64,
    #[serde(rename = "h")]
    pub h_o: f64,
    #[serde(rename = "v")]
    pub v_true: f64,
    pub dir: Direction,
    #[serde(rename = "spawn")]
    pub spawn_time: f64,
}

impl ObjectTrack {
    /// Position at absolute time `t` (the track exists from its spawn time).
    pub fn x_at(&self, t: f64) -> f64 {
        self.x0 + self.dir.sign() * self.v_true * (t - self.spawn_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserPlacement {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UserPlacement {
    pub fn pos(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// A generated environment: ground truth only; labels are recomputed from
/// the geometry oracle on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub user: UserPlacement,
    pub antenna: [f64; 3],
    pub tracks: Vec<ObjectTrack>,
}

impl Scenario {
    /// Geometric label of one track at its spawn position.
    pub fn label_track(&self, track: &ObjectTrack) -> Result<BlockageLabel> {
        geometry::label_object(
            self.antenna,
            self.user.pos(),
            track.x0,
            track.y0,
            track.h_o,
            track.v_true,
            track.dir,
        )
    }

    pub fn oracle_labels(&self) -> Result<Vec<BlockageLabel>> {
        self.tracks.iter().map(|t| self.label_track(t)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Advances a track by `dt >= 0` seconds along its direction.
pub fn advance(track: &ObjectTrack, dt: f64) -> Result<ObjectTrack> {
    if dt < 0.0 {
        return Err(Error::Argument(format!("advance: negative dt {dt}")));
    }
    Ok(ObjectTrack {
        x0: track.x0 + track.dir.sign() * track.v_true * dt,
        ..*track
    })
}

/// One joint draw of (x, y, h, v, dir) from the configured environment.
fn draw_track(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> ObjectTrack {
    let x0 = dist::span(cfg.street_x_range, rng.gen::<f64>());
    let y0 = dist::span(
        cfg.object_y_range,
        dist::unit_quantile(cfg.distribution, rng.gen::<f64>()),
    );
    let u = rng.gen::<f64>();
    let coupled = rng.gen::<f64>() < cfg.height_speed_coupling;
    let (u_h, u_v) = if coupled {
        (u, u)
    } else {
        (rng.gen::<f64>(), rng.gen::<f64>())
    };
    let h_o = dist::span(cfg.object_height_range, dist::unit_quantile(cfg.distribution, u_h));
    let v_true = dist::span(cfg.speed_range, dist::unit_quantile(cfg.distribution, u_v));
    let dir = if rng.gen::<bool>() { Direction::PlusX } else { Direction::MinusX };
    ObjectTrack { x0, y0, h_o, v_true, dir, spawn_time: 0.0 }
}

/// Builds a scenario whose blocked-track count equals
/// `round(n_samples * block_ratio)` exactly, by rejection sampling each
/// track against the geometric oracle.
pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = SeedStream::new(cfg.rng_seed).stream(&format!("scene/{}", cfg.sbs_id.name()));
    let user = cfg.user();
    let antenna = cfg.antenna_pos;

    let n = cfg.n_samples;
    let n_blocked = (n as f64 * cfg.block_ratio).round() as usize;
    let mut want: Vec<bool> = (0..n).map(|i| i < n_blocked).collect();
    // Fisher-Yates off the same stream so order is reproducible
    for i in (1..want.len()).rev() {
        let j = rng.gen_range(0..=i);
        want.swap(i, j);
    }

    let mut tracks = Vec::with_capacity(n);
    for (idx, desired) in want.iter().enumerate() {
        let mut accepted = None;
        for _try in 0..REJECTION_CAP {
            let t = draw_track(cfg, &mut rng);
            let label = geometry::label_object(
                antenna,
                user.pos(),
                t.x0,
                t.y0,
                t.h_o,
                t.v_true,
                t.dir,
            )?;
            if label.blocked == *desired {
                accepted = Some(t);
                break;
            }
        }
        match accepted {
            Some(t) => tracks.push(t),
            None => {
                return Err(Error::Generation(format!(
                    "{}: no {} track found for slot {idx} within {REJECTION_CAP} tries \
                     (ratio {} may be geometrically unreachable)",
                    cfg.sbs_id.name(),
                    if *desired { "blocking" } else { "non-blocking" },
                    cfg.block_ratio,
                )))
            }
        }
    }

    Ok(Scenario { config: cfg.clone(), user, antenna, tracks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(sbs: SbsId, n: usize) -> ScenarioConfig {
        ScenarioConfig::table_row(sbs, 7).with_n_samples(n)
    }

    #[test]
    fn table_row_sbs1_matches() {
        let c = ScenarioConfig::table_row(SbsId::SBS1, 0);
        assert_eq!(c.radar_height, 3.0);
        assert_eq!(c.user_y, 12.0);
        assert_eq!(c.n_samples, 10_000);
        assert_eq!(c.block_ratio, 0.10);
        assert_eq!(c.street_x_range, [-20.0, 20.0]);
    }

    #[test]
    fn build_deterministic() {
        let cfg = small(SbsId::SBS1, 300);
        let a = build_scenario(&cfg).unwrap();
        let b = build_scenario(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn empty_scenario() {
        let s = build_scenario(&small(SbsId::SBS1, 0)).unwrap();
        assert!(s.tracks.is_empty());
    }

    #[test]
    fn ratio_exact_within_one_track() {
        for (sbs, n) in [(SbsId::SBS3, 1000), (SbsId::SBS1, 500), (SbsId::SBS5, 400)] {
            let cfg = small(sbs, n);
            let s = build_scenario(&cfg).unwrap();
            let blocked = s
                .oracle_labels()
                .unwrap()
                .iter()
                .filter(|l| l.blocked)
                .count();
            let target = (n as f64 * cfg.block_ratio).round();
            assert!(
                (blocked as f64 - target).abs() <= 1.0,
                "{sbs:?}: {blocked} blocked vs target {target}"
            );
        }
    }

    #[test]
    fn containment_of_all_sampled_fields() {
        for sbs in SbsId::ALL {
            let cfg = small(sbs, 400);
            let s = build_scenario(&cfg).unwrap();
            for t in &s.tracks {
                assert!(t.x0 >= cfg.street_x_range[0] && t.x0 <= cfg.street_x_range[1]);
                assert!(t.y0 >= cfg.object_y_range[0] && t.y0 <= cfg.object_y_range[1]);
                assert!(t.h_o >= cfg.object_height_range[0] && t.h_o <= cfg.object_height_range[1]);
                assert!(t.v_true >= cfg.speed_range[0] && t.v_true <= cfg.speed_range[1]);
            }
        }
    }

    #[test]
    fn advance_basics() {
        let t = ObjectTrack {
            x0: 0.0,
            y0: 5.0,
            h_o: 2.0,
            v_true: 3.0,
            dir: Direction::PlusX,
            spawn_time: 0.0,
        };
        assert_eq!(advance(&t, 1.0).unwrap().x0, 3.0);
        assert_eq!(advance(&t, 0.0).unwrap(), t);
        let back = ObjectTrack { dir: Direction::MinusX, ..t };
        assert_eq!(advance(&back, 2.0).unwrap().x0, -6.0);
        assert!(advance(&t, -0.5).is_err());
    }

    #[test]
    fn advance_composes() {
        let t = ObjectTrack {
            x0: 1.25,
            y0: 5.0,
            h_o: 2.0,
            v_true: 3.7,
            dir: Direction::MinusX,
            spawn_time: 0.0,
        };
        let mut rng = SeedStream::new(3).stream("kinematics");
        for _ in 0..200 {
            let a = rng.gen_range(0.0..5.0);
            let b = rng.gen_range(0.0..5.0);
            let two = advance(&advance(&t, a).unwrap(), b).unwrap();
            let one = advance(&t, a + b).unwrap();
            assert!((two.x0 - one.x0).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_lossless() {
        let s = build_scenario(&small(SbsId::SBS2, 50)).unwrap();
        let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
        for (a, b) in s.tracks.iter().zip(back.tracks.iter()) {
            assert!((a.x0 - b.x0).abs() < 1e-9);
            assert!((a.v_true - b.v_true).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = small(SbsId::SBS1, 10);
        cfg.user_y = 5.0; // below the object lane range
        assert!(build_scenario(&cfg).is_err());
        let mut cfg2 = small(SbsId::SBS1, 10);
        cfg2.block_ratio = 1.5;
        assert!(cfg2.validate().is_err());
    }

    #[test]
    fn impossible_ratio_names_constraint() {
        // radar so high that no object can ever block: blocking draws impossible
        let mut cfg = small(SbsId::SBS1, 10);
        cfg.radar_height = 80.0;
        cfg.antenna_pos = [0.0, 0.0, 80.0];
        cfg.block_ratio = 0.5;
        let err = build_scenario(&cfg).unwrap_err();
        assert!(matches!(err, Error::Generation(_)), "got {err:?}");
    }
}
