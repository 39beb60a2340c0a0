//! Turns scenarios into labeled user-object samples, either through the
//! scene oracle (fast path for learning experiments) or through the full
//! radar chain (synthesize → detect → localise), and handles the dataset
//! CSV format.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, ObjectLocalisation, UserLocalisation};
use crate::nn::{Sample, Scaler, N_FEATURES};
use crate::radar::{self, RadarConfig, TargetEcho};
use crate::rng::SeedStream;
use crate::scene::{ObjectTrack, Scenario, ScenarioConfig};

/// Where sample features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    /// Ground-truth geometry.
    Oracle,
    /// Synthesized frames, cube processing and peak detection.
    Radar,
}

/// Which speed lands in the v_o feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityMode {
    /// Street-parallel ground-truth speed (from displacement, in the radar
    /// path).
    True,
    /// Signed radial speed as measured.
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizeOptions {
    pub source: FeatureSource,
    pub velocity_mode: VelocityMode,
    /// Gaussian noise on the oracle object height (the stand-in for the
    /// height classifier).
    pub height_noise_std: f64,
    pub radar: RadarConfig,
    pub detect_threshold_db: f64,
    /// Azimuth field of view of the receive array as |sin φ|. Near
    /// end-fire the short aperture cannot split ground range into x and y,
    /// so such rows are flagged rather than sensed.
    pub fov_max_sin_phi: f64,
    /// Displacement gate: an implied street speed above this is a broken
    /// association (e.g. a wrapped angle peak), not a measurement.
    pub max_plausible_speed: f64,
    /// Frames in the monitoring history of one sample (>= 2). The lane
    /// estimate averages across them; direction and speed come from the
    /// first-to-last displacement.
    pub sensing_frames: usize,
}

impl Default for FeaturizeOptions {
    fn default() -> Self {
        FeaturizeOptions {
            source: FeatureSource::Oracle,
            velocity_mode: VelocityMode::True,
            height_noise_std: 0.0,
            radar: RadarConfig::default(),
            detect_threshold_db: 15.0,
            fov_max_sin_phi: 0.88,
            max_plausible_speed: 30.0,
            sensing_frames: 6,
        }
    }
}

/// Why a radar-path row carries no usable sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Slant range beyond the unambiguous range; the beat frequency wraps.
    Aliased,
    /// Object outside the array's azimuth field of view.
    OutOfFov,
    /// No detection above threshold in one of the two frames.
    NoDetection,
    /// Measured slant shorter than the radar/object height gap.
    InvalidSlant,
    /// Two-frame displacement under the resolution floor.
    AmbiguousDirection,
    /// Two-frame displacement implies an impossible speed.
    ImplausibleTrack,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub sample: Sample,
    pub status: RowStatus,
}

/// The feature vector [r_u, x_u, y_u, θ_u, r_o, x_o, y_o, θ_o, v_o, n_o].
pub fn feature_vector(user: &UserLocalisation, obj: &ObjectLocalisation) -> [f64; N_FEATURES] {
    [
        user.r_u,
        user.x_u,
        user.y_u,
        user.theta_u,
        obj.r_o,
        obj.x_o,
        obj.y_o,
        obj.theta_o,
        obj.v_o,
        obj.n_o.sign(),
    ]
}

fn oracle_object(track: &ObjectTrack, antenna: [f64; 3]) -> ObjectLocalisation {
    let x = track.x0 - antenna[0];
    let y = track.y0 - antenna[1];
    ObjectLocalisation {
        r_o: x.hypot(y),
        x_o: x,
        y_o: y,
        theta_o: y.atan2(x),
        v_o: track.v_true,
        n_o: track.dir,
    }
}

fn radial_speed(track: &ObjectTrack, antenna: [f64; 3], radar_height: f64) -> f64 {
    let x = track.x0 - antenna[0];
    let y = track.y0 - antenna[1];
    let slant = (x * x + y * y + (radar_height - track.h_o).powi(2)).sqrt();
    if slant == 0.0 {
        0.0
    } else {
        x * track.dir.sign() * track.v_true / slant
    }
}

/// Oracle featurization of one track at its spawn position.
pub fn featurize_track_oracle(
    scenario: &Scenario,
    track: &ObjectTrack,
    opts: &FeaturizeOptions,
    noise: &mut rand_chacha::ChaCha8Rng,
) -> Result<Row> {
    let cfg = &scenario.config;
    let user = geometry::user_localisation(
        scenario.user.x - scenario.antenna[0],
        scenario.user.y - scenario.antenna[1],
    );
    let mut obj = oracle_object(track, scenario.antenna);
    if opts.velocity_mode == VelocityMode::Measured {
        obj.v_o = radial_speed(track, scenario.antenna, cfg.radar_height);
    }
    let h_est = observed_height(track.h_o, opts, noise);
    let label = label_from_localisation(scenario, &obj, h_est, track)?;
    Ok(Row {
        sample: Sample {
            features: feature_vector(&user, &obj),
            label_b: label.0,
            label_t: label.1,
        },
        status: RowStatus::Ok,
    })
}

fn observed_height(
    true_h: f64,
    opts: &FeaturizeOptions,
    noise: &mut rand_chacha::ChaCha8Rng,
) -> f64 {
    if opts.height_noise_std > 0.0 {
        let u1: f64 = noise.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = noise.gen::<f64>();
        true_h
            + opts.height_noise_std
                * (-2.0 * u1.ln()).sqrt()
                * (std::f64::consts::TAU * u2).cos()
    } else {
        true_h
    }
}

/// Label from a (possibly sensed) localisation: blockage rule against the
/// LoS crossing over the object's own lane, time from x-distance and the
/// feature speed.
fn label_from_localisation(
    scenario: &Scenario,
    obj: &ObjectLocalisation,
    h_est: f64,
    track: &ObjectTrack,
) -> Result<(bool, f64)> {
    let user = geometry::user_localisation(
        scenario.user.x - scenario.antenna[0],
        scenario.user.y - scenario.antenna[1],
    );
    let line = geometry::los_line(
        [0.0, 0.0, scenario.antenna[2]],
        [user.x_u, user.y_u, scenario.user.z],
    )?;
    let crossing = geometry::intersect_plane(&line, obj.y_o)?;
    let status = geometry::blockage_status(obj, &user, h_est, crossing[2]);
    // T_b always uses the street-parallel speed
    let mut for_time = *obj;
    for_time.v_o = track.v_true;
    let t_b = geometry::time_to_block(&for_time, crossing[0], status.blocked)?;
    Ok((status.blocked, t_b))
}

/// Radar-path featurization: a short monitoring history of frames one
/// interval apart ending at the labeled position. The lane estimate
/// averages across the history; direction and speed come from the
/// first-to-last displacement.
pub fn featurize_track_radar(
    scenario: &Scenario,
    track: &ObjectTrack,
    opts: &FeaturizeOptions,
    noise: &mut rand_chacha::ChaCha8Rng,
) -> Result<Row> {
    let cfg = &scenario.config;
    let dt = cfg.frame_interval;
    let radar_pos = scenario.antenna;
    let h = cfg.radar_height;
    let k = opts.sensing_frames.max(2);

    let fallback = featurize_track_oracle(scenario, track, opts, noise)?;

    // history positions: the last frame observes the labeled position
    let at_step = |i: usize| ObjectTrack {
        x0: track.x0 - track.dir.sign() * track.v_true * dt * (k - 1 - i) as f64,
        ..*track
    };

    let geom = |tr: &ObjectTrack| {
        let x = tr.x0 - radar_pos[0];
        let y = tr.y0 - radar_pos[1];
        let slant = (x * x + y * y + (h - tr.h_o).powi(2)).sqrt();
        let sin_phi = if x.hypot(y) > 0.0 { x / x.hypot(y) } else { 0.0 };
        (slant, sin_phi)
    };
    let in_view = |tr: &ObjectTrack| -> Option<RowStatus> {
        let (slant, sin_phi) = geom(tr);
        if slant > opts.radar.unambiguous_range() {
            Some(RowStatus::Aliased)
        } else if sin_phi.abs() > opts.fov_max_sin_phi {
            Some(RowStatus::OutOfFov)
        } else {
            None
        }
    };
    // the labeled position itself must be observable
    if let Some(status) = in_view(track) {
        return Ok(Row { status, ..fallback });
    }
    // monitoring starts when the object enters the field of view: keep as
    // much trailing history as is observable, up to `k` frames
    let first_step = (0..k)
        .find(|i| in_view(&at_step(*i)).is_none())
        .expect("label position is observable");
    if first_step == k - 1 {
        // a single observable frame cannot give direction
        return Ok(Row {
            status: in_view(&at_step(k - 2)).unwrap_or(RowStatus::OutOfFov),
            ..fallback
        });
    }

    let h_est = observed_height(track.h_o, opts, noise);
    let dz = (h - h_est).abs();
    let mut xs = Vec::with_capacity(k);
    let mut ys = Vec::with_capacity(k);
    let mut times = Vec::with_capacity(k);
    let mut last_det = None;
    for i in first_step..k {
        let tr = at_step(i);
        let x = tr.x0 - radar_pos[0];
        let y = tr.y0 - radar_pos[1];
        let echo = TargetEcho {
            range: geom(&tr).0,
            radial_speed: radial_speed(&tr, radar_pos, h),
            azimuth: x.atan2(y),
            reflectivity: 1.0,
        };
        let frame = radar::synthesize_frame(&[echo], &opts.radar, noise, i as f64 * dt)?;
        let cube = radar::process_cube(&frame, &opts.radar)?;
        let Some(det) = radar::detect(&cube, opts.detect_threshold_db).into_iter().next() else {
            return Ok(Row { status: RowStatus::NoDetection, ..fallback });
        };
        if det.rho < dz {
            return Ok(Row { status: RowStatus::InvalidSlant, ..fallback });
        }
        let ground = (det.rho * det.rho - dz * dz).sqrt();
        xs.push(ground * det.phi.sin());
        ys.push(ground * det.phi.cos());
        times.push(i as f64 * dt);
        last_det = Some(det);
    }
    let d_last = last_det.expect("at least two frames sensed");
    let n_frames = xs.len();

    // least-squares x(t) over the history: slope = street velocity
    let t_mean = times.iter().sum::<f64>() / n_frames as f64;
    let x_mean = xs.iter().sum::<f64>() / n_frames as f64;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (t, x) in times.iter().zip(xs.iter()) {
        cov += (t - t_mean) * (x - x_mean);
        var += (t - t_mean) * (t - t_mean);
    }
    let slope = cov / var;
    let span = times[n_frames - 1] - times[0];
    let floor = opts.radar.delta_r();
    let dir = match radar::estimate_direction(
        &[(times[0], x_mean - slope * span / 2.0), (times[n_frames - 1], x_mean + slope * span / 2.0)],
        floor,
    ) {
        Ok(d) => d,
        Err(Error::AmbiguousDirection { .. }) => {
            return Ok(Row { status: RowStatus::AmbiguousDirection, ..fallback })
        }
        Err(e) => return Err(e),
    };
    let street_speed = slope.abs();
    if street_speed > opts.max_plausible_speed {
        return Ok(Row { status: RowStatus::ImplausibleTrack, ..fallback });
    }

    let speed = match opts.velocity_mode {
        VelocityMode::True => street_speed,
        VelocityMode::Measured => d_last.upsilon,
    };
    let x_now = xs[n_frames - 1];
    let y_o = ys.iter().sum::<f64>() / n_frames as f64;
    let obj = geometry::ObjectLocalisation {
        r_o: x_now.hypot(y_o),
        x_o: x_now,
        y_o,
        theta_o: y_o.atan2(x_now),
        v_o: speed,
        n_o: dir,
    };
    let user = geometry::user_localisation(
        scenario.user.x - radar_pos[0],
        scenario.user.y - radar_pos[1],
    );

    // labels from the sensed localisation, street speed from displacement
    let line = geometry::los_line(
        [0.0, 0.0, scenario.antenna[2]],
        [user.x_u, user.y_u, scenario.user.z],
    )?;
    let crossing = geometry::intersect_plane(&line, obj.y_o)?;
    let status = geometry::blockage_status(&obj, &user, h_est, crossing[2]);
    let mut for_time = obj;
    for_time.v_o = street_speed;
    let t_b = geometry::time_to_block(&for_time, crossing[0], status.blocked)?;

    Ok(Row {
        sample: Sample {
            features: feature_vector(&user, &obj),
            label_b: status.blocked,
            label_t: t_b,
        },
        status: RowStatus::Ok,
    })
}

/// Featurizes every track of a scenario. The noise stream is named
/// `noise/<sbs>` off the scenario seed.
pub fn featurize_scenario(scenario: &Scenario, opts: &FeaturizeOptions) -> Result<Vec<Row>> {
    let mut noise = SeedStream::new(scenario.config.rng_seed)
        .stream(&format!("noise/{}", scenario.config.sbs_id.name()));
    scenario
        .tracks
        .iter()
        .map(|t| match opts.source {
            FeatureSource::Oracle => featurize_track_oracle(scenario, t, opts, &mut noise),
            FeatureSource::Radar => featurize_track_radar(scenario, t, opts, &mut noise),
        })
        .collect()
}

/// Usable samples only (radar-path rows that failed sensing are dropped).
pub fn samples_of(rows: &[Row]) -> Vec<Sample> {
    rows.iter()
        .filter(|r| r.status == RowStatus::Ok)
        .map(|r| r.sample)
        .collect()
}

/// Shared min-max scaler over the physical ranges declared by a cohort of
/// scenario configs. Server-computable from configuration alone; no client
/// data crosses the wire.
pub fn scaler_from_configs(configs: &[ScenarioConfig]) -> Result<Scaler> {
    if configs.is_empty() {
        return Err(Error::Argument("scaler needs at least one config".into()));
    }
    let mut x_abs: f64 = 0.0;
    let mut y_max: f64 = 0.0;
    let mut v_lo = f64::INFINITY;
    let mut v_hi: f64 = 0.0;
    let mut u_x_lo = f64::INFINITY;
    let mut u_x_hi = f64::NEG_INFINITY;
    let mut u_y_max: f64 = 0.0;
    for c in configs {
        x_abs = x_abs
            .max(c.street_x_range[0].abs())
            .max(c.street_x_range[1].abs());
        y_max = y_max.max(c.object_y_range[1]);
        v_lo = v_lo.min(c.speed_range[0]);
        v_hi = v_hi.max(c.speed_range[1]);
        u_x_lo = u_x_lo.min(c.user_x);
        u_x_hi = u_x_hi.max(c.user_x);
        u_y_max = u_y_max.max(c.user_y);
    }
    let r_o_max = x_abs.hypot(y_max);
    let r_u_max = u_x_lo.abs().max(u_x_hi.abs()).hypot(u_y_max);
    Ok(Scaler::from_ranges([
        [0.0, r_u_max],
        [u_x_lo, u_x_hi],
        [0.0, u_y_max],
        [0.0, std::f64::consts::PI],
        [0.0, r_o_max],
        [-x_abs, x_abs],
        [0.0, y_max],
        [0.0, std::f64::consts::PI],
        [0.0, v_hi.max(v_lo)],
        [-1.0, 1.0],
    ]))
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

pub const CSV_HEADER: [&str; 12] = [
    "r_u", "x_u", "y_u", "theta_u", "r_o", "x_o", "y_o", "theta_o", "v_o", "n_o", "label_b",
    "label_T",
];

pub fn write_dataset_csv(path: &std::path::Path, samples: &[Sample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for s in samples {
        let mut rec: Vec<String> = s.features.iter().map(|v| format!("{v:.9}")).collect();
        rec.push((s.label_b as u8).to_string());
        rec.push(format!("{:.9}", s.label_t));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv(path: &std::path::Path) -> Result<Vec<Sample>> {
    let mut r = csv::Reader::from_path(path)?;
    let hdr = r.headers()?.clone();
    if hdr.len() != 12 {
        return Err(Error::Serialization(format!(
            "dataset CSV must have 12 columns, found {}",
            hdr.len()
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut features = [0.0; N_FEATURES];
        for (i, f) in features.iter_mut().enumerate() {
            *f = rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Serialization(format!("bad float in column {i}: {e}")))?;
        }
        let label_b = match &rec[10] {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Serialization(format!("bad label_b '{other}'")));
            }
        };
        let label_t = rec[11]
            .parse::<f64>()
            .map_err(|e| Error::Serialization(format!("bad label_T: {e}")))?;
        if !label_b && label_t != -1.0 {
            return Err(Error::Serialization(
                "label_T must be -1 exactly when label_b is 0".into(),
            ));
        }
        out.push(Sample { features, label_b, label_t });
    }
    Ok(out)
}
