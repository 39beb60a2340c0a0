//! Shared blockage-event timeline for the serving and throughput traces.

use crate::error::Result;
use crate::geometry::{label_object, Direction};
use crate::scene::{ObjectTrack, Scenario, ScenarioConfig, SbsId};

/// One LoS-crossing event of a blocking track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockEvent {
    /// Radar first sees the object (its spawn instant).
    pub t_detect: f64,
    /// The object's x reaches the LoS crossing point.
    pub t_cross: f64,
    /// Obstruction over (crossing plus dwell).
    pub t_clear: f64,
}

/// Blocking events of a scenario against an SBS antenna, sorted by
/// crossing time.
pub fn blocking_events(
    scenario: &Scenario,
    antenna: [f64; 3],
    dwell: f64,
) -> Result<Vec<BlockEvent>> {
    let user = scenario.user.pos();
    let mut events = Vec::new();
    for track in &scenario.tracks {
        let label = label_object(
            antenna,
            user,
            track.x0,
            track.y0,
            track.h_o,
            track.v_true,
            track.dir,
        )?;
        if label.blocked {
            let t_cross = track.spawn_time + label.time_to_block;
            events.push(BlockEvent {
                t_detect: track.spawn_time,
                t_cross,
                t_clear: t_cross + dwell,
            });
        }
    }
    events.sort_by(|a, b| a.t_cross.partial_cmp(&b.t_cross).unwrap());
    Ok(events)
}

/// Hand-built scenario for traces and demos: objects are (x0, y0, h, v)
/// tuples moving toward the LoS crossing of the primary SBS at the origin.
pub fn demo_scenario(seed: u64, objects: &[(f64, f64, f64, f64)]) -> Scenario {
    let mut config = ScenarioConfig::table_row(SbsId::SBS1, seed);
    config.n_samples = objects.len();
    config.frame_interval = 0.05;
    let tracks = objects
        .iter()
        .enumerate()
        .map(|(i, &(x0, y0, h_o, v_true))| ObjectTrack {
            x0,
            y0,
            h_o,
            v_true,
            dir: if x0 > 0.0 { Direction::MinusX } else { Direction::PlusX },
            spawn_time: i as f64 * 1.0,
        })
        .collect();
    Scenario {
        user: config.user(),
        antenna: config.antenna_pos,
        config,
        tracks,
    }
}
