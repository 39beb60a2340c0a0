use pho_core::dataset::*;
use pho_core::scene::{build_scenario, ScenarioConfig, SbsId};

fn main() {
    let cfg = ScenarioConfig::table_row(SbsId::SBS4, 58).with_n_samples(300);
    let scenario = build_scenario(&cfg).unwrap();
    let oracle = featurize_scenario(&scenario, &FeaturizeOptions::default()).unwrap();
    let sensed = featurize_scenario(
        &scenario,
        &FeaturizeOptions { source: FeatureSource::Radar, ..Default::default() },
    )
    .unwrap();
    for (i, (o, s)) in oracle.iter().zip(sensed.iter()).enumerate() {
        if s.status != RowStatus::Ok { println!("row {i}: status {:?}", s.status); continue; }
        if o.sample.label_b != s.sample.label_b {
            let t = &scenario.tracks[i];
            let z_i = cfg.radar_height + (1.5 - cfg.radar_height) * t.y0 / cfg.user_y;
            println!(
                "row {i}: true b={} sensed b={}  x0={:+.3} x_hat={:+.3}  y0={:.3} y_hat={:.3}  h={:.3} z_i={:.4}  dir={:?} n_hat={:+.0}  v={:.2} v_hat={:.2}",
                o.sample.label_b as u8, s.sample.label_b as u8,
                t.x0, s.sample.features[5], t.y0, s.sample.features[6],
                t.h_o, z_i, t.dir, s.sample.features[9], t.v_true, s.sample.features[8],
            );
        }
    }
}
