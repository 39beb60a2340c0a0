//! Stage implementations. Stages communicate through files in the output
//! directory; every artifact-producing run stamps `provenance.json` with
//! the config hash and seed, and downstream stages refuse inputs produced
//! under a different configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pho_core::channel::{self, Policy, SbsSite};
use pho_core::dataset::{
    featurize_scenario, read_dataset_csv, samples_of, scaler_from_configs, write_dataset_csv,
    FeaturizeOptions,
};
use pho_core::fed::{self, Client, SplitConfig};
use pho_core::nn::{self, ModelParams, Sample, Scaler, TrainConfig};
use pho_core::pho::{self, Predictor, TimingBudget, PHO_HO_S, REACTIVE_HO_S};
use pho_core::radar::{self, TargetEcho};
use pho_core::rng::SeedStream;
use pho_core::scene::{build_scenario, Scenario};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    Sense,
    Dataset,
    TrainFl,
    Personalise,
    Evaluate,
    SweepPshift,
    TwoSbsDemo,
    All,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Provenance {
    config_hash: String,
    seed: u64,
}

pub struct Runner {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Runner {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&out)?;
        Ok(Runner { cfg, out })
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Generate => self.generate(),
            Stage::Sense => self.sense(),
            Stage::Dataset => self.dataset(),
            Stage::TrainFl => self.train_fl(),
            Stage::Personalise => self.personalise(),
            Stage::Evaluate => self.evaluate(),
            Stage::SweepPshift => self.sweep_pshift(),
            Stage::TwoSbsDemo => self.two_sbs_demo(),
            Stage::All => {
                self.generate()?;
                self.sense()?;
                self.dataset()?;
                self.train_fl()?;
                self.personalise()?;
                self.evaluate()?;
                self.sweep_pshift()?;
                self.two_sbs_demo()
            }
        }
    }

    // -- provenance ---------------------------------------------------------

    fn stamp_provenance(&self) -> Result<()> {
        let p = Provenance { config_hash: self.cfg.hash(), seed: self.cfg.seed };
        let path = self.out.join("provenance.json");
        if path.exists() {
            let existing: Provenance = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            if existing != p {
                bail!(
                    "output directory holds artifacts from config {} seed {}; refusing to mix \
                     with config {} seed {} (use a fresh --out)",
                    existing.config_hash,
                    existing.seed,
                    p.config_hash,
                    p.seed
                );
            }
            return Ok(());
        }
        write_atomic(&path, serde_json::to_string_pretty(&p)?.as_bytes())
    }

    fn check_provenance(&self, needed_by: &str) -> Result<()> {
        let path = self.out.join("provenance.json");
        if !path.exists() {
            bail!("stage `{needed_by}` needs artifacts from stage `generate`; run it first");
        }
        let existing: Provenance = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        let current = Provenance { config_hash: self.cfg.hash(), seed: self.cfg.seed };
        if existing != current {
            bail!(
                "artifacts in {} were produced under config {} seed {}, not the current config \
                 {} seed {}",
                self.out.display(),
                existing.config_hash,
                existing.seed,
                current.config_hash,
                current.seed
            );
        }
        Ok(())
    }

    fn require(&self, file: &str, producer: &str, consumer: &str) -> Result<PathBuf> {
        let path = self.out.join(file);
        if !path.exists() {
            bail!("stage `{consumer}` needs `{file}`; run stage `{producer}` first");
        }
        Ok(path)
    }

    // -- stages -------------------------------------------------------------

    fn generate(&self) -> Result<()> {
        self.stamp_provenance()?;
        for cfg in &self.cfg.scenarios {
            let scenario = build_scenario(cfg)?;
            let path = self.out.join(format!("scenario_{}.json", cfg.sbs_id.name()));
            write_atomic(&path, scenario.to_json()?.as_bytes())?;
            println!("generate: {} tracks -> {}", scenario.tracks.len(), path.display());
        }
        Ok(())
    }

    fn load_scenarios(&self, consumer: &str) -> Result<Vec<Scenario>> {
        self.check_provenance(consumer)?;
        self.cfg
            .scenarios
            .iter()
            .map(|cfg| {
                let path = self.require(
                    &format!("scenario_{}.json", cfg.sbs_id.name()),
                    "generate",
                    consumer,
                )?;
                Ok(Scenario::from_json(&std::fs::read_to_string(path)?)?)
            })
            .collect()
    }

    /// One synthesized frame and processed cube per scenario, from its
    /// first track, as binary artifacts.
    fn sense(&self) -> Result<()> {
        let scenarios = self.load_scenarios("sense")?;
        let mut rng = SeedStream::new(self.cfg.seed).stream("sense");
        for scenario in &scenarios {
            let name = scenario.config.sbs_id.name();
            let Some(track) = scenario.tracks.first() else {
                println!("sense: {name} has no tracks, skipping");
                continue;
            };
            let x = track.x0 - scenario.antenna[0];
            let y = track.y0 - scenario.antenna[1];
            let h = scenario.config.radar_height;
            let slant = (x * x + y * y + (h - track.h_o).powi(2)).sqrt();
            let echo = TargetEcho {
                range: slant.min(self.cfg.radar.max_range),
                radial_speed: 0.0,
                azimuth: x.atan2(y),
                reflectivity: 1.0,
            };
            let frame = radar::synthesize_frame(&[echo], &self.cfg.radar, &mut rng, 0.0)?;
            let cube = radar::process_cube(&frame, &self.cfg.radar)?;
            radar::write_frame_dump(&self.out.join(format!("frame_{name}.bin")), &frame, &self.cfg.radar)?;
            radar::write_cube_npy(&self.out.join(format!("cube_{name}.npy")), &cube)?;
            println!("sense: {name} frame + cube written (aliased={})", frame.aliased);
        }
        Ok(())
    }

    fn featurize_opts(&self) -> FeaturizeOptions {
        FeaturizeOptions {
            source: self.cfg.features.features_from,
            velocity_mode: self.cfg.features.velocity_mode,
            height_noise_std: self.cfg.features.height_noise_std,
            radar: self.cfg.radar.clone(),
            detect_threshold_db: self.cfg.features.detect_threshold_db,
        }
    }

    fn dataset(&self) -> Result<()> {
        let scenarios = self.load_scenarios("dataset")?;
        let opts = self.featurize_opts();
        for scenario in &scenarios {
            let name = scenario.config.sbs_id.name();
            let rows = featurize_scenario(scenario, &opts)?;
            let samples = samples_of(&rows);
            let dropped = rows.len() - samples.len();
            let path = self.out.join(format!("dataset_{name}.csv"));
            write_dataset_csv(&path, &samples)?;
            let blocked = samples.iter().filter(|s| s.label_b).count();
            println!(
                "dataset: {name} {} rows ({} blocked, {} dropped by sensing) -> {}",
                samples.len(),
                blocked,
                dropped,
                path.display()
            );
        }
        Ok(())
    }

    fn scaler(&self) -> Result<Scaler> {
        Ok(scaler_from_configs(&self.cfg.scenarios)?)
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.cfg.training.local_epochs,
            batch_size: self.cfg.training.batch_size,
            lambda: self.cfg.training.lambda,
            mask_mae_nonblocked: self.cfg.training.mask_mae_nonblocked,
        }
    }

    fn load_dataset(&self, name: &str, consumer: &str) -> Result<Vec<Sample>> {
        let path = self.require(&format!("dataset_{name}.csv"), "dataset", consumer)?;
        Ok(read_dataset_csv(&path)?)
    }

    /// Builds the FL clients (every scenario except SBS6-style transfer-only
    /// ones, which is the last scenario when six are configured).
    fn build_clients(&self, consumer: &str) -> Result<(Vec<Client>, Option<Client>, Scaler)> {
        self.check_provenance(consumer)?;
        let scaler = self.scaler()?;
        let seeds = SeedStream::new(self.cfg.seed);
        let names: Vec<String> = self
            .cfg
            .scenarios
            .iter()
            .map(|s| s.sbs_id.name().to_string())
            .collect();
        let split = self.cfg.fl.split;
        let mut participants = Vec::new();
        let mut transfer = None;
        for (i, name) in names.iter().enumerate() {
            let samples = self.load_dataset(name, consumer)?;
            let split = clamp_split(split, samples.len());
            let client = Client::new(
                name,
                &samples,
                split,
                scaler.clone(),
                &seeds,
                self.cfg.training.learning_rate,
            )?;
            // the sixth scenario is the knowledge-transfer newcomer
            if names.len() == 6 && i == 5 {
                transfer = Some(client);
            } else {
                participants.push(client);
            }
        }
        Ok((participants, transfer, scaler))
    }

    fn train_fl(&self) -> Result<()> {
        let (mut clients, _, scaler) = self.build_clients("train-fl")?;
        let seeds = SeedStream::new(self.cfg.seed);
        let mut pool_rng = seeds.stream("server-pool");
        let pool: Vec<Sample> = clients
            .iter()
            .flat_map(|c| c.export_eval_subset(self.cfg.fl.server_pool_per_client, &mut pool_rng))
            .collect();
        let init = ModelParams::init(seeds.child_seed("init"));
        let (global, history) = fed::run_rounds(
            &mut clients,
            &pool,
            init,
            &self.train_config(),
            &self.cfg.fl.stopping,
        )?;
        fed::write_history_jsonl(&self.out.join("fl_history.jsonl"), &history)?;
        nn::save_checkpoint(&self.out.join("model_global"), &global, &scaler)?;
        let last = history.last().context("no rounds ran")?;
        println!(
            "train-fl: {} rounds, server accuracy {:.3}, server MAE {:.3}",
            history.len(),
            last.server_eval.accuracy,
            last.server_eval.mae
        );
        Ok(())
    }

    fn personalise(&self) -> Result<()> {
        let (mut clients, transfer_client, _) = self.build_clients("personalise")?;
        let global_path = self.require("model_global.json", "train-fl", "personalise")?;
        let (global, scaler) =
            nn::load_checkpoint(&global_path.with_extension(""))?;
        let cfg = self.train_config();
        let mut reports = Vec::new();
        for c in clients.iter_mut() {
            let rep = fed::personalise(c, &global, self.cfg.fl.tune_epochs, &cfg)?;
            nn::save_checkpoint(&self.out.join(format!("model_{}", c.id)), &c.params, &scaler)?;
            println!(
                "personalise: {} eval MAE {:.3} -> {:.3}",
                c.id, rep.before.mae, rep.after.mae
            );
            reports.push(serde_json::to_value(&rep)?);
        }
        if let Some(mut c) = transfer_client {
            let rep = fed::transfer_to_new_client(&mut c, &global, self.cfg.fl.tune_epochs, &cfg)?;
            nn::save_checkpoint(&self.out.join(format!("model_{}", c.id)), &c.params, &scaler)?;
            println!(
                "personalise: {} (transfer) MAE {:.3} -> {:.3} ({:+.0}%)",
                c.id,
                rep.pushed.mae,
                rep.tuned.mae,
                -rep.mae_improvement * 100.0
            );
            reports.push(serde_json::to_value(&rep)?);
        }
        write_atomic(
            &self.out.join("personalise_report.json"),
            serde_json::to_string_pretty(&reports)?.as_bytes(),
        )?;
        Ok(())
    }

    fn eval_split_raw(&self, name: &str, consumer: &str) -> Result<Vec<Sample>> {
        let samples = self.load_dataset(name, consumer)?;
        let split = clamp_split(self.cfg.fl.split, samples.len());
        let tune_end = split.personalise;
        let eval_end = tune_end + split.eval.min(samples.len() - tune_end);
        Ok(samples[tune_end..eval_end].to_vec())
    }

    fn evaluate(&self) -> Result<()> {
        self.check_provenance("evaluate")?;
        let budget = self.budget();
        let scenarios = self.load_scenarios("evaluate")?;
        let mut metrics = Vec::new();
        for scenario in &scenarios {
            let name = scenario.config.sbs_id.name();
            let model_path =
                self.require(&format!("model_{name}.json"), "personalise", "evaluate")?;
            let (params, scaler) = nn::load_checkpoint(&model_path.with_extension(""))?;
            let eval_raw = self.eval_split_raw(name, "evaluate")?;
            let p_shift = self.cfg.shift_for(name);
            let ev = pho::evaluate(
                &eval_raw,
                &params,
                &scaler,
                p_shift,
                &budget,
                self.cfg.pho.spho_denominator,
            )?;
            let zeta = pho::avg_latency(ev.s_pho, PHO_HO_S, REACTIVE_HO_S);
            pho::write_tdo_cdf_csv(
                &self.out.join(format!("tdo_cdf_{name}.csv")),
                &ev.t_do_samples,
            )?;

            let staged = stage_blocking_tracks(scenario, 4)?;
            let (mean_pho, mean_reactive) = if staged.tracks.is_empty() {
                (1.0, 1.0)
            } else {
                let p = pho::throughput_trace(
                    &staged,
                    Policy::Pho,
                    Predictor::Model { params: &params, scaler: &scaler },
                    &budget,
                    &self.cfg.pho.rates,
                    p_shift,
                    self.cfg.pho.blockage_dwell_s,
                    self.cfg.pho.trace_step_s,
                )?;
                let r = pho::throughput_trace(
                    &staged,
                    Policy::Reactive,
                    Predictor::Oracle,
                    &budget,
                    &self.cfg.pho.rates,
                    p_shift,
                    self.cfg.pho.blockage_dwell_s,
                    self.cfg.pho.trace_step_s,
                )?;
                (p.mean, r.mean)
            };

            let histogram = tdo_histogram(&ev.t_do_samples);
            metrics.push(serde_json::json!({
                "client": name,
                "p_shift": p_shift,
                "s_pho": ev.s_pho,
                "false_ho_rate": ev.false_ho_rate,
                "zeta_ms": zeta * 1e3,
                "n_blocked": ev.n_blocked,
                "n_success": ev.n_success,
                "n_unwinnable": ev.n_unwinnable,
                "t_do_histogram": histogram,
                "mean_throughput_pho": mean_pho,
                "mean_throughput_reactive": mean_reactive,
            }));
            println!(
                "evaluate: {name} S_PHO {:.1}% zeta {:.1} ms throughput {:.3}/{:.3}",
                ev.s_pho * 100.0,
                zeta * 1e3,
                mean_pho,
                mean_reactive
            );
        }
        let doc = serde_json::json!({
            "config_hash": self.cfg.hash(),
            "seed": self.cfg.seed,
            "clients": metrics,
        });
        write_atomic(
            &self.out.join("metrics.json"),
            serde_json::to_string_pretty(&doc)?.as_bytes(),
        )?;
        Ok(())
    }

    fn sweep_pshift(&self) -> Result<()> {
        self.check_provenance("sweep-pshift")?;
        let budget = self.budget();
        let shifts = [0.0, 0.02, 0.04, 0.06, 0.08, 0.10];
        let mut lines = vec![format!(
            "sbs,{}",
            shifts
                .iter()
                .map(|p| format!("{}", (p * 100.0) as u32))
                .collect::<Vec<_>>()
                .join(",")
        )];
        for cfg in &self.cfg.scenarios {
            let name = cfg.sbs_id.name();
            let model_path =
                self.require(&format!("model_{name}.json"), "personalise", "sweep-pshift")?;
            let (params, scaler) = nn::load_checkpoint(&model_path.with_extension(""))?;
            let eval_raw = self.eval_split_raw(name, "sweep-pshift")?;
            let mut cells = vec![name.to_string()];
            for p in shifts {
                let ev = pho::evaluate(
                    &eval_raw,
                    &params,
                    &scaler,
                    p,
                    &budget,
                    self.cfg.pho.spho_denominator,
                )?;
                cells.push(format!("{:.1}", ev.s_pho * 100.0));
            }
            lines.push(cells.join(","));
        }
        let path = self.out.join("spho_vs_pshift.csv");
        write_atomic(&path, (lines.join("\n") + "\n").as_bytes())?;
        println!("sweep-pshift: table -> {}", path.display());
        Ok(())
    }

    fn two_sbs_demo(&self) -> Result<()> {
        self.stamp_provenance()?;
        let budget = self.budget();
        // a pair of crossings over the primary SBS a few seconds apart
        let scenario = channel::demo_scenario(
            self.cfg.seed,
            &[(12.0, 6.0, 3.0, 3.0), (-18.0, 8.0, 3.5, 4.0)],
        );
        let mut rng = SeedStream::new(self.cfg.seed).stream("demo-paths");
        let sites = [
            SbsSite {
                antenna: [0.0, 0.0, 3.0],
                paths: channel::synthetic_paths(0.0, 2, self.cfg.codebook.b, 4, &mut rng),
                codebook_cfg: self.cfg.codebook.clone(),
            },
            SbsSite {
                antenna: [80.0, 0.0, 3.0],
                paths: scaled_alt_paths(&mut rng, &self.cfg.codebook),
                codebook_cfg: self.cfg.codebook.clone(),
            },
        ];
        for (policy, file) in [(Policy::Pho, "trace_pho.csv"), (Policy::Reactive, "trace_reactive.csv")]
        {
            let trace = channel::two_sbs_trace(
                &scenario,
                &sites,
                policy,
                &budget,
                self.cfg.pho.p_shift,
                self.cfg.pho.blockage_dwell_s,
                REACTIVE_HO_S,
            )?;
            channel::write_trace_csv(&self.out.join(file), &trace)?;
            println!("two-sbs-demo: {file} ({} points)", trace.len());
        }
        Ok(())
    }

    fn budget(&self) -> TimingBudget {
        pho::timing_budget(&self.cfg.radar, 6e-3, 26e-3, 1e-3, 80e-3)
    }
}

fn clamp_split(split: SplitConfig, n: usize) -> SplitConfig {
    // keep splits feasible on small datasets: at most half for tuning,
    // eval capped by Client::new itself
    let personalise = split.personalise.min(n / 4);
    SplitConfig { personalise, ..split }
}

fn tdo_histogram(samples: &[f64]) -> BTreeMap<String, usize> {
    let mut hist = BTreeMap::new();
    for edge in (0..10).map(|i| i * 10) {
        let lo = edge as f64;
        let hi = lo + 10.0;
        let count = samples.iter().filter(|v| **v >= lo && **v < hi).count();
        hist.insert(format!("{edge:02}-{:02}", edge + 10), count);
    }
    let top = samples.iter().filter(|v| **v >= 100.0).count();
    if top > 0 {
        hist.insert("100".into(), top);
    }
    hist
}

fn scaled_alt_paths(
    rng: &mut pho_core::rng::ChaCha8Rng,
    codebook: &pho_core::channel::CodebookConfig,
) -> pho_core::channel::PathSet {
    let mut p = channel::synthetic_paths(0.12, 2, codebook.b, 4, rng);
    // the alternate SBS serves from farther away
    p.paths[0].gain_re = 0.8;
    p
}

/// Picks up to `k` blocking tracks of a scenario and staggers their spawn
/// times so obstruction episodes never overlap.
fn stage_blocking_tracks(scenario: &Scenario, k: usize) -> Result<Scenario> {
    let labels = scenario.oracle_labels()?;
    let mut tracks = Vec::new();
    let mut t0 = 0.0;
    for (track, label) in scenario.tracks.iter().zip(labels.iter()) {
        if !label.blocked || tracks.len() >= k {
            continue;
        }
        let mut t = *track;
        t.spawn_time = t0;
        t0 += label.time_to_block + 0.5 + REACTIVE_HO_S + 1.5;
        tracks.push(t);
    }
    let mut out = scenario.clone();
    out.tracks = tracks;
    Ok(out)
}

/// Atomic write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().context("artifact path has no parent")?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("artifact")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

