//! Proactive-handover timing budget, trigger decision, and evaluation
//! metrics: S_PHO, the T_DO distribution, average latency ζ, and the
//! throughput traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ModelParams, Sample, Scaler};
use crate::radar::RadarConfig;
use crate::scene::Scenario;
use crate::trace::blocking_events;

/// Reactive handover procedure time (s): beam failure detection + recovery
/// + cell search + random access.
pub const REACTIVE_HO_S: f64 = 0.3122;
/// Contention-based random access worst case (s).
pub const PHO_HO_S: f64 = 0.080;

/// End-to-end framework timing (all seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingBudget {
    /// Frame measurement time T_m = L·(τ_c+τ_p).
    pub t_m: f64,
    /// ADC/sampling time T_s = M_r·S·L / f_s.
    pub t_s: f64,
    /// Radar-cube FFT processing time.
    pub t_fft: f64,
    /// Object height classification time.
    pub t_c: f64,
    /// Radar pipeline total T_R = T_m + T_s + T_FFT + T_c.
    pub t_r: f64,
    /// Model inference time.
    pub t_inf: f64,
    /// Handover execution time.
    pub t_ho: f64,
    /// Framework total T_F = T_R + T_Inf + T_HO.
    pub t_f: f64,
}

/// Builds the budget from the radar parameters and the fixed processing
/// constants (defaults: T_FFT = 6 ms, T_c = 26 ms, T_Inf = 1 ms,
/// T_HO = 80 ms).
pub fn timing_budget(
    radar: &RadarConfig,
    t_fft: f64,
    t_c: f64,
    t_inf: f64,
    t_ho: f64,
) -> TimingBudget {
    let t_m = radar.frame_duration();
    let t_s = (radar.n_rx * radar.samples_per_chirp * radar.n_chirps) as f64
        / radar.sampling_rate;
    let t_r = t_m + t_s + t_fft + t_c;
    TimingBudget {
        t_m,
        t_s,
        t_fft,
        t_c,
        t_r,
        t_inf,
        t_ho,
        t_f: t_r + t_inf + t_ho,
    }
}

impl TimingBudget {
    pub fn table_default() -> Self {
        timing_budget(&RadarConfig::default(), 6e-3, 26e-3, 1e-3, 80e-3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhoAction {
    None,
    Pho,
}

/// Outcome of the trigger-point decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhoDecision {
    pub action: PhoAction,
    /// Idle time between inference completion and the HO trigger (s).
    pub trigger_delay: f64,
    /// Percent-shifted predicted blockage time (s).
    pub shifted_t_b: f64,
}

/// QoE-aware trigger scheduling: wait as long as the shifted prediction
/// allows, clamped at an immediate trigger.
pub fn decide(
    b_hat: bool,
    t_b_hat: f64,
    p_shift: f64,
    budget: &TimingBudget,
) -> Result<PhoDecision> {
    if !(0.0..1.0).contains(&p_shift) {
        return Err(Error::Argument(format!("p_shift {p_shift} outside [0, 1)")));
    }
    if !b_hat {
        return Ok(PhoDecision { action: PhoAction::None, trigger_delay: 0.0, shifted_t_b: 0.0 });
    }
    if t_b_hat < 0.0 {
        return Err(Error::InvalidPrediction(format!(
            "blockage predicted with negative time {t_b_hat}"
        )));
    }
    let shifted = t_b_hat * (1.0 - p_shift);
    Ok(PhoDecision {
        action: PhoAction::Pho,
        trigger_delay: (shifted - budget.t_f).max(0.0),
        shifted_t_b: shifted,
    })
}

/// What counts in the S_PHO denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SphoDenominator {
    /// Truly-blocked samples only (default).
    Blocked,
    /// Every sample.
    All,
}

/// Evaluation outcome over one client's labeled set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhoEvaluation {
    pub s_pho: f64,
    pub false_ho_rate: f64,
    /// T_DO percentages of the successful samples.
    pub t_do_samples: Vec<f64>,
    pub n_blocked: usize,
    pub n_success: usize,
    /// Samples whose true T_b ≤ T_F: no trigger can beat the obstruction.
    pub n_unwinnable: usize,
}

/// Core evaluation over (prediction, truth) pairs: `preds` and `truths`
/// hold (blockage bit, time) with time = -1 on non-blocking entries.
pub fn evaluate_predictions(
    preds: &[(bool, f64)],
    truths: &[(bool, f64)],
    p_shift: f64,
    budget: &TimingBudget,
    denominator: SphoDenominator,
) -> Result<PhoEvaluation> {
    if preds.len() != truths.len() {
        return Err(Error::Argument("prediction/truth length mismatch".into()));
    }
    let mut n_blocked = 0usize;
    let mut n_success = 0usize;
    let mut n_unwinnable = 0usize;
    let mut n_nonblocked = 0usize;
    let mut false_ho = 0usize;
    let mut t_do = Vec::new();

    for (&(b_hat, t_hat), &(b, t_b)) in preds.iter().zip(truths.iter()) {
        if !b {
            n_nonblocked += 1;
            if b_hat {
                false_ho += 1;
            }
            continue;
        }
        n_blocked += 1;
        if t_b <= budget.t_f {
            n_unwinnable += 1;
            continue; // counted as failure
        }
        if !b_hat {
            continue;
        }
        let decision = match decide(true, t_hat, p_shift, budget) {
            Ok(d) => d,
            Err(Error::InvalidPrediction(_)) => continue, // unschedulable: failure
            Err(e) => return Err(e),
        };
        let t_d = decision.trigger_delay;
        // T_F + T_D <= T_b, written as max(T_F, shifted) <= T_b so the
        // boundary does not wobble on float re-addition
        if decision.shifted_t_b.max(budget.t_f) <= t_b {
            n_success += 1;
            let t_d_max = t_b - budget.t_f;
            let offset = if t_d_max > 0.0 {
                (t_d_max - t_d) / t_d_max * 100.0
            } else {
                0.0
            };
            t_do.push(offset.clamp(0.0, 100.0));
        }
    }

    let s_pho = match denominator {
        SphoDenominator::Blocked => {
            if n_blocked == 0 {
                0.0
            } else {
                n_success as f64 / n_blocked as f64
            }
        }
        SphoDenominator::All => {
            let total = preds.len();
            if total == 0 {
                0.0
            } else {
                n_success as f64 / total as f64
            }
        }
    };
    Ok(PhoEvaluation {
        s_pho,
        false_ho_rate: if n_nonblocked == 0 {
            0.0
        } else {
            false_ho as f64 / n_nonblocked as f64
        },
        t_do_samples: t_do,
        n_blocked,
        n_success,
        n_unwinnable,
    })
}

/// Runs the trained model over an eval set (physical features) and scores
/// PHO outcomes against the true labels.
pub fn evaluate(
    samples: &[Sample],
    params: &ModelParams,
    scaler: &Scaler,
    p_shift: f64,
    budget: &TimingBudget,
    denominator: SphoDenominator,
) -> Result<PhoEvaluation> {
    let preds: Vec<(bool, f64)> = samples
        .iter()
        .map(|s| {
            let (p, t_hat) = params.forward(&scaler.transform(&s.features));
            (p[1] > p[0], t_hat)
        })
        .collect();
    let truths: Vec<(bool, f64)> = samples.iter().map(|s| (s.label_b, s.label_t)).collect();
    evaluate_predictions(&preds, &truths, p_shift, budget, denominator)
}

/// Average handover latency ζ = S_PHO·t_pho + (1−S_PHO)·t_reactive, in
/// seconds.
pub fn avg_latency(s_pho: f64, t_pho: f64, t_reactive: f64) -> f64 {
    s_pho * t_pho + (1.0 - s_pho) * t_reactive
}

/// Normalized throughput levels by serving state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRates {
    /// Served by the LoS beam.
    pub r_los: f64,
    /// Served by the alternate SBS after a handover.
    pub r_alt: f64,
    /// Riding reflections while the LoS is obstructed.
    pub r_nlos: f64,
}

impl Default for ThroughputRates {
    fn default() -> Self {
        ThroughputRates { r_los: 1.0, r_alt: 0.8, r_nlos: 0.3 }
    }
}

impl ThroughputRates {
    pub fn validate(&self) -> Result<()> {
        if self.r_los >= self.r_alt && self.r_alt > self.r_nlos && self.r_nlos >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config("throughput rates must satisfy r_los >= r_alt > r_nlos >= 0".into()))
        }
    }
}

/// Who predicts blockage times for a trace.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    /// Ground-truth blockage bit and time.
    Oracle,
    /// The trained dual-output model over oracle features.
    Model { params: &'a ModelParams, scaler: &'a Scaler },
}

#[derive(Debug, Clone, Serialize)]
pub struct ThroughputTrace {
    pub points: Vec<(f64, f64)>,
    pub mean: f64,
}

/// Normalized user throughput over time while the scenario's objects cross
/// the serving LoS. Reactive: r_nlos during the obstruction, then zero for
/// the recovery window. PHO: r_alt from handover completion, back to the
/// LoS once clear; a late trigger degenerates to the reactive timeline for
/// that event.
#[allow(clippy::too_many_arguments)]
pub fn throughput_trace(
    scenario: &Scenario,
    policy: crate::channel::Policy,
    predictor: Predictor<'_>,
    budget: &TimingBudget,
    rates: &ThroughputRates,
    p_shift: f64,
    dwell: f64,
    step: f64,
) -> Result<ThroughputTrace> {
    rates.validate()?;
    let events = blocking_events(scenario, scenario.antenna, dwell)?;
    let labels = scenario.oracle_labels()?;

    // per-event rate segments: (start, end, rate) overriding the LoS rate
    let mut segments: Vec<(f64, f64, f64)> = Vec::new();
    let mut horizon: f64 = 2.0;
    let mut ev_idx = 0usize;
    for (track, label) in scenario.tracks.iter().zip(labels.iter()) {
        if !label.blocked {
            continue;
        }
        let e = events
            .iter()
            .find(|e| (e.t_cross - (track.spawn_time + label.time_to_block)).abs() < 1e-9)
            .copied()
            .unwrap_or(events[ev_idx]);
        ev_idx = (ev_idx + 1).min(events.len() - 1);

        let reactive_segments = |segs: &mut Vec<(f64, f64, f64)>| {
            segs.push((e.t_cross, e.t_clear, rates.r_nlos));
            segs.push((e.t_clear, e.t_clear + REACTIVE_HO_S, 0.0));
        };

        match policy {
            crate::channel::Policy::Reactive => reactive_segments(&mut segments),
            crate::channel::Policy::Pho => {
                let (b_hat, t_hat) = match predictor {
                    Predictor::Oracle => (true, label.time_to_block),
                    Predictor::Model { params, scaler } => {
                        let user = crate::geometry::user_localisation(
                            scenario.user.x - scenario.antenna[0],
                            scenario.user.y - scenario.antenna[1],
                        );
                        let obj = crate::geometry::ObjectLocalisation {
                            r_o: track.x0.hypot(track.y0),
                            x_o: track.x0,
                            y_o: track.y0,
                            theta_o: track.y0.atan2(track.x0),
                            v_o: track.v_true,
                            n_o: track.dir,
                        };
                        let feats = crate::dataset::feature_vector(&user, &obj);
                        let (p, t) = params.forward(&scaler.transform(&feats));
                        (p[1] > p[0], t)
                    }
                };
                let success = if b_hat && t_hat >= 0.0 {
                    let d = decide(true, t_hat, p_shift, budget)?;
                    let t_b_true = e.t_cross - e.t_detect;
                    if d.shifted_t_b.max(budget.t_f) <= t_b_true {
                        let completion = e.t_detect + d.shifted_t_b.max(budget.t_f);
                        segments.push((completion, e.t_clear, rates.r_alt));
                        true
                    } else {
                        false
                    }
                } else {
                    false
                };
                if !success {
                    reactive_segments(&mut segments);
                }
            }
        }
        horizon = horizon.max(e.t_clear + REACTIVE_HO_S + 1.0);
    }

    let mut points = Vec::new();
    let mut sum = 0.0;
    let mut t = 0.0;
    while t <= horizon {
        // the lowest-rate active segment wins (outage dominates)
        let rate = segments
            .iter()
            .filter(|(s, e, _)| t >= *s && t < *e)
            .map(|(_, _, r)| *r)
            .fold(rates.r_los, f64::min);
        points.push((t, rate));
        sum += rate;
        t += step;
    }
    let mean = sum / points.len() as f64;
    Ok(ThroughputTrace { points, mean })
}

/// CDF rows (offset_pct, cdf) for T_DO plots.
pub fn tdo_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, (i + 1) as f64 / n))
        .collect()
}

pub fn write_tdo_cdf_csv(path: &std::path::Path, samples: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["offset_pct", "cdf"])?;
    for (v, c) in tdo_cdf(samples) {
        w.write_record(&[format!("{v:.6}"), format!("{c:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Policy;
    use crate::trace::demo_scenario;

    #[test]
    fn budget_matches_radar_table() {
        let b = TimingBudget::table_default();
        assert!((b.t_m - 8.32e-3).abs() < 1e-9);
        assert!((b.t_s - 26.2144e-3).abs() < 1e-9);
        assert!((b.t_r - 66.53e-3).abs() < 0.1e-3);
        assert!((b.t_f - 147.53e-3).abs() < 0.1e-3);
    }

    #[test]
    fn budget_linear_in_chirps() {
        let mut radar = RadarConfig::default();
        let full = timing_budget(&radar, 6e-3, 26e-3, 1e-3, 80e-3);
        radar.n_chirps /= 2;
        let half = timing_budget(&radar, 6e-3, 26e-3, 1e-3, 80e-3);
        assert!((half.t_m - full.t_m / 2.0).abs() < 1e-15);
        assert!((half.t_s - full.t_s / 2.0).abs() < 1e-15);
    }

    #[test]
    fn decide_cases() {
        let b = TimingBudget::table_default();
        let none = decide(false, -1.0, 0.1, &b).unwrap();
        assert_eq!(none.action, PhoAction::None);

        let d = decide(true, 2.0, 0.10, &b).unwrap();
        assert_eq!(d.action, PhoAction::Pho);
        assert!((d.trigger_delay - (1.8 - b.t_f)).abs() < 1e-12);
        assert!((d.trigger_delay - 1.6525).abs() < 1e-3);

        // shifted prediction below T_F clamps to an immediate trigger
        let clamp = decide(true, 0.1, 0.0, &b).unwrap();
        assert_eq!(clamp.trigger_delay, 0.0);

        assert!(decide(true, -0.5, 0.0, &b).is_err());
    }

    #[test]
    fn oracle_predictor_is_perfect() {
        let b = TimingBudget::table_default();
        let truths: Vec<(bool, f64)> = (0..50)
            .map(|i| (true, 0.5 + i as f64 * 0.1))
            .chain((0..20).map(|_| (false, -1.0)))
            .collect();
        let ev = evaluate_predictions(&truths, &truths, 0.0, &b, SphoDenominator::Blocked).unwrap();
        assert_eq!(ev.s_pho, 1.0);
        assert_eq!(ev.false_ho_rate, 0.0);
        assert!(ev.t_do_samples.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn tdo_direct_value() {
        let b = TimingBudget::table_default();
        // pick T_b so that T_D^max = 2.0, and a prediction with T_hat_D = 1.6
        let t_b = 2.0 + b.t_f;
        let t_hat = 1.6 + b.t_f; // p_shift = 0
        let ev = evaluate_predictions(
            &[(true, t_hat)],
            &[(true, t_b)],
            0.0,
            &b,
            SphoDenominator::Blocked,
        )
        .unwrap();
        assert_eq!(ev.n_success, 1);
        assert!((ev.t_do_samples[0] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn s_pho_nondecreasing_in_shift() {
        let b = TimingBudget::table_default();
        // noisy over-predictions so that shifting converts failures
        let truths: Vec<(bool, f64)> = (0..200).map(|i| (true, 1.0 + (i % 17) as f64 * 0.3)).collect();
        let preds: Vec<(bool, f64)> = truths
            .iter()
            .enumerate()
            .map(|(i, &(_, t))| (true, t * (1.0 + 0.08 * ((i % 5) as f64 - 2.0))))
            .collect();
        let mut prev = -1.0;
        for p in [0.0, 0.02, 0.04, 0.06, 0.08, 0.10] {
            let ev =
                evaluate_predictions(&preds, &truths, p, &b, SphoDenominator::Blocked).unwrap();
            assert!(ev.s_pho >= prev, "s_pho dropped at shift {p}");
            prev = ev.s_pho;
        }
    }

    #[test]
    fn unwinnable_tallied_as_failure() {
        let b = TimingBudget::table_default();
        let truths = [(true, b.t_f), (true, 5.0)];
        let preds = [(true, b.t_f), (true, 5.0)];
        let ev = evaluate_predictions(&preds, &truths, 0.0, &b, SphoDenominator::Blocked).unwrap();
        assert_eq!(ev.n_unwinnable, 1);
        assert_eq!(ev.n_success, 1);
        assert_eq!(ev.s_pho, 0.5);
    }

    #[test]
    fn latency_formula() {
        assert!((avg_latency(1.0, PHO_HO_S, REACTIVE_HO_S) - 0.080).abs() < 1e-12);
        assert!((avg_latency(0.0, PHO_HO_S, REACTIVE_HO_S) - 0.3122).abs() < 1e-12);
        assert!((avg_latency(0.5, PHO_HO_S, REACTIVE_HO_S) - 0.1961).abs() < 1e-12);
        // strictly decreasing
        let mut prev = f64::INFINITY;
        for i in 0..=10 {
            let z = avg_latency(i as f64 / 10.0, PHO_HO_S, REACTIVE_HO_S);
            assert!(z < prev);
            prev = z;
        }
    }

    #[test]
    fn throughput_obstacle_free_constant_one() {
        let b = TimingBudget::table_default();
        let s = demo_scenario(0, &[]);
        let tr = throughput_trace(
            &s,
            Policy::Pho,
            Predictor::Oracle,
            &b,
            &ThroughputRates::default(),
            0.0,
            0.5,
            0.01,
        )
        .unwrap();
        assert!((tr.mean - 1.0).abs() < 1e-12);
        assert!(tr.points.iter().all(|(_, r)| *r == 1.0));
    }

    #[test]
    fn throughput_pho_never_zero_reactive_has_outage_span() {
        let b = TimingBudget::table_default();
        let s = demo_scenario(0, &[(12.0, 6.0, 3.0, 3.0)]);
        let rates = ThroughputRates::default();
        let pho = throughput_trace(&s, Policy::Pho, Predictor::Oracle, &b, &rates, 0.0, 0.5, 0.01)
            .unwrap();
        assert!(pho.points.iter().all(|(_, r)| *r > 0.0));

        let rea =
            throughput_trace(&s, Policy::Reactive, Predictor::Oracle, &b, &rates, 0.0, 0.5, 0.01)
                .unwrap();
        let zero_run = rea
            .points
            .iter()
            .fold((0usize, 0usize), |(best, cur), (_, r)| {
                let cur = if *r == 0.0 { cur + 1 } else { 0 };
                (best.max(cur), cur)
            })
            .0;
        let span = zero_run as f64 * 0.01;
        assert!(
            (span - REACTIVE_HO_S).abs() <= 0.02,
            "outage span {span} vs {REACTIVE_HO_S}"
        );
        assert!(pho.mean >= rea.mean);
    }

    #[test]
    fn tdo_cdf_is_normalized() {
        let cdf = tdo_cdf(&[5.0, 1.0, 3.0]);
        assert_eq!(cdf.len(), 3);
        assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-12);
        assert!(cdf[0].0 <= cdf[1].0 && cdf[1].0 <= cdf[2].0);
    }
}
