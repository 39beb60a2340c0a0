//! Beamforming codebook, OFDM LoS/NLoS channel with blockage gating, RSS,
//! and the two-SBS serving trace.
//!
//! The channel per subcarrier is h_k = (1−b)·h_LoS + h_NLoS, with each path
//! contributing its gain through the cyclic-prefix pulse taps and the ULA
//! steering vector. RSS sums |h_k^H f|^2 over subcarriers with unit
//! transmit symbol and gain.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pho::TimingBudget;
use crate::scene::Scenario;
use crate::trace::{blocking_events, BlockEvent};

pub use crate::trace::demo_scenario;

/// Steering-angle grid for the codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleGrid {
    /// sin ψ uniform over [-1, 1): the DFT codebook. Default.
    UniformSine,
    /// ψ_i = 2πi/B. Physically redundant for a ULA; kept for comparison.
    FullCircle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookConfig {
    /// Antenna elements M.
    pub m: usize,
    /// Beam count B.
    pub b: usize,
    pub d_over_lambda: f64,
    pub grid: AngleGrid,
    /// Served sector [ψ_min, ψ_max] (rad) for the sine grid.
    pub sector: [f64; 2],
}

impl Default for CodebookConfig {
    fn default() -> Self {
        CodebookConfig {
            m: 16,
            b: 16,
            d_over_lambda: 0.5,
            grid: AngleGrid::UniformSine,
            sector: [-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2],
        }
    }
}

impl CodebookConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.b < 1 {
            return Err(Error::Config("codebook needs m >= 1 and b >= 1".into()));
        }
        if self.d_over_lambda <= 0.0 {
            return Err(Error::Config("d_over_lambda must be positive".into()));
        }
        Ok(())
    }

    /// Steering angle of beam `i` on the configured grid.
    pub fn beam_angle(&self, i: usize) -> f64 {
        match self.grid {
            AngleGrid::UniformSine => {
                let lo = self.sector[0].sin();
                let hi = self.sector[1].sin();
                (lo + (hi - lo) * i as f64 / self.b as f64).clamp(-1.0, 1.0).asin()
            }
            AngleGrid::FullCircle => std::f64::consts::TAU * i as f64 / self.b as f64,
        }
    }
}

/// ULA steering vector a(θ): entries exp(j·2π·(d/λ)·n·sin θ). The array is
/// horizontal, so elevation does not enter the response.
pub fn steering_vector(m: usize, d_over_lambda: f64, azimuth: f64) -> Vec<Complex64> {
    let step = std::f64::consts::TAU * d_over_lambda * azimuth.sin();
    (0..m).map(|n| Complex64::from_polar(1.0, step * n as f64)).collect()
}

/// The codebook F = {f_i}: unit-norm steered beams.
pub fn build_codebook(cfg: &CodebookConfig) -> Result<Vec<Vec<Complex64>>> {
    cfg.validate()?;
    let norm = 1.0 / (cfg.m as f64).sqrt();
    Ok((0..cfg.b)
        .map(|i| {
            steering_vector(cfg.m, cfg.d_over_lambda, cfg.beam_angle(i))
                .into_iter()
                .map(|v| v * norm)
                .collect()
        })
        .collect())
}

/// Pulse shaping for the path taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    /// sinc(t / T_s), truncated to the cyclic-prefix taps.
    IdealSinc,
}

impl PulseShape {
    fn eval(&self, t_over_ts: f64) -> f64 {
        match self {
            PulseShape::IdealSinc => {
                if t_over_ts.abs() < 1e-12 {
                    1.0
                } else {
                    let x = std::f64::consts::PI * t_over_ts;
                    x.sin() / x
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub gain_re: f64,
    pub gain_im: f64,
    /// Path delay (s).
    pub delay: f64,
    /// Azimuth of arrival (rad).
    pub azimuth: f64,
    /// Elevation of arrival (rad); carried but not used by the ULA.
    pub elevation: f64,
    pub is_los: bool,
}

impl Path {
    pub fn gain(&self) -> Complex64 {
        Complex64::new(self.gain_re, self.gain_im)
    }
}

/// Multipath description for one SBS-user link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<Path>,
    /// Subcarrier count K.
    pub k_subcarriers: usize,
    /// Cyclic-prefix length Q (pulse taps).
    pub cp_len: usize,
    /// Sample time T_s (s).
    pub sample_time: f64,
    pub pulse: PulseShape,
}

impl PathSet {
    pub fn validate(&self) -> Result<()> {
        if self.paths.iter().filter(|p| p.is_los).count() > 1 {
            return Err(Error::Config("at most one LoS path".into()));
        }
        if self.paths.iter().any(|p| p.delay < 0.0) {
            return Err(Error::Config("path delays must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Channel vector for subcarrier `k` with blockage bit `b` gating the LoS
/// term. An absent LoS path simply leaves the NLoS sum.
pub fn channel_response(
    paths: &PathSet,
    k: usize,
    blocked: bool,
    array: &CodebookConfig,
) -> Result<Vec<Complex64>> {
    paths.validate()?;
    if k >= paths.k_subcarriers {
        return Err(Error::Argument(format!(
            "subcarrier {k} out of range (K={})",
            paths.k_subcarriers
        )));
    }
    let mut h = vec![Complex64::new(0.0, 0.0); array.m];
    for p in &paths.paths {
        if p.is_los && blocked {
            continue;
        }
        // sum over cyclic-prefix taps q of gain * e^{-j 2pi k q / K} * pulse
        let mut tap_sum = Complex64::new(0.0, 0.0);
        for q in 0..paths.cp_len {
            let pulse = paths
                .pulse
                .eval((q as f64 * paths.sample_time - p.delay) / paths.sample_time);
            let ph = -std::f64::consts::TAU * k as f64 * q as f64 / paths.k_subcarriers as f64;
            tap_sum += Complex64::from_polar(pulse, ph);
        }
        let coeff = p.gain() * tap_sum;
        let a = steering_vector(array.m, array.d_over_lambda, p.azimuth);
        for (hi, ai) in h.iter_mut().zip(a.iter()) {
            *hi += coeff * ai;
        }
    }
    Ok(h)
}

/// All-subcarrier channel matrix.
pub fn channel_all_subcarriers(
    paths: &PathSet,
    blocked: bool,
    array: &CodebookConfig,
) -> Result<Vec<Vec<Complex64>>> {
    (0..paths.k_subcarriers)
        .map(|k| channel_response(paths, k, blocked, array))
        .collect()
}

/// RSS = Σ_k |h_k^H f|², transmit symbol and gain normalized to one.
pub fn rss(h: &[Vec<Complex64>], beam: &[Complex64]) -> f64 {
    h.iter()
        .map(|hk| {
            let dot: Complex64 = hk.iter().zip(beam.iter()).map(|(a, b)| a.conj() * b).sum();
            dot.norm_sqr()
        })
        .sum()
}

/// Exhaustive sweep; lowest index wins ties.
pub fn best_beam(h: &[Vec<Complex64>], codebook: &[Vec<Complex64>]) -> Result<(usize, f64)> {
    if codebook.is_empty() {
        return Err(Error::Argument("empty codebook".into()));
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, f) in codebook.iter().enumerate() {
        let p = rss(h, f);
        if p > best.1 {
            best = (i, p);
        }
    }
    Ok(best)
}

/// Synthetic path generator: one LoS path of unit gain at `los_azimuth`
/// plus `n_nlos` reflections with gains at most 20% of the LoS gain.
pub fn synthetic_paths(
    los_azimuth: f64,
    n_nlos: usize,
    k_subcarriers: usize,
    cp_len: usize,
    rng: &mut ChaCha8Rng,
) -> PathSet {
    let sample_time = 1.0 / 1.76e9; // 60 GHz-class OFDM sample clock
    let mut paths = vec![Path {
        gain_re: 1.0,
        gain_im: 0.0,
        delay: 0.0,
        azimuth: los_azimuth,
        elevation: 0.0,
        is_los: true,
    }];
    for _ in 0..n_nlos {
        let mag = 0.05 + 0.15 * rng.gen::<f64>();
        let phase = std::f64::consts::TAU * rng.gen::<f64>();
        let gain = Complex64::from_polar(mag, phase);
        let delay_taps = 1 + rng.gen_range(0..cp_len.max(2) - 1);
        let p = Path {
            gain_re: gain.re,
            gain_im: gain.im,
            delay: delay_taps as f64 * sample_time,
            azimuth: (rng.gen::<f64>() - 0.5) * std::f64::consts::PI,
            elevation: (rng.gen::<f64>() - 0.5) * 0.3,
            is_los: false,
        };
        assert!(p.gain().norm() <= 0.2, "NLoS gain must stay well below LoS");
        paths.push(p);
    }
    PathSet { paths, k_subcarriers, cp_len, sample_time, pulse: PulseShape::IdealSinc }
}

// ---------------------------------------------------------------------------
// Two-SBS serving trace
// ---------------------------------------------------------------------------

/// Handover policy for traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Reactive,
    Pho,
}

/// One SBS site for the serving trace: antenna position plus its link.
#[derive(Debug, Clone)]
pub struct SbsSite {
    pub antenna: [f64; 3],
    pub paths: PathSet,
    pub codebook_cfg: CodebookConfig,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub rss_1: f64,
    pub rss_2: f64,
    /// Serving SBS index (0 or 1).
    pub serving: usize,
    pub blocked_1: bool,
    pub blocked_2: bool,
}

/// Serving trace of a user covered by two SBSs while the scenario's objects
/// cross. The reactive policy switches only after the blockage plus the
/// recovery delay; the PHO policy switches at the decided trigger point
/// before the blockage instant.
pub fn two_sbs_trace(
    scenario: &Scenario,
    sites: &[SbsSite; 2],
    policy: Policy,
    budget: &TimingBudget,
    p_shift: f64,
    dwell: f64,
    reactive_recovery: f64,
) -> Result<Vec<TracePoint>> {
    let step = scenario.config.frame_interval;
    let events: Vec<Vec<BlockEvent>> = sites
        .iter()
        .map(|s| blocking_events(scenario, s.antenna, dwell))
        .collect::<Result<_>>()?;

    let horizon = events
        .iter()
        .flatten()
        .map(|e| e.t_clear + 2.0)
        .fold(2.0f64, f64::max);

    let codebooks: Vec<Vec<Vec<Complex64>>> = sites
        .iter()
        .map(|s| build_codebook(&s.codebook_cfg))
        .collect::<Result<_>>()?;

    let rss_of = |site: usize, blocked: bool| -> Result<f64> {
        let h = channel_all_subcarriers(&sites[site].paths, blocked, &sites[site].codebook_cfg)?;
        Ok(best_beam(&h, &codebooks[site])?.1)
    };
    let rss_clear = [rss_of(0, false)?, rss_of(1, false)?];
    let rss_blocked = [rss_of(0, true)?, rss_of(1, true)?];

    let serving0 = if rss_clear[0] >= rss_clear[1] { 0 } else { 1 };
    // precomputed switch commands: (time, new_serving)
    let mut switches: Vec<(f64, usize)> = Vec::new();
    match policy {
        Policy::Pho => {
            for (site, evs) in events.iter().enumerate() {
                for e in evs {
                    let t_b_hat = e.t_cross - e.t_detect;
                    let d = crate::pho::decide(true, t_b_hat, p_shift, budget)?;
                    let completion = e.t_detect + d.shifted_t_b.max(budget.t_f);
                    switches.push((completion.min(e.t_cross), 1 - site));
                }
            }
        }
        Policy::Reactive => {
            for (site, evs) in events.iter().enumerate() {
                for e in evs {
                    switches.push((e.t_clear + reactive_recovery, 1 - site));
                }
            }
        }
    }
    switches.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut out = Vec::new();
    let mut serving = serving0;
    let mut next_switch = 0usize;
    for i in 0.. {
        let t = i as f64 * step;
        if t > horizon {
            break;
        }
        while next_switch < switches.len() && switches[next_switch].0 <= t {
            serving = switches[next_switch].1;
            next_switch += 1;
        }
        let blocked: Vec<bool> = events
            .iter()
            .map(|evs| evs.iter().any(|e| t >= e.t_cross && t < e.t_clear))
            .collect();
        out.push(TracePoint {
            t,
            rss_1: if blocked[0] { rss_blocked[0] } else { rss_clear[0] },
            rss_2: if blocked[1] { rss_blocked[1] } else { rss_clear[1] },
            serving,
            blocked_1: blocked[0],
            blocked_2: blocked[1],
        });
    }
    Ok(out)
}

/// CSV export: t, rss_sbs1, rss_sbs2, serving, blocked_1, blocked_2.
pub fn write_trace_csv(path: &std::path::Path, trace: &[TracePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "rss_sbs1", "rss_sbs2", "serving", "blocked_1", "blocked_2"])?;
    for p in trace {
        w.write_record(&[
            format!("{:.6}", p.t),
            format!("{:.9e}", p.rss_1),
            format!("{:.9e}", p.rss_2),
            p.serving.to_string(),
            (p.blocked_1 as u8).to_string(),
            (p.blocked_2 as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
