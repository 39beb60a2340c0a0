//! FMCW radar synthesis and range/velocity/angle processing.
//!
//! [`synthesize_frame`] builds the IF sample tensor (receivers × samples ×
//! chirps) for a set of point targets: per-sample beat phase 2π·(2mr/c)·t,
//! inter-chirp Doppler phase 4π·v·(τ_c+τ_p)/λ, inter-antenna phase
//! 2π·(d/λ)·sin φ, plus circular complex Gaussian noise. [`process_cube`]
//! runs the three FFTs (unitary scaling, so cube energy equals frame
//! energy) and [`detect`] extracts calibrated (ρ, υ, φ) peaks.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Direction;
use crate::SPEED_OF_LIGHT;

/// Radar system parameters (Table-II-class device by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarConfig {
    pub n_tx: usize,
    /// Receive antennas M_r.
    pub n_rx: usize,
    /// Chirps per frame L.
    pub n_chirps: usize,
    /// Start frequency f_c (Hz).
    pub f_c: f64,
    /// Chirp slope m (Hz/s).
    pub slope: f64,
    /// Chirp duration τ_c (s).
    pub chirp_duration: f64,
    /// Inter-chirp pause τ_p (s).
    pub chirp_pause: f64,
    /// ADC samples per chirp S.
    pub samples_per_chirp: usize,
    /// ADC rate f_s (Hz).
    pub sampling_rate: f64,
    /// Configured maximum range (m).
    pub max_range: f64,
    /// Receive element spacing as a fraction of λ.
    pub rx_spacing: f64,
    /// Angle-FFT size (receivers zero-padded to this).
    pub angle_fft_size: usize,
    /// Complex noise amplitude: E|n|^2 = noise_std^2 per sample.
    pub noise_std: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        let mut cfg = RadarConfig {
            n_tx: 1,
            n_rx: 4,
            n_chirps: 128,
            f_c: 77.0e9,
            slope: 15_015.0e9,
            chirp_duration: 60.0e-6,
            chirp_pause: 5.0e-6,
            samples_per_chirp: 256,
            sampling_rate: 5.0e6,
            max_range: 100.0,
            rx_spacing: 0.5,
            angle_fft_size: 64,
            noise_std: 0.0,
        };
        cfg.noise_std = cfg.noise_std_for_snr(30.0);
        cfg
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        let all_positive = self.n_tx >= 1
            && self.n_rx >= 1
            && self.n_chirps >= 1
            && self.samples_per_chirp >= 1
            && self.f_c > 0.0
            && self.slope > 0.0
            && self.chirp_duration > 0.0
            && self.chirp_pause > 0.0
            && self.sampling_rate > 0.0
            && self.max_range > 0.0
            && self.rx_spacing > 0.0;
        if !all_positive {
            return Err(Error::Config("radar parameters must be positive".into()));
        }
        let sample_window = self.samples_per_chirp as f64 / self.sampling_rate;
        if sample_window > self.chirp_duration {
            return Err(Error::Config(format!(
                "sampling window {:.1} us exceeds chirp duration {:.1} us",
                sample_window * 1e6,
                self.chirp_duration * 1e6
            )));
        }
        if self.angle_fft_size < self.n_rx {
            return Err(Error::Config("angle_fft_size must be >= n_rx".into()));
        }
        Ok(())
    }

    /// Radar wavelength λ_R.
    pub fn lambda(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// Chirp repetition interval τ_c + τ_p.
    pub fn chirp_rep(&self) -> f64 {
        self.chirp_duration + self.chirp_pause
    }

    /// Range per range bin: Δr = f_s·c/(2·m·S).
    pub fn delta_r(&self) -> f64 {
        self.sampling_rate * SPEED_OF_LIGHT
            / (2.0 * self.slope * self.samples_per_chirp as f64)
    }

    /// Speed per velocity bin: Δv = λ/(2·L·(τ_c+τ_p)).
    pub fn delta_v(&self) -> f64 {
        self.lambda() / (2.0 * self.n_chirps as f64 * self.chirp_rep())
    }

    /// Unambiguous range for complex sampling: f_s·c/(2m).
    pub fn unambiguous_range(&self) -> f64 {
        self.sampling_rate * SPEED_OF_LIGHT / (2.0 * self.slope)
    }

    /// Unambiguous radial speed: λ/(4·(τ_c+τ_p)).
    pub fn unambiguous_speed(&self) -> f64 {
        self.lambda() / (4.0 * self.chirp_rep())
    }

    /// Frame measurement duration T_m = L·(τ_c+τ_p).
    pub fn frame_duration(&self) -> f64 {
        self.n_chirps as f64 * self.chirp_rep()
    }

    /// Coherent processing gain of a unit-reflectivity target at the cube
    /// peak, under the unitary FFT scaling.
    fn peak_gain(&self) -> f64 {
        ((self.samples_per_chirp * self.n_chirps) as f64).sqrt() * self.n_rx as f64
            / (self.angle_fft_size as f64).sqrt()
    }

    /// Per-sample noise amplitude that yields the requested post-processing
    /// SNR for a unit-reflectivity target.
    pub fn noise_std_for_snr(&self, snr_db: f64) -> f64 {
        let bin_factor = (self.n_rx as f64 / self.angle_fft_size as f64).sqrt();
        self.peak_gain() / (bin_factor * 10f64.powf(snr_db / 20.0))
    }
}

/// A point reflector seen by the radar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEcho {
    /// Slant range (m).
    pub range: f64,
    /// Radial speed, positive receding (m/s).
    pub radial_speed: f64,
    /// Azimuth angle of arrival (rad), 0 at broadside.
    pub azimuth: f64,
    pub reflectivity: f64,
}

/// IF sample tensor, receiver-major: index (rx·S + sample)·L + chirp.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarFrame {
    pub samples: Vec<Complex64>,
    pub n_rx: usize,
    pub n_samples: usize,
    pub n_chirps: usize,
    pub timestamp: f64,
    /// Set when a target lies beyond the unambiguous range; its beat
    /// frequency wraps and the detected range is wrong.
    pub aliased: bool,
}

impl RadarFrame {
    #[inline]
    pub fn at(&self, rx: usize, sample: usize, chirp: usize) -> Complex64 {
        self.samples[(rx * self.n_samples + sample) * self.n_chirps + chirp]
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Magnitude cube over (range bin × velocity bin × angle bin) with bin
/// calibration. Velocity and angle axes are zero-centered.
#[derive(Debug, Clone)]
pub struct RadarCube {
    pub mag: Vec<f64>,
    pub n_range: usize,
    pub n_vel: usize,
    pub n_angle: usize,
    pub delta_r: f64,
    pub delta_v: f64,
    pub d_over_lambda: f64,
    pub timestamp: f64,
}

impl RadarCube {
    #[inline]
    pub fn idx(&self, r: usize, v: usize, a: usize) -> usize {
        (r * self.n_vel + v) * self.n_angle + a
    }

    #[inline]
    pub fn at(&self, r: usize, v: usize, a: usize) -> f64 {
        self.mag[self.idx(r, v, a)]
    }

    pub fn range_of_bin(&self, r: usize) -> f64 {
        r as f64 * self.delta_r
    }

    /// Signed velocity of a (zero-centered) velocity bin.
    pub fn vel_of_bin(&self, v: usize) -> f64 {
        (v as f64 - self.n_vel as f64 / 2.0) * self.delta_v
    }

    /// sin(φ) of a (zero-centered) angle bin.
    pub fn sin_phi_of_bin(&self, a: usize) -> f64 {
        (a as f64 - self.n_angle as f64 / 2.0) / (self.n_angle as f64 * self.d_over_lambda)
    }

    pub fn energy(&self) -> f64 {
        self.mag.iter().map(|m| m * m).sum()
    }

    pub fn argmax(&self) -> (usize, usize, usize) {
        let mut best = (0, 0, 0);
        let mut best_mag = -1.0;
        for r in 0..self.n_range {
            for v in 0..self.n_vel {
                for a in 0..self.n_angle {
                    let m = self.at(r, v, a);
                    if m > best_mag {
                        best_mag = m;
                        best = (r, v, a);
                    }
                }
            }
        }
        best
    }
}

/// A calibrated peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Slant range ρ (m).
    pub rho: f64,
    /// Radial speed υ, signed (m/s).
    pub upsilon: f64,
    /// Azimuth AoA φ (rad).
    pub phi: f64,
    /// Peak magnitude over the estimated noise floor (dB).
    pub snr_db: f64,
    pub timestamp: f64,
}

/// Superposition of target IF phasors plus noise, per the stop-and-go
/// narrowband model.
pub fn synthesize_frame(
    targets: &[TargetEcho],
    cfg: &RadarConfig,
    rng: &mut ChaCha8Rng,
    timestamp: f64,
) -> Result<RadarFrame> {
    cfg.validate()?;
    for t in targets {
        if t.range > cfg.max_range {
            return Err(Error::Synthesis(format!(
                "target range {:.2} m beyond max range {:.2} m",
                t.range, cfg.max_range
            )));
        }
        if t.range < 0.0 {
            return Err(Error::Synthesis("negative target range".into()));
        }
    }
    let aliased = targets.iter().any(|t| t.range > cfg.unambiguous_range());

    let (m_r, s, l) = (cfg.n_rx, cfg.samples_per_chirp, cfg.n_chirps);
    let lambda = cfg.lambda();
    let t_rep = cfg.chirp_rep();
    let mut samples = vec![Complex64::new(0.0, 0.0); m_r * s * l];

    for tgt in targets {
        let beat = 2.0 * cfg.slope * tgt.range / SPEED_OF_LIGHT;
        let phase_n = std::f64::consts::TAU * beat / cfg.sampling_rate;
        let phase_l = 2.0 * std::f64::consts::TAU * tgt.radial_speed * t_rep / lambda;
        let phase_a = std::f64::consts::TAU * cfg.rx_spacing * tgt.azimuth.sin();
        let phase_0 = 2.0 * std::f64::consts::TAU * tgt.range / lambda;
        for a in 0..m_r {
            for n in 0..s {
                let base = phase_0 + phase_a * a as f64 + phase_n * n as f64;
                let row = (a * s + n) * l;
                for c in 0..l {
                    let ph = base + phase_l * c as f64;
                    samples[row + c] += Complex64::from_polar(tgt.reflectivity, ph);
                }
            }
        }
    }

    if cfg.noise_std > 0.0 {
        // per-component sigma so that E|n|^2 = noise_std^2
        let comp = cfg.noise_std / std::f64::consts::SQRT_2;
        for v in samples.iter_mut() {
            *v += Complex64::new(comp * gauss(rng), comp * gauss(rng));
        }
    }

    Ok(RadarFrame { samples, n_rx: m_r, n_samples: s, n_chirps: l, timestamp, aliased })
}

/// Standard normal via Box-Muller; two uniforms per draw keeps the stream
/// layout independent of rejection behavior.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Range-FFT → Velocity-FFT (zero-centered) → Angle-FFT (zero-padded,
/// zero-centered), all unitary.
pub fn process_cube(frame: &RadarFrame, cfg: &RadarConfig) -> Result<RadarCube> {
    if frame.n_rx != cfg.n_rx
        || frame.n_samples != cfg.samples_per_chirp
        || frame.n_chirps != cfg.n_chirps
    {
        return Err(Error::Shape(format!(
            "frame {}x{}x{} vs config {}x{}x{}",
            frame.n_rx, frame.n_samples, frame.n_chirps,
            cfg.n_rx, cfg.samples_per_chirp, cfg.n_chirps
        )));
    }
    let (m_r, s, l, a_fft) = (cfg.n_rx, cfg.samples_per_chirp, cfg.n_chirps, cfg.angle_fft_size);
    let mut planner = FftPlanner::<f64>::new();
    let fft_s = planner.plan_fft_forward(s);
    let fft_l = planner.plan_fft_forward(l);
    let fft_a = planner.plan_fft_forward(a_fft);

    let mut work = frame.samples.clone();

    // Range-FFT along samples (stride l within one receiver block)
    let scale_s = 1.0 / (s as f64).sqrt();
    let mut col = vec![Complex64::new(0.0, 0.0); s];
    for rx in 0..m_r {
        for c in 0..l {
            for n in 0..s {
                col[n] = work[(rx * s + n) * l + c];
            }
            fft_s.process(&mut col);
            for n in 0..s {
                work[(rx * s + n) * l + c] = col[n] * scale_s;
            }
        }
    }

    // Velocity-FFT along chirps (contiguous), then zero-center
    let scale_l = 1.0 / (l as f64).sqrt();
    let mut row = vec![Complex64::new(0.0, 0.0); l];
    for rx in 0..m_r {
        for n in 0..s {
            let base = (rx * s + n) * l;
            row.copy_from_slice(&work[base..base + l]);
            fft_l.process(&mut row);
            for c in 0..l {
                // fftshift: output bin c holds input frequency bin c - l/2
                work[base + c] = row[(c + l / 2) % l] * scale_l;
            }
        }
    }

    // Angle-FFT across receivers, zero-padded, zero-centered
    let scale_a = 1.0 / (a_fft as f64).sqrt();
    let mut mag = vec![0.0f64; s * l * a_fft];
    let mut ant = vec![Complex64::new(0.0, 0.0); a_fft];
    for n in 0..s {
        for c in 0..l {
            for v in ant.iter_mut() {
                *v = Complex64::new(0.0, 0.0);
            }
            for rx in 0..m_r {
                ant[rx] = work[(rx * s + n) * l + c];
            }
            fft_a.process(&mut ant);
            let out = (n * l + c) * a_fft;
            for k in 0..a_fft {
                mag[out + k] = (ant[(k + a_fft / 2) % a_fft] * scale_a).norm();
            }
        }
    }

    Ok(RadarCube {
        mag,
        n_range: s,
        n_vel: l,
        n_angle: a_fft,
        delta_r: cfg.delta_r(),
        delta_v: cfg.delta_v(),
        d_over_lambda: cfg.rx_spacing,
        timestamp: frame.timestamp,
    })
}

/// Local maxima above `threshold_db` over the estimated noise floor,
/// greedily de-duplicated; when several returns share velocity and angle,
/// the shortest range wins.
pub fn detect(cube: &RadarCube, threshold_db: f64) -> Vec<Detection> {
    let mut floor = noise_floor(cube);
    if floor <= 0.0 {
        // noise-free cube: any nonzero peak stands infinitely proud
        let max = cube.mag.iter().cloned().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Vec::new();
        }
        floor = max * 1e-9;
    }
    let min_mag = floor * 10f64.powf(threshold_db / 20.0);

    let (nr, nv, na) = (cube.n_range, cube.n_vel, cube.n_angle);
    let mut candidates: Vec<(usize, usize, usize, f64)> = Vec::new();
    for r in 0..nr {
        for v in 0..nv {
            for a in 0..na {
                let m = cube.at(r, v, a);
                if m < min_mag {
                    continue;
                }
                if is_local_max(cube, r, v, a, m) {
                    candidates.push((r, v, a, m));
                }
            }
        }
    }
    candidates.sort_by(|x, y| y.3.partial_cmp(&x.3).unwrap());

    // non-maximum suppression in range x velocity (sidelobes of the short
    // angle aperture share the range/velocity cell)
    let mut peaks: Vec<(usize, usize, usize, f64)> = Vec::new();
    for c in candidates {
        let clash = peaks.iter().any(|p| {
            (p.0 as i64 - c.0 as i64).abs() <= 6 && (p.1 as i64 - c.1 as i64).abs() <= 6
        });
        if !clash {
            peaks.push(c);
        }
    }

    // multiple range returns of one object: keep the shortest
    peaks.sort_by(|x, y| x.0.cmp(&y.0));
    let mut kept: Vec<(usize, usize, usize, f64)> = Vec::new();
    for p in peaks {
        let dup = kept.iter().any(|k| {
            (k.1 as i64 - p.1 as i64).abs() <= 2 && (k.2 as i64 - p.2 as i64).abs() <= 8
        });
        if !dup {
            kept.push(p);
        }
    }

    kept.sort_by(|x, y| y.3.partial_cmp(&x.3).unwrap());
    // the zero-padded angle mainlobe is n_angle/n_rx-ish bins wide and
    // nearly flat on top, so its parabola needs a wide stencil to sit on
    // real curvature; range and velocity mainlobes span ~2 bins
    let angle_stencil = (cube.n_angle / 8).max(1) as i64;
    kept.into_iter()
        .map(|(r, v, a, m)| {
            let dr = parabolic_offset(
                sample_mag(cube, r as i64 - 1, v, a),
                m,
                sample_mag(cube, r as i64 + 1, v, a),
                1.0,
            );
            let dv = parabolic_offset(
                sample_mag_v(cube, r, v as i64 - 1, a),
                m,
                sample_mag_v(cube, r, v as i64 + 1, a),
                1.0,
            );
            let da = parabolic_offset(
                sample_mag_a(cube, r, v, a as i64 - angle_stencil),
                m,
                sample_mag_a(cube, r, v, a as i64 + angle_stencil),
                angle_stencil as f64,
            );
            let sin_phi = (a as f64 + da - cube.n_angle as f64 / 2.0)
                / (cube.n_angle as f64 * cube.d_over_lambda);
            Detection {
                rho: (r as f64 + dr) * cube.delta_r,
                upsilon: (v as f64 + dv - cube.n_vel as f64 / 2.0) * cube.delta_v,
                phi: sin_phi.clamp(-1.0, 1.0).asin(),
                snr_db: 20.0 * (m / floor).log10(),
                timestamp: cube.timestamp,
            }
        })
        .collect()
}

/// Vertex offset of the parabola through three magnitudes spaced `k` bins
/// apart, clamped to half the spacing; zero on flats.
fn parabolic_offset(left: f64, mid: f64, right: f64, k: f64) -> f64 {
    let den = left - 2.0 * mid + right;
    if den.abs() < 1e-12 * mid.abs().max(1e-300) {
        return 0.0;
    }
    (k * 0.5 * (left - right) / den).clamp(-0.5 * k, 0.5 * k)
}

fn sample_mag(cube: &RadarCube, r: i64, v: usize, a: usize) -> f64 {
    if r < 0 || r >= cube.n_range as i64 {
        return 0.0;
    }
    cube.at(r as usize, v, a)
}

fn sample_mag_v(cube: &RadarCube, r: usize, v: i64, a: usize) -> f64 {
    if v < 0 || v >= cube.n_vel as i64 {
        return 0.0;
    }
    cube.at(r, v as usize, a)
}

fn sample_mag_a(cube: &RadarCube, r: usize, v: usize, a: i64) -> f64 {
    // the angle axis is an FFT axis: periodic in sin-space
    let n = cube.n_angle as i64;
    cube.at(r, v, a.rem_euclid(n) as usize)
}

fn noise_floor(cube: &RadarCube) -> f64 {
    let mut sampled: Vec<f64> = cube.mag.iter().step_by(17).copied().collect();
    if sampled.is_empty() {
        return 0.0;
    }
    let mid = sampled.len() / 2;
    sampled.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    sampled[mid]
}

fn is_local_max(cube: &RadarCube, r: usize, v: usize, a: usize, m: f64) -> bool {
    for dr in -1i64..=1 {
        for dv in -1i64..=1 {
            for da in -1i64..=1 {
                if dr == 0 && dv == 0 && da == 0 {
                    continue;
                }
                let (rr, vv, aa) = (r as i64 + dr, v as i64 + dv, a as i64 + da);
                if rr < 0 || vv < 0 || aa < 0
                    || rr >= cube.n_range as i64
                    || vv >= cube.n_vel as i64
                    || aa >= cube.n_angle as i64
                {
                    continue;
                }
                if cube.at(rr as usize, vv as usize, aa as usize) > m {
                    return false;
                }
            }
        }
    }
    true
}

/// Movement direction from time-ordered ground-projected x positions.
///
/// `history` holds (timestamp, x) pairs; `min_displacement` is the
/// resolution floor below which the direction is ambiguous.
pub fn estimate_direction(history: &[(f64, f64)], min_displacement: f64) -> Result<Direction> {
    if history.len() < 2 {
        return Err(Error::InsufficientHistory(history.len()));
    }
    let mut ordered: Vec<(f64, f64)> = history.to_vec();
    ordered.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if ordered.first().unwrap().0 == ordered.last().unwrap().0 {
        return Err(Error::Argument("detections must have distinct timestamps".into()));
    }
    let dx = ordered.last().unwrap().1 - ordered.first().unwrap().1;
    if dx.abs() < min_displacement {
        return Err(Error::AmbiguousDirection { dx, floor: min_displacement });
    }
    Ok(if dx > 0.0 { Direction::PlusX } else { Direction::MinusX })
}

// ---------------------------------------------------------------------------
// Binary exports
// ---------------------------------------------------------------------------

/// Dump: little-endian complex64 (f32 re, f32 im) in (receiver, sample,
/// chirp) order, plus a JSON sidecar `<path>.json` with the config.
pub fn write_frame_dump(path: &std::path::Path, frame: &RadarFrame, cfg: &RadarConfig) -> Result<()> {
    use std::io::Write;
    let mut buf = Vec::with_capacity(frame.samples.len() * 8);
    for v in &frame.samples {
        buf.extend_from_slice(&(v.re as f32).to_le_bytes());
        buf.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    let sidecar = serde_json::json!({
        "config": cfg,
        "order": ["receiver", "sample", "chirp"],
        "dtype": "complex64-le",
        "timestamp": frame.timestamp,
        "aliased": frame.aliased,
    });
    std::fs::write(
        path.with_extension("json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// NPY v1.0 export of the magnitude cube, shape (range, velocity, angle),
/// dtype `<f8`, C order.
pub fn write_cube_npy(path: &std::path::Path, cube: &RadarCube) -> Result<()> {
    use std::io::Write;
    let header_body = format!(
        "{{'descr': '<f8', 'fortran_order': False, 'shape': ({}, {}, {}), }}",
        cube.n_range, cube.n_vel, cube.n_angle
    );
    let mut header = header_body.into_bytes();
    let unpadded = 10 + header.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    header.extend(std::iter::repeat(b' ').take(pad));
    header.push(b'\n');

    let mut f = std::fs::File::create(path)?;
    f.write_all(b"\x93NUMPY\x01\x00")?;
    f.write_all(&(header.len() as u16).to_le_bytes())?;
    f.write_all(&header)?;
    let mut buf = Vec::with_capacity(cube.mag.len() * 8);
    for v in &cube.mag {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;

    fn quiet(cfg: &RadarConfig) -> RadarConfig {
        RadarConfig { noise_std: 0.0, ..cfg.clone() }
    }

    fn rng(n: u64) -> ChaCha8Rng {
        SeedStream::new(n).stream("radar-test")
    }

    #[test]
    fn bin_calibration_table_values() {
        let cfg = RadarConfig::default();
        assert!((cfg.delta_r() - 0.1951).abs() < 1e-4, "delta_r {}", cfg.delta_r());
        assert!((cfg.delta_v() - 0.2341).abs() < 1e-4, "delta_v {}", cfg.delta_v());
        assert!((cfg.unambiguous_range() - 49.95).abs() < 0.01);
        assert!((cfg.unambiguous_speed() - 14.98).abs() < 0.01);
        assert!((cfg.frame_duration() - 8.32e-3).abs() < 1e-9);
        cfg.validate().unwrap();
    }

    #[test]
    fn sampling_window_invariant() {
        let mut cfg = RadarConfig::default();
        cfg.chirp_duration = 40.0e-6; // 256 / 5 MHz = 51.2 us will not fit
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_targets_zero_frame() {
        let cfg = quiet(&RadarConfig::default());
        let f = synthesize_frame(&[], &cfg, &mut rng(1), 0.0).unwrap();
        assert!(f.samples.iter().all(|c| c.norm() == 0.0));
        let cube = process_cube(&f, &cfg).unwrap();
        assert!(cube.mag.iter().all(|m| *m == 0.0));
        assert!(detect(&cube, 15.0).is_empty());
    }

    #[test]
    fn single_target_range_bin_100() {
        let cfg = quiet(&RadarConfig::default());
        let tgt = TargetEcho { range: 19.51, radial_speed: 0.0, azimuth: 0.0, reflectivity: 1.0 };
        let f = synthesize_frame(&[tgt], &cfg, &mut rng(2), 0.0).unwrap();
        let cube = process_cube(&f, &cfg).unwrap();
        let (r, v, a) = cube.argmax();
        assert_eq!(r, 100);
        assert_eq!(v, cfg.n_chirps / 2); // zero-velocity bin
        assert_eq!(a, cfg.angle_fft_size / 2); // broadside bin
    }

    #[test]
    fn moving_target_velocity_bin() {
        let cfg = quiet(&RadarConfig::default());
        let v_true = 10.0 * cfg.delta_v();
        let tgt = TargetEcho { range: 19.51, radial_speed: v_true, azimuth: 0.0, reflectivity: 1.0 };
        let f = synthesize_frame(&[tgt], &cfg, &mut rng(3), 0.0).unwrap();
        let cube = process_cube(&f, &cfg).unwrap();
        let (r, v, a) = cube.argmax();
        assert_eq!(r, 100);
        assert_eq!(v as i64 - (cfg.n_chirps / 2) as i64, 10);
        assert_eq!(a, cfg.angle_fft_size / 2);
    }

    #[test]
    fn two_targets_two_range_peaks() {
        let cfg = quiet(&RadarConfig::default());
        let dr = cfg.delta_r();
        let t1 = TargetEcho { range: 100.0 * dr, radial_speed: 0.0, azimuth: 0.0, reflectivity: 1.0 };
        let t2 = TargetEcho { range: 102.0 * dr, radial_speed: 0.0, azimuth: 0.0, reflectivity: 1.0 };
        let f = synthesize_frame(&[t1, t2], &cfg, &mut rng(4), 0.0).unwrap();
        let cube = process_cube(&f, &cfg).unwrap();
        let vmid = cfg.n_chirps / 2;
        let amid = cfg.angle_fft_size / 2;
        let profile: Vec<f64> = (0..cube.n_range).map(|r| cube.at(r, vmid, amid)).collect();
        assert!(profile[100] > profile[101] && profile[102] > profile[101]);
        assert!(profile[100] > profile[99] && profile[102] > profile[103]);
    }

    #[test]
    fn parseval_energy_preserved() {
        let cfg = RadarConfig::default(); // default noise on
        let tgt = TargetEcho { range: 23.0, radial_speed: 4.2, azimuth: 0.3, reflectivity: 1.0 };
        let f = synthesize_frame(&[tgt], &cfg, &mut rng(5), 0.0).unwrap();
        let cube = process_cube(&f, &cfg).unwrap();
        let (fe, ce) = (f.energy(), cube.energy());
        assert!(((fe - ce) / fe).abs() < 1e-9, "frame {fe} vs cube {ce}");
    }

    #[test]
    fn linearity_of_superposition() {
        let cfg = quiet(&RadarConfig::default());
        let t1 = TargetEcho { range: 12.0, radial_speed: 3.0, azimuth: 0.2, reflectivity: 0.7 };
        let t2 = TargetEcho { range: 33.0, radial_speed: -6.0, azimuth: -0.4, reflectivity: 1.3 };
        let both = synthesize_frame(&[t1, t2], &cfg, &mut rng(6), 0.0).unwrap();
        let a = synthesize_frame(&[t1], &cfg, &mut rng(7), 0.0).unwrap();
        let b = synthesize_frame(&[t2], &cfg, &mut rng(8), 0.0).unwrap();
        let max_err = both
            .samples
            .iter()
            .zip(a.samples.iter().zip(b.samples.iter()))
            .map(|(s, (x, y))| (s - (x + y)).norm())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-9, "max abs error {max_err}");
    }

    #[test]
    fn detect_single_target_within_bins() {
        let cfg = RadarConfig::default();
        let tgt = TargetEcho { range: 27.3, radial_speed: -5.1, azimuth: 0.35, reflectivity: 1.0 };
        let f = synthesize_frame(&[tgt], &cfg, &mut rng(9), 0.0).unwrap();
        let cube = process_cube(&f, &cfg).unwrap();
        let dets = detect(&cube, 15.0);
        assert_eq!(dets.len(), 1, "got {dets:?}");
        let d = dets[0];
        assert!((d.rho - tgt.range).abs() <= cfg.delta_r());
        assert!((d.upsilon - tgt.radial_speed).abs() <= cfg.delta_v());
        assert!((d.phi.sin() - tgt.azimuth.sin()).abs() <= 1.0 / (64.0 * cfg.rx_spacing) + 1e-9);
    }

    #[test]
    fn broadside_target_phi_within_one_bin() {
        let cfg = RadarConfig::default();
        let tgt = TargetEcho { range: 20.0, radial_speed: 0.0, azimuth: 0.0, reflectivity: 1.0 };
        let f = synthesize_frame(&[tgt], &cfg, &mut rng(10), 0.0).unwrap();
        let dets = detect(&process_cube(&f, &cfg).unwrap(), 15.0);
        assert_eq!(dets.len(), 1);
        let bin = 1.0 / (cfg.angle_fft_size as f64 * cfg.rx_spacing);
        assert!(dets[0].phi.sin().abs() <= bin + 1e-12);
    }

    #[test]
    fn noise_only_false_alarm_rate_under_one_percent() {
        let cfg = RadarConfig::default();
        let mut false_frames = 0;
        for seed in 0..100u64 {
            let mut r = SeedStream::new(seed).stream("noise-only");
            let f = synthesize_frame(&[], &cfg, &mut r, 0.0).unwrap();
            let dets = detect(&process_cube(&f, &cfg).unwrap(), 15.0);
            if !dets.is_empty() {
                false_frames += 1;
            }
        }
        assert!(false_frames <= 1, "{false_frames} noise-only frames fired");
    }

    #[test]
    fn beyond_max_range_is_error_beyond_unambiguous_is_flagged() {
        let cfg = quiet(&RadarConfig::default());
        let too_far = TargetEcho { range: 120.0, radial_speed: 0.0, azimuth: 0.0, reflectivity: 1.0 };
        assert!(synthesize_frame(&[too_far], &cfg, &mut rng(11), 0.0).is_err());
        let aliased = TargetEcho { range: 70.0, radial_speed: 0.0, azimuth: 0.0, reflectivity: 1.0 };
        let f = synthesize_frame(&[aliased], &cfg, &mut rng(12), 0.0).unwrap();
        assert!(f.aliased);
        let near = TargetEcho { range: 30.0, ..aliased };
        assert!(!synthesize_frame(&[near], &cfg, &mut rng(13), 0.0).unwrap().aliased);
    }

    #[test]
    fn direction_from_projections() {
        assert_eq!(
            estimate_direction(&[(0.0, -9.0), (0.25, -8.4)], 0.1).unwrap(),
            Direction::PlusX
        );
        // same displacements, reversed time order
        assert_eq!(
            estimate_direction(&[(0.25, 5.0), (0.0, 5.9)], 0.1).unwrap(),
            Direction::MinusX
        );
        assert!(matches!(
            estimate_direction(&[(0.0, 1.0)], 0.1),
            Err(Error::InsufficientHistory(1))
        ));
        assert!(matches!(
            estimate_direction(&[(0.0, 1.0), (0.25, 1.01)], 0.1),
            Err(Error::AmbiguousDirection { .. })
        ));
    }

    #[test]
    fn round_trip_recovery_rate() {
        // reduced-size version of the acceptance criterion
        let cfg = RadarConfig::default();
        let mut ok = 0;
        let n = 60;
        let mut r = rng(14);
        for i in 0..n {
            let range = 2.0 + (cfg.unambiguous_range() - 4.0) * rand::Rng::gen::<f64>(&mut r);
            let speed = 0.9 * cfg.unambiguous_speed() * (2.0 * rand::Rng::gen::<f64>(&mut r) - 1.0);
            let az = (60f64).to_radians() * (2.0 * rand::Rng::gen::<f64>(&mut r) - 1.0);
            let tgt = TargetEcho { range, radial_speed: speed, azimuth: az, reflectivity: 1.0 };
            let mut nrng = SeedStream::new(i).stream("rt-noise");
            let f = synthesize_frame(&[tgt], &cfg, &mut nrng, 0.0).unwrap();
            let dets = detect(&process_cube(&f, &cfg).unwrap(), 15.0);
            if let Some(d) = dets.first() {
                if (d.rho - range).abs() <= cfg.delta_r()
                    && (d.upsilon - speed).abs() <= cfg.delta_v()
                    && (d.phi.sin() - az.sin()).abs() <= 1.0 / 32.0 + 1e-9
                {
                    ok += 1;
                }
            }
        }
        assert!(ok as f64 >= 0.95 * n as f64, "{ok}/{n} recovered");
    }
}
