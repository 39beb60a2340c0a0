use pho_core::radar::*;
use pho_core::rng::SeedStream;

fn main() {
    let cfg = RadarConfig::default(); // 30 dB SNR
    for i in 0..6 {
        let sin_true = 0.70 + 0.05 * i as f64;
        let az = sin_true.asin();
        let tgt = TargetEcho { range: 21.0, radial_speed: 0.0, azimuth: az, reflectivity: 1.0 };
        let mut errs = Vec::new();
        for seed in 0..30u64 {
            let mut rng = SeedStream::new(seed).stream("nz");
            let f = synthesize_frame(&[tgt], &cfg, &mut rng, 0.0).unwrap();
            let dets = detect(&process_cube(&f, &cfg).unwrap(), 15.0);
            if let Some(d) = dets.first() {
                errs.push((d.phi.sin() - sin_true) * 32.0);
            }
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / errs.len() as f64).sqrt();
        println!("sin {sin_true:.2}: bias {mean:+.3} bins, sd {sd:.3} bins (n={})", errs.len());
    }
}
