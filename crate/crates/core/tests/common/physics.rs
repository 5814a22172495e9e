//! Peak positions predicted by the beat, Doppler and array phase formulas,
//! measured on noiseless simulated cubes.

use cubelearn::ctensor::ComplexTensor;
use cubelearn::dft_oracle::{preprocess_dft, reduce_input, HeatmapOptions, SlicingKind};
use cubelearn::radar_sim::{clutter_removal, simulate_cube, RadarConfig, RawDataCube, TargetTrajectory};

pub fn noiseless() -> RadarConfig {
    RadarConfig { noise_std: 0.0, ..RadarConfig::default() }
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0
}

/// Argmax of every frame row of a `[frames, bins]` heatmap.
fn frame_peaks(cube: &RawDataCube<f64>, kind: SlicingKind) -> Vec<usize> {
    let h = preprocess_dft(cube, kind, &HeatmapOptions::default()).unwrap();
    let bins = h.shape()[1];
    h.data().chunks(bins).map(argmax).collect()
}

fn cube(targets: &[TargetTrajectory]) -> RawDataCube<f64> {
    simulate_cube(&noiseless(), targets, 0, 0).unwrap()
}

/// Range peak of a static target at 0.4 m, per frame.
pub fn range_peaks() -> Vec<usize> {
    frame_peaks(&cube(&[TargetTrajectory::fixed(1.0, 0.4, 0.0)]), SlicingKind::RT)
}

/// Doppler peak offsets from the centre bin for a target closing at 0.4 m/s.
pub fn doppler_offsets() -> Vec<i64> {
    let c = cube(&[TargetTrajectory::moving(1.0, 0.45, -0.4, 0.0)]);
    let centre = noiseless().n_chirps as i64 / 2;
    frame_peaks(&c, SlicingKind::DT).into_iter().map(|p| p as i64 - centre).collect()
}

/// Doppler peak of a static target; zero Doppler sits at the centre bin.
pub fn static_doppler_peaks() -> Vec<usize> {
    frame_peaks(&cube(&[TargetTrajectory::fixed(1.0, 0.4, 0.0)]), SlicingKind::DT)
}

/// Angle peak (of 64 bins) for a target at 30 degrees.
pub fn angle_peaks() -> Vec<usize> {
    let th = 30f64.to_radians();
    frame_peaks(&cube(&[TargetTrajectory::fixed(1.0, 0.4, th)]), SlicingKind::AT)
}

/// Range peak after keeping half the samples and chirps.
pub fn reduced_range_peaks() -> (Vec<usize>, [usize; 4]) {
    let c = reduce_input(&cube(&[TargetTrajectory::fixed(1.0, 0.4, 0.0)]), 0.5, 0.5).unwrap();
    (frame_peaks(&c, SlicingKind::RT), c.shape())
}

/// Expected range bin `round(f_b * n / fs)`.
pub fn expected_range_bin(range: f64, n_samples: usize) -> usize {
    let cfg = noiseless();
    (cfg.beat_frequency(range) * n_samples as f64 / cfg.sample_rate).round() as usize
}

/// Expected Doppler offset `2 v T_c n_chirps / lambda`, rounded.
pub fn expected_doppler_offset(v: f64) -> i64 {
    let cfg = noiseless();
    (2.0 * v * cfg.chirp_interval() * cfg.n_chirps as f64 / cfg.wavelength()).round() as i64
}

/// Residual energy ratio of a static scene after clutter removal, and the
/// largest chirp-axis mean left in a noisy moving scene.
pub fn clutter() -> (f64, f64) {
    let static_cube = cube(&[TargetTrajectory::fixed(1.0, 0.4, 0.3), TargetTrajectory::fixed(0.5, 0.9, -0.5)]);
    let cleaned = clutter_removal(&static_cube).unwrap();
    let ratio = cleaned.data.energy() / static_cube.data.energy();

    let cfg = RadarConfig { noise_std: 0.3, ..RadarConfig::default() };
    let noisy: RawDataCube<f64> = simulate_cube(&cfg, &[TargetTrajectory::moving(1.0, 0.4, 0.3, 0.1)], 0, 5).unwrap();
    let cleaned = clutter_removal(&noisy).unwrap();
    (ratio, max_chirp_mean(&cleaned.data))
}

pub fn max_chirp_mean(t: &ComplexTensor<f64>) -> f64 {
    let [f, a, c, s] = <[usize; 4]>::try_from(t.shape()).unwrap();
    let mut worst = 0f64;
    for fa in 0..f * a {
        for n in 0..s {
            let (mut re, mut im) = (0.0, 0.0);
            for k in 0..c {
                let (r, i) = t.get((fa * c + k) * s + n);
                re += r;
                im += i;
            }
            worst = worst.max((re / c as f64).abs()).max((im / c as f64).abs());
        }
    }
    worst
}
