//! Synthetic shallow-water multipath data.
//!
//! Ground-truth arrivals come either from the image method in an isovelocity
//! waveguide or from an explicit [`RaypathSet`]. Snapshots are plane-wave
//! mixtures of those arrivals plus circular white Gaussian noise, generated
//! per frequency bin for narrowband or broadband processing.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{steering_unchecked, ArrayGeometry, Raypath, RaypathSet};
use crate::C64;

/// Highest reflection order generated by [`eigenray_angles`].
pub const MAX_REFLECTION_ORDER: usize = 8;

/// Isovelocity waveguide with a point source and a vertical receiver array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideScenario {
    pub water_depth: f64,
    /// Horizontal source-array distance in meters.
    pub range: f64,
    pub source_depth: f64,
    /// Sensor depths; the first entry is the reference sensor.
    pub receiver_depths: Vec<f64>,
    pub sound_speed: f64,
    pub num_paths: usize,
}

impl WaveguideScenario {
    /// Receiver depths follow the array: the reference sensor sits at
    /// `reference_depth` and depth grows with sensor index.
    pub fn for_array(
        water_depth: f64,
        range: f64,
        source_depth: f64,
        reference_depth: f64,
        geom: &ArrayGeometry,
        num_paths: usize,
    ) -> Result<Self> {
        geom.validate()?;
        let r0 = geom.reference_index as f64;
        let scenario = Self {
            water_depth,
            range,
            source_depth,
            receiver_depths: (0..geom.num_sensors)
                .map(|m| reference_depth + (m as f64 - r0) * geom.spacing)
                .collect(),
            sound_speed: geom.sound_speed,
            num_paths,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.water_depth;
        if !(h.is_finite() && h > 0.0) {
            return domain(format!("water depth must be positive, got {h}"));
        }
        if !(self.range.is_finite() && self.range > 0.0) {
            return domain(format!("range must be positive, got {}", self.range));
        }
        if !(self.source_depth > 0.0 && self.source_depth < h) {
            return domain(format!("source depth {} outside (0, {h})", self.source_depth));
        }
        if self.receiver_depths.is_empty() {
            return domain("no receiver depths");
        }
        if let Some(z) = self.receiver_depths.iter().find(|&&z| !(z > 0.0 && z < h)) {
            return domain(format!("receiver depth {z} outside (0, {h})"));
        }
        if !(self.sound_speed.is_finite() && self.sound_speed > 0.0) {
            return domain(format!("sound speed must be positive, got {}", self.sound_speed));
        }
        if self.num_paths == 0 {
            return domain("num_paths must be at least 1");
        }
        Ok(())
    }

    pub fn reference_depth(&self) -> f64 {
        self.receiver_depths[0]
    }
}

/// Image source of the waveguide: depth and bounce counts.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ImageSource {
    depth: f64,
    surface_bounces: usize,
    bottom_bounces: usize,
}

impl ImageSource {
    fn order(&self) -> usize {
        self.surface_bounces + self.bottom_bounces
    }
}

/// Images `2nH + z_s` and `2nH − z_s` up to `max_order` reflections.
fn image_sources(water_depth: f64, source_depth: f64, max_order: usize) -> Vec<ImageSource> {
    let mut images = Vec::new();
    let span = max_order as i64;
    for n in -span..=span {
        let shift = 2.0 * n as f64 * water_depth;
        let k = n.unsigned_abs() as usize;
        images.push(ImageSource {
            depth: shift + source_depth,
            surface_bounces: k,
            bottom_bounces: k,
        });
        let (surface, bottom) = if n >= 1 { (k - 1, k) } else { (k + 1, k) };
        images.push(ImageSource {
            depth: shift - source_depth,
            surface_bounces: surface,
            bottom_bounces: bottom,
        });
    }
    images.retain(|im| im.order() <= max_order);
    images
}

/// The `P` lowest-order image-method arrivals at the reference receiver,
/// sorted by |angle|.
///
/// Angles are `atan((z_ref − z_image) / D)`, amplitudes are `±1` with one
/// sign flip per surface bounce (pressure-release surface, rigid bottom) and
/// delays are travel times relative to the earliest arrival.
pub fn eigenray_angles(scenario: &WaveguideScenario) -> Result<RaypathSet> {
    scenario.validate()?;
    let mut images = image_sources(scenario.water_depth, scenario.source_depth, MAX_REFLECTION_ORDER);
    if scenario.num_paths > images.len() {
        return domain(format!(
            "{} paths requested but only {} images up to order {MAX_REFLECTION_ORDER}",
            scenario.num_paths,
            images.len()
        ));
    }
    let z_ref = scenario.reference_depth();
    let angle = |im: &ImageSource| ((z_ref - im.depth) / scenario.range).atan().to_degrees();
    images.sort_by(|a, b| {
        a.order()
            .cmp(&b.order())
            .then(angle(a).abs().total_cmp(&angle(b).abs()))
    });
    images.truncate(scenario.num_paths);

    let lengths: Vec<f64> = images.iter().map(|im| scenario.range.hypot(z_ref - im.depth)).collect();
    let shortest = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    let mut paths: Vec<Raypath> = images
        .iter()
        .zip(&lengths)
        .map(|(im, len)| Raypath {
            angle_deg: angle(im),
            amplitude: C64::new(if im.surface_bounces % 2 == 0 { 1.0 } else { -1.0 }, 0.0),
            delay_s: (len - shortest) / scenario.sound_speed,
        })
        .collect();
    paths.sort_by(|a, b| a.angle_deg.abs().total_cmp(&b.angle_deg.abs()));
    RaypathSet::new(paths)
}

/// How path amplitudes vary across snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coherence {
    /// `a_p^(l) = a_p` for every snapshot.
    #[default]
    Coherent,
    /// `a_p^(l) = a_p z_p^(l)` with independent `z ~ CN(0, 1)`.
    Incoherent,
    /// `a_p^(l) = a_p (ρ c^(l) + √(1−ρ²) z_p^(l))`: correlation `ρ` between paths.
    Partial(f64),
}

impl Coherence {
    fn validate(&self) -> Result<()> {
        if let Coherence::Partial(rho) = *self {
            if !(0.0..=1.0).contains(&rho) {
                return domain(format!("correlation coefficient {rho} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Noise level and RNG seed. An infinite `snr_db` disables noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Self {
        Self { snr_db, seed }
    }

    pub fn noiseless(seed: u64) -> Self {
        Self {
            snr_db: f64::INFINITY,
            seed,
        }
    }
}

/// Frequency-domain array data `Y` (M×L) at a single frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    pub data: DMatrix<C64>,
    pub frequency: f64,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<C64>, frequency: f64) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return domain("snapshot matrix must have at least one sensor and one snapshot");
        }
        if !(frequency.is_finite() && frequency > 0.0) {
            return domain(format!("frequency must be positive, got {frequency}"));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return domain("snapshot matrix has non-finite entries");
        }
        Ok(Self { data, frequency })
    }

    pub fn num_sensors(&self) -> usize {
        self.data.nrows()
    }

    pub fn num_snapshots(&self) -> usize {
        self.data.ncols()
    }
}

fn complex_normal(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Per-snapshot path amplitudes, P×L.
fn draw_amplitudes(paths: &RaypathSet, snapshots: usize, coherence: Coherence, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let p = paths.len();
    let mut amps = DMatrix::zeros(p, snapshots);
    for l in 0..snapshots {
        let common = match coherence {
            Coherence::Partial(_) => complex_normal(rng),
            _ => C64::new(0.0, 0.0),
        };
        for (i, path) in paths.paths().iter().enumerate() {
            amps[(i, l)] = path.amplitude
                * match coherence {
                    Coherence::Coherent => C64::new(1.0, 0.0),
                    Coherence::Incoherent => complex_normal(rng),
                    Coherence::Partial(rho) => common * rho + complex_normal(rng) * (1.0 - rho * rho).sqrt(),
                };
        }
    }
    amps
}

fn synthesize_bins(
    paths: &RaypathSet,
    frequencies: &[f64],
    snapshots: usize,
    coherence: Coherence,
    noise: NoiseSpec,
    geom: &ArrayGeometry,
) -> Result<Vec<SnapshotMatrix>> {
    geom.validate()?;
    coherence.validate()?;
    if snapshots == 0 {
        return domain("at least one snapshot is required");
    }
    if noise.snr_db.is_nan() || noise.snr_db == f64::NEG_INFINITY {
        return domain(format!("invalid SNR {}", noise.snr_db));
    }
    if frequencies.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return domain("frequencies must be positive");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let amps = draw_amplitudes(paths, snapshots, coherence, &mut rng);

    let mut clean = Vec::with_capacity(frequencies.len());
    let mut power = 0.0;
    for &freq in frequencies {
        let mut steer = DMatrix::zeros(geom.num_sensors, paths.len());
        for (i, path) in paths.paths().iter().enumerate() {
            let delay = C64::from_polar(1.0, -2.0 * PI * freq * path.delay_s);
            steer.set_column(i, &(steering_unchecked(path.angle_deg, freq, geom) * delay));
        }
        let y = steer * &amps;
        power += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        clean.push(y);
    }
    let signal_power = power / (frequencies.len() * geom.num_sensors * snapshots) as f64;

    let sigma = if noise.snr_db.is_infinite() {
        0.0
    } else {
        (signal_power / 10f64.powf(noise.snr_db / 10.0)).sqrt()
    };
    frequencies
        .iter()
        .zip(clean)
        .map(|(&freq, mut y)| {
            if sigma > 0.0 {
                for z in y.iter_mut() {
                    *z += complex_normal(&mut rng) * sigma;
                }
            }
            SnapshotMatrix::new(y, freq)
        })
        .collect()
}

/// `L` snapshots at one frequency: `Y[:,l] = Σ_p a_p^(l) e^{-j2πντ_p} g(θ_p) + n^(l)`.
///
/// The noise variance is set from the realised signal power averaged over
/// all sensors and snapshots, so `10 log10(P_s / P_n)` equals `snr_db` in
/// expectation.
pub fn synthesize_snapshots(
    paths: &RaypathSet,
    frequency: f64,
    snapshots: usize,
    coherence: Coherence,
    noise: NoiseSpec,
    geom: &ArrayGeometry,
) -> Result<SnapshotMatrix> {
    Ok(synthesize_bins(paths, &[frequency], snapshots, coherence, noise, geom)?.remove(0))
}

/// Bin centre frequencies: `B` evenly spaced points spanning `band`
/// inclusive, or the band centre when `B = 1`.
pub fn bin_frequencies(band: (f64, f64), bins: usize) -> Result<Vec<f64>> {
    let (lo, hi) = band;
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
        return domain(format!("invalid band [{lo}, {hi}] Hz"));
    }
    match bins {
        0 => domain("at least one frequency bin is required"),
        1 => Ok(vec![0.5 * (lo + hi)]),
        _ if hi == lo => domain(format!("empty band [{lo}, {hi}] Hz")),
        _ => Ok((0..bins)
            .map(|b| lo + (hi - lo) * b as f64 / (bins - 1) as f64)
            .collect()),
    }
}

/// One [`SnapshotMatrix`] per frequency bin of `band`; path amplitudes are
/// shared across bins and each path carries its delay phase `e^{-j2πν_b τ_p}`.
/// Noise is scaled on the signal power averaged over all bins.
pub fn synthesize_broadband(
    paths: &RaypathSet,
    band: (f64, f64),
    bins: usize,
    snapshots: usize,
    coherence: Coherence,
    noise: NoiseSpec,
    geom: &ArrayGeometry,
) -> Result<Vec<SnapshotMatrix>> {
    let freqs = bin_frequencies(band, bins)?;
    synthesize_bins(paths, &freqs, snapshots, coherence, noise, geom)
}

/// `10 log10(P_s / P_n)` of `noisy` measured against its noise-free version.
pub fn empirical_snr_db(clean: &[SnapshotMatrix], noisy: &[SnapshotMatrix]) -> f64 {
    let mut ps = 0.0;
    let mut pn = 0.0;
    for (c, n) in clean.iter().zip(noisy) {
        ps += c.data.iter().map(|z| z.norm_sqr()).sum::<f64>();
        pn += (&n.data - &c.data).iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    10.0 * (ps / pn).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigen;
    use crate::model::steering_vector;

    fn reference_geom() -> ArrayGeometry {
        ArrayGeometry::new(11, 2.5, 1500.0).unwrap()
    }

    fn scenario(num_paths: usize) -> WaveguideScenario {
        WaveguideScenario::for_array(100.0, 2000.0, 20.0, 50.0, &reference_geom(), num_paths).unwrap()
    }

    #[test]
    fn equal_depths_direct_path_is_broadside() {
        let s = WaveguideScenario::for_array(100.0, 2000.0, 50.0, 50.0, &reference_geom(), 1).unwrap();
        let rays = eigenray_angles(&s).unwrap();
        assert_eq!(rays.len(), 1);
        assert_eq!(rays.paths()[0].angle_deg, 0.0);
        assert_eq!(rays.paths()[0].delay_s, 0.0);
    }

    #[test]
    fn first_order_image_angles() {
        let rays = eigenray_angles(&scenario(3)).unwrap();
        let angles = rays.angles();
        // direct atan(30/2000), surface atan(70/2000), bottom atan(-130/2000)
        assert!((angles[0] - 0.859_372).abs() < 1e-5, "{angles:?}");
        assert!((angles[1] - 2.004_534).abs() < 1e-5, "{angles:?}");
        assert!((angles[2] + 3.718_994).abs() < 1e-5, "{angles:?}");
        assert_eq!(rays.paths()[1].amplitude, C64::new(-1.0, 0.0));
        assert_eq!(rays.paths()[2].amplitude, C64::new(1.0, 0.0));
        let surface_delay = (2000f64.hypot(70.0) - 2000f64.hypot(30.0)) / 1500.0;
        assert!((rays.paths()[1].delay_s - surface_delay).abs() < 1e-15);
    }

    #[test]
    fn five_lowest_order_paths() {
        let rays = eigenray_angles(&scenario(5)).unwrap();
        let mut a = rays.angles();
        a.sort_by(f64::total_cmp);
        let expect = [(-170f64).atan2(2000.0), (-130f64).atan2(2000.0), 30f64.atan2(2000.0), 70f64.atan2(2000.0), 230f64.atan2(2000.0)];
        for (x, y) in a.iter().zip(expect) {
            assert!((x - y.to_degrees()).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_paths_rejected() {
        assert!(eigenray_angles(&scenario(2 * MAX_REFLECTION_ORDER + 1)).is_ok());
        assert!(eigenray_angles(&scenario(2 * MAX_REFLECTION_ORDER + 2)).is_err());
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let g = reference_geom();
        assert!(WaveguideScenario::for_array(100.0, 2000.0, 0.0, 50.0, &g, 1).is_err());
        assert!(WaveguideScenario::for_array(100.0, 2000.0, 20.0, 90.0, &g, 1).is_err());
        assert!(WaveguideScenario::for_array(100.0, -1.0, 20.0, 50.0, &g, 1).is_err());
    }

    #[test]
    fn noiseless_columns_equal_steering_vector() {
        let geom = reference_geom();
        let paths = RaypathSet::from_angles(&[3.2]).unwrap();
        let y = synthesize_snapshots(&paths, 1500.0, 4, Coherence::Coherent, NoiseSpec::noiseless(1), &geom).unwrap();
        let g = steering_vector(3.2, 1500.0, &geom).unwrap();
        for l in 0..4 {
            assert_eq!(y.data.column(l).into_owned(), g);
        }
    }

    #[test]
    fn same_seed_same_data() {
        let geom = reference_geom();
        let rays = eigenray_angles(&scenario(5)).unwrap();
        let a = synthesize_broadband(&rays, (1350.0, 1650.0), 4, 7, Coherence::Incoherent, NoiseSpec::new(0.0, 9), &geom).unwrap();
        let b = synthesize_broadband(&rays, (1350.0, 1650.0), 4, 7, Coherence::Incoherent, NoiseSpec::new(0.0, 9), &geom).unwrap();
        assert_eq!(a, b);
        let c = synthesize_broadband(&rays, (1350.0, 1650.0), 4, 7, Coherence::Incoherent, NoiseSpec::new(0.0, 10), &geom).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_bin_broadband_matches_narrowband() {
        let geom = reference_geom();
        let rays = eigenray_angles(&scenario(3)).unwrap();
        let noise = NoiseSpec::new(3.0, 4);
        let bb = synthesize_broadband(&rays, (1400.0, 1600.0), 1, 5, Coherence::Partial(0.5), noise, &geom).unwrap();
        let nb = synthesize_snapshots(&rays, 1500.0, 5, Coherence::Partial(0.5), noise, &geom).unwrap();
        assert_eq!(bb.len(), 1);
        assert_eq!(bb[0], nb);
    }

    #[test]
    fn delay_phase_slope_at_reference_sensor() {
        let geom = reference_geom();
        let paths = RaypathSet::new(vec![Raypath {
            angle_deg: 4.0,
            amplitude: C64::new(1.0, 0.0),
            delay_s: 1e-3,
        }])
        .unwrap();
        let bins = synthesize_broadband(&paths, (1000.0, 1100.0), 11, 1, Coherence::Coherent, NoiseSpec::noiseless(0), &geom).unwrap();
        // consecutive bins are 10 Hz apart: phase step -2π·10·1e-3 rad
        for w in bins.windows(2) {
            let step = (w[1].data[(0, 0)] / w[0].data[(0, 0)]).arg();
            let slope = step / (w[1].frequency - w[0].frequency);
            assert!((slope + 2.0 * PI * 1e-3).abs() < 1e-12, "{slope}");
        }
    }

    #[test]
    fn coherent_pair_single_bin_is_rank_one() {
        let geom = reference_geom();
        let rays = eigenray_angles(&scenario(2)).unwrap();
        let y = synthesize_snapshots(&rays, 1500.0, 20, Coherence::Coherent, NoiseSpec::noiseless(0), &geom).unwrap();
        let r = &y.data * y.data.adjoint();
        let (vals, _) = hermitian_eigen(&r);
        assert!(vals[0] > 1.0);
        assert!(vals[1].abs() < 1e-10 * vals[0], "{vals:?}");
    }

    #[test]
    fn bin_frequency_edges() {
        assert_eq!(bin_frequencies((1.0, 3.0), 3).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(bin_frequencies((1.0, 3.0), 1).unwrap(), vec![2.0]);
        assert!(bin_frequencies((2.0, 2.0), 4).is_err());
        assert!(bin_frequencies((3.0, 2.0), 4).is_err());
        assert!(bin_frequencies((1.0, 3.0), 0).is_err());
    }

    #[test]
    fn snr_zero_db_over_many_snapshots() {
        let geom = reference_geom();
        let rays = eigenray_angles(&scenario(5)).unwrap();
        let clean = synthesize_snapshots(&rays, 1500.0, 10_000, Coherence::Coherent, NoiseSpec::noiseless(2), &geom).unwrap();
        let noisy = synthesize_snapshots(&rays, 1500.0, 10_000, Coherence::Coherent, NoiseSpec::new(0.0, 2), &geom).unwrap();
        let snr = empirical_snr_db(&[clean], &[noisy]);
        assert!(snr.abs() < 0.2, "{snr}");
    }
}
