//! Array geometry, angle grids, steering vectors and the over-complete
//! steering dictionary shared by every estimator.
//!
//! Angles are in degrees at every public boundary and measured from the
//! horizontal: a positive angle is a wavefront travelling downwards along a
//! vertical array whose sensors are indexed by increasing depth. The phase of
//! sensor `m` for a plane wave at angle `θ` and frequency `ν` is
//!
//! `-2π ν (m - m_ref) d sin θ / c`
//!
//! so the reference sensor always sees unit gain.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::C64;

/// Uniform vertical line array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_sensors: usize,
    /// Inter-sensor spacing in meters.
    pub spacing: f64,
    pub reference_index: usize,
    /// Sound speed in m/s.
    pub sound_speed: f64,
}

impl ArrayGeometry {
    pub fn new(num_sensors: usize, spacing: f64, sound_speed: f64) -> Result<Self> {
        Self::with_reference(num_sensors, spacing, sound_speed, 0)
    }

    pub fn with_reference(
        num_sensors: usize,
        spacing: f64,
        sound_speed: f64,
        reference_index: usize,
    ) -> Result<Self> {
        let geom = Self {
            num_sensors,
            spacing,
            reference_index,
            sound_speed,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_sensors < 2 {
            return domain(format!("array needs at least 2 sensors, got {}", self.num_sensors));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return domain(format!("sensor spacing must be positive, got {}", self.spacing));
        }
        if !(self.sound_speed.is_finite() && self.sound_speed > 0.0) {
            return domain(format!("sound speed must be positive, got {}", self.sound_speed));
        }
        if self.reference_index >= self.num_sensors {
            return domain(format!(
                "reference index {} outside [0, {})",
                self.reference_index, self.num_sensors
            ));
        }
        Ok(())
    }

    pub fn wavelength(&self, frequency: f64) -> f64 {
        self.sound_speed / frequency
    }

    /// Largest |θ| (degrees) for which steering vectors at `frequency` are
    /// free of grating-lobe ambiguity: `|d sin θ / λ| < 1/2`.
    pub fn unambiguous_half_width(&self, frequency: f64) -> f64 {
        let ratio = self.wavelength(frequency) / (2.0 * self.spacing);
        if ratio >= 1.0 {
            90.0
        } else {
            ratio.asin().to_degrees()
        }
    }
}

/// Strictly increasing set of candidate angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AngleGrid {
    angles: Vec<f64>,
}

impl AngleGrid {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.len() < 2 {
            return domain("angle grid needs at least two points");
        }
        for &a in &angles {
            if !a.is_finite() || !(-90.0..=90.0).contains(&a) {
                return domain(format!("grid angle {a} outside [-90, 90] degrees"));
            }
        }
        if angles.windows(2).any(|w| w[1] <= w[0]) {
            return domain("grid angles must be strictly increasing");
        }
        Ok(Self { angles })
    }

    /// `min, min + step, …` up to `max` inclusive (within 1e-9 of a step).
    pub fn uniform(min_deg: f64, max_deg: f64, step_deg: f64) -> Result<Self> {
        if !(step_deg.is_finite() && step_deg > 0.0) {
            return domain(format!("grid step must be positive, got {step_deg}"));
        }
        if !(max_deg > min_deg) {
            return domain(format!("empty grid range [{min_deg}, {max_deg}]"));
        }
        let count = ((max_deg - min_deg) / step_deg + 1e-9).floor() as usize + 1;
        Self::new((0..count).map(|i| min_deg + i as f64 * step_deg).collect())
    }

    /// `[-90°, 90°]` in 0.2° steps (901 points).
    pub fn default_grid() -> Self {
        Self::uniform(-90.0, 90.0, 0.2).expect("static grid is valid")
    }

    /// Symmetric grid in multiples of `step_deg` covering the sector that is
    /// unambiguous for `geom` up to `max_frequency`.
    pub fn unambiguous(geom: &ArrayGeometry, max_frequency: f64, step_deg: f64) -> Result<Self> {
        if !(max_frequency.is_finite() && max_frequency > 0.0) {
            return domain(format!("frequency must be positive, got {max_frequency}"));
        }
        let half = geom.unambiguous_half_width(max_frequency);
        let n = (half / step_deg - 1e-9).floor();
        // the half-width itself aliases onto its negative; stay strictly inside
        let n = if (n * step_deg - half).abs() < 1e-12 { n - 1.0 } else { n };
        Self::uniform(-n * step_deg, n * step_deg, step_deg)
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Mean spacing between consecutive angles.
    pub fn resolution(&self) -> f64 {
        (self.angles[self.len() - 1] - self.angles[0]) / (self.len() - 1) as f64
    }

    /// Index of the grid angle closest to `angle_deg`.
    pub fn nearest_index(&self, angle_deg: f64) -> usize {
        let pos = self.angles.partition_point(|&a| a < angle_deg);
        if pos == 0 {
            0
        } else if pos == self.len() {
            self.len() - 1
        } else if (self.angles[pos] - angle_deg).abs() < (angle_deg - self.angles[pos - 1]).abs() {
            pos
        } else {
            pos - 1
        }
    }
}

/// Steering matrix `G` (M×Q) at one frequency.
#[derive(Debug, Clone)]
pub struct SteeringDictionary {
    pub frequency: f64,
    pub matrix: DMatrix<C64>,
    pub grid: AngleGrid,
}

impl SteeringDictionary {
    pub fn num_sensors(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn column(&self, q: usize) -> DVector<C64> {
        self.matrix.column(q).into_owned()
    }
}

/// One propagation path: arrival angle, complex amplitude and delay relative
/// to the earliest arrival at the reference sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Raypath {
    pub angle_deg: f64,
    pub amplitude: C64,
    pub delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Raypath>", into = "Vec<Raypath>")]
pub struct RaypathSet {
    paths: Vec<Raypath>,
}

impl RaypathSet {
    pub fn new(paths: Vec<Raypath>) -> Result<Self> {
        if paths.is_empty() {
            return domain("raypath set is empty");
        }
        for p in &paths {
            if !p.angle_deg.is_finite() || !(-90.0..=90.0).contains(&p.angle_deg) {
                return domain(format!("raypath angle {} outside [-90, 90]", p.angle_deg));
            }
            if !(p.amplitude.re.is_finite() && p.amplitude.im.is_finite() && p.delay_s.is_finite()) {
                return domain("raypath amplitude and delay must be finite");
            }
        }
        for (i, a) in paths.iter().enumerate() {
            if paths[i + 1..].iter().any(|b| b.angle_deg == a.angle_deg) {
                return domain(format!("duplicate raypath angle {}", a.angle_deg));
            }
        }
        Ok(Self { paths })
    }

    /// Unit-amplitude, zero-delay paths at the given angles.
    pub fn from_angles(angles_deg: &[f64]) -> Result<Self> {
        Self::new(
            angles_deg
                .iter()
                .map(|&angle_deg| Raypath {
                    angle_deg,
                    amplitude: C64::new(1.0, 0.0),
                    delay_s: 0.0,
                })
                .collect(),
        )
    }

    /// Checks `P < M` for use with `geom`.
    pub fn check_against(&self, geom: &ArrayGeometry) -> Result<()> {
        if self.len() >= geom.num_sensors {
            return domain(format!(
                "{} raypaths need more than {} sensors",
                self.len(),
                geom.num_sensors
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Raypath] {
        &self.paths
    }

    pub fn angles(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.angle_deg).collect()
    }
}

impl TryFrom<Vec<f64>> for AngleGrid {
    type Error = Error;

    fn try_from(angles: Vec<f64>) -> Result<Self> {
        Self::new(angles)
    }
}

impl From<AngleGrid> for Vec<f64> {
    fn from(grid: AngleGrid) -> Self {
        grid.angles
    }
}

impl TryFrom<Vec<Raypath>> for RaypathSet {
    type Error = Error;

    fn try_from(paths: Vec<Raypath>) -> Result<Self> {
        Self::new(paths)
    }
}

impl From<RaypathSet> for Vec<Raypath> {
    fn from(set: RaypathSet) -> Self {
        set.paths
    }
}

fn check_frequency(frequency: f64) -> Result<()> {
    if !(frequency.is_finite() && frequency > 0.0) {
        return domain(format!("frequency must be positive, got {frequency}"));
    }
    Ok(())
}

/// Plane-wave response of `geom` at `angle_deg` and `frequency` (Hz).
pub fn steering_vector(angle_deg: f64, frequency: f64, geom: &ArrayGeometry) -> Result<DVector<C64>> {
    if !angle_deg.is_finite() || !(-90.0..=90.0).contains(&angle_deg) {
        return domain(format!("angle {angle_deg} outside [-90, 90] degrees"));
    }
    check_frequency(frequency)?;
    geom.validate()?;
    Ok(steering_unchecked(angle_deg, frequency, geom))
}

pub(crate) fn steering_unchecked(angle_deg: f64, frequency: f64, geom: &ArrayGeometry) -> DVector<C64> {
    let k = -2.0 * PI * frequency * geom.spacing * angle_deg.to_radians().sin() / geom.sound_speed;
    let reference = geom.reference_index as f64;
    DVector::from_fn(geom.num_sensors, |m, _| C64::from_polar(1.0, k * (m as f64 - reference)))
}

/// Stacks `steering_vector(θ_q)` for every grid angle into `G`.
pub fn build_dictionary(grid: &AngleGrid, frequency: f64, geom: &ArrayGeometry) -> Result<SteeringDictionary> {
    check_frequency(frequency)?;
    geom.validate()?;
    if grid.len() <= geom.num_sensors {
        return domain(format!(
            "grid of {} angles is not over-complete for {} sensors",
            grid.len(),
            geom.num_sensors
        ));
    }
    let mut matrix = DMatrix::zeros(geom.num_sensors, grid.len());
    for (q, &angle) in grid.angles().iter().enumerate() {
        matrix.set_column(q, &steering_unchecked(angle, frequency, geom));
    }
    Ok(SteeringDictionary {
        frequency,
        matrix,
        grid: grid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_array() -> ArrayGeometry {
        ArrayGeometry::new(11, 2.5, 1500.0).unwrap()
    }

    #[test]
    fn broadside_is_all_ones() {
        let g = steering_vector(0.0, 1234.5, &reference_array()).unwrap();
        assert!(g.iter().all(|z| (*z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn thirty_degrees_second_sensor_is_minus_j() {
        // phase -2π·2.5·0.5 = -2.5π  ->  -j
        let g = steering_vector(30.0, 1500.0, &reference_array()).unwrap();
        assert!((g[1] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((g[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn endfire_half_wavelength_pair() {
        let geom = ArrayGeometry::new(2, 0.5, 1.0).unwrap();
        let g = steering_vector(90.0, 1.0, &geom).unwrap();
        assert!((g[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((g[1] - C64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let geom = reference_array();
        assert!(steering_vector(90.5, 1500.0, &geom).is_err());
        assert!(steering_vector(10.0, 0.0, &geom).is_err());
        assert!(steering_vector(10.0, -5.0, &geom).is_err());
        assert!(ArrayGeometry::new(1, 1.0, 1500.0).is_err());
        assert!(ArrayGeometry::new(4, 0.0, 1500.0).is_err());
        assert!(ArrayGeometry::with_reference(4, 1.0, 1500.0, 4).is_err());
        assert!(AngleGrid::new(vec![0.0, 0.0, 1.0]).is_err());
        assert!(AngleGrid::new(vec![-91.0, 0.0]).is_err());
    }

    #[test]
    fn reference_sensor_row_is_ones() {
        let geom = ArrayGeometry::with_reference(6, 1.3, 1500.0, 3).unwrap();
        let grid = AngleGrid::uniform(-40.0, 40.0, 5.0).unwrap();
        let dict = build_dictionary(&grid, 900.0, &geom).unwrap();
        for q in 0..grid.len() {
            assert!((dict.matrix[(3, q)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn three_point_grid_middle_column() {
        let geom = ArrayGeometry::new(2, 0.5, 1500.0).unwrap();
        let grid = AngleGrid::new(vec![-10.0, 0.0, 10.0]).unwrap();
        let dict = build_dictionary(&grid, 1500.0, &geom).unwrap();
        assert!(dict.column(1).iter().all(|z| (*z - C64::new(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn default_dictionary_shape_and_modulus() {
        let dict = build_dictionary(&AngleGrid::default_grid(), 1500.0, &reference_array()).unwrap();
        assert_eq!(dict.matrix.shape(), (11, 901));
        assert!(dict.matrix.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn columns_are_vandermonde() {
        let geom = reference_array();
        let dict = build_dictionary(&AngleGrid::default_grid(), 1500.0, &geom).unwrap();
        let mut worst: f64 = 0.0;
        for q in 0..dict.grid.len() {
            let ratio = dict.matrix[(1, q)] / dict.matrix[(0, q)];
            for m in 1..geom.num_sensors - 1 {
                let r = dict.matrix[(m + 1, q)] / dict.matrix[(m, q)];
                worst = worst.max((r - ratio).norm());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn column_matches_steering_vector_bitwise() {
        let geom = reference_array();
        let grid = AngleGrid::uniform(-20.0, 20.0, 0.5).unwrap();
        let dict = build_dictionary(&grid, 1400.0, &geom).unwrap();
        for (q, &a) in grid.angles().iter().enumerate() {
            assert_eq!(dict.column(q), steering_vector(a, 1400.0, &geom).unwrap());
        }
    }

    #[test]
    fn unambiguous_grid_stays_inside_sector() {
        let geom = reference_array();
        let grid = AngleGrid::unambiguous(&geom, 1500.0, 0.2).unwrap();
        let half = geom.unambiguous_half_width(1500.0);
        assert!((half - 0.2f64.asin().to_degrees()).abs() < 1e-12);
        assert!(grid.angles()[grid.len() - 1] < half);
        assert!((grid.angles()[0] + grid.angles()[grid.len() - 1]).abs() < 1e-12);
        assert_eq!(grid.nearest_index(0.0), grid.len() / 2);
    }

    #[test]
    fn nearest_index_picks_closest() {
        let grid = AngleGrid::uniform(-1.0, 1.0, 0.5).unwrap();
        assert_eq!(grid.nearest_index(-5.0), 0);
        assert_eq!(grid.nearest_index(0.3), 3);
        assert_eq!(grid.nearest_index(0.2), 2);
        assert_eq!(grid.nearest_index(7.0), 4);
    }

    proptest::proptest! {
        #[test]
        fn mirrored_angle_is_conjugate(angle in -90.0f64..90.0, freq in 10.0f64..5000.0) {
            let geom = reference_array();
            let a = steering_vector(angle, freq, &geom).unwrap();
            let b = steering_vector(-angle, freq, &geom).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                proptest::prop_assert!((x.conj() - y).norm() < 1e-12);
            }
        }
    }
}
