//! Serializable description of a simulation: array, arrivals, band and grid.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{AngleGrid, ArrayGeometry, Raypath, RaypathSet};
use crate::simulator::{eigenray_angles, synthesize_broadband, Coherence, NoiseSpec, SnapshotMatrix, WaveguideScenario};

/// Where the ground-truth arrivals come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    /// Image-method eigenrays; receiver depths follow the array from
    /// `reference_depth` downwards.
    Waveguide {
        water_depth: f64,
        range: f64,
        source_depth: f64,
        reference_depth: f64,
        num_paths: usize,
    },
    Explicit(RaypathSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    Uniform { min_deg: f64, max_deg: f64, step_deg: f64 },
    /// Symmetric grid inside the sector free of grating lobes at the top of the band.
    Unambiguous { step_deg: f64 },
    Explicit(AngleGrid),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub geometry: ArrayGeometry,
    pub paths: PathSpec,
    /// `[low, high]` in Hz.
    pub band: [f64; 2],
    pub bins: usize,
    pub snapshots: usize,
    #[serde(default)]
    pub coherence: Coherence,
    pub grid: GridSpec,
}

impl ScenarioSpec {
    /// The simulation setup used for the coherent-multipath benchmarks:
    /// 11 sensors 2.5 m apart, 100 m deep water, 2 km range, a 20 % band
    /// around 1500 Hz in 32 bins, 150 snapshots and the five lowest-order
    /// eigenrays.
    pub fn coherent_multipath() -> Self {
        Self {
            geometry: ArrayGeometry::new(11, 2.5, 1500.0).expect("static geometry is valid"),
            paths: PathSpec::Waveguide {
                water_depth: 100.0,
                range: 2000.0,
                source_depth: 20.0,
                reference_depth: 50.0,
                num_paths: 5,
            },
            band: [1350.0, 1650.0],
            bins: 32,
            snapshots: 150,
            coherence: Coherence::Coherent,
            grid: GridSpec::Unambiguous { step_deg: 0.2 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let [lo, hi] = self.band;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return domain(format!("invalid band [{lo}, {hi}] Hz"));
        }
        if self.bins == 0 || self.snapshots == 0 {
            return domain("bins and snapshots must be positive");
        }
        let truth = self.truth()?;
        truth.check_against(&self.geometry)?;
        let grid = self.grid()?;
        if grid.len() <= self.geometry.num_sensors {
            return domain(format!(
                "grid has {} points; an overcomplete dictionary needs more than {}",
                grid.len(),
                self.geometry.num_sensors
            ));
        }
        Ok(())
    }

    pub fn truth(&self) -> Result<RaypathSet> {
        match &self.paths {
            PathSpec::Waveguide {
                water_depth,
                range,
                source_depth,
                reference_depth,
                num_paths,
            } => eigenray_angles(&WaveguideScenario::for_array(
                *water_depth,
                *range,
                *source_depth,
                *reference_depth,
                &self.geometry,
                *num_paths,
            )?),
            PathSpec::Explicit(set) => Ok(set.clone()),
        }
    }

    pub fn grid(&self) -> Result<AngleGrid> {
        match &self.grid {
            GridSpec::Uniform { min_deg, max_deg, step_deg } => AngleGrid::uniform(*min_deg, *max_deg, *step_deg),
            GridSpec::Unambiguous { step_deg } => AngleGrid::unambiguous(&self.geometry, self.band[1], *step_deg),
            GridSpec::Explicit(grid) => Ok(grid.clone()),
        }
    }

    /// Snapshots for every bin at the given SNR and seed.
    pub fn synthesize(&self, truth: &RaypathSet, noise: NoiseSpec) -> Result<Vec<SnapshotMatrix>> {
        synthesize_broadband(
            truth,
            (self.band[0], self.band[1]),
            self.bins,
            self.snapshots,
            self.coherence,
            noise,
            &self.geometry,
        )
    }
}

/// Ground truth as written next to simulated snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub angles_deg: Vec<f64>,
    /// `[re, im]` per path.
    pub amplitudes: Vec<[f64; 2]>,
    pub delays_s: Vec<f64>,
}

impl From<&RaypathSet> for GroundTruth {
    fn from(set: &RaypathSet) -> Self {
        Self {
            angles_deg: set.angles(),
            amplitudes: set.paths().iter().map(|p| [p.amplitude.re, p.amplitude.im]).collect(),
            delays_s: set.paths().iter().map(|p| p.delay_s).collect(),
        }
    }
}

impl TryFrom<GroundTruth> for RaypathSet {
    type Error = crate::Error;

    fn try_from(t: GroundTruth) -> Result<Self> {
        if t.amplitudes.len() != t.angles_deg.len() || t.delays_s.len() != t.angles_deg.len() {
            return domain("ground truth arrays differ in length");
        }
        RaypathSet::new(
            t.angles_deg
                .iter()
                .zip(&t.amplitudes)
                .zip(&t.delays_s)
                .map(|((&angle_deg, a), &delay_s)| Raypath {
                    angle_deg,
                    amplitude: crate::C64::new(a[0], a[1]),
                    delay_s,
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coherent_multipath_defaults() {
        let s = ScenarioSpec::coherent_multipath();
        s.validate().unwrap();
        let grid = s.grid().unwrap();
        assert_eq!(grid.len(), 105);
        assert!((grid.angles()[0] + 10.4).abs() < 1e-9);
        let truth = s.truth().unwrap();
        let expected = [0.859372, 2.004534, -3.718994, -4.858, 6.560];
        for (a, e) in truth.angles().iter().zip(expected) {
            assert!((a - e).abs() < 1e-3, "{a} vs {e}");
        }
    }

    #[test]
    fn json_round_trip() {
        let s = ScenarioSpec::coherent_multipath();
        let text = serde_json::to_string(&s).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn unknown_keys_and_bad_grids_rejected() {
        let mut v = serde_json::to_value(ScenarioSpec::coherent_multipath()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ScenarioSpec>(v).is_err());
        let bad = serde_json::json!({"explicit": [1.0, 0.5]});
        assert!(serde_json::from_value::<GridSpec>(bad).is_err());
    }

    #[test]
    fn ground_truth_round_trip() {
        let truth = ScenarioSpec::coherent_multipath().truth().unwrap();
        let gt = GroundTruth::from(&truth);
        assert_eq!(RaypathSet::try_from(gt).unwrap(), truth);
    }
}
