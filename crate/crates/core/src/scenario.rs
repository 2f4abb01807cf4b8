//! A complete acquisition: array, target motion, rotation truth and pulse.

use crate::geometry::{ArrayLayout, GeometryError, PulseGeometry, RotationParams, Trajectory, Vec3};
use crate::waveform::Pulse;
use std::f64::consts::PI;

/// How the `1/(4π·range)²` spreading factor is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmplitudeMode {
    /// One range, center to array centroid, shared by every receiver.
    #[default]
    CommonRange,
    /// Center to each receiver.
    PerReceiver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub layout: ArrayLayout,
    pub trajectory: Trajectory,
    pub rotation: RotationParams,
    pub pulse: Pulse,
    /// Constant displacement of the rotation axis from the trajectory point.
    pub axis_offset: Vec3,
    pub amplitude: AmplitudeMode,
}

impl Scenario {
    pub fn new(
        layout: ArrayLayout,
        trajectory: Trajectory,
        rotation: RotationParams,
        pulse: Pulse,
    ) -> Self {
        Self {
            layout,
            trajectory,
            rotation,
            pulse,
            axis_offset: Vec3::zeros(),
            amplitude: AmplitudeMode::CommonRange,
        }
    }

    /// Rotation center `x_L(s)`.
    pub fn center(&self, s: f64) -> Vec3 {
        self.trajectory.position(s) + self.axis_offset
    }

    pub fn slow_times(&self) -> Vec<f64> {
        self.pulse.slow_times()
    }

    pub fn pulse_geometry(
        &self,
        s: f64,
        rotation: &RotationParams,
    ) -> Result<PulseGeometry, GeometryError> {
        PulseGeometry::new(s, self.center(s), &self.trajectory.v_t, rotation, &self.layout)
    }

    /// Range entering the spreading factor for receiver `r` at slow time `s`.
    pub fn amplitude_range(&self, s: f64, r: usize) -> f64 {
        let c = self.center(s);
        match self.amplitude {
            AmplitudeMode::CommonRange => (c - self.layout.centroid()).norm(),
            AmplitudeMode::PerReceiver => (c - self.layout.receivers[r]).norm(),
        }
    }

    /// `ξ(s, ω) = ω² f̂(ω) / (4π·range)²`.
    pub fn xi(&self, s: f64, omega: f64, r: usize) -> f64 {
        let d = 4.0 * PI * self.amplitude_range(s, r);
        omega * omega * self.pulse.spectrum(omega) / (d * d)
    }
}
