//! Vehicle resistance, grade and traction parameters.

use serde::Serialize;

use crate::error::{Error, Result};

/// Quadratic running-resistance law `r0(v) = a + b v + c v^2` (per unit mass).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DavisCoefficients {
    /// Constant term (m/s²).
    pub a: f64,
    /// Linear term (1/s).
    pub b: f64,
    /// Quadratic term (1/m).
    pub c: f64,
}

impl DavisCoefficients {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        for (name, value) in [("a", a), ("b", b), ("c", c)] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::domain(format!(
                    "Davis coefficient {name} must be finite and >= 0, got {value}"
                )));
            }
        }
        Ok(Self { a, b, c })
    }

    /// `r0(v)` without the domain check; callers guarantee `v >= 0`.
    #[inline]
    pub fn resistance(&self, v: f64) -> f64 {
        self.a + v * (self.b + self.c * v)
    }

    /// `dr0/dv = b + 2 c v`.
    #[inline]
    pub fn slope(&self, v: f64) -> f64 {
        self.b + 2.0 * self.c * v
    }
}

impl Default for DavisCoefficients {
    fn default() -> Self {
        Self {
            a: 0.05,
            b: 0.005,
            c: 0.0005,
        }
    }
}

/// One breakpoint of a piecewise-constant grade profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradeBreakpoint {
    /// Segment start (m).
    pub position: f64,
    /// Gravitational acceleration component along the direction of travel (m/s²).
    /// Positive values assist motion (downhill).
    pub accel: f64,
}

/// Piecewise-constant road grade `g(x)`.
///
/// Each breakpoint starts a segment that runs to the next breakpoint; the last
/// segment extends indefinitely. Positions before the first breakpoint clamp to it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradeProfile {
    breakpoints: Vec<GradeBreakpoint>,
}

impl GradeProfile {
    pub fn new(breakpoints: Vec<GradeBreakpoint>) -> Result<Self> {
        let first = breakpoints
            .first()
            .ok_or_else(|| Error::argument("grade profile needs at least one breakpoint"))?;
        if first.position != 0.0 {
            return Err(Error::argument(format!(
                "first grade breakpoint must be at position 0, got {}",
                first.position
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[1].position > w[0].position) {
                return Err(Error::argument(format!(
                    "grade breakpoints must be strictly increasing ({} then {})",
                    w[0].position, w[1].position
                )));
            }
        }
        if let Some(bad) = breakpoints
            .iter()
            .find(|b| !b.accel.is_finite() || !b.position.is_finite())
        {
            return Err(Error::argument(format!("non-finite grade breakpoint {bad:?}")));
        }
        Ok(Self { breakpoints })
    }

    pub fn flat() -> Self {
        Self {
            breakpoints: vec![GradeBreakpoint {
                position: 0.0,
                accel: 0.0,
            }],
        }
    }

    pub fn breakpoints(&self) -> &[GradeBreakpoint] {
        &self.breakpoints
    }

    pub fn segment_count(&self) -> usize {
        self.breakpoints.len()
    }

    /// Index of the segment containing `x`.
    #[inline]
    pub fn segment_index(&self, x: f64) -> usize {
        // partition_point gives the first breakpoint strictly beyond x.
        self.breakpoints.partition_point(|b| b.position <= x).saturating_sub(1)
    }

    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        if self.breakpoints.len() == 1 {
            return self.breakpoints[0].accel;
        }
        self.breakpoints[self.segment_index(x)].accel
    }

    pub fn is_flat(&self) -> bool {
        self.breakpoints.iter().all(|b| b.accel == 0.0)
    }

    /// Returns a copy with one segment's grade replaced.
    pub fn with_segment(&self, segment: usize, accel: f64) -> Result<Self> {
        if segment >= self.breakpoints.len() {
            return Err(Error::argument(format!(
                "grade segment {segment} out of range (profile has {})",
                self.breakpoints.len()
            )));
        }
        if !accel.is_finite() {
            return Err(Error::argument("grade value must be finite"));
        }
        let mut out = self.clone();
        out.breakpoints[segment].accel = accel;
        Ok(out)
    }

    /// Grade jumps `(position, g_after - g_before)` at interior breakpoints.
    pub fn jumps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .map(|w| (w[1].position, w[1].accel - w[0].accel))
    }
}

impl Default for GradeProfile {
    fn default() -> Self {
        Self::flat()
    }
}

/// How the dimensionless control maps to tractive acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TractionModel {
    /// `s(x, v, u) = u * max_traction`.
    #[default]
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleParams {
    pub davis: DavisCoefficients,
    pub grade: GradeProfile,
    /// Traction scale `A` (m/s²) so that full power yields `A`.
    pub max_traction: f64,
    pub traction_model: TractionModel,
}

impl VehicleParams {
    pub fn new(davis: DavisCoefficients, grade: GradeProfile, max_traction: f64) -> Result<Self> {
        if !(max_traction > 0.0) || !max_traction.is_finite() {
            return Err(Error::domain(format!(
                "max_traction must be positive, got {max_traction}"
            )));
        }
        Ok(Self {
            davis,
            grade,
            max_traction,
            traction_model: TractionModel::Affine,
        })
    }

    /// `r(x, v) = r0(v) - g(x)` without checks.
    #[inline]
    pub fn resistance_at(&self, x: f64, v: f64) -> f64 {
        self.davis.resistance(v) - self.grade.at(x)
    }

    /// Tractive acceleration without the admissibility check.
    #[inline]
    pub fn traction_unchecked(&self, u: f64) -> f64 {
        match self.traction_model {
            TractionModel::Affine => u * self.max_traction,
        }
    }

    /// Net acceleration `s - r` with the rest clamp applied at `v == 0`.
    #[inline]
    pub fn acceleration(&self, x: f64, v: f64, u: f64) -> f64 {
        let a = self.traction_unchecked(u) - self.resistance_at(x, v);
        if v <= 0.0 && a < 0.0 {
            0.0
        } else {
            a
        }
    }
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            davis: DavisCoefficients::default(),
            grade: GradeProfile::flat(),
            max_traction: 1.0,
            traction_model: TractionModel::Affine,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(position: f64, accel: f64) -> GradeBreakpoint {
        GradeBreakpoint { position, accel }
    }

    #[test]
    fn davis_rejects_negative_coefficients() {
        assert!(DavisCoefficients::new(-0.1, 0.0, 0.0).is_err());
        assert!(DavisCoefficients::new(0.0, 0.0, f64::NAN).is_err());
        assert!(DavisCoefficients::new(0.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn grade_lookup_is_piecewise_constant_and_clamped() {
        let g = GradeProfile::new(vec![bp(0.0, 0.0), bp(100.0, 0.02), bp(300.0, -0.01)]).unwrap();
        assert_eq!(g.at(-5.0), 0.0);
        assert_eq!(g.at(0.0), 0.0);
        assert_eq!(g.at(99.999), 0.0);
        assert_eq!(g.at(100.0), 0.02);
        assert_eq!(g.at(299.0), 0.02);
        assert_eq!(g.at(1e6), -0.01);
        assert_eq!(g.jumps().collect::<Vec<_>>(), vec![(100.0, 0.02), (300.0, -0.03)]);
    }

    #[test]
    fn grade_profile_validation() {
        assert!(GradeProfile::new(vec![]).is_err());
        assert!(GradeProfile::new(vec![bp(1.0, 0.0)]).is_err());
        assert!(GradeProfile::new(vec![bp(0.0, 0.0), bp(0.0, 0.1)]).is_err());
        let g = GradeProfile::flat();
        assert!(g.with_segment(1, 0.1).is_err());
        assert_eq!(g.with_segment(0, 0.1).unwrap().at(3.0), 0.1);
    }

    #[test]
    fn rest_clamp_only_at_zero_speed() {
        let p = VehicleParams::default();
        assert_eq!(p.acceleration(0.0, 0.0, 0.0), 0.0);
        assert!(p.acceleration(0.0, 1e-9, 0.0) < 0.0);
        assert!((p.acceleration(0.0, 0.0, 1.0) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn vehicle_requires_positive_traction() {
        assert!(VehicleParams::new(DavisCoefficients::default(), GradeProfile::flat(), 0.0).is_err());
    }
}
