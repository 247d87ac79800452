use super::Grid2D;
use crate::error::{FwiError, Result};

/// Squared-slowness field (s²/m²) on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    grid: Grid2D,
    values: Vec<f64>,
}

/// Velocity field (m/s) on a [`Grid2D`]. Row-major like [`Model`].
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl VelocityField {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FwiError::Config(format!(
                "velocity field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn uniform(grid: Grid2D, velocity: f64) -> Self {
        Self {
            grid,
            values: vec![velocity; grid.len()],
        }
    }
}

impl Model {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FwiError::Config(format!(
                "model has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(FwiError::Domain(format!(
                "squared slowness must be positive and finite, node {k} has {v}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn uniform_velocity(grid: Grid2D, velocity: f64) -> Result<Self> {
        velocity_to_model(&VelocityField::uniform(grid, velocity))
    }

    #[inline]
    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Returns `self + scale * delta`, failing if any node leaves the positive range.
    pub fn updated(&self, delta: &[f64], scale: f64) -> Result<Self> {
        assert_eq!(delta.len(), self.values.len());
        let values = self
            .values
            .iter()
            .zip(delta)
            .map(|(m, d)| m + scale * d)
            .collect();
        Self::new(self.grid, values)
    }

    /// Clamp the model into the squared-slowness range implied by `[v_lo, v_hi]`.
    pub fn clamp_velocity(&mut self, v_lo: f64, v_hi: f64) {
        let m_hi = 1.0 / (v_lo * v_lo);
        let m_lo = 1.0 / (v_hi * v_hi);
        for m in &mut self.values {
            *m = m.clamp(m_lo, m_hi);
        }
    }

    pub fn to_velocity(&self) -> VelocityField {
        model_to_velocity(self)
    }

    /// RMS velocity difference (m/s) against `other` over all nodes.
    pub fn velocity_rms_error(&self, other: &Model) -> f64 {
        assert_eq!(self.len(), other.len());
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                let d = 1.0 / a.sqrt() - 1.0 / b.sqrt();
                d * d
            })
            .sum();
        (sum / self.len() as f64).sqrt()
    }
}

/// Pointwise `v ↦ 1/v²`.
pub fn velocity_to_model(velocity: &VelocityField) -> Result<Model> {
    if let Some((k, v)) = velocity
        .values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(FwiError::Domain(format!(
            "velocity must be positive and finite, node {k} has {v}"
        )));
    }
    let values = velocity.values.iter().map(|v| 1.0 / (v * v)).collect();
    Ok(Model {
        grid: velocity.grid,
        values,
    })
}

/// Pointwise `m ↦ 1/√m`.
pub fn model_to_velocity(model: &Model) -> VelocityField {
    VelocityField {
        grid: model.grid,
        values: model.values.iter().map(|m| 1.0 / m.sqrt()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> Grid2D {
        Grid2D::new(4, 3, 10.0, 10.0).unwrap()
    }

    #[test]
    fn known_values() {
        let m = velocity_to_model(&VelocityField::uniform(grid(), 1500.0)).unwrap();
        assert!((m.values()[0] - 1.0 / 2_250_000.0).abs() < 1e-22);
        assert!((m.values()[0] - 4.444_444_444_444_444e-7).abs() < 1e-20);
        let m = velocity_to_model(&VelocityField::uniform(grid(), 4000.0)).unwrap();
        assert_eq!(m.values()[5], 6.25e-8);
    }

    #[test]
    fn nonpositive_velocity_is_a_domain_error() {
        let mut v = VelocityField::uniform(grid(), 1500.0);
        v.values[3] = 0.0;
        assert!(matches!(velocity_to_model(&v), Err(FwiError::Domain(_))));
        v.values[3] = -2.0;
        assert!(matches!(velocity_to_model(&v), Err(FwiError::Domain(_))));
    }

    #[test]
    fn update_rejects_nonpositive_result() {
        let m = Model::uniform_velocity(grid(), 1500.0).unwrap();
        let delta = vec![-1.0; m.len()];
        assert!(m.updated(&delta, 1.0).is_err());
        assert!(m.updated(&delta, 0.0).is_ok());
    }

    proptest! {
        #[test]
        fn velocity_round_trip(v in proptest::collection::vec(100.0f64..8000.0, 12)) {
            let field = VelocityField::new(grid(), v.clone()).unwrap();
            let back = model_to_velocity(&velocity_to_model(&field).unwrap());
            for (a, b) in v.iter().zip(&back.values) {
                prop_assert!(((a - b) / a).abs() < 1e-14);
            }
        }
    }
}
