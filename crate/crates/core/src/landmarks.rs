use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEFT_EYE: &str = "left_eye";
pub const RIGHT_EYE: &str = "right_eye";
pub const NOSE: &str = "nose";
pub const MOUTH_LEFT: &str = "mouth_left";
pub const MOUTH_RIGHT: &str = "mouth_right";

pub const EYE_POINTS: [&str; 2] = [LEFT_EYE, RIGHT_EYE];
pub const REST_POINTS: [&str; 3] = [NOSE, MOUTH_LEFT, MOUTH_RIGHT];
pub const ALL_POINTS: [&str; 5] = [LEFT_EYE, RIGHT_EYE, NOSE, MOUTH_LEFT, MOUTH_RIGHT];

/// Named points `(x, y)` in pixel coordinates of one image.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub points: IndexMap<String, [f64; 2]>,
}

impl LandmarkSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, x: f64, y: f64) -> Self {
        self.points.insert(name.to_string(), [x, y]);
        self
    }

    pub fn get(&self, name: &str) -> Result<[f64; 2]> {
        self.points
            .get(name)
            .copied()
            .ok_or_else(|| Error::invalid(format!("landmark {name:?} missing")))
    }

    /// Distance between the two eye points.
    pub fn inter_ocular(&self) -> Result<f64> {
        let l = self.get(LEFT_EYE)?;
        let r = self.get(RIGHT_EYE)?;
        Ok(distance(l, r))
    }

    /// Checks that every point lies within a `width x height` image.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        for (name, [x, y]) in &self.points {
            if !(x.is_finite() && y.is_finite() && *x >= 0.0 && *y >= 0.0 && *x <= width as f64 && *y <= height as f64) {
                return Err(Error::invalid(format!(
                    "landmark {name} at ({x}, {y}) lies outside a {width}x{height} image"
                )));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        LandmarkSet {
            points: self
                .points
                .iter()
                .map(|(k, [x, y])| (k.clone(), [x * factor, y * factor]))
                .collect(),
        }
    }
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}
