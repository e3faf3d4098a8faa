use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// Keeps bins with normalized distance `<= r`.
    LowPass,
    /// Keeps bins with normalized distance `> r`.
    HighPass,
}

/// A validated circular filter for one spectrum size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    kind: FilterKind,
    radius: f64,
    height: usize,
    width: usize,
}

impl FilterSpec {
    pub fn new(kind: FilterKind, radius: f64, (height, width): (usize, usize)) -> Result<Self> {
        if !(0.0..=1.0).contains(&radius) {
            return Err(Error::Config(format!(
                "filter radius must lie in [0, 1], got {radius}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::Config("filter shape must be non-empty".into()));
        }
        Ok(Self {
            kind,
            radius,
            height,
            width,
        })
    }

    pub fn low_pass(radius: f64, shape: (usize, usize)) -> Result<Self> {
        Self::new(FilterKind::LowPass, radius, shape)
    }

    pub fn high_pass(radius: f64, shape: (usize, usize)) -> Result<Self> {
        Self::new(FilterKind::HighPass, radius, shape)
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Same kind and radius for a different spectrum size.
    pub fn with_shape(&self, shape: (usize, usize)) -> Result<Self> {
        Self::new(self.kind, self.radius, shape)
    }

    /// The complementary filter with the same radius.
    pub fn complement(&self) -> Self {
        let kind = match self.kind {
            FilterKind::LowPass => FilterKind::HighPass,
            FilterKind::HighPass => FilterKind::LowPass,
        };
        Self { kind, ..*self }
    }
}

/// Binary mask in centered layout.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskGrid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl MaskGrid {
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.width + v]
    }

    pub fn kept(&self) -> usize {
        self.values.iter().filter(|&&m| m == 1.0).count()
    }
}

/// Distance of centered bin `(u, v)` from `(H/2, W/2)`, scaled so the
/// corner `(0, 0)` sits at exactly 1.
pub fn normalized_distance(u: usize, v: usize, height: usize, width: usize) -> f64 {
    let (cy, cx) = ((height / 2) as f64, (width / 2) as f64);
    let corner = (cy * cy + cx * cx).sqrt();
    if corner == 0.0 {
        return 0.0;
    }
    let (dy, dx) = (u as f64 - cy, v as f64 - cx);
    (dy * dy + dx * dx).sqrt() / corner
}

/// Whether centered bin `(u, v)` lies inside the closed circle of normalized
/// radius `r`. Compared in squared units so that on-circle bins are exact.
fn inside_circle(u: usize, v: usize, height: usize, width: usize, r: f64) -> bool {
    let (cy, cx) = ((height / 2) as f64, (width / 2) as f64);
    let (dy, dx) = (u as f64 - cy, v as f64 - cx);
    dy * dy + dx * dx <= r * r * (cy * cy + cx * cx)
}

pub fn make_mask(spec: &FilterSpec) -> MaskGrid {
    let (h, w) = spec.shape();
    let values = (0..h * w)
        .map(|i| {
            let inside = inside_circle(i / w, i % w, h, w, spec.radius);
            let keep = match spec.kind {
                FilterKind::LowPass => inside,
                FilterKind::HighPass => !inside,
            };
            if keep {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    MaskGrid {
        height: h,
        width: w,
        values,
    }
}
