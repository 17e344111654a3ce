use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the search space: mask centre, side length and frame span.
/// Still images use `frame = 0`, `span = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexPoint {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
    pub side: usize,
    pub span: usize,
}

impl IndexPoint {
    pub const fn still(row: usize, col: usize, side: usize) -> Self {
        Self {
            frame: 0,
            row,
            col,
            side,
            span: 1,
        }
    }

    pub fn mask_spec(&self) -> crate::masking::MaskSpec {
        crate::masking::MaskSpec {
            frame: self.frame,
            row: self.row,
            col: self.col,
            side: self.side,
            span: self.span,
        }
    }
}

/// Matérn smoothness, restricted to the half-integer closed forms.
/// Serialized as the number `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl Serialize for Smoothness {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.nu())
    }
}

impl<'de> Deserialize<'de> for Smoothness {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let nu = match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Text(t) => t.trim().parse().map_err(serde::de::Error::custom)?,
        };
        Smoothness::from_nu(nu).map_err(serde::de::Error::custom)
    }
}

impl Smoothness {
    pub fn from_nu(nu: f64) -> Result<Self> {
        match nu {
            0.5 => Ok(Self::Half),
            1.5 => Ok(Self::ThreeHalves),
            2.5 => Ok(Self::FiveHalves),
            other => Err(Error::Config(format!(
                "Matérn smoothness must be 0.5, 1.5 or 2.5, got {other}"
            ))),
        }
    }

    pub fn nu(&self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::ThreeHalves => 1.5,
            Self::FiveHalves => 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub nu: Smoothness,
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    /// Pixel-equivalent length of one frame along the time axes.
    pub frame_scale: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            nu: Smoothness::ThreeHalves,
            length_scale: 12.0,
            signal_var: 1.0,
            noise_var: 1e-4,
            frame_scale: 1.0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.length_scale > 0.0
            && self.signal_var > 0.0
            && self.noise_var >= 0.0
            && self.frame_scale > 0.0
            && [
                self.length_scale,
                self.signal_var,
                self.noise_var,
                self.frame_scale,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid kernel parameters {self:?}")))
        }
    }

    /// Euclidean distance over `(frame·s, row, col, side, span·s)`.
    #[inline]
    pub fn distance(&self, a: &IndexPoint, b: &IndexPoint) -> f64 {
        let d = |u: usize, v: usize| u as f64 - v as f64;
        let dn = d(a.frame, b.frame) * self.frame_scale;
        let dt = d(a.span, b.span) * self.frame_scale;
        let dy = d(a.row, b.row);
        let dx = d(a.col, b.col);
        let dr = d(a.side, b.side);
        (dn * dn + dy * dy + dx * dx + dr * dr + dt * dt).sqrt()
    }

    /// Covariance as a function of distance.
    #[inline]
    pub fn covariance_at(&self, distance: f64) -> f64 {
        let z = distance / self.length_scale;
        let shape = match self.nu {
            Smoothness::Half => (-z).exp(),
            Smoothness::ThreeHalves => {
                let s = 3f64.sqrt() * z;
                (1.0 + s) * (-s).exp()
            }
            Smoothness::FiveHalves => {
                let s = 5f64.sqrt() * z;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        };
        self.signal_var * shape
    }
}

pub fn matern_kernel(a: &IndexPoint, b: &IndexPoint, params: &KernelParams) -> f64 {
    params.covariance_at(params.distance(a, b))
}
