//! Dataset manifests and the raw tensor file format.
//!
//! A tensor file is a 20-byte header followed by `T*H*W*C` little-endian
//! `f32` values in row-major order:
//!
//! ```text
//! offset 0   magic  b"BXT1"
//! offset 4   u32 T  (frames)
//! offset 8   u32 H  (height)
//! offset 12  u32 W  (width)
//! offset 16  u32 C  (channels)
//! offset 20  f32 data[T*H*W*C]
//! ```
//!
//! Images use `C = 1` or `C = 3` with values in `[0, 1]`. Region files use
//! `C = 1` with values in `{0.0, 1.0}`; saliency files use `C = 1` with any
//! finite values.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{DatasetItem, Dims, ImageVolume, Label, RegionVolume, SaliencyVolume};

pub const TENSOR_MAGIC: &[u8; 4] = b"BXT1";
pub const TENSOR_HEADER_LEN: usize = 20;

/// Header plus decoded values of a tensor file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Dims,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl RawTensor {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(TENSOR_MAGIC);
        for v in [
            self.dims.frames,
            self.dims.height,
            self.dims.width,
            self.channels,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < TENSOR_HEADER_LEN {
            return Err(format!("{} bytes is shorter than the header", bytes.len()));
        }
        if &bytes[..4] != TENSOR_MAGIC {
            return Err("bad magic".into());
        }
        let field = |i: usize| {
            let off = 4 + 4 * i;
            u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize
        };
        let dims = Dims::new(field(0), field(1), field(2));
        let channels = field(3);
        if !dims.is_valid() || channels == 0 {
            return Err(format!("degenerate shape {dims}x{channels}"));
        }
        let count = dims
            .cells()
            .checked_mul(channels)
            .ok_or_else(|| "shape overflows".to_string())?;
        let body = &bytes[TENSOR_HEADER_LEN..];
        if body.len() != 4 * count {
            return Err(format!(
                "expected {} data bytes for {dims}x{channels}, found {}",
                4 * count,
                body.len()
            ));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            dims,
            channels,
            values,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes).map_err(|message| Error::TensorFormat {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.encode())?;
        Ok(())
    }
}

impl From<&ImageVolume> for RawTensor {
    fn from(image: &ImageVolume) -> Self {
        Self {
            dims: image.dims(),
            channels: image.channels(),
            values: image.data().iter().map(|v| *v as f32).collect(),
        }
    }
}

impl From<&SaliencyVolume> for RawTensor {
    fn from(map: &SaliencyVolume) -> Self {
        Self {
            dims: map.dims(),
            channels: 1,
            values: map.values().iter().map(|v| *v as f32).collect(),
        }
    }
}

impl From<&RegionVolume> for RawTensor {
    fn from(region: &RegionVolume) -> Self {
        Self {
            dims: region.dims(),
            channels: 1,
            values: region
                .cells()
                .iter()
                .map(|c| if *c { 1.0 } else { 0.0 })
                .collect(),
        }
    }
}

fn widen(values: &[f32]) -> Vec<f64> {
    values.iter().map(|v| f64::from(*v)).collect()
}

pub fn read_image(path: &Path) -> Result<ImageVolume> {
    let raw = RawTensor::read(path)?;
    ImageVolume::new(raw.dims, raw.channels, widen(&raw.values))
}

pub fn read_saliency(path: &Path) -> Result<SaliencyVolume> {
    let raw = RawTensor::read(path)?;
    if raw.channels != 1 {
        return Err(Error::TensorFormat {
            path: path.to_path_buf(),
            message: format!("saliency maps have one channel, found {}", raw.channels),
        });
    }
    SaliencyVolume::new(raw.dims, widen(&raw.values))
}

pub fn read_region(path: &Path) -> Result<RegionVolume> {
    let raw = RawTensor::read(path)?;
    let bad = |message: String| Error::TensorFormat {
        path: path.to_path_buf(),
        message,
    };
    if raw.channels != 1 {
        return Err(bad(format!(
            "regions have one channel, found {}",
            raw.channels
        )));
    }
    let cells = raw
        .values
        .iter()
        .map(|v| match *v {
            0.0 => Ok(false),
            1.0 => Ok(true),
            other => Err(bad(format!("region value {other} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    RegionVolume::new(raw.dims, cells)
}

pub fn write_image(path: &Path, image: &ImageVolume) -> Result<()> {
    RawTensor::from(image).write(path)
}

pub fn write_saliency(path: &Path, map: &SaliencyVolume) -> Result<()> {
    RawTensor::from(map).write(path)
}

pub fn write_region(path: &Path, region: &RegionVolume) -> Result<()> {
    RawTensor::from(region).write(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub label: String,
    #[serde(default)]
    pub region: Option<PathBuf>,
    #[serde(default)]
    pub prior: Option<PathBuf>,
    /// Display name; defaults to the image file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub items: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Loads every item of a manifest. `path` is the manifest file or a directory
/// containing `manifest.json`; relative tensor paths resolve against the
/// manifest's directory.
pub fn dataset_load(path: &Path) -> Result<Vec<DatasetItem>> {
    let manifest_path = if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&manifest_path)?;
    let manifest = Manifest::parse(&text, &manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .items
        .iter()
        .enumerate()
        .map(|(i, entry)| load_entry(base, i, entry))
        .collect()
}

fn load_entry(base: &Path, index: usize, entry: &ManifestEntry) -> Result<DatasetItem> {
    let image_path = base.join(&entry.image);
    let image = read_image(&image_path)?;
    let region = entry
        .region
        .as_ref()
        .map(|p| read_region(&base.join(p)))
        .transpose()?;
    let prior = entry
        .prior
        .as_ref()
        .map(|p| read_saliency(&base.join(p)))
        .transpose()?;
    let name = entry.name.clone().unwrap_or_else(|| {
        image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("item{index}"))
    });
    let label = Label::new(entry.label.clone())?;
    DatasetItem::new(name, image, label, region, prior).map_err(|e| match e {
        Error::Shape(msg) => {
            Error::Shape(format!("item {index} ({}): {msg}", entry.image.display()))
        }
        other => other,
    })
}

/// Writes items as tensor files plus `manifest.json` under `dir`.
pub fn dataset_save(dir: &Path, items: &[DatasetItem]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = Manifest::default();
    for item in items {
        let image = PathBuf::from(format!("{}.image.bxt", item.name));
        write_image(&dir.join(&image), &item.image)?;
        let region = match &item.region {
            Some(r) => {
                let p = PathBuf::from(format!("{}.region.bxt", item.name));
                write_region(&dir.join(&p), r)?;
                Some(p)
            }
            None => None,
        };
        let prior = match &item.prior {
            Some(m) => {
                let p = PathBuf::from(format!("{}.prior.bxt", item.name));
                write_saliency(&dir.join(&p), m)?;
                Some(p)
            }
            None => None,
        };
        manifest.items.push(ManifestEntry {
            image,
            label: item.target.to_string(),
            region,
            prior,
            name: Some(item.name.clone()),
        });
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, text)?;
    Ok(path)
}
