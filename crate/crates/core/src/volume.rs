//! Dense tensors shared across the toolkit: image volumes, saliency volumes,
//! binary region volumes, and the classifier port they are fed through.

use std::fmt;

use crate::error::{ClassifierError, Error, Result};

/// Spatial-temporal extent `(frames, height, width)` of a volume.
///
/// Cells are laid out frame-major, then row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl Dims {
    pub const fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
        }
    }

    pub const fn still(height: usize, width: usize) -> Self {
        Self::new(1, height, width)
    }

    pub const fn cells(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub const fn frame_cells(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub const fn index(&self, frame: usize, row: usize, col: usize) -> usize {
        (frame * self.height + row) * self.width + col
    }

    #[inline]
    pub const fn coords(&self, index: usize) -> (usize, usize, usize) {
        let col = index % self.width;
        let row = (index / self.width) % self.height;
        let frame = index / self.frame_cells();
        (frame, row, col)
    }

    pub const fn contains(&self, frame: usize, row: usize, col: usize) -> bool {
        frame < self.frames && row < self.height && col < self.width
    }

    pub fn is_valid(&self) -> bool {
        self.frames >= 1 && self.height >= 1 && self.width >= 1
    }

    pub const fn as_tuple(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.frames, self.height, self.width)
    }
}

/// A `T x H x W x C` tensor of intensities in `[0, 1]`. `T = 1` is a still image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    dims: Dims,
    channels: usize,
    data: Vec<f64>,
}

impl ImageVolume {
    pub fn new(dims: Dims, channels: usize, data: Vec<f64>) -> Result<Self> {
        if !dims.is_valid() {
            return Err(Error::InvalidVolume(format!("degenerate shape {dims}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidVolume(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != dims.cells() * channels {
            return Err(Error::InvalidVolume(format!(
                "expected {} values for {dims}x{channels}, got {}",
                dims.cells() * channels,
                data.len()
            )));
        }
        if let Some(pos) = data
            .iter()
            .position(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidVolume(format!(
                "value {} at {pos} is outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            dims,
            channels,
            data,
        })
    }

    pub fn filled(dims: Dims, channels: usize, value: f64) -> Result<Self> {
        Self::new(dims, channels, vec![value; dims.cells() * channels])
    }

    /// Builds a volume from a per-cell closure returning one value per channel.
    pub fn from_fn(
        dims: Dims,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.cells() * channels);
        for n in 0..dims.frames {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    for c in 0..channels {
                        data.push(f(n, y, x, c));
                    }
                }
            }
        }
        Self::new(dims, channels, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Channel values of one cell, addressed by flat cell index.
    #[inline]
    pub fn cell(&self, index: usize) -> &[f64] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    /// Returns a copy in which every cell with `keep(index) == false` is set to `fill`.
    pub(crate) fn with_cells_filled(&self, fill: f64, keep: impl Fn(usize) -> bool) -> Self {
        let mut data = self.data.clone();
        for (index, cell) in data.chunks_exact_mut(self.channels).enumerate() {
            if !keep(index) {
                cell.fill(fill);
            }
        }
        Self {
            dims: self.dims,
            channels: self.channels,
            data,
        }
    }

    /// Mean over channels per cell.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.channels)
            .map(|c| c.iter().sum::<f64>() / self.channels as f64)
            .collect()
    }
}

/// Per-cell signed saliency aligned with an image's `(T, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyVolume {
    dims: Dims,
    values: Vec<f64>,
}

impl SaliencyVolume {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if !dims.is_valid() {
            return Err(Error::InvalidSaliency(format!("degenerate shape {dims}")));
        }
        if values.len() != dims.cells() {
            return Err(Error::InvalidSaliency(format!(
                "expected {} values for {dims}, got {}",
                dims.cells(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSaliency(format!(
                "non-finite value at cell {pos}"
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.cells()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, frame: usize, row: usize, col: usize) -> f64 {
        self.values[self.dims.index(frame, row, col)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Flat index of the largest value; ties resolve to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Scales a map by `1 / max|v|` so that its values lie in `[-1, 1]`.
///
/// An all-zero map is returned unchanged.
pub fn normalize_saliency(map: &SaliencyVolume) -> Result<SaliencyVolume> {
    if map.values.is_empty() {
        return Err(Error::InvalidSaliency("empty map".into()));
    }
    if map.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSaliency("non-finite value".into()));
    }
    let scale = map.max_abs();
    if scale == 0.0 {
        return Ok(map.clone());
    }
    Ok(SaliencyVolume {
        dims: map.dims,
        values: map.values.iter().map(|v| v / scale).collect(),
    })
}

/// Binary volume marking an annotated object; `true` cells belong to the region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionVolume {
    dims: Dims,
    cells: Vec<bool>,
}

impl RegionVolume {
    pub fn new(dims: Dims, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != dims.cells() {
            return Err(Error::Shape(format!(
                "region has {} cells, expected {}",
                cells.len(),
                dims.cells()
            )));
        }
        if !cells.iter().any(|c| *c) {
            return Err(Error::EmptyRegion);
        }
        Ok(Self { dims, cells })
    }

    /// Axis-aligned box `rows x cols` replicated over every frame.
    pub fn from_box(
        dims: Dims,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
    ) -> Result<Self> {
        let mut cells = vec![false; dims.cells()];
        for n in 0..dims.frames {
            for y in rows.clone().filter(|y| *y < dims.height) {
                for x in cols.clone().filter(|x| *x < dims.width) {
                    cells[dims.index(n, y, x)] = true;
                }
            }
        }
        Self::new(dims, cells)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.cells[index]
    }

    /// Indicator map: 1 inside the region, 0 elsewhere.
    pub fn indicator(&self) -> SaliencyVolume {
        SaliencyVolume {
            dims: self.dims,
            values: self.cells.iter().map(|c| f64::from(u8::from(*c))).collect(),
        }
    }

    /// Splits the region into 6-connected components, ordered by their first cell.
    pub fn components(&self) -> Vec<RegionVolume> {
        let dims = self.dims;
        let mut label = vec![usize::MAX; dims.cells()];
        let mut out = Vec::new();
        for start in 0..dims.cells() {
            if !self.cells[start] || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![false; dims.cells()];
            let mut stack = vec![start];
            label[start] = id;
            while let Some(i) = stack.pop() {
                members[i] = true;
                let (n, y, x) = dims.coords(i);
                let neighbours = [
                    (n.wrapping_sub(1), y, x),
                    (n + 1, y, x),
                    (n, y.wrapping_sub(1), x),
                    (n, y + 1, x),
                    (n, y, x.wrapping_sub(1)),
                    (n, y, x + 1),
                ];
                for (nn, ny, nx) in neighbours {
                    if dims.contains(nn, ny, nx) {
                        let j = dims.index(nn, ny, nx);
                        if self.cells[j] && label[j] == usize::MAX {
                            label[j] = id;
                            stack.push(j);
                        }
                    }
                }
            }
            out.push(RegionVolume {
                dims,
                cells: members,
            });
        }
        out
    }
}

/// A class token from a classifier's finite label set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(String);

impl Label {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::Config("label must be non-empty".into()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A black-box classification model.
///
/// Implementations must be deterministic: identical volumes yield identical
/// confidences, and every confidence lies in `[0, 1]`.
pub trait Classifier: Send + Sync {
    fn labels(&self) -> &[Label];

    /// Confidence that each volume in `batch` belongs to `label`.
    fn evaluate(&self, batch: &[&ImageVolume], label: &Label) -> Result<Vec<f64>, ClassifierError>;

    /// Whether calls must not be issued concurrently.
    fn is_serial(&self) -> bool {
        false
    }
}

impl<C: Classifier + ?Sized> Classifier for &C {
    fn labels(&self) -> &[Label] {
        (**self).labels()
    }

    fn evaluate(&self, batch: &[&ImageVolume], label: &Label) -> Result<Vec<f64>, ClassifierError> {
        (**self).evaluate(batch, label)
    }

    fn is_serial(&self) -> bool {
        (**self).is_serial()
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn labels(&self) -> &[Label] {
        (**self).labels()
    }

    fn evaluate(&self, batch: &[&ImageVolume], label: &Label) -> Result<Vec<f64>, ClassifierError> {
        (**self).evaluate(batch, label)
    }

    fn is_serial(&self) -> bool {
        (**self).is_serial()
    }
}

/// Evaluates a batch and checks the contract on the returned confidences.
pub(crate) fn checked_evaluate(
    model: &dyn Classifier,
    batch: &[&ImageVolume],
    label: &Label,
) -> Result<Vec<f64>, ClassifierError> {
    let out = model.evaluate(batch, label)?;
    if out.len() != batch.len() {
        return Err(ClassifierError::Protocol(format!(
            "{} confidences for a batch of {}",
            out.len(),
            batch.len()
        )));
    }
    if let Some((index, value)) = out
        .iter()
        .enumerate()
        .find(|(_, v)| !v.is_finite() || !(0.0..=1.0).contains(*v))
    {
        return Err(ClassifierError::OutOfRange {
            index,
            value: *value,
        });
    }
    Ok(out)
}

/// One entry of an evaluation dataset.
#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub name: String,
    pub image: ImageVolume,
    pub target: Label,
    pub region: Option<RegionVolume>,
    pub prior: Option<SaliencyVolume>,
}

impl DatasetItem {
    pub fn new(
        name: impl Into<String>,
        image: ImageVolume,
        target: Label,
        region: Option<RegionVolume>,
        prior: Option<SaliencyVolume>,
    ) -> Result<Self> {
        let dims = image.dims();
        if let Some(r) = &region {
            if r.dims() != dims {
                return Err(Error::Shape(format!(
                    "region {} does not match image {dims}",
                    r.dims()
                )));
            }
        }
        if let Some(p) = &prior {
            if p.dims() != dims {
                return Err(Error::Shape(format!(
                    "prior {} does not match image {dims}",
                    p.dims()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            image,
            target,
            region,
            prior,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranking(values: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|a, b| values[*b].total_cmp(&values[*a]).then(a.cmp(b)));
        idx
    }

    #[test]
    fn normalize_scales_by_max_abs() {
        let map = SaliencyVolume::new(Dims::still(1, 3), vec![2.0, -4.0, 0.0]).unwrap();
        let out = normalize_saliency(&map).unwrap();
        assert_eq!(out.values(), &[0.5, -1.0, 0.0]);
    }

    #[test]
    fn normalize_keeps_zero_map() {
        let map = SaliencyVolume::zeros(Dims::still(3, 3));
        assert_eq!(normalize_saliency(&map).unwrap(), map);
    }

    #[test]
    fn saliency_rejects_non_finite() {
        let err = SaliencyVolume::new(Dims::still(1, 2), vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::InvalidSaliency(_)));
    }

    #[test]
    fn image_rejects_out_of_range() {
        assert!(ImageVolume::new(Dims::still(1, 1), 1, vec![1.5]).is_err());
        assert!(ImageVolume::new(Dims::still(1, 1), 2, vec![0.5, 0.5]).is_err());
        assert!(ImageVolume::new(Dims::still(2, 2), 1, vec![0.5; 3]).is_err());
    }

    #[test]
    fn components_split_disjoint_boxes() {
        let dims = Dims::still(8, 8);
        let mut cells = vec![false; 64];
        for y in 0..2 {
            for x in 0..2 {
                cells[dims.index(0, y, x)] = true;
                cells[dims.index(0, y + 5, x + 5)] = true;
            }
        }
        let region = RegionVolume::new(dims, cells).unwrap();
        let parts = region.components();
        assert_eq!(parts.len(), 2);
        assert!(parts[0].contains(0));
        assert_eq!(parts[1].count(), 4);
    }

    #[test]
    fn region_must_be_non_empty() {
        let err = RegionVolume::new(Dims::still(2, 2), vec![false; 4]).unwrap_err();
        assert!(matches!(err, Error::EmptyRegion));
    }

    #[test]
    fn dataset_item_checks_prior_shape() {
        let image = ImageVolume::filled(Dims::still(32, 32), 1, 0.5).unwrap();
        let prior = SaliencyVolume::zeros(Dims::still(16, 16));
        let err =
            DatasetItem::new("x", image, Label::new("a").unwrap(), None, Some(prior)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn dims_index_round_trip() {
        let dims = Dims::new(3, 4, 5);
        for i in 0..dims.cells() {
            let (n, y, x) = dims.coords(i);
            assert_eq!(dims.index(n, y, x), i);
        }
    }

    proptest! {
        #[test]
        fn normalize_preserves_ranking(values in prop::collection::vec(-50.0f64..50.0, 64)) {
            let map = SaliencyVolume::new(Dims::still(8, 8), values.clone()).unwrap();
            let out = normalize_saliency(&map).unwrap();
            prop_assert_eq!(ranking(&values), ranking(out.values()));
        }

        #[test]
        fn normalize_is_idempotent(values in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let n = values.len();
            let map = SaliencyVolume::new(Dims::still(1, n), values).unwrap();
            let once = normalize_saliency(&map).unwrap();
            let twice = normalize_saliency(&once).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
