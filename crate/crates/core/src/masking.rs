//! Occlusion masks: square/box rasterization, flipping, application to
//! image volumes, and the lumpy random mask distribution used by the
//! Monte-Carlo explainers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::volume::{Dims, ImageVolume};

/// A box occluder centred on `(frame, row, col)`.
///
/// The box covers frames `frame..frame + span` and a `side x side` square in
/// each of them. Even sides extend one more cell up/left than down/right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MaskSpec {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
    pub side: usize,
    pub span: usize,
}

impl MaskSpec {
    pub fn still(row: usize, col: usize, side: usize) -> Self {
        Self {
            frame: 0,
            row,
            col,
            side,
            span: 1,
        }
    }

    /// Clipped half-open ranges `(frames, rows, cols)` occluded by this spec.
    pub fn extent(
        &self,
        dims: Dims,
    ) -> (
        std::ops::Range<usize>,
        std::ops::Range<usize>,
        std::ops::Range<usize>,
    ) {
        let before = self.side / 2;
        let after = (self.side - 1) / 2;
        let frames = self.frame..(self.frame + self.span).min(dims.frames);
        let rows = self.row.saturating_sub(before)..(self.row + after + 1).min(dims.height);
        let cols = self.col.saturating_sub(before)..(self.col + after + 1).min(dims.width);
        (frames, rows, cols)
    }
}

/// Binary field over `(T, H, W)`: `true` keeps a cell, `false` occludes it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    dims: Dims,
    keep: Vec<bool>,
}

impl Mask {
    pub fn new(dims: Dims, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != dims.cells() {
            return Err(Error::Shape(format!(
                "mask has {} cells, expected {}",
                keep.len(),
                dims.cells()
            )));
        }
        Ok(Self { dims, keep })
    }

    pub fn ones(dims: Dims) -> Self {
        Self {
            dims,
            keep: vec![true; dims.cells()],
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            keep: vec![false; dims.cells()],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn cells(&self) -> &[bool] {
        &self.keep
    }

    #[inline]
    pub fn keeps(&self, index: usize) -> bool {
        self.keep[index]
    }

    #[inline]
    pub fn value(&self, index: usize) -> f64 {
        if self.keep[index] {
            1.0
        } else {
            0.0
        }
    }

    pub fn zero_count(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }
}

/// Rasterizes a box occluder over `dims`.
pub fn render(spec: &MaskSpec, dims: Dims) -> Result<Mask> {
    if !dims.contains(spec.frame, spec.row, spec.col) {
        return Err(Error::OutOfBounds {
            center: (spec.frame, spec.row, spec.col),
            shape: dims.as_tuple(),
        });
    }
    if spec.side == 0 || spec.span == 0 {
        return Err(Error::Config(format!(
            "mask side and span must be >= 1, got {}x{}",
            spec.side, spec.span
        )));
    }
    let mut mask = Mask::ones(dims);
    let (frames, rows, cols) = spec.extent(dims);
    for n in frames {
        for y in rows.clone() {
            let start = dims.index(n, y, cols.start);
            mask.keep[start..start + cols.len()].fill(false);
        }
    }
    Ok(mask)
}

pub fn flip(mask: &Mask) -> Mask {
    Mask {
        dims: mask.dims,
        keep: mask.keep.iter().map(|k| !k).collect(),
    }
}

/// `image ⊙ mask`: occluded cells take `fill` in every channel.
pub fn apply(image: &ImageVolume, mask: &Mask, fill: f64) -> Result<ImageVolume> {
    if image.dims() != mask.dims {
        return Err(Error::Shape(format!(
            "mask {} does not match image {}",
            mask.dims,
            image.dims()
        )));
    }
    Ok(image.with_cells_filled(fill, |i| mask.keep[i]))
}

/// Parameters of the lumpy random mask distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskDistribution {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub keep_prob: f64,
}

impl MaskDistribution {
    pub fn new(grid_rows: usize, grid_cols: usize, keep_prob: f64) -> Result<Self> {
        let d = Self {
            grid_rows,
            grid_cols,
            keep_prob,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::Config("mask grid must be at least 1x1".into()));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob < 1.0) {
            return Err(Error::Config(format!(
                "keep probability must lie in (0, 1), got {}",
                self.keep_prob
            )));
        }
        Ok(())
    }
}

impl Default for MaskDistribution {
    fn default() -> Self {
        Self {
            grid_rows: 7,
            grid_cols: 7,
            keep_prob: 0.5,
        }
    }
}

/// Bilinear sample of a `rows x cols` grid at continuous position `(fy, fx)`
/// in grid coordinates, clamped at the borders.
fn bilinear(grid: &[f64], rows: usize, cols: usize, fy: f64, fx: f64) -> f64 {
    let fy = fy.clamp(0.0, (rows - 1) as f64);
    let fx = fx.clamp(0.0, (cols - 1) as f64);
    let y0 = fy.floor() as usize;
    let x0 = fx.floor() as usize;
    let y1 = (y0 + 1).min(rows - 1);
    let x1 = (x0 + 1).min(cols - 1);
    let wy = fy - y0 as f64;
    let wx = fx - x0 as f64;
    let at = |y: usize, x: usize| grid[y * cols + x];
    (1.0 - wy) * ((1.0 - wx) * at(y0, x0) + wx * at(y0, x1))
        + wy * ((1.0 - wx) * at(y1, x0) + wx * at(y1, x1))
}

/// Draws one lumpy binary mask.
///
/// A `grid_rows x grid_cols` Bernoulli(`keep_prob`) grid is bilinearly
/// upsampled to `(H + cell_h) x (W + cell_w)`, where `cell_h = ceil(H / grid_rows)`,
/// an `H x W` window at a uniform offset in `[0, cell_h) x [0, cell_w)` is
/// cropped, thresholded at 0.5 and replicated over every frame.
pub fn sample_rise_mask<R: Rng + ?Sized>(dist: &MaskDistribution, dims: Dims, rng: &mut R) -> Mask {
    let (gh, gw) = (dist.grid_rows, dist.grid_cols);
    let grid: Vec<f64> = (0..gh * gw)
        .map(|_| {
            if rng.gen::<f64>() < dist.keep_prob {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let cell_h = dims.height.div_ceil(gh);
    let cell_w = dims.width.div_ceil(gw);
    let up_h = dims.height + cell_h;
    let up_w = dims.width + cell_w;
    let off_y = rng.gen_range(0..cell_h);
    let off_x = rng.gen_range(0..cell_w);
    let scale_y = gh as f64 / up_h as f64;
    let scale_x = gw as f64 / up_w as f64;

    let mut frame = Vec::with_capacity(dims.frame_cells());
    for y in 0..dims.height {
        let fy = ((y + off_y) as f64 + 0.5) * scale_y - 0.5;
        for x in 0..dims.width {
            let fx = ((x + off_x) as f64 + 0.5) * scale_x - 0.5;
            frame.push(bilinear(&grid, gh, gw, fy, fx) >= 0.5);
        }
    }
    let mut keep = Vec::with_capacity(dims.cells());
    for _ in 0..dims.frames {
        keep.extend_from_slice(&frame);
    }
    Mask { dims, keep }
}

/// Every binary pattern of a `grid_rows x grid_cols` cell grid, rasterized
/// with nearest-cell (block) upsampling and no offset, replicated over frames.
///
/// Under keep-probability 0.5 the patterns are equiprobable, which turns the
/// Monte-Carlo estimators into exact expectations. Intended for testing.
pub fn exhaustive_cell_masks(grid_rows: usize, grid_cols: usize, dims: Dims) -> Result<Vec<Mask>> {
    let cells = grid_rows * grid_cols;
    if cells == 0 || cells > 20 {
        return Err(Error::Config(format!(
            "exhaustive enumeration needs 1..=20 cells, got {cells}"
        )));
    }
    let cell_of = |y: usize, x: usize| {
        let gy = y * grid_rows / dims.height;
        let gx = x * grid_cols / dims.width;
        gy * grid_cols + gx
    };
    let masks = (0u32..1 << cells)
        .map(|pattern| {
            let mut keep = Vec::with_capacity(dims.cells());
            for _ in 0..dims.frames {
                for y in 0..dims.height {
                    for x in 0..dims.width {
                        keep.push(pattern >> cell_of(y, x) & 1 == 1);
                    }
                }
            }
            Mask { dims, keep }
        })
        .collect();
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeros_at(mask: &Mask) -> Vec<(usize, usize, usize)> {
        (0..mask.dims().cells())
            .filter(|i| !mask.keeps(*i))
            .map(|i| mask.dims().coords(i))
            .collect()
    }

    #[test]
    fn unit_square_occludes_one_cell() {
        let m = render(&MaskSpec::still(2, 2, 1), Dims::still(5, 5)).unwrap();
        assert_eq!(zeros_at(&m), vec![(0, 2, 2)]);
    }

    #[test]
    fn corner_square_is_clipped() {
        let m = render(&MaskSpec::still(0, 0, 3), Dims::still(5, 5)).unwrap();
        assert_eq!(
            zeros_at(&m),
            vec![(0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1)]
        );
    }

    #[test]
    fn video_box_zero_count() {
        let spec = MaskSpec {
            frame: 2,
            row: 4,
            col: 4,
            side: 9,
            span: 3,
        };
        let dims = Dims::new(4, 8, 8);
        let m = render(&spec, dims).unwrap();
        // frames 2..=3, rows 0..=7, cols 0..=7
        assert_eq!(m.zero_count(), 2 * 8 * 8);
        assert!((0..2 * 64).all(|i| m.keeps(i)));
    }

    #[test]
    fn even_side_extends_up_left() {
        let m = render(&MaskSpec::still(3, 3, 4), Dims::still(8, 8)).unwrap();
        let z = zeros_at(&m);
        assert_eq!(z.len(), 16);
        assert_eq!(z.first(), Some(&(0, 1, 1)));
        assert_eq!(z.last(), Some(&(0, 4, 4)));
    }

    #[test]
    fn center_outside_is_error() {
        let err = render(&MaskSpec::still(5, 0, 1), Dims::still(5, 5)).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { .. }));
    }

    #[test]
    fn flip_all_ones() {
        let dims = Dims::still(3, 4);
        assert_eq!(flip(&Mask::ones(dims)), Mask::zeros(dims));
    }

    #[test]
    fn apply_identity_and_blackout() {
        let dims = Dims::still(3, 3);
        let img = ImageVolume::from_fn(dims, 3, |_, y, x, c| (y + x + c) as f64 / 10.0).unwrap();
        assert_eq!(apply(&img, &Mask::ones(dims), 0.0).unwrap(), img);
        let black = apply(&img, &Mask::zeros(dims), 0.0).unwrap();
        assert!(black.data().iter().all(|v| *v == 0.0));
        let err = apply(&img, &Mask::ones(Dims::still(2, 2)), 0.0).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn rise_mask_is_seed_deterministic() {
        let dist = MaskDistribution::new(4, 4, 0.3).unwrap();
        let dims = Dims::new(2, 20, 17);
        let a = sample_rise_mask(&dist, dims, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_rise_mask(&dist, dims, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        // replicated across frames
        assert_eq!(a.cells()[..340], a.cells()[340..]);
    }

    #[test]
    fn single_cell_grid_keep_is_all_ones() {
        let dist = MaskDistribution::new(1, 1, 0.999_999).unwrap();
        let dims = Dims::still(9, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = sample_rise_mask(&dist, dims, &mut rng);
        assert_eq!(m, Mask::ones(dims));
    }

    #[test]
    fn rise_marginal_keep_rate() {
        let dist = MaskDistribution::new(1, 1, 0.5).unwrap();
        let dims = Dims::still(6, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let kept: usize = (0..n)
            .map(|_| {
                sample_rise_mask(&dist, dims, &mut rng)
                    .cells()
                    .iter()
                    .filter(|k| **k)
                    .count()
            })
            .sum();
        let rate = kept as f64 / (n * dims.cells()) as f64;
        assert!((rate - 0.5).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn exhaustive_masks_have_exact_marginal() {
        let dims = Dims::still(4, 4);
        let masks = exhaustive_cell_masks(2, 2, dims).unwrap();
        assert_eq!(masks.len(), 16);
        for i in 0..dims.cells() {
            assert_eq!(masks.iter().filter(|m| m.keeps(i)).count(), 8);
        }
    }

    fn arb_spec(dims: Dims) -> impl Strategy<Value = MaskSpec> {
        (
            0..dims.frames,
            0..dims.height,
            0..dims.width,
            1usize..12,
            1usize..5,
        )
            .prop_map(|(frame, row, col, side, span)| MaskSpec {
                frame,
                row,
                col,
                side,
                span,
            })
    }

    proptest! {
        #[test]
        fn render_matches_brute_force_membership(
            (dims, spec) in (1usize..6, 1usize..16, 1usize..16)
                .prop_map(|(t, h, w)| Dims::new(t, h, w))
                .prop_flat_map(|d| (Just(d), arb_spec(d)))
        ) {
            let m = render(&spec, dims).unwrap();
            let r = spec.side as isize;
            let lo = -(r / 2);
            let hi = (r - 1) / 2;
            let mut expected = 0;
            for i in 0..dims.cells() {
                let (n, y, x) = dims.coords(i);
                let dy = y as isize - spec.row as isize;
                let dx = x as isize - spec.col as isize;
                let inside = n >= spec.frame && n < spec.frame + spec.span
                    && (lo..=hi).contains(&dy) && (lo..=hi).contains(&dx);
                prop_assert_eq!(m.keeps(i), !inside);
                expected += usize::from(inside);
            }
            prop_assert_eq!(m.zero_count(), expected);
        }

        #[test]
        fn flip_is_involution_and_complements(bits in prop::collection::vec(any::<bool>(), 24)) {
            let m = Mask::new(Dims::new(2, 3, 4), bits).unwrap();
            let f = flip(&m);
            prop_assert_eq!(flip(&f), m.clone());
            prop_assert_eq!(f.zero_count(), 24 - m.zero_count());
        }

        #[test]
        fn apply_partitions_pixels(bits in prop::collection::vec(any::<bool>(), 16), fill in 0.0f64..0.1) {
            let dims = Dims::still(4, 4);
            let img = ImageVolume::from_fn(dims, 1, |_, y, x, _| 0.2 + (y * 4 + x) as f64 / 25.0).unwrap();
            let m = Mask::new(dims, bits).unwrap();
            let a = apply(&img, &m, fill).unwrap();
            let b = apply(&img, &flip(&m), fill).unwrap();
            prop_assert_eq!(apply(&a, &m, fill).unwrap(), a.clone());
            for i in 0..16 {
                let hits = usize::from(a.data()[i] == img.data()[i]) + usize::from(b.data()[i] == img.data()[i]);
                prop_assert_eq!(hits, 1);
            }
        }
    }
}
