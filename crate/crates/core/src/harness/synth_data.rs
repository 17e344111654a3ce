//! Seeded synthetic datasets: textured images with square target regions
//! and noisy priors derived from the region indicator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::volume::{DatasetItem, Dims, ImageVolume, Label, RegionVolume, SaliencyVolume};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub items: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Side of each square region.
    pub side: usize,
    /// Number of disjoint, non-touching regions per item.
    pub regions: usize,
    /// Signal-to-noise ratio of the prior, `A² / σ²` for the unit region amplitude `A`.
    /// `None` leaves items without a prior.
    pub prior_snr: Option<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            items: 20,
            height: 32,
            width: 32,
            channels: 3,
            side: 8,
            regions: 1,
            prior_snr: Some(1.0),
            seed: 0,
        }
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize), side: usize) -> bool {
    // Boxes closer than one pixel would merge into one component.
    let near = |p: usize, q: usize| p < q + side + 1 && q < p + side + 1;
    near(a.0, b.0) && near(a.1, b.1)
}

fn place_boxes<R: Rng>(spec: &SynthSpec, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let mut boxes: Vec<(usize, usize)> = Vec::with_capacity(spec.regions);
    for _ in 0..10_000 {
        if boxes.len() == spec.regions {
            return Ok(boxes);
        }
        let at = (
            rng.gen_range(0..=spec.height - spec.side),
            rng.gen_range(0..=spec.width - spec.side),
        );
        if boxes.iter().all(|b| !overlaps(*b, at, spec.side)) {
            boxes.push(at);
        }
    }
    Err(Error::Config(format!(
        "cannot place {} separated {}px regions in {}x{}",
        spec.regions, spec.side, spec.height, spec.width
    )))
}

/// Adds seeded Gaussian noise to a region indicator: `σ = 1/√snr`.
pub fn noisy_prior<R: Rng>(region: &RegionVolume, snr: f64, rng: &mut R) -> Result<SaliencyVolume> {
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(Error::Config(format!("snr must be > 0, got {snr}")));
    }
    let noise = Normal::new(0.0, snr.recip().sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let values = region
        .cells()
        .iter()
        .map(|&inside| f64::from(u8::from(inside)) + noise.sample(rng))
        .collect();
    SaliencyVolume::new(region.dims(), values)
}

/// Generates `spec.items` still images named `item000`, `item001`, ….
pub fn synth_items(spec: &SynthSpec) -> Result<Vec<DatasetItem>> {
    if spec.side == 0 || spec.side > spec.height.min(spec.width) || spec.regions == 0 {
        return Err(Error::Config(
            "region side must fit the image and regions must be >= 1".into(),
        ));
    }
    let dims = Dims::still(spec.height, spec.width);
    let label = Label::new(crate::harness::synthetic::DEFAULT_LABEL)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.items)
        .map(|k| {
            let data = (0..dims.cells() * spec.channels)
                .map(|_| rng.gen_range(0.2..=1.0))
                .collect();
            let image = ImageVolume::new(dims, spec.channels, data)?;
            let mut cells = vec![false; dims.cells()];
            for (r0, c0) in place_boxes(spec, &mut rng)? {
                for y in r0..r0 + spec.side {
                    for x in c0..c0 + spec.side {
                        cells[dims.index(0, y, x)] = true;
                    }
                }
            }
            let region = RegionVolume::new(dims, cells)?;
            let prior = spec
                .prior_snr
                .map(|snr| noisy_prior(&region, snr, &mut rng))
                .transpose()?;
            DatasetItem::new(
                format!("item{k:03}"),
                image,
                label.clone(),
                Some(region),
                prior,
            )
        })
        .collect()
}
