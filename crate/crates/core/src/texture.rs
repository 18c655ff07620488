//! Gray-level co-occurrence matrices over masked regions and the four
//! texture statistics derived from them.

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureVector;
use crate::error::{Error, Result};
use crate::imaging::{quantize, Image};
use crate::roi::{select_regions, RegionMask, RoiConfig, RoiMode};

/// Features produced per (region, offset) pair.
pub const FEATURES_PER_GLCM: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Glcm {
    levels: usize,
    /// Row-major `levels x levels` probabilities.
    p: Vec<f64>,
    counts: Vec<u64>,
    pair_count: u64,
}

impl Glcm {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn pair_count(&self) -> u64 {
        self.pair_count
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.levels + j]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    /// Row-major raw pair counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    fn from_counts(levels: usize, counts: Vec<u64>) -> Self {
        let total: u64 = counts.iter().sum();
        let p = if total == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        Self {
            levels,
            p,
            counts,
            pair_count: total,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureConfig {
    pub levels: u32,
    /// `(row, col)` displacements.
    pub offsets: Vec<(i32, i32)>,
    pub symmetric: bool,
}

impl Default for TextureConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            offsets: vec![(0, 1), (1, 0), (1, 1), (1, -1)],
            symmetric: false,
        }
    }
}

impl TextureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::param("texture level count L must be >= 2"));
        }
        if self.offsets.is_empty() {
            return Err(Error::param(
                "at least one co-occurrence offset is required",
            ));
        }
        if self.offsets.contains(&(0, 0)) {
            return Err(Error::param("co-occurrence offset (0, 0) is not allowed"));
        }
        Ok(())
    }
}

/// Counts level pairs `(v(r,c), v(r+dr,c+dc))` with both pixels inside the
/// image and the mask. Symmetric mode also counts the transposed pair.
pub fn cooccurrence(
    img: &Image,
    mask: &RegionMask,
    offset: (i32, i32),
    levels: usize,
    symmetric: bool,
) -> Result<Glcm> {
    if mask.width() != img.width() || mask.height() != img.height() {
        return Err(Error::Shape {
            expected: img.width() * img.height(),
            actual: mask.width() * mask.height(),
        });
    }
    if let Some(v) = img.pixels().iter().find(|&&v| v as usize >= levels) {
        return Err(Error::Range(format!(
            "pixel value {v} is not below L={levels}"
        )));
    }
    let (h, w) = (img.height() as i64, img.width() as i64);
    let (dr, dc) = (offset.0 as i64, offset.1 as i64);
    let mut counts = vec![0u64; levels * levels];
    let rows = (0.max(-dr))..(h.min(h - dr));
    let cols = (0.max(-dc))..(w.min(w - dc));
    for r in rows {
        for c in cols.clone() {
            let (r2, c2) = ((r + dr) as usize, (c + dc) as usize);
            let (r, c) = (r as usize, c as usize);
            if !mask.contains(r, c) || !mask.contains(r2, c2) {
                continue;
            }
            let a = img.get(r, c) as usize;
            let b = img.get(r2, c2) as usize;
            counts[a * levels + b] += 1;
            if symmetric {
                counts[b * levels + a] += 1;
            }
        }
    }
    Ok(Glcm::from_counts(levels, counts))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Haralick4 {
    pub energy: f64,
    pub contrast: f64,
    pub entropy: f64,
    pub homogeneity: f64,
}

impl Haralick4 {
    pub fn to_array(self) -> [f64; FEATURES_PER_GLCM] {
        [self.energy, self.contrast, self.entropy, self.homogeneity]
    }
}

/// Energy, contrast, entropy (natural log, 0·ln 0 = 0) and homogeneity.
pub fn haralick4(g: &Glcm) -> Haralick4 {
    let mut out = Haralick4 {
        energy: 0.0,
        contrast: 0.0,
        entropy: 0.0,
        homogeneity: 0.0,
    };
    for i in 0..g.levels {
        for j in 0..g.levels {
            let p = g.get(i, j);
            if p == 0.0 {
                continue;
            }
            let d2 = ((i as f64) - (j as f64)).powi(2);
            out.energy += p * p;
            out.contrast += d2 * p;
            out.entropy -= p * p.ln();
            out.homogeneity += p / (1.0 + d2);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextureFeatures {
    pub vector: FeatureVector,
    /// Set when some region/offset pair had no qualifying pixel pairs and
    /// contributed zeros.
    pub degenerate: bool,
}

/// Length of the vector [`extract_features`] produces for a configuration.
pub fn feature_length(roi: &RoiConfig, tex: &TextureConfig) -> usize {
    let per_region = FEATURES_PER_GLCM * tex.offsets.len();
    match roi.mode {
        RoiMode::Pixelwise => roi.sn * per_region,
        RoiMode::Blockwise => per_region,
    }
}

/// One texture vector for an image.
///
/// Regions are selected on the intensities of `img` as given; GLCMs are
/// computed on `img` quantized to `tex.levels` (a no-op when `img` is already
/// quantized to that many levels). Pixelwise mode concatenates per-region
/// blocks and zero-pads to `SN` regions; blockwise mode averages each
/// feature over all blocks.
pub fn extract_features(
    img: &Image,
    roi: &RoiConfig,
    tex: &TextureConfig,
    name: &str,
) -> Result<TextureFeatures> {
    tex.validate()?;
    let regions = select_regions(img, roi).map_err(|e| Error::Extraction {
        image: name.to_owned(),
        reason: e.to_string(),
    })?;
    if regions.is_empty() {
        return Err(Error::Extraction {
            image: name.to_owned(),
            reason: "no region masks were produced".to_owned(),
        });
    }
    let quantized = quantize(img, tex.levels)?;
    let levels = tex.levels as usize;
    let per_region = FEATURES_PER_GLCM * tex.offsets.len();

    let mut degenerate = false;
    let mut blocks = Vec::with_capacity(regions.len());
    for mask in &regions {
        let mut block = Vec::with_capacity(per_region);
        for &offset in &tex.offsets {
            let g = cooccurrence(&quantized, mask, offset, levels, tex.symmetric)?;
            degenerate |= g.pair_count() == 0;
            block.extend(haralick4(&g).to_array());
        }
        blocks.push(block);
    }

    let values = match roi.mode {
        RoiMode::Pixelwise => {
            let mut values: Vec<f64> = blocks.into_iter().take(roi.sn).flatten().collect();
            values.resize(roi.sn * per_region, 0.0);
            values
        }
        RoiMode::Blockwise => {
            let n = blocks.len() as f64;
            (0..per_region)
                .map(|j| blocks.iter().map(|b| b[j]).sum::<f64>() / n)
                .collect()
        }
    };
    Ok(TextureFeatures {
        vector: FeatureVector::unlabeled(values),
        degenerate,
    })
}
