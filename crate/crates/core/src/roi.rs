//! Region-of-interest selection: pixelwise intensity segmentation and
//! blockwise partitioning.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;

const KMEANS_MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionMask {
    width: usize,
    height: usize,
    member: Vec<bool>,
}

impl RegionMask {
    /// Builds a mask; `None` if no pixel is a member.
    pub fn new(width: usize, height: usize, member: Vec<bool>) -> Option<Self> {
        assert_eq!(
            member.len(),
            width * height,
            "mask size must match dimensions"
        );
        member.iter().any(|&m| m).then_some(Self {
            width,
            height,
            member,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![true; width * height]).expect("nonempty dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.member[row * self.width + col]
    }

    pub fn members(&self) -> &[bool] {
        &self.member
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    /// Row-major runs of member pixels as `(start_offset, length)`.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < self.member.len() {
            if self.member[i] {
                let start = i;
                while i < self.member.len() && self.member[i] {
                    i += 1;
                }
                runs.push((start, i - start));
            } else {
                i += 1;
            }
        }
        runs
    }

    /// One debugging line: `<name>\t<index>\t<width>x<height>\t<start>+<len> ...`.
    pub fn to_rle_line(&self, name: &str, index: usize) -> String {
        let mut line = format!("{name}\t{index}\t{}x{}\t", self.width, self.height);
        let runs = self.runs();
        for (i, (start, len)) in runs.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            write!(line, "{start}+{len}").expect("writing to a String");
        }
        line
    }

    /// Inverse of [`RegionMask::to_rle_line`]; returns `(name, index, mask)`.
    pub fn from_rle_line(line: &str) -> Result<(String, usize, RegionMask)> {
        let bad = || Error::Format(format!("malformed mask line {line:?}"));
        let mut fields = line.split('\t');
        let name = fields.next().ok_or_else(bad)?.to_owned();
        let index = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let (w, h) = fields
            .next()
            .and_then(|s| s.split_once('x'))
            .ok_or_else(bad)?;
        let (width, height): (usize, usize) =
            (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?);
        let mut member = vec![false; width * height];
        for run in fields.next().ok_or_else(bad)?.split_whitespace() {
            let (s, l) = run.split_once('+').ok_or_else(bad)?;
            let (s, l): (usize, usize) =
                (s.parse().map_err(|_| bad())?, l.parse().map_err(|_| bad())?);
            if s + l > member.len() {
                return Err(bad());
            }
            member[s..s + l].iter_mut().for_each(|m| *m = true);
        }
        let mask = RegionMask::new(width, height, member).ok_or_else(bad)?;
        Ok((name, index, mask))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiMode {
    Pixelwise,
    Blockwise,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub mode: RoiMode,
    /// Intensity segment count (pixelwise mode).
    pub sn: usize,
    /// Block side in pixels (blockwise mode).
    pub m: usize,
    pub min_region_pixels: usize,
    /// Only used to reseed empty k-means clusters.
    pub seed: u64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            mode: RoiMode::Pixelwise,
            sn: 6,
            m: 8,
            min_region_pixels: 4,
            seed: 0,
        }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sn < 1 {
            return Err(Error::param("SN must be >= 1"));
        }
        if self.m < 2 {
            return Err(Error::param("block side M must be >= 2"));
        }
        if self.min_region_pixels < 1 {
            return Err(Error::param("min_region_pixels must be >= 1"));
        }
        Ok(())
    }
}

/// Regions for `img` according to `cfg.mode`.
pub fn select_regions(img: &Image, cfg: &RoiConfig) -> Result<Vec<RegionMask>> {
    cfg.validate()?;
    match cfg.mode {
        RoiMode::Pixelwise => Ok(pixelwise_segments(
            img,
            cfg.sn,
            cfg.min_region_pixels,
            cfg.seed,
        )),
        RoiMode::Blockwise => blockwise_partition(img, cfg.m),
    }
}

/// Segments the image by 1-D k-means over pixel intensities.
///
/// Centroids start at evenly spaced quantiles `(i + 0.5) / k` of the sorted
/// pixel values and iterate until assignments stop changing (at most 100
/// rounds). Masks come back ordered by ascending centroid; segments smaller
/// than `min_region_pixels` are dropped. Fewer than `sn` masks are returned
/// when the image has fewer distinct intensities.
pub fn pixelwise_segments(
    img: &Image,
    sn: usize,
    min_region_pixels: usize,
    seed: u64,
) -> Vec<RegionMask> {
    // intensity -> pixel count; k-means over the histogram is equivalent to over pixels
    let mut histogram: BTreeMap<u32, usize> = BTreeMap::new();
    for &v in img.pixels() {
        *histogram.entry(v).or_default() += 1;
    }
    let values: Vec<u32> = histogram.keys().copied().collect();
    let counts: Vec<usize> = histogram.values().copied().collect();
    let k = sn.max(1).min(values.len());

    let centroids = kmeans_1d(&values, &counts, k, seed);
    let assignment: Vec<usize> = values
        .iter()
        .map(|&v| nearest(&centroids, v as f64))
        .collect();
    let cluster_of: BTreeMap<u32, usize> = values.iter().copied().zip(assignment).collect();

    let mut members = vec![vec![false; img.pixels().len()]; k];
    for (i, v) in img.pixels().iter().enumerate() {
        members[cluster_of[v]][i] = true;
    }
    members
        .into_iter()
        .filter_map(|m| RegionMask::new(img.width(), img.height(), m))
        .filter(|m| m.count() >= min_region_pixels)
        .collect()
}

/// Index of the nearest centroid; ties go to the lower index.
fn nearest(centroids: &[f64], v: f64) -> usize {
    let mut best = 0;
    for (i, c) in centroids.iter().enumerate() {
        if (v - c).abs() < (v - centroids[best]).abs() {
            best = i;
        }
    }
    best
}

fn kmeans_1d(values: &[u32], counts: &[usize], k: usize, seed: u64) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    // value at pixel rank `rank` in sorted order
    let value_at_rank = |rank: usize| {
        let mut acc = 0;
        for (v, c) in values.iter().zip(counts) {
            acc += c;
            if rank < acc {
                return *v as f64;
            }
        }
        *values.last().expect("nonempty") as f64
    };
    // quantile (i + 0.5) / k, linearly interpolated between neighbouring ranks
    let mut centroids: Vec<f64> = (0..k)
        .map(|i| {
            let pos = ((2 * i + 1) as f64 * total as f64 / (2 * k) as f64 - 0.5).max(0.0);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(total - 1);
            let frac = pos - lo as f64;
            value_at_rank(lo) * (1.0 - frac) + value_at_rank(hi) * frac
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spread_duplicates(&mut centroids, values, &mut rng);

    let mut assignment: Vec<usize> = values
        .iter()
        .map(|&v| nearest(&centroids, v as f64))
        .collect();
    for _ in 0..KMEANS_MAX_ITERATIONS {
        let mut sums = vec![0.0; k];
        let mut weights = vec![0usize; k];
        for ((&v, &c), &a) in values.iter().zip(counts).zip(&assignment) {
            sums[a] += v as f64 * c as f64;
            weights[a] += c;
        }
        for j in 0..k {
            if weights[j] > 0 {
                centroids[j] = sums[j] / weights[j] as f64;
            }
        }
        if weights.contains(&0) {
            spread_duplicates_or_empty(&mut centroids, &weights, values, &mut rng);
        }
        centroids.sort_by(|a, b| a.total_cmp(b));
        let next: Vec<usize> = values
            .iter()
            .map(|&v| nearest(&centroids, v as f64))
            .collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    centroids
}

/// Quantile starts can collide on images with few distinct values; move
/// duplicates to random unused intensities.
fn spread_duplicates(centroids: &mut [f64], values: &[u32], rng: &mut ChaCha8Rng) {
    centroids.sort_by(|a, b| a.total_cmp(b));
    for i in 1..centroids.len() {
        if centroids[i] == centroids[i - 1] {
            centroids[i] = unused_value(centroids, values, rng);
        }
    }
    centroids.sort_by(|a, b| a.total_cmp(b));
}

fn spread_duplicates_or_empty(
    centroids: &mut [f64],
    weights: &[usize],
    values: &[u32],
    rng: &mut ChaCha8Rng,
) {
    for j in 0..centroids.len() {
        if weights[j] == 0 {
            centroids[j] = unused_value(centroids, values, rng);
        }
    }
}

fn unused_value(centroids: &[f64], values: &[u32], rng: &mut ChaCha8Rng) -> f64 {
    let free: Vec<u32> = values
        .iter()
        .copied()
        .filter(|&v| !centroids.contains(&(v as f64)))
        .collect();
    // k <= distinct values, so a free value always exists while a duplicate does
    free[rng.gen_range(0..free.len())] as f64
}

/// Non-overlapping `m`×`m` blocks tiled row-major from the top-left corner;
/// right and bottom remainders narrower than `m` are discarded.
pub fn blockwise_partition(img: &Image, m: usize) -> Result<Vec<RegionMask>> {
    if m < 2 {
        return Err(Error::param("block side M must be >= 2"));
    }
    if img.width() < m || img.height() < m {
        return Err(Error::param(format!(
            "image {}x{} is smaller than one {m}x{m} block",
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let mut masks = Vec::new();
    for br in 0..h / m {
        for bc in 0..w / m {
            let mut member = vec![false; w * h];
            for r in br * m..(br + 1) * m {
                member[r * w + bc * m..r * w + (bc + 1) * m]
                    .iter_mut()
                    .for_each(|x| *x = true);
            }
            masks.push(RegionMask::new(w, h, member).expect("block is nonempty"));
        }
    }
    Ok(masks)
}
