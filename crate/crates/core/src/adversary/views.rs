//! Per-coordinate histograms of David's incoming messages at small `p`.

use alloc::vec;
use alloc::vec::Vec;

/// Upper limit on `p` for histogramming.
pub const MAX_HIST_MODULUS: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewHistograms {
    modulus: u64,
    /// Widths of layers `2..=L`; coordinates are laid out layer by layer.
    widths: Vec<usize>,
    counts: Vec<Vec<u64>>,
    samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistogramError {
    ModulusTooLarge(u64),
    Shape,
    Incompatible,
    Empty,
}

impl core::fmt::Display for HistogramError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            HistogramError::ModulusTooLarge(p) => write!(f, "modulus {p} is too large to histogram"),
            HistogramError::Shape => f.write_str("view does not match the histogram layout"),
            HistogramError::Incompatible => f.write_str("histograms have different layouts"),
            HistogramError::Empty => f.write_str("no samples"),
        }
    }
}

impl core::error::Error for HistogramError {}

impl ViewHistograms {
    /// `dims` is the model dimension list `[d_1, ..., d_{L+1}]`; masked
    /// messages exist for layers `2..=L` with widths `d_2..d_L`.
    pub fn new(modulus: u64, dims: &[usize]) -> Result<Self, HistogramError> {
        if modulus > MAX_HIST_MODULUS {
            return Err(HistogramError::ModulusTooLarge(modulus));
        }
        let widths: Vec<usize> = if dims.len() > 2 { dims[1..dims.len() - 1].to_vec() } else { Vec::new() };
        let coords: usize = widths.iter().sum();
        Ok(Self {
            modulus,
            widths,
            counts: vec![vec![0; modulus as usize]; coords],
            samples: 0,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn coordinates(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self, coord: usize) -> &[u64] {
        &self.counts[coord]
    }

    /// Adds one view given as `(layer, data)` pairs; layer 1 is ignored.
    pub fn add<'v, I>(&mut self, view: I) -> Result<(), HistogramError>
    where
        I: IntoIterator<Item = (u32, &'v [u64])>,
    {
        let mut seen = 0usize;
        for (layer, data) in view {
            if layer < 2 {
                continue;
            }
            let idx = layer as usize - 2;
            let width = *self.widths.get(idx).ok_or(HistogramError::Shape)?;
            if data.len() != width || idx != seen {
                return Err(HistogramError::Shape);
            }
            let offset: usize = self.widths[..idx].iter().sum();
            for (j, &e) in data.iter().enumerate() {
                if e >= self.modulus {
                    return Err(HistogramError::Shape);
                }
                self.counts[offset + j][e as usize] += 1;
            }
            seen += 1;
        }
        if seen != self.widths.len() {
            return Err(HistogramError::Shape);
        }
        self.samples += 1;
        Ok(())
    }

    /// Adds another histogram with the same layout.
    pub fn merge(&mut self, other: &ViewHistograms) -> Result<(), HistogramError> {
        if self.modulus != other.modulus || self.widths != other.widths {
            return Err(HistogramError::Incompatible);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.samples += other.samples;
        Ok(())
    }

    /// Pearson statistic against the uniform distribution, one per coordinate.
    /// Each has `p − 1` degrees of freedom.
    pub fn chi_square(&self) -> Result<Vec<f64>, HistogramError> {
        if self.samples == 0 {
            return Err(HistogramError::Empty);
        }
        let expected = self.samples as f64 / self.modulus as f64;
        Ok(self
            .counts
            .iter()
            .map(|c| c.iter().map(|&o| (o as f64 - expected) * (o as f64 - expected) / expected).sum())
            .collect())
    }

    /// Empirical total-variation distance to `other`, one per coordinate.
    pub fn tv_distance(&self, other: &ViewHistograms) -> Result<Vec<f64>, HistogramError> {
        if self.modulus != other.modulus || self.widths != other.widths {
            return Err(HistogramError::Incompatible);
        }
        if self.samples == 0 || other.samples == 0 {
            return Err(HistogramError::Empty);
        }
        let (na, nb) = (self.samples as f64, other.samples as f64);
        Ok(self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(&x, &y)| libm::fabs(x as f64 / na - y as f64 / nb)).sum::<f64>())
            .collect())
    }

    /// Sampling-noise scale `√(p / 2N)` for a TV estimate from `N` samples.
    pub fn tv_noise_bound(&self) -> f64 {
        libm::sqrt(self.modulus as f64 / (2.0 * self.samples as f64))
    }
}
