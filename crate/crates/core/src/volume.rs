//! Volumes, slices, masks and measurement sets.
//!
//! Every container keeps its samples in one flat buffer: slice-major (z
//! outer) and row-major within a slice, so slice `n` is the contiguous range
//! `n * nx * ny .. (n + 1) * nx * ny`. Slice indices are 0-based in code;
//! user-facing output uses 1-based indices.

use crate::error::{Error, Result};

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// A single 2D image of real intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Slice {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::dims(format!(
                "slice {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        check_finite("slice", &values)?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    /// Wraps a buffer without the finiteness scan. Used on solver hot paths
    /// where the caller checks iterates separately.
    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn same_shape(&self, other: &Slice) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// A stack of `nz` slices of `nx × ny` voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    nx: usize,
    ny: usize,
    nz: usize,
    voxels: Vec<f64>,
}

impl Volume {
    pub fn new(nx: usize, ny: usize, nz: usize, voxels: Vec<f64>) -> Result<Self> {
        if voxels.len() != nx * ny * nz {
            return Err(Error::dims(format!(
                "volume {nx}x{ny}x{nz} needs {} voxels, got {}",
                nx * ny * nz,
                voxels.len()
            )));
        }
        check_finite("volume", &voxels)?;
        Ok(Self { nx, ny, nz, voxels })
    }

    pub fn zeros(nx: usize, ny: usize, nz: usize) -> Self {
        Self {
            nx,
            ny,
            nz,
            voxels: vec![0.0; nx * ny * nz],
        }
    }

    /// Stacks equally sized slices in order.
    pub fn from_slices(slices: &[Slice]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::dims("cannot build a volume from zero slices"))?;
        let (nx, ny) = (first.width, first.height);
        let mut voxels = Vec::with_capacity(nx * ny * slices.len());
        for (n, s) in slices.iter().enumerate() {
            if s.width != nx || s.height != ny {
                return Err(Error::dims(format!(
                    "slice {} is {}x{}, expected {nx}x{ny}",
                    n + 1,
                    s.width,
                    s.height
                )));
            }
            voxels.extend_from_slice(&s.values);
        }
        Self::new(nx, ny, slices.len(), voxels)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn voxels(&self) -> &[f64] {
        &self.voxels
    }

    #[cfg(test)]
    pub(crate) fn voxels_mut(&mut self) -> &mut [f64] {
        &mut self.voxels
    }

    pub fn into_voxels(self) -> Vec<f64> {
        self.voxels
    }

    /// Borrowed view of slice `n` (0-based).
    pub fn slice_values(&self, n: usize) -> &[f64] {
        let len = self.slice_len();
        &self.voxels[n * len..(n + 1) * len]
    }

    pub fn slice(&self, n: usize) -> Slice {
        Slice::from_raw(self.nx, self.ny, self.slice_values(n).to_vec())
    }

    pub fn slices(&self) -> Vec<Slice> {
        (0..self.nz).map(|n| self.slice(n)).collect()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[(z * self.ny + y) * self.nx + x]
    }

    pub fn same_dims(&self, other: &Volume) -> bool {
        self.dims() == other.dims()
    }
}

/// `R` binary masks, one per slice position within a shot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSet {
    nx: usize,
    ny: usize,
    count: usize,
    seed: u64,
    bits: Vec<u8>,
}

impl MaskSet {
    pub fn new(nx: usize, ny: usize, count: usize, seed: u64, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != nx * ny * count {
            return Err(Error::dims(format!(
                "{count} masks of {nx}x{ny} need {} entries, got {}",
                nx * ny * count,
                bits.len()
            )));
        }
        if let Some(offset) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidMask {
                offset,
                value: bits[offset],
            });
        }
        Ok(Self {
            nx,
            ny,
            count,
            seed,
            bits,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of masks, i.e. the compression ratio `R`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Mask `r` (0-based) as a flat row-major slice of 0/1 bytes.
    pub fn mask(&self, r: usize) -> &[u8] {
        let len = self.nx * self.ny;
        &self.bits[r * len..(r + 1) * len]
    }

    /// Fraction of ones in mask `r`.
    pub fn density(&self, r: usize) -> f64 {
        let m = self.mask(r);
        m.iter().map(|&b| b as usize).sum::<usize>() as f64 / m.len() as f64
    }
}

/// `N` compressed shots plus acquisition metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    nx: usize,
    ny: usize,
    ratio: usize,
    noise_variance: f64,
    noise_seed: u64,
    mask_seed: u64,
    data: Vec<f64>,
}

impl MeasurementSet {
    pub fn new(
        nx: usize,
        ny: usize,
        ratio: usize,
        noise_variance: f64,
        noise_seed: u64,
        mask_seed: u64,
        data: Vec<f64>,
    ) -> Result<Self> {
        let len = nx * ny;
        if len == 0 || data.len() % len != 0 {
            return Err(Error::dims(format!(
                "measurement buffer of {} values is not a whole number of {nx}x{ny} shots",
                data.len()
            )));
        }
        if ratio == 0 {
            return Err(Error::config("compression ratio must be at least 1"));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::config(format!(
                "noise variance must be finite and non-negative, got {noise_variance}"
            )));
        }
        check_finite("measurements", &data)?;
        Ok(Self {
            nx,
            ny,
            ratio,
            noise_variance,
            noise_seed,
            mask_seed,
            data,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of shots `N`.
    pub fn shots(&self) -> usize {
        self.data.len() / (self.nx * self.ny)
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    /// Number of slices the shots encode, `N · R`.
    pub fn total_slices(&self) -> usize {
        self.shots() * self.ratio
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed
    }

    pub fn mask_seed(&self) -> u64 {
        self.mask_seed
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn shot(&self, j: usize) -> &[f64] {
        let len = self.nx * self.ny;
        &self.data[j * len..(j + 1) * len]
    }
}

/// Maps a 1-based global slice index `n` to its 1-based `(shot, position)`:
/// `j = ⌈n/R⌉`, `r = n − (j−1)·R`.
pub fn shot_of_slice(n: usize, ratio: usize) -> (usize, usize) {
    assert!(n >= 1 && ratio >= 1, "slice index and ratio are 1-based");
    let j = n.div_ceil(ratio);
    (j, n - (j - 1) * ratio)
}

/// Inverse of [`shot_of_slice`].
pub fn slice_of_shot(j: usize, r: usize, ratio: usize) -> usize {
    (j - 1) * ratio + r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Volume::new(1, 1, 2, vec![0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
        assert!(Slice::new(2, 1, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn rejects_wrong_lengths() {
        assert!(matches!(
            Slice::new(2, 2, vec![0.0; 3]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            MaskSet::new(2, 2, 1, 0, vec![0, 1, 1]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            MaskSet::new(2, 1, 1, 0, vec![0, 2]),
            Err(Error::InvalidMask {
                offset: 1,
                value: 2
            })
        ));
    }

    #[test]
    fn slices_are_contiguous() {
        let v = Volume::new(2, 1, 3, vec![0., 1., 2., 3., 4., 5.]).unwrap();
        assert_eq!(v.slice_values(1), &[2., 3.]);
        assert_eq!(v.get(1, 0, 2), 5.0);
        assert_eq!(Volume::from_slices(&v.slices()).unwrap(), v);
    }

    #[test]
    fn shot_mapping_examples() {
        assert_eq!(shot_of_slice(1, 4), (1, 1));
        assert_eq!(shot_of_slice(4, 4), (1, 4));
        assert_eq!(shot_of_slice(5, 4), (2, 1));
        assert_eq!(shot_of_slice(40, 4), (10, 4));
    }

    proptest! {
        #[test]
        fn shot_mapping_is_bijective(shots in 1usize..30, ratio in 1usize..25) {
            let mut seen = std::collections::HashSet::new();
            for n in 1..=shots * ratio {
                let (j, r) = shot_of_slice(n, ratio);
                prop_assert!(j >= 1 && j <= shots && r >= 1 && r <= ratio);
                prop_assert_eq!(slice_of_shot(j, r, ratio), n);
                prop_assert!(seen.insert((j, r)));
            }
        }
    }
}
