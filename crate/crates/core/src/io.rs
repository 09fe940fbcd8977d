//! Binary file formats.
//!
//! All three formats share one layout: a 4-byte magic, a version byte
//! (currently `0x01`), little-endian header fields, then a payload whose
//! length is fully determined by the header.
//!
//! | format | header after version                                   | payload                    |
//! |--------|--------------------------------------------------------|----------------------------|
//! | `CSLV` | nx, ny, nz: u32                                        | nx·ny·nz × f32             |
//! | `CSLM` | R, nx, ny: u32; seed: u64                              | R·nx·ny × u8 (0 or 1)      |
//! | `CSLB` | N, nx, ny, R: u32; noise variance: f64; noise seed, mask seed: u64 | N·nx·ny × f32  |
//!
//! Samples are stored as binary32; values held in memory as `f64` are
//! rounded to the nearest `f32` on write.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{MaskSet, MeasurementSet, Slice, Volume};

pub const VOLUME_MAGIC: &[u8; 4] = b"CSLV";
pub const MASK_MAGIC: &[u8; 4] = b"CSLM";
pub const MEASUREMENT_MAGIC: &[u8; 4] = b"CSLB";
pub const FORMAT_VERSION: u8 = 1;

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

fn push_u32(buf: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::dims(format!("{v} does not fit in u32")))?;
    buf.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn push_f32_payload(buf: &mut Vec<u8>, what: &'static str, values: &[f64]) -> Result<()> {
    buf.reserve(values.len() * 4);
    for (index, &v) in values.iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite { what, index });
        }
        buf.extend_from_slice(&f.to_le_bytes());
    }
    Ok(())
}

/// Cursor over an in-memory file that validates the header as it goes.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != magic {
            let found = &bytes[..bytes.len().min(4)];
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.take(1)?[0];
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Checks that exactly `len` bytes remain and returns them.
    fn payload(&mut self, len: u64) -> Result<&'a [u8]> {
        let expected = self.pos as u64 + len;
        let actual = self.bytes.len() as u64;
        if actual < expected {
            return Err(Error::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(Error::TrailingBytes { expected, actual });
        }
        self.take(len as usize)
    }
}

fn decode_f32(what: &'static str, payload: &[u8]) -> Result<Vec<f64>> {
    payload
        .chunks_exact(4)
        .enumerate()
        .map(|(index, c)| {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if v.is_finite() {
                Ok(v as f64)
            } else {
                Err(Error::NonFinite { what, index })
            }
        })
        .collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_volume(v: &Volume) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(17 + v.voxels().len() * 4);
    buf.extend_from_slice(VOLUME_MAGIC);
    buf.push(FORMAT_VERSION);
    push_u32(&mut buf, v.nx())?;
    push_u32(&mut buf, v.ny())?;
    push_u32(&mut buf, v.nz())?;
    push_f32_payload(&mut buf, "volume", v.voxels())?;
    Ok(buf)
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    let mut r = Reader::open(bytes, VOLUME_MAGIC)?;
    let (nx, ny, nz) = (r.u32()?, r.u32()?, r.u32()?);
    let payload = r.payload(nx as u64 * ny as u64 * nz as u64 * 4)?;
    Volume::new(nx, ny, nz, decode_f32("volume", payload)?)
}

pub fn write_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_volume(v)?)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    decode_volume(&read_file(path.as_ref())?)
}

pub fn encode_masks(m: &MaskSet) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(25 + m.bits().len());
    buf.extend_from_slice(MASK_MAGIC);
    buf.push(FORMAT_VERSION);
    push_u32(&mut buf, m.count())?;
    push_u32(&mut buf, m.nx())?;
    push_u32(&mut buf, m.ny())?;
    buf.extend_from_slice(&m.seed().to_le_bytes());
    buf.extend_from_slice(m.bits());
    Ok(buf)
}

pub fn decode_masks(bytes: &[u8]) -> Result<MaskSet> {
    let mut r = Reader::open(bytes, MASK_MAGIC)?;
    let (count, nx, ny) = (r.u32()?, r.u32()?, r.u32()?);
    let seed = r.u64()?;
    let payload = r.payload(count as u64 * nx as u64 * ny as u64)?;
    MaskSet::new(nx, ny, count, seed, payload.to_vec())
}

pub fn write_masks(m: &MaskSet, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_masks(m)?)
}

pub fn read_masks(path: impl AsRef<Path>) -> Result<MaskSet> {
    decode_masks(&read_file(path.as_ref())?)
}

pub fn encode_measurements(ms: &MeasurementSet) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(45 + ms.data().len() * 4);
    buf.extend_from_slice(MEASUREMENT_MAGIC);
    buf.push(FORMAT_VERSION);
    push_u32(&mut buf, ms.shots())?;
    push_u32(&mut buf, ms.nx())?;
    push_u32(&mut buf, ms.ny())?;
    push_u32(&mut buf, ms.ratio())?;
    buf.extend_from_slice(&ms.noise_variance().to_le_bytes());
    buf.extend_from_slice(&ms.noise_seed().to_le_bytes());
    buf.extend_from_slice(&ms.mask_seed().to_le_bytes());
    push_f32_payload(&mut buf, "measurements", ms.data())?;
    Ok(buf)
}

pub fn decode_measurements(bytes: &[u8]) -> Result<MeasurementSet> {
    let mut r = Reader::open(bytes, MEASUREMENT_MAGIC)?;
    let (shots, nx, ny, ratio) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let noise_variance = r.f64()?;
    let noise_seed = r.u64()?;
    let mask_seed = r.u64()?;
    let payload = r.payload(shots as u64 * nx as u64 * ny as u64 * 4)?;
    MeasurementSet::new(
        nx,
        ny,
        ratio,
        noise_variance,
        noise_seed,
        mask_seed,
        decode_f32("measurements", payload)?,
    )
}

pub fn write_measurements(ms: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_measurements(ms)?)
}

pub fn read_measurements(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    decode_measurements(&read_file(path.as_ref())?)
}

/// Binary PGM (`P5`), maxval 65535, big-endian samples. Values are clamped to
/// [0, 1] and scaled by 65535 with round-half-away-from-zero.
pub fn encode_pgm(s: &Slice) -> Vec<u8> {
    let header = format!("P5\n{} {}\n65535\n", s.width(), s.height());
    let mut buf = Vec::with_capacity(header.len() + 2 * s.len());
    buf.extend_from_slice(header.as_bytes());
    for &v in s.values() {
        let sample = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        buf.extend_from_slice(&sample.to_be_bytes());
    }
    buf
}

pub fn export_slice_pgm(s: &Slice, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(s))
}

/// Writes nucleus centers as one whitespace-separated `x y z` triple per line.
pub fn write_centers(centers: &[[f64; 3]], path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for c in centers {
        text.push_str(&format!("{} {} {}\n", c[0], c[1], c[2]));
    }
    write_file(path.as_ref(), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_voxel_layout() {
        let v = Volume::new(1, 1, 1, vec![0.5]).unwrap();
        let bytes = encode_volume(&v).unwrap();
        assert_eq!(bytes.len(), 21);
        assert_eq!(&bytes[..5], b"CSLV\x01");
        assert_eq!(&bytes[5..17], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[17..], &[0x00, 0x00, 0x00, 0x3F]);
    }

    #[test]
    fn refuses_nan_voxels() {
        let v = Volume::from_slices(&[Slice::zeros(1, 1)]).unwrap();
        let mut bad = v.clone();
        bad.voxels_mut()[0] = f64::NAN;
        assert!(matches!(encode_volume(&bad), Err(Error::NonFinite { .. })));
        // Values beyond binary32 range would become infinite on disk.
        bad.voxels_mut()[0] = 1e300;
        assert!(matches!(encode_volume(&bad), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn volume_error_categories() {
        let v = Volume::new(2, 2, 1, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let good = encode_volume(&v).unwrap();

        let mut magic = good.clone();
        magic[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_volume(&magic), Err(Error::BadMagic { .. })));

        let mut version = good.clone();
        version[4] = 2;
        assert!(matches!(
            decode_volume(&version),
            Err(Error::UnsupportedVersion(2))
        ));

        // Header claims 4 voxels (16 bytes) but only 12 payload bytes follow.
        let truncated = &good[..17 + 12];
        assert!(matches!(
            decode_volume(truncated),
            Err(Error::Truncated {
                expected: 33,
                actual: 29
            })
        ));

        let mut long = good.clone();
        long.push(0);
        assert!(matches!(
            decode_volume(&long),
            Err(Error::TrailingBytes { .. })
        ));

        assert!(matches!(
            decode_volume(b"CSLV"),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn all_ones_mask_payload() {
        let m = MaskSet::new(2, 2, 1, 9, vec![1; 4]).unwrap();
        let bytes = encode_masks(&m).unwrap();
        assert_eq!(bytes.len(), 5 + 12 + 8 + 4);
        assert_eq!(&bytes[17..25], &9u64.to_le_bytes());
        assert_eq!(&bytes[25..], &[1, 1, 1, 1]);
    }

    #[test]
    fn invalid_mask_byte() {
        let m = MaskSet::new(2, 2, 1, 9, vec![1; 4]).unwrap();
        let mut bytes = encode_masks(&m).unwrap();
        bytes[26] = 0x02;
        assert!(matches!(
            decode_masks(&bytes),
            Err(Error::InvalidMask {
                offset: 1,
                value: 2
            })
        ));
    }

    #[test]
    fn noise_free_variance_is_exact_zero() {
        let ms = MeasurementSet::new(2, 1, 2, 0.0, 5, 6, vec![0.25, 1.5]).unwrap();
        let bytes = encode_measurements(&ms).unwrap();
        assert_eq!(&bytes[21..29], &0.0f64.to_le_bytes());
        let back = decode_measurements(&bytes).unwrap();
        assert_eq!(back.noise_variance().to_bits(), 0.0f64.to_bits());
        assert_eq!(back, ms);
    }

    #[test]
    fn truncated_measurements() {
        let ms = MeasurementSet::new(2, 1, 2, 0.001, 5, 6, vec![0.25, 1.5, 2.0, 3.0]).unwrap();
        let bytes = encode_measurements(&ms).unwrap();
        assert!(matches!(
            decode_measurements(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn pgm_samples() {
        let s = Slice::new(4, 1, vec![0.0, 1.0, 0.5, 2.0]).unwrap();
        let bytes = encode_pgm(&s);
        let header = b"P5\n4 1\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let samples: Vec<u16> = bytes[header.len()..]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        assert_eq!(samples, vec![0, 65535, 32768, 65535]);

        let zeros = encode_pgm(&Slice::zeros(3, 2));
        assert!(zeros[b"P5\n3 2\n65535\n".len()..].iter().all(|&b| b == 0));
    }

    fn f32_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1e6f32..1e6f32, len)
            .prop_map(|v| v.into_iter().map(f64::from).collect())
    }

    proptest! {
        #[test]
        fn volume_round_trip((nx, ny, nz, vals) in (1usize..5, 1usize..5, 1usize..4)
            .prop_flat_map(|(a, b, c)| (Just(a), Just(b), Just(c), f32_values(a * b * c)))) {
            let v = Volume::new(nx, ny, nz, vals).unwrap();
            let back = decode_volume(&encode_volume(&v).unwrap()).unwrap();
            prop_assert_eq!(back.dims(), v.dims());
            for (a, b) in back.voxels().iter().zip(v.voxels()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn mask_round_trip(count in 1usize..4, nx in 1usize..6, ny in 1usize..6, seed: u64,
                           raw in proptest::collection::vec(0u8..2, 100)) {
            let bits: Vec<u8> = raw.into_iter().cycle().take(count * nx * ny).collect();
            let m = MaskSet::new(nx, ny, count, seed, bits).unwrap();
            prop_assert_eq!(decode_masks(&encode_masks(&m).unwrap()).unwrap(), m);
        }

        #[test]
        fn measurement_round_trip((shots, nx, vals) in (1usize..4, 1usize..5)
            .prop_flat_map(|(s, x)| (Just(s), Just(x), f32_values(s * x * 2))),
            ratio in 1usize..5, var in 0.0f64..1.0, ns: u64, msd: u64) {
            let ms = MeasurementSet::new(nx, 2, ratio, var, ns, msd, vals).unwrap();
            let back = decode_measurements(&encode_measurements(&ms).unwrap()).unwrap();
            prop_assert_eq!(back.shots(), shots);
            prop_assert_eq!(back.noise_variance().to_bits(), var.to_bits());
            prop_assert_eq!(back, ms);
        }
    }
}
