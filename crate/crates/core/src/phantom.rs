//! Synthetic heart-like ground truth: two ellipsoidal shell chambers with
//! bright nuclei scattered over their surfaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::volume::Volume;

/// An ellipsoidal chamber wall, in voxel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chamber {
    pub center: [f64; 3],
    pub semi_axes: [f64; 3],
    pub thickness: f64,
}

impl Chamber {
    /// First-order signed distance to the ellipsoid surface (negative inside).
    fn signed_distance(&self, p: [f64; 3]) -> f64 {
        let rel = [
            p[0] - self.center[0],
            p[1] - self.center[1],
            p[2] - self.center[2],
        ];
        let q2: f64 = (0..3).map(|i| (rel[i] / self.semi_axes[i]).powi(2)).sum();
        let q = q2.sqrt();
        if q < 1e-9 {
            return -self.semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
        }
        let grad = (0..3)
            .map(|i| (rel[i] / (self.semi_axes[i] * self.semi_axes[i])).powi(2))
            .sum::<f64>()
            .sqrt()
            / q;
        (q - 1.0) / grad
    }

    /// Knud Thomsen's approximation of the ellipsoid surface area.
    fn surface_area(&self) -> f64 {
        const P: f64 = 1.6075;
        let [a, b, c] = self.semi_axes;
        let m = ((a * b).powf(P) + (a * c).powf(P) + (b * c).powf(P)) / 3.0;
        4.0 * std::f64::consts::PI * m.powf(1.0 / P)
    }

    /// Area-uniform point on the surface and its outward unit normal.
    fn sample_surface(&self, rng: &mut impl Rng) -> ([f64; 3], [f64; 3]) {
        let [a, b, c] = self.semi_axes;
        let g_max = (b * c).max(a * c).max(a * b);
        loop {
            let d: [f64; 3] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if len < 1e-12 {
                continue;
            }
            let u = [d[0] / len, d[1] / len, d[2] / len];
            // Area element of the map sphere -> ellipsoid at u.
            let g =
                ((b * c * u[0]).powi(2) + (a * c * u[1]).powi(2) + (a * b * u[2]).powi(2)).sqrt();
            if rng.gen::<f64>() * g_max > g {
                continue;
            }
            let s = [
                self.center[0] + a * u[0],
                self.center[1] + b * u[1],
                self.center[2] + c * u[2],
            ];
            let n = [u[0] / a, u[1] / b, u[2] / c];
            let nl = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            return (s, [n[0] / nl, n[1] / nl, n[2] / nl]);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub nuclei_count: usize,
    /// Mean nucleus radius in voxels; blobs have standard deviation radius/2.
    pub nucleus_radius: f64,
    /// Radii are drawn uniformly from `mean ± spread`.
    pub nucleus_radius_spread: f64,
    /// Atrium and ventricle.
    pub chambers: [Chamber; 2],
    pub chamber_intensity: f64,
    pub background_level: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Chamber layout scaled to the given volume size.
    pub fn with_dims(nx: usize, ny: usize, nz: usize, nuclei_count: usize, seed: u64) -> Self {
        let (fx, fy, fz) = (nx as f64, ny as f64, nz as f64);
        let thickness = 2.0;
        let atrium = Chamber {
            center: [0.34 * fx, 0.40 * fy, 0.50 * fz],
            semi_axes: [0.18 * fx, 0.16 * fy, 0.28 * fz],
            thickness,
        };
        let ventricle = Chamber {
            center: [0.63 * fx, 0.58 * fy, 0.50 * fz],
            semi_axes: [0.24 * fx, 0.22 * fy, 0.34 * fz],
            thickness,
        };
        Self {
            nx,
            ny,
            nz,
            nuclei_count,
            nucleus_radius: 2.0,
            nucleus_radius_spread: 0.25,
            chambers: [atrium, ventricle],
            chamber_intensity: 0.1,
            background_level: 0.0,
            seed,
        }
    }

    /// 64×64×40 with 60 nuclei.
    pub fn desk(seed: u64) -> Self {
        Self::with_dims(64, 64, 40, 60, seed)
    }

    /// 200×200×150 with 300 nuclei.
    pub fn full_scale(seed: u64) -> Self {
        let mut spec = Self::with_dims(200, 200, 150, 300, seed);
        spec.nucleus_radius = 3.0;
        spec.nucleus_radius_spread = 0.5;
        for c in &mut spec.chambers {
            c.thickness = 4.0;
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::config("phantom dimensions must be positive"));
        }
        if !(self.nucleus_radius > 0.0) || !(self.nucleus_radius_spread >= 0.0) {
            return Err(Error::config(
                "nucleus radius must be positive and spread non-negative",
            ));
        }
        if self.nucleus_radius - self.nucleus_radius_spread <= 0.0 {
            return Err(Error::config(
                "nucleus radius spread must keep radii positive",
            ));
        }
        if !(0.0..1.0).contains(&self.background_level) {
            return Err(Error::config("background level must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.chamber_intensity) {
            return Err(Error::config("chamber intensity must lie in [0, 1]"));
        }
        let dims = [self.nx, self.ny, self.nz];
        for (k, c) in self.chambers.iter().enumerate() {
            if !(c.thickness > 0.0) || c.semi_axes.iter().any(|&a| !(a > 0.0)) {
                return Err(Error::config(format!(
                    "chamber {} needs positive semi-axes and thickness",
                    k + 1
                )));
            }
            for i in 0..3 {
                let reach = c.semi_axes[i] + c.thickness;
                if c.center[i] - reach < 0.0 || c.center[i] + reach > (dims[i] - 1) as f64 {
                    return Err(Error::config(format!(
                        "chamber {} does not fit inside the volume along axis {i}",
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A generated phantom and the nucleus centers used to render it.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub volume: Volume,
    pub centers: Vec<[f64; 3]>,
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (nx, ny, nz) = (spec.nx, spec.ny, spec.nz);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut vol = vec![spec.background_level; nx * ny * nz];

    if spec.chamber_intensity > 0.0 {
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let p = [x as f64, y as f64, z as f64];
                    let on_wall = spec
                        .chambers
                        .iter()
                        .any(|c| c.signed_distance(p).abs() <= 0.5 * c.thickness);
                    if on_wall {
                        vol[(z * ny + y) * nx + x] += spec.chamber_intensity;
                    }
                }
            }
        }
    }

    let areas = spec.chambers.map(|c| c.surface_area());
    let p_first = areas[0] / (areas[0] + areas[1]);
    let mut centers = Vec::with_capacity(spec.nuclei_count);
    for _ in 0..spec.nuclei_count {
        let chamber = if rng.gen::<f64>() < p_first {
            &spec.chambers[0]
        } else {
            &spec.chambers[1]
        };
        let (s, n) = chamber.sample_surface(&mut rng);
        let jitter = rng.gen_range(-chamber.thickness..=chamber.thickness);
        let c = [
            s[0] + jitter * n[0],
            s[1] + jitter * n[1],
            s[2] + jitter * n[2],
        ];
        let radius =
            spec.nucleus_radius + spec.nucleus_radius_spread * (2.0 * rng.gen::<f64>() - 1.0);
        splat_gaussian(&mut vol, (nx, ny, nz), c, 0.5 * radius);
        centers.push(c);
    }

    for v in &mut vol {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(Phantom {
        volume: Volume::new(nx, ny, nz, vol)?,
        centers,
    })
}

/// Adds a unit-peak isotropic Gaussian, truncated at 4σ.
fn splat_gaussian(vol: &mut [f64], (nx, ny, nz): (usize, usize, usize), c: [f64; 3], sigma: f64) {
    let reach = 4.0 * sigma;
    let span = |center: f64, n: usize| {
        let lo = (center - reach).ceil().max(0.0) as usize;
        let hi = ((center + reach).floor() + 1.0).clamp(0.0, n as f64) as usize;
        lo..hi.max(lo)
    };
    let inv = -0.5 / (sigma * sigma);
    for z in span(c[2], nz) {
        let dz = z as f64 - c[2];
        for y in span(c[1], ny) {
            let dy = y as f64 - c[1];
            for x in span(c[0], nx) {
                let dx = x as f64 - c[0];
                vol[(z * ny + y) * nx + x] += ((dx * dx + dy * dy + dz * dz) * inv).exp();
            }
        }
    }
}

/// 0-based indices `round(linspace(1, nz, count)) - 1`.
pub fn frame_indices(nz: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > nz {
        return Err(Error::config(format!(
            "frame count must lie in 1..={nz}, got {count}"
        )));
    }
    if count == 1 {
        return Ok(vec![0]);
    }
    let step = (nz - 1) as f64 / (count - 1) as f64;
    Ok((0..count)
        .map(|i| (1.0 + step * i as f64).round() as usize - 1)
        .collect())
}

/// Keeps `count` evenly spaced slices, including the first and last.
pub fn select_frames(v: &Volume, count: usize) -> Result<Volume> {
    let idx = frame_indices(v.nz(), count)?;
    let mut voxels = Vec::with_capacity(v.slice_len() * count);
    for &n in &idx {
        voxels.extend_from_slice(v.slice_values(n));
    }
    Volume::new(v.nx(), v.ny(), count, voxels)
}

pub const DEFAULT_FRAME_COUNT: usize = 40;
