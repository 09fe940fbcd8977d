//! BM3D-style collaborative filtering.
//!
//! Stage one groups each reference patch with its most similar neighbours
//! (L2 distance inside a search window), transforms the group with a 2D DCT
//! per patch followed by a Haar transform across the group, hard-thresholds
//! the spectrum and aggregates the filtered patches back into the image with
//! one weight per group. Stage two, when enabled, repeats the grouping on the
//! stage-one estimate and applies an empirical Wiener shrink instead.
//!
//! `λ` is the noise standard deviation on the 0–255 scale: `σ = λ / 255`.

use rayon::prelude::*;

use super::transform::{haar_forward, haar_inverse, Dct};
use super::tv::{denoise_tv, TvParams};
use crate::error::{Error, Result};
use crate::volume::Slice;

#[derive(Clone, Debug, PartialEq)]
pub struct Bm3dParams {
    pub patch: usize,
    pub search_window: usize,
    pub max_matches: usize,
    pub stride: usize,
    pub hard_threshold_factor: f64,
    pub two_stage: bool,
}

impl Default for Bm3dParams {
    fn default() -> Self {
        Self {
            patch: 8,
            search_window: 39,
            max_matches: 16,
            stride: 3,
            hard_threshold_factor: 2.7,
            two_stage: false,
        }
    }
}

impl Bm3dParams {
    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.search_window == 0 || self.max_matches == 0 || self.stride == 0 {
            return Err(Error::config("BM3D counts must be positive"));
        }
        if self.stride > self.patch {
            return Err(Error::config("BM3D stride may not exceed the patch size"));
        }
        if !(self.hard_threshold_factor > 0.0) {
            return Err(Error::config("BM3D threshold factor must be positive"));
        }
        Ok(())
    }
}

pub fn denoise_bm3d(g: &Slice, lambda: f64, params: &Bm3dParams) -> Result<Slice> {
    params.validate()?;
    let sigma = lambda / 255.0;
    let (w, h) = (g.width(), g.height());
    if w < params.patch || h < params.patch {
        let weight = sigma * sigma * 10.0;
        log::warn!(
            "slice {w}x{h} is smaller than the {p}x{p} BM3D patch; using TV with weight {weight}",
            p = params.patch
        );
        return Ok(denoise_tv(g, weight, &TvParams::default()));
    }
    let image = Image {
        data: g.values(),
        w,
        h,
    };
    let dct = Dct::new(params.patch);
    let noisy_spectra = patch_spectra(&image, &dct, params.patch);
    let groups = block_match(&image, params);
    let basic = hard_threshold_stage(&image, &groups, &noisy_spectra, &dct, sigma, params);
    if !params.two_stage || sigma == 0.0 {
        return Ok(Slice::from_raw(w, h, basic));
    }
    let pilot = Image { data: &basic, w, h };
    let pilot_spectra = patch_spectra(&pilot, &dct, params.patch);
    let groups = block_match(&pilot, params);
    let out = wiener_stage(
        &image,
        &groups,
        &noisy_spectra,
        &pilot_spectra,
        &dct,
        sigma,
        params,
    );
    Ok(Slice::from_raw(w, h, out))
}

struct Image<'a> {
    data: &'a [f64],
    w: usize,
    h: usize,
}

/// Patch origins along one axis: every `stride`-th position plus the last.
fn reference_positions(n: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = n - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// 2D DCT of the patch at every valid origin, indexed `y * (w-p+1) + x`.
fn patch_spectra(img: &Image, dct: &Dct, p: usize) -> Vec<f64> {
    let (npx, npy) = (img.w - p + 1, img.h - p + 1);
    let pp = p * p;
    let mut out = vec![0.0; npx * npy * pp];
    out.par_chunks_mut(npx * pp)
        .enumerate()
        .for_each(|(y, row)| {
            let mut patch = vec![0.0; pp];
            let mut tmp = vec![0.0; pp];
            for x in 0..npx {
                for dy in 0..p {
                    let src = (y + dy) * img.w + x;
                    patch[dy * p..(dy + 1) * p].copy_from_slice(&img.data[src..src + p]);
                }
                dct.forward_2d(&patch, &mut row[x * pp..(x + 1) * pp], &mut tmp);
            }
        });
    out
}

/// The `cap` best `(distance, offset index)` pairs seen so far, ascending.
#[derive(Clone)]
struct Best {
    items: Vec<(f64, u32)>,
    cap: usize,
}

impl Best {
    fn new(cap: usize) -> Self {
        Self {
            items: Vec::with_capacity(cap + 1),
            cap,
        }
    }

    #[inline]
    fn offer(&mut self, d: f64, idx: u32) {
        if self.cap == 0 {
            return;
        }
        if self.items.len() == self.cap {
            let last = self.items[self.cap - 1];
            if (d, idx) >= last {
                return;
            }
        }
        let pos = self.items.partition_point(|&e| e < (d, idx));
        self.items.insert(pos, (d, idx));
        self.items.truncate(self.cap);
    }

    /// Largest distance that can still enter the list.
    fn worst(&self) -> f64 {
        if self.cap == 0 {
            f64::NEG_INFINITY
        } else if self.items.len() < self.cap {
            f64::INFINITY
        } else {
            self.items[self.cap - 1].0
        }
    }

    fn merge(mut self, other: Best) -> Best {
        for (d, i) in other.items {
            self.offer(d, i);
        }
        self
    }
}

/// Per reference patch (row-major over the reference grid), the patch
/// origins of its group: the reference itself first, then matches by
/// increasing distance. Ties break on the offset scan order, so the result
/// does not depend on how the scan is split across threads.
fn block_match(img: &Image, params: &Bm3dParams) -> Vec<Vec<(usize, usize)>> {
    let p = params.patch;
    let (w, h) = (img.w, img.h);
    let xs = reference_positions(w, p, params.stride);
    let ys = reference_positions(h, p, params.stride);
    let refs: Vec<(usize, usize)> = ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect();
    let half = (params.search_window / 2) as isize;
    let side = 2 * half + 1;
    let cap = params.max_matches - 1;

    let offsets: Vec<(isize, isize)> = (-half..=half)
        .flat_map(|dy| (-half..=half).map(move |dx| (dx, dy)))
        .filter(|&o| o != (0, 0))
        .collect();

    let empty = || vec![Best::new(cap); refs.len()];
    let kernel = SsdKernel::detect();
    let best = offsets
        .par_iter()
        .with_min_len(offsets.len().div_ceil(rayon::current_num_threads()))
        .fold(
            || (empty(), Scratch::new(w, h, refs.len())),
            |(mut best, mut scratch), &(dx, dy)| {
                let idx = ((dy + half) * side + (dx + half)) as u32;
                kernel.run(img, (dx, dy, idx), p, &xs, &ys, &mut scratch, &mut best);
                (best, scratch)
            },
        )
        .map(|(best, _)| best)
        .reduce(empty, |a, b| {
            a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect()
        });

    refs.iter()
        .zip(best)
        .map(|(&(rx, ry), b)| {
            let mut group = Vec::with_capacity(params.max_matches);
            group.push((rx, ry));
            for (_, idx) in b.items {
                let idx = idx as isize;
                let dx = idx % side - half;
                let dy = idx / side - half;
                group.push(((rx as isize + dx) as usize, (ry as isize + dy) as usize));
            }
            group
        })
        .collect()
}

struct Scratch {
    prefix: Vec<f64>,
    cols: Vec<f64>,
    /// Current worst retained distance per reference.
    worst: Vec<f64>,
}

impl Scratch {
    fn new(w: usize, h: usize, refs: usize) -> Self {
        Self {
            prefix: vec![0.0; w * (h + 1)],
            cols: vec![0.0; w],
            worst: vec![f64::INFINITY; refs],
        }
    }
}

#[derive(Clone, Copy)]
enum SsdKernel {
    Portable,
    #[cfg(target_arch = "x86_64")]
    Avx2,
}

impl SsdKernel {
    fn detect() -> Self {
        #[cfg(target_arch = "x86_64")]
        if is_x86_feature_detected!("avx2") {
            return SsdKernel::Avx2;
        }
        SsdKernel::Portable
    }

    fn run(
        self,
        img: &Image,
        offset: Offset,
        p: usize,
        xs: &[usize],
        ys: &[usize],
        s: &mut Scratch,
        best: &mut [Best],
    ) {
        match self {
            SsdKernel::Portable => offset_ssd(img, offset, p, xs, ys, s, best),
            // SAFETY: the variant is only constructed after detecting AVX2.
            #[cfg(target_arch = "x86_64")]
            SsdKernel::Avx2 => unsafe { offset_ssd_avx2(img, offset, p, xs, ys, s, best) },
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn offset_ssd_avx2(
    img: &Image,
    offset: Offset,
    p: usize,
    xs: &[usize],
    ys: &[usize],
    s: &mut Scratch,
    best: &mut [Best],
) {
    offset_ssd(img, offset, p, xs, ys, s, best)
}

/// `(dx, dy, scan index)`.
type Offset = (isize, isize, u32);

/// Offers every reference its partner shifted by the offset, with patch
/// distances from running column sums of the squared-difference image.
#[inline(always)]
fn offset_ssd(
    img: &Image,
    (dx, dy, idx): Offset,
    p: usize,
    xs: &[usize],
    ys: &[usize],
    s: &mut Scratch,
    best: &mut [Best],
) {
    let w = img.w;
    // Pixels whose partner at (x + dx, y + dy) is inside the image.
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx.max(0)).max(0) as usize;
    let y0 = (-dy).max(0) as usize;
    let y1 = (img.h as isize - dy.max(0)).max(0) as usize;
    if x1 < x0 + p || y1 < y0 + p {
        return;
    }
    let span = x1 - x0;
    // Running column sums: row `y + 1 - y0` of `prefix` holds Σ_{y0..=y}.
    s.prefix[..span].fill(0.0);
    for y in y0..y1 {
        let a = &img.data[y * w + x0..y * w + x1];
        let sy = (y as isize + dy) as usize;
        let sx = (x0 as isize + dx) as usize;
        let b = &img.data[sy * w + sx..sy * w + sx + span];
        let row = (y - y0) * w;
        let (done, next) = s.prefix.split_at_mut(row + w);
        let prev = &done[row..row + span];
        for (((o, p), a), b) in next[..span].iter_mut().zip(prev).zip(a).zip(b) {
            *o = p + (a - b) * (a - b);
        }
    }
    for (iy, &ry) in ys.iter().enumerate() {
        if ry < y0 || ry + p > y1 {
            continue;
        }
        let top = &s.prefix[(ry - y0) * w..(ry - y0) * w + span];
        let bottom = &s.prefix[(ry + p - y0) * w..(ry + p - y0) * w + span];
        let cols = &mut s.cols[..span];
        for ((c, b), t) in cols.iter_mut().zip(bottom).zip(top) {
            *c = b - t;
        }
        let row = iy * xs.len()..(iy + 1) * xs.len();
        let bound = &mut s.worst[row.clone()];
        for ((b, &rx), limit) in best[row].iter_mut().zip(xs).zip(bound) {
            if rx < x0 || rx + p > x1 {
                continue;
            }
            let d: f64 = cols[rx - x0..rx - x0 + p].iter().sum::<f64>().max(0.0);
            if d <= *limit {
                b.offer(d, idx);
                *limit = b.worst();
            }
        }
    }
}

/// Gathers a group's spectra, padding the depth to a power of two by
/// repeating the last patch.
fn gather(
    spectra: &[f64],
    npx: usize,
    pp: usize,
    group: &[(usize, usize)],
    out: &mut Vec<f64>,
) -> usize {
    let depth = group.len().next_power_of_two();
    out.clear();
    for k in 0..depth {
        let (x, y) = group[k.min(group.len() - 1)];
        let at = (y * npx + x) * pp;
        out.extend_from_slice(&spectra[at..at + pp]);
    }
    depth
}

struct Filtered {
    estimates: Vec<f64>,
    weight: f64,
}

fn aggregate(
    w: usize,
    h: usize,
    p: usize,
    groups: &[Vec<(usize, usize)>],
    filtered: &[Filtered],
) -> Vec<f64> {
    let pp = p * p;
    let mut num = vec![0.0; w * h];
    let mut den = vec![0.0; w * h];
    for (group, f) in groups.iter().zip(filtered) {
        for (k, &(x, y)) in group.iter().enumerate() {
            let est = &f.estimates[k * pp..(k + 1) * pp];
            for dy in 0..p {
                let row = (y + dy) * w + x;
                for dx in 0..p {
                    num[row + dx] += f.weight * est[dy * p + dx];
                    den[row + dx] += f.weight;
                }
            }
        }
    }
    num.iter().zip(&den).map(|(n, d)| n / d).collect()
}

fn invert_group(
    coef: &mut [f64],
    depth: usize,
    keep: usize,
    dct: &Dct,
    pp: usize,
    tmp: &mut Vec<f64>,
) -> Vec<f64> {
    tmp.resize(depth * pp, 0.0);
    haar_inverse(coef, depth, pp, tmp);
    let mut estimates = vec![0.0; keep * pp];
    for k in 0..keep {
        dct.inverse_2d(
            &coef[k * pp..(k + 1) * pp],
            &mut estimates[k * pp..(k + 1) * pp],
            tmp,
        );
    }
    estimates
}

fn hard_threshold_stage(
    img: &Image,
    groups: &[Vec<(usize, usize)>],
    spectra: &[f64],
    dct: &Dct,
    sigma: f64,
    params: &Bm3dParams,
) -> Vec<f64> {
    let p = params.patch;
    let pp = p * p;
    let npx = img.w - p + 1;
    let threshold = params.hard_threshold_factor * sigma;
    let filtered: Vec<Filtered> = groups
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(coef, tmp), group| {
                let depth = gather(spectra, npx, pp, group, coef);
                tmp.resize(depth * pp, 0.0);
                haar_forward(coef, depth, pp, tmp);
                let mut retained = 0usize;
                // The 2D DC term of every layer survives.
                for (i, c) in coef.iter_mut().enumerate() {
                    if i % pp != 0 && c.abs() <= threshold {
                        *c = 0.0;
                    }
                    if *c != 0.0 {
                        retained += 1;
                    }
                }
                Filtered {
                    estimates: invert_group(coef, depth, group.len(), dct, pp, tmp),
                    weight: 1.0 / (1.0 + retained as f64),
                }
            },
        )
        .collect();
    aggregate(img.w, img.h, p, groups, &filtered)
}

fn wiener_stage(
    img: &Image,
    groups: &[Vec<(usize, usize)>],
    noisy: &[f64],
    pilot: &[f64],
    dct: &Dct,
    sigma: f64,
    params: &Bm3dParams,
) -> Vec<f64> {
    let p = params.patch;
    let pp = p * p;
    let npx = img.w - p + 1;
    let s2 = sigma * sigma;
    let filtered: Vec<Filtered> = groups
        .par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), Vec::new()),
            |(coef, pilot_coef, tmp), group| {
                let depth = gather(noisy, npx, pp, group, coef);
                gather(pilot, npx, pp, group, pilot_coef);
                tmp.resize(depth * pp, 0.0);
                haar_forward(coef, depth, pp, tmp);
                haar_forward(pilot_coef, depth, pp, tmp);
                let mut energy = 0.0;
                for (c, &pc) in coef.iter_mut().zip(pilot_coef.iter()) {
                    let shrink = pc * pc / (pc * pc + s2);
                    *c *= shrink;
                    energy += shrink * shrink;
                }
                Filtered {
                    estimates: invert_group(coef, depth, group.len(), dct, pp, tmp),
                    weight: 1.0 / energy.max(1e-12),
                }
            },
        )
        .collect();
    aggregate(img.w, img.h, p, groups, &filtered)
}
