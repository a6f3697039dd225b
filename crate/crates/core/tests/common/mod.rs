//! Helpers shared by the integration tests: a brute-force spatial projector
//! written without the library's transforms, random data, and a synthetic
//! image corpus.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rigidframes::lattice::GridParams;
use rigidframes::transform::{Image, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_real(grid: GridParams, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(grid, |_| C64::new(rng.gen_range(-1.0..1.0), 0.0))
}

pub fn random_complex(grid: GridParams, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(grid, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Real images with spatial correlation, closer to photographs than white noise.
pub fn smooth_real(grid: GridParams, rng: &mut ChaCha8Rng) -> Image {
    let d = grid.d() as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-d / 2.0..d / 2.0),
                rng.gen_range(-d / 2.0..d / 2.0),
                rng.gen_range(1.0..d / 3.0),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    Image::from_fn(grid, |n| {
        let v: f64 = blobs
            .iter()
            .map(|&(c1, c2, s, a)| {
                let r2 = (n.n1 as f64 - c1).powi(2) + (n.n2 as f64 - c2).powi(2);
                a * (-r2 / (2.0 * s * s)).exp()
            })
            .sum();
        C64::new(v + 0.05 * rng.gen_range(-1.0..1.0), 0.0)
    })
}

// Row-major position of centered (n1, n2), reduced mod d.
fn pos(d: i64, n1: i64, n2: i64) -> usize {
    let h = (d - 1) / 2;
    let a = (n1 + h).rem_euclid(d);
    let b = (n2 + h).rem_euclid(d);
    (a * d + b) as usize
}

/// `(T(λ) R^g φ)(n) = φ(r^g(n - λ))`, `r(a, b) = (-b, a)`, by direct indexing.
pub fn orbit_element(phi: &[C64], d: i64, lambda: (i64, i64), g: usize) -> Vec<C64> {
    let h = (d - 1) / 2;
    let mut out = vec![C64::new(0.0, 0.0); (d * d) as usize];
    for n1 in -h..=h {
        for n2 in -h..=h {
            let (mut a, mut b) = (n1 - lambda.0, n2 - lambda.1);
            for _ in 0..g {
                (a, b) = (-b, a);
            }
            out[pos(d, n1, n2)] = phi[pos(d, a, b)];
        }
    }
    out
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    // Σ conj(a) b
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Orthonormal basis of the span of every `T(λ) R^g φ_j`, by two-pass
/// Gram-Schmidt with relative drop tolerance 1e-9.
pub struct OrbitOracle {
    pub d: i64,
    pub basis: Vec<Vec<C64>>,
}

impl OrbitOracle {
    pub fn new(grid: GridParams, generators: &[Image]) -> Self {
        let d = grid.d() as i64;
        let (p, q) = (grid.p() as i64, grid.q() as i64);
        let hp = (p - 1) / 2;
        let mut columns = Vec::new();
        for phi in generators {
            for t1 in -hp..=hp {
                for t2 in -hp..=hp {
                    for g in 0..4 {
                        columns.push(orbit_element(phi.values(), d, (t1 * q, t2 * q), g));
                    }
                }
            }
        }
        let scale = columns
            .iter()
            .map(|c| dot(c, c).re.sqrt())
            .fold(0.0, f64::max);
        let mut basis: Vec<Vec<C64>> = Vec::new();
        for mut c in columns {
            for _ in 0..2 {
                for b in &basis {
                    let k = dot(b, &c);
                    for (x, y) in c.iter_mut().zip(b) {
                        *x -= k * y;
                    }
                }
            }
            let n = dot(&c, &c).re.sqrt();
            if n > 1e-9 * scale {
                basis.push(c.into_iter().map(|x| x / n).collect());
            }
        }
        OrbitOracle { d, basis }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn project(&self, f: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); f.len()];
        for b in &self.basis {
            let k = dot(b, f);
            for (o, x) in out.iter_mut().zip(b) {
                *o += k * x;
            }
        }
        out
    }
}

pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

// One synthetic scene: soft blobs, a grating, a few hard-edged shapes and noise.
fn scene(w: u32, h: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (wf, hf) = (w as f64, h as f64);
    let base = rng.gen_range(60.0..160.0);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.gen_range(0.0..wf),
                rng.gen_range(0.0..hf),
                rng.gen_range(15.0..90.0),
                rng.gen_range(-70.0..70.0),
            )
        })
        .collect();
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let freq = rng.gen_range(0.02..0.15);
    let amp = rng.gen_range(5.0..30.0);
    let rects: Vec<(f64, f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let x0 = rng.gen_range(0.0..wf);
            let y0 = rng.gen_range(0.0..hf);
            (x0, y0, x0 + rng.gen_range(20.0..120.0), y0 + rng.gen_range(20.0..120.0), rng.gen_range(-50.0..50.0))
        })
        .collect();
    let disks: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.gen_range(0.0..wf),
                rng.gen_range(0.0..hf),
                rng.gen_range(10.0..60.0),
                rng.gen_range(-60.0..60.0),
            )
        })
        .collect();
    let mut px = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let mut v = base;
            for &(cx, cy, s, a) in &blobs {
                v += a * (-((xf - cx).powi(2) + (yf - cy).powi(2)) / (2.0 * s * s)).exp();
            }
            v += amp * (freq * (xf * theta.cos() + yf * theta.sin())).sin();
            for &(x0, y0, x1, y1, a) in &rects {
                if xf >= x0 && xf < x1 && yf >= y0 && yf < y1 {
                    v += a;
                }
            }
            for &(cx, cy, r, a) in &disks {
                if (xf - cx).powi(2) + (yf - cy).powi(2) < r * r {
                    v += a;
                }
            }
            v += rng.gen_range(-6.0..6.0);
            px.push(v.clamp(0.0, 255.0));
        }
    }
    px
}

/// Writes `n` synthetic scenes of roughly 400x380 pixels (gray PGM for even
/// indices, color PNG for odd ones) and a manifest listing them.
pub fn write_corpus(dir: &Path, n: usize, seed: u64) -> (PathBuf, Vec<PathBuf>) {
    let mut rng = rng(seed);
    let mut paths = Vec::with_capacity(n);
    for i in 0..n {
        let w = 380 + rng.gen_range(0..41);
        let h = 360 + rng.gen_range(0..41);
        let px = scene(w, h, &mut rng);
        let path = if i % 2 == 0 {
            let img = GrayImage::from_fn(w, h, |x, y| Luma([px[(y * w + x) as usize].round() as u8]));
            let path = dir.join(format!("scene{i:02}.pgm"));
            img.save(&path).unwrap();
            path
        } else {
            let tint: [f64; 3] = [rng.gen_range(0.8..1.2), rng.gen_range(0.8..1.2), rng.gen_range(0.8..1.2)];
            let img = RgbImage::from_fn(w, h, |x, y| {
                let v = px[(y * w + x) as usize];
                Rgb(tint.map(|t| (v * t).round().clamp(0.0, 255.0) as u8))
            });
            let path = dir.join(format!("scene{i:02}.png"));
            img.save(&path).unwrap();
            path
        };
        paths.push(path);
    }
    let manifest = dir.join("manifest.txt");
    let mut text = String::from("# synthetic corpus\n");
    for p in &paths {
        text.push_str(p.file_name().unwrap().to_str().unwrap());
        text.push('\n');
    }
    std::fs::write(&manifest, text).unwrap();
    (manifest, paths)
}
