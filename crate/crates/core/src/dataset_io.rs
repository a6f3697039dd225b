//! Dataset ingestion, model persistence and image export.
//!
//! Images are decoded, converted to 8-bit gray, center-cropped to `d x d`
//! and stored row-major: pixel `(i, j)` of the crop is centered index
//! `(i - h, j - h)`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{CenteredIndex, GridParams};
use crate::solver::{FitMode, FitStats, GeneratorModel, OmegaStats};
use crate::transform::{dft, rotate_spectrum, Image, C64};

const MODEL_MAGIC: &[u8; 8] = b"RGFRAMES";
pub const MODEL_VERSION: u32 = 1;

/// What is subtracted from every image before fitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanMode {
    /// Pixelwise mean image.
    Image,
    /// One scalar: the mean over all pixels of all images.
    Scalar,
    None,
}

impl MeanMode {
    fn tag(self) -> &'static str {
        match self {
            MeanMode::Image => "image",
            MeanMode::Scalar => "scalar",
            MeanMode::None => "none",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CropAnchor {
    /// Offset `floor((w - d) / 2)` on each axis.
    Center,
}

/// Image list plus preprocessing flags.
///
/// Text form: one path per line (relative paths resolve against the
/// manifest's directory); `#` lines may carry `key=value` headers `d`, `p`,
/// `q`, `crop=center` and `mean=image|scalar|none`. Other `#` lines and blank
/// lines are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub paths: Vec<PathBuf>,
    pub d: Option<usize>,
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub crop: CropAnchor,
    pub mean: MeanMode,
}

impl DatasetManifest {
    pub fn new(paths: Vec<PathBuf>) -> Self {
        DatasetManifest {
            paths,
            d: None,
            p: None,
            q: None,
            crop: CropAnchor::Center,
            mean: MeanMode::Image,
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut m = DatasetManifest::new(Vec::new());
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let Some((key, value)) = rest.trim().split_once('=') else {
                    continue;
                };
                let (key, value) = (key.trim(), value.trim());
                let number = || {
                    value
                        .parse::<usize>()
                        .map_err(|_| Error::Manifest(format!("line {}: {key} must be a positive integer", lineno + 1)))
                };
                match key {
                    "d" => m.d = Some(number()?),
                    "p" => m.p = Some(number()?),
                    "q" => m.q = Some(number()?),
                    "crop" => {
                        if value != "center" {
                            return Err(Error::Manifest(format!("line {}: unsupported crop '{value}'", lineno + 1)));
                        }
                    }
                    "mean" => {
                        m.mean = match value {
                            "image" => MeanMode::Image,
                            "scalar" => MeanMode::Scalar,
                            "none" => MeanMode::None,
                            _ => {
                                return Err(Error::Manifest(format!("line {}: unknown mean mode '{value}'", lineno + 1)))
                            }
                        }
                    }
                    _ => {}
                }
                continue;
            }
            let path = PathBuf::from(line);
            m.paths.push(if path.is_absolute() { path } else { base_dir.join(path) });
        }
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    /// Resolves the grid from the headers and/or explicit `p`, `q`.
    pub fn grid(&self, p: Option<usize>, q: Option<usize>) -> Result<GridParams> {
        let p = p.or(self.p);
        let q = q.or(self.q);
        let grid = match (p, q, self.d) {
            (Some(p), Some(q), _) => GridParams::new(p, q)?,
            (Some(p), None, Some(d)) => GridParams::from_side(d, p)?,
            (None, Some(q), Some(d)) if q > 0 && d % q == 0 => GridParams::new(d / q, q)?,
            _ => return Err(Error::InvalidGrid("grid needs p and q (or d with one of them)".into())),
        };
        if let Some(d) = self.d {
            if d != grid.d() {
                return Err(Error::GridMismatch {
                    expected: grid.to_string(),
                    found: format!("d={d} in manifest"),
                });
            }
        }
        Ok(grid)
    }
}

/// Preprocessed dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub grid: GridParams,
    pub names: Vec<String>,
    /// Mean-removed images.
    pub images: Vec<Image>,
    pub mean_image: Vec<f64>,
    /// SHA-256 over the preprocessing flags and every cropped pixel.
    pub digest: [u8; 32],
}

impl Dataset {
    pub fn digest_hex(&self) -> String {
        self.digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn named_images(&self) -> Vec<(String, Image)> {
        self.names.iter().cloned().zip(self.images.iter().cloned()).collect()
    }
}

/// 8-bit gray values: Luma8 passes through, anything else uses 0.299/0.587/0.114.
pub fn to_gray(img: &DynamicImage) -> (u32, u32, Vec<u8>) {
    match img {
        DynamicImage::ImageLuma8(g) => (g.width(), g.height(), g.as_raw().clone()),
        _ => {
            let rgb = img.to_rgb8();
            let px = rgb
                .pixels()
                .map(|p| {
                    let [r, g, b] = p.0;
                    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round().clamp(0.0, 255.0) as u8
                })
                .collect();
            (rgb.width(), rgb.height(), px)
        }
    }
}

/// Center crop of a `w x h` gray buffer to `d x d`.
pub fn center_crop(path: &Path, w: u32, h: u32, px: &[u8], d: usize) -> Result<Vec<u8>> {
    if (w as usize) < d || (h as usize) < d {
        return Err(Error::ImageTooSmall {
            path: path.to_path_buf(),
            width: w,
            height: h,
            d,
        });
    }
    let x0 = (w as usize - d) / 2;
    let y0 = (h as usize - d) / 2;
    let mut out = Vec::with_capacity(d * d);
    for row in y0..y0 + d {
        let start = row * w as usize + x0;
        out.extend_from_slice(&px[start..start + d]);
    }
    Ok(out)
}

/// Decodes, grays and crops one file.
pub fn load_pixels(path: &Path, d: usize) -> Result<Vec<u8>> {
    let decode = |message: String| Error::Decode {
        path: path.to_path_buf(),
        message,
    };
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| decode(e.to_string()))?;
    let (w, h, px) = to_gray(&img);
    center_crop(path, w, h, &px, d)
}

/// A single raw image on `grid` (no mean removal).
pub fn load_image(path: &Path, grid: GridParams) -> Result<Image> {
    let px = load_pixels(path, grid.d())?;
    Ok(pixels_to_image(grid, &px))
}

fn pixels_to_image(grid: GridParams, px: &[u8]) -> Image {
    let values = px.iter().map(|&v| C64::new(v as f64, 0.0)).collect();
    Image::from_values(grid, values).expect("d*d finite pixels")
}

// Fixed-shape pairwise sum so the result does not depend on thread scheduling.
fn tree_sum(images: &[Vec<u8>], len: usize) -> Vec<f64> {
    match images.len() {
        0 => vec![0.0; len],
        1 => images[0].iter().map(|&v| v as f64).collect(),
        n => {
            let (a, b) = images.split_at(n / 2);
            let (mut x, y) = rayon::join(|| tree_sum(a, len), || tree_sum(b, len));
            for (u, v) in x.iter_mut().zip(y) {
                *u += v;
            }
            x
        }
    }
}

/// Reads every manifest entry in order, then removes the mean.
pub fn load_dataset(manifest: &DatasetManifest, grid: GridParams) -> Result<Dataset> {
    if manifest.paths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = grid.d();
    let pixels = manifest
        .paths
        .par_iter()
        .map(|p| load_pixels(p, d))
        .collect::<Result<Vec<_>>>()?;
    let m = pixels.len();
    let sum = tree_sum(&pixels, grid.len());
    let mean_image: Vec<f64> = match manifest.mean {
        MeanMode::Image => sum.iter().map(|s| s / m as f64).collect(),
        MeanMode::Scalar => {
            let total: f64 = sum.iter().sum();
            vec![total / (m * grid.len()) as f64; grid.len()]
        }
        MeanMode::None => vec![0.0; grid.len()],
    };

    let mut hasher = Sha256::new();
    hasher.update(b"rigidframes-dataset\0");
    for v in [d, grid.p(), grid.q()] {
        hasher.update((v as u64).to_le_bytes());
    }
    hasher.update(b"crop=center\0mean=");
    hasher.update(manifest.mean.tag().as_bytes());
    hasher.update((m as u64).to_le_bytes());
    for px in &pixels {
        hasher.update(px);
    }

    let images = pixels
        .iter()
        .map(|px| {
            let values = px
                .iter()
                .zip(&mean_image)
                .map(|(&v, mu)| C64::new(v as f64 - mu, 0.0))
                .collect();
            Image::from_values(grid, values)
        })
        .collect::<Result<Vec<_>>>()?;
    let names = manifest
        .paths
        .iter()
        .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    Ok(Dataset {
        grid,
        names,
        images,
        mean_image,
        digest: hasher.finalize().into(),
    })
}

/// Binary PGM (P5) of real pixel values, rounded and clamped to 0..255.
pub fn encode_pgm(d: usize, values: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{d} {d}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| if v.is_nan() { 0 } else { v.round().clamp(0.0, 255.0) as u8 }));
    out
}

pub fn write_pgm(path: &Path, d: usize, values: &[f64]) -> Result<()> {
    fs::write(path, encode_pgm(d, values)).map_err(|e| Error::io(path, e))
}

fn mode_code(mode: FitMode) -> u8 {
    match mode {
        FitMode::Direct => 0,
        FitMode::Incremental => 1,
    }
}

/// Little-endian model file with a trailing SHA-256 of everything before it.
pub fn encode_model(model: &GeneratorModel) -> Vec<u8> {
    let g = &model.grid;
    let st = &model.fit_stats;
    let mut b = Vec::with_capacity(64 + 8 * g.len() * (1 + 2 * model.kappa));
    b.extend_from_slice(MODEL_MAGIC);
    b.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [g.d(), g.p(), g.q(), model.kappa] {
        b.extend_from_slice(&(v as u32).to_le_bytes());
    }
    b.extend_from_slice(&(st.m as u64).to_le_bytes());
    b.push(mode_code(st.mode));
    for v in &model.mean_image {
        b.extend_from_slice(&v.to_le_bytes());
    }
    for phi in &model.generators {
        for z in phi.values() {
            b.extend_from_slice(&z.re.to_le_bytes());
            b.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    b.extend_from_slice(&(st.per_omega.len() as u32).to_le_bytes());
    for o in &st.per_omega {
        b.extend_from_slice(&o.omega.n1.to_le_bytes());
        b.extend_from_slice(&o.omega.n2.to_le_bytes());
        b.extend_from_slice(&o.retained.to_le_bytes());
        b.extend_from_slice(&o.discarded.to_le_bytes());
    }
    b.extend_from_slice(&st.total_energy.to_le_bytes());
    b.extend_from_slice(&st.image_residual.to_le_bytes());
    let sum: [u8; 32] = Sha256::digest(&b).into();
    b.extend_from_slice(&sum);
    b
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::CorruptModel("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<GeneratorModel> {
    if bytes.len() < MODEL_MAGIC.len() + 32 {
        return Err(Error::ChecksumMismatch);
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::ChecksumMismatch);
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8)? != MODEL_MAGIC {
        return Err(Error::CorruptModel("bad magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let d = r.u32()? as usize;
    let p = r.u32()? as usize;
    let q = r.u32()? as usize;
    let kappa = r.u32()? as usize;
    let grid = GridParams::new(p, q).map_err(|e| Error::CorruptModel(e.to_string()))?;
    if grid.d() != d {
        return Err(Error::CorruptModel(format!("d = {d} but p q = {}", grid.d())));
    }
    if kappa == 0 || kappa > grid.max_kappa() {
        return Err(Error::CorruptModel(format!("kappa = {kappa} outside 1..={}", grid.max_kappa())));
    }
    let m = r.u64()? as usize;
    let mode = match r.u8()? {
        0 => FitMode::Direct,
        1 => FitMode::Incremental,
        other => return Err(Error::CorruptModel(format!("unknown mode {other}"))),
    };
    let mean_image = (0..grid.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let generators = (0..kappa)
        .map(|_| {
            let values = (0..grid.len())
                .map(|_| Ok(C64::new(r.f64()?, r.f64()?)))
                .collect::<Result<Vec<_>>>()?;
            Image::from_values(grid, values).map_err(|e| Error::CorruptModel(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let n_omega = r.u32()? as usize;
    let per_omega = (0..n_omega)
        .map(|_| {
            Ok(OmegaStats {
                omega: CenteredIndex::new(r.i64()?, r.i64()?),
                retained: r.f64()?,
                discarded: r.f64()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total_energy = r.f64()?;
    let image_residual = r.f64()?;
    if r.pos != body.len() {
        return Err(Error::CorruptModel("trailing bytes".into()));
    }
    Ok(GeneratorModel {
        grid,
        kappa,
        generators,
        mean_image,
        fit_stats: FitStats {
            m,
            mode,
            total_energy,
            per_omega,
            image_residual,
        },
    })
}

pub fn save_model(model: &GeneratorModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<GeneratorModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Fails unless the model was fitted on `grid`.
pub fn check_model_grid(model: &GeneratorModel, grid: &GridParams) -> Result<()> {
    if model.grid != *grid {
        return Err(Error::GridMismatch {
            expected: model.grid.to_string(),
            found: grid.to_string(),
        });
    }
    Ok(())
}

// ln(1 + x), scaled so the largest value maps to 255.
fn log_scaled(values: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = values.iter().map(|v| v.ln_1p()).collect();
    let max = logs.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        logs.iter().map(|v| 255.0 * v / max).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Rendered spectra of generator `j`: `|φ̂|`, the pixelwise maximum of the
/// four rotated copies, and their sum. Frequency 0 is the image center.
pub fn spectra_images(phi: &Image) -> [Vec<f64>; 3] {
    let spec = dft(phi);
    let rot: Vec<Vec<f64>> = (0..4)
        .map(|g| rotate_spectrum(&spec, g).values().iter().map(|z| z.norm()).collect())
        .collect();
    let n = rot[0].len();
    let overlay: Vec<f64> = (0..n).map(|i| rot.iter().map(|r| r[i]).fold(0.0, f64::max)).collect();
    let sum: Vec<f64> = (0..n).map(|i| rot.iter().map(|r| r[i]).sum()).collect();
    [log_scaled(&rot[0]), log_scaled(&overlay), log_scaled(&sum)]
}

/// Writes `gen<j>_abs.pgm`, `gen<j>_rot.pgm`, `gen<j>_sum.pgm` for `j = 1..=κ`.
pub fn export_spectra(model: &GeneratorModel, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let d = model.grid.d();
    let mut written = Vec::with_capacity(3 * model.kappa);
    for (j, phi) in model.generators.iter().enumerate() {
        let imgs = spectra_images(phi);
        for (kind, values) in ["abs", "rot", "sum"].iter().zip(imgs.iter()) {
            let path = out_dir.join(format!("gen{}_{kind}.pgm", j + 1));
            write_pgm(&path, d, values)?;
            written.push(path);
        }
    }
    Ok(written)
}
