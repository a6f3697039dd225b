//! Orthogonal projection onto the invariant space spanned by a generator
//! family, frame coefficients, and the pixel error metric.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{CenteredIndex, GridParams};
use crate::linalg::{columns_to_matrix, orthonormalize, CMatrix, CVector};
use crate::solver::GeneratorModel;
use crate::transform::{rotate_spectrum, GroupTransform, Image, SpectralStack, Spectrum, C64};

/// Threshold used when re-orthonormalizing the fibers of the generators.
pub const BASIS_RTOL: f64 = 1e-10;

/// Projection onto `S(Φ)`, evaluated fiberwise.
#[derive(Clone, Debug)]
pub struct Projector {
    transform: GroupTransform,
    generators: Vec<Image>,
    // Orthonormal basis of the fiber subspace, one matrix per slot.
    bases: Vec<CMatrix>,
}

impl Projector {
    pub fn new(model: &GeneratorModel) -> Result<Self> {
        Self::from_generators(model.grid, &model.generators)
    }

    pub fn from_generators(grid: GridParams, generators: &[Image]) -> Result<Self> {
        Self::with_transform(GroupTransform::new(grid)?, generators)
    }

    pub fn with_transform(transform: GroupTransform, generators: &[Image]) -> Result<Self> {
        for phi in generators {
            phi.ensure_grid(transform.grid())?;
        }
        let stacks = generators
            .iter()
            .map(|phi| transform.analyze(phi))
            .collect::<Result<Vec<_>>>()?;
        let q2 = transform.grid().q() * transform.grid().q();
        let bases = (0..transform.lattice().omega_slots())
            .into_par_iter()
            .map(|slot| {
                let fibers: Vec<CVector> = stacks
                    .iter()
                    .flat_map(|st| (0..4).map(move |g| CVector::from_column_slice(st.fiber(slot, g))))
                    .collect();
                columns_to_matrix(&orthonormalize(&fibers, BASIS_RTOL), q2)
            })
            .collect();
        Ok(Projector {
            transform,
            generators: generators.to_vec(),
            bases,
        })
    }

    pub fn grid(&self) -> &GridParams {
        self.transform.grid()
    }

    pub fn transform(&self) -> &GroupTransform {
        &self.transform
    }

    pub fn generators(&self) -> &[Image] {
        &self.generators
    }

    /// Orthonormal basis of the fiber subspace at a slot (slot 0 is the origin).
    pub fn basis(&self, slot: usize) -> &CMatrix {
        &self.bases[slot]
    }

    /// `dim S(Φ)`: every fiber direction away from the origin appears in four
    /// rotated sectors, the origin ones once.
    pub fn dimension(&self) -> usize {
        self.bases[0].ncols() + 4 * self.bases[1..].iter().map(|b| b.ncols()).sum::<usize>()
    }

    pub fn project_stack(&self, stack: &SpectralStack) -> SpectralStack {
        let mut out = stack.clone();
        for (slot, b) in self.bases.iter().enumerate() {
            for g in 0..4 {
                let fiber = out.fiber_mut(slot, g);
                if b.ncols() == 0 {
                    fiber.fill(C64::new(0.0, 0.0));
                    continue;
                }
                let v = CVector::from_column_slice(fiber);
                let p = b * (b.adjoint() * v);
                fiber.copy_from_slice(p.as_slice());
            }
        }
        out
    }

    pub fn project(&self, f: &Image) -> Result<Image> {
        f.ensure_grid(self.grid())?;
        let stack = self.transform.analyze(f)?;
        self.transform.synthesize(&self.project_stack(&stack))
    }

    /// `‖f - P f‖²`.
    pub fn residual_sqr(&self, f: &Image) -> Result<f64> {
        Ok(f.sub(&self.project(f)?).norm_sqr())
    }

    /// All inner products `⟨f, T(λ) R^g φ_j⟩`, computed through the spectrum.
    pub fn frame_coefficients(&self, f: &Image) -> Result<FrameCoefficients> {
        f.ensure_grid(self.grid())?;
        let grid = *self.grid();
        let p = grid.p();
        let d2 = (grid.d() * grid.d()) as f64;
        let fhat = self.transform.dft(f)?;
        let tw = Twiddles::new(p);
        let spectra = self.generator_spectra()?;
        let mut values = vec![C64::new(0.0, 0.0); spectra.len() * p * p * 4];
        for (j, rotated) in spectra.iter().enumerate() {
            for (g, ph) in rotated.iter().enumerate() {
                // fold over k mod p, then a p x p inverse DFT gives every λ = t q
                let mut fold = vec![C64::new(0.0, 0.0); p * p];
                for (pos, k) in grid.indices().enumerate() {
                    let s = residue(k, p);
                    fold[s] += fhat.values()[pos] * ph.values()[pos].conj();
                }
                let c = tw.to_lattice(&fold);
                for (t, v) in c.into_iter().enumerate() {
                    values[(j * p * p + t) * 4 + g] = v / d2;
                }
            }
        }
        Ok(FrameCoefficients {
            grid,
            kappa: spectra.len(),
            values,
        })
    }

    /// `Σ c_j(λ, g) T(λ) R^g φ_j`.
    pub fn reconstruct(&self, coeffs: &FrameCoefficients) -> Result<Image> {
        let grid = *self.grid();
        if coeffs.grid != grid {
            return Err(Error::GridMismatch {
                expected: grid.to_string(),
                found: coeffs.grid.to_string(),
            });
        }
        let p = grid.p();
        let spectra = self.generator_spectra()?;
        if coeffs.kappa != spectra.len() {
            return Err(Error::Numerical(format!(
                "{} coefficient families for {} generators",
                coeffs.kappa,
                spectra.len()
            )));
        }
        let tw = Twiddles::new(p);
        let mut out = Spectrum::zeros(grid);
        for (j, rotated) in spectra.iter().enumerate() {
            for (g, ph) in rotated.iter().enumerate() {
                let c: Vec<C64> = (0..p * p).map(|t| coeffs.values[(j * p * p + t) * 4 + g]).collect();
                let b = tw.to_residues(&c);
                for (pos, k) in grid.indices().enumerate() {
                    out.values_mut()[pos] += ph.values()[pos] * b[residue(k, p)];
                }
            }
        }
        self.transform.idft(&out)
    }

    // [j][g] = spectrum of R^g φ_j, i.e. φ̂_j(r^g k).
    fn generator_spectra(&self) -> Result<Vec<[Spectrum; 4]>> {
        self.generators
            .iter()
            .map(|phi| {
                let s = self.transform.dft(phi)?;
                Ok([0i64, 1, 2, 3].map(|g| rotate_spectrum(&s, g)))
            })
            .collect()
    }
}

fn residue(k: CenteredIndex, p: usize) -> usize {
    let p = p as i64;
    (k.n1.rem_euclid(p) * p + k.n2.rem_euclid(p)) as usize
}

// Separable p x p transforms between residues `s` of `k mod p` and centered
// lattice coordinates `t` (λ = t q).
struct Twiddles {
    p: usize,
    // e^{2πi t s / p}, row t (centered order), column s
    table: Vec<C64>,
}

impl Twiddles {
    fn new(p: usize) -> Self {
        let h = (p as i64 - 1) / 2;
        let mut table = Vec::with_capacity(p * p);
        for ti in 0..p {
            let t = ti as i64 - h;
            for s in 0..p {
                let ang = 2.0 * PI * ((t * s as i64).rem_euclid(p as i64)) as f64 / p as f64;
                table.push(C64::from_polar(1.0, ang));
            }
        }
        Twiddles { p, table }
    }

    // out[t] = Σ_s a[s] e^{2πi t·s/p}
    fn to_lattice(&self, a: &[C64]) -> Vec<C64> {
        self.apply(a, |t, s| self.table[t * self.p + s])
    }

    // out[s] = Σ_t a[t] e^{-2πi t·s/p}
    fn to_residues(&self, a: &[C64]) -> Vec<C64> {
        self.apply(a, |s, t| self.table[t * self.p + s].conj())
    }

    // out[o] = Σ_i a[i] w(o, i), separably over both axes
    fn apply(&self, a: &[C64], w: impl Fn(usize, usize) -> C64) -> Vec<C64> {
        let p = self.p;
        let mut rows = vec![C64::new(0.0, 0.0); p * p];
        for i1 in 0..p {
            for o2 in 0..p {
                rows[i1 * p + o2] = (0..p).map(|i2| a[i1 * p + i2] * w(o2, i2)).sum();
            }
        }
        let mut out = vec![C64::new(0.0, 0.0); p * p];
        for o1 in 0..p {
            for o2 in 0..p {
                out[o1 * p + o2] = (0..p).map(|i1| rows[i1 * p + o2] * w(o1, i1)).sum();
            }
        }
        out
    }
}

/// `⟨f, T(λ) R^g φ_j⟩` for every generator, lattice point (canonical order) and rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameCoefficients {
    grid: GridParams,
    kappa: usize,
    values: Vec<C64>,
}

impl FrameCoefficients {
    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `j` is zero-based; `lambda_index` indexes Λ in canonical order.
    pub fn get(&self, j: usize, lambda_index: usize, g: usize) -> C64 {
        let p2 = self.grid.p() * self.grid.p();
        self.values[(j * p2 + lambda_index) * 4 + g]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// Percent RMS pixel error against the 8-bit range, `100 ‖f - a‖ / (255 d)`.
pub fn delta_error(f: &Image, approx: &Image) -> f64 {
    100.0 * f.sub(approx).norm() / (255.0 * f.grid().d() as f64)
}

/// Real part of an image together with the fraction of its energy that was imaginary.
pub fn as_real(f: &Image) -> (Vec<f64>, f64) {
    let total = f.norm_sqr();
    let imag: f64 = f.values().iter().map(|v| v.im * v.im).sum();
    let ratio = if total > 0.0 { imag / total } else { 0.0 };
    (f.real_part(), ratio)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub residual: f64,
    pub delta_percent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproximationReport {
    pub rows: Vec<ReportRow>,
    pub bins: Vec<HistogramBin>,
    pub mean_delta: f64,
    pub max_delta: f64,
    pub total_residual_sqr: f64,
}

impl ApproximationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,residual,delta_percent\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.9e},{:.6}", csv_field(&r.name), r.residual, r.delta_percent);
        }
        s.push_str("bin_lo,bin_hi,count\n");
        for b in &self.bins {
            let _ = writeln!(s, "{:.6},{:.6},{}", b.lower, b.upper, b.count);
        }
        let _ = writeln!(s, "mean_delta_percent,{:.6}", self.mean_delta);
        let _ = writeln!(s, "max_delta_percent,{:.6}", self.max_delta);
        let _ = writeln!(s, "total_residual_sq,{:.9e}", self.total_residual_sqr);
        s
    }
}

fn csv_field(name: &str) -> String {
    if name.contains([',', '"', '\n']) {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_string()
    }
}

/// Per-image residuals and `Δ`, binned over `[0, max Δ]`.
pub fn error_histogram(
    projector: &Projector,
    images: &[(String, Image)],
    bins: usize,
) -> Result<ApproximationReport> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if bins == 0 {
        return Err(Error::InvalidGrid("histogram needs at least one bin".into()));
    }
    let rows = images
        .par_iter()
        .map(|(name, f)| {
            let pf = projector.project(f)?;
            Ok(ReportRow {
                name: name.clone(),
                residual: f.sub(&pf).norm(),
                delta_percent: delta_error(f, &pf),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_delta = rows.iter().map(|r| r.delta_percent).fold(0.0, f64::max);
    let mean_delta = rows.iter().map(|r| r.delta_percent).sum::<f64>() / rows.len() as f64;
    let width = if max_delta > 0.0 { max_delta / bins as f64 } else { 1.0 / bins as f64 };
    let mut hist: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lower: b as f64 * width,
            upper: (b + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for r in &rows {
        let b = ((r.delta_percent / width) as usize).min(bins - 1);
        hist[b].count += 1;
    }
    Ok(ApproximationReport {
        total_residual_sqr: rows.iter().map(|r| r.residual * r.residual).sum(),
        rows,
        bins: hist,
        mean_delta,
        max_delta,
    })
}
