//! Centered 2D DFT, the rigid-motion action on images, and the
//! group-adapted transform that splits an image into per-frequency fibers.
//!
//! The fiber transform maps an image `f` to a [`SpectralStack`]: for each
//! `ω ∈ Ω₀ ∪ {0}`, each rotation `g` and each `ℓ ∈ L`,
//!
//! ```text
//! stack[ω][g][ℓ] = f̂(r^g(ω + ℓ)) / d        (ω ∈ Ω₀)
//! stack[0][g][ℓ] = f̂(r^g(ℓ)) / (2d)
//! ```
//!
//! It is an isometry onto the stacks whose origin fibers satisfy
//! `stack[0][g][ℓ] = stack[0][0][r^g ℓ]`; [`GroupTransform::synthesize`] is its
//! left inverse and symmetrizes origin fibers that violate the constraint.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{add_unchecked, in_lattice, rotate_index, CenteredIndex, GridParams, Lattice};

pub type C64 = Complex<f64>;

macro_rules! grid_array {
    ($name:ident, $what:literal) => {
        #[doc = concat!("A `d x d` complex ", $what, " stored row-major in centered order.")]
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            grid: GridParams,
            values: Vec<C64>,
        }

        impl $name {
            pub fn zeros(grid: GridParams) -> Self {
                $name {
                    grid,
                    values: vec![C64::new(0.0, 0.0); grid.len()],
                }
            }

            pub fn from_values(grid: GridParams, values: Vec<C64>) -> Result<Self> {
                if values.len() != grid.len() {
                    return Err(Error::GridMismatch {
                        expected: format!("{} values", grid.len()),
                        found: format!("{} values", values.len()),
                    });
                }
                if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(Error::NonFinite($what));
                }
                Ok($name { grid, values })
            }

            pub fn from_real(grid: GridParams, values: &[f64]) -> Result<Self> {
                $name::from_values(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
            }

            pub fn from_fn(grid: GridParams, mut f: impl FnMut(CenteredIndex) -> C64) -> Self {
                $name {
                    grid,
                    values: grid.indices().map(|n| f(n)).collect(),
                }
            }

            pub fn grid(&self) -> &GridParams {
                &self.grid
            }

            pub fn values(&self) -> &[C64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [C64] {
                &mut self.values
            }

            pub fn into_values(self) -> Vec<C64> {
                self.values
            }

            pub fn get(&self, n: CenteredIndex) -> C64 {
                self.values[self.grid.position(n)]
            }

            pub fn set(&mut self, n: CenteredIndex, v: C64) {
                let pos = self.grid.position(n);
                self.values[pos] = v;
            }

            pub fn norm_sqr(&self) -> f64 {
                self.values.iter().map(|v| v.norm_sqr()).sum()
            }

            pub fn norm(&self) -> f64 {
                self.norm_sqr().sqrt()
            }

            /// `Σ self(n) · conj(other(n))`.
            pub fn inner(&self, other: &Self) -> C64 {
                self.values
                    .iter()
                    .zip(&other.values)
                    .map(|(a, b)| a * b.conj())
                    .sum()
            }

            pub fn sub(&self, other: &Self) -> Self {
                $name {
                    grid: self.grid,
                    values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
                }
            }

            pub fn add(&self, other: &Self) -> Self {
                $name {
                    grid: self.grid,
                    values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
                }
            }

            pub fn scale(&self, s: C64) -> Self {
                $name {
                    grid: self.grid,
                    values: self.values.iter().map(|v| v * s).collect(),
                }
            }

            /// `‖self - other‖ / ‖other‖`, or the absolute error when `other` is zero.
            pub fn relative_error(&self, other: &Self) -> f64 {
                let num = self.sub(other).norm();
                let den = other.norm();
                if den == 0.0 {
                    num
                } else {
                    num / den
                }
            }

            pub fn real_part(&self) -> Vec<f64> {
                self.values.iter().map(|v| v.re).collect()
            }

            pub(crate) fn ensure_grid(&self, grid: &GridParams) -> Result<()> {
                if self.grid != *grid {
                    return Err(Error::GridMismatch {
                        expected: grid.to_string(),
                        found: self.grid.to_string(),
                    });
                }
                Ok(())
            }
        }
    };
}

grid_array!(Image, "image");
grid_array!(Spectrum, "spectrum");

fn permute(grid: &GridParams, values: &[C64], g: i64, shift: CenteredIndex) -> Vec<C64> {
    grid.indices()
        .map(|n| {
            let src = rotate_index(add_unchecked(n, shift, grid), g);
            values[grid.position(src)]
        })
        .collect()
}

/// `T(λ)f(n) = f(n - λ)`; λ must lie on the translation lattice.
pub fn translate(f: &Image, lambda: CenteredIndex) -> Result<Image> {
    let grid = *f.grid();
    if !in_lattice(lambda, &grid) {
        return Err(Error::NotInLattice(lambda));
    }
    let neg = CenteredIndex::new(-lambda.n1, -lambda.n2);
    Ok(Image {
        grid,
        values: permute(&grid, &f.values, 0, neg),
    })
}

/// `R^g f(n) = f(r^g n)`.
pub fn rotate(f: &Image, g: i64) -> Image {
    Image {
        grid: f.grid,
        values: permute(&f.grid, &f.values, g, CenteredIndex::ZERO),
    }
}

/// Quarter-turn rotation of a spectrum, `F(k) ↦ F(r^g k)`.
pub fn rotate_spectrum(f: &Spectrum, g: i64) -> Spectrum {
    Spectrum {
        grid: f.grid,
        values: permute(&f.grid, &f.values, g, CenteredIndex::ZERO),
    }
}

/// `T(λ) R^g f`.
pub fn act(f: &Image, lambda: CenteredIndex, g: i64) -> Result<Image> {
    translate(&rotate(f, g), lambda)
}

/// Planned 2D FFT working on centered storage.
///
/// The centered DFT equals the standard DFT after moving centered index `n`
/// to array index `n mod d` on both axes, since the kernel is `d`-periodic.
#[derive(Clone)]
pub struct Fourier {
    grid: GridParams,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    to_standard: Vec<usize>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("grid", &self.grid).finish()
    }
}

impl Fourier {
    pub fn new(grid: GridParams) -> Self {
        let d = grid.d();
        let mut planner = FftPlanner::new();
        let h = grid.half() as usize;
        Fourier {
            grid,
            forward: planner.plan_fft_forward(d),
            inverse: planner.plan_fft_inverse(d),
            to_standard: (0..d).map(|s| (s + d - h) % d).collect(),
        }
    }

    pub fn grid(&self) -> &GridParams {
        &self.grid
    }

    fn run(&self, input: &[C64], fft: &Arc<dyn Fft<f64>>, scale: f64) -> Vec<C64> {
        let d = self.grid.d();
        let mut buf = vec![C64::new(0.0, 0.0); d * d];
        for s1 in 0..d {
            let i1 = self.to_standard[s1];
            for s2 in 0..d {
                buf[i1 * d + self.to_standard[s2]] = input[s1 * d + s2];
            }
        }
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(&mut buf, &mut scratch);
        let mut t = transpose(&buf, d);
        fft.process_with_scratch(&mut t, &mut scratch);
        // t holds the transform transposed: t[i2 * d + i1].
        let mut out = vec![C64::new(0.0, 0.0); d * d];
        for s1 in 0..d {
            let i1 = self.to_standard[s1];
            for s2 in 0..d {
                out[s1 * d + s2] = t[self.to_standard[s2] * d + i1] * scale;
            }
        }
        out
    }

    /// `f̂(k) = Σ_n f(n) e^{-2πi n·k/d}`.
    pub fn dft(&self, f: &Image) -> Result<Spectrum> {
        f.ensure_grid(&self.grid)?;
        Ok(Spectrum {
            grid: self.grid,
            values: self.run(&f.values, &self.forward, 1.0),
        })
    }

    /// `f(n) = d⁻² Σ_k F(k) e^{2πi k·n/d}`.
    pub fn idft(&self, spec: &Spectrum) -> Result<Image> {
        spec.ensure_grid(&self.grid)?;
        let d = self.grid.d() as f64;
        Ok(Image {
            grid: self.grid,
            values: self.run(&spec.values, &self.inverse, 1.0 / (d * d)),
        })
    }
}

fn transpose(buf: &[C64], d: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); d * d];
    for r in 0..d {
        for c in 0..d {
            out[c * d + r] = buf[r * d + c];
        }
    }
    out
}

/// Centered DFT of an image (plans an FFT on each call).
pub fn dft(f: &Image) -> Spectrum {
    Fourier::new(*f.grid()).dft(f).expect("grid of its own plan")
}

/// Inverse centered DFT (plans an FFT on each call).
pub fn idft(spec: &Spectrum) -> Image {
    Fourier::new(*spec.grid()).idft(spec).expect("grid of its own plan")
}

/// Halves the spectrum on the annihilator L, leaves it unchanged elsewhere.
pub fn normalize_n(spec: &Spectrum) -> Spectrum {
    let grid = *spec.grid();
    let p = grid.p() as i64;
    Spectrum::from_fn(grid, |k| {
        let v = spec.get(k);
        if k.n1 % p == 0 && k.n2 % p == 0 {
            v * 0.5
        } else {
            v
        }
    })
}

/// Per-frequency fibers of an image: `(|Ω₀| + 1) x 4 x q²` complex values,
/// laid out slot-major, then rotation, then `ℓ` in canonical L order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralStack {
    grid: GridParams,
    slots: usize,
    values: Vec<C64>,
}

impl SpectralStack {
    pub fn zeros(lattice: &Lattice) -> Self {
        let grid = *lattice.grid();
        let slots = lattice.omega_slots();
        SpectralStack {
            grid,
            slots,
            values: vec![C64::new(0.0, 0.0); slots * 4 * grid.q() * grid.q()],
        }
    }

    pub fn grid(&self) -> &GridParams {
        &self.grid
    }

    /// Number of frequency slots, `|Ω₀| + 1`.
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn fiber_len(&self) -> usize {
        self.grid.q() * self.grid.q()
    }

    pub fn fiber(&self, slot: usize, g: usize) -> &[C64] {
        let n = self.fiber_len();
        let start = (slot * 4 + g) * n;
        &self.values[start..start + n]
    }

    pub fn fiber_mut(&mut self, slot: usize, g: usize) -> &mut [C64] {
        let n = self.fiber_len();
        let start = (slot * 4 + g) * n;
        &mut self.values[start..start + n]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn sub(&self, other: &SpectralStack) -> SpectralStack {
        SpectralStack {
            grid: self.grid,
            slots: self.slots,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }
}

/// The fiber transform for one grid, with its FFT plan and gather tables.
#[derive(Clone, Debug)]
pub struct GroupTransform {
    lattice: Lattice,
    fourier: Fourier,
    // Spectrum position feeding each stack entry.
    gather: Vec<u32>,
}

impl GroupTransform {
    pub fn new(grid: GridParams) -> Result<Self> {
        if grid.p() == 1 {
            return Err(Error::EmptySector);
        }
        let lattice = Lattice::new(grid);
        let mut gather = Vec::with_capacity(lattice.omega_slots() * 4 * grid.q() * grid.q());
        for slot in 0..lattice.omega_slots() {
            let w = lattice.omega_at(slot);
            for g in 0..4 {
                for &l in lattice.annihilator() {
                    let k = rotate_index(add_unchecked(w, l, &grid), g);
                    gather.push(grid.position(k) as u32);
                }
            }
        }
        Ok(GroupTransform {
            fourier: Fourier::new(grid),
            lattice,
            gather,
        })
    }

    pub fn grid(&self) -> &GridParams {
        self.lattice.grid()
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn fourier(&self) -> &Fourier {
        &self.fourier
    }

    pub fn dft(&self, f: &Image) -> Result<Spectrum> {
        self.fourier.dft(f)
    }

    pub fn idft(&self, spec: &Spectrum) -> Result<Image> {
        self.fourier.idft(spec)
    }

    pub fn analyze(&self, f: &Image) -> Result<SpectralStack> {
        let spec = self.fourier.dft(f)?;
        Ok(self.analyze_spectrum(&spec))
    }

    pub(crate) fn analyze_spectrum(&self, spec: &Spectrum) -> SpectralStack {
        let d = self.grid().d() as f64;
        let origin = 4 * self.grid().q() * self.grid().q();
        let values = self
            .gather
            .iter()
            .enumerate()
            .map(|(i, &pos)| {
                let scale = if i < origin { 0.5 / d } else { 1.0 / d };
                spec.values[pos as usize] * scale
            })
            .collect();
        SpectralStack {
            grid: *self.grid(),
            slots: self.lattice.omega_slots(),
            values,
        }
    }

    /// Spectrum of the left inverse of [`GroupTransform::analyze`].
    pub fn synthesize_spectrum(&self, stack: &SpectralStack) -> Result<Spectrum> {
        let grid = *self.grid();
        if stack.grid != grid {
            return Err(Error::GridMismatch {
                expected: grid.to_string(),
                found: stack.grid.to_string(),
            });
        }
        let d = grid.d() as f64;
        let values = (0..grid.len())
            .map(|pos| {
                let s = self.lattice.slot_decomposition(pos);
                let ell = s.ell as usize;
                if s.omega_slot == 0 {
                    let sum: C64 = (0..4)
                        .map(|g| stack.fiber(0, g)[self.lattice.rotated_ell(ell, -(g as i64))])
                        .sum();
                    sum * (d / 2.0)
                } else {
                    let g = s.g as usize;
                    stack.fiber(s.omega_slot as usize, g)[self.lattice.rotated_ell(ell, -(g as i64))]
                        * d
                }
            })
            .collect();
        Ok(Spectrum { grid, values })
    }

    pub fn synthesize(&self, stack: &SpectralStack) -> Result<Image> {
        let spec = self.synthesize_spectrum(stack)?;
        self.fourier.idft(&spec)
    }
}

/// Direct `O(d⁴)` centered DFT, kept for cross-checks.
pub fn dft_naive(f: &Image) -> Spectrum {
    let grid = *f.grid();
    let d = grid.d() as f64;
    Spectrum::from_fn(grid, |k| {
        grid.indices()
            .map(|n| {
                let phase = -2.0 * PI * (n.dot(&k) as f64) / d;
                f.get(n) * C64::from_polar(1.0, phase)
            })
            .sum()
    })
}
