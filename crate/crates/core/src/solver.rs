//! Fitting pipeline: per-frequency reduced datasets, their truncated SVDs,
//! and synthesis of the generator family.
//!
//! For every `ω ∈ Ω₀ ∪ {0}` the dataset is reduced to `4m` vectors of
//! length `q²` (one fiber per image and rotation). The leading left singular
//! vectors of that reduced data give the fiber subspace of the optimal
//! invariant space at `ω`; generator `j` takes columns `4(j-1)+g+1` as its
//! rotation components and is assembled by the inverse fiber transform.
//!
//! At the origin the fibers of one image are permutations of each other, so
//! the reduced problem splits into the four eigenspaces of the rotation
//! `ℓ ↦ r(ℓ)` on `ℓ₂(L)`. A generator contributes one direction to each of
//! them, so the origin is solved per eigenspace (`κ` vectors each) and
//! column `4(j-1)+g+1` is the `j`-th vector of eigenvalue `i^g`.

use std::fmt;

use log::{info, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{CenteredIndex, GridParams, Lattice};
use crate::linalg::{
    canonical_complement, canonical_span_basis, hermitian_eigen, phase_normalize, svd_left, CMatrix, CVector,
};
use crate::projector::Projector;
use crate::transform::{GroupTransform, Image, SpectralStack, C64};

/// Singular values at or below this fraction of the largest are rank deficiency (direct mode).
pub const SVD_NULL_RTOL: f64 = 1e-12;
/// Gram eigenvalues at or below this fraction of the largest are rank deficiency.
pub const GRAM_NULL_RTOL: f64 = 1e-12;
/// Consecutive squared singular values closer than this (relative to the
/// largest) form one degenerate block.
pub const DEGENERACY_RTOL: f64 = 1e-10;

/// How reduced problems are assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMode {
    /// Keep every fiber; SVD of the `q² x 4m` data matrix.
    Direct,
    /// Accumulate `X Xᴴ` batch by batch; Hermitian eigendecomposition.
    Incremental,
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMode::Direct => "direct",
            FitMode::Incremental => "incremental",
        })
    }
}

#[derive(Clone, Debug)]
pub enum ReducedData {
    /// Columns ordered image-major, rotation-minor.
    Direct(CMatrix),
    Gram(CMatrix),
}

/// The reduced dataset at one frequency.
#[derive(Clone, Debug)]
pub struct ReducedProblem {
    omega: CenteredIndex,
    slot: usize,
    m: usize,
    data: ReducedData,
}

impl ReducedProblem {
    /// An empty accumulator for incremental mode.
    pub fn incremental(lattice: &Lattice, omega: CenteredIndex) -> Result<Self> {
        let slot = slot_for(lattice, omega)?;
        let n = lattice.grid().q() * lattice.grid().q();
        Ok(ReducedProblem {
            omega,
            slot,
            m: 0,
            data: ReducedData::Gram(CMatrix::zeros(n, n)),
        })
    }

    /// Direct-mode problem from precomputed stacks.
    pub fn from_stacks(lattice: &Lattice, stacks: &[SpectralStack], omega: CenteredIndex) -> Result<Self> {
        let slot = slot_for(lattice, omega)?;
        if stacks.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_stacks(lattice, stacks)?;
        Ok(ReducedProblem {
            omega,
            slot,
            m: stacks.len(),
            data: ReducedData::Direct(data_matrix(stacks, slot)),
        })
    }

    pub fn omega(&self) -> CenteredIndex {
        self.omega
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn data(&self) -> &ReducedData {
        &self.data
    }

    pub fn data_matrix(&self) -> Option<&CMatrix> {
        match &self.data {
            ReducedData::Direct(x) => Some(x),
            ReducedData::Gram(_) => None,
        }
    }

    pub fn gram_matrix(&self) -> Option<&CMatrix> {
        match &self.data {
            ReducedData::Gram(g) => Some(g),
            ReducedData::Direct(_) => None,
        }
    }

    /// `‖X‖_F²`, the energy of the reduced data.
    pub fn energy(&self) -> f64 {
        match &self.data {
            ReducedData::Direct(x) => x.norm_squared(),
            ReducedData::Gram(g) => g.diagonal().iter().map(|v| v.re).sum(),
        }
    }

    /// `G += X_b X_bᴴ` for the fibers of a batch of images.
    pub fn accumulate_gram(&mut self, transform: &GroupTransform, images: &[Image]) -> Result<()> {
        let stacks = images
            .iter()
            .map(|f| transform.analyze(f))
            .collect::<Result<Vec<_>>>()?;
        self.accumulate_stacks(transform.lattice(), &stacks)
    }

    pub fn accumulate_stacks(&mut self, lattice: &Lattice, stacks: &[SpectralStack]) -> Result<()> {
        let ReducedData::Gram(gram) = &mut self.data else {
            return Err(Error::ModeMismatch("accumulate_gram needs an incremental problem"));
        };
        if stacks.is_empty() {
            return Ok(());
        }
        check_stacks(lattice, stacks)?;
        let x = data_matrix(stacks, self.slot);
        *gram += &x * x.adjoint();
        self.m += stacks.len();
        Ok(())
    }
}

fn slot_for(lattice: &Lattice, omega: CenteredIndex) -> Result<usize> {
    lattice.slot_of(omega).ok_or_else(|| {
        Error::InvalidGrid(format!("{omega} is neither the origin nor a point of the rotation sector"))
    })
}

fn check_stacks(lattice: &Lattice, stacks: &[SpectralStack]) -> Result<()> {
    for s in stacks {
        if s.grid() != lattice.grid() {
            return Err(Error::GridMismatch {
                expected: lattice.grid().to_string(),
                found: s.grid().to_string(),
            });
        }
    }
    Ok(())
}

fn data_matrix(stacks: &[SpectralStack], slot: usize) -> CMatrix {
    let n = stacks[0].fiber_len();
    let mut x = CMatrix::zeros(n, 4 * stacks.len());
    for (i, st) in stacks.iter().enumerate() {
        for g in 0..4 {
            x.column_mut(4 * i + g).copy_from_slice(st.fiber(slot, g));
        }
    }
    x
}

/// Direct-mode reduced dataset `X_ω` of a list of images.
pub fn reduced_dataset(transform: &GroupTransform, images: &[Image], omega: CenteredIndex) -> Result<ReducedProblem> {
    let grid = first_grid(images)?;
    if grid != *transform.grid() {
        return Err(Error::GridMismatch {
            expected: transform.grid().to_string(),
            found: grid.to_string(),
        });
    }
    let stacks = images
        .iter()
        .map(|f| transform.analyze(f))
        .collect::<Result<Vec<_>>>()?;
    ReducedProblem::from_stacks(transform.lattice(), &stacks, omega)
}

fn first_grid(images: &[Image]) -> Result<GridParams> {
    let first = images.first().ok_or(Error::EmptyDataset)?;
    let grid = *first.grid();
    for f in images {
        if *f.grid() != grid {
            return Err(Error::GridMismatch {
                expected: grid.to_string(),
                found: f.grid().to_string(),
            });
        }
    }
    Ok(grid)
}

/// Leading left singular vectors of one reduced problem.
#[derive(Clone, Debug)]
pub struct ReducedBasis {
    pub omega: CenteredIndex,
    /// `q² x 4κ`, orthonormal columns.
    pub columns: CMatrix,
    /// Singular value of each column (sorted per rotation eigenspace at the origin).
    pub singular_values: Vec<f64>,
    /// `‖X_ω‖_F²`.
    pub total_energy: f64,
}

impl ReducedBasis {
    pub fn retained_energy(&self) -> f64 {
        self.singular_values.iter().map(|s| s * s).sum()
    }

    /// `Σ_{s > 4κ} σ_s²`, the residual of the reduced problem.
    pub fn discarded_energy(&self) -> f64 {
        (self.total_energy - self.retained_energy()).max(0.0)
    }
}

struct Ranked {
    vectors: Vec<CVector>,
    energies: Vec<f64>,
}

/// Canonical leading vectors from an unordered eigen/singular system.
///
/// `pairs` holds (σ², vector). Rank-deficient directions are filled from the
/// canonical complement; degenerate blocks get a basis-independent basis.
fn canonical_leading(mut pairs: Vec<(f64, CVector)>, dim: usize, needed: usize, null_rtol: f64) -> Ranked {
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let top = pairs.first().map(|p| p.0).unwrap_or(0.0);
    let significant: Vec<(f64, CVector)> = if top > 0.0 {
        pairs.into_iter().filter(|p| p.0 > null_rtol * top).collect()
    } else {
        Vec::new()
    };

    let mut vectors: Vec<CVector> = Vec::with_capacity(needed);
    let mut energies = Vec::with_capacity(needed);
    let mut start = 0;
    while start < significant.len() && vectors.len() < needed {
        let mut end = start + 1;
        while end < significant.len() && significant[end - 1].0 - significant[end].0 <= DEGENERACY_RTOL * top {
            end += 1;
        }
        if end - start == 1 {
            let mut v = significant[start].1.clone();
            phase_normalize(&mut v);
            vectors.push(v);
        } else {
            let block: Vec<CVector> = significant[start..end].iter().map(|p| p.1.clone()).collect();
            vectors.extend(canonical_span_basis(&block, dim));
        }
        energies.extend(significant[start..end].iter().map(|p| p.0));
        start = end;
    }
    if vectors.len() < needed {
        let existing: Vec<CVector> = significant.iter().map(|p| p.1.clone()).collect();
        let fill = canonical_complement(&existing, dim, needed - vectors.len());
        energies.extend(std::iter::repeat(0.0).take(fill.len()));
        vectors.extend(fill);
    }
    vectors.truncate(needed);
    energies.truncate(needed);
    Ranked { vectors, energies }
}

fn leading_from_data(x: &CMatrix, needed: usize) -> Result<Ranked> {
    let dim = x.nrows();
    if x.ncols() == 0 {
        return Ok(canonical_leading(Vec::new(), dim, needed, SVD_NULL_RTOL));
    }
    let (sv, u) = svd_left(x)?;
    let pairs = sv
        .iter()
        .enumerate()
        .map(|(i, s)| (s * s, u.column(i).into_owned()))
        .collect();
    Ok(canonical_leading(pairs, dim, needed, SVD_NULL_RTOL * SVD_NULL_RTOL))
}

fn leading_from_gram(g: &CMatrix, needed: usize) -> Result<Ranked> {
    let dim = g.nrows();
    let (values, vectors) = hermitian_eigen(g)?;
    let pairs = values
        .iter()
        .enumerate()
        .map(|(i, &l)| (l.max(0.0), vectors.column(i).into_owned()))
        .collect();
    Ok(canonical_leading(pairs, dim, needed, GRAM_NULL_RTOL))
}

/// Orthonormal bases of the four eigenspaces of `ℓ ↦ r(ℓ)` acting on `ℓ₂(L)`.
///
/// Entry `c` spans the vectors `v` with `v[r(ℓ)] = i^c v[ℓ]`. Each orbit
/// `{r^g ℓ₀}` with `ℓ₀ = p(m1, m2)`, `m1 ≥ 1`, `m2 ≥ 0`, contributes
/// `½ Σ_g i^{cg} e_{r^g ℓ₀}`; the origin belongs to `c = 0` only.
pub fn rotation_eigenbases(lattice: &Lattice) -> [CMatrix; 4] {
    let ell = lattice.annihilator();
    let n = ell.len();
    let p = lattice.grid().p() as i64;
    let reps: Vec<usize> = ell
        .iter()
        .enumerate()
        .filter(|(_, l)| l.n1 / p >= 1 && l.n2 / p >= 0)
        .map(|(i, _)| i)
        .collect();
    let origin = ell.iter().position(|l| l.is_zero()).expect("0 ∈ L");
    let unit = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
    [0usize, 1, 2, 3].map(|c| {
        let mut cols = Vec::new();
        if c == 0 {
            let mut e = CVector::zeros(n);
            e[origin] = C64::new(1.0, 0.0);
            cols.push(e);
        }
        for &r in &reps {
            let mut v = CVector::zeros(n);
            for g in 0..4 {
                v[lattice.rotated_ell(r, g as i64)] = unit[(c * g) % 4] * 0.5;
            }
            cols.push(v);
        }
        crate::linalg::columns_to_matrix(&cols, n)
    })
}

/// Solves the reduced problem for `κ` generators: the `4κ` columns that
/// minimize the fiber residual. See the module docs for the origin.
pub fn solve_reduced(problem: &ReducedProblem, lattice: &Lattice, kappa: usize) -> Result<ReducedBasis> {
    let dim = lattice.grid().q() * lattice.grid().q();
    if kappa == 0 || 4 * kappa > dim {
        return Err(Error::KappaBound {
            kappa,
            bound: lattice.grid().max_kappa(),
        });
    }
    let matrix = match &problem.data {
        ReducedData::Direct(x) | ReducedData::Gram(x) => x,
    };
    if matrix.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonFinite("reduced data"));
    }
    let total_energy = problem.energy();

    if problem.slot != 0 {
        let ranked = match &problem.data {
            ReducedData::Direct(x) => leading_from_data(x, 4 * kappa)?,
            ReducedData::Gram(g) => leading_from_gram(g, 4 * kappa)?,
        };
        return Ok(ReducedBasis {
            omega: problem.omega,
            columns: crate::linalg::columns_to_matrix(&ranked.vectors, dim),
            singular_values: ranked.energies.iter().map(|e| e.sqrt()).collect(),
            total_energy,
        });
    }

    let bases = rotation_eigenbases(lattice);
    let mut per_char = Vec::with_capacity(4);
    for b in &bases {
        let ranked = match &problem.data {
            ReducedData::Direct(x) => leading_from_data(&(b.adjoint() * x), kappa)?,
            ReducedData::Gram(g) => leading_from_gram(&(b.adjoint() * g * b), kappa)?,
        };
        if ranked.vectors.len() < kappa {
            return Err(Error::KappaBound {
                kappa,
                bound: lattice.grid().max_kappa(),
            });
        }
        per_char.push(ranked);
    }
    let mut columns = CMatrix::zeros(dim, 4 * kappa);
    let mut singular_values = vec![0.0; 4 * kappa];
    for j in 0..kappa {
        for (g, ranked) in per_char.iter().enumerate() {
            let lifted = &bases[g] * &ranked.vectors[j];
            columns.set_column(4 * j + g, &lifted);
            singular_values[4 * j + g] = ranked.energies[j].sqrt();
        }
    }
    Ok(ReducedBasis {
        omega: problem.omega,
        columns,
        singular_values,
        total_energy,
    })
}

/// `φ_j(ω)^g = U^{4(j-1)+g+1}`: returns `[j][g]` component vectors.
pub fn assign_generator_components(basis: &ReducedBasis, kappa: usize) -> Result<Vec<[CVector; 4]>> {
    if basis.columns.ncols() < 4 * kappa {
        return Err(Error::Numerical(format!(
            "basis at {} has {} columns, {} generators need {}",
            basis.omega,
            basis.columns.ncols(),
            kappa,
            4 * kappa
        )));
    }
    Ok((0..kappa)
        .map(|j| [0, 1, 2, 3].map(|g| basis.columns.column(4 * j + g).into_owned()))
        .collect())
}

/// Per-frequency energy bookkeeping of a fit.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaStats {
    pub omega: CenteredIndex,
    pub retained: f64,
    pub discarded: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitStats {
    pub m: usize,
    pub mode: FitMode,
    /// `Σᵢ ‖fᵢ‖²` of the (mean-removed) dataset.
    pub total_energy: f64,
    pub per_omega: Vec<OmegaStats>,
    /// `Σᵢ ‖fᵢ - P fᵢ‖²` recomputed in the image domain.
    pub image_residual: f64,
}

impl FitStats {
    pub fn retained_energy(&self) -> f64 {
        self.per_omega.iter().map(|s| s.retained).sum()
    }

    pub fn discarded_energy(&self) -> f64 {
        self.per_omega.iter().map(|s| s.discarded).sum()
    }
}

/// A fitted generator family.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    pub grid: GridParams,
    pub kappa: usize,
    pub generators: Vec<Image>,
    /// Dataset mean (row-major, centered order) removed before fitting.
    pub mean_image: Vec<f64>,
    pub fit_stats: FitStats,
}

impl GeneratorModel {
    pub fn with_mean(mut self, mean: Vec<f64>) -> Self {
        self.mean_image = mean;
        self
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub mode: FitMode,
    /// Images analyzed per accumulation step in incremental mode.
    pub batch_size: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            mode: FitMode::Direct,
            batch_size: 64,
        }
    }
}

/// Checks the fit preconditions shared by the library and the CLI.
pub fn check_fit_params(grid: &GridParams, kappa: usize) -> Result<()> {
    if grid.p() == 1 {
        return Err(Error::EmptySector);
    }
    if kappa == 0 || kappa > grid.max_kappa() {
        return Err(Error::KappaBound {
            kappa,
            bound: grid.max_kappa(),
        });
    }
    Ok(())
}

/// Computes the optimal family of `κ` generators for the dataset.
pub fn fit(images: &[Image], kappa: usize, options: &FitOptions) -> Result<GeneratorModel> {
    let grid = first_grid(images)?;
    check_fit_params(&grid, kappa)?;
    let m = images.len();
    if kappa > m {
        warn!("kappa = {kappa} exceeds the dataset size m = {m}; surplus directions carry no energy");
    }
    let transform = GroupTransform::new(grid)?;
    let lattice = transform.lattice();
    let slots = lattice.omega_slots();
    let omegas: Vec<CenteredIndex> = (0..slots).map(|s| lattice.omega_at(s)).collect();

    let problems: Vec<ReducedProblem> = match options.mode {
        FitMode::Direct => {
            let stacks = images
                .par_iter()
                .map(|f| transform.analyze(f))
                .collect::<Result<Vec<_>>>()?;
            omegas
                .par_iter()
                .map(|&w| ReducedProblem::from_stacks(lattice, &stacks, w))
                .collect::<Result<Vec<_>>>()?
        }
        FitMode::Incremental => {
            let mut problems = omegas
                .iter()
                .map(|&w| ReducedProblem::incremental(lattice, w))
                .collect::<Result<Vec<_>>>()?;
            for batch in images.chunks(options.batch_size.max(1)) {
                let stacks = batch
                    .par_iter()
                    .map(|f| transform.analyze(f))
                    .collect::<Result<Vec<_>>>()?;
                problems
                    .par_iter_mut()
                    .try_for_each(|pr| pr.accumulate_stacks(lattice, &stacks))?;
            }
            problems
        }
    };

    let bases = problems
        .par_iter()
        .map(|pr| solve_reduced(pr, lattice, kappa))
        .collect::<Result<Vec<_>>>()?;
    drop(problems);

    let mut per_omega = Vec::with_capacity(slots);
    for (slot, b) in bases.iter().enumerate() {
        let tail = b.singular_values.last().copied().unwrap_or(0.0);
        info!(
            "subproblem {}/{} omega={} retained={:.6e} discarded={:.6e} last_sigma={:.6e}",
            slot + 1,
            slots,
            b.omega,
            b.retained_energy(),
            b.discarded_energy(),
            tail
        );
        per_omega.push(OmegaStats {
            omega: b.omega,
            retained: b.retained_energy(),
            discarded: b.discarded_energy(),
        });
    }

    // Orthonormal fibers give a p²-tight frame; 1/p makes it Parseval.
    let scale = C64::new(1.0 / grid.p() as f64, 0.0);
    let components = bases
        .iter()
        .map(|b| assign_generator_components(b, kappa))
        .collect::<Result<Vec<_>>>()?;
    let generators = (0..kappa)
        .into_par_iter()
        .map(|j| {
            let mut stack = SpectralStack::zeros(lattice);
            for (slot, comp) in components.iter().enumerate() {
                for (g, v) in comp[j].iter().enumerate() {
                    for (dst, src) in stack.fiber_mut(slot, g).iter_mut().zip(v.iter()) {
                        *dst = src * scale;
                    }
                }
            }
            transform.synthesize(&stack)
        })
        .collect::<Result<Vec<_>>>()?;
    if generators
        .iter()
        .any(|g| g.values().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()))
    {
        return Err(Error::NonFinite("generators"));
    }

    let total_energy: f64 = images.iter().map(|f| f.norm_sqr()).sum();
    let mut model = GeneratorModel {
        grid,
        kappa,
        generators,
        mean_image: vec![0.0; grid.len()],
        fit_stats: FitStats {
            m,
            mode: options.mode,
            total_energy,
            per_omega,
            image_residual: 0.0,
        },
    };
    let projector = Projector::with_transform(transform, &model.generators)?;
    let image_residual: f64 = images
        .par_iter()
        .map(|f| projector.residual_sqr(f))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    model.fit_stats.image_residual = image_residual;
    info!(
        "fit: kappa={kappa} m={m} mode={} subproblems={slots} energy={:.6e} retained={:.6e} residual={:.6e} dimension ratio 4k/q^2={}/{}",
        options.mode,
        total_energy,
        model.fit_stats.retained_energy(),
        image_residual,
        4 * kappa,
        grid.q() * grid.q()
    );
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::principal_angles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> GridParams {
        GridParams::new(3, 5).unwrap()
    }

    fn random_images(m: usize, seed: u64) -> Vec<Image> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| Image::from_fn(grid(), |_| C64::new(rng.gen_range(-1.0..1.0), 0.0)))
            .collect()
    }

    fn delta() -> Image {
        Image::from_fn(grid(), |n| C64::new(if n.is_zero() { 1.0 } else { 0.0 }, 0.0))
    }

    #[test]
    fn reduced_dataset_shapes_and_energy() {
        let t = GroupTransform::new(grid()).unwrap();
        let pr = reduced_dataset(&t, &[delta()], CenteredIndex::new(1, 0)).unwrap();
        let x = pr.data_matrix().unwrap();
        assert_eq!(x.shape(), (25, 4));
        assert!(x.iter().all(|v| (v - C64::new(1.0 / 15.0, 0.0)).norm() < 1e-14));

        let imgs = random_images(20, 1);
        let total: f64 = imgs.iter().map(|f| f.norm_sqr()).sum();
        let mut sum = 0.0;
        for slot in 0..t.lattice().omega_slots() {
            let pr = reduced_dataset(&t, &imgs, t.lattice().omega_at(slot)).unwrap();
            assert_eq!(pr.data_matrix().unwrap().ncols(), 80);
            sum += pr.energy();
        }
        assert!((sum - total).abs() < 1e-10 * total);
        assert!(matches!(reduced_dataset(&t, &[], CenteredIndex::ZERO), Err(Error::EmptyDataset)));
        let other = Image::zeros(GridParams::new(3, 3).unwrap());
        assert!(reduced_dataset(&t, &[delta(), other], CenteredIndex::ZERO).is_err());
    }

    #[test]
    fn gram_accumulation_is_additive() {
        let t = GroupTransform::new(grid()).unwrap();
        let imgs = random_images(10, 2);
        let w = CenteredIndex::new(1, 1);
        let mut one = ReducedProblem::incremental(t.lattice(), w).unwrap();
        one.accumulate_gram(&t, &imgs).unwrap();
        let mut two = ReducedProblem::incremental(t.lattice(), w).unwrap();
        two.accumulate_gram(&t, &imgs[..5]).unwrap();
        two.accumulate_gram(&t, &imgs[5..]).unwrap();
        let before = two.gram_matrix().unwrap().clone();
        two.accumulate_gram(&t, &[]).unwrap();
        assert_eq!(&before, two.gram_matrix().unwrap());
        let diff = (one.gram_matrix().unwrap() - two.gram_matrix().unwrap()).camax();
        assert!(diff < 1e-12);
        let mut direct = reduced_dataset(&t, &imgs, w).unwrap();
        assert!(matches!(
            direct.accumulate_gram(&t, &imgs),
            Err(Error::ModeMismatch(_))
        ));
    }

    #[test]
    fn gram_and_svd_agree() {
        let t = GroupTransform::new(grid()).unwrap();
        let imgs = random_images(12, 3);
        for slot in 0..t.lattice().omega_slots() {
            let w = t.lattice().omega_at(slot);
            let direct = reduced_dataset(&t, &imgs, w).unwrap();
            let mut inc = ReducedProblem::incremental(t.lattice(), w).unwrap();
            inc.accumulate_gram(&t, &imgs).unwrap();
            let a = solve_reduced(&direct, t.lattice(), 2).unwrap();
            let b = solve_reduced(&inc, t.lattice(), 2).unwrap();
            for (x, y) in a.singular_values.iter().zip(&b.singular_values) {
                assert!((x - y).abs() < 1e-8 * a.singular_values[0]);
            }
            let ang = principal_angles(&a.columns, &b.columns);
            assert!(ang[0] < 1e-7, "slot {slot}: {}", ang[0]);
        }
    }

    #[test]
    fn rank_one_data() {
        let t = GroupTransform::new(grid()).unwrap();
        let pr = reduced_dataset(&t, &[delta()], CenteredIndex::new(1, 0)).unwrap();
        let b = solve_reduced(&pr, t.lattice(), 1).unwrap();
        assert!(b.singular_values[1..].iter().all(|&s| s == 0.0));
        let c0 = b.columns.column(0);
        let want = 1.0 / 5.0;
        assert!(c0.iter().all(|v| (v - C64::new(want, 0.0)).norm() < 1e-12));
        // orthonormal completion
        let gram = b.columns.adjoint() * &b.columns;
        assert!((gram - CMatrix::identity(4, 4)).camax() < 1e-12);
        assert!(b.discarded_energy() < 1e-14 * b.total_energy);
    }

    #[test]
    fn eckart_young_on_random_matrix() {
        let lat = Lattice::new(grid());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = CMatrix::from_fn(25, 80, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let pr = ReducedProblem {
            omega: CenteredIndex::new(1, 0),
            slot: 1,
            m: 20,
            data: ReducedData::Direct(x.clone()),
        };
        let mut s = crate::linalg::singular_values(&x).unwrap();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for kappa in 1..=6 {
            let b = solve_reduced(&pr, &lat, kappa).unwrap();
            let u = &b.columns;
            let resid = (&x - u * (u.adjoint() * &x)).norm_squared();
            let tail: f64 = s[4 * kappa..].iter().map(|v| v * v).sum();
            assert!((resid - tail).abs() < 1e-8 * tail);
            assert!((b.discarded_energy() - tail).abs() < 1e-8 * tail);
            // never beaten by random subspaces of the same dimension
            for _ in 0..50 {
                let w = CMatrix::from_fn(25, 4 * kappa, |_, _| {
                    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                });
                let q = w.qr().q();
                let r = (&x - &q * (q.adjoint() * &x)).norm_squared();
                assert!(r > resid);
            }
        }
        assert!(matches!(solve_reduced(&pr, &lat, 7), Err(Error::KappaBound { .. })));
        assert!(matches!(solve_reduced(&pr, &lat, 0), Err(Error::KappaBound { .. })));
    }

    #[test]
    fn generator_component_indexing() {
        let lat = Lattice::new(grid());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = CMatrix::from_fn(25, 40, |_, _| C64::new(rng.gen_range(-1.0..1.0), 0.0));
        let pr = ReducedProblem {
            omega: CenteredIndex::new(1, 1),
            slot: 2,
            m: 10,
            data: ReducedData::Direct(x),
        };
        let b = solve_reduced(&pr, &lat, 2).unwrap();
        let comps = assign_generator_components(&b, 2).unwrap();
        assert_eq!(comps.len(), 2);
        for j in 0..2 {
            for g in 0..4 {
                assert_eq!(comps[j][g], b.columns.column(4 * j + g).into_owned());
            }
        }
        assert!(assign_generator_components(&b, 3).is_err());
    }

    #[test]
    fn origin_columns_are_rotation_eigenvectors() {
        let t = GroupTransform::new(grid()).unwrap();
        let lat = t.lattice();
        let imgs = random_images(8, 9);
        let pr = reduced_dataset(&t, &imgs, CenteredIndex::ZERO).unwrap();
        let b = solve_reduced(&pr, lat, 3).unwrap();
        let unit = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];
        for col in 0..12 {
            let u = b.columns.column(col);
            for i in 0..25 {
                let rotated = u[lat.rotated_ell(i, 1)];
                assert!((rotated - unit[col % 4] * u[i]).norm() < 1e-12);
            }
        }
        let gram = b.columns.adjoint() * &b.columns;
        assert!((gram - CMatrix::identity(12, 12)).camax() < 1e-12);
        let bases = rotation_eigenbases(lat);
        assert_eq!(bases.iter().map(|m| m.ncols()).sum::<usize>(), 25);
    }

    #[test]
    fn fit_parameter_gates() {
        let imgs = random_images(3, 4);
        assert!(matches!(fit(&imgs, 7, &FitOptions::default()), Err(Error::KappaBound { .. })));
        assert!(matches!(fit(&imgs, 0, &FitOptions::default()), Err(Error::KappaBound { .. })));
        assert!(matches!(fit(&[], 1, &FitOptions::default()), Err(Error::EmptyDataset)));
        let g1 = GridParams::new(1, 5).unwrap();
        assert!(matches!(
            fit(&[Image::zeros(g1)], 1, &FitOptions::default()),
            Err(Error::EmptySector)
        ));
    }

    #[test]
    fn single_delta_is_reproduced() {
        let f = delta();
        let model = fit(&[f.clone()], 1, &FitOptions::default()).unwrap();
        let proj = Projector::new(&model).unwrap();
        let pf = proj.project(&f).unwrap();
        assert!(pf.relative_error(&f) <= 1e-8);
        assert!(model.fit_stats.image_residual < 1e-16);
    }

    #[test]
    fn residual_accounting_and_monotonicity() {
        let imgs = random_images(20, 6);
        let mut prev = f64::INFINITY;
        for kappa in 1..=6 {
            let model = fit(&imgs, kappa, &FitOptions::default()).unwrap();
            let st = &model.fit_stats;
            assert!((st.retained_energy() + st.discarded_energy() - st.total_energy).abs() < 1e-8 * st.total_energy);
            assert!((st.discarded_energy() - st.image_residual).abs() <= 1e-6 * st.image_residual);
            assert!(st.image_residual <= prev + 1e-9);
            prev = st.image_residual;
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let imgs = random_images(6, 8);
        let a = fit(&imgs, 2, &FitOptions::default()).unwrap();
        let b = fit(&imgs, 2, &FitOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
