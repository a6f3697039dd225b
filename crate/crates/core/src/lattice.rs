//! Finite-group combinatorics on the centered `d x d` grid.
//!
//! Everything here works in centered coordinates `n = (n1, n2)` with
//! `n_i` in `[-(d-1)/2, (d-1)/2]`. With `d = p q` (both odd) the grid carries
//! three canonical point sets:
//!
//! * the translation lattice `Λ = q·{-(p-1)/2..(p-1)/2}²` (p² points),
//! * its annihilator `L = p·{-(q-1)/2..(q-1)/2}²` (q² points),
//! * the rotation sector `Ω₀ = {1..(p-1)/2} x {0..(p-1)/2}`, whose four
//!   quarter-turn rotates together with the origin tile the fundamental
//!   block `Ω = {-(p-1)/2..(p-1)/2}²` of the quotient by `L`.
//!
//! All orderings are row-major over the defining integer parameters and fix
//! matrix layouts downstream.

use std::fmt;

use crate::error::{Error, Result};

/// Odd factorization `d = p q` of the image side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridParams {
    p: usize,
    q: usize,
    d: usize,
}

impl GridParams {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        if p == 0 || q == 0 {
            return Err(Error::InvalidGrid(format!(
                "p and q must be positive (p={p}, q={q})"
            )));
        }
        if p % 2 == 0 || q % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "p and q must be odd (p={p}, q={q}, d={})",
                p * q
            )));
        }
        Ok(GridParams { p, q, d: p * q })
    }

    /// Builds the grid for side `d` with lattice size `p`; `q` is `d / p`.
    pub fn from_side(d: usize, p: usize) -> Result<Self> {
        if d % 2 == 0 {
            return Err(Error::InvalidGrid(format!("d = {d} is even")));
        }
        if p == 0 || d % p != 0 {
            return Err(Error::InvalidGrid(format!("p = {p} does not divide d = {d}")));
        }
        GridParams::new(p, d / p)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `(d - 1) / 2`, the largest centered coordinate.
    pub fn half(&self) -> i64 {
        (self.d as i64 - 1) / 2
    }

    /// Number of pixels, `d²`.
    pub fn len(&self) -> usize {
        self.d * self.d
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest admissible number of generators, `⌊q²/4⌋`.
    pub fn max_kappa(&self) -> usize {
        self.q * self.q / 4
    }

    pub fn contains(&self, n: CenteredIndex) -> bool {
        let h = self.half();
        (-h..=h).contains(&n.n1) && (-h..=h).contains(&n.n2)
    }

    pub fn check(&self, n: CenteredIndex) -> Result<CenteredIndex> {
        if self.contains(n) {
            Ok(n)
        } else {
            Err(Error::IndexOutOfRange { index: n, d: self.d })
        }
    }

    /// Row-major storage position of a centered index (`n1` selects the row).
    #[inline]
    pub fn position(&self, n: CenteredIndex) -> usize {
        let h = self.half();
        (n.n1 + h) as usize * self.d + (n.n2 + h) as usize
    }

    /// Inverse of [`GridParams::position`].
    #[inline]
    pub fn index_at(&self, pos: usize) -> CenteredIndex {
        let h = self.half();
        CenteredIndex::new((pos / self.d) as i64 - h, (pos % self.d) as i64 - h)
    }

    /// All centered indices in storage order.
    pub fn indices(&self) -> impl Iterator<Item = CenteredIndex> + '_ {
        (0..self.len()).map(move |pos| self.index_at(pos))
    }

    #[inline]
    pub(crate) fn wrap(&self, x: i64) -> i64 {
        let h = self.half();
        (x + h).rem_euclid(self.d as i64) - h
    }
}

impl fmt::Display for GridParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d={} (p={}, q={})", self.d, self.p, self.q)
    }
}

/// A pixel or frequency coordinate in centered form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CenteredIndex {
    pub n1: i64,
    pub n2: i64,
}

impl CenteredIndex {
    pub const ZERO: CenteredIndex = CenteredIndex { n1: 0, n2: 0 };

    pub const fn new(n1: i64, n2: i64) -> Self {
        CenteredIndex { n1, n2 }
    }

    pub fn dot(&self, other: &CenteredIndex) -> i64 {
        self.n1 * other.n1 + self.n2 * other.n2
    }

    pub fn is_zero(&self) -> bool {
        self.n1 == 0 && self.n2 == 0
    }
}

impl fmt::Display for CenteredIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n1, self.n2)
    }
}

/// Periodic sum on the centered grid.
pub fn centered_add(a: CenteredIndex, b: CenteredIndex, grid: &GridParams) -> Result<CenteredIndex> {
    grid.check(a)?;
    grid.check(b)?;
    Ok(add_unchecked(a, b, grid))
}

/// Periodic difference `a - b`.
pub fn centered_sub(a: CenteredIndex, b: CenteredIndex, grid: &GridParams) -> Result<CenteredIndex> {
    grid.check(a)?;
    grid.check(b)?;
    Ok(add_unchecked(a, CenteredIndex::new(-b.n1, -b.n2), grid))
}

#[inline]
pub(crate) fn add_unchecked(a: CenteredIndex, b: CenteredIndex, grid: &GridParams) -> CenteredIndex {
    CenteredIndex::new(grid.wrap(a.n1 + b.n1), grid.wrap(a.n2 + b.n2))
}

/// Applies the `g`-th power of the quarter turn `r(n1, n2) = (-n2, n1)`.
///
/// The centered range is symmetric, so no reduction is needed.
#[inline]
pub fn rotate_index(n: CenteredIndex, g: i64) -> CenteredIndex {
    match g.rem_euclid(4) {
        0 => n,
        1 => CenteredIndex::new(-n.n2, n.n1),
        2 => CenteredIndex::new(-n.n1, -n.n2),
        _ => CenteredIndex::new(n.n2, -n.n1),
    }
}

/// The translation lattice Λ, row-major in `(t1, t2)`.
pub fn lattice_points(grid: &GridParams) -> Vec<CenteredIndex> {
    scaled_block(grid.p, grid.q)
}

/// The annihilator L of Λ, row-major in `(m1, m2)`.
pub fn annihilator_points(grid: &GridParams) -> Vec<CenteredIndex> {
    scaled_block(grid.q, grid.p)
}

/// The rotation sector Ω₀, row-major in `(ω1, ω2)`. Empty when `p = 1`.
pub fn omega0_points(grid: &GridParams) -> Result<Vec<CenteredIndex>> {
    if grid.p == 1 {
        return Err(Error::EmptySector);
    }
    let hp = (grid.p as i64 - 1) / 2;
    Ok((1..=hp)
        .flat_map(|w1| (0..=hp).map(move |w2| CenteredIndex::new(w1, w2)))
        .collect())
}

fn scaled_block(count: usize, step: usize) -> Vec<CenteredIndex> {
    let h = (count as i64 - 1) / 2;
    let s = step as i64;
    (-h..=h)
        .flat_map(|t1| (-h..=h).map(move |t2| CenteredIndex::new(t1 * s, t2 * s)))
        .collect()
}

/// A rigid motion `T(λ) R^g` of the group `Λ ⋊ {r^g}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GroupElement {
    lambda: CenteredIndex,
    g: u8,
}

impl GroupElement {
    pub fn new(lambda: CenteredIndex, g: i64, grid: &GridParams) -> Result<Self> {
        if !in_lattice(lambda, grid) {
            return Err(Error::NotInLattice(lambda));
        }
        Ok(GroupElement {
            lambda,
            g: g.rem_euclid(4) as u8,
        })
    }

    pub fn lambda(&self) -> CenteredIndex {
        self.lambda
    }

    pub fn g(&self) -> i64 {
        self.g as i64
    }

    /// `(λ, g)·(λ', g') = (λ + r^{-g} λ', g + g')`.
    pub fn compose(&self, other: &GroupElement, grid: &GridParams) -> GroupElement {
        let moved = rotate_index(other.lambda, -(self.g as i64));
        GroupElement {
            lambda: add_unchecked(self.lambda, moved, grid),
            g: (self.g + other.g) % 4,
        }
    }
}

/// Whether `n` lies on the translation lattice Λ of `grid`.
pub fn in_lattice(n: CenteredIndex, grid: &GridParams) -> bool {
    let q = grid.q as i64;
    grid.contains(n) && n.n1 % q == 0 && n.n2 % q == 0
}

/// Whether `n` lies on the annihilator L of `grid`.
pub fn in_annihilator(n: CenteredIndex, grid: &GridParams) -> bool {
    let p = grid.p as i64;
    grid.contains(n) && n.n1 % p == 0 && n.n2 % p == 0
}

/// Unique splitting `k = r^g(ω₀) + ℓ` with `ω₀ ∈ Ω₀ ∪ {0}`, `ℓ ∈ L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrequencyDecomposition {
    pub omega0: CenteredIndex,
    pub g: u8,
    pub ell: CenteredIndex,
}

/// Slot-indexed form of a decomposition: `omega_slot` 0 is the zero
/// frequency, `s >= 1` is `Ω₀[s - 1]`; `ell` is the position in canonical L order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct SlotDecomposition {
    pub omega_slot: u32,
    pub g: u8,
    pub ell: u32,
}

/// Precomputed point sets and lookup tables for one grid. Immutable after
/// construction.
#[derive(Clone, Debug)]
pub struct Lattice {
    grid: GridParams,
    lambda: Vec<CenteredIndex>,
    ell: Vec<CenteredIndex>,
    omega0: Vec<CenteredIndex>,
    // Per spectrum position.
    decomposition: Vec<SlotDecomposition>,
    // ell_rotated[g][i] = index in L of r^g(L[i]).
    ell_rotated: [Vec<u32>; 4],
}

impl Lattice {
    pub fn new(grid: GridParams) -> Self {
        let lambda = lattice_points(&grid);
        let ell = annihilator_points(&grid);
        let omega0 = omega0_points(&grid).unwrap_or_default();
        let q = grid.q;
        let hq = (q as i64 - 1) / 2;
        let p = grid.p as i64;
        let ell_index = |l: CenteredIndex| -> u32 {
            ((l.n1 / p + hq) as usize * q + (l.n2 / p + hq) as usize) as u32
        };

        let ell_rotated = [0i64, 1, 2, 3].map(|g| {
            ell.iter()
                .map(|&l| ell_index(rotate_index(l, g)))
                .collect::<Vec<_>>()
        });

        let mut decomposition = vec![
            SlotDecomposition {
                omega_slot: u32::MAX,
                g: 0,
                ell: 0,
            };
            grid.len()
        ];
        let mut sectors: Vec<(CenteredIndex, u32, u8)> = vec![(CenteredIndex::ZERO, 0, 0)];
        for (s, &w) in omega0.iter().enumerate() {
            for g in 0..4u8 {
                sectors.push((rotate_index(w, g as i64), s as u32 + 1, g));
            }
        }
        for &(w, slot, g) in &sectors {
            for &l in &ell {
                let k = add_unchecked(w, l, &grid);
                decomposition[grid.position(k)] = SlotDecomposition {
                    omega_slot: slot,
                    g,
                    ell: ell_index(l),
                };
            }
        }
        debug_assert!(decomposition.iter().all(|s| s.omega_slot != u32::MAX));

        Lattice {
            grid,
            lambda,
            ell,
            omega0,
            decomposition,
            ell_rotated,
        }
    }

    pub fn grid(&self) -> &GridParams {
        &self.grid
    }

    /// Λ in canonical order.
    pub fn lattice(&self) -> &[CenteredIndex] {
        &self.lambda
    }

    /// L in canonical order.
    pub fn annihilator(&self) -> &[CenteredIndex] {
        &self.ell
    }

    /// Ω₀ in canonical order (empty for `p = 1`).
    pub fn omega0(&self) -> &[CenteredIndex] {
        &self.omega0
    }

    /// Number of reduced problems, `|Ω₀| + 1`.
    pub fn omega_slots(&self) -> usize {
        self.omega0.len() + 1
    }

    /// Frequency of a slot: slot 0 is the origin, slot `s` is `Ω₀[s-1]`.
    pub fn omega_at(&self, slot: usize) -> CenteredIndex {
        if slot == 0 {
            CenteredIndex::ZERO
        } else {
            self.omega0[slot - 1]
        }
    }

    pub fn slot_of(&self, omega: CenteredIndex) -> Option<usize> {
        if omega.is_zero() {
            Some(0)
        } else {
            self.omega0.iter().position(|&w| w == omega).map(|s| s + 1)
        }
    }

    /// Index in L of `r^g(L[i])`.
    #[inline]
    pub fn rotated_ell(&self, i: usize, g: i64) -> usize {
        self.ell_rotated[g.rem_euclid(4) as usize][i] as usize
    }

    pub fn decompose_frequency(&self, k: CenteredIndex) -> Result<FrequencyDecomposition> {
        self.grid.check(k)?;
        let s = self.decomposition[self.grid.position(k)];
        Ok(FrequencyDecomposition {
            omega0: self.omega_at(s.omega_slot as usize),
            g: s.g,
            ell: self.ell[s.ell as usize],
        })
    }

    #[inline]
    pub(crate) fn slot_decomposition(&self, pos: usize) -> SlotDecomposition {
        self.decomposition[pos]
    }
}

/// Table-free decomposition, see [`Lattice::decompose_frequency`].
pub fn decompose_frequency(k: CenteredIndex, grid: &GridParams) -> Result<FrequencyDecomposition> {
    Lattice::new(*grid).decompose_frequency(k)
}
