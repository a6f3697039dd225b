//! Small dense helpers on complex vectors: Gram-Schmidt variants, the
//! canonical phase rule, and principal angles.

use faer::{c64, Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::transform::C64;

pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

// Relative slack when picking "the largest" entry or residual, so that
// near-ties resolve to the first index instead of to roundoff.
const TIE_RTOL: f64 = 1e-9;

fn project_out(v: &mut CVector, q: &CVector) {
    let c = q.dotc(v);
    v.axpy(-c, q, C64::new(1.0, 0.0));
}

/// Orthonormal basis of `span(vectors)` by two-pass modified Gram-Schmidt,
/// in input order. A vector is dropped when what remains of it after
/// orthogonalization is at most `rtol` times the largest input norm.
pub fn orthonormalize(vectors: &[CVector], rtol: f64) -> Vec<CVector> {
    let scale = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut basis: Vec<CVector> = Vec::new();
    if scale == 0.0 {
        return basis;
    }
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for q in &basis {
                project_out(&mut w, q);
            }
        }
        let n = w.norm();
        if n > rtol * scale {
            basis.push(w / C64::new(n, 0.0));
        }
    }
    basis
}

/// Rotates `v` by a unit phase so that its largest-modulus entry (first one
/// on ties) is real and positive.
pub fn phase_normalize(v: &mut CVector) {
    let max = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return;
    }
    let i = v
        .iter()
        .position(|x| x.norm() >= max * (1.0 - TIE_RTOL))
        .expect("max is attained");
    let a = v[i];
    let phase = a.conj() / a.norm();
    v.apply(|x| *x *= phase);
    v[i] = C64::new(v[i].re, 0.0);
}

/// Pivoted Gram-Schmidt over candidate vectors: repeatedly takes the
/// candidate with the largest residual (first in order on near-ties),
/// until `count` vectors are chosen or the residuals vanish.
fn pivoted_basis(mut candidates: Vec<CVector>, count: usize) -> Vec<CVector> {
    let mut out: Vec<CVector> = Vec::with_capacity(count);
    let floor = candidates.iter().map(|c| c.norm()).fold(0.0, f64::max) * 1e-8;
    while out.len() < count {
        let norms: Vec<f64> = candidates.iter().map(|c| c.norm()).collect();
        let best = norms.iter().cloned().fold(0.0, f64::max);
        if best <= floor || best == 0.0 {
            break;
        }
        let i = norms
            .iter()
            .position(|&n| n >= best * (1.0 - TIE_RTOL))
            .expect("max is attained");
        let mut q = candidates[i].clone();
        for prev in &out {
            project_out(&mut q, prev);
        }
        let n = q.norm();
        let mut q = q / C64::new(n, 0.0);
        for c in candidates.iter_mut() {
            project_out(c, &q);
        }
        candidates[i].fill(C64::new(0.0, 0.0));
        phase_normalize(&mut q);
        out.push(q);
    }
    out
}

/// Basis-independent orthonormal basis of `span(block)` (`block` orthonormal):
/// pivoted Gram-Schmidt of the projections of the unit vectors.
pub fn canonical_span_basis(block: &[CVector], dim: usize) -> Vec<CVector> {
    let candidates = (0..dim)
        .map(|l| {
            let mut c = CVector::zeros(dim);
            for b in block {
                c.axpy(b[l].conj(), b, C64::new(1.0, 0.0));
            }
            c
        })
        .collect();
    pivoted_basis(candidates, block.len())
}

/// `count` orthonormal vectors orthogonal to `existing` (orthonormal), chosen
/// by pivoted Gram-Schmidt of the unit vectors' residuals.
pub fn canonical_complement(existing: &[CVector], dim: usize, count: usize) -> Vec<CVector> {
    let candidates = (0..dim)
        .map(|l| {
            let mut c = CVector::zeros(dim);
            c[l] = C64::new(1.0, 0.0);
            for _ in 0..2 {
                for q in existing {
                    project_out(&mut c, q);
                }
            }
            c
        })
        .collect();
    pivoted_basis(candidates, count)
}

/// Stacks vectors as the columns of a matrix with `rows` rows.
pub fn columns_to_matrix(cols: &[CVector], rows: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Principal angles (radians, descending) between the column spans of `a`
/// and `b`, computed from sines so that small angles stay accurate.
/// The spans are orthonormalized with threshold `1e-10` first.
pub fn principal_angles(a: &CMatrix, b: &CMatrix) -> Vec<f64> {
    let qa = orthonormalize(&matrix_columns(a), 1e-10);
    let qb = orthonormalize(&matrix_columns(b), 1e-10);
    if qb.is_empty() {
        return Vec::new();
    }
    let (small, big) = if qa.len() >= qb.len() { (&qb, &qa) } else { (&qa, &qb) };
    let dim = small[0].len();
    let residual: Vec<CVector> = small
        .iter()
        .map(|v| {
            let mut r = v.clone();
            for _ in 0..2 {
                for q in big.iter() {
                    project_out(&mut r, q);
                }
            }
            r
        })
        .collect();
    let m = columns_to_matrix(&residual, dim);
    let mut sines = singular_values(&m).unwrap_or_else(|_| vec![1.0; m.ncols()]);
    sines.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sines.into_iter().map(|s| s.min(1.0).asin()).collect()
}

fn to_faer(m: &CMatrix) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        c64::new(z.re, z.im)
    })
}

/// Thin SVD: singular values (descending) and the matching left singular vectors.
pub fn svd_left(x: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let k = x.nrows().min(x.ncols());
    if k == 0 {
        return Ok((Vec::new(), CMatrix::zeros(x.nrows(), 0)));
    }
    let svd = to_faer(x)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let u = svd.U();
    let values = (0..k).map(|i| s[i].re).collect();
    let vectors = CMatrix::from_fn(x.nrows(), k, |i, j| {
        let z = u[(i, j)];
        C64::new(z.re, z.im)
    });
    Ok((values, vectors))
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(g: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = g.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let eig = to_faer(g)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("Hermitian eigensolver did not converge: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let values = (0..n).map(|i| s[i].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| {
        let z = u[(i, j)];
        C64::new(z.re, z.im)
    });
    Ok((values, vectors))
}

pub fn singular_values(x: &CMatrix) -> Result<Vec<f64>> {
    svd_left(x).map(|(s, _)| s)
}

pub fn matrix_columns(m: &CMatrix) -> Vec<CVector> {
    (0..m.ncols()).map(|j| m.column(j).into_owned()).collect()
}
