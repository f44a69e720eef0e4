//! Small dense-matrix kernels shared by every other module.
//!
//! Everything here is desk scale: matrices of dimension up to a dozen or so.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lattice::ChannelSet;

/// A matrix is treated as Hurwitz iff its largest eigenvalue real part is
/// below `-HURWITZ_TOL`.
pub const HURWITZ_TOL: f64 = 1e-9;

/// Relative singular-value threshold used for every rank and singularity
/// decision in the crate.
pub const RANK_TOL: f64 = 1e-9;

// Padé [13/13] coefficients and the corresponding scaling threshold.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Eigenvalues of a square matrix, with multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Complex<f64>>,
    pub max_real_part: f64,
}

impl Spectrum {
    fn from_unsorted(mut eigenvalues: Vec<Complex<f64>>) -> Self {
        eigenvalues.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let max_real_part = eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        Spectrum {
            eigenvalues,
            max_real_part,
        }
    }

    pub fn is_hurwitz(&self) -> bool {
        self.max_real_part < -HURWITZ_TOL
    }
}

pub(crate) fn require_square(context: &'static str, m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::dim(
            context,
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(m.nrows())
}

pub(crate) fn require_finite(context: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(M t)` by scaling and squaring with a [13/13] Padé approximant.
pub fn mat_exp(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = require_square("mat_exp", m)?;
    if !t.is_finite() {
        return Err(Error::Domain(format!("mat_exp: time {t} is not finite")));
    }
    require_finite("mat_exp", m)?;
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }

    let mt = m * t;
    let norm = norm1(&mt);
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = mt / 2f64.powi(squarings);

    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];

    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Rank("mat_exp: Padé denominator is singular".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    Ok(r)
}

/// Eigenvalues with multiplicity. Dimensions one and two use closed forms so
/// that repeated real roots come out exactly; larger matrices go through a
/// real Schur decomposition.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Spectrum> {
    let n = require_square("eigenvalues", m)?;
    require_finite("eigenvalues", m)?;
    let eigs = match n {
        0 => Vec::new(),
        1 => vec![Complex::new(m[(0, 0)], 0.0)],
        2 => {
            let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
            let mid = 0.5 * (a + d);
            let half_gap = 0.5 * (a - d);
            let disc = half_gap * half_gap + b * c;
            if disc >= 0.0 {
                let r = disc.sqrt();
                vec![Complex::new(mid - r, 0.0), Complex::new(mid + r, 0.0)]
            } else {
                let r = (-disc).sqrt();
                vec![Complex::new(mid, -r), Complex::new(mid, r)]
            }
        }
        _ => m.clone().complex_eigenvalues().iter().copied().collect(),
    };
    Ok(Spectrum::from_unsorted(eigs))
}

/// Largest real part over the spectrum.
pub fn hurwitz_margin(m: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(m)?.max_real_part)
}

pub fn is_hurwitz_margin(margin: f64) -> bool {
    margin < -HURWITZ_TOL
}

/// Finite-horizon controllability Gramian restricted to `channels`:
/// `∫₀ᵀ e^{A(T-s)} B P Bᵀ e^{Aᵀ(T-s)} ds`, from one exponential of the
/// block matrix `[[-A, BPBᵀ], [0, Aᵀ]]·T`.
pub fn gramian(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    channels: &ChannelSet,
    horizon: f64,
) -> Result<DMatrix<f64>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!(
            "gramian: horizon must be positive, got {horizon}"
        )));
    }
    let n = require_square("gramian (A)", a)?;
    if b.nrows() != n {
        return Err(Error::dim("gramian (B rows)", n, b.nrows()));
    }
    if channels.m() != b.ncols() {
        return Err(Error::dim(
            "gramian (channel count)",
            b.ncols(),
            channels.m(),
        ));
    }
    let bp = restrict_columns(b, channels);
    let q = &bp * bp.transpose();

    let mut block = DMatrix::<f64>::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a));
    block.view_mut((0, n), (n, n)).copy_from(&q);
    block.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = mat_exp(&block, horizon)?;
    let f12 = e.view((0, n), (n, n)).into_owned();
    let f22 = e.view((n, n), (n, n)).into_owned();
    let w = f22.transpose() * f12;
    Ok((&w + w.transpose()) * 0.5)
}

/// `B·P_I` as an `n × m` matrix: columns outside `channels` are zeroed.
pub fn restrict_columns(b: &DMatrix<f64>, channels: &ChannelSet) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows(), b.ncols());
    for &j in channels.indices() {
        out.set_column(j, &b.column(j));
    }
    out
}

/// Singular values in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with the crate-wide relative threshold.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > RANK_TOL * top).count(),
        _ => 0,
    }
}

/// Smallest singular value (zero for an empty matrix).
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// True when the square matrix is nonsingular by the relative threshold.
pub fn is_nonsingular(m: &DMatrix<f64>) -> bool {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&top), Some(&bottom)) => top > 0.0 && bottom > RANK_TOL * top && s.len() == m.nrows(),
        _ => false,
    }
}

/// `[B, AB, …, A^{n-1}B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = require_square("controllability matrix (A)", a)?;
    if b.nrows() != n {
        return Err(Error::dim("controllability matrix (B rows)", n, b.nrows()));
    }
    let m = b.ncols();
    let mut out = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        out.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    Ok(out)
}

/// Rank of the controllability matrix of `(A, B)`.
pub fn ctrb_rank(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    Ok(rank(&controllability_matrix(a, b)?))
}

/// Orthonormal basis of the right nullspace. Each vector is sign-normalised
/// so its first non-negligible entry is positive.
pub fn nullspace(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    if cols == 0 {
        return Vec::new();
    }
    // Zero rows do not change the nullspace but give the SVD a full V.
    let padded = if m.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("SVD was asked for V");
    let top = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if top == 0.0 || s <= RANK_TOL * top {
            let mut v: DVector<f64> = v_t.row(i).transpose();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v = -v;
                }
            }
            basis.push(v);
        }
    }
    // The SVD returns singular vectors in arbitrary order; sort for
    // reproducibility.
    basis.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| y.abs().total_cmp(&x.abs()))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    basis
}

/// One classical fourth-order Runge–Kutta step for `ẋ = f(x)`.
pub fn rk4_step<F>(f: F, x: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (0.5 * dt)));
    let k3 = f(&(x + &k2 * (0.5 * dt)));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn symmetric_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}
