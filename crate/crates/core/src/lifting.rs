//! The plant `ẋ = Ax + Bu` and the lifted parameters `Â` solving `B·Â = A`.
//!
//! With `m > n` channels and `rank B = n`, the map `Y ↦ B·Y` from `m × n`
//! matrices onto `n × n` matrices has an `n(m-n)`-dimensional kernel, so the
//! lifts form an affine family. Choosing a lift whose rows vanish outside a
//! channel set `I` is what makes a gain insensitive to losing channels
//! outside `I`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::lattice::{self, ChannelSet};
use crate::numerics;

/// Tolerance on `‖B·Â − A‖` for a matrix to count as a lift, scaled by
/// `1 + ‖A‖`.
pub const LIFT_TOL: f64 = 1e-9;

/// Determinant threshold for the "all `n × n` minors nonzero" check.
pub const MINOR_TOL: f64 = 1e-9;

/// Largest `m` for which [`Plant::minors_nonzero`] enumerates minors.
pub const MINOR_CHECK_MAX_M: usize = 10;

/// A linear plant `ẋ = Ax + Bu` with `n` states and `m` input channels.
///
/// Construction only checks shapes and finiteness, so analysis routines
/// (controllability classification, spectra) accept any conformant pair.
/// Routines that need an over-actuated plant call
/// [`Plant::check_overactuated`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlantRepr", into = "PlantRepr")]
pub struct Plant {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct PlantRepr {
    #[serde(with = "io::rows")]
    a: DMatrix<f64>,
    #[serde(with = "io::rows")]
    b: DMatrix<f64>,
}

impl TryFrom<PlantRepr> for Plant {
    type Error = Error;
    fn try_from(r: PlantRepr) -> Result<Self> {
        Plant::new(r.a, r.b)
    }
}

impl From<Plant> for PlantRepr {
    fn from(p: Plant) -> Self {
        PlantRepr { a: p.a, b: p.b }
    }
}

impl Plant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = numerics::require_square("plant A", &a)?;
        if n == 0 {
            return Err(Error::Domain("plant needs at least one state".into()));
        }
        if b.nrows() != n {
            return Err(Error::dim("plant B rows", n, b.nrows()));
        }
        if b.ncols() == 0 {
            return Err(Error::Domain(
                "plant needs at least one input channel".into(),
            ));
        }
        numerics::require_finite("plant A", &a)?;
        numerics::require_finite("plant B", &b)?;
        Ok(Plant { a, b })
    }

    pub fn from_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Self> {
        Plant::new(io::from_rows(a)?, io::from_rows(b)?)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Requires `m > n` and `rank B = n`.
    pub fn check_overactuated(&self) -> Result<()> {
        if self.m() <= self.n() {
            return Err(Error::Domain(format!(
                "need more channels than states, got m={} n={}",
                self.m(),
                self.n()
            )));
        }
        let r = numerics::rank(&self.b);
        if r != self.n() {
            return Err(Error::Rank(format!("rank B = {r} < n = {}", self.n())));
        }
        Ok(())
    }

    /// Whether every `n × n` column submatrix of `B` has `|det| > 1e-9`.
    /// `None` when `m` exceeds [`MINOR_CHECK_MAX_M`].
    pub fn minors_nonzero(&self) -> Option<bool> {
        if self.m() > MINOR_CHECK_MAX_M || self.m() < self.n() {
            return None;
        }
        let subsets = lattice::enumerate_subsets(self.m(), self.n(), self.n()).ok()?;
        Some(
            subsets
                .iter()
                .all(|s| self.columns(s).determinant().abs() > MINOR_TOL),
        )
    }

    /// The `n × |I|` matrix of the columns of `B` indexed by `set`.
    pub fn columns(&self, set: &ChannelSet) -> DMatrix<f64> {
        self.b.select_columns(set.indices())
    }

    pub(crate) fn check_channels(&self, context: &'static str, set: &ChannelSet) -> Result<()> {
        if set.m() != self.m() {
            return Err(Error::dim(context, self.m(), set.m()));
        }
        Ok(())
    }

    pub(crate) fn check_lift_shape(
        &self,
        context: &'static str,
        ahat: &DMatrix<f64>,
    ) -> Result<()> {
        if ahat.shape() != (self.m(), self.n()) {
            return Err(Error::dim(
                context,
                format!("{}x{}", self.m(), self.n()),
                format!("{}x{}", ahat.nrows(), ahat.ncols()),
            ));
        }
        Ok(())
    }

    /// `‖B·Â − A‖_F`.
    pub fn lift_residual(&self, ahat: &DMatrix<f64>) -> f64 {
        (&self.b * ahat - &self.a).norm()
    }

    pub(crate) fn lift_tolerance(&self) -> f64 {
        LIFT_TOL * (1.0 + self.a.norm())
    }
}

/// The affine family `particular + span(basis)` of all lifts of `A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftFamily {
    #[serde(with = "io::rows")]
    pub particular: DMatrix<f64>,
    #[serde(with = "io::rows_list")]
    pub basis: Vec<DMatrix<f64>>,
    pub dim: usize,
}

impl LiftFamily {
    /// `particular + Σ cᵢ·basisᵢ`.
    pub fn element(&self, coefficients: &[f64]) -> Result<DMatrix<f64>> {
        if coefficients.len() != self.dim {
            return Err(Error::dim(
                "lift family coefficients",
                self.dim,
                coefficients.len(),
            ));
        }
        let mut out = self.particular.clone();
        for (c, e) in coefficients.iter().zip(&self.basis) {
            out += e * *c;
        }
        Ok(out)
    }

    /// Frobenius Gram matrix of the basis.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.basis[i].dot(&self.basis[j]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lift family serialises")
    }
}

/// Minimum-norm lift `Bᵀ(BBᵀ)⁻¹A`.
pub fn lift_particular(plant: &Plant) -> Result<DMatrix<f64>> {
    plant.check_overactuated()?;
    right_inverse_lift(plant.b(), plant.a())
}

fn right_inverse_lift(b: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = b * b.transpose();
    if !numerics::is_nonsingular(&gram) {
        return Err(Error::Rank("B·Bᵀ is numerically singular".into()));
    }
    let x = gram
        .cholesky()
        .ok_or_else(|| Error::Rank("B·Bᵀ is not positive definite".into()))?
        .solve(a);
    Ok(b.transpose() * x)
}

/// Particular lift plus the kernel basis `E_jk`: nullspace vector `j` of `B`
/// placed in column `k`, zeros elsewhere (`j` outer, `k` inner).
pub fn lift_nullspace_basis(plant: &Plant) -> Result<LiftFamily> {
    let particular = lift_particular(plant)?;
    let (n, m) = (plant.n(), plant.m());
    let null = numerics::nullspace(plant.b());
    if null.len() != m - n {
        return Err(Error::Rank(format!(
            "nullspace of B has dimension {}, expected {}",
            null.len(),
            m - n
        )));
    }
    let mut basis = Vec::with_capacity(n * (m - n));
    for v in &null {
        for k in 0..n {
            let mut e = DMatrix::zeros(m, n);
            e.set_column(k, v);
            basis.push(e);
        }
    }
    Ok(LiftFamily {
        particular,
        dim: basis.len(),
        basis,
    })
}

/// A lift whose rows outside `set` are exactly zero: the `set` rows are
/// `B_Iᵀ(B_I B_Iᵀ)⁻¹A` with `B_I` the columns of `B` in `set`.
pub fn lift_invariant(plant: &Plant, set: &ChannelSet) -> Result<DMatrix<f64>> {
    plant.check_channels("lift_invariant channel set", set)?;
    let b_i = plant.columns(set);
    let r = numerics::rank(&b_i);
    if r < plant.n() {
        return Err(Error::Infeasible(format!(
            "no lift invariant under {set}: rank(B·P) = {r} < n = {}",
            plant.n()
        )));
    }
    let rows = right_inverse_lift(&b_i, plant.a())?;
    let mut out = DMatrix::zeros(plant.m(), plant.n());
    for (k, &i) in set.indices().iter().enumerate() {
        out.set_row(i, &rows.row(k));
    }
    Ok(out)
}

/// Dimension `n(m-n-k)` of the lifts invariant under a projection that
/// drops `k` channels.
pub fn invariant_family_dim(plant: &Plant, dropped: usize) -> Result<usize> {
    let (n, m) = (plant.n(), plant.m());
    if m <= n || dropped > m - n {
        return Err(Error::Domain(format!(
            "dropped channel count {dropped} exceeds m - n = {}",
            m.saturating_sub(n)
        )));
    }
    Ok(n * (m - n - dropped))
}

/// Whether `P_I·Â = Â`, i.e. every row of `ahat` outside `set` is zero to
/// within `tol·(1 + ‖Â‖)`.
pub fn is_invariant(ahat: &DMatrix<f64>, set: &ChannelSet, tol: f64) -> bool {
    let scale = 1.0 + ahat.norm();
    (0..ahat.nrows())
        .filter(|&i| !set.contains(i))
        .all(|i| ahat.row(i).amax() <= tol * scale)
}
