//! Steady-state error when every channel offset carries independent noise.
//!
//! With noise `n` the equilibrium satisfies `(A+BK)x∞ + B(v + n) = 0`, while
//! the design gives `(A+BK)x_g + Bv = 0`. Subtracting,
//! `x∞ − x_g = −(A+BK)⁻¹·B·n`, so the error covariance is
//! `M·B·Σ·Bᵀ·Mᵀ` with `M = (A+BK)⁻¹`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::design::GainDesign;
use crate::error::{Error, Result};
use crate::lifting::Plant;
use crate::numerics;

/// Minimum trial count for [`monte_carlo_sse`].
pub const MIN_TRIALS: usize = 1000;

const CHUNK: usize = 4096;

/// Covariance `Σ` of the per-channel offset perturbations.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    sigma: DMatrix<f64>,
}

impl NoiseModel {
    /// `Σ` must be symmetric positive semidefinite.
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        numerics::require_square("noise covariance", &sigma)?;
        numerics::require_finite("noise covariance", &sigma)?;
        let scale = 1.0 + sigma.amax();
        if (&sigma - sigma.transpose()).amax() > 1e-12 * scale {
            return Err(Error::Domain("noise covariance is not symmetric".into()));
        }
        if numerics::symmetric_min_eigenvalue(&sigma) < -1e-10 * scale {
            return Err(Error::Domain(
                "noise covariance is not positive semidefinite".into(),
            ));
        }
        Ok(NoiseModel { sigma })
    }

    /// i.i.d. unit-variance channels.
    pub fn identity(m: usize) -> Self {
        NoiseModel {
            sigma: DMatrix::identity(m, m),
        }
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(
            variances,
        )))
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// `L` with `L·Lᵀ = Σ`, from the symmetric eigendecomposition so that
    /// singular `Σ` is fine.
    fn factor(&self) -> DMatrix<f64> {
        let eig = self.sigma.clone().symmetric_eigen();
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        &eig.eigenvectors * DMatrix::from_diagonal(&roots)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyStateError {
    pub covariance: DMatrix<f64>,
    /// `E‖x∞ − x_g‖²`, the trace of the covariance.
    pub mse: f64,
}

fn closed_loop_inverse(plant: &Plant, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let closed = plant.a() + plant.b() * k;
    if !numerics::is_nonsingular(&closed) {
        return Err(Error::Domain("closed loop A + BK is singular".into()));
    }
    closed
        .try_inverse()
        .ok_or_else(|| Error::Domain("closed loop A + BK is singular".into()))
}

fn check_noise(plant: &Plant, noise: &NoiseModel) -> Result<()> {
    if noise.sigma.nrows() != plant.m() {
        return Err(Error::dim(
            "noise covariance",
            plant.m(),
            noise.sigma.nrows(),
        ));
    }
    Ok(())
}

/// Closed-form steady-state error covariance and its trace.
pub fn steady_state_error(
    plant: &Plant,
    design: &GainDesign,
    noise: &NoiseModel,
) -> Result<SteadyStateError> {
    plant.check_lift_shape("steady_state_error gain", &design.k)?;
    check_noise(plant, noise)?;
    let inv = closed_loop_inverse(plant, &design.k)?;
    let mb = inv * plant.b();
    let covariance = &mb * &noise.sigma * mb.transpose();
    let mse = covariance.trace();
    Ok(SteadyStateError { covariance, mse })
}

/// Effect of appending channel `b` with gain row `−α_eff·bᵀ` and zero offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Augmentation {
    pub new_mse: f64,
    pub old_mse: f64,
}

/// Mean squared steady-state error before and after adding channel `b`,
/// both with unit-variance i.i.d. channel noise. The design's effective `α`
/// is kept for the new channel.
pub fn augment_channel(
    plant: &Plant,
    design: &GainDesign,
    b: &DVector<f64>,
) -> Result<Augmentation> {
    if b.len() != plant.n() {
        return Err(Error::dim("augment_channel b", plant.n(), b.len()));
    }
    let old_mse = steady_state_error(plant, design, &NoiseModel::identity(plant.m()))?.mse;
    let (aug_plant, aug_k) = augmented(plant, design, b)?;
    let inv = closed_loop_inverse(&aug_plant, &aug_k)?;
    let mb = inv * aug_plant.b();
    let new_mse = (&mb * mb.transpose()).trace();
    Ok(Augmentation { new_mse, old_mse })
}

/// The plant `(A, [B | b])` and gain `[K ; −α_eff·bᵀ]`.
pub fn augmented(
    plant: &Plant,
    design: &GainDesign,
    b: &DVector<f64>,
) -> Result<(Plant, DMatrix<f64>)> {
    let m = plant.m();
    let mut bb = plant.b().clone().insert_column(m, 0.0);
    bb.set_column(m, b);
    let mut k = design.k.clone().insert_row(m, 0.0);
    k.set_row(m, &(b.transpose() * -design.effective_alpha()));
    Ok((Plant::new(plant.a().clone(), bb)?, k))
}

/// Empirical `E‖x∞ − x_g‖²` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub mse: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Samples `n ~ N(0, Σ)` and averages `‖(A+BK)⁻¹·B·n‖²`.
///
/// Trials are split into fixed-size chunks; chunk `c` uses ChaCha stream
/// `c` of `seed` and partial sums are combined in chunk order, so the
/// estimate is bit-for-bit reproducible regardless of thread count.
pub fn monte_carlo_sse(
    plant: &Plant,
    design: &GainDesign,
    noise: &NoiseModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::Domain(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    plant.check_lift_shape("monte_carlo_sse gain", &design.k)?;
    check_noise(plant, noise)?;
    let inv = closed_loop_inverse(plant, &design.k)?;
    let map = inv * plant.b() * noise.factor();
    let m = plant.m();

    let chunks = trials.div_ceil(CHUNK);
    let partials: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(trials - c * CHUNK);
            let mut z = DVector::<f64>::zeros(m);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                for zi in z.iter_mut() {
                    *zi = StandardNormal.sample(&mut rng);
                }
                let e2 = (&map * &z).norm_squared();
                s1 += e2;
                s2 += e2 * e2;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    let nt = trials as f64;
    let mean = s1 / nt;
    let var = (s2 / nt - mean * mean).max(0.0) * nt / (nt - 1.0);
    Ok(MonteCarloEstimate {
        mse: mean,
        stderr: (var / nt).sqrt(),
        trials,
    })
}

/// One row of an uncertainty results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UncertaintyRow {
    pub config_id: String,
    pub closed_form_mse: f64,
    pub empirical_mse: f64,
    pub stderr: f64,
}

/// CSV with columns `config_id, closed_form_mse, empirical_mse, stderr`.
pub fn results_csv(rows: &[UncertaintyRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["config_id", "closed_form_mse", "empirical_mse", "stderr"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.config_id.clone(),
            crate::io::fmt_f64(r.closed_form_mse),
            crate::io::fmt_f64(r.empirical_mse),
            crate::io::fmt_f64(r.stderr),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{make_gain, AlphaScaling};
    use crate::lifting::lift_particular;
    use nalgebra::{dmatrix, dvector};
    use rand::Rng;

    fn example1() -> Plant {
        Plant::new(
            dmatrix![0.0, 1.0; 0.0, 0.0],
            dmatrix![0.0, 1.0, 1.0; 1.0, 0.0, 1.0],
        )
        .unwrap()
    }

    fn lemma_design(p: &Plant, alpha: f64) -> GainDesign {
        let ahat = lift_particular(p).unwrap();
        make_gain(p, &ahat, alpha, &DVector::zeros(p.n()), AlphaScaling::Fixed).unwrap()
    }

    #[test]
    fn example1_closed_form() {
        let p = example1();
        let r = steady_state_error(&p, &lemma_design(&p, 1.0), &NoiseModel::identity(3)).unwrap();
        // tr([[2,1],[1,2]]⁻¹) = 4/3
        assert!((r.mse - 4.0 / 3.0).abs() < 1e-12);
        let zero = NoiseModel::new(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(
            steady_state_error(&p, &lemma_design(&p, 1.0), &zero)
                .unwrap()
                .mse,
            0.0
        );
        let doubled =
            steady_state_error(&p, &lemma_design(&p, 2.0), &NoiseModel::identity(3)).unwrap();
        assert!((doubled.mse - r.mse / 4.0).abs() < 1e-12);
    }

    #[test]
    fn augmentation_by_hand() {
        let p = example1();
        let d = lemma_design(&p, 1.0);
        let same = augment_channel(&p, &d, &dvector![0.0, 0.0]).unwrap();
        assert!((same.new_mse - same.old_mse).abs() < 1e-12);
        let aug = augment_channel(&p, &d, &dvector![1.0, 0.0]).unwrap();
        // tr([[3,1],[1,2]]⁻¹) = 5/5
        assert!((aug.new_mse - 1.0).abs() < 1e-12);
        assert!((aug.old_mse - 4.0 / 3.0).abs() < 1e-12);
        assert!(augment_channel(&p, &d, &dvector![1.0]).is_err());
    }

    #[test]
    fn augmentation_strictly_helps() {
        let p = example1();
        let d = lemma_design(&p, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let b = dvector![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let aug = augment_channel(&p, &d, &b).unwrap();
            assert!(aug.new_mse < aug.old_mse);
            // closed form (1/α²)·tr((BBᵀ + bbᵀ)⁻¹)
            let g = p.b() * p.b().transpose() + &b * b.transpose();
            let want = g.try_inverse().unwrap().trace() / (1.5 * 1.5);
            assert!((aug.new_mse - want).abs() < 1e-10 * want);
        }
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let p = example1();
        let d = lemma_design(&p, 1.0);
        for noise in [
            NoiseModel::identity(3),
            NoiseModel::diagonal(&[0.1, 25.0, 0.5]).unwrap(),
        ] {
            let exact = steady_state_error(&p, &d, &noise).unwrap().mse;
            let mc = monte_carlo_sse(&p, &d, &noise, 20_000, 5).unwrap();
            assert!(
                (mc.mse - exact).abs() < 3.0 * mc.stderr,
                "{} vs {exact} ± {}",
                mc.mse,
                mc.stderr
            );
        }
        let zero = NoiseModel::new(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(monte_carlo_sse(&p, &d, &zero, 1000, 1).unwrap().mse, 0.0);
        assert!(monte_carlo_sse(&p, &d, &NoiseModel::identity(3), 10, 1).is_err());
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let p = example1();
        let d = lemma_design(&p, 1.0);
        let a = monte_carlo_sse(&p, &d, &NoiseModel::identity(3), 9000, 3).unwrap();
        let b = monte_carlo_sse(&p, &d, &NoiseModel::identity(3), 9000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn orthogonal_remixing_preserves_mse() {
        let p = example1();
        // rotation in the (1,3) channel plane
        let (c, s) = (0.6f64, 0.8f64);
        let q = dmatrix![c, 0.0, -s; 0.0, 1.0, 0.0; s, 0.0, c];
        let mixed = Plant::new(p.a().clone(), p.b() * q).unwrap();
        let a = steady_state_error(&p, &lemma_design(&p, 1.0), &NoiseModel::identity(3)).unwrap();
        let b = steady_state_error(&mixed, &lemma_design(&mixed, 1.0), &NoiseModel::identity(3))
            .unwrap();
        assert!((a.mse - b.mse).abs() < 1e-12);
    }

    #[test]
    fn ode_settles_at_predicted_offset() {
        // integrate ẋ = Ax + B(Kx + v + n) to t = 50 and compare with the
        // algebraic equilibrium error −(A+BK)⁻¹Bn
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let a = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
            let p = Plant::new(a, b).unwrap();
            let ahat = lift_particular(&p).unwrap();
            let x_g = dvector![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let d = make_gain(&p, &ahat, 2.0, &x_g, AlphaScaling::Fixed).unwrap();
            let noise = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let closed = p.a() + p.b() * &d.k;
            let forcing = p.b() * (&d.v + &noise);
            let mut x = DVector::zeros(2);
            for _ in 0..50_000 {
                x = numerics::rk4_step(|y| &closed * y + &forcing, &x, 1e-3);
            }
            let predicted = -(closed.clone().try_inverse().unwrap() * p.b() * &noise);
            assert!((&x - &x_g - predicted).norm() < 1e-8);
        }
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::new(dmatrix![1.0, 2.0; 0.0, 1.0]).is_err());
        assert!(NoiseModel::new(dmatrix![1.0, 0.0; 0.0, -1.0]).is_err());
        let p = example1();
        assert!(steady_state_error(&p, &lemma_design(&p, 1.0), &NoiseModel::identity(2)).is_err());
    }
}
