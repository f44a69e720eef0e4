use nalgebra::{DMatrix, DVector};
use neurochan_core::design::{self, AlphaScaling};
use neurochan_core::intermittency::{self, InitialAvailability, MarkovChannelModel};
use neurochan_core::lattice::{self, ChannelSet};
use neurochan_core::uncertainty::{self, NoiseModel};
use neurochan_core::{frames, lifting, numerics, Plant};
use proptest::prelude::*;

fn matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, r * c).prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
}

fn plant() -> impl Strategy<Value = Plant> {
    (1usize..=3, 1usize..=3)
        .prop_flat_map(|(n, extra)| (matrix(n, n), matrix(n, n + extra)))
        .prop_map(|(a, b)| Plant::new(a, b).unwrap())
}

/// Kalman rank of `[B, AB, …, A^{n−1}B]`, computed without the Gramian.
fn kalman_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    if b.ncols() == 0 {
        return false;
    }
    let mut blocks = Vec::new();
    let mut p = b.clone();
    for _ in 0..n {
        blocks.push(p.clone());
        p = a * p;
    }
    let cols: usize = blocks.iter().map(|m| m.ncols()).sum();
    let mut c = DMatrix::zeros(n, cols);
    let mut j = 0;
    for blk in &blocks {
        c.view_mut((0, j), (n, blk.ncols())).copy_from(blk);
        j += blk.ncols();
    }
    let svd = c.svd(false, false);
    let smax = svd.singular_values.max();
    svd.singular_values
        .iter()
        .filter(|&&s| s > 1e-7 * smax.max(1.0))
        .count()
        == n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gramian_classification_matches_kalman_rank(p in plant(), zero in prop::collection::vec(any::<bool>(), 6)) {
        // Zeroing some columns makes uncontrollable subsets common.
        let mut b = p.b().clone();
        for (j, z) in zero.iter().take(b.ncols()).enumerate() {
            if *z && j > 0 {
                b.column_mut(j).fill(0.0);
            }
        }
        let p = Plant::new(p.a().clone(), b).unwrap();
        let report = lattice::classify_controllability(&p, 1.0).unwrap();
        prop_assert_eq!(report.records.len(), 1 << p.m());
        for r in &report.records {
            let sub = p.columns(&r.set);
            let want = kalman_controllable(p.a(), &sub);
            // Skip borderline cases where the two tests use different scales.
            let margin = r.gramian_min_singular_value.unwrap_or(0.0);
            if margin > 1e-6 || margin == 0.0 {
                prop_assert_eq!(r.controllable, want, "set {}", r.set);
            }
        }
    }

    #[test]
    fn invariant_lift_gives_negative_definite_superset_loops(p in plant(), alpha in 0.1..4.0f64, pick in any::<u64>()) {
        let m = p.m();
        let n = p.n();
        let mut idx: Vec<usize> = (0..m).collect();
        let mut s = pick;
        for i in (1..m).rev() {
            idx.swap(i, (s % (i as u64 + 1)) as usize);
            s /= i as u64 + 1;
        }
        let root = ChannelSet::new(m, idx[..n].iter().copied()).unwrap();
        prop_assume!(numerics::rank(&p.columns(&root)) == n);
        let ahat = lifting::lift_invariant(&p, &root).unwrap();
        let d = design::make_gain(&p, &ahat, alpha, &DVector::zeros(n), AlphaScaling::Fixed).unwrap();
        for l in lattice::supersets(&root).unwrap() {
            // On supersets of the root, A + B·P_L·K collapses to -α·B_L·B_Lᵀ.
            let bl = p.columns(&l);
            let want = -(&bl * bl.transpose()) * alpha;
            let got = design::projected_closed_loop(&p, &d.k, &l);
            prop_assert!((&got - &want).norm() < 1e-9 * (1.0 + want.norm()));
        }
        let cert = design::certify_resilience(&p, &d, &root).unwrap();
        prop_assert_eq!(cert.all_pass, Some(true));
    }

    #[test]
    fn set_point_is_the_equilibrium(p in plant(), alpha in 0.1..4.0f64, xg in prop::collection::vec(-3.0..3.0f64, 3)) {
        let n = p.n();
        let x_g = DVector::from_column_slice(&xg[..n]);
        let ahat = lifting::lift_particular(&p).unwrap();
        let d = design::make_gain(&p, &ahat, alpha, &x_g, AlphaScaling::InverseM).unwrap();
        let residual = p.a() * &x_g + p.b() * (&d.k * &x_g + &d.v);
        prop_assert!(residual.norm() < 1e-9 * (1.0 + x_g.norm()));
    }

    #[test]
    fn added_channel_never_hurts(p in plant(), alpha in 0.1..4.0f64, b in prop::collection::vec(-3.0..3.0f64, 3)) {
        let n = p.n();
        let ahat = lifting::lift_particular(&p).unwrap();
        let d = design::make_gain(&p, &ahat, alpha, &DVector::zeros(n), AlphaScaling::Fixed).unwrap();
        let b = DVector::from_column_slice(&b[..n]);
        let aug = uncertainty::augment_channel(&p, &d, &b).unwrap();
        prop_assert!(aug.new_mse <= aug.old_mse * (1.0 + 1e-12));
        let old = uncertainty::steady_state_error(&p, &d, &NoiseModel::identity(p.m())).unwrap().mse;
        prop_assert!((old - aug.old_mse).abs() <= 1e-12 * old.max(1.0));
    }

    #[test]
    fn circle_frames_are_tight(m in 3usize..200) {
        let b = frames::circle_frame(m).unwrap();
        let g = &b * b.transpose();
        let want = DMatrix::<f64>::identity(2, 2) * (m as f64 / 2.0);
        prop_assert!((g - want).norm() < 1e-9);
    }
}

#[test]
fn batch_runs_match_individual_runs() {
    let p = Plant::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0]),
    )
    .unwrap();
    let ahat = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let d = design::make_gain(&p, &ahat, 2.0, &DVector::zeros(2), AlphaScaling::Fixed).unwrap();
    let model = MarkovChannelModel::new(3.0, 3.0).unwrap();
    let x0 = DVector::from_column_slice(&[1.0, 1.0]);
    let seeds = [11u64, 3, 7];
    let batch = intermittency::run_batch(
        &p,
        &d,
        &model,
        &x0,
        2.0,
        1e-3,
        InitialAvailability::AllAvailable,
        &seeds,
    )
    .unwrap();
    assert_eq!(batch.len(), seeds.len());
    for (run, &seed) in batch.iter().zip(&seeds) {
        assert_eq!(run.seed, seed);
        let path = intermittency::sample_availability(&model, 3, 2.0, seed).unwrap();
        let traj = intermittency::simulate_switched(&p, &d, &path, &x0, 1e-3).unwrap();
        assert_eq!(run.contraction_ratio, traj.contraction_ratio());
        assert_eq!(run.transient_increase, traj.has_norm_increase());
    }
}
