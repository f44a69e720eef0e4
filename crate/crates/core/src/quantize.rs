//! Sampled-data discretizations and binary-input emulation of a target
//! linear flow `ẋ = Hx`.
//!
//! Inputs are chosen per state by exhaustive search over a finite alphabet
//! so that `Ax + Bu` is as close as possible to `Hx` in the Euclidean norm.
//! Ties go to the lexicographically smallest `u` with `−1 < 0 < +1`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{lift_particular, Plant};
use crate::numerics;

/// Largest `m` for the `{−1, +1}` alphabet.
pub const MAX_PM_ONE_CHANNELS: usize = 20;
/// Largest `m` for the `{−1, 0, +1}` alphabet.
pub const MAX_GATED_CHANNELS: usize = 12;
/// States beyond this norm abort a simulation.
pub const DIVERGENCE_NORM: f64 = 1e6;
/// Relative tolerance on squared residuals for counting ties.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Exact,
    Euler,
}

/// `x(k+1) = F·x(k) + G·u(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discretization {
    pub h: f64,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub order: Order,
}

impl Discretization {
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.f * x + &self.g * u
    }
}

/// Exact: `F = e^{Ah}`, `G = ∫₀ʰ e^{A(h−s)} ds · B`, both read off
/// `exp([[A, B], [0, 0]]·h)`. Euler: `F = I + h·B·Â₀` with `Â₀` the
/// minimum-norm lift, `G = h·B`.
pub fn discretize(plant: &Plant, h: f64, order: Order) -> Result<Discretization> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("step must be positive, got {h}")));
    }
    let (n, m) = (plant.n(), plant.m());
    let (f, g) = match order {
        Order::Exact => {
            let mut aug = DMatrix::zeros(n + m, n + m);
            aug.view_mut((0, 0), (n, n)).copy_from(plant.a());
            aug.view_mut((0, n), (n, m)).copy_from(plant.b());
            let e = numerics::mat_exp(&aug, h)?;
            (
                e.view((0, 0), (n, n)).into_owned(),
                e.view((0, n), (n, m)).into_owned(),
            )
        }
        Order::Euler => {
            let ahat = lift_particular(plant)?;
            (
                DMatrix::identity(n, n) + plant.b() * ahat * h,
                plant.b() * h,
            )
        }
    };
    Ok(Discretization { h, f, g, order })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    /// `{−1, +1}`.
    PmOne,
    /// `{−1, 0, +1}`; `0` means the channel is switched off.
    PmOneOrOff,
}

impl Alphabet {
    fn symbols(self) -> &'static [i8] {
        match self {
            Alphabet::PmOne => &[-1, 1],
            Alphabet::PmOneOrOff => &[-1, 0, 1],
        }
    }

    fn limit(self) -> usize {
        match self {
            Alphabet::PmOne => MAX_PM_ONE_CHANNELS,
            Alphabet::PmOneOrOff => MAX_GATED_CHANNELS,
        }
    }
}

/// The flow `ẋ = Hx` to emulate and how inputs may be chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmulationTarget {
    #[serde(rename = "H", with = "crate::io::rows")]
    pub h_matrix: DMatrix<f64>,
    /// Sampling step.
    pub step: f64,
    pub alphabet: Alphabet,
    /// Per-channel scale applied to the columns of `B`. When absent, each
    /// column is scaled to unit norm.
    #[serde(default)]
    pub column_weights: Option<Vec<f64>>,
}

impl EmulationTarget {
    /// Checks that `H` is Hurwitz and the step positive.
    pub fn new(
        h_matrix: DMatrix<f64>,
        step: f64,
        alphabet: Alphabet,
        column_weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let t = EmulationTarget {
            h_matrix,
            step,
            alphabet,
            column_weights,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        numerics::require_square("H", &self.h_matrix)?;
        numerics::require_finite("H", &self.h_matrix)?;
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Domain(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        let margin = numerics::hurwitz_margin(&self.h_matrix)?;
        if !numerics::is_hurwitz_margin(margin) {
            return Err(Error::Domain(format!(
                "H is not Hurwitz (largest real part {margin})"
            )));
        }
        if let Some(w) = &self.column_weights {
            if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::Domain("column weights must be positive".into()));
            }
        }
        Ok(())
    }

    /// `B·diag(w)` with the configured or default weights.
    pub fn effective_b(&self, plant: &Plant) -> Result<DMatrix<f64>> {
        if self.h_matrix.nrows() != plant.n() {
            return Err(Error::dim("H", plant.n(), self.h_matrix.nrows()));
        }
        let b = plant.b();
        let weights: Vec<f64> = match &self.column_weights {
            Some(w) => {
                if w.len() != plant.m() {
                    return Err(Error::dim("column weights", plant.m(), w.len()));
                }
                w.clone()
            }
            None => b
                .column_iter()
                .map(|c| {
                    let norm = c.norm();
                    if norm > 0.0 {
                        Ok(1.0 / norm)
                    } else {
                        Err(Error::Domain("cannot normalize a zero column of B".into()))
                    }
                })
                .collect::<Result<_>>()?,
        };
        let mut out = b.clone();
        for (mut col, w) in out.column_iter_mut().zip(weights) {
            col *= w;
        }
        Ok(out)
    }
}

/// Chosen input at one state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionResult {
    pub u: Vec<i8>,
    /// `‖Hx − (Ax + Bu)‖`.
    pub residual: f64,
    /// Number of inputs attaining the minimum within tolerance.
    pub tie_count: usize,
}

impl SelectionResult {
    /// `u` as a string over `-`, `0`, `+`.
    pub fn label(&self) -> String {
        label(&self.u)
    }
}

pub fn label(u: &[i8]) -> String {
    u.iter()
        .map(|&v| match v.signum() {
            -1 => '-',
            0 => '0',
            _ => '+',
        })
        .collect()
}

/// Precomputed candidate set `{Bu}` for one alphabet, in lexicographic
/// order of `u`.
struct Candidates {
    inputs: Vec<Vec<i8>>,
    outputs: Vec<DVector<f64>>,
}

impl Candidates {
    fn build(b: &DMatrix<f64>, alphabet: Alphabet) -> Result<Self> {
        let m = b.ncols();
        if m > alphabet.limit() {
            let base = alphabet.symbols().len() as u128;
            return Err(Error::Capacity {
                context: "input selection",
                requested: base.pow(m.min(64) as u32),
                limit: base.pow(alphabet.limit() as u32),
            });
        }
        let symbols = alphabet.symbols();
        let count = symbols.len().pow(m as u32);
        let mut inputs = Vec::with_capacity(count);
        let mut outputs = Vec::with_capacity(count);
        let mut digits = vec![0usize; m];
        for _ in 0..count {
            let u: Vec<i8> = digits.iter().map(|&d| symbols[d]).collect();
            let mut bu = DVector::zeros(b.nrows());
            for (j, &v) in u.iter().enumerate() {
                if v != 0 {
                    bu += b.column(j) * f64::from(v);
                }
            }
            inputs.push(u);
            outputs.push(bu);
            for k in (0..m).rev() {
                digits[k] += 1;
                if digits[k] < symbols.len() {
                    break;
                }
                digits[k] = 0;
            }
        }
        Ok(Candidates { inputs, outputs })
    }

    fn select(&self, target_field: &DVector<f64>) -> SelectionResult {
        let sq: Vec<f64> = self
            .outputs
            .iter()
            .map(|bu| (target_field - bu).norm_squared())
            .collect();
        let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = TIE_TOL * (1.0 + min);
        let mut first = None;
        let mut tie_count = 0;
        for (i, &r) in sq.iter().enumerate() {
            if r <= min + tol {
                tie_count += 1;
                first.get_or_insert(i);
            }
        }
        let i = first.expect("candidate set is nonempty");
        SelectionResult {
            u: self.inputs[i].clone(),
            residual: sq[i].sqrt(),
            tie_count,
        }
    }
}

fn check_state(plant: &Plant, x: &DVector<f64>) -> Result<()> {
    if x.len() != plant.n() {
        return Err(Error::dim("state", plant.n(), x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("state"));
    }
    Ok(())
}

/// A prepared selector; reuses the candidate table across states.
pub struct Selector {
    h_matrix: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    candidates: Candidates,
}

impl Selector {
    pub fn new(target: &EmulationTarget, plant: &Plant, alphabet: Alphabet) -> Result<Self> {
        target.validate()?;
        let b = target.effective_b(plant)?;
        let candidates = Candidates::build(&b, alphabet)?;
        Ok(Selector {
            h_matrix: target.h_matrix.clone(),
            a: plant.a().clone(),
            b,
            candidates,
        })
    }

    /// `Hx − Ax`, the part of the target field the input has to supply.
    fn demand(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.h_matrix * x - &self.a * x
    }

    pub fn select(&self, x: &DVector<f64>) -> SelectionResult {
        self.candidates.select(&self.demand(x))
    }

    /// The effective input matrix after column weighting.
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
}

/// Best `u ∈ {−1, +1}^m`.
pub fn select_input(
    target: &EmulationTarget,
    plant: &Plant,
    x: &DVector<f64>,
) -> Result<SelectionResult> {
    check_state(plant, x)?;
    Ok(Selector::new(target, plant, Alphabet::PmOne)?.select(x))
}

/// Best `u ∈ {−1, 0, +1}^m`; `0` drops the channel.
pub fn select_gated(
    target: &EmulationTarget,
    plant: &Plant,
    x: &DVector<f64>,
) -> Result<SelectionResult> {
    if target.alphabet != Alphabet::PmOneOrOff {
        return Err(Error::Domain(
            "gated selection needs the pm_one_or_off alphabet".into(),
        ));
    }
    check_state(plant, x)?;
    Ok(Selector::new(target, plant, Alphabet::PmOneOrOff)?.select(x))
}

/// Iterates `x(k+1) = x(k) + h·(A x(k) + B u(k))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmulationTrajectory {
    pub step: f64,
    /// `steps + 1` states.
    pub states: Vec<DVector<f64>>,
    /// Input applied at each of the first `steps` states.
    pub inputs: Vec<Vec<i8>>,
    pub residuals: Vec<f64>,
}

impl EmulationTrajectory {
    pub fn norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| x.norm()).collect()
    }

    /// Largest norm over the last `tail` states.
    pub fn terminal_radius(&self, tail: usize) -> f64 {
        let start = self.states.len().saturating_sub(tail.max(1));
        self.states[start..]
            .iter()
            .map(|x| x.norm())
            .fold(0.0, f64::max)
    }

    /// First index from which every later state lies within `radius`.
    pub fn ball_entry(&self, radius: f64) -> Option<usize> {
        let norms = self.norms();
        let last_outside = norms.iter().rposition(|&r| r > radius);
        match last_outside {
            None => Some(0),
            Some(i) if i + 1 < norms.len() => Some(i + 1),
            Some(_) => None,
        }
    }

    /// Fraction of steps taken from states with `‖x‖ > radius` whose
    /// direction has positive inner product with `Hx`. `None` when no step
    /// starts outside the radius.
    pub fn direction_agreement(&self, h_matrix: &DMatrix<f64>, radius: f64) -> Option<f64> {
        let mut total = 0usize;
        let mut agree = 0usize;
        for w in self.states.windows(2) {
            if w[0].norm() <= radius {
                continue;
            }
            total += 1;
            let dx = &w[1] - &w[0];
            if dx.dot(&(h_matrix * &w[0])) > 0.0 {
                agree += 1;
            }
        }
        (total > 0).then(|| agree as f64 / total as f64)
    }

    /// Columns `k, x1..xn, u, residual`; the last state has no input.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["k".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("u".into());
        header.push("residual".into());
        w.write_record(&header).expect("in-memory write");
        for (k, x) in self.states.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(x.iter().map(|&v| crate::io::fmt_f64(v)));
            match (self.inputs.get(k), self.residuals.get(k)) {
                (Some(u), Some(r)) => {
                    row.push(label(u));
                    row.push(crate::io::fmt_f64(*r));
                }
                _ => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

/// Runs the emulation with the target's alphabet.
pub fn simulate_emulation(
    target: &EmulationTarget,
    plant: &Plant,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<EmulationTrajectory> {
    if steps == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    check_state(plant, x0)?;
    let selector = Selector::new(target, plant, target.alphabet)?;
    let h = target.step;
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let mut residuals = Vec::with_capacity(steps);
    let mut x = x0.clone();
    states.push(x.clone());
    for k in 0..steps {
        let sel = selector.select(&x);
        let u = DVector::from_iterator(sel.u.len(), sel.u.iter().map(|&v| f64::from(v)));
        x = &x + (plant.a() * &x + selector.b() * u) * h;
        let norm = x.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::Diverged { step: k + 1, norm });
        }
        inputs.push(sel.u);
        residuals.push(sel.residual);
        states.push(x.clone());
    }
    Ok(EmulationTrajectory {
        step: h,
        states,
        inputs,
        residuals,
    })
}

/// Rectangular grid of `resolution × resolution` nodes, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: usize,
}

impl GridSpec {
    pub fn square(half_width: f64, resolution: usize) -> Self {
        GridSpec {
            x_min: -half_width,
            x_max: half_width,
            y_min: -half_width,
            y_max: half_width,
            resolution,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::Domain(
                "grid bounds must be finite and increasing".into(),
            ));
        }
        if self.resolution < 2 {
            return Err(Error::Domain("grid resolution must be at least 2".into()));
        }
        Ok(())
    }

    /// Node `(i, j)`, `i` along `x1` and `j` along `x2`.
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let r = (self.resolution - 1) as f64;
        (
            self.x_min + (self.x_max - self.x_min) * i as f64 / r,
            self.y_min + (self.y_max - self.y_min) * j as f64 / r,
        )
    }
}

/// Selected input at each grid node, stored row by row with `x2` outer
/// and `x1` inner.
#[derive(Clone, Debug, PartialEq)]
pub struct CellMap {
    pub grid: GridSpec,
    pub labels: Vec<String>,
    pub residuals: Vec<f64>,
}

impl CellMap {
    pub fn at(&self, i: usize, j: usize) -> &str {
        &self.labels[j * self.grid.resolution + i]
    }

    pub fn distinct_labels(&self) -> Vec<String> {
        let mut out = self.labels.clone();
        out.sort();
        out.dedup();
        out
    }

    /// Columns `x1, x2, label`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x1", "x2", "label"])
            .expect("in-memory write");
        let r = self.grid.resolution;
        for j in 0..r {
            for i in 0..r {
                let (x1, x2) = self.grid.node(i, j);
                w.write_record([
                    crate::io::fmt_f64(x1),
                    crate::io::fmt_f64(x2),
                    self.at(i, j).to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

/// Evaluates the selection (with the target's alphabet) on every node of a
/// planar grid.
pub fn cell_map(target: &EmulationTarget, plant: &Plant, grid: &GridSpec) -> Result<CellMap> {
    if plant.n() != 2 {
        return Err(Error::Unsupported(format!(
            "cell maps need a planar state, got n={}",
            plant.n()
        )));
    }
    grid.validate()?;
    let selector = Selector::new(target, plant, target.alphabet)?;
    let r = grid.resolution;
    let results: Vec<SelectionResult> = (0..r * r)
        .into_par_iter()
        .map(|idx| {
            let (x1, x2) = grid.node(idx % r, idx / r);
            selector.select(&DVector::from_vec(vec![x1, x2]))
        })
        .collect();
    Ok(CellMap {
        grid: *grid,
        labels: results.iter().map(|s| s.label()).collect(),
        residuals: results.iter().map(|s| s.residual).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example4() -> (Plant, EmulationTarget) {
        let r = 1.0 / 2f64.sqrt();
        let plant = Plant::new(DMatrix::zeros(2, 2), dmatrix![0.0, 1.0, r; 1.0, 0.0, r]).unwrap();
        let target =
            EmulationTarget::new(dmatrix![0.0, 1.0; -1.0, -2.0], 0.01, Alphabet::PmOne, None)
                .unwrap();
        (plant, target)
    }

    fn gated(t: &EmulationTarget) -> EmulationTarget {
        EmulationTarget {
            alphabet: Alphabet::PmOneOrOff,
            ..t.clone()
        }
    }

    #[test]
    fn drift_free_discretization() {
        let plant =
            Plant::new(DMatrix::zeros(2, 2), dmatrix![0.0, 1.0, 1.0; 1.0, 0.0, 1.0]).unwrap();
        for order in [Order::Exact, Order::Euler] {
            let d = discretize(&plant, 0.1, order).unwrap();
            assert!((&d.f - DMatrix::identity(2, 2)).amax() < 1e-14);
            assert!((&d.g - plant.b() * 0.1).amax() < 1e-14);
        }
        assert!(discretize(&plant, 0.0, Order::Exact).is_err());
    }

    #[test]
    fn nilpotent_exact_step() {
        let plant = Plant::new(
            dmatrix![0.0, 1.0; 0.0, 0.0],
            dmatrix![0.0, 1.0, 1.0; 1.0, 0.0, 1.0],
        )
        .unwrap();
        let d = discretize(&plant, 0.1, Order::Exact).unwrap();
        assert!((&d.f - dmatrix![1.0, 0.1; 0.0, 1.0]).amax() < 1e-14);
        // ∫₀ʰ [[1, h−s],[0,1]] ds = [[h, h²/2],[0, h]]
        let want = dmatrix![0.1, 0.005; 0.0, 0.1] * plant.b();
        assert!((&d.g - want).amax() < 1e-14);
        // Euler F reproduces I + hA because B·Â₀ = A
        let e = discretize(&plant, 0.1, Order::Euler).unwrap();
        assert!((&e.f - dmatrix![1.0, 0.1; 0.0, 1.0]).amax() < 1e-14);
    }

    #[test]
    fn euler_error_is_second_order() {
        let plant = Plant::new(
            dmatrix![-0.3, 1.2; -0.7, 0.4],
            dmatrix![0.5, 1.0, -0.2; 1.0, 0.3, 0.8],
        )
        .unwrap();
        let x = dvector![0.7, -1.1];
        let u = dvector![1.0, -1.0, 1.0];
        let err = |h: f64| {
            let a = discretize(&plant, h, Order::Exact).unwrap();
            let b = discretize(&plant, h, Order::Euler).unwrap();
            (a.step(&x, &u) - b.step(&x, &u)).norm()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 4.0).abs() < 0.1, "ratio {ratio}");
        let ratio = err(0.01) / err(0.005);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn example4_tie_at_unit_x1() {
        let (plant, target) = example4();
        let s = select_input(&target, &plant, &dvector![1.0, 0.0]).unwrap();
        assert_eq!(s.u, vec![-1, -1, 1]);
        assert_eq!(s.tie_count, 2);
        let want = 2.0 - 2f64.sqrt(); // (1−1/√2)² + (1/√2)²·... = 2 − √2
        assert!(
            (s.residual.powi(2) - want).abs() < 1e-12,
            "{}",
            s.residual.powi(2)
        );
        assert_eq!(s.label(), "--+");

        let g = select_gated(&gated(&target), &plant, &dvector![1.0, 0.0]).unwrap();
        assert!(g.residual.powi(2) <= want + 1e-12);
    }

    #[test]
    fn origin_selection() {
        let (plant, target) = example4();
        let s = select_input(&target, &plant, &dvector![0.0, 0.0]).unwrap();
        assert_eq!(s.tie_count % 2, 0);
        let g = select_gated(&gated(&target), &plant, &dvector![0.0, 0.0]).unwrap();
        assert_eq!(g.u, vec![0, 0, 0]);
        assert_eq!(g.residual, 0.0);
        assert!(select_gated(&target, &plant, &dvector![0.0, 0.0]).is_err());
    }

    #[test]
    fn residual_grows_with_scale() {
        let (plant, target) = example4();
        let mut differs = false;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let x = dvector![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let near = select_input(&target, &plant, &(&x * 0.1)).unwrap();
            let far = select_input(&target, &plant, &(&x * 10.0)).unwrap();
            let mid = select_input(&target, &plant, &x).unwrap();
            assert!(far.residual > mid.residual);
            differs |= near.u != far.u;
        }
        assert!(differs);
    }

    /// Independent enumerator: counts in base 2 with channel 1 most
    /// significant and keeps the strict minimum.
    fn brute_force(
        h: &DMatrix<f64>,
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        x: &DVector<f64>,
    ) -> (Vec<i8>, f64) {
        let m = b.ncols();
        let mut best: Option<(Vec<i8>, f64)> = None;
        for code in 0u32..(1 << m) {
            let u: Vec<i8> = (0..m)
                .map(|j| if code >> (m - 1 - j) & 1 == 1 { 1 } else { -1 })
                .collect();
            let uf = DVector::from_iterator(m, u.iter().map(|&v| v as f64));
            let r = (h * x - (a * x + b * uf)).norm();
            if best.as_ref().is_none_or(|(_, rb)| r < *rb - 1e-12) {
                best = Some((u, r));
            }
        }
        best.unwrap()
    }

    #[test]
    fn selection_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut checked = 0;
        while checked < 100 {
            let n = 2;
            let m = rng.random_range(3..7);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let plant = Plant::new(a.clone(), b.clone()).unwrap();
            let target = EmulationTarget::new(
                dmatrix![-1.0, 0.5; -0.5, -1.0],
                0.01,
                Alphabet::PmOne,
                Some(vec![1.0; m]),
            )
            .unwrap();
            let x = dvector![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let got = select_input(&target, &plant, &x).unwrap();
            let (u, r) = brute_force(&target.h_matrix, &a, &b, &x);
            assert!((got.residual - r).abs() < 1e-12);
            if got.tie_count == 1 {
                assert_eq!(got.u, u);
            }
            checked += 1;
        }
    }

    #[test]
    fn gated_never_worse() {
        let (plant, target) = example4();
        let g = gated(&target);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let x = dvector![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let a = select_input(&target, &plant, &x).unwrap();
            let b = select_gated(&g, &plant, &x).unwrap();
            assert!(b.residual <= a.residual + 1e-12);
        }
    }

    #[test]
    fn capacity_guard() {
        let plant = Plant::new(DMatrix::zeros(2, 2), DMatrix::from_element(2, 21, 1.0)).unwrap();
        let target =
            EmulationTarget::new(-DMatrix::identity(2, 2), 0.01, Alphabet::PmOne, None).unwrap();
        assert!(matches!(
            select_input(&target, &plant, &dvector![1.0, 0.0]),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn target_validation() {
        assert!(
            EmulationTarget::new(DMatrix::identity(2, 2), 0.01, Alphabet::PmOne, None).is_err()
        );
        assert!(
            EmulationTarget::new(-DMatrix::identity(2, 2), 0.0, Alphabet::PmOne, None).is_err()
        );
        assert!(EmulationTarget::new(
            -DMatrix::identity(2, 2),
            0.1,
            Alphabet::PmOne,
            Some(vec![1.0, -1.0])
        )
        .is_err());
    }

    #[test]
    fn default_weights_normalize_columns() {
        let plant =
            Plant::new(DMatrix::zeros(2, 2), dmatrix![0.0, 2.0, 1.0; 3.0, 0.0, 1.0]).unwrap();
        let target =
            EmulationTarget::new(-DMatrix::identity(2, 2), 0.1, Alphabet::PmOne, None).unwrap();
        let b = target.effective_b(&plant).unwrap();
        for c in b.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn origin_chatter_stays_small() {
        let (plant, target) = example4();
        let traj = simulate_emulation(&target, &plant, &dvector![0.0, 0.0], 1000).unwrap();
        let bound = target.step * (1.0 + 2.0 / 2f64.sqrt()) * 2f64.sqrt();
        assert!(traj.norms().iter().all(|&r| r <= bound + 1e-15));
        assert_eq!(traj.states.len(), 1001);
        assert_eq!(traj.inputs.len(), 1000);
    }

    #[test]
    fn trajectory_heads_along_target_field() {
        let (plant, target) = example4();
        let traj = simulate_emulation(&target, &plant, &dvector![1.0, 1.0], 5000).unwrap();
        let r_cap = traj.terminal_radius(1000);
        let agreement = traj
            .direction_agreement(&target.h_matrix, r_cap * 1.05)
            .unwrap();
        assert!(agreement >= 0.9, "agreement {agreement}");
    }

    #[test]
    fn terminal_radius_does_not_grow_as_step_shrinks() {
        let (plant, target) = example4();
        let mut last = f64::INFINITY;
        for h in [0.02, 0.01, 0.005] {
            let t = EmulationTarget {
                step: h,
                ..target.clone()
            };
            let steps = (50.0 / h) as usize;
            let traj = simulate_emulation(&t, &plant, &dvector![1.0, 1.0], steps).unwrap();
            let r = traj.terminal_radius(steps / 5);
            assert!(r <= last, "h={h}: {r} > {last}");
            last = r;
        }
    }

    #[test]
    fn divergence_guard() {
        let plant = Plant::new(
            DMatrix::identity(2, 2) * 50.0,
            dmatrix![1.0, 0.0, 1.0; 0.0, 1.0, 1.0],
        )
        .unwrap();
        let target =
            EmulationTarget::new(-DMatrix::identity(2, 2), 0.1, Alphabet::PmOne, None).unwrap();
        assert!(matches!(
            simulate_emulation(&target, &plant, &dvector![1.0, 1.0], 1000),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn cell_map_properties() {
        let (plant, target) = example4();
        let grid = GridSpec::square(2.0, 41);
        let map = cell_map(&target, &plant, &grid).unwrap();
        assert!(map.distinct_labels().len() <= 8);
        let r = grid.resolution;
        let flip = |s: &str| -> String {
            s.chars()
                .map(|c| match c {
                    '-' => '+',
                    '+' => '-',
                    c => c,
                })
                .collect()
        };
        for j in 0..r {
            for i in 0..r {
                // x → −x, u → −u up to ties
                let k = j * r + i;
                let mirror = (r - 1 - j) * r + (r - 1 - i);
                assert!((map.residuals[k] - map.residuals[mirror]).abs() < 1e-12);
                let (x1, x2) = grid.node(i, j);
                let s = select_input(&target, &plant, &dvector![x1, x2]).unwrap();
                if s.tie_count == 1 {
                    assert_eq!(map.labels[mirror], flip(&map.labels[k]));
                }
            }
        }
        let csv = map.to_csv();
        assert!(csv.starts_with("x1,x2,label\n-2,-2,"));
        assert_eq!(csv.lines().count(), 41 * 41 + 1);

        let gated_map = cell_map(&gated(&target), &plant, &grid).unwrap();
        for (g, u) in gated_map.residuals.iter().zip(&map.residuals) {
            assert!(g <= &(u + 1e-12));
        }
    }

    #[test]
    fn cell_map_rejects_non_planar() {
        let plant = Plant::new(
            DMatrix::zeros(3, 3),
            DMatrix::<f64>::identity(3, 4).map(|v| v + 0.1),
        )
        .unwrap();
        let target =
            EmulationTarget::new(-DMatrix::identity(3, 3), 0.1, Alphabet::PmOne, None).unwrap();
        assert!(matches!(
            cell_map(&target, &plant, &GridSpec::square(1.0, 5)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn trajectory_csv_layout() {
        let (plant, target) = example4();
        let traj = simulate_emulation(&target, &plant, &dvector![1.0, 1.0], 2).unwrap();
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,x1,x2,u,residual");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].ends_with(",,"));
    }
}
