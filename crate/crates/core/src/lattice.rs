//! Channel index sets, their projections, and controllability over the
//! lattice of channel dropouts.

use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::Plant;
use crate::numerics;

/// Upper bound on the number of subsets any enumeration may produce.
pub const MAX_SUBSETS: u128 = 1 << 20;

/// A subset of the `m` input channels.
///
/// Indices are stored zero-based; [`fmt::Display`] and
/// [`ChannelSet::one_based`] use the one-based labels `1..=m`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ChannelSetRepr", into = "ChannelSetRepr")]
pub struct ChannelSet {
    m: usize,
    indices: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ChannelSetRepr {
    m: usize,
    /// One-based channel labels.
    channels: Vec<usize>,
}

impl TryFrom<ChannelSetRepr> for ChannelSet {
    type Error = Error;

    fn try_from(r: ChannelSetRepr) -> Result<Self> {
        ChannelSet::from_one_based(r.m, &r.channels)
    }
}

impl From<ChannelSet> for ChannelSetRepr {
    fn from(s: ChannelSet) -> Self {
        ChannelSetRepr {
            m: s.m,
            channels: s.one_based(),
        }
    }
}

impl ChannelSet {
    /// Builds a set from zero-based indices. Duplicates and indices `>= m`
    /// are rejected.
    pub fn new(m: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut indices: Vec<usize> = indices.into_iter().collect();
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain(format!(
                "channel set has duplicate indices: {indices:?}"
            )));
        }
        if let Some(&last) = indices.last() {
            if last >= m {
                return Err(Error::Domain(format!(
                    "channel index {} out of range 1..={m}",
                    last + 1
                )));
            }
        }
        Ok(ChannelSet { m, indices })
    }

    /// Builds a set from one-based labels as used in reports and configs.
    pub fn from_one_based(m: usize, labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::Domain("channel labels are one-based; got 0".into()));
        }
        Self::new(m, labels.iter().map(|&l| l - 1))
    }

    pub fn full(m: usize) -> Self {
        ChannelSet {
            m,
            indices: (0..m).collect(),
        }
    }

    pub fn empty(m: usize) -> Self {
        ChannelSet {
            m,
            indices: Vec::new(),
        }
    }

    /// Set of channels flagged `true`.
    pub fn from_mask(mask: &[bool]) -> Self {
        ChannelSet {
            m: mask.len(),
            indices: mask
                .iter()
                .enumerate()
                .filter_map(|(i, &on)| on.then_some(i))
                .collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Zero-based indices, strictly increasing.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn is_subset_of(&self, other: &ChannelSet) -> bool {
        self.m == other.m && self.indices.iter().all(|&i| other.contains(i))
    }

    /// Channel `j` as a `0/1` string, channel 1 first (e.g. `"101"`).
    pub fn mask_string(&self) -> String {
        (0..self.m)
            .map(|i| if self.contains(i) { '1' } else { '0' })
            .collect()
    }

    /// The diagonal `m × m` projection `P_I`.
    pub fn projection_matrix(&self) -> DMatrix<f64> {
        projection_matrix(self)
    }
}

impl fmt::Display for ChannelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.indices.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Diagonal 0/1 matrix selecting the channels in `set`.
pub fn projection_matrix(set: &ChannelSet) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(set.m(), set.m());
    for &i in set.indices() {
        p[(i, i)] = 1.0;
    }
    p
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

fn check_capacity(context: &'static str, requested: u128) -> Result<()> {
    if requested > MAX_SUBSETS {
        return Err(Error::Capacity {
            context,
            requested,
            limit: MAX_SUBSETS,
        });
    }
    Ok(())
}

/// Every subset of `{1..m}` with cardinality in `k_min..=k_max`, ordered by
/// cardinality and then lexicographically.
pub fn enumerate_subsets(m: usize, k_min: usize, k_max: usize) -> Result<Vec<ChannelSet>> {
    if k_min > k_max || k_max > m {
        return Err(Error::Domain(format!(
            "need 0 <= k_min <= k_max <= m, got k_min={k_min} k_max={k_max} m={m}"
        )));
    }
    let total: u128 = (k_min..=k_max).map(|k| binomial(m, k)).sum();
    check_capacity("enumerate_subsets", total)?;

    let mut out = Vec::with_capacity(total as usize);
    for k in k_min..=k_max {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            out.push(ChannelSet {
                m,
                indices: combo.clone(),
            });
            // advance to the next k-combination in lexicographic order
            let Some(pos) = (0..k).rev().find(|&i| combo[i] < m - k + i) else {
                break;
            };
            combo[pos] += 1;
            for i in pos + 1..k {
                combo[i] = combo[i - 1] + 1;
            }
        }
    }
    Ok(out)
}

/// The lattice of index supersets of `root`, in enumeration order.
pub fn supersets(root: &ChannelSet) -> Result<Vec<ChannelSet>> {
    let free: Vec<usize> = (0..root.m()).filter(|&i| !root.contains(i)).collect();
    check_capacity("supersets", 1u128 << free.len().min(127))?;
    let mut out: Vec<ChannelSet> = enumerate_subsets(free.len(), 0, free.len())?
        .into_iter()
        .map(|extra| {
            let indices = root
                .indices()
                .iter()
                .copied()
                .chain(extra.indices().iter().map(|&k| free[k]));
            ChannelSet::new(root.m(), indices).expect("disjoint union of valid sets")
        })
        .collect();
    out.sort_by(|a, b| {
        a.len()
            .cmp(&b.len())
            .then_with(|| a.indices().cmp(b.indices()))
    });
    Ok(out)
}

/// One row of a [`LatticeReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubsetRecord {
    pub set: ChannelSet,
    pub controllable: bool,
    /// Smallest singular value of the finite-horizon Gramian, when computed.
    pub gramian_min_singular_value: Option<f64>,
    /// Largest closed-loop eigenvalue real part, when a gain was scanned.
    pub hurwitz_margin: Option<f64>,
}

impl SubsetRecord {
    pub fn is_hurwitz(&self) -> Option<bool> {
        self.hurwitz_margin.map(numerics::is_hurwitz_margin)
    }
}

/// Per-cardinality counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CardinalitySummary {
    pub cardinality: usize,
    pub total: usize,
    pub controllable: usize,
    pub hurwitz: Option<usize>,
}

/// Classification of a family of channel subsets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeReport {
    pub records: Vec<SubsetRecord>,
    pub summary: Vec<CardinalitySummary>,
}

impl LatticeReport {
    pub fn from_records(records: Vec<SubsetRecord>) -> Self {
        let mut summary: Vec<CardinalitySummary> = Vec::new();
        for r in &records {
            let k = r.set.len();
            let idx = match summary.iter().position(|s| s.cardinality == k) {
                Some(i) => i,
                None => {
                    summary.push(CardinalitySummary {
                        cardinality: k,
                        total: 0,
                        controllable: 0,
                        hurwitz: None,
                    });
                    summary.len() - 1
                }
            };
            let s = &mut summary[idx];
            s.total += 1;
            s.controllable += usize::from(r.controllable);
            if let Some(h) = r.is_hurwitz() {
                *s.hurwitz.get_or_insert(0) += usize::from(h);
            }
        }
        summary.sort_by_key(|s| s.cardinality);
        LatticeReport { records, summary }
    }

    pub fn record(&self, set: &ChannelSet) -> Option<&SubsetRecord> {
        self.records.iter().find(|r| &r.set == set)
    }

    /// Records whose scanned gain is not Hurwitz.
    pub fn failures(&self) -> Vec<&SubsetRecord> {
        self.records
            .iter()
            .filter(|r| r.is_hurwitz() == Some(false))
            .collect()
    }

    /// CSV with columns `indices, cardinality, controllable,
    /// gramian_min_singular_value`, plus `hurwitz_margin` when any record
    /// carries one.
    pub fn to_csv(&self) -> String {
        let with_margin = self.records.iter().any(|r| r.hurwitz_margin.is_some());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "indices",
            "cardinality",
            "controllable",
            "gramian_min_singular_value",
        ];
        if with_margin {
            header.push("hurwitz_margin");
        }
        w.write_record(&header).expect("in-memory write");
        for r in &self.records {
            let mut row = vec![
                r.set.to_string(),
                r.set.len().to_string(),
                r.controllable.to_string(),
                r.gramian_min_singular_value
                    .map(|v| format!("{v:e}"))
                    .unwrap_or_default(),
            ];
            if with_margin {
                row.push(
                    r.hurwitz_margin
                        .map(|v| format!("{v:e}"))
                        .unwrap_or_default(),
                );
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

/// Classifies every channel subset as controllable or not.
///
/// The decision uses the rank of the controllability matrix of `(A, B·P_I)`;
/// the smallest singular value of the horizon-`horizon` Gramian is recorded
/// alongside as a cross-check.
pub fn classify_controllability(plant: &Plant, horizon: f64) -> Result<LatticeReport> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let subsets = enumerate_subsets(plant.m(), 0, plant.m())?;
    let n = plant.n();
    let records = subsets
        .into_par_iter()
        .map(|set| {
            let bp = numerics::restrict_columns(plant.b(), &set);
            let controllable = numerics::ctrb_rank(plant.a(), &bp)? == n;
            let w = numerics::gramian(plant.a(), plant.b(), &set, horizon)?;
            Ok(SubsetRecord {
                set,
                controllable,
                gramian_min_singular_value: Some(numerics::min_singular_value(&w)),
                hurwitz_margin: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LatticeReport::from_records(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn example1() -> Plant {
        Plant::new(
            dmatrix![0.0, 1.0; 0.0, 0.0],
            dmatrix![0.0, 1.0, 1.0; 1.0, 0.0, 1.0],
        )
        .unwrap()
    }

    fn set(m: usize, labels: &[usize]) -> ChannelSet {
        ChannelSet::from_one_based(m, labels).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(
            set(3, &[1, 2]).projection_matrix(),
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 1.0, 0.0]))
        );
        assert_eq!(
            ChannelSet::full(4).projection_matrix(),
            DMatrix::identity(4, 4)
        );
        assert_eq!(
            ChannelSet::empty(3).projection_matrix(),
            DMatrix::zeros(3, 3)
        );
        let p = set(5, &[2, 5]).projection_matrix();
        assert_eq!(&p * &p, p);
    }

    #[test]
    fn channel_set_validation() {
        assert!(ChannelSet::from_one_based(3, &[4]).is_err());
        assert!(ChannelSet::from_one_based(3, &[0]).is_err());
        assert!(ChannelSet::from_one_based(3, &[2, 2]).is_err());
        let s = ChannelSet::from_one_based(3, &[3, 1]).unwrap();
        assert_eq!(s.one_based(), vec![1, 3]);
        assert_eq!(s.to_string(), "{1,3}");
        assert_eq!(s.mask_string(), "101");
        assert_eq!(ChannelSet::empty(2).to_string(), "{}");
    }

    #[test]
    fn channel_set_json_uses_one_based_labels() {
        let s = set(4, &[2, 4]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"m":4,"channels":[2,4]}"#);
        let back: ChannelSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<ChannelSet>(r#"{"m":2,"channels":[3]}"#).is_err());
    }

    #[test]
    fn enumeration_examples() {
        let two = enumerate_subsets(3, 2, 2).unwrap();
        let labels: Vec<Vec<usize>> = two.iter().map(|s| s.one_based()).collect();
        assert_eq!(labels, vec![vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(enumerate_subsets(3, 0, 3).unwrap().len(), 8);
        assert_eq!(enumerate_subsets(5, 2, 3).unwrap().len(), 20);
        assert_eq!(
            enumerate_subsets(0, 0, 0).unwrap(),
            vec![ChannelSet::empty(0)]
        );
        assert!(matches!(enumerate_subsets(3, 2, 1), Err(Error::Domain(_))));
        assert!(matches!(
            enumerate_subsets(21, 0, 21),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn enumeration_is_ordered_by_cardinality_then_lex() {
        let all = enumerate_subsets(5, 0, 5).unwrap();
        for w in all.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            assert!(a.len() < b.len() || (a.len() == b.len() && a.indices() < b.indices()));
        }
    }

    #[test]
    fn supersets_of_a_singleton() {
        let ups = supersets(&set(3, &[2])).unwrap();
        let labels: Vec<String> = ups.iter().map(|s| s.to_string()).collect();
        assert_eq!(labels, vec!["{2}", "{1,2}", "{2,3}", "{1,2,3}"]);
    }

    #[test]
    fn example1_classification() {
        let report = classify_controllability(&example1(), 1.0).unwrap();
        assert_eq!(report.records.len(), 8);
        let expect = [
            (vec![], false),
            (vec![1], true),
            (vec![2], false),
            (vec![3], true),
            (vec![1, 2], true),
            (vec![1, 3], true),
            (vec![2, 3], true),
            (vec![1, 2, 3], true),
        ];
        for (labels, want) in expect {
            let r = report.record(&set(3, &labels)).unwrap();
            assert_eq!(r.controllable, want, "{}", r.set);
            // Gramian cross-check agrees with the rank decision.
            let smin = r.gramian_min_singular_value.unwrap();
            assert_eq!(smin > 1e-9, want, "{} smin {smin}", r.set);
        }
        let counts: Vec<(usize, usize, usize)> = report
            .summary
            .iter()
            .map(|s| (s.cardinality, s.total, s.controllable))
            .collect();
        assert_eq!(counts, vec![(0, 1, 0), (1, 3, 2), (2, 3, 3), (3, 1, 1)]);
    }

    #[test]
    fn identity_input_classification() {
        let plant = Plant::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let report = classify_controllability(&plant, 1.0).unwrap();
        for r in &report.records {
            assert_eq!(r.controllable, r.set.len() == 2, "{}", r.set);
        }
    }

    #[test]
    fn csv_layout() {
        let report = classify_controllability(&example1(), 1.0).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "indices,cardinality,controllable,gramian_min_singular_value"
        );
        assert!(lines.next().unwrap().starts_with("{},0,false,"));
        assert!(lines.next().unwrap().starts_with("{1},1,true,"));
        assert!(csv.contains("\"{1,2}\",2,true,"));
    }
}
