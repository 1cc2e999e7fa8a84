//! Power-changing slots of each base station and the merged interval
//! partition they induce.
//!
//! Boundaries are slot counts: a boundary `b` closes the interval that ends
//! after slot `b` (1-based), so the last boundary always equals `N`.

use serde::Serialize;

use crate::model::EnergyProfile;
use crate::{Error, Result};

/// Relative tolerance when comparing running averages for ties.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalPartition {
    /// Strictly increasing interval end points, last one equal to `N`.
    pub boundaries: Vec<usize>,
    /// Changing slots detected for every BS before merging.
    pub per_bs_changing_slots: Vec<Vec<usize>>,
}

impl IntervalPartition {
    /// Single-slot intervals.
    pub fn per_slot(num_slots: usize, num_bs: usize) -> Self {
        IntervalPartition {
            boundaries: (1..=num_slots).collect(),
            per_bs_changing_slots: vec![vec![num_slots]; num_bs],
        }
    }

    pub fn num_intervals(&self) -> usize {
        self.boundaries.len()
    }

    pub fn num_slots(&self) -> usize {
        self.boundaries.last().copied().unwrap_or(0)
    }

    /// I_m = n_m − n_{m−1}.
    pub fn lengths(&self) -> Vec<usize> {
        let mut prev = 0;
        self.boundaries
            .iter()
            .map(|&b| {
                let len = b - prev;
                prev = b;
                len
            })
            .collect()
    }

    /// Zero-based slot range of interval `m`.
    pub fn slots(&self, m: usize) -> std::ops::Range<usize> {
        let start = if m == 0 { 0 } else { self.boundaries[m - 1] };
        start..self.boundaries[m]
    }

    /// Index of the interval containing zero-based `slot`.
    pub fn interval_of(&self, slot: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= slot)
    }

    /// Adds a boundary after `slots` slots; no-op if already present.
    pub fn split_at(&mut self, slots: usize) {
        if slots == 0 || slots >= self.num_slots() {
            return;
        }
        if let Err(pos) = self.boundaries.binary_search(&slots) {
            self.boundaries.insert(pos, slots);
        }
    }
}

/// Per-BS power-changing slots: repeatedly take the end point that minimizes
/// the running average harvest since the previous end point.
///
/// Returns `(boundary, level)` pairs; the level is the constant per-slot power
/// over the segment ending at that boundary. Ties resolve to the largest end
/// point.
pub fn changing_slots(e: &[f64]) -> Result<Vec<(usize, f64)>> {
    if e.is_empty() {
        return Err(Error::InvalidParameter("empty energy vector".into()));
    }
    if e.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter("negative harvested energy".into()));
    }
    let n = e.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let mut sum = 0.0;
        let mut best = (start + 1, f64::INFINITY);
        for end in start + 1..=n {
            sum += e[end - 1];
            let avg = sum / (end - start) as f64;
            if avg <= best.1 + TIE_TOL * best.1.abs().min(avg.abs()) || best.1.is_infinite() {
                best = (end, avg);
            }
        }
        out.push(best);
        start = best.0;
    }
    Ok(out)
}

/// Union of the per-BS boundary lists, sorted and deduplicated.
pub fn merge(per_bs: &[Vec<usize>], num_slots: usize) -> Result<IntervalPartition> {
    for list in per_bs {
        if list.last() != Some(&num_slots) {
            return Err(Error::InvalidParameter(format!(
                "changing-slot list must end at {num_slots}"
            )));
        }
    }
    let mut boundaries: Vec<usize> = per_bs.iter().flatten().copied().collect();
    boundaries.sort_unstable();
    boundaries.dedup();
    Ok(IntervalPartition {
        boundaries,
        per_bs_changing_slots: per_bs.to_vec(),
    })
}

/// Merged partition for a whole energy profile.
pub fn partition(profile: &EnergyProfile) -> IntervalPartition {
    let per_bs: Vec<Vec<usize>> = profile
        .rows()
        .iter()
        .map(|row| {
            changing_slots(row)
                .expect("profile rows are nonempty and nonnegative")
                .into_iter()
                .map(|(b, _)| b)
                .collect()
        })
        .collect();
    merge(&per_bs, profile.num_slots()).expect("every list ends at N")
}

/// Per-slot power levels of the single-link directional water-filling
/// solution for harvest vector `e`.
pub fn dwt_levels(e: &[f64]) -> Result<Vec<f64>> {
    let mut levels = Vec::with_capacity(e.len());
    let mut start = 0;
    for (end, level) in changing_slots(e)? {
        levels.extend(std::iter::repeat_n(level, end - start));
        start = end;
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn running_average_examples() {
        let a = changing_slots(&[1.0, 5.0, 3.0]).unwrap();
        assert_eq!(a.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 3]);
        assert_relative_eq!(a[0].1, 1.0);
        assert_relative_eq!(a[1].1, 4.0);

        let b = changing_slots(&[5.0, 1.0]).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].0, 2);
        assert_relative_eq!(b[0].1, 3.0);

        let c = changing_slots(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(c, vec![(3, 3.0)]);
    }

    #[test]
    fn zero_head_segments() {
        let a = changing_slots(&[0.0, 0.0, 6.0, 1.0]).unwrap();
        assert_eq!(a[0], (2, 0.0));
        assert_eq!(a[1].0, 4);
        assert_relative_eq!(a[1].1, 3.5);
    }

    #[test]
    fn empty_and_negative_inputs() {
        assert!(changing_slots(&[]).is_err());
        assert!(changing_slots(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn merge_examples() {
        let p = merge(&[vec![2, 5], vec![3, 5]], 5).unwrap();
        assert_eq!(p.boundaries, vec![2, 3, 5]);
        assert_eq!(p.lengths(), vec![2, 1, 2]);
        let q = merge(&[vec![1, 4], vec![1, 4]], 4).unwrap();
        assert_eq!(q.boundaries, vec![1, 4]);
        assert!(merge(&[vec![1, 3]], 4).is_err());
    }

    #[test]
    fn interval_lookup_and_split() {
        let mut p = merge(&[vec![2, 5]], 5).unwrap();
        assert_eq!(p.interval_of(0), 0);
        assert_eq!(p.interval_of(1), 0);
        assert_eq!(p.interval_of(2), 1);
        assert_eq!(p.slots(1), 2..5);
        p.split_at(4);
        assert_eq!(p.boundaries, vec![2, 4, 5]);
        p.split_at(4);
        p.split_at(5);
        assert_eq!(p.boundaries, vec![2, 4, 5]);
    }

    proptest! {
        #[test]
        fn levels_increase_and_respect_harvest(e in prop::collection::vec(0.0f64..10.0, 1..25)) {
            let segs = changing_slots(&e).unwrap();
            prop_assert_eq!(segs.last().unwrap().0, e.len());
            for w in segs.windows(2) {
                prop_assert!(w[1].0 > w[0].0);
                prop_assert!(w[1].1 > w[0].1);
            }
            let levels = dwt_levels(&e).unwrap();
            let (mut used, mut got) = (0.0, 0.0);
            for (x, p) in e.iter().zip(&levels) {
                used += p;
                got += x;
                prop_assert!(used <= got + 1e-9);
            }
            prop_assert!((used - got).abs() < 1e-9 * got.max(1.0));
        }

        #[test]
        fn merged_partition_contains_every_bs_boundary(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 12), 3)
        ) {
            let prof = EnergyProfile::new(rows).unwrap();
            let p = partition(&prof);
            prop_assert_eq!(p.lengths().iter().sum::<usize>(), 12);
            for w in p.boundaries.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
            for list in &p.per_bs_changing_slots {
                for b in list {
                    prop_assert!(p.boundaries.contains(b));
                }
            }
        }
    }
}
