//! Candidate merging in (time, DM trial, width) space.
//!
//! Two candidates link when they are close on all three axes; clusters are
//! the transitive closure of that relation. [`link_reference`] checks every
//! pair. [`link_grid`] buckets candidates into cells as large as the
//! largest linking distance, so only neighbouring cells are compared, and
//! produces the same partition.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::detect::Candidate;

/// Linking distances on each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkRadii {
    /// Samples, multiplied by the wider member's boxcar width.
    pub sep_time: u64,
    pub sep_dm_trials: u32,
    /// Difference of width indices.
    pub sep_width: u32,
}

impl Default for LinkRadii {
    fn default() -> Self {
        Self { sep_time: 3, sep_dm_trials: 9, sep_width: 3 }
    }
}

/// One merged group and its strongest member.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub representative: Candidate,
    pub members: usize,
    /// Earliest `begin_sample` over the members.
    pub begin_sample: u64,
    /// Latest `end_sample` over the members.
    pub end_sample: u64,
    pub dm_min: f64,
    pub dm_max: f64,
    /// Indices into the input slice, ascending.
    pub member_ids: Vec<usize>,
}

pub fn linked(a: &Candidate, b: &Candidate, r: &LinkRadii) -> bool {
    let wmax = a.width_samples.max(b.width_samples) as u64;
    a.peak_sample.abs_diff(b.peak_sample) <= r.sep_time * wmax
        && a.dm_trial.abs_diff(b.dm_trial) <= r.sep_dm_trials
        && a.width_index.abs_diff(b.width_index) <= r.sep_width
}

/// Total order used to pick representatives: higher S/N first, then earlier
/// peak, lower trial, narrower width.
pub fn strength_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.snr
        .total_cmp(&a.snr)
        .then(a.peak_sample.cmp(&b.peak_sample))
        .then(a.dm_trial.cmp(&b.dm_trial))
        .then(a.width_index.cmp(&b.width_index))
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

fn collect_clusters(cands: &[Candidate], sets: &mut DisjointSet) -> Vec<ClusterResult> {
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..cands.len() {
        groups.entry(sets.find(i)).or_default().push(i);
    }
    let mut out: Vec<ClusterResult> = groups
        .into_values()
        .map(|ids| {
            let best = ids.iter().copied().min_by(|&a, &b| strength_order(&cands[a], &cands[b])).unwrap();
            let rep = cands[best].clone();
            let members = ids.iter().map(|&i| &cands[i]);
            let begin = members.clone().map(|c| c.begin_sample).min().unwrap();
            let end = members.clone().map(|c| c.end_sample).max().unwrap();
            let dm_min = members.clone().map(|c| c.dm).fold(f64::INFINITY, f64::min);
            let dm_max = members.map(|c| c.dm).fold(f64::NEG_INFINITY, f64::max);
            ClusterResult {
                representative: rep,
                members: ids.len(),
                begin_sample: begin,
                end_sample: end,
                dm_min,
                dm_max,
                member_ids: ids,
            }
        })
        .collect();
    sort_clusters(&mut out);
    out
}

/// Orders clusters by representative (peak sample, DM trial, width index).
pub fn sort_clusters(clusters: &mut [ClusterResult]) {
    clusters.sort_by(|a, b| {
        let (x, y) = (&a.representative, &b.representative);
        x.peak_sample
            .cmp(&y.peak_sample)
            .then(x.dm_trial.cmp(&y.dm_trial))
            .then(x.width_index.cmp(&y.width_index))
            .then(strength_order(x, y))
    });
}

/// All-pairs clustering.
pub fn link_reference(cands: &[Candidate], radii: &LinkRadii) -> Vec<ClusterResult> {
    let mut sets = DisjointSet::new(cands.len());
    for i in 0..cands.len() {
        for j in i + 1..cands.len() {
            if linked(&cands[i], &cands[j], radii) {
                sets.union(i, j);
            }
        }
    }
    collect_clusters(cands, &mut sets)
}

/// Grid-bucketed clustering; same partition as [`link_reference`].
pub fn link_grid(cands: &[Candidate], radii: &LinkRadii) -> Vec<ClusterResult> {
    if cands.is_empty() {
        return Vec::new();
    }
    let wmax = cands.iter().map(|c| c.width_samples as u64).max().unwrap_or(1);
    let cell_t = (radii.sep_time * wmax).max(1);
    let cell_d = (radii.sep_dm_trials as u64).max(1);
    let cell_w = (radii.sep_width as u64).max(1);
    let key = |c: &Candidate| (c.peak_sample / cell_t, c.dm_trial as u64 / cell_d, c.width_index as u64 / cell_w);

    let mut cells: HashMap<(u64, u64, u64), Vec<usize>> = HashMap::new();
    for (i, c) in cands.iter().enumerate() {
        cells.entry(key(c)).or_default().push(i);
    }
    let mut sets = DisjointSet::new(cands.len());
    for (&(kt, kd, kw), members) in &cells {
        // Visit each unordered pair of neighbouring cells once: the cell
        // itself, then only "forward" neighbours.
        for dt in -1i64..=1 {
            for dd in -1i64..=1 {
                for dw in -1i64..=1 {
                    if (dt, dd, dw) < (0, 0, 0) {
                        continue;
                    }
                    let nk = (kt as i64 + dt, kd as i64 + dd, kw as i64 + dw);
                    if nk.0 < 0 || nk.1 < 0 || nk.2 < 0 {
                        continue;
                    }
                    let nk = (nk.0 as u64, nk.1 as u64, nk.2 as u64);
                    let Some(other) = cells.get(&nk) else { continue };
                    let same = (dt, dd, dw) == (0, 0, 0);
                    for (a, &i) in members.iter().enumerate() {
                        let rest = if same { &other[a + 1..] } else { &other[..] };
                        for &j in rest {
                            if linked(&cands[i], &cands[j], radii) {
                                sets.union(i, j);
                            }
                        }
                    }
                }
            }
        }
    }
    collect_clusters(cands, &mut sets)
}
