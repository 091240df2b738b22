//! Dirichlet-process mixture sampler with P independent lanes.
//!
//! Each lane runs a collapsed Gibbs sweep over the points it owns,
//! seating them under a restaurant process with concentration alpha/P.
//! A global Metropolis step then proposes reassigning whole clusters to
//! uniformly chosen lanes; because cluster contents never change in
//! that move, the accept ratio reduces to factorials of the
//! per-processor cluster-size histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::PointSet;
use crate::error::{Error, Result};
use crate::model::{predictive_log_density, ClusterStat, GaussModel};
use crate::partition::{
    ewens_log_prob, polya_log_prob, Partition, ProcessorCounts, SizeHistogram,
};
use crate::rng::RngStream;

const LANE_SHIFT: u32 = 40;

fn make_cluster_id(lane: usize, serial: u64) -> u64 {
    debug_assert!(serial < (1 << LANE_SHIFT));
    ((lane as u64) << LANE_SHIFT) | serial
}

/// How the global step scores a proposed cluster-to-processor layout.
/// `Histogram` uses the size-histogram factorial ratio; `AlwaysAccept`
/// treats every layout as equally likely (the labeled-state reading,
/// kept as a diagnostic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatioMode {
    #[serde(rename = "paper")]
    Histogram,
    #[serde(rename = "always-accept")]
    AlwaysAccept,
}

impl Default for RatioMode {
    fn default() -> Self {
        RatioMode::Histogram
    }
}

/// One processor's share of the mixture: the points it owns (sorted by
/// point index) and the live clusters those points form.
#[derive(Debug, Clone)]
pub struct DpLane {
    lane_id: usize,
    owned: Vec<(usize, u64)>,
    clusters: BTreeMap<u64, ClusterStat>,
    next_serial: u64,
}

impl DpLane {
    fn new(lane_id: usize) -> Self {
        DpLane {
            lane_id,
            owned: Vec::new(),
            clusters: BTreeMap::new(),
            next_serial: 0,
        }
    }

    pub fn num_points(&self) -> usize {
        self.owned.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Cluster sizes in ascending cluster-id order.
    pub fn cluster_sizes(&self) -> Vec<u64> {
        self.clusters.values().map(|s| s.n).collect()
    }

    /// Resample every owned point once, in point-index order: unseat,
    /// weigh each live cluster by its size times its posterior
    /// predictive, weigh a fresh cluster by alpha/P times the prior
    /// predictive, then reseat. Returns how many points changed
    /// cluster. Touches nothing outside this lane.
    pub fn sweep(
        &mut self,
        data: &PointSet,
        model: &GaussModel,
        alpha_over_p: f64,
        stream: &mut RngStream,
    ) -> usize {
        let empty = ClusterStat::empty(data.dims());
        let log_new = alpha_over_p.ln();
        let mut ids: Vec<u64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        let mut moved = 0;
        for idx in 0..self.owned.len() {
            let (point, old_id) = self.owned[idx];
            let x = data.point(point);
            let emptied = {
                let stat = self
                    .clusters
                    .get_mut(&old_id)
                    .expect("owned point's cluster must be live");
                stat.remove(x)
            };
            if emptied {
                self.clusters.remove(&old_id);
            }
            ids.clear();
            weights.clear();
            for (&cid, stat) in &self.clusters {
                ids.push(cid);
                weights.push((stat.n as f64).ln() + predictive_log_density(model, stat, x));
            }
            weights.push(log_new + predictive_log_density(model, &empty, x));
            let choice = stream
                .categorical_log(&weights)
                .expect("seating weights contain a finite entry");
            let new_id = if choice < ids.len() {
                let cid = ids[choice];
                self.clusters
                    .get_mut(&cid)
                    .expect("chosen cluster is live")
                    .add(x);
                cid
            } else {
                let cid = make_cluster_id(self.lane_id, self.next_serial);
                self.next_serial += 1;
                self.clusters.insert(cid, ClusterStat::singleton(x));
                cid
            };
            self.owned[idx].1 = new_id;
            if new_id != old_id {
                moved += 1;
            }
        }
        moved
    }
}

/// Log accept ratio for a proposed processor layout: the difference of
/// log factorials of histogram entries, evaluated only where the two
/// histograms disagree.
pub fn dp_accept_log_ratio(cur: &SizeHistogram, prop: &SizeHistogram) -> Result<f64> {
    if cur.num_processors() != prop.num_processors() {
        return Err(Error::domain(format!(
            "histogram processor counts differ: {} vs {}",
            cur.num_processors(),
            prop.num_processors()
        )));
    }
    let mut cur_sizes: BTreeMap<u64, u64> = BTreeMap::new();
    let mut prop_sizes: BTreeMap<u64, u64> = BTreeMap::new();
    for j in 0..cur.num_processors() {
        for (&size, &count) in cur.processor(j) {
            *cur_sizes.entry(size).or_insert(0) += count;
        }
        for (&size, &count) in prop.processor(j) {
            *prop_sizes.entry(size).or_insert(0) += count;
        }
    }
    if cur_sizes != prop_sizes {
        return Err(Error::domain(
            "histograms describe different cluster-size multisets".to_string(),
        ));
    }
    let mut log_r = 0.0;
    for j in 0..cur.num_processors() {
        let a = cur.processor(j);
        let b = prop.processor(j);
        for (&size, &count) in a {
            let other = b.get(&size).copied().unwrap_or(0);
            if count != other {
                log_r += crate::rng::log_factorial(count) - crate::rng::log_factorial(other);
            }
        }
        for (&size, &count) in b {
            if !a.contains_key(&size) && count != 0 {
                log_r -= crate::rng::log_factorial(count);
            }
        }
    }
    Ok(log_r)
}

/// Serializable image of a DpState, used by checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpSnapshot {
    pub alpha: f64,
    pub model: GaussModel,
    pub ratio_mode: RatioMode,
    pub max_move_clusters: Option<usize>,
    pub num_processors: usize,
    pub processor: Vec<u32>,
    pub cluster: Vec<u64>,
    pub next_serials: Vec<u64>,
}

/// Full mixture state: P lanes, concentration, observation model, and
/// the global-step policy knobs.
#[derive(Debug, Clone)]
pub struct DpState {
    lanes: Vec<DpLane>,
    alpha: f64,
    model: GaussModel,
    ratio_mode: RatioMode,
    max_move_clusters: Option<usize>,
}

impl DpState {
    /// Build from an initial partition with an explicit cluster-to-lane
    /// placement.
    pub fn with_layout(
        data: &PointSet,
        alpha: f64,
        model: GaussModel,
        p: usize,
        init: &Partition,
        lane_of_cluster: &[usize],
        ratio_mode: RatioMode,
        max_move_clusters: Option<usize>,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::domain("need at least one processor"));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!(
                "concentration must be positive, got {alpha}"
            )));
        }
        if init.len() != data.len() {
            return Err(Error::domain(format!(
                "initial partition covers {} points, data has {}",
                init.len(),
                data.len()
            )));
        }
        if lane_of_cluster.len() != init.num_clusters() {
            return Err(Error::domain(format!(
                "lane placement covers {} clusters, partition has {}",
                lane_of_cluster.len(),
                init.num_clusters()
            )));
        }
        if let Some(&bad) = lane_of_cluster.iter().find(|&&l| l >= p) {
            return Err(Error::domain(format!(
                "lane {bad} out of range for {p} processors"
            )));
        }
        let mut lanes: Vec<DpLane> = (0..p).map(DpLane::new).collect();
        let mut ids = Vec::with_capacity(init.num_clusters());
        for &l in lane_of_cluster {
            let id = make_cluster_id(l, lanes[l].next_serial);
            lanes[l].next_serial += 1;
            ids.push(id);
        }
        for (i, &c) in init.assignments().iter().enumerate() {
            let l = lane_of_cluster[c];
            let lane = &mut lanes[l];
            lane.owned.push((i, ids[c]));
            lane.clusters
                .entry(ids[c])
                .or_insert_with(|| ClusterStat::empty(data.dims()))
                .add(data.point(i));
        }
        Ok(DpState {
            lanes,
            alpha,
            model,
            ratio_mode,
            max_move_clusters,
        })
    }

    /// Build from an initial partition, placing cluster c on lane c mod P.
    pub fn new(
        data: &PointSet,
        alpha: f64,
        model: GaussModel,
        p: usize,
        init: &Partition,
        ratio_mode: RatioMode,
        max_move_clusters: Option<usize>,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::domain("need at least one processor"));
        }
        let lanes: Vec<usize> = (0..init.num_clusters()).map(|c| c % p).collect();
        DpState::with_layout(
            data,
            alpha,
            model,
            p,
            init,
            &lanes,
            ratio_mode,
            max_move_clusters,
        )
    }

    pub fn num_processors(&self) -> usize {
        self.lanes.len()
    }

    pub fn num_points(&self) -> usize {
        self.lanes.iter().map(|l| l.owned.len()).sum()
    }

    pub fn num_clusters(&self) -> usize {
        self.lanes.iter().map(|l| l.clusters.len()).sum()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn model(&self) -> GaussModel {
        self.model
    }

    pub fn alpha_over_p(&self) -> f64 {
        self.alpha / self.lanes.len() as f64
    }

    pub fn ratio_mode(&self) -> RatioMode {
        self.ratio_mode
    }

    /// Mutable lane access for the parallel local phase. Lanes may be
    /// swept concurrently; each touches only its own state.
    pub fn lanes_mut(&mut self) -> &mut [DpLane] {
        &mut self.lanes
    }

    pub fn n_per_proc(&self) -> Vec<u64> {
        self.lanes.iter().map(|l| l.owned.len() as u64).collect()
    }

    /// Raw cluster id per point.
    pub fn assignments(&self) -> Vec<u64> {
        let n = self.num_points();
        let mut z = vec![0u64; n];
        for lane in &self.lanes {
            for &(pt, cid) in &lane.owned {
                z[pt] = cid;
            }
        }
        z
    }

    /// Processor id per point.
    pub fn processor_of(&self) -> Vec<u32> {
        let n = self.num_points();
        let mut pi = vec![0u32; n];
        for lane in &self.lanes {
            for &(pt, _) in &lane.owned {
                pi[pt] = lane.lane_id as u32;
            }
        }
        pi
    }

    /// The clustering with ids relabeled densely.
    pub fn dense_partition(&self) -> Partition {
        let labels: Vec<i64> = self.assignments().iter().map(|&c| c as i64).collect();
        Partition::from_labels(&labels)
    }

    pub fn size_histogram(&self) -> SizeHistogram {
        let sizes: Vec<Vec<u64>> = self.lanes.iter().map(|l| l.cluster_sizes()).collect();
        SizeHistogram::from_sizes(&sizes).expect("live clusters have positive size")
    }

    /// One global Metropolis step: propose a uniform lane for every
    /// live cluster (or for a random subset when configured), accept by
    /// the configured ratio, and on acceptance rewrite ownership. The
    /// clustering itself never changes here. Returns the accept flag.
    pub fn global_step(&mut self, stream: &mut RngStream) -> Result<bool> {
        let p = self.lanes.len();
        let mut clusters: Vec<(usize, u64, u64)> = Vec::new();
        for (l, lane) in self.lanes.iter().enumerate() {
            for (&cid, stat) in &lane.clusters {
                clusters.push((l, cid, stat.n));
            }
        }
        let k = clusters.len();
        if k == 0 || p == 1 {
            // identity proposal
            return Ok(true);
        }

        let mover_idx: Vec<usize> = match self.max_move_clusters {
            Some(m) if m < k => {
                let mut idx: Vec<usize> = (0..k).collect();
                for i in 0..m {
                    let j = i + stream.uniform_index(k - i);
                    idx.swap(i, j);
                }
                idx.truncate(m);
                idx.sort_unstable();
                idx
            }
            _ => (0..k).collect(),
        };

        let mut final_lane: Vec<usize> = clusters.iter().map(|&(l, _, _)| l).collect();
        for &ci in &mover_idx {
            final_lane[ci] = stream.uniform_index(p);
        }

        let mut before: Vec<Vec<u64>> = vec![Vec::new(); p];
        let mut after: Vec<Vec<u64>> = vec![Vec::new(); p];
        for (ci, &(l, _, size)) in clusters.iter().enumerate() {
            before[l].push(size);
            after[final_lane[ci]].push(size);
        }
        let cur_hist = SizeHistogram::from_sizes(&before)?;
        let prop_hist = SizeHistogram::from_sizes(&after)?;
        let log_r = match self.ratio_mode {
            RatioMode::Histogram => dp_accept_log_ratio(&cur_hist, &prop_hist)?,
            RatioMode::AlwaysAccept => 0.0,
        };
        let accepted = stream.uniform().ln() < log_r;
        if !accepted {
            return Ok(false);
        }

        let mut moved: BTreeMap<u64, usize> = BTreeMap::new();
        for (ci, &(l, cid, _)) in clusters.iter().enumerate() {
            if final_lane[ci] != l {
                moved.insert(cid, final_lane[ci]);
            }
        }
        if moved.is_empty() {
            return Ok(true);
        }
        for (ci, &(l, cid, _)) in clusters.iter().enumerate() {
            let dst = final_lane[ci];
            if dst != l {
                let stat = self.lanes[l]
                    .clusters
                    .remove(&cid)
                    .expect("moving cluster is live");
                self.lanes[dst].clusters.insert(cid, stat);
            }
        }
        let mut pending: Vec<Vec<(usize, u64)>> = vec![Vec::new(); p];
        for lane in &mut self.lanes {
            let l = lane.lane_id;
            let mut kept = Vec::with_capacity(lane.owned.len());
            for &(pt, cid) in &lane.owned {
                match moved.get(&cid) {
                    Some(&dst) if dst != l => pending[dst].push((pt, cid)),
                    _ => kept.push((pt, cid)),
                }
            }
            lane.owned = kept;
        }
        for (dst, mut pairs) in pending.into_iter().enumerate() {
            if !pairs.is_empty() {
                self.lanes[dst].owned.append(&mut pairs);
                self.lanes[dst].owned.sort_unstable_by_key(|&(pt, _)| pt);
            }
        }
        Ok(accepted)
    }

    /// Count-level consistency: every owned point's cluster is live on
    /// its own lane, and stat counts match membership.
    fn assert_counts(&self) -> Result<()> {
        for lane in &self.lanes {
            let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
            for &(_, cid) in &lane.owned {
                *counts.entry(cid).or_insert(0) += 1;
            }
            if counts.len() != lane.clusters.len() {
                return Err(Error::invariant(format!(
                    "lane {}: {} clusters in table, {} referenced by points",
                    lane.lane_id,
                    lane.clusters.len(),
                    counts.len()
                )));
            }
            for (cid, stat) in &lane.clusters {
                let have = counts.get(cid).copied().unwrap_or(0);
                if have != stat.n {
                    return Err(Error::invariant(format!(
                        "lane {}: cluster {cid} stat count {} vs {} members",
                        lane.lane_id, stat.n, have
                    )));
                }
            }
        }
        Ok(())
    }

    /// Full consistency check: counts exact, per-dimension sums within
    /// `tol` relative error of a from-scratch rebuild, ids unique, and
    /// every point owned exactly once.
    pub fn check_consistency(&self, data: &PointSet, tol: f64) -> Result<()> {
        self.assert_counts()?;
        let mut seen_points = vec![false; data.len()];
        let mut seen_ids: BTreeMap<u64, usize> = BTreeMap::new();
        for lane in &self.lanes {
            let mut last: Option<usize> = None;
            for &(pt, _) in &lane.owned {
                if seen_points[pt] {
                    return Err(Error::invariant(format!("point {pt} owned twice")));
                }
                seen_points[pt] = true;
                if let Some(prev) = last {
                    if prev >= pt {
                        return Err(Error::invariant(format!(
                            "lane {} ownership not sorted at point {pt}",
                            lane.lane_id
                        )));
                    }
                }
                last = Some(pt);
            }
            for &cid in lane.clusters.keys() {
                if let Some(other) = seen_ids.insert(cid, lane.lane_id) {
                    return Err(Error::invariant(format!(
                        "cluster {cid} live on lanes {other} and {}",
                        lane.lane_id
                    )));
                }
            }
            let mut rebuilt: BTreeMap<u64, ClusterStat> = BTreeMap::new();
            for &(pt, cid) in &lane.owned {
                rebuilt
                    .entry(cid)
                    .or_insert_with(|| ClusterStat::empty(data.dims()))
                    .add(data.point(pt));
            }
            for (cid, stat) in &lane.clusters {
                let fresh = &rebuilt[cid];
                for (a, b) in stat.sum.iter().zip(&fresh.sum) {
                    if (a - b).abs() > tol * (1.0 + b.abs()) {
                        return Err(Error::invariant(format!(
                            "lane {}: cluster {cid} sum drift {a} vs {b}",
                            lane.lane_id
                        )));
                    }
                }
            }
        }
        if let Some(pt) = seen_points.iter().position(|&s| !s) {
            return Err(Error::invariant(format!("point {pt} unowned")));
        }
        Ok(())
    }

    /// Recompute every cluster's sums from the data in point-index
    /// order, so a checkpoint written now and the live state agree
    /// bit-for-bit afterwards.
    pub fn canonicalize(&mut self, data: &PointSet) {
        for lane in &mut self.lanes {
            let mut rebuilt: BTreeMap<u64, ClusterStat> = BTreeMap::new();
            for &(pt, cid) in &lane.owned {
                rebuilt
                    .entry(cid)
                    .or_insert_with(|| ClusterStat::empty(data.dims()))
                    .add(data.point(pt));
            }
            lane.clusters = rebuilt;
        }
    }

    /// Joint log probability of the current state: the processor-count
    /// term, each lane's seating term at concentration alpha/P, and the
    /// marginal evidence of every cluster accumulated as a predictive
    /// chain over members in point-index order.
    pub fn log_joint(&self, data: &PointSet) -> Result<f64> {
        let p = self.lanes.len();
        let counts = ProcessorCounts::new(self.n_per_proc());
        let mut lp = polya_log_prob(&counts, self.alpha)?;
        let aop = self.alpha / p as f64;
        for lane in &self.lanes {
            lp += ewens_log_prob(&lane.cluster_sizes(), aop)?;
            let mut chain: BTreeMap<u64, ClusterStat> = BTreeMap::new();
            for &(pt, cid) in &lane.owned {
                let x = data.point(pt);
                let stat = chain
                    .entry(cid)
                    .or_insert_with(|| ClusterStat::empty(data.dims()));
                lp += predictive_log_density(&self.model, stat, x);
                stat.add(x);
            }
        }
        Ok(lp)
    }

    pub fn snapshot(&self) -> DpSnapshot {
        let n = self.num_points();
        let mut processor = vec![0u32; n];
        let mut cluster = vec![0u64; n];
        for lane in &self.lanes {
            for &(pt, cid) in &lane.owned {
                processor[pt] = lane.lane_id as u32;
                cluster[pt] = cid;
            }
        }
        DpSnapshot {
            alpha: self.alpha,
            model: self.model,
            ratio_mode: self.ratio_mode,
            max_move_clusters: self.max_move_clusters,
            num_processors: self.lanes.len(),
            processor,
            cluster,
            next_serials: self.lanes.iter().map(|l| l.next_serial).collect(),
        }
    }

    pub fn from_snapshot(data: &PointSet, snap: &DpSnapshot) -> Result<Self> {
        let p = snap.num_processors;
        if p == 0 {
            return Err(Error::Checkpoint("zero processors".to_string()));
        }
        if snap.processor.len() != data.len() || snap.cluster.len() != data.len() {
            return Err(Error::Checkpoint(format!(
                "state covers {} points, data has {}",
                snap.processor.len(),
                data.len()
            )));
        }
        if snap.next_serials.len() != p {
            return Err(Error::Checkpoint("serial counters do not match processor count".to_string()));
        }
        let mut lanes: Vec<DpLane> = (0..p).map(DpLane::new).collect();
        let mut owner_of: BTreeMap<u64, u32> = BTreeMap::new();
        for i in 0..data.len() {
            let l = snap.processor[i] as usize;
            if l >= p {
                return Err(Error::Checkpoint(format!(
                    "point {i} on processor {l}, only {p} exist"
                )));
            }
            let cid = snap.cluster[i];
            if let Some(&prev) = owner_of.get(&cid) {
                if prev != snap.processor[i] {
                    return Err(Error::Checkpoint(format!(
                        "cluster {cid} split across processors {prev} and {l}"
                    )));
                }
            } else {
                owner_of.insert(cid, snap.processor[i]);
            }
            let lane = &mut lanes[l];
            lane.owned.push((i, cid));
            lane.clusters
                .entry(cid)
                .or_insert_with(|| ClusterStat::empty(data.dims()))
                .add(data.point(i));
        }
        for (l, lane) in lanes.iter_mut().enumerate() {
            lane.next_serial = snap.next_serials[l];
            for &cid in lane.clusters.keys() {
                if cid >> LANE_SHIFT == l as u64 && (cid & ((1 << LANE_SHIFT) - 1)) >= lane.next_serial {
                    return Err(Error::Checkpoint(format!(
                        "cluster {cid} is newer than lane {l}'s serial counter"
                    )));
                }
            }
        }
        Ok(DpState {
            lanes,
            alpha: snap.alpha,
            model: snap.model,
            ratio_mode: snap.ratio_mode,
            max_move_clusters: snap.max_move_clusters,
        })
    }
}

/// Sample a partition of n items by sequential seating with the given
/// concentration.
pub fn sample_crp_partition(n: usize, alpha: f64, stream: &mut RngStream) -> Result<Partition> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!(
            "concentration must be positive, got {alpha}"
        )));
    }
    let mut sizes: Vec<f64> = Vec::new();
    let mut assignments = Vec::with_capacity(n);
    for i in 0..n {
        let total = i as f64 + alpha;
        let r = stream.uniform() * total;
        let mut acc = 0.0;
        let mut chosen = sizes.len();
        for (c, &s) in sizes.iter().enumerate() {
            acc += s;
            if r < acc {
                chosen = c;
                break;
            }
        }
        if chosen == sizes.len() {
            sizes.push(1.0);
        } else {
            sizes[chosen] += 1.0;
        }
        assignments.push(chosen);
    }
    Partition::from_assignments(assignments)
}

/// Sample a partition of n items through the split construction:
/// mixture weights from a symmetric Dirichlet with mass alpha/P per
/// lane, one lane per item from those weights, then independent
/// seating per lane at concentration alpha/P. The induced marginal
/// must match `sample_crp_partition` at concentration alpha.
pub fn sample_split_prior_partition(
    n: usize,
    alpha: f64,
    p: usize,
    stream: &mut RngStream,
) -> Result<Partition> {
    if p == 0 {
        return Err(Error::domain("need at least one lane"));
    }
    if p == 1 {
        return sample_crp_partition(n, alpha, stream);
    }
    let phi = stream.dirichlet(&vec![alpha / p as f64; p])?;
    let mut lane_sizes: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut lane_labels: Vec<Vec<usize>> = vec![Vec::new(); p];
    let mut next_label = 0usize;
    let mut assignments = Vec::with_capacity(n);
    let aop = alpha / p as f64;
    for _ in 0..n {
        let lane = {
            let r = stream.uniform();
            let mut acc = 0.0;
            let mut chosen = p - 1;
            for (j, &w) in phi.iter().enumerate() {
                acc += w;
                if r < acc {
                    chosen = j;
                    break;
                }
            }
            chosen
        };
        let sizes = &mut lane_sizes[lane];
        let seated: f64 = sizes.iter().sum();
        let r = stream.uniform() * (seated + aop);
        let mut acc = 0.0;
        let mut chosen = sizes.len();
        for (c, &s) in sizes.iter().enumerate() {
            acc += s;
            if r < acc {
                chosen = c;
                break;
            }
        }
        if chosen == sizes.len() {
            sizes.push(1.0);
            lane_labels[lane].push(next_label);
            next_label += 1;
        } else {
            sizes[chosen] += 1.0;
        }
        assignments.push(lane_labels[lane][chosen]);
    }
    Partition::from_assignments(assignments)
}
