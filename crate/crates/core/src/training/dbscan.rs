//! Density clustering of packet pairs.

use std::collections::BTreeMap;

use crate::ingest::packet::Timestamp;
use crate::training::pairs::{point_distance, PacketPair, PairPattern};

/// A pair reduced to its clustering coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairPoint {
    pub pattern: PairPattern,
    pub len1: u32,
    /// Second length, 0 for nil pairs.
    pub len2: u32,
    pub ts: Timestamp,
}

impl PairPoint {
    pub fn of(pair: &PacketPair) -> Self {
        PairPoint {
            pattern: pair.pattern(),
            len1: pair.first.length,
            len2: pair.second.as_ref().map_or(0, |p| p.length),
            ts: pair.first_ts(),
        }
    }

    fn coords(&self) -> (PairPattern, u32, u32) {
        (self.pattern, self.len1, self.len2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairCluster {
    /// Point indices, ascending.
    pub members: Vec<usize>,
    /// Core point indices, ascending.
    pub core: Vec<usize>,
    pub pattern: PairPattern,
}

impl PairCluster {
    pub fn frequency(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Clustering {
    pub clusters: Vec<PairCluster>,
    pub noise: Vec<usize>,
}

/// `⌊n − 0.1n⌋`
pub fn min_pts_for(n: usize) -> usize {
    n * 9 / 10
}

/// `⌈n + 0.1n⌉`
pub fn max_frequency_for(n: usize) -> usize {
    (n * 11).div_ceil(10)
}

/// Points grouped by pattern and sorted by (len1, len2) for windowed neighbor scans.
struct Index {
    groups: BTreeMap<PairPattern, Vec<(u32, u32, usize)>>,
}

impl Index {
    fn new(points: &[PairPoint]) -> Self {
        let mut groups: BTreeMap<PairPattern, Vec<(u32, u32, usize)>> = BTreeMap::new();
        for (i, p) in points.iter().enumerate() {
            groups.entry(p.pattern).or_default().push((p.len1, p.len2, i));
        }
        for g in groups.values_mut() {
            g.sort_unstable();
        }
        Index { groups }
    }

    fn neighbors(&self, points: &[PairPoint], i: usize, eps: f64) -> Vec<usize> {
        let p = points[i];
        let g = &self.groups[&p.pattern];
        let lo = (p.len1 as f64 - eps).ceil().max(0.0) as u32;
        let hi = p.len1 as f64 + eps;
        let start = g.partition_point(|e| e.0 < lo);
        g[start..]
            .iter()
            .take_while(|e| e.0 as f64 <= hi)
            .filter(|e| point_distance(p.coords(), points[e.2].coords()) <= eps)
            .map(|e| e.2)
            .collect()
    }
}

/// DBSCAN with `dist <= eps` neighborhoods that include the point itself.
///
/// Points are visited in ascending first-packet timestamp (ties by index), and
/// neighbors are expanded in the same order, so a border point reachable from
/// several clusters joins the first one that reaches it.
pub fn dbscan(points: &[PairPoint], eps: f64, min_pts: usize) -> Clustering {
    let m = points.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| (points[i].ts, i));
    let mut rank = vec![0usize; m];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let index = Index::new(points);
    let neighbors = |i: usize| {
        let mut n = index.neighbors(points, i, eps);
        n.sort_unstable_by_key(|&j| rank[j]);
        n
    };

    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let mut label = vec![UNSEEN; m];
    let mut core_flag = vec![false; m];
    let mut clusters: Vec<PairCluster> = Vec::new();

    for &p in &order {
        if label[p] != UNSEEN {
            continue;
        }
        let n = neighbors(p);
        if n.len() < min_pts {
            label[p] = NOISE;
            continue;
        }
        let c = clusters.len();
        clusters.push(PairCluster {
            members: Vec::new(),
            core: Vec::new(),
            pattern: points[p].pattern,
        });
        label[p] = c;
        core_flag[p] = true;
        let mut queue = std::collections::VecDeque::from(n);
        while let Some(q) = queue.pop_front() {
            if label[q] == NOISE {
                label[q] = c;
            }
            if label[q] != UNSEEN {
                continue;
            }
            label[q] = c;
            let nq = neighbors(q);
            if nq.len() >= min_pts {
                core_flag[q] = true;
                queue.extend(nq);
            }
        }
    }

    let mut noise = Vec::new();
    for i in 0..m {
        match label[i] {
            NOISE => noise.push(i),
            c => {
                clusters[c].members.push(i);
                if core_flag[i] {
                    clusters[c].core.push(i);
                }
            }
        }
    }
    Clustering { clusters, noise }
}

/// Keeps clusters whose frequency lies in `[⌊n − 0.1n⌋, ⌈n + 0.1n⌉]`.
pub fn prune_clusters(clusters: Vec<PairCluster>, n: usize) -> Vec<PairCluster> {
    let (lo, hi) = (min_pts_for(n), max_frequency_for(n));
    clusters
        .into_iter()
        .filter(|c| (lo..=hi).contains(&c.frequency()))
        .collect()
}
