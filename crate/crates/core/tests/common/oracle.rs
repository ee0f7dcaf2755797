//! Brute-force references for the clustering and matching engines.

use std::collections::BTreeMap;

use pktsig::detection::{CompiledSignature, Semantics, StreamPacket};
use pktsig::training::{Clustering, PairPoint};

/// Lexicographic rank of a candidate set: first timestamps, earlier push wins ties.
type SetKey = Vec<(i64, std::cmp::Reverse<usize>)>;

// ---------------------------------------------------------------- clustering

/// O(m²) DBSCAN: core points from full neighbor counts, clusters as connected
/// components of the core graph, each border point given to the adjacent
/// cluster that is created first when points are visited in (ts, index) order.
pub fn dbscan_reference(points: &[PairPoint], eps: u32, min_pts: usize) -> Clustering {
    let m = points.len();
    let close = |a: &PairPoint, b: &PairPoint| {
        let d1 = a.len1 as i64 - b.len1 as i64;
        let d2 = a.len2 as i64 - b.len2 as i64;
        a.pattern == b.pattern && d1 * d1 + d2 * d2 <= (eps as i64) * (eps as i64)
    };
    let adj: Vec<Vec<usize>> = (0..m)
        .map(|i| (0..m).filter(|&j| close(&points[i], &points[j])).collect())
        .collect();
    let core: Vec<bool> = adj.iter().map(|n| n.len() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut x = x;
        while parent[x] != r {
            let next = parent[x];
            parent[x] = r;
            x = next;
        }
        r
    }
    for i in 0..m {
        if !core[i] {
            continue;
        }
        for &j in &adj[i] {
            if core[j] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&i| (points[i].ts, i));
    let mut rank = vec![0; m];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    // Component id by the visiting rank of its earliest core point.
    let mut first_rank: BTreeMap<usize, usize> = BTreeMap::new();
    for i in (0..m).filter(|&i| core[i]) {
        let root = find(&mut parent, i);
        let e = first_rank.entry(root).or_insert(usize::MAX);
        *e = (*e).min(rank[i]);
    }
    let mut roots: Vec<(usize, usize)> = first_rank.iter().map(|(&root, &r)| (r, root)).collect();
    roots.sort_unstable();
    let cluster_of_root: BTreeMap<usize, usize> = roots.iter().enumerate().map(|(c, &(_, root))| (root, c)).collect();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); roots.len()];
    let mut cores: Vec<Vec<usize>> = vec![Vec::new(); roots.len()];
    let mut noise = Vec::new();
    for i in 0..m {
        if core[i] {
            let c = cluster_of_root[&find(&mut parent, i)];
            members[c].push(i);
            cores[c].push(i);
            continue;
        }
        let owner = adj[i]
            .iter()
            .filter(|&&j| core[j])
            .map(|&j| cluster_of_root[&find(&mut parent, j)])
            .min();
        match owner {
            Some(c) => members[c].push(i),
            None => noise.push(i),
        }
    }
    Clustering {
        clusters: members
            .into_iter()
            .zip(cores)
            .map(|(members, core)| pktsig::training::PairCluster {
                pattern: points[core[0]].pattern,
                members,
                core,
            })
            .collect(),
        noise,
    }
}

// ---------------------------------------------------------------- matching

/// Reference matcher.
///
/// Per (flow, set), sequences are found by a literal simulation of the machine
/// rules over an unbounded list of machines: a fresh machine starts on every
/// packet matching the first position, a machine that cannot take a packet is
/// dropped (reset) or kept (ignore), machines that land in the same state keep
/// only the one whose last packet is latest, and a completion clears the list.
/// Completion times are cross-checked against a direct search for the earliest
/// possible embedding. Completions of a signature are then joined across flows
/// by enumerating every combination of unconsumed earlier-set completions and
/// taking the one whose starts are lexicographically greatest from the last
/// set backwards, with the whole match inside the window.
pub fn match_reference(stream: &[StreamPacket], sigs: &[CompiledSignature], semantics: Semantics) -> Vec<(usize, Vec<Vec<usize>>)> {
    let flows = stream.iter().map(|p| p.flow).max().map_or(0, |f| f + 1);
    let per_flow: Vec<Vec<usize>> = (0..flows)
        .map(|f| (0..stream.len()).filter(|&i| stream[i].flow == f).collect())
        .collect();

    let mut out = Vec::new();
    for (si, sig) in sigs.iter().enumerate() {
        // (stream index of the completing packet, set, hits)
        let mut completions: Vec<(usize, usize, Vec<usize>)> = Vec::new();
        for (set, pattern) in sig.bounds.sets.iter().enumerate() {
            let m = pattern.len();
            let fits = |k: usize, i: usize| pattern[k].matches(stream[i].direction, stream[i].length);
            for idx in &per_flow {
                let mut machines: Vec<Vec<usize>> = Vec::new();
                let mut after = 0;
                for j in 0..idx.len() {
                    let i = idx[j];
                    let mut next: Vec<Vec<usize>> = Vec::new();
                    let mut done: Option<Vec<usize>> = None;
                    let fresh: Vec<usize> = Vec::new();
                    for mach in machines.iter().chain(std::iter::once(&fresh)) {
                        if fits(mach.len(), i) {
                            let mut grown = mach.clone();
                            grown.push(i);
                            if grown.len() == m {
                                done = Some(grown);
                            } else {
                                next.push(grown);
                            }
                        } else if semantics == Semantics::Ignore && !mach.is_empty() {
                            next.push(mach.clone());
                        }
                    }
                    let mut by_state: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                    for mach in next {
                        let keep = match by_state.get(&mach.len()) {
                            Some(old) => stream[*mach.last().unwrap()].ts > stream[*old.last().unwrap()].ts,
                            None => true,
                        };
                        if keep {
                            by_state.insert(mach.len(), mach);
                        }
                    }
                    machines = by_state.into_values().collect();
                    let earliest = earliest_possible(m, &fits, idx, after, j, semantics);
                    assert_eq!(done.is_some(), earliest, "completion time disagrees with direct search");
                    if let Some(hits) = done {
                        machines.clear();
                        completions.push((i, set, hits));
                        after = j + 1;
                    }
                }
            }
        }
        completions.sort_by_key(|c| (c.0, c.1));
        out.extend(assemble(&completions, sig, stream).into_iter().map(|m| (si, m)));
    }
    out.sort_by_key(|(si, m)| (*m.last().unwrap().last().unwrap(), *si));
    out
}

/// Whether `j` is the first position since `after` at which the pattern can
/// be completed: a contiguous run (reset) or any embedding (ignore).
fn earliest_possible(m: usize, fits: &dyn Fn(usize, usize) -> bool, idx: &[usize], after: usize, j: usize, semantics: Semantics) -> bool {
    let ends_at = |e: usize| match semantics {
        Semantics::Reset => e + 1 >= m + after && (0..m).all(|k| fits(k, idx[e + 1 - m + k])),
        Semantics::Ignore => {
            let mut k = 0;
            for &i in &idx[after..=e] {
                if k < m && fits(k, i) {
                    k += 1;
                }
            }
            // Greedy embedding completes exactly at e.
            k == m && {
                let mut k2 = 0;
                idx[after..e].iter().for_each(|&i| {
                    if k2 < m && fits(k2, i) {
                        k2 += 1;
                    }
                });
                k2 < m
            }
        }
    };
    match semantics {
        Semantics::Reset => ends_at(j) && (after..j).all(|e| !ends_at(e)),
        Semantics::Ignore => ends_at(j),
    }
}

fn assemble(completions: &[(usize, usize, Vec<usize>)], sig: &CompiledSignature, stream: &[StreamPacket]) -> Vec<Vec<Vec<usize>>> {
    let sets = sig.bounds.sets.len();
    let ts = |i: usize| stream[i].ts.micros();
    let first = |c: &(usize, usize, Vec<usize>)| ts(c.2[0]);
    let last = |c: &(usize, usize, Vec<usize>)| ts(*c.2.last().unwrap());
    let mut consumed = vec![false; completions.len()];
    let mut out = Vec::new();
    for (ci, c) in completions.iter().enumerate() {
        if c.1 + 1 != sets {
            continue;
        }
        if last(c) - first(c) > sig.window_us {
            continue;
        }
        let horizon = last(c) - sig.window_us;
        // Enumerate every chain set 0 .. set n-2 of earlier, unconsumed completions.
        let candidates: Vec<Vec<usize>> = (0..sets - 1)
            .map(|s| {
                (0..ci)
                    .filter(|&k| !consumed[k] && completions[k].1 == s && first(&completions[k]) >= horizon)
                    .collect()
            })
            .collect();
        let mut best: Option<(SetKey, Vec<usize>)> = None;
        let mut chain = vec![0usize; sets - 1];
        fn walk(
            s: usize,
            chain: &mut Vec<usize>,
            candidates: &[Vec<usize>],
            ok: &dyn Fn(&[usize]) -> bool,
            key: &dyn Fn(&[usize]) -> SetKey,
            best: &mut Option<(SetKey, Vec<usize>)>,
        ) {
            if s == candidates.len() {
                if ok(chain) {
                    let k = key(chain);
                    if best.as_ref().is_none_or(|(bk, _)| k > *bk) {
                        *best = Some((k, chain.clone()));
                    }
                }
                return;
            }
            for &c in &candidates[s] {
                chain[s] = c;
                walk(s + 1, chain, candidates, ok, key, best);
            }
        }
        let ok = |chain: &[usize]| {
            let mut seq: Vec<&(usize, usize, Vec<usize>)> = chain.iter().map(|&k| &completions[k]).collect();
            seq.push(c);
            seq.windows(2).all(|w| last(w[0]) < first(w[1]))
        };
        let key = |chain: &[usize]| {
            chain
                .iter()
                .rev()
                .map(|&k| (first(&completions[k]), std::cmp::Reverse(k)))
                .collect::<Vec<_>>()
        };
        walk(0, &mut chain, &candidates, &ok, &key, &mut best);
        if sets == 1 {
            out.push(vec![c.2.clone()]);
            continue;
        }
        if let Some((_, chain)) = best {
            chain.iter().for_each(|&k| consumed[k] = true);
            let mut m: Vec<Vec<usize>> = chain.iter().map(|&k| completions[k].2.clone()).collect();
            m.push(c.2.clone());
            out.push(m);
        }
    }
    out
}
