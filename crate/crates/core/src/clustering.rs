//! Contiguity-constrained agglomerative clustering and consensus.
//!
//! Clusters may only merge when at least one branch joins them, so every
//! cluster stays a connected piece of the network. Ward's criterion is
//! used on nodal prices; average linkage on `1 − co-association` is used to
//! aggregate many partitions into one.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{components_within, Network};

/// Assignment of every bus to a zone `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    pub k: usize,
    pub zone_of: Vec<usize>,
}

impl Partition {
    /// Relabel zones in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let zone_of: Vec<usize> = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition {
            k: map.len(),
            zone_of,
        }
    }

    pub fn single_zone(n: usize) -> Self {
        Partition {
            k: usize::from(n > 0),
            zone_of: vec![0; n],
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            k: n,
            zone_of: (0..n).collect(),
        }
    }

    pub fn n_buses(&self) -> usize {
        self.zone_of.len()
    }

    /// Buses of each zone, sorted.
    pub fn zones(&self) -> Vec<Vec<usize>> {
        let mut zones = vec![Vec::new(); self.k];
        for (b, &z) in self.zone_of.iter().enumerate() {
            zones[z].push(b);
        }
        zones
    }

    /// Zone labels contiguous, each zone non-empty.
    pub fn is_well_formed(&self) -> bool {
        let used: BTreeSet<usize> = self.zone_of.iter().copied().collect();
        used.len() == self.k && used.iter().copied().eq(0..self.k)
    }

    /// Every zone induces a connected subgraph.
    pub fn is_contiguous(&self, network: &Network) -> bool {
        if self.zone_of.len() != network.n_buses() || !self.is_well_formed() {
            return false;
        }
        let adj = network.adjacency();
        self.zones()
            .iter()
            .all(|z| components_within(&adj, z).len() == 1)
    }

    /// Replace zone `zone` with the two given bus sets.
    pub fn split_zone(&self, zone: usize, first: &[usize], second: &[usize]) -> Partition {
        let mut labels = self.zone_of.clone();
        let fresh = self.k;
        for &b in second {
            labels[b] = fresh;
        }
        for &b in first {
            labels[b] = zone;
        }
        Partition::from_labels(&labels)
    }

    /// Graphviz rendering with one colour per zone.
    pub fn to_dot(&self, network: &Network, name: &str) -> String {
        const PALETTE: [&str; 12] = [
            "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
        ];
        let mut s = String::new();
        let _ = writeln!(s, "graph \"{name}\" {{");
        let _ = writeln!(s, "  node [style=filled];");
        for (b, &z) in self.zone_of.iter().enumerate() {
            let _ = writeln!(
                s,
                "  b{b} [label=\"{}\\nzone {z}\", fillcolor=\"{}\"];",
                network.bus_name(b),
                PALETTE[z % PALETTE.len()]
            );
        }
        for br in &network.branches {
            let border = self.zone_of[br.from_bus] != self.zone_of[br.to_bus];
            let style = if border { " [style=dashed, color=red]" } else { "" };
            let _ = writeln!(s, "  b{} -- b{}{style};", br.from_bus, br.to_bus);
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Ward,
    Average,
}

/// One agglomeration step: slots `a < b` merged into slot `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

/// Relative gap below which two merge heights count as tied.
const TIE_REL: f64 = 1e-12;

/// Connectivity-constrained agglomeration with Lance–Williams updates.
///
/// `dist` is the initial pairwise dissimilarity between singletons (for
/// Ward, the increase in within-cluster sum of squares from merging the
/// pair). Clusters keep the slot of their smallest member. Stops after
/// `n − stop_at` merges or when no adjacent pair remains.
fn agglomerate(
    mut dist: Vec<Vec<f64>>,
    network: &Network,
    linkage: Linkage,
    stop_at: usize,
) -> Vec<Merge> {
    let n = dist.len();
    let mut size = vec![1.0_f64; n];
    let mut active = vec![true; n];
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for br in &network.branches {
        neighbors[br.from_bus].insert(br.to_bus);
        neighbors[br.to_bus].insert(br.from_bus);
    }
    let mut merges = Vec::new();
    let mut clusters = n;
    while clusters > stop_at {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..n {
            if !active[a] {
                continue;
            }
            for &b in neighbors[a].range(a + 1..) {
                let h = dist[a][b];
                let better = match best {
                    None => true,
                    Some((_, _, hb)) => h < hb - TIE_REL * h.abs().max(hb.abs()),
                };
                if better {
                    best = Some((a, b, h));
                }
            }
        }
        let Some((a, b, height)) = best else {
            break;
        };
        let (na, nb) = (size[a], size[b]);
        for k in 0..n {
            if !active[k] || k == a || k == b {
                continue;
            }
            let nk = size[k];
            let updated = match linkage {
                Linkage::Ward => {
                    ((na + nk) * dist[a][k] + (nb + nk) * dist[b][k] - nk * dist[a][b])
                        / (na + nb + nk)
                }
                Linkage::Average => (na * dist[a][k] + nb * dist[b][k]) / (na + nb),
            };
            dist[a][k] = updated;
            dist[k][a] = updated;
        }
        size[a] = na + nb;
        active[b] = false;
        let moved = std::mem::take(&mut neighbors[b]);
        for &k in &moved {
            neighbors[k].remove(&b);
            if k != a {
                neighbors[k].insert(a);
                neighbors[a].insert(k);
            }
        }
        neighbors[a].remove(&a);
        neighbors[a].remove(&b);
        merges.push(Merge { a, b, height });
        clusters -= 1;
    }
    merges
}

/// Partition after applying the first `steps` merges to singletons.
fn cut(n: usize, merges: &[Merge], steps: usize) -> Partition {
    let mut label: Vec<usize> = (0..n).collect();
    for m in &merges[..steps] {
        for l in label.iter_mut() {
            if *l == m.b {
                *l = m.a;
            }
        }
    }
    Partition::from_labels(&label)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        Err(Error::Clustering(format!("zone count {k} outside 1..={n}")))
    } else {
        Ok(())
    }
}

/// Ward clustering of nodal prices restricted to branch-adjacent merges.
pub fn ward_connectivity_cluster(prices: &[f64], network: &Network, k: usize) -> Result<Partition> {
    let n = network.n_buses();
    if prices.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: prices.len(),
        });
    }
    check_k(k, n)?;
    if let Some(p) = prices.iter().find(|p| !p.is_finite()) {
        return Err(Error::Clustering(format!("non-finite price {p}")));
    }
    let dist: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| 0.5 * (prices[i] - prices[j]).powi(2))
                .collect()
        })
        .collect();
    let merges = agglomerate(dist, network, Linkage::Ward, k);
    if merges.len() < n - k {
        return Err(Error::Clustering(format!(
            "no adjacent clusters left at {} zones (network disconnected?)",
            n - merges.len()
        )));
    }
    Ok(cut(n, &merges, n - k))
}

/// Symmetric N×N matrix of co-membership frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct CoAssociationMatrix {
    pub values: Vec<Vec<f64>>,
}

pub fn co_association(partitions: &[Partition]) -> Result<CoAssociationMatrix> {
    let first = partitions
        .first()
        .ok_or_else(|| Error::Clustering("no partitions to aggregate".into()))?;
    let n = first.n_buses();
    let mut counts = vec![vec![0usize; n]; n];
    for p in partitions {
        if p.n_buses() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: p.n_buses(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                if p.zone_of[i] == p.zone_of[j] {
                    counts[i][j] += 1;
                }
            }
        }
    }
    let total = partitions.len() as f64;
    let values = counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / total).collect())
        .collect();
    Ok(CoAssociationMatrix { values })
}

/// Consensus partitions for k = 1..=max_k from many per-scenario partitions.
pub fn consensus_cluster(
    partitions: &[Partition],
    network: &Network,
    max_k: usize,
) -> Result<Vec<Partition>> {
    let co = co_association(partitions)?;
    let n = network.n_buses();
    if co.values.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: co.values.len(),
        });
    }
    check_k(max_k, n)?;
    let dist: Vec<Vec<f64>> = co
        .values
        .iter()
        .map(|row| row.iter().map(|v| 1.0 - v).collect())
        .collect();
    let merges = agglomerate(dist, network, Linkage::Average, 1);
    if merges.len() < n - 1 {
        return Err(Error::Clustering("network is disconnected".into()));
    }
    Ok((1..=max_k).map(|k| cut(n, &merges, n - k)).collect())
}
