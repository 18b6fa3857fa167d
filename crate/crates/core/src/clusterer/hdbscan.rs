//! HDBSCAN: core distances, mutual reachability MST, single-linkage
//! hierarchy, condensed tree and excess-of-mass cluster selection.
//!
//! Merges at exactly equal distance are applied together as one multi-way
//! merge, so the hierarchy does not depend on how ties are ordered.

use crate::error::{Error, Result};

/// Largest lambda used for zero-distance merges.
const LAMBDA_MAX: f64 = 1e300;

/// When the root never splits, points leaving it at more than this multiple
/// of the median leave distance are noise.
pub const SINGLE_CLUSTER_OUTLIER_FACTOR: f64 = 10.0;

pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let n = crate::nn::l2_norm(v);
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Euclidean distance; symmetric bit for bit.
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance from each point to its `k`-th nearest other point.
pub fn core_distances(points: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Config("core distance needs k >= 1".into()));
    }
    let n = points.len();
    if n < k + 1 {
        return Err(Error::NotEnoughPoints { needed: k + 1, got: n });
    }
    let mut buf = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            buf.clear();
            buf.extend((0..n).filter(|&j| j != i).map(|j| dist(&points[i], &points[j])));
            let (_, kth, _) = buf.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
            *kth
        })
        .collect())
}

pub fn mutual_reachability(d_ab: f64, core_a: f64, core_b: f64) -> f64 {
    d_ab.max(core_a).max(core_b)
}

/// Prim's algorithm over a complete graph given by `weight`.
pub fn minimum_spanning_tree(n: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = weight(current, j);
            if w < best[j] {
                best[j] = w;
                from[j] = current;
            }
            if best[j] < next_w || next == usize::MAX {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, best[next]));
        current = next;
    }
    edges
}

struct LevelNode {
    dist: f64,
    children: Vec<usize>,
    size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb] = ra;
        }
        ra
    }
}

/// Single-linkage hierarchy from MST edges; nodes `0..n` are the points.
fn level_tree(n: usize, mut edges: Vec<(usize, usize, f64)>) -> (Vec<LevelNode>, usize) {
    let mut nodes: Vec<LevelNode> = (0..n)
        .map(|_| LevelNode {
            dist: 0.0,
            children: Vec::new(),
            size: 1,
        })
        .collect();
    edges.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut points = UnionFind::new(n);
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut i = 0;
    while i < edges.len() {
        let w = edges[i].2;
        let mut j = i;
        while j < edges.len() && edges[j].2 == w {
            j += 1;
        }
        // group current components joined at this level
        let group = &edges[i..j];
        let mut local = std::collections::HashMap::<usize, usize>::new();
        let mut members: Vec<usize> = Vec::new();
        let mut lf = UnionFind::new(2 * group.len());
        let mut slot = |node: usize, members: &mut Vec<usize>| {
            *local.entry(node).or_insert_with(|| {
                members.push(node);
                members.len() - 1
            })
        };
        for &(a, b, _) in group {
            let na = node_of[points.find(a)];
            let nb = node_of[points.find(b)];
            let (sa, sb) = (slot(na, &mut members), slot(nb, &mut members));
            lf.union(sa, sb);
        }
        let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (s, &node) in members.iter().enumerate() {
            by_root.entry(lf.find(s)).or_default().push(node);
        }
        for &(a, b, _) in group {
            points.union(a, b);
        }
        for (_, children) in by_root {
            let size = children.iter().map(|&c| nodes[c].size).sum();
            let leaf = first_leaf(&nodes, children[0]);
            node_of[points.find(leaf)] = nodes.len();
            nodes.push(LevelNode {
                dist: w,
                children,
                size,
            });
        }
        i = j;
    }
    let root = nodes.len() - 1;
    (nodes, root)
}

fn first_leaf(nodes: &[LevelNode], mut id: usize) -> usize {
    while let Some(&c) = nodes[id].children.first() {
        id = c;
    }
    id
}

fn leaves(nodes: &[LevelNode], id: usize, out: &mut Vec<usize>) {
    let mut stack = vec![id];
    while let Some(x) = stack.pop() {
        if nodes[x].children.is_empty() {
            out.push(x);
        } else {
            stack.extend(nodes[x].children.iter().rev());
        }
    }
}

fn lambda(d: f64) -> f64 {
    if d > 0.0 {
        (1.0 / d).min(LAMBDA_MAX)
    } else {
        LAMBDA_MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CondensedChild {
    Point(usize),
    Cluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: CondensedChild,
    pub lambda: f64,
    pub size: usize,
}

/// Condensed cluster tree. Cluster 0 is the root; children always carry
/// larger labels than their parents.
#[derive(Debug, Clone, PartialEq)]
pub struct Condensed {
    pub edges: Vec<CondensedEdge>,
    pub birth: Vec<f64>,
    pub parent: Vec<Option<usize>>,
}

impl Condensed {
    fn build(nodes: &[LevelNode], root: usize, min_size: usize) -> Self {
        let mut c = Condensed {
            edges: Vec::new(),
            birth: vec![0.0],
            parent: vec![None],
        };
        let mut stack = vec![(root, 0usize)];
        let mut buf = Vec::new();
        while let Some((node, label)) = stack.pop() {
            let lam = lambda(nodes[node].dist);
            let big: Vec<usize> = nodes[node]
                .children
                .iter()
                .copied()
                .filter(|&ch| nodes[ch].size >= min_size)
                .collect();
            for &ch in &nodes[node].children {
                if nodes[ch].size >= min_size {
                    continue;
                }
                buf.clear();
                leaves(nodes, ch, &mut buf);
                for &p in &buf {
                    c.edges.push(CondensedEdge {
                        parent: label,
                        child: CondensedChild::Point(p),
                        lambda: lam,
                        size: 1,
                    });
                }
            }
            if big.len() >= 2 {
                let mut pending = Vec::new();
                for &ch in &big {
                    let l = c.birth.len();
                    c.birth.push(lam);
                    c.parent.push(Some(label));
                    c.edges.push(CondensedEdge {
                        parent: label,
                        child: CondensedChild::Cluster(l),
                        lambda: lam,
                        size: nodes[ch].size,
                    });
                    pending.push((ch, l));
                }
                stack.extend(pending.into_iter().rev());
            } else if let Some(&only) = big.first() {
                stack.push((only, label));
            }
        }
        c
    }

    pub fn num_clusters(&self) -> usize {
        self.birth.len()
    }

    pub fn stabilities(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.num_clusters()];
        for e in &self.edges {
            s[e.parent] += (e.lambda - self.birth[e.parent]) * e.size as f64;
        }
        s
    }

    /// Excess-of-mass selection; the root is never selected.
    pub fn select(&self) -> Vec<bool> {
        let n = self.num_clusters();
        let mut stability = self.stabilities();
        let mut selected = vec![false; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (c, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(c);
            }
        }
        for c in (1..n).rev() {
            let sub: f64 = children[c].iter().map(|&k| stability[k]).sum();
            if sub > stability[c] {
                stability[c] = sub;
            } else {
                selected[c] = true;
                let mut stack = children[c].clone();
                while let Some(k) = stack.pop() {
                    selected[k] = false;
                    stack.extend(children[k].iter().copied());
                }
            }
        }
        selected
    }

    /// Labels for `n` points: the selected cluster each point falls out of
    /// (directly or through descendants), or `None` for noise.
    pub fn labels(&self, n: usize, selected: &[bool]) -> Vec<Option<usize>> {
        let mut dense = vec![usize::MAX; self.num_clusters()];
        let mut next = 0;
        for (c, &s) in selected.iter().enumerate() {
            if s {
                dense[c] = next;
                next += 1;
            }
        }
        let mut out = vec![None; n];
        for e in &self.edges {
            if let CondensedChild::Point(p) = e.child {
                let mut c = Some(e.parent);
                while let Some(x) = c {
                    if selected[x] {
                        out[p] = Some(dense[x]);
                        break;
                    }
                    c = self.parent[x];
                }
            }
        }
        out
    }

    /// Labels when the root is the only cluster: everything belongs to it
    /// except points that leave far earlier than the typical point.
    fn single_cluster_labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut leave = vec![0.0; n];
        for e in &self.edges {
            if let CondensedChild::Point(p) = e.child {
                leave[p] = if e.lambda >= LAMBDA_MAX { 0.0 } else { 1.0 / e.lambda };
            }
        }
        let mut sorted = leave.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[n / 2];
        leave
            .iter()
            .map(|&d| (d <= SINGLE_CLUSTER_OUTLIER_FACTOR * median).then_some(0))
            .collect()
    }
}

/// Full pipeline returning raw labels; noise is `None`.
///
/// With fewer than `min_cluster_size + 1` points nothing can form a cluster
/// besides the root, so every point is noise. If every point coincides the
/// result is one cluster holding all of them. If the hierarchy never splits
/// into two clusters of `min_cluster_size`, the root is the cluster and only
/// its far outliers are noise.
pub fn hdbscan_labels(points: &[Vec<f64>], min_cluster_size: usize) -> Vec<Option<usize>> {
    let n = points.len();
    if n < 2 {
        return vec![None; n];
    }
    if points.iter().all(|p| p == &points[0]) {
        return vec![Some(0); n];
    }
    if n <= min_cluster_size {
        return vec![None; n];
    }
    let core = core_distances(points, min_cluster_size).expect("n > k checked");
    let edges = minimum_spanning_tree(n, |a, b| {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        mutual_reachability(dist(&points[i], &points[j]), core[i], core[j])
    });
    let (nodes, root) = level_tree(n, edges);
    let condensed = Condensed::build(&nodes, root, min_cluster_size);
    if condensed.num_clusters() == 1 {
        return condensed.single_cluster_labels(n);
    }
    let selected = condensed.select();
    condensed.labels(n, &selected)
}
