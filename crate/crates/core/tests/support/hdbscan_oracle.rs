//! Brute-force HDBSCAN reference, O(n³): minimax distances over the mutual
//! reachability graph by Floyd–Warshall, then a recursive condensed tree and
//! excess-of-mass selection over explicit point sets.

#![allow(dead_code)]

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn oracle_core_distances(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    (0..points.len())
        .map(|i| {
            let mut d: Vec<f64> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| euclid(&points[i], &points[j]))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[k - 1]
        })
        .collect()
}

/// Every spanning tree weight by Prüfer enumeration; returns the minimum.
pub fn brute_force_mst_weight(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return w[0][1];
    }
    let mut seq = vec![0usize; n - 2];
    let mut best = f64::INFINITY;
    loop {
        // decode
        let mut degree = vec![1usize; n];
        for &s in &seq {
            degree[s] += 1;
        }
        let mut total = 0.0;
        for &s in &seq {
            let leaf = (0..n).find(|&v| degree[v] == 1).unwrap();
            total += w[leaf][s];
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
        total += w[rest[0]][rest[1]];
        if total < best {
            best = total;
        }
        // next sequence
        let mut i = 0;
        loop {
            if i == seq.len() {
                return best;
            }
            seq[i] += 1;
            if seq[i] < n {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

struct Tree {
    stability: Vec<f64>,
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    fall_out: Vec<usize>,
    fall_dist: Vec<f64>,
}

fn lam(d: f64) -> f64 {
    if d > 0.0 {
        (1.0 / d).min(1e300)
    } else {
        1e300
    }
}

fn grow(tree: &mut Tree, mm: &[Vec<f64>], set: Vec<usize>, label: usize, birth: f64, mcs: usize) {
    let mut set = set;
    loop {
        let mut d = 0.0f64;
        for &a in &set {
            for &b in &set {
                d = d.max(mm[a][b]);
            }
        }
        let l = lam(d);
        // parts: equivalence classes of mm < d
        let mut parts: Vec<Vec<usize>> = Vec::new();
        for &p in &set {
            match parts.iter_mut().find(|part| mm[part[0]][p] < d) {
                Some(part) => part.push(p),
                None => parts.push(vec![p]),
            }
        }
        let (big, small): (Vec<Vec<usize>>, Vec<Vec<usize>>) = parts.into_iter().partition(|p| p.len() >= mcs);
        for part in small {
            for p in part {
                tree.stability[label] += l - birth;
                tree.fall_out[p] = label;
                tree.fall_dist[p] = d;
            }
        }
        match big.len() {
            0 => return,
            1 => set = big.into_iter().next().unwrap(),
            _ => {
                for part in big {
                    let c = tree.stability.len();
                    tree.stability.push(0.0);
                    tree.children.push(Vec::new());
                    tree.parent.push(Some(label));
                    tree.children[label].push(c);
                    tree.stability[label] += (l - birth) * part.len() as f64;
                    grow(tree, mm, part, c, l, mcs);
                }
                return;
            }
        }
    }
}

fn best(tree: &Tree, c: usize) -> (f64, Vec<usize>) {
    let mut sum = 0.0;
    let mut sel = Vec::new();
    for &k in &tree.children[c] {
        let (s, v) = best(tree, k);
        sum += s;
        sel.extend(v);
    }
    if sum > tree.stability[c] {
        (sum, sel)
    } else {
        (tree.stability[c], vec![c])
    }
}

/// Reference labels; `None` marks noise.
pub fn oracle_labels(points: &[Vec<f64>], mcs: usize) -> Vec<Option<usize>> {
    let n = points.len();
    if n < 2 {
        return vec![None; n];
    }
    if points.iter().all(|p| p == &points[0]) {
        return vec![Some(0); n];
    }
    if n <= mcs {
        return vec![None; n];
    }
    let core = oracle_core_distances(points, mcs);
    let mut mm = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                mm[i][j] = euclid(&points[i], &points[j]).max(core[i]).max(core[j]);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = mm[i][k].max(mm[k][j]);
                if via < mm[i][j] {
                    mm[i][j] = via;
                }
            }
        }
    }
    let mut tree = Tree {
        stability: vec![0.0],
        children: vec![Vec::new()],
        parent: vec![None],
        fall_out: vec![0; n],
        fall_dist: vec![0.0; n],
    };
    grow(&mut tree, &mm, (0..n).collect(), 0, 0.0, mcs);
    if tree.children[0].is_empty() {
        let mut s = tree.fall_dist.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = s[n / 2];
        return tree.fall_dist.iter().map(|&d| if d <= 10.0 * median { Some(0) } else { None }).collect();
    }
    let mut selected = Vec::new();
    for &k in &tree.children[0].clone() {
        selected.extend(best(&tree, k).1);
    }
    (0..n)
        .map(|p| {
            let mut c = Some(tree.fall_out[p]);
            while let Some(x) = c {
                if let Some(pos) = selected.iter().position(|&s| s == x) {
                    return Some(pos);
                }
                c = tree.parent[x];
            }
            None
        })
        .collect()
}

/// Canonical partition with noise points as singletons, for comparison up
/// to relabeling.
pub fn canonical_partition(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
    let mut groups: std::collections::BTreeMap<(bool, usize), Vec<usize>> = Default::default();
    for (i, l) in labels.iter().enumerate() {
        let key = match l {
            Some(c) => (false, *c),
            None => (true, i),
        };
        groups.entry(key).or_default().push(i);
    }
    let mut v: Vec<Vec<usize>> = groups.into_values().collect();
    v.sort();
    v
}
