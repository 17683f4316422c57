//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mersim::feeder::{parse_feeder, Feeder};
use mersim::reconfig::OperableGraph;
use mersim::routing::RoadNetwork;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Plain union-find, kept separate from the crate's own.
pub struct Dsu(Vec<usize>);

impl Dsu {
    pub fn new(n: usize) -> Self {
        Dsu((0..n).collect())
    }
    pub fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }
    /// False when already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

/// Random feeder: a tree of lines and sectionalizing switches rooted at `v0`,
/// up to `max_ties` extra normally-open ties (some to a second substation),
/// and integer kW loads.
pub fn random_feeder<R: Rng>(rng: &mut R, max_buses: usize, max_ties: usize) -> Feeder {
    let n = rng.random_range(3..=max_buses);
    let second_sub = rng.random_bool(0.3);
    let mut t = String::from("[bus v0]\nphases=ABC\nkind=substation\nkv=4.16\n");
    for b in 1..n {
        t += &format!("[bus v{b}]\nphases=ABC\nkv=4.16\n");
        let kw: u32 = rng.random_range(0..=3) * rng.random_range(1..=50);
        if kw > 0 {
            t += &format!("[load p{b}]\nbus=v{b}\nphases=A\nkw={kw}\n");
        }
    }
    if second_sub {
        t += "[bus alt]\nphases=ABC\nkind=substation\nkv=4.16\n";
    }
    for b in 1..n {
        let parent = rng.random_range(0..b);
        if rng.random_bool(0.2) {
            t += &format!("[branch e{b}]\nfrom=v{parent}\nto=v{b}\nkind=switch\nrole=sectionalizing\n");
        } else {
            t += &format!("[branch e{b}]\nfrom=v{parent}\nto=v{b}\nkind=line\nz=0.1+0.2j 0 0 0.1+0.2j 0 0.1+0.2j\n");
        }
    }
    let ties = rng.random_range(0..=max_ties);
    let mut used = BTreeSet::new();
    for k in 0..ties {
        let a = rng.random_range(1..n);
        let b = if second_sub && rng.random_bool(0.25) { None } else { Some(rng.random_range(0..n)) };
        let to = match b {
            Some(b) if b == a || !used.insert((a.min(b), a.max(b))) => continue,
            Some(b) => format!("v{b}"),
            None => "alt".to_string(),
        };
        t += &format!("[branch t{k}]\nfrom=v{a}\nto={to}\nkind=switch\nrole=tie\nnormally_open=true\n");
    }
    parse_feeder(&t).expect("generated feeder parses")
}

pub fn random_failures<R: Rng>(rng: &mut R, f: &Feeder, p: f64) -> BTreeSet<usize> {
    (0..f.branches.len()).filter(|_| rng.random_bool(p)).collect()
}

fn is_substation(f: &Feeder, b: usize) -> bool {
    f.substations.contains(&b)
}

/// Best restored kW over every subset of usable branches that is a forest
/// with at most one substation per tree.
pub fn exhaustive_restored_kw(g: &OperableGraph<'_>) -> f64 {
    let f = g.feeder;
    let n = f.buses.len();
    let usable: Vec<usize> = (0..f.branches.len()).filter(|&i| g.is_usable(i)).collect();
    assert!(usable.len() <= 22, "too many branches for enumeration");
    let mut best = 0.0f64;
    for mask in 0u32..(1 << usable.len()) {
        // Node n stands for "the grid"; every substation hangs off it.
        let mut d = Dsu::new(n + 1);
        for b in 0..n {
            if is_substation(f, b) {
                d.union(b, n);
            }
        }
        let acyclic = usable
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .all(|(_, &i)| d.union(f.branches[i].from, f.branches[i].to));
        if !acyclic {
            continue;
        }
        let kw: f64 = f.loads.iter().filter(|l| d.find(l.bus) == d.find(n)).map(|l| l.total_kw()).sum();
        best = best.max(kw);
    }
    best
}

/// Number of maximal spanning forests of the usable multigraph, by brute
/// force over edge subsets.
pub fn enumerate_spanning_forests(g: &OperableGraph<'_>) -> u64 {
    let f = g.feeder;
    let n = f.buses.len();
    let usable: Vec<usize> = (0..f.branches.len()).filter(|&i| g.is_usable(i)).collect();
    let mut d = Dsu::new(n);
    let rank = usable.iter().filter(|&&i| d.union(f.branches[i].from, f.branches[i].to)).count();
    let mut count = 0;
    for mask in 0u32..(1 << usable.len()) {
        if mask.count_ones() as usize != rank {
            continue;
        }
        let mut d = Dsu::new(n);
        if usable
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .all(|(_, &i)| d.union(f.branches[i].from, f.branches[i].to))
        {
            count += 1;
        }
    }
    count
}

/// Matrix-tree count with floating-point LU on each component's reduced
/// Laplacian.
pub fn float_matrix_tree(g: &OperableGraph<'_>) -> f64 {
    let f = g.feeder;
    let n = f.buses.len();
    let mut d = Dsu::new(n);
    let usable: Vec<usize> = (0..f.branches.len()).filter(|&i| g.is_usable(i)).collect();
    for &i in &usable {
        d.union(f.branches[i].from, f.branches[i].to);
    }
    let mut total = 1.0;
    let roots: BTreeSet<usize> = (0..n).map(|b| d.find(b)).collect();
    for r in roots {
        let members: Vec<usize> = (0..n).filter(|&b| d.find(b) == r).collect();
        if members.len() < 2 {
            continue;
        }
        let m = members.len() - 1;
        let pos = |b: usize| members.iter().position(|&x| x == b).and_then(|p| p.checked_sub(1));
        let mut a = vec![vec![0.0f64; m]; m];
        for &i in &usable {
            let br = &f.branches[i];
            if d.find(br.from) != r {
                continue;
            }
            let (x, y) = (pos(br.from), pos(br.to));
            if let Some(x) = x {
                a[x][x] += 1.0;
            }
            if let Some(y) = y {
                a[y][y] += 1.0;
            }
            if let (Some(x), Some(y)) = (x, y) {
                a[x][y] -= 1.0;
                a[y][x] -= 1.0;
            }
        }
        total *= lu_determinant(a);
    }
    total
}

fn lu_determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        if a[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        let (top, rest) = a.split_at_mut(k + 1);
        let pivot = &top[k];
        for row in rest {
            let factor = row[k] / pivot[k];
            for (x, p) in row[k..].iter_mut().zip(&pivot[k..]) {
                *x -= factor * p;
            }
        }
    }
    det
}

/// Random road network on `n` nodes with integer travel minutes; `n0` is
/// the only depot. Returns the network and its edge list.
pub fn random_roads<R: Rng>(rng: &mut R, n: usize, extra_edges: usize) -> (RoadNetwork, Vec<(usize, usize, f64)>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    // mostly connected backbone with a few gaps so some pairs are unreachable
    for k in 1..n {
        if rng.random_bool(0.97) {
            let a = order[rng.random_range(0..k)];
            edges.push((a, order[k], rng.random_range(1..=30) as f64));
        }
    }
    for _ in 0..extra_edges {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.push((a, b, rng.random_range(1..=30) as f64));
        }
    }
    let names: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let nodes: Vec<(&str, bool, Option<&str>)> = names.iter().enumerate().map(|(i, s)| (s.as_str(), i == 0, None)).collect();
    let e: Vec<(&str, &str, f64)> = edges.iter().map(|&(a, b, w)| (names[a].as_str(), names[b].as_str(), w)).collect();
    (RoadNetwork::from_parts(&nodes, &e).expect("generated roads are valid"), edges)
}

pub fn floyd_warshall(n: usize, edges: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b, w) in edges {
        d[a][b] = d[a][b].min(w);
        d[b][a] = d[b][a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}
