//! Post-contingency network reconfiguration.
//!
//! Restoration feasibility is pure connectivity: a load can be restored iff
//! some path of usable branches (switch states free) reaches a substation.
//! The chosen configuration is a spanning forest of the substation-reachable
//! part, rooted at the substations, built greedily with normally-closed
//! branches first and tie switches after, each group in branch-id order.
//! Because the normally-closed branches minus the failed ones are already a
//! forest, this keeps every surviving normally-closed branch and closes the
//! fewest tie switches.

use std::collections::{BTreeSet, VecDeque};

use num_bigint::{BigInt, BigUint};
use serde::Serialize;

use crate::feeder::Feeder;
use crate::unionfind::UnionFind;

/// Feeder with the failed branches removed.
#[derive(Clone, Debug)]
pub struct OperableGraph<'a> {
    pub feeder: &'a Feeder,
    usable: Vec<bool>,
}

impl<'a> OperableGraph<'a> {
    /// All non-failed branches, tie switches included.
    pub fn new(feeder: &'a Feeder, failed: &BTreeSet<usize>) -> Self {
        let usable = (0..feeder.branches.len()).map(|i| !failed.contains(&i)).collect();
        OperableGraph { feeder, usable }
    }

    /// As [`OperableGraph::new`] but with every tie switch held open.
    pub fn without_reconfiguration(feeder: &'a Feeder, failed: &BTreeSet<usize>) -> Self {
        let usable = feeder
            .branches
            .iter()
            .enumerate()
            .map(|(i, b)| !failed.contains(&i) && !b.normally_open)
            .collect();
        OperableGraph { feeder, usable }
    }

    pub fn from_mask(feeder: &'a Feeder, usable: Vec<bool>) -> Self {
        assert_eq!(usable.len(), feeder.branches.len());
        OperableGraph { feeder, usable }
    }

    pub fn is_usable(&self, branch: usize) -> bool {
        self.usable[branch]
    }

    fn reachable(&self) -> (UnionFind, usize) {
        let mut uf = self.feeder.rooted_union_find();
        for (i, b) in self.feeder.branches.iter().enumerate() {
            if self.usable[i] {
                uf.union(b.from, b.to);
            }
        }
        (uf, self.feeder.buses.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchAction {
    Close,
    Open,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SwitchOp {
    pub branch: String,
    pub action: SwitchAction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestorationPlan {
    /// Every load bus is fed after switching.
    pub fully_restorable: bool,
    /// Closed-state mask of the chosen radial configuration (energized part only).
    pub closed: Vec<bool>,
    pub energized: Vec<bool>,
    /// Buses with no usable path to a substation, in bus order.
    pub isolated_buses: Vec<usize>,
    /// Per-phase base kW of loads at isolated buses.
    pub isolated_load_kw: [f64; 3],
    pub restored_load_kw: f64,
    /// Where a MER would be connected; `None` when nothing is isolated.
    pub mer_connection_bus: Option<usize>,
    pub switch_ops: Vec<SwitchOp>,
}

impl RestorationPlan {
    pub fn isolated_kw(&self) -> f64 {
        self.isolated_load_kw.iter().sum()
    }

    pub fn closed_ids(&self, feeder: &Feeder) -> BTreeSet<String> {
        feeder.branch_ids((0..self.closed.len()).filter(|&i| self.closed[i]))
    }
}

/// True iff every load bus still has a usable path to some substation.
pub fn is_fully_restorable(g: &OperableGraph<'_>) -> bool {
    let (mut uf, root) = g.reachable();
    g.feeder
        .load_buses()
        .iter()
        .enumerate()
        .all(|(b, &is_load)| !is_load || uf.same(b, root))
}

pub fn build_restoration_plan(g: &OperableGraph<'_>) -> RestorationPlan {
    let f = g.feeder;
    let n = f.buses.len();
    let (mut reach, root) = g.reachable();
    let energized: Vec<bool> = (0..n).map(|b| reach.same(b, root)).collect();

    let mut candidates: Vec<usize> = (0..f.branches.len())
        .filter(|&i| g.usable[i] && energized[f.branches[i].from])
        .collect();
    candidates.sort_by(|&a, &b| {
        let (x, y) = (&f.branches[a], &f.branches[b]);
        x.normally_open.cmp(&y.normally_open).then_with(|| x.id.cmp(&y.id))
    });
    let mut tree = f.rooted_union_find();
    let mut closed = vec![false; f.branches.len()];
    for i in candidates {
        let b = &f.branches[i];
        if tree.union(b.from, b.to) {
            closed[i] = true;
        }
    }

    let mut switch_ops: Vec<SwitchOp> = f
        .branches
        .iter()
        .enumerate()
        .filter_map(|(i, b)| {
            let action = if b.normally_open && closed[i] {
                SwitchAction::Close
            } else if !b.normally_open && !closed[i] && g.usable[i] && energized[b.from] && energized[b.to] {
                SwitchAction::Open
            } else {
                return None;
            };
            Some(SwitchOp {
                branch: b.id.clone(),
                action,
            })
        })
        .collect();
    switch_ops.sort_by(|a, b| a.branch.cmp(&b.branch));

    let isolated_buses: Vec<usize> = (0..n).filter(|&b| !energized[b]).collect();
    let mut isolated_load_kw = [0.0; 3];
    let mut restored_load_kw = 0.0;
    for l in &f.loads {
        if energized[l.bus] {
            restored_load_kw += l.total_kw();
        } else {
            for (acc, kw) in isolated_load_kw.iter_mut().zip(l.kw) {
                *acc += kw;
            }
        }
    }
    let load_buses = f.load_buses();
    let fully_restorable = isolated_buses.iter().all(|&b| !load_buses[b]);
    let mer_connection_bus = mer_connection_bus(g, &energized, &isolated_buses);

    RestorationPlan {
        fully_restorable,
        closed,
        energized,
        isolated_buses,
        isolated_load_kw,
        restored_load_kw,
        mer_connection_bus,
        switch_ops,
    }
}

/// The isolated bus nearest the substation side (fewest hops in the intact
/// normal configuration), restricted to isolated islands that carry load
/// when any do. Ties go to the lexicographically smallest bus id.
fn mer_connection_bus(g: &OperableGraph<'_>, energized: &[bool], isolated: &[usize]) -> Option<usize> {
    if isolated.is_empty() {
        return None;
    }
    let f = g.feeder;
    let depth = normal_depth(f);

    let mut islands = UnionFind::new(f.buses.len());
    for (i, b) in f.branches.iter().enumerate() {
        if g.usable[i] && !energized[b.from] && !energized[b.to] {
            islands.union(b.from, b.to);
        }
    }
    let bus_kw = f.bus_load_kw();
    let mut island_kw = vec![0.0; f.buses.len()];
    for &b in isolated {
        let r = islands.find(b);
        island_kw[r] += bus_kw[b];
    }
    let loaded: Vec<usize> = isolated
        .iter()
        .copied()
        .filter(|&b| island_kw[islands.find(b)] > 0.0)
        .collect();
    let pool = if loaded.is_empty() { isolated } else { &loaded[..] };
    pool.iter()
        .copied()
        .min_by(|&a, &b| depth[a].cmp(&depth[b]).then_with(|| f.buses[a].id.cmp(&f.buses[b].id)))
}

/// Hop count from the nearest substation over normally-closed branches.
fn normal_depth(f: &Feeder) -> Vec<usize> {
    let adj = f.adjacency();
    let mut depth = vec![usize::MAX; f.buses.len()];
    let mut queue = VecDeque::new();
    for &s in &f.substations {
        depth[s] = 0;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        for &(br, v) in &adj[u] {
            if !f.branches[br].normally_open && depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
    }
    depth
}

/// Number of spanning trees of the usable-branch multigraph (Kirchhoff's
/// matrix-tree theorem), multiplied over connected components.
pub fn spanning_tree_count(g: &OperableGraph<'_>) -> BigUint {
    let f = g.feeder;
    let n = f.buses.len();
    let mut comps = UnionFind::new(n);
    for (i, b) in f.branches.iter().enumerate() {
        if g.usable[i] {
            comps.union(b.from, b.to);
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
    for b in 0..n {
        let r = comps.find(b);
        members[r].push(b);
    }
    let mut total = BigUint::from(1u32);
    for group in members.iter().filter(|m| m.len() > 1) {
        // Laplacian with the group's first vertex deleted.
        let mut pos = vec![usize::MAX; n];
        for (k, &b) in group.iter().skip(1).enumerate() {
            pos[b] = k;
        }
        let m = group.len() - 1;
        let mut lap = vec![vec![0i64; m]; m];
        for (i, br) in f.branches.iter().enumerate() {
            if !g.usable[i] || comps.find(br.from) != comps.find(group[0]) {
                continue;
            }
            let (a, b) = (pos[br.from], pos[br.to]);
            if a != usize::MAX {
                lap[a][a] += 1;
            }
            if b != usize::MAX {
                lap[b][b] += 1;
            }
            if a != usize::MAX && b != usize::MAX {
                lap[a][b] -= 1;
                lap[b][a] -= 1;
            }
        }
        let det = bareiss_determinant(lap);
        total *= det.to_biguint().expect("Laplacian minor is positive semidefinite");
    }
    total
}

/// Fraction-free Gaussian elimination; exact for integer matrices.
pub fn bareiss_determinant(m: Vec<Vec<i64>>) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::from(1);
    }
    let mut a: Vec<Vec<BigInt>> = m
        .into_iter()
        .map(|row| row.into_iter().map(BigInt::from).collect())
        .collect();
    let mut sign = 1i32;
    let mut prev = BigInt::from(1);
    for k in 0..n - 1 {
        if a[k][k] == BigInt::from(0) {
            match (k + 1..n).find(|&r| a[r][k] != BigInt::from(0)) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return BigInt::from(0),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = v / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    let det = a[n - 1][n - 1].clone();
    if sign < 0 {
        -det
    } else {
        det
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::parse_feeder;

    /// S - 1 - 2 - 3 - 4 with a tie 1-4 and a 10 kW load on every non-source bus.
    fn five_bus() -> Feeder {
        let mut t = String::from("[bus S]\nphases=A\nkind=substation\nkv=1\n");
        for b in 1..=4 {
            t += &format!("[bus b{b}]\nphases=A\nkind=load\nkv=1\n[load ld{b}]\nbus=b{b}\nphases=A\nkw={}\n", 10 * b);
        }
        for (id, a, b) in [("l1", "S", "b1"), ("l2", "b1", "b2"), ("l3", "b2", "b3"), ("l4", "b3", "b4")] {
            t += &format!("[branch {id}]\nfrom={a}\nto={b}\nkind=line\nz=0.1 0 0 0 0 0\n");
        }
        t += "[branch t1]\nfrom=b1\nto=b4\nkind=switch\nrole=tie\nnormally_open=true\n";
        parse_feeder(&t).unwrap()
    }

    fn failed(f: &Feeder, ids: &[&str]) -> BTreeSet<usize> {
        ids.iter().map(|id| f.branch_index(id).unwrap()).collect()
    }

    /// Exhaustive oracle: best restored kW over every edge subset that is a
    /// substation-rooted forest.
    fn brute_force_restored(g: &OperableGraph<'_>) -> f64 {
        let f = g.feeder;
        let usable: Vec<usize> = (0..f.branches.len()).filter(|&i| g.is_usable(i)).collect();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << usable.len()) {
            let mut uf = f.rooted_union_find();
            let mut ok = true;
            for (k, &i) in usable.iter().enumerate() {
                if mask & (1 << k) != 0 && !uf.union(f.branches[i].from, f.branches[i].to) {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let root = f.buses.len();
            let kw: f64 = f.loads.iter().filter(|l| uf.same(l.bus, root)).map(|l| l.total_kw()).sum();
            best = best.max(kw);
        }
        best
    }

    #[test]
    fn intact_feeder_keeps_normal_configuration() {
        let f = five_bus();
        let g = OperableGraph::new(&f, &BTreeSet::new());
        assert!(is_fully_restorable(&g));
        let plan = build_restoration_plan(&g);
        assert!(plan.fully_restorable);
        assert_eq!(plan.closed, f.normally_closed());
        assert!(plan.isolated_buses.is_empty());
        assert!(plan.switch_ops.is_empty());
        assert_eq!(plan.mer_connection_bus, None);
    }

    #[test]
    fn mid_line_failure_restored_through_tie() {
        let f = five_bus();
        let g = OperableGraph::new(&f, &failed(&f, &["l3"]));
        let plan = build_restoration_plan(&g);
        assert!(plan.fully_restorable);
        assert!(plan.closed[f.branch_index("t1").unwrap()]);
        assert!(!plan.closed[f.branch_index("l3").unwrap()]);
        assert_eq!(plan.switch_ops, vec![SwitchOp { branch: "t1".into(), action: SwitchAction::Close }]);
        assert_eq!(plan.restored_load_kw, brute_force_restored(&g));
        assert!(f.is_radial(&plan.closed));
    }

    #[test]
    fn both_paths_failed_isolates_end_bus() {
        let f = five_bus();
        let g = OperableGraph::new(&f, &failed(&f, &["l4", "t1"]));
        let plan = build_restoration_plan(&g);
        assert!(!plan.fully_restorable);
        assert!(!is_fully_restorable(&g));
        assert_eq!(plan.isolated_buses, vec![f.bus_index("b4").unwrap()]);
        assert_eq!(plan.isolated_kw(), 40.0);
        assert_eq!(plan.mer_connection_bus, f.bus_index("b4"));
        assert_eq!(plan.restored_load_kw, brute_force_restored(&g));
    }

    #[test]
    fn without_reconfiguration_ties_stay_open() {
        let f = five_bus();
        let g = OperableGraph::without_reconfiguration(&f, &failed(&f, &["l3"]));
        let plan = build_restoration_plan(&g);
        assert!(!plan.fully_restorable);
        let names: Vec<&str> = plan.isolated_buses.iter().map(|&b| f.buses[b].id.as_str()).collect();
        assert_eq!(names, ["b3", "b4"]);
        assert_eq!(plan.mer_connection_bus, f.bus_index("b3"));
    }

    #[test]
    fn substation_only_island() {
        let f = five_bus();
        let g = OperableGraph::new(&f, &failed(&f, &["l1"]));
        let plan = build_restoration_plan(&g);
        assert_eq!(plan.isolated_buses.len(), 4);
        assert_eq!(plan.restored_load_kw, 0.0);
        assert_eq!(plan.mer_connection_bus, f.bus_index("b1"));
    }

    #[test]
    fn tree_counts() {
        let f = five_bus();
        // tree: only normally-closed lines usable
        let g = OperableGraph::without_reconfiguration(&f, &BTreeSet::new());
        assert_eq!(spanning_tree_count(&g), BigUint::from(1u32));
        // tie closes the cycle b1-b2-b3-b4: four edges on it
        let g = OperableGraph::new(&f, &BTreeSet::new());
        assert_eq!(spanning_tree_count(&g), BigUint::from(4u32));
    }

    #[test]
    fn complete_graph_k4_has_16_trees() {
        let mut t = String::from("[bus v0]\nphases=A\nkind=substation\nkv=1\n");
        for b in 1..4 {
            t += &format!("[bus v{b}]\nphases=A\nkv=1\n");
        }
        let mut k = 0;
        for a in 0..4 {
            for b in a + 1..4 {
                let open = !(a == 0);
                t += &format!(
                    "[branch e{k}]\nfrom=v{a}\nto=v{b}\nkind=switch\nrole={}\nnormally_open={open}\n",
                    if open { "tie" } else { "sectionalizing" }
                );
                k += 1;
            }
        }
        let f = parse_feeder(&t).unwrap();
        let g = OperableGraph::new(&f, &BTreeSet::new());
        assert_eq!(spanning_tree_count(&g), BigUint::from(16u32));
    }

    #[test]
    fn bareiss_small() {
        assert_eq!(bareiss_determinant(vec![vec![2, 1], vec![1, 3]]), BigInt::from(5));
        assert_eq!(bareiss_determinant(vec![vec![0, 1], vec![1, 0]]), BigInt::from(-1));
        assert_eq!(bareiss_determinant(vec![vec![1, 2], vec![2, 4]]), BigInt::from(0));
    }
}
