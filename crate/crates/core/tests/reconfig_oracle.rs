mod common;

use std::collections::BTreeSet;

use common::{exhaustive_restored_kw, random_failures, random_feeder, Dsu};
use mersim::feeder::Feeder;
use mersim::reconfig::{build_restoration_plan, is_fully_restorable, OperableGraph};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// No loops, and no closed path joins two substations.
fn loop_free(f: &Feeder, closed: &[bool]) -> bool {
    let n = f.buses.len();
    let mut d = Dsu::new(n + 1);
    for &s in &f.substations {
        d.union(s, n);
    }
    f.branches.iter().zip(closed).filter(|(_, &c)| c).all(|(b, _)| d.union(b.from, b.to))
}

#[test]
fn plans_are_radial_and_use_only_working_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let f = random_feeder(&mut rng, 12, 8);
        let failed = random_failures(&mut rng, &f, 0.2);
        let g = OperableGraph::new(&f, &failed);
        let plan = build_restoration_plan(&g);
        assert!(loop_free(&f, &plan.closed));
        if plan.fully_restorable {
            assert!(f.is_radial(&plan.closed));
        }
        for (i, &c) in plan.closed.iter().enumerate() {
            assert!(!c || g.is_usable(i), "closed failed branch {}", f.branches[i].id);
        }
        assert_eq!(plan.fully_restorable, is_fully_restorable(&g));
        let isolated: BTreeSet<usize> = plan.isolated_buses.iter().copied().collect();
        for (b, &e) in plan.energized.iter().enumerate() {
            assert_ne!(e, isolated.contains(&b));
        }
        match plan.mer_connection_bus {
            Some(b) => assert!(isolated.contains(&b)),
            None => assert_eq!(plan.isolated_kw(), 0.0),
        }
    }
}

#[test]
fn more_failures_never_restore_more_load() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let f = random_feeder(&mut rng, 10, 6);
        let small = random_failures(&mut rng, &f, 0.15);
        let mut big = small.clone();
        big.extend(random_failures(&mut rng, &f, 0.15));
        let a = build_restoration_plan(&OperableGraph::new(&f, &small)).restored_load_kw;
        let b = build_restoration_plan(&OperableGraph::new(&f, &big)).restored_load_kw;
        assert!(b <= a + 1e-9, "{b} > {a}");
    }
}

#[test]
fn reconfiguration_never_restores_less_than_fixed_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let f = random_feeder(&mut rng, 10, 6);
        let failed = random_failures(&mut rng, &f, 0.2);
        let on = build_restoration_plan(&OperableGraph::new(&f, &failed));
        let off = build_restoration_plan(&OperableGraph::without_reconfiguration(&f, &failed));
        assert!(on.restored_load_kw >= off.restored_load_kw);
        assert_eq!(off.restored_load_kw, exhaustive_restored_kw(&OperableGraph::without_reconfiguration(&f, &failed)));
    }
}
