use std::collections::BTreeSet;

use mersim::contingency::ContingencyEvent;
use mersim::reconfig::RestorationPlan;
use mersim::routing::ResponseDelay;
use mersim::sizing::{aggregate, contingency_outcome, HourlySeries};
use proptest::prelude::*;

fn needs_mer_plan() -> RestorationPlan {
    RestorationPlan {
        fully_restorable: false,
        closed: vec![],
        energized: vec![],
        isolated_buses: vec![0],
        isolated_load_kw: [1.0, 0.0, 0.0],
        restored_load_kw: 0.0,
        mer_connection_bus: Some(0),
        switch_ops: vec![],
    }
}

fn series_for(e: &ContingencyEvent, values: &[f64]) -> (HourlySeries, HourlySeries) {
    let r = e.hour_range();
    let base: Vec<f64> = r.clone().map(|h| values[h % values.len()]).collect();
    (HourlySeries::new(r.start, base), HourlySeries::new(r.start, vec![0.0; r.len()]))
}

proptest! {
    #[test]
    fn later_arrival_never_serves_more(
        start in 0.0f64..50.0,
        duration in 0.01f64..30.0,
        d1 in 0.0f64..10.0,
        extra in 0.0f64..10.0,
        values in prop::collection::vec(0.0f64..1000.0, 1..24),
    ) {
        let e = ContingencyEvent { index: 0, failed_components: BTreeSet::new(), start_hour: start, duration };
        let (base, after) = series_for(&e, &values);
        let plan = needs_mer_plan();
        let a = contingency_outcome(&e, &plan, ResponseDelay::Hours(d1), &base, &after).unwrap();
        let b = contingency_outcome(&e, &plan, ResponseDelay::Hours(d1 + extra), &base, &after).unwrap();
        prop_assert!(b.e_net <= a.e_net + 1e-9);
        for o in [&a, &b] {
            prop_assert!(o.p_avg_i <= o.p_max_i + 1e-9);
            prop_assert!(o.e_net <= o.p_max_i * o.served_duration() + 1e-9);
            prop_assert!(o.served_duration() <= duration + 1e-9);
            prop_assert!(o.p_net_series.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn aggregate_ignores_input_order(
        durs in prop::collection::vec(0.1f64..20.0, 1..12),
        level in 1.0f64..500.0,
    ) {
        let plan = needs_mer_plan();
        let mut outs: Vec<_> = durs.iter().enumerate().map(|(i, &d)| {
            let e = ContingencyEvent { index: i, failed_components: BTreeSet::new(), start_hour: 10.0 * i as f64, duration: d };
            let (base, after) = series_for(&e, &[level, level * 0.5]);
            contingency_outcome(&e, &plan, ResponseDelay::Hours(0.25), &base, &after).unwrap()
        }).collect();
        let forward = aggregate(&outs);
        outs.reverse();
        prop_assert_eq!(&forward, &aggregate(&outs));
        prop_assert!(forward.p_avg_kw <= forward.p_max_kw + 1e-9);
        prop_assert_eq!(forward.n_cont, durs.len());
    }
}
