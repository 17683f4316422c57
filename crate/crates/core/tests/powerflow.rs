use mersim::feeder::{load_feeder, parse_feeder, Feeder};
use mersim::powerflow::{base_year_run, solve, PowerFlowCase, RadialNetwork, SolverOptions};
use num_complex::Complex64;

fn data(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

/// Closed-form receiving-end voltage of a source → series Z → constant-power
/// load circuit: with x = |V_r|², |V_s|² x = (x + a)² + b² where
/// a + jb = Z·S*, take the high-voltage root, then V_r* = (x + Z S*) / V_s.
fn two_bus_oracle(vs: Complex64, z: Complex64, s: Complex64) -> (Complex64, f64) {
    let zs = z * s.conj();
    let (a, b) = (zs.re, zs.im);
    let vs2 = vs.norm_sqr();
    let bq = 2.0 * a - vs2;
    let cq = a * a + b * b;
    let x = (-bq + (bq * bq - 4.0 * cq).sqrt()) / 2.0;
    let vr = ((Complex64::new(x, 0.0) + zs) / vs).conj();
    let i = (s / vr).conj();
    let p_source = (vs * i.conj()).re;
    (vr, p_source)
}

fn two_bus_feeder() -> Feeder {
    let kv = 2.4 * 3f64.sqrt();
    parse_feeder(&format!(
        "[bus s]\nphases = A\nkind = substation\nkv = {kv}\n\
         [bus r]\nphases = A\nkv = {kv}\n\
         [branch l]\nfrom = s\nto = r\nkind = line\nz = 0.3+0.6j 0 0 0 0 0\n\
         [load x]\nbus = r\nmodel = constant_power\nphases = A\nkw = 100\n"
    ))
    .unwrap()
}

#[test]
fn two_bus_matches_closed_form() {
    let f = two_bus_feeder();
    let sol = solve(&PowerFlowCase { feeder: &f, closed: &[true], hour: 0 }, &SolverOptions::default()).unwrap();
    assert!(sol.converged);
    let (vr, p) = two_bus_oracle(Complex64::new(2400.0, 0.0), Complex64::new(0.3, 0.6), Complex64::new(100e3, 0.0));
    let err = (sol.voltages[1][0] - vr / 2400.0).norm();
    assert!(err < 1e-8, "voltage error {err} pu");
    assert!((sol.substation_kw - p / 1000.0).abs() < 1e-6);
}

#[test]
fn ieee13_peak_is_load_plus_losses() {
    let f = load_feeder(data("ieee13.feeder")).unwrap();
    let net = RadialNetwork::build(&f, &f.normally_closed()).unwrap();
    let sol = net.solve(&vec![1.0; f.profiles.len()], &SolverOptions::default());
    assert!(sol.converged, "iterations {}", sol.iterations);
    assert!(sol.substation_kw > 3466.0 && sol.substation_kw < 3466.0 * 1.1, "{}", sol.substation_kw);
    assert!(sol.balance_mismatch < 1e-6);
}

#[test]
fn constant_profile_gives_constant_series() {
    let f = two_bus_feeder().with_uniform_profile(vec![0.7; 8760]).unwrap();
    let series = base_year_run(&f, &SolverOptions::default(), false).unwrap();
    let snap = RadialNetwork::build(&f, &[true]).unwrap().solve(&[0.7], &SolverOptions::default());
    assert!(series.kw.iter().all(|&k| k == snap.substation_kw));
    assert_eq!(series.at(8760 * 3 + 5), snap.substation_kw);
}

#[test]
fn zero_profile_gives_zero_series() {
    let f = two_bus_feeder().with_uniform_profile(vec![0.0; 8760]).unwrap();
    let series = base_year_run(&f, &SolverOptions::default(), false).unwrap();
    assert!(series.kw.iter().all(|&k| k == 0.0));
}

#[test]
fn ieee13_series_peaks_at_profile_peak() {
    let f = load_feeder(data("ieee13.feeder")).unwrap();
    let series = base_year_run(&f, &SolverOptions::default(), false).unwrap();
    let m = &f.profiles[0].multipliers;
    let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert_eq!(argmax(&series.kw), argmax(m));
    assert!(series.nonconverged_hours.is_empty());
}

#[test]
fn constant_power_monotone_in_single_load() {
    let f = load_feeder(data("ieee123.feeder")).unwrap();
    let closed = f.normally_closed();
    let mut prev = 0.0;
    for kw in [0.0, 10.0, 40.0, 80.0, 160.0] {
        let mut g = f.clone();
        let l = g.loads.iter_mut().find(|l| l.id == "52").unwrap();
        l.kw[0] = kw;
        let s = RadialNetwork::build(&g, &closed).unwrap().solve(&[1.0], &SolverOptions::default());
        assert!(s.substation_kw >= prev);
        prev = s.substation_kw;
    }
}

#[test]
fn opening_unloaded_branch_changes_nothing() {
    // 671-680 feeds bus 680, which carries no load
    let f = load_feeder(data("ieee13.feeder")).unwrap();
    let mut closed = f.normally_closed();
    let a = RadialNetwork::build(&f, &closed).unwrap().solve(&[0.8], &SolverOptions::default());
    closed[f.branch_index("L671-680").unwrap()] = false;
    let b = RadialNetwork::build(&f, &closed).unwrap().solve(&[0.8], &SolverOptions::default());
    assert!((a.substation_kw - b.substation_kw).abs() < 1e-9);
}
