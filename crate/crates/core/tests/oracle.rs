use arcbound::fixtures;
use arcbound::oracle::{min_time_to_target, pmp_consistency, CandidateFamily, OracleOptions};
use nalgebra::Point3;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn heisenberg_times_match_closed_forms() {
    let s = fixtures::heisenberg();
    let family = CandidateFamily::bang(4, 1.0);
    let opts = OracleOptions::default();
    // pure z displacement: the fastest loop encloses the area with a square
    for c in [0.01, 0.02] {
        let r = min_time_to_target(&s, Point3::origin(), Point3::new(0.0, 0.0, c), &family, &opts).unwrap();
        let best = r.best(4).unwrap();
        assert!(rel(best, 2.0 * (2.0 * c).sqrt()) < 1e-5, "c = {c}: {best}");
        assert!(r.endpoint_error <= opts.eps_hit);
    }
    let r = min_time_to_target(&s, Point3::origin(), Point3::new(0.3, 0.0, 0.0), &family, &opts).unwrap();
    assert!(rel(r.best(4).unwrap(), 0.3) < 1e-5);
}

#[test]
fn budgets_are_monotone_and_runs_reproducible() {
    let s = fixtures::heisenberg();
    let family = CandidateFamily::bang(4, 1.0);
    let opts = OracleOptions { seed: 5, ..OracleOptions::default() };
    let target = Point3::new(0.1, -0.05, 0.015);
    let a = min_time_to_target(&s, Point3::origin(), target, &family, &opts).unwrap();
    let b = min_time_to_target(&s, Point3::origin(), target, &family, &opts).unwrap();
    assert_eq!(a, b);
    let times: Vec<f64> = (1..=4).filter_map(|n| a.best(n)).collect();
    assert!(!times.is_empty());
    assert!(times.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(a.best_schedule.len(), a.arc_count);
}

#[test]
fn optimal_schedules_admit_a_maximizing_lift() {
    let s = fixtures::heisenberg();
    let opts = OracleOptions::default();
    let target = Point3::new(0.0, 0.0, 0.02);
    let r = min_time_to_target(&s, Point3::origin(), target, &CandidateFamily::bang(4, 1.0), &opts).unwrap();
    let check = pmp_consistency(&s, &r.best_schedule, Point3::origin(), &opts.flow).unwrap().unwrap();
    assert!(check.residual < 1e-4, "{check:?}");
    assert!(check.maximality_holds, "{check:?}");
}

#[test]
fn singular_arcs_reach_generic_targets() {
    let s = fixtures::generic();
    let family = CandidateFamily { max_arcs: 3, singular: true, t_max: 1.0 };
    let opts = OracleOptions { starts: 4, refine: 2, ..OracleOptions::default() };
    let target = Point3::new(0.2, 0.05, 0.0);
    let r = min_time_to_target(&s, Point3::origin(), target, &family, &opts).unwrap();
    let best = r.best(3).unwrap();
    assert!(r.endpoint_error <= opts.eps_hit);
    // |u1| ≤ 1 bounds the speed in x, and |u2 z / 2| is tiny near the origin
    assert!((0.19..=0.3).contains(&best), "{best}");
    let bang = min_time_to_target(&s, Point3::origin(), target, &CandidateFamily::bang(3, 1.0), &opts).unwrap();
    assert!(best <= bang.best(3).unwrap() * (1.0 + 1e-6));
}
