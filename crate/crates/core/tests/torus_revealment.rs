use dynperc::query::{monte_carlo_report, radius_cap, McOptions, TorusQuerier};
use dynperc::{Lattice, ProductMeasure, RootClusterSize};

#[test]
fn default_exponent_gives_radius_one_on_small_sides() {
    // floor(L^0.24) is 1 for L = 8 and 16, where every edge of B_1 meets the
    // cube boundary and is always queried.
    assert_eq!(radius_cap(8, 0.24), 1);
    assert_eq!(radius_cap(16, 0.24), 1);
    assert_eq!(radius_cap(32, 0.24), 2);
}

#[test]
fn revealment_falls_with_side_at_square_root_radius() {
    let m = ProductMeasure::new(0.5).unwrap();
    let mut rows = Vec::new();
    for side in [8usize, 16, 32] {
        let lattice = Lattice::torus(2, side).unwrap();
        let q = TorusQuerier::new(&lattice, 0.5).unwrap();
        let r =
            monte_carlo_report::<RootClusterSize>(&q, &m, None, None, McOptions::new(20_000, 7 + side as u64)).unwrap();
        rows.push((side, q.radius_cap(), r.delta, r.se.unwrap().delta));
    }
    assert_eq!(rows.iter().map(|r| r.1).collect::<Vec<_>>(), vec![2, 4, 5]);
    for w in rows.windows(2) {
        let gap = w[0].2 - w[1].2;
        assert!(gap > 3.0 * (w[0].3.powi(2) + w[1].3.powi(2)).sqrt(), "{rows:?}");
    }
}
