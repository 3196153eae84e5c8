use dynperc::dynamics::{noise_for_time, noise_perturb};
use dynperc::rng::replica_rng;
use dynperc::spectral::spectral_weights;
use dynperc::{cluster_size_at_root, sample_config, Lattice, ProductMeasure};

#[test]
fn resampled_pair_covariance_matches_spectrum() {
    // Cov(f(x), f(y)) for y a (1 - e^{-t})-resampling of x is
    // Var f * E exp(-t W).
    let lattice = Lattice::binary_tree(2).unwrap();
    let m = ProductMeasure::new(0.4).unwrap();
    let t = 0.7;
    let exact = spectral_weights(&dynperc::RootClusterSize::new(&lattice), &m, &lattice).unwrap();
    let eps = noise_for_time(t).unwrap();
    let mut rng = replica_rng(11, 0);
    let samples = 400_000;
    let (mut sx, mut sy, mut sxy, mut sxx) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let x = sample_config(&m, &lattice, &mut rng);
        let y = noise_perturb(&x, eps, &m, &mut rng).unwrap();
        let (a, b) = (
            cluster_size_at_root(&lattice, &x).unwrap() as f64,
            cluster_size_at_root(&lattice, &y).unwrap() as f64,
        );
        sx += a;
        sy += b;
        sxy += a * b;
        sxx += a * a;
    }
    let n = samples as f64;
    let cov = sxy / n - (sx / n) * (sy / n);
    let var = sxx / n - (sx / n).powi(2);
    let target = exact.variance() * exact.rho_continuous(t);
    assert!((var - exact.variance()).abs() < 0.03 * exact.variance());
    assert!(
        (cov - target).abs() < 0.03 * exact.variance(),
        "cov {cov} target {target}"
    );
}

#[test]
fn zero_and_full_noise() {
    let m = ProductMeasure::new(0.3).unwrap();
    let lattice = Lattice::torus(2, 4).unwrap();
    let mut rng = replica_rng(3, 1);
    let x = sample_config(&m, &lattice, &mut rng);
    assert_eq!(noise_perturb(&x, 0.0, &m, &mut rng).unwrap(), x);
    assert!(noise_perturb(&x, 1.5, &m, &mut rng).is_err());
    assert_eq!(noise_for_time(0.0).unwrap(), 0.0);
    assert!(noise_for_time(-1.0).is_err());
}
