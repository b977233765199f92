//! End-to-end checks through the public API only.

use dplane::geometry::{sample_subspace, Frame};
use dplane::grid::relative_l2_error_mean_subtracted;
use dplane::spectral::{dft_forward, dft_inverse, parseval_sides, sample_phantom};
use dplane::transform::{angular_backprojection, backproject_mc, forward_analytic, forward_grid, HaarPool};
use dplane::{AffinePlane, GaussianMixture, GaussianTerm, GridField, GridSpec, SinogramFunction, Substreams, Vector};

fn two_term(n: usize) -> GaussianMixture {
    let mut c = Vector::zeros(n);
    c[0] = 0.7;
    GaussianMixture::new(vec![
        GaussianTerm::centered(n, 1.0).unwrap(),
        GaussianTerm::new(-0.4, c, 0.6).unwrap(),
    ])
    .unwrap()
}

#[test]
fn sampled_field_transform_matches_closed_form() {
    let f = two_term(3);
    let spec = GridSpec::centered(3, 48, 0.25).unwrap();
    let field = sample_phantom(&f, &spec).unwrap();
    let mut rng = Substreams::new(1).stream(0);
    for d in [1, 2] {
        for _ in 0..5 {
            let frame = sample_subspace(d, 3, &mut rng).unwrap();
            let plane = AffinePlane::through(frame, &Vector::from_column_slice(&[0.3, -0.2, 0.1])).unwrap();
            let exact = f.dplane_closed_form(&plane).unwrap();
            let quad = forward_grid(&field, &plane, 0.05, 5.0).unwrap();
            assert!((quad - exact).abs() < 2e-2 * exact.abs(), "d={d}: {quad} vs {exact}");
        }
    }
}

#[test]
fn pool_backprojection_agrees_with_quadrature() {
    let f = two_term(3);
    let x = Vector::from_column_slice(&[0.5, 1.0, -0.5]);
    for d in [1, 2] {
        let phi = forward_analytic(&f, d).unwrap();
        let exact = angular_backprojection(&phi, &x, 400).unwrap();
        let pool = HaarPool::sample(d, 3, 50_000, &Substreams::new(2)).unwrap();
        let est = pool.backproject(&phi, x.as_slice()).unwrap();
        assert!((est.value - exact).abs() < 4.5 * est.std_error, "d={d}: {est:?} vs {exact}");
        let direct = backproject_mc(&phi, &x, 50_000, &Substreams::new(3)).unwrap();
        assert!(est.discrepancy(&direct) < 4.5);
        assert_eq!(phi.provenance(), dplane::transform::Provenance::Analytic);
    }
}

#[test]
fn fourier_round_trip_and_file_round_trip() {
    let f = two_term(2);
    let spec = GridSpec::centered(2, 64, 0.2).unwrap();
    let field = sample_phantom(&f, &spec).unwrap();
    let spectrum = dft_forward(&field);
    let (space, freq) = parseval_sides(&field, &spectrum);
    assert!((space - freq).abs() < 1e-12 * space);
    let back = dft_inverse(&spectrum);
    assert!(relative_l2_error_mean_subtracted(&back, &field).unwrap() < 1e-12);

    let mut bytes = Vec::new();
    field.write_to(&mut bytes).unwrap();
    let read = GridField::read_from(bytes.as_slice()).unwrap();
    assert_eq!(read, field);
    bytes.push(0);
    assert!(GridField::read_from(bytes.as_slice()).is_err());
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(GridSpec::centered(2, 7, 0.1).is_err());
    assert!(GridSpec::centered(2, 8, 0.0).is_err());
    assert!(Frame::coordinate(3, 3).is_err());
    assert!(forward_analytic(&two_term(2), 2).is_err());
    assert!(GaussianTerm::new(1.0, Vector::zeros(2), -1.0).is_err());
}
