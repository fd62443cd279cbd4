use gqrc_core::analysis::sim::ModelSpec;
use gqrc_core::gaussian::symplectic_form;
use gqrc_core::linalg::{min_eigenvalue, Mat};
use gqrc_core::reservoir::{washout_length, IdealState};
use proptest::prelude::*;

/// Smallest eigenvalue of the real embedding of `σ + iΩ`.
fn uncertainty_margin(sigma: &Mat) -> f64 {
    let d = sigma.nrows();
    let w = symplectic_form(d / 2);
    let mut big = Mat::zeros(2 * d, 2 * d);
    big.view_mut((0, 0), (d, d)).copy_from(sigma);
    big.view_mut((d, d), (d, d)).copy_from(sigma);
    big.view_mut((0, d), (d, d)).copy_from(&(-&w));
    big.view_mut((d, 0), (d, d)).copy_from(&w);
    min_eigenvalue(&big)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn round_trip_is_symplectic(n in 1usize..5, r in 0.05f64..0.95, seed in any::<u64>()) {
        let model = ModelSpec::new(n, r).draw(seed).unwrap();
        prop_assert!(model.s_prime().residual() < 1e-10);
        prop_assert!(model.s1().residual() < 1e-10);
    }

    #[test]
    fn ideal_outputs_are_physical_states(n in 1usize..4, r in 0.1f64..0.95, seed in any::<u64>()) {
        let spec = ModelSpec::new(n, r);
        let model = spec.draw(seed).unwrap();
        let inputs = spec.draw_inputs(seed, 40);
        let mut st = IdealState::with_initial_reservoir(&model, &Mat::identity(2 * n, 2 * n)).unwrap();
        for &s in &inputs {
            let anc = model.ancilla(s).unwrap();
            let out = st.output_covariance(&model, &anc);
            prop_assert!(uncertainty_margin(&out) > -1e-8);
            st.step(&model, s).unwrap();
        }
    }

    #[test]
    fn output_forgets_initial_state(n in 1usize..3, r in 0.2f64..0.7, seed in any::<u64>()) {
        let spec = ModelSpec::new(n, r);
        let model = spec.draw(seed).unwrap();
        let steps = washout_length(r).unwrap() + 5;
        let inputs = spec.draw_inputs(seed, steps);
        let mut vac = IdealState::with_initial_reservoir(&model, &Mat::identity(2 * n, 2 * n)).unwrap();
        let mut hot = IdealState::with_initial_reservoir(&model, &(Mat::identity(2 * n, 2 * n) * 50.0)).unwrap();
        let mut last = (Mat::zeros(n, n), Mat::zeros(n, n));
        for &s in &inputs {
            last = (vac.step_x_block(&model, s).unwrap(), hot.step_x_block(&model, s).unwrap());
        }
        let scale = last.0.abs().max();
        prop_assert!((&last.0 - &last.1).abs().max() <= 1e-12 * scale.max(1.0) * 50.0);
    }
}
