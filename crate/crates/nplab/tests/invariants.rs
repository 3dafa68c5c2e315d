use std::f64::consts::PI;
use std::sync::Arc;

use nplab::curves::{make_ellipse, make_lens};
use nplab::mesh::{build_panel_mesh, build_uniform_mesh, GradingSpec, Mesh};
use nplab::operators::{assemble_k_star, assemble_s, build_s_gram, gauss_identity_residual, kernel_bound_ratio};
use nplab::spectral::{
    coverage_fraction, half_width, merge_intervals, parity_projectors, predict_essential_spectrum, solve_s_symmetric, Interval, Parity, SolveOptions,
    SpectralResult,
};
use proptest::prelude::*;

fn solve(mesh: &Mesh, parity: Option<usize>) -> SpectralResult {
    let ks = assemble_k_star(mesh).unwrap();
    let s = assemble_s(mesh, 1.0).unwrap();
    let g = build_s_gram(&s, mesh).unwrap();
    solve_s_symmetric(&ks, &s, &g, mesh, SolveOptions { parity, vectors: false }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ellipse_spectrum_is_paired_and_bounded(rho in 0.5f64..1.5, half_n in 32usize..64, sym in 0usize..2) {
        let mesh = build_uniform_mesh(Arc::new(make_ellipse(1.0, rho).unwrap()), 2 * half_n).unwrap();
        let r = solve(&mesh, Some(sym));
        prop_assert!(r.eigenvalues.iter().all(|l| l.abs() < 0.5));
        // resolved eigenvalues come in ±λ pairs; the tail near zero is discretisation noise
        let mut sorted = r.eigenvalues.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for k in 0..sorted.len() {
            if sorted[k].abs() > 1e-4 {
                prop_assert!((sorted[k] + sorted[sorted.len() - 1 - k]).abs() < 1e-9);
            }
        }
        for n in 1..=2 {
            let a = 0.5 * (-2.0 * n as f64 * rho).exp();
            let kp = r.nearest(a, None).unwrap();
            let km = r.nearest(-a, None).unwrap();
            prop_assert!(r.parity[kp] != Parity::None);
            prop_assert_eq!(r.parity[km], r.parity[kp].opposite());
        }
        let ks = assemble_k_star(&mesh).unwrap();
        prop_assert!(kernel_bound_ratio(&ks, &mesh) <= 1.0 + 1e-12);
        prop_assert!(parity_projectors(&mesh, sym).unwrap().cross_block_norm(&ks.matrix) < 1e-10);
    }

    // Plain Nyström resolves the corner continuum while the half-width stays below about 0.3.
    #[test]
    fn lens_blocks_decouple_and_stay_inside(theta_over_pi in 0.55f64..0.8, depth in 4usize..9) {
        let lens = Arc::new(make_lens(theta_over_pi * PI, 2.0).unwrap());
        let mesh = build_panel_mesh(lens.clone(), &GradingSpec { depth, base_panels: 8, ..Default::default() }, Some(0)).unwrap();
        let ks = assemble_k_star(&mesh).unwrap();
        prop_assert!(parity_projectors(&mesh, 0).unwrap().cross_block_norm(&ks.matrix) < 1e-10);
        let r = solve(&mesh, Some(0));
        prop_assert!(r.eigenvalues.iter().all(|l| *l > -0.5 && *l < 0.5));
        prop_assert_eq!(r.half.lambda, 0.5);
        let gauss = gauss_identity_residual(&ks, &mesh).unwrap();
        prop_assert!(gauss.weighted_rms < 1e-2);
        let pred = predict_essential_spectrum(&lens, Some(&lens.symmetries()[0]));
        let b = theta_over_pi - 0.5;
        prop_assert!((pred.even[0].hi - b).abs() < 1e-12 && pred.even[0].lo == 0.0);
        prop_assert!((pred.odd[0].lo + b).abs() < 1e-12 && pred.odd[0].hi == 0.0);
    }

    #[test]
    fn half_width_is_reflection_symmetric(t in 0.01f64..0.99) {
        prop_assert!((half_width(t * PI) - half_width((1.0 - t) * PI)).abs() < 1e-14);
        prop_assert!(half_width(t * PI) < 0.5);
    }

    #[test]
    fn merged_intervals_are_disjoint_and_cover(raw in prop::collection::vec((-1.0f64..1.0, 0.0f64..0.5), 1..8)) {
        let ivs: Vec<Interval> = raw.iter().map(|&(lo, w)| Interval::new(lo, lo + w)).collect();
        let merged = merge_intervals(ivs.clone());
        prop_assert!(merged.windows(2).all(|w| w[0].hi < w[1].lo));
        for iv in &ivs {
            prop_assert!(merged.iter().any(|m| m.lo <= iv.lo && iv.hi <= m.hi));
        }
    }

    #[test]
    fn coverage_is_a_monotone_fraction(vals in prop::collection::vec(-0.5f64..0.5, 0..60), extra in -0.5f64..0.5) {
        let iv = Interval::new(-0.25, 0.25);
        let f = coverage_fraction(&vals, iv, 0.01);
        prop_assert!((0.0..=1.0).contains(&f));
        let mut more = vals.clone();
        more.push(extra);
        prop_assert!(coverage_fraction(&more, iv, 0.01) >= f);
    }
}
