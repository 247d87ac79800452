use super::*;
use crate::fixtures::OracleFixture;
use crate::grid_model::Grid2D;
use crate::hessians::{gradient, HessianKind, HessianMetadata};
use crate::linalg::{max_rel_component_err, norm, random_real, rel_err};
use crate::sensitivity::Linearization;
use faer::c64;

fn dense_hessian(m: Mat<f64>) -> HessianMatrix {
    HessianMatrix {
        kind: HessianKind::Gn,
        storage: HessianStorage::Dense(m),
        metadata: HessianMetadata::default(),
    }
}

fn spd(n: usize) -> Mat<f64> {
    let r = random_real(n * n, 77);
    let b = Mat::from_fn(n, n, |i, j| r[i * n + j]);
    let mut a = &b * b.transpose();
    for i in 0..n {
        a[(i, i)] += n as f64;
    }
    a
}

#[test]
fn method_tags_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.tag().parse::<Method>().unwrap(), m);
    }
    assert!(matches!("newton".parse::<Method>(), Err(FwiError::Config(_))));
    assert!(Method::Agn.needs_eps() && Method::AgnSeq.needs_eps() && !Method::Wri.needs_eps());
}

#[test]
fn newton_solve_identity_and_zero_gradient() {
    let g = GradientVector { values: random_real(7, 1) };
    let eye = dense_hessian(Mat::identity(7, 7));
    let dm = newton_solve(&eye, &g, 0.0, NewtonSystem::Symmetrized).unwrap();
    assert!(dm.iter().zip(&g.values).all(|(a, b)| *a == -b));
    let zero = GradientVector { values: vec![0.0; 7] };
    assert!(newton_solve(&eye, &zero, 0.3, NewtonSystem::General).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn newton_solve_handles_indefinite_systems() {
    let mut a = spd(6);
    a[(0, 0)] = -50.0;
    let g = GradientVector { values: random_real(6, 2) };
    let dm = newton_solve(&dense_hessian(a.clone()), &g, 0.0, NewtonSystem::Symmetrized).unwrap();
    let r = &a * Mat::from_fn(6, 1, |i, _| dm[i]);
    for i in 0..6 {
        assert!((r[(i, 0)] + g.values[i]).abs() < 1e-10);
    }
}

/// Quadratic surrogate `φ(m) = ½ (m − m*)ᵀ A (m − m*)`: one undamped step
/// reaches `m*`.
#[test]
fn general_solve_keeps_the_asymmetric_part() {
    let mut a = spd(5);
    a[(0, 3)] += 2.0;
    let g = GradientVector { values: random_real(5, 3) };
    let h = dense_hessian(a.clone());
    let general = newton_solve(&h, &g, 0.0, NewtonSystem::General).unwrap();
    let r = &a * Mat::from_fn(5, 1, |i, _| general[i]);
    for i in 0..5 {
        assert!((r[(i, 0)] + g.values[i]).abs() < 1e-10);
    }
    let sym = newton_solve(&h, &g, 0.0, NewtonSystem::Symmetrized).unwrap();
    assert!(max_rel_component_err(&sym, &general) > 1e-6);
}

#[test]
fn newton_step_is_exact_on_quadratics() {
    let n = 9;
    let grid = Grid2D::new(3, 3, 1.0, 1.0).unwrap();
    let a = spd(n);
    let target: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let phi = |m: &Model| -> Result<f64> {
        let d: Vec<f64> = m.values().iter().zip(&target).map(|(x, t)| x - t).collect();
        let ad = &a * Mat::from_fn(n, 1, |i, _| d[i]);
        Ok(0.5 * (0..n).map(|i| d[i] * ad[(i, 0)]).sum::<f64>())
    };
    let m0 = Model::new(grid, vec![1.3; n]).unwrap();
    let d0: Vec<f64> = m0.values().iter().zip(&target).map(|(x, t)| x - t).collect();
    let g = &a * Mat::from_fn(n, 1, |i, _| d0[i]);
    let g = GradientVector { values: g.col(0).iter().copied().collect() };
    let before = phi(&m0).unwrap();
    let up = newton_step(&dense_hessian(a.clone()), &g, 0.0, NewtonSystem::Symmetrized, Method::Gn, &m0, before, phi).unwrap();
    let m1 = up.apply(&m0).unwrap();
    for (x, t) in m1.values().iter().zip(&target) {
        assert!((x - t).abs() < 1e-10);
    }
    assert_eq!(up.diagnostics.backoffs, 0);
    assert!(!up.diagnostics.stagnated);
}

#[test]
fn newton_step_limits_the_loss_per_node() {
    let grid = Grid2D::new(3, 3, 1.0, 1.0).unwrap();
    let m0 = Model::new(grid, (1..=9).map(|i| 0.5 * i as f64).collect()).unwrap();
    // the undamped step would move every node to -1
    let g = GradientVector { values: m0.values().iter().map(|m| m + 1.0).collect() };
    let h = dense_hessian(Mat::identity(9, 9));
    let up = newton_step(&h, &g, 0.0, NewtonSystem::Symmetrized, Method::Gn, &m0, 1.0, |_| Ok(0.5)).unwrap();
    let m1 = up.apply(&m0).unwrap();
    for (a, b) in m1.values().iter().zip(m0.values()) {
        assert_eq!(*a, (1.0 - POSITIVITY_FRACTION) * b);
    }
}

#[test]
fn newton_step_backs_off_then_stagnates() {
    let grid = Grid2D::new(3, 3, 1.0, 1.0).unwrap();
    let m0 = Model::new(grid, vec![1.0; 9]).unwrap();
    let g = GradientVector { values: random_real(9, 4) };
    let h = dense_hessian(Mat::identity(9, 9));
    let mut calls = 0;
    let up = newton_step(&h, &g, 1e-3, NewtonSystem::Symmetrized, Method::Agn, &m0, 1.0, |_| {
        calls += 1;
        Ok(2.0)
    })
    .unwrap();
    assert!(up.diagnostics.stagnated);
    assert_eq!(calls, MAX_BACKOFFS + 1);
    assert!(up.delta_m.iter().all(|v| *v == 0.0));

    // accept only once the damping has grown past 1
    let up = newton_step(&h, &g, 1e-3, NewtonSystem::Symmetrized, Method::Agn, &m0, 1.0, |m| {
        let step = m.values().iter().zip(m0.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let full = g.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(if step < 0.6 * full { 0.5 } else { 2.0 })
    })
    .unwrap();
    assert!(!up.diagnostics.stagnated);
    assert_eq!(up.diagnostics.backoffs, 3);
    assert!((up.diagnostics.damping.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn psd_step_properties() {
    let fx = OracleFixture::dirichlet();
    let lins = [fx.linearize().unwrap()];
    let g = gradient(&lins).unwrap();
    let before = lins[0].misfit();
    let f = |m: &Model| crate::sensitivity::misfit(m, &fx.geometry, std::slice::from_ref(&fx.observed), fx.boundary);
    let pseudo = crate::hessians::pseudo_hessian(&lins).unwrap();
    let up = psd_step(&pseudo, &g, &fx.model, before, f).unwrap();
    assert!(up.diagnostics.misfit_after.unwrap() < before);

    // a uniform preconditioner leaves the direction parallel to −g
    let uniform = HessianMatrix {
        kind: HessianKind::Pseudo,
        storage: HessianStorage::Diagonal(vec![3.0; g.values.len()]),
        metadata: HessianMetadata::default(),
    };
    let up = psd_step(&uniform, &g, &fx.model, before, f).unwrap();
    let ratio = up.delta_m[0] / g.values[0];
    assert!(ratio < 0.0);
    for (d, gi) in up.delta_m.iter().zip(&g.values) {
        assert!((d - ratio * gi).abs() <= 1e-14 * d.abs().max(1e-300));
    }

    let zero = GradientVector { values: vec![0.0; g.values.len()] };
    let up = psd_step(&pseudo, &zero, &fx.model, before, f).unwrap();
    assert!(up.delta_m.iter().all(|v| *v == 0.0));
}

fn prepared(fx: &OracleFixture, eps_rel: f64) -> (Linearization, f64) {
    let mut lin = fx.linearize().unwrap();
    let eps = eps_rel * lin.data_hessian(0.0).unwrap().mean_diagonal();
    lin.prepare_scattering(eps).unwrap();
    (lin, eps)
}

#[test]
fn sequential_step_zero_without_residual() {
    let fx = OracleFixture::dirichlet();
    let mut lin = fx.linearize_at(&fx.true_model).unwrap();
    lin.prepare_scattering(1e-3).unwrap();
    let up = sequential_step(&[lin]).unwrap();
    assert!(up.delta_m.iter().all(|v| *v == 0.0));
}

#[test]
fn sequential_step_solves_pointwise_equation() {
    let fx = OracleFixture::pml();
    let (mut lin, _) = prepared(&fx, 1e-2);
    lin.bundles.truncate(1);
    let up = sequential_step(std::slice::from_ref(&lin)).unwrap();
    let b = &lin.bundles[0];
    let sc = b.scattering.as_ref().unwrap();
    let w2 = lin.omega().powi(2);
    let mut scale: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for (i, &k) in lin.domain().physical_indices().iter().enumerate() {
        let v = b.wavefield[k] + sc.delta_u[k];
        let num = ((-w2 * v).conj() * sc.delta_b[k]).re;
        let r = up.delta_m[i] * (w2 * w2 * v.norm_sqr() + up.eta) + num;
        worst = worst.max(r.abs());
        scale = scale.max(num.abs());
    }
    assert!(worst <= 1e-14 * scale);
    assert!(up.eta > 0.0 && up.dead_nodes == 0);
}

#[test]
fn assimilated_wavefield_identity_and_normal_residual() {
    for fx in [OracleFixture::dirichlet(), OracleFixture::pml()] {
        for eps_rel in [1e-4, 1e-2, 1.0] {
            let (lin, mu) = prepared(&fx, eps_rel);
            let ue = wri_assimilated_wavefield(&lin, &fx.observed, mu).unwrap();
            assert!(ue.normal_residuals.iter().all(|r| *r < 1e-10), "{:?}", ue.normal_residuals);
            for (s, b) in lin.bundles.iter().enumerate() {
                let sc = b.scattering.as_ref().unwrap();
                let sum: Vec<c64> = b.wavefield.iter().zip(&sc.delta_u).map(|(a, c)| a + c).collect();
                assert!(rel_err(&ue.fields[s], &sum) < 1e-10 * norm(&b.wavefield) / norm(&sum));
                // A u^e − b* is the damped scattering source
                let mut r = lin.fact.operator().apply(&ue.fields[s]);
                for (k, v) in lin.stations.source_vector(s).into_iter().enumerate() {
                    r[k] -= v;
                }
                let diff: Vec<c64> = r.iter().zip(&sc.delta_b).map(|(a, c)| a - c).collect();
                assert!(norm(&diff) < 1e-9 * norm(&lin.stations.source_vector(s)));
            }
        }
    }
}

#[test]
fn assimilated_wavefield_is_forward_field_for_consistent_data() {
    let fx = OracleFixture::pml();
    let lin = fx.linearize_at(&fx.true_model).unwrap();
    let ue = wri_assimilated_wavefield(&lin, &fx.observed, 1e-3).unwrap();
    for (s, b) in lin.bundles.iter().enumerate() {
        assert!(rel_err(&ue.fields[s], &b.wavefield) < 1e-10);
    }
    let (next, up) = wri_update(std::slice::from_ref(&lin), &[ue], &fx.true_model).unwrap();
    let e = max_rel_component_err(next.values(), fx.true_model.values());
    assert!(e < 1e-12, "{e}");
    assert!(up.delta_m.iter().all(|v| v.abs() <= 1e-12 * fx.true_model.values()[0]));
}

#[test]
fn assimilated_wavefield_large_penalty_limit() {
    let fx = OracleFixture::pml();
    let lin = fx.linearize().unwrap();
    let a = lin.fact.operator().matrix();
    // ‖AᴴA‖ ≤ ‖A‖₁ ‖A‖_∞ = ‖A‖₁² for symmetric A; ‖PᴴP‖ = 1
    let col_sum = (0..a.ncols())
        .map(|c| a.as_ref().val_of_col(c).iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mu = 1e10 / (col_sum * col_sum);
    let ue = wri_assimilated_wavefield(&lin, &fx.observed, mu).unwrap();
    for (s, b) in lin.bundles.iter().enumerate() {
        assert!(rel_err(&ue.fields[s], &b.wavefield) < 1e-3);
    }
    assert!(wri_assimilated_wavefield(&lin, &fx.observed, 0.0).is_err());
}

#[test]
fn wri_routes_and_sequential_step_agree() {
    for fx in [OracleFixture::dirichlet(), OracleFixture::pml()] {
        for eps_rel in [1e-4, 1e-2, 1.0] {
            let (lin, mu) = prepared(&fx, eps_rel);
            let lins = [lin];
            let ue = [wri_assimilated_wavefield(&lins[0], &fx.observed, mu).unwrap()];
            let (_, route2) = wri_update(&lins, &ue, &fx.model).unwrap();
            let (_, route3) = wri_update_from_source_residual(&lins, &ue, &fx.model).unwrap();
            let seq = sequential_step(&lins).unwrap();
            let e23 = max_rel_component_err(&route2.delta_m, &route3.delta_m);
            let es = max_rel_component_err(&seq.delta_m, &route2.delta_m);
            assert!(e23 < 1e-10, "routes {e23}");
            assert!(es < 1e-10, "sequential {es}");
        }
    }
}

#[test]
fn sequential_step_is_source_order_invariant() {
    let fx = OracleFixture::pml();
    let (lin, _) = prepared(&fx, 1e-2);
    let a = sequential_step(std::slice::from_ref(&lin)).unwrap();
    let mut rev = lin;
    rev.bundles.reverse();
    let b = sequential_step(&[rev]).unwrap();
    assert!(max_rel_component_err(&a.delta_m, &b.delta_m) < 1e-14);
}

#[test]
fn sequential_step_tends_to_pointwise_gauss_newton() {
    let fx = OracleFixture::pml();
    let mut lin = fx.linearize().unwrap();
    let norm_ss = lin.data_hessian(0.0).unwrap().gram_norm().unwrap();
    lin.prepare_scattering(1e8 * norm_ss).unwrap();
    let seq = sequential_step(std::slice::from_ref(&lin)).unwrap();
    let w2 = lin.omega().powi(2);
    let (mut num, mut den) = (vec![0.0; fx.model.len()], vec![0.0; fx.model.len()]);
    for b in &lin.bundles {
        let db = lin.domain().restrict(&b.scattering.as_ref().unwrap().delta_b);
        for (i, u) in lin.domain().restrict(&b.wavefield).into_iter().enumerate() {
            num[i] += ((-w2 * u).conj() * db[i]).re;
            den[i] += w2 * w2 * u.norm_sqr();
        }
    }
    let eta = 1e-10 * den.iter().copied().fold(0.0, f64::max);
    let gn: Vec<f64> = num.iter().zip(&den).map(|(a, d)| -a / (d + eta)).collect();
    assert!(max_rel_component_err(&seq.delta_m, &gn) < 1e-6);
}
