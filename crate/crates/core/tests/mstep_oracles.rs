mod common;

use common::*;
use omix::batch::{batch_em, expected_stats, BatchConfig};
use omix::datagen::sample_mixture;
use omix::linalg::orthogonality_error;
use omix::mixture::{Family, MixtureModel, MstComponent};
use omix::mstep::{
    component_expected_stats, q_component, thetabar_gaussian, thetabar_mst, update_a, update_mu, ComponentMoments,
    MstOptions, COVARIANCE_RIDGE,
};
use omix::{Dataset, SufficientStats};

/// Statistics a model would produce in expectation, component by component.
fn model_expected_stats(model: &MixtureModel) -> SufficientStats {
    let mut s = SufficientStats::zeros(model.family(), model.k(), model.dim());
    for k in 0..model.k() {
        let c = component_expected_stats(model, k, None, model.weights()[k]).unwrap();
        s.component_mut(k).copy_from_slice(c.component(0));
    }
    s
}

#[test]
fn gaussian_mstep_matches_weighted_sample_moments() {
    let mut r = rng(21);
    let truth = random_gaussian_model(&mut r, 3, 2, 3.0);
    let (data, _) = sample_mixture(&truth, 3000, 5).unwrap();
    let s = expected_stats(&truth, &data).unwrap().stats;
    let fitted = thetabar_gaussian(&s).unwrap();

    // responsibilities recomputed row by row, moments formed the long way
    let n = data.len();
    for k in 0..3 {
        let mut mass = 0.0;
        let mut mean = [0.0; 2];
        let resp: Vec<f64> = (0..n)
            .map(|i| truth.responsibilities(data.row(i)).unwrap().weights[k])
            .collect();
        for i in 0..n {
            mass += resp[i];
            for j in 0..2 {
                mean[j] += resp[i] * data.row(i)[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= mass);
        let mut cov = [0.0; 4];
        for i in 0..n {
            let y = data.row(i);
            for a in 0..2 {
                for b in 0..2 {
                    cov[a * 2 + b] += resp[i] * (y[a] - mean[a]) * (y[b] - mean[b]);
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= mass);
        let c = &fitted.gaussian_components().unwrap()[k];
        assert!((fitted.weights()[k] - mass / n as f64).abs() < 1e-12);
        for j in 0..2 {
            assert!((c.mu()[j] - mean[j]).abs() < 1e-10);
        }
        let ridge = COVARIANCE_RIDGE * 0.5 * (cov[0] + cov[3]);
        for (i, (got, want)) in c.sigma().iter().zip(cov).enumerate() {
            let want = if i % 3 == 0 { want + ridge } else { want };
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn gaussian_mstep_is_idempotent_up_to_the_ridge() {
    let mut r = rng(22);
    for _ in 0..20 {
        let truth = random_gaussian_model(&mut r, 3, 3, 2.0);
        let fitted = thetabar_gaussian(&model_expected_stats(&truth)).unwrap();
        for (w, v) in truth.weights().iter().zip(fitted.weights()) {
            assert!((w - v).abs() < 1e-14);
        }
        let pairs = truth.gaussian_components().unwrap().iter().zip(fitted.gaussian_components().unwrap());
        for (a, b) in pairs {
            for (x, y) in a.mu().iter().zip(b.mu()) {
                assert!((x - y).abs() < 1e-12);
            }
            let avg_var = (0..3).map(|i| a.sigma()[i * 4]).sum::<f64>() / 3.0;
            for (x, y) in a.sigma().iter().zip(b.sigma()) {
                assert!((x - y).abs() <= 2.0 * COVARIANCE_RIDGE * avg_var, "{x} vs {y}");
            }
        }
    }
}

fn assert_same_mst(a: &MstComponent, b: &MstComponent, tol: f64) {
    for (x, y) in a.mu().iter().zip(b.mu()) {
        assert!((x - y).abs() < tol, "mu {x} vs {y}");
    }
    for (x, y) in a.scale_matrix().iter().zip(b.scale_matrix()) {
        assert!((x - y).abs() < tol, "scale {x} vs {y}");
    }
    let mut pa: Vec<(f64, f64)> = a.a().iter().copied().zip(a.nu().iter().copied()).collect();
    let mut pb: Vec<(f64, f64)> = b.a().iter().copied().zip(b.nu().iter().copied()).collect();
    pa.sort_by(|x, y| x.0.total_cmp(&y.0));
    pb.sort_by(|x, y| x.0.total_cmp(&y.0));
    for (x, y) in pa.iter().zip(&pb) {
        assert!((x.0 - y.0).abs() < tol, "A {x:?} vs {y:?}");
        assert!((x.1 - y.1).abs() < tol * x.1.max(1.0), "nu {x:?} vs {y:?}");
    }
}

#[test]
fn mst_mstep_is_idempotent_at_expected_statistics() {
    let mut r = rng(23);
    for _ in 0..10 {
        let truth = random_mst_model(&mut r, 2, 3, 2.0, (1.0, 40.0));
        let s = model_expected_stats(&truth);
        let (fitted, report) = thetabar_mst(&s, &truth, &MstOptions::default()).unwrap();
        assert!(report.converged);
        for (a, b) in truth.mst_components().unwrap().iter().zip(fitted.mst_components().unwrap()) {
            assert_same_mst(a, b, 1e-8);
        }
    }
}

#[test]
fn mst_mstep_recovers_the_basis_from_a_rotated_start() {
    let mut r = rng(24);
    for _ in 0..10 {
        let truth = random_mst_model(&mut r, 1, 3, 1.0, (2.0, 10.0));
        let c = &truth.mst_components().unwrap()[0];
        // well separated scales so the basis is identifiable
        let sorted = MstComponent::from_axes(c.mu().to_vec(), c.axes().to_vec(), vec![0.5, 1.5, 4.0], c.nu().to_vec())
            .unwrap();
        let truth = MixtureModel::mst(vec![1.0], vec![sorted]).unwrap();
        let s = model_expected_stats(&truth);
        let start = MixtureModel::mst(
            vec![1.0],
            vec![MstComponent::from_axes(vec![0.0; 3], random_orthogonal(&mut r, 3), vec![1.0; 3], vec![5.0; 3]).unwrap()],
        )
        .unwrap();
        let (fitted, _) = thetabar_mst(&s, &start, &MstOptions::default()).unwrap();
        let f = &fitted.mst_components().unwrap()[0];
        for (x, y) in truth.mst_components().unwrap()[0].scale_matrix().iter().zip(f.scale_matrix()) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }
}

#[test]
fn axis_aligned_statistics_keep_the_identity_basis() {
    let identity = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let c = MstComponent::from_axes(vec![1.0, -2.0, 0.5], identity.clone(), vec![0.7, 2.0, 1.3], vec![4.0, 9.0, 2.5])
        .unwrap();
    let truth = MixtureModel::mst(vec![1.0], vec![c]).unwrap();
    let s = model_expected_stats(&truth);
    let (fitted, _) = thetabar_mst(&s, &truth, &MstOptions::default()).unwrap();
    let axes = fitted.mst_components().unwrap()[0].axes();
    for (x, y) in axes.iter().zip(&identity) {
        assert!((x.abs() - y).abs() < 1e-12, "{axes:?}");
    }
}

/// Random but valid MST statistics from data under a mismatched model.
fn random_mst_stats(seed: u64, k: usize, d: usize) -> (SufficientStats, MixtureModel) {
    let mut r = rng(seed);
    let truth = random_mst_model(&mut r, k, d, 2.0, (1.0, 20.0));
    let under = random_mst_model(&mut r, k, d, 2.0, (1.0, 20.0));
    (random_valid_stats(&truth, &under, 2000, seed), under)
}

#[test]
fn mu_update_is_the_argmax_for_a_fixed_basis() {
    for seed in 0..10 {
        let (s, under) = random_mst_stats(100 + seed, 1, 3);
        let moments = ComponentMoments::from_stats(&s, 0).unwrap();
        let c = &under.mst_components().unwrap()[0];
        let mu = update_mu(&moments, c.axes()).unwrap();
        let q = |m: &[f64]| q_component(&moments, m, c.axes(), c.a(), c.nu());
        let best = q(&mu);
        let mut r = rng(seed);
        for _ in 0..50 {
            let probe: Vec<f64> = mu.iter().map(|v| v + 1e-3 * normal(&mut r)).collect();
            assert!(q(&probe) <= best, "probe beats the update");
        }
        for i in 0..3 {
            let h = 1e-5;
            let mut up = mu.clone();
            let mut dn = mu.clone();
            up[i] += h;
            dn[i] -= h;
            assert!(((q(&up) - q(&dn)) / (2.0 * h)).abs() < 1e-6);
        }
    }
}

#[test]
fn a_update_maximizes_along_each_axis() {
    let (s, under) = random_mst_stats(31, 1, 2);
    let moments = ComponentMoments::from_stats(&s, 0).unwrap();
    let c = &under.mst_components().unwrap()[0];
    let mu = update_mu(&moments, c.axes()).unwrap();
    let (a, floored) = update_a(&moments, c.axes(), &mu);
    assert_eq!(floored, 0);
    let best = q_component(&moments, &mu, c.axes(), &a, c.nu());
    for m in 0..2 {
        for f in [0.9, 0.99, 1.01, 1.1] {
            let mut probe = a.clone();
            probe[m] *= f;
            assert!(q_component(&moments, &mu, c.axes(), &probe, c.nu()) < best);
        }
    }
}

#[test]
fn mstep_is_translation_equivariant() {
    let mut r = rng(41);
    let truth = random_mst_model(&mut r, 2, 2, 3.0, (2.0, 15.0));
    let (data, _) = sample_mixture(&truth, 2000, 9).unwrap();
    let shift = [7.5, -3.25];
    let moved: Vec<f64> = data.as_slice().chunks_exact(2).flat_map(|y| [y[0] + shift[0], y[1] + shift[1]]).collect();
    let moved = Dataset::new(2, moved).unwrap();
    let moved_truth = MixtureModel::mst(
        truth.weights().to_vec(),
        truth
            .mst_components()
            .unwrap()
            .iter()
            .map(|c| {
                let mu = c.mu().iter().zip(shift).map(|(m, s)| m + s).collect();
                MstComponent::from_axes(mu, c.axes().to_vec(), c.a().to_vec(), c.nu().to_vec()).unwrap()
            })
            .collect(),
    )
    .unwrap();
    let opts = MstOptions::default();
    let (a, _) = thetabar_mst(&expected_stats(&truth, &data).unwrap().stats, &truth, &opts).unwrap();
    let (b, _) = thetabar_mst(&expected_stats(&moved_truth, &moved).unwrap().stats, &moved_truth, &opts).unwrap();
    for (x, y) in a.mst_components().unwrap().iter().zip(b.mst_components().unwrap()) {
        for m in 0..2 {
            assert!((x.a()[m] - y.a()[m]).abs() < 1e-7 * x.a()[m]);
            assert!((x.nu()[m] - y.nu()[m]).abs() < 1e-6 * x.nu()[m]);
            assert!((x.mu()[m] + shift[m] - y.mu()[m]).abs() < 1e-7);
        }
    }
}

#[test]
fn fitted_bases_are_orthonormal() {
    for seed in 0..20 {
        let (s, under) = random_mst_stats(200 + seed, 2, 3);
        match thetabar_mst(&s, &under, &MstOptions::default()) {
            Ok((m, _)) => {
                for c in m.mst_components().unwrap() {
                    assert!(orthogonality_error(c.axes(), 3) <= 1e-10);
                }
            }
            Err(omix::Error::Starved { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn nu_two_is_recovered_from_planted_statistics() {
    let identity = vec![1.0, 0.0, 0.0, 1.0];
    let c = MstComponent::from_axes(vec![0.0, 0.0], identity, vec![1.0, 1.0], vec![2.0, 2.0]).unwrap();
    let truth = MixtureModel::mst(vec![1.0], vec![c]).unwrap();
    let start = MixtureModel::mst(
        vec![1.0],
        vec![MstComponent::from_axes(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0], vec![1.0, 1.0], vec![30.0, 30.0]).unwrap()],
    )
    .unwrap();
    let (fitted, report) = thetabar_mst(&model_expected_stats(&truth), &start, &MstOptions::default()).unwrap();
    for nu in fitted.mst_components().unwrap()[0].nu() {
        assert!((nu - 2.0).abs() < 1e-8, "{nu}");
    }
    assert!(report.nu_residuals.iter().all(|g| g.abs() < 1e-10));
}

#[test]
fn batch_em_recovers_an_mst_component_from_samples() {
    let identity = vec![1.0, 0.0, 0.0, 1.0];
    let c = MstComponent::from_axes(vec![1.0, -1.0], identity, vec![0.5, 2.0], vec![3.0, 12.0]).unwrap();
    let truth = MixtureModel::mst(vec![1.0], vec![c]).unwrap();
    let (data, _) = sample_mixture(&truth, 100_000, 77).unwrap();
    let init = omix::batch::initial_model(&data, Family::Mst, 1, 3).unwrap();
    let fit = batch_em(&data, init, &BatchConfig::default()).unwrap();
    let f = &fit.model.mst_components().unwrap()[0];
    for m in 0..2 {
        assert!((f.mu()[m] - [1.0, -1.0][m]).abs() < 0.02, "{:?}", f.mu());
    }
    let mut pairs: Vec<(f64, f64)> = f.a().iter().copied().zip(f.nu().iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    assert!((pairs[0].0 - 0.5).abs() < 0.03 && (pairs[1].0 - 2.0).abs() < 0.08, "{pairs:?}");
    assert!((pairs[0].1 - 3.0).abs() < 0.3 && (pairs[1].1 - 12.0).abs() < 3.0, "{pairs:?}");
}
