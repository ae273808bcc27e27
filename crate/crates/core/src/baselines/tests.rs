use super::*;
use crate::exact::exact_forward_loglik;
use crate::model::{Covariates, ModelKind};
use crate::simulate::{generate_covariates, simulate, CovariateKind};
use crate::{cal::cal_loglik, AnyModel};

fn homog(c: &[f64]) -> AnyModel {
    let cov = Covariates::from_columns(vec![("c1".into(), c.to_vec())]).unwrap();
    ModelKind::HomogSis.build(&cov, 1.0).unwrap()
}

fn reference(model: &AnyModel, kind: ModelKind) -> ParamVector {
    kind.reference_params(model.param_space()).unwrap()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn deterministic_fully_observed_matches_exact() {
    let model = homog(&[0.3, -0.2, 1.1, 0.0]);
    let mut theta = reference(&model, ModelKind::HomogSis);
    for (k, v) in [("p0", 1.0), ("gamma", 1e3), ("b_R", 0.0), ("beta", 1e-300)] {
        theta.set(k, v).unwrap();
    }
    for k in ["q_S", "q_I", "q_Se", "q_Sp"] {
        theta.set(k, 1.0).unwrap();
    }
    let (_, y) = simulate(&model, &theta, 3, &RngStream::new(1)).unwrap();
    let exact = exact_forward_loglik(&model, &theta, &y).unwrap();
    for proposal in [Proposal::Bootstrap, Proposal::Auxiliary] {
        let out = pf_loglik(&model, &theta, &y, 16, proposal, &RngStream::new(2)).unwrap();
        assert!((out.loglik - exact).abs() <= 1e-12, "{proposal:?}: {} vs {exact}", out.loglik);
        assert!(out.ess.iter().all(|&e| (e - 16.0).abs() < 1e-9));
    }
}

#[test]
fn decoupled_estimate_centres_on_exact() {
    let model = homog(&[0.4, -0.7]).decoupled();
    let theta = reference(&model, ModelKind::HomogSis);
    let (_, y) = simulate(&model, &theta, 3, &RngStream::new(3)).unwrap();
    let exact = exact_forward_loglik(&model, &theta, &y).unwrap();
    for proposal in [Proposal::Bootstrap, Proposal::Auxiliary] {
        let runs: Vec<f64> = (0..100)
            .map(|r| {
                pf_loglik(&model, &theta, &y, 4096, proposal, &RngStream::new(100 + r))
                    .unwrap()
                    .loglik
            })
            .collect();
        let (mean, std) = mean_std(&runs);
        assert!((mean - exact).abs() <= 2.0 * std, "{proposal:?}: {mean} +- {std} vs {exact}");
    }
}

#[test]
fn sparse_seir_data_starves_few_particles() {
    let kind = ModelKind::SeirLogistic;
    let cov = generate_covariates(kind.covariate_kind(), 1000, &RngStream::new(4)).unwrap();
    let model = kind.build(&cov, 1.0).unwrap();
    let theta = reference(&model, kind);
    let (_, y) = simulate(&model, &theta, 100, &RngStream::new(5)).unwrap();
    let res = pf_loglik(&model, &theta, &y, 2, Proposal::Bootstrap, &RngStream::new(6));
    assert!(matches!(res, Err(Error::Degenerate { .. })), "{res:?}");
}

#[test]
fn impossible_report_is_degenerate_at_its_time() {
    let kind = ModelKind::SeirLogistic;
    let cov = Covariates::from_columns(vec![("c1".into(), vec![0.0; 2])]).unwrap();
    let model = kind.build(&cov, 1.0).unwrap();
    let theta = reference(&model, kind);
    // S is never reported under this parameter set
    let y = ObservationTrajectory::new(2, 4, 2, vec![0, 0, 1, 0]).unwrap();
    for proposal in [Proposal::Bootstrap, Proposal::Auxiliary] {
        let res = pf_loglik(&model, &theta, &y, 8, proposal, &RngStream::new(7));
        assert_eq!(res, Err(Error::Degenerate { t: 2 }));
    }
}

#[test]
fn too_few_particles_rejected() {
    let model = homog(&[0.0]);
    let theta = reference(&model, ModelKind::HomogSis);
    let y = ObservationTrajectory::new(1, 2, 1, vec![0]).unwrap();
    let res = pf_loglik(&model, &theta, &y, 1, Proposal::Bootstrap, &RngStream::new(0));
    assert!(matches!(res, Err(Error::Config(_))));
}

#[test]
fn estimate_is_reproducible_across_thread_counts() {
    let cov = generate_covariates(CovariateKind::GaussianScalar, 40, &RngStream::new(8)).unwrap();
    let model = ModelKind::HomogSis.build(&cov, 1.0).unwrap();
    let theta = reference(&model, ModelKind::HomogSis);
    let (_, y) = simulate(&model, &theta, 10, &RngStream::new(9)).unwrap();
    let run = |threads: usize, proposal: Proposal| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| pf_loglik(&model, &theta, &y, 64, proposal, &RngStream::new(10)).unwrap())
    };
    for proposal in [Proposal::Bootstrap, Proposal::Auxiliary] {
        let a = run(1, proposal);
        assert_eq!(a.loglik.to_bits(), run(4, proposal).loglik.to_bits());
        assert_eq!(a, run(1, proposal));
    }
}

#[test]
fn more_particles_shrink_the_spread() {
    let cov = generate_covariates(CovariateKind::GaussianScalar, 50, &RngStream::new(11)).unwrap();
    let model = ModelKind::HomogSis.build(&cov, 1.0).unwrap();
    let theta = reference(&model, ModelKind::HomogSis);
    let (_, y) = simulate(&model, &theta, 10, &RngStream::new(12)).unwrap();
    let cal = cal_loglik(&model, &theta, &y).unwrap();
    let spread = |p: usize| {
        let runs: Vec<f64> = (0..30)
            .map(|r| {
                pf_loglik(&model, &theta, &y, p, Proposal::Bootstrap, &RngStream::new(200 + r))
                    .unwrap()
                    .loglik
            })
            .collect();
        mean_std(&runs)
    };
    let (_, small) = spread(32);
    let (mean, large) = spread(512);
    assert!(large < small, "{large} !< {small}");
    assert!(mean.is_finite() && cal.is_finite());
}

#[test]
fn guess_follows_reports() {
    // individual 0 always reported, individual 1 never, individual 2 once
    let y = ObservationTrajectory::new(3, 3, 3, vec![1, 0, 0, 2, 0, 3, 3, 0, 0]).unwrap();
    let p = previous_guess(&y, 0.99).unwrap();
    assert_eq!(p.get(1, 0), &[1.0, 0.0, 0.0]);
    assert_eq!(p.get(2, 0), &[0.0, 1.0, 0.0]);
    assert_eq!(p.get(3, 0), &[0.0, 0.0, 1.0]);
    for t in 1..=3 {
        assert_eq!(p.get(t, 1), &[1.0 / 3.0; 3]);
    }
    assert_eq!(p.get(1, 2), &[1.0 / 3.0; 3]);
    assert_eq!(p.get(2, 2), &[0.0, 0.0, 1.0]);
    let g = p.get(3, 2);
    assert_eq!(g[2], 0.99);
    assert!((g[0] - 0.005).abs() < 1e-15 && (g[1] - 0.005).abs() < 1e-15);
}

#[test]
fn guess_confidence_outside_unit_interval_rejected() {
    let y = ObservationTrajectory::new(1, 2, 1, vec![0]).unwrap();
    for g in [0.0, 1.0, -0.5, f64::NAN] {
        assert!(matches!(previous_guess(&y, g), Err(Error::Config(_))));
    }
}

#[test]
fn random_baseline_examples() {
    let y = ObservationTrajectory::new(2, 3, 1, vec![0, 1]).unwrap();
    let p = random_baseline(&y);
    assert_eq!(p.get(1, 0), &[1.0 / 3.0; 3]);
    assert_eq!(p.get(1, 1), &[1.0, 0.0, 0.0]);
    let y2 = ObservationTrajectory::new(1, 2, 1, vec![0]).unwrap();
    assert_eq!(random_baseline(&y2).get(1, 0), &[0.5, 0.5]);
}

#[test]
fn perfect_and_uniform_scores() {
    let x = LatentTrajectory::new(2, 3, 2, vec![0, 1, 2, 0, 1, 1]).unwrap();
    let mut probs = Vec::new();
    for t in 1..=2 {
        for &s in x.at(t) {
            probs.extend((0..3).map(|i| f64::from(u8::from(i == s as usize))));
        }
    }
    let perfect = StatePredictions::new(2, 3, 2, probs).unwrap();
    assert_eq!(cross_entropy(&x, &perfect).unwrap(), 0.0);
    assert_eq!(accuracy(&x, &perfect).unwrap(), 100.0);
    let uniform = StatePredictions::new(2, 3, 2, vec![1.0 / 3.0; 12]).unwrap();
    assert!((cross_entropy(&x, &uniform).unwrap() - 3f64.ln()).abs() < 1e-15);
}

#[test]
fn zero_probability_truth_is_floored() {
    let x = LatentTrajectory::new(1, 2, 1, vec![0, 1]).unwrap();
    let p = StatePredictions::new(1, 2, 1, vec![1.0, 0.0]).unwrap();
    assert_eq!(cross_entropy(&x, &p).unwrap(), -LOG_FLOOR);
    assert_eq!(accuracy(&x, &p).unwrap(), 0.0);
}

#[test]
fn score_shapes_checked() {
    let x = LatentTrajectory::new(2, 2, 1, vec![0; 4]).unwrap();
    let p = StatePredictions::new(1, 2, 1, vec![0.5; 2]).unwrap();
    assert!(matches!(cross_entropy(&x, &p), Err(Error::ShapeMismatch(_))));
    assert!(matches!(accuracy(&x, &p), Err(Error::ShapeMismatch(_))));
    assert!(matches!(
        StatePredictions::new(1, 2, 1, vec![0.5; 3]),
        Err(Error::ShapeMismatch(_))
    ));
}

#[test]
fn random_accuracy_on_unreported_uniform_states() {
    let (n, m, horizon) = (3000, 3, 1);
    let mut rng = RngStream::new(13);
    let states: Vec<u8> = (0..(horizon + 1) * n)
        .map(|_| sample_index(&[1.0 / 3.0; 3], &mut rng) as u8)
        .collect();
    let x = LatentTrajectory::new(n, m, horizon, states).unwrap();
    let y = ObservationTrajectory::new(n, m, horizon, vec![0; n * horizon]).unwrap();
    let acc = accuracy(&x, &random_baseline(&y)).unwrap();
    let p = 1.0 / m as f64;
    let band = 300.0 * (p * (1.0 - p) / (n * horizon) as f64).sqrt();
    assert!((acc - 100.0 * p).abs() <= band, "{acc}");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn observations() -> impl Strategy<Value = ObservationTrajectory> {
        (1usize..6, 2usize..5, 1usize..6).prop_flat_map(|(n, m, t)| {
            prop::collection::vec(0u8..=m as u8, n * t)
                .prop_map(move |d| ObservationTrajectory::new(n, m, t, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn guesses_are_distributions(y in observations(), g in 0.01f64..0.99) {
            let p = previous_guess(&y, g).unwrap();
            for t in 1..=y.horizon() {
                for n in 0..y.population() {
                    let v = p.get(t, n);
                    prop_assert!(v.iter().all(|&x| x >= 0.0));
                    prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn confident_guess_sticks_to_last_report(y in observations()) {
            let p = previous_guess(&y, 1.0 - 1e-9).unwrap();
            for n in 0..y.population() {
                let mut last = None;
                for t in 1..=y.horizon() {
                    let o = y.obs(t, n);
                    if o > 0 {
                        last = Some(o - 1);
                    }
                    if let Some(s) = last {
                        prop_assert_eq!(argmax_index(p.get(t, n)), s);
                    }
                }
            }
        }
    }
}
