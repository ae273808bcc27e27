use super::*;
use crate::model::{
    dense_interaction, emission_matrix, initial_distribution, interaction, transition_matrix, Domain,
};
use crate::prob::RngStream;
use crate::simulate::generate_covariates;

fn cov_for(kind: ModelKind, n: usize, seed: u64) -> Covariates {
    generate_covariates(kind.covariate_kind(), n, &RngStream::new(seed)).unwrap()
}

fn reference(kind: ModelKind, model: &AnyModel) -> ParamVector {
    kind.reference_params(model.param_space()).unwrap()
}

fn random_theta(space: &Arc<ParamSpace>, rng: &mut RngStream) -> ParamVector {
    let values = space
        .entries()
        .iter()
        .map(|e| e.lower + rng.uniform() * (e.upper - e.lower))
        .collect();
    ParamVector::new(space.clone(), values).unwrap()
}

fn scalar_cov(c: &[f64]) -> Covariates {
    Covariates::from_columns(vec![("c1".into(), c.to_vec())]).unwrap()
}

fn points_cov(z: &[[f64; 2]], c: &[f64], extra: Vec<(&str, Vec<f64>)>) -> Covariates {
    let n = z.len();
    let mut names = vec!["c1".to_string()];
    let mut cols = vec![c.to_vec()];
    for (name, col) in extra {
        names.push(name.into());
        cols.push(col);
    }
    let values = (0..n).flat_map(|i| cols.iter().map(move |col| col[i])).collect();
    Covariates::new(
        (0..n).map(|i| i.to_string()).collect(),
        None,
        Some(z.to_vec()),
        names,
        values,
    )
    .unwrap()
}

fn gaussian(d2: f64, phi: f64) -> f64 {
    (-d2 / (2.0 * phi * phi)).exp() / (2.0 * std::f64::consts::PI * phi * phi).sqrt()
}

fn set(theta: &mut ParamVector, pairs: &[(&str, f64)]) {
    for (k, v) in pairs {
        theta.set(k, *v).unwrap();
    }
}

#[test]
fn homogeneous_initial_distribution() {
    let kind = ModelKind::HomogSis;
    let model = kind.build(&scalar_cov(&[0.3, -1.0]), 1.0).unwrap();
    let p = initial_distribution(&model, &reference(kind, &model), 1).unwrap();
    assert_eq!(p.as_slice(), &[0.99, 0.01]);
}

#[test]
fn sir_outside_seed_region_starts_susceptible() {
    let cov = points_cov(&[[7.0, 9.0], [1.0, 9.0]], &[0.0, 0.0], vec![]);
    let model = ModelKind::SirWellspec.build(&cov, 1.0).unwrap();
    let theta = reference(ModelKind::SirWellspec, &model);
    let outside = initial_distribution(&model, &theta, 0).unwrap();
    assert_eq!(outside.as_slice(), &[1.0, 0.0, 0.0]);
    let inside = initial_distribution(&model, &theta, 1).unwrap();
    assert_eq!(inside.as_slice(), &[0.5, 0.5, 0.0]);
}

#[test]
fn seir_seed_probability() {
    let kind = ModelKind::SeirLogistic;
    let model = kind.build(&scalar_cov(&[0.0]), 1.0).unwrap();
    let p = initial_distribution(&model, &reference(kind, &model), 0).unwrap();
    assert!((p.as_slice()[2] - 1.0 / (1.0 + 99.0)).abs() < 1e-15);
    assert_eq!(p.as_slice()[1], 0.0);
}

#[test]
fn sis_kernel_examples() {
    let kind = ModelKind::HomogSis;
    let model = kind.build(&scalar_cov(&[0.0]), 1.0).unwrap();
    let theta = reference(kind, &model);
    let k = transition_matrix(&model, &theta, 0, &[0.0]).unwrap();
    assert_eq!(k.row(0), &[1.0, 0.0]);
    assert!((k.get(1, 1) - (-0.1f64).exp()).abs() < 1e-15);
    assert!((k.get(1, 1) - 0.904_837).abs() < 1e-6);
}

#[test]
fn certain_culling_removes() {
    let kind = ModelKind::CullingSir;
    let model = kind.build(&cov_for(kind, 20, 3), 1.0).unwrap();
    let theta = reference(kind, &model);
    let mut k = vec![0.0; 9];
    model.transition(theta.values(), &[1.0, 1.0, 0.0], 0, &[0.0, 1e4], &mut k);
    assert_eq!(&k[0..3], &[0.0, 0.0, 1.0]);
    assert_eq!(&k[3..6], &[0.0, 0.0, 1.0]);
}

#[test]
fn emission_examples() {
    let kind = ModelKind::HomogSis;
    let model = kind.build(&scalar_cov(&[0.0]), 1.0).unwrap();
    let mut theta = reference(kind, &model);
    let g = emission_matrix(&model, &theta, 0).unwrap();
    let expected = [1.0 - 0.2, 0.2 * 0.95, 0.2 * (1.0 - 0.95)];
    for (a, b) in g.row(0).iter().zip(expected) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!((g.row(0)[1] - 0.19).abs() < 1e-15 && (g.row(0)[2] - 0.01).abs() < 1e-15);

    set(&mut theta, &[("q_S", 0.0), ("q_I", 0.0)]);
    let g = emission_matrix(&model, &theta, 0).unwrap();
    assert_eq!(g.as_slice(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn unobserved_individual_never_reported() {
    let cov = points_cov(
        &[[1.0, 1.0], [2.0, 2.0]],
        &[0.0, 0.0],
        vec![("unobserved", vec![1.0, 0.0])],
    );
    let model = ModelKind::SirWellspec.build(&cov, 1.0).unwrap();
    let theta = reference(ModelKind::SirWellspec, &model);
    let g = emission_matrix(&model, &theta, 0).unwrap();
    for x in 0..3 {
        assert_eq!(g.row(x), &[1.0, 0.0, 0.0, 0.0]);
    }
    let g = emission_matrix(&model, &theta, 1).unwrap();
    assert_eq!(g.row(2), &[0.5, 0.0, 0.0, 0.5]);
}

#[test]
fn two_individual_interaction() {
    let kind = ModelKind::HomogSis;
    let model = kind.build(&scalar_cov(&[0.0, 0.0]), 1.0).unwrap();
    let theta = reference(kind, &model);
    let eta = interaction(&model, &theta, &[0.0, 1.0, 1.0, 0.0]).unwrap();
    assert_eq!(eta.values, vec![0.5, 0.5]);

    let off = model.clone().decoupled();
    let eta = interaction(&off, &theta, &[0.0, 1.0, 0.3, 0.7]).unwrap();
    assert_eq!(eta.values, vec![0.0, 0.0]);
}

#[test]
fn spatial_interaction_matches_hand_expansion() {
    let z = [[0.0, 0.0], [1.0, 0.5], [3.0, -1.0]];
    let c = [0.4, -0.2, 1.1];
    let cov = points_cov(&z, &c, vec![]);
    let kind = ModelKind::SpatialSis;
    let model = kind.build(&cov, 1.0).unwrap();
    let mut theta = reference(kind, &model);
    set(&mut theta, &[("phi", 1.3), ("b_I", 0.7)]);
    let pi = [0.2, 0.8, 0.9, 0.1, 0.5, 0.5];
    let eta = interaction(&model, &theta, &pi).unwrap();
    for n in 0..3 {
        let mut want = 0.0;
        for k in 0..3 {
            let d2 = (z[n][0] - z[k][0]).powi(2) + (z[n][1] - z[k][1]).powi(2);
            want += (0.7 * c[k]).exp() * gaussian(d2, 1.3) * pi[2 * k + 1];
        }
        want /= 3.0;
        assert!((eta.get(n)[0] - want).abs() < 1e-15 * want.max(1.0), "{n}");
    }
}

#[test]
fn disjoint_communities_only_mix_within() {
    let z = [[0.0, 0.0], [0.0, 0.0], [100.0, 100.0], [100.0, 100.0]];
    let c = [0.5, -0.5, 1.0, 0.0];
    let mut cov = points_cov(&z, &c, vec![]);
    cov.community = Some(vec![0, 0, 1, 1]);
    let kind = ModelKind::CommunitySis;
    let model = kind.build(&cov, 1.0).unwrap();
    let mut theta = reference(kind, &model);
    set(&mut theta, &[("phi", 0.1), ("b_I", 0.8)]);
    let infected = [0.3, 0.6, 0.1, 0.9];
    let pi: Vec<f64> = infected.iter().flat_map(|&p| [1.0 - p, p]).collect();
    let eta = interaction(&model, &theta, &pi).unwrap();
    let w = 1.0 / (2.0 * std::f64::consts::PI * 0.01).sqrt();
    let group = |ks: [usize; 2]| {
        ks.iter().map(|&k| (0.8 * c[k]).exp() * infected[k]).sum::<f64>() * w / 4.0
    };
    let (a, b) = (group([0, 1]), group([2, 3]));
    let want = [a, a, b, b];
    for n in 0..4 {
        assert!((eta.get(n)[0] - want[n]).abs() < 1e-14 * want[n].max(1.0));
    }
}

fn assert_matches_dense(kind: ModelKind, n: usize, seed: u64) {
    let model = kind.build(&cov_for(kind, n, seed), 1.0).unwrap();
    let mut rng = RngStream::new(seed + 1);
    let theta = random_theta(model.param_space(), &mut rng);
    let m = model.num_states();
    let pi: Vec<f64> = (0..n)
        .flat_map(|_| {
            let raw: Vec<f64> = (0..m).map(|_| rng.uniform()).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(move |r| r / s)
        })
        .collect();
    let fast = interaction(&model, &theta, &pi).unwrap();
    let mut dense = vec![0.0; n * model.num_channels()];
    dense_interaction(&model, theta.values(), &pi, &mut dense);
    for (i, (a, b)) in fast.values.iter().zip(&dense).enumerate() {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{kind} {i}: {a} vs {b}");
    }
}

#[test]
fn grouped_interaction_equals_dense() {
    assert_matches_dense(ModelKind::CommunitySis, 100, 11);
    assert_matches_dense(ModelKind::SirMisspec, 100, 12);
    assert_matches_dense(ModelKind::CullingSir, 100, 13);
}

#[test]
fn single_community_equals_dense() {
    let z = vec![[2.0, 3.0]; 6];
    let mut cov = points_cov(&z, &[0.1, 0.2, -0.3, 0.4, 0.0, 1.0], vec![]);
    cov.community = Some(vec![0; 6]);
    let model = ModelKind::CommunitySis.build(&cov, 1.0).unwrap();
    let theta = reference(ModelKind::CommunitySis, &model);
    let pi = [0.5, 0.5, 1.0, 0.0, 0.2, 0.8, 0.0, 1.0, 0.9, 0.1, 0.4, 0.6];
    let fast = interaction(&model, &theta, &pi).unwrap();
    let mut dense = vec![0.0; 6];
    dense_interaction(&model, theta.values(), &pi, &mut dense);
    for (a, b) in fast.values.iter().zip(&dense) {
        assert!((a - b).abs() <= 1e-14 * b.max(1.0));
    }
}

#[test]
fn point_interaction_equals_dense() {
    assert_matches_dense(ModelKind::SpatialSis, 60, 21);
    assert_matches_dense(ModelKind::SirWellspec, 60, 22);
    assert_matches_dense(ModelKind::HomogSis, 30, 23);
    assert_matches_dense(ModelKind::SeirLogistic, 30, 24);
}

fn rows_sum_to_one(block: &[f64], cols: usize) -> bool {
    block.chunks(cols).all(|r| {
        r.iter().all(|&x| x >= 0.0) && (r.iter().sum::<f64>() - 1.0).abs() <= 1e-12
    })
}

#[test]
fn kernels_are_stochastic_over_random_parameters() {
    for (i, kind) in ModelKind::ALL.into_iter().enumerate() {
        let model = kind.build(&cov_for(kind, 40, 30 + i as u64), 1.0).unwrap();
        let (m, ch) = (model.num_states(), model.num_channels());
        assert_eq!(m, kind.num_states());
        let mut rng = RngStream::new(100 + i as u64);
        for _ in 0..1000 {
            let theta = random_theta(model.param_space(), &mut rng);
            let th = theta.values();
            let prep = model.prepare(th);
            let n = (rng.uniform() * 40.0) as usize % 40;
            let eta: Vec<f64> = (0..ch)
                .map(|_| rng.uniform().powi(4) * model.interaction_bound())
                .collect();
            let mut p = vec![0.0; m];
            model.initial(th, prep.row(n), n, &mut p);
            let mut k = vec![0.0; m * m];
            model.transition(th, prep.row(n), n, &eta, &mut k);
            let mut g = vec![0.0; m * (m + 1)];
            model.emission(th, prep.row(n), n, &mut g);
            assert!(rows_sum_to_one(&p, m), "{kind} p0 {p:?}");
            assert!(rows_sum_to_one(&k, m), "{kind} K {k:?} at {eta:?}");
            assert!(rows_sum_to_one(&g, m + 1), "{kind} G {g:?}");
        }
    }
}

#[test]
fn supports_do_not_depend_on_parameters() {
    for (i, kind) in ModelKind::ALL.into_iter().enumerate() {
        let cov = cov_for(kind, 30, 50 + i as u64);
        let model = kind.build(&cov, 1.0).unwrap();
        let (m, ch) = (model.num_states(), model.num_channels());
        let mut rng = RngStream::new(200 + i as u64);
        // moderate covariates keep every positive entry representable in f64
        let picked: Vec<usize> = match cov.column("c1") {
            Some(c) if kind != ModelKind::CullingSir => {
                (0..30).filter(|&n| c[n].abs() <= 1.5).take(3).collect()
            }
            _ => vec![0, 7, 29],
        };
        for _ in 0..100 {
            let mut theta = random_theta(model.param_space(), &mut rng);
            for e in model.param_space().entries() {
                if e.domain == Domain::Real {
                    theta.set(&e.name, 2.0 * rng.uniform() - 1.0).unwrap();
                }
            }
            let th = theta.values();
            let prep = model.prepare(th);
            for &n in &picked {
                let eta: Vec<f64> = (0..ch)
                    .map(|_| (1.0 - rng.uniform()) * 1e-4 * model.interaction_bound().min(1.0))
                    .collect();
                let mut k = vec![0.0; m * m];
                model.transition(th, prep.row(n), n, &eta, &mut k);
                let mut g = vec![0.0; m * (m + 1)];
                model.emission(th, prep.row(n), n, &mut g);
                let mut p = vec![0.0; m];
                model.initial(th, prep.row(n), n, &mut p);
                let on = |v: &[f64]| v.iter().map(|&x| x > 0.0).collect::<Vec<_>>();
                assert_eq!(on(&k), model.transition_support(n), "{kind} K {k:?}");
                assert_eq!(on(&g), model.emission_support(n), "{kind} G");
                let allowed = model.initial_support(n);
                assert!(on(&p).iter().zip(&allowed).all(|(&a, &b)| !a || b), "{kind} p0");
            }
        }
    }
}

#[test]
fn seir_never_moves_backwards() {
    let model = ModelKind::SeirLogistic.build(&scalar_cov(&[0.0]), 1.0).unwrap();
    let mask = model.transition_support(0);
    for r in 0..4 {
        for c in 0..4 {
            assert_eq!(mask[r * 4 + c], c == r || c == r + 1, "({r},{c})");
        }
    }
}

#[test]
fn kernels_are_lipschitz_in_interaction() {
    for (i, kind) in ModelKind::ALL.into_iter().enumerate() {
        let model = kind.build(&cov_for(kind, 20, 70 + i as u64), 1.0).unwrap();
        let theta = reference(kind, &model);
        let th = theta.values();
        let prep = model.prepare(th);
        let (m, ch) = (model.num_states(), model.num_channels());
        let c = model.interaction_bound();
        let steps = 10_000;
        for channel in 0..ch {
            let eval = |e: f64| {
                let mut eta = vec![0.0; ch];
                eta[channel] = e;
                let mut k = vec![0.0; m * m];
                model.transition(th, prep.row(3), 3, &eta, &mut k);
                k
            };
            let sup = |a: &[f64], b: &[f64]| {
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
            };
            let delta = 1e-7 * c.max(1.0);
            let grid: Vec<f64> = (0..=steps).map(|j| c * j as f64 / steps as f64).collect();
            let slope = grid
                .iter()
                .step_by(10)
                .map(|&e| sup(&eval(e), &eval(e + delta)) / delta)
                .fold(0.0, f64::max);
            let spacing = c / steps as f64;
            let mut prev = eval(0.0);
            for &e in &grid[1..] {
                let cur = eval(e);
                let jump = sup(&cur, &prev);
                assert!(
                    jump <= slope * spacing * 1.001 + 1e-14,
                    "{kind} channel {channel} jump {jump} at {e}"
                );
                prev = cur;
            }
        }
    }
}

#[test]
fn contact_kernel_respects_bound() {
    for (i, kind) in ModelKind::ALL.into_iter().enumerate() {
        let n_pop = 50;
        let model = kind.build(&cov_for(kind, n_pop, 90 + i as u64), 1.0).unwrap();
        let (m, ch) = (model.num_states(), model.num_channels());
        let bound = model.interaction_bound();
        let mut rng = RngStream::new(300 + i as u64);
        let mut d = vec![0.0; m * ch];
        for _ in 0..10_000 {
            let theta = random_theta(model.param_space(), &mut rng);
            let n = (rng.uniform() * n_pop as f64) as usize % n_pop;
            let k = (rng.uniform() * n_pop as f64) as usize % n_pop;
            model.kernel(theta.values(), n, k, &mut d);
            assert!(d.iter().all(|&x| (0.0..=bound).contains(&x)), "{kind} {d:?} > {bound}");
        }
    }
}

#[test]
fn model_names_round_trip() {
    for kind in ModelKind::ALL {
        assert_eq!(kind.as_str().parse::<ModelKind>().unwrap(), kind);
    }
    assert!("nope".parse::<ModelKind>().is_err());
}

#[test]
fn community_requires_labels() {
    let cov = points_cov(&[[0.0, 0.0]], &[0.0], vec![]);
    assert!(matches!(
        ModelKind::CommunitySis.build(&cov, 1.0),
        Err(Error::MissingCommunity { .. })
    ));
}
