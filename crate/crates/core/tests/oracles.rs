//! Independent oracles: reference CDFs, brute-force formulas and
//! Monte-Carlo checks against closed forms.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use relcov::anova::{
    cochran_empirical_check, estimate_random_effects, oneway_f_test, pairwise_t_test,
    twoway_decompose, CochranDecomposition, GroupedObservations, TwoWayLayout,
};
use relcov::bench::{
    emit_trace_plot, generate_scenario, run_benchmark, BasisSpec, BenchMethod, BenchPlan,
    ScenarioConfig, CONFIG_VERSION,
};
use relcov::covstruct::{
    assemble, estimate_sigma, estimate_with_unknown_g0, gls_beta, reliability_from_components,
    EstimateOptions, FactorOptions, GlsDesign,
};
use relcov::efa::{
    correlation_matrix, efa_reliability, extract_factors, rotate, varimax, FactorModel,
    RetentionRule,
};
use relcov::matrix::ar1_matrix;
use relcov::mcmc::{metropolis, LatentThetaModel, MetropolisOptions, ThetaInit};
use relcov::reliability::{kr20, ItemResponseMatrix};
use relcov::sampling::{mvn_sample, scatter_matrix};
use relcov::special::{ks_test, normal_cdf, Dist};
use relcov::{RngSeed, SampleSet, ScatterMatrix, SymMatrix};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal as SNormal, StudentsT};

#[test]
fn cdfs_match_reference_implementation() {
    let xs = [0.0, 0.05, 0.3, 0.9, 1.0, 1.7, 3.2, 7.5, 15.0, 40.0];
    for &df1 in &[1.0, 2.0, 3.5, 10.0, 30.0] {
        for &df2 in &[1.0, 4.0, 12.0, 60.0] {
            let oracle = FisherSnedecor::new(df1, df2).unwrap();
            for &x in &xs {
                let ours = Dist::F { df1, df2 }.cdf(x).unwrap();
                assert!((ours - oracle.cdf(x)).abs() < 1e-10, "F({df1},{df2}) at {x}");
            }
        }
        let t = StudentsT::new(0.0, 1.0, df1).unwrap();
        let chi = ChiSquared::new(df1).unwrap();
        for &x in &xs {
            for v in [x, -x] {
                let ours = Dist::StudentT { df: df1 }.cdf(v).unwrap();
                assert!((ours - t.cdf(v)).abs() < 1e-10, "t({df1}) at {v}");
            }
            let ours = Dist::ChiSquared { df: df1 }.cdf(x).unwrap();
            assert!((ours - chi.cdf(x)).abs() < 1e-10, "chi2({df1}) at {x}");
        }
    }
    let n = SNormal::new(0.0, 1.0).unwrap();
    for z in [-6.0, -2.5, -1.0, 0.0, 0.3, 1.96, 4.0] {
        // the reference erfc is only good to about 1e-11
        assert!((normal_cdf(z) - n.cdf(z)).abs() < 1e-10, "{z}");
    }
}

#[test]
fn mvn_identity_covariance() {
    let s = mvn_sample(&[0.0, 0.0], &SymMatrix::identity(2), 100_000, RngSeed(1)).unwrap();
    let c = scatter_matrix(&s);
    let err = (c.matrix().as_matrix() - DMatrix::identity(2, 2)).amax();
    assert!(err < 0.05, "{err}");
}

#[test]
fn scatter_within_five_standard_errors() {
    let bases: Vec<SymMatrix> = [0.9, 0.6, 0.3].iter().map(|&r| ar1_matrix(5, r).unwrap()).collect();
    let sigma = assemble(&bases, &[0.1, 0.2, 0.3]);
    let n = 100_000;
    let s = mvn_sample(&[0.0; 5], &sigma, n, RngSeed(8)).unwrap();
    let c = scatter_matrix(&s);
    for i in 0..5 {
        for j in 0..5 {
            let se = ((sigma.get(i, i) * sigma.get(j, j) + sigma.get(i, j).powi(2)) / n as f64).sqrt();
            assert!((c.matrix().get(i, j) - sigma.get(i, j)).abs() <= 5.0 * se);
        }
    }
}

#[test]
fn substreams_differ() {
    let seed = RngSeed(99);
    let a: Vec<f64> = (0..100).map(|_| seed.substream(0).random()).collect();
    let mut s0 = seed.substream(0);
    let mut s1 = seed.substream(1);
    let x: Vec<f64> = (0..1000).map(|_| s0.random()).collect();
    let y: Vec<f64> = (0..1000).map(|_| s1.random()).collect();
    assert!(x.iter().zip(&y).all(|(p, q)| p != q));
    // fresh generators replay their stream
    assert!(a.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn kr20_matches_direct_formula() {
    let mut rng = RngSeed(20).rng();
    let x = DMatrix::from_fn(100, 10, |_, j| {
        if rng.random::<f64>() < 0.3 + 0.04 * j as f64 { 1.0 } else { 0.0 }
    });
    let (n, k) = (100.0, 10.0);
    let mut pq = 0.0;
    for j in 0..10 {
        let p = x.column(j).sum() / n;
        pq += p * (1.0 - p);
    }
    let totals: Vec<f64> = (0..100).map(|i| x.row(i).sum()).collect();
    let mean = totals.iter().sum::<f64>() / n;
    let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    let direct = k / (k - 1.0) * (1.0 - pq / var);
    let ours = kr20(&ItemResponseMatrix::new(x).unwrap()).unwrap().coefficient;
    assert!((ours - direct).abs() < 1e-12);
}

fn null_groups<R: Rng>(rng: &mut R, sizes: &[usize]) -> GroupedObservations {
    GroupedObservations::new(
        sizes
            .iter()
            .map(|&s| (0..s).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect(),
    )
    .unwrap()
}

#[test]
fn null_p_values_are_uniform() {
    let mut rng = RngSeed(31).rng();
    let mut f_p = Vec::new();
    let mut t_p = Vec::new();
    for _ in 0..2000 {
        let g = null_groups(&mut rng, &[5, 7, 6]);
        f_p.push(oneway_f_test(&g).unwrap().p_value.unwrap());
        let h = null_groups(&mut rng, &[4, 9]);
        t_p.push(pairwise_t_test(&h, 0, 1).unwrap().p_value);
    }
    let uniform = |x: f64| x.clamp(0.0, 1.0);
    assert!(ks_test(&f_p, uniform).p_value > 0.01);
    assert!(ks_test(&t_p, uniform).p_value > 0.01);
}

#[test]
fn multiplicative_table_has_interaction() {
    let a = [1.0, 2.0];
    let b = [1.0, 3.0];
    let cells = (0..2)
        .map(|i| (0..2).map(|j| vec![a[i] * b[j]]).collect())
        .collect();
    let c = twoway_decompose(&TwoWayLayout::new(cells).unwrap());
    // cell values 1, 3, 2, 6: interaction contrast (1 - 3 - 2 + 6)/4 squared times 4
    assert!((c.interaction_ss - 1.0).abs() < 1e-12);
}

#[test]
fn random_effects_recovered() {
    // one 200x10 draw has sd about 0.11 on sigma_a2, so check replications
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = RngSeed(40).rng();
    let reps = 50;
    let (mut a2, mut e2, mut close) = (0.0, 0.0, 0);
    for _ in 0..reps {
        let groups = (0..200)
            .map(|_| {
                let a = normal.sample(&mut rng);
                (0..10).map(|_| a + normal.sample(&mut rng)).collect()
            })
            .collect();
        let vc = estimate_random_effects(&GroupedObservations::new(groups).unwrap()).unwrap();
        assert!((vc.sigma2 - 1.0).abs() < 0.15, "{vc:?}");
        if (vc.sigma_a2 - 1.0).abs() < 0.15 {
            close += 1;
        }
        a2 += vc.sigma_a2 / reps as f64;
        e2 += vc.sigma2 / reps as f64;
    }
    assert!((a2 - 1.0).abs() < 0.05, "{a2}");
    assert!((e2 - 1.0).abs() < 0.015, "{e2}");
    assert!(close >= 35, "{close}/{reps}");
}

#[test]
fn member_pairs_correlate_at_icc() {
    // two members of one group share the group effect, so their
    // correlation is the ICC itself
    let mut rng = RngSeed(41).rng();
    let (sa2, s2) = (3.0, 1.0);
    let a_dist = Normal::new(0.0, f64::sqrt(sa2)).unwrap();
    let e_dist = Normal::new(0.0, f64::sqrt(s2)).unwrap();
    let mut u = Vec::new();
    let mut v = Vec::new();
    for _ in 0..100_000 {
        let a = a_dist.sample(&mut rng);
        u.push(a + e_dist.sample(&mut rng));
        v.push(a + e_dist.sample(&mut rng));
    }
    let n = u.len() as f64;
    let (mu, mv) = (u.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
    let cov: f64 = u.iter().zip(&v).map(|(x, y)| (x - mu) * (y - mv)).sum();
    let su: f64 = u.iter().map(|x| (x - mu).powi(2)).sum();
    let sv: f64 = v.iter().map(|y| (y - mv).powi(2)).sum();
    let r = cov / (su * sv).sqrt();
    assert!((r - 0.75).abs() < 0.03, "{r}");
}

#[test]
fn cochran_identity_form() {
    let d = CochranDecomposition::new(vec![SymMatrix::identity(4)]).unwrap();
    let r = cochran_empirical_check(&d, 10_000, RngSeed(50)).unwrap();
    assert!(r.ks[0].unwrap().p_value > 0.01);

    let a1 = SymMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
    let a2 = SymMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let r = cochran_empirical_check(&CochranDecomposition::new(vec![a1, a2]).unwrap(), 10_000, RngSeed(51)).unwrap();
    assert!(r.hypotheses_met);
    assert!(r.correlations[0].correlation.abs() < 0.05);

    let r = cochran_empirical_check(&CochranDecomposition::oneway(&[3, 5, 4]).unwrap(), 10_000, RngSeed(52)).unwrap();
    assert_eq!(r.ranks, vec![9, 2, 1]);
    assert!(r.ks.iter().flatten().all(|k| k.p_value > 0.01));
}

#[test]
fn correlation_examples() {
    let mut rng = RngSeed(60).rng();
    let x = DMatrix::from_fn(100_000, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let r = correlation_matrix(&SampleSet::new(x, DVector::zeros(3)).unwrap()).unwrap();
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        assert!(r.get(i, j).abs() < 0.02);
    }
    let s = SampleSet::from_rows(&[vec![1.0, -1.0, 1.0], vec![2.0, -2.0, 2.0], vec![4.0, -4.0, 4.0]], &[0.0; 3]).unwrap();
    let r = correlation_matrix(&s).unwrap();
    assert_eq!(r.get(0, 1), -1.0);
    assert_eq!(r.get(0, 2), 1.0);
}

#[test]
fn factor_examples() {
    let none = extract_factors(&SymMatrix::identity(4), RetentionRule::Kaiser).unwrap();
    assert_eq!(none.m(), 4);
    assert!(!none.diagnostics.is_empty());

    let cs = SymMatrix::from_lower(DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.5 }));
    let m = extract_factors(&cs, RetentionRule::Fixed(2)).unwrap();
    for j in 0..2 {
        assert!((m.factor_contributions[j] - m.eigenvalues[j]).abs() < 1e-12);
    }
    // quarter turn swaps columns up to sign
    let quarter = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let turned = rotate(&m, &quarter).unwrap();
    for i in 0..4 {
        assert!((turned.loadings[(i, 0)].abs() - m.loadings[(i, 1)].abs()).abs() < 1e-12);
        assert!((turned.loadings[(i, 1)].abs() - m.loadings[(i, 0)].abs()).abs() < 1e-12);
    }
    assert_eq!(rotate(&m, &DMatrix::identity(2, 2)).unwrap().loadings, m.loadings);

    let simple = FactorModel::from_loadings(DMatrix::from_row_slice(
        4,
        2,
        &[0.8, 0.0, 0.7, 0.0, 0.0, 0.9, 0.0, 0.6],
    ))
    .unwrap();
    let v = varimax(&simple, 100, 1e-10).unwrap();
    assert!((v.loadings.abs() - simple.loadings.abs()).amax() < 1e-10);

    let one = FactorModel::from_loadings(DMatrix::from_element(4, 1, 0.5f64.sqrt())).unwrap();
    assert_eq!(varimax(&one, 100, 1e-10).unwrap().loadings, one.loadings);
    assert!((efa_reliability(&one).unwrap().coefficient - 0.8).abs() < 1e-12);
    let perfect = FactorModel::from_loadings(DMatrix::from_element(3, 1, 1.0)).unwrap();
    assert!((efa_reliability(&perfect).unwrap().coefficient - 1.0).abs() < 1e-12);
    let empty = FactorModel::from_loadings(DMatrix::zeros(3, 1)).unwrap();
    assert_eq!(efa_reliability(&empty).unwrap().coefficient, 0.0);
}

#[test]
fn gls_matches_dense_normal_equations() {
    let mut rng = RngSeed(70).rng();
    let b = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma_m = &b * b.transpose() + DMatrix::identity(3, 3) * 0.5;
    let sigma = SymMatrix::new(sigma_m.clone()).unwrap();
    let z1 = DVector::from_column_slice(&[1.0, 1.0, 1.0]);
    let z2 = DVector::from_column_slice(&[0.3, -1.2, 2.0]);
    let x = DVector::from_column_slice(&[0.7, -0.4, 2.2]);
    let inv = sigma_m.try_inverse().unwrap();
    let z = DMatrix::from_columns(&[z1.clone(), z2.clone()]);
    let gram = z.transpose() * &inv * &z;
    let direct = gram.try_inverse().unwrap() * z.transpose() * &inv * &x;
    let ours = gls_beta(&GlsDesign::new(vec![z1, z2]).unwrap(), &sigma, &x).unwrap();
    assert!((ours - direct).amax() < 1e-10);
}

#[test]
fn structured_reliability_equals_icc() {
    // 4 groups of 3 with block-of-ones between-group basis
    let (k, n) = (4, 3);
    let d = k * n;
    let between = SymMatrix::from_lower(DMatrix::from_fn(d, d, |i, j| if i / n == j / n { 1.0 } else { 0.0 }));
    let bases = vec![between, SymMatrix::identity(d)];
    let (sa2, s2) = (1.7, 0.6);
    let c = ScatterMatrix::from_matrix(assemble(&bases, &[sa2, s2]), 1).unwrap();
    let fit = estimate_sigma(&c, &bases, &EstimateOptions { tol: 1e-13, ..Default::default() }).unwrap();
    let r = reliability_from_components(&fit, 1).unwrap().coefficient;
    assert!((r - sa2 / (sa2 + s2)).abs() < 1e-10);
}

#[test]
fn unknown_factor_recovered_from_samples() {
    let f = DMatrix::from_column_slice(5, 1, &[0.9, -0.4, 1.2, 0.3, -0.8]);
    let known = vec![ar1_matrix(5, 0.6).unwrap(), SymMatrix::identity(5)];
    let mut bases = vec![SymMatrix::from_lower(&f * f.transpose())];
    bases.extend(known.iter().cloned());
    let truth = assemble(&bases, &[0.5, 0.2, 0.3]);
    let s = mvn_sample(&[0.0; 5], &truth, 100_000, RngSeed(90)).unwrap();
    let fit = estimate_with_unknown_g0(&scatter_matrix(&s), &known, 1, &FactorOptions::default()).unwrap();
    let fitted = fit.fitted().unwrap();
    assert!(fitted.frobenius_distance(&truth) < 0.05);
    assert!(relcov::matrix::validate_spd(&fitted, 1e-10).unwrap() == relcov::matrix::SpdVerdict::Spd);
    assert!(fit.objective_trace.windows(2).all(|w| w[1] >= w[0]));
}

fn conjugate_ks(k: usize, seed: u64) -> f64 {
    let mut rng = RngSeed(seed).rng();
    let xs: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let xbar = xs.iter().sum::<f64>() / k as f64;
    let model = LatentThetaModel::new(xs, 0.0).unwrap();
    let chain = metropolis(
        &model,
        &MetropolisOptions {
            iterations: 100_000,
            seed: RngSeed(seed + 1),
            init: ThetaInit::Fixed(xbar),
            ..Default::default()
        },
    )
    .unwrap();
    let thinned: Vec<f64> = chain.samples[10_000..].iter().step_by(50).copied().collect();
    let sd = (1.0 / k as f64).sqrt();
    ks_test(&thinned, |t| normal_cdf((t - xbar) / sd)).p_value
}

#[test]
fn flat_interaction_targets_conjugate_posterior() {
    assert!(conjugate_ks(5, 100) > 0.01);
    assert!(conjugate_ks(20, 200) > 0.01);
}

#[test]
fn single_observation_mode() {
    let x1 = 1.3;
    let model = LatentThetaModel::with_default_scale(vec![x1]).unwrap();
    let chain = metropolis(
        &model,
        &MetropolisOptions {
            iterations: 200_000,
            seed: RngSeed(12),
            ..Default::default()
        },
    )
    .unwrap();
    let width = 0.5;
    // bins centred on x1
    let bin = |t: f64| ((t - x1) / width + 0.5).floor() as i64;
    let mut counts = std::collections::BTreeMap::new();
    for &t in &chain.samples[20_000..] {
        *counts.entry(bin(t)).or_insert(0usize) += 1;
    }
    let peak = counts.iter().max_by_key(|(_, &c)| c).map(|(&b, _)| b).unwrap();
    assert_eq!(peak, 0);
}

#[test]
fn scenario_scatter_converges() {
    let cfg = ScenarioConfig::ar1_scenario(5, 1_000_000, 1, RngSeed(5));
    let sc = generate_scenario(&cfg, 0).unwrap();
    assert!(sc.scatter.matrix().frobenius_distance(&sc.sigma) < 0.01);
    let again = generate_scenario(&cfg, 0).unwrap();
    assert_eq!(sc.scatter, again.scatter);
}

#[test]
fn covmle_accuracy_on_three_ar_bases() {
    let plan = BenchPlan {
        version: CONFIG_VERSION,
        methods: vec![BenchMethod::Covmle],
        scenarios: vec![ScenarioConfig {
            d: 5,
            bases: [0.9, 0.6, 0.3].iter().map(|&rho| BasisSpec::Ar1 { rho }).collect(),
            sigma_true: vec![0.1, 0.2, 0.3],
            error_basis: 2,
            n: 10_000,
            replications: 100,
            seed: RngSeed(123),
        }],
    };
    let (table, _) = run_benchmark(&plan, true).unwrap();
    let row = table.row(BenchMethod::Covmle).unwrap();
    assert_eq!(row.failures, 0);
    assert!(row.avg_error_pct.unwrap() <= 5.0, "{:?}", row);
}

#[test]
fn trace_plot_is_valid_svg() {
    let model = LatentThetaModel::with_default_scale(vec![0.3, 0.9, -0.2]).unwrap();
    let opts = MetropolisOptions {
        iterations: 1000,
        seed: RngSeed(4),
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    emit_trace_plot(&metropolis(&model, &opts).unwrap(), &a).unwrap();
    emit_trace_plot(&metropolis(&model, &opts).unwrap(), &b).unwrap();
    let text = std::fs::read_to_string(&a).unwrap();
    assert!(!text.is_empty());
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let labels: Vec<&str> = doc.descendants().filter_map(|n| n.text()).collect();
    assert!(labels.contains(&"Iteration") && labels.contains(&"θ"));
}
