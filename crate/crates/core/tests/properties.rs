use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use relcov::anova::{
    icc, oneway_decompose, oneway_f_test, pairwise_t_test, twoway_decompose, GroupedObservations,
    TwoWayLayout, VarianceComponents,
};
use relcov::bench::{render_report, BenchRow, BenchTable, BenchMethod, ReportFormat};
use relcov::covstruct::{
    assemble, estimate_sigma, gls_beta, trace_system, EstimateOptions, GlsDesign, Init,
};
use relcov::efa::{extract_factors, rotate, varimax_fit, RetentionRule, VarimaxOptions};
use relcov::matrix::{ar1_matrix, validate_spd};
use relcov::mcmc::{metropolis, AcceptanceRule, LatentThetaModel, MetropolisOptions};
use relcov::reliability::{kr20, kr21, reliability_definitional, variance_of_mean, ItemResponseMatrix};
use relcov::sampling::scatter_matrix;
use relcov::special::Dist;
use relcov::{RngSeed, SampleSet, ScatterMatrix, SymMatrix};

fn binary_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..40, 2usize..12).prop_flat_map(|(n, k)| {
        prop::collection::vec(prop::bool::ANY, n * k)
            .prop_map(move |bits| DMatrix::from_fn(n, k, |i, j| f64::from(u8::from(bits[i * k + j]))))
    })
}

fn groups() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 1..8), 2..6)
}

/// Random correlation matrix from random data with at least `p + 2` rows.
fn correlation(p: usize, seed: u64) -> SymMatrix {
    let mut rng = RngSeed(seed).rng();
    let x = DMatrix::from_fn(p + 8, p, |_, _| rand::Rng::random::<f64>(&mut rng));
    let s = SampleSet::new(x, DVector::zeros(p)).unwrap();
    relcov::efa::correlation_matrix(&s).unwrap()
}

fn orthogonal(m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = RngSeed(seed).rng();
    let g = DMatrix::from_fn(m, m, |_, _| {
        rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
    });
    g.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ar1_symmetric_unit_diagonal(d in 1usize..=50, rho in -0.99f64..=0.99) {
        let m = ar1_matrix(d, rho).unwrap();
        for i in 0..d {
            prop_assert_eq!(m.get(i, i), 1.0);
            for j in 0..d {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }

    #[test]
    fn scatter_is_psd(rows in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 4), 1..30)) {
        let s = SampleSet::from_rows(&rows, &[0.5, -1.0, 2.0, 0.0]).unwrap();
        let c = scatter_matrix(&s);
        prop_assert!(validate_spd(c.matrix(), 1e-10).unwrap().is_psd());
    }

    #[test]
    fn kr21_never_exceeds_kr20(x in binary_matrix()) {
        let m = ItemResponseMatrix::new(x).unwrap();
        if let (Ok(a), Ok(b)) = (kr20(&m), kr21(&m)) {
            prop_assert!(b.coefficient <= a.coefficient + 1e-12);
        }
    }

    #[test]
    fn kr_permutation_invariant(x in binary_matrix(), seed in any::<u64>()) {
        let (n, k) = x.shape();
        let mut rng = RngSeed(seed).rng();
        let mut rows: Vec<usize> = (0..n).collect();
        let mut cols: Vec<usize> = (0..k).collect();
        rand::seq::SliceRandom::shuffle(rows.as_mut_slice(), &mut rng);
        rand::seq::SliceRandom::shuffle(cols.as_mut_slice(), &mut rng);
        let y = DMatrix::from_fn(n, k, |i, j| x[(rows[i], cols[j])]);
        let (mx, my) = (ItemResponseMatrix::new(x).unwrap(), ItemResponseMatrix::new(y).unwrap());
        if let (Ok(a), Ok(b)) = (kr20(&mx), kr20(&my)) {
            prop_assert!((a.coefficient - b.coefficient).abs() <= 1e-12);
            let (c, d) = (kr21(&mx).unwrap(), kr21(&my).unwrap());
            prop_assert!((c.coefficient - d.coefficient).abs() <= 1e-12);
        }
    }

    #[test]
    fn definitional_endpoints(v in 1e-6f64..1e6) {
        prop_assert_eq!(reliability_definitional(v, 0.0).unwrap().coefficient, 1.0);
        prop_assert_eq!(reliability_definitional(v, v).unwrap().coefficient, 0.0);
    }

    #[test]
    fn perfect_correlation_mean_variance(k in 1usize..60, s2 in 0.0f64..100.0) {
        let kf = k as f64;
        let v = variance_of_mean(s2, k, kf * (kf - 1.0) / 2.0 * s2).unwrap();
        prop_assert!((v.var_of_mean - s2).abs() <= 1e-12 * s2.max(1.0));
    }

    #[test]
    fn ss_additivity(g in groups()) {
        let t = oneway_decompose(&GroupedObservations::new(g).unwrap());
        prop_assert!((t.total_ss - t.within_ss - t.between_ss).abs() <= 1e-10 * t.total_ss.max(1e-300));
    }

    #[test]
    fn two_way_shift_invariant(
        cells in prop::collection::vec(-10.0..10.0f64, 2 * 3 * 2),
        shift in -1e3..1e3f64,
    ) {
        let build = |delta: f64| {
            TwoWayLayout::new(
                (0..2)
                    .map(|i| (0..3).map(|j| (0..2).map(|r| cells[(i * 3 + j) * 2 + r] + delta).collect()).collect())
                    .collect(),
            )
            .unwrap()
        };
        let a = twoway_decompose(&build(0.0));
        let b = twoway_decompose(&build(shift));
        let tol = 1e-8 * (1.0 + a.total_ss);
        prop_assert!((a.total_ss - b.total_ss).abs() <= tol);
        prop_assert!((a.row_ss - b.row_ss).abs() <= tol);
        prop_assert!((a.column_ss - b.column_ss).abs() <= tol);
        prop_assert!((a.interaction_ss - b.interaction_ss).abs() <= tol);
        prop_assert!((a.residual_ss - b.residual_ss).abs() <= tol);
    }

    #[test]
    fn f_equals_t_squared(a in prop::collection::vec(-5.0..5.0f64, 2..10), b in prop::collection::vec(-5.0..5.0f64, 2..10)) {
        let g = GroupedObservations::new(vec![a, b]).unwrap();
        if let Ok(f) = oneway_f_test(&g) {
            let t = pairwise_t_test(&g, 0, 1).unwrap();
            let fs = f.f_stat.unwrap();
            prop_assert!((fs - t.t_stat * t.t_stat).abs() <= 1e-10 * fs.max(1e-300));
            prop_assert!((f.p_value.unwrap() - t.p_value).abs() <= 1e-10);
        }
    }

    #[test]
    fn cdf_monotone_in_unit_interval(df1 in 0.5f64..40.0, df2 in 0.5f64..40.0, x in 0.0f64..20.0, dx in 0.0f64..5.0) {
        for dist in [Dist::F { df1, df2 }, Dist::StudentT { df: df1 }, Dist::ChiSquared { df: df2 }] {
            let lo = dist.cdf(x).unwrap();
            let hi = dist.cdf(x + dx).unwrap();
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
            prop_assert!(hi >= lo - 1e-14);
        }
    }

    #[test]
    fn icc_scale_invariant(sa in 0.0f64..10.0, s in 0.01f64..10.0, c in 1e-3f64..1e3) {
        let a = icc(&VarianceComponents::new(sa, s).unwrap()).unwrap().coefficient;
        let b = icc(&VarianceComponents::new(sa * c, s * c).unwrap()).unwrap().coefficient;
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn rotation_keeps_communalities(p in 3usize..9, seed in any::<u64>()) {
        let r = correlation(p, seed);
        let model = extract_factors(&r, RetentionRule::Fixed(2)).unwrap();
        let rotated = rotate(&model, &orthogonal(2, seed ^ 1)).unwrap();
        for (a, b) in model.communalities.iter().zip(&rotated.communalities) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        let (ca, cb) = (model.common_variance(), rotated.common_variance());
        prop_assert!((ca - cb).amax() <= 1e-10);
    }

    #[test]
    fn eigenvalues_sum_to_p(p in 2usize..12, seed in any::<u64>()) {
        let r = correlation(p, seed);
        let model = extract_factors(&r, RetentionRule::Kaiser).unwrap();
        prop_assert!((model.eigenvalues.iter().sum::<f64>() - p as f64).abs() <= 1e-10);
        prop_assert!(model.m() <= p);
        if model.eigenvalues[0] >= 1.0 {
            prop_assert!(model.m() >= 1);
        }
    }

    #[test]
    fn varimax_criterion_monotone(p in 4usize..10, seed in any::<u64>()) {
        let r = correlation(p, seed);
        let model = extract_factors(&r, RetentionRule::Fixed(3)).unwrap();
        let opts = VarimaxOptions::default();
        let fit = varimax_fit(&model, opts).unwrap();
        prop_assert!(fit.sweeps <= opts.max_sweeps);
        prop_assert!(fit.criterion_trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn fixed_point_from_any_positive_start(s0 in 0.01f64..2.0, s1 in 0.01f64..2.0, s2 in 0.01f64..2.0) {
        let bases: Vec<SymMatrix> = [0.9, 0.6, 0.3].iter().map(|&r| ar1_matrix(5, r).unwrap()).collect();
        let truth = [0.1, 0.2, 0.3];
        let c = ScatterMatrix::from_matrix(assemble(&bases, &truth), 1).unwrap();
        let opts = EstimateOptions { tol: 1e-12, init: Init::Explicit(vec![s0, s1, s2]), ..Default::default() };
        let fit = estimate_sigma(&c, &bases, &opts).unwrap();
        for (a, b) in fit.sigma_hat.iter().zip(truth) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn trace_system_symmetric_psd(s0 in 0.01f64..2.0, s1 in 0.01f64..2.0, s2 in 0.01f64..2.0) {
        let bases: Vec<SymMatrix> = [0.9, 0.6, 0.0].iter().map(|&r| ar1_matrix(4, r).unwrap()).collect();
        let sigma = assemble(&bases, &[s0, s1, s2]);
        let c = ScatterMatrix::from_matrix(SymMatrix::identity(4), 1).unwrap();
        let sys = trace_system(&sigma, &bases, &c).unwrap();
        prop_assert_eq!(&sys.a, &sys.a.transpose());
        let a = SymMatrix::new(sys.a.clone()).unwrap();
        prop_assert!(validate_spd(&a, 1e-10).unwrap().is_psd());
    }

    #[test]
    fn gls_scale_equivariant(c in 1e-3f64..1e3, x in prop::collection::vec(-10.0..10.0f64, 4)) {
        let design = GlsDesign::new(vec![
            DVector::from_element(4, 1.0),
            DVector::from_column_slice(&[0.0, 1.0, 2.0, 3.0]),
        ]).unwrap();
        let sigma = ar1_matrix(4, 0.5).unwrap();
        let x = DVector::from_vec(x);
        let a = gls_beta(&design, &sigma, &x).unwrap();
        let b = gls_beta(&design, &sigma.scaled(c), &x).unwrap();
        prop_assert!((a - b).amax() <= 1e-9);
    }

    #[test]
    fn single_observation_peaks_at_itself(x in -20.0f64..20.0, scale in 0.0f64..3.0, off in 0.01f64..5.0) {
        let m = LatentThetaModel::new(vec![x], scale).unwrap();
        prop_assert!(m.log_joint(x) > m.log_joint(x + off));
        prop_assert!(m.log_joint(x) > m.log_joint(x - off));
    }

    #[test]
    fn acceptance_probability_valid(a in -1e4f64..10.0, b in -1e4f64..10.0) {
        for rule in [AcceptanceRule::LogSpace, AcceptanceRule::SmoothedLinear] {
            let p = rule.probability(a, b);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn log_and_linear_ratios_agree(xs in prop::collection::vec(-3.0f64..3.0, 0..30), t0 in -3.0f64..3.0, t1 in -3.0f64..3.0) {
        let m = LatentThetaModel::with_default_scale(xs).unwrap();
        let (p0, p1) = (m.joint_prob(t0), m.joint_prob(t1));
        if p0 > 1e-300 && p1 > 1e-300 {
            let linear = (p1 / p0).min(1.0);
            let log = AcceptanceRule::LogSpace.probability(m.log_joint(t0), m.log_joint(t1));
            prop_assert!((log - linear).abs() <= 1e-9 * linear);
        }
    }

    #[test]
    fn equal_seeds_equal_chains(seed in any::<u64>()) {
        let m = LatentThetaModel::with_default_scale(vec![0.4, -0.1, 1.3]).unwrap();
        let opts = MetropolisOptions { iterations: 200, seed: RngSeed(seed), ..Default::default() };
        prop_assert_eq!(metropolis(&m, &opts).unwrap(), metropolis(&m, &opts).unwrap());
    }

    #[test]
    fn json_report_reemits_identically(avg in 0.0f64..500.0, sd in 0.0f64..100.0, reps in 1usize..1000) {
        let t = BenchTable { rows: vec![BenchRow { method: BenchMethod::Efa, avg_error_pct: Some(avg), std_dev: sd, replications: reps, failures: 0 }] };
        let first = render_report(&t, ReportFormat::Json).unwrap();
        let back: BenchTable = serde_json::from_str(&first).unwrap();
        prop_assert_eq!(render_report(&back, ReportFormat::Json).unwrap(), first);
    }
}
