mod common;

use approx::assert_relative_eq;
use ndarray::Array2;
use proptest::prelude::*;

use bsi_core::data::{empirical_entropy_bits_per_dim, generate, quantize, DataKind, DatasetSpec};
use bsi_core::elbo::{
    bpd, discretized_log_likelihood, expected_h_identity, h_curve, lm_finite_k, lm_infinity,
    loss_mc, reconstruction_continuous, ElboSetup, EvalConfig, ReconConfig,
};
use bsi_core::predictor::{DataDistribution, Predictor, PredictorSpec};
use bsi_core::rng::{Role, Stream};
use bsi_core::schedule::{
    lambda_of_t, low_discrepancy_batch, t_of_lambda, PrecisionSchedule, ProposalDistribution,
    ProposalKind, ScheduleKind,
};

use common::{chi_square_p_value, integrate_log_space, log_spaced};

proptest! {
    #[test]
    fn alphas_sum_to_total(
        lambda0 in (-3.0..1.0f64).prop_map(|e| 10f64.powf(e)),
        alpha_m in (0.0..7.0f64).prop_map(|e| 10f64.powf(e)),
        k in 1usize..10_000,
        linear in any::<bool>(),
    ) {
        let kind = if linear { ScheduleKind::Linear } else { ScheduleKind::Log };
        let s = PrecisionSchedule::new(lambda0, alpha_m, k, kind).unwrap();
        let total: f64 = s.alphas().iter().sum();
        prop_assert!((total - alpha_m).abs() <= 1e-9 * alpha_m);
        prop_assert!(s.lambdas().windows(2).all(|w| w[1] > w[0]));
        prop_assert_eq!(s.lambdas().len(), k + 1);
    }

    #[test]
    fn t_encoding_round_trips(t in 0.0..=1.0f64, lambda0 in (-3.0..1.0f64).prop_map(|e| 10f64.powf(e)), span in 1.0..10.0f64) {
        let lambda_m = lambda0 * 10f64.powf(span);
        let back = t_of_lambda(lambda_of_t(t, lambda0, lambda_m).unwrap(), lambda0, lambda_m).unwrap();
        prop_assert!((back - t).abs() <= 1e-12 * t.max(1e-300) + 1e-15);
    }

    #[test]
    fn shifted_grid_covers_unit_interval(b in 1usize..512, delta in 0.0..1.0f64) {
        let mut t = low_discrepancy_batch(b, delta).unwrap();
        t.sort_by(f64::total_cmp);
        prop_assert!(t.iter().all(|v| (0.0..1.0).contains(v)));
        for (i, w) in t.windows(2).enumerate() {
            prop_assert!((w[1] - w[0] - 1.0 / b as f64).abs() < 1e-9, "gap {i}");
        }
    }

    #[test]
    fn discretized_bins_sum_to_one(x_hat in -1.5..1.5f64, log_alpha in 0.0..7.0f64, r in 2u32..300) {
        let recon = ReconConfig::new(10f64.powf(log_alpha), r).unwrap();
        let total: f64 = (0..r).map(|j| discretized_log_likelihood(j, x_hat, &recon).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
}

#[test]
fn proposal_samples_follow_density() {
    let p = ProposalDistribution::log_uniform(0.01, 1e6).unwrap();
    let edges = log_spaced(0.01, 1e6, 51);
    let probs: Vec<f64> = edges
        .windows(2)
        .map(|w| common::adaptive_simpson(|l| p.density(l).unwrap(), w[0], w[1], 1e-12))
        .collect();
    assert_relative_eq!(probs.iter().sum::<f64>(), 1.0, max_relative = 1e-9);
    let mut counts = vec![0u64; 50];
    let mut s = Stream::new(1, Role::Study, &[]);
    for _ in 0..1_000_000 {
        let l = p.sample(s.uniform()).unwrap();
        let bin = edges.partition_point(|&e| e <= l) - 1;
        counts[bin.min(49)] += 1;
    }
    let pv = chi_square_p_value(&counts, &probs);
    assert!(pv > 0.01, "chi-square p = {pv}");

    let u = ProposalDistribution::new(0.01, 1e6, ProposalKind::Uniform).unwrap();
    let mass = common::adaptive_simpson(|l| u.density(l).unwrap(), 0.01, 1e6, 1e-12);
    assert_relative_eq!(mass, 1.0, max_relative = 1e-12);
}

fn identity(n: usize) -> PredictorSpec {
    PredictorSpec::identity(n, 0.01, 1e6)
}

#[test]
fn loss_expectation_matches_quadrature() {
    let spec = identity(2);
    let pred = Predictor::new(&spec, &[]).unwrap();
    let setup = ElboSetup::bsi(0.01, 1e6).unwrap();
    let x = [1.0, -1.0];
    let mut s = Stream::new(3, Role::Study, &[]);
    let vals: Vec<f64> = (0..100_000)
        .map(|_| {
            let t = s.uniform();
            loss_mc(&pred, &x, t, &setup, &mut s).unwrap()
        })
        .collect();
    let (m, se) = common::mean_se(&vals);
    // E_t[L lambda h] = int h d lambda
    let oracle = integrate_log_space(|l| 2.0 * ((0.01 / l).powi(2) + 1.0 / l), 0.01, 1e6, 1e-10);
    assert!((m - oracle).abs() < 3.0 * se, "{m} +- {se} vs {oracle}");
}

#[test]
fn lm_infinity_identity_matches_quadrature() {
    let spec = identity(3);
    let pred = Predictor::new(&spec, &[]).unwrap();
    let setup = ElboSetup::bsi(0.01, 1e6).unwrap();
    let x = [1.0, 1.0, -1.0];
    let oracle =
        0.5 * integrate_log_space(|l| 3.0 * ((0.01 / l).powi(2) + 1.0 / l), 0.01, 1e6, 1e-10);
    let mut s = Stream::new(1, Role::Study, &[]);
    let (m, se) =
        lm_infinity(&pred, &x, &setup, ProposalKind::LogUniform, 200_000, &mut s).unwrap();
    assert!((m - oracle).abs() < 3.0 * se, "{m} +- {se} vs {oracle}");
}

#[test]
fn proposals_agree_on_a_moderate_range() {
    // The uniform proposal's variance is dominated by draws near lambda0, so
    // the range is kept narrow enough for its standard error to be reliable.
    let spec = PredictorSpec::identity(3, 0.01, 100.0);
    let pred = Predictor::new(&spec, &[]).unwrap();
    let setup = ElboSetup::bsi(0.01, 100.0).unwrap();
    let x = [1.0, 1.0, -1.0];
    let mut s = Stream::new(2, Role::Study, &[]);
    let (a, sa) =
        lm_infinity(&pred, &x, &setup, ProposalKind::LogUniform, 200_000, &mut s).unwrap();
    let (b, sb) = lm_infinity(&pred, &x, &setup, ProposalKind::Uniform, 200_000, &mut s).unwrap();
    assert!(
        (a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(),
        "{a} +- {sa} vs {b} +- {sb}"
    );
    assert!(sa < sb);
}

#[test]
fn lm_infinity_linear_bayes_matches_quadrature() {
    // 1-D standard normal data: the posterior mean is linear and
    // h(lambda) = Var[x | mu] = 1 / (1 + a^2 / s^2) with mu = a x + s eps.
    let data = DataDistribution::GaussianMixture {
        means: vec![vec![0.0]],
        std: 1.0,
        weights: vec![1.0],
    };
    let spec = PredictorSpec::bayes(data, 0.01, 1e6);
    let pred = Predictor::new(&spec, &[]).unwrap();
    let setup = ElboSetup::bsi(0.01, 1e6).unwrap();
    let h = |l: f64| {
        let a = (l - 0.01) / l;
        1.0 / (1.0 + a * a * l)
    };
    let oracle = 0.5 * integrate_log_space(h, 0.01, 1e6, 1e-10);
    let mut draws = Vec::new();
    let mut s = Stream::new(4, Role::Study, &[]);
    for _ in 0..20_000 {
        let x = [s.normal()];
        draws.push(
            lm_infinity(&pred, &x, &setup, ProposalKind::LogUniform, 5, &mut s)
                .unwrap()
                .0,
        );
    }
    let (m, se) = common::mean_se(&draws);
    assert!((m - oracle).abs() < 3.0 * se, "{m} +- {se} vs {oracle}");
}

#[test]
fn finite_k_dominates_and_shrinks_toward_infinite() {
    let spec = identity(2);
    let pred = Predictor::new(&spec, &[]).unwrap();
    let setup = ElboSetup::bsi(0.01, 1e6).unwrap();
    let x = [1.0, -1.0];
    let inf = 0.5 * integrate_log_space(|l| 2.0 * ((0.01 / l).powi(2) + 1.0 / l), 0.01, 1e6, 1e-10);
    let mut gaps = Vec::new();
    for (i, k) in [10usize, 100, 1000].into_iter().enumerate() {
        let sch = PrecisionSchedule::new(0.01, 1e6 - 0.01, k, ScheduleKind::Log).unwrap();
        let mut s = Stream::new(10 + i as u64, Role::Study, &[]);
        let (m, _) = lm_finite_k(&pred, &x, &setup, &sch, 200, &mut s).unwrap();
        assert!(m > inf, "k = {k}: {m} <= {inf}");
        gaps.push(m - inf);
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn continuous_reconstruction_of_identity() {
    let spec = identity(2);
    let pred = Predictor::new(&spec, &[]).unwrap();
    let setup = ElboSetup::bsi(0.01, 1e6).unwrap();
    let recon = ReconConfig::for_alpha_m(1e6, 256).unwrap();
    let x = [1.0, -1.0];
    let mut s = Stream::new(6, Role::Study, &[]);
    let vals: Vec<f64> = (0..20_000)
        .map(|_| reconstruction_continuous(&pred, &x, &setup, &recon, 1, &mut s).unwrap())
        .collect();
    let (m, se) = common::mean_se(&vals);
    let eh = expected_h_identity(1e6, 0.01, 2).unwrap();
    let oracle = 0.5 * 2.0 * ((2.0 * std::f64::consts::PI).ln() - recon.alpha_r.ln())
        + 0.5 * recon.alpha_r * eh;
    assert!((m - oracle).abs() < 3.0 * se, "{m} +- {se} vs {oracle}");
}

#[test]
fn h_is_strictly_decreasing_for_identity() {
    let grid = log_spaced(0.01, 1e6, 100);
    let h: Vec<f64> = grid
        .iter()
        .map(|&l| expected_h_identity(l, 0.01, 3).unwrap())
        .collect();
    assert!(h.windows(2).all(|w| w[1] < w[0]));
    assert_relative_eq!(h[0], 3.0 * 101.0, max_relative = 1e-12);
    let spec = identity(3);
    let pred = Predictor::new(&spec, &[]).unwrap();
    let setup = ElboSetup::bsi(0.01, 1e6).unwrap();
    let mut s = Stream::new(2, Role::Study, &[]);
    let mc = h_curve(&pred, &[1.0, -1.0, 1.0], &setup, &[0.01], 100_000, &mut s).unwrap();
    assert!((mc[0].0 - h[0]).abs() < 3.0 * mc[0].1);
}

#[test]
fn bayes_denoiser_beats_identity() {
    let ds = DatasetSpec::two_atom(0);
    let bayes_spec = PredictorSpec::bayes(ds.distribution(), 0.01, 1e6);
    let bayes = Predictor::new(&bayes_spec, &[]).unwrap();
    let ident_spec = identity(1);
    let ident = Predictor::new(&ident_spec, &[]).unwrap();
    let setup = ElboSetup::bsi(0.01, 1e6).unwrap();
    for (i, l) in log_spaced(0.01, 1e6, 12).into_iter().enumerate() {
        let mut hb = 0.0;
        let mut hi = 0.0;
        for (j, x) in [[-0.5], [0.5]].iter().enumerate() {
            let key = [i as u64, j as u64];
            hb += h_curve(
                &bayes,
                x,
                &setup,
                &[l],
                2000,
                &mut Stream::new(1, Role::Study, &key),
            )
            .unwrap()[0]
                .0;
            hi += h_curve(
                &ident,
                x,
                &setup,
                &[l],
                2000,
                &mut Stream::new(1, Role::Study, &key),
            )
            .unwrap()[0]
                .0;
        }
        assert!(hb <= hi, "lambda = {l}: {hb} > {hi}");
    }
}

#[test]
fn bpd_respects_entropy_bound() {
    let ds = DatasetSpec::two_atom(3);
    let data = generate(&ds, 400).unwrap();
    let entropy = empirical_entropy_bits_per_dim(&data.levels).unwrap();
    let setup = ElboSetup::bsi(0.01, 1e6).unwrap();
    let recon = ReconConfig::for_alpha_m(1e6, 256).unwrap();
    let cfg = EvalConfig::default();
    let specs = [
        PredictorSpec::bayes(ds.quantized_distribution(), 0.01, 1e6),
        identity(1),
    ];
    for spec in &specs {
        let pred = Predictor::new(spec, &[]).unwrap();
        let r = bpd(&pred, &data, &setup, &recon, &cfg).unwrap();
        let se_bits = r.lm_std_error / (std::f64::consts::LN_2 * r.dim as f64);
        assert!(
            r.bpd >= entropy - 3.0 * se_bits,
            "{:?}: {} < {entropy}",
            spec.backbone,
            r.bpd
        );
    }
    let bayes = Predictor::new(&specs[0], &[]).unwrap();
    assert!(bpd(&bayes, &data, &setup, &recon, &cfg).unwrap().bpd >= 0.98);

    let one = DatasetSpec::one_atom(vec![0.2, -0.6], 0);
    let one_data = generate(&one, 100).unwrap();
    let spec = PredictorSpec::bayes(one.quantized_distribution(), 0.01, 1e6);
    let pred = Predictor::new(&spec, &[]).unwrap();
    assert!(bpd(&pred, &one_data, &setup, &recon, &cfg).unwrap().bpd <= 0.02);
}

#[test]
fn more_measurement_draws_shrink_standard_error() {
    let ds = DatasetSpec {
        kind: DataKind::StandardNormal,
        dim: 2,
        r: 256,
        seed: 1,
    };
    let data = generate(&ds, 200).unwrap();
    let spec = identity(2);
    let pred = Predictor::new(&spec, &[]).unwrap();
    let setup = ElboSetup::bsi(0.01, 1e6).unwrap();
    let recon = ReconConfig::for_alpha_m(1e6, 256).unwrap();
    let se = |m: usize| {
        let cfg = EvalConfig {
            num_mc_measure: m,
            ..EvalConfig::default()
        };
        bpd(&pred, &data, &setup, &recon, &cfg)
            .unwrap()
            .lm_std_error
    };
    let ratio = se(5) / se(50);
    assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn quantized_view_matches_levels() {
    let ds = DatasetSpec {
        kind: DataKind::StandardNormal,
        dim: 3,
        r: 16,
        seed: 2,
    };
    let data = generate(&ds, 500).unwrap();
    let requantized: Array2<u32> = data.continuous.mapv(|v| quantize(v, 16));
    assert_eq!(requantized, data.levels);
    assert!(data.continuous.iter().all(|v| (-1.0..=1.0).contains(v)));
}
