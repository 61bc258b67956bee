mod common;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use uqnet::dlm::{DlmModel, DlmSpec, StateMoments};
use uqnet::gp::{Design, Domain, GpEmulator, KernelSpec, TrendBasis};
use uqnet::network::{
    gauss_kernel_mean, gauss_kernel_second, linked_gp_moments, mdm_marginal, parent_slot_covariance, propagate,
    propagate_horizon, Node, NodeGraph, PropagationOptions, StepInputs,
};
use uqnet::simulators::lhc_unit;
use uqnet::{Error, GaussianMoments};

fn emulator(domains: &[(f64, f64)], n: usize, seed: u64, delta: f64, f: impl Fn(&[f64]) -> f64) -> GpEmulator {
    let rows: Vec<Vec<f64>> = lhc_unit(n, domains.len(), seed)
        .into_iter()
        .map(|u| u.iter().zip(domains).map(|(v, (l, h))| l + v * (h - l)).collect())
        .collect();
    let ys: Vec<f64> = rows.iter().map(|r| f(r)).collect();
    let design = Design::from_rows(&rows, &ys, domains.iter().map(|&(l, h)| Domain::new(l, h)).collect()).unwrap();
    GpEmulator::condition(design, TrendBasis::ConstantLinear, KernelSpec::new(vec![delta; domains.len()], 1e-6).unwrap()).unwrap()
}

fn dlm_model(names: &[&str], v: f64) -> Arc<DlmModel> {
    let spec = DlmSpec::random_walk(names.len(), v, 0.01).unwrap();
    Arc::new(DlmModel {
        regressor_names: names.iter().map(|s| s.to_string()).collect(),
        scale_factors: vec![1.0; names.len()],
        state: spec.initial_state(),
        spec,
        data_digest: String::new(),
    })
}

#[test]
fn kernel_mean_examples() {
    let k = KernelSpec::new(vec![1.0], 0.0).unwrap();
    let law = GaussianMoments::scalar(0.3, 0.5);
    assert!((gauss_kernel_mean(&k, &[0.3], &law).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    let point = GaussianMoments::scalar(0.3, 0.0);
    let r = corr(&[0.3], &[1.1], &[1.0]);
    assert_eq!(gauss_kernel_mean(&k, &[1.1], &point).unwrap(), r);
    assert_eq!(gauss_kernel_second(&k, &[1.1], &[-0.4], &point).unwrap(), r * corr(&[0.3], &[-0.4], &[1.0]));
}

#[test]
fn correlated_two_dimensional_integrals_match_quadrature() {
    let k = KernelSpec::new(vec![0.6, 1.3], 0.0).unwrap();
    let mean = DVector::from_vec(vec![0.2, -0.5]);
    let cov = DMatrix::from_row_slice(2, 2, &[0.3, 0.2, 0.2, 0.4]);
    let law = GaussianMoments::new(mean.clone(), cov.clone()).unwrap();
    let (xi, xj) = ([0.5, 0.1], [-0.3, -0.9]);
    let q = gaussian_expectation::<2>(
        &mean,
        &cov,
        &|x| {
            let r = corr(x, &xi, &[0.6, 1.3]);
            [r, r * corr(x, &xj, &[0.6, 1.3])]
        },
        1e-7,
    );
    let xi_closed = gauss_kernel_mean(&k, &xi, &law).unwrap();
    let zeta_closed = gauss_kernel_second(&k, &xi, &xj, &law).unwrap();
    assert!((xi_closed - q[0]).abs() <= 1e-8 * q[0]);
    assert!((zeta_closed - q[1]).abs() <= 1e-8 * q[1]);
}

#[test]
fn electricity_parent_slot_covariance() {
    let omega = parent_slot_covariance(4, 1, 2.5);
    let mut expected = DMatrix::zeros(4, 4);
    expected[(1, 1)] = 2.5;
    assert_eq!(omega, expected);
}

#[test]
fn missing_parent_slot_is_a_binding_error() {
    let state = StateMoments {
        a: DVector::from_vec(vec![1.0, 0.5]),
        r: DMatrix::identity(2, 2),
    };
    let names = vec!["intercept".to_string(), "ets".to_string()];
    let err = mdm_marginal(&GaussianMoments::scalar(1.0, 0.2), "gas_price", &names, &[1.0, 3.0], &state, 0.3)
        .unwrap_err();
    assert!(matches!(err.root(), Error::Binding(_)), "{err}");
}

/// x1 → g1 (GP); d2 (DLM, intercept only); d3 (DLM on intercept, d2, x3);
/// target GP on (g1, d2, d3).
struct TestNetwork {
    graph: NodeGraph,
    step: StepInputs,
    g1: Arc<GpEmulator>,
    target: Arc<GpEmulator>,
    d2: StateMoments,
    d3: StateMoments,
    v2: f64,
    v3: f64,
    x3: f64,
}

fn test_network() -> TestNetwork {
    let g1 = Arc::new(emulator(&[(0.0, 5.0)], 10, 1, 0.3, |x| example_f1(x[0])));
    let target = Arc::new(emulator(&[(-6.0, 6.0), (0.0, 4.0), (-4.0, 10.0)], 40, 2, 0.5, |x| {
        (0.3 * x[0]).sin() + 0.5 * x[1] * (0.2 * x[2]).cos() + 0.1 * x[2]
    }));
    let (v2, v3, x3) = (0.05, 0.1, 0.8);
    let d2 = StateMoments {
        a: DVector::from_vec(vec![2.0]),
        r: DMatrix::from_element(1, 1, 0.08),
    };
    let d3 = StateMoments {
        a: DVector::from_vec(vec![0.5, 1.2, 0.7]),
        r: DMatrix::from_row_slice(3, 3, &[0.05, 0.01, 0.0, 0.01, 0.03, 0.005, 0.0, 0.005, 0.02]),
    };
    let graph = NodeGraph::new(
        vec![
            Node::exogenous("x1"),
            Node::exogenous("x3"),
            Node::gp("g1", g1.clone(), &["x1"]),
            Node::dlm("d2", dlm_model(&["intercept"], v2), &["intercept"]),
            Node::dlm("d3", dlm_model(&["intercept", "d2", "x3"], v3), &["intercept", "d2", "x3"]),
            Node::gp("target", target.clone(), &["g1", "d2", "d3"]),
        ],
        "target",
    )
    .unwrap();
    let step = StepInputs {
        exogenous: HashMap::from([("x1".to_string(), 2.2), ("x3".to_string(), x3)]),
        dlm_states: HashMap::from([("d2".to_string(), d2.clone()), ("d3".to_string(), d3.clone())]),
    };
    TestNetwork {
        graph,
        step,
        g1,
        target,
        d2,
        d3,
        v2,
        v3,
        x3,
    }
}

fn mvn_sampler(law: &GaussianMoments) -> impl Fn(&mut rand_chacha::ChaCha8Rng) -> DVector<f64> + '_ {
    let l = law.cov.clone().cholesky().expect("parent law positive definite").l();
    move |r| &law.mean + &l * DVector::from_fn(law.dim(), |_, _| normal(r))
}

#[test]
fn parent_moments_match_simulation_of_the_chain() {
    let net = test_network();
    let prop = propagate(&net.graph, &net.step, &PropagationOptions::default()).unwrap();
    let g1 = net.g1.predict(&[2.2]).unwrap();
    let mut r = rng(21);
    let draws = 100_000;
    let samples: Vec<[f64; 3]> = (0..draws)
        .map(|_| {
            let y1 = g1.mean + g1.variance.sqrt() * normal(&mut r);
            let y2 = net.d2.a[0] + (net.d2.r[(0, 0)] + net.v2).sqrt() * normal(&mut r);
            let l3 = net.d3.r.clone().cholesky().unwrap().l();
            let theta = &net.d3.a + l3 * DVector::from_fn(3, |_, _| normal(&mut r));
            let y3 = theta[0] + theta[1] * y2 + theta[2] * net.x3 + net.v3.sqrt() * normal(&mut r);
            [y1, y2, y3]
        })
        .collect();
    let idx = |id: &str| net.graph.order().iter().position(|n| n == id).unwrap();
    let ids = ["g1", "d2", "d3"];
    let means: Vec<f64> = (0..3).map(|c| samples.iter().map(|s| s[c]).sum::<f64>() / draws as f64).collect();
    for a in 0..3 {
        for b in a..3 {
            let mut cov = Running::default();
            for s in &samples {
                cov.push((s[a] - means[a]) * (s[b] - means[b]));
            }
            let got = prop.joint.cov[(idx(ids[a]), idx(ids[b]))];
            assert!((got - cov.mean()).abs() <= 5.0 * cov.se(), "cov({}, {}) {got} vs {}", ids[a], ids[b], cov.mean());
        }
        let mut m = Running::default();
        samples.iter().for_each(|s| m.push(s[a]));
        let got = prop.joint.mean[idx(ids[a])];
        assert!((got - m.mean()).abs() <= 5.0 * m.se(), "mean {} {got} vs {}", ids[a], m.mean());
    }
}

#[test]
fn target_moments_match_simulation_through_the_child_emulator() {
    let net = test_network();
    let prop = propagate(&net.graph, &net.step, &PropagationOptions::default()).unwrap();
    let law = &prop.input_laws["target"];
    let sample = mvn_sampler(law);
    let mut r = rng(22);
    let mv: Vec<(f64, f64)> = (0..100_000)
        .map(|_| {
            let p = net.target.predict(sample(&mut r).as_slice()).unwrap();
            (p.mean, p.variance)
        })
        .collect();
    let mut m = Running::default();
    mv.iter().for_each(|(mi, _)| m.push(*mi));
    let mut total = Running::default();
    mv.iter().for_each(|(mi, vi)| total.push(vi + (mi - m.mean()).powi(2)));
    let got = prop.node("target").unwrap();
    assert!((got.mean - m.mean()).abs() <= 5.0 * m.se(), "mean {} vs {}", got.mean, m.mean());
    assert!((got.variance - total.mean()).abs() <= 5.0 * total.se(), "variance {} vs {}", got.variance, total.mean());
}

#[test]
fn composite_is_at_least_as_uncertain_as_plain() {
    let net = test_network();
    let prop = propagate(&net.graph, &net.step, &PropagationOptions::default()).unwrap();
    for id in ["g1", "d3", "target"] {
        assert!(prop.node(id).unwrap().variance >= prop.plain[id].variance, "{id}");
    }
    let ablated = propagate(
        &net.graph,
        &net.step,
        &PropagationOptions {
            parent_variance_scale: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    let t = ablated.node("target").unwrap();
    assert_eq!((t.mean, t.variance), (ablated.plain["target"].mean, ablated.plain["target"].variance));
}

#[test]
fn short_exogenous_path_names_the_series() {
    let net = test_network();
    let futures = BTreeMap::from([("x1".to_string(), vec![2.0; 4]), ("x3".to_string(), vec![0.8; 2])]);
    let err = propagate_horizon(&net.graph, 4, &futures, &PropagationOptions::default()).unwrap_err();
    assert!(err.to_string().contains("'x3'"), "{err}");
    assert!(err.is_validation());
}

#[test]
fn cycles_and_unknown_parents_are_rejected() {
    let em = Arc::new(emulator(&[(0.0, 1.0)], 6, 3, 0.3, |x| x[0]));
    let cyclic = NodeGraph::new(vec![Node::gp("a", em.clone(), &["b"]), Node::gp("b", em.clone(), &["a"])], "b");
    assert!(cyclic.unwrap_err().to_string().contains("cycle"));
    let dangling = NodeGraph::new(vec![Node::gp("a", em.clone(), &["nowhere"])], "a");
    assert!(matches!(dangling.unwrap_err(), Error::Binding(_)));
    let arity = NodeGraph::new(vec![Node::exogenous("x"), Node::gp("a", em, &["x", "x"])], "a");
    assert!(matches!(arity.unwrap_err(), Error::Binding(_)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linked_variance_splits_and_collapses_at_zero_spread(
        seed in 0u64..1000,
        delta in 0.2f64..0.6,
        m0 in 0.5f64..2.5,
        m1 in -1.5f64..1.5,
        s0 in 0.05f64..0.4,
        s1 in 0.05f64..0.4,
        rho in -0.8f64..0.8,
    ) {
        let em = emulator(&[(0.0, 3.0), (-2.0, 2.0)], 25, seed, delta, |x| x[0].sin() * (1.0 + 0.3 * x[1]) + 0.2 * x[1] * x[1]);
        let base = DMatrix::from_row_slice(2, 2, &[s0 * s0, rho * s0 * s1, rho * s0 * s1, s1 * s1]);
        let plain = em.predict(&[m0, m1]).unwrap();
        // Total variance need not grow with the spread: spreading can move
        // mass towards design points, where the emulator is nearly certain.
        for alpha in [0.0, 0.5, 1.0, 2.0] {
            let law = GaussianMoments::new(DVector::from_vec(vec![m0, m1]), &base * alpha).unwrap();
            let lm = linked_gp_moments(&em, &law).unwrap();
            let scale = lm.variance.abs().max(1e-300);
            prop_assert!(lm.expected_variance >= -1e-12 * scale);
            prop_assert!(lm.variance_of_mean >= -1e-12 * scale);
            prop_assert!((lm.variance - lm.expected_variance - lm.variance_of_mean).abs() <= 1e-12 * scale);
            if alpha == 0.0 {
                prop_assert!((lm.mean - plain.mean).abs() <= 1e-10 * (1.0 + plain.mean.abs()));
                prop_assert!((lm.variance - plain.variance).abs() <= 1e-10 * (1.0 + plain.variance));
                prop_assert!(lm.variance_of_mean.abs() <= 1e-12 * (1.0 + plain.variance));
            }
        }
    }

    #[test]
    fn chained_forecast_correlation_is_bounded(
        f2 in -3.0f64..3.0,
        q2 in 0.0f64..5.0,
        a in prop::collection::vec(-2.0f64..2.0, 4),
        r_scale in 0.0f64..1.0,
        v in 0.01f64..2.0,
        seed in 0u64..1000,
    ) {
        let mut r = rng(seed);
        let state = StateMoments {
            a: DVector::from_vec(a),
            r: random_spd(&mut r, 4, 0.01, 1.0) * r_scale,
        };
        let names: Vec<String> = ["intercept", "gas_price", "ets", "offshore_wind"].iter().map(|s| s.to_string()).collect();
        let out = mdm_marginal(&GaussianMoments::scalar(f2, q2), "gas_price", &names, &[1.0, 0.0, 0.4, 1.7], &state, v).unwrap();
        prop_assert!(out.moments.var1() > 0.0);
        if q2 > 0.0 {
            let c = out.cross_covariance / (q2 * out.moments.var1()).sqrt();
            prop_assert!((-1.0..=1.0).contains(&c), "correlation {c}");
        } else {
            prop_assert_eq!(out.cross_covariance, 0.0);
        }
    }

    #[test]
    fn point_mass_integrals_reduce_to_kernels(
        mu in prop::collection::vec(-2.0f64..2.0, 2),
        xi in prop::collection::vec(-2.0f64..2.0, 2),
        delta in prop::collection::vec(0.2f64..2.0, 2),
    ) {
        let k = KernelSpec::new(delta.clone(), 0.0).unwrap();
        let law = GaussianMoments::degenerate(&mu);
        let got = gauss_kernel_mean(&k, &xi, &law).unwrap();
        let want = corr(&mu, &xi, &delta);
        // Rounding in the exponent's argument is relative to its size, |ln want|.
        let tol = 4.0 * f64::EPSILON * (1.0 + want.ln().abs().min(1e3)) * want;
        prop_assert!((got - want).abs() <= tol.max(1e-300), "{got} vs {want}");
        prop_assert!((0.0..=1.0).contains(&got));
    }
}
