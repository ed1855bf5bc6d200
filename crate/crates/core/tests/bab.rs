use plnnv_core::bab::{run_bab, BabConfig, BabStatus, Mode, Strategy};
use plnnv_core::bounds::RelaxationKind;
use plnnv_core::datagen::{gen_random_net_with_bias, toy_network};
use plnnv_core::network::{canonicalize, validate_counterexample, BoxDomain, CanonicalProblem, PropertyFormula};
use plnnv_core::oracle::exact_min;

#[test]
fn toy_minimum_for_every_strategy() {
    let (net, dom, prop) = toy_network();
    let p = canonicalize(&net, &prop, &dom).unwrap();
    for strategy in Strategy::ALL {
        for relaxation in [RelaxationKind::Planet, RelaxationKind::Reluplex] {
            let cfg = BabConfig {
                relaxation,
                ..BabConfig::new(strategy, Mode::Optimize)
            };
            let r = run_bab(&p, &cfg).unwrap();
            assert!((r.global_lb - 1.0).abs() < 1e-4, "{strategy} {relaxation:?}: {}", r.global_lb);
            assert!((r.global_ub - 1.0).abs() < 1e-4);
        }
    }
}

#[test]
fn toy_counterexample_validates() {
    let (net, dom, _) = toy_network();
    let p = canonicalize(&net, &PropertyFormula::atom(vec![1.0], 3.0), &dom).unwrap();
    for strategy in Strategy::ALL {
        let r = run_bab(&p, &BabConfig::new(strategy, Mode::Decide)).unwrap();
        match r.status {
            BabStatus::Sat(x) => assert!(validate_counterexample(&p, &x, 1e-7)),
            other => panic!("{strategy}: {other:?}"),
        }
    }
}

#[test]
fn verdicts_agree_with_oracle() {
    for seed in 0..12 {
        let net = gen_random_net_with_bias(3, &[5, 4, 1], 0.3, 100 + seed);
        let p = CanonicalProblem::new(net, BoxDomain::uniform(3, -1.0, 1.0).unwrap()).unwrap();
        let truth = exact_min(&p).unwrap().value;
        if truth.abs() < 1e-6 {
            continue;
        }
        for strategy in Strategy::ALL {
            let r = run_bab(&p, &BabConfig::new(strategy, Mode::Decide)).unwrap();
            match (&r.status, truth > 0.0) {
                (BabStatus::Unsat, true) => {}
                (BabStatus::Sat(x), false) => assert!(validate_counterexample(&p, x, 1e-7)),
                (s, _) => panic!("seed {seed} {strategy}: {s:?} with min {truth}"),
            }
            let cfg = BabConfig {
                epsilon: 1e-6,
                ..BabConfig::new(strategy, Mode::Optimize)
            };
            let r = run_bab(&p, &cfg).unwrap();
            assert!((r.global_ub - truth).abs() < 1e-5, "seed {seed} {strategy}: {} vs {truth}", r.global_ub);
            assert!(r.global_lb <= truth + 1e-6);
        }
    }
}
