mod common;

use gpa_core::augment::all_pairs;
use gpa_core::autodiff::ParamSet;
use gpa_core::trainer::{hypergradient, hypergradient_oracle, BilevelObjective, QuadraticStub};
use gpa_core::GpaError;

fn rel(a: &ParamSet, b: &ParamSet) -> f64 {
    let mut diff = a.clone();
    diff.axpy(-1.0, b).unwrap();
    diff.norm() / (b.norm() + 1e-12)
}

#[test]
fn quadratic_stub_is_exact() {
    let (w, theta) = QuadraticStub::params(1.0, 0.0);
    let hg = hypergradient(&QuadraticStub { coupled: true }, &w, &theta, 0.1, 1e-2).unwrap();
    assert!((hg.grad.get("theta").unwrap().item() - 0.09).abs() < 1e-10);
}

#[test]
fn oracle_is_stable_in_step() {
    let toy = common::toy(0);
    let obj = toy.objective(vec![all_pairs()[1], all_pairs()[6], all_pairs()[9]]);
    let a = hypergradient_oracle(&obj, &toy.enc.params, &toy.theta.params, 0.1, 1e-5).unwrap();
    let b = hypergradient_oracle(&obj, &toy.enc.params, &toy.theta.params, 0.1, 1e-6).unwrap();
    assert!(rel(&a, &b) < 1e-6, "{}", rel(&a, &b));
}

#[test]
fn finite_difference_converges_quadratically_when_smooth() {
    // probes of norm <= 3e-4 stay inside one relu region on these instances
    for seed in 0..3 {
        let toy = common::toy(seed);
        let obj = toy.objective(vec![all_pairs()[1], all_pairs()[6], all_pairs()[9]]);
        let (w, theta) = (&toy.enc.params, &toy.theta.params);
        let exact = hypergradient_oracle(&obj, w, theta, 0.1, 1e-6).unwrap();
        let err = |e: f64| rel(&hypergradient(&obj, w, theta, 0.1, e).unwrap().grad, &exact);
        let (coarse, fine) = (err(3e-4), err(1e-4));
        assert!(fine < 1e-5, "seed {seed}: {fine}");
        assert!(fine < coarse, "seed {seed}: {coarse} -> {fine}");
    }
}

#[test]
fn oracle_refuses_large_instances() {
    let toy = common::toy(0);
    let mut obj = toy.objective(vec![all_pairs()[0]; 3]);
    obj.encoder.hidden_dim = 32;
    assert!(matches!(
        hypergradient_oracle(&obj, &toy.enc.params, &toy.theta.params, 0.1, 1e-6),
        Err(GpaError::OracleTooExpensive(_))
    ));
}

#[test]
fn second_order_term_is_nonzero() {
    let toy = common::toy(1);
    let obj = toy.objective(vec![all_pairs()[2]; 3]);
    let (w, theta) = (&toy.enc.params, &toy.theta.params);
    let mut w_prime = w.clone();
    w_prime.axpy(-0.1, &obj.lower_grad(w, theta).unwrap().1).unwrap();
    let (_, _, direct) = obj.upper_grads(&w_prime, theta).unwrap();
    let hg = hypergradient(&obj, w, theta, 0.1, 1e-4).unwrap();
    assert!(!hg.correction_skipped);
    assert!(direct.norm() > 0.0);
    assert!(rel(&hg.grad, &direct) > 1e-3);
}
