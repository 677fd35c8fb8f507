use medlda::binary::draw_eta;
use medlda::multitask::draw_eta_task;
use medlda::posterior::{EtaPosterior, MarginTerm};
use medlda::predict::{infer_test_topics, TestInferenceConfig};
use medlda::randkit::{streams, RngFactory};
use medlda::topic_state::{CountState, Hyperparams};
use nalgebra::DMatrix;

#[test]
fn eta_draws_follow_the_posterior() {
    // One topic, one document with y = +1, λ = 1, c = ℓ = 1: the linear term
    // is 2 and the precision 1 + 1 = 2, so η ~ N(1, 1/2).
    let hyper = Hyperparams { c: 1.0, ell: 1.0, nu2: 1.0, ..Hyperparams::binary(1) };
    let term = MarginTerm::hinge(1.0, 1.0, &hyper);
    let post = EtaPosterior::assemble(1, hyper.nu2, [(&[1.0][..], term)]);
    assert!((post.mean().unwrap()[0] - 1.0).abs() < 1e-15);
    let mut rng = RngFactory::new(11).stream(0);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| post.sample(&mut rng).unwrap()[0]).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (0.5 / n as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
    assert!((var - 0.5).abs() < 0.02, "variance {var}");
}

#[test]
fn task_draws_do_not_depend_on_order() {
    let words = vec![vec![0, 1, 1], vec![2, 3], vec![0, 3, 3, 2]];
    let z = vec![vec![0, 1, 1], vec![0, 1], vec![1, 0, 0, 1]];
    let counts = CountState::from_assignments(words, z, 2, 4).unwrap();
    let hyper = Hyperparams::multiclass(2);
    let lambdas = [vec![0.5, 1.5, 2.0], vec![1.0, 0.3, 0.7]];
    let labels = [vec![1.0, -1.0, 1.0], vec![-1.0, 1.0, -1.0]];
    let factory = RngFactory::new(5);
    let draw = |i: usize| draw_eta_task(&mut factory.stream(streams::eta(i)), &counts, &lambdas[i], &labels[i], &hyper).unwrap();
    let forward = [draw(0), draw(1)];
    let backward = {
        let b = draw(1);
        [draw(0), b]
    };
    assert_eq!(forward, backward);
    let single = draw_eta(&mut factory.stream(streams::eta(1)), &counts, &lambdas[1], &labels[1], &hyper).unwrap();
    assert_eq!(single, forward[1]);
}

#[test]
fn averaging_more_test_samples_reduces_spread() {
    let phi = DMatrix::from_row_slice(2, 4, &[0.45, 0.45, 0.05, 0.05, 0.05, 0.05, 0.45, 0.45]);
    let doc = [0, 1, 2, 3, 0, 2, 1, 3];
    let hyper = Hyperparams::binary(2);
    let spread = |samples: usize| {
        let cfg = TestInferenceConfig { n_samples: samples, ..TestInferenceConfig::default() };
        let vals: Vec<f64> = (0..400)
            .map(|s| infer_test_topics(&mut RngFactory::new(s).stream(0), &phi, &doc, &hyper, &cfg).unwrap()[0])
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        (m, vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64)
    };
    let (m1, v1) = spread(1);
    let (m10, v10) = spread(10);
    assert!((m1 - 0.5).abs() < 0.05 && (m10 - 0.5).abs() < 0.05, "means {m1} {m10}");
    assert!(v10 < v1, "S=10 variance {v10} not below S=1 variance {v1}");
}
