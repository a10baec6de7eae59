use fairnorm::adversarial::{
    adv_predict, adv_train, discriminator_accuracy, predictor_objective, Adam, AdvConfig, MlpParams,
};
use fairnorm::nalgebra::DMatrix;
use fairnorm::rng::Rng;
use fairnorm::{Error, ProtectedAttr};
use rand::{Rng as _, SeedableRng};

fn problem(n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>, ProtectedAttr) {
    let mut rng = Rng::seed_from_u64(seed);
    let codes: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = DMatrix::from_fn(n, 5, |i, j| rng.random::<f64>() + if j == 4 { codes[i] as f64 } else { 0.0 });
    let y = DMatrix::from_fn(n, 2, |i, j| 0.5 * x[(i, j)] + 0.3 * x[(i, 4)]);
    let attr = ProtectedAttr::new("g", vec!["a".into(), "b".into()], codes).unwrap();
    (x, y, attr)
}

fn config(lambda: f64, epochs: usize) -> AdvConfig {
    AdvConfig {
        learning_rate: 1e-2,
        lambda1: lambda,
        lambda2: lambda,
        epochs,
        batch_size: 32,
        hidden: [16, 8],
        seed: 5,
    }
}

#[test]
fn training_without_adversary_fits_the_labels() {
    let (x, y, attr) = problem(400, 1);
    let (_, trace) = adv_train(&x, &y, &attr, &config(0.0, 30)).unwrap();
    let first = trace.epochs[0].mse;
    let last = trace.last().unwrap().mse;
    assert!(last < 0.2 * first, "{first} -> {last}");
    assert_eq!(trace.epochs.len(), 30);
}

#[test]
fn discriminator_learns_an_informative_embedding() {
    let (x, y, attr) = problem(400, 2);
    let (params, trace) = adv_train(&x, &y, &attr, &AdvConfig { lambda1: 0.0, lambda2: 1.0, ..config(0.0, 30) }).unwrap();
    assert!(discriminator_accuracy(&params, &x, &attr) > 0.9);
    assert_eq!(trace.last().unwrap().disc_acc, discriminator_accuracy(&params, &x, &attr));
}

#[test]
fn training_is_deterministic_and_serializable() {
    let (x, y, attr) = problem(200, 3);
    let cfg = config(0.1, 5);
    let (a, trace_a) = adv_train(&x, &y, &attr, &cfg).unwrap();
    let (b, trace_b) = adv_train(&x, &y, &attr, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(trace_a.to_csv(), trace_b.to_csv());
    assert!(trace_a.to_csv().starts_with("epoch,mse,ce,disc_acc\n"));

    let restored: MlpParams = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
    assert_eq!(adv_predict(&restored, &x).unwrap(), adv_predict(&a, &x).unwrap());

    let (c, _) = adv_train(&x, &y, &attr, &AdvConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn batch_prediction_matches_row_by_row() {
    let (x, _, _) = problem(20, 4);
    let params = MlpParams::init(5, 2, 2, [8, 4], 9);
    let batch = adv_predict(&params, &x).unwrap();
    for i in 0..x.nrows() {
        let row = adv_predict(&params, &x.rows(i, 1).into_owned()).unwrap();
        assert_eq!(row.row(0), batch.row(i));
    }
    assert!(matches!(adv_predict(&params, &DMatrix::zeros(2, 3)), Err(Error::Shape(_))));
}

#[test]
fn absurd_learning_rate_reports_divergence() {
    let (x, y, attr) = problem(200, 5);
    let cfg = AdvConfig { learning_rate: 1e200, ..config(0.1, 3) };
    let err = adv_train(&x, &y, &attr, &cfg).unwrap_err();
    assert!(matches!(err, Error::Diverged { epoch: 0 }), "{err}");
    assert!(err.is_numeric());
}

#[test]
fn invalid_configs_are_rejected() {
    let (x, y, attr) = problem(20, 6);
    for cfg in [
        AdvConfig { learning_rate: 0.0, ..Default::default() },
        AdvConfig { lambda1: -1.0, ..Default::default() },
        AdvConfig { epochs: 0, ..Default::default() },
        AdvConfig { hidden: [0, 4], ..Default::default() },
    ] {
        assert!(matches!(adv_train(&x, &y, &attr, &cfg), Err(Error::InvalidArgument(_))));
    }
    let single = ProtectedAttr::new("g", vec!["a".into()], vec![0; 20]).unwrap();
    assert!(adv_train(&x, &y, &single, &AdvConfig::default()).is_err());
}

#[test]
fn adam_minimizes_a_quadratic() {
    let target = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
    let mut w = DMatrix::zeros(2, 2);
    let mut adam = Adam::new(0.05, &[(2, 2)]);
    for _ in 0..2000 {
        let grad = (&w - &target) * 2.0;
        adam.step([&mut w], &[grad]);
    }
    assert!((&w - &target).amax() < 1e-3);
}

#[test]
fn adversary_penalty_lowers_the_predictor_objective() {
    let (x, y, attr) = problem(50, 7);
    let params = MlpParams::init(5, 2, 2, [8, 4], 1);
    let plain = predictor_objective(&params, &x, &y, attr.codes(), 0.0);
    let penalized = predictor_objective(&params, &x, &y, attr.codes(), 0.5);
    assert!(penalized < plain);
}
