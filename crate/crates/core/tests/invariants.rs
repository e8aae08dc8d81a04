//! Cross-module properties: Pareto non-domination of learned solutions,
//! randomized structural invariants, and wire-format round trips.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use pmfcl::federated::{client_step, server_aggregate, ClientMessage, ClientState};
use pmfcl::linalg::econ_svd;
use pmfcl::msi::{compute_msi, forgetting, reconstruct_loss, FeatureMap};
use pmfcl::qub::{build_summary, FitOptions, LogisticKind, QubLearner};
use pmfcl::regression::{RegressionLearner, SolveStrategy};
use pmfcl::tasks::{generate_classification_sequence, generate_regression_sequence, preferences, TaskDataset};

/// No random perturbation of the learned solution may Pareto-dominate it on
/// the per-task forgetting vector.
#[test]
fn learned_solution_is_pareto_consistent() {
    let sequence = generate_regression_sequence(77, 6, 5, 10, 0.6, 0.1).unwrap();
    let map = FeatureMap::identity(6);
    let mut learner = RegressionLearner::new(map.clone(), SolveStrategy::PseudoInverse);
    let mut msis = Vec::new();
    for task in &sequence.tasks {
        learner.learn_task(task).unwrap();
        msis.push(compute_msi(task, &map).unwrap());
    }
    let solution = learner.solution();
    let baseline: Vec<f64> = msis.iter().map(|m| forgetting(m, solution).unwrap()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut dominated = 0usize;
    for i in 0..10_000 {
        let scale = 10f64.powf(-3.0 + 4.0 * (i % 100) as f64 / 100.0);
        let direction = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let candidate = solution + direction.scale(scale);
        let values: Vec<f64> = msis
            .iter()
            .map(|m| forgetting(m, &candidate).unwrap())
            .collect();
        let no_worse = values
            .iter()
            .zip(&baseline)
            .all(|(new, old)| *new <= old + 1e-15);
        let strictly_better = values
            .iter()
            .zip(&baseline)
            .any(|(new, old)| *new < old - 1e-12);
        if no_worse && strictly_better {
            dominated += 1;
        }
    }
    assert_eq!(dominated, 0, "{dominated} perturbations dominated the solution");
}

/// The QUB learner's final solution is invariant to task order.
#[test]
fn qub_solution_order_invariant() {
    let tasks = generate_classification_sequence(31, 4, 5, 50, 3, 0.4).unwrap();
    let options = FitOptions::default();
    let summaries: Vec<_> = tasks
        .iter()
        .map(|t| build_summary(t, LogisticKind::Multiclass, &options).unwrap())
        .collect();
    let run = |order: &[usize]| {
        let mut learner = QubLearner::new(4, 3, SolveStrategy::PseudoInverse);
        for &i in order {
            learner.learn_task(summaries[i].clone()).unwrap();
        }
        learner.solution().clone()
    };
    let base = run(&[0, 1, 2, 3, 4]);
    for order in [[4, 3, 2, 1, 0], [2, 0, 4, 1, 3], [1, 4, 0, 3, 2]] {
        let permuted = run(&order);
        let rel = (&permuted - &base).norm() / (1.0 + base.norm());
        assert!(rel <= 1e-7, "order {order:?}: gap {rel}");
    }
}

/// Aggregation behaves identically on messages that crossed the wire format.
#[test]
fn aggregation_survives_wire_round_trip() {
    let tasks = generate_classification_sequence(13, 3, 1, 40, 2, 0.3).unwrap();
    let theta = DVector::zeros(3);
    let mut client_a = ClientState::new(0, 3);
    let mut client_b = ClientState::new(1, 3);
    let message_a = client_step(&mut client_a, Some(&tasks[0]), &theta, LogisticKind::Binary, &FitOptions::default()).unwrap();
    let message_b = client_step(&mut client_b, Some(&tasks[0]), &theta, LogisticKind::Binary, &FitOptions::default()).unwrap();

    let direct = server_aggregate(
        &[message_a.clone(), message_b.clone()],
        &[0, 1],
        &theta,
        SolveStrategy::PseudoInverse,
    )
    .unwrap();
    let wired: Vec<ClientMessage> = [&message_a, &message_b]
        .iter()
        .map(|m| ClientMessage::from_bytes(&m.to_bytes()).unwrap())
        .collect();
    let via_wire = server_aggregate(&wired, &[0, 1], &theta, SolveStrategy::PseudoInverse).unwrap();
    assert_eq!(direct, via_wire, "wire format must be lossless");
}

/// Memory footprint never grows after the switch to the iterative phase.
#[test]
fn memory_non_increasing_after_switch() {
    let sequence = generate_regression_sequence(5, 6, 30, 4, 0.5, 0.1).unwrap();
    let mut learner = RegressionLearner::new(FeatureMap::identity(6), SolveStrategy::PseudoInverse);
    let mut previous: Option<usize> = None;
    let mut switched = false;
    for task in &sequence.tasks {
        learner.learn_task(task).unwrap();
        let footprint = learner.memory_footprint();
        if switched {
            assert!(footprint.float_count <= previous.unwrap());
        }
        if matches!(footprint.phase_label, pmfcl::regression::PhaseLabel::Iterative) {
            switched = true;
        }
        previous = Some(footprint.float_count);
    }
    assert!(switched);
}

fn finite_matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-50.0f64..50.0, rows * cols)
        .prop_map(move |data| DMatrix::from_row_slice(rows, cols, &data))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Sample-proportional preferences live on the simplex and satisfy the
    /// prefix rescaling identity for every prefix.
    #[test]
    fn preferences_simplex_and_recursion(counts in proptest::collection::vec(1usize..200, 1..10)) {
        let full = preferences(&counts).unwrap();
        let sum: f64 = full.weights.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        prop_assert!(full.weights.iter().all(|&w| w >= 0.0));
        for k in 1..counts.len() {
            let prefix = preferences(&counts[..k]).unwrap();
            let longer = preferences(&counts[..=k]).unwrap();
            let ratio = prefix.total_samples as f64 / longer.total_samples as f64;
            for t in 0..k {
                prop_assert!((longer.weights[t] - ratio * prefix.weights[t]).abs() <= 1e-15);
            }
        }
    }

    /// The economy factorization reconstructs its input and keeps factors
    /// orthonormal, whatever the shape.
    #[test]
    fn econ_svd_reconstructs((rows, cols) in (1usize..18, 1usize..12).prop_flat_map(|(r, c)| (Just(r), Just(c)))) {
        let m = DMatrix::from_fn(rows, cols, |i, j| {
            ((i * 31 + j * 17) as f64 * 0.37).sin() * 3.0
        });
        let svd = econ_svd(&m).unwrap();
        let err = (svd.reconstruct() - &m).norm();
        prop_assert!(err <= 1e-10 * m.norm().max(1.0));
        let eye = svd.v.transpose() * &svd.v;
        prop_assert!((eye - DMatrix::identity(svd.rank(), svd.rank())).amax() <= 1e-10);
    }

    /// The compressed task record reproduces the raw quadratic loss at
    /// arbitrary parameters, and forgetting is never negative.
    #[test]
    fn msi_faithful_to_direct_loss(
        x in finite_matrix(6, 4),
        y in proptest::collection::vec(-10.0f64..10.0, 6),
        theta in proptest::collection::vec(-5.0f64..5.0, 4),
    ) {
        let y = DVector::from_vec(y);
        let theta = DVector::from_vec(theta);
        let task = TaskDataset::regression(0, x.clone(), y.clone()).unwrap();
        let msi = match compute_msi(&task, &FeatureMap::identity(4)) {
            Ok(m) => m,
            Err(pmfcl::Error::RankZero) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        let direct = (&x * &theta - &y).norm_squared() / (2.0 * x.nrows() as f64);
        let rebuilt = reconstruct_loss(&msi, &theta).unwrap();
        prop_assert!((rebuilt - direct).abs() <= 1e-9 * (1.0 + direct));
        prop_assert!(forgetting(&msi, &theta).unwrap() >= 0.0);
    }

    /// Learned regression solutions match the joint least-squares optimum
    /// for arbitrary small task layouts.
    #[test]
    fn learner_matches_joint_oracle(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..6);
        let t_count = rng.random_range(1..5);
        let tasks: Vec<TaskDataset> = (0..t_count)
            .map(|tid| {
                let n = rng.random_range(1..8);
                let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let y = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
                TaskDataset::regression(tid, x, y).unwrap()
            })
            .collect();
        let mut learner = RegressionLearner::new(FeatureMap::identity(d), SolveStrategy::PseudoInverse);
        for task in &tasks {
            learner.learn_task(task).unwrap();
        }
        let joint = pmfcl::bench::joint_least_squares(&tasks).unwrap();
        let gap = (learner.solution() - &joint).norm() / (1.0 + joint.norm());
        prop_assert!(gap <= 1e-7, "gap {gap}");
    }
}
