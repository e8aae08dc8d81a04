//! Single-process simulation of federated continual learning for QUB
//! losses: each client folds its round data into a curvature/pull message,
//! the server aggregates with sample-proportional client preferences and
//! broadcasts the updated solution.
//!
//! Clients are in-process actors; [`ClientMessage`] is the wire schema, so a
//! transport can be added without touching the math. Rounds are synchronous:
//! client steps within a round are independent and may run concurrently,
//! aggregation is the barrier, and the summation order is fixed by client id
//! so results are bit-reproducible.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::pinv_apply;
use crate::qub::{fit_task_minimizer, hessian_upper_bound, FitOptions, LogisticKind};
use crate::regression::SolveStrategy;
use crate::tasks::{generate_classification_sequence, substream_seed, TaskDataset};
use crate::util::fmt_f64;

/// Per-client accumulated state across rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    client_id: u64,
    curvature: DMatrix<f64>,
    total_samples: usize,
    theta_shared: DVector<f64>,
}

impl ClientState {
    pub fn new(client_id: u64, dim: usize) -> Self {
        Self {
            client_id,
            curvature: DMatrix::zeros(dim, dim),
            total_samples: 0,
            theta_shared: DVector::zeros(dim),
        }
    }

    pub fn client_id(&self) -> u64 {
        self.client_id
    }

    pub fn total_samples(&self) -> usize {
        self.total_samples
    }

    pub fn dim(&self) -> usize {
        self.curvature.nrows()
    }

    /// Records the server broadcast.
    pub fn receive_broadcast(&mut self, theta: &DVector<f64>) {
        self.theta_shared = theta.clone();
    }

    pub fn shared_solution(&self) -> &DVector<f64> {
        &self.theta_shared
    }
}

/// One round's upload: sample total, accumulated curvature, and the
/// curvature-weighted pull toward this round's task minimizer.
///
/// Wire layout (little-endian): `u32` version, `u64` client id, `u32` d,
/// `u64` sample total, then `d^2` curvature floats column-major, then `d`
/// pull floats. Carries exactly `d^2 + d + 1` numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientMessage {
    pub client_id: u64,
    pub n_total: usize,
    pub curvature: DMatrix<f64>,
    pub gamma: DVector<f64>,
}

const MESSAGE_VERSION: u32 = 1;

impl ClientMessage {
    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Numbers carried on the wire: `d^2 + d + 1`.
    pub fn float_count(&self) -> usize {
        let d = self.dim();
        d * d + d + 1
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::with_capacity(24 + 8 * (d * d + d));
        out.extend_from_slice(&MESSAGE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.client_id.to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_total as u64).to_le_bytes());
        for value in self.curvature.as_slice() {
            out.extend_from_slice(&value.to_le_bytes());
        }
        for value in self.gamma.iter() {
            out.extend_from_slice(&value.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let take = |range: std::ops::Range<usize>| -> Result<&[u8]> {
            bytes
                .get(range)
                .ok_or_else(|| Error::MalformedMessage("truncated header".into()))
        };
        let version = u32::from_le_bytes(take(0..4)?.try_into().unwrap());
        if version != MESSAGE_VERSION {
            return Err(Error::MalformedMessage(format!(
                "unsupported message version {version}"
            )));
        }
        let client_id = u64::from_le_bytes(take(4..12)?.try_into().unwrap());
        let d = u32::from_le_bytes(take(12..16)?.try_into().unwrap()) as usize;
        let n_total = u64::from_le_bytes(take(16..24)?.try_into().unwrap()) as usize;
        let expected = 24 + 8 * (d * d + d);
        if bytes.len() != expected {
            return Err(Error::MalformedMessage(format!(
                "expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let mut floats = Vec::with_capacity(d * d + d);
        for chunk in bytes[24..].chunks_exact(8) {
            floats.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        if floats.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            client_id,
            n_total,
            curvature: DMatrix::from_column_slice(d, d, &floats[..d * d]),
            gamma: DVector::from_column_slice(&floats[d * d..]),
        })
    }
}

/// One client round: fit the round's task, fold its curvature bound into the
/// client state, and emit the message. A client with no data this round
/// leaves its state untouched and sends a zero pull.
pub fn client_step(
    client: &mut ClientState,
    dataset: Option<&TaskDataset>,
    theta_prev: &DVector<f64>,
    kind: LogisticKind,
    options: &FitOptions,
) -> Result<ClientMessage> {
    let d = client.dim();
    if theta_prev.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: theta_prev.len(),
        });
    }
    let Some(dataset) = dataset else {
        return Ok(ClientMessage {
            client_id: client.client_id,
            n_total: client.total_samples,
            curvature: client.curvature.clone(),
            gamma: DVector::zeros(d),
        });
    };
    if kind != LogisticKind::Binary {
        return Err(Error::InvalidConfig(
            "federated messages carry a single parameter column; use the binary kind".into(),
        ));
    }
    if dataset.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: dataset.dim(),
        });
    }

    let fit = fit_task_minimizer(dataset, kind, options)?;
    let theta_min = fit.theta_min.column(0).into_owned();
    let hessian = hessian_upper_bound(dataset, kind)?;

    let previous = client.total_samples;
    client.total_samples += dataset.n();
    let alpha = dataset.n() as f64 / client.total_samples as f64;
    let ratio = previous as f64 / client.total_samples as f64;

    let dense = hessian.materialize();
    client.curvature.scale_mut(ratio);
    client.curvature += dense.scale(alpha);
    let gamma = (&dense * (theta_min - theta_prev)).scale(alpha);

    Ok(ClientMessage {
        client_id: client.client_id,
        n_total: client.total_samples,
        curvature: client.curvature.clone(),
        gamma,
    })
}

/// Aggregates one message per registered client: sample-proportional client
/// weights, curvature/pull sums in ascending client-id order, then one solve
/// for the shared update.
pub fn server_aggregate(
    messages: &[ClientMessage],
    registered: &[u64],
    theta_prev: &DVector<f64>,
    strategy: SolveStrategy,
) -> Result<DVector<f64>> {
    let d = theta_prev.len();
    let mut ordered: Vec<&ClientMessage> = Vec::with_capacity(registered.len());
    for &id in registered {
        let message = messages
            .iter()
            .find(|m| m.client_id == id)
            .ok_or(Error::MissingClient(id))?;
        if message.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: message.dim(),
            });
        }
        ordered.push(message);
    }
    ordered.sort_by_key(|m| m.client_id);

    let total: usize = ordered.iter().map(|m| m.n_total).sum();
    if total == 0 {
        return Err(Error::NoClientSamples);
    }
    let mut curvature = DMatrix::zeros(d, d);
    let mut pull = DVector::zeros(d);
    for message in &ordered {
        let beta = message.n_total as f64 / total as f64;
        curvature += message.curvature.scale(beta);
        pull += message.gamma.scale(beta);
    }
    let delta = match strategy {
        SolveStrategy::PseudoInverse => pinv_apply(&curvature, &pull)?,
        SolveStrategy::Regularized { lambda } => {
            crate::linalg::solve_regularized(&curvature, &pull, lambda)?
        }
    };
    Ok(theta_prev + delta)
}

/// Federated scenario configuration. Each client owns an independent
/// drifting binary-classification stream (client `i` is seeded with
/// `substream_seed(seed, i)`), one task per round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FedConfig {
    pub seed: u64,
    pub clients: usize,
    pub rounds: usize,
    pub d: usize,
    pub n_per_round: usize,
    pub shift_sigma: f64,
    pub ridge: f64,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            clients: 3,
            rounds: 5,
            d: 4,
            n_per_round: 40,
            shift_sigma: 0.3,
            ridge: 1e-8,
        }
    }
}

/// Per-round log: client preferences, message sizes, and the broadcast.
#[derive(Debug, Clone)]
pub struct RoundLog {
    pub round: usize,
    pub beta: Vec<f64>,
    pub message_floats: Vec<usize>,
    pub message_bytes: Vec<usize>,
    pub theta: DVector<f64>,
}

/// Output of a simulated federated run.
#[derive(Debug, Clone)]
pub struct FedRun {
    pub trajectory: Vec<DVector<f64>>,
    pub logs: Vec<RoundLog>,
    /// Per client, per round datasets (kept for oracle comparisons).
    pub datasets: Vec<Vec<TaskDataset>>,
}

/// Runs the synchronous federated loop; deterministic given the seed.
pub fn run_rounds(config: &FedConfig) -> Result<FedRun> {
    if config.clients == 0 || config.rounds == 0 {
        return Err(Error::InvalidConfig("clients and rounds must be positive".into()));
    }
    let options = FitOptions {
        ridge: config.ridge,
        ..FitOptions::default()
    };
    // Client i's stream of per-round tasks.
    let datasets: Vec<Vec<TaskDataset>> = (0..config.clients)
        .map(|i| {
            generate_classification_sequence(
                substream_seed(config.seed, i as u64),
                config.d,
                config.rounds,
                config.n_per_round,
                2,
                config.shift_sigma,
            )
        })
        .collect::<Result<_>>()?;

    let registered: Vec<u64> = (0..config.clients as u64).collect();
    let mut clients: Vec<ClientState> = registered
        .iter()
        .map(|&id| ClientState::new(id, config.d))
        .collect();
    let mut theta = DVector::zeros(config.d);
    let mut trajectory = Vec::with_capacity(config.rounds);
    let mut logs = Vec::with_capacity(config.rounds);

    for round in 0..config.rounds {
        // Independent client steps; aggregation below is the barrier.
        let messages: Vec<ClientMessage> = clients
            .par_iter_mut()
            .zip(datasets.par_iter())
            .map(|(client, stream)| {
                client_step(
                    client,
                    Some(&stream[round]),
                    &theta,
                    LogisticKind::Binary,
                    &options,
                )
            })
            .collect::<Result<_>>()?;

        let total: usize = messages.iter().map(|m| m.n_total).sum();
        let beta: Vec<f64> = registered
            .iter()
            .map(|&id| {
                let m = messages.iter().find(|m| m.client_id == id).expect("own message");
                m.n_total as f64 / total as f64
            })
            .collect();

        theta = server_aggregate(&messages, &registered, &theta, SolveStrategy::PseudoInverse)?;
        for client in clients.iter_mut() {
            client.receive_broadcast(&theta);
        }
        logs.push(RoundLog {
            round,
            beta,
            message_floats: messages.iter().map(ClientMessage::float_count).collect(),
            message_bytes: messages.iter().map(|m| m.to_bytes().len()).collect(),
            theta: theta.clone(),
        });
        trajectory.push(theta.clone());
    }
    Ok(FedRun {
        trajectory,
        logs,
        datasets,
    })
}

/// Writes round logs as CSV: `round,beta,message_floats,message_bytes,theta`
/// with multi-valued fields joined by ';'.
pub fn write_round_logs<W: Write>(writer: W, logs: &[RoundLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["round", "beta", "message_floats", "message_bytes", "theta"])?;
    for log in logs {
        let beta = log.beta.iter().map(|&b| fmt_f64(b)).collect::<Vec<_>>().join(";");
        let floats = log
            .message_floats
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let bytes = log
            .message_bytes
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(";");
        let theta = log.theta.iter().map(|&t| fmt_f64(t)).collect::<Vec<_>>().join(";");
        w.write_record(&[log.round.to_string(), beta, floats, bytes, theta])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qub::{build_summary, QubLearner};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn binary_task(id: usize, seed: u64, d: usize, n: usize) -> TaskDataset {
        let tasks = generate_classification_sequence(seed, d, id + 1, n, 2, 0.4).unwrap();
        tasks.into_iter().nth(id).unwrap()
    }

    #[test]
    fn first_round_collapses_recursion() {
        let d = 3;
        let ds = binary_task(0, 5, d, 30);
        let mut client = ClientState::new(0, d);
        let theta0 = DVector::zeros(d);
        let message = client_step(
            &mut client,
            Some(&ds),
            &theta0,
            LogisticKind::Binary,
            &FitOptions::default(),
        )
        .unwrap();
        // B equals H_1 exactly and gamma = H_1 (theta_min - theta_0).
        let h = hessian_upper_bound(&ds, LogisticKind::Binary)
            .unwrap()
            .materialize();
        assert_relative_eq!(&message.curvature, &h, epsilon = 1e-12);
        let fit = fit_task_minimizer(&ds, LogisticKind::Binary, &FitOptions::default()).unwrap();
        let expected = &h * fit.theta_min.column(0).into_owned();
        assert_relative_eq!(&message.gamma, &expected, epsilon = 1e-10);
    }

    #[test]
    fn stationary_client_sends_zero_pull() {
        let d = 2;
        let ds = binary_task(0, 9, d, 40);
        let fit = fit_task_minimizer(&ds, LogisticKind::Binary, &FitOptions::default()).unwrap();
        let theta_prev = fit.theta_min.column(0).into_owned();
        let mut client = ClientState::new(1, d);
        let message = client_step(
            &mut client,
            Some(&ds),
            &theta_prev,
            LogisticKind::Binary,
            &FitOptions::default(),
        )
        .unwrap();
        assert!(message.gamma.norm() <= 1e-8, "gamma {}", message.gamma.norm());
    }

    #[test]
    fn message_float_count_and_bytes() {
        let d = 4;
        let message = ClientMessage {
            client_id: 7,
            n_total: 12,
            curvature: DMatrix::identity(d, d),
            gamma: DVector::zeros(d),
        };
        assert_eq!(message.float_count(), d * d + d + 1);
        let bytes = message.to_bytes();
        assert_eq!(bytes.len(), 24 + 8 * (d * d + d));
        let back = ClientMessage::from_bytes(&bytes).unwrap();
        assert_eq!(back, message);
    }

    #[test]
    fn malformed_messages_rejected() {
        let message = ClientMessage {
            client_id: 1,
            n_total: 3,
            curvature: DMatrix::identity(2, 2),
            gamma: DVector::zeros(2),
        };
        let mut bytes = message.to_bytes();
        bytes.truncate(10);
        assert!(ClientMessage::from_bytes(&bytes).is_err());
        let mut wrong_version = message.to_bytes();
        wrong_version[0] = 9;
        assert!(ClientMessage::from_bytes(&wrong_version).is_err());
    }

    #[test]
    fn missing_client_detected() {
        let message = ClientMessage {
            client_id: 0,
            n_total: 5,
            curvature: DMatrix::identity(2, 2),
            gamma: DVector::zeros(2),
        };
        let result = server_aggregate(
            &[message],
            &[0, 1],
            &DVector::zeros(2),
            SolveStrategy::PseudoInverse,
        );
        assert!(matches!(result, Err(Error::MissingClient(1))));
    }

    #[test]
    fn all_empty_clients_rejected() {
        let empty = ClientMessage {
            client_id: 0,
            n_total: 0,
            curvature: DMatrix::zeros(2, 2),
            gamma: DVector::zeros(2),
        };
        let result = server_aggregate(
            &[empty],
            &[0],
            &DVector::zeros(2),
            SolveStrategy::PseudoInverse,
        );
        assert!(matches!(result, Err(Error::NoClientSamples)));
    }

    #[test]
    fn single_client_matches_centralized_learner() {
        let d = 3;
        let rounds = 4;
        let tasks = generate_classification_sequence(33, d, rounds, 30, 2, 0.4).unwrap();
        let mut client = ClientState::new(0, d);
        let mut theta = DVector::zeros(d);
        let mut centralized = QubLearner::new(d, 1, SolveStrategy::PseudoInverse);
        for task in &tasks {
            let message = client_step(
                &mut client,
                Some(task),
                &theta,
                LogisticKind::Binary,
                &FitOptions::default(),
            )
            .unwrap();
            theta = server_aggregate(
                &[message],
                &[0],
                &theta,
                SolveStrategy::PseudoInverse,
            )
            .unwrap();
            centralized
                .learn_task(build_summary(task, LogisticKind::Binary, &FitOptions::default()).unwrap())
                .unwrap();
            let gap = (&theta - centralized.solution_vector().unwrap()).norm();
            assert!(gap <= 1e-9, "round gap {gap}");
        }
    }

    #[test]
    fn identical_clients_match_single_client() {
        let d = 2;
        let ds = binary_task(0, 44, d, 50);
        let run_with = |m: usize| -> DVector<f64> {
            let registered: Vec<u64> = (0..m as u64).collect();
            let mut clients: Vec<ClientState> =
                registered.iter().map(|&id| ClientState::new(id, d)).collect();
            let theta = DVector::zeros(d);
            let messages: Vec<ClientMessage> = clients
                .iter_mut()
                .map(|c| {
                    client_step(c, Some(&ds), &theta, LogisticKind::Binary, &FitOptions::default())
                        .unwrap()
                })
                .collect();
            server_aggregate(&messages, &registered, &theta, SolveStrategy::PseudoInverse).unwrap()
        };
        let one = run_with(1);
        let two = run_with(2);
        assert_relative_eq!(one, two, epsilon = 1e-10);
    }

    #[test]
    fn run_rounds_deterministic() {
        let config = FedConfig {
            clients: 2,
            rounds: 3,
            d: 3,
            n_per_round: 25,
            ..FedConfig::default()
        };
        let a = run_rounds(&config).unwrap();
        let b = run_rounds(&config).unwrap();
        for (ta, tb) in a.trajectory.iter().zip(&b.trajectory) {
            assert_eq!(ta, tb, "trajectories must be bit-identical");
        }
        assert_eq!(a.trajectory.len(), 3);
        for log in &a.logs {
            for &f in &log.message_floats {
                assert_eq!(f, 3 * 3 + 3 + 1);
            }
            let beta_sum: f64 = log.beta.iter().sum();
            assert_relative_eq!(beta_sum, 1.0, epsilon = 1e-12);
        }
    }

    /// The client-preference recursion and the cross-client preference
    /// recursion hold exactly on every prefix of a run.
    #[test]
    fn preference_recursions_hold() {
        let config = FedConfig {
            clients: 3,
            rounds: 4,
            d: 2,
            n_per_round: 15,
            ..FedConfig::default()
        };
        let run = run_rounds(&config).unwrap();
        // Per-client sample totals after each round; one task per round of
        // n_per_round samples each.
        let n_per_round = config.n_per_round as f64;
        for k in 1..config.rounds {
            let prev_total = (k * config.n_per_round * config.clients) as f64;
            let total = ((k + 1) * config.n_per_round * config.clients) as f64;
            for i in 0..config.clients {
                let n_prev = (k * config.n_per_round) as f64;
                let n_now = n_prev + n_per_round;
                // alpha_{t,i}^{(k)} = alpha_{t,i}^{(k-1)} * N_{k-1,i} / N_{k,i}
                let alpha_prev = n_per_round / n_prev;
                let alpha_now = n_per_round / n_now;
                assert_relative_eq!(alpha_now, alpha_prev * n_prev / n_now, epsilon = 1e-15);
                // beta recursion with equal growth keeps client weights put.
                let beta_prev = run.logs[k - 1].beta[i];
                let beta_now = run.logs[k].beta[i];
                assert_relative_eq!(
                    beta_now,
                    beta_prev * (n_now / n_prev) * (prev_total / total),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn trivial_run_single_round_single_client() {
        let config = FedConfig {
            clients: 1,
            rounds: 1,
            d: 2,
            n_per_round: 30,
            ..FedConfig::default()
        };
        let run = run_rounds(&config).unwrap();
        // theta_1 equals the sole task's minimizer.
        let fit = fit_task_minimizer(
            &run.datasets[0][0],
            LogisticKind::Binary,
            &FitOptions {
                ridge: config.ridge,
                ..FitOptions::default()
            },
        )
        .unwrap();
        let gap = (&run.trajectory[0] - fit.theta_min.column(0).into_owned()).norm();
        assert!(gap <= 1e-9, "gap {gap}");
    }

    #[test]
    fn round_log_csv() {
        let config = FedConfig {
            clients: 2,
            rounds: 2,
            d: 2,
            n_per_round: 20,
            ..FedConfig::default()
        };
        let run = run_rounds(&config).unwrap();
        let mut buffer = Vec::new();
        write_round_logs(&mut buffer, &run.logs).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        assert!(text.starts_with("round,beta,message_floats,message_bytes,theta\n"));
    }
}
