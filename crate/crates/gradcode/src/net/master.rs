use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use gradcode_core::codes::BlockCollector;
use gradcode_core::linalg;
use gradcode_core::optim::Objective;
use gradcode_core::simulator::{IterationRecord, RunResult, RunSpec, Simulator, WaitPolicy};

use super::codec::{read_frame, write_frame, Frame, Message, WorkerAssignment};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct MasterOptions {
    /// Longest wait for all workers to connect.
    pub accept_timeout: Duration,
    /// Longest a round may stay open.
    pub round_timeout: Duration,
}

impl MasterOptions {
    pub fn with_timeout(timeout: Duration) -> Self {
        Self {
            accept_timeout: timeout,
            round_timeout: timeout,
        }
    }
}

enum Event {
    Frame(usize, Frame),
    Closed(usize, String),
}

struct Peer {
    stream: TcpStream,
    alive: bool,
}

impl Drop for Peer {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
    }
}

/// Accepts `k` workers, assigns blocks and runs `spec.iterations` synchronous rounds.
///
/// `spec.delays` is not consulted: completion times are whatever the workers
/// produce. Wall times in the result are seconds.
pub fn serve<O: Objective + ?Sized>(
    objective: &O,
    spec: RunSpec,
    listener: TcpListener,
    opts: MasterOptions,
) -> Result<RunResult> {
    let sim = Simulator::new(objective, spec.clone())?;
    let params = spec.params;
    let matrix = sim.matrix().clone();
    let threshold = spec.policy.threshold(params.k());
    let dim = objective.dim();

    let (tx, rx) = mpsc::channel();
    let mut peers = accept_workers(&listener, params.k(), opts.accept_timeout, &tx)?;
    drop(tx);
    for (j, peer) in peers.iter_mut().enumerate() {
        let block = matrix.block_of(j);
        let assign = Message::Assign(WorkerAssignment {
            worker_id: j as u32,
            block_id: block as u32,
            indices: matrix.block_tasks(block).map(|i| i as u32).collect(),
        });
        if let Err(e) = write_frame(&mut peer.stream, &Frame::new(0, assign)) {
            log::warn!("worker {j}: assignment failed ({e}); treating it as a straggler");
            peer.alive = false;
        }
    }

    let mut x = sim.initial_point()?;
    let initial_loss = objective.value(&x);
    let mut records = Vec::with_capacity(spec.iterations as usize);
    for t in 1..=spec.iterations {
        let start = Instant::now();
        let model = Frame::new(t, Message::Model { x: x.clone() });
        for (j, peer) in peers.iter_mut().enumerate().filter(|(_, p)| p.alive) {
            if let Err(e) = write_frame(&mut peer.stream, &model) {
                log::warn!("worker {j}: send failed ({e}); treating it as a straggler");
                peer.alive = false;
            }
        }
        check_blocks_alive(&peers, &spec.policy, &matrix)?;

        let mut collector = BlockCollector::new(params.blocks());
        let mut finished = Vec::with_capacity(threshold);
        let mut reported = vec![false; params.k()];
        let deadline = start + opts.round_timeout;
        loop {
            if collector.coverage().is_full() || finished.len() >= threshold {
                break;
            }
            let live = peers.iter().filter(|p| p.alive).count();
            if live == 0 {
                return Err(Error::Aborted(format!("round {t}: every worker has disconnected")));
            }
            if peers.iter().zip(&reported).all(|(p, &r)| !p.alive || r) {
                log::warn!(
                    "round {t}: closing with {} of {} blocks after all {live} live workers reported",
                    collector.coverage().count(),
                    params.blocks()
                );
                break;
            }
            let event = match rx.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
                Ok(e) => e,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Aborted(format!(
                        "round {t} timed out after {:?}",
                        opts.round_timeout
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Aborted(format!("round {t}: every worker connection has closed")))
                }
            };
            match event {
                Event::Closed(j, why) => {
                    if peers[j].alive {
                        log::warn!("worker {j} disconnected ({why}); treating it as a permanent straggler");
                        peers[j].alive = false;
                    }
                    check_blocks_alive(&peers, &spec.policy, &matrix)?;
                }
                Event::Frame(j, frame) => match frame.msg {
                    Message::Gradient { worker_id, block_id, y } => {
                        if frame.round != t {
                            log::debug!(
                                "worker {j}: discarding gradient for round {} during round {t}",
                                frame.round
                            );
                            continue;
                        }
                        if worker_id as usize != j || block_id as usize != matrix.block_of(j) || y.len() != dim {
                            log::warn!("worker {j}: malformed gradient (id {worker_id}, block {block_id}, {} entries); dropping the worker", y.len());
                            peers[j].alive = false;
                            let _ = peers[j].stream.shutdown(std::net::Shutdown::Both);
                            check_blocks_alive(&peers, &spec.policy, &matrix)?;
                            continue;
                        }
                        if reported[j] || !peers[j].alive {
                            continue;
                        }
                        reported[j] = true;
                        finished.push(j);
                        collector.offer(j, block_id as usize, y);
                    }
                    other => log::warn!("worker {j}: unexpected {:?} frame ignored", other.kind()),
                },
            }
        }
        let wall_time = start.elapsed().as_secs_f64();
        let g = collector.combine(dim, params.n())?;
        let (next, direction, gamma) = sim.rule().apply(&x, &g, t)?;
        let truth = objective.full_gradient(&x);
        let record = IterationRecord {
            t,
            covered_blocks: collector.coverage().count(),
            wall_time,
            loss: objective.value(&next),
            grad_error: linalg::norm(&linalg::sub(&direction, &truth)),
            gamma,
            finished_workers: finished,
        };
        log::info!(
            "round {t}: {} finished, {}/{} blocks, {:.4}s, loss {}",
            record.finished_workers.len(),
            record.covered_blocks,
            params.blocks(),
            wall_time,
            record.loss
        );
        records.push(record);
        x = next;
    }
    let stop = Frame::new(spec.iterations, Message::Stop);
    for peer in peers.iter_mut().filter(|p| p.alive) {
        let _ = write_frame(&mut peer.stream, &stop);
    }
    let total_time = records.iter().map(|r| r.wall_time).sum();
    let final_loss = records.last().map_or(initial_loss, |r| r.loss);
    Ok(RunResult {
        seed: spec.seed,
        spec,
        initial_loss,
        optimum_value: objective.optimum_value(),
        records,
        total_time,
        final_loss,
        sigma_observed: 0.0,
        final_x: x,
    })
}

fn accept_workers(listener: &TcpListener, k: usize, timeout: Duration, tx: &Sender<Event>) -> Result<Vec<Peer>> {
    let deadline = Instant::now() + timeout;
    let mut slots: Vec<Option<TcpStream>> = (0..k).map(|_| None).collect();
    listener.set_nonblocking(true)?;
    while slots.iter().any(Option::is_none) {
        let (mut stream, addr) = match listener.accept() {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    let missing = slots.iter().filter(|s| s.is_none()).count();
                    return Err(Error::Aborted(format!("{missing} of {k} workers never connected")));
                }
                thread::sleep(Duration::from_millis(5));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(timeout))?;
        let id = match read_frame(&mut stream) {
            Ok(Some(Frame {
                msg: Message::Hello { worker_id },
                ..
            })) => worker_id as usize,
            Ok(other) => {
                log::warn!("{addr}: expected a hello frame, got {other:?}; closing");
                continue;
            }
            Err(e) => {
                log::warn!("{addr}: handshake failed ({e}); closing");
                continue;
            }
        };
        if id >= k || slots[id].is_some() {
            log::warn!("{addr}: worker id {id} is out of range or already taken; closing");
            continue;
        }
        stream.set_read_timeout(None)?;
        log::info!("worker {id} connected from {addr}");
        slots[id] = Some(stream);
    }
    listener.set_nonblocking(false)?;
    slots
        .into_iter()
        .enumerate()
        .map(|(j, s)| {
            let stream = s.expect("filled");
            spawn_reader(j, stream.try_clone()?, tx.clone());
            Ok(Peer { stream, alive: true })
        })
        .collect()
}

fn spawn_reader(j: usize, mut stream: TcpStream, tx: Sender<Event>) {
    thread::spawn(move || loop {
        match read_frame(&mut stream) {
            Ok(Some(frame)) => {
                if tx.send(Event::Frame(j, frame)).is_err() {
                    return;
                }
            }
            Ok(None) => {
                let _ = tx.send(Event::Closed(j, "connection closed".into()));
                return;
            }
            Err(e) => {
                let _ = tx.send(Event::Closed(j, e.to_string()));
                return;
            }
        }
    });
}

/// Exact policies cannot finish a round once every replica of a block is gone.
fn check_blocks_alive(
    peers: &[Peer],
    policy: &WaitPolicy,
    matrix: &gradcode_core::codes::AssignmentMatrix,
) -> Result<()> {
    if matches!(policy, WaitPolicy::AgcFraction { .. }) {
        return Ok(());
    }
    for b in 0..matrix.params().blocks() {
        if matrix.block_workers(b).all(|j| !peers[j].alive) {
            return Err(Error::Aborted(format!(
                "every worker of block {b} has disconnected; exact recovery is impossible"
            )));
        }
    }
    Ok(())
}
