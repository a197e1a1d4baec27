use std::net::TcpStream;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use gradcode_core::optim::{self, Objective};
use gradcode_core::simulator::{DelaySource, DelayTable};

use super::codec::{read_frame, write_frame, Frame, Message, WorkerAssignment};
use crate::error::{Error, Result};

/// Artificial delay added before a gradient is sent.
#[derive(Debug, Clone, PartialEq)]
pub enum InjectedDelay {
    None,
    /// `Exp(lambda)` per round, reproducible from `seed`, round and worker id.
    Exponential {
        seed: u64,
        lambda: f64,
    },
    /// Row `t` column `j` of the table.
    Table(DelayTable),
}

#[derive(Debug, Clone)]
pub struct WorkerOptions {
    pub worker_id: u32,
    pub delay: InjectedDelay,
    /// Seconds per delay unit.
    pub delay_scale: f64,
    pub connect_retries: u32,
    pub retry_wait: Duration,
    /// Drop the connection on receipt of this round's model (fault injection).
    pub disconnect_at: Option<u64>,
}

impl WorkerOptions {
    pub fn new(worker_id: u32) -> Self {
        Self {
            worker_id,
            delay: InjectedDelay::None,
            delay_scale: 1.0,
            connect_retries: 20,
            retry_wait: Duration::from_millis(250),
            disconnect_at: None,
        }
    }

    /// Delay for round `t`, measured from receipt of the model.
    pub fn delay_for(&self, t: u64) -> Result<Duration> {
        let units = match &self.delay {
            InjectedDelay::None => 0.0,
            InjectedDelay::Exponential { seed, lambda } => {
                DelaySource::injected_sleep(*lambda, *seed, t, self.worker_id as usize)
            }
            InjectedDelay::Table(table) => {
                let row = table.round(t)?;
                *row.get(self.worker_id as usize).ok_or_else(|| {
                    Error::Usage(format!(
                        "delay table has {} columns, worker id is {}",
                        row.len(),
                        self.worker_id
                    ))
                })?
            }
        };
        Ok(Duration::from_secs_f64((units * self.delay_scale).max(0.0)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerReport {
    pub sent: u64,
    /// Rounds dropped because a newer model or a stop arrived first.
    pub abandoned: u64,
    pub assignment: Option<(u32, Vec<u32>)>,
}

fn connect(addr: &str, opts: &WorkerOptions) -> Result<TcpStream> {
    let mut attempt = 0;
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(e) if attempt < opts.connect_retries => {
                log::debug!("connect to {addr} failed ({e}); retrying");
                attempt += 1;
                thread::sleep(opts.retry_wait);
            }
            Err(e) => {
                return Err(Error::Aborted(format!(
                    "could not reach master at {addr} after {} attempts: {e}",
                    attempt + 1
                )))
            }
        }
    }
}

/// Runs one worker until the master sends STOP.
///
/// `load` builds an objective that can evaluate the assigned components
/// (global numbering).
pub fn run_worker<F>(addr: &str, load: F, opts: &WorkerOptions) -> Result<WorkerReport>
where
    F: FnOnce(&WorkerAssignment) -> Result<Box<dyn Objective>>,
{
    let mut stream = connect(addr, opts)?;
    stream.set_nodelay(true)?;
    write_frame(
        &mut stream,
        &Frame::new(
            0,
            Message::Hello {
                worker_id: opts.worker_id,
            },
        ),
    )?;
    let assignment = match read_frame(&mut stream)? {
        Some(Frame {
            msg: Message::Assign(a),
            ..
        }) => a,
        Some(other) => {
            return Err(Error::Protocol(format!(
                "expected an assignment, got {:?}",
                other.msg.kind()
            )))
        }
        None => {
            return Err(Error::Protocol(
                "master closed the connection before assigning work".into(),
            ))
        }
    };
    if assignment.worker_id != opts.worker_id {
        return Err(Error::Protocol(format!(
            "assigned id {} but connected as {}",
            assignment.worker_id, opts.worker_id
        )));
    }
    let c = assignment.indices.len();
    let block = assignment.block_id as usize;
    let consecutive = assignment
        .indices
        .iter()
        .enumerate()
        .all(|(i, &t)| t as usize == block * c + i);
    if c == 0 || !consecutive {
        return Err(Error::Protocol(format!(
            "block {block} assigned non-block tasks {:?}",
            assignment.indices
        )));
    }
    let objective = load(&assignment)?;
    log::info!(
        "worker {}: block {block}, tasks {:?}",
        opts.worker_id,
        assignment.indices
    );

    let (tx, rx) = mpsc::channel();
    let mut reader = stream.try_clone()?;
    thread::spawn(move || loop {
        let item = read_frame(&mut reader);
        let end = !matches!(item, Ok(Some(_)));
        if tx.send(item).is_err() || end {
            return;
        }
    });

    let mut report = WorkerReport {
        assignment: Some((assignment.block_id, assignment.indices.clone())),
        ..Default::default()
    };
    let mut pending: Option<Frame> = None;
    loop {
        let frame = match pending.take() {
            Some(f) => f,
            None => match rx.recv() {
                Ok(Ok(Some(f))) => f,
                Ok(Ok(None)) | Err(_) => {
                    return Err(Error::Protocol("master closed the connection without STOP".into()))
                }
                Ok(Err(e)) => return Err(e),
            },
        };
        let t = frame.round;
        let x = match frame.msg {
            Message::Stop => {
                log::info!("worker {}: stop after {} gradients", opts.worker_id, report.sent);
                return Ok(report);
            }
            Message::Model { x } => x,
            other => {
                return Err(Error::Protocol(format!(
                    "unexpected frame kind {} from master",
                    other.kind()
                )))
            }
        };
        let received = Instant::now();
        if opts.disconnect_at == Some(t) {
            log::warn!("worker {}: dropping connection at round {t}", opts.worker_id);
            let _ = stream.shutdown(std::net::Shutdown::Both);
            return Ok(report);
        }
        if x.len() != objective.dim() {
            return Err(Error::Protocol(format!(
                "model has {} entries, objective dimension is {}",
                x.len(),
                objective.dim()
            )));
        }
        let y = optim::block_sum(&*objective, block, &x, c)?;
        let ready = received + opts.delay_for(t)?;
        let wait = ready.saturating_duration_since(Instant::now());
        if !wait.is_zero() {
            match rx.recv_timeout(wait) {
                Ok(Ok(Some(f))) => pending = Some(f),
                Ok(Ok(None)) => return Err(Error::Protocol("master closed the connection without STOP".into())),
                Ok(Err(e)) => return Err(e),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return Err(Error::Protocol("master connection lost".into())),
            }
        }
        if pending.is_some() {
            log::debug!(
                "worker {}: round {t} superseded before its delay elapsed",
                opts.worker_id
            );
            report.abandoned += 1;
            continue;
        }
        let msg = Message::Gradient {
            worker_id: opts.worker_id,
            block_id: assignment.block_id,
            y,
        };
        if let Err(e) = write_frame(&mut stream, &Frame::new(t, msg)) {
            return Err(Error::Protocol(format!("sending gradient for round {t} failed: {e}")));
        }
        report.sent += 1;
    }
}
