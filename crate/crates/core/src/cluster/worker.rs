use std::collections::VecDeque;
use std::io::{BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::master::ERROR_PREFIX;
use super::protocol::{read_message, write_message, Message};
use super::{ClusterConfig, ClusterError};
use crate::audio::{decode_wav, encode_wav, AudioClip, ChunkId};
use crate::pipeline::{process_chunk, ChunkDecision, PipelineConfig, Rules};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub processed: usize,
    pub kept: usize,
    pub deleted: usize,
    pub errors: usize,
    /// Highest inbound queue occupancy seen.
    pub max_occupancy: usize,
    /// Result batches sent.
    pub flushes: usize,
    /// Audio payload bytes received in grants.
    pub bytes_in: u64,
    pub bytes_out: u64,
}

#[derive(Default)]
struct Inner {
    queue: VecDeque<AudioClip>,
    /// Chunks requested from the master and not yet granted.
    outstanding: usize,
    processed: VecDeque<Message>,
    deleted_ids: Vec<ChunkId>,
    deleted_reasons: Vec<String>,
    shutdown: bool,
    lost: bool,
    stats: WorkerStats,
}

struct Shared {
    inner: Mutex<Inner>,
    changed: Condvar,
    stop: AtomicBool,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Connects to the master and processes chunks until told to shut down.
pub fn worker_run(cfg: &ClusterConfig, pcfg: &PipelineConfig) -> Result<WorkerStats, ClusterError> {
    worker_run_until(cfg, pcfg, Arc::new(AtomicBool::new(false)))
}

/// Like [`worker_run`], but drops the connection without flushing as soon
/// as `kill` is set, the way a crashed worker would.
pub fn worker_run_until(
    cfg: &ClusterConfig,
    pcfg: &PipelineConfig,
    kill: Arc<AtomicBool>,
) -> Result<WorkerStats, ClusterError> {
    cfg.validate()?;
    pcfg.validate()?;
    let rules = Arc::new(pcfg.load_rules()?);
    let stream = TcpStream::connect(&cfg.endpoint).map_err(|e| ClusterError::Connect {
        addr: cfg.endpoint.clone(),
        source: e,
    })?;
    let _ = stream.set_nodelay(true);
    let io_err = |e: std::io::Error| ClusterError::Connect {
        addr: cfg.endpoint.clone(),
        source: e,
    };
    let mut out = BufWriter::new(stream.try_clone().map_err(io_err)?);
    let name = if cfg.worker_name.is_empty() {
        default_name()
    } else {
        cfg.worker_name.clone()
    };
    let mut bytes_out = write_message(
        &mut out,
        &Message::Hello {
            worker_name: name.clone(),
            thread_count: cfg.worker_threads as u32,
        },
    )? as u64;
    info!("worker {name} connected to {}", cfg.endpoint);

    let shared = Arc::new(Shared {
        inner: Mutex::new(Inner::default()),
        changed: Condvar::new(),
        stop: AtomicBool::new(false),
    });

    let reader = {
        let shared = shared.clone();
        let stream = stream.try_clone().map_err(io_err)?;
        let capacity = cfg.queue_size;
        thread::spawn(move || read_loop(&shared, stream, capacity))
    };
    let executors: Vec<_> = (0..cfg.worker_threads)
        .map(|_| {
            let shared = shared.clone();
            let pcfg = pcfg.clone();
            let rules = rules.clone();
            thread::spawn(move || execute_loop(&shared, &pcfg, &rules))
        })
        .collect();

    let interval = Duration::from_secs_f64(cfg.send_interval_s);
    let mut next_flush = Instant::now() + interval;
    let result = loop {
        if kill.load(Ordering::SeqCst) {
            let _ = stream.shutdown(Shutdown::Both);
            break Err(ClusterError::Killed);
        }
        let mut st = shared.lock();
        if st.lost {
            break Err(ClusterError::ConnectionLost);
        }
        if st.shutdown {
            let batch = take_results(&mut st);
            drop(st);
            let sent = send_all(&mut out, batch);
            break sent.map(|n| bytes_out += n);
        }
        let deficit = cfg
            .queue_size
            .saturating_sub(st.queue.len() + st.outstanding);
        if deficit > 0 {
            st.outstanding += deficit;
        }
        let due = Instant::now() >= next_flush;
        let batch = if due {
            take_results(&mut st)
        } else {
            Vec::new()
        };
        if due {
            next_flush = Instant::now() + interval;
            if !batch.is_empty() {
                st.stats.flushes += 1;
            }
        }
        let wait = next_flush
            .saturating_duration_since(Instant::now())
            .min(Duration::from_millis(20));
        if deficit == 0 && batch.is_empty() {
            let _ = shared.changed.wait_timeout(st, wait);
            continue;
        }
        drop(st);
        let mut msgs = batch;
        if deficit > 0 {
            msgs.insert(
                0,
                Message::WorkRequest {
                    count: deficit as u32,
                },
            );
        }
        match send_all(&mut out, msgs) {
            Ok(n) => bytes_out += n,
            Err(e) => {
                debug!("send failed: {e}");
                break Err(ClusterError::ConnectionLost);
            }
        }
    };

    shared.stop.store(true, Ordering::SeqCst);
    shared.changed.notify_all();
    let _ = stream.shutdown(Shutdown::Both);
    let _ = reader.join();
    for e in executors {
        let _ = e.join();
    }
    let mut stats = std::mem::take(&mut shared.lock().stats);
    stats.bytes_out = bytes_out;
    match &result {
        Ok(()) => info!("worker {name} done: {} chunks", stats.processed),
        Err(e) => warn!("worker {name} stopped: {e}"),
    }
    result.map(|_| stats)
}

fn default_name() -> String {
    let host = std::env::var("HOSTNAME").unwrap_or_else(|_| "worker".into());
    format!("{host}-{}", std::process::id())
}

/// Empties both result buffers into messages; empty buffers produce none.
fn take_results(st: &mut Inner) -> Vec<Message> {
    let mut msgs: Vec<Message> = st.processed.drain(..).collect();
    if !st.deleted_ids.is_empty() {
        msgs.push(Message::ResultDeleted {
            chunk_ids: std::mem::take(&mut st.deleted_ids),
            reasons: std::mem::take(&mut st.deleted_reasons),
        });
    }
    msgs
}

fn send_all(out: &mut BufWriter<TcpStream>, msgs: Vec<Message>) -> Result<u64, ClusterError> {
    let mut n = 0;
    for m in &msgs {
        n += write_message(out, m)? as u64;
    }
    out.flush().map_err(super::ProtocolError::from)?;
    Ok(n)
}

fn read_loop(shared: &Shared, stream: TcpStream, capacity: usize) {
    let mut r = BufReader::new(stream);
    loop {
        let msg = read_message(&mut r);
        let mut st = shared.lock();
        match msg {
            Ok(Some(Message::WorkGrant {
                chunk_id,
                wav_bytes,
            })) => {
                st.stats.bytes_in += wav_bytes.len() as u64;
                st.outstanding = st.outstanding.saturating_sub(1);
                match decode_wav(&wav_bytes, chunk_id.clone()) {
                    Ok(clip) => {
                        st.queue.push_back(clip);
                        let occ = st.queue.len();
                        assert!(
                            occ <= capacity,
                            "inbound queue over capacity: {occ} > {capacity}"
                        );
                        st.stats.max_occupancy = st.stats.max_occupancy.max(occ);
                    }
                    Err(e) => {
                        st.stats.errors += 1;
                        st.deleted_ids.push(chunk_id);
                        st.deleted_reasons.push(format!("{ERROR_PREFIX}{e}"));
                    }
                }
            }
            Ok(Some(Message::NoMoreWork)) => debug!("master has no work right now"),
            Ok(Some(Message::Shutdown)) => {
                st.shutdown = true;
                shared.changed.notify_all();
                return;
            }
            Ok(Some(other)) => {
                warn!("unexpected message from master: {other:?}");
                st.lost = true;
                shared.changed.notify_all();
                return;
            }
            Ok(None) | Err(_) => {
                if !shared.stop.load(Ordering::SeqCst) {
                    st.lost = true;
                }
                shared.changed.notify_all();
                return;
            }
        }
        shared.changed.notify_all();
    }
}

fn execute_loop(shared: &Shared, pcfg: &PipelineConfig, rules: &Rules) {
    loop {
        let chunk = {
            let mut st = shared.lock();
            loop {
                if shared.stop.load(Ordering::SeqCst) || st.shutdown || st.lost {
                    return;
                }
                if let Some(c) = st.queue.pop_front() {
                    break c;
                }
                st = shared.changed.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        };
        // the coordinator may top the queue up again
        shared.changed.notify_all();
        let id = chunk.chunk_id().clone();
        let result = process_chunk(&chunk, pcfg, rules);
        let mut st = shared.lock();
        st.stats.processed += 1;
        match result {
            Ok(outcome) => match outcome.decision {
                ChunkDecision::Kept(pieces) => {
                    st.stats.kept += 1;
                    st.processed.push_back(Message::ResultProcessed {
                        original: id,
                        outputs: pieces
                            .iter()
                            .map(|p| (p.chunk_id().clone(), encode_wav(p)))
                            .collect(),
                        stage_us: outcome
                            .stages
                            .iter()
                            .map(|(s, d)| {
                                (s.to_string(), d.as_micros().min(u32::MAX as u128) as u32)
                            })
                            .collect(),
                    });
                }
                ChunkDecision::Deleted(reason) => {
                    st.stats.deleted += 1;
                    st.deleted_ids.push(id);
                    st.deleted_reasons.push(reason.as_str().to_string());
                }
            },
            Err(e) => {
                warn!("chunk {id} failed: {e}");
                st.stats.errors += 1;
                st.deleted_ids.push(id);
                st.deleted_reasons.push(format!("{ERROR_PREFIX}{e}"));
            }
        }
    }
}
