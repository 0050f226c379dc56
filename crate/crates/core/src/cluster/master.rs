use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::io::{self, BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::protocol::{
    decode_message, is_timeout, read_frame, read_message, write_message, Message,
};
use super::tracker::{ChunkState, WorkTracker, WorkerId};
use super::{worker_run, ClusterConfig, ClusterError, RunReport, WorkerReport};
use crate::audio::{encode_wav, read_wav, ChunkId};
use crate::pipeline::{
    list_wavs, piece_file_name, preprocess_front, Decision, Manifest, ManifestRow, PipelineConfig,
    PipelineError, MANIFEST_FILE,
};

/// Reason prefix a worker uses to report a chunk it could not process.
pub(crate) const ERROR_PREFIX: &str = "error:";

struct Conn {
    tx: Sender<Message>,
    live: bool,
    threads: u32,
    /// Chunks requested but not yet granted.
    wants: usize,
    told_no_more: bool,
    busy_since: Option<Instant>,
    busy: Duration,
    bytes_in: u64,
    bytes_out: Arc<Mutex<u64>>,
    requeued: usize,
}

struct State {
    tracker: WorkTracker,
    wavs: HashMap<ChunkId, Arc<Vec<u8>>>,
    conns: BTreeMap<WorkerId, Conn>,
    front_done: bool,
    finished: bool,
    manifest: Manifest,
    stage_ms: BTreeMap<String, f64>,
    output_dir: PathBuf,
    fatal: Option<ClusterError>,
    /// Grants are held back until this many workers have joined.
    min_workers: usize,
    /// Unserved requests in arrival order.
    requests: VecDeque<(WorkerId, usize)>,
}

struct Shared {
    state: Mutex<State>,
    wake: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl State {
    /// Serves outstanding requests from pending chunks.
    fn dispatch(&mut self) {
        if self.conns.len() < self.min_workers {
            return;
        }
        while let Some(&(w, n)) = self.requests.front() {
            let Some(c) = self.conns.get_mut(&w).filter(|c| c.live) else {
                self.requests.pop_front();
                continue;
            };
            let granted = self.tracker.grant(w, n).unwrap_or_default();
            c.wants -= granted.len();
            if !granted.is_empty() {
                c.told_no_more = false;
                c.busy_since.get_or_insert_with(Instant::now);
            }
            let got = granted.len();
            for id in granted {
                let wav_bytes = self
                    .wavs
                    .get(&id)
                    .map(|b| b.as_ref().clone())
                    .unwrap_or_default();
                let _ = c.tx.send(Message::WorkGrant {
                    chunk_id: id,
                    wav_bytes,
                });
            }
            if got < n {
                // out of pending chunks; the rest waits at the head
                self.requests[0].1 = n - got;
                break;
            }
            self.requests.pop_front();
        }
        if self.front_done && self.tracker.pending_len() == 0 {
            for c in self.conns.values_mut() {
                if c.live && c.wants > 0 && !c.told_no_more {
                    c.told_no_more = true;
                    let _ = c.tx.send(Message::NoMoreWork);
                }
            }
        }
    }

    /// Stops the busy clock of a worker that holds nothing any more.
    fn settle(&mut self, w: WorkerId) {
        let held = self.tracker.held_by(w).len();
        if let Some(c) = self.conns.get_mut(&w) {
            if held == 0 {
                if let Some(t) = c.busy_since.take() {
                    c.busy += t.elapsed();
                }
            }
        }
    }

    fn check_finished(&mut self, wake: &Condvar) {
        if self.finished || !self.front_done || !self.tracker.all_terminal() {
            return;
        }
        self.finished = true;
        for c in self.conns.values().filter(|c| c.live) {
            let _ = c.tx.send(Message::Shutdown);
        }
        wake.notify_all();
    }

    fn record_terminal(&mut self, id: &ChunkId) {
        self.wavs.remove(id);
    }

    fn on_processed(
        &mut self,
        w: WorkerId,
        original: ChunkId,
        outputs: Vec<(ChunkId, Vec<u8>)>,
        stage_us: Vec<(String, u32)>,
    ) -> Result<(), ClusterError> {
        match self.tracker.state(&original) {
            None => {
                return Err(ClusterError::Tracker(super::TrackerError::UnknownChunk(
                    original,
                )))
            }
            Some(s) if s.is_terminal() => {
                debug!("ignoring late result for {original}");
                return Ok(());
            }
            _ => {}
        }
        let mut files = Vec::with_capacity(outputs.len());
        for (piece, wav) in &outputs {
            let name = piece_file_name(&original, piece);
            let path = self.output_dir.join(&name);
            fs::write(&path, wav).map_err(|e| ClusterError::Io { path, source: e })?;
            files.push(name);
        }
        self.tracker.complete(w, &original)?;
        let stage_ms: Vec<(String, f64)> = stage_us
            .into_iter()
            .map(|(s, us)| (s, us as f64 / 1000.0))
            .collect();
        for (s, ms) in &stage_ms {
            *self.stage_ms.entry(s.clone()).or_default() += ms;
        }
        self.manifest.push(ManifestRow {
            chunk: original.clone(),
            decision: Decision::Kept,
            reason: String::new(),
            output_files: files,
            stage_ms,
        });
        self.record_terminal(&original);
        Ok(())
    }

    fn on_deleted(&mut self, w: WorkerId, id: ChunkId, reason: String) -> Result<(), ClusterError> {
        if let Some(msg) = reason.strip_prefix(ERROR_PREFIX) {
            warn!("worker {w} failed on {id}: {msg}");
            if self.tracker.fail(w, &id)? == ChunkState::Failed {
                self.manifest.push(ManifestRow {
                    chunk: id.clone(),
                    decision: Decision::Failed,
                    reason,
                    output_files: Vec::new(),
                    stage_ms: Vec::new(),
                });
                self.record_terminal(&id);
            }
            return Ok(());
        }
        if self.tracker.delete(w, &id)? {
            self.manifest.push(ManifestRow {
                chunk: id.clone(),
                decision: Decision::Deleted,
                reason,
                output_files: Vec::new(),
                stage_ms: Vec::new(),
            });
            self.record_terminal(&id);
        }
        Ok(())
    }

    fn on_gone(&mut self, w: WorkerId) {
        let Some(c) = self.conns.get_mut(&w) else {
            return;
        };
        if !c.live {
            return;
        }
        c.live = false;
        c.wants = 0;
        if let Some(t) = c.busy_since.take() {
            c.busy += t.elapsed();
        }
        let before = self.tracker.failed();
        match self.tracker.requeue_worker(w) {
            Ok(0) => {}
            Ok(n) => {
                warn!("worker {w} left holding {n} chunks; requeued");
                c.requeued += n;
            }
            Err(e) => warn!("{e}"),
        }
        for id in self.tracker.failed() {
            if !before.contains(&id) {
                self.manifest.push(ManifestRow {
                    chunk: id.clone(),
                    decision: Decision::Failed,
                    reason: "attempts exhausted".into(),
                    output_files: Vec::new(),
                    stage_ms: Vec::new(),
                });
                self.record_terminal(&id);
            }
        }
    }
}

/// A bound master, ready to [`run`](Master::run).
pub struct Master {
    listener: TcpListener,
    cfg: ClusterConfig,
}

impl Master {
    pub fn bind(cfg: &ClusterConfig) -> Result<Master, ClusterError> {
        cfg.validate()?;
        let listener = TcpListener::bind(&cfg.endpoint).map_err(|e| ClusterError::Bind {
            addr: cfg.endpoint.clone(),
            source: e,
        })?;
        Ok(Master {
            listener,
            cfg: cfg.clone(),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener
            .local_addr()
            .expect("bound listener has an address")
    }

    /// Runs the front half over `input_dir`, serves the chunks to workers
    /// and returns once every chunk is resolved.
    pub fn run(
        self,
        pcfg: &PipelineConfig,
        input_dir: &Path,
        output_dir: &Path,
    ) -> Result<RunReport, ClusterError> {
        let start = Instant::now();
        pcfg.validate()?;
        fs::create_dir_all(output_dir).map_err(|e| ClusterError::Io {
            path: output_dir.to_path_buf(),
            source: e,
        })?;
        let files = list_wavs(input_dir)?;
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                tracker: WorkTracker::new(self.cfg.max_attempts),
                wavs: HashMap::new(),
                conns: BTreeMap::new(),
                front_done: false,
                finished: false,
                manifest: Manifest::default(),
                stage_ms: BTreeMap::new(),
                output_dir: output_dir.to_path_buf(),
                fatal: None,
                min_workers: self.cfg.min_workers,
                requests: VecDeque::new(),
            }),
            wake: Condvar::new(),
        });

        let front = {
            let shared = shared.clone();
            let pcfg = pcfg.clone();
            thread::spawn(move || run_front(&shared, &pcfg, &files))
        };

        let addr = self.local_addr();
        let local = (self.cfg.local_threads > 0).then(|| {
            let cfg = ClusterConfig {
                endpoint: addr.to_string(),
                worker_threads: self.cfg.local_threads,
                worker_name: "local".into(),
                ..self.cfg.clone()
            };
            let pcfg = pcfg.clone();
            thread::spawn(move || worker_run(&cfg, &pcfg))
        });

        self.listener
            .set_nonblocking(true)
            .map_err(|e| ClusterError::Io {
                path: PathBuf::from(addr.to_string()),
                source: e,
            })?;
        let timeout = Duration::from_secs_f64(self.cfg.liveness_timeout_s);
        let mut handlers: Vec<JoinHandle<()>> = Vec::new();
        loop {
            {
                let st = shared.lock();
                if st.finished || st.fatal.is_some() {
                    break;
                }
            }
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    debug!("connection from {peer}");
                    let shared = shared.clone();
                    handlers.push(thread::spawn(move || {
                        serve_worker(&shared, stream, timeout)
                    }));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    let st = shared.lock();
                    let _ = shared.wake.wait_timeout(st, Duration::from_millis(10));
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
        let wall_time_s = start.elapsed().as_secs_f64();
        drop(self.listener);

        let _ = front.join();
        let fatal = shared.lock().fatal.take();
        if let Some(e) = fatal {
            // workers are told to stop; their chunks do not matter any more
            let mut st = shared.lock();
            for c in st.conns.values_mut() {
                let _ = c.tx.send(Message::Shutdown);
            }
            return Err(e);
        }
        // Shutdown was sent; give the connections a moment to close so the
        // byte counters are final.
        let deadline = Instant::now() + Duration::from_secs(5);
        for h in handlers {
            while !h.is_finished() && Instant::now() < deadline {
                thread::sleep(Duration::from_millis(5));
            }
            if h.is_finished() {
                let _ = h.join();
            }
        }
        if let Some(h) = local {
            match h.join() {
                Ok(Err(e)) => warn!("local worker: {e}"),
                Err(_) => warn!("local worker panicked"),
                Ok(Ok(_)) => {}
            }
        }

        let mut st = shared.lock();
        st.manifest.write(output_dir.join(MANIFEST_FILE))?;
        let counts = st.tracker.counts();
        let workers = st
            .tracker
            .workers()
            .iter()
            .enumerate()
            .map(|(w, t)| {
                let c = &st.conns[&w];
                WorkerReport {
                    name: t.name.clone(),
                    threads: c.threads,
                    processed: t.done + t.deleted,
                    deleted: t.deleted,
                    bytes_in: c.bytes_in,
                    bytes_out: *c.bytes_out.lock().unwrap_or_else(|e| e.into_inner()),
                    busy_ms: c.busy.as_secs_f64() * 1000.0,
                    requeued: c.requeued,
                }
            })
            .collect();
        let report = RunReport {
            wall_time_s,
            chunks: st.tracker.len(),
            kept: counts.done,
            deleted: counts.deleted,
            failed: st.tracker.failed(),
            workers,
            stage_ms: std::mem::take(&mut st.stage_ms),
            requeue_events: st.tracker.requeue_events(),
            manifest: std::mem::take(&mut st.manifest),
        };
        info!(
            "run finished: {} chunks, {} requeue events, {:.2} s",
            report.chunks, report.requeue_events, report.wall_time_s
        );
        Ok(report)
    }
}

pub fn master_serve(
    cfg: &ClusterConfig,
    pcfg: &PipelineConfig,
    input_dir: &Path,
    output_dir: &Path,
) -> Result<RunReport, ClusterError> {
    Master::bind(cfg)?.run(pcfg, input_dir, output_dir)
}

fn run_front(shared: &Shared, pcfg: &PipelineConfig, files: &[PathBuf]) {
    for path in files {
        let chunks = match read_wav(path)
            .map_err(PipelineError::from)
            .and_then(|c| preprocess_front(&c, pcfg))
        {
            Ok(c) => c,
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let wavs: Vec<(ChunkId, Vec<u8>)> = chunks
            .iter()
            .map(|c| (c.chunk_id().clone(), encode_wav(c)))
            .collect();
        let mut st = shared.lock();
        for (id, wav) in wavs {
            if let Err(e) = st.tracker.add_chunk(id.clone()) {
                warn!("{e}");
                continue;
            }
            st.wavs.insert(id, Arc::new(wav));
        }
        st.dispatch();
        drop(st);
        info!("queued {}", path.display());
    }
    let mut st = shared.lock();
    st.front_done = true;
    st.dispatch();
    st.check_finished(&shared.wake);
    shared.wake.notify_all();
}

fn serve_worker(shared: &Shared, stream: TcpStream, timeout: Duration) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_default();
    let _ = stream.set_nodelay(true);
    let _ = stream.set_read_timeout(Some(timeout));
    let Ok(write_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(&stream);

    let (name, threads) = match read_message(&mut reader) {
        Ok(Some(Message::Hello {
            worker_name,
            thread_count,
        })) => (worker_name, thread_count),
        other => {
            warn!("{peer}: expected hello, got {other:?}");
            let _ = stream.shutdown(Shutdown::Both);
            return;
        }
    };

    let (tx, rx) = mpsc::channel::<Message>();
    let bytes_out = Arc::new(Mutex::new(0u64));
    let writer = {
        let bytes_out = bytes_out.clone();
        thread::spawn(move || {
            let mut w = BufWriter::new(&write_half);
            for msg in rx {
                match write_message(&mut w, &msg) {
                    Ok(n) => *bytes_out.lock().unwrap_or_else(|e| e.into_inner()) += n as u64,
                    Err(e) => {
                        debug!("write failed: {e}");
                        let _ = write_half.shutdown(Shutdown::Both);
                        break;
                    }
                }
            }
        })
    };

    let w = {
        let mut st = shared.lock();
        let w = st.tracker.add_worker(&name);
        st.conns.insert(
            w,
            Conn {
                tx: tx.clone(),
                live: true,
                threads,
                wants: 0,
                told_no_more: false,
                busy_since: None,
                busy: Duration::ZERO,
                bytes_in: 0,
                bytes_out,
                requeued: 0,
            },
        );
        if st.finished {
            let _ = tx.send(Message::Shutdown);
        }
        w
    };
    info!("worker {w} {name:?} ({threads} threads) joined from {peer}");

    loop {
        let frame = match read_frame(&mut reader) {
            Ok(Some(f)) => f,
            Ok(None) => {
                debug!("worker {w} closed the connection");
                break;
            }
            Err(e) if is_timeout(&e) => {
                let st = shared.lock();
                if st.finished || st.tracker.held_by(w).is_empty() {
                    continue;
                }
                warn!("worker {w} silent for {timeout:?} while holding chunks");
                break;
            }
            Err(e) => {
                warn!("worker {w}: {e}");
                break;
            }
        };
        let msg = match decode_message(&frame) {
            Ok(m) => m,
            Err(e) => {
                warn!("worker {w}: {e}; dropping it");
                break;
            }
        };
        let mut st = shared.lock();
        if let Some(c) = st.conns.get_mut(&w) {
            c.bytes_in += frame.len() as u64;
        }
        let outcome = match msg {
            Message::WorkRequest { count } => {
                if let Some(c) = st.conns.get_mut(&w) {
                    c.wants += count as usize;
                }
                if count > 0 {
                    st.requests.push_back((w, count as usize));
                }
                Ok(())
            }
            Message::ResultProcessed {
                original,
                outputs,
                stage_us,
            } => st.on_processed(w, original, outputs, stage_us),
            Message::ResultDeleted { chunk_ids, reasons } => chunk_ids
                .into_iter()
                .zip(reasons)
                .try_for_each(|(id, r)| st.on_deleted(w, id, r)),
            other => {
                warn!("worker {w} sent unexpected {other:?}; dropping it");
                break;
            }
        };
        match outcome {
            Ok(()) => {}
            Err(e @ ClusterError::Io { .. }) => {
                st.fatal = Some(e);
                shared.wake.notify_all();
                break;
            }
            Err(e) => {
                warn!("worker {w}: {e}; dropping it");
                break;
            }
        }
        st.settle(w);
        st.dispatch();
        st.check_finished(&shared.wake);
    }

    let mut st = shared.lock();
    if !st.finished {
        st.on_gone(w);
        st.dispatch();
        st.check_finished(&shared.wake);
    } else if let Some(c) = st.conns.get_mut(&w) {
        c.live = false;
    }
    if let Some(c) = st.conns.get_mut(&w) {
        // closing the channel ends the writer thread
        c.tx = mpsc::channel().0;
    }
    drop(tx);
    drop(st);
    let _ = writer.join();
    let _ = stream.shutdown(Shutdown::Both);
}
