use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use bap_core::audio::{gen_corpus, ChunkId, SynthSpec};
use bap_core::cluster::{
    decode_message, encode_message, worker_run, worker_run_until, ChunkState, ClusterConfig,
    ClusterError, Master, Message, ProtocolError, WorkTracker,
};
use bap_core::pipeline::{run_sequential, Manifest, PipelineConfig};
use proptest::prelude::*;

fn chunk_id() -> impl Strategy<Value = ChunkId> {
    ("[a-z0-9_:.]{1,12}", any::<u64>(), any::<u8>()).prop_map(|(s, o, g)| ChunkId::new(s, o, g))
}

fn message() -> impl Strategy<Value = Message> {
    let bytes = prop::collection::vec(any::<u8>(), 0..64);
    prop_oneof![
        (".{0,16}", any::<u32>()).prop_map(|(worker_name, thread_count)| Message::Hello {
            worker_name,
            thread_count
        }),
        any::<u32>().prop_map(|count| Message::WorkRequest { count }),
        (chunk_id(), bytes.clone()).prop_map(|(chunk_id, wav_bytes)| Message::WorkGrant {
            chunk_id,
            wav_bytes
        }),
        Just(Message::NoMoreWork),
        (
            chunk_id(),
            prop::collection::vec((chunk_id(), bytes), 0..4),
            prop::collection::vec(("[a-z]{1,8}", any::<u32>()), 0..6)
        )
            .prop_map(|(original, outputs, stage_us)| Message::ResultProcessed {
                original,
                outputs,
                stage_us
            }),
        prop::collection::vec((chunk_id(), ".{0,12}"), 0..5).prop_map(|pairs| {
            let (chunk_ids, reasons) = pairs.into_iter().unzip();
            Message::ResultDeleted { chunk_ids, reasons }
        }),
        Just(Message::Shutdown),
    ]
}

proptest! {
    #[test]
    fn message_round_trip(m in message()) {
        let frame = encode_message(&m);
        prop_assert_eq!(u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize, frame.len() - 4);
        prop_assert_eq!(decode_message(&frame).unwrap(), m);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = decode_message(&bytes);
    }

    #[test]
    fn truncated_frames_are_rejected(m in message(), cut in 1usize..8) {
        let frame = encode_message(&m);
        let cut = cut.min(frame.len());
        let short = &frame[..frame.len() - cut];
        prop_assert!(decode_message(short).is_err());
    }
}

#[test]
fn unknown_tag() {
    assert!(matches!(
        decode_message(&[0, 0, 0, 1, 0x99]),
        Err(ProtocolError::UnknownTag(0x99))
    ));
}

#[derive(Debug, Clone)]
enum Op {
    Grant(usize, usize),
    Complete(usize),
    Delete(usize),
    Fail(usize),
    Disconnect(usize),
    Join,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..4, 1usize..5).prop_map(|(w, n)| Op::Grant(w, n)),
        (0usize..32).prop_map(Op::Complete),
        (0usize..32).prop_map(Op::Delete),
        (0usize..32).prop_map(Op::Fail),
        (0usize..4).prop_map(Op::Disconnect),
        Just(Op::Join),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]
    #[test]
    fn tracker_state_machine(n in 1usize..20, ops in prop::collection::vec(op(), 0..80)) {
        let ids: Vec<ChunkId> = (0..n).map(|i| ChunkId::new("f", i as u64 * 15_000, 2)).collect();
        let mut t = WorkTracker::new(3);
        for id in &ids {
            t.add_chunk(id.clone()).unwrap();
        }
        let mut live = vec![t.add_worker("w0"), t.add_worker("w1")];
        for op in ops {
            match op {
                Op::Grant(w, k) => {
                    if let Some(&w) = live.get(w) {
                        let before = t.pending_len();
                        let got = t.grant(w, k).unwrap();
                        prop_assert_eq!(got.len(), k.min(before));
                    }
                }
                // results come from whoever holds the chunk
                Op::Complete(i) | Op::Delete(i) | Op::Fail(i) => {
                    let Some(id) = ids.get(i % n) else { continue };
                    if let Some(ChunkState::Sent { worker, .. }) = t.state(id) {
                        match op {
                            Op::Complete(_) => { t.complete(worker, id).unwrap(); }
                            Op::Delete(_) => { t.delete(worker, id).unwrap(); }
                            _ => { t.fail(worker, id).unwrap(); }
                        }
                    }
                }
                Op::Disconnect(w) => {
                    if w < live.len() {
                        let w = live.remove(w);
                        let held = t.held_by(w).len();
                        prop_assert_eq!(t.requeue_worker(w).unwrap(), held);
                    }
                }
                Op::Join => live.push(t.add_worker("late")),
            }
            prop_assert!(t.check().is_ok(), "{:?}", t.check());
        }
        // quiescence: the remaining workers leave, a fresh one finishes up
        for w in live {
            t.requeue_worker(w).unwrap();
        }
        let w = t.add_worker("closer");
        loop {
            let got = t.grant(w, 4).unwrap();
            if got.is_empty() {
                break;
            }
            for id in got {
                t.complete(w, &id).unwrap();
            }
        }
        prop_assert!(t.all_terminal());
        let c = t.counts();
        prop_assert_eq!(c.done + c.deleted + c.failed, n);
        t.check().unwrap();
    }
}

fn test_cfg() -> ClusterConfig {
    ClusterConfig {
        endpoint: "127.0.0.1:0".into(),
        send_interval_s: 0.2,
        ..ClusterConfig::default()
    }
}

fn corpus(dir: &Path, minutes: f64, seed: u64) {
    let spec = SynthSpec {
        total_minutes: minutes,
        seed,
        ..SynthSpec::default()
    };
    gen_corpus(&spec, dir).unwrap();
}

fn assert_same_outputs(seq: &Manifest, seq_dir: &Path, dist: &Manifest, dist_dir: &Path) {
    assert_eq!(seq.decisions(), dist.decisions());
    assert_eq!(seq.output_files(), dist.output_files());
    for f in seq.output_files() {
        assert_eq!(
            fs::read(seq_dir.join(&f)).unwrap(),
            fs::read(dist_dir.join(&f)).unwrap(),
            "{f}"
        );
    }
    let mut written: Vec<String> = fs::read_dir(dist_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.csv")
        .collect();
    written.sort();
    assert_eq!(written, dist.output_files(), "orphan or missing files");
}

#[test]
fn master_with_no_input_returns_at_once() {
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let master = Master::bind(&test_cfg()).unwrap();
    let r = master
        .run(&PipelineConfig::default(), input.path(), out.path())
        .unwrap();
    assert_eq!(r.chunks, 0);
    assert!(r.wall_time_s > 0.0);
    assert!(out.path().join("manifest.csv").exists());
}

#[test]
fn bind_failure() {
    let first = Master::bind(&test_cfg()).unwrap();
    let cfg = ClusterConfig {
        endpoint: first.local_addr().to_string(),
        ..test_cfg()
    };
    assert!(matches!(Master::bind(&cfg), Err(ClusterError::Bind { .. })));
}

#[test]
fn connect_failure() {
    let addr = Master::bind(&test_cfg()).unwrap().local_addr();
    // the listener is dropped here, so nothing answers
    let cfg = ClusterConfig {
        endpoint: addr.to_string(),
        ..test_cfg()
    };
    assert!(matches!(
        worker_run(&cfg, &PipelineConfig::default()),
        Err(ClusterError::Connect { .. })
    ));
}

#[test]
fn one_worker_matches_sequential() {
    let input = tempfile::tempdir().unwrap();
    corpus(input.path(), 2.0, 21);
    let pcfg = PipelineConfig::default();
    let seq_dir = tempfile::tempdir().unwrap();
    let seq = run_sequential(input.path(), seq_dir.path(), &pcfg).unwrap();

    let out = tempfile::tempdir().unwrap();
    let master = Master::bind(&test_cfg()).unwrap();
    let wcfg = ClusterConfig {
        endpoint: master.local_addr().to_string(),
        worker_name: "solo".into(),
        queue_size: 3,
        ..test_cfg()
    };
    let p = pcfg.clone();
    let worker = thread::spawn(move || worker_run(&wcfg, &p));
    let report = master.run(&pcfg, input.path(), out.path()).unwrap();
    let stats = worker.join().unwrap().unwrap();

    assert_same_outputs(&seq, seq_dir.path(), &report.manifest, out.path());
    assert_eq!(report.chunks, 8);
    assert_eq!(report.workers.len(), 1);
    assert_eq!(report.workers[0].processed, 8);
    assert_eq!(report.requeue_events, 0);
    assert!(stats.max_occupancy <= 3);
    assert_eq!(stats.processed, 8);
    let on_disk = Manifest::read(out.path().join("manifest.csv")).unwrap();
    assert_eq!(on_disk.decisions(), seq.decisions());
    assert!(report
        .to_csv()
        .starts_with("worker,processed,deleted,bytes_in,bytes_out,busy_ms\n"));
}

#[test]
fn local_threads_run_without_external_workers() {
    let input = tempfile::tempdir().unwrap();
    corpus(input.path(), 1.0, 5);
    let pcfg = PipelineConfig::default();
    let seq_dir = tempfile::tempdir().unwrap();
    let seq = run_sequential(input.path(), seq_dir.path(), &pcfg).unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = ClusterConfig {
        local_threads: 2,
        ..test_cfg()
    };
    let report = Master::bind(&cfg)
        .unwrap()
        .run(&pcfg, input.path(), out.path())
        .unwrap();
    assert_same_outputs(&seq, seq_dir.path(), &report.manifest, out.path());
    assert_eq!(report.workers[0].name, "local");
}

#[test]
fn late_worker_still_gets_a_share_when_the_master_waits() {
    let input = tempfile::tempdir().unwrap();
    corpus(input.path(), 2.0, 13);
    let pcfg = PipelineConfig::default();
    let out = tempfile::tempdir().unwrap();
    let master = Master::bind(&ClusterConfig {
        min_workers: 2,
        ..test_cfg()
    })
    .unwrap();
    let endpoint = master.local_addr().to_string();
    let spawn = |name: &str| {
        let cfg = ClusterConfig {
            endpoint: endpoint.clone(),
            worker_name: name.into(),
            queue_size: 1,
            ..test_cfg()
        };
        let p = pcfg.clone();
        thread::spawn(move || worker_run(&cfg, &p))
    };
    let early = spawn("early");
    let run = {
        let pcfg = pcfg.clone();
        let (i, o) = (input.path().to_path_buf(), out.path().to_path_buf());
        thread::spawn(move || master.run(&pcfg, &i, &o))
    };
    // long enough for the early worker to finish everything on its own
    thread::sleep(Duration::from_millis(1500));
    let late = spawn("late");
    let report = run.join().unwrap().unwrap();
    early.join().unwrap().unwrap();
    late.join().unwrap().unwrap();
    let counts: Vec<usize> = report.workers.iter().map(|w| w.processed).collect();
    assert_eq!(counts.iter().sum::<usize>(), 8);
    assert!(counts.iter().all(|&c| c >= 2), "{counts:?}");
}

#[test]
fn killed_worker_chunks_are_redone() {
    let input = tempfile::tempdir().unwrap();
    corpus(input.path(), 2.0, 8);
    let pcfg = PipelineConfig::default();
    let seq_dir = tempfile::tempdir().unwrap();
    let seq = run_sequential(input.path(), seq_dir.path(), &pcfg).unwrap();

    let out = tempfile::tempdir().unwrap();
    let master = Master::bind(&test_cfg()).unwrap();
    let endpoint = master.local_addr().to_string();
    let kill = Arc::new(AtomicBool::new(false));
    let victim = {
        let cfg = ClusterConfig {
            endpoint: endpoint.clone(),
            worker_name: "victim".into(),
            // holds chunks for a long time before reporting
            send_interval_s: 60.0,
            ..test_cfg()
        };
        let (p, k) = (pcfg.clone(), kill.clone());
        thread::spawn(move || worker_run_until(&cfg, &p, k))
    };
    let run = {
        let pcfg = pcfg.clone();
        let (i, o) = (input.path().to_path_buf(), out.path().to_path_buf());
        thread::spawn(move || master.run(&pcfg, &i, &o))
    };
    thread::sleep(Duration::from_millis(1500));
    kill.store(true, Ordering::SeqCst);
    assert!(matches!(victim.join().unwrap(), Err(ClusterError::Killed)));

    let survivor = {
        let cfg = ClusterConfig {
            endpoint,
            worker_name: "survivor".into(),
            ..test_cfg()
        };
        let p = pcfg.clone();
        thread::spawn(move || worker_run(&cfg, &p))
    };
    let report = run.join().unwrap().unwrap();
    survivor.join().unwrap().unwrap();

    assert!(report.requeue_events >= 1, "victim held nothing");
    assert!(report.failed.is_empty());
    assert_same_outputs(&seq, seq_dir.path(), &report.manifest, out.path());
    let total: usize = report.workers.iter().map(|w| w.processed).sum();
    assert_eq!(total, report.chunks);
}

#[test]
fn protocol_violation_drops_the_connection() {
    use std::io::Write;
    let input = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    corpus(input.path(), 0.5, 1);
    let pcfg = PipelineConfig::default();
    let master = Master::bind(&test_cfg()).unwrap();
    let endpoint = master.local_addr().to_string();
    let run = {
        let (i, o) = (input.path().to_path_buf(), out.path().to_path_buf());
        let p = pcfg.clone();
        thread::spawn(move || master.run(&p, &i, &o))
    };
    let mut rogue = std::net::TcpStream::connect(&endpoint).unwrap();
    rogue.write_all(&[0, 0, 0, 1, 0x99]).unwrap();
    let cfg = ClusterConfig {
        endpoint,
        ..test_cfg()
    };
    worker_run(&cfg, &pcfg).unwrap();
    let report = run.join().unwrap().unwrap();
    assert_eq!(report.chunks, 2);
    assert_eq!(report.workers.len(), 1);
}
