use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use bap_core::audio::synth::{synth_segment, SegmentLabel, CORPUS_RATE};
use bap_core::audio::{gen_corpus, rms, write_wav, AudioClip, ChunkId, SynthSpec};
use bap_core::pipeline::{
    preprocess_front, process_chunk, run_sequential, ChunkDecision, Decision, DeleteReason,
    PipelineConfig, Rules, Stage,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stereo(seconds: f64, f: impl Fn(f64) -> f32) -> AudioClip {
    let n = (seconds * CORPUS_RATE as f64) as usize;
    let ch: Vec<f32> = (0..n).map(|i| f(i as f64 / CORPUS_RATE as f64)).collect();
    AudioClip::new(vec![ch.clone(), ch], CORPUS_RATE, ChunkId::root("t")).unwrap()
}

/// One 15 s detection chunk made from a synthetic segment.
fn segment_chunk(label: SegmentLabel, seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ([l, r], _) = synth_segment(label, 15 * CORPUS_RATE as usize, -50.0, &mut rng);
    let clip = AudioClip::new(vec![l, r], CORPUS_RATE, ChunkId::root("seg")).unwrap();
    let mut chunks = preprocess_front(&clip, &PipelineConfig::default()).unwrap();
    assert_eq!(chunks.len(), 1);
    chunks.remove(0)
}

#[test]
fn two_minutes_stereo_gives_eight_detection_chunks() {
    let clip = stereo(120.0, |t| (0.1 * (2.0 * PI * 3000.0 * t).sin()) as f32);
    let chunks = preprocess_front(&clip, &PipelineConfig::default()).unwrap();
    assert_eq!(chunks.len(), 8);
    for (k, c) in chunks.iter().enumerate() {
        assert_eq!(c.channel_count(), 1);
        assert_eq!(c.sample_rate(), 22050);
        assert_eq!(c.len(), 15 * 22050);
        assert_eq!(c.chunk_id().generation, 2);
        assert_eq!(c.chunk_id().offset_ms, k as u64 * 15_000);
    }
}

#[test]
fn short_input_gives_one_chunk() {
    let clip = stereo(10.0, |t| (0.1 * (2.0 * PI * 3000.0 * t).sin()) as f32);
    let chunks = preprocess_front(&clip, &PipelineConfig::default()).unwrap();
    assert_eq!(chunks.len(), 1);
    assert_eq!(chunks[0].len(), 10 * 22050);
}

#[test]
fn low_tone_is_removed_by_the_front_half() {
    let clip = stereo(30.0, |t| (0.5 * (2.0 * PI * 500.0 * t).sin()) as f32);
    let input_rms = 0.5 / 2f64.sqrt();
    for c in preprocess_front(&clip, &PipelineConfig::default()).unwrap() {
        // skip the filter's start-up transient
        let tail = &c.samples()[2205..];
        let down_db = 20.0 * (input_rms / rms(tail)).log10();
        assert!(
            down_db >= 12.0,
            "{}: only {down_db:.2} dB down",
            c.chunk_id()
        );
    }
}

#[test]
fn rain_chunk_stops_at_rain_detection() {
    let rules = Rules::default();
    for seed in 0..3 {
        let out = process_chunk(
            &segment_chunk(SegmentLabel::Rain, seed),
            &PipelineConfig::default(),
            &rules,
        )
        .unwrap();
        assert_eq!(out.decision, ChunkDecision::Deleted(DeleteReason::Rain));
        assert_eq!(out.stage_names(), vec![Stage::Features, Stage::Rain]);
    }
}

#[test]
fn zero_chunk_is_silence() {
    let zero = AudioClip::mono(vec![0.0; 15 * 22050], 22050, ChunkId::new("z", 0, 2)).unwrap();
    let out = process_chunk(&zero, &PipelineConfig::default(), &Rules::default()).unwrap();
    assert_eq!(out.decision, ChunkDecision::Deleted(DeleteReason::Silence));
    assert!(!out.stage_names().contains(&Stage::Mmse));
}

#[test]
fn chirp_chunk_keeps_three_enhanced_pieces() {
    let out = process_chunk(
        &segment_chunk(SegmentLabel::Chirp, 4),
        &PipelineConfig::default(),
        &Rules::default(),
    )
    .unwrap();
    let ChunkDecision::Kept(pieces) = &out.decision else {
        panic!("chirp chunk deleted: {:?}", out.decision);
    };
    assert_eq!(pieces.len(), 3);
    for (k, p) in pieces.iter().enumerate() {
        assert_eq!(p.len(), 5 * 22050);
        assert_eq!(p.chunk_id().generation, 3);
        assert_eq!(p.chunk_id().offset_ms, k as u64 * 5000);
    }
    assert_eq!(out.stage_names(), Stage::ALL.to_vec());
}

#[test]
fn run_on_empty_directory() {
    let input = tempfile::tempdir().unwrap();
    let output = tempfile::tempdir().unwrap();
    let m = run_sequential(input.path(), output.path(), &PipelineConfig::default()).unwrap();
    assert!(m.rows.is_empty());
    assert!(output.path().join("manifest.csv").exists());
}

fn corpus(dir: &Path, minutes: f64, seed: u64) {
    let spec = SynthSpec {
        total_minutes: minutes,
        seed,
        ..SynthSpec::default()
    };
    gen_corpus(&spec, dir).unwrap();
}

#[test]
fn corpus_run_covers_every_chunk_and_is_deterministic() {
    let input = tempfile::tempdir().unwrap();
    corpus(input.path(), 1.0, 3);
    // an undecodable file is skipped, not fatal
    fs::write(input.path().join("broken.wav"), b"RIFF....nope").unwrap();
    let cfg = PipelineConfig::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = run_sequential(input.path(), a.path(), &cfg).unwrap();
    let mb = run_sequential(input.path(), b.path(), &cfg).unwrap();

    assert_eq!(ma.rows.len(), 4);
    for r in &ma.rows {
        match r.decision {
            Decision::Kept => assert!(r.reason.is_empty() && !r.output_files.is_empty()),
            Decision::Deleted => assert!(r.reason == "rain" || r.reason == "silence"),
            Decision::Failed => panic!("sequential run failed a chunk"),
        }
    }
    assert_eq!(ma.decisions(), mb.decisions());
    assert_eq!(ma.output_files(), mb.output_files());
    for f in ma.output_files() {
        assert_eq!(
            fs::read(a.path().join(&f)).unwrap(),
            fs::read(b.path().join(&f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn stage_order_and_rain_skip_over_a_corpus() {
    let input = tempfile::tempdir().unwrap();
    corpus(input.path(), 2.0, 11);
    let out = tempfile::tempdir().unwrap();
    let m = run_sequential(input.path(), out.path(), &PipelineConfig::default()).unwrap();
    assert_eq!(m.rows.len(), 8);
    let mut reasons = Vec::new();
    for r in &m.rows {
        let order: Vec<usize> = r
            .stage_ms
            .iter()
            .map(|(name, _)| Stage::from_name(name).unwrap() as usize)
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{:?}", r.stage_ms);
        assert_eq!(order.first(), Some(&0));
        if r.reason == "rain" {
            assert_eq!(order, vec![0, 1]);
        }
        reasons.push(r.reason.clone());
    }
    assert!(
        reasons.iter().any(|r| r == "rain"),
        "corpus had no rain chunk: {reasons:?}"
    );
}

#[test]
fn kept_and_deleted_durations_add_up() {
    let dir = tempfile::tempdir().unwrap();
    // 37.5 s mono at 22.05 kHz: chunks of 15, 15 and 7.5 s
    let n = 37 * 22050 + 11025;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ([l, _], _) = synth_segment(SegmentLabel::Chirp, n, -50.0, &mut rng);
    let clip = AudioClip::mono(l, 22050, ChunkId::root("odd")).unwrap();
    write_wav(&clip, dir.path().join("odd.wav")).unwrap();
    let out = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::default();
    let m = run_sequential(dir.path(), out.path(), &cfg).unwrap();
    assert_eq!(m.rows.len(), 3);
    let mut seconds = 0.0;
    for r in &m.rows {
        let chunk_len = if r.chunk.offset_ms == 30_000 {
            7.5
        } else {
            15.0
        };
        match r.decision {
            Decision::Kept => {
                let kept: f64 = r
                    .output_files
                    .iter()
                    .map(|f| {
                        bap_core::audio::read_wav(out.path().join(f))
                            .unwrap()
                            .duration_s()
                    })
                    .sum();
                // silent pieces inside a kept chunk account for the rest
                assert!(kept <= chunk_len + 1e-9);
                seconds += chunk_len;
            }
            _ => seconds += chunk_len,
        }
    }
    assert!((seconds - n as f64 / 22050.0).abs() < 1.0 / 22050.0 * m.rows.len() as f64 + 1e-9);
}
