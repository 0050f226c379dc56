use super::{AudioClip, ChunkId};

/// Splits a clip into consecutive `length_s` chunks tagged `new_generation`.
///
/// The final chunk keeps the remainder unless it is shorter than one second,
/// in which case it is dropped.
pub fn split(clip: &AudioClip, length_s: f64, new_generation: u8) -> Vec<AudioClip> {
    assert!(length_s > 0.0, "split length must be positive");
    let rate = clip.sample_rate() as usize;
    let step = ((length_s * rate as f64).round() as usize).max(1);
    let step_ms = (length_s * 1000.0).round() as u64;
    let parent = clip.chunk_id();
    let total = clip.len();

    let mut out = Vec::with_capacity(total / step + 1);
    let mut start = 0;
    let mut k = 0u64;
    while start < total {
        let end = (start + step).min(total);
        if end - start < step && end - start < rate {
            break;
        }
        let id = ChunkId::new(
            parent.source_name.clone(),
            parent.offset_ms + k * step_ms,
            new_generation,
        );
        let channels = clip
            .channels()
            .iter()
            .map(|c| c[start..end].to_vec())
            .collect();
        out.push(AudioClip::new(channels, clip.sample_rate(), id).expect("slices of a valid clip"));
        start = end;
        k += 1;
    }
    out
}

/// Averages all channels into one. Mono input is returned unchanged.
pub fn to_mono(clip: &AudioClip) -> AudioClip {
    if clip.channel_count() == 1 {
        return clip.clone();
    }
    let n = clip.channel_count() as f32;
    let channels = clip.channels();
    let mixed = (0..clip.len())
        .map(|i| channels.iter().map(|c| c[i]).sum::<f32>() / n)
        .collect();
    AudioClip::mono(mixed, clip.sample_rate(), clip.chunk_id().clone()).expect("valid mono clip")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(seconds: f64, rate: u32) -> AudioClip {
        let n = (seconds * rate as f64).round() as usize;
        let s = (0..n).map(|i| (i % 1000) as f32 / 1000.0).collect();
        AudioClip::mono(s, rate, ChunkId::new("rec", 120_000, 1)).unwrap()
    }

    fn offsets(chunks: &[AudioClip]) -> Vec<u64> {
        chunks.iter().map(|c| c.chunk_id().offset_ms).collect()
    }

    #[test]
    fn exact_division() {
        let chunks = split(&ramp(60.0, 100), 15.0, 2);
        assert_eq!(chunks.len(), 4);
        assert!(chunks
            .iter()
            .all(|c| c.len() == 1500 && c.chunk_id().generation == 2));
        assert_eq!(offsets(&chunks), vec![120_000, 135_000, 150_000, 165_000]);
    }

    #[test]
    fn remainder_is_kept_when_at_least_one_second() {
        let chunks = split(&ramp(62.0, 100), 15.0, 2);
        assert_eq!(chunks.len(), 5);
        assert_eq!(chunks[4].duration_s(), 2.0);
    }

    #[test]
    fn short_tail_is_dropped() {
        let chunks = split(&ramp(60.5, 100), 15.0, 2);
        // 6050 samples = 4 * 1500 + 50; 50 < 100 samples/s.
        assert_eq!(chunks.len(), 4);
        assert_eq!(chunks.iter().map(AudioClip::len).sum::<usize>(), 6000);
    }

    #[test]
    fn empty_input() {
        assert!(split(&ramp(0.0, 100), 5.0, 3).is_empty());
    }

    #[test]
    fn mono_mixing() {
        let id = ChunkId::root("s");
        let same = AudioClip::new(vec![vec![0.1, 0.2, -0.3]; 2], 10, id.clone()).unwrap();
        assert_eq!(to_mono(&same).samples(), &[0.1, 0.2, -0.3]);
        let opposite = AudioClip::new(vec![vec![0.5; 4], vec![-0.5; 4]], 10, id.clone()).unwrap();
        assert!(to_mono(&opposite).samples().iter().all(|&s| s == 0.0));
        let mono = AudioClip::mono(vec![0.3, 0.4], 10, id).unwrap();
        assert_eq!(to_mono(&mono), mono);
        assert_eq!(to_mono(&to_mono(&same)), to_mono(&same));
    }

    proptest! {
        #[test]
        fn split_concatenation_reproduces_input(
            n in 0usize..5000,
            len_tenths in 5u32..80,
        ) {
            let rate = 100u32;
            let samples: Vec<f32> = (0..n).map(|i| (i as f32 * 0.01).sin()).collect();
            let clip = AudioClip::mono(samples.clone(), rate, ChunkId::root("p")).unwrap();
            let length_s = len_tenths as f64 / 10.0;
            let chunks = split(&clip, length_s, 1);
            let joined: Vec<f32> = chunks.iter().flat_map(|c| c.samples().to_vec()).collect();
            prop_assert_eq!(&joined[..], &samples[..joined.len()]);
            prop_assert!(samples.len() - joined.len() < rate as usize);
            let offs = offsets(&chunks);
            prop_assert!(offs.windows(2).all(|w| w[0] < w[1]));
            let step_ms = (length_s * 1000.0).round() as u64;
            prop_assert!(offs.iter().all(|o| o % step_ms == 0));
        }
    }
}
