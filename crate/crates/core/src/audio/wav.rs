//! RIFF/WAVE decoding (PCM16, IEEE float32) and PCM16 encoding.

use std::fs;
use std::path::Path;

use super::{AudioClip, AudioError, ChunkId};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Size of the canonical header written by [`encode_wav`].
pub const HEADER_LEN: usize = 44;

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn malformed(msg: impl Into<String>) -> AudioError {
    AudioError::MalformedWav(msg.into())
}

fn parse_format(body: &[u8]) -> Result<Format, AudioError> {
    if body.len() < 16 {
        return Err(malformed("fmt chunk shorter than 16 bytes"));
    }
    let mut tag = le_u16(body, 0);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 40 {
            return Err(malformed("extensible fmt chunk too short"));
        }
        // The first two bytes of the sub-format GUID carry the real format tag.
        tag = le_u16(body, 24);
    }
    Ok(Format {
        tag,
        channels: le_u16(body, 2),
        sample_rate: le_u32(body, 4),
        bits_per_sample: le_u16(body, 14),
    })
}

/// Decodes an in-memory WAV file. 16-bit value `v` maps to `v / 32768`.
pub fn decode_wav(bytes: &[u8], chunk_id: ChunkId) -> Result<AudioClip, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE signature"));
    }
    let mut pos = 12;
    let mut format = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(bytes, pos + 4) as usize;
        let start = pos + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                malformed(format!("chunk {:?} truncated", String::from_utf8_lossy(id)))
            })?;
        match id {
            b"fmt " => format = Some(parse_format(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        pos = end + (size & 1);
    }
    let format = format.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;
    if format.channels == 0 {
        return Err(malformed("zero channels"));
    }
    if format.sample_rate == 0 {
        return Err(malformed("zero sample rate"));
    }
    let channels = format.channels as usize;
    let width = match (format.tag, format.bits_per_sample) {
        (FORMAT_PCM, 16) => 2,
        (FORMAT_IEEE_FLOAT, 32) => 4,
        (FORMAT_PCM, bits) | (FORMAT_IEEE_FLOAT, bits) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "{bits}-bit samples (format tag {})",
                format.tag
            )))
        }
        (tag, _) => {
            return Err(AudioError::UnsupportedEncoding(format!(
                "compressed or unknown format tag {tag:#06x}"
            )))
        }
    };
    let bytes_per_frame = channels * width;
    if data.len() % bytes_per_frame != 0 {
        return Err(malformed("data chunk is not a whole number of frames"));
    }
    let out: Vec<Vec<f32>> = (0..channels)
        .map(|c| {
            let frames = data.chunks_exact(bytes_per_frame);
            let at = c * width;
            if width == 2 {
                frames
                    .map(|f| i16::from_le_bytes([f[at], f[at + 1]]) as f32 / 32768.0)
                    .collect()
            } else {
                frames
                    .map(|f| {
                        f32::from_le_bytes([f[at], f[at + 1], f[at + 2], f[at + 3]])
                            .clamp(-1.0, 1.0)
                    })
                    .collect()
            }
        })
        .collect();
    AudioClip::new(out, format.sample_rate, chunk_id)
}

/// Reads a WAV file; the chunk id is rooted at the file stem.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AudioError::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(&bytes, ChunkId::root(stem))
}

/// Quantises one sample: clamp to [-1, 1], scale by 32767, round to nearest.
pub fn quantize(sample: f32) -> i16 {
    (sample.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

/// Encodes a clip as canonical 44-byte-header PCM16 RIFF/WAVE.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let channels = clip.channel_count();
    let frames = clip.len();
    let data_len = frames * channels * 2;
    let block_align = (channels * 2) as u16;
    let byte_rate = clip.sample_rate() * block_align as u32;

    let mut out = Vec::with_capacity(HEADER_LEN + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&byte_rate.to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    let chans = clip.channels();
    for i in 0..frames {
        for ch in chans {
            out.extend_from_slice(&quantize(ch[i]).to_le_bytes());
        }
    }
    out
}

pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    fs::write(path, encode_wav(clip)).map_err(|e| AudioError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id() -> ChunkId {
        ChunkId::root("t")
    }

    /// Hand-assembled 4-sample mono PCM16 file.
    fn four_sample_file(samples: [i16; 4]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36u32 + 8).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&[16, 0, 0, 0, 1, 0, 1, 0]);
        b.extend_from_slice(&22050u32.to_le_bytes());
        b.extend_from_slice(&44100u32.to_le_bytes());
        b.extend_from_slice(&[2, 0, 16, 0]);
        b.extend_from_slice(b"data");
        b.extend_from_slice(&8u32.to_le_bytes());
        for s in samples {
            b.extend_from_slice(&s.to_le_bytes());
        }
        b
    }

    #[test]
    fn pcm16_mapping_matches_byte_level_decoder() {
        let file = four_sample_file([32767, -32768, 0, 16384]);
        let clip = decode_wav(&file, id()).unwrap();
        assert_eq!(clip.samples(), &[32767.0 / 32768.0, -1.0, 0.0, 0.5]);
        assert!((clip.samples()[0] - 0.99997).abs() < 1e-5);
    }

    #[test]
    fn zero_second_of_audio_has_expected_size() {
        let clip = AudioClip::mono(vec![0.0; 22050], 22050, id()).unwrap();
        let bytes = encode_wav(&clip);
        assert_eq!(bytes.len(), 44_144);
        // Header fields checked byte by byte.
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(le_u32(&bytes, 4), 44_136);
        assert_eq!(le_u16(&bytes, 22), 1);
        assert_eq!(le_u32(&bytes, 24), 22050);
        assert_eq!(le_u32(&bytes, 28), 44100);
        assert_eq!(le_u32(&bytes, 40), 44_100);
        let back = decode_wav(&bytes, id()).unwrap();
        assert_eq!(back.len(), 22050);
        assert_eq!(back.channel_count(), 1);
        assert!(back.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn out_of_range_amplitudes_clamp() {
        let clip = AudioClip::mono(vec![1.5, -1.5, 0.5], 8000, id()).unwrap();
        let bytes = encode_wav(&clip);
        let samples: Vec<i16> = bytes[44..]
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]))
            .collect();
        assert_eq!(samples, vec![32767, -32767, 16384]);
    }

    #[test]
    fn empty_clip_has_valid_header() {
        let clip = AudioClip::mono(vec![], 8000, id()).unwrap();
        let bytes = encode_wav(&clip);
        assert_eq!(bytes.len(), 44);
        assert_eq!(le_u32(&bytes, 40), 0);
        assert!(decode_wav(&bytes, id()).unwrap().is_empty());
    }

    #[test]
    fn float32_and_stereo_decode() {
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36u32 + 16).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&[16, 0, 0, 0, 3, 0, 2, 0]);
        b.extend_from_slice(&8000u32.to_le_bytes());
        b.extend_from_slice(&64000u32.to_le_bytes());
        b.extend_from_slice(&[8, 0, 32, 0]);
        b.extend_from_slice(b"data");
        b.extend_from_slice(&16u32.to_le_bytes());
        for s in [0.25f32, -0.25, 2.0, 0.0] {
            b.extend_from_slice(&s.to_le_bytes());
        }
        let clip = decode_wav(&b, id()).unwrap();
        assert_eq!(clip.channel_count(), 2);
        assert_eq!(clip.channels()[0], vec![0.25, 1.0]);
        assert_eq!(clip.channels()[1], vec![-0.25, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            decode_wav(b"RIFX", id()),
            Err(AudioError::MalformedWav(_))
        ));
        let mut truncated = four_sample_file([1, 2, 3, 4]);
        truncated.truncate(50);
        assert!(matches!(
            decode_wav(&truncated, id()),
            Err(AudioError::MalformedWav(_))
        ));
        let mut adpcm = four_sample_file([1, 2, 3, 4]);
        adpcm[20] = 2;
        assert!(matches!(
            decode_wav(&adpcm, id()),
            Err(AudioError::UnsupportedEncoding(_))
        ));
    }

    #[test]
    fn round_trip_within_one_lsb() {
        let samples: Vec<f32> = (0..1000).map(|i| ((i as f32) * 0.37).sin() * 0.9).collect();
        let clip = AudioClip::mono(samples.clone(), 22050, id()).unwrap();
        let once = decode_wav(&encode_wav(&clip), id()).unwrap();
        for (a, b) in samples.iter().zip(once.samples()) {
            assert!((a - b).abs() <= 1.5 / 32768.0);
        }
        // A decoded file written and re-read moves by at most one LSB.
        let twice = decode_wav(&encode_wav(&once), id()).unwrap();
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
