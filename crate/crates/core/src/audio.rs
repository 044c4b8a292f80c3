//! WAV ingestion, mixdown, peak normalization, band-limited resampling and
//! fixed-length segmentation.

use std::f64::consts::PI;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Mono sample buffer with its sample rate and an optional singer label.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub label: Option<String>,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }
}

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

/// Reads a WAV file, mixes it to mono and peak-normalizes it.
///
/// Accepts 16-bit integer PCM and 32-bit IEEE float, any channel count.
/// All-zero files are returned as-is.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioClip> {
    load_audio_with(path, true)
}

/// Same as [`load_audio`] but lets the caller skip peak normalization, which
/// is what the pipeline cache uses to read back intermediate stems unchanged.
pub fn load_audio_with(path: impl AsRef<Path>, normalize: bool) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|source| Error::UnreadableAudio {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || spec.sample_rate == 0 {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("{} channels at {} Hz", spec.channels, spec.sample_rate),
        });
    }

    let unreadable = |source| Error::UnreadableAudio {
        path: path.to_path_buf(),
        source,
    };
    // Kept in f32 so a float file written by `write_wav` reloads bit-exactly.
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(unreadable)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(unreadable)?,
        (format, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {format:?}"),
            })
        }
    };
    if interleaved.len() < channels {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }

    let mut mono: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };

    if normalize {
        let peak = mono.iter().fold(0.0_f32, |m, s| m.max(s.abs()));
        if peak > 0.0 {
            mono.iter_mut().for_each(|s| *s /= peak);
        }
    }

    Ok(AudioClip::new(
        mono.into_iter().map(f64::from).collect(),
        spec.sample_rate,
    ))
}

/// Writes a mono WAV. PCM16 output is clipped to [-1, 1].
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let wrap = |source| Error::AudioWrite {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &clip.samples {
        match encoding {
            WavEncoding::Pcm16 => {
                let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_sample(v).map_err(wrap)?;
            }
            WavEncoding::Float32 => writer.write_sample(s as f32).map_err(wrap)?,
        }
    }
    writer.finalize().map_err(wrap)
}

const SINC_ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.6;

/// Resamples with a Kaiser-windowed sinc interpolator.
///
/// Output length is `round(len * target_rate / sample_rate)`. When
/// downsampling, the kernel cutoff moves to the new Nyquist frequency.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::invalid("target sample rate must be positive"));
    }
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let ratio = target_rate as f64 / clip.sample_rate as f64;
    let out_len = (clip.len() as f64 * ratio).round() as usize;
    let samples = sinc_interpolate(&clip.samples, ratio, out_len);
    Ok(AudioClip {
        samples,
        sample_rate: target_rate,
        label: clip.label.clone(),
    })
}

/// Resamples `samples` to exactly `out_len` points spanning the same duration.
pub fn resample_to_length(samples: &[f64], out_len: usize) -> Vec<f64> {
    if samples.len() == out_len || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = out_len as f64 / samples.len() as f64;
    sinc_interpolate(samples, ratio, out_len)
}

fn sinc_interpolate(input: &[f64], ratio: f64, out_len: usize) -> Vec<f64> {
    let cutoff = ratio.min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let norm = bessel_i0(KAISER_BETA);
    let n = input.len() as isize;

    (0..out_len)
        .map(|i| {
            let t = i as f64 / ratio;
            let lo = ((t - half_width).ceil() as isize).max(0);
            let hi = ((t + half_width).floor() as isize).min(n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                let d = t - j as f64;
                let r = d / half_width;
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / norm;
                acc += input[j as usize] * cutoff * sinc(cutoff * d) * window;
            }
            acc
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        let f = half / k as f64;
        term *= f * f;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Splits a clip into consecutive non-overlapping segments of
/// `duration_s * sample_rate` samples. The trailing remainder is dropped.
pub fn segment(clip: &AudioClip, duration_s: f64) -> Result<Vec<AudioClip>> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::invalid(format!(
            "segment duration must be positive, got {duration_s}"
        )));
    }
    let seg_len = (duration_s * clip.sample_rate as f64).round() as usize;
    if seg_len == 0 {
        return Err(Error::invalid("segment duration is shorter than one sample"));
    }
    Ok(clip
        .samples
        .chunks_exact(seg_len)
        .map(|chunk| AudioClip {
            samples: chunk.to_vec(),
            sample_rate: clip.sample_rate,
            label: clip.label.clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(freq: f64, rate: u32, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    #[test]
    fn stereo_identical_channels_mix_to_same_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mono: Vec<f32> = (0..44100).map(|i| ((i % 100) as f32 / 100.0) - 0.5).collect();
        let mut w = WavWriter::create(&path, spec).unwrap();
        for &s in &mono {
            w.write_sample(s).unwrap();
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();

        let clip = load_audio_with(&path, false).unwrap();
        assert_eq!(clip.len(), 44100);
        assert_eq!(clip.sample_rate, 44100);
        for (a, b) in clip.samples.iter().zip(&mono) {
            assert_eq!(*a, f64::from(*b));
        }
    }

    #[test]
    fn all_zero_file_is_not_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.wav");
        write_wav(&AudioClip::new(vec![0.0; 512], 8000), &path, WavEncoding::Pcm16).unwrap();
        let clip = load_audio(&path).unwrap();
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm16_peak_is_normalized_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 4096, -16384, 8192, 16384, -100] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip = load_audio(&path).unwrap();
        assert_eq!(clip.peak(), 1.0);
        assert_eq!(clip.samples[1], 0.25);
        assert_eq!(clip.samples[2], -1.0);
    }

    #[test]
    fn load_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let missing = load_audio(dir.path().join("nope.wav")).unwrap_err();
        assert!(matches!(missing, Error::UnreadableAudio { .. }));

        let garbage = dir.path().join("garbage.wav");
        std::fs::write(&garbage, b"definitely not RIFF").unwrap();
        assert!(matches!(
            load_audio(&garbage).unwrap_err(),
            Error::UnreadableAudio { .. }
        ));

        let path24 = dir.path().join("pcm24.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path24, spec).unwrap();
        w.write_sample(1000i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            load_audio(&path24).unwrap_err(),
            Error::UnsupportedEncoding { .. }
        ));

        let empty = dir.path().join("empty.wav");
        write_wav(&AudioClip::new(vec![], 8000), &empty, WavEncoding::Float32).unwrap();
        assert!(matches!(load_audio(&empty).unwrap_err(), Error::EmptyAudio(_)));
    }

    #[test]
    fn float_roundtrip_is_sample_exact() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.wav");
        let second = dir.path().join("b.wav");
        let clip = AudioClip::new(sine(440.0, 8000, 2000).iter().map(|s| s * 0.3).collect(), 8000);
        write_wav(&clip, &first, WavEncoding::Float32).unwrap();
        let loaded = load_audio(&first).unwrap();
        write_wav(&loaded, &second, WavEncoding::Float32).unwrap();
        let reloaded = load_audio(&second).unwrap();
        assert_eq!(loaded, reloaded);
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let clip = AudioClip::new(sine(100.0, 4160, 1000), 4160).with_label("x");
        assert_eq!(resample(&clip, 4160).unwrap(), clip);
        assert!(resample(&clip, 0).is_err());
    }

    #[test]
    fn resample_halves_length() {
        let clip = AudioClip::new(vec![0.1; 8320], 8320);
        let out = resample(&clip, 4160).unwrap();
        assert_eq!(out.len(), 4160);
        assert_eq!(out.sample_rate, 4160);
    }

    #[test]
    fn resampled_sine_matches_analytic_target() {
        let clip = AudioClip::new(sine(100.0, 8320, 8320), 8320);
        let out = resample(&clip, 4160).unwrap();
        let expected = sine(100.0, 4160, 4160);
        let margin = 64;
        let worst = out.samples[margin..4160 - margin]
            .iter()
            .zip(&expected[margin..4160 - margin])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "max error {worst}");
    }

    #[test]
    fn resample_is_rate_idempotent() {
        let clip = AudioClip::new(sine(300.0, 8000, 3000), 8000);
        let once = resample(&clip, 4160).unwrap();
        let twice = resample(&once, 4160).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn segment_counts() {
        let rate = 100;
        let clip = |secs: usize| AudioClip::new(vec![0.5; secs * rate], rate as u32).with_label("s");
        let segs = segment(&clip(30), 12.0).unwrap();
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.len() == 1200 && s.label.as_deref() == Some("s")));
        assert_eq!(segment(&clip(12), 12.0).unwrap().len(), 1);
        assert!(segment(&clip(11), 12.0).unwrap().is_empty());
        assert!(segment(&clip(11), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn segments_concatenate_to_prefix(
            samples in proptest::collection::vec(-1.0f64..1.0, 0..400),
            seg in 1usize..50,
        ) {
            let clip = AudioClip::new(samples.clone(), 10);
            let segs = segment(&clip, seg as f64 / 10.0).unwrap();
            let joined: Vec<f64> = segs.iter().flat_map(|s| s.samples.iter().copied()).collect();
            prop_assert_eq!(joined.len(), samples.len() / seg * seg);
            prop_assert_eq!(&joined[..], &samples[..joined.len()]);
        }
    }
}
