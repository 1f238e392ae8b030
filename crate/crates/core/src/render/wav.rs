use std::io::{Cursor, Read};
use std::path::Path;

use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MIN_SAMPLE_RATE: u32 = 8000;

/// De-interleaved audio, one sample vector per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::Argument(format!(
                "{} channels; only mono and stereo are supported",
                channels.len()
            )));
        }
        if sample_rate < MIN_SAMPLE_RATE {
            return Err(Error::Argument(format!(
                "sample rate {sample_rate} Hz below {MIN_SAMPLE_RATE} Hz"
            )));
        }
        if channels.iter().any(|c| c.len() != channels[0].len()) {
            return Err(Error::Argument("channels differ in length".into()));
        }
        if channels.iter().flatten().any(|s| !s.is_finite()) {
            return Err(Error::Numeric("audio sample is not finite".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Frames per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn peak(&self) -> f64 {
        self.channels
            .iter()
            .flatten()
            .fold(0.0, |m: f64, s| m.max(s.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    #[default]
    Pcm16,
    Float32,
}

fn map_hound(e: hound::Error) -> Error {
    match e {
        hound::Error::Unsupported => Error::Format("unsupported WAV encoding".into()),
        hound::Error::FormatError(msg) => Error::Format(msg.to_string()),
        hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::Corrupt("WAV data ends early".into())
        }
        hound::Error::IoError(io) => Error::Corrupt(io.to_string()),
        other => Error::Corrupt(other.to_string()),
    }
}

/// Reads 16-bit integer or 32-bit float RIFF/WAVE data. Integer samples
/// are scaled by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_wav_from(Cursor::new(bytes))
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<AudioBuffer> {
    let mut wav = WavReader::new(reader).map_err(map_hound)?;
    let spec = wav.spec();
    let n_ch = spec.channels as usize;
    if !(1..=2).contains(&n_ch) {
        return Err(Error::Format(format!(
            "{n_ch} channels; only mono and stereo are supported"
        )));
    }
    let frames = wav.duration() as usize;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Int, 16) => {
            for (i, s) in wav.samples::<i16>().enumerate() {
                channels[i % n_ch].push(f64::from(s.map_err(map_hound)?) / 32768.0);
            }
        }
        (HoundFormat::Float, 32) => {
            for (i, s) in wav.samples::<f32>().enumerate() {
                channels[i % n_ch].push(f64::from(s.map_err(map_hound)?));
            }
        }
        (fmt, bits) => {
            return Err(Error::Format(format!(
                "unsupported sample format {fmt:?} at {bits} bits"
            )));
        }
    }
    if channels.iter().any(|c| c.len() != frames) {
        return Err(Error::Corrupt("WAV data ends mid-frame".into()));
    }
    AudioBuffer::new(channels, spec.sample_rate).map_err(|e| match e {
        Error::Argument(m) => Error::Format(m),
        other => other,
    })
}

/// Encodes a buffer as a complete WAV file image. PCM16 output clamps to
/// [-1, 1] and rounds half away from zero.
pub fn wav_bytes(buffer: &AudioBuffer, format: SampleFormat) -> Result<Vec<u8>> {
    let spec = WavSpec {
        channels: buffer.channel_count() as u16,
        sample_rate: buffer.sample_rate,
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => HoundFormat::Int,
            SampleFormat::Float32 => HoundFormat::Float,
        },
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut cursor, spec).map_err(map_hound)?;
        for i in 0..buffer.len() {
            for ch in &buffer.channels {
                match format {
                    SampleFormat::Pcm16 => w.write_sample(to_pcm16(ch[i])).map_err(map_hound)?,
                    SampleFormat::Float32 => w.write_sample(ch[i] as f32).map_err(map_hound)?,
                }
            }
        }
        w.finalize().map_err(map_hound)?;
    }
    Ok(cursor.into_inner())
}

pub fn write_wav(buffer: &AudioBuffer, path: impl AsRef<Path>, format: SampleFormat) -> Result<()> {
    write_atomic(path, &wav_bytes(buffer, format)?)
}

fn to_pcm16(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * 32768.0)
        .round()
        .clamp(-32768.0, 32767.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_quantization() {
        assert_eq!(to_pcm16(1.0), 32767);
        assert_eq!(to_pcm16(-1.0), -32768);
        assert_eq!(to_pcm16(0.5), 16384);
        assert_eq!(to_pcm16(2.0), 32767);
        // half away from zero
        assert_eq!(to_pcm16(1.5 / 32768.0), 2);
        assert_eq!(to_pcm16(-1.5 / 32768.0), -2);
    }

    #[test]
    fn reads_pcm16_scaling() {
        let buf = AudioBuffer::mono(vec![0.5, -0.25, 0.0], 44_100).unwrap();
        let bytes = wav_bytes(&buf, SampleFormat::Pcm16).unwrap();
        let back = read_wav_from(Cursor::new(bytes)).unwrap();
        assert_eq!(back.channels()[0], vec![0.5, -0.25, 0.0]);
    }

    #[test]
    fn float_round_trip_is_bit_exact() {
        let samples: Vec<f64> = (0..100)
            .map(|i| f64::from((i as f32 * 0.37).sin()))
            .collect();
        let buf = AudioBuffer::new(vec![samples.clone(), samples], 48_000).unwrap();
        let bytes = wav_bytes(&buf, SampleFormat::Float32).unwrap();
        let back = read_wav_from(Cursor::new(bytes.clone())).unwrap();
        assert_eq!(back, buf);
        assert_eq!(wav_bytes(&back, SampleFormat::Float32).unwrap(), bytes);
    }

    #[test]
    fn unsupported_depth_is_format_error() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 44_100,
            bits_per_sample: 24,
            sample_format: HoundFormat::Int,
        };
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut cursor, spec).unwrap();
            w.write_sample(1i32).unwrap();
            w.finalize().unwrap();
        }
        let err = read_wav_from(Cursor::new(cursor.into_inner())).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err:?}");
    }

    #[test]
    fn truncated_data_is_corruption() {
        let buf = AudioBuffer::mono(vec![0.1; 1000], 44_100).unwrap();
        let bytes = wav_bytes(&buf, SampleFormat::Pcm16).unwrap();
        let cut = &bytes[..bytes.len() - 500];
        let err = read_wav_from(Cursor::new(cut.to_vec())).unwrap_err();
        assert!(matches!(err, Error::Corrupt(_)), "{err:?}");
    }

    #[test]
    fn garbage_is_format_error() {
        let err = read_wav_from(Cursor::new(b"definitely not a wav file".to_vec())).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err:?}");
    }

    #[test]
    fn buffer_validation() {
        assert!(AudioBuffer::mono(vec![0.0], 4000).is_err());
        assert!(AudioBuffer::new(vec![vec![0.0], vec![0.0, 1.0]], 44_100).is_err());
        assert!(AudioBuffer::new(vec![vec![]; 3], 44_100).is_err());
    }
}
