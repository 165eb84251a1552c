//! Multichannel WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::correlation::Frame;
use crate::error::{Error, Result};

/// Reads every channel of a WAV file as `f64` in [−1, 1] (integer formats)
/// or as stored (float). Returns the channels and the sample rate.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<Vec<f64>>, u32)> {
    let mut reader = WavReader::open(path)?;
    let spec = reader.spec();
    let n = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n.max(1)); n];
    for (i, v) in interleaved.into_iter().enumerate() {
        channels[i % n].push(v);
    }
    Ok((channels, spec.sample_rate))
}

/// Reads one multichannel file, or several files whose channels are
/// concatenated in order. All files must share the sample rate.
pub fn read_frame(paths: &[impl AsRef<Path>]) -> Result<Frame> {
    let mut channels = Vec::new();
    let mut rate: Option<u32> = None;
    for p in paths {
        let (ch, fs) = read_wav(p)?;
        match rate {
            Some(r) if r != fs => return Err(Error::SampleRateMismatch(r, fs)),
            _ => rate = Some(fs),
        }
        channels.extend(ch);
    }
    let fs = rate.ok_or_else(|| Error::InvalidFrame("no input files".into()))?;
    let len = channels.iter().map(Vec::len).min().unwrap_or(0);
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidFrame("channels differ in length".into()));
    }
    Frame::new(channels, fs as f64)
}

/// Writes the channels as one 32-bit float WAV file.
pub fn write_wav(path: impl AsRef<Path>, channels: &[Vec<f64>], sample_rate: u32) -> Result<()> {
    if channels.is_empty() || channels.len() > u16::MAX as usize {
        return Err(Error::InvalidFrame("unsupported channel count".into()));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::InvalidFrame("channels differ in length".into()));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for n in 0..len {
        for c in channels {
            w.write_sample(c[n] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let ch = vec![vec![0.5, -0.25, 0.125], vec![0.0, 1.0, -1.0]];
        write_wav(&p, &ch, 16_000).unwrap();
        let (back, fs) = read_wav(&p).unwrap();
        assert_eq!(fs, 16_000);
        assert_eq!(back, ch);
    }

    #[test]
    fn int16_scaled_and_mono_files_combined() {
        let dir = tempfile::tempdir().unwrap();
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut paths = Vec::new();
        for k in 0..2 {
            let p = dir.path().join(format!("m{k}.wav"));
            let mut w = WavWriter::create(&p, spec).unwrap();
            for i in 0..64i16 {
                w.write_sample(((i * 300) ^ (k * 0x55)) - 9000).unwrap();
            }
            w.finalize().unwrap();
            paths.push(p);
        }
        let frame = read_frame(&paths).unwrap();
        assert_eq!(frame.num_channels(), 2);
        assert_eq!(frame.sample_rate(), 8000.0);
        assert!((frame.channel(0)[0] - (-9000.0 / 32768.0)).abs() < 1e-12);

        let other = dir.path().join("r.wav");
        write_wav(&other, &[vec![0.1; 64]], 16_000).unwrap();
        assert!(matches!(
            read_frame(&[paths[0].clone(), other]),
            Err(Error::SampleRateMismatch(8000, 16_000))
        ));
    }
}
