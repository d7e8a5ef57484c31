use std::io::Cursor;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError, AudioResult};

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::Unsupported => AudioError::UnsupportedFormat("unsupported WAV feature".into()),
        hound::Error::TooWide => AudioError::UnsupportedFormat("sample width too large".into()),
        other => AudioError::Decode(other.to_string()),
    }
}

/// Decodes a RIFF/WAVE byte stream (PCM 16-bit or IEEE float 32-bit, one or
/// two channels) into a mono clip. Stereo is downmixed by channel mean.
pub fn decode_wav(bytes: &[u8]) -> AudioResult<AudioClip> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(AudioError::UnsupportedFormat(format!(
            "{channels} channels"
        )));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::Decode("zero sample rate".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (fmt, bits) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "{fmt:?} {bits}-bit"
            )))
        }
    };
    if !interleaved.len().is_multiple_of(channels) {
        return Err(AudioError::Decode("partial sample frame".into()));
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Encodes a mono clip as 16-bit PCM WAV. Samples are clamped to `[-1, 1]`
/// and rounded to the nearest quantization step.
pub fn encode_wav_pcm16(clip: &AudioClip) -> AudioResult<Vec<u8>> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut writer = WavWriter::new(&mut buf, spec).map_err(map_hound)?;
        for &s in &clip.samples {
            let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(q).map_err(map_hound)?;
        }
        writer.finalize().map_err(map_hound)?;
    }
    Ok(buf.into_inner())
}
