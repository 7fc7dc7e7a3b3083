use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum WavFeatures {
    /// The waveform itself, `[n, target_len, 1]`.
    Raw,
    /// Root-mean-square of consecutive non-overlapping frames, `[n, target_len / frame, 1]`.
    FrameEnergy { frame: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WavOptions {
    pub target_len: usize,
    pub features: WavFeatures,
}

/// Raw waveforms cropped or zero-padded to `target_len`.
pub fn load_wav_dir(root: &Path, target_len: usize) -> Result<Dataset> {
    load_wav_dir_with(
        root,
        &WavOptions {
            target_len,
            features: WavFeatures::Raw,
        },
    )
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Mono samples scaled to `[-1, 1)` and the file's sample rate.
fn read_mono(path: &Path) -> Result<(Vec<f64>, u32)> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || !matches!(spec.bits_per_sample, 8 | 16) {
        return Err(Error::Data(format!(
            "{}: unsupported encoding ({:?}, {} bits); only 8/16-bit PCM is read",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = usize::from(spec.channels.max(1));
    let scale = if spec.bits_per_sample == 8 {
        128.0
    } else {
        32768.0
    };
    let raw: Vec<i32> = reader
        .into_samples::<i32>()
        .collect::<std::result::Result<_, _>>()?;
    let mono = raw
        .chunks(channels)
        .map(|frame| frame.iter().map(|&s| f64::from(s) / scale).sum::<f64>() / frame.len() as f64)
        .collect();
    Ok((mono, spec.sample_rate))
}

fn frame_energy(samples: &[f64], frame: usize) -> Vec<f64> {
    samples
        .chunks_exact(frame)
        .map(|f| (f.iter().map(|v| v * v).sum::<f64>() / frame as f64).sqrt())
        .collect()
}

/// One class per subdirectory of `root`; classes and files are taken in
/// sorted order so label indices are stable.
pub fn load_wav_dir_with(root: &Path, opts: &WavOptions) -> Result<Dataset> {
    if opts.target_len == 0 {
        return Err(Error::InvalidArgument("target_len must be positive".into()));
    }
    let steps = match opts.features {
        WavFeatures::Raw => opts.target_len,
        WavFeatures::FrameEnergy { frame } => {
            if frame == 0 || frame > opts.target_len {
                return Err(Error::InvalidArgument(format!(
                    "frame {frame} must be in 1..={}",
                    opts.target_len
                )));
            }
            opts.target_len / frame
        }
    };

    let mut class_names = Vec::new();
    let mut labels = Vec::new();
    let mut features = Vec::new();
    let mut rate = None;
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let files: Vec<PathBuf> = sorted_entries(&dir)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
            .collect();
        if files.is_empty() {
            return Err(Error::Data(format!(
                "class directory {} has no wav files",
                dir.display()
            )));
        }
        let label = class_names.len();
        class_names.push(name);
        for file in files {
            let (mut samples, sr) = read_mono(&file)?;
            match rate {
                None => rate = Some(sr),
                Some(r) if r != sr => {
                    return Err(Error::Data(format!(
                        "{}: sample rate {sr} differs from {r} seen earlier",
                        file.display()
                    )))
                }
                _ => {}
            }
            samples.resize(opts.target_len, 0.0);
            match opts.features {
                WavFeatures::Raw => features.extend_from_slice(&samples),
                WavFeatures::FrameEnergy { frame } => {
                    features.extend(frame_energy(&samples, frame))
                }
            }
            labels.push(label);
        }
    }
    if labels.is_empty() {
        return Err(Error::Data(format!(
            "{} has no class directories",
            root.display()
        )));
    }
    let n = labels.len();
    let ds = Dataset::new(
        Tensor::new(vec![n, steps, 1], features)?,
        labels,
        class_names,
    )?;
    Ok(match rate {
        Some(r) => ds.with_sample_rate(r),
        None => ds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_wav(path: &Path, channels: u16, bits: u16, samples: &[i32]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: 8000,
            bits_per_sample: bits,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in samples {
            if bits == 8 {
                w.write_sample(s as i8).unwrap();
            } else {
                w.write_sample(s as i16).unwrap();
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn mono_16_bit_scaling() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        write_wav(
            &dir.path().join("a/x.wav"),
            1,
            16,
            &[0, 16384, -32768, 32767],
        );
        let ds = load_wav_dir(dir.path(), 4).unwrap();
        assert_eq!(ds.features().shape(), &[1, 4, 1]);
        assert_eq!(ds.features().data(), &[0.0, 0.5, -1.0, 32767.0 / 32768.0]);
        assert_eq!(ds.sample_rate(), Some(8000));
    }

    #[test]
    fn stereo_is_averaged_then_cropped_or_padded() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("b")).unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        write_wav(
            &dir.path().join("b/s.wav"),
            2,
            16,
            &[16384, 0, 8192, 8192, 100, 100],
        );
        write_wav(&dir.path().join("a/m.wav"), 1, 8, &[64, -64]);
        let ds = load_wav_dir(dir.path(), 2).unwrap();
        assert_eq!(ds.class_names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(ds.labels(), &[0, 1]);
        assert_eq!(ds.features().data(), &[0.5, -0.5, 0.25, 0.25]);
        let padded = load_wav_dir(dir.path(), 5).unwrap();
        assert_eq!(
            &padded.features().data()[5..],
            &[0.25, 0.25, 100.0 / 32768.0, 0.0, 0.0]
        );
    }

    #[test]
    fn empty_class_and_float_wav_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("empty")).unwrap();
        assert!(load_wav_dir(dir.path(), 4).is_err());

        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("f")).unwrap();
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(dir.path().join("f/x.wav"), spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav_dir(dir.path(), 4), Err(Error::Data(_))));
    }

    #[test]
    fn frame_energy_mode() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        write_wav(
            &dir.path().join("a/x.wav"),
            1,
            16,
            &[16384, -16384, 0, 0, 8192],
        );
        let opts = WavOptions {
            target_len: 5,
            features: WavFeatures::FrameEnergy { frame: 2 },
        };
        let ds = load_wav_dir_with(dir.path(), &opts).unwrap();
        assert_eq!(ds.features().shape(), &[1, 2, 1]);
        assert_eq!(ds.features().data(), &[0.5, 0.0]);
    }
}
