//! Binary dataset files and their CSV mirror.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header (32 bytes): magic "CLWX" | version u16 | K u16 | sample count u64
//!                    | flags u32 (bit 0: labeled) | reserved [12]
//! record:            sample_id u64 | episode_id u32
//!                    | K×K entries as (re f64, im f64), row-major
//!                    | if labeled: K f64 power label + f64 oracle rate
//! ```
//!
//! The first reserved byte records the RNG algorithm id that generated the
//! data (0 when unknown/imported); the rest are zero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::channelgen::ChannelSample;
use crate::error::{Error, Result};
use crate::rates::PowerVector;
use crate::wmmse::LabeledSample;

pub const MAGIC: &[u8; 4] = b"CLWX";
pub const FORMAT_VERSION: u16 = 1;
pub const FLAG_LABELED: u32 = 1;
pub const HEADER_LEN: usize = 32;

/// Parsed dataset header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u16,
    pub k_pairs: u16,
    pub sample_count: u64,
    pub labeled: bool,
    pub rng_algo: u8,
}

/// Either kind of dataset, as read from disk.
#[derive(Debug, Clone)]
pub enum Dataset {
    Unlabeled(Vec<ChannelSample>),
    Labeled(Vec<LabeledSample>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Unlabeled(v) => v.len(),
            Dataset::Labeled(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn encode_header(k: usize, count: u64, labeled: bool, rng_algo: u8) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(k as u16).to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&if labeled { FLAG_LABELED } else { 0 }.to_le_bytes());
    let mut reserved = [0u8; 12];
    reserved[0] = rng_algo;
    out.extend_from_slice(&reserved);
    debug_assert_eq!(out.len(), HEADER_LEN);
    out
}

fn decode_header(buf: &[u8]) -> Result<DatasetHeader> {
    if buf.len() < HEADER_LEN {
        return Err(Error::Format(format!("header truncated: {} of {HEADER_LEN} bytes", buf.len())));
    }
    if &buf[0..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:02x?}, expected \"CLWX\"", &buf[0..4])));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let k_pairs = u16::from_le_bytes([buf[6], buf[7]]);
    if k_pairs == 0 {
        return Err(Error::Format("header field K is zero".into()));
    }
    let sample_count = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let flags = u32::from_le_bytes(buf[16..20].try_into().unwrap());
    Ok(DatasetHeader {
        version,
        k_pairs,
        sample_count,
        labeled: flags & FLAG_LABELED != 0,
        rng_algo: buf[20],
    })
}

fn write_channel(out: &mut impl Write, s: &ChannelSample) -> Result<()> {
    out.write_all(&s.sample_id.to_le_bytes())?;
    out.write_all(&s.episode_id.to_le_bytes())?;
    for c in s.entries() {
        out.write_all(&c.re.to_le_bytes())?;
        out.write_all(&c.im.to_le_bytes())?;
    }
    Ok(())
}

/// Write unlabeled channel samples. All must share one K.
pub fn write_unlabeled(path: &Path, samples: &[ChannelSample], rng_algo: u8) -> Result<()> {
    let k = samples.first().map(|s| s.k_pairs()).unwrap_or(1);
    if samples.iter().any(|s| s.k_pairs() != k) {
        return Err(Error::ShapeMismatch("mixed K within one dataset".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&encode_header(k, samples.len() as u64, false, rng_algo))?;
    for s in samples {
        write_channel(&mut out, s)?;
    }
    out.flush()?;
    Ok(())
}

/// Write labeled samples with the labeled flag set.
pub fn write_labeled(path: &Path, samples: &[LabeledSample], rng_algo: u8) -> Result<()> {
    let k = samples.first().map(|s| s.channel.k_pairs()).unwrap_or(1);
    if samples.iter().any(|s| s.channel.k_pairs() != k || s.label_power.len() != k) {
        return Err(Error::ShapeMismatch("mixed K within one dataset".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&encode_header(k, samples.len() as u64, true, rng_algo))?;
    for s in samples {
        write_channel(&mut out, &s.channel)?;
        for &p in s.label_power.as_slice() {
            out.write_all(&p.to_le_bytes())?;
        }
        out.write_all(&s.oracle_rate.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_f64(buf: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    buf.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Read a dataset file, labeled or not, returning its header too.
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Dataset)> {
    let mut file = BufReader::new(File::open(path)?);
    let mut header_buf = [0u8; HEADER_LEN];
    file.read_exact(&mut header_buf).map_err(|_| {
        Error::Format(format!("{}: file shorter than the 32-byte header", path.display()))
    })?;
    let header = decode_header(&header_buf)?;
    let k = header.k_pairs as usize;
    let mut unlabeled = Vec::new();
    let mut labeled = Vec::new();
    for rec in 0..header.sample_count {
        let mut id_buf = [0u8; 8];
        file.read_exact(&mut id_buf)
            .map_err(|_| Error::Format(format!("record {rec}: truncated sample_id")))?;
        let sample_id = u64::from_le_bytes(id_buf);
        let mut ep_buf = [0u8; 4];
        file.read_exact(&mut ep_buf)
            .map_err(|_| Error::Format(format!("record {rec}: truncated episode_id")))?;
        let episode_id = u32::from_le_bytes(ep_buf);
        let mut entries = Vec::with_capacity(k * k);
        for _ in 0..k * k {
            let re = read_f64(&mut file)
                .map_err(|_| Error::Format(format!("record {rec}: truncated channel matrix")))?;
            let im = read_f64(&mut file)
                .map_err(|_| Error::Format(format!("record {rec}: truncated channel matrix")))?;
            entries.push(Complex64::new(re, im));
        }
        let channel = ChannelSample::new(entries, k, episode_id, sample_id)?;
        if header.labeled {
            let mut power = Vec::with_capacity(k);
            for _ in 0..k {
                power.push(read_f64(&mut file).map_err(|_| {
                    Error::Format(format!("record {rec}: truncated power label"))
                })?);
            }
            let oracle_rate = read_f64(&mut file)
                .map_err(|_| Error::Format(format!("record {rec}: truncated oracle rate")))?;
            labeled.push(LabeledSample {
                channel,
                label_power: PowerVector(power),
                oracle_rate,
                solver_iters: 0,
            });
        } else {
            unlabeled.push(channel);
        }
    }
    let dataset =
        if header.labeled { Dataset::Labeled(labeled) } else { Dataset::Unlabeled(unlabeled) };
    Ok((header, dataset))
}

/// Read a file that must be labeled.
pub fn read_labeled(path: &Path) -> Result<Vec<LabeledSample>> {
    match read_dataset(path)? {
        (_, Dataset::Labeled(v)) => Ok(v),
        (_, Dataset::Unlabeled(_)) => Err(Error::Format(format!(
            "{}: labeled dataset required but labeled flag is unset",
            path.display()
        ))),
    }
}

/// Read a file that must be unlabeled.
pub fn read_unlabeled(path: &Path) -> Result<Vec<ChannelSample>> {
    match read_dataset(path)? {
        (_, Dataset::Unlabeled(v)) => Ok(v),
        (_, Dataset::Labeled(_)) => Err(Error::Format(format!(
            "{}: expected an unlabeled dataset but the labeled flag is set",
            path.display()
        ))),
    }
}

/// CSV mirror of the binary fields: one row per sample.
pub fn export_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let (k, labeled) = match dataset {
        Dataset::Unlabeled(v) => (v.first().map(|s| s.k_pairs()).unwrap_or(0), false),
        Dataset::Labeled(v) => (v.first().map(|s| s.channel.k_pairs()).unwrap_or(0), true),
    };
    let mut header = String::from("sample_id,episode_id");
    for r in 0..k {
        for c in 0..k {
            header.push_str(&format!(",h_re_{r}_{c},h_im_{r}_{c}"));
        }
    }
    if labeled {
        for j in 0..k {
            header.push_str(&format!(",p_{j}"));
        }
        header.push_str(",oracle_rate");
    }
    writeln!(out, "{header}")?;
    let write_channel_row = |out: &mut BufWriter<File>, ch: &ChannelSample| -> Result<()> {
        write!(out, "{},{}", ch.sample_id, ch.episode_id)?;
        for e in ch.entries() {
            write!(out, ",{},{}", e.re, e.im)?;
        }
        Ok(())
    };
    match dataset {
        Dataset::Unlabeled(v) => {
            for ch in v {
                write_channel_row(&mut out, ch)?;
                writeln!(out)?;
            }
        }
        Dataset::Labeled(v) => {
            for s in v {
                write_channel_row(&mut out, &s.channel)?;
                for &p in s.label_power.as_slice() {
                    write!(out, ",{p}")?;
                }
                writeln!(out, ",{}", s.oracle_rate)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelgen::{generate_sample, EpisodeKind, ProblemConfig};
    use crate::wmmse::{label_batch, WmmseConfig};
    use crate::rng::RNG_ALGO_ID;

    fn samples(k: usize, n: u64) -> Vec<ChannelSample> {
        (0..n).map(|id| generate_sample(&EpisodeKind::Rayleigh, k, 3, id, 2).unwrap()).collect()
    }

    #[test]
    fn unlabeled_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.bin");
        let data = samples(4, 7);
        write_unlabeled(&path, &data, RNG_ALGO_ID).unwrap();
        let (header, ds) = read_dataset(&path).unwrap();
        assert_eq!(header.k_pairs, 4);
        assert_eq!(header.sample_count, 7);
        assert!(!header.labeled);
        assert_eq!(header.rng_algo, RNG_ALGO_ID);
        match ds {
            Dataset::Unlabeled(v) => assert_eq!(v, data),
            _ => panic!("expected unlabeled"),
        }
    }

    #[test]
    fn labeled_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.bin");
        let cfg = ProblemConfig::uniform(3, 1.0, 1.0);
        let labeled = label_batch(&samples(3, 5), &cfg, &WmmseConfig::default()).unwrap();
        write_labeled(&path, &labeled, RNG_ALGO_ID).unwrap();
        let back = read_labeled(&path).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in back.iter().zip(labeled.iter()) {
            assert_eq!(a.channel, b.channel);
            assert_eq!(a.label_power, b.label_power);
            assert_eq!(a.oracle_rate, b.oracle_rate);
        }
    }

    #[test]
    fn corrupt_magic_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOPE0000000000000000000000000000").unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_record_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.bin");
        let data = samples(3, 2);
        write_unlabeled(&path, &data, 0).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        let err = read_dataset(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn unlabeled_file_rejected_where_labels_required() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.bin");
        write_unlabeled(&path, &samples(2, 2), 0).unwrap();
        assert!(read_labeled(&path).is_err());
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.bin");
        let b = dir.path().join("b.bin");
        let data = samples(4, 9);
        write_unlabeled(&a, &data, 1).unwrap();
        write_unlabeled(&b, &data, 1).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn csv_mirrors_fields() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ProblemConfig::uniform(2, 1.0, 1.0);
        let labeled = label_batch(&samples(2, 2), &cfg, &WmmseConfig::default()).unwrap();
        let path = dir.path().join("l.csv");
        export_csv(&path, &Dataset::Labeled(labeled.clone())).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("sample_id,episode_id,h_re_0_0,h_im_0_0"));
        assert!(header.ends_with("p_0,p_1,oracle_rate"));
        assert_eq!(lines.count(), 2);
    }
}
