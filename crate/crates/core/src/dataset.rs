//! Binary dataset container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size        content
//! 0       8           magic b"RTKDATA\0"
//! 8       4           format version (u32), currently 1
//! 12      4           header length L in bytes (u32)
//! 16      L           UTF-8 JSON header (see DatasetHeader)
//! 16+L    8·P         ground truth, if header.has_ground_truth
//!         8·P·n       designs, sample by sample
//!         8·n         responses
//! ```
//!
//! `P = p1 p2 p3`; every tensor is stored in [`Tensor3`] linearization order
//! (`(i, j, k)` at `i + p1 (j + p2 k)`). Floats are raw IEEE-754 bit patterns,
//! so a round trip is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::samples::SampleSet;
use crate::simulation::{NoiseModel, SyntheticSpec};
use crate::tensor::{Dims, Matrix, Tensor3};

pub const MAGIC: [u8; 8] = *b"RTKDATA\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub dims: Dims,
    pub n: usize,
    pub seed: Option<u64>,
    pub noise: Option<NoiseModel>,
    /// Generator settings when the data are synthetic.
    pub spec: Option<SyntheticSpec>,
    pub has_ground_truth: bool,
}

impl DatasetHeader {
    pub fn for_samples(samples: &SampleSet, spec: Option<&SyntheticSpec>) -> Self {
        DatasetHeader {
            format_version: FORMAT_VERSION,
            dims: samples.dims(),
            n: samples.n(),
            seed: spec.map(|s| s.seed),
            noise: spec.map(|s| s.noise),
            spec: spec.cloned(),
            has_ground_truth: samples.ground_truth().is_some(),
        }
    }
}

fn put_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * xs.len());
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn get_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * count];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn write_dataset<W: Write>(mut w: W, samples: &SampleSet, spec: Option<&SyntheticSpec>) -> Result<()> {
    let header = serde_json::to_vec(&DatasetHeader::for_samples(samples, spec))?;
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let len = u32::try_from(header.len()).map_err(|_| Error::Format("header too long".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&header)?;
    if let Some(t) = samples.ground_truth() {
        put_f64s(&mut w, t.data())?;
    }
    put_f64s(&mut w, samples.design_matrix().as_slice())?;
    put_f64s(&mut w, samples.responses())?;
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<(SampleSet, DatasetHeader)> {
    let mut fixed = [0u8; 16];
    r.read_exact(&mut fixed)
        .map_err(|_| Error::Format("file shorter than the fixed preamble".into()))?;
    if fixed[..8] != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(fixed[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let len = u32::from_le_bytes(fixed[12..16].try_into().expect("4 bytes")) as usize;
    let mut raw = vec![0u8; len];
    r.read_exact(&mut raw)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let header: DatasetHeader = serde_json::from_slice(&raw)?;
    if header.format_version != version {
        return Err(Error::Format("header and preamble disagree on the version".into()));
    }
    let p: usize = header.dims.iter().product();
    if p == 0 || header.n == 0 {
        return Err(Error::Format("empty dims or zero samples".into()));
    }
    let truth = if header.has_ground_truth {
        Some(Tensor3::from_vec(header.dims, get_f64s(&mut r, p)?)?)
    } else {
        None
    };
    let design = Matrix::from_vec(p, header.n, get_f64s(&mut r, p * header.n)?);
    let responses = get_f64s(&mut r, header.n)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after responses".into()));
    }
    let mut samples = SampleSet::from_design_matrix(header.dims, design, responses)?;
    if let Some(t) = truth {
        samples = samples.with_ground_truth(t)?;
    }
    Ok((samples, header))
}

pub fn save_dataset(path: &Path, samples: &SampleSet, spec: Option<&SyntheticSpec>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(f), samples, spec)
}

pub fn load_dataset(path: &Path) -> Result<(SampleSet, DatasetHeader)> {
    let f = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::gen_dataset;
    use proptest::prelude::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            dims: [3, 4, 2],
            ranks: [1, 2, 2],
            n: 17,
            noise: NoiseModel::student_t(2.5, 0.7).unwrap(),
            spectrum: [1.0, 2.0],
            seed: 42,
            contamination: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = spec();
        let (samples, _) = gen_dataset(&s).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &samples, Some(&s)).unwrap();
        let (back, header) = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(header.spec.as_ref(), Some(&s));
        assert_eq!(header.seed, Some(42));
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.responses()), bits(samples.responses()));
        assert_eq!(bits(back.design_matrix().as_slice()), bits(samples.design_matrix().as_slice()));
        assert_eq!(
            bits(back.ground_truth().unwrap().data()),
            bits(samples.ground_truth().unwrap().data())
        );
    }

    #[test]
    fn layout_sizes() {
        let s = spec();
        let (samples, _) = gen_dataset(&s).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &samples, None).unwrap();
        let len = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
        assert_eq!(buf.len(), 16 + len + 8 * (24 + 24 * 17 + 17));
    }

    #[test]
    fn corrupt_files_rejected() {
        let (samples, _) = gen_dataset(&spec()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &samples, None).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_dataset(bad.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_dataset(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(read_dataset(long.as_slice()), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn arbitrary_floats_survive(
            dims in prop::array::uniform3(1usize..4),
            n in 1usize..6,
            seed in any::<u64>(),
            with_truth in any::<bool>(),
        ) {
            let p: usize = dims.iter().product();
            let mut rng = crate::simulation::rng_from_seed(seed);
            use rand::Rng;
            let mut bits = |k: usize| (0..k).map(|_| f64::from_bits(rng.random::<u64>())).map(|x| if x.is_nan() { -0.0 } else { x }).collect::<Vec<f64>>();
            let design = Matrix::from_vec(p, n, bits(p * n));
            let mut samples = SampleSet::from_design_matrix(dims, design, bits(n)).unwrap();
            if with_truth {
                samples = samples.with_ground_truth(Tensor3::from_vec(dims, bits(p)).unwrap()).unwrap();
            }
            let mut buf = Vec::new();
            write_dataset(&mut buf, &samples, None).unwrap();
            let (back, _) = read_dataset(buf.as_slice()).unwrap();
            let same = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits());
            prop_assert!(same(back.responses(), samples.responses()));
            prop_assert!(same(back.design_matrix().as_slice(), samples.design_matrix().as_slice()));
            prop_assert_eq!(back.ground_truth().is_some(), with_truth);
        }
    }
}
