//! Synthetic classification datasets and their on-disk format.
//!
//! File layout: the magic bytes `DFK1`, a little-endian `u32` header length,
//! the JSON header, then the inputs as little-endian `f64` and the labels as
//! little-endian `i64`.

use crate::error::{Error, Result};
use crate::model::ToyBatch;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"DFK1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Sequences whose mean token lies in one of `n_classes` Gaussian clusters.
    ClusterTokens,
    /// Binary label = parity of the bits carried by a marked subset of positions.
    ParitySeq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n_train: usize,
    pub n_val: usize,
    pub n_classes: usize,
    pub seq_len: usize,
    pub input_dim: usize,
    /// Distance from each cluster centre to the nearest decision boundary,
    /// in units of the mean-embedding standard deviation.
    pub margin: f64,
    /// Standard deviation of the per-token jitter around the sequence mean.
    pub token_noise: f64,
    /// Number of marked positions whose bits determine the parity label.
    pub parity_bits: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            kind: DatasetKind::ClusterTokens,
            n_train: 1024,
            n_val: 512,
            n_classes: 2,
            seq_len: 16,
            input_dim: 16,
            margin: 3.0,
            token_noise: 1.0,
            parity_bits: 2,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_train < 2 || self.n_val < 1 {
            v.push("dataset needs n_train >= 2 and n_val >= 1".into());
        }
        if self.seq_len == 0 || self.input_dim == 0 {
            v.push("dataset seq_len and input_dim must be >= 1".into());
        }
        if self.n_classes < 2 {
            v.push(format!("dataset.n_classes must be >= 2, got {}", self.n_classes));
        }
        match self.kind {
            DatasetKind::ClusterTokens => {
                if self.input_dim < self.n_classes {
                    v.push(format!(
                        "cluster_tokens needs input_dim >= n_classes ({} < {})",
                        self.input_dim, self.n_classes
                    ));
                }
                if !(self.margin > 0.0) || !(self.token_noise >= 0.0) {
                    v.push("cluster_tokens needs margin > 0 and token_noise >= 0".into());
                }
            }
            DatasetKind::ParitySeq => {
                if self.n_classes != 2 {
                    v.push("parity_seq is a 2-class task".into());
                }
                if self.input_dim < 2 {
                    v.push("parity_seq needs input_dim >= 2".into());
                }
                if self.parity_bits == 0 || self.parity_bits > self.seq_len {
                    v.push(format!("parity_bits must lie in [1, seq_len], got {}", self.parity_bits));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Header stored in front of the arrays in a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub kind: DatasetKind,
    pub n: usize,
    pub n_classes: usize,
    pub input_shape: Vec<usize>,
    pub label_shape: Vec<usize>,
    pub seed: u64,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub n_classes: usize,
    pub seed: u64,
    pub split: String,
    /// `[n, T, C_in]`
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.shape()[2]
    }

    /// Gathers the rows at `idx` into a batch.
    pub fn batch(&self, idx: &[usize]) -> ToyBatch {
        let per = self.seq_len() * self.input_dim();
        let src = self.inputs.data();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&src[i * per..(i + 1) * per]);
        }
        let inputs = Tensor::new(vec![idx.len(), self.seq_len(), self.input_dim()], data).expect("sized");
        ToyBatch {
            inputs,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Consecutive batches in storage order; the last one may be short.
    pub fn sequential_batches(&self, batch_size: usize) -> impl Iterator<Item = ToyBatch> + '_ {
        let n = self.len();
        (0..n.div_ceil(batch_size.max(1))).map(move |b| {
            let idx: Vec<usize> = (b * batch_size..((b + 1) * batch_size).min(n)).collect();
            self.batch(&idx)
        })
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Per-sequence mean over tokens, `[n, C_in]`.
    pub fn mean_embeddings(&self) -> Tensor {
        let (t, c) = (self.seq_len(), self.input_dim());
        let src = self.inputs.data();
        let mut out = vec![0.0; self.len() * c];
        for i in 0..self.len() {
            for tok in 0..t {
                for j in 0..c {
                    out[i * c + j] += src[(i * t + tok) * c + j];
                }
            }
        }
        for v in &mut out {
            *v /= t as f64;
        }
        Tensor::new(vec![self.len(), c], out).expect("sized")
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            kind: self.kind,
            n: self.len(),
            n_classes: self.n_classes,
            input_shape: self.inputs.shape().to_vec(),
            label_shape: vec![self.len()],
            seed: self.seed,
            split: self.split.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header())?;
        let len = u32::try_from(header.len()).map_err(|_| Error::Format("header too large".into()))?;
        let mut out = Vec::with_capacity(8 + header.len() + 8 * (self.inputs.len() + self.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.inputs.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &y in &self.labels {
            out.extend_from_slice(&(y as i64).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let header: DatasetHeader = read_header(&mut r, MAGIC)?;
        if header.input_shape.len() != 3 || header.input_shape[0] != header.n || header.label_shape != [header.n] {
            return Err(Error::Format(format!(
                "inconsistent shapes {:?} / {:?} for n = {}",
                header.input_shape, header.label_shape, header.n
            )));
        }
        let count: usize = header.input_shape.iter().product();
        let inputs = read_f64s(&mut r, count)?;
        let mut labels = Vec::with_capacity(header.n);
        for _ in 0..header.n {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| Error::Format("truncated labels".into()))?;
            let y = i64::from_le_bytes(b);
            if y < 0 || y as usize >= header.n_classes {
                return Err(Error::Format(format!("label {y} outside [0, {})", header.n_classes)));
            }
            labels.push(y as usize);
        }
        if !r.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", r.len())));
        }
        Ok(Dataset {
            kind: header.kind,
            n_classes: header.n_classes,
            seed: header.seed,
            split: header.split,
            inputs: Tensor::new(header.input_shape, inputs)?,
            labels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub(crate) fn read_header<T: serde::de::DeserializeOwned>(r: &mut &[u8], magic: &[u8; 4]) -> Result<T> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(|_| Error::Format("file too short".into()))?;
    if &m != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut l = [0u8; 4];
    r.read_exact(&mut l).map_err(|_| Error::Format("missing header length".into()))?;
    let len = u32::from_le_bytes(l) as usize;
    if r.len() < len {
        return Err(Error::Format("truncated header".into()));
    }
    let (h, rest) = r.split_at(len);
    *r = rest;
    Ok(serde_json::from_slice(h)?)
}

pub(crate) fn read_f64s(r: &mut &[u8], count: usize) -> Result<Vec<f64>> {
    if r.len() < count * 8 {
        return Err(Error::Format(format!("expected {count} f64 values, found {} bytes", r.len())));
    }
    let (body, rest) = r.split_at(count * 8);
    *r = rest;
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Generates one split. Both splits share the task geometry (cluster centres
/// or marked positions), which depends only on `spec.seed`.
pub fn make_synthetic_dataset(spec: &DatasetSpec, split: Split) -> Result<Dataset> {
    spec.validate()?;
    let n = match split {
        Split::Train => spec.n_train,
        Split::Val => spec.n_val,
    };
    let mut geo = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(match split {
        Split::Train => 1,
        Split::Val => 2,
    });
    // Balanced labels: counts differ by at most one, order shuffled.
    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.n_classes).collect();
    labels.shuffle(&mut rng);
    let (t, c) = (spec.seq_len, spec.input_dim);
    let mut data = Vec::with_capacity(n * t * c);
    match spec.kind {
        DatasetKind::ClusterTokens => {
            let centres = cluster_centres(spec, &mut geo);
            let mut jitter = vec![0.0; t * c];
            for &y in &labels {
                let z: Vec<f64> = centres[y].iter().map(|m| m + normal(&mut rng)).collect();
                for v in jitter.iter_mut() {
                    *v = spec.token_noise * normal(&mut rng);
                }
                // Remove the jitter's token mean so the sequence mean is exactly z.
                for j in 0..c {
                    let mean = (0..t).map(|tok| jitter[tok * c + j]).sum::<f64>() / t as f64;
                    for tok in 0..t {
                        jitter[tok * c + j] -= mean;
                    }
                }
                for tok in 0..t {
                    for j in 0..c {
                        data.push(z[j] + jitter[tok * c + j]);
                    }
                }
            }
        }
        DatasetKind::ParitySeq => {
            let mut positions: Vec<usize> = (0..t).collect();
            positions.shuffle(&mut geo);
            let mut marked = vec![false; t];
            for &p in &positions[..spec.parity_bits] {
                marked[p] = true;
            }
            for y in labels.iter_mut() {
                let bits: Vec<bool> = (0..t).map(|_| rng.gen()).collect();
                let parity = bits.iter().zip(&marked).filter(|(b, m)| **b && **m).count() % 2;
                *y = parity;
                for tok in 0..t {
                    data.push(if bits[tok] { 1.0 } else { -1.0 });
                    data.push(if marked[tok] { 1.0 } else { 0.0 });
                    for _ in 2..c {
                        data.push(0.1 * normal(&mut rng));
                    }
                }
            }
        }
    }
    Ok(Dataset {
        kind: spec.kind,
        n_classes: spec.n_classes,
        seed: spec.seed,
        split: match split {
            Split::Train => "train".into(),
            Split::Val => "val".into(),
        },
        inputs: Tensor::new(vec![n, t, c], data)?,
        labels,
    })
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Centres `√2·margin·u_k` on random orthonormal directions `u_k`, recentred on
/// their mean. Any two centres are `2·margin` apart, so each sits `margin` from
/// the pairwise boundary.
fn cluster_centres(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let c = spec.input_dim;
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(spec.n_classes);
    while basis.len() < spec.n_classes {
        let mut v: Vec<f64> = (0..c).map(|_| normal(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let scale = std::f64::consts::SQRT_2 * spec.margin;
    let mut centres: Vec<Vec<f64>> = basis
        .into_iter()
        .map(|u| u.into_iter().map(|x| x * scale).collect())
        .collect();
    let k = centres.len() as f64;
    for j in 0..c {
        let mean = centres.iter().map(|m| m[j]).sum::<f64>() / k;
        for m in centres.iter_mut() {
            m[j] -= mean;
        }
    }
    centres
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: DatasetKind) -> DatasetSpec {
        DatasetSpec {
            kind,
            n_train: 101,
            n_val: 20,
            seq_len: 5,
            input_dim: 4,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_bytes() {
        let s = small(DatasetKind::ClusterTokens);
        let a = make_synthetic_dataset(&s, Split::Train).unwrap().to_bytes().unwrap();
        let b = make_synthetic_dataset(&s, Split::Train).unwrap().to_bytes().unwrap();
        assert_eq!(a, b);
        assert_eq!(&a[..4], MAGIC);
    }

    #[test]
    fn balanced_classes() {
        let d = make_synthetic_dataset(&small(DatasetKind::ClusterTokens), Split::Train).unwrap();
        let c = d.class_counts();
        assert!(c[0].abs_diff(c[1]) <= 1);
    }

    #[test]
    fn sequence_mean_is_the_cluster_draw() {
        let mut s = small(DatasetKind::ClusterTokens);
        s.margin = 50.0;
        let d = make_synthetic_dataset(&s, Split::Train).unwrap();
        let m = d.mean_embeddings();
        // Huge margin: the sign of the projection on the centre difference is the label.
        let mut sums = vec![vec![0.0; 4]; 2];
        for (row, &y) in m.data().chunks(4).zip(&d.labels) {
            for (acc, v) in sums[y].iter_mut().zip(row) {
                *acc += v;
            }
        }
        let dir: Vec<f64> = (0..4).map(|j| sums[1][j] - sums[0][j]).collect();
        for (i, &y) in d.labels.iter().enumerate() {
            let proj: f64 = (0..4).map(|j| m.data()[i * 4 + j] * dir[j]).sum();
            assert_eq!(proj > 0.0, y == 1);
        }
    }

    #[test]
    fn file_roundtrip() {
        let d = make_synthetic_dataset(&small(DatasetKind::ParitySeq), Split::Val).unwrap();
        let back = Dataset::from_bytes(&d.to_bytes().unwrap()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn corrupt_files_rejected() {
        let d = make_synthetic_dataset(&small(DatasetKind::ClusterTokens), Split::Val).unwrap();
        let mut bytes = d.to_bytes().unwrap();
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(matches!(Dataset::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn parity_label_matches_marked_bits() {
        let s = small(DatasetKind::ParitySeq);
        let d = make_synthetic_dataset(&s, Split::Train).unwrap();
        let x = d.inputs.data();
        for (i, &y) in d.labels.iter().enumerate() {
            let ones = (0..5)
                .filter(|&t| x[(i * 5 + t) * 4 + 1] == 1.0 && x[(i * 5 + t) * 4] == 1.0)
                .count();
            assert_eq!(ones % 2, y);
        }
    }
}
