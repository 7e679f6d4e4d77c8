//! Reliable memories: contiguous clusters of past samples, scored by age and
//! size, that anchor the learned appearance.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::clustering::Segmentation;
use crate::error::{Error, Result};
use crate::features::{Descriptor, FeatureMap};

/// One tracked sample: its frame number, descriptor and windowed features.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub frame: usize,
    pub descriptor: Descriptor,
    pub features: FeatureMap,
}

/// Memory confidence `exp(-(sigma1 * begin - sigma2 * count))`: earlier
/// memories with more samples score higher.
pub fn confidence(begin: usize, count: usize, sigma1: f64, sigma2: f64) -> f64 {
    (-(sigma1 * begin as f64 - sigma2 * count as f64)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Memory {
    pub id: usize,
    /// First frame of the memory.
    pub begin: usize,
    /// Last frame of the memory.
    pub end: usize,
    /// Number of frames the memory was built from (before subsampling).
    pub count: usize,
    /// Frame at which the memory entered the pool.
    pub ingested_at: usize,
    /// Uniformly subsampled members.
    pub samples: Vec<Sample>,
    pub mean_appearance: FeatureMap,
    pub mean_descriptor: Descriptor,
    pub confidence: f64,
}

impl Memory {
    /// Builds a memory from a contiguous run of samples, keeping at most
    /// `max_samples` of them (indices `floor(i * n / max_samples)`).
    pub fn from_samples(
        id: usize,
        members: &[Sample],
        max_samples: usize,
        sigma1: f64,
        sigma2: f64,
    ) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Dimension("memory needs at least one sample".into()))?;
        let n = members.len();
        let mut mean = FeatureMap::zeros(
            first.features.channels,
            first.features.height,
            first.features.width,
        );
        for s in members {
            mean.same_dims(&s.features)?;
            for (m, v) in mean.data.iter_mut().zip(&s.features.data) {
                *m += v;
            }
        }
        mean.data.iter_mut().for_each(|m| *m /= n as f64);

        let kept: Vec<Sample> = if n > max_samples {
            (0..max_samples)
                .map(|i| members[i * n / max_samples].clone())
                .collect()
        } else {
            members.to_vec()
        };
        let mean_descriptor = mean_descriptor(&kept);
        Ok(Self {
            id,
            ingested_at: members[n - 1].frame,
            begin: first.frame,
            end: members[n - 1].frame,
            count: n,
            samples: kept,
            mean_appearance: mean,
            mean_descriptor,
            confidence: confidence(first.frame, n, sigma1, sigma2),
        })
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &Descriptor> {
        self.samples.iter().map(|s| &s.descriptor)
    }
}

fn mean_descriptor(samples: &[Sample]) -> Descriptor {
    let len = samples[0].descriptor.len();
    let mut acc = vec![0.0; len];
    for s in samples {
        for (a, v) in acc.iter_mut().zip(s.descriptor.values()) {
            *a += v;
        }
    }
    Descriptor::from_values(acc)
}

/// Per-sample weights over the active memory; they sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights(pub Vec<f64>);

impl BlendWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `beta_j ~ exp(-|phi(x_p) - phi(x_j)|^2)` over the samples of `memory`.
/// A zero descriptor gets uniform weights.
pub fn blend_weights(current: &Descriptor, memory: &Memory) -> BlendWeights {
    let n = memory.samples.len();
    if current.is_zero() || n == 0 {
        return BlendWeights(vec![1.0 / n.max(1) as f64; n]);
    }
    let d: Vec<f64> = memory.descriptors().map(|s| current.distance_sq(s)).collect();
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = d.iter().map(|v| (-(v - min)).exp()).collect();
    let total: f64 = e.iter().sum();
    BlendWeights(e.into_iter().map(|v| v / total).collect())
}

/// Learned appearance `(1 - gamma) sum_j beta_j x_j + gamma x_p`. Without an
/// active memory the current sample is returned unchanged.
pub fn compose_appearance(
    memory: Option<&Memory>,
    weights: &BlendWeights,
    current: &FeatureMap,
    gamma: f64,
) -> Result<FeatureMap> {
    let Some(mem) = memory else {
        return Ok(current.clone());
    };
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if weights.0.len() != mem.samples.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} memory samples",
            weights.0.len(),
            mem.samples.len()
        )));
    }
    let mut out = current.clone();
    out.data.iter_mut().for_each(|v| *v *= gamma);
    for (s, &b) in mem.samples.iter().zip(&weights.0) {
        current.same_dims(&s.features)?;
        let w = (1.0 - gamma) * b;
        for (o, v) in out.data.iter_mut().zip(&s.features.data) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Bounded set of memories.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryPool {
    memories: Vec<Memory>,
    next_id: usize,
}

impl MemoryPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn memories(&self) -> &[Memory] {
        &self.memories
    }

    pub fn len(&self) -> usize {
        self.memories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memories.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Memory> {
        self.memories.iter().find(|m| m.id == id)
    }

    /// Next id to hand out; ids are never reused.
    pub fn allocate_id(&mut self) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn push(&mut self, memory: Memory) {
        self.next_id = self.next_id.max(memory.id + 1);
        self.memories.push(memory);
    }

    /// Highest-confidence memory; ties go to the lower id.
    pub fn most_confident(&self) -> Option<&Memory> {
        self.memories.iter().min_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.id.cmp(&b.id))
        })
    }

    /// `id,B,N,confidence` rows with a header line.
    pub fn snapshot_csv(&self) -> String {
        let mut out = String::from("id,B,N,confidence\n");
        for m in &self.memories {
            let _ = writeln!(out, "{},{},{},{}", m.id, m.begin, m.count, m.confidence);
        }
        out
    }

    /// Binary dump of mean appearances, little-endian:
    /// `u64 count`, then per memory `u64 id, u64 channels, u64 height,
    /// u64 width` followed by `channels * height * width` f64 values in
    /// channel-major order.
    pub fn dump_appearances(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend((self.memories.len() as u64).to_le_bytes());
        for m in &self.memories {
            let fm = &m.mean_appearance;
            for v in [m.id, fm.channels, fm.height, fm.width] {
                out.extend((v as u64).to_le_bytes());
            }
            for v in &fm.data {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn write_snapshot(&self, csv_path: &Path, dump_path: Option<&Path>) -> Result<()> {
        std::fs::write(csv_path, self.snapshot_csv()).map_err(|e| Error::io(csv_path, e))?;
        if let Some(p) = dump_path {
            let mut f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            f.write_all(&self.dump_appearances())
                .map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}

/// Decodes [`MemoryPool::dump_appearances`] output into `(id, map)` pairs.
pub fn parse_appearance_dump(bytes: &[u8]) -> Result<Vec<(usize, FeatureMap)>> {
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::Format("truncated appearance dump".into()))?;
        pos += n;
        Ok(s)
    };
    let word = |b: &[u8]| u64::from_le_bytes(b.try_into().expect("8 bytes"));
    let count = word(take(8)?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let id = word(take(8)?) as usize;
        let c = word(take(8)?) as usize;
        let h = word(take(8)?) as usize;
        let w = word(take(8)?) as usize;
        let mut data = Vec::with_capacity(c * h * w);
        for _ in 0..c * h * w {
            data.push(f64::from_le_bytes(take(8)?.try_into().expect("8 bytes")));
        }
        out.push((id, FeatureMap::new(c, h, w, data)?));
    }
    Ok(out)
}

/// Memory closest to `target` by squared descriptor distance to its mean
/// descriptor. Ties go to the higher confidence, then the lower id.
pub fn select_memory<'a>(target: &Descriptor, pool: &'a MemoryPool) -> Option<&'a Memory> {
    pool.memories.iter().min_by(|a, b| {
        let da = target.distance_sq(&a.mean_descriptor);
        let db = target.distance_sq(&b.mean_descriptor);
        da.total_cmp(&db)
            .then(b.confidence.total_cmp(&a.confidence))
            .then(a.id.cmp(&b.id))
    })
}

/// Parameters for turning clusters into memories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestParams {
    /// Frame number recorded as the ingestion time.
    pub current_frame: usize,
    pub max_samples: usize,
    pub sigma1: f64,
    pub sigma2: f64,
}

/// Turns every interval of `seg` except the last into a memory and removes
/// those samples from the front of `samples`. Intervals index `samples`
/// 1-based. Returns the ids of the new memories.
pub fn ingest_clusters(
    seg: &Segmentation,
    samples: &mut VecDeque<Sample>,
    pool: &mut MemoryPool,
    params: IngestParams,
) -> Result<Vec<usize>> {
    let intervals = seg.intervals();
    let Some(last) = intervals.last() else {
        return Ok(vec![]);
    };
    if last.v != samples.len() {
        return Err(Error::CountMismatch(format!(
            "segmentation covers {} samples, pool holds {}",
            last.v,
            samples.len()
        )));
    }
    let contiguous = samples.make_contiguous();
    let mut ids = Vec::new();
    for s in &intervals[..intervals.len() - 1] {
        let id = pool.allocate_id();
        let mem = Memory::from_samples(
            id,
            &contiguous[s.u - 1..s.v],
            params.max_samples,
            params.sigma1,
            params.sigma2,
        )?;
        pool.push(Memory {
            ingested_at: params.current_frame,
            ..mem
        });
        ids.push(id);
    }
    samples.drain(..last.u - 1);
    Ok(ids)
}

/// Drops minimum-confidence memories until at most `max_size` remain. Among
/// equal confidences the later-beginning memory goes first.
pub fn evict(pool: &mut MemoryPool, max_size: usize) -> Vec<usize> {
    let mut removed = Vec::new();
    while pool.memories.len() > max_size {
        let (idx, _) = pool
            .memories
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                a.confidence
                    .total_cmp(&b.confidence)
                    .then(b.begin.cmp(&a.begin))
                    .then(b.id.cmp(&a.id))
            })
            .expect("pool is non-empty");
        removed.push(pool.memories.remove(idx).id);
    }
    removed
}
