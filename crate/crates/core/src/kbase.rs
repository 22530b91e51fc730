//! Retrieval memory over expert demonstrations: every observation window
//! is embedded to a flat vector and stored next to the normalized action
//! chunk that followed it, then queried by exact nearest-neighbor search.
//!
//! The search is a flat scan over squared L2 distances. At the database
//! sizes this crate targets (tens of thousands of entries) a scan is
//! faster than building an approximate index, and exactness keeps the
//! retrieval step out of the list of experimental confounds. Keys and
//! values are held as 32-bit floats, matching the on-disk layout, while
//! distances accumulate in f64.

use alloc::string::String;
use alloc::vec::Vec;

use crate::envs::{chunk_episodes, DemoDataset, Horizons, Stats};
use crate::nn::Fnv1a;
use crate::tensor::Mat;
use crate::{invalid, Error, Result};

/// The observation-window encoder: per-dimension z-scoring followed by
/// row-major flattening. Degenerate dimensions (standard deviation below
/// `1e-8`) are repaired to scale 1 so they carry no retrieval weight
/// instead of blowing up.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub t_o: usize,
}

impl Embedder {
    pub fn new(stats: &Stats, t_o: usize) -> Result<Self> {
        if t_o == 0 {
            return Err(invalid("t_o must be positive"));
        }
        if stats.dim() == 0 {
            return Err(invalid("embedder needs at least one observation dimension"));
        }
        let std = stats
            .std
            .iter()
            .map(|&s| if s < 1e-8 { 1.0 } else { s })
            .collect();
        Ok(Embedder {
            mean: stats.mean.clone(),
            std,
            t_o,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.mean.len()
    }

    /// Flattened embedding dimension.
    pub fn dim(&self) -> usize {
        self.t_o * self.obs_dim()
    }

    /// Embed a raw `t_o x obs_dim` observation window.
    pub fn embed(&self, obs: &Mat) -> Result<Vec<f32>> {
        if obs.rows() != self.t_o || obs.cols() != self.obs_dim() {
            return Err(Error::ShapeMismatch {
                expected_rows: self.t_o,
                expected_cols: self.obs_dim(),
                rows: obs.rows(),
                cols: obs.cols(),
            });
        }
        let mut out = Vec::with_capacity(self.dim());
        for r in 0..obs.rows() {
            for c in 0..obs.cols() {
                out.push(((obs.get(r, c) - self.mean[c]) / self.std[c]) as f32);
            }
        }
        Ok(out)
    }
}

/// Provenance and shape information carried with a knowledge base.
#[derive(Debug, Clone, PartialEq)]
pub struct KbMeta {
    pub task_id: String,
    pub t_o: usize,
    pub t_p: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub dataset_hash: u64,
    pub skipped_episodes: usize,
}

/// One retrieval result: the winning entry's index, its normalized action
/// chunk (`t_p x act_dim`), and the squared L2 distance to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    pub index: usize,
    pub action: Mat,
    pub distance: f64,
}

/// Immutable key/value store of embedded observation windows and the
/// normalized action chunks recorded after them. Safe to query from
/// multiple threads once built.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    n: usize,
    key_dim: usize,
    value_dim: usize,
    keys: Vec<f32>,
    values: Vec<f32>,
    pub embedder: Embedder,
    /// Action statistics of the source dataset, used to map generated
    /// chunks back to environment units.
    pub act_stats: Stats,
    pub meta: KbMeta,
}

impl KnowledgeBase {
    /// Embed and store every dense chunk of the dataset, ordered by
    /// (episode, time). Episodes shorter than `t_p` are skipped; their
    /// count lands in the metadata. An entirely empty result is an error.
    pub fn build(ds: &DemoDataset, h: Horizons) -> Result<KnowledgeBase> {
        let set = chunk_episodes(ds, h)?;
        if set.chunks.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let embedder = Embedder::new(&ds.obs_stats, h.t_o)?;
        let key_dim = embedder.dim();
        let first = &set.chunks[0];
        let act_dim = first.act.cols();
        let value_dim = h.t_p * act_dim;

        let mut keys = Vec::with_capacity(set.chunks.len() * key_dim);
        let mut values = Vec::with_capacity(set.chunks.len() * value_dim);
        for chunk in &set.chunks {
            // Chunks are already normalized with the same statistics the
            // embedder carries, so flattening them is exactly f applied
            // to the raw window.
            keys.extend(chunk.obs.data().iter().map(|&v| v as f32));
            values.extend(chunk.act.data().iter().map(|&v| v as f32));
        }
        KnowledgeBase::from_parts(
            keys,
            values,
            embedder,
            ds.act_stats.clone(),
            KbMeta {
                task_id: ds.meta.env_id.clone(),
                t_o: h.t_o,
                t_p: h.t_p,
                obs_dim: first.obs.cols(),
                act_dim,
                dataset_hash: dataset_hash(ds),
                skipped_episodes: set.skipped_episodes,
            },
        )
    }

    /// Assemble a knowledge base from raw storage blocks, validating all
    /// shape relations. This is the loading path for persisted bases.
    pub fn from_parts(
        keys: Vec<f32>,
        values: Vec<f32>,
        embedder: Embedder,
        act_stats: Stats,
        meta: KbMeta,
    ) -> Result<KnowledgeBase> {
        let key_dim = embedder.dim();
        if meta.t_o != embedder.t_o || meta.obs_dim != embedder.obs_dim() {
            return Err(invalid("metadata disagrees with the embedder shape"));
        }
        if act_stats.dim() != meta.act_dim {
            return Err(invalid("action statistics disagree with act_dim"));
        }
        let value_dim = meta.t_p * meta.act_dim;
        if key_dim == 0 || value_dim == 0 {
            return Err(invalid("empty key or value dimension"));
        }
        if keys.len() % key_dim != 0 {
            return Err(invalid("key block length is not a multiple of the key dimension"));
        }
        let n = keys.len() / key_dim;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if values.len() != n * value_dim {
            return Err(invalid(alloc::format!(
                "value block holds {} floats, expected {}",
                values.len(),
                n * value_dim
            )));
        }
        Ok(KnowledgeBase {
            n,
            key_dim,
            value_dim,
            keys,
            values,
            embedder,
            act_stats,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    pub fn keys_flat(&self) -> &[f32] {
        &self.keys
    }

    pub fn values_flat(&self) -> &[f32] {
        &self.values
    }

    /// The stored normalized action chunk at `index`, as a `t_p x act_dim`
    /// matrix.
    pub fn value_action(&self, index: usize) -> Mat {
        let start = index * self.value_dim;
        let row = &self.values[start..start + self.value_dim];
        Mat::from_fn(self.meta.t_p, self.meta.act_dim, |r, c| {
            row[r * self.meta.act_dim + c] as f64
        })
    }

    /// Exact nearest neighbor of the raw observation window under the
    /// embedder: the argmin of squared L2 distance over all entries, ties
    /// broken toward the lowest index.
    pub fn retrieve(&self, obs: &Mat) -> Result<Retrieval> {
        let query = self.embedder.embed(obs)?;
        let mut best_idx = 0usize;
        let mut best_dist = f64::INFINITY;
        for i in 0..self.n {
            let key = &self.keys[i * self.key_dim..(i + 1) * self.key_dim];
            let mut d = 0.0f64;
            for (q, k) in query.iter().zip(key) {
                let diff = *q as f64 - *k as f64;
                d += diff * diff;
            }
            if d < best_dist {
                best_dist = d;
                best_idx = i;
            }
        }
        Ok(Retrieval {
            index: best_idx,
            action: self.value_action(best_idx),
            distance: best_dist,
        })
    }
}

/// Content hash of a dataset: episodes, seeds, and generation settings.
/// Used to tie trained models and knowledge bases back to their source.
pub fn dataset_hash(ds: &DemoDataset) -> u64 {
    let mut h = Fnv1a::new();
    h.write_bytes(ds.meta.env_id.as_bytes());
    h.write_bytes(ds.meta.expert_id.as_bytes());
    h.write_u64(ds.meta.seed);
    h.write_u64(ds.meta.noise_level.to_bits());
    h.write_u64(ds.episodes.len() as u64);
    for ep in &ds.episodes {
        h.write_u64(ep.reset_seed);
        h.write_u64(ep.observations.rows() as u64);
        h.write_u64(ep.observations.cols() as u64);
        h.write_u64(ep.actions.cols() as u64);
        for &v in ep.observations.data() {
            h.write_u64(v.to_bits());
        }
        for &v in ep.actions.data() {
            h.write_u64(v.to_bits());
        }
    }
    h.finish()
}
