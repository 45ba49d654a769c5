use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::no_grad;
use crate::container::{self, NamedArray};
use crate::data::ParallelCorpus;
use crate::error::{Error, Result};
use crate::model::{
    ActivationTap, AttentionSite, Hooks, SiteActivations, SiteKind, TransformerCheckpoint, TransformerConfig,
};
use crate::replace::transform::flatten_rows;
use crate::replace::ReplacementMethod;

pub const DATASET_FORMAT: &str = "attentionless/activations";

/// One materialised input/target pair, flattened and zero-padded.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub sentence: usize,
    /// Last query row the record covers; the full sentence for encoder sites.
    pub position: usize,
    pub input: Vec<f32>,
    pub target: Vec<f32>,
    /// Real target rows; everything after `valid_rows · d_row` is padding.
    pub valid_rows: usize,
}

/// Shape and provenance of a captured dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub site: AttentionSite,
    pub method: ReplacementMethod,
    /// One target stream per student: `n_heads` for ASLR, else 1.
    pub streams: usize,
    pub d_model: usize,
    pub max_len: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub teacher_hash: String,
    pub corpus_hash: String,
    /// Query rows per captured sentence.
    pub query_lens: Vec<usize>,
    /// Encoder rows per sentence, cross sites only.
    pub memory_lens: Vec<usize>,
}

impl DatasetHeader {
    /// Width of one row as a student sees it.
    pub fn d_row(&self) -> usize {
        self.d_model / self.streams
    }

    /// Decoder sites produce one record per target position.
    pub fn per_position(&self) -> bool {
        self.site.kind.is_decoder()
    }

    pub fn is_cross(&self) -> bool {
        self.site.kind == SiteKind::DecoderCross
    }
}

/// Teacher activations at one site under one method's abstraction level.
///
/// Sentences are stored once, unpadded; records are expanded on demand so a
/// decoder sentence of length `n` costs `n` rows rather than `n` padded
/// vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDataset {
    pub header: DatasetHeader,
    /// `[Σ query_lens, d_model]`
    query: Vec<f32>,
    /// `[Σ memory_lens, d_model]`
    memory: Vec<f32>,
    /// Per stream, `[Σ query_lens, d_row]`.
    targets: Vec<Vec<f32>>,
    query_off: Vec<usize>,
    memory_off: Vec<usize>,
    records: Vec<(usize, usize)>,
}

fn offsets(lens: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(lens.len());
    let mut acc = 0;
    for &l in lens {
        off.push(acc);
        acc += l;
    }
    off
}

/// Copies columns `c0..c0 + w` of `rows` consecutive rows of width `d`.
fn columns(src: &[f32], d: usize, rows: usize, c0: usize, w: usize) -> Vec<f32> {
    if c0 == 0 && w == d {
        return src[..rows * d].to_vec();
    }
    (0..rows).flat_map(|r| src[r * d + c0..r * d + c0 + w].iter().copied()).collect()
}

impl ActivationDataset {
    fn empty(header: DatasetHeader) -> Self {
        let streams = header.streams;
        ActivationDataset {
            header,
            query: Vec::new(),
            memory: Vec::new(),
            targets: vec![Vec::new(); streams],
            query_off: Vec::new(),
            memory_off: Vec::new(),
            records: Vec::new(),
        }
    }

    fn records_for(&self, query_len: usize) -> usize {
        if self.header.per_position() {
            query_len
        } else {
            1
        }
    }

    fn push_sentence(&mut self, act: &SiteActivations, method: ReplacementMethod) -> Result<()> {
        let s = self.header.query_lens.len();
        let len = act.block_input.rows();
        let d = self.header.d_model;
        if act.query_valid != len {
            return Err(Error::invalid("capture", "captured sentences must be unpadded"));
        }
        self.query_off.push(self.query.len() / d);
        self.query.extend_from_slice(&act.block_input.data());
        self.header.query_lens.push(len);
        if self.header.is_cross() {
            let (mem, valid) = act.memory.as_ref().ok_or_else(|| Error::invalid("capture", "cross site without memory"))?;
            self.memory_off.push(self.memory.len() / d);
            self.memory.extend_from_slice(&mem.data()[..valid * d]);
            self.header.memory_lens.push(*valid);
        }
        match method {
            ReplacementMethod::Alr => self.targets[0].extend_from_slice(&act.mha_out.data()),
            ReplacementMethod::Alrr => self.targets[0].extend_from_slice(&act.residual_sum.data()),
            ReplacementMethod::Elr => {
                let out = act.layer_out.as_ref().ok_or_else(|| Error::InvalidMethod { method, site: act.site })?;
                self.targets[0].extend_from_slice(&out.data());
            }
            ReplacementMethod::Aslr => {
                for (h, head) in act.heads.iter().enumerate() {
                    self.targets[h].extend_from_slice(&head.data());
                }
            }
        }
        if self.header.per_position() {
            self.records.extend((0..len).map(|t| (s, t)));
        } else {
            self.records.push((s, len - 1));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_sentences(&self) -> usize {
        self.header.query_lens.len()
    }

    pub fn streams(&self) -> usize {
        self.header.streams
    }

    /// Block input rows of sentence `s`, full model width.
    pub fn block_input(&self, s: usize) -> &[f32] {
        let d = self.header.d_model;
        let o = self.query_off[s] * d;
        &self.query[o..o + self.header.query_lens[s] * d]
    }

    /// Target rows of sentence `s` for one stream.
    pub fn target_rows(&self, stream: usize, s: usize) -> &[f32] {
        let d = self.header.d_row();
        let o = self.query_off[s] * d;
        &self.targets[stream][o..o + self.header.query_lens[s] * d]
    }

    /// Writes record `i` of `stream` into the provided buffers (lengths
    /// `d_in` and `d_out`) and returns its count of real target rows.
    pub fn fill(&self, stream: usize, i: usize, input: &mut [f32], target: &mut [f32]) -> usize {
        let h = &self.header;
        let (s, t) = self.records[i];
        let (d, dr, ml) = (h.d_model, h.d_row(), h.max_len);
        let rows = t + 1;
        input.fill(0.0);
        target.fill(0.0);
        let q = self.block_input(s);
        let mut at = 0;
        if h.is_cross() {
            let mo = self.memory_off[s] * d;
            let mem_len = h.memory_lens[s];
            let mem = &self.memory[mo..mo + mem_len * d];
            write_columns(mem, d, mem_len, stream * dr, dr, &mut input[..ml * dr]);
            at = ml * dr;
        }
        write_columns(q, d, rows, stream * dr, dr, &mut input[at..at + ml * dr]);
        target[..rows * dr].copy_from_slice(&self.target_rows(stream, s)[..rows * dr]);
        rows
    }

    pub fn record(&self, stream: usize, i: usize) -> ActivationRecord {
        let mut input = vec![0.0; self.header.d_in];
        let mut target = vec![0.0; self.header.d_out];
        let valid_rows = self.fill(stream, i, &mut input, &mut target);
        let (sentence, position) = self.records[i];
        ActivationRecord {
            sentence,
            position,
            input,
            target,
            valid_rows,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let d = self.header.d_model;
        let rows = self.query.len() / d;
        let mut arrays = vec![NamedArray::new("query", vec![rows, d], self.query.clone())];
        if self.header.is_cross() {
            arrays.push(NamedArray::new("memory", vec![self.memory.len() / d, d], self.memory.clone()));
        }
        for (k, t) in self.targets.iter().enumerate() {
            arrays.push(NamedArray::new(format!("target.{k}"), vec![rows, self.header.d_row()], t.clone()));
        }
        container::encode(&self.header, &arrays)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut arrays): (DatasetHeader, _) = container::decode(bytes)?;
        if header.format != DATASET_FORMAT {
            return Err(Error::Format(format!("expected {DATASET_FORMAT}, found {}", header.format)));
        }
        let mut ds = ActivationDataset::empty(header.clone());
        ds.query = container::take_named(&mut arrays, "query")?.data;
        if header.is_cross() {
            ds.memory = container::take_named(&mut arrays, "memory")?.data;
        }
        for k in 0..header.streams {
            ds.targets[k] = container::take_named(&mut arrays, &format!("target.{k}"))?.data;
        }
        let rows: usize = header.query_lens.iter().sum();
        let mem_rows: usize = header.memory_lens.iter().sum();
        if ds.query.len() != rows * header.d_model
            || ds.memory.len() != mem_rows * header.d_model
            || ds.targets.iter().any(|t| t.len() != rows * header.d_row())
        {
            return Err(Error::Format("activation arrays disagree with header lengths".into()));
        }
        ds.query_off = offsets(&header.query_lens);
        ds.memory_off = offsets(&header.memory_lens);
        for (s, &len) in header.query_lens.iter().enumerate() {
            if header.per_position() {
                ds.records.extend((0..len).map(|t| (s, t)));
            } else {
                ds.records.push((s, len - 1));
            }
        }
        Ok(ds)
    }

    /// Writes the dataset and returns the file's sha256.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(container::sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_columns(src: &[f32], d: usize, rows: usize, c0: usize, w: usize, out: &mut [f32]) {
    let cols = columns(src, d, rows, c0, w);
    let max_rows = out.len() / w;
    out.copy_from_slice(&flatten_rows(&cols, w, rows, max_rows));
}

/// How much of the corpus to capture.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CaptureOptions {
    /// Stop adding sentences to a dataset once another would push its record
    /// count past this limit.
    pub max_records: Option<usize>,
}

/// Input and output dimensions a student at `site` under `method` sees.
pub fn student_dims(config: &TransformerConfig, site: AttentionSite, method: ReplacementMethod) -> (usize, usize) {
    let heads = if method == ReplacementMethod::Aslr { config.n_heads } else { 1 };
    let width = config.max_len * (config.d_model / heads);
    let d_in = if site.kind == SiteKind::DecoderCross { 2 * width } else { width };
    (d_in, width)
}

#[derive(Default)]
struct SiteTap {
    wanted: Vec<AttentionSite>,
    seen: HashMap<AttentionSite, SiteActivations>,
}

impl ActivationTap for SiteTap {
    fn record(&mut self, act: SiteActivations) {
        if self.wanted.contains(&act.site) {
            self.seen.insert(act.site, act);
        }
    }
}

/// Captures several (site, method) datasets from a single teacher pass per
/// sentence. Sentences are taken in corpus order; every dataset holds a prefix
/// of the corpus.
pub fn capture_many(
    teacher: &TransformerCheckpoint,
    corpus: &ParallelCorpus,
    requests: &[(AttentionSite, ReplacementMethod)],
    opts: &CaptureOptions,
) -> Result<Vec<ActivationDataset>> {
    let config = teacher.config();
    for &(site, method) in requests {
        method.check_site(site)?;
        site.check(config)?;
    }
    let teacher_hash = teacher.hash()?;
    let corpus_hash = corpus.content_hash();
    let mut sets: Vec<ActivationDataset> = requests
        .iter()
        .map(|&(site, method)| {
            let (d_in, d_out) = student_dims(config, site, method);
            ActivationDataset::empty(DatasetHeader {
                format: DATASET_FORMAT.into(),
                version: 1,
                site,
                method,
                streams: if method == ReplacementMethod::Aslr { config.n_heads } else { 1 },
                d_model: config.d_model,
                max_len: config.max_len,
                d_in,
                d_out,
                teacher_hash: teacher_hash.clone(),
                corpus_hash: corpus_hash.clone(),
                query_lens: Vec::new(),
                memory_lens: Vec::new(),
            })
        })
        .collect();
    let mut open = vec![true; requests.len()];
    let mut tap = SiteTap {
        wanted: requests.iter().map(|r| r.0).collect(),
        ..Default::default()
    };
    for pair in &corpus.pairs {
        let (src, tgt_in) = (pair.src_ids(), pair.tgt_in());
        for (k, ds) in sets.iter().enumerate() {
            let qlen = if ds.header.per_position() { tgt_in.len() } else { src.len() };
            if let Some(cap) = opts.max_records {
                if ds.len() + ds.records_for(qlen) > cap {
                    open[k] = false;
                }
            }
        }
        if !open.iter().any(|&o| o) {
            break;
        }
        tap.seen.clear();
        no_grad(|| {
            let mut hooks = Hooks {
                tap: Some(&mut tap),
                ..Default::default()
            };
            teacher.model.forward(&src, &tgt_in, &mut hooks)
        })?;
        for (k, ds) in sets.iter_mut().enumerate() {
            if open[k] {
                let act = &tap.seen[&requests[k].0];
                ds.push_sentence(act, requests[k].1)?;
            }
        }
    }
    Ok(sets)
}

/// Captures the dataset for one student site.
pub fn capture_activations(
    teacher: &TransformerCheckpoint,
    corpus: &ParallelCorpus,
    site: AttentionSite,
    method: ReplacementMethod,
    opts: &CaptureOptions,
) -> Result<ActivationDataset> {
    Ok(capture_many(teacher, corpus, &[(site, method)], opts)?.remove(0))
}

/// Counts elements where `ALRR target ≠ ALR target + block input` in f32.
/// Both datasets must come from the same site, teacher and sentences.
pub fn residual_identity_violations(alr: &ActivationDataset, alrr: &ActivationDataset) -> Result<usize> {
    let (a, b) = (&alr.header, &alrr.header);
    if a.method != ReplacementMethod::Alr || b.method != ReplacementMethod::Alrr {
        return Err(Error::invalid("residual_identity", "expected an ALR and an ALRR dataset"));
    }
    if a.site != b.site || a.teacher_hash != b.teacher_hash || a.query_lens != b.query_lens {
        return Err(Error::invalid("residual_identity", "datasets were not captured together"));
    }
    Ok(alr.targets[0]
        .iter()
        .zip(&alrr.targets[0])
        .zip(&alr.query)
        .filter(|((&mha, &sum), &x)| x + mha != sum)
        .count())
}
