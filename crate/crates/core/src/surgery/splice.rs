use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::distill::{student_dims, ActivationDataset};
use crate::error::{Error, Result};
use crate::model::{
    AttentionSite, Hooks, Seq2Seq, SiteKind, SiteOverride, SiteReplacement, TransformerCheckpoint, TransformerConfig,
};
use crate::replace::transform::flatten_rows;
use crate::replace::{ReplacementMethod, Student, StudentSet};

/// Which attention blocks an experiment replaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    EncSA,
    DecSA,
    DecCA,
    EncDecSA,
    Full,
}

impl Scope {
    pub const ALL: [Scope; 5] = [Scope::EncSA, Scope::DecSA, Scope::DecCA, Scope::EncDecSA, Scope::Full];

    pub fn kinds(self) -> &'static [SiteKind] {
        match self {
            Scope::EncSA => &[SiteKind::EncoderSelf],
            Scope::DecSA => &[SiteKind::DecoderSelf],
            Scope::DecCA => &[SiteKind::DecoderCross],
            Scope::EncDecSA => &[SiteKind::EncoderSelf, SiteKind::DecoderSelf],
            Scope::Full => &SiteKind::ALL,
        }
    }

    /// Every site the scope covers, in model order.
    pub fn sites(self, config: &TransformerConfig) -> Vec<AttentionSite> {
        config.sites().filter(|s| self.kinds().contains(&s.kind)).collect()
    }

    /// Whether `method` can be applied at every site of the scope.
    pub fn accepts(self, method: ReplacementMethod) -> bool {
        self.kinds().iter().all(|&k| method.valid_for(k))
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scope::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown scope `{s}`")))
    }
}

/// The student(s) standing in for one site.
pub struct SpliceEntry {
    pub site: AttentionSite,
    pub method: ReplacementMethod,
    /// One network, or one per head for ASLR.
    pub students: Vec<Box<dyn Student>>,
}

impl SpliceEntry {
    pub fn new(site: AttentionSite, method: ReplacementMethod, students: Vec<Box<dyn Student>>) -> Self {
        SpliceEntry { site, method, students }
    }

    /// Wraps a trained student set.
    pub fn from_set(set: StudentSet) -> Self {
        let (site, method) = (set.site(), set.method());
        SpliceEntry {
            site,
            method,
            students: set.nets.into_iter().map(|n| Box::new(n) as Box<dyn Student>).collect(),
        }
    }
}

/// A set of sites to replace, optionally labelled with the scope it realises.
pub struct SplicePlan {
    pub scope: Option<Scope>,
    entries: BTreeMap<AttentionSite, SpliceEntry>,
}

impl SplicePlan {
    /// No replacements: the spliced model is the teacher.
    pub fn empty() -> Self {
        SplicePlan {
            scope: None,
            entries: BTreeMap::new(),
        }
    }

    /// An unlabelled plan over arbitrary sites.
    pub fn custom(entries: Vec<SpliceEntry>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for e in entries {
            e.method.check_site(e.site)?;
            let site = e.site;
            if map.insert(site, e).is_some() {
                return Err(Error::Plan(format!("site {site} replaced twice")));
            }
        }
        Ok(SplicePlan {
            scope: None,
            entries: map,
        })
    }

    /// A plan that must cover exactly the sites of `scope`.
    pub fn scoped(scope: Scope, entries: Vec<SpliceEntry>, config: &TransformerConfig) -> Result<Self> {
        let mut plan = Self::custom(entries)?;
        let want = scope.sites(config);
        let have: Vec<AttentionSite> = plan.entries.keys().copied().collect();
        if want != have {
            return Err(Error::Plan(format!(
                "scope {scope} needs sites {} but the plan has {}",
                join(&want),
                join(&have)
            )));
        }
        plan.scope = Some(scope);
        Ok(plan)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sites(&self) -> Vec<AttentionSite> {
        self.entries.keys().copied().collect()
    }
}

fn join(sites: &[AttentionSite]) -> String {
    let v: Vec<String> = sites.iter().map(|s| s.to_string()).collect();
    format!("[{}]", v.join(", "))
}

/// The teacher with some attention sites served by students.
pub struct SplicedModel<'a> {
    teacher: &'a TransformerCheckpoint,
    plan: SplicePlan,
}

/// Checks the plan against the teacher and builds the hybrid model.
pub fn splice<'a>(teacher: &'a TransformerCheckpoint, teacher_hash: &str, plan: SplicePlan) -> Result<SplicedModel<'a>> {
    let config = teacher.config();
    for e in plan.entries.values() {
        e.site.check(config)?;
        let heads = if e.method == ReplacementMethod::Aslr { config.n_heads } else { 1 };
        if e.students.len() != heads {
            return Err(Error::Plan(format!(
                "{} at {} needs {heads} student(s), got {}",
                e.method,
                e.site,
                e.students.len()
            )));
        }
        let (d_in, d_out) = student_dims(config, e.site, e.method);
        for s in &e.students {
            if s.teacher_hash() != teacher_hash {
                return Err(Error::TeacherMismatch {
                    expected: teacher_hash.to_owned(),
                    found: s.teacher_hash().to_owned(),
                });
            }
            if (s.d_in(), s.d_out()) != (d_in, d_out) {
                return Err(Error::shape("splice", &[s.d_in(), s.d_out()], &[d_in, d_out]));
            }
        }
    }
    Ok(SplicedModel { teacher, plan })
}

impl SplicedModel<'_> {
    pub fn plan(&self) -> &SplicePlan {
        &self.plan
    }

    fn hooks(&self) -> Hooks<'_> {
        Hooks {
            overrides: (!self.plan.is_empty()).then_some(self as &dyn SiteOverride),
            ..Default::default()
        }
    }

    /// Runs one student over a site and returns `[len_q, d_row]` rows.
    ///
    /// Encoder sites take one pass over the whole sentence. Decoder sites take
    /// one pass per query position `t`, each seeing rows `0..=t` only, and
    /// keep row `t` of that pass.
    fn run_student(
        &self,
        student: &dyn Student,
        kind: SiteKind,
        query: &Tensor,
        memory: Option<(&Tensor, usize)>,
        col0: usize,
        d_row: usize,
    ) -> Result<Tensor> {
        let max_len = self.teacher.config().max_len;
        let (len, d) = (query.rows(), query.cols());
        if len > max_len {
            return Err(Error::SequenceTooLong { len, max_len });
        }
        let q = select_columns(&query.data(), d, len, col0, d_row);
        if kind == SiteKind::EncoderSelf {
            let x = Tensor::new(flatten_rows(&q, d_row, len, max_len), &[1, max_len * d_row])?;
            let out = student.forward(&x)?;
            return Tensor::new(out.data()[..len * d_row].to_vec(), &[len, d_row]);
        }
        let mem_half = match memory {
            Some((m, valid)) => {
                let cols = select_columns(&m.data(), d, valid, col0, d_row);
                Some(flatten_rows(&cols, d_row, valid, max_len))
            }
            None => None,
        };
        let width = max_len * d_row;
        let d_in = width * if mem_half.is_some() { 2 } else { 1 };
        let mut input = Vec::with_capacity(len * d_in);
        for t in 0..len {
            if let Some(h) = &mem_half {
                input.extend_from_slice(h);
            }
            input.extend(flatten_rows(&q, d_row, t + 1, max_len));
        }
        let out = student.forward(&Tensor::new(input, &[len, d_in])?)?;
        let out = out.data();
        let rows: Vec<f32> = (0..len)
            .flat_map(|t| out[t * width + t * d_row..t * width + (t + 1) * d_row].iter().copied())
            .collect();
        Tensor::new(rows, &[len, d_row])
    }
}

fn select_columns(src: &[f32], d: usize, rows: usize, c0: usize, w: usize) -> Vec<f32> {
    (0..rows).flat_map(|r| src[r * d + c0..r * d + c0 + w].iter().copied()).collect()
}

impl SiteOverride for SplicedModel<'_> {
    fn method_at(&self, site: AttentionSite) -> Option<ReplacementMethod> {
        self.plan.entries.get(&site).map(|e| e.method)
    }

    fn replace(
        &self,
        site: AttentionSite,
        query: &Tensor,
        _query_valid: usize,
        memory: Option<(&Tensor, usize)>,
    ) -> Result<SiteReplacement> {
        let e = self
            .plan
            .entries
            .get(&site)
            .ok_or_else(|| Error::Plan(format!("no replacement planned at {site}")))?;
        let d = query.cols();
        if e.method == ReplacementMethod::Aslr {
            let dh = d / e.students.len();
            let heads = e
                .students
                .iter()
                .enumerate()
                .map(|(h, s)| self.run_student(s.as_ref(), site.kind, query, memory, h * dh, dh))
                .collect::<Result<Vec<_>>>()?;
            Ok(SiteReplacement::Heads(heads))
        } else {
            Ok(SiteReplacement::Output(self.run_student(
                e.students[0].as_ref(),
                site.kind,
                query,
                memory,
                0,
                d,
            )?))
        }
    }
}

impl Seq2Seq for SplicedModel<'_> {
    fn config(&self) -> &TransformerConfig {
        self.teacher.config()
    }

    fn encode(&self, src: &[u32]) -> Result<Tensor> {
        self.teacher.model.encode(src, src.len(), &mut self.hooks())
    }

    fn decode_logits(&self, memory: &Tensor, src_valid: usize, tgt_in: &[u32]) -> Result<Tensor> {
        self.teacher.model.decode(memory, src_valid, tgt_in, &mut self.hooks())
    }
}

/// A lookup "student" that returns the captured teacher target for any input
/// it has seen. Splicing it checks the wiring of a method independently of
/// how well anything was learned.
pub struct ReplayStudent {
    d_in: usize,
    d_out: usize,
    teacher_hash: String,
    table: HashMap<Vec<u32>, Vec<f32>>,
}

impl ReplayStudent {
    pub fn from_dataset(data: &ActivationDataset, stream: usize) -> Self {
        let h = &data.header;
        let mut table = HashMap::with_capacity(data.len());
        for i in 0..data.len() {
            let r = data.record(stream, i);
            table.insert(r.input.iter().map(|v| v.to_bits()).collect(), r.target);
        }
        ReplayStudent {
            d_in: h.d_in,
            d_out: h.d_out,
            teacher_hash: h.teacher_hash.clone(),
            table,
        }
    }

    /// One replay student per stream, ready to splice.
    pub fn entry(data: &ActivationDataset) -> SpliceEntry {
        let students = (0..data.streams())
            .map(|k| Box::new(ReplayStudent::from_dataset(data, k)) as Box<dyn Student>)
            .collect();
        SpliceEntry::new(data.header.site, data.header.method, students)
    }
}

impl Student for ReplayStudent {
    fn d_in(&self) -> usize {
        self.d_in
    }

    fn d_out(&self) -> usize {
        self.d_out
    }

    fn teacher_hash(&self) -> &str {
        &self.teacher_hash
    }

    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let rows = input.rows();
        let data = input.data();
        let mut out = Vec::with_capacity(rows * self.d_out);
        for r in 0..rows {
            let key: Vec<u32> = data[r * self.d_in..(r + 1) * self.d_in].iter().map(|v| v.to_bits()).collect();
            let target = self
                .table
                .get(&key)
                .ok_or_else(|| Error::Plan("replay student saw an input it never captured".into()))?;
            out.extend_from_slice(target);
        }
        Tensor::new(out, &[rows, self.d_out])
    }
}
