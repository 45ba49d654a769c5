use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cli::config::{expand_grid, RunConfig};
use crate::container::sha256_hex;
use crate::data::ParallelCorpus;
use crate::distill::{capture_many, distill_students, ActivationDataset};
use crate::error::{Error, Result};
use crate::model::{train_teacher, AttentionSite, SiteKind, TransformerCheckpoint};
use crate::replace::{ReplacementMethod, SizeLabel, StudentSet};
use crate::surgery::{evaluate, relative_report, splice, BleuReport, BleuRow, Experiment, Scope, SpliceEntry, SplicePlan};

/// Narrows a stage to part of the grid. A fully specified selector names a
/// single experiment even when the grid does not list it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Selector {
    pub method: Option<ReplacementMethod>,
    pub scope: Option<Scope>,
    pub size: Option<SizeLabel>,
}

impl Selector {
    pub fn all() -> Self {
        Selector::default()
    }

    pub fn one(scope: Scope, method: ReplacementMethod, size: SizeLabel) -> Self {
        Selector {
            method: Some(method),
            scope: Some(scope),
            size: Some(size),
        }
    }

    fn matches(&self, e: &Experiment) -> bool {
        self.method.map_or(true, |m| m == e.method)
            && self.scope.map_or(true, |s| s == e.scope)
            && self.size.map_or(true, |z| z == e.size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    site: AttentionSite,
    student_file: String,
    sha256: String,
}

/// What `splice` verified and `eval` will rebuild.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SpliceManifest {
    experiment: Experiment,
    teacher_hash: String,
    entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BaselineRecord {
    corpus: String,
    bleu: f64,
    teacher_hash: String,
}

/// A run directory bound to one effective configuration.
///
/// Every stage reads its inputs from and writes its outputs to the directory;
/// running a stage twice rewrites identical bytes.
pub struct Run {
    pub config: RunConfig,
    pub config_hash: String,
    pub dir: PathBuf,
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path, what: &str) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::Config(format!("missing {what} at {}; run the earlier stage first", path.display())));
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn experiment_key(e: &Experiment) -> String {
    format!("{}.{}.{}", e.scope, e.method, e.size)
}

impl Run {
    /// Creates the run directory and records the effective configuration.
    pub fn open(config: RunConfig) -> Result<Self> {
        let config_hash = config.hash()?;
        let dir = config.run_dir()?;
        write(&dir.join("config.toml"), config.to_toml()?.as_bytes())?;
        write(&dir.join("grid.txt"), config.grid_summary().as_bytes())?;
        Ok(Run {
            config,
            config_hash,
            dir,
        })
    }

    pub fn teacher_path(&self) -> PathBuf {
        self.dir.join("teacher.ckpt")
    }

    pub fn dataset_path(&self, site: AttentionSite, method: ReplacementMethod) -> PathBuf {
        self.dir.join("activations").join(format!("{site}.{method}.act"))
    }

    pub fn student_path(&self, site: AttentionSite, method: ReplacementMethod, size: SizeLabel) -> PathBuf {
        self.dir.join("students").join(format!("{site}.{method}.{size}.ffn"))
    }

    fn manifest_path(&self, e: &Experiment) -> PathBuf {
        self.dir.join("splices").join(format!("{}.json", experiment_key(e)))
    }

    fn eval_path(&self, e: &Experiment) -> PathBuf {
        self.dir.join("evals").join(format!("{}.json", experiment_key(e)))
    }

    fn baseline_path(&self) -> PathBuf {
        self.dir.join("evals").join("baseline.json")
    }

    pub fn report_paths(&self) -> [PathBuf; 3] {
        [self.dir.join("report.csv"), self.dir.join("relative.csv"), self.dir.join("report.txt")]
    }

    pub fn corpora(&self) -> Result<(ParallelCorpus, ParallelCorpus)> {
        self.config.data.load(self.config.model.max_len)
    }

    pub fn load_teacher(&self) -> Result<(TransformerCheckpoint, String)> {
        let bytes = read(&self.teacher_path(), "teacher checkpoint")?;
        Ok((TransformerCheckpoint::from_bytes(&bytes)?, sha256_hex(&bytes)))
    }

    /// Grid experiments picked by `sel`.
    pub fn experiments(&self, sel: &Selector) -> Vec<Experiment> {
        if let (Some(method), Some(scope), Some(size)) = (sel.method, sel.scope, sel.size) {
            if scope.accepts(method) {
                return vec![Experiment { scope, method, size }];
            }
        }
        expand_grid(&self.config.grid).0.into_iter().filter(|e| sel.matches(e)).collect()
    }

    fn sites_for(&self, e: &Experiment) -> Vec<AttentionSite> {
        e.scope.sites(&self.config.model)
    }

    /// Trains the teacher and returns its file hash.
    pub fn train_teacher(&self, mut on_epoch: impl FnMut(usize, f32)) -> Result<String> {
        let (train, _) = self.corpora()?;
        let mut log = String::new();
        let ckpt = train_teacher(&train, self.config.model.clone(), &self.config.teacher, |e, l| {
            log.push_str(&format!("epoch {e} loss {l:.6}\n"));
            on_epoch(e, l);
        })?;
        let hash = ckpt.save(&self.teacher_path())?;
        write(&self.dir.join("teacher.log"), log.as_bytes())?;
        Ok(hash)
    }

    /// Captures every dataset the selected experiments need.
    pub fn capture(&self, sel: &Selector) -> Result<Vec<PathBuf>> {
        let (teacher, _) = self.load_teacher()?;
        let (train, _) = self.corpora()?;
        let mut wanted = BTreeSet::new();
        for e in self.experiments(sel) {
            for site in self.sites_for(&e) {
                wanted.insert((site, e.method));
            }
        }
        let mut written = Vec::new();
        for decoder in [false, true] {
            let reqs: Vec<_> = wanted.iter().copied().filter(|(s, _)| s.kind.is_decoder() == decoder).collect();
            if reqs.is_empty() {
                continue;
            }
            let kind = if decoder { SiteKind::DecoderSelf } else { SiteKind::EncoderSelf };
            let sets = capture_many(&teacher, &train, &reqs, &self.config.capture.options(kind))?;
            for (ds, (site, method)) in sets.iter().zip(&reqs) {
                let path = self.dataset_path(*site, *method);
                ds.save(&path)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    /// Trains every student the selected experiments need, `jobs` at a time.
    pub fn distill(&self, sel: &Selector, jobs: usize) -> Result<Vec<PathBuf>> {
        let (teacher, teacher_hash) = self.load_teacher()?;
        let model_config = teacher.config().clone();
        let mut wanted = BTreeSet::new();
        for e in self.experiments(sel) {
            for site in self.sites_for(&e) {
                wanted.insert((site, e.method, e.size));
            }
        }
        let wanted: Vec<_> = wanted.into_iter().collect();
        let one = |&(site, method, size): &(AttentionSite, ReplacementMethod, SizeLabel)| -> Result<PathBuf> {
            let bytes = read(&self.dataset_path(site, method), "activation dataset")?;
            let data = ActivationDataset::from_bytes(&bytes)?;
            if data.header.teacher_hash != teacher_hash {
                return Err(Error::TeacherMismatch {
                    expected: teacher_hash.clone(),
                    found: data.header.teacher_hash.clone(),
                });
            }
            let class = self.config.ladder().size(method, size);
            let set = distill_students(&data, class, &model_config, &self.config.distill, |_, _, _| {})?;
            let path = self.student_path(site, method, size);
            set.save(&path)?;
            Ok(path)
        };
        let jobs = jobs.max(1);
        if jobs == 1 {
            return wanted.iter().map(one).collect();
        }
        let results: Vec<Vec<(usize, Result<PathBuf>)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let (wanted, one) = (&wanted, &one);
                    s.spawn(move || {
                        (j..wanted.len()).step_by(jobs).map(|i| (i, one(&wanted[i]))).collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("distill worker panicked")).collect()
        });
        let mut flat: Vec<_> = results.into_iter().flatten().collect();
        flat.sort_by_key(|(i, _)| *i);
        flat.into_iter().map(|(_, r)| r).collect()
    }

    fn plan_for(&self, e: &Experiment, teacher_hash: &str) -> Result<(SplicePlan, SpliceManifest)> {
        let mut entries = Vec::new();
        let mut manifest = Vec::new();
        for site in self.sites_for(e) {
            let path = self.student_path(site, e.method, e.size);
            let bytes = read(&path, "student")?;
            let set = StudentSet::from_bytes(&bytes)?;
            if set.teacher_hash() != teacher_hash {
                return Err(Error::TeacherMismatch {
                    expected: teacher_hash.to_owned(),
                    found: set.teacher_hash().to_owned(),
                });
            }
            manifest.push(ManifestEntry {
                site,
                student_file: path.strip_prefix(&self.dir).unwrap_or(&path).display().to_string(),
                sha256: sha256_hex(&bytes),
            });
            entries.push(SpliceEntry::from_set(set));
        }
        let plan = SplicePlan::scoped(e.scope, entries, &self.config.model)?;
        Ok((
            plan,
            SpliceManifest {
                experiment: *e,
                teacher_hash: teacher_hash.to_owned(),
                entries: manifest,
            },
        ))
    }

    /// Builds and checks each selected hybrid model, writing a manifest of
    /// the exact student files it used.
    pub fn splice(&self, sel: &Selector) -> Result<Vec<PathBuf>> {
        let (teacher, teacher_hash) = self.load_teacher()?;
        let mut written = Vec::new();
        for e in self.experiments(sel) {
            let (plan, manifest) = self.plan_for(&e, &teacher_hash)?;
            splice(&teacher, &teacher_hash, plan)?;
            let path = self.manifest_path(&e);
            write(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }

    /// Scores the teacher, then every selected spliced model.
    pub fn eval(&self, sel: &Selector) -> Result<Vec<BleuRow>> {
        let (teacher, teacher_hash) = self.load_teacher()?;
        let (_, test) = self.corpora()?;
        let test = match self.config.eval.max_sentences {
            Some(n) => test.head(n),
            None => test,
        };
        let corpus = self.config.data.corpus_name();
        let max_decode = self.config.max_decode_len();
        let base = evaluate(&teacher, &test, max_decode)?;
        let record = BaselineRecord {
            corpus: corpus.clone(),
            bleu: base.bleu,
            teacher_hash: teacher_hash.clone(),
        };
        write(&self.baseline_path(), serde_json::to_string_pretty(&record)?.as_bytes())?;
        let mut rows = Vec::new();
        for e in self.experiments(sel) {
            let bytes = read(&self.manifest_path(&e), "splice manifest")?;
            let manifest: SpliceManifest = serde_json::from_slice(&bytes)?;
            if manifest.teacher_hash != teacher_hash {
                return Err(Error::TeacherMismatch {
                    expected: teacher_hash.clone(),
                    found: manifest.teacher_hash,
                });
            }
            let (plan, fresh) = self.plan_for(&e, &teacher_hash)?;
            if fresh.entries != manifest.entries {
                return Err(Error::Plan(format!(
                    "students for {} changed since splice; re-run splice",
                    experiment_key(&e)
                )));
            }
            let model = splice(&teacher, &teacher_hash, plan)?;
            let result = evaluate(&model, &test, max_decode)?;
            let row = BleuRow {
                experiment: e,
                corpus: corpus.clone(),
                absolute_bleu: result.bleu,
                config_hash: self.config_hash.clone(),
                teacher_hash: teacher_hash.clone(),
                seed: self.config.seed,
            };
            write(&self.eval_path(&e), serde_json::to_string_pretty(&row)?.as_bytes())?;
            rows.push(row);
        }
        Ok(rows)
    }

    /// Collects every evaluation row in the run directory into the report
    /// files.
    pub fn report(&self) -> Result<BleuReport> {
        let (_, teacher_hash) = self.load_teacher()?;
        let base: BaselineRecord = serde_json::from_slice(&read(&self.baseline_path(), "baseline evaluation")?)?;
        if base.teacher_hash != teacher_hash {
            return Err(Error::TeacherMismatch {
                expected: teacher_hash,
                found: base.teacher_hash,
            });
        }
        let mut rows = Vec::new();
        let evals = self.dir.join("evals");
        if evals.is_dir() {
            let mut paths: Vec<PathBuf> = fs::read_dir(&evals)
                .map_err(|e| Error::io(&evals, e))?
                .filter_map(|d| d.ok().map(|d| d.path()))
                .filter(|p| p != &self.baseline_path() && p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for p in paths {
                let row: BleuRow = serde_json::from_slice(&fs::read(&p).map_err(|e| Error::io(&p, e))?)?;
                if row.teacher_hash != teacher_hash {
                    return Err(Error::TeacherMismatch {
                        expected: teacher_hash,
                        found: row.teacher_hash,
                    });
                }
                rows.push(row);
            }
        }
        let baselines = BTreeMap::from([(base.corpus, base.bleu)]);
        let report = relative_report(&rows, &baselines)?;
        let [csv, rel, txt] = self.report_paths();
        write(&csv, report.to_csv().as_bytes())?;
        write(&rel, report.averaged_csv().as_bytes())?;
        write(&txt, report.to_text().as_bytes())?;
        Ok(report)
    }
}
