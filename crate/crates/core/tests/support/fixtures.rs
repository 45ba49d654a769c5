//! Small corpora, teachers and checks shared by the integration tests and
//! the acceptance run.
#![allow(dead_code)]

use attentionless::autograd::no_grad;
use attentionless::data::{generate_synthetic, ParallelCorpus, SyntheticTask, SyntheticTaskSpec};
use attentionless::distill::{capture_many, ActivationDataset, CaptureOptions};
use attentionless::model::{
    logits, AttentionSite, Hooks, TrainingMeta, Transformer, TransformerCheckpoint, TransformerConfig,
};
use attentionless::replace::ReplacementMethod;
use attentionless::surgery::{splice, ReplayStudent, Scope, SplicePlan};
use attentionless::Result;

pub fn cipher(n_train: usize, n_test: usize, seed: u64) -> (ParallelCorpus, ParallelCorpus) {
    let spec = SyntheticTaskSpec {
        task: SyntheticTask::Cipher,
        vocab_size: 16,
        min_len: 2,
        max_len: 7,
        n_train,
        n_test,
        seed,
    };
    generate_synthetic(&spec).unwrap()
}

pub fn tiny_config() -> TransformerConfig {
    TransformerConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 2,
        d_ff_inner: 16,
        max_len: 10,
        dropout: 0.0,
        ..Default::default()
    }
}

/// An untrained teacher sized for `corpus`.
pub fn random_teacher(corpus: &ParallelCorpus, config: TransformerConfig, seed: u64) -> TransformerCheckpoint {
    let config = TransformerConfig {
        src_vocab: corpus.src_vocab.len(),
        tgt_vocab: corpus.tgt_vocab.len(),
        ..config
    };
    TransformerCheckpoint {
        model: Transformer::init(config, seed).unwrap(),
        src_vocab: corpus.src_vocab.clone(),
        tgt_vocab: corpus.tgt_vocab.clone(),
        meta: TrainingMeta {
            epochs: 0,
            final_loss: f32::NAN,
            seed,
            lr: 0.0,
            batch_size: 0,
            loss_curve: Vec::new(),
            init: "glorot".into(),
        },
    }
}

pub fn teacher_logits(teacher: &TransformerCheckpoint, src: &[u32], tgt_in: &[u32]) -> Vec<f32> {
    no_grad(|| teacher.model.forward(src, tgt_in, &mut Hooks::default()).unwrap().to_vec())
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

/// Splices replay students for `method` at every site of `scope` and
/// returns the largest logit deviation from the teacher over `corpus`.
pub fn replay_deviation(
    teacher: &TransformerCheckpoint,
    corpus: &ParallelCorpus,
    scope: Scope,
    method: ReplacementMethod,
) -> Result<f32> {
    let hash = teacher.hash()?;
    let requests: Vec<(AttentionSite, ReplacementMethod)> =
        scope.sites(teacher.config()).into_iter().map(|s| (s, method)).collect();
    let data: Vec<ActivationDataset> = capture_many(teacher, corpus, &requests, &CaptureOptions::default())?;
    let entries = data.iter().map(ReplayStudent::entry).collect();
    let model = splice(teacher, &hash, SplicePlan::scoped(scope, entries, teacher.config())?)?;
    let mut worst = 0f32;
    for p in &corpus.pairs {
        let (src, tgt_in) = (p.src_ids(), p.tgt_in());
        let want = teacher_logits(teacher, &src, &tgt_in);
        let got = logits(&model, &src, &tgt_in)?.to_vec();
        worst = worst.max(max_abs_diff(&want, &got));
    }
    Ok(worst)
}

/// Every (scope, method) pair exercised by the wiring oracle: all four
/// methods, each at every site kind it is valid for.
pub fn replay_cases() -> Vec<(Scope, ReplacementMethod)> {
    let mut cases = Vec::new();
    for method in ReplacementMethod::ALL {
        for scope in [Scope::EncSA, Scope::DecSA, Scope::DecCA] {
            if scope.accepts(method) {
                cases.push((scope, method));
            }
        }
    }
    cases
}

/// A run configuration small enough to push through every stage in seconds.
pub const TINY_RUN: &str = r#"
seed = 11
ladder_scale = 0.001

[model]
d_model = 8
n_heads = 2
n_layers = 1
d_ff_inner = 16
max_len = 10
dropout = 0.0

[teacher]
epochs = 6
lr = 0.01
batch_size = 8

[distill]
epochs = 3
lr = 0.001
batch_size = 16

[eval]
max_sentences = 10

[[grid]]
methods = ["ALR", "ALRR", "ASLR", "ELR"]
scopes = ["EncSA"]
sizes = ["XS", "S", "M", "L"]

[data]
kind = "synthetic"
task = "cipher"
vocab_size = 16
min_len = 2
max_len = 7
n_train = 150
n_test = 10
seed = 3
"#;

/// Runs the binary's entry point with `args` and returns its exit code.
pub fn cli(config: &std::path::Path, root: &std::path::Path, args: &[&str]) -> i32 {
    let mut argv = vec![
        "attentionless".to_owned(),
        "--config".into(),
        config.display().to_string(),
        "--run-root".into(),
        root.display().to_string(),
    ];
    argv.extend(args.iter().map(|s| s.to_string()));
    attentionless::cli::main_with_args(argv)
}

/// Every stage in order; returns the run directory.
pub fn full_pipeline(config: &std::path::Path, root: &std::path::Path, extra: &[&str]) -> std::path::PathBuf {
    for stage in [&["train-teacher"][..], &["capture"], &["distill"], &["splice"], &["eval"], &["report"]] {
        let args: Vec<&str> = extra.iter().chain(stage).copied().collect();
        assert_eq!(cli(config, root, &args), 0, "stage {stage:?} failed");
    }
    let mut dirs: Vec<_> = std::fs::read_dir(root).unwrap().map(|d| d.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs.pop().unwrap()
}
