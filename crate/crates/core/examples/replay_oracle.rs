//! Splice "students" that replay captured teacher activations and confirm
//! the hybrid reproduces the teacher's logits for every method. This checks
//! the splice wiring without any learning involved.

use attentionless::data::{generate_synthetic, SyntheticTask, SyntheticTaskSpec};
use attentionless::distill::{capture_many, CaptureOptions};
use attentionless::model::{logits, TrainingMeta, Transformer, TransformerCheckpoint, TransformerConfig};
use attentionless::replace::ReplacementMethod;
use attentionless::surgery::{splice, ReplayStudent, Scope, SplicePlan};

fn main() -> attentionless::Result<()> {
    let spec = SyntheticTaskSpec {
        task: SyntheticTask::Reverse,
        vocab_size: 20,
        min_len: 2,
        max_len: 8,
        n_train: 25,
        n_test: 0,
        seed: 1,
    };
    let (corpus, _) = generate_synthetic(&spec)?;
    let config = TransformerConfig {
        d_model: 16,
        n_heads: 4,
        n_layers: 2,
        d_ff_inner: 32,
        max_len: 10,
        src_vocab: corpus.src_vocab.len(),
        tgt_vocab: corpus.tgt_vocab.len(),
        dropout: 0.0,
    };
    // Wiring does not depend on training, so a freshly initialised model will do.
    let teacher = TransformerCheckpoint {
        model: Transformer::init(config.clone(), 3)?,
        src_vocab: corpus.src_vocab.clone(),
        tgt_vocab: corpus.tgt_vocab.clone(),
        meta: TrainingMeta {
            epochs: 0,
            final_loss: f32::NAN,
            seed: 3,
            lr: 0.0,
            batch_size: 0,
            loss_curve: Vec::new(),
            init: "glorot".into(),
        },
    };
    let hash = teacher.hash()?;

    for method in ReplacementMethod::ALL {
        for scope in [Scope::EncSA, Scope::DecSA, Scope::DecCA] {
            if !scope.accepts(method) {
                println!("{scope:<6} {method:<5} not applicable");
                continue;
            }
            let requests: Vec<_> = scope.sites(&config).into_iter().map(|s| (s, method)).collect();
            let data = capture_many(&teacher, &corpus, &requests, &CaptureOptions::default())?;
            let entries = data.iter().map(ReplayStudent::entry).collect();
            let model = splice(&teacher, &hash, SplicePlan::scoped(scope, entries, &config)?)?;
            let mut worst = 0f32;
            for p in &corpus.pairs {
                let a = logits(&teacher, &p.src_ids(), &p.tgt_in())?.to_vec();
                let b = logits(&model, &p.src_ids(), &p.tgt_in())?.to_vec();
                worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(worst, f32::max);
            }
            println!("{scope:<6} {method:<5} max |Δlogit| {worst:.2e}");
        }
    }
    Ok(())
}
