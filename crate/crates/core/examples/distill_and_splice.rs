//! Replace the encoder self-attention of a trained teacher with distilled
//! feed-forward students at two sizes and compare BLEU.
//!
//! Reuses the checkpoint written by the `train_teacher` example when given
//! its path; otherwise trains a quick one.

use std::path::PathBuf;

use attentionless::data::{generate_synthetic, SyntheticTask, SyntheticTaskSpec};
use attentionless::distill::{capture_many, distill_students, CaptureOptions, DistillConfig};
use attentionless::model::{train_teacher, TeacherHyper, TransformerCheckpoint, TransformerConfig};
use attentionless::replace::{ReplacementMethod, SizeLabel, SizeLadder};
use attentionless::surgery::{evaluate, relative_pct, splice, Scope, SpliceEntry, SplicePlan};

fn main() -> attentionless::Result<()> {
    let spec = SyntheticTaskSpec {
        task: SyntheticTask::Cipher,
        vocab_size: 32,
        min_len: 3,
        max_len: 10,
        n_train: 2000,
        n_test: 100,
        seed: 7,
    };
    let (train, test) = generate_synthetic(&spec)?;
    let (teacher, hash) = match std::env::args().nth(1).map(PathBuf::from) {
        Some(path) => TransformerCheckpoint::load(&path)?,
        None => {
            let config = TransformerConfig {
                d_model: 32,
                n_heads: 4,
                n_layers: 2,
                d_ff_inner: 128,
                max_len: 12,
                dropout: 0.0,
                ..Default::default()
            };
            let hyper = TeacherHyper { epochs: 6, lr: 2e-3, batch_size: 32, seed: 0 };
            let ckpt = train_teacher(&train, config, &hyper, |e, l| println!("teacher epoch {e}  loss {l:.4}"))?;
            let hash = ckpt.hash()?;
            (ckpt, hash)
        }
    };
    let config = teacher.config().clone();
    let max_decode = config.max_len - 1;
    let baseline = evaluate(&teacher, &test, max_decode)?.bleu;
    println!("teacher BLEU {baseline:.4}");

    let method = ReplacementMethod::Alr;
    let requests: Vec<_> = Scope::EncSA.sites(&config).into_iter().map(|s| (s, method)).collect();
    let data = capture_many(&teacher, &train, &requests, &CaptureOptions::default())?;
    println!("captured {} records per site", data[0].len());

    let ladder = SizeLadder::for_width(config.max_len, config.d_model);
    let cfg = DistillConfig { epochs: 10, lr: 1e-3, batch_size: 64, seed: 0 };
    for size in [SizeLabel::XS, SizeLabel::L] {
        let mut entries = Vec::new();
        for ds in &data {
            let set = distill_students(ds, ladder.size(method, size), &config, &cfg, |_, _, _| {})?;
            let curve = &set.loss_curves[0];
            println!(
                "  {} {size}: hidden {}  mse {:.4} → {:.4}",
                ds.header.site,
                set.nets[0].spec.d_hidden,
                curve[0],
                curve[curve.len() - 1]
            );
            entries.push(SpliceEntry::from_set(set));
        }
        let model = splice(&teacher, &hash, SplicePlan::scoped(Scope::EncSA, entries, &config)?)?;
        let bleu = evaluate(&model, &test, max_decode)?.bleu;
        println!("EncSA {method} {size}: BLEU {bleu:.4} ({:.1}% of teacher)", relative_pct(bleu, baseline));
    }
    Ok(())
}
