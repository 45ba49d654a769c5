//! Train a small teacher on the cipher task, save it, reload it and score
//! it with greedy decoding.
//!
//! `cargo run --release --example train_teacher [out.ckpt]`

use std::path::PathBuf;

use attentionless::data::{generate_synthetic, SyntheticTask, SyntheticTaskSpec};
use attentionless::model::{greedy_decode, train_teacher, TeacherHyper, TransformerCheckpoint, TransformerConfig};
use attentionless::surgery::evaluate;

fn main() -> attentionless::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("teacher.ckpt"));
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
    let config = TransformerConfig {
        d_model: 32,
        n_heads: 4,
        n_layers: 2,
        d_ff_inner: 128,
        max_len: 12,
        dropout: 0.0,
        ..Default::default()
    };
    let hyper = TeacherHyper {
        epochs: 6,
        lr: 2e-3,
        batch_size: 32,
        seed: 0,
    };
    let ckpt = train_teacher(&train, config, &hyper, |e, l| println!("epoch {e}  loss {l:.4}"))?;
    let hash = ckpt.save(&out)?;
    println!("saved {} ({hash})", out.display());

    let (ckpt, _) = TransformerCheckpoint::load(&out)?;
    let p = &test.pairs[0];
    let hyp = greedy_decode(&ckpt, &p.src_ids(), 11)?;
    println!("source    {}", ckpt.src_vocab.decode(&p.src).join(" "));
    println!("decoded   {}", ckpt.tgt_vocab.decode(&hyp).join(" "));
    println!("reference {}", ckpt.tgt_vocab.decode(&p.tgt).join(" "));
    println!("test BLEU {:.4}", evaluate(&ckpt, &test, 11)?.bleu);
    Ok(())
}
