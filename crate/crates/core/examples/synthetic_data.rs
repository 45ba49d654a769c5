//! Generate the seeded cipher task and look at a few pairs and batches.

use attentionless::data::{batchify, generate_synthetic, SyntheticTask, SyntheticTaskSpec};

fn main() -> attentionless::Result<()> {
    let spec = SyntheticTaskSpec {
        task: SyntheticTask::Cipher,
        vocab_size: 64,
        min_len: 5,
        max_len: 20,
        n_train: 5000,
        n_test: 500,
        seed: 7,
    };
    let (train, test) = generate_synthetic(&spec)?;
    println!("{} train / {} test pairs, vocab {}", train.len(), test.len(), train.src_vocab.len());
    println!("corpus hash {}", train.content_hash());
    for p in train.pairs.iter().take(3) {
        println!("  {:?}", train.src_vocab.decode(&p.src).join(" "));
        println!("→ {:?}", train.tgt_vocab.decode(&p.tgt).join(" "));
    }
    let batches = batchify(&train, 32, 22, Some(1));
    let first = &batches[0];
    println!(
        "{} batches; first holds {} sentences, {} real source tokens",
        batches.len(),
        first.len(),
        first.src_len.iter().sum::<usize>()
    );
    Ok(())
}
