#[path = "support/fixtures.rs"]
mod fixtures;

use attentionless::autograd::{no_grad, Tensor};
use attentionless::data::{generate_synthetic, SyntheticTask, SyntheticTaskSpec, EOS};
use attentionless::model::{
    greedy_decode, logits, train_teacher, ActivationTap, Hooks, Seq2Seq, SiteActivations, TeacherHyper,
    TransformerCheckpoint, TransformerConfig,
};
use attentionless::surgery::evaluate;
use fixtures::{cipher, random_teacher, teacher_logits, tiny_config};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn logits_have_one_row_per_target_position() {
    let (train, _) = cipher(3, 0, 1);
    let teacher = random_teacher(&train, tiny_config(), 0);
    for p in &train.pairs {
        let out = logits(&teacher, &p.src_ids(), &p.tgt_in()).unwrap();
        assert_eq!(out.shape(), &[p.tgt_in().len(), teacher.config().tgt_vocab]);
    }
}

#[test]
fn decoder_never_sees_future_tokens() {
    let (train, _) = cipher(10, 0, 2);
    let teacher = random_teacher(&train, tiny_config(), 1);
    let v = teacher.config().tgt_vocab;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in &train.pairs {
        let tgt_in = p.tgt_in();
        let base = teacher_logits(&teacher, &p.src_ids(), &tgt_in);
        for t in 0..tgt_in.len() - 1 {
            let mut other = tgt_in.clone();
            for tok in &mut other[t + 1..] {
                *tok = rng.gen_range(4..v as u32);
            }
            let moved = teacher_logits(&teacher, &p.src_ids(), &other);
            let keep = (t + 1) * v;
            assert!(base[..keep].iter().zip(&moved[..keep]).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}

#[test]
fn padded_source_positions_are_ignored() {
    let (train, _) = cipher(5, 0, 3);
    let teacher = random_teacher(&train, tiny_config(), 2);
    for p in &train.pairs {
        let src = p.src_ids();
        let mut padded = src.clone();
        padded.resize(teacher.config().max_len, 9);
        no_grad(|| {
            let m = &teacher.model;
            let a = m.encode(&src, src.len(), &mut Hooks::default()).unwrap();
            let b = m.encode(&padded, src.len(), &mut Hooks::default()).unwrap();
            let d = teacher.config().d_model;
            let (a, b) = (a.to_vec(), b.to_vec());
            assert_eq!(&a[..src.len() * d], &b[..src.len() * d]);
            let la = m.decode(&Tensor::new(a, &[src.len(), d]).unwrap(), src.len(), &p.tgt_in(), &mut Hooks::default());
            let lb = m.decode(&Tensor::new(b, &[padded.len(), d]).unwrap(), src.len(), &p.tgt_in(), &mut Hooks::default());
            assert_eq!(la.unwrap().to_vec(), lb.unwrap().to_vec());
        });
    }
}

struct Counter(usize);

impl ActivationTap for Counter {
    fn record(&mut self, _: SiteActivations) {
        self.0 += 1;
    }
}

#[test]
fn tapping_activations_leaves_logits_untouched() {
    let (train, _) = cipher(6, 0, 4);
    let teacher = random_teacher(&train, tiny_config(), 3);
    for p in &train.pairs {
        let plain = teacher_logits(&teacher, &p.src_ids(), &p.tgt_in());
        let mut tap = Counter(0);
        let tapped = no_grad(|| {
            let mut hooks = Hooks {
                tap: Some(&mut tap),
                ..Default::default()
            };
            teacher.model.forward(&p.src_ids(), &p.tgt_in(), &mut hooks).unwrap().to_vec()
        });
        assert_eq!(tap.0, 6);
        assert!(plain.iter().zip(&tapped).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

/// Always predicts EOS.
struct Mute(TransformerConfig);

impl Seq2Seq for Mute {
    fn config(&self) -> &TransformerConfig {
        &self.0
    }

    fn encode(&self, src: &[u32]) -> attentionless::Result<Tensor> {
        Tensor::new(vec![0.0; src.len() * self.0.d_model], &[src.len(), self.0.d_model])
    }

    fn decode_logits(&self, _: &Tensor, _: usize, tgt_in: &[u32]) -> attentionless::Result<Tensor> {
        let v = self.0.tgt_vocab;
        let mut out = vec![0.0; tgt_in.len() * v];
        for row in out.chunks_mut(v) {
            row[EOS as usize] = 1.0;
        }
        Tensor::new(out, &[tgt_in.len(), v])
    }
}

#[test]
fn eos_first_decodes_to_nothing_and_scores_zero() {
    let (train, test) = cipher(2, 5, 5);
    let teacher = random_teacher(&train, tiny_config(), 0);
    let mute = Mute(teacher.config().clone());
    assert!(greedy_decode(&mute, &test.pairs[0].src_ids(), 20).unwrap().is_empty());
    assert_eq!(evaluate(&mute, &test, 20).unwrap().bleu, 0.0);
}

#[test]
fn decoding_respects_the_length_cap() {
    let (train, test) = cipher(2, 10, 6);
    let teacher = random_teacher(&train, tiny_config(), 4);
    for p in &test.pairs {
        assert!(greedy_decode(&teacher, &p.src_ids(), 3).unwrap().len() <= 3);
        assert!(greedy_decode(&teacher, &p.src_ids(), 100).unwrap().len() < teacher.config().max_len);
    }
}

fn copy_task(n_train: usize, n_test: usize) -> (attentionless::data::ParallelCorpus, attentionless::data::ParallelCorpus) {
    let spec = SyntheticTaskSpec {
        task: SyntheticTask::Copy,
        vocab_size: 12,
        min_len: 2,
        max_len: 6,
        n_train,
        n_test,
        seed: 1,
    };
    generate_synthetic(&spec).unwrap()
}

fn small_config() -> TransformerConfig {
    TransformerConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff_inner: 32,
        max_len: 8,
        dropout: 0.0,
        ..Default::default()
    }
}

#[test]
fn one_epoch_on_ten_sentences_gives_a_finite_loss() {
    let (train, _) = copy_task(10, 0);
    let mut losses = Vec::new();
    let hyper = TeacherHyper {
        epochs: 1,
        batch_size: 4,
        ..Default::default()
    };
    train_teacher(&train, small_config(), &hyper, |_, l| losses.push(l)).unwrap();
    assert_eq!(losses.len(), 1);
    assert!(losses[0].is_finite());
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let (train, _) = copy_task(20, 0);
    let hyper = TeacherHyper {
        epochs: 2,
        batch_size: 8,
        seed: 5,
        ..Default::default()
    };
    let config = TransformerConfig {
        dropout: 0.1,
        ..small_config()
    };
    let a = train_teacher(&train, config.clone(), &hyper, |_, _| {}).unwrap();
    let b = train_teacher(&train, config, &hyper, |_, _| {}).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    let c = TransformerCheckpoint::from_bytes(&a.to_bytes().unwrap()).unwrap();
    assert_eq!(c.hash().unwrap(), a.hash().unwrap());
}

#[test]
fn copy_teacher_learns_the_task() {
    let (train, test) = copy_task(1500, 100);
    let hyper = TeacherHyper {
        epochs: 12,
        lr: 3e-3,
        batch_size: 16,
        seed: 0,
    };
    let mut losses = Vec::new();
    let teacher = train_teacher(&train, small_config(), &hyper, |_, l| losses.push(l)).unwrap();
    assert!(losses[4] < losses[0], "{losses:?}");
    assert!(*losses.last().unwrap() < 0.1, "{losses:?}");

    let result = evaluate(&teacher, &test, 10).unwrap();
    let exact = result.hypotheses.iter().zip(&test.pairs).filter(|(h, p)| **h == p.src).count();
    assert!(exact as f64 >= 0.95 * test.len() as f64, "{exact} of {}", test.len());
    assert!(result.bleu >= 0.95, "{}", result.bleu);

    // A trained encoder is not constant in its input.
    let p = &test.pairs[0];
    let mut src = p.src_ids();
    let a = no_grad(|| Seq2Seq::encode(&teacher, &src).unwrap().to_vec());
    src[0] = if src[0] == 4 { 5 } else { 4 };
    let b = no_grad(|| Seq2Seq::encode(&teacher, &src).unwrap().to_vec());
    assert_ne!(a, b);
}
