//! Score a few hypotheses with corpus BLEU and turn absolute scores into a
//! relative report.

use std::collections::BTreeMap;

use attentionless::replace::{ReplacementMethod, SizeLabel};
use attentionless::surgery::{bleu, relative_report, BleuRow, Experiment, Scope, BLEU_FORMULA};

fn main() -> attentionless::Result<()> {
    let split = |s: &str| s.split_whitespace().map(str::to_owned).collect::<Vec<_>>();
    let refs = vec![split("the cat sat on the mat"), split("a b c e")];
    let hyps = vec![split("the cat sat on a mat"), split("a b c d")];
    println!("{BLEU_FORMULA}");
    println!("BLEU = {:.4}", bleu(&hyps, &refs, 4)?);

    let row = |method, scope, size, b| BleuRow {
        experiment: Experiment { scope, method, size },
        corpus: "E2G".into(),
        absolute_bleu: b,
        config_hash: "example".into(),
        teacher_hash: "example".into(),
        seed: 0,
    };
    let rows = vec![
        row(ReplacementMethod::Alr, Scope::EncSA, SizeLabel::L, 0.252),
        row(ReplacementMethod::Alr, Scope::DecCA, SizeLabel::XS, 0.035),
    ];
    let report = relative_report(&rows, &BTreeMap::from([("E2G".to_owned(), 0.257)]))?;
    print!("{}", report.to_csv());
    Ok(())
}
