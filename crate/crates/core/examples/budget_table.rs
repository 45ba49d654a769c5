//! Print the student size ladder at the reference dims and at desk dims.

use attentionless::model::TransformerConfig;
use attentionless::replace::{budget_table, render_budget_table, SizeLadder};

fn main() -> attentionless::Result<()> {
    let reference = TransformerConfig {
        src_vocab: 10,
        tgt_vocab: 10,
        ..Default::default()
    };
    println!("reference dims: d_model 128, max_len 50, 8 heads");
    print!("{}", render_budget_table(&budget_table(&reference, &SizeLadder::reference())?));

    let desk = TransformerConfig {
        d_model: 32,
        n_heads: 4,
        n_layers: 2,
        max_len: 22,
        ..reference
    };
    let ladder = SizeLadder::for_width(desk.max_len, desk.d_model);
    println!("\ndesk dims: d_model 32, max_len 22, 4 heads (budget scale {:.4})", ladder.scale);
    print!("{}", render_budget_table(&budget_table(&desk, &ladder)?));
    Ok(())
}
