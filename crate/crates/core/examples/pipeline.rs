//! Drive every CLI stage on a toy configuration inside a temporary
//! directory, the same way `attentionless <stage>` does from a shell.

const CONFIG: &str = r#"
seed = 1
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
epochs = 5
batch_size = 16

[[grid]]
methods = ["ALR", "ELR"]
scopes = ["EncSA", "DecSA"]
sizes = ["XS", "L"]

[data]
kind = "synthetic"
task = "copy"
vocab_size = 12
min_len = 2
max_len = 6
n_train = 150
n_test = 20
seed = 3
"#;

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let config = dir.path().join("run.toml");
    std::fs::write(&config, CONFIG).expect("write config");
    let root = dir.path().join("runs");
    for stage in ["train-teacher", "capture", "distill", "splice", "eval", "report"] {
        let args = [
            "attentionless",
            "--config",
            config.to_str().unwrap(),
            "--run-root",
            root.to_str().unwrap(),
            stage,
        ];
        let code = attentionless::cli::main_with_args(args);
        if code != 0 {
            std::process::exit(code);
        }
    }
}
