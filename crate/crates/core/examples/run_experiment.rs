//! Drive an experiment from a TOML config, the same way the `circle-rds`
//! binary does, and list the files it wrote.
//!
//! ```bash
//! cargo run --release --example run_experiment [out-dir]
//! ```

use std::path::PathBuf;

use circle_rds::experiment::{run, Command, ExperimentConfig};

const CONFIG: &str = r#"
seed = 42

[noise]
thetas = [0.15, 0.2, 0.3]

[lyapunov]
n = 500000
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("circle-rds-example"));
    let cfg = ExperimentConfig::from_toml(CONFIG)?;
    let manifest = run(Command::Lyapunov, &cfg, &out, false)?;
    for f in &manifest.outputs {
        println!("{} {} ({} bytes)", f.sha256, f.file, f.bytes);
    }
    print!("{}", std::fs::read_to_string(out.join("lyapunov.csv"))?);
    Ok(())
}
