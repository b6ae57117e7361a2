use clap::Parser;
use resface_cli::{execute, Cli};

/// Short machine-readable category for an error chain.
fn kind(err: &anyhow::Error) -> &'static str {
    use resface_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Shape(_) => "shape",
                E::InvalidArgument(_) => "invalid-argument",
                E::Parse { .. } => "parse",
                E::NonFinite { .. } => "non-finite",
                E::Dataset(_) => "dataset",
                E::Checkpoint { .. } => "checkpoint",
                E::Detector(_) => "detector",
                E::Image(_) => "image",
                E::Json(_) => "json",
                E::Io(_) => "io",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "error"
}

fn main() {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if let Err(err) = execute(cli, &argv) {
        let report = serde_json::json!({
            "status": "error",
            "kind": kind(&err),
            "message": format!("{err:#}"),
        });
        eprintln!("{report}");
        std::process::exit(1);
    }
}
