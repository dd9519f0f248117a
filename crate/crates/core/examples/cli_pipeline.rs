//! The command-line pipeline driven in-process: solve, then analyze and
//! probe the checkpoint. Outputs go to a temporary directory.
use clap::Parser;
use mueller::cli::{run, Cli};

fn step(args: &[&str]) -> i32 {
    let code = run(Cli::try_parse_from(std::iter::once("mueller").chain(args.iter().copied())).expect("valid arguments"));
    println!("mueller {} -> exit {code}", args.join(" "));
    code
}

fn main() {
    env_logger::init();
    let dir = std::env::temp_dir().join("mueller_cli_pipeline");
    std::fs::create_dir_all(&dir).expect("output directory");
    let cfg = dir.join("helium.cfg");
    std::fs::write(&cfg, "z = 2\nelectrons = 2\nenergy_tol = 1e-9\n").expect("config file");
    let d = dir.to_str().expect("utf-8 path");
    let c = cfg.to_str().expect("utf-8 path");
    let solve_out = format!("{d}/solve");
    if step(&["solve", "--config", c, "--out", &solve_out]) != 0 {
        std::process::exit(1);
    }
    let ckpt = format!("{solve_out}/checkpoint.json");
    step(&["analyze", &ckpt, "--out", &format!("{d}/analyze")]);
    step(&["probe", &ckpt, "--slices", "2", "--out", &format!("{d}/probe")]);
    println!("files under {d}");
}
