//! `hfi run <preset|config.toml>`: simulate, estimate and write CSV plus a
//! summary. Exit codes: 0 success, 2 invalid input, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hfi_core::scenario::{self, RunOptions, RunReport, PRESETS};

#[derive(Parser)]
#[command(name = "hfi", version, about = "Saturated PMSM injection-based position estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset (long_test, speed_reversal, averaging_sweep,
    /// observability_sweep) or a TOML scenario file.
    Run {
        target: String,
        /// Output directory for CSV and summary files.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Injection frequency, Hz.
        #[arg(long = "omega-inj", value_name = "HZ")]
        omega_inj: Option<f64>,
        /// Skip the estimator that uses the saturation model.
        #[arg(long)]
        no_saturation_estimator: bool,
    },
}

fn print_report(r: &RunReport) {
    println!("{}: {:.2} s", r.name, r.runtime_s);
    for (label, s) in [("with saturation model", r.with_model), ("without saturation model", r.without_model)] {
        if let Some(s) = s {
            print!(
                "  {label}: max {:.3} deg, mean {:.3} deg over {} estimates",
                s.max_deg, s.mean_deg, s.samples
            );
            match s.max_full_load_deg {
                Some(f) => println!(", max at full load {f:.3} deg"),
                None => println!(),
            }
        }
    }
    for (k, row) in r.averaging.iter().enumerate() {
        print!(
            "  Omega {:9.2} rad/s: e_mech {:.3e}  e_flux {:.3e}  e_flux_raw {:.3e}",
            row.omega_inj, row.e_mech, row.e_flux, row.e_flux_raw
        );
        if k > 0 {
            let prev = &r.averaging[k - 1];
            print!(
                "  ratios {:.3} {:.3} {:.3}",
                row.e_mech / prev.e_mech,
                row.e_flux / prev.e_flux,
                row.e_flux_raw / prev.e_flux_raw
            );
        }
        println!();
    }
    for row in &r.observability {
        println!(
            "  omega {:10.4} rad/s  torque {:6.3} N·m  i_q {:7.4} A  rank {}",
            row.omega_bar, row.torque, row.i_q, row.rank
        );
    }
    for f in &r.files {
        println!("  wrote {f}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        target,
        out,
        seed,
        omega_inj,
        no_saturation_estimator,
    } = cli.command;
    let opts = RunOptions {
        out_dir: Some(out),
        seed,
        injection_hz: omega_inj,
        no_saturation_estimator,
    };
    if !PRESETS.contains(&target.as_str()) && !std::path::Path::new(&target).exists() {
        eprintln!(
            "error: `{target}` is neither a preset ({}) nor an existing file",
            PRESETS.join(", ")
        );
        return ExitCode::from(2);
    }
    match scenario::run(&target, &opts) {
        Ok(r) => {
            print_report(&r);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
