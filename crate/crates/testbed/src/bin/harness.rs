use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use imsbed::files;
use imsbed::live::LiveDriver;
use imsbed_core::harness::{
    builtin, builtin_scenarios, check, render_ladder, Scenario, Trace, World,
};

/// Runs testbed scenarios and checks their message flows.
#[derive(Parser)]
#[command(name = "harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file or a builtin scenario by name.
    Run {
        scenario: String,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run on loopback UDP sockets against the wall clock.
        #[arg(long)]
        live: bool,
        /// Print a ladder diagram of the trace.
        #[arg(long)]
        ladder: bool,
        /// Comma-separated node names or roles to show in the ladder.
        #[arg(long, value_delimiter = ',')]
        roles: Vec<String>,
        /// Write the canonical trace JSON here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Wall-clock limit for --live runs, in seconds.
        #[arg(long, default_value_t = 120)]
        max_wall: u64,
    },
    /// List the builtin scenarios.
    List,
    /// Write a builtin scenario as JSON.
    Export {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the ladder of a saved trace.
    Ladder {
        trace: PathBuf,
        #[arg(long, value_delimiter = ',')]
        roles: Vec<String>,
    },
}

fn load(spec: &str) -> Result<Scenario, String> {
    if let Some(s) = builtin(spec) {
        return Ok(s);
    }
    files::load_scenario(Path::new(spec)).map_err(|e| e.to_string())
}

fn run_scenario(s: &Scenario, live: bool, max_wall: u64) -> Result<Trace, String> {
    if live {
        let mut d = LiveDriver::from_scenario(s).map_err(|e| e.to_string())?;
        if !d.run_to_quiescence(Duration::from_secs(max_wall)) {
            eprintln!("warning: not quiescent after {max_wall} s of wall time");
        }
        return Ok(d.into_trace());
    }
    let mut w = World::new(s.clone()).map_err(|e| e.to_string())?;
    w.run_to_quiescence().map_err(|e| e.to_string())?;
    Ok(w.into_trace())
}

fn main() -> ExitCode {
    env_logger::init();
    match Cli::parse().command {
        Cmd::List => {
            for s in builtin_scenarios() {
                println!("{:<26} {}", s.name, s.description);
            }
            ExitCode::SUCCESS
        }
        Cmd::Export { name, out } => {
            let Some(s) = builtin(&name) else {
                eprintln!("no builtin scenario named {name}");
                return ExitCode::from(2);
            };
            match out {
                Some(p) => {
                    if let Err(e) = files::save_scenario(&p, &s) {
                        eprintln!("{e}");
                        return ExitCode::from(2);
                    }
                }
                None => println!("{}", s.to_json()),
            }
            ExitCode::SUCCESS
        }
        Cmd::Ladder { trace, roles } => match files::load_trace(&trace) {
            Ok(t) => {
                let filter: Vec<&str> = roles.iter().map(String::as_str).collect();
                print!("{}", render_ladder(&t, &filter));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
        Cmd::Run {
            scenario,
            seed,
            live,
            ladder,
            roles,
            trace,
            max_wall,
        } => {
            let mut s = match load(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let t = match run_scenario(&s, live, max_wall) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("{}: {e}", s.name);
                    return ExitCode::from(2);
                }
            };
            if ladder {
                let filter: Vec<&str> = roles.iter().map(String::as_str).collect();
                print!("{}", render_ladder(&t, &filter));
            }
            if let Some(p) = trace {
                if let Err(e) = files::save_trace(&p, &t) {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            }
            let mut ok = true;
            for (name, result) in check(&s, &t) {
                match result {
                    imsbed_core::harness::FlowResult::Match => println!("MATCH    {name}"),
                    imsbed_core::harness::FlowResult::Mismatch { step, detail } => {
                        ok = false;
                        println!("MISMATCH {name} at step {step}: {detail}");
                    }
                }
            }
            for c in &t.commands {
                eprintln!(
                    "refused: {} {} at {}: {}",
                    c.actor,
                    c.action,
                    c.time,
                    c.error.as_deref().unwrap_or("")
                );
            }
            println!(
                "{}: seed {} end {} wire {} cx {} http {}",
                s.name,
                s.seed,
                t.end_time,
                t.wire_events.len(),
                t.cx_events.len(),
                t.http_events.len()
            );
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
