use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use imsbed::deploy::{deploy_node, Deployed};
use imsbed::files;

/// Runs one node of a scenario's topology on its own address. HSS nodes
/// serve Cx-lite, every other role speaks SIP over UDP.
#[derive(Parser)]
#[command(name = "imsnode", version)]
struct Cli {
    /// Scenario file providing topology and fixtures.
    #[arg(long)]
    scenario: PathBuf,
    /// Node name in the topology.
    #[arg(long)]
    node: String,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let scenario = match files::load_scenario(&cli.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("imsnode: {e}");
            return ExitCode::FAILURE;
        }
    };
    match deploy_node(&scenario, &cli.node) {
        Ok(Deployed::Sip(mut driver)) => driver.serve(),
        Ok(Deployed::Hss(svc, listener)) => match svc.serve(listener) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("imsnode: {e}");
                ExitCode::FAILURE
            }
        },
        Err(e) => {
            eprintln!("imsnode: {e}");
            ExitCode::FAILURE
        }
    }
}
