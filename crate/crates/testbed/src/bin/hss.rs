use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use imsbed::cx_net::HssService;
use imsbed::files;
use imsbed_core::endpoint::NetAddress;
use imsbed_core::hss::{HssStore, ProfileRole, SubscriberProfile};
use imsbed_core::ims::{TriggerCondition, TriggerRule};
use imsbed_core::sip::{Method, SipUri};
use imsbed_core::ua::EXAM_SERVICE_USER;

/// Home subscriber server speaking Cx-lite over TCP.
#[derive(Parser)]
#[command(name = "hss", version)]
struct Cli {
    /// Subscriber file.
    #[arg(long)]
    db: PathBuf,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Student,
    Teacher,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve Cx-lite requests.
    Serve {
        #[arg(long, default_value = "127.0.0.1:3868")]
        listen: SocketAddr,
        /// Write registration state back to the subscriber file.
        #[arg(long)]
        persist: bool,
    },
    /// Add a subscriber, creating the file if needed.
    Add {
        #[arg(long)]
        impu: SipUri,
        #[arg(long)]
        passkey: String,
        #[arg(long)]
        impi: Option<String>,
        #[arg(long, value_enum)]
        role: Vec<RoleArg>,
        /// Route MESSAGE requests for the exam service to this server.
        #[arg(long)]
        exam_as: Option<NetAddress>,
    },
    /// Print the subscriber file.
    Show,
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Cmd::Serve { listen, persist } => {
            let store = files::load_hss(&cli.db).map_err(|e| e.to_string())?;
            let svc = HssService::new(store, persist.then(|| cli.db.clone()));
            let listener = TcpListener::bind(listen).map_err(|e| format!("{listen}: {e}"))?;
            log::info!("HSS serving Cx-lite on {listen}");
            svc.serve(listener).map_err(|e| e.to_string())
        }
        Cmd::Add {
            impu,
            passkey,
            impi,
            role,
            exam_as,
        } => {
            let mut store = if cli.db.exists() {
                files::load_hss(&cli.db).map_err(|e| e.to_string())?
            } else {
                HssStore::new()
            };
            let impi =
                impi.unwrap_or_else(|| impu.aor_key().trim_start_matches("sip:").to_string());
            let mut profile = SubscriberProfile::new(&impi, impu, &passkey);
            for r in role {
                profile = profile.with_role(match r {
                    RoleArg::Student => ProfileRole::Student,
                    RoleArg::Teacher => ProfileRole::Teacher,
                });
            }
            if let Some(target) = exam_as {
                profile = profile.with_rule(TriggerRule {
                    priority: 0,
                    condition: TriggerCondition {
                        method: Some(Method::Message),
                        request_uri_user: Some(EXAM_SERVICE_USER.into()),
                        ..TriggerCondition::default()
                    },
                    target,
                });
            }
            store.provision(profile).map_err(|e| e.to_string())?;
            files::save_hss(&cli.db, &store).map_err(|e| e.to_string())
        }
        Cmd::Show => {
            let store = files::load_hss(&cli.db).map_err(|e| e.to_string())?;
            println!("{}", store.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hss: {e}");
            ExitCode::FAILURE
        }
    }
}
