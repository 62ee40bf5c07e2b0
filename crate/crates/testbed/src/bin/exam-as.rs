use std::net::SocketAddr;
use std::process::ExitCode;

use clap::Parser;
use imsbed::cx_net::TcpCx;
use imsbed::http_net::HttpXdms;
use imsbed::live::LiveDriver;
use imsbed_core::endpoint::{NetAddress, TimerConfig};
use imsbed_core::exam::{ExamAs, ExamAsConfig};
use imsbed_core::sip::SipUri;

/// Mass-examination application server.
#[derive(Parser)]
#[command(name = "exam-as", version)]
struct Cli {
    /// SIP socket facing the S-CSCF.
    #[arg(long)]
    listen_sip: SocketAddr,
    /// HTTP/JSON API socket.
    #[arg(long)]
    listen_http: SocketAddr,
    /// S-CSCF the server sends its own requests through.
    #[arg(long)]
    scscf: NetAddress,
    /// HTTP address of the XDMS document store.
    #[arg(long)]
    xdms: NetAddress,
    /// Cx-lite address of the HSS.
    #[arg(long)]
    hss: NetAddress,
    #[arg(long, default_value = "sip:exam@ims.kau.test")]
    service_uri: SipUri,
    #[arg(long, default_value = "exam-as")]
    name: String,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let addr = NetAddress::new(&cli.listen_sip.ip().to_string(), cli.listen_sip.port());
    let http = NetAddress::new(&cli.listen_http.ip().to_string(), cli.listen_http.port());
    let node = ExamAs::new(
        &cli.name,
        addr,
        Box::new(TcpCx::new(cli.hss)),
        Box::new(HttpXdms::new(cli.xdms)),
        ExamAsConfig {
            service_uri: cli.service_uri,
            scscf: cli.scscf,
            timers: TimerConfig::default(),
        },
    );
    let mut d = LiveDriver::new();
    if let Err(e) = d.add_node(
        Box::new(node),
        cli.listen_sip,
        Some((http, cli.listen_http)),
    ) {
        eprintln!("exam-as: {e}");
        return ExitCode::FAILURE;
    }
    log::info!(
        "exam-as serving SIP on {} and HTTP on {}",
        cli.listen_sip,
        cli.listen_http
    );
    d.serve()
}
