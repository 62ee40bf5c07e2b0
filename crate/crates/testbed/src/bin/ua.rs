use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use imsbed::files;
use imsbed::live::{bind_udp, LiveDriver};
use imsbed_core::endpoint::{Instant, NetAddress, SubState, TimerConfig};
use imsbed_core::exam::{Channel, ExamPaper, ExamSpec};
use imsbed_core::harness::TimelineEntry;
use imsbed_core::node::Command;
use imsbed_core::sip::SipUri;
use imsbed_core::ua::{Registration, SubmitOutcome, UaConfig, UaNode};

const NAME: &str = "ua";

/// IMS user agent for students and teachers.
#[derive(Parser)]
#[command(name = "ua", version)]
struct Cli {
    #[arg(long)]
    identity: SipUri,
    #[arg(long, default_value = "")]
    passkey: String,
    /// First hop for every request.
    #[arg(long)]
    pcscf: NetAddress,
    /// Local SIP socket; port 0 picks a free one.
    #[arg(long, default_value = "127.0.0.1:0")]
    local: SocketAddr,
    /// HTTP address of the exam application server.
    #[arg(long)]
    as_http: Option<NetAddress>,
    #[arg(long, value_enum, default_value_t = Via::Sip)]
    channel: Via,
    #[arg(long, default_value_t = 3600)]
    expires: u32,
    /// Seconds to wait for answers, exams or results.
    #[arg(long, default_value_t = 30)]
    wait: u64,
    #[command(subcommand)]
    action: Action,
}

#[derive(Clone, Copy, ValueEnum)]
enum Via {
    Sip,
    Http,
}

#[derive(Subcommand)]
enum Action {
    /// Register and report the outcome.
    Register,
    /// Register, then subscribe to the exam service.
    Subscribe,
    /// Register, subscribe and print what arrives.
    Inbox,
    /// Wait for an exam and submit answers (`q1=0,q2=2`); prompts per
    /// question when none are given.
    Answer {
        exam_id: String,
        answers: Option<String>,
    },
    /// Register, then create an exam from a JSON exam description. Its
    /// `open_at` and `close_at` are milliseconds on the server's clock.
    Provision { file: PathBuf },
    /// Run a JSON list of `{at, action, args}` entries, `at` in ms from start.
    RunScript { file: PathBuf },
}

fn ua(d: &LiveDriver) -> &UaNode {
    d.node::<UaNode>(NAME).expect("ua node")
}

fn parse_answers(text: &str) -> Result<BTreeMap<String, usize>, String> {
    text.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (q, i) = p
                .split_once('=')
                .ok_or_else(|| format!("expected q=i, got {p}"))?;
            let i = i
                .trim()
                .parse()
                .map_err(|_| format!("bad choice index in {p}"))?;
            Ok((q.trim().to_string(), i))
        })
        .collect()
}

fn prompt(paper: &ExamPaper) -> io::Result<BTreeMap<String, usize>> {
    let mut answers = BTreeMap::new();
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    println!("{}", paper.title);
    for q in &paper.questions {
        println!("\n{}: {}", q.qid, q.prompt);
        for (i, c) in q.choices.iter().enumerate() {
            println!("  [{i}] {c}");
        }
        loop {
            print!("choice> ");
            io::stdout().flush()?;
            let Some(line) = lines.next().transpose()? else {
                return Ok(answers);
            };
            match line.trim().parse::<usize>() {
                Ok(i) if i < q.choices.len() => {
                    answers.insert(q.qid.clone(), i);
                    break;
                }
                _ => println!("enter a number from 0 to {}", q.choices.len() - 1),
            }
        }
    }
    Ok(answers)
}

fn register(d: &mut LiveDriver, limit: Duration) -> Result<(), String> {
    d.command(
        NAME,
        &Command::Register {
            passkey: None,
            expires: None,
        },
    )
    .map_err(|e| e.to_string())?;
    d.run_until(limit, |d| {
        !matches!(ua(d).registration(), Registration::Registering)
    });
    match ua(d).registration() {
        Registration::Registered => {
            println!("registered");
            Ok(())
        }
        other => Err(format!("registration ended {other:?}")),
    }
}

fn subscribe(d: &mut LiveDriver, limit: Duration) -> Result<(), String> {
    d.command(NAME, &Command::Subscribe {})
        .map_err(|e| e.to_string())?;
    d.run_until(limit, |d| {
        let u = ua(d);
        u.subscribe_error().is_some()
            || u.subscription()
                .is_some_and(|s| s.state != SubState::Pending)
    });
    let u = ua(d);
    match (u.subscription().map(|s| s.state), u.subscribe_error()) {
        (Some(SubState::Active), _) => {
            println!("subscribed to the exam service");
            Ok(())
        }
        (_, Some(code)) => Err(format!("subscription refused with {code}")),
        (state, None) => Err(format!("subscription ended {state:?}")),
    }
}

fn print_new(d: &LiveDriver, shown: &mut usize) {
    let inbox = ua(d).inbox();
    for item in &inbox[*shown..] {
        println!("{}", serde_json::to_string(item).unwrap_or_default());
    }
    *shown = inbox.len();
}

fn run(cli: Cli) -> Result<(), String> {
    let socket = bind_udp(cli.local).map_err(|e| e.to_string())?;
    let bound = socket.local_addr().map_err(|e| e.to_string())?;
    let local = NetAddress::new(&bound.ip().to_string(), bound.port());
    let mut cfg = UaConfig::new(cli.identity, &cli.passkey, cli.pcscf, local);
    cfg.as_http = cli.as_http;
    cfg.expires = cli.expires;
    cfg.channel = match cli.channel {
        Via::Sip => Channel::SipMessage,
        Via::Http => Channel::HttpApi,
    };
    let mut d = LiveDriver::new();
    d.add_node_on(
        Box::new(UaNode::new(NAME, cfg, TimerConfig::default())),
        socket,
        None,
    )
    .map_err(|e| e.to_string())?;
    let step = Duration::from_secs(20);
    let wait = Duration::from_secs(cli.wait);
    match cli.action {
        Action::Register => register(&mut d, step),
        Action::Subscribe => {
            register(&mut d, step)?;
            subscribe(&mut d, step)
        }
        Action::Inbox => {
            register(&mut d, step)?;
            subscribe(&mut d, step)?;
            let mut shown = 0;
            d.run_until(wait, |d| {
                print_new(d, &mut shown);
                false
            });
            Ok(())
        }
        Action::Answer { exam_id, answers } => {
            register(&mut d, step)?;
            subscribe(&mut d, step)?;
            d.run_until(wait, |d| ua(d).exams().any(|e| e.exam_id == exam_id));
            let Some(paper) = ua(&d).exams().find(|e| e.exam_id == exam_id).cloned() else {
                return Err(format!(
                    "exam {exam_id} did not arrive within {} s",
                    cli.wait
                ));
            };
            let answers = match answers {
                Some(a) => parse_answers(&a)?,
                None => prompt(&paper).map_err(|e| e.to_string())?,
            };
            d.command(
                NAME,
                &Command::Submit {
                    exam_id: exam_id.clone(),
                    answers,
                    channel: None,
                },
            )
            .map_err(|e| e.to_string())?;
            d.run_until(wait, |d| {
                ua(d)
                    .outcome(&exam_id)
                    .is_some_and(|o| *o != SubmitOutcome::Pending)
            });
            match ua(&d).outcome(&exam_id) {
                Some(SubmitOutcome::Accepted) => {
                    println!("submission accepted");
                    Ok(())
                }
                other => Err(format!("submission {other:?}")),
            }
        }
        Action::Provision { file } => {
            let exam: ExamSpec = files::read_json(&file).map_err(|e| e.to_string())?;
            register(&mut d, step)?;
            d.command(NAME, &Command::ProvisionExam { exam })
                .map_err(|e| e.to_string())?;
            d.run_until(wait, |d| !ua(d).provisioned().is_empty());
            match ua(&d).provisioned().first() {
                Some(Ok(id)) => {
                    println!("provisioned {id}");
                    Ok(())
                }
                Some(Err(e)) => Err(format!("provisioning refused: {e}")),
                None => Err(String::from("no answer from the exam server")),
            }
        }
        Action::RunScript { file } => {
            let entries: Vec<TimelineEntry> = files::read_json(&file).map_err(|e| e.to_string())?;
            let mut shown = 0;
            let start = d.now();
            for e in &entries {
                let at = Instant(start.millis() + e.at.millis());
                d.run_until(Duration::from_millis(at.since(d.now())), |d| {
                    print_new(d, &mut shown);
                    false
                });
                let command = e.command().map_err(|e| e.to_string())?;
                if let Err(err) = d.command(NAME, &command) {
                    eprintln!("{} refused: {err}", e.action);
                }
            }
            d.run_until(wait, |d| {
                print_new(d, &mut shown);
                false
            });
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ua: {e}");
            ExitCode::FAILURE
        }
    }
}
