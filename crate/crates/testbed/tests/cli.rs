use std::process::{Command, Output};

fn run(bin: &str, args: &[&str]) -> Output {
    Command::new(bin).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const HARNESS: &str = env!("CARGO_BIN_EXE_harness");
const HSS: &str = env!("CARGO_BIN_EXE_hss");

#[test]
fn harness_lists_every_builtin() {
    let o = run(HARNESS, &["list"]);
    assert!(o.status.success());
    for name in imsbed_core::harness::builtin_names() {
        assert!(stdout(&o).contains(name), "{name} missing");
    }
}

#[test]
fn harness_runs_and_checks_a_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.json");
    let o = run(
        HARNESS,
        &[
            "run",
            "fig2_3_proxy_invite",
            "--ladder",
            "--trace",
            trace.to_str().unwrap(),
        ],
    );
    let out = stdout(&o);
    assert!(o.status.success(), "{out}");
    assert!(out.contains("MATCH"), "{out}");
    assert!(!out.contains("MISMATCH"), "{out}");
    assert!(out.contains("INVITE"), "{out}");
    let again = run(HARNESS, &["ladder", trace.to_str().unwrap()]);
    assert!(again.status.success());
}

#[test]
fn harness_rejects_unknown_scenarios() {
    let o = run(HARNESS, &["run", "no-such-scenario"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn harness_export_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    assert!(run(
        HARNESS,
        &[
            "export",
            "fig11_cscf_chain",
            "--out",
            path.to_str().unwrap()
        ]
    )
    .status
    .success());
    let o = run(HARNESS, &["run", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
}

#[test]
fn hss_add_and_show() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("hss.json");
    let db = db.to_str().unwrap();
    let add = |impu: &str, role: &str| {
        run(
            HSS,
            &[
                "--db",
                db,
                "add",
                "--impu",
                impu,
                "--passkey",
                "secret",
                "--role",
                role,
                "--exam-as",
                "127.0.0.1:5065",
            ],
        )
    };
    assert!(add("sip:t9@ims.kau.test", "teacher").status.success());
    assert!(add("sip:s9@ims.kau.test", "student").status.success());
    assert_eq!(add("sip:s9@ims.kau.test", "teacher").status.code(), Some(1));
    let show = run(HSS, &["--db", db, "show"]);
    let out = stdout(&show);
    assert!(show.status.success());
    assert!(
        out.contains("sip:t9@ims.kau.test") && out.contains("sip:s9@ims.kau.test"),
        "{out}"
    );
    assert!(!out.contains("secret"), "passkey leaked: {out}");
}
