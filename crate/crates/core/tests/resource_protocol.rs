mod common;

use std::io;
use std::net::TcpStream;
use std::sync::Arc;

use vo_authz::authz::RightsSet;
use vo_authz::credentials::{prove_identity, sign_assertion, AssertionBody, IdentityCredential, SecretKey, SessionCredential};
use vo_authz::resource::{AuditRecord, AuditSink};
use vo_authz::time::Timestamp;
use vo_authz::wire::{read_message, write_message, Message};
use vo_authz::{RightsTuple, RoleName};

use common::*;

struct BrokenDisk;

impl AuditSink for BrokenDisk {
    fn append(&self, _: &AuditRecord) -> io::Result<()> {
        Err(io::Error::other("disk full"))
    }
}

fn with_tull() -> (Testbed, Member) {
    let tb = Testbed::start();
    let admin = tb.member(VO_ADMIN);
    tb.admin_load(0, &admin, DEMO_POLICY).unwrap();
    let tull = tb.member(TULL);
    tb.cas_init(0, &tull, "admin", "group member atlas/admin exact\n").unwrap();
    (tb, tull)
}

fn reason<T>(r: &Result<T, vo_authz::client::ClientError>) -> Option<String> {
    r.as_ref().err().and_then(|e| e.reason()).map(str::to_string)
}

#[test]
fn put_then_get_round_trips_and_never_overwrites() {
    let (tb, tull) = with_tull();
    let tmp = tempfile::tempdir().unwrap();
    let up = tmp.path().join("up");
    std::fs::write(&up, b"first").unwrap();
    assert_eq!(status(&tb.run(&tull, Some("admin"), &put(&up, "/home/admin/new.txt"))), 200);
    std::fs::write(&up, b"second").unwrap();
    let again = tb.run(&tull, Some("admin"), &put(&up, "/home/admin/new.txt"));
    assert_eq!((status(&again), reason(&again)), (409, Some("exists".into())));

    let down = tmp.path().join("down");
    assert_eq!(status(&tb.run(&tull, Some("admin"), &get("/home/admin/new.txt", &down))), 200);
    assert_eq!(std::fs::read(down).unwrap(), b"first");
}

#[test]
fn listing_is_sorted_and_marks_directories() {
    let (tb, tull) = with_tull();
    std::fs::create_dir(tb.export.path().join("home/admin/sub")).unwrap();
    std::fs::write(tb.export.path().join("home/admin/a.txt"), b"").unwrap();
    let mut c = tb.open(&tull, Some(&tull.store.load_tag(&vo_authz::Tag::new("admin").unwrap()).unwrap().assertion)).unwrap();
    assert_eq!(c.list("/home/admin").unwrap(), ["a.txt", "calib.db", "sub/"]);
}

#[test]
fn path_errors() {
    let (tb, tull) = with_tull();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cases = [
        (get("/../etc/passwd", &out), 400, "bad-path"),
        (get("home/admin/calib.db", &out), 400, "bad-path"),
        (get("/home/admin/missing", &out), 404, "not-found"),
        (get("/home/admin", &out), 400, "not-a-file"),
        (ls("/home/admin/calib.db"), 400, "not-a-directory"),
    ];
    for (cmd, want_status, want_reason) in cases {
        let r = tb.run(&tull, Some("admin"), &cmd);
        assert_eq!((status(&r), reason(&r).as_deref()), (want_status, Some(want_reason)), "{cmd:?}");
    }
}

#[test]
fn symlinks_inside_the_export_are_refused() {
    let (tb, tull) = with_tull();
    std::os::unix::fs::symlink("/etc", tb.export.path().join("home/admin/etc")).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let r = tb.run(&tull, Some("admin"), &get("/home/admin/etc/hostname", &tmp.path().join("h")));
    assert_eq!((status(&r), reason(&r)), (403, Some("symlink".into())));
}

#[test]
fn public_area_is_read_only() {
    let (tb, tull) = with_tull();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("readme");
    assert_eq!(status(&tb.run(&tull, Some("admin"), &get("/pub/readme", &out))), 200);
    let r = tb.run(&tull, Some("admin"), &put(&out, "/pub/copy"));
    assert_eq!((status(&r), reason(&r)), (403, Some("local-perms".into())));
    assert!(!tb.export.path().join("pub/copy").exists());
}

#[test]
fn audit_failure_fails_the_request_and_undoes_the_upload() {
    let tb = Testbed::with(Options {
        audit: Some(Arc::new(BrokenDisk)),
        ..Options::default()
    });
    let admin = tb.member(VO_ADMIN);
    tb.admin_load(0, &admin, DEMO_POLICY).unwrap();
    let tull = tb.member(TULL);
    let tmp = tempfile::tempdir().unwrap();
    let up = tmp.path().join("up");
    std::fs::write(&up, b"x").unwrap();
    let r = tb.run(&tull, None, &put(&up, "/home/tull/x"));
    assert_eq!((status(&r), reason(&r)), (500, Some("audit-failure".into())));
    assert!(!tb.export.path().join("home/tull/x").exists());
}

#[test]
fn stale_or_borrowed_assertions_are_refused() {
    let (tb, tull) = with_tull();
    let key = &tb.cas[0].service.issuer.key;
    let rights = RightsSet::new([RightsTuple::membership(&RoleName::new("atlas/admin").unwrap())]);
    let now = Timestamp::now();

    let stale = sign_assertion(AssertionBody::new(dn(CAS_DN), dn(TULL), now.minus(7_200), now.minus(3_600), rights.clone()), key).unwrap();
    let r = tb.open(&tull, Some(&stale));
    assert_eq!((status(&r), reason(&r)), (401, Some("expired".into())));

    let borrowed = sign_assertion(AssertionBody::new(dn(CAS_DN), dn(VO_ADMIN), now, now.plus(600), rights), key).unwrap();
    let r = tb.open(&tull, Some(&borrowed));
    assert_eq!((status(&r), reason(&r)), (401, Some("subject-mismatch".into())));

    let ops: Vec<(String, String)> = tb.memory_audit.records().into_iter().map(|r| (r.op, r.reason)).collect();
    assert_eq!(ops, [("MAP".into(), "expired".into()), ("MAP".into(), "subject-mismatch".into())]);
}

#[test]
fn unauthenticated_peers_are_audited() {
    let tb = Testbed::start();
    let other_root = SecretKey::generate();
    let now = Timestamp::now();
    let id_key = SecretKey::generate();
    let id = IdentityCredential::issue(&other_root, dn(TULL), id_key.public_key(), now.minus(60), now.plus(600)).unwrap();
    let sk = SecretKey::generate();
    let session = SessionCredential::delegate(&id, &id_key, sk.public_key(), now.plus(600)).unwrap();
    let mut s = TcpStream::connect(&tb.resource_addr).unwrap();
    prove_identity(&mut s, &session, &sk).unwrap();
    match read_message(&mut s).unwrap() {
        Message::Error(e) => assert_eq!((e.status, e.reason.as_str()), (401, "chain-invalid")),
        other => panic!("unexpected {}", other.kind()),
    }
    let recs = tb.memory_audit.records();
    assert_eq!(recs.len(), 1);
    assert_eq!((recs[0].op.as_str(), recs[0].allowed), ("AUTH", false));
}

#[test]
fn unknown_operation_closes_the_session() {
    let (tb, tull) = with_tull();
    let (session, key) = tull.session();
    let mut s = TcpStream::connect(&tb.resource_addr).unwrap();
    prove_identity(&mut s, &session, &key).unwrap();
    write_message(&mut s, &Message::Command { op: "CHMOD".into(), path: "/".into(), size: None }).unwrap();
    match read_message(&mut s).unwrap() {
        Message::Error(e) => assert_eq!((e.status, e.reason.as_str()), (400, "protocol-error")),
        other => panic!("unexpected {}", other.kind()),
    }
    assert!(read_message(&mut s).is_err());
}
