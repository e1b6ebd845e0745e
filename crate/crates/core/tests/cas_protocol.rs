mod common;

use std::io::Write;
use std::net::TcpStream;

use vo_authz::authz::RightsSet;
use vo_authz::client::{self, ClientError};
use vo_authz::credentials::{prove_identity, IdentityCredential, SecretKey, SessionCredential};
use vo_authz::time::Timestamp;
use vo_authz::wire::{read_message, write_message, Message, MAX_FRAME};
use vo_authz::RightsTuple;

use common::*;

fn error_of(msg: Message) -> (u16, String) {
    match msg {
        Message::Error(e) => (e.status, e.reason),
        other => panic!("expected error frame, got {}", other.kind()),
    }
}

fn authed(tb: &Testbed, m: &Member) -> TcpStream {
    let (session, key) = m.session();
    let mut s = TcpStream::connect(tb.cas_addr()).unwrap();
    prove_identity(&mut s, &session, &key).unwrap();
    s
}

#[test]
fn foreign_root_is_refused_at_handshake() {
    let tb = Testbed::start();
    let other_root = SecretKey::generate();
    let now = Timestamp::now();
    let id_key = SecretKey::generate();
    let id = IdentityCredential::issue(&other_root, dn(TULL), id_key.public_key(), now.minus(60), now.plus(600)).unwrap();
    let sk = SecretKey::generate();
    let session = SessionCredential::delegate(&id, &id_key, sk.public_key(), now.plus(600)).unwrap();

    let mut s = TcpStream::connect(tb.cas_addr()).unwrap();
    prove_identity(&mut s, &session, &sk).unwrap();
    assert_eq!(error_of(read_message(&mut s).unwrap()), (401, "chain-invalid".into()));
}

#[test]
fn wrong_session_key_fails_nonce_check() {
    let tb = Testbed::start();
    let m = tb.member(TULL);
    let (session, _) = m.session();
    let mut s = TcpStream::connect(tb.cas_addr()).unwrap();
    prove_identity(&mut s, &session, &SecretKey::generate()).unwrap();
    assert_eq!(error_of(read_message(&mut s).unwrap()), (401, "nonce-mismatch".into()));
}

#[test]
fn only_administrators_load_policy() {
    let tb = Testbed::start();
    let tull = tb.member(TULL);
    let r = tb.admin_load(0, &tull, DEMO_POLICY);
    assert_eq!((status(&r), r.unwrap_err().reason().unwrap().to_string()), (403, "not-admin".into()));
    assert!(tb.cas[0].service.store().subjects().next().is_none());
}

#[test]
fn non_member_gets_no_assertion() {
    let tb = Testbed::start();
    let admin = tb.member(VO_ADMIN);
    tb.admin_load(0, &admin, DEMO_POLICY).unwrap();
    let stranger = tb.member("/O=Grid/CN=Stranger");
    let r = tb.cas_init(0, &stranger, "x", "");
    assert_eq!(status(&r), 403);
    assert_eq!(r.unwrap_err().reason(), Some("no-vo-membership"));
}

#[test]
fn empty_request_yields_every_granted_right() {
    let tb = Testbed::start();
    let admin = tb.member(VO_ADMIN);
    tb.admin_load(0, &admin, DEMO_POLICY).unwrap();
    let tull = tb.member(TULL);
    let a = tb.cas_init(0, &tull, "all", "").unwrap();
    let granted = tb.cas[0].service.store().rights_of(&dn(TULL));
    assert_eq!(a.body.rights, RightsSet::new(granted).tuples().to_vec());
    assert_eq!(a.body.rights.len(), 3);
    assert_eq!(a.body.subject, dn(TULL));
}

#[test]
fn refusal_lists_uncovered_tuples() {
    let tb = Testbed::start();
    let admin = tb.member(VO_ADMIN);
    tb.admin_load(0, &admin, DEMO_POLICY).unwrap();
    let tull = tb.member(TULL);
    let r = tb.cas_init(0, &tull, "w", "group member atlas/admin exact\nfile write ftp://pdsfgrid3.nersc.gov/x exact\n");
    match r {
        Err(ClientError::Refused { status, uncovered, .. }) => {
            assert_eq!(status, 403);
            assert_eq!(uncovered, vec![RightsTuple::exact("file", "write", "ftp://pdsfgrid3.nersc.gov/x").unwrap()]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn lifetime_is_capped() {
    let tb = Testbed::start();
    let admin = tb.member(VO_ADMIN);
    tb.admin_load(0, &admin, DEMO_POLICY).unwrap();
    let tull = tb.member(TULL);
    let (session, key) = tull.session();
    let mut s = TcpStream::connect(tb.cas_addr()).unwrap();
    let a = client::request_assertion(&mut s, &session, &key, &RightsSet::empty(), Some(10_000_000)).unwrap();
    let span = a.body.not_after.unix() - a.body.issued_at.unix();
    assert!(span <= 43_200, "lifetime {span}");
}

#[test]
fn unexpected_frame_is_a_protocol_error() {
    let tb = Testbed::start();
    let m = tb.member(TULL);
    let mut s = authed(&tb, &m);
    write_message(&mut s, &Message::DataHeader { size: 1 }).unwrap();
    assert_eq!(error_of(read_message(&mut s).unwrap()), (400, "protocol-error".into()));
}

#[test]
fn oversized_frame_is_rejected() {
    let tb = Testbed::start();
    let m = tb.member(TULL);
    let mut s = authed(&tb, &m);
    s.write_all(&((MAX_FRAME as u32) + 1).to_be_bytes()).unwrap();
    assert_eq!(error_of(read_message(&mut s).unwrap()), (400, "protocol-error".into()));
}
