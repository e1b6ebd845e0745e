//! The CAS policy database.
//!
//! Roles are ordinary target objects of the `group` service type, and role
//! membership is the `member` action on such an object. Grants are stored as
//! exact `(subject, tuple)` pairs; wildcard targets are matched at query time
//! by [`crate::authz`], never expanded here.
//!
//! A store is a value. Every mutating operation returns a new store and
//! leaves the receiver untouched, which makes command files atomic: a failing
//! line simply discards the working copy.

mod command;
mod shared;

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{MatchMode, RightsTuple, SubjectDn};

pub use command::{parse_commands, Command, GrantLine};
pub use shared::SharedPolicy;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{}{reason}", line_prefix(*.line))]
    Reference { line: Option<usize>, reason: String },
    #[error("line {line}: service type {name:?} is already defined")]
    DuplicateServiceType { line: usize, name: String },
    #[error("malformed snapshot at record {record}: {reason}")]
    Snapshot { record: usize, reason: String },
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

impl PolicyError {
    pub(crate) fn parse(line: usize, reason: impl Into<String>) -> Self {
        PolicyError::Parse {
            line,
            reason: reason.into(),
        }
    }

    fn reference(reason: impl Into<String>) -> Self {
        PolicyError::Reference {
            line: None,
            reason: reason.into(),
        }
    }

    fn at_line(self, at: usize) -> Self {
        match self {
            PolicyError::Reference { reason, .. } => PolicyError::Reference {
                line: Some(at),
                reason,
            },
            other => other,
        }
    }

    /// Line of the command file the error refers to, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            PolicyError::Parse { line, .. } | PolicyError::DuplicateServiceType { line, .. } => {
                Some(*line)
            }
            PolicyError::Reference { line, .. } => *line,
            PolicyError::Snapshot { record, .. } => Some(*record),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceType {
    pub name: String,
    pub actions: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PolicyStore {
    service_types: BTreeMap<String, ServiceType>,
    objects: BTreeSet<(String, String)>,
    subjects: BTreeSet<SubjectDn>,
    grants: BTreeSet<(SubjectDn, RightsTuple)>,
}

const SNAPSHOT_HEADER: &str = "# vo-authz policy snapshot v1";
const SNAPSHOT_TRAILER: &str = "# end of snapshot, records:";

impl PolicyStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn service_types(&self) -> impl Iterator<Item = &ServiceType> {
        self.service_types.values()
    }

    pub fn subjects(&self) -> impl Iterator<Item = &SubjectDn> {
        self.subjects.iter()
    }

    pub fn objects(&self) -> impl Iterator<Item = (&str, &str)> {
        self.objects.iter().map(|(s, t)| (s.as_str(), t.as_str()))
    }

    pub fn grants(&self) -> impl Iterator<Item = (&SubjectDn, &RightsTuple)> {
        self.grants.iter().map(|(s, r)| (s, r))
    }

    pub fn has_subject(&self, subject: &SubjectDn) -> bool {
        self.subjects.contains(subject)
    }

    /// Applies a command file. All commands succeed or the store is unchanged;
    /// returns the new store and the number of commands applied.
    pub fn apply_command_file(&self, text: &str) -> Result<(PolicyStore, usize), PolicyError> {
        let commands = parse_commands(text)?;
        let mut next = self.clone();
        for (line, cmd) in &commands {
            next.apply_in_place(*line, cmd)?;
        }
        Ok((next, commands.len()))
    }

    pub fn grant(&self, subject: &SubjectDn, right: &RightsTuple) -> Result<PolicyStore, PolicyError> {
        let mut next = self.clone();
        next.grant_in_place(subject, right)?;
        Ok(next)
    }

    /// Removes a grant. Rescinding a right that was never granted is a no-op.
    pub fn rescind(&self, subject: &SubjectDn, right: &RightsTuple) -> PolicyStore {
        let mut next = self.clone();
        next.grants.remove(&(subject.clone(), right.clone()));
        next
    }

    /// All rights granted to `subject`, sorted by service type, action,
    /// target and match mode. Unknown subjects have no rights.
    pub fn rights_of(&self, subject: &SubjectDn) -> Vec<RightsTuple> {
        self.grants
            .iter()
            .filter(|(s, _)| s == subject)
            .map(|(_, r)| r.clone())
            .collect()
    }

    /// The service type owning `action`. Actions are unique across service
    /// types, so the answer is unambiguous.
    pub fn service_type_of(&self, action: &str) -> Option<&str> {
        self.service_types
            .values()
            .find(|st| st.actions.contains(action))
            .map(|st| st.name.as_str())
    }

    /// Serializes the store as a replayable command file.
    pub fn save_snapshot(&self) -> Vec<u8> {
        let commands = self.to_commands();
        let mut out = String::new();
        out.push_str(SNAPSHOT_HEADER);
        out.push('\n');
        for cmd in &commands {
            out.push_str(&cmd.to_string());
            out.push('\n');
        }
        out.push_str(&format!("{SNAPSHOT_TRAILER} {}\n", commands.len()));
        out.into_bytes()
    }

    pub fn load_snapshot(bytes: &[u8]) -> Result<PolicyStore, PolicyError> {
        let snap_err = |record: usize, reason: &str| PolicyError::Snapshot {
            record,
            reason: reason.to_string(),
        };
        let text = std::str::from_utf8(bytes).map_err(|e| {
            let line = bytes[..e.valid_up_to()].iter().filter(|b| **b == b'\n').count() + 1;
            snap_err(line, "invalid UTF-8")
        })?;
        if !text.starts_with(&format!("{SNAPSHOT_HEADER}\n")) {
            return Err(snap_err(1, "missing snapshot header"));
        }
        let line_count = text.lines().count();
        let Some(rest) = text.strip_suffix('\n') else {
            return Err(snap_err(line_count, "truncated: missing final newline"));
        };
        let last = rest.rsplit('\n').next().unwrap_or_default();
        let declared = last
            .strip_prefix(SNAPSHOT_TRAILER)
            .and_then(|n| n.trim().parse::<usize>().ok())
            .ok_or_else(|| snap_err(line_count, "truncated: missing end-of-snapshot record"))?;
        let (store, applied) = PolicyStore::new().apply_command_file(text).map_err(|e| {
            let record = e.line().unwrap_or(0);
            PolicyError::Snapshot {
                record,
                reason: e.to_string(),
            }
        })?;
        if applied != declared {
            return Err(snap_err(
                line_count,
                &format!("declares {declared} records but holds {applied}"),
            ));
        }
        Ok(store)
    }

    /// SHA-256 of the snapshot encoding; equal stores have equal digests.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.save_snapshot()).into()
    }

    fn to_commands(&self) -> Vec<Command> {
        let mut cmds = Vec::new();
        cmds.extend(self.service_types.values().map(|st| Command::ServiceType {
            name: st.name.clone(),
            actions: st.actions.clone(),
        }));
        cmds.extend(self.subjects.iter().cloned().map(Command::User));
        cmds.extend(self.objects.iter().map(|(s, t)| Command::Object {
            service_type: s.clone(),
            target: t.clone(),
        }));
        cmds.extend(self.grants.iter().map(|(subject, r)| {
            Command::Grant(GrantLine {
                subject: subject.clone(),
                action: r.action().to_string(),
                target: r.target().to_string(),
                match_mode: r.match_mode(),
            })
        }));
        cmds
    }

    fn apply_in_place(&mut self, line: usize, cmd: &Command) -> Result<(), PolicyError> {
        match cmd {
            Command::ServiceType { name, actions } => {
                if self.service_types.contains_key(name) {
                    return Err(PolicyError::DuplicateServiceType {
                        line,
                        name: name.clone(),
                    });
                }
                if let Some(clash) = actions.iter().find(|a| self.service_type_of(a).is_some()) {
                    return Err(PolicyError::Reference {
                        line: Some(line),
                        reason: format!(
                            "action {clash:?} is already defined by service type {:?}; actions must be unambiguous",
                            self.service_type_of(clash).unwrap_or_default()
                        ),
                    });
                }
                self.service_types.insert(
                    name.clone(),
                    ServiceType {
                        name: name.clone(),
                        actions: actions.clone(),
                    },
                );
            }
            Command::User(dn) => {
                self.subjects.insert(dn.clone());
            }
            Command::Object {
                service_type,
                target,
            } => {
                if !self.service_types.contains_key(service_type) {
                    return Err(PolicyError::Reference {
                        line: Some(line),
                        reason: format!("unknown service type {service_type:?}"),
                    });
                }
                // Validates the target with the same rules as a tuple.
                RightsTuple::exact(service_type, "x", target)
                    .map_err(|e| PolicyError::parse(line, e.to_string()))?;
                self.objects.insert((service_type.clone(), target.clone()));
            }
            Command::Grant(g) => {
                let tuple = self.resolve(line, g)?;
                self.grant_in_place(&g.subject, &tuple)
                    .map_err(|e| e.at_line(line))?;
            }
            Command::Rescind(g) => {
                let tuple = self.resolve(line, g)?;
                self.grants.remove(&(g.subject.clone(), tuple));
            }
        }
        Ok(())
    }

    fn resolve(&self, line: usize, g: &GrantLine) -> Result<RightsTuple, PolicyError> {
        let service_type = self.service_type_of(&g.action).ok_or_else(|| PolicyError::Reference {
            line: Some(line),
            reason: format!("action {:?} is not defined by any service type", g.action),
        })?;
        RightsTuple::new(service_type, &g.action, &g.target, g.match_mode)
            .map_err(|e| PolicyError::parse(line, e.to_string()))
    }

    fn grant_in_place(&mut self, subject: &SubjectDn, right: &RightsTuple) -> Result<(), PolicyError> {
        if !self.subjects.contains(subject) {
            return Err(PolicyError::reference(format!("unknown subject {subject}")));
        }
        let registered = self
            .service_types
            .get(right.service_type())
            .is_some_and(|st| st.actions.contains(right.action()));
        if !registered {
            return Err(PolicyError::reference(format!(
                "action {:?} is not defined for service type {:?}",
                right.action(),
                right.service_type()
            )));
        }
        if right.match_mode() == MatchMode::Exact
            && !self
                .objects
                .contains(&(right.service_type().to_string(), right.target().to_string()))
        {
            return Err(PolicyError::reference(format!(
                "unknown object {} {}",
                right.service_type(),
                right.target()
            )));
        }
        self.grants.insert((subject.clone(), right.clone()));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    use proptest::prelude::*;

    const DEMO: &str = "\
servicetype group member
object group atlas/admin
object group atlas/data
user /O=x/CN=A
user /O=x/CN=B
grant /O=x/CN=A member atlas/admin
grant /O=x/CN=A member atlas/data
grant /O=x/CN=B member atlas/data
";

    fn dn(s: &str) -> SubjectDn {
        SubjectDn::new(s).unwrap()
    }

    fn member(role: &str) -> RightsTuple {
        RightsTuple::exact("group", "member", role).unwrap()
    }

    fn demo() -> PolicyStore {
        PolicyStore::new().apply_command_file(DEMO).unwrap().0
    }

    #[test]
    fn command_file_builds_store() {
        let text = "servicetype group member\nuser /O=x/CN=A\nobject group atlas/admin\ngrant /O=x/CN=A member atlas/admin exact\n";
        let (store, n) = PolicyStore::new().apply_command_file(text).unwrap();
        assert_eq!(n, 4);
        assert_eq!(store.rights_of(&dn("/O=x/CN=A")), vec![member("atlas/admin")]);
    }

    #[test]
    fn empty_file_is_a_no_op() {
        let store = demo();
        let (next, n) = store.apply_command_file("").unwrap();
        assert_eq!(n, 0);
        assert_eq!(next, store);
    }

    #[test]
    fn unknown_action_is_a_reference_error_on_its_line() {
        let store = PolicyStore::new()
            .apply_command_file("servicetype group member\nuser /O=x/CN=A\nobject group atlas/admin\n")
            .unwrap()
            .0;
        let err = store
            .apply_command_file("grant /O=x/CN=A fly atlas/admin exact")
            .unwrap_err();
        assert!(matches!(err, PolicyError::Reference { line: Some(1), .. }), "{err:?}");
    }

    #[test]
    fn duplicate_service_type_rejected() {
        let err = demo()
            .apply_command_file("servicetype group member")
            .unwrap_err();
        assert!(matches!(err, PolicyError::DuplicateServiceType { line: 1, .. }));
    }

    #[test]
    fn ambiguous_action_rejected() {
        let err = PolicyStore::new()
            .apply_command_file("servicetype file read,write\nservicetype db read\n")
            .unwrap_err();
        assert!(matches!(err, PolicyError::Reference { line: Some(2), .. }), "{err:?}");
    }

    #[test]
    fn exact_grant_needs_registered_object_but_wildcard_does_not() {
        let base = PolicyStore::new()
            .apply_command_file("servicetype file read\nuser /O=x/CN=A\n")
            .unwrap()
            .0;
        assert!(base
            .apply_command_file("grant /O=x/CN=A read ftp://h/x exact")
            .is_err());
        let (s, _) = base
            .apply_command_file("grant /O=x/CN=A read ftp://h/* wildcard")
            .unwrap();
        assert_eq!(s.rights_of(&dn("/O=x/CN=A")).len(), 1);
    }

    #[test]
    fn grant_is_idempotent_and_checks_subject() {
        let s = demo();
        let b = dn("/O=x/CN=B");
        let once = s.grant(&b, &member("atlas/admin")).unwrap();
        let twice = once.grant(&b, &member("atlas/admin")).unwrap();
        assert_eq!(once, twice);
        assert!(once.rights_of(&b).contains(&member("atlas/admin")));
        let err = s.grant(&dn("/O=x/CN=Nobody"), &member("atlas/data"));
        assert!(err.is_err());
    }

    #[test]
    fn rescind_removes_and_tolerates_absence() {
        let s = demo();
        let b = dn("/O=x/CN=B");
        let r = s.rescind(&b, &member("atlas/data"));
        assert!(r.rights_of(&b).is_empty());
        assert_eq!(r.rescind(&b, &member("atlas/data")), r);
        let again = r.grant(&b, &member("atlas/data")).unwrap();
        assert_eq!(again.rights_of(&b), vec![member("atlas/data")]);
    }

    #[test]
    fn unknown_subject_has_no_rights() {
        assert!(demo().rights_of(&dn("/O=x/CN=Z")).is_empty());
    }

    #[test]
    fn snapshot_round_trip() {
        let s = demo();
        let bytes = s.save_snapshot();
        let loaded = PolicyStore::load_snapshot(&bytes).unwrap();
        assert_eq!(loaded, s);
        let a = dn("/O=x/CN=A");
        assert_eq!(loaded.rights_of(&a), s.rights_of(&a));
        let empty = PolicyStore::new();
        assert_eq!(PolicyStore::load_snapshot(&empty.save_snapshot()).unwrap(), empty);
    }

    #[test]
    fn snapshot_with_spaced_dn_round_trips() {
        let (s, _) = PolicyStore::new()
            .apply_command_file(
                "servicetype group member\nobject group atlas/data\nuser \"/O=doesciencegrid.org/OU=People/CN=Craig E. Tull 49565\"\ngrant \"/O=doesciencegrid.org/OU=People/CN=Craig E. Tull 49565\" member atlas/data\n",
            )
            .unwrap();
        assert_eq!(PolicyStore::load_snapshot(&s.save_snapshot()).unwrap(), s);
    }

    #[test]
    fn truncated_snapshots_fail() {
        let bytes = demo().save_snapshot();
        for cut in 0..bytes.len() {
            assert!(
                PolicyStore::load_snapshot(&bytes[..cut]).is_err(),
                "truncation at {cut} accepted"
            );
        }
    }

    #[test]
    fn snapshot_error_names_offending_record() {
        let text = format!("{SNAPSHOT_HEADER}\nservicetype group member\nuser nobody\n{SNAPSHOT_TRAILER} 2\n");
        match PolicyStore::load_snapshot(text.as_bytes()) {
            Err(PolicyError::Snapshot { record, .. }) => assert_eq!(record, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[derive(Debug, Clone)]
    enum Op {
        Grant(usize, usize),
        Rescind(usize, usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0..3usize, 0..4usize).prop_map(|(s, r)| Op::Grant(s, r)),
            (0..3usize, 0..4usize).prop_map(|(s, r)| Op::Rescind(s, r)),
        ]
    }

    proptest! {
        // A naive set of (subject, right) pairs is the reference model.
        #[test]
        fn grant_rescind_matches_set_model(ops in proptest::collection::vec(op(), 0..40)) {
            let subjects = [dn("/O=x/CN=A"), dn("/O=x/CN=B"), dn("/O=x/CN=C")];
            let rights = [
                member("atlas/admin"),
                member("atlas/data"),
                RightsTuple::wildcard("file", "read", "ftp://h/*").unwrap(),
                RightsTuple::exact("file", "write", "ftp://h/out").unwrap(),
            ];
            let mut store = PolicyStore::new().apply_command_file(
                "servicetype group member\nservicetype file read,write\nobject group atlas/admin\nobject group atlas/data\nobject file ftp://h/out\nuser /O=x/CN=A\nuser /O=x/CN=B\nuser /O=x/CN=C\n",
            ).unwrap().0;
            let mut model: BTreeSet<(usize, usize)> = BTreeSet::new();
            for op in &ops {
                match *op {
                    Op::Grant(s, r) => {
                        store = store.grant(&subjects[s], &rights[r]).unwrap();
                        prop_assert!(store.rights_of(&subjects[s]).contains(&rights[r]));
                        model.insert((s, r));
                    }
                    Op::Rescind(s, r) => {
                        store = store.rescind(&subjects[s], &rights[r]);
                        prop_assert!(!store.rights_of(&subjects[s]).contains(&rights[r]));
                        model.remove(&(s, r));
                    }
                }
            }
            for (si, subject) in subjects.iter().enumerate() {
                let mut expected: Vec<RightsTuple> = model
                    .iter()
                    .filter(|(s, _)| *s == si)
                    .map(|(_, r)| rights[*r].clone())
                    .collect();
                expected.sort();
                prop_assert_eq!(store.rights_of(subject), expected);
            }
            prop_assert_eq!(PolicyStore::load_snapshot(&store.save_snapshot()).unwrap(), store);
        }
    }
}
