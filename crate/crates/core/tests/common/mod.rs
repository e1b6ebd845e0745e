//! A complete local testbed: trust root, CAS servers and a file server on
//! loopback ports, with a scratch export tree.
#![allow(dead_code)]

use std::net::TcpStream;
use std::path::Path;
use std::sync::Arc;

use tempfile::TempDir;
use vo_authz::authz::{parse_filter_file, RightsSet};
use vo_authz::cas::{self, CasService, Issuer, DEFAULT_MAX_LIFETIME};
use vo_authz::client::{self, ClientError, CredentialStore, FileClient, RunCommand, RunOutput, Mapped};
use vo_authz::credentials::{
    Assertion, IdentityCredential, IdentityFile, SecretKey, SessionCredential, TrustedIssuers,
};
use vo_authz::policy::PolicyStore;
use vo_authz::resource::{
    self, AccountTable, AuditSink, GridMap, MemoryAuditLog, ResourceService, RoleMap, VirtualPath,
};
use vo_authz::time::{SystemClock, Timestamp};
use vo_authz::{ServerHandle, SubjectDn, Tag};

pub const DEMO_POLICY: &str = include_str!("../fixtures/demo.policy");
pub const TULL: &str = "/O=doesciencegrid.org/OU=People/CN=Craig E. Tull 49565";
pub const VO_ADMIN: &str = "/O=Grid/OU=People/CN=VO Admin";
pub const CAS_DN: &str = "/O=Grid/CN=CAS atlas";
pub const SERVER_NAME: &str = "pdsfgrid3.nersc.gov";

pub const RUN1: &[u8] = b"run 1 raw events\n";
pub const CALIB: &[u8] = b"calibration constants v7\n";

pub fn dn(s: &str) -> SubjectDn {
    SubjectDn::new(s).unwrap()
}

/// A second CAS: its DN and the accounts the file server's grid map lets it use.
pub struct ExtraCas {
    pub dn: &'static str,
    pub grid_accounts: Vec<&'static str>,
}

pub struct Options {
    pub role_map: &'static str,
    pub personal: Vec<(&'static str, &'static str)>,
    pub extra_cas: Vec<ExtraCas>,
    pub audit: Option<Arc<dyn AuditSink>>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            role_map: "atlas/admin admin\natlas/data data\n",
            personal: vec![(TULL, "tull")],
            extra_cas: Vec::new(),
            audit: None,
        }
    }
}

pub struct CasNode {
    pub dn: SubjectDn,
    pub service: Arc<CasService>,
    pub addr: String,
    handle: Option<ServerHandle>,
}

pub struct Member {
    pub dn: SubjectDn,
    pub store: CredentialStore,
    _dir: TempDir,
}

impl Member {
    pub fn session(&self) -> (SessionCredential, SecretKey) {
        self.store.load_session(Timestamp::now()).unwrap()
    }
}

pub struct Testbed {
    pub root: SecretKey,
    pub cas: Vec<CasNode>,
    pub resource: Arc<ResourceService>,
    pub resource_addr: String,
    pub memory_audit: Arc<MemoryAuditLog>,
    pub export: TempDir,
    resource_handle: Option<ServerHandle>,
}

fn write(root: &Path, rel: &str, bytes: &[u8]) {
    let p = root.join(rel);
    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
    std::fs::write(p, bytes).unwrap();
}

fn start_cas(root: &SecretKey, dn_str: &str) -> CasNode {
    let service = Arc::new(CasService::new(
        Issuer {
            dn: dn(dn_str),
            key: SecretKey::generate(),
            max_lifetime: DEFAULT_MAX_LIFETIME,
        },
        root.public_key(),
        PolicyStore::new(),
        [dn(VO_ADMIN)],
        None,
        Arc::new(SystemClock),
    ));
    let handle = cas::serve(service.clone(), "127.0.0.1:0").unwrap();
    CasNode {
        dn: dn(dn_str),
        addr: handle.local_addr().to_string(),
        service,
        handle: Some(handle),
    }
}

impl Testbed {
    pub fn start() -> Self {
        Self::with(Options::default())
    }

    pub fn with(opts: Options) -> Self {
        let root = SecretKey::generate();
        let mut cas = vec![start_cas(&root, CAS_DN)];
        for extra in &opts.extra_cas {
            cas.push(start_cas(&root, extra.dn));
        }

        let export = tempfile::tempdir().unwrap();
        write(export.path(), "home/data/run1.dat", RUN1);
        write(export.path(), "home/admin/calib.db", CALIB);
        write(export.path(), "home/tull/notes.txt", b"notes\n");
        write(export.path(), "pub/readme", b"public\n");

        let mut issuers = TrustedIssuers::new();
        for c in &cas {
            issuers.insert(c.dn.clone(), c.service.issuer.key.public_key());
        }
        let mut grid = GridMap::new().with(dn(CAS_DN), &["admin", "data"]);
        for extra in &opts.extra_cas {
            for a in &extra.grid_accounts {
                grid.allow(dn(extra.dn), a);
            }
        }
        for (subject, account) in &opts.personal {
            grid.allow(dn(subject), account);
        }
        let memory_audit = Arc::new(MemoryAuditLog::new());
        let audit: Arc<dyn AuditSink> = opts.audit.unwrap_or_else(|| memory_audit.clone());
        let resource = Arc::new(ResourceService {
            server_name: SERVER_NAME.into(),
            export_root: export.path().to_path_buf(),
            public_root: Some(VirtualPath::parse("/pub").unwrap()),
            trust_root: root.public_key(),
            issuers,
            role_map: RoleMap::parse(opts.role_map).unwrap(),
            grid_map: grid,
            accounts: AccountTable::new()
                .with("admin", "/home/admin", true)
                .with("data", "/home/data", true)
                .with("tull", "/home/tull", true),
            audit,
            clock: Arc::new(SystemClock),
        });
        let handle = resource::serve(resource.clone(), "127.0.0.1:0").unwrap();
        Testbed {
            root,
            cas,
            resource_addr: handle.local_addr().to_string(),
            resource,
            memory_audit,
            export,
            resource_handle: Some(handle),
        }
    }

    pub fn cas_addr(&self) -> &str {
        &self.cas[0].addr
    }

    /// A member with a sealed identity and a fresh session in their own
    /// credential directory.
    pub fn member(&self, subject: &str) -> Member {
        let dir = tempfile::tempdir().unwrap();
        let store = CredentialStore::new(dir.path().join("creds"));
        let key = SecretKey::generate();
        let now = Timestamp::now();
        let cred = IdentityCredential::issue(&self.root, dn(subject), key.public_key(), now.minus(60), now.plus(86_400)).unwrap();
        store.save_identity(&IdentityFile::seal(cred, &key, "pw", 1_000)).unwrap();
        client::identity_init(&store, None, "pw", None, now).unwrap();
        Member {
            dn: dn(subject),
            store,
            _dir: dir,
        }
    }

    pub fn admin_load(&self, cas: usize, admin: &Member, text: &str) -> Result<usize, ClientError> {
        let (session, key) = admin.session();
        let mut s = TcpStream::connect(&self.cas[cas].addr).unwrap();
        client::admin_load(&mut s, &session, &key, text)
    }

    /// `vo cas-init <tag> -f <filter>` against CAS number `cas`.
    pub fn cas_init(&self, cas: usize, m: &Member, tag: &str, filter: &str) -> Result<Assertion, ClientError> {
        let requested: RightsSet = parse_filter_file(filter).unwrap();
        client::cas_init(&m.store, &Tag::new(tag).unwrap(), &self.cas[cas].addr, &requested, None, Timestamp::now())
            .map(|(a, _)| a)
    }

    /// `vo run <tag> ...`; `None` runs a personal session.
    pub fn run(&self, m: &Member, tag: Option<&str>, cmd: &RunCommand) -> Result<(Mapped, RunOutput), ClientError> {
        let tag = tag.map(|t| Tag::new(t).unwrap());
        client::run(&m.store, tag.as_ref(), &self.resource_addr, cmd, Timestamp::now())
    }

    pub fn open(&self, m: &Member, assertion: Option<&Assertion>) -> Result<FileClient<TcpStream>, ClientError> {
        let (session, key) = m.session();
        let stream = client::connect(&self.resource_addr).unwrap();
        FileClient::open(stream, &session, &key, assertion)
    }
}

impl Drop for Testbed {
    fn drop(&mut self) {
        if let Some(h) = self.resource_handle.take() {
            h.shutdown();
        }
        for c in &mut self.cas {
            if let Some(h) = c.handle.take() {
                h.shutdown();
            }
        }
    }
}

pub fn ls(path: &str) -> RunCommand {
    RunCommand::Ls { path: path.into() }
}

pub fn get(remote: &str, local: &Path) -> RunCommand {
    RunCommand::Get {
        remote: remote.into(),
        local: local.to_path_buf(),
    }
}

pub fn put(local: &Path, remote: &str) -> RunCommand {
    RunCommand::Put {
        local: local.to_path_buf(),
        remote: remote.into(),
    }
}

/// Status code of a client result: 200 on success, the server's status on refusal.
pub fn status<T>(r: &Result<T, ClientError>) -> u16 {
    match r {
        Ok(_) => 200,
        Err(ClientError::Failed { status, .. } | ClientError::Refused { status, .. }) => *status,
        Err(e) => panic!("transport failure: {e}"),
    }
}
