//! Role and group authorization for virtual organizations.
//!
//! A community authorization service (CAS) keeps a policy database in which
//! roles are ordinary target objects, and issues signed, time-bounded
//! assertions listing a member's `(action, target)` rights. A file service
//! verifies those assertions, maps an asserted role to a shared local
//! account, and enforces and audits every operation under the individual's
//! own DN.
//!
//! | module | role |
//! |---|---|
//! | [`policy`] | the CAS database and its command-file language |
//! | [`credentials`] | identities, sessions, handshake, signed assertions |
//! | [`authz`] | pure decision functions: matching, filtering, role extraction |
//! | [`cas`] | the issuing server |
//! | [`resource`] | the enforcing file server |
//! | [`client`] | the tag-based user workflow |

pub mod authz;
pub mod cas;
pub mod client;
pub mod credentials;
pub mod model;
pub mod policy;
pub mod resource;
pub mod text;
pub mod time;
pub mod wire;

mod net;

pub use net::ServerHandle;
pub use model::{MatchMode, RightsTuple, RoleName, SubjectDn, Tag};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/rights.md")]
    struct Rights;
    #[doc = include_str!("../../../book/src/policy.md")]
    struct Policy;
    #[doc = include_str!("../../../book/src/assertions.md")]
    struct Assertions;
    #[doc = include_str!("../../../book/src/file-service.md")]
    struct FileService;
    #[doc = include_str!("../../../book/src/demo.md")]
    struct Demo;
}
