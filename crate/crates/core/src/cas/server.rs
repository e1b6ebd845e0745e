use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Arc;

use crate::authz::RightsSet;
use crate::credentials::authenticate_peer;
use crate::net::{self, ServerHandle};
use crate::wire::{read_message, write_message, Message, WireError};

use super::{CasService, IssueRequest};

/// Starts accepting sessions: handshake, one request, one response, close.
pub fn serve(service: Arc<CasService>, addr: impl ToSocketAddrs) -> io::Result<ServerHandle> {
    net::spawn(addr, move |mut stream: TcpStream| {
        let peer_addr = stream.peer_addr().ok();
        if let Err(e) = handle_session(&service, &mut stream) {
            tracing::debug!(?peer_addr, error = %e, "cas session ended with error");
        }
    })
}

/// Runs one CAS session over any duplex channel.
pub fn handle_session<C: Read + Write>(service: &CasService, channel: &mut C) -> Result<(), WireError> {
    let peer = match authenticate_peer(channel, &service.trust_root, service.now()) {
        Ok(p) => p,
        Err(e) => {
            let _ = write_message(channel, &Message::error(401, e.code(), e.to_string()));
            return Ok(());
        }
    };
    let reply = match read_message(channel) {
        Ok(Message::IssueRequest {
            requested,
            lifetime_seconds,
        }) => {
            let request = IssueRequest {
                requested: RightsSet::new(requested),
                lifetime_seconds,
            };
            match service.issue(&peer, &request) {
                Ok(assertion) => {
                    tracing::info!(subject = %peer.subject, serial = format!("{:032x}", assertion.body.serial), "issued");
                    Message::IssueResponse { assertion }
                }
                Err(e) => e.to_message(),
            }
        }
        Ok(Message::AdminLoad { text }) => match service.admin_load(&peer, &text) {
            Ok(applied) => {
                tracing::info!(admin = %peer.subject, applied, "policy loaded");
                Message::AdminResult { applied }
            }
            Err(e) => e.to_message(),
        },
        Ok(other) => Message::error(
            400,
            "protocol-error",
            format!("unexpected {} frame", other.kind()),
        ),
        Err(e @ (WireError::TooLarge(_) | WireError::Malformed(_))) => {
            Message::error(400, "protocol-error", e.to_string())
        }
        Err(e) => return Err(e),
    };
    write_message(channel, &reply)
}
