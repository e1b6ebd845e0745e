//! The policy command language.
//!
//! ```text
//! servicetype <name> <action>[,<action>...]
//! user <subject-dn>
//! object <servicetype> <target>
//! grant <subject-dn> <action> <target> [exact|wildcard]
//! rescind <subject-dn> <action> <target> [exact|wildcard]
//! ```
//!
//! Parsing here is purely syntactic. Resolving an action to its service type
//! happens when a command is applied to a store.

use std::collections::BTreeSet;
use std::fmt;

use crate::model::{is_token, MatchMode, SubjectDn};
use crate::text;

use super::PolicyError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    ServiceType {
        name: String,
        actions: BTreeSet<String>,
    },
    User(SubjectDn),
    Object {
        service_type: String,
        target: String,
    },
    Grant(GrantLine),
    Rescind(GrantLine),
}

/// Subject, action and target of a `grant` or `rescind` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantLine {
    pub subject: SubjectDn,
    pub action: String,
    pub target: String,
    pub match_mode: MatchMode,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::ServiceType { name, actions } => {
                let actions: Vec<&str> = actions.iter().map(String::as_str).collect();
                write!(f, "servicetype {name} {}", actions.join(","))
            }
            Command::User(dn) => write!(f, "user {}", dn.to_field()),
            Command::Object {
                service_type,
                target,
            } => write!(f, "object {service_type} {target}"),
            Command::Grant(g) => write!(f, "grant {g}"),
            Command::Rescind(g) => write!(f, "rescind {g}"),
        }
    }
}

impl fmt::Display for GrantLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.subject.to_field(),
            self.action,
            self.target,
            self.match_mode
        )
    }
}

/// Parses a whole command file into `(line_number, command)` pairs.
pub fn parse_commands(text: &str) -> Result<Vec<(usize, Command)>, PolicyError> {
    text::records(text)
        .map(|(line, fields)| {
            let fields = fields.map_err(|e| PolicyError::parse(line, e.to_string()))?;
            parse_line(line, &fields).map(|c| (line, c))
        })
        .collect()
}

fn parse_line(line: usize, fields: &[String]) -> Result<Command, PolicyError> {
    let err = |reason: String| PolicyError::parse(line, reason);
    let keyword = fields[0].as_str();
    let args = &fields[1..];
    match keyword {
        "servicetype" => {
            let [name, actions] = args else {
                return Err(err("expected: servicetype <name> <action>[,<action>...]".into()));
            };
            if !is_token(name) {
                return Err(err(format!("bad service type name {name:?}")));
            }
            let mut set = BTreeSet::new();
            for action in actions.split(',') {
                if !is_token(action) {
                    return Err(err(format!("bad action name {action:?}")));
                }
                if !set.insert(action.to_string()) {
                    return Err(err(format!("duplicate action {action:?}")));
                }
            }
            Ok(Command::ServiceType {
                name: name.clone(),
                actions: set,
            })
        }
        "user" => {
            let [dn] = args else {
                return Err(err("expected: user <subject-dn>".into()));
            };
            let dn = SubjectDn::new(dn.as_str()).map_err(|e| err(e.to_string()))?;
            Ok(Command::User(dn))
        }
        "object" => {
            let [service_type, target] = args else {
                return Err(err("expected: object <servicetype> <target>".into()));
            };
            if !is_token(service_type) {
                return Err(err(format!("bad service type name {service_type:?}")));
            }
            if target.chars().any(|c| c.is_control() || c == '"') {
                return Err(err(format!("bad target {target:?}")));
            }
            Ok(Command::Object {
                service_type: service_type.clone(),
                target: target.clone(),
            })
        }
        "grant" | "rescind" => {
            let (dn, action, target, mode) = match args {
                [dn, action, target] => (dn, action, target, MatchMode::Exact),
                [dn, action, target, mode] => (
                    dn,
                    action,
                    target,
                    mode.parse().map_err(|e: crate::model::ModelError| err(e.to_string()))?,
                ),
                _ => {
                    return Err(err(format!(
                        "expected: {keyword} <subject-dn> <action> <target> [exact|wildcard]"
                    )))
                }
            };
            let subject = SubjectDn::new(dn.as_str()).map_err(|e| err(e.to_string()))?;
            if !is_token(action) {
                return Err(err(format!("bad action name {action:?}")));
            }
            let g = GrantLine {
                subject,
                action: action.clone(),
                target: target.clone(),
                match_mode: mode,
            };
            Ok(if keyword == "grant" {
                Command::Grant(g)
            } else {
                Command::Rescind(g)
            })
        }
        other => Err(err(format!("unknown command {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_each_form() {
        let text = "\
servicetype group member
user \"/O=doesciencegrid.org/OU=People/CN=Craig E. Tull 49565\"
object group atlas/admin
grant /O=x/CN=A member atlas/admin
rescind /O=x/CN=A read ftp://h/* wildcard
";
        let cmds = parse_commands(text).unwrap();
        assert_eq!(cmds.len(), 5);
        assert!(matches!(&cmds[0].1, Command::ServiceType { name, .. } if name == "group"));
        match &cmds[3].1 {
            Command::Grant(g) => assert_eq!(g.match_mode, MatchMode::Exact),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(
            cmds[1].1.to_string(),
            "user \"/O=doesciencegrid.org/OU=People/CN=Craig E. Tull 49565\""
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "user /O=x/CN=A\n\n# c\nbogus thing\n";
        match parse_commands(text) {
            Err(PolicyError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_commands("servicetype group member,member").is_err());
        assert!(parse_commands("grant /O=x/CN=A member t sometimes").is_err());
        assert!(parse_commands("user \"/O=x/CN=A").is_err());
    }
}
