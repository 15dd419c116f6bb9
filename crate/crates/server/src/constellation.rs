//! Constellation: peer-support groups with an admin, a capped member
//! roster and a gapless, per-group ordered message log.
//!
//! Every mutation is split into a `plan_*` step that validates against the
//! current state and returns the event to persist, and an `apply_*` step
//! that folds that event in. Replaying the same events always rebuilds the
//! same state. `apply_*` re-validates, so a log that would break an
//! invariant is refused rather than half-applied.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

pub const MAX_MEMBERS: usize = 256;
pub const MAX_NAME_CHARS: usize = 64;
pub const MAX_BODY_CHARS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("group name must be 1 to {MAX_NAME_CHARS} characters")]
    InvalidName,
    #[error("group not found")]
    GroupNotFound,
    #[error("already a member of this group")]
    AlreadyMember,
    #[error("group is full ({MAX_MEMBERS} members)")]
    GroupFull,
    #[error("not a member of this group")]
    NotAMember,
    #[error("message body is empty")]
    EmptyBody,
    #[error("message body exceeds {MAX_BODY_CHARS} characters")]
    BodyTooLarge,
    #[error("group id {0} already used")]
    DuplicateGroupId(String),
    #[error("message seq {found} out of order, expected {expected}")]
    OutOfOrder { expected: u64, found: u64 },
}

impl GroupError {
    pub fn code(&self) -> &'static str {
        match self {
            GroupError::InvalidName => "InvalidName",
            GroupError::GroupNotFound => "GroupNotFound",
            GroupError::AlreadyMember => "AlreadyMember",
            GroupError::GroupFull => "GroupFull",
            GroupError::NotAMember => "NotAMember",
            GroupError::EmptyBody => "EmptyBody",
            GroupError::BodyTooLarge => "BodyTooLarge",
            GroupError::DuplicateGroupId(_) => "DuplicateGroupId",
            GroupError::OutOfOrder { .. } => "OutOfOrder",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub group_id: String,
    pub name: String,
    pub admin: String,
    /// Members in join order; the creator comes first.
    pub members: Vec<String>,
    pub created_at: i64,
}

impl Group {
    pub fn is_member(&self, email: &str) -> bool {
        self.members.iter().any(|m| m == email)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub message_id: String,
    pub group_id: String,
    pub sender: String,
    pub body: String,
    pub seq: u64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCreated {
    pub group_id: String,
    pub name: String,
    pub admin: String,
    pub created_at: i64,
}

/// Payload of both join and exit events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub group_id: String,
    pub email: String,
    pub at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupSummary {
    pub group_id: String,
    pub name: String,
    pub member_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MemberInfo {
    pub email: String,
    pub admin: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupDetails {
    pub group_id: String,
    pub name: String,
    pub admin: String,
    pub members: Vec<MemberInfo>,
    pub member_count: usize,
    pub created_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExitOutcome {
    pub new_admin: Option<String>,
    pub deleted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct GroupLog {
    group: Group,
    messages: Vec<Message>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Constellation {
    /// Live groups in creation order.
    groups: IndexMap<String, GroupLog>,
    /// Ids of deleted groups; never handed out again.
    retired: BTreeSet<String>,
}

fn validate_name(name: &str) -> Result<(), GroupError> {
    let len = name.chars().count();
    if name.trim().is_empty() || len > MAX_NAME_CHARS {
        return Err(GroupError::InvalidName);
    }
    Ok(())
}

fn validate_body(body: &str) -> Result<(), GroupError> {
    if body.trim().is_empty() {
        return Err(GroupError::EmptyBody);
    }
    if body.chars().count() > MAX_BODY_CHARS {
        return Err(GroupError::BodyTooLarge);
    }
    Ok(())
}

impl Constellation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn group(&self, group_id: &str) -> Option<&Group> {
        self.groups.get(group_id).map(|g| &g.group)
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.values().map(|g| &g.group)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    fn log(&self, group_id: &str) -> Result<&GroupLog, GroupError> {
        self.groups.get(group_id).ok_or(GroupError::GroupNotFound)
    }

    fn member_log(&self, user: &str, group_id: &str) -> Result<&GroupLog, GroupError> {
        let log = self.log(group_id)?;
        if !log.group.is_member(user) {
            return Err(GroupError::NotAMember);
        }
        Ok(log)
    }

    /// Latest assigned seq in a group (0 when empty).
    pub fn last_seq(&self, group_id: &str) -> Option<u64> {
        self.groups.get(group_id).map(|g| g.messages.len() as u64)
    }

    // ---- create ----

    pub fn plan_create(
        &self,
        user: &str,
        name: &str,
        group_id: &str,
        now: i64,
    ) -> Result<GroupCreated, GroupError> {
        validate_name(name)?;
        if self.groups.contains_key(group_id) || self.retired.contains(group_id) {
            return Err(GroupError::DuplicateGroupId(group_id.to_string()));
        }
        Ok(GroupCreated {
            group_id: group_id.to_string(),
            name: name.to_string(),
            admin: user.to_string(),
            created_at: now,
        })
    }

    pub fn apply_created(&mut self, ev: &GroupCreated) -> Result<&Group, GroupError> {
        self.plan_create(&ev.admin, &ev.name, &ev.group_id, ev.created_at)?;
        let group = Group {
            group_id: ev.group_id.clone(),
            name: ev.name.clone(),
            admin: ev.admin.clone(),
            members: vec![ev.admin.clone()],
            created_at: ev.created_at,
        };
        let entry = self.groups.entry(ev.group_id.clone()).or_insert(GroupLog {
            group,
            messages: Vec::new(),
        });
        Ok(&entry.group)
    }

    pub fn create_group(&mut self, user: &str, name: &str, now: i64) -> Result<Group, GroupError> {
        let ev = self.plan_create(user, name, &Uuid::new_v4().to_string(), now)?;
        self.apply_created(&ev).cloned()
    }

    // ---- join ----

    pub fn plan_join(&self, user: &str, group_id: &str, now: i64) -> Result<Membership, GroupError> {
        let log = self.log(group_id)?;
        if log.group.is_member(user) {
            return Err(GroupError::AlreadyMember);
        }
        if log.group.members.len() >= MAX_MEMBERS {
            return Err(GroupError::GroupFull);
        }
        Ok(Membership {
            group_id: group_id.to_string(),
            email: user.to_string(),
            at: now,
        })
    }

    pub fn apply_joined(&mut self, ev: &Membership) -> Result<(), GroupError> {
        self.plan_join(&ev.email, &ev.group_id, ev.at)?;
        let log = self.groups.get_mut(&ev.group_id).expect("checked by plan_join");
        log.group.members.push(ev.email.clone());
        Ok(())
    }

    pub fn join_group(&mut self, user: &str, group_id: &str, now: i64) -> Result<(), GroupError> {
        let ev = self.plan_join(user, group_id, now)?;
        self.apply_joined(&ev)
    }

    // ---- exit ----

    pub fn plan_exit(&self, user: &str, group_id: &str, now: i64) -> Result<Membership, GroupError> {
        self.member_log(user, group_id)?;
        Ok(Membership {
            group_id: group_id.to_string(),
            email: user.to_string(),
            at: now,
        })
    }

    /// Removes the member. An exiting admin hands over to the earliest
    /// remaining joiner; the last member leaving deletes the group.
    pub fn apply_exited(&mut self, ev: &Membership) -> Result<ExitOutcome, GroupError> {
        self.plan_exit(&ev.email, &ev.group_id, ev.at)?;
        let log = self.groups.get_mut(&ev.group_id).expect("checked by plan_exit");
        log.group.members.retain(|m| m != &ev.email);
        if log.group.members.is_empty() {
            self.groups.shift_remove(&ev.group_id);
            self.retired.insert(ev.group_id.clone());
            return Ok(ExitOutcome {
                new_admin: None,
                deleted: true,
            });
        }
        let mut new_admin = None;
        if log.group.admin == ev.email {
            log.group.admin = log.group.members[0].clone();
            new_admin = Some(log.group.admin.clone());
        }
        Ok(ExitOutcome {
            new_admin,
            deleted: false,
        })
    }

    pub fn exit_group(&mut self, user: &str, group_id: &str, now: i64) -> Result<ExitOutcome, GroupError> {
        let ev = self.plan_exit(user, group_id, now)?;
        self.apply_exited(&ev)
    }

    // ---- messages ----

    pub fn plan_post(
        &self,
        user: &str,
        group_id: &str,
        body: &str,
        message_id: &str,
        now: i64,
    ) -> Result<Message, GroupError> {
        let log = self.member_log(user, group_id)?;
        validate_body(body)?;
        Ok(Message {
            message_id: message_id.to_string(),
            group_id: group_id.to_string(),
            sender: user.to_string(),
            body: body.to_string(),
            seq: log.messages.len() as u64 + 1,
            timestamp: now,
        })
    }

    pub fn apply_posted(&mut self, msg: &Message) -> Result<(), GroupError> {
        let planned = self.plan_post(&msg.sender, &msg.group_id, &msg.body, &msg.message_id, msg.timestamp)?;
        if planned.seq != msg.seq {
            return Err(GroupError::OutOfOrder {
                expected: planned.seq,
                found: msg.seq,
            });
        }
        let log = self.groups.get_mut(&msg.group_id).expect("checked by plan_post");
        log.messages.push(msg.clone());
        Ok(())
    }

    pub fn post_message(&mut self, user: &str, group_id: &str, body: &str, now: i64) -> Result<Message, GroupError> {
        let msg = self.plan_post(user, group_id, body, &Uuid::new_v4().to_string(), now)?;
        self.apply_posted(&msg)?;
        Ok(msg)
    }

    // ---- queries ----

    /// Case-insensitive substring search on group names, oldest first.
    /// Exposes only names and member counts.
    pub fn search_groups(&self, query: &str) -> Vec<GroupSummary> {
        let needle = query.to_lowercase();
        let mut hits: Vec<&Group> = self
            .groups()
            .filter(|g| g.name.to_lowercase().contains(&needle))
            .collect();
        hits.sort_by_key(|g| g.created_at);
        hits.into_iter()
            .map(|g| GroupSummary {
                group_id: g.group_id.clone(),
                name: g.name.clone(),
                member_count: g.members.len(),
            })
            .collect()
    }

    /// Messages with `seq > since_seq`, ascending.
    pub fn fetch_messages(&self, user: &str, group_id: &str, since_seq: u64) -> Result<&[Message], GroupError> {
        let log = self.member_log(user, group_id)?;
        let start = (since_seq as usize).min(log.messages.len());
        Ok(&log.messages[start..])
    }

    /// Messages regardless of membership, for internal consumers.
    pub fn messages(&self, group_id: &str, since_seq: u64) -> Result<&[Message], GroupError> {
        let log = self.log(group_id)?;
        let start = (since_seq as usize).min(log.messages.len());
        Ok(&log.messages[start..])
    }

    pub fn group_details(&self, user: &str, group_id: &str) -> Result<GroupDetails, GroupError> {
        let g = &self.member_log(user, group_id)?.group;
        Ok(GroupDetails {
            group_id: g.group_id.clone(),
            name: g.name.clone(),
            admin: g.admin.clone(),
            members: g
                .members
                .iter()
                .map(|m| MemberInfo {
                    email: m.clone(),
                    admin: *m == g.admin,
                })
                .collect(),
            member_count: g.members.len(),
            created_at: g.created_at,
        })
    }

    /// Groups the user belongs to, oldest first.
    pub fn member_of(&self, user: &str) -> Vec<GroupSummary> {
        self.groups()
            .filter(|g| g.is_member(user))
            .map(|g| GroupSummary {
                group_id: g.group_id.clone(),
                name: g.name.clone(),
                member_count: g.members.len(),
            })
            .collect()
    }

    /// Checks every structural invariant; used by tests and replay checks.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (id, log) in &self.groups {
            let g = &log.group;
            if id != &g.group_id {
                return Err(format!("group keyed {id} has id {}", g.group_id));
            }
            if g.members.is_empty() || g.members.len() > MAX_MEMBERS {
                return Err(format!("group {id} has {} members", g.members.len()));
            }
            if !g.is_member(&g.admin) {
                return Err(format!("admin of {id} is not a member"));
            }
            let unique: BTreeSet<&String> = g.members.iter().collect();
            if unique.len() != g.members.len() {
                return Err(format!("group {id} has duplicate members"));
            }
            for (i, m) in log.messages.iter().enumerate() {
                if m.seq != i as u64 + 1 || m.group_id != *id {
                    return Err(format!("group {id} message {i} has seq {}", m.seq));
                }
            }
        }
        Ok(())
    }
}
