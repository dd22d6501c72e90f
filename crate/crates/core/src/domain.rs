//! Accounts, projects, memberships and invitation links.
//!
//! Roles form a chain: manager ⊇ moderator ⊇ contributor. Every project-scoped
//! operation declares an [`Action`] whose minimum role is checked through
//! [`Platform::require`]; nothing else grants access.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::auth::{random_token, token_digest};
use crate::error::{EntityKind, Error, Result};
use crate::ids::{ProjectId, UserId};
use crate::notify::Notification;
use crate::platform::Platform;
use crate::store::State;

/// Stored account. `credential_hash` stays inside the store; every read path
/// hands out a [`UserProfile`] instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: UserId,
    pub email: String,
    pub display_name: String,
    pub credential_hash: String,
    pub is_staff: bool,
    /// Accounts are deactivated, never deleted.
    pub active: bool,
    pub created_at: DateTime<Utc>,
}

impl UserAccount {
    pub fn profile(&self) -> UserProfile {
        UserProfile {
            user_id: self.user_id,
            email: self.email.clone(),
            display_name: self.display_name.clone(),
            is_staff: self.is_staff,
            active: self.active,
            created_at: self.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub email: String,
    pub display_name: String,
    pub is_staff: bool,
    pub active: bool,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    /// Anyone may sign up as a contributor.
    Public,
    /// Membership changes only through managers (directly or by invitation).
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: ProjectId,
    pub name: String,
    pub description: String,
    pub visibility: Visibility,
    pub created_by: UserId,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Contributor,
    Moderator,
    Manager,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Contributor, Role::Moderator, Role::Manager];

    /// True when this role may perform everything `other` may.
    pub fn covers(self, other: Role) -> bool {
        self >= other
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Contributor => "contributor",
            Role::Moderator => "moderator",
            Role::Manager => "manager",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub project_id: ProjectId,
    pub user_id: UserId,
    pub role: Role,
    pub joined_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvitationLink {
    pub project_id: ProjectId,
    pub token: String,
    pub active: bool,
    pub created_at: DateTime<Utc>,
}

/// Stored form of an invitation. The raw token is dropped on deactivation;
/// only its digest is kept so it can never be issued again.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct InvitationRecord {
    pub(crate) project_id: ProjectId,
    pub(crate) token_digest: String,
    pub(crate) token: Option<String>,
    pub(crate) active: bool,
    pub(crate) created_at: DateTime<Utc>,
}

impl InvitationRecord {
    fn link(&self) -> Option<InvitationLink> {
        self.token.as_ref().map(|token| InvitationLink {
            project_id: self.project_id,
            token: token.clone(),
            active: self.active,
            created_at: self.created_at,
        })
    }
}

/// Every project-scoped operation, with the lowest role allowed to run it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    ViewProject,
    ViewElements,
    ViewCampaign,
    ViewTasks,
    ViewProgress,
    ClaimTasks,
    Annotate,
    SkipTask,
    Comment,
    SetFeedback,
    Moderate,
    ReviseOthers,
    ViewAgreement,
    ManageMembers,
    ManageInvitations,
    ImportElements,
    ManageCampaign,
    CreateTasks,
    PublishTasks,
    RepublishTask,
    Export,
    ReleaseStale,
}

impl Action {
    pub fn min_role(self) -> Role {
        use Action::*;
        match self {
            ViewProject | ViewElements | ViewCampaign | ViewTasks | ViewProgress | ClaimTasks
            | Annotate | SkipTask | Comment | SetFeedback => Role::Contributor,
            Moderate | ReviseOthers | ViewAgreement => Role::Moderator,
            ManageMembers | ManageInvitations | ImportElements | ManageCampaign | CreateTasks
            | PublishTasks | RepublishTask | Export | ReleaseStale => Role::Manager,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectSummary {
    #[serde(flatten)]
    pub project: Project,
    /// The caller's role, absent for public projects they have not joined.
    pub role: Option<Role>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MemberView {
    pub user: UserProfile,
    pub role: Role,
    pub joined_at: DateTime<Utc>,
}

pub(crate) fn active_user(st: &State, user: UserId) -> Result<()> {
    match st.users.get(&user) {
        Some(u) if u.active => Ok(()),
        Some(_) => Err(Error::PermissionDenied),
        None => Err(Error::not_found(EntityKind::User, user)),
    }
}

pub(crate) fn role_in(st: &State, project: ProjectId, user: UserId) -> Option<Role> {
    st.memberships.get(&project)?.get(&user).map(|m| m.role)
}

/// Checks that `user` holds at least `action`'s minimum role in `project`.
pub(crate) fn require(st: &State, project: ProjectId, user: UserId, action: Action) -> Result<Role> {
    if !st.projects.contains_key(&project) {
        return Err(Error::not_found(EntityKind::Project, project));
    }
    active_user(st, user)?;
    match role_in(st, project, user) {
        Some(role) if role.covers(action.min_role()) => Ok(role),
        _ => Err(Error::PermissionDenied),
    }
}

fn upsert_membership(st: &mut State, project: ProjectId, user: UserId, role: Role, now: DateTime<Utc>) -> Membership {
    let members = st.memberships.entry(project).or_default();
    let entry = members.entry(user).or_insert_with(|| Membership {
        project_id: project,
        user_id: user,
        role,
        joined_at: now,
    });
    entry.role = role;
    entry.clone()
}

impl Platform {
    /// Project creation is reserved for staff; the creator becomes manager.
    pub fn create_project(
        &self,
        actor: UserId,
        name: &str,
        description: &str,
        visibility: Visibility,
    ) -> Result<Project> {
        let now = self.now();
        self.write(|st| {
            active_user(st, actor)?;
            if !st.users[&actor].is_staff {
                return Err(Error::PermissionDenied);
            }
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::Validation("project name must not be empty".into()));
            }
            let project = Project {
                project_id: st.ids.next_project(),
                name: name.to_string(),
                description: description.to_string(),
                visibility,
                created_by: actor,
                created_at: now,
            };
            st.projects.insert(project.project_id, project.clone());
            upsert_membership(st, project.project_id, actor, Role::Manager, now);
            Ok(project)
        })
    }

    pub fn project(&self, actor: UserId, project: ProjectId) -> Result<Project> {
        self.read(|st| {
            let p = st
                .projects
                .get(&project)
                .ok_or_else(|| Error::not_found(EntityKind::Project, project))?;
            if p.visibility == Visibility::Private {
                require(st, project, actor, Action::ViewProject)?;
            } else {
                active_user(st, actor)?;
            }
            Ok(p.clone())
        })
    }

    /// Projects the actor belongs to, plus every public project.
    pub fn list_projects(&self, actor: UserId) -> Result<Vec<ProjectSummary>> {
        self.read(|st| {
            active_user(st, actor)?;
            Ok(st
                .projects
                .values()
                .filter_map(|p| {
                    let role = role_in(st, p.project_id, actor);
                    (role.is_some() || p.visibility == Visibility::Public).then(|| ProjectSummary {
                        project: p.clone(),
                        role,
                    })
                })
                .collect())
        })
    }

    pub fn role_of(&self, project: ProjectId, user: UserId) -> Option<Role> {
        self.read(|st| Ok(role_in(st, project, user))).ok().flatten()
    }

    /// Gives `target` exactly `role` in the project, replacing any prior role.
    pub fn set_member_role(
        &self,
        actor: UserId,
        project: ProjectId,
        target: UserId,
        role: Role,
    ) -> Result<Membership> {
        let now = self.now();
        self.write(|st| {
            require(st, project, actor, Action::ManageMembers)?;
            if !st.users.contains_key(&target) {
                return Err(Error::not_found(EntityKind::User, target));
            }
            let members = &st.memberships[&project];
            let demoting_manager = members.get(&target).is_some_and(|m| m.role == Role::Manager) && role != Role::Manager;
            if demoting_manager && members.values().filter(|m| m.role == Role::Manager).count() == 1 {
                return Err(Error::Validation("a project must keep at least one manager".into()));
            }
            Ok(upsert_membership(st, project, target, role, now))
        })
    }

    pub fn members(&self, actor: UserId, project: ProjectId) -> Result<Vec<MemberView>> {
        self.read(|st| {
            require(st, project, actor, Action::ViewProject)?;
            Ok(st
                .memberships
                .get(&project)
                .map(BTreeMap::values)
                .into_iter()
                .flatten()
                .map(|m| MemberView {
                    user: st.users[&m.user_id].profile(),
                    role: m.role,
                    joined_at: m.joined_at,
                })
                .collect())
        })
    }

    /// Deactivates every current link and issues a fresh one.
    pub fn rotate_invitation(&self, actor: UserId, project: ProjectId) -> Result<InvitationLink> {
        let now = self.now();
        self.write(|st| {
            require(st, project, actor, Action::ManageInvitations)?;
            let token = loop {
                let candidate = random_token();
                let digest = token_digest(&candidate);
                if !st.invitations.iter().any(|i| i.token_digest == digest) {
                    break candidate;
                }
            };
            for inv in st.invitations.iter_mut().filter(|i| i.project_id == project) {
                inv.active = false;
                inv.token = None;
            }
            let record = InvitationRecord {
                project_id: project,
                token_digest: token_digest(&token),
                token: Some(token),
                active: true,
                created_at: now,
            };
            let link = record.link().expect("fresh record carries its token");
            st.invitations.push(record);
            Ok(link)
        })
    }

    /// Deactivates the project's link without issuing a new one.
    pub fn revoke_invitation(&self, actor: UserId, project: ProjectId) -> Result<()> {
        self.write(|st| {
            require(st, project, actor, Action::ManageInvitations)?;
            for inv in st.invitations.iter_mut().filter(|i| i.project_id == project) {
                inv.active = false;
                inv.token = None;
            }
            Ok(())
        })
    }

    pub fn active_invitation(&self, actor: UserId, project: ProjectId) -> Result<Option<InvitationLink>> {
        self.read(|st| {
            require(st, project, actor, Action::ManageInvitations)?;
            Ok(st
                .invitations
                .iter()
                .find(|i| i.project_id == project && i.active)
                .and_then(InvitationRecord::link))
        })
    }

    /// Every invitation ever issued for a project, active or not, with tokens
    /// of inactive links withheld.
    pub fn invitation_history(&self, actor: UserId, project: ProjectId) -> Result<Vec<(bool, DateTime<Utc>)>> {
        self.read(|st| {
            require(st, project, actor, Action::ManageInvitations)?;
            Ok(st
                .invitations
                .iter()
                .filter(|i| i.project_id == project)
                .map(|i| (i.active, i.created_at))
                .collect())
        })
    }

    /// Makes `user` a contributor of the invitation's project. Existing
    /// members keep their role.
    pub fn join_via_invitation(&self, token: &str, user: UserId) -> Result<Membership> {
        let now = self.now();
        let digest = token_digest(token);
        self.write(|st| {
            active_user(st, user)?;
            let project = st
                .invitations
                .iter()
                .find(|i| i.active && i.token_digest == digest)
                .map(|i| i.project_id)
                .ok_or(Error::InvalidToken)?;
            if let Some(existing) = st.memberships.get(&project).and_then(|m| m.get(&user)) {
                return Ok(existing.clone());
            }
            Ok(upsert_membership(st, project, user, Role::Contributor, now))
        })
    }

    /// Self-registration on a public project.
    pub fn join_public(&self, project: ProjectId, user: UserId) -> Result<Membership> {
        let now = self.now();
        self.write(|st| {
            active_user(st, user)?;
            let p = st
                .projects
                .get(&project)
                .ok_or_else(|| Error::not_found(EntityKind::Project, project))?;
            if let Some(existing) = st.memberships.get(&project).and_then(|m| m.get(&user)) {
                return Ok(existing.clone());
            }
            if p.visibility != Visibility::Public {
                return Err(Error::PermissionDenied);
            }
            Ok(upsert_membership(st, project, user, Role::Contributor, now))
        })
    }

    /// Sends the active invitation link (issuing one if needed) to each address.
    pub fn send_invitations(
        &self,
        actor: UserId,
        project: ProjectId,
        emails: &[String],
        join_url_prefix: &str,
    ) -> Result<usize> {
        let link = match self.active_invitation(actor, project)? {
            Some(link) => link,
            None => self.rotate_invitation(actor, project)?,
        };
        let name = self.project(actor, project)?.name;
        for email in emails {
            self.notifier.deliver(Notification {
                to: email.clone(),
                subject: format!("Invitation to join {name}"),
                body: format!("Join the project at {join_url_prefix}{}", link.token),
            });
        }
        Ok(emails.len())
    }

    /// Staff-only account activation switch.
    pub fn set_user_active(&self, actor: UserId, user: UserId, active: bool) -> Result<UserProfile> {
        self.write(|st| {
            active_user(st, actor)?;
            if !st.users[&actor].is_staff {
                return Err(Error::PermissionDenied);
            }
            let account = st
                .users
                .get_mut(&user)
                .ok_or_else(|| Error::not_found(EntityKind::User, user))?;
            account.active = active;
            Ok(account.profile())
        })
    }

    pub fn user_profile(&self, user: UserId) -> Result<UserProfile> {
        self.read(|st| {
            st.users
                .get(&user)
                .map(UserAccount::profile)
                .ok_or_else(|| Error::not_found(EntityKind::User, user))
        })
    }
}
