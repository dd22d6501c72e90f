#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use scriptorium_core::modes::ClassDef;
use scriptorium_core::*;
use scriptorium_server::{app, AppState, Config};
use serde_json::{json, Value};
use tower::ServiceExt;

pub const PASSWORD: &str = "password1";

pub fn start() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 1, 8, 0, 0).unwrap()
}

/// The application served in-process, without a socket.
pub struct Api {
    pub app: Router,
    pub platform: Arc<Platform>,
    pub clock: ManualClock,
    pub sink: Arc<MemorySink>,
}

#[derive(Debug, Clone)]
pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("not JSON ({e}): {}", self.body))
    }
}

#[derive(Debug, Clone)]
pub enum Payload {
    None,
    Json(Value),
    Text(String),
}

impl Api {
    pub fn new() -> Self {
        Self::with(Platform::builder(), Config::default())
    }

    pub fn with(builder: PlatformBuilder, config: Config) -> Self {
        let clock = ManualClock::new(start());
        let sink = Arc::new(MemorySink::default());
        let platform = Arc::new(
            builder
                .clock(clock.clone())
                .notifier(sink.clone())
                .settings(config.settings())
                .seed(7)
                .build()
                .unwrap(),
        );
        let app = app(AppState::new(Arc::clone(&platform), config));
        Self { app, platform, clock, sink }
    }

    pub async fn send(&self, method: Method, uri: &str, token: Option<&str>, payload: Payload) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let req = match payload {
            Payload::None => req.body(Body::empty()),
            Payload::Json(v) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(v.to_string())),
            Payload::Text(t) => req.header(header::CONTENT_TYPE, "application/x-ndjson").body(Body::from(t)),
        }
        .unwrap();
        self.raw(req).await
    }

    pub async fn raw(&self, req: Request<Body>) -> Reply {
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let headers = res.headers().clone();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        Reply { status, headers, body: String::from_utf8(bytes.to_vec()).unwrap() }
    }

    pub async fn get(&self, uri: &str, token: &str) -> Reply {
        self.send(Method::GET, uri, Some(token), Payload::None).await
    }

    pub async fn post(&self, uri: &str, token: &str, body: Value) -> Reply {
        self.send(Method::POST, uri, Some(token), Payload::Json(body)).await
    }

    pub fn user(&self, email: &str, staff: bool) -> (UserId, String) {
        let id = self.platform.register_user(email, email, PASSWORD, staff).unwrap().user_id;
        let token = self.platform.issue_api_token(id).unwrap().token;
        (id, token)
    }
}

pub fn classes(ids: &[&str]) -> ModeConfig {
    ModeConfig::Classification {
        classes: ids.iter().map(|c| ClassDef { class_id: c.to_string(), label: c.to_string() }).collect(),
    }
}

pub fn page(i: u32) -> NewElement {
    NewElement {
        id: None,
        element_type: "page".into(),
        image: ImageInput { uri: format!("https://iiif.ex/page{i}"), width: 1000, height: 800 },
        polygon: Polygon::from_pairs(&[(0, 0), (1000, 0), (1000, 800), (0, 800)]),
        parent: None,
        order_index: i,
        name: format!("page {i}"),
    }
}

pub fn line(parent: &ElementRecord, i: u32) -> NewElement {
    // Nineteen full-width rows; past that, narrow rows in columns.
    let (x0, x1, y) = if i < 19 {
        (50, 950, 20 + 40 * i64::from(i))
    } else {
        let k = i64::from(i - 19);
        let x = 10 + 30 * (k / 79);
        (x, x + 25, 10 * (k % 79))
    };
    NewElement {
        id: None,
        element_type: "text_line".into(),
        image: ImageInput::from(&parent.image),
        polygon: Polygon::from_pairs(&[(x0, y), (x1, y), (x1, y + 8), (x0, y + 8)]),
        parent: Some(parent.element_id),
        order_index: i,
        name: format!("line {i}"),
    }
}

pub fn v3_manifest(canvases: usize) -> Value {
    let items: Vec<Value> = (0..canvases)
        .map(|i| {
            json!({
                "id": format!("https://ex.org/canvas/{i}"),
                "type": "Canvas",
                "label": {"none": [format!("f. {i}")]},
                "width": 2000,
                "height": 3000,
                "items": [{"type": "AnnotationPage", "items": [{"type": "Annotation", "motivation": "painting",
                    "body": {"id": format!("https://iiif.ex/img{i}/full/max/0/default.jpg"), "type": "Image",
                             "service": [{"id": format!("https://iiif.ex/img{i}"), "type": "ImageService3"}]}}]}]
            })
        })
        .collect();
    json!({"@context": "http://iiif.io/api/presentation/3/context.json", "type": "Manifest", "items": items})
}

/// Who sends a request in the authorization matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Persona {
    Anonymous,
    /// Authenticated, not a member of the project.
    Outsider,
    Contributor,
    Moderator,
    /// Project manager, not staff.
    Manager,
    /// Staff account, not a member of the project.
    Staff,
}

impl Persona {
    pub const ALL: [Persona; 6] = [
        Persona::Anonymous,
        Persona::Outsider,
        Persona::Contributor,
        Persona::Moderator,
        Persona::Manager,
        Persona::Staff,
    ];

    fn role(self) -> Option<Role> {
        match self {
            Persona::Contributor => Some(Role::Contributor),
            Persona::Moderator => Some(Role::Moderator),
            Persona::Manager => Some(Role::Manager),
            _ => None,
        }
    }
}

/// The documented access rule of a route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Public,
    Authenticated,
    Staff,
    /// Project members holding at least this role.
    Member(Role),
}

impl Gate {
    /// Expected outcome: `None` when allowed, else the denial status.
    pub fn expected(self, who: Persona) -> Option<StatusCode> {
        let allowed = match (self, who) {
            (Gate::Public, _) => return None,
            (_, Persona::Anonymous) => return Some(StatusCode::UNAUTHORIZED),
            (Gate::Authenticated, _) => true,
            (Gate::Staff, p) => p == Persona::Staff,
            (Gate::Member(min), p) => p.role().is_some_and(|r| r >= min),
        };
        (!allowed).then_some(StatusCode::FORBIDDEN)
    }
}

/// A private project in mid-campaign, with one token per persona and, for
/// every member, tasks in each state a route needs.
pub struct Seeded {
    pub api: Api,
    pub tokens: BTreeMap<Persona, String>,
    pub users: BTreeMap<Persona, UserId>,
    /// Registered, not yet a member.
    pub newcomer: UserId,
    pub project: ProjectId,
    pub page: ElementRecord,
    pub untasked_line: ElementId,
    pub campaign: CampaignId,
    pub pending: BTreeMap<Persona, TaskId>,
    pub annotated: BTreeMap<Persona, TaskId>,
    pub to_moderate: TaskId,
    pub skipped: TaskId,
    pub export_job: JobId,
    pub invitation: String,
    /// Deactivated by a rotation; must never be echoed back.
    pub revoked_invitation: String,
}

impl Seeded {
    pub fn new() -> Self {
        let api = Api::new();
        let p = &api.platform;
        let (creator, _) = api.user("creator@ex.org", true);
        let mut users = BTreeMap::new();
        let mut tokens = BTreeMap::new();
        for (persona, email, staff) in [
            (Persona::Outsider, "outsider@ex.org", false),
            (Persona::Contributor, "contributor@ex.org", false),
            (Persona::Moderator, "moderator@ex.org", false),
            (Persona::Manager, "manager@ex.org", false),
            (Persona::Staff, "staff@ex.org", true),
        ] {
            let (id, token) = api.user(email, staff);
            users.insert(persona, id);
            tokens.insert(persona, token);
        }
        let newcomer = api.user("newcomer@ex.org", false).0;
        let project = p.create_project(creator, "Registers", "", Visibility::Private).unwrap().project_id;
        for persona in [Persona::Contributor, Persona::Moderator, Persona::Manager] {
            p.set_member_role(creator, project, users[&persona], persona.role().unwrap()).unwrap();
        }
        // The creator steps down so that the only manager is the non-staff one.
        p.set_member_role(creator, project, creator, Role::Contributor).unwrap();
        let manager = users[&Persona::Manager];

        let page = p.import_element_batch(manager, project, vec![page(0)]).unwrap().remove(0);
        let lines = p.import_element_batch(manager, project, (0..10).map(|i| line(&page, i)).collect()).unwrap();
        let new = NewCampaign::new("Line types", classes(&["a", "b"]));
        let campaign = p.create_campaign(manager, project, new).unwrap().campaign_id;
        let tasked: Vec<ElementId> = lines[..9].iter().map(|l| l.element_id).collect();
        p.create_tasks(manager, campaign, &tasked, &BTreeMap::new()).unwrap();
        p.publish_all(manager, campaign).unwrap();
        let open = CampaignPatch { state: Some(CampaignState::Open), ..Default::default() };
        p.update_campaign(manager, campaign, open).unwrap();

        let claim = |persona: Persona| {
            p.claim_batch(campaign, users[&persona], ClaimStrategy::Sequential).unwrap().remove(0).task_id
        };
        let submit = |persona: Persona, task: TaskId| {
            let payload = AnnotationPayload::Classification { class_id: "a".into() };
            p.submit_annotation(task, users[&persona], payload).unwrap();
        };
        let members = [Persona::Contributor, Persona::Moderator, Persona::Manager];
        let mut pending = BTreeMap::new();
        let mut annotated = BTreeMap::new();
        for persona in members {
            pending.insert(persona, claim(persona));
        }
        for persona in members {
            let t = claim(persona);
            submit(persona, t);
            annotated.insert(persona, t);
        }
        let to_moderate = claim(Persona::Contributor);
        submit(Persona::Contributor, to_moderate);
        let skipped = claim(Persona::Contributor);
        p.skip_task(skipped, users[&Persona::Contributor]).unwrap();
        // Non-members act on the contributor's tasks.
        for persona in [Persona::Anonymous, Persona::Outsider, Persona::Staff] {
            pending.insert(persona, pending[&Persona::Contributor]);
            annotated.insert(persona, annotated[&Persona::Contributor]);
        }

        let export = JobPayload::Export { campaign, format: ExportFormat::Csv, options: ExportOptions::default() };
        let export_job = p.enqueue_job(manager, project, export).unwrap().job_id;
        p.drain_jobs(|_| Err("no network".into())).unwrap();
        let revoked_invitation = p.rotate_invitation(manager, project).unwrap().token;
        let invitation = p.rotate_invitation(manager, project).unwrap().token;

        Seeded {
            untasked_line: lines[9].element_id,
            api,
            tokens,
            users,
            newcomer,
            project,
            page,
            campaign,
            pending,
            annotated,
            to_moderate,
            skipped,
            export_job,
            invitation,
            revoked_invitation,
        }
    }

    pub fn token(&self, who: Persona) -> Option<&str> {
        self.tokens.get(&who).map(String::as_str)
    }
}

/// One request of the matrix, built against a fresh fixture.
pub struct RouteCase {
    pub name: &'static str,
    pub gate: Gate,
    pub build: fn(&Seeded, Persona) -> (Method, String, Payload),
}

fn j(v: Value) -> Payload {
    Payload::Json(v)
}

/// Every route of the API with its documented access rule.
pub fn route_table() -> Vec<RouteCase> {
    use Gate::*;
    use Method as M;
    use Role::*;
    macro_rules! case {
        ($name:expr, $gate:expr, |$s:ident, $who:ident| $body:expr) => {
            RouteCase {
                name: $name,
                gate: $gate,
                build: {
                    #[allow(unused_variables)]
                    fn build($s: &Seeded, $who: Persona) -> (Method, String, Payload) {
                        $body
                    }
                    build
                },
            }
        };
    }
    vec![
        case!("POST /auth/register", Public, |s, who| (
            M::POST,
            "/api/v1/auth/register".into(),
            j(json!({"email": format!("new-{who:?}@ex.org"), "password": "password2"}))
        )),
        case!("POST /auth/login", Public, |s, who| (
            M::POST,
            "/api/v1/auth/login".into(),
            j(json!({"email": "contributor@ex.org", "password": PASSWORD}))
        )),
        case!("POST /auth/logout", Authenticated, |s, who| (M::POST, "/api/v1/auth/logout".into(), Payload::None)),
        case!("POST /auth/tokens", Authenticated, |s, who| (M::POST, "/api/v1/auth/tokens".into(), Payload::None)),
        case!("GET /auth/me", Authenticated, |s, who| (M::GET, "/api/v1/auth/me".into(), Payload::None)),
        case!("PATCH /users/{id}", Staff, |s, who| (
            M::PATCH,
            format!("/api/v1/users/{}", s.newcomer),
            j(json!({"active": true}))
        )),
        case!("POST /projects", Staff, |s, who| (
            M::POST,
            "/api/v1/projects".into(),
            j(json!({"name": "Census", "visibility": "public"}))
        )),
        case!("GET /projects", Authenticated, |s, who| (M::GET, "/api/v1/projects".into(), Payload::None)),
        case!("GET /projects/{id}", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/projects/{}", s.project),
            Payload::None
        )),
        case!("GET /projects/{id}/members", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/projects/{}/members", s.project),
            Payload::None
        )),
        case!("PUT /projects/{id}/members/{user}", Member(Manager), |s, who| (
            M::PUT,
            format!("/api/v1/projects/{}/members/{}", s.project, s.newcomer),
            j(json!({"role": "moderator"}))
        )),
        case!("POST /projects/{id}/join", Member(Contributor), |s, who| (
            M::POST,
            format!("/api/v1/projects/{}/join", s.project),
            Payload::None
        )),
        case!("POST /projects/{id}/invitation", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/projects/{}/invitation", s.project),
            Payload::None
        )),
        case!("GET /projects/{id}/invitation", Member(Manager), |s, who| (
            M::GET,
            format!("/api/v1/projects/{}/invitation", s.project),
            Payload::None
        )),
        case!("DELETE /projects/{id}/invitation", Member(Manager), |s, who| (
            M::DELETE,
            format!("/api/v1/projects/{}/invitation", s.project),
            Payload::None
        )),
        case!("POST /projects/{id}/invitation:send", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/projects/{}/invitation:send", s.project),
            j(json!({"emails": ["guest@ex.org"]}))
        )),
        case!("POST /invitations/{token}/join", Authenticated, |s, who| (
            M::POST,
            format!("/api/v1/invitations/{}/join", s.invitation),
            Payload::None
        )),
        case!("POST /projects/{id}/elements:import", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/projects/{}/elements:import", s.project),
            Payload::Text(
                r#"{"type": "page", "image": {"uri": "https://iiif.ex/p9", "width": 100, "height": 100}, "polygon": [[0,0],[100,0],[100,100],[0,100]], "order": 9}"#
                    .into()
            )
        )),
        case!("GET /projects/{id}/elements", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/projects/{}/elements?type=text_line", s.project),
            Payload::None
        )),
        case!("POST /projects/{id}/manifests", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/projects/{}/manifests", s.project),
            j(json!({"document": v3_manifest(2), "page_type": "folio"}))
        )),
        case!("GET /projects/{id}/jobs", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/projects/{}/jobs", s.project),
            Payload::None
        )),
        case!("GET /elements/{id}", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/elements/{}", s.page.element_id),
            Payload::None
        )),
        case!("GET /elements/{id}/children", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/elements/{}/children", s.page.element_id),
            Payload::None
        )),
        case!("POST /projects/{id}/campaigns", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/projects/{}/campaigns", s.project),
            j(json!({"name": "Transcribe", "mode": "transcription",
                     "config": {"mode": "transcription", "granularity": "line_by_line", "target_element_type": "text_line"}}))
        )),
        case!("GET /projects/{id}/campaigns", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/projects/{}/campaigns", s.project),
            Payload::None
        )),
        case!("GET /campaigns/{id}", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/campaigns/{}", s.campaign),
            Payload::None
        )),
        case!("PATCH /campaigns/{id}", Member(Manager), |s, who| (
            M::PATCH,
            format!("/api/v1/campaigns/{}", s.campaign),
            j(json!({"guide": "Pick the dominant script."}))
        )),
        case!("GET /campaigns/{id}/progress", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/campaigns/{}/progress", s.campaign),
            Payload::None
        )),
        case!("GET /campaigns/{id}/agreement", Member(Moderator), |s, who| (
            M::GET,
            format!("/api/v1/campaigns/{}/agreement", s.campaign),
            Payload::None
        )),
        case!("GET /campaigns/{id}/timing", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/campaigns/{}/timing", s.campaign),
            Payload::None
        )),
        case!("POST /campaigns/{id}/tasks", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/campaigns/{}/tasks", s.campaign),
            j(json!({"elements": [s.untasked_line]}))
        )),
        case!("GET /campaigns/{id}/tasks", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/campaigns/{}/tasks?status=pending", s.campaign),
            Payload::None
        )),
        case!("POST /campaigns/{id}/tasks:publish", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/campaigns/{}/tasks:publish", s.campaign),
            j(json!({}))
        )),
        case!("POST /campaigns/{id}/claim", Member(Contributor), |s, who| (
            M::POST,
            format!("/api/v1/campaigns/{}/claim", s.campaign),
            j(json!({"strategy": "random"}))
        )),
        case!("GET /campaigns/{id}/events", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/campaigns/{}/events", s.campaign),
            Payload::None
        )),
        case!("POST /campaigns/{id}/export", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/campaigns/{}/export", s.campaign),
            j(json!({"format": "json"}))
        )),
        case!("POST /campaigns/{id}/release-stale", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/campaigns/{}/release-stale", s.campaign),
            Payload::None
        )),
        case!("GET /tasks/{id}", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/tasks/{}", s.pending[&who]),
            Payload::None
        )),
        case!("GET /tasks/{id}/annotations", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/tasks/{}/annotations", s.annotated[&who]),
            Payload::None
        )),
        case!("POST /tasks/{id}/annotation", Member(Contributor), |s, who| (
            M::POST,
            format!("/api/v1/tasks/{}/annotation", s.pending[&who]),
            j(json!({"mode": "classification", "class_id": "b"}))
        )),
        case!("POST /tasks/{id}/revision", Member(Contributor), |s, who| (
            M::POST,
            format!("/api/v1/tasks/{}/revision", s.annotated[&who]),
            j(json!({"mode": "classification", "class_id": "b"}))
        )),
        case!("POST /tasks/{id}/skip", Member(Contributor), |s, who| (
            M::POST,
            format!("/api/v1/tasks/{}/skip", s.pending[&who]),
            Payload::None
        )),
        case!("POST /tasks/{id}/moderate", Member(Moderator), |s, who| (
            M::POST,
            format!("/api/v1/tasks/{}/moderate", s.to_moderate),
            j(json!({"decision": "reject", "note": "Line is in Latin."}))
        )),
        case!("POST /tasks/{id}/comments", Member(Contributor), |s, who| (
            M::POST,
            format!("/api/v1/tasks/{}/comments", s.pending[&who]),
            j(json!({"body": "Faded ink."}))
        )),
        case!("POST /tasks/{id}/feedback", Member(Contributor), |s, who| (
            M::POST,
            format!("/api/v1/tasks/{}/feedback", s.pending[&who]),
            j(json!({"feedback": "uncertain"}))
        )),
        case!("POST /tasks/{id}/republish", Member(Manager), |s, who| (
            M::POST,
            format!("/api/v1/tasks/{}/republish", s.skipped),
            Payload::None
        )),
        case!("GET /jobs/{id}", Member(Contributor), |s, who| (
            M::GET,
            format!("/api/v1/jobs/{}", s.export_job),
            Payload::None
        )),
        case!("GET /jobs/{id}/download", Member(Manager), |s, who| (
            M::GET,
            format!("/api/v1/jobs/{}/download", s.export_job),
            Payload::None
        )),
    ]
}

/// One evaluated cell of the matrix.
#[derive(Debug)]
pub struct Cell {
    pub route: &'static str,
    pub who: Persona,
    pub expected: Option<StatusCode>,
    pub reply: Reply,
    /// The fixture's deactivated invitation token.
    pub revoked_invitation: String,
}

impl Cell {
    /// Allowed cells must succeed; denied cells must carry the exact status.
    pub fn ok(&self) -> bool {
        match self.expected {
            None => self.reply.status.is_success(),
            Some(status) => self.reply.status == status,
        }
    }
}

/// Runs every (route, persona) pair, each against a fresh fixture.
pub async fn run_matrix() -> Vec<Cell> {
    let mut cells = Vec::new();
    for case in route_table() {
        for who in Persona::ALL {
            let seeded = Seeded::new();
            let (method, uri, payload) = (case.build)(&seeded, who);
            let reply = seeded.api.send(method, &uri, seeded.token(who), payload).await;
            cells.push(Cell {
                route: case.name,
                who,
                expected: case.gate.expected(who),
                reply,
                revoked_invitation: seeded.revoked_invitation.clone(),
            });
        }
    }
    cells
}

/// Substrings that must never appear in a response body.
pub const FORBIDDEN_FRAGMENTS: [&str; 3] = ["credential_hash", "sha256i$", "token_digest"];

/// Whether a body exposes a credential or a revoked invitation token.
pub fn leaks(body: &str, revoked_invitation: &str) -> Option<String> {
    FORBIDDEN_FRAGMENTS
        .iter()
        .find(|f| body.contains(*f))
        .map(|f| f.to_string())
        .or_else(|| body.contains(revoked_invitation).then(|| "revoked invitation token".to_string()))
}
