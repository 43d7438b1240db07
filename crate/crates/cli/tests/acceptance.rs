//! One PASS/FAIL line per primary acceptance criterion. Exits non-zero when
//! any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::future::Future;
use std::panic::AssertUnwindSafe;
use std::process::ExitCode;

use axum::http::{Method, StatusCode};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use webdialog_core::compiler::compile;
use webdialog_core::conf::{ConfStore, HistoryAction, HistoryFilter, MemoryBackend, PropertyOverride, Right, SqliteBackend};
use webdialog_core::dml::{parse_template, validate_structure, TemplateSource, DEFAULT_MAX_OBJECTS};
use webdialog_core::CompiledDialog;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let criteria: Vec<Criterion> = vec![
        ("resolution-oracle", Box::new(resolution_oracle)),
        ("precedence-ladder", Box::new(|| run(&rt, precedence_ladder()))),
        ("warm-open-cache", Box::new(|| run(&rt, warm_open_cache()))),
        ("compile-once", Box::new(|| run(&rt, compile_once()))),
        ("precompile", Box::new(|| run(&rt, precompile()))),
        ("structural-rejection", Box::new(|| run(&rt, structural_rejection()))),
        ("audit-equality", Box::new(|| run(&rt, audit_equality()))),
        ("access-matrix", Box::new(|| run(&rt, access_matrix()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} primary criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(rt: &tokio::runtime::Runtime, f: impl Future<Output = Outcome>) -> Outcome {
    rt.block_on(f)
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "unknown panic".into())
}

// ---- resolution oracle ----

const ORACLE_CASES: usize = 1000;
const ORACLE_TEMPLATE: &str = r#"<dialog id="d" title="Title">
  <label id="l" text="Label"/>
  <form id="f" action="proc:p">
    <field id="x" label="X" type="text" value="0" required="false"/>
  </form>
  <grid id="g" source="query:SELECT 1 AS one" page-size="10">
    <column id="c" field="one" header="one"/>
  </grid>
</dialog>"#;
const LANGS: [&str; 3] = ["en", "fr", "de"];
const EXTRA_ROLES: [&str; 5] = ["r1", "r2", "r3", "r4", "r5"];
/// (object, property, language-dependent, values to draw from)
const PROPS: &[(&str, &str, bool, &[&str])] = &[
    ("d", "title", true, &["Title", "T1", "T2"]),
    ("l", "text", true, &["Label", "A", "B", "C"]),
    ("x", "label", true, &["X", "P", "Q"]),
    ("x", "type", false, &["text", "number", "hidden"]),
    ("x", "value", false, &["0", "1", "2", "3"]),
    ("x", "required", false, &["false", "true"]),
    ("g", "page-size", false, &["10", "5", "7"]),
    ("c", "header", true, &["one", "H1", "H2"]),
];

fn oracle_dialog() -> CompiledDialog {
    let ast = parse_template(&TemplateSource::new("d", ORACLE_TEMPLATE)).unwrap();
    compile(&validate_structure(ast, DEFAULT_MAX_OBJECTS).unwrap()).unwrap()
}

/// Reads the precedence rules literally: an override applies when its role
/// is one of the user's and its language fits; an exact-language value beats
/// a default-language one; among equals the smallest priority number wins,
/// the auto-role holding priority 0. Writes equal to the default are no-ops.
fn oracle(
    dialog: &CompiledDialog,
    writes: &[(usize, String, Option<String>, String)],
    priorities: &BTreeMap<String, u32>,
    lang: &str,
) -> BTreeMap<(String, String), String> {
    let mut effective: BTreeMap<(usize, String, Option<String>), String> = BTreeMap::new();
    for (prop, role, language, value) in writes {
        let (object, property, _, _) = PROPS[*prop];
        let default = dialog.object(object).unwrap().defaults.get(property);
        let key = (*prop, role.clone(), language.clone());
        if default == Some(value) {
            effective.remove(&key);
        } else {
            effective.insert(key, value.clone());
        }
    }
    let mut out = BTreeMap::new();
    for (i, (object, property, text, _)) in PROPS.iter().enumerate() {
        let mut best: Option<((u8, u32), &String)> = None;
        for ((prop, role, language), value) in &effective {
            if *prop != i {
                continue;
            }
            let Some(&prio) = priorities.get(role) else { continue };
            let lang_rank = match (text, language.as_deref()) {
                (false, None) => 0,
                (true, Some(l)) if l == lang => 0,
                (true, Some("en")) => 1,
                _ => continue,
            };
            if best.is_none_or(|(b, _)| (lang_rank, prio) < b) {
                best = Some(((lang_rank, prio), value));
            }
        }
        let default = dialog.object(object).unwrap().defaults.get(*property).cloned();
        if let Some(v) = best.map(|(_, v)| v.clone()).or(default) {
            out.insert((object.to_string(), property.to_string()), v);
        }
    }
    out
}

fn resolution_oracle() -> Outcome {
    let dialog = oracle_dialog();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut agree = 0;
    let mut first_failure = None;
    for case in 0..ORACLE_CASES {
        let store = if case % 2 == 0 {
            ConfStore::new(Box::new(MemoryBackend::new()), "en")
        } else {
            ConfStore::new(Box::new(SqliteBackend::open_in_memory().unwrap()), "en")
        };
        store.create_user("root", "Root", true, "pw").unwrap();
        store.create_user("u", "U", false, "pw").unwrap();
        store.create_user("v", "V", false, "pw").unwrap();
        for r in EXTRA_ROLES {
            store.create_role(r).unwrap();
        }
        store.sync_dialog(&dialog).unwrap();

        // Up to 3 extra roles beside the auto-role: at most 4 in total.
        let mut priorities = BTreeMap::from([("u".to_string(), 0u32)]);
        let mut pool: Vec<u32> = (1..=9).collect();
        let mut roles: Vec<&str> = EXTRA_ROLES.to_vec();
        for _ in 0..rng.random_range(0..=3) {
            let role = roles.swap_remove(rng.random_range(0..roles.len()));
            let prio = pool.swap_remove(rng.random_range(0..pool.len()));
            store.assign_role("u", role, prio).unwrap();
            priorities.insert(role.to_string(), prio);
        }

        let mut writes = Vec::new();
        for _ in 0..rng.random_range(0..=20) {
            let prop = rng.random_range(0..PROPS.len());
            let (object, property, text, values) = PROPS[prop];
            let role = match rng.random_range(0..EXTRA_ROLES.len() + 2) {
                i if i < EXTRA_ROLES.len() => EXTRA_ROLES[i].to_string(),
                i if i == EXTRA_ROLES.len() => "u".to_string(),
                _ => "v".to_string(),
            };
            let language = text.then(|| LANGS[rng.random_range(0..LANGS.len())].to_string());
            let value = values[rng.random_range(0..values.len())].to_string();
            store
                .set_override(
                    "root",
                    PropertyOverride {
                        dialog: "d".into(),
                        object_id: object.into(),
                        property: property.into(),
                        role_id: role.clone(),
                        language: language.clone(),
                        value: value.clone(),
                    },
                )
                .map_err(|e| format!("case {case}: write rejected: {e}"))?;
            writes.push((prop, role, language, value));
        }

        let lang = LANGS[rng.random_range(0..LANGS.len())];
        let expected = oracle(&dialog, &writes, &priorities, lang);
        let resolved = store.resolve_properties(&dialog, "u", lang).unwrap();
        let got: BTreeMap<(String, String), String> = PROPS
            .iter()
            .filter_map(|(o, p, _, _)| resolved.get(o, p).map(|v| ((o.to_string(), p.to_string()), v.to_string())))
            .collect();
        if got == expected {
            agree += 1;
        } else if first_failure.is_none() {
            first_failure = Some(format!("case {case} (lang {lang}): expected {expected:?}, got {got:?}"));
        }
    }
    ensure!(
        agree == ORACLE_CASES,
        "{agree}/{ORACLE_CASES} agree (tolerance: 100%); first mismatch: {}",
        first_failure.unwrap_or_default()
    );
    Ok(format!("{agree}/{ORACLE_CASES} randomized configurations agree with the brute-force oracle (tolerance: 100%)"))
}

// ---- precedence ladder ----

const INTRO_DEFAULT: &str = "Enter a new order below.";

fn intro(scope: Value, value: &str) -> Value {
    json!({
        "scope": scope, "dialog": "orders", "object_id": "intro",
        "property": "text", "language": "en", "value": value,
    })
}

async fn intro_text(h: &Harness, token: &str) -> Result<String, String> {
    let reply = h.get("/dialogs/orders", token).await;
    ensure!(reply.status == StatusCode::OK, "GET orders: {} {}", reply.status, reply.body);
    let start = reply
        .body
        .find(r#"data-object-id="intro""#)
        .ok_or("intro not rendered")?;
    let rest = &reply.body[start..];
    let open = rest.find('>').ok_or("malformed markup")? + 1;
    let close = rest[open..].find('<').ok_or("malformed markup")?;
    Ok(rest[open..open + close].to_string())
}

async fn precedence_ladder() -> Outcome {
    let h = Harness::new();
    h.state.conf.create_role("staff").unwrap();
    h.state.conf.create_role("lead").unwrap();
    h.state.conf.assign_role(ALICE.0, "staff", 2).unwrap();
    h.state.conf.assign_role(ALICE.0, "lead", 1).unwrap();
    let root = h.login(ROOT).await;
    let alice = h.login(ALICE).await;

    let mut steps = vec![];
    let mut expect = |label: &str, got: String, want: &str| -> Result<(), String> {
        steps.push(label.to_string());
        ensure!(got == want, "after `{label}`: expected {want:?}, got {got:?}");
        Ok(())
    };
    expect("default", intro_text(&h, &alice).await?, INTRO_DEFAULT)?;

    let layers = [
        (&root, json!({ "role_id": "staff" }), "Staff text"),
        (&root, json!({ "role_id": "lead" }), "Lead text"),
        (&alice, json!("self"), "Alice text"),
    ];
    for (token, scope, value) in &layers {
        let reply = h.put_override(token, intro(scope.clone(), value)).await;
        ensure!(reply.status == StatusCode::OK, "PUT {scope}: {} {}", reply.status, reply.body);
        expect(&format!("add {scope}"), intro_text(&h, &alice).await?, value)?;
    }
    let restored = [
        (&alice, json!("self"), "Lead text"),
        (&root, json!({ "role_id": "lead" }), "Staff text"),
        (&root, json!({ "role_id": "staff" }), INTRO_DEFAULT),
    ];
    for (token, scope, value) in &restored {
        let reply = h
            .send(Method::DELETE, "/overrides", Some(token), Some(intro(scope.clone(), "")), LOCAL)
            .await;
        ensure!(reply.status == StatusCode::OK, "DELETE {scope}: {} {}", reply.status, reply.body);
        expect(&format!("remove {scope}"), intro_text(&h, &alice).await?, value)?;
    }
    Ok(format!("{} steps: default -> role@2 -> role@1 -> auto-role, then removal back to default", steps.len()))
}

// ---- warm-open cache ----

async fn warm_open_cache() -> Outcome {
    let h = Harness::new();
    let alice = h.login(ALICE).await;
    let cold = h.get("/dialogs/orders", &alice).await;
    ensure!(cold.status == StatusCode::OK, "cold GET: {}", cold.status);
    let m1 = h.metrics();
    let warm = h.get("/dialogs/orders", &alice).await;
    ensure!(warm.status == StatusCode::OK, "warm GET: {}", warm.status);
    let m2 = h.metrics();
    let reads = m2.conf_store_reads - m1.conf_store_reads;
    let hits = m2.cache_hits - m1.cache_hits;
    ensure!(reads == 0 && hits == 1, "warm GET: reads delta {reads} (want 0), hits delta {hits} (want 1)");

    let put = h.put_override(&alice, intro(json!("self"), "Changed")).await;
    ensure!(put.status == StatusCode::OK, "PUT: {} {}", put.status, put.body);
    let m3 = h.metrics();
    let after = h.get("/dialogs/orders", &alice).await;
    let m4 = h.metrics();
    ensure!(after.body.contains("Changed"), "override not visible after PUT");
    let misses = m4.cache_misses - m3.cache_misses;
    let hits = m4.cache_hits - m3.cache_hits;
    ensure!(misses == 1 && hits == 0, "after PUT: misses delta {misses} (want 1), hits delta {hits} (want 0)");
    Ok("warm GET: conf_store_reads +0, cache_hits +1; after PUT /overrides: exactly 1 re-resolution".into())
}

// ---- compile-once ----

async fn compile_once() -> Outcome {
    let h = Harness::cold();
    let alice = h.login(ALICE).await;
    for i in 0..100 {
        let reply = h.get("/dialogs/hello", &alice).await;
        ensure!(reply.status == StatusCode::OK, "GET #{i}: {}", reply.status);
    }
    let after_100 = h.metrics().compile_count;
    ensure!(after_100 == 1, "compile_count after 100 GETs = {after_100} (want 1)");

    let path = h.dir.path().join("hello.dml");
    let text = std::fs::read_to_string(&path).unwrap().replace("</dialog>", "  <label id=\"added\" text=\"Added later\"/>\n</dialog>");
    std::fs::write(&path, text).unwrap();
    let reply = h.get("/dialogs/hello", &alice).await;
    ensure!(reply.body.contains("Added later"), "changed template not served");
    let after_change = h.metrics().compile_count;
    ensure!(after_change == 2, "compile_count after change = {after_change} (want 2)");
    Ok("100 GETs in lazy mode: compile_count = 1; changed file: compile_count = 2".into())
}

// ---- precompile ----

async fn precompile() -> Outcome {
    let dir = template_dir();
    std::fs::write(dir.path().join("broken.dml"), "<dialog id=\"broken\" title=\"B\"><grid id=\"g\"></dialog>").unwrap();
    let h = Harness::with_config(dir, |c| c.precompile = true);
    let summary = h.state.precompile.as_ref().ok_or("no precompile summary")?;
    let counts = (summary.compiled_count(), summary.errors.len());
    ensure!(counts == (3, 1), "precompile reported {counts:?} (want (3, 1))");
    ensure!(summary.errors[0].0.starts_with("broken"), "wrong failure: {}", summary.errors[0].0);
    let compiles = h.metrics().compile_count;
    let alice = h.login(ALICE).await;
    for name in DIALOGS {
        let reply = h.get(&format!("/dialogs/{name}"), &alice).await;
        ensure!(reply.status == StatusCode::OK, "GET {name}: {}", reply.status);
    }
    let broken = h.get("/dialogs/broken", &alice).await.status;
    ensure!(broken != StatusCode::OK, "broken template was served");
    ensure!(h.metrics().compile_count == compiles, "serving precompiled dialogs recompiled them");
    Ok(format!("reported (3 compiled, 1 error); the 3 are served without recompiling; broken -> {}", broken.as_u16()))
}

// ---- structural rejection ----

const ALLOWED: &[(&str, &str)] = &[
    ("dialog", "form"),
    ("dialog", "grid"),
    ("dialog", "label"),
    ("form", "label"),
    ("form", "field"),
    ("form", "select"),
    ("form", "button"),
    ("grid", "column"),
];
const TYPES: [&str; 8] = ["dialog", "form", "grid", "label", "field", "select", "button", "column"];
const TEST_MAX_OBJECTS: usize = 8;

fn element(kind: &str, id: &str, inner: &str) -> String {
    let attrs = match kind {
        "dialog" => r#" title="t""#,
        "form" => r#" action="proc:noop""#,
        "grid" | "select" => r#" source="query:SELECT 1 AS x""#,
        "label" => r#" text="t""#,
        "field" => r#" label="f""#,
        "button" => r#" text="b" action="proc:noop""#,
        "column" => r#" field="x""#,
        other => unreachable!("{other}"),
    };
    if inner.is_empty() {
        format!(r#"<{kind} id="{id}"{attrs}/>"#)
    } else {
        format!(r#"<{kind} id="{id}"{attrs}>{inner}</{kind}>"#)
    }
}

/// Places an element of type `kind` at a position where it is allowed.
fn place(name: &str, kind: &str, inner: String) -> String {
    match kind {
        "dialog" => inner.replacen(r#"id="p""#, &format!(r#"id="{name}""#), 1),
        "form" | "grid" | "label" => element("dialog", name, &inner),
        "field" | "select" | "button" => element("dialog", name, &element("form", "wrap", &inner)),
        _ => element("dialog", name, &element("grid", "wrap", &inner)),
    }
}

async fn save(h: &Harness, token: &str, name: &str, source: &str) -> (StatusCode, Value) {
    let reply = h
        .send(Method::POST, "/admin/dialogs", Some(token), Some(json!({ "name": name, "source": source })), LOCAL)
        .await;
    (reply.status, reply.json())
}

async fn structural_rejection() -> Outcome {
    let h = Harness::with_config(template_dir(), |c| c.max_objects = TEST_MAX_OBJECTS);
    let root = h.login(ROOT).await;
    let (mut rejected, mut accepted) = (0, 0);
    for (i, parent) in TYPES.iter().enumerate() {
        for (j, child) in TYPES.iter().enumerate() {
            let name = format!("pair_{i}_{j}");
            let doc = place(&name, parent, element(parent, "p", &element(child, "c", "")));
            let (status, body) = save(&h, &root, &name, &doc).await;
            if ALLOWED.contains(&(parent, child)) {
                ensure!(status == StatusCode::OK, "{parent}->{child} should be accepted: {status} {body}");
                accepted += 1;
            } else {
                let kind = &body["diagnostics"][0]["kind"];
                ensure!(
                    status == StatusCode::UNPROCESSABLE_ENTITY && kind == "parent-child-violation",
                    "{parent}->{child} should be rejected as parent-child-violation: {status} {body}"
                );
                rejected += 1;
            }
        }
    }
    let disallowed = TYPES.len() * TYPES.len() - ALLOWED.len();
    ensure!(rejected == disallowed, "rejected {rejected} of {disallowed} disallowed pairs");

    let labels = |n: usize| -> String {
        let inner: String = (1..n).map(|k| element("label", &format!("l{k}"), "")).collect();
        element("dialog", &format!("limit{n}"), &inner)
    };
    let (at_max, _) = save(&h, &root, &format!("limit{TEST_MAX_OBJECTS}"), &labels(TEST_MAX_OBJECTS)).await;
    let over = TEST_MAX_OBJECTS + 1;
    let (above, body) = save(&h, &root, &format!("limit{over}"), &labels(over)).await;
    ensure!(at_max == StatusCode::OK, "N=max ({TEST_MAX_OBJECTS}) rejected: {at_max}");
    ensure!(
        above == StatusCode::UNPROCESSABLE_ENTITY && body["diagnostics"][0]["kind"] == "object-limit-exceeded",
        "N=max+1 not rejected as object-limit-exceeded: {above} {body}"
    );
    Ok(format!(
        "{rejected}/{disallowed} disallowed pairs rejected, {accepted}/{} allowed accepted; N={TEST_MAX_OBJECTS} accepted, N={over} rejected",
        ALLOWED.len()
    ))
}

// ---- audit equality ----

async fn audit_equality() -> Outcome {
    let h = Harness::new();
    let alice = h.login(ALICE).await;
    for uri in ["/dialogs/orders", "/dialogs/hello", "/dialogs/customers", "/dialogs/orders?page=2", "/dialogs/hello?lang=fr"] {
        let reply = h.get(uri, &alice).await;
        ensure!(reply.status == StatusCode::OK, "GET {uri}: {}", reply.status);
    }
    let actions = [
        ("orders", "save", json!({ "item": "Audit", "qty": 2, "customer": 1 })),
        ("orders", "clear", json!({})),
        ("customers", "add", json!({ "name": "Umbrella", "city": "Raccoon" })),
    ];
    for (dialog, button, params) in actions {
        let reply = h.action(&alice, dialog, button, params).await;
        ensure!(reply.status == StatusCode::OK, "action {dialog}/{button}: {} {}", reply.status, reply.body);
    }
    for value in ["First", "Second"] {
        let reply = h.put_override(&alice, intro(json!("self"), value)).await;
        ensure!(reply.status == StatusCode::OK, "PUT: {}", reply.status);
    }
    // Rejected requests leave no trace.
    let noise = [
        h.get("/dialogs/missing", &alice).await.status,
        h.action(&alice, "orders", "save", json!({ "item": "x" })).await.status,
        h.action(&alice, "orders", "save", json!({ "item": "x", "qty": 0, "customer": 1 })).await.status,
    ];
    ensure!(noise.iter().all(|s| *s != StatusCode::OK), "noise requests unexpectedly succeeded: {noise:?}");

    let count = |action| {
        h.state
            .conf
            .list_history(&HistoryFilter { user: Some(ALICE.0.into()), action: Some(action), dialog: None })
            .map(|e| e.len())
    };
    let got = (
        count(HistoryAction::OpenDialog).unwrap(),
        count(HistoryAction::InvokeAction).unwrap(),
        count(HistoryAction::SetOverride).unwrap(),
    );
    ensure!(got == (5, 3, 2), "history open/action/override = {got:?} (want (5, 3, 2))");
    Ok("history holds exactly 5 opens / 3 actions / 2 override writes; rejected requests unrecorded".into())
}

// ---- access matrix ----

#[derive(Debug, Clone, Copy, PartialEq)]
enum Terminal {
    Unbound,
    BoundHere,
    BoundElsewhere,
}

async fn access_matrix() -> Outcome {
    let h = Harness::new();
    let mut cells = 0;
    let mut user_index = 0;
    for admin in [false, true] {
        for grant in [false, true] {
            for terminal in [Terminal::Unbound, Terminal::BoundHere, Terminal::BoundElsewhere] {
                user_index += 1;
                let user = format!("m{user_index}");
                h.state.conf.create_user(&user, &user, admin, "pw").unwrap();
                if grant {
                    h.state.conf.grant("orders", &user, Right::Open, None).unwrap();
                }
                let login_from = match terminal {
                    Terminal::Unbound => LOCAL,
                    Terminal::BoundHere => {
                        h.state.conf.bind_terminal(&user, &LOCAL.to_string()).unwrap();
                        LOCAL
                    }
                    Terminal::BoundElsewhere => {
                        h.state.conf.bind_terminal(&user, &OTHER.to_string()).unwrap();
                        OTHER
                    }
                };
                let login = h.login_from((&user, "pw"), login_from).await;
                ensure!(login.status == StatusCode::OK, "{user} login: {}", login.status);
                let token = login.json()["token"].as_str().unwrap().to_string();

                let here = terminal != Terminal::BoundElsewhere;
                let code = |ok: bool| if ok { StatusCode::OK } else { StatusCode::FORBIDDEN };
                let save_body = json!({
                    "name": format!("saved_{user}"),
                    "source": format!(r#"<dialog id="saved_{user}" title="S"><label id="l" text="x"/></dialog>"#),
                });
                let matrix: Vec<(&str, Method, String, Option<Value>, StatusCode)> = vec![
                    ("open dialog", Method::GET, "/dialogs/orders".into(), None, code(here && grant)),
                    ("invoke action", Method::POST, "/dialogs/orders/actions/clear".into(), Some(json!({ "params": {} })), code(here && grant)),
                    ("write own override", Method::PUT, "/overrides".into(), Some(intro(json!("self"), "mine")), code(here)),
                    ("save dialog", Method::POST, "/admin/dialogs".into(), Some(save_body), code(here && admin)),
                    ("read history", Method::GET, "/history".into(), None, code(here && admin)),
                    ("poll alerts", Method::GET, "/alerts".into(), None, StatusCode::OK),
                    ("unknown dialog", Method::GET, "/dialogs/missing".into(), None, StatusCode::NOT_FOUND),
                ];
                for (what, method, uri, body, expected) in matrix {
                    let with = h.send(method.clone(), &uri, Some(&token), body.clone(), LOCAL).await.status;
                    ensure!(
                        with == expected,
                        "admin={admin} grant={grant} terminal={terminal:?}: {what} -> {with} (want {expected})"
                    );
                    let without = h.send(method, &uri, None, body, LOCAL).await.status;
                    ensure!(without == StatusCode::UNAUTHORIZED, "{what} without session -> {without} (want 401)");
                    cells += 2;
                }
            }
        }
    }
    Ok(format!("{cells} cells over (admin, grant, terminal) x 7 endpoints match; non-admin save-dialog -> 403"))
}
