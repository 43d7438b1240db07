mod common;

use std::net::{IpAddr, Ipv4Addr};

use common::*;
use proptest::prelude::*;
use webdialog_core::conf::{OverrideKey, PropertyOverride, Right};

#[derive(Debug, Clone)]
enum Op {
    Open { dialog: usize, lang: usize },
    Set { prop: usize, role: usize, lang: usize, value: usize },
    Delete { prop: usize, role: usize, lang: usize },
    Assign { role: usize, priority: u32 },
    Unassign { role: usize },
    Revoke { object: usize },
    Bind { octet: u8 },
}

const DIALOG_NAMES: [&str; 2] = ["orders", "customers"];
const LANGS: [&str; 2] = ["en", "fr"];
const ROLES: [&str; 3] = ["alice", "staff", "lead"];
/// (dialog, object, property, language-dependent)
const PROPS: [(&str, &str, &str, bool); 4] = [
    ("orders", "intro", "text", true),
    ("orders", "order_list", "page-size", false),
    ("customers", "c_city", "header", true),
    ("customers", "city", "required", false),
];
const VALUES: [[&str; 2]; 4] = [["A", "B"], ["2", "3"], ["Town", "Place"], ["true", "false"]];
const OBJECTS: [(&str, &str); 3] = [("orders", "intro"), ("orders", "clear"), ("customers", "c_city")];

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..2usize, 0..2usize).prop_map(|(dialog, lang)| Op::Open { dialog, lang }),
        4 => (0..4usize, 0..3usize, 0..2usize, 0..2usize)
            .prop_map(|(prop, role, lang, value)| Op::Set { prop, role, lang, value }),
        1 => (0..4usize, 0..3usize, 0..2usize).prop_map(|(prop, role, lang)| Op::Delete { prop, role, lang }),
        1 => (1..3usize, 1..5u32).prop_map(|(role, priority)| Op::Assign { role, priority }),
        1 => (1..3usize).prop_map(|role| Op::Unassign { role }),
        1 => (0..3usize).prop_map(|object| Op::Revoke { object }),
        1 => (1..4u8).prop_map(|octet| Op::Bind { octet }),
    ]
}

fn key(prop: usize, role: usize, lang: usize) -> OverrideKey {
    let (dialog, object, property, text) = PROPS[prop];
    OverrideKey {
        dialog: dialog.into(),
        object_id: object.into(),
        property: property.into(),
        role_id: ROLES[role].into(),
        language: text.then(|| LANGS[lang].to_string()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Whatever the interleaving of writes and opens, a view served through
    /// the cache equals one read straight from the configuration store.
    #[test]
    fn cached_views_match_fresh_reads(ops in proptest::collection::vec(op(), 1..40)) {
        let h = Harness::new();
        let conf = &h.state.conf;
        conf.create_role("staff").unwrap();
        conf.create_role("lead").unwrap();
        for op in ops {
            match op {
                Op::Open { dialog, lang } => {
                    let compiled = h.state.compiled(DIALOG_NAMES[dialog]).unwrap();
                    let cached = h.state.view(&compiled, ALICE.0, LANGS[lang]).unwrap();
                    let fresh = conf.dialog_view(&compiled, ALICE.0, LANGS[lang]).unwrap();
                    prop_assert_eq!(&*cached, &fresh);
                }
                Op::Set { prop, role, lang, value } => {
                    let k = key(prop, role, lang);
                    let _ = conf.set_override(ROOT.0, PropertyOverride {
                        dialog: k.dialog, object_id: k.object_id, property: k.property,
                        role_id: k.role_id, language: k.language,
                        value: VALUES[prop][value].into(),
                    });
                }
                Op::Delete { prop, role, lang } => {
                    let _ = conf.delete_override(ROOT.0, &key(prop, role, lang));
                }
                Op::Assign { role, priority } => {
                    let _ = conf.assign_role(ALICE.0, ROLES[role], priority);
                }
                Op::Unassign { role } => {
                    let _ = conf.unassign_role(ALICE.0, ROLES[role]);
                }
                Op::Revoke { object } => {
                    let (dialog, object) = OBJECTS[object];
                    conf.revoke(dialog, "staff", Right::Open, object).unwrap();
                }
                Op::Bind { octet } => {
                    let ip = IpAddr::V4(Ipv4Addr::new(10, 1, 1, octet));
                    conf.bind_terminal(ALICE.0, &ip.to_string()).unwrap();
                }
            }
        }
    }
}
