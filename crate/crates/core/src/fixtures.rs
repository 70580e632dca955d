//! Bundled ITE documents and scenario presets.
//!
//! ITE files live under `fixtures/ites/<type>/<version>.json` and scenario
//! files under `fixtures/scenarios/<label>.json`. Both are compiled in so the
//! binaries work without the source tree.

use crate::ite_model::{parse_ite, IteDescriptor};

/// `(type, version, document)` for every bundled ITE.
pub const ITE_DOCUMENTS: &[(u32, u8, &str)] = &[
    (2, 1, include_str!("../fixtures/ites/2/1.json")),
    (3, 1, include_str!("../fixtures/ites/3/1.json")),
    (4, 1, include_str!("../fixtures/ites/4/1.json")),
    (6, 1, include_str!("../fixtures/ites/6/1.json")),
    (7, 1, include_str!("../fixtures/ites/7/1.json")),
    (10, 1, include_str!("../fixtures/ites/10/1.json")),
];

/// `(label, document)` for the illustrative scenario presets.
pub const SCENARIO_DOCUMENTS: &[(&str, &str)] = &[
    ("A", include_str!("../fixtures/scenarios/A.json")),
    ("B", include_str!("../fixtures/scenarios/B.json")),
    ("C", include_str!("../fixtures/scenarios/C.json")),
    ("D", include_str!("../fixtures/scenarios/D.json")),
];

pub fn builtin_ite(node_type: u32, version: u8) -> Option<IteDescriptor> {
    ITE_DOCUMENTS
        .iter()
        .find(|(t, v, _)| *t == node_type && *v == version)
        .map(|(_, _, doc)| parse_ite(doc.as_bytes()).expect("bundled ITE is valid"))
}

pub fn builtin_ites() -> Vec<IteDescriptor> {
    ITE_DOCUMENTS
        .iter()
        .map(|(_, _, doc)| parse_ite(doc.as_bytes()).expect("bundled ITE is valid"))
        .collect()
}

pub fn scenario_document(label: &str) -> Option<&'static str> {
    SCENARIO_DOCUMENTS
        .iter()
        .find(|(l, _)| l.eq_ignore_ascii_case(label))
        .map(|(_, doc)| *doc)
}
