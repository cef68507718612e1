//! Versioned prompt templates. Slots are written `{name}`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub const TEMPLATE_VERSION: &str = "v1";

const TEMPLATES: &[(&str, &str)] = &[
    ("disambiguate.v1", include_str!("../../data/templates/disambiguate.v1.txt")),
    ("correct.v1", include_str!("../../data/templates/correct.v1.txt")),
    ("encode.v1", include_str!("../../data/templates/encode.v1.txt")),
    ("decode.v1", include_str!("../../data/templates/decode.v1.txt")),
];

pub fn template_ids() -> Vec<&'static str> {
    TEMPLATES.iter().map(|(id, _)| *id).collect()
}

pub(crate) fn template_source(id: &str) -> Result<&'static str> {
    TEMPLATES
        .iter()
        .find(|(t, _)| *t == id)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::Template(format!("unknown template {id:?}")))
}

/// Fills every `{slot}` of template `id`. A slot without a value is an error;
/// extra values are ignored.
pub fn render_prompt(id: &str, slots: &BTreeMap<&str, String>) -> Result<String> {
    let src = template_source(id)?;
    let mut out = String::with_capacity(src.len() + 64);
    let mut rest = src;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| Error::Template(format!("unclosed slot in template {id:?}")))?;
        let name = &after[..close];
        let value = slots
            .get(name)
            .ok_or_else(|| Error::Template(format!("template {id:?} needs slot {name:?}")))?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out.trim_end().to_string())
}
