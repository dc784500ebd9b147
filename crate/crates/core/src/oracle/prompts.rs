//! Versioned prompt templates.
//!
//! Templates use `{key}` placeholders and `{{` / `}}` for literal braces.
//! The density prompt contains literal braces and no placeholders, so it is
//! sent verbatim.

use std::collections::BTreeMap;

use super::{CatalogEntry, PartProposal};

pub const PROMPT_VERSION: &str = "1";

pub const SEGMENTATION: &str = include_str!("../../prompts/segmentation.txt");
pub const MATERIAL_RETRIEVAL: &str = include_str!("../../prompts/material_retrieval.txt");
pub const DENSITY: &str = include_str!("../../prompts/density.txt");
pub const MASK_INSPECTION: &str = include_str!("../../prompts/mask_inspection.txt");
pub const VIDEO_JUDGE: &str = include_str!("../../prompts/video_judge.txt");

/// Substitutes `{key}` placeholders. Unknown keys are an error so a template
/// edit cannot silently ship an unfilled placeholder.
pub fn render_template(template: &str, values: &BTreeMap<&str, String>) -> Result<String, String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find(['{', '}']) {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if tail.starts_with("{{") {
            out.push('{');
            rest = &tail[2..];
        } else if tail.starts_with("}}") {
            out.push('}');
            rest = &tail[2..];
        } else if tail.starts_with('{') {
            let end = tail.find('}').ok_or_else(|| "unterminated placeholder".to_string())?;
            let key = &tail[1..end];
            let value = values.get(key).ok_or_else(|| format!("no value for placeholder {{{key}}}"))?;
            out.push_str(value);
            rest = &tail[end + 1..];
        } else {
            return Err("unmatched '}' in template".into());
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// The segmentation prompt followed by the stem announcement for each
/// attached image, in order.
pub fn segmentation_prompt(stems: &[String]) -> String {
    let mut p = SEGMENTATION.to_string();
    p.push_str("\nImage stems, in the order of the attached images:\n");
    for (i, s) in stems.iter().enumerate() {
        p.push_str(&format!("image {}: {s}\n", i + 1));
    }
    p
}

pub fn format_catalog(catalog: &[CatalogEntry]) -> String {
    catalog.iter().map(|c| format!("- {}: {}", c.id, c.description)).collect::<Vec<_>>().join("\n")
}

pub fn material_prompt(part: &PartProposal, category: &str, catalog: &[CatalogEntry], context: &str) -> String {
    let mut v = BTreeMap::new();
    v.insert(r#"part.get("name", "")"#, part.name.clone());
    v.insert(r#"part.get("material", "")"#, part.material.clone());
    v.insert(r#"part.get("description", "")"#, part.description.clone());
    let oc = if context.trim().is_empty() { String::new() } else { format!("- object context: {context}") };
    v.insert("oc_section", oc);
    v.insert("category", category.to_string());
    v.insert("catalog", format_catalog(catalog));
    render_template(MATERIAL_RETRIEVAL, &v).expect("material template placeholders are complete")
}

pub fn density_prompt() -> String {
    DENSITY.to_string()
}

pub fn mask_inspection_prompt(part: &PartProposal) -> String {
    let mut v = BTreeMap::new();
    v.insert("part_name", part.name.clone());
    v.insert("part_material", part.material.clone());
    v.insert("part_description", part.description.clone());
    render_template(MASK_INSPECTION, &v).expect("mask template placeholders are complete")
}

pub fn video_judge_prompt(instruction: &str) -> String {
    let mut v = BTreeMap::new();
    v.insert("instruction", instruction.to_string());
    render_template(VIDEO_JUDGE, &v).expect("judge template placeholders are complete")
}
