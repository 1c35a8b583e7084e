//! Prompt template catalog.
//!
//! Templates ship as text assets with `{{slot}}` markers. Every slot that
//! appears in a body is required.

use std::collections::{BTreeMap, BTreeSet};

use super::GatewayError;

/// Version tag of the shipped catalog; bump whenever a template body changes.
pub const CATALOG_VERSION: &str = "prompts-v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    pub required_slots: BTreeSet<String>,
}

impl PromptTemplate {
    pub fn new(template_id: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let required_slots = slot_names(&body);
        PromptTemplate {
            template_id: template_id.into(),
            body,
            required_slots,
        }
    }

    /// Substitute every slot in one pass. Slot values are inserted verbatim
    /// and never re-scanned for markers.
    pub fn render(&self, slots: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        if let Some(missing) = self.required_slots.iter().find(|s| !slots.contains_key(*s)) {
            return Err(GatewayError::MissingSlot {
                template_id: self.template_id.clone(),
                slot: missing.clone(),
            });
        }
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("{{") {
            let Some(len) = rest[start + 2..].find("}}") else {
                break;
            };
            let name = &rest[start + 2..start + 2 + len];
            out.push_str(&rest[..start]);
            match slots.get(name.trim()) {
                Some(value) => out.push_str(value),
                None => out.push_str(&rest[start..start + 4 + len]),
            }
            rest = &rest[start + 4 + len..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

fn slot_names(body: &str) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    let mut rest = body;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else {
            break;
        };
        names.insert(rest[start + 2..start + 2 + len].trim().to_string());
        rest = &rest[start + 4 + len..];
    }
    names
}

#[derive(Debug, Clone)]
pub struct TemplateCatalog {
    templates: BTreeMap<String, PromptTemplate>,
}

macro_rules! shipped {
    ($($id:literal),* $(,)?) => {
        [$(($id, include_str!(concat!("../../assets/prompts/", $id, ".txt")))),*]
    };
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        Self::shipped()
    }
}

impl TemplateCatalog {
    pub fn empty() -> Self {
        TemplateCatalog {
            templates: BTreeMap::new(),
        }
    }

    /// The templates used by the extraction, curation and QA stages.
    pub fn shipped() -> Self {
        let mut catalog = Self::empty();
        for (id, body) in shipped!(
            "text_elements",
            "paper_screening",
            "table_screening",
            "table_triples",
            "innovation",
            "reextract",
            "intent",
            "community_answer",
            "global_answer",
            "direct_answer",
            "unguided_answer",
        ) {
            catalog
                .insert(PromptTemplate::new(id, body))
                .expect("shipped template ids are unique");
        }
        catalog
    }

    pub fn insert(&mut self, template: PromptTemplate) -> Result<(), GatewayError> {
        if self.templates.contains_key(&template.template_id) {
            return Err(GatewayError::DuplicateTemplate(template.template_id));
        }
        self.templates.insert(template.template_id.clone(), template);
        Ok(())
    }

    pub fn get(&self, template_id: &str) -> Result<&PromptTemplate, GatewayError> {
        self.templates
            .get(template_id)
            .ok_or_else(|| GatewayError::UnknownTemplate(template_id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(
        &self,
        template_id: &str,
        slots: &BTreeMap<String, String>,
    ) -> Result<String, GatewayError> {
        self.get(template_id)?.render(slots)
    }
}
