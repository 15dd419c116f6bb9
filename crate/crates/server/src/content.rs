//! Operator-seeded static content: diet/exercise suggestions per topic and
//! the doctor directory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TOPICS: [&str; 3] = ["anxiety", "depression", "hypertension"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContentError {
    #[error("content file is not valid JSON: {0}")]
    Parse(String),
    #[error("content schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestionPlan {
    pub topic: String,
    pub diet: Vec<String>,
    pub exercise: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoctorProfile {
    pub name: String,
    pub description: String,
    pub timings: String,
    pub address: String,
    pub contact_number: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Content {
    #[serde(default)]
    pub suggestions: Vec<SuggestionPlan>,
    #[serde(default)]
    pub doctors: Vec<DoctorProfile>,
}

fn blank(s: &str) -> bool {
    s.trim().is_empty()
}

impl Content {
    pub fn validate(&self) -> Result<(), ContentError> {
        let schema = |m: String| Err(ContentError::Schema(m));
        for (i, plan) in self.suggestions.iter().enumerate() {
            if !TOPICS.contains(&plan.topic.as_str()) {
                return schema(format!(
                    "suggestions[{i}]: topic {:?} is not one of {TOPICS:?}",
                    plan.topic
                ));
            }
            if self.suggestions[..i].iter().any(|p| p.topic == plan.topic) {
                return schema(format!("suggestions[{i}]: duplicate topic {:?}", plan.topic));
            }
            for (field, list) in [("diet", &plan.diet), ("exercise", &plan.exercise)] {
                if list.is_empty() || list.iter().any(|e| blank(e)) {
                    return schema(format!(
                        "suggestions[{i}].{field} must be a non-empty list of non-empty entries"
                    ));
                }
            }
        }
        for (i, d) in self.doctors.iter().enumerate() {
            let fields = [
                ("name", &d.name),
                ("description", &d.description),
                ("timings", &d.timings),
                ("address", &d.address),
                ("contact_number", &d.contact_number),
            ];
            if let Some((field, _)) = fields.iter().find(|(_, v)| blank(v)) {
                return schema(format!("doctors[{i}].{field} is empty"));
            }
        }
        Ok(())
    }

    pub fn suggestion(&self, topic: &str) -> Option<&SuggestionPlan> {
        self.suggestions.iter().find(|p| p.topic == topic)
    }
}

pub fn parse_content(text: &str) -> Result<Content, ContentError> {
    let content: Content = serde_json::from_str(text).map_err(|e| {
        if e.is_data() {
            ContentError::Schema(e.to_string())
        } else {
            ContentError::Parse(e.to_string())
        }
    })?;
    content.validate()?;
    Ok(content)
}
