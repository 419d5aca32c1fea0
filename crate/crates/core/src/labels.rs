//! Contact labels and hand flags in the reply formats of the language
//! model prompts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("malformed labels: {0}")]
    Malformed(String),
    #[error("joint {0:?} is labeled both contact and separate")]
    Conflict(String),
    #[error("unknown joint {0:?}")]
    UnknownJoint(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContactLabels {
    pub contact: Vec<String>,
    pub separate: Vec<String>,
}

impl ContactLabels {
    pub fn new(contact: Vec<String>, separate: Vec<String>) -> Result<Self, LabelError> {
        let l = Self { contact, separate };
        l.check_disjoint()?;
        Ok(l)
    }

    fn check_disjoint(&self) -> Result<(), LabelError> {
        match self.contact.iter().find(|c| self.separate.contains(c)) {
            Some(c) => Err(LabelError::Conflict(c.clone())),
            None => Ok(()),
        }
    }

    /// Checks every name against `skeleton`.
    pub fn validate(&self, skeleton: &[String]) -> Result<(), LabelError> {
        self.check_disjoint()?;
        for n in self.contact.iter().chain(&self.separate) {
            if !skeleton.contains(n) {
                return Err(LabelError::UnknownJoint(n.clone()));
            }
        }
        Ok(())
    }

    /// Accepts a JSON object `{"contact":[..],"separate":[..]}` or the bare
    /// reply `contact:[..], separate:[..]`.
    pub fn parse(text: &str) -> Result<Self, LabelError> {
        let t = text.trim();
        let json = if t.starts_with('{') { t.to_string() } else { quote_bare_keys(t)? };
        let labels: ContactLabels = serde_json::from_str(&json).map_err(|e| LabelError::Malformed(e.to_string()))?;
        labels.check_disjoint()?;
        Ok(labels)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain strings")
    }
}

fn quote_bare_keys(t: &str) -> Result<String, LabelError> {
    let mut out = String::from("{");
    let mut rest = t.trim_end_matches('.').trim();
    let mut first = true;
    while !rest.is_empty() {
        let colon = rest.find(':').ok_or_else(|| LabelError::Malformed(format!("expected key in {rest:?}")))?;
        let key = rest[..colon].trim().trim_start_matches(',').trim();
        if key != "contact" && key != "separate" {
            return Err(LabelError::Malformed(format!("unknown key {key:?}")));
        }
        let after = rest[colon + 1..].trim_start();
        if !after.starts_with('[') {
            return Err(LabelError::Malformed(format!("expected list after {key}")));
        }
        let close = after.find(']').ok_or_else(|| LabelError::Malformed("unclosed list".into()))?;
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&format!("\"{key}\":{}", &after[..=close]));
        rest = after[close + 1..].trim();
    }
    out.push('}');
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandFlags {
    pub left: bool,
    pub right: bool,
}

impl HandFlags {
    /// Parses `Left Hand: True, Right Hand: False` (case-insensitive values).
    pub fn parse(text: &str) -> Result<Self, LabelError> {
        let mut left = None;
        let mut right = None;
        for part in text.trim().trim_end_matches('.').split(',') {
            let (k, v) = part.split_once(':').ok_or_else(|| LabelError::Malformed(format!("expected key: value in {part:?}")))?;
            let value = match v.trim().to_ascii_lowercase().as_str() {
                "true" => true,
                "false" => false,
                other => return Err(LabelError::Malformed(format!("expected True or False, got {other:?}"))),
            };
            match k.trim().to_ascii_lowercase().as_str() {
                "left hand" => left = Some(value),
                "right hand" => right = Some(value),
                other => return Err(LabelError::Malformed(format!("unknown key {other:?}"))),
            }
        }
        match (left, right) {
            (Some(left), Some(right)) => Ok(Self { left, right }),
            _ => Err(LabelError::Malformed("both hands must be given".into())),
        }
    }

    pub fn to_reply(&self) -> String {
        let b = |v: bool| if v { "True" } else { "False" };
        format!("Left Hand: {}, Right Hand: {}", b(self.left), b(self.right))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::LABELED_PARTS;

    #[test]
    fn parses_bare_reply_and_json() {
        let a = ContactLabels::parse(r#"contact:["L_Wrist"], separate:["R_Elbow"]"#).unwrap();
        let b = ContactLabels::parse(r#"{"contact":["L_Wrist"],"separate":["R_Elbow"]}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.contact, vec!["L_Wrist"]);
        let c = ContactLabels::parse(r#"contact:["L_Wrist", "R_Wrist"], separate:[]"#).unwrap();
        assert_eq!(c.contact.len(), 2);
        assert!(c.separate.is_empty());
        assert_eq!(ContactLabels::parse(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn rejects_malformed_and_conflicting() {
        assert!(ContactLabels::parse("contact: L_Wrist").is_err());
        assert!(ContactLabels::parse(r#"{"contact":["L_Wrist"]"#).is_err());
        assert!(ContactLabels::parse(r#"touch:["L_Wrist"]"#).is_err());
        assert!(matches!(
            ContactLabels::parse(r#"contact:["Head"], separate:["Head"]"#),
            Err(LabelError::Conflict(_))
        ));
    }

    #[test]
    fn validates_against_skeleton() {
        let sk: Vec<String> = LABELED_PARTS.iter().map(|s| s.to_string()).collect();
        assert!(ContactLabels::parse(r#"contact:["L_Wrist"], separate:["R_Elbow"]"#).unwrap().validate(&sk).is_ok());
        assert!(ContactLabels::parse(r#"contact:["Tail"], separate:[]"#).unwrap().validate(&sk).is_err());
    }

    #[test]
    fn hand_flags() {
        let f = HandFlags::parse("Left Hand: True, Right Hand: False").unwrap();
        assert_eq!(f, HandFlags { left: true, right: false });
        assert_eq!(HandFlags::parse(&f.to_reply()).unwrap(), f);
        assert!(HandFlags::parse("Left Hand: yes, Right Hand: False").is_err());
        assert!(HandFlags::parse("Left Hand: True").is_err());
    }
}
