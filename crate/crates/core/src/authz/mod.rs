//! Per-primitive authorization on access labels and the audit trail.

pub mod audit;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{AccessLabel, CredentialRef};

/// Matches any role in a rule's `role`, or any label (including none) in `allow`.
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub id: String,
    #[serde(default)]
    pub roles: BTreeSet<String>,
}

impl Principal {
    pub fn new(id: impl Into<String>, roles: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Principal { id: id.into(), roles: roles.into_iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleCondition {
    #[default]
    Always,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRule {
    pub role: String,
    #[serde(default)]
    pub allow: BTreeSet<String>,
    #[serde(default)]
    pub condition: RuleCondition,
}

/// Identity entry in a policy file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrincipalEntry {
    #[serde(default)]
    pub roles: BTreeSet<String>,
    /// Credential ref of the bearer token that authenticates this principal over HTTP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<CredentialRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    #[serde(default)]
    pub rules: Vec<PolicyRule>,
    #[serde(default)]
    pub principals: BTreeMap<String, PrincipalEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid policy file: {0}")]
pub struct PolicyError(pub String);

impl Policy {
    /// Accepts either a bare rule list or a mapping with `rules` and `principals`.
    pub fn from_yaml(text: &str) -> Result<Policy, PolicyError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Form {
            Rules(Vec<PolicyRule>),
            Full(Policy),
        }
        let form: Form = serde_yaml::from_str(text).map_err(|e| PolicyError(e.to_string()))?;
        let policy = match form {
            Form::Rules(rules) => Policy { rules, principals: BTreeMap::new() },
            Form::Full(p) => p,
        };
        if let Some(r) = policy.rules.iter().find(|r| r.role.trim().is_empty()) {
            return Err(PolicyError(format!("rule with empty role (allow: {:?})", r.allow)));
        }
        Ok(policy)
    }

    /// Every role may invoke every tool.
    pub fn allow_all() -> Policy {
        Policy {
            rules: vec![PolicyRule {
                role: WILDCARD.into(),
                allow: [WILDCARD.to_string()].into(),
                condition: RuleCondition::Always,
            }],
            principals: BTreeMap::new(),
        }
    }

    /// The principal named `id`, with roles from the policy file (none if unlisted).
    pub fn principal(&self, id: &str) -> Principal {
        Principal {
            id: id.to_string(),
            roles: self.principals.get(id).map(|p| p.roles.clone()).unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionKind {
    Allow,
    Deny,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decision {
    pub decision: DecisionKind,
    pub reason: String,
}

impl Decision {
    pub fn allowed(&self) -> bool {
        self.decision == DecisionKind::Allow
    }
}

fn rule_applies(rule: &PolicyRule, principal: &Principal) -> bool {
    rule.role == WILDCARD || principal.roles.contains(&rule.role)
}

fn rule_covers(rule: &PolicyRule, label: Option<&AccessLabel>) -> bool {
    rule.allow.contains(WILDCARD) || label.is_some_and(|l| rule.allow.contains(l.as_str()))
}

/// Decide one primitive call. A matching `deny` rule overrides any allow.
pub fn authorize(principal: &Principal, label: Option<&AccessLabel>, rules: &[PolicyRule]) -> Decision {
    let label_text = label.map_or("unlabeled", AccessLabel::as_str);
    let applicable: Vec<&PolicyRule> = rules.iter().filter(|r| rule_applies(r, principal)).collect();
    if let Some(r) = applicable.iter().find(|r| r.condition == RuleCondition::Deny && rule_covers(r, label)) {
        return Decision { decision: DecisionKind::Deny, reason: format!("role {} is denied {label_text}", r.role) };
    }
    if let Some(r) = applicable.iter().find(|r| r.condition == RuleCondition::Always && rule_covers(r, label)) {
        return Decision { decision: DecisionKind::Allow, reason: format!("role {} allows {label_text}", r.role) };
    }
    let reason = if label.is_none() {
        "unlabeled".to_string()
    } else {
        format!("no role of {} allows {label_text}", principal.id)
    };
    Decision { decision: DecisionKind::Deny, reason }
}

/// Strictest well-known label plus every custom label seen.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelSet {
    pub strictest: Option<AccessLabel>,
    pub custom: BTreeSet<AccessLabel>,
}

impl LabelSet {
    pub fn labels(&self) -> BTreeSet<AccessLabel> {
        self.strictest.iter().chain(self.custom.iter()).cloned().collect()
    }
}

pub fn strictest_label<'a>(labels: impl IntoIterator<Item = &'a AccessLabel>) -> LabelSet {
    let mut out = LabelSet::default();
    for label in labels {
        match label.rank() {
            Some(rank) => {
                if out.strictest.as_ref().and_then(AccessLabel::rank).is_none_or(|r| rank > r) {
                    out.strictest = Some(label.clone());
                }
            }
            None => {
                out.custom.insert(label.clone());
            }
        }
    }
    out
}
