use serde::{Deserialize, Serialize};

use crate::{Error, Result, Target};

/// Markers around the knowledge section in the bundled templates.
pub const KNOWLEDGE_OPEN: &str = "<knowledge>";
pub const KNOWLEDGE_CLOSE: &str = "</knowledge>";

pub const DEFAULT_ITEM_TEMPLATE: &str = "\
You are helping a recommender system understand an item. The reference material below was \
collected from an encyclopedia and may contain details that do not matter for recommendation.

Focus on these key factors: {factors}.
Summarize what the material says about each key factor, drop unrelated details, and add \
common-sense inferences about which audiences the item is likely to appeal to.

<knowledge>
{knowledge}
</knowledge>

Answer with one short paragraph.";

pub const DEFAULT_USER_TEMPLATE: &str = "\
You are helping a recommender system understand a user. The reference material below describes \
the items the user interacted with most recently, oldest first.
{profile}
Focus on these key factors: {factors}.
Describe the user's preferences along each key factor, using the profile when it is given and \
common-sense inference where the material is indirect.

<knowledge>
{knowledge}
</knowledge>

Answer with one short paragraph.";

/// Ordered, duplicate-free list of key factors that steer extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct KeyFactorSet(Vec<String>);

impl KeyFactorSet {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = S>) -> Result<Self> {
        let factors: Vec<String> = factors.into_iter().map(Into::into).collect();
        if factors.is_empty() {
            return Err(Error::Config("key factor set is empty".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.trim().is_empty() {
                return Err(Error::Config("key factors must be non-empty".into()));
            }
            if factors[..i].contains(f) {
                return Err(Error::Config(format!("duplicate key factor {f:?}")));
            }
        }
        Ok(KeyFactorSet(factors))
    }

    pub fn factors(&self) -> &[String] {
        &self.0
    }
}

impl Default for KeyFactorSet {
    fn default() -> Self {
        KeyFactorSet(vec!["genres".into(), "themes".into(), "awards".into()])
    }
}

impl TryFrom<Vec<String>> for KeyFactorSet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        KeyFactorSet::new(v)
    }
}

impl From<KeyFactorSet> for Vec<String> {
    fn from(k: KeyFactorSet) -> Self {
        k.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserProfile {
    pub user_id: u32,
    attributes: Vec<(String, String)>,
}

impl UserProfile {
    pub fn new(user_id: u32, attributes: Vec<(String, String)>) -> Result<Self> {
        for (i, (name, _)) in attributes.iter().enumerate() {
            if attributes[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Config(format!("duplicate profile attribute {name:?}")));
            }
        }
        Ok(UserProfile { user_id, attributes })
    }

    pub fn attributes(&self) -> &[(String, String)] {
        &self.attributes
    }

    fn render(&self) -> String {
        let mut out = String::from("\nUser profile:\n");
        for (k, v) in &self.attributes {
            out.push_str(&format!("- {k}: {v}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub target: Target,
    pub subject_id: u32,
    pub text: String,
    pub factor_set: KeyFactorSet,
}

fn required(target: Target) -> &'static [&'static str] {
    match target {
        Target::Item => &["knowledge", "factors"],
        Target::User => &["knowledge", "factors", "profile"],
    }
}

/// Fills `{knowledge}`, `{factors}` and `{profile}` in `template`.
///
/// Substitution is a single left-to-right pass, so braces inside the substituted knowledge are
/// never re-expanded. An absent profile renders as nothing.
pub fn build_prompt(
    target: Target,
    subject_id: u32,
    raw_knowledge: &str,
    profile: Option<&UserProfile>,
    factors: &KeyFactorSet,
    template: &str,
) -> Result<Prompt> {
    for name in required(target) {
        if !template.contains(&format!("{{{name}}}")) {
            return Err(Error::MissingPlaceholder(name.to_string()));
        }
    }
    let factor_text = factors.factors().join(", ");
    let profile_text = profile.map(UserProfile::render).unwrap_or_default();

    let mut text = String::with_capacity(template.len() + raw_knowledge.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        text.push_str(&rest[..open]);
        let tail = &rest[open..];
        let replaced = [
            ("{knowledge}", raw_knowledge),
            ("{factors}", factor_text.as_str()),
            ("{profile}", profile_text.as_str()),
        ]
        .into_iter()
        .find(|(ph, _)| tail.starts_with(ph));
        match replaced {
            Some((ph, value)) => {
                text.push_str(value);
                rest = &tail[ph.len()..];
            }
            None => {
                text.push('{');
                rest = &tail[1..];
            }
        }
    }
    text.push_str(rest);

    Ok(Prompt {
        target,
        subject_id,
        text,
        factor_set: factors.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn item_prompt_contains_factors() {
        let factors = KeyFactorSet::new(["genre", "theme", "awards"]).unwrap();
        let p = build_prompt(
            Target::Item,
            3,
            "A movie about toys.",
            None,
            &factors,
            DEFAULT_ITEM_TEMPLATE,
        )
        .unwrap();
        for f in ["genre", "theme", "awards"] {
            assert!(p.text.contains(f));
        }
        assert!(p.text.contains("<knowledge>\nA movie about toys.\n</knowledge>"));
    }

    #[test]
    fn user_prompt_profile_optional() {
        let factors = KeyFactorSet::default();
        let without =
            build_prompt(Target::User, 1, "docs", None, &factors, DEFAULT_USER_TEMPLATE).unwrap();
        assert!(!without.text.contains("User profile"));
        let profile = UserProfile::new(1, vec![("age".into(), "under 18".into())]).unwrap();
        let with = build_prompt(
            Target::User,
            1,
            "docs",
            Some(&profile),
            &factors,
            DEFAULT_USER_TEMPLATE,
        )
        .unwrap();
        assert!(with.text.contains("User profile:\n- age: under 18\n"));
    }

    #[test]
    fn empty_knowledge_still_valid() {
        let p = build_prompt(
            Target::Item,
            1,
            "",
            None,
            &KeyFactorSet::default(),
            DEFAULT_ITEM_TEMPLATE,
        )
        .unwrap();
        assert!(p.text.contains("<knowledge>\n\n</knowledge>"));
    }

    #[test]
    fn missing_placeholder_is_error() {
        let err = build_prompt(
            Target::User,
            1,
            "x",
            None,
            &KeyFactorSet::default(),
            "{knowledge} {factors}",
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingPlaceholder(p) if p == "profile"));
        assert!(build_prompt(Target::Item, 1, "x", None, &KeyFactorSet::default(), "{factors}").is_err());
    }

    #[test]
    fn braces_in_knowledge_not_expanded() {
        let p = build_prompt(
            Target::Item,
            1,
            "{factors} {x",
            None,
            &KeyFactorSet::new(["genres"]).unwrap(),
            "[{knowledge}] {factors} {other}",
        )
        .unwrap();
        assert_eq!(p.text, "[{factors} {x] genres {other}");
    }

    #[test]
    fn factor_set_validation() {
        assert!(KeyFactorSet::new(Vec::<String>::new()).is_err());
        assert!(KeyFactorSet::new(["a", "a"]).is_err());
        assert!(KeyFactorSet::new(["a", " "]).is_err());
        assert!(UserProfile::new(1, vec![("a".into(), "1".into()), ("a".into(), "2".into())]).is_err());
    }

    #[test]
    fn deterministic() {
        let build = || {
            build_prompt(Target::Item, 9, "text", None, &KeyFactorSet::default(), DEFAULT_ITEM_TEMPLATE)
                .unwrap()
                .text
        };
        assert_eq!(build(), build());
    }
}
