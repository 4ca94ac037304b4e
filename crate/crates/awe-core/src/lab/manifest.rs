//! Challenge manifest: what the lab serves and how each challenge behaves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::filters::FilterId;
use crate::state::VulnClass;

pub const MANIFEST_SCHEMA: &str = "awe-lab-manifest-v1";

/// Default seed for the built-in manifest; flags derive from it.
pub const DEFAULT_MANIFEST_SEED: u64 = 0xA3E_5EED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    None,
    Basic,
    Strict,
    UnexploitableControl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Persona {
    Php,
    Python,
    Node,
    Java,
}

/// Where reflected input lands in the page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedContext {
    RawHtml,
    AttrDouble,
    JsSingle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    JinjaLike,
    ErbLike,
}

/// Concrete behavior of one challenge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ChallengeKind {
    XssReflected { context: EmbedContext, filter: FilterId },
    XssStored { filter: FilterId },
    SqliError,
    SqliBoolean,
    SqliBlindTime { injectable: bool },
    Ssti { engine: EngineKind },
    Cmdi { blind: bool, sanitized: bool },
    Lfi { filter: FilterId },
    Xxe { entities_enabled: bool },
    Ssrf { allowlist: bool },
    Idor { enforce_authz: bool },
    /// Flaky page whose body changes on every fetch; a differential control.
    NoisyPage,
}

impl ChallengeKind {
    pub fn vuln_class(&self) -> VulnClass {
        match self {
            ChallengeKind::XssReflected { .. } | ChallengeKind::XssStored { .. } => VulnClass::Xss,
            ChallengeKind::SqliError => VulnClass::SqliError,
            ChallengeKind::SqliBoolean => VulnClass::SqliBoolean,
            ChallengeKind::SqliBlindTime { .. } => VulnClass::SqliBlindTime,
            ChallengeKind::Ssti { .. } => VulnClass::Ssti,
            ChallengeKind::Cmdi { .. } => VulnClass::Cmdi,
            ChallengeKind::Lfi { .. } => VulnClass::Lfi,
            ChallengeKind::Xxe { .. } => VulnClass::Xxe,
            ChallengeKind::Ssrf { .. } => VulnClass::Ssrf,
            ChallengeKind::Idor { .. } => VulnClass::Idor,
            ChallengeKind::NoisyPage => VulnClass::SqliBoolean,
        }
    }

    /// Injectable parameter names this challenge exposes.
    pub fn declared_points(&self) -> Vec<String> {
        match self {
            ChallengeKind::XssReflected { .. } => vec!["q".into()],
            ChallengeKind::XssStored { .. } => vec!["comment".into()],
            ChallengeKind::SqliError
            | ChallengeKind::SqliBoolean
            | ChallengeKind::SqliBlindTime { .. } => vec!["id".into()],
            ChallengeKind::Ssti { .. } => vec!["name".into()],
            ChallengeKind::Cmdi { .. } => vec!["host".into()],
            ChallengeKind::Lfi { .. } => vec!["file".into()],
            ChallengeKind::Xxe { .. } => vec!["item".into(), "note".into()],
            ChallengeKind::Ssrf { .. } => vec!["url".into()],
            ChallengeKind::Idor { .. } => vec!["invoice_id".into()],
            ChallengeKind::NoisyPage => vec!["id".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChallengeSpec {
    pub id: String,
    pub kind: ChallengeKind,
    pub level: Level,
    pub flag: String,
    pub secret: Option<String>,
    /// Pages that render stored content; phases 2-5 re-run on these.
    pub render_pages: Vec<String>,
    pub persona: Persona,
    pub declared_points: Vec<String>,
}

impl ChallengeSpec {
    pub fn vuln_class(&self) -> VulnClass {
        self.kind.vuln_class()
    }

    pub fn is_control(&self) -> bool {
        self.level == Level::UnexploitableControl
    }

    /// Manifest entry with flag and secret redacted.
    pub fn redacted(&self) -> serde_json::Value {
        serde_json::json!({
            "id": self.id,
            "vuln_class": self.vuln_class(),
            "kind": self.kind,
            "level": self.level,
            "flag": "<redacted>",
            "secret": self.secret.as_ref().map(|_| "<redacted>"),
            "render_pages": self.render_pages,
            "persona": self.persona,
            "declared_points": self.declared_points,
        })
    }
}

fn flag_from(rng: &mut ChaCha8Rng) -> String {
    let mut hex = String::with_capacity(16);
    for _ in 0..16 {
        hex.push(char::from_digit(rng.gen_range(0..16) as u32, 16).expect("hex digit"));
    }
    format!("FLAG{{{hex}}}")
}

fn secret_from(rng: &mut ChaCha8Rng) -> String {
    let mut hex = String::with_capacity(8);
    for _ in 0..8 {
        hex.push(char::from_digit(rng.gen_range(0..16) as u32, 16).expect("hex digit"));
    }
    hex
}

/// The default 18-challenge manifest: every agent and every reflection
/// context at desk scale, plus two unexploitable controls.
pub fn default_manifest(seed: u64) -> Vec<ChallengeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut challenges = Vec::new();
    let mut push = |id: &str,
                    kind: ChallengeKind,
                    level: Level,
                    persona: Persona,
                    secret: Option<String>,
                    render_pages: Vec<String>,
                    rng: &mut ChaCha8Rng| {
        let declared_points = kind.declared_points();
        challenges.push(ChallengeSpec {
            id: id.to_string(),
            kind,
            level,
            flag: flag_from(rng),
            secret,
            render_pages,
            persona,
            declared_points,
        });
    };

    push(
        "xss-raw-none",
        ChallengeKind::XssReflected { context: EmbedContext::RawHtml, filter: FilterId::None },
        Level::None,
        Persona::Php,
        None,
        vec![],
        &mut rng,
    );
    push(
        "xss-raw-basic",
        ChallengeKind::XssReflected {
            context: EmbedContext::RawHtml,
            filter: FilterId::StripScriptCi,
        },
        Level::Basic,
        Persona::Php,
        None,
        vec![],
        &mut rng,
    );
    push(
        "xss-attr-basic",
        ChallengeKind::XssReflected {
            context: EmbedContext::AttrDouble,
            filter: FilterId::HtmlEncodeAngle,
        },
        Level::Basic,
        Persona::Node,
        None,
        vec![],
        &mut rng,
    );
    push(
        "xss-js-none",
        ChallengeKind::XssReflected { context: EmbedContext::JsSingle, filter: FilterId::None },
        Level::None,
        Persona::Python,
        None,
        vec![],
        &mut rng,
    );
    push(
        "xss-js-basic",
        ChallengeKind::XssReflected {
            context: EmbedContext::JsSingle,
            filter: FilterId::EscapeQuotes,
        },
        Level::Basic,
        Persona::Python,
        None,
        vec![],
        &mut rng,
    );
    push(
        "xss-stored",
        ChallengeKind::XssStored { filter: FilterId::None },
        Level::None,
        Persona::Php,
        None,
        vec!["/c/xss-stored/view".into()],
        &mut rng,
    );
    push("sqli-error", ChallengeKind::SqliError, Level::Basic, Persona::Php, None, vec![], &mut rng);
    push(
        "sqli-bool",
        ChallengeKind::SqliBoolean,
        Level::Basic,
        Persona::Python,
        None,
        vec![],
        &mut rng,
    );
    let blind_secret = secret_from(&mut rng);
    push(
        "sqli-blind",
        ChallengeKind::SqliBlindTime { injectable: true },
        Level::Basic,
        Persona::Php,
        Some(blind_secret),
        vec![],
        &mut rng,
    );
    push(
        "ssti-jinja",
        ChallengeKind::Ssti { engine: EngineKind::JinjaLike },
        Level::Basic,
        Persona::Python,
        None,
        vec![],
        &mut rng,
    );
    push(
        "ssti-erb",
        ChallengeKind::Ssti { engine: EngineKind::ErbLike },
        Level::Basic,
        Persona::Node,
        None,
        vec![],
        &mut rng,
    );
    push(
        "cmdi",
        ChallengeKind::Cmdi { blind: false, sanitized: false },
        Level::Basic,
        Persona::Php,
        None,
        vec![],
        &mut rng,
    );
    push("lfi", ChallengeKind::Lfi { filter: FilterId::None }, Level::Basic, Persona::Php, None, vec![], &mut rng);
    push(
        "xxe",
        ChallengeKind::Xxe { entities_enabled: true },
        Level::Basic,
        Persona::Java,
        None,
        vec![],
        &mut rng,
    );
    push(
        "ssrf",
        ChallengeKind::Ssrf { allowlist: false },
        Level::Basic,
        Persona::Node,
        None,
        vec![],
        &mut rng,
    );
    push(
        "idor",
        ChallengeKind::Idor { enforce_authz: false },
        Level::Basic,
        Persona::Java,
        None,
        vec![],
        &mut rng,
    );
    push(
        "xss-control",
        ChallengeKind::XssReflected {
            context: EmbedContext::RawHtml,
            filter: FilterId::HtmlEncodeAll,
        },
        Level::UnexploitableControl,
        Persona::Php,
        None,
        vec![],
        &mut rng,
    );
    push(
        "timing-control",
        ChallengeKind::SqliBlindTime { injectable: false },
        Level::UnexploitableControl,
        Persona::Php,
        None,
        vec![],
        &mut rng,
    );

    challenges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::FlagPattern;

    #[test]
    fn default_manifest_has_18_challenges_16_solvable() {
        let m = default_manifest(DEFAULT_MANIFEST_SEED);
        assert_eq!(m.len(), 18);
        assert_eq!(m.iter().filter(|c| c.is_control()).count(), 2);
        let ids: std::collections::HashSet<_> = m.iter().map(|c| c.id.clone()).collect();
        assert_eq!(ids.len(), 18, "challenge ids are unique");
    }

    #[test]
    fn flags_match_core_pattern_and_are_seed_stable() {
        let pattern = FlagPattern::default();
        let a = default_manifest(42);
        let b = default_manifest(42);
        let c = default_manifest(43);
        for ch in &a {
            assert!(pattern.is_match(&ch.flag), "flag {:?} matches pattern", ch.flag);
        }
        assert_eq!(a, b);
        assert_ne!(a[0].flag, c[0].flag);
    }

    #[test]
    fn blind_challenge_has_an_8_char_secret() {
        let m = default_manifest(DEFAULT_MANIFEST_SEED);
        let blind = m.iter().find(|c| c.id == "sqli-blind").unwrap();
        assert_eq!(blind.secret.as_ref().unwrap().len(), 8);
    }
}
