//! Persistent memory: short-term scan dedup and filter tracking, long-term
//! cross-target learning of bypass patterns and payload success rates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::payload::{CharTransform, FilterModel};
use crate::state::{AttemptOutcome, PointKey, ScanState, VulnClass};

pub const MEMORY_SCHEMA: &str = "awe-memory-v1";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("memory file {path} is corrupt at line {line}, column {column}: {message}")]
    Corrupt { path: PathBuf, line: usize, column: usize, message: String },
    #[error("memory file {path} is not {MEMORY_SCHEMA}: found {found:?}")]
    SchemaMismatch { path: PathBuf, found: Option<String> },
}

/// Canonical string encoding of a [`FilterModel`]: two semantically identical
/// models always produce identical signatures.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FilterSignature(String);

impl FilterSignature {
    pub fn of(model: &FilterModel) -> Self {
        let mut parts: Vec<String> = Vec::new();
        // BTreeMap/BTreeSet iteration is already sorted.
        for (c, t) in &model.char_map {
            let fate = match t {
                CharTransform::Passed => "pass".to_string(),
                CharTransform::Stripped => "strip".to_string(),
                CharTransform::HtmlEncoded => "html".to_string(),
                CharTransform::UrlEncoded => "url".to_string(),
                CharTransform::EscapedBackslash => "esc".to_string(),
                CharTransform::Replaced { with } => format!("repl:{with}"),
            };
            parts.push(format!("c{:04x}={}", *c as u32, fate));
        }
        for tag in &model.blocked_tags {
            parts.push(format!("t={tag}"));
        }
        for handler in &model.blocked_handlers {
            parts.push(format!("h={handler}"));
        }
        parts.push(format!("cs={}", model.case_sensitive_tag_filter as u8));
        FilterSignature(parts.join(";"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn payload_hash(payload: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(payload);
    format!("{:x}", h.finalize())
}

/// Per-engagement memory: tried payloads and outcomes, inferred filters,
/// and agent-level progress markers. Resets between targets by default.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct ShortTermMemory {
    tried: BTreeMap<String, AttemptOutcome>,
    filter_models: BTreeMap<String, FilterModel>,
    progress_markers: BTreeMap<String, String>,
}

impl ShortTermMemory {
    fn tried_key(point: &PointKey, class: VulnClass, payload: &[u8]) -> String {
        format!("{}|{}|{}", point, class, payload_hash(payload))
    }

    pub fn record_attempt(
        &mut self,
        point: &PointKey,
        class: VulnClass,
        payload: &[u8],
        outcome: AttemptOutcome,
    ) {
        self.tried.insert(Self::tried_key(point, class, payload), outcome);
    }

    /// True iff a byte-identical payload was recorded for this point+class.
    pub fn was_attempted(&self, point: &PointKey, class: VulnClass, payload: &[u8]) -> bool {
        self.tried.contains_key(&Self::tried_key(point, class, payload))
    }

    pub fn outcome_of(
        &self,
        point: &PointKey,
        class: VulnClass,
        payload: &[u8],
    ) -> Option<AttemptOutcome> {
        self.tried.get(&Self::tried_key(point, class, payload)).copied()
    }

    /// A recorded failure suppresses the redundant attempt; verified and
    /// partial outcomes are re-tested so evidence stays fresh.
    pub fn suppressed(&self, point: &PointKey, class: VulnClass, payload: &[u8]) -> bool {
        matches!(
            self.outcome_of(point, class, payload),
            Some(AttemptOutcome::NoSignal | AttemptOutcome::Blocked)
        )
    }

    pub fn set_filter_model(&mut self, point: &PointKey, model: FilterModel) {
        self.filter_models.insert(point.to_string(), model);
    }

    pub fn filter_model(&self, point: &PointKey) -> Option<&FilterModel> {
        self.filter_models.get(&point.to_string())
    }

    pub fn set_progress(&mut self, agent_id: &str, checkpoint: &str) {
        self.progress_markers.insert(agent_id.to_string(), checkpoint.to_string());
    }

    pub fn progress(&self, agent_id: &str) -> Option<&str> {
        self.progress_markers.get(agent_id).map(String::as_str)
    }

    pub fn tried_count(&self) -> usize {
        self.tried.len()
    }

    /// Scan-end consistency check: memory covers every attempt the scan
    /// state recorded (carryover within one engagement may hold more).
    pub fn consistent_with(&self, state: &ScanState) -> bool {
        self.tried.len() >= state.attempts().len()
            && state.attempts().iter().all(|a| self.was_attempted(&a.point, a.vuln_class, &a.payload))
    }
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternStat {
    pub template: String,
    pub success_count: u64,
    pub attempt_count: u64,
}

impl PatternStat {
    /// Laplace-smoothed success ratio: (successes+1)/(attempts+2).
    pub fn smoothed_ratio(&self) -> f64 {
        (self.success_count + 1) as f64 / (self.attempt_count + 2) as f64
    }
}

/// Cross-target learning: bypass patterns per sanitization signature and
/// historical payload success rates.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTermMemory {
    bypass_patterns: BTreeMap<String, Vec<PatternStat>>,
    sanitization_signatures: BTreeMap<String, String>,
    payload_stats: BTreeMap<String, PatternStat>,
}

impl LongTermMemory {
    /// Templates recorded under `sig`, ranked by smoothed success ratio,
    /// ties broken lexicographically. Pure function of memory contents.
    pub fn lookup_bypasses(&self, sig: &FilterSignature) -> Vec<String> {
        let mut stats = match self.bypass_patterns.get(sig.as_str()) {
            Some(v) => v.clone(),
            None => return Vec::new(),
        };
        stats.sort_by(|a, b| {
            b.smoothed_ratio()
                .partial_cmp(&a.smoothed_ratio())
                .expect("ratios are finite")
                .then_with(|| a.template.cmp(&b.template))
        });
        stats.into_iter().map(|s| s.template).collect()
    }

    pub fn record_outcome(
        &mut self,
        sig: &FilterSignature,
        class: VulnClass,
        template: &str,
        success: bool,
    ) {
        let entry = self.bypass_patterns.entry(sig.as_str().to_string()).or_default();
        let stat = match entry.iter_mut().find(|s| s.template == template) {
            Some(s) => s,
            None => {
                entry.push(PatternStat { template: template.to_string(), ..Default::default() });
                entry.last_mut().expect("just pushed")
            }
        };
        stat.attempt_count += 1;
        if success {
            stat.success_count += 1;
        }

        let key = format!("{}|{}", class, template);
        let global = self
            .payload_stats
            .entry(key)
            .or_insert_with(|| PatternStat { template: template.to_string(), ..Default::default() });
        global.attempt_count += 1;
        if success {
            global.success_count += 1;
        }
    }

    /// Record a named sanitization signature (e.g. a lab filter level seen in
    /// the wild) for later reporting.
    pub fn name_signature(&mut self, name: &str, sig: &FilterSignature) {
        self.sanitization_signatures.insert(name.to_string(), sig.as_str().to_string());
    }

    pub fn stats_for(&self, sig: &FilterSignature, template: &str) -> Option<&PatternStat> {
        self.bypass_patterns.get(sig.as_str())?.iter().find(|s| s.template == template)
    }

    pub fn is_empty(&self) -> bool {
        self.bypass_patterns.is_empty() && self.payload_stats.is_empty()
    }

    /// Atomic persist: write-temp then rename.
    pub fn persist(&self, path: &Path) -> Result<(), MemoryError> {
        let mut doc = serde_json::to_value(self).expect("memory serializes");
        doc.as_object_mut()
            .expect("memory doc is an object")
            .insert("schema".into(), serde_json::Value::String(MEMORY_SCHEMA.into()));
        let tmp = path.with_extension("tmp");
        let io_err = |source| MemoryError::Io { path: path.to_path_buf(), source };
        std::fs::write(&tmp, serde_json::to_string_pretty(&doc).expect("pretty json"))
            .map_err(io_err)?;
        std::fs::rename(&tmp, path).map_err(io_err)
    }

    /// Load from disk; a missing file is an empty memory (first run), a
    /// corrupt file is an explicit error with its offset, never a partial
    /// load.
    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Ok(LongTermMemory::default())
            }
            Err(e) => return Err(MemoryError::Io { path: path.to_path_buf(), source: e }),
        };
        let doc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| MemoryError::Corrupt {
                path: path.to_path_buf(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        let schema = doc.get("schema").and_then(|v| v.as_str());
        if schema != Some(MEMORY_SCHEMA) {
            return Err(MemoryError::SchemaMismatch {
                path: path.to_path_buf(),
                found: schema.map(String::from),
            });
        }
        serde_json::from_value(doc).map_err(|e| MemoryError::Corrupt {
            path: path.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// Shared long-term store: reads concurrent with a single serialized writer,
/// optionally backed by a file.
#[derive(Debug)]
pub struct LongTermStore {
    inner: Mutex<LongTermMemory>,
    path: Option<PathBuf>,
    enabled: bool,
}

impl LongTermStore {
    pub fn in_memory(enabled: bool) -> Self {
        LongTermStore { inner: Mutex::new(LongTermMemory::default()), path: None, enabled }
    }

    pub fn open(path: &Path, enabled: bool) -> Result<Self, MemoryError> {
        Ok(LongTermStore {
            inner: Mutex::new(LongTermMemory::load(path)?),
            path: Some(path.to_path_buf()),
            enabled,
        })
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn lookup_bypasses(&self, sig: &FilterSignature) -> Vec<String> {
        if !self.enabled {
            return Vec::new();
        }
        self.inner.lock().expect("memory lock").lookup_bypasses(sig)
    }

    pub fn record_outcome(
        &self,
        sig: &FilterSignature,
        class: VulnClass,
        template: &str,
        success: bool,
    ) {
        if !self.enabled {
            return;
        }
        self.inner.lock().expect("memory lock").record_outcome(sig, class, template, success);
    }

    pub fn save(&self) -> Result<(), MemoryError> {
        if let Some(path) = &self.path {
            self.inner.lock().expect("memory lock").persist(path)?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> LongTermMemory {
        self.inner.lock().expect("memory lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Channel, Endpoint, HttpMethod};

    fn key(name: &str) -> PointKey {
        let _ = Endpoint::get(url::Url::parse("http://t/a").unwrap());
        PointKey {
            method: HttpMethod::Get,
            url: "http://t/a".into(),
            channel: Channel::Query,
            name: name.into(),
        }
    }

    #[test]
    fn was_attempted_keyed_on_point_class_payload() {
        let mut mem = ShortTermMemory::default();
        assert!(!mem.was_attempted(&key("q"), VulnClass::Xss, b"P"));
        mem.record_attempt(&key("q"), VulnClass::Xss, b"P", AttemptOutcome::NoSignal);
        assert!(mem.was_attempted(&key("q"), VulnClass::Xss, b"P"));
        assert!(!mem.was_attempted(&key("z"), VulnClass::Xss, b"P"));
        assert!(!mem.was_attempted(&key("q"), VulnClass::Ssti, b"P"));
    }

    #[test]
    fn lookup_returns_recorded_templates() {
        let mut mem = LongTermMemory::default();
        let sig = FilterSignature::of(&FilterModel::default());
        for _ in 0..3 {
            mem.record_outcome(&sig, VulnClass::Xss, "T", true);
        }
        assert_eq!(mem.lookup_bypasses(&sig), vec!["T".to_string()]);
        let other = FilterSignature("different".into());
        assert!(mem.lookup_bypasses(&other).is_empty());
    }

    #[test]
    fn laplace_ranking_with_lexicographic_ties() {
        let mut mem = LongTermMemory::default();
        let sig = FilterSignature("s".into());
        // T1: 2/2 -> (3/4)=0.75 smoothed; T2: 9/10 -> (10/12)=0.833 smoothed.
        for _ in 0..2 {
            mem.record_outcome(&sig, VulnClass::Xss, "T1", true);
        }
        for i in 0..10 {
            mem.record_outcome(&sig, VulnClass::Xss, "T2", i != 0);
        }
        assert_eq!(mem.lookup_bypasses(&sig), vec!["T2".to_string(), "T1".to_string()]);

        // Equal ratios break lexicographically.
        let sig2 = FilterSignature("s2".into());
        mem.record_outcome(&sig2, VulnClass::Xss, "B", true);
        mem.record_outcome(&sig2, VulnClass::Xss, "A", true);
        assert_eq!(mem.lookup_bypasses(&sig2), vec!["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn record_outcome_counts() {
        let mut mem = LongTermMemory::default();
        let sig = FilterSignature("s".into());
        mem.record_outcome(&sig, VulnClass::Xss, "T", true);
        assert_eq!(mem.stats_for(&sig, "T").unwrap().success_count, 1);
        assert_eq!(mem.stats_for(&sig, "T").unwrap().attempt_count, 1);
        mem.record_outcome(&sig, VulnClass::Xss, "T", true);
        mem.record_outcome(&sig, VulnClass::Xss, "T", false);
        let stat = mem.stats_for(&sig, "T").unwrap();
        assert_eq!((stat.success_count, stat.attempt_count), (2, 3));
    }

    #[test]
    fn persist_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.json");
        let mut mem = LongTermMemory::default();
        let sig = FilterSignature::of(&FilterModel::default());
        mem.record_outcome(&sig, VulnClass::Xss, "T", true);
        mem.name_signature("htmlspecialchars", &sig);
        mem.persist(&path).unwrap();
        let loaded = LongTermMemory::load(&path).unwrap();
        assert_eq!(mem, loaded);
    }

    #[test]
    fn load_missing_file_is_empty_memory() {
        let dir = tempfile::tempdir().unwrap();
        let mem = LongTermMemory::load(&dir.path().join("absent.json")).unwrap();
        assert!(mem.is_empty());
    }

    #[test]
    fn truncated_file_is_explicit_corruption_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.json");
        let mut mem = LongTermMemory::default();
        mem.record_outcome(&FilterSignature("s".into()), VulnClass::Xss, "T", true);
        mem.persist(&path).unwrap();
        let full = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();
        match LongTermMemory::load(&path) {
            Err(MemoryError::Corrupt { line, .. }) => assert!(line > 0),
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mem.json");
        std::fs::write(&path, r#"{"schema":"awe-memory-v0"}"#).unwrap();
        assert!(matches!(
            LongTermMemory::load(&path),
            Err(MemoryError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn signature_is_deterministic_and_semantic() {
        let mut m1 = FilterModel::default();
        m1.char_map.insert('<', CharTransform::HtmlEncoded);
        m1.blocked_tags.insert("script".into());
        let mut m2 = FilterModel::default();
        m2.blocked_tags.insert("script".into());
        m2.char_map.insert('<', CharTransform::HtmlEncoded);
        assert_eq!(FilterSignature::of(&m1), FilterSignature::of(&m2));
        assert_eq!(FilterSignature::of(&m1), FilterSignature::of(&m1));

        m2.case_sensitive_tag_filter = true;
        assert_ne!(FilterSignature::of(&m1), FilterSignature::of(&m2));
    }
}
