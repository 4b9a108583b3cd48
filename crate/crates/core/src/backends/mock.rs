use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{require_role, AnalyzedItem, BackendDescriptor, BackendRole, MealAnalysis, ModelBackend, PromptContext};
use crate::domain::{FieldSet, NutrientSchema, NutrientVector};
use crate::error::{Error, Result};

const STANDARD_FIXTURE: &str = include_str!("../../data/mock_vision.json");

/// Selects fields by name or by the named sets `all`, `core`, `micronutrients`.
pub type FieldSelector = BTreeMap<String, f64>;

fn resolve_selector(sel: &FieldSelector, schema: &NutrientSchema, what: &str) -> Result<Vec<f64>> {
    let mut out = vec![0.0; schema.len()];
    // Sets first, then individual fields, so a field entry overrides its set.
    for set_name in ["all", "core", "micronutrients"] {
        if let Some(&v) = sel.get(set_name) {
            let set = match set_name {
                "all" => FieldSet::Full,
                "core" => FieldSet::Core,
                _ => FieldSet::Micronutrients,
            };
            for i in schema.subset(set) {
                out[i] = v;
            }
        }
    }
    for (k, &v) in sel {
        if matches!(k.as_str(), "all" | "core" | "micronutrients") {
            continue;
        }
        let i = schema
            .index_of(k)
            .ok_or_else(|| Error::config(format!("{what}: unknown field or set {k:?}")))?;
        out[i] = v;
    }
    Ok(out)
}

/// Mock configuration. Everything the mock returns is a function of the
/// fixture, this spec and the call inputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockSpec {
    /// Fixture document; the bundled one when absent.
    #[serde(default)]
    pub fixture: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Relative noise amplitude `a`: values are scaled by `1 + U(-a, a)`.
    #[serde(default)]
    pub noise: FieldSelector,
    /// Probability that a field is reported missing.
    #[serde(default)]
    pub mask: FieldSelector,
    /// Artificial latency added to every call.
    #[serde(default)]
    pub delay_ms: u64,
    /// The first `fail_calls` calls fail with a retriable transport error.
    #[serde(default)]
    pub fail_calls: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisionEntry {
    pub items: Vec<AnalyzedItem>,
    pub nutrients: NutrientVector,
    pub confidence: f64,
    #[serde(default)]
    pub reference_object: Option<String>,
}

pub type TextEntry = VisionEntry;

#[derive(Debug, Deserialize, Serialize)]
struct FixtureDoc {
    version: u32,
    images: BTreeMap<String, VisionEntry>,
    #[serde(default)]
    texts: BTreeMap<String, TextEntry>,
}

/// Ground-truth analyses keyed by image reference, plus text-estimation
/// entries keyed by a keyword.
///
/// An image may also be referenced by the SHA-256 hex digest of its key's
/// UTF-8 bytes, which is what the store assigns when those bytes are uploaded
/// as a placeholder image.
#[derive(Debug, Clone)]
pub struct MockVisionFixture {
    images: BTreeMap<String, VisionEntry>,
    texts: BTreeMap<String, TextEntry>,
    aliases: HashMap<String, String>,
}

impl MockVisionFixture {
    pub fn standard() -> Result<Self> {
        Self::parse(STANDARD_FIXTURE)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("mock fixture {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: FixtureDoc = serde_json::from_str(text)?;
        if doc.version != 1 {
            return Err(Error::config(format!("unsupported fixture version {}", doc.version)));
        }
        let mut f = Self {
            images: BTreeMap::new(),
            texts: doc.texts,
            aliases: HashMap::new(),
        };
        for (k, v) in doc.images {
            f.insert_image(&k, v)?;
        }
        for (k, v) in &f.texts {
            if !(0.0..=1.0).contains(&v.confidence) {
                return Err(Error::config(format!("text entry {k}: confidence outside [0,1]")));
            }
        }
        Ok(f)
    }

    pub fn insert_image(&mut self, key: &str, entry: VisionEntry) -> Result<()> {
        if !(0.0..=1.0).contains(&entry.confidence) {
            return Err(Error::config(format!("image {key}: confidence outside [0,1]")));
        }
        self.aliases.insert(placeholder_digest(key), key.to_string());
        self.images.insert(key.to_string(), entry);
        Ok(())
    }

    pub fn image_keys(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn image(&self, image_ref: &str) -> Option<(&str, &VisionEntry)> {
        let key = if self.images.contains_key(image_ref) {
            image_ref
        } else {
            self.aliases.get(image_ref)?.as_str()
        };
        self.images.get_key_value(key).map(|(k, v)| (k.as_str(), v))
    }

    /// Longest keyword contained in `text` (case-insensitive).
    pub fn text(&self, text: &str) -> Option<(&str, &TextEntry)> {
        let lower = text.to_lowercase();
        let mut keys: Vec<&String> = self.texts.keys().collect();
        keys.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        keys.into_iter()
            .find(|k| lower.contains(k.as_str()))
            .map(|k| (k.as_str(), &self.texts[k]))
    }
}

/// SHA-256 hex digest of a fixture key, the blob id of its placeholder bytes.
pub fn placeholder_digest(key: &str) -> String {
    hex::encode(Sha256::digest(key.as_bytes()))
}

#[derive(Debug)]
pub struct MockBackend {
    descriptor: BackendDescriptor,
    spec: MockSpec,
    fixture: MockVisionFixture,
    noise: Vec<f64>,
    mask: Vec<f64>,
    failures_left: AtomicU32,
    calls: AtomicU64,
}

impl MockBackend {
    pub fn new(descriptor: BackendDescriptor, fixture: MockVisionFixture) -> Result<Self> {
        let super::BackendConfig::Mock(spec) = &descriptor.config else {
            return Err(Error::config("MockBackend needs a mock descriptor"));
        };
        let spec = spec.clone();
        let schema = NutrientSchema::standard();
        let noise = resolve_selector(&spec.noise, &schema, "noise")?;
        let mask = resolve_selector(&spec.mask, &schema, "mask")?;
        if noise.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::config("noise amplitudes must be >= 0"));
        }
        if mask.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::config("mask probabilities must be in [0,1]"));
        }
        Ok(Self {
            failures_left: AtomicU32::new(spec.fail_calls),
            calls: AtomicU64::new(0),
            descriptor,
            spec,
            fixture,
            noise,
            mask,
        })
    }

    pub fn fixture(&self) -> &MockVisionFixture {
        &self.fixture
    }

    /// Backend calls made so far, failed ones included.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Total artificial delay injected so far.
    pub fn injected_delay(&self) -> Duration {
        Duration::from_millis(self.spec.delay_ms.saturating_mul(self.calls()))
    }

    fn before_call(&self) -> Result<()> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self.spec.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.spec.delay_ms));
        }
        let took = self
            .failures_left
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if took {
            return Err(Error::Transport {
                message: format!("mock {} backend unavailable", self.descriptor.role),
                retriable: true,
            });
        }
        Ok(())
    }

    fn field_rng(&self, key: &str, field: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.spec.seed.to_le_bytes());
        h.update(key.as_bytes());
        h.update([0u8]);
        h.update(field.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    /// Applies the seeded per-field mask and multiplicative noise.
    fn perturb(&self, key: &str, truth: &NutrientVector) -> Result<NutrientVector> {
        let schema = truth.schema();
        let mut out = NutrientVector::empty(schema);
        for (i, v) in truth.iter_present() {
            let mut rng = self.field_rng(key, &schema.field(i).name);
            let drop: f64 = rng.random();
            if drop < self.mask[i] {
                continue;
            }
            let a = self.noise[i];
            let u = if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
            out.set(i, (v * (1.0 + u)).max(0.0))?;
        }
        Ok(out)
    }

    fn analysis(&self, key: &str, e: &VisionEntry, ctx: &PromptContext) -> Result<MealAnalysis> {
        Ok(MealAnalysis {
            items: e.items.clone(),
            nutrients: self.perturb(key, &e.nutrients)?,
            confidence: e.confidence,
            used_reference_object: e.reference_object.is_some() || ctx.scale_object.is_some(),
        })
    }
}

#[derive(Deserialize)]
struct RankCandidate {
    id: String,
    score: f64,
}

impl ModelBackend for MockBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn analyze_image(&self, image_ref: &str, ctx: &PromptContext) -> Result<MealAnalysis> {
        require_role(&self.descriptor, &[BackendRole::Vision], "image analysis")?;
        self.before_call()?;
        let (key, e) = self
            .fixture
            .image(image_ref)
            .ok_or_else(|| Error::FixtureMiss(image_ref.to_string()))?;
        self.analysis(key, e, ctx)
    }

    fn analyze_text(&self, text: &str, ctx: &PromptContext) -> Result<MealAnalysis> {
        require_role(&self.descriptor, &[BackendRole::Vision], "text analysis")?;
        if text.trim().is_empty() {
            return Err(Error::contract("text analysis needs non-empty text"));
        }
        self.before_call()?;
        let (key, e) = self
            .fixture
            .text(text)
            .ok_or_else(|| Error::FixtureMiss(text.to_string()))?;
        self.analysis(&format!("text:{key}"), e, ctx)
    }

    /// Supported tasks: `rank` (candidates by score, ties by id), `classify`
    /// (always `general_question`) and `answer` (echoes supplied facts).
    fn complete_text(&self, prompt: &str) -> Result<String> {
        require_role(
            &self.descriptor,
            &[BackendRole::Dialog, BackendRole::ControllerAssist, BackendRole::FileAssist],
            "text completion",
        )?;
        if prompt.trim().is_empty() {
            return Err(Error::contract("empty prompt"));
        }
        self.before_call()?;
        let doc: serde_json::Value =
            serde_json::from_str(prompt).map_err(|e| Error::contract(format!("prompt is not JSON: {e}")))?;
        let task = doc.get("task").and_then(|t| t.as_str()).unwrap_or("");
        let reply = match task {
            "rank" => {
                let mut c: Vec<RankCandidate> = serde_json::from_value(
                    doc.get("candidates").cloned().unwrap_or_default(),
                )
                .map_err(|e| Error::contract(format!("rank prompt: {e}")))?;
                c.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
                serde_json::json!({ "ranking": c.into_iter().map(|c| c.id).collect::<Vec<_>>() })
            }
            "classify" => serde_json::json!({ "class": "general_question" }),
            "answer" => {
                let facts: Vec<String> = doc
                    .get("facts")
                    .and_then(|f| serde_json::from_value(f.clone()).ok())
                    .unwrap_or_default();
                let answer = if facts.is_empty() {
                    "I can help with meal logging, your daily plan and next-meal suggestions.".to_string()
                } else {
                    facts.join(" ")
                };
                serde_json::json!({ "answer": answer })
            }
            other => return Err(Error::contract(format!("mock backend has no task {other:?}"))),
        };
        Ok(reply.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vision(spec: MockSpec) -> MockBackend {
        MockBackend::new(
            BackendDescriptor::mock(BackendRole::Vision, spec),
            MockVisionFixture::standard().unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_noise_returns_fixture_truth() {
        let b = vision(MockSpec::default());
        let a = b.analyze_image("snap_001.jpg", &PromptContext::default()).unwrap();
        let (_, truth) = b.fixture().image("snap_001.jpg").unwrap();
        assert_eq!(a.nutrients, truth.nutrients);
        assert_eq!(a.nutrients.present_count(), 40);
        assert_eq!(a.confidence, 0.95);
    }

    #[test]
    fn placeholder_digest_resolves() {
        let b = vision(MockSpec::default());
        let by_name = b.analyze_image("snap_002.jpg", &PromptContext::default()).unwrap();
        let by_hash = b
            .analyze_image(&placeholder_digest("snap_002.jpg"), &PromptContext::default())
            .unwrap();
        assert_eq!(by_name, by_hash);
    }

    #[test]
    fn unknown_image_is_fixture_miss() {
        let b = vision(MockSpec::default());
        assert!(matches!(
            b.analyze_image("nope.jpg", &PromptContext::default()),
            Err(Error::FixtureMiss(_))
        ));
    }

    #[test]
    fn noise_and_mask_are_deterministic() {
        let spec = MockSpec {
            seed: 42,
            noise: [("all".to_string(), 0.2)].into(),
            mask: [("micronutrients".to_string(), 0.39)].into(),
            ..Default::default()
        };
        let a = vision(spec.clone()).analyze_image("snap_003.jpg", &PromptContext::default()).unwrap();
        let b = vision(spec).analyze_image("snap_003.jpg", &PromptContext::default()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let plain = vision(MockSpec::default());
        let truth = &plain.fixture().image("snap_003.jpg").unwrap().1.nutrients;
        for (i, v) in a.nutrients.iter_present() {
            let t = truth.get(i).unwrap();
            assert!((v - t).abs() <= 0.2 * t + 1e-9);
        }
        // core fields are never masked by a micronutrient-only spec
        for i in NutrientSchema::standard().core_indices() {
            assert!(a.nutrients.is_present(i));
        }
    }

    #[test]
    fn field_override_beats_set() {
        let s = NutrientSchema::standard();
        let sel: FieldSelector = [("all".to_string(), 0.5), ("energy".to_string(), 0.0)].into();
        let v = resolve_selector(&sel, &s, "t").unwrap();
        assert_eq!(v[s.index_of("energy").unwrap()], 0.0);
        assert_eq!(v[s.index_of("iron").unwrap()], 0.5);
        let bad: FieldSelector = [("moonstone".to_string(), 0.1)].into();
        assert!(resolve_selector(&bad, &s, "t").is_err());
    }

    #[test]
    fn text_fixture_lookup() {
        let b = vision(MockSpec::default());
        let a = b.analyze_text("I had a banana", &PromptContext::default()).unwrap();
        assert_eq!(a.items[0].food, "banana");
        assert!(matches!(
            b.analyze_text("something unknown", &PromptContext::default()),
            Err(Error::FixtureMiss(_))
        ));
    }

    #[test]
    fn role_and_prompt_contracts() {
        let v = vision(MockSpec::default());
        assert!(matches!(v.complete_text("{}"), Err(Error::Contract(_))));
        let d = MockBackend::new(
            BackendDescriptor::mock(BackendRole::Dialog, MockSpec::default()),
            MockVisionFixture::standard().unwrap(),
        )
        .unwrap();
        assert!(matches!(d.complete_text("  "), Err(Error::Contract(_))));
        assert!(matches!(
            d.analyze_image("snap_001.jpg", &PromptContext::default()),
            Err(Error::Contract(_))
        ));
        let prompt = r#"{"task":"rank","candidates":[{"id":"b","score":1},{"id":"a","score":1},{"id":"c","score":2}]}"#;
        let one = d.complete_text(prompt).unwrap();
        assert_eq!(one, d.complete_text(prompt).unwrap());
        assert_eq!(one, r#"{"ranking":["c","a","b"]}"#);
    }

    #[test]
    fn injected_failures_then_recovery() {
        let b = vision(MockSpec { fail_calls: 1, ..Default::default() });
        let err = b.analyze_image("snap_001.jpg", &PromptContext::default()).unwrap_err();
        assert!(err.is_retriable());
        assert!(b.analyze_image("snap_001.jpg", &PromptContext::default()).is_ok());
    }
}
