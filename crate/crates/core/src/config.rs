//! Service configuration: one TOML file, with backend credentials taken
//! from environment variables named in it.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSettings, FoodCatalog, Orchestrator, OrchestratorParts, WorkflowPolicyTable};
use crate::backends::{BackendDescriptor, BackendSet, MockSpec};
use crate::clock::SystemClock;
use crate::dri::DriReference;
use crate::engine::AdjustmentPolicy;
use crate::error::{Error, Result};
use crate::store::{Store, DEFAULT_AUDIT_DEPTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: SocketAddr,
    /// Environment variable holding the static API token. Unset or empty
    /// variable disables the check.
    pub api_token_env: Option<String>,
    pub idempotency_cache: usize,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".parse().expect("valid address"),
            api_token_env: None,
            idempotency_cache: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    pub root: PathBuf,
    pub audit_depth: usize,
}

impl Default for StoreSection {
    fn default() -> Self {
        Self {
            root: PathBuf::from("var/mealloop"),
            audit_depth: DEFAULT_AUDIT_DEPTH,
        }
    }
}

/// Optional replacements for the bundled data files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Merged reference table as written by `mealloop ingest`.
    pub reference: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub workflow_policy: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub server: ServerSection,
    pub store: StoreSection,
    pub data: DataSection,
    pub agents: AgentSettings,
    pub adjustment: AdjustmentPolicy,
    /// One entry per role. Roles left out use the deterministic mock.
    pub backends: Vec<BackendDescriptor>,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        c.adjustment.validate()?;
        if !(0.0..=1.0).contains(&c.agents.confidence_threshold) {
            return Err(Error::config("agents.confidence_threshold must be in [0,1]"));
        }
        Ok(c)
    }

    /// Loads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut c = Self::parse(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn api_token(&self) -> Option<String> {
        let var = self.server.api_token_env.as_ref()?;
        std::env::var(var).ok().filter(|t| !t.is_empty())
    }

    fn backend_set(&self) -> Result<BackendSet> {
        let mut ds = self.backends.clone();
        for role in [
            crate::backends::BackendRole::Vision,
            crate::backends::BackendRole::Dialog,
            crate::backends::BackendRole::ControllerAssist,
            crate::backends::BackendRole::FileAssist,
        ] {
            match ds.iter().filter(|d| d.role == role).count() {
                0 => ds.push(BackendDescriptor::mock(role, MockSpec::default())),
                1 => {}
                _ => return Err(Error::config(format!("backend role {role} configured twice"))),
            }
        }
        BackendSet::from_descriptors(&ds, self.base_dir.as_deref())
    }

    /// Opens the store and assembles the orchestrator.
    ///
    /// Remote backends create blocking HTTP clients, so call this outside
    /// any async runtime.
    pub fn build_orchestrator(&self) -> Result<Orchestrator> {
        let store = Arc::new(Store::open_with(self.resolve(&self.store.root), self.store.audit_depth)?);
        let reference = match &self.data.reference {
            Some(p) => DriReference::load(&self.resolve(p))?,
            None => DriReference::standard().clone(),
        };
        let catalog = match &self.data.catalog {
            Some(p) => FoodCatalog::from_file(&self.resolve(p))?,
            None => FoodCatalog::standard()?,
        };
        let policy_table = match &self.data.workflow_policy {
            Some(p) => WorkflowPolicyTable::from_file(&self.resolve(p))?,
            None => WorkflowPolicyTable::standard()?,
        };
        Ok(Orchestrator::new(OrchestratorParts {
            store,
            backends: self.backend_set()?,
            reference: Arc::new(reference),
            catalog: Arc::new(catalog),
            policy_table: Arc::new(policy_table),
            adjustment: self.adjustment,
            settings: self.agents,
            clock: Arc::new(SystemClock),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_config_parses() {
        let c = Config::parse(include_str!("../mealloop.toml")).unwrap();
        assert_eq!(c.store.audit_depth, 30);
        assert_eq!(c.adjustment, AdjustmentPolicy::default());
    }

    #[test]
    fn empty_config_is_all_defaults() {
        let c = Config::parse("").unwrap();
        assert_eq!(c.server.bind.port(), 8080);
        assert!(c.backends.is_empty());
    }

    #[test]
    fn unknown_keys_and_bad_policy_are_rejected() {
        assert!(Config::parse("[server]\nport = 1\n").is_err());
        assert!(Config::parse("[adjustment]\ngain = -1.0\n").is_err());
    }

    #[test]
    fn builds_with_mocks_and_relative_root() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        std::fs::write(&path, "[store]\nroot = \"state\"\n").unwrap();
        let c = Config::load(&path).unwrap();
        let o = c.build_orchestrator().unwrap();
        assert_eq!(o.store().root(), dir.path().join("state"));
    }

    #[test]
    fn duplicate_role_is_rejected() {
        let c = Config::parse(
            "[[backends]]\nrole = \"vision\"\nmode = \"mock\"\n[[backends]]\nrole = \"vision\"\nmode = \"mock\"\n",
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let c = Config { store: StoreSection { root: dir.path().into(), ..Default::default() }, ..c };
        assert!(matches!(c.build_orchestrator(), Err(Error::Config(_))));
    }
}
